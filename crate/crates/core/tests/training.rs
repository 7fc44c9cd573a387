use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use synaptic_core::data::{CsvOptions, DatasetSpec};
use synaptic_core::experiment::{run_grid, run_trial, ClockMode, ExperimentConfig, MaeScale, TrialStatus};
use synaptic_core::{build_model, Graph, Method, ModelConfig, ModelKind, Tensor};

fn normal(rng: &mut ChaCha8Rng, shape: Vec<usize>) -> Tensor<f64> {
    let n = shape.iter().product();
    Tensor::new(shape, (0..n).map(|_| rng.sample(StandardNormal)).collect()).unwrap()
}

#[test]
fn every_prunable_parameter_receives_gradient() {
    let mut tst = ModelConfig::new(ModelKind::PatchTst, 2, 8);
    tst.hidden_size = 8;
    tst.heads = 2;
    for cfg in [
        ModelConfig::new(ModelKind::Rnn, 2, 5),
        ModelConfig::new(ModelKind::Lstm, 2, 5),
        tst,
    ] {
        let mut model = build_model::<f64>(&cfg, 3).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        model.params_mut().zero_grad();
        for _ in 0..10 {
            let x = normal(&mut rng, vec![4, cfg.seq_len, 2]);
            let y = normal(&mut rng, vec![4, 1]);
            let mut g = Graph::new();
            let p = model.forward(&mut g, &x, &mut rng, None).unwrap();
            let t = g.constant(y).unwrap();
            let loss = g.sq_error_loss(p, t).unwrap();
            g.backward(loss).unwrap();
            model.params_mut().collect_grads(&g);
        }
        for id in model.prunable_ids() {
            let p = model.params().get(id);
            let grad = p.grad.as_ref().unwrap();
            assert!(grad.iter().any(|&v| v != 0.0), "{:?} {} has zero gradient", cfg.kind, p.name);
        }
    }
}

fn csv_config(dir: &std::path::Path) -> ExperimentConfig {
    let path = dir.join("series.csv");
    let mut text = String::from("timestamp,load,temp,target\n");
    for t in 0..300 {
        let tf = t as f64;
        text.push_str(&format!(
            "2024-01-01T{:02}:00,{:.4},{:.4},{:.4}\n",
            t % 24,
            (tf / 10.0).sin() * 50.0 + 100.0,
            (tf / 7.0).cos() * 5.0 + 20.0,
            ((tf - 1.0) / 10.0).sin() * 40.0 + 300.0
        ));
    }
    std::fs::write(&path, text).unwrap();
    let mut c = ExperimentConfig::default();
    c.dataset = DatasetSpec::Csv { path, options: CsvOptions::new("target") };
    c.model.kind = ModelKind::Lstm;
    c.model.hidden_size = 8;
    c.methods = vec![Method::None, Method::McDropout];
    c.seq_lens = vec![4];
    c.trials = 2;
    c.epochs = 3;
    c.mc_samples = 4;
    c.clock = ClockMode::Modeled;
    c.output_dir = dir.join("out");
    c
}

#[test]
fn csv_dataset_runs_end_to_end() {
    let dir = tempfile::tempdir().unwrap();
    let c = csv_config(dir.path());
    let run = run_grid(&c).unwrap();
    assert_eq!(run.table.len(), 4);
    assert!(run.table.rows.iter().all(|r| r.status == TrialStatus::Ok && r.dataset == "series"));
}

#[test]
fn raw_scale_mae_is_scaled_mae_times_target_std() {
    let dir = tempfile::tempdir().unwrap();
    let mut c = csv_config(dir.path());
    let scaled = run_trial(&c, Method::None, 4, 0).unwrap().row.mae.unwrap();
    c.mae_scale = MaeScale::Raw;
    let raw = run_trial(&c, Method::None, 4, 0).unwrap().row.mae.unwrap();
    // the target column spans roughly ±40, so raw error is much larger
    assert!(raw > 10.0 * scaled);
}

#[test]
fn patchtst_trial_with_pruning() {
    let mut c = ExperimentConfig::default();
    c.model.kind = ModelKind::PatchTst;
    c.model.hidden_size = 8;
    c.model.heads = 2;
    c.epochs = 3;
    c.schedule.t_warmup = 1;
    c.schedule.t_total = 3;
    c.clock = ClockMode::Modeled;
    if let DatasetSpec::Synthetic { length, .. } = &mut c.dataset {
        *length = 300;
    }
    let r = run_trial(&c, Method::SynapticPruning, 8, 0).unwrap();
    let rep = r.sparsity.unwrap();
    assert_eq!(rep.pruned_weights, (0.7 * rep.total_weights as f64).floor() as usize);
    assert!(rep.layers.iter().any(|l| l.key.starts_with("MultiheadAttention_")));
}
