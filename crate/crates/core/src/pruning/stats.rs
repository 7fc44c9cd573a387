use std::io::Write;

use super::PruningState;
use crate::error::Result;
use crate::models::Model;
use crate::tensor::Real;

#[derive(Clone, Debug, PartialEq)]
pub struct LayerSparsity {
    /// `<module class>_<parameter name>_<module index>`
    pub key: String,
    pub total_weights: usize,
    pub pruned_weights: usize,
    pub sparsity: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SparsityReport {
    pub layers: Vec<LayerSparsity>,
    pub total_weights: usize,
    pub pruned_weights: usize,
    pub sparsity: f64,
}

impl SparsityReport {
    pub const CSV_HEADER: &'static str = "layer_key,total_weights,pruned_weights,sparsity";

    /// Writes one row per layer followed by a `global` row.
    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "{}", Self::CSV_HEADER)?;
        for l in &self.layers {
            writeln!(
                w,
                "{},{},{},{:.6}",
                l.key, l.total_weights, l.pruned_weights, l.sparsity
            )?;
        }
        writeln!(
            w,
            "global,{},{},{:.6}",
            self.total_weights, self.pruned_weights, self.sparsity
        )?;
        Ok(())
    }
}

fn ratio(pruned: usize, total: usize) -> f64 {
    if total == 0 {
        0.0
    } else {
        pruned as f64 / total as f64
    }
}

pub fn sparsity_stats<T: Real>(state: &PruningState, model: &Model<T>) -> Result<SparsityReport> {
    state.check(model)?;
    let layers: Vec<LayerSparsity> = state
        .masks()
        .iter()
        .map(|m| {
            let total = m.bits.len();
            let pruned = m.pruned();
            LayerSparsity {
                key: format!("{}_{}_{}", m.module_class, m.name, m.module_index),
                total_weights: total,
                pruned_weights: pruned,
                sparsity: ratio(pruned, total),
            }
        })
        .collect();
    let total = layers.iter().map(|l| l.total_weights).sum();
    let pruned = layers.iter().map(|l| l.pruned_weights).sum();
    Ok(SparsityReport {
        layers,
        total_weights: total,
        pruned_weights: pruned,
        sparsity: ratio(pruned, total),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::{build_model, ModelConfig, ModelKind};
    use crate::pruning::{init_masks, ScheduleConfig};

    #[test]
    fn fresh_state_reports_zero() {
        let m = build_model::<f32>(&ModelConfig::new(ModelKind::Lstm, 2, 3), 0).unwrap();
        let s = init_masks(&m, ScheduleConfig::default()).unwrap();
        let r = sparsity_stats(&s, &m).unwrap();
        assert!(r.layers.iter().all(|l| l.sparsity == 0.0));
        assert_eq!(r.sparsity, 0.0);
        assert_eq!(r.layers[0].key, "LSTM_weight_hh_0");
        assert_eq!(r.layers[2].key, "Linear_weight_1");
    }

    #[test]
    fn counts_and_global_aggregate() {
        let mut cfg = ModelConfig::new(ModelKind::Rnn, 1, 2);
        cfg.hidden_size = 10;
        let m = build_model::<f32>(&cfg, 0).unwrap();
        let mut s = init_masks(&m, ScheduleConfig::default()).unwrap();
        // weight_ih is 10x1
        let ih = s.masks.iter().position(|k| k.name == "weight_ih").unwrap();
        for b in &mut s.masks[ih].bits[..3] {
            *b = 0;
        }
        let r = sparsity_stats(&s, &m).unwrap();
        let l = r.layers.iter().find(|l| l.key == "RNN_weight_ih_0").unwrap();
        assert_eq!((l.total_weights, l.pruned_weights), (10, 3));
        assert!((l.sparsity - 0.3).abs() < 1e-15);
        assert_eq!(r.pruned_weights, r.layers.iter().map(|l| l.pruned_weights).sum::<usize>());
        assert_eq!(r.total_weights, 10 + 100 + 10);

        let mut buf = Vec::new();
        r.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with("layer_key,total_weights,pruned_weights,sparsity\n"));
        assert!(text.contains("RNN_weight_ih_0,10,3,0.300000\n"));
        assert!(text.ends_with("global,120,3,0.025000\n"));
    }
}
