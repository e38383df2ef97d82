//! Finite-difference gradient oracle shared by the gradient and acceptance tests.

use lacuna_core::masking::MaskedSample;
use lacuna_core::model::{Activation, MaskedBatch, Model, ModelConfig};

pub fn tiny_config(activation: Activation) -> ModelConfig {
    ModelConfig {
        vocab_size: 12,
        embedding_dim: 4,
        hidden_dim: 5,
        projection_dim: 3,
        layers: 2,
        bidirectional: true,
        projection_activation: activation,
    }
}

pub fn batch() -> MaskedBatch {
    // Two sequences of length 6 and 4 so that padding is exercised.
    let a = MaskedSample {
        input_ids: vec![3, 2, 5, 11, 2, 7],
        target_ids: vec![3, 4, 5, 11, 9, 7],
        mask_positions: vec![1, 4, 5],
        epoch_tag: 0,
    };
    let b = MaskedSample {
        input_ids: vec![8, 10, 2, 6],
        target_ids: vec![8, 10, 3, 6],
        mask_positions: vec![0, 2],
        epoch_tag: 0,
    };
    MaskedBatch::new(&[&a, &b]).unwrap()
}

pub const H: f64 = 1e-5;
/// Central differences carry roughly `eps * |loss| / h ~ 3e-11` of rounding
/// noise, so relative error is measured against at least 1e-6.
pub const FLOOR: f64 = 1e-6;

/// Largest relative error over every parameter element.
pub fn max_relative_error(model: &Model<f64>, mb: &MaskedBatch) -> (f64, String) {
    let (_, grad) = model.loss_and_grad(mb).unwrap();
    let analytic: Vec<(String, Vec<f64>)> = grad
        .tensors()
        .into_iter()
        .map(|(n, t)| (n, t.iter().copied().collect()))
        .collect();
    let mut probe = model.clone();
    let mut worst = (0.0f64, String::new());
    for (k, (name, values)) in analytic.iter().enumerate() {
        for (i, &a) in values.iter().enumerate() {
            let original = {
                let mut ts = probe.params.tensors_mut();
                let x = ts[k].1.as_slice_mut().unwrap();
                let v = x[i];
                x[i] = v + H;
                v
            };
            let plus = probe.loss(mb).unwrap();
            probe.params.tensors_mut()[k].1.as_slice_mut().unwrap()[i] = original - H;
            let minus = probe.loss(mb).unwrap();
            probe.params.tensors_mut()[k].1.as_slice_mut().unwrap()[i] = original;
            let numeric = (plus - minus) / (2.0 * H);
            let rel = (a - numeric).abs() / a.abs().max(numeric.abs()).max(FLOOR);
            if rel > worst.0 {
                worst = (
                    rel,
                    format!("{name}[{i}]: analytic {a:e}, numeric {numeric:e}"),
                );
            }
        }
    }
    worst
}
