use super::tensor::SignalTensor;
use crate::error::{Error, Result};

/// Mean squared error over all elements and its gradient `2 (pred - target) / N`.
pub fn mse_loss(pred: &SignalTensor, target: &SignalTensor) -> Result<(f64, SignalTensor)> {
    if pred.shape() != target.shape() {
        return Err(Error::Shape(format!(
            "prediction {:?} vs target {:?}",
            pred.shape(),
            target.shape()
        )));
    }
    let n = pred.data().len() as f64;
    let mut loss = 0.0;
    let grad: Vec<f64> = pred
        .data()
        .iter()
        .zip(target.data())
        .map(|(p, t)| {
            let d = p - t;
            loss += d * d;
            2.0 * d / n
        })
        .collect();
    let (c, t) = pred.shape();
    Ok((loss / n, SignalTensor::new(c, t, grad)?))
}

/// Loss only, for evaluation loops.
pub fn mse(pred: &[f64], target: &[f64]) -> f64 {
    pred.iter().zip(target).map(|(p, t)| (p - t) * (p - t)).sum::<f64>() / pred.len().max(1) as f64
}
