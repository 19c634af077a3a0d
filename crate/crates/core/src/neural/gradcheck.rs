use super::loss::mse_loss;
use super::model::FcnModel;
use super::tensor::SignalTensor;
use crate::error::{Error, Result};

/// Analytic MSE loss gradients for `model` on one `(x, target)` pair.
pub fn loss_and_grads(model: &FcnModel, x: &SignalTensor, target: &SignalTensor) -> Result<(f64, Vec<f64>)> {
    let (pred, caches) = model.forward_train(x)?;
    let (loss, grad) = mse_loss(&pred, target)?;
    let (_, grads) = model.backward(&grad, &caches)?;
    Ok((loss, grads.flat()))
}

fn loss_only(model: &FcnModel, x: &SignalTensor, target: &SignalTensor) -> Result<f64> {
    Ok(mse_loss(&model.forward(x)?, target)?.0)
}

/// Largest relative disagreement, `|a - n| / max(|a|, |n|, 1e-8)`, between
/// the analytic gradient and a central difference of step `eps` over every
/// parameter.
pub fn grad_check(model: &FcnModel, x: &SignalTensor, target: &SignalTensor, eps: f64) -> Result<f64> {
    if !(eps > 0.0 && eps.is_finite()) {
        return Err(Error::Config(format!("finite-difference step must be positive, got {eps}")));
    }
    let (_, analytic) = loss_and_grads(model, x, target)?;
    let mut probe = model.clone();
    let mut worst = 0.0f64;
    for (idx, &a) in analytic.iter().enumerate() {
        let original = *probe.params_mut().nth(idx).expect("index in range");
        *probe.params_mut().nth(idx).unwrap() = original + eps;
        let up = loss_only(&probe, x, target)?;
        *probe.params_mut().nth(idx).unwrap() = original - eps;
        let down = loss_only(&probe, x, target)?;
        *probe.params_mut().nth(idx).unwrap() = original;
        let numeric = (up - down) / (2.0 * eps);
        let rel = (a - numeric).abs() / a.abs().max(numeric.abs()).max(1e-8);
        worst = worst.max(rel);
    }
    Ok(worst)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::neural::layer::Activation::*;
    use crate::rng;
    use rand::Rng;

    #[test]
    fn random_three_layer_model() {
        let mut m = FcnModel::from_spec("toy", &[(1, 3, 5, LeakyRelu), (3, 2, 3, Tanh), (2, 1, 3, Tanh)]).unwrap();
        let mut r = rng::stream(11, "gc");
        m.init_random(&mut r);
        m.params_mut().for_each(|p| *p += 0.05 * r.random_range(-1.0..1.0));
        let x = SignalTensor::from_signal(&(0..64).map(|_| r.random_range(-1.0..1.0)).collect::<Vec<_>>()).unwrap();
        let t = SignalTensor::from_signal(&(0..64).map(|_| r.random_range(-0.5..0.5)).collect::<Vec<_>>()).unwrap();
        assert!(grad_check(&m, &x, &t, 1e-6).unwrap() < 1e-5);
    }

    #[test]
    fn single_parameter_linear_model() {
        // The loss is quadratic in (w, b), so central differences are exact
        // up to rounding.
        let mut m = FcnModel::from_spec("lin", &[(1, 1, 1, Linear)]).unwrap();
        m.layers[0].weights[0] = 0.7;
        let x = SignalTensor::from_signal(&[0.5, -1.0, 0.25]).unwrap();
        let t = SignalTensor::from_signal(&[0.1, 0.2, 0.3]).unwrap();
        assert!(grad_check(&m, &x, &t, 1e-6).unwrap() < 1e-9);
    }

    #[test]
    fn zero_step_is_rejected() {
        let m = FcnModel::from_spec("lin", &[(1, 1, 1, Linear)]).unwrap();
        let x = SignalTensor::from_signal(&[1.0]).unwrap();
        assert!(matches!(grad_check(&m, &x, &x, 0.0), Err(Error::Config(_))));
    }
}
