//! Exact pass-through parameter settings for leaky-ReLU/tanh stacks.
//!
//! Hidden channels 0 and 1 of every layer carry `lrelu(s)` and `lrelu(-s)`
//! of input channel 0 through centered delta kernels, each layer recovering
//! `s = (h0 - h1) / (1 + alpha)` from the previous pair, so the whole model
//! computes `tanh(s)`.

use super::arch::initialized;
use crate::error::{Error, Result};
use crate::neural::{Activation, ConvLayer, FcnModel, LEAKY_SLOPE};

fn check_layout(model: &FcnModel) -> Result<()> {
    let n = model.layers.len();
    let hidden_ok = model.layers[..n - 1]
        .iter()
        .all(|l| l.activation == Activation::LeakyRelu && l.out_channels >= 2);
    let last = &model.layers[n - 1];
    if n >= 2 && hidden_ok && last.out_channels == 1 && last.activation == Activation::Tanh {
        Ok(())
    } else {
        Err(Error::Config(format!(
            "{} is not a leaky-ReLU stack with >= 2 hidden channels and a single tanh output",
            model.name
        )))
    }
}

/// Overwrite every weight into output channels `outs` with zero.
fn clear_outputs(layer: &mut ConvLayer, outs: std::ops::Range<usize>) {
    let per_out = layer.in_channels * layer.kernel_size;
    for o in outs {
        layer.weights[o * per_out..(o + 1) * per_out].fill(0.0);
        layer.biases[o] = 0.0;
    }
}

fn set_tap(layer: &mut ConvLayer, o: usize, i: usize, value: f64) {
    let k = layer.kernel_size;
    layer.weights[(o * layer.in_channels + i) * k + k / 2] = value;
}

/// Rewrite the pass-through channels in place. Other hidden channels keep
/// their weights but no longer feed the pass-through path or the output.
pub fn warm_start_passthrough(model: &mut FcnModel) -> Result<()> {
    check_layout(model)?;
    let n = model.layers.len();
    let inv = 1.0 / (1.0 + LEAKY_SLOPE);
    for (l, layer) in model.layers.iter_mut().enumerate() {
        if l == n - 1 {
            clear_outputs(layer, 0..1);
            set_tap(layer, 0, 0, inv);
            set_tap(layer, 0, 1, -inv);
        } else if l == 0 {
            clear_outputs(layer, 0..2);
            set_tap(layer, 0, 0, 1.0);
            set_tap(layer, 1, 0, -1.0);
        } else {
            clear_outputs(layer, 0..2);
            set_tap(layer, 0, 0, inv);
            set_tap(layer, 0, 1, -inv);
            set_tap(layer, 1, 0, -inv);
            set_tap(layer, 1, 1, inv);
        }
    }
    Ok(())
}

/// The exact pass-through model: every parameter outside the pass-through
/// path is zero.
pub fn passthrough(mut model: FcnModel) -> Result<FcnModel> {
    check_layout(&model)?;
    for layer in &mut model.layers {
        layer.weights.fill(0.0);
        layer.biases.fill(0.0);
    }
    warm_start_passthrough(&mut model)?;
    Ok(model)
}

/// Seeded random parameters with the pass-through path written over them.
pub fn warm_started(model: FcnModel, seed: u64) -> Result<FcnModel> {
    let mut model = initialized(model, seed);
    warm_start_passthrough(&mut model)?;
    Ok(model)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::{build_fcn_a, build_fcn_b, build_fcn_ef, build_fusion};
    use crate::neural::SignalTensor;
    use proptest::prelude::*;

    fn probe(channels: usize, len: usize) -> SignalTensor {
        let data = (0..channels * len)
            .map(|i| 0.8 * (i as f64 * 0.173).sin() * (i as f64 * 0.011).cos())
            .collect();
        SignalTensor::new(channels, len, data).unwrap()
    }

    #[track_caller]
    fn assert_tanh_of_channel0(model: &FcnModel, tol: f64) {
        let x = probe(model.in_channels(), 300);
        let y = model.forward(&x).unwrap();
        for (a, b) in y.channel(0).iter().zip(x.channel(0)) {
            assert!((a - b.tanh()).abs() < tol, "{a} vs {}", b.tanh());
        }
    }

    #[test]
    fn deep_stacks_pass_channel0_through() {
        for model in [build_fcn_a(), build_fcn_ef(), build_fusion()] {
            assert_tanh_of_channel0(&warm_started(model.clone(), 3).unwrap(), 1e-12);
            assert_tanh_of_channel0(&passthrough(model).unwrap(), 1e-12);
        }
    }

    #[test]
    fn unsupported_layouts_are_rejected() {
        assert!(passthrough(build_fcn_b()).is_err());
        let single = FcnModel::from_spec("one", &[(1, 1, 3, Activation::Tanh)]).unwrap();
        assert!(passthrough(single).is_err());
    }

    #[test]
    fn random_channels_stay_random_but_silent() {
        let random = initialized(build_fusion(), 5);
        let warm = warm_started(build_fusion(), 5).unwrap();
        let per_out = 2 * 55;
        assert_eq!(random.layers[0].weights[2 * per_out..], warm.layers[0].weights[2 * per_out..]);
        assert!(warm.layers[1].weights[2 * 55..].iter().all(|&w| w == 0.0));
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(16))]
        #[test]
        fn passthrough_is_exact_for_any_depth(depth in 2usize..6, width in 2usize..5, k in 0usize..4, seed in 0u64..100) {
            let kernel = 2 * k + 1;
            let mut spec = vec![(1, width, kernel, Activation::LeakyRelu)];
            spec.extend((2..depth).map(|_| (width, width, kernel, Activation::LeakyRelu)));
            spec.push((width, 1, kernel, Activation::Tanh));
            let model = FcnModel::from_spec("stack", &spec).unwrap();
            assert_tanh_of_channel0(&warm_started(model, seed).unwrap(), 1e-12);
        }
    }
}
