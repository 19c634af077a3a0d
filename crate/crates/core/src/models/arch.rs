//! The four network architectures. Builders return zero-parameter models;
//! call [`initialized`] for a seeded random start.

use crate::neural::{Activation, FcnModel};
use crate::rng;

use Activation::{LeakyRelu, Tanh};

pub const FCN_A: &str = "FCN_A";
pub const FCN_B: &str = "FCN_B";
pub const FCN_EF: &str = "FCN_EF";
pub const FCN_FUSION: &str = "FCN_fusion";
pub const FCN_LF: &str = "FCN_LF";

fn uniform_stack(name: &str, in_channels: usize, width: usize, hidden: usize, kernel: usize) -> FcnModel {
    let mut spec = vec![(in_channels, width, kernel, LeakyRelu)];
    spec.extend((1..hidden).map(|_| (width, width, kernel, LeakyRelu)));
    spec.push((width, 1, kernel, Tanh));
    FcnModel::from_spec(name, &spec).expect("static architecture is valid")
}

/// ACM-only model: seven hidden layers of 33 kernels of length 55 and a
/// single-kernel tanh output layer.
pub fn build_fcn_a() -> FcnModel {
    uniform_stack(FCN_A, 1, 33, 7, 55)
}

/// BCM-only model: (kernels, size) = (1, 257), (3, 1), (5, 15), (1, 513).
pub fn build_fcn_b() -> FcnModel {
    FcnModel::from_spec(
        FCN_B,
        &[
            (1, 1, 257, LeakyRelu),
            (1, 3, 1, LeakyRelu),
            (3, 5, 15, LeakyRelu),
            (5, 1, 513, Tanh),
        ],
    )
    .expect("static architecture is valid")
}

/// Early-fusion model over the stacked (ACM, BCM) pair: seven hidden layers
/// of 30 kernels of length 55 and a tanh output layer.
pub fn build_fcn_ef() -> FcnModel {
    uniform_stack(FCN_EF, 2, 30, 7, 55)
}

/// Late-fusion head over (s_a, s_b): (15, 55) then (1, 55).
pub fn build_fusion() -> FcnModel {
    FcnModel::from_spec(FCN_FUSION, &[(2, 15, 55, LeakyRelu), (15, 1, 55, Tanh)]).expect("static architecture is valid")
}

pub fn param_count(model: &FcnModel) -> usize {
    model.param_count()
}

/// Random initialization from the `init/<name>` stream of `seed`.
pub fn initialized(mut model: FcnModel, seed: u64) -> FcnModel {
    let mut r = rng::stream(seed, &format!("init/{}", model.name));
    model.init_random(&mut r);
    model
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::neural::SignalTensor;

    #[test]
    fn parameter_counts() {
        assert_eq!(param_count(&build_fcn_a()), 363_232);
        assert_eq!(param_count(&build_fcn_b()), 3_060);
        assert_eq!(param_count(&build_fcn_ef()), 302_161);
        assert_eq!(param_count(&build_fusion()), 2_491);
        let single = FcnModel::from_spec("one", &[(1, 1, 1, Activation::Linear)]).unwrap();
        assert_eq!(param_count(&single), 2);
    }

    #[test]
    fn layer_layouts() {
        let a = build_fcn_a();
        assert_eq!(a.layers.len(), 8);
        assert!(a.layers.iter().all(|l| l.kernel_size == 55));
        let b = build_fcn_b();
        let ks: Vec<usize> = b.layers.iter().map(|l| l.kernel_size).collect();
        assert_eq!(ks, [257, 1, 15, 513]);
        let chans: Vec<usize> = b.layers.iter().map(|l| l.out_channels).collect();
        assert_eq!(chans, [1, 3, 5, 1]);
        assert_eq!(build_fcn_ef().in_channels(), 2);
        assert_eq!(build_fusion().layers.len(), 2);
        for m in [a, b, build_fcn_ef(), build_fusion()] {
            m.check_waveform_io().unwrap();
            assert_eq!(m.layers.last().unwrap().activation, Tanh);
            assert!(m.layers[..m.layers.len() - 1].iter().all(|l| l.activation == LeakyRelu));
        }
    }

    #[test]
    fn forward_preserves_length() {
        for m in [build_fcn_a(), build_fcn_b(), build_fusion()] {
            let m = initialized(m, 3);
            let x = SignalTensor::zeros(m.in_channels(), 1000);
            assert_eq!(m.forward(&x).unwrap().shape(), (1, 1000));
        }
    }

    #[test]
    fn initialization_is_seeded() {
        let a1 = initialized(build_fusion(), 5);
        let a2 = initialized(build_fusion(), 5);
        let b = initialized(build_fusion(), 6);
        assert_eq!(a1, a2);
        assert_ne!(a1, b);
    }
}
