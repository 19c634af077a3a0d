use serde::{Deserialize, Serialize};

use crate::corpus::RecordAudio;
use crate::error::{Error, Result};
use crate::neural::{FcnModel, SignalTensor};
use crate::signal_io::Waveform;

/// Peak the first input channel is scaled to before each model call.
pub const NORM_PEAK: f64 = 0.9;

/// Which sensor signals feed a model, in channel order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InputSelector {
    NoisyAcm,
    Bcm,
    /// ACM on channel 0, BCM on channel 1.
    Stacked,
}

impl InputSelector {
    pub fn channels(self) -> usize {
        match self {
            InputSelector::Stacked => 2,
            _ => 1,
        }
    }

    pub fn select<'a>(self, audio: &'a RecordAudio) -> Vec<&'a [f64]> {
        match self {
            InputSelector::NoisyAcm => vec![&audio.noisy.samples],
            InputSelector::Bcm => vec![&audio.bcm.samples],
            InputSelector::Stacked => vec![&audio.noisy.samples, &audio.bcm.samples],
        }
    }
}

/// Gain bringing `reference` to [`NORM_PEAK`]; 1 for an all-zero signal.
pub fn norm_gain(reference: &[f64]) -> f64 {
    let peak = reference.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    if peak > 0.0 {
        NORM_PEAK / peak
    } else {
        1.0
    }
}

/// Scale all channels by the channel-0 gain, run the model, undo the gain.
pub fn run_normalized(model: &FcnModel, channels: &[&[f64]]) -> Result<Vec<f64>> {
    if channels.len() != model.in_channels() {
        return Err(Error::Shape(format!(
            "model {} takes {} channels, got {}",
            model.name,
            model.in_channels(),
            channels.len()
        )));
    }
    let len = channels[0].len();
    if channels.iter().any(|c| c.len() != len) {
        return Err(Error::Shape("input channels differ in length".into()));
    }
    let g = norm_gain(channels[0]);
    let scaled: Vec<Vec<f64>> = channels.iter().map(|c| c.iter().map(|v| v * g).collect()).collect();
    let refs: Vec<&[f64]> = scaled.iter().map(Vec::as_slice).collect();
    let y = model.forward(&SignalTensor::stack(&refs)?)?;
    Ok(y.into_data().into_iter().map(|v| v / g).collect())
}

fn waveform(samples: Vec<f64>, like: &Waveform) -> Waveform {
    Waveform {
        samples,
        sample_rate_hz: like.sample_rate_hz,
    }
}

/// One-channel enhancement (FCN_A on noisy ACM or FCN_B on BCM).
pub fn enhance_single(model: &FcnModel, x: &Waveform) -> Result<Waveform> {
    Ok(waveform(run_normalized(model, &[&x.samples])?, x))
}

/// Early fusion: ACM on channel 0, BCM on channel 1.
pub fn enhance_ef(model: &FcnModel, x_a: &Waveform, x_b: &Waveform) -> Result<Waveform> {
    if model.in_channels() != 2 {
        return Err(Error::Config(format!(
            "early fusion needs a 2-channel model, {} takes {}",
            model.name,
            model.in_channels()
        )));
    }
    if x_a.len() != x_b.len() {
        return Err(Error::Shape(format!("ACM has {} samples, BCM has {}", x_a.len(), x_b.len())));
    }
    Ok(waveform(run_normalized(model, &[&x_a.samples, &x_b.samples])?, x_a))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::arch::{build_fcn_a, build_fcn_ef, initialized};

    fn wave(n: usize, f: f64) -> Waveform {
        Waveform::new((0..n).map(|i| 0.4 * (i as f64 * f).sin()).collect())
    }

    #[test]
    fn zero_model_gives_zero_output() {
        let m = build_fcn_ef();
        for t in [100, 16000] {
            let y = enhance_ef(&m, &wave(t, 0.1), &wave(t, 0.03)).unwrap();
            assert_eq!(y.len(), t);
            assert!(y.samples.iter().all(|&v| v == 0.0));
        }
    }

    #[test]
    fn early_fusion_contract() {
        let a = build_fcn_a();
        assert!(matches!(enhance_ef(&a, &wave(10, 0.1), &wave(10, 0.1)), Err(Error::Config(_))));
        let m = build_fcn_ef();
        assert!(matches!(enhance_ef(&m, &wave(10, 0.1), &wave(11, 0.1)), Err(Error::Shape(_))));
    }

    #[test]
    fn channel_order_matters() {
        let m = initialized(build_fcn_ef(), 9);
        let (xa, xb) = (wave(600, 0.2), wave(600, 0.05));
        let y1 = enhance_ef(&m, &xa, &xb).unwrap();
        let y2 = enhance_ef(&m, &xb, &xa).unwrap();
        assert_ne!(y1.samples, y2.samples);
    }

    #[test]
    fn normalization_undoes_gain() {
        // A k=1 linear identity model is exactly scale-equivariant.
        let mut id = FcnModel::from_spec("id", &[(1, 1, 1, crate::neural::Activation::Linear)]).unwrap();
        id.layers[0].weights[0] = 1.0;
        let x = wave(64, 0.3);
        let y = enhance_single(&id, &x).unwrap();
        for (a, b) in x.samples.iter().zip(&y.samples) {
            assert!((a - b).abs() < 1e-15);
        }
        assert_eq!(norm_gain(&[0.0, 0.0]), 1.0);
        assert!((norm_gain(&[0.1, -0.45]) - 2.0).abs() < 1e-15);
    }
}
