//! Short-time objective intelligibility and its extended variant.

use std::sync::Arc;

use rustfft::num_complex::Complex;
use rustfft::{Fft, FftPlanner};

use super::resample::resample;
use crate::error::{Error, Result};
use crate::signal_io::Waveform;

/// Internal analysis rate.
pub const STOI_RATE_HZ: usize = 10_000;
const FRAME: usize = 256;
const HOP: usize = FRAME / 2;
const NFFT: usize = 512;
const BANDS: usize = 15;
const MIN_CENTER_HZ: f64 = 150.0;
/// Frames per envelope segment (384 ms).
pub const SEGMENT_FRAMES: usize = 30;
const BETA_DB: f64 = -15.0;
const DYN_RANGE_DB: f64 = 40.0;
const EPS: f64 = 1e-12;

/// Symmetric Hann window without the zero end points.
fn hann(n: usize) -> Vec<f64> {
    (1..=n)
        .map(|i| 0.5 - 0.5 * (2.0 * std::f64::consts::PI * i as f64 / (n + 1) as f64).cos())
        .collect()
}

fn frame_starts(len: usize) -> impl Iterator<Item = usize> {
    (0..len.saturating_sub(FRAME)).step_by(HOP)
}

/// Drop frames more than 40 dB below the loudest clean frame and
/// overlap-add the survivors back into signals.
fn remove_silent_frames(x: &[f64], y: &[f64], w: &[f64]) -> (Vec<f64>, Vec<f64>) {
    let starts: Vec<usize> = frame_starts(x.len()).collect();
    let energy_db: Vec<f64> = starts
        .iter()
        .map(|&s| {
            let e: f64 = (0..FRAME).map(|i| (w[i] * x[s + i]).powi(2)).sum();
            20.0 * (e.sqrt() + EPS).log10()
        })
        .collect();
    let peak = energy_db.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let kept: Vec<usize> = starts
        .iter()
        .zip(&energy_db)
        .filter(|(_, &e)| peak - DYN_RANGE_DB - e < 0.0)
        .map(|(&s, _)| s)
        .collect();
    if kept.is_empty() {
        return (Vec::new(), Vec::new());
    }
    let out_len = (kept.len() - 1) * HOP + FRAME;
    let mut xs = vec![0.0; out_len];
    let mut ys = vec![0.0; out_len];
    for (j, &s) in kept.iter().enumerate() {
        for i in 0..FRAME {
            xs[j * HOP + i] += w[i] * x[s + i];
            ys[j * HOP + i] += w[i] * y[s + i];
        }
    }
    (xs, ys)
}

/// Band edges as `[lo, hi)` FFT bin ranges.
fn third_octave_bins() -> Vec<(usize, usize)> {
    let bin_hz = STOI_RATE_HZ as f64 / NFFT as f64;
    let nearest = |f: f64| -> usize {
        (0..=NFFT / 2)
            .min_by(|&a, &b| {
                let da = (a as f64 * bin_hz - f).powi(2);
                let db = (b as f64 * bin_hz - f).powi(2);
                da.partial_cmp(&db).expect("finite")
            })
            .expect("non-empty")
    };
    (0..BANDS)
        .map(|k| {
            let k = k as f64;
            let lo = MIN_CENTER_HZ * 2f64.powf((2.0 * k - 1.0) / 6.0);
            let hi = MIN_CENTER_HZ * 2f64.powf((2.0 * k + 1.0) / 6.0);
            (nearest(lo), nearest(hi))
        })
        .collect()
}

/// Third-octave band magnitudes per frame, `frames x BANDS`.
fn band_envelopes(x: &[f64], w: &[f64], fft: &Arc<dyn Fft<f64>>, bands: &[(usize, usize)]) -> Vec<[f64; BANDS]> {
    let mut buf = vec![Complex::new(0.0, 0.0); NFFT];
    frame_starts(x.len())
        .map(|s| {
            buf.iter_mut().for_each(|c| *c = Complex::new(0.0, 0.0));
            for i in 0..FRAME {
                buf[i].re = w[i] * x[s + i];
            }
            fft.process(&mut buf);
            let mut out = [0.0; BANDS];
            for (o, &(lo, hi)) in out.iter_mut().zip(bands) {
                *o = buf[lo..hi].iter().map(|c| c.norm_sqr()).sum::<f64>().sqrt();
            }
            out
        })
        .collect()
}

struct Envelopes {
    clean: Vec<[f64; BANDS]>,
    degraded: Vec<[f64; BANDS]>,
}

fn front_end(clean: &Waveform, degraded: &Waveform) -> Result<Envelopes> {
    if clean.len() != degraded.len() {
        return Err(Error::Shape(format!(
            "clean has {} samples, degraded has {}",
            clean.len(),
            degraded.len()
        )));
    }
    if clean.sample_rate_hz != degraded.sample_rate_hz {
        return Err(Error::Shape("sample rates differ".into()));
    }
    let rate = clean.sample_rate_hz as usize;
    let x = resample(&clean.samples, rate, STOI_RATE_HZ);
    let y = resample(&degraded.samples, rate, STOI_RATE_HZ);
    let w = hann(FRAME);
    let (x, y) = remove_silent_frames(&x, &y, &w);
    let fft = FftPlanner::new().plan_fft_forward(NFFT);
    let bands = third_octave_bins();
    let clean = band_envelopes(&x, &w, &fft, &bands);
    let degraded = band_envelopes(&y, &w, &fft, &bands);
    if clean.len() < SEGMENT_FRAMES {
        return Err(Error::InsufficientSignal {
            frames: clean.len(),
            required: SEGMENT_FRAMES,
        });
    }
    Ok(Envelopes { clean, degraded })
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|a| a * a).sum::<f64>().sqrt()
}

fn center(v: &mut [f64]) {
    let mean = v.iter().sum::<f64>() / v.len() as f64;
    v.iter_mut().for_each(|a| *a -= mean);
}

pub fn stoi(clean: &Waveform, degraded: &Waveform) -> Result<f64> {
    let env = front_end(clean, degraded)?;
    let clip = 10f64.powf(-BETA_DB / 20.0);
    let segments = env.clean.len() - SEGMENT_FRAMES + 1;
    let mut total = 0.0;
    let mut xs = [0.0; SEGMENT_FRAMES];
    let mut ys = [0.0; SEGMENT_FRAMES];
    for m in 0..segments {
        for band in 0..BANDS {
            for j in 0..SEGMENT_FRAMES {
                xs[j] = env.clean[m + j][band];
                ys[j] = env.degraded[m + j][band];
            }
            let gain = norm(&xs) / (norm(&ys) + EPS);
            for j in 0..SEGMENT_FRAMES {
                ys[j] = (ys[j] * gain).min(xs[j] * (1.0 + clip));
            }
            center(&mut xs);
            center(&mut ys);
            let denom = (norm(&xs) + EPS) * (norm(&ys) + EPS);
            total += xs.iter().zip(&ys).map(|(a, b)| a * b).sum::<f64>() / denom;
        }
    }
    Ok((total / (segments * BANDS) as f64).clamp(-1.0, 1.0))
}

/// Mean-and-norm normalize each band row over time, then each frame column
/// over bands. `seg` is `SEGMENT_FRAMES x BANDS`.
fn row_col_normalize(seg: &mut [[f64; BANDS]; SEGMENT_FRAMES]) {
    for band in 0..BANDS {
        let mean = seg.iter().map(|f| f[band]).sum::<f64>() / SEGMENT_FRAMES as f64;
        let n = seg.iter().map(|f| (f[band] - mean).powi(2)).sum::<f64>().sqrt() + EPS;
        seg.iter_mut().for_each(|f| f[band] = (f[band] - mean) / n);
    }
    for frame in seg.iter_mut() {
        center(frame);
        let n = norm(frame) + EPS;
        frame.iter_mut().for_each(|v| *v /= n);
    }
}

pub fn estoi(clean: &Waveform, degraded: &Waveform) -> Result<f64> {
    let env = front_end(clean, degraded)?;
    let segments = env.clean.len() - SEGMENT_FRAMES + 1;
    let mut total = 0.0;
    let mut xs = [[0.0; BANDS]; SEGMENT_FRAMES];
    let mut ys = [[0.0; BANDS]; SEGMENT_FRAMES];
    for m in 0..segments {
        xs.copy_from_slice(&env.clean[m..m + SEGMENT_FRAMES]);
        ys.copy_from_slice(&env.degraded[m..m + SEGMENT_FRAMES]);
        row_col_normalize(&mut xs);
        row_col_normalize(&mut ys);
        let dot: f64 = xs
            .iter()
            .zip(&ys)
            .flat_map(|(a, b)| a.iter().zip(b).map(|(p, q)| p * q))
            .sum();
        total += dot / SEGMENT_FRAMES as f64;
    }
    Ok((total / segments as f64).clamp(-1.0, 1.0))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn band_layout() {
        let bins = third_octave_bins();
        assert_eq!(bins.len(), 15);
        // 150 Hz band spans about 134..168 Hz at 19.53 Hz per bin.
        assert_eq!(bins[0], (7, 9));
        assert!(bins.windows(2).all(|p| p[0].1 == p[1].0));
        assert!(bins[14].1 <= NFFT / 2);
    }

    #[test]
    fn hann_matches_matlab_convention() {
        let w = hann(3);
        assert!((w[0] - 0.5).abs() < 1e-15 && (w[1] - 1.0).abs() < 1e-15 && (w[2] - 0.5).abs() < 1e-15);
    }

    #[test]
    fn short_input_is_insufficient() {
        let x = Waveform::new((0..3000).map(|i| (i as f64 * 0.05).sin()).collect());
        assert!(matches!(stoi(&x, &x), Err(Error::InsufficientSignal { .. })));
        assert!(matches!(stoi(&x, &Waveform::zeros(10)), Err(Error::Shape(_))));
    }

    #[test]
    fn brief_burst_in_silence_is_insufficient() {
        let x = Waveform::new(
            (0..16000)
                .map(|i| if (1000..4200).contains(&i) { (i as f64 * 0.3).sin() } else { 0.0 })
                .collect(),
        );
        assert!(matches!(estoi(&x, &x), Err(Error::InsufficientSignal { .. })));
    }
}
