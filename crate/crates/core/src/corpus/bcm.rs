//! Simulated bone-conduction channel.
//!
//! A bone-conducted microphone is modelled as a Butterworth low-pass filter
//! applied with zero phase. The designed filter is stored as a single
//! direct-form transfer function `b(z) / a(z)` with `a[0] == 1`.

use std::f64::consts::PI;

use crate::error::{Error, Result};
use crate::signal_io::{Waveform, SAMPLE_RATE};

pub const DEFAULT_CUTOFF_HZ: f64 = 1000.0;
pub const DEFAULT_ORDER: usize = 4;

#[derive(Debug, Clone, PartialEq)]
pub struct BcmChannel {
    pub cutoff_hz: f64,
    pub order: usize,
    /// Numerator, lowest power of z^-1 first.
    pub b: Vec<f64>,
    /// Denominator with `a[0] == 1`.
    pub a: Vec<f64>,
}

impl Default for BcmChannel {
    fn default() -> Self {
        design_bcm_channel(DEFAULT_CUTOFF_HZ, DEFAULT_ORDER).expect("default channel is valid")
    }
}

fn poly_mul(p: &[f64], q: &[f64]) -> Vec<f64> {
    let mut out = vec![0.0; p.len() + q.len() - 1];
    for (i, &x) in p.iter().enumerate() {
        for (j, &y) in q.iter().enumerate() {
            out[i + j] += x * y;
        }
    }
    out
}

/// Butterworth low-pass designed by the bilinear transform with the cutoff
/// prewarped, so the -3 dB point lands exactly on `cutoff_hz`.
pub fn design_bcm_channel(cutoff_hz: f64, order: usize) -> Result<BcmChannel> {
    let nyquist = f64::from(SAMPLE_RATE) / 2.0;
    if !(cutoff_hz > 0.0 && cutoff_hz < nyquist) {
        return Err(Error::Config(format!(
            "bcm cutoff {cutoff_hz} Hz outside (0, {nyquist})"
        )));
    }
    if ![2, 4, 6].contains(&order) {
        return Err(Error::Config(format!("bcm order {order} not in {{2, 4, 6}}")));
    }

    let fs = f64::from(SAMPLE_RATE);
    let c = 2.0 * fs;
    let wc = c * (PI * cutoff_hz / fs).tan();

    // Each conjugate pole pair of the analog prototype gives a section
    // wc^2 / (s^2 + 2 sin(theta) wc s + wc^2); map each through s = c (1 - z^-1) / (1 + z^-1).
    let mut b = vec![1.0];
    let mut a = vec![1.0];
    for k in 1..=order / 2 {
        let theta = PI * (2 * k - 1) as f64 / (2 * order) as f64;
        let damping = 2.0 * theta.sin() * wc;
        let w2 = wc * wc;
        let a0 = c * c + damping * c + w2;
        let sec_a = [1.0, (2.0 * w2 - 2.0 * c * c) / a0, (c * c - damping * c + w2) / a0];
        let sec_b = [w2 / a0, 2.0 * w2 / a0, w2 / a0];
        b = poly_mul(&b, &sec_b);
        a = poly_mul(&a, &sec_a);
    }

    // Pin the DC gain to exactly one.
    let dc = b.iter().sum::<f64>() / a.iter().sum::<f64>();
    b.iter_mut().for_each(|v| *v /= dc);

    Ok(BcmChannel {
        cutoff_hz,
        order,
        b,
        a,
    })
}

impl BcmChannel {
    /// Magnitude of the single-pass frequency response at `freq_hz`.
    pub fn magnitude_at(&self, freq_hz: f64) -> f64 {
        let w = 2.0 * PI * freq_hz / f64::from(SAMPLE_RATE);
        let eval = |p: &[f64]| {
            p.iter().enumerate().fold((0.0, 0.0), |(re, im), (k, &c)| {
                let phi = -w * k as f64;
                (re + c * phi.cos(), im + c * phi.sin())
            })
        };
        let (nr, ni) = eval(&self.b);
        let (dr, di) = eval(&self.a);
        (nr.hypot(ni)) / (dr.hypot(di))
    }

    pub fn dc_gain(&self) -> f64 {
        self.b.iter().sum::<f64>() / self.a.iter().sum::<f64>()
    }

    /// Schur-Cohn step-down test: stable iff every reflection coefficient
    /// has magnitude below one.
    pub fn is_stable(&self) -> bool {
        if self.a.is_empty() || self.a[0] == 0.0 {
            return false;
        }
        let mut p: Vec<f64> = self.a.iter().map(|v| v / self.a[0]).collect();
        while p.len() > 1 {
            let m = p.len() - 1;
            let k = p[m];
            if !(k.abs() < 1.0) {
                return false;
            }
            let denom = 1.0 - k * k;
            p = (0..m).map(|i| (p[i] - k * p[m - i]) / denom).collect();
        }
        true
    }

    fn validate(&self) -> Result<()> {
        if self.b.is_empty() || self.a.is_empty() || self.a[0] != 1.0 {
            return Err(Error::Config("bcm channel needs a[0] == 1".into()));
        }
        if !self.is_stable() {
            return Err(Error::Config("bcm channel is unstable".into()));
        }
        Ok(())
    }

    /// One causal pass, transposed direct form II, zero initial state.
    pub fn filter(&self, x: &[f64]) -> Vec<f64> {
        let n = self.a.len().max(self.b.len());
        let coef = |p: &[f64], i: usize| p.get(i).copied().unwrap_or(0.0);
        let mut state = vec![0.0; n];
        x.iter()
            .map(|&xn| {
                let yn = coef(&self.b, 0) * xn + state[0];
                for i in 1..n {
                    let next = if i + 1 < n { state[i] } else { 0.0 };
                    state[i - 1] = coef(&self.b, i) * xn - coef(&self.a, i) * yn + next;
                }
                yn
            })
            .collect()
    }
}

/// Zero-phase channel: filter, reverse, filter, reverse.
pub fn simulate_bcm(clean: &Waveform, ch: &BcmChannel) -> Result<Waveform> {
    ch.validate()?;
    let mut y = ch.filter(&clean.samples);
    y.reverse();
    let mut y = ch.filter(&y);
    y.reverse();
    Ok(Waveform {
        samples: y,
        sample_rate_hz: clean.sample_rate_hz,
    })
}
