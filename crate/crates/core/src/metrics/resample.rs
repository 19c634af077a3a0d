//! Rational-factor polyphase resampling with a Kaiser-windowed sinc, using
//! the same filter design rule as the Octave `resample` used by reference
//! intelligibility code (60 dB rejection, roll-off a tenth of the cutoff).

use std::f64::consts::PI;

fn gcd(a: usize, b: usize) -> usize {
    if b == 0 {
        a
    } else {
        gcd(b, a % b)
    }
}

/// Zeroth-order modified Bessel function of the first kind (power series).
fn bessel_i0(x: f64) -> f64 {
    let mut sum = 1.0;
    let mut term = 1.0;
    let q = x * x / 4.0;
    for k in 1..200 {
        term *= q / (k * k) as f64;
        sum += term;
        if term < sum * 1e-17 {
            break;
        }
    }
    sum
}

fn sinc(x: f64) -> f64 {
    if x == 0.0 {
        1.0
    } else {
        (PI * x).sin() / (PI * x)
    }
}

fn design_filter(up: usize, down: usize) -> Vec<f64> {
    let rejection_db: f64 = 60.0;
    let cutoff = 1.0 / (2.0 * up.max(down) as f64);
    let roll_off = cutoff / 10.0;
    let half = ((rejection_db - 8.0) / (28.714 * roll_off)).ceil() as i64;
    let beta = if rejection_db > 50.0 {
        0.1102 * (rejection_db - 8.7)
    } else if rejection_db >= 21.0 {
        0.5842 * (rejection_db - 21.0).powf(0.4) + 0.07886 * (rejection_db - 21.0)
    } else {
        0.0
    };
    let len = 2 * half + 1;
    let i0_beta = bessel_i0(beta);
    (0..len)
        .map(|n| {
            let t = (n - half) as f64;
            let ratio = 2.0 * n as f64 / (len - 1) as f64 - 1.0;
            let window = bessel_i0(beta * (1.0 - ratio * ratio).max(0.0).sqrt()) / i0_beta;
            window * 2.0 * up as f64 * cutoff * sinc(2.0 * cutoff * t)
        })
        .collect()
}

/// Resample `x` from `from_hz` to `to_hz`. The output has
/// `ceil(len * to / from)` samples and is delay compensated.
pub fn resample(x: &[f64], from_hz: usize, to_hz: usize) -> Vec<f64> {
    let g = gcd(from_hz, to_hz);
    let (up, down) = (to_hz / g, from_hz / g);
    if up == down {
        return x.to_vec();
    }
    let h = design_filter(up, down);
    let delay = (h.len() - 1) / 2;
    let out_len = (x.len() * up).div_ceil(down);
    (0..out_len)
        .map(|m| {
            // Position on the upsampled grid aligned with the filter centre.
            let pos = m * down + delay;
            // Only taps landing on non-zero upsampled samples contribute.
            let first = pos % up;
            let mut acc = 0.0;
            let mut k = first;
            while k < h.len() && k <= pos {
                let src = (pos - k) / up;
                if src < x.len() {
                    acc += h[k] * x[src];
                }
                k += up;
            }
            acc
        })
        .collect()
}
