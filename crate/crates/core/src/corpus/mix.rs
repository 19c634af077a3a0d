//! SNR mixing.

use crate::error::{Error, Result};
use crate::signal_io::{mean_square, Waveform};

/// `noisy = clean + g * noise` with `g` chosen so the mixture has exactly
/// `snr_db` of clean-to-noise power.
pub fn mix_at_snr(clean: &Waveform, noise: &Waveform, snr_db: f64) -> Result<(Waveform, f64)> {
    if clean.len() != noise.len() {
        return Err(Error::Shape(format!(
            "clean has {} samples, noise has {}",
            clean.len(),
            noise.len()
        )));
    }
    let gain = snr_gain(&clean.samples, &noise.samples, snr_db)?;
    let noisy = clean
        .samples
        .iter()
        .zip(&noise.samples)
        .map(|(c, n)| c + gain * n)
        .collect();
    Ok((
        Waveform {
            samples: noisy,
            sample_rate_hz: clean.sample_rate_hz,
        },
        gain,
    ))
}

pub(crate) fn snr_gain(clean: &[f64], noise: &[f64], snr_db: f64) -> Result<f64> {
    let pc = mean_square(clean);
    let pn = mean_square(noise);
    if pc == 0.0 {
        return Err(Error::Degenerate("clean signal has zero power".into()));
    }
    if pn == 0.0 {
        return Err(Error::Degenerate("noise signal has zero power".into()));
    }
    Ok((pc / (pn * 10f64.powf(snr_db / 10.0))).sqrt())
}

/// `10 log10(P_clean / P_(noisy - clean))`.
pub fn measured_snr_db(clean: &[f64], noisy: &[f64]) -> f64 {
    let err: f64 = clean.iter().zip(noisy).map(|(c, n)| (n - c) * (n - c)).sum();
    let sig: f64 = clean.iter().map(|c| c * c).sum();
    10.0 * (sig / err).log10()
}

/// Loop `noise` starting at `offset` until `len` samples are produced.
pub fn tile_noise(noise: &Waveform, len: usize, offset: usize) -> Waveform {
    let n = noise.len();
    Waveform {
        samples: (0..len).map(|i| noise.samples[(offset + i) % n]).collect(),
        sample_rate_hz: noise.sample_rate_hz,
    }
}

/// Mix directly on the 16-bit grid.
///
/// Returns the integer noisy mixture `clean + e`, where the noise component
/// `e` is the rounded scaled noise followed by one-LSB corrections until
/// `sum(clean^2) / sum(e^2)` matches `snr_db` as closely as the integer grid
/// allows. Since both files are read back by the same power-of-two scale,
/// the SNR measured from the stored files is then exact to within that
/// residual.
pub fn mix_quantized(clean: &[i16], noise: &[f64], snr_db: f64) -> Result<Vec<i16>> {
    if clean.len() != noise.len() {
        return Err(Error::Shape(format!(
            "clean has {} samples, noise has {}",
            clean.len(),
            noise.len()
        )));
    }
    let clean_energy: u64 = clean.iter().map(|&c| (i64::from(c) * i64::from(c)) as u64).sum();
    let noise_energy: f64 = noise.iter().map(|v| v * v).sum();
    if clean_energy == 0 {
        return Err(Error::Degenerate("clean signal has zero power".into()));
    }
    if noise_energy == 0.0 {
        return Err(Error::Degenerate("noise signal has zero power".into()));
    }
    let target = clean_energy as f64 / 10f64.powf(snr_db / 10.0);
    let scale = (target / noise_energy).sqrt();

    let fits = |c: i16, e: i64| (-32768..=32767).contains(&(i64::from(c) + e));
    let mut e: Vec<i64> = clean
        .iter()
        .zip(noise)
        .map(|(&c, &v)| ((scale * v).round() as i64).clamp(-32768 - i64::from(c), 32767 - i64::from(c)))
        .collect();
    let mut energy: u64 = e.iter().map(|&v| (v * v) as u64).sum();

    loop {
        let mut improved = false;
        for i in 0..e.len() {
            let deficit = target - energy as f64;
            if deficit.abs() <= 0.5 {
                break;
            }
            let v = e[i];
            let step: i64 = if deficit > 0.0 {
                // Grow |e_i| by one, following the sign of the ideal noise.
                if v > 0 || (v == 0 && noise[i] >= 0.0) {
                    1
                } else {
                    -1
                }
            } else if v != 0 {
                -v.signum()
            } else {
                continue;
            };
            let nv = v + step;
            let new_energy = energy - (v * v) as u64 + (nv * nv) as u64;
            if (target - new_energy as f64).abs() < deficit.abs() && fits(clean[i], nv) {
                e[i] = nv;
                energy = new_energy;
                improved = true;
            }
        }
        if !improved || (target - energy as f64).abs() <= 0.5 {
            break;
        }
    }

    // Single-sample moves change the energy by an odd amount 2|v| + 1 or
    // -(2|v| - 1); pairing a grow at |v| = a with a shrink at |v| = b gives
    // the finer net change 2(a - b) + 2.
    for _ in 0..64 {
        let deficit = target - energy as f64;
        if deficit.abs() <= 1.0 {
            break;
        }
        let want = ((deficit - 2.0) / 2.0).round() as i64;
        let mut first_at = std::collections::BTreeMap::new();
        for (i, &v) in e.iter().enumerate() {
            first_at.entry(v.abs()).or_insert(i);
        }
        let found = first_at.iter().find_map(|(&b, &ib)| {
            if b == 0 {
                return None;
            }
            let a = b + want;
            let &ia = first_at.get(&a)?;
            (ia != ib).then_some((ia, ib))
        });
        let Some((ia, ib)) = found else { break };
        let grow = if e[ia] > 0 || (e[ia] == 0 && noise[ia] >= 0.0) { 1 } else { -1 };
        let (va, vb) = (e[ia] + grow, e[ib] - e[ib].signum());
        let new_energy =
            energy - (e[ia] * e[ia] + e[ib] * e[ib]) as u64 + (va * va + vb * vb) as u64;
        if (target - new_energy as f64).abs() >= deficit.abs() || !fits(clean[ia], va) || !fits(clean[ib], vb) {
            break;
        }
        e[ia] = va;
        e[ib] = vb;
        energy = new_energy;
    }

    Ok(clean
        .iter()
        .zip(&e)
        .map(|(&c, &v)| (i64::from(c) + v) as i16)
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::signal_io::dequantize;
    use proptest::prelude::*;

    #[test]
    fn hand_computed_mix() {
        let clean = Waveform::new(vec![1.0, -1.0, 1.0, -1.0]);
        let noise = Waveform::new(vec![0.5, 0.5, -0.5, -0.5]);
        let (noisy, g) = mix_at_snr(&clean, &noise, 0.0).unwrap();
        assert!((g - 2.0).abs() < 1e-15);
        assert_eq!(noisy.samples, vec![2.0, 0.0, 0.0, -2.0]);
    }

    #[test]
    fn equal_power_zero_db_is_unit_gain() {
        let clean = Waveform::new(vec![0.3, -0.1, 0.2]);
        let noise = Waveform::new(vec![-0.1, 0.2, 0.3]);
        let (_, g) = mix_at_snr(&clean, &noise, 0.0).unwrap();
        assert!((g - 1.0).abs() < 1e-15);
    }

    #[test]
    fn very_high_snr_leaves_clean() {
        let clean = Waveform::new(vec![0.3, -0.1, 0.2, 0.5]);
        let noise = Waveform::new(vec![-0.1, 0.2, 0.3, 0.9]);
        let (noisy, _) = mix_at_snr(&clean, &noise, 300.0).unwrap();
        for (a, b) in noisy.samples.iter().zip(&clean.samples) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn degenerate_inputs() {
        let z = Waveform::zeros(4);
        let x = Waveform::new(vec![1.0; 4]);
        assert!(matches!(mix_at_snr(&z, &x, 0.0), Err(Error::Degenerate(_))));
        assert!(matches!(mix_at_snr(&x, &z, 0.0), Err(Error::Degenerate(_))));
        assert!(matches!(mix_at_snr(&x, &Waveform::zeros(3), 0.0), Err(Error::Shape(_))));
    }

    #[test]
    fn tiling_wraps() {
        let n = Waveform::new(vec![1.0, 2.0, 3.0]);
        assert_eq!(tile_noise(&n, 7, 2).samples, vec![3.0, 1.0, 2.0, 3.0, 1.0, 2.0, 3.0]);
    }

    proptest! {
        #[test]
        fn float_mix_hits_target(
            seed in 0u64..500,
            snr in -10.0f64..20.0,
        ) {
            use rand::Rng;
            let mut rng = crate::rng::stream(seed, "mix");
            let clean = Waveform::new((0..512).map(|_| rng.random_range(-1.0..1.0)).collect());
            let noise = Waveform::new((0..512).map(|_| rng.random_range(-1.0..1.0)).collect());
            let (noisy, _) = mix_at_snr(&clean, &noise, snr).unwrap();
            prop_assert!((measured_snr_db(&clean.samples, &noisy.samples) - snr).abs() < 1e-9);
        }

        #[test]
        fn quantized_mix_hits_target_on_grid(seed in 0u64..200, snr in -5.0f64..10.0) {
            use rand::Rng;
            let mut rng = crate::rng::stream(seed, "qmix");
            let clean: Vec<i16> = (0..4000).map(|_| rng.random_range(-8000..8000)).collect();
            let noise: Vec<f64> = (0..4000).map(|_| rng.random_range(-1.0..1.0)).collect();
            let noisy = mix_quantized(&clean, &noise, snr).unwrap();
            let c: Vec<f64> = clean.iter().map(|&v| dequantize(v)).collect();
            let y: Vec<f64> = noisy.iter().map(|&v| dequantize(v)).collect();
            prop_assert!((measured_snr_db(&c, &y) - snr).abs() < 1e-9);
        }
    }
}
