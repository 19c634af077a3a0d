//! Synthetic speech-like utterances and noise classes.
//!
//! All generators are deterministic in their seed. Utterances are built from
//! ten "syllables", each a glottal pulse train (plus optional fricative onset)
//! shaped by a bank of formant resonators whose targets stay constant over
//! the syllable.

use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rustfft::num_complex::Complex;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

use crate::corpus::bcm::design_bcm_channel;
use crate::error::{Error, Result};
use crate::rng;
use crate::signal_io::{peak_normalize, Waveform, SAMPLE_RATE};

pub const SYLLABLES_PER_UTTERANCE: usize = 10;
pub const OUTPUT_PEAK: f64 = 0.9;

const FS: f64 = SAMPLE_RATE as f64;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum NoiseType {
    Talkers,
    Piano,
    Siren,
    Ssn,
    Car,
    Babycry,
    Helicopter,
}

impl NoiseType {
    pub const TRAIN: [NoiseType; 4] = [
        NoiseType::Talkers,
        NoiseType::Piano,
        NoiseType::Siren,
        NoiseType::Ssn,
    ];
    pub const TEST: [NoiseType; 3] = [NoiseType::Car, NoiseType::Babycry, NoiseType::Helicopter];

    pub fn name(self) -> &'static str {
        match self {
            NoiseType::Talkers => "talkers",
            NoiseType::Piano => "piano",
            NoiseType::Siren => "siren",
            NoiseType::Ssn => "ssn",
            NoiseType::Car => "car",
            NoiseType::Babycry => "babycry",
            NoiseType::Helicopter => "helicopter",
        }
    }
}

impl fmt::Display for NoiseType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for NoiseType {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Ok(match s {
            "talkers" => NoiseType::Talkers,
            "piano" => NoiseType::Piano,
            "siren" => NoiseType::Siren,
            "ssn" => NoiseType::Ssn,
            "car" => NoiseType::Car,
            "babycry" => NoiseType::Babycry,
            "helicopter" => NoiseType::Helicopter,
            other => return Err(Error::Config(format!("unknown noise type {other:?}"))),
        })
    }
}

fn num_samples(duration_s: f64) -> usize {
    (duration_s * FS).round() as usize
}

fn gaussian(rng: &mut ChaCha8Rng) -> f64 {
    StandardNormal.sample(rng)
}

/// Two-pole resonator with unit peak gain at its centre frequency.
#[derive(Clone, Copy)]
struct Resonator {
    a1: f64,
    a2: f64,
    gain: f64,
    y1: f64,
    y2: f64,
}

impl Resonator {
    fn new(freq_hz: f64, bandwidth_hz: f64) -> Self {
        let r = (-PI * bandwidth_hz / FS).exp();
        let theta = 2.0 * PI * freq_hz / FS;
        Self {
            a1: -2.0 * r * theta.cos(),
            a2: r * r,
            gain: (1.0 - r * r) * 0.5,
            y1: 0.0,
            y2: 0.0,
        }
    }

    fn retune(&mut self, freq_hz: f64, bandwidth_hz: f64) {
        let fresh = Self::new(freq_hz, bandwidth_hz);
        self.a1 = fresh.a1;
        self.a2 = fresh.a2;
        self.gain = fresh.gain;
    }

    fn step(&mut self, x: f64) -> f64 {
        let y = self.gain * x - self.a1 * self.y1 - self.a2 * self.y2;
        self.y2 = self.y1;
        self.y1 = y;
        y
    }
}

/// Raised-cosine attack and release of `ramp` samples on a span of `len`.
fn envelope(i: usize, len: usize, ramp: usize) -> f64 {
    let ramp = ramp.min(len / 2).max(1);
    let edge = |k: usize| 0.5 - 0.5 * (PI * k as f64 / ramp as f64).cos();
    if i < ramp {
        edge(i)
    } else if i + ramp >= len {
        edge(len - i)
    } else {
        1.0
    }
}

const FORMANT_RANGES: [(f64, f64, f64); 4] = [
    (300.0, 850.0, 80.0),
    (900.0, 2300.0, 120.0),
    (2300.0, 3300.0, 180.0),
    (3300.0, 4500.0, 250.0),
];
const FORMANT_GAINS: [f64; 4] = [1.0, 0.8, 0.55, 0.4];

fn render_utterance(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    let mut out = vec![0.0; n];
    let n_formants = rng.random_range(2..=4usize);
    let base_f0: f64 = rng.random_range(100.0..200.0);

    let lead = (0.05 * n as f64) as usize;
    let slot = (0.9 * n as f64 / SYLLABLES_PER_UTTERANCE as f64) as usize;

    let mut formants: Vec<Resonator> = FORMANT_RANGES[..n_formants]
        .iter()
        .map(|&(lo, _, bw)| Resonator::new(lo, bw))
        .collect();
    let mut fric = Resonator::new(5000.0, 2500.0);
    let mut phase = 0.0f64;
    let mut tilt = 0.0f64;

    for syl in 0..SYLLABLES_PER_UTTERANCE {
        let start = lead + syl * slot + rng.random_range(0..=slot / 10);
        let len = ((slot as f64) * rng.random_range(0.6..0.8)) as usize;
        let end = (start + len).min(n);
        if start >= end {
            continue;
        }
        let len = end - start;

        for (res, &(lo, hi, bw)) in formants.iter_mut().zip(&FORMANT_RANGES) {
            res.retune(rng.random_range(lo..hi), bw * rng.random_range(0.8..1.3));
        }
        let f0_start = (base_f0 * rng.random_range(0.8..1.25)).clamp(90.0, 250.0);
        let f0_end = (f0_start * rng.random_range(0.75..1.3)).clamp(90.0, 250.0);
        let loudness = rng.random_range(0.6..1.0);
        let fric_len = if rng.random_bool(0.4) {
            (len as f64 * rng.random_range(0.15..0.3)) as usize
        } else {
            0
        };
        let breath = rng.random_range(0.02..0.06);

        for i in 0..len {
            let frac = i as f64 / len as f64;
            let f0 = f0_start + (f0_end - f0_start) * frac;
            phase += f0 / FS;
            let pulse = if phase >= 1.0 {
                phase -= 1.0;
                1.0
            } else {
                0.0
            };
            // Mild spectral tilt on the glottal source.
            tilt = 0.3 * tilt + pulse;
            let voiced_env = if i < fric_len { 0.0 } else { envelope(i - fric_len, len - fric_len, 240) };
            let source = voiced_env * (tilt + breath * gaussian(rng));

            let mut v = 0.0;
            for (res, g) in formants.iter_mut().zip(FORMANT_GAINS) {
                v += g * res.step(source);
            }
            let hiss = if i < fric_len {
                0.5 * envelope(i, fric_len, 80) * fric.step(gaussian(rng))
            } else {
                fric.step(0.0)
            };
            out[start + i] += loudness * (v + hiss);
        }
    }
    out
}

fn finish(samples: Vec<f64>) -> Result<Waveform> {
    Ok(peak_normalize(&Waveform::new(samples), OUTPUT_PEAK)?.0)
}

fn check_duration(duration_s: f64, lo: f64, hi: f64) -> Result<()> {
    if !(duration_s >= lo && duration_s <= hi) {
        return Err(Error::Config(format!(
            "duration {duration_s} s outside [{lo}, {hi}]"
        )));
    }
    Ok(())
}

/// A deterministic speech-like utterance peak-normalised to 0.9.
pub fn synth_utterance(seed: u64, duration_s: f64) -> Result<Waveform> {
    check_duration(duration_s, 1.0, 10.0)?;
    let mut rng = rng::stream(seed, "utterance");
    finish(render_utterance(&mut rng, num_samples(duration_s)))
}

/// A deterministic noise realisation of `noise_type`, peak-normalised to 0.9.
pub fn synth_noise(noise_type: NoiseType, seed: u64, duration_s: f64) -> Result<Waveform> {
    check_duration(duration_s, 0.1, 600.0)?;
    let n = num_samples(duration_s);
    let mut rng = rng::stream(seed, noise_type.name());
    let samples = match noise_type {
        NoiseType::Talkers => talkers(&mut rng, n),
        NoiseType::Piano => piano(&mut rng, n),
        NoiseType::Siren => siren(&mut rng, n),
        NoiseType::Ssn => ssn(&mut rng, n)?,
        NoiseType::Car => car(&mut rng, n)?,
        NoiseType::Babycry => babycry(&mut rng, n),
        NoiseType::Helicopter => helicopter(&mut rng, n),
    };
    finish(samples)
}

pub fn synth_noise_named(name: &str, seed: u64, duration_s: f64) -> Result<Waveform> {
    synth_noise(name.parse()?, seed, duration_s)
}

fn talkers(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    // Each talker reads consecutive three-second sentences, entering at a
    // random point of the first one so the two voices are not aligned.
    let sentence = num_samples(3.0);
    let mut out = vec![0.0; n];
    for _ in 0..2 {
        let offset = rng.random_range(0..sentence / 2);
        let mut voice = Vec::with_capacity(n + offset + sentence);
        while voice.len() < n + offset {
            voice.extend(render_utterance(rng, sentence));
        }
        let gain = rng.random_range(0.7..1.0);
        for (o, v) in out.iter_mut().zip(&voice[offset..]) {
            *o += gain * v;
        }
    }
    out
}

fn piano(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    let mut out = vec![0.0; n];
    let mut onset = 0usize;
    while onset < n {
        let notes = rng.random_range(1..=3);
        for _ in 0..notes {
            let midi = rng.random_range(40..=84) as f64;
            let f0 = 440.0 * 2f64.powf((midi - 69.0) / 12.0);
            let tau = rng.random_range(0.3..1.0) * FS;
            let amp = rng.random_range(0.5..1.0);
            let len = ((5.0 * tau) as usize).min(n - onset);
            for h in 1..=8 {
                let f = f0 * h as f64 * (1.0 + 0.0004 * (h * h) as f64);
                if f >= FS / 2.0 {
                    break;
                }
                let ph = rng.random_range(0.0..2.0 * PI);
                let hamp = amp / h as f64;
                let htau = tau / (1.0 + 0.3 * h as f64);
                for i in 0..len {
                    let t = i as f64;
                    out[onset + i] += hamp * (-t / htau).exp() * (2.0 * PI * f * t / FS + ph).sin();
                }
            }
        }
        onset += (rng.random_range(0.2..0.5) * FS) as usize;
    }
    out
}

fn siren(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    let sweep_phase = rng.random_range(0.0..2.0 * PI);
    let mut phase = rng.random_range(0.0..2.0 * PI);
    (0..n)
        .map(|i| {
            let t = i as f64 / FS;
            let f = 1000.0 + 400.0 * (2.0 * PI * 0.5 * t + sweep_phase).sin();
            phase += 2.0 * PI * f / FS;
            phase.sin()
        })
        .collect()
}

fn white(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    (0..n).map(|_| gaussian(rng)).collect()
}

/// Circular frequency-domain filtering by a real magnitude response sampled
/// on the FFT grid of the signal length.
fn shape_spectrum(x: &[f64], magnitude: impl Fn(f64) -> f64) -> Vec<f64> {
    let n = x.len();
    let mut planner = FftPlanner::<f64>::new();
    let mut buf: Vec<Complex<f64>> = x.iter().map(|&v| Complex::new(v, 0.0)).collect();
    planner.plan_fft_forward(n).process(&mut buf);
    for (k, c) in buf.iter_mut().enumerate() {
        let bin = k.min(n - k);
        *c *= magnitude(bin as f64 * FS / n as f64);
    }
    planner.plan_fft_inverse(n).process(&mut buf);
    buf.iter().map(|c| c.re / n as f64).collect()
}

const LTAS_FFT: usize = 512;

/// Long-term average power spectrum of ten synthetic utterances.
fn long_term_spectrum(rng: &mut ChaCha8Rng) -> Vec<f64> {
    let mut planner = FftPlanner::<f64>::new();
    let fft = planner.plan_fft_forward(LTAS_FFT);
    let window: Vec<f64> = (0..LTAS_FFT)
        .map(|i| 0.5 - 0.5 * (2.0 * PI * i as f64 / LTAS_FFT as f64).cos())
        .collect();
    let mut psd = vec![0.0; LTAS_FFT / 2 + 1];
    let mut frames = 0usize;
    for _ in 0..10 {
        let utt = render_utterance(rng, num_samples(3.0));
        for frame in utt.chunks_exact(LTAS_FFT / 2).collect::<Vec<_>>().windows(2) {
            let mut buf: Vec<Complex<f64>> = frame[0]
                .iter()
                .chain(frame[1])
                .zip(&window)
                .map(|(&v, &w)| Complex::new(v * w, 0.0))
                .collect();
            fft.process(&mut buf);
            for (p, c) in psd.iter_mut().zip(&buf) {
                *p += c.norm_sqr();
            }
            frames += 1;
        }
    }
    psd.iter_mut().for_each(|p| *p /= frames as f64);
    psd
}

fn ssn(rng: &mut ChaCha8Rng, n: usize) -> Result<Vec<f64>> {
    let psd = long_term_spectrum(rng);
    let noise = white(rng, n);
    let bin_hz = FS / LTAS_FFT as f64;
    Ok(shape_spectrum(&noise, |f| {
        // Linear interpolation of the LTAS magnitude.
        let pos = f / bin_hz;
        let i = (pos.floor() as usize).min(psd.len() - 2);
        let frac = pos - i as f64;
        ((1.0 - frac) * psd[i] + frac * psd[i + 1]).sqrt()
    }))
}

fn car(rng: &mut ChaCha8Rng, n: usize) -> Result<Vec<f64>> {
    let lp = design_bcm_channel(150.0, 4)?;
    let rumble = lp.filter(&white(rng, n));
    let rumble_rms = (rumble.iter().map(|v| v * v).sum::<f64>() / n as f64).sqrt().max(1e-12);
    let engine_hz = rng.random_range(28.0..32.0);
    let phases: Vec<f64> = (0..6).map(|_| rng.random_range(0.0..2.0 * PI)).collect();
    let wobble = rng.random_range(0.0..2.0 * PI);
    Ok((0..n)
        .map(|i| {
            let t = i as f64 / FS;
            let f = engine_hz * (1.0 + 0.02 * (2.0 * PI * 0.3 * t + wobble).sin());
            let engine: f64 = phases
                .iter()
                .enumerate()
                .map(|(h, ph)| (2.0 * PI * f * (h + 1) as f64 * t + ph).sin() / (h + 1) as f64)
                .sum();
            rumble[i] / rumble_rms + 0.6 * engine
        })
        .collect())
}

fn babycry(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    let mut out = vec![0.0; n];
    let mut pos = rng.random_range(0..(0.2 * FS) as usize);
    let mut phase = 0.0f64;
    while pos < n {
        let len = ((rng.random_range(0.3..0.8) * FS) as usize).min(n - pos);
        let f_start = rng.random_range(400.0..600.0);
        let f_peak = rng.random_range(400.0..600.0);
        let vibrato = rng.random_range(5.0..8.0);
        for i in 0..len {
            let frac = i as f64 / len as f64;
            // Rise then fall across the burst.
            let contour = f_start + (f_peak - f_start) * (PI * frac).sin();
            let f0 = (contour * (1.0 + 0.03 * (2.0 * PI * vibrato * i as f64 / FS).sin())).clamp(400.0, 600.0);
            phase += 2.0 * PI * f0 / FS;
            let mut v = 0.0;
            for h in 1..=7 {
                v += (phase * h as f64).sin() / (h as f64).powf(0.8);
            }
            out[pos + i] += envelope(i, len, 400) * v;
        }
        pos += len + (rng.random_range(0.1..0.4) * FS) as usize;
    }
    out
}

fn helicopter(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    let rate = rng.random_range(12.0..14.0);
    let period = FS / rate;
    let hiss = white(rng, n);
    let band = shape_spectrum(&hiss, |f| if (200.0..2000.0).contains(&f) { 1.0 } else { 0.05 });
    let band_rms = (band.iter().map(|v| v * v).sum::<f64>() / n as f64).sqrt().max(1e-12);
    let mut out: Vec<f64> = band.iter().map(|v| 0.4 * v / band_rms).collect();
    let decay = 0.008 * FS;
    let mut t = rng.random_range(0.0..period);
    while (t as usize) < n {
        let start = t as usize;
        let len = ((6.0 * decay) as usize).min(n - start);
        let amp = rng.random_range(2.0..3.0);
        for i in 0..len {
            out[start + i] += amp * (-(i as f64) / decay).exp() * gaussian(rng);
        }
        t += period;
    }
    out
}
