//! Mono 16 kHz 16-bit PCM WAV and CSV waveform I/O.
//!
//! Quantisation is asymmetric: stored integers are divided by 32768 on read
//! and amplitudes are multiplied by 32767 (then rounded) on write.

use std::fs;
use std::io::{BufWriter, Write};
use std::path::Path;

use crate::error::{Error, Result};

pub const SAMPLE_RATE: u32 = 16_000;

const READ_SCALE: f64 = 32768.0;
const WRITE_SCALE: f64 = 32767.0;

/// A mono sampled signal with 64-bit amplitudes.
#[derive(Debug, Clone, PartialEq)]
pub struct Waveform {
    pub samples: Vec<f64>,
    pub sample_rate_hz: u32,
}

impl Waveform {
    pub fn new(samples: Vec<f64>) -> Self {
        Self {
            samples,
            sample_rate_hz: SAMPLE_RATE,
        }
    }

    pub fn zeros(len: usize) -> Self {
        Self::new(vec![0.0; len])
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn duration_s(&self) -> f64 {
        self.len() as f64 / f64::from(self.sample_rate_hz)
    }

    /// Mean squared amplitude.
    pub fn power(&self) -> f64 {
        mean_square(&self.samples)
    }

    pub fn peak(&self) -> f64 {
        self.samples.iter().fold(0.0f64, |m, &x| m.max(x.abs()))
    }

    pub fn scaled(&self, gain: f64) -> Waveform {
        Waveform {
            samples: self.samples.iter().map(|&x| x * gain).collect(),
            sample_rate_hz: self.sample_rate_hz,
        }
    }
}

pub(crate) fn mean_square(x: &[f64]) -> f64 {
    if x.is_empty() {
        return 0.0;
    }
    x.iter().map(|v| v * v).sum::<f64>() / x.len() as f64
}

/// Quantise one amplitude with the write convention.
pub fn quantize(x: f64) -> i16 {
    (x * WRITE_SCALE).round().clamp(-32768.0, 32767.0) as i16
}

pub fn dequantize(v: i16) -> f64 {
    f64::from(v) / READ_SCALE
}

/// Clamp to [-1, 1] and snap to exactly what a write then read would give.
pub fn to_pcm_grid(w: &Waveform) -> Waveform {
    Waveform {
        samples: w.samples.iter().map(|&x| dequantize(quantize(x.clamp(-1.0, 1.0)))).collect(),
        sample_rate_hz: w.sample_rate_hz,
    }
}

pub fn read_wav(path: impl AsRef<Path>) -> Result<Waveform> {
    let pcm = read_wav_pcm16(path)?;
    Ok(Waveform::new(pcm.into_iter().map(dequantize).collect()))
}

fn u16_at(b: &[u8], at: usize) -> u16 {
    u16::from_le_bytes([b[at], b[at + 1]])
}

fn u32_at(b: &[u8], at: usize) -> u32 {
    u32::from_le_bytes([b[at], b[at + 1], b[at + 2], b[at + 3]])
}

/// Read the raw 16-bit samples of a mono 16 kHz PCM file.
pub fn read_wav_pcm16(path: impl AsRef<Path>) -> Result<Vec<i16>> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    if bytes.len() < 12 || &bytes[0..4] != b"RIFF" || &bytes[8..12] != b"WAVE" {
        return Err(Error::Malformed(format!(
            "{} is not a RIFF/WAVE file",
            path.display()
        )));
    }

    let mut pos = 12;
    let mut fmt_seen = false;
    while pos + 8 <= bytes.len() {
        let id = &bytes[pos..pos + 4];
        let size = u32_at(&bytes, pos + 4) as usize;
        let body = pos + 8;
        if body + size > bytes.len() {
            return Err(Error::Malformed(format!(
                "chunk {:?} truncated",
                String::from_utf8_lossy(id)
            )));
        }
        match id {
            b"fmt " => {
                if size < 16 {
                    return Err(Error::Malformed("fmt chunk shorter than 16 bytes".into()));
                }
                check_fmt(&bytes[body..body + size])?;
                fmt_seen = true;
            }
            b"data" => {
                if !fmt_seen {
                    return Err(Error::Malformed("data chunk before fmt chunk".into()));
                }
                if size == 0 {
                    return Err(Error::EmptySignal);
                }
                if size % 2 != 0 {
                    return Err(Error::Malformed("odd data chunk length".into()));
                }
                return Ok(bytes[body..body + size]
                    .chunks_exact(2)
                    .map(|c| i16::from_le_bytes([c[0], c[1]]))
                    .collect());
            }
            _ => {}
        }
        // Chunks are word aligned.
        pos = body + size + (size & 1);
    }
    Err(Error::Malformed("no data chunk".into()))
}

fn check_fmt(fmt: &[u8]) -> Result<()> {
    let format = u16_at(fmt, 0);
    let channels = u16_at(fmt, 2);
    let rate = u32_at(fmt, 4);
    let bits = u16_at(fmt, 14);
    let mismatch = |field, found: String, expected: &str| Error::Format {
        field,
        found,
        expected: expected.to_string(),
    };
    if format != 1 {
        return Err(mismatch("format code", format.to_string(), "1 (PCM)"));
    }
    if channels != 1 {
        return Err(mismatch("channel count", channels.to_string(), "1"));
    }
    if rate != SAMPLE_RATE {
        return Err(mismatch("sample rate", rate.to_string(), "16000"));
    }
    if bits != 16 {
        return Err(mismatch("bits per sample", bits.to_string(), "16"));
    }
    Ok(())
}

/// Write a waveform whose samples all lie in [-1, 1].
pub fn write_wav(path: impl AsRef<Path>, w: &Waveform) -> Result<()> {
    if let Some((index, &value)) = w
        .samples
        .iter()
        .enumerate()
        .find(|(_, v)| !(v.abs() <= 1.0))
    {
        return Err(Error::Range { index, value });
    }
    if w.sample_rate_hz != SAMPLE_RATE {
        return Err(Error::Format {
            field: "sample rate",
            found: w.sample_rate_hz.to_string(),
            expected: "16000".into(),
        });
    }
    let pcm: Vec<i16> = w.samples.iter().map(|&x| quantize(x)).collect();
    write_wav_pcm16(path, &pcm)
}

pub fn write_wav_pcm16(path: impl AsRef<Path>, pcm: &[i16]) -> Result<()> {
    let path = path.as_ref();
    let data_len = (pcm.len() * 2) as u32;
    let mut out = Vec::with_capacity(44 + pcm.len() * 2);
    out.extend_from_slice(b"RIFF");
    out.extend_from_slice(&(36 + data_len).to_le_bytes());
    out.extend_from_slice(b"WAVE");
    out.extend_from_slice(b"fmt ");
    out.extend_from_slice(&16u32.to_le_bytes());
    out.extend_from_slice(&1u16.to_le_bytes());
    out.extend_from_slice(&1u16.to_le_bytes());
    out.extend_from_slice(&SAMPLE_RATE.to_le_bytes());
    out.extend_from_slice(&(SAMPLE_RATE * 2).to_le_bytes());
    out.extend_from_slice(&2u16.to_le_bytes());
    out.extend_from_slice(&16u16.to_le_bytes());
    out.extend_from_slice(b"data");
    out.extend_from_slice(&data_len.to_le_bytes());
    for s in pcm {
        out.extend_from_slice(&s.to_le_bytes());
    }
    fs::write(path, out).map_err(|e| Error::io(path, e))
}

/// Scale `w` so that its largest absolute sample equals `target_peak`.
pub fn peak_normalize(w: &Waveform, target_peak: f64) -> Result<(Waveform, f64)> {
    if !(target_peak > 0.0 && target_peak <= 1.0) {
        return Err(Error::Config(format!(
            "target peak {target_peak} outside (0, 1]"
        )));
    }
    let peak = w.peak();
    if peak == 0.0 {
        return Err(Error::Degenerate("cannot peak-normalize an all-zero signal".into()));
    }
    let gain = target_peak / peak;
    Ok((w.scaled(gain), gain))
}

/// Write `n,amplitude` rows, one per sample.
pub fn export_csv(w: &Waveform, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    if w.is_empty() {
        return Err(Error::EmptySignal);
    }
    let file = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut out = BufWriter::new(file);
    let io = |e| Error::io(path, e);
    writeln!(out, "n,amplitude").map_err(io)?;
    for (i, x) in w.samples.iter().enumerate() {
        // `{:?}` is the shortest representation that parses back exactly.
        writeln!(out, "{i},{x:?}").map_err(io)?;
    }
    out.flush().map_err(io)
}

pub fn import_csv(path: impl AsRef<Path>) -> Result<Waveform> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut lines = text.lines();
    if lines.next() != Some("n,amplitude") {
        return Err(Error::Malformed("missing `n,amplitude` header".into()));
    }
    let samples = lines
        .enumerate()
        .map(|(row, line)| {
            line.split_once(',')
                .and_then(|(_, a)| a.parse::<f64>().ok())
                .ok_or_else(|| Error::Malformed(format!("bad csv row {}: {line:?}", row + 2)))
        })
        .collect::<Result<Vec<_>>>()?;
    if samples.is_empty() {
        return Err(Error::EmptySignal);
    }
    Ok(Waveform::new(samples))
}
