use crate::error::{Error, Result};
use crate::signal_io::Waveform;

const FRAME_S: f64 = 0.032;
const FLOOR_DB: f64 = -10.0;
const CEIL_DB: f64 = 35.0;
const SILENT_ENERGY: f64 = 1e-10;

/// Segmental SNR over 32 ms non-overlapping frames, each frame clamped to
/// [-10, 35] dB. Frames with clean energy below 1e-10 are skipped; a trailing
/// partial frame is scored like any other.
pub fn seg_snr(clean: &Waveform, degraded: &Waveform) -> Result<f64> {
    if clean.len() != degraded.len() {
        return Err(Error::Shape(format!(
            "clean has {} samples, degraded has {}",
            clean.len(),
            degraded.len()
        )));
    }
    let frame = ((FRAME_S * clean.sample_rate_hz as f64).round() as usize).max(1);
    let mut sum = 0.0;
    let mut count = 0usize;
    for (c, d) in clean.samples.chunks(frame).zip(degraded.samples.chunks(frame)) {
        let sig: f64 = c.iter().map(|v| v * v).sum();
        if sig < SILENT_ENERGY {
            continue;
        }
        let err: f64 = c.iter().zip(d).map(|(a, b)| (a - b) * (a - b)).sum();
        let db = if err == 0.0 { CEIL_DB } else { 10.0 * (sig / err).log10() };
        sum += db.clamp(FLOOR_DB, CEIL_DB);
        count += 1;
    }
    if count == 0 {
        return Err(Error::Degenerate("every clean frame is silent".into()));
    }
    Ok(sum / count as f64)
}
