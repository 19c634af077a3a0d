//! STOI and ESTOI against values produced by the pystoi reference
//! implementation (v0.4) on the same deterministic signals.

use boneair::metrics::{estoi, stoi};
use boneair::Waveform;
use std::f64::consts::PI;

fn clean() -> Vec<f64> {
    (0..32000)
        .map(|i| {
            if i < 3000 {
                return 0.0;
            }
            let t = i as f64 / 16000.0;
            (0.5 + 0.5 * (2.0 * PI * 3.0 * t).sin())
                * ((2.0 * PI * 240.0 * t).sin()
                    + 0.5 * (2.0 * PI * 1300.0 * t + 0.3).sin()
                    + 0.25 * (2.0 * PI * 3100.0 * t).sin())
        })
        .collect()
}

fn hash_noise() -> Vec<f64> {
    (0..32000)
        .map(|i| {
            let v = (i as f64 * 12.9898).sin() * 43758.5453;
            v - v.floor() - 0.5
        })
        .collect()
}

#[test]
fn matches_reference_values() {
    let x = clean();
    let n = hash_noise();
    let cases = [
        (0.05, 0.6589954545191103, 0.09150138504022094),
        (0.3, 0.5919381187168491, 0.0768698349395208),
        (1.0, 0.5205421559801776, 0.06333158843664095),
    ];
    let cw = Waveform::new(x.clone());
    for (g, want_stoi, want_estoi) in cases {
        let y = Waveform::new(x.iter().zip(&n).map(|(a, b)| a + g * b).collect());
        let s = stoi(&cw, &y).unwrap();
        let e = estoi(&cw, &y).unwrap();
        println!("g={g}: stoi {s} (ref {want_stoi}), estoi {e} (ref {want_estoi})");
        assert!((s - want_stoi).abs() < 1e-8, "stoi {s} vs {want_stoi}");
        assert!((e - want_estoi).abs() < 1e-8, "estoi {e} vs {want_estoi}");
    }
}
