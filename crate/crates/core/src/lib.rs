//! Time-domain speech enhancement from paired air-conducted (ACM) and
//! bone-conducted (BCM) microphone signals.
//!
//! The crate is organised bottom-up:
//!
//! * [`signal_io`] – 16 kHz mono PCM WAV and CSV waveform I/O.
//! * [`corpus`] – synthetic paired corpus: speech-like utterances, noise
//!   classes, a simulated bone-conduction channel and SNR mixing.
//! * [`neural`] – a small deterministic 1-D convolution engine with manual
//!   backpropagation, Adam and a binary checkpoint format.
//! * [`models`] – the four fully convolutional networks, the early- and
//!   late-fusion pipelines and their training loops.
//! * [`metrics`] – STOI, ESTOI, segmental SNR, paired t-test and report
//!   aggregation.

pub mod corpus;
pub mod error;
pub mod metrics;
pub mod models;
pub mod neural;
pub mod rng;
pub mod signal_io;

pub use error::{Error, Result};
pub use signal_io::{Waveform, SAMPLE_RATE};
