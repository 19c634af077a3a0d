//! Objective intelligibility and distortion measures, the matched-pair
//! t-test, and report aggregation.

mod report;
mod resample;
mod segsnr;
mod stoi;
mod ttest;

pub use report::{
    bcm_baseline, evaluate_manifest, noisy_baseline, paired_scores, system, Aggregate, FnSystem, Metric, MetricReport,
    MetricRow, SpeechSystem, BCM_BASELINE, NOISY_BASELINE,
};
pub use resample::resample;
pub use segsnr::seg_snr;
pub use stoi::{estoi, stoi, SEGMENT_FRAMES, STOI_RATE_HZ};
pub use ttest::{beta_reg, ln_gamma, paired_t_test, student_t_two_tailed, TTestResult};
