//! Network architectures, early- and late-fusion pipelines, and training.

mod arch;
mod enhance;
mod lf;
mod passthrough;
mod train;

pub use arch::{
    build_fcn_a, build_fcn_b, build_fcn_ef, build_fusion, initialized, param_count, FCN_A, FCN_B, FCN_EF, FCN_FUSION,
    FCN_LF,
};
pub use enhance::{enhance_ef, enhance_single, norm_gain, run_normalized, InputSelector, NORM_PEAK};
pub use lf::{
    enhance_lf, fine_tune_lf, fusion_dataset, passthrough_fusion, train_fusion_stage, train_lf, train_lf_fusion_only,
    warm_start_fusion, LfEvaluation, LfHistory, LfSystem, ModelSystem, DESCRIPTOR_FILE,
};
pub use passthrough::{passthrough, warm_start_passthrough, warm_started};
pub use train::{
    select_records, train_model, train_model_observed, train_on, train_on_observed, validation_mse, Dataset,
    EpochStats, Example, TrainConfig, TrainHistory,
};
