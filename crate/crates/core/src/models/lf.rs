//! Late fusion: two single-modality models whose waveform outputs are
//! stacked and refined by a compact fusion model.

use std::path::{Path, PathBuf};

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::arch::{build_fcn_a, build_fcn_b, build_fusion, initialized, FCN_A, FCN_B, FCN_LF};
use super::enhance::{norm_gain, run_normalized, InputSelector};
use super::passthrough::{passthrough, warm_start_passthrough};
use super::train::{select_records, train_model, Dataset, EpochStats, Example, TrainConfig, TrainHistory};
use crate::corpus::{Manifest, RecordAudio, Split};
use crate::error::{Error, Result};
use crate::metrics::SpeechSystem;
use crate::neural::{
    adam_step, load_checkpoint, mse, mse_loss, save_checkpoint, Activation, AdamConfig, AdamState, FcnModel,
    ModelGrads, SignalTensor,
};
use crate::rng;
use crate::signal_io::Waveform;

#[derive(Debug, Clone, PartialEq)]
pub struct LfSystem {
    pub fcn_a: FcnModel,
    pub fcn_b: FcnModel,
    pub fusion: FcnModel,
    pub pretrained_a: bool,
    pub pretrained_b: bool,
    pub fused: bool,
    pub fine_tuned: bool,
}

const DESCRIPTOR_FORMAT: &str = "boneair-lf";
pub const DESCRIPTOR_FILE: &str = "lf.json";

#[derive(Debug, Serialize, Deserialize)]
struct Descriptor {
    format: String,
    version: u32,
    fcn_a: PathBuf,
    fcn_b: PathBuf,
    fusion: PathBuf,
    pretrained_a: bool,
    pretrained_b: bool,
    fused: bool,
    #[serde(default)]
    fine_tuned: bool,
}

impl LfSystem {
    pub fn new(fcn_a: FcnModel, fcn_b: FcnModel, fusion: FcnModel) -> Result<Self> {
        for (m, want_in) in [(&fcn_a, 1), (&fcn_b, 1), (&fusion, 2)] {
            if m.in_channels() != want_in || m.out_channels() != 1 {
                return Err(Error::Config(format!(
                    "{} must map {want_in} channel(s) to 1, it maps {} to {}",
                    m.name,
                    m.in_channels(),
                    m.out_channels()
                )));
            }
        }
        Ok(Self {
            fcn_a,
            fcn_b,
            fusion,
            pretrained_a: false,
            pretrained_b: false,
            fused: false,
            fine_tuned: false,
        })
    }

    /// The full-size architectures with seeded random parameters; the
    /// fusion model starts from [`warm_start_fusion`].
    pub fn initialized(seed: u64) -> Self {
        let mut fusion = initialized(build_fusion(), seed);
        warm_start_fusion(&mut fusion).expect("fusion layout supports pass-through");
        Self::new(initialized(build_fcn_a(), seed), initialized(build_fcn_b(), seed), fusion)
            .expect("static architectures are compatible")
    }

    /// Stage-1 outputs `(s_a, s_b)`.
    pub fn stage_one(&self, x_a: &[f64], x_b: &[f64]) -> Result<(Vec<f64>, Vec<f64>)> {
        if x_a.len() != x_b.len() {
            return Err(Error::Shape(format!("ACM has {} samples, BCM has {}", x_a.len(), x_b.len())));
        }
        Ok((run_normalized(&self.fcn_a, &[x_a])?, run_normalized(&self.fcn_b, &[x_b])?))
    }

    /// `(s_lf, s_a, s_b)`.
    pub fn enhance(&self, x_a: &Waveform, x_b: &Waveform) -> Result<(Waveform, Waveform, Waveform)> {
        let (s_a, s_b) = self.stage_one(&x_a.samples, &x_b.samples)?;
        let s_lf = run_normalized(&self.fusion, &[&s_a, &s_b])?;
        let w = |samples| Waveform {
            samples,
            sample_rate_hz: x_a.sample_rate_hz,
        };
        Ok((w(s_lf), w(s_a), w(s_b)))
    }

    /// Write `lf.json` and three checkpoints into `dir`; returns the
    /// descriptor path.
    pub fn save(&self, dir: impl AsRef<Path>) -> Result<PathBuf> {
        let dir = dir.as_ref();
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let d = Descriptor {
            format: DESCRIPTOR_FORMAT.into(),
            version: 1,
            fcn_a: "fcn_a.ckpt".into(),
            fcn_b: "fcn_b.ckpt".into(),
            fusion: "fusion.ckpt".into(),
            pretrained_a: self.pretrained_a,
            pretrained_b: self.pretrained_b,
            fused: self.fused,
            fine_tuned: self.fine_tuned,
        };
        save_checkpoint(&self.fcn_a, dir.join(&d.fcn_a))?;
        save_checkpoint(&self.fcn_b, dir.join(&d.fcn_b))?;
        save_checkpoint(&self.fusion, dir.join(&d.fusion))?;
        let path = dir.join(DESCRIPTOR_FILE);
        let mut text = serde_json::to_string_pretty(&d)?;
        text.push('\n');
        std::fs::write(&path, text).map_err(|e| Error::io(&path, e))?;
        Ok(path)
    }

    /// Load from a descriptor file or a directory holding `lf.json`.
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let path = if path.is_dir() { path.join(DESCRIPTOR_FILE) } else { path.to_path_buf() };
        let text = std::fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
        let d: Descriptor = serde_json::from_str(&text)?;
        if d.format != DESCRIPTOR_FORMAT || d.version != 1 {
            return Err(Error::Malformed(format!(
                "{} is not a version-1 late-fusion descriptor",
                path.display()
            )));
        }
        let base = path.parent().unwrap_or(Path::new("."));
        let resolve = |p: &Path| if p.is_absolute() { p.to_path_buf() } else { base.join(p) };
        let mut sys = Self::new(
            load_checkpoint(resolve(&d.fcn_a))?,
            load_checkpoint(resolve(&d.fcn_b))?,
            load_checkpoint(resolve(&d.fusion))?,
        )?;
        sys.pretrained_a = d.pretrained_a;
        sys.pretrained_b = d.pretrained_b;
        sys.fused = d.fused;
        sys.fine_tuned = d.fine_tuned;
        Ok(sys)
    }
}

pub fn enhance_lf(sys: &LfSystem, x_a: &Waveform, x_b: &Waveform) -> Result<(Waveform, Waveform, Waveform)> {
    sys.enhance(x_a, x_b)
}

/// Emits the fused output and both stage-1 outputs as separate systems.
pub struct LfEvaluation<'a> {
    pub system: &'a LfSystem,
    pub names: [String; 3],
}

impl<'a> LfEvaluation<'a> {
    pub fn new(system: &'a LfSystem) -> Self {
        Self {
            system,
            names: [FCN_LF.into(), FCN_A.into(), FCN_B.into()],
        }
    }
}

impl SpeechSystem for LfEvaluation<'_> {
    fn output_names(&self) -> Vec<String> {
        self.names.to_vec()
    }

    fn process(&self, audio: &RecordAudio) -> Result<Vec<Waveform>> {
        let (lf, a, b) = self.system.enhance(&audio.noisy, &audio.bcm)?;
        Ok(vec![lf, a, b])
    }
}

/// Single-model evaluation subject.
pub struct ModelSystem<'a> {
    pub name: String,
    pub model: &'a FcnModel,
    pub input: InputSelector,
}

impl SpeechSystem for ModelSystem<'_> {
    fn output_names(&self) -> Vec<String> {
        vec![self.name.clone()]
    }

    fn process(&self, audio: &RecordAudio) -> Result<Vec<Waveform>> {
        let y = run_normalized(self.model, &self.input.select(audio))?;
        Ok(vec![Waveform {
            samples: y,
            sample_rate_hz: audio.noisy.sample_rate_hz,
        }])
    }
}

fn check_passthrough_layout(fusion: &FcnModel) -> Result<()> {
    let ok = fusion.layers.len() == 2
        && fusion.layers[0].in_channels == 2
        && fusion.layers[0].out_channels >= 2
        && fusion.layers[0].activation == Activation::LeakyRelu
        && fusion.layers[1].out_channels == 1
        && fusion.layers[1].activation == Activation::Tanh;
    if ok {
        Ok(())
    } else {
        Err(Error::Config(format!(
            "{} is not a 2 -> h -> 1 leaky/tanh model with h >= 2",
            fusion.name
        )))
    }
}

/// Start the fusion model as the pass-through of `s_a` (see
/// [`warm_start_passthrough`]); hidden channels 2.. keep their layer-0
/// weights and get zero output weights.
pub fn warm_start_fusion(fusion: &mut FcnModel) -> Result<()> {
    check_passthrough_layout(fusion)?;
    warm_start_passthrough(fusion)
}

/// The exact pass-through model `tanh(s_a)`, every other parameter zero.
pub fn passthrough_fusion(fusion: FcnModel) -> Result<FcnModel> {
    check_passthrough_layout(&fusion)?;
    passthrough(fusion)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LfHistory {
    pub fcn_a: Option<TrainHistory>,
    pub fcn_b: Option<TrainHistory>,
    pub fusion: TrainHistory,
    pub fine_tune: Option<TrainHistory>,
}

/// Stage-2 examples `stack(s_a, s_b) -> clean` for the chosen records.
pub fn fusion_dataset(sys: &LfSystem, manifest: &Manifest, records: &[usize]) -> Result<Dataset> {
    let examples = records
        .par_iter()
        .map(|&i| {
            let audio = manifest.load_audio(&manifest.records[i])?;
            let (s_a, s_b) = sys.stage_one(&audio.noisy.samples, &audio.bcm.samples)?;
            Example::new(&[&s_a, &s_b], &audio.clean.samples)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(Dataset { examples })
}

/// Train the stage-2 fusion model on frozen stage-1 outputs. The stage-1
/// models are not touched.
pub fn train_fusion_stage(
    sys: &LfSystem,
    manifest: &Manifest,
    cfg: &TrainConfig,
    observer: &mut dyn FnMut(&EpochStats),
) -> Result<(FcnModel, TrainHistory)> {
    cfg.validate(&sys.fusion)?;
    let train_idx = select_records(manifest, Split::Train, cfg.train_records, cfg.seed);
    let val_idx = select_records(manifest, Split::Validation, cfg.val_records, cfg.seed);
    if train_idx.is_empty() || val_idx.is_empty() {
        return Err(Error::Config("the manifest needs training and validation records".into()));
    }
    let train = fusion_dataset(sys, manifest, &train_idx)?;
    let val = fusion_dataset(sys, manifest, &val_idx)?;
    super::train::train_on_observed(sys.fusion.clone(), &train, &val, cfg, observer)
}

/// Two-stage training, optionally followed by end-to-end fine-tuning at a
/// tenth of the fusion learning rate.
pub fn train_lf(
    mut sys: LfSystem,
    manifest: &Manifest,
    cfg_a: &TrainConfig,
    cfg_b: &TrainConfig,
    cfg_fusion: &TrainConfig,
    fine_tune: bool,
) -> Result<(LfSystem, LfHistory)> {
    let (ra, rb) = rayon::join(
        || train_model(sys.fcn_a.clone(), manifest, InputSelector::NoisyAcm, cfg_a),
        || train_model(sys.fcn_b.clone(), manifest, InputSelector::Bcm, cfg_b),
    );
    let ((fcn_a, ha), (fcn_b, hb)) = (ra?, rb?);
    sys.fcn_a = fcn_a;
    sys.fcn_b = fcn_b;
    sys.pretrained_a = true;
    sys.pretrained_b = true;

    let (fusion, hf) = train_fusion_stage(&sys, manifest, cfg_fusion, &mut |_| {})?;
    sys.fusion = fusion;
    sys.fused = true;

    let ht = if fine_tune {
        let cfg = TrainConfig {
            lr: cfg_fusion.lr / 10.0,
            ..cfg_fusion.clone()
        };
        let (tuned, h) = fine_tune_lf(sys, manifest, &cfg)?;
        sys = tuned;
        Some(h)
    } else {
        None
    };
    Ok((
        sys,
        LfHistory {
            fcn_a: Some(ha),
            fcn_b: Some(hb),
            fusion: hf,
            fine_tune: ht,
        },
    ))
}

/// A training record for end-to-end tuning, with its normalization gains
/// fixed from the current stage-1 models.
struct JointRecord {
    x_a: Vec<f64>,
    x_b: Vec<f64>,
    clean: Vec<f64>,
    g_a: f64,
    g_b: f64,
    g_f: f64,
}

struct Joint<'a> {
    sys: &'a mut LfSystem,
    adam: [AdamState; 3],
}

impl Joint<'_> {
    /// Forward and backward one segment, accumulating into `grads`.
    fn accumulate(&self, rec: &JointRecord, start: usize, len: usize, grads: &mut [ModelGrads; 3]) -> Result<f64> {
        let seg = |v: &[f64], g: f64| -> Result<SignalTensor> {
            SignalTensor::from_signal(&v[start..start + len].iter().map(|x| x * g).collect::<Vec<_>>())
        };
        let (ya, ca) = self.sys.fcn_a.forward_train(&seg(&rec.x_a, rec.g_a)?)?;
        let (yb, cb) = self.sys.fcn_b.forward_train(&seg(&rec.x_b, rec.g_b)?)?;
        let fa: Vec<f64> = ya.data().iter().map(|v| v / rec.g_a * rec.g_f).collect();
        let fb: Vec<f64> = yb.data().iter().map(|v| v / rec.g_b * rec.g_f).collect();
        let (out, cf) = self.sys.fusion.forward_train(&SignalTensor::stack(&[&fa, &fb])?)?;
        let (loss, g) = mse_loss(&out, &seg(&rec.clean, rec.g_f)?)?;
        let [ga, gb, gf] = grads;
        let gx = self.sys.fusion.backward_into(&g, &cf, gf)?;
        let to_a: Vec<f64> = gx.channel(0).iter().map(|v| v * rec.g_f / rec.g_a).collect();
        let to_b: Vec<f64> = gx.channel(1).iter().map(|v| v * rec.g_f / rec.g_b).collect();
        self.sys.fcn_a.backward_into(&SignalTensor::from_signal(&to_a)?, &ca, ga)?;
        self.sys.fcn_b.backward_into(&SignalTensor::from_signal(&to_b)?, &cb, gb)?;
        Ok(loss)
    }
}

fn lf_validation_mse(sys: &LfSystem, val: &[RecordAudio]) -> Result<f64> {
    let per: Vec<(f64, usize)> = val
        .par_iter()
        .map(|a| {
            let (lf, _, _) = sys.enhance(&a.noisy, &a.bcm)?;
            Ok((mse(&lf.samples, &a.clean.samples) * a.clean.len() as f64, a.clean.len()))
        })
        .collect::<Result<_>>()?;
    let (e, n) = per.iter().fold((0.0, 0usize), |(e, n), &(a, b)| (e + a, n + b));
    Ok(e / n as f64)
}

/// Joint training of all three models on the noisy/BCM inputs. Validation
/// scores the full pipeline on whole utterances in the waveform domain.
pub fn fine_tune_lf(mut sys: LfSystem, manifest: &Manifest, cfg: &TrainConfig) -> Result<(LfSystem, TrainHistory)> {
    for m in [&sys.fcn_a, &sys.fcn_b, &sys.fusion] {
        cfg.validate(m)?;
    }
    let train_idx = select_records(manifest, Split::Train, cfg.train_records, cfg.seed);
    let val_idx = select_records(manifest, Split::Validation, cfg.val_records, cfg.seed);
    if train_idx.is_empty() || val_idx.is_empty() {
        return Err(Error::Config("the manifest needs training and validation records".into()));
    }
    let records = train_idx
        .par_iter()
        .map(|&i| {
            let a = manifest.load_audio(&manifest.records[i])?;
            let (s_a, _) = sys.stage_one(&a.noisy.samples, &a.bcm.samples)?;
            Ok(JointRecord {
                g_a: norm_gain(&a.noisy.samples),
                g_b: norm_gain(&a.bcm.samples),
                g_f: norm_gain(&s_a),
                x_a: a.noisy.samples,
                x_b: a.bcm.samples,
                clean: a.clean.samples,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let val = val_idx
        .iter()
        .map(|&i| manifest.load_audio(&manifest.records[i]))
        .collect::<Result<Vec<_>>>()?;
    let shortest = records.iter().map(|r| r.clean.len()).min().unwrap_or(0);
    if cfg.segment_length > shortest {
        return Err(Error::Config(format!(
            "segment_length {} exceeds the shortest utterance ({shortest} samples)",
            cfg.segment_length
        )));
    }

    let initial = lf_validation_mse(&sys, &val)?;
    let mut history = TrainHistory {
        model: FCN_LF.into(),
        initial_val_mse: initial,
        epochs: Vec::new(),
        best_epoch: 0,
        best_val_mse: initial,
        stopped_early: false,
    };
    let mut best = sys.clone();
    let adam_cfg = AdamConfig {
        lr: cfg.lr,
        ..AdamConfig::default()
    };
    let adam = [
        AdamState::new(&sys.fcn_a, adam_cfg),
        AdamState::new(&sys.fcn_b, adam_cfg),
        AdamState::new(&sys.fusion, adam_cfg),
    ];
    let total: usize = records.iter().map(|r| r.clean.len()).sum();
    let steps = cfg
        .steps_per_epoch
        .unwrap_or_else(|| total.div_ceil(cfg.batch_size * cfg.segment_length).max(1));
    let mut r = rng::stream(cfg.seed, "fine-tune-segments");
    let mut joint = Joint { sys: &mut sys, adam };
    let mut since_best = 0;
    for epoch in 1..=cfg.max_epochs {
        let mut loss_sum = 0.0;
        for _ in 0..steps {
            let mut grads = [
                ModelGrads::zeros_like(&joint.sys.fcn_a),
                ModelGrads::zeros_like(&joint.sys.fcn_b),
                ModelGrads::zeros_like(&joint.sys.fusion),
            ];
            for _ in 0..cfg.batch_size {
                let rec = &records[r.random_range(0..records.len())];
                let start = r.random_range(0..=rec.clean.len() - cfg.segment_length);
                loss_sum += joint.accumulate(rec, start, cfg.segment_length, &mut grads)?;
            }
            for g in &mut grads {
                g.scale(1.0 / cfg.batch_size as f64);
            }
            let [aa, ab, af] = &mut joint.adam;
            adam_step(&mut joint.sys.fcn_a, &grads[0], aa)?;
            adam_step(&mut joint.sys.fcn_b, &grads[1], ab)?;
            adam_step(&mut joint.sys.fusion, &grads[2], af)?;
        }
        let stats = EpochStats {
            epoch,
            train_mse: loss_sum / (steps * cfg.batch_size) as f64,
            val_mse: lf_validation_mse(joint.sys, &val)?,
        };
        history.epochs.push(stats);
        if stats.val_mse < history.best_val_mse {
            history.best_val_mse = stats.val_mse;
            history.best_epoch = epoch;
            best = joint.sys.clone();
            since_best = 0;
        } else {
            since_best += 1;
            if since_best >= cfg.patience {
                history.stopped_early = epoch < cfg.max_epochs;
                break;
            }
        }
    }
    best.fine_tuned = true;
    Ok((best, history))
}

/// Train only the fusion stage of a system whose stage-1 models are
/// already trained.
pub fn train_lf_fusion_only(sys: LfSystem, manifest: &Manifest, cfg: &TrainConfig) -> Result<(LfSystem, TrainHistory)> {
    let (fusion, h) = train_fusion_stage(&sys, manifest, cfg, &mut |_| {})?;
    Ok((LfSystem { fusion, fused: true, ..sys }, h))
}
