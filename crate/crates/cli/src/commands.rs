use std::path::{Path, PathBuf};

use boneair::corpus::{build_manifest, CorpusConfig, Manifest, RecordAudio, SplitCounts};
use boneair::metrics::{
    bcm_baseline, evaluate_manifest, noisy_baseline, paired_scores, paired_t_test, Metric, MetricReport,
    SpeechSystem,
};
use boneair::models::{
    build_fcn_a, build_fcn_b, build_fcn_ef, enhance_ef, enhance_single, initialized, train_lf,
    train_model_observed, EpochStats, InputSelector, LfEvaluation, LfSystem, ModelSystem, TrainHistory, FCN_A,
    FCN_B, FCN_EF, FCN_LF,
};
use boneair::neural::{load_checkpoint, save_checkpoint, FcnModel};
use boneair::signal_io::{export_csv, read_wav, to_pcm_grid, write_wav};
use boneair::Waveform;

use crate::failure::Failure;
use crate::settings::{
    required, write_run_json, Arch, EnhanceSettings, EvaluateSettings, SynthSettings, TrainSettings, TtestSettings,
};

pub const RUN_FILE: &str = "run.json";

fn write_text(path: &Path, text: &str) -> Result<(), Failure> {
    std::fs::write(path, text).map_err(|e| Failure::io(path, e))
}

pub fn synth(s: &SynthSettings) -> Result<(), Failure> {
    let out = required(&s.out_dir, "out_dir")?;
    let cfg = CorpusConfig {
        seed: s.seed,
        counts: SplitCounts {
            train: s.train,
            validation: s.val,
            test: s.test,
        },
        utterance_duration_s: s.duration_s,
        bcm_cutoff_hz: s.bcm_cutoff_hz,
        bcm_order: s.bcm_order,
        ..CorpusConfig::default()
    };
    let manifest = build_manifest(out, &cfg)?;
    write_run_json(&out.join(RUN_FILE), "synth", s)?;
    let r = manifest.meta.records;
    eprintln!(
        "wrote {} records ({} train, {} validation, {} test) to {}",
        manifest.records.len(),
        r.train,
        r.validation,
        r.test,
        out.display()
    );
    Ok(())
}

fn progress(label: &str) -> impl FnMut(&EpochStats) + '_ {
    move |e| eprintln!("{label} epoch {} train {:.6} val {:.6}", e.epoch, e.train_mse, e.val_mse)
}

fn write_history(path: &Path, h: &TrainHistory) -> Result<(), Failure> {
    write_text(path, &h.to_csv())
}

pub fn train(s: &TrainSettings) -> Result<(), Failure> {
    let arch = *required(&s.arch, "arch")?;
    let manifest = Manifest::load(required(&s.manifest, "manifest")?)?;
    let out = required(&s.out, "out")?;
    if s.fine_tune && arch != Arch::Lf {
        return Err(Failure::usage("--fine-tune applies to --arch lf only"));
    }
    std::fs::create_dir_all(out).map_err(|e| Failure::io(out, e))?;
    let hyper = &s.hyper;
    let single = |model: FcnModel, selector: InputSelector, file: &str| -> Result<(), Failure> {
        let model = initialized(model, hyper.seed);
        let label = model.name.clone();
        let (best, history) = train_model_observed(model, &manifest, selector, hyper, &mut progress(&label))?;
        save_checkpoint(&best, out.join(format!("{file}.ckpt")))?;
        write_history(&out.join("history.csv"), &history)
    };
    match arch {
        Arch::FcnA => single(build_fcn_a(), InputSelector::NoisyAcm, "fcn_a")?,
        Arch::FcnB => single(build_fcn_b(), InputSelector::Bcm, "fcn_b")?,
        Arch::FcnEf => single(build_fcn_ef(), InputSelector::Stacked, "fcn_ef")?,
        Arch::Lf => {
            let (sys, h) = train_lf(LfSystem::initialized(hyper.seed), &manifest, hyper, hyper, hyper, s.fine_tune)?;
            sys.save(out)?;
            let stages = [
                ("fcn_a", h.fcn_a.as_ref()),
                ("fcn_b", h.fcn_b.as_ref()),
                ("fusion", Some(&h.fusion)),
                ("fine_tune", h.fine_tune.as_ref()),
            ];
            for (name, hist) in stages {
                if let Some(hist) = hist {
                    write_history(&out.join(format!("history_{name}.csv")), hist)?;
                }
            }
        }
    }
    write_run_json(&out.join(RUN_FILE), "train", s)
}

/// A trained enhancement system loaded from disk.
enum Loaded {
    Single(FcnModel),
    Lf(Box<LfSystem>),
}

impl Loaded {
    fn open(path: &Path) -> Result<Self, Failure> {
        let is_lf = path.is_dir() || path.extension().is_some_and(|e| e.eq_ignore_ascii_case("json"));
        Ok(if is_lf {
            Loaded::Lf(Box::new(LfSystem::load(path)?))
        } else {
            Loaded::Single(load_checkpoint(path)?)
        })
    }

    fn single_input(model: &FcnModel) -> InputSelector {
        match (model.in_channels(), model.name.as_str()) {
            (2, _) => InputSelector::Stacked,
            (_, FCN_B) => InputSelector::Bcm,
            _ => InputSelector::NoisyAcm,
        }
    }
}

fn modality_error(what: &str, rule: &str) -> Failure {
    Failure::usage(format!("{what} {rule}"))
}

pub fn enhance(s: &EnhanceSettings) -> Result<(), Failure> {
    let system = Loaded::open(required(&s.system, "system")?)?;
    let out = required(&s.out, "out")?;
    let acm = s.in_acm.as_deref().map(read_wav).transpose()?;
    let bcm = s.in_bcm.as_deref().map(read_wav).transpose()?;
    if let (Some(a), Some(b)) = (&acm, &bcm) {
        if a.len() != b.len() {
            return Err(Failure::usage(format!(
                "--in-acm has {} samples but --in-bcm has {}",
                a.len(),
                b.len()
            )));
        }
    }
    let y = match &system {
        Loaded::Lf(sys) => match (&acm, &bcm) {
            (Some(a), Some(b)) => sys.enhance(a, b)?.0,
            _ => return Err(modality_error("a late-fusion system", "needs both --in-acm and --in-bcm")),
        },
        Loaded::Single(model) => match (Loaded::single_input(model), &acm, &bcm) {
            (InputSelector::Stacked, Some(a), Some(b)) => enhance_ef(model, a, b)?,
            (InputSelector::Stacked, _, _) => {
                return Err(modality_error(&model.name, "needs both --in-acm and --in-bcm"))
            }
            (InputSelector::NoisyAcm, Some(a), None) => enhance_single(model, a)?,
            (InputSelector::NoisyAcm, _, _) => {
                return Err(modality_error(&model.name, "takes --in-acm only"))
            }
            (InputSelector::Bcm, None, Some(b)) => enhance_single(model, b)?,
            (InputSelector::Bcm, _, _) => return Err(modality_error(&model.name, "takes --in-bcm only")),
        },
    };
    let y = to_pcm_grid(&y);
    if let Some(parent) = out.parent().filter(|p| !p.as_os_str().is_empty()) {
        std::fs::create_dir_all(parent).map_err(|e| Failure::io(parent, e))?;
    }
    write_wav(out, &y)?;
    if s.csv {
        export_csv(&y, out.with_extension("csv"))?;
    }
    write_run_json(&out.with_extension(RUN_FILE), "enhance", s)
}

/// Scores a wrapped system on the 16-bit grid it would be saved with.
struct OnPcmGrid<S>(S);

impl<S: SpeechSystem> SpeechSystem for OnPcmGrid<S> {
    fn output_names(&self) -> Vec<String> {
        self.0.output_names()
    }

    fn process(&self, audio: &RecordAudio) -> boneair::Result<Vec<Waveform>> {
        Ok(self.0.process(audio)?.iter().map(to_pcm_grid).collect())
    }
}

/// Precomputed outputs, read as `{dir}/{record id}.wav`.
struct WavDir {
    name: String,
    dir: PathBuf,
}

impl SpeechSystem for WavDir {
    fn output_names(&self) -> Vec<String> {
        vec![self.name.clone()]
    }

    fn process(&self, audio: &RecordAudio) -> boneair::Result<Vec<Waveform>> {
        Ok(vec![read_wav(self.dir.join(format!("{}.wav", audio.id)))?])
    }
}

enum SystemSpec {
    Noisy,
    Bcm,
    Model { name: &'static str, arch: Arch, path: PathBuf },
    Wav { name: String, dir: PathBuf },
}

fn parse_system(spec: &str) -> Result<SystemSpec, Failure> {
    let spec = spec.trim();
    if let Some(rest) = spec.strip_prefix("wav:") {
        let (name, dir) = rest
            .split_once('=')
            .filter(|(n, d)| !n.is_empty() && !d.is_empty())
            .ok_or_else(|| Failure::usage(format!("expected wav:NAME=DIR, got {spec:?}")))?;
        return Ok(SystemSpec::Wav {
            name: name.into(),
            dir: dir.into(),
        });
    }
    let (kind, path) = match spec.split_once('=') {
        Some((k, p)) => (k, Some(PathBuf::from(p))),
        None => (spec, None),
    };
    let model = |name, arch| match &path {
        Some(p) => Ok(SystemSpec::Model {
            name,
            arch,
            path: p.clone(),
        }),
        None => Err(Failure::usage(format!("system {kind} needs a path: {kind}=PATH"))),
    };
    match (kind, &path) {
        ("noisy", None) => Ok(SystemSpec::Noisy),
        ("bcm", None) => Ok(SystemSpec::Bcm),
        ("fcn_a", _) => model(FCN_A, Arch::FcnA),
        ("fcn_b", _) => model(FCN_B, Arch::FcnB),
        ("fcn_ef", _) => model(FCN_EF, Arch::FcnEf),
        ("lf", _) => model(FCN_LF, Arch::Lf),
        _ => Err(Failure::usage(format!("unknown system {spec:?}"))),
    }
}

/// Owns whatever the evaluated systems borrow.
enum Subject {
    Model(FcnModel, &'static str, InputSelector),
    Lf(Box<LfSystem>),
}

fn load_subject(name: &'static str, arch: Arch, path: &Path) -> Result<Subject, Failure> {
    let (selector, expect_in) = match arch {
        Arch::FcnA => (InputSelector::NoisyAcm, 1),
        Arch::FcnB => (InputSelector::Bcm, 1),
        Arch::FcnEf => (InputSelector::Stacked, 2),
        Arch::Lf => return Ok(Subject::Lf(Box::new(LfSystem::load(path)?))),
    };
    let model = load_checkpoint(path)?;
    if model.in_channels() != expect_in || model.out_channels() != 1 {
        return Err(Failure::usage(format!(
            "{} maps {} channel(s) to {}, expected {expect_in} to 1 for {name}",
            path.display(),
            model.in_channels(),
            model.out_channels()
        )));
    }
    Ok(Subject::Model(model, name, selector))
}

pub fn evaluate(s: &EvaluateSettings) -> Result<(), Failure> {
    let specs = s
        .systems
        .iter()
        .map(|x| parse_system(x))
        .collect::<Result<Vec<_>, _>>()?;
    if specs.is_empty() {
        return Err(Failure::usage("--systems lists no systems"));
    }
    let manifest = Manifest::load(required(&s.manifest, "manifest")?)?;
    let out = required(&s.out, "out")?;
    let pesq = s
        .external_pesq
        .as_deref()
        .map(|p| std::fs::read_to_string(p).map_err(|e| Failure::io(p, e)))
        .transpose()?;

    let mut subjects = Vec::new();
    for spec in &specs {
        if let SystemSpec::Model { name, arch, path } = spec {
            subjects.push(load_subject(name, *arch, path)?);
        }
    }
    let mut boxed: Vec<Box<dyn SpeechSystem + '_>> = Vec::new();
    let mut loaded = subjects.iter();
    for spec in specs {
        match spec {
            SystemSpec::Noisy => boxed.push(Box::new(noisy_baseline())),
            SystemSpec::Bcm => boxed.push(Box::new(bcm_baseline())),
            SystemSpec::Wav { name, dir } => boxed.push(Box::new(WavDir { name, dir })),
            SystemSpec::Model { .. } => match loaded.next().expect("one subject per model spec") {
                Subject::Model(model, name, input) => boxed.push(Box::new(OnPcmGrid(ModelSystem {
                    name: (*name).into(),
                    model,
                    input: *input,
                }))),
                Subject::Lf(sys) => boxed.push(Box::new(OnPcmGrid(LfEvaluation::new(sys)))),
            },
        }
    }
    let refs: Vec<&dyn SpeechSystem> = boxed.iter().map(|b| b.as_ref()).collect();
    let mut report = evaluate_manifest(&manifest, &refs, s.split)?;
    if let Some(text) = pesq {
        report.merge_pesq(&text)?;
    }
    report.write(out)?;
    write_run_json(&out.join(RUN_FILE), "evaluate", s)?;
    print!("{}", report.to_markdown());
    Ok(())
}

fn only_system(report: &MetricReport, path: &Path, flag: &str) -> Result<String, Failure> {
    let present: Vec<&String> = report
        .systems
        .iter()
        .filter(|s| report.rows_for(s).next().is_some())
        .collect();
    match present.as_slice() {
        [one] => Ok((*one).clone()),
        _ => Err(Failure::usage(format!(
            "{} holds {} systems; choose one with --{flag}",
            path.display(),
            present.len()
        ))),
    }
}

pub fn ttest(s: &TtestSettings) -> Result<(), Failure> {
    let path_a = required(&s.rows_a, "rows-a")?;
    let path_b = required(&s.rows_b, "rows-b")?;
    let metric: Metric = s.column.parse()?;
    let a = MetricReport::read_csv(path_a)?;
    let b = MetricReport::read_csv(path_b)?;
    let sys_a = match &s.system_a {
        Some(x) => x.clone(),
        None => only_system(&a, path_a, "system-a")?,
    };
    let sys_b = match &s.system_b {
        Some(x) => x.clone(),
        None => only_system(&b, path_b, "system-b")?,
    };
    let (xs, ys) = paired_scores(&a, &sys_a, &b, &sys_b, metric)?;
    if xs.is_empty() {
        return Err(Failure::usage(format!("no {} scores to compare", s.column)));
    }
    let result = paired_t_test(&xs, &ys)?;
    let json = serde_json::to_string_pretty(&result).map_err(|e| Failure::usage(e.to_string()))?;
    println!("{json}");
    if let Some(out) = &s.out {
        if let Some(parent) = out.parent().filter(|p| !p.as_os_str().is_empty()) {
            std::fs::create_dir_all(parent).map_err(|e| Failure::io(parent, e))?;
        }
        write_text(out, &format!("{json}\n"))?;
        write_run_json(&out.with_extension(RUN_FILE), "ttest", s)?;
    }
    Ok(())
}
