//! Train, evaluate and predict commands.

use std::fmt::Write as _;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::Instant;

use beliefnet_core::data::{
    apply_normalizer, fit_normalizer, load_dataset, load_feature_matrix, synth_dataset, ClusterSpec, Schema,
};
use beliefnet_core::dbn::{features, greedy_pretrain_with};
use beliefnet_core::eval::{percent, render_report, score};
use beliefnet_core::head::{fine_tune, predict_proba_batch, train_head};
use beliefnet_core::rng::{streams, substream};
use beliefnet_core::{
    DbnError, EvalReport, LabeledDataset, Preset, PropagationMode, Result, SoftmaxHead, SplitTag, TrainConfig,
};
use ndarray::{Array2, ArrayView2};

use crate::model_file::ModelFile;

/// Where training data comes from.
#[derive(Debug, Clone, PartialEq)]
pub enum DataSource {
    Files {
        train_features: PathBuf,
        train_labels: PathBuf,
        test: Option<(PathBuf, PathBuf)>,
        n_features: usize,
    },
    /// Twelve-class Gaussian clusters shaped like the activity dataset.
    Synthetic(ClusterSpec),
}

/// Optional overrides applied on top of a preset.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Overrides {
    pub layers: Option<Vec<usize>>,
    pub epochs: Option<usize>,
    pub cd_k: Option<usize>,
    pub learning_rate: Option<f64>,
    pub momentum: Option<f64>,
    pub batch_size: Option<usize>,
    pub seed: Option<u64>,
    pub fine_tune: bool,
    pub fine_tune_epochs: Option<usize>,
    pub head_epochs: Option<usize>,
}

impl Overrides {
    pub fn apply(&self, mut cfg: TrainConfig) -> TrainConfig {
        if let Some(l) = &self.layers {
            cfg.layer_sizes = l.clone();
        }
        macro_rules! set {
            ($field:ident, $src:ident) => {
                if let Some(v) = self.$src {
                    cfg.$field = v;
                }
            };
        }
        set!(epochs, epochs);
        set!(cd_k, cd_k);
        set!(learning_rate, learning_rate);
        set!(momentum, momentum);
        set!(batch_size, batch_size);
        set!(seed, seed);
        set!(fine_tune_epochs, fine_tune_epochs);
        set!(head_epochs, head_epochs);
        cfg.fine_tune |= self.fine_tune;
        cfg
    }
}

#[derive(Debug, Clone)]
pub struct TrainArgs {
    pub source: DataSource,
    pub preset: Preset,
    pub overrides: Overrides,
    pub out: PathBuf,
    pub export_text: bool,
}

#[derive(Debug, Clone)]
pub struct TrainSummary {
    pub config: TrainConfig,
    pub model: ModelFile,
    pub train_report: EvalReport,
    pub test_report: Option<EvalReport>,
    pub model_path: PathBuf,
    pub log_path: PathBuf,
    pub text_path: Option<PathBuf>,
}

/// Sibling path with an extra extension, e.g. `model.dbn` -> `model.dbn.log`.
pub fn sibling(path: &Path, ext: &str) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(".");
    s.push(ext);
    PathBuf::from(s)
}

fn io_err(path: &Path, e: std::io::Error) -> DbnError {
    DbnError::Io {
        path: path.to_path_buf(),
        source: e,
    }
}

/// Full pipeline: normalize, pretrain, fit the head, optionally fine-tune,
/// then save the model and its training log.
///
/// Every random draw comes from a substream of `config.seed`, so the same
/// arguments always produce the same model file.
pub fn train(args: &TrainArgs, out: &mut dyn Write) -> Result<TrainSummary> {
    let cfg = args.overrides.apply(args.preset.config());
    cfg.validate()?;
    if args.preset.is_long_running() {
        eprintln!("warning: the paper-large preset is long-running (hours on a single core)");
    }
    let started = Instant::now();
    let (train_raw, test_raw) = load_source(&args.source, cfg.seed)?;
    let norm = fit_normalizer(&train_raw)?;
    let train = apply_normalizer(&train_raw, &norm)?;
    let test = test_raw.map(|t| apply_normalizer(&t, &norm)).transpose()?;

    let mut sizes = vec![train.n_features()];
    sizes.extend(&cfg.layer_sizes);
    let mut log = String::new();
    writeln!(log, "config {cfg:?}").unwrap();
    writeln!(
        log,
        "samples train={} test={}",
        train.len(),
        test.as_ref().map_or(0, |t| t.len())
    )
    .unwrap();

    let pre = greedy_pretrain_with(
        train.features.view(),
        &sizes,
        &cfg,
        PropagationMode::MeanField,
        &mut substream(cfg.seed, streams::PRETRAIN),
    )?;
    for (k, trace) in pre.recon_traces.iter().enumerate() {
        for (e, r) in trace.iter().enumerate() {
            writeln!(log, "pretrain layer={} epoch={} recon_error={r}", k + 1, e + 1).unwrap();
        }
    }

    let top = features(train.features.view(), &pre.stack)?;
    let head0 = SoftmaxHead::zeros(pre.stack.top_size(), train.n_classes());
    let fitted = train_head(
        top.view(),
        &train.labels,
        head0,
        &cfg,
        &mut substream(cfg.seed, streams::HEAD),
    )?;
    for (e, l) in fitted.loss_trace.iter().enumerate() {
        writeln!(log, "head epoch={} loss={l}", e + 1).unwrap();
    }
    let mut stack = pre.stack.with_head(fitted.head)?;

    if cfg.fine_tune {
        let tuned = fine_tune(
            stack,
            train.features.view(),
            &train.labels,
            &cfg,
            &mut substream(cfg.seed, streams::FINE_TUNE),
        )?;
        for (e, l) in tuned.loss_trace.iter().enumerate() {
            writeln!(log, "fine_tune epoch={} loss={l}", e + 1).unwrap();
        }
        stack = tuned.stack;
    }

    let model = ModelFile::new(stack, norm, train.class_names.clone())?;
    let train_report = evaluate_normalized(&model, &train)?;
    let test_report = test.as_ref().map(|t| evaluate_normalized(&model, t)).transpose()?;
    writeln!(
        log,
        "train accuracy={} error={}",
        train_report.accuracy, train_report.error_rate
    )
    .unwrap();
    if let Some(r) = &test_report {
        writeln!(log, "test accuracy={} error={}", r.accuracy, r.error_rate).unwrap();
    }

    model.save(&args.out)?;
    let log_path = sibling(&args.out, "log");
    fs::write(&log_path, log).map_err(|e| io_err(&log_path, e))?;
    let text_path = if args.export_text {
        let p = sibling(&args.out, "txt");
        fs::write(&p, model.to_text()).map_err(|e| io_err(&p, e))?;
        Some(p)
    } else {
        None
    };

    let w = |e| io_err(Path::new("<stdout>"), e);
    writeln!(out, "layers {:?}", model.stack.layer_sizes()).map_err(w)?;
    writeln!(
        out,
        "train accuracy {} error {}",
        percent(train_report.accuracy),
        percent(train_report.error_rate)
    )
    .map_err(w)?;
    if let Some(r) = &test_report {
        writeln!(
            out,
            "test accuracy {} error {}",
            percent(r.accuracy),
            percent(r.error_rate)
        )
        .map_err(w)?;
    }
    writeln!(out, "model written to {}", args.out.display()).map_err(w)?;
    writeln!(out, "elapsed {:.2?}", started.elapsed()).map_err(w)?;

    Ok(TrainSummary {
        config: cfg,
        model,
        train_report,
        test_report,
        model_path: args.out.clone(),
        log_path,
        text_path,
    })
}

fn load_source(source: &DataSource, seed: u64) -> Result<(LabeledDataset, Option<LabeledDataset>)> {
    match source {
        DataSource::Files {
            train_features,
            train_labels,
            test,
            n_features,
        } => {
            let schema = Schema::with_features(*n_features);
            let train = load_dataset(train_features, train_labels, &schema, SplitTag::Train)?;
            let test = test
                .as_ref()
                .map(|(f, l)| load_dataset(f, l, &schema, SplitTag::Test))
                .transpose()?;
            Ok((train, test))
        }
        DataSource::Synthetic(spec) => {
            let (train, test) = synth_dataset(spec, &mut substream(seed, streams::SYNTH))?;
            Ok((train, Some(test)))
        }
    }
}

/// Class probabilities for already-normalized features.
pub fn probabilities(model: &ModelFile, normalized: ArrayView2<f64>) -> Result<Array2<f64>> {
    let top = features(normalized, &model.stack)?;
    predict_proba_batch(top.view(), model.head())
}

fn evaluate_normalized(model: &ModelFile, ds: &LabeledDataset) -> Result<EvalReport> {
    let probs = probabilities(model, ds.features.view())?;
    score(probs.view(), &ds.labels, &model.class_names)
}

fn schema_for(model: &ModelFile) -> Schema {
    let mut schema = Schema::with_features(model.stack.input_size());
    schema.class_names = model.class_names.clone();
    schema
}

/// Scores a labeled test set and writes metrics, confusion matrix and ROC
/// files into `out_dir`.
pub fn evaluate(
    model_path: &Path,
    features_path: &Path,
    labels_path: &Path,
    out_dir: &Path,
    out: &mut dyn Write,
) -> Result<EvalReport> {
    let model = ModelFile::load(model_path)?;
    let raw = load_dataset(features_path, labels_path, &schema_for(&model), SplitTag::Test)?;
    let ds = apply_normalizer(&raw, &model.normalizer)?;
    let report = evaluate_normalized(&model, &ds)?;
    fs::create_dir_all(out_dir).map_err(|e| io_err(out_dir, e))?;
    let files = render_report(&report, out_dir)?;

    let w = |e| io_err(Path::new("<stdout>"), e);
    writeln!(out, "samples {}", report.n_samples()).map_err(w)?;
    writeln!(out, "accuracy {}", percent(report.accuracy)).map_err(w)?;
    writeln!(out, "error {}", percent(report.error_rate)).map_err(w)?;
    for (name, auc) in report.class_names.iter().zip(&report.auc) {
        writeln!(out, "auc {name} {auc:.4}").map_err(w)?;
    }
    writeln!(out, "wrote {} files to {}", files.len(), out_dir.display()).map_err(w)?;
    Ok(report)
}

/// One line per sample: predicted class name, then every class probability.
pub fn predict(model_path: &Path, features_path: &Path, out: &mut dyn Write) -> Result<Array2<f64>> {
    let model = ModelFile::load(model_path)?;
    let raw = load_feature_matrix(features_path, &schema_for(&model))?;
    let x = model.normalizer.transform(&raw)?;
    let probs = probabilities(&model, x.view())?;
    let w = |e| io_err(Path::new("<stdout>"), e);
    for row in probs.rows() {
        let k = beliefnet_core::eval::argmax(row);
        let ps: Vec<String> = row.iter().map(f64::to_string).collect();
        writeln!(out, "{} {}", model.class_names[k], ps.join(" ")).map_err(w)?;
    }
    Ok(probs)
}
