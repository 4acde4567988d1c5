//! Feature/label file loading, min-max normalization and a synthetic
//! stand-in corpus.
//!
//! Labels are 1-based on disk by default and always 0-based in memory.

use std::fs;
use std::path::{Path, PathBuf};

use ndarray::{Array1, Array2, ArrayView1, Axis};
use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::{Distribution, Normal};

use crate::error::{DbnError, Result};

/// The twelve activity classes, in label order.
pub const ACTIVITY_NAMES: [&str; 12] = [
    "WALKING",
    "WALKING_UPSTAIRS",
    "WALKING_DOWNSTAIRS",
    "SITTING",
    "STANDING",
    "LAYING",
    "STAND_TO_SIT",
    "SIT_TO_STAND",
    "SIT_TO_LIE",
    "LIE_TO_SIT",
    "STAND_TO_LIE",
    "LIE_TO_STAND",
];

pub const DEFAULT_FEATURES: usize = 12;

pub fn activity_names() -> Vec<String> {
    ACTIVITY_NAMES.iter().map(|s| s.to_string()).collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SplitTag {
    Train,
    Test,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LabeledDataset {
    /// `(n, d)`.
    pub features: Array2<f64>,
    /// 0-based class indices.
    pub labels: Vec<usize>,
    pub class_names: Vec<String>,
    pub split: SplitTag,
}

impl LabeledDataset {
    pub fn new(features: Array2<f64>, labels: Vec<usize>, class_names: Vec<String>, split: SplitTag) -> Result<Self> {
        if features.nrows() != labels.len() {
            return Err(DbnError::shape("label count", features.nrows(), labels.len()));
        }
        if features.iter().any(|x| !x.is_finite()) {
            return Err(DbnError::Validation("features contain NaN or infinity".into()));
        }
        if let Some(&l) = labels.iter().find(|&&l| l >= class_names.len()) {
            return Err(DbnError::Validation(format!(
                "label {l} has no class name ({} classes)",
                class_names.len()
            )));
        }
        Ok(LabeledDataset {
            features,
            labels,
            class_names,
            split,
        })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn n_features(&self) -> usize {
        self.features.ncols()
    }

    pub fn n_classes(&self) -> usize {
        self.class_names.len()
    }

    pub fn class_counts(&self) -> Vec<usize> {
        let mut counts = vec![0; self.n_classes()];
        for &l in &self.labels {
            counts[l] += 1;
        }
        counts
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Delimiter {
    Whitespace,
    Comma,
    /// Commas and/or whitespace.
    Auto,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LabelBase {
    Zero,
    One,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Schema {
    pub delimiter: Delimiter,
    pub n_features: usize,
    pub label_base: LabelBase,
    pub class_names: Vec<String>,
}

impl Default for Schema {
    fn default() -> Self {
        Schema {
            delimiter: Delimiter::Auto,
            n_features: DEFAULT_FEATURES,
            label_base: LabelBase::One,
            class_names: activity_names(),
        }
    }
}

impl Schema {
    pub fn with_features(n_features: usize) -> Self {
        Schema {
            n_features,
            ..Schema::default()
        }
    }

    fn split_line<'a>(&self, line: &'a str) -> Vec<&'a str> {
        match self.delimiter {
            Delimiter::Whitespace => line.split_whitespace().collect(),
            Delimiter::Comma => line.split(',').map(str::trim).collect(),
            Delimiter::Auto => line
                .split(|c: char| c == ',' || c.is_whitespace())
                .filter(|t| !t.is_empty())
                .collect(),
        }
    }

    fn parse_label(&self, token: &str, path: &Path, line: usize) -> Result<usize> {
        let raw: i64 = token
            .trim()
            .parse()
            .map_err(|_| parse_err(path, line, format!("label {token:?} is not an integer")))?;
        let n = self.class_names.len() as i64;
        let (lo, hi) = match self.label_base {
            LabelBase::Zero => (0, n - 1),
            LabelBase::One => (1, n),
        };
        if raw < lo || raw > hi {
            return Err(parse_err(path, line, format!("label {raw} outside [{lo}, {hi}]")));
        }
        Ok((raw - lo) as usize)
    }
}

fn parse_err(path: &Path, line: usize, message: String) -> DbnError {
    DbnError::Parse {
        path: path.to_path_buf(),
        line,
        message,
    }
}

fn read(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| DbnError::io(path, e))
}

/// Non-blank lines with their 1-based line numbers.
fn content_lines(text: &str) -> impl Iterator<Item = (usize, &str)> {
    text.lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l.trim()))
        .filter(|(_, l)| !l.is_empty())
}

fn parse_value(token: &str, path: &Path, line: usize) -> Result<f64> {
    let x: f64 = token
        .parse()
        .map_err(|_| parse_err(path, line, format!("{token:?} is not a number")))?;
    if !x.is_finite() {
        return Err(parse_err(path, line, format!("{token:?} is not finite")));
    }
    Ok(x)
}

fn parse_feature_row(schema: &Schema, tokens: &[&str], path: &Path, line: usize) -> Result<Vec<f64>> {
    if tokens.len() != schema.n_features {
        return Err(parse_err(
            path,
            line,
            format!("expected {} feature columns, found {}", schema.n_features, tokens.len()),
        ));
    }
    tokens.iter().map(|t| parse_value(t, path, line)).collect()
}

fn assemble(schema: &Schema, rows: Vec<f64>, labels: Vec<usize>, split: SplitTag) -> Result<LabeledDataset> {
    let n = labels.len();
    let features = Array2::from_shape_vec((n, schema.n_features), rows)
        .map_err(|e| DbnError::Validation(format!("feature matrix: {e}")))?;
    LabeledDataset::new(features, labels, schema.class_names.clone(), split)
}

/// Reads a feature file (one sample per line) and a label file (one integer
/// per line).
pub fn load_dataset(
    features_path: impl AsRef<Path>,
    labels_path: impl AsRef<Path>,
    schema: &Schema,
    split: SplitTag,
) -> Result<LabeledDataset> {
    let (fpath, lpath) = (features_path.as_ref(), labels_path.as_ref());
    let rows = load_features(fpath, schema)?;
    let ltext = read(lpath)?;
    let mut labels = Vec::new();
    for (line, text) in content_lines(&ltext) {
        labels.push(schema.parse_label(text, lpath, line)?);
    }
    let n = rows.len() / schema.n_features.max(1);
    if n != labels.len() {
        return Err(parse_err(
            lpath,
            labels.len(),
            format!("{} labels for {} feature rows in {}", labels.len(), n, fpath.display()),
        ));
    }
    assemble(schema, rows, labels, split)
}

/// Flat row-major feature values of an unlabeled feature file.
pub fn load_features(path: impl AsRef<Path>, schema: &Schema) -> Result<Vec<f64>> {
    let path = path.as_ref();
    let text = read(path)?;
    let mut rows = Vec::new();
    for (line, l) in content_lines(&text) {
        rows.extend(parse_feature_row(schema, &schema.split_line(l), path, line)?);
    }
    Ok(rows)
}

/// Reads an unlabeled feature file as an `(n, d)` matrix.
pub fn load_feature_matrix(path: impl AsRef<Path>, schema: &Schema) -> Result<Array2<f64>> {
    let rows = load_features(path, schema)?;
    let n = rows.len() / schema.n_features.max(1);
    Array2::from_shape_vec((n, schema.n_features), rows)
        .map_err(|e| DbnError::Validation(format!("feature matrix: {e}")))
}

/// Reads a combined CSV: `d` feature columns then a label column. A first
/// line whose leading field is not numeric is treated as a header.
pub fn load_combined_csv(path: impl AsRef<Path>, schema: &Schema, split: SplitTag) -> Result<LabeledDataset> {
    let path = path.as_ref();
    let text = read(path)?;
    let mut rows = Vec::new();
    let mut labels = Vec::new();
    for (idx, (line, l)) in content_lines(&text).enumerate() {
        let tokens = schema.split_line(l);
        if idx == 0 && tokens.first().is_some_and(|t| t.parse::<f64>().is_err()) {
            continue;
        }
        let Some((label, feats)) = tokens.split_last() else {
            continue;
        };
        rows.extend(parse_feature_row(schema, feats, path, line)?);
        labels.push(schema.parse_label(label, path, line)?);
    }
    assemble(schema, rows, labels, split)
}

/// Per-feature min/max recorded on a training split.
#[derive(Debug, Clone, PartialEq)]
pub struct Normalizer {
    pub min: Array1<f64>,
    pub max: Array1<f64>,
}

impl Normalizer {
    pub fn new(min: Array1<f64>, max: Array1<f64>) -> Result<Self> {
        if min.len() != max.len() {
            return Err(DbnError::shape("normalizer", min.len(), max.len()));
        }
        if min
            .iter()
            .zip(max.iter())
            .any(|(lo, hi)| !lo.is_finite() || !hi.is_finite() || lo > hi)
        {
            return Err(DbnError::Validation("normalizer needs finite min <= max".into()));
        }
        Ok(Normalizer { min, max })
    }

    pub fn dim(&self) -> usize {
        self.min.len()
    }

    fn scale_row(&self, mut row: ndarray::ArrayViewMut1<f64>) {
        for ((x, &lo), &hi) in row.iter_mut().zip(self.min.iter()).zip(self.max.iter()) {
            *x = if hi > lo {
                ((*x - lo) / (hi - lo)).clamp(0.0, 1.0)
            } else {
                0.5
            };
        }
    }

    /// Scales a raw feature matrix into `[0, 1]`.
    pub fn transform(&self, features: &Array2<f64>) -> Result<Array2<f64>> {
        if features.ncols() != self.dim() {
            return Err(DbnError::shape("normalizer input", self.dim(), features.ncols()));
        }
        let mut out = features.clone();
        for row in out.rows_mut() {
            self.scale_row(row);
        }
        Ok(out)
    }

    pub fn transform_row(&self, row: ArrayView1<f64>) -> Result<Array1<f64>> {
        if row.len() != self.dim() {
            return Err(DbnError::shape("normalizer input", self.dim(), row.len()));
        }
        let mut out = row.to_owned();
        self.scale_row(out.view_mut());
        Ok(out)
    }
}

pub fn fit_normalizer(train: &LabeledDataset) -> Result<Normalizer> {
    if train.split != SplitTag::Train {
        return Err(DbnError::Contract(
            "normalizer must be fitted on a training split".into(),
        ));
    }
    if train.is_empty() {
        return Err(DbnError::Validation("cannot fit a normalizer on zero rows".into()));
    }
    let min = train.features.fold_axis(Axis(0), f64::INFINITY, |&m, &x| m.min(x));
    let max = train.features.fold_axis(Axis(0), f64::NEG_INFINITY, |&m, &x| m.max(x));
    Normalizer::new(min, max)
}

/// Constant features map to 0.5; values outside the fitted range are clamped.
pub fn apply_normalizer(ds: &LabeledDataset, norm: &Normalizer) -> Result<LabeledDataset> {
    Ok(LabeledDataset {
        features: norm.transform(&ds.features)?,
        ..ds.clone()
    })
}

/// Parameters of the synthetic Gaussian-cluster corpus.
#[derive(Debug, Clone, PartialEq)]
pub struct ClusterSpec {
    pub n_classes: usize,
    pub dim: usize,
    /// Distance between the low and high level of each coordinate of a
    /// class mean.
    pub separation: f64,
    /// Standard deviation of the isotropic Gaussian noise.
    pub noise: f64,
    pub n_train: usize,
    pub n_test: usize,
}

impl ClusterSpec {
    /// Twelve classes in twelve dimensions with a 7767/3162 split. Class
    /// levels sit at 0.1 and 0.9, three noise standard deviations apart.
    pub fn har_shaped() -> Self {
        ClusterSpec {
            n_classes: 12,
            dim: 12,
            separation: 0.8,
            noise: 0.8 / 3.0,
            n_train: 7767,
            n_test: 3162,
        }
    }
}

/// Binary codewords of length `dim`, one per class, greedily chosen to keep
/// pairwise Hamming distances large.
fn codebook<R: Rng + ?Sized>(n_classes: usize, dim: usize, rng: &mut R) -> Vec<Vec<bool>> {
    let mut target = dim.div_ceil(2).max(1);
    loop {
        let mut codes: Vec<Vec<bool>> = Vec::with_capacity(n_classes);
        for _ in 0..2000 {
            if codes.len() == n_classes {
                break;
            }
            let cand: Vec<bool> = (0..dim).map(|_| rng.random()).collect();
            let ok = codes
                .iter()
                .all(|c| c.iter().zip(&cand).filter(|(x, y)| x != y).count() >= target);
            if ok {
                codes.push(cand);
            }
        }
        if codes.len() == n_classes {
            return codes;
        }
        target -= 1;
    }
}

/// Gaussian clusters clipped to `[0, 1]`, one per class, with balanced
/// classes and shuffled row order. Train and test share the class means.
pub fn synth_dataset<R: Rng + ?Sized>(spec: &ClusterSpec, rng: &mut R) -> Result<(LabeledDataset, LabeledDataset)> {
    if spec.n_classes == 0 || spec.dim == 0 || spec.n_train == 0 || spec.n_test == 0 {
        return Err(DbnError::Validation(format!(
            "cluster sizes must be positive: {spec:?}"
        )));
    }
    if spec.dim < 64 && (1u64 << spec.dim) < spec.n_classes as u64 {
        return Err(DbnError::Validation(format!(
            "{} dimensions cannot hold {} distinct class means",
            spec.dim, spec.n_classes
        )));
    }
    if !(spec.noise >= 0.0 && spec.noise.is_finite() && spec.separation.is_finite()) {
        return Err(DbnError::Validation(
            "noise and separation must be finite, noise non-negative".into(),
        ));
    }
    let means: Vec<Vec<f64>> = codebook(spec.n_classes, spec.dim, rng)
        .into_iter()
        .map(|code| {
            code.into_iter()
                .map(|bit| 0.5 + if bit { 0.5 } else { -0.5 } * spec.separation)
                .map(|x| x.clamp(0.0, 1.0))
                .collect()
        })
        .collect();
    let noise = Normal::new(0.0, spec.noise).expect("validated noise");
    let names: Vec<String> = if spec.n_classes == ACTIVITY_NAMES.len() {
        activity_names()
    } else {
        (0..spec.n_classes).map(|k| format!("CLASS_{}", k + 1)).collect()
    };

    let draw = |n: usize, split: SplitTag, rng: &mut R| {
        let mut labels: Vec<usize> = (0..n).map(|i| i % spec.n_classes).collect();
        labels.shuffle(rng);
        let mut features = Array2::zeros((n, spec.dim));
        for (mut row, &l) in features.rows_mut().into_iter().zip(&labels) {
            for (x, &mu) in row.iter_mut().zip(&means[l]) {
                let eps = if spec.noise > 0.0 { noise.sample(rng) } else { 0.0 };
                *x = (mu + eps).clamp(0.0, 1.0);
            }
        }
        LabeledDataset::new(features, labels, names.clone(), split)
    };
    let train = draw(spec.n_train, SplitTag::Train, rng)?;
    let test = draw(spec.n_test, SplitTag::Test, rng)?;
    Ok((train, test))
}

/// Standard file names inside a dataset directory.
#[derive(Debug, Clone)]
pub struct DatasetFiles {
    pub train_features: PathBuf,
    pub train_labels: PathBuf,
    pub test_features: PathBuf,
    pub test_labels: PathBuf,
}

impl DatasetFiles {
    /// `X_train.txt`, `y_train.txt`, `X_test.txt`, `y_test.txt` under `dir`.
    pub fn in_dir(dir: impl AsRef<Path>) -> Self {
        let d = dir.as_ref();
        DatasetFiles {
            train_features: d.join("X_train.txt"),
            train_labels: d.join("y_train.txt"),
            test_features: d.join("X_test.txt"),
            test_labels: d.join("y_test.txt"),
        }
    }

    pub fn all_exist(&self) -> bool {
        [
            &self.train_features,
            &self.train_labels,
            &self.test_features,
            &self.test_labels,
        ]
        .iter()
        .all(|p| p.is_file())
    }
}
