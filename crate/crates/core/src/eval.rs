//! Classification metrics: accuracy, confusion matrix and one-vs-rest ROC.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use ndarray::{Array2, ArrayView1, ArrayView2};

use crate::error::{DbnError, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct EvalReport {
    pub accuracy: f64,
    pub error_rate: f64,
    /// Rows are true classes, columns predicted classes.
    pub confusion: Array2<u64>,
    /// Per class, `(false positive rate, true positive rate)` from `(0, 0)`
    /// to `(1, 1)`.
    pub roc: Vec<Vec<(f64, f64)>>,
    pub auc: Vec<f64>,
    pub class_names: Vec<String>,
}

impl EvalReport {
    pub fn n_samples(&self) -> u64 {
        self.confusion.sum()
    }

    /// Accuracy recomputed from the confusion-matrix trace.
    pub fn trace_accuracy(&self) -> f64 {
        let trace: u64 = (0..self.confusion.nrows()).map(|k| self.confusion[[k, k]]).sum();
        trace as f64 / self.n_samples() as f64
    }
}

/// Index of the largest entry; ties go to the lowest index.
pub fn argmax(row: ArrayView1<f64>) -> usize {
    let mut best = 0;
    for (j, &x) in row.iter().enumerate().skip(1) {
        if x > row[best] {
            best = j;
        }
    }
    best
}

/// One-vs-rest ROC curve of `scores` against binary `positive` flags.
///
/// Tied scores are crossed together, so each tie group adds one diagonal
/// segment. A class with no positives or no negatives gets the chance
/// diagonal.
pub fn roc_curve(scores: &[f64], positive: &[bool]) -> Vec<(f64, f64)> {
    let n_pos = positive.iter().filter(|&&p| p).count();
    let n_neg = positive.len() - n_pos;
    if n_pos == 0 || n_neg == 0 {
        return vec![(0.0, 0.0), (1.0, 1.0)];
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&i, &j| scores[j].total_cmp(&scores[i]));

    let mut points = vec![(0.0, 0.0)];
    let (mut tp, mut fp) = (0usize, 0usize);
    let mut i = 0;
    while i < order.len() {
        let threshold = scores[order[i]];
        while i < order.len() && scores[order[i]] == threshold {
            if positive[order[i]] {
                tp += 1;
            } else {
                fp += 1;
            }
            i += 1;
        }
        points.push((fp as f64 / n_neg as f64, tp as f64 / n_pos as f64));
    }
    points
}

/// Trapezoidal area under a curve given as ordered points.
pub fn trapezoid_auc(points: &[(f64, f64)]) -> f64 {
    points
        .windows(2)
        .map(|w| (w[1].0 - w[0].0) * (w[0].1 + w[1].1) * 0.5)
        .sum()
}

/// Scores a probability matrix `(n, n_classes)` against 0-based labels.
pub fn score(probs: ArrayView2<f64>, labels: &[usize], class_names: &[String]) -> Result<EvalReport> {
    let (n, c) = probs.dim();
    if n == 0 {
        return Err(DbnError::Validation("cannot score zero samples".into()));
    }
    if labels.len() != n {
        return Err(DbnError::shape("label count", n, labels.len()));
    }
    if class_names.len() != c {
        return Err(DbnError::shape("class names", c, class_names.len()));
    }
    for (i, row) in probs.rows().into_iter().enumerate() {
        let s = row.sum();
        if !(s - 1.0).abs().le(&1e-6) || row.iter().any(|&p| !(0.0..=1.0).contains(&p)) {
            return Err(DbnError::Validation(format!(
                "row {i} is not a probability vector (sum {s})"
            )));
        }
    }
    if let Some((i, &l)) = labels.iter().enumerate().find(|(_, &l)| l >= c) {
        return Err(DbnError::Validation(format!("label {l} at row {i} outside [0, {c})")));
    }

    let mut confusion = Array2::<u64>::zeros((c, c));
    let mut correct = 0u64;
    for (row, &truth) in probs.rows().into_iter().zip(labels) {
        let pred = argmax(row);
        confusion[[truth, pred]] += 1;
        if pred == truth {
            correct += 1;
        }
    }
    let accuracy = correct as f64 / n as f64;

    let mut roc = Vec::with_capacity(c);
    let mut auc = Vec::with_capacity(c);
    for k in 0..c {
        let scores = probs.column(k).to_vec();
        let positive: Vec<bool> = labels.iter().map(|&l| l == k).collect();
        let curve = roc_curve(&scores, &positive);
        auc.push(trapezoid_auc(&curve));
        roc.push(curve);
    }

    Ok(EvalReport {
        accuracy,
        error_rate: 1.0 - accuracy,
        confusion,
        roc,
        auc,
        class_names: class_names.to_vec(),
    })
}

/// `0.0699` → `"6.99%"`.
pub fn percent(x: f64) -> String {
    format!("{:.2}%", 100.0 * x)
}

fn write_file(path: PathBuf, body: &str) -> Result<PathBuf> {
    fs::write(&path, body).map_err(|e| DbnError::io(&path, e))?;
    Ok(path)
}

/// Writes `metrics.csv`, `confusion.csv` and one `roc_class_<k>.csv` per
/// class (`k` is the 1-based class number). Returns the written paths.
pub fn render_report(report: &EvalReport, out_dir: impl AsRef<Path>) -> Result<Vec<PathBuf>> {
    let dir = out_dir.as_ref();
    fs::create_dir_all(dir).map_err(|e| DbnError::io(dir, e))?;
    let mut written = Vec::new();

    let mut metrics = String::from("metric,value,percent\n");
    writeln!(metrics, "accuracy,{},{}", report.accuracy, percent(report.accuracy)).unwrap();
    writeln!(
        metrics,
        "error_rate,{},{}",
        report.error_rate,
        percent(report.error_rate)
    )
    .unwrap();
    for (name, auc) in report.class_names.iter().zip(&report.auc) {
        writeln!(metrics, "auc_{name},{auc},{}", percent(*auc)).unwrap();
    }
    written.push(write_file(dir.join("metrics.csv"), &metrics)?);

    let mut confusion = report.class_names.join(",");
    confusion.push('\n');
    for row in report.confusion.rows() {
        let cells: Vec<String> = row.iter().map(u64::to_string).collect();
        confusion.push_str(&cells.join(","));
        confusion.push('\n');
    }
    written.push(write_file(dir.join("confusion.csv"), &confusion)?);

    for (k, curve) in report.roc.iter().enumerate() {
        let mut body = String::from("fpr,tpr\n");
        for (fpr, tpr) in curve {
            writeln!(body, "{fpr},{tpr}").unwrap();
        }
        written.push(write_file(dir.join(format!("roc_class_{}.csv", k + 1)), &body)?);
    }
    Ok(written)
}

/// Reads a `confusion.csv` written by [`render_report`].
pub fn read_confusion_csv(path: impl AsRef<Path>) -> Result<(Vec<String>, Array2<u64>)> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| DbnError::io(path, e))?;
    let mut lines = text.lines();
    let names: Vec<String> = lines.next().unwrap_or("").split(',').map(str::to_string).collect();
    let c = names.len();
    let mut cells = Vec::with_capacity(c * c);
    for (i, line) in lines.enumerate() {
        for tok in line.split(',') {
            cells.push(tok.parse::<u64>().map_err(|_| DbnError::Parse {
                path: path.to_path_buf(),
                line: i + 2,
                message: format!("{tok:?} is not a count"),
            })?);
        }
    }
    let m = Array2::from_shape_vec((c, c), cells)
        .map_err(|e| DbnError::Validation(format!("confusion matrix shape: {e}")))?;
    Ok((names, m))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::activity_names;
    use ndarray::Array2;

    fn names(c: usize) -> Vec<String> {
        (0..c).map(|k| format!("c{k}")).collect()
    }

    #[test]
    fn perfect_predictions() {
        let labels: Vec<usize> = (0..24).map(|i| i % 12).collect();
        let probs = Array2::from_shape_fn((24, 12), |(i, j)| if labels[i] == j { 1.0 } else { 0.0 });
        let r = score(probs.view(), &labels, &activity_names()).unwrap();
        assert_eq!(r.accuracy, 1.0);
        assert_eq!(r.error_rate, 0.0);
        for i in 0..12 {
            for j in 0..12 {
                assert_eq!(r.confusion[[i, j]], if i == j { 2 } else { 0 });
            }
        }
        assert!(r.auc.iter().all(|&a| a == 1.0));
    }

    #[test]
    fn uniform_predictions_hit_chance() {
        let labels: Vec<usize> = (0..36).map(|i| i % 12).collect();
        let probs = Array2::from_elem((36, 12), 1.0 / 12.0);
        let r = score(probs.view(), &labels, &activity_names()).unwrap();
        assert!((r.accuracy - 1.0 / 12.0).abs() < 1e-15);
        assert!(r.confusion.column(0).iter().all(|&x| x == 3));
        assert!(r.auc.iter().all(|&a| (a - 0.5).abs() < 1e-15));
    }

    #[test]
    fn hand_built_auc() {
        let scores = [0.9, 0.8, 0.4, 0.3, 0.2];
        let positive = [true, true, false, true, false];
        let auc = trapezoid_auc(&roc_curve(&scores, &positive));
        assert!((auc - 5.0 / 6.0).abs() < 1e-15);
    }

    #[test]
    fn curve_endpoints() {
        let c = roc_curve(&[0.1, 0.5, 0.5, 0.7], &[false, true, false, true]);
        assert_eq!(c.first(), Some(&(0.0, 0.0)));
        assert_eq!(c.last(), Some(&(1.0, 1.0)));
        assert_eq!(roc_curve(&[0.3], &[true]), vec![(0.0, 0.0), (1.0, 1.0)]);
    }

    #[test]
    fn unnormalized_row_rejected() {
        let probs = ndarray::array![[0.5, 0.6]];
        assert!(matches!(
            score(probs.view(), &[0], &names(2)),
            Err(DbnError::Validation(_))
        ));
        let empty = Array2::<f64>::zeros((0, 2));
        assert!(score(empty.view(), &[], &names(2)).is_err());
    }

    #[test]
    fn accuracy_plus_error_is_one() {
        for correct in 0..=37u64 {
            let acc = correct as f64 / 37.0;
            assert_eq!(acc + (1.0 - acc), 1.0);
        }
    }

    #[test]
    fn render_and_read_back() {
        let labels = vec![0, 1, 2, 1, 0];
        let probs = ndarray::array![
            [0.7, 0.2, 0.1],
            [0.1, 0.8, 0.1],
            [0.5, 0.1, 0.4],
            [0.3, 0.3, 0.4],
            [0.9, 0.05, 0.05]
        ];
        let r = score(probs.view(), &labels, &names(3)).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let files = render_report(&r, dir.path()).unwrap();
        assert_eq!(files.len(), 2 + 3);
        let (hdr, m) = read_confusion_csv(dir.path().join("confusion.csv")).unwrap();
        assert_eq!(hdr, names(3));
        assert_eq!(m, r.confusion);
        let metrics = fs::read_to_string(dir.path().join("metrics.csv")).unwrap();
        assert!(metrics.contains("error_rate,0.4,40.00%"), "{metrics}");
        let roc = fs::read_to_string(dir.path().join("roc_class_1.csv")).unwrap();
        assert!(roc.starts_with("fpr,tpr\n0,0\n"));
        assert!(roc.trim_end().ends_with("1,1"));
    }

    #[test]
    fn percent_format() {
        assert_eq!(percent(0.0699), "6.99%");
        assert_eq!(percent(0.9301), "93.01%");
    }
}
