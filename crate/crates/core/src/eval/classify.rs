use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use ndarray::{Array1, Array2, ArrayView2, Axis};

use crate::error::{Error, Result};
use crate::graph::read_tsv;

/// L2 coefficients tried by default.
pub const L2_GRID: [f64; 6] = [1e-4, 1e-3, 1e-2, 0.1, 1.0, 10.0];

const MAX_ITERS: usize = 10_000;
const GRAD_TOL: f64 = 1e-5;

/// Feature rows with one class index per row.
#[derive(Debug, Clone)]
pub struct LabeledSet {
    pub features: Array2<f64>,
    pub labels: Vec<usize>,
}

impl LabeledSet {
    pub fn new(features: Array2<f64>, labels: Vec<usize>) -> Result<Self> {
        if features.nrows() != labels.len() {
            return Err(Error::Contract(format!(
                "{} feature rows for {} labels",
                features.nrows(),
                labels.len()
            )));
        }
        Ok(LabeledSet { features, labels })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }
}

/// Softmax regression with an unregularized bias.
#[derive(Debug, Clone, PartialEq)]
pub struct SoftmaxRegression {
    /// `num_classes x d`.
    pub weights: Array2<f64>,
    pub bias: Array1<f64>,
    /// Classes that may be predicted; classes unseen in training never are.
    pub allowed: Vec<bool>,
}

impl SoftmaxRegression {
    pub fn predict(&self, x: ArrayView2<'_, f64>) -> Vec<usize> {
        let logits = x.dot(&self.weights.t()) + &self.bias;
        logits
            .outer_iter()
            .map(|row| {
                let mut best = None::<(usize, f64)>;
                for (c, &v) in row.iter().enumerate() {
                    if self.allowed[c] && best.is_none_or(|(_, b)| v > b) {
                        best = Some((c, v));
                    }
                }
                best.expect("at least one allowed class").0
            })
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ClassifierReport {
    pub model: SoftmaxRegression,
    pub l2: f64,
    /// Validation accuracy for every grid value.
    pub validation: Vec<(f64, f64)>,
    pub accuracy: f64,
    pub balanced_accuracy: f64,
    pub test_size: usize,
}

impl ClassifierReport {
    pub fn table(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "{:<18} {:>10}", "l2", self.l2);
        let _ = writeln!(out, "{:<18} {:>10}", "test samples", self.test_size);
        let _ = writeln!(out, "{:<18} {:>10.4}", "accuracy", self.accuracy);
        let _ = writeln!(
            out,
            "{:<18} {:>10.4}",
            "balanced accuracy", self.balanced_accuracy
        );
        let _ = writeln!(out, "\n{:<10} {:>14}", "grid l2", "valid accuracy");
        for (l2, acc) in &self.validation {
            let _ = writeln!(out, "{l2:<10} {acc:>14.4}");
        }
        out
    }

    pub fn csv(&self) -> String {
        format!(
            "l2,test_size,accuracy,balanced_accuracy\n{},{},{},{}\n",
            self.l2, self.test_size, self.accuracy, self.balanced_accuracy
        )
    }
}

pub fn accuracy(pred: &[usize], truth: &[usize]) -> f64 {
    if truth.is_empty() {
        return 0.0;
    }
    pred.iter().zip(truth).filter(|(p, t)| p == t).count() as f64 / truth.len() as f64
}

/// Mean per-class recall over the classes present in `truth`.
pub fn balanced_accuracy(pred: &[usize], truth: &[usize], num_classes: usize) -> f64 {
    let mut hit = vec![0usize; num_classes];
    let mut total = vec![0usize; num_classes];
    for (&p, &t) in pred.iter().zip(truth) {
        total[t] += 1;
        if p == t {
            hit[t] += 1;
        }
    }
    let present: Vec<usize> = (0..num_classes).filter(|&c| total[c] > 0).collect();
    if present.is_empty() {
        return 0.0;
    }
    present
        .iter()
        .map(|&c| hit[c] as f64 / total[c] as f64)
        .sum::<f64>()
        / present.len() as f64
}

/// Mean cross-entropy plus `l2 * ||W||^2`, and its gradient.
fn objective(
    w: &Array2<f64>,
    b: &Array1<f64>,
    data: &LabeledSet,
    l2: f64,
) -> (f64, Array2<f64>, Array1<f64>) {
    let n = data.len() as f64;
    let mut logits = data.features.dot(&w.t()) + b;
    let mut loss = 0.0;
    for (mut row, &y) in logits.outer_iter_mut().zip(&data.labels) {
        let max = row.fold(f64::NEG_INFINITY, |m, &v| m.max(v));
        row.mapv_inplace(|v| (v - max).exp());
        let z = row.sum();
        loss -= (row[y] / z).ln();
        row /= z;
        row[y] -= 1.0;
    }
    // logits now hold dL/dlogits * n
    let gw = logits.t().dot(&data.features) / n + &(w * (2.0 * l2));
    let gb = logits.sum_axis(Axis(0)) / n;
    (loss / n + l2 * w.iter().map(|v| v * v).sum::<f64>(), gw, gb)
}

/// Full-batch gradient descent with Armijo backtracking.
pub fn fit_softmax(data: &LabeledSet, num_classes: usize, l2: f64) -> SoftmaxRegression {
    let d = data.features.ncols();
    let mut w = Array2::zeros((num_classes, d));
    let mut b = Array1::zeros(num_classes);
    let mut step = 1.0;
    let (mut f, mut gw, mut gb) = objective(&w, &b, data, l2);
    for _ in 0..MAX_ITERS {
        let gsq = gw.iter().chain(gb.iter()).map(|v| v * v).sum::<f64>();
        if gsq.sqrt() < GRAD_TOL {
            break;
        }
        step *= 2.0;
        loop {
            let w2 = &w - &(&gw * step);
            let b2 = &b - &(&gb * step);
            let (f2, gw2, gb2) = objective(&w2, &b2, data, l2);
            if f2 <= f - 0.5 * step * gsq || step < 1e-12 {
                (w, b, f, gw, gb) = (w2, b2, f2, gw2, gb2);
                break;
            }
            step *= 0.5;
        }
    }
    let mut allowed = vec![false; num_classes];
    for &y in &data.labels {
        allowed[y] = true;
    }
    SoftmaxRegression {
        weights: w,
        bias: b,
        allowed,
    }
}

/// Reads `entity<TAB>label` lines. Each entity may appear once.
pub fn read_labels(path: &Path) -> Result<BTreeMap<String, String>> {
    let mut labels = BTreeMap::new();
    for (line, cols) in read_tsv(path, 2)? {
        let [entity, label]: [String; 2] = cols.try_into().expect("two columns");
        if label.trim().is_empty() {
            return Err(Error::parse(
                path,
                line,
                format!("empty label for `{entity}`"),
            ));
        }
        if labels
            .insert(entity.clone(), label.trim().to_string())
            .is_some()
        {
            return Err(Error::parse(
                path,
                line,
                format!("duplicate label for `{entity}`"),
            ));
        }
    }
    Ok(labels)
}

/// Fits one model per grid value, keeps the one with the best validation
/// accuracy (earliest grid value on ties), and scores it on `test`.
pub fn train_classifier(
    train: &LabeledSet,
    valid: &LabeledSet,
    test: &LabeledSet,
    num_classes: usize,
    grid: &[f64],
) -> Result<ClassifierReport> {
    let classes: std::collections::BTreeSet<usize> = train.labels.iter().copied().collect();
    if classes.len() < 2 {
        return Err(Error::Config(
            "classification needs at least two classes in training".into(),
        ));
    }
    if valid.is_empty() || test.is_empty() || grid.is_empty() {
        return Err(Error::Config(
            "classification needs validation and test samples and an l2 grid".into(),
        ));
    }
    let dims = [
        train.features.ncols(),
        valid.features.ncols(),
        test.features.ncols(),
    ];
    if dims.iter().any(|&d| d != dims[0]) {
        return Err(Error::Contract(
            "feature dimensions differ across sets".into(),
        ));
    }
    if let Some(&bad) = train
        .labels
        .iter()
        .chain(&valid.labels)
        .chain(&test.labels)
        .find(|&&y| y >= num_classes)
    {
        return Err(Error::Contract(format!(
            "label {bad} outside {num_classes} classes"
        )));
    }
    let unseen = test.labels.iter().filter(|y| !classes.contains(y)).count();
    if unseen > 0 {
        log::warn!("{unseen} test samples belong to classes absent from training");
    }
    let mut best: Option<(f64, SoftmaxRegression, f64)> = None;
    let mut validation = Vec::with_capacity(grid.len());
    for &l2 in grid {
        let model = fit_softmax(train, num_classes, l2);
        let acc = accuracy(&model.predict(valid.features.view()), &valid.labels);
        validation.push((l2, acc));
        if best.as_ref().is_none_or(|(_, _, a)| acc > *a) {
            best = Some((l2, model, acc));
        }
    }
    let (l2, model, _) = best.expect("non-empty grid");
    let pred = model.predict(test.features.view());
    Ok(ClassifierReport {
        accuracy: accuracy(&pred, &test.labels),
        balanced_accuracy: balanced_accuracy(&pred, &test.labels, num_classes),
        model,
        l2,
        validation,
        test_size: test.len(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    fn separable() -> LabeledSet {
        LabeledSet::new(
            array![
                [0.0, 0.1],
                [0.2, -0.3],
                [-0.4, 0.2],
                [2.0, 2.1],
                [2.3, 1.8],
                [1.9, 2.4]
            ],
            vec![0, 0, 0, 1, 1, 1],
        )
        .unwrap()
    }

    #[test]
    fn separable_set_is_learned() {
        let d = separable();
        let r = train_classifier(&d, &d, &d, 2, &[1e-4]).unwrap();
        assert_eq!(r.accuracy, 1.0);
        assert_eq!(r.balanced_accuracy, 1.0);
    }

    #[test]
    fn majority_predictor_has_half_balanced_accuracy() {
        let truth: Vec<usize> = (0..100).map(|i| usize::from(i >= 90)).collect();
        let pred = vec![0; 100];
        assert_eq!(accuracy(&pred, &truth), 0.9);
        assert_eq!(balanced_accuracy(&pred, &truth, 2), 0.5);
    }

    #[test]
    fn balanced_equals_raw_on_uniform_classes() {
        let truth = vec![0, 0, 1, 1, 2, 2];
        let pred = vec![0, 1, 1, 1, 0, 2];
        assert!((accuracy(&pred, &truth) - balanced_accuracy(&pred, &truth, 3)).abs() < 1e-15);
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let d = separable();
        let w = array![[0.3, -0.2], [0.1, 0.5], [-0.4, 0.2]];
        let b = array![0.1, -0.2, 0.05];
        let data = LabeledSet::new(d.features.clone(), vec![0, 2, 1, 1, 2, 0]).unwrap();
        let (_, gw, gb) = objective(&w, &b, &data, 0.3);
        let eps = 1e-6;
        for i in 0..3 {
            for j in 0..2 {
                let mut wp = w.clone();
                wp[[i, j]] += eps;
                let mut wm = w.clone();
                wm[[i, j]] -= eps;
                let num = (objective(&wp, &b, &data, 0.3).0 - objective(&wm, &b, &data, 0.3).0)
                    / (2.0 * eps);
                assert!((num - gw[[i, j]]).abs() < 1e-7);
            }
            let mut bp = b.clone();
            bp[i] += eps;
            let mut bm = b.clone();
            bm[i] -= eps;
            let num =
                (objective(&w, &bp, &data, 0.3).0 - objective(&w, &bm, &data, 0.3).0) / (2.0 * eps);
            assert!((num - gb[i]).abs() < 1e-7);
        }
    }

    #[test]
    fn class_missing_from_training_is_never_predicted() {
        let d = separable();
        let test = LabeledSet::new(array![[0.0, 0.0], [5.0, 5.0]], vec![2, 1]).unwrap();
        let r = train_classifier(&d, &d, &test, 3, &[1e-3]).unwrap();
        assert_eq!(r.accuracy, 0.5);
        assert_eq!(r.balanced_accuracy, 0.5);
    }

    #[test]
    fn single_class_is_rejected() {
        let d = LabeledSet::new(array![[0.0], [1.0]], vec![0, 0]).unwrap();
        assert!(train_classifier(&d, &d, &d, 2, &L2_GRID).is_err());
    }
}
