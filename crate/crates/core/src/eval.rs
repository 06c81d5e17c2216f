//! Classification metrics, prediction-entropy statistics and a two-component
//! PCA by power iteration with deflation.

use std::fmt::Write as _;
use std::io::Write;

use crate::error::{Error, Result};
use crate::model::argmax;
use crate::prob::{self, ProbVector, SkewParam};
use crate::scalar::Scalar;

/// Square count matrix; entry `(i, j)` counts samples of true class `i`
/// predicted as `j`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ConfusionMatrix {
    n_classes: usize,
    counts: Vec<usize>,
}

impl ConfusionMatrix {
    pub fn from_counts(n_classes: usize, counts: Vec<usize>) -> Result<Self> {
        if counts.len() != n_classes * n_classes {
            return Err(Error::LengthMismatch { left: counts.len(), right: n_classes * n_classes });
        }
        Ok(Self { n_classes, counts })
    }

    pub fn n_classes(&self) -> usize {
        self.n_classes
    }

    #[inline]
    pub fn get(&self, truth: usize, pred: usize) -> usize {
        self.counts[truth * self.n_classes + pred]
    }

    pub fn total(&self) -> usize {
        self.counts.iter().sum()
    }

    pub fn trace(&self) -> usize {
        (0..self.n_classes).map(|i| self.get(i, i)).sum()
    }

    /// `trace / total`, zero for an empty matrix.
    pub fn accuracy(&self) -> f64 {
        let total = self.total();
        if total == 0 {
            0.0
        } else {
            self.trace() as f64 / total as f64
        }
    }

    pub fn rows(&self) -> std::slice::ChunksExact<'_, usize> {
        self.counts.chunks_exact(self.n_classes)
    }
}

pub fn confusion_matrix(y_true: &[usize], y_pred: &[usize], n_classes: usize) -> Result<ConfusionMatrix> {
    if y_true.len() != y_pred.len() {
        return Err(Error::LengthMismatch { left: y_true.len(), right: y_pred.len() });
    }
    let mut counts = vec![0; n_classes * n_classes];
    for (&t, &p) in y_true.iter().zip(y_pred) {
        if t >= n_classes || p >= n_classes {
            return Err(Error::LabelOutOfRange { label: t.max(p), n_classes });
        }
        counts[t * n_classes + p] += 1;
    }
    Ok(ConfusionMatrix { n_classes, counts })
}

/// `2TP / (2TP + FP + FN)` for `positive_class`; zero when the denominator is.
pub fn f1_score(confusion: &ConfusionMatrix, positive_class: usize) -> f64 {
    let k = positive_class;
    let tp = confusion.get(k, k);
    let fp: usize = (0..confusion.n_classes).filter(|&i| i != k).map(|i| confusion.get(i, k)).sum();
    let fn_: usize = (0..confusion.n_classes).filter(|&j| j != k).map(|j| confusion.get(k, j)).sum();
    let denom = 2 * tp + fp + fn_;
    if denom == 0 {
        0.0
    } else {
        (2 * tp) as f64 / denom as f64
    }
}

fn check_common_dim<T: Scalar>(probs: &[ProbVector<T>]) -> Result<usize> {
    let n = probs.first().ok_or(Error::EmptyInput)?.len();
    if let Some(p) = probs.iter().find(|p| p.len() != n) {
        return Err(Error::LengthMismatch { left: n, right: p.len() });
    }
    Ok(n)
}

/// Mean prediction entropy in nats.
pub fn mean_entropy<T: Scalar>(probs: &[ProbVector<T>]) -> Result<T> {
    check_common_dim(probs)?;
    Ok(probs.iter().map(prob::entropy).sum::<T>() / T::of(probs.len() as f64))
}

/// Mean of `H(p)/ln n`, in `[0, 1]`.
pub fn mean_normalized_entropy<T: Scalar>(probs: &[ProbVector<T>]) -> Result<T> {
    let n = check_common_dim(probs)?;
    Ok(mean_entropy(probs)? / T::of(n as f64).ln())
}

/// Mean of `J^s_α(u‖p)` with the uniform distribution first.
pub fn mean_alpha_js_to_uniform<T: Scalar>(probs: &[ProbVector<T>], a: SkewParam<T>) -> Result<T> {
    let n = check_common_dim(probs)?;
    let u = ProbVector::uniform(n)?;
    let mut total = T::zero();
    for p in probs {
        total = total + prob::alpha_js(&u, p, a)?;
    }
    Ok(total / T::of(probs.len() as f64))
}

/// Test-set summary of a classifier.
#[derive(Debug, Clone, PartialEq)]
pub struct Metrics<T> {
    pub confusion: ConfusionMatrix,
    pub accuracy: f64,
    pub f1: f64,
    pub positive_class: usize,
    pub mean_entropy: T,
    pub mean_normalized_entropy: T,
    pub eval_alpha: SkewParam<T>,
    pub mean_alpha_js_to_uniform: T,
}

impl<T: Scalar> Metrics<T> {
    /// Scores predicted distributions against `y_true`; the predicted class
    /// is the arg-max (lowest index on ties).
    pub fn evaluate(
        y_true: &[usize],
        probs: &[ProbVector<T>],
        positive_class: usize,
        eval_alpha: SkewParam<T>,
    ) -> Result<Self> {
        let n_classes = check_common_dim(probs)?;
        if positive_class >= n_classes {
            return Err(Error::LabelOutOfRange { label: positive_class, n_classes });
        }
        let y_pred: Vec<usize> = probs.iter().map(|p| argmax(p.as_slice())).collect();
        let confusion = confusion_matrix(y_true, &y_pred, n_classes)?;
        Ok(Self {
            accuracy: confusion.accuracy(),
            f1: f1_score(&confusion, positive_class),
            confusion,
            positive_class,
            mean_entropy: mean_entropy(probs)?,
            mean_normalized_entropy: mean_normalized_entropy(probs)?,
            eval_alpha,
            mean_alpha_js_to_uniform: mean_alpha_js_to_uniform(probs, eval_alpha)?,
        })
    }

    /// `key=value` lines followed by the confusion matrix as CSV rows
    /// (true class per row, predicted class per column).
    pub fn to_report(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "samples={}", self.confusion.total());
        let _ = writeln!(out, "accuracy={}", self.accuracy);
        let _ = writeln!(out, "positive_class={}", self.positive_class);
        let _ = writeln!(out, "f1={}", self.f1);
        let _ = writeln!(out, "mean_entropy={}", self.mean_entropy);
        let _ = writeln!(out, "mean_normalized_entropy={}", self.mean_normalized_entropy);
        let _ = writeln!(out, "eval_alpha={}", self.eval_alpha.value());
        let _ = writeln!(out, "mean_alpha_js_to_uniform={}", self.mean_alpha_js_to_uniform);
        let header: Vec<String> = (0..self.confusion.n_classes).map(|j| format!("pred_{j}")).collect();
        let _ = writeln!(out, "confusion_matrix");
        let _ = writeln!(out, "true,{}", header.join(","));
        for (i, row) in self.confusion.rows().enumerate() {
            let cells: Vec<String> = row.iter().map(usize::to_string).collect();
            let _ = writeln!(out, "{i},{}", cells.join(","));
        }
        out
    }
}

/// Samples projected on the two leading principal components.
#[derive(Debug, Clone, PartialEq)]
pub struct Projection2D<T> {
    pub points: Vec<[T; 2]>,
    /// Leading two covariance eigenvalues, non-increasing.
    pub explained_variance: [T; 2],
    /// Unit principal directions, largest-magnitude coordinate positive.
    pub components: [Vec<T>; 2],
    pub labels: Vec<usize>,
    /// Set when the two leading eigenvalues are closer than `1e-12`, in
    /// which case the directions within their span are arbitrary.
    pub degenerate_spectrum: bool,
}

impl<T: Scalar> Projection2D<T> {
    pub fn new(
        points: Vec<[T; 2]>,
        explained_variance: [T; 2],
        components: [Vec<T>; 2],
        labels: Vec<usize>,
        degenerate_spectrum: bool,
    ) -> Result<Self> {
        let tol = T::of(1e-6);
        let dot = |a: &[T], b: &[T]| a.iter().zip(b).map(|(&x, &y)| x * y).sum::<T>();
        let [c1, c2] = &components;
        if c1.len() != c2.len() {
            return Err(Error::LengthMismatch { left: c1.len(), right: c2.len() });
        }
        if (dot(c1, c1) - T::one()).abs() > tol || (dot(c2, c2) - T::one()).abs() > tol || dot(c1, c2).abs() > tol {
            return Err(Error::InvalidParameter {
                name: "components",
                reason: "directions are not orthonormal".into(),
            });
        }
        if !labels.is_empty() && labels.len() != points.len() {
            return Err(Error::LengthMismatch { left: points.len(), right: labels.len() });
        }
        Ok(Self { points, explained_variance, components, labels, degenerate_spectrum })
    }

    pub fn with_labels(mut self, labels: Vec<usize>) -> Result<Self> {
        if labels.len() != self.points.len() {
            return Err(Error::LengthMismatch { left: self.points.len(), right: labels.len() });
        }
        self.labels = labels;
        Ok(self)
    }

    /// CSV with header `pc1,pc2,label`.
    pub fn write_csv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "pc1,pc2,label")?;
        for (i, [a, b]) in self.points.iter().enumerate() {
            match self.labels.get(i) {
                Some(l) => writeln!(w, "{a},{b},{l}")?,
                None => writeln!(w, "{a},{b},")?,
            }
        }
        w.flush()
    }
}

const PCA_TOL: f64 = 1e-10;
const PCA_MAX_ITER: usize = 10_000;

fn sign_fix<T: Scalar>(v: &mut [T]) {
    let k = (0..v.len()).fold(0, |best, i| if v[i].abs() > v[best].abs() { i } else { best });
    if v[k] < T::zero() {
        v.iter_mut().for_each(|x| *x = -*x);
    }
}

fn normalize<T: Scalar>(v: &mut [T]) -> T {
    let norm = v.iter().map(|&x| x * x).sum::<T>().sqrt();
    if norm > T::zero() {
        v.iter_mut().for_each(|x| *x = *x / norm);
    }
    norm
}

fn mat_vec<T: Scalar>(m: &[T], v: &[T], out: &mut [T]) {
    let d = v.len();
    for (o, row) in out.iter_mut().zip(m.chunks_exact(d)) {
        *o = row.iter().zip(v).map(|(&a, &b)| a * b).sum();
    }
}

/// Dominant eigenpair of the symmetric positive semi-definite `cov` by power
/// iteration, kept orthogonal to `against`.
///
/// Iteration stops once the estimated distance to the limit vector,
/// `Δ·r/(1−r)` with `Δ` the latest step and `r` the observed contraction
/// rate, falls under the tolerance.
fn power_iteration<T: Scalar>(cov: &[T], d: usize, against: Option<&[T]>) -> (T, Vec<T>) {
    let project_out = |v: &mut [T]| {
        if let Some(u) = against {
            let dot: T = v.iter().zip(u).map(|(&a, &b)| a * b).sum();
            v.iter_mut().zip(u).for_each(|(x, &b)| *x = *x - dot * b);
        }
    };
    // Start from the column with the largest norm, plus a small all-ones tilt
    // so the start is never exactly orthogonal to the target.
    let best_col = (0..d)
        .max_by(|&a, &b| {
            let na: T = (0..d).map(|i| cov[i * d + a] * cov[i * d + a]).sum();
            let nb: T = (0..d).map(|i| cov[i * d + b] * cov[i * d + b]).sum();
            na.partial_cmp(&nb).unwrap_or(std::cmp::Ordering::Equal)
        })
        .unwrap_or(0);
    let mut v: Vec<T> = (0..d).map(|i| cov[i * d + best_col]).collect();
    let scale = v.iter().fold(T::zero(), |m, x| m.max(x.abs()));
    let tilt = if scale > T::zero() { scale * T::of(1e-3) } else { T::one() };
    v.iter_mut().enumerate().for_each(|(i, x)| *x = *x + tilt / T::of((i + 1) as f64));
    project_out(&mut v);
    if normalize(&mut v) == T::zero() {
        v = vec![T::zero(); d];
        v[0] = T::one();
        project_out(&mut v);
        normalize(&mut v);
    }
    sign_fix(&mut v);

    let tol = T::of(PCA_TOL);
    let mut w = vec![T::zero(); d];
    let mut prev_step = T::infinity();
    for _ in 0..PCA_MAX_ITER {
        mat_vec(cov, &v, &mut w);
        project_out(&mut w);
        if normalize(&mut w) == T::zero() {
            break;
        }
        sign_fix(&mut w);
        let step = w.iter().zip(&v).map(|(&a, &b)| (a - b) * (a - b)).sum::<T>().sqrt();
        std::mem::swap(&mut v, &mut w);
        if step == T::zero() {
            break;
        }
        let rate = step / prev_step;
        prev_step = step;
        if step < tol && rate < T::one() && step * rate / (T::one() - rate) < tol {
            break;
        }
    }
    mat_vec(cov, &v, &mut w);
    let lambda: T = v.iter().zip(&w).map(|(&a, &b)| a * b).sum();
    (lambda.max(T::zero()), v)
}

/// Projects the rows of `features` (row-major, `n_cols` columns) onto their
/// two leading principal components. Covariance uses the `n − 1` divisor.
pub fn pca_top2<T: Scalar>(features: &[T], n_cols: usize) -> Result<Projection2D<T>> {
    if n_cols < 2 {
        return Err(Error::InvalidParameter {
            name: "features",
            reason: format!("need at least 2 columns, got {n_cols}"),
        });
    }
    if !features.len().is_multiple_of(n_cols) {
        return Err(Error::LengthMismatch { left: features.len(), right: n_cols });
    }
    let n = features.len() / n_cols;
    if n < 3 {
        return Err(Error::InvalidParameter { name: "features", reason: format!("need at least 3 samples, got {n}") });
    }
    let d = n_cols;
    let mut mean = vec![T::zero(); d];
    for row in features.chunks_exact(d) {
        mean.iter_mut().zip(row).for_each(|(m, &x)| *m = *m + x);
    }
    mean.iter_mut().for_each(|m| *m = *m / T::of(n as f64));
    let centered: Vec<T> =
        features.chunks_exact(d).flat_map(|row| row.iter().zip(&mean).map(|(&x, &m)| x - m)).collect();

    let mut cov = vec![T::zero(); d * d];
    for row in centered.chunks_exact(d) {
        for i in 0..d {
            for j in i..d {
                cov[i * d + j] = cov[i * d + j] + row[i] * row[j];
            }
        }
    }
    let denom = T::of((n - 1) as f64);
    for i in 0..d {
        for j in i..d {
            let v = cov[i * d + j] / denom;
            cov[i * d + j] = v;
            cov[j * d + i] = v;
        }
    }

    let (l1, v1) = power_iteration(&cov, d, None);
    let mut deflated = cov.clone();
    for i in 0..d {
        for j in 0..d {
            deflated[i * d + j] = deflated[i * d + j] - l1 * v1[i] * v1[j];
        }
    }
    let (_, v2) = power_iteration(&deflated, d, Some(&v1));
    // Rayleigh quotient on the original matrix.
    let mut tmp = vec![T::zero(); d];
    mat_vec(&cov, &v2, &mut tmp);
    let l2 = v2.iter().zip(&tmp).map(|(&a, &b)| a * b).sum::<T>().max(T::zero());

    let points = centered
        .chunks_exact(d)
        .map(|row| {
            let a = row.iter().zip(&v1).map(|(&x, &c)| x * c).sum();
            let b = row.iter().zip(&v2).map(|(&x, &c)| x * c).sum();
            [a, b]
        })
        .collect();
    let degenerate = l1 - l2 < T::of(1e-12);
    Projection2D::new(points, [l1, l2.min(l1)], [v1, v2], Vec::new(), degenerate)
}
