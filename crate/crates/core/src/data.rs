//! Datasets, synthetic fine-grained data, CSV I/O, normalization and
//! stratified splitting.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Per-feature standardization statistics fitted on a training split.
#[derive(Debug, Clone, PartialEq)]
pub struct NormStats<T> {
    pub mean: Vec<T>,
    pub std: Vec<T>,
}

impl<T: Scalar> NormStats<T> {
    /// Population mean and standard deviation per column. Columns with zero
    /// spread get a standard deviation of one so they map to zero.
    pub fn fit(data: &Dataset<T>) -> Result<Self> {
        let n = data.n_samples();
        if n < 2 {
            return Err(Error::InvalidParameter {
                name: "train",
                reason: format!("normalization needs at least 2 samples, got {n}"),
            });
        }
        let d = data.n_features;
        let count = T::of(n as f64);
        let mut mean = vec![T::zero(); d];
        for row in data.rows() {
            for (m, &x) in mean.iter_mut().zip(row) {
                *m = *m + x;
            }
        }
        for m in &mut mean {
            *m = *m / count;
        }
        let mut var = vec![T::zero(); d];
        for row in data.rows() {
            for ((v, &x), &m) in var.iter_mut().zip(row).zip(&mean) {
                *v = *v + (x - m) * (x - m);
            }
        }
        let std = var
            .into_iter()
            .map(|v| {
                let s = (v / count).sqrt();
                if s > T::zero() {
                    s
                } else {
                    T::one()
                }
            })
            .collect();
        Ok(Self { mean, std })
    }

    pub fn apply(&self, data: &Dataset<T>) -> Result<Dataset<T>> {
        if self.mean.len() != data.n_features {
            return Err(Error::DimensionMismatch { expected: self.mean.len(), got: data.n_features });
        }
        let mut out = data.clone();
        for row in out.features.chunks_mut(out.n_features) {
            for ((x, &m), &s) in row.iter_mut().zip(&self.mean).zip(&self.std) {
                *x = (*x - m) / s;
            }
        }
        out.normalization = Some(self.clone());
        Ok(out)
    }
}

/// Row-major feature matrix with integer class labels.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset<T> {
    features: Vec<T>,
    n_features: usize,
    labels: Vec<usize>,
    n_classes: usize,
    class_names: Vec<String>,
    normalization: Option<NormStats<T>>,
}

impl<T: Scalar> Dataset<T> {
    pub fn new(features: Vec<T>, n_features: usize, labels: Vec<usize>, n_classes: usize) -> Result<Self> {
        if n_features == 0 {
            return Err(Error::InvalidParameter { name: "n_features", reason: "must be positive".into() });
        }
        if features.len() != n_features * labels.len() {
            return Err(Error::LengthMismatch { left: features.len(), right: n_features * labels.len() });
        }
        if let Some(&label) = labels.iter().find(|&&l| l >= n_classes) {
            return Err(Error::LabelOutOfRange { label, n_classes });
        }
        if let Some(i) = features.iter().position(|x| !x.is_finite()) {
            return Err(Error::InvalidParameter {
                name: "features",
                reason: format!("non-finite value in row {}", i / n_features),
            });
        }
        let class_names = (0..n_classes).map(|c| format!("class{c}")).collect();
        Ok(Self { features, n_features, labels, n_classes, class_names, normalization: None })
    }

    pub fn from_rows(rows: &[Vec<T>], labels: Vec<usize>, n_classes: usize) -> Result<Self> {
        let n_features = rows.first().map_or(0, Vec::len);
        if let Some(bad) = rows.iter().find(|r| r.len() != n_features) {
            return Err(Error::DimensionMismatch { expected: n_features, got: bad.len() });
        }
        if rows.len() != labels.len() {
            return Err(Error::LengthMismatch { left: rows.len(), right: labels.len() });
        }
        Self::new(rows.concat(), n_features, labels, n_classes)
    }

    pub fn with_class_names(mut self, names: Vec<String>) -> Result<Self> {
        if names.len() != self.n_classes {
            return Err(Error::LengthMismatch { left: names.len(), right: self.n_classes });
        }
        self.class_names = names;
        Ok(self)
    }

    #[inline]
    pub fn n_samples(&self) -> usize {
        self.labels.len()
    }

    #[inline]
    pub fn n_features(&self) -> usize {
        self.n_features
    }

    #[inline]
    pub fn n_classes(&self) -> usize {
        self.n_classes
    }

    #[inline]
    pub fn features(&self) -> &[T] {
        &self.features
    }

    #[inline]
    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn class_names(&self) -> &[String] {
        &self.class_names
    }

    pub fn normalization(&self) -> Option<&NormStats<T>> {
        self.normalization.as_ref()
    }

    #[inline]
    pub fn row(&self, i: usize) -> &[T] {
        &self.features[i * self.n_features..(i + 1) * self.n_features]
    }

    pub fn rows(&self) -> std::slice::ChunksExact<'_, T> {
        self.features.chunks_exact(self.n_features)
    }

    pub fn class_counts(&self) -> Vec<usize> {
        let mut counts = vec![0; self.n_classes];
        for &l in &self.labels {
            counts[l] += 1;
        }
        counts
    }

    /// Class with the fewest samples; ties go to the higher index.
    pub fn minority_class(&self) -> usize {
        let counts = self.class_counts();
        (0..self.n_classes).rev().min_by_key(|&c| counts[c]).unwrap_or(0)
    }

    /// Rows at `indices`, in that order. Class metadata is kept.
    pub fn subset(&self, indices: &[usize]) -> Dataset<T> {
        let mut features = Vec::with_capacity(indices.len() * self.n_features);
        let mut labels = Vec::with_capacity(indices.len());
        for &i in indices {
            features.extend_from_slice(self.row(i));
            labels.push(self.labels[i]);
        }
        Dataset {
            features,
            n_features: self.n_features,
            labels,
            n_classes: self.n_classes,
            class_names: self.class_names.clone(),
            normalization: self.normalization.clone(),
        }
    }

    /// Per-class sample indices in row order.
    fn indices_by_class(&self) -> Vec<Vec<usize>> {
        let mut by_class = vec![Vec::new(); self.n_classes];
        for (i, &l) in self.labels.iter().enumerate() {
            by_class[l].push(i);
        }
        by_class
    }
}

/// Configuration of the synthetic two-class generator.
///
/// Both classes share `n_clusters` Gaussian modes whose centers are spread
/// with standard deviation `cluster_spread`; samples scatter around their
/// mode with standard deviation `mode_noise`. Class 1 is shifted by
/// `class_offset` along one random unit direction, so the gap between the
/// classes is small next to the scatter within each class.
#[derive(Debug, Clone, PartialEq)]
pub struct GenSpec<T> {
    /// `(majority, minority)` sample counts for classes 0 and 1.
    pub n_per_class: [usize; 2],
    pub n_features: usize,
    pub n_clusters: usize,
    pub cluster_spread: T,
    pub class_offset: T,
    pub mode_noise: T,
    pub seed: u64,
}

impl<T: Scalar> Default for GenSpec<T> {
    fn default() -> Self {
        Self {
            n_per_class: [3292, 760],
            n_features: 8,
            n_clusters: 4,
            cluster_spread: T::one(),
            class_offset: T::of(0.35),
            mode_noise: T::of(0.15),
            seed: 0,
        }
    }
}

impl<T: Scalar> GenSpec<T> {
    pub fn validate(&self) -> Result<()> {
        let bad = |name, reason: &str| Err(Error::InvalidParameter { name, reason: reason.to_string() });
        if self.n_per_class.contains(&0) {
            return bad("n_per_class", "both counts must be positive");
        }
        if self.n_features < 2 {
            return bad("n_features", "must be at least 2");
        }
        if self.n_clusters == 0 {
            return bad("n_clusters", "must be positive");
        }
        if !(self.cluster_spread.is_finite() && self.cluster_spread > T::zero()) {
            return bad("cluster_spread", "must be positive");
        }
        if !(self.mode_noise.is_finite() && self.mode_noise > T::zero()) {
            return bad("mode_noise", "must be positive");
        }
        if !(self.class_offset >= T::zero() && self.class_offset < self.cluster_spread) {
            return bad("class_offset", "must lie in [0, cluster_spread)");
        }
        Ok(())
    }
}

fn normal<T: Scalar>(rng: &mut ChaCha8Rng) -> T {
    let z: f64 = StandardNormal.sample(rng);
    T::of(z)
}

/// Draws a dataset from `spec`. Rows are shuffled; the output is a pure
/// function of the spec.
pub fn generate_synthetic<T: Scalar>(spec: &GenSpec<T>) -> Result<Dataset<T>> {
    spec.validate()?;
    let d = spec.n_features;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let centers: Vec<T> = (0..spec.n_clusters * d).map(|_| normal::<T>(&mut rng) * spec.cluster_spread).collect();
    let mut direction: Vec<T> = (0..d).map(|_| normal::<T>(&mut rng)).collect();
    let norm = direction.iter().map(|&x| x * x).sum::<T>().sqrt();
    for x in &mut direction {
        *x = *x / norm;
    }

    let total = spec.n_per_class[0] + spec.n_per_class[1];
    let mut rows: Vec<(Vec<T>, usize)> = Vec::with_capacity(total);
    for (class, &count) in spec.n_per_class.iter().enumerate() {
        let shift = if class == 1 { spec.class_offset } else { T::zero() };
        for i in 0..count {
            // Round-robin mode assignment keeps both classes equally spread over modes.
            let center = &centers[(i % spec.n_clusters) * d..(i % spec.n_clusters + 1) * d];
            let row =
                (0..d).map(|j| center[j] + spec.mode_noise * normal::<T>(&mut rng) + shift * direction[j]).collect();
            rows.push((row, class));
        }
    }
    rows.shuffle(&mut rng);

    let mut features = Vec::with_capacity(total * d);
    let mut labels = Vec::with_capacity(total);
    for (row, label) in rows {
        features.extend(row);
        labels.push(label);
    }
    Dataset::new(features, d, labels, 2)?.with_class_names(vec!["normal".into(), "defective".into()])
}

/// Writes `f0,…,f{d-1},label` CSV with shortest round-trip float formatting.
pub fn write_csv<T: Scalar, W: Write>(data: &Dataset<T>, mut w: W) -> std::io::Result<()> {
    let header: Vec<String> = (0..data.n_features).map(|j| format!("f{j}")).collect();
    writeln!(w, "{},label", header.join(","))?;
    for (row, label) in data.rows().zip(&data.labels) {
        for x in row {
            write!(w, "{x},")?;
        }
        writeln!(w, "{label}")?;
    }
    w.flush()
}

pub fn save_csv<T: Scalar>(data: &Dataset<T>, path: &Path) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path.display().to_string(), e))?;
    write_csv(data, BufWriter::new(file)).map_err(|e| Error::io(path.display().to_string(), e))
}

/// Parses CSV with a header whose last column is `label`.
///
/// Error locations use 1-based file line numbers (the header is row 1) and
/// 1-based column numbers.
pub fn read_csv<T: Scalar, R: Read>(reader: R) -> Result<Dataset<T>> {
    let mut lines = BufReader::new(reader).lines();
    let header = match lines.next() {
        Some(line) => line.map_err(|e| Error::io("reading header", e))?,
        None => return Err(Error::Parse { row: 1, column: 1, message: "missing header row".into() }),
    };
    let names: Vec<&str> = header.trim_end_matches('\r').split(',').map(str::trim).collect();
    if names.len() < 2 || names.last() != Some(&"label") {
        return Err(Error::Parse {
            row: 1,
            column: names.len(),
            message: "last header column must be `label` after at least one feature".into(),
        });
    }
    let n_features = names.len() - 1;

    let mut features = Vec::new();
    let mut labels = Vec::new();
    for (idx, line) in lines.enumerate() {
        let row = idx + 2;
        let line = line.map_err(|e| Error::io(format!("reading row {row}"), e))?;
        let line = line.trim_end_matches('\r');
        if line.trim().is_empty() {
            continue;
        }
        let cells: Vec<&str> = line.split(',').collect();
        if cells.len() != n_features + 1 {
            return Err(Error::Parse {
                row,
                column: cells.len().min(n_features + 1),
                message: format!("expected {} columns, found {}", n_features + 1, cells.len()),
            });
        }
        for (j, cell) in cells[..n_features].iter().enumerate() {
            let value: T = cell.trim().parse().map_err(|_| Error::Parse {
                row,
                column: j + 1,
                message: format!("not a number: {cell:?}"),
            })?;
            if !value.is_finite() {
                return Err(Error::Parse { row, column: j + 1, message: format!("non-finite value {cell:?}") });
            }
            features.push(value);
        }
        let cell = cells[n_features].trim();
        let label: i64 = cell.parse().map_err(|_| Error::Parse {
            row,
            column: n_features + 1,
            message: format!("label is not an integer: {cell:?}"),
        })?;
        if label < 0 {
            return Err(Error::LabelRange { row, value: label });
        }
        labels.push(label as usize);
    }
    let n_classes = labels.iter().max().map_or(0, |&m| m + 1);
    Dataset::new(features, n_features, labels, n_classes)
}

pub fn load_csv<T: Scalar>(path: &Path) -> Result<Dataset<T>> {
    let file = File::open(path).map_err(|e| Error::io(path.display().to_string(), e))?;
    read_csv(file)
}

/// Fits standardization on `train` and returns the transformed split with
/// the statistics recorded.
pub fn normalize_fit_transform<T: Scalar>(train: &Dataset<T>) -> Result<(Dataset<T>, NormStats<T>)> {
    let stats = NormStats::fit(train)?;
    Ok((stats.apply(train)?, stats))
}

/// Applies previously fitted statistics unchanged.
pub fn apply_normalization<T: Scalar>(stats: &NormStats<T>, other: &Dataset<T>) -> Result<Dataset<T>> {
    stats.apply(other)
}

fn check_class_sizes<T: Scalar>(d: &Dataset<T>, required: usize) -> Result<Vec<usize>> {
    let counts = d.class_counts();
    for (class, &count) in counts.iter().enumerate() {
        if count < required {
            return Err(Error::ClassTooSmall { class, count, required });
        }
    }
    Ok(counts)
}

/// Per-class test counts: `class_count × fraction` rounded down, then the
/// leftover up to `round(total × fraction)` handed out by largest remainder.
pub fn stratified_test_counts(counts: &[usize], test_fraction: f64) -> Vec<usize> {
    let total: usize = counts.iter().sum();
    let target = (total as f64 * test_fraction).round() as usize;
    let exact: Vec<f64> = counts.iter().map(|&c| c as f64 * test_fraction).collect();
    let mut out: Vec<usize> = exact.iter().map(|x| x.floor() as usize).collect();
    let assigned: usize = out.iter().sum();
    let mut order: Vec<usize> = (0..counts.len()).collect();
    order.sort_by(|&a, &b| {
        let ra = exact[a] - exact[a].floor();
        let rb = exact[b] - exact[b].floor();
        rb.partial_cmp(&ra).unwrap_or(std::cmp::Ordering::Equal).then(a.cmp(&b))
    });
    for &c in order.iter().take(target.saturating_sub(assigned)) {
        if out[c] < counts[c] {
            out[c] += 1;
        }
    }
    out
}

/// Stratified hold-out split; returns `(train, test)` row indices, each sorted.
pub fn stratified_split_indices<T: Scalar>(
    d: &Dataset<T>,
    test_fraction: f64,
    seed: u64,
) -> Result<(Vec<usize>, Vec<usize>)> {
    if !(test_fraction > 0.0 && test_fraction < 1.0) {
        return Err(Error::InvalidParameter {
            name: "test_fraction",
            reason: format!("must lie in (0, 1), got {test_fraction}"),
        });
    }
    let counts = check_class_sizes(d, 2)?;
    let test_counts = stratified_test_counts(&counts, test_fraction);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut train = Vec::with_capacity(d.n_samples());
    let mut test = Vec::new();
    for (mut idx, n_test) in d.indices_by_class().into_iter().zip(test_counts) {
        idx.shuffle(&mut rng);
        test.extend_from_slice(&idx[..n_test]);
        train.extend_from_slice(&idx[n_test..]);
    }
    train.sort_unstable();
    test.sort_unstable();
    Ok((train, test))
}

pub fn stratified_split<T: Scalar>(d: &Dataset<T>, test_fraction: f64, seed: u64) -> Result<(Dataset<T>, Dataset<T>)> {
    let (train, test) = stratified_split_indices(d, test_fraction, seed)?;
    Ok((d.subset(&train), d.subset(&test)))
}

/// Fold membership of every sample for k-fold cross-validation.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FoldSplit {
    pub k: usize,
    pub fold_assignments: Vec<usize>,
}

impl FoldSplit {
    /// `(train, validation)` indices for fold `f`, both in row order.
    pub fn fold_indices(&self, f: usize) -> (Vec<usize>, Vec<usize>) {
        let mut train = Vec::new();
        let mut val = Vec::new();
        for (i, &a) in self.fold_assignments.iter().enumerate() {
            if a == f {
                val.push(i);
            } else {
                train.push(i);
            }
        }
        (train, val)
    }

    pub fn fold_sizes(&self) -> Vec<usize> {
        let mut sizes = vec![0; self.k];
        for &a in &self.fold_assignments {
            sizes[a] += 1;
        }
        sizes
    }
}

/// Stratified k-fold assignment. Each class is shuffled and dealt round-robin
/// over the folds, continuing the rotation from where the previous class
/// stopped so fold totals stay balanced too.
///
/// Every class needs at least `k` samples, except for leave-one-out
/// (`k` equal to the sample count).
pub fn stratified_kfold<T: Scalar>(d: &Dataset<T>, k: usize, seed: u64) -> Result<FoldSplit> {
    if k < 2 {
        return Err(Error::InvalidParameter { name: "k", reason: format!("need at least 2 folds, got {k}") });
    }
    if k != d.n_samples() {
        check_class_sizes(d, k)?;
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut fold_assignments = vec![0; d.n_samples()];
    let mut next = 0;
    for mut idx in d.indices_by_class() {
        idx.shuffle(&mut rng);
        for i in idx {
            fold_assignments[i] = next % k;
            next += 1;
        }
    }
    Ok(FoldSplit { k, fold_assignments })
}
