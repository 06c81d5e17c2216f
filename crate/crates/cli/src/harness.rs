//! The split protocol: a stratified hold-out test set, stratified k-fold
//! cross-validation on the rest, one model per fold.

use rayon::prelude::*;

use skewjs_core::data::{generate_synthetic, load_csv, stratified_kfold, stratified_split_indices};
use skewjs_core::eval::Metrics;
use skewjs_core::model::{mean_loss, train_monitored};
use skewjs_core::{Dataset, LossSpec, MlpModel, NormStats, SkewParam, TrainConfig};

use crate::config::{DataSource, ExperimentConfig, SelectMetric};
use crate::error::CliError;

const STREAM_DATA: u64 = 1;
const STREAM_SPLIT: u64 = 2;
const STREAM_FOLDS: u64 = 3;
const STREAM_INIT: u64 = 100;
const STREAM_TRAIN: u64 = 200;

/// Independent-looking child seed for `stream` (splitmix64 finalizer).
pub fn derive_seed(root: u64, stream: u64) -> u64 {
    let mut z = root ^ stream.wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// The configured dataset, generated or read from disk.
pub fn load_dataset(cfg: &ExperimentConfig) -> Result<Dataset<f64>, CliError> {
    match &cfg.data {
        DataSource::Synthetic(spec) => {
            let mut spec = spec.clone();
            spec.seed = derive_seed(cfg.seed, STREAM_DATA);
            Ok(generate_synthetic(&spec)?)
        }
        DataSource::Csv(path) => Ok(load_csv(path)?),
    }
}

/// `(train_pool, test)` row indices of the hold-out split.
pub fn holdout_indices(cfg: &ExperimentConfig, data: &Dataset<f64>) -> Result<(Vec<usize>, Vec<usize>), CliError> {
    Ok(stratified_split_indices(data, cfg.test_fraction, derive_seed(cfg.seed, STREAM_SPLIT))?)
}

/// Validation statistics recorded during training.
#[derive(Debug, Clone, PartialEq)]
pub struct ValPoint {
    pub iteration: usize,
    /// Mean cross-entropy on the validation fold.
    pub loss: f64,
    pub accuracy: f64,
}

#[derive(Debug, Clone)]
pub struct FoldResult {
    pub fold: usize,
    pub train_size: usize,
    pub val_size: usize,
    pub loss_trace: Vec<f64>,
    pub validation: Vec<ValPoint>,
    pub model: MlpModel<f64>,
    pub norm: NormStats<f64>,
    pub test: Metrics<f64>,
}

impl FoldResult {
    /// Statistics of the fully trained model.
    pub fn final_validation(&self) -> &ValPoint {
        self.validation.last().expect("the monitor always runs after the last update")
    }

    /// Earliest point with the lowest validation loss.
    pub fn best_val_loss(&self) -> &ValPoint {
        self.validation.iter().reduce(|a, b| if b.loss < a.loss { b } else { a }).expect("non-empty")
    }

    /// Earliest point with the highest validation accuracy.
    pub fn best_val_accuracy(&self) -> &ValPoint {
        self.validation.iter().reduce(|a, b| if b.accuracy > a.accuracy { b } else { a }).expect("non-empty")
    }
}

/// Test-set statistics averaged over the fold models.
#[derive(Debug, Clone, PartialEq)]
pub struct FoldAverage {
    pub f1: f64,
    pub accuracy: f64,
    pub mean_entropy: f64,
    pub mean_normalized_entropy: f64,
    pub mean_alpha_js_to_uniform: f64,
}

#[derive(Debug, Clone)]
pub struct Experiment {
    pub folds: Vec<FoldResult>,
    pub selected: usize,
    pub select: SelectMetric,
    pub test_size: usize,
    pub positive_class: usize,
    pub class_names: Vec<String>,
}

impl Experiment {
    pub fn selected_fold(&self) -> &FoldResult {
        &self.folds[self.selected]
    }

    pub fn fold_average(&self) -> FoldAverage {
        let n = self.folds.len() as f64;
        let mean = |f: &dyn Fn(&Metrics<f64>) -> f64| self.folds.iter().map(|r| f(&r.test)).sum::<f64>() / n;
        FoldAverage {
            f1: mean(&|m| m.f1),
            accuracy: mean(&|m| m.accuracy),
            mean_entropy: mean(&|m| m.mean_entropy),
            mean_normalized_entropy: mean(&|m| m.mean_normalized_entropy),
            mean_alpha_js_to_uniform: mean(&|m| m.mean_alpha_js_to_uniform),
        }
    }
}

fn accuracy(model: &MlpModel<f64>, data: &Dataset<f64>) -> Result<f64, CliError> {
    let mut hits = 0usize;
    for (x, &y) in data.rows().zip(data.labels()) {
        if model.predict(x)? == y {
            hits += 1;
        }
    }
    Ok(hits as f64 / data.n_samples() as f64)
}

#[allow(clippy::too_many_arguments)]
fn run_fold(
    cfg: &ExperimentConfig,
    loss: &LossSpec<f64>,
    eval_alpha: SkewParam<f64>,
    fold: usize,
    pool: &Dataset<f64>,
    test: &Dataset<f64>,
    split: &skewjs_core::FoldSplit,
    positive_class: usize,
) -> Result<FoldResult, CliError> {
    let (train_idx, val_idx) = split.fold_indices(fold);
    let norm = NormStats::fit(&pool.subset(&train_idx))?;
    let train_set = norm.apply(&pool.subset(&train_idx))?;
    let val_set = norm.apply(&pool.subset(&val_idx))?;
    let test_set = norm.apply(test)?;

    let dims = cfg.layer_dims(pool.n_features(), pool.n_classes());
    let model = MlpModel::init(&dims, derive_seed(cfg.seed, STREAM_INIT + fold as u64))?;
    let t = &cfg.train;
    let train_cfg = TrainConfig {
        loss: *loss,
        learning_rate: t.learning_rate,
        iterations: t.iterations,
        batch_size: t.batch_size,
        l2_lambda: t.l2_lambda,
        optimizer: t.optimizer,
        seed: derive_seed(cfg.seed, STREAM_TRAIN + fold as u64),
    };

    let mut validation = Vec::new();
    let mut monitor_error = None;
    let report = train_monitored(model, &train_set, &train_cfg, t.eval_every, |iteration, m| {
        if monitor_error.is_some() {
            return;
        }
        let point = mean_loss(m, &LossSpec::CrossEntropy, &val_set)
            .map_err(CliError::from)
            .and_then(|loss| Ok(ValPoint { iteration, loss, accuracy: accuracy(m, &val_set)? }));
        match point {
            Ok(p) => validation.push(p),
            Err(e) => monitor_error = Some(e),
        }
    })?;
    if let Some(e) = monitor_error {
        return Err(e);
    }

    let probs = test_set.rows().map(|x| report.model.predict_proba(x)).collect::<Result<Vec<_>, _>>()?;
    let test_metrics = Metrics::evaluate(test_set.labels(), &probs, positive_class, eval_alpha)?;
    Ok(FoldResult {
        fold,
        train_size: train_idx.len(),
        val_size: val_idx.len(),
        loss_trace: report.loss_trace,
        validation,
        model: report.model,
        norm,
        test: test_metrics,
    })
}

/// Runs the full protocol with `loss`; test statistics use `eval_alpha`.
/// Folds train in parallel and are returned in fold order.
pub fn run_experiment(
    cfg: &ExperimentConfig,
    data: &Dataset<f64>,
    loss: &LossSpec<f64>,
    eval_alpha: SkewParam<f64>,
) -> Result<Experiment, CliError> {
    let (pool_idx, test_idx) = holdout_indices(cfg, data)?;
    let pool = data.subset(&pool_idx);
    let test = data.subset(&test_idx);
    let split = stratified_kfold(&pool, cfg.k, derive_seed(cfg.seed, STREAM_FOLDS))?;
    let positive_class = data.minority_class();

    let folds = (0..cfg.k)
        .into_par_iter()
        .map(|f| run_fold(cfg, loss, eval_alpha, f, &pool, &test, &split, positive_class))
        .collect::<Result<Vec<_>, _>>()?;

    let selected = match cfg.select {
        SelectMetric::ValLoss => {
            folds.iter().reduce(|a, b| if b.final_validation().loss < a.final_validation().loss { b } else { a })
        }
        SelectMetric::ValAccuracy => {
            folds
                .iter()
                .reduce(|a, b| if b.final_validation().accuracy > a.final_validation().accuracy { b } else { a })
        }
    }
    .map(|r| r.fold)
    .expect("k >= 2");

    Ok(Experiment {
        folds,
        selected,
        select: cfg.select,
        test_size: test_idx.len(),
        positive_class,
        class_names: data.class_names().to_vec(),
    })
}

#[derive(Debug, Clone)]
pub struct SweepRow {
    pub alpha: f64,
    pub fold_f1: Vec<f64>,
    pub selected_f1: f64,
    pub average: FoldAverage,
}

#[derive(Debug, Clone)]
pub struct SweepResult {
    pub beta: f64,
    pub rows: Vec<SweepRow>,
}

/// β of the swept α-JS objective: the configured one, or 1 when the config
/// leaves the loss unset.
pub fn sweep_beta(cfg: &ExperimentConfig) -> Result<f64, CliError> {
    match cfg.loss {
        LossSpec::AlphaJs { beta, .. } => Ok(beta),
        _ if !cfg.loss_kind_set => Ok(1.0),
        other => Err(CliError::Config {
            key: "loss.kind".into(),
            reason: format!("sweep-alpha trains alpha_js, but the config selects {other}"),
        }),
    }
}

/// One full protocol run per α with shared data, split, folds and training
/// seeds. Statistics of each row use that row's α.
pub fn sweep(cfg: &ExperimentConfig, data: &Dataset<f64>, alphas: &[f64]) -> Result<SweepResult, CliError> {
    let beta = sweep_beta(cfg)?;
    let mut rows = Vec::with_capacity(alphas.len());
    for &alpha in alphas {
        let skew = SkewParam::new(alpha)
            .map_err(|e| CliError::Config { key: "sweep.alphas".into(), reason: e.to_string() })?;
        let loss = LossSpec::AlphaJs { alpha: skew, beta };
        let exp = run_experiment(cfg, data, &loss, skew)?;
        rows.push(SweepRow {
            alpha,
            fold_f1: exp.folds.iter().map(|f| f.test.f1).collect(),
            selected_f1: exp.selected_fold().test.f1,
            average: exp.fold_average(),
        });
    }
    Ok(SweepResult { beta, rows })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn derived_seeds_differ_per_stream() {
        let seeds: Vec<u64> = (0..50).map(|s| derive_seed(7, s)).collect();
        let mut unique = seeds.clone();
        unique.sort_unstable();
        unique.dedup();
        assert_eq!(unique.len(), seeds.len());
        assert_eq!(derive_seed(7, 3), derive_seed(7, 3));
        assert_ne!(derive_seed(7, 3), derive_seed(8, 3));
    }
}
