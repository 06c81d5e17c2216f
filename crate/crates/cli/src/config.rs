//! Flat `key=value` experiment configuration.
//!
//! Lines look like `train.learning_rate=1e-4`. Blank lines and lines starting
//! with `#` are ignored. Unknown keys, repeated keys, out-of-range values and
//! keys that do not apply to the chosen loss are rejected with the key named.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use skewjs_core::{GenSpec, LossKind, LossSpec, Optimizer, SkewParam};

use crate::error::CliError;

pub const DEFAULT_HIDDEN: &[usize] = &[32];

#[derive(Debug, Clone, PartialEq)]
pub enum DataSource {
    Synthetic(GenSpec<f64>),
    Csv(PathBuf),
}

/// Which validation statistic picks the reported fold model.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SelectMetric {
    ValLoss,
    ValAccuracy,
}

impl SelectMetric {
    pub fn name(self) -> &'static str {
        match self {
            SelectMetric::ValLoss => "val_loss",
            SelectMetric::ValAccuracy => "val_accuracy",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainSettings {
    pub learning_rate: f64,
    pub iterations: usize,
    pub batch_size: usize,
    pub l2_lambda: f64,
    pub optimizer: Optimizer<f64>,
    /// Validation statistics are recorded after every `eval_every` updates.
    pub eval_every: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    /// Root seed; data, split, fold and training seeds are derived from it.
    pub seed: u64,
    pub data: DataSource,
    pub test_fraction: f64,
    pub k: usize,
    pub hidden: Vec<usize>,
    pub train: TrainSettings,
    pub loss: LossSpec<f64>,
    /// Whether `loss.kind` was given explicitly.
    pub loss_kind_set: bool,
    pub select: SelectMetric,
    pub output_dir: PathBuf,
    pub eval_alpha: SkewParam<f64>,
    pub sweep_alphas: Vec<f64>,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            data: DataSource::Synthetic(GenSpec::default()),
            test_fraction: 0.2,
            k: 5,
            hidden: DEFAULT_HIDDEN.to_vec(),
            train: TrainSettings {
                learning_rate: 1e-4,
                iterations: 5000,
                batch_size: 64,
                l2_lambda: 1e-4,
                optimizer: Optimizer::RmsProp { decay: 0.9, eps: 1e-8 },
                eval_every: 100,
            },
            loss: LossSpec::CrossEntropy,
            loss_kind_set: false,
            select: SelectMetric::ValLoss,
            output_dir: PathBuf::from("out"),
            eval_alpha: SkewParam::new(0.5).expect("0.5 is a valid skew"),
            sweep_alphas: vec![0.1, 0.5, 0.75, 0.9],
        }
    }
}

const KEYS: &[&str] = &[
    "seed",
    "data.source",
    "data.csv_path",
    "data.n_per_class",
    "data.n_features",
    "data.n_clusters",
    "data.cluster_spread",
    "data.class_offset",
    "data.mode_noise",
    "split.test_fraction",
    "split.k",
    "model.hidden",
    "train.learning_rate",
    "train.iterations",
    "train.batch_size",
    "train.l2_lambda",
    "train.optimizer",
    "train.momentum",
    "train.decay",
    "train.eps",
    "train.eval_every",
    "loss.kind",
    "loss.alpha",
    "loss.beta",
    "loss.epsilon",
    "loss.gamma",
    "loss.alpha_t",
    "select.metric",
    "output.dir",
    "eval.alpha",
    "sweep.alphas",
];

fn config_err(key: &str, reason: impl Into<String>) -> CliError {
    CliError::Config { key: key.to_string(), reason: reason.into() }
}

/// Raw key/value pairs with lookups that remember which keys were consumed.
struct Entries {
    map: BTreeMap<String, String>,
}

impl Entries {
    fn parse<T: FromStr>(&self, key: &str) -> Result<Option<T>, CliError> {
        match self.map.get(key) {
            None => Ok(None),
            Some(raw) => raw.parse().map(Some).map_err(|_| config_err(key, format!("cannot parse {raw:?}"))),
        }
    }

    fn list<T: FromStr>(&self, key: &str) -> Result<Option<Vec<T>>, CliError> {
        match self.map.get(key) {
            None => Ok(None),
            Some(raw) => raw
                .split(',')
                .map(|s| s.trim().parse().map_err(|_| config_err(key, format!("cannot parse entry {s:?}"))))
                .collect::<Result<Vec<T>, _>>()
                .map(Some),
        }
    }

    fn str(&self, key: &str) -> Option<&str> {
        self.map.get(key).map(String::as_str)
    }

    fn has(&self, key: &str) -> bool {
        self.map.contains_key(key)
    }

    /// Rejects any of `keys` that is present.
    fn forbid(&self, keys: &[&str], why: &str) -> Result<(), CliError> {
        match keys.iter().find(|k| self.has(k)) {
            Some(k) => Err(config_err(k, format!("not used {why}"))),
            None => Ok(()),
        }
    }
}

fn parse_entries(text: &str) -> Result<Entries, CliError> {
    let mut map = BTreeMap::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let Some((key, value)) = line.split_once('=') else {
            return Err(config_err(line, format!("line {} is not key=value", i + 1)));
        };
        let key = key.trim();
        if !KEYS.contains(&key) {
            return Err(config_err(key, "unknown key"));
        }
        if map.insert(key.to_string(), value.trim().to_string()).is_some() {
            return Err(config_err(key, "given more than once"));
        }
    }
    Ok(Entries { map })
}

fn check(key: &str, ok: bool, reason: &str) -> Result<(), CliError> {
    if ok {
        Ok(())
    } else {
        Err(config_err(key, reason))
    }
}

fn open_unit(key: &str, v: f64) -> Result<f64, CliError> {
    check(key, v > 0.0 && v < 1.0, "must lie strictly inside (0, 1)")?;
    Ok(v)
}

impl ExperimentConfig {
    /// Reads and validates a config file. A relative `data.csv_path` is
    /// resolved against the file's directory.
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Validation(format!("cannot read config {}: {e}", path.display())))?;
        Self::parse_with_base(&text, path.parent())
    }

    pub fn parse(text: &str) -> Result<Self, CliError> {
        Self::parse_with_base(text, None)
    }

    fn parse_with_base(text: &str, base: Option<&Path>) -> Result<Self, CliError> {
        let e = parse_entries(text)?;
        let mut cfg = ExperimentConfig::default();
        if let Some(seed) = e.parse("seed")? {
            cfg.seed = seed;
        }

        cfg.data = match e.str("data.source").unwrap_or("synthetic") {
            "synthetic" => {
                e.forbid(&["data.csv_path"], "with data.source=synthetic")?;
                DataSource::Synthetic(gen_spec(&e)?)
            }
            "csv" => {
                e.forbid(
                    &[
                        "data.n_per_class",
                        "data.n_features",
                        "data.n_clusters",
                        "data.cluster_spread",
                        "data.class_offset",
                        "data.mode_noise",
                    ],
                    "with data.source=csv",
                )?;
                let raw: PathBuf = e
                    .parse("data.csv_path")?
                    .ok_or_else(|| config_err("data.csv_path", "required with data.source=csv"))?;
                let path = match base {
                    Some(dir) if raw.is_relative() => dir.join(raw),
                    _ => raw,
                };
                check("data.csv_path", path.is_file(), &format!("no such file: {}", path.display()))?;
                DataSource::Csv(path)
            }
            other => return Err(config_err("data.source", format!("expected synthetic or csv, got {other:?}"))),
        };

        if let Some(f) = e.parse("split.test_fraction")? {
            cfg.test_fraction = open_unit("split.test_fraction", f)?;
        }
        if let Some(k) = e.parse::<usize>("split.k")? {
            check("split.k", k >= 2, "must be at least 2")?;
            cfg.k = k;
        }
        if let Some(hidden) = e.list::<usize>("model.hidden")? {
            check("model.hidden", hidden.iter().all(|&h| h > 0), "layer sizes must be positive")?;
            cfg.hidden = hidden;
        }

        let t = &mut cfg.train;
        if let Some(lr) = e.parse::<f64>("train.learning_rate")? {
            check("train.learning_rate", lr.is_finite() && lr > 0.0, "must be positive")?;
            t.learning_rate = lr;
        }
        if let Some(n) = e.parse::<usize>("train.iterations")? {
            check("train.iterations", n > 0, "must be positive")?;
            t.iterations = n;
        }
        if let Some(b) = e.parse::<usize>("train.batch_size")? {
            check("train.batch_size", b > 0, "must be positive")?;
            t.batch_size = b;
        }
        if let Some(l2) = e.parse::<f64>("train.l2_lambda")? {
            check("train.l2_lambda", l2.is_finite() && l2 >= 0.0, "must be >= 0")?;
            t.l2_lambda = l2;
        }
        if let Some(every) = e.parse::<usize>("train.eval_every")? {
            check("train.eval_every", every > 0, "must be positive")?;
            t.eval_every = every;
        }
        t.optimizer = match e.str("train.optimizer").unwrap_or("rmsprop") {
            "rmsprop" => {
                e.forbid(&["train.momentum"], "with train.optimizer=rmsprop")?;
                let decay = e.parse("train.decay")?.unwrap_or(0.9);
                let eps = e.parse("train.eps")?.unwrap_or(1e-8);
                check("train.decay", decay > 0.0 && decay < 1.0, "must lie strictly inside (0, 1)")?;
                check("train.eps", eps > 0.0 && f64::is_finite(eps), "must be positive")?;
                Optimizer::RmsProp { decay, eps }
            }
            "sgd_momentum" => {
                e.forbid(&["train.decay", "train.eps"], "with train.optimizer=sgd_momentum")?;
                let momentum = e.parse("train.momentum")?.unwrap_or(0.9);
                check("train.momentum", (0.0..1.0).contains(&momentum), "must lie in [0, 1)")?;
                Optimizer::SgdMomentum { momentum }
            }
            other => {
                return Err(config_err("train.optimizer", format!("expected rmsprop or sgd_momentum, got {other:?}")))
            }
        };

        cfg.loss_kind_set = e.has("loss.kind");
        cfg.loss = loss_spec(&e)?;

        cfg.select = match e.str("select.metric").unwrap_or("val_loss") {
            "val_loss" => SelectMetric::ValLoss,
            "val_accuracy" => SelectMetric::ValAccuracy,
            other => {
                return Err(config_err("select.metric", format!("expected val_loss or val_accuracy, got {other:?}")))
            }
        };
        if let Some(dir) = e.parse::<PathBuf>("output.dir")? {
            check("output.dir", !dir.as_os_str().is_empty(), "must not be empty")?;
            cfg.output_dir = dir;
        }
        if let Some(a) = e.parse::<f64>("eval.alpha")? {
            cfg.eval_alpha = SkewParam::new(open_unit("eval.alpha", a)?).expect("checked above");
        }
        if let Some(alphas) = e.list::<f64>("sweep.alphas")? {
            cfg.sweep_alphas = check_alphas("sweep.alphas", alphas)?;
        }
        Ok(cfg)
    }

    /// Layer sizes including input and output for a dataset shape.
    pub fn layer_dims(&self, n_features: usize, n_classes: usize) -> Vec<usize> {
        let mut dims = Vec::with_capacity(self.hidden.len() + 2);
        dims.push(n_features);
        dims.extend_from_slice(&self.hidden);
        dims.push(n_classes);
        dims
    }

    /// `key=value` lines describing the training setup, for reports.
    pub fn describe(&self) -> String {
        let mut out = String::new();
        let t = &self.train;
        let hidden: Vec<String> = self.hidden.iter().map(usize::to_string).collect();
        let _ = writeln!(out, "loss={}", self.loss);
        let _ = writeln!(out, "optimizer={}", t.optimizer);
        let _ = writeln!(out, "learning_rate={}", t.learning_rate);
        let _ = writeln!(out, "iterations={}", t.iterations);
        let _ = writeln!(out, "batch_size={}", t.batch_size);
        let _ = writeln!(out, "l2_lambda={}", t.l2_lambda);
        let _ = writeln!(out, "hidden={}", hidden.join(","));
        let _ = writeln!(out, "seed={}", self.seed);
        let _ = writeln!(out, "test_fraction={}", self.test_fraction);
        let _ = writeln!(out, "k={}", self.k);
        let _ = writeln!(out, "select_metric={}", self.select.name());
        out
    }
}

pub fn check_alphas(key: &str, alphas: Vec<f64>) -> Result<Vec<f64>, CliError> {
    check(key, !alphas.is_empty(), "needs at least one value")?;
    for &a in &alphas {
        check(key, a > 0.0 && a < 1.0, &format!("{a} is not strictly inside (0, 1)"))?;
    }
    Ok(alphas)
}

fn gen_spec(e: &Entries) -> Result<GenSpec<f64>, CliError> {
    let mut spec = GenSpec::<f64>::default();
    if let Some(counts) = e.list::<usize>("data.n_per_class")? {
        check("data.n_per_class", counts.len() == 2, "expects two counts, majority then minority")?;
        spec.n_per_class = [counts[0], counts[1]];
    }
    if let Some(v) = e.parse("data.n_features")? {
        spec.n_features = v;
    }
    if let Some(v) = e.parse("data.n_clusters")? {
        spec.n_clusters = v;
    }
    if let Some(v) = e.parse("data.cluster_spread")? {
        spec.cluster_spread = v;
    }
    if let Some(v) = e.parse("data.class_offset")? {
        spec.class_offset = v;
    }
    if let Some(v) = e.parse("data.mode_noise")? {
        spec.mode_noise = v;
    }
    spec.validate().map_err(|err| match err {
        skewjs_core::Error::InvalidParameter { name, reason } => config_err(&format!("data.{name}"), reason),
        other => config_err("data", other.to_string()),
    })?;
    Ok(spec)
}

fn loss_spec(e: &Entries) -> Result<LossSpec<f64>, CliError> {
    let name = e.str("loss.kind").unwrap_or("cross_entropy");
    let kind = LossKind::ALL.iter().copied().find(|k| k.name() == name).ok_or_else(|| {
        let names: Vec<&str> = LossKind::ALL.iter().map(|k| k.name()).collect();
        config_err("loss.kind", format!("expected one of {}, got {name:?}", names.join(", ")))
    })?;
    let all = ["loss.alpha", "loss.beta", "loss.epsilon", "loss.gamma", "loss.alpha_t"];
    let used: &[&str] = match kind {
        LossKind::CrossEntropy => &[],
        LossKind::Focal => &["loss.gamma", "loss.alpha_t"],
        LossKind::LabelSmoothing => &["loss.epsilon"],
        LossKind::MaxEntropy => &["loss.beta"],
        LossKind::AlphaJs => &["loss.alpha", "loss.beta"],
    };
    let unused: Vec<&str> = all.iter().copied().filter(|k| !used.contains(k)).collect();
    e.forbid(&unused, &format!("with loss.kind={}", kind.name()))?;

    let beta = e.parse::<f64>("loss.beta")?.unwrap_or(1.0);
    check("loss.beta", beta.is_finite() && beta >= 0.0, "must be >= 0")?;
    let spec = match kind {
        LossKind::CrossEntropy => LossSpec::CrossEntropy,
        LossKind::Focal => {
            let gamma = e.parse::<f64>("loss.gamma")?.unwrap_or(2.0);
            let alpha_t = e.parse::<f64>("loss.alpha_t")?.unwrap_or(0.25);
            check("loss.gamma", gamma.is_finite() && gamma >= 0.0, "must be >= 0")?;
            check("loss.alpha_t", alpha_t > 0.0 && alpha_t <= 1.0, "must lie in (0, 1]")?;
            LossSpec::focal(gamma, alpha_t).map_err(|err| config_err("loss", err.to_string()))?
        }
        LossKind::LabelSmoothing => {
            let eps = e.parse::<f64>("loss.epsilon")?.unwrap_or(0.1);
            check("loss.epsilon", (0.0..=1.0).contains(&eps), "must lie in [0, 1]")?;
            LossSpec::label_smoothing(eps).map_err(|err| config_err("loss.epsilon", err.to_string()))?
        }
        LossKind::MaxEntropy => LossSpec::max_entropy(beta).map_err(|err| config_err("loss.beta", err.to_string()))?,
        LossKind::AlphaJs => {
            let alpha = e
                .parse::<f64>("loss.alpha")?
                .ok_or_else(|| config_err("loss.alpha", "required with loss.kind=alpha_js"))?;
            open_unit("loss.alpha", alpha)?;
            LossSpec::alpha_js(alpha, beta).map_err(|err| config_err("loss", err.to_string()))?
        }
    };
    Ok(spec)
}
