//! Subcommand implementations. Each writes its files under the output
//! directory and prints a short summary to `out`.

use std::fmt::Write as _;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use skewjs_core::data::write_csv;
use skewjs_core::eval::pca_top2;
use skewjs_core::prob::{alpha_js, entropy, jsd, kl};
use skewjs_core::{MlpModel, NormStats, ProbVector, SkewParam};

use crate::config::{DataSource, ExperimentConfig};
use crate::error::CliError;
use crate::harness::{self, Experiment, SweepResult};

fn create_dir(dir: &Path) -> Result<(), CliError> {
    fs::create_dir_all(dir).map_err(|e| CliError::io(format!("creating {}", dir.display()), e))
}

fn write_file(path: &Path, contents: &str) -> Result<(), CliError> {
    fs::write(path, contents).map_err(|e| CliError::io(format!("writing {}", path.display()), e))
}

fn say(out: &mut dyn Write, text: &str) -> Result<(), CliError> {
    out.write_all(text.as_bytes()).map_err(|e| CliError::io("writing to stdout", e))
}

/// Writes the configured synthetic dataset to `<out>/data.csv`.
pub fn cmd_gen_data(cfg: &ExperimentConfig, out: &mut dyn Write) -> Result<PathBuf, CliError> {
    if let DataSource::Csv(_) = cfg.data {
        return Err(CliError::Config {
            key: "data.source".into(),
            reason: "gen-data needs data.source=synthetic".into(),
        });
    }
    let data = harness::load_dataset(cfg)?;
    create_dir(&cfg.output_dir)?;
    let path = cfg.output_dir.join("data.csv");
    let mut buf = Vec::new();
    write_csv(&data, &mut buf).map_err(|e| CliError::io("formatting CSV", e))?;
    fs::write(&path, buf).map_err(|e| CliError::io(format!("writing {}", path.display()), e))?;

    let mut msg = format!("wrote {} rows to {}\n", data.n_samples(), path.display());
    for (c, count) in data.class_counts().iter().enumerate() {
        let _ = writeln!(msg, "class {c} ({}): {count}", data.class_names()[c]);
    }
    say(out, &msg)?;
    Ok(path)
}

pub fn norm_to_text(norm: &NormStats<f64>) -> String {
    let join = |v: &[f64]| v.iter().map(f64::to_string).collect::<Vec<_>>().join(",");
    format!("mean {}\nstd {}\n", join(&norm.mean), join(&norm.std))
}

pub fn norm_from_text(text: &str) -> Result<NormStats<f64>, CliError> {
    let bad = |why: &str| CliError::Validation(format!("normalization file: {why}"));
    let field = |lines: &mut std::str::Lines, name: &str| -> Result<Vec<f64>, CliError> {
        let line = lines.next().ok_or_else(|| bad(&format!("missing `{name}` line")))?;
        let rest = line
            .strip_prefix(name)
            .and_then(|r| r.strip_prefix(' '))
            .ok_or_else(|| bad(&format!("expected `{name}`")))?;
        rest.split(',').map(|s| s.parse().map_err(|_| bad(&format!("bad number {s:?}")))).collect()
    };
    let mut lines = text.lines();
    let mean = field(&mut lines, "mean")?;
    let std = field(&mut lines, "std")?;
    if mean.len() != std.len() {
        return Err(bad("mean and std lengths differ"));
    }
    Ok(NormStats { mean, std })
}

/// The metrics report of a finished experiment.
pub fn train_report(cfg: &ExperimentConfig, exp: &Experiment) -> String {
    let mut out = cfg.describe();
    let chosen = exp.selected_fold();
    let _ = writeln!(out, "selected_fold={}", exp.selected);
    let _ = writeln!(out, "positive_class_name={}", exp.class_names[exp.positive_class]);
    let _ = writeln!(out, "test_samples={}", exp.test_size);
    let _ = writeln!(out, "# test set, selected fold model");
    out.push_str(&chosen.test.to_report());
    let avg = exp.fold_average();
    let _ = writeln!(out, "# test set, mean over fold models");
    let _ = writeln!(out, "fold_mean_f1={}", avg.f1);
    let _ = writeln!(out, "fold_mean_accuracy={}", avg.accuracy);
    let _ = writeln!(out, "fold_mean_entropy={}", avg.mean_entropy);
    let _ = writeln!(out, "fold_mean_normalized_entropy={}", avg.mean_normalized_entropy);
    let _ = writeln!(out, "fold_mean_alpha_js_to_uniform={}", avg.mean_alpha_js_to_uniform);
    out
}

fn folds_csv(exp: &Experiment) -> String {
    let mut out = String::from(
        "fold,train_size,val_size,final_val_loss,final_val_accuracy,best_val_loss_iteration,best_val_loss,\
         best_val_accuracy_iteration,best_val_accuracy,test_f1,test_accuracy\n",
    );
    for f in &exp.folds {
        let (last, bl, ba) = (f.final_validation(), f.best_val_loss(), f.best_val_accuracy());
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{},{},{},{},{}",
            f.fold,
            f.train_size,
            f.val_size,
            last.loss,
            last.accuracy,
            bl.iteration,
            bl.loss,
            ba.iteration,
            ba.accuracy,
            f.test.f1,
            f.test.accuracy
        );
    }
    out
}

fn traces_csv(exp: &Experiment) -> String {
    let mut out = String::from("fold,iteration,objective\n");
    for f in &exp.folds {
        for (i, v) in f.loss_trace.iter().enumerate() {
            let _ = writeln!(out, "{},{},{v}", f.fold, i + 1);
        }
    }
    out
}

fn validation_csv(exp: &Experiment) -> String {
    let mut out = String::from("fold,iteration,val_loss,val_accuracy\n");
    for f in &exp.folds {
        for p in &f.validation {
            let _ = writeln!(out, "{},{},{},{}", f.fold, p.iteration, p.loss, p.accuracy);
        }
    }
    out
}

/// Cross-validated training. Writes `metrics.txt`, `model.txt` (with its
/// normalization in `model.norm`), `folds.csv`, `traces.csv` and
/// `validation.csv`.
pub fn cmd_train(cfg: &ExperimentConfig, out: &mut dyn Write) -> Result<Experiment, CliError> {
    let data = harness::load_dataset(cfg)?;
    let exp = harness::run_experiment(cfg, &data, &cfg.loss, cfg.eval_alpha)?;
    let dir = &cfg.output_dir;
    create_dir(dir)?;
    let report = train_report(cfg, &exp);
    write_file(&dir.join("metrics.txt"), &report)?;
    write_file(&dir.join("model.txt"), &exp.selected_fold().model.to_text())?;
    write_file(&dir.join("model.norm"), &norm_to_text(&exp.selected_fold().norm))?;
    write_file(&dir.join("folds.csv"), &folds_csv(&exp))?;
    write_file(&dir.join("traces.csv"), &traces_csv(&exp))?;
    write_file(&dir.join("validation.csv"), &validation_csv(&exp))?;
    say(out, &report)?;
    Ok(exp)
}

pub fn sweep_csv(result: &SweepResult) -> String {
    let k = result.rows.first().map_or(0, |r| r.fold_f1.len());
    let mut out = String::from("alpha");
    for f in 0..k {
        let _ = write!(out, ",f1_fold_{f}");
    }
    out.push_str(",mean_f1,selected_f1,mean_entropy,mean_normalized_entropy,mean_alpha_js\n");
    for r in &result.rows {
        let _ = write!(out, "{}", r.alpha);
        for f in &r.fold_f1 {
            let _ = write!(out, ",{f}");
        }
        let a = &r.average;
        let _ = writeln!(
            out,
            ",{},{},{},{},{}",
            a.f1, r.selected_f1, a.mean_entropy, a.mean_normalized_entropy, a.mean_alpha_js_to_uniform
        );
    }
    out
}

pub fn entropy_f1_csv(result: &SweepResult) -> String {
    let mut out = String::from("alpha,mean_normalized_entropy,mean_f1\n");
    for r in &result.rows {
        let _ = writeln!(out, "{},{},{}", r.alpha, r.average.mean_normalized_entropy, r.average.f1);
    }
    out
}

/// One cross-validated run per α. Writes `sweep.csv` and `entropy_f1.csv`.
pub fn cmd_sweep_alpha(cfg: &ExperimentConfig, alphas: &[f64], out: &mut dyn Write) -> Result<SweepResult, CliError> {
    let alphas = crate::config::check_alphas("sweep.alphas", alphas.to_vec())?;
    harness::sweep_beta(cfg)?;
    let data = harness::load_dataset(cfg)?;
    let result = harness::sweep(cfg, &data, &alphas)?;
    create_dir(&cfg.output_dir)?;
    let table = sweep_csv(&result);
    write_file(&cfg.output_dir.join("sweep.csv"), &table)?;
    write_file(&cfg.output_dir.join("entropy_f1.csv"), &entropy_f1_csv(&result))?;
    say(out, &table)?;
    Ok(result)
}

/// `%.12g`-style formatting: 12 significant digits.
pub fn sig12(v: f64) -> String {
    if v == 0.0 {
        return "0".into();
    }
    if !v.is_finite() {
        return v.to_string();
    }
    let exp = v.abs().log10().floor() as i32;
    if (-5..12).contains(&exp) {
        let decimals = (11 - exp).max(0) as usize;
        format!("{v:.decimals$}")
    } else {
        format!("{v:.11e}")
    }
}

fn parse_dist(name: &str, raw: &str) -> Result<ProbVector<f64>, CliError> {
    let values = raw
        .split(',')
        .enumerate()
        .map(|(i, s)| {
            s.trim()
                .parse::<f64>()
                .map_err(|_| CliError::Validation(format!("{name}[{i}]: cannot parse {:?} as a number", s.trim())))
        })
        .collect::<Result<Vec<_>, _>>()?;
    ProbVector::new(values).map_err(|e| CliError::Validation(format!("{name}: {e}")))
}

fn line(label: &str, value: skewjs_core::Result<f64>) -> String {
    match value {
        Ok(v) => format!("{label}={}\n", sig12(v)),
        Err(e) => format!("{label}=error: {e}\n"),
    }
}

/// Prints entropies and divergences of two distributions.
pub fn cmd_divergence(p: &str, q: &str, alpha: Option<f64>, out: &mut dyn Write) -> Result<(), CliError> {
    let p = parse_dist("p", p)?;
    let q = parse_dist("q", q)?;
    if p.len() != q.len() {
        return Err(CliError::Validation(format!("p has {} entries but q has {}", p.len(), q.len())));
    }
    let skew = alpha.map(|a| SkewParam::new(a).map_err(|e| CliError::Validation(format!("alpha: {e}")))).transpose()?;
    let mut text = String::new();
    text += &line("H(p)", Ok(entropy(&p)));
    text += &line("H(q)", Ok(entropy(&q)));
    text += &line("KL(p||q)", kl(&p, &q));
    text += &line("KL(q||p)", kl(&q, &p));
    text += &line("JSD(p,q)", jsd(&p, &q));
    if let Some(a) = skew {
        text += &line(&format!("J_alpha(p||q) alpha={}", a.value()), alpha_js(&p, &q, a));
    }
    say(out, &text)
}

/// Projects penultimate activations of the test split on their top two
/// principal components. Writes `projection.csv`.
pub fn cmd_project(cfg: &ExperimentConfig, model_path: &Path, out: &mut dyn Write) -> Result<PathBuf, CliError> {
    let text = fs::read_to_string(model_path)
        .map_err(|e| CliError::Validation(format!("cannot read model {}: {e}", model_path.display())))?;
    let model = MlpModel::<f64>::from_text(&text)?;
    let norm_path = model_path.with_extension("norm");
    let norm_text = fs::read_to_string(&norm_path)
        .map_err(|e| CliError::Validation(format!("cannot read {}: {e}", norm_path.display())))?;
    let norm = norm_from_text(&norm_text)?;

    let data = harness::load_dataset(cfg)?;
    if data.n_features() != model.input_dim() {
        return Err(
            skewjs_core::Error::DimensionMismatch { expected: model.input_dim(), got: data.n_features() }.into()
        );
    }
    let (_, test_idx) = harness::holdout_indices(cfg, &data)?;
    let test = norm.apply(&data.subset(&test_idx))?;
    let width = *model.layer_dims().iter().rev().nth(1).expect("at least two layer dims");
    let mut features = Vec::with_capacity(test.n_samples() * width);
    for x in test.rows() {
        features.extend(model.penultimate(x)?);
    }
    let proj = pca_top2(&features, width)?.with_labels(test.labels().to_vec())?;

    create_dir(&cfg.output_dir)?;
    let path = cfg.output_dir.join("projection.csv");
    let mut buf = Vec::new();
    proj.write_csv(&mut buf).map_err(|e| CliError::io("formatting CSV", e))?;
    fs::write(&path, buf).map_err(|e| CliError::io(format!("writing {}", path.display()), e))?;

    let [v1, v2] = proj.explained_variance;
    let mut msg = format!("wrote {} rows to {}\n", proj.points.len(), path.display());
    let _ = writeln!(msg, "explained_variance_pc1={v1}");
    let _ = writeln!(msg, "explained_variance_pc2={v2}");
    if proj.degenerate_spectrum {
        msg.push_str("warning: leading eigenvalues coincide; directions are not unique\n");
    }
    say(out, &msg)?;
    Ok(path)
}
