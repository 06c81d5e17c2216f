//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits
//! non-zero if a criterion fails that is not listed in `KNOWN_UNATTAINABLE`.

use std::fs;
use std::path::Path;
use std::process::Command;
use std::time::Instant;

use nalgebra::{DMatrix, SymmetricEigen};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use skewjs_cli::harness::{load_dataset, run_experiment, sweep, SweepResult};
use skewjs_cli::ExperimentConfig;
use skewjs_core::data::{generate_synthetic, stratified_kfold, stratified_split_indices};
use skewjs_core::eval::{confusion_matrix, f1_score, pca_top2, ConfusionMatrix};
use skewjs_core::losses::{
    alpha_js_loss, focal_loss, label_smoothing_loss, loss, loss_gradient, max_entropy_loss, softmax,
};
use skewjs_core::model::batch_objective;
use skewjs_core::prob::{alpha_js, alpha_js_entropy_form, entropy, jsd, kl};
use skewjs_core::{Dataset, GenSpec, Logits, LossSpec, MlpModel, ProbVector, SkewParam};

/// Criteria that cannot hold as stated; see the explanation printed with them.
const KNOWN_UNATTAINABLE: &[u32] = &[5];

const DIMS: [usize; 4] = [2, 3, 5, 10];
const SWEEP_ALPHAS: [f64; 4] = [0.1, 0.5, 0.75, 0.9];

struct Outcome {
    id: u32,
    pass: bool,
    detail: String,
}

fn report(id: u32, title: &str, pass: bool, detail: String) -> Outcome {
    println!("[{}] criterion {id:>2}: {title}: {detail}", if pass { "PASS" } else { "FAIL" });
    Outcome { id, pass, detail }
}

fn random_dist(rng: &mut ChaCha8Rng, n: usize) -> ProbVector<f64> {
    let raw: Vec<f64> = (0..n).map(|_| rng.random_range(1e-3..1.0)).collect();
    let total: f64 = raw.iter().sum();
    ProbVector::new(raw.into_iter().map(|x| x / total).collect()).unwrap()
}

fn criterion_1() -> Outcome {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let (mut form_gap, mut half_gap, mut diag, mut min_div) = (0.0f64, 0.0f64, 0.0f64, f64::INFINITY);
    for i in 0..10_000 {
        let n = DIMS[i % 4];
        let (p, q) = (random_dist(&mut rng, n), random_dist(&mut rng, n));
        let a = SkewParam::new(rng.random_range(0.01..0.99)).unwrap();
        let js = alpha_js(&p, &q, a).unwrap();
        form_gap = form_gap.max((js - alpha_js_entropy_form(&p, &q, a).unwrap()).abs());
        let half = alpha_js(&p, &q, SkewParam::new(0.5).unwrap()).unwrap();
        half_gap = half_gap.max((half - 4.0 * jsd(&p, &q).unwrap()).abs());
        min_div = min_div.min(js).min(kl(&p, &q).unwrap()).min(jsd(&p, &q).unwrap());
        diag =
            diag.max(alpha_js(&p, &p, a).unwrap().abs()).max(kl(&p, &p).unwrap().abs()).max(jsd(&p, &p).unwrap().abs());
    }
    let secs = start.elapsed().as_secs_f64();
    let pass = form_gap < 1e-12 && half_gap < 1e-10 && min_div >= 0.0 && diag < 1e-12 && secs < 10.0;
    report(
        1,
        "divergence identities",
        pass,
        format!(
            "max |kl form - entropy form| {form_gap:.2e}, max |J(.5) - 4 JSD| {half_gap:.2e}, \
             min divergence {min_div:.2e}, max at p=q {diag:.2e}, {secs:.2}s"
        ),
    )
}

fn criterion_2() -> Outcome {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let (lo, hi) = (SkewParam::new(1e-6).unwrap(), SkewParam::new(1.0 - 1e-6).unwrap());
    let (mut low_gap, mut high_gap) = (0.0f64, 0.0f64);
    for &n in &DIMS {
        let u = ProbVector::uniform(n).unwrap();
        for _ in 0..100 {
            let p = random_dist(&mut rng, n);
            low_gap = low_gap.max((alpha_js(&u, &p, lo).unwrap() - ((n as f64).ln() - entropy(&p))).abs());
            high_gap = high_gap.max((alpha_js(&u, &p, hi).unwrap() - kl(&u, &p).unwrap()).abs());
        }
    }
    let secs = start.elapsed().as_secs_f64();
    let pass = low_gap < 1e-4 && high_gap < 1e-4 && secs < 1.0;
    report(2, "skew limits", pass, format!("alpha->0 gap {low_gap:.2e}, alpha->1 gap {high_gap:.2e}, {secs:.3}s"))
}

fn rel_err(a: &[f64], b: &[f64]) -> f64 {
    let scale = a.iter().chain(b).fold(0.0f64, |m, x| m.max(x.abs()));
    let diff = a.iter().zip(b).fold(0.0f64, |m, (x, y)| m.max((x - y).abs()));
    if scale > 0.0 {
        diff / scale
    } else {
        diff
    }
}

fn random_spec(rng: &mut ChaCha8Rng, kind: usize) -> LossSpec<f64> {
    match kind {
        0 => LossSpec::CrossEntropy,
        1 => LossSpec::focal(rng.random_range(0.0..4.0), rng.random_range(0.05..1.0)).unwrap(),
        2 => LossSpec::label_smoothing(rng.random_range(0.0..1.0)).unwrap(),
        3 => LossSpec::max_entropy(rng.random_range(0.0..3.0)).unwrap(),
        _ => LossSpec::alpha_js(rng.random_range(0.01..0.99), rng.random_range(0.0..3.0)).unwrap(),
    }
}

fn mlp_gradient_error(spec: &LossSpec<f64>, seed: u64) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let rows: Vec<Vec<f64>> = (0..8).map(|_| vec![rng.random_range(-2.0..2.0), rng.random_range(-2.0..2.0)]).collect();
    let data = Dataset::from_rows(&rows, (0..8).map(|i| i % 2).collect(), 2).unwrap();
    let idx: Vec<usize> = (0..8).collect();
    let model = MlpModel::<f64>::init(&[2, 4, 2], seed).unwrap();
    let l2 = 1e-2;
    let analytic = batch_objective(&model, spec, &data, &idx, l2).unwrap().1.flatten();
    let f = |m: &MlpModel<f64>| batch_objective(m, spec, &data, &idx, l2).unwrap().0;
    let h = 1e-5;
    let mut numeric = Vec::new();
    let mut probe = model.clone();
    for l in 0..model.weights().len() {
        for i in 0..model.weights()[l].len() {
            let w = model.weights()[l][i];
            probe.weights_mut()[l][i] = w + h;
            let up = f(&probe);
            probe.weights_mut()[l][i] = w - h;
            let down = f(&probe);
            probe.weights_mut()[l][i] = w;
            numeric.push((up - down) / (2.0 * h));
        }
    }
    for l in 0..model.biases().len() {
        for i in 0..model.biases()[l].len() {
            let b = model.biases()[l][i];
            probe.biases_mut()[l][i] = b + h;
            let up = f(&probe);
            probe.biases_mut()[l][i] = b - h;
            let down = f(&probe);
            probe.biases_mut()[l][i] = b;
            numeric.push((up - down) / (2.0 * h));
        }
    }
    rel_err(&analytic, &numeric)
}

fn criterion_3() -> Outcome {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut worst = 0.0f64;
    let h = 1e-5;
    for kind in 0..5 {
        for &n in &DIMS {
            for _ in 0..100 {
                let spec = random_spec(&mut rng, kind);
                let z: Vec<f64> = (0..n).map(|_| rng.random_range(-4.0..4.0)).collect();
                let label = rng.random_range(0..n);
                let g = loss_gradient(&spec, &Logits::new(z.clone()).unwrap(), label).unwrap();
                let mut w = z.clone();
                let numeric: Vec<f64> = (0..n)
                    .map(|i| {
                        w[i] = z[i] + h;
                        let up = loss(&spec, &Logits::new(w.clone()).unwrap(), label).unwrap();
                        w[i] = z[i] - h;
                        let down = loss(&spec, &Logits::new(w.clone()).unwrap(), label).unwrap();
                        w[i] = z[i];
                        (up - down) / (2.0 * h)
                    })
                    .collect();
                worst = worst.max(rel_err(&g, &numeric));
            }
        }
    }
    let mut mlp_worst = 0.0f64;
    for kind in 0..5 {
        let spec = random_spec(&mut rng, kind);
        mlp_worst = mlp_worst.max(mlp_gradient_error(&spec, 30 + kind as u64));
    }
    let secs = start.elapsed().as_secs_f64();
    let pass = worst < 1e-6 && mlp_worst < 1e-5 && secs < 30.0;
    report(
        3,
        "gradient fidelity",
        pass,
        format!("logit gradients max rel err {worst:.2e}, 2-4-2 MLP max rel err {mlp_worst:.2e}, {secs:.2}s"),
    )
}

fn criterion_4() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let mut worst = 0.0f64;
    for i in 0..1000 {
        let n = DIMS[i % 4];
        let z: Vec<f64> = (0..n).map(|_| rng.random_range(-5.0..5.0)).collect();
        let label = rng.random_range(0..n);
        let p = softmax(&Logits::new(z).unwrap());
        let ce = -p.as_slice()[label].ln();
        let a = SkewParam::new(rng.random_range(0.01..0.99)).unwrap();
        for v in [
            focal_loss(&p, label, 0.0, 1.0).unwrap(),
            label_smoothing_loss(&p, label, 0.0).unwrap(),
            max_entropy_loss(&p, label, 0.0).unwrap(),
            alpha_js_loss(&p, label, a, 0.0).unwrap(),
        ] {
            worst = worst.max((v - ce).abs());
        }
    }
    report(4, "reduction identities", worst < 1e-12, format!("max deviation from cross-entropy {worst:.2e}"))
}

fn criterion_5() -> Outcome {
    let data = generate_synthetic(&GenSpec::<f64>::default()).unwrap();
    let mut kfold_spread = 0usize;
    for seed in 0..5 {
        let (train, _) = stratified_split_indices(&data, 0.2, seed).unwrap();
        let pool = data.subset(&train);
        let folds = stratified_kfold(&pool, 5, seed + 100).unwrap();
        for class in 0..2 {
            let mut per_fold = [0usize; 5];
            for (i, &f) in folds.fold_assignments.iter().enumerate() {
                if pool.labels()[i] == class {
                    per_fold[f] += 1;
                }
            }
            kfold_spread = kfold_spread.max(per_fold.iter().max().unwrap() - per_fold.iter().min().unwrap());
        }
    }
    let (_, test) = stratified_split_indices(&data, 0.2, 0).unwrap();
    let counts = data.subset(&test).class_counts();
    let (majority_ok, minority_ok) = (counts[0].abs_diff(659) <= 1, counts[1].abs_diff(227) <= 1);
    let pass = kfold_spread <= 1 && majority_ok && minority_ok;
    report(
        5,
        "protocol fidelity",
        pass,
        format!(
            "k-fold per-class spread {kfold_spread} (need <= 1); 0.2 split test counts ({}, {}) vs expected (659, 227) +- 1. \
             A stratified 0.2 split of 760 minority samples gives 152; 227 is 29.9% of 760, so the expected minority \
             count is unreachable by the stated protocol",
            counts[0], counts[1]
        ),
    )
}

fn naive_f1(y: &[usize], p: &[usize], pos: usize) -> f64 {
    let count = |f: &dyn Fn(usize, usize) -> bool| y.iter().zip(p).filter(|&(&a, &b)| f(a, b)).count() as f64;
    let tp = count(&|a, b| a == pos && b == pos);
    let fp = count(&|a, b| a != pos && b == pos);
    let fn_ = count(&|a, b| a == pos && b != pos);
    if tp == 0.0 {
        0.0
    } else {
        2.0 * tp / (2.0 * tp + fp + fn_)
    }
}

fn criterion_6() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let mut mismatches = 0usize;
    for _ in 0..1000 {
        let n_classes = rng.random_range(2..5);
        let len = rng.random_range(1..100);
        let y: Vec<usize> = (0..len).map(|_| rng.random_range(0..n_classes)).collect();
        let p: Vec<usize> = (0..len).map(|_| rng.random_range(0..n_classes)).collect();
        let cm = confusion_matrix(&y, &p, n_classes).unwrap();
        for t in 0..n_classes {
            for q in 0..n_classes {
                if cm.get(t, q) != y.iter().zip(&p).filter(|&(&a, &b)| a == t && b == q).count() {
                    mismatches += 1;
                }
            }
        }
        let acc = y.iter().zip(&p).filter(|(a, b)| a == b).count() as f64 / len as f64;
        if cm.accuracy() != acc {
            mismatches += 1;
        }
        let pos = rng.random_range(0..n_classes);
        if f1_score(&cm, pos) != naive_f1(&y, &p, pos) {
            mismatches += 1;
        }
    }
    // TP=5, FP=1, FN=1, TN=3 with class 1 positive.
    let cm = ConfusionMatrix::from_counts(2, vec![3, 1, 1, 5]).unwrap();
    let f1 = f1_score(&cm, 1);
    let pass = mismatches == 0 && (f1 - 0.833333).abs() < 1e-6 && (f1 - 5.0 / 6.0).abs() < 1e-9;
    report(6, "metric oracle", pass, format!("{mismatches} mismatches over 1000 sets, F1(5,1,1) = {f1:.9}"))
}

fn criterion_7() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let (mut vec_err, mut val_err, mut ortho_err) = (0.0f64, 0.0f64, 0.0f64);
    for _ in 0..20 {
        let scales: Vec<f64> = (0..5).map(|_| rng.random_range(0.2..3.0)).collect();
        let x: Vec<f64> = (0..250).map(|i| rng.random_range(-1.0..1.0) * scales[i % 5]).collect();
        let proj = pca_top2(&x, 5).unwrap();

        let m = DMatrix::from_row_slice(50, 5, &x);
        let mean = m.row_mean();
        let mut c = m.clone();
        for mut r in c.row_iter_mut() {
            r -= &mean;
        }
        let eig = SymmetricEigen::new((c.transpose() * &c) / 49.0);
        let mut order: Vec<usize> = (0..5).collect();
        order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
        for (k, &col) in order.iter().take(2).enumerate() {
            let oracle: Vec<f64> = eig.eigenvectors.column(col).iter().copied().collect();
            let dot: f64 = proj.components[k].iter().zip(&oracle).map(|(a, b)| a * b).sum();
            for (a, b) in proj.components[k].iter().zip(&oracle) {
                vec_err = vec_err.max((a - dot.signum() * b).abs());
            }
            val_err = val_err.max((proj.explained_variance[k] - eig.eigenvalues[col]).abs());
        }
        let d = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(x, y)| x * y).sum::<f64>();
        let [c1, c2] = &proj.components;
        ortho_err = ortho_err.max((d(c1, c1) - 1.0).abs()).max((d(c2, c2) - 1.0).abs()).max(d(c1, c2).abs());
    }
    let pass = vec_err < 1e-8 && ortho_err < 1e-9;
    report(
        7,
        "PCA vs dense eigensolver",
        pass,
        format!("max component error {vec_err:.2e} (up to sign), max eigenvalue error {val_err:.2e}, orthonormality {ortho_err:.2e}"),
    )
}

/// Adjacent pairs that move against the expected direction.
fn inversions(values: &[f64], increasing: bool) -> usize {
    values.windows(2).filter(|w| if increasing { w[1] < w[0] } else { w[1] > w[0] }).count()
}

struct TrendRuns {
    /// Per seed, the α sweep.
    sweeps: Vec<SweepResult>,
    /// Per seed, fold-averaged test F1 of the unregularized model.
    baseline_f1: Vec<f64>,
    seconds_first_five: f64,
    seconds_total: f64,
}

fn trend_runs() -> TrendRuns {
    let start = Instant::now();
    let mut sweeps = Vec::new();
    let mut baseline_f1 = Vec::new();
    let mut seconds_first_five = 0.0;
    for seed in 1..=10u64 {
        let cfg = ExperimentConfig { seed, ..ExperimentConfig::default() };
        let data = load_dataset(&cfg).unwrap();
        sweeps.push(sweep(&cfg, &data, &SWEEP_ALPHAS).unwrap());
        if seed == 5 {
            seconds_first_five = start.elapsed().as_secs_f64();
        }
        let base = run_experiment(&cfg, &data, &LossSpec::CrossEntropy, cfg.eval_alpha).unwrap();
        baseline_f1.push(base.fold_average().f1);
    }
    TrendRuns { sweeps, baseline_f1, seconds_first_five, seconds_total: start.elapsed().as_secs_f64() }
}

fn per_alpha_mean(sweeps: &[SweepResult], f: impl Fn(&skewjs_cli::SweepRow) -> f64) -> Vec<f64> {
    (0..SWEEP_ALPHAS.len()).map(|i| sweeps.iter().map(|s| f(&s.rows[i])).sum::<f64>() / sweeps.len() as f64).collect()
}

fn criterion_8(runs: &TrendRuns) -> Outcome {
    let five = &runs.sweeps[..5];
    let h = per_alpha_mean(five, |r| r.average.mean_entropy);
    let js = per_alpha_mean(five, |r| r.average.mean_alpha_js_to_uniform);
    let (hi, ji) = (inversions(&h, true), inversions(&js, false));
    let pass = hi <= 1 && ji <= 1 && runs.seconds_first_five < 600.0;
    let fmt = |v: &[f64]| v.iter().map(|x| format!("{x:.4}")).collect::<Vec<_>>().join(", ");
    report(
        8,
        "entropy and divergence trends over alpha",
        pass,
        format!(
            "alpha {SWEEP_ALPHAS:?}: mean H [{}] ({hi} inversions), mean J(u||p) [{}] ({ji} inversions), sweep time {:.1}s",
            fmt(&h),
            fmt(&js),
            runs.seconds_first_five
        ),
    )
}

fn criterion_9(runs: &TrendRuns) -> Outcome {
    let f1 = per_alpha_mean(&runs.sweeps, |r| r.average.f1);
    let (best_i, best) =
        f1.iter().copied().enumerate().fold((0, f64::NEG_INFINITY), |acc, (i, v)| if v > acc.1 { (i, v) } else { acc });
    let base = runs.baseline_f1.iter().sum::<f64>() / runs.baseline_f1.len() as f64;
    let delta = best - base;
    let pass = best >= base - 0.002 && runs.seconds_total < 900.0;
    report(
        9,
        "regularization does not degrade F1",
        pass,
        format!(
            "10 seeds: cross-entropy mean F1 {base:.4}, best alpha {} mean F1 {best:.4}, delta {delta:+.4}, {:.1}s",
            SWEEP_ALPHAS[best_i], runs.seconds_total
        ),
    )
}

fn run_cli(args: &[&str], dir: &Path) -> Vec<u8> {
    let output = Command::new(env!("CARGO_BIN_EXE_skewjs")).args(args).current_dir(dir).output().unwrap();
    assert!(output.status.success(), "skewjs {args:?} failed: {}", String::from_utf8_lossy(&output.stderr));
    output.stdout
}

fn read_tree(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut files: Vec<(String, Vec<u8>)> = fs::read_dir(dir)
        .unwrap()
        .map(|e| e.unwrap().path())
        .filter(|p| p.is_file())
        .map(|p| (p.file_name().unwrap().to_string_lossy().into_owned(), fs::read(&p).unwrap()))
        .collect();
    files.sort();
    files
}

fn criterion_10() -> Outcome {
    let tmp = tempfile::tempdir().unwrap();
    let root = tmp.path();
    fs::write(
        root.join("exp.cfg"),
        "seed=3\ndata.n_per_class=300,80\ntrain.iterations=300\ntrain.learning_rate=1e-3\nsplit.k=3\n",
    )
    .unwrap();
    let commands: Vec<(&str, Vec<&str>)> = vec![
        ("gen-data", vec!["gen-data"]),
        ("train", vec!["train"]),
        ("sweep-alpha", vec!["sweep-alpha", "--alphas", "0.1,0.9"]),
        ("divergence", vec!["divergence", "--p", "0.7,0.2,0.1", "--q", "0.2,0.3,0.5", "--alpha", "0.3"]),
    ];
    let mut differing = Vec::new();
    let mut checked = 0;
    for (name, args) in &commands {
        let mut runs = Vec::new();
        for rep in 0..2 {
            let out = format!("run{rep}_{name}");
            let mut full = vec!["--config", "exp.cfg", "--out", out.as_str()];
            full.extend(args.iter().copied());
            let stdout = run_cli(&full, root);
            let dir = root.join(&out);
            let files = if dir.exists() { read_tree(&dir) } else { Vec::new() };
            // Printed paths differ between the two output directories.
            let stdout = String::from_utf8_lossy(&stdout).replace(&out, "OUT");
            runs.push((stdout, files));
        }
        checked += runs[0].1.len();
        if runs[0] != runs[1] {
            differing.push(*name);
        }
    }
    let mut project_runs = Vec::new();
    for rep in 0..2 {
        let out = format!("proj{rep}");
        run_cli(&["--config", "exp.cfg", "--out", &out, "project", "--model", "run0_train/model.txt"], root);
        project_runs.push(read_tree(&root.join(&out)));
    }
    checked += project_runs[0].len();
    if project_runs[0] != project_runs[1] {
        differing.push("project");
    }
    report(
        10,
        "determinism",
        differing.is_empty(),
        format!("{checked} output files and stdout of 5 commands compared, differing: {differing:?}"),
    )
}

fn main() {
    println!("acceptance suite");
    let mut outcomes =
        vec![criterion_1(), criterion_2(), criterion_3(), criterion_4(), criterion_5(), criterion_6(), criterion_7()];
    let runs = trend_runs();
    outcomes.push(criterion_8(&runs));
    outcomes.push(criterion_9(&runs));
    outcomes.push(criterion_10());

    let passed = outcomes.iter().filter(|o| o.pass).count();
    println!("{passed}/{} criteria passed", outcomes.len());
    let unexpected: Vec<&Outcome> =
        outcomes.iter().filter(|o| !o.pass && !KNOWN_UNATTAINABLE.contains(&o.id)).collect();
    for o in outcomes.iter().filter(|o| !o.pass && KNOWN_UNATTAINABLE.contains(&o.id)) {
        println!("known failure, criterion {}: {}", o.id, o.detail);
    }
    if !unexpected.is_empty() {
        for o in &unexpected {
            eprintln!("unexpected failure, criterion {}: {}", o.id, o.detail);
        }
        std::process::exit(1);
    }
}
