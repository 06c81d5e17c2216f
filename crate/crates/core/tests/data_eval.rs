use nalgebra::{DMatrix, SymmetricEigen};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use skewjs_core::data::{
    generate_synthetic, load_csv, normalize_fit_transform, read_csv, save_csv, stratified_kfold,
    stratified_split_indices,
};
use skewjs_core::eval::{confusion_matrix, f1_score, pca_top2};
use skewjs_core::{Dataset, Error, GenSpec};

#[test]
fn csv_round_trip_is_exact() {
    let spec = GenSpec::<f64> { n_per_class: [40, 13], seed: 4, ..GenSpec::default() };
    let data = generate_synthetic(&spec).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("d.csv");
    save_csv(&data, &path).unwrap();
    let back = load_csv::<f64>(&path).unwrap();
    assert_eq!(back.features(), data.features());
    assert_eq!(back.labels(), data.labels());
}

#[test]
fn csv_errors_name_row_and_column() {
    let text = "f0,f1,label\n1.0,2.0,0\n1.0,oops,1\n";
    match read_csv::<f64, _>(text.as_bytes()) {
        Err(Error::Parse { row, column, .. }) => assert_eq!((row, column), (3, 2)),
        other => panic!("unexpected {other:?}"),
    }
    assert!(matches!(read_csv::<f64, _>("f0,label\n1.0,-1\n".as_bytes()), Err(Error::LabelRange { .. })));
}

#[test]
fn normalization_centers_and_scales_the_fitted_split() {
    let data = generate_synthetic(&GenSpec::<f64> { n_per_class: [300, 90], ..GenSpec::default() }).unwrap();
    let (norm, _) = normalize_fit_transform(&data).unwrap();
    let n = norm.n_samples() as f64;
    for j in 0..norm.n_features() {
        let col: Vec<f64> = norm.rows().map(|r| r[j]).collect();
        let mean = col.iter().sum::<f64>() / n;
        let std = (col.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n).sqrt();
        assert!(mean.abs() < 1e-9, "mean {mean}");
        assert!((std - 1.0).abs() < 1e-6, "std {std}");
    }
}

#[test]
fn kfold_is_stratified_on_imbalanced_pool() {
    let data = generate_synthetic(&GenSpec::<f64>::default()).unwrap();
    let (train, _) = stratified_split_indices(&data, 0.2, 1).unwrap();
    let pool = data.subset(&train);
    assert_eq!(pool.class_counts(), vec![2634, 608]);
    let folds = stratified_kfold(&pool, 5, 2).unwrap();
    for class in 0..2 {
        let per_fold: Vec<usize> = (0..5)
            .map(|f| {
                (0..pool.n_samples()).filter(|&i| folds.fold_assignments[i] == f && pool.labels()[i] == class).count()
            })
            .collect();
        let (lo, hi) = (per_fold.iter().min().unwrap(), per_fold.iter().max().unwrap());
        assert!(hi - lo <= 1, "{per_fold:?}");
    }
    assert!(folds.fold_sizes().iter().all(|&s| s > 0));
}

#[test]
fn split_is_disjoint_and_covers_everything() {
    let data = generate_synthetic(&GenSpec::<f64> { n_per_class: [101, 37], ..GenSpec::default() }).unwrap();
    let (train, test) = stratified_split_indices(&data, 0.25, 9).unwrap();
    let mut all: Vec<usize> = train.iter().chain(&test).copied().collect();
    all.sort_unstable();
    assert_eq!(all, (0..data.n_samples()).collect::<Vec<_>>());
}

#[test]
fn metrics_match_naive_counting() {
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    for _ in 0..1000 {
        let n = rng.random_range(1..60);
        let y: Vec<usize> = (0..n).map(|_| rng.random_range(0..3)).collect();
        let p: Vec<usize> = (0..n).map(|_| rng.random_range(0..3)).collect();
        let cm = confusion_matrix(&y, &p, 3).unwrap();
        for t in 0..3 {
            for q in 0..3 {
                assert_eq!(cm.get(t, q), y.iter().zip(&p).filter(|&(&a, &b)| a == t && b == q).count());
            }
        }
        let hits = y.iter().zip(&p).filter(|(a, b)| a == b).count();
        assert_eq!(cm.accuracy(), hits as f64 / n as f64);
        let pos = rng.random_range(0..3);
        let tp = y.iter().zip(&p).filter(|&(&a, &b)| a == pos && b == pos).count() as f64;
        let fp = y.iter().zip(&p).filter(|&(&a, &b)| a != pos && b == pos).count() as f64;
        let fn_ = y.iter().zip(&p).filter(|&(&a, &b)| a == pos && b != pos).count() as f64;
        let expected = if tp == 0.0 { 0.0 } else { 2.0 * tp / (2.0 * tp + fp + fn_) };
        assert_eq!(f1_score(&cm, pos), expected);
    }
}

fn dense_top2(x: &[f64], rows: usize, cols: usize) -> ([f64; 2], [Vec<f64>; 2]) {
    let m = DMatrix::from_row_slice(rows, cols, x);
    let mean = m.row_mean();
    let mut c = m.clone();
    for mut r in c.row_iter_mut() {
        r -= &mean;
    }
    let cov = (c.transpose() * &c) / (rows as f64 - 1.0);
    let eig = SymmetricEigen::new(cov);
    let mut order: Vec<usize> = (0..cols).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
    let vec_of = |k: usize| eig.eigenvectors.column(order[k]).iter().copied().collect::<Vec<f64>>();
    ([eig.eigenvalues[order[0]], eig.eigenvalues[order[1]]], [vec_of(0), vec_of(1)])
}

#[test]
fn pca_matches_dense_eigensolver() {
    let mut rng = ChaCha8Rng::seed_from_u64(30);
    for _ in 0..20 {
        let scales: Vec<f64> = (0..5).map(|_| rng.random_range(0.2..3.0)).collect();
        let x: Vec<f64> = (0..50 * 5).map(|i| rng.random_range(-1.0..1.0) * scales[i % 5]).collect();
        let proj = pca_top2(&x, 5).unwrap();
        let (vals, vecs) = dense_top2(&x, 50, 5);
        for k in 0..2 {
            assert!((proj.explained_variance[k] - vals[k]).abs() < 1e-8);
            let dot: f64 = proj.components[k].iter().zip(&vecs[k]).map(|(a, b)| a * b).sum();
            let diff = proj.components[k]
                .iter()
                .zip(&vecs[k])
                .map(|(a, b)| (a - dot.signum() * b).abs())
                .fold(0.0f64, f64::max);
            assert!(diff < 1e-8, "component {k} off by {diff}");
        }
        let [c1, c2] = &proj.components;
        let dot = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(x, y)| x * y).sum::<f64>();
        assert!((dot(c1, c1) - 1.0).abs() < 1e-9 && (dot(c2, c2) - 1.0).abs() < 1e-9 && dot(c1, c2).abs() < 1e-9);
        assert!(proj.explained_variance[0] >= proj.explained_variance[1]);
    }
}

#[test]
fn class_too_small_is_reported() {
    let data = Dataset::new(vec![0.0, 1.0, 2.0, 3.0], 1, vec![0, 0, 0, 1], 2).unwrap();
    assert!(matches!(stratified_split_indices(&data, 0.5, 0), Err(Error::ClassTooSmall { class: 1, .. })));
}
