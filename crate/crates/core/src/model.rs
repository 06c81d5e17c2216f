//! A small fully connected ReLU network and its minibatch trainer.

use std::fmt::Write as _;
use std::time::Instant;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::losses::{self, Logits, LossSpec};
use crate::prob::ProbVector;
use crate::scalar::Scalar;

/// Feedforward classifier. Layer `l` maps `layer_dims[l]` inputs to
/// `layer_dims[l+1]` outputs with a row-major `(out, in)` weight matrix.
/// Hidden layers use ReLU; the last layer emits raw logits.
#[derive(Debug, Clone, PartialEq)]
pub struct MlpModel<T> {
    layer_dims: Vec<usize>,
    weights: Vec<Vec<T>>,
    biases: Vec<Vec<T>>,
}

/// Parameter-shaped buffer, used for gradients and optimizer state.
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients<T> {
    pub weights: Vec<Vec<T>>,
    pub biases: Vec<Vec<T>>,
}

fn check_dims(layer_dims: &[usize]) -> Result<()> {
    if layer_dims.len() < 2 {
        return Err(Error::InvalidArchitecture(format!("need at least 2 layer dims, got {}", layer_dims.len())));
    }
    if layer_dims.contains(&0) {
        return Err(Error::InvalidArchitecture("layer dims must be positive".into()));
    }
    if *layer_dims.last().unwrap() < 2 {
        return Err(Error::InvalidArchitecture("output layer needs at least 2 classes".into()));
    }
    Ok(())
}

impl<T: Scalar> Gradients<T> {
    fn zeros_like(model: &MlpModel<T>) -> Self {
        Self {
            weights: model.weights.iter().map(|w| vec![T::zero(); w.len()]).collect(),
            biases: model.biases.iter().map(|b| vec![T::zero(); b.len()]).collect(),
        }
    }

    fn fill_zero(&mut self) {
        for v in self.weights.iter_mut().chain(self.biases.iter_mut()) {
            v.iter_mut().for_each(|x| *x = T::zero());
        }
    }

    /// All entries, weights of every layer first, then the biases.
    pub fn flatten(&self) -> Vec<T> {
        self.weights.iter().chain(&self.biases).flatten().copied().collect()
    }
}

impl<T: Scalar> MlpModel<T> {
    /// All-zero parameters.
    pub fn zeros(layer_dims: &[usize]) -> Result<Self> {
        check_dims(layer_dims)?;
        let weights = layer_dims.windows(2).map(|w| vec![T::zero(); w[0] * w[1]]).collect();
        let biases = layer_dims[1..].iter().map(|&n| vec![T::zero(); n]).collect();
        Ok(Self { layer_dims: layer_dims.to_vec(), weights, biases })
    }

    /// Glorot-uniform weights in `±√(6/(fan_in+fan_out))`, zero biases.
    pub fn init(layer_dims: &[usize], seed: u64) -> Result<Self> {
        let mut model = Self::zeros(layer_dims)?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for (w, dims) in model.weights.iter_mut().zip(layer_dims.windows(2)) {
            let bound = (6.0 / (dims[0] + dims[1]) as f64).sqrt();
            for x in w.iter_mut() {
                *x = T::of(rng.random_range(-bound..=bound));
            }
        }
        Ok(model)
    }

    pub fn from_parts(layer_dims: Vec<usize>, weights: Vec<Vec<T>>, biases: Vec<Vec<T>>) -> Result<Self> {
        check_dims(&layer_dims)?;
        let n_layers = layer_dims.len() - 1;
        if weights.len() != n_layers || biases.len() != n_layers {
            return Err(Error::InvalidArchitecture(format!(
                "expected {n_layers} layers, got {} weight and {} bias blocks",
                weights.len(),
                biases.len()
            )));
        }
        for (l, dims) in layer_dims.windows(2).enumerate() {
            if weights[l].len() != dims[0] * dims[1] {
                return Err(Error::DimensionMismatch { expected: dims[0] * dims[1], got: weights[l].len() });
            }
            if biases[l].len() != dims[1] {
                return Err(Error::DimensionMismatch { expected: dims[1], got: biases[l].len() });
            }
        }
        if weights.iter().chain(&biases).flatten().any(|x| !x.is_finite()) {
            return Err(Error::InvalidArchitecture("parameters must be finite".into()));
        }
        Ok(Self { layer_dims, weights, biases })
    }

    pub fn layer_dims(&self) -> &[usize] {
        &self.layer_dims
    }

    pub fn input_dim(&self) -> usize {
        self.layer_dims[0]
    }

    pub fn n_classes(&self) -> usize {
        *self.layer_dims.last().unwrap()
    }

    pub fn weights(&self) -> &[Vec<T>] {
        &self.weights
    }

    pub fn biases(&self) -> &[Vec<T>] {
        &self.biases
    }

    pub fn weights_mut(&mut self) -> &mut [Vec<T>] {
        &mut self.weights
    }

    pub fn biases_mut(&mut self) -> &mut [Vec<T>] {
        &mut self.biases
    }

    /// `‖W‖²` over all weight matrices (biases excluded).
    pub fn weight_norm_sq(&self) -> T {
        self.weights.iter().flatten().map(|&w| w * w).sum()
    }

    fn check_input(&self, x: &[T]) -> Result<()> {
        if x.len() == self.input_dim() {
            Ok(())
        } else {
            Err(Error::DimensionMismatch { expected: self.input_dim(), got: x.len() })
        }
    }

    fn layer_forward(&self, l: usize, input: &[T], out: &mut Vec<T>) {
        let n_in = self.layer_dims[l];
        out.clear();
        out.extend(
            self.weights[l]
                .chunks_exact(n_in)
                .zip(&self.biases[l])
                .map(|(row, &b)| row.iter().zip(input).fold(b, |acc, (&w, &x)| acc + w * x)),
        );
    }

    /// Raw logits for one sample.
    pub fn forward(&self, x: &[T]) -> Result<Logits<T>> {
        self.check_input(x)?;
        let n_layers = self.weights.len();
        let mut current = x.to_vec();
        let mut next = Vec::new();
        for l in 0..n_layers {
            self.layer_forward(l, &current, &mut next);
            if l + 1 < n_layers {
                next.iter_mut().for_each(|v| *v = v.max(T::zero()));
            }
            std::mem::swap(&mut current, &mut next);
        }
        Ok(Logits::from_vec_unchecked(current))
    }

    /// Activations feeding the output layer (the input itself when there are
    /// no hidden layers).
    pub fn penultimate(&self, x: &[T]) -> Result<Vec<T>> {
        self.check_input(x)?;
        let mut current = x.to_vec();
        let mut next = Vec::new();
        for l in 0..self.weights.len() - 1 {
            self.layer_forward(l, &current, &mut next);
            next.iter_mut().for_each(|v| *v = v.max(T::zero()));
            std::mem::swap(&mut current, &mut next);
        }
        Ok(current)
    }

    pub fn predict_proba(&self, x: &[T]) -> Result<ProbVector<T>> {
        Ok(losses::softmax(&self.forward(x)?))
    }

    /// Arg-max class; ties resolve to the lowest index.
    pub fn predict(&self, x: &[T]) -> Result<usize> {
        let p = self.predict_proba(x)?;
        Ok(argmax(p.as_slice()))
    }

    /// Plain-text serialization: a `layer_dims` header, then every weight
    /// matrix (row-major) followed by its bias vector, one value per line
    /// with 17 significant digits.
    pub fn to_text(&self) -> String {
        let dims: Vec<String> = self.layer_dims.iter().map(usize::to_string).collect();
        let mut out = format!("layer_dims {}\n", dims.join(","));
        for (w, b) in self.weights.iter().zip(&self.biases) {
            for &x in w.iter().chain(b) {
                let _ = writeln!(out, "{:.16e}", x.to_f64_lossy());
            }
        }
        out
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let mut lines = text.lines().enumerate();
        let header = lines.next().map(|(_, l)| l).unwrap_or("");
        let dims_text = header.strip_prefix("layer_dims ").ok_or_else(|| Error::Parse {
            row: 1,
            column: 1,
            message: "expected `layer_dims` header".into(),
        })?;
        let layer_dims = dims_text
            .split(',')
            .map(|s| {
                s.trim().parse::<usize>().map_err(|_| Error::Parse {
                    row: 1,
                    column: 1,
                    message: format!("bad layer dimension {s:?}"),
                })
            })
            .collect::<Result<Vec<_>>>()?;
        check_dims(&layer_dims)?;
        let mut values = Vec::new();
        for (i, line) in lines {
            let line = line.trim();
            if line.is_empty() {
                continue;
            }
            let v: f64 = line.parse().map_err(|_| Error::Parse {
                row: i + 1,
                column: 1,
                message: format!("not a number: {line:?}"),
            })?;
            values.push(T::of(v));
        }
        let mut it = values.into_iter();
        let mut weights = Vec::new();
        let mut biases = Vec::new();
        for dims in layer_dims.windows(2) {
            let w: Vec<T> = it.by_ref().take(dims[0] * dims[1]).collect();
            let b: Vec<T> = it.by_ref().take(dims[1]).collect();
            weights.push(w);
            biases.push(b);
        }
        if it.next().is_some() {
            return Err(Error::Parse { row: 0, column: 1, message: "trailing values after last layer".into() });
        }
        Self::from_parts(layer_dims, weights, biases)
    }
}

pub(crate) fn argmax<T: Scalar>(xs: &[T]) -> usize {
    let mut best = 0;
    for (i, &x) in xs.iter().enumerate().skip(1) {
        if x > xs[best] {
            best = i;
        }
    }
    best
}

/// Per-sample buffers for backpropagation.
struct Workspace<T> {
    /// Activations entering each layer; `acts[0]` is the input.
    acts: Vec<Vec<T>>,
    /// Pre-activations of each layer.
    pre: Vec<Vec<T>>,
    probs: Vec<T>,
    delta: Vec<T>,
    delta_prev: Vec<T>,
}

impl<T: Scalar> Workspace<T> {
    fn new(model: &MlpModel<T>) -> Self {
        let dims = &model.layer_dims;
        Self {
            acts: dims[..dims.len() - 1].iter().map(|&n| vec![T::zero(); n]).collect(),
            pre: dims[1..].iter().map(|&n| vec![T::zero(); n]).collect(),
            probs: vec![T::zero(); model.n_classes()],
            delta: Vec::new(),
            delta_prev: Vec::new(),
        }
    }
}

/// Adds the gradient of one sample's loss (scaled by `scale`) into `grads`
/// and returns the unscaled loss.
fn accumulate_sample<T: Scalar>(
    model: &MlpModel<T>,
    spec: &LossSpec<T>,
    x: &[T],
    label: usize,
    scale: T,
    ws: &mut Workspace<T>,
    grads: &mut Gradients<T>,
) -> T {
    let n_layers = model.weights.len();
    ws.acts[0].copy_from_slice(x);
    for l in 0..n_layers {
        let n_in = model.layer_dims[l];
        let (input, pre) = (&ws.acts[l], &mut ws.pre[l]);
        for ((z, row), &b) in pre.iter_mut().zip(model.weights[l].chunks_exact(n_in)).zip(&model.biases[l]) {
            *z = row.iter().zip(input).fold(b, |acc, (&w, &a)| acc + w * a);
        }
        if l + 1 < n_layers {
            for (a, &z) in ws.acts[l + 1].iter_mut().zip(&ws.pre[l]) {
                *a = z.max(T::zero());
            }
        }
    }

    losses::softmax_into(&ws.pre[n_layers - 1], &mut ws.probs);
    ws.delta.clear();
    ws.delta.resize(model.n_classes(), T::zero());
    let value = losses::value_and_grad_from_probs(spec, &ws.probs, label, &mut ws.delta);

    for l in (0..n_layers).rev() {
        let n_in = model.layer_dims[l];
        let input = &ws.acts[l];
        for ((grow, gb), &d) in grads.weights[l].chunks_exact_mut(n_in).zip(grads.biases[l].iter_mut()).zip(&ws.delta) {
            let sd = scale * d;
            *gb = *gb + sd;
            for (g, &a) in grow.iter_mut().zip(input) {
                *g = *g + sd * a;
            }
        }
        if l > 0 {
            ws.delta_prev.clear();
            ws.delta_prev.resize(n_in, T::zero());
            for (row, &d) in model.weights[l].chunks_exact(n_in).zip(&ws.delta) {
                for (dp, &w) in ws.delta_prev.iter_mut().zip(row) {
                    *dp = *dp + w * d;
                }
            }
            for (dp, &z) in ws.delta_prev.iter_mut().zip(&ws.pre[l - 1]) {
                if z <= T::zero() {
                    *dp = T::zero();
                }
            }
            std::mem::swap(&mut ws.delta, &mut ws.delta_prev);
        }
    }
    value
}

fn batch_objective_into<T: Scalar>(
    model: &MlpModel<T>,
    spec: &LossSpec<T>,
    data: &Dataset<T>,
    rows: &[usize],
    l2_lambda: T,
    ws: &mut Workspace<T>,
    grads: &mut Gradients<T>,
) -> T {
    grads.fill_zero();
    let scale = T::one() / T::of(rows.len() as f64);
    let mut total = T::zero();
    for &i in rows {
        total = total + accumulate_sample(model, spec, data.row(i), data.labels()[i], scale, ws, grads);
    }
    if l2_lambda > T::zero() {
        let two_l = l2_lambda + l2_lambda;
        for (g, w) in grads.weights.iter_mut().zip(&model.weights) {
            for (gi, &wi) in g.iter_mut().zip(w) {
                *gi = *gi + two_l * wi;
            }
        }
    }
    total * scale + l2_lambda * model.weight_norm_sq()
}

fn check_data<T: Scalar>(model: &MlpModel<T>, data: &Dataset<T>) -> Result<()> {
    if data.n_features() != model.input_dim() {
        return Err(Error::DimensionMismatch { expected: model.input_dim(), got: data.n_features() });
    }
    if let Some(&label) = data.labels().iter().find(|&&l| l >= model.n_classes()) {
        return Err(Error::LabelOutOfRange { label, n_classes: model.n_classes() });
    }
    Ok(())
}

/// Mean loss over `rows` plus `λ‖W‖²`, with its gradient over all parameters.
pub fn batch_objective<T: Scalar>(
    model: &MlpModel<T>,
    spec: &LossSpec<T>,
    data: &Dataset<T>,
    rows: &[usize],
    l2_lambda: T,
) -> Result<(T, Gradients<T>)> {
    check_data(model, data)?;
    if rows.is_empty() {
        return Err(Error::EmptyInput);
    }
    if let Some(&i) = rows.iter().find(|&&i| i >= data.n_samples()) {
        return Err(Error::LabelOutOfRange { label: i, n_classes: data.n_samples() });
    }
    let mut ws = Workspace::new(model);
    let mut grads = Gradients::zeros_like(model);
    let value = batch_objective_into(model, spec, data, rows, l2_lambda, &mut ws, &mut grads);
    Ok((value, grads))
}

/// Mean loss (without the weight penalty) over the whole dataset.
pub fn mean_loss<T: Scalar>(model: &MlpModel<T>, spec: &LossSpec<T>, data: &Dataset<T>) -> Result<T> {
    check_data(model, data)?;
    if data.n_samples() == 0 {
        return Err(Error::EmptyInput);
    }
    let mut probs = vec![T::zero(); model.n_classes()];
    let mut total = T::zero();
    for (row, &label) in data.rows().zip(data.labels()) {
        let z = model.forward(row)?;
        losses::softmax_into(z.as_slice(), &mut probs);
        total = total + losses::value_from_probs(spec, &probs, label);
    }
    Ok(total / T::of(data.n_samples() as f64))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Optimizer<T> {
    /// `v ← μv + g`, `θ ← θ − lr·v`.
    SgdMomentum { momentum: T },
    /// `s ← ρs + (1−ρ)g²`, `θ ← θ − lr·g/(√s + eps)`.
    RmsProp { decay: T, eps: T },
}

impl<T: Scalar> Optimizer<T> {
    pub fn validate(&self) -> Result<()> {
        match *self {
            Optimizer::SgdMomentum { momentum } => {
                if !(momentum >= T::zero() && momentum < T::one()) {
                    return Err(Error::InvalidParameter {
                        name: "momentum",
                        reason: format!("must lie in [0, 1), got {momentum}"),
                    });
                }
            }
            Optimizer::RmsProp { decay, eps } => {
                if !(decay > T::zero() && decay < T::one()) {
                    return Err(Error::InvalidParameter {
                        name: "decay",
                        reason: format!("must lie in (0, 1), got {decay}"),
                    });
                }
                if !(eps.is_finite() && eps > T::zero()) {
                    return Err(Error::InvalidParameter {
                        name: "eps",
                        reason: format!("must be positive, got {eps}"),
                    });
                }
            }
        }
        Ok(())
    }
}

impl<T: Scalar> std::fmt::Display for Optimizer<T> {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Optimizer::SgdMomentum { momentum } => write!(f, "sgd_momentum(momentum={momentum})"),
            Optimizer::RmsProp { decay, eps } => write!(f, "rmsprop(decay={decay},eps={eps})"),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig<T> {
    pub loss: LossSpec<T>,
    pub learning_rate: T,
    pub iterations: usize,
    pub batch_size: usize,
    /// Weight of the `λ‖W‖²` penalty; biases are not penalized.
    pub l2_lambda: T,
    pub optimizer: Optimizer<T>,
    pub seed: u64,
}

impl<T: Scalar> TrainConfig<T> {
    pub fn validate(&self) -> Result<()> {
        self.loss.validate()?;
        self.optimizer.validate()?;
        if !(self.learning_rate.is_finite() && self.learning_rate >= T::zero()) {
            return Err(Error::InvalidParameter {
                name: "learning_rate",
                reason: format!("must be finite and >= 0, got {}", self.learning_rate),
            });
        }
        if self.iterations == 0 {
            return Err(Error::InvalidParameter { name: "iterations", reason: "must be positive".into() });
        }
        if self.batch_size == 0 {
            return Err(Error::InvalidParameter { name: "batch_size", reason: "must be positive".into() });
        }
        if !(self.l2_lambda.is_finite() && self.l2_lambda >= T::zero()) {
            return Err(Error::InvalidParameter { name: "l2_lambda", reason: "must be finite and >= 0".into() });
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct TrainReport<T> {
    /// Minibatch objective (mean loss plus weight penalty) before each update.
    pub loss_trace: Vec<T>,
    pub model: MlpModel<T>,
    pub wall_seconds: f64,
    pub seed: u64,
}

struct OptimizerState<T> {
    slots: Gradients<T>,
}

impl<T: Scalar> OptimizerState<T> {
    fn step(&mut self, opt: &Optimizer<T>, lr: T, model: &mut MlpModel<T>, grads: &Gradients<T>) {
        let params = model.weights.iter_mut().chain(model.biases.iter_mut());
        let slots = self.slots.weights.iter_mut().chain(self.slots.biases.iter_mut());
        let gs = grads.weights.iter().chain(&grads.biases);
        for ((p, s), g) in params.zip(slots).zip(gs) {
            match *opt {
                Optimizer::SgdMomentum { momentum } => {
                    for ((pi, si), &gi) in p.iter_mut().zip(s.iter_mut()).zip(g) {
                        *si = momentum * *si + gi;
                        *pi = *pi - lr * *si;
                    }
                }
                Optimizer::RmsProp { decay, eps } => {
                    let keep = T::one() - decay;
                    for ((pi, si), &gi) in p.iter_mut().zip(s.iter_mut()).zip(g) {
                        *si = decay * *si + keep * gi * gi;
                        *pi = *pi - lr * gi / (si.sqrt() + eps);
                    }
                }
            }
        }
    }
}

/// Minibatch training for `cfg.iterations` updates.
pub fn train<T: Scalar>(model: MlpModel<T>, data: &Dataset<T>, cfg: &TrainConfig<T>) -> Result<TrainReport<T>> {
    train_monitored(model, data, cfg, 0, |_, _| {})
}

/// Like [`train`], calling `monitor(iteration, &model)` after every
/// `every`-th update (1-based count) and after the last one. `every = 0`
/// disables the callback.
pub fn train_monitored<T: Scalar, F>(
    mut model: MlpModel<T>,
    data: &Dataset<T>,
    cfg: &TrainConfig<T>,
    every: usize,
    mut monitor: F,
) -> Result<TrainReport<T>>
where
    F: FnMut(usize, &MlpModel<T>),
{
    cfg.validate()?;
    check_data(&model, data)?;
    let n = data.n_samples();
    if n == 0 {
        return Err(Error::EmptyInput);
    }
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut order: Vec<usize> = (0..n).collect();
    let mut cursor = n;
    let mut ws = Workspace::new(&model);
    let mut grads = Gradients::zeros_like(&model);
    let mut state = OptimizerState { slots: Gradients::zeros_like(&model) };
    let mut loss_trace = Vec::with_capacity(cfg.iterations);
    let batch = cfg.batch_size.min(n);

    for iteration in 0..cfg.iterations {
        if cursor >= n {
            order.shuffle(&mut rng);
            cursor = 0;
        }
        let end = (cursor + batch).min(n);
        let rows = &order[cursor..end];
        cursor = end;

        let value = batch_objective_into(&model, &cfg.loss, data, rows, cfg.l2_lambda, &mut ws, &mut grads);
        if !value.is_finite() {
            return Err(Error::NonFiniteLoss { iteration });
        }
        loss_trace.push(value);
        state.step(&cfg.optimizer, cfg.learning_rate, &mut model, &grads);

        let done = iteration + 1;
        if every > 0 && (done % every == 0 || done == cfg.iterations) {
            monitor(done, &model);
        }
    }

    Ok(TrainReport { loss_trace, model, wall_seconds: start.elapsed().as_secs_f64(), seed: cfg.seed })
}
