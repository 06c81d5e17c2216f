//! Regularized classification objectives and their gradients with respect
//! to the logits.
//!
//! Every objective is evaluated on `p = softmax(z)`. The softmax output is
//! floored at [`PROB_FLOOR`] and renormalized, so all objectives can take
//! logarithms of `p` without special cases. Gradients are analytical; the
//! floor is treated as inactive when differentiating.

use std::fmt;

use crate::error::{Error, Result};
use crate::prob::{self, ProbVector, SkewParam};
use crate::scalar::Scalar;

/// Smallest probability the softmax boundary emits before renormalization.
pub const PROB_FLOOR: f64 = 1e-12;

/// Pre-softmax scores.
#[derive(Debug, Clone, PartialEq)]
pub struct Logits<T>(Vec<T>);

impl<T: Scalar> Logits<T> {
    pub fn new(values: Vec<T>) -> Result<Self> {
        if values.len() < 2 {
            return Err(Error::InvalidParameter {
                name: "logits",
                reason: format!("need at least 2 entries, got {}", values.len()),
            });
        }
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::InvalidParameter { name: "logits", reason: format!("entry {i} is not finite") });
        }
        Ok(Self(values))
    }

    pub(crate) fn from_vec_unchecked(values: Vec<T>) -> Self {
        Self(values)
    }

    #[inline]
    pub fn as_slice(&self) -> &[T] {
        &self.0
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.0.len()
    }

    #[inline]
    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn into_vec(self) -> Vec<T> {
        self.0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum LossKind {
    CrossEntropy,
    Focal,
    LabelSmoothing,
    MaxEntropy,
    AlphaJs,
}

impl LossKind {
    pub const ALL: [LossKind; 5] =
        [LossKind::CrossEntropy, LossKind::Focal, LossKind::LabelSmoothing, LossKind::MaxEntropy, LossKind::AlphaJs];

    pub fn name(self) -> &'static str {
        match self {
            LossKind::CrossEntropy => "cross_entropy",
            LossKind::Focal => "focal",
            LossKind::LabelSmoothing => "label_smoothing",
            LossKind::MaxEntropy => "max_entropy",
            LossKind::AlphaJs => "alpha_js",
        }
    }
}

/// One training objective together with exactly the hyperparameters it uses.
///
/// `alpha_t` (focal class weight) and `alpha` (skew) are unrelated parameters.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum LossSpec<T> {
    CrossEntropy,
    Focal { gamma: T, alpha_t: T },
    LabelSmoothing { epsilon: T },
    MaxEntropy { beta: T },
    AlphaJs { alpha: SkewParam<T>, beta: T },
}

fn non_negative<T: Scalar>(name: &'static str, v: T) -> Result<()> {
    if v.is_finite() && v >= T::zero() {
        Ok(())
    } else {
        Err(Error::InvalidParameter { name, reason: format!("must be finite and >= 0, got {v}") })
    }
}

fn unit_interval<T: Scalar>(name: &'static str, v: T) -> Result<()> {
    if v >= T::zero() && v <= T::one() {
        Ok(())
    } else {
        Err(Error::InvalidParameter { name, reason: format!("must lie in [0, 1], got {v}") })
    }
}

impl<T: Scalar> LossSpec<T> {
    pub fn focal(gamma: T, alpha_t: T) -> Result<Self> {
        non_negative("gamma", gamma)?;
        unit_interval("alpha_t", alpha_t)?;
        Ok(LossSpec::Focal { gamma, alpha_t })
    }

    pub fn label_smoothing(epsilon: T) -> Result<Self> {
        unit_interval("epsilon", epsilon)?;
        Ok(LossSpec::LabelSmoothing { epsilon })
    }

    pub fn max_entropy(beta: T) -> Result<Self> {
        non_negative("beta", beta)?;
        Ok(LossSpec::MaxEntropy { beta })
    }

    pub fn alpha_js(alpha: T, beta: T) -> Result<Self> {
        non_negative("beta", beta)?;
        Ok(LossSpec::AlphaJs { alpha: SkewParam::new(alpha)?, beta })
    }

    /// Re-checks the ranges of a spec built directly from its variants.
    pub fn validate(&self) -> Result<()> {
        match *self {
            LossSpec::CrossEntropy => Ok(()),
            LossSpec::Focal { gamma, alpha_t } => Self::focal(gamma, alpha_t).map(|_| ()),
            LossSpec::LabelSmoothing { epsilon } => Self::label_smoothing(epsilon).map(|_| ()),
            LossSpec::MaxEntropy { beta } => Self::max_entropy(beta).map(|_| ()),
            LossSpec::AlphaJs { alpha, beta } => Self::alpha_js(alpha.value(), beta).map(|_| ()),
        }
    }

    pub fn kind(&self) -> LossKind {
        match self {
            LossSpec::CrossEntropy => LossKind::CrossEntropy,
            LossSpec::Focal { .. } => LossKind::Focal,
            LossSpec::LabelSmoothing { .. } => LossKind::LabelSmoothing,
            LossSpec::MaxEntropy { .. } => LossKind::MaxEntropy,
            LossSpec::AlphaJs { .. } => LossKind::AlphaJs,
        }
    }
}

impl<T: Scalar> fmt::Display for LossSpec<T> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            LossSpec::CrossEntropy => write!(f, "cross_entropy"),
            LossSpec::Focal { gamma, alpha_t } => write!(f, "focal(gamma={gamma},alpha_t={alpha_t})"),
            LossSpec::LabelSmoothing { epsilon } => write!(f, "label_smoothing(epsilon={epsilon})"),
            LossSpec::MaxEntropy { beta } => write!(f, "max_entropy(beta={beta})"),
            LossSpec::AlphaJs { alpha, beta } => write!(f, "alpha_js(alpha={},beta={beta})", alpha.value()),
        }
    }
}

/// Writes the floored softmax of `z` into `out`.
pub(crate) fn softmax_into<T: Scalar>(z: &[T], out: &mut [T]) {
    let max = z.iter().copied().fold(T::neg_infinity(), T::max);
    let mut total = T::zero();
    for (o, &v) in out.iter_mut().zip(z) {
        *o = (v - max).exp();
        total = total + *o;
    }
    let floor = T::of(PROB_FLOOR);
    let mut floored_total = T::zero();
    for o in out.iter_mut() {
        *o = (*o / total).max(floor);
        floored_total = floored_total + *o;
    }
    for o in out.iter_mut() {
        *o = *o / floored_total;
    }
}

/// Max-shifted softmax, floored at [`PROB_FLOOR`] and renormalized.
pub fn softmax<T: Scalar>(z: &Logits<T>) -> ProbVector<T> {
    let mut out = vec![T::zero(); z.len()];
    softmax_into(&z.0, &mut out);
    ProbVector::from_normalized_unchecked(out)
}

fn check_label<T: Scalar>(p: &ProbVector<T>, label: usize) -> Result<()> {
    if label < p.len() {
        Ok(())
    } else {
        Err(Error::LabelOutOfRange { label, n_classes: p.len() })
    }
}

fn check_positive<T: Scalar>(p: &ProbVector<T>) -> Result<()> {
    match p.as_slice().iter().position(|&x| x <= T::zero()) {
        None => Ok(()),
        Some(index) => Err(Error::AbsoluteContinuityViolation { index }),
    }
}

/// Focal loss `−α_t (1−p_t)^γ ln p_t` with `p_t = p[label]`.
pub fn focal_loss<T: Scalar>(p: &ProbVector<T>, label: usize, gamma: T, alpha_t: T) -> Result<T> {
    check_label(p, label)?;
    check_positive(p)?;
    Ok(focal_value(p.as_slice()[label], gamma, alpha_t))
}

fn focal_value<T: Scalar>(pt: T, gamma: T, alpha_t: T) -> T {
    -alpha_t * (T::one() - pt).powf(gamma) * pt.ln()
}

/// `(1−ε)·H(y, p) + ε·H(u, p)`.
pub fn label_smoothing_loss<T: Scalar>(p: &ProbVector<T>, label: usize, epsilon: T) -> Result<T> {
    check_label(p, label)?;
    check_positive(p)?;
    Ok(label_smoothing_value(p.as_slice(), label, epsilon))
}

fn label_smoothing_value<T: Scalar>(p: &[T], label: usize, epsilon: T) -> T {
    let n = T::of(p.len() as f64);
    let ce_uniform = -p.iter().map(|x| x.ln()).sum::<T>() / n;
    (T::one() - epsilon) * -p[label].ln() + epsilon * ce_uniform
}

/// `KL(y‖p) − β·H(p)`; with a one-hot target the KL term is `−ln p_label`.
pub fn max_entropy_loss<T: Scalar>(p: &ProbVector<T>, label: usize, beta: T) -> Result<T> {
    check_label(p, label)?;
    check_positive(p)?;
    Ok(-p.as_slice()[label].ln() - beta * prob::entropy(p))
}

/// `H(y, p) + β·J^s_α(u‖p)`; the uniform distribution is the first argument.
pub fn alpha_js_loss<T: Scalar>(p: &ProbVector<T>, label: usize, a: SkewParam<T>, beta: T) -> Result<T> {
    check_label(p, label)?;
    check_positive(p)?;
    Ok(-p.as_slice()[label].ln() + beta * penalty_to_uniform(p.as_slice(), a.value()))
}

fn penalty_to_uniform<T: Scalar>(p: &[T], alpha: T) -> T {
    let u = vec![T::one() / T::of(p.len() as f64); p.len()];
    prob::alpha_js_slice(&u, p, alpha)
}

/// Softmax followed by the objective selected by `spec`.
pub fn loss<T: Scalar>(spec: &LossSpec<T>, z: &Logits<T>, label: usize) -> Result<T> {
    let p = softmax(z);
    check_label(&p, label)?;
    Ok(value_from_probs(spec, p.as_slice(), label))
}

/// Analytical `∂loss/∂z`.
pub fn loss_gradient<T: Scalar>(spec: &LossSpec<T>, z: &Logits<T>, label: usize) -> Result<Vec<T>> {
    let p = softmax(z);
    check_label(&p, label)?;
    let mut grad = vec![T::zero(); z.len()];
    value_and_grad_from_probs(spec, p.as_slice(), label, &mut grad);
    Ok(grad)
}

pub(crate) fn value_from_probs<T: Scalar>(spec: &LossSpec<T>, p: &[T], label: usize) -> T {
    match *spec {
        LossSpec::CrossEntropy => -p[label].ln(),
        LossSpec::Focal { gamma, alpha_t } => focal_value(p[label], gamma, alpha_t),
        LossSpec::LabelSmoothing { epsilon } => label_smoothing_value(p, label, epsilon),
        LossSpec::MaxEntropy { beta } => -p[label].ln() - beta * prob::entropy_slice(p),
        LossSpec::AlphaJs { alpha, beta } => -p[label].ln() + beta * penalty_to_uniform(p, alpha.value()),
    }
}

/// Pulls a gradient `g = ∂f/∂p` back through the softmax:
/// `∂f/∂z_j = p_j (g_j − Σ_i p_i g_i)`, accumulated into `out` scaled by `scale`.
fn add_softmax_pullback<T: Scalar>(p: &[T], g: &[T], scale: T, out: &mut [T]) {
    let mean: T = p.iter().zip(g).map(|(&a, &b)| a * b).sum();
    for ((o, &pj), &gj) in out.iter_mut().zip(p).zip(g) {
        *o = *o + scale * pj * (gj - mean);
    }
}

/// Evaluates the objective at `p = softmax(z)` and writes `∂loss/∂z` into `grad`.
pub(crate) fn value_and_grad_from_probs<T: Scalar>(spec: &LossSpec<T>, p: &[T], label: usize, grad: &mut [T]) -> T {
    let n = p.len();
    let one = T::one();
    match *spec {
        LossSpec::CrossEntropy => {
            for (j, (g, &pj)) in grad.iter_mut().zip(p).enumerate() {
                *g = if j == label { pj - one } else { pj };
            }
            -p[label].ln()
        }
        LossSpec::Focal { gamma, alpha_t } => {
            let pt = p[label];
            let rest = one - pt;
            let ln_pt = pt.ln();
            // d/dp_t of −α_t (1−p_t)^γ ln p_t, multiplied by p_t.
            let curvature = if gamma == T::zero() || rest <= T::zero() {
                T::zero()
            } else {
                gamma * rest.powf(gamma - one) * pt * ln_pt
            };
            let coeff = alpha_t * (curvature - rest.powf(gamma));
            // ∂p_t/∂z_j = p_t (δ_jt − p_j)
            for (j, (g, &pj)) in grad.iter_mut().zip(p).enumerate() {
                let delta = if j == label { one } else { T::zero() };
                *g = coeff * (delta - pj);
            }
            focal_value(pt, gamma, alpha_t)
        }
        LossSpec::LabelSmoothing { epsilon } => {
            let smooth = epsilon / T::of(n as f64);
            for (j, (g, &pj)) in grad.iter_mut().zip(p).enumerate() {
                let target = if j == label { one - epsilon + smooth } else { smooth };
                *g = pj - target;
            }
            label_smoothing_value(p, label, epsilon)
        }
        LossSpec::MaxEntropy { beta } => {
            let h = prob::entropy_slice(p);
            // ∂H/∂z_j = −p_j (ln p_j + H)
            for (j, (g, &pj)) in grad.iter_mut().zip(p).enumerate() {
                let ce = if j == label { pj - one } else { pj };
                *g = ce + beta * pj * (pj.ln() + h);
            }
            -p[label].ln() - beta * h
        }
        LossSpec::AlphaJs { alpha, beta } => {
            let a = alpha.value();
            let w = one - a;
            let u = one / T::of(n as f64);
            for (j, (g, &pj)) in grad.iter_mut().zip(p).enumerate() {
                *g = if j == label { pj - one } else { pj };
            }
            // ∂J^s_α(u‖p)/∂p_i = ln(p_i / m_i) / (1−α), m = (1−α)u + αp.
            let dpen: Vec<T> = p.iter().map(|&pi| (pi / (w * u + a * pi)).ln() / w).collect();
            add_softmax_pullback(p, &dpen, beta, grad);
            -p[label].ln() + beta * penalty_to_uniform(p, a)
        }
    }
}

/// `∂ J^s_α(u‖softmax(z)) / ∂z`, the penalty part of the skew-JS gradient.
pub fn penalty_gradient<T: Scalar>(z: &Logits<T>, a: SkewParam<T>) -> Vec<T> {
    let p = softmax(z);
    let p = p.as_slice();
    let w = T::one() - a.value();
    let u = T::one() / T::of(p.len() as f64);
    let dpen: Vec<T> = p.iter().map(|&pi| (pi / (w * u + a.value() * pi)).ln() / w).collect();
    let mut out = vec![T::zero(); p.len()];
    add_softmax_pullback(p, &dpen, T::one(), &mut out);
    out
}

/// `J^s_α(u‖softmax(z))`.
pub fn penalty<T: Scalar>(z: &Logits<T>, a: SkewParam<T>) -> T {
    penalty_to_uniform(softmax(z).as_slice(), a.value())
}
