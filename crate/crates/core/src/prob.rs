//! Finite discrete distributions and the divergences defined on them.
//!
//! All quantities are in nats. Zero-probability terms are skipped (the
//! `0·ln 0 = 0` convention); nothing in this module clamps or smooths its
//! inputs. A divergence whose reference has no mass where the argument does
//! returns [`Error::AbsoluteContinuityViolation`] instead of `+∞`.

use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// A probability vector over `n ≥ 2` outcomes.
#[derive(Debug, Clone, PartialEq)]
pub struct ProbVector<T> {
    probs: Vec<T>,
}

impl<T: Scalar> ProbVector<T> {
    /// Validates and wraps `probs`. The entries are stored unchanged.
    pub fn new(probs: Vec<T>) -> Result<Self> {
        if probs.len() < 2 {
            return Err(Error::InvalidDistribution(format!("need at least 2 outcomes, got {}", probs.len())));
        }
        for (i, &p) in probs.iter().enumerate() {
            if !p.is_finite() || p < T::zero() {
                return Err(Error::InvalidDistribution(format!("entry {i} is {p}")));
            }
        }
        let total: T = probs.iter().copied().sum();
        if (total - T::one()).abs() > T::simplex_tolerance() {
            return Err(Error::InvalidDistribution(format!("entries sum to {total}")));
        }
        Ok(Self { probs })
    }

    pub fn uniform(n: usize) -> Result<Self> {
        if n < 2 {
            return Err(Error::InvalidDistribution(format!("need at least 2 outcomes, got {n}")));
        }
        let w = T::one() / T::of(n as f64);
        Ok(Self { probs: vec![w; n] })
    }

    pub fn one_hot(n: usize, k: usize) -> Result<Self> {
        if n < 2 {
            return Err(Error::InvalidDistribution(format!("need at least 2 outcomes, got {n}")));
        }
        if k >= n {
            return Err(Error::LabelOutOfRange { label: k, n_classes: n });
        }
        let mut probs = vec![T::zero(); n];
        probs[k] = T::one();
        Ok(Self { probs })
    }

    /// Builds a distribution the caller has already normalized.
    pub(crate) fn from_normalized_unchecked(probs: Vec<T>) -> Self {
        debug_assert!(probs.len() >= 2);
        Self { probs }
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.probs.len()
    }

    #[inline]
    pub fn is_empty(&self) -> bool {
        self.probs.is_empty()
    }

    #[inline]
    pub fn as_slice(&self) -> &[T] {
        &self.probs
    }

    pub fn into_vec(self) -> Vec<T> {
        self.probs
    }

    pub fn is_strictly_positive(&self) -> bool {
        self.probs.iter().all(|&p| p > T::zero())
    }
}

/// Skew parameter `α` of the mixture `(1−α)p + αq`, strictly inside `(0, 1)`.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd)]
pub struct SkewParam<T>(T);

impl<T: Scalar> SkewParam<T> {
    pub fn new(alpha: T) -> Result<Self> {
        if alpha.is_finite() && alpha > T::zero() && alpha < T::one() {
            Ok(Self(alpha))
        } else {
            Err(Error::InvalidSkew(alpha.to_f64_lossy()))
        }
    }

    #[inline]
    pub fn value(self) -> T {
        self.0
    }
}

fn check_len<T>(p: &ProbVector<T>, q: &ProbVector<T>) -> Result<()> {
    if p.probs.len() == q.probs.len() {
        Ok(())
    } else {
        Err(Error::LengthMismatch { left: p.probs.len(), right: q.probs.len() })
    }
}

pub(crate) fn entropy_slice<T: Scalar>(p: &[T]) -> T {
    p.iter().filter(|&&x| x > T::zero()).fold(T::zero(), |acc, &x| acc - x * x.ln())
}

/// `Σ p_i ln(p_i / q_i)` for a `q` known to cover the support of `p`.
fn kl_covered<T: Scalar>(p: &[T], q: &[T]) -> T {
    p.iter().zip(q).filter(|(&a, _)| a > T::zero()).fold(T::zero(), |acc, (&a, &b)| acc + a * (a / b).ln())
}

/// Shannon entropy `−Σ p_i ln p_i`.
pub fn entropy<T: Scalar>(p: &ProbVector<T>) -> T {
    entropy_slice(&p.probs)
}

/// Cross-entropy `−Σ target_i ln p_i`.
pub fn cross_entropy<T: Scalar>(target: &ProbVector<T>, p: &ProbVector<T>) -> Result<T> {
    check_len(target, p)?;
    let mut acc = T::zero();
    for (i, (&t, &x)) in target.probs.iter().zip(&p.probs).enumerate() {
        if t > T::zero() {
            if x <= T::zero() {
                return Err(Error::AbsoluteContinuityViolation { index: i });
            }
            acc = acc - t * x.ln();
        }
    }
    Ok(acc)
}

/// Kullback-Leibler divergence `KL(p‖q)`.
pub fn kl<T: Scalar>(p: &ProbVector<T>, q: &ProbVector<T>) -> Result<T> {
    check_len(p, q)?;
    if let Some(index) = p.probs.iter().zip(&q.probs).position(|(&a, &b)| a > T::zero() && b <= T::zero()) {
        return Err(Error::AbsoluteContinuityViolation { index });
    }
    Ok(kl_covered(&p.probs, &q.probs))
}

/// Jensen-Shannon divergence with the equal-weight midpoint; lies in `[0, ln 2]`.
pub fn jsd<T: Scalar>(p: &ProbVector<T>, q: &ProbVector<T>) -> Result<T> {
    check_len(p, q)?;
    let half = T::of(0.5);
    let m: Vec<T> = p.probs.iter().zip(&q.probs).map(|(&a, &b)| half * (a + b)).collect();
    Ok(half * kl_covered(&p.probs, &m) + half * kl_covered(&q.probs, &m))
}

/// The skewed mixture `(1−α)p + αq`.
pub fn mixture<T: Scalar>(p: &ProbVector<T>, q: &ProbVector<T>, a: SkewParam<T>) -> Result<ProbVector<T>> {
    check_len(p, q)?;
    Ok(ProbVector { probs: mixture_slice(&p.probs, &q.probs, a.0) })
}

pub(crate) fn mixture_slice<T: Scalar>(p: &[T], q: &[T], alpha: T) -> Vec<T> {
    // p + α(q − p) reproduces p_i exactly wherever p_i = q_i.
    p.iter().zip(q).map(|(&a, &b)| a + alpha * (b - a)).collect()
}

/// Scaled skew Jensen-Shannon divergence as a weighted sum of KL terms:
///
/// `J^s_α(p‖q) = [(1−α)·KL(p‖m) + α·KL(q‖m)] / (α(1−α))`, `m = (1−α)p + αq`.
///
/// Every coordinate where `p` or `q` is positive is positive in `m`, so the
/// KL terms are always finite.
pub fn alpha_js<T: Scalar>(p: &ProbVector<T>, q: &ProbVector<T>, a: SkewParam<T>) -> Result<T> {
    check_len(p, q)?;
    Ok(alpha_js_slice(&p.probs, &q.probs, a.0))
}

pub(crate) fn alpha_js_slice<T: Scalar>(p: &[T], q: &[T], alpha: T) -> T {
    let w = T::one() - alpha;
    let m = mixture_slice(p, q, alpha);
    // (1−α)KL(p‖m)/(α(1−α)) = KL(p‖m)/α, and likewise for the second term.
    kl_covered(p, &m) / alpha + kl_covered(q, &m) / w
}

/// The same divergence through entropies:
///
/// `J^s_α(p‖q) = [H((1−α)p + αq) − (1−α)H(p) − αH(q)] / (α(1−α))`.
pub fn alpha_js_entropy_form<T: Scalar>(p: &ProbVector<T>, q: &ProbVector<T>, a: SkewParam<T>) -> Result<T> {
    check_len(p, q)?;
    let alpha = a.0;
    let w = T::one() - alpha;
    let m = mixture_slice(&p.probs, &q.probs, alpha);
    let gap = entropy_slice(&m) - w * entropy_slice(&p.probs) - alpha * entropy_slice(&q.probs);
    Ok(gap / (alpha * w))
}
