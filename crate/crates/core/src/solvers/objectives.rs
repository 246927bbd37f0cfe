//! Reduced objectives of the four problem families, in minimisation form,
//! over the scheduling fractions `y_i = mu_i / p_i` (and, for proportional
//! fairness, the variance shares `beta`). Each returns `(value, gradient)`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Convex violation penalty `C(x) = scale * x^exponent` for `x > 0`, zero
/// otherwise.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(bound = "")]
pub struct Penalty<S: Scalar> {
    pub scale: S,
    pub exponent: S,
}

impl<S: Scalar> Penalty<S> {
    /// `C(x) = x^2` on `x > 0`.
    pub fn quadratic() -> Self {
        Self {
            scale: S::one(),
            exponent: S::lit(2.0),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.scale >= S::zero()) || !(self.exponent >= S::one()) {
            return Err(Error::Domain(format!(
                "penalty must be convex and nondecreasing: scale {} >= 0, exponent {} >= 1",
                self.scale, self.exponent
            )));
        }
        Ok(())
    }

    pub fn value(&self, x: S) -> S {
        if x > S::zero() {
            self.scale * x.powf(self.exponent)
        } else {
            S::zero()
        }
    }

    pub fn derivative(&self, x: S) -> S {
        if x > S::zero() {
            self.scale * self.exponent * x.powf(self.exponent - S::one())
        } else {
            S::zero()
        }
    }
}

impl<S: Scalar> Default for Penalty<S> {
    fn default() -> Self {
        Self::quadratic()
    }
}

/// `1/p_i - 1`, the per-slot variance contribution of a scheduled device.
pub(crate) fn loss_weights<S: Scalar>(p: &[S]) -> Vec<S> {
    p.iter().map(|&p| p.recip() - S::one()).collect()
}

/// Total approximate AoI with the variance split chosen optimally:
/// `S^2 / (2 sum y_j^2) + sum 1 / (2 p_i y_i) + N / 2`, `S^2 = sum a_i y_i`.
pub fn total_aoi<S: Scalar>(y: &[S], p: &[S]) -> (S, Vec<S>) {
    let half = S::lit(0.5);
    let a = loss_weights(p);
    let s2: S = y.iter().zip(&a).map(|(&y, &a)| a * y).sum();
    let q: S = y.iter().map(|&y| y * y).sum();
    let mut value = half * s2 / q + half * S::from_usize(y.len()).unwrap();
    let mut grad = Vec::with_capacity(y.len());
    for i in 0..y.len() {
        value = value + half / (p[i] * y[i]);
        grad.push(half * (a[i] * q - S::lit(2.0) * y[i] * s2) / (q * q) - half / (p[i] * y[i] * y[i]));
    }
    (value, grad)
}

/// Total approximate AoI plus throughput-violation penalties.
pub fn total_cost<S: Scalar>(y: &[S], p: &[S], q: &[S], penalty: &Penalty<S>) -> (S, Vec<S>) {
    let (mut value, mut grad) = total_aoi(y, p);
    for i in 0..y.len() {
        let shortfall = q[i] - p[i] * y[i];
        value = value + penalty.value(shortfall);
        grad[i] = grad[i] - p[i] * penalty.derivative(shortfall);
    }
    (value, grad)
}

/// Negative proportional-fairness utility
/// `-sum_i [ln(p_i y_i) - ln h_i]` with
/// `h_i = (beta_i^2 S^2 / y_i^2 + 1 / (p_i y_i)) / 2 + 1/2`.
///
/// `x` holds `y` followed by `beta`.
pub fn neg_utility<S: Scalar>(x: &[S], p: &[S]) -> (S, Vec<S>) {
    let n = p.len();
    let (y, beta) = x.split_at(n);
    let half = S::lit(0.5);
    let a = loss_weights(p);
    let s2: S = y.iter().zip(&a).map(|(&y, &a)| a * y).sum();

    let mut value = S::zero();
    let mut grad = vec![S::zero(); 2 * n];
    let mut coupling = S::zero();
    let mut h = Vec::with_capacity(n);
    for i in 0..n {
        let hi = half * (beta[i] * beta[i] * s2 / (y[i] * y[i]) + (p[i] * y[i]).recip()) + half;
        value = value - (p[i] * y[i]).ln() + hi.ln();
        coupling = coupling + beta[i] * beta[i] / (y[i] * y[i] * hi);
        h.push(hi);
    }
    for i in 0..n {
        let (yi, bi, hi) = (y[i], beta[i], h[i]);
        grad[i] = -yi.recip()
            + half * a[i] * coupling
            + (-(bi * bi * s2) / (yi * yi * yi) - half / (p[i] * yi * yi)) / hi;
        grad[n + i] = bi * s2 / (yi * yi * hi);
    }
    (value, grad)
}

/// Negative admission margin `-(sum_i sqrt(cap_i) / p_i - sqrt(S^2))` with
/// `cap_i / p_i^2 = y_i^2 (2 e_i - 1) - y_i / p_i`.
pub fn neg_admission_margin<S: Scalar>(y: &[S], p: &[S], e: &[S]) -> (S, Vec<S>) {
    let two = S::lit(2.0);
    let a = loss_weights(p);
    let s2: S = y.iter().zip(&a).map(|(&y, &a)| a * y).sum::<S>().max(S::zero());
    let s = s2.sqrt();
    let floor = S::epsilon().sqrt();
    let mut value = s;
    let mut grad = Vec::with_capacity(y.len());
    for i in 0..y.len() {
        let k = two * e[i] - S::one();
        let c = (y[i] * y[i] * k - y[i] / p[i]).max(S::zero()).sqrt();
        value = value - c;
        let dc = (two * y[i] * k - p[i].recip()) / (two * c.max(floor));
        let ds = if s > S::zero() { a[i] / (two * s) } else { S::zero() };
        grad.push(ds - dc);
    }
    (value, grad)
}
