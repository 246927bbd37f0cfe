//! Second-order algebra of the throughput/AoI capacity region: the AoI
//! approximation, the policy-invariant system variance, the outer/inner
//! bound predicates and the closed-form variance split.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{NetworkConfig, SecondOrderPoint, TargetPairs};
use crate::scalar::Scalar;

/// Approximate long-run average AoI of a delivery process with mean `mu` and
/// temporal variance `sigma2`: `(sigma2 / mu^2 + 1 / mu) / 2 + 1 / 2`.
pub fn aoi_approx<S: Scalar>(mu: S, sigma2: S) -> Result<S> {
    if !(mu > S::zero()) {
        return Err(Error::Domain(format!("aoi_approx needs mu > 0, got {mu}")));
    }
    if !(sigma2 >= S::zero()) {
        return Err(Error::Domain(format!("aoi_approx needs sigma2 >= 0, got {sigma2}")));
    }
    let half = S::lit(0.5);
    Ok(half * (sigma2 / (mu * mu) + mu.recip()) + half)
}

/// `aoi_approx` shifted by a signed margin (`+delta` for the inner bound,
/// `-delta` for the outer bound).
pub fn aoi_approx_margin<S: Scalar>(mu: S, sigma2: S, signed_delta: S) -> Result<S> {
    Ok(aoi_approx(mu, sigma2)? + signed_delta)
}

/// Long-run variance of the projected process, `sum_i (mu_i / p_i)(1 / p_i - 1)`.
///
/// Depends only on the throughput vector, not on the scheduling policy.
pub fn system_variance<S: Scalar>(mu: &[S], p: &[S]) -> S {
    mu.iter()
        .zip(p)
        .map(|(&m, &p)| (m / p) * (p.recip() - S::one()))
        .sum()
}

/// `sqrt(sigma2_i) / p_i` for every device.
pub fn scaled_std<S: Scalar>(sigma2: &[S], p: &[S]) -> Vec<S> {
    sigma2.iter().zip(p).map(|(&v, &p)| v.max(S::zero()).sqrt() / p).collect()
}

/// Named constraint of the region predicates.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Constraint {
    /// `mu_i >= m_i`
    ThroughputFloor { device: usize },
    /// approximate AoI (with margin) `<= h_i`
    AoiCeiling { device: usize },
    /// `sum mu_i / p_i = M`
    ScheduleBudget,
    /// `0 <= mu_i / p_i <= 1` (outer) or `eps <= mu_i / p_i <= 1 - eps` (inner)
    ScheduleFraction { device: usize },
    /// `sum sqrt(sigma2_i) / p_i >= sqrt(sigma2)` (outer) or `=` (inner)
    VarianceBudget,
}

impl fmt::Display for Constraint {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Constraint::ThroughputFloor { device } => write!(f, "throughput_floor[{device}]"),
            Constraint::AoiCeiling { device } => write!(f, "aoi_ceiling[{device}]"),
            Constraint::ScheduleBudget => f.write_str("schedule_budget"),
            Constraint::ScheduleFraction { device } => write!(f, "schedule_fraction[{device}]"),
            Constraint::VarianceBudget => f.write_str("variance_budget"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "")]
pub struct Violation<S: Scalar> {
    pub constraint: Constraint,
    /// Signed slack; negative (or, for equalities, nonzero beyond tolerance).
    pub slack: S,
}

/// Outcome of a bound check. `feasible` holds exactly when `violated` is empty.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "")]
pub struct RegionCheckReport<S: Scalar> {
    pub feasible: bool,
    pub violated: Vec<Violation<S>>,
    /// `sum sqrt(sigma2_i) / p_i - sqrt(sigma2)`
    pub slack_variance: S,
    /// `M - sum mu_i / p_i`
    pub slack_mean: S,
    /// Diagnostic long-run scheduling fractions `mu_i / p_i`.
    pub schedule_fractions: Vec<S>,
}

/// Tolerances for the region predicates.
#[derive(Debug, Clone, PartialEq)]
pub struct CheckOptions<S: Scalar> {
    /// Absolute tolerance on `sum mu_i / p_i = M`.
    pub sum_tol: S,
    /// Tolerance on the variance budget, relative to `max(1, sqrt(sigma2))`.
    pub variance_tol: S,
    /// Strict-interior margin used by the inner bound.
    pub eps: S,
    /// Per-device AoI approximation margins; zero when absent.
    pub delta: Option<Vec<S>>,
}

impl<S: Scalar> CheckOptions<S> {
    /// Tolerances for algebraically computed candidates.
    pub fn analytic() -> Self {
        Self {
            sum_tol: S::lit(1e-9).max(S::epsilon() * S::lit(64.0)),
            variance_tol: S::lit(1e-9).max(S::epsilon() * S::lit(64.0)),
            eps: S::lit(1e-3),
            delta: None,
        }
    }

    /// Tolerances for candidates estimated from simulation.
    pub fn empirical() -> Self {
        Self {
            sum_tol: S::lit(1e-2),
            variance_tol: S::lit(1e-2),
            eps: S::lit(1e-3),
            delta: None,
        }
    }

    pub fn with_eps(mut self, eps: S) -> Self {
        self.eps = eps;
        self
    }

    pub fn with_delta(mut self, delta: Vec<S>) -> Self {
        self.delta = Some(delta);
        self
    }
}

impl<S: Scalar> Default for CheckOptions<S> {
    fn default() -> Self {
        Self::analytic()
    }
}

#[derive(Clone, Copy, PartialEq, Eq)]
enum Bound {
    Outer,
    Inner,
}

/// Necessary conditions for `pairs` to be achievable, witnessed by `candidate`.
pub fn check_outer<S: Scalar>(
    pairs: &TargetPairs<S>,
    candidate: &SecondOrderPoint<S>,
    cfg: &NetworkConfig<S>,
    opts: &CheckOptions<S>,
) -> Result<RegionCheckReport<S>> {
    check(pairs, candidate, cfg, opts, Bound::Outer)
}

/// Sufficient conditions (strict interior, tight variance budget): VWD driven
/// by `candidate` achieves `pairs` whenever this report is feasible.
pub fn check_inner<S: Scalar>(
    pairs: &TargetPairs<S>,
    candidate: &SecondOrderPoint<S>,
    cfg: &NetworkConfig<S>,
    opts: &CheckOptions<S>,
) -> Result<RegionCheckReport<S>> {
    if !(opts.eps > S::zero()) {
        return Err(Error::Domain(format!("inner-bound strictness must be positive, got {}", opts.eps)));
    }
    check(pairs, candidate, cfg, opts, Bound::Inner)
}

fn check<S: Scalar>(
    pairs: &TargetPairs<S>,
    candidate: &SecondOrderPoint<S>,
    cfg: &NetworkConfig<S>,
    opts: &CheckOptions<S>,
    bound: Bound,
) -> Result<RegionCheckReport<S>> {
    let n = cfg.n();
    Error::check_len("pairs", pairs.len(), n)?;
    Error::check_len("candidate", candidate.len(), n)?;
    if let Some(d) = &opts.delta {
        Error::check_len("delta", d.len(), n)?;
    }
    let p = cfg.p();
    let zero = S::zero();
    // Inequalities are accepted up to the same absolute tolerance as the
    // schedule budget so that exact boundary points survive rounding.
    let tol_ineq = -opts.sum_tol;
    let mut violated = Vec::new();

    for i in 0..n {
        let (mu, sigma2) = (candidate.mu[i], candidate.sigma2[i]);
        let floor_slack = mu - pairs.m[i];
        if floor_slack < tol_ineq {
            violated.push(Violation {
                constraint: Constraint::ThroughputFloor { device: i },
                slack: floor_slack,
            });
        }
        let delta = opts.delta.as_ref().map_or(zero, |d| d[i]);
        let signed = if bound == Bound::Outer { -delta } else { delta };
        let aoi = if mu > zero {
            aoi_approx_margin(mu, sigma2, signed)?
        } else {
            S::infinity()
        };
        let aoi_slack = pairs.h[i] - aoi;
        if pairs.h[i] != S::infinity() && !(aoi_slack >= tol_ineq * pairs.h[i].abs().max(S::one())) {
            violated.push(Violation {
                constraint: Constraint::AoiCeiling { device: i },
                slack: aoi_slack,
            });
        }
    }

    let fractions = candidate.schedule_fractions(p);
    let slack_mean = S::from_usize(cfg.m()).unwrap() - fractions.iter().copied().sum::<S>();
    if slack_mean.abs() > opts.sum_tol {
        violated.push(Violation {
            constraint: Constraint::ScheduleBudget,
            slack: slack_mean,
        });
    }

    let (lo, hi) = match bound {
        Bound::Outer => (zero, S::one()),
        Bound::Inner => (opts.eps, S::one() - opts.eps),
    };
    for (i, &y) in fractions.iter().enumerate() {
        let slack = (y - lo).min(hi - y);
        if slack < tol_ineq {
            violated.push(Violation {
                constraint: Constraint::ScheduleFraction { device: i },
                slack,
            });
        }
    }

    let budget = system_variance(&candidate.mu, p).max(zero).sqrt();
    let spread: S = scaled_std(&candidate.sigma2, p).into_iter().sum();
    let slack_variance = spread - budget;
    let tol = opts.variance_tol * budget.max(S::one());
    let variance_ok = match bound {
        Bound::Outer => slack_variance >= -tol,
        Bound::Inner => slack_variance.abs() <= tol,
    };
    if !variance_ok {
        violated.push(Violation {
            constraint: Constraint::VarianceBudget,
            slack: slack_variance,
        });
    }

    Ok(RegionCheckReport {
        feasible: violated.is_empty(),
        violated,
        slack_variance,
        slack_mean,
        schedule_fractions: fractions,
    })
}

/// Result of [`allocate_variances`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "")]
pub struct VarianceAllocation<S: Scalar> {
    pub sigma2: Vec<S>,
    /// `sqrt(sigma2_i) / p_i`; sums to `sqrt(system_variance)`.
    pub scaled_std: Vec<S>,
    /// Minimal value of `sum_i w_i sigma2_i / mu_i^2`.
    pub objective: S,
}

/// Minimizes `sum_i w_i sigma2_i / mu_i^2` subject to the tight variance
/// budget `sum_i sqrt(sigma2_i) / p_i = sqrt(system_variance(mu, p))`.
///
/// With `c_i = (mu_i / p_i)^2 / w_i` the minimizer puts
/// `sqrt(sigma2_i) / p_i = S c_i / sum_j c_j`, giving objective `S^2 / sum_j c_j`.
pub fn allocate_variances<S: Scalar>(mu: &[S], p: &[S], w: &[S]) -> Result<VarianceAllocation<S>> {
    Error::check_len("p", p.len(), mu.len())?;
    Error::check_len("w", w.len(), mu.len())?;
    if mu.is_empty() {
        return Err(Error::Domain("allocate_variances needs at least one device".into()));
    }
    for i in 0..mu.len() {
        if !(mu[i] > S::zero()) {
            return Err(Error::Domain(format!("mu[{i}] = {} must be positive", mu[i])));
        }
        if !(w[i] > S::zero()) {
            return Err(Error::Domain(format!("w[{i}] = {} must be positive", w[i])));
        }
        if !(p[i] > S::zero() && p[i] <= S::one()) {
            return Err(Error::Domain(format!("p[{i}] = {} not in (0, 1]", p[i])));
        }
    }
    let budget = system_variance(mu, p).max(S::zero()).sqrt();
    let c: Vec<S> = (0..mu.len())
        .map(|i| {
            let y = mu[i] / p[i];
            y * y / w[i]
        })
        .collect();
    let total: S = c.iter().copied().sum();
    let scaled: Vec<S> = c.iter().map(|&ci| budget * ci / total).collect();
    let sigma2 = scaled
        .iter()
        .zip(p)
        .map(|(&nu, &p)| {
            let s = p * nu;
            s * s
        })
        .collect();
    Ok(VarianceAllocation {
        sigma2,
        scaled_std: scaled,
        objective: budget * budget / total,
    })
}
