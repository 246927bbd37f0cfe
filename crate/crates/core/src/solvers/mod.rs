//! Numerical optimisation over the second-order capacity region.
//!
//! Every problem is reduced to smooth minimisation over the scheduling
//! fractions `y_i = mu_i / p_i` restricted to the slice
//! `{sum y_i = M, lo_i <= y_i <= 1 - eps}` (times a simplex of variance
//! shares for proportional fairness). The tight variance budget is built into
//! the parametrisation, so every iterate satisfies it exactly. Minimisation
//! uses spectral projected gradient from several starts.

pub mod objectives;
pub mod projection;
mod spg;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{NetworkConfig, SecondOrderPoint};
use crate::region::{allocate_variances, aoi_approx, system_variance};
use crate::scalar::Scalar;

pub use objectives::Penalty;
pub use projection::{project_bounded_slice, project_mu, project_simplex};

use projection::fraction_bounds;
use spg::{SpgOutcome, SpgSettings};

/// Solver knobs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "")]
pub struct SolverOptions<S: Scalar> {
    /// Strict-interior margin on `mu_i / p_i`.
    pub eps: S,
    /// Projected-gradient (KKT) residual at which a start is converged.
    pub tol: S,
    pub max_iter: usize,
    pub n_starts: usize,
    pub seed: u64,
}

impl<S: Scalar> Default for SolverOptions<S> {
    fn default() -> Self {
        Self {
            eps: S::lit(1e-3),
            tol: S::default_tolerance(),
            max_iter: 100_000,
            n_starts: 20,
            seed: 0,
        }
    }
}

/// Optimisation witness.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "")]
pub struct SolverResult<S: Scalar> {
    pub point: SecondOrderPoint<S>,
    /// Problem objective in its natural sense: total AoI, total cost,
    /// utility, or admission margin.
    pub objective: S,
    pub converged: bool,
    pub iterations: usize,
    pub kkt_residual: S,
    /// `M = N`: every device is scheduled in every slot and the point is the
    /// forced one, `mu_i = p_i`, `sigma2_i = p_i (1 - p_i)`.
    pub boundary: bool,
    pub best_start: usize,
    /// Spread of converged objectives across starts.
    pub start_spread: S,
}

fn fully_scheduled_point<S: Scalar>(cfg: &NetworkConfig<S>) -> SecondOrderPoint<S> {
    let p = cfg.p();
    SecondOrderPoint {
        mu: p.to_vec(),
        sigma2: p.iter().map(|&p| p * (S::one() - p)).collect(),
    }
}

fn boundary_result<S: Scalar>(cfg: &NetworkConfig<S>, objective: S) -> SolverResult<S> {
    SolverResult {
        point: fully_scheduled_point(cfg),
        objective,
        converged: true,
        iterations: 0,
        kkt_residual: S::zero(),
        boundary: true,
        best_start: 0,
        start_spread: S::zero(),
    }
}

fn uniform_in_box<S: Scalar>(lo: &[S], hi: &[S], rng: &mut ChaCha8Rng) -> Vec<S> {
    lo.iter()
        .zip(hi)
        .map(|(&l, &h)| l + (h - l) * S::lit(rng.random::<f64>()))
        .collect()
}

fn dirichlet_one<S: Scalar>(n: usize, rng: &mut ChaCha8Rng) -> Vec<S> {
    let raw: Vec<f64> = (0..n).map(|_| -(1.0 - rng.random::<f64>()).ln()).collect();
    let total: f64 = raw.iter().sum();
    raw.into_iter().map(|v| S::lit(v / total)).collect()
}

struct MultiStart<S: Scalar> {
    best: SpgOutcome<S>,
    best_start: usize,
    spread: S,
}

/// Runs SPG from `n_starts` starting points; start 0 is `center`, the rest
/// are drawn by `random_start`. Picks the lowest value, then the lowest start.
fn multistart<S, F, P, R>(
    opts: &SolverOptions<S>,
    center: Vec<S>,
    random_start: R,
    objective: F,
    project: P,
) -> MultiStart<S>
where
    S: Scalar,
    F: Fn(&[S]) -> (S, Vec<S>) + Sync,
    P: Fn(&[S]) -> Vec<S> + Sync,
    R: Fn(&mut ChaCha8Rng) -> Vec<S> + Sync,
{
    let settings = SpgSettings {
        tol: opts.tol,
        max_iter: opts.max_iter,
    };
    let n_starts = opts.n_starts.max(1);
    let outcomes: Vec<SpgOutcome<S>> = (0..n_starts)
        .into_par_iter()
        .map(|k| {
            let x0 = if k == 0 {
                center.clone()
            } else {
                let mut rng = ChaCha8Rng::seed_from_u64(opts.seed.wrapping_mul(0x9e37_79b9).wrapping_add(k as u64));
                random_start(&mut rng)
            };
            spg::minimize(&x0, &objective, &project, settings)
        })
        .collect();
    let mut best_start = 0;
    for (k, o) in outcomes.iter().enumerate() {
        if o.value < outcomes[best_start].value {
            best_start = k;
        }
    }
    let converged: Vec<S> = outcomes.iter().filter(|o| o.converged).map(|o| o.value).collect();
    let spread = if converged.is_empty() {
        S::zero()
    } else {
        converged.iter().copied().fold(S::neg_infinity(), S::max)
            - converged.iter().copied().fold(S::infinity(), S::min)
    };
    let iterations = outcomes.iter().map(|o| o.iterations).sum();
    let mut best = outcomes.into_iter().nth(best_start).unwrap();
    best.iterations = iterations;
    MultiStart { best, best_start, spread }
}

fn slice_projector<S: Scalar>(lo: Vec<S>, hi: Vec<S>, total: S) -> impl Fn(&[S]) -> Vec<S> + Sync {
    move |z: &[S]| project_bounded_slice(z, &lo, &hi, total).expect("feasibility checked before optimisation")
}

fn check_nonempty<S: Scalar>(lo: &[S], hi: &[S], total: S) -> Result<()> {
    project_bounded_slice(&lo.to_vec(), lo, hi, total).map(|_| ())
}

fn center_point<S: Scalar>(lo: &[S], hi: &[S], total: S) -> Vec<S> {
    let n = lo.len();
    let even = vec![total / S::from_usize(n).unwrap(); n];
    project_bounded_slice(&even, lo, hi, total).expect("feasibility checked before optimisation")
}

fn point_from_fractions<S: Scalar>(y: &[S], p: &[S]) -> Result<SecondOrderPoint<S>> {
    let mu: Vec<S> = y.iter().zip(p).map(|(&y, &p)| y * p).collect();
    let alloc = allocate_variances(&mu, p, &vec![S::one(); p.len()])?;
    SecondOrderPoint::new(mu, alloc.sigma2)
}

fn sum_aoi<S: Scalar>(point: &SecondOrderPoint<S>) -> Result<S> {
    let mut total = S::zero();
    for i in 0..point.len() {
        total = total + aoi_approx(point.mu[i], point.sigma2[i])?;
    }
    Ok(total)
}

fn check_lengths<S: Scalar>(cfg: &NetworkConfig<S>, what: &'static str, v: &[S]) -> Result<()> {
    crate::model::validate_config(cfg)?;
    Error::check_len(what, v.len(), cfg.n())
}

/// Minimum total approximate AoI subject to throughput floors `q`.
pub fn solve_min_aoi_hard<S: Scalar>(cfg: &NetworkConfig<S>, q: &[S], opts: &SolverOptions<S>) -> Result<SolverResult<S>> {
    check_lengths(cfg, "q", q)?;
    let p = cfg.p();
    if let Some(i) = q.iter().position(|&x| !(x >= S::zero())) {
        return Err(Error::Domain(format!("q[{i}] = {} is negative", q[i])));
    }
    let m = S::from_usize(cfg.m()).unwrap();
    let load: S = q.iter().zip(p).map(|(&q, &p)| q / p).sum();
    if cfg.is_fully_scheduled() {
        if let Some(i) = (0..cfg.n()).find(|&i| q[i] > p[i]) {
            return Err(Error::Infeasible(format!("q[{i}] = {} exceeds p[{i}] = {}", q[i], p[i])));
        }
        let point = fully_scheduled_point(cfg);
        let objective = sum_aoi(&point)?;
        return Ok(boundary_result(cfg, objective));
    }
    if !(load < m) {
        return Err(Error::Infeasible(format!("sum q_i / p_i = {load} is not below M = {m}")));
    }
    let (lo, hi) = fraction_bounds(cfg, q, opts.eps);
    check_nonempty(&lo, &hi, m)?;

    let ms = multistart(
        opts,
        center_point(&lo, &hi, m),
        |rng| uniform_in_box(&lo, &hi, rng),
        |y| objectives::total_aoi(y, p),
        slice_projector(lo.clone(), hi.clone(), m),
    );
    finish(cfg, ms, |point| sum_aoi(point))
}

/// Minimum of total approximate AoI plus `penalty(q_i - mu_i)`.
pub fn solve_cost_soft<S: Scalar>(
    cfg: &NetworkConfig<S>,
    q: &[S],
    penalty: &Penalty<S>,
    opts: &SolverOptions<S>,
) -> Result<SolverResult<S>> {
    check_lengths(cfg, "q", q)?;
    penalty.validate()?;
    let p = cfg.p();
    let cost = |point: &SecondOrderPoint<S>| -> Result<S> {
        let mut total = sum_aoi(point)?;
        for i in 0..point.len() {
            total = total + penalty.value(q[i] - point.mu[i]);
        }
        Ok(total)
    };
    if cfg.is_fully_scheduled() {
        let objective = cost(&fully_scheduled_point(cfg))?;
        return Ok(boundary_result(cfg, objective));
    }
    let m = S::from_usize(cfg.m()).unwrap();
    let (lo, hi) = fraction_bounds(cfg, &vec![S::zero(); cfg.n()], opts.eps);
    check_nonempty(&lo, &hi, m)?;
    let ms = multistart(
        opts,
        center_point(&lo, &hi, m),
        |rng| uniform_in_box(&lo, &hi, rng),
        |y| objectives::total_cost(y, p, q, penalty),
        slice_projector(lo.clone(), hi.clone(), m),
    );
    finish(cfg, ms, cost)
}

fn finish<S, F>(cfg: &NetworkConfig<S>, ms: MultiStart<S>, objective: F) -> Result<SolverResult<S>>
where
    S: Scalar,
    F: Fn(&SecondOrderPoint<S>) -> Result<S>,
{
    let point = point_from_fractions(&ms.best.x, cfg.p())?;
    Ok(SolverResult {
        objective: objective(&point)?,
        point,
        converged: ms.best.converged,
        iterations: ms.best.iterations,
        kkt_residual: ms.best.kkt_residual,
        boundary: false,
        best_start: ms.best_start,
        start_spread: ms.spread,
    })
}

/// Proportional-fairness utility `sum_i ln mu_i - ln h_i` of a point.
pub fn utility<S: Scalar>(point: &SecondOrderPoint<S>) -> Result<S> {
    let mut total = S::zero();
    for i in 0..point.len() {
        total = total + point.mu[i].ln() - aoi_approx(point.mu[i], point.sigma2[i])?.ln();
    }
    Ok(total)
}

/// Maximum proportional-fairness utility over the inner bound. Optimises
/// jointly over `y` and the variance shares `beta` on the unit simplex, with
/// `sqrt(sigma2_i) = p_i beta_i sqrt(system_variance)`.
pub fn solve_prop_fair<S: Scalar>(cfg: &NetworkConfig<S>, opts: &SolverOptions<S>) -> Result<SolverResult<S>> {
    crate::model::validate_config(cfg)?;
    if cfg.is_fully_scheduled() {
        let objective = utility(&fully_scheduled_point(cfg))?;
        return Ok(boundary_result(cfg, objective));
    }
    let n = cfg.n();
    let p = cfg.p();
    let m = S::from_usize(cfg.m()).unwrap();
    let (lo, hi) = fraction_bounds(cfg, &vec![S::zero(); n], opts.eps);
    check_nonempty(&lo, &hi, m)?;

    let y0 = center_point(&lo, &hi, m);
    let sq: S = y0.iter().map(|&y| y * y).sum();
    let mut center = y0.clone();
    center.extend(y0.iter().map(|&y| y * y / sq));

    let project = |z: &[S]| -> Vec<S> {
        let mut out = project_bounded_slice(&z[..n], &lo, &hi, m).expect("feasibility checked before optimisation");
        out.extend(project_simplex(&z[n..]));
        out
    };
    let ms = multistart(
        opts,
        center,
        |rng| {
            let mut x = uniform_in_box(&lo, &hi, rng);
            x.extend(dirichlet_one::<S>(n, rng));
            x
        },
        |x| objectives::neg_utility(x, p),
        project,
    );
    let (y, beta) = ms.best.x.split_at(n);
    let budget = system_variance(&y.iter().zip(p).map(|(&y, &p)| y * p).collect::<Vec<_>>(), p)
        .max(S::zero())
        .sqrt();
    let mu: Vec<S> = y.iter().zip(p).map(|(&y, &p)| y * p).collect();
    let sigma2 = beta
        .iter()
        .zip(p)
        .map(|(&b, &p)| {
            let s = p * b * budget;
            s * s
        })
        .collect();
    let point = SecondOrderPoint::new(mu, sigma2)?;
    Ok(SolverResult {
        objective: utility(&point)?,
        point,
        converged: ms.best.converged,
        iterations: ms.best.iterations,
        kkt_residual: ms.best.kkt_residual,
        boundary: false,
        best_start: ms.best_start,
        start_spread: ms.spread,
    })
}

/// Answer to an admission query.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "")]
pub struct AdmissionResult<S: Scalar> {
    pub feasible: bool,
    /// Point meeting every ceiling (inner bound) when feasible.
    pub witness: Option<SecondOrderPoint<S>>,
    /// Largest `sum sqrt(cap_i) / p_i - sqrt(system_variance)` found; for the
    /// fully scheduled case, the smallest ceiling slack `e_i - 1/p_i`.
    pub margin: S,
    pub boundary: bool,
    pub converged: bool,
    pub iterations: usize,
}

/// Decides whether AoI ceilings `e` (tightened by optional margins `delta`)
/// are simultaneously achievable, and returns a witness point if so.
pub fn check_admission<S: Scalar>(
    cfg: &NetworkConfig<S>,
    e: &[S],
    delta: Option<&[S]>,
    opts: &SolverOptions<S>,
) -> Result<AdmissionResult<S>> {
    check_lengths(cfg, "e", e)?;
    let n = cfg.n();
    let p = cfg.p();
    let e_eff: Vec<S> = match delta {
        Some(d) => {
            Error::check_len("delta", d.len(), n)?;
            e.iter().zip(d).map(|(&e, &d)| e - d).collect()
        }
        None => e.to_vec(),
    };
    let infeasible = |margin: S, boundary: bool| AdmissionResult {
        feasible: false,
        witness: None,
        margin,
        boundary,
        converged: true,
        iterations: 0,
    };

    if cfg.is_fully_scheduled() {
        let margin = (0..n)
            .map(|i| e_eff[i] - p[i].recip())
            .fold(S::infinity(), S::min);
        if margin >= S::zero() {
            return Ok(AdmissionResult {
                feasible: true,
                witness: Some(fully_scheduled_point(cfg)),
                margin,
                boundary: true,
                converged: true,
                iterations: 0,
            });
        }
        return Ok(infeasible(margin, true));
    }

    // AoI >= (1/mu + 1)/2 forces mu_i >= 1 / (2 e_i - 1).
    let two = S::lit(2.0);
    if e_eff.iter().any(|&e| !(two * e - S::one() > S::zero())) {
        return Ok(infeasible(S::neg_infinity(), false));
    }
    let floors: Vec<S> = e_eff.iter().map(|&e| (two * e - S::one()).recip()).collect();
    let m = S::from_usize(cfg.m()).unwrap();
    let (lo, hi) = fraction_bounds(cfg, &floors, opts.eps);
    if check_nonempty(&lo, &hi, m).is_err() {
        return Ok(infeasible(S::neg_infinity(), false));
    }
    let ms = multistart(
        opts,
        center_point(&lo, &hi, m),
        |rng| uniform_in_box(&lo, &hi, rng),
        |y| objectives::neg_admission_margin(y, p, &e_eff),
        slice_projector(lo.clone(), hi.clone(), m),
    );
    let y = &ms.best.x;
    let margin = -ms.best.value;
    let admit_tol = S::lit(1e-12).max(S::epsilon() * S::lit(16.0));
    if margin < -admit_tol {
        return Ok(AdmissionResult {
            converged: ms.best.converged,
            iterations: ms.best.iterations,
            ..infeasible(margin, false)
        });
    }

    // Split the variance budget in proportion to each device's cap.
    let caps: Vec<S> = (0..n)
        .map(|i| (y[i] * y[i] * (two * e_eff[i] - S::one()) - y[i] / p[i]).max(S::zero()).sqrt())
        .collect();
    let cap_total: S = caps.iter().copied().sum();
    let mu: Vec<S> = y.iter().zip(p).map(|(&y, &p)| y * p).collect();
    let budget = system_variance(&mu, p).max(S::zero()).sqrt();
    let sigma2 = (0..n)
        .map(|i| {
            let nu = if cap_total > S::zero() { caps[i] * budget / cap_total } else { S::zero() };
            let s = p[i] * nu;
            s * s
        })
        .collect();
    Ok(AdmissionResult {
        feasible: true,
        witness: Some(SecondOrderPoint::new(mu, sigma2)?),
        margin,
        boundary: false,
        converged: ms.best.converged,
        iterations: ms.best.iterations,
    })
}
