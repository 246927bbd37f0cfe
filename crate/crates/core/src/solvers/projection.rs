//! Euclidean projections onto the feasible sets used by the solvers.

use crate::error::{Error, Result};
use crate::model::NetworkConfig;
use crate::scalar::Scalar;

/// Projects `z` onto `{x : sum x = total, lo <= x <= hi}` by bisection on the
/// multiplier of the sum constraint.
pub fn project_bounded_slice<S: Scalar>(z: &[S], lo: &[S], hi: &[S], total: S) -> Result<Vec<S>> {
    let n = z.len();
    Error::check_len("lower bounds", lo.len(), n)?;
    Error::check_len("upper bounds", hi.len(), n)?;
    let slack = S::lit(1e-12).max(S::epsilon() * S::lit(16.0)) * total.abs().max(S::one());
    for i in 0..n {
        if lo[i] > hi[i] {
            return Err(Error::Infeasible(format!(
                "coordinate {i}: lower bound {} exceeds upper bound {}",
                lo[i], hi[i]
            )));
        }
    }
    let sum_lo: S = lo.iter().copied().sum();
    let sum_hi: S = hi.iter().copied().sum();
    if sum_lo > total + slack || sum_hi < total - slack {
        return Err(Error::Infeasible(format!(
            "bounds allow sums in [{sum_lo}, {sum_hi}], need {total}"
        )));
    }

    let clamp = |tau: S, out: &mut Vec<S>| {
        out.clear();
        out.extend((0..n).map(|i| (z[i] - tau).max(lo[i]).min(hi[i])));
    };
    let sum_at = |tau: S| -> S { (0..n).map(|i| (z[i] - tau).max(lo[i]).min(hi[i])).sum() };

    let mut a = (0..n).map(|i| z[i] - hi[i]).fold(S::infinity(), S::min);
    let mut b = (0..n).map(|i| z[i] - lo[i]).fold(S::neg_infinity(), S::max);
    let two = S::lit(2.0);
    for _ in 0..200 {
        let mid = (a + b) / two;
        if mid <= a || mid >= b {
            break;
        }
        if sum_at(mid) > total {
            a = mid;
        } else {
            b = mid;
        }
    }
    // Solve for the shift exactly on the active set found by bisection.
    let tau = (a + b) / two;
    let mut fixed = S::zero();
    let mut free_sum = S::zero();
    let mut n_free = 0usize;
    for i in 0..n {
        let v = z[i] - tau;
        if v <= lo[i] {
            fixed = fixed + lo[i];
        } else if v >= hi[i] {
            fixed = fixed + hi[i];
        } else {
            free_sum = free_sum + z[i];
            n_free += 1;
        }
    }
    let tau = if n_free > 0 {
        (free_sum - (total - fixed)) / S::from_usize(n_free).unwrap()
    } else {
        tau
    };
    let mut x = Vec::with_capacity(n);
    clamp(tau, &mut x);

    // Spread the rounding residual over coordinates strictly inside their box.
    for _ in 0..4 {
        let residual = total - x.iter().copied().sum::<S>();
        if residual == S::zero() {
            break;
        }
        let free: Vec<usize> = (0..n)
            .filter(|&i| if residual > S::zero() { x[i] < hi[i] } else { x[i] > lo[i] })
            .collect();
        if free.is_empty() {
            break;
        }
        let share = residual / S::from_usize(free.len()).unwrap();
        for i in free {
            x[i] = (x[i] + share).max(lo[i]).min(hi[i]);
        }
    }
    Ok(x)
}

/// Projection onto the unit simplex.
pub fn project_simplex<S: Scalar>(z: &[S]) -> Vec<S> {
    let n = z.len();
    project_bounded_slice(z, &vec![S::zero(); n], &vec![S::one(); n], S::one())
        .expect("unit simplex is nonempty")
}

/// Bounds on the scheduling fractions `y_i = mu_i / p_i` given throughput
/// floors `lower` and strictness `eps`.
pub(crate) fn fraction_bounds<S: Scalar>(cfg: &NetworkConfig<S>, lower: &[S], eps: S) -> (Vec<S>, Vec<S>) {
    let lo = lower
        .iter()
        .zip(cfg.p())
        .map(|(&l, &p)| (l / p).max(eps))
        .collect();
    let hi = vec![S::one() - eps; cfg.n()];
    (lo, hi)
}

/// Euclidean projection, in the coordinates `y_i = mu_i / p_i`, of `mu_raw`
/// onto `{mu : sum mu_i / p_i = M, max(lower_i, eps p_i) <= mu_i <= (1 - eps) p_i}`.
pub fn project_mu<S: Scalar>(mu_raw: &[S], cfg: &NetworkConfig<S>, lower: &[S], eps: S) -> Result<Vec<S>> {
    Error::check_len("mu", mu_raw.len(), cfg.n())?;
    Error::check_len("lower", lower.len(), cfg.n())?;
    let p = cfg.p();
    let z: Vec<S> = mu_raw.iter().zip(p).map(|(&m, &p)| m / p).collect();
    let (lo, hi) = fraction_bounds(cfg, lower, eps);
    let y = project_bounded_slice(&z, &lo, &hi, S::from_usize(cfg.m()).unwrap())?;
    Ok(y.iter().zip(p).map(|(&y, &p)| y * p).collect())
}
