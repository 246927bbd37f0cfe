//! Brute-force references shared by the integration tests. Everything here is
//! written from the model definitions and does not call into the solvers.

#![allow(dead_code)]

/// Average AoI of a delivery process with mean `mu` and temporal variance `sigma2`.
pub fn aoi(mu: f64, sigma2: f64) -> f64 {
    0.5 * (sigma2 / (mu * mu) + 1.0 / mu) + 0.5
}

/// `sum_i (mu_i / p_i)(1 / p_i - 1)`.
pub fn budget(y: &[f64], p: &[f64]) -> f64 {
    y.iter().zip(p).map(|(y, p)| y * (1.0 / p - 1.0)).sum()
}

/// Variances for fractions `y` when the scaled standard deviations are split
/// as `share` of the budget.
pub fn variances(y: &[f64], p: &[f64], share: &[f64]) -> Vec<f64> {
    let s = budget(y, p).max(0.0).sqrt();
    (0..y.len()).map(|i| (p[i] * share[i] * s).powi(2)).collect()
}

/// Best split of the variance budget for total AoI (Cauchy-Schwarz), as
/// shares of the budget.
pub fn aoi_optimal_share(y: &[f64]) -> Vec<f64> {
    let total: f64 = y.iter().map(|v| v * v).sum();
    y.iter().map(|v| v * v / total).collect()
}

pub fn total_aoi(y: &[f64], p: &[f64]) -> f64 {
    let s2 = variances(y, p, &aoi_optimal_share(y));
    (0..y.len()).map(|i| aoi(p[i] * y[i], s2[i])).sum()
}

pub fn total_cost(y: &[f64], p: &[f64], q: &[f64]) -> f64 {
    let pen: f64 = (0..y.len()).map(|i| (q[i] - p[i] * y[i]).max(0.0).powi(2)).sum();
    pen + total_aoi(y, p)
}

pub fn utility(y: &[f64], share: &[f64], p: &[f64]) -> f64 {
    let s2 = variances(y, p, share);
    (0..y.len()).map(|i| (p[i] * y[i]).ln() - aoi(p[i] * y[i], s2[i]).ln()).sum()
}

/// Largest `sum_i sqrt(cap_i) / p_i - sqrt(budget)` where `cap_i` is the
/// variance that keeps device `i` at its ceiling; `-inf` where some device is
/// idle or some cap is negative.
pub fn admission_margin(y: &[f64], p: &[f64], e: &[f64]) -> f64 {
    let mut acc = 0.0;
    for i in 0..y.len() {
        let mu = p[i] * y[i];
        let cap = mu * mu * (2.0 * e[i] - 1.0 - 1.0 / mu);
        if mu <= 0.0 || cap < 0.0 {
            return f64::NEG_INFINITY;
        }
        acc += cap.sqrt() / p[i];
    }
    acc - budget(y, p).max(0.0).sqrt()
}

/// Points of `{y : sum y = total, lo <= y <= hi}` on a lattice of spacing
/// `step` anchored at `lo` (last coordinate solved from the sum), for `N <= 3`.
pub fn slice_grid(lo: &[f64], hi: &[f64], total: f64, step: f64, mut visit: impl FnMut(&[f64])) {
    let n = lo.len();
    let fits = |v: f64, i: usize| v >= lo[i] - 1e-12 && v <= hi[i] + 1e-12;
    match n {
        1 => {
            if fits(total, 0) {
                visit(&[total]);
            }
        }
        2 => {
            let mut y0 = lo[0];
            while y0 <= hi[0] + 1e-12 {
                let y1 = total - y0;
                if fits(y1, 1) {
                    visit(&[y0, y1]);
                }
                y0 += step;
            }
        }
        3 => {
            let mut y0 = lo[0];
            while y0 <= hi[0] + 1e-12 {
                let mut y1 = lo[1];
                while y1 <= hi[1] + 1e-12 {
                    let y2 = total - y0 - y1;
                    if fits(y2, 2) {
                        visit(&[y0, y1, y2]);
                    }
                    y1 += step;
                }
                y0 += step;
            }
        }
        _ => panic!("grid search only for N <= 3"),
    }
}

/// Minimum of `f` over the slice lattice, with its argmin.
pub fn grid_min(lo: &[f64], hi: &[f64], total: f64, step: f64, f: impl Fn(&[f64]) -> f64) -> (f64, Vec<f64>) {
    let mut best = (f64::INFINITY, Vec::new());
    slice_grid(lo, hi, total, step, |y| {
        let v = f(y);
        if v < best.0 {
            best = (v, y.to_vec());
        }
    });
    best
}

/// Unit simplex lattice of spacing `step` in dimension `n <= 3`.
pub fn simplex_grid(n: usize, step: f64, visit: impl FnMut(&[f64])) {
    slice_grid(&vec![0.0; n], &vec![1.0; n], 1.0, step, visit);
}

/// Maximum utility over fractions and variance shares: exhaustive lattice of
/// spacing `coarse`, then a lattice of spacing `fine` within `coarse` of the
/// coarse winner.
pub fn prop_fair_max(p: &[f64], m: f64, eps: f64, coarse: f64, fine: f64) -> f64 {
    let n = p.len();
    let lo = vec![eps; n];
    let hi = vec![1.0 - eps; n];
    let search = |lo_y: &[f64], hi_y: &[f64], lo_b: &[f64], hi_b: &[f64], step: f64| {
        let mut best = (f64::NEG_INFINITY, Vec::new(), Vec::new());
        slice_grid(lo_y, hi_y, m, step, |y| {
            slice_grid(lo_b, hi_b, 1.0, step, |b| {
                let u = utility(y, b, p);
                if u > best.0 {
                    best = (u, y.to_vec(), b.to_vec());
                }
            });
        });
        best
    };
    let (u, y, b) = search(&lo, &hi, &vec![0.0; n], &vec![1.0; n], coarse);
    if n == 1 {
        return u;
    }
    let around = |c: &[f64], l: &[f64], h: &[f64]| -> (Vec<f64>, Vec<f64>) {
        (
            c.iter().zip(l).map(|(c, l)| (c - coarse).max(*l)).collect(),
            c.iter().zip(h).map(|(c, h)| (c + coarse).min(*h)).collect(),
        )
    };
    let (ly, hy) = around(&y, &lo, &hi);
    let (lb, hb) = around(&b, &vec![0.0; n], &vec![1.0; n]);
    search(&ly, &hy, &lb, &hb, fine).0.max(u)
}
