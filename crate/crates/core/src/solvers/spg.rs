//! Nonmonotone spectral projected gradient.

use crate::scalar::Scalar;

#[derive(Debug, Clone)]
pub(crate) struct SpgOutcome<S: Scalar> {
    pub x: Vec<S>,
    pub value: S,
    pub iterations: usize,
    pub kkt_residual: S,
    pub converged: bool,
}

#[derive(Debug, Clone, Copy)]
pub(crate) struct SpgSettings<S: Scalar> {
    pub tol: S,
    pub max_iter: usize,
}

const HISTORY: usize = 10;

fn dot<S: Scalar>(a: &[S], b: &[S]) -> S {
    a.iter().zip(b).map(|(&x, &y)| x * y).sum()
}

fn sup_norm<S: Scalar>(a: &[S]) -> S {
    a.iter().fold(S::zero(), |m, &v| m.max(v.abs()))
}

/// Minimises `objective` over the closed convex set described by `project`,
/// starting from `x0`. Convergence is declared when the unit-step projected
/// gradient `|P(x - g) - x|_inf` drops below `settings.tol`.
pub(crate) fn minimize<S, F, P>(x0: &[S], objective: F, project: P, settings: SpgSettings<S>) -> SpgOutcome<S>
where
    S: Scalar,
    F: Fn(&[S]) -> (S, Vec<S>),
    P: Fn(&[S]) -> Vec<S>,
{
    let alpha_min = S::lit(1e-12);
    let alpha_max = S::lit(1e12);
    let gamma = S::lit(1e-4);
    let half = S::lit(0.5);

    let mut x = project(x0);
    let (mut f, mut g) = objective(&x);
    let mut history = vec![f; 1];

    let residual = |x: &[S], g: &[S]| -> S {
        let trial: Vec<S> = x.iter().zip(g).map(|(&xi, &gi)| xi - gi).collect();
        let p = project(&trial);
        let d: Vec<S> = p.iter().zip(x).map(|(&a, &b)| a - b).collect();
        sup_norm(&d)
    };

    let mut kkt = residual(&x, &g);
    let mut alpha = if kkt > S::zero() { (S::one() / kkt).max(alpha_min).min(alpha_max) } else { S::one() };
    let mut iterations = 0;

    while iterations < settings.max_iter {
        if kkt <= settings.tol {
            return SpgOutcome { x, value: f, iterations, kkt_residual: kkt, converged: true };
        }
        iterations += 1;

        let trial: Vec<S> = x.iter().zip(&g).map(|(&xi, &gi)| xi - alpha * gi).collect();
        let d: Vec<S> = project(&trial).iter().zip(&x).map(|(&a, &b)| a - b).collect();
        let slope = dot(&g, &d);
        let f_ref = history.iter().copied().fold(S::neg_infinity(), S::max);

        let mut lambda = S::one();
        let (x_new, f_new, g_new) = loop {
            let cand: Vec<S> = x.iter().zip(&d).map(|(&xi, &di)| xi + lambda * di).collect();
            let (fc, gc) = objective(&cand);
            if fc.is_finite() && fc <= f_ref + gamma * lambda * slope {
                break (cand, fc, gc);
            }
            lambda = lambda * half;
            if lambda < S::lit(1e-30) {
                // No acceptable step along d: the iterate is stationary to
                // working precision.
                return SpgOutcome { x, value: f, iterations, kkt_residual: kkt, converged: kkt <= settings.tol };
            }
        };

        let s: Vec<S> = x_new.iter().zip(&x).map(|(&a, &b)| a - b).collect();
        let y: Vec<S> = g_new.iter().zip(&g).map(|(&a, &b)| a - b).collect();
        let sty = dot(&s, &y);
        alpha = if sty > S::zero() {
            (dot(&s, &s) / sty).max(alpha_min).min(alpha_max)
        } else {
            alpha_max
        };

        x = x_new;
        f = f_new;
        g = g_new;
        if history.len() == HISTORY {
            history.remove(0);
        }
        history.push(f);
        kkt = residual(&x, &g);
    }
    SpgOutcome { x, value: f, iterations, kkt_residual: kkt, converged: kkt <= settings.tol }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::solvers::projection::project_bounded_slice;

    #[test]
    fn quadratic_on_simplex_slice() {
        // min sum (x_i - c_i)^2 / w_i over sum x = 1, 0 <= x <= 1.
        let c = [0.9, 0.6, -0.2];
        let w = [1.0, 2.0, 0.5];
        let obj = |x: &[f64]| {
            let v = (0..3).map(|i| (x[i] - c[i]).powi(2) / w[i]).sum();
            let g = (0..3).map(|i| 2.0 * (x[i] - c[i]) / w[i]).collect();
            (v, g)
        };
        let proj = |z: &[f64]| project_bounded_slice(z, &[0.0; 3], &[1.0; 3], 1.0).unwrap();
        let out = minimize(&[1.0 / 3.0; 3], obj, proj, SpgSettings { tol: 1e-10, max_iter: 10_000 });
        assert!(out.converged);
        // KKT with x3 = 0 active: 2(x1 - 0.9) = x2 - 0.6 = lambda, x1 + x2 = 1
        // gives lambda = -1/3.
        assert!((out.x[0] - 0.9 + 1.0 / 6.0).abs() < 1e-8, "{:?}", out.x);
        assert!((out.x[1] - 0.6 + 1.0 / 3.0).abs() < 1e-8);
        assert!(out.x[2].abs() < 1e-8);
    }
}
