//! Scheduling policies. Each maps the current [`SimState`] to the set of `M`
//! devices that transmit in the next slot.

use std::cmp::Ordering;
use std::fmt;
use std::str::FromStr;

use rand::RngCore;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{NetworkConfig, SecondOrderPoint, SimState};
use crate::scalar::Scalar;

/// Smallest target variance used in a deficit denominator.
pub const SIGMA2_GUARD: f64 = 1e-12;

/// A scheduling rule. Implementations own their scratch state.
pub trait Policy<S: Scalar>: Send {
    /// Writes the devices scheduled in slot `state.t + 1` into `out`
    /// (ascending, exactly `M` entries).
    fn select(&mut self, state: &SimState, rng: &mut dyn RngCore, out: &mut Vec<usize>);

    fn kind(&self) -> PolicyKind;
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PolicyKind {
    Vwd,
    MaxWeight,
    Random,
}

impl PolicyKind {
    pub fn as_str(&self) -> &'static str {
        match self {
            PolicyKind::Vwd => "vwd",
            PolicyKind::MaxWeight => "maxweight",
            PolicyKind::Random => "random",
        }
    }
}

impl fmt::Display for PolicyKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for PolicyKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "vwd" => Ok(PolicyKind::Vwd),
            "maxweight" | "max-weight" | "max_weight" => Ok(PolicyKind::MaxWeight),
            "random" => Ok(PolicyKind::Random),
            _ => Err(Error::UnknownPolicy(s.to_string())),
        }
    }
}

/// Policy identifier plus its parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "policy", rename_all = "lowercase", bound = "")]
pub enum PolicySpec<S: Scalar> {
    /// Variance-weighted deficit scheduling toward a second-order target.
    Vwd { targets: SecondOrderPoint<S> },
    /// AoI/throughput-debt Max-Weight. `alpha` defaults to all ones and `v` to `N^2`.
    #[serde(rename = "maxweight")]
    MaxWeight {
        q: Vec<S>,
        alpha: Option<Vec<S>>,
        v: Option<S>,
    },
    /// Uniformly random `M`-subset each slot.
    Random,
}

impl<S: Scalar> PolicySpec<S> {
    pub fn kind(&self) -> PolicyKind {
        match self {
            PolicySpec::Vwd { .. } => PolicyKind::Vwd,
            PolicySpec::MaxWeight { .. } => PolicyKind::MaxWeight,
            PolicySpec::Random => PolicyKind::Random,
        }
    }

    pub fn max_weight(q: Vec<S>) -> Self {
        PolicySpec::MaxWeight { q, alpha: None, v: None }
    }

    /// Instantiates the policy for `cfg`, checking parameter dimensions.
    pub fn build(&self, cfg: &NetworkConfig<S>) -> Result<Box<dyn Policy<S>>> {
        let n = cfg.n();
        match self {
            PolicySpec::Vwd { targets } => {
                Error::check_len("VWD targets", targets.len(), n)?;
                Ok(Box::new(Vwd::new(targets.clone(), cfg.m())?))
            }
            PolicySpec::MaxWeight { q, alpha, v } => {
                Error::check_len("Max-Weight throughput requirements", q.len(), n)?;
                let alpha = alpha.clone().unwrap_or_else(|| vec![S::one(); n]);
                Error::check_len("Max-Weight alpha", alpha.len(), n)?;
                let v = v.unwrap_or_else(|| S::from_usize(n * n).unwrap());
                Ok(Box::new(MaxWeight {
                    state: MaxWeightState {
                        debts: vec![S::zero(); n],
                        alpha,
                        v_param: v,
                        throughput_reqs: q.clone(),
                    },
                    p: cfg.p().to_vec(),
                    m: cfg.m(),
                    weights: Vec::with_capacity(n),
                    order: Vec::with_capacity(n),
                }))
            }
            PolicySpec::Random => Ok(Box::new(RandomPolicy { n, m: cfg.m() })),
        }
    }
}

/// Indices of the `m` largest scores, ties broken toward the lowest index,
/// returned in ascending index order.
pub fn top_m<S: Scalar>(scores: &[S], m: usize, order: &mut Vec<usize>, out: &mut Vec<usize>) {
    let n = scores.len();
    out.clear();
    if m >= n {
        out.extend(0..n);
        return;
    }
    if m == 1 {
        let mut best = 0;
        for i in 1..n {
            if scores[i] > scores[best] {
                best = i;
            }
        }
        out.push(best);
        return;
    }
    order.clear();
    order.extend(0..n);
    let cmp = |&a: &usize, &b: &usize| {
        scores[b]
            .partial_cmp(&scores[a])
            .unwrap_or(Ordering::Equal)
            .then(a.cmp(&b))
    };
    order.select_nth_unstable_by(m - 1, cmp);
    out.extend_from_slice(&order[..m]);
    out.sort_unstable();
}

/// `d_i(t) = (t mu_i - delivered_i) / sqrt(sigma2_i)`.
///
/// With `guard = Some(g)`, variances below `g` are replaced by `g`; without a
/// guard a non-positive variance is an error.
pub fn compute_deficits<S: Scalar>(
    state: &SimState,
    targets: &SecondOrderPoint<S>,
    guard: Option<S>,
) -> Result<Vec<S>> {
    Error::check_len("targets", targets.len(), state.n())?;
    let mut out = Vec::with_capacity(state.n());
    let t = S::from_count(state.t);
    for i in 0..state.n() {
        let mut v = targets.sigma2[i];
        match guard {
            Some(g) => v = v.max(g),
            None if !(v > S::zero()) => {
                return Err(Error::Domain(format!(
                    "deficit of device {i} undefined for sigma2 = {v}"
                )))
            }
            None => {}
        }
        out.push((t * targets.mu[i] - S::from_count(state.delivered[i])) / v.sqrt());
    }
    Ok(out)
}

/// System-wide deficit: the `sqrt(sigma2_i) / p_i`-weighted mean of the
/// per-device deficits.
pub fn system_deficit<S: Scalar>(deficits: &[S], sigma2: &[S], p: &[S]) -> S {
    let mut num = S::zero();
    let mut den = S::zero();
    for i in 0..deficits.len() {
        let w = sigma2[i].max(S::zero()).sqrt() / p[i];
        num = num + w * deficits[i];
        den = den + w;
    }
    num / den
}

/// Devices scheduled by VWD given their deficits.
pub fn vwd_select<S: Scalar>(deficits: &[S], m: usize) -> Vec<usize> {
    let mut out = Vec::with_capacity(m);
    top_m(deficits, m, &mut Vec::new(), &mut out);
    out
}

/// Per-trace VWD scratch state.
#[derive(Debug, Clone, PartialEq)]
pub struct VwdState<S: Scalar> {
    pub deficits: Vec<S>,
    pub targets: SecondOrderPoint<S>,
}

struct Vwd<S: Scalar> {
    state: VwdState<S>,
    inv_std: Vec<S>,
    m: usize,
    order: Vec<usize>,
}

impl<S: Scalar> Vwd<S> {
    fn new(targets: SecondOrderPoint<S>, m: usize) -> Result<Self> {
        let guard = S::lit(SIGMA2_GUARD);
        let mut inv_std = Vec::with_capacity(targets.len());
        for (i, &v) in targets.sigma2.iter().enumerate() {
            if !(v >= S::zero()) {
                return Err(Error::Domain(format!("VWD target sigma2[{i}] = {v} is negative")));
            }
            inv_std.push(v.max(guard).sqrt().recip());
        }
        Ok(Self {
            state: VwdState {
                deficits: vec![S::zero(); targets.len()],
                targets,
            },
            inv_std,
            m,
            order: Vec::new(),
        })
    }
}

impl<S: Scalar> Policy<S> for Vwd<S> {
    fn select(&mut self, state: &SimState, _rng: &mut dyn RngCore, out: &mut Vec<usize>) {
        let t = S::from_count(state.t);
        for i in 0..self.inv_std.len() {
            self.state.deficits[i] = (t * self.state.targets.mu[i]
                - S::from_count(state.delivered[i]))
                * self.inv_std[i];
        }
        top_m(&self.state.deficits, self.m, &mut self.order, out);
    }

    fn kind(&self) -> PolicyKind {
        PolicyKind::Vwd
    }
}

/// `W = (alpha p / 2) a (a + 2) + V p max(x, 0)`.
pub fn maxweight_weight<S: Scalar>(aoi: S, debt: S, alpha: S, p: S, v: S) -> S {
    let half = S::lit(0.5);
    alpha * p * half * aoi * (aoi + S::lit(2.0)) + v * p * debt.max(S::zero())
}

/// Devices scheduled by Max-Weight given the weights.
pub fn maxweight_select<S: Scalar>(weights: &[S], m: usize) -> Vec<usize> {
    let mut out = Vec::with_capacity(m);
    top_m(weights, m, &mut Vec::new(), &mut out);
    out
}

/// Per-trace Max-Weight scratch state; `debts[i] = t q_i - delivered_i`.
#[derive(Debug, Clone, PartialEq)]
pub struct MaxWeightState<S: Scalar> {
    pub debts: Vec<S>,
    pub alpha: Vec<S>,
    pub v_param: S,
    pub throughput_reqs: Vec<S>,
}

struct MaxWeight<S: Scalar> {
    state: MaxWeightState<S>,
    p: Vec<S>,
    m: usize,
    weights: Vec<S>,
    order: Vec<usize>,
}

impl<S: Scalar> Policy<S> for MaxWeight<S> {
    fn select(&mut self, state: &SimState, _rng: &mut dyn RngCore, out: &mut Vec<usize>) {
        let t = S::from_count(state.t);
        let mw = &mut self.state;
        self.weights.clear();
        for i in 0..self.p.len() {
            mw.debts[i] = t * mw.throughput_reqs[i] - S::from_count(state.delivered[i]);
            self.weights.push(maxweight_weight(
                S::from_count(state.aoi[i]),
                mw.debts[i],
                mw.alpha[i],
                self.p[i],
                mw.v_param,
            ));
        }
        top_m(&self.weights, self.m, &mut self.order, out);
    }

    fn kind(&self) -> PolicyKind {
        PolicyKind::MaxWeight
    }
}

/// Uniformly distributed `m`-subset of `0..n`, ascending.
pub fn random_select<R: RngCore + ?Sized>(n: usize, m: usize, rng: &mut R) -> Vec<usize> {
    let mut out = Vec::with_capacity(m);
    random_select_into(n, m, rng, &mut out);
    out
}

fn random_select_into<R: RngCore + ?Sized>(n: usize, m: usize, rng: &mut R, out: &mut Vec<usize>) {
    out.clear();
    if m >= n {
        out.extend(0..n);
        return;
    }
    out.extend(rand::seq::index::sample(rng, n, m).iter());
    out.sort_unstable();
}

struct RandomPolicy {
    n: usize,
    m: usize,
}

impl<S: Scalar> Policy<S> for RandomPolicy {
    fn select(&mut self, _state: &SimState, rng: &mut dyn RngCore, out: &mut Vec<usize>) {
        random_select_into(self.n, self.m, rng, out);
    }

    fn kind(&self) -> PolicyKind {
        PolicyKind::Random
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn state(t: u64, delivered: Vec<u64>) -> SimState {
        let mut s = SimState::new(delivered.len());
        s.t = t;
        s.delivered = delivered;
        s
    }

    #[test]
    fn deficit_examples() {
        let targets = SecondOrderPoint::new(vec![0.5], vec![0.25]).unwrap();
        let d = |t, k| compute_deficits(&state(t, vec![k]), &targets, None).unwrap()[0];
        assert_eq!(d(2, 1), 0.0);
        assert_eq!(d(4, 1), 2.0);
        assert_eq!(d(4, 3), -2.0);
    }

    #[test]
    fn deficit_guard() {
        let targets = SecondOrderPoint::new(vec![0.5], vec![0.0]).unwrap();
        assert!(compute_deficits(&state(4, vec![1]), &targets, None).is_err());
        let d = compute_deficits(&state(4, vec![1]), &targets, Some(SIGMA2_GUARD)).unwrap();
        assert!((d[0] - 1.0 / 1e-6).abs() < 1e-3);
    }

    #[test]
    fn vwd_select_examples() {
        assert_eq!(vwd_select(&[3.0, 1.0, 2.0], 1), vec![0]);
        assert_eq!(vwd_select(&[2.0, 2.0, 1.0], 1), vec![0]);
        assert_eq!(vwd_select(&[-5.0, 7.0, 0.0], 3), vec![0, 1, 2]);
        assert_eq!(vwd_select(&[1.0, 3.0, 3.0, 2.0], 2), vec![1, 2]);
        assert_eq!(vwd_select(&[1.0, 3.0, 2.0, 3.0, 2.0], 3), vec![1, 2, 3]);
    }

    #[test]
    fn maxweight_examples() {
        assert!((maxweight_weight(3.0_f64, -1.0, 1.0, 0.8, 7.0) - 6.0).abs() < 1e-12);
        assert!((maxweight_weight(3.0_f64, 0.5, 1.0, 0.8, 100.0) - 46.0).abs() < 1e-12);
        assert_eq!(maxweight_weight(0.0, -2.0, 1.0, 0.8, 100.0), 0.0);
        assert_eq!(maxweight_weight(0.0, 0.0, 1.0, 0.8, 100.0), 0.0);

        assert_eq!(maxweight_select(&[6.0, 46.0, 0.0], 1), vec![1]);
        assert_eq!(maxweight_select(&[6.0, 46.0, 0.0], 2), vec![0, 1]);
        assert_eq!(maxweight_select(&[4.0, 4.0, 4.0], 1), vec![0]);
    }

    #[test]
    fn maxweight_policy_uses_default_v() {
        let cfg = NetworkConfig::new(1, vec![0.8, 0.8, 0.8]).unwrap();
        let mut pol = PolicySpec::max_weight(vec![0.1, 0.5, 0.1]).build(&cfg).unwrap();
        let mut s = SimState::new(3);
        s.t = 10;
        s.aoi = vec![5, 1, 1];
        s.delivered = vec![0, 4, 1];
        let mut out = Vec::new();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        pol.select(&s, &mut rng, &mut out);
        // Weights: 0.4*35 + 9*0.8*1 = 21.2, 0.4*3 + 9*0.8*1 = 8.4, 1.2.
        assert_eq!(out, vec![0]);
        assert_eq!(pol.kind(), PolicyKind::MaxWeight);
    }

    #[test]
    fn random_select_full_set() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        assert_eq!(random_select(4, 4, &mut rng), vec![0, 1, 2, 3]);
    }

    #[test]
    fn random_select_inclusion_rates() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let draws = 100_000;
        let mut counts = [0usize; 2];
        for _ in 0..draws {
            for i in random_select(2, 1, &mut rng) {
                counts[i] += 1;
            }
        }
        for c in counts {
            assert!((c as f64 / draws as f64 - 0.5).abs() < 0.01);
        }
        let mut counts = [0usize; 5];
        for _ in 0..draws {
            let s = random_select(5, 2, &mut rng);
            assert_eq!(s.len(), 2);
            assert!(s[0] < s[1]);
            for i in s {
                counts[i] += 1;
            }
        }
        for c in counts {
            assert!((c as f64 / draws as f64 - 0.4).abs() < 0.01);
        }
    }

    #[test]
    fn policy_kind_parsing() {
        assert_eq!("vwd".parse::<PolicyKind>().unwrap(), PolicyKind::Vwd);
        assert_eq!("MaxWeight".parse::<PolicyKind>().unwrap(), PolicyKind::MaxWeight);
        assert_eq!("random".parse::<PolicyKind>().unwrap(), PolicyKind::Random);
        assert!(matches!("edf".parse::<PolicyKind>(), Err(Error::UnknownPolicy(_))));
    }

    #[test]
    fn build_rejects_wrong_lengths() {
        let cfg = NetworkConfig::new(1, vec![0.5, 0.5]).unwrap();
        let bad = PolicySpec::Vwd {
            targets: SecondOrderPoint::new(vec![0.25], vec![0.1]).unwrap(),
        };
        assert!(bad.build(&cfg).is_err());
        assert!(PolicySpec::max_weight(vec![0.1; 3]).build(&cfg).is_err());
    }

    #[test]
    fn weighted_deficits_center_on_system_deficit() {
        let targets = SecondOrderPoint::new(vec![0.1_f64, 0.2, 0.3], vec![0.02, 0.05, 0.01]).unwrap();
        let p = [0.3, 0.6, 0.9];
        let s = state(137, vec![10, 31, 40]);
        let d = compute_deficits(&s, &targets, None).unwrap();
        let big_d = system_deficit(&d, &targets.sigma2, &p);
        let residual: f64 = (0..3)
            .map(|i| targets.sigma2[i].sqrt() / p[i] * (d[i] - big_d))
            .sum();
        assert!(residual.abs() < 1e-9);
    }
}
