//! Domain records shared by the simulator, policies, region checks and solvers.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Slotted network: `n_devices` devices, `n_slots_per_round` transmissions per
/// slot, and a per-device success probability.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "")]
pub struct NetworkConfig<S: Scalar> {
    pub n_devices: usize,
    pub n_slots_per_round: usize,
    pub success_probs: Vec<S>,
}

impl<S: Scalar> NetworkConfig<S> {
    /// Builds and validates a configuration; `N` is taken from `success_probs`.
    pub fn new(n_slots_per_round: usize, success_probs: Vec<S>) -> Result<Self> {
        let cfg = Self {
            n_devices: success_probs.len(),
            n_slots_per_round,
            success_probs,
        };
        validate_config(&cfg)?;
        Ok(cfg)
    }

    /// `N` identical devices with success probability `p`.
    pub fn symmetric(n_devices: usize, n_slots_per_round: usize, p: S) -> Result<Self> {
        Self::new(n_slots_per_round, vec![p; n_devices])
    }

    #[inline]
    pub fn n(&self) -> usize {
        self.n_devices
    }

    #[inline]
    pub fn m(&self) -> usize {
        self.n_slots_per_round
    }

    #[inline]
    pub fn p(&self) -> &[S] {
        &self.success_probs
    }

    /// True when every device must be scheduled in every slot.
    pub fn is_fully_scheduled(&self) -> bool {
        self.n_slots_per_round == self.n_devices
    }

    pub fn from_toml_str(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| Error::Format(e.to_string()))?;
        validate_config(&cfg)?;
        Ok(cfg)
    }
}

/// Accepts iff `1 <= M <= N`, `N == len(p)` and every `p_i` lies in `(0, 1]`.
/// The error names the first violated invariant.
pub fn validate_config<S: Scalar>(cfg: &NetworkConfig<S>) -> Result<()> {
    if cfg.n_devices == 0 {
        return Err(Error::InvalidConfig("network needs at least one device".into()));
    }
    if cfg.success_probs.len() != cfg.n_devices {
        return Err(Error::InvalidConfig(format!(
            "n_devices = {} but {} success probabilities given",
            cfg.n_devices,
            cfg.success_probs.len()
        )));
    }
    if cfg.n_slots_per_round < 1 || cfg.n_slots_per_round > cfg.n_devices {
        return Err(Error::InvalidConfig(format!(
            "M = {} outside 1..={}",
            cfg.n_slots_per_round, cfg.n_devices
        )));
    }
    for (i, &p) in cfg.success_probs.iter().enumerate() {
        if !(p > S::zero() && p <= S::one()) {
            return Err(Error::InvalidConfig(format!("p[{i}] = {p} not in (0, 1]")));
        }
    }
    Ok(())
}

/// Per-device mean `mu_i` and temporal variance `sigma2_i` of the delivery
/// process.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "")]
pub struct SecondOrderPoint<S: Scalar> {
    pub mu: Vec<S>,
    pub sigma2: Vec<S>,
}

impl<S: Scalar> SecondOrderPoint<S> {
    pub fn new(mu: Vec<S>, sigma2: Vec<S>) -> Result<Self> {
        Error::check_len("sigma2", sigma2.len(), mu.len())?;
        for (i, (&m, &v)) in mu.iter().zip(&sigma2).enumerate() {
            if !(m >= S::zero()) || !(v >= S::zero()) {
                return Err(Error::Domain(format!(
                    "device {i}: mu = {m}, sigma2 = {v} must both be non-negative"
                )));
            }
        }
        Ok(Self { mu, sigma2 })
    }

    pub fn len(&self) -> usize {
        self.mu.len()
    }

    pub fn is_empty(&self) -> bool {
        self.mu.is_empty()
    }

    /// Long-run scheduling fractions `mu_i / p_i`.
    pub fn schedule_fractions(&self, p: &[S]) -> Vec<S> {
        self.mu.iter().zip(p).map(|(&m, &p)| m / p).collect()
    }
}

/// Throughput floors `m_i` and AoI ceilings `h_i`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "")]
pub struct TargetPairs<S: Scalar> {
    pub m: Vec<S>,
    pub h: Vec<S>,
}

impl<S: Scalar> TargetPairs<S> {
    /// Validates `m_i >= 0`. AoI ceilings below one are accepted here and
    /// simply reported infeasible by the region checks.
    pub fn new(m: Vec<S>, h: Vec<S>) -> Result<Self> {
        Error::check_len("h", h.len(), m.len())?;
        if let Some(i) = m.iter().position(|&x| !(x >= S::zero())) {
            return Err(Error::Domain(format!("m[{i}] = {} is negative", m[i])));
        }
        Ok(Self { m, h })
    }

    pub fn len(&self) -> usize {
        self.m.len()
    }

    pub fn is_empty(&self) -> bool {
        self.m.is_empty()
    }
}

/// Live state of one trace after `t` completed slots.
///
/// `aoi[i]` is the age the device will have during slot `t + 1`; with the
/// convention `a_i(1) = 1` every device starts as if it delivered in slot 0.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SimState {
    pub t: u64,
    pub aoi: Vec<u64>,
    pub delivered: Vec<u64>,
    /// Slot index of each device's most recent delivery (0 before any).
    pub last_delivery: Vec<u64>,
}

impl SimState {
    pub fn new(n_devices: usize) -> Self {
        Self {
            t: 0,
            aoi: vec![1; n_devices],
            delivered: vec![0; n_devices],
            last_delivery: vec![0; n_devices],
        }
    }

    pub fn n(&self) -> usize {
        self.aoi.len()
    }
}

/// Histogram of gaps between consecutive successful deliveries.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct GapHistogram {
    pub counts: BTreeMap<u64, u64>,
}

impl GapHistogram {
    pub fn record(&mut self, gap: u64) {
        *self.counts.entry(gap).or_insert(0) += 1;
    }

    pub fn merge(&mut self, other: &GapHistogram) {
        for (&g, &c) in &other.counts {
            *self.counts.entry(g).or_insert(0) += c;
        }
    }

    pub fn len(&self) -> u64 {
        self.counts.values().sum()
    }

    pub fn is_empty(&self) -> bool {
        self.counts.is_empty()
    }

    /// Sum of all recorded gaps.
    pub fn total(&self) -> u64 {
        self.counts.iter().map(|(&g, &c)| g * c).sum()
    }

    pub fn mean(&self) -> Option<f64> {
        let n = self.len();
        (n > 0).then(|| self.total() as f64 / n as f64)
    }

    pub fn max_gap(&self) -> Option<u64> {
        self.counts.keys().next_back().copied()
    }

    /// Expands the histogram into individual samples in ascending order.
    pub fn samples(&self) -> impl Iterator<Item = u64> + '_ {
        self.counts
            .iter()
            .flat_map(|(&g, &c)| std::iter::repeat_n(g, c as usize))
    }
}

/// Statistics of the projected process `X(t) = M t - sum_tau sum_i Z_i(tau) / p_i`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "")]
pub struct ProjectedStats<S: Scalar> {
    /// Sample mean of the one-step increments.
    pub increment_mean: S,
    /// Standard error of `increment_mean`.
    pub increment_se: S,
    /// Batch-means estimate of `Var(X(T)) / T` (increments have known mean 0).
    pub variance: Option<S>,
    /// Final value `X(T)`.
    pub terminal: S,
}

/// Empirical per-device statistics of a single trace.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "")]
pub struct TraceMetrics<S: Scalar> {
    pub horizon: u64,
    pub emp_throughput: Vec<S>,
    pub emp_aoi: Vec<S>,
    /// Batch-means temporal variance per device; absent when the trace is too
    /// short for ten blocks.
    pub emp_variance: Option<Vec<S>>,
    pub delivered: Vec<u64>,
    /// Number of slots each device was scheduled.
    pub scheduled: Vec<u64>,
    pub interdelivery: Vec<GapHistogram>,
    pub projected: ProjectedStats<S>,
}

impl<S: Scalar> TraceMetrics<S> {
    pub fn n(&self) -> usize {
        self.emp_throughput.len()
    }
}
