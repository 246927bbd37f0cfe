//! Scenario builders for the four problem families and sweep runners over
//! them.

mod sweep;

pub use sweep::{
    admission_boundary, admission_interior, run_sweep, write_sweep_csv, DeviceStats, SweepConfig, SweepFamily, SweepReport, SweepRow,
};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{NetworkConfig, SecondOrderPoint, TraceMetrics};
use crate::policies::{PolicyKind, PolicySpec};
use crate::solvers::{
    check_admission, solve_cost_soft, solve_min_aoi_hard, solve_prop_fair, AdmissionResult, Penalty, SolverOptions,
    SolverResult,
};

pub const SCHEMA_VERSION: u32 = 1;
pub const DEFAULT_TRACES: usize = 50;
pub const DEFAULT_LAMBDA: f64 = 0.9;

/// Desk-scale horizon, `10^5 N` slots.
pub fn default_horizon(n_devices: usize) -> u64 {
    100_000 * n_devices as u64
}

/// Problem attached to a scenario.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Problem {
    /// Minimum total AoI with throughput floors `q`.
    MinAoiHard { q: Vec<f64> },
    /// Total AoI plus `penalty(q_i - mu_i)`.
    CostSoft {
        q: Vec<f64>,
        #[serde(default)]
        penalty: Penalty<f64>,
    },
    /// Proportional fairness `sum ln mu_i - ln AoI_i`.
    PropFair,
    /// AoI ceilings `e`.
    Admission { e: Vec<f64> },
}

impl Problem {
    pub fn name(&self) -> &'static str {
        match self {
            Problem::MinAoiHard { .. } => "min_aoi_hard",
            Problem::CostSoft { .. } => "cost_soft",
            Problem::PropFair => "prop_fair",
            Problem::Admission { .. } => "admission",
        }
    }

    /// Throughput requirements, if the problem has any.
    pub fn requirements(&self) -> Option<&[f64]> {
        match self {
            Problem::MinAoiHard { q } | Problem::CostSoft { q, .. } => Some(q),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scenario {
    pub schema_version: u32,
    pub horizon: u64,
    pub n_traces: usize,
    pub base_seed: u64,
    pub network: NetworkConfig<f64>,
    pub problem: Problem,
}

/// Solved benchmark for a scenario.
#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Solution {
    Optimum(SolverResult<f64>),
    Admission(AdmissionResult<f64>),
}

impl Solution {
    /// Theoretical objective in the same sense as
    /// [`Scenario::simulated_objective`].
    pub fn objective(&self) -> f64 {
        match self {
            Solution::Optimum(r) => r.objective,
            Solution::Admission(r) => -r.margin,
        }
    }

    /// Target point for VWD.
    pub fn targets(&self) -> Option<&SecondOrderPoint<f64>> {
        match self {
            Solution::Optimum(r) => Some(&r.point),
            Solution::Admission(r) => r.witness.as_ref(),
        }
    }

    pub fn boundary(&self) -> bool {
        match self {
            Solution::Optimum(r) => r.boundary,
            Solution::Admission(r) => r.boundary,
        }
    }
}

impl Scenario {
    fn with_problem(network: NetworkConfig<f64>, problem: Problem) -> Result<Self> {
        let s = Self {
            schema_version: SCHEMA_VERSION,
            horizon: default_horizon(network.n()),
            n_traces: DEFAULT_TRACES,
            base_seed: 0,
            network,
            problem,
        };
        s.validate()?;
        Ok(s)
    }

    pub fn validate(&self) -> Result<()> {
        if self.schema_version != SCHEMA_VERSION {
            return Err(Error::Format(format!(
                "unsupported schema_version {} (expected {SCHEMA_VERSION})",
                self.schema_version
            )));
        }
        crate::model::validate_config(&self.network)?;
        let n = self.network.n();
        match &self.problem {
            Problem::MinAoiHard { q } | Problem::CostSoft { q, .. } => {
                Error::check_len("q", q.len(), n)?;
                if q.iter().any(|&v| !(v >= 0.0)) {
                    return Err(Error::InvalidConfig("throughput requirements must be nonnegative".into()));
                }
            }
            Problem::Admission { e } => {
                Error::check_len("e", e.len(), n)?;
                if e.iter().any(|&v| !(v >= 1.0)) {
                    return Err(Error::InvalidConfig("AoI ceilings must be at least 1".into()));
                }
            }
            Problem::PropFair => {}
        }
        if let Problem::CostSoft { penalty, .. } = &self.problem {
            penalty.validate()?;
        }
        if self.horizon == 0 || self.n_traces == 0 {
            return Err(Error::InvalidConfig("horizon and n_traces must be positive".into()));
        }
        Ok(())
    }

    pub fn from_toml_str(text: &str) -> Result<Self> {
        let s: Self = toml::from_str(text).map_err(|e| Error::Format(e.to_string()))?;
        s.validate()?;
        Ok(s)
    }

    pub fn to_toml_string(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Format(e.to_string()))
    }

    /// Runs the matching solver.
    pub fn solve(&self, opts: &SolverOptions<f64>) -> Result<Solution> {
        let cfg = &self.network;
        Ok(match &self.problem {
            Problem::MinAoiHard { q } => Solution::Optimum(solve_min_aoi_hard(cfg, q, opts)?),
            Problem::CostSoft { q, penalty } => Solution::Optimum(solve_cost_soft(cfg, q, penalty, opts)?),
            Problem::PropFair => Solution::Optimum(solve_prop_fair(cfg, opts)?),
            Problem::Admission { e } => Solution::Admission(check_admission(cfg, e, None, opts)?),
        })
    }

    /// Policy parameters for `kind`. Max-Weight uses the problem's
    /// requirements, or the target throughputs when the problem has none.
    pub fn policy(&self, kind: PolicyKind, targets: Option<&SecondOrderPoint<f64>>) -> Result<PolicySpec<f64>> {
        let missing = || Error::Infeasible(format!("no target point for {kind} in a {} scenario", self.problem.name()));
        Ok(match kind {
            PolicyKind::Vwd => PolicySpec::Vwd {
                targets: targets.ok_or_else(missing)?.clone(),
            },
            PolicyKind::MaxWeight => {
                let q = match self.problem.requirements() {
                    Some(q) => q.to_vec(),
                    None => targets.ok_or_else(missing)?.mu.clone(),
                };
                PolicySpec::max_weight(q)
            }
            PolicyKind::Random => PolicySpec::Random,
        })
    }

    /// Problem objective evaluated on one simulated trace: total AoI, total
    /// cost, utility, or the worst ceiling excess `max_i (AoI_i - e_i)`.
    pub fn simulated_objective(&self, m: &TraceMetrics<f64>) -> f64 {
        let n = m.n();
        match &self.problem {
            Problem::MinAoiHard { .. } => m.emp_aoi.iter().sum(),
            Problem::CostSoft { q, penalty } => (0..n)
                .map(|i| penalty.value(q[i] - m.emp_throughput[i]) + m.emp_aoi[i])
                .sum(),
            Problem::PropFair => (0..n).map(|i| m.emp_throughput[i].ln() - m.emp_aoi[i].ln()).sum(),
            Problem::Admission { e } => (0..n).map(|i| m.emp_aoi[i] - e[i]).fold(f64::NEG_INFINITY, f64::max),
        }
    }
}

/// Devices with `p_i = i / N`, `q_i = lambda p_i / N`.
pub fn build_example1(n: usize, m: usize, lambda: f64) -> Result<Scenario> {
    check_lambda(lambda)?;
    let network = NetworkConfig::new(m, linear_probs(n))?;
    let q = network.p().iter().map(|&p| lambda * p / n as f64).collect();
    Scenario::with_problem(network, Problem::MinAoiHard { q })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Example2Variant {
    /// `p_i = 0.8`, two requirement tiers scaled by `lambda`.
    LambdaSweep,
    /// `p_i = i / N`, `q_i = lambda p_i / N`.
    RatioSweep,
}

impl std::str::FromStr for Example2Variant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "lambda" | "lambda_sweep" | "lambda-sweep" => Ok(Self::LambdaSweep),
            "ratio" | "ratio_sweep" | "ratio-sweep" => Ok(Self::RatioSweep),
            _ => Err(Error::InvalidConfig(format!("unknown example 2 variant `{s}`"))),
        }
    }
}

/// Soft-constrained cost with `C(x) = x^2`.
pub fn build_example2(n: usize, m: usize, lambda: f64, variant: Example2Variant) -> Result<Scenario> {
    check_lambda(lambda)?;
    let (network, q) = match variant {
        Example2Variant::LambdaSweep => {
            let network = NetworkConfig::symmetric(n, m, 0.8)?;
            let q = (1..=n)
                .map(|i| {
                    let tier = if 2 * i <= n { 1.6 } else { 0.4 };
                    lambda * tier * 0.8 * m as f64 / n as f64
                })
                .collect();
            (network, q)
        }
        Example2Variant::RatioSweep => {
            let network = NetworkConfig::new(m, linear_probs(n))?;
            let q = network.p().iter().map(|&p| lambda * p / n as f64).collect();
            (network, q)
        }
    };
    Scenario::with_problem(
        network,
        Problem::CostSoft {
            q,
            penalty: Penalty::quadratic(),
        },
    )
}

/// Proportional fairness with `p_i = i / N`.
pub fn build_example3(n: usize, m: usize) -> Result<Scenario> {
    Scenario::with_problem(NetworkConfig::new(m, linear_probs(n))?, Problem::PropFair)
}

/// Ten devices, one slot, `p_i = 0.8`; ceilings `f` on the first five
/// devices and `g` on the rest.
pub fn build_example4(f: f64, g: f64) -> Result<Scenario> {
    if !(f >= 1.0 && g >= 1.0) {
        return Err(Error::InvalidConfig(format!("AoI ceilings must be at least 1, got f = {f}, g = {g}")));
    }
    let e = (0..10).map(|i| if i < 5 { f } else { g }).collect();
    Scenario::with_problem(NetworkConfig::symmetric(10, 1, 0.8)?, Problem::Admission { e })
}

fn linear_probs(n: usize) -> Vec<f64> {
    (1..=n).map(|i| i as f64 / n as f64).collect()
}

fn check_lambda(lambda: f64) -> Result<()> {
    if !(lambda >= 0.0) || !lambda.is_finite() {
        return Err(Error::InvalidConfig(format!("lambda must be a nonnegative number, got {lambda}")));
    }
    Ok(())
}
