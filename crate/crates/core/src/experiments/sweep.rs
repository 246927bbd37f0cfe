use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{
    build_example1, build_example2, build_example3, build_example4, default_horizon, Example2Variant, Problem, Scenario,
    DEFAULT_LAMBDA, DEFAULT_TRACES,
};
use crate::error::{Error, Result};
use crate::model::SecondOrderPoint;
use crate::policies::PolicyKind;
use crate::simulator::run_ensemble;
use crate::solvers::{check_admission, AdmissionResult, SolverOptions};

/// Experiment families.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepFamily {
    /// Min-AoI with floors, `M` scaled at a fixed `N / M`.
    Ex1Scale,
    /// Soft cost on the two-tier network, sweeping `lambda`.
    Ex2Lambda,
    /// Soft cost with linear reliabilities, `M` scaled at a fixed `N / M`.
    Ex2Scale,
    /// Proportional fairness, sweeping `M` at fixed `N`.
    Ex3,
    /// Admission boundary: minimal feasible `g` for each `f`.
    Ex4Boundary,
}

impl SweepFamily {
    pub fn sweep_var(&self) -> &'static str {
        match self {
            SweepFamily::Ex1Scale | SweepFamily::Ex2Scale | SweepFamily::Ex3 => "m",
            SweepFamily::Ex2Lambda => "lambda",
            SweepFamily::Ex4Boundary => "f",
        }
    }
}

impl std::str::FromStr for SweepFamily {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "ex1" | "ex1_scale" => Ok(Self::Ex1Scale),
            "ex2" | "ex2_lambda" => Ok(Self::Ex2Lambda),
            "ex2_scale" => Ok(Self::Ex2Scale),
            "ex3" => Ok(Self::Ex3),
            "ex4" | "ex4_boundary" => Ok(Self::Ex4Boundary),
            _ => Err(Error::InvalidConfig(format!("unknown sweep family `{s}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepConfig {
    pub family: SweepFamily,
    pub grid: Vec<f64>,
    pub policies: Vec<PolicyKind>,
    /// Device count for families with fixed `N`.
    pub n: usize,
    /// Slots per round for the lambda sweep.
    pub m: usize,
    /// `N / M` for the scaling families.
    pub ratio: usize,
    pub lambda: f64,
    /// Slots per trace; `None` uses the scenario default.
    pub horizon: Option<u64>,
    pub n_traces: usize,
    pub base_seed: u64,
    pub solver: SolverOptions<f64>,
}

impl SweepConfig {
    pub fn new(family: SweepFamily) -> Self {
        let all = vec![PolicyKind::Vwd, PolicyKind::MaxWeight, PolicyKind::Random];
        let scale = vec![1.0, 2.0, 4.0, 8.0, 16.0];
        let (grid, policies, n) = match family {
            SweepFamily::Ex1Scale | SweepFamily::Ex2Scale => (scale, all, 10),
            SweepFamily::Ex2Lambda => (vec![0.5, 0.7, 0.9, 1.1, 1.3, 1.5], all, 6),
            SweepFamily::Ex3 => (
                vec![1.0, 2.0, 4.0, 6.0, 8.0, 10.0],
                vec![PolicyKind::Vwd, PolicyKind::Random],
                10,
            ),
            SweepFamily::Ex4Boundary => ((0..10).map(|k| 6.0 + 2.0 * k as f64).collect(), vec![PolicyKind::Vwd], 10),
        };
        Self {
            family,
            grid,
            policies,
            n,
            m: 1,
            ratio: 10,
            lambda: DEFAULT_LAMBDA,
            horizon: None,
            n_traces: DEFAULT_TRACES,
            base_seed: 0,
            solver: SolverOptions::default(),
        }
    }

    /// Scenario at grid value `x`.
    pub fn scenario(&self, x: f64) -> Result<Scenario> {
        let as_count = |x: f64| -> Result<usize> {
            if x >= 1.0 && x.fract() == 0.0 {
                Ok(x as usize)
            } else {
                Err(Error::InvalidConfig(format!("grid value {x} is not a slot count")))
            }
        };
        let mut s = match self.family {
            SweepFamily::Ex1Scale => {
                let m = as_count(x)?;
                build_example1(self.ratio * m, m, self.lambda)?
            }
            SweepFamily::Ex2Scale => {
                let m = as_count(x)?;
                build_example2(self.ratio * m, m, self.lambda, Example2Variant::RatioSweep)?
            }
            SweepFamily::Ex2Lambda => build_example2(self.n, self.m, x, Example2Variant::LambdaSweep)?,
            SweepFamily::Ex3 => build_example3(self.n, as_count(x)?)?,
            SweepFamily::Ex4Boundary => build_example4(x, x)?,
        };
        s.horizon = self.horizon.unwrap_or_else(|| default_horizon(s.network.n()));
        s.n_traces = self.n_traces;
        s.base_seed = self.base_seed;
        Ok(s)
    }
}

/// Per-device ensemble means.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DeviceStats {
    pub mu_hat: Vec<f64>,
    pub sigma2_hat: Option<Vec<f64>>,
    pub aoi_hat: Vec<f64>,
    pub aoi_se: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub sweep_var: f64,
    /// `theory`, `boundary`, or a policy name.
    pub policy: String,
    pub objective_mean: f64,
    pub objective_se: f64,
    /// Empty, or the reason the row carries no value.
    pub note: String,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub devices: Option<DeviceStats>,
}

impl SweepRow {
    fn failed(x: f64, policy: &str, note: String) -> Self {
        Self {
            sweep_var: x,
            policy: policy.to_string(),
            objective_mean: f64::NAN,
            objective_se: f64::NAN,
            note,
            devices: None,
        }
    }

    fn value(x: f64, policy: &str, mean: f64, note: String) -> Self {
        Self {
            sweep_var: x,
            policy: policy.to_string(),
            objective_mean: mean,
            objective_se: 0.0,
            note,
            devices: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepReport {
    pub family: SweepFamily,
    pub sweep_var: String,
    pub config: SweepConfig,
    pub rows: Vec<SweepRow>,
}

/// Margin, as a fraction of each ceiling, separating simulated admission
/// witnesses from the feasibility boundary.
pub const ADMISSION_MARGIN: f64 = 0.05;

/// Smallest `g` (to `resolution`) for which ceilings `(f, g)` are admissible,
/// or `None` if none up to `g_max` is.
pub fn admission_boundary(f: f64, g_max: f64, resolution: f64, opts: &SolverOptions<f64>) -> Result<Option<f64>> {
    let feasible = |g: f64| -> Result<bool> {
        let s = build_example4(f, g)?;
        let Problem::Admission { e } = &s.problem else { unreachable!() };
        Ok(check_admission(&s.network, e, None, opts)?.feasible)
    };
    if !feasible(g_max)? {
        return Ok(None);
    }
    let (mut lo, mut hi) = (1.0, g_max);
    if feasible(lo)? {
        return Ok(Some(lo));
    }
    while hi - lo > resolution {
        let mid = 0.5 * (lo + hi);
        if feasible(mid)? {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    Ok(Some(hi))
}

/// Ceilings whose `ADMISSION_MARGIN`-tightened version is `(f, g)`, with the
/// admission witness for the tightened ceilings.
pub fn admission_interior(
    f: f64,
    g: f64,
    opts: &SolverOptions<f64>,
) -> Result<(Scenario, AdmissionResult<f64>)> {
    let scale = 1.0 / (1.0 - ADMISSION_MARGIN);
    let s = build_example4(f * scale, g * scale)?;
    let Problem::Admission { e } = &s.problem else { unreachable!() };
    let delta: Vec<f64> = e.iter().map(|&v| ADMISSION_MARGIN * v).collect();
    let r = check_admission(&s.network, e, Some(&delta), opts)?;
    Ok((s, r))
}

fn simulate_rows(
    s: &Scenario,
    x: f64,
    seed: u64,
    targets: Option<&SecondOrderPoint<f64>>,
    policies: &[PolicyKind],
) -> Vec<SweepRow> {
    policies
        .iter()
        .map(|&kind| {
            let spec = match s.policy(kind, targets) {
                Ok(spec) => spec,
                Err(e) => return SweepRow::failed(x, kind.as_str(), e.to_string()),
            };
            match run_ensemble(&s.network, &spec, s.horizon, s.n_traces, seed) {
                Ok(ens) => {
                    let (mean, se) = ens.per_trace(|t| s.simulated_objective(t));
                    SweepRow {
                        sweep_var: x,
                        policy: kind.as_str().to_string(),
                        objective_mean: mean,
                        objective_se: se,
                        note: String::new(),
                        devices: Some(DeviceStats {
                            mu_hat: ens.throughput.iter().map(|e| e.mean).collect(),
                            sigma2_hat: ens.variance.as_ref().map(|v| v.iter().map(|e| e.mean).collect()),
                            aoi_hat: ens.aoi.iter().map(|e| e.mean).collect(),
                            aoi_se: ens.aoi.iter().map(|e| e.se).collect(),
                        }),
                    }
                }
                Err(e) => SweepRow::failed(x, kind.as_str(), e.to_string()),
            }
        })
        .collect()
}

fn grid_point(cfg: &SweepConfig, index: usize, x: f64) -> Vec<SweepRow> {
    let seed = cfg.base_seed.wrapping_add((index as u64).wrapping_mul(1_000_003));
    if cfg.family == SweepFamily::Ex4Boundary {
        return boundary_point(cfg, x, seed);
    }
    let s = match cfg.scenario(x) {
        Ok(s) => s,
        Err(e) => return vec![SweepRow::failed(x, "theory", e.to_string())],
    };
    let mut opts = cfg.solver.clone();
    opts.seed = seed;
    let (theory, targets) = match s.solve(&opts) {
        Ok(sol) => {
            let note = if sol.boundary() { "fully scheduled".to_string() } else { String::new() };
            (SweepRow::value(x, "theory", sol.objective(), note), sol.targets().cloned())
        }
        Err(e) => (SweepRow::failed(x, "theory", e.to_string()), None),
    };
    let mut rows = vec![theory];
    rows.extend(simulate_rows(&s, x, seed, targets.as_ref(), &cfg.policies));
    rows
}

fn boundary_point(cfg: &SweepConfig, f: f64, seed: u64) -> Vec<SweepRow> {
    let mut opts = cfg.solver.clone();
    opts.seed = seed;
    let g = match admission_boundary(f, 1e3, 1e-2, &opts) {
        Ok(Some(g)) => g,
        Ok(None) => return vec![SweepRow::failed(f, "boundary", "no feasible g".into())],
        Err(e) => return vec![SweepRow::failed(f, "boundary", e.to_string())],
    };
    let mut rows = vec![SweepRow::value(f, "boundary", g, String::new())];
    match admission_interior(f, g, &opts) {
        Ok((mut s, r)) if r.feasible => {
            s.horizon = cfg.horizon.unwrap_or(s.horizon);
            s.n_traces = cfg.n_traces;
            rows.extend(simulate_rows(&s, f, seed, r.witness.as_ref(), &cfg.policies));
        }
        Ok(_) => rows.push(SweepRow::failed(f, "vwd", "interior point not admissible".into())),
        Err(e) => rows.push(SweepRow::failed(f, "vwd", e.to_string())),
    }
    rows
}

/// Runs every grid point (in parallel) and returns rows ordered by grid
/// index, then `theory`/`boundary`, then policies in configured order.
pub fn run_sweep(cfg: &SweepConfig) -> Result<SweepReport> {
    if cfg.grid.is_empty() {
        return Err(Error::InvalidConfig("sweep grid is empty".into()));
    }
    let rows: Vec<SweepRow> = cfg
        .grid
        .par_iter()
        .enumerate()
        .map(|(i, &x)| grid_point(cfg, i, x))
        .collect::<Vec<_>>()
        .into_iter()
        .flatten()
        .collect();
    Ok(SweepReport {
        family: cfg.family,
        sweep_var: cfg.family.sweep_var().to_string(),
        config: cfg.clone(),
        rows,
    })
}

/// CSV with columns `sweep_var,policy,objective_mean,objective_se,note`.
pub fn write_sweep_csv<W: Write>(report: &SweepReport, out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["sweep_var", "policy", "objective_mean", "objective_se", "note"])?;
    for r in &report.rows {
        w.write_record([
            r.sweep_var.to_string(),
            r.policy.clone(),
            r.objective_mean.to_string(),
            r.objective_se.to_string(),
            r.note.clone(),
        ])?;
    }
    w.flush()?;
    Ok(())
}
