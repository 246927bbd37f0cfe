//! Slotted transmission model: scheduling, Bernoulli channel outcomes, the AoI
//! recursion, and per-trace metric accumulation.

use std::io::Write;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::analysis::{BatchMeans, DEFAULT_BLOCK_LEN};
use crate::error::{Error, Result};
use crate::model::{GapHistogram, NetworkConfig, ProjectedStats, SimState, TraceMetrics};
use crate::policies::PolicySpec;
use crate::scalar::Scalar;

/// Horizon used by the long-run experiments: `10^6 * N` slots.
pub fn long_run_horizon(n_devices: usize) -> u64 {
    1_000_000 * n_devices as u64
}

#[inline]
fn mix64(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

const CHANNEL_DOMAIN: u64 = 0x6368_616e_6e65_6c00;
const SELECT_DOMAIN: u64 = 0x7365_6c65_6374_0000;

/// Counter-based channel randomness: the outcome of device `i` in slot `t` is
/// a pure function of `(seed, t, i)`, so traces replay exactly and different
/// policies see the same channel realisation.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ChannelStream {
    key: u64,
}

impl ChannelStream {
    pub fn new(seed: u64) -> Self {
        Self {
            key: mix64(seed.wrapping_add(CHANNEL_DOMAIN)),
        }
    }

    /// Uniform draw in `[0, 1)` for `(slot, device)`.
    #[inline]
    pub fn uniform(&self, slot: u64, device: usize) -> f64 {
        let a = mix64(self.key ^ slot.wrapping_mul(0x9e37_79b9_7f4a_7c15));
        let b = mix64(a ^ (device as u64).wrapping_mul(0xd6e8_feb8_6659_fd93));
        (b >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    #[inline]
    pub fn success(&self, slot: u64, device: usize, p: f64) -> bool {
        self.uniform(slot, device) < p
    }
}

/// Random stream handed to policies that randomise their selection.
pub fn selection_rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(mix64(seed ^ SELECT_DOMAIN))
}

/// Outcome of one slot.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SlotResult {
    pub scheduled: Vec<usize>,
    pub successes: Vec<bool>,
}

fn validate_schedule(schedule: &[usize], n: usize, m: usize, seen: &mut Vec<bool>) -> Result<()> {
    if schedule.len() != m {
        return Err(Error::InvalidSchedule(format!(
            "{} devices scheduled, expected {m}",
            schedule.len()
        )));
    }
    seen.clear();
    seen.resize(n, false);
    for &i in schedule {
        if i >= n {
            return Err(Error::InvalidSchedule(format!("device index {i} out of range 0..{n}")));
        }
        if std::mem::replace(&mut seen[i], true) {
            return Err(Error::InvalidSchedule(format!("device {i} scheduled twice")));
        }
    }
    Ok(())
}

/// Advances `state` by one slot with the given schedule.
pub fn step<S: Scalar>(
    state: &mut SimState,
    schedule: &[usize],
    cfg: &NetworkConfig<S>,
    channel: &ChannelStream,
) -> Result<SlotResult> {
    Error::check_len("state", state.n(), cfg.n())?;
    validate_schedule(schedule, cfg.n(), cfg.m(), &mut Vec::new())?;
    let p: Vec<f64> = cfg.p().iter().map(|x| x.as_f64()).collect();
    let mut successes = vec![false; cfg.n()];
    advance(state, schedule, &p, channel, &mut successes);
    Ok(SlotResult {
        scheduled: schedule.to_vec(),
        successes,
    })
}

#[inline]
fn advance(state: &mut SimState, schedule: &[usize], p: &[f64], channel: &ChannelStream, successes: &mut [bool]) {
    let slot = state.t + 1;
    for z in successes.iter_mut() {
        *z = false;
    }
    for &i in schedule {
        successes[i] = channel.success(slot, i, p[i]);
    }
    for i in 0..successes.len() {
        if successes[i] {
            state.aoi[i] = 1;
            state.delivered[i] += 1;
            state.last_delivery[i] = slot;
        } else {
            state.aoi[i] += 1;
        }
    }
    state.t = slot;
}

/// Knobs for a single trace.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct TraceOptions {
    /// Batch length for the temporal-variance estimates; by default
    /// `min(10^4, T / 10)`.
    pub block_len: Option<u64>,
}

impl Default for TraceOptions {
    fn default() -> Self {
        Self { block_len: None }
    }
}

impl TraceOptions {
    fn block_len_for(&self, horizon: u64) -> u64 {
        self.block_len
            .unwrap_or_else(|| DEFAULT_BLOCK_LEN.min(horizon / 10))
            .max(1)
    }
}

/// Runs one trace of `horizon` slots under `policy`. Deterministic in
/// `(cfg, policy, horizon, seed)`.
pub fn run_trace<S: Scalar>(
    cfg: &NetworkConfig<S>,
    policy: &PolicySpec<S>,
    horizon: u64,
    seed: u64,
) -> Result<TraceMetrics<S>> {
    run_trace_observed(cfg, policy, horizon, seed, TraceOptions::default(), |_, _| {})
}

/// As [`run_trace`], calling `observer(state, slot)` after every slot.
pub fn run_trace_observed<S, F>(
    cfg: &NetworkConfig<S>,
    policy: &PolicySpec<S>,
    horizon: u64,
    seed: u64,
    opts: TraceOptions,
    mut observer: F,
) -> Result<TraceMetrics<S>>
where
    S: Scalar,
    F: FnMut(&SimState, &SlotResult),
{
    crate::model::validate_config(cfg)?;
    if horizon < 1 {
        return Err(Error::Domain("horizon must be at least one slot".into()));
    }
    let n = cfg.n();
    let m = cfg.m();
    let mut pol = policy.build(cfg)?;
    let p: Vec<f64> = cfg.p().iter().map(|x| x.as_f64()).collect();
    let inv_p: Vec<f64> = p.iter().map(|x| 1.0 / x).collect();
    let channel = ChannelStream::new(seed);
    let mut rng = selection_rng(seed);
    let block_len = opts.block_len_for(horizon);

    let mut state = SimState::new(n);
    let mut slot = SlotResult {
        scheduled: Vec::with_capacity(m),
        successes: vec![false; n],
    };
    let mut seen = Vec::with_capacity(n);
    let mut prev_last = Vec::with_capacity(m);
    let mut aoi_sum = vec![0u64; n];
    let mut scheduled = vec![0u64; n];
    let mut gaps = vec![GapHistogram::default(); n];
    let mut device_blocks: Vec<BatchMeans> = (0..n).map(|_| BatchMeans::new(block_len)).collect();
    let mut x_blocks = BatchMeans::new(block_len);
    let (mut x_sum, mut x_sq) = (0.0f64, 0.0f64);

    for _ in 0..horizon {
        pol.select(&state, &mut rng, &mut slot.scheduled);
        validate_schedule(&slot.scheduled, n, m, &mut seen)?;
        for i in 0..n {
            aoi_sum[i] += state.aoi[i];
        }
        prev_last.clear();
        prev_last.extend(slot.scheduled.iter().map(|&i| state.last_delivery[i]));
        advance(&mut state, &slot.scheduled, &p, &channel, &mut slot.successes);
        let mut xi = m as f64;
        for (k, &i) in slot.scheduled.iter().enumerate() {
            scheduled[i] += 1;
            if slot.successes[i] {
                xi -= inv_p[i];
                if prev_last[k] > 0 {
                    gaps[i].record(state.t - prev_last[k]);
                }
            }
        }
        for i in 0..n {
            device_blocks[i].push(if slot.successes[i] { 1.0 } else { 0.0 });
        }
        x_blocks.push(xi);
        x_sum += xi;
        x_sq += xi * xi;
        observer(&state, &slot);
    }

    let t = horizon as f64;
    let emp_throughput: Vec<f64> = state.delivered.iter().map(|&d| d as f64 / t).collect();
    let emp_variance = device_blocks
        .iter()
        .zip(&emp_throughput)
        .map(|(b, &mu)| b.variance(mu).map(S::lit))
        .collect::<Result<Vec<S>>>()
        .ok();
    let x_mean = x_sum / t;
    let x_var = if horizon > 1 {
        ((x_sq - t * x_mean * x_mean) / (t - 1.0)).max(0.0)
    } else {
        0.0
    };
    Ok(TraceMetrics {
        horizon,
        emp_throughput: emp_throughput.into_iter().map(S::lit).collect(),
        emp_aoi: aoi_sum.iter().map(|&a| S::lit(a as f64 / t)).collect(),
        emp_variance,
        delivered: state.delivered,
        scheduled,
        interdelivery: gaps,
        projected: ProjectedStats {
            increment_mean: S::lit(x_mean),
            increment_se: S::lit((x_var / t).sqrt()),
            variance: x_blocks.variance(0.0).ok().map(S::lit),
            terminal: S::lit(x_sum),
        },
    })
}

/// Mean and standard error across traces.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "")]
pub struct Estimate<S: Scalar> {
    pub mean: S,
    pub se: S,
}

/// `(mean, standard error of the mean)` of `values`; zero error for one value.
pub fn mean_se(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    if values.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let mean = values.iter().sum::<f64>() / n;
    if values.len() < 2 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, (var / n).sqrt())
}

fn estimate<S: Scalar>(values: impl Iterator<Item = S>) -> Estimate<S> {
    let v: Vec<f64> = values.map(|x| x.as_f64()).collect();
    let (mean, se) = mean_se(&v);
    Estimate {
        mean: S::lit(mean),
        se: S::lit(se),
    }
}

/// Aggregate of an ensemble of independent traces.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "")]
pub struct EnsembleMetrics<S: Scalar> {
    pub n_traces: usize,
    pub horizon: u64,
    pub base_seed: u64,
    pub throughput: Vec<Estimate<S>>,
    pub aoi: Vec<Estimate<S>>,
    pub variance: Option<Vec<Estimate<S>>>,
    pub projected_variance: Option<Estimate<S>>,
    pub increment_mean: Estimate<S>,
    /// Gap histograms pooled over traces.
    pub interdelivery: Vec<GapHistogram>,
    #[serde(skip)]
    pub traces: Vec<TraceMetrics<S>>,
}

impl<S: Scalar> EnsembleMetrics<S> {
    /// Mean and standard error of a per-trace statistic.
    pub fn per_trace<F: Fn(&TraceMetrics<S>) -> f64>(&self, stat: F) -> (f64, f64) {
        let v: Vec<f64> = self.traces.iter().map(stat).collect();
        mean_se(&v)
    }
}

/// Runs `n_traces` independent traces (trace `k` uses seed `base_seed + k`)
/// in parallel and aggregates them in trace order.
pub fn run_ensemble<S: Scalar>(
    cfg: &NetworkConfig<S>,
    policy: &PolicySpec<S>,
    horizon: u64,
    n_traces: usize,
    base_seed: u64,
) -> Result<EnsembleMetrics<S>> {
    run_ensemble_with(cfg, policy, horizon, n_traces, base_seed, TraceOptions::default())
}

pub fn run_ensemble_with<S: Scalar>(
    cfg: &NetworkConfig<S>,
    policy: &PolicySpec<S>,
    horizon: u64,
    n_traces: usize,
    base_seed: u64,
    opts: TraceOptions,
) -> Result<EnsembleMetrics<S>> {
    if n_traces < 1 {
        return Err(Error::Domain("ensemble needs at least one trace".into()));
    }
    let traces = (0..n_traces)
        .into_par_iter()
        .map(|k| {
            run_trace_observed(cfg, policy, horizon, base_seed.wrapping_add(k as u64), opts, |_, _| {})
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(aggregate(traces, base_seed))
}

fn aggregate<S: Scalar>(traces: Vec<TraceMetrics<S>>, base_seed: u64) -> EnsembleMetrics<S> {
    let n = traces[0].n();
    let per_device = |f: &dyn Fn(&TraceMetrics<S>, usize) -> S| -> Vec<Estimate<S>> {
        (0..n).map(|i| estimate(traces.iter().map(|t| f(t, i)))).collect()
    };
    let throughput = per_device(&|t, i| t.emp_throughput[i]);
    let aoi = per_device(&|t, i| t.emp_aoi[i]);
    let variance = traces
        .iter()
        .all(|t| t.emp_variance.is_some())
        .then(|| per_device(&|t, i| t.emp_variance.as_ref().unwrap()[i]));
    let projected_variance = traces
        .iter()
        .map(|t| t.projected.variance)
        .collect::<Option<Vec<S>>>()
        .map(|v| estimate(v.into_iter()));
    let mut interdelivery = vec![GapHistogram::default(); n];
    for t in &traces {
        for (pooled, h) in interdelivery.iter_mut().zip(&t.interdelivery) {
            pooled.merge(h);
        }
    }
    EnsembleMetrics {
        n_traces: traces.len(),
        horizon: traces[0].horizon,
        base_seed,
        throughput,
        aoi,
        variance,
        projected_variance,
        increment_mean: estimate(traces.iter().map(|t| t.projected.increment_mean)),
        interdelivery,
        traces,
    }
}

/// One CSV row per device for a single trace.
pub fn write_trace_csv<S: Scalar, W: Write>(metrics: &TraceMetrics<S>, out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["device", "throughput", "aoi", "temporal_variance", "delivered", "scheduled", "mean_gap"])?;
    for i in 0..metrics.n() {
        let var = metrics
            .emp_variance
            .as_ref()
            .map_or(String::new(), |v| v[i].to_string());
        let gap = metrics.interdelivery[i]
            .mean()
            .map_or(String::new(), |g| g.to_string());
        w.write_record([
            i.to_string(),
            metrics.emp_throughput[i].to_string(),
            metrics.emp_aoi[i].to_string(),
            var,
            metrics.delivered[i].to_string(),
            metrics.scheduled[i].to_string(),
            gap,
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// One CSV row per device with ensemble means and standard errors.
pub fn write_ensemble_csv<S: Scalar, W: Write>(metrics: &EnsembleMetrics<S>, out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record([
        "device",
        "throughput_mean",
        "throughput_se",
        "aoi_mean",
        "aoi_se",
        "temporal_variance_mean",
        "temporal_variance_se",
    ])?;
    for i in 0..metrics.throughput.len() {
        let (vm, vs) = metrics
            .variance
            .as_ref()
            .map_or((String::new(), String::new()), |v| (v[i].mean.to_string(), v[i].se.to_string()));
        w.write_record([
            i.to_string(),
            metrics.throughput[i].mean.to_string(),
            metrics.throughput[i].se.to_string(),
            metrics.aoi[i].mean.to_string(),
            metrics.aoi[i].se.to_string(),
            vm,
            vs,
        ])?;
    }
    w.flush()?;
    Ok(())
}
