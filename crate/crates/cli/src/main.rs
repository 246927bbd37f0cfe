use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use aoi_capacity::analysis::{cdf_comparison, cdf_max_gap, write_cdf_csv, EmpiricalCdf, InverseGaussian};
use aoi_capacity::experiments::{
    build_example1, build_example2, build_example3, build_example4, run_sweep, write_sweep_csv, Example2Variant,
    Problem, Scenario, Solution, SweepConfig, SweepFamily,
};
use aoi_capacity::region::{check_inner, check_outer, CheckOptions};
use aoi_capacity::simulator::{run_ensemble, write_ensemble_csv};
use aoi_capacity::{Error, NetworkConfig, PolicyKind, SecondOrderPoint, SolverOptions, TargetPairs};
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Deserialize;

#[derive(Parser, Debug)]
#[command(name = "aoi-capacity", version, about = "Throughput/AoI capacity region tools")]
struct Cli {
    #[command(flatten)]
    global: Global,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug)]
struct Global {
    /// Base seed for simulation and solver multi-starts.
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,
    /// Slots per trace.
    #[arg(long, global = true)]
    horizon: Option<u64>,
    /// Number of independent traces.
    #[arg(long, global = true)]
    traces: Option<usize>,
    /// Output file (standard output when omitted).
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[arg(long, global = true, value_enum)]
    format: Option<Format>,
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, ValueEnum)]
enum Format {
    Csv,
    Json,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Solve a scenario and print the optimisation witness.
    Solve(ScenarioArgs),
    /// Simulate a policy on a scenario and write per-device metrics.
    Simulate(SimulateArgs),
    /// Run an experiment family over a grid.
    Sweep(SweepArgs),
    /// Check a second-order point against the outer or inner bound.
    Region(RegionArgs),
    /// Compare the empirical inter-delivery CDF with the fitted inverse Gaussian.
    Cdf(CdfArgs),
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, ValueEnum)]
enum ScenarioKind {
    Ex1,
    Ex2,
    Ex3,
    Ex4,
}

#[derive(Args, Debug)]
struct ScenarioArgs {
    #[arg(long, value_enum, default_value = "ex1", conflicts_with = "scenario_file")]
    scenario: ScenarioKind,
    /// TOML scenario file.
    #[arg(long)]
    scenario_file: Option<PathBuf>,
    #[arg(long)]
    n: Option<usize>,
    #[arg(long)]
    m: Option<usize>,
    #[arg(long)]
    lambda: Option<f64>,
    /// Example 2 variant: `lambda` or `ratio`.
    #[arg(long)]
    variant: Option<Example2Variant>,
    /// Override success probabilities (comma separated).
    #[arg(long, value_delimiter = ',')]
    p: Option<Vec<f64>>,
    /// Override throughput requirements (comma separated).
    #[arg(long, value_delimiter = ',')]
    q: Option<Vec<f64>>,
    /// Override AoI ceilings (comma separated).
    #[arg(long, value_delimiter = ',')]
    e: Option<Vec<f64>>,
    #[arg(long)]
    f: Option<f64>,
    #[arg(long)]
    g: Option<f64>,
    /// Solver multi-starts.
    #[arg(long, default_value_t = 20)]
    starts: usize,
}

#[derive(Args, Debug)]
struct SimulateArgs {
    #[command(flatten)]
    scenario: ScenarioArgs,
    #[arg(long, default_value = "vwd")]
    policy: PolicyKind,
    /// JSON second-order point used as VWD targets instead of the solver optimum.
    #[arg(long)]
    targets: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct SweepArgs {
    /// ex1, ex2, ex2_scale, ex3 or ex4.
    #[arg(long)]
    family: SweepFamily,
    #[arg(long, value_delimiter = ',')]
    grid: Option<Vec<f64>>,
    #[arg(long, value_delimiter = ',')]
    policies: Option<Vec<PolicyKind>>,
    #[arg(long)]
    n: Option<usize>,
    #[arg(long)]
    m: Option<usize>,
    /// N / M for the scaling families.
    #[arg(long)]
    ratio: Option<usize>,
    #[arg(long)]
    lambda: Option<f64>,
    #[arg(long, default_value_t = 20)]
    starts: usize,
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, ValueEnum)]
enum Bound {
    Inner,
    Outer,
}

#[derive(Args, Debug)]
struct RegionArgs {
    /// JSON file with `mu` and `sigma2`, optionally with a `network` object.
    #[arg(long)]
    point: PathBuf,
    /// JSON file with throughput floors `m` and AoI ceilings `h`.
    #[arg(long)]
    pairs: PathBuf,
    #[arg(long, value_enum, default_value = "inner")]
    bound: Bound,
    /// Network success probabilities, if the point file has no network.
    #[arg(long, value_delimiter = ',')]
    p: Option<Vec<f64>>,
    #[arg(long)]
    m: Option<usize>,
    #[arg(long, default_value_t = 1e-3)]
    eps: f64,
    /// Looser tolerances for empirically estimated points.
    #[arg(long)]
    empirical: bool,
}

#[derive(Args, Debug)]
struct CdfArgs {
    #[command(flatten)]
    scenario: ScenarioArgs,
    #[arg(long, default_value = "vwd")]
    policy: PolicyKind,
    /// Device to report; defaults to the one with the largest CDF gap.
    #[arg(long)]
    device: Option<usize>,
}

#[derive(Deserialize)]
struct PointFile {
    #[serde(flatten)]
    point: SecondOrderPoint<f64>,
    network: Option<NetworkConfig<f64>>,
}

enum Failure {
    Usage(String),
    Infeasible(String),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        match e {
            Error::Infeasible(msg) => Failure::Infeasible(msg),
            other => Failure::Usage(other.to_string()),
        }
    }
}

type CliResult<T = ()> = Result<T, Failure>;

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Usage(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(1)
        }
        Err(Failure::Infeasible(msg)) => {
            eprintln!("infeasible: {msg}");
            ExitCode::from(2)
        }
    }
}

fn run(cli: Cli) -> CliResult {
    let g = &cli.global;
    match &cli.command {
        Command::Solve(a) => solve(g, a),
        Command::Simulate(a) => simulate(g, a),
        Command::Sweep(a) => sweep(g, a),
        Command::Region(a) => region(g, a),
        Command::Cdf(a) => cdf(g, a),
    }
}

fn output(g: &Global) -> CliResult<Box<dyn Write>> {
    Ok(match &g.out {
        Some(path) => Box::new(BufWriter::new(File::create(path).map_err(Error::from)?)),
        None => Box::new(BufWriter::new(io::stdout().lock())),
    })
}

fn write_json<T: serde::Serialize>(g: &Global, value: &T) -> CliResult {
    let mut out = output(g)?;
    serde_json::to_writer_pretty(&mut out, value).map_err(Error::from)?;
    writeln!(out).and_then(|_| out.flush()).map_err(Error::from)?;
    Ok(())
}

fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> CliResult<T> {
    let text = std::fs::read_to_string(path).map_err(Error::from)?;
    Ok(serde_json::from_str(&text).map_err(Error::from)?)
}

fn build_scenario(g: &Global, a: &ScenarioArgs) -> CliResult<Scenario> {
    let mut s = if let Some(path) = &a.scenario_file {
        Scenario::from_toml_str(&std::fs::read_to_string(path).map_err(Error::from)?)?
    } else {
        match a.scenario {
            ScenarioKind::Ex1 => build_example1(a.n.unwrap_or(10), a.m.unwrap_or(1), a.lambda.unwrap_or(0.9))?,
            ScenarioKind::Ex2 => build_example2(
                a.n.unwrap_or(6),
                a.m.unwrap_or(1),
                a.lambda.unwrap_or(1.0),
                a.variant.unwrap_or(Example2Variant::LambdaSweep),
            )?,
            ScenarioKind::Ex3 => build_example3(a.n.unwrap_or(10), a.m.unwrap_or(1))?,
            ScenarioKind::Ex4 => build_example4(a.f.unwrap_or(12.0), a.g.unwrap_or(12.0))?,
        }
    };
    if let Some(p) = &a.p {
        s.network = NetworkConfig::new(a.m.unwrap_or(s.network.m()), p.clone())?;
        s.horizon = aoi_capacity::experiments::default_horizon(s.network.n());
    }
    match (&mut s.problem, &a.q, &a.e) {
        (Problem::MinAoiHard { q } | Problem::CostSoft { q, .. }, Some(new), _) => *q = new.clone(),
        (Problem::Admission { e }, _, Some(new)) => *e = new.clone(),
        (_, None, None) => {}
        _ => return Err(Failure::Usage("--q/--e do not apply to this scenario".into())),
    }
    if let Some(h) = g.horizon {
        s.horizon = h;
    }
    if let Some(t) = g.traces {
        s.n_traces = t;
    }
    if a.scenario_file.is_none() || g.seed != 0 {
        s.base_seed = g.seed;
    }
    s.validate()?;
    Ok(s)
}

fn solver_options(seed: u64, starts: usize) -> SolverOptions<f64> {
    SolverOptions {
        seed,
        n_starts: starts,
        ..SolverOptions::default()
    }
}

fn solve(g: &Global, a: &ScenarioArgs) -> CliResult {
    let s = build_scenario(g, a)?;
    let sol = s.solve(&solver_options(s.base_seed, a.starts))?;
    eprintln!(
        "{}: N = {}, M = {}, objective = {:.6}{}",
        s.problem.name(),
        s.network.n(),
        s.network.m(),
        sol.objective(),
        if sol.boundary() { " (fully scheduled)" } else { "" }
    );
    match g.format.unwrap_or(Format::Json) {
        Format::Json => write_json(g, &sol)?,
        Format::Csv => {
            let mut w = csv::Writer::from_writer(output(g)?);
            w.write_record(["device", "mu", "sigma2"]).map_err(Error::from)?;
            if let Some(t) = sol.targets() {
                for i in 0..t.len() {
                    w.write_record([i.to_string(), t.mu[i].to_string(), t.sigma2[i].to_string()])
                        .map_err(Error::from)?;
                }
            }
            w.flush().map_err(Error::from)?;
        }
    }
    if let Solution::Admission(r) = &sol {
        if !r.feasible {
            return Err(Failure::Infeasible(format!("ceilings not admissible, margin {}", r.margin)));
        }
    }
    Ok(())
}

fn targets_for(s: &Scenario, path: Option<&PathBuf>, starts: usize, kind: PolicyKind) -> CliResult<Option<SecondOrderPoint<f64>>> {
    if let Some(path) = path {
        return Ok(Some(read_json(path)?));
    }
    if kind == PolicyKind::Random || (kind == PolicyKind::MaxWeight && s.problem.requirements().is_some()) {
        return Ok(None);
    }
    let sol = s.solve(&solver_options(s.base_seed, starts))?;
    match sol.targets() {
        Some(t) => Ok(Some(t.clone())),
        None => Err(Failure::Infeasible("no target point: problem is infeasible".into())),
    }
}

fn simulate(g: &Global, a: &SimulateArgs) -> CliResult {
    let s = build_scenario(g, &a.scenario)?;
    let targets = targets_for(&s, a.targets.as_ref(), a.scenario.starts, a.policy)?;
    let spec = s.policy(a.policy, targets.as_ref())?;
    let ens = run_ensemble(&s.network, &spec, s.horizon, s.n_traces, s.base_seed)?;
    let (obj, se) = ens.per_trace(|t| s.simulated_objective(t));
    eprintln!(
        "{} on {}: {} traces x {} slots, objective = {obj:.6} +/- {se:.6}",
        a.policy,
        s.problem.name(),
        s.n_traces,
        s.horizon
    );
    match g.format.unwrap_or(Format::Csv) {
        Format::Json => write_json(g, &ens),
        Format::Csv => Ok(write_ensemble_csv(&ens, output(g)?)?),
    }
}

fn sweep(g: &Global, a: &SweepArgs) -> CliResult {
    let mut cfg = SweepConfig::new(a.family);
    if let Some(grid) = &a.grid {
        cfg.grid = grid.clone();
    }
    if let Some(p) = &a.policies {
        cfg.policies = p.clone();
    }
    cfg.n = a.n.unwrap_or(cfg.n);
    cfg.m = a.m.unwrap_or(cfg.m);
    cfg.ratio = a.ratio.unwrap_or(cfg.ratio);
    cfg.lambda = a.lambda.unwrap_or(cfg.lambda);
    cfg.horizon = g.horizon;
    cfg.n_traces = g.traces.unwrap_or(cfg.n_traces);
    cfg.base_seed = g.seed;
    cfg.solver.n_starts = a.starts;
    let report = run_sweep(&cfg)?;
    eprintln!("{:?}: {} grid points, {} rows", cfg.family, cfg.grid.len(), report.rows.len());
    match g.format.unwrap_or(Format::Csv) {
        Format::Json => write_json(g, &report),
        Format::Csv => {
            write_sweep_csv(&report, output(g)?)?;
            if let Some(out) = &g.out {
                let mut side = out.clone().into_os_string();
                side.push(".json");
                let text = serde_json::to_string_pretty(&report).map_err(Error::from)?;
                std::fs::write(&side, text + "\n").map_err(Error::from)?;
            }
            Ok(())
        }
    }
}

fn region(g: &Global, a: &RegionArgs) -> CliResult {
    let file: PointFile = read_json(&a.point)?;
    let pairs: TargetPairs<f64> = read_json(&a.pairs)?;
    let cfg = match (&a.p, file.network) {
        (Some(p), _) => NetworkConfig::new(a.m.unwrap_or(1), p.clone())?,
        (None, Some(cfg)) => cfg,
        (None, None) => return Err(Failure::Usage("no network: pass --p/--m or include `network` in the point file".into())),
    };
    let opts = if a.empirical { CheckOptions::empirical() } else { CheckOptions::analytic() }.with_eps(a.eps);
    let report = match a.bound {
        Bound::Inner => check_inner(&pairs, &file.point, &cfg, &opts)?,
        Bound::Outer => check_outer(&pairs, &file.point, &cfg, &opts)?,
    };
    eprintln!(
        "{:?} bound: {} ({} violated)",
        a.bound,
        if report.feasible { "feasible" } else { "infeasible" },
        report.violated.len()
    );
    write_json(g, &report)
}

fn cdf(g: &Global, a: &CdfArgs) -> CliResult {
    let s = build_scenario(g, &a.scenario)?;
    let targets = targets_for(&s, None, a.scenario.starts, a.policy)?;
    let spec = s.policy(a.policy, targets.as_ref())?;
    let ens = run_ensemble(&s.network, &spec, s.horizon, s.n_traces, s.base_seed)?;
    let n = s.network.n();
    let fitted = |i: usize| -> CliResult<InverseGaussian<f64>> {
        let (mu, sigma2) = match &targets {
            Some(t) if a.policy == PolicyKind::Vwd => (t.mu[i], t.sigma2[i]),
            _ => {
                let v = ens.variance.as_ref().ok_or_else(|| {
                    Failure::Usage("horizon too short for a temporal variance estimate".into())
                })?;
                (ens.throughput[i].mean, v[i].mean)
            }
        };
        Ok(InverseGaussian::from_second_order(mu, sigma2)?)
    };
    let mut gaps = Vec::with_capacity(n);
    for i in 0..n {
        let h = &ens.interdelivery[i];
        let Some(x_max) = h.max_gap() else {
            gaps.push(f64::NAN);
            continue;
        };
        let emp = EmpiricalCdf::from_histogram(h)?;
        let ig = fitted(i)?;
        gaps.push(cdf_max_gap(|x: f64| emp.eval(x), |x| ig.cdf(x).unwrap_or(f64::NAN), x_max));
    }
    let device = match a.device {
        Some(d) if d < n => d,
        Some(d) => return Err(Failure::Usage(format!("device {d} out of range for {n} devices"))),
        None => (0..n)
            .filter(|&i| gaps[i].is_finite())
            .max_by(|&i, &j| gaps[i].total_cmp(&gaps[j]))
            .ok_or_else(|| Failure::Usage("no inter-delivery samples".into()))?,
    };
    let emp = EmpiricalCdf::from_histogram(&ens.interdelivery[device])?;
    let rows = cdf_comparison(&emp, &fitted(device)?, ens.interdelivery[device].max_gap().unwrap_or(1))?;
    eprintln!("device {device}: max CDF gap {:.4}", gaps[device]);
    match g.format.unwrap_or(Format::Csv) {
        Format::Json => write_json(
            g,
            &serde_json::json!({ "device": device, "max_gap": gaps[device], "gaps": gaps, "rows": rows }),
        ),
        Format::Csv => Ok(write_cdf_csv(&rows, output(g)?)?),
    }
}
