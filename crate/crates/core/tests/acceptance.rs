//! Acceptance suite: one PASS/FAIL line per criterion.
//!
//! Exits 0 after reporting unless `ACCEPTANCE_STRICT=1`, in which case any
//! failing criterion makes the process exit 1.

mod common;

use std::time::Instant;

use aoi_capacity::analysis::{cdf_max_gap, EmpiricalCdf, InverseGaussian};
use aoi_capacity::experiments::{
    admission_boundary, admission_interior, build_example1, build_example2, run_sweep, Example2Variant,
    SweepConfig, SweepFamily,
};
use aoi_capacity::region::{allocate_variances, aoi_approx, check_inner, check_outer, CheckOptions};
use aoi_capacity::simulator::{run_ensemble, run_trace};
use aoi_capacity::solvers::{check_admission, solve_cost_soft, solve_min_aoi_hard, solve_prop_fair};
use aoi_capacity::{
    EnsembleMetrics, NetworkConfig, Penalty, PolicySpec, SecondOrderPoint, SolverOptions, SolverResult,
    TargetPairs, TraceMetrics,
};

const HORIZON: u64 = 1_000_000;
const EPS: f64 = 1e-3;

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: impl Into<String>) -> Outcome {
    Outcome {
        pass,
        detail: detail.into(),
    }
}

/// Witnesses collected along the way for the bound-consistency check.
#[derive(Default)]
struct Witnesses {
    points: Vec<(String, NetworkConfig<f64>, SecondOrderPoint<f64>)>,
}

impl Witnesses {
    fn add(&mut self, label: impl Into<String>, cfg: &NetworkConfig<f64>, r: &SolverResult<f64>) {
        if r.converged && !r.boundary {
            self.points.push((label.into(), cfg.clone(), r.point.clone()));
        }
    }
}

struct Example1Run {
    cfg: NetworkConfig<f64>,
    targets: SecondOrderPoint<f64>,
    trace: TraceMetrics<f64>,
    seconds: f64,
}

fn solver() -> SolverOptions<f64> {
    SolverOptions::default()
}

fn example1_run(w: &mut Witnesses) -> Example1Run {
    let s = build_example1(10, 1, 0.9).unwrap();
    let aoi_capacity::experiments::Problem::MinAoiHard { q } = &s.problem else { unreachable!() };
    let r = solve_min_aoi_hard(&s.network, q, &solver()).unwrap();
    w.add("example 1, N = 10", &s.network, &r);
    let policy = PolicySpec::Vwd {
        targets: r.point.clone(),
    };
    let start = Instant::now();
    let trace = run_trace(&s.network, &policy, HORIZON, 1).unwrap();
    Example1Run {
        cfg: s.network,
        targets: r.point,
        trace,
        seconds: start.elapsed().as_secs_f64(),
    }
}

fn throughput_attainment(run: &Example1Run) -> Outcome {
    let worst = (0..run.cfg.n())
        .map(|i| (run.trace.emp_throughput[i] - run.targets.mu[i]).abs())
        .fold(0.0, f64::max);
    outcome(
        worst <= 0.01 && run.seconds < 30.0,
        format!("max |mu_hat - mu| = {worst:.2e} (tol 1e-2), trace time {:.2}s (limit 30s)", run.seconds),
    )
}

fn variance_attainment(run: &Example1Run) -> Outcome {
    let est = run.trace.emp_variance.as_ref().expect("horizon long enough for batch means");
    let mut checked = 0;
    let mut worst: f64 = 0.0;
    for i in 0..run.cfg.n() {
        if run.targets.sigma2[i] > 0.05 {
            checked += 1;
            worst = worst.max((est[i] - run.targets.sigma2[i]).abs() / run.targets.sigma2[i]);
        }
    }
    let primary = worst <= 0.15;

    // Network whose targets all exceed the threshold, pooled over traces.
    let s = build_example1(3, 2, 0.9).unwrap();
    let aoi_capacity::experiments::Problem::MinAoiHard { q } = &s.problem else { unreachable!() };
    let r = solve_min_aoi_hard(&s.network, q, &solver()).unwrap();
    let ens = run_ensemble(&s.network, &PolicySpec::Vwd { targets: r.point.clone() }, HORIZON, 8, 100).unwrap();
    let pooled = ens.variance.unwrap();
    let mut extra_worst: f64 = 0.0;
    let mut extra_checked = 0;
    for i in 0..3 {
        if r.point.sigma2[i] > 0.05 {
            extra_checked += 1;
            extra_worst = extra_worst.max((pooled[i].mean - r.point.sigma2[i]).abs() / r.point.sigma2[i]);
        }
    }
    outcome(
        primary && extra_checked > 0 && extra_worst <= 0.15,
        format!(
            "N=10: {checked} devices with sigma2 > 0.05 (max rel err {worst:.3}); \
             N=3 M=2: {extra_checked} devices, max rel err {extra_worst:.3} (tol 0.15)"
        ),
    )
}

fn aoi_fidelity(w: &mut Witnesses) -> Outcome {
    let mut gaps = Vec::new();
    for n in [3usize, 5, 10] {
        let s = build_example1(n, 1, 0.9).unwrap();
        let aoi_capacity::experiments::Problem::MinAoiHard { q } = &s.problem else { unreachable!() };
        let r = solve_min_aoi_hard(&s.network, q, &solver()).unwrap();
        w.add(format!("example 1, N = {n}"), &s.network, &r);
        let ens = run_ensemble(&s.network, &PolicySpec::Vwd { targets: r.point.clone() }, HORIZON, 8, 200).unwrap();
        let (emp, _) = ens.per_trace(|t| t.emp_aoi.iter().sum());
        gaps.push((emp - r.objective).abs() / r.objective);
    }
    let monotone = gaps[0] > gaps[1] && gaps[1] > gaps[2];
    outcome(
        gaps[2] <= 0.05 && monotone,
        format!(
            "relative gap N/M=3: {:.4}, 5: {:.4}, 10: {:.4} (tol 0.05 at 10, strictly decreasing)",
            gaps[0], gaps[1], gaps[2]
        ),
    )
}

fn symmetric_ensembles() -> Vec<(&'static str, EnsembleMetrics<f64>)> {
    let cfg = NetworkConfig::symmetric(4, 1, 0.6).unwrap();
    let mu = vec![0.15; 4];
    let alloc = allocate_variances(&mu, cfg.p(), &[1.0; 4]).unwrap();
    let policies = [
        ("vwd", PolicySpec::Vwd { targets: SecondOrderPoint::new(mu.clone(), alloc.sigma2).unwrap() }),
        ("maxweight", PolicySpec::max_weight(mu.clone())),
        ("random", PolicySpec::Random),
    ];
    policies
        .into_iter()
        .map(|(name, spec)| (name, run_ensemble(&cfg, &spec, HORIZON, 32, 300).unwrap()))
        .collect()
}

fn variance_invariance(ens: &[(&str, EnsembleMetrics<f64>)]) -> Outcome {
    let target: f64 = 4.0 * 0.25 * (1.0 / 0.6 - 1.0);
    let mut pass = true;
    let mut parts = Vec::new();
    for (name, e) in ens {
        let v = e.projected_variance.as_ref().unwrap().mean;
        let rel = (v - target).abs() / target;
        let mu_err = e.throughput.iter().map(|t| (t.mean - 0.15).abs()).fold(0.0, f64::max);
        pass &= rel <= 0.10 && mu_err <= 0.005;
        parts.push(format!("{name} {v:.4} (rel {rel:.3}, max |mu_hat - 0.15| {mu_err:.1e})"));
    }
    outcome(pass, format!("target {target:.4}; {}", parts.join("; ")))
}

fn martingale(ens: &[(&str, EnsembleMetrics<f64>)], run: &Example1Run) -> Outcome {
    let mut worst: f64 = 0.0;
    let mut count = 0;
    let mut z = |t: &TraceMetrics<f64>| {
        count += 1;
        worst = worst.max((t.projected.increment_mean / t.projected.increment_se).abs());
    };
    for (_, e) in ens {
        z(&e.traces[0]);
    }
    z(&run.trace);
    outcome(
        worst <= 4.0,
        format!("{count} policy runs of 1e6 slots, max |mean / se| = {worst:.2} (tol 4)"),
    )
}

fn rel_err(got: f64, oracle: f64) -> f64 {
    if got == oracle {
        return 0.0;
    }
    (got - oracle).abs() / oracle.abs().max(1.0)
}

fn solver_oracle(w: &mut Witnesses) -> Outcome {
    let step = 1e-3;
    let opts = solver();
    let mut lines = Vec::new();
    let mut pass = true;
    let mut record = |label: String, got: f64, oracle: f64, secs: f64, agree: bool| {
        let err = rel_err(got, oracle);
        pass &= agree && err <= 1e-3 && secs < 60.0;
        lines.push(format!("{label}: {err:.1e} in {secs:.1}s"));
    };
    let third = 1.0 / 3.0;

    let floors: [(usize, Vec<f64>, Vec<f64>); 3] = [
        (1, vec![0.5, 1.0], vec![0.1, 0.2]),
        (1, vec![third, 2.0 * third, 1.0], vec![0.1, 0.2, 0.3]),
        (2, vec![0.4, 0.7, 0.9], vec![0.1, 0.3, 0.2]),
    ];
    for (k, (m, p, q)) in floors.iter().enumerate() {
        let cfg = NetworkConfig::new(*m, p.clone()).unwrap();
        let t = Instant::now();
        let r = solve_min_aoi_hard(&cfg, q, &opts).unwrap();
        let secs = t.elapsed().as_secs_f64();
        w.add(format!("min-aoi case {k}"), &cfg, &r);
        let lo: Vec<f64> = q.iter().zip(p).map(|(q, p)| (q / p).max(EPS)).collect();
        let hi = vec![1.0 - EPS; p.len()];
        let (oracle, _) = common::grid_min(&lo, &hi, *m as f64, step, |y| common::total_aoi(y, p));
        record(format!("min-aoi {k}"), r.objective, oracle, secs, true);
    }

    let soft: [(usize, Vec<f64>, Vec<f64>); 3] = [
        (1, vec![0.8, 0.8], vec![0.5, 0.3]),
        (1, vec![0.8, 0.8, 0.8], vec![0.4, 0.3, 0.1]),
        (2, vec![0.3, 0.6, 0.9], vec![0.2, 0.4, 0.6]),
    ];
    for (k, (m, p, q)) in soft.iter().enumerate() {
        let cfg = NetworkConfig::new(*m, p.clone()).unwrap();
        let t = Instant::now();
        let r = solve_cost_soft(&cfg, q, &Penalty::quadratic(), &opts).unwrap();
        let secs = t.elapsed().as_secs_f64();
        w.add(format!("cost case {k}"), &cfg, &r);
        let n = p.len();
        let (oracle, _) = common::grid_min(&vec![EPS; n], &vec![1.0 - EPS; n], *m as f64, step, |y| {
            common::total_cost(y, p, q)
        });
        record(format!("cost {k}"), r.objective, oracle, secs, true);
    }

    let fair: [(usize, Vec<f64>); 3] = [
        (1, vec![0.5, 1.0]),
        (1, vec![third, 2.0 * third, 1.0]),
        (2, vec![0.4, 0.7, 0.9]),
    ];
    for (k, (m, p)) in fair.iter().enumerate() {
        let cfg = NetworkConfig::new(*m, p.clone()).unwrap();
        let t = Instant::now();
        let r = solve_prop_fair(&cfg, &opts).unwrap();
        let secs = t.elapsed().as_secs_f64();
        w.add(format!("fairness case {k}"), &cfg, &r);
        let coarse = if p.len() == 2 { step } else { 1e-2 };
        let oracle = common::prop_fair_max(p, *m as f64, EPS, coarse, step);
        record(format!("fairness {k}"), r.objective, oracle, secs, true);
    }

    let ceilings: [(Vec<f64>, Vec<f64>); 3] = [
        (vec![0.8, 0.8], vec![2.5, 4.0]),
        (vec![0.8, 0.8, 0.8], vec![4.0, 5.0, 8.0]),
        (vec![0.8, 0.8, 0.8], vec![3.0, 3.0, 3.0]),
    ];
    for (k, (p, e)) in ceilings.iter().enumerate() {
        let cfg = NetworkConfig::new(1, p.clone()).unwrap();
        let t = Instant::now();
        let r = check_admission(&cfg, e, None, &opts).unwrap();
        let secs = t.elapsed().as_secs_f64();
        let lo: Vec<f64> = e.iter().zip(p).map(|(e, p)| (1.0 / ((2.0 * e - 1.0) * p)).max(EPS)).collect();
        let hi = vec![1.0 - EPS; p.len()];
        let (neg, _) = common::grid_min(&lo, &hi, 1.0, step, |y| -common::admission_margin(y, p, e));
        let oracle = -neg;
        let agree = r.feasible == (oracle >= -1e-12);
        let label = format!("admission {k} ({})", if r.feasible { "feasible" } else { "infeasible" });
        record(label, r.margin, oracle, secs, agree);
        if let Some(wit) = r.witness {
            w.points.push((format!("admission case {k}"), cfg.clone(), wit));
        }
    }
    outcome(pass, format!("rel err (tol 1e-3, 60s): {}", lines.join(", ")))
}

fn spot_checks() -> Outcome {
    let cfg = NetworkConfig::new(1, vec![1.0, 1.0]).unwrap();
    let opts = solver();
    let a = solve_min_aoi_hard(&cfg, &[0.0, 0.0], &opts).unwrap().objective;
    let b = solve_cost_soft(&cfg, &[0.7, 0.7], &Penalty::quadratic(), &opts).unwrap().objective;
    let c = solve_prop_fair(&cfg, &opts).unwrap().objective;
    let c_ref = 2.0 * (1.0f64 / 3.0).ln();
    outcome(
        (a - 3.0).abs() <= 1e-6 && (b - 3.08).abs() <= 1e-4 && (c - c_ref).abs() <= 1e-4,
        format!("min-aoi {a:.9}, cost {b:.9}, fairness {c:.9} (ref {c_ref:.9})"),
    )
}

fn cost_ordering() -> Outcome {
    let lambda = 1.5;
    let s = build_example2(6, 1, lambda, Example2Variant::LambdaSweep).unwrap();
    let sol = s.solve(&solver()).unwrap();
    let mut stats = Vec::new();
    for kind in [aoi_capacity::PolicyKind::Vwd, aoi_capacity::PolicyKind::MaxWeight] {
        let spec = s.policy(kind, sol.targets()).unwrap();
        let ens = run_ensemble(&s.network, &spec, s.horizon, 8, 400).unwrap();
        stats.push(ens.per_trace(|t| s.simulated_objective(t)));
    }
    let (v, vs) = stats[0];
    let (m, ms) = stats[1];
    let se = (vs * vs + ms * ms).sqrt();
    outcome(
        m - v > 3.0 * se,
        format!("lambda {lambda}: vwd {v:.4} +/- {vs:.4}, maxweight {m:.4} +/- {ms:.4}, gap {:.1} se", (m - v) / se),
    )
}

fn fairness_ordering() -> Outcome {
    let mut cfg = SweepConfig::new(SweepFamily::Ex3);
    cfg.n_traces = 8;
    cfg.base_seed = 500;
    let rep = run_sweep(&cfg).unwrap();
    let mut pass = true;
    let mut parts = Vec::new();
    for &m in &cfg.grid {
        let row = |name: &str| rep.rows.iter().find(|r| r.sweep_var == m && r.policy == name).unwrap();
        let (v, r) = (row("vwd"), row("random"));
        let se = (v.objective_se.powi(2) + r.objective_se.powi(2)).sqrt();
        let ok = if m as usize == cfg.n {
            (v.objective_mean - r.objective_mean).abs() <= 2.0 * se
        } else {
            v.objective_mean >= r.objective_mean - 2.0 * se
        };
        pass &= ok;
        parts.push(format!("M={m}: {:+.3}", v.objective_mean - r.objective_mean));
    }
    outcome(pass, format!("vwd - random utility: {}", parts.join(", ")))
}

fn admission_shape(w: &mut Witnesses) -> Outcome {
    let opts = solver();
    let fs: Vec<f64> = (0..10).map(|k| 6.0 + 2.0 * k as f64).collect();
    let mut gs = Vec::new();
    for &f in &fs {
        gs.push(admission_boundary(f, 1e3, 1e-2, &opts).unwrap());
    }
    let monotone = gs.windows(2).all(|g| match (g[0], g[1]) {
        (Some(a), Some(b)) => b <= a + 1e-2,
        (None, _) => true,
        (Some(_), None) => false,
    });
    let mut worst = f64::NEG_INFINITY;
    let mut worst_at = (0.0, 0);
    for (k, (&f, g)) in fs.iter().zip(&gs).enumerate() {
        let Some(g) = *g else { continue };
        let (s, r) = admission_interior(f, g, &opts).unwrap();
        let wit = r.witness.expect("tightened ceilings are on the boundary");
        w.points.push((format!("admission f = {f}"), s.network.clone(), wit.clone()));
        let ens = run_ensemble(&s.network, &PolicySpec::Vwd { targets: wit }, HORIZON, 4, 600 + 10 * k as u64).unwrap();
        let aoi_capacity::experiments::Problem::Admission { e } = &s.problem else { unreachable!() };
        for i in 0..10 {
            let excess = (ens.aoi[i].mean - e[i] - 2.0 * ens.aoi[i].se) / e[i];
            if excess > worst {
                worst = excess;
                worst_at = (f, i);
            }
        }
    }
    let gtxt: Vec<String> = gs.iter().map(|g| g.map_or("none".into(), |g| format!("{g:.2}"))).collect();
    outcome(
        monotone && worst <= 0.0,
        format!(
            "g*(f) = [{}] (monotone: {monotone}); max (aoi - e - 2se)/e = {worst:+.4} at f = {}, device {}",
            gtxt.join(", "),
            worst_at.0,
            worst_at.1
        ),
    )
}

fn cdf_fit(run: &Example1Run) -> Outcome {
    let t = &run.targets;
    let worst = (0..run.cfg.n())
        .max_by(|&i, &j| {
            let err = |k: usize| {
                let a = aoi_approx(t.mu[k], t.sigma2[k]).unwrap();
                (run.trace.emp_aoi[k] - a).abs() / a
            };
            err(i).total_cmp(&err(j))
        })
        .unwrap();
    let hist = &run.trace.interdelivery[worst];
    let emp = EmpiricalCdf::from_histogram(hist).unwrap();
    let x_max = hist.max_gap().unwrap();
    let ig = InverseGaussian::from_second_order(t.mu[worst], t.sigma2[worst]).unwrap();
    let gap = cdf_max_gap(|x: f64| emp.eval(x), |x| ig.cdf(x).unwrap(), x_max);

    // Diagnostic: the same comparison with the gap moments of the trace.
    let mean = hist.mean().unwrap();
    let var = hist.samples().map(|g| (g as f64 - mean).powi(2)).sum::<f64>() / hist.len() as f64;
    let moment = InverseGaussian::new(mean, mean.powi(3) / var).unwrap();
    let moment_gap = cdf_max_gap(|x: f64| emp.eval(x), |x| moment.cdf(x).unwrap(), x_max);
    outcome(
        gap <= 0.05,
        format!(
            "device {worst}: max gap {gap:.4} (tol 0.05); gap variance {var:.2} vs fitted {:.2}; \
             moment-matched gap {moment_gap:.4}",
            ig.variance()
        ),
    )
}

fn bound_consistency(w: &Witnesses) -> Outcome {
    let opts = CheckOptions::analytic().with_eps(EPS);
    let mut pass = !w.points.is_empty();
    let mut failures = Vec::new();
    for (label, cfg, point) in &w.points {
        let h: Vec<f64> = (0..point.len())
            .map(|i| aoi_approx(point.mu[i], point.sigma2[i]).unwrap())
            .collect();
        let pairs = TargetPairs::new(point.mu.clone(), h).unwrap();
        let rep = check_inner(&pairs, point, cfg, &opts).unwrap();
        if !rep.feasible {
            pass = false;
            failures.push(format!("{label}: inner rejects witness"));
        }
        for i in 0..point.len() {
            let mut bumped = point.clone();
            bumped.mu[i] += 10.0 * EPS;
            let outer = check_outer(&pairs, &bumped, cfg, &opts).unwrap().feasible;
            let inner = check_inner(&pairs, &bumped, cfg, &opts).unwrap().feasible;
            if outer || inner {
                pass = false;
                failures.push(format!("{label}: bump of device {i} accepted"));
            }
        }
    }
    outcome(
        pass,
        format!("{} witnesses checked{}", w.points.len(), if failures.is_empty() { String::new() } else { format!("; {}", failures.join("; ")) }),
    )
}

fn main() {
    let mut results: Vec<(usize, &str, Outcome, f64)> = Vec::new();
    let mut w = Witnesses::default();
    let mut run = |id: usize, name: &'static str, f: &mut dyn FnMut() -> Outcome| {
        let t = Instant::now();
        let o = f();
        let secs = t.elapsed().as_secs_f64();
        println!(
            "{} [{id:>2}] {name}: {} ({secs:.1}s)",
            if o.pass { "PASS" } else { "FAIL" },
            o.detail
        );
        results.push((id, name, o, secs));
    };

    let mut ex1 = None;
    run(1, "throughput attainment", &mut || throughput_attainment(ex1.insert(example1_run(&mut w))));
    let ex1 = ex1.unwrap();
    run(2, "variance attainment", &mut || variance_attainment(&ex1));
    run(3, "AoI approximation fidelity", &mut || aoi_fidelity(&mut w));
    let mut sym = Vec::new();
    run(4, "policy invariance of system variance", &mut || {
        sym = symmetric_ensembles();
        variance_invariance(&sym)
    });
    run(5, "martingale increments", &mut || martingale(&sym, &ex1));
    run(6, "solver vs grid search", &mut || solver_oracle(&mut w));
    run(7, "analytic spot checks", &mut spot_checks);
    run(8, "soft-cost ordering vs Max-Weight", &mut cost_ordering);
    run(9, "fairness ordering vs Random", &mut fairness_ordering);
    run(10, "admission region shape", &mut || admission_shape(&mut w));
    run(11, "inter-delivery CDF fit", &mut || cdf_fit(&ex1));
    run(12, "inner/outer bound consistency", &mut || bound_consistency(&w));

    let failed: Vec<usize> = results.iter().filter(|r| !r.2.pass).map(|r| r.0).collect();
    println!(
        "acceptance: {} passed, {} failed{}",
        results.len() - failed.len(),
        failed.len(),
        if failed.is_empty() { String::new() } else { format!(" ({failed:?})") }
    );
    if !failed.is_empty() && std::env::var("ACCEPTANCE_STRICT").is_ok_and(|v| v == "1") {
        std::process::exit(1);
    }
}
