//! Acceptance criteria 1 to 9. Each criterion prints one PASS/FAIL line;
//! the test fails at the end if any criterion failed.

mod common;

use std::collections::HashMap;
use std::io::Write;
use std::time::Instant;

use rand::Rng;
use rayon::prelude::*;
use star_alloc::convexkit::BarrierSettings;
use star_alloc::harness::{
    order_rule_trial, run_experiment, solve_scheme, AssignMethod, Experiment, ExperimentSpec, OrderRule, PipelineOptions,
    Scheme, Solution,
};
use star_alloc::harness::trial::is_trial_failure;
use star_alloc::matching::{self, snapshot_gains, Assignment, UtilityKind};
use star_alloc::noma::{gp_power, noma_rates, DecodingOrder};
use star_alloc::seed;
use star_alloc::starface::SurfaceMode;
use star_alloc::sysmodel::{Scenario, SystemConfig};

use common::*;

const BASE_SEED: u64 = 20_240;
const ORACLE_SEEDS: u64 = 50;
const TRIALS: usize = 50;
const TRIALS_M12: usize = 35;
const MIN_PAIRED: usize = 30;
const MONOTONE_TOL: f64 = 1e-9;
const BUDGET_SECS: f64 = 900.0;

fn say(line: &str) {
    let mut out = std::io::stdout().lock();
    let _ = writeln!(out, "{line}");
    let _ = out.flush();
}

#[derive(Default)]
struct Verdicts {
    failed: Vec<String>,
}

impl Verdicts {
    fn record(&mut self, id: usize, name: &str, pass: bool, detail: String) {
        let tag = if pass { "PASS" } else { "FAIL" };
        say(&format!("{tag} {id} {name}: {detail}"));
        if !pass {
            self.failed.push(format!("{id} {name}"));
        }
    }
}

/// What the criteria need from one pipeline run.
#[derive(Debug, Clone, Default)]
struct Outcome {
    sum_rate: Option<f64>,
    trace: Vec<f64>,
    converged_within: Option<usize>,
    violations: Vec<String>,
    gp_error: Option<f64>,
}

fn outcome(scenario: &Scenario, mode: SurfaceMode, res: star_alloc::Result<Solution>) -> Outcome {
    match res {
        Ok(sol) => {
            let v = sol.validate(scenario, mode);
            let (converged_within, gp_error) = match &sol {
                Solution::Oma(s) => (s.converged.then_some(s.iterations), None),
                Solution::Noma(s) => {
                    let err = s.rates.iter().zip(&s.gp.r).map(|(a, r)| (a - r.log2()).abs()).fold(0.0, f64::max);
                    (None, Some(err))
                }
            };
            Outcome {
                sum_rate: Some(sol.sum_rate()),
                trace: sol.trace().to_vec(),
                converged_within,
                violations: v.violations,
                gp_error,
            }
        }
        Err(e) if is_trial_failure(&e) => Outcome::default(),
        Err(e) => panic!("pipeline error: {e}"),
    }
}

fn desk_config(m: usize) -> SystemConfig {
    SystemConfig::with_dims(3, m)
}

fn scenario_at(cfg: &SystemConfig, t: usize) -> (Scenario, u64) {
    let s = seed::trial_seed(BASE_SEED, t);
    (Scenario::sample(cfg, s).unwrap(), s)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
enum Run {
    Scheme(Scheme, AssignMethod, SurfaceMode, usize, usize),
    Order(OrderRule, usize),
    Dominance(Scheme, AssignMethod, usize),
}

/// Every pipeline run of the suite, keyed by configuration, one outcome
/// per seed index.
#[derive(Default)]
struct Store {
    runs: HashMap<Run, Vec<Outcome>>,
}

impl Store {
    fn schemes(&mut self, scheme: Scheme, method: AssignMethod, mode: SurfaceMode, k: usize, m: usize, seeds: std::ops::Range<usize>) {
        let cfg = SystemConfig::with_dims(k, m);
        let opts = PipelineOptions::default();
        let out: Vec<Outcome> = seeds
            .into_par_iter()
            .map(|t| {
                let (sc, s) = scenario_at(&cfg, t);
                outcome(&sc, mode, solve_scheme(&sc, scheme, method, mode, &opts, s))
            })
            .collect();
        let key = Run::Scheme(scheme, method, mode, k, m);
        self.runs.entry(key).or_default().extend(out);
    }

    fn orders(&mut self, m: usize, n: usize, rules: &[OrderRule]) {
        let spec = ExperimentSpec::new(Experiment::DecodingOrders, desk_config(m));
        let per_seed: Vec<Vec<(OrderRule, Outcome)>> = (0..n)
            .into_par_iter()
            .map(|t| {
                let (sc, s) = scenario_at(&spec.config, t);
                order_rule_trial(&sc, &spec, s, rules)
                    .unwrap()
                    .into_iter()
                    .map(|(r, res)| (r, outcome(&sc, SurfaceMode::Star, res)))
                    .collect()
            })
            .collect();
        for row in per_seed {
            for (r, o) in row {
                self.runs.entry(Run::Order(r, m)).or_default().push(o);
            }
        }
    }

    fn rates(&self, run: Run) -> Vec<Option<f64>> {
        self.runs[&run].iter().map(|o| o.sum_rate).collect()
    }

    fn all(&self) -> impl Iterator<Item = &Outcome> {
        self.runs.values().flatten()
    }
}

struct Paired {
    n: usize,
    mean_x: f64,
    mean_y: f64,
    t: f64,
    against: Vec<usize>,
}

impl Paired {
    fn new(xs: &[Option<f64>], ys: &[Option<f64>]) -> Self {
        let pairs: Vec<(usize, f64, f64)> = xs
            .iter()
            .zip(ys)
            .enumerate()
            .filter_map(|(i, (x, y))| Some((i, (*x)?, (*y)?)))
            .collect();
        let n = pairs.len();
        let mean = |f: &dyn Fn(&(usize, f64, f64)) -> f64| pairs.iter().map(f).sum::<f64>() / n.max(1) as f64;
        let mean_x = mean(&|p| p.1);
        let mean_y = mean(&|p| p.2);
        let md = mean_x - mean_y;
        let var = pairs.iter().map(|p| (p.1 - p.2 - md).powi(2)).sum::<f64>() / (n.max(2) - 1) as f64;
        let t = if var > 0.0 { md / (var / n as f64).sqrt() } else { f64::INFINITY * md.signum() };
        let against = pairs.iter().filter(|p| p.1 < p.2).map(|p| p.0).collect();
        Self { n, mean_x, mean_y, t, against }
    }

    fn holds(&self, strict: bool) -> bool {
        self.n >= MIN_PAIRED && if strict { self.mean_x > self.mean_y } else { self.mean_x >= self.mean_y }
    }

    fn describe(&self, claim: &str) -> String {
        let seeds = if self.against.is_empty() {
            String::new()
        } else {
            format!(" reversed at seeds {:?}", self.against)
        };
        format!("{claim}: n={} {:.4} vs {:.4} t={:.2}{seeds}", self.n, self.mean_x, self.mean_y, self.t)
    }
}

fn criterion_oracles(v: &mut Verdicts) {
    let started = Instant::now();
    let seeds: Vec<u64> = (0..ORACLE_SEEDS).collect();
    let worst = |cs: Vec<Comparison>| -> (f64, usize) {
        let mismatched = cs.iter().filter(|c| c.gap().is_none()).count();
        (cs.iter().filter_map(|c| c.gap()).fold(0.0, f64::max), mismatched)
    };
    let (wf, wf_m) = worst(seeds.par_iter().map(|&s| water_filling_case(s)).collect());
    let (pt, pt_m) = worst(seeds.par_iter().map(|&s| power_time_case(s)).collect());
    let (gp, gp_m) = worst(seeds.par_iter().map(|&s| noma_power_case(s)).collect());
    let sdp: Vec<(f64, f64)> = seeds.par_iter().map(|&s| relaxation_case(s)).collect();
    let below = sdp.iter().filter(|(r, b)| *r < b * (1.0 - 1e-6)).count();
    let sdp_gap = sdp.iter().map(|(r, b)| (r - b) / b).fold(0.0, f64::max);
    let secs = started.elapsed().as_secs_f64();
    let pass = wf < 1e-3
        && wf_m == 0
        && pt < 1e-3
        && pt_m == 0
        && gp < 1e-2
        && gp_m == 0
        && below == 0
        && sdp_gap < 1e-2
        && secs < 300.0;
    v.record(
        1,
        "solver-oracle equivalence",
        pass,
        format!(
            "{ORACLE_SEEDS} seeds each; water-filling gap {wf:.2e}, power-time gap {pt:.2e} ({pt_m} feasibility mismatches), \
             GP gap {gp:.2e} ({gp_m} mismatches), relaxation below brute force {below}, relaxation gap {sdp_gap:.2e}, {secs:.1}s"
        ),
    );
}

fn non_decreasing(trace: &[f64]) -> bool {
    trace.windows(2).all(|w| w[1] >= w[0] - MONOTONE_TOL)
}

fn criterion_monotone(v: &mut Verdicts, store: &Store) {
    let ao = &store.runs[&Run::Scheme(Scheme::Oma, AssignMethod::Swap, SurfaceMode::Star, 3, 8)];
    let mut cub: Vec<&Outcome> = store.runs[&Run::Order(OrderRule::Proposed, 8)].iter().collect();
    cub.extend(&store.runs[&Run::Scheme(Scheme::Noma, AssignMethod::Lma, SurfaceMode::Star, 3, 8)]);
    let ao_feasible: Vec<&Outcome> = ao.iter().filter(|o| o.sum_rate.is_some()).collect();
    let cub_feasible: Vec<&Outcome> = cub.iter().copied().filter(|o| o.sum_rate.is_some()).collect();
    let ao_bad = ao_feasible.iter().filter(|o| !non_decreasing(&o.trace)).count();
    let cub_bad = cub_feasible.iter().filter(|o| !non_decreasing(&o.trace)).count();
    let within = ao.iter().filter(|o| o.converged_within.is_some_and(|it| it <= 10)).count();
    let frac = within as f64 / ao.len() as f64;
    let pass = ao.len() >= 100 && cub.len() >= 100 && ao_bad == 0 && cub_bad == 0 && frac >= 0.9;
    v.record(
        2,
        "monotonicity",
        pass,
        format!(
            "AO {} instances ({} feasible), {ao_bad} non-monotone, {within} converged within 10 iterations ({:.0}%); \
             CUB {} instances ({} feasible), {cub_bad} non-monotone",
            ao.len(),
            ao_feasible.len(),
            100.0 * frac,
            cub.len(),
            cub_feasible.len()
        ),
    );
}

fn criterion_feasibility(v: &mut Verdicts, store: &Store) {
    let solved: Vec<&Outcome> = store.all().filter(|o| o.sum_rate.is_some()).collect();
    let bad: Vec<&String> = solved.iter().flat_map(|o| &o.violations).collect();
    let first = bad.first().map(|s| format!("; first: {s}")).unwrap_or_default();
    v.record(
        3,
        "feasibility invariants",
        bad.is_empty() && !solved.is_empty(),
        format!("{} returned solutions validated, {} violations{first}", solved.len(), bad.len()),
    );
}

fn criterion_gp_identity(v: &mut Verdicts, store: &Store) {
    let a = Assignment::from_pairs(vec![vec![0, 1], vec![2, 3], vec![4, 5]], 6).unwrap();
    let mut r = rng(seed::derive(BASE_SEED, &[seed::tag("gp-identity")]));
    let mut worst: f64 = 0.0;
    let mut solved = 0;
    let mut attempts = 0;
    while solved < 100 && attempts < 1000 {
        attempts += 1;
        let g: Vec<f64> = (0..6).map(|_| gain(&mut r, 0.2, 200.0)).collect();
        let order = DecodingOrder::from_mask(&a, r.random::<u64>() & 7).unwrap();
        let qos = 0.3 * r.random::<f64>();
        if let Ok((p, nr, _)) = gp_power(&order, &g, 1.5, qos, &BarrierSettings::default()) {
            let rates = noma_rates(&order, &p, &g);
            worst = rates.iter().zip(&nr.r).map(|(x, r)| (x - r.log2()).abs()).fold(worst, f64::max);
            solved += 1;
        }
    }
    let pipeline: Vec<f64> = store.all().filter_map(|o| o.gp_error).collect();
    let pipe_worst = pipeline.iter().cloned().fold(0.0, f64::max);
    v.record(
        4,
        "GP recovery identity",
        solved == 100 && worst < 1e-8 && pipe_worst < 1e-8,
        format!(
            "{solved} random instances, max error {worst:.2e}; {} pipeline solutions, max error {pipe_worst:.2e}",
            pipeline.len()
        ),
    );
}

fn criterion_stability(v: &mut Verdicts) {
    let cfg = desk_config(8);
    let rows: Vec<(usize, usize, bool)> = (0..TRIALS)
        .into_par_iter()
        .map(|t| {
            let (sc, _) = scenario_at(&cfg, t);
            let regions = &sc.layout.regions;
            let power = sc.config.p_max / sc.config.num_users as f64;
            let mut blocking = 0;
            let mut paired = true;
            for (kind, noma) in [(UtilityKind::Noma, true), (UtilityKind::Oma, false)] {
                let out = matching::lma(&sc, SurfaceMode::Star, kind).unwrap();
                let g = snapshot_gains(&sc, &out.coeffs);
                blocking += scan_blocking(&g, regions, power, noma, &out.assignment, true).len();
                paired &= out.assignment.is_tr_paired(regions);
            }
            let out = matching::swap_oma(&sc, SurfaceMode::Star).unwrap();
            let g = snapshot_gains(&sc, &out.coeffs);
            let swap_blocking = scan_blocking(&g, regions, power, false, &out.assignment, false).len();
            (blocking, swap_blocking, paired)
        })
        .collect();
    let lma_blocking: usize = rows.iter().map(|r| r.0).sum();
    let swap_blocking: usize = rows.iter().map(|r| r.1).sum();
    let unpaired = rows.iter().filter(|r| !r.2).count();
    v.record(
        5,
        "matching stability",
        lma_blocking == 0 && swap_blocking == 0 && unpaired == 0,
        format!(
            "{TRIALS} scenarios; LMA same-region blocking pairs {lma_blocking}, swap blocking pairs {swap_blocking}, \
             LMA outputs not T-R paired {unpaired}"
        ),
    );
}

fn criterion_claims(v: &mut Verdicts, store: &Store, dominance: &[(usize, &'static str, f64, f64)]) {
    let mut lines = Vec::new();
    let mut pass = true;
    let mut claim = |p: Paired, strict: bool, text: String| {
        pass &= p.holds(strict);
        lines.push(p.describe(&text));
    };
    let noma = |mode, m| {
        if mode == SurfaceMode::Star {
            Run::Order(OrderRule::Proposed, m)
        } else {
            Run::Scheme(Scheme::Noma, AssignMethod::Lma, mode, 3, m)
        }
    };
    let oma = |mode, m| Run::Scheme(Scheme::Oma, AssignMethod::Swap, mode, 3, m);
    for mode in [SurfaceMode::Star, SurfaceMode::ConventionalPair] {
        for (name, run) in [("NOMA", &noma as &dyn Fn(SurfaceMode, usize) -> Run), ("OMA", &oma)] {
            for (lo, hi) in [(4, 8), (8, 12)] {
                claim(
                    Paired::new(&store.rates(run(mode, hi)), &store.rates(run(mode, lo))),
                    true,
                    format!("{mode:?}-{name} M={hi} > M={lo}"),
                );
            }
        }
    }
    for m in [4, 8, 12] {
        claim(Paired::new(&store.rates(noma(SurfaceMode::Star, m)), &store.rates(oma(SurfaceMode::Star, m))), false, format!("STAR NOMA >= OMA at M={m}"));
        for (name, run) in [("NOMA", &noma as &dyn Fn(SurfaceMode, usize) -> Run), ("OMA", &oma)] {
            claim(
                Paired::new(&store.rates(run(SurfaceMode::Star, m)), &store.rates(run(SurfaceMode::ConventionalPair, m))),
                false,
                format!("{name} STAR >= CR at M={m}"),
            );
        }
        claim(
            Paired::new(&store.rates(noma(SurfaceMode::Star, m)), &store.rates(Run::Scheme(Scheme::Noma, AssignMethod::Sma, SurfaceMode::Star, 3, m))),
            false,
            format!("NOMA LMA >= SMA at M={m}"),
        );
        let random = store.rates(Run::Order(OrderRule::Random, m));
        for rule in [OrderRule::Proposed, OrderRule::Cascaded, OrderRule::Exhaustive] {
            if let Some(x) = store.runs.get(&Run::Order(rule, m)) {
                let xs: Vec<Option<f64>> = x.iter().map(|o| o.sum_rate).collect();
                claim(Paired::new(&xs, &random), true, format!("{rule} orders > random at M={m}"));
            }
        }
    }
    let violations: Vec<String> = dominance
        .iter()
        .filter(|d| d.3 > d.2 + 1e-9)
        .map(|d| format!("seed {} {} {:.6} > exhaustive {:.6}", d.0, d.1, d.3, d.2))
        .collect();
    let trials: std::collections::BTreeSet<usize> = dominance.iter().map(|d| d.0).collect();
    pass &= violations.is_empty() && trials.len() >= MIN_PAIRED;
    lines.push(format!(
        "exhaustive assignment dominates heuristics trial-wise: {} trials, {} comparisons, violations {:?}",
        trials.len(),
        dominance.len(),
        violations
    ));
    v.record(6, "qualitative claims", pass, format!("{} claims", lines.len()));
    for l in lines {
        say(&format!("    {l}"));
    }
}

/// `(seed index, method, exhaustive sum-rate, heuristic sum-rate)` for
/// every trial and heuristic where both are feasible.
fn dominance_rows(scheme: Scheme, k: usize, m: usize, store: &mut Store) -> Vec<(usize, &'static str, f64, f64)> {
    let methods = [AssignMethod::Exhaustive, AssignMethod::Lma, AssignMethod::Sma, AssignMethod::Swap];
    let mut local = Store::default();
    for method in methods {
        local.schemes(scheme, method, SurfaceMode::Star, k, m, 0..MIN_PAIRED);
    }
    for (key, outs) in local.runs {
        if let Run::Scheme(_, method, _, _, _) = key {
            store.runs.insert(Run::Dominance(scheme, method, k), outs);
        }
    }
    let ex = store.rates(Run::Dominance(scheme, AssignMethod::Exhaustive, k));
    let mut rows = Vec::new();
    for method in &methods[1..] {
        for (t, h) in store.rates(Run::Dominance(scheme, *method, k)).into_iter().enumerate() {
            if let Some(h) = h {
                rows.push((t, method.as_str(), ex[t].unwrap_or(f64::NEG_INFINITY), h));
            }
        }
    }
    rows
}

fn criterion_order_quality(v: &mut Verdicts, store: &Store) {
    let p = Paired::new(&store.rates(Run::Order(OrderRule::Exhaustive, 8)), &store.rates(Run::Order(OrderRule::Proposed, 8)));
    let rel = (p.mean_x - p.mean_y) / p.mean_x;
    v.record(
        7,
        "decoding-order quality",
        p.n >= 50 && rel <= 0.03,
        format!("M=8, {} seeds: proposed {:.4} vs exhaustive {:.4} ({:.2}% below)", p.n, p.mean_y, p.mean_x, 100.0 * rel),
    );
}

fn criterion_determinism(v: &mut Verdicts) {
    let mut mismatched = Vec::new();
    for exp in Experiment::ALL {
        let mut spec = ExperimentSpec::new(*exp, SystemConfig::with_dims(2, 4));
        spec.trials = 2;
        spec.seed = BASE_SEED;
        if *exp == Experiment::SumrateVsM {
            spec.sweep = vec![2.0, 4.0];
        }
        for scheme in [Scheme::Oma, Scheme::Noma] {
            if *exp == Experiment::DecodingOrders && scheme == Scheme::Oma {
                continue;
            }
            spec.scheme = scheme;
            let a = run_experiment(&spec).unwrap();
            let b = run_experiment(&spec).unwrap();
            if a.payload() != b.payload() || a.payload().is_empty() {
                mismatched.push(format!("{exp}/{scheme}"));
            }
        }
    }
    v.record(8, "determinism", mismatched.is_empty(), format!("9 experiment/scheme pairs run twice, mismatched {mismatched:?}"));
}

#[test]
fn acceptance_criteria() {
    let started = Instant::now();
    let mut v = Verdicts::default();
    criterion_oracles(&mut v);

    let mut store = Store::default();
    let stage = |name: &str| say(&format!("    {name} done at {:.1}s", started.elapsed().as_secs_f64()));
    store.orders(8, TRIALS, OrderRule::ALL);
    stage("decoding orders M=8");
    store.orders(4, TRIALS, &[OrderRule::Proposed, OrderRule::Random, OrderRule::Cascaded]);
    stage("decoding orders M=4");
    store.orders(12, TRIALS_M12, &[OrderRule::Proposed, OrderRule::Random]);
    stage("decoding orders M=12");
    store.schemes(Scheme::Noma, AssignMethod::Lma, SurfaceMode::Star, 3, 8, TRIALS..2 * TRIALS);
    stage("extra NOMA M=8");
    for (m, n) in [(4, TRIALS), (8, 2 * TRIALS), (12, TRIALS_M12)] {
        store.schemes(Scheme::Oma, AssignMethod::Swap, SurfaceMode::Star, 3, m, 0..n);
        store.schemes(Scheme::Oma, AssignMethod::Swap, SurfaceMode::ConventionalPair, 3, m, 0..n.min(TRIALS));
        stage(&format!("OMA M={m}"));
        store.schemes(Scheme::Noma, AssignMethod::Lma, SurfaceMode::ConventionalPair, 3, m, 0..n.min(TRIALS));
        stage(&format!("conventional NOMA M={m}"));
        store.schemes(Scheme::Noma, AssignMethod::Sma, SurfaceMode::Star, 3, m, 0..n.min(TRIALS));
        stage(&format!("SMA NOMA M={m}"));
    }
    let mut dominance = dominance_rows(Scheme::Oma, 3, 4, &mut store);
    stage("OMA exhaustive assignment");
    dominance.extend(dominance_rows(Scheme::Noma, 2, 4, &mut store));
    stage("NOMA exhaustive assignment");

    criterion_monotone(&mut v, &store);
    criterion_feasibility(&mut v, &store);
    criterion_gp_identity(&mut v, &store);
    criterion_stability(&mut v);
    criterion_claims(&mut v, &store, &dominance);
    criterion_order_quality(&mut v, &store);
    criterion_determinism(&mut v);

    let secs = started.elapsed().as_secs_f64();
    v.record(
        9,
        "end-to-end budget",
        secs < BUDGET_SECS,
        format!("{secs:.1}s on {} worker threads (limit {BUDGET_SECS:.0}s)", rayon::current_num_threads()),
    );
    assert!(v.failed.is_empty(), "failed criteria: {:?}", v.failed);
}
