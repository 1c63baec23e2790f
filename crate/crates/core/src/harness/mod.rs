//! Monte-Carlo experiments and CSV output.
//!
//! Every experiment runs its trials in parallel, writes rows in trial order
//! and ends with `# summary` comment lines. The second line of the file is
//! a generation timestamp; all other bytes depend only on the spec.

pub mod trial;

use std::fmt::{self, Write as _};
use std::str::FromStr;

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::matching;
use crate::noma::{self, DecodingOrder};
use crate::seed;
use crate::starface::SurfaceMode;
use crate::sysmodel::{Scenario, SystemConfig};

pub use trial::{solve_assigned, solve_scheme, PipelineOptions, Solution};

pub const VERSION: &str = env!("CARGO_PKG_VERSION");

macro_rules! string_enum {
    ($name:ident { $($variant:ident => $text:literal),+ $(,)? }) => {
        #[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
        pub enum $name { $($variant),+ }

        impl $name {
            pub const ALL: &'static [$name] = &[$($name::$variant),+];

            pub fn as_str(self) -> &'static str {
                match self { $($name::$variant => $text),+ }
            }
        }

        impl FromStr for $name {
            type Err = Error;
            fn from_str(s: &str) -> Result<Self> {
                match s {
                    $($text => Ok($name::$variant),)+
                    other => Err(Error::Config(format!(
                        concat!("unknown ", stringify!($name), " {:?}"), other
                    ))),
                }
            }
        }

        impl fmt::Display for $name {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str(self.as_str())
            }
        }
    };
}

string_enum!(Experiment {
    Convergence => "convergence",
    SumrateVsM => "sumrate_vs_M",
    CdfAssignment => "cdf_assignment",
    DecodingOrders => "decoding_orders",
    AmplitudeProfile => "amplitude_profile",
});

string_enum!(Scheme {
    Oma => "oma",
    Noma => "noma",
});

string_enum!(AssignMethod {
    Swap => "swap",
    Lma => "lma",
    Sma => "sma",
    Exhaustive => "exhaustive",
});

string_enum!(SweepAxis {
    Elements => "M",
    PMax => "p_max",
    Qos => "qos",
});

string_enum!(OrderRule {
    Proposed => "proposed",
    Exhaustive => "exhaustive",
    Random => "random",
    Cascaded => "cascaded",
});

#[derive(Debug, Clone)]
pub struct ExperimentSpec {
    pub experiment: Experiment,
    pub scheme: Scheme,
    pub assign: AssignMethod,
    pub surface: SurfaceMode,
    pub sweep_axis: SweepAxis,
    /// Empty means a single run at the base configuration.
    pub sweep: Vec<f64>,
    pub trials: usize,
    pub seed: u64,
    pub config: SystemConfig,
    pub pipeline: PipelineOptions,
    /// Adds a wall-clock column (not reproducible).
    pub timing: bool,
}

impl ExperimentSpec {
    pub fn new(experiment: Experiment, config: SystemConfig) -> Self {
        Self {
            experiment,
            scheme: Scheme::Noma,
            assign: AssignMethod::Lma,
            surface: SurfaceMode::Star,
            sweep_axis: SweepAxis::Elements,
            sweep: if experiment == Experiment::SumrateVsM {
                vec![4.0, 8.0, 12.0]
            } else {
                Vec::new()
            },
            trials: 30,
            seed: config.rng_seed,
            config,
            pipeline: PipelineOptions::default(),
            timing: false,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.trials == 0 {
            return Err(Error::Config("trial count must be at least 1".into()));
        }
        if self.sweep.iter().any(|v| !(*v > 0.0)) {
            return Err(Error::Config("sweep values must be positive".into()));
        }
        if self.sweep_axis == SweepAxis::Elements && self.sweep.iter().any(|v| v.fract() != 0.0) {
            return Err(Error::Config("element counts must be integers".into()));
        }
        if self.experiment == Experiment::DecodingOrders && self.scheme != Scheme::Noma {
            return Err(Error::Config("decoding_orders needs the noma scheme".into()));
        }
        let mut cfg = self.config.clone();
        for p in self.points() {
            cfg = self.config_at(p);
            cfg.validate()?;
            self.surface.validate(cfg.num_elements)?;
        }
        cfg.validate()?;
        if (matches!(self.experiment, Experiment::CdfAssignment) || self.assign == AssignMethod::Exhaustive)
            && cfg.num_users > matching::EXHAUSTIVE_MAX_USERS {
                return Err(Error::Guard(format!(
                    "exhaustive assignment supports at most {} users",
                    matching::EXHAUSTIVE_MAX_USERS
                )));
            }
        if self.experiment == Experiment::DecodingOrders && cfg.num_subchannels > noma::EXHAUSTIVE_ORDER_MAX_K {
            return Err(Error::Guard(format!(
                "exhaustive decoding orders support K <= {}",
                noma::EXHAUSTIVE_ORDER_MAX_K
            )));
        }
        Ok(())
    }

    fn points(&self) -> Vec<Option<f64>> {
        if self.sweep.is_empty() {
            vec![None]
        } else {
            self.sweep.iter().map(|v| Some(*v)).collect()
        }
    }

    fn config_at(&self, point: Option<f64>) -> SystemConfig {
        let mut cfg = self.config.clone();
        if let Some(v) = point {
            match self.sweep_axis {
                SweepAxis::Elements => cfg.num_elements = v as usize,
                SweepAxis::PMax => cfg.p_max = v,
                SweepAxis::Qos => cfg.qos_rate = v,
            }
        }
        cfg
    }
}

/// Outcome of one trial of one method.
#[derive(Debug, Clone)]
pub struct TrialRecord {
    pub trial: usize,
    pub seed: u64,
    pub sweep_value: Option<f64>,
    pub label: String,
    pub feasible: bool,
    pub rates: Vec<f64>,
    pub sum_rate: f64,
    pub iterations: usize,
    pub trace: Vec<f64>,
    pub note: String,
    pub wall_ms: f64,
    pub coeffs_csv: Option<String>,
}

impl TrialRecord {
    #[allow(clippy::too_many_arguments)]
    fn from_result(
        trial: usize,
        seed: u64,
        sweep_value: Option<f64>,
        label: String,
        scenario: &Scenario,
        mode: SurfaceMode,
        result: Result<Solution>,
        started: std::time::Instant,
    ) -> Result<Self> {
        let mut rec = TrialRecord {
            trial,
            seed,
            sweep_value,
            label,
            feasible: false,
            rates: Vec::new(),
            sum_rate: f64::NAN,
            iterations: 0,
            trace: Vec::new(),
            note: String::new(),
            wall_ms: 0.0,
            coeffs_csv: None,
        };
        match result {
            Ok(sol) => {
                let check = sol.validate(scenario, mode);
                rec.rates = sol.rates().to_vec();
                rec.sum_rate = rec.rates.iter().sum();
                rec.iterations = sol.iterations();
                rec.trace = sol.trace().to_vec();
                rec.coeffs_csv = Some(sol.coeffs().to_csv());
                if check.ok() {
                    rec.feasible = true;
                } else {
                    rec.note = format!("validation: {}", check.violations.join("; "));
                }
            }
            Err(e) if trial::is_trial_failure(&e) => rec.note = e.to_string(),
            Err(e) => return Err(e),
        }
        rec.wall_ms = started.elapsed().as_secs_f64() * 1e3;
        Ok(rec)
    }
}

/// All records of an experiment plus the rendered CSV.
#[derive(Debug, Clone)]
pub struct Dataset {
    pub records: Vec<TrialRecord>,
    pub csv: String,
}

impl Dataset {
    /// CSV without the timestamp line, for reproducibility checks.
    pub fn payload(&self) -> String {
        strip_timestamp(&self.csv)
    }

    pub fn feasible(&self, label: &str) -> Vec<&TrialRecord> {
        self.records.iter().filter(|r| r.feasible && r.label == label).collect()
    }
}

pub fn strip_timestamp(csv: &str) -> String {
    csv.lines()
        .filter(|l| !l.starts_with("# generated"))
        .flat_map(|l| [l, "\n"])
        .collect()
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map_or(String::new(), |x| format!("{x}"))
}

fn header(spec: &ExperimentSpec) -> String {
    let mut s = format!("# star-alloc v{VERSION} experiment={}\n", spec.experiment);
    let stamp = std::time::SystemTime::now()
        .duration_since(std::time::UNIX_EPOCH)
        .map_or(0, |d| d.as_secs());
    let _ = writeln!(s, "# generated unix={stamp}");
    let c = &spec.config;
    let _ = writeln!(
        s,
        "# scheme={} assign={} surface={} trials={} seed={} K={} I={} M={} p_max={} qos={} noise_power={} sweep_axis={}",
        spec.scheme,
        spec.assign,
        spec.surface,
        spec.trials,
        spec.seed,
        c.num_subchannels,
        c.num_users,
        c.num_elements,
        c.p_max,
        c.qos_rate,
        c.noise_power,
        spec.sweep_axis
    );
    s
}

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

fn summary_lines(records: &[TrialRecord], key: impl Fn(&TrialRecord) -> String, out: &mut String) {
    let mut keys: Vec<String> = Vec::new();
    for r in records {
        let k = key(r);
        if !keys.contains(&k) {
            keys.push(k);
        }
    }
    for k in keys {
        let group: Vec<&TrialRecord> = records.iter().filter(|r| key(r) == k).collect();
        let ok: Vec<f64> = group.iter().filter(|r| r.feasible).map(|r| r.sum_rate).collect();
        let m = if ok.is_empty() { f64::NAN } else { mean(&ok) };
        let _ = writeln!(
            out,
            "# summary {k} mean_sum_rate={m} feasible={} infeasible={}",
            ok.len(),
            group.len() - ok.len()
        );
    }
}

fn group_key(r: &TrialRecord) -> String {
    match r.sweep_value {
        Some(v) => format!("sweep={v} method={}", r.label),
        None => format!("method={}", r.label),
    }
}

fn rates_field(r: &TrialRecord) -> String {
    r.rates.iter().map(|v| format!("{v}")).collect::<Vec<_>>().join(";")
}

type Job = (usize, Option<f64>);

fn jobs(spec: &ExperimentSpec) -> Vec<Job> {
    let mut out = Vec::new();
    for p in spec.points() {
        for t in 0..spec.trials {
            out.push((t, p));
        }
    }
    out
}

fn scenario_for(spec: &ExperimentSpec, job: Job) -> Result<(Scenario, u64)> {
    let cfg = spec.config_at(job.1);
    let s = seed::trial_seed(spec.seed, job.0);
    Ok((Scenario::sample(&cfg, s)?, s))
}

/// Runs one method per trial (convergence, sum-rate sweeps, amplitudes).
fn single_method(spec: &ExperimentSpec, label: &str) -> Result<Vec<TrialRecord>> {
    let results: Vec<Result<TrialRecord>> = jobs(spec)
        .into_par_iter()
        .map(|job| {
            let started = std::time::Instant::now();
            let (scenario, s) = scenario_for(spec, job)?;
            let res = solve_scheme(&scenario, spec.scheme, spec.assign, spec.surface, &spec.pipeline, s);
            TrialRecord::from_result(job.0, s, job.1, label.to_string(), &scenario, spec.surface, res, started)
        })
        .collect();
    results.into_iter().collect()
}

fn cdf_records(spec: &ExperimentSpec) -> Result<Vec<TrialRecord>> {
    let methods = [AssignMethod::Lma, AssignMethod::Sma, AssignMethod::Exhaustive, AssignMethod::Swap];
    let mut all_jobs = Vec::new();
    for job in jobs(spec) {
        for m in methods {
            all_jobs.push((job, m));
        }
    }
    let results: Vec<Result<TrialRecord>> = all_jobs
        .into_par_iter()
        .map(|(job, method)| {
            let started = std::time::Instant::now();
            let (scenario, s) = scenario_for(spec, job)?;
            let res = solve_scheme(&scenario, spec.scheme, method, spec.surface, &spec.pipeline, s);
            TrialRecord::from_result(job.0, s, job.1, method.to_string(), &scenario, spec.surface, res, started)
        })
        .collect();
    results.into_iter().collect()
}

/// Sum-rates of the NOMA pipeline under each decoding-order rule on one
/// trial; steps 2 and 3 restart from the step-1 coefficients every time.
pub fn order_rule_trial(
    scenario: &Scenario,
    spec: &ExperimentSpec,
    trial_seed: u64,
    rules: &[OrderRule],
) -> Result<Vec<(OrderRule, Result<Solution>)>> {
    let mode = spec.surface;
    let lm = match spec.assign {
        AssignMethod::Sma => matching::sma(scenario, mode, matching::UtilityKind::Noma)?,
        _ => matching::lma(scenario, mode, matching::UtilityKind::Noma)?,
    };
    let a = &lm.assignment;
    let initial = &lm.coeffs;
    let opts = spec.pipeline.noma(scenario);
    let step1 = match noma::proposed_orders(scenario, a, initial, mode, &opts, trial_seed) {
        Ok(s) => s,
        Err(e) if trial::is_trial_failure(&e) => {
            return Ok(rules
                .iter()
                .map(|r| (*r, Err(Error::Infeasible(format!("step 1 failed: {e}")))))
                .collect())
        }
        Err(e) => return Err(e),
    };
    let run = |order: &DecodingOrder| -> Result<Solution> {
        noma::noma_with_order(scenario, a, order, &step1.coeffs, initial, mode, &opts, trial_seed).map(Solution::Noma)
    };
    let proposed = run(&step1.order);
    let mut out = Vec::with_capacity(rules.len());
    for rule in rules {
        let res = match rule {
            OrderRule::Proposed => match &proposed {
                Ok(s) => Ok(s.clone()),
                Err(e) => Err(Error::Infeasible(e.to_string())),
            },
            OrderRule::Exhaustive => {
                let mut best: Option<Solution> = None;
                for order in DecodingOrder::all(a)? {
                    let r = if order == step1.order { proposed.as_ref().ok().cloned() } else { run(&order).ok() };
                    if let Some(s) = r {
                        if best.as_ref().is_none_or(|b| s.sum_rate() > b.sum_rate()) {
                            best = Some(s);
                        }
                    }
                }
                best.ok_or_else(|| Error::Infeasible("no feasible decoding order".into()))
            }
            OrderRule::Random => {
                let mut rng = seed::rng(seed::derive(trial_seed, &[seed::tag("random-order")]));
                let mask = rand::Rng::random::<u64>(&mut rng) & ((1u64 << a.num_subchannels()) - 1);
                run(&DecodingOrder::from_mask(a, mask)?)
            }
            OrderRule::Cascaded => run(&noma::cascaded_orders(scenario, a, initial)?),
        };
        out.push((*rule, res));
    }
    Ok(out)
}

fn order_records(spec: &ExperimentSpec) -> Result<Vec<TrialRecord>> {
    let results: Vec<Result<Vec<TrialRecord>>> = jobs(spec)
        .into_par_iter()
        .map(|job| {
            let started = std::time::Instant::now();
            let (scenario, s) = scenario_for(spec, job)?;
            order_rule_trial(&scenario, spec, s, OrderRule::ALL)?
                .into_iter()
                .map(|(rule, res)| {
                    TrialRecord::from_result(job.0, s, job.1, rule.to_string(), &scenario, spec.surface, res, started)
                })
                .collect()
        })
        .collect();
    Ok(results.into_iter().collect::<Result<Vec<_>>>()?.into_iter().flatten().collect())
}

/// Executes an experiment and renders its CSV.
pub fn run_experiment(spec: &ExperimentSpec) -> Result<Dataset> {
    spec.validate()?;
    let mut csv = header(spec);
    let timing_col = if spec.timing { ",wall_ms" } else { "" };
    let wall = |r: &TrialRecord| if spec.timing { format!(",{:.3}", r.wall_ms) } else { String::new() };
    let records = match spec.experiment {
        Experiment::Convergence => {
            let recs = single_method(spec, spec.assign.as_str())?;
            let _ = writeln!(csv, "sweep_value,trial,seed,feasible,iteration,sum_rate{timing_col}");
            for r in &recs {
                if r.trace.is_empty() {
                    let _ = writeln!(csv, "{},{},{},{},,{}", fmt_opt(r.sweep_value), r.trial, r.seed, r.feasible, wall(r));
                }
                for (it, v) in r.trace.iter().enumerate() {
                    let _ = writeln!(
                        csv,
                        "{},{},{},{},{},{}{}",
                        fmt_opt(r.sweep_value),
                        r.trial,
                        r.seed,
                        r.feasible,
                        it,
                        v,
                        wall(r)
                    );
                }
            }
            recs
        }
        Experiment::SumrateVsM => {
            let recs = single_method(spec, spec.assign.as_str())?;
            let _ = writeln!(csv, "sweep_value,trial,seed,feasible,iterations,sum_rate,rates,note{timing_col}");
            for r in &recs {
                let _ = writeln!(
                    csv,
                    "{},{},{},{},{},{},{},\"{}\"{}",
                    fmt_opt(r.sweep_value),
                    r.trial,
                    r.seed,
                    r.feasible,
                    r.iterations,
                    r.sum_rate,
                    rates_field(r),
                    r.note.replace('"', "'"),
                    wall(r)
                );
            }
            recs
        }
        Experiment::AmplitudeProfile => {
            let recs = single_method(spec, spec.assign.as_str())?;
            let _ = writeln!(csv, "sweep_value,trial,seed,feasible,m,beta_t,beta_r,theta_t,theta_r");
            for r in &recs {
                if let Some(c) = &r.coeffs_csv {
                    for line in c.lines().skip(1) {
                        let _ = writeln!(csv, "{},{},{},{},{line}", fmt_opt(r.sweep_value), r.trial, r.seed, r.feasible);
                    }
                }
            }
            recs
        }
        Experiment::CdfAssignment | Experiment::DecodingOrders => {
            let recs = if spec.experiment == Experiment::CdfAssignment {
                cdf_records(spec)?
            } else {
                order_records(spec)?
            };
            let _ = writeln!(csv, "record,sweep_value,method,trial,seed,feasible,sum_rate,cdf{timing_col}");
            for r in &recs {
                let _ = writeln!(
                    csv,
                    "trial,{},{},{},{},{},{},{}",
                    fmt_opt(r.sweep_value),
                    r.label,
                    r.trial,
                    r.seed,
                    r.feasible,
                    r.sum_rate,
                    wall(r)
                );
            }
            let mut labels: Vec<(Option<f64>, String)> = Vec::new();
            for r in &recs {
                let k = (r.sweep_value, r.label.clone());
                if !labels.contains(&k) {
                    labels.push(k);
                }
            }
            for (sv, label) in &labels {
                let mut v: Vec<f64> = recs
                    .iter()
                    .filter(|r| r.feasible && &r.label == label && r.sweep_value == *sv)
                    .map(|r| r.sum_rate)
                    .collect();
                v.sort_by(f64::total_cmp);
                let n = v.len();
                for (j, x) in v.iter().enumerate() {
                    let _ = writeln!(
                        csv,
                        "cdf,{},{label},,,true,{x},{}{}",
                        fmt_opt(*sv),
                        (j + 1) as f64 / n as f64,
                        if spec.timing { "," } else { "" }
                    );
                }
            }
            if spec.experiment == Experiment::CdfAssignment {
                for (sv, label) in &labels {
                    if label == AssignMethod::Exhaustive.as_str() {
                        continue;
                    }
                    let frac = match_fraction(&recs, *sv, label, AssignMethod::Exhaustive.as_str(), 0.01);
                    let _ = writeln!(
                        csv,
                        "# summary sweep={} method={label} matches_exhaustive_within_1pct={frac}",
                        fmt_opt(*sv)
                    );
                }
            }
            recs
        }
    };
    summary_lines(&records, group_key, &mut csv);
    Ok(Dataset { records, csv })
}

/// Fraction of trials (feasible for both) where `label` is within `rel`
/// of `reference`.
pub fn match_fraction(records: &[TrialRecord], sweep: Option<f64>, label: &str, reference: &str, rel: f64) -> f64 {
    let mut hits = 0;
    let mut total = 0;
    for r in records.iter().filter(|r| r.label == label && r.sweep_value == sweep && r.feasible) {
        if let Some(e) = records
            .iter()
            .find(|x| x.label == reference && x.trial == r.trial && x.sweep_value == sweep && x.feasible)
        {
            total += 1;
            if r.sum_rate >= e.sum_rate * (1.0 - rel) {
                hits += 1;
            }
        }
    }
    if total == 0 {
        f64::NAN
    } else {
        hits as f64 / total as f64
    }
}
