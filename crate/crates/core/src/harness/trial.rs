//! One Monte-Carlo trial: channel draw, assignment, allocation pipeline
//! and independent validation.

use crate::error::{Error, Result};
use crate::matching::{self, Assignment, UtilityKind};
use crate::noma::{self, NomaOptions, NomaSolution};
use crate::oma::{self, OmaOptions, OmaSolution};
use crate::starface::{StarCoefficients, SurfaceMode};
use crate::sysmodel::Scenario;
use crate::validate::{self, Validation};

use super::{AssignMethod, Scheme};

#[derive(Debug, Clone)]
pub enum Solution {
    Oma(OmaSolution),
    Noma(NomaSolution),
}

impl Solution {
    pub fn sum_rate(&self) -> f64 {
        match self {
            Solution::Oma(s) => s.sum_rate,
            Solution::Noma(s) => s.sum_rate,
        }
    }

    pub fn rates(&self) -> &[f64] {
        match self {
            Solution::Oma(s) => &s.rates,
            Solution::Noma(s) => &s.rates,
        }
    }

    pub fn coeffs(&self) -> &StarCoefficients {
        match self {
            Solution::Oma(s) => &s.coeffs,
            Solution::Noma(s) => &s.coeffs,
        }
    }

    pub fn assignment(&self) -> &Assignment {
        match self {
            Solution::Oma(s) => &s.assignment,
            Solution::Noma(s) => &s.assignment,
        }
    }

    /// AO iterations (OMA) or CUB iterations (NOMA).
    pub fn iterations(&self) -> usize {
        match self {
            Solution::Oma(s) => s.iterations,
            Solution::Noma(s) => s.cub_iterations,
        }
    }

    /// AO trace (OMA) or CUB trace (NOMA).
    pub fn trace(&self) -> &[f64] {
        match self {
            Solution::Oma(s) => &s.trace,
            Solution::Noma(s) => &s.cub_trace,
        }
    }

    pub fn validate(&self, scenario: &Scenario, mode: SurfaceMode) -> Validation {
        match self {
            Solution::Oma(s) => validate::validate_oma(scenario, s, mode),
            Solution::Noma(s) => validate::validate_noma(scenario, s, mode),
        }
    }
}

/// Solver knobs shared by all trials.
#[derive(Debug, Clone, Default)]
pub struct PipelineOptions {
    /// Overrides the randomization sample count.
    pub samples: Option<usize>,
}

impl PipelineOptions {
    pub fn oma(&self, scenario: &Scenario) -> OmaOptions {
        OmaOptions::from_config(scenario)
    }

    pub fn noma(&self, scenario: &Scenario) -> NomaOptions {
        let mut o = NomaOptions::from_config(scenario);
        if let Some(s) = self.samples {
            o.samples = s;
        }
        o
    }
}

/// Runs the allocation pipeline of `scheme` on a fixed assignment.
pub fn solve_assigned(
    scenario: &Scenario,
    scheme: Scheme,
    assignment: &Assignment,
    initial: &StarCoefficients,
    mode: SurfaceMode,
    opts: &PipelineOptions,
    trial_seed: u64,
) -> Result<Solution> {
    match scheme {
        Scheme::Oma => {
            oma::alternating_optimize_oma(scenario, assignment, initial, mode, &opts.oma(scenario)).map(Solution::Oma)
        }
        Scheme::Noma => noma::three_step_noma(scenario, assignment, initial, mode, &opts.noma(scenario), trial_seed)
            .map(Solution::Noma),
    }
}

fn utility_kind(scheme: Scheme) -> UtilityKind {
    match scheme {
        Scheme::Oma => UtilityKind::Oma,
        Scheme::Noma => UtilityKind::Noma,
    }
}

/// Assignment by `method`, then the pipeline of `scheme`.
pub fn solve_scheme(
    scenario: &Scenario,
    scheme: Scheme,
    method: AssignMethod,
    mode: SurfaceMode,
    opts: &PipelineOptions,
    trial_seed: u64,
) -> Result<Solution> {
    mode.validate(scenario.config.num_elements)?;
    let kind = utility_kind(scheme);
    let outcome = match method {
        AssignMethod::Swap => {
            let (a0, coeffs) = matching::init_oma(scenario, mode)?;
            let oracle: Box<dyn matching::UtilityOracle> = match kind {
                UtilityKind::Oma => Box::new(matching::OmaSnapshot::new(scenario, &coeffs)),
                UtilityKind::Noma => Box::new(matching::NomaSnapshot::new(scenario, &coeffs)),
            };
            let (a, _) =
                matching::swap_match(&a0, oracle.as_ref(), matching::SwapScope::AllPairs, &scenario.layout.regions);
            (a, coeffs)
        }
        AssignMethod::Lma => {
            let m = matching::lma(scenario, mode, kind)?;
            (m.assignment, m.coeffs)
        }
        AssignMethod::Sma => {
            let m = matching::sma(scenario, mode, kind)?;
            (m.assignment, m.coeffs)
        }
        AssignMethod::Exhaustive => {
            let initial = matching::initial_coefficients(scenario, mode)?;
            let cfg = &scenario.config;
            let out = matching::exhaustive_assignment(cfg.num_users, cfg.num_subchannels, |a| {
                solve_assigned(scenario, scheme, a, &initial, mode, opts, trial_seed)
                    .ok()
                    .map(|s| (s.sum_rate(), s))
            })?;
            return Ok(out.result);
        }
    };
    solve_assigned(scenario, scheme, &outcome.0, &outcome.1, mode, opts, trial_seed)
}

/// Whether an error marks the trial as infeasible rather than aborting.
pub fn is_trial_failure(e: &Error) -> bool {
    !matches!(e, Error::Guard(_) | Error::Config(_) | Error::Io(_))
}
