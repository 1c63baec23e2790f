//! Orthogonal access: each subchannel is time-shared by its two users.
//!
//! Alternating optimization between the convex power/time problem (jointly
//! concave perspective rates) and successive-convex-approximation passes
//! over the surface coefficients.

use std::f64::consts::LN_2;

use crate::convexkit::{self, Affine, BarrierSettings, NegLog, NegPerspectiveLog, Problem, Quadratic, Reciprocal, SolveReport, Sum};
use crate::error::{Error, Result};
use crate::matching::Assignment;
use crate::starface::{project_feasible, wrap_signed, StarCoefficients, SurfaceMode};
use crate::sysmodel::{Scenario, Side};

/// Floor on time shares inside the solver.
pub const MIN_SHARE: f64 = 1e-6;
pub const MAX_AO_ITERATIONS: usize = 50;
pub const MAX_SCA_PASSES: usize = 20;
/// Relative QoS margin demanded by the power/time step, so that the
/// following beamforming surrogate has a strictly feasible start.
pub const QOS_SLACK: f64 = 1e-6;

/// `omega log2(1 + p gain / (omega noise))`.
pub fn oma_rate(p: f64, omega: f64, gain: f64, noise: f64) -> Result<f64> {
    if omega == 0.0 {
        return if p == 0.0 {
            Ok(0.0)
        } else {
            Err(Error::Domain("positive power on a zero time share".into()))
        };
    }
    if !(omega > 0.0 && omega <= 1.0) || p < 0.0 {
        return Err(Error::Domain(format!("invalid share {omega} or power {p}")));
    }
    Ok(omega * (1.0 + p * gain / (omega * noise)).log2())
}

/// Per-user power and time share.
#[derive(Debug, Clone, PartialEq)]
pub struct OmaAllocation {
    pub power: Vec<f64>,
    pub share: Vec<f64>,
}

impl OmaAllocation {
    /// Equal power and an even split of every subchannel.
    pub fn uniform(assignment: &Assignment, p_max: f64) -> Self {
        let n = assignment.num_users();
        let share = (0..n)
            .map(|i| if assignment.partner(i).is_some() { 0.5 } else { 1.0 })
            .collect();
        Self {
            power: vec![p_max / n as f64; n],
            share,
        }
    }

    /// Rates over noise-normalized `gains` (one per user).
    pub fn rates(&self, gains: &[f64]) -> Vec<f64> {
        (0..gains.len())
            .map(|i| oma_rate(self.power[i], self.share[i], gains[i], 1.0).unwrap_or(0.0))
            .collect()
    }

    pub fn sum_rate(&self, gains: &[f64]) -> f64 {
        self.rates(gains).iter().sum()
    }

    pub fn meets_qos(&self, gains: &[f64], qos: f64) -> bool {
        self.rates(gains).iter().all(|r| *r >= qos)
    }
}

/// Noise-normalized gain of every user on its subchannel.
pub fn user_gains(scenario: &Scenario, assignment: &Assignment, coeffs: &StarCoefficients) -> Vec<f64> {
    (0..assignment.num_users())
        .map(|i| scenario.gain(coeffs, assignment.channel_of(i), i))
        .collect()
}

/// Share of user `i` as an affine form: the lower-indexed user of a pair
/// owns variable `base + k`, its partner the complement.
fn share_form(assignment: &Assignment, i: usize, base: usize, fixed: Option<f64>) -> Affine {
    let k = assignment.channel_of(i);
    let users = assignment.users_on(k);
    if users.len() == 1 {
        return Affine::constant(1.0);
    }
    let first = users[0] == i;
    match fixed {
        Some(w) => Affine::constant(if first { w } else { 1.0 - w }),
        None if first => Affine::var(base + k),
        None => Affine::constant(1.0).add(base + k, -1.0),
    }
}

/// Jointly optimal powers and time shares for fixed gains. With
/// `fixed_share = Some(w)` every pair splits time as `(w, 1 - w)`.
pub fn solve_power_time(
    assignment: &Assignment,
    gains: &[f64],
    p_max: f64,
    qos: f64,
    fixed_share: Option<f64>,
    settings: &BarrierSettings,
) -> Result<(OmaAllocation, SolveReport)> {
    let n = assignment.num_users();
    let kk = assignment.num_subchannels();
    let nvars = n + if fixed_share.is_some() { 0 } else { kk };
    let shares: Vec<Affine> = (0..n).map(|i| share_form(assignment, i, n, fixed_share)).collect();
    let objective = Sum(
        (0..n)
            .map(|i| {
                Box::new(NegPerspectiveLog {
                    weight: 1.0 / LN_2,
                    gain: gains[i],
                    power: Affine::var(i),
                    share: shares[i].clone(),
                    offset: 0.0,
                }) as Box<dyn convexkit::Smooth>
            })
            .collect(),
    );
    let mut prob = Problem::new(nvars, objective);
    for i in 0..n {
        prob.constrain(format!("p[{i}] >= 0"), Affine::term(i, -1.0));
    }
    let mut budget = Affine::constant(-p_max);
    for i in 0..n {
        budget = budget.add(i, 1.0);
    }
    prob.constrain("power budget", budget);
    if fixed_share.is_none() {
        for k in 0..kk {
            if assignment.users_on(k).len() == 2 {
                prob.constrain(format!("omega[{k}] >= floor"), Affine::constant(MIN_SHARE).add(n + k, -1.0));
                prob.constrain(
                    format!("omega[{k}] <= 1 - floor"),
                    Affine::constant(MIN_SHARE - 1.0).add(n + k, 1.0),
                );
            }
        }
    }
    if qos > 0.0 {
        for i in 0..n {
            prob.constrain(
                format!("qos user {i}"),
                NegPerspectiveLog {
                    weight: 1.0,
                    gain: gains[i],
                    power: Affine::var(i),
                    share: shares[i].clone(),
                    offset: (1.0 + QOS_SLACK) * qos * LN_2,
                },
            );
        }
    }
    let mut x0 = vec![0.9 * p_max / n as f64; nvars];
    for v in x0.iter_mut().skip(n) {
        *v = 0.5;
    }
    let (x, report) = convexkit::solve(&prob, &x0, settings)?;
    let mut power: Vec<f64> = x[..n].iter().map(|p| p.max(0.0)).collect();
    let total: f64 = power.iter().sum();
    if total > 0.0 {
        let s = p_max / total;
        power.iter_mut().for_each(|p| *p *= s);
    }
    let share = shares.iter().map(|a| a.eval(&x)).collect();
    Ok((OmaAllocation { power, share }, report))
}

/// Stationary points of the SCA surrogate: `a + jb` is the response of
/// every user under the previous coefficients.
#[derive(Debug, Clone, PartialEq)]
pub struct ScaState {
    pub a: Vec<f64>,
    pub b: Vec<f64>,
    pub chi: Vec<f64>,
}

impl ScaState {
    pub fn at(scenario: &Scenario, assignment: &Assignment, coeffs: &StarCoefficients) -> Self {
        let n = assignment.num_users();
        let mut s = Self {
            a: vec![0.0; n],
            b: vec![0.0; n],
            chi: vec![0.0; n],
        };
        for i in 0..n {
            let k = assignment.channel_of(i);
            let h = coeffs.response(scenario.layout.region(i), &scenario.qn(k, i));
            s.a[i] = h.re;
            s.b[i] = h.im;
            s.chi[i] = h.norm_sqr();
        }
        s
    }

    /// First-order lower bound of `a^2 + b^2` around the stationary point.
    pub fn linearization(&self, i: usize, a: f64, b: f64) -> f64 {
        2.0 * self.a[i] * a + 2.0 * self.b[i] * b - self.a[i] * self.a[i] - self.b[i] * self.b[i]
    }
}

/// Diagnostics of one beamforming pass.
#[derive(Debug, Clone)]
pub struct ScaReport {
    pub surrogate: SolveReport,
    /// Interpolation step finally applied (0 keeps the prior).
    pub step: f64,
    pub objective_before: f64,
    pub objective_after: f64,
}

struct ElementVars {
    /// `(re, im)` variable of element `m` on side T / R.
    idx: [Vec<Option<(usize, usize)>>; 2],
    count: usize,
}

fn element_vars(m_total: usize, mode: SurfaceMode) -> ElementVars {
    let mut idx = [vec![None; m_total], vec![None; m_total]];
    let mut next = 0;
    for side in Side::BOTH {
        for m in mode.active_elements(side, m_total) {
            idx[side.index()][m] = Some((next, next + 1));
            next += 2;
        }
    }
    ElementVars { idx, count: next }
}

fn tangent_form(ev: &ElementVars, q: &[crate::Complex64], side: Side, a: f64, b: f64) -> Affine {
    let mut re = Affine::default();
    let mut im = Affine::default();
    for (mm, qm) in q.iter().enumerate() {
        if let Some((x, y)) = ev.idx[side.index()][mm] {
            re = re.add(x, qm.re).add(y, -qm.im);
            im = im.add(x, qm.im).add(y, qm.re);
        }
    }
    re.scaled(2.0 * a).plus(&im.scaled(2.0 * b)).offset(-(a * a + b * b))
}

fn add_energy_constraints(prob: &mut Problem, ev: &ElementVars, m_total: usize) {
    for mm in 0..m_total {
        let mut squares = Vec::new();
        for s in 0..2 {
            if let Some((x, y)) = ev.idx[s][mm] {
                squares.push((1.0, Affine::var(x)));
                squares.push((1.0, Affine::var(y)));
            }
        }
        prob.constrain(
            format!("energy element {mm}"),
            Quadratic {
                squares,
                linear: Affine::constant(-1.0),
            },
        );
    }
}

fn encode_beams(ev: &ElementVars, coeffs: &StarCoefficients, shrink: f64, x0: &mut [f64]) {
    for side in Side::BOTH {
        let v = coeffs.beam(side);
        for (mm, vm) in v.iter().enumerate() {
            if let Some((x, y)) = ev.idx[side.index()][mm] {
                x0[x] = shrink * vm.re;
                x0[y] = shrink * vm.im;
            }
        }
    }
}

fn decode_beams(ev: &ElementVars, x: &[f64], prior: &StarCoefficients, mode: SurfaceMode) -> Result<StarCoefficients> {
    let m_total = prior.num_elements();
    let mut bt = vec![0.0; m_total];
    let mut br = vec![0.0; m_total];
    let mut th = [prior.thetas(Side::T).to_vec(), prior.thetas(Side::R).to_vec()];
    for mm in 0..m_total {
        for side in Side::BOTH {
            if let Some((xr, xi)) = ev.idx[side.index()][mm] {
                let (re, im) = (x[xr], x[xi]);
                let amp = re * re + im * im;
                match side {
                    Side::T => bt[mm] = amp,
                    Side::R => br[mm] = amp,
                }
                if amp > 0.0 {
                    th[side.index()][mm] = im.atan2(re);
                }
            }
        }
    }
    let mut raw = project_feasible(&bt, &br, &th[0], &th[1])?;
    mode.apply(&mut raw);
    Ok(raw)
}

fn oma_objective(alloc: &OmaAllocation, gains: &[f64]) -> f64 {
    alloc.sum_rate(gains)
}

fn blend(prior: &StarCoefficients, new: &StarCoefficients, s: f64) -> StarCoefficients {
    let m = prior.num_elements();
    let bt: Vec<f64> = (0..m)
        .map(|j| (1.0 - s) * prior.beta(Side::T, j) + s * new.beta(Side::T, j))
        .collect();
    let th = |side: Side| -> Vec<f64> {
        (0..m)
            .map(|j| {
                let p = prior.theta(side, j);
                p + s * wrap_signed(new.theta(side, j) - p)
            })
            .collect()
    };
    StarCoefficients::new(bt, th(Side::T), th(Side::R)).expect("matching lengths")
}

/// One SCA pass over the coefficients for a fixed allocation. The raw
/// surrogate solution is projected onto the energy-splitting set; if that
/// loses rate or QoS, a shorter step from the prior is taken, and the prior
/// is kept when no step helps.
pub fn solve_beamforming_oma(
    scenario: &Scenario,
    assignment: &Assignment,
    alloc: &OmaAllocation,
    prior: &StarCoefficients,
    mode: SurfaceMode,
    settings: &BarrierSettings,
) -> Result<(StarCoefficients, ScaState, ScaReport)> {
    let cfg = &scenario.config;
    let n = assignment.num_users();
    let m_total = cfg.num_elements;
    let ev = element_vars(m_total, mode);
    let chi0 = ev.count;
    let nvars = ev.count + n;
    let state = ScaState::at(scenario, assignment, prior);

    let mut objective: Vec<Box<dyn convexkit::Smooth>> = Vec::new();
    let mut prob_constraints: Vec<(String, Box<dyn convexkit::Smooth>)> = Vec::new();
    let mut chi_min = vec![0.0; n];
    for i in 0..n {
        let k = assignment.channel_of(i);
        let side = scenario.layout.region(i);
        let tangent = tangent_form(&ev, &scenario.qn(k, i), side, state.a[i], state.b[i]);
        prob_constraints.push((
            format!("sca bound user {i}"),
            Box::new(Affine::var(chi0 + i).minus(&tangent).compact()),
        ));
        let (p, w) = (alloc.power[i], alloc.share[i]);
        if p > 0.0 && w > 0.0 {
            objective.push(Box::new(NegLog {
                weight: w / LN_2,
                arg: Affine::constant(1.0).add(chi0 + i, p / w),
            }));
        }
        if cfg.qos_rate > 0.0 {
            if !(p > 0.0 && w > 0.0) {
                return Err(Error::Infeasible(format!("user {i} has no resources for its QoS")));
            }
            chi_min[i] = w * ((cfg.qos_rate / w).exp2() - 1.0) / p;
            prob_constraints.push((
                format!("qos user {i}"),
                Box::new(Affine::constant(chi_min[i]).add(chi0 + i, -1.0)),
            ));
        } else {
            prob_constraints.push((format!("chi[{i}] >= 0"), Box::new(Affine::term(chi0 + i, -1.0))));
        }
    }
    let mut prob = Problem::new(nvars, Sum(objective));
    for (name, f) in prob_constraints {
        prob.constraints.push(convexkit::barrier::Constraint { name, f });
    }
    add_energy_constraints(&mut prob, &ev, m_total);

    let mut x0 = vec![0.0; nvars];
    let ratio = (0..n)
        .filter(|&i| chi_min[i] > 0.0)
        .map(|i| chi_min[i] / state.chi[i])
        .fold(0.0, f64::max);
    let shrink = if ratio < 1.0 { 1.0 - (0.25 * (1.0 - ratio)).min(1e-3) } else { 1.0 - 1e-3 };
    encode_beams(&ev, prior, shrink, &mut x0);
    for i in 0..n {
        let t = state.chi[i] * (2.0 * shrink - 1.0);
        x0[chi0 + i] = if t > chi_min[i] { 0.5 * (t + chi_min[i]) } else { t };
    }
    let (x, surrogate) = convexkit::solve(&prob, &x0, settings)?;

    let raw = decode_beams(&ev, &x, prior, mode)?;

    let gains_prior = user_gains(scenario, assignment, prior);
    let before = oma_objective(alloc, &gains_prior);
    let mut best = (prior.clone(), before, 0.0);
    let mut s = 1.0;
    for _ in 0..8 {
        let mut cand = if s == 1.0 { raw.clone() } else { blend(prior, &raw, s) };
        mode.apply(&mut cand);
        let g = user_gains(scenario, assignment, &cand);
        if alloc.meets_qos(&g, cfg.qos_rate) {
            let v = oma_objective(alloc, &g);
            if v > best.1 {
                best = (cand, v, s);
            }
        }
        s *= 0.5;
    }
    let (coeffs, after, step) = best;
    let next = ScaState::at(scenario, assignment, &coeffs);
    Ok((
        coeffs,
        next,
        ScaReport {
            surrogate,
            step,
            objective_before: before,
            objective_after: after,
        },
    ))
}

/// Maximum number of SCA passes in [`restore_qos_oma`].
pub const MAX_RESTORE_PASSES: usize = 20;

/// Total power that meets every QoS target at even time shares.
pub fn qos_power_even_shares(assignment: &Assignment, gains: &[f64], qos: f64) -> f64 {
    let uniform = OmaAllocation::uniform(assignment, 1.0);
    (0..gains.len())
        .map(|i| {
            let w = uniform.share[i];
            w * ((qos / w).exp2() - 1.0) / gains[i]
        })
        .sum()
}

/// Searches for coefficients under which QoS is reachable at even time
/// shares within the budget, by SCA on the total power that QoS needs.
/// Returns the first such point, or an infeasibility error.
pub fn restore_qos_oma(
    scenario: &Scenario,
    assignment: &Assignment,
    start: &StarCoefficients,
    mode: SurfaceMode,
    settings: &BarrierSettings,
) -> Result<StarCoefficients> {
    let cfg = &scenario.config;
    let uniform = OmaAllocation::uniform(assignment, 1.0);
    let n = assignment.num_users();
    let m_total = cfg.num_elements;
    let ev = element_vars(m_total, mode);
    let chi0 = ev.count;
    let need: Vec<f64> = (0..n)
        .map(|i| {
            let w = uniform.share[i];
            w * ((cfg.qos_rate / w).exp2() - 1.0)
        })
        .collect();
    let required = |c: &StarCoefficients| qos_power_even_shares(assignment, &user_gains(scenario, assignment, c), cfg.qos_rate);
    let mut coeffs = start.clone();
    mode.apply(&mut coeffs);
    let mut best = required(&coeffs);
    for _ in 0..MAX_RESTORE_PASSES {
        if best < cfg.p_max {
            return Ok(coeffs);
        }
        let state = ScaState::at(scenario, assignment, &coeffs);
        let objective: Vec<Box<dyn convexkit::Smooth>> = (0..n)
            .map(|i| {
                Box::new(Reciprocal {
                    coeff: need[i],
                    arg: Affine::var(chi0 + i),
                }) as Box<dyn convexkit::Smooth>
            })
            .collect();
        let mut prob = Problem::new(chi0 + n, Sum(objective));
        let mut x0 = vec![0.0; chi0 + n];
        encode_beams(&ev, &coeffs, 1.0 - 1e-3, &mut x0);
        for i in 0..n {
            let k = assignment.channel_of(i);
            let side = scenario.layout.region(i);
            let tangent = tangent_form(&ev, &scenario.qn(k, i), side, state.a[i], state.b[i]);
            x0[chi0 + i] = 0.5 * tangent.eval(&x0);
            prob.constrain(format!("sca bound user {i}"), Affine::var(chi0 + i).minus(&tangent).compact());
        }
        add_energy_constraints(&mut prob, &ev, m_total);
        let (x, _) = convexkit::solve(&prob, &x0, settings)?;
        let next = decode_beams(&ev, &x, &coeffs, mode)?;
        let r = required(&next);
        if !(r < best * (1.0 - 1e-9)) {
            break;
        }
        best = r;
        coeffs = next;
    }
    if best < cfg.p_max {
        return Ok(coeffs);
    }
    Err(Error::Infeasible(format!(
        "QoS needs {best:.4e} W at even time shares, budget is {} W",
        cfg.p_max
    )))
}

#[derive(Debug, Clone)]
pub struct OmaOptions {
    pub max_iterations: usize,
    /// SCA passes per AO iteration; the passes stop early once one gains
    /// less than `tolerance`.
    pub max_sca_passes: usize,
    pub tolerance: f64,
    pub barrier: BarrierSettings,
}

impl OmaOptions {
    pub fn from_config(scenario: &Scenario) -> Self {
        Self {
            max_iterations: MAX_AO_ITERATIONS,
            max_sca_passes: MAX_SCA_PASSES,
            tolerance: scenario.config.tolerance,
            barrier: BarrierSettings::default(),
        }
    }
}

#[derive(Debug, Clone)]
pub struct OmaSolution {
    pub assignment: Assignment,
    pub allocation: OmaAllocation,
    pub coeffs: StarCoefficients,
    pub gains: Vec<f64>,
    pub rates: Vec<f64>,
    pub sum_rate: f64,
    /// Sum-rate under equal power, even shares and the initial coefficients.
    pub initial_sum_rate: f64,
    /// Sum-rate after every AO iteration.
    pub trace: Vec<f64>,
    pub iterations: usize,
    pub converged: bool,
    /// The initial coefficients missed QoS and were replaced by
    /// [`restore_qos_oma`] before the first iteration.
    pub restored: bool,
}

/// Alternates power/time and beamforming until the sum-rate gains less
/// than the tolerance in one iteration.
pub fn alternating_optimize_oma(
    scenario: &Scenario,
    assignment: &Assignment,
    initial: &StarCoefficients,
    mode: SurfaceMode,
    opts: &OmaOptions,
) -> Result<OmaSolution> {
    let cfg = &scenario.config;
    let mut coeffs = initial.clone();
    mode.apply(&mut coeffs);
    let uniform = OmaAllocation::uniform(assignment, cfg.p_max);
    let initial_sum_rate = uniform.sum_rate(&user_gains(scenario, assignment, &coeffs));
    let mut restored = false;
    if cfg.qos_rate > 0.0 {
        let gains = user_gains(scenario, assignment, &coeffs);
        if solve_power_time(assignment, &gains, cfg.p_max, cfg.qos_rate, None, &opts.barrier).is_err() {
            coeffs = restore_qos_oma(scenario, assignment, &coeffs, mode, &opts.barrier)?;
            restored = true;
        }
    }
    let mut alloc: Option<OmaAllocation> = None;
    let mut trace: Vec<f64> = Vec::new();
    let mut converged = false;
    for _ in 0..opts.max_iterations {
        let gains = user_gains(scenario, assignment, &coeffs);
        let fresh = solve_power_time(assignment, &gains, cfg.p_max, cfg.qos_rate, None, &opts.barrier);
        let next = match (fresh, alloc.take()) {
            (Ok((a, _)), Some(prev)) => {
                if a.sum_rate(&gains) >= prev.sum_rate(&gains) || !prev.meets_qos(&gains, cfg.qos_rate) {
                    a
                } else {
                    prev
                }
            }
            (Ok((a, _)), None) => a,
            (Err(_), Some(prev)) => prev,
            (Err(e), None) => return Err(e),
        };
        for _ in 0..opts.max_sca_passes.max(1) {
            match solve_beamforming_oma(scenario, assignment, &next, &coeffs, mode, &opts.barrier) {
                Ok((c, _, r)) => {
                    coeffs = c;
                    if r.objective_after - r.objective_before < opts.tolerance {
                        break;
                    }
                }
                Err(Error::Infeasible(_) | Error::Numerical(_)) => break,
                Err(e) => return Err(e),
            }
        }
        let rate = next.sum_rate(&user_gains(scenario, assignment, &coeffs));
        alloc = Some(next);
        let done = trace.last().is_some_and(|last| rate - last < opts.tolerance);
        trace.push(rate);
        if done {
            converged = true;
            break;
        }
    }
    let allocation = alloc.expect("at least one iteration");
    let gains = user_gains(scenario, assignment, &coeffs);
    let rates = allocation.rates(&gains);
    let sum_rate = rates.iter().sum();
    Ok(OmaSolution {
        assignment: assignment.clone(),
        iterations: trace.len(),
        allocation,
        coeffs,
        gains,
        rates,
        sum_rate,
        initial_sum_rate,
        trace,
        converged,
        restored,
    })
}
