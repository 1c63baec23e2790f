//! Non-orthogonal access: two users superposed per subchannel with SIC.
//!
//! The pipeline runs in three steps for a fixed assignment:
//! 1. decoding orders from the semidefinite relaxation that maximizes the
//!    total effective gain, rounded by Gaussian randomization;
//! 2. surface coefficients by iterating a convex upper bound (CUB) of the
//!    interference-coupled rate constraints under equal power;
//! 3. powers by geometric programming with exact power recovery.

use std::f64::consts::LN_2;
use std::fmt::Write as _;

use rand_chacha::ChaCha8Rng;

use crate::convexkit::{
    self, gaussian_randomize, solve_gp, Affine, BarrierSettings, GpProblem, Monomial, NegLog, Posynomial,
    Problem, PsdLayout, Quadratic, Reciprocal, SolveReport, Sum,
};
use crate::error::{Error, Result};
use crate::matching::{self, is_stronger, Assignment};
use crate::seed;
use crate::starface::{StarCoefficients, SurfaceMode};
use crate::sysmodel::{Scenario, Side};

pub const MAX_CUB_ITERATIONS: usize = 30;
/// Largest subchannel count for the exhaustive order baseline.
pub const EXHAUSTIVE_ORDER_MAX_K: usize = 4;

/// `log2(1 + p_i g / (pi_other p_other g + noise))`.
pub fn noma_rate(p_i: f64, p_other: f64, gain: f64, pi_other: f64, noise: f64) -> f64 {
    (1.0 + p_i * gain / (pi_other * p_other * gain + noise)).log2()
}

/// Per subchannel: the user decoded last without interference (`strong`)
/// and the one decoded first (`weak`).
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct DecodingOrder {
    pub strong: Vec<usize>,
    pub weak: Vec<usize>,
}

impl DecodingOrder {
    /// Orders every pair by the given per-user gains.
    pub fn from_gains(assignment: &Assignment, gains: &[f64], regions: &[Side]) -> Result<Self> {
        let mut strong = Vec::new();
        let mut weak = Vec::new();
        for (k, users) in assignment.pairs().iter().enumerate() {
            let [i, j] = users[..] else {
                return Err(Error::Precondition(format!("subchannel {k} is not a pair")));
            };
            if is_stronger(gains[i], gains[j], regions[i], regions[j], i, j) {
                strong.push(i);
                weak.push(j);
            } else {
                strong.push(j);
                weak.push(i);
            }
        }
        Ok(Self { strong, weak })
    }

    pub fn num_subchannels(&self) -> usize {
        self.strong.len()
    }

    /// Order with bit `k` of `mask` selecting the lower-indexed user of
    /// subchannel `k` as the strong one.
    pub fn from_mask(assignment: &Assignment, mask: u64) -> Result<Self> {
        let mut strong = Vec::new();
        let mut weak = Vec::new();
        for (k, users) in assignment.pairs().iter().enumerate() {
            let [i, j] = users[..] else {
                return Err(Error::Precondition(format!("subchannel {k} is not a pair")));
            };
            if mask >> k & 1 == 1 {
                strong.push(i);
                weak.push(j);
            } else {
                strong.push(j);
                weak.push(i);
            }
        }
        Ok(Self { strong, weak })
    }

    /// All `2^K` orders of a paired assignment.
    pub fn all(assignment: &Assignment) -> Result<Vec<Self>> {
        let kk = assignment.num_subchannels();
        if kk > EXHAUSTIVE_ORDER_MAX_K {
            return Err(Error::Guard(format!(
                "exhaustive decoding orders support K <= {EXHAUSTIVE_ORDER_MAX_K}, got {kk}"
            )));
        }
        (0..1u64 << kk).map(|m| Self::from_mask(assignment, m)).collect()
    }

    /// Whether the order agrees with SIC feasibility under `gains`.
    pub fn sic_consistent(&self, gains: &[f64]) -> bool {
        self.strong.iter().zip(&self.weak).all(|(&s, &w)| gains[s] >= gains[w])
    }

    fn key(&self) -> Vec<u64> {
        self.strong.iter().map(|&s| s as u64).collect()
    }
}

/// Per-user rates under `order`, `power` and noise-normalized `gains`.
pub fn noma_rates(order: &DecodingOrder, power: &[f64], gains: &[f64]) -> Vec<f64> {
    let mut rates = vec![0.0; power.len()];
    for (&s, &w) in order.strong.iter().zip(&order.weak) {
        rates[s] = noma_rate(power[s], power[w], gains[s], 0.0, 1.0);
        rates[w] = noma_rate(power[w], power[s], gains[w], 1.0, 1.0);
    }
    rates
}

/// Noise-normalized gains of every user on its subchannel.
pub fn user_gains(scenario: &Scenario, assignment: &Assignment, coeffs: &StarCoefficients) -> Vec<f64> {
    crate::oma::user_gains(scenario, assignment, coeffs)
}

#[derive(Debug, Clone)]
pub struct NomaOptions {
    pub samples: usize,
    pub max_cub_iterations: usize,
    pub tolerance: f64,
    pub barrier: BarrierSettings,
}

impl NomaOptions {
    pub fn from_config(scenario: &Scenario) -> Self {
        Self {
            samples: convexkit::DEFAULT_SAMPLES,
            max_cub_iterations: MAX_CUB_ITERATIONS,
            tolerance: scenario.config.tolerance,
            barrier: BarrierSettings::default(),
        }
    }
}

#[derive(Debug, Clone)]
pub struct OrderOutcome {
    pub order: DecodingOrder,
    pub coeffs: StarCoefficients,
    /// Optimal value of the relaxation (total gain over noise).
    pub relaxation: f64,
    /// Total gain achieved by the rounded coefficients.
    pub achieved: f64,
    pub report: SolveReport,
}

/// Total gain `sum_i Tr(Q_i W_{side(i)})` over the assignment.
fn total_gain_form(scenario: &Scenario, assignment: &Assignment, layout: &PsdLayout) -> Affine {
    let mut form = Affine::default();
    for i in 0..assignment.num_users() {
        let k = assignment.channel_of(i);
        form = form.plus(&layout.gain(scenario.layout.region(i), &scenario.qn(k, i)));
    }
    form.compact()
}

/// Decoding orders from the gain-maximizing relaxation. `incumbent` is
/// scored alongside the randomized candidates.
pub fn decide_orders(
    scenario: &Scenario,
    assignment: &Assignment,
    mode: SurfaceMode,
    incumbent: &StarCoefficients,
    opts: &NomaOptions,
    rng: &mut ChaCha8Rng,
) -> Result<OrderOutcome> {
    let layout = PsdLayout::new(scenario.config.num_elements, mode, 0);
    let gain = total_gain_form(scenario, assignment, &layout);
    let mut prob = Problem::new(layout.num_vars(), gain.clone().scaled(-1.0));
    for l in layout.lmis("") {
        prob.add_lmi(l);
    }
    let mut x0 = vec![0.0; layout.num_vars()];
    layout.interior(&mut x0);
    let (x, report) = convexkit::solve(&prob, &x0, &opts.barrier)?;
    let relaxation = convexkit::Smooth::value(&gain, &x);
    let out = gaussian_randomize(&layout, &x, mode, std::slice::from_ref(incumbent), opts.samples, rng, |c| {
        Some(user_gains(scenario, assignment, c).iter().sum())
    })?;
    let gains = user_gains(scenario, assignment, &out.coeffs);
    let order = DecodingOrder::from_gains(assignment, &gains, &scenario.layout.regions)?;
    Ok(OrderOutcome {
        order,
        achieved: gains.iter().sum(),
        coeffs: out.coeffs,
        relaxation,
        report,
    })
}

#[derive(Debug, Clone)]
pub struct CubOutcome {
    pub coeffs: StarCoefficients,
    /// Order after rounding (re-derived when the fallback was taken).
    pub order: DecodingOrder,
    /// Relaxed layout variables of the last accepted iterate.
    pub relaxed: Vec<f64>,
    pub layout: PsdLayout,
    /// Exact relaxed sum-rate before the first and after every iteration.
    pub trace: Vec<f64>,
    /// CUB points `alpha_k` at the returned iterate.
    pub alphas: Vec<f64>,
    /// Auxiliaries `zeta` at the returned iterate (exact SINRs).
    pub zetas: Vec<f64>,
    pub iterations: usize,
    /// Rounded sum-rate under the fixed powers.
    pub rounded_sum_rate: f64,
    /// No randomized candidate met SIC and QoS; the principal
    /// eigenvector was used with a re-derived order.
    pub fallback: bool,
    /// Fixed powers of the iteration.
    pub power: Vec<f64>,
    /// The given powers missed QoS at the start; the iteration began from
    /// the minimum-power relaxation with its powers scaled to the budget.
    pub restored: bool,
}

/// Gain forms `T_i = Tr(Q_i W_{side(i)})` of every user.
fn gain_forms(scenario: &Scenario, assignment: &Assignment, layout: &PsdLayout) -> Vec<Affine> {
    (0..assignment.num_users())
        .map(|i| layout.gain(scenario.layout.region(i), &scenario.qn(assignment.channel_of(i), i)))
        .collect()
}

/// Exact SINRs for relaxed gains `t`.
fn sinrs(order: &DecodingOrder, power: &[f64], t: &[f64]) -> Vec<f64> {
    let mut z = vec![0.0; power.len()];
    for (&s, &w) in order.strong.iter().zip(&order.weak) {
        z[s] = power[s] * t[s];
        z[w] = power[w] * t[w] / (power[s] * t[w] + 1.0);
    }
    z
}

fn rate_of(z: &[f64]) -> f64 {
    z.iter().map(|v| (1.0 + v).log2()).sum()
}

fn alpha_of(t: f64, zeta: f64) -> f64 {
    (t.max(1e-300) / zeta.max(1e-12)).clamp(1e-12, 1e12)
}

fn add_cub_constraints(
    prob: &mut Problem,
    forms: &[Affine],
    order: &DecodingOrder,
    power: &[f64],
    t: &[f64],
    zeta: &[f64],
    nl: usize,
) {
    for (k, (&s, &w)) in order.strong.iter().zip(&order.weak).enumerate() {
        prob.constrain(
            format!("sinr strong k={k}"),
            Affine::var(nl + s).minus(&forms[s].clone().scaled(power[s])).compact(),
        );
        let alpha = alpha_of(t[w], zeta[w]);
        prob.constrain(
            format!("cub weak k={k}"),
            Quadratic {
                squares: vec![
                    (power[s] * alpha / 2.0, Affine::var(nl + w)),
                    (power[s] / (2.0 * alpha), forms[w].clone()),
                ],
                linear: Affine::var(nl + w).minus(&forms[w].clone().scaled(power[w])).compact(),
            },
        );
        prob.constrain(format!("sic k={k}"), forms[w].clone().minus(&forms[s]).compact());
    }
}

/// Powers meeting every SINR target `zeta_min` exactly under relaxed
/// gains `t`, in decoding order.
fn qos_powers(order: &DecodingOrder, t: &[f64], zeta_min: f64) -> Vec<f64> {
    let mut p = vec![0.0; t.len()];
    for (&s, &w) in order.strong.iter().zip(&order.weak) {
        p[s] = zeta_min / t[s];
        p[w] = zeta_min * (p[s] * t[w] + 1.0) / t[w];
    }
    p
}

/// Relaxed coefficients minimizing the total power that meets QoS under
/// `order`, with the matching powers scaled up to the budget.
fn min_power_start(
    layout: &PsdLayout,
    forms: &[Affine],
    order: &DecodingOrder,
    p_max: f64,
    zeta_min: f64,
    settings: &BarrierSettings,
) -> Result<(Vec<f64>, Vec<f64>)> {
    let nl = layout.num_vars();
    let mut terms: Vec<Box<dyn convexkit::Smooth>> = Vec::new();
    for (&s, &w) in order.strong.iter().zip(&order.weak) {
        terms.push(Box::new(Reciprocal {
            coeff: zeta_min + zeta_min * zeta_min,
            arg: forms[s].clone(),
        }));
        terms.push(Box::new(Reciprocal {
            coeff: zeta_min,
            arg: forms[w].clone(),
        }));
    }
    let mut prob = Problem::new(nl, Sum(terms));
    for l in layout.lmis("") {
        prob.add_lmi(l);
    }
    for (k, (&s, &w)) in order.strong.iter().zip(&order.weak).enumerate() {
        prob.constrain(format!("sic k={k}"), forms[w].clone().minus(&forms[s]).compact());
    }
    let mut x0 = vec![0.0; nl];
    layout.interior(&mut x0);
    let (x, _) = convexkit::solve(&prob, &x0, settings)?;
    let t: Vec<f64> = forms.iter().map(|f| f.eval(&x)).collect();
    let p = qos_powers(order, &t, zeta_min);
    let total: f64 = p.iter().sum();
    if !(total < p_max) {
        return Err(Error::Infeasible(format!(
            "minimum QoS power {total:.4e} W exceeds the budget {p_max} W"
        )));
    }
    let scale = p_max / total;
    Ok((x, p.iter().map(|v| v * scale).collect()))
}

/// Surface coefficients for fixed powers and order by CUB iteration,
/// rounded by randomization scored with the true sum-rate.
#[allow(clippy::too_many_arguments)]
pub fn cub_beamforming(
    scenario: &Scenario,
    assignment: &Assignment,
    order: &DecodingOrder,
    power: &[f64],
    start: &StarCoefficients,
    mode: SurfaceMode,
    opts: &NomaOptions,
    rng: &mut ChaCha8Rng,
) -> Result<CubOutcome> {
    let cfg = &scenario.config;
    let n = assignment.num_users();
    let layout = PsdLayout::new(cfg.num_elements, mode, 0);
    let nl = layout.num_vars();
    let forms = gain_forms(scenario, assignment, &layout);
    let zeta_min = cfg.qos_rate.exp2() - 1.0;
    let eval_t = |x: &[f64]| -> Vec<f64> { forms.iter().map(|f| f.eval(x)).collect() };

    let mut x = vec![0.0; nl];
    let mut interior = vec![0.0; nl];
    layout.encode_rank_one(start, &mut x);
    layout.interior(&mut interior);
    for (v, c) in x.iter_mut().zip(&interior) {
        *v = (1.0 - 1e-3) * *v + 1e-3 * c;
    }
    let mut power = power.to_vec();
    let mut zeta = sinrs(order, &power, &eval_t(&x));
    let restored = zeta_min > 0.0 && zeta.iter().any(|z| *z < zeta_min);
    if restored {
        (x, power) = min_power_start(&layout, &forms, order, cfg.p_max, zeta_min, &opts.barrier)?;
        zeta = sinrs(order, &power, &eval_t(&x));
    }
    let mut trace = vec![rate_of(&zeta)];
    let mut iterations = 0;
    for _ in 0..opts.max_cub_iterations {
        let t = eval_t(&x);
        let mut objective: Vec<Box<dyn convexkit::Smooth>> = Vec::new();
        for i in 0..n {
            objective.push(Box::new(NegLog {
                weight: 1.0 / LN_2,
                arg: Affine::constant(1.0).add(nl + i, 1.0),
            }));
        }
        let mut prob = Problem::new(nl + n, Sum(objective));
        for l in layout.lmis("") {
            prob.add_lmi(l);
        }
        add_cub_constraints(&mut prob, &forms, order, &power, &t, &zeta, nl);
        for i in 0..n {
            prob.constrain(format!("qos user {i}"), Affine::constant(zeta_min).add(nl + i, -1.0));
        }
        let mut x0 = x.clone();
        x0.extend(zeta.iter().map(|z| z * (1.0 - 1e-6)));
        let (sol, _) = convexkit::solve(&prob, &x0, &opts.barrier)?;
        iterations += 1;
        let xn = sol[..nl].to_vec();
        let zn = sinrs(order, &power, &eval_t(&xn));
        let value = rate_of(&zn);
        let prev = *trace.last().expect("non-empty");
        if value < prev {
            break;
        }
        trace.push(value);
        x = xn;
        zeta = zn;
        if value - prev < opts.tolerance {
            break;
        }
    }
    let t = eval_t(&x);
    let alphas = order
        .weak
        .iter()
        .map(|&w| alpha_of(t[w], zeta[w]))
        .collect();

    let score = |c: &StarCoefficients| -> Option<f64> {
        let g = user_gains(scenario, assignment, c);
        if !order.sic_consistent(&g) {
            return None;
        }
        let r = noma_rates(order, &power, &g);
        if r.iter().any(|v| *v < cfg.qos_rate) {
            return None;
        }
        Some(r.iter().sum())
    };
    let out = gaussian_randomize(&layout, &x, mode, std::slice::from_ref(start), opts.samples, rng, score)?;
    let (order_out, fallback, rounded) = match out.score {
        Some(v) => (order.clone(), false, v),
        None => {
            let g = user_gains(scenario, assignment, &out.coeffs);
            let o = DecodingOrder::from_gains(assignment, &g, &scenario.layout.regions)?;
            let v = noma_rates(&o, &power, &g).iter().sum();
            (o, true, v)
        }
    };
    Ok(CubOutcome {
        coeffs: out.coeffs,
        order: order_out,
        relaxed: x,
        layout,
        trace,
        alphas,
        zetas: zeta,
        iterations,
        rounded_sum_rate: rounded,
        fallback,
        power,
        restored,
    })
}

/// GP variables: `r_i = 1 + SINR_i`, and `m_i = 1 / gain_i`.
#[derive(Debug, Clone, PartialEq)]
pub struct NomaRates {
    pub r: Vec<f64>,
    pub m: Vec<f64>,
}

/// Optimal powers for fixed gains and order. The sum-rate is maximized
/// over `r` as a GP and powers follow from the rates in decoding order.
pub fn gp_power(
    order: &DecodingOrder,
    gains: &[f64],
    p_max: f64,
    qos: f64,
    settings: &BarrierSettings,
) -> Result<(Vec<f64>, NomaRates, SolveReport)> {
    let n = gains.len();
    if gains.iter().any(|g| !(*g > 0.0)) {
        return Err(Error::Domain("gains must be positive".into()));
    }
    let m: Vec<f64> = gains.iter().map(|g| 1.0 / g).collect();
    let denom = p_max + order.weak.iter().map(|&w| m[w]).sum::<f64>();
    let mut budget = Vec::new();
    for (k, (&s, &w)) in order.strong.iter().zip(&order.weak).enumerate() {
        let diff = m[w] - m[s];
        if diff < 0.0 {
            return Err(Error::Precondition(format!(
                "subchannel {k}: weak user has the larger gain"
            )));
        }
        budget.push(Monomial::new(m[s] / denom, vec![(s, 1.0), (w, 1.0)]));
        if diff > 0.0 {
            budget.push(Monomial::new(diff / denom, vec![(w, 1.0)]));
        }
    }
    let objective = Posynomial(vec![Monomial::new(1.0, (0..n).map(|i| (i, -1.0)).collect())]);
    let mut gp = GpProblem::new(n, objective);
    gp.constrain("power budget", Posynomial(budget));
    for i in 0..n {
        gp.constrain(format!("r[{i}] >= 1"), Posynomial(vec![Monomial::new(1.0, vec![(i, -1.0)])]));
        if qos > 0.0 {
            gp.constrain(
                format!("qos user {i}"),
                Posynomial(vec![Monomial::new(qos.exp2(), vec![(i, -1.0)])]),
            );
        }
    }
    let p0 = 0.9 * p_max / n as f64;
    let mut r0 = vec![1.0; n];
    for (&s, &w) in order.strong.iter().zip(&order.weak) {
        r0[s] = 1.0 + p0 / m[s];
        r0[w] = 1.0 + p0 / (p0 + m[w]);
    }
    let (r, report) = solve_gp(&gp, &r0, settings)?;
    let mut power = vec![0.0; n];
    for (&s, &w) in order.strong.iter().zip(&order.weak) {
        power[s] = (r[s] - 1.0) * m[s];
        power[w] = (r[w] - 1.0) * (m[w] + power[s]);
    }
    Ok((power, NomaRates { r, m }, report))
}

/// Diagnostics row of one pipeline stage.
#[derive(Debug, Clone, PartialEq)]
pub struct StageDiag {
    pub stage: &'static str,
    pub objective: f64,
    pub iterations: usize,
    pub feasible: bool,
}

#[derive(Debug, Clone)]
pub struct NomaSolution {
    pub assignment: Assignment,
    pub order: DecodingOrder,
    pub coeffs: StarCoefficients,
    pub power: Vec<f64>,
    pub gains: Vec<f64>,
    pub rates: Vec<f64>,
    pub sum_rate: f64,
    pub gp: NomaRates,
    /// Equal power, initial coefficients and gain-based order.
    pub initial_sum_rate: f64,
    pub sdp_relaxation: Option<f64>,
    pub cub_trace: Vec<f64>,
    pub cub_iterations: usize,
    pub fallback: bool,
    pub stages: Vec<StageDiag>,
}

impl NomaSolution {
    /// `stage,objective,iterations,feasible` rows.
    pub fn stages_csv(&self) -> String {
        let mut s = String::from("stage,objective,iterations,feasible\n");
        for d in &self.stages {
            let _ = writeln!(s, "{},{},{},{}", d.stage, d.objective, d.iterations, d.feasible);
        }
        s
    }
}

/// Steps 2 and 3 for a given order, starting from `start`.
#[allow(clippy::too_many_arguments)]
pub fn noma_with_order(
    scenario: &Scenario,
    assignment: &Assignment,
    order: &DecodingOrder,
    start: &StarCoefficients,
    initial: &StarCoefficients,
    mode: SurfaceMode,
    opts: &NomaOptions,
    trial_seed: u64,
) -> Result<NomaSolution> {
    let cfg = &scenario.config;
    let n = assignment.num_users();
    let uniform = vec![cfg.p_max / n as f64; n];
    let mut words = vec![seed::tag("cub")];
    words.extend(assignment.key());
    words.extend(order.key());
    let mut rng = seed::rng(seed::derive(trial_seed, &words));
    let cub = cub_beamforming(scenario, assignment, order, &uniform, start, mode, opts, &mut rng)?;
    let gains = user_gains(scenario, assignment, &cub.coeffs);
    let (power, gp, gp_report) = gp_power(&cub.order, &gains, cfg.p_max, cfg.qos_rate, &opts.barrier)?;
    let rates = noma_rates(&cub.order, &power, &gains);
    let sum_rate = rates.iter().sum();
    let init_gains = user_gains(scenario, assignment, initial);
    let init_order = DecodingOrder::from_gains(assignment, &init_gains, &scenario.layout.regions)?;
    let initial_sum_rate = noma_rates(&init_order, &uniform, &init_gains).iter().sum();
    let stages = vec![
        StageDiag {
            stage: "cub",
            objective: *cub.trace.last().expect("non-empty"),
            iterations: cub.iterations,
            feasible: !cub.fallback,
        },
        StageDiag {
            stage: "gp",
            objective: sum_rate,
            iterations: gp_report.newton_iterations,
            feasible: true,
        },
    ];
    Ok(NomaSolution {
        assignment: assignment.clone(),
        order: cub.order,
        coeffs: cub.coeffs,
        power,
        gains,
        rates,
        sum_rate,
        gp,
        initial_sum_rate,
        sdp_relaxation: None,
        cub_trace: cub.trace,
        cub_iterations: cub.iterations,
        fallback: cub.fallback,
        stages,
    })
}

/// Step 1 alone: orders and coefficients from the relaxation.
pub fn proposed_orders(
    scenario: &Scenario,
    assignment: &Assignment,
    initial: &StarCoefficients,
    mode: SurfaceMode,
    opts: &NomaOptions,
    trial_seed: u64,
) -> Result<OrderOutcome> {
    let mut words = vec![seed::tag("orders")];
    words.extend(assignment.key());
    let mut rng = seed::rng(seed::derive(trial_seed, &words));
    decide_orders(scenario, assignment, mode, initial, opts, &mut rng)
}

/// Full three-step pipeline for a fixed assignment.
pub fn three_step_noma(
    scenario: &Scenario,
    assignment: &Assignment,
    initial: &StarCoefficients,
    mode: SurfaceMode,
    opts: &NomaOptions,
    trial_seed: u64,
) -> Result<NomaSolution> {
    let step1 = proposed_orders(scenario, assignment, initial, mode, opts, trial_seed)?;
    let mut sol = noma_with_order(
        scenario,
        assignment,
        &step1.order,
        &step1.coeffs,
        initial,
        mode,
        opts,
        trial_seed,
    )?;
    sol.sdp_relaxation = Some(step1.relaxation);
    sol.stages.insert(
        0,
        StageDiag {
            stage: "orders",
            objective: step1.relaxation,
            iterations: step1.report.newton_iterations,
            feasible: true,
        },
    );
    Ok(sol)
}

/// Orders taken from the initial coefficients' gains.
pub fn cascaded_orders(scenario: &Scenario, assignment: &Assignment, initial: &StarCoefficients) -> Result<DecodingOrder> {
    let g = matching::snapshot_gains(scenario, initial);
    let per_user: Vec<f64> = (0..assignment.num_users()).map(|i| g[assignment.channel_of(i)][i]).collect();
    DecodingOrder::from_gains(assignment, &per_user, &scenario.layout.regions)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rate_examples() {
        assert!((noma_rate(1.0, 5.0, 3.0, 0.0, 1.0) - 2.0).abs() < 1e-15);
        assert!((noma_rate(1.0, 1.0, 1e12, 1.0, 1.0) - 1.0).abs() < 1e-9);
        assert!((noma_rate(0.5, 0.25, 4.0, 1.0, 1.0) - 1.0).abs() < 1e-15);
    }

    fn pair() -> Assignment {
        Assignment::from_pairs(vec![vec![0, 1]], 2).unwrap()
    }

    #[test]
    fn gp_recovery_identity() {
        let gains = [5.0, 1.5];
        let order = DecodingOrder {
            strong: vec![0],
            weak: vec![1],
        };
        let (p, nr, _) = gp_power(&order, &gains, 1.5, 0.1, &BarrierSettings::default()).unwrap();
        let rates = noma_rates(&order, &p, &gains);
        for i in 0..2 {
            assert!((rates[i] - nr.r[i].log2()).abs() < 1e-8);
        }
        assert!((p.iter().sum::<f64>() - 1.5).abs() < 1e-6, "{p:?}");
    }

    #[test]
    fn gp_binding_qos() {
        let gains = [50.0, 0.8];
        let order = DecodingOrder {
            strong: vec![0],
            weak: vec![1],
        };
        let qos = 0.5;
        let (p, _, _) = gp_power(&order, &gains, 1.0, qos, &BarrierSettings::default()).unwrap();
        let rates = noma_rates(&order, &p, &gains);
        let low = rates.iter().cloned().fold(f64::INFINITY, f64::min);
        assert!((low - qos).abs() < 1e-6, "{rates:?}");
    }

    #[test]
    fn gp_rejects_reversed_order() {
        let order = DecodingOrder {
            strong: vec![1],
            weak: vec![0],
        };
        let r = gp_power(&order, &[5.0, 1.0], 1.0, 0.0, &BarrierSettings::default());
        assert!(matches!(r, Err(Error::Precondition(_))));
    }

    #[test]
    fn order_masks_cover_all() {
        let a = Assignment::from_pairs(vec![vec![0, 3], vec![1, 2]], 4).unwrap();
        let all = DecodingOrder::all(&a).unwrap();
        assert_eq!(all.len(), 4);
        let one = DecodingOrder::all(&pair()).unwrap();
        assert_eq!(one.len(), 2);
    }
}
