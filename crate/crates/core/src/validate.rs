//! Feasibility checks that recompute everything from the raw channels,
//! sharing no code with the solvers.

use std::f64::consts::TAU;

use num_complex::Complex64;

use crate::matching::Assignment;
use crate::noma::{DecodingOrder, NomaSolution};
use crate::oma::OmaSolution;
use crate::starface::{StarCoefficients, SurfaceMode};
use crate::sysmodel::{Scenario, Side};

pub const ENERGY_TOL: f64 = 1e-12;
pub const POWER_TOL: f64 = 1e-6;
pub const QOS_TOL: f64 = 1e-6;
pub const SHARE_TOL: f64 = 1e-9;
/// Relative slack on the SIC gain comparison (rounding only).
pub const SIC_TOL: f64 = 1e-9;

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Validation {
    pub violations: Vec<String>,
}

impl Validation {
    pub fn ok(&self) -> bool {
        self.violations.is_empty()
    }

    fn fail(&mut self, msg: String) {
        self.violations.push(msg);
    }
}

fn raw_gain(scenario: &Scenario, coeffs: &StarCoefficients, k: usize, i: usize) -> f64 {
    let side = scenario.layout.regions[i];
    let q = &scenario.channels.q[k][i];
    let mut acc = Complex64::new(0.0, 0.0);
    for (m, qm) in q.iter().enumerate() {
        let beta = match side {
            Side::T => coeffs.beta(Side::T, m),
            Side::R => 1.0 - coeffs.beta(Side::T, m),
        };
        acc += Complex64::from_polar(beta.sqrt(), coeffs.theta(side, m)) * qm;
    }
    acc.norm_sqr() / scenario.config.noise_power
}

fn check_coefficients(v: &mut Validation, coeffs: &StarCoefficients, mode: SurfaceMode) {
    for m in 0..coeffs.num_elements() {
        let bt = coeffs.beta(Side::T, m);
        let br = coeffs.beta(Side::R, m);
        if (bt + br - 1.0).abs() > ENERGY_TOL {
            v.fail(format!("element {m}: beta_t + beta_r = {}", bt + br));
        }
        if !(0.0..=1.0).contains(&bt) || !(0.0..=1.0).contains(&br) {
            v.fail(format!("element {m}: split ({bt}, {br}) outside [0, 1]"));
        }
        for side in Side::BOTH {
            let th = coeffs.theta(side, m);
            if !(0.0..TAU).contains(&th) {
                v.fail(format!("element {m}: theta_{side} = {th} outside [0, 2pi)"));
            }
        }
    }
    if !mode.admits(coeffs) {
        v.fail(format!("coefficients violate the {mode} mask"));
    }
}

fn check_assignment(v: &mut Validation, scenario: &Scenario, a: &Assignment) {
    let cfg = &scenario.config;
    if a.num_subchannels() != cfg.num_subchannels || a.num_users() != cfg.num_users {
        v.fail("assignment dimensions differ from the configuration".into());
        return;
    }
    let mut seen = vec![0usize; cfg.num_users];
    for (k, users) in a.pairs().iter().enumerate() {
        if users.len() != 2 {
            v.fail(format!("subchannel {k} carries {} users", users.len()));
        }
        for &i in users {
            seen[i] += 1;
            if a.channel_of(i) != k {
                v.fail(format!("user {i}: channel map disagrees with subchannel {k}"));
            }
        }
    }
    for (i, c) in seen.iter().enumerate() {
        if *c != 1 {
            v.fail(format!("user {i} appears {c} times"));
        }
    }
}

fn check_power(v: &mut Validation, power: &[f64], p_max: f64) {
    let total: f64 = power.iter().sum();
    if total > p_max + POWER_TOL {
        v.fail(format!("total power {total} exceeds {p_max}"));
    }
    for (i, p) in power.iter().enumerate() {
        if !(*p >= 0.0) {
            v.fail(format!("user {i}: negative power {p}"));
        }
    }
}

fn check_rates(v: &mut Validation, recomputed: &[f64], reported: &[f64], sum_rate: f64, qos: f64) {
    for (i, (r, rep)) in recomputed.iter().zip(reported).enumerate() {
        if *r < qos - QOS_TOL {
            v.fail(format!("user {i}: rate {r} below the QoS target {qos}"));
        }
        if (r - rep).abs() > 1e-9 * r.abs().max(1.0) {
            v.fail(format!("user {i}: reported rate {rep}, recomputed {r}"));
        }
    }
    let total: f64 = reported.iter().sum();
    if (total - sum_rate).abs() > 1e-9 * total.abs().max(1.0) {
        v.fail(format!("sum-rate {sum_rate} differs from the per-user total {total}"));
    }
}

/// Checks an OMA solution against every constraint of the problem.
pub fn validate_oma(scenario: &Scenario, sol: &OmaSolution, mode: SurfaceMode) -> Validation {
    let cfg = &scenario.config;
    let mut v = Validation::default();
    check_assignment(&mut v, scenario, &sol.assignment);
    check_coefficients(&mut v, &sol.coeffs, mode);
    let alloc = &sol.allocation;
    check_power(&mut v, &alloc.power, cfg.p_max);
    for (k, users) in sol.assignment.pairs().iter().enumerate() {
        let total: f64 = users.iter().map(|&i| alloc.share[i]).sum();
        if (total - 1.0).abs() > SHARE_TOL {
            v.fail(format!("subchannel {k}: time shares sum to {total}"));
        }
    }
    let mut rates = vec![0.0; cfg.num_users];
    for i in 0..cfg.num_users {
        let (p, w) = (alloc.power[i], alloc.share[i]);
        if !(0.0..=1.0).contains(&w) {
            v.fail(format!("user {i}: time share {w} outside [0, 1]"));
            continue;
        }
        if w == 0.0 {
            if p != 0.0 {
                v.fail(format!("user {i}: power {p} on a zero time share"));
            }
            continue;
        }
        let g = raw_gain(scenario, &sol.coeffs, sol.assignment.channel_of(i), i);
        rates[i] = w * (1.0 + p * g / w).log2();
    }
    check_rates(&mut v, &rates, &sol.rates, sol.sum_rate, cfg.qos_rate);
    v
}

/// Checks a NOMA solution, including SIC feasibility of the order.
pub fn validate_noma(scenario: &Scenario, sol: &NomaSolution, mode: SurfaceMode) -> Validation {
    let cfg = &scenario.config;
    let mut v = Validation::default();
    check_assignment(&mut v, scenario, &sol.assignment);
    check_coefficients(&mut v, &sol.coeffs, mode);
    check_power(&mut v, &sol.power, cfg.p_max);
    let order: &DecodingOrder = &sol.order;
    let mut rates = vec![0.0; cfg.num_users];
    for (k, (&s, &w)) in order.strong.iter().zip(&order.weak).enumerate() {
        let users = sol.assignment.users_on(k);
        if !(users.contains(&s) && users.contains(&w) && s != w) {
            v.fail(format!("subchannel {k}: order names users outside the pair"));
            continue;
        }
        let gs = raw_gain(scenario, &sol.coeffs, k, s);
        let gw = raw_gain(scenario, &sol.coeffs, k, w);
        if gs < gw * (1.0 - SIC_TOL) {
            v.fail(format!("subchannel {k}: SIC order violated, strong gain {gs} < weak gain {gw}"));
        }
        rates[s] = (1.0 + sol.power[s] * gs).log2();
        rates[w] = (1.0 + sol.power[w] * gw / (sol.power[s] * gw + 1.0)).log2();
    }
    check_rates(&mut v, &rates, &sol.rates, sol.sum_rate, cfg.qos_rate);
    v
}
