//! Grid and brute-force oracles shared by the integration suites.
#![allow(dead_code)]

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use star_alloc::convexkit::{water_filling, BarrierSettings};
use star_alloc::matching::{initial_coefficients, is_stronger, Assignment};
use star_alloc::noma::{self, DecodingOrder, NomaOptions};
use star_alloc::oma::solve_power_time;
use star_alloc::seed;
use star_alloc::starface::SurfaceMode;
use star_alloc::sysmodel::{Scenario, Side, SystemConfig};
use star_alloc::{Complex64, Error};

pub fn rng(s: u64) -> ChaCha8Rng {
    seed::rng(seed::derive(s, &[seed::tag("tests")]))
}

pub fn scenario(k: usize, m: usize, s: u64) -> Scenario {
    Scenario::sample(&SystemConfig::with_dims(k, m), seed::trial_seed(0, s as usize)).unwrap()
}

/// Log-uniform gain in `[lo, hi]`.
pub fn gain(r: &mut ChaCha8Rng, lo: f64, hi: f64) -> f64 {
    (lo.ln() + r.random::<f64>() * (hi.ln() - lo.ln())).exp()
}

/// Maximizes `f` over the box by a dense grid, then re-grids around the
/// best cell `rounds` times. `f` returns `None` outside the feasible set.
pub fn grid_max_2d(
    f: impl Fn(f64, f64) -> Option<f64>,
    x: (f64, f64),
    y: (f64, f64),
    n: usize,
    rounds: usize,
) -> Option<(f64, f64, f64)> {
    let (mut xl, mut xh, mut yl, mut yh) = (x.0, x.1, y.0, y.1);
    let mut best: Option<(f64, f64, f64)> = None;
    for _ in 0..=rounds {
        let dx = (xh - xl) / n as f64;
        let dy = (yh - yl) / n as f64;
        for a in 0..=n {
            for b in 0..=n {
                let (u, v) = (xl + a as f64 * dx, yl + b as f64 * dy);
                if let Some(val) = f(u, v) {
                    if best.is_none_or(|bb| val > bb.0) {
                        best = Some((val, u, v));
                    }
                }
            }
        }
        let (_, bu, bv) = best?;
        xl = (bu - 2.0 * dx).max(x.0);
        xh = (bu + 2.0 * dx).min(x.1);
        yl = (bv - 2.0 * dy).max(y.0);
        yh = (bv + 2.0 * dy).min(y.1);
    }
    best
}

fn log2_1p(v: f64) -> f64 {
    (1.0 + v).log2()
}

/// Sum-rate of parallel channels with power split on a simplex grid.
pub fn water_filling_grid(gains: &[f64], p_max: f64, noise: f64) -> f64 {
    let obj = |p: &[f64]| p.iter().zip(gains).map(|(p, g)| log2_1p(p * g / noise)).sum::<f64>();
    match gains.len() {
        1 => obj(&[p_max]),
        2 => {
            let n = 200_000;
            (0..=n)
                .map(|a| {
                    let p0 = p_max * a as f64 / n as f64;
                    obj(&[p0, p_max - p0])
                })
                .fold(f64::NEG_INFINITY, f64::max)
        }
        3 => grid_max_2d(
            |a, b| (a + b <= p_max).then(|| obj(&[a, b, (p_max - a - b).max(0.0)])),
            (0.0, p_max),
            (0.0, p_max),
            400,
            3,
        )
        .unwrap()
        .0,
        _ => panic!("grid oracle supports up to 3 channels"),
    }
}

/// Best OMA sum-rate of one time-shared pair over a grid of
/// `(p_1, omega_1)` with the budget spent.
pub fn power_time_grid(g1: f64, g2: f64, p_max: f64, qos: f64) -> Option<f64> {
    let rate = |p: f64, w: f64, g: f64| if w > 0.0 { w * log2_1p(p * g / w) } else { 0.0 };
    grid_max_2d(
        |p1, w1| {
            let (r1, r2) = (rate(p1, w1, g1), rate(p_max - p1, 1.0 - w1, g2));
            (r1 >= qos && r2 >= qos).then_some(r1 + r2)
        },
        (0.0, p_max),
        (0.0, 1.0),
        300,
        4,
    )
    .map(|b| b.0)
}

/// Best NOMA sum-rate of one pair (strong gain `gs`, weak `gw`) over a
/// grid of `(p_s, p_w)` in the budget triangle.
pub fn noma_pair_grid(gs: f64, gw: f64, p_max: f64, qos: f64) -> Option<f64> {
    grid_max_2d(
        |ps, pw| {
            if ps + pw > p_max {
                return None;
            }
            let rs = log2_1p(ps * gs);
            let rw = log2_1p(pw * gw / (ps * gw + 1.0));
            (rs >= qos && rw >= qos).then_some(rs + rw)
        },
        (0.0, p_max),
        (0.0, p_max),
        300,
        4,
    )
    .map(|b| b.0)
}

/// `max |sqrt(b0) q0 + sqrt(b1) q1 e^{j d}|^2` over the phase grid.
fn best_two_element(q: &[Complex64], b0: f64, b1: f64, steps: usize) -> f64 {
    let (a0, a1) = (q[0].norm(), q[1].norm());
    let phi = (q[1] * q[0].conj()).arg();
    let cross = 2.0 * (b0 * b1).sqrt() * a0 * a1;
    let base = b0 * a0 * a0 + b1 * a1 * a1;
    (0..steps)
        .map(|s| {
            let d = std::f64::consts::TAU * s as f64 / steps as f64;
            base + cross * (d + phi).cos()
        })
        .fold(f64::NEG_INFINITY, f64::max)
}

/// Brute-force maximum of the total gain of all users over rank-one
/// coefficients of a 2-element surface: amplitudes on a 0.01 grid, one
/// relative phase per side on a pi/100 grid (a common phase per side
/// leaves every gain unchanged). Only valid with one user per side.
pub fn rank_one_total_gain_m2(scenario: &Scenario, a: &Assignment) -> f64 {
    assert_eq!(scenario.config.num_elements, 2);
    let t_user = (0..a.num_users()).find(|&i| scenario.layout.region(i) == Side::T);
    let r_user = (0..a.num_users()).find(|&i| scenario.layout.region(i) == Side::R);
    assert_eq!(a.num_users(), 2, "one user per side");
    let qt = t_user.map(|i| scenario.qn(a.channel_of(i), i));
    let qr = r_user.map(|i| scenario.qn(a.channel_of(i), i));
    let steps = 200;
    let mut best = f64::NEG_INFINITY;
    for x0 in 0..=100 {
        for x1 in 0..=100 {
            let (b0, b1) = (x0 as f64 / 100.0, x1 as f64 / 100.0);
            let gt = qt.as_ref().map_or(0.0, |q| best_two_element(q, b0, b1, steps));
            let gr = qr.as_ref().map_or(0.0, |q| best_two_element(q, 1.0 - b0, 1.0 - b1, steps));
            best = best.max(gt + gr);
        }
    }
    best
}

/// Equal-power snapshot utility of user `i`, written out from the rate
/// definitions.
pub fn snapshot_utility(gains: &[Vec<f64>], regions: &[Side], power: f64, noma: bool, a: &Assignment, i: usize) -> f64 {
    let k = a.channel_of(i);
    let s = power * gains[k][i];
    match (a.partner(i), noma) {
        (None, _) => log2_1p(s),
        (Some(_), false) => 0.5 * log2_1p(s / 0.5),
        (Some(j), true) => {
            if is_stronger(gains[k][i], gains[k][j], regions[i], regions[j], i, j) {
                log2_1p(s)
            } else {
                log2_1p(s / (s + 1.0))
            }
        }
    }
}

/// Every swap-blocking pair found by a full scan; `same_region` limits the
/// scan to pairs from one region.
pub fn scan_blocking(
    gains: &[Vec<f64>],
    regions: &[Side],
    power: f64,
    noma: bool,
    a: &Assignment,
    same_region: bool,
) -> Vec<(usize, usize)> {
    let u = |a: &Assignment, i: usize| snapshot_utility(gains, regions, power, noma, a, i);
    let ch = |a: &Assignment, k: usize| a.users_on(k).iter().map(|&i| u(a, i)).sum::<f64>();
    let mut out = Vec::new();
    for i in 0..a.num_users() {
        for j in i + 1..a.num_users() {
            let (ki, kj) = (a.channel_of(i), a.channel_of(j));
            if ki == kj || (same_region && regions[i] != regions[j]) {
                continue;
            }
            let b = a.swapped(i, j);
            let before = [u(a, i), u(a, j), ch(a, ki), ch(a, kj)];
            let after = [u(&b, i), u(&b, j), ch(&b, ki), ch(&b, kj)];
            let weak = before.iter().zip(&after).all(|(x, y)| y >= x);
            let strict = before.iter().zip(&after).any(|(x, y)| *y > x + 1e-12);
            if weak && strict {
                out.push((i, j));
            }
        }
    }
    out
}

/// Solver value against oracle value for one random instance; `None`
/// on either side means infeasible.
#[derive(Debug, Clone, Copy)]
pub struct Comparison {
    pub solver: Option<f64>,
    pub oracle: Option<f64>,
}

impl Comparison {
    /// Relative gap, or `None` when exactly one side is infeasible.
    pub fn gap(&self) -> Option<f64> {
        match (self.solver, self.oracle) {
            (Some(a), Some(b)) => Some((a - b).abs() / b.abs().max(1.0)),
            (None, None) => Some(0.0),
            _ => None,
        }
    }
}

fn feasible_value(r: Result<f64, Error>) -> Option<f64> {
    match r {
        Ok(v) => Some(v),
        Err(Error::Infeasible(_)) => None,
        Err(e) => panic!("unexpected solver error: {e}"),
    }
}

pub fn water_filling_case(s: u64) -> Comparison {
    let mut r = rng(seed::derive(s, &[seed::tag("wf")]));
    let n = 1 + (r.random::<u32>() % 3) as usize;
    let gains: Vec<f64> = (0..n).map(|_| gain(&mut r, 0.05, 50.0)).collect();
    let p_max = gain(&mut r, 0.1, 5.0);
    let (p, _) = water_filling(&gains, p_max, 1.0).unwrap();
    let value = p.iter().zip(&gains).map(|(p, g)| log2_1p(p * g)).sum();
    Comparison {
        solver: Some(value),
        oracle: Some(water_filling_grid(&gains, p_max, 1.0)),
    }
}

pub fn power_time_case(s: u64) -> Comparison {
    let mut r = rng(seed::derive(s, &[seed::tag("power-time")]));
    let gains = [gain(&mut r, 0.2, 200.0), gain(&mut r, 0.2, 200.0)];
    let p_max = 1.5;
    let qos = 0.6 * r.random::<f64>();
    let a = Assignment::from_pairs(vec![vec![0, 1]], 2).unwrap();
    let solver = solve_power_time(&a, &gains, p_max, qos, None, &BarrierSettings::default())
        .map(|(alloc, _)| alloc.sum_rate(&gains));
    Comparison {
        solver: feasible_value(solver),
        oracle: power_time_grid(gains[0], gains[1], p_max, qos),
    }
}

pub fn noma_power_case(s: u64) -> Comparison {
    let mut r = rng(seed::derive(s, &[seed::tag("noma-power")]));
    let gains = [gain(&mut r, 0.2, 200.0), gain(&mut r, 0.2, 200.0)];
    let (st, wk) = if gains[0] >= gains[1] { (0, 1) } else { (1, 0) };
    let order = DecodingOrder {
        strong: vec![st],
        weak: vec![wk],
    };
    let p_max = 1.5;
    let qos = 0.6 * r.random::<f64>();
    let solver = noma::gp_power(&order, &gains, p_max, qos, &BarrierSettings::default())
        .map(|(p, _, _)| noma::noma_rates(&order, &p, &gains).iter().sum());
    Comparison {
        solver: feasible_value(solver),
        oracle: noma_pair_grid(gains[st], gains[wk], p_max, qos),
    }
}

/// Relaxation value of the order-deciding SDP against the rank-one brute
/// force on a two-element surface with one user per side.
pub fn relaxation_case(s: u64) -> (f64, f64) {
    let sc = scenario(1, 2, s);
    let a = Assignment::from_pairs(vec![vec![0, 1]], 2).unwrap();
    let init = initial_coefficients(&sc, SurfaceMode::Star).unwrap();
    let opts = NomaOptions::from_config(&sc);
    let out = noma::proposed_orders(&sc, &a, &init, SurfaceMode::Star, &opts, s).unwrap();
    (out.relaxation, rank_one_total_gain_m2(&sc, &a))
}
