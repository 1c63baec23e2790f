//! Dense log-barrier interior-point method.
//!
//! Minimizes a smooth convex objective subject to smooth convex
//! inequalities `f_i(x) <= 0` and linear matrix inequalities
//! `A_0 + sum_j x_j A_j >= 0` on real symmetric blocks. Hermitian PSD
//! variables enter through their real embedding `[[Re, -Im], [Im, Re]]`.
//!
//! Equality constraints are not supported; callers eliminate them by
//! parametrization. A Phase-I problem (`min s` subject to `f_i <= s`,
//! `A + sI >= 0`) supplies a strictly feasible start when the caller's
//! guess is not one.

use std::fmt::Write as _;

use nalgebra::{Cholesky, DMatrix, DVector, Dyn, SymmetricEigen};

use super::functional::Smooth;
use crate::error::{Error, Result};

pub struct Constraint {
    pub name: String,
    pub f: Box<dyn Smooth>,
}

impl Constraint {
    pub fn new(name: impl Into<String>, f: impl Smooth + 'static) -> Self {
        Self {
            name: name.into(),
            f: Box::new(f),
        }
    }
}

/// Coefficient matrix of one variable in an LMI, as symmetric triplets
/// (both `(r, c)` and `(c, r)` listed for off-diagonal entries).
#[derive(Debug, Clone)]
pub struct LmiTerm {
    pub var: usize,
    pub entries: Vec<(usize, usize, f64)>,
}

#[derive(Debug, Clone)]
pub struct Lmi {
    pub name: String,
    pub dim: usize,
    pub constant: DMatrix<f64>,
    pub terms: Vec<LmiTerm>,
}

impl Lmi {
    pub fn assemble(&self, x: &[f64]) -> DMatrix<f64> {
        let mut a = self.constant.clone();
        for t in &self.terms {
            let v = x[t.var];
            if v != 0.0 {
                for &(r, c, e) in &t.entries {
                    a[(r, c)] += v * e;
                }
            }
        }
        a
    }

    fn assemble_shifted(&self, x: &[f64], shift: f64) -> DMatrix<f64> {
        let mut a = self.assemble(x);
        if shift != 0.0 {
            for d in 0..self.dim {
                a[(d, d)] += shift;
            }
        }
        a
    }

    pub fn min_eigenvalue(&self, x: &[f64]) -> f64 {
        SymmetricEigen::new(self.assemble(x))
            .eigenvalues
            .iter()
            .cloned()
            .fold(f64::INFINITY, f64::min)
    }
}

pub struct Problem {
    pub num_vars: usize,
    pub objective: Box<dyn Smooth>,
    pub constraints: Vec<Constraint>,
    pub lmis: Vec<Lmi>,
}

impl Problem {
    pub fn new(num_vars: usize, objective: impl Smooth + 'static) -> Self {
        Self {
            num_vars,
            objective: Box::new(objective),
            constraints: Vec::new(),
            lmis: Vec::new(),
        }
    }

    pub fn constrain(&mut self, name: impl Into<String>, f: impl Smooth + 'static) {
        self.constraints.push(Constraint::new(name, f));
    }

    pub fn add_lmi(&mut self, lmi: Lmi) {
        self.lmis.push(lmi);
    }

    /// Barrier parameter: number of scalar constraints plus LMI orders.
    pub fn barrier_degree(&self) -> f64 {
        (self.constraints.len() + self.lmis.iter().map(|l| l.dim).sum::<usize>()) as f64
    }

    /// Largest constraint violation at `x` (0 when feasible) and the name
    /// of the worst constraint.
    pub fn violation(&self, x: &[f64]) -> (f64, String) {
        let mut worst = (f64::NEG_INFINITY, String::new());
        for c in &self.constraints {
            let v = c.f.value(x);
            let v = if v.is_nan() { f64::INFINITY } else { v };
            if v > worst.0 {
                worst = (v, c.name.clone());
            }
        }
        for l in &self.lmis {
            let v = -l.min_eigenvalue(x);
            if v > worst.0 {
                worst = (v, l.name.clone());
            }
        }
        (worst.0.max(0.0), worst.1)
    }

    /// Whether every constraint holds strictly at `x`.
    pub fn strictly_feasible(&self, x: &[f64]) -> bool {
        self.constraints.iter().all(|c| c.f.value(x) < 0.0)
            && self
                .lmis
                .iter()
                .all(|l| Cholesky::new(l.assemble(x)).is_some())
            && self.objective.value(x).is_finite()
    }
}

#[derive(Debug, Clone)]
pub struct BarrierSettings {
    pub t0: f64,
    pub mu: f64,
    pub newton_tol: f64,
    pub gap_tol: f64,
    pub ls_alpha: f64,
    pub ls_beta: f64,
    pub max_newton: usize,
    pub max_outer: usize,
    /// Record a per-centering trace (iteration, objective, gap).
    pub trace: bool,
}

impl Default for BarrierSettings {
    fn default() -> Self {
        Self {
            t0: 1.0,
            mu: 10.0,
            newton_tol: 1e-9,
            gap_tol: 1e-9,
            ls_alpha: 0.25,
            ls_beta: 0.5,
            max_newton: 100,
            max_outer: 80,
            trace: false,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Termination {
    /// Duality-gap bound fell below `gap_tol`.
    Converged,
    /// Newton made no progress at the current barrier weight.
    Stalled,
    /// Outer iteration cap hit.
    IterationCap,
}

#[derive(Debug, Clone)]
pub struct SolveReport {
    /// Objective (minimization form) after each centering step.
    pub objective_trace: Vec<f64>,
    /// Duality-gap bound `degree / t` after each centering step.
    pub gap_trace: Vec<f64>,
    pub termination: Termination,
    pub outer_iterations: usize,
    pub newton_iterations: usize,
    pub max_violation: f64,
    pub used_phase_one: bool,
}

impl SolveReport {
    /// `iteration,objective,kkt_residual` rows.
    pub fn trace_csv(&self) -> String {
        let mut s = String::from("iteration,objective,kkt_residual\n");
        for (i, (o, g)) in self.objective_trace.iter().zip(&self.gap_trace).enumerate() {
            let _ = writeln!(s, "{},{},{}", i + 1, o, g);
        }
        s
    }
}

/// The objective/constraint system the Newton engine works on; either the
/// caller's problem or its Phase-I augmentation with slack `x[n]`.
struct View<'a> {
    p: &'a Problem,
    phase_one: bool,
    /// Phase I relaxes only the constraints violated at the guess; the
    /// others stay hard.
    slack_c: Vec<bool>,
    slack_l: Vec<bool>,
}

impl<'a> View<'a> {
    fn plain(p: &'a Problem) -> Self {
        Self {
            p,
            phase_one: false,
            slack_c: vec![false; p.constraints.len()],
            slack_l: vec![false; p.lmis.len()],
        }
    }

    fn dim(&self) -> usize {
        self.p.num_vars + usize::from(self.phase_one)
    }

    fn slack(&self, x: &[f64]) -> f64 {
        if self.phase_one {
            x[self.p.num_vars]
        } else {
            0.0
        }
    }

    fn degree(&self) -> f64 {
        self.p.barrier_degree()
    }

    fn objective(&self, x: &[f64]) -> f64 {
        if self.phase_one {
            x[self.p.num_vars]
        } else {
            self.p.objective.value(x)
        }
    }

    /// `t f0 + barrier`, or `None` when `x` is not strictly feasible.
    fn phi(&self, x: &[f64], t: f64) -> Option<f64> {
        let s = self.slack(x);
        let f0 = self.objective(x);
        if !f0.is_finite() {
            return None;
        }
        let mut v = t * f0;
        for (c, &sl) in self.p.constraints.iter().zip(&self.slack_c) {
            let f = c.f.value(x) - if sl { s } else { 0.0 };
            if !(f < 0.0) {
                return None;
            }
            v -= (-f).ln();
        }
        for (l, &sl) in self.p.lmis.iter().zip(&self.slack_l) {
            let a = l.assemble_shifted(x, if sl { s } else { 0.0 });
            let ch = Cholesky::new(a)?;
            let logdet: f64 = ch.l_dirty().diagonal().iter().map(|d| d.ln()).sum::<f64>() * 2.0;
            v -= logdet;
        }
        Some(v)
    }

    /// Gradient and Hessian of `phi` at a strictly feasible `x`.
    fn derivatives(&self, x: &[f64], t: f64) -> Result<(DVector<f64>, DMatrix<f64>)> {
        let n = self.dim();
        let base = self.p.num_vars;
        let s = self.slack(x);
        let mut g = vec![0.0; n];
        let mut h = DMatrix::<f64>::zeros(n, n);
        if self.phase_one {
            g[base] += t;
        } else {
            self.p.objective.add_gradient(x, t, &mut g);
            self.p.objective.add_hessian(x, t, &mut h);
        }
        let mut gi = vec![0.0; n];
        let mut nz = Vec::with_capacity(n);
        for (c, &sl) in self.p.constraints.iter().zip(&self.slack_c) {
            let f = c.f.value(x) - if sl { s } else { 0.0 };
            let inv = -1.0 / f;
            gi.iter_mut().for_each(|v| *v = 0.0);
            c.f.add_gradient(x, 1.0, &mut gi);
            if sl {
                gi[base] -= 1.0;
            }
            c.f.add_hessian(x, inv, &mut h);
            nz.clear();
            nz.extend((0..n).filter(|&j| gi[j] != 0.0));
            let inv2 = inv * inv;
            for &i in &nz {
                g[i] += inv * gi[i];
                for &j in &nz {
                    h[(i, j)] += inv2 * gi[i] * gi[j];
                }
            }
        }
        for (l, &sl) in self.p.lmis.iter().zip(&self.slack_l) {
            let a = l.assemble_shifted(x, if sl { s } else { 0.0 });
            let ch = Cholesky::new(a)
                .ok_or_else(|| Error::Numerical(format!("{} lost definiteness", l.name)))?;
            let sinv = ch.inverse();
            let mut terms: Vec<(usize, &[Entry])> =
                l.terms.iter().map(|t| (t.var, t.entries.as_slice())).collect();
            let identity: Vec<Entry>;
            if sl {
                identity = (0..l.dim).map(|d| (d, d, 1.0)).collect();
                terms.push((base, identity.as_slice()));
            }
            for (a_idx, &(va, ea)) in terms.iter().enumerate() {
                let tr: f64 = ea.iter().map(|&(r, c, v)| v * sinv[(c, r)]).sum();
                g[va] -= tr;
                for &(vb, eb) in &terms[a_idx..] {
                    let mut acc = 0.0;
                    for &(p, q, v) in ea {
                        for &(r, c, w) in eb {
                            acc += v * w * sinv[(q, r)] * sinv[(c, p)];
                        }
                    }
                    h[(va, vb)] += acc;
                    if va != vb {
                        h[(vb, va)] += acc;
                    }
                }
            }
        }
        Ok((DVector::from_vec(g), h))
    }
}

fn newton_direction(g: &DVector<f64>, h: DMatrix<f64>) -> Result<DVector<f64>> {
    let n = g.len();
    let scale = (0..n).map(|i| h[(i, i)].abs()).fold(0.0, f64::max).max(1e-300);
    let mut ridge = 0.0;
    for _ in 0..30 {
        let mut hr = h.clone();
        if ridge > 0.0 {
            for i in 0..n {
                hr[(i, i)] += ridge;
            }
        }
        if let Some(ch) = Cholesky::<f64, Dyn>::new(hr) {
            let d = ch.solve(&(-g));
            if d.iter().all(|v| v.is_finite()) {
                return Ok(d);
            }
        }
        ridge = if ridge == 0.0 { 1e-14 * scale } else { ridge * 10.0 };
    }
    Err(Error::Numerical("Newton system is not positive definite".into()))
}

struct Outcome {
    x: Vec<f64>,
    report: SolveReport,
}

/// Sparse matrix entry `(row, col, value)`.
type Entry = (usize, usize, f64);
type EarlyStop<'a> = dyn Fn(&[f64]) -> bool + 'a;

/// Runs the barrier schedule from a strictly feasible `x`. `early` is
/// checked after every Newton step and stops the run when it returns true.
/// In Phase-I mode the run also stops once the dual bound proves
/// infeasibility.
fn run(
    view: &View<'_>,
    mut x: Vec<f64>,
    settings: &BarrierSettings,
    early: Option<&EarlyStop<'_>>,
) -> Result<(Outcome, bool)> {
    let degree = view.degree();
    let mut t = settings.t0;
    let mut report = SolveReport {
        objective_trace: Vec::new(),
        gap_trace: Vec::new(),
        termination: Termination::IterationCap,
        outer_iterations: 0,
        newton_iterations: 0,
        max_violation: 0.0,
        used_phase_one: false,
    };
    let n = view.dim();
    let mut xn = vec![0.0; n];
    for _ in 0..settings.max_outer {
        report.outer_iterations += 1;
        let mut stalled = false;
        for _ in 0..settings.max_newton {
            let (g, h) = view.derivatives(&x, t)?;
            let d = newton_direction(&g, h)?;
            let dec = -g.dot(&d);
            if dec / 2.0 <= settings.newton_tol {
                break;
            }
            let phi0 = view
                .phi(&x, t)
                .ok_or_else(|| Error::Numerical("iterate left the interior".into()))?;
            let mut step = 1.0;
            let mut accepted = false;
            for _ in 0..80 {
                for j in 0..n {
                    xn[j] = x[j] + step * d[j];
                }
                if let Some(phi) = view.phi(&xn, t) {
                    if phi <= phi0 - settings.ls_alpha * step * dec {
                        accepted = true;
                        break;
                    }
                }
                step *= settings.ls_beta;
            }
            report.newton_iterations += 1;
            if !accepted {
                stalled = true;
                break;
            }
            std::mem::swap(&mut x, &mut xn);
            if let Some(stop) = early {
                if stop(&x) {
                    return Ok((Outcome { x, report }, true));
                }
            }
        }
        let gap = degree / t;
        report.objective_trace.push(view.objective(&x));
        report.gap_trace.push(gap);
        if view.phase_one && view.objective(&x) - gap > 0.0 {
            report.termination = Termination::Converged;
            break;
        }
        if gap < settings.gap_tol {
            report.termination = Termination::Converged;
            break;
        }
        if stalled {
            report.termination = Termination::Stalled;
            break;
        }
        t *= settings.mu;
    }
    Ok((Outcome { x, report }, false))
}

/// Finds a strictly feasible point starting from `guess`.
pub fn phase_one(problem: &Problem, guess: &[f64], settings: &BarrierSettings) -> Result<Vec<f64>> {
    if problem.strictly_feasible(guess) {
        return Ok(guess.to_vec());
    }
    let mut worst = f64::NEG_INFINITY;
    let mut slack_c = Vec::with_capacity(problem.constraints.len());
    for c in &problem.constraints {
        let v = c.f.value(guess);
        if !v.is_finite() {
            return Err(Error::Numerical(format!(
                "start point outside the domain of {}",
                c.name
            )));
        }
        slack_c.push(v >= 0.0);
        if v >= 0.0 {
            worst = worst.max(v);
        }
    }
    let mut slack_l = Vec::with_capacity(problem.lmis.len());
    for l in &problem.lmis {
        let v = -l.min_eigenvalue(guess);
        slack_l.push(v >= 0.0);
        if v >= 0.0 {
            worst = worst.max(v);
        }
    }
    if !problem.objective.value(guess).is_finite() {
        return Err(Error::Numerical("start point outside the objective domain".into()));
    }
    let mut x = guess.to_vec();
    x.push(worst + worst.abs().max(1e-3));
    let view = View {
        p: problem,
        phase_one: true,
        slack_c,
        slack_l,
    };
    let n = problem.num_vars;
    let stop = |x: &[f64]| x[n] < 0.0;
    let (out, hit) = run(&view, x, settings, Some(&stop))?;
    let mut xs = out.x;
    xs.truncate(n);
    if hit && problem.strictly_feasible(&xs) {
        return Ok(xs);
    }
    let (v, name) = problem.violation(&xs);
    Err(Error::Infeasible(format!(
        "no strictly feasible point; {name} violated by {v:.3e}"
    )))
}

/// Minimizes `problem` starting from `start` (Phase I is run first when
/// `start` is not strictly feasible).
pub fn solve(
    problem: &Problem,
    start: &[f64],
    settings: &BarrierSettings,
) -> Result<(Vec<f64>, SolveReport)> {
    if start.len() != problem.num_vars {
        return Err(Error::Precondition(format!(
            "start has {} entries, problem has {} variables",
            start.len(),
            problem.num_vars
        )));
    }
    let used_phase_one = !problem.strictly_feasible(start);
    let x0 = if used_phase_one {
        phase_one(problem, start, settings)?
    } else {
        start.to_vec()
    };
    let view = View::plain(problem);
    let (out, _) = run(&view, x0, settings, None)?;
    let mut report = out.report;
    report.used_phase_one = used_phase_one;
    report.max_violation = problem.violation(&out.x).0;
    Ok((out.x, report))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::convexkit::functional::{Affine, NegLog, Quadratic};

    #[test]
    fn scalar_bound() {
        // min x^2 s.t. x >= 1
        let mut p = Problem::new(
            1,
            Quadratic {
                squares: vec![(1.0, Affine::var(0))],
                linear: Affine::default(),
            },
        );
        p.constrain("x>=1", Affine::constant(1.0).add(0, -1.0));
        let (x, rep) = solve(&p, &[3.0], &BarrierSettings::default()).unwrap();
        assert!((x[0] - 1.0).abs() < 1e-8, "{x:?}");
        assert_eq!(rep.termination, Termination::Converged);
        assert!(!rep.used_phase_one);
        for w in rep.objective_trace.windows(2) {
            assert!(w[1] <= w[0] + 1e-9);
        }
    }

    #[test]
    fn phase_one_from_infeasible_guess() {
        let mut p = Problem::new(
            1,
            Quadratic {
                squares: vec![(1.0, Affine::var(0))],
                linear: Affine::default(),
            },
        );
        p.constrain("x>=1", Affine::constant(1.0).add(0, -1.0));
        let (x, rep) = solve(&p, &[-5.0], &BarrierSettings::default()).unwrap();
        assert!(rep.used_phase_one);
        assert!((x[0] - 1.0).abs() < 1e-8);
    }

    #[test]
    fn detects_infeasibility() {
        let mut p = Problem::new(1, Affine::var(0));
        p.constrain("x>=2", Affine::constant(2.0).add(0, -1.0));
        p.constrain("x<=1", Affine::constant(-1.0).add(0, 1.0));
        match solve(&p, &[0.0], &BarrierSettings::default()) {
            Err(Error::Infeasible(msg)) => assert!(msg.contains("x>=2") || msg.contains("x<=1")),
            other => panic!("expected infeasibility, got {other:?}"),
        }
    }

    #[test]
    fn lmi_trace_minimization() {
        // min x0 + x1 s.t. [[x0, 1], [1, x1]] >= 0  -> x0 = x1 = 1
        let lmi = Lmi {
            name: "psd".into(),
            dim: 2,
            constant: DMatrix::from_row_slice(2, 2, &[0.0, 1.0, 1.0, 0.0]),
            terms: vec![
                LmiTerm {
                    var: 0,
                    entries: vec![(0, 0, 1.0)],
                },
                LmiTerm {
                    var: 1,
                    entries: vec![(1, 1, 1.0)],
                },
            ],
        };
        let mut p = Problem::new(2, Affine::var(0).add(1, 1.0));
        p.add_lmi(lmi);
        let (x, _) = solve(&p, &[0.0, 0.0], &BarrierSettings::default()).unwrap();
        assert!((x[0] - 1.0).abs() < 1e-6 && (x[1] - 1.0).abs() < 1e-6, "{x:?}");
    }

    #[test]
    fn log_objective_with_budget() {
        // max ln(x0) + ln(x1) s.t. x0 + 2 x1 <= 4 -> x0 = 2, x1 = 1
        let obj = crate::convexkit::functional::Sum(vec![
            Box::new(NegLog {
                weight: 1.0,
                arg: Affine::var(0),
            }),
            Box::new(NegLog {
                weight: 1.0,
                arg: Affine::var(1),
            }),
        ]);
        let mut p = Problem::new(2, obj);
        p.constrain("budget", Affine::constant(-4.0).add(0, 1.0).add(1, 2.0));
        let (x, rep) = solve(&p, &[0.5, 0.5], &BarrierSettings::default()).unwrap();
        assert!((x[0] - 2.0).abs() < 1e-7 && (x[1] - 1.0).abs() < 1e-7, "{x:?}");
        assert!(rep.trace_csv().starts_with("iteration,objective,kkt_residual\n"));
    }
}
