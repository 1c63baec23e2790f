//! Geometric programs in standard form, solved in log space.
//!
//! `min p0(r)` subject to `p_i(r) <= 1`, `r > 0`, with posynomials `p_i`.
//! Substituting `x = ln r` turns each `ln p_i` into a log-sum-exp of affine
//! forms.

use super::barrier::{self, BarrierSettings, Problem, SolveReport};
use super::functional::{Affine, LogSumExp};
use crate::error::{Error, Result};

/// `c * prod_j r_j^{a_j}` with `c > 0`.
#[derive(Debug, Clone, PartialEq)]
pub struct Monomial {
    pub coeff: f64,
    pub exponents: Vec<(usize, f64)>,
}

impl Monomial {
    pub fn new(coeff: f64, exponents: Vec<(usize, f64)>) -> Self {
        Self { coeff, exponents }
    }

    pub fn eval(&self, r: &[f64]) -> f64 {
        self.exponents
            .iter()
            .fold(self.coeff, |acc, &(j, a)| acc * r[j].powf(a))
    }

    fn log_form(&self) -> Result<Affine> {
        if !(self.coeff > 0.0) || !self.coeff.is_finite() {
            return Err(Error::Domain(format!(
                "monomial coefficient must be positive, got {}",
                self.coeff
            )));
        }
        let mut a = Affine::constant(self.coeff.ln());
        for &(j, e) in &self.exponents {
            a = a.add(j, e);
        }
        Ok(a.compact())
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Posynomial(pub Vec<Monomial>);

impl Posynomial {
    pub fn eval(&self, r: &[f64]) -> f64 {
        self.0.iter().map(|m| m.eval(r)).sum()
    }

    fn log_form(&self) -> Result<LogSumExp> {
        if self.0.is_empty() {
            return Err(Error::Precondition("empty posynomial".into()));
        }
        Ok(LogSumExp {
            terms: self.0.iter().map(Monomial::log_form).collect::<Result<_>>()?,
        })
    }
}

#[derive(Debug, Clone)]
pub struct GpProblem {
    pub num_vars: usize,
    pub objective: Posynomial,
    pub constraints: Vec<(String, Posynomial)>,
}

impl GpProblem {
    pub fn new(num_vars: usize, objective: Posynomial) -> Self {
        Self {
            num_vars,
            objective,
            constraints: Vec::new(),
        }
    }

    pub fn constrain(&mut self, name: impl Into<String>, p: Posynomial) {
        self.constraints.push((name.into(), p));
    }
}

/// Solves `gp` from the positive start `r0`; returns the optimal `r`.
pub fn solve_gp(
    gp: &GpProblem,
    r0: &[f64],
    settings: &BarrierSettings,
) -> Result<(Vec<f64>, SolveReport)> {
    if r0.len() != gp.num_vars || r0.iter().any(|v| !(*v > 0.0)) {
        return Err(Error::Precondition(
            "GP start must be a positive vector of the right length".into(),
        ));
    }
    let objective: Box<dyn super::functional::Smooth> = if gp.objective.0.len() == 1 {
        Box::new(gp.objective.0[0].log_form()?)
    } else {
        Box::new(gp.objective.log_form()?)
    };
    let mut problem = Problem {
        num_vars: gp.num_vars,
        objective,
        constraints: Vec::new(),
        lmis: Vec::new(),
    };
    for (name, p) in &gp.constraints {
        if p.0.len() == 1 {
            problem.constrain(name.clone(), p.0[0].log_form()?);
        } else {
            problem.constrain(name.clone(), p.log_form()?);
        }
    }
    let x0: Vec<f64> = r0.iter().map(|v| v.ln()).collect();
    let (x, report) = barrier::solve(&problem, &x0, settings)?;
    Ok((x.into_iter().map(f64::exp).collect(), report))
}
