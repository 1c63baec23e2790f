//! Smooth convex building blocks for the barrier solver.
//!
//! Every functional reports its value, adds `w * gradient` into a dense
//! buffer and `w * hessian` into a dense matrix. Values outside the domain
//! of a functional are `+inf`, which the line search treats as infeasible.

use nalgebra::DMatrix;

pub trait Smooth: Send + Sync {
    fn value(&self, x: &[f64]) -> f64;
    fn add_gradient(&self, x: &[f64], w: f64, g: &mut [f64]);
    fn add_hessian(&self, x: &[f64], w: f64, h: &mut DMatrix<f64>);
}

/// Sparse affine form `c + sum_j a_j x_j`.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Affine {
    pub terms: Vec<(usize, f64)>,
    pub constant: f64,
}

impl Affine {
    pub fn constant(c: f64) -> Self {
        Self {
            terms: Vec::new(),
            constant: c,
        }
    }

    pub fn var(j: usize) -> Self {
        Self::term(j, 1.0)
    }

    pub fn term(j: usize, a: f64) -> Self {
        Self {
            terms: vec![(j, a)],
            constant: 0.0,
        }
    }

    pub fn eval(&self, x: &[f64]) -> f64 {
        self.terms
            .iter()
            .fold(self.constant, |acc, &(j, a)| acc + a * x[j])
    }

    pub fn add(mut self, j: usize, a: f64) -> Self {
        self.terms.push((j, a));
        self
    }

    pub fn offset(mut self, c: f64) -> Self {
        self.constant += c;
        self
    }

    pub fn scaled(mut self, s: f64) -> Self {
        self.constant *= s;
        for t in &mut self.terms {
            t.1 *= s;
        }
        self
    }

    pub fn plus(mut self, other: &Affine) -> Self {
        self.constant += other.constant;
        self.terms.extend_from_slice(&other.terms);
        self
    }

    pub fn minus(self, other: &Affine) -> Self {
        self.plus(&other.clone().scaled(-1.0))
    }

    /// Merges duplicate indices and drops zero coefficients.
    pub fn compact(mut self) -> Self {
        self.terms.sort_by_key(|t| t.0);
        let mut merged: Vec<(usize, f64)> = Vec::with_capacity(self.terms.len());
        for (j, a) in self.terms {
            match merged.last_mut() {
                Some(last) if last.0 == j => last.1 += a,
                _ => merged.push((j, a)),
            }
        }
        merged.retain(|t| t.1 != 0.0);
        self.terms = merged;
        self
    }

    fn add_outer(&self, w: f64, h: &mut DMatrix<f64>) {
        for &(i, a) in &self.terms {
            for &(j, b) in &self.terms {
                h[(i, j)] += w * a * b;
            }
        }
    }
}

impl Smooth for Affine {
    fn value(&self, x: &[f64]) -> f64 {
        self.eval(x)
    }

    fn add_gradient(&self, _x: &[f64], w: f64, g: &mut [f64]) {
        for &(j, a) in &self.terms {
            g[j] += w * a;
        }
    }

    fn add_hessian(&self, _x: &[f64], _w: f64, _h: &mut DMatrix<f64>) {}
}

/// `sum_j c_j a_j(x)^2 + l(x)` with `c_j >= 0`.
#[derive(Debug, Clone, Default)]
pub struct Quadratic {
    pub squares: Vec<(f64, Affine)>,
    pub linear: Affine,
}

impl Smooth for Quadratic {
    fn value(&self, x: &[f64]) -> f64 {
        self.squares
            .iter()
            .map(|(c, a)| {
                let v = a.eval(x);
                c * v * v
            })
            .sum::<f64>()
            + self.linear.eval(x)
    }

    fn add_gradient(&self, x: &[f64], w: f64, g: &mut [f64]) {
        for (c, a) in &self.squares {
            let s = 2.0 * c * a.eval(x) * w;
            a.add_gradient(x, s, g);
        }
        self.linear.add_gradient(x, w, g);
    }

    fn add_hessian(&self, _x: &[f64], w: f64, h: &mut DMatrix<f64>) {
        for (c, a) in &self.squares {
            a.add_outer(2.0 * c * w, h);
        }
    }
}

/// `ln sum_k exp(a_k(x))`, the log-domain image of a posynomial.
#[derive(Debug, Clone)]
pub struct LogSumExp {
    pub terms: Vec<Affine>,
}

impl LogSumExp {
    fn weights(&self, x: &[f64]) -> (f64, Vec<f64>) {
        let vals: Vec<f64> = self.terms.iter().map(|a| a.eval(x)).collect();
        let top = vals.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let exps: Vec<f64> = vals.iter().map(|v| (v - top).exp()).collect();
        let s: f64 = exps.iter().sum();
        (top + s.ln(), exps.into_iter().map(|e| e / s).collect())
    }
}

impl Smooth for LogSumExp {
    fn value(&self, x: &[f64]) -> f64 {
        self.weights(x).0
    }

    fn add_gradient(&self, x: &[f64], w: f64, g: &mut [f64]) {
        let (_, pi) = self.weights(x);
        for (a, p) in self.terms.iter().zip(pi) {
            a.add_gradient(x, w * p, g);
        }
    }

    fn add_hessian(&self, x: &[f64], w: f64, h: &mut DMatrix<f64>) {
        let (_, pi) = self.weights(x);
        let mut mean = Affine::default();
        for (a, p) in self.terms.iter().zip(&pi) {
            a.add_outer(w * p, h);
            mean = mean.plus(&a.clone().scaled(*p));
        }
        mean.compact().add_outer(-w, h);
    }
}

/// `-w ln(a(x))`, domain `a(x) > 0`.
#[derive(Debug, Clone)]
pub struct NegLog {
    pub weight: f64,
    pub arg: Affine,
}

impl Smooth for NegLog {
    fn value(&self, x: &[f64]) -> f64 {
        let a = self.arg.eval(x);
        if a > 0.0 {
            -self.weight * a.ln()
        } else {
            f64::INFINITY
        }
    }

    fn add_gradient(&self, x: &[f64], w: f64, g: &mut [f64]) {
        let a = self.arg.eval(x);
        self.arg.add_gradient(x, -w * self.weight / a, g);
    }

    fn add_hessian(&self, x: &[f64], w: f64, h: &mut DMatrix<f64>) {
        let a = self.arg.eval(x);
        self.arg.add_outer(w * self.weight / (a * a), h);
    }
}

/// `c / a(x)` with `c >= 0`, domain `a(x) > 0`.
#[derive(Debug, Clone)]
pub struct Reciprocal {
    pub coeff: f64,
    pub arg: Affine,
}

impl Smooth for Reciprocal {
    fn value(&self, x: &[f64]) -> f64 {
        let a = self.arg.eval(x);
        if a > 0.0 {
            self.coeff / a
        } else {
            f64::INFINITY
        }
    }

    fn add_gradient(&self, x: &[f64], w: f64, g: &mut [f64]) {
        let a = self.arg.eval(x);
        self.arg.add_gradient(x, -w * self.coeff / (a * a), g);
    }

    fn add_hessian(&self, x: &[f64], w: f64, h: &mut DMatrix<f64>) {
        let a = self.arg.eval(x);
        self.arg.add_outer(2.0 * w * self.coeff / (a * a * a), h);
    }
}

/// `offset - w * s(x) ln(1 + gain * p(x) / s(x))`: the negated rate of a
/// time-shared link with power `p` and time share `s`, jointly convex in
/// `(p, s)` on `s > 0`.
#[derive(Debug, Clone)]
pub struct NegPerspectiveLog {
    pub weight: f64,
    pub gain: f64,
    pub power: Affine,
    pub share: Affine,
    pub offset: f64,
}

impl NegPerspectiveLog {
    /// `(F, dF/dp, dF/ds, d2F/dp2, d2F/dpds, d2F/ds2)` of
    /// `F = s ln(1 + g p / s)`.
    fn parts(&self, x: &[f64]) -> Option<[f64; 6]> {
        let p = self.power.eval(x);
        let s = self.share.eval(x);
        if !(s > 0.0) {
            return None;
        }
        let g = self.gain;
        let u = p / s;
        let z = 1.0 + g * u;
        if !(z > 0.0) {
            return None;
        }
        let f = s * z.ln();
        let fp = g / z;
        let fs = z.ln() - g * u / z;
        let c = g * g / (s * z * z);
        Some([f, fp, fs, -c, c * u, -c * u * u])
    }
}

impl Smooth for NegPerspectiveLog {
    fn value(&self, x: &[f64]) -> f64 {
        match self.parts(x) {
            Some(p) => self.offset - self.weight * p[0],
            None => f64::INFINITY,
        }
    }

    fn add_gradient(&self, x: &[f64], w: f64, g: &mut [f64]) {
        if let Some(p) = self.parts(x) {
            self.power.add_gradient(x, -w * self.weight * p[1], g);
            self.share.add_gradient(x, -w * self.weight * p[2], g);
        }
    }

    fn add_hessian(&self, x: &[f64], w: f64, h: &mut DMatrix<f64>) {
        if let Some(p) = self.parts(x) {
            let s = -w * self.weight;
            for &(i, a) in &self.power.terms {
                for &(j, b) in &self.power.terms {
                    h[(i, j)] += s * p[3] * a * b;
                }
                for &(j, b) in &self.share.terms {
                    h[(i, j)] += s * p[4] * a * b;
                    h[(j, i)] += s * p[4] * a * b;
                }
            }
            for &(i, a) in &self.share.terms {
                for &(j, b) in &self.share.terms {
                    h[(i, j)] += s * p[5] * a * b;
                }
            }
        }
    }
}

/// Sum of functionals.
pub struct Sum(pub Vec<Box<dyn Smooth>>);

impl Smooth for Sum {
    fn value(&self, x: &[f64]) -> f64 {
        self.0.iter().map(|f| f.value(x)).sum()
    }

    fn add_gradient(&self, x: &[f64], w: f64, g: &mut [f64]) {
        for f in &self.0 {
            f.add_gradient(x, w, g);
        }
    }

    fn add_hessian(&self, x: &[f64], w: f64, h: &mut DMatrix<f64>) {
        for f in &self.0 {
            f.add_hessian(x, w, h);
        }
    }
}
