//! Variable layout for a coupled pair of Hermitian PSD matrices
//! `(W_t, W_r)` with `diag(W_t) + diag(W_r) = 1`.
//!
//! Each side keeps only the rows of elements active on that side. An
//! element active on both sides owns one diagonal variable `x` with
//! `W_t[m, m] = x`, `W_r[m, m] = 1 - x`; an element active on one side has
//! a fixed unit diagonal there. Every upper off-diagonal entry
//! `W[a, b] = u + j v` owns two real variables.

use nalgebra::DMatrix;
use num_complex::Complex64;

use super::barrier::{Lmi, LmiTerm};
use super::functional::Affine;
use crate::starface::{StarCoefficients, SurfaceMode};
use crate::sysmodel::Side;

#[derive(Debug, Clone)]
pub struct PsdLayout {
    num_elements: usize,
    offset: usize,
    active: [Vec<usize>; 2],
    /// Diagonal variable per element (both sides active), else `None`.
    diag: Vec<Option<usize>>,
    /// `(re, im)` variable of local pair `(a, b)`, `a < b`, per side.
    off: [Vec<(usize, usize)>; 2],
    num_vars: usize,
}

fn pair_index(n: usize, a: usize, b: usize) -> usize {
    debug_assert!(a < b && b < n);
    a * (2 * n - a - 1) / 2 + (b - a - 1)
}

impl PsdLayout {
    /// Layout whose variables start at index `offset`.
    pub fn new(num_elements: usize, mode: SurfaceMode, offset: usize) -> Self {
        let active = [
            mode.active_elements(Side::T, num_elements),
            mode.active_elements(Side::R, num_elements),
        ];
        let mut next = offset;
        let mut diag = vec![None; num_elements];
        for (m, d) in diag.iter_mut().enumerate() {
            if mode.is_active(Side::T, m, num_elements) && mode.is_active(Side::R, m, num_elements) {
                *d = Some(next);
                next += 1;
            }
        }
        let mut off: [Vec<(usize, usize)>; 2] = [Vec::new(), Vec::new()];
        for s in 0..2 {
            let n = active[s].len();
            for _ in 0..n * n.saturating_sub(1) / 2 {
                off[s].push((next, next + 1));
                next += 2;
            }
        }
        Self {
            num_elements,
            offset,
            active,
            diag,
            off,
            num_vars: next - offset,
        }
    }

    pub fn num_vars(&self) -> usize {
        self.num_vars
    }

    pub fn offset(&self) -> usize {
        self.offset
    }

    pub fn end(&self) -> usize {
        self.offset + self.num_vars
    }

    pub fn num_elements(&self) -> usize {
        self.num_elements
    }

    pub fn active(&self, side: Side) -> &[usize] {
        &self.active[side.index()]
    }

    /// Diagonal entry `W_side[m, m]` as an affine form.
    pub fn diag_entry(&self, side: Side, m: usize) -> Affine {
        match (self.diag[m], side) {
            (Some(v), Side::T) => Affine::var(v),
            (Some(v), Side::R) => Affine::constant(1.0).add(v, -1.0),
            (None, _) => {
                if self.active[side.index()].contains(&m) {
                    Affine::constant(1.0)
                } else {
                    Affine::constant(0.0)
                }
            }
        }
    }

    /// `Tr(W_side q q^H)` as an affine form in the layout variables.
    pub fn gain(&self, side: Side, q: &[Complex64]) -> Affine {
        let act = &self.active[side.index()];
        let n = act.len();
        let mut form = Affine::default();
        for &m in act {
            let w = q[m].norm_sqr();
            form = form.plus(&self.diag_entry(side, m).scaled(w));
        }
        for a in 0..n {
            for b in a + 1..n {
                let qba = q[act[b]] * q[act[a]].conj();
                let (u, v) = self.off[side.index()][pair_index(n, a, b)];
                form = form.add(u, 2.0 * qba.re).add(v, -2.0 * qba.im);
            }
        }
        form.compact()
    }

    /// Real-embedding LMIs `[[Re W, -Im W], [Im W, Re W]] >= 0`, one per
    /// side with at least one active element.
    pub fn lmis(&self, prefix: &str) -> Vec<Lmi> {
        let mut out = Vec::new();
        for side in Side::BOTH {
            let s = side.index();
            let act = &self.active[s];
            let n = act.len();
            if n == 0 {
                continue;
            }
            let dim = 2 * n;
            let mut constant = DMatrix::zeros(dim, dim);
            let mut terms = Vec::new();
            for (a, &m) in act.iter().enumerate() {
                let d = self.diag_entry(side, m);
                constant[(a, a)] = d.constant;
                constant[(n + a, n + a)] = d.constant;
                for &(var, c) in &d.terms {
                    terms.push(LmiTerm {
                        var,
                        entries: vec![(a, a, c), (n + a, n + a, c)],
                    });
                }
            }
            for a in 0..n {
                for b in a + 1..n {
                    let (u, v) = self.off[s][pair_index(n, a, b)];
                    terms.push(LmiTerm {
                        var: u,
                        entries: vec![
                            (a, b, 1.0),
                            (b, a, 1.0),
                            (n + a, n + b, 1.0),
                            (n + b, n + a, 1.0),
                        ],
                    });
                    terms.push(LmiTerm {
                        var: v,
                        entries: vec![
                            (a, n + b, -1.0),
                            (n + b, a, -1.0),
                            (b, n + a, 1.0),
                            (n + a, b, 1.0),
                        ],
                    });
                }
            }
            out.push(Lmi {
                name: format!("{prefix}W_{side} psd"),
                dim,
                constant,
                terms,
            });
        }
        out
    }

    /// Strictly feasible point: even split, zero off-diagonals.
    pub fn interior(&self, x: &mut [f64]) {
        for v in x[self.offset..self.end()].iter_mut() {
            *v = 0.0;
        }
        for d in self.diag.iter().flatten() {
            x[*d] = 0.5;
        }
    }

    /// Writes `W_side = w w^H` with `w = conj(v)`, `v` the element responses
    /// of `coeffs`, into the layout variables.
    pub fn encode_rank_one(&self, coeffs: &StarCoefficients, x: &mut [f64]) {
        for (m, d) in self.diag.iter().enumerate() {
            if let Some(v) = d {
                x[*v] = coeffs.beta(Side::T, m);
            }
        }
        for side in Side::BOTH {
            let s = side.index();
            let act = &self.active[s];
            let n = act.len();
            let v = coeffs.beam(side);
            for a in 0..n {
                for b in a + 1..n {
                    let w = v[act[a]].conj() * v[act[b]];
                    let (iu, iv) = self.off[s][pair_index(n, a, b)];
                    x[iu] = w.re;
                    x[iv] = w.im;
                }
            }
        }
    }

    /// Full `M x M` matrix of one side (rows of inactive elements zero).
    pub fn decode(&self, side: Side, x: &[f64]) -> DMatrix<Complex64> {
        let s = side.index();
        let act = &self.active[s];
        let n = act.len();
        let mut w = DMatrix::from_element(self.num_elements, self.num_elements, Complex64::new(0.0, 0.0));
        for &m in act {
            w[(m, m)] = Complex64::new(self.diag_entry(side, m).eval(x), 0.0);
        }
        for a in 0..n {
            for b in a + 1..n {
                let (iu, iv) = self.off[s][pair_index(n, a, b)];
                let z = Complex64::new(x[iu], x[iv]);
                w[(act[a], act[b])] = z;
                w[(act[b], act[a])] = z.conj();
            }
        }
        w
    }
}
