//! Gaussian randomization: rank-one STAR coefficients from a relaxed
//! `(W_t, W_r)` solution.

use nalgebra::{DMatrix, SymmetricEigen};
use num_complex::Complex64;
use rand::Rng;
use rand_distr::StandardNormal;

use super::psd::PsdLayout;
use crate::error::{Error, Result};
use crate::starface::{project_feasible, StarCoefficients, SurfaceMode};
use crate::sysmodel::Side;

pub const DEFAULT_SAMPLES: usize = 500;

#[derive(Debug, Clone)]
pub struct RandomizeOutcome {
    pub coeffs: StarCoefficients,
    /// Score of the winner; `None` when no candidate was admissible.
    pub score: Option<f64>,
    /// 0 = principal eigenvector, `1..=extra` = caller candidates, then
    /// the Gaussian draws.
    pub index: usize,
    pub candidates: usize,
}

/// Eigen-decomposition of the real embedding of the active block.
struct SideFactor {
    active: Vec<usize>,
    /// Columns scaled by `sqrt(max(lambda, 0) / 2)`.
    factor: DMatrix<f64>,
    principal: Vec<Complex64>,
}

fn factor_side(layout: &PsdLayout, side: Side, x: &[f64]) -> SideFactor {
    let active = layout.active(side).to_vec();
    let n = active.len();
    let w = layout.decode(side, x);
    let mut e = DMatrix::<f64>::zeros(2 * n, 2 * n);
    for (a, &ma) in active.iter().enumerate() {
        for (b, &mb) in active.iter().enumerate() {
            let z = w[(ma, mb)];
            e[(a, b)] = z.re;
            e[(n + a, n + b)] = z.re;
            e[(a, n + b)] = -z.im;
            e[(n + a, b)] = z.im;
        }
    }
    let eig = SymmetricEigen::new(e);
    let mut factor = eig.eigenvectors.clone();
    let mut top = 0;
    for j in 0..2 * n {
        if eig.eigenvalues[j] > eig.eigenvalues[top] {
            top = j;
        }
    }
    let floor = 1e-12 * eig.eigenvalues[top].max(0.0);
    for j in 0..2 * n {
        let lambda = eig.eigenvalues[j];
        let s = if lambda > floor { (lambda / 2.0).sqrt() } else { 0.0 };
        for i in 0..2 * n {
            factor[(i, j)] *= s;
        }
    }
    let principal = (0..n)
        .map(|a| {
            Complex64::new(
                eig.eigenvectors[(a, top)],
                eig.eigenvectors[(n + a, top)],
            )
        })
        .collect();
    SideFactor {
        active,
        factor,
        principal,
    }
}

/// Builds coefficients from per-side samples `xi` (one per active element)
/// with `theta = -arg(xi)` and splits taken from `diag(W_t)`.
fn assemble(
    layout: &PsdLayout,
    x: &[f64],
    mode: SurfaceMode,
    factors: &[SideFactor; 2],
    xi: [&[Complex64]; 2],
) -> Result<StarCoefficients> {
    let m_total = layout.num_elements();
    let mut bt = vec![0.0; m_total];
    let mut br = vec![0.0; m_total];
    for m in 0..m_total {
        bt[m] = layout.diag_entry(Side::T, m).eval(x);
        br[m] = layout.diag_entry(Side::R, m).eval(x);
    }
    let mut th = [vec![0.0; m_total], vec![0.0; m_total]];
    for s in 0..2 {
        for (a, &m) in factors[s].active.iter().enumerate() {
            th[s][m] = -xi[s][a].arg();
        }
    }
    let mut c = project_feasible(&bt, &br, &th[0], &th[1])?;
    mode.apply(&mut c);
    Ok(c)
}

/// Draws `num_samples` Gaussian candidates `xi ~ CN(0, W_side)` per side,
/// maps each to feasible coefficients and keeps the best under `score`
/// (`None` marks an inadmissible candidate; the first maximum wins).
/// `extra` candidates are scored between the principal eigenvector and the
/// random draws.
pub fn gaussian_randomize<R, F>(
    layout: &PsdLayout,
    x: &[f64],
    mode: SurfaceMode,
    extra: &[StarCoefficients],
    num_samples: usize,
    rng: &mut R,
    mut score: F,
) -> Result<RandomizeOutcome>
where
    R: Rng + ?Sized,
    F: FnMut(&StarCoefficients) -> Option<f64>,
{
    if num_samples < 1 {
        return Err(Error::Domain("randomization needs at least one sample".into()));
    }
    let factors = [factor_side(layout, Side::T, x), factor_side(layout, Side::R, x)];
    let principal = assemble(
        layout,
        x,
        mode,
        &factors,
        [&factors[0].principal, &factors[1].principal],
    )?;
    let mut best = RandomizeOutcome {
        score: score(&principal),
        coeffs: principal,
        index: 0,
        candidates: 1,
    };
    let mut consider = |c: StarCoefficients, index: usize, best: &mut RandomizeOutcome| {
        best.candidates += 1;
        if let Some(v) = score(&c) {
            if best.score.is_none_or(|b| v > b) {
                best.score = Some(v);
                best.coeffs = c;
                best.index = index;
            }
        }
    };
    for (j, c) in extra.iter().enumerate() {
        consider(c.clone(), j + 1, &mut best);
    }
    let mut xi_buf: [Vec<Complex64>; 2] = [Vec::new(), Vec::new()];
    for l in 0..num_samples {
        for s in 0..2 {
            let f = &factors[s];
            let n = f.active.len();
            let z: Vec<f64> = (0..2 * n).map(|_| rng.sample(StandardNormal)).collect();
            let z = nalgebra::DVector::from_vec(z);
            let y = &f.factor * z;
            xi_buf[s] = (0..n).map(|a| Complex64::new(y[a], y[n + a])).collect();
        }
        let c = assemble(layout, x, mode, &factors, [&xi_buf[0], &xi_buf[1]])?;
        consider(c, 1 + extra.len() + l, &mut best);
    }
    Ok(best)
}
