//! STAR-RIS coefficients.
//!
//! Each element splits the incident energy between the transmitted and the
//! reflected wave (`beta_t + beta_r = 1`) and imposes an independent phase
//! on each. Coefficients are stored as the transmit split plus both phase
//! vectors; the reflect split is always `1 - beta_t`, so energy
//! conservation cannot be broken by construction.
//!
//! A user served by side `n` sees the effective gain
//! `|sum_m v_n[m] q[m]|^2` with `v_n[m] = sqrt(beta_n[m]) e^{j theta_n[m]}`
//! and `q` the cascaded channel `conj(f) .* g`. Phase alignment therefore
//! means `theta_n[m] = -angle(q[m])`.

use std::f64::consts::PI;
use std::fmt::Write as _;

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::sysmodel::Side;

const TWO_PI: f64 = 2.0 * PI;

/// Wraps a phase into `[0, 2pi)`.
pub fn wrap_phase(theta: f64) -> f64 {
    let w = theta.rem_euclid(TWO_PI);
    // rem_euclid can return exactly 2pi for tiny negative inputs
    if w >= TWO_PI {
        0.0
    } else {
        w
    }
}

/// Wraps a phase difference into `(-pi, pi]`.
pub fn wrap_signed(delta: f64) -> f64 {
    let w = wrap_phase(delta);
    if w > PI {
        w - TWO_PI
    } else {
        w
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct StarCoefficients {
    beta_t: Vec<f64>,
    theta_t: Vec<f64>,
    theta_r: Vec<f64>,
}

impl StarCoefficients {
    /// Equal split and zero phases on every element.
    pub fn uniform(num_elements: usize) -> Self {
        Self {
            beta_t: vec![0.5; num_elements],
            theta_t: vec![0.0; num_elements],
            theta_r: vec![0.0; num_elements],
        }
    }

    /// Builds coefficients from a transmit split in `[0, 1]` and phases
    /// (wrapped on entry).
    pub fn new(beta_t: Vec<f64>, theta_t: Vec<f64>, theta_r: Vec<f64>) -> Result<Self> {
        let m = beta_t.len();
        if theta_t.len() != m || theta_r.len() != m {
            return Err(Error::Precondition(
                "coefficient vectors must share one length".into(),
            ));
        }
        if beta_t.iter().any(|b| !(0.0..=1.0).contains(b)) {
            return Err(Error::Domain("beta_t must lie in [0, 1]".into()));
        }
        if theta_t.iter().chain(&theta_r).any(|t| !t.is_finite()) {
            return Err(Error::Domain("phases must be finite".into()));
        }
        Ok(Self {
            beta_t,
            theta_t: theta_t.into_iter().map(wrap_phase).collect(),
            theta_r: theta_r.into_iter().map(wrap_phase).collect(),
        })
    }

    pub fn num_elements(&self) -> usize {
        self.beta_t.len()
    }

    pub fn beta(&self, side: Side, m: usize) -> f64 {
        match side {
            Side::T => self.beta_t[m],
            Side::R => 1.0 - self.beta_t[m],
        }
    }

    pub fn betas(&self, side: Side) -> Vec<f64> {
        (0..self.num_elements()).map(|m| self.beta(side, m)).collect()
    }

    pub fn theta(&self, side: Side, m: usize) -> f64 {
        match side {
            Side::T => self.theta_t[m],
            Side::R => self.theta_r[m],
        }
    }

    pub fn thetas(&self, side: Side) -> &[f64] {
        match side {
            Side::T => &self.theta_t,
            Side::R => &self.theta_r,
        }
    }

    pub fn set_beta_t(&mut self, m: usize, beta_t: f64) {
        self.beta_t[m] = beta_t.clamp(0.0, 1.0);
    }

    pub fn set_theta(&mut self, side: Side, m: usize, theta: f64) {
        let t = wrap_phase(theta);
        match side {
            Side::T => self.theta_t[m] = t,
            Side::R => self.theta_r[m] = t,
        }
    }

    /// Beamforming vector `v_n`.
    pub fn beam(&self, side: Side) -> Vec<Complex64> {
        (0..self.num_elements())
            .map(|m| Complex64::from_polar(self.beta(side, m).sqrt(), self.theta(side, m)))
            .collect()
    }

    /// `sum_m v_n[m] q[m]`, whose squared modulus is the effective gain.
    pub fn response(&self, side: Side, q: &[Complex64]) -> Complex64 {
        (0..self.num_elements())
            .map(|m| Complex64::from_polar(self.beta(side, m).sqrt(), self.theta(side, m)) * q[m])
            .sum()
    }

    pub fn effective_gain(&self, side: Side, q: &[Complex64]) -> f64 {
        effective_gain(self, q, side)
    }

    /// CSV with columns `m, beta_t, beta_r, theta_t, theta_r`.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("m,beta_t,beta_r,theta_t,theta_r\n");
        for m in 0..self.num_elements() {
            let _ = writeln!(
                out,
                "{},{},{},{},{}",
                m,
                self.beta(Side::T, m),
                self.beta(Side::R, m),
                self.theta_t[m],
                self.theta_r[m]
            );
        }
        out
    }

    /// Largest `|beta_t + beta_r - 1|` over elements.
    pub fn energy_residual(&self) -> f64 {
        (0..self.num_elements())
            .map(|m| (self.beta(Side::T, m) + self.beta(Side::R, m) - 1.0).abs())
            .fold(0.0, f64::max)
    }
}

/// Effective channel power gain of a user served by `side`.
pub fn effective_gain(coeffs: &StarCoefficients, q: &[Complex64], side: Side) -> f64 {
    coeffs.response(side, q).norm_sqr()
}

/// Phases that co-phase every element against `q` for the given split,
/// and the resulting gain `(sum_m sqrt(beta_m) |q_m|)^2`.
pub fn max_cascaded_gain(q: &[Complex64], beta: &[f64]) -> (f64, Vec<f64>) {
    let phases = q.iter().map(|z| -z.arg()).collect();
    let amp: f64 = q.iter().zip(beta).map(|(z, b)| b.sqrt() * z.norm()).sum();
    (amp * amp, phases)
}

/// Maps arbitrary raw amplitudes/phases onto the feasible set: splits are
/// clamped to `[0, 1]` and renormalized proportionally per element (`0/0`
/// becomes an even split), phases are wrapped to `[0, 2pi)`.
pub fn project_feasible(
    beta_t: &[f64],
    beta_r: &[f64],
    theta_t: &[f64],
    theta_r: &[f64],
) -> Result<StarCoefficients> {
    let m = beta_t.len();
    if beta_r.len() != m || theta_t.len() != m || theta_r.len() != m {
        return Err(Error::Precondition(
            "coefficient vectors must share one length".into(),
        ));
    }
    let any_nan = beta_t
        .iter()
        .chain(beta_r)
        .chain(theta_t)
        .chain(theta_r)
        .any(|v| v.is_nan());
    if any_nan {
        return Err(Error::Domain("NaN in raw coefficients".into()));
    }
    let split = beta_t
        .iter()
        .zip(beta_r)
        .map(|(&bt, &br)| {
            let bt = bt.clamp(0.0, 1.0);
            let br = br.clamp(0.0, 1.0);
            let s = bt + br;
            if s > 0.0 {
                bt / s
            } else {
                0.5
            }
        })
        .collect();
    let phase = |v: &[f64]| -> Vec<f64> {
        v.iter()
            .map(|&t| if t.is_finite() { wrap_phase(t) } else { 0.0 })
            .collect()
    };
    Ok(StarCoefficients {
        beta_t: split,
        theta_t: phase(theta_t),
        theta_r: phase(theta_r),
    })
}

/// Surface hardware model.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum SurfaceMode {
    /// Every element transmits and reflects.
    Star,
    /// Two adjacent conventional surfaces: elements `0..M/2` reflect only,
    /// elements `M/2..M` transmit only.
    ConventionalPair,
}

impl SurfaceMode {
    pub fn validate(self, num_elements: usize) -> Result<()> {
        if self == SurfaceMode::ConventionalPair && !num_elements.is_multiple_of(2) {
            return Err(Error::Precondition(
                "conventional pair needs an even element count".into(),
            ));
        }
        Ok(())
    }

    /// Whether element `m` radiates towards `side`.
    pub fn is_active(self, side: Side, m: usize, num_elements: usize) -> bool {
        match self {
            SurfaceMode::Star => true,
            SurfaceMode::ConventionalPair => {
                let reflect_only = m < num_elements / 2;
                (side == Side::R) == reflect_only
            }
        }
    }

    /// Element indices active on `side`.
    pub fn active_elements(self, side: Side, num_elements: usize) -> Vec<usize> {
        (0..num_elements)
            .filter(|&m| self.is_active(side, m, num_elements))
            .collect()
    }

    /// Forces the fixed splits of masked elements.
    pub fn apply(self, coeffs: &mut StarCoefficients) {
        if self == SurfaceMode::ConventionalPair {
            let m_total = coeffs.num_elements();
            for m in 0..m_total {
                let t = if self.is_active(Side::T, m, m_total) { 1.0 } else { 0.0 };
                coeffs.set_beta_t(m, t);
            }
        }
    }

    /// Whether `coeffs` respects the mask exactly.
    pub fn admits(self, coeffs: &StarCoefficients) -> bool {
        let mut c = coeffs.clone();
        self.apply(&mut c);
        c == *coeffs
    }
}

impl std::str::FromStr for SurfaceMode {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "star" => Ok(SurfaceMode::Star),
            "cr" => Ok(SurfaceMode::ConventionalPair),
            other => Err(Error::Config(format!("unknown surface {other:?}"))),
        }
    }
}

impl std::fmt::Display for SurfaceMode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            SurfaceMode::Star => "star",
            SurfaceMode::ConventionalPair => "cr",
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    #[test]
    fn scalar_gain() {
        let coeffs = StarCoefficients::new(vec![1.0], vec![0.0], vec![0.0]).unwrap();
        assert!((coeffs.effective_gain(Side::T, &[c(0.5, 0.0)]) - 0.25).abs() < 1e-15);
        assert_eq!(coeffs.effective_gain(Side::R, &[c(0.5, 0.0)]), 0.0);
    }

    #[test]
    fn phase_aligned_pair_adds_coherently() {
        let q = [c(1.0, 0.0), c(0.0, 1.0)];
        let theta: Vec<f64> = q.iter().map(|z| -z.arg()).collect();
        let coeffs = StarCoefficients::new(vec![0.5, 0.5], theta, vec![0.0, 0.0]).unwrap();
        // (sqrt(0.5) + sqrt(0.5))^2
        assert!((coeffs.effective_gain(Side::T, &q) - 2.0).abs() < 1e-12);
    }

    #[test]
    fn orthogonal_beam_gives_zero() {
        let coeffs = StarCoefficients::new(vec![1.0, 0.0], vec![0.0; 2], vec![0.0; 2]).unwrap();
        assert_eq!(coeffs.effective_gain(Side::T, &[c(0.0, 0.0), c(0.0, 1.0)]), 0.0);
    }

    #[test]
    fn max_gain_examples() {
        let (g, ph) = max_cascaded_gain(&[c(1.0, 0.0)], &[0.5]);
        assert!((g - 0.5).abs() < 1e-15);
        assert_eq!(ph, vec![0.0]);

        let (g, ph) = max_cascaded_gain(&[c(3.0, 0.0), c(0.0, 4.0)], &[1.0, 1.0]);
        assert!((g - 49.0).abs() < 1e-12);
        assert!(ph[0].abs() < 1e-15 && (ph[1] + PI / 2.0).abs() < 1e-15);

        let (g, _) = max_cascaded_gain(&[c(3.0, 1.0), c(-2.0, 4.0)], &[0.0, 0.0]);
        assert_eq!(g, 0.0);
    }

    #[test]
    fn projection_examples() {
        let p = project_feasible(&[0.7], &[0.3], &[0.0], &[0.0]).unwrap();
        assert!((p.beta(Side::T, 0) - 0.7).abs() < 1e-15);
        let p = project_feasible(&[0.8], &[0.4], &[0.0], &[0.0]).unwrap();
        assert!((p.beta(Side::T, 0) - 2.0 / 3.0).abs() < 1e-15);
        assert!((p.beta(Side::R, 0) - 1.0 / 3.0).abs() < 1e-15);
        let p = project_feasible(&[0.0], &[0.0], &[-PI / 2.0], &[7.0]).unwrap();
        assert_eq!(p.beta(Side::T, 0), 0.5);
        assert!((p.theta(Side::T, 0) - 1.5 * PI).abs() < 1e-15);
        assert!((p.theta(Side::R, 0) - (7.0 - 2.0 * PI)).abs() < 1e-15);
        assert!(matches!(
            project_feasible(&[f64::NAN], &[0.1], &[0.0], &[0.0]),
            Err(Error::Domain(_))
        ));
    }

    #[test]
    fn conventional_mask() {
        assert!(SurfaceMode::ConventionalPair.validate(5).is_err());
        let mut coeffs = StarCoefficients::uniform(4);
        SurfaceMode::ConventionalPair.apply(&mut coeffs);
        assert_eq!(coeffs.betas(Side::R), vec![1.0, 1.0, 0.0, 0.0]);
        assert_eq!(coeffs.betas(Side::T), vec![0.0, 0.0, 1.0, 1.0]);
        assert!(SurfaceMode::ConventionalPair.admits(&coeffs));
        assert!(!SurfaceMode::ConventionalPair.admits(&StarCoefficients::uniform(4)));
        assert_eq!(SurfaceMode::ConventionalPair.active_elements(Side::T, 4), vec![2, 3]);
    }

    fn arb_complex() -> impl Strategy<Value = Complex64> {
        (-3.0..3.0f64, -3.0..3.0f64).prop_map(|(a, b)| Complex64::new(a, b))
    }

    fn arb_coeffs(m: usize) -> impl Strategy<Value = StarCoefficients> {
        (
            prop::collection::vec(0.0..=1.0f64, m),
            prop::collection::vec(-10.0..10.0f64, m),
            prop::collection::vec(-10.0..10.0f64, m),
        )
            .prop_map(|(b, t, r)| StarCoefficients::new(b, t, r).unwrap())
    }

    proptest! {
        #[test]
        fn energy_conserved_after_mutation(
            mut coeffs in arb_coeffs(6),
            edits in prop::collection::vec((0usize..6, -1.0..2.0f64, -20.0..20.0f64), 1..20),
        ) {
            for (m, b, t) in edits {
                coeffs.set_beta_t(m, b);
                coeffs.set_theta(Side::R, m, t);
                prop_assert!(coeffs.energy_residual() <= 1e-12);
                let th = coeffs.theta(Side::R, m);
                prop_assert!((0.0..2.0 * PI).contains(&th));
            }
        }

        #[test]
        fn gain_invariant_under_common_rotation(
            coeffs in arb_coeffs(5),
            q in prop::collection::vec(arb_complex(), 5),
            phi in -7.0..7.0f64,
        ) {
            let g = coeffs.effective_gain(Side::T, &q);
            let mut rotated = coeffs.clone();
            for m in 0..5 {
                rotated.set_theta(Side::T, m, coeffs.theta(Side::T, m) + phi);
            }
            let g2 = rotated.effective_gain(Side::T, &q);
            prop_assert!((g - g2).abs() <= 1e-9 * (1.0 + g));
        }

        #[test]
        fn aligned_gain_bounds_any_phases(
            coeffs in arb_coeffs(5),
            q in prop::collection::vec(arb_complex(), 5),
        ) {
            for side in Side::BOTH {
                let (best, _) = max_cascaded_gain(&q, &coeffs.betas(side));
                prop_assert!(coeffs.effective_gain(side, &q) <= best * (1.0 + 1e-12) + 1e-12);
            }
        }

        #[test]
        fn masked_elements_do_not_leak(
            coeffs in arb_coeffs(6),
            q in prop::collection::vec(arb_complex(), 6),
            new_phases in prop::collection::vec(-7.0..7.0f64, 3),
        ) {
            let mode = SurfaceMode::ConventionalPair;
            let mut a = coeffs.clone();
            mode.apply(&mut a);
            let mut b = a.clone();
            // elements 0..3 reflect only: their transmit phases are irrelevant
            for (m, t) in new_phases.iter().enumerate() {
                b.set_theta(Side::T, m, *t);
            }
            let ga = a.effective_gain(Side::T, &q);
            let gb = b.effective_gain(Side::T, &q);
            prop_assert!((ga - gb).abs() <= 1e-12 * (1.0 + ga));
        }
    }
}
