//! System configuration, user geometry and Rician channel generation.
//!
//! The access point sits at the origin and the surface centre at
//! `surface_center`; users are placed on a horizontal circle around the
//! surface. Users whose x-coordinate lies beyond the surface plane are in
//! the transmission region, the others in the reflection region.
//!
//! Subchannels carry independent small-scale realizations of both hops
//! (same geometry, fresh NLoS draws per subchannel).

use std::f64::consts::PI;
use std::fmt;
use std::path::Path;
use std::str::FromStr;

use num_complex::Complex64;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};
use crate::starface::StarCoefficients;

/// Side of the surface a user is located on (and therefore served by).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Side {
    /// Transmission region, beyond the surface as seen from the AP.
    T,
    /// Reflection region, on the AP's side of the surface.
    R,
}

impl Side {
    pub fn index(self) -> usize {
        match self {
            Side::T => 0,
            Side::R => 1,
        }
    }

    pub fn other(self) -> Side {
        match self {
            Side::T => Side::R,
            Side::R => Side::T,
        }
    }

    pub const BOTH: [Side; 2] = [Side::T, Side::R];
}

impl fmt::Display for Side {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Side::T => "T",
            Side::R => "R",
        })
    }
}

/// Deterministic line-of-sight array response.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LosModel {
    /// Half-wavelength uniform linear array along the surface's y axis:
    /// element `m` has phase `pi * m * sin(phi)`, `phi` measured from the
    /// surface normal.
    HalfWavelengthUla,
    /// All-ones response (broadside for every link).
    Broadside,
}

impl FromStr for LosModel {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "ula" => Ok(LosModel::HalfWavelengthUla),
            "broadside" => Ok(LosModel::Broadside),
            other => Err(Error::Config(format!("unknown los_model {other:?}"))),
        }
    }
}

impl fmt::Display for LosModel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            LosModel::HalfWavelengthUla => "ula",
            LosModel::Broadside => "broadside",
        })
    }
}

/// Network configuration. Powers in watts, distances in metres, rates in
/// bit/s/Hz, Rician factors and the reference path loss as linear values.
#[derive(Debug, Clone, PartialEq)]
pub struct SystemConfig {
    pub num_subchannels: usize,
    pub num_users: usize,
    pub num_elements: usize,
    pub p_max: f64,
    pub qos_rate: f64,
    /// Noise power per subchannel (identical across subchannels).
    pub noise_power: f64,
    /// Path loss at the 1 m reference distance.
    pub pathloss_ref: f64,
    pub exponent_ap_surface: f64,
    pub exponent_surface_user: f64,
    pub rician_ap_surface: f64,
    pub rician_surface_user: f64,
    pub surface_center: [f64; 3],
    pub user_radius: f64,
    pub rng_seed: u64,
    /// Outer-loop convergence tolerance of the iterative algorithms.
    pub tolerance: f64,
    pub los_model: LosModel,
}

pub fn db_to_linear(db: f64) -> f64 {
    10f64.powf(db / 10.0)
}

pub fn dbm_to_watts(dbm: f64) -> f64 {
    db_to_linear(dbm - 30.0)
}

impl Default for SystemConfig {
    fn default() -> Self {
        Self {
            num_subchannels: 3,
            num_users: 6,
            num_elements: 8,
            p_max: 1.5,
            qos_rate: 0.1,
            noise_power: dbm_to_watts(-80.0),
            pathloss_ref: 1e-3,
            exponent_ap_surface: 2.2,
            exponent_surface_user: 2.8,
            rician_ap_surface: db_to_linear(3.0),
            rician_surface_user: db_to_linear(3.0),
            surface_center: [50.0, 0.0, 0.0],
            user_radius: 5.0,
            rng_seed: 0,
            tolerance: 1e-4,
            los_model: LosModel::HalfWavelengthUla,
        }
    }
}

impl SystemConfig {
    /// Desk-scale default with `K` subchannels, `2K` users and `M` elements.
    pub fn with_dims(num_subchannels: usize, num_elements: usize) -> Self {
        Self {
            num_subchannels,
            num_users: 2 * num_subchannels,
            num_elements,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: &str| Err(Error::Config(msg.to_string()));
        if self.num_subchannels == 0 {
            return bad("num_subchannels must be positive");
        }
        if self.num_users != 2 * self.num_subchannels {
            return bad("num_users must equal 2 * num_subchannels");
        }
        if self.num_elements == 0 {
            return bad("num_elements must be positive");
        }
        if !(self.p_max > 0.0) {
            return bad("p_max must be positive");
        }
        if !(self.qos_rate >= 0.0) {
            return bad("qos_rate must be non-negative");
        }
        if !(self.noise_power > 0.0) {
            return bad("noise_power must be positive");
        }
        if !(self.tolerance > 0.0) {
            return bad("tolerance must be positive");
        }
        if !(self.pathloss_ref > 0.0) || !(self.user_radius > 0.0) {
            return bad("pathloss_ref and user_radius must be positive");
        }
        if !(self.rician_ap_surface >= 0.0) || !(self.rician_surface_user >= 0.0) {
            return bad("Rician factors must be non-negative");
        }
        Ok(())
    }

    pub fn from_file(path: impl AsRef<Path>) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::parse(&text)
    }

    /// Parses flat `key = value` lines on top of [`SystemConfig::default`].
    ///
    /// Keys are the field names. `rician_ap_surface_db`,
    /// `rician_surface_user_db` and `pathloss_ref_db` take dB values and
    /// `noise_power_dbm` takes dBm; `surface_center` is `x,y,z`. `#` starts
    /// a comment.
    pub fn parse(text: &str) -> Result<Self> {
        let mut cfg = Self::default();
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| {
                Error::Config(format!("line {}: expected key = value", lineno + 1))
            })?;
            cfg.set(key.trim(), value.trim())
                .map_err(|e| Error::Config(format!("line {}: {e}", lineno + 1)))?;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    /// Sets one field from its textual value.
    pub fn set(&mut self, key: &str, value: &str) -> std::result::Result<(), String> {
        fn num<T: FromStr>(key: &str, v: &str) -> std::result::Result<T, String> {
            v.parse::<T>()
                .map_err(|_| format!("invalid value {v:?} for {key}"))
        }
        match key {
            "num_subchannels" => self.num_subchannels = num(key, value)?,
            "num_users" => self.num_users = num(key, value)?,
            "num_elements" => self.num_elements = num(key, value)?,
            "p_max" => self.p_max = num(key, value)?,
            "qos_rate" => self.qos_rate = num(key, value)?,
            "noise_power" => self.noise_power = num(key, value)?,
            "noise_power_dbm" => self.noise_power = dbm_to_watts(num(key, value)?),
            "pathloss_ref" => self.pathloss_ref = num(key, value)?,
            "pathloss_ref_db" => self.pathloss_ref = db_to_linear(num(key, value)?),
            "exponent_ap_surface" => self.exponent_ap_surface = num(key, value)?,
            "exponent_surface_user" => self.exponent_surface_user = num(key, value)?,
            "rician_ap_surface" => self.rician_ap_surface = num(key, value)?,
            "rician_ap_surface_db" => self.rician_ap_surface = db_to_linear(num(key, value)?),
            "rician_surface_user" => self.rician_surface_user = num(key, value)?,
            "rician_surface_user_db" => {
                self.rician_surface_user = db_to_linear(num(key, value)?)
            }
            "surface_center" => {
                let parts: Vec<&str> = value.split(',').map(str::trim).collect();
                if parts.len() != 3 {
                    return Err(format!("surface_center needs 3 components, got {value:?}"));
                }
                for (slot, p) in self.surface_center.iter_mut().zip(parts) {
                    *slot = num(key, p)?;
                }
            }
            "user_radius" => self.user_radius = num(key, value)?,
            "rng_seed" => self.rng_seed = num(key, value)?,
            "tolerance" => self.tolerance = num(key, value)?,
            "los_model" => self.los_model = value.parse().map_err(|e: Error| e.to_string())?,
            other => return Err(format!("unknown key {other:?}")),
        }
        Ok(())
    }

    /// Users of each region (`I/2`).
    pub fn users_per_region(&self) -> usize {
        self.num_users / 2
    }
}

/// Distance-dependent path loss `rho0 * d^-alpha` with `d0 = 1 m`.
pub fn path_loss(distance: f64, pathloss_ref: f64, exponent: f64) -> Result<f64> {
    if !(distance > 0.0) {
        return Err(Error::Domain(format!(
            "path loss needs a positive distance, got {distance}"
        )));
    }
    Ok(pathloss_ref * distance.powf(-exponent))
}

#[derive(Debug, Clone, PartialEq)]
pub struct UserLayout {
    pub positions: Vec<[f64; 3]>,
    pub regions: Vec<Side>,
}

impl UserLayout {
    pub fn num_users(&self) -> usize {
        self.positions.len()
    }

    pub fn users_in(&self, side: Side) -> Vec<usize> {
        (0..self.regions.len())
            .filter(|&i| self.regions[i] == side)
            .collect()
    }

    pub fn region(&self, user: usize) -> Side {
        self.regions[user]
    }
}

/// Places users uniformly on the circle around the surface, keeping an
/// exact `I/2`-`I/2` split between the regions: a user whose angle falls in
/// a region that is already full is redrawn.
pub fn sample_layout<R: Rng + ?Sized>(cfg: &SystemConfig, rng: &mut R) -> UserLayout {
    let half = cfg.users_per_region();
    let c = cfg.surface_center;
    let mut counts = [0usize; 2];
    let mut positions = Vec::with_capacity(cfg.num_users);
    let mut regions = Vec::with_capacity(cfg.num_users);
    for _ in 0..cfg.num_users {
        loop {
            let psi = rng.random::<f64>() * 2.0 * PI;
            let pos = [
                c[0] + cfg.user_radius * psi.cos(),
                c[1] + cfg.user_radius * psi.sin(),
                c[2],
            ];
            let dx = pos[0] - c[0];
            if dx == 0.0 {
                continue;
            }
            let side = if dx > 0.0 { Side::T } else { Side::R };
            if counts[side.index()] < half {
                counts[side.index()] += 1;
                positions.push(pos);
                regions.push(side);
                break;
            }
        }
    }
    UserLayout { positions, regions }
}

/// Channel realizations of one network snapshot.
#[derive(Debug, Clone, PartialEq)]
pub struct ChannelSet {
    /// AP to surface, `g[k][m]`.
    pub g: Vec<Vec<Complex64>>,
    /// Surface to user, `f[k][i][m]`.
    pub f: Vec<Vec<Vec<Complex64>>>,
    /// Cascaded channel `q[k][i][m] = conj(f[k][i][m]) * g[k][m]`.
    pub q: Vec<Vec<Vec<Complex64>>>,
}

impl ChannelSet {
    /// Builds the set from both hops, computing the cascade.
    pub fn from_hops(g: Vec<Vec<Complex64>>, f: Vec<Vec<Vec<Complex64>>>) -> Self {
        let q = g
            .iter()
            .zip(&f)
            .map(|(gk, fk)| {
                fk.iter()
                    .map(|fki| fki.iter().zip(gk).map(|(fm, gm)| fm.conj() * gm).collect())
                    .collect()
            })
            .collect();
        Self { g, f, q }
    }

    /// Builds a set directly from cascaded vectors (unit AP hop).
    pub fn from_cascade(q: Vec<Vec<Vec<Complex64>>>) -> Self {
        let m = q.first().and_then(|qk| qk.first()).map_or(0, Vec::len);
        let g = vec![vec![Complex64::new(1.0, 0.0); m]; q.len()];
        let f = q
            .iter()
            .map(|qk| qk.iter().map(|v| v.iter().map(|z| z.conj()).collect()).collect())
            .collect();
        Self { g, f, q }
    }

    pub fn num_subchannels(&self) -> usize {
        self.q.len()
    }

    pub fn num_users(&self) -> usize {
        self.q.first().map_or(0, Vec::len)
    }

    pub fn num_elements(&self) -> usize {
        self.g.first().map_or(0, Vec::len)
    }

    pub fn cascade(&self, k: usize, i: usize) -> &[Complex64] {
        &self.q[k][i]
    }

    /// Cascaded vector scaled by `1/sigma`, so gains come out as SNR per watt.
    pub fn normalized_cascade(&self, k: usize, i: usize, noise_power: f64) -> Vec<Complex64> {
        let s = 1.0 / noise_power.sqrt();
        self.q[k][i].iter().map(|z| z * s).collect()
    }

    /// `sum_m |q[k][i][m]|^2`.
    pub fn cascade_energy(&self, k: usize, i: usize) -> f64 {
        self.q[k][i].iter().map(|z| z.norm_sqr()).sum()
    }

    pub fn is_finite(&self) -> bool {
        let fin = |v: &Vec<Complex64>| v.iter().all(|z| z.re.is_finite() && z.im.is_finite());
        self.g.iter().all(fin) && self.f.iter().flatten().all(fin) && self.q.iter().flatten().all(fin)
    }
}

fn steering(model: LosModel, m: usize, sin_phi: f64) -> Vec<Complex64> {
    match model {
        LosModel::HalfWavelengthUla => (0..m)
            .map(|e| Complex64::from_polar(1.0, PI * e as f64 * sin_phi))
            .collect(),
        LosModel::Broadside => vec![Complex64::new(1.0, 0.0); m],
    }
}

fn rician<R: Rng + ?Sized>(
    gain: f64,
    kappa: f64,
    los: &[Complex64],
    rng: &mut R,
) -> Vec<Complex64> {
    let amp = gain.sqrt();
    let (w_los, w_nlos) = if kappa.is_infinite() {
        (1.0, 0.0)
    } else {
        ((kappa / (kappa + 1.0)).sqrt(), (1.0 / (kappa + 1.0)).sqrt())
    };
    let half = std::f64::consts::FRAC_1_SQRT_2;
    los.iter()
        .map(|l| {
            let re: f64 = StandardNormal.sample(rng);
            let im: f64 = StandardNormal.sample(rng);
            let nlos = Complex64::new(re * half, im * half);
            (l * w_los + nlos * w_nlos) * amp
        })
        .collect()
}

fn norm(v: [f64; 3]) -> f64 {
    (v[0] * v[0] + v[1] * v[1] + v[2] * v[2]).sqrt()
}

/// Samples Rician fading for both hops of every subchannel.
pub fn sample_channels<R: Rng + ?Sized>(
    cfg: &SystemConfig,
    layout: &UserLayout,
    rng: &mut R,
) -> Result<ChannelSet> {
    let c = cfg.surface_center;
    let m = cfg.num_elements;
    let to_ap = [-c[0], -c[1], -c[2]];
    let d_as = norm(to_ap);
    let l_as = path_loss(d_as, cfg.pathloss_ref, cfg.exponent_ap_surface)?;
    let g_los = steering(cfg.los_model, m, to_ap[1] / d_as);

    let mut user_links = Vec::with_capacity(layout.num_users());
    for p in &layout.positions {
        let d = [p[0] - c[0], p[1] - c[1], p[2] - c[2]];
        let dist = norm(d);
        let loss = path_loss(dist, cfg.pathloss_ref, cfg.exponent_surface_user)?;
        user_links.push((loss, steering(cfg.los_model, m, d[1] / dist)));
    }

    let mut g = Vec::with_capacity(cfg.num_subchannels);
    let mut f = Vec::with_capacity(cfg.num_subchannels);
    for _ in 0..cfg.num_subchannels {
        g.push(rician(l_as, cfg.rician_ap_surface, &g_los, rng));
        f.push(
            user_links
                .iter()
                .map(|(loss, los)| rician(*loss, cfg.rician_surface_user, los, rng))
                .collect(),
        );
    }
    Ok(ChannelSet::from_hops(g, f))
}

/// One complete network snapshot drawn from a single seed.
#[derive(Debug, Clone)]
pub struct Scenario {
    pub config: SystemConfig,
    pub layout: UserLayout,
    pub channels: ChannelSet,
}

impl Scenario {
    pub fn sample(cfg: &SystemConfig, seed: u64) -> Result<Self> {
        cfg.validate()?;
        let mut rng = crate::seed::rng(seed);
        let layout = sample_layout(cfg, &mut rng);
        let channels = sample_channels(cfg, &layout, &mut rng)?;
        Ok(Self {
            config: cfg.clone(),
            layout,
            channels,
        })
    }

    /// Assembles a scenario from explicit parts (hand-built instances).
    pub fn from_parts(config: SystemConfig, layout: UserLayout, channels: ChannelSet) -> Result<Self> {
        config.validate()?;
        let (k, i, m) = (config.num_subchannels, config.num_users, config.num_elements);
        if layout.num_users() != i
            || channels.num_subchannels() != k
            || channels.num_users() != i
            || channels.num_elements() != m
        {
            return Err(Error::Precondition(format!(
                "parts do not match K={k}, I={i}, M={m}"
            )));
        }
        Ok(Self {
            config,
            layout,
            channels,
        })
    }

    /// Cascade of user `i` on subchannel `k`, normalized by the noise level.
    pub fn qn(&self, k: usize, i: usize) -> Vec<Complex64> {
        self.channels.normalized_cascade(k, i, self.config.noise_power)
    }

    /// Effective gain over noise of user `i` on subchannel `k`, served by the
    /// side of its own region.
    pub fn gain(&self, coeffs: &StarCoefficients, k: usize, i: usize) -> f64 {
        coeffs.effective_gain(self.layout.region(i), &self.qn(k, i))
    }
}
