//! Constructive ingredients of parabolic surgery: the piecewise disk model
//! `g`, the parabolic local model and its sector extension, sampled
//! dilatation fields and their area tails, including preimage sectors of a
//! polynomial Newton map.

use std::f64::consts::{PI, TAU};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::blaschke::{attracting_fixed_point, parabolic_parameter, solve_b_for_multiplier, BlaschkeError};
use crate::channel::{count_accesses_with, local_degree_at, ChannelError};
use crate::exec::Executor;
use crate::newton::{critical_points, NewtonError, NewtonMapSpec, FIXED_TOL};
use crate::orbits::{Classifier, Outcome, Target, DEFAULT_EPS_CONV, POINT_MAX_STEPS};
use crate::polyalg::{ComplexPoly, C64};
use crate::sphere::{chordal, Cx, SpherePoint};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SurgeryError {
    #[error("radius {r} must lie in ({alpha}, 1)")]
    BadRadius { r: f64, alpha: f64 },
    #[error("parameter b = {b} outside [0, {max})")]
    BadParameter { b: f64, max: f64 },
    #[error("orientation violated at {0} (|dz| <= |dzbar|)")]
    Degenerate(C64),
    #[error("logarithm undefined or ambiguous at {0}")]
    BranchCut(C64),
    #[error("{0} is outside the sector domain")]
    OutOfDomain(C64),
    #[error("fewer than two thresholds have positive area")]
    EmptyTail,
    #[error("preimage sector count {0} exceeds the budget")]
    DepthOverflow(usize),
    #[error("invalid marking: {0}")]
    MarkingInvalid(String),
    #[error("precondition failed: {0}")]
    Precondition(String),
    #[error(transparent)]
    Blaschke(#[from] BlaschkeError),
    #[error(transparent)]
    Newton(#[from] NewtonError),
    #[error(transparent)]
    Channel(#[from] ChannelError),
}

impl From<crate::orbits::OrbitError> for SurgeryError {
    fn from(e: crate::orbits::OrbitError) -> Self {
        SurgeryError::Channel(ChannelError::Orbit(e))
    }
}

/// Relative differencing step for dilatation sampling.
pub const DELTA_REL: f64 = 1e-5;
/// Samples per gluing circle in the continuity check.
pub const CONTINUITY_SAMPLES: usize = 4096;
const MAX_SECTORS: usize = 4096;

/// `M_b(z) = (z + b)/(1 + b z)`.
pub fn moebius_b(b: f64, z: C64) -> C64 {
    (z + b) / (1.0 + b * z)
}

pub fn moebius_b_inverse(b: f64, z: C64) -> C64 {
    (z - b) / (1.0 - b * z)
}

/// Homeomorphism from `A_0 = {r^k <= |z| <= r}` onto the region between
/// `S_r` and `M_b(S_{r^k})`, equal to the identity on `S_r` and to `M_b` on
/// `S_{r^k}`.
///
/// `M_b(S_{r^k})` is a circle with center `c` and radius `s`; the target
/// region is star-shaped about `c`. A point `e^{sigma + i theta}` goes to
/// `c + rho e^{i phi}` with `phi` interpolating the angles (about `c`) of the
/// two boundary images and `rho` interpolating geometrically between `s`
/// and the distance from `c` to `S_r` in direction `phi`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Interpolation {
    pub k: usize,
    pub b: f64,
    pub r: f64,
    pub center: f64,
    pub inner_radius: f64,
}

pub fn interpolate_h(k: usize, b: f64, r: f64) -> Result<Interpolation, SurgeryError> {
    if k < 2 {
        return Err(BlaschkeError::BadDegree(k).into());
    }
    let max = parabolic_parameter(k);
    if !(0.0..max).contains(&b) {
        return Err(SurgeryError::BadParameter { b, max });
    }
    let alpha = attracting_fixed_point(k, b);
    if !(r > alpha && r < 1.0) {
        return Err(SurgeryError::BadRadius { r, alpha });
    }
    let rho0 = r.powi(k as i32);
    let hi = moebius_b(b, C64::new(rho0, 0.0)).re;
    let lo = moebius_b(b, C64::new(-rho0, 0.0)).re;
    Ok(Interpolation { k, b, r, center: 0.5 * (hi + lo), inner_radius: 0.5 * (hi - lo) })
}

impl Interpolation {
    /// `h` on `A_0`; the identity outside and `M_b` inside.
    pub fn apply(&self, z: C64) -> C64 {
        let k = self.k as f64;
        let lr = self.r.ln();
        let lz = z.norm().ln();
        if lz >= lr {
            return z;
        }
        if lz <= k * lr {
            return moebius_b(self.b, z);
        }
        let t = (lz - k * lr) / ((1.0 - k) * lr);
        let theta = z.arg();
        let c = self.center;
        let p0 = moebius_b(self.b, C64::from_polar(self.r.powi(self.k as i32), theta));
        let p1 = C64::from_polar(self.r, theta);
        let phi0 = (p0 - c).arg();
        let mut phi1 = (p1 - c).arg();
        if phi1 - phi0 > PI {
            phi1 -= TAU;
        } else if phi0 - phi1 > PI {
            phi1 += TAU;
        }
        let phi = (1.0 - t) * phi0 + t * phi1;
        let outer = -c * phi.cos() + (self.r * self.r - c * c * phi.sin().powi(2)).sqrt();
        let rho = self.inner_radius.powf(1.0 - t) * outer.powf(t);
        C64::new(c, 0.0) + C64::from_polar(rho, phi)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Region {
    Outer,
    Annulus,
    Inner,
}

/// Piecewise model map: `z^k` on `|z| > r`, `h(z)^k` on `A_0`, `M_b(z)^k`
/// on `|z| < r^k`. It is conjugate by `M_b` to `B_b` on the inner disk.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DiskSurgeryModel {
    pub k: usize,
    pub b: f64,
    pub alpha: f64,
    pub r: f64,
    pub h: Interpolation,
    /// `M_b^{-1}(alpha)`.
    pub fixed_point: f64,
    pub critical_point: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelChecks {
    pub continuity_max_jump: f64,
    pub fixed_point_residual: f64,
    /// Largest `K - 1` on the holomorphic pieces.
    pub holomorphic_k_defect: f64,
    pub critical_in_inner_disk: bool,
    /// Measured local degree at `-b` when it lies in the inner disk.
    pub critical_local_degree: Option<f64>,
    pub pass: bool,
}

pub fn build_model_g(k: usize, b: f64, r: f64) -> Result<DiskSurgeryModel, SurgeryError> {
    let h = interpolate_h(k, b, r)?;
    let alpha = attracting_fixed_point(k, b);
    Ok(DiskSurgeryModel {
        k,
        b,
        alpha,
        r,
        h,
        fixed_point: moebius_b_inverse(b, C64::new(alpha, 0.0)).re,
        critical_point: -b,
    })
}

impl DiskSurgeryModel {
    pub fn region(&self, z: C64) -> Region {
        let a = z.norm();
        if a > self.r {
            Region::Outer
        } else if a >= self.r.powi(self.k as i32) {
            Region::Annulus
        } else {
            Region::Inner
        }
    }

    pub fn outer_piece(&self, z: C64) -> C64 {
        z.powu(self.k as u32)
    }

    pub fn annulus_piece(&self, z: C64) -> C64 {
        self.h.apply(z).powu(self.k as u32)
    }

    pub fn inner_piece(&self, z: C64) -> C64 {
        moebius_b(self.b, z).powu(self.k as u32)
    }

    pub fn g(&self, z: C64) -> C64 {
        match self.region(z) {
            Region::Outer => self.outer_piece(z),
            Region::Annulus => self.annulus_piece(z),
            Region::Inner => self.inner_piece(z),
        }
    }

    /// Largest disagreement of adjacent pieces on both gluing circles.
    pub fn continuity_max_jump(&self, samples: usize) -> f64 {
        let rk = self.r.powi(self.k as i32);
        (0..samples)
            .map(|i| {
                let t = TAU * i as f64 / samples as f64;
                let zo = C64::from_polar(self.r, t);
                let zi = C64::from_polar(rk, t);
                let a = (self.outer_piece(zo) - self.annulus_piece(zo)).norm();
                let b = (self.annulus_piece(zi) - self.inner_piece(zi)).norm();
                a.max(b)
            })
            .fold(0.0, f64::max)
    }

    pub fn checks(&self) -> ModelChecks {
        let jump = self.continuity_max_jump(CONTINUITY_SAMPLES);
        let xi = C64::new(self.fixed_point, 0.0);
        let fixed = (self.g(xi) - xi).norm();
        let rk = self.r.powi(self.k as i32);
        let mut defect: f64 = 0.0;
        for frac in [0.25, 0.5, 0.75] {
            for i in 0..64 {
                let t = TAU * (i as f64 + 0.5) / 64.0;
                let outer = C64::from_polar(self.r + (1.0 - self.r) * frac, t);
                let inner = C64::from_polar(rk * frac, t);
                for (z, f) in [(outer, 0), (inner, 1)] {
                    let piece = |w: C64| if f == 0 { self.outer_piece(w) } else { self.inner_piece(w) };
                    let d = numerical_dilatation(piece, z, DELTA_REL * z.norm()).map_or(f64::INFINITY, |k| k - 1.0);
                    defect = defect.max(d);
                }
            }
        }
        let inside = self.b < rk;
        let degree = inside.then(|| {
            let c = C64::new(self.critical_point, 0.0);
            let eps = 1e-3 * (rk - self.b).min(1.0);
            let near = (self.g(c + eps) - self.g(c)).norm();
            let far = (self.g(c + 2.0 * eps) - self.g(c)).norm();
            (far / near).ln() / 2f64.ln()
        });
        let degree_ok = degree.is_none_or(|d| (d - self.k as f64).abs() < 0.05);
        ModelChecks {
            continuity_max_jump: jump,
            fixed_point_residual: fixed,
            holomorphic_k_defect: defect,
            critical_in_inner_disk: inside,
            critical_local_degree: degree,
            pass: jump < 1e-9 && fixed < 1e-10 && defect < 1e-6 && degree_ok,
        }
    }
}

/// Pointwise dilatation `(|f_z| + |f_zbar|)/(|f_z| - |f_zbar|)` by central
/// differences with step `delta`.
pub fn numerical_dilatation<F: Fn(C64) -> C64>(f: F, z: C64, delta: f64) -> Result<f64, SurgeryError> {
    let i = C64::new(0.0, 1.0);
    let dx = (f(z + delta) - f(z - delta)) / (2.0 * delta);
    let dy = (f(z + i * delta) - f(z - i * delta)) / (2.0 * delta);
    let dz = 0.5 * (dx - i * dy);
    let dzb = 0.5 * (dx + i * dy);
    let (a, b) = (dz.norm(), dzb.norm());
    if !(a > b) {
        return Err(SurgeryError::Degenerate(z));
    }
    Ok((a + b) / (a - b))
}

/// `omega(z) = Log(lambda)/Log(z)`, principal branch.
pub fn omega_map(lambda: f64, z: C64) -> Result<C64, SurgeryError> {
    if z.norm() == 0.0 || (z.im == 0.0 && z.re < 0.0) || !z.is_finite() {
        return Err(SurgeryError::BranchCut(z));
    }
    let l = z.ln();
    if l.norm() == 0.0 {
        return Err(SurgeryError::BranchCut(z));
    }
    Ok(C64::new(lambda.ln(), 0.0) / l)
}

/// Parabolic model `omega -> omega/(omega + 1)`, conjugate to `z -> lambda z`.
pub fn parabolic_model(w: C64) -> C64 {
    w / (w + 1.0)
}

/// Largest `|omega(lambda z) - g_par(omega(z))|` over random points of the
/// sector complement `|arg z| < theta`, `|z| <= lambda^{-2}`.
pub fn conjugacy_defect(lambda: f64, theta: f64, samples: usize, seed: u64) -> Result<f64, SurgeryError> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst: f64 = 0.0;
    for _ in 0..samples {
        let m = rng.gen_range(2.0..60.0);
        let phi = rng.gen_range(-theta..theta);
        let z = C64::from_polar(lambda.powf(-m), phi);
        let lhs = omega_map(lambda, lambda * z)?;
        let rhs = parabolic_model(omega_map(lambda, z)?);
        worst = worst.max((lhs - rhs).norm());
    }
    Ok(worst)
}

/// Repelling model `f(z) = lambda z` with the sector
/// `{theta <= arg z <= 2 pi - theta}` and quadrilaterals
/// `Q_m = lambda^{-m} Q_0`, `Q_0 = S ∩ {lambda^{-1} <= |z| <= 1}`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SectorModel {
    pub lambda: f64,
    pub theta: f64,
    pub m0: usize,
}

impl SectorModel {
    pub fn new(lambda: f64, theta: f64, m0: usize) -> Result<Self, SurgeryError> {
        if !(lambda > 1.0) || !(theta > 0.0 && theta < PI) {
            return Err(SurgeryError::Precondition(format!("need lambda > 1 and theta in (0, pi), got {lambda}, {theta}")));
        }
        Ok(Self { lambda, theta, m0 })
    }

    pub fn contains(&self, z: C64) -> bool {
        let phi = z.arg().rem_euclid(TAU);
        z.norm() > 0.0 && phi >= self.theta - 1e-12 && phi <= TAU - self.theta + 1e-12
    }

    /// Point of `Q_m` at log-radius fraction `s` and angle `phi`.
    pub fn quad_point(&self, m: f64, s: f64, phi: f64) -> C64 {
        C64::from_polar(self.lambda.powf(-(m + s)), phi)
    }

    /// Extension of `omega` into the sector: modulus of the boundary value,
    /// argument interpolated linearly between the two boundary arguments
    /// through the positive real direction.
    pub fn chi(&self, z: C64) -> Result<C64, SurgeryError> {
        if !self.contains(z) || z.norm() >= self.lambda.powi(-(self.m0 as i32)) {
            return Err(SurgeryError::OutOfDomain(z));
        }
        Ok(self.chi_unchecked(z))
    }

    fn chi_unchecked(&self, z: C64) -> C64 {
        let phi = z.arg().rem_euclid(TAU);
        let top = C64::new(self.lambda.ln(), 0.0) / C64::new(z.norm().ln(), self.theta);
        let s = (phi - self.theta) / (TAU - 2.0 * self.theta);
        C64::from_polar(top.norm(), top.arg() * (1.0 - 2.0 * s))
    }

    /// `K_chi` at `z` with step `DELTA_REL |z|`.
    pub fn k_chi(&self, z: C64) -> Result<f64, SurgeryError> {
        numerical_dilatation(|w| self.chi_unchecked(w), z, DELTA_REL * z.norm())
    }
}

pub fn chi_extension(sector: &SectorModel, z: C64) -> Result<C64, SurgeryError> {
    sector.chi(z)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ProfileEntry {
    pub m: usize,
    pub max_k: f64,
    pub median_k: f64,
}

fn summarize(m: usize, mut ks: Vec<f64>) -> ProfileEntry {
    ks.sort_by(f64::total_cmp);
    ProfileEntry { m, max_k: *ks.last().unwrap_or(&1.0), median_k: ks.get(ks.len() / 2).copied().unwrap_or(1.0) }
}

/// Max and median `K_chi` on each `Q_m` over an `ns x nphi` cell-centered
/// log-polar grid.
pub fn dilatation_profile(sector: &SectorModel, ms: &[usize], ns: usize, nphi: usize) -> Result<Vec<ProfileEntry>, SurgeryError> {
    let rows = Executor::from_env().map_rows(ms.len(), |i| {
        let m = ms[i];
        let mut ks = Vec::with_capacity(ns * nphi);
        for a in 0..ns {
            for c in 0..nphi {
                let s = (a as f64 + 0.5) / ns as f64;
                let phi = sector.theta + (TAU - 2.0 * sector.theta) * (c as f64 + 0.5) / nphi as f64;
                ks.push(sector.k_chi(sector.quad_point(m as f64, s, phi))?);
            }
        }
        Ok(summarize(m, ks))
    });
    rows.into_iter().collect()
}

/// Dilatation of `h` pulled back by `z^{k^m}` on the level-`m` annulus
/// `r^{k^{1-m}} <= |z| <= r^{k^{-m}}` (level 0 is `A_0`). Pullback by a
/// holomorphic map keeps `K`, so the profile is flat.
pub fn g_model_profile(model: &DiskSurgeryModel, levels: usize, ns: usize, nphi: usize) -> Result<Vec<ProfileEntry>, SurgeryError> {
    let k = model.k as f64;
    let lr = model.r.ln();
    let rows = Executor::from_env().map_rows(levels, |m| {
        let power = (model.k as u32).pow(m as u32);
        let (lo, hi) = (lr * k.powi(1 - m as i32), lr * k.powi(-(m as i32)));
        let mut ks = Vec::with_capacity(ns * nphi);
        for a in 0..ns {
            for c in 0..nphi {
                let rad = (lo + (hi - lo) * (a as f64 + 0.5) / ns as f64).exp();
                // one period of z^{k^m}, so every level samples the same image points
                let z = C64::from_polar(rad, TAU * (c as f64 + 0.5) / nphi as f64 / power as f64);
                let delta = DELTA_REL * (hi - lo) * rad;
                ks.push(numerical_dilatation(|w| model.h.apply(w.powu(power)), z, delta)?);
            }
        }
        Ok(summarize(m, ks))
    });
    rows.into_iter().collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Rect {
    pub x_min: f64,
    pub x_max: f64,
    pub y_min: f64,
    pub y_max: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Sampling {
    /// Uniform grid on a rectangle of the plane.
    Cartesian { rect: Rect },
    /// Log-polar grid on `Q_{m_start} ∪ ... ∪ Q_{m_end - 1}` of a sector.
    LogPolar { sector: SectorModel, m_start: usize, m_end: usize },
}

/// Sampled dilatation with a per-cell area weight.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DilatationField {
    pub sampling: Sampling,
    pub nx: usize,
    pub ny: usize,
    /// Differencing step, relative to the local length scale.
    pub delta: f64,
    pub k: Vec<f64>,
    pub area: Vec<f64>,
}

impl DilatationField {
    pub fn k_max(&self) -> f64 {
        self.k.iter().copied().fold(1.0, f64::max)
    }

    pub fn total_area(&self) -> f64 {
        self.area.iter().sum()
    }
}

/// `K_chi` on the log-polar grid of `Q_m`, `m_start <= m < m_end`, with
/// `ns x nphi` cells per quadrilateral and Euclidean cell areas.
pub fn sector_field(sector: &SectorModel, m_start: usize, m_end: usize, ns: usize, nphi: usize) -> Result<DilatationField, SurgeryError> {
    let cells = sector_cells(sector, m_start, m_end, ns, nphi)?;
    Ok(DilatationField {
        sampling: Sampling::LogPolar { sector: *sector, m_start, m_end },
        nx: nphi,
        ny: ns * (m_end - m_start),
        delta: DELTA_REL,
        k: cells.iter().map(|c| c.k).collect(),
        area: cells.iter().map(|c| c.u.norm_sqr() * c.d_area).collect(),
    })
}

#[derive(Debug, Clone, Copy)]
struct SectorCell {
    level: usize,
    u: C64,
    k: f64,
    /// Area of the cell divided by `|u|^2`.
    d_area: f64,
}

fn sector_cells(sector: &SectorModel, m_start: usize, m_end: usize, ns: usize, nphi: usize) -> Result<Vec<SectorCell>, SurgeryError> {
    let d_area = sector.lambda.ln() / ns as f64 * (TAU - 2.0 * sector.theta) / nphi as f64;
    let rows: Vec<Result<Vec<SectorCell>, SurgeryError>> = Executor::from_env().map_rows(m_end.saturating_sub(m_start), |i| {
        let m = m_start + i;
        let mut out = Vec::with_capacity(ns * nphi);
        for a in 0..ns {
            for c in 0..nphi {
                let s = (a as f64 + 0.5) / ns as f64;
                let phi = sector.theta + (TAU - 2.0 * sector.theta) * (c as f64 + 0.5) / nphi as f64;
                let u = sector.quad_point(m as f64, s, phi);
                out.push(SectorCell { level: m, u, k: sector.k_chi(u)?, d_area });
            }
        }
        Ok(out)
    });
    let mut cells = Vec::new();
    for r in rows {
        cells.extend(r?);
    }
    Ok(cells)
}

/// Control field `K = 1/(1 - |z|)` on the unit disk, on an `n x n` grid over
/// `[-1, 1]^2`. Its tail `pi (2 K0 - 1)/K0^2` is polynomial.
pub fn synthetic_control_field(n: usize) -> DilatationField {
    let h = 2.0 / n as f64;
    let rows = Executor::from_env().map_rows(n, |i| {
        let y = -1.0 + h * (i as f64 + 0.5);
        (0..n)
            .map(|j| {
                let x = -1.0 + h * (j as f64 + 0.5);
                let r = x.hypot(y);
                if r < 1.0 {
                    (1.0 / (1.0 - r), h * h)
                } else {
                    (1.0, 0.0)
                }
            })
            .collect::<Vec<_>>()
    });
    let cells: Vec<(f64, f64)> = rows.into_iter().flatten().collect();
    DilatationField {
        sampling: Sampling::Cartesian { rect: Rect { x_min: -1.0, x_max: 1.0, y_min: -1.0, y_max: 1.0 } },
        nx: n,
        ny: n,
        delta: 0.0,
        k: cells.iter().map(|c| c.0).collect(),
        area: cells.iter().map(|c| c.1).collect(),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TailPoint {
    pub k0: f64,
    pub area: f64,
}

/// `Area{K > K0}` by cell counting, one entry per threshold.
pub fn area_tail(field: &DilatationField, thresholds: &[f64]) -> Vec<TailPoint> {
    thresholds
        .iter()
        .map(|&k0| TailPoint {
            k0,
            area: field.k.iter().zip(&field.area).filter(|(k, _)| **k > k0).map(|(_, a)| a).sum(),
        })
        .collect()
}

/// Integer thresholds from `lo` to `min(cap, 0.8 K_max)`.
pub fn default_thresholds(lo: usize, cap: usize, k_max: f64) -> Vec<f64> {
    let hi = (cap as f64).min((0.8 * k_max).floor()) as usize;
    (lo..=hi).map(|t| t as f64).collect()
}

/// Least-squares fits of `ln Area` against `K0` (exponential tail) and
/// against `ln K0` (power tail).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TailFit {
    pub slope: f64,
    pub intercept: f64,
    pub r2: f64,
    pub power_slope: f64,
    pub power_r2: f64,
    pub points: usize,
    /// Negative slope, `r2 >= 0.9`, and the exponential model fits at least
    /// as well as the power model.
    pub exponential: bool,
}

pub fn linear_fit(xs: &[f64], ys: &[f64]) -> (f64, f64, f64) {
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let syy: f64 = ys.iter().map(|y| (y - my).powi(2)).sum();
    let slope = if sxx > 0.0 { sxy / sxx } else { 0.0 };
    let r2 = if sxx > 0.0 && syy > 0.0 { sxy * sxy / (sxx * syy) } else { 0.0 };
    (slope, my - slope * mx, r2)
}

pub fn fit_tail(tail: &[TailPoint]) -> Result<TailFit, SurgeryError> {
    let pts: Vec<&TailPoint> = tail.iter().filter(|p| p.area > 0.0 && p.k0 > 0.0).collect();
    if pts.len() < 2 {
        return Err(SurgeryError::EmptyTail);
    }
    let xs: Vec<f64> = pts.iter().map(|p| p.k0).collect();
    let lx: Vec<f64> = xs.iter().map(|x| x.ln()).collect();
    let ys: Vec<f64> = pts.iter().map(|p| p.area.ln()).collect();
    let (slope, intercept, r2) = linear_fit(&xs, &ys);
    let (power_slope, _, power_r2) = linear_fit(&lx, &ys);
    Ok(TailFit {
        slope,
        intercept,
        r2,
        power_slope,
        power_r2,
        points: pts.len(),
        exponential: slope < 0.0 && r2 >= 0.9 && r2 >= power_r2,
    })
}

/// Largest and smallest `max K / m` over a profile, and whether the maxima
/// are nondecreasing in `m`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GrowthSummary {
    pub c1: f64,
    pub c2: f64,
    pub monotone: bool,
    pub pass: bool,
}

pub fn growth_summary(profile: &[ProfileEntry]) -> GrowthSummary {
    let ratios: Vec<f64> = profile.iter().filter(|e| e.m > 0).map(|e| e.max_k / e.m as f64).collect();
    let c1 = ratios.iter().copied().fold(f64::INFINITY, f64::min);
    let c2 = ratios.iter().copied().fold(0.0, f64::max);
    let monotone = profile.windows(2).all(|w| w[1].max_k >= w[0].max_k);
    GrowthSummary { c1, c2, monotone, pass: monotone && c1 > 0.0 && c2 / c1 <= 10.0 }
}

/// A point `y` with `N^depth(y) = ∞` together with the local model
/// `1/N^depth(z) ≈ a (z - y)^degree`.
#[derive(Debug, Clone, Copy, PartialEq)]
struct Vertex {
    y: C64,
    depth: usize,
    degree: usize,
    a: C64,
    parent: Option<usize>,
    /// Local degree of `N` at `y` when `depth >= 2`.
    e: usize,
    /// `N(z) - N(y) ≈ b (z - y)^e`.
    b: C64,
}

fn deflate_times(p: &ComplexPoly, y: C64, times: usize) -> ComplexPoly {
    (0..times).fold(p.clone(), |acc, _| acc.deflate(y))
}

fn vertex_tree(spec: &NewtonMapSpec, depth: usize) -> Result<Vec<Vertex>, SurgeryError> {
    let (num, den) = (&spec.map.num, &spec.map.den);
    let mut out: Vec<Vertex> = Vec::new();
    if depth == 0 {
        return Ok(out);
    }
    for root in den.roots().map_err(NewtonError::from)? {
        let y = root.value;
        let a = deflate_times(den, y, root.multiplicity).eval(y) / num.eval(y);
        out.push(Vertex { y, depth: 1, degree: root.multiplicity, a, parent: None, e: root.multiplicity, b: C64::new(0.0, 0.0) });
    }
    let mut start = 0;
    for level in 2..=depth {
        let end = out.len();
        for pi in start..end {
            let p = out[pi];
            let eq = num - &den.scale(p.y);
            for root in eq.roots().map_err(NewtonError::from)? {
                let y = root.value;
                let b = deflate_times(&eq, y, root.multiplicity).eval(y) / den.eval(y);
                out.push(Vertex {
                    y,
                    depth: level,
                    degree: p.degree * root.multiplicity,
                    a: p.a * b.powu(p.degree as u32),
                    parent: Some(pi),
                    e: root.multiplicity,
                    b,
                });
            }
            let count: usize = out.iter().map(|v| v.degree).sum::<usize>() + 1;
            if count > MAX_SECTORS {
                return Err(SurgeryError::DepthOverflow(count));
            }
        }
        start = end;
    }
    Ok(out)
}

/// Linearizing coordinate at ∞: `psi(rho u) = C(psi(u))` for the chart map
/// `C(w) = 1/N(1/w)`, `psi(u) = u + O(u^2)`. Returns `psi(u)` and `psi'(u)`.
fn linearizer(spec: &NewtonMapSpec, rho: f64, u: C64) -> Option<(C64, C64)> {
    let mut n = 0;
    let mut v = u;
    while v.norm() >= 1e-12 {
        v /= rho;
        n += 1;
    }
    let mut d = C64::new(rho.powi(-n), 0.0);
    for _ in 0..n {
        d *= spec.chart.eval_derivative(v)?;
        v = spec.chart.eval(v)?;
    }
    Some((v, d))
}

fn newton_solve<F: Fn(C64) -> (C64, C64)>(f: F, mut z: C64, scale: f64) -> Option<C64> {
    for _ in 0..50 {
        let (v, dv) = f(z);
        if dv.norm() == 0.0 {
            return None;
        }
        let step = v / dv;
        z -= step;
        if step.norm() <= 1e-15 * scale + 4.0 * f64::EPSILON * z.norm() {
            return z.is_finite().then_some(z);
        }
    }
    None
}

/// Preimage of `w` (in the chart `1/N^depth`) on branch `branch` at `v`,
/// and the derivative of `1/N^depth` there.
fn exact_preimage(spec: &NewtonMapSpec, tree: &[Vertex], vi: usize, w: C64, branch: usize) -> Option<(C64, C64)> {
    let v = tree[vi];
    let (num, den) = (&spec.map.num, &spec.map.den);
    match v.parent {
        None => {
            let k = v.degree as f64;
            let guess = v.y + (w / v.a).powf(1.0 / k) * C64::from_polar(1.0, TAU * branch as f64 / k);
            let scale = (guess - v.y).norm().max(1e-300);
            let z = newton_solve(
                |z| {
                    let (d, dd) = den.eval_with_derivative(z);
                    let (n, dn) = num.eval_with_derivative(z);
                    (d - w * n, dd - w * dn)
                },
                guess,
                scale,
            )?;
            if (z - guess).norm() > 0.5 * scale {
                return None;
            }
            let (d, dd) = den.eval_with_derivative(z);
            let (n, dn) = num.eval_with_derivative(z);
            Some((z, (dd * n - d * dn) / (n * n)))
        }
        Some(pi) => {
            let e = v.e as f64;
            let (zp, fp) = exact_preimage(spec, tree, pi, w, branch / v.e)?;
            let sub = branch % v.e;
            let guess = v.y + ((zp - tree[pi].y) / v.b).powf(1.0 / e) * C64::from_polar(1.0, TAU * sub as f64 / e);
            let scale = (guess - v.y).norm().max(1e-300);
            let z = newton_solve(
                |z| {
                    let (d, dd) = den.eval_with_derivative(z);
                    let (n, dn) = num.eval_with_derivative(z);
                    (n - zp * d, dn - zp * dd)
                },
                guess,
                scale,
            )?;
            if (z - guess).norm() > 0.5 * scale {
                return None;
            }
            Some((z, fp * spec.map.eval_derivative(z)?))
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SectorRecord {
    pub depth: usize,
    /// `None` for the sector at ∞.
    pub base: Option<Cx>,
    pub local_degree: usize,
    pub branches: usize,
    pub area: f64,
    pub level_ratio_max: f64,
    pub exact_cells: usize,
    pub model_cells: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NewtonAreaParams {
    pub depth: usize,
    pub theta: f64,
    pub m0: usize,
    pub m_end: usize,
    pub ns: usize,
    pub nphi: usize,
    pub threshold_cap: usize,
}

impl Default for NewtonAreaParams {
    fn default() -> Self {
        Self { depth: 0, theta: PI / 4.0, m0: 5, m_end: 200, ns: 16, nphi: 32, threshold_cap: 100 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NewtonAreaReport {
    pub rho: f64,
    pub depth: usize,
    pub sector_count: usize,
    pub sectors: Vec<SectorRecord>,
    pub notes: Vec<String>,
    pub area_tail: Vec<TailPoint>,
    pub fit: Option<TailFit>,
    /// Slope of the per-level maximum of `K` against the level index.
    pub k_growth: f64,
    /// Exponential decay rate of the tail per quadrilateral.
    pub decay_per_quadrilateral: f64,
    pub total_area: f64,
    pub geometric_bound: f64,
    pub pass: bool,
}

/// Spherical area of `{K > K0}` for the sector field placed at ∞ in a
/// linearizing coordinate and pulled back to every preimage of ∞ up to
/// `depth`. Pullback by the holomorphic branches keeps `K`.
pub fn newton_area_condition(spec: &NewtonMapSpec, params: &NewtonAreaParams) -> Result<NewtonAreaReport, SurgeryError> {
    if spec.q.degree() > 0 {
        return Err(SurgeryError::Precondition("q must be constant".into()));
    }
    let m0 = spec.chart.eval_derivative(C64::new(0.0, 0.0)).ok_or_else(|| SurgeryError::Precondition("chart undefined at 0".into()))?;
    if m0.im.abs() > 1e-9 || !(m0.re > 1.0) {
        return Err(SurgeryError::Precondition(format!("∞ is not repelling with real multiplier ({m0})")));
    }
    let rho = m0.re;
    let sector = SectorModel::new(rho, params.theta, params.m0)?;
    let cells = sector_cells(&sector, params.m0, params.m_end, params.ns, params.nphi)?;
    let tree = vertex_tree(spec, params.depth)?;
    let d = spec.d;
    let mut notes = Vec::new();
    for v in tree.iter().filter(|v| v.depth == 1 && v.degree + 2 > d) {
        notes.push(format!("pole {} has local degree {} > d - 2 = {}", fmt_c(v.y), v.degree, d as isize - 2));
    }

    let lin: Vec<Option<(C64, C64)>> = Executor::from_env().map_rows(cells.len(), |i| linearizer(spec, rho, cells[i].u));
    let levels = params.m_end - params.m0;
    let mut weights: Vec<f64> = vec![0.0; cells.len()];
    let mut sectors = Vec::new();

    // sector at ∞
    let mut level_area = vec![0.0; levels];
    for (i, c) in cells.iter().enumerate() {
        let (w, dw) = lin[i].ok_or(SurgeryError::Precondition("linearizer undefined".into()))?;
        let wt = 4.0 * dw.norm_sqr() * c.u.norm_sqr() * c.d_area / (1.0 + w.norm_sqr()).powi(2);
        weights[i] += wt;
        level_area[c.level - params.m0] += wt;
    }
    sectors.push(sector_record(0, None, 1, 1, &level_area, cells.len(), 0));

    for (vi, v) in tree.iter().enumerate() {
        let k0 = v.degree as f64;
        let rows = Executor::from_env().map_rows(cells.len(), |i| {
            let c = &cells[i];
            let (w, dw) = lin[i].expect("checked above");
            let base = 4.0 * dw.norm_sqr() * c.u.norm_sqr() * c.d_area;
            let local = (w / v.a).norm().powf(1.0 / k0);
            let model = base / ((1.0 + v.y.norm_sqr()).powi(2) * k0 * k0 * v.a.norm().powf(2.0 / k0) * w.norm().powf(2.0 * (k0 - 1.0) / k0));
            let mut total = 0.0;
            let mut exact = 0;
            for branch in 0..v.degree {
                let hit = if local < 1e-5 * (1.0 + v.y.norm()) { None } else { exact_preimage(spec, &tree, vi, w, branch) };
                match hit {
                    Some((z, fz)) => {
                        total += base / ((1.0 + z.norm_sqr()).powi(2) * fz.norm_sqr());
                        exact += 1;
                    }
                    None => total += model,
                }
            }
            (total, exact)
        });
        let mut level_area = vec![0.0; levels];
        let mut exact = 0;
        for (i, (wt, ex)) in rows.into_iter().enumerate() {
            weights[i] += wt;
            level_area[cells[i].level - params.m0] += wt;
            exact += ex;
        }
        let total_cells = cells.len() * v.degree;
        sectors.push(sector_record(v.depth, Some(v.y.into()), v.degree, v.degree, &level_area, exact, total_cells - exact));
    }

    let field = DilatationField {
        sampling: Sampling::LogPolar { sector, m_start: params.m0, m_end: params.m_end },
        nx: params.nphi,
        ny: params.ns * levels,
        delta: DELTA_REL,
        k: cells.iter().map(|c| c.k).collect(),
        area: weights,
    };
    let thresholds = default_thresholds(params.m0, params.threshold_cap, field.k_max());
    let tail = area_tail(&field, &thresholds);
    let fit = fit_tail(&tail).ok();

    let mut level_max = vec![1.0f64; levels];
    for c in &cells {
        level_max[c.level - params.m0] = level_max[c.level - params.m0].max(c.k);
    }
    let js: Vec<f64> = (params.m0..params.m_end).map(|j| j as f64).collect();
    let (k_growth, _, _) = linear_fit(&js, &level_max);
    let total_area = field.total_area();
    let geometric_bound: f64 = sectors
        .iter()
        .map(|s| if s.level_ratio_max < 1.0 { s.area_first_level() / (1.0 - s.level_ratio_max) } else { f64::INFINITY })
        .sum();
    let sector_count = sectors.iter().map(|s| s.branches).sum();
    let pass = fit.is_some_and(|f| f.exponential) && total_area <= geometric_bound && total_area.is_finite();
    Ok(NewtonAreaReport {
        rho,
        depth: params.depth,
        sector_count,
        sectors: sectors.into_iter().map(|s| s.record).collect(),
        notes,
        area_tail: tail,
        decay_per_quadrilateral: fit.map_or(f64::NAN, |f| f.slope * k_growth),
        fit,
        k_growth,
        total_area,
        geometric_bound,
        pass,
    })
}

struct SectorAcc {
    record: SectorRecord,
    first: f64,
}

impl std::ops::Deref for SectorAcc {
    type Target = SectorRecord;
    fn deref(&self) -> &SectorRecord {
        &self.record
    }
}

impl SectorAcc {
    fn area_first_level(&self) -> f64 {
        self.first
    }
}

fn sector_record(depth: usize, base: Option<Cx>, degree: usize, branches: usize, levels: &[f64], exact: usize, model: usize) -> SectorAcc {
    let ratio = levels.windows(2).filter(|w| w[0] > 0.0).map(|w| w[1] / w[0]).fold(0.0, f64::max);
    SectorAcc {
        record: SectorRecord {
            depth,
            base,
            local_degree: degree,
            branches,
            area: levels.iter().sum(),
            level_ratio_max: ratio,
            exact_cells: exact,
            model_cells: model,
        },
        first: levels.first().copied().unwrap_or(0.0),
    }
}

fn fmt_c(z: C64) -> String {
    crate::polyalg::format_complex(z)
}

/// One marked immediate root basin; `ray` picks the access when the basin
/// has more than one.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Marking {
    pub basin: usize,
    pub ray: Option<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PipelineParams {
    /// Multiplier of the attracting disk model.
    pub model_multiplier: f64,
    pub r: f64,
    pub theta: f64,
    pub m0: usize,
    pub m_max: usize,
    pub ns: usize,
    pub nphi: usize,
    pub area: NewtonAreaParams,
    pub area_depth: usize,
}

impl Default for PipelineParams {
    fn default() -> Self {
        Self {
            model_multiplier: 0.5,
            r: 0.8,
            theta: PI / 4.0,
            m0: 5,
            m_max: 100,
            ns: 16,
            nphi: 32,
            area: NewtonAreaParams::default(),
            area_depth: 2,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BasinSurgery {
    pub basin: usize,
    pub root: Cx,
    pub ray: usize,
    pub k: usize,
    pub b: f64,
    pub alpha: f64,
    pub r: f64,
    pub checks: ModelChecks,
    pub g_profile: Vec<ProfileEntry>,
    /// `max K` on every level within 1% of level 0.
    pub g_profile_flat: bool,
    pub access_count: usize,
    pub pass: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PipelineReport {
    pub markings: Vec<Marking>,
    pub petal_budget: usize,
    pub basins: Vec<BasinSurgery>,
    pub conjugacy_max_error: Option<f64>,
    pub chi_profile: Vec<ProfileEntry>,
    pub chi_growth: Option<GrowthSummary>,
    pub area_depth0: Option<NewtonAreaReport>,
    pub area_preimages: Option<NewtonAreaReport>,
    pub control_fit: Option<TailFit>,
    pub pcf_heuristic: bool,
    pub criteria: Vec<(String, bool)>,
    pub david_integration: String,
    pub pass: bool,
}

/// Radius for the disk model: `r` if it leaves `alpha` and `-b` strictly
/// inside the inner disk, otherwise the smallest safe enlargement.
pub fn model_radius(k: usize, b: f64, alpha: f64, r: f64) -> f64 {
    let ok = |r: f64| r > alpha && r.powi(k as i32) > b;
    if ok(r) {
        r
    } else {
        (0.5 * (1.0 + alpha)).max((0.5 * (1.0 + b)).powf(1.0 / k as f64))
    }
}

/// Critical orbits all reach a root or a cycle exactly.
fn pcf_heuristic(spec: &NewtonMapSpec, cls: &Classifier) -> Result<bool, SurgeryError> {
    for c in critical_points(spec, FIXED_TOL)? {
        let orbit = cls.iterate(c.point);
        let ok = match orbit.outcome {
            Outcome::ConvergedTo { root } => {
                let target = SpherePoint::Finite(cls.roots[root]);
                orbit.points.iter().any(|p| chordal(*p, target) < 1e-12)
            }
            Outcome::Cycle { .. } => true,
            _ => false,
        };
        if !ok {
            return Ok(false);
        }
    }
    Ok(true)
}

pub fn surgery_pipeline_report(spec: &NewtonMapSpec, markings: &[Marking], params: &PipelineParams) -> Result<PipelineReport, SurgeryError> {
    let none = || PipelineReport {
        markings: markings.to_vec(),
        petal_budget: 0,
        basins: Vec::new(),
        conjugacy_max_error: None,
        chi_profile: Vec::new(),
        chi_growth: None,
        area_depth0: None,
        area_preimages: None,
        control_fit: None,
        pcf_heuristic: true,
        criteria: Vec::new(),
        david_integration: "not performed (out of scope)".into(),
        pass: true,
    };
    if spec.q.degree() > 0 {
        return Err(SurgeryError::Precondition("surgery pipeline needs a polynomial Newton map (q constant)".into()));
    }
    if markings.is_empty() {
        return Ok(none());
    }
    let cls = Classifier::new(spec, POINT_MAX_STEPS, DEFAULT_EPS_CONV)?;
    let mut seen = Vec::new();
    let mut basins = Vec::new();
    for m in markings {
        if seen.contains(&m.basin) {
            return Err(SurgeryError::MarkingInvalid(format!("basin {} marked twice", m.basin)));
        }
        seen.push(m.basin);
        let xi = *cls.roots.get(m.basin).ok_or_else(|| SurgeryError::MarkingInvalid(format!("no basin {}", m.basin)))?;
        let (k, _) = local_degree_at(&spec.map, xi);
        if k < 2 {
            return Err(SurgeryError::MarkingInvalid(format!("root {} is not superattracting", fmt_c(xi))));
        }
        let rays = k - 1;
        let ray = match m.ray {
            Some(j) if (1..=rays).contains(&j) => j,
            Some(j) => return Err(SurgeryError::MarkingInvalid(format!("basin {} has no ray {j}", m.basin))),
            None if rays == 1 => 1,
            None => return Err(SurgeryError::MarkingInvalid(format!("basin {} has {rays} rays; choose one", m.basin))),
        };
        let access = count_accesses_with(&cls, Target::Root { index: m.basin })?;
        let model = solve_b_for_multiplier(k, params.model_multiplier)?;
        let r = model_radius(k, model.b, model.alpha, params.r);
        let g = build_model_g(k, model.b, r)?;
        let checks = g.checks();
        let g_profile = g_model_profile(&g, 5, 8, 32)?;
        let base = g_profile[0].max_k;
        let flat = g_profile.iter().all(|e| (e.max_k - base).abs() <= 0.01 * base);
        basins.push(BasinSurgery {
            basin: m.basin,
            root: xi.into(),
            ray,
            k,
            b: model.b,
            alpha: model.alpha,
            r,
            pass: checks.pass && flat && access.count == rays,
            checks,
            g_profile,
            g_profile_flat: flat,
            access_count: access.count,
        });
    }

    let rho = spec.chart.eval_derivative(C64::new(0.0, 0.0)).map_or(f64::NAN, |m| m.re);
    let mut conj: f64 = 0.0;
    for (i, lambda) in [1.5, 2.0, 3.0, rho].into_iter().enumerate() {
        conj = conj.max(conjugacy_defect(lambda, params.theta, 1000, i as u64)?);
    }
    let sector = SectorModel::new(rho, params.theta, params.m0)?;
    let ms: Vec<usize> = (params.m0..=params.m_max).collect();
    let chi_profile = dilatation_profile(&sector, &ms, params.ns, params.nphi)?;
    let growth = growth_summary(&chi_profile);
    let area0 = newton_area_condition(spec, &NewtonAreaParams { depth: 0, ..params.area })?;
    let area_d = newton_area_condition(spec, &NewtonAreaParams { depth: params.area_depth, ..params.area })?;
    let control = synthetic_control_field(1024);
    let control_fit = fit_tail(&area_tail(&control, &(2..=100).map(f64::from).collect::<Vec<_>>())).ok();
    let pcf = pcf_heuristic(spec, &cls)?;

    let criteria = vec![
        ("model_g".to_string(), basins.iter().all(|b| b.pass)),
        ("conjugacy".to_string(), conj < 1e-12),
        ("dilatation_growth".to_string(), growth.pass),
        (
            "area_condition".to_string(),
            area0.pass && area_d.pass && control_fit.is_some_and(|f| !f.exponential),
        ),
    ];
    let pass = criteria.iter().all(|c| c.1);
    Ok(PipelineReport {
        petal_budget: basins.len(),
        basins,
        conjugacy_max_error: Some(conj),
        chi_profile,
        chi_growth: Some(growth),
        area_depth0: Some(area0),
        area_preimages: Some(area_d),
        control_fit,
        pcf_heuristic: pcf,
        criteria,
        pass,
        ..none()
    })
}

/// Standalone model and sector checks for one `(k, r)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SurgeryCheckReport {
    pub k: usize,
    pub b: f64,
    pub alpha: f64,
    pub r: f64,
    pub lambda: f64,
    pub theta: f64,
    pub checks: ModelChecks,
    pub continuity_max_jump: f64,
    pub conjugacy_max_error: f64,
    pub dilatation_profile: Vec<ProfileEntry>,
    pub growth: GrowthSummary,
    pub area_tail: Vec<TailPoint>,
    pub fit: Option<TailFit>,
    pub control_fit: Option<TailFit>,
    pub verdict: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SurgeryCheckParams {
    pub k: usize,
    pub r: f64,
    pub lambda: f64,
    pub theta: f64,
    pub m0: usize,
    pub m_max: usize,
    pub grid: usize,
}

impl Default for SurgeryCheckParams {
    fn default() -> Self {
        Self { k: 2, r: 0.8, lambda: 2.0, theta: PI / 4.0, m0: 5, m_max: 100, grid: 32 }
    }
}

pub fn surgery_check(p: &SurgeryCheckParams) -> Result<SurgeryCheckReport, SurgeryError> {
    let model = solve_b_for_multiplier(p.k, 0.5)?;
    let g = build_model_g(p.k, model.b, p.r)?;
    let checks = g.checks();
    let sector = SectorModel::new(p.lambda, p.theta, p.m0)?;
    let ms: Vec<usize> = (p.m0..=p.m_max).collect();
    let ns = (p.grid / 2).max(2);
    let profile = dilatation_profile(&sector, &ms, ns, p.grid)?;
    let growth = growth_summary(&profile);
    let field = sector_field(&sector, p.m0, 2 * p.m_max, ns, p.grid)?;
    let tail = area_tail(&field, &default_thresholds(p.m0, p.m_max, field.k_max()));
    let fit = fit_tail(&tail).ok();
    let control_fit = fit_tail(&area_tail(&synthetic_control_field(1024), &(2..=100).map(f64::from).collect::<Vec<_>>())).ok();
    let conj = conjugacy_defect(p.lambda, p.theta, 1000, 7)?;
    let verdict = checks.pass
        && conj < 1e-12
        && growth.pass
        && fit.is_some_and(|f| f.exponential)
        && control_fit.is_some_and(|f| !f.exponential);
    Ok(SurgeryCheckReport {
        k: p.k,
        b: model.b,
        alpha: model.alpha,
        r: p.r,
        lambda: p.lambda,
        theta: p.theta,
        continuity_max_jump: checks.continuity_max_jump,
        checks,
        conjugacy_max_error: conj,
        dilatation_profile: profile,
        growth,
        area_tail: tail,
        fit,
        control_fit,
        verdict,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::newton::build_newton_map;

    fn c(re: f64, im: f64) -> C64 {
        C64::new(re, im)
    }

    fn cubic() -> NewtonMapSpec {
        build_newton_map(&ComplexPoly::from_real(&[-1.0, 0.0, 0.0, 1.0]), &ComplexPoly::from_real(&[0.0])).unwrap()
    }

    #[test]
    fn h_is_identity_without_twist() {
        let h = interpolate_h(3, 0.0, 0.7).unwrap();
        for i in 0..50 {
            let rad = 0.7f64.powf(1.0 + 2.0 * (i as f64 + 0.5) / 50.0);
            let z = C64::from_polar(rad, 0.37 * i as f64);
            assert!((h.apply(z) - z).norm() < 1e-14);
        }
    }

    #[test]
    fn h_boundary_values() {
        for (k, r) in [(2, 0.8), (3, 0.7), (4, 0.9)] {
            let b = solve_b_for_multiplier(k, 0.5).unwrap().b;
            let h = interpolate_h(k, b, r).unwrap();
            let rk = r.powi(k as i32);
            let mut worst: f64 = 0.0;
            for i in 0..4096 {
                let t = TAU * i as f64 / 4096.0 - PI;
                let outer = C64::from_polar(r * (1.0 - 1e-15), t);
                let inner = C64::from_polar(rk * (1.0 + 1e-15), t);
                worst = worst.max((h.apply(outer) - outer).norm());
                worst = worst.max((h.apply(inner) - moebius_b(b, inner)).norm());
            }
            assert!(worst < 1e-12, "k={k} r={r}: {worst}");
        }
    }

    #[test]
    fn h_maps_into_target_annulus() {
        let b = solve_b_for_multiplier(2, 0.5).unwrap().b;
        let h = interpolate_h(2, b, 0.8).unwrap();
        for i in 1..20 {
            for j in 0..40 {
                let rad = 0.64 + 0.16 * i as f64 / 20.0;
                let w = h.apply(C64::from_polar(rad, TAU * j as f64 / 40.0));
                assert!(w.norm() < 0.8);
                assert!((w - h.center).norm() > h.inner_radius);
            }
        }
    }

    #[test]
    fn bad_radius() {
        assert!(matches!(interpolate_h(2, 0.2, 0.2), Err(SurgeryError::BadRadius { .. })));
        assert!(matches!(interpolate_h(2, 0.2, 1.0), Err(SurgeryError::BadRadius { .. })));
        assert!(matches!(interpolate_h(2, 0.5, 0.8), Err(SurgeryError::BadParameter { .. })));
    }

    #[test]
    fn model_g_quadratic() {
        let g = build_model_g(2, 0.2, 0.8).unwrap();
        assert!((g.g(c(0.9, 0.0)) - 0.81).norm() < 1e-15);
        let alpha = 2.0 - 3f64.sqrt();
        let xi = moebius_b_inverse(0.2, c(alpha, 0.0));
        assert!((g.g(xi) - xi).norm() < 1e-10);
        let checks = g.checks();
        assert!(checks.pass, "{checks:?}");
        assert!((checks.critical_local_degree.unwrap() - 2.0).abs() < 0.01);
    }

    #[test]
    fn model_g_continuity_grid() {
        for k in 2..=4 {
            let b = solve_b_for_multiplier(k, 0.5).unwrap().b;
            for r in [0.7, 0.8, 0.9] {
                let g = build_model_g(k, b, r).unwrap();
                let checks = g.checks();
                assert!(checks.continuity_max_jump < 1e-9, "k={k} r={r}");
                assert!(checks.fixed_point_residual < 1e-10, "k={k} r={r}");
                assert!(checks.holomorphic_k_defect < 1e-6, "k={k} r={r}");
            }
        }
    }

    #[test]
    fn dilatation_of_simple_maps() {
        let k = numerical_dilatation(|z| z * z, c(0.3, -0.7), 1e-5).unwrap();
        assert!((k - 1.0).abs() < 1e-8);
        let k = numerical_dilatation(|z| c(2.0 * z.re, z.im), c(0.3, -0.7), 1e-5).unwrap();
        assert!((k - 2.0).abs() < 1e-8);
        assert!(matches!(numerical_dilatation(|z| z.conj(), c(1.0, 1.0), 1e-5), Err(SurgeryError::Degenerate(_))));
    }

    #[test]
    fn h_dilatation_is_stable_under_step_halving() {
        let b = solve_b_for_multiplier(2, 0.5).unwrap().b;
        let h = interpolate_h(2, b, 0.8).unwrap();
        let z = C64::from_polar(0.8f64.powf(1.5), 1.1);
        let k1 = numerical_dilatation(|w| h.apply(w), z, 1e-5).unwrap();
        let k2 = numerical_dilatation(|w| h.apply(w), z, 5e-6).unwrap();
        assert!(k1 > 1.0 + 1e-6 && k1.is_finite());
        assert!((k1 - k2).abs() < 0.01 * k1);
    }

    #[test]
    fn omega_examples() {
        let w = omega_map(2.0, c(0.1, 0.0)).unwrap();
        assert!((w.re + std::f64::consts::LOG10_2).abs() < 1e-6);
        let g = parabolic_model(w);
        assert!((g.re + 0.430677).abs() < 1e-6);
        assert!((g - omega_map(2.0, c(0.2, 0.0)).unwrap()).norm() < 1e-15);
        assert!(omega_map(2.0, c(0.0, 0.0)).is_err());
        assert!(omega_map(2.0, c(1.0, 0.0)).is_err());
        assert!(omega_map(2.0, c(-0.5, 0.0)).is_err());
        assert!(omega_map(2.0, C64::from_polar(1.0 - 1e-9, 0.1)).unwrap().norm() > 5.0);
    }

    #[test]
    fn omega_boundary_scale() {
        let (lambda, theta) = (2.0, PI / 4.0);
        let vals: Vec<f64> = (10..=200)
            .map(|m| m as f64 * omega_map(lambda, C64::from_polar(lambda.powi(-m), theta)).unwrap().norm())
            .collect();
        let lo = vals.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = vals.iter().copied().fold(0.0, f64::max);
        assert!(lo > 0.9 && hi <= 1.0 + 1e-12);
    }

    #[test]
    fn conjugacy_identity() {
        for lambda in [1.5, 2.0, 3.0] {
            assert!(conjugacy_defect(lambda, PI / 4.0, 1000, 1).unwrap() < 1e-12);
        }
    }

    #[test]
    fn chi_boundary_and_midline() {
        let s = SectorModel::new(2.0, PI / 4.0, 5).unwrap();
        for m in [6.0, 20.0, 75.5] {
            let top = C64::from_polar(2f64.powf(-m), PI / 4.0);
            assert!((s.chi(top).unwrap() - omega_map(2.0, top).unwrap()).norm() < 1e-15);
            let bot = C64::from_polar(2f64.powf(-m), TAU - PI / 4.0);
            assert!((s.chi(bot).unwrap() - omega_map(2.0, bot).unwrap()).norm() < 1e-15);
            let mid = s.chi(C64::from_polar(2f64.powf(-m), PI)).unwrap();
            assert!(mid.im.abs() < 1e-15 && mid.re > 0.0);
            assert!((mid.norm() - omega_map(2.0, top).unwrap().norm()).abs() < 1e-15);
        }
        assert!(matches!(s.chi(c(0.001, 0.0)), Err(SurgeryError::OutOfDomain(_))));
        assert!(matches!(s.chi(c(-0.5, 0.0)), Err(SurgeryError::OutOfDomain(_))));
    }

    #[test]
    fn chi_growth_doubles() {
        let s = SectorModel::new(2.0, PI / 4.0, 5).unwrap();
        let p = dilatation_profile(&s, &[20, 40, 80, 160], 8, 32).unwrap();
        for w in p.windows(2) {
            let ratio = w[1].max_k / w[0].max_k;
            assert!((1.5..=2.5).contains(&ratio), "{ratio}");
        }
    }

    #[test]
    fn chi_profile_bracket() {
        let s = SectorModel::new(2.0, PI / 4.0, 5).unwrap();
        let ms: Vec<usize> = (5..=100).collect();
        let g = growth_summary(&dilatation_profile(&s, &ms, 8, 16).unwrap());
        assert!(g.pass, "{g:?}");
    }

    #[test]
    fn pullback_preserves_dilatation() {
        let spec = cubic();
        let s = SectorModel::new(1.5, PI / 4.0, 5).unwrap();
        let chart = |u: C64| spec.chart.eval(u).unwrap();
        for (m, phi) in [(10.0, 2.0), (14.0, 3.5), (20.0, 1.2)] {
            let u = s.quad_point(m, 0.5, phi);
            let pulled = numerical_dilatation(|w| s.chi_unchecked(chart(w)), u, DELTA_REL * u.norm()).unwrap();
            let direct = s.k_chi(chart(u)).unwrap();
            assert!((pulled - direct).abs() < 1e-8, "{pulled} {direct}");
        }
    }

    #[test]
    fn g_profile_is_flat() {
        let b = solve_b_for_multiplier(2, 0.5).unwrap().b;
        let g = build_model_g(2, b, 0.8).unwrap();
        let p = g_model_profile(&g, 5, 8, 32).unwrap();
        for e in &p {
            assert!((e.max_k - p[0].max_k).abs() < 0.01 * p[0].max_k, "{p:?}");
        }
        assert!(p[0].max_k > 1.0);
    }

    #[test]
    fn identity_field_has_empty_tail() {
        let mut f = synthetic_control_field(64);
        f.k.iter_mut().for_each(|k| *k = 1.0);
        let tail = area_tail(&f, &[2.0, 3.0, 4.0]);
        assert!(tail.iter().all(|t| t.area == 0.0));
        assert_eq!(fit_tail(&tail), Err(SurgeryError::EmptyTail));
    }

    #[test]
    fn control_tail_matches_closed_form_and_is_not_exponential() {
        let f = synthetic_control_field(1024);
        let ks: Vec<f64> = (2..=100).map(f64::from).collect();
        let tail = area_tail(&f, &ks);
        for t in tail.iter().filter(|t| t.k0 <= 30.0) {
            let exact = PI * (2.0 * t.k0 - 1.0) / (t.k0 * t.k0);
            assert!((t.area - exact).abs() < 0.02 * exact, "{t:?} {exact}");
        }
        let fit = fit_tail(&tail).unwrap();
        assert!(!fit.exponential, "{fit:?}");
        assert!(fit.power_r2 > 0.99);
    }

    #[test]
    fn chi_tail_is_exponential() {
        let s = SectorModel::new(2.0, PI / 4.0, 5).unwrap();
        let f = sector_field(&s, 5, 200, 8, 32).unwrap();
        let tail = area_tail(&f, &default_thresholds(5, 100, f.k_max()));
        let fit = fit_tail(&tail).unwrap();
        assert!(fit.exponential, "{fit:?}");
        // areas shrink like lambda^{-2m} while K grows linearly in m
        let ks: Vec<usize> = (20..=120).step_by(20).collect();
        let prof = dilatation_profile(&s, &ks, 8, 32).unwrap();
        let growth = (prof.last().unwrap().max_k - prof[0].max_k) / 100.0;
        let per_quad = fit.slope * growth;
        assert!((per_quad + 2.0 * 2f64.ln()).abs() < 0.15 * 2.0 * 2f64.ln(), "{per_quad}");
    }

    #[test]
    fn newton_area_depth_zero() {
        let spec = cubic();
        let r = newton_area_condition(&spec, &NewtonAreaParams::default()).unwrap();
        assert!((r.rho - 1.5).abs() < 1e-12);
        assert_eq!(r.sector_count, 1);
        assert!(r.pass, "{:?}", r.fit);
        let expected = -2.0 * 1.5f64.ln();
        assert!((r.decay_per_quadrilateral - expected).abs() < 0.15 * expected.abs(), "{}", r.decay_per_quadrilateral);
    }

    #[test]
    fn newton_area_depth_two() {
        let spec = cubic();
        let r = newton_area_condition(&spec, &NewtonAreaParams { depth: 2, ..Default::default() }).unwrap();
        // ∞ itself, two branches at the double pole 0, two at each of its three preimages
        assert_eq!(r.sector_count, 9);
        assert_eq!(r.sectors.len(), 1 + 1 + 3);
        assert!(r.notes.iter().any(|n| n.contains("local degree 2")));
        assert!(r.pass, "{:?}", r.fit);
        assert!(r.total_area.is_finite() && r.total_area <= r.geometric_bound);
        for s in &r.sectors[1..] {
            assert!(s.exact_cells > 0);
        }
    }

    #[test]
    fn exact_and_model_preimages_agree() {
        let spec = cubic();
        let tree = vertex_tree(&spec, 2).unwrap();
        let w = c(1e-4, 2e-5);
        for (vi, v) in tree.iter().enumerate() {
            for br in 0..v.degree {
                let (z, fz) = exact_preimage(&spec, &tree, vi, w, br).unwrap_or_else(|| panic!("{v:?} {br}"));
                // 1/N^depth(z) = w
                let mut x = z;
                for _ in 0..v.depth {
                    x = spec.map.eval(x).unwrap();
                }
                assert!((1.0 / x - w).norm() < 1e-12 * w.norm(), "depth {}", v.depth);
                let k0 = v.degree as f64;
                let model = k0 * v.a.norm().powf(1.0 / k0) * w.norm().powf((k0 - 1.0) / k0);
                assert!((fz.norm() - model).abs() < 0.05 * model);
            }
        }
    }

    #[test]
    fn pipeline_cubic_one_basin() {
        let spec = cubic();
        let rep = surgery_pipeline_report(&spec, &[Marking { basin: 0, ray: None }], &PipelineParams::default()).unwrap();
        assert_eq!(rep.basins.len(), 1);
        assert_eq!(rep.basins[0].k, 2);
        assert!((rep.basins[0].b - 0.2).abs() < 1e-9);
        assert_eq!(rep.david_integration, "not performed (out of scope)");
        assert!(rep.pcf_heuristic);
        assert!(rep.pass, "{:?}", rep.criteria);
    }

    #[test]
    fn pipeline_edge_cases() {
        let spec = cubic();
        let empty = surgery_pipeline_report(&spec, &[], &PipelineParams::default()).unwrap();
        assert!(empty.pass && empty.basins.is_empty() && empty.petal_budget == 0);
        let bad = surgery_pipeline_report(&spec, &[Marking { basin: 0, ray: Some(2) }], &PipelineParams::default());
        assert!(matches!(bad, Err(SurgeryError::MarkingInvalid(_))));
        let twice = surgery_pipeline_report(&spec, &[Marking { basin: 1, ray: None }, Marking { basin: 1, ray: None }], &PipelineParams::default());
        assert!(matches!(twice, Err(SurgeryError::MarkingInvalid(_))));
        // z^3 - z: the root 0 has two rays, so the marking must pick one
        let odd = build_newton_map(&ComplexPoly::from_real(&[0.0, -1.0, 0.0, 1.0]), &ComplexPoly::from_real(&[0.0])).unwrap();
        let cls = Classifier::new(&odd, POINT_MAX_STEPS, DEFAULT_EPS_CONV).unwrap();
        let zero = cls.roots.iter().position(|r| r.norm() < 1e-9).unwrap();
        let amb = surgery_pipeline_report(&odd, &[Marking { basin: zero, ray: None }], &PipelineParams::default());
        assert!(matches!(amb, Err(SurgeryError::MarkingInvalid(_))));
    }
}
