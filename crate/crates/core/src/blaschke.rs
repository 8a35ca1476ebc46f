//! Disk models: the Blaschke family `B_b(z) = (z^k + b)/(1 + b z^k)`, its
//! parabolic member, Möbius factors and a multiplier-targeting solver.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::polyalg::{ComplexPoly, C64};
use crate::sphere::Cx;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum BlaschkeError {
    #[error("degree {0} is below 2")]
    BadDegree(usize),
    #[error("denominator vanishes at {0}")]
    PoleHit(C64),
    #[error("multiplier {0} is not bracketed on the admissible range of b")]
    NoBracket(f64),
    #[error("degenerate Möbius coefficients")]
    Degenerate,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BlaschkeModel {
    pub k: usize,
    pub b: f64,
    pub alpha: f64,
    pub multiplier: f64,
}

/// `(k-1)/(k+1)`, the parameter of the parabolic member.
pub fn parabolic_parameter(k: usize) -> f64 {
    (k as f64 - 1.0) / (k as f64 + 1.0)
}

pub fn parabolic_blaschke(k: usize) -> Result<BlaschkeModel, BlaschkeError> {
    if k < 2 {
        return Err(BlaschkeError::BadDegree(k));
    }
    Ok(BlaschkeModel { k, b: parabolic_parameter(k), alpha: 1.0, multiplier: 1.0 })
}

pub fn blaschke_value(k: usize, b: f64, z: C64) -> Result<C64, BlaschkeError> {
    let zk = z.powu(k as u32);
    let den = 1.0 + b * zk;
    if den.norm() == 0.0 {
        return Err(BlaschkeError::PoleHit(z));
    }
    Ok((zk + b) / den)
}

/// `B_b'(z) = k z^{k-1} (1 - b^2) / (1 + b z^k)^2`.
pub fn blaschke_derivative(k: usize, b: f64, z: C64) -> Result<C64, BlaschkeError> {
    let den = 1.0 + b * z.powu(k as u32);
    if den.norm() == 0.0 {
        return Err(BlaschkeError::PoleHit(z));
    }
    Ok(z.powu(k as u32 - 1) * (k as f64 * (1.0 - b * b)) / (den * den))
}

pub fn eval_blaschke(model: &BlaschkeModel, z: C64) -> Result<C64, BlaschkeError> {
    blaschke_value(model.k, model.b, z)
}

impl BlaschkeModel {
    pub fn eval(&self, z: C64) -> Result<C64, BlaschkeError> {
        blaschke_value(self.k, self.b, z)
    }

    pub fn derivative(&self, z: C64) -> Result<C64, BlaschkeError> {
        blaschke_derivative(self.k, self.b, z)
    }
}

/// Real fixed point in `[0, 1]` attracting the critical orbit: iterate from
/// 0, then polish with Newton on `B(x) - x`.
pub fn attracting_fixed_point(k: usize, b: f64) -> f64 {
    let f = |x: f64| (x.powi(k as i32) + b) / (1.0 + b * x.powi(k as i32));
    let df = |x: f64| k as f64 * x.powi(k as i32 - 1) * (1.0 - b * b) / (1.0 + b * x.powi(k as i32)).powi(2);
    let mut x = 0.0f64;
    for _ in 0..200_000 {
        let y = f(x);
        let done = (y - x).abs() < 1e-14;
        x = y;
        if done {
            break;
        }
    }
    for _ in 0..3 {
        let g = df(x) - 1.0;
        if g.abs() < 1e-8 {
            break;
        }
        let next = x - (f(x) - x) / g;
        if !(0.0..=1.0).contains(&next) {
            break;
        }
        x = next;
    }
    x
}

pub fn model_for_b(k: usize, b: f64) -> BlaschkeModel {
    let alpha = attracting_fixed_point(k, b);
    let multiplier = blaschke_derivative(k, b, C64::new(alpha, 0.0)).map_or(f64::NAN, |d| d.re);
    BlaschkeModel { k, b, alpha, multiplier }
}

/// Bisection on `b` in `(0, (k-1)/(k+1))` for multiplier `lambda` at the
/// attracting fixed point.
pub fn solve_b_for_multiplier(k: usize, lambda: f64) -> Result<BlaschkeModel, BlaschkeError> {
    if k < 2 {
        return Err(BlaschkeError::BadDegree(k));
    }
    if !(lambda > 0.0 && lambda < 1.0) {
        return Err(BlaschkeError::NoBracket(lambda));
    }
    let (mut lo, mut hi) = (0.0, parabolic_parameter(k));
    let f = |b: f64| model_for_b(k, b).multiplier - lambda;
    // the upper endpoint is parabolic with multiplier 1
    if !(f(lo) < 0.0 && 1.0 - lambda > 0.0) {
        return Err(BlaschkeError::NoBracket(lambda));
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if f(mid) < 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(model_for_b(k, 0.5 * (lo + hi)))
}

/// Root in `(0, 1)` of `k(z - b)(1 - zb) = lambda z (1 - b^2)`, and the
/// fixed-point residual `|B_b(z) - z|` there. For the right `b` both the
/// multiplier and fixed-point conditions hold at the same `z`.
pub fn multiplier_quadratic_check(k: usize, lambda: f64, b: f64) -> Option<(f64, f64)> {
    let kf = k as f64;
    // -k b z^2 + (k(1 + b^2) - lambda(1 - b^2)) z - k b = 0
    let (qa, qb, qc) = (-kf * b, kf * (1.0 + b * b) - lambda * (1.0 - b * b), -kf * b);
    let disc = qb * qb - 4.0 * qa * qc;
    if qa == 0.0 || disc < 0.0 {
        return None;
    }
    let s = disc.sqrt();
    // stable pair: product of the roots is 1
    let big = (-qb - qb.signum() * s) / (2.0 * qa);
    let z = if big.abs() > 1.0 { 1.0 / big } else { big };
    let resid = (blaschke_value(k, b, C64::new(z, 0.0)).ok()?.re - z).abs();
    Some((z, resid))
}

/// `a z^{k+1} - z^k + z - a`, the numerator of `E(z) - z`.
pub fn fixed_point_polynomial(k: usize, a: f64) -> ComplexPoly {
    let mut c = vec![0.0; k + 2];
    c[0] = -a;
    c[1] += 1.0;
    c[k] -= 1.0;
    c[k + 1] = a;
    ComplexPoly::from_real(&c)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TripleRootReport {
    pub k: usize,
    pub a: f64,
    pub quotient: Vec<Cx>,
    pub remainder: Vec<Cx>,
    pub remainder_norm: f64,
    pub second_derivative_residual: f64,
    pub pass: bool,
}

pub fn verify_triple_root(k: usize) -> TripleRootReport {
    verify_triple_root_at(k, parabolic_parameter(k))
}

/// Divides the monic fixed-point polynomial by `(z-1)^3`.
pub fn verify_triple_root_at(k: usize, a: f64) -> TripleRootReport {
    let p = fixed_point_polynomial(k, a).monic();
    let cube = ComplexPoly::from_real(&[-1.0, 3.0, -3.0, 1.0]);
    let (q, r) = p.div_rem(&cube).expect("divisor is nonzero");
    let remainder: Vec<Cx> = (0..3).map(|i| r.coeff(i).into()).collect();
    let remainder_norm = (0..3).map(|i| r.coeff(i).norm()).fold(0.0, f64::max);
    let kf = k as f64;
    let second = (kf + 1.0) * kf - kf * (kf - 1.0) / a;
    let pass = remainder_norm < 1e-12 && second.abs() < 1e-9;
    TripleRootReport {
        k,
        a,
        quotient: q.coeffs().iter().map(|&c| c.into()).collect(),
        remainder,
        remainder_norm,
        second_derivative_residual: second,
        pass,
    }
}

/// `z -> (a z + b) / (c z + d)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MoebiusTransform {
    pub a: C64,
    pub b: C64,
    pub c: C64,
    pub d: C64,
}

impl MoebiusTransform {
    pub fn new(a: C64, b: C64, c: C64, d: C64) -> Result<Self, BlaschkeError> {
        if (a * d - b * c).norm() == 0.0 {
            return Err(BlaschkeError::Degenerate);
        }
        Ok(MoebiusTransform { a, b, c, d })
    }

    pub fn identity() -> Self {
        let (o, z) = (C64::new(1.0, 0.0), C64::new(0.0, 0.0));
        MoebiusTransform { a: o, b: z, c: z, d: o }
    }

    /// `M_b(z) = (z + b)/(1 + b z)`.
    pub fn shift(b: f64) -> Self {
        let (o, bb) = (C64::new(1.0, 0.0), C64::new(b, 0.0));
        MoebiusTransform { a: o, b: bb, c: bb, d: o }
    }

    /// Disk automorphism sending `a` to 0 and fixing 1.
    pub fn disk_automorphism(a: C64) -> Result<Self, BlaschkeError> {
        let one = C64::new(1.0, 0.0);
        if a.norm() >= 1.0 {
            return Err(BlaschkeError::Degenerate);
        }
        let s = (one - a.conj()) / (one - a);
        MoebiusTransform::new(s, -s * a, -a.conj(), one)
    }

    pub fn det(&self) -> C64 {
        self.a * self.d - self.b * self.c
    }

    pub fn apply(&self, z: C64) -> Result<C64, BlaschkeError> {
        let den = self.c * z + self.d;
        if den.norm() == 0.0 {
            return Err(BlaschkeError::PoleHit(z));
        }
        Ok((self.a * z + self.b) / den)
    }

    pub fn derivative(&self, z: C64) -> Result<C64, BlaschkeError> {
        let den = self.c * z + self.d;
        if den.norm() == 0.0 {
            return Err(BlaschkeError::PoleHit(z));
        }
        Ok(self.det() / (den * den))
    }

    /// `self ∘ other`.
    pub fn compose(&self, o: &MoebiusTransform) -> Self {
        MoebiusTransform {
            a: self.a * o.a + self.b * o.c,
            b: self.a * o.b + self.b * o.d,
            c: self.c * o.a + self.d * o.c,
            d: self.c * o.b + self.d * o.d,
        }
    }

    pub fn inverse(&self) -> Self {
        MoebiusTransform { a: self.d, b: -self.b, c: -self.c, d: self.a }
    }
}

/// `B_b = M_b ∘ (z -> z^k)`.
pub fn moebius_factorization(model: &BlaschkeModel) -> (MoebiusTransform, usize) {
    (MoebiusTransform::shift(model.b), model.k)
}
