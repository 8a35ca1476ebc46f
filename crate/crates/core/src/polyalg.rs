//! Dense complex polynomials and rational maps.
//!
//! Coefficients are stored in ascending order of powers. The zero polynomial
//! is the empty coefficient vector.

use std::fmt;
use std::ops::{Add, Mul, Neg, Sub};
use std::str::FromStr;

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

pub type C64 = Complex64;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PolyError {
    #[error("root finder did not converge after {sweeps} sweeps")]
    NonConvergence { sweeps: usize, partial: Vec<Root> },
    #[error("polynomial has degree {0}, need at least 1")]
    DegreeTooLow(isize),
    #[error("cannot parse coefficient `{0}`")]
    Parse(String),
    #[error("division by the zero polynomial")]
    DivisionByZero,
}

/// A root with its (clustered) multiplicity.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Root {
    pub value: C64,
    pub multiplicity: usize,
}

#[derive(Clone, PartialEq, Default)]
pub struct ComplexPoly {
    coeffs: Vec<C64>,
}

impl fmt::Debug for ComplexPoly {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "ComplexPoly[{}]", self)
    }
}

impl ComplexPoly {
    pub fn new(mut coeffs: Vec<C64>) -> Self {
        while coeffs.last().is_some_and(|c| *c == C64::new(0.0, 0.0)) {
            coeffs.pop();
        }
        ComplexPoly { coeffs }
    }

    pub fn from_real(coeffs: &[f64]) -> Self {
        Self::new(coeffs.iter().map(|&c| C64::new(c, 0.0)).collect())
    }

    pub fn zero() -> Self {
        ComplexPoly { coeffs: Vec::new() }
    }

    pub fn constant(c: C64) -> Self {
        Self::new(vec![c])
    }

    /// The monomial `z`.
    pub fn z() -> Self {
        Self::from_real(&[0.0, 1.0])
    }

    /// `lead * prod (z - r)` over the given roots.
    pub fn from_roots(roots: &[C64], lead: C64) -> Self {
        let mut coeffs = vec![lead];
        for &r in roots {
            let mut next = vec![C64::new(0.0, 0.0); coeffs.len() + 1];
            for (i, &c) in coeffs.iter().enumerate() {
                next[i + 1] += c;
                next[i] -= c * r;
            }
            coeffs = next;
        }
        Self::new(coeffs)
    }

    pub fn coeffs(&self) -> &[C64] {
        &self.coeffs
    }

    pub fn is_zero(&self) -> bool {
        self.coeffs.is_empty()
    }

    /// Degree, with the zero polynomial reported as -1.
    pub fn degree(&self) -> isize {
        self.coeffs.len() as isize - 1
    }

    pub fn coeff(&self, i: usize) -> C64 {
        self.coeffs.get(i).copied().unwrap_or_default()
    }

    pub fn leading(&self) -> C64 {
        self.coeffs.last().copied().unwrap_or_default()
    }

    /// Largest coefficient modulus.
    pub fn norm_inf(&self) -> f64 {
        self.coeffs.iter().map(|c| c.norm()).fold(0.0, f64::max)
    }

    /// Drops leading coefficients smaller than `rel * norm_inf`.
    pub fn trimmed(&self, rel: f64) -> Self {
        let cut = rel * self.norm_inf();
        let mut coeffs = self.coeffs.clone();
        while coeffs.last().is_some_and(|c| c.norm() <= cut) {
            coeffs.pop();
        }
        ComplexPoly { coeffs }
    }

    pub fn scale(&self, s: C64) -> Self {
        Self::new(self.coeffs.iter().map(|&c| c * s).collect())
    }

    pub fn monic(&self) -> Self {
        if self.is_zero() {
            return self.clone();
        }
        self.scale(self.leading().inv())
    }

    /// Horner evaluation.
    pub fn eval(&self, z: C64) -> C64 {
        self.coeffs
            .iter()
            .rev()
            .fold(C64::new(0.0, 0.0), |acc, &c| acc * z + c)
    }

    /// Value and first derivative in one Horner pass.
    pub fn eval_with_derivative(&self, z: C64) -> (C64, C64) {
        let mut p = C64::new(0.0, 0.0);
        let mut dp = C64::new(0.0, 0.0);
        for &c in self.coeffs.iter().rev() {
            dp = dp * z + p;
            p = p * z + c;
        }
        (p, dp)
    }

    /// `sum |a_i| |z|^i`, the scale of rounding error in `eval`.
    pub fn eval_abs(&self, z: C64) -> f64 {
        let r = z.norm();
        self.coeffs.iter().rev().fold(0.0, |acc, c| acc * r + c.norm())
    }

    pub fn derivative(&self) -> Self {
        Self::new(
            self.coeffs
                .iter()
                .enumerate()
                .skip(1)
                .map(|(i, &c)| c * i as f64)
                .collect(),
        )
    }

    /// Coefficients of `h -> p(x + h)`.
    pub fn shifted(&self, x: C64) -> Self {
        let mut c = self.coeffs.clone();
        let n = c.len();
        for i in 0..n {
            for j in (i..n.saturating_sub(1)).rev() {
                let next = c[j + 1];
                c[j] += x * next;
            }
        }
        Self::new(c)
    }

    /// `z^n * p(1/z)`, i.e. the coefficient vector reversed and padded to
    /// length `n + 1`. Requires `n >= degree`.
    pub fn reversed(&self, n: usize) -> Self {
        assert!(n as isize >= self.degree(), "reversal degree below polynomial degree");
        let mut coeffs = vec![C64::new(0.0, 0.0); n + 1];
        for (i, &c) in self.coeffs.iter().enumerate() {
            coeffs[n - i] = c;
        }
        Self::new(coeffs)
    }

    /// Long division: returns `(quotient, remainder)`.
    pub fn div_rem(&self, divisor: &ComplexPoly) -> Result<(Self, Self), PolyError> {
        if divisor.is_zero() {
            return Err(PolyError::DivisionByZero);
        }
        let dd = divisor.coeffs.len() - 1;
        if self.coeffs.len() <= dd {
            return Ok((Self::zero(), self.clone()));
        }
        let lead_inv = divisor.leading().inv();
        let mut rem = self.coeffs.clone();
        let mut quot = vec![C64::new(0.0, 0.0); rem.len() - dd];
        for i in (0..quot.len()).rev() {
            let q = rem[i + dd] * lead_inv;
            quot[i] = q;
            for (j, &dc) in divisor.coeffs.iter().enumerate() {
                rem[i + j] -= q * dc;
            }
            rem[i + dd] = C64::new(0.0, 0.0);
        }
        rem.truncate(dd);
        Ok((Self::new(quot), Self::new(rem)))
    }

    /// Synthetic division by `(z - a)`, discarding the remainder.
    pub fn deflate(&self, a: C64) -> Self {
        if self.coeffs.len() <= 1 {
            return Self::zero();
        }
        let n = self.coeffs.len() - 1;
        let mut out = vec![C64::new(0.0, 0.0); n];
        let mut acc = C64::new(0.0, 0.0);
        for i in (0..n).rev() {
            acc = acc * a + self.coeffs[i + 1];
            out[i] = acc;
        }
        Self::new(out)
    }

    /// Cauchy upper bound on root moduli.
    pub fn cauchy_bound(&self) -> f64 {
        let lead = self.leading().norm();
        1.0 + self.coeffs[..self.coeffs.len().saturating_sub(1)]
            .iter()
            .map(|c| c.norm() / lead)
            .fold(0.0, f64::max)
    }

    /// All roots with multiplicity, with default tolerance.
    pub fn roots(&self) -> Result<Vec<Root>, PolyError> {
        self.roots_with_tol(DEFAULT_ROOT_TOL)
    }

    /// Aberth–Ehrlich simultaneous iteration followed by clustering of
    /// near-coincident approximations into multiple roots.
    pub fn roots_with_tol(&self, tol: f64) -> Result<Vec<Root>, PolyError> {
        let deg = self.degree();
        if deg < 1 {
            return Err(PolyError::DegreeTooLow(deg));
        }
        // exact zeros at the origin
        let zeros = self.coeffs.iter().take_while(|c| c.norm() == 0.0).count();
        let reduced = ComplexPoly::new(self.coeffs[zeros..].to_vec());
        let mut out = Vec::new();
        if zeros > 0 {
            out.push(Root { value: C64::new(0.0, 0.0), multiplicity: zeros });
        }
        if reduced.degree() < 1 {
            return Ok(out);
        }
        let (approx, converged, sweeps) = aberth(&reduced);
        let clustered = cluster_roots(&reduced, &approx, tol);
        out.extend(clustered);
        if converged {
            Ok(out)
        } else {
            Err(PolyError::NonConvergence { sweeps, partial: out })
        }
    }
}

pub const DEFAULT_ROOT_TOL: f64 = 1e-12;
const MAX_SWEEPS: usize = 500;
const ROOT_SEED: u64 = 0x5e_ed0f_a8e7;

fn aberth(p: &ComplexPoly) -> (Vec<C64>, bool, usize) {
    let n = p.degree() as usize;
    if n == 1 {
        return (vec![-p.coeff(0) / p.coeff(1)], true, 0);
    }
    let bound = p.cauchy_bound();
    // geometric-mean radius is a much better starting scale than the bound
    let mean_r = (p.coeff(0).norm() / p.leading().norm()).powf(1.0 / n as f64);
    let start_r = if mean_r.is_finite() && mean_r > 0.0 { mean_r.min(bound) } else { bound };
    let mut rng = ChaCha8Rng::seed_from_u64(ROOT_SEED);
    let offset: f64 = rng.gen_range(0.0..std::f64::consts::TAU);
    let mut z: Vec<C64> = (0..n)
        .map(|k| {
            let r = start_r * rng.gen_range(0.5..1.0);
            C64::from_polar(r, offset + std::f64::consts::TAU * k as f64 / n as f64)
        })
        .collect();
    let dp = p.derivative();
    let mut frozen = vec![false; n];
    let step_tol = 1e-13 * bound;
    for sweep in 1..=MAX_SWEEPS {
        let mut max_step: f64 = 0.0;
        for i in 0..n {
            if frozen[i] {
                continue;
            }
            let zi = z[i];
            let pv = p.eval(zi);
            if pv.norm() <= 4.0 * f64::EPSILON * p.eval_abs(zi) {
                frozen[i] = true;
                continue;
            }
            let ratio = pv / dp.eval(zi);
            let repulsion: C64 = (0..n)
                .filter(|&j| j != i)
                .map(|j| {
                    let diff = zi - z[j];
                    if diff.norm() == 0.0 {
                        C64::new(0.0, 0.0)
                    } else {
                        diff.inv()
                    }
                })
                .sum();
            let mut step = ratio / (C64::new(1.0, 0.0) - ratio * repulsion);
            if !step.is_finite() {
                step = if ratio.is_finite() { ratio } else { C64::new(1e-8 * bound, 0.0) };
            }
            z[i] = zi - step;
            let s = step.norm();
            max_step = max_step.max(s);
            if s < step_tol {
                frozen[i] = true;
            }
        }
        if frozen.iter().all(|&f| f) || max_step < step_tol {
            return (z, true, sweep);
        }
    }
    (z, false, MAX_SWEEPS)
}

/// Clusters approximations lying within `scale * kappa * tol^(1/m)` of each
/// other, where `m` is the tentative cluster size. The centroid of an
/// `m`-fold cluster is accurate to roughly machine precision even though
/// the individual approximations are only accurate to `eps^(1/m)`.
fn cluster_roots(p: &ComplexPoly, approx: &[C64], tol: f64) -> Vec<Root> {
    const KAPPA: f64 = 4.0;
    let n = approx.len();
    let mut assigned = vec![false; n];
    let mut out = Vec::new();
    for i in 0..n {
        if assigned[i] {
            continue;
        }
        let mut near: Vec<usize> = (0..n).filter(|&j| !assigned[j]).collect();
        near.sort_by(|&a, &b| {
            (approx[a] - approx[i])
                .norm()
                .partial_cmp(&(approx[b] - approx[i]).norm())
                .unwrap_or(std::cmp::Ordering::Equal)
        });
        // largest m whose m nearest approximations fit in the m-fold radius
        let mut members = vec![i];
        for m in (2..=near.len()).rev() {
            let cand = &near[..m];
            let center = centroid(approx, cand);
            let radius = KAPPA * tol.powf(1.0 / m as f64) * (1.0 + center.norm());
            if cand.iter().all(|&j| (approx[j] - center).norm() < radius) {
                members = cand.to_vec();
                break;
            }
        }
        let mult = members.len();
        // a genuine m-fold root leaves p' small at the centroid
        let center = centroid(approx, &members);
        let members = if mult > 1 && !is_multiple_root(p, center, mult) {
            vec![i]
        } else {
            members
        };
        for &j in &members {
            assigned[j] = true;
        }
        let value = polish(p, centroid(approx, &members), members.len());
        out.push(Root { value, multiplicity: members.len() });
    }
    out.sort_by(|a, b| {
        (a.value.re, a.value.im)
            .partial_cmp(&(b.value.re, b.value.im))
            .unwrap_or(std::cmp::Ordering::Equal)
    });
    out
}

fn centroid(approx: &[C64], members: &[usize]) -> C64 {
    members.iter().map(|&j| approx[j]).sum::<C64>() / members.len() as f64
}

fn is_multiple_root(p: &ComplexPoly, z: C64, m: usize) -> bool {
    // |p'(z)| relative to the derivative scale shrinks like eps^((m-1)/m)
    let dp = p.derivative();
    let scale = dp.eval_abs(z).max(f64::MIN_POSITIVE);
    m > 1 && dp.eval(z).norm() / scale < 1e-4
}

/// Newton steps on `p^(m-1)`, which has a simple root where `p` has an
/// `m`-fold one, kept only while they reduce that residual.
fn polish(p: &ComplexPoly, z0: C64, m: usize) -> C64 {
    let mut q = p.clone();
    for _ in 1..m {
        q = q.derivative();
    }
    let mut z = z0;
    let mut best = q.eval(z).norm();
    for _ in 0..4 {
        let (qv, dqv) = q.eval_with_derivative(z);
        if dqv.norm() == 0.0 || best == 0.0 {
            break;
        }
        let next = z - qv / dqv;
        let r = q.eval(next).norm();
        if r.is_finite() && r < best {
            z = next;
            best = r;
        } else {
            break;
        }
    }
    z
}

impl Add for &ComplexPoly {
    type Output = ComplexPoly;
    fn add(self, rhs: &ComplexPoly) -> ComplexPoly {
        let n = self.coeffs.len().max(rhs.coeffs.len());
        ComplexPoly::new((0..n).map(|i| self.coeff(i) + rhs.coeff(i)).collect())
    }
}

impl Sub for &ComplexPoly {
    type Output = ComplexPoly;
    fn sub(self, rhs: &ComplexPoly) -> ComplexPoly {
        let n = self.coeffs.len().max(rhs.coeffs.len());
        ComplexPoly::new((0..n).map(|i| self.coeff(i) - rhs.coeff(i)).collect())
    }
}

impl Mul for &ComplexPoly {
    type Output = ComplexPoly;
    fn mul(self, rhs: &ComplexPoly) -> ComplexPoly {
        if self.is_zero() || rhs.is_zero() {
            return ComplexPoly::zero();
        }
        let mut out = vec![C64::new(0.0, 0.0); self.coeffs.len() + rhs.coeffs.len() - 1];
        for (i, &a) in self.coeffs.iter().enumerate() {
            for (j, &b) in rhs.coeffs.iter().enumerate() {
                out[i + j] += a * b;
            }
        }
        ComplexPoly::new(out)
    }
}

impl Neg for &ComplexPoly {
    type Output = ComplexPoly;
    fn neg(self) -> ComplexPoly {
        self.scale(C64::new(-1.0, 0.0))
    }
}

macro_rules! forward_owned {
    ($tr:ident, $m:ident) => {
        impl $tr for ComplexPoly {
            type Output = ComplexPoly;
            fn $m(self, rhs: ComplexPoly) -> ComplexPoly {
                (&self).$m(&rhs)
            }
        }
    };
}
forward_owned!(Add, add);
forward_owned!(Sub, sub);
forward_owned!(Mul, mul);

/// Formats a complex number as `re+imi`.
pub fn format_complex(c: C64) -> String {
    format!("{}{}{}i", c.re, if c.im.is_sign_negative() { "-" } else { "+" }, c.im.abs())
}

/// Parses `re+imi`, `re-imi`, a bare real, or a bare imaginary `imi`.
pub fn parse_complex(s: &str) -> Result<C64, PolyError> {
    let t = s.trim();
    let err = || PolyError::Parse(s.to_string());
    if t.is_empty() {
        return Err(err());
    }
    let Some(body) = t.strip_suffix('i') else {
        return t.parse::<f64>().map(|re| C64::new(re, 0.0)).map_err(|_| err());
    };
    let bytes = body.as_bytes();
    let split = (1..bytes.len())
        .rev()
        .find(|&i| (bytes[i] == b'+' || bytes[i] == b'-') && !matches!(bytes[i - 1], b'e' | b'E'));
    match split {
        Some(i) => {
            let re = body[..i].parse::<f64>().map_err(|_| err())?;
            let im_str = &body[i..];
            let im = match im_str {
                "+" => 1.0,
                "-" => -1.0,
                _ => im_str.parse::<f64>().map_err(|_| err())?,
            };
            Ok(C64::new(re, im))
        }
        None => {
            let im = match body {
                "" | "+" => 1.0,
                "-" => -1.0,
                _ => body.parse::<f64>().map_err(|_| err())?,
            };
            Ok(C64::new(0.0, im))
        }
    }
}

impl fmt::Display for ComplexPoly {
    /// Comma-separated ascending coefficients, `0+0i` for the zero polynomial.
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.coeffs.is_empty() {
            return write!(f, "0+0i");
        }
        let parts: Vec<String> = self.coeffs.iter().map(|&c| format_complex(c)).collect();
        write!(f, "{}", parts.join(","))
    }
}

impl FromStr for ComplexPoly {
    type Err = PolyError;
    fn from_str(s: &str) -> Result<Self, PolyError> {
        let coeffs = s.split(',').map(parse_complex).collect::<Result<Vec<_>, _>>()?;
        Ok(ComplexPoly::new(coeffs))
    }
}

/// A rational map `num / den`.
#[derive(Debug, Clone, PartialEq)]
pub struct RatMap {
    pub num: ComplexPoly,
    pub den: ComplexPoly,
}

/// Default GCD pairing tolerance, relative to the largest root modulus.
pub const DEFAULT_GCD_TOL: f64 = 1e-8;

impl RatMap {
    pub fn new(num: ComplexPoly, den: ComplexPoly) -> Self {
        assert!(!den.is_zero(), "rational map with zero denominator");
        RatMap { num, den }
    }

    pub fn polynomial(p: ComplexPoly) -> Self {
        RatMap::new(p, ComplexPoly::constant(C64::new(1.0, 0.0)))
    }

    pub fn degree(&self) -> usize {
        self.num.degree().max(self.den.degree()).max(0) as usize
    }

    /// Divides both parts by the denominator's leading coefficient.
    pub fn normalized(&self) -> Self {
        let s = self.den.leading().inv();
        RatMap { num: self.num.scale(s), den: self.den.scale(s) }
    }

    pub fn eval(&self, z: C64) -> Option<C64> {
        let d = self.den.eval(z);
        if d.norm() == 0.0 {
            None
        } else {
            Some(self.num.eval(z) / d)
        }
    }

    /// Cancels common roots of numerator and denominator paired within
    /// `tol * max(1, largest root modulus)`.
    pub fn reduce(&self, tol: f64) -> RatMap {
        if self.num.is_zero() {
            return RatMap::new(ComplexPoly::zero(), ComplexPoly::constant(C64::new(1.0, 0.0)));
        }
        if self.num.degree() < 1 || self.den.degree() < 1 {
            return self.clone();
        }
        let (Ok(nr), Ok(dr)) = (self.num.roots(), self.den.roots()) else {
            return self.clone();
        };
        let max_mod = nr
            .iter()
            .chain(dr.iter())
            .map(|r| r.value.norm())
            .fold(1.0, f64::max);
        let radius = tol * max_mod;
        let mut den_left: Vec<Root> = dr.clone();
        let mut num = self.num.clone();
        let mut den = self.den.clone();
        for r in &nr {
            let mut want = r.multiplicity;
            for d in den_left.iter_mut() {
                if want == 0 {
                    break;
                }
                if d.multiplicity > 0 && (d.value - r.value).norm() <= radius {
                    let common = want.min(d.multiplicity);
                    let a = (d.value + r.value) * 0.5;
                    for _ in 0..common {
                        num = num.deflate(a);
                        den = den.deflate(a);
                    }
                    d.multiplicity -= common;
                    want -= common;
                }
            }
        }
        RatMap::new(num, den)
    }

    /// `(num' den - num den') / den^2`, reduced.
    pub fn derivative(&self) -> RatMap {
        let top = &(&self.num.derivative() * &self.den) - &(&self.num * &self.den.derivative());
        let top = top.trimmed(1e-14);
        if top.is_zero() {
            return RatMap::new(ComplexPoly::zero(), ComplexPoly::constant(C64::new(1.0, 0.0)));
        }
        RatMap::new(top, &self.den * &self.den).reduce(DEFAULT_GCD_TOL)
    }

    /// Value of the derivative at `z` without forming the derivative map.
    pub fn eval_derivative(&self, z: C64) -> Option<C64> {
        let (n, dn) = self.num.eval_with_derivative(z);
        let (d, dd) = self.den.eval_with_derivative(z);
        if d.norm() == 0.0 {
            None
        } else {
            Some((dn * d - n * dd) / (d * d))
        }
    }

    /// The map conjugated by `z = 1/w`, i.e. `w -> 1/R(1/w)`.
    pub fn chart_at_infinity(&self) -> RatMap {
        let n = self.degree();
        RatMap::new(self.den.reversed(n), self.num.reversed(n))
    }

    /// Taylor coefficients at `w = 0` up to `order` (inclusive).
    /// Requires `den(0) != 0`.
    pub fn taylor_at_zero(&self, order: usize) -> Vec<C64> {
        let d0 = self.den.coeff(0);
        let mut out = Vec::with_capacity(order + 1);
        for j in 0..=order {
            let mut acc = self.num.coeff(j);
            for i in 1..=j {
                acc -= self.den.coeff(i) * out[j - i];
            }
            out.push(acc / d0);
        }
        out
    }
}

/// First index `j >= from` whose coefficient is significant after rescaling
/// the series to unit radius, i.e. `|t_j| r^j > rel` with
/// `r = 1/max_i |t_i|^{1/i}` over `i >= from`. Rescaling keeps a genuine
/// low-order term from being swamped by coefficients that grow
/// geometrically.
pub fn first_significant(series: &[C64], from: usize, rel: f64) -> Option<usize> {
    let growth = series
        .iter()
        .enumerate()
        .skip(from.max(1))
        .map(|(i, c)| c.norm().powf(1.0 / i as f64))
        .fold(0.0, f64::max);
    if growth == 0.0 {
        return None;
    }
    (from..series.len()).find(|&j| series[j].norm() / growth.powi(j as i32) > rel)
}

/// Uniform random polynomial of given degree with roots in the disk of
/// radius `spread`. Used by tests and the acceptance suite.
pub fn random_roots<R: Rng>(rng: &mut R, n: usize, spread: f64) -> Vec<C64> {
    (0..n)
        .map(|_| {
            let r = spread * rng.gen::<f64>().sqrt();
            C64::from_polar(r, rng.gen_range(0.0..std::f64::consts::TAU))
        })
        .collect()
}
