//! Newton maps `N(z) = z - p/(p' + p q')` of `p e^q`, their fixed points,
//! multipliers and critical points.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::polyalg::{first_significant, ComplexPoly, PolyError, RatMap, Root, C64, DEFAULT_GCD_TOL};
use crate::sphere::{chordal, SpherePoint};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum NewtonError {
    #[error("p is the zero polynomial")]
    DegenerateInput,
    #[error("point is not fixed: spherical residual {0:e}")]
    NotFixed(f64),
    #[error("map has degree {0}, need at least 2")]
    BadDegree(usize),
    #[error(transparent)]
    Poly(#[from] PolyError),
}

/// Fixed-point residual tolerance (chordal metric).
pub const FIXED_TOL: f64 = 1e-10;
/// Tolerance used when matching multipliers.
pub const MULTIPLIER_TOL: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq)]
pub struct NewtonMapSpec {
    pub p: ComplexPoly,
    pub q: ComplexPoly,
    pub map: RatMap,
    /// The map conjugated by `z = 1/w`.
    pub chart: RatMap,
    pub d: usize,
    pub n: usize,
}

pub fn build_newton_map(p: &ComplexPoly, q: &ComplexPoly) -> Result<NewtonMapSpec, NewtonError> {
    if p.is_zero() {
        return Err(NewtonError::DegenerateInput);
    }
    let den = &p.derivative() + &(p * &q.derivative());
    let num = &(&ComplexPoly::z() * &den) - p;
    let raw = RatMap::new(num, den);
    let map = raw.reduce(DEFAULT_GCD_TOL);
    Ok(from_map(p.clone(), q.clone(), map))
}

fn from_map(p: ComplexPoly, q: ComplexPoly, map: RatMap) -> NewtonMapSpec {
    let chart = map.chart_at_infinity();
    let d = map.degree();
    let n = q.degree().max(0) as usize;
    NewtonMapSpec { p, q, map, chart, d, n }
}

impl NewtonMapSpec {
    /// One step of the map on the sphere. Large `|z|` goes through the chart.
    pub fn step(&self, z: SpherePoint) -> SpherePoint {
        step_rational(&self.map, &self.chart, z)
    }
}

pub(crate) const CHART_SWITCH: f64 = 1e6;

pub(crate) fn step_rational(map: &RatMap, chart: &RatMap, z: SpherePoint) -> SpherePoint {
    match z {
        SpherePoint::Finite(z) if z.norm() <= CHART_SWITCH => match map.eval(z) {
            Some(v) if v.is_finite() => SpherePoint::Finite(v),
            _ => SpherePoint::Infinity,
        },
        other => {
            let w = other.chart();
            match chart.eval(w) {
                Some(v) if v.is_finite() => SpherePoint::from_chart(v),
                // chart value infinite means the image is 0
                _ => SpherePoint::Finite(C64::new(0.0, 0.0)),
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FixedClass {
    Superattracting,
    Attracting,
    Repelling,
    Parabolic,
    Indifferent,
}

pub fn classify_multiplier(m: C64) -> FixedClass {
    let r = m.norm();
    if r < MULTIPLIER_TOL {
        FixedClass::Superattracting
    } else if (m - 1.0).norm() < MULTIPLIER_TOL {
        FixedClass::Parabolic
    } else if r < 1.0 - MULTIPLIER_TOL {
        FixedClass::Attracting
    } else if r > 1.0 + MULTIPLIER_TOL {
        FixedClass::Repelling
    } else {
        FixedClass::Indifferent
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FixedPointInfo {
    pub location: SpherePoint,
    pub multiplier: C64,
    pub class: FixedClass,
    pub petals: usize,
    /// `m` with multiplier `(m-1)/m`, for finite fixed points.
    pub root_multiplicity: Option<usize>,
}

/// Leading term `a w^{nu+1}` of a parabolic germ `w + a w^{nu+1} + ...`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ParabolicGerm {
    pub petals: usize,
    pub coefficient: C64,
}

const GERM_ORDER: usize = 24;

/// Germ of a multiplier-one fixed point at `w = 0` of `chart`.
pub fn parabolic_germ(chart: &RatMap) -> Option<ParabolicGerm> {
    if chart.den.coeff(0).norm() == 0.0 {
        return None;
    }
    let t = chart.taylor_at_zero(GERM_ORDER);
    if t[0].norm() > FIXED_TOL || (t[1] - 1.0).norm() > MULTIPLIER_TOL {
        return None;
    }
    first_significant(&t, 2, 1e-9).map(|j| ParabolicGerm { petals: j - 1, coefficient: t[j] })
}

/// Nearest `m` in `1..=64` with `(m-1)/m` closest to the multiplier.
pub fn nearest_newton_index(multiplier: C64) -> (usize, f64) {
    (1..=64usize)
        .map(|m| (m, (multiplier - (m as f64 - 1.0) / m as f64).norm()))
        .min_by(|a, b| a.1.total_cmp(&b.1))
        .expect("nonempty range")
}

pub fn fixed_points(spec: &NewtonMapSpec, tol: f64) -> Result<Vec<FixedPointInfo>, NewtonError> {
    let mut out = fixed_points_of(&spec.map, tol)?;
    if let Some(inf) = out.iter_mut().find(|f| f.location.is_infinity()) {
        if spec.n >= 1 {
            if let Some(g) = parabolic_germ(&spec.chart) {
                inf.petals = g.petals;
            }
        }
    }
    Ok(out)
}

/// Fixed points of an arbitrary rational map: roots of `num - z den`, plus
/// infinity when `deg num > deg den`.
pub fn fixed_points_of(map: &RatMap, _tol: f64) -> Result<Vec<FixedPointInfo>, NewtonError> {
    let poly = (&map.num - &(&ComplexPoly::z() * &map.den)).trimmed(1e-14);
    let mut out = Vec::new();
    if poly.degree() >= 1 {
        for Root { value, .. } in poly.roots()? {
            let multiplier = map.eval_derivative(value).unwrap_or(C64::new(f64::INFINITY, 0.0));
            let (m, _) = nearest_newton_index(multiplier);
            out.push(FixedPointInfo {
                location: SpherePoint::Finite(value),
                multiplier,
                class: classify_multiplier(multiplier),
                petals: 0,
                root_multiplicity: Some(m),
            });
        }
    }
    if map.num.degree() > map.den.degree() {
        let chart = map.chart_at_infinity();
        let multiplier = chart.taylor_at_zero(1)[1];
        let petals = parabolic_germ(&chart).map_or(0, |g| g.petals);
        out.push(FixedPointInfo {
            location: SpherePoint::Infinity,
            multiplier,
            class: classify_multiplier(multiplier),
            petals,
            root_multiplicity: None,
        });
    }
    Ok(out)
}

pub fn multiplier_at(spec: &NewtonMapSpec, xi: SpherePoint, tol: f64) -> Result<C64, NewtonError> {
    multiplier_of(&spec.map, xi, tol)
}

pub fn multiplier_of(map: &RatMap, xi: SpherePoint, tol: f64) -> Result<C64, NewtonError> {
    let chart = map.chart_at_infinity();
    let image = step_rational(map, &chart, xi);
    let resid = chordal(image, xi);
    if resid > tol {
        return Err(NewtonError::NotFixed(resid));
    }
    match xi {
        SpherePoint::Finite(z) if z.norm() <= CHART_SWITCH => {
            map.eval_derivative(z).ok_or(NewtonError::NotFixed(f64::INFINITY))
        }
        other => {
            // multiplier is invariant under the conjugation z = 1/w
            let w = other.chart();
            chart.eval_derivative(w).ok_or(NewtonError::NotFixed(f64::INFINITY))
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CriticalPoint {
    pub point: SpherePoint,
    pub multiplicity: usize,
}

pub fn critical_points(spec: &NewtonMapSpec, _tol: f64) -> Result<Vec<CriticalPoint>, NewtonError> {
    critical_points_of(&spec.map)
}

pub fn critical_points_of(map: &RatMap) -> Result<Vec<CriticalPoint>, NewtonError> {
    let d = map.degree();
    if d < 2 {
        return Err(NewtonError::BadDegree(d));
    }
    let w = (&(&map.num.derivative() * &map.den) - &(&map.num * &map.den.derivative())).trimmed(1e-13);
    let mut out = Vec::new();
    if w.degree() >= 1 {
        for r in w.roots()? {
            out.push(CriticalPoint { point: SpherePoint::Finite(r.value), multiplicity: r.multiplicity });
        }
    }
    let inf = local_degree_at_infinity(map) - 1;
    if inf > 0 {
        out.push(CriticalPoint { point: SpherePoint::Infinity, multiplicity: inf });
    }
    Ok(out)
}

/// Local degree of the map at infinity, read from Taylor coefficients in
/// the chart.
pub fn local_degree_at_infinity(map: &RatMap) -> usize {
    let n = map.degree();
    let order = 2 * n + 2;
    let series = if map.num.degree() > map.den.degree() {
        map.chart_at_infinity().taylor_at_zero(order)
    } else {
        // R(1/w) - R(inf), finite image
        let g = RatMap::new(map.num.reversed(n), map.den.reversed(n));
        let mut t = g.taylor_at_zero(order);
        t[0] = C64::new(0.0, 0.0);
        t
    };
    first_significant(&series, 1, 1e-10).unwrap_or(1)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NewtonCharacterEntry {
    pub point: SpherePoint,
    pub multiplier: crate::sphere::Cx,
    pub m: usize,
    pub residual: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NewtonCharacterReport {
    pub entries: Vec<NewtonCharacterEntry>,
    pub pass: bool,
}

/// Necessary-condition certificate that `map` is the Newton map of an entire
/// function: every finite fixed point has multiplier `(m-1)/m`.
pub fn verify_newton_character(map: &RatMap, tol: f64) -> Result<NewtonCharacterReport, NewtonError> {
    let entries: Vec<NewtonCharacterEntry> = fixed_points_of(map, FIXED_TOL)?
        .into_iter()
        .filter(|f| !f.location.is_infinity())
        .map(|f| {
            let (m, residual) = nearest_newton_index(f.multiplier);
            NewtonCharacterEntry { point: f.location, multiplier: f.multiplier.into(), m, residual }
        })
        .collect();
    let pass = entries.iter().all(|e| e.residual < tol);
    Ok(NewtonCharacterReport { entries, pass })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn c(re: f64, im: f64) -> C64 {
        C64::new(re, im)
    }

    fn poly(cs: &[f64]) -> ComplexPoly {
        ComplexPoly::from_real(cs)
    }

    fn assert_map(spec: &NewtonMapSpec, num: &[f64], den: &[f64]) {
        let m = spec.map.normalized();
        let s = den.last().copied().unwrap();
        assert_eq!(m.num.degree() as usize, num.len() - 1, "{:?}", m);
        assert_eq!(m.den.degree() as usize, den.len() - 1, "{:?}", m);
        for (i, &v) in num.iter().enumerate() {
            assert!((m.num.coeff(i) - v / s).norm() < 1e-12);
        }
        for (i, &v) in den.iter().enumerate() {
            assert!((m.den.coeff(i) - v / s).norm() < 1e-12);
        }
    }

    #[test]
    fn builds_closed_forms() {
        let s = build_newton_map(&poly(&[-1.0, 0.0, 1.0]), &poly(&[0.0])).unwrap();
        assert_map(&s, &[1.0, 0.0, 1.0], &[0.0, 2.0]);
        assert_eq!((s.d, s.n), (2, 0));
        let s = build_newton_map(&poly(&[0.0, 1.0]), &poly(&[0.0, 1.0])).unwrap();
        assert_map(&s, &[0.0, 0.0, 1.0], &[1.0, 1.0]);
        assert_eq!((s.d, s.n), (2, 1));
        assert_eq!(build_newton_map(&ComplexPoly::zero(), &poly(&[1.0])), Err(NewtonError::DegenerateInput));
    }

    #[test]
    fn degree_is_sum_for_generic_input() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let p = ComplexPoly::from_roots(&crate::polyalg::random_roots(&mut rng, 3, 2.0), c(1.0, 0.0));
        let q = ComplexPoly::new((0..3).map(|_| c(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0))).collect());
        let s = build_newton_map(&p, &q).unwrap();
        assert_eq!(s.d, 5);
        assert!(s.map.num.degree() > s.map.den.degree());
    }

    #[test]
    fn fixed_points_quadratic() {
        let s = build_newton_map(&poly(&[-1.0, 0.0, 1.0]), &poly(&[0.0])).unwrap();
        let fp = fixed_points(&s, FIXED_TOL).unwrap();
        assert_eq!(fp.len(), 3);
        for f in &fp[..2] {
            assert!(f.multiplier.norm() < 1e-12);
            assert_eq!(f.class, FixedClass::Superattracting);
            assert_eq!(f.root_multiplicity, Some(1));
        }
        let inf = &fp[2];
        assert!(inf.location.is_infinity());
        assert!((inf.multiplier - 2.0).norm() < 1e-12);
        assert_eq!(inf.class, FixedClass::Repelling);
    }

    #[test]
    fn infinity_parabolic_with_one_petal() {
        let s = build_newton_map(&poly(&[0.0, 1.0]), &poly(&[0.0, 1.0])).unwrap();
        let fp = fixed_points(&s, FIXED_TOL).unwrap();
        assert_eq!(fp.len(), 2);
        assert!(fp[0].multiplier.norm() < 1e-12);
        assert_eq!(fp[1].class, FixedClass::Parabolic);
        assert_eq!(fp[1].petals, 1);
        assert!((fp[1].multiplier - 1.0).norm() < 1e-12);
    }

    #[test]
    fn double_root_halves() {
        let s = build_newton_map(&poly(&[0.0, 0.0, 1.0]), &poly(&[0.0])).unwrap();
        assert_map(&s, &[0.0, 1.0], &[2.0]);
        let fp = fixed_points(&s, FIXED_TOL).unwrap();
        assert!((fp[0].multiplier - 0.5).norm() < 1e-12);
        assert_eq!(fp[0].root_multiplicity, Some(2));
    }

    #[test]
    fn multiplier_cases() {
        let s = build_newton_map(&poly(&[-1.0, 0.0, 1.0]), &poly(&[0.0])).unwrap();
        assert!(multiplier_at(&s, SpherePoint::Finite(c(1.0, 0.0)), FIXED_TOL).unwrap().norm() < 1e-14);
        assert!(matches!(
            multiplier_at(&s, SpherePoint::Finite(c(0.5, 0.0)), FIXED_TOL),
            Err(NewtonError::NotFixed(_))
        ));
        let s = build_newton_map(&poly(&[0.0, 0.0, 0.0, 1.0]), &poly(&[0.0])).unwrap();
        let m = multiplier_at(&s, SpherePoint::Finite(c(0.0, 0.0)), FIXED_TOL).unwrap();
        assert!((m - 2.0 / 3.0).norm() < 1e-14);
        let s = build_newton_map(&poly(&[0.0, 1.0]), &poly(&[0.0, 1.0])).unwrap();
        let m = multiplier_at(&s, SpherePoint::Infinity, FIXED_TOL).unwrap();
        assert!((m - 1.0).norm() < 1e-14);
    }

    #[test]
    fn critical_point_cases() {
        let s = build_newton_map(&poly(&[-1.0, 0.0, 1.0]), &poly(&[0.0])).unwrap();
        let cp = critical_points(&s, FIXED_TOL).unwrap();
        assert_eq!(cp.len(), 2);
        assert_eq!(cp.iter().map(|c| c.multiplicity).sum::<usize>(), 2);

        // z^3 - 1: W = 6 z (z^3 - 1), so the roots of p and z = 0
        let s = build_newton_map(&poly(&[-1.0, 0.0, 0.0, 1.0]), &poly(&[0.0])).unwrap();
        let cp = critical_points(&s, FIXED_TOL).unwrap();
        assert_eq!(cp.iter().map(|c| c.multiplicity).sum::<usize>(), 4);
        assert!(cp.iter().any(|c| c.point.finite().is_some_and(|z| z.norm() < 1e-12)));
        for k in 0..3 {
            let root = C64::from_polar(1.0, std::f64::consts::TAU * k as f64 / 3.0);
            assert!(cp.iter().any(|c| c.point.finite().is_some_and(|z| (z - root).norm() < 1e-10)));
        }

        let s = build_newton_map(&poly(&[0.0, 1.0]), &poly(&[0.0, 1.0])).unwrap();
        let cp = critical_points(&s, FIXED_TOL).unwrap();
        let mut pts: Vec<f64> = cp.iter().map(|c| c.point.finite().unwrap().re).collect();
        pts.sort_by(f64::total_cmp);
        assert!((pts[0] + 2.0).abs() < 1e-12 && pts[1].abs() < 1e-12);
    }

    #[test]
    fn newton_character() {
        let s = build_newton_map(&poly(&[-1.0, 0.0, 0.0, 0.0, 0.0, 1.0]), &poly(&[0.0])).unwrap();
        let r = verify_newton_character(&s.map, 1e-10).unwrap();
        assert!(r.pass);
        assert_eq!(r.entries.len(), 5);
        assert!(r.entries.iter().all(|e| e.m == 1));

        let sq = RatMap::polynomial(poly(&[0.0, 0.0, 1.0]));
        assert!(!verify_newton_character(&sq, 1e-6).unwrap().pass);

        // z^2 (z - 1): m = 2 at 0, m = 1 at 1
        let s = build_newton_map(&poly(&[0.0, 0.0, -1.0, 1.0]), &poly(&[0.0])).unwrap();
        let r = verify_newton_character(&s.map, 1e-6).unwrap();
        assert!(r.pass);
        let at = |x: f64| r.entries.iter().find(|e| (e.point.finite().unwrap() - x).norm() < 1e-6).unwrap().m;
        assert_eq!((at(0.0), at(1.0)), (2, 1));
    }

    #[test]
    fn petal_count_survives_fast_growing_series() {
        // quintic p with linear q: the chart's Taylor coefficients grow fast
        // enough that an absolute cutoff would skip the w^2 term
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for _ in 0..40 {
            let roots: Vec<C64> = (0..5).map(|_| c(rng.gen_range(-1.5..1.5), rng.gen_range(-1.5..1.5))).collect();
            let p = ComplexPoly::from_roots(&roots, c(1.0, 0.0));
            let q = ComplexPoly::new(vec![c(rng.gen_range(-1.0..1.0), 0.3), c(rng.gen_range(0.5..1.5), 0.2)]);
            let s = build_newton_map(&p, &q).unwrap();
            assert_eq!(parabolic_germ(&s.chart).unwrap().petals, 1);
        }
    }
}
