//! Fixed internal rays of immediate root basins, accesses to infinity and
//! marked channel diagrams.

use std::f64::consts::TAU;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::newton::{critical_points, NewtonError, NewtonMapSpec, FIXED_TOL};
use crate::orbits::{Classifier, OrbitError, Outcome, Target, DEFAULT_EPS_CONV, POINT_MAX_STEPS};
use crate::polyalg::{first_significant, RatMap, C64};
use crate::sphere::{Cx, SpherePoint};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ChannelError {
    #[error("fixed point {0} is not superattracting")]
    NonSuperattracting(C64),
    #[error("no inverse branch stays in basin {basin} (ray {j}) near {at}")]
    BranchLoss { basin: usize, j: usize, at: C64 },
    #[error("basin {0} is marked twice")]
    DoubleMark(usize),
    #[error("basin {basin} has no ray {j}")]
    NoSuchRay { basin: usize, j: usize },
    #[error(transparent)]
    Orbit(#[from] OrbitError),
    #[error(transparent)]
    Newton(#[from] NewtonError),
}

pub const ESCAPE_RADIUS: f64 = 1e3;
/// Largest allowed polyline step relative to `|z|`.
pub const MAX_RELATIVE_STEP: f64 = 0.05;
/// Ray invariance tolerance, relative to the distance from the root.
pub const EPS_RAY: f64 = 1e-3;
const SERIES_ORDER: usize = 40;
const MAX_RAY_POINTS: usize = 40_000;

/// Taylor coefficients of `map` at `xi` up to `order`.
pub fn taylor_at(map: &RatMap, xi: C64, order: usize) -> Vec<C64> {
    RatMap::new(map.num.shifted(xi), map.den.shifted(xi)).taylor_at_zero(order)
}

/// Local degree of `map` at a finite point `z0` and the leading coefficient
/// of `map(z0 + u) - map(z0)`.
pub fn local_degree_at(map: &RatMap, z0: C64) -> (usize, C64) {
    let order = 2 * map.degree() + 2;
    let t = taylor_at(map, z0, order);
    let k = first_significant(&t, 1, 1e-8).unwrap_or(1);
    (k, t[k])
}

/// Böttcher chart `phi` at a superattracting fixed point, with
/// `phi(N(z)) = phi(z)^k` and `phi(xi + u) = c u (1 + O(u))`, `c^{k-1} = a`
/// where `N(xi + u) = xi + a u^k + ...`.
#[derive(Debug, Clone, PartialEq)]
pub struct LocalBoettcher {
    pub xi: C64,
    pub k: usize,
    pub a: C64,
    pub c: C64,
    /// `phi(xi + u) = c u (1 + sum beta_i u^i)`.
    pub beta: Vec<C64>,
    /// Disk `|u| < radius` where the series is used directly.
    pub radius: f64,
}

fn series_mul(a: &[C64], b: &[C64], n: usize) -> Vec<C64> {
    let mut out = vec![C64::new(0.0, 0.0); n + 1];
    for (i, &x) in a.iter().enumerate().take(n + 1) {
        if x.norm() == 0.0 {
            continue;
        }
        for (j, &y) in b.iter().enumerate().take(n + 1 - i) {
            out[i + j] += x * y;
        }
    }
    out
}

fn series_pow(a: &[C64], k: usize, n: usize) -> Vec<C64> {
    let mut out = vec![C64::new(0.0, 0.0); n + 1];
    out[0] = C64::new(1.0, 0.0);
    for _ in 0..k {
        out = series_mul(&out, a, n);
    }
    out
}

pub fn local_boettcher(map: &RatMap, xi: C64) -> Result<LocalBoettcher, ChannelError> {
    let n = SERIES_ORDER;
    let (k, a) = local_degree_at(map, xi);
    if k < 2 {
        return Err(ChannelError::NonSuperattracting(xi));
    }
    let t = taylor_at(map, xi, n + k);
    // N(xi + u) - xi = a u^k S(u)
    let s: Vec<C64> = (0..=n).map(|i| t[i + k] / a).collect();
    let c = if k == 2 { a } else { C64::from_polar(a.norm().powf(1.0 / (k - 1) as f64), a.arg() / (k - 1) as f64) };

    // solve B(u)^k = S(u) B(a u^k S(u)) order by order
    let mut beta = vec![C64::new(0.0, 0.0); n + 1];
    beta[0] = C64::new(1.0, 0.0);
    // a u^k S(u) as a series
    let mut inner = vec![C64::new(0.0, 0.0); n + 1];
    for i in 0..=n.saturating_sub(k) {
        inner[i + k] = a * s[i];
    }
    let inner_pows: Vec<Vec<C64>> = (0..=n).scan(
        {
            let mut one = vec![C64::new(0.0, 0.0); n + 1];
            one[0] = C64::new(1.0, 0.0);
            one
        },
        |acc, _| {
            let cur = acc.clone();
            *acc = series_mul(acc, &inner, n);
            Some(cur)
        },
    )
    .collect();
    for i in 1..=n {
        // right side needs beta_j for j k <= i only
        let mut comp = vec![C64::new(0.0, 0.0); n + 1];
        for (j, p) in inner_pows.iter().enumerate().take(i / k + 1) {
            for m in 0..=n {
                comp[m] += beta[j] * p[m];
            }
        }
        let rhs = series_mul(&s, &comp, n)[i];
        let lhs = series_pow(&beta, k, n)[i];
        beta[i] = (rhs - lhs) / k as f64;
    }
    let growth = (n / 2..=n)
        .map(|i| beta[i].norm().powf(1.0 / i as f64))
        .fold(0.0, f64::max)
        .max(1e-3);
    let radius = 0.3 / growth;
    Ok(LocalBoettcher { xi, k, a, c, beta: beta[1..].to_vec(), radius })
}

impl LocalBoettcher {
    fn series(&self, u: C64) -> (C64, C64) {
        // B(u) and B'(u)
        let mut b = C64::new(0.0, 0.0);
        let mut db = C64::new(0.0, 0.0);
        for (i, &x) in self.beta.iter().enumerate().rev() {
            b = b * u + x;
            db = db * u + x * (i + 1) as f64;
        }
        let b = b * u + 1.0;
        (b, db)
    }

    /// `phi` near the root, on the series disk.
    pub fn eval_local(&self, z: C64) -> Option<C64> {
        let u = z - self.xi;
        (u.norm() < self.radius).then(|| self.c * u * self.series(u).0)
    }

    /// `phi(z)`, pushing `z` into the series disk and taking the `k^n`-th
    /// root on the branch continued from the product formula.
    pub fn eval(&self, map: &RatMap, z: C64) -> Option<C64> {
        if let Some(v) = self.eval_local(z) {
            return Some(v);
        }
        let kf = self.k as f64;
        let mut zn = z;
        // running estimate c (z - xi) times prod r_j^{1/k^{j+1}}
        let mut est = self.c * (z - self.xi);
        let mut scale = 1.0;
        for _ in 0..64 {
            let next = map.eval(zn)?;
            let prev = self.c * (zn - self.xi);
            let cur = self.c * (next - self.xi);
            scale /= kf;
            est *= (cur / prev.powu(self.k as u32)).powf(scale);
            zn = next;
            if let Some(v) = self.eval_local(zn) {
                // v is phi(z)^{k^n}; pick the root nearest the estimate
                let n = (1.0 / scale).round();
                let base = v.powf(scale);
                let best = (0..n as usize)
                    .map(|j| base * C64::from_polar(1.0, TAU * j as f64 / n))
                    .min_by(|x, y| (x - est).norm().total_cmp(&(y - est).norm()))?;
                return Some(best);
            }
        }
        None
    }

    /// Point near the root with `phi = target`, by Newton on the series.
    pub fn invert_local(&self, target: C64) -> Option<C64> {
        let mut u = target / self.c;
        for _ in 0..60 {
            let (b, db) = self.series(u);
            let f = self.c * u * b - target;
            let df = self.c * (b + u * db);
            let step = f / df;
            u -= step;
            if step.norm() <= 1e-16 * (1.0 + u.norm()) {
                break;
            }
        }
        (u.norm() < self.radius && u.is_finite()).then_some(self.xi + u)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Ray {
    pub basin: usize,
    pub j: usize,
    pub polyline: Vec<Cx>,
    pub marked: bool,
    /// Chart argument of the seed direction.
    pub chart_angle: f64,
    pub escaped: bool,
}

impl Ray {
    pub fn points(&self) -> Vec<C64> {
        self.polyline.iter().map(|&p| p.into()).collect()
    }
}

/// Distance from `z` to the polyline as a set.
pub fn polyline_distance(poly: &[C64], z: C64) -> f64 {
    if poly.len() == 1 {
        return (z - poly[0]).norm();
    }
    poly.windows(2)
        .map(|w| {
            let (a, b) = (w[0], w[1]);
            let ab = b - a;
            let len2 = ab.norm_sqr();
            let t = if len2 == 0.0 { 0.0 } else { ((z - a) * ab.conj()).re / len2 };
            (z - (a + ab * t.clamp(0.0, 1.0))).norm()
        })
        .fold(f64::INFINITY, f64::min)
}

fn extend_ray(
    cls: &Classifier,
    basin: usize,
    j: usize,
    chart: &LocalBoettcher,
    beta: f64,
    per_segment: usize,
) -> Result<(Vec<C64>, bool, usize), ChannelError> {
    let spec = cls.spec;
    let kf = chart.k as f64;
    let t0 = 0.5 * chart.c.norm() * chart.radius;
    let l0 = t0.ln();
    let m = per_segment as i64;
    // index i has chart radius exp(l0 k^{(m - i)/m}); i in [-2m, m] from the series
    let chart_point = |i: i64| C64::from_polar((l0 * kf.powf((m - i) as f64 / m as f64)).exp(), beta);
    let mut inner = vec![chart.xi];
    for i in -2 * m..=m {
        let z = chart.invert_local(chart_point(i)).ok_or(ChannelError::BranchLoss { basin, j, at: chart.xi })?;
        inner.push(z);
    }
    let offset = inner.len() as i64 - 1 - m; // index of i = 0 is offset
    let mut pts = inner;
    let target = Outcome::ConvergedTo { root: basin };
    let mut escaped = false;
    while pts.len() < MAX_RAY_POINTS {
        let n = pts.len();
        let last = pts[n - 1];
        if last.norm() > ESCAPE_RADIUS {
            escaped = true;
            break;
        }
        let src = pts[n - m as usize];
        let guess = last + (last - pts[n - 2]);
        let eq = &spec.map.num - &spec.map.den.scale(src);
        let mut cands: Vec<C64> = eq.roots().map_err(NewtonError::from)?.into_iter().map(|r| r.value).collect();
        cands.sort_by(|a, b| (a - guess).norm().total_cmp(&(b - guess).norm()));
        let pick = cands.into_iter().take(3).find(|&z| cls.classify(z).0 == target);
        match pick {
            Some(z) => pts.push(z),
            None => return Err(ChannelError::BranchLoss { basin, j, at: src }),
        }
    }
    Ok((pts, escaped, offset as usize))
}

fn steps_ok(pts: &[C64], from: usize) -> bool {
    pts[from..].windows(2).all(|w| (w[1] - w[0]).norm() <= MAX_RELATIVE_STEP * w[1].norm().max(1.0))
}

/// Fixed internal ray `j` (chart angle `2 pi j/(k-1)`) of the basin of root
/// `basin`, traced outward by inverse-branch continuation.
pub fn trace_ray(spec: &NewtonMapSpec, basin: usize, j: usize) -> Result<Ray, ChannelError> {
    let cls = Classifier::new(spec, POINT_MAX_STEPS, DEFAULT_EPS_CONV)?;
    trace_ray_with(&cls, basin, j)
}

pub fn trace_ray_with(cls: &Classifier, basin: usize, j: usize) -> Result<Ray, ChannelError> {
    let xi = *cls.roots.get(basin).ok_or(ChannelError::NoSuchRay { basin, j })?;
    let chart = local_boettcher(&cls.spec.map, xi)?;
    if j == 0 || j > chart.k - 1 {
        return Err(ChannelError::NoSuchRay { basin, j });
    }
    let beta = TAU * j as f64 / (chart.k - 1) as f64;
    let mut per_segment = 32;
    loop {
        let (pts, escaped, start) = extend_ray(cls, basin, j, &chart, beta, per_segment)?;
        if steps_ok(&pts, start) || per_segment >= 512 {
            return Ok(Ray {
                basin,
                j,
                polyline: pts.into_iter().map(Cx::from).collect(),
                marked: false,
                chart_angle: beta.rem_euclid(TAU),
                escaped,
            });
        }
        per_segment *= 2;
    }
}

/// Largest relative distance from `N(v)` to the polyline over the vertices.
pub fn ray_invariance_defect(spec: &NewtonMapSpec, ray: &Ray) -> f64 {
    let pts = ray.points();
    let xi = pts[0];
    pts[1..]
        .iter()
        .filter_map(|&v| spec.map.eval(v))
        .map(|w| polyline_distance(&pts, w) / (w - xi).norm().max(1e-9))
        .fold(0.0, f64::max)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AccessCount {
    pub target: Target,
    pub count: usize,
    pub critical_points: Vec<(SpherePoint, usize)>,
    /// Critical point whose forward orbit generates the dynamical access
    /// (petal basins only).
    pub dynamical: Option<SpherePoint>,
}

/// Number of critical points, with multiplicity, in the immediate basin of
/// `target`.
pub fn count_accesses(spec: &NewtonMapSpec, target: Target) -> Result<AccessCount, ChannelError> {
    let cls = Classifier::new(spec, POINT_MAX_STEPS, DEFAULT_EPS_CONV)?;
    count_accesses_with(&cls, target)
}

pub fn count_accesses_with(cls: &Classifier, target: Target) -> Result<AccessCount, ChannelError> {
    let crit: Vec<(SpherePoint, usize)> = critical_points(cls.spec, FIXED_TOL)?
        .into_iter()
        .filter(|c| cls.in_immediate_basin(c.point, target))
        .map(|c| (c.point, c.multiplicity))
        .collect();
    let count = crit.iter().map(|c| c.1).sum();
    let dynamical = match target {
        Target::Petal { .. } if crit.len() == 1 => Some(crit[0].0),
        _ => None,
    };
    Ok(AccessCount { target, count, critical_points: crit, dynamical })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChannelDiagram {
    pub rays: Vec<Ray>,
    pub n_marked: usize,
    pub access_counts: Vec<usize>,
}

/// All fixed internal rays of all root basins.
pub fn channel_diagram(spec: &NewtonMapSpec) -> Result<ChannelDiagram, ChannelError> {
    let cls = Classifier::new(spec, POINT_MAX_STEPS, DEFAULT_EPS_CONV)?;
    let mut rays = Vec::new();
    let mut access_counts = Vec::new();
    for (i, &xi) in cls.roots.iter().enumerate() {
        let (k, _) = local_degree_at(&spec.map, xi);
        for j in 1..k {
            rays.push(trace_ray_with(&cls, i, j)?);
        }
        access_counts.push(count_accesses_with(&cls, Target::Root { index: i })?.count);
    }
    Ok(ChannelDiagram { rays, n_marked: 0, access_counts })
}

/// Marks one ray per selected basin.
pub fn mark(diagram: &ChannelDiagram, selections: &[(usize, usize)]) -> Result<ChannelDiagram, ChannelError> {
    let mut out = diagram.clone();
    for r in out.rays.iter_mut() {
        r.marked = false;
    }
    let mut seen = Vec::new();
    for &(basin, j) in selections {
        if seen.contains(&basin) {
            return Err(ChannelError::DoubleMark(basin));
        }
        seen.push(basin);
        let ray = out
            .rays
            .iter_mut()
            .find(|r| r.basin == basin && r.j == j)
            .ok_or(ChannelError::NoSuchRay { basin, j })?;
        ray.marked = true;
    }
    out.n_marked = selections.len();
    Ok(out)
}

impl ChannelDiagram {
    /// One row per polyline vertex: `basin,j,index,re,im,marked`.
    pub fn to_csv(&self) -> String {
        let mut s = String::from("basin,j,index,re,im,marked\n");
        for r in &self.rays {
            for (i, p) in r.polyline.iter().enumerate() {
                s.push_str(&format!("{},{},{},{:e},{:e},{}\n", r.basin, r.j, i, p.re, p.im, r.marked));
            }
        }
        s
    }

    /// Smallest distance between vertices of different rays, ignoring points
    /// within `exclude` of their own root.
    pub fn min_separation(&self, exclude: f64) -> f64 {
        let mut best = f64::INFINITY;
        for (a, ra) in self.rays.iter().enumerate() {
            let pa = ra.points();
            for rb in &self.rays[a + 1..] {
                let pb = rb.points();
                for &x in pa.iter().filter(|&&x| (x - pa[0]).norm() > exclude) {
                    for &y in pb.iter().filter(|&&y| (y - pb[0]).norm() > exclude) {
                        best = best.min((x - y).norm());
                    }
                }
            }
        }
        best
    }
}
