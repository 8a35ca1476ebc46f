//! Orbit iteration, basin and petal classification, postcritical analysis
//! and a three-valued postcritical-minimality check.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::exec::Executor;
use crate::newton::{
    critical_points, fixed_points, parabolic_germ, step_rational, FixedClass, NewtonError, NewtonMapSpec,
    CHART_SWITCH, FIXED_TOL,
};
use crate::polyalg::{ComplexPoly, C64};
use crate::sphere::{chordal, Cx, SpherePoint};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum OrbitError {
    #[error("infinity is not a parabolic fixed point")]
    NotParabolic,
    #[error("inconclusive: {0}")]
    Inconclusive(String),
    #[error("ambiguous preimage: two candidates within {0:e}")]
    Ambiguous(f64),
    #[error("precondition failed: {0}")]
    Precondition(String),
    #[error(transparent)]
    Newton(#[from] NewtonError),
}

pub const DEFAULT_EPS_CONV: f64 = 1e-9;
pub const EPS_CYCLE: f64 = 1e-9;
pub const POINT_MAX_STEPS: usize = 10_000;
pub const GRID_MAX_STEPS: usize = 2_000;
/// Petal sector radius in the normalized chart coordinate `a^{1/nu} w`.
pub const R_PETAL: f64 = 0.25;
/// Consecutive in-sector iterates required before declaring petal capture.
const PETAL_CONFIRM: usize = 3;
/// Number of probe points on the segment used by the immediate-basin test.
pub const SEGMENT_PROBES: usize = 8;
/// A step counts as an exact landing if it jumps from at least this far
/// (chordal) to within `eps_conv`.
pub const LANDING_GAP: f64 = 1e-3;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Outcome {
    ConvergedTo { root: usize },
    Petal { direction: usize },
    Cycle { period: usize, preperiod: usize },
    Undecided,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OrbitRecord {
    pub start: SpherePoint,
    pub points: Vec<SpherePoint>,
    pub outcome: Outcome,
    pub steps: usize,
}

impl OrbitRecord {
    pub fn last(&self) -> SpherePoint {
        *self.points.last().expect("orbit has a start point")
    }
}

#[derive(Debug, Clone)]
struct PetalData {
    coefficient: C64,
    nu: usize,
    directions: Vec<C64>,
    radius: f64,
}

/// Attracting directions `v` with `a v^nu` on the negative real axis.
fn directions_for(a: C64, nu: usize) -> Vec<C64> {
    (0..nu)
        .map(|j| C64::from_polar(1.0, (PI - a.arg()) / nu as f64 + 2.0 * PI * j as f64 / nu as f64))
        .collect()
}

pub fn petal_directions(spec: &NewtonMapSpec) -> Result<Vec<C64>, OrbitError> {
    if spec.n == 0 {
        return Err(OrbitError::NotParabolic);
    }
    let g = parabolic_germ(&spec.chart).ok_or(OrbitError::NotParabolic)?;
    Ok(directions_for(g.coefficient, g.petals))
}

/// Precomputed data for classifying orbits of one Newton map.
#[derive(Debug, Clone)]
pub struct Classifier<'a> {
    pub spec: &'a NewtonMapSpec,
    pub roots: Vec<C64>,
    petal: Option<PetalData>,
    pub max_steps: usize,
    pub eps_conv: f64,
}

/// Which attractor an immediate basin belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Target {
    Root { index: usize },
    Petal { direction: usize },
}

impl Target {
    pub fn of(outcome: Outcome) -> Option<Target> {
        match outcome {
            Outcome::ConvergedTo { root } => Some(Target::Root { index: root }),
            Outcome::Petal { direction } => Some(Target::Petal { direction }),
            _ => None,
        }
    }
}

impl<'a> Classifier<'a> {
    pub fn new(spec: &'a NewtonMapSpec, max_steps: usize, eps_conv: f64) -> Result<Self, OrbitError> {
        let roots = if spec.p.degree() >= 1 {
            spec.p.roots().map_err(NewtonError::from)?.into_iter().map(|r| r.value).collect()
        } else {
            Vec::new()
        };
        let petal = if spec.n >= 1 {
            parabolic_germ(&spec.chart).map(|g| PetalData {
                coefficient: g.coefficient,
                nu: g.petals,
                directions: directions_for(g.coefficient, g.petals),
                radius: R_PETAL * g.coefficient.norm().powf(-1.0 / g.petals as f64),
            })
        } else {
            None
        };
        Ok(Classifier { spec, roots, petal, max_steps: max_steps.max(1), eps_conv })
    }

    pub fn step(&self, z: SpherePoint) -> SpherePoint {
        step_rational(&self.spec.map, &self.spec.chart, z)
    }

    pub fn petal_count(&self) -> usize {
        self.petal.as_ref().map_or(0, |p| p.nu)
    }

    pub fn petal_directions(&self) -> Vec<C64> {
        self.petal.as_ref().map_or_else(Vec::new, |p| p.directions.clone())
    }

    /// A point deep inside the attracting sector of petal `j`.
    pub fn petal_anchor(&self, j: usize) -> Option<C64> {
        let p = self.petal.as_ref()?;
        Some((p.directions.get(j)? * (0.5 * p.radius)).inv())
    }

    /// Petal sector index containing `z`, if any.
    pub fn petal_sector(&self, z: SpherePoint) -> Option<usize> {
        let p = self.petal.as_ref()?;
        let w = match z {
            SpherePoint::Infinity => return None,
            SpherePoint::Finite(z) => z.inv(),
        };
        if !(w.norm() < p.radius) || w.norm() == 0.0 {
            return None;
        }
        if (p.coefficient * w.powu(p.nu as u32)).re >= 0.0 {
            return None;
        }
        p.directions
            .iter()
            .enumerate()
            .map(|(j, v)| (j, (w / v).arg().abs()))
            .min_by(|a, b| a.1.total_cmp(&b.1))
            .map(|(j, _)| j)
    }

    fn root_near(&self, z: SpherePoint) -> Option<usize> {
        self.roots.iter().position(|&r| chordal(z, SpherePoint::Finite(r)) < self.eps_conv)
    }

    pub fn iterate(&self, z0: impl Into<SpherePoint>) -> OrbitRecord {
        self.run(z0.into(), true)
    }

    /// Outcome and step count without keeping the orbit.
    pub fn classify(&self, z0: impl Into<SpherePoint>) -> (Outcome, usize) {
        let r = self.run(z0.into(), false);
        (r.outcome, r.steps)
    }

    fn run(&self, z0: SpherePoint, keep: bool) -> OrbitRecord {
        let mut points = vec![z0];
        let first = self.step(z0);
        if chordal(first, z0) < 1e-13 {
            return OrbitRecord { start: z0, points, outcome: Outcome::Cycle { period: 1, preperiod: 0 }, steps: 0 };
        }
        let mut in_petal = 0usize;
        let mut last_petal = usize::MAX;
        let mut next = Some(first);
        let mut outcome = Outcome::Undecided;
        let mut k = 0usize;
        loop {
            let z = points[k];
            if let Some(i) = self.root_near(z) {
                outcome = Outcome::ConvergedTo { root: i };
                break;
            }
            match self.petal_sector(z) {
                Some(j) if j == last_petal && (k == 0 || z.chart().norm() < points[k - 1].chart().norm()) => {
                    in_petal += 1
                }
                Some(j) => {
                    last_petal = j;
                    in_petal = 1;
                }
                None => in_petal = 0,
            }
            if in_petal >= PETAL_CONFIRM {
                outcome = Outcome::Petal { direction: last_petal };
                break;
            }
            if k >= 2 && k.is_multiple_of(2) && chordal(points[k], points[k / 2]) < EPS_CYCLE {
                outcome = detect_cycle(&points, k / 2);
                break;
            }
            if k >= self.max_steps {
                break;
            }
            let n = next.take().unwrap_or_else(|| self.step(z));
            points.push(n);
            k += 1;
        }
        if !keep {
            let last = points[k];
            points = vec![z0];
            if k > 0 {
                points.push(last);
            }
        }
        OrbitRecord { start: z0, points, outcome, steps: k }
    }
}

/// Period and preperiod once `points[i]` is known to be periodic.
fn detect_cycle(points: &[SpherePoint], i: usize) -> Outcome {
    let period = (1..=i).find(|&p| chordal(points[i + p], points[i]) < EPS_CYCLE).unwrap_or(i);
    let preperiod = (0..=i).find(|&s| chordal(points[s], points[s + period]) < EPS_CYCLE).unwrap_or(i);
    Outcome::Cycle { period, preperiod }
}

pub fn iterate(spec: &NewtonMapSpec, z0: impl Into<SpherePoint>, max_steps: usize, eps_conv: f64) -> OrbitRecord {
    match Classifier::new(spec, max_steps, eps_conv) {
        Ok(c) => c.iterate(z0),
        Err(_) => {
            let z0 = z0.into();
            OrbitRecord { start: z0, points: vec![z0], outcome: Outcome::Undecided, steps: 0 }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Viewport {
    pub re_min: f64,
    pub re_max: f64,
    pub im_min: f64,
    pub im_max: f64,
}

impl Viewport {
    pub fn square(center: C64, half: f64) -> Self {
        Viewport { re_min: center.re - half, re_max: center.re + half, im_min: center.im - half, im_max: center.im + half }
    }

    /// Center of pixel `(row, col)`; row 0 is the top edge.
    pub fn pixel_center(&self, width: usize, height: usize, row: usize, col: usize) -> C64 {
        let x = self.re_min + (col as f64 + 0.5) * (self.re_max - self.re_min) / width as f64;
        let y = self.im_max - (row as f64 + 0.5) * (self.im_max - self.im_min) / height as f64;
        C64::new(x, y)
    }

    /// Pixel containing `z`, if inside the viewport.
    pub fn pixel_of(&self, width: usize, height: usize, z: C64) -> Option<(usize, usize)> {
        let fx = (z.re - self.re_min) / (self.re_max - self.re_min);
        let fy = (self.im_max - z.im) / (self.im_max - self.im_min);
        if !(0.0..1.0).contains(&fx) || !(0.0..1.0).contains(&fy) {
            return None;
        }
        Some(((fy * height as f64) as usize, (fx * width as f64) as usize))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Label {
    Root(u16),
    Petal(u16),
    Cycle,
    Undecided,
}

impl From<Outcome> for Label {
    fn from(o: Outcome) -> Self {
        match o {
            Outcome::ConvergedTo { root } => Label::Root(root as u16),
            Outcome::Petal { direction } => Label::Petal(direction as u16),
            Outcome::Cycle { .. } => Label::Cycle,
            Outcome::Undecided => Label::Undecided,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BasinRaster {
    pub width: usize,
    pub height: usize,
    pub viewport: Viewport,
    pub labels: Vec<Label>,
    pub iterations: Vec<u32>,
    pub roots: Vec<C64>,
    pub petals: usize,
}

impl BasinRaster {
    pub fn label(&self, row: usize, col: usize) -> Label {
        self.labels[row * self.width + col]
    }

    pub fn label_at(&self, z: C64) -> Option<Label> {
        self.viewport.pixel_of(self.width, self.height, z).map(|(r, c)| self.label(r, c))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridParams {
    pub viewport: Viewport,
    pub width: usize,
    pub height: usize,
    pub max_steps: usize,
    pub eps_conv: f64,
}

pub fn classify_grid(spec: &NewtonMapSpec, grid: &GridParams) -> Result<BasinRaster, OrbitError> {
    classify_grid_with(spec, grid, Executor::from_env())
}

pub fn classify_grid_with(spec: &NewtonMapSpec, grid: &GridParams, exec: Executor) -> Result<BasinRaster, OrbitError> {
    if grid.width == 0 || grid.height == 0 {
        return Err(OrbitError::Precondition("resolution must be at least 1x1".into()));
    }
    let cls = Classifier::new(spec, grid.max_steps, grid.eps_conv)?;
    let rows = exec.map_rows(grid.height, |row| {
        (0..grid.width)
            .map(|col| {
                let (o, n) = cls.classify(grid.viewport.pixel_center(grid.width, grid.height, row, col));
                (Label::from(o), n as u32)
            })
            .collect::<Vec<_>>()
    });
    let (labels, iterations) = rows.into_iter().flatten().unzip();
    Ok(BasinRaster {
        width: grid.width,
        height: grid.height,
        viewport: grid.viewport,
        labels,
        iterations,
        roots: cls.roots.clone(),
        petals: cls.petal_count(),
    })
}

impl Classifier<'_> {
    /// Heuristic immediate-basin test: `z` converges to `target`, and so do
    /// probe points on the straight segment from `z` to an anchor of the
    /// target (the root, or a point deep inside the petal).
    pub fn in_immediate_basin(&self, z: SpherePoint, target: Target) -> bool {
        let (anchor, local) = match target {
            Target::Root { index } => {
                let Some(&r) = self.roots.get(index) else { return false };
                (r, chordal(z, SpherePoint::Finite(r)) < 1e-6)
            }
            Target::Petal { direction } => {
                let Some(a) = self.petal_anchor(direction) else { return false };
                (a, self.petal_sector(z) == Some(direction))
            }
        };
        if local {
            return true;
        }
        let Some(z) = z.finite() else { return false };
        if Target::of(self.classify(z).0) != Some(target) {
            return false;
        }
        (0..SEGMENT_PROBES).all(|j| {
            let t = (j as f64 + 0.5) / SEGMENT_PROBES as f64;
            Target::of(self.classify(z + (anchor - z) * t).0) == Some(target)
        })
    }

    /// Smallest `k` with `points[k]` in the immediate basin of the orbit's
    /// attractor.
    pub fn entry_time(&self, orbit: &OrbitRecord) -> Result<usize, OrbitError> {
        let target = Target::of(orbit.outcome)
            .ok_or_else(|| OrbitError::Inconclusive("orbit did not converge to a root or petal".into()))?;
        orbit
            .points
            .iter()
            .position(|&z| self.in_immediate_basin(z, target))
            .ok_or_else(|| OrbitError::Inconclusive("no iterate passed the immediate-basin test".into()))
    }
}

pub fn entry_time(spec: &NewtonMapSpec, orbit: &OrbitRecord, max_steps: usize, eps_conv: f64) -> Result<usize, OrbitError> {
    Classifier::new(spec, max_steps, eps_conv)?.entry_time(orbit)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Landing {
    pub target: SpherePoint,
    pub iterate: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CriticalOrbit {
    pub critical_point: SpherePoint,
    pub multiplicity: usize,
    pub orbit: OrbitRecord,
    pub lands_on_critical: Option<Landing>,
}

/// First `k >= 1` where the orbit jumps onto `target`.
pub fn first_landing(points: &[SpherePoint], target: SpherePoint, eps_conv: f64) -> Option<usize> {
    (1..points.len())
        .find(|&k| chordal(points[k], target) < eps_conv && chordal(points[k - 1], target) > LANDING_GAP)
}

pub fn postcritical_analysis(spec: &NewtonMapSpec, max_steps: usize, eps_conv: f64) -> Result<Vec<CriticalOrbit>, OrbitError> {
    let cls = Classifier::new(spec, max_steps, eps_conv)?;
    let crit = critical_points(spec, FIXED_TOL)?;
    Ok(crit
        .iter()
        .map(|c| {
            let orbit = cls.iterate(c.point);
            let lands_on_critical = crit
                .iter()
                .filter_map(|c2| first_landing(&orbit.points, c2.point, eps_conv).map(|k| Landing { target: c2.point, iterate: k }))
                .min_by_key(|l| l.iterate);
            CriticalOrbit { critical_point: c.point, multiplicity: c.multiplicity, orbit, lands_on_critical }
        })
        .collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Verdict {
    Pass,
    Fail,
    Inconclusive,
}

/// Minimal critical orbit relation for a captured critical point with entry
/// time `m` whose orbit first hits an immediate-basin critical point at
/// iterate `landing`.
pub fn relation_verdict(entry: usize, landing: Option<usize>) -> Verdict {
    match landing {
        _ if entry == 0 => Verdict::Pass,
        Some(l) if l == entry => Verdict::Pass,
        Some(l) if l > entry => Verdict::Fail,
        _ => Verdict::Inconclusive,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RelationEntry {
    pub critical_point: SpherePoint,
    pub entry_time: Option<usize>,
    pub landing: Option<Landing>,
    pub verdict: Verdict,
}

pub fn check_minimal_relations(spec: &NewtonMapSpec, orbits: &[CriticalOrbit], max_steps: usize, eps_conv: f64) -> Result<Vec<RelationEntry>, OrbitError> {
    let cls = Classifier::new(spec, max_steps, eps_conv)?;
    Ok(relations_with(&cls, orbits).0)
}

/// Relation verdicts for petal-captured critical points, plus which critical
/// points lie in each immediate petal.
fn relations_with(cls: &Classifier, orbits: &[CriticalOrbit]) -> (Vec<RelationEntry>, Vec<Vec<SpherePoint>>) {
    let mut immediate: Vec<Vec<SpherePoint>> = vec![Vec::new(); cls.petal_count()];
    let mut captured = Vec::new();
    for co in orbits {
        if let Outcome::Petal { direction } = co.orbit.outcome {
            match cls.entry_time(&co.orbit) {
                Ok(0) => immediate[direction].push(co.critical_point),
                e => captured.push((co, direction, e.ok())),
            }
        }
    }
    let entries = captured
        .into_iter()
        .map(|(co, direction, entry)| {
            let landing = immediate[direction]
                .iter()
                .filter_map(|&c2| first_landing(&co.orbit.points, c2, cls.eps_conv).map(|k| Landing { target: c2, iterate: k }))
                .min_by_key(|l| l.iterate);
            let verdict = match entry {
                Some(m) => relation_verdict(m, landing.map(|l| l.iterate)),
                None => Verdict::Inconclusive,
            };
            RelationEntry { critical_point: co.critical_point, entry_time: entry, landing, verdict }
        })
        .collect();
    (entries, immediate)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OrbitSummary {
    pub critical_point: SpherePoint,
    pub multiplicity: usize,
    pub outcome: Outcome,
    pub steps: usize,
    pub lands_on_critical: Option<Landing>,
    pub finite: Verdict,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PcmReport {
    pub petal_critical_counts: Vec<usize>,
    pub critical_orbits: Vec<OrbitSummary>,
    pub relations: Vec<RelationEntry>,
    pub overall: Verdict,
    pub reasons: Vec<String>,
    pub notes: Vec<String>,
}

/// Multiplier of the cycle reached by an orbit with the given outcome.
fn cycle_multiplier(spec: &NewtonMapSpec, orbit: &OrbitRecord, period: usize, preperiod: usize) -> Option<C64> {
    let cyc = orbit.points.get(preperiod..preperiod + period)?;
    if period == 1 && cyc[0].finite().is_none_or(|z| z.norm() > CHART_SWITCH) {
        return spec.chart.eval_derivative(cyc[0].chart());
    }
    cyc.iter().try_fold(C64::new(1.0, 0.0), |acc, z| Some(acc * spec.map.eval_derivative(z.finite()?)?))
}

pub fn pcm_report(spec: &NewtonMapSpec) -> Result<PcmReport, OrbitError> {
    pcm_report_with(spec, POINT_MAX_STEPS, DEFAULT_EPS_CONV)
}

pub fn pcm_report_with(spec: &NewtonMapSpec, max_steps: usize, eps_conv: f64) -> Result<PcmReport, OrbitError> {
    if spec.n == 0 {
        return Err(OrbitError::Precondition("deg q must be at least 1".into()));
    }
    let cls = Classifier::new(spec, max_steps, eps_conv)?;
    let orbits = postcritical_analysis(spec, max_steps, eps_conv)?;
    let mut fail = Vec::new();
    let mut open = Vec::new();

    for f in fixed_points(spec, FIXED_TOL)? {
        if matches!(f.class, FixedClass::Attracting | FixedClass::Indifferent) {
            fail.push(format!("fixed point {:?} has multiplier {:?}, not superattracting or parabolic", f.location, f.multiplier));
        }
    }

    let mut summaries = Vec::new();
    for co in &orbits {
        let finite = match co.orbit.outcome {
            Outcome::Cycle { period, preperiod } => match cycle_multiplier(spec, &co.orbit, period, preperiod) {
                Some(m) if m.norm() > 1e-6 && m.norm() < 1.0 - 1e-6 => {
                    fail.push(format!("critical orbit of {:?} is attracted to a non-superattracting cycle", co.critical_point));
                    Verdict::Pass
                }
                Some(_) => Verdict::Pass,
                None => Verdict::Inconclusive,
            },
            Outcome::ConvergedTo { root } => {
                let r = SpherePoint::Finite(cls.roots[root]);
                if first_landing(&co.orbit.points, r, eps_conv).is_some() {
                    Verdict::Pass
                } else {
                    fail.push(format!("critical orbit of {:?} converges to a root without landing on it", co.critical_point));
                    Verdict::Fail
                }
            }
            Outcome::Petal { .. } => Verdict::Pass,
            Outcome::Undecided => {
                open.push(format!(
                    "critical orbit of {:?} not eventually periodic within {max_steps} steps",
                    co.critical_point
                ));
                Verdict::Inconclusive
            }
        };
        summaries.push(OrbitSummary {
            critical_point: co.critical_point,
            multiplicity: co.multiplicity,
            outcome: co.orbit.outcome,
            steps: co.orbit.steps,
            lands_on_critical: co.lands_on_critical,
            finite,
        });
    }

    let (relations, immediate) = relations_with(&cls, &orbits);
    let counts: Vec<usize> = immediate.iter().map(Vec::len).collect();
    for (j, &c) in counts.iter().enumerate() {
        if c != 1 {
            fail.push(format!("immediate petal {j} contains {c} critical points"));
        }
    }
    for r in &relations {
        match r.verdict {
            Verdict::Fail => fail.push(format!("critical point {:?} lands after its entry time", r.critical_point)),
            Verdict::Inconclusive => open.push(format!("relation for {:?} undetermined", r.critical_point)),
            Verdict::Pass => {}
        }
    }
    let overall = if !fail.is_empty() {
        Verdict::Fail
    } else if !open.is_empty() {
        Verdict::Inconclusive
    } else {
        Verdict::Pass
    };
    fail.extend(open);
    Ok(PcmReport {
        petal_critical_counts: counts,
        critical_orbits: summaries,
        relations,
        overall,
        reasons: fail,
        notes: vec!["immediate-basin membership uses a segment-probe heuristic".into()],
    })
}

/// Solution of `N(z) = w` closest to `near`.
pub fn pull_back(spec: &NewtonMapSpec, w: C64, near: C64, tol: f64) -> Result<C64, OrbitError> {
    let eq = (&spec.map.num - &spec.map.den.scale(w)).trimmed(1e-14);
    let mut sols: Vec<(f64, C64)> = eq
        .roots()
        .map_err(NewtonError::from)?
        .into_iter()
        .map(|r| ((r.value - near).norm(), r.value))
        .collect();
    sols.sort_by(|a, b| a.0.total_cmp(&b.0));
    match sols.as_slice() {
        [] => Err(OrbitError::Inconclusive("no finite preimage".into())),
        [(d0, z), (d1, _), ..] if (d1 - d0).abs() <= tol * (1.0 + d0) => {
            let _ = z;
            Err(OrbitError::Ambiguous(tol))
        }
        [(_, z), ..] => Ok(*z),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CenterCandidate {
    pub center: SpherePoint,
    pub preperiod: usize,
    pub target: Target,
}

/// Center of the Fatou component containing `sample`: the root or the petal
/// critical point for immediate basins, pulled back along the orbit for
/// preperiodic components.
pub fn find_center(spec: &NewtonMapSpec, sample: C64, max_steps: usize, eps_conv: f64) -> Result<CenterCandidate, OrbitError> {
    let cls = Classifier::new(spec, max_steps, eps_conv)?;
    let orbit = cls.iterate(sample);
    let target = Target::of(orbit.outcome).ok_or_else(|| OrbitError::Inconclusive("sample is not in a basin".into()))?;
    let m = cls.entry_time(&orbit)?;
    let base = match target {
        Target::Root { index } => cls.roots[index],
        Target::Petal { direction } => {
            let inside: Vec<C64> = critical_points(spec, FIXED_TOL)?
                .into_iter()
                .filter_map(|c| c.point.finite())
                .filter(|&c| cls.in_immediate_basin(SpherePoint::Finite(c), target))
                .collect();
            match inside.as_slice() {
                [c] => *c,
                _ => {
                    return Err(OrbitError::Inconclusive(format!(
                        "petal {direction} has {} critical points",
                        inside.len()
                    )))
                }
            }
        }
    };
    let mut w = base;
    for k in (0..m).rev() {
        let near = orbit.points[k].finite().ok_or_else(|| OrbitError::Inconclusive("orbit passes through infinity".into()))?;
        w = pull_back(spec, w, near, 1e-9)?;
    }
    Ok(CenterCandidate { center: SpherePoint::Finite(w), preperiod: m, target })
}

/// Complex points in report form.
pub fn cx_list(zs: &[C64]) -> Vec<Cx> {
    zs.iter().map(|&z| z.into()).collect()
}

/// Polynomial with the given real coefficients, lowest degree first.
pub fn real_poly(cs: &[f64]) -> ComplexPoly {
    ComplexPoly::from_real(cs)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::newton::build_newton_map;
    use proptest::prelude::*;

    fn c(re: f64, im: f64) -> C64 {
        C64::new(re, im)
    }

    fn map(p: &[f64], q: &[f64]) -> NewtonMapSpec {
        build_newton_map(&real_poly(p), &real_poly(q)).unwrap()
    }

    #[test]
    fn real_newton_from_two() {
        let s = map(&[-1.0, 0.0, 1.0], &[0.0]);
        let o = iterate(&s, c(2.0, 0.0), POINT_MAX_STEPS, DEFAULT_EPS_CONV);
        let cls = Classifier::new(&s, 10, 1e-9).unwrap();
        let plus = cls.roots.iter().position(|r| (r - 1.0).norm() < 1e-12).unwrap();
        assert_eq!(o.outcome, Outcome::ConvergedTo { root: plus });
        for w in o.points.windows(2) {
            let (a, b) = (w[0].finite().unwrap(), w[1].finite().unwrap());
            assert!((s.map.eval(a).unwrap() - b).norm() < 1e-14);
            assert!(b.re < a.re);
        }
        assert!(chordal(o.last(), SpherePoint::Finite(c(1.0, 0.0))) < 1e-9);
    }

    #[test]
    fn escapes_along_petal() {
        let s = map(&[0.0, 1.0], &[0.0, 1.0]);
        let o = iterate(&s, c(-3.0, 0.0), POINT_MAX_STEPS, DEFAULT_EPS_CONV);
        assert_eq!(o.outcome, Outcome::Petal { direction: 0 });
        assert!(o.last().finite().unwrap().re < -4.0);
    }

    #[test]
    fn fixed_start_is_a_one_cycle() {
        let s = map(&[-1.0, 0.0, 1.0], &[0.0]);
        let o = iterate(&s, c(1.0, 0.0), 10, DEFAULT_EPS_CONV);
        assert_eq!(o.outcome, Outcome::Cycle { period: 1, preperiod: 0 });
        let o = iterate(&s, SpherePoint::Infinity, 10, DEFAULT_EPS_CONV);
        assert_eq!(o.outcome, Outcome::Cycle { period: 1, preperiod: 0 });
    }

    #[test]
    fn two_cycle_detected() {
        // Newton map of z^3 - 2z + 2 has the superattracting cycle 0 <-> 1
        let s = map(&[2.0, -2.0, 0.0, 1.0], &[0.0]);
        let o = iterate(&s, c(0.0, 0.0), 100, DEFAULT_EPS_CONV);
        assert_eq!(o.outcome, Outcome::Cycle { period: 2, preperiod: 0 });
        let o = iterate(&s, c(0.0, 0.0) + 1e-4, 1000, DEFAULT_EPS_CONV);
        assert!(matches!(o.outcome, Outcome::Cycle { period: 2, .. }));
    }

    #[test]
    fn petal_direction_cases() {
        let s = map(&[0.0, 1.0], &[0.0, 1.0]);
        let d = petal_directions(&s).unwrap();
        assert_eq!(d.len(), 1);
        assert!((d[0] + 1.0).norm() < 1e-12);

        let s = map(&[-1.0, 0.0, 1.0], &[0.0, 0.0, 0.0, 1.0]);
        let d = petal_directions(&s).unwrap();
        assert_eq!(d.len(), 3);
        // chart germ w + a w^4 with a = 1/(3 lc(q)) = 1/3, so v^3 = -1
        for v in &d {
            assert!((v.powu(3) + 1.0).norm() < 1e-9);
        }
        assert!(((d[1] / d[0]).arg() - 2.0 * PI / 3.0).abs() < 1e-9);

        assert_eq!(petal_directions(&map(&[-1.0, 0.0, 1.0], &[0.0])), Err(OrbitError::NotParabolic));
    }

    #[test]
    fn grid_cases() {
        let s = map(&[-1.0, 0.0, 0.0, 1.0], &[0.0]);
        let g = GridParams { viewport: Viewport::square(c(0.0, 0.0), 2.0), width: 64, height: 64, max_steps: GRID_MAX_STEPS, eps_conv: 1e-9 };
        let r = classify_grid(&s, &g).unwrap();
        let cls = Classifier::new(&s, GRID_MAX_STEPS, 1e-9).unwrap();
        for (i, root) in cls.roots.iter().enumerate() {
            assert_eq!(r.label_at(*root), Some(Label::Root(i as u16)));
        }
        let mut distinct: Vec<Label> = r.labels.clone();
        distinct.sort_by_key(|l| format!("{l:?}"));
        distinct.dedup();
        assert!(distinct.iter().filter(|l| matches!(l, Label::Root(_))).count() == 3);
        for k in 0..10 {
            let (row, col) = ((k * 37) % 64, (k * 11 + 5) % 64);
            let z = g.viewport.pixel_center(64, 64, row, col);
            assert_eq!(r.label(row, col), Label::from(cls.classify(z).0));
        }

        let one = GridParams { width: 1, height: 1, ..g };
        let r1 = classify_grid(&s, &one).unwrap();
        assert_eq!(r1.labels[0], Label::from(iterate(&s, c(0.0, 0.0), GRID_MAX_STEPS, 1e-9).outcome));
    }

    #[test]
    fn petal_fills_negative_far_field() {
        let s = map(&[0.0, 1.0], &[0.0, 1.0]);
        let g = GridParams { viewport: Viewport::square(c(0.0, 0.0), 4.0), width: 32, height: 32, max_steps: GRID_MAX_STEPS, eps_conv: 1e-9 };
        let r = classify_grid(&s, &g).unwrap();
        for x in [-3.9, -3.5, -3.0] {
            for y in [-0.5, 0.0, 0.5] {
                assert_eq!(r.label_at(c(x, y)), Some(Label::Petal(0)));
            }
        }
    }

    #[test]
    fn grid_is_worker_independent() {
        let s = map(&[-1.0, 0.0, 0.0, 1.0], &[0.5, 1.0]);
        let g = GridParams { viewport: Viewport::square(c(0.0, 0.0), 3.0), width: 40, height: 30, max_steps: 500, eps_conv: 1e-9 };
        let a = classify_grid_with(&s, &g, Executor::Sequential).unwrap();
        let b = classify_grid_with(&s, &g, Executor::with_threads(3)).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn postcritical_cases() {
        let s = map(&[-1.0, 0.0, 1.0], &[0.0]);
        for co in postcritical_analysis(&s, POINT_MAX_STEPS, DEFAULT_EPS_CONV).unwrap() {
            assert_eq!(co.orbit.outcome, Outcome::Cycle { period: 1, preperiod: 0 });
        }
        let s = map(&[0.0, 1.0], &[0.0, 1.0]);
        let orbits = postcritical_analysis(&s, POINT_MAX_STEPS, DEFAULT_EPS_CONV).unwrap();
        let free = orbits.iter().find(|o| (o.critical_point.finite().unwrap() + 2.0).norm() < 1e-9).unwrap();
        assert!((free.orbit.points[1].finite().unwrap() + 4.0).norm() < 1e-12);
        assert_eq!(free.orbit.outcome, Outcome::Petal { direction: 0 });

        // z^3 - 1: the free critical point 0 is a pole, so it maps to infinity
        let s = map(&[-1.0, 0.0, 0.0, 1.0], &[0.0]);
        let orbits = postcritical_analysis(&s, POINT_MAX_STEPS, DEFAULT_EPS_CONV).unwrap();
        let zero = orbits.iter().find(|o| o.critical_point.finite().is_some_and(|z| z.norm() < 1e-12)).unwrap();
        assert!(zero.orbit.points[1].is_infinity());
        assert!(matches!(zero.orbit.outcome, Outcome::Cycle { period: 1, preperiod: 1 }));
    }

    #[test]
    fn entry_time_cases() {
        let s = map(&[0.0, 1.0], &[0.0, 1.0]);
        let cls = Classifier::new(&s, POINT_MAX_STEPS, DEFAULT_EPS_CONV).unwrap();
        assert_eq!(cls.entry_time(&cls.iterate(c(-2.0, 0.0))).unwrap(), 0);
        let undecided = OrbitRecord { start: c(0.0, 1.0).into(), points: vec![c(0.0, 1.0).into()], outcome: Outcome::Undecided, steps: 0 };
        assert!(matches!(cls.entry_time(&undecided), Err(OrbitError::Inconclusive(_))));
    }

    #[test]
    fn captured_point_enters_in_one_step() {
        // z^3 - 1: a preimage of 2 + i on the far side of the pole at 0 lies
        // in a preperiodic component of the basin of 1
        let s = map(&[-1.0, 0.0, 0.0, 1.0], &[0.0]);
        let cls = Classifier::new(&s, POINT_MAX_STEPS, DEFAULT_EPS_CONV).unwrap();
        let target = pull_back(&s, c(2.0, 1.0), c(-0.4, -0.2), 1e-9).unwrap();
        assert!(target.re < 0.0);
        let o = cls.iterate(target);
        let root = cls.roots.iter().position(|r| (r - 1.0).norm() < 1e-9).unwrap();
        assert_eq!(o.outcome, Outcome::ConvergedTo { root });
        assert!(!cls.in_immediate_basin(o.start, Target::Root { index: root }));
        assert_eq!(cls.entry_time(&o).unwrap(), 1);
    }

    #[test]
    fn relation_verdicts() {
        assert_eq!(relation_verdict(0, None), Verdict::Pass);
        assert_eq!(relation_verdict(3, Some(3)), Verdict::Pass);
        assert_eq!(relation_verdict(3, Some(4)), Verdict::Fail);
        assert_eq!(relation_verdict(3, None), Verdict::Inconclusive);
    }

    #[test]
    fn pcm_cases() {
        let s = map(&[0.0, 1.0], &[0.0, 1.0]);
        let r = pcm_report(&s).unwrap();
        assert_eq!(r.overall, Verdict::Pass, "{:?}", r.reasons);
        assert_eq!(r.petal_critical_counts, vec![1]);
        assert!(r.relations.is_empty());
        assert!(matches!(pcm_report(&map(&[-1.0, 0.0, 0.0, 1.0], &[0.0])), Err(OrbitError::Precondition(_))));
    }

    #[test]
    fn centers() {
        let s = map(&[-1.0, 0.0, 1.0], &[0.0]);
        let c1 = find_center(&s, c(1.3, 0.2), POINT_MAX_STEPS, DEFAULT_EPS_CONV).unwrap();
        assert!((c1.center.finite().unwrap() - 1.0).norm() < 1e-12);
        assert_eq!(c1.preperiod, 0);

        let s = map(&[0.0, 1.0], &[0.0, 1.0]);
        let c2 = find_center(&s, c(-3.0, 0.0), POINT_MAX_STEPS, DEFAULT_EPS_CONV).unwrap();
        assert!((c2.center.finite().unwrap() + 2.0).norm() < 1e-9);
        // z^2 / (1 + z) = -2 has the roots -1 +- i
        let pre = pull_back(&s, c(-2.0, 0.0), c(-1.0, 0.9), 1e-9).unwrap();
        assert!((pre - c(-1.0, 1.0)).norm() < 1e-10);
        assert!(matches!(pull_back(&s, c(-2.0, 0.0), c(-1.0, 0.0), 1e-9), Err(OrbitError::Ambiguous(_))));
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(24))]
        #[test]
        fn converged_orbits_stay_close(re in -2.0f64..2.0, im in -2.0f64..2.0) {
            let s = map(&[-1.0, 0.0, 0.0, 1.0], &[0.0]);
            let cls = Classifier::new(&s, GRID_MAX_STEPS, DEFAULT_EPS_CONV).unwrap();
            let o = cls.iterate(c(re, im));
            if let Outcome::ConvergedTo { root } = o.outcome {
                let r = SpherePoint::Finite(cls.roots[root]);
                let mut z = o.last();
                prop_assert!(chordal(z, r) < DEFAULT_EPS_CONV);
                for _ in 0..10 {
                    z = cls.step(z);
                    prop_assert!(chordal(z, r) < 2.0 * DEFAULT_EPS_CONV);
                }
            }
        }

        #[test]
        fn orbit_points_follow_the_map(re in -3.0f64..3.0, im in -3.0f64..3.0) {
            let s = map(&[-1.0, 0.0, 1.0], &[0.0, 1.0]);
            let cls = Classifier::new(&s, 300, DEFAULT_EPS_CONV).unwrap();
            let o = cls.iterate(c(re, im));
            for w in o.points.windows(2) {
                prop_assert!(chordal(cls.step(w[0]), w[1]) < 1e-12);
            }
        }
    }
}
