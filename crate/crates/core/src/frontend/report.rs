//! Versioned JSON reports.

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::newton::{critical_points, fixed_points, verify_newton_character, FixedClass, NewtonCharacterReport, NewtonError, NewtonMapSpec, FIXED_TOL};
use crate::sphere::{Cx, SpherePoint};

pub const REPORT_VERSION: &str = "1";

/// A report body with `version` and `kind` in front of its own fields.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Versioned<T> {
    pub version: String,
    pub kind: String,
    #[serde(flatten)]
    pub body: T,
}

impl<T> Versioned<T> {
    pub fn new(kind: &str, body: T) -> Self {
        Versioned { version: REPORT_VERSION.to_string(), kind: kind.to_string(), body }
    }
}

/// Pretty JSON with `version` and `kind` first, then the body's fields in
/// declaration order.
pub fn report_serialize<T: Serialize>(kind: &str, body: &T) -> String {
    serde_json::to_string_pretty(&Versioned::new(kind, body)).expect("reports serialize to JSON")
}

pub fn report_parse<T: DeserializeOwned>(text: &str) -> Result<Versioned<T>, serde_json::Error> {
    serde_json::from_str(text)
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct EmptyReport {}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FixedPointEntry {
    pub location: SpherePoint,
    pub multiplier: Cx,
    pub class: FixedClass,
    pub petals: usize,
    pub m: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CriticalPointEntry {
    pub point: SpherePoint,
    pub multiplicity: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BuildReport {
    pub p: String,
    pub q: String,
    pub num: String,
    pub den: String,
    pub degree: usize,
    pub n: usize,
    pub fixed_points: Vec<FixedPointEntry>,
    pub critical_points: Vec<CriticalPointEntry>,
    pub critical_count: usize,
    pub newton_character: NewtonCharacterReport,
}

pub fn build_report(spec: &NewtonMapSpec) -> Result<BuildReport, NewtonError> {
    let fixed = fixed_points(spec, FIXED_TOL)?
        .into_iter()
        .map(|f| FixedPointEntry {
            location: f.location,
            multiplier: f.multiplier.into(),
            class: f.class,
            petals: f.petals,
            m: f.root_multiplicity,
        })
        .collect();
    let crit: Vec<CriticalPointEntry> = critical_points(spec, FIXED_TOL)?
        .into_iter()
        .map(|c| CriticalPointEntry { point: c.point, multiplicity: c.multiplicity })
        .collect();
    Ok(BuildReport {
        p: spec.p.to_string(),
        q: spec.q.to_string(),
        num: spec.map.num.to_string(),
        den: spec.map.den.to_string(),
        degree: spec.d,
        n: spec.n,
        fixed_points: fixed,
        critical_count: crit.iter().map(|c| c.multiplicity).sum(),
        critical_points: crit,
        newton_character: verify_newton_character(&spec.map, 1e-6)?,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErrorReport {
    pub error: String,
    pub message: String,
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::blaschke::{solve_b_for_multiplier, BlaschkeModel};
    use crate::newton::build_newton_map;
    use crate::orbits::{iterate, OrbitRecord};
    use crate::polyalg::{ComplexPoly, C64};

    fn round_trip<T: Serialize + DeserializeOwned + PartialEq + std::fmt::Debug>(kind: &str, x: T) {
        let text = report_serialize(kind, &x);
        let back: Versioned<T> = report_parse(&text).unwrap();
        assert_eq!(back.version, REPORT_VERSION);
        assert_eq!(back.kind, kind);
        assert_eq!(back.body, x);
    }

    #[test]
    fn empty_report_is_minimal() {
        let text = serde_json::to_string(&Versioned::new("empty", EmptyReport {})).unwrap();
        assert_eq!(text, format!("{{\"version\":\"{REPORT_VERSION}\",\"kind\":\"empty\"}}"));
    }

    #[test]
    fn quadratic_build_report() {
        let spec = build_newton_map(&ComplexPoly::from_real(&[-1.0, 0.0, 1.0]), &ComplexPoly::zero()).unwrap();
        let r = build_report(&spec).unwrap();
        let finite: Vec<&FixedPointEntry> = r.fixed_points.iter().filter(|f| !f.location.is_infinity()).collect();
        assert_eq!(finite.len(), 2);
        for f in finite {
            assert_eq!(f.multiplier, Cx { re: 0.0, im: 0.0 });
            assert_eq!(f.m, Some(1));
        }
        assert_eq!(r.critical_count, 2);
        let text = report_serialize("build", &r);
        assert!(text.find("\"version\"").unwrap() < text.find("\"p\"").unwrap());
        round_trip("build", r);
    }

    #[test]
    fn reports_round_trip() {
        let m: BlaschkeModel = solve_b_for_multiplier(3, 0.5).unwrap();
        round_trip("blaschke", m);
        let spec = build_newton_map(&ComplexPoly::from_real(&[-1.0, 0.0, 0.0, 1.0]), &ComplexPoly::zero()).unwrap();
        let o: OrbitRecord = iterate(&spec, C64::new(2.0, 1.0), 100, 1e-9);
        round_trip("orbit", o);
        round_trip("error", ErrorReport { error: "bad".into(), message: "m".into() });
    }
}
