//! Points of the Riemann sphere and the chordal metric.

use serde::{Deserialize, Serialize};

use crate::polyalg::C64;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum SpherePoint {
    Finite(C64),
    Infinity,
}

impl SpherePoint {
    pub fn finite(self) -> Option<C64> {
        match self {
            SpherePoint::Finite(z) => Some(z),
            SpherePoint::Infinity => None,
        }
    }

    pub fn is_infinity(self) -> bool {
        matches!(self, SpherePoint::Infinity)
    }

    /// Coordinate in the chart `w = 1/z` around infinity.
    pub fn chart(self) -> C64 {
        match self {
            SpherePoint::Finite(z) => z.inv(),
            SpherePoint::Infinity => C64::new(0.0, 0.0),
        }
    }

    pub fn from_chart(w: C64) -> Self {
        if w.norm() == 0.0 {
            SpherePoint::Infinity
        } else {
            SpherePoint::Finite(w.inv())
        }
    }
}

impl From<C64> for SpherePoint {
    fn from(z: C64) -> Self {
        if z.is_finite() {
            SpherePoint::Finite(z)
        } else {
            SpherePoint::Infinity
        }
    }
}

/// Chordal distance, bounded by 2.
pub fn chordal(a: SpherePoint, b: SpherePoint) -> f64 {
    match (a, b) {
        (SpherePoint::Infinity, SpherePoint::Infinity) => 0.0,
        (SpherePoint::Finite(z), SpherePoint::Infinity) | (SpherePoint::Infinity, SpherePoint::Finite(z)) => {
            2.0 / (1.0 + z.norm_sqr()).sqrt()
        }
        (SpherePoint::Finite(z), SpherePoint::Finite(w)) => {
            if z.norm() > 1.0 && w.norm() > 1.0 {
                // same formula in the chart at infinity, better conditioned
                let (u, v) = (z.inv(), w.inv());
                2.0 * (u - v).norm() / ((1.0 + u.norm_sqr()) * (1.0 + v.norm_sqr())).sqrt()
            } else {
                2.0 * (z - w).norm() / ((1.0 + z.norm_sqr()) * (1.0 + w.norm_sqr())).sqrt()
            }
        }
    }
}

/// Complex number in report form, `{"re":..,"im":..}`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Cx {
    pub re: f64,
    pub im: f64,
}

impl From<C64> for Cx {
    fn from(z: C64) -> Self {
        Cx { re: z.re, im: z.im }
    }
}

impl From<Cx> for C64 {
    fn from(c: Cx) -> Self {
        C64::new(c.re, c.im)
    }
}

/// Serialized form: `{"re":..,"im":..}` or the string `"inf"`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum SphereRepr {
    Finite { re: f64, im: f64 },
    Inf(InfTag),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum InfTag {
    #[serde(rename = "inf")]
    Inf,
}

impl Serialize for SpherePoint {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        match *self {
            SpherePoint::Finite(z) => SphereRepr::Finite { re: z.re, im: z.im },
            SpherePoint::Infinity => SphereRepr::Inf(InfTag::Inf),
        }
        .serialize(s)
    }
}

impl<'de> Deserialize<'de> for SpherePoint {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        Ok(match SphereRepr::deserialize(d)? {
            SphereRepr::Finite { re, im } => SpherePoint::Finite(C64::new(re, im)),
            SphereRepr::Inf(_) => SpherePoint::Infinity,
        })
    }
}
