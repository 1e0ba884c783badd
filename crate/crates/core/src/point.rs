//! Points of the Riemann sphere and the chordal metric.

use std::fmt;

use num_complex::Complex64;
use serde::de::{self, Deserializer, SeqAccess, Visitor};
use serde::ser::{SerializeSeq, Serializer};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A point of the extended plane: either a finite complex number or `∞`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum PlanePoint {
    Finite(Complex64),
    Infinity,
}

impl PlanePoint {
    /// Finite point; non-finite input collapses to `Infinity`, NaN is rejected.
    pub fn new(re: f64, im: f64) -> Result<Self> {
        if re.is_nan() || im.is_nan() {
            return Err(Error::domain("NaN coordinate"));
        }
        Ok(Self::from_complex(Complex64::new(re, im)))
    }

    pub fn from_complex(z: Complex64) -> Self {
        if z.re.is_finite() && z.im.is_finite() {
            PlanePoint::Finite(z)
        } else {
            PlanePoint::Infinity
        }
    }

    pub fn is_infinite(&self) -> bool {
        matches!(self, PlanePoint::Infinity)
    }

    pub fn finite(&self) -> Option<Complex64> {
        match *self {
            PlanePoint::Finite(z) => Some(z),
            PlanePoint::Infinity => None,
        }
    }

    /// Chordal distance on the sphere of diameter 1 scaled to range `[0, 2]`.
    pub fn chordal(&self, other: &PlanePoint) -> f64 {
        match (*self, *other) {
            (PlanePoint::Infinity, PlanePoint::Infinity) => 0.0,
            (PlanePoint::Finite(z), PlanePoint::Infinity)
            | (PlanePoint::Infinity, PlanePoint::Finite(z)) => 2.0 / 1f64.hypot(z.norm()),
            (PlanePoint::Finite(z), PlanePoint::Finite(w)) => chordal(z, w),
        }
    }
}

impl From<Complex64> for PlanePoint {
    fn from(z: Complex64) -> Self {
        PlanePoint::from_complex(z)
    }
}

impl fmt::Display for PlanePoint {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            PlanePoint::Finite(z) => write!(f, "{}{:+}i", z.re, z.im),
            PlanePoint::Infinity => write!(f, "inf"),
        }
    }
}

/// Chordal distance between two finite points.
pub fn chordal(z: Complex64, w: Complex64) -> f64 {
    let d = (z - w).norm();
    if !d.is_finite() {
        // Both huge and far apart: fall back to the reciprocal chart.
        let (iz, iw) = (z.inv(), w.inv());
        return 2.0 * (iz - iw).norm() / (1f64.hypot(iz.norm()) * 1f64.hypot(iw.norm()));
    }
    2.0 * (d / 1f64.hypot(z.norm())) / 1f64.hypot(w.norm())
}

impl Serialize for PlanePoint {
    fn serialize<S: Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        match self {
            PlanePoint::Finite(z) => {
                let mut seq = serializer.serialize_seq(Some(2))?;
                seq.serialize_element(&z.re)?;
                seq.serialize_element(&z.im)?;
                seq.end()
            }
            PlanePoint::Infinity => serializer.serialize_str("inf"),
        }
    }
}

impl<'de> Deserialize<'de> for PlanePoint {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> std::result::Result<Self, D::Error> {
        struct PointVisitor;

        impl<'de> Visitor<'de> for PointVisitor {
            type Value = PlanePoint;

            fn expecting(&self, f: &mut fmt::Formatter) -> fmt::Result {
                f.write_str("a pair [re, im] or the string \"inf\"")
            }

            fn visit_str<E: de::Error>(self, v: &str) -> std::result::Result<PlanePoint, E> {
                if v == "inf" {
                    Ok(PlanePoint::Infinity)
                } else {
                    Err(E::custom(format!("unknown point marker {v:?}")))
                }
            }

            fn visit_seq<A: SeqAccess<'de>>(self, mut seq: A) -> std::result::Result<PlanePoint, A::Error> {
                let re: f64 = seq.next_element()?.ok_or_else(|| de::Error::invalid_length(0, &self))?;
                let im: f64 = seq.next_element()?.ok_or_else(|| de::Error::invalid_length(1, &self))?;
                PlanePoint::new(re, im).map_err(de::Error::custom)
            }
        }

        deserializer.deserialize_any(PointVisitor)
    }
}

/// Serde helpers for bare complex numbers written as `[re, im]`.
pub(crate) mod pair {
    use num_complex::Complex64;
    use serde::{Deserialize, Deserializer, Serialize, Serializer};

    pub fn serialize<S: Serializer>(z: &Complex64, s: S) -> Result<S::Ok, S::Error> {
        [z.re, z.im].serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Complex64, D::Error> {
        let [re, im] = <[f64; 2]>::deserialize(d)?;
        Ok(Complex64::new(re, im))
    }

    pub mod vec {
        use num_complex::Complex64;
        use serde::{Deserialize, Deserializer, Serialize, Serializer};

        pub fn serialize<S: Serializer>(v: &[Complex64], s: S) -> Result<S::Ok, S::Error> {
            v.iter().map(|z| [z.re, z.im]).collect::<Vec<_>>().serialize(s)
        }

        pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Vec<Complex64>, D::Error> {
            let raw = Vec::<[f64; 2]>::deserialize(d)?;
            Ok(raw.into_iter().map(|[re, im]| Complex64::new(re, im)).collect())
        }
    }
}
