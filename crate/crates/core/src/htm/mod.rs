//! Spherical geometry and Hierarchical Triangular Mesh indexing.
//!
//! Points on the sky are carried either as equatorial coordinates in degrees
//! or as unit vectors; all internal math runs on unit vectors. Trixel IDs are
//! 64-bit integers whose leading bits name one of the eight octahedron faces
//! and whose remaining bit pairs record the descent path, so every descendant
//! of a trixel lies in a contiguous ID range.

mod cover;
mod region;
mod trixel;

pub use cover::{cover, cover_trixels, Coverage};
pub use region::{circle_to_region, polygon_to_region, ConvexRegion, Halfspace};
pub use trixel::{htm_lookup, trixel_range, trixel_vertices, IdRange, TrixelId};

use std::fmt;
use std::ops::{Add, Mul, Neg, Sub};

/// Deepest supported mesh level.
pub const MAX_DEPTH: u8 = 20;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum HtmError {
    #[error("malformed trixel id {0}")]
    MalformedId(u64),
    #[error("depth {depth} out of range (max {max})")]
    Depth { depth: u32, max: u32 },
    #[error("domain error: {0}")]
    Domain(String),
    #[error("invalid polygon: {0}")]
    InvalidPolygon(String),
}

/// Right ascension and declination in degrees (J2000).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EquatorialCoord {
    ra: f64,
    dec: f64,
}

impl EquatorialCoord {
    /// Builds a coordinate, wrapping `ra` into `[0, 360)`.
    pub fn new(ra: f64, dec: f64) -> Result<Self, HtmError> {
        if !ra.is_finite() || !dec.is_finite() {
            return Err(HtmError::Domain(format!("non-finite coordinate ({ra}, {dec})")));
        }
        if !(-90.0..=90.0).contains(&dec) {
            return Err(HtmError::Domain(format!("dec {dec} outside [-90, 90]")));
        }
        Ok(Self { ra: normalize_ra(ra), dec })
    }

    pub fn ra(&self) -> f64 {
        self.ra
    }

    pub fn dec(&self) -> f64 {
        self.dec
    }

    pub fn to_unit(&self) -> UnitVector {
        radec_to_unit(*self)
    }
}

pub(crate) fn normalize_ra(ra: f64) -> f64 {
    let r = ra.rem_euclid(360.0);
    // rem_euclid can round up to exactly 360 for tiny negative inputs
    if r >= 360.0 {
        0.0
    } else {
        r
    }
}

/// Cartesian direction on the unit sphere.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct UnitVector {
    pub x: f64,
    pub y: f64,
    pub z: f64,
}

impl UnitVector {
    pub const fn new_unchecked(x: f64, y: f64, z: f64) -> Self {
        Self { x, y, z }
    }

    /// Normalizes an arbitrary non-zero vector.
    pub fn normalized(x: f64, y: f64, z: f64) -> Option<Self> {
        let n = (x * x + y * y + z * z).sqrt();
        if n == 0.0 || !n.is_finite() {
            return None;
        }
        Some(Self { x: x / n, y: y / n, z: z / n })
    }

    pub fn dot(&self, o: &UnitVector) -> f64 {
        self.x * o.x + self.y * o.y + self.z * o.z
    }

    /// Raw cross product; the result is generally not unit length.
    pub fn cross(&self, o: &UnitVector) -> UnitVector {
        UnitVector {
            x: self.y * o.z - self.z * o.y,
            y: self.z * o.x - self.x * o.z,
            z: self.x * o.y - self.y * o.x,
        }
    }

    pub fn norm(&self) -> f64 {
        self.dot(self).sqrt()
    }

    pub fn renormalize(&self) -> Option<UnitVector> {
        Self::normalized(self.x, self.y, self.z)
    }
}

impl Add for UnitVector {
    type Output = UnitVector;
    fn add(self, o: UnitVector) -> UnitVector {
        UnitVector { x: self.x + o.x, y: self.y + o.y, z: self.z + o.z }
    }
}

impl Sub for UnitVector {
    type Output = UnitVector;
    fn sub(self, o: UnitVector) -> UnitVector {
        UnitVector { x: self.x - o.x, y: self.y - o.y, z: self.z - o.z }
    }
}

impl Neg for UnitVector {
    type Output = UnitVector;
    fn neg(self) -> UnitVector {
        UnitVector { x: -self.x, y: -self.y, z: -self.z }
    }
}

impl Mul<f64> for UnitVector {
    type Output = UnitVector;
    fn mul(self, k: f64) -> UnitVector {
        UnitVector { x: self.x * k, y: self.y * k, z: self.z * k }
    }
}

impl fmt::Display for UnitVector {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({}, {}, {})", self.x, self.y, self.z)
    }
}

pub fn radec_to_unit(c: EquatorialCoord) -> UnitVector {
    let (ra, dec) = (c.ra.to_radians(), c.dec.to_radians());
    let (sd, cd) = dec.sin_cos();
    let (sr, cr) = ra.sin_cos();
    UnitVector { x: cd * cr, y: cd * sr, z: sd }
}

/// Inverse of [`radec_to_unit`]. At the poles `ra` is reported as 0.
pub fn unit_to_radec(v: UnitVector) -> EquatorialCoord {
    let rho = v.x.hypot(v.y);
    let dec = v.z.atan2(rho).to_degrees();
    let ra = if rho == 0.0 { 0.0 } else { normalize_ra(v.y.atan2(v.x).to_degrees()) };
    EquatorialCoord { ra, dec: dec.clamp(-90.0, 90.0) }
}

/// Great-circle angle in degrees, via the chord length.
pub fn arc_angle(a: UnitVector, b: UnitVector) -> f64 {
    arc_angle_rad(a, b).to_degrees()
}

pub(crate) fn arc_angle_rad(a: UnitVector, b: UnitVector) -> f64 {
    let chord = (a - b).norm();
    2.0 * (chord / 2.0).min(1.0).asin()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn v(ra: f64, dec: f64) -> UnitVector {
        EquatorialCoord::new(ra, dec).unwrap().to_unit()
    }

    #[test]
    fn axis_cases() {
        let p = v(0.0, 0.0);
        assert_eq!((p.x, p.y, p.z), (1.0, 0.0, 0.0));
        let p = v(0.0, 90.0);
        assert!(p.x.abs() < 1e-16 && p.y == 0.0 && p.z == 1.0);
        let p = v(180.0, 0.0);
        assert!((p.x + 1.0).abs() < 1e-16 && p.y.abs() < 1e-15 && p.z == 0.0);
    }

    #[test]
    fn inverse_conventions() {
        let c = unit_to_radec(UnitVector::new_unchecked(0.0, 0.0, 1.0));
        assert_eq!((c.ra(), c.dec()), (0.0, 90.0));
        let c = unit_to_radec(UnitVector::new_unchecked(1.0, 0.0, 0.0));
        assert_eq!((c.ra(), c.dec()), (0.0, 0.0));
    }

    #[test]
    fn ra_wraps() {
        let c = EquatorialCoord::new(-10.0, 5.0).unwrap();
        assert_eq!(c.ra(), 350.0);
        assert_eq!(EquatorialCoord::new(720.0, 0.0).unwrap().ra(), 0.0);
        assert!(EquatorialCoord::new(0.0, 91.0).is_err());
        assert!(EquatorialCoord::new(f64::NAN, 0.0).is_err());
    }

    #[test]
    fn arc_examples() {
        let a = v(12.0, 34.0);
        assert_eq!(arc_angle(a, a), 0.0);
        let n = UnitVector::new_unchecked(0.0, 0.0, 1.0);
        assert!((arc_angle(n, -n) - 180.0).abs() < 1e-12);
        assert!((arc_angle(v(1.0, 1.0), v(1.0, 2.0)) - 1.0).abs() < 1e-12);
    }
}
