use super::{EquatorialCoord, HtmError, UnitVector};

/// Slack used when checking polygon vertices against their own edges.
const POLYGON_EPS: f64 = 1e-12;

/// The cap `{p : p·normal >= offset}`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Halfspace {
    normal: UnitVector,
    offset: f64,
}

impl Halfspace {
    pub fn new(normal: UnitVector, offset: f64) -> Result<Self, HtmError> {
        if !(-1.0..=1.0).contains(&offset) {
            return Err(HtmError::Domain(format!("halfspace offset {offset} outside [-1, 1]")));
        }
        let n = normal.norm();
        if (n - 1.0).abs() > 1e-9 {
            return Err(HtmError::Domain(format!("halfspace normal has norm {n}")));
        }
        Ok(Self { normal, offset })
    }

    pub fn normal(&self) -> UnitVector {
        self.normal
    }

    pub fn offset(&self) -> f64 {
        self.offset
    }

    /// Angular radius of the cap in radians.
    pub fn radius_rad(&self) -> f64 {
        self.offset.clamp(-1.0, 1.0).acos()
    }

    pub fn contains(&self, p: &UnitVector) -> bool {
        self.normal.dot(p) >= self.offset
    }
}

/// Intersection of one or more halfspaces.
#[derive(Debug, Clone, PartialEq)]
pub struct ConvexRegion {
    halfspaces: Vec<Halfspace>,
}

impl ConvexRegion {
    pub fn new(halfspaces: Vec<Halfspace>) -> Result<Self, HtmError> {
        if halfspaces.is_empty() {
            return Err(HtmError::Domain("region needs at least one halfspace".into()));
        }
        Ok(Self { halfspaces })
    }

    pub fn full_sky() -> Self {
        Self {
            halfspaces: vec![Halfspace {
                normal: UnitVector::new_unchecked(0.0, 0.0, 1.0),
                offset: -1.0,
            }],
        }
    }

    pub fn halfspaces(&self) -> &[Halfspace] {
        &self.halfspaces
    }

    pub fn contains(&self, p: &UnitVector) -> bool {
        self.halfspaces.iter().all(|h| h.contains(p))
    }

    pub fn is_full_sky(&self) -> bool {
        self.halfspaces.iter().all(|h| h.offset <= -1.0)
    }
}

pub fn circle_to_region(center: EquatorialCoord, radius_deg: f64) -> Result<ConvexRegion, HtmError> {
    if !(0.0..=180.0).contains(&radius_deg) {
        return Err(HtmError::Domain(format!("radius {radius_deg} outside [0, 180]")));
    }
    let offset = match radius_deg {
        r if r == 0.0 => 1.0,
        r if r == 90.0 => 0.0,
        r if r == 180.0 => -1.0,
        r => r.to_radians().cos(),
    };
    Ok(ConvexRegion { halfspaces: vec![Halfspace { normal: center.to_unit(), offset }] })
}

/// Counter-clockwise (seen from outside) convex polygon, one great-circle
/// halfspace per edge.
pub fn polygon_to_region(vertices: &[EquatorialCoord]) -> Result<ConvexRegion, HtmError> {
    if vertices.len() < 3 {
        return Err(HtmError::Domain(format!("polygon needs 3 vertices, got {}", vertices.len())));
    }
    let pts: Vec<UnitVector> = vertices.iter().map(EquatorialCoord::to_unit).collect();
    let mut halfspaces = Vec::with_capacity(pts.len());
    for i in 0..pts.len() {
        let a = pts[i];
        let b = pts[(i + 1) % pts.len()];
        let normal = a
            .cross(&b)
            .renormalize()
            .ok_or_else(|| HtmError::InvalidPolygon(format!("edge {i} is degenerate")))?;
        halfspaces.push(Halfspace { normal, offset: 0.0 });
    }
    for (j, h) in halfspaces.iter().enumerate() {
        for (i, p) in pts.iter().enumerate() {
            if h.normal.dot(p) < -POLYGON_EPS {
                return Err(HtmError::InvalidPolygon(format!(
                    "vertex {i} lies outside edge {j} (non-convex or clockwise)"
                )));
            }
        }
    }
    Ok(ConvexRegion { halfspaces })
}
