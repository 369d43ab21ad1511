use super::region::{ConvexRegion, Halfspace};
use super::trixel::{
    check_depth, face_triangle, merge_ranges, subdivide, triangle_contains, trixel_range, IdRange,
    Triangle, TrixelId,
};
use super::{arc_angle_rad, HtmError, UnitVector};

/// Angular slack (radians) that keeps both classifications conservative.
const CLASSIFY_EPS: f64 = 1e-10;
/// Dot-product slack of the exact triangle/cap test.
const DOT_EPS: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Class {
    Full,
    Partial,
    Disjoint,
}

/// Trixels selected by a cover: `full` lie inside the region, `partial`
/// straddle its boundary at the leaf depth.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Coverage {
    pub full: Vec<TrixelId>,
    pub partial: Vec<TrixelId>,
}

impl Coverage {
    /// Merged ID ranges at `leaf_depth`.
    pub fn ranges(&self, leaf_depth: u8) -> Vec<IdRange> {
        let all = self
            .full
            .iter()
            .chain(&self.partial)
            .map(|t| trixel_range(*t, leaf_depth).expect("cover trixels are at most leaf depth"))
            .collect();
        merge_ranges(all)
    }
}

struct Cone {
    center: UnitVector,
    radius: f64,
}

fn bounding_cone(t: &Triangle) -> Cone {
    let center = (t[0] + t[1] + t[2]).renormalize().expect("trixel centroid is non-zero");
    let radius = t.iter().map(|v| arc_angle_rad(center, *v)).fold(0.0, f64::max);
    Cone { center, radius }
}

/// Exact test of whether the spherical triangle touches the cap.
fn cap_touches_triangle(h: &Halfspace, t: &Triangle) -> bool {
    let n = h.normal();
    let offset = h.offset();
    if t.iter().any(|v| n.dot(v) >= offset - DOT_EPS) {
        return true;
    }
    if offset <= 0.0 {
        // all vertices sit in the complement, which is a cap of radius <= 90 deg and so convex
        return false;
    }
    if triangle_contains(t, &n) {
        return true;
    }
    for i in 0..3 {
        let (a, b) = (t[i], t[(i + 1) % 3]);
        let Some(m) = a.cross(&b).renormalize() else { continue };
        let s = n.dot(&m);
        let Some(q) = (n - m * s).renormalize() else { continue };
        if a.cross(&q).dot(&m) >= 0.0 && q.cross(&b).dot(&m) >= 0.0 && n.dot(&q) >= offset - DOT_EPS {
            return true;
        }
    }
    false
}

fn classify(region: &ConvexRegion, t: &Triangle) -> Class {
    let cone = bounding_cone(t);
    let mut full = true;
    for h in region.halfspaces() {
        let d = arc_angle_rad(h.normal(), cone.center);
        let r = h.radius_rad();
        if d - cone.radius > r + CLASSIFY_EPS {
            return Class::Disjoint;
        }
        if d + cone.radius > r {
            full = false;
            if !cap_touches_triangle(h, t) {
                return Class::Disjoint;
            }
        }
    }
    if full {
        Class::Full
    } else {
        Class::Partial
    }
}

/// Classifies trixels down to `depth`, keeping every trixel that may touch the region.
pub fn cover_trixels(region: &ConvexRegion, depth: u8) -> Result<Coverage, HtmError> {
    check_depth(depth)?;
    let mut out = Coverage::default();
    if region.is_full_sky() {
        out.full = (0..8).map(TrixelId::face).collect();
        return Ok(out);
    }
    // explicit stack, children pushed in reverse so output is in id order
    let mut stack: Vec<(TrixelId, Triangle)> =
        (0..8u8).rev().map(|f| (TrixelId::face(f), face_triangle(f as usize))).collect();
    while let Some((id, tri)) = stack.pop() {
        match classify(region, &tri) {
            Class::Disjoint => {}
            Class::Full => out.full.push(id),
            Class::Partial if id.depth() == depth => out.partial.push(id),
            Class::Partial => {
                let kids = subdivide(&tri);
                for k in (0..4u8).rev() {
                    let child = id.child(k).expect("depth checked above");
                    stack.push((child, kids[k as usize]));
                }
            }
        }
    }
    Ok(out)
}

/// Sorted, merged leaf-depth ranges containing every trixel that touches `region`.
pub fn cover(region: &ConvexRegion, depth: u8) -> Result<Vec<IdRange>, HtmError> {
    Ok(cover_trixels(region, depth)?.ranges(depth))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::htm::{circle_to_region, htm_lookup, EquatorialCoord};

    #[test]
    fn full_sphere_single_range() {
        for d in [0u8, 3, 7, 20] {
            let r = cover(&ConvexRegion::full_sky(), d).unwrap();
            assert_eq!(r, vec![IdRange::new(8 << (2 * d), 16 << (2 * d))]);
        }
    }

    #[test]
    fn point_circle_hits_lookup() {
        for (ra, dec) in [(10.0, 20.0), (0.0, 0.0), (45.0, 0.0), (359.9, -89.0), (123.4, 56.7)] {
            let c = EquatorialCoord::new(ra, dec).unwrap();
            let region = circle_to_region(c, 0.0).unwrap();
            for d in [0u8, 4, 9, 14] {
                let id = htm_lookup(c.to_unit(), d).unwrap().id();
                let ranges = cover(&region, d).unwrap();
                assert!(ranges.iter().any(|r| r.contains(id)), "({ra},{dec}) depth {d}");
            }
        }
    }

    #[test]
    fn ranges_are_sorted_disjoint_nonadjacent() {
        let c = EquatorialCoord::new(200.0, -30.0).unwrap();
        let ranges = cover(&circle_to_region(c, 5.0).unwrap(), 8).unwrap();
        assert!(!ranges.is_empty());
        for w in ranges.windows(2) {
            assert!(w[0].hi < w[1].lo);
        }
    }

    #[test]
    fn hemisphere_covers_half() {
        let c = EquatorialCoord::new(0.0, 90.0).unwrap();
        let cov = cover_trixels(&circle_to_region(c, 90.0).unwrap(), 0).unwrap();
        // northern faces touch, southern faces only at the equator
        assert!(cov.partial.len() + cov.full.len() >= 4);
    }
}
