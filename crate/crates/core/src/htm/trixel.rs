use std::fmt;

use super::{HtmError, UnitVector, MAX_DEPTH};

const CORNERS: [UnitVector; 6] = [
    UnitVector::new_unchecked(0.0, 0.0, 1.0),
    UnitVector::new_unchecked(1.0, 0.0, 0.0),
    UnitVector::new_unchecked(0.0, 1.0, 0.0),
    UnitVector::new_unchecked(-1.0, 0.0, 0.0),
    UnitVector::new_unchecked(0.0, -1.0, 0.0),
    UnitVector::new_unchecked(0.0, 0.0, -1.0),
];

/// Corner indices of faces S0..S3, N0..N3 (ids 8..15).
const FACES: [[usize; 3]; 8] = [
    [1, 5, 2],
    [2, 5, 3],
    [3, 5, 4],
    [4, 5, 1],
    [1, 0, 4],
    [4, 0, 3],
    [3, 0, 2],
    [2, 0, 1],
];

/// Angular slack (radians) of the point-in-trixel test.
pub(crate) const CONTAIN_EPS: f64 = 1e-12;

pub(crate) type Triangle = [UnitVector; 3];

pub(crate) fn face_triangle(face: usize) -> Triangle {
    let [a, b, c] = FACES[face];
    [CORNERS[a], CORNERS[b], CORNERS[c]]
}

fn midpoint(a: UnitVector, b: UnitVector) -> UnitVector {
    (a + b).renormalize().expect("trixel vertices are never antipodal")
}

/// Children 0..3 of a triangle in subdivision order.
pub(crate) fn subdivide(t: &Triangle) -> [Triangle; 4] {
    let [t0, t1, t2] = *t;
    let w0 = midpoint(t1, t2);
    let w1 = midpoint(t0, t2);
    let w2 = midpoint(t0, t1);
    [[t0, w2, w1], [t1, w0, w2], [t2, w1, w0], [w0, w1, w2]]
}

fn edge_score(a: &UnitVector, b: &UnitVector, p: &UnitVector) -> f64 {
    let n = a.cross(b);
    n.dot(p) / n.norm()
}

/// Smallest signed angular distance of `p` to the three edge planes;
/// non-negative when `p` lies inside.
fn containment_margin(t: &Triangle, p: &UnitVector) -> f64 {
    edge_score(&t[0], &t[1], p)
        .min(edge_score(&t[1], &t[2], p))
        .min(edge_score(&t[2], &t[0], p))
}

fn edge_ok(a: &UnitVector, b: &UnitVector, p: &UnitVector) -> bool {
    let n = a.cross(b);
    let raw = n.dot(p);
    raw >= 0.0 || raw >= -CONTAIN_EPS * n.norm()
}

pub(crate) fn triangle_contains(t: &Triangle, p: &UnitVector) -> bool {
    edge_ok(&t[0], &t[1], p) && edge_ok(&t[1], &t[2], p) && edge_ok(&t[2], &t[0], p)
}

fn first_containing(candidates: &[Triangle], p: &UnitVector) -> usize {
    if let Some(i) = candidates.iter().position(|t| triangle_contains(t, p)) {
        return i;
    }
    // rounding left p outside every candidate by more than the slack; take the nearest
    let mut best = 0;
    let mut best_margin = f64::NEG_INFINITY;
    for (i, t) in candidates.iter().enumerate() {
        let m = containment_margin(t, p);
        if m > best_margin {
            best = i;
            best_margin = m;
        }
    }
    best
}

/// One node of the mesh: face bits followed by two bits per level.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct TrixelId(u64);

impl TrixelId {
    pub fn new(id: u64) -> Result<Self, HtmError> {
        let bits = 64 - id.leading_zeros();
        if bits < 4 || bits % 2 != 0 || bits > 4 + 2 * MAX_DEPTH as u32 {
            return Err(HtmError::MalformedId(id));
        }
        Ok(Self(id))
    }

    pub fn face(index: u8) -> Self {
        assert!(index < 8, "face index {index} out of range");
        Self(8 + index as u64)
    }

    pub fn id(&self) -> u64 {
        self.0
    }

    pub fn depth(&self) -> u8 {
        ((64 - self.0.leading_zeros() - 4) / 2) as u8
    }

    pub fn child(&self, k: u8) -> Option<Self> {
        if self.depth() >= MAX_DEPTH || k > 3 {
            return None;
        }
        Some(Self((self.0 << 2) | k as u64))
    }

    pub fn parent(&self) -> Option<Self> {
        (self.depth() > 0).then(|| Self(self.0 >> 2))
    }

    /// Human-readable path, e.g. `N2,1,0,3`.
    pub fn name(&self) -> String {
        let d = self.depth() as u32;
        let face = (self.0 >> (2 * d)) - 8;
        let mut s = if face < 4 { format!("S{face}") } else { format!("N{}", face - 4) };
        for level in (0..d).rev() {
            s.push(',');
            s.push_str(&((self.0 >> (2 * level)) & 3).to_string());
        }
        s
    }
}

impl fmt::Display for TrixelId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

/// Half-open range `[lo, hi)` of trixel IDs at one leaf depth.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct IdRange {
    pub lo: u64,
    pub hi: u64,
}

impl IdRange {
    pub fn new(lo: u64, hi: u64) -> Self {
        debug_assert!(lo < hi);
        Self { lo, hi }
    }

    pub fn contains(&self, id: u64) -> bool {
        self.lo <= id && id < self.hi
    }

    pub fn len(&self) -> u64 {
        self.hi - self.lo
    }

    pub fn is_empty(&self) -> bool {
        self.hi <= self.lo
    }

    /// Re-expresses the range at a deeper leaf level.
    pub fn deepen(&self, levels: u8) -> Self {
        let s = 2 * levels as u32;
        Self { lo: self.lo << s, hi: self.hi << s }
    }
}

/// Sorts and coalesces overlapping or adjacent ranges.
pub(crate) fn merge_ranges(mut ranges: Vec<IdRange>) -> Vec<IdRange> {
    ranges.sort_unstable();
    let mut out: Vec<IdRange> = Vec::with_capacity(ranges.len());
    for r in ranges {
        match out.last_mut() {
            Some(last) if r.lo <= last.hi => last.hi = last.hi.max(r.hi),
            _ => out.push(r),
        }
    }
    out
}

pub fn htm_lookup(p: UnitVector, depth: u8) -> Result<TrixelId, HtmError> {
    check_depth(depth)?;
    let faces: [Triangle; 8] = std::array::from_fn(face_triangle);
    let f = first_containing(&faces, &p);
    let mut id = 8 + f as u64;
    let mut tri = faces[f];
    for _ in 0..depth {
        let kids = subdivide(&tri);
        let k = first_containing(&kids, &p);
        id = (id << 2) | k as u64;
        tri = kids[k];
    }
    Ok(TrixelId(id))
}

pub fn trixel_vertices(t: TrixelId) -> Result<[UnitVector; 3], HtmError> {
    let t = TrixelId::new(t.0)?;
    let d = t.depth() as u32;
    let face = ((t.0 >> (2 * d)) - 8) as usize;
    let mut tri = face_triangle(face);
    for level in (0..d).rev() {
        let k = ((t.0 >> (2 * level)) & 3) as usize;
        tri = subdivide(&tri)[k];
    }
    Ok(tri)
}

pub fn trixel_range(t: TrixelId, leaf_depth: u8) -> Result<IdRange, HtmError> {
    check_depth(leaf_depth)?;
    let d = t.depth();
    if d > leaf_depth {
        return Err(HtmError::Depth { depth: d as u32, max: leaf_depth as u32 });
    }
    let s = 2 * (leaf_depth - d) as u32;
    Ok(IdRange { lo: t.0 << s, hi: (t.0 + 1) << s })
}

pub(crate) fn check_depth(depth: u8) -> Result<(), HtmError> {
    if depth > MAX_DEPTH {
        return Err(HtmError::Depth { depth: depth as u32, max: MAX_DEPTH as u32 });
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn id_validation() {
        assert!(TrixelId::new(8).is_ok());
        assert!(TrixelId::new(15).is_ok());
        assert!(TrixelId::new(7).is_err());
        assert!(TrixelId::new(16).is_err());
        assert!(TrixelId::new(0).is_err());
        assert_eq!(TrixelId::new(32).unwrap().depth(), 1);
        assert!(trixel_vertices(TrixelId(5)).is_err());
    }

    #[test]
    fn face_zero_vertices() {
        let v = trixel_vertices(TrixelId::face(0)).unwrap();
        assert_eq!(v, [CORNERS[1], CORNERS[5], CORNERS[2]]);
    }

    #[test]
    fn child_three_is_midpoints() {
        let parent = TrixelId::new(0b1110_01_10).unwrap();
        let [t0, t1, t2] = trixel_vertices(parent).unwrap();
        let c3 = trixel_vertices(parent.child(3).unwrap()).unwrap();
        assert_eq!(c3, [midpoint(t1, t2), midpoint(t0, t2), midpoint(t0, t1)]);
        for v in c3 {
            assert!((v.norm() - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn ranges() {
        assert_eq!(trixel_range(TrixelId::face(0), 1).unwrap(), IdRange::new(32, 36));
        let t = TrixelId::new(0b1101_11).unwrap();
        assert_eq!(trixel_range(t, 1).unwrap(), IdRange::new(t.id(), t.id() + 1));
        assert!(trixel_range(t, 0).is_err());
    }

    #[test]
    fn names() {
        assert_eq!(TrixelId::face(6).name(), "N2");
        assert_eq!(TrixelId::new(0b1110_01_00).unwrap().name(), "N2,1,0");
    }

    #[test]
    fn merging() {
        let r = merge_ranges(vec![IdRange::new(5, 7), IdRange::new(1, 3), IdRange::new(3, 4)]);
        assert_eq!(r, vec![IdRange::new(1, 4), IdRange::new(5, 7)]);
    }
}
