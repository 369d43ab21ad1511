use rayon::prelude::*;
use serde::Serialize;
use std::time::Duration;

use super::{check_limits, unit_at, ColumnInfo, Deadline, Plan, Projection, QueryError, ResultSet, CHECK_INTERVAL};
use crate::htm::{arc_angle, circle_to_region, cover, cover_trixels, ConvexRegion, EquatorialCoord, Halfspace, IdRange, UnitVector, MAX_DEPTH};
use crate::store::rows::Neighbor;
use crate::store::{CatalogState, TableName, Value, ViewFilter, NEIGHBOR_RADIUS_ARCMIN};

/// Upper bound on the number of ranges a query cover may produce.
pub const MAX_COVER_RANGES: usize = 4096;

/// Initial cover depth for a cap: a few levels below the first depth whose
/// trixels are smaller than the cap.
pub fn choose_cover_depth(radius_deg: f64) -> u8 {
    if radius_deg <= 0.0 {
        return MAX_DEPTH;
    }
    let d = (90.0 / radius_deg).log2().floor() + 3.0;
    d.clamp(2.0, MAX_DEPTH as f64) as u8
}

fn capped_cover(region: &ConvexRegion, mut depth: u8) -> Result<Vec<IdRange>, QueryError> {
    loop {
        let ranges = cover_trixels(region, depth)?.ranges(MAX_DEPTH);
        if ranges.len() <= MAX_COVER_RANGES || depth == 0 {
            return Ok(ranges);
        }
        depth -= 1;
    }
}

/// Depth-20 ranges covering the cap, at most [`MAX_COVER_RANGES`] of them.
pub fn cone_cover(center: EquatorialCoord, radius_deg: f64) -> Result<Vec<IdRange>, QueryError> {
    capped_cover(&circle_to_region(center, radius_deg)?, choose_cover_depth(radius_deg))
}

pub(crate) fn region_cover(region: &ConvexRegion) -> Result<Vec<IdRange>, QueryError> {
    let smallest = region.halfspaces().iter().map(|h| h.radius_rad().to_degrees()).fold(180.0, f64::min);
    capped_cover(region, choose_cover_depth(smallest.min(30.0)))
}

/// The cover as a result table of half-open `[lo, hi)` ranges at `depth`.
pub fn sp_htm_cover(region: &ConvexRegion, depth: u8) -> Result<ResultSet, QueryError> {
    let deadline = Deadline::new(Duration::MAX);
    let ranges = cover(region, depth)?;
    let columns = ["lo", "hi"].map(|n| ColumnInfo { name: n.into(), ty: "int".into() }).to_vec();
    let rows = ranges.iter().map(|r| vec![Value::Int(r.lo as i64), Value::Int(r.hi as i64)]).collect();
    Ok(ResultSet { columns, rows, truncated: false, timed_out: false, elapsed: deadline.elapsed(), rows_scanned: 0 })
}

#[derive(Debug, Clone)]
pub struct ConeRequest {
    pub ra: f64,
    pub dec: f64,
    pub radius_deg: f64,
    pub view: String,
    pub predicate: Option<String>,
    pub projection: Option<Vec<String>>,
    pub limit: usize,
    pub timeout: Duration,
}

impl ConeRequest {
    pub fn new(ra: f64, dec: f64, radius_deg: f64) -> Self {
        Self {
            ra,
            dec,
            radius_deg,
            view: "PhotoObj".into(),
            predicate: None,
            projection: None,
            limit: super::DEFAULT_LIMIT,
            timeout: super::DEFAULT_TIMEOUT,
        }
    }
}

fn check_radius(r: f64, max: f64) -> Result<(), QueryError> {
    if !(0.0..=max).contains(&r) {
        return Err(QueryError::Invalid(format!("radius {r} outside [0, {max}]")));
    }
    Ok(())
}

/// Objects of the view within `radius_deg` of the center (closed ball),
/// nearest first, with a trailing `distance` column in arcminutes.
pub fn cone_search(state: &CatalogState, req: &ConeRequest) -> Result<ResultSet, QueryError> {
    check_limits(req.limit, req.timeout)?;
    check_radius(req.radius_deg, 180.0)?;
    let deadline = Deadline::new(req.timeout);
    let center_c = EquatorialCoord::new(req.ra, req.dec)?;
    let center = center_c.to_unit();
    let plan = Plan::new(state, &req.view, req.predicate.as_deref(), req.projection.as_deref())?;
    if !matches!(plan.table.name(), TableName::PhotoObj | TableName::PhotoTag) {
        return Err(QueryError::Invalid(format!("{} has no sky position", req.view)));
    }
    let photo = state.table(TableName::PhotoObj);
    let ids = photo.ints("objID");
    let mut candidates = Vec::new();
    state.range_scan(&cone_cover(center_c, req.radius_deg)?, |r| candidates.push(r));

    let mut hits: Vec<(f64, i64, usize)> = Vec::new();
    let (mut scanned, mut timed_out) = (0, false);
    for chunk in candidates.chunks(CHECK_INTERVAL) {
        if deadline.expired() {
            timed_out = true;
            break;
        }
        scanned += chunk.len();
        let mut inside = Vec::new();
        let mut dist = Vec::new();
        for r in chunk {
            let d = arc_angle(center, unit_at(photo, *r));
            if d <= req.radius_deg {
                inside.push(*r);
                dist.push(d * 60.0);
            }
        }
        for ((r, d), keep) in inside.iter().zip(dist).zip(plan.select(&inside)) {
            if keep {
                hits.push((d, ids[*r], *r));
            }
        }
    }
    hits.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));

    let (columns, rows, truncated) = match plan.projection {
        Projection::Count => (plan.columns(), vec![vec![Value::Int(hits.len() as i64)]], false),
        Projection::Columns(_) => {
            let mut columns = plan.columns();
            columns.push(ColumnInfo { name: "distance".into(), ty: "float".into() });
            let truncated = hits.len() > req.limit;
            let rows = hits
                .iter()
                .take(req.limit)
                .map(|(d, _, r)| {
                    let mut v = plan.project(*r);
                    v.push(Value::Float(*d));
                    v
                })
                .collect();
            (columns, rows, truncated)
        }
    };
    Ok(ResultSet { columns, rows, truncated, timed_out, elapsed: deadline.elapsed(), rows_scanned: scanned })
}

/// Summary of a matched object.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ObjectHit {
    #[serde(rename = "objID")]
    pub obj_id: i64,
    pub ra: f64,
    pub dec: f64,
    #[serde(rename = "objType")]
    pub obj_type: String,
    /// Arcminutes.
    pub distance: f64,
}

fn primary_hits(state: &CatalogState, ra: f64, dec: f64, radius_arcmin: f64) -> Result<Vec<ObjectHit>, QueryError> {
    check_radius(radius_arcmin, 180.0 * 60.0)?;
    let c = EquatorialCoord::new(ra, dec)?;
    let center = c.to_unit();
    let photo = state.table(TableName::PhotoObj);
    let (ids, ras, decs, types) = (photo.ints("objID"), photo.floats("ra"), photo.floats("dec"), photo.enums("objType"));
    let mut hits = Vec::new();
    state.range_scan(&cone_cover(c, radius_arcmin / 60.0)?, |r| {
        if !ViewFilter::Primary.matches(photo, r) {
            return;
        }
        let d = arc_angle(center, unit_at(photo, r)) * 60.0;
        if d <= radius_arcmin {
            hits.push(ObjectHit {
                obj_id: ids[r],
                ra: ras[r],
                dec: decs[r],
                obj_type: crate::store::EnumKind::ObjType.name(types[r]).to_string(),
                distance: d,
            });
        }
    });
    hits.sort_by(|a, b| a.distance.total_cmp(&b.distance).then(a.obj_id.cmp(&b.obj_id)));
    Ok(hits)
}

/// The primary object nearest to (ra, dec) within `radius_arcmin`; ties go to the lower objID.
pub fn f_get_nearest_obj_eq(state: &CatalogState, ra: f64, dec: f64, radius_arcmin: f64) -> Result<Option<ObjectHit>, QueryError> {
    Ok(primary_hits(state, ra, dec, radius_arcmin)?.into_iter().next())
}

/// Primary objects within `radius_arcmin`, nearest first.
pub fn f_get_nearby_obj_eq(state: &CatalogState, ra: f64, dec: f64, radius_arcmin: f64) -> Result<Vec<ObjectHit>, QueryError> {
    primary_hits(state, ra, dec, radius_arcmin)
}

/// All ordered pairs within `radius_arcmin` (inclusive). `htm` must be sorted
/// ascending and hold depth-20 IDs of `points`. Output is sorted by (objID, neighborObjID).
pub fn neighbor_pairs(ids: &[i64], htm: &[i64], points: &[UnitVector], radius_arcmin: f64) -> Vec<Neighbor> {
    debug_assert!(htm.windows(2).all(|w| w[0] <= w[1]));
    let radius_deg = radius_arcmin / 60.0;
    let depth = choose_cover_depth(radius_deg);
    let offset = radius_deg.to_radians().cos();
    let mut out: Vec<Neighbor> = (0..ids.len())
        .into_par_iter()
        .flat_map_iter(|i| {
            let cap = Halfspace::new(points[i], offset).expect("offset within [-1, 1]");
            let region = ConvexRegion::new(vec![cap]).expect("one halfspace");
            let ranges = capped_cover(&region, depth).expect("depth within range");
            let mut found = Vec::new();
            for r in ranges {
                let lo = htm.partition_point(|h| (*h as u64) < r.lo);
                let hi = lo + htm[lo..].partition_point(|h| (*h as u64) < r.hi);
                for j in lo..hi {
                    if j == i {
                        continue;
                    }
                    let d = arc_angle(points[i], points[j]) * 60.0;
                    if d <= radius_arcmin {
                        found.push(Neighbor { obj_id: ids[i], neighbor_obj_id: ids[j], distance: d });
                    }
                }
            }
            found
        })
        .collect();
    out.sort_by(|a, b| (a.obj_id, a.neighbor_obj_id).cmp(&(b.obj_id, b.neighbor_obj_id)));
    out
}

/// Neighbors relation of the current PhotoObj table.
pub fn neighbors_of_state(state: &CatalogState, radius_arcmin: f64) -> Result<Vec<Neighbor>, QueryError> {
    check_radius(radius_arcmin, NEIGHBOR_RADIUS_ARCMIN)?;
    let photo = state.table(TableName::PhotoObj);
    let points: Vec<UnitVector> = (0..photo.len()).map(|r| unit_at(photo, r)).collect();
    Ok(neighbor_pairs(photo.ints("objID"), photo.ints("htmID"), &points, radius_arcmin))
}
