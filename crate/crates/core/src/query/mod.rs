//! Query execution over catalog snapshots: cone searches, nearest-object
//! lookups, neighbors materialization and predicate scans with limits.

mod spatial;

use std::time::{Duration, Instant};

use serde::Serialize;

pub use spatial::{
    choose_cover_depth, cone_cover, cone_search, f_get_nearby_obj_eq, f_get_nearest_obj_eq, neighbor_pairs,
    neighbors_of_state, sp_htm_cover, ConeRequest, ObjectHit, MAX_COVER_RANGES,
};
pub(crate) use spatial::region_cover;

use crate::filterql::{self, Checked, FilterError};
use crate::htm::{ConvexRegion, HtmError, UnitVector};
use crate::store::rows::SpecLine;
use crate::store::schema::PHOTO_TAG_COLUMNS;
use crate::store::{resolve_view, CatalogState, Table, TableName, Value, ViewFilter};

pub const DEFAULT_LIMIT: usize = 1000;
pub const DEFAULT_TIMEOUT: Duration = Duration::from_secs(30);
/// Rows between cooperative deadline checks.
pub const CHECK_INTERVAL: usize = 4096;

#[derive(Debug, thiserror::Error)]
pub enum QueryError {
    #[error(transparent)]
    Filter(#[from] FilterError),
    #[error("unknown view '{0}'")]
    UnknownView(String),
    #[error("unknown column '{column}' in {table}")]
    UnknownColumn { column: String, table: TableName },
    #[error("invalid request: {0}")]
    Invalid(String),
    #[error(transparent)]
    Htm(#[from] HtmError),
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ColumnInfo {
    pub name: String,
    #[serde(rename = "type")]
    pub ty: String,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ResultSet {
    pub columns: Vec<ColumnInfo>,
    pub rows: Vec<Vec<Value>>,
    pub truncated: bool,
    #[serde(rename = "timedOut")]
    pub timed_out: bool,
    /// Seconds.
    pub elapsed: f64,
    #[serde(rename = "rowsScanned")]
    pub rows_scanned: usize,
}

#[derive(Debug, Clone)]
pub struct QueryRequest {
    pub view: String,
    pub predicate: Option<String>,
    /// Column names; `["count"]` asks for a row count. `None` selects the tag columns.
    pub projection: Option<Vec<String>>,
    pub limit: usize,
    pub timeout: Duration,
    /// Optional spatial constraint; selects the HTM range-scan access path.
    pub region: Option<ConvexRegion>,
}

impl QueryRequest {
    pub fn new(view: &str) -> Self {
        Self {
            view: view.to_string(),
            predicate: None,
            projection: None,
            limit: DEFAULT_LIMIT,
            timeout: DEFAULT_TIMEOUT,
            region: None,
        }
    }

    pub fn predicate(mut self, p: &str) -> Self {
        self.predicate = Some(p.to_string());
        self
    }

    pub fn project(mut self, cols: &[&str]) -> Self {
        self.projection = Some(cols.iter().map(|c| c.to_string()).collect());
        self
    }

    pub fn limit(mut self, limit: usize) -> Self {
        self.limit = limit;
        self
    }

    pub fn timeout(mut self, t: Duration) -> Self {
        self.timeout = t;
        self
    }

    pub fn within(mut self, region: ConvexRegion) -> Self {
        self.region = Some(region);
        self
    }
}

pub(crate) struct Deadline {
    start: Instant,
    limit: Duration,
}

impl Deadline {
    pub(crate) fn new(limit: Duration) -> Self {
        Self { start: Instant::now(), limit }
    }

    pub(crate) fn expired(&self) -> bool {
        self.start.elapsed() >= self.limit
    }

    pub(crate) fn elapsed(&self) -> f64 {
        self.start.elapsed().as_secs_f64()
    }
}

pub(crate) fn check_limits(limit: usize, timeout: Duration) -> Result<(), QueryError> {
    if limit == 0 {
        return Err(QueryError::Invalid("limit must be at least 1".into()));
    }
    if timeout.is_zero() {
        return Err(QueryError::Invalid("timeout must be positive".into()));
    }
    Ok(())
}

/// Resolved view: the table rows come from, its implicit filter and the user predicate.
pub(crate) struct Plan<'a> {
    pub table: &'a Table,
    pub filter: ViewFilter,
    pub predicate: Option<Checked>,
    pub projection: Projection,
}

pub(crate) enum Projection {
    Count,
    Columns(Vec<usize>),
}

impl<'a> Plan<'a> {
    pub(crate) fn new(
        state: &'a CatalogState,
        view: &str,
        predicate: Option<&str>,
        projection: Option<&[String]>,
    ) -> Result<Self, QueryError> {
        let (base, filter) = resolve_view(view).map_err(|_| QueryError::UnknownView(view.to_string()))?;
        let table = state.table(base);
        let schema = table.schema();
        let predicate = match predicate.map(str::trim) {
            Some(p) if !p.is_empty() => Some(filterql::compile(p, schema)?),
            _ => None,
        };
        let projection = match projection {
            Some([c]) if c.eq_ignore_ascii_case("count") || c.eq_ignore_ascii_case("count(*)") => Projection::Count,
            Some(cols) if !cols.is_empty() => Projection::Columns(
                cols.iter()
                    .map(|c| {
                        schema
                            .resolve_column(c)
                            .ok_or_else(|| QueryError::UnknownColumn { column: c.clone(), table: base })
                    })
                    .collect::<Result<_, _>>()?,
            ),
            _ if matches!(base, TableName::PhotoObj | TableName::PhotoTag) => Projection::Columns(
                PHOTO_TAG_COLUMNS.iter().map(|c| schema.column_index(c).expect("tag column")).collect(),
            ),
            _ => Projection::Columns((0..schema.columns.len()).collect()),
        };
        Ok(Plan { table, filter, predicate, projection })
    }

    /// Rows of `rows` passing the view filter and predicate.
    pub(crate) fn select(&self, rows: &[usize]) -> Vec<bool> {
        let mut keep: Vec<bool> = rows.iter().map(|r| self.filter.matches(self.table, *r)).collect();
        if let Some(p) = &self.predicate {
            for (k, v) in keep.iter_mut().zip(p.eval_rows(self.table, rows)) {
                *k &= v;
            }
        }
        keep
    }

    pub(crate) fn select_range(&self, start: usize, end: usize) -> Vec<bool> {
        let mut keep: Vec<bool> = match self.filter {
            ViewFilter::All => vec![true; end - start],
            f => (start..end).map(|r| f.matches(self.table, r)).collect(),
        };
        if let Some(p) = &self.predicate {
            for (k, v) in keep.iter_mut().zip(p.eval_range(self.table, start..end)) {
                *k &= v;
            }
        }
        keep
    }

    pub(crate) fn columns(&self) -> Vec<ColumnInfo> {
        match &self.projection {
            Projection::Count => vec![ColumnInfo { name: "count".into(), ty: "int".into() }],
            Projection::Columns(cols) => cols
                .iter()
                .map(|c| {
                    let def = &self.table.schema().columns[*c];
                    ColumnInfo { name: def.name.to_string(), ty: def.ty.name().to_string() }
                })
                .collect(),
        }
    }

    pub(crate) fn project(&self, row: usize) -> Vec<Value> {
        match &self.projection {
            Projection::Count => unreachable!("count projection has no row values"),
            Projection::Columns(cols) => cols.iter().map(|c| self.table.get(row, *c)).collect(),
        }
    }
}

fn unit_at(photo: &Table, row: usize) -> UnitVector {
    UnitVector::new_unchecked(photo.floats("cx")[row], photo.floats("cy")[row], photo.floats("cz")[row])
}

/// Executes a view/predicate/projection request with limit and timeout enforcement.
/// Rows come back in storage order, which for PhotoObj is the HTM clustering.
pub fn query(state: &CatalogState, req: &QueryRequest) -> Result<ResultSet, QueryError> {
    check_limits(req.limit, req.timeout)?;
    let deadline = Deadline::new(req.timeout);
    let plan = Plan::new(state, &req.view, req.predicate.as_deref(), req.projection.as_deref())?;
    let counting = matches!(plan.projection, Projection::Count);
    let mut matched: Vec<usize> = Vec::new();
    let mut count = 0usize;
    let mut scanned = 0usize;
    let mut timed_out = false;
    let want = req.limit + 1;

    if let Some(region) = &req.region {
        if !matches!(plan.table.name(), TableName::PhotoObj | TableName::PhotoTag) {
            return Err(QueryError::Invalid(format!("{} has no sky position", req.view)));
        }
        let photo = state.table(TableName::PhotoObj);
        let ranges = spatial::region_cover(region)?;
        let mut candidates = Vec::new();
        state.range_scan(&ranges, |row| candidates.push(row));
        for chunk in candidates.chunks(CHECK_INTERVAL) {
            if deadline.expired() {
                timed_out = true;
                break;
            }
            scanned += chunk.len();
            let inside: Vec<usize> = chunk.iter().copied().filter(|r| region.contains(&unit_at(photo, *r))).collect();
            for (row, keep) in inside.iter().zip(plan.select(&inside)) {
                if keep {
                    count += 1;
                    if !counting && matched.len() < want {
                        matched.push(*row);
                    }
                }
            }
            if !counting && matched.len() >= want {
                break;
            }
        }
    } else {
        let n = plan.table.len();
        let mut start = 0;
        while start < n {
            if deadline.expired() {
                timed_out = true;
                break;
            }
            let end = (start + CHECK_INTERVAL).min(n);
            let keep = plan.select_range(start, end);
            scanned += end - start;
            if counting {
                count += keep.iter().filter(|k| **k).count();
            } else {
                matched.extend((start..end).zip(keep).filter(|(_, k)| *k).map(|(r, _)| r).take(want - matched.len()));
                if matched.len() >= want {
                    break;
                }
            }
            start = end;
        }
    }

    let (rows, truncated) = if counting {
        (vec![vec![Value::Int(count as i64)]], false)
    } else {
        let truncated = matched.len() > req.limit;
        matched.truncate(req.limit);
        (matched.iter().map(|r| plan.project(*r)).collect(), truncated)
    };
    Ok(ResultSet { columns: plan.columns(), rows, truncated, timed_out, elapsed: deadline.elapsed(), rows_scanned: scanned })
}

/// All SpecLine rows of one spectrum, wavelength ascending (lineID breaks ties).
pub fn spec_lines_for(state: &CatalogState, spec_obj_id: i64) -> Vec<SpecLine> {
    let t = state.table(TableName::SpecLine);
    let owner = t.ints("specObjID");
    let (ids, wl, ew, height) = (t.ints("lineID"), t.floats("wavelength"), t.floats("ew"), t.floats("height"));
    let mut out: Vec<SpecLine> = (0..t.len())
        .filter(|r| owner[*r] == spec_obj_id)
        .map(|r| SpecLine { line_id: ids[r], spec_obj_id, wavelength: wl[r], ew: ew[r], height: height[r] })
        .collect();
    out.sort_by(|a, b| a.wavelength.total_cmp(&b.wavelength).then(a.line_id.cmp(&b.line_id)));
    out
}
