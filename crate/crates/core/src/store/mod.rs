//! Columnar in-memory catalog with snapshot persistence.
//!
//! The catalog follows a single-writer, multi-reader discipline. Readers take
//! an [`Arc<CatalogState>`] and keep a consistent view for as long as they hold
//! it; writers build a new state (cloning only the tables they touch) and swap
//! it in atomically, so a partially applied batch is never observable.

mod integrity;
pub mod rows;
pub mod schema;
mod snapshot;
mod table;

use std::collections::{BTreeMap, HashSet};
use std::path::Path;
use std::sync::Arc;

use parking_lot::{Mutex, RwLock};

pub use integrity::{audit, Violation};
pub use schema::{flags, ColumnDef, ColumnType, EnumKind, ObjType, SpecClass, TableName, TableSchema};
pub use snapshot::{MAGIC as SNAPSHOT_MAGIC, VERSION as SNAPSHOT_VERSION};
pub use table::{ColumnData, Table, Timestamp, Value};

use crate::htm::IdRange;

/// Radius of the materialized neighbors relation, arcminutes.
pub const NEIGHBOR_RADIUS_ARCMIN: f64 = 0.5;

#[derive(Debug, thiserror::Error)]
pub enum StoreError {
    #[error("integrity error: {}", summarize(.0))]
    Integrity(Vec<Violation>),
    #[error("not found: {0}")]
    NotFound(String),
    #[error("format error: {0}")]
    Format(String),
    #[error("table {0} is derived and cannot be written")]
    ReadOnly(TableName),
    #[error("{table} rows in the window are still referenced: {}", describe_deps(.dependents))]
    Dependency { table: TableName, dependents: Vec<(TableName, usize)> },
    #[error("window holds {found} rows, expected {expected}")]
    WindowMismatch { expected: usize, found: usize },
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

fn summarize(v: &[Violation]) -> String {
    match v.first() {
        Some(first) if v.len() > 1 => format!("{first} (and {} more)", v.len() - 1),
        Some(first) => first.to_string(),
        None => "no details".to_string(),
    }
}

fn describe_deps(d: &[(TableName, usize)]) -> String {
    d.iter().map(|(t, n)| format!("{n} in {t}")).collect::<Vec<_>>().join(", ")
}

/// Implicit predicate attached to a view.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ViewFilter {
    All,
    Primary,
    PrimaryOfType(ObjType),
}

impl ViewFilter {
    /// The same predicate in filter-expression syntax.
    pub fn predicate_text(&self) -> Option<&'static str> {
        match self {
            ViewFilter::All => None,
            ViewFilter::Primary => Some("(flags & fPhotoFlags('primary')) != 0"),
            ViewFilter::PrimaryOfType(ObjType::Star) => {
                Some("(flags & fPhotoFlags('primary')) != 0 AND objType = 'star'")
            }
            ViewFilter::PrimaryOfType(ObjType::Galaxy) => {
                Some("(flags & fPhotoFlags('primary')) != 0 AND objType = 'galaxy'")
            }
            ViewFilter::PrimaryOfType(_) => unreachable!("only star and galaxy views exist"),
        }
    }

    /// Evaluates the filter on row `row` of a PhotoObj or PhotoTag table.
    pub fn matches(&self, t: &Table, row: usize) -> bool {
        match self {
            ViewFilter::All => true,
            ViewFilter::Primary => t.ints("flags")[row] & flags::PRIMARY != 0,
            ViewFilter::PrimaryOfType(ty) => {
                t.ints("flags")[row] & flags::PRIMARY != 0 && t.enums("objType")[row] == ty.code()
            }
        }
    }
}

pub const VIEW_NAMES: [&str; 3] = ["PrimaryObjects", "Stars", "Galaxies"];

/// Maps a view or table name to its base table and implicit predicate.
pub fn resolve_view(name: &str) -> Result<(TableName, ViewFilter), StoreError> {
    let view = match name.to_ascii_lowercase().as_str() {
        "primaryobjects" => Some(ViewFilter::Primary),
        "stars" => Some(ViewFilter::PrimaryOfType(ObjType::Star)),
        "galaxies" => Some(ViewFilter::PrimaryOfType(ObjType::Galaxy)),
        _ => None,
    };
    match view {
        Some(f) => Ok((TableName::PhotoObj, f)),
        None => name
            .parse::<TableName>()
            .map(|t| (t, ViewFilter::All))
            .map_err(|_| StoreError::NotFound(format!("view '{name}'"))),
    }
}

/// An immutable version of every table.
#[derive(Debug, Clone, PartialEq)]
pub struct CatalogState {
    tables: BTreeMap<TableName, Arc<Table>>,
}

impl Default for CatalogState {
    fn default() -> Self {
        Self { tables: TableName::ALL.iter().map(|t| (*t, Arc::new(Table::new(*t)))).collect() }
    }
}

impl CatalogState {
    pub(crate) fn from_tables(mut tables: BTreeMap<TableName, Arc<Table>>) -> Result<Self, StoreError> {
        for t in TableName::ALL {
            if !t.is_derived() && !tables.contains_key(&t) {
                return Err(StoreError::Format(format!("snapshot is missing table {t}")));
            }
        }
        let photo = &tables[&TableName::PhotoObj];
        let htm = photo.ints("htmID");
        let ids = photo.ints("objID");
        if (1..photo.len()).any(|r| (htm[r - 1], ids[r - 1]) > (htm[r], ids[r])) {
            return Err(StoreError::Format("PhotoObj rows are not clustered by (htmID, objID)".into()));
        }
        let tag = Table::photo_tag_of(photo);
        tables.insert(TableName::PhotoTag, Arc::new(tag));
        Ok(Self { tables })
    }

    pub fn table(&self, t: TableName) -> &Table {
        &self.tables[&t]
    }

    pub fn row_count(&self, t: TableName) -> usize {
        self.tables[&t].len()
    }

    fn max_load_time(&self) -> i64 {
        self.tables.values().flat_map(|t| t.load_times().iter().copied()).max().unwrap_or(0)
    }

    /// Visits PhotoObj rows whose htmID falls in `ranges` (sorted, disjoint,
    /// depth-20 IDs), in clustered order. Returns the number of rows visited.
    pub fn range_scan(&self, ranges: &[IdRange], mut f: impl FnMut(usize)) -> usize {
        let photo = self.table(TableName::PhotoObj);
        let htm = photo.ints("htmID");
        let mut visited = 0;
        let mut from = 0;
        for r in ranges {
            let lo = from + htm[from..].partition_point(|h| (*h as u64) < r.lo);
            let hi = lo + htm[lo..].partition_point(|h| (*h as u64) < r.hi);
            for row in lo..hi {
                f(row);
            }
            visited += hi - lo;
            from = hi;
        }
        visited
    }

    /// Visits every row of the view's base table that passes its implicit predicate.
    pub fn full_scan(&self, view: &str, mut f: impl FnMut(&Table, usize)) -> Result<usize, StoreError> {
        let (base, filter) = resolve_view(view)?;
        let t = self.table(base);
        let mut n = 0;
        for row in 0..t.len() {
            if filter.matches(t, row) {
                f(t, row);
                n += 1;
            }
        }
        Ok(n)
    }

    fn window_mask(t: &Table, start: Timestamp, end: Timestamp) -> Vec<bool> {
        t.load_times().iter().map(|lt| start.0 <= *lt && *lt <= end.0).collect()
    }

    /// Rows in other tables (or outside the window in the same table) that
    /// reference rows of `table` loaded inside the window.
    pub fn dependents(&self, table: TableName, start: Timestamp, end: Timestamp) -> Vec<(TableName, usize)> {
        let t = self.table(table);
        let Some(pk) = t.schema().primary_key else { return Vec::new() };
        let in_window = Self::window_mask(t, start, end);
        let doomed: HashSet<i64> =
            t.ints(pk).iter().zip(&in_window).filter(|(_, w)| **w).map(|(k, _)| *k).collect();
        if doomed.is_empty() {
            return Vec::new();
        }
        let mut out = Vec::new();
        for other in TableName::ALL {
            if other.is_derived() {
                continue;
            }
            let ot = self.table(other);
            let mut count = 0;
            for fk in ot.schema().foreign_keys.iter().filter(|fk| fk.references == table) {
                let keys = ot.ints(fk.column);
                count += keys
                    .iter()
                    .enumerate()
                    .filter(|(r, k)| doomed.contains(k) && !(other == table && in_window[*r]))
                    .count();
            }
            if count > 0 {
                out.push((other, count));
            }
        }
        out
    }

    pub fn rows_in_window(&self, table: TableName, start: Timestamp, end: Timestamp) -> usize {
        Self::window_mask(self.table(table), start, end).iter().filter(|w| **w).count()
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        snapshot::encode(self)
    }

    pub fn from_bytes(buf: &[u8]) -> Result<Self, StoreError> {
        snapshot::decode(buf)
    }

    fn with_table(&self, name: TableName, table: Table) -> CatalogState {
        let mut next = self.clone();
        if name == TableName::PhotoObj {
            next.tables.insert(TableName::PhotoTag, Arc::new(Table::photo_tag_of(&table)));
        }
        next.tables.insert(name, Arc::new(table));
        next
    }
}

/// Shared catalog handle.
#[derive(Debug)]
pub struct Catalog {
    state: RwLock<Arc<CatalogState>>,
    writer: Mutex<()>,
    clock: Mutex<i64>,
}

impl Default for Catalog {
    fn default() -> Self {
        Self::from_state(CatalogState::default())
    }
}

impl Catalog {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn from_state(state: CatalogState) -> Self {
        let last = state.max_load_time();
        Self { state: RwLock::new(Arc::new(state)), writer: Mutex::new(()), clock: Mutex::new(last) }
    }

    /// Consistent read view.
    pub fn snapshot(&self) -> Arc<CatalogState> {
        self.state.read().clone()
    }

    /// Next value of the store's monotonic clock (wall time, forced strictly increasing).
    pub fn tick(&self) -> Timestamp {
        let mut last = self.clock.lock();
        let now = chrono::Utc::now().timestamp_micros();
        *last = now.max(*last + 1);
        Timestamp(*last)
    }

    /// Makes later ticks strictly greater than `t`.
    pub fn advance_clock(&self, t: Timestamp) {
        let mut last = self.clock.lock();
        *last = (*last).max(t.0);
    }

    fn check_writable(table: TableName) -> Result<(), StoreError> {
        if table.is_derived() {
            return Err(StoreError::ReadOnly(table));
        }
        Ok(())
    }

    fn stamp(rows: Vec<Vec<Value>>, load_time: Timestamp) -> Vec<Vec<Value>> {
        rows.into_iter()
            .map(|mut r| {
                r.push(Value::Timestamp(load_time));
                r
            })
            .collect()
    }

    /// Validates and appends a batch; rows carry every column except `loadTime`,
    /// which is set to `load_time`. The whole batch is rejected on any violation.
    pub fn insert_batch(&self, table: TableName, rows: Vec<Vec<Value>>, load_time: Timestamp) -> Result<usize, StoreError> {
        Self::check_writable(table)?;
        let _w = self.writer.lock();
        let current = self.snapshot();
        let violations = integrity::validate_batch(&current, table, &rows);
        if !violations.is_empty() {
            return Err(StoreError::Integrity(violations));
        }
        let n = rows.len();
        let mut t = current.table(table).clone();
        t.append(Self::stamp(rows, load_time));
        t.cluster();
        t.rebuild_index();
        *self.state.write() = Arc::new(current.with_table(table, t));
        Ok(n)
    }

    /// Replaces the whole content of `table` with a validated batch.
    pub fn replace_table(&self, table: TableName, rows: Vec<Vec<Value>>, load_time: Timestamp) -> Result<usize, StoreError> {
        Self::check_writable(table)?;
        let _w = self.writer.lock();
        let current = self.snapshot();
        let emptied = current.with_table(table, Table::new(table));
        if table != TableName::Neighbors && !emptied.dependents(table, Timestamp(i64::MIN), Timestamp(i64::MAX)).is_empty() {
            return Err(StoreError::Dependency {
                table,
                dependents: current.dependents(table, Timestamp(i64::MIN), Timestamp(i64::MAX)),
            });
        }
        let violations = integrity::validate_batch(&emptied, table, &rows);
        if !violations.is_empty() {
            return Err(StoreError::Integrity(violations));
        }
        let n = rows.len();
        let mut t = Table::new(table);
        t.append(Self::stamp(rows, load_time));
        t.cluster();
        t.rebuild_index();
        *self.state.write() = Arc::new(current.with_table(table, t));
        Ok(n)
    }

    /// Removes exactly the rows with `start <= loadTime <= end`.
    pub fn delete_by_loadtime(&self, table: TableName, start: Timestamp, end: Timestamp) -> Result<usize, StoreError> {
        self.delete_window(table, start, end, None, false)
    }

    /// Undo primitive: refuses when other rows still reference the window, or
    /// when the window does not hold `expected` rows.
    pub fn delete_window_checked(
        &self,
        table: TableName,
        start: Timestamp,
        end: Timestamp,
        expected: usize,
    ) -> Result<usize, StoreError> {
        self.delete_window(table, start, end, Some(expected), true)
    }

    fn delete_window(
        &self,
        table: TableName,
        start: Timestamp,
        end: Timestamp,
        expected: Option<usize>,
        protect: bool,
    ) -> Result<usize, StoreError> {
        Self::check_writable(table)?;
        let _w = self.writer.lock();
        let current = self.snapshot();
        if protect {
            let deps = current.dependents(table, start, end);
            if !deps.is_empty() {
                return Err(StoreError::Dependency { table, dependents: deps });
            }
        }
        let mask = CatalogState::window_mask(current.table(table), start, end);
        let found = mask.iter().filter(|m| **m).count();
        if let Some(expected) = expected {
            if expected != found {
                return Err(StoreError::WindowMismatch { expected, found });
            }
        }
        if found == 0 {
            return Ok(0);
        }
        let keep: Vec<bool> = mask.iter().map(|m| !m).collect();
        let mut t = current.table(table).clone();
        t.retain(&keep);
        t.rebuild_index();
        *self.state.write() = Arc::new(current.with_table(table, t));
        Ok(found)
    }

    pub fn clear(&self) {
        let _w = self.writer.lock();
        *self.state.write() = Arc::new(CatalogState::default());
    }

    pub fn persist(&self, path: impl AsRef<Path>) -> Result<(), StoreError> {
        let bytes = self.snapshot().to_bytes();
        let path = path.as_ref();
        let tmp = path.with_extension("tmp");
        std::fs::write(&tmp, bytes)?;
        std::fs::rename(&tmp, path)?;
        Ok(())
    }

    pub fn restore(path: impl AsRef<Path>) -> Result<Self, StoreError> {
        let bytes = std::fs::read(path)?;
        Ok(Self::from_state(CatalogState::from_bytes(&bytes)?))
    }
}

#[cfg(test)]
mod tests {
    use super::rows::{self, Field, PhotoObj, RowRecord};
    use super::*;

    fn field() -> Vec<Value> {
        Field { field_id: 1, run: 1, camcol: 1, field_num: 1, ra_min: 0.0, ra_max: 10.0, dec_min: 0.0, dec_max: 10.0 }
            .to_values()
    }

    fn photo(id: i64, ra: f64, dec: f64, flags: i64) -> PhotoObj {
        PhotoObj { obj_id: id, field_id: 1, flags, ..Default::default() }.with_position(ra, dec).unwrap()
    }

    fn seeded() -> Catalog {
        let c = Catalog::new();
        let t = c.tick();
        c.insert_batch(TableName::Field, vec![field()], t).unwrap();
        c
    }

    #[test]
    fn insert_and_cluster() {
        let c = seeded();
        let objs: Vec<PhotoObj> = (1..=5).map(|i| photo(i, 50.0 * i as f64, 1.0, flags::PRIMARY)).collect();
        assert_eq!(c.insert_batch(TableName::PhotoObj, rows::to_rows(&objs), c.tick()).unwrap(), 5);
        let s = c.snapshot();
        assert_eq!(s.row_count(TableName::PhotoObj), 5);
        assert_eq!(s.row_count(TableName::PhotoTag), 5);
        let htm = s.table(TableName::PhotoObj).ints("htmID");
        assert!(htm.windows(2).all(|w| w[0] <= w[1]));
        assert!(audit(&s, &[]).is_empty());
    }

    #[test]
    fn fk_violation_rejects_whole_batch() {
        let c = seeded();
        let line = rows::SpecLine { line_id: 1, spec_obj_id: 99, wavelength: 5000.0, ew: 1.0, height: 1.0 };
        let err = c.insert_batch(TableName::SpecLine, vec![line.to_values()], c.tick()).unwrap_err();
        match err {
            StoreError::Integrity(v) => {
                assert_eq!(v[0].column, "specObjID");
                assert_eq!(v[0].row, 1);
            }
            e => panic!("unexpected {e}"),
        }
        assert_eq!(c.snapshot().row_count(TableName::SpecLine), 0);
    }

    #[test]
    fn null_and_duplicate_rejected() {
        let c = seeded();
        let mut bad = photo(1, 1.0, 1.0, 0).to_values();
        bad[10] = Value::Null;
        assert!(matches!(c.insert_batch(TableName::PhotoObj, vec![bad], c.tick()), Err(StoreError::Integrity(_))));
        let dup = vec![photo(1, 1.0, 1.0, 0).to_values(), photo(1, 2.0, 1.0, 0).to_values()];
        assert!(matches!(c.insert_batch(TableName::PhotoObj, dup, c.tick()), Err(StoreError::Integrity(_))));
        assert!(matches!(c.insert_batch(TableName::PhotoTag, vec![], c.tick()), Err(StoreError::ReadOnly(_))));
    }

    #[test]
    fn primary_parent_rejected() {
        let c = seeded();
        let parent = photo(1, 1.0, 1.0, flags::PRIMARY);
        let child = PhotoObj { parent_id: 1, ..photo(2, 1.0001, 1.0, flags::CHILD) };
        let err = c.insert_batch(TableName::PhotoObj, rows::to_rows(&[parent, child]), c.tick());
        assert!(matches!(err, Err(StoreError::Integrity(_))));
    }

    #[test]
    fn delete_window_and_views() {
        let c = seeded();
        let a: Vec<PhotoObj> = (1..=4).map(|i| photo(i, i as f64, 2.0, flags::PRIMARY)).collect();
        let ta = c.tick();
        c.insert_batch(TableName::PhotoObj, rows::to_rows(&a), ta).unwrap();
        let after_a = c.snapshot().to_bytes();
        let b: Vec<PhotoObj> = (5..=7)
            .map(|i| PhotoObj { obj_type: ObjType::Star, ..photo(i, i as f64, 3.0, flags::PRIMARY) })
            .collect();
        let tb = c.tick();
        c.insert_batch(TableName::PhotoObj, rows::to_rows(&b), tb).unwrap();
        let s = c.snapshot();
        assert_eq!(s.full_scan("Stars", |_, _| {}).unwrap(), 3);
        assert_eq!(s.full_scan("PrimaryObjects", |_, _| {}).unwrap(), 7);
        assert!(s.full_scan("Nope", |_, _| {}).is_err());
        assert_eq!(c.delete_by_loadtime(TableName::PhotoObj, Timestamp(0), Timestamp(1)).unwrap(), 0);
        assert_eq!(c.delete_by_loadtime(TableName::PhotoObj, tb, tb).unwrap(), 3);
        assert_eq!(c.snapshot().to_bytes(), after_a);
    }

    #[test]
    fn resolve_views() {
        assert_eq!(resolve_view("Stars").unwrap(), (TableName::PhotoObj, ViewFilter::PrimaryOfType(ObjType::Star)));
        assert_eq!(resolve_view("PhotoObj").unwrap(), (TableName::PhotoObj, ViewFilter::All));
        assert!(matches!(resolve_view("bogus"), Err(StoreError::NotFound(_))));
    }

    #[test]
    fn dependency_protection() {
        let c = seeded();
        let ta = c.tick();
        c.insert_batch(TableName::PhotoObj, rows::to_rows(&[photo(1, 1.0, 1.0, 0), photo(2, 1.001, 1.0, 0)]), ta)
            .unwrap();
        let nb = [
            rows::Neighbor { obj_id: 1, neighbor_obj_id: 2, distance: 0.06 },
            rows::Neighbor { obj_id: 2, neighbor_obj_id: 1, distance: 0.06 },
        ];
        c.insert_batch(TableName::Neighbors, rows::to_rows(&nb), c.tick()).unwrap();
        let err = c.delete_window_checked(TableName::PhotoObj, ta, ta, 2).unwrap_err();
        assert!(matches!(err, StoreError::Dependency { .. }));
        assert!(matches!(
            c.delete_window_checked(TableName::Field, Timestamp(0), Timestamp(i64::MAX), 1),
            Err(StoreError::Dependency { .. })
        ));
    }

    #[test]
    fn snapshot_round_trip_and_corruption() {
        let empty = CatalogState::default();
        assert_eq!(CatalogState::from_bytes(&empty.to_bytes()).unwrap(), empty);
        let c = seeded();
        c.insert_batch(TableName::PhotoObj, rows::to_rows(&[photo(1, 10.0, 1.0, 1)]), c.tick()).unwrap();
        let bytes = c.snapshot().to_bytes();
        let back = CatalogState::from_bytes(&bytes).unwrap();
        assert_eq!(back, *c.snapshot());
        assert_eq!(back.to_bytes(), bytes);
        assert!(matches!(CatalogState::from_bytes(&bytes[..bytes.len() - 3]), Err(StoreError::Format(_))));
        let mut flipped = bytes.clone();
        flipped[40] ^= 1;
        assert!(matches!(CatalogState::from_bytes(&flipped), Err(StoreError::Format(_))));
        let mut v2 = bytes;
        v2[8] = 2;
        assert!(matches!(CatalogState::from_bytes(&v2), Err(StoreError::Format(_))));
    }
}
