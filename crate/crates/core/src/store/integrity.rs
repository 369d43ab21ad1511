//! Row-level validation for incoming batches and whole-store audits.

use std::collections::{HashMap, HashSet};
use std::fmt;

use super::schema::{flags, TableName, TableSchema, MAG_ERR_COLUMNS};
use super::table::{Table, Value};
use super::CatalogState;
use crate::htm::{htm_lookup, EquatorialCoord, UnitVector, MAX_DEPTH};

const MAX_VIOLATIONS: usize = 1000;
const UNIT_TOL: f64 = 1e-9;

/// One integrity problem. `row` is 1-based within the batch or table.
#[derive(Debug, Clone, PartialEq, serde::Serialize)]
pub struct Violation {
    pub table: TableName,
    pub row: usize,
    pub column: String,
    pub message: String,
}

impl Violation {
    fn new(table: TableName, row: usize, column: &str, message: impl Into<String>) -> Self {
        Self { table, row, column: column.to_string(), message: message.into() }
    }
}

impl serde::Serialize for TableName {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(self.as_str())
    }
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} ROW {} COL {}: {}", self.table, self.row, self.column, self.message)
    }
}

struct RowView<'a> {
    schema: &'static TableSchema,
    values: &'a [Value],
}

impl RowView<'_> {
    fn get(&self, name: &str) -> &Value {
        let i = self.schema.columns.iter().position(|c| c.name == name).expect("known column");
        &self.values[i]
    }

    fn f(&self, name: &str) -> f64 {
        self.get(name).as_f64().unwrap_or(f64::NAN)
    }

    fn i(&self, name: &str) -> i64 {
        self.get(name).as_i64().unwrap_or(0)
    }
}

/// Type, null, and single-row invariant checks. `values` excludes `loadTime`.
fn check_row(table: TableName, values: &[Value]) -> Vec<(&'static str, String)> {
    let schema = table.schema();
    let mut out = Vec::new();
    let cols = schema.input_columns();
    if values.len() != cols.len() {
        out.push(("*", format!("expected {} values, got {}", cols.len(), values.len())));
        return out;
    }
    let mut typed_ok = true;
    for (v, c) in values.iter().zip(cols) {
        match v {
            Value::Null => {
                out.push((c.name, "null value".to_string()));
                typed_ok = false;
            }
            Value::Text(s) if s.is_empty() => {
                out.push((c.name, "null value (empty text)".to_string()));
            }
            Value::Float(x) if !x.is_finite() => {
                out.push((c.name, format!("non-finite value {x}")));
            }
            v if !v.matches_type(c.ty) => {
                out.push((c.name, format!("expected {}, got {v:?}", c.ty.name())));
                typed_ok = false;
            }
            _ => {}
        }
    }
    if !typed_ok {
        return out;
    }
    let r = RowView { schema, values };
    let coord = |ra_col: &'static str, dec_col: &'static str, out: &mut Vec<(&'static str, String)>| {
        let (ra, dec) = (r.f(ra_col), r.f(dec_col));
        if !(0.0..360.0).contains(&ra) {
            out.push((ra_col, format!("ra {ra} outside [0, 360)")));
        }
        if !(-90.0..=90.0).contains(&dec) {
            out.push((dec_col, format!("dec {dec} outside [-90, 90]")));
        }
    };
    match table {
        TableName::PhotoObj => {
            coord("ra", "dec", &mut out);
            let v = UnitVector::new_unchecked(r.f("cx"), r.f("cy"), r.f("cz"));
            if (v.norm() - 1.0).abs() > UNIT_TOL {
                out.push(("cx", format!("(cx, cy, cz) has norm {}", v.norm())));
            } else if let Ok(c) = EquatorialCoord::new(r.f("ra"), r.f("dec")) {
                let e = c.to_unit();
                if (e.x - v.x).abs() > UNIT_TOL || (e.y - v.y).abs() > UNIT_TOL || (e.z - v.z).abs() > UNIT_TOL {
                    out.push(("cx", "(cx, cy, cz) inconsistent with (ra, dec)".to_string()));
                }
                let htm = htm_lookup(e, MAX_DEPTH).map(|t| t.id() as i64).unwrap_or(-1);
                if htm != r.i("htmID") {
                    out.push(("htmID", format!("htmID {} should be {htm}", r.i("htmID"))));
                }
            }
            let primary = r.i("flags") & flags::PRIMARY != 0;
            if matches!(r.get("isPrimary"), Value::Bool(b) if *b != primary) {
                out.push(("isPrimary", "isPrimary disagrees with the PRIMARY flag".to_string()));
            }
            for c in MAG_ERR_COLUMNS {
                if r.f(c) < 0.0 {
                    out.push((c, "negative magnitude error".to_string()));
                }
            }
            if r.f("petroRad_r") < 0.0 {
                out.push(("petroRad_r", "negative extent".to_string()));
            }
            if r.i("parentID") == r.i("objID") {
                out.push(("parentID", "object is its own parent".to_string()));
            }
            if r.i("objID") <= 0 {
                out.push(("objID", "objID must be positive".to_string()));
            }
        }
        TableName::Field => {
            for c in ["raMin", "raMax"] {
                if !(0.0..=360.0).contains(&r.f(c)) {
                    out.push((c, format!("{} outside [0, 360]", r.f(c))));
                }
            }
            for c in ["decMin", "decMax"] {
                if !(-90.0..=90.0).contains(&r.f(c)) {
                    out.push((c, format!("{} outside [-90, 90]", r.f(c))));
                }
            }
            if r.f("decMin") > r.f("decMax") {
                out.push(("decMin", "decMin > decMax".to_string()));
            }
        }
        TableName::Plate => coord("ra", "dec", &mut out),
        TableName::SpecObj => {
            coord("ra", "dec", &mut out);
            if !(1..=640).contains(&r.i("fiberID")) {
                out.push(("fiberID", format!("fiberID {} outside 1..640", r.i("fiberID"))));
            }
            if r.f("zErr") < 0.0 {
                out.push(("zErr", "negative redshift error".to_string()));
            }
        }
        TableName::SpecLine => {
            if r.f("wavelength") <= 0.0 {
                out.push(("wavelength", "wavelength must be positive".to_string()));
            }
        }
        TableName::XCRedshift => {
            if !(0.0..=1.0).contains(&r.f("confidence")) {
                out.push(("confidence", "confidence outside [0, 1]".to_string()));
            }
        }
        TableName::ElRedshift => {
            if r.i("nLines") < 0 {
                out.push(("nLines", "negative line count".to_string()));
            }
        }
        TableName::Neighbors => {
            if r.i("objID") == r.i("neighborObjID") {
                out.push(("neighborObjID", "object listed as its own neighbor".to_string()));
            }
            let d = r.f("distance");
            if !(0.0..=super::NEIGHBOR_RADIUS_ARCMIN).contains(&d) {
                out.push(("distance", format!("distance {d} outside [0, 0.5] arcmin")));
            }
        }
        TableName::SpecLineIndex => {}
        TableName::PhotoTag => out.push(("*", "PhotoTag is derived and cannot be written".to_string())),
    }
    out
}

fn key_of(schema: &TableSchema, values: &[Value], col: &str) -> Option<i64> {
    schema.column_index(col).and_then(|i| values.get(i)).and_then(Value::as_i64)
}

/// Validates a batch against the current state. Empty result means it may be applied.
pub(crate) fn validate_batch(state: &CatalogState, table: TableName, rows: &[Vec<Value>]) -> Vec<Violation> {
    let schema = table.schema();
    let existing = state.table(table);
    let mut out = Vec::new();
    let push = |out: &mut Vec<Violation>, v: Violation| {
        if out.len() < MAX_VIOLATIONS {
            out.push(v);
        }
    };
    let mut batch_keys: HashMap<i64, usize> = HashMap::new();
    for (i, row) in rows.iter().enumerate() {
        let n = i + 1;
        for (col, msg) in check_row(table, row) {
            push(&mut out, Violation::new(table, n, col, msg));
        }
        if let Some(pk) = schema.primary_key {
            if let Some(k) = key_of(schema, row, pk) {
                if existing.contains_key(k) || batch_keys.insert(k, i).is_some() {
                    push(&mut out, Violation::new(table, n, pk, format!("duplicate primary key {k}")));
                }
            }
        }
    }
    for (i, row) in rows.iter().enumerate() {
        for fk in &schema.foreign_keys {
            let Some(k) = key_of(schema, row, fk.column) else { continue };
            if fk.zero_is_none && k == 0 {
                continue;
            }
            let found = state.table(fk.references).contains_key(k)
                || (fk.references == table && batch_keys.contains_key(&k));
            if !found {
                push(
                    &mut out,
                    Violation::new(table, i + 1, fk.column, format!("foreign key {k} not found in {}", fk.references)),
                );
            }
        }
    }
    if table == TableName::PhotoObj {
        let flag_of = |k: i64| -> Option<i64> {
            if let Some(&j) = batch_keys.get(&k) {
                return key_of(schema, &rows[j], "flags");
            }
            existing.find(k).map(|r| existing.ints("flags")[r])
        };
        for (i, row) in rows.iter().enumerate() {
            let parent = key_of(schema, row, "parentID").unwrap_or(0);
            if parent != 0 && flag_of(parent).is_some_and(|f| f & flags::PRIMARY != 0) {
                push(&mut out, Violation::new(table, i + 1, "parentID", format!("deblended parent {parent} is primary")));
            }
        }
    }
    out
}

/// Full consistency audit of a store snapshot.
///
/// `duplicate_groups` lists objIDs that are instances of one physical source;
/// each group may hold at most one primary.
pub fn audit(state: &CatalogState, duplicate_groups: &[Vec<i64>]) -> Vec<Violation> {
    let mut out = Vec::new();
    let mut push = |v: Violation| {
        if out.len() < MAX_VIOLATIONS {
            out.push(v);
        }
    };
    for name in TableName::ALL {
        let t = state.table(name);
        let schema = t.schema();
        if name != TableName::PhotoTag {
            let n_in = schema.input_columns().len();
            for r in 0..t.len() {
                let row = t.row(r);
                for (col, msg) in check_row(name, &row[..n_in]) {
                    push(Violation::new(name, r + 1, col, msg));
                }
            }
        }
        if let Some(pk) = schema.primary_key {
            let keys = t.ints(pk);
            let distinct: HashSet<&i64> = keys.iter().collect();
            if distinct.len() != keys.len() {
                push(Violation::new(name, 0, pk, format!("{} duplicate keys", keys.len() - distinct.len())));
            }
        }
        for fk in &schema.foreign_keys {
            let target = state.table(fk.references);
            for (r, k) in t.ints(fk.column).iter().enumerate() {
                if !(fk.zero_is_none && *k == 0) && !target.contains_key(*k) {
                    push(Violation::new(name, r + 1, fk.column, format!("dangling reference {k} to {}", fk.references)));
                }
            }
        }
    }

    let photo = state.table(TableName::PhotoObj);
    let htm = photo.ints("htmID");
    let ids = photo.ints("objID");
    for r in 1..photo.len() {
        if (htm[r - 1], ids[r - 1]) > (htm[r], ids[r]) {
            push(Violation::new(TableName::PhotoObj, r + 1, "htmID", "clustering order broken"));
        }
    }
    let fl = photo.ints("flags");
    for p in photo.ints("parentID") {
        if *p != 0 {
            if let Some(pr) = photo.find(*p) {
                if fl[pr] & flags::PRIMARY != 0 {
                    push(Violation::new(TableName::PhotoObj, pr + 1, "flags", format!("deblended parent {p} is primary")));
                }
            }
        }
    }
    for (g, group) in duplicate_groups.iter().enumerate() {
        let primaries = group
            .iter()
            .filter_map(|id| photo.find(*id))
            .filter(|&r| fl[r] & flags::PRIMARY != 0)
            .count();
        if primaries > 1 {
            push(Violation::new(TableName::PhotoObj, 0, "flags", format!("duplicate group {g} has {primaries} primaries")));
        }
    }

    let tag = state.table(TableName::PhotoTag);
    if *tag != Table::photo_tag_of(photo) {
        push(Violation::new(TableName::PhotoTag, 0, "*", "PhotoTag differs from the PhotoObj projection"));
    }

    let nb = state.table(TableName::Neighbors);
    let (a, b, d) = (nb.ints("objID"), nb.ints("neighborObjID"), nb.floats("distance"));
    let pairs: HashMap<(i64, i64), f64> = (0..nb.len()).map(|r| ((a[r], b[r]), d[r])).collect();
    if pairs.len() != nb.len() {
        push(Violation::new(TableName::Neighbors, 0, "objID", "duplicate neighbor pairs"));
    }
    for r in 0..nb.len() {
        match pairs.get(&(b[r], a[r])) {
            Some(back) if back.to_bits() == d[r].to_bits() => {}
            Some(_) => push(Violation::new(TableName::Neighbors, r + 1, "distance", "asymmetric distance")),
            None => push(Violation::new(TableName::Neighbors, r + 1, "neighborObjID", "missing reverse pair")),
        }
    }
    out
}
