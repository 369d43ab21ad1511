use std::collections::HashMap;
use std::fmt;

use chrono::{DateTime, SecondsFormat, Utc};

use super::schema::{ColumnType, EnumKind, TableName, TableSchema};
use super::StoreError;

/// Insertion timestamp, microseconds since the Unix epoch.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Default)]
pub struct Timestamp(pub i64);

impl Timestamp {
    pub fn micros(&self) -> i64 {
        self.0
    }

    pub fn parse_iso(s: &str) -> Option<Self> {
        DateTime::parse_from_rfc3339(s.trim()).ok().map(|t| Timestamp(t.timestamp_micros()))
    }
}

impl fmt::Display for Timestamp {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match DateTime::<Utc>::from_timestamp_micros(self.0) {
            Some(t) => f.write_str(&t.to_rfc3339_opts(SecondsFormat::Micros, true)),
            None => write!(f, "{}us", self.0),
        }
    }
}

impl serde::Serialize for Timestamp {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&self.to_string())
    }
}

impl<'de> serde::Deserialize<'de> for Timestamp {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        Timestamp::parse_iso(&s).ok_or_else(|| serde::de::Error::custom(format!("bad timestamp '{s}'")))
    }
}

/// A single cell value.
#[derive(Debug, Clone, PartialEq)]
pub enum Value {
    Null,
    Int(i64),
    Float(f64),
    Bool(bool),
    Text(String),
    Enum(EnumKind, u8),
    Timestamp(Timestamp),
}

impl Value {
    pub fn as_i64(&self) -> Option<i64> {
        match self {
            Value::Int(v) => Some(*v),
            Value::Timestamp(t) => Some(t.0),
            _ => None,
        }
    }

    pub fn as_f64(&self) -> Option<f64> {
        match self {
            Value::Float(v) => Some(*v),
            Value::Int(v) => Some(*v as f64),
            _ => None,
        }
    }

    pub fn is_null(&self) -> bool {
        matches!(self, Value::Null)
    }

    pub fn matches_type(&self, ty: ColumnType) -> bool {
        matches!(
            (self, ty),
            (Value::Int(_), ColumnType::Int)
                | (Value::Float(_), ColumnType::Float)
                | (Value::Bool(_), ColumnType::Bool)
                | (Value::Text(_), ColumnType::Text)
                | (Value::Timestamp(_), ColumnType::Timestamp)
        ) || matches!((self, ty), (Value::Enum(k, _), ColumnType::Enum(kk)) if *k == kk)
    }
}

impl fmt::Display for Value {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Value::Null => f.write_str("NULL"),
            Value::Int(v) => write!(f, "{v}"),
            Value::Float(v) => write!(f, "{v}"),
            Value::Bool(v) => write!(f, "{v}"),
            Value::Text(v) => f.write_str(v),
            Value::Enum(k, c) => f.write_str(k.name(*c)),
            Value::Timestamp(t) => write!(f, "{t}"),
        }
    }
}

/// Enums serialize by name and timestamps as RFC 3339 text.
impl serde::Serialize for Value {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        match self {
            Value::Null => s.serialize_none(),
            Value::Int(v) => s.serialize_i64(*v),
            Value::Float(v) => s.serialize_f64(*v),
            Value::Bool(v) => s.serialize_bool(*v),
            Value::Text(v) => s.serialize_str(v),
            Value::Enum(k, c) => s.serialize_str(k.name(*c)),
            Value::Timestamp(t) => t.serialize(s),
        }
    }
}

/// Storage for one column.
#[derive(Debug, Clone, PartialEq)]
pub enum ColumnData {
    Int(Vec<i64>),
    Float(Vec<f64>),
    Bool(Vec<bool>),
    Text(Vec<String>),
    Enum(EnumKind, Vec<u8>),
    Timestamp(Vec<i64>),
}

impl ColumnData {
    pub fn empty(ty: ColumnType) -> Self {
        match ty {
            ColumnType::Int => ColumnData::Int(Vec::new()),
            ColumnType::Float => ColumnData::Float(Vec::new()),
            ColumnType::Bool => ColumnData::Bool(Vec::new()),
            ColumnType::Text => ColumnData::Text(Vec::new()),
            ColumnType::Enum(k) => ColumnData::Enum(k, Vec::new()),
            ColumnType::Timestamp => ColumnData::Timestamp(Vec::new()),
        }
    }

    pub fn len(&self) -> usize {
        match self {
            ColumnData::Int(v) | ColumnData::Timestamp(v) => v.len(),
            ColumnData::Float(v) => v.len(),
            ColumnData::Bool(v) => v.len(),
            ColumnData::Text(v) => v.len(),
            ColumnData::Enum(_, v) => v.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn get(&self, row: usize) -> Value {
        match self {
            ColumnData::Int(v) => Value::Int(v[row]),
            ColumnData::Float(v) => Value::Float(v[row]),
            ColumnData::Bool(v) => Value::Bool(v[row]),
            ColumnData::Text(v) => Value::Text(v[row].clone()),
            ColumnData::Enum(k, v) => Value::Enum(*k, v[row]),
            ColumnData::Timestamp(v) => Value::Timestamp(Timestamp(v[row])),
        }
    }

    /// Appends a value already checked against the column type.
    fn push(&mut self, value: Value) {
        match (self, value) {
            (ColumnData::Int(v), Value::Int(x)) => v.push(x),
            (ColumnData::Float(v), Value::Float(x)) => v.push(x),
            (ColumnData::Bool(v), Value::Bool(x)) => v.push(x),
            (ColumnData::Text(v), Value::Text(x)) => v.push(x),
            (ColumnData::Enum(_, v), Value::Enum(_, x)) => v.push(x),
            (ColumnData::Timestamp(v), Value::Timestamp(x)) => v.push(x.0),
            (c, v) => panic!("type mismatch pushing {v:?} into {:?} column", c.column_type()),
        }
    }

    pub fn column_type(&self) -> ColumnType {
        match self {
            ColumnData::Int(_) => ColumnType::Int,
            ColumnData::Float(_) => ColumnType::Float,
            ColumnData::Bool(_) => ColumnType::Bool,
            ColumnData::Text(_) => ColumnType::Text,
            ColumnData::Enum(k, _) => ColumnType::Enum(*k),
            ColumnData::Timestamp(_) => ColumnType::Timestamp,
        }
    }

    fn retain_mask(&mut self, keep: &[bool]) {
        fn apply<T>(v: &mut Vec<T>, keep: &[bool]) {
            let mut i = 0;
            v.retain(|_| {
                let k = keep[i];
                i += 1;
                k
            });
        }
        match self {
            ColumnData::Int(v) | ColumnData::Timestamp(v) => apply(v, keep),
            ColumnData::Float(v) => apply(v, keep),
            ColumnData::Bool(v) => apply(v, keep),
            ColumnData::Text(v) => apply(v, keep),
            ColumnData::Enum(_, v) => apply(v, keep),
        }
    }

    fn permute(&mut self, order: &[usize]) {
        fn apply<T: Clone>(v: &mut Vec<T>, order: &[usize]) {
            *v = order.iter().map(|&i| v[i].clone()).collect();
        }
        match self {
            ColumnData::Int(v) | ColumnData::Timestamp(v) => apply(v, order),
            ColumnData::Float(v) => apply(v, order),
            ColumnData::Bool(v) => apply(v, order),
            ColumnData::Text(v) => apply(v, order),
            ColumnData::Enum(_, v) => apply(v, order),
        }
    }
}

/// Columnar table. PhotoObj is kept sorted by `(htmID, objID)`; other tables
/// keep insertion order.
#[derive(Debug, Clone)]
pub struct Table {
    schema: &'static TableSchema,
    columns: Vec<ColumnData>,
    pk_index: HashMap<i64, usize>,
}

impl PartialEq for Table {
    fn eq(&self, other: &Self) -> bool {
        self.schema.table == other.schema.table && self.columns == other.columns
    }
}

impl Table {
    pub fn new(table: TableName) -> Self {
        let schema = table.schema();
        Self {
            schema,
            columns: schema.columns.iter().map(|c| ColumnData::empty(c.ty)).collect(),
            pk_index: HashMap::new(),
        }
    }

    pub(crate) fn from_columns(
        table: TableName,
        columns: Vec<ColumnData>,
    ) -> Result<Self, StoreError> {
        let schema = table.schema();
        if columns.len() != schema.columns.len() {
            return Err(StoreError::Format(format!("{table}: column count mismatch")));
        }
        let n = columns.first().map_or(0, ColumnData::len);
        for (c, def) in columns.iter().zip(&schema.columns) {
            if c.column_type() != def.ty || c.len() != n {
                return Err(StoreError::Format(format!("{table}.{}: bad column block", def.name)));
            }
        }
        let mut t = Self { schema, columns, pk_index: HashMap::new() };
        t.rebuild_index();
        Ok(t)
    }

    pub fn name(&self) -> TableName {
        self.schema.table
    }

    pub fn schema(&self) -> &'static TableSchema {
        self.schema
    }

    pub fn len(&self) -> usize {
        self.columns.first().map_or(0, ColumnData::len)
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn columns(&self) -> &[ColumnData] {
        &self.columns
    }

    pub fn column(&self, idx: usize) -> &ColumnData {
        &self.columns[idx]
    }

    pub fn column_by_name(&self, name: &str) -> Option<&ColumnData> {
        self.schema.column_index(name).map(|i| &self.columns[i])
    }

    pub fn ints(&self, name: &str) -> &[i64] {
        match self.column_by_name(name) {
            Some(ColumnData::Int(v)) | Some(ColumnData::Timestamp(v)) => v,
            _ => panic!("{}.{name} is not an integer column", self.name()),
        }
    }

    pub fn floats(&self, name: &str) -> &[f64] {
        match self.column_by_name(name) {
            Some(ColumnData::Float(v)) => v,
            _ => panic!("{}.{name} is not a float column", self.name()),
        }
    }

    pub fn enums(&self, name: &str) -> &[u8] {
        match self.column_by_name(name) {
            Some(ColumnData::Enum(_, v)) => v,
            _ => panic!("{}.{name} is not an enum column", self.name()),
        }
    }

    pub fn load_times(&self) -> &[i64] {
        match &self.columns[self.schema.load_time_index()] {
            ColumnData::Timestamp(v) => v,
            _ => unreachable!("loadTime is a timestamp column"),
        }
    }

    pub fn get(&self, row: usize, col: usize) -> Value {
        self.columns[col].get(row)
    }

    pub fn row(&self, row: usize) -> Vec<Value> {
        self.columns.iter().map(|c| c.get(row)).collect()
    }

    /// Row position of a primary-key value.
    pub fn find(&self, key: i64) -> Option<usize> {
        self.pk_index.get(&key).copied()
    }

    pub fn contains_key(&self, key: i64) -> bool {
        self.pk_index.contains_key(&key)
    }

    pub(crate) fn append(&mut self, rows: Vec<Vec<Value>>) {
        for row in rows {
            debug_assert_eq!(row.len(), self.columns.len());
            for (c, v) in self.columns.iter_mut().zip(row) {
                c.push(v);
            }
        }
    }

    pub(crate) fn retain(&mut self, keep: &[bool]) {
        for c in &mut self.columns {
            c.retain_mask(keep);
        }
    }

    /// Restores the `(htmID, objID)` clustering of PhotoObj.
    pub(crate) fn cluster(&mut self) {
        if self.name() != TableName::PhotoObj {
            return;
        }
        let htm = self.ints("htmID");
        let ids = self.ints("objID");
        if htm.windows(2).zip(ids.windows(2)).all(|(h, i)| (h[0], i[0]) <= (h[1], i[1])) {
            return;
        }
        let mut order: Vec<usize> = (0..self.len()).collect();
        order.sort_unstable_by_key(|&i| (htm[i], ids[i]));
        for c in &mut self.columns {
            c.permute(&order);
        }
    }

    pub(crate) fn rebuild_index(&mut self) {
        self.pk_index.clear();
        if let Some(pk) = self.schema.primary_key {
            let idx = self.schema.column_index(pk).expect("pk column exists");
            if let ColumnData::Int(keys) = &self.columns[idx] {
                self.pk_index = keys.iter().enumerate().map(|(i, k)| (*k, i)).collect();
            }
        }
    }

    /// PhotoTag projection of a PhotoObj table.
    pub(crate) fn photo_tag_of(photo: &Table) -> Table {
        let tag_schema = TableName::PhotoTag.schema();
        let columns = tag_schema
            .columns
            .iter()
            .map(|c| {
                let i = photo.schema.column_index(c.name).expect("tag column in PhotoObj");
                photo.columns[i].clone()
            })
            .collect();
        let mut t = Table { schema: tag_schema, columns, pk_index: HashMap::new() };
        t.rebuild_index();
        t
    }
}
