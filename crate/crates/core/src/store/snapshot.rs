//! Versioned binary snapshot format.
//!
//! ```text
//! magic      8 bytes  "SKYCATDB"
//! version    u32
//! tables     u32
//! per table:
//!   name     u16 length + UTF-8
//!   rows     u64
//!   columns  u32
//!   per column:
//!     name   u16 length + UTF-8
//!     type   u8   (0 int, 1 float, 2 bool, 3 text, 4 objtype, 5 specclass, 6 timestamp)
//!     bytes  u64 length of the block that follows
//!     block  little-endian values; text is u32 length + UTF-8 per row
//! checksum   u64  FNV-1a of every preceding byte
//! ```
//!
//! PhotoTag is derived and not stored. All integers are little-endian.

use std::collections::BTreeMap;
use std::sync::Arc;

use super::schema::{ColumnType, EnumKind, TableName};
use super::table::{ColumnData, Table};
use super::{CatalogState, StoreError};

pub const MAGIC: &[u8; 8] = b"SKYCATDB";
pub const VERSION: u32 = 1;

fn fnv1a(bytes: &[u8]) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in bytes {
        h ^= *b as u64;
        h = h.wrapping_mul(0x0100_0000_01b3);
    }
    h
}

fn type_tag(ty: ColumnType) -> u8 {
    match ty {
        ColumnType::Int => 0,
        ColumnType::Float => 1,
        ColumnType::Bool => 2,
        ColumnType::Text => 3,
        ColumnType::Enum(EnumKind::ObjType) => 4,
        ColumnType::Enum(EnumKind::SpecClass) => 5,
        ColumnType::Timestamp => 6,
    }
}

fn put_str(out: &mut Vec<u8>, s: &str) {
    out.extend_from_slice(&(s.len() as u16).to_le_bytes());
    out.extend_from_slice(s.as_bytes());
}

fn encode_column(c: &ColumnData) -> Vec<u8> {
    let mut b = Vec::new();
    match c {
        ColumnData::Int(v) | ColumnData::Timestamp(v) => v.iter().for_each(|x| b.extend_from_slice(&x.to_le_bytes())),
        ColumnData::Float(v) => v.iter().for_each(|x| b.extend_from_slice(&x.to_bits().to_le_bytes())),
        ColumnData::Bool(v) => b.extend(v.iter().map(|x| *x as u8)),
        ColumnData::Enum(_, v) => b.extend_from_slice(v),
        ColumnData::Text(v) => {
            for s in v {
                b.extend_from_slice(&(s.len() as u32).to_le_bytes());
                b.extend_from_slice(s.as_bytes());
            }
        }
    }
    b
}

pub(crate) fn encode(state: &CatalogState) -> Vec<u8> {
    let mut out = Vec::new();
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    let stored: Vec<TableName> = TableName::ALL.into_iter().filter(|t| !t.is_derived()).collect();
    out.extend_from_slice(&(stored.len() as u32).to_le_bytes());
    for name in stored {
        let t = state.table(name);
        put_str(&mut out, name.as_str());
        out.extend_from_slice(&(t.len() as u64).to_le_bytes());
        out.extend_from_slice(&(t.columns().len() as u32).to_le_bytes());
        for (def, col) in t.schema().columns.iter().zip(t.columns()) {
            put_str(&mut out, def.name);
            out.push(type_tag(def.ty));
            let block = encode_column(col);
            out.extend_from_slice(&(block.len() as u64).to_le_bytes());
            out.extend_from_slice(&block);
        }
    }
    let sum = fnv1a(&out);
    out.extend_from_slice(&sum.to_le_bytes());
    out
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8], StoreError> {
        let end = self.pos.checked_add(n).filter(|e| *e <= self.buf.len()).ok_or_else(|| {
            StoreError::Format(format!("truncated snapshot at byte {}", self.pos))
        })?;
        let s = &self.buf[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u16(&mut self) -> Result<u16, StoreError> {
        Ok(u16::from_le_bytes(self.take(2)?.try_into().unwrap()))
    }

    fn u32(&mut self) -> Result<u32, StoreError> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn u64(&mut self) -> Result<u64, StoreError> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn str(&mut self) -> Result<&'a str, StoreError> {
        let n = self.u16()? as usize;
        std::str::from_utf8(self.take(n)?).map_err(|_| StoreError::Format("invalid UTF-8 name".into()))
    }
}

fn decode_column(ty: ColumnType, rows: usize, block: &[u8]) -> Result<ColumnData, StoreError> {
    let fixed = |width: usize| -> Result<(), StoreError> {
        if block.len() != rows * width {
            return Err(StoreError::Format(format!("column block of {} bytes for {rows} rows", block.len())));
        }
        Ok(())
    };
    let words = || block.chunks_exact(8).map(|c| u64::from_le_bytes(c.try_into().unwrap()));
    Ok(match ty {
        ColumnType::Int => {
            fixed(8)?;
            ColumnData::Int(words().map(|w| w as i64).collect())
        }
        ColumnType::Timestamp => {
            fixed(8)?;
            ColumnData::Timestamp(words().map(|w| w as i64).collect())
        }
        ColumnType::Float => {
            fixed(8)?;
            ColumnData::Float(words().map(f64::from_bits).collect())
        }
        ColumnType::Bool => {
            fixed(1)?;
            ColumnData::Bool(block.iter().map(|b| *b != 0).collect())
        }
        ColumnType::Enum(k) => {
            fixed(1)?;
            ColumnData::Enum(k, block.to_vec())
        }
        ColumnType::Text => {
            let mut r = Reader { buf: block, pos: 0 };
            let mut v = Vec::with_capacity(rows);
            for _ in 0..rows {
                let n = r.u32()? as usize;
                let s = std::str::from_utf8(r.take(n)?).map_err(|_| StoreError::Format("invalid UTF-8 text".into()))?;
                v.push(s.to_string());
            }
            if r.pos != block.len() {
                return Err(StoreError::Format("trailing bytes in text column".into()));
            }
            ColumnData::Text(v)
        }
    })
}

pub(crate) fn decode(buf: &[u8]) -> Result<CatalogState, StoreError> {
    if buf.len() < MAGIC.len() + 4 + 8 || &buf[..8] != MAGIC {
        return Err(StoreError::Format("not a skycat snapshot".into()));
    }
    let (body, tail) = buf.split_at(buf.len() - 8);
    let mut r = Reader { buf: body, pos: 8 };
    let version = r.u32()?;
    if version != VERSION {
        return Err(StoreError::Format(format!("snapshot version {version}, expected {VERSION}")));
    }
    if fnv1a(body) != u64::from_le_bytes(tail.try_into().unwrap()) {
        return Err(StoreError::Format("snapshot checksum mismatch".into()));
    }
    let count = r.u32()?;
    let mut tables = BTreeMap::new();
    for _ in 0..count {
        let name: TableName = r.str()?.parse().map_err(|_| StoreError::Format("unknown table in snapshot".into()))?;
        if name.is_derived() || tables.contains_key(&name) {
            return Err(StoreError::Format(format!("unexpected table {name} in snapshot")));
        }
        let rows = r.u64()? as usize;
        let ncols = r.u32()? as usize;
        let schema = name.schema();
        if ncols != schema.columns.len() {
            return Err(StoreError::Format(format!("{name}: {ncols} columns, expected {}", schema.columns.len())));
        }
        let mut cols = Vec::with_capacity(ncols);
        for def in &schema.columns {
            let cname = r.str()?;
            let tag = r.take(1)?[0];
            if cname != def.name || tag != type_tag(def.ty) {
                return Err(StoreError::Format(format!("{name}: column {cname} does not match schema")));
            }
            let len = r.u64()? as usize;
            cols.push(decode_column(def.ty, rows, r.take(len)?)?);
        }
        tables.insert(name, Arc::new(Table::from_columns(name, cols)?));
    }
    if r.pos != body.len() {
        return Err(StoreError::Format("trailing bytes after tables".into()));
    }
    CatalogState::from_tables(tables)
}
