//! Typed views of single rows, convertible to and from the columnar layout.

use super::schema::{flags, EnumKind, ObjType, SpecClass, TableName, MAG_COLUMNS, MAG_ERR_COLUMNS, PROFILE_COLUMNS};
use super::table::{Table, Value};
use crate::htm::{htm_lookup, EquatorialCoord, HtmError, MAX_DEPTH};

/// A row type with a fixed table. `to_values` yields every column except `loadTime`.
pub trait RowRecord {
    const TABLE: TableName;
    fn to_values(&self) -> Vec<Value>;
}

#[derive(Debug, Clone, PartialEq)]
pub struct PhotoObj {
    pub obj_id: i64,
    pub field_id: i64,
    pub ra: f64,
    pub dec: f64,
    pub cx: f64,
    pub cy: f64,
    pub cz: f64,
    pub htm_id: i64,
    pub obj_type: ObjType,
    pub flags: i64,
    pub status: i64,
    pub parent_id: i64,
    pub model_mag: [f64; 5],
    pub model_mag_err: [f64; 5],
    pub petro_rad_r: f64,
    pub profile: [f64; 8],
    pub spec_obj_id: i64,
}

impl PhotoObj {
    /// Fills the position-derived columns (unit vector, depth-20 htmID) from ra/dec.
    pub fn with_position(mut self, ra: f64, dec: f64) -> Result<Self, HtmError> {
        let c = EquatorialCoord::new(ra, dec)?;
        let v = c.to_unit();
        self.ra = c.ra();
        self.dec = c.dec();
        self.cx = v.x;
        self.cy = v.y;
        self.cz = v.z;
        self.htm_id = htm_lookup(v, MAX_DEPTH)?.id() as i64;
        Ok(self)
    }

    pub fn is_primary(&self) -> bool {
        self.flags & flags::PRIMARY != 0
    }

    pub fn from_table(t: &Table, row: usize) -> Self {
        debug_assert_eq!(t.name(), TableName::PhotoObj);
        let f = |name: &str| t.floats(name)[row];
        let i = |name: &str| t.ints(name)[row];
        let obj_type = match t.enums("objType")[row] {
            0 => ObjType::Star,
            1 => ObjType::Galaxy,
            2 => ObjType::Trail,
            3 => ObjType::Defect,
            _ => ObjType::Unknown,
        };
        PhotoObj {
            obj_id: i("objID"),
            field_id: i("fieldID"),
            ra: f("ra"),
            dec: f("dec"),
            cx: f("cx"),
            cy: f("cy"),
            cz: f("cz"),
            htm_id: i("htmID"),
            obj_type,
            flags: i("flags"),
            status: i("status"),
            parent_id: i("parentID"),
            model_mag: MAG_COLUMNS.map(f),
            model_mag_err: MAG_ERR_COLUMNS.map(f),
            petro_rad_r: f("petroRad_r"),
            profile: PROFILE_COLUMNS.map(f),
            spec_obj_id: i("specObjID"),
        }
    }
}

impl Default for PhotoObj {
    fn default() -> Self {
        PhotoObj {
            obj_id: 0,
            field_id: 0,
            ra: 0.0,
            dec: 0.0,
            cx: 1.0,
            cy: 0.0,
            cz: 0.0,
            htm_id: 0,
            obj_type: ObjType::Unknown,
            flags: 0,
            status: 0,
            parent_id: 0,
            model_mag: [20.0; 5],
            model_mag_err: [0.05; 5],
            petro_rad_r: 1.0,
            profile: [0.0; 8],
            spec_obj_id: 0,
        }
    }
}

impl RowRecord for PhotoObj {
    const TABLE: TableName = TableName::PhotoObj;

    fn to_values(&self) -> Vec<Value> {
        let mut v = vec![
            Value::Int(self.obj_id),
            Value::Int(self.field_id),
            Value::Float(self.ra),
            Value::Float(self.dec),
            Value::Float(self.cx),
            Value::Float(self.cy),
            Value::Float(self.cz),
            Value::Int(self.htm_id),
            Value::Enum(EnumKind::ObjType, self.obj_type.code()),
            Value::Int(self.flags),
            Value::Int(self.status),
            Value::Int(self.parent_id),
            Value::Bool(self.is_primary()),
        ];
        v.extend(self.model_mag.iter().map(|m| Value::Float(*m)));
        v.extend(self.model_mag_err.iter().map(|m| Value::Float(*m)));
        v.push(Value::Float(self.petro_rad_r));
        v.extend(self.profile.iter().map(|m| Value::Float(*m)));
        v.push(Value::Int(self.spec_obj_id));
        v
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Field {
    pub field_id: i64,
    pub run: i64,
    pub camcol: i64,
    pub field_num: i64,
    pub ra_min: f64,
    pub ra_max: f64,
    pub dec_min: f64,
    pub dec_max: f64,
}

impl RowRecord for Field {
    const TABLE: TableName = TableName::Field;

    fn to_values(&self) -> Vec<Value> {
        vec![
            Value::Int(self.field_id),
            Value::Int(self.run),
            Value::Int(self.camcol),
            Value::Int(self.field_num),
            Value::Float(self.ra_min),
            Value::Float(self.ra_max),
            Value::Float(self.dec_min),
            Value::Float(self.dec_max),
        ]
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Plate {
    pub plate_id: i64,
    pub ra: f64,
    pub dec: f64,
    pub mjd: i64,
}

impl RowRecord for Plate {
    const TABLE: TableName = TableName::Plate;

    fn to_values(&self) -> Vec<Value> {
        vec![Value::Int(self.plate_id), Value::Float(self.ra), Value::Float(self.dec), Value::Int(self.mjd)]
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SpecObj {
    pub spec_obj_id: i64,
    pub plate_id: i64,
    pub fiber_id: i64,
    pub ra: f64,
    pub dec: f64,
    pub z: f64,
    pub z_err: f64,
    pub spec_class: SpecClass,
}

impl RowRecord for SpecObj {
    const TABLE: TableName = TableName::SpecObj;

    fn to_values(&self) -> Vec<Value> {
        vec![
            Value::Int(self.spec_obj_id),
            Value::Int(self.plate_id),
            Value::Int(self.fiber_id),
            Value::Float(self.ra),
            Value::Float(self.dec),
            Value::Float(self.z),
            Value::Float(self.z_err),
            Value::Enum(EnumKind::SpecClass, self.spec_class.code()),
        ]
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SpecLine {
    pub line_id: i64,
    pub spec_obj_id: i64,
    pub wavelength: f64,
    pub ew: f64,
    pub height: f64,
}

impl RowRecord for SpecLine {
    const TABLE: TableName = TableName::SpecLine;

    fn to_values(&self) -> Vec<Value> {
        vec![
            Value::Int(self.line_id),
            Value::Int(self.spec_obj_id),
            Value::Float(self.wavelength),
            Value::Float(self.ew),
            Value::Float(self.height),
        ]
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SpecLineIndex {
    pub index_id: i64,
    pub spec_obj_id: i64,
    pub name: String,
    pub value: f64,
}

impl RowRecord for SpecLineIndex {
    const TABLE: TableName = TableName::SpecLineIndex;

    fn to_values(&self) -> Vec<Value> {
        vec![
            Value::Int(self.index_id),
            Value::Int(self.spec_obj_id),
            Value::Text(self.name.clone()),
            Value::Float(self.value),
        ]
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct XCRedshift {
    pub spec_obj_id: i64,
    pub z: f64,
    pub confidence: f64,
    pub template_name: String,
}

impl RowRecord for XCRedshift {
    const TABLE: TableName = TableName::XCRedshift;

    fn to_values(&self) -> Vec<Value> {
        vec![
            Value::Int(self.spec_obj_id),
            Value::Float(self.z),
            Value::Float(self.confidence),
            Value::Text(self.template_name.clone()),
        ]
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ElRedshift {
    pub spec_obj_id: i64,
    pub z: f64,
    pub n_lines: i64,
}

impl RowRecord for ElRedshift {
    const TABLE: TableName = TableName::ElRedshift;

    fn to_values(&self) -> Vec<Value> {
        vec![Value::Int(self.spec_obj_id), Value::Float(self.z), Value::Int(self.n_lines)]
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Neighbor {
    pub obj_id: i64,
    pub neighbor_obj_id: i64,
    /// Arcminutes.
    pub distance: f64,
}

impl RowRecord for Neighbor {
    const TABLE: TableName = TableName::Neighbors;

    fn to_values(&self) -> Vec<Value> {
        vec![Value::Int(self.obj_id), Value::Int(self.neighbor_obj_id), Value::Float(self.distance)]
    }
}

pub fn to_rows<R: RowRecord>(records: &[R]) -> Vec<Vec<Value>> {
    records.iter().map(RowRecord::to_values).collect()
}
