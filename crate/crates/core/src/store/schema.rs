use std::fmt;
use std::str::FromStr;
use std::sync::LazyLock;

use super::StoreError;

/// Photometric flag bits, as returned by `fPhotoFlags`.
pub mod flags {
    pub const PRIMARY: i64 = 0x1;
    pub const SECONDARY: i64 = 0x2;
    pub const SATURATED: i64 = 0x4;
    pub const BLENDED: i64 = 0x8;
    pub const CHILD: i64 = 0x10;
    pub const EDGE: i64 = 0x20;

    pub const NAMES: [(&str, i64); 6] = [
        ("primary", PRIMARY),
        ("secondary", SECONDARY),
        ("saturated", SATURATED),
        ("blended", BLENDED),
        ("child", CHILD),
        ("edge", EDGE),
    ];

    /// Case-insensitive flag lookup.
    pub fn by_name(name: &str) -> Option<i64> {
        NAMES.iter().find(|(n, _)| n.eq_ignore_ascii_case(name)).map(|(_, bit)| *bit)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum TableName {
    Field,
    Plate,
    SpecObj,
    PhotoObj,
    PhotoTag,
    SpecLine,
    SpecLineIndex,
    XCRedshift,
    ElRedshift,
    Neighbors,
}

impl TableName {
    pub const ALL: [TableName; 10] = [
        TableName::Field,
        TableName::Plate,
        TableName::SpecObj,
        TableName::PhotoObj,
        TableName::PhotoTag,
        TableName::SpecLine,
        TableName::SpecLineIndex,
        TableName::XCRedshift,
        TableName::ElRedshift,
        TableName::Neighbors,
    ];

    /// Loadable tables in foreign-key order.
    pub const LOAD_ORDER: [TableName; 9] = [
        TableName::Field,
        TableName::Plate,
        TableName::SpecObj,
        TableName::PhotoObj,
        TableName::SpecLine,
        TableName::SpecLineIndex,
        TableName::XCRedshift,
        TableName::ElRedshift,
        TableName::Neighbors,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            TableName::Field => "Field",
            TableName::Plate => "Plate",
            TableName::SpecObj => "SpecObj",
            TableName::PhotoObj => "PhotoObj",
            TableName::PhotoTag => "PhotoTag",
            TableName::SpecLine => "SpecLine",
            TableName::SpecLineIndex => "SpecLineIndex",
            TableName::XCRedshift => "XCRedshift",
            TableName::ElRedshift => "ElRedshift",
            TableName::Neighbors => "Neighbors",
        }
    }

    /// PhotoTag is maintained from PhotoObj and never written directly.
    pub fn is_derived(&self) -> bool {
        matches!(self, TableName::PhotoTag)
    }

    pub fn schema(&self) -> &'static TableSchema {
        &SCHEMAS[*self as usize]
    }
}

impl fmt::Display for TableName {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for TableName {
    type Err = StoreError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        TableName::ALL
            .iter()
            .find(|t| t.as_str().eq_ignore_ascii_case(s))
            .copied()
            .ok_or_else(|| StoreError::NotFound(format!("table '{s}'")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum EnumKind {
    ObjType,
    SpecClass,
}

impl EnumKind {
    pub fn names(&self) -> &'static [&'static str] {
        match self {
            EnumKind::ObjType => &["star", "galaxy", "trail", "defect", "unknown"],
            EnumKind::SpecClass => &["star", "galaxy", "qso", "unknown"],
        }
    }

    pub fn code(&self, name: &str) -> Option<u8> {
        self.names().iter().position(|n| n.eq_ignore_ascii_case(name)).map(|i| i as u8)
    }

    pub fn name(&self, code: u8) -> &'static str {
        self.names().get(code as usize).copied().unwrap_or("unknown")
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
#[repr(u8)]
pub enum ObjType {
    Star = 0,
    Galaxy = 1,
    Trail = 2,
    Defect = 3,
    Unknown = 4,
}

impl ObjType {
    pub fn code(self) -> u8 {
        self as u8
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
#[repr(u8)]
pub enum SpecClass {
    Star = 0,
    Galaxy = 1,
    Qso = 2,
    Unknown = 3,
}

impl SpecClass {
    pub fn code(self) -> u8 {
        self as u8
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ColumnType {
    Int,
    Float,
    Bool,
    Text,
    Enum(EnumKind),
    /// Microseconds since the Unix epoch.
    Timestamp,
}

impl ColumnType {
    pub fn is_numeric(&self) -> bool {
        matches!(self, ColumnType::Int | ColumnType::Float | ColumnType::Timestamp)
    }

    pub fn name(&self) -> &'static str {
        match self {
            ColumnType::Int => "int",
            ColumnType::Float => "float",
            ColumnType::Bool => "bool",
            ColumnType::Text => "text",
            ColumnType::Enum(EnumKind::ObjType) => "objtype",
            ColumnType::Enum(EnumKind::SpecClass) => "specclass",
            ColumnType::Timestamp => "timestamp",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ColumnDef {
    pub name: &'static str,
    pub ty: ColumnType,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ForeignKey {
    pub column: &'static str,
    pub references: TableName,
    /// `0` stands for "no reference".
    pub zero_is_none: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TableSchema {
    pub table: TableName,
    pub columns: Vec<ColumnDef>,
    pub primary_key: Option<&'static str>,
    pub foreign_keys: Vec<ForeignKey>,
}

impl TableSchema {
    pub fn column_index(&self, name: &str) -> Option<usize> {
        self.columns.iter().position(|c| c.name.eq_ignore_ascii_case(name))
    }

    /// Like `column_index`, also accepting the band aliases u, g, r, i, z for `modelMag_*`.
    pub fn resolve_column(&self, name: &str) -> Option<usize> {
        self.column_index(name).or_else(|| {
            let band = BANDS.iter().position(|b| b.eq_ignore_ascii_case(name))?;
            self.column_index(MAG_COLUMNS[band])
        })
    }

    pub fn column_names(&self) -> Vec<&'static str> {
        self.columns.iter().map(|c| c.name).collect()
    }

    /// Columns supplied by writers; every table ends with the defaulted `loadTime`.
    pub fn input_columns(&self) -> &[ColumnDef] {
        &self.columns[..self.columns.len() - 1]
    }

    pub fn load_time_index(&self) -> usize {
        self.columns.len() - 1
    }
}

pub const BANDS: [&str; 5] = ["u", "g", "r", "i", "z"];
pub const MAG_COLUMNS: [&str; 5] = ["modelMag_u", "modelMag_g", "modelMag_r", "modelMag_i", "modelMag_z"];
pub const MAG_ERR_COLUMNS: [&str; 5] =
    ["modelMagErr_u", "modelMagErr_g", "modelMagErr_r", "modelMagErr_i", "modelMagErr_z"];
pub const PROFILE_COLUMNS: [&str; 8] =
    ["profile_0", "profile_1", "profile_2", "profile_3", "profile_4", "profile_5", "profile_6", "profile_7"];

/// Columns of PhotoObj mirrored into PhotoTag.
pub const PHOTO_TAG_COLUMNS: [&str; 11] = [
    "objID", "htmID", "ra", "dec", "objType", "flags", "modelMag_u", "modelMag_g", "modelMag_r",
    "modelMag_i", "modelMag_z",
];

fn col(name: &'static str, ty: ColumnType) -> ColumnDef {
    ColumnDef { name, ty }
}

fn fk(column: &'static str, references: TableName, zero_is_none: bool) -> ForeignKey {
    ForeignKey { column, references, zero_is_none }
}

fn photo_obj_columns() -> Vec<ColumnDef> {
    use ColumnType::*;
    let mut c = vec![
        col("objID", Int),
        col("fieldID", Int),
        col("ra", Float),
        col("dec", Float),
        col("cx", Float),
        col("cy", Float),
        col("cz", Float),
        col("htmID", Int),
        col("objType", Enum(EnumKind::ObjType)),
        col("flags", Int),
        col("status", Int),
        col("parentID", Int),
        col("isPrimary", Bool),
    ];
    c.extend(MAG_COLUMNS.iter().map(|n| col(n, Float)));
    c.extend(MAG_ERR_COLUMNS.iter().map(|n| col(n, Float)));
    c.push(col("petroRad_r", Float));
    c.extend(PROFILE_COLUMNS.iter().map(|n| col(n, Float)));
    c.push(col("specObjID", Int));
    c.push(col("loadTime", Timestamp));
    c
}

static SCHEMAS: LazyLock<Vec<TableSchema>> = LazyLock::new(|| {
    use ColumnType::*;
    use TableName as T;
    let photo = photo_obj_columns();
    let tag: Vec<ColumnDef> = PHOTO_TAG_COLUMNS
        .iter()
        .map(|n| photo.iter().find(|c| c.name == *n).cloned().expect("tag column exists"))
        .chain([col("loadTime", Timestamp)])
        .collect();
    let schemas = vec![
        TableSchema {
            table: T::Field,
            columns: vec![
                col("fieldID", Int),
                col("run", Int),
                col("camcol", Int),
                col("fieldNum", Int),
                col("raMin", Float),
                col("raMax", Float),
                col("decMin", Float),
                col("decMax", Float),
                col("loadTime", Timestamp),
            ],
            primary_key: Some("fieldID"),
            foreign_keys: vec![],
        },
        TableSchema {
            table: T::Plate,
            columns: vec![
                col("plateID", Int),
                col("ra", Float),
                col("dec", Float),
                col("mjd", Int),
                col("loadTime", Timestamp),
            ],
            primary_key: Some("plateID"),
            foreign_keys: vec![],
        },
        TableSchema {
            table: T::SpecObj,
            columns: vec![
                col("specObjID", Int),
                col("plateID", Int),
                col("fiberID", Int),
                col("ra", Float),
                col("dec", Float),
                col("z", Float),
                col("zErr", Float),
                col("specClass", Enum(EnumKind::SpecClass)),
                col("loadTime", Timestamp),
            ],
            primary_key: Some("specObjID"),
            foreign_keys: vec![fk("plateID", T::Plate, false)],
        },
        TableSchema {
            table: T::PhotoObj,
            columns: photo,
            primary_key: Some("objID"),
            foreign_keys: vec![
                fk("fieldID", T::Field, false),
                fk("parentID", T::PhotoObj, true),
                fk("specObjID", T::SpecObj, true),
            ],
        },
        TableSchema { table: T::PhotoTag, columns: tag, primary_key: Some("objID"), foreign_keys: vec![] },
        TableSchema {
            table: T::SpecLine,
            columns: vec![
                col("lineID", Int),
                col("specObjID", Int),
                col("wavelength", Float),
                col("ew", Float),
                col("height", Float),
                col("loadTime", Timestamp),
            ],
            primary_key: Some("lineID"),
            foreign_keys: vec![fk("specObjID", T::SpecObj, false)],
        },
        TableSchema {
            table: T::SpecLineIndex,
            columns: vec![
                col("indexID", Int),
                col("specObjID", Int),
                col("name", Text),
                col("value", Float),
                col("loadTime", Timestamp),
            ],
            primary_key: Some("indexID"),
            foreign_keys: vec![fk("specObjID", T::SpecObj, false)],
        },
        TableSchema {
            table: T::XCRedshift,
            columns: vec![
                col("specObjID", Int),
                col("z", Float),
                col("confidence", Float),
                col("templateName", Text),
                col("loadTime", Timestamp),
            ],
            primary_key: Some("specObjID"),
            foreign_keys: vec![fk("specObjID", T::SpecObj, false)],
        },
        TableSchema {
            table: T::ElRedshift,
            columns: vec![
                col("specObjID", Int),
                col("z", Float),
                col("nLines", Int),
                col("loadTime", Timestamp),
            ],
            primary_key: Some("specObjID"),
            foreign_keys: vec![fk("specObjID", T::SpecObj, false)],
        },
        TableSchema {
            table: T::Neighbors,
            columns: vec![
                col("objID", Int),
                col("neighborObjID", Int),
                col("distance", Float),
                col("loadTime", Timestamp),
            ],
            primary_key: None,
            foreign_keys: vec![fk("objID", T::PhotoObj, false), fk("neighborObjID", T::PhotoObj, false)],
        },
    ];
    for (i, s) in schemas.iter().enumerate() {
        assert_eq!(s.table as usize, i, "schema table order");
    }
    schemas
});
