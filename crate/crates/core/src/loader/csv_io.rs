//! CSV dialect: comma separated, double-quote quoting, header line, UTF-8,
//! RFC 3339 timestamps. An empty field or `NULL` is a null.

use std::io::{Read, Write};

use crate::htm::{htm_lookup, EquatorialCoord, MAX_DEPTH};
use crate::store::schema::ColumnDef;
use crate::store::{flags, ColumnType, TableName, Timestamp, Value};

/// One parse diagnostic; `row` is the 1-based data record (0 for the header).
#[derive(Debug, Clone, PartialEq)]
pub struct ParseIssue {
    pub row: usize,
    pub column: String,
    pub message: String,
}

pub struct Parsed {
    pub rows: Vec<Vec<Value>>,
    pub source_rows: usize,
    pub issues: Vec<ParseIssue>,
}

const DERIVED_POSITION: [&str; 4] = ["cx", "cy", "cz", "htmID"];

/// Columns a CSV file carries for `table`: every stored column except
/// `loadTime` and the derived `isPrimary`.
pub fn csv_columns(table: TableName) -> Vec<&'static ColumnDef> {
    table.schema().input_columns().iter().filter(|c| c.name != "isPrimary").collect()
}

/// The PhotoObj header without the position-derived columns.
pub fn reduced_columns(table: TableName) -> Vec<&'static ColumnDef> {
    csv_columns(table).into_iter().filter(|c| !DERIVED_POSITION.contains(&c.name)).collect()
}

fn is_null(s: &str) -> bool {
    s.is_empty() || s.eq_ignore_ascii_case("null")
}

fn convert(text: &str, ty: ColumnType) -> Result<Value, String> {
    if is_null(text) {
        return Ok(Value::Null);
    }
    let t = text.trim();
    match ty {
        ColumnType::Int => t.parse().map(Value::Int).map_err(|_| format!("'{text}' is not an integer")),
        ColumnType::Float => t.parse().map(Value::Float).map_err(|_| format!("'{text}' is not a number")),
        ColumnType::Bool => match t.to_ascii_lowercase().as_str() {
            "true" | "1" => Ok(Value::Bool(true)),
            "false" | "0" => Ok(Value::Bool(false)),
            _ => Err(format!("'{text}' is not a boolean")),
        },
        ColumnType::Text => Ok(Value::Text(text.to_string())),
        ColumnType::Enum(k) => k
            .code(t)
            .map(|c| Value::Enum(k, c))
            .ok_or_else(|| format!("'{text}' is not one of: {}", k.names().join(", "))),
        ColumnType::Timestamp => {
            Timestamp::parse_iso(t).map(Value::Timestamp).ok_or_else(|| format!("'{text}' is not an RFC 3339 timestamp"))
        }
    }
}

/// Fills `isPrimary` and the position-derived PhotoObj columns. `htmID` is
/// always recomputed; `cx, cy, cz` only when the file did not carry them.
fn derive_photo(table: TableName, row: &mut [Value], had_vectors: bool) {
    let schema = table.schema();
    let idx = |n: &str| schema.column_index(n).expect("PhotoObj column");
    let flags_v = row[idx("flags")].as_i64();
    row[idx("isPrimary")] = match flags_v {
        Some(f) => Value::Bool(f & flags::PRIMARY != 0),
        None => Value::Null,
    };
    let pos = match (row[idx("ra")].as_f64(), row[idx("dec")].as_f64()) {
        (Some(ra), Some(dec)) => EquatorialCoord::new(ra, dec).ok(),
        _ => None,
    };
    let Some(c) = pos else {
        if !had_vectors {
            for n in ["cx", "cy", "cz"] {
                row[idx(n)] = Value::Float(f64::NAN);
            }
        }
        row[idx("htmID")] = Value::Int(0);
        return;
    };
    let v = c.to_unit();
    if !had_vectors {
        row[idx("cx")] = Value::Float(v.x);
        row[idx("cy")] = Value::Float(v.y);
        row[idx("cz")] = Value::Float(v.z);
    }
    row[idx("htmID")] = Value::Int(htm_lookup(v, MAX_DEPTH).map(|t| t.id() as i64).unwrap_or(0));
}

/// Parses and type-converts a CSV stream into full input rows (no `loadTime`).
pub fn parse_csv(table: TableName, input: impl Read) -> Result<Parsed, csv::Error> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).flexible(true).from_reader(input);
    let header: Vec<String> = rdr.headers()?.iter().map(|h| h.trim().to_string()).collect();
    let full = csv_columns(table);
    let reduced = reduced_columns(table);
    let matches = |cols: &[&ColumnDef]| cols.len() == header.len() && cols.iter().zip(&header).all(|(c, h)| c.name == h);
    let mut issues = Vec::new();
    let (cols, had_vectors) = if matches(&full) {
        (full, true)
    } else if table == TableName::PhotoObj && matches(&reduced) {
        (reduced, false)
    } else {
        let want: Vec<&str> = full.iter().map(|c| c.name).collect();
        let pos = header.iter().zip(&want).position(|(h, w)| h != w).unwrap_or(want.len().min(header.len()));
        let col = header.get(pos).cloned().unwrap_or_else(|| "<missing>".into());
        issues.push(ParseIssue {
            row: 0,
            column: col,
            message: format!("header does not match {table}; expected: {}", want.join(",")),
        });
        let source_rows = rdr.records().count();
        return Ok(Parsed { rows: Vec::new(), source_rows, issues });
    };
    let schema = table.schema();
    let n_in = schema.input_columns().len();
    let mut rows = Vec::new();
    let mut source_rows = 0;
    for rec in rdr.records() {
        let rec = rec?;
        source_rows += 1;
        if rec.len() != cols.len() {
            issues.push(ParseIssue {
                row: source_rows,
                column: "*".into(),
                message: format!("expected {} fields, found {}", cols.len(), rec.len()),
            });
            continue;
        }
        let mut row = vec![Value::Null; n_in];
        let mut ok = true;
        for (field, def) in rec.iter().zip(&cols) {
            match convert(field, def.ty) {
                Ok(v) => row[schema.column_index(def.name).expect("schema column")] = v,
                Err(message) => {
                    ok = false;
                    issues.push(ParseIssue { row: source_rows, column: def.name.to_string(), message });
                }
            }
        }
        if !ok {
            continue;
        }
        if table == TableName::PhotoObj {
            derive_photo(table, &mut row, had_vectors);
        }
        rows.push(row);
    }
    Ok(Parsed { rows, source_rows, issues })
}

fn render(v: &Value) -> String {
    match v {
        Value::Null => String::new(),
        other => other.to_string(),
    }
}

/// Writes rows (full input form, no `loadTime`) using `cols` as the header.
pub fn write_csv(out: impl Write, table: TableName, cols: &[&ColumnDef], rows: &[Vec<Value>]) -> Result<(), csv::Error> {
    let schema = table.schema();
    let idx: Vec<usize> = cols.iter().map(|c| schema.column_index(c.name).expect("schema column")).collect();
    let mut w = csv::WriterBuilder::new().from_writer(out);
    w.write_record(cols.iter().map(|c| c.name))?;
    for row in rows {
        w.write_record(idx.iter().map(|i| render(&row[*i])))?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::store::rows::{PhotoObj, RowRecord};

    #[test]
    fn photo_round_trip_reduced_header() {
        let p = PhotoObj { obj_id: 7, field_id: 1, flags: 1, ..Default::default() }.with_position(12.25, -3.5).unwrap();
        let mut buf = Vec::new();
        write_csv(&mut buf, TableName::PhotoObj, &reduced_columns(TableName::PhotoObj), &[p.to_values()]).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.starts_with("objID,fieldID,ra,dec,objType,flags"));
        let parsed = parse_csv(TableName::PhotoObj, buf.as_slice()).unwrap();
        assert!(parsed.issues.is_empty());
        assert_eq!(parsed.rows, vec![p.to_values()]);
    }

    #[test]
    fn full_header_recomputes_htm() {
        let mut v = PhotoObj { obj_id: 7, field_id: 1, ..Default::default() }.with_position(40.0, 10.0).unwrap().to_values();
        let good = v.clone();
        v[7] = Value::Int(12345);
        let mut buf = Vec::new();
        write_csv(&mut buf, TableName::PhotoObj, &csv_columns(TableName::PhotoObj), &[v]).unwrap();
        let parsed = parse_csv(TableName::PhotoObj, buf.as_slice()).unwrap();
        assert_eq!(parsed.rows, vec![good]);
    }

    #[test]
    fn diagnostics_cite_row_and_column() {
        let csv = "plateID,ra,dec,mjd\n1,10,20,51000\n2,abc,20,51000\n3,10,20,\n";
        let p = parse_csv(TableName::Plate, csv.as_bytes()).unwrap();
        assert_eq!(p.source_rows, 3);
        assert_eq!(p.issues, vec![ParseIssue { row: 2, column: "ra".into(), message: "'abc' is not a number".into() }]);
        assert_eq!(p.rows.len(), 2);
        assert_eq!(p.rows[1][3], Value::Null);
        let bad = parse_csv(TableName::Plate, "plateID,dec,ra,mjd\n".as_bytes()).unwrap();
        assert_eq!(bad.issues[0].row, 0);
        assert_eq!(bad.issues[0].column, "dec");
        let short = parse_csv(TableName::Plate, "plateID,ra,dec,mjd\n1,2\n".as_bytes()).unwrap();
        assert_eq!(short.issues[0].column, "*");
    }
}
