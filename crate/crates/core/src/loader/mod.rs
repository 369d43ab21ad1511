//! Bulk ingestion: validated CSV loads recorded in a load-events ledger,
//! timestamp-window undo, and the synthetic catalog generator.

mod csv_io;
pub mod generator;

use std::collections::HashSet;
use std::fmt;
use std::fs::File;
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::sync::Arc;

use parking_lot::Mutex;
use serde::{Deserialize, Serialize};

pub use csv_io::{csv_columns, parse_csv, reduced_columns, write_csv, ParseIssue};
pub use generator::{generate, generate_synthetic, GeneratedCatalog, GeneratorSpec, Manifest};

use crate::query::{neighbors_of_state, QueryError};
use crate::store::rows;
use crate::store::{Catalog, StoreError, TableName, Timestamp, Value};

pub const SNAPSHOT_FILE: &str = "catalog.skycat";
pub const LEDGER_FILE: &str = "ledger.json";

#[derive(Debug, thiserror::Error)]
pub enum LoaderError {
    #[error("a load into {0} is already in progress")]
    Busy(TableName),
    #[error("unknown load event {0}")]
    UnknownEvent(u64),
    #[error("load event {0} is already undone")]
    AlreadyUndone(u64),
    #[error("load event {0} failed and has nothing to undo")]
    NotUndoable(u64),
    #[error("cannot undo event {event}: {reason}")]
    Dependency { event: u64, reason: StoreError },
    #[error("invalid generator spec: {0}")]
    Spec(String),
    #[error(transparent)]
    Store(#[from] StoreError),
    #[error(transparent)]
    Query(#[from] QueryError),
    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
    #[error("ledger error: {0}")]
    Json(#[from] serde_json::Error),
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
}

pub(crate) fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> LoaderError + '_ {
    move |source| LoaderError::Io { path: path.to_path_buf(), source }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EventStatus {
    Success,
    Failed,
    Undone,
}

impl fmt::Display for EventStatus {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            EventStatus::Success => "success",
            EventStatus::Failed => "failed",
            EventStatus::Undone => "undone",
        })
    }
}

impl FromStr for EventStatus {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s.to_ascii_lowercase().as_str() {
            "success" => Ok(EventStatus::Success),
            "failed" => Ok(EventStatus::Failed),
            "undone" => Ok(EventStatus::Undone),
            _ => Err(format!("unknown status '{s}' (success, failed, undone)")),
        }
    }
}

/// One ledger record: the unit of undo.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct LoadEvent {
    #[serde(rename = "eventID")]
    pub event_id: u64,
    #[serde(with = "table_name_serde")]
    pub table_name: TableName,
    pub file_name: String,
    pub start_time: Timestamp,
    pub end_time: Timestamp,
    pub source_rows: usize,
    pub inserted_rows: usize,
    pub status: EventStatus,
    pub trace_text: String,
}

mod table_name_serde {
    use super::TableName;
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(t: &TableName, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(t.as_str())
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<TableName, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(|_| serde::de::Error::custom(format!("unknown table '{s}'")))
    }
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
struct Ledger {
    next_id: u64,
    /// Last value handed out by the store clock.
    clock: Timestamp,
    events: Vec<LoadEvent>,
}

/// Releases the per-table load slot on drop.
struct Slot<'a> {
    busy: &'a Mutex<HashSet<TableName>>,
    table: TableName,
}

impl Drop for Slot<'_> {
    fn drop(&mut self) {
        self.busy.lock().remove(&self.table);
    }
}

/// Loader over a shared catalog, optionally persisted in a directory that
/// holds the snapshot and the ledger.
pub struct Loader {
    catalog: Arc<Catalog>,
    ledger: Mutex<Ledger>,
    busy: Mutex<HashSet<TableName>>,
    dir: Option<PathBuf>,
}

fn trace_line(row: usize, column: &str, message: &str) -> String {
    format!("ROW {row} COL {column}: {message}")
}

impl Loader {
    pub fn in_memory(catalog: Arc<Catalog>) -> Self {
        Self { catalog, ledger: Mutex::new(Ledger::default()), busy: Mutex::new(HashSet::new()), dir: None }
    }

    /// Opens (or initializes) a database directory.
    pub fn open(dir: impl AsRef<Path>) -> Result<Self, LoaderError> {
        let dir = dir.as_ref().to_path_buf();
        std::fs::create_dir_all(&dir).map_err(io_err(&dir))?;
        let snap = dir.join(SNAPSHOT_FILE);
        let catalog = if snap.exists() { Catalog::restore(&snap)? } else { Catalog::new() };
        let ledger_path = dir.join(LEDGER_FILE);
        let ledger: Ledger = if ledger_path.exists() {
            let text = std::fs::read_to_string(&ledger_path).map_err(io_err(&ledger_path))?;
            serde_json::from_str(&text)?
        } else {
            Ledger::default()
        };
        catalog.advance_clock(ledger.clock);
        Ok(Self { catalog: Arc::new(catalog), ledger: Mutex::new(ledger), busy: Mutex::new(HashSet::new()), dir: Some(dir) })
    }

    pub fn catalog(&self) -> &Arc<Catalog> {
        &self.catalog
    }

    pub fn dir(&self) -> Option<&Path> {
        self.dir.as_deref()
    }

    fn claim(&self, table: TableName) -> Result<Slot<'_>, LoaderError> {
        if !self.busy.lock().insert(table) {
            return Err(LoaderError::Busy(table));
        }
        Ok(Slot { busy: &self.busy, table })
    }

    fn save(&self, ledger: &mut Ledger, snapshot: bool) -> Result<(), LoaderError> {
        ledger.clock = ledger.clock.max(self.catalog.tick());
        let Some(dir) = &self.dir else { return Ok(()) };
        if snapshot {
            self.catalog.persist(dir.join(SNAPSHOT_FILE))?;
        }
        let path = dir.join(LEDGER_FILE);
        let tmp = path.with_extension("tmp");
        std::fs::write(&tmp, serde_json::to_vec_pretty(&*ledger)?).map_err(io_err(&tmp))?;
        std::fs::rename(&tmp, &path).map_err(io_err(&path))?;
        Ok(())
    }

    fn record(&self, mut event: LoadEvent, changed: bool) -> Result<LoadEvent, LoaderError> {
        let mut ledger = self.ledger.lock();
        ledger.next_id += 1;
        event.event_id = ledger.next_id;
        ledger.events.push(event.clone());
        self.save(&mut ledger, changed)?;
        Ok(event)
    }

    /// Loads a CSV file as one atomic batch. Validation failures produce a
    /// `failed` event rather than an error.
    pub fn load_csv(&self, table: TableName, path: impl AsRef<Path>) -> Result<LoadEvent, LoaderError> {
        let path = path.as_ref();
        let file = File::open(path).map_err(io_err(path))?;
        self.load_reader(table, &path.display().to_string(), file)
    }

    pub fn load_reader(&self, table: TableName, file_name: &str, input: impl std::io::Read) -> Result<LoadEvent, LoaderError> {
        if table.is_derived() {
            return Err(StoreError::ReadOnly(table).into());
        }
        let slot = self.claim(table)?;
        let start = self.catalog.tick();
        let parsed = parse_csv(table, input)?;
        if !parsed.issues.is_empty() {
            let trace = parsed.issues.iter().map(|i| trace_line(i.row, &i.column, &i.message)).collect::<Vec<_>>();
            let end = self.catalog.tick();
            drop(slot);
            return self.record(failed_event(table, file_name, start, end, parsed.source_rows, trace), false);
        }
        self.insert(slot, table, file_name, start, parsed.source_rows, parsed.rows)
    }

    /// Loads already-typed rows (full input form) as one batch.
    pub fn load_rows(&self, table: TableName, file_name: &str, rows: Vec<Vec<Value>>) -> Result<LoadEvent, LoaderError> {
        let slot = self.claim(table)?;
        let start = self.catalog.tick();
        let n = rows.len();
        self.insert(slot, table, file_name, start, n, rows)
    }

    fn insert(
        &self,
        slot: Slot<'_>,
        table: TableName,
        file_name: &str,
        start: Timestamp,
        source_rows: usize,
        rows: Vec<Vec<Value>>,
    ) -> Result<LoadEvent, LoaderError> {
        let result = self.catalog.insert_batch(table, rows, start);
        let end = self.catalog.tick();
        drop(slot);
        match result {
            Ok(n) => self.record(
                LoadEvent {
                    event_id: 0,
                    table_name: table,
                    file_name: file_name.to_string(),
                    start_time: start,
                    end_time: end,
                    source_rows,
                    inserted_rows: n,
                    status: EventStatus::Success,
                    trace_text: String::new(),
                },
                true,
            ),
            Err(StoreError::Integrity(v)) => {
                let trace = v.iter().map(|v| trace_line(v.row, &v.column, &v.message)).collect();
                self.record(failed_event(table, file_name, start, end, source_rows, trace), false)
            }
            Err(e) => Err(e.into()),
        }
    }

    /// Deletes the rows of a successful event; refuses when later rows depend on them.
    pub fn undo(&self, event_id: u64) -> Result<usize, LoaderError> {
        let event = {
            let ledger = self.ledger.lock();
            ledger.events.iter().find(|e| e.event_id == event_id).cloned().ok_or(LoaderError::UnknownEvent(event_id))?
        };
        match event.status {
            EventStatus::Undone => return Err(LoaderError::AlreadyUndone(event_id)),
            EventStatus::Failed => return Err(LoaderError::NotUndoable(event_id)),
            EventStatus::Success => {}
        }
        let _slot = self.claim(event.table_name)?;
        let deleted = self
            .catalog
            .delete_window_checked(event.table_name, event.start_time, event.end_time, event.inserted_rows)
            .map_err(|reason| LoaderError::Dependency { event: event_id, reason })?;
        let mut ledger = self.ledger.lock();
        if let Some(e) = ledger.events.iter_mut().find(|e| e.event_id == event_id) {
            e.status = EventStatus::Undone;
        }
        self.save(&mut ledger, true)?;
        Ok(deleted)
    }

    /// Ledger entries newest first, optionally filtered.
    pub fn list_events(&self, table: Option<TableName>, status: Option<EventStatus>) -> Vec<LoadEvent> {
        let ledger = self.ledger.lock();
        ledger
            .events
            .iter()
            .rev()
            .filter(|e| table.is_none_or(|t| e.table_name == t) && status.is_none_or(|s| e.status == s))
            .cloned()
            .collect()
    }

    /// Recomputes the Neighbors table from PhotoObj. Earlier Neighbors events
    /// are marked undone since their rows are replaced.
    pub fn build_neighbors(&self, radius_arcmin: f64) -> Result<LoadEvent, LoaderError> {
        let table = TableName::Neighbors;
        let slot = self.claim(table)?;
        let start = self.catalog.tick();
        let pairs = neighbors_of_state(&self.catalog.snapshot(), radius_arcmin)?;
        let n = self.catalog.replace_table(table, rows::to_rows(&pairs), start)?;
        let end = self.catalog.tick();
        drop(slot);
        let mut ledger = self.ledger.lock();
        ledger.next_id += 1;
        let id = ledger.next_id;
        for e in ledger.events.iter_mut().filter(|e| e.table_name == table && e.status == EventStatus::Success) {
            e.status = EventStatus::Undone;
            e.trace_text = format!("superseded by event {id}");
        }
        let event = LoadEvent {
            event_id: id,
            table_name: table,
            file_name: format!("build_neighbors(radius={radius_arcmin})"),
            start_time: start,
            end_time: end,
            source_rows: n,
            inserted_rows: n,
            status: EventStatus::Success,
            trace_text: String::new(),
        };
        ledger.events.push(event.clone());
        self.save(&mut ledger, true)?;
        Ok(event)
    }

    /// Loads a generated directory in dependency order, stopping at the first failed event.
    pub fn load_dir(&self, dir: impl AsRef<Path>) -> Result<Vec<LoadEvent>, LoaderError> {
        let dir = dir.as_ref();
        let manifest = Manifest::read(dir)?;
        let mut events = Vec::new();
        for table in TableName::LOAD_ORDER {
            let Some(f) = manifest.files.iter().find(|f| f.table == table.as_str()) else { continue };
            let e = self.load_csv(table, dir.join(&f.file))?;
            let failed = e.status == EventStatus::Failed;
            events.push(e);
            if failed {
                break;
            }
        }
        Ok(events)
    }
}

fn failed_event(table: TableName, file: &str, start: Timestamp, end: Timestamp, source_rows: usize, trace: Vec<String>) -> LoadEvent {
    LoadEvent {
        event_id: 0,
        table_name: table,
        file_name: file.to_string(),
        start_time: start,
        end_time: end,
        source_rows,
        inserted_rows: 0,
        status: EventStatus::Failed,
        trace_text: trace.join("\n"),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn loader_with_field() -> Loader {
        let l = Loader::in_memory(Arc::new(Catalog::new()));
        let csv = "fieldID,run,camcol,fieldNum,raMin,raMax,decMin,decMax\n1,1,1,1,0,10,0,10\n";
        assert_eq!(l.load_reader(TableName::Field, "f.csv", csv.as_bytes()).unwrap().status, EventStatus::Success);
        l
    }

    #[test]
    fn null_field_fails_with_trace() {
        let l = loader_with_field();
        let csv = "plateID,ra,dec,mjd\n1,10,20,51000\n2,10,,51000\n";
        let e = l.load_reader(TableName::Plate, "p.csv", csv.as_bytes()).unwrap();
        assert_eq!(e.status, EventStatus::Failed);
        assert_eq!((e.source_rows, e.inserted_rows), (2, 0));
        assert_eq!(e.trace_text, "ROW 2 COL dec: null value");
        assert_eq!(l.catalog().snapshot().row_count(TableName::Plate), 0);
    }

    #[test]
    fn fk_failure_and_filters() {
        let l = loader_with_field();
        let csv = "lineID,specObjID,wavelength,ew,height\n1,42,5000,1,1\n";
        let e = l.load_reader(TableName::SpecLine, "s.csv", csv.as_bytes()).unwrap();
        assert_eq!(e.status, EventStatus::Failed);
        assert!(e.trace_text.contains("COL specObjID: foreign key 42"), "{}", e.trace_text);
        assert_eq!(l.list_events(None, None).len(), 2);
        assert_eq!(l.list_events(None, Some(EventStatus::Failed)).len(), 1);
        assert_eq!(l.list_events(Some(TableName::Field), None).len(), 1);
        assert_eq!(l.list_events(None, None)[0].event_id, 2);
    }

    #[test]
    fn undo_twice_and_failed() {
        let l = loader_with_field();
        let e = l.load_reader(TableName::Plate, "p.csv", "plateID,ra,dec,mjd\n1,10,20,51000\n".as_bytes()).unwrap();
        assert_eq!(l.undo(e.event_id).unwrap(), 1);
        assert!(matches!(l.undo(e.event_id), Err(LoaderError::AlreadyUndone(_))));
        assert!(matches!(l.undo(999), Err(LoaderError::UnknownEvent(999))));
        let bad = l.load_reader(TableName::Plate, "p.csv", "plateID,ra\n".as_bytes()).unwrap();
        assert!(matches!(l.undo(bad.event_id), Err(LoaderError::NotUndoable(_))));
    }

    #[test]
    fn busy_table_is_refused() {
        let l = loader_with_field();
        let _slot = l.claim(TableName::Plate).unwrap();
        assert!(matches!(l.load_reader(TableName::Plate, "p", "".as_bytes()), Err(LoaderError::Busy(_))));
        assert!(l.claim(TableName::Field).is_ok());
    }
}
