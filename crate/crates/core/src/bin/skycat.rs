use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;
use std::time::{Duration, Instant};

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand, ValueEnum};

use skycat::filterql::{self, Checked, FilterError};
use skycat::htm::{circle_to_region, cover, htm_lookup, EquatorialCoord, TrixelId};
use skycat::loader::{generate, generate_synthetic, EventStatus, GeneratorSpec, LoadEvent, Loader, LoaderError, Manifest};
use skycat::query::{self, cone_search, ConeRequest, QueryError, QueryRequest, ResultSet};
use skycat::service::{self, ServiceConfig};
use skycat::store::{audit, Catalog, TableName};

macro_rules! out {
    ($($arg:tt)*) => {
        writeln!(std::io::stdout(), $($arg)*)?
    };
}

/// Exit status for input that parsed but failed validation.
const EXIT_INVALID: u8 = 2;
/// Exit status when an undo is refused because other rows depend on the event.
const EXIT_DEPENDENCY: u8 = 3;

#[derive(Parser)]
#[command(name = "skycat", version, about = "HTM-indexed sky catalog tools")]
struct Cli {
    /// Catalog directory (snapshot and load ledger).
    #[arg(long, global = true, env = "SKYCAT_DATA_DIR")]
    db: Option<PathBuf>,
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Trixel lookups and region covers.
    Htm {
        #[command(subcommand)]
        cmd: HtmCmd,
    },
    /// Store maintenance.
    Store {
        #[command(subcommand)]
        cmd: StoreCmd,
    },
    /// Filter expression tools.
    Filterql {
        #[command(subcommand)]
        cmd: FilterCmd,
    },
    /// Write a synthetic catalog as CSV files plus a manifest.
    Generate {
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 10_000)]
        objects: usize,
        #[arg(long, default_value_t = 2)]
        plates: usize,
        #[arg(long, default_value_t = 1)]
        seed: u64,
        /// Skip the Neighbors file.
        #[arg(long)]
        no_neighbors: bool,
    },
    /// Load one CSV file into a table.
    Load { table: TableName, file: PathBuf },
    /// Load every file of a generated directory in dependency order.
    LoadDir { dir: PathBuf },
    /// Undo a successful load event.
    Undo { event_id: u64 },
    /// List load events, newest first.
    Events {
        #[arg(long)]
        table: Option<TableName>,
        #[arg(long)]
        status: Option<EventStatus>,
        #[arg(long)]
        json: bool,
    },
    /// Rebuild the Neighbors table from PhotoObj.
    Neighbors {
        /// Arcminutes.
        #[arg(long, default_value_t = 0.5)]
        radius: f64,
    },
    /// Run a query against a view or table.
    Query {
        view: String,
        #[arg(long = "where")]
        predicate: Option<String>,
        /// Comma-separated columns, or `count`.
        #[arg(long)]
        select: Option<String>,
        #[arg(long, default_value_t = query::DEFAULT_LIMIT)]
        limit: usize,
        #[arg(long, value_enum, default_value_t = Format::Json)]
        format: Format,
    },
    /// Cone search around (ra, dec); radius in degrees.
    Cone {
        #[arg(allow_negative_numbers = true)]
        ra: f64,
        #[arg(allow_negative_numbers = true)]
        dec: f64,
        #[arg(allow_negative_numbers = true)]
        radius: f64,
        #[arg(long, default_value = "PhotoObj")]
        view: String,
        #[arg(long = "where")]
        predicate: Option<String>,
        #[arg(long, default_value_t = query::DEFAULT_LIMIT)]
        limit: usize,
    },
    /// Serve the HTTP API.
    Serve {
        /// TOML config file; SKYCAT_* variables override it.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        bind: Option<String>,
    },
    /// Timings on an in-memory synthetic catalog.
    Bench {
        #[command(subcommand)]
        cmd: BenchCmd,
    },
}

#[derive(Subcommand)]
enum HtmCmd {
    /// Trixel containing a position.
    Lookup {
        #[arg(long, allow_negative_numbers = true)]
        ra: f64,
        #[arg(long, allow_negative_numbers = true)]
        dec: f64,
        #[arg(long, default_value_t = 20)]
        depth: u8,
    },
    /// Half-open ID ranges covering a circle given as `ra,dec,radius_deg`.
    Cover {
        #[arg(long, allow_hyphen_values = true)]
        circle: String,
        #[arg(long, default_value_t = 10)]
        depth: u8,
    },
}

#[derive(Subcommand)]
enum StoreCmd {
    /// Check keys, foreign keys, clustering, flags and Neighbors symmetry.
    Audit {
        /// Generated directory whose manifest lists duplicate groups.
        #[arg(long)]
        manifest: Option<PathBuf>,
    },
}

#[derive(Subcommand)]
enum FilterCmd {
    /// Parse and type-check an expression; prints its canonical form.
    Check {
        expr: String,
        #[arg(long, default_value = "PhotoObj")]
        table: TableName,
    },
}

#[derive(Subcommand, Clone, Copy)]
enum BenchCmd {
    /// Count-with-predicate over every row.
    Scan {
        #[arg(long, default_value_t = 1_000_000)]
        rows: usize,
    },
    /// Random 1-degree cones.
    Cone {
        #[arg(long, default_value_t = 1_000_000)]
        rows: usize,
        #[arg(long, default_value_t = 200)]
        queries: usize,
    },
    /// Full Neighbors build.
    Neighbors {
        #[arg(long, default_value_t = 100_000)]
        rows: usize,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum Format {
    Json,
    Csv,
}

fn main() -> ExitCode {
    tracing_subscriber::fmt()
        .with_env_filter(tracing_subscriber::EnvFilter::try_from_default_env().unwrap_or_else(|_| "info".into()))
        .with_writer(std::io::stderr)
        .init();
    match run(Cli::parse()) {
        Ok(code) => ExitCode::from(code),
        Err(e) if e.chain().any(|c| c.downcast_ref::<std::io::Error>().is_some_and(|io| io.kind() == std::io::ErrorKind::BrokenPipe)) => {
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e:#}");
            let code = match e.downcast_ref::<LoaderError>() {
                Some(LoaderError::Dependency { .. }) => EXIT_DEPENDENCY,
                _ if e.downcast_ref::<FilterError>().is_some()
                    || matches!(e.downcast_ref::<QueryError>(), Some(QueryError::Filter(_))) =>
                {
                    EXIT_INVALID
                }
                _ => 1,
            };
            ExitCode::from(code)
        }
    }
}

fn print_json(v: &impl serde::Serialize) -> Result<()> {
    let mut out = std::io::stdout().lock();
    serde_json::to_writer_pretty(&mut out, v)?;
    writeln!(out)?;
    Ok(())
}

fn open(db: &Path) -> Result<Loader> {
    Loader::open(db).with_context(|| format!("opening catalog at {}", db.display()))
}

fn report_events(events: &[LoadEvent]) -> Result<u8> {
    for e in events {
        out!("{:>4}  {:<14} {:<8} {:>9} rows  {}", e.event_id, e.table_name.as_str(), e.status, e.inserted_rows, e.file_name);
        if e.status == EventStatus::Failed {
            for line in e.trace_text.lines() {
                out!("      {line}");
            }
        }
    }
    Ok(if events.iter().any(|e| e.status == EventStatus::Failed) { EXIT_INVALID } else { 0 })
}

fn print_result(rs: &ResultSet, format: Format) -> Result<()> {
    match format {
        Format::Json => print_json(rs)?,
        Format::Csv => std::io::stdout().write_all(&service::result_csv(rs))?,
    }
    if rs.truncated {
        eprintln!("note: truncated at {} rows", rs.rows.len());
    }
    if rs.timed_out {
        eprintln!("note: timed out after {:.1} s; results are partial", rs.elapsed);
    }
    Ok(())
}

fn run(cli: Cli) -> Result<u8> {
    let db = cli.db.clone().unwrap_or_else(|| ServiceConfig::default().data_dir);
    match cli.cmd {
        Cmd::Htm { cmd: HtmCmd::Lookup { ra, dec, depth } } => {
            let t: TrixelId = htm_lookup(EquatorialCoord::new(ra, dec)?.to_unit(), depth)?;
            out!("{}\t{}", t.id(), t.name());
        }
        Cmd::Htm { cmd: HtmCmd::Cover { circle, depth } } => {
            let parts: Vec<f64> = circle
                .split(',')
                .map(|s| s.trim().parse::<f64>())
                .collect::<Result<_, _>>()
                .with_context(|| format!("--circle '{circle}' is not ra,dec,radius"))?;
            let [ra, dec, r] = parts[..] else { bail!("--circle '{circle}' is not ra,dec,radius") };
            for range in cover(&circle_to_region(EquatorialCoord::new(ra, dec)?, r)?, depth)? {
                out!("{}\t{}", range.lo, range.hi);
            }
        }
        Cmd::Store { cmd: StoreCmd::Audit { manifest } } => {
            let loader = open(&db)?;
            let groups = match manifest {
                Some(dir) => Manifest::read(&dir)?.duplicate_groups,
                None => Vec::new(),
            };
            let violations = audit(&loader.catalog().snapshot(), &groups);
            for v in &violations {
                out!("{v}");
            }
            if !violations.is_empty() {
                eprintln!("{} violation(s)", violations.len());
                return Ok(EXIT_INVALID);
            }
            out!("ok");
        }
        Cmd::Filterql { cmd: FilterCmd::Check { expr, table } } => {
            let parsed = filterql::parse(&expr)?;
            let checked = Checked::predicate(&parsed, table.schema()).or_else(|_| Checked::expression(&parsed, table.schema()))?;
            out!("{}\t{:?}", checked.expr(), checked.ty());
        }
        Cmd::Generate { out, objects, plates, seed, no_neighbors } => {
            let spec = GeneratorSpec { n_objects: objects, n_plates: plates, seed, neighbors: !no_neighbors, ..Default::default() };
            let m = generate_synthetic(&spec, &out)?;
            for f in &m.files {
                out!("{:<14} {:>9} rows  {}", f.table, f.rows, out.join(&f.file).display());
            }
        }
        Cmd::Load { table, file } => {
            let loader = open(&db)?;
            return report_events(&[loader.load_csv(table, &file)?]);
        }
        Cmd::LoadDir { dir } => {
            let loader = open(&db)?;
            return report_events(&loader.load_dir(&dir)?);
        }
        Cmd::Undo { event_id } => {
            let loader = open(&db)?;
            let n = loader.undo(event_id)?;
            out!("event {event_id}: deleted {n} rows");
        }
        Cmd::Events { table, status, json } => {
            let events = open(&db)?.list_events(table, status);
            if json {
                print_json(&events)?;
            } else {
                report_events(&events)?;
            }
        }
        Cmd::Neighbors { radius } => {
            let loader = open(&db)?;
            report_events(&[loader.build_neighbors(radius)?])?;
        }
        Cmd::Query { view, predicate, select, limit, format } => {
            let mut req = QueryRequest::new(&view).limit(limit);
            req.predicate = predicate;
            req.projection = select.map(|s| s.split(',').map(|c| c.trim().to_string()).collect());
            print_result(&query::query(&open(&db)?.catalog().snapshot(), &req)?, format)?;
        }
        Cmd::Cone { ra, dec, radius, view, predicate, limit } => {
            let mut req = ConeRequest::new(ra, dec, radius);
            req.view = view;
            req.predicate = predicate;
            req.limit = limit;
            print_result(&cone_search(&open(&db)?.catalog().snapshot(), &req)?, Format::Json)?;
        }
        Cmd::Serve { config, bind } => {
            let mut cfg = ServiceConfig::load(config.as_deref())?;
            if let Some(d) = cli.db {
                cfg.data_dir = d;
            }
            if let Some(b) = bind {
                cfg.bind = b;
            }
            tokio::runtime::Runtime::new()?.block_on(service::serve(cfg))?;
        }
        Cmd::Bench { cmd } => bench(cmd)?,
    }
    Ok(0)
}

fn bench_catalog(rows: usize, neighbors: bool) -> Result<Arc<Catalog>> {
    let t = Instant::now();
    let g = generate(&GeneratorSpec { n_objects: rows, n_plates: 1, seed: 7, neighbors, ..Default::default() })?;
    let loader = Loader::in_memory(Arc::new(Catalog::new()));
    g.load_into(&loader)?;
    eprintln!("generated and loaded {rows} objects in {:.2} s", t.elapsed().as_secs_f64());
    Ok(loader.catalog().clone())
}

fn bench(cmd: BenchCmd) -> Result<()> {
    match cmd {
        BenchCmd::Scan { rows } => {
            let state = bench_catalog(rows, false)?.snapshot();
            let req = QueryRequest::new("PhotoObj").predicate("(r-g)>1").project(&["count"]).timeout(Duration::from_secs(600));
            query::query(&state, &req)?;
            let reps = 5;
            let t = Instant::now();
            for _ in 0..reps {
                query::query(&state, &req)?;
            }
            let secs = t.elapsed().as_secs_f64() / reps as f64;
            out!("scan: {rows} rows in {:.4} s = {:.2}M rows/s", secs, rows as f64 / secs / 1e6);
        }
        BenchCmd::Cone { rows, queries } => {
            let state = bench_catalog(rows, false)?.snapshot();
            let t = Instant::now();
            let mut scanned = 0;
            for i in 0..queries {
                let ra = (i as f64 * 137.507_764) % 360.0;
                let dec = ((i as f64 * 0.618_034) % 1.0 * 2.0 - 1.0).asin().to_degrees();
                let mut req = ConeRequest::new(ra, dec, 1.0);
                req.projection = Some(vec!["count".into()]);
                scanned += cone_search(&state, &req)?.rows_scanned;
            }
            let secs = t.elapsed().as_secs_f64();
            out!(
                "cone: {queries} queries in {secs:.3} s ({:.2} ms each), mean rows scanned {:.0} of {rows}",
                secs * 1e3 / queries as f64,
                scanned as f64 / queries as f64
            );
        }
        BenchCmd::Neighbors { rows } => {
            let state = bench_catalog(rows, false)?.snapshot();
            let t = Instant::now();
            let n = query::neighbors_of_state(&state, 0.5)?;
            out!("neighbors: {} pairs over {rows} objects in {:.3} s", n.len(), t.elapsed().as_secs_f64());
        }
    }
    Ok(())
}
