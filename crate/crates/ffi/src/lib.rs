//! C ABI over the catalog engine.
//!
//! Every function returns a [`SkycatStatus`]; on failure a message is available
//! from [`skycat_last_error`] on the same thread. Handles are opaque and must be
//! released with their matching `_free` function. Panics never cross the boundary.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::ptr;
use std::sync::Arc;

use skycat::htm::{self, EquatorialCoord, IdRange};
use skycat::loader::{generate, GeneratorSpec, Loader, LoaderError};
use skycat::query::{self, ConeRequest, QueryError, QueryRequest};
use skycat::store::{Catalog, TableName, Value};

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SkycatStatus {
    Ok = 0,
    InvalidArgument = 1,
    NotFound = 2,
    Io = 3,
    Filter = 4,
    Dependency = 5,
    Panic = 6,
    Internal = 7,
}

/// Half-open range of trixel IDs.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SkycatRange {
    pub lo: u64,
    pub hi: u64,
}

/// One matched object. `distance` is in arcminutes.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SkycatHit {
    pub obj_id: i64,
    pub ra: f64,
    pub dec: f64,
    pub distance: f64,
}

/// Opaque handle to an open catalog.
pub struct SkycatCatalog {
    loader: Loader,
}

/// Opaque list of cover ranges.
pub struct SkycatRanges(Vec<SkycatRange>);

/// Opaque list of hits, nearest first.
pub struct SkycatHits(Vec<SkycatHit>);

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::default());
}

fn set_error(msg: &str) {
    let c = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = c);
}

struct Failure(SkycatStatus, String);

impl Failure {
    fn invalid(msg: impl Into<String>) -> Self {
        Failure(SkycatStatus::InvalidArgument, msg.into())
    }
}

impl From<htm::HtmError> for Failure {
    fn from(e: htm::HtmError) -> Self {
        Failure::invalid(e.to_string())
    }
}

impl From<QueryError> for Failure {
    fn from(e: QueryError) -> Self {
        let status = match e {
            QueryError::Filter(_) => SkycatStatus::Filter,
            _ => SkycatStatus::InvalidArgument,
        };
        Failure(status, e.to_string())
    }
}

impl From<LoaderError> for Failure {
    fn from(e: LoaderError) -> Self {
        let status = match e {
            LoaderError::Io { .. } => SkycatStatus::Io,
            LoaderError::Dependency { .. } => SkycatStatus::Dependency,
            LoaderError::UnknownEvent(_) => SkycatStatus::NotFound,
            LoaderError::Spec(_) => SkycatStatus::InvalidArgument,
            _ => SkycatStatus::Internal,
        };
        Failure(status, e.to_string())
    }
}

fn guard(f: impl FnOnce() -> Result<(), Failure>) -> SkycatStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => {
            set_error("");
            SkycatStatus::Ok
        }
        Ok(Err(Failure(status, msg))) => {
            set_error(&msg);
            status
        }
        Err(payload) => {
            let msg = payload
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| payload.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "unknown panic".into());
            set_error(&format!("panic: {msg}"));
            SkycatStatus::Panic
        }
    }
}

unsafe fn out_ref<'a, T>(p: *mut T, name: &str) -> Result<&'a mut T, Failure> {
    unsafe { p.as_mut() }.ok_or_else(|| Failure::invalid(format!("{name} is null")))
}

unsafe fn catalog_ref<'a>(p: *const SkycatCatalog) -> Result<&'a SkycatCatalog, Failure> {
    unsafe { p.as_ref() }.ok_or_else(|| Failure::invalid("catalog is null"))
}

unsafe fn opt_str<'a>(p: *const c_char, name: &str) -> Result<Option<&'a str>, Failure> {
    if p.is_null() {
        return Ok(None);
    }
    unsafe { CStr::from_ptr(p) }.to_str().map(Some).map_err(|_| Failure::invalid(format!("{name} is not UTF-8")))
}

unsafe fn req_str<'a>(p: *const c_char, name: &str) -> Result<&'a str, Failure> {
    unsafe { opt_str(p, name) }?.ok_or_else(|| Failure::invalid(format!("{name} is null")))
}

/// Message for the last failed call on this thread; empty after a success.
/// The pointer stays valid until the next call on this thread.
#[no_mangle]
pub extern "C" fn skycat_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ptr())
}

/// Trixel ID containing (ra, dec) at `depth` (0..=20).
///
/// # Safety
/// `out` must be a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn skycat_htm_lookup(ra: f64, dec: f64, depth: u8, out: *mut u64) -> SkycatStatus {
    guard(|| {
        let out = unsafe { out_ref(out, "out") }?;
        *out = htm::htm_lookup(EquatorialCoord::new(ra, dec)?.to_unit(), depth)?.id();
        Ok(())
    })
}

/// Great-circle separation in degrees.
///
/// # Safety
/// `out` must be a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn skycat_arc_angle(ra1: f64, dec1: f64, ra2: f64, dec2: f64, out: *mut f64) -> SkycatStatus {
    guard(|| {
        let out = unsafe { out_ref(out, "out") }?;
        *out = htm::arc_angle(EquatorialCoord::new(ra1, dec1)?.to_unit(), EquatorialCoord::new(ra2, dec2)?.to_unit());
        Ok(())
    })
}

/// Cover of a circle at `depth`, as ranges of depth-`depth` IDs.
///
/// # Safety
/// `out` must be a valid pointer; the result is freed with [`skycat_ranges_free`].
#[no_mangle]
pub unsafe extern "C" fn skycat_cover_circle(
    ra: f64,
    dec: f64,
    radius_deg: f64,
    depth: u8,
    out: *mut *mut SkycatRanges,
) -> SkycatStatus {
    guard(|| {
        let out = unsafe { out_ref(out, "out") }?;
        *out = ptr::null_mut();
        let region = htm::circle_to_region(EquatorialCoord::new(ra, dec)?, radius_deg)?;
        let ranges = htm::cover(&region, depth)?.iter().map(|r: &IdRange| SkycatRange { lo: r.lo, hi: r.hi }).collect();
        *out = Box::into_raw(Box::new(SkycatRanges(ranges)));
        Ok(())
    })
}

/// Number of ranges; 0 for null.
///
/// # Safety
/// `ranges` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn skycat_ranges_len(ranges: *const SkycatRanges) -> usize {
    unsafe { ranges.as_ref() }.map_or(0, |r| r.0.len())
}

/// Copies range `index` into `out`.
///
/// # Safety
/// `ranges` must be a live handle and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn skycat_ranges_get(ranges: *const SkycatRanges, index: usize, out: *mut SkycatRange) -> SkycatStatus {
    guard(|| {
        let list = unsafe { ranges.as_ref() }.ok_or_else(|| Failure::invalid("ranges is null"))?;
        let out = unsafe { out_ref(out, "out") }?;
        *out = *list.0.get(index).ok_or_else(|| Failure(SkycatStatus::NotFound, format!("index {index} out of range")))?;
        Ok(())
    })
}

/// # Safety
/// `ranges` must be null or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn skycat_ranges_free(ranges: *mut SkycatRanges) {
    if !ranges.is_null() {
        drop(unsafe { Box::from_raw(ranges) });
    }
}

fn boxed_catalog(loader: Loader, out: &mut *mut SkycatCatalog) {
    *out = Box::into_raw(Box::new(SkycatCatalog { loader }));
}

/// Opens (or creates) a catalog directory.
///
/// # Safety
/// `dir` must be a NUL-terminated string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn skycat_catalog_open(dir: *const c_char, out: *mut *mut SkycatCatalog) -> SkycatStatus {
    guard(|| {
        let out = unsafe { out_ref(out, "out") }?;
        *out = ptr::null_mut();
        let dir = unsafe { req_str(dir, "dir") }?;
        boxed_catalog(Loader::open(Path::new(dir))?, out);
        Ok(())
    })
}

/// An in-memory synthetic catalog of `n_objects` objects.
///
/// # Safety
/// `out` must be a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn skycat_catalog_generate(n_objects: usize, seed: u64, out: *mut *mut SkycatCatalog) -> SkycatStatus {
    guard(|| {
        let out = unsafe { out_ref(out, "out") }?;
        *out = ptr::null_mut();
        let g = generate(&GeneratorSpec { n_objects, n_plates: (n_objects / 5000).max(1), seed, ..Default::default() })?;
        let loader = Loader::in_memory(Arc::new(Catalog::new()));
        g.load_into(&loader)?;
        boxed_catalog(loader, out);
        Ok(())
    })
}

/// # Safety
/// `catalog` must be null or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn skycat_catalog_free(catalog: *mut SkycatCatalog) {
    if !catalog.is_null() {
        drop(unsafe { Box::from_raw(catalog) });
    }
}

/// Row count of a table, by name.
///
/// # Safety
/// `catalog` must be a live handle, `table` a NUL-terminated string, `out` valid.
#[no_mangle]
pub unsafe extern "C" fn skycat_catalog_row_count(
    catalog: *const SkycatCatalog,
    table: *const c_char,
    out: *mut u64,
) -> SkycatStatus {
    guard(|| {
        let cat = unsafe { catalog_ref(catalog) }?;
        let name = unsafe { req_str(table, "table") }?;
        let out = unsafe { out_ref(out, "out") }?;
        let t: TableName = name.parse().map_err(|_| Failure(SkycatStatus::NotFound, format!("no table '{name}'")))?;
        *out = cat.loader.catalog().snapshot().row_count(t) as u64;
        Ok(())
    })
}

fn hits_from(rs: &query::ResultSet) -> Vec<SkycatHit> {
    let f = |v: &Value| v.as_f64().unwrap_or(f64::NAN);
    rs.rows
        .iter()
        .map(|r| SkycatHit { obj_id: r[0].as_i64().unwrap_or(0), ra: f(&r[1]), dec: f(&r[2]), distance: f(&r[3]) })
        .collect()
}

/// PhotoObj rows within `radius_deg` of (ra, dec), nearest first. `predicate`
/// may be null; at most `limit` hits are returned.
///
/// # Safety
/// `catalog` must be a live handle, `predicate` null or NUL-terminated, `out` valid.
#[no_mangle]
pub unsafe extern "C" fn skycat_cone_search(
    catalog: *const SkycatCatalog,
    ra: f64,
    dec: f64,
    radius_deg: f64,
    predicate: *const c_char,
    limit: usize,
    out: *mut *mut SkycatHits,
) -> SkycatStatus {
    guard(|| {
        let out = unsafe { out_ref(out, "out") }?;
        *out = ptr::null_mut();
        let cat = unsafe { catalog_ref(catalog) }?;
        let mut req = ConeRequest::new(ra, dec, radius_deg);
        req.predicate = unsafe { opt_str(predicate, "predicate") }?.map(str::to_string);
        req.projection = Some(vec!["objID".into(), "ra".into(), "dec".into()]);
        req.limit = limit;
        let rs = query::cone_search(&cat.loader.catalog().snapshot(), &req)?;
        *out = Box::into_raw(Box::new(SkycatHits(hits_from(&rs))));
        Ok(())
    })
}

/// # Safety
/// `hits` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn skycat_hits_len(hits: *const SkycatHits) -> usize {
    unsafe { hits.as_ref() }.map_or(0, |h| h.0.len())
}

/// # Safety
/// `hits` must be a live handle and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn skycat_hits_get(hits: *const SkycatHits, index: usize, out: *mut SkycatHit) -> SkycatStatus {
    guard(|| {
        let list = unsafe { hits.as_ref() }.ok_or_else(|| Failure::invalid("hits is null"))?;
        let out = unsafe { out_ref(out, "out") }?;
        *out = *list.0.get(index).ok_or_else(|| Failure(SkycatStatus::NotFound, format!("index {index} out of range")))?;
        Ok(())
    })
}

/// # Safety
/// `hits` must be null or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn skycat_hits_free(hits: *mut SkycatHits) {
    if !hits.is_null() {
        drop(unsafe { Box::from_raw(hits) });
    }
}

/// Nearest primary object within `radius_arcmin`. Returns `NotFound` when there is none.
///
/// # Safety
/// `catalog` must be a live handle and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn skycat_nearest(
    catalog: *const SkycatCatalog,
    ra: f64,
    dec: f64,
    radius_arcmin: f64,
    out: *mut SkycatHit,
) -> SkycatStatus {
    guard(|| {
        let cat = unsafe { catalog_ref(catalog) }?;
        let out = unsafe { out_ref(out, "out") }?;
        let hit = query::f_get_nearest_obj_eq(&cat.loader.catalog().snapshot(), ra, dec, radius_arcmin)?
            .ok_or_else(|| Failure(SkycatStatus::NotFound, format!("no primary object within {radius_arcmin} arcmin")))?;
        *out = SkycatHit { obj_id: hit.obj_id, ra: hit.ra, dec: hit.dec, distance: hit.distance };
        Ok(())
    })
}

/// Rows of `view` matching `predicate` (null matches all).
///
/// # Safety
/// `catalog` must be a live handle, strings NUL-terminated, `out` valid.
#[no_mangle]
pub unsafe extern "C" fn skycat_filter_count(
    catalog: *const SkycatCatalog,
    view: *const c_char,
    predicate: *const c_char,
    out: *mut u64,
) -> SkycatStatus {
    guard(|| {
        let cat = unsafe { catalog_ref(catalog) }?;
        let view = unsafe { req_str(view, "view") }?;
        let out = unsafe { out_ref(out, "out") }?;
        let mut req = QueryRequest::new(view).project(&["count"]).timeout(std::time::Duration::from_secs(3600));
        req.predicate = unsafe { opt_str(predicate, "predicate") }?.map(str::to_string);
        let rs = query::query(&cat.loader.catalog().snapshot(), &req)?;
        *out = rs.rows[0][0].as_i64().unwrap_or(0) as u64;
        Ok(())
    })
}
