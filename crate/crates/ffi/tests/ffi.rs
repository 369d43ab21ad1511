use std::ffi::{CStr, CString};
use std::path::PathBuf;
use std::process::Command;
use std::ptr;

use skycat::htm::{arc_angle, circle_to_region, cover, htm_lookup, EquatorialCoord};
use skycat_ffi::*;

fn last_error() -> String {
    unsafe { CStr::from_ptr(skycat_last_error()) }.to_string_lossy().into_owned()
}

#[test]
fn geometry_calls_match_core() {
    let mut id = 0u64;
    assert_eq!(unsafe { skycat_htm_lookup(123.4, -56.7, 20, &mut id) }, SkycatStatus::Ok);
    assert_eq!(id, htm_lookup(EquatorialCoord::new(123.4, -56.7).unwrap().to_unit(), 20).unwrap().id());
    assert!(last_error().is_empty());

    assert_eq!(unsafe { skycat_htm_lookup(0.0, 91.0, 20, &mut id) }, SkycatStatus::InvalidArgument);
    assert!(!last_error().is_empty());
    assert_eq!(unsafe { skycat_htm_lookup(0.0, 0.0, 21, &mut id) }, SkycatStatus::InvalidArgument);
    assert_eq!(unsafe { skycat_htm_lookup(0.0, 0.0, 5, ptr::null_mut()) }, SkycatStatus::InvalidArgument);
    assert_eq!(last_error(), "out is null");

    let mut d = 0.0;
    assert_eq!(unsafe { skycat_arc_angle(10.0, 20.0, 11.0, 21.0, &mut d) }, SkycatStatus::Ok);
    let (a, b) = (EquatorialCoord::new(10.0, 20.0).unwrap(), EquatorialCoord::new(11.0, 21.0).unwrap());
    assert_eq!(d, arc_angle(a.to_unit(), b.to_unit()));

    let mut ranges = ptr::null_mut();
    assert_eq!(unsafe { skycat_cover_circle(200.0, 30.0, 2.0, 8, &mut ranges) }, SkycatStatus::Ok);
    let expected = cover(&circle_to_region(EquatorialCoord::new(200.0, 30.0).unwrap(), 2.0).unwrap(), 8).unwrap();
    let n = unsafe { skycat_ranges_len(ranges) };
    assert_eq!(n, expected.len());
    for (i, e) in expected.iter().enumerate() {
        let mut r = SkycatRange { lo: 0, hi: 0 };
        assert_eq!(unsafe { skycat_ranges_get(ranges, i, &mut r) }, SkycatStatus::Ok);
        assert_eq!((r.lo, r.hi), (e.lo, e.hi));
    }
    let mut r = SkycatRange { lo: 0, hi: 0 };
    assert_eq!(unsafe { skycat_ranges_get(ranges, n, &mut r) }, SkycatStatus::NotFound);
    unsafe { skycat_ranges_free(ranges) };
    unsafe { skycat_ranges_free(ptr::null_mut()) };
    assert_eq!(unsafe { skycat_ranges_len(ptr::null()) }, 0);
}

#[test]
fn catalog_queries_match_core() {
    let mut cat = ptr::null_mut();
    assert_eq!(unsafe { skycat_catalog_generate(3000, 5, &mut cat) }, SkycatStatus::Ok);
    let mut n = 0u64;
    let photo = CString::new("PhotoObj").unwrap();
    assert_eq!(unsafe { skycat_catalog_row_count(cat, photo.as_ptr(), &mut n) }, SkycatStatus::Ok);
    assert_eq!(n, 3000);
    let bogus = CString::new("Nope").unwrap();
    assert_eq!(unsafe { skycat_catalog_row_count(cat, bogus.as_ptr(), &mut n) }, SkycatStatus::NotFound);

    let mut hits = ptr::null_mut();
    let pred = CString::new("r < 22").unwrap();
    assert_eq!(unsafe { skycat_cone_search(cat, 30.0, 10.0, 20.0, pred.as_ptr(), 10_000, &mut hits) }, SkycatStatus::Ok);
    let len = unsafe { skycat_hits_len(hits) };
    assert!(len > 0);
    let mut prev = -1.0;
    let center = EquatorialCoord::new(30.0, 10.0).unwrap().to_unit();
    for i in 0..len {
        let mut h = SkycatHit { obj_id: 0, ra: 0.0, dec: 0.0, distance: 0.0 };
        assert_eq!(unsafe { skycat_hits_get(hits, i, &mut h) }, SkycatStatus::Ok);
        assert!(h.distance >= prev);
        let d = arc_angle(center, EquatorialCoord::new(h.ra, h.dec).unwrap().to_unit()) * 60.0;
        assert!((d - h.distance).abs() < 1e-9 && h.distance <= 1200.0);
        prev = h.distance;
    }
    unsafe { skycat_hits_free(hits) };

    let mut count = 0u64;
    let all_view = CString::new("PhotoObj").unwrap();
    assert_eq!(unsafe { skycat_filter_count(cat, all_view.as_ptr(), ptr::null(), &mut count) }, SkycatStatus::Ok);
    assert_eq!(count, 3000);
    let primary = CString::new("flags & fPhotoFlags('primary')").unwrap();
    let mut primaries = 0u64;
    assert_eq!(unsafe { skycat_filter_count(cat, all_view.as_ptr(), primary.as_ptr(), &mut primaries) }, SkycatStatus::Ok);
    let view = CString::new("PrimaryObjects").unwrap();
    assert_eq!(unsafe { skycat_filter_count(cat, view.as_ptr(), ptr::null(), &mut count) }, SkycatStatus::Ok);
    assert_eq!(count, primaries);
    let bad = CString::new("r >").unwrap();
    assert_eq!(unsafe { skycat_filter_count(cat, all_view.as_ptr(), bad.as_ptr(), &mut count) }, SkycatStatus::Filter);
    assert!(last_error().contains("line 1, column 4"), "{}", last_error());

    let mut h = SkycatHit { obj_id: 0, ra: 0.0, dec: 0.0, distance: 0.0 };
    assert_eq!(unsafe { skycat_nearest(cat, 30.0, 10.0, 600.0, &mut h) }, SkycatStatus::Ok);
    assert_eq!(unsafe { skycat_nearest(cat, 30.0, 10.0, 1e-6, &mut h) }, SkycatStatus::NotFound);
    assert_eq!(unsafe { skycat_nearest(ptr::null(), 30.0, 10.0, 1.0, &mut h) }, SkycatStatus::InvalidArgument);
    unsafe { skycat_catalog_free(cat) };
}

#[test]
fn open_persists_directory() {
    let dir = tempfile::tempdir().unwrap();
    let path = CString::new(dir.path().to_str().unwrap()).unwrap();
    let mut cat = ptr::null_mut();
    assert_eq!(unsafe { skycat_catalog_open(path.as_ptr(), &mut cat) }, SkycatStatus::Ok);
    let mut n = 1u64;
    let t = CString::new("Neighbors").unwrap();
    assert_eq!(unsafe { skycat_catalog_row_count(cat, t.as_ptr(), &mut n) }, SkycatStatus::Ok);
    assert_eq!(n, 0);
    unsafe { skycat_catalog_free(cat) };
    let mut cat = ptr::null_mut();
    assert_eq!(unsafe { skycat_catalog_open(ptr::null(), &mut cat) }, SkycatStatus::InvalidArgument);
    assert!(cat.is_null());
}

fn target_dir() -> PathBuf {
    // .../target/<profile>/deps/ffi-<hash>
    std::env::current_exe().unwrap().parent().unwrap().parent().unwrap().to_path_buf()
}

#[test]
fn c_program_links_against_header() {
    let manifest = PathBuf::from(env!("CARGO_MANIFEST_DIR"));
    let lib = target_dir().join("libskycat_ffi.a");
    assert!(lib.exists(), "{} missing", lib.display());
    let out_dir = tempfile::tempdir().unwrap();
    let exe = out_dir.path().join("smoke");
    let status = Command::new("cc")
        .arg(manifest.join("tests/smoke.c"))
        .arg("-I")
        .arg(manifest.join("include"))
        .arg(&lib)
        .args(["-lpthread", "-ldl", "-lm", "-o"])
        .arg(&exe)
        .status()
        .unwrap();
    assert!(status.success());
    let out = Command::new(&exe).output().unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let mut expected = 0u64;
    assert_eq!(unsafe { skycat_htm_lookup(45.0, 45.0, 20, &mut expected) }, SkycatStatus::Ok);
    assert_eq!(String::from_utf8_lossy(&out.stdout).trim(), format!("{expected} ok"));
}
