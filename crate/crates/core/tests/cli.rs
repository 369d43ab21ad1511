use std::path::Path;
use std::process::{Command, Output};

fn skycat(db: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_skycat")).arg("--db").arg(db).args(args).env("RUST_LOG", "warn").output().unwrap()
}

fn code(o: &Output) -> i32 {
    o.status.code().unwrap()
}

#[test]
fn load_undo_and_exit_codes() {
    let tmp = tempfile::tempdir().unwrap();
    let (gen, db) = (tmp.path().join("gen"), tmp.path().join("db"));
    let gen_s = gen.to_str().unwrap();
    assert_eq!(code(&skycat(&db, &["generate", "--out", gen_s, "--objects", "400", "--plates", "1"])), 0);
    let o = skycat(&db, &["load-dir", gen_s]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    assert_eq!(code(&skycat(&db, &["store", "audit", "--manifest", gen_s])), 0);

    let o = skycat(&db, &["events", "--json"]);
    let events: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!(events.as_array().unwrap().len(), 9);
    let photo_event = events.as_array().unwrap().iter().find(|e| e["tableName"] == "PhotoObj").unwrap()["eventID"].as_u64().unwrap();

    let o = skycat(&db, &["undo", &photo_event.to_string()]);
    assert_eq!(code(&o), 3, "{}", String::from_utf8_lossy(&o.stderr));

    let o = skycat(&db, &["query", "PhotoObj", "--where", "r >", "--select", "count"]);
    assert_eq!(code(&o), 2);
    assert!(String::from_utf8_lossy(&o.stderr).contains("column 4"));

    // a bad CSV is recorded as a failed event and exits 2
    let bad = tmp.path().join("bad.csv");
    std::fs::write(&bad, "plateID,ra,dec,mjd\n1,10,20,51000\n").unwrap();
    let o = skycat(&db, &["load", "Plate", bad.to_str().unwrap()]);
    assert_eq!(code(&o), 2);
    assert!(String::from_utf8_lossy(&o.stdout).contains("failed"));

    let o = skycat(&db, &["query", "PhotoObj", "--select", "count"]);
    let rs: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!(rs["rows"][0][0], 400);
}

#[test]
fn htm_and_filterql_commands() {
    let tmp = tempfile::tempdir().unwrap();
    let o = skycat(tmp.path(), &["htm", "lookup", "--ra", "45", "--dec", "45", "--depth", "0"]);
    assert_eq!(String::from_utf8_lossy(&o.stdout).trim(), "15\tN3");
    let o = skycat(tmp.path(), &["htm", "cover", "--circle", "10,-5,1", "--depth", "6"]);
    assert_eq!(code(&o), 0);
    assert!(!o.stdout.is_empty());
    assert_eq!(code(&skycat(tmp.path(), &["htm", "cover", "--circle", "10,-5"])), 1);
    let o = skycat(tmp.path(), &["filterql", "check", "r-g>1 AND NOT (flags & 8) != 0"]);
    assert_eq!(String::from_utf8_lossy(&o.stdout).trim(), "(((r - g) > 1) AND (NOT ((flags & 8) != 0)))\tBool");
    assert_eq!(code(&skycat(tmp.path(), &["filterql", "check", "NOT flags & 8"])), 2);
    assert_eq!(code(&skycat(tmp.path(), &["filterql", "check", "nosuch > 1"])), 2);
}
