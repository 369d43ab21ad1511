mod common;

use std::collections::{BTreeSet, HashMap};
use std::sync::Arc;

use axum::body::Body;
use axum::http::{Request, StatusCode};
use axum::Router;
use http_body_util::BodyExt;
use serde_json::{json, Value as Json};
use tower::ServiceExt;

use skycat::loader::{generate, GeneratorSpec, Loader};
use skycat::query::{cone_search, f_get_nearest_obj_eq, query, ConeRequest, QueryRequest};
use skycat::service::tiles::{render_pixels, tile_rows, TileAddress, MAX_ZOOM};
use skycat::service::{object_document, result_csv, router, stable, ServiceConfig};
use skycat::store::{flags, Catalog, TableName};

const TOKEN: &str = "test-token";

fn app(n: usize, seed: u64) -> (Router, Arc<Loader>) {
    let g = generate(&GeneratorSpec { n_objects: n, n_plates: 1, seed, ..Default::default() }).unwrap();
    let loader = Arc::new(Loader::in_memory(Arc::new(Catalog::new())));
    g.load_into(&loader).unwrap();
    let config = ServiceConfig { admin_token: Some(TOKEN.into()), ..Default::default() };
    (router(loader.clone(), config), loader)
}

async fn call(app: &Router, req: Request<Body>) -> (StatusCode, HashMap<String, String>, Vec<u8>) {
    let resp = app.clone().oneshot(req).await.unwrap();
    let status = resp.status();
    let headers = resp.headers().iter().map(|(k, v)| (k.to_string(), v.to_str().unwrap_or("").to_string())).collect();
    let body = resp.into_body().collect().await.unwrap().to_bytes().to_vec();
    (status, headers, body)
}

async fn get(app: &Router, uri: &str) -> (StatusCode, Vec<u8>) {
    let (s, _, b) = call(app, Request::get(uri).body(Body::empty()).unwrap()).await;
    (s, b)
}

async fn post_json(app: &Router, uri: &str, body: Json) -> (StatusCode, HashMap<String, String>, Vec<u8>) {
    let req = Request::post(uri).header("content-type", "application/json").body(Body::from(body.to_string())).unwrap();
    call(app, req).await
}

fn parse(b: &[u8]) -> Json {
    serde_json::from_slice(b).unwrap_or_else(|e| panic!("{e}: {}", String::from_utf8_lossy(b)))
}

fn error_code(b: &[u8]) -> String {
    parse(b)["error"]["code"].as_str().unwrap().to_string()
}

#[tokio::test]
async fn cone_equals_engine() {
    let (app, loader) = app(3000, 1);
    let state = loader.catalog().snapshot();
    for (ra, dec, r, extra) in [(10.0, 20.0, 15.0, ""), (200.0, -40.0, 30.0, "&view=Stars&where=g%20-%20r%20%3E%200.4&limit=7"), (0.0, 0.0, 0.0001, "")] {
        let (status, body) = get(&app, &format!("/cone?ra={ra}&dec={dec}&radius={r}{extra}")).await;
        assert_eq!(status, StatusCode::OK);
        let mut req = ConeRequest::new(ra, dec, r);
        if !extra.is_empty() {
            req.view = "Stars".into();
            req.predicate = Some("g - r > 0.4".into());
            req.limit = 7;
        }
        let direct = stable(cone_search(&state, &req).unwrap());
        assert_eq!(body, serde_json::to_vec(&direct).unwrap());
    }
    let (_, body) = get(&app, "/cone?ra=0&dec=0&radius=0.0001").await;
    assert_eq!(parse(&body)["rows"], json!([]));
}

#[tokio::test]
async fn cone_rejects_bad_input() {
    let (app, _) = app(200, 2);
    for uri in ["/cone?ra=1&dec=2&radius=-1", "/cone?ra=1&dec=2", "/cone?ra=x&dec=2&radius=1", "/cone?ra=1&dec=95&radius=1", "/cone?ra=1&dec=2&radius=1&view=Nope", "/cone?ra=1&dec=2&radius=1&limit=0"] {
        let (s, b) = get(&app, uri).await;
        assert_eq!(s, StatusCode::BAD_REQUEST, "{uri}");
        assert!(!parse(&b)["error"]["message"].as_str().unwrap().is_empty());
    }
    let (s, b) = get(&app, "/cone?ra=1&dec=2&radius=1&where=g%20%3E").await;
    assert_eq!(s, StatusCode::UNPROCESSABLE_ENTITY);
    assert_eq!(error_code(&b), "invalid_filter");
    assert_eq!(parse(&b)["error"]["column"], json!(4));
}

#[tokio::test]
async fn nearest_equals_engine() {
    let (app, loader) = app(2000, 3);
    let state = loader.catalog().snapshot();
    let photo = state.table(TableName::PhotoObj);
    let row = (0..photo.len()).find(|r| photo.ints("flags")[*r] & flags::PRIMARY != 0).unwrap();
    let (ra, dec) = (photo.floats("ra")[row], photo.floats("dec")[row]);
    let (s, b) = get(&app, &format!("/nearest?ra={ra}&dec={dec}&r=1")).await;
    assert_eq!(s, StatusCode::OK);
    let hit = f_get_nearest_obj_eq(&state, ra, dec, 1.0).unwrap().unwrap();
    assert_eq!(hit.obj_id, photo.ints("objID")[row]);
    assert_eq!(b, format!("{{\"object\":{}}}", serde_json::to_string(&hit).unwrap()).into_bytes());
    // far from everything with a tiny radius
    let (_, b) = get(&app, "/nearest?ra=0.123&dec=-89.9&r=0.0001").await;
    assert_eq!(parse(&b), json!({ "object": null }));
    assert_eq!(get(&app, "/nearest?ra=0&dec=0&r=-2").await.0, StatusCode::BAD_REQUEST);
}

#[tokio::test]
async fn object_document_matches_store() {
    let (app, loader) = app(3000, 4);
    let state = loader.catalog().snapshot();
    let photo = state.table(TableName::PhotoObj);
    let row = (0..photo.len()).find(|r| photo.ints("specObjID")[*r] != 0).unwrap();
    let id = photo.ints("objID")[row];
    let (s, b) = get(&app, &format!("/object/{id}")).await;
    assert_eq!(s, StatusCode::OK);
    assert_eq!(b, serde_json::to_vec(&object_document(&state, id).unwrap()).unwrap());
    let doc = parse(&b);
    assert_eq!(doc["photoObj"]["objID"], json!(id));
    assert_eq!(doc["photoObj"]["ra"], json!(photo.floats("ra")[row]));
    assert_eq!(doc["field"]["fieldID"], json!(photo.ints("fieldID")[row]));
    let lines = doc["specObj"]["lines"].as_array().unwrap();
    assert!((28..=32).contains(&lines.len()), "{}", lines.len());
    assert_eq!(doc["specObj"]["specObjID"], json!(photo.ints("specObjID")[row]));
    assert!(doc["photoObj"].get("loadTime").is_none());

    assert_eq!(get(&app, "/object/-5").await.0, StatusCode::NOT_FOUND);
    assert_eq!(get(&app, "/object/abc").await.0, StatusCode::BAD_REQUEST);
}

#[tokio::test]
async fn query_caps_and_formats() {
    let (app, loader) = app(5000, 5);
    let state = loader.catalog().snapshot();
    let photo = state.table(TableName::PhotoObj);
    let (g, r) = (photo.floats("modelMag_g"), photo.floats("modelMag_r"));
    let oracle = (0..photo.len()).filter(|i| r[*i] - g[*i] > 1.0).count();
    let (s, _, b) = post_json(&app, "/query", json!({"view": "PhotoObj", "where": "(r-g)>1", "select": ["count"]})).await;
    assert_eq!(s, StatusCode::OK);
    assert_eq!(parse(&b)["rows"], json!([[oracle]]));

    let (s, _, b) = post_json(&app, "/query", json!({"view": "PhotoObj", "limit": 5000})).await;
    assert_eq!(s, StatusCode::OK);
    let doc = parse(&b);
    assert_eq!(doc["rows"].as_array().unwrap().len(), 1000);
    assert_eq!(doc["truncated"], json!(true));
    let direct = stable(query(&state, &QueryRequest::new("PhotoObj").limit(1000)).unwrap());
    assert_eq!(b, serde_json::to_vec(&direct).unwrap());

    let (s, h, b) = post_json(&app, "/query", json!({"view": "Galaxies", "select": ["objID", "r"], "limit": 3, "format": "csv"})).await;
    assert_eq!(s, StatusCode::OK);
    assert_eq!(h["content-type"], "text/csv; charset=utf-8");
    assert_eq!(h["x-skycat-truncated"], "true");
    let direct = query(&state, &QueryRequest::new("Galaxies").project(&["objID", "r"]).limit(3)).unwrap();
    assert_eq!(b, result_csv(&direct));
    assert!(String::from_utf8(b).unwrap().starts_with("objID,modelMag_r\n"));

    let (s, _, b) = post_json(&app, "/query", json!({"view": "PhotoObj", "where": "r >"})).await;
    assert_eq!(s, StatusCode::UNPROCESSABLE_ENTITY);
    assert!(parse(&b)["error"]["message"].as_str().unwrap().contains("column"));
    for bad in [json!({"where": "r > 1"}), json!({"view": "PhotoObj", "format": "xml"}), json!({"view": "PhotoObj", "timeout": -1}), json!({"view": "PhotoObj", "bogus": 1})] {
        assert_eq!(post_json(&app, "/query", bad.clone()).await.0, StatusCode::BAD_REQUEST, "{bad}");
    }
    let raw = Request::post("/query").body(Body::from("{not json")).unwrap();
    assert_eq!(call(&app, raw).await.0, StatusCode::BAD_REQUEST);
}

#[tokio::test]
async fn timeout_is_flagged() {
    let g = generate(&GeneratorSpec { n_objects: 20_000, n_plates: 1, seed: 6, ..Default::default() }).unwrap();
    let loader = Arc::new(Loader::in_memory(Arc::new(Catalog::new())));
    g.load_into(&loader).unwrap();
    let app = router(loader, ServiceConfig { timeout_cap: 1e-9, ..Default::default() });
    let (s, _, b) = post_json(&app, "/query", json!({"view": "PhotoObj", "select": ["count"], "timeout": 10})).await;
    assert_eq!(s, StatusCode::OK);
    let doc = parse(&b);
    assert_eq!(doc["timedOut"], json!(true));
    assert!(doc["rowsScanned"].as_u64().unwrap() < 20_000);
}

#[tokio::test]
async fn tiles_partition_and_render() {
    let (app, loader) = app(4000, 7);
    let state = loader.catalog().snapshot();
    let photo = state.table(TableName::PhotoObj);
    let primary: BTreeSet<usize> = (0..photo.len()).filter(|r| photo.ints("flags")[*r] & flags::PRIMARY != 0).collect();
    for z in 0..=MAX_ZOOM {
        let mut seen = BTreeSet::new();
        for t in TileAddress::all(z) {
            for row in tile_rows(&state, t) {
                assert!(seen.insert(row), "row {row} in two tiles at zoom {z}");
            }
        }
        assert_eq!(seen, primary, "zoom {z}");
    }
    // children of a tile cover exactly its rows
    for parent in TileAddress::all(2) {
        let mut kids: Vec<usize> = [(0, 0), (1, 0), (0, 1), (1, 1)]
            .iter()
            .flat_map(|(dx, dy)| tile_rows(&state, TileAddress::new(3, parent.tx * 2 + dx, parent.ty * 2 + dy).unwrap()))
            .collect();
        kids.sort_unstable();
        assert_eq!(kids, tile_rows(&state, parent));
    }

    let (s, b) = get(&app, "/tiles/1/2/0").await;
    assert_eq!(s, StatusCode::OK);
    let decoder = png::Decoder::new(std::io::Cursor::new(b.clone()));
    let mut reader = decoder.read_info().unwrap();
    let mut buf = vec![0; reader.output_buffer_size().unwrap()];
    let info = reader.next_frame(&mut buf).unwrap();
    assert_eq!((info.width, info.height), (256, 256));
    assert_eq!(&buf[..info.buffer_size()], &render_pixels(&state, TileAddress::new(1, 2, 0).unwrap())[..]);
    assert_eq!(get(&app, "/tiles/1/2/0").await.1, b, "deterministic");
    for bad in ["/tiles/4/0/0", "/tiles/0/2/0", "/tiles/0/0/1", "/tiles/a/0/0"] {
        assert_eq!(get(&app, bad).await.0, StatusCode::NOT_FOUND, "{bad}");
    }
}

#[test]
fn tile_pixels_oracle() {
    let empty = Arc::new(Catalog::new()).snapshot();
    assert!(render_pixels(&empty, TileAddress::new(0, 0, 0).unwrap()).iter().all(|p| *p == 0));

    let region = skycat::htm::circle_to_region(skycat::htm::EquatorialCoord::new(45.0, 45.0).unwrap(), 0.0001).unwrap();
    let state = common::state(1, 9, Some(region));
    let photo = state.table(TableName::PhotoObj);
    assert_eq!(photo.len(), 1);
    let t = TileAddress::new(1, 0, 0).unwrap();
    let px = render_pixels(&state, t);
    let at = |x: usize, y: usize| &px[(y * 256 + x) * 3..(y * 256 + x) * 3 + 3];
    let (x, y) = t.pixel(photo.floats("ra")[0], photo.floats("dec")[0]);
    let (ra, dec) = (photo.floats("ra")[0], photo.floats("dec")[0]);
    assert_eq!((x, y), (((ra / 90.0) * 256.0) as u32, ((90.0 - dec) / 90.0 * 256.0) as u32));
    assert!((127..=128).contains(&x) && (127..=128).contains(&y));
    let (x, y) = (x as usize, y as usize);
    if photo.ints("flags")[0] & flags::PRIMARY != 0 {
        let rmag = photo.floats("modelMag_r")[0];
        let gr = photo.floats("modelMag_g")[0] - rmag;
        let expect = skycat::service::tiles::hue(gr).map(|w| (w * skycat::service::tiles::intensity(rmag)).round() as u8);
        assert_eq!(at(x, y), expect);
        assert!(at(x - 1, y).iter().any(|c| *c > 0));
        let lit = px.chunks(3).filter(|p| p.iter().any(|c| *c > 0)).count();
        assert_eq!(lit, 5);
    }
}

#[tokio::test]
async fn admin_requires_token_and_undoes() {
    let (app, loader) = app(1000, 8);
    assert_eq!(get(&app, "/admin/events").await.0, StatusCode::UNAUTHORIZED);
    let auth = |req: axum::http::request::Builder| req.header("authorization", format!("Bearer {TOKEN}"));
    let bad = Request::get("/admin/events").header("authorization", "Bearer nope").body(Body::empty()).unwrap();
    assert_eq!(call(&app, bad).await.0, StatusCode::UNAUTHORIZED);

    let (s, _, b) = call(&app, auth(Request::get("/admin/events")).body(Body::empty()).unwrap()).await;
    assert_eq!(s, StatusCode::OK);
    assert_eq!(b, format!("{{\"events\":{}}}", serde_json::to_string(&loader.list_events(None, None)).unwrap()).into_bytes());

    let undo = |id: u64| auth(Request::post(format!("/admin/undo/{id}"))).body(Body::empty()).unwrap();
    let photo_event = loader.list_events(Some(TableName::PhotoObj), None)[0].event_id;
    let nb_event = loader.list_events(Some(TableName::Neighbors), None)[0].event_id;
    let (s, _, b) = call(&app, undo(photo_event)).await;
    assert_eq!(s, StatusCode::CONFLICT);
    assert_eq!(error_code(&b), "dependency");

    let nb_rows = loader.catalog().snapshot().row_count(TableName::Neighbors);
    let (s, _, b) = call(&app, undo(nb_event)).await;
    assert_eq!(s, StatusCode::OK);
    assert_eq!(parse(&b), json!({ "eventID": nb_event, "deleted": nb_rows }));
    assert_eq!(call(&app, undo(nb_event)).await.0, StatusCode::CONFLICT);
    assert_eq!(call(&app, undo(9999)).await.0, StatusCode::NOT_FOUND);
    assert_eq!(call(&app, Request::post("/admin/undo/1").body(Body::empty()).unwrap()).await.0, StatusCode::UNAUTHORIZED);

    let (_, _, b) = call(&app, auth(Request::get("/admin/events?table=Neighbors&status=undone")).body(Body::empty()).unwrap()).await;
    assert_eq!(parse(&b)["events"].as_array().unwrap().len(), 1);
}
