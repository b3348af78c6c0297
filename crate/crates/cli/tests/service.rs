mod common;

use std::sync::Arc;

use axum::body::{to_bytes, Body};
use axum::http::{header, Request, StatusCode};
use axum::Router;
use common::{fixture, p, relume};
use relume::relight::load_model;
use relume_cli::service::{router, ServiceState};
use tower::ServiceExt;

fn app(assets: Option<std::path::PathBuf>) -> Router {
    let model = load_model(&fixture().model).unwrap();
    router(Arc::new(ServiceState { model, assets }))
}

async fn send(app: Router, req: Request<Body>) -> (StatusCode, Option<String>, Vec<u8>) {
    let res = app.oneshot(req).await.unwrap();
    let status = res.status();
    let ct = res
        .headers()
        .get(header::CONTENT_TYPE)
        .map(|v| v.to_str().unwrap().to_string());
    let body = to_bytes(res.into_body(), usize::MAX).await.unwrap().to_vec();
    (status, ct, body)
}

fn get(uri: &str) -> Request<Body> {
    Request::get(uri).body(Body::empty()).unwrap()
}

fn post(body: &str) -> Request<Body> {
    Request::post("/api/relight")
        .header(header::CONTENT_TYPE, "application/json")
        .body(Body::from(body.to_string()))
        .unwrap()
}

fn fitted_body(wp: f64, wg: f64) -> String {
    let light = std::fs::read_to_string(fixture().model.join("light.json")).unwrap();
    format!(r#"{{"light": {light}, "wp": {wp}, "wg": {wg}, "exposure": 1}}"#)
}

#[tokio::test]
async fn model_record_has_dimensions_and_light() {
    let (status, ct, body) = send(app(None), get("/api/model")).await;
    assert_eq!(status, StatusCode::OK);
    assert!(ct.unwrap().starts_with("application/json"));
    let v: serde_json::Value = serde_json::from_slice(&body).unwrap();
    assert_eq!((v["width"].as_u64(), v["height"].as_u64()), (Some(64), Some(64)));
    assert_eq!(v["light"]["type"], "points");
    assert!(v["layer_rms"]["sg"].is_number());
}

#[tokio::test]
async fn relight_matches_the_command_line_bytes() {
    let f = fixture();
    let (status, ct, body) = send(app(None), post(&fitted_body(1.0, 0.0))).await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(ct.as_deref(), Some("image/png"));
    let out = f.root.join("cli-preview.png");
    let run = relume(&["relight", "--model", p(&f.model), "--wp", "1", "--wg", "0", "--out", p(&out)]);
    assert!(run.status.success());
    assert_eq!(body, std::fs::read(out).unwrap());
}

#[tokio::test]
async fn concurrent_requests_agree() {
    let app = app(None);
    let body = fitted_body(0.5, 1.5);
    let futures: Vec<_> = (0..4).map(|_| send(app.clone(), post(&body))).collect();
    let results = futures_join(futures).await;
    for r in &results {
        assert_eq!(r.0, StatusCode::OK);
        assert_eq!(r.2, results[0].2);
    }
}

async fn futures_join<F: std::future::Future + Send + 'static>(fs: Vec<F>) -> Vec<F::Output>
where
    F::Output: Send + 'static,
{
    let handles: Vec<_> = fs.into_iter().map(tokio::spawn).collect();
    let mut out = Vec::new();
    for h in handles {
        out.push(h.await.unwrap());
    }
    out
}

#[tokio::test]
async fn malformed_bodies_are_rejected() {
    let (status, _, _) = send(app(None), post("{not json")).await;
    assert_eq!(status, StatusCode::BAD_REQUEST);
    let (status, _, body) = send(
        app(None),
        post(r#"{"light": {"type": "sh", "coefficients": [1, 0, 0, 0, 0, 0, 0, 0]}}"#),
    )
    .await;
    assert_eq!(status, StatusCode::BAD_REQUEST);
    assert!(String::from_utf8(body).unwrap().contains("coefficients"));
    let (status, _, _) = send(app(None), post(r#"{"wp": 1}"#)).await;
    assert_eq!(status, StatusCode::BAD_REQUEST);
}

#[tokio::test]
async fn layers() {
    for name in ["albedo", "coarse", "sp", "sg"] {
        let (status, ct, body) = send(app(None), get(&format!("/api/layers/{name}"))).await;
        assert_eq!(status, StatusCode::OK, "{name}");
        assert_eq!(ct.as_deref(), Some("image/png"));
        let img = relume::io::decode_png(&body, relume::io::Transfer::Srgb).unwrap();
        assert_eq!(img.width(), 64);
    }
    let (status, _, _) = send(app(None), get("/api/layers/normals")).await;
    assert_eq!(status, StatusCode::NOT_FOUND);
}

#[tokio::test]
async fn static_assets() {
    let (status, ct, _) = send(app(None), get("/")).await;
    assert_eq!(status, StatusCode::OK);
    assert!(ct.unwrap().starts_with("text/html"));

    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("index.html"), "<!doctype html><p>studio</p>").unwrap();
    std::fs::write(dir.path().join("app.js"), "console.log(1)").unwrap();
    let served = app(Some(dir.path().to_path_buf()));
    let (status, _, body) = send(served.clone(), get("/")).await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(body, b"<!doctype html><p>studio</p>");
    let (status, ct, _) = send(served, get("/app.js")).await;
    assert_eq!(status, StatusCode::OK);
    assert!(ct.unwrap().contains("javascript"));
}
