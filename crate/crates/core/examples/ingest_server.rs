//! Runs the HTTP service on a loopback port and drives it the way the
//! browser extension does: fetch categories, submit a capture, review it and
//! download the snapshot.
//!
//! cargo run --example ingest_server

use serde_json::{json, Value};
use viewmark::png_io::synthetic_png;
use viewmark::service::{PayloadAnnotation, Service, SubmissionPayload, Viewport};
use viewmark::url_metadata::UrlRegistry;
use viewmark::{CategoryDef, CategorySet, Point, Store};

#[tokio::main]
async fn main() {
    let dir = tempfile::tempdir().unwrap();
    let categories = CategorySet::new(vec![
        CategoryDef::new(1, "directed", "camera", "#e6194b").with_shortcut('1'),
        CategoryDef::new(2, "round", "camera", "#4363d8").with_shortcut('2'),
    ])
    .unwrap();
    let (store, _) = Store::open(dir.path()).unwrap();
    let svc = Service::new(store, categories, UrlRegistry::with_defaults()).with_token(Some("demo".into()));

    let listener = tokio::net::TcpListener::bind("127.0.0.1:0").await.unwrap();
    let base = format!("http://{}/api/v1", listener.local_addr().unwrap());
    tokio::spawn(async move { axum::serve(listener, svc.router()).await.unwrap() });
    let client = reqwest::Client::new();

    let cats: Value = client.get(format!("{base}/categories")).bearer_auth("demo").send().await.unwrap().json().await.unwrap();
    println!("categories: {cats}");

    // a 640x360 viewport captured at device pixel ratio 2
    let png = synthetic_png(1280, 720, 7);
    let triangle = vec![Point::new(400.0, 300.0), Point::new(520.0, 310.0), Point::new(450.0, 420.0)];
    let payload = SubmissionPayload::new(
        "person1",
        "2020-09-14T10:15:00Z",
        "https://www.google.com/maps/@60.1699,24.9384,3a,75y,120h,90t/data=!3m6",
        Viewport { width: 640.0, height: 360.0, device_pixel_ratio: 2.0 },
        &png,
        vec![PayloadAnnotation { category_name: "directed".into(), polygon: triangle, attributes: Default::default() }],
    );
    let r = client.post(format!("{base}/annotations")).bearer_auth("demo").json(&payload).send().await.unwrap();
    println!("submit: {} {}", r.status(), r.text().await.unwrap());
    let r = client.post(format!("{base}/annotations")).bearer_auth("demo").json(&payload).send().await.unwrap();
    println!("retry:  {} {}", r.status(), r.text().await.unwrap());

    let image_ref = viewmark::storage::content_hash(&png);
    let r = client
        .post(format!("{base}/qc/{image_ref}"))
        .bearer_auth("demo")
        .json(&json!({"verdict": "approved", "reviewer": "qc"}))
        .send()
        .await
        .unwrap();
    println!("qc: {} {}", r.status(), r.text().await.unwrap());

    let snapshot = client.get(format!("{base}/snapshot?approved_only=true")).bearer_auth("demo").send().await.unwrap();
    println!("snapshot: {}", snapshot.text().await.unwrap());
    let health = client.get(format!("{base}/health")).send().await.unwrap();
    println!("health: {}", health.text().await.unwrap());
}
