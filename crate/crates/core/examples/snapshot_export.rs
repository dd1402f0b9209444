//! Writes a deterministic COCO snapshot of a small store to a file.
//!
//! cargo run --example snapshot_export -- [out.json]

use viewmark::png_io::synthetic_png;
use viewmark::service::{PayloadAnnotation, Service, SubmissionPayload, Viewport};
use viewmark::snapshot::snapshot_json;
use viewmark::url_metadata::UrlRegistry;
use viewmark::{CategoryDef, CategorySet, Point, Store};

fn main() {
    let out = std::env::args().nth(1).unwrap_or_else(|| "snapshot.json".into());
    let categories = CategorySet::new(vec![
        CategoryDef::new(1, "directed", "camera", "#e6194b"),
        CategoryDef::new(2, "round", "camera", "#4363d8"),
    ])
    .unwrap();
    let dir = tempfile::tempdir().unwrap();
    let (store, _) = Store::open(dir.path()).unwrap();
    let svc = Service::new(store, categories.clone(), UrlRegistry::with_defaults());

    let urls = ["https://www.google.com/maps/@35.68,139.76,3a,60y,200h,85t", "https://www.flickr.com/photos/a/1"];
    for i in 0..4u64 {
        let square = vec![Point::new(5.0, 5.0), Point::new(45.0, 5.0), Point::new(45.0, 40.0), Point::new(5.0, 40.0)];
        let payload = SubmissionPayload::new(
            &format!("person{}", i % 2 + 1),
            &format!("2020-09-14T10:0{i}:00Z"),
            urls[(i % 2) as usize],
            Viewport { width: 64.0, height: 48.0, device_pixel_ratio: 1.0 },
            // the first and last captures show the same image
            &synthetic_png(64, 48, i % 3),
            vec![PayloadAnnotation {
                category_name: if i % 2 == 0 { "directed" } else { "round" }.into(),
                polygon: square,
                attributes: Default::default(),
            }],
        );
        svc.ingest(payload).unwrap();
    }

    let state = svc.store().unwrap().state();
    let bytes = snapshot_json(&state, &categories, false).unwrap();
    assert_eq!(bytes, snapshot_json(&state, &categories, false).unwrap());
    std::fs::write(&out, &bytes).unwrap();
    println!("wrote {out}: {} bytes, {} images", bytes.len(), viewmark::coco::parse_dataset(&bytes).unwrap().images.len());
}
