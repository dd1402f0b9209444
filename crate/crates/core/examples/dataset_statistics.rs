//! Ingests the synthetic camera fixture, approves everything and prints the
//! totals and per-annotator tables.
//!
//! cargo run --release --example dataset_statistics

use viewmark::service::Service;
use viewmark::stats::{compute_report, render_table};
use viewmark::synthetic::FixtureSpec;
use viewmark::url_metadata::UrlRegistry;
use viewmark::{QcEvent, Store, Timestamp};

fn main() {
    let spec = FixtureSpec::crowdsourced_cameras();
    let categories = spec.categories();
    let dir = tempfile::tempdir().unwrap();
    let (store, _) = Store::open(dir.path()).unwrap();
    let svc = Service::new(store, categories.clone(), UrlRegistry::with_defaults());
    for payload in spec.payloads() {
        svc.ingest(payload).expect("fixture payloads are valid");
    }
    let store = svc.store().unwrap();
    let refs: Vec<String> = store.state().submissions().map(|r| r.image_ref.clone()).collect();
    for r in refs {
        store.append_qc(QcEvent::approve(&r, "qc", Timestamp::now())).unwrap();
    }
    let report = compute_report(&store.state(), &categories, true);
    print!("{}", render_table(&report, &categories));
}
