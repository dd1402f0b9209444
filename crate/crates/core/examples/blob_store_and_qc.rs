//! Content-addressed blobs, the append-only logs, QC verdicts and replay.
//!
//! cargo run --example blob_store_and_qc

use std::collections::BTreeMap;

use viewmark::png_io::synthetic_png;
use viewmark::storage::{self, AnnotationDraft};
use viewmark::{Point, Polygon, QcEvent, Store, SubmissionRecord, Timestamp};

fn main() {
    let dir = tempfile::tempdir().unwrap();
    let (store, _) = Store::open(dir.path()).unwrap();

    let mut refs = Vec::new();
    for (i, annotator) in ["person1", "person2", "person1"].iter().enumerate() {
        let image_ref = store.put_blob(&synthetic_png(64, 48, i as u64)).unwrap();
        let polygon = Polygon::new(vec![Point::new(2.0, 2.0), Point::new(30.0, 4.0), Point::new(10.0, 40.0)]).unwrap();
        let drafts = vec![AnnotationDraft { category_name: "directed".into(), polygon, attributes: BTreeMap::new() }];
        let now = Timestamp::now();
        let rec = SubmissionRecord::new(*annotator, now, "https://example.org", image_ref.clone(), (64, 48), 1.0, drafts, None, now);
        let receipt = store.append_submission(rec.clone()).unwrap();
        println!("{} -> {} (duplicate: {})", &image_ref[..12], &rec.submission_id[..12], receipt.duplicate);
        // a retried upload is recognised
        assert!(store.append_submission(rec).unwrap().duplicate);
        refs.push(image_ref);
    }

    store.append_qc(QcEvent::approve(&refs[0], "reviewer", Timestamp::now())).unwrap();
    store.append_qc(QcEvent::disqualify(&refs[1], "camera not visible", "reviewer", Timestamp::now())).unwrap();
    drop(store);

    let (state, report) = storage::replay(dir.path()).unwrap();
    println!("replayed {} submissions over {} images, {} QC events, warnings {:?}", state.len(), state.image_count(), state.qc_len(), report.warnings);
    for r in &refs {
        println!("{} verdict {:?}", &r[..12], state.verdict(r));
    }
}
