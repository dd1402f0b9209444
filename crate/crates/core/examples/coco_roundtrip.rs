//! Build, serialize, validate and merge COCO datasets.
//!
//! cargo run --example coco_roundtrip

use std::collections::BTreeMap;

use viewmark::coco::{self, CocoAnnotation, CocoCategory, CocoDataset, CocoError, CocoImage};
use viewmark::geometry::{polygon_area, polygon_bbox};
use viewmark::Point;

fn dataset(file: &str, category: &str) -> CocoDataset {
    let poly = [(4.0, 4.0), (40.0, 6.0), (20.0, 44.0)].map(|(x, y)| Point::new(x, y));
    CocoDataset {
        images: vec![CocoImage {
            id: 1,
            file_name: file.into(),
            width: 64,
            height: 48,
            source_url: "https://www.flickr.com/photos/someone/1".into(),
            captured_at: "2020-09-14T10:00:00Z".into(),
            annotator_id: "person1".into(),
            geo: None,
            extra: BTreeMap::new(),
        }],
        annotations: vec![CocoAnnotation {
            id: 1,
            image_id: 1,
            category_id: 1,
            segmentation: vec![poly.iter().flat_map(|p| [p.x, p.y]).collect()],
            area: polygon_area(&poly).unwrap(),
            bbox: polygon_bbox(&poly).unwrap(),
            iscrowd: 0,
            attributes: BTreeMap::new(),
            extra: BTreeMap::new(),
        }],
        categories: vec![CocoCategory::new(1, category, "camera")],
        ..Default::default()
    }
}

fn main() {
    let a = dataset("a.png", "directed");
    let bytes = coco::serialize_dataset(&a).unwrap();
    println!("{}", String::from_utf8_lossy(&bytes));
    let back = coco::parse_dataset(&bytes).unwrap();
    assert_eq!(back, a);
    assert_eq!(coco::serialize_dataset(&back).unwrap(), bytes);
    println!("round trip is lossless and canonical");

    let mut broken = a.clone();
    broken.annotations[0].segmentation[0].truncate(4);
    broken.annotations[0].image_id = 99;
    if let Err(CocoError::Validation(v)) = coco::serialize_dataset(&broken) {
        for x in v {
            println!("refused: {x}");
        }
    }

    let b = dataset("b.png", "round");
    let merged = coco::merge_datasets(&a, &b).unwrap();
    println!(
        "merged: {} images, {} annotations, categories {:?}",
        merged.images.len(),
        merged.annotations.len(),
        merged.categories.iter().map(|c| (c.id, c.name.as_str())).collect::<Vec<_>>()
    );
}
