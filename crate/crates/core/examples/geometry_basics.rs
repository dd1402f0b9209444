//! Polygon area, bounding boxes, size classes and vertex validation.
//!
//! cargo run --example geometry_basics

use viewmark::geometry::{classify_area, validate_polygon};
use viewmark::{Point, Polygon};

fn main() {
    let camera = Polygon::new(vec![
        Point::new(10.0, 10.0),
        Point::new(60.0, 12.0),
        Point::new(58.0, 70.0),
        Point::new(14.0, 66.0),
    ])
    .expect("four finite vertices");
    let area = camera.area();
    println!("area {area:.1} px^2, class {}", classify_area(area).unwrap());
    println!("bbox {:?}", camera.bbox().to_array());
    println!("COCO segmentation {:?}", camera.flatten());

    for side in [31.9, 32.0, 96.0, 96.1] {
        println!("{side}x{side} square -> {}", classify_area(side * side).unwrap());
    }

    // a bow-tie is accepted with a warning; a sliver is rejected
    let bow_tie = [(0.0, 0.0), (10.0, 10.0), (10.0, 0.0), (0.0, 20.0)].map(|(x, y)| Point::new(x, y));
    let sliver = [(0.0, 0.0), (5.0, 0.0), (5.0, 0.1)].map(|(x, y)| Point::new(x, y));
    for (name, poly) in [("bow-tie", &bow_tie[..]), ("sliver", &sliver[..])] {
        for v in validate_polygon(poly, 640.0, 480.0) {
            println!("{name}: {:?} {v}", v.severity);
        }
    }
}
