//! Deterministic synthetic submissions with prescribed dataset totals.
//!
//! [`FixtureSpec`] states how many images, instances per category, instances
//! per area class and images per source a dataset should contain, and which
//! annotator contributes how many images. [`FixtureSpec::payloads`] then
//! yields submission payloads that, once ingested and approved, produce
//! exactly those totals. Used by the examples and by the acceptance suite.

use std::collections::BTreeMap;

use crate::categories::{CategoryDef, CategorySet};
use crate::geometry::{AreaClass, Point};
use crate::png_io;
use crate::service::{PayloadAnnotation, SubmissionPayload, Viewport};
use crate::timestamp::Timestamp;
use crate::url_metadata::{render_gsv_url, GeoMetadata, SourceTag, GOOGLE_STREETVIEW};

/// Side length of every synthetic capture, in pixels.
pub const IMAGE_SIDE: u32 = 200;

/// Epoch of the first synthetic capture (2020-09-14T00:00:00Z).
const START_MILLIS: i64 = 1_600_041_600_000;

#[derive(Debug, Clone, PartialEq)]
pub struct FixtureSpec {
    pub images: u64,
    /// Instance counts per category name, in category order.
    pub instances_by_category: Vec<(String, u64)>,
    pub small: u64,
    pub medium: u64,
    pub large: u64,
    pub google: u64,
    pub baidu: u64,
    pub flickr: u64,
    /// Annotator ids with the number of images each contributes.
    pub annotators: Vec<(String, u64)>,
}

impl FixtureSpec {
    /// Two camera categories over 4167 images: 3325 directed and 2055 round
    /// instances; 1455 small, 3345 medium and 580 large; 3873 Google, 269
    /// Baidu and 25 Flickr captures; eight annotators contributing 418, 525,
    /// 542, 228, 632, 750, 977 and 95 images.
    pub fn crowdsourced_cameras() -> Self {
        let annotators = [418, 525, 542, 228, 632, 750, 977, 95]
            .iter()
            .enumerate()
            .map(|(i, &n)| (format!("person{}", i + 1), n))
            .collect();
        Self {
            images: 4167,
            instances_by_category: vec![("directed".into(), 3325), ("round".into(), 2055)],
            small: 1455,
            medium: 3345,
            large: 580,
            google: 3873,
            baidu: 269,
            flickr: 25,
            annotators,
        }
    }

    pub fn instances(&self) -> u64 {
        self.instances_by_category.iter().map(|(_, n)| n).sum()
    }

    /// Checks that the requested breakdowns are mutually consistent.
    pub fn check(&self) -> Result<(), String> {
        let n = self.instances();
        if self.small + self.medium + self.large != n {
            return Err(format!("area classes sum to {}, categories to {n}", self.small + self.medium + self.large));
        }
        if self.google + self.baidu + self.flickr != self.images {
            return Err("sources do not sum to the image count".into());
        }
        if self.annotators.iter().map(|(_, c)| c).sum::<u64>() != self.images {
            return Err("annotator contributions do not sum to the image count".into());
        }
        if n < self.images || n > 2 * self.images {
            return Err(format!("{n} instances cannot be spread over {} images at 1-2 per image", self.images));
        }
        Ok(())
    }

    /// Category config matching `instances_by_category`.
    pub fn categories(&self) -> CategorySet {
        const COLORS: [&str; 6] = ["#e6194b", "#3cb44b", "#4363d8", "#f58231", "#911eb4", "#42d4f4"];
        let defs = self
            .instances_by_category
            .iter()
            .enumerate()
            .map(|(i, (name, _))| {
                let key = char::from_digit((i as u32 + 1) % 10, 10).expect("digit");
                CategoryDef::new(i as u64 + 1, name, "object", COLORS[i % COLORS.len()]).with_shortcut(key)
            })
            .collect();
        CategorySet::new(defs).expect("fixture categories are valid")
    }

    /// Lazily generates one payload per image.
    pub fn payloads(&self) -> impl Iterator<Item = SubmissionPayload> + '_ {
        self.check().expect("inconsistent fixture spec");
        (0..self.images).map(|k| self.payload(k))
    }

    /// Payload of image `k` (0-based); independent of every other image.
    pub fn payload(&self, k: u64) -> SubmissionPayload {
        assert!(k < self.images, "image index {k} out of range");
        // the first `doubles` images carry two instances, the rest one
        let doubles = self.instances() - self.images;
        let instances = if k < doubles { vec![2 * k, 2 * k + 1] } else { vec![doubles + k] };
        let drafts = instances
            .into_iter()
            .map(|i| PayloadAnnotation {
                category_name: self.category_of(i).to_owned(),
                polygon: shape(self.area_class_of(i), i),
                attributes: BTreeMap::new(),
            })
            .collect();
        let captured = Timestamp::from_unix_millis(START_MILLIS + k as i64 * 1000).expect("in range");
        SubmissionPayload::new(
            self.annotator_of(k),
            &captured.to_rfc3339(),
            &self.page_url(k),
            Viewport { width: f64::from(IMAGE_SIDE), height: f64::from(IMAGE_SIDE), device_pixel_ratio: 1.0 },
            &png_io::synthetic_png(IMAGE_SIDE, IMAGE_SIDE, k),
            drafts,
        )
    }

    fn annotator_of(&self, image: u64) -> &str {
        let mut acc = 0;
        for (id, count) in &self.annotators {
            acc += count;
            if image < acc {
                return id;
            }
        }
        unreachable!("image index within total")
    }

    fn category_of(&self, instance: u64) -> &str {
        let mut acc = 0;
        for (name, count) in &self.instances_by_category {
            acc += count;
            if instance < acc {
                return name;
            }
        }
        unreachable!("instance index within total")
    }

    // Scatter area classes over instances with a fixed stride so they do not
    // line up with categories or images.
    fn area_class_of(&self, instance: u64) -> AreaClass {
        let n = self.instances();
        let slot = scatter(instance, n);
        if slot < self.small {
            AreaClass::Small
        } else if slot < self.small + self.medium {
            AreaClass::Medium
        } else {
            AreaClass::Large
        }
    }

    fn source_of(&self, image: u64) -> SourceTag {
        let slot = scatter(image, self.images);
        if slot < self.google {
            SourceTag::Google
        } else if slot < self.google + self.baidu {
            SourceTag::Baidu
        } else {
            SourceTag::Flickr
        }
    }

    fn page_url(&self, image: u64) -> String {
        match self.source_of(image) {
            SourceTag::Google => {
                let f = image as f64;
                render_gsv_url(&GeoMetadata {
                    latitude: 60.0 + (f * 0.0137) % 10.0,
                    longitude: 24.0 + (f * 0.0291) % 20.0,
                    heading: (f * 37.0) % 360.0,
                    pitch: 80.0 + (f % 20.0),
                    fov: 75.0,
                    provider: GOOGLE_STREETVIEW.into(),
                })
            }
            SourceTag::Baidu => format!("https://map.baidu.com/#panoid=09002200011{image:09}&panotype=street"),
            _ => format!("https://www.flickr.com/photos/someone/{}", 5_000_000_000u64 + image),
        }
    }
}

// Bijection on 0..n: multiply by the smallest stride coprime with n.
fn scatter(i: u64, n: u64) -> u64 {
    let stride = (7919..).find(|s| gcd(*s, n) == 1).expect("coprime stride exists");
    (i * stride) % n
}

fn gcd(a: u64, b: u64) -> u64 {
    if b == 0 {
        a
    } else {
        gcd(b, a % b)
    }
}

fn rect(x: f64, y: f64, w: f64, h: f64) -> Vec<Point> {
    vec![Point::new(x, y), Point::new(x + w, y), Point::new(x + w, y + h), Point::new(x, y + h)]
}

fn right_triangle(x: f64, y: f64, base: f64, height: f64) -> Vec<Point> {
    vec![Point::new(x, y), Point::new(x + base, y), Point::new(x, y + height)]
}

/// A polygon in the requested area class. Variants include the exact class
/// boundaries: 1023.5 (small), 1024 and 9216 (medium), 9216.25 (large).
fn shape(class: AreaClass, instance: u64) -> Vec<Point> {
    let variant = instance % 3;
    let (w, h, tri) = match (class, variant) {
        (AreaClass::Small, 0) => (20.0, 30.0, false),
        (AreaClass::Small, 1) => (46.0, 44.5, true),
        (AreaClass::Small, _) => (5.0, 4.0, false),
        (AreaClass::Medium, 0) => (32.0, 32.0, false),
        (AreaClass::Medium, 1) => (96.0, 96.0, false),
        (AreaClass::Medium, _) => (50.0, 40.0, false),
        (AreaClass::Large, 0) => (100.0, 100.0, false),
        (AreaClass::Large, 1) => (101.0, 182.5, true),
        (AreaClass::Large, _) => (150.0, 120.0, false),
    };
    let side = f64::from(IMAGE_SIDE);
    let x = ((instance * 13) % ((side - w) as u64 + 1)) as f64;
    let y = ((instance * 7) % ((side - h).floor() as u64 + 1)) as f64;
    if tri {
        right_triangle(x, y, w, h)
    } else {
        rect(x, y, w, h)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{classify_area, polygon_area, validate_polygon};
    use crate::url_metadata::classify_source;

    #[test]
    fn shapes_land_in_their_class_and_inside_the_image() {
        let side = f64::from(IMAGE_SIDE);
        for class in AreaClass::ALL {
            for i in 0..300 {
                let p = shape(class, i);
                assert_eq!(classify_area(polygon_area(&p).unwrap()).unwrap(), class);
                assert!(validate_polygon(&p, side, side).is_empty(), "{class:?} {i}");
            }
        }
    }

    #[test]
    fn sources_classify_as_intended() {
        let spec = FixtureSpec::crowdsourced_cameras();
        for img in 0..200 {
            assert_eq!(classify_source(&spec.page_url(img)), spec.source_of(img));
        }
    }

    #[test]
    fn scatter_is_a_bijection() {
        for n in [1u64, 25, 269, 4167, 5380] {
            let mut seen: Vec<u64> = (0..n).map(|i| scatter(i, n)).collect();
            seen.sort_unstable();
            assert_eq!(seen, (0..n).collect::<Vec<_>>());
        }
    }

    #[test]
    fn small_spec_counts() {
        let spec = FixtureSpec {
            images: 5,
            instances_by_category: vec![("a".into(), 4), ("b".into(), 3)],
            small: 2,
            medium: 3,
            large: 2,
            google: 3,
            baidu: 1,
            flickr: 1,
            annotators: vec![("x".into(), 5)],
        };
        let payloads: Vec<_> = spec.payloads().collect();
        assert_eq!(payloads.len(), 5);
        assert_eq!(payloads.iter().map(|p| p.annotations.len()).sum::<usize>(), 7);
        let mut bad = spec.clone();
        bad.small = 3;
        assert!(bad.check().is_err());
    }
}
