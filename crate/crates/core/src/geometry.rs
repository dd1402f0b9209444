//! Polygon geometry in captured-image pixel space.
//!
//! Coordinates are real-valued: clicks on high-DPI displays land between
//! device pixels. Area is the absolute shoelace sum, so a self-intersecting
//! outline is accepted (with a warning from [`validate_polygon`]) and its
//! opposite-winding lobes cancel.

use std::fmt;

use serde::{Deserialize, Deserializer, Serialize, Serializer};
use thiserror::Error;

use crate::violation::{Violation, ViolationCode};

/// Smallest polygon area, in px², that can depict an object.
pub const MIN_AREA: f64 = 1.0;

/// Upper area bound of [`AreaClass::Small`] (exclusive), 32 × 32 px.
pub const SMALL_AREA_LIMIT: f64 = 32.0 * 32.0;
/// Upper area bound of [`AreaClass::Medium`] (inclusive), 96 × 96 px.
pub const MEDIUM_AREA_LIMIT: f64 = 96.0 * 96.0;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GeometryError {
    #[error("degenerate polygon: {0} vertices, at least 3 required")]
    Degenerate(usize),
    #[error("non-finite coordinate at vertex {0}")]
    NonFinite(usize),
    #[error("negative area {0}")]
    NegativeArea(f64),
    #[error("invalid flattened polygon of length {0}: need an even number of values, at least 6")]
    Encoding(usize),
}

/// A click position, serialized as `[x, y]`.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Point {
    pub x: f64,
    pub y: f64,
}

impl Point {
    pub const fn new(x: f64, y: f64) -> Self {
        Self { x, y }
    }

    pub fn is_finite(&self) -> bool {
        self.x.is_finite() && self.y.is_finite()
    }
}

impl From<(f64, f64)> for Point {
    fn from((x, y): (f64, f64)) -> Self {
        Self { x, y }
    }
}

impl Serialize for Point {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        [self.x, self.y].serialize(serializer)
    }
}

impl<'de> Deserialize<'de> for Point {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let [x, y] = <[f64; 2]>::deserialize(deserializer)?;
        Ok(Self { x, y })
    }
}

/// Closed polygon with at least three finite vertices.
///
/// Construction does not enforce the minimum area or reject repeated
/// vertices; those are reported by [`validate_polygon`] so that callers can
/// surface every problem at once.
#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(transparent)]
pub struct Polygon {
    vertices: Vec<Point>,
}

impl Polygon {
    pub fn new(vertices: Vec<Point>) -> Result<Self, GeometryError> {
        if vertices.len() < 3 {
            return Err(GeometryError::Degenerate(vertices.len()));
        }
        if let Some(i) = vertices.iter().position(|p| !p.is_finite()) {
            return Err(GeometryError::NonFinite(i));
        }
        Ok(Self { vertices })
    }

    pub fn vertices(&self) -> &[Point] {
        &self.vertices
    }

    pub fn into_vertices(self) -> Vec<Point> {
        self.vertices
    }

    pub fn len(&self) -> usize {
        self.vertices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vertices.is_empty()
    }

    pub fn area(&self) -> f64 {
        signed_area_unchecked(&self.vertices).abs()
    }

    pub fn signed_area(&self) -> f64 {
        signed_area_unchecked(&self.vertices)
    }

    pub fn bbox(&self) -> BBox {
        bbox_unchecked(&self.vertices)
    }

    /// COCO segmentation encoding `[x1, y1, ..., xk, yk]`.
    pub fn flatten(&self) -> Vec<f64> {
        self.vertices.iter().flat_map(|p| [p.x, p.y]).collect()
    }
}

impl TryFrom<Vec<Point>> for Polygon {
    type Error = GeometryError;

    fn try_from(vertices: Vec<Point>) -> Result<Self, Self::Error> {
        Self::new(vertices)
    }
}

impl<'de> Deserialize<'de> for Polygon {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let vertices = Vec::<Point>::deserialize(deserializer)?;
        Polygon::new(vertices).map_err(serde::de::Error::custom)
    }
}

/// Axis-aligned box `[x, y, width, height]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BBox {
    pub x: f64,
    pub y: f64,
    pub width: f64,
    pub height: f64,
}

impl BBox {
    pub fn to_array(self) -> [f64; 4] {
        [self.x, self.y, self.width, self.height]
    }

    pub fn from_array([x, y, width, height]: [f64; 4]) -> Self {
        Self { x, y, width, height }
    }

    pub fn area(&self) -> f64 {
        self.width * self.height
    }

    /// Closed-box containment with an absolute slack of `tol` pixels.
    pub fn contains(&self, p: Point, tol: f64) -> bool {
        p.x >= self.x - tol
            && p.y >= self.y - tol
            && p.x <= self.x + self.width + tol
            && p.y <= self.y + self.height + tol
    }
}

impl Serialize for BBox {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        self.to_array().serialize(serializer)
    }
}

impl<'de> Deserialize<'de> for BBox {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        <[f64; 4]>::deserialize(deserializer).map(Self::from_array)
    }
}

/// Instance size bins at 32² and 96² px².
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AreaClass {
    Small,
    Medium,
    Large,
}

impl AreaClass {
    pub const ALL: [AreaClass; 3] = [AreaClass::Small, AreaClass::Medium, AreaClass::Large];

    pub fn label(self) -> &'static str {
        match self {
            AreaClass::Small => "Small (<32x32 px)",
            AreaClass::Medium => "Medium (32x32 -- 96x96 px)",
            AreaClass::Large => "Large (>96x96 px)",
        }
    }
}

impl fmt::Display for AreaClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            AreaClass::Small => "small",
            AreaClass::Medium => "medium",
            AreaClass::Large => "large",
        })
    }
}

fn check_vertices(vertices: &[Point]) -> Result<(), GeometryError> {
    if vertices.len() < 3 {
        return Err(GeometryError::Degenerate(vertices.len()));
    }
    if let Some(i) = vertices.iter().position(|p| !p.is_finite()) {
        return Err(GeometryError::NonFinite(i));
    }
    Ok(())
}

// Shoelace sum taken relative to the first vertex; same value, less cancellation
// for polygons far from the origin.
fn signed_area_unchecked(vertices: &[Point]) -> f64 {
    let origin = vertices[0];
    let n = vertices.len();
    let mut twice = 0.0;
    for i in 0..n {
        let a = vertices[i];
        let b = vertices[(i + 1) % n];
        let (ax, ay) = (a.x - origin.x, a.y - origin.y);
        let (bx, by) = (b.x - origin.x, b.y - origin.y);
        twice += ax * by - bx * ay;
    }
    twice / 2.0
}

fn bbox_unchecked(vertices: &[Point]) -> BBox {
    let (mut min_x, mut min_y) = (f64::INFINITY, f64::INFINITY);
    let (mut max_x, mut max_y) = (f64::NEG_INFINITY, f64::NEG_INFINITY);
    for p in vertices {
        min_x = min_x.min(p.x);
        min_y = min_y.min(p.y);
        max_x = max_x.max(p.x);
        max_y = max_y.max(p.y);
    }
    BBox { x: min_x, y: min_y, width: max_x - min_x, height: max_y - min_y }
}

/// Absolute shoelace area of a closed vertex ring.
pub fn polygon_area(vertices: &[Point]) -> Result<f64, GeometryError> {
    check_vertices(vertices)?;
    Ok(signed_area_unchecked(vertices).abs())
}

/// Signed shoelace area; positive for counter-clockwise rings in a y-up frame.
pub fn signed_area(vertices: &[Point]) -> Result<f64, GeometryError> {
    check_vertices(vertices)?;
    Ok(signed_area_unchecked(vertices))
}

pub fn polygon_bbox(vertices: &[Point]) -> Result<BBox, GeometryError> {
    check_vertices(vertices)?;
    Ok(bbox_unchecked(vertices))
}

pub fn classify_area(area: f64) -> Result<AreaClass, GeometryError> {
    if area.is_nan() || area < 0.0 {
        return Err(GeometryError::NegativeArea(area));
    }
    Ok(if area < SMALL_AREA_LIMIT {
        AreaClass::Small
    } else if area <= MEDIUM_AREA_LIMIT {
        AreaClass::Medium
    } else {
        AreaClass::Large
    })
}

pub fn unflatten(values: &[f64]) -> Result<Polygon, GeometryError> {
    if values.len() < 6 || !values.len().is_multiple_of(2) {
        return Err(GeometryError::Encoding(values.len()));
    }
    Polygon::new(values.chunks_exact(2).map(|c| Point::new(c[0], c[1])).collect())
}

/// Checks a raw vertex list against an image of `image_w` × `image_h` pixels.
///
/// Everything except self-intersection is an error; a self-intersecting
/// outline only produces a warning.
pub fn validate_polygon(vertices: &[Point], image_w: f64, image_h: f64) -> Vec<Violation> {
    let mut out = Vec::new();
    if let Some(i) = vertices.iter().position(|p| !p.is_finite()) {
        out.push(Violation::error(
            ViolationCode::NonFiniteCoordinate,
            format!("vertex {i} has a non-finite coordinate"),
        ));
        return out;
    }
    if vertices.len() < 3 {
        out.push(Violation::error(
            ViolationCode::TooFewVertices,
            format!("polygon has {} vertices, at least 3 required", vertices.len()),
        ));
        return out;
    }
    let n = vertices.len();
    for i in 0..n {
        let j = (i + 1) % n;
        if vertices[i] == vertices[j] {
            out.push(Violation::error(
                ViolationCode::ConsecutiveDuplicateVertex,
                format!("vertices {i} and {j} are identical"),
            ));
        }
    }
    let area = signed_area_unchecked(vertices).abs();
    if area < MIN_AREA {
        out.push(Violation::error(
            ViolationCode::AreaBelowMinimum,
            format!("area below minimum: {area} px² < {MIN_AREA} px²"),
        ));
    }
    for (i, p) in vertices.iter().enumerate() {
        if p.x < 0.0 || p.y < 0.0 || p.x > image_w || p.y > image_h {
            out.push(Violation::error(
                ViolationCode::VertexOutOfBounds,
                format!(
                    "vertex out of bounds: vertex {i} at ({}, {}) outside {image_w}x{image_h} image",
                    p.x, p.y
                ),
            ));
        }
    }
    if let Some((a, b)) = first_self_intersection(vertices) {
        out.push(Violation::warning(
            ViolationCode::SelfIntersection,
            format!("edges {a} and {b} cross; overlapping lobes may cancel in the area"),
        ));
    }
    out
}

/// Returns the first pair of non-adjacent edges that touch or cross.
pub fn first_self_intersection(vertices: &[Point]) -> Option<(usize, usize)> {
    let n = vertices.len();
    if n < 4 {
        return None;
    }
    for i in 0..n {
        let (a1, a2) = (vertices[i], vertices[(i + 1) % n]);
        for j in (i + 2)..n {
            // the first and last edges share vertex 0
            if i == 0 && j == n - 1 {
                continue;
            }
            let (b1, b2) = (vertices[j], vertices[(j + 1) % n]);
            if segments_intersect(a1, a2, b1, b2) {
                return Some((i, j));
            }
        }
    }
    None
}

fn orient(a: Point, b: Point, c: Point) -> f64 {
    (b.x - a.x) * (c.y - a.y) - (b.y - a.y) * (c.x - a.x)
}

fn on_segment(a: Point, b: Point, p: Point) -> bool {
    p.x >= a.x.min(b.x) && p.x <= a.x.max(b.x) && p.y >= a.y.min(b.y) && p.y <= a.y.max(b.y)
}

fn segments_intersect(p1: Point, p2: Point, q1: Point, q2: Point) -> bool {
    let d1 = orient(q1, q2, p1);
    let d2 = orient(q1, q2, p2);
    let d3 = orient(p1, p2, q1);
    let d4 = orient(p1, p2, q2);
    if ((d1 > 0.0 && d2 < 0.0) || (d1 < 0.0 && d2 > 0.0))
        && ((d3 > 0.0 && d4 < 0.0) || (d3 < 0.0 && d4 > 0.0))
    {
        return true;
    }
    (d1 == 0.0 && on_segment(q1, q2, p1))
        || (d2 == 0.0 && on_segment(q1, q2, p2))
        || (d3 == 0.0 && on_segment(p1, p2, q1))
        || (d4 == 0.0 && on_segment(p1, p2, q2))
}
