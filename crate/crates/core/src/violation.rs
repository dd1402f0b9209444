//! Machine-readable validation findings shared by geometry, COCO and payload checks.

use std::fmt;

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Severity {
    Error,
    Warning,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ViolationCode {
    // polygon checks
    TooFewVertices,
    ConsecutiveDuplicateVertex,
    AreaBelowMinimum,
    VertexOutOfBounds,
    NonFiniteCoordinate,
    SelfIntersection,
    // COCO structure
    ZeroId,
    DuplicateImageId,
    DuplicateAnnotationId,
    DuplicateCategoryId,
    DuplicateCategoryName,
    EmptyCategoryName,
    EmptyFileName,
    InvalidImageDimensions,
    DanglingImageId,
    DanglingCategoryId,
    EmptySegmentation,
    PolygonTooShort,
    PolygonOddLength,
    NonPositiveArea,
    InvalidBbox,
    BboxDoesNotContainSegmentation,
    NonZeroIscrowd,
    // submission payloads
    InvalidImage,
    ImageViewportMismatch,
    NoAnnotations,
    UnknownCategory,
    InvalidTimestamp,
    InvalidViewport,
    EmptyAnnotatorId,
    MalformedPayload,
}

impl ViolationCode {
    pub fn as_str(self) -> &'static str {
        use ViolationCode::*;
        match self {
            TooFewVertices => "too_few_vertices",
            ConsecutiveDuplicateVertex => "consecutive_duplicate_vertex",
            AreaBelowMinimum => "area_below_minimum",
            VertexOutOfBounds => "vertex_out_of_bounds",
            NonFiniteCoordinate => "non_finite_coordinate",
            SelfIntersection => "self_intersection",
            ZeroId => "zero_id",
            DuplicateImageId => "duplicate_image_id",
            DuplicateAnnotationId => "duplicate_annotation_id",
            DuplicateCategoryId => "duplicate_category_id",
            DuplicateCategoryName => "duplicate_category_name",
            EmptyCategoryName => "empty_category_name",
            EmptyFileName => "empty_file_name",
            InvalidImageDimensions => "invalid_image_dimensions",
            DanglingImageId => "dangling_image_id",
            DanglingCategoryId => "dangling_category_id",
            EmptySegmentation => "empty_segmentation",
            PolygonTooShort => "polygon_too_short",
            PolygonOddLength => "polygon_odd_length",
            NonPositiveArea => "non_positive_area",
            InvalidBbox => "invalid_bbox",
            BboxDoesNotContainSegmentation => "bbox_does_not_contain_segmentation",
            NonZeroIscrowd => "non_zero_iscrowd",
            InvalidImage => "invalid_image",
            ImageViewportMismatch => "image_viewport_mismatch",
            NoAnnotations => "no_annotations",
            UnknownCategory => "unknown_category",
            InvalidTimestamp => "invalid_timestamp",
            InvalidViewport => "invalid_viewport",
            EmptyAnnotatorId => "empty_annotator_id",
            MalformedPayload => "malformed_payload",
        }
    }
}

impl fmt::Display for ViolationCode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// One broken invariant: a stable code plus a human-readable message.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Violation {
    pub code: ViolationCode,
    pub severity: Severity,
    pub message: String,
}

impl Violation {
    pub fn error(code: ViolationCode, message: impl Into<String>) -> Self {
        Self { code, severity: Severity::Error, message: message.into() }
    }

    pub fn warning(code: ViolationCode, message: impl Into<String>) -> Self {
        Self { code, severity: Severity::Warning, message: message.into() }
    }

    pub fn is_error(&self) -> bool {
        self.severity == Severity::Error
    }

    /// Prefixes the message with the location it was found at.
    pub fn at(mut self, location: impl fmt::Display) -> Self {
        self.message = format!("{location}: {}", self.message);
        self
    }
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "[{}] {}", self.code, self.message)
    }
}

/// Keeps only error-severity entries.
pub fn errors_only(violations: Vec<Violation>) -> Vec<Violation> {
    violations.into_iter().filter(Violation::is_error).collect()
}
