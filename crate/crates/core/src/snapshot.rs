//! Deterministic COCO export of the stored state.
//!
//! Submissions are grouped by image (several annotators may submit the same
//! capture). Within a group submissions are ordered by `(captured_at,
//! submission_id)` and the first one supplies the image's provenance fields.
//! Images are ordered by `(captured_at, image_ref)` of that first submission
//! and numbered from 1; annotations follow image order, then submission
//! order, then draft order.

use std::collections::{BTreeMap, HashMap};

use crate::categories::CategorySet;
use crate::coco::{self, CocoAnnotation, CocoDataset, CocoImage};
use crate::storage::{State, SubmissionRecord, Verdict};

/// All submissions for one stored image.
#[derive(Debug, Clone)]
pub struct ImageGroup<'a> {
    pub image_ref: &'a str,
    pub submissions: Vec<&'a SubmissionRecord>,
}

impl<'a> ImageGroup<'a> {
    pub fn first(&self) -> &'a SubmissionRecord {
        self.submissions[0]
    }
}

/// Groups the state's submissions by image in snapshot order, keeping only
/// approved images when `approved_only` is set.
pub fn image_groups(state: &State, approved_only: bool) -> Vec<ImageGroup<'_>> {
    let mut groups: HashMap<&str, Vec<&SubmissionRecord>> = HashMap::new();
    for rec in state.submissions() {
        if approved_only && state.verdict(&rec.image_ref) != Some(Verdict::Approved) {
            continue;
        }
        groups.entry(rec.image_ref.as_str()).or_default().push(rec);
    }
    let mut out: Vec<ImageGroup<'_>> = groups
        .into_iter()
        .map(|(image_ref, mut submissions)| {
            submissions.sort_by(|a, b| (a.captured_at, &a.submission_id).cmp(&(b.captured_at, &b.submission_id)));
            ImageGroup { image_ref, submissions }
        })
        .collect();
    out.sort_by(|a, b| (a.first().captured_at, a.image_ref).cmp(&(b.first().captured_at, b.image_ref)));
    out
}

fn info(state: &State) -> BTreeMap<String, String> {
    let mut info = BTreeMap::new();
    info.insert("description".to_owned(), "Browser viewport annotation snapshot".to_owned());
    info.insert("version".to_owned(), crate::VERSION.to_owned());
    // latest server receipt time keeps the value a pure function of the store
    if let Some(latest) = state.submissions().map(|r| r.received_at).max() {
        info.insert("date_created".to_owned(), latest.to_rfc3339());
    }
    info
}

/// Builds the COCO dataset for the current state.
pub fn build_snapshot(state: &State, categories: &CategorySet, approved_only: bool) -> CocoDataset {
    let mut ds = CocoDataset::with_categories(categories);
    ds.info = info(state);
    let mut next_annotation = 1u64;
    for (idx, group) in image_groups(state, approved_only).iter().enumerate() {
        let image_id = idx as u64 + 1;
        let first = group.first();
        ds.images.push(CocoImage {
            id: image_id,
            file_name: format!("{}.png", group.image_ref),
            width: first.image_width,
            height: first.image_height,
            source_url: first.page_url.clone(),
            captured_at: first.captured_at.to_rfc3339(),
            annotator_id: first.annotator_id.clone(),
            geo: first.geo.clone(),
            extra: BTreeMap::new(),
        });
        for rec in &group.submissions {
            for draft in &rec.drafts {
                let Some(cat) = categories.by_name(&draft.category_name) else {
                    tracing::warn!(
                        submission = %rec.submission_id,
                        category = %draft.category_name,
                        "skipping draft with unconfigured category"
                    );
                    continue;
                };
                ds.annotations.push(CocoAnnotation {
                    id: next_annotation,
                    image_id,
                    category_id: cat.id,
                    segmentation: vec![draft.polygon.flatten()],
                    area: draft.polygon.area(),
                    bbox: draft.polygon.bbox(),
                    iscrowd: 0,
                    attributes: draft.attributes.clone(),
                    extra: BTreeMap::new(),
                });
                next_annotation += 1;
            }
        }
    }
    ds
}

/// Canonical JSON bytes of [`build_snapshot`].
///
/// Drafts are validated at ingestion, so the export is valid by construction;
/// a violation here means the store holds data that bypassed ingestion.
pub fn snapshot_json(state: &State, categories: &CategorySet, approved_only: bool) -> Result<Vec<u8>, coco::CocoError> {
    coco::serialize_dataset(&build_snapshot(state, categories, approved_only))
}
