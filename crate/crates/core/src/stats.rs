//! Dataset totals and per-annotator quality statistics.

use std::collections::{BTreeMap, HashSet};
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::categories::CategorySet;
use crate::geometry::{classify_area, AreaClass};
use crate::snapshot::image_groups;
use crate::storage::{State, Verdict};
use crate::url_metadata::{classify_source, SourceTag};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnnotatorStats {
    pub annotator_id: String,
    pub submitted_images: u64,
    pub approved_images: u64,
    pub disqualified_images: u64,
    /// Percentage of submitted images that were disqualified.
    pub dq_rate: f64,
}

impl AnnotatorStats {
    pub fn new(annotator_id: &str, submitted: u64, approved: u64, disqualified: u64) -> Self {
        let dq_rate = if submitted == 0 { 0.0 } else { 100.0 * disqualified as f64 / submitted as f64 };
        Self {
            annotator_id: annotator_id.into(),
            submitted_images: submitted,
            approved_images: approved,
            disqualified_images: disqualified,
            dq_rate,
        }
    }
}

/// Totals row under the per-annotator table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnnotatorFooter {
    pub sum_approved: u64,
    pub mean_approved: f64,
    /// Unweighted mean of the per-annotator DQ rates.
    pub mean_dq: f64,
}

impl AnnotatorFooter {
    pub fn from_rows(rows: &[AnnotatorStats]) -> Self {
        let sum_approved: u64 = rows.iter().map(|r| r.approved_images).sum();
        if rows.is_empty() {
            return Self { sum_approved, mean_approved: 0.0, mean_dq: 0.0 };
        }
        let n = rows.len() as f64;
        Self {
            sum_approved,
            mean_approved: sum_approved as f64 / n,
            mean_dq: rows.iter().map(|r| r.dq_rate).sum::<f64>() / n,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnnotatorReport {
    pub annotators: Vec<AnnotatorStats>,
    pub footer: AnnotatorFooter,
}

impl AnnotatorReport {
    pub fn from_rows(annotators: Vec<AnnotatorStats>) -> Self {
        let footer = AnnotatorFooter::from_rows(&annotators);
        Self { annotators, footer }
    }
}

/// Per-annotator counts over distinct images, sorted by annotator id.
pub fn compute_annotator_stats(state: &State) -> AnnotatorReport {
    let mut images: BTreeMap<&str, HashSet<&str>> = BTreeMap::new();
    for rec in state.submissions() {
        images.entry(rec.annotator_id.as_str()).or_default().insert(rec.image_ref.as_str());
    }
    let rows = images
        .into_iter()
        .map(|(annotator, refs)| {
            let mut approved = 0;
            let mut disqualified = 0;
            for r in &refs {
                match state.verdict(r) {
                    Some(Verdict::Approved) => approved += 1,
                    Some(Verdict::Disqualified) => disqualified += 1,
                    None => {}
                }
            }
            AnnotatorStats::new(annotator, refs.len() as u64, approved, disqualified)
        })
        .collect();
    AnnotatorReport::from_rows(rows)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DatasetStats {
    pub total_images: u64,
    pub total_instances: u64,
    pub instances_by_category: BTreeMap<String, u64>,
    pub instances_by_area: BTreeMap<AreaClass, u64>,
    pub images_by_source: BTreeMap<SourceTag, u64>,
}

impl DatasetStats {
    pub fn empty(categories: &CategorySet) -> Self {
        Self {
            total_images: 0,
            total_instances: 0,
            instances_by_category: categories.iter().map(|c| (c.name.clone(), 0)).collect(),
            instances_by_area: AreaClass::ALL.iter().map(|&c| (c, 0)).collect(),
            images_by_source: SourceTag::ALL.iter().map(|&s| (s, 0)).collect(),
        }
    }

    /// The three partition identities: category, area and source breakdowns
    /// each sum to their total.
    pub fn partitions_hold(&self) -> bool {
        self.instances_by_category.values().sum::<u64>() == self.total_instances
            && self.instances_by_area.values().sum::<u64>() == self.total_instances
            && self.images_by_source.values().sum::<u64>() == self.total_images
    }
}

/// Image and instance counts. With `approved_only`, pending and disqualified
/// images are left out.
pub fn compute_dataset_stats(state: &State, categories: &CategorySet, approved_only: bool) -> DatasetStats {
    let mut stats = DatasetStats::empty(categories);
    for group in image_groups(state, approved_only) {
        stats.total_images += 1;
        *stats.images_by_source.entry(classify_source(&group.first().page_url)).or_default() += 1;
        for rec in &group.submissions {
            for draft in &rec.drafts {
                stats.total_instances += 1;
                *stats.instances_by_category.entry(draft.category_name.clone()).or_default() += 1;
                let class = classify_area(draft.polygon.area()).expect("polygon area is non-negative");
                *stats.instances_by_area.entry(class).or_default() += 1;
            }
        }
    }
    stats
}

/// Self-reported scores, each on a 0 to 5 scale; `None` means no response.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct SurveyResponse {
    pub annotator_id: String,
    pub annotation_expertise: Option<f64>,
    pub easy_setup: Option<f64>,
    pub overall_experience: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SurveySummary {
    pub responses: Vec<SurveyResponse>,
    pub mean_annotation_expertise: Option<f64>,
    pub mean_easy_setup: Option<f64>,
    pub mean_overall_experience: Option<f64>,
}

#[derive(Debug, Error, PartialEq)]
pub enum StatsError {
    #[error("{annotator}: {field} score {value} outside 0..=5")]
    ScoreOutOfRange { annotator: String, field: &'static str, value: f64 },
}

fn mean_present(values: impl Iterator<Item = Option<f64>>) -> Option<f64> {
    let present: Vec<f64> = values.flatten().collect();
    (!present.is_empty()).then(|| present.iter().sum::<f64>() / present.len() as f64)
}

/// Survey means taken over respondents only; a missing answer is never
/// counted as zero.
pub fn compute_survey_summary(responses: Vec<SurveyResponse>) -> Result<SurveySummary, StatsError> {
    for r in &responses {
        let fields = [
            ("annotation_expertise", r.annotation_expertise),
            ("easy_setup", r.easy_setup),
            ("overall_experience", r.overall_experience),
        ];
        for (field, value) in fields {
            if let Some(v) = value {
                if !(0.0..=5.0).contains(&v) {
                    return Err(StatsError::ScoreOutOfRange { annotator: r.annotator_id.clone(), field, value: v });
                }
            }
        }
    }
    Ok(SurveySummary {
        mean_annotation_expertise: mean_present(responses.iter().map(|r| r.annotation_expertise)),
        mean_easy_setup: mean_present(responses.iter().map(|r| r.easy_setup)),
        mean_overall_experience: mean_present(responses.iter().map(|r| r.overall_experience)),
        responses,
    })
}

/// Dataset and annotator statistics as served by the API and printed by the CLI.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StatsReport {
    pub dataset: DatasetStats,
    pub annotators: Vec<AnnotatorStats>,
    pub footer: AnnotatorFooter,
}

pub fn compute_report(state: &State, categories: &CategorySet, approved_only: bool) -> StatsReport {
    let AnnotatorReport { annotators, footer } = compute_annotator_stats(state);
    StatsReport { dataset: compute_dataset_stats(state, categories, approved_only), annotators, footer }
}

/// Plain-text rendering: a totals table laid out as total counts /
/// instances by category / images by source / instances by area, followed by
/// the per-annotator table.
pub fn render_table(report: &StatsReport, categories: &CategorySet) -> String {
    let d = &report.dataset;
    let mut out = String::new();
    let row = |out: &mut String, label: &str, value: u64| {
        let _ = writeln!(out, "  {label:<40} {value:>8}");
    };
    out.push_str("Total counts\n");
    row(&mut out, "Total collected images", d.total_images);
    row(&mut out, "Total annotated instances", d.total_instances);
    out.push_str("Instances grouped by category\n");
    let mut names: Vec<&str> = categories.iter().map(|c| c.name.as_str()).collect();
    names.extend(d.instances_by_category.keys().map(String::as_str).filter(|n| !categories.contains(n)));
    for name in names {
        row(&mut out, &format!("{name} instances"), d.instances_by_category.get(name).copied().unwrap_or(0));
    }
    out.push_str("Images grouped by source\n");
    for (tag, n) in &d.images_by_source {
        row(&mut out, tag.label(), *n);
    }
    out.push_str("Instances grouped by area\n");
    for (class, n) in &d.instances_by_area {
        row(&mut out, class.label(), *n);
    }
    out.push('\n');
    let _ = writeln!(out, "{:<20} {:>10} {:>10} {:>8}", "Annotator", "Submitted", "Approved", "DQ %");
    for a in &report.annotators {
        let _ = writeln!(
            out,
            "{:<20} {:>10} {:>10} {:>7.1}%",
            a.annotator_id, a.submitted_images, a.approved_images, a.dq_rate
        );
    }
    let f = &report.footer;
    let _ = writeln!(out, "{:<20} {:>10} {:>10.2} {:>7.2}%", "avg.", "", f.mean_approved, f.mean_dq);
    let _ = writeln!(out, "{:<20} {:>10} {:>10} {:>8}", "sum", "", f.sum_approved, "--");
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn dq_rate_definition() {
        let a = AnnotatorStats::new("x", 10, 10, 0);
        assert_eq!(a.dq_rate, 0.0);
        let b = AnnotatorStats::new("y", 0, 0, 0);
        assert_eq!(b.dq_rate, 0.0);
        let c = AnnotatorStats::new("z", 8, 6, 2);
        assert_eq!(c.dq_rate, 25.0);
    }

    #[test]
    fn survey_means_skip_missing() {
        let resp = |e: Option<f64>| SurveyResponse { annotation_expertise: e, ..Default::default() };
        let s = compute_survey_summary(vec![resp(Some(1.0)), resp(None), resp(Some(4.0))]).unwrap();
        assert_eq!(s.mean_annotation_expertise, Some(2.5));
        assert_eq!(s.mean_easy_setup, None);
        assert!(compute_survey_summary(vec![resp(Some(5.5))]).is_err());
        assert!(compute_survey_summary(vec![resp(Some(-0.1))]).is_err());
    }

    #[test]
    fn empty_footer() {
        let f = AnnotatorFooter::from_rows(&[]);
        assert_eq!(f, AnnotatorFooter { sum_approved: 0, mean_approved: 0.0, mean_dq: 0.0 });
    }
}
