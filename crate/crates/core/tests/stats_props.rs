mod common;

use proptest::prelude::*;
use viewmark::stats::{compute_annotator_stats, compute_dataset_stats, compute_survey_summary, SurveyResponse};
use viewmark::storage::QcEvent;
use viewmark::Timestamp;

/// (image seed, annotator) submissions plus per-image verdict codes
/// (0 pending, 1 approved, 2 disqualified).
fn build(subs: &[(u64, u8)], verdicts: &[u8]) -> (tempfile::TempDir, viewmark::Store) {
    let dir = tempfile::tempdir().unwrap();
    let store = common::open_store(dir.path());
    for (seed, who) in subs {
        store.append_submission(common::record(&store, *seed, &format!("p{who}"))).unwrap();
    }
    for (seed, v) in verdicts.iter().enumerate() {
        let img = viewmark::storage::content_hash(&common::png(seed as u64));
        if !store.state().has_image(&img) {
            continue;
        }
        let at = Timestamp::from_unix_millis(1_000_000).unwrap();
        match v {
            1 => drop(store.append_qc(QcEvent::approve(&img, "r", at)).unwrap()),
            2 => drop(store.append_qc(QcEvent::disqualify(&img, "bad", "r", at)).unwrap()),
            _ => {}
        }
    }
    (dir, store)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn partitions_and_monotonicity(
        subs in proptest::collection::vec((0u64..8, 0u8..3), 1..20),
        verdicts in proptest::collection::vec(0u8..3, 8),
    ) {
        let (_dir, store) = build(&subs, &verdicts);
        let state = store.state();
        let cats = common::categories();
        let approved = compute_dataset_stats(&state, &cats, true);
        let all = compute_dataset_stats(&state, &cats, false);
        prop_assert!(approved.partitions_hold() && all.partitions_hold());
        prop_assert!(approved.total_images <= all.total_images);
        prop_assert!(approved.total_instances <= all.total_instances);
        prop_assert_eq!(all.total_images as usize, state.image_count());
        prop_assert_eq!(all.total_instances as usize, state.len());

        let report = compute_annotator_stats(&state);
        for a in &report.annotators {
            prop_assert!(a.approved_images + a.disqualified_images <= a.submitted_images);
            prop_assert!((0.0..=100.0).contains(&a.dq_rate));
        }
        prop_assert_eq!(report.footer.sum_approved, report.annotators.iter().map(|a| a.approved_images).sum::<u64>());
    }

    #[test]
    fn approving_never_lowers_counts(
        subs in proptest::collection::vec((0u64..6, 0u8..2), 1..12),
        verdicts in proptest::collection::vec(0u8..3, 6),
        flip in 0usize..6,
    ) {
        let cats = common::categories();
        let (_d1, before) = build(&subs, &verdicts);
        let mut more = verdicts.clone();
        more[flip] = 1;
        let (_d2, after) = build(&subs, &more);
        let b = compute_dataset_stats(&before.state(), &cats, true);
        let a = compute_dataset_stats(&after.state(), &cats, true);
        prop_assert!(a.total_images >= b.total_images);
        prop_assert!(a.total_instances >= b.total_instances);
        for (k, v) in &b.instances_by_area {
            prop_assert!(a.instances_by_area[k] >= *v);
        }
    }

    #[test]
    fn survey_means_ignore_missing_answers(scores in proptest::collection::vec(proptest::option::of(0u8..=5), 1..10)) {
        let responses: Vec<SurveyResponse> = scores
            .iter()
            .enumerate()
            .map(|(i, s)| SurveyResponse {
                annotator_id: format!("p{i}"),
                annotation_expertise: s.map(f64::from),
                ..Default::default()
            })
            .collect();
        let summary = compute_survey_summary(responses).unwrap();
        let present: Vec<f64> = scores.iter().flatten().map(|v| f64::from(*v)).collect();
        let expect = (!present.is_empty()).then(|| present.iter().sum::<f64>() / present.len() as f64);
        prop_assert_eq!(summary.mean_annotation_expertise, expect);
        prop_assert_eq!(summary.mean_easy_setup, None);
    }
}

#[test]
fn out_of_range_scores_are_rejected() {
    let r = SurveyResponse { annotator_id: "x".into(), easy_setup: Some(6.0), ..Default::default() };
    assert!(compute_survey_summary(vec![r]).is_err());
}
