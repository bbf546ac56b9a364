//! Property tests for metrics, encoding, splits, fusion and smoothing.

use std::collections::BTreeSet;

use proptest::prelude::*;

use ldri::dataio::{build_schema, split, ColumnConfig, InteractionRecord, SplitMode, OOV_INDEX, SECONDS_PER_DAY};
use ldri::evaluation::{build_groups, hr_at_k, map_at_k, ndcg_at_k, recall_at_k, summarize};
use ldri::inference::{assign_ranks, fuse, infer_policy1, infer_policy2, IntervalPrior, ScoredExample};
use ldri::perceptron::{window_smooth, RecencyVector, WindowConfig};

fn relevance() -> impl Strategy<Value = Vec<bool>> {
    prop::collection::vec(any::<bool>(), 1..12).prop_filter("needs a positive", |r| r.iter().any(|x| *x))
}

fn record(user: u8, video: u8, day: i64, age: i64, label: bool) -> InteractionRecord {
    let t = 1_600_000_000 + day * SECONDS_PER_DAY + 3600;
    InteractionRecord {
        user_id: format!("u{user}"),
        video_id: format!("v{video}"),
        interaction_time: t,
        release_time: t - age * SECONDS_PER_DAY,
        label: u8::from(label),
        categorical_features: vec![
            ("user_cluster".into(), format!("c{}", user % 3)),
            ("author_id".into(), format!("a{}", video % 5)),
            ("category".into(), format!("t{}", video % 2)),
        ],
        dense_features: vec![("user_activity".into(), f64::from(user) / 10.0), ("duration".into(), f64::from(video) + 1.0)],
    }
}

fn records() -> impl Strategy<Value = Vec<InteractionRecord>> {
    prop::collection::vec((0u8..8, 0u8..12, 0i64..10, 0i64..40, any::<bool>()), 4..60)
        .prop_map(|rows| rows.into_iter().map(|(u, v, d, a, y)| record(u, v, d, a, y)).collect())
}

fn key(r: &InteractionRecord) -> (String, String, i64, u8) {
    (r.user_id.clone(), r.video_id.clone(), r.interaction_time, r.label)
}

proptest! {
    #[test]
    fn metrics_bounded_and_ordered(rel in relevance(), k in 1usize..15) {
        let (r, m, n, h) = (recall_at_k(&rel, k), map_at_k(&rel, k), ndcg_at_k(&rel, k), hr_at_k(&rel, k));
        for v in [r, m, n, h] {
            prop_assert!((0.0..=1.0).contains(&v));
        }
        prop_assert!(h >= r);
        prop_assert!(recall_at_k(&rel, k + 1) >= r);
        prop_assert!(hr_at_k(&rel, k + 1) >= h);
    }

    #[test]
    fn ndcg_is_one_iff_top_ranks_are_positive(rel in relevance(), k in 1usize..15) {
        let pos = rel.iter().filter(|x| **x).count();
        let top_all_positive = rel.iter().take(k.min(pos)).all(|x| *x);
        prop_assert_eq!((ndcg_at_k(&rel, k) - 1.0).abs() < 1e-12, top_all_positive);
    }

    #[test]
    fn summary_is_mean_over_users_with_positives(lists in prop::collection::vec(prop::collection::vec((any::<bool>(), 0.0f64..1.0), 1..8), 1..6)) {
        let mut scores = Vec::new();
        for (u, list) in lists.iter().enumerate() {
            for (v, (y, s)) in list.iter().enumerate() {
                scores.push(ScoredExample {
                    user_id: format!("u{u}"), video_id: format!("v{v}"), interval: 0, label: u8::from(*y),
                    matching_logit: 0.0, m_hat: *s, recency: None, y_hat: *s, rank: 0,
                });
            }
        }
        let groups = build_groups(&scores);
        let eligible: Vec<Vec<bool>> = groups.iter().map(|g| g.relevance()).filter(|r| r.iter().any(|x| *x)).collect();
        match summarize(&groups, &[3]) {
            Err(_) => prop_assert!(eligible.is_empty()),
            Ok(s) => {
                prop_assert_eq!(s.evaluated_users, eligible.len());
                prop_assert_eq!(s.excluded_users, groups.len() - eligible.len());
                let mean = eligible.iter().map(|r| ndcg_at_k(r, 3)).sum::<f64>() / eligible.len() as f64;
                prop_assert!((s.rows[0].ndcg - mean).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn ranks_are_a_permutation_per_user(ys in prop::collection::vec((0u8..3, 0.0f64..1.0), 1..20)) {
        let mut scores: Vec<ScoredExample> = ys.iter().enumerate().map(|(i, (u, y))| ScoredExample {
            user_id: format!("u{u}"), video_id: format!("v{i:02}"), interval: 0, label: 0,
            matching_logit: 0.0, m_hat: *y, recency: None, y_hat: *y, rank: 0,
        }).collect();
        assign_ranks(&mut scores);
        for u in 0..3 {
            let name = format!("u{u}");
            let mine: Vec<&ScoredExample> = scores.iter().filter(|s| s.user_id == name).collect();
            let ranks: Vec<usize> = mine.iter().map(|s| s.rank).collect();
            prop_assert_eq!(ranks, (1..=mine.len()).collect::<Vec<_>>());
            prop_assert!(mine.windows(2).all(|w| w[0].y_hat >= w[1].y_hat));
        }
    }

    #[test]
    fn schema_sees_only_train_and_encoding_is_pure(train in records(), test in records()) {
        let cols = ColumnConfig::synthetic();
        let schema = build_schema(&train, &cols, 30).unwrap();
        let train_ids: BTreeSet<&str> = train.iter().map(|r| r.video_id.as_str()).collect();
        let vocab: BTreeSet<&str> = schema.video_ids().iter().map(String::as_str).collect();
        prop_assert_eq!(&vocab, &train_ids);
        for r in &test {
            let a = schema.encode(r);
            prop_assert_eq!(&a, &schema.encode(r));
            prop_assert_eq!(a.video_indices[0] == OOV_INDEX, !train_ids.contains(r.video_id.as_str()));
            prop_assert!(a.interval.value() < 30);
        }
    }

    #[test]
    fn ratio_split_partitions(recs in records(), seed in any::<u64>()) {
        let s = split(recs.clone(), &SplitMode::Ratio { train: 0.6, validation: 0.2, test: 0.2, seed });
        if let Ok(s) = s {
            let mut got: Vec<_> = s.train.iter().chain(&s.validation).chain(&s.test).map(key).collect();
            let mut want: Vec<_> = recs.iter().map(key).collect();
            got.sort();
            want.sort();
            prop_assert_eq!(got, want);
            let again = split(recs, &SplitMode::Ratio { train: 0.6, validation: 0.2, test: 0.2, seed }).unwrap();
            prop_assert_eq!(again.train, s.train);
        }
    }

    #[test]
    fn date_split_is_chronological(recs in records()) {
        if let Ok(s) = split(recs, &SplitMode::ByDate { train_end_day: 3, validation_end_day: 6 }) {
            let last = |v: &[InteractionRecord]| v.iter().map(|r| r.interaction_time).max();
            let first = |v: &[InteractionRecord]| v.iter().map(|r| r.interaction_time).min();
            prop_assert!(last(&s.train) < first(&s.validation));
            prop_assert!(last(&s.validation) < first(&s.test));
        }
    }

    #[test]
    fn policy1_is_a_convex_combination(m in 0.0f64..1.0, t in prop::collection::vec(-8.0f64..8.0, 30), a in 0usize..30, beta in 0.01f64..0.99) {
        let v = RecencyVector(t.clone());
        let y = infer_policy1(m, &v, a, beta).unwrap();
        let s = 1.0 / (1.0 + (-t[a]).exp());
        prop_assert!(y >= m.min(s) - 1e-15 && y <= m.max(s) + 1e-15);
        prop_assert_eq!(infer_policy1(m, &v, a, 1.0).unwrap(), m);
        let fused = fuse(m, &v, beta);
        prop_assert!((fused[a] - (beta * m + (1.0 - beta) * t[a])).abs() < 1e-15);
    }

    #[test]
    fn policy2_ignores_prior_for_constant_scores(m in 0.0f64..1.0, c in -5.0f64..5.0, w in prop::collection::vec(0.01f64..1.0, 30), beta in 0.01f64..0.99) {
        let total: f64 = w.iter().sum();
        let prior = IntervalPrior { probabilities: w.iter().map(|x| x / total).collect() };
        let uniform = IntervalPrior { probabilities: vec![1.0 / 30.0; 30] };
        let v = RecencyVector(vec![c; 30]);
        let a = infer_policy2(m, &v, &prior, beta).unwrap();
        let b = infer_policy2(m, &v, &uniform, beta).unwrap();
        prop_assert!((a - b).abs() < 1e-12);
        prop_assert!(a > 0.0 && a < 1.0);
    }

    #[test]
    fn policy2_is_invariant_to_joint_relabelling(m in 0.0f64..1.0, t in prop::collection::vec(-4.0f64..4.0, 6), w in prop::collection::vec(0.01f64..1.0, 6), rot in 0usize..6) {
        let total: f64 = w.iter().sum();
        let p: Vec<f64> = w.iter().map(|x| x / total).collect();
        let mut t2 = t.clone();
        let mut p2 = p.clone();
        t2.rotate_left(rot);
        p2.rotate_left(rot);
        let a = infer_policy2(m, &RecencyVector(t), &IntervalPrior { probabilities: p }, 0.5).unwrap();
        let b = infer_policy2(m, &RecencyVector(t2), &IntervalPrior { probabilities: p2 }, 0.5).unwrap();
        prop_assert!((a - b).abs() < 1e-12);
    }

    #[test]
    fn window_mean_lies_within_the_window(t in prop::collection::vec(-5.0f64..5.0, 30), a in 0usize..30, n in 0usize..5) {
        let window = WindowConfig::new(n, 30).unwrap();
        let s = window_smooth(&RecencyVector(t.clone()), a, window);
        let lo = a.saturating_sub(n);
        let hi = (a + n).min(29);
        let slice = &t[lo..=hi];
        let mean = slice.iter().sum::<f64>() / slice.len() as f64;
        prop_assert!((s - mean).abs() < 1e-12);
        prop_assert_eq!(window_smooth(&RecencyVector(vec![1.25; 30]), a, window), 1.25);
    }
}
