//! Trainer, checkpoint and generator properties that need a full run.

use std::collections::BTreeMap;

use rand_chacha::ChaCha8Rng;
use statrs::distribution::{ChiSquared, ContinuousCDF};

use ldri::config::PreparedData;
use ldri::dataio::{holdout, ColumnConfig, IngestSummary, InteractionRecord, SplitMode, SECONDS_PER_DAY};
use ldri::inference::{score_batch, FusionConfig, InferenceError, Policy};
use ldri::numerics::{analytic_gradients, Mode};
use ldri::synthetic::{exposure_weight, generate_world, simulate_logs, CurveKind, WorldConfig};
use ldri::trainer::{
    checkpoint, objective_node, restore, train, validation_metric, ModelBundle, ModelConfig, TrainConfig,
};

fn tiny_world() -> PreparedData {
    let world = WorldConfig { n_users: 30, n_videos: 60, train_impressions: 1500, test_impressions: 500, ..Default::default() };
    PreparedData::synthetic(&world, 0.2, 0, 30).unwrap()
}

fn grads(bundle: &ModelBundle, data: &PreparedData, alpha: f64) -> Vec<Vec<f64>> {
    let mut store = bundle.params.clone();
    let examples = &data.encoded.train.examples[..8];
    analytic_gradients(&mut store, &mut |store, tape| {
        let mut terms = Vec::new();
        for e in examples {
            let (l, _, _) = objective_node(bundle, store, tape, e, alpha, &mut Mode::<ChaCha8Rng>::Eval).unwrap();
            terms.push((l, 1.0));
        }
        tape.linear(terms)
    })
    .unwrap()
}

#[test]
fn joint_gradient_splits_by_path() {
    let data = tiny_world();
    let bundle = ModelBundle::init(&data.schema, ModelConfig::default(), TrainConfig::default());
    let joint = grads(&bundle, &data, 0.6);
    let matching = grads(&bundle, &data, 1.0);
    let recency = grads(&bundle, &data, 0.0);
    let mut checked = (0, 0);
    for (i, t) in bundle.params.tensors().iter().enumerate() {
        let perceptron = t.name.starts_with("recency.");
        let (scale, own) = if perceptron { (0.4, &recency[i]) } else { (0.6, &matching[i]) };
        let other = if perceptron { &matching[i] } else { &recency[i] };
        for ((g, o), x) in joint[i].iter().zip(own).zip(other) {
            assert!((g - scale * o).abs() <= 1e-12 * o.abs().max(1.0), "{} {g} vs {scale}·{o}", t.name);
            assert_eq!(*x, 0.0, "{} leaks gradient across paths", t.name);
        }
        if perceptron { checked.1 += 1 } else { checked.0 += 1 }
    }
    assert!(checked.0 > 0 && checked.1 > 0);
}

fn separable() -> PreparedData {
    let rec = |u: usize, v: usize, day: i64| {
        let t = 1_650_000_000 + day * SECONDS_PER_DAY;
        InteractionRecord {
            user_id: format!("u{u}"),
            video_id: format!("v{v}"),
            interaction_time: t,
            release_time: t - (v as i64 % 5) * SECONDS_PER_DAY,
            label: u8::from(v % 2 == 0),
            categorical_features: vec![("user_cluster".into(), "c0".into()), ("author_id".into(), format!("a{v}")), ("category".into(), format!("t{}", v % 2))],
            dense_features: vec![("user_activity".into(), 0.5), ("duration".into(), 10.0 + v as f64)],
        }
    };
    let log: Vec<_> = (0..6).flat_map(|u| (0..10).map(move |v| rec(u, v, 0))).collect();
    let test: Vec<_> = (0..6).flat_map(|u| (0..10).map(move |v| rec(u, v, 1))).collect();
    let mode = SplitMode::Holdout { validation: 0.2, seed: 1 };
    let records = holdout(log, test, &mode).unwrap();
    PreparedData::new(records, &ColumnConfig::synthetic(), 30, &mode, IngestSummary::default(), None).unwrap()
}

#[test]
fn separable_loss_decreases_after_warmup() {
    let data = separable();
    let model = ModelConfig { dropout: 0.0, ..Default::default() };
    let config = TrainConfig { epochs: 200, early_stop_patience: 200, batch_size: 64, learning_rate: 1e-3, ..Default::default() };
    let (bundle, log) = train(&data.encoded, &data.schema, model, config).unwrap();
    assert_eq!(log.len(), 200);
    for w in log[10..].windows(2) {
        assert!(w[1].loss < w[0].loss, "epoch {}: {} then {}", w[1].epoch, w[0].loss, w[1].loss);
    }
    let best = log.iter().map(|r| r.validation_metric).fold(f64::NEG_INFINITY, f64::max);
    assert_eq!(bundle.best_validation_metric, Some(best));
}

#[test]
fn restored_bundle_reproduces_logged_validation_metric() {
    let data = tiny_world();
    let config = TrainConfig { epochs: 3, batch_size: 128, learning_rate: 1e-3, ..Default::default() };
    let (bundle, log) = train(&data.encoded, &data.schema, ModelConfig::default(), config).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("model.ckpt");
    checkpoint(&bundle, &path).unwrap();
    let back = restore(&path).unwrap();
    let again = validation_metric(&back, &data.encoded.validation.examples).unwrap();
    let logged = log.iter().find(|r| Some(r.epoch) == bundle.best_epoch).unwrap().validation_metric;
    assert_eq!(again.to_bits(), logged.to_bits());
}

#[test]
fn fm_and_deepfm_bundles_differ_and_both_score() {
    let data = tiny_world();
    let config = TrainConfig { epochs: 1, batch_size: 256, ..Default::default() };
    let mut fingerprints = Vec::new();
    for backbone in [ldri::backbones::BackboneKind::Fm, ldri::backbones::BackboneKind::DeepFm] {
        let (b, _) = train(&data.encoded, &data.schema, ModelConfig { backbone, ..Default::default() }, config.clone()).unwrap();
        let s = score_batch(&b, &data.encoded.test, &FusionConfig::new(Policy::Policy1, 0.5)).unwrap();
        assert!(s.iter().all(|x| x.y_hat > 0.0 && x.y_hat < 1.0));
        fingerprints.push(b.fingerprint());
    }
    assert_ne!(fingerprints[0], fingerprints[1]);
}

#[test]
fn scoring_refuses_foreign_schema() {
    let a = tiny_world();
    let b = separable();
    let bundle = ModelBundle::init(&a.schema, ModelConfig::default(), TrainConfig::default());
    let err = score_batch(&bundle, &b.encoded.test, &FusionConfig::new(Policy::Policy1, 0.5)).unwrap_err();
    assert!(matches!(err, InferenceError::SchemaMismatch { .. }));
}

#[test]
fn train_exposure_follows_the_sampling_weights() {
    let world = WorldConfig { exposure_decay: 2.0, train_impressions: 100_000, ..Default::default() };
    let truth = generate_world(&world).unwrap();
    let logs = simulate_logs(&truth);
    let mut expected: BTreeMap<usize, f64> = BTreeMap::new();
    let per_day = world.train_impressions as f64 / world.train_days as f64;
    for day in 0..world.train_days as i64 {
        let live: Vec<usize> = (0..world.n_videos).filter_map(|v| truth.interval_on(v, day)).collect();
        let total: f64 = live.iter().map(|a| exposure_weight(*a, 2.0)).sum();
        for a in live {
            *expected.entry(a).or_default() += per_day * exposure_weight(a, 2.0) / total;
        }
    }
    let mut observed: BTreeMap<usize, f64> = BTreeMap::new();
    for r in &logs.train {
        *observed.entry(r.raw_interval_days() as usize).or_default() += 1.0;
    }
    // Intervals with expected count below 5 are pooled into one tail bin.
    let (mut stat, mut bins, mut tail_e, mut tail_o) = (0.0, 0usize, 0.0, 0.0);
    for (a, e) in &expected {
        let o = observed.get(a).copied().unwrap_or(0.0);
        if *e >= 5.0 {
            stat += (o - e).powi(2) / e;
            bins += 1;
        } else {
            tail_e += e;
            tail_o += o;
        }
    }
    if tail_e > 0.0 {
        stat += (tail_o - tail_e).powi(2) / tail_e;
        bins += 1;
    }
    assert!(observed.keys().all(|a| expected.contains_key(a)));
    let p = 1.0 - ChiSquared::new((bins - 1) as f64).unwrap().cdf(stat);
    assert!(p > 0.01, "chi2 {stat:.2} on {} dof, p = {p:.4}", bins - 1);
}

#[test]
fn exposure_profile_decreases_past_interval_two() {
    let truth = generate_world(&WorldConfig::default()).unwrap();
    let logs = simulate_logs(&truth);
    let mut counts = [0usize; 30];
    for r in &logs.train {
        counts[(r.raw_interval_days() as usize).min(29)] += 1;
    }
    let populated = counts.iter().rposition(|&c| c >= 50).unwrap();
    assert!(populated >= 10, "{counts:?}");
    for a in 2..populated {
        assert!(counts[a + 1] < counts[a], "{counts:?}");
    }
}

#[test]
fn flat_topic_positive_rate_has_no_interval_trend() {
    let truth = generate_world(&WorldConfig::default()).unwrap();
    let logs = simulate_logs(&truth);
    let flat: Vec<(f64, f64)> = logs
        .train
        .iter()
        .filter(|r| {
            let v: usize = r.video_id[1..].parse().unwrap();
            truth.curve(v).kind() == CurveKind::Flat
        })
        .map(|r| (r.raw_interval_days() as f64, f64::from(r.label)))
        .collect();
    let n = flat.len() as f64;
    let mx = flat.iter().map(|p| p.0).sum::<f64>() / n;
    let my = flat.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = flat.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let slope = flat.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum::<f64>() / sxx;
    let resid: f64 = flat.iter().map(|p| (p.1 - my - slope * (p.0 - mx)).powi(2)).sum::<f64>() / (n - 2.0);
    let se = (resid / sxx).sqrt();
    assert!(slope.abs() <= 2.0 * se, "slope {slope:.5} se {se:.5} over {n} impressions");
}
