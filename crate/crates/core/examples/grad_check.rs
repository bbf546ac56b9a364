//! Central-difference gradient check of every trainable objective on a tiny
//! synthetic world: FM, DeepFM-lite, the recency perceptron alone and the
//! joint loss.
//!
//! cargo run --release --example grad_check

use std::time::Instant;

use ldri::backbones::BackboneKind;
use ldri::config::PreparedData;
use ldri::synthetic::WorldConfig;
use ldri::trainer::{grad_check_objective, ModelBundle, ModelConfig, TrainConfig, TrainObjective};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let world = WorldConfig { n_users: 20, n_videos: 40, train_impressions: 600, test_impressions: 200, ..Default::default() };
    let data = PreparedData::synthetic(&world, 0.1, 0, 30)?;
    let examples = &data.encoded.train.examples[..24];

    let cases = [
        ("fm", BackboneKind::Fm, TrainObjective::MatchingOnly, 1.0),
        ("deepfm-lite", BackboneKind::DeepFm, TrainObjective::MatchingOnly, 1.0),
        ("recency perceptron", BackboneKind::DeepFm, TrainObjective::Joint, 0.0),
        ("joint loss", BackboneKind::DeepFm, TrainObjective::Joint, 0.6),
    ];
    for (name, backbone, objective, alpha) in cases {
        let model = ModelConfig { backbone, ..Default::default() };
        let bundle = ModelBundle::init(&data.schema, model, TrainConfig { objective, seed: 11, ..Default::default() });
        let start = Instant::now();
        let report = grad_check_objective(&bundle, examples, alpha, 1e-5, 0)?;
        println!(
            "{name:<20} max rel err {:.3e}  ({} entries, {} at a reduced step, {} on a kink; worst `{}`[{}] {:.6e} vs {:.6e}, {:.2}s)",
            report.max_relative_error,
            report.entries_checked,
            report.kink_refined,
            report.kink_skipped,
            report.worst_param,
            report.worst_entry,
            report.worst_analytic,
            report.worst_numeric,
            start.elapsed().as_secs_f64()
        );
    }
    Ok(())
}
