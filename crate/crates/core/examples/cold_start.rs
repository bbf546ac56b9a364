//! Metrics restricted to videos never seen in training and shown within two
//! days of release, for a backbone and for LDRI under both policies.
//!
//! cargo run --release --example cold_start

use std::collections::BTreeSet;

use ldri::config::PreparedData;
use ldri::evaluation::{report_from_scores, ColdStartReport};
use ldri::inference::{score_batch, FusionConfig, Policy};
use ldri::synthetic::WorldConfig;
use ldri::trainer::{train, ModelBundle, ModelConfig, TrainConfig, TrainObjective};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let data = PreparedData::synthetic(&WorldConfig::default(), 0.1, 0, 30)?;
    let base = TrainConfig { learning_rate: 1e-3, batch_size: 256, ..Default::default() };
    let (backbone, _) = train(&data.encoded, &data.schema, ModelConfig::default(), TrainConfig { objective: TrainObjective::MatchingOnly, ..base.clone() })?;
    let (ldri, _) = train(&data.encoded, &data.schema, ModelConfig::default(), base)?;
    let train_ids: BTreeSet<String> = data.schema.video_ids().iter().cloned().collect();

    let runs: [(&str, &ModelBundle, Policy); 3] =
        [("backbone", &backbone, Policy::BackboneOnly), ("ldri-policy1", &ldri, Policy::Policy1), ("ldri-policy2", &ldri, Policy::Policy2)];
    for (name, bundle, policy) in runs {
        let fusion = FusionConfig::new(policy, 0.5);
        let scores = score_batch(bundle, &data.encoded.test, &fusion)?;
        let report = report_from_scores(&scores, &fusion, &[5, 10], 30, &train_ids)?;
        match &report.cold_start {
            ColdStartReport::Empty => println!("{name}: no cold-start impressions"),
            ColdStartReport::Report { videos, summary } => {
                for r in &summary.rows {
                    println!("{name:<13} {videos} videos  @{:<2} recall {:.4}  map {:.4}  ndcg {:.4}  hr {:.4}", r.k, r.recall, r.map, r.ndcg, r.hr);
                }
            }
        }
    }
    Ok(())
}
