//! Mean prediction against release interval per true recency class, for a
//! separately trained backbone and for LDRI under policy1. On a flat class
//! the debiased slope should shrink toward zero.
//!
//! cargo run --release --example case_study [seed]

use ldri::config::PreparedData;
use ldri::evaluation::report_prediction_by_interval;
use ldri::inference::{score_batch, FusionConfig, Policy};
use ldri::synthetic::{Grouping, WorldConfig};
use ldri::trainer::{train, ModelConfig, TrainConfig, TrainObjective};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let seed: u64 = std::env::args().nth(1).map(|s| s.parse()).transpose()?.unwrap_or(0);
    let data = PreparedData::synthetic(&WorldConfig { seed, ..Default::default() }, 0.1, seed, 30)?;
    let classes = data.sidecar.as_ref().ok_or("synthetic data carries a sidecar")?.classes(Grouping::Curve);

    let base = TrainConfig { learning_rate: 1e-3, batch_size: 256, seed, ..Default::default() };
    let (backbone, _) = train(&data.encoded, &data.schema, ModelConfig::default(), TrainConfig { objective: TrainObjective::MatchingOnly, ..base.clone() })?;
    let (ldri, _) = train(&data.encoded, &data.schema, ModelConfig::default(), base)?;

    let runs = [
        ("backbone", score_batch(&backbone, &data.encoded.test, &FusionConfig::new(Policy::BackboneOnly, 0.5))?),
        ("ldri-policy1", score_batch(&ldri, &data.encoded.test, &FusionConfig::new(Policy::Policy1, 0.5))?),
        ("ldri-policy2", score_batch(&ldri, &data.encoded.test, &FusionConfig::new(Policy::Policy2, 0.5))?),
    ];
    for (name, scores) in &runs {
        let study = report_prediction_by_interval(scores, &classes)?;
        let slopes: Vec<String> = study.slopes.iter().map(|(c, s)| format!("{c} {s:+.5}")).collect();
        println!("{name:<13} {}", slopes.join("  "));
    }
    Ok(())
}
