//! NDCG@10 per release interval for a backbone and LDRI (policy1), written as
//! a plot-ready CSV on stdout.
//!
//! cargo run --release --example per_interval > per_interval.csv

use ldri::config::PreparedData;
use ldri::evaluation::{evaluate, per_interval_series, write_series_csv};
use ldri::inference::{FusionConfig, Policy};
use ldri::synthetic::WorldConfig;
use ldri::trainer::{train, ModelConfig, TrainConfig, TrainObjective};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let data = PreparedData::synthetic(&WorldConfig::default(), 0.1, 0, 30)?;
    let base = TrainConfig { learning_rate: 1e-3, batch_size: 256, ..Default::default() };
    let (backbone, _) = train(&data.encoded, &data.schema, ModelConfig::default(), TrainConfig { objective: TrainObjective::MatchingOnly, ..base.clone() })?;
    let (ldri, _) = train(&data.encoded, &data.schema, ModelConfig::default(), base)?;

    let b = evaluate(&backbone, &data.encoded.test, &FusionConfig::new(Policy::BackboneOnly, 0.5), &[10])?;
    let l = evaluate(&ldri, &data.encoded.test, &FusionConfig::new(Policy::Policy1, 0.5), &[10])?;
    let mut rows = per_interval_series(&b.per_interval, "backbone");
    rows.extend(per_interval_series(&l.per_interval, "ldri-policy1"));
    write_series_csv(std::io::stdout().lock(), &rows)?;

    let (mut wins, mut populated) = (0, 0);
    for (x, y) in b.per_interval.iter().zip(&l.per_interval) {
        if let (Some(bx), Some(ly)) = (x.ndcg, y.ndcg) {
            populated += 1;
            wins += usize::from(ly >= bx);
        }
    }
    eprintln!("ldri >= backbone on {wins}/{populated} populated intervals");
    Ok(())
}
