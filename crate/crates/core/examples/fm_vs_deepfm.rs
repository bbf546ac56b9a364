//! Both backbones with and without the recency perceptron on one world.
//!
//! cargo run --release --example fm_vs_deepfm

use ldri::backbones::BackboneKind;
use ldri::config::PreparedData;
use ldri::evaluation::evaluate;
use ldri::inference::{FusionConfig, Policy};
use ldri::synthetic::WorldConfig;
use ldri::trainer::{train, ModelConfig, TrainConfig, TrainObjective};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let data = PreparedData::synthetic(&WorldConfig::default(), 0.1, 0, 30)?;
    let base = TrainConfig { learning_rate: 1e-3, batch_size: 256, ..Default::default() };
    for backbone in [BackboneKind::Fm, BackboneKind::DeepFm] {
        let model = ModelConfig { backbone, ..Default::default() };
        let (plain, _) = train(&data.encoded, &data.schema, model, TrainConfig { objective: TrainObjective::MatchingOnly, ..base.clone() })?;
        let (ldri, _) = train(&data.encoded, &data.schema, model, base.clone())?;
        let ndcg = |b, p| evaluate(b, &data.encoded.test, &FusionConfig::new(p, 0.5), &[10]).map(|r| r.overall.ndcg(10).unwrap_or(f64::NAN));
        println!(
            "{backbone:<7} backbone {:.4}  +ldri policy1 {:.4}  +ldri policy2 {:.4}",
            ndcg(&plain, Policy::BackboneOnly)?,
            ndcg(&ldri, Policy::Policy1)?,
            ndcg(&ldri, Policy::Policy2)?
        );
    }
    Ok(())
}
