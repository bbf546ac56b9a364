//! Generate the default synthetic world, train DeepFM-lite with the recency
//! perceptron, and compare the three inference policies on the unbiased test
//! split.
//!
//! cargo run --release --example quickstart_synthetic

use ldri::config::PreparedData;
use ldri::evaluation::evaluate;
use ldri::inference::{FusionConfig, Policy};
use ldri::synthetic::WorldConfig;
use ldri::trainer::{train_with_log, ModelConfig, TrainConfig};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let data = PreparedData::synthetic(&WorldConfig::default(), 0.1, 0, 30)?;
    println!("train {}  validation {}  test {}", data.encoded.train.len(), data.encoded.validation.len(), data.encoded.test.len());

    // Desk-scale budget: a larger step and smaller batches than the published settings.
    let config = TrainConfig { learning_rate: 1e-3, batch_size: 256, epochs: 20, ..Default::default() };
    let (bundle, _) = train_with_log(&data.encoded, &data.schema, ModelConfig::default(), config, |r| {
        println!("epoch {:>2}  L {:.4}  L_m {:.4}  L_t {:.4}  val ndcg@10 {:.4}", r.epoch, r.loss, r.matching_loss, r.recency_loss, r.validation_metric);
    })?;
    println!("best epoch {:?}", bundle.best_epoch);

    for policy in [Policy::BackboneOnly, Policy::Policy1, Policy::Policy2] {
        let report = evaluate(&bundle, &data.encoded.test, &FusionConfig::new(policy, 0.5), &[5, 10])?;
        for row in &report.overall.rows {
            println!("{policy:>14}  @{:<2} recall {:.4}  map {:.4}  ndcg {:.4}  hr {:.4}", row.k, row.recall, row.map, row.ndcg, row.hr);
        }
    }
    Ok(())
}
