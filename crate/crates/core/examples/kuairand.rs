//! Smoke run on the public KuaiRand-Pure files: ingest with the column preset,
//! train the backbone and LDRI for three epochs, compare validation NDCG@5.
//!
//! LDRI_KUAIRAND_DIR=/path/to/KuaiRand-Pure/data cargo run --release --example kuairand

use ldri::config::{prepare, DataSource, RunConfig};
use ldri::dataio::kuairand::{available, LogSelection, Variant};
use ldri::evaluation::mean_ndcg;
use ldri::inference::{score_examples, FusionConfig, Policy};
use ldri::trainer::{train, TrainConfig, TrainObjective};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let Some(dir) = std::env::var_os("LDRI_KUAIRAND_DIR") else {
        println!("set LDRI_KUAIRAND_DIR to the directory holding the KuaiRand-Pure CSVs");
        return Ok(());
    };
    if !available(dir.as_ref(), Variant::Pure, LogSelection::Standard) {
        println!("KuaiRand-Pure files not found under {}", dir.to_string_lossy());
        return Ok(());
    }
    let config = RunConfig { data: DataSource::kuairand_pure(&dir), epochs: 3, validation_k: 5, ..Default::default() };
    let data = prepare(&config)?;
    println!("ingest {:?}", data.manifest.ingest);
    println!("train {}  validation {}  test {}", data.encoded.train.len(), data.encoded.validation.len(), data.encoded.test.len());

    let (backbone, _) = train(&data.encoded, &data.schema, config.model_config(), TrainConfig { objective: TrainObjective::MatchingOnly, ..config.train_config() })?;
    let (ldri, _) = train(&data.encoded, &data.schema, config.model_config(), config.train_config())?;
    let val = &data.encoded.validation.examples;
    let b = mean_ndcg(&score_examples(&backbone, val, &FusionConfig::new(Policy::BackboneOnly, 0.5))?, 5);
    let l = mean_ndcg(&score_examples(&ldri, val, &FusionConfig::new(Policy::Policy1, 0.5))?, 5);
    println!("validation ndcg@5  backbone {b:.5}  ldri-policy1 {l:.5}");
    Ok(())
}
