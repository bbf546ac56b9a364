//! Declarative run configuration and dataset preparation.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::backbones::BackboneKind;
use crate::dataio::{
    build_schema, holdout, ingest_csv, kuairand, split, ColumnConfig, DataError, DatasetManifest, DatasetSplit, FeatureSchema, IngestSummary,
    RecordSplit, SplitMode,
};
use crate::inference::{FusionConfig, MatchingInput, Policy};
use crate::perceptron::WindowConfig;
use crate::synthetic::{generate_world, simulate_logs, Sidecar, WorldConfig};
use crate::trainer::{ModelConfig, TrainConfig, TrainObjective, ValidationMetric};

/// Environment variable naming the default output root.
pub const OUT_ENV: &str = "LDRI_OUT";
pub const DEFAULT_OUT: &str = "runs";

pub const TRAIN_FILE: &str = "train.csv";
pub const TEST_FILE: &str = "test.csv";
pub const SIDECAR_FILE: &str = "truth.json";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum DataSource {
    /// Generated world. With `dir`, the CSVs and sidecar written by `synth`
    /// are read from there; otherwise the world is generated in memory.
    Synthetic {
        #[serde(default)]
        world: WorldConfig,
        #[serde(default = "default_validation")]
        validation: f64,
        #[serde(default)]
        dir: Option<PathBuf>,
    },
    /// Arbitrary CSV logs. Without `test`, `split` must be ratio or by-date.
    Csv {
        train: PathBuf,
        #[serde(default)]
        test: Option<PathBuf>,
        columns: ColumnConfig,
        split: SplitMode,
        #[serde(default)]
        sidecar: Option<PathBuf>,
    },
    KuaiRand {
        dir: PathBuf,
        variant: kuairand::Variant,
        #[serde(default = "default_label")]
        label: String,
        #[serde(default)]
        logs: kuairand::LogSelection,
        split: SplitMode,
    },
}

fn default_validation() -> f64 {
    0.1
}

fn default_label() -> String {
    "is_click".into()
}

impl DataSource {
    /// KuaiRand-Pure standard logs labelled by `is_click`, 80/10/10 seeded split.
    pub fn kuairand_pure(dir: impl Into<PathBuf>) -> Self {
        DataSource::KuaiRand {
            dir: dir.into(),
            variant: kuairand::Variant::Pure,
            label: default_label(),
            logs: kuairand::LogSelection::Standard,
            split: SplitMode::Ratio { train: 0.8, validation: 0.1, test: 0.1, seed: 0 },
        }
    }
}

impl Default for DataSource {
    fn default() -> Self {
        DataSource::Synthetic { world: WorldConfig::default(), validation: default_validation(), dir: None }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RunConfig {
    pub data: DataSource,
    pub horizon: usize,
    pub backbone: BackboneKind,
    pub embedding_dim: usize,
    pub objective: TrainObjective,
    pub alpha: f64,
    pub beta: f64,
    pub window: usize,
    pub dropout: f64,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub epochs: usize,
    pub patience: usize,
    pub seed: u64,
    pub policy: Policy,
    pub policy2_matching_input: MatchingInput,
    pub validation_k: usize,
    pub ks: Vec<usize>,
    pub output_dir: Option<PathBuf>,
}

impl Default for RunConfig {
    fn default() -> Self {
        let t = TrainConfig::default();
        let m = ModelConfig::default();
        Self {
            data: DataSource::default(),
            horizon: m.horizon,
            backbone: m.backbone,
            embedding_dim: m.embedding_dim,
            objective: t.objective,
            alpha: t.alpha,
            beta: t.validation_metric.beta,
            window: m.window.half_width,
            dropout: m.dropout,
            batch_size: t.batch_size,
            learning_rate: t.learning_rate,
            epochs: t.epochs,
            patience: t.early_stop_patience,
            seed: t.seed,
            policy: Policy::Policy1,
            policy2_matching_input: MatchingInput::Probability,
            validation_k: t.validation_metric.k,
            ks: vec![5, 10],
            output_dir: None,
        }
    }
}

impl RunConfig {
    pub fn from_json(text: &str) -> Result<Self, String> {
        serde_json::from_str(text).map_err(|e| format!("config: {e}"))
    }

    pub fn load(path: &Path) -> Result<Self, String> {
        let text = std::fs::read_to_string(path).map_err(|e| format!("cannot read {}: {e}", path.display()))?;
        Self::from_json(&text)
    }

    pub fn model_config(&self) -> ModelConfig {
        ModelConfig {
            backbone: self.backbone,
            embedding_dim: self.embedding_dim,
            dropout: self.dropout,
            horizon: self.horizon,
            window: WindowConfig { half_width: self.window },
        }
    }

    pub fn train_config(&self) -> TrainConfig {
        TrainConfig {
            alpha: self.alpha,
            epochs: self.epochs,
            batch_size: self.batch_size,
            learning_rate: self.learning_rate,
            seed: self.seed,
            early_stop_patience: self.patience,
            validation_metric: ValidationMetric { policy: Policy::Policy1, beta: self.beta, k: self.validation_k },
            objective: self.objective,
            ..TrainConfig::default()
        }
    }

    pub fn fusion(&self, policy: Policy) -> FusionConfig {
        FusionConfig { beta: self.beta, policy, policy2_matching_input: self.policy2_matching_input }
    }

    /// Rejects out-of-range values before any work is done.
    pub fn validate(&self) -> Result<(), String> {
        if !(self.beta > 0.0 && self.beta < 1.0) {
            return Err(format!("beta must lie in (0,1), got {}", self.beta));
        }
        if self.ks.is_empty() || self.ks.contains(&0) {
            return Err("ks must be a non-empty list of positive integers".into());
        }
        self.model_config().validate()?;
        self.train_config().validate()?;
        match &self.data {
            DataSource::Synthetic { world, validation, .. } => {
                world.validate()?;
                SplitMode::Holdout { validation: *validation, seed: self.seed }.validate().map_err(|e| e.to_string())?;
            }
            DataSource::Csv { split, test, .. } => {
                split.validate().map_err(|e| e.to_string())?;
                if test.is_some() != matches!(split, SplitMode::Holdout { .. }) {
                    return Err("a separate test file requires holdout split mode, and holdout requires a test file".into());
                }
            }
            DataSource::KuaiRand { split, .. } => {
                split.validate().map_err(|e| e.to_string())?;
                if matches!(split, SplitMode::Holdout { .. }) {
                    return Err("kuairand data uses ratio or by-date splits".into());
                }
            }
        }
        Ok(())
    }

    /// Flag value, then `output_dir`, then the environment, then the default.
    pub fn resolve_output(&self, flag: Option<&Path>) -> PathBuf {
        if let Some(p) = flag {
            return p.to_path_buf();
        }
        if let Some(p) = &self.output_dir {
            return p.clone();
        }
        std::env::var_os(OUT_ENV).map(PathBuf::from).unwrap_or_else(|| PathBuf::from(DEFAULT_OUT))
    }
}

/// Records, schema and encoded splits ready for training or scoring.
#[derive(Debug, Clone)]
pub struct PreparedData {
    pub records: RecordSplit,
    pub schema: FeatureSchema,
    pub encoded: DatasetSplit,
    pub manifest: DatasetManifest,
    pub sidecar: Option<Sidecar>,
}

impl PreparedData {
    /// Builds the schema from the train split only and encodes every split.
    pub fn new(records: RecordSplit, columns: &ColumnConfig, horizon: usize, split_mode: &SplitMode, ingest: IngestSummary, sidecar: Option<Sidecar>) -> Result<Self, DataError> {
        let schema = build_schema(&records.train, columns, horizon)?;
        let encoded = records.encode(&schema);
        let manifest = DatasetManifest::new(&schema, split_mode, records.sizes(), ingest);
        Ok(Self { records, schema, encoded, manifest, sidecar })
    }

    /// In-memory synthetic world with a holdout validation share of the train log.
    pub fn synthetic(world: &WorldConfig, validation: f64, split_seed: u64, horizon: usize) -> Result<Self, String> {
        let truth = generate_world(world)?;
        let logs = simulate_logs(&truth);
        let mode = SplitMode::Holdout { validation, seed: split_seed };
        let summary = IngestSummary { rows_read: logs.train.len() + logs.test.len(), retained: logs.train.len() + logs.test.len(), ..Default::default() };
        let records = holdout(logs.train, logs.test, &mode).map_err(|e| e.to_string())?;
        Self::new(records, &ColumnConfig::synthetic(), horizon, &mode, summary, Some(Sidecar::from_truth(&truth))).map_err(|e| e.to_string())
    }
}

fn read_sidecar(path: &Path) -> Result<Sidecar, String> {
    let text = std::fs::read_to_string(path).map_err(|e| format!("cannot read sidecar {}: {e}", path.display()))?;
    serde_json::from_str(&text).map_err(|e| format!("sidecar {}: {e}", path.display()))
}

fn merge(a: IngestSummary, b: IngestSummary) -> IngestSummary {
    IngestSummary {
        rows_read: a.rows_read + b.rows_read,
        retained: a.retained + b.retained,
        dropped_negative_interval: a.dropped_negative_interval + b.dropped_negative_interval,
        dropped_bad_label: a.dropped_bad_label + b.dropped_bad_label,
        dropped_unparseable: a.dropped_unparseable + b.dropped_unparseable,
        time_unit: a.time_unit,
    }
}

/// Loads and splits the configured data source.
pub fn prepare(config: &RunConfig) -> Result<PreparedData, String> {
    let s = |e: DataError| e.to_string();
    match &config.data {
        DataSource::Synthetic { world, validation, dir: None } => PreparedData::synthetic(world, *validation, config.seed, config.horizon),
        DataSource::Synthetic { validation, dir: Some(dir), .. } => {
            let cols = ColumnConfig::synthetic();
            let (train, a) = ingest_csv(&dir.join(TRAIN_FILE), &cols).map_err(s)?;
            let (test, b) = ingest_csv(&dir.join(TEST_FILE), &cols).map_err(s)?;
            let mode = SplitMode::Holdout { validation: *validation, seed: config.seed };
            let records = holdout(train, test, &mode).map_err(s)?;
            let side = dir.join(SIDECAR_FILE);
            let sidecar = if side.is_file() { Some(read_sidecar(&side)?) } else { None };
            PreparedData::new(records, &cols, config.horizon, &mode, merge(a, b), sidecar).map_err(s)
        }
        DataSource::Csv { train, test, columns, split: mode, sidecar } => {
            let (log, a) = ingest_csv(train, columns).map_err(s)?;
            let (records, summary) = match test {
                Some(t) => {
                    let (test, b) = ingest_csv(t, columns).map_err(s)?;
                    (holdout(log, test, mode).map_err(s)?, merge(a, b))
                }
                None => (split(log, mode).map_err(s)?, a),
            };
            let sidecar = sidecar.as_deref().map(read_sidecar).transpose()?;
            PreparedData::new(records, columns, config.horizon, mode, summary, sidecar).map_err(s)
        }
        DataSource::KuaiRand { dir, variant, label, logs, split: mode } => {
            let (records, summary) = kuairand::load(dir, *variant, label, *logs).map_err(s)?;
            let records = split(records, mode).map_err(s)?;
            PreparedData::new(records, &kuairand::columns(label), config.horizon, mode, summary, None).map_err(s)
        }
    }
}
