use std::collections::{BTreeSet, HashMap};
use std::sync::OnceLock;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::{ColumnConfig, DataError, InteractionRecord, ReleaseInterval};

pub const SCHEMA_VERSION: u32 = 1;

/// Vocabulary index reserved for values never seen in training.
pub const OOV_INDEX: u32 = 0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Side {
    User,
    Video,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CategoricalField {
    pub name: String,
    pub side: Side,
    /// Sorted training values; value `values[i]` encodes to `i + 1`.
    pub values: Vec<String>,
    #[serde(skip)]
    lookup: OnceLock<HashMap<String, u32>>,
}

impl PartialEq for CategoricalField {
    fn eq(&self, other: &Self) -> bool {
        self.name == other.name && self.side == other.side && self.values == other.values
    }
}

impl CategoricalField {
    fn new(name: String, side: Side, values: BTreeSet<String>) -> Self {
        Self {
            name,
            side,
            values: values.into_iter().collect(),
            lookup: OnceLock::new(),
        }
    }

    /// Vocabulary size including the OOV slot.
    pub fn vocab_size(&self) -> usize {
        self.values.len() + 1
    }

    pub fn index_of(&self, raw: &str) -> u32 {
        let map = self.lookup.get_or_init(|| {
            self.values
                .iter()
                .enumerate()
                .map(|(i, v)| (v.clone(), i as u32 + 1))
                .collect()
        });
        map.get(raw).copied().unwrap_or(OOV_INDEX)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DenseField {
    pub name: String,
    pub side: Side,
    pub min: f64,
    pub max: f64,
}

impl DenseField {
    /// Min-max normalization clipped to `[0, 1]`; non-finite inputs map to 0.
    pub fn normalize(&self, raw: f64) -> f64 {
        if !raw.is_finite() {
            return 0.0;
        }
        let span = self.max - self.min;
        if span <= 0.0 {
            return 0.0;
        }
        ((raw - self.min) / span).clamp(0.0, 1.0)
    }
}

/// Vocabularies and normalization statistics, built from training rows only.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureSchema {
    pub version: u32,
    pub horizon: usize,
    pub label_field: String,
    /// User-side fields first (starting with the user id), then video-side
    /// fields (starting with the video id).
    pub categorical: Vec<CategoricalField>,
    pub dense: Vec<DenseField>,
}

pub const USER_ID_FIELD: &str = "user_id";
pub const VIDEO_ID_FIELD: &str = "video_id";

impl FeatureSchema {
    pub fn fields(&self, side: Side) -> impl Iterator<Item = &CategoricalField> {
        self.categorical.iter().filter(move |f| f.side == side)
    }

    pub fn dense_fields(&self, side: Side) -> impl Iterator<Item = &DenseField> {
        self.dense.iter().filter(move |f| f.side == side)
    }

    pub fn vocab_sizes(&self, side: Side) -> Vec<usize> {
        self.fields(side).map(CategoricalField::vocab_size).collect()
    }

    pub fn dense_count(&self, side: Side) -> usize {
        self.dense_fields(side).count()
    }

    /// Hex SHA-256 of the canonical JSON form.
    pub fn hash(&self) -> String {
        let bytes = serde_json::to_vec(self).expect("schema serializes");
        hex::encode(Sha256::digest(&bytes))
    }

    pub fn video_ids(&self) -> &[String] {
        &self.categorical.iter().find(|f| f.name == VIDEO_ID_FIELD).expect("video id field").values
    }

    /// Total over a record; OOV values map to index 0 and dense values are
    /// normalized with training statistics.
    pub fn encode(&self, record: &InteractionRecord) -> EncodedExample {
        let mut user_indices = Vec::new();
        let mut video_indices = Vec::new();
        for f in &self.categorical {
            let raw = match f.name.as_str() {
                USER_ID_FIELD if f.side == Side::User => Some(record.user_id.as_str()),
                VIDEO_ID_FIELD if f.side == Side::Video => Some(record.video_id.as_str()),
                name => record.categorical(name),
            };
            let idx = raw.map(|r| f.index_of(r)).unwrap_or(OOV_INDEX);
            match f.side {
                Side::User => user_indices.push(idx),
                Side::Video => video_indices.push(idx),
            }
        }
        let mut user_dense = Vec::new();
        let mut video_dense = Vec::new();
        for f in &self.dense {
            let v = f.normalize(record.dense(&f.name).unwrap_or(f64::NAN));
            match f.side {
                Side::User => user_dense.push(v),
                Side::Video => video_dense.push(v),
            }
        }
        let days = record.raw_interval_days();
        EncodedExample {
            user_id: record.user_id.clone(),
            video_id: record.video_id.clone(),
            user_indices,
            video_indices,
            user_dense,
            video_dense,
            interval: ReleaseInterval::clamped(days, self.horizon),
            label: record.label,
        }
    }

    pub fn encode_all(&self, records: &[InteractionRecord]) -> EncodedSet {
        use rayon::prelude::*;
        EncodedSet {
            schema_hash: self.hash(),
            examples: records.par_iter().map(|r| self.encode(r)).collect(),
        }
    }
}

/// A record after vocabulary encoding.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EncodedExample {
    pub user_id: String,
    pub video_id: String,
    pub user_indices: Vec<u32>,
    pub video_indices: Vec<u32>,
    pub user_dense: Vec<f64>,
    pub video_dense: Vec<f64>,
    pub interval: ReleaseInterval,
    pub label: u8,
}

/// Encoded examples tagged with the hash of the schema that produced them.
#[derive(Debug, Clone, PartialEq)]
pub struct EncodedSet {
    pub schema_hash: String,
    pub examples: Vec<EncodedExample>,
}

impl EncodedSet {
    pub fn len(&self) -> usize {
        self.examples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.examples.is_empty()
    }
}

/// Builds vocabularies (with reserved OOV index 0) and dense min/max from
/// `records`, which must be the training split.
pub fn build_schema(records: &[InteractionRecord], columns: &ColumnConfig, horizon: usize) -> Result<FeatureSchema, DataError> {
    if records.is_empty() {
        return Err(DataError::EmptyResult);
    }
    if horizon == 0 {
        return Err(DataError::InvalidHorizon);
    }
    let mut categorical = Vec::new();
    let mut collect = |name: &str, side: Side, get: &dyn Fn(&InteractionRecord) -> Option<String>| {
        let values: BTreeSet<String> = records.iter().filter_map(get).collect();
        categorical.push(CategoricalField::new(name.to_string(), side, values));
    };
    collect(USER_ID_FIELD, Side::User, &|r| Some(r.user_id.clone()));
    for name in &columns.user_categorical {
        collect(name, Side::User, &|r| r.categorical(name).map(str::to_string));
    }
    collect(VIDEO_ID_FIELD, Side::Video, &|r| Some(r.video_id.clone()));
    for name in &columns.video_categorical {
        collect(name, Side::Video, &|r| r.categorical(name).map(str::to_string));
    }

    let mut dense = Vec::new();
    let sides = columns
        .user_dense
        .iter()
        .map(|n| (n, Side::User))
        .chain(columns.video_dense.iter().map(|n| (n, Side::Video)));
    for (name, side) in sides {
        let mut min = f64::INFINITY;
        let mut max = f64::NEG_INFINITY;
        for r in records {
            let v = r.dense(name).unwrap_or(f64::NAN);
            if !v.is_finite() {
                return Err(DataError::NonNumericDense(name.clone()));
            }
            min = min.min(v);
            max = max.max(v);
        }
        dense.push(DenseField { name: name.clone(), side, min, max });
    }

    Ok(FeatureSchema {
        version: SCHEMA_VERSION,
        horizon,
        label_field: columns.label.clone(),
        categorical,
        dense,
    })
}
