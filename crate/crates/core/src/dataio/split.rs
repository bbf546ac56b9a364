use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{DataError, EncodedSet, FeatureSchema, InteractionRecord, SECONDS_PER_DAY};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case")]
pub enum SplitMode {
    /// Seeded shuffle, then contiguous slices of the given fractions.
    Ratio { train: f64, validation: f64, test: f64, seed: u64 },
    /// Calendar split on 1-based interaction day: train is days
    /// `1..=train_end_day`, validation up to `validation_end_day`, test after.
    ByDate { train_end_day: u32, validation_end_day: u32 },
    /// The log is split into train/validation; the test split comes from a
    /// separate file.
    Holdout { validation: f64, seed: u64 },
}

impl SplitMode {
    pub fn validate(&self) -> Result<(), DataError> {
        let bad = |m: &str| Err(DataError::InvalidSplit(m.to_string()));
        match *self {
            SplitMode::Ratio { train, validation, test, .. } => {
                if [train, validation, test].iter().any(|f| !(0.0..=1.0).contains(f)) || (train + validation + test - 1.0).abs() > 1e-9 {
                    return bad("ratio fractions must lie in [0,1] and sum to 1");
                }
            }
            SplitMode::ByDate { train_end_day, validation_end_day } => {
                if train_end_day == 0 || validation_end_day <= train_end_day {
                    return bad("date boundaries must satisfy 0 < train_end_day < validation_end_day");
                }
            }
            SplitMode::Holdout { validation, .. } => {
                if !(validation > 0.0 && validation < 1.0) {
                    return bad("holdout validation fraction must lie in (0,1)");
                }
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RecordSplit {
    pub train: Vec<InteractionRecord>,
    pub validation: Vec<InteractionRecord>,
    pub test: Vec<InteractionRecord>,
}

impl RecordSplit {
    pub fn sizes(&self) -> [usize; 3] {
        [self.train.len(), self.validation.len(), self.test.len()]
    }

    fn non_empty(self) -> Result<Self, DataError> {
        for (name, part) in [("train", &self.train), ("validation", &self.validation), ("test", &self.test)] {
            if part.is_empty() {
                return Err(DataError::EmptySplit(name));
            }
        }
        Ok(self)
    }

    pub fn encode(&self, schema: &FeatureSchema) -> DatasetSplit {
        DatasetSplit {
            train: schema.encode_all(&self.train),
            validation: schema.encode_all(&self.validation),
            test: schema.encode_all(&self.test),
        }
    }
}

/// Encoded train/validation/test sets, all against the same schema.
#[derive(Debug, Clone, PartialEq)]
pub struct DatasetSplit {
    pub train: EncodedSet,
    pub validation: EncodedSet,
    pub test: EncodedSet,
}

fn shuffled(records: Vec<InteractionRecord>, seed: u64) -> Vec<InteractionRecord> {
    let mut idx: Vec<usize> = (0..records.len()).collect();
    idx.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let mut slots: Vec<Option<InteractionRecord>> = records.into_iter().map(Some).collect();
    idx.into_iter().map(|i| slots[i].take().expect("each index once")).collect()
}

/// 1-based interaction day relative to the UTC day of the earliest record.
pub fn interaction_day(record: &InteractionRecord, first_day_start: i64) -> u32 {
    ((record.interaction_time - first_day_start).div_euclid(SECONDS_PER_DAY) + 1) as u32
}

pub fn split(records: Vec<InteractionRecord>, mode: &SplitMode) -> Result<RecordSplit, DataError> {
    mode.validate()?;
    match *mode {
        SplitMode::Ratio { train, validation, seed, .. } => {
            let n = records.len();
            let n_train = (n as f64 * train).round() as usize;
            let n_val = ((n as f64 * validation).round() as usize).min(n - n_train.min(n));
            let mut rest = shuffled(records, seed);
            let test = rest.split_off((n_train + n_val).min(n));
            let validation = rest.split_off(n_train.min(rest.len()));
            RecordSplit { train: rest, validation, test }.non_empty()
        }
        SplitMode::ByDate { train_end_day, validation_end_day } => {
            let first = records.iter().map(|r| r.interaction_time).min().ok_or(DataError::EmptyResult)?;
            let first_day_start = first.div_euclid(SECONDS_PER_DAY) * SECONDS_PER_DAY;
            let mut out = RecordSplit { train: Vec::new(), validation: Vec::new(), test: Vec::new() };
            for r in records {
                let day = interaction_day(&r, first_day_start);
                if day <= train_end_day {
                    out.train.push(r);
                } else if day <= validation_end_day {
                    out.validation.push(r);
                } else {
                    out.test.push(r);
                }
            }
            out.non_empty()
        }
        SplitMode::Holdout { .. } => Err(DataError::InvalidSplit("holdout mode needs a separate test log; use `holdout`".into())),
    }
}

/// Splits `log` into train/validation and takes `test` as given.
pub fn holdout(log: Vec<InteractionRecord>, test: Vec<InteractionRecord>, mode: &SplitMode) -> Result<RecordSplit, DataError> {
    mode.validate()?;
    let SplitMode::Holdout { validation, seed } = *mode else {
        return Err(DataError::InvalidSplit("expected holdout mode".into()));
    };
    let n_val = (log.len() as f64 * validation).round() as usize;
    let mut rest = shuffled(log, seed);
    let val = rest.split_off(rest.len() - n_val.min(rest.len()));
    RecordSplit { train: rest, validation: val, test }.non_empty()
}
