use std::collections::HashMap;
use std::fs::File;
use std::io::Read;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{DataError, InteractionRecord, SECONDS_PER_DAY};

/// Epoch values above this magnitude are read as milliseconds (1e11 seconds
/// lies in the year 5138; 1e11 milliseconds in 1973).
pub const MILLIS_THRESHOLD: i64 = 100_000_000_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TimeUnit {
    #[default]
    Auto,
    Seconds,
    Milliseconds,
}

/// Where the release information lives.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ReleaseColumn {
    /// Release timestamp column, same unit handling as the interaction time.
    Timestamp(String),
    /// Precomputed whole-day interval column.
    IntervalDays(String),
}

/// Mapping from CSV header names to record fields.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ColumnConfig {
    pub user_id: String,
    pub video_id: String,
    pub interaction_time: String,
    pub release: ReleaseColumn,
    pub label: String,
    #[serde(default)]
    pub user_categorical: Vec<String>,
    #[serde(default)]
    pub video_categorical: Vec<String>,
    #[serde(default)]
    pub user_dense: Vec<String>,
    #[serde(default)]
    pub video_dense: Vec<String>,
    #[serde(default)]
    pub time_unit: TimeUnit,
}

impl ColumnConfig {
    /// Columns written by the synthetic generator.
    pub fn synthetic() -> Self {
        Self {
            user_id: "user_id".into(),
            video_id: "video_id".into(),
            interaction_time: "interaction_time".into(),
            release: ReleaseColumn::Timestamp("release_time".into()),
            label: "label".into(),
            user_categorical: vec!["user_cluster".into()],
            video_categorical: vec!["author_id".into(), "category".into()],
            user_dense: vec!["user_activity".into()],
            video_dense: vec!["duration".into()],
            time_unit: TimeUnit::Seconds,
        }
    }

    pub fn all_categorical(&self) -> impl Iterator<Item = &String> {
        self.user_categorical.iter().chain(&self.video_categorical)
    }

    pub fn all_dense(&self) -> impl Iterator<Item = &String> {
        self.user_dense.iter().chain(&self.video_dense)
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct IngestSummary {
    pub rows_read: usize,
    pub retained: usize,
    pub dropped_negative_interval: usize,
    pub dropped_bad_label: usize,
    pub dropped_unparseable: usize,
    pub time_unit: Option<TimeUnit>,
}

impl IngestSummary {
    pub fn dropped(&self) -> usize {
        self.dropped_negative_interval + self.dropped_bad_label + self.dropped_unparseable
    }
}

pub fn parse_label(raw: &str) -> Option<u8> {
    match raw.trim() {
        "1" | "1.0" | "true" | "True" => Some(1),
        "0" | "0.0" | "false" | "False" => Some(0),
        _ => None,
    }
}

fn parse_epoch(raw: &str) -> Option<i64> {
    let s = raw.trim();
    s.parse::<i64>()
        .ok()
        .or_else(|| s.parse::<f64>().ok().filter(|v| v.is_finite()).map(|v| v.floor() as i64))
}

fn to_seconds(value: i64, unit: TimeUnit) -> i64 {
    match unit {
        TimeUnit::Milliseconds => value.div_euclid(1000),
        _ => value,
    }
}

pub fn detect_unit(sample: i64) -> TimeUnit {
    if sample.abs() > MILLIS_THRESHOLD {
        TimeUnit::Milliseconds
    } else {
        TimeUnit::Seconds
    }
}

/// Reads an interaction log. Rows with a release after the interaction or an
/// unparseable label are dropped and counted.
pub fn ingest_csv(path: &Path, columns: &ColumnConfig) -> Result<(Vec<InteractionRecord>, IngestSummary), DataError> {
    let file = File::open(path).map_err(|source| DataError::Io { path: path.to_path_buf(), source })?;
    ingest_reader(file, columns).map_err(|e| e.with_path(path))
}

pub fn ingest_reader<R: Read>(reader: R, columns: &ColumnConfig) -> Result<(Vec<InteractionRecord>, IngestSummary), DataError> {
    let mut rdr = csv::ReaderBuilder::new().flexible(false).from_reader(reader);
    let header = rdr.headers()?.clone();
    let position: HashMap<&str, usize> = header.iter().enumerate().map(|(i, h)| (h.trim(), i)).collect();
    let col = |name: &str| position.get(name).copied().ok_or_else(|| DataError::MissingColumn(name.to_string()));

    let user_col = col(&columns.user_id)?;
    let video_col = col(&columns.video_id)?;
    let time_col = col(&columns.interaction_time)?;
    let label_col = col(&columns.label)?;
    let release_col = match &columns.release {
        ReleaseColumn::Timestamp(c) | ReleaseColumn::IntervalDays(c) => col(c)?,
    };
    let cat_cols: Vec<(String, usize)> = columns
        .all_categorical()
        .map(|c| col(c).map(|i| (c.clone(), i)))
        .collect::<Result<_, _>>()?;
    let dense_cols: Vec<(String, usize)> = columns
        .all_dense()
        .map(|c| col(c).map(|i| (c.clone(), i)))
        .collect::<Result<_, _>>()?;

    let mut summary = IngestSummary::default();
    let mut unit = match columns.time_unit {
        TimeUnit::Auto => None,
        u => Some(u),
    };
    let mut records = Vec::new();
    for row in rdr.records() {
        let row = row?;
        summary.rows_read += 1;
        let Some(raw_time) = parse_epoch(&row[time_col]) else {
            summary.dropped_unparseable += 1;
            continue;
        };
        let u = *unit.get_or_insert_with(|| detect_unit(raw_time));
        let interaction_time = to_seconds(raw_time, u);
        let release_time = match &columns.release {
            ReleaseColumn::Timestamp(_) => match parse_epoch(&row[release_col]) {
                Some(r) => to_seconds(r, u),
                None => {
                    summary.dropped_unparseable += 1;
                    continue;
                }
            },
            ReleaseColumn::IntervalDays(_) => match parse_epoch(&row[release_col]) {
                Some(days) => interaction_time - days * SECONDS_PER_DAY,
                None => {
                    summary.dropped_unparseable += 1;
                    continue;
                }
            },
        };
        let Some(label) = parse_label(&row[label_col]) else {
            summary.dropped_bad_label += 1;
            continue;
        };
        if release_time > interaction_time {
            summary.dropped_negative_interval += 1;
            continue;
        }
        records.push(InteractionRecord {
            user_id: row[user_col].trim().to_string(),
            video_id: row[video_col].trim().to_string(),
            interaction_time,
            release_time,
            label,
            categorical_features: cat_cols.iter().map(|(n, i)| (n.clone(), row[*i].trim().to_string())).collect(),
            dense_features: dense_cols
                .iter()
                .map(|(n, i)| (n.clone(), row[*i].trim().parse::<f64>().unwrap_or(f64::NAN)))
                .collect(),
        });
    }
    summary.retained = records.len();
    summary.time_unit = unit;
    if records.is_empty() {
        return Err(DataError::EmptyResult);
    }
    Ok((records, summary))
}

/// Writes records with the column layout described by `columns`. Release
/// information is written as a seconds timestamp.
pub fn write_csv<W: std::io::Write>(writer: W, records: &[InteractionRecord], columns: &ColumnConfig) -> Result<(), DataError> {
    let mut w = csv::Writer::from_writer(writer);
    let release_name = match &columns.release {
        ReleaseColumn::Timestamp(c) | ReleaseColumn::IntervalDays(c) => c.clone(),
    };
    let mut header = vec![
        columns.user_id.clone(),
        columns.video_id.clone(),
        columns.interaction_time.clone(),
        release_name,
        columns.label.clone(),
    ];
    header.extend(columns.all_categorical().cloned());
    header.extend(columns.all_dense().cloned());
    w.write_record(&header)?;
    for r in records {
        let release = match &columns.release {
            ReleaseColumn::Timestamp(_) => r.release_time.to_string(),
            ReleaseColumn::IntervalDays(_) => r.raw_interval_days().to_string(),
        };
        let mut row = vec![
            r.user_id.clone(),
            r.video_id.clone(),
            r.interaction_time.to_string(),
            release,
            r.label.to_string(),
        ];
        for name in columns.all_categorical() {
            row.push(r.categorical(name).unwrap_or_default().to_string());
        }
        for name in columns.all_dense() {
            row.push(format!("{}", r.dense(name).unwrap_or(f64::NAN)));
        }
        w.write_record(&row)?;
    }
    w.flush().map_err(|source| DataError::Io { path: "<writer>".into(), source })?;
    Ok(())
}
