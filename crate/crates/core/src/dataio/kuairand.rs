//! Column preset for the public KuaiRand-Pure / KuaiRand-1K release.
//!
//! The release ships interaction logs separately from user and video side
//! tables; [`load`] joins them into [`InteractionRecord`]s. Release time is
//! the video's `upload_dt` at UTC midnight.

use std::collections::HashMap;
use std::fs::File;
use std::path::{Path, PathBuf};

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};

use super::{parse_label, ColumnConfig, DataError, IngestSummary, InteractionRecord, ReleaseColumn, TimeUnit};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Variant {
    Pure,
    #[serde(rename = "1k")]
    OneK,
}

impl Variant {
    fn suffix(self) -> &'static str {
        match self {
            Variant::Pure => "pure",
            Variant::OneK => "1k",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LogSelection {
    #[default]
    Standard,
    Random,
    All,
}

pub const USER_CATEGORICAL: &[&str] = &[
    "user_active_degree",
    "is_lowactive_period",
    "is_live_streamer",
    "is_video_author",
    "follow_user_num_range",
    "fans_user_num_range",
    "friend_user_num_range",
    "register_days_range",
];
pub const USER_DENSE: &[&str] = &["follow_user_num", "fans_user_num", "friend_user_num", "register_days"];
pub const VIDEO_CATEGORICAL: &[&str] = &["author_id", "video_type", "upload_type", "music_type", "tag"];
pub const VIDEO_DENSE: &[&str] = &["video_duration"];

/// Field layout of records produced by [`load`]. `label` is a log column
/// such as `is_click` or `long_view`.
pub fn columns(label: &str) -> ColumnConfig {
    let owned = |xs: &[&str]| xs.iter().map(|s| s.to_string()).collect();
    ColumnConfig {
        user_id: "user_id".into(),
        video_id: "video_id".into(),
        interaction_time: "time_ms".into(),
        release: ReleaseColumn::Timestamp("upload_dt".into()),
        label: label.into(),
        user_categorical: owned(USER_CATEGORICAL),
        video_categorical: owned(VIDEO_CATEGORICAL),
        user_dense: owned(USER_DENSE),
        video_dense: owned(VIDEO_DENSE),
        time_unit: TimeUnit::Milliseconds,
    }
}

pub fn log_files(dir: &Path, variant: Variant, logs: LogSelection) -> Vec<PathBuf> {
    let mut names = Vec::new();
    let suffix = variant.suffix();
    if matches!(logs, LogSelection::Standard | LogSelection::All) {
        names.push(format!("log_standard_4_08_to_4_21_{suffix}.csv"));
        names.push(format!("log_standard_4_22_to_5_08_{suffix}.csv"));
    }
    if matches!(logs, LogSelection::Random | LogSelection::All) {
        names.push(format!("log_random_4_22_to_5_08_{suffix}.csv"));
    }
    names.into_iter().map(|n| dir.join(n)).collect()
}

pub fn user_file(dir: &Path, variant: Variant) -> PathBuf {
    dir.join(format!("user_features_{}.csv", variant.suffix()))
}

pub fn video_file(dir: &Path, variant: Variant) -> PathBuf {
    dir.join(format!("video_features_basic_{}.csv", variant.suffix()))
}

/// True when every file [`load`] needs is present.
pub fn available(dir: &Path, variant: Variant, logs: LogSelection) -> bool {
    log_files(dir, variant, logs)
        .iter()
        .chain([user_file(dir, variant), video_file(dir, variant)].iter())
        .all(|p| p.is_file())
}

struct SideRow {
    categorical: Vec<(String, String)>,
    dense: Vec<(String, f64)>,
    release_time: Option<i64>,
}

fn open(path: &Path) -> Result<csv::Reader<File>, DataError> {
    let f = File::open(path).map_err(|source| DataError::Io { path: path.to_path_buf(), source })?;
    Ok(csv::Reader::from_reader(f))
}

fn read_side(path: &Path, key: &str, cat: &[&str], dense: &[&str], upload: bool) -> Result<HashMap<String, SideRow>, DataError> {
    let mut rdr = open(path)?;
    let header = rdr.headers()?.clone();
    let pos = |name: &str| {
        header
            .iter()
            .position(|h| h.trim() == name)
            .ok_or_else(|| DataError::MissingColumn(format!("{name} in {}", path.display())))
    };
    let key_col = pos(key)?;
    let cat_cols: Vec<usize> = cat.iter().map(|c| pos(c)).collect::<Result<_, _>>()?;
    let dense_cols: Vec<usize> = dense.iter().map(|c| pos(c)).collect::<Result<_, _>>()?;
    let upload_col = if upload { Some(pos("upload_dt")?) } else { None };
    let mut out = HashMap::new();
    for row in rdr.records() {
        let row = row?;
        let categorical = cat
            .iter()
            .zip(&cat_cols)
            .map(|(n, i)| {
                // multi-valued tags keep their first entry
                let v = row[*i].trim().split(',').next().unwrap_or("").to_string();
                (n.to_string(), v)
            })
            .collect();
        let dense = dense
            .iter()
            .zip(&dense_cols)
            .map(|(n, i)| (n.to_string(), row[*i].trim().parse::<f64>().unwrap_or(0.0)))
            .collect();
        let release_time = upload_col.and_then(|i| {
            NaiveDate::parse_from_str(row[i].trim(), "%Y-%m-%d")
                .ok()
                .and_then(|d| d.and_hms_opt(0, 0, 0))
                .map(|dt| dt.and_utc().timestamp())
        });
        out.insert(row[key_col].trim().to_string(), SideRow { categorical, dense, release_time });
    }
    Ok(out)
}

/// Loads and joins the KuaiRand logs with their user and video side tables.
pub fn load(dir: &Path, variant: Variant, label: &str, logs: LogSelection) -> Result<(Vec<InteractionRecord>, IngestSummary), DataError> {
    let users = read_side(&user_file(dir, variant), "user_id", USER_CATEGORICAL, USER_DENSE, false)?;
    let videos = read_side(&video_file(dir, variant), "video_id", VIDEO_CATEGORICAL, VIDEO_DENSE, true)?;
    let mut summary = IngestSummary { time_unit: Some(TimeUnit::Milliseconds), ..Default::default() };
    let mut records = Vec::new();
    for path in log_files(dir, variant, logs) {
        let mut rdr = open(&path)?;
        let header = rdr.headers()?.clone();
        let pos = |name: &str| {
            header
                .iter()
                .position(|h| h.trim() == name)
                .ok_or_else(|| DataError::MissingColumn(format!("{name} in {}", path.display())))
        };
        let (uc, vc, tc, lc) = (pos("user_id")?, pos("video_id")?, pos("time_ms")?, pos(label)?);
        for row in rdr.records() {
            let row = row?;
            summary.rows_read += 1;
            let (Some(u), Some(v), Ok(t)) = (users.get(row[uc].trim()), videos.get(row[vc].trim()), row[tc].trim().parse::<i64>()) else {
                summary.dropped_unparseable += 1;
                continue;
            };
            let Some(release_time) = v.release_time else {
                summary.dropped_unparseable += 1;
                continue;
            };
            let Some(y) = parse_label(&row[lc]) else {
                summary.dropped_bad_label += 1;
                continue;
            };
            let interaction_time = t.div_euclid(1000);
            if release_time > interaction_time {
                summary.dropped_negative_interval += 1;
                continue;
            }
            records.push(InteractionRecord {
                user_id: row[uc].trim().to_string(),
                video_id: row[vc].trim().to_string(),
                interaction_time,
                release_time,
                label: y,
                categorical_features: u.categorical.iter().chain(&v.categorical).cloned().collect(),
                dense_features: u.dense.iter().chain(&v.dense).cloned().collect(),
            });
        }
    }
    summary.retained = records.len();
    if records.is_empty() {
        return Err(DataError::EmptyResult);
    }
    Ok((records, summary))
}
