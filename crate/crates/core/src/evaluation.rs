//! Top-K ranking metrics over logged impressions, with per-interval,
//! cold-start and score-by-interval views.
//!
//! Every user's candidates are that user's test impressions, ranked by `ŷ`
//! with ties broken by ascending video id. Users without a positive are
//! excluded and counted.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt::Write as _;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dataio::{EncodedExample, EncodedSet};
use crate::inference::{assign_ranks, score_batch, FusionConfig, InferenceError, Policy, ScoredExample};
use crate::trainer::ModelBundle;

/// Intervals at or below this count as fresh for the cold-start view.
pub const COLD_START_MAX_INTERVAL: usize = 2;

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("no user has a positive among the candidates")]
    NoEligibleUsers,
    #[error("class `{0}` has no examples")]
    EmptyClass(String),
    #[error("class `{0}` spans fewer than two intervals; slope undefined")]
    DegenerateSlope(String),
    #[error("no records to profile")]
    EmptyInput,
    #[error(transparent)]
    Inference(#[from] InferenceError),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Candidate {
    pub video_id: String,
    pub score: f64,
    pub interval: usize,
    pub positive: bool,
}

/// One user's ranked candidates.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UserEvalGroup {
    pub user_id: String,
    /// In rank order.
    pub candidates: Vec<Candidate>,
}

impl UserEvalGroup {
    pub fn positives(&self) -> usize {
        self.candidates.iter().filter(|c| c.positive).count()
    }

    pub fn relevance(&self) -> Vec<bool> {
        self.candidates.iter().map(|c| c.positive).collect()
    }

    /// Keeps candidates passing `keep`, preserving relative order.
    pub fn restrict<F: Fn(&Candidate) -> bool>(&self, keep: F) -> Self {
        Self { user_id: self.user_id.clone(), candidates: self.candidates.iter().filter(|c| keep(c)).cloned().collect() }
    }
}

/// Groups scored impressions per user in rank order.
pub fn build_groups(scores: &[ScoredExample]) -> Vec<UserEvalGroup> {
    let mut ranked = scores.to_vec();
    assign_ranks(&mut ranked);
    let mut groups: Vec<UserEvalGroup> = Vec::new();
    for s in ranked {
        let c = Candidate { video_id: s.video_id, score: s.y_hat, interval: s.interval, positive: s.label == 1 };
        match groups.last_mut() {
            Some(g) if g.user_id == s.user_id => g.candidates.push(c),
            _ => groups.push(UserEvalGroup { user_id: s.user_id, candidates: vec![c] }),
        }
    }
    groups
}

fn hits(relevance: &[bool], k: usize) -> usize {
    relevance.iter().take(k).filter(|r| **r).count()
}

fn total(relevance: &[bool]) -> usize {
    relevance.iter().filter(|r| **r).count()
}

/// `|topK ∩ positives| / |positives|`; 0 without positives.
pub fn recall_at_k(relevance: &[bool], k: usize) -> f64 {
    let p = total(relevance);
    if p == 0 {
        return 0.0;
    }
    hits(relevance, k) as f64 / p as f64
}

/// Binary-gain DCG@K over IDCG@K with `min(K, |pos|)` ideal hits.
pub fn ndcg_at_k(relevance: &[bool], k: usize) -> f64 {
    let p = total(relevance);
    if p == 0 {
        return 0.0;
    }
    let gain = |rank: usize| 1.0 / ((rank + 1) as f64).log2();
    let dcg: f64 = relevance.iter().take(k).enumerate().filter(|(_, r)| **r).map(|(i, _)| gain(i + 1)).sum();
    let idcg: f64 = (1..=k.min(p)).map(gain).sum();
    dcg / idcg
}

/// Sum of precision@r over hit ranks `r ≤ K`, over `min(K, |pos|)`.
pub fn map_at_k(relevance: &[bool], k: usize) -> f64 {
    let p = total(relevance);
    if p == 0 || k == 0 {
        return 0.0;
    }
    let mut seen = 0usize;
    let mut sum = 0.0;
    for (i, r) in relevance.iter().take(k).enumerate() {
        if *r {
            seen += 1;
            sum += seen as f64 / (i + 1) as f64;
        }
    }
    sum / k.min(p) as f64
}

/// 1 when any positive is in the top K.
pub fn hr_at_k(relevance: &[bool], k: usize) -> f64 {
    if hits(relevance, k) > 0 {
        1.0
    } else {
        0.0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricRow {
    pub k: usize,
    pub recall: f64,
    pub map: f64,
    pub ndcg: f64,
    pub hr: f64,
}

/// Averaged metrics over groups with at least one positive.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricSummary {
    pub rows: Vec<MetricRow>,
    pub evaluated_users: usize,
    pub excluded_users: usize,
}

impl MetricSummary {
    pub fn row(&self, k: usize) -> Option<&MetricRow> {
        self.rows.iter().find(|r| r.k == k)
    }

    pub fn ndcg(&self, k: usize) -> Option<f64> {
        self.row(k).map(|r| r.ndcg)
    }
}

pub fn summarize(groups: &[UserEvalGroup], ks: &[usize]) -> Result<MetricSummary, EvalError> {
    let eligible: Vec<Vec<bool>> = groups.iter().map(UserEvalGroup::relevance).filter(|r| total(r) > 0).collect();
    if eligible.is_empty() {
        return Err(EvalError::NoEligibleUsers);
    }
    let n = eligible.len() as f64;
    let rows = ks
        .iter()
        .map(|&k| {
            let sums = eligible
                .par_iter()
                .map(|r| [recall_at_k(r, k), map_at_k(r, k), ndcg_at_k(r, k), hr_at_k(r, k)])
                .reduce(|| [0.0; 4], |a, b| [a[0] + b[0], a[1] + b[1], a[2] + b[2], a[3] + b[3]]);
            MetricRow { k, recall: sums[0] / n, map: sums[1] / n, ndcg: sums[2] / n, hr: sums[3] / n }
        })
        .collect();
    Ok(MetricSummary { rows, evaluated_users: eligible.len(), excluded_users: groups.len() - eligible.len() })
}

/// Mean NDCG@k over eligible users; 0 when there are none.
pub fn mean_ndcg(scores: &[ScoredExample], k: usize) -> f64 {
    summarize(&build_groups(scores), &[k]).map(|s| s.rows[0].ndcg).unwrap_or(0.0)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IntervalRow {
    pub interval: usize,
    /// `None` when no user has a positive at this interval.
    pub ndcg: Option<f64>,
    pub users: usize,
}

/// NDCG@k per interval over candidates restricted to that interval.
pub fn per_interval_breakdown(groups: &[UserEvalGroup], k: usize, horizon: usize) -> Vec<IntervalRow> {
    (0..horizon)
        .into_par_iter()
        .map(|a| {
            let restricted: Vec<UserEvalGroup> = groups.iter().map(|g| g.restrict(|c| c.interval == a)).collect();
            match summarize(&restricted, &[k]) {
                Ok(s) => IntervalRow { interval: a, ndcg: Some(s.rows[0].ndcg), users: s.evaluated_users },
                Err(_) => IntervalRow { interval: a, ndcg: None, users: 0 },
            }
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum ColdStartReport {
    /// No candidate qualifies as cold.
    Empty,
    Report { videos: usize, summary: MetricSummary },
}

impl ColdStartReport {
    pub fn summary(&self) -> Option<&MetricSummary> {
        match self {
            ColdStartReport::Empty => None,
            ColdStartReport::Report { summary, .. } => Some(summary),
        }
    }
}

/// Videos absent from `train_video_ids` whose every candidate impression
/// has interval ≤ [`COLD_START_MAX_INTERVAL`].
pub fn cold_videos(groups: &[UserEvalGroup], train_video_ids: &BTreeSet<String>) -> BTreeSet<String> {
    let mut fresh: BTreeMap<&str, bool> = BTreeMap::new();
    for c in groups.iter().flat_map(|g| &g.candidates) {
        if train_video_ids.contains(&c.video_id) {
            continue;
        }
        let ok = fresh.entry(&c.video_id).or_insert(true);
        *ok &= c.interval <= COLD_START_MAX_INTERVAL;
    }
    fresh.into_iter().filter(|(_, ok)| *ok).map(|(v, _)| v.to_string()).collect()
}

pub fn cold_start_eval(groups: &[UserEvalGroup], train_video_ids: &BTreeSet<String>, ks: &[usize]) -> ColdStartReport {
    let cold = cold_videos(groups, train_video_ids);
    if cold.is_empty() {
        return ColdStartReport::Empty;
    }
    let restricted: Vec<UserEvalGroup> = groups.iter().map(|g| g.restrict(|c| cold.contains(&c.video_id))).filter(|g| !g.candidates.is_empty()).collect();
    match summarize(&restricted, ks) {
        Ok(summary) => ColdStartReport::Report { videos: cold.len(), summary },
        Err(_) => ColdStartReport::Empty,
    }
}

/// Overall, per-interval and cold-start metrics under one fusion policy.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub policy: Policy,
    pub beta: f64,
    pub ks: Vec<usize>,
    pub overall: MetricSummary,
    pub per_interval_k: usize,
    pub per_interval: Vec<IntervalRow>,
    pub cold_start: ColdStartReport,
}

/// Builds the full report from already-scored impressions.
pub fn report_from_scores(
    scores: &[ScoredExample],
    fusion: &FusionConfig,
    ks: &[usize],
    horizon: usize,
    train_video_ids: &BTreeSet<String>,
) -> Result<MetricReport, EvalError> {
    let groups = build_groups(scores);
    let overall = summarize(&groups, ks)?;
    let per_interval_k = ks.last().copied().unwrap_or(10);
    Ok(MetricReport {
        policy: fusion.policy,
        beta: fusion.beta,
        ks: ks.to_vec(),
        overall,
        per_interval_k,
        per_interval: per_interval_breakdown(&groups, per_interval_k, horizon),
        cold_start: cold_start_eval(&groups, train_video_ids, ks),
    })
}

/// Scores `test` with `bundle` and builds the report. Training video ids are
/// the bundle schema's video vocabulary.
pub fn evaluate(bundle: &ModelBundle, test: &EncodedSet, fusion: &FusionConfig, ks: &[usize]) -> Result<MetricReport, EvalError> {
    let scores = score_batch(bundle, test, fusion)?;
    let train_ids: BTreeSet<String> = bundle.schema.video_ids().iter().cloned().collect();
    report_from_scores(&scores, fusion, ks, bundle.schema.horizon, &train_ids)
}

impl MetricReport {
    /// Aligned-column plain text.
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "policy {}  beta {}", self.policy, self.beta);
        let _ = writeln!(s, "users evaluated {}  excluded {}", self.overall.evaluated_users, self.overall.excluded_users);
        write_rows(&mut s, &self.overall.rows);
        match &self.cold_start {
            ColdStartReport::Empty => {
                let _ = writeln!(s, "cold start: empty");
            }
            ColdStartReport::Report { videos, summary } => {
                let _ = writeln!(s, "cold start: {videos} videos, {} users", summary.evaluated_users);
                write_rows(&mut s, &summary.rows);
            }
        }
        let _ = writeln!(s, "{:>8} {:>10} {:>6}", "interval", format!("ndcg@{}", self.per_interval_k), "users");
        for r in &self.per_interval {
            let v = r.ndcg.map(|x| format!("{x:.6}")).unwrap_or_else(|| "-".into());
            let _ = writeln!(s, "{:>8} {:>10} {:>6}", r.interval, v, r.users);
        }
        s
    }
}

fn write_rows(s: &mut String, rows: &[MetricRow]) {
    let _ = writeln!(s, "{:>5} {:>10} {:>10} {:>10} {:>10}", "k", "recall", "map", "ndcg", "hr");
    for r in rows {
        let _ = writeln!(s, "{:>5} {:>10.6} {:>10.6} {:>10.6} {:>10.6}", r.k, r.recall, r.map, r.ndcg, r.hr);
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CaseStudyRow {
    pub class: String,
    pub interval: usize,
    pub mean_score: f64,
    pub count: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CaseStudy {
    pub rows: Vec<CaseStudyRow>,
    /// Count-weighted least-squares slope of mean `ŷ` against interval.
    pub slopes: BTreeMap<String, f64>,
}

/// Weighted least-squares slope of `y` on `x`.
pub fn weighted_slope(points: &[(f64, f64, f64)]) -> Option<f64> {
    let w: f64 = points.iter().map(|p| p.2).sum();
    if w <= 0.0 {
        return None;
    }
    let mx = points.iter().map(|p| p.0 * p.2).sum::<f64>() / w;
    let my = points.iter().map(|p| p.1 * p.2).sum::<f64>() / w;
    let sxx: f64 = points.iter().map(|p| p.2 * (p.0 - mx).powi(2)).sum();
    if sxx <= 0.0 {
        return None;
    }
    let sxy: f64 = points.iter().map(|p| p.2 * (p.0 - mx) * (p.1 - my)).sum();
    Some(sxy / sxx)
}

/// Mean `ŷ` per (class, interval) with one slope per class. Videos missing
/// from `classes` are skipped.
pub fn report_prediction_by_interval(scores: &[ScoredExample], classes: &HashMap<String, String>) -> Result<CaseStudy, EvalError> {
    let mut acc: BTreeMap<(String, usize), (f64, usize)> = BTreeMap::new();
    for s in scores {
        if let Some(c) = classes.get(&s.video_id) {
            let e = acc.entry((c.clone(), s.interval)).or_insert((0.0, 0));
            e.0 += s.y_hat;
            e.1 += 1;
        }
    }
    let names: BTreeSet<&String> = classes.values().collect();
    let rows: Vec<CaseStudyRow> = acc
        .into_iter()
        .map(|((class, interval), (sum, count))| CaseStudyRow { class, interval, mean_score: sum / count as f64, count })
        .collect();
    let mut slopes = BTreeMap::new();
    for name in names {
        let pts: Vec<(f64, f64, f64)> = rows.iter().filter(|r| &r.class == name).map(|r| (r.interval as f64, r.mean_score, r.count as f64)).collect();
        if pts.is_empty() {
            return Err(EvalError::EmptyClass(name.clone()));
        }
        let slope = weighted_slope(&pts).ok_or_else(|| EvalError::DegenerateSlope(name.clone()))?;
        slopes.insert(name.clone(), slope);
    }
    Ok(CaseStudy { rows, slopes })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProfileRow {
    pub interval: usize,
    pub count: usize,
    /// `None` for intervals without impressions.
    pub positive_rate: Option<f64>,
}

/// Impression count and mean label per interval in `0..horizon`.
pub fn report_interval_profile(examples: &[EncodedExample], horizon: usize) -> Result<Vec<ProfileRow>, EvalError> {
    if examples.is_empty() {
        return Err(EvalError::EmptyInput);
    }
    let mut counts = vec![(0usize, 0usize); horizon];
    for e in examples {
        let a = e.interval.value().min(horizon - 1);
        counts[a].0 += 1;
        counts[a].1 += usize::from(e.label);
    }
    Ok(counts
        .into_iter()
        .enumerate()
        .map(|(interval, (n, p))| ProfileRow { interval, count: n, positive_rate: (n > 0).then(|| p as f64 / n as f64) })
        .collect())
}

/// Plot-ready `interval,value,class` CSV.
pub fn write_series_csv<W: std::io::Write>(writer: W, rows: &[(usize, Option<f64>, String)]) -> Result<(), csv::Error> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(["interval", "value", "class"])?;
    for (a, v, c) in rows {
        w.write_record([a.to_string(), v.map(|x| x.to_string()).unwrap_or_default(), c.clone()])?;
    }
    w.flush()?;
    Ok(())
}

pub fn per_interval_series(rows: &[IntervalRow], class: &str) -> Vec<(usize, Option<f64>, String)> {
    rows.iter().map(|r| (r.interval, r.ndcg, class.to_string())).collect()
}

pub fn case_study_series(study: &CaseStudy, prefix: &str) -> Vec<(usize, Option<f64>, String)> {
    study.rows.iter().map(|r| (r.interval, Some(r.mean_score), format!("{prefix}{}", r.class))).collect()
}

pub fn profile_series(rows: &[ProfileRow]) -> Vec<(usize, Option<f64>, String)> {
    let mut out: Vec<_> = rows.iter().map(|r| (r.interval, Some(r.count as f64), "exposure".to_string())).collect();
    out.extend(rows.iter().map(|r| (r.interval, r.positive_rate, "positive_rate".to_string())));
    out
}
