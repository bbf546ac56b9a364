//! A generative world with known recency curves.
//!
//! Click probability is `σ(affinity(u, v) + g_topic(v)(a))`. Training logs
//! expose videos with weight `exp(−a/τ)` among those already released;
//! test logs expose them uniformly.

use std::collections::{HashMap, HashSet};

use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::dataio::{InteractionRecord, SECONDS_PER_DAY};
use crate::numerics::sigmoid;

/// Day 0 of every synthetic world, 2022-04-08 00:00 UTC.
pub const EPOCH_START: i64 = 1_649_376_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CurveKind {
    Decaying,
    Flat,
    Rising,
}

impl CurveKind {
    pub fn as_str(self) -> &'static str {
        match self {
            CurveKind::Decaying => "decaying",
            CurveKind::Flat => "flat",
            CurveKind::Rising => "rising",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Sensitivity {
    Sensitive,
    Insensitive,
}

impl Sensitivity {
    pub fn as_str(self) -> &'static str {
        match self {
            Sensitivity::Sensitive => "sensitive",
            Sensitivity::Insensitive => "insensitive",
        }
    }
}

/// Additive logit shift `g(a)` as a function of release interval in days.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum RecencyCurve {
    /// `−rate·a`.
    Decaying { rate: f64 },
    Flat,
    /// `rate·min(a, cap)`.
    Rising { rate: f64, cap: f64 },
}

impl RecencyCurve {
    pub fn eval(&self, interval: f64) -> f64 {
        match *self {
            RecencyCurve::Decaying { rate } => -rate * interval,
            RecencyCurve::Flat => 0.0,
            RecencyCurve::Rising { rate, cap } => rate * interval.min(cap),
        }
    }

    pub fn kind(&self) -> CurveKind {
        match self {
            RecencyCurve::Decaying { .. } => CurveKind::Decaying,
            RecencyCurve::Flat => CurveKind::Flat,
            RecencyCurve::Rising { .. } => CurveKind::Rising,
        }
    }

    /// Only decaying curves count as sensitive.
    pub fn sensitivity(&self) -> Sensitivity {
        match self {
            RecencyCurve::Decaying { .. } => Sensitivity::Sensitive,
            _ => Sensitivity::Insensitive,
        }
    }

    fn validate(&self) -> Result<(), String> {
        match *self {
            RecencyCurve::Decaying { rate } if !(rate > 0.0 && rate.is_finite()) => Err(format!("decaying rate must be positive, got {rate}")),
            RecencyCurve::Rising { rate, cap } if !(rate > 0.0 && cap > 0.0) => Err(format!("rising rate and cap must be positive, got {rate}, {cap}")),
            _ => Ok(()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct WorldConfig {
    pub n_users: usize,
    pub n_videos: usize,
    pub n_topics: usize,
    pub embedding_dim: usize,
    /// One curve per topic; topic `k` uses `topic_curves[k % len]`.
    pub topic_curves: Vec<RecencyCurve>,
    /// τ in days; `f64::INFINITY` gives uniform training exposure.
    pub exposure_decay: f64,
    pub horizon: usize,
    pub train_days: usize,
    pub test_days: usize,
    pub train_impressions: usize,
    pub test_impressions: usize,
    /// Videos are released uniformly over `[−release_lookback_days, train_days + test_days)`.
    pub release_lookback_days: usize,
    /// Scale of the latent dot product in the affinity logit.
    pub affinity_scale: f64,
    pub affinity_offset: f64,
    /// Weight of the topic center in a video's latent vector, in `[0, 1]`.
    pub topic_coherence: f64,
    /// Standard deviation of the per-video quality term.
    pub video_quality_std: f64,
    pub authors_per_topic: usize,
    /// Probability that a video's observed category (and author pool) is
    /// drawn at random instead of from its topic.
    pub category_noise: f64,
    pub seed: u64,
}

impl Default for WorldConfig {
    fn default() -> Self {
        Self {
            n_users: 500,
            n_videos: 2000,
            n_topics: 4,
            embedding_dim: 8,
            topic_curves: vec![
                RecencyCurve::Decaying { rate: 0.25 },
                RecencyCurve::Decaying { rate: 0.1 },
                RecencyCurve::Flat,
                RecencyCurve::Rising { rate: 0.05, cap: 15.0 },
            ],
            exposure_decay: 3.0,
            horizon: 30,
            train_days: 20,
            test_days: 7,
            train_impressions: 50_000,
            test_impressions: 15_000,
            release_lookback_days: 5,
            affinity_scale: 1.5,
            affinity_offset: -1.0,
            topic_coherence: 0.7,
            video_quality_std: 0.5,
            authors_per_topic: 25,
            category_noise: 0.0,
            seed: 0,
        }
    }
}

impl WorldConfig {
    pub fn validate(&self) -> Result<(), String> {
        let counts = [
            ("n_users", self.n_users),
            ("n_videos", self.n_videos),
            ("n_topics", self.n_topics),
            ("embedding_dim", self.embedding_dim),
            ("horizon", self.horizon),
            ("train_days", self.train_days),
            ("test_days", self.test_days),
            ("train_impressions", self.train_impressions),
            ("test_impressions", self.test_impressions),
            ("authors_per_topic", self.authors_per_topic),
        ];
        if let Some((name, _)) = counts.iter().find(|(_, v)| *v == 0) {
            return Err(format!("{name} must be at least 1"));
        }
        if self.topic_curves.is_empty() {
            return Err("topic_curves must not be empty".into());
        }
        if !(self.exposure_decay > 0.0) {
            return Err(format!("exposure_decay must be positive, got {}", self.exposure_decay));
        }
        if !(0.0..=1.0).contains(&self.topic_coherence) {
            return Err("topic_coherence must lie in [0,1]".into());
        }
        if !(0.0..=1.0).contains(&self.category_noise) {
            return Err("category_noise must lie in [0,1]".into());
        }
        self.topic_curves.iter().try_for_each(RecencyCurve::validate)
    }

    pub fn curve(&self, topic: usize) -> RecencyCurve {
        self.topic_curves[topic % self.topic_curves.len()]
    }
}

/// The sampled world. Index-based; names come from [`user_name`] and
/// [`video_name`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroundTruth {
    pub config: WorldConfig,
    pub user_latent: Vec<Vec<f64>>,
    pub user_cluster: Vec<usize>,
    pub user_activity: Vec<f64>,
    pub video_topic: Vec<usize>,
    /// Category shown as a feature; equals the topic unless noised.
    pub video_category: Vec<usize>,
    pub video_latent: Vec<Vec<f64>>,
    pub video_quality: Vec<f64>,
    pub video_author: Vec<usize>,
    pub video_duration: Vec<f64>,
    /// Day of release relative to day 0; negative for videos predating the log.
    pub video_release_day: Vec<i64>,
}

pub fn user_name(u: usize) -> String {
    format!("u{u:04}")
}

pub fn video_name(v: usize) -> String {
    format!("v{v:05}")
}

fn normal_vec<R: Rng>(rng: &mut R, d: usize) -> Vec<f64> {
    (0..d).map(|_| rng.sample::<f64, _>(StandardNormal)).collect()
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

impl GroundTruth {
    /// Interval-free part of the click logit.
    pub fn affinity(&self, user: usize, video: usize) -> f64 {
        let c = &self.config;
        c.affinity_offset
            + c.affinity_scale * dot(&self.user_latent[user], &self.video_latent[video]) / (c.embedding_dim as f64).sqrt()
            + self.video_quality[video]
            + 0.5 * (self.user_activity[user] - 0.5)
    }

    pub fn curve(&self, video: usize) -> RecencyCurve {
        self.config.curve(self.video_topic[video])
    }

    /// `g(a)` with `a` clamped to `horizon − 1`.
    pub fn recency_effect(&self, video: usize, interval: usize) -> f64 {
        self.curve(video).eval(interval.min(self.config.horizon - 1) as f64)
    }

    pub fn click_probability(&self, user: usize, video: usize, interval: usize) -> f64 {
        sigmoid(self.affinity(user, video) + self.recency_effect(video, interval))
    }

    pub fn sensitivity(&self, video: usize) -> Sensitivity {
        self.curve(video).sensitivity()
    }

    pub fn interval_on(&self, video: usize, day: i64) -> Option<usize> {
        let a = day - self.video_release_day[video];
        (a >= 0).then_some(a as usize)
    }

    fn record(&self, user: usize, video: usize, day: i64, second: i64, label: u8) -> InteractionRecord {
        InteractionRecord {
            user_id: user_name(user),
            video_id: video_name(video),
            interaction_time: EPOCH_START + day * SECONDS_PER_DAY + second,
            release_time: EPOCH_START + self.video_release_day[video] * SECONDS_PER_DAY,
            label,
            categorical_features: vec![
                ("user_cluster".into(), format!("c{}", self.user_cluster[user])),
                ("author_id".into(), format!("a{}", self.video_author[video])),
                ("category".into(), format!("t{}", self.video_category[video])),
            ],
            dense_features: vec![("user_activity".into(), self.user_activity[user]), ("duration".into(), self.video_duration[video])],
        }
    }
}

/// Deterministic in `config.seed`.
pub fn generate_world(config: &WorldConfig) -> Result<GroundTruth, String> {
    config.validate()?;
    let d = config.embedding_dim;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let centers: Vec<Vec<f64>> = (0..config.n_topics).map(|_| normal_vec(&mut rng, d)).collect();

    let user_latent: Vec<Vec<f64>> = (0..config.n_users).map(|_| normal_vec(&mut rng, d)).collect();
    let user_cluster = user_latent
        .iter()
        .map(|p| (0..config.n_topics).max_by(|a, b| dot(p, &centers[*a]).total_cmp(&dot(p, &centers[*b]))).expect("n_topics ≥ 1"))
        .collect();
    let user_activity = (0..config.n_users).map(|_| rng.random::<f64>()).collect();

    let w = config.topic_coherence;
    let noise_w = (1.0 - w * w).sqrt();
    let span = (config.release_lookback_days + config.train_days + config.test_days) as i64;
    let mut video_topic = Vec::with_capacity(config.n_videos);
    let mut video_category = Vec::with_capacity(config.n_videos);
    let mut video_latent = Vec::with_capacity(config.n_videos);
    let mut video_quality = Vec::with_capacity(config.n_videos);
    let mut video_author = Vec::with_capacity(config.n_videos);
    let mut video_duration = Vec::with_capacity(config.n_videos);
    let mut video_release_day = Vec::with_capacity(config.n_videos);
    for v in 0..config.n_videos {
        let topic = v % config.n_topics;
        let noise = normal_vec(&mut rng, d);
        video_latent.push(centers[topic].iter().zip(&noise).map(|(c, n)| w * c + noise_w * n).collect());
        video_quality.push(config.video_quality_std * rng.sample::<f64, _>(StandardNormal));
        let category = if rng.random::<f64>() < config.category_noise { rng.random_range(0..config.n_topics) } else { topic };
        video_author.push(category * config.authors_per_topic + rng.random_range(0..config.authors_per_topic));
        video_category.push(category);
        video_duration.push((10.0 + 5.0 * topic as f64) * (1.0 + rng.random::<f64>()));
        video_release_day.push(rng.random_range(0..span) - config.release_lookback_days as i64);
        video_topic.push(topic);
    }
    Ok(GroundTruth {
        config: config.clone(),
        user_latent,
        user_cluster,
        user_activity,
        video_topic,
        video_category,
        video_latent,
        video_quality,
        video_author,
        video_duration,
        video_release_day,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimulatedLogs {
    pub train: Vec<InteractionRecord>,
    pub test: Vec<InteractionRecord>,
}

fn per_day(total: usize, days: usize, day: usize) -> usize {
    total / days + usize::from(day < total % days)
}

/// Training exposure weight of an impression at interval `a`.
pub fn exposure_weight(interval: usize, tau: f64) -> f64 {
    if tau.is_infinite() {
        1.0
    } else {
        (-(interval as f64) / tau).exp()
    }
}

/// Biased train log and uniform-exposure test log, from independent streams.
pub fn simulate_logs(truth: &GroundTruth) -> SimulatedLogs {
    let c = &truth.config;
    let mut train_rng = ChaCha8Rng::seed_from_u64(c.seed);
    train_rng.set_stream(1);
    let mut test_rng = ChaCha8Rng::seed_from_u64(c.seed);
    test_rng.set_stream(2);

    let mut train = Vec::with_capacity(c.train_impressions);
    for day in 0..c.train_days {
        let live: Vec<(usize, usize)> = (0..c.n_videos).filter_map(|v| truth.interval_on(v, day as i64).map(|a| (v, a))).collect();
        if live.is_empty() {
            continue;
        }
        let picker = WeightedIndex::new(live.iter().map(|(_, a)| exposure_weight(*a, c.exposure_decay))).expect("positive weights");
        for _ in 0..per_day(c.train_impressions, c.train_days, day) {
            let (v, a) = live[picker.sample(&mut train_rng)];
            let u = train_rng.random_range(0..c.n_users);
            let second = train_rng.random_range(0..SECONDS_PER_DAY);
            let y = u8::from(train_rng.random::<f64>() < truth.click_probability(u, v, a));
            train.push(truth.record(u, v, day as i64, second, y));
        }
    }

    let mut test = Vec::with_capacity(c.test_impressions);
    let mut seen: HashSet<(usize, usize)> = HashSet::new();
    for offset in 0..c.test_days {
        let day = c.train_days + offset;
        let live: Vec<(usize, usize)> = (0..c.n_videos).filter_map(|v| truth.interval_on(v, day as i64).map(|a| (v, a))).collect();
        if live.is_empty() {
            continue;
        }
        let target = per_day(c.test_impressions, c.test_days, offset);
        let mut made = 0;
        let mut attempts = 0;
        while made < target && attempts < 20 * target {
            attempts += 1;
            let (v, a) = live[test_rng.random_range(0..live.len())];
            let u = test_rng.random_range(0..c.n_users);
            if !seen.insert((u, v)) {
                continue;
            }
            let second = test_rng.random_range(0..SECONDS_PER_DAY);
            let y = u8::from(test_rng.random::<f64>() < truth.click_probability(u, v, a));
            test.push(truth.record(u, v, day as i64, second, y));
            made += 1;
        }
    }
    SimulatedLogs { train, test }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TopicTruth {
    pub topic: usize,
    pub curve: RecencyCurve,
    pub sensitivity: Sensitivity,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VideoTruth {
    pub video_id: String,
    pub topic: usize,
    pub curve: CurveKind,
    pub sensitivity: Sensitivity,
    pub release_day: i64,
}

/// Ground truth shipped next to the generated CSVs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Sidecar {
    pub config: WorldConfig,
    pub topics: Vec<TopicTruth>,
    pub videos: Vec<VideoTruth>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Grouping {
    Sensitivity,
    Curve,
}

impl Sidecar {
    pub fn from_truth(truth: &GroundTruth) -> Self {
        let topics = (0..truth.config.n_topics)
            .map(|k| {
                let curve = truth.config.curve(k);
                TopicTruth { topic: k, curve, sensitivity: curve.sensitivity() }
            })
            .collect();
        let videos = (0..truth.config.n_videos)
            .map(|v| VideoTruth {
                video_id: video_name(v),
                topic: truth.video_topic[v],
                curve: truth.curve(v).kind(),
                sensitivity: truth.sensitivity(v),
                release_day: truth.video_release_day[v],
            })
            .collect();
        Self { config: truth.config.clone(), topics, videos }
    }

    /// Video id → class name under `grouping`.
    pub fn classes(&self, grouping: Grouping) -> HashMap<String, String> {
        self.videos
            .iter()
            .map(|v| {
                let class = match grouping {
                    Grouping::Sensitivity => v.sensitivity.as_str(),
                    Grouping::Curve => v.curve.as_str(),
                };
                (v.video_id.clone(), class.to_string())
            })
            .collect()
    }
}

/// Candidates ordered by descending true click probability at their
/// intervals, ties by ascending video name.
pub fn oracle_best_ranking(truth: &GroundTruth, user: usize, candidates: &[usize], intervals: &HashMap<usize, usize>) -> Vec<usize> {
    let mut scored: Vec<(f64, String, usize)> = candidates
        .iter()
        .map(|&v| {
            let a = intervals.get(&v).copied().unwrap_or(0);
            (truth.click_probability(user, v, a), video_name(v), v)
        })
        .collect();
    scored.sort_by(|x, y| y.0.total_cmp(&x.0).then_with(|| x.1.cmp(&y.1)));
    scored.into_iter().map(|s| s.2).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small() -> WorldConfig {
        WorldConfig { n_users: 50, n_videos: 120, train_impressions: 3000, test_impressions: 600, ..Default::default() }
    }

    #[test]
    fn classes_follow_curves() {
        let cfg = WorldConfig { n_topics: 2, topic_curves: vec![RecencyCurve::Decaying { rate: 0.2 }, RecencyCurve::Flat], ..small() };
        let t = generate_world(&cfg).unwrap();
        let side = Sidecar::from_truth(&t);
        assert_eq!(side.topics[0].sensitivity, Sensitivity::Sensitive);
        assert_eq!(side.topics[1].sensitivity, Sensitivity::Insensitive);
    }

    #[test]
    fn deterministic_under_seed() {
        let a = generate_world(&small()).unwrap();
        let b = generate_world(&small()).unwrap();
        assert_eq!(a, b);
        assert_eq!(simulate_logs(&a), simulate_logs(&b));
        let c = generate_world(&WorldConfig { seed: 1, ..small() }).unwrap();
        assert_ne!(a.user_latent, c.user_latent);
    }

    #[test]
    fn curve_monotonicity() {
        let t = generate_world(&small()).unwrap();
        let v = (0..t.config.n_videos).find(|v| t.curve(*v).kind() == CurveKind::Decaying).unwrap();
        let f = (0..t.config.n_videos).find(|v| t.curve(*v).kind() == CurveKind::Flat).unwrap();
        for a in 1..t.config.horizon {
            assert!(t.click_probability(3, v, a) < t.click_probability(3, v, a - 1));
            assert_eq!(t.click_probability(3, f, a), t.click_probability(3, f, 0));
        }
    }

    #[test]
    fn rejects_invalid_configs() {
        assert!(generate_world(&WorldConfig { n_videos: 0, ..small() }).is_err());
        assert!(generate_world(&WorldConfig { exposure_decay: 0.0, ..small() }).is_err());
        assert!(generate_world(&WorldConfig { topic_curves: vec![RecencyCurve::Decaying { rate: -1.0 }], ..small() }).is_err());
    }

    #[test]
    fn uniform_limit_of_exposure() {
        assert_eq!(exposure_weight(0, f64::INFINITY), exposure_weight(25, f64::INFINITY));
        assert!((exposure_weight(2, 2.0) - (-1.0f64).exp()).abs() < 1e-15);
    }

    #[test]
    fn logs_respect_release_and_uniqueness() {
        let t = generate_world(&small()).unwrap();
        let logs = simulate_logs(&t);
        assert_eq!(logs.train.len(), 3000);
        assert!(logs.train.iter().chain(&logs.test).all(|r| r.release_time <= r.interaction_time));
        let pairs: HashSet<(&str, &str)> = logs.test.iter().map(|r| (r.user_id.as_str(), r.video_id.as_str())).collect();
        assert_eq!(pairs.len(), logs.test.len());
        let first_test = EPOCH_START + t.config.train_days as i64 * SECONDS_PER_DAY;
        assert!(logs.test.iter().all(|r| r.interaction_time >= first_test));
        assert!(logs.train.iter().all(|r| r.interaction_time < first_test));
    }

    #[test]
    fn oracle_ranking_examples() {
        let mut t = generate_world(&small()).unwrap();
        let dec = (0..120).find(|v| t.curve(*v).kind() == CurveKind::Decaying).unwrap();
        let flat = (0..120).find(|v| t.curve(*v).kind() == CurveKind::Flat).unwrap();
        t.video_latent[dec] = t.video_latent[flat].clone();
        t.video_quality[dec] = t.video_quality[flat];
        let intervals: HashMap<usize, usize> = [(dec, 20), (flat, 20)].into_iter().collect();
        assert_eq!(oracle_best_ranking(&t, 0, &[dec, flat], &intervals), vec![flat, dec]);
        assert_eq!(oracle_best_ranking(&t, 0, &[dec], &intervals), vec![dec]);
    }
}
