use serde::{Deserialize, Serialize};

use super::DataError;

pub const SECONDS_PER_DAY: i64 = 86_400;

/// One logged impression after ingestion. Timestamps are epoch seconds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InteractionRecord {
    pub user_id: String,
    pub video_id: String,
    pub interaction_time: i64,
    pub release_time: i64,
    pub label: u8,
    pub categorical_features: Vec<(String, String)>,
    pub dense_features: Vec<(String, f64)>,
}

impl InteractionRecord {
    pub fn categorical(&self, field: &str) -> Option<&str> {
        self.categorical_features
            .iter()
            .find(|(k, _)| k == field)
            .map(|(_, v)| v.as_str())
    }

    pub fn dense(&self, field: &str) -> Option<f64> {
        self.dense_features.iter().find(|(k, _)| k == field).map(|(_, v)| *v)
    }

    /// Raw (unclamped) whole days between release and interaction.
    pub fn raw_interval_days(&self) -> i64 {
        (self.interaction_time - self.release_time).div_euclid(SECONDS_PER_DAY)
    }

    pub fn interval(&self, horizon: usize) -> Result<ReleaseInterval, DataError> {
        compute_interval(self.interaction_time, self.release_time, horizon)
    }
}

/// Day index in `[0, horizon - 1]`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct ReleaseInterval(u32);

impl ReleaseInterval {
    /// Clamps `days` into `[0, horizon - 1]`.
    pub fn clamped(days: i64, horizon: usize) -> Self {
        let top = horizon.saturating_sub(1) as i64;
        Self(days.clamp(0, top) as u32)
    }

    pub fn value(self) -> usize {
        self.0 as usize
    }
}

/// `floor((interaction - release) / 86400)`, clamped to `horizon - 1`.
pub fn compute_interval(interaction_time: i64, release_time: i64, horizon: usize) -> Result<ReleaseInterval, DataError> {
    if horizon == 0 {
        return Err(DataError::InvalidHorizon);
    }
    let diff = interaction_time - release_time;
    if diff < 0 {
        return Err(DataError::NegativeInterval { interaction_time, release_time });
    }
    Ok(ReleaseInterval::clamped(diff / SECONDS_PER_DAY, horizon))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn interval_examples() {
        assert_eq!(compute_interval(3_600, 0, 30).unwrap().value(), 0);
        assert_eq!(compute_interval(1_400 * SECONDS_PER_DAY, 0, 30).unwrap().value(), 29);
        let t = (5.9 * SECONDS_PER_DAY as f64) as i64;
        assert_eq!(compute_interval(t, 0, 30).unwrap().value(), 5);
        assert_eq!(compute_interval(10 * SECONDS_PER_DAY, 0, 1).unwrap().value(), 0);
    }

    #[test]
    fn negative_difference_is_a_defect() {
        assert!(matches!(
            compute_interval(0, SECONDS_PER_DAY, 30),
            Err(DataError::NegativeInterval { .. })
        ));
        assert!(matches!(compute_interval(5, 0, 0), Err(DataError::InvalidHorizon)));
    }
}
