//! Composite QoS objective `Y = α·ARS + β·AEC + γ·HC + δ·SLA` over normalized
//! indicators, and the reward `q = 1 - Y` the tree search maximizes.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::infra::ClusterState;
use crate::time::Nanos;

/// Upper bound of the variance of values confined to `[0, 1]`.
pub const MAX_UTIL_VARIANCE: f64 = 0.25;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ObjectiveError {
    #[error("bad bounds for {0}: max must exceed min")]
    BadBounds(&'static str),
    #[error("bad weights: coefficients must be non-negative with a positive sum")]
    BadWeights,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct QosWeights {
    alpha: f64,
    beta: f64,
    gamma: f64,
    delta: f64,
}

impl QosWeights {
    /// Normalizes the coefficients to sum to one.
    pub fn new(alpha: f64, beta: f64, gamma: f64, delta: f64) -> Result<Self, ObjectiveError> {
        let all = [alpha, beta, gamma, delta];
        if all.iter().any(|w| !(*w >= 0.0) || !w.is_finite()) {
            return Err(ObjectiveError::BadWeights);
        }
        let sum: f64 = all.iter().sum();
        if sum <= 0.0 {
            return Err(ObjectiveError::BadWeights);
        }
        Ok(Self {
            alpha: alpha / sum,
            beta: beta / sum,
            gamma: gamma / sum,
            delta: delta / sum,
        })
    }

    pub fn as_array(&self) -> [f64; 4] {
        [self.alpha, self.beta, self.gamma, self.delta]
    }
}

impl Default for QosWeights {
    fn default() -> Self {
        Self::new(0.3, 0.2, 0.2, 0.3).expect("valid default weights")
    }
}

/// Raw first-level indicators over one window.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct QosIndicators {
    /// Mean response time, seconds.
    pub ars_s: f64,
    /// Energy, joules.
    pub aec_j: f64,
    /// Population variance of per-host CPU utilization.
    pub hc_util_variance: f64,
    pub hc_migrations: u32,
    /// Deadline misses.
    pub sla: u32,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Bounds {
    pub min: f64,
    pub max: f64,
}

impl Bounds {
    pub fn new(min: f64, max: f64) -> Self {
        Self { min, max }
    }

    fn scale(&self, x: f64) -> f64 {
        ((x - self.min) / (self.max - self.min)).clamp(0.0, 1.0)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct NormalizationBounds {
    pub ars_s: Bounds,
    pub aec_j: Bounds,
    /// Share of HC given to utilization variance; migrations get the rest.
    pub hc_variance_weight: f64,
}

impl NormalizationBounds {
    pub fn check(&self) -> Result<(), ObjectiveError> {
        if !(self.ars_s.max > self.ars_s.min) {
            return Err(ObjectiveError::BadBounds("ars"));
        }
        if !(self.aec_j.max > self.aec_j.min) {
            return Err(ObjectiveError::BadBounds("aec"));
        }
        if !(0.0..=1.0).contains(&self.hc_variance_weight) {
            return Err(ObjectiveError::BadBounds("hc"));
        }
        Ok(())
    }
}

pub fn normalize_indicators(
    ind: &QosIndicators,
    bounds: &NormalizationBounds,
    window_task_count: u32,
) -> Result<[f64; 4], ObjectiveError> {
    bounds.check()?;
    let ars = bounds.ars_s.scale(ind.ars_s);
    let aec = bounds.aec_j.scale(ind.aec_j);
    let var_term = (ind.hc_util_variance / MAX_UTIL_VARIANCE).clamp(0.0, 1.0);
    let (mig_term, sla) = if window_task_count == 0 {
        (0.0, 0.0)
    } else {
        let n = window_task_count as f64;
        (
            (ind.hc_migrations as f64 / n).min(1.0),
            (ind.sla as f64 / n).min(1.0),
        )
    };
    let w = bounds.hc_variance_weight;
    let hc = (w * var_term + (1.0 - w) * mig_term).clamp(0.0, 1.0);
    Ok([ars, aec, hc, sla])
}

pub fn score(normalized: &[f64; 4], weights: &QosWeights) -> f64 {
    normalized
        .iter()
        .zip(weights.as_array())
        .map(|(x, w)| x * w)
        .sum()
}

pub fn reward(y: f64) -> f64 {
    1.0 - y
}

/// Weights plus validated bounds, ready to score windows.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Objective {
    pub weights: QosWeights,
    pub bounds: NormalizationBounds,
}

impl Objective {
    pub fn new(weights: QosWeights, bounds: NormalizationBounds) -> Result<Self, ObjectiveError> {
        bounds.check()?;
        Ok(Self { weights, bounds })
    }

    pub fn y(&self, ind: &QosIndicators, window_task_count: u32) -> f64 {
        let v = normalize_indicators(ind, &self.bounds, window_task_count).expect("bounds checked at construction");
        score(&v, &self.weights)
    }

    pub fn q(&self, ind: &QosIndicators, window_task_count: u32) -> f64 {
        reward(self.y(ind, window_task_count))
    }
}

/// Config-file view of the objective; unset bounds are derived from the fleet.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ObjectiveConfig {
    pub alpha: f64,
    pub beta: f64,
    pub gamma: f64,
    pub delta: f64,
    pub ars_min_ms: f64,
    /// Defaults to eight frame periods.
    pub ars_max_ms: Option<f64>,
    /// Defaults to the fleet's idle power over one window.
    pub aec_min_j: Option<f64>,
    /// Defaults to the fleet's busy power over one window.
    pub aec_max_j: Option<f64>,
    pub hc_variance_weight: f64,
}

impl Default for ObjectiveConfig {
    fn default() -> Self {
        Self {
            alpha: 0.3,
            beta: 0.2,
            gamma: 0.2,
            delta: 0.3,
            ars_min_ms: 0.0,
            ars_max_ms: None,
            aec_min_j: None,
            aec_max_j: None,
            hc_variance_weight: 0.5,
        }
    }
}

impl ObjectiveConfig {
    pub fn weights(&self) -> Result<QosWeights, ObjectiveError> {
        QosWeights::new(self.alpha, self.beta, self.gamma, self.delta)
    }

    pub fn resolve(&self, cluster: &ClusterState, window: Nanos) -> Result<Objective, ObjectiveError> {
        let secs = window.as_secs_f64();
        let bounds = NormalizationBounds {
            ars_s: Bounds::new(
                self.ars_min_ms / 1e3,
                self.ars_max_ms.map_or(8.0 * secs, |ms| ms / 1e3),
            ),
            aec_j: Bounds::new(
                self.aec_min_j.unwrap_or(cluster.idle_power_w() * secs),
                self.aec_max_j.unwrap_or(cluster.busy_power_w() * secs),
            ),
            hc_variance_weight: self.hc_variance_weight,
        };
        Objective::new(self.weights()?, bounds)
    }

    pub fn violations(&self) -> Vec<(String, String)> {
        let mut out = Vec::new();
        for (k, w) in [("alpha", self.alpha), ("beta", self.beta), ("gamma", self.gamma), ("delta", self.delta)] {
            if !(w >= 0.0) {
                out.push((k.to_string(), "must be >= 0".into()));
            }
        }
        if out.is_empty() && self.alpha + self.beta + self.gamma + self.delta <= 0.0 {
            out.push(("alpha".into(), "weights must have a positive sum".into()));
        }
        if let Some(max) = self.ars_max_ms {
            if !(max > self.ars_min_ms) {
                out.push(("ars_max_ms".into(), "must exceed ars_min_ms".into()));
            }
        }
        if let (Some(lo), Some(hi)) = (self.aec_min_j, self.aec_max_j) {
            if !(hi > lo) {
                out.push(("aec_max_j".into(), "must exceed aec_min_j".into()));
            }
        }
        if !(0.0..=1.0).contains(&self.hc_variance_weight) {
            out.push(("hc_variance_weight".into(), "out of [0,1]".into()));
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn bounds() -> NormalizationBounds {
        NormalizationBounds {
            ars_s: Bounds::new(0.0, 0.1),
            aec_j: Bounds::new(10.0, 20.0),
            hc_variance_weight: 0.5,
        }
    }

    #[test]
    fn weights_normalize() {
        let w = QosWeights::new(2.0, 2.0, 2.0, 2.0).unwrap();
        assert_eq!(w.as_array(), [0.25; 4]);
        assert!((QosWeights::default().as_array().iter().sum::<f64>() - 1.0).abs() < 1e-12);
        assert_eq!(QosWeights::new(-1.0, 1.0, 0.0, 0.0), Err(ObjectiveError::BadWeights));
        assert_eq!(QosWeights::new(0.0, 0.0, 0.0, 0.0), Err(ObjectiveError::BadWeights));
    }

    #[test]
    fn min_max_endpoints_and_clamping() {
        let at_min = QosIndicators { ars_s: 0.0, aec_j: 10.0, ..Default::default() };
        let v = normalize_indicators(&at_min, &bounds(), 4).unwrap();
        assert_eq!((v[0], v[1]), (0.0, 0.0));

        let above = QosIndicators { ars_s: 5.0, aec_j: 99.0, ..Default::default() };
        let v = normalize_indicators(&above, &bounds(), 4).unwrap();
        assert_eq!((v[0], v[1]), (1.0, 1.0));
    }

    #[test]
    fn empty_window_zeroes_count_terms() {
        let ind = QosIndicators { hc_migrations: 3, sla: 2, ..Default::default() };
        let v = normalize_indicators(&ind, &bounds(), 0).unwrap();
        assert_eq!((v[2], v[3]), (0.0, 0.0));
    }

    #[test]
    fn hc_and_sla_terms() {
        let ind = QosIndicators { hc_util_variance: 0.125, hc_migrations: 1, sla: 1, ..Default::default() };
        let v = normalize_indicators(&ind, &bounds(), 4).unwrap();
        assert!((v[2] - (0.5 * 0.5 + 0.5 * 0.25)).abs() < 1e-12);
        assert!((v[3] - 0.25).abs() < 1e-12);
    }

    #[test]
    fn bad_bounds_rejected() {
        let mut b = bounds();
        b.aec_j = Bounds::new(5.0, 5.0);
        let err = normalize_indicators(&QosIndicators::default(), &b, 1).unwrap_err();
        assert!(err.to_string().starts_with("bad bounds"));
    }

    #[test]
    fn score_examples() {
        let single = QosWeights::new(1.0, 0.0, 0.0, 0.0).unwrap();
        assert_eq!(score(&[0.4, 0.9, 0.9, 0.9], &single), 0.4);
        assert!((score(&[1.0; 4], &QosWeights::default()) - 1.0).abs() < 1e-12);
        let even = QosWeights::new(0.25, 0.25, 0.25, 0.25).unwrap();
        assert!((score(&[0.2, 0.4, 0.6, 0.8], &even) - 0.5).abs() < 1e-12);
    }

    #[test]
    fn reward_examples() {
        assert_eq!(reward(0.0), 1.0);
        assert_eq!(reward(1.0), 0.0);
        assert_eq!(reward(0.5), 0.5);
    }

    #[test]
    fn resolve_derives_fleet_bounds() {
        let c = crate::infra::default_cluster(1, 1).unwrap();
        let window = Nanos::from_millis(10);
        let o = ObjectiveConfig::default().resolve(&c, window).unwrap();
        assert!((o.bounds.aec_j.min - 50.0 * 0.01).abs() < 1e-12);
        assert!((o.bounds.aec_j.max - 150.0 * 0.01).abs() < 1e-12);
        assert!((o.bounds.ars_s.max - 0.08).abs() < 1e-12);
    }
}
