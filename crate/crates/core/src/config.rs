//! Every tunable of the pipeline, with the published defaults.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::lbfgs::LbfgsConfig;
use crate::validity::RepairConfig;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ConfigError {
    #[error("weight `{0}` must be positive")]
    NonPositiveWeight(&'static str),
    #[error("smoothing tolerance delta must lie in (0, 1), got {0}")]
    Delta(f64),
    #[error("concavity tolerance epsilon must lie in (0, 1], got {0}")]
    Epsilon(f64),
    #[error("sampling grid must be at least 2, got {0}")]
    Grid(usize),
    #[error("degree {0} outside the supported range 4..=12")]
    Degree(usize),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PipelineConfig {
    /// Stretch weight of the segmentation shape energy.
    pub sigma1: f64,
    /// Strain weight of the segmentation shape energy.
    pub sigma2: f64,
    /// Area-uniformity weight.
    pub omega1: f64,
    /// Shape-energy weight.
    pub omega2: f64,
    /// Tangent-angle weight.
    pub omega3: f64,
    /// First-derivative weight of the patch energy.
    pub tau1: f64,
    /// Second-derivative weight of the patch energy.
    pub tau2: f64,
    /// Normalized concavity tolerance of the convex decomposition.
    pub epsilon: f64,
    /// Laplacian smoothing tolerance.
    pub delta: f64,
    pub smoothing_max_iter: usize,
    /// Forced patch degree; the effective degree is `max(4, input degree, this)`.
    pub degree: Option<usize>,
    /// Per-patch sampling resolution of the quality metrics.
    pub grid: usize,
    pub lbfgs: LbfgsConfig,
    pub repair: RepairConfig,
    /// Penalty restarts when the segmentation curves violate the disjointness check.
    pub validity_restarts: usize,
    /// Node budget of the edge-count search in the quadrangulation.
    pub count_search_budget: usize,
    pub seed: u64,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            sigma1: 2.0,
            sigma2: 1.0,
            omega1: 2.0,
            omega2: 1.0,
            omega3: 50.0,
            tau1: 2.0,
            tau2: 1.5,
            epsilon: 0.1,
            delta: 0.001,
            smoothing_max_iter: 1000,
            degree: None,
            grid: 30,
            lbfgs: LbfgsConfig::default(),
            repair: RepairConfig::default(),
            validity_restarts: 4,
            count_search_budget: 200_000,
            seed: 0,
        }
    }
}

impl PipelineConfig {
    pub fn validate(&self) -> Result<(), ConfigError> {
        let weights = [
            ("sigma1", self.sigma1),
            ("sigma2", self.sigma2),
            ("omega1", self.omega1),
            ("omega2", self.omega2),
            ("omega3", self.omega3),
            ("tau1", self.tau1),
            ("tau2", self.tau2),
            ("repair.mu_scale", self.repair.mu_scale),
        ];
        for (name, w) in weights {
            if !(w > 0.0) || !w.is_finite() {
                return Err(ConfigError::NonPositiveWeight(name));
            }
        }
        if !(self.delta > 0.0 && self.delta < 1.0) {
            return Err(ConfigError::Delta(self.delta));
        }
        if !(self.epsilon > 0.0 && self.epsilon <= 1.0) {
            return Err(ConfigError::Epsilon(self.epsilon));
        }
        if self.grid < 2 {
            return Err(ConfigError::Grid(self.grid));
        }
        if let Some(d) = self.degree {
            if !(4..=12).contains(&d) {
                return Err(ConfigError::Degree(d));
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_are_valid() {
        let c = PipelineConfig::default();
        c.validate().unwrap();
        assert_eq!(
            (c.sigma1, c.sigma2, c.omega1, c.omega2, c.omega3),
            (2.0, 1.0, 2.0, 1.0, 50.0)
        );
        assert_eq!((c.tau1, c.tau2, c.delta), (2.0, 1.5, 0.001));
    }

    #[test]
    fn rejects_bad_values() {
        let c = PipelineConfig {
            omega3: 0.0,
            ..Default::default()
        };
        assert_eq!(c.validate(), Err(ConfigError::NonPositiveWeight("omega3")));
        let c = PipelineConfig {
            delta: 1.0,
            ..Default::default()
        };
        assert!(matches!(c.validate(), Err(ConfigError::Delta(_))));
        let c = PipelineConfig {
            epsilon: 0.0,
            ..Default::default()
        };
        assert!(matches!(c.validate(), Err(ConfigError::Epsilon(_))));
    }

    #[test]
    fn partial_json_uses_defaults() {
        let c: PipelineConfig = serde_json::from_str(r#"{"epsilon": 0.3, "seed": 7}"#).unwrap();
        assert_eq!(c.epsilon, 0.3);
        assert_eq!(c.seed, 7);
        assert_eq!(c.omega3, 50.0);
    }
}
