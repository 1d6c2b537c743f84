//! Run configuration, loadable from JSON. Every field has a default.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::{CameraModel, GridSpec, NavigabilityParams};
use crate::simulator::{AgentBody, DEFAULT_MAX_STEPS, SUCCESS_DISTANCE};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ConfigError {
    #[error("{path}: {message}")]
    Io { path: String, message: String },
    #[error("invalid config field `{field}`: {message}")]
    Invalid { field: String, message: String },
}

/// Polar action sampling.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ProposerParams {
    /// Bearings sampled across the view in the exploration stage.
    pub k: usize,
    pub min_separation_deg: f64,
    pub r_max: f64,
    /// Bearing spacing in the goal stage.
    pub dense_spacing_deg: f64,
    /// Exploration actions shorter than this are dropped.
    pub min_r: f64,
    /// Longest unobserved stretch crossed while measuring free range.
    pub max_gap: f64,
    /// Distance below which unobserved floor is assumed free (the camera
    /// cannot see the floor right in front of the agent).
    pub blind_zone: f64,
    pub max_range: f64,
}

impl Default for ProposerParams {
    fn default() -> Self {
        Self {
            k: 12,
            min_separation_deg: 10.0,
            r_max: 3.0,
            dense_spacing_deg: 3.0,
            min_r: 0.3,
            max_gap: 0.35,
            blind_zone: 1.5,
            max_range: 10.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct NavConfig {
    pub map_size: usize,
    pub resolution: f64,
    pub camera: CameraModel,
    pub body: AgentBody,
    pub navigability: NavigabilityParams,
    pub proposer: ProposerParams,
    pub r_visit: f64,
    pub d_thres: f64,
    pub max_steps: usize,
    /// Extra attempts after an unparseable VLM answer.
    pub vlm_retries: usize,
    /// Observed floor within this distance of a past pose counts as explored.
    pub explored_range: f64,
    /// Probability of perturbing each oracle prediction score.
    pub oracle_noise: f64,
    /// Write a map snapshot every this many steps; the final map is always written.
    pub snapshot_every: Option<usize>,
}

impl Default for NavConfig {
    fn default() -> Self {
        Self {
            map_size: GridSpec::DEFAULT_MAP_SIZE,
            resolution: GridSpec::DEFAULT_RESOLUTION,
            camera: CameraModel::default(),
            body: AgentBody::default(),
            navigability: NavigabilityParams::default(),
            proposer: ProposerParams::default(),
            r_visit: 1.0,
            d_thres: SUCCESS_DISTANCE,
            max_steps: DEFAULT_MAX_STEPS,
            vlm_retries: 3,
            explored_range: 2.0,
            oracle_noise: 0.0,
            snapshot_every: None,
        }
    }
}

fn invalid(field: &str, message: impl Into<String>) -> ConfigError {
    ConfigError::Invalid {
        field: field.into(),
        message: message.into(),
    }
}

impl NavConfig {
    pub fn from_json_str(s: &str) -> Result<Self, ConfigError> {
        let c: NavConfig = serde_json::from_str(s).map_err(|e| invalid("<document>", e.to_string()))?;
        c.validate()?;
        Ok(c)
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = fs::read_to_string(path).map_err(|e| ConfigError::Io {
            path: path.display().to_string(),
            message: e.to_string(),
        })?;
        Self::from_json_str(&text).map_err(|e| match e {
            ConfigError::Invalid { field, message } => ConfigError::Io {
                path: path.display().to_string(),
                message: format!("invalid field `{field}`: {message}"),
            },
            other => other,
        })
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.map_size == 0 {
            return Err(invalid("map_size", "must be > 0"));
        }
        if !(self.resolution > 0.0) {
            return Err(invalid("resolution", "must be > 0"));
        }
        self.camera.validate().map_err(|e| invalid("camera", e.to_string()))?;
        if !(self.body.radius > 0.0) {
            return Err(invalid("body.radius", "must be > 0"));
        }
        let p = &self.proposer;
        if p.k == 0 {
            return Err(invalid("proposer.k", "must be > 0"));
        }
        if !(p.r_max > 0.0) {
            return Err(invalid("proposer.r_max", "must be > 0"));
        }
        if !(p.dense_spacing_deg > 0.0) {
            return Err(invalid("proposer.dense_spacing_deg", "must be > 0"));
        }
        if p.dense_spacing_deg >= self.camera.hfov.to_degrees() / p.k as f64 {
            return Err(invalid(
                "proposer.dense_spacing_deg",
                "must be finer than the exploration spacing",
            ));
        }
        if !(self.d_thres > 0.0) {
            return Err(invalid("d_thres", "must be > 0"));
        }
        if self.max_steps == 0 {
            return Err(invalid("max_steps", "must be > 0"));
        }
        if !(0.0..=1.0).contains(&self.oracle_noise) {
            return Err(invalid("oracle_noise", "must be within [0, 1]"));
        }
        if self.snapshot_every == Some(0) {
            return Err(invalid("snapshot_every", "must be > 0"));
        }
        Ok(())
    }
}
