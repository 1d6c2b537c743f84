//! Deterministic 2.5D indoor world used to exercise the navigation loop.

mod geodesic;
mod motion;
pub mod procgen;
mod render;
mod scene;

use std::fs;
use std::path::Path;
use std::sync::Arc;

use nalgebra::Point2;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use geodesic::{DistanceField, GeodesicGrid};
pub use motion::{execute_action, free_travel, AgentBody};
pub use render::{render, render_with_range, Observation};
pub use scene::{
    point_segment_distance, segments_intersect, Bounds, Room, Scene, SceneObject, Wall, DEFAULT_WALL_HEIGHT,
    KNOWN_CATEGORIES, SCENE_SCHEMA,
};

use crate::geometry::{angular_distance, CameraModel, Pose, DEFAULT_MAX_RANGE};
use crate::policy::PolarAction;

/// Success radius around a goal instance.
pub const SUCCESS_DISTANCE: f64 = 1.0;
pub const DEFAULT_MAX_STEPS: usize = 40;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SimError {
    #[error("pose ({x:.3}, {y:.3}) is outside the scene bounds")]
    OutOfBounds { x: f64, y: f64 },
    #[error("invalid scene field `{field}`: {message}")]
    InvalidScene { field: String, message: String },
    #[error("invalid episode field `{field}`: {message}")]
    InvalidEpisode { field: String, message: String },
    #[error("{path}: invalid field `{field}`: {message}")]
    InvalidFile { path: String, field: String, message: String },
    #[error("{path}: {message}")]
    Io { path: String, message: String },
    #[error("no path between the requested points")]
    Unreachable,
}

impl SimError {
    pub(crate) fn in_file(self, path: &Path) -> Self {
        match self {
            SimError::InvalidScene { field, message } | SimError::InvalidEpisode { field, message } => SimError::InvalidFile {
                path: path.display().to_string(),
                field,
                message,
            },
            other => other,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StartPose {
    pub x: f64,
    pub y: f64,
    #[serde(default)]
    pub yaw: f64,
}

fn default_schema() -> u32 {
    SCENE_SCHEMA
}

fn default_max_steps() -> usize {
    DEFAULT_MAX_STEPS
}

/// One navigation task: reach any instance of `goal_category` in a scene.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Episode {
    #[serde(default = "default_schema")]
    pub schema: u32,
    #[serde(default)]
    pub id: String,
    /// Scene file path, relative to the episode file.
    pub scene: String,
    pub start: StartPose,
    pub goal_category: String,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_max_steps")]
    pub max_steps: usize,
}

/// An episode with its scene resolved.
#[derive(Debug, Clone)]
pub struct LoadedEpisode {
    pub episode: Episode,
    pub scene: Arc<Scene>,
}

fn invalid_episode(field: &str, message: impl Into<String>) -> SimError {
    SimError::InvalidEpisode {
        field: field.into(),
        message: message.into(),
    }
}

impl Episode {
    pub fn from_json_str(s: &str) -> Result<Self, SimError> {
        let ep: Episode = serde_json::from_str(s).map_err(|e| invalid_episode("<document>", e.to_string()))?;
        if ep.schema != SCENE_SCHEMA {
            return Err(invalid_episode("schema", format!("unsupported schema {}", ep.schema)));
        }
        if ep.goal_category.trim().is_empty() {
            return Err(invalid_episode("goal_category", "empty goal category"));
        }
        if ep.max_steps == 0 {
            return Err(invalid_episode("max_steps", "must be > 0"));
        }
        Ok(ep)
    }

    /// Loads an episode file and the scene it references.
    pub fn load(path: &Path) -> Result<LoadedEpisode, SimError> {
        let text = fs::read_to_string(path).map_err(|e| SimError::Io {
            path: path.display().to_string(),
            message: e.to_string(),
        })?;
        let mut episode = Self::from_json_str(&text).map_err(|e| e.in_file(path))?;
        if episode.id.is_empty() {
            episode.id = path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
        }
        let scene_path = path.parent().unwrap_or(Path::new(".")).join(&episode.scene);
        let scene = Scene::load(&scene_path)?;
        let loaded = LoadedEpisode {
            episode,
            scene: Arc::new(scene),
        };
        loaded.validate().map_err(|e| e.in_file(path))?;
        Ok(loaded)
    }
}

impl LoadedEpisode {
    pub fn new(episode: Episode, scene: Arc<Scene>) -> Result<Self, SimError> {
        let l = Self { episode, scene };
        l.validate()?;
        Ok(l)
    }

    fn validate(&self) -> Result<(), SimError> {
        let s = &self.episode.start;
        if !self.scene.bounds.contains(s.x, s.y) {
            return Err(invalid_episode("start", "start position outside scene bounds"));
        }
        if self.goal_positions().is_empty() {
            return Err(invalid_episode(
                "goal_category",
                format!("scene has no `{}` instance", self.episode.goal_category),
            ));
        }
        Ok(())
    }

    pub fn goal_positions(&self) -> Vec<Point2<f64>> {
        self.scene.instances(&self.episode.goal_category).map(|o| o.center()).collect()
    }

    pub fn start_pose(&self, body: &AgentBody) -> Pose {
        let s = self.episode.start;
        Pose::new(s.x, s.y, body.camera_height, s.yaw)
    }
}

/// True when some instance of `category` has its center inside the
/// horizontal field of view, within range, with an unobstructed line of
/// sight from the camera.
pub fn is_goal_visible(scene: &Scene, pose: &Pose, cam: &CameraModel, category: &str) -> bool {
    visible_instances(scene, pose, cam, category).next().is_some()
}

pub fn visible_instances<'a>(
    scene: &'a Scene,
    pose: &'a Pose,
    cam: &'a CameraModel,
    category: &'a str,
) -> impl Iterator<Item = &'a SceneObject> + 'a {
    let eye = pose.position();
    scene.objects.iter().enumerate().filter_map(move |(i, o)| {
        if o.category != category {
            return None;
        }
        let rel = o.center() - eye;
        let dist = rel.norm();
        if dist > DEFAULT_MAX_RANGE {
            return None;
        }
        if dist > 1e-9 && angular_distance(rel.y.atan2(rel.x), pose.yaw) > cam.hfov / 2.0 {
            return None;
        }
        scene.segment_clear(eye, o.center(), &[i]).then_some(o)
    })
}

/// Evaluator's success test against the true goal positions.
pub fn judge_success(goals: &[Point2<f64>], stop: Point2<f64>, d_thres: f64) -> bool {
    goals.iter().any(|g| (g - stop).norm() < d_thres)
}

/// A scene bundled with the camera, body and geodesic grid used to simulate it.
#[derive(Debug, Clone)]
pub struct Simulator {
    pub scene: Arc<Scene>,
    pub camera: CameraModel,
    pub body: AgentBody,
    pub geodesic: GeodesicGrid,
}

impl Simulator {
    pub fn new(scene: Arc<Scene>, camera: CameraModel, body: AgentBody, resolution: f64) -> Self {
        let geodesic = GeodesicGrid::build(&scene, resolution, body.radius);
        Self {
            scene,
            camera,
            body,
            geodesic,
        }
    }

    pub fn render(&self, pose: &Pose) -> Result<Observation, SimError> {
        render(&self.scene, pose, &self.camera)
    }

    pub fn execute(&self, pose: &Pose, action: &PolarAction) -> Pose {
        execute_action(&self.scene, pose, action, &self.body)
    }

    pub fn goal_visible(&self, pose: &Pose, category: &str) -> bool {
        is_goal_visible(&self.scene, pose, &self.camera, category)
    }

    pub fn geodesic_distance(&self, a: Point2<f64>, b: Point2<f64>) -> Result<f64, SimError> {
        self.geodesic.distance(a, b)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    fn scene() -> Scene {
        Scene::new(
            Bounds { min: [-6.0, -6.0], max: [6.0, 6.0] },
            vec![Wall::new([3.0, -6.0], [3.0, 6.0], 2.5)],
            vec![
                SceneObject {
                    category: "bed".into(),
                    position: [2.0, 0.0],
                    radius: 0.4,
                    height: 0.5,
                },
                SceneObject {
                    category: "tv".into(),
                    position: [4.5, 0.0],
                    radius: 0.3,
                    height: 1.0,
                },
            ],
            vec![],
        )
        .unwrap()
    }

    #[test]
    fn visibility_rules() {
        let s = scene();
        let cam = CameraModel::default();
        let pose = Pose::new(0.0, 0.0, 0.88, 0.0);
        assert!(is_goal_visible(&s, &pose, &cam, "bed"));
        assert!(!is_goal_visible(&s, &pose, &cam, "tv"), "tv is behind the wall");
        assert!(!is_goal_visible(&s, &pose.rotated(PI), &cam, "bed"));
    }

    #[test]
    fn visibility_sweep_matches_half_fov() {
        let s = Scene::new(
            Bounds { min: [-6.0, -6.0], max: [6.0, 6.0] },
            vec![],
            vec![SceneObject {
                category: "plant".into(),
                position: [2.0, 0.0],
                radius: 0.2,
                height: 1.0,
            }],
            vec![],
        )
        .unwrap();
        let cam = CameraModel::default();
        for tenth in 0..3600 {
            let yaw = (tenth as f64 / 10.0).to_radians();
            let pose = Pose::new(0.0, 0.0, 0.88, yaw);
            let offset = angular_distance(0.0, yaw);
            let want = offset <= cam.hfov / 2.0;
            assert_eq!(is_goal_visible(&s, &pose, &cam, "plant"), want, "yaw {yaw}");
        }
    }

    #[test]
    fn judge_success_threshold() {
        let goals = [Point2::new(0.0, 0.0)];
        assert!(judge_success(&goals, Point2::new(0.9, 0.0), 1.0));
        assert!(!judge_success(&goals, Point2::new(1.1, 0.0), 1.0));
        assert!(!judge_success(&goals, Point2::new(1.0, 0.0), 1.0));
    }

    #[test]
    fn episode_requires_goal_instance() {
        let scene = Arc::new(scene());
        let ep = Episode {
            schema: 1,
            id: "x".into(),
            scene: "s.json".into(),
            start: StartPose { x: 0.0, y: 0.0, yaw: 0.0 },
            goal_category: "toilet".into(),
            seed: 0,
            max_steps: 40,
        };
        assert!(matches!(
            LoadedEpisode::new(ep, scene),
            Err(SimError::InvalidEpisode { field, .. }) if field == "goal_category"
        ));
    }

    #[test]
    fn episode_defaults() {
        let ep = Episode::from_json_str(r#"{"scene":"a.json","start":{"x":1,"y":2},"goal_category":"bed"}"#).unwrap();
        assert_eq!(ep.max_steps, 40);
        assert_eq!(ep.schema, 1);
        assert!(Episode::from_json_str(r#"{"scene":"a.json","start":{"x":1,"y":2},"goal_category":""}"#).is_err());
    }
}
