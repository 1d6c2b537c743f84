use std::sync::Arc;

use nalgebra::Point2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde_json::json;

use super::{format_prediction, prompt_hash, Grounding, VlmBackend, VlmError, VlmRequest};
use crate::curiosity_map::DirectionScores;
use crate::geometry::{view_offsets, NUM_VIEWS};
use crate::simulator::{DistanceField, Simulator, SUCCESS_DISTANCE};

const SNAP_CELLS: usize = 5;
/// A reachable endpoint must be this much inside the success radius before
/// the oracle raises the goal flag, leaving room for motion error.
const FLAG_MARGIN: f64 = 0.15;

/// Score for a view whose best navigable cell is `g` metres of path away
/// from the goal, with `g_max` the largest distance in the scene.
pub fn oracle_prediction_score(g: f64, g_max: f64) -> u8 {
    if !g.is_finite() || g_max <= 0.0 {
        return 0;
    }
    (10.0 * (1.0 - g / g_max).clamp(0.0, 1.0)).round() as u8
}

/// Answers every role from simulator ground truth. Built per episode.
pub struct OracleBackend {
    sim: Arc<Simulator>,
    goal: String,
    goals: Vec<Point2<f64>>,
    field: DistanceField,
    g_max: f64,
    noise: f64,
    seed: u64,
}

impl OracleBackend {
    pub fn new(sim: Arc<Simulator>, goal_category: &str) -> Self {
        let goals: Vec<Point2<f64>> = sim.scene.instances(goal_category).map(|o| o.center()).collect();
        let field = sim.geodesic.approach_field(&goals, SUCCESS_DISTANCE);
        let g_max = field.max_finite();
        Self {
            sim,
            goal: goal_category.to_string(),
            goals,
            field,
            g_max,
            noise: 0.0,
            seed: 0,
        }
    }

    /// Perturbs each predicted score by up to ±2 with probability `noise`,
    /// drawn deterministically from `seed` and the prompt.
    pub fn with_noise(mut self, noise: f64, seed: u64) -> Self {
        self.noise = noise.clamp(0.0, 1.0);
        self.seed = seed;
        self
    }

    /// Approach-field cost at a world point: the field at the nearest free
    /// cell plus the distance to it, `INFINITY` far from free space.
    pub fn cost_at(&self, p: Point2<f64>) -> f64 {
        let grid = &self.sim.geodesic;
        grid.snap_within(p, SNAP_CELLS)
            .map_or(f64::INFINITY, |c| self.field.at_cell(c) + (grid.spec.cell_center(c) - p).norm())
    }

    pub fn g_max(&self) -> f64 {
        self.g_max
    }

    fn predict(&self, request: &VlmRequest<'_>, g: &Grounding<'_>) -> Result<String, VlmError> {
        let Grounding::Predict { pose, view_navigable, grid } = g else {
            unreachable!()
        };
        if view_navigable.len() != NUM_VIEWS {
            return Err(VlmError::InvalidPrompt(format!("expected {NUM_VIEWS} views")));
        }
        let offsets = view_offsets();
        let mut scores = [0i64; NUM_VIEWS];
        for i in 0..NUM_VIEWS {
            let view_pose = pose.rotated(offsets[i]);
            if self.sim.goal_visible(&view_pose, &self.goal) {
                scores[i] = 10;
                continue;
            }
            let best = view_navigable[i]
                .iter()
                .map(|c| self.cost_at(grid.cell_center(*c)))
                .fold(f64::INFINITY, f64::min);
            scores[i] = oracle_prediction_score(best, self.g_max) as i64;
        }
        if self.noise > 0.0 {
            let h = prompt_hash(request);
            let mut rng = ChaCha8Rng::seed_from_u64(self.seed ^ u64::from_str_radix(&h[..16], 16).unwrap_or(0));
            for s in scores.iter_mut() {
                if rng.random_bool(self.noise) {
                    *s += rng.random_range(-2..=2);
                }
            }
        }
        Ok(format_prediction(&DirectionScores::clamped(scores)))
    }

    fn plan(&self, g: &Grounding<'_>) -> Result<String, VlmError> {
        let Grounding::Plan { view_pose, reachable } = g else {
            unreachable!()
        };
        // in view, and one goal-stage move lands close enough to stop
        let visible = self.sim.goal_visible(view_pose, &self.goal);
        let flag = visible
            && reachable.iter().any(|p| {
                self.goals
                    .iter()
                    .any(|g| (g - p).norm() < SUCCESS_DISTANCE - FLAG_MARGIN)
            });
        let here = view_pose.position();
        let target = self
            .goals
            .iter()
            .min_by(|a, b| (*a - here).norm().total_cmp(&(*b - here).norm()))
            .copied();
        let room = target
            .and_then(|t| self.sim.scene.room_at(t))
            .map(|r| r.label.clone())
            .unwrap_or_else(|| "next room".into());
        let (subtask, explanation) = if flag {
            (
                format!("approach the {} in the {room}", self.goal),
                format!("the {} is in view", self.goal),
            )
        } else if visible {
            (
                format!("move closer to the {} in the {room}", self.goal),
                format!("the {} is in view but not yet within reach", self.goal),
            )
        } else {
            (
                format!("go to the {room} to find the {}", self.goal),
                format!("the {} is not in view", self.goal),
            )
        };
        Ok(json!({"subtask": subtask, "goal_flag": flag, "explanation": explanation}).to_string())
    }

    fn reason(&self, g: &Grounding<'_>) -> Result<String, VlmError> {
        let Grounding::Reason { endpoints, .. } = g else { unreachable!() };
        if endpoints.is_empty() {
            return Err(VlmError::InvalidPrompt("no candidate actions".into()));
        }
        let mut best = 0;
        let mut best_cost = f64::INFINITY;
        for (i, p) in endpoints.iter().enumerate() {
            let c = self.cost_at(*p);
            if c < best_cost {
                best = i;
                best_cost = c;
            }
        }
        Ok(json!({ "action": best + 1 }).to_string())
    }
}

impl VlmBackend for OracleBackend {
    fn name(&self) -> &str {
        "oracle"
    }

    fn complete(&self, request: &VlmRequest<'_>) -> Result<String, VlmError> {
        let Some(g) = request.grounding else {
            return Err(VlmError::InvalidPrompt("oracle needs grounding".into()));
        };
        match g {
            Grounding::Predict { .. } => self.predict(request, &g),
            Grounding::Plan { .. } => self.plan(&g),
            Grounding::Reason { .. } => self.reason(&g),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn score_formula() {
        assert_eq!(oracle_prediction_score(2.0, 10.0), 8);
        assert_eq!(oracle_prediction_score(8.0, 10.0), 2);
        assert_eq!(oracle_prediction_score(0.0, 10.0), 10);
        assert_eq!(oracle_prediction_score(12.0, 10.0), 0);
        assert_eq!(oracle_prediction_score(f64::INFINITY, 10.0), 0);
        assert_eq!(oracle_prediction_score(0.5, 0.0), 0);
    }
}
