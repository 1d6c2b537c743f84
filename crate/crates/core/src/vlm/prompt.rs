use std::fs;
use std::path::Path;
use std::sync::Arc;

use image::RgbImage;

use super::{Cost, PromptBundle, PromptImage, Role, VlmError};
use crate::curiosity_map::DirectionScores;
use crate::geometry::VIEW_CENTERS_DEG;
use crate::imaging::LEGEND;
use crate::policy::Stage;
use crate::vlm::format_prediction;

/// Prompt wording, one template per role configuration. Placeholders are
/// written `{name}`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PromptTemplates {
    pub predict: String,
    pub plan: String,
    pub reason_exploration: String,
    pub reason_goal: String,
}

impl Default for PromptTemplates {
    fn default() -> Self {
        Self {
            predict: include_str!("../../prompts/predict.txt").to_string(),
            plan: include_str!("../../prompts/plan.txt").to_string(),
            reason_exploration: include_str!("../../prompts/reason_exploration.txt").to_string(),
            reason_goal: include_str!("../../prompts/reason_goal.txt").to_string(),
        }
    }
}

impl PromptTemplates {
    /// Reads `predict.txt`, `plan.txt`, `reason_exploration.txt` and
    /// `reason_goal.txt` from `dir`; missing files keep the built-in text.
    pub fn load_dir(dir: &Path) -> Result<Self, VlmError> {
        if !dir.is_dir() {
            return Err(VlmError::Io(format!("{}: not a directory", dir.display())));
        }
        let mut t = Self::default();
        for (name, slot) in [
            ("predict.txt", &mut t.predict),
            ("plan.txt", &mut t.plan),
            ("reason_exploration.txt", &mut t.reason_exploration),
            ("reason_goal.txt", &mut t.reason_goal),
        ] {
            let path = dir.join(name);
            if path.exists() {
                *slot = fs::read_to_string(&path).map_err(|e| VlmError::Io(format!("{}: {e}", path.display())))?;
            }
        }
        Ok(t)
    }
}

/// A numbered action marker as described to the reasoner.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MarkerDescription {
    /// 1-based number drawn on the image.
    pub number: usize,
    pub distance: f64,
    /// Bearing relative to the view center, degrees, positive to the left.
    pub bearing_deg: f64,
}

fn fill(template: &str, vars: &[(&str, &str)]) -> String {
    let mut out = template.to_string();
    for (k, v) in vars {
        out = out.replace(&format!("{{{k}}}"), v);
    }
    out
}

fn check_goal(goal: &str) -> Result<(), VlmError> {
    if goal.trim().is_empty() {
        return Err(VlmError::InvalidPrompt("empty goal category".into()));
    }
    Ok(())
}

pub fn view_labels() -> Vec<String> {
    VIEW_CENTERS_DEG.iter().map(|d| format!("{}", *d as i64)).collect()
}

pub fn build_predict_prompt(
    templates: &PromptTemplates,
    panorama: Arc<RgbImage>,
    goal: &str,
) -> Result<PromptBundle, VlmError> {
    check_goal(goal)?;
    let labels = view_labels().join(", ");
    let example = format_prediction(&DirectionScores([3, 7, 0, 5, 10, 2]));
    let text = fill(
        &templates.predict,
        &[("goal", goal), ("labels", &labels), ("legend", LEGEND), ("example", &example)],
    );
    Ok(PromptBundle {
        role: Role::Predict,
        text,
        images: vec![PromptImage {
            label: "panorama".into(),
            image: panorama,
        }],
    })
}

pub fn build_plan_prompt(
    templates: &PromptTemplates,
    view: Arc<RgbImage>,
    cost: &Cost,
    goal: &str,
    direction_deg: f64,
    explanation: &str,
) -> Result<PromptBundle, VlmError> {
    check_goal(goal)?;
    let direction = format!("{}", direction_deg.round() as i64);
    let text = fill(
        &templates.plan,
        &[
            ("goal", goal),
            ("prev_subtask", &cost.prev_subtask),
            ("direction", &direction),
            ("explanation", explanation),
            ("legend", LEGEND),
        ],
    );
    Ok(PromptBundle {
        role: Role::Plan,
        text,
        images: vec![PromptImage {
            label: format!("view_{direction}"),
            image: view,
        }],
    })
}

pub fn build_reason_prompt(
    templates: &PromptTemplates,
    annotated_view: Arc<RgbImage>,
    subtask: &str,
    cost: &Cost,
    stage: Stage,
    goal: &str,
    markers: &[MarkerDescription],
) -> Result<PromptBundle, VlmError> {
    check_goal(goal)?;
    if markers.is_empty() {
        return Err(VlmError::InvalidPrompt("no candidate actions".into()));
    }
    let template = match stage {
        Stage::Exploration => &templates.reason_exploration,
        Stage::GoalApproach => &templates.reason_goal,
    };
    let list = markers
        .iter()
        .map(|m| {
            let side = if m.bearing_deg > 0.5 {
                format!("{:.0} degrees left", m.bearing_deg)
            } else if m.bearing_deg < -0.5 {
                format!("{:.0} degrees right", -m.bearing_deg)
            } else {
                "straight ahead".to_string()
            };
            format!("{}: {:.1} m, {}", m.number, m.distance, side)
        })
        .collect::<Vec<_>>()
        .join("\n");
    let count = markers.len().to_string();
    let flag = if cost.goal_flag { "yes" } else { "no" };
    let text = fill(
        template,
        &[
            ("goal", goal),
            ("subtask", subtask),
            ("goal_flag", flag),
            ("count", &count),
            ("markers", &list),
            ("legend", LEGEND),
        ],
    );
    Ok(PromptBundle {
        role: Role::Reason,
        text,
        images: vec![PromptImage {
            label: "actions".into(),
            image: annotated_view,
        }],
    })
}
