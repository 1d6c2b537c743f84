//! Role-typed vision-language model interface.
//!
//! The navigation loop talks to a model in three roles: `Predict` scores the
//! panorama, `Plan` sets the next subtask and reports whether the goal is in
//! view, `Reason` picks one numbered candidate action. Prompts are built from
//! editable templates, responses are parsed leniently, and malformed answers
//! are retried before falling back to a neutral default.

mod http;
mod oracle;
mod parse;
mod prompt;
mod replay;

use std::sync::Arc;

use image::RgbImage;
use nalgebra::Point2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use http::{HttpBackend, HttpConfig, DEFAULT_API_KEY_ENV};
pub use oracle::{oracle_prediction_score, OracleBackend};
pub use parse::{format_prediction, parse_action, parse_plan, parse_prediction};
pub use prompt::{
    build_plan_prompt, build_predict_prompt, build_reason_prompt, view_labels, MarkerDescription, PromptTemplates,
};
pub use replay::{prompt_hash, RecordEntry, RecordingBackend, ReplayBackend};

use crate::curiosity_map::DirectionScores;
use crate::geometry::{CellSet, GridSpec, Pose};
use crate::policy::Stage;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum VlmError {
    #[error("could not parse {role:?} response: {reason}")]
    ParseFailure { role: Role, reason: String },
    #[error("backend unavailable: {0}")]
    BackendUnavailable(String),
    #[error("backend returned HTTP {status}: {body}")]
    BackendError { status: u16, body: String },
    #[error("no recorded response for {role:?} prompt {hash}")]
    ReplayMiss { role: Role, hash: String },
    #[error("invalid prompt input: {0}")]
    InvalidPrompt(String),
    #[error("{0}")]
    Io(String),
}

impl VlmError {
    pub fn is_parse_failure(&self) -> bool {
        matches!(self, VlmError::ParseFailure { .. })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Role {
    Predict,
    Plan,
    Reason,
}

#[derive(Debug, Clone)]
pub struct PromptImage {
    pub label: String,
    pub image: Arc<RgbImage>,
}

#[derive(Debug, Clone)]
pub struct PromptBundle {
    pub role: Role,
    pub text: String,
    pub images: Vec<PromptImage>,
}

/// Feedback carried between steps: the previous subtask and whether the goal
/// has been detected.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Cost {
    pub prev_subtask: String,
    pub goal_flag: bool,
}

impl Cost {
    pub fn initial(goal_category: &str) -> Self {
        Self {
            prev_subtask: format!("explore to find the {goal_category}"),
            goal_flag: false,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ParsedPrediction(pub DirectionScores);

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ParsedPlan {
    pub subtask: String,
    pub goal_flag: bool,
    pub explanation: String,
}

/// Zero-based index into the candidate list.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ParsedAction {
    pub index: usize,
}

/// What the agent itself knows about the frame a prompt describes. Real
/// models ignore it; the ground-truth oracle combines it with the scene.
#[derive(Debug, Clone, Copy)]
pub enum Grounding<'a> {
    Predict {
        pose: Pose,
        view_navigable: &'a [CellSet],
        grid: &'a GridSpec,
    },
    Plan {
        view_pose: Pose,
        /// Endpoints of the moves the agent could make toward the goal.
        reachable: &'a [Point2<f64>],
    },
    Reason {
        stage: Stage,
        endpoints: &'a [Point2<f64>],
    },
}

/// Identifies a call within a run, for recording and replay.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct CallTag {
    pub episode: String,
    pub step: usize,
}

pub struct VlmRequest<'a> {
    pub prompt: &'a PromptBundle,
    pub grounding: Option<Grounding<'a>>,
    pub tag: &'a CallTag,
}

pub trait VlmBackend: Send + Sync {
    fn name(&self) -> &str;
    fn complete(&self, request: &VlmRequest<'_>) -> Result<String, VlmError>;
}

impl<T: VlmBackend + ?Sized> VlmBackend for Arc<T> {
    fn name(&self) -> &str {
        (**self).name()
    }

    fn complete(&self, request: &VlmRequest<'_>) -> Result<String, VlmError> {
        (**self).complete(request)
    }
}

/// Result of a role call, noting whether the neutral fallback was used.
#[derive(Debug, Clone, PartialEq)]
pub struct Answer<T> {
    pub value: T,
    pub attempts: usize,
    pub fallback: bool,
    pub raw: Option<String>,
}

/// Calls the backend until `parse` accepts the response, at most
/// `1 + retries` times. Backend errors abort immediately; exhausted parse
/// attempts yield `fallback`.
pub fn ask<T>(
    backend: &dyn VlmBackend,
    request: &VlmRequest<'_>,
    retries: usize,
    parse: impl Fn(&str) -> Result<T, VlmError>,
    fallback: impl FnOnce() -> T,
) -> Result<Answer<T>, VlmError> {
    let mut last = None;
    for attempt in 1..=retries + 1 {
        let raw = backend.complete(request)?;
        match parse(&raw) {
            Ok(value) => {
                return Ok(Answer {
                    value,
                    attempts: attempt,
                    fallback: false,
                    raw: Some(raw),
                })
            }
            Err(e) if e.is_parse_failure() => {
                log::debug!("{:?} attempt {attempt}: {e}", request.prompt.role);
                last = Some(raw);
            }
            Err(e) => return Err(e),
        }
    }
    Ok(Answer {
        value: fallback(),
        attempts: retries + 1,
        fallback: true,
        raw: last,
    })
}

/// Answers every call with random text that no parser accepts.
#[derive(Debug)]
pub struct GarbageBackend {
    seed: u64,
}

impl GarbageBackend {
    pub fn new(seed: u64) -> Self {
        Self { seed }
    }
}

impl VlmBackend for GarbageBackend {
    fn name(&self) -> &str {
        "garbage"
    }

    fn complete(&self, request: &VlmRequest<'_>) -> Result<String, VlmError> {
        let h = prompt_hash(request);
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed ^ u64::from_str_radix(&h[..16], 16).unwrap_or(0));
        let len = rng.random_range(0..40);
        // letters and punctuation only: never six integers, never a JSON object
        Ok((0..len)
            .map(|_| {
                let alphabet = b"abcdefghijklmnopqrstuvwxyz .,;!?-";
                alphabet[rng.random_range(0..alphabet.len())] as char
            })
            .collect())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::sync::atomic::{AtomicUsize, Ordering};

    struct Scripted {
        replies: Vec<Result<String, VlmError>>,
        calls: AtomicUsize,
    }

    impl VlmBackend for Scripted {
        fn name(&self) -> &str {
            "scripted"
        }
        fn complete(&self, _: &VlmRequest<'_>) -> Result<String, VlmError> {
            let i = self.calls.fetch_add(1, Ordering::SeqCst);
            self.replies[i.min(self.replies.len() - 1)].clone()
        }
    }

    fn bundle() -> PromptBundle {
        PromptBundle {
            role: Role::Predict,
            text: "x".into(),
            images: vec![],
        }
    }

    #[test]
    fn ask_retries_then_succeeds() {
        let b = Scripted {
            replies: vec![Ok("junk".into()), Ok("30:1 90:2 150:3 210:4 270:5 330:6".into())],
            calls: AtomicUsize::new(0),
        };
        let p = bundle();
        let tag = CallTag { episode: "e".into(), step: 0 };
        let req = VlmRequest { prompt: &p, grounding: None, tag: &tag };
        let a = ask(&b, &req, 3, parse_prediction, || ParsedPrediction(DirectionScores::UNIFORM_FALLBACK)).unwrap();
        assert_eq!(a.attempts, 2);
        assert!(!a.fallback);
        assert_eq!(a.value.0 .0, [1, 2, 3, 4, 5, 6]);
    }

    #[test]
    fn ask_falls_back_after_retries() {
        let b = Scripted {
            replies: vec![Ok("junk".into())],
            calls: AtomicUsize::new(0),
        };
        let p = bundle();
        let tag = CallTag { episode: "e".into(), step: 0 };
        let req = VlmRequest { prompt: &p, grounding: None, tag: &tag };
        let a = ask(&b, &req, 3, parse_prediction, || ParsedPrediction(DirectionScores::UNIFORM_FALLBACK)).unwrap();
        assert!(a.fallback);
        assert_eq!(a.attempts, 4);
        assert_eq!(b.calls.load(Ordering::SeqCst), 4);
        assert_eq!(a.value.0, DirectionScores([5; 6]));
    }

    #[test]
    fn ask_propagates_backend_errors() {
        let b = Scripted {
            replies: vec![Err(VlmError::BackendUnavailable("down".into()))],
            calls: AtomicUsize::new(0),
        };
        let p = bundle();
        let tag = CallTag { episode: "e".into(), step: 0 };
        let req = VlmRequest { prompt: &p, grounding: None, tag: &tag };
        let err = ask(&b, &req, 3, parse_prediction, || ParsedPrediction(DirectionScores::UNIFORM_FALLBACK)).unwrap_err();
        assert!(matches!(err, VlmError::BackendUnavailable(_)));
        assert_eq!(b.calls.load(Ordering::SeqCst), 1);
    }

    #[test]
    fn garbage_never_parses() {
        let g = GarbageBackend::new(1);
        let p = bundle();
        for step in 0..200 {
            let tag = CallTag { episode: "e".into(), step };
            let req = VlmRequest { prompt: &p, grounding: None, tag: &tag };
            let raw = g.complete(&req).unwrap();
            assert!(parse_prediction(&raw).is_err());
            assert!(parse_plan(&raw).is_err());
            assert!(parse_action(&raw, 5).is_err());
        }
    }

    #[test]
    fn initial_cost_names_goal() {
        let c = Cost::initial("bed");
        assert_eq!(c.prev_subtask, "explore to find the bed");
        assert!(!c.goal_flag);
    }
}
