use std::collections::BTreeMap;
use std::sync::LazyLock;

use regex::Regex;
use serde_json::Value;

use super::{ParsedAction, ParsedPlan, ParsedPrediction, Role, VlmError};
use crate::curiosity_map::DirectionScores;
use crate::geometry::{NUM_VIEWS, VIEW_CENTERS_DEG};

static KEYED: LazyLock<Regex> =
    LazyLock::new(|| Regex::new(r#"(?i)"?(\d{1,3})\s*(?:°|deg(?:rees)?)?"?\s*[:=]\s*(-?\d+)"#).unwrap());
static INTEGER: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"-?\d+").unwrap());
static SUBTASK_LINE: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"(?im)^\W*subtask\W*[:=]\s*(.+?)\s*$").unwrap());
static FLAG_LINE: LazyLock<Regex> =
    LazyLock::new(|| Regex::new(r"(?i)goal[ _]?flag\W*[:=]\s*(true|false|yes|no)").unwrap());
static ACTION_LINE: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"(?i)action\D{0,12}?(\d+)").unwrap());

fn failure(role: Role, reason: impl Into<String>) -> VlmError {
    VlmError::ParseFailure {
        role,
        reason: reason.into(),
    }
}

/// Canonical text form of six scores, keyed by view bearing.
pub fn format_prediction(scores: &DirectionScores) -> String {
    VIEW_CENTERS_DEG
        .iter()
        .zip(scores.0.iter())
        .map(|(deg, s)| format!("{}:{}", *deg as i64, s))
        .collect::<Vec<_>>()
        .join(" ")
}

/// Extracts six scores. `<bearing>:<score>` pairs covering all six views win;
/// otherwise the text must contain exactly six integers. Values are clamped
/// into `0..=10`.
pub fn parse_prediction(raw: &str) -> Result<ParsedPrediction, VlmError> {
    let labels: Vec<i64> = VIEW_CENTERS_DEG.iter().map(|d| *d as i64).collect();
    let mut keyed = BTreeMap::new();
    for cap in KEYED.captures_iter(raw) {
        let (Ok(label), Ok(value)) = (cap[1].parse::<i64>(), cap[2].parse::<i64>()) else {
            continue;
        };
        if labels.contains(&label) {
            keyed.entry(label).or_insert(value);
        }
    }
    if keyed.len() == NUM_VIEWS {
        let mut out = [0i64; NUM_VIEWS];
        for (i, l) in labels.iter().enumerate() {
            out[i] = keyed[l];
        }
        return Ok(ParsedPrediction(DirectionScores::clamped(out)));
    }
    let ints: Vec<i64> = INTEGER
        .find_iter(raw)
        .filter_map(|m| m.as_str().parse::<i64>().ok())
        .collect();
    if ints.len() != NUM_VIEWS {
        return Err(failure(Role::Predict, format!("expected six scores, found {} integers", ints.len())));
    }
    let mut out = [0i64; NUM_VIEWS];
    out.copy_from_slice(&ints);
    Ok(ParsedPrediction(DirectionScores::clamped(out)))
}

/// First balanced `{...}` block in the text.
fn json_object(raw: &str) -> Option<Value> {
    let bytes = raw.as_bytes();
    let mut start = None;
    let mut depth = 0usize;
    let mut in_str = false;
    let mut escaped = false;
    for (i, &b) in bytes.iter().enumerate() {
        if in_str {
            match b {
                _ if escaped => escaped = false,
                b'\\' => escaped = true,
                b'"' => in_str = false,
                _ => {}
            }
            continue;
        }
        match b {
            b'"' if start.is_some() => in_str = true,
            b'{' => {
                if depth == 0 {
                    start = Some(i);
                }
                depth += 1;
            }
            b'}' if depth > 0 => {
                depth -= 1;
                if depth == 0 {
                    let s = start?;
                    if let Ok(v) = serde_json::from_str::<Value>(&raw[s..=i]) {
                        if v.is_object() {
                            return Some(v);
                        }
                    }
                    start = None;
                }
            }
            _ => {}
        }
    }
    None
}

fn as_flag(v: &Value) -> Option<bool> {
    match v {
        Value::Bool(b) => Some(*b),
        Value::String(s) => match s.trim().to_ascii_lowercase().as_str() {
            "true" | "yes" => Some(true),
            "false" | "no" => Some(false),
            _ => None,
        },
        Value::Number(n) => n.as_i64().map(|n| n != 0),
        _ => None,
    }
}

/// Reads `{"subtask", "goal_flag", "explanation"}`, or `Subtask:` and
/// `Goal flag:` lines.
pub fn parse_plan(raw: &str) -> Result<ParsedPlan, VlmError> {
    if let Some(obj) = json_object(raw) {
        let subtask = obj.get("subtask").and_then(Value::as_str).map(str::trim).unwrap_or("");
        let flag = obj.get("goal_flag").and_then(as_flag);
        if !subtask.is_empty() {
            if let Some(goal_flag) = flag {
                return Ok(ParsedPlan {
                    subtask: subtask.to_string(),
                    goal_flag,
                    explanation: obj
                        .get("explanation")
                        .and_then(Value::as_str)
                        .unwrap_or("")
                        .trim()
                        .to_string(),
                });
            }
        }
        return Err(failure(Role::Plan, "JSON answer lacks a subtask or goal flag"));
    }
    let subtask = SUBTASK_LINE.captures(raw).map(|c| c[1].trim().to_string());
    let flag = FLAG_LINE
        .captures(raw)
        .map(|c| matches!(c[1].to_ascii_lowercase().as_str(), "true" | "yes"));
    match (subtask, flag) {
        (Some(subtask), Some(goal_flag)) if !subtask.is_empty() => Ok(ParsedPlan {
            subtask,
            goal_flag,
            explanation: String::new(),
        }),
        _ => Err(failure(Role::Plan, "no subtask and goal flag found")),
    }
}

/// Reads the chosen marker number (1-based) and converts it to an index into
/// a candidate list of `count` actions.
pub fn parse_action(raw: &str, count: usize) -> Result<ParsedAction, VlmError> {
    let number = json_object(raw)
        .and_then(|o| o.get("action").and_then(Value::as_i64))
        .or_else(|| ACTION_LINE.captures(raw).and_then(|c| c[1].parse().ok()))
        .or_else(|| raw.trim().parse::<i64>().ok());
    let Some(n) = number else {
        return Err(failure(Role::Reason, "no action number found"));
    };
    if n < 1 || n as usize > count {
        return Err(failure(Role::Reason, format!("action {n} outside 1..={count}")));
    }
    Ok(ParsedAction { index: n as usize - 1 })
}
