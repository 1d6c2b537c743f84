//! The navigation loop: capture a panorama, score it into the curiosity
//! value map, pick a direction, plan a subtask, propose polar actions in the
//! chosen view, let the reasoner pick one, move, and decide whether to stop.

use std::cmp::Ordering;
use std::sync::Arc;

use image::RgbImage;
use nalgebra::{Point2, Point3, Vector2};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::config::{NavConfig, ProposerParams};
use crate::curiosity_map::{
    argmax_direction, project_scores, AveragedScores, CuriosityValueMap, DirectionScores, ExploredMap, MapError,
};
use crate::geometry::{
    classify_cells, depth_to_world_points, view_offsets, wrap_pi, CameraModel, Cell, CellClassification, CellSet,
    GeometryError, GridSpec, Pose, NUM_VIEWS, VIEW_CENTERS_DEG,
};
use crate::imaging::{annotate_markers, colorize, compose_panorama};
use crate::simulator::{LoadedEpisode, Observation, SimError, Simulator};
use crate::vlm::{
    ask, build_plan_prompt, build_predict_prompt, build_reason_prompt, parse_action, parse_plan, parse_prediction,
    view_labels, CallTag, Cost, Grounding, MarkerDescription, ParsedAction, ParsedPlan, ParsedPrediction,
    PromptTemplates, VlmBackend, VlmError, VlmRequest,
};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PolicyError {
    #[error("no navigable area in the selected view")]
    EmptyNavigable,
    #[error(transparent)]
    Vlm(#[from] VlmError),
    #[error(transparent)]
    Sim(#[from] SimError),
    #[error(transparent)]
    Geometry(#[from] GeometryError),
    #[error(transparent)]
    Map(#[from] MapError),
}

/// Move command in the agent frame: turn by `theta`, then travel `r`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PolarAction {
    pub r: f64,
    pub theta: f64,
}

impl PolarAction {
    /// Clamps `r` to be non-negative and wraps `theta` into `(-π, π]`.
    pub fn new(r: f64, theta: f64) -> Self {
        Self {
            r: r.max(0.0),
            theta: wrap_pi(theta),
        }
    }

    /// Intended endpoint when executed from `pose`.
    pub fn endpoint(&self, pose: &Pose) -> Point2<f64> {
        let h = pose.yaw + self.theta;
        Point2::new(pose.x + self.r * h.cos(), pose.y + self.r * h.sin())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Stage {
    Exploration,
    GoalApproach,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Candidate {
    pub action: PolarAction,
    /// 1-based number drawn on the annotated view.
    pub marker: usize,
    pub endpoint: [f64; 2],
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ProposalFallback {
    /// Every candidate was filtered; the longest action was kept.
    Longest,
    /// No view had navigable space; a short move along the view center.
    Blind,
}

/// Candidate actions, ordered left to right as seen in the view.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CandidateSet {
    pub stage: Stage,
    pub view: usize,
    pub candidates: Vec<Candidate>,
    pub fallback: Option<ProposalFallback>,
}

impl CandidateSet {
    pub fn len(&self) -> usize {
        self.candidates.len()
    }

    pub fn is_empty(&self) -> bool {
        self.candidates.is_empty()
    }

    pub fn endpoints(&self) -> Vec<Point2<f64>> {
        self.candidates.iter().map(|c| Point2::from(c.endpoint)).collect()
    }
}

/// World-model memory: the curiosity value map and the latest cost.
#[derive(Debug, Clone, PartialEq)]
pub struct Memory {
    pub map: CuriosityValueMap,
    pub cost: Cost,
}

#[derive(Debug, Clone)]
pub struct EpisodeState {
    pub step: usize,
    pub stage: Stage,
    pub memory: Memory,
    pub explored: ExploredMap,
    pub trajectory: Vec<Pose>,
    pub estimated_goal: Option<Point2<f64>>,
    /// World-frame bearing of the last chosen direction.
    pub previous_direction: Option<f64>,
    pub path_length: f64,
}

impl EpisodeState {
    pub fn new(start: Pose, goal_category: &str, config: &NavConfig) -> Result<Self, PolicyError> {
        let spec = GridSpec::centered_on(config.map_size, config.resolution, start.position())?;
        Ok(Self {
            step: 0,
            stage: Stage::Exploration,
            memory: Memory {
                map: CuriosityValueMap::init(spec),
                cost: Cost::initial(goal_category),
            },
            explored: ExploredMap::new(spec),
            trajectory: vec![start],
            estimated_goal: None,
            previous_direction: None,
            path_length: 0.0,
        })
    }

    pub fn pose(&self) -> Pose {
        *self.trajectory.last().expect("trajectory starts with the start pose")
    }

    pub fn grid(&self) -> &GridSpec {
        self.memory.map.spec()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StopDecision {
    pub stop: bool,
    /// Planar distance to the estimated goal; `None` before one is set.
    pub distance_to_goal: Option<f64>,
}

/// Stops when the estimated goal is strictly closer than `d_thres`. Only
/// active while approaching a goal.
pub fn check_stop(pose: &Pose, estimated_goal: Option<Point2<f64>>, stage: Stage, d_thres: f64) -> StopDecision {
    match (stage, estimated_goal) {
        (Stage::GoalApproach, Some(g)) => {
            let d = pose.planar_distance_to(g);
            StopDecision {
                stop: d < d_thres,
                distance_to_goal: Some(d),
            }
        }
        _ => StopDecision {
            stop: false,
            distance_to_goal: None,
        },
    }
}

/// One rendered view of the panorama.
#[derive(Debug, Clone)]
pub struct ViewCapture {
    pub index: usize,
    pub pose: Pose,
    pub observation: Observation,
    pub image: Arc<RgbImage>,
    pub cells: CellClassification,
}

#[derive(Debug, Clone)]
pub struct Panorama {
    pub views: Vec<ViewCapture>,
    pub composite: Arc<RgbImage>,
}

impl Panorama {
    pub fn navigable(&self) -> Vec<CellSet> {
        self.views.iter().map(|v| v.cells.navigable.clone()).collect()
    }
}

/// Renders the six views around `pose` and classifies their cells on `grid`.
pub fn capture_panorama(sim: &Simulator, pose: &Pose, grid: &GridSpec, config: &NavConfig) -> Result<Panorama, PolicyError> {
    let offsets = view_offsets();
    let mut views = Vec::with_capacity(NUM_VIEWS);
    for (i, off) in offsets.iter().enumerate() {
        let view_pose = pose.rotated(*off);
        let observation = sim.render(&view_pose)?;
        let points = depth_to_world_points(&observation.depth, &sim.camera, &view_pose)?;
        let cells = classify_cells(&points, grid, &config.navigability);
        let image = Arc::new(colorize(&observation));
        views.push(ViewCapture {
            index: i,
            pose: view_pose,
            observation,
            image,
            cells,
        });
    }
    let refs: Vec<&RgbImage> = views.iter().map(|v| v.image.as_ref()).collect();
    let composite = Arc::new(compose_panorama(&refs, &view_labels()));
    Ok(Panorama { views, composite })
}

const UNKNOWN: u8 = 0;
const FLOOR: u8 = 1;
const BLOCKED: u8 = 2;

/// Dense floor/obstacle labels of the current panorama. Obstacle wins when
/// views disagree.
#[derive(Debug, Clone)]
pub struct StepOccupancy {
    pub spec: GridSpec,
    labels: Vec<u8>,
}

impl StepOccupancy {
    pub fn from_views<'a>(spec: GridSpec, views: impl IntoIterator<Item = &'a CellClassification>) -> Self {
        let mut labels = vec![UNKNOWN; spec.num_cells()];
        for v in views {
            for c in &v.navigable {
                if spec.contains(*c) {
                    let i = spec.index(*c);
                    labels[i] = labels[i].max(FLOOR);
                }
            }
            for c in &v.obstacle {
                if spec.contains(*c) {
                    labels[spec.index(*c)] = BLOCKED;
                }
            }
        }
        Self { spec, labels }
    }

    pub fn from_panorama(spec: GridSpec, pano: &Panorama) -> Self {
        Self::from_views(spec, pano.views.iter().map(|v| &v.cells))
    }

    fn label(&self, c: Cell) -> u8 {
        self.labels[self.spec.index(c)]
    }

    pub fn is_navigable(&self, c: Cell) -> bool {
        self.spec.contains(c) && self.label(c) == FLOOR
    }

    pub fn is_obstacle(&self, c: Cell) -> bool {
        self.spec.contains(c) && self.label(c) == BLOCKED
    }

    fn obstacles_near(&self, p: Point2<f64>, radius: f64) -> Vec<Cell> {
        self.spec
            .cells_within(p, radius)
            .into_iter()
            .filter(|c| self.label(*c) == BLOCKED)
            .collect()
    }
}

/// How far the agent body can travel from `origin` along `heading` over
/// observed floor. Marching stops at an observed obstacle within
/// `clearance` of the path, at the map edge, or at an unobserved stretch
/// longer than `max_gap` beyond the camera's blind zone. Obstacles already
/// within `clearance` of `origin` only block when the path enters their cell.
pub fn free_range(
    occ: &StepOccupancy,
    origin: Point2<f64>,
    heading: f64,
    params: &ProposerParams,
    clearance: f64,
    limit: f64,
) -> f64 {
    let step = occ.spec.resolution / 2.0;
    let u = Vector2::new(heading.cos(), heading.sin());
    let initial = occ.obstacles_near(origin, clearance);
    let mut last_good = 0.0;
    let mut gap = 0.0;
    let mut t = step;
    while t <= limit + 1e-9 {
        let p = origin + u * t;
        let Some(cell) = occ.spec.world_to_cell(p.x, p.y) else { break };
        if occ.is_obstacle(cell) {
            break;
        }
        if occ.obstacles_near(p, clearance).iter().any(|c| !initial.contains(c)) {
            break;
        }
        if occ.is_navigable(cell) {
            last_good = t;
            gap = 0.0;
        } else if t <= params.blind_zone {
            last_good = t;
        } else {
            gap += step;
            if gap > params.max_gap {
                break;
            }
        }
        t += step;
    }
    last_good
}

fn body_clearance(config: &NavConfig) -> f64 {
    config.body.radius + config.resolution / 2.0
}

fn make_candidates(pose: &Pose, mut picked: Vec<(f64, PolarAction)>) -> Vec<Candidate> {
    // left to right: larger in-view bearing first
    picked.sort_by(|a, b| b.0.total_cmp(&a.0));
    picked
        .into_iter()
        .enumerate()
        .map(|(i, (_, a))| {
            let e = a.endpoint(pose);
            Candidate {
                action: a,
                marker: i + 1,
                endpoint: [e.x, e.y],
            }
        })
        .collect()
}

/// Exploration-stage proposals in view `view`: `k` bearings evenly spread
/// over the field of view, lengths capped at `r_max`, endpoints in explored
/// cells dropped, then a greedy longest-first pass enforcing the minimum
/// angular separation.
pub fn propose_actions(
    pose: &Pose,
    view: usize,
    camera: &CameraModel,
    occ: &StepOccupancy,
    explored: &ExploredMap,
    config: &NavConfig,
) -> Result<CandidateSet, PolicyError> {
    let p = &config.proposer;
    let center = view_offsets()[view];
    let spacing = camera.hfov / p.k as f64;
    let clearance = body_clearance(config);
    let mut raw = Vec::with_capacity(p.k);
    for j in 0..p.k {
        let beta = camera.hfov / 2.0 - spacing * (j as f64 + 0.5);
        let theta = center + beta;
        let full = free_range(occ, pose.position(), pose.yaw + theta, p, clearance, p.r_max);
        raw.push((beta, PolarAction::new(full.min(p.r_max), theta)));
    }
    if raw.iter().all(|(_, a)| a.r <= 0.0) {
        return Err(PolicyError::EmptyNavigable);
    }
    let mut eligible: Vec<(f64, PolarAction)> = raw
        .iter()
        .copied()
        .filter(|(_, a)| {
            if a.r < p.min_r {
                return false;
            }
            let e = a.endpoint(pose);
            explored
                .spec()
                .world_to_cell(e.x, e.y)
                .is_some_and(|c| !explored.is_explored(c))
        })
        .collect();
    eligible.sort_by(|a, b| b.1.r.total_cmp(&a.1.r).then(a.0.abs().total_cmp(&b.0.abs())));
    let min_sep = p.min_separation_deg.to_radians();
    let mut picked: Vec<(f64, PolarAction)> = Vec::new();
    for cand in eligible {
        if picked.iter().all(|q| (q.0 - cand.0).abs() >= min_sep - 1e-12) {
            picked.push(cand);
        }
    }
    let fallback = if picked.is_empty() {
        // longest move into unexplored space, else the longest move at all
        let longer = |a: &&(f64, PolarAction), b: &&(f64, PolarAction)| {
            a.1.r.total_cmp(&b.1.r).then(b.0.abs().total_cmp(&a.0.abs()))
        };
        let unexplored = raw
            .iter()
            .filter(|(_, a)| {
                let e = a.endpoint(pose);
                a.r > 0.0
                    && explored
                        .spec()
                        .world_to_cell(e.x, e.y)
                        .is_some_and(|c| !explored.is_explored(c))
            })
            .max_by(longer);
        let longest = unexplored.or_else(|| raw.iter().max_by(longer)).copied().expect("k > 0");
        picked.push(longest);
        Some(ProposalFallback::Longest)
    } else {
        None
    };
    Ok(CandidateSet {
        stage: Stage::Exploration,
        view,
        candidates: make_candidates(pose, picked),
        fallback,
    })
}

/// Goal-stage proposals: bearings every `dense_spacing_deg` across the view,
/// full free range, no explored filtering.
pub fn propose_goal_actions(
    pose: &Pose,
    view: usize,
    camera: &CameraModel,
    occ: &StepOccupancy,
    config: &NavConfig,
) -> Result<CandidateSet, PolicyError> {
    let p = &config.proposer;
    let center = view_offsets()[view];
    let spacing = p.dense_spacing_deg.to_radians();
    let n = ((camera.hfov / spacing).floor() as usize).max(1);
    let margin = (camera.hfov - spacing * n as f64) / 2.0;
    let clearance = body_clearance(config);
    let mut picked = Vec::with_capacity(n);
    let mut blocked: Option<f64> = None;
    for j in 0..n {
        let beta = camera.hfov / 2.0 - margin - spacing * (j as f64 + 0.5);
        let theta = center + beta;
        let r = free_range(occ, pose.position(), pose.yaw + theta, p, clearance, p.max_range);
        if r > 0.0 {
            picked.push((beta, PolarAction::new(r, theta)));
        } else if blocked.is_none_or(|b| beta.abs() < b.abs()) {
            blocked = Some(beta);
        }
    }
    // bearings blocked right away share one marker at the agent itself,
    // for a goal that is already within reach
    if let Some(beta) = blocked {
        picked.push((beta, PolarAction::new(0.0, center + beta)));
    }
    Ok(CandidateSet {
        stage: Stage::GoalApproach,
        view,
        candidates: make_candidates(pose, picked),
        fallback: None,
    })
}

/// Outcome of prediction, projection, merge and direction selection.
#[derive(Debug, Clone, PartialEq)]
pub struct WorldModelOutput {
    pub scores: DirectionScores,
    pub averaged: AveragedScores,
    pub alpha: usize,
    pub fallback: bool,
    pub attempts: usize,
}

fn request<'a>(prompt: &'a crate::vlm::PromptBundle, grounding: Grounding<'a>, tag: &'a CallTag) -> VlmRequest<'a> {
    VlmRequest {
        prompt,
        grounding: Some(grounding),
        tag,
    }
}

/// Scores the panorama, folds the scores into the map, clears the visited
/// disk and picks the direction with the highest average value.
pub fn world_model_step(
    backend: &dyn VlmBackend,
    templates: &PromptTemplates,
    pano: &Panorama,
    state: &mut EpisodeState,
    goal: &str,
    config: &NavConfig,
    tag: &CallTag,
) -> Result<WorldModelOutput, PolicyError> {
    let pose = state.pose();
    let navigable = pano.navigable();
    let grid = *state.grid();
    let prompt = build_predict_prompt(templates, pano.composite.clone(), goal)?;
    let g = Grounding::Predict {
        pose,
        view_navigable: &navigable,
        grid: &grid,
    };
    let answer = ask(backend, &request(&prompt, g, tag), config.vlm_retries, parse_prediction, || {
        ParsedPrediction(DirectionScores::UNIFORM_FALLBACK)
    })?;
    let scores = answer.value.0;
    let nav = project_scores(&scores, &navigable, &grid);
    state.memory.map.merge_in_place(&nav)?;
    state
        .memory
        .map
        .mark_visited(pose.position(), config.r_visit, state.memory.cost.goal_flag);
    let averaged = state.memory.map.direction_scores(&navigable);
    let previous = state.previous_direction.map(|d| wrap_pi(d - pose.yaw));
    let alpha = argmax_direction(&averaged, previous);
    state.previous_direction = Some(pose.yaw + view_offsets()[alpha]);
    Ok(WorldModelOutput {
        scores,
        averaged,
        alpha,
        fallback: answer.fallback,
        attempts: answer.attempts,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct PlanOutput {
    pub plan: ParsedPlan,
    pub fallback: bool,
}

/// Asks the planner about view `alpha`, stores the new cost and switches to
/// goal approach once the goal flag is raised.
#[allow(clippy::too_many_arguments)]
pub fn plan_step(
    backend: &dyn VlmBackend,
    templates: &PromptTemplates,
    pano: &Panorama,
    alpha: usize,
    averaged: &AveragedScores,
    occ: &StepOccupancy,
    camera: &CameraModel,
    state: &mut EpisodeState,
    goal: &str,
    config: &NavConfig,
    tag: &CallTag,
) -> Result<PlanOutput, PolicyError> {
    let view = &pano.views[alpha];
    let explanation = format!(
        "it has the highest average curiosity value ({:.1} of 10)",
        averaged.0[alpha]
    );
    let prompt = build_plan_prompt(
        templates,
        view.image.clone(),
        &state.memory.cost,
        goal,
        VIEW_CENTERS_DEG[alpha],
        &explanation,
    )?;
    let prev = state.memory.cost.clone();
    // where a goal-stage move from here could land, for grounded backends
    let reach: Vec<Point2<f64>> = propose_goal_actions(&state.pose(), alpha, camera, occ, config)
        .map(|set| set.candidates.iter().map(|c| Point2::new(c.endpoint[0], c.endpoint[1])).collect())
        .unwrap_or_default();
    let g = Grounding::Plan {
        view_pose: view.pose,
        reachable: &reach,
    };
    let answer = ask(backend, &request(&prompt, g, tag), config.vlm_retries, parse_plan, || ParsedPlan {
        subtask: prev.prev_subtask.clone(),
        goal_flag: prev.goal_flag,
        explanation: String::new(),
    })?;
    state.memory.cost = Cost {
        prev_subtask: answer.value.subtask.clone(),
        goal_flag: answer.value.goal_flag,
    };
    if answer.value.goal_flag {
        state.stage = Stage::GoalApproach;
    }
    Ok(PlanOutput {
        plan: answer.value,
        fallback: answer.fallback,
    })
}

/// Proposes in `alpha`, falling back to the other directions in order of
/// averaged score, then to the longest single fallback move, and finally to
/// a short blind move along `alpha`.
pub fn propose_with_fallback(
    state: &EpisodeState,
    alpha: usize,
    averaged: &AveragedScores,
    camera: &CameraModel,
    occ: &StepOccupancy,
    config: &NavConfig,
) -> CandidateSet {
    let pose = state.pose();
    let mut order: Vec<usize> = (0..NUM_VIEWS).filter(|&v| v != alpha).collect();
    order.sort_by(|a, b| averaged.0[*b].partial_cmp(&averaged.0[*a]).unwrap_or(Ordering::Equal));
    order.insert(0, alpha);
    let sets: Vec<CandidateSet> = order
        .into_iter()
        .filter_map(|v| match state.stage {
            Stage::Exploration => propose_actions(&pose, v, camera, occ, &state.explored, config).ok(),
            Stage::GoalApproach => propose_goal_actions(&pose, v, camera, occ, config).ok(),
        })
        .collect();
    // a regular set in the best direction that has one, else the longest
    // single fallback move across all directions
    if let Some(i) = sets.iter().position(|s| s.fallback.is_none()) {
        return sets.into_iter().nth(i).expect("index in range");
    }
    let longest = sets
        .into_iter()
        .enumerate()
        .max_by(|(i, a), (j, b)| a.candidates[0].action.r.total_cmp(&b.candidates[0].action.r).then(j.cmp(i)));
    if let Some((_, set)) = longest {
        return set;
    }
    let a = PolarAction::new(config.proposer.min_r, view_offsets()[alpha]);
    CandidateSet {
        stage: state.stage,
        view: alpha,
        candidates: make_candidates(&pose, vec![(0.0, a)]),
        fallback: Some(ProposalFallback::Blind),
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReasonOutput {
    pub index: usize,
    pub action: PolarAction,
    pub fallback: bool,
}

fn markers_on_image(set: &CandidateSet, view_pose: &Pose, camera: &CameraModel) -> Vec<(f64, f64, usize)> {
    set.candidates
        .iter()
        .map(|c| {
            let p = Point3::new(c.endpoint[0], c.endpoint[1], 0.0);
            let (u, v) = camera
                .project(view_pose, &p)
                .unwrap_or((camera.width as f64 / 2.0, camera.height as f64));
            (u, v, c.marker)
        })
        .collect()
}

/// Shows the numbered candidates to the reasoner and returns its choice. In
/// goal approach the chosen endpoint becomes the estimated goal.
#[allow(clippy::too_many_arguments)]
pub fn reason_step(
    backend: &dyn VlmBackend,
    templates: &PromptTemplates,
    pano: &Panorama,
    set: &CandidateSet,
    state: &mut EpisodeState,
    goal: &str,
    camera: &CameraModel,
    config: &NavConfig,
    tag: &CallTag,
) -> Result<ReasonOutput, PolicyError> {
    if set.is_empty() {
        return Err(PolicyError::EmptyNavigable);
    }
    let (index, fallback) = if set.len() == 1 {
        (0, false)
    } else {
        let view = &pano.views[set.view];
        let annotated = Arc::new(annotate_markers(&view.image, &markers_on_image(set, &view.pose, camera)));
        let markers: Vec<MarkerDescription> = set
            .candidates
            .iter()
            .map(|c| MarkerDescription {
                number: c.marker,
                distance: c.action.r,
                bearing_deg: wrap_pi(c.action.theta - view_offsets()[set.view]).to_degrees(),
            })
            .collect();
        let cost = &state.memory.cost;
        let prompt = build_reason_prompt(templates, annotated, &cost.prev_subtask, cost, set.stage, goal, &markers)?;
        let endpoints = set.endpoints();
        let g = Grounding::Reason {
            stage: set.stage,
            endpoints: &endpoints,
        };
        let count = set.len();
        let answer = ask(
            backend,
            &request(&prompt, g, tag),
            config.vlm_retries,
            |raw| parse_action(raw, count),
            || ParsedAction { index: count / 2 },
        )?;
        (answer.value.index, answer.fallback)
    };
    let chosen = set.candidates[index];
    if set.stage == Stage::GoalApproach {
        state.estimated_goal = Some(Point2::from(chosen.endpoint));
    }
    Ok(ReasonOutput {
        index,
        action: chosen.action,
        fallback,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct Fallbacks {
    pub predict: bool,
    pub plan: bool,
    pub reason: bool,
}

/// One line of the trajectory log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepRecord {
    pub step: usize,
    pub pose: Pose,
    pub scores: DirectionScores,
    pub avg_scores: AveragedScores,
    pub alpha: usize,
    pub subtask: String,
    pub goal_flag: bool,
    pub stage: Stage,
    pub action: PolarAction,
    pub stop: bool,
    pub pose_after: Pose,
    pub candidates: Vec<Candidate>,
    pub chosen: usize,
    pub proposal_fallback: Option<ProposalFallback>,
    pub estimated_goal: Option<[f64; 2]>,
    pub distance_to_goal: Option<f64>,
    pub fallbacks: Fallbacks,
}

/// Receives each completed step; used for logging and snapshots.
pub trait EpisodeObserver {
    fn on_step(&mut self, _record: &StepRecord, _state: &EpisodeState) {}
}

/// Observer that ignores everything.
pub struct NoopObserver;

impl EpisodeObserver for NoopObserver {}

#[derive(Debug, Clone)]
pub struct EpisodeRun {
    pub records: Vec<StepRecord>,
    pub trajectory: Vec<Pose>,
    pub stopped: bool,
    pub path_length: f64,
    pub final_map: CuriosityValueMap,
    pub final_stage: Stage,
    pub error: Option<PolicyError>,
}

impl EpisodeRun {
    pub fn steps(&self) -> usize {
        self.trajectory.len() - 1
    }

    pub fn final_pose(&self) -> Pose {
        *self.trajectory.last().expect("nonempty trajectory")
    }
}

fn run_step(
    sim: &Simulator,
    backend: &dyn VlmBackend,
    templates: &PromptTemplates,
    state: &mut EpisodeState,
    goal: &str,
    config: &NavConfig,
    tag: &CallTag,
) -> Result<StepRecord, PolicyError> {
    let pose = state.pose();
    let grid = *state.grid();
    let pano = capture_panorama(sim, &pose, &grid, config)?;
    let wm = world_model_step(backend, templates, &pano, state, goal, config, tag)?;
    let occ = StepOccupancy::from_panorama(grid, &pano);
    let plan = plan_step(
        backend,
        templates,
        &pano,
        wm.alpha,
        &wm.averaged,
        &occ,
        &sim.camera,
        state,
        goal,
        config,
        tag,
    )?;
    let set = propose_with_fallback(state, wm.alpha, &wm.averaged, &sim.camera, &occ, config);
    let reason = reason_step(backend, templates, &pano, &set, state, goal, &sim.camera, config, tag)?;

    // this step's observations count as explored from the next step on
    for v in &pano.views {
        let near: Vec<Cell> = v
            .cells
            .navigable
            .iter()
            .copied()
            .filter(|c| (grid.cell_center(*c) - pose.position()).norm() <= config.explored_range)
            .collect();
        state.explored.mark_observed(&near);
    }
    state.explored.mark_visited(pose.position(), config.r_visit);

    let after = sim.execute(&pose, &reason.action);
    state.path_length += (after.position() - pose.position()).norm();
    state.trajectory.push(after);
    let stop = check_stop(&after, state.estimated_goal, state.stage, config.d_thres);
    Ok(StepRecord {
        step: state.step,
        pose,
        scores: wm.scores,
        avg_scores: wm.averaged,
        alpha: wm.alpha,
        subtask: plan.plan.subtask,
        goal_flag: plan.plan.goal_flag,
        stage: state.stage,
        action: reason.action,
        stop: stop.stop,
        pose_after: after,
        candidates: set.candidates.clone(),
        chosen: reason.index,
        proposal_fallback: set.fallback,
        estimated_goal: state.estimated_goal.map(|g| [g.x, g.y]),
        distance_to_goal: stop.distance_to_goal,
        fallbacks: Fallbacks {
            predict: wm.fallback,
            plan: plan.fallback,
            reason: reason.fallback,
        },
    })
}

/// Runs the loop until the agent stops or the step budget is spent. Errors
/// end the episode early and are reported in the result.
pub fn run_episode(
    sim: &Simulator,
    episode: &LoadedEpisode,
    backend: &dyn VlmBackend,
    templates: &PromptTemplates,
    config: &NavConfig,
    observer: &mut dyn EpisodeObserver,
) -> EpisodeRun {
    let goal = episode.episode.goal_category.as_str();
    let start = episode.start_pose(&sim.body);
    let max_steps = episode.episode.max_steps.min(config.max_steps);
    let mut state = match EpisodeState::new(start, goal, config) {
        Ok(s) => s,
        Err(e) => {
            return EpisodeRun {
                records: vec![],
                trajectory: vec![start],
                stopped: false,
                path_length: 0.0,
                final_map: CuriosityValueMap::init(GridSpec::new(1, config.resolution.max(1e-3), [0.0, 0.0]).expect("unit grid")),
                final_stage: Stage::Exploration,
                error: Some(e),
            }
        }
    };
    let mut records = Vec::new();
    let mut stopped = false;
    let mut error = None;
    while state.step < max_steps {
        let tag = CallTag {
            episode: episode.episode.id.clone(),
            step: state.step,
        };
        match run_step(sim, backend, templates, &mut state, goal, config, &tag) {
            Ok(record) => {
                observer.on_step(&record, &state);
                stopped = record.stop;
                records.push(record);
                state.step += 1;
                if stopped {
                    break;
                }
            }
            Err(e) => {
                log::warn!("episode {} aborted at step {}: {e}", episode.episode.id, state.step);
                error = Some(e);
                break;
            }
        }
    }
    EpisodeRun {
        records,
        trajectory: state.trajectory,
        stopped,
        path_length: state.path_length,
        final_map: state.memory.map,
        final_stage: state.stage,
        error,
    }
}
