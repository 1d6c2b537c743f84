//! Benchmark orchestration: suites, per-episode evaluation, SR/SPL, and the
//! files written for each run.

use std::collections::BTreeMap;
use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use image::{Rgb, RgbImage};
use nalgebra::Point2;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::config::{ConfigError, NavConfig};
use crate::curiosity_map::{pgm_value, snapshot_file_name, CuriosityValueMap, MapError};
use crate::geometry::{GridSpec, Pose};
use crate::policy::{run_episode, EpisodeObserver, EpisodeRun, EpisodeState, StepRecord};
use crate::simulator::procgen::{generate_episode, generate_scene, GeneratorParams};
use crate::simulator::{judge_success, Episode, LoadedEpisode, Scene, SimError, Simulator};
use crate::vlm::{
    GarbageBackend, HttpBackend, HttpConfig, OracleBackend, PromptTemplates, RecordEntry, RecordingBackend,
    ReplayBackend, VlmBackend, VlmError,
};

pub const SUITE_SCHEMA: u32 = 1;

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("suite {0} lists no episodes")]
    EmptySuite(String),
    #[error("no episode results to aggregate")]
    NoResults,
    #[error("{path}: {message}")]
    Io { path: String, message: String },
    #[error("{path}: invalid field `{field}`: {message}")]
    InvalidFile { path: String, field: String, message: String },
    #[error(transparent)]
    Sim(#[from] SimError),
    #[error(transparent)]
    Vlm(#[from] VlmError),
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Map(#[from] MapError),
}

fn io_err(path: &Path, e: impl std::fmt::Display) -> HarnessError {
    HarnessError::Io {
        path: path.display().to_string(),
        message: e.to_string(),
    }
}

fn write_file(path: &Path, contents: impl AsRef<[u8]>) -> Result<(), HarnessError> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir).map_err(|e| io_err(dir, e))?;
    }
    fs::write(path, contents).map_err(|e| io_err(path, e))
}

/// Suite document: episode files relative to the suite file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SuiteFile {
    pub schema: u32,
    #[serde(default)]
    pub name: String,
    pub episodes: Vec<String>,
}

#[derive(Debug, Clone)]
pub struct Suite {
    pub name: String,
    pub path: PathBuf,
    pub episodes: Vec<LoadedEpisode>,
}

pub fn load_suite(path: &Path) -> Result<Suite, HarnessError> {
    let text = fs::read_to_string(path).map_err(|e| io_err(path, e))?;
    let file: SuiteFile = serde_json::from_str(&text).map_err(|e| HarnessError::InvalidFile {
        path: path.display().to_string(),
        field: "<document>".into(),
        message: e.to_string(),
    })?;
    if file.schema != SUITE_SCHEMA {
        return Err(HarnessError::InvalidFile {
            path: path.display().to_string(),
            field: "schema".into(),
            message: format!("unsupported schema {}", file.schema),
        });
    }
    if file.episodes.is_empty() {
        return Err(HarnessError::EmptySuite(path.display().to_string()));
    }
    let dir = path.parent().unwrap_or(Path::new("."));
    let mut episodes = Vec::with_capacity(file.episodes.len());
    let mut seen = std::collections::BTreeSet::new();
    for (i, rel) in file.episodes.iter().enumerate() {
        let ep = Episode::load(&dir.join(rel))?;
        if !seen.insert(ep.episode.id.clone()) {
            return Err(HarnessError::InvalidFile {
                path: path.display().to_string(),
                field: format!("episodes[{i}]"),
                message: format!("duplicate episode id `{}`", ep.episode.id),
            });
        }
        episodes.push(ep);
    }
    let name = if file.name.is_empty() {
        path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default()
    } else {
        file.name
    };
    Ok(Suite {
        name,
        path: path.to_path_buf(),
        episodes,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FailureReason {
    /// Step budget spent without stopping.
    Budget,
    /// Simulator or backend error aborted the episode.
    Error,
    /// No goal instance is reachable from the start.
    Unreachable,
    /// The agent stopped outside the success radius.
    FalseStop,
}

impl FailureReason {
    pub fn as_str(&self) -> &'static str {
        match self {
            FailureReason::Budget => "budget",
            FailureReason::Error => "error",
            FailureReason::Unreachable => "unreachable",
            FailureReason::FalseStop => "false_stop",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpisodeResult {
    pub episode_id: String,
    pub goal_category: String,
    pub success: bool,
    /// Sum of executed translations.
    pub path_length: f64,
    /// Geodesic length from the start to the success region; `None` when unreachable.
    pub optimal_length: Option<f64>,
    pub steps: usize,
    pub failure_reason: Option<FailureReason>,
    #[serde(default)]
    pub error: Option<String>,
    #[serde(default)]
    pub final_distance_to_goal: Option<f64>,
}

impl EpisodeResult {
    /// Success weighted by path length for this episode.
    pub fn spl_term(&self) -> f64 {
        if !self.success {
            return 0.0;
        }
        let l = self.optimal_length.unwrap_or(0.0);
        let p = self.path_length;
        if p <= 0.0 {
            return 1.0;
        }
        l / p.max(l)
    }
}

/// Mean of `S·l / max(p, l)` over the results.
pub fn compute_spl(results: &[EpisodeResult]) -> Result<f64, HarnessError> {
    if results.is_empty() {
        return Err(HarnessError::NoResults);
    }
    Ok(results.iter().map(EpisodeResult::spl_term).sum::<f64>() / results.len() as f64)
}

pub fn compute_sr(results: &[EpisodeResult]) -> Result<f64, HarnessError> {
    if results.is_empty() {
        return Err(HarnessError::NoResults);
    }
    Ok(results.iter().filter(|r| r.success).count() as f64 / results.len() as f64)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CategorySummary {
    pub episodes: usize,
    pub successes: usize,
    pub sr: f64,
    pub spl: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchmarkSummary {
    pub suite: String,
    pub backend: String,
    pub seed: u64,
    pub episodes: usize,
    pub successes: usize,
    pub sr: f64,
    pub spl: f64,
    pub mean_steps: f64,
    pub per_category: BTreeMap<String, CategorySummary>,
    pub failures: BTreeMap<String, usize>,
    /// Files written by the run, relative to the output directory.
    pub artifacts: Vec<String>,
}

pub fn summarize(results: &[EpisodeResult], suite: &str, backend: &str, seed: u64) -> Result<BenchmarkSummary, HarnessError> {
    let sr = compute_sr(results)?;
    let spl = compute_spl(results)?;
    let mut groups: BTreeMap<String, Vec<EpisodeResult>> = BTreeMap::new();
    for r in results {
        groups.entry(r.goal_category.clone()).or_default().push(r.clone());
    }
    let per_category = groups
        .into_iter()
        .map(|(k, rs)| {
            let summary = CategorySummary {
                episodes: rs.len(),
                successes: rs.iter().filter(|r| r.success).count(),
                sr: compute_sr(&rs).expect("nonempty group"),
                spl: compute_spl(&rs).expect("nonempty group"),
            };
            (k, summary)
        })
        .collect();
    let mut failures = BTreeMap::new();
    for r in results {
        if let Some(f) = r.failure_reason {
            *failures.entry(f.as_str().to_string()).or_insert(0) += 1;
        }
    }
    Ok(BenchmarkSummary {
        suite: suite.to_string(),
        backend: backend.to_string(),
        seed,
        episodes: results.len(),
        successes: results.iter().filter(|r| r.success).count(),
        sr,
        spl,
        mean_steps: results.iter().map(|r| r.steps as f64).sum::<f64>() / results.len() as f64,
        per_category,
        failures,
        artifacts: Vec::new(),
    })
}

/// Reads results written one JSON object per line.
pub fn read_results(path: &Path) -> Result<Vec<EpisodeResult>, HarnessError> {
    let text = fs::read_to_string(path).map_err(|e| io_err(path, e))?;
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| {
            serde_json::from_str(l).map_err(|e| HarnessError::InvalidFile {
                path: path.display().to_string(),
                field: format!("line {}", i + 1),
                message: e.to_string(),
            })
        })
        .collect()
}

/// Turns a finished run into its scored result.
pub fn score_episode(sim: &Simulator, episode: &LoadedEpisode, run: &EpisodeRun, d_thres: f64) -> EpisodeResult {
    let goals = episode.goal_positions();
    let start = episode.start_pose(&sim.body).position();
    let field = sim.geodesic.success_region_field(&goals, d_thres);
    let optimal = sim
        .geodesic
        .snap(start)
        .map(|c| field.at_cell(c))
        .filter(|d| d.is_finite());
    let end = run.final_pose().position();
    let success = run.error.is_none() && run.stopped && judge_success(&goals, end, d_thres);
    let failure_reason = if success {
        None
    } else if run.error.is_some() {
        Some(FailureReason::Error)
    } else if optimal.is_none() {
        Some(FailureReason::Unreachable)
    } else if run.stopped {
        Some(FailureReason::FalseStop)
    } else {
        Some(FailureReason::Budget)
    };
    EpisodeResult {
        episode_id: episode.episode.id.clone(),
        goal_category: episode.episode.goal_category.clone(),
        success,
        path_length: run.path_length,
        optimal_length: optimal,
        steps: run.steps(),
        failure_reason,
        error: run.error.as_ref().map(ToString::to_string),
        final_distance_to_goal: goals.iter().map(|g| (g - end).norm()).min_by(f64::total_cmp),
    }
}

/// Which model answers the role prompts.
#[derive(Debug, Clone)]
pub enum BackendChoice {
    Oracle,
    Http(HttpConfig),
    Replay(PathBuf),
    Garbage,
}

impl BackendChoice {
    pub fn name(&self) -> &'static str {
        match self {
            BackendChoice::Oracle => "oracle",
            BackendChoice::Http(_) => "http",
            BackendChoice::Replay(_) => "replay",
            BackendChoice::Garbage => "garbage",
        }
    }
}

#[derive(Debug, Clone, Default)]
pub struct RunOptions {
    pub config: NavConfig,
    pub templates: PromptTemplates,
    pub seed: u64,
    /// Worker threads; `None` uses every available core.
    pub threads: Option<usize>,
}

/// Everything produced by one episode.
#[derive(Debug, Clone)]
pub struct EpisodeOutcome {
    pub result: EpisodeResult,
    pub run: EpisodeRun,
    pub calls: Vec<RecordEntry>,
    pub snapshots: Vec<(usize, CuriosityValueMap)>,
}

#[derive(Default)]
struct Collector {
    every: Option<usize>,
    snapshots: Vec<(usize, CuriosityValueMap)>,
}

impl EpisodeObserver for Collector {
    fn on_step(&mut self, record: &StepRecord, state: &EpisodeState) {
        if let Some(n) = self.every {
            if (record.step + 1).is_multiple_of(n) {
                self.snapshots.push((record.step + 1, state.memory.map.clone()));
            }
        }
    }
}

fn shared_backend(choice: &BackendChoice) -> Result<Option<Arc<dyn VlmBackend>>, HarnessError> {
    Ok(match choice {
        BackendChoice::Http(cfg) => Some(Arc::new(HttpBackend::new(cfg.clone())?)),
        BackendChoice::Replay(path) => Some(Arc::new(ReplayBackend::load(path)?)),
        BackendChoice::Oracle | BackendChoice::Garbage => None,
    })
}

fn run_one(
    episode: &LoadedEpisode,
    choice: &BackendChoice,
    shared: Option<&Arc<dyn VlmBackend>>,
    opts: &RunOptions,
) -> EpisodeOutcome {
    let cfg = &opts.config;
    let sim = Arc::new(Simulator::new(episode.scene.clone(), cfg.camera, cfg.body, cfg.resolution));
    let inner: Arc<dyn VlmBackend> = match (choice, shared) {
        (_, Some(b)) => b.clone(),
        (BackendChoice::Garbage, _) => Arc::new(GarbageBackend::new(opts.seed ^ episode.episode.seed)),
        _ => Arc::new(
            OracleBackend::new(sim.clone(), &episode.episode.goal_category)
                .with_noise(cfg.oracle_noise, opts.seed ^ episode.episode.seed),
        ),
    };
    let recorder = RecordingBackend::new(inner);
    let mut collector = Collector {
        every: cfg.snapshot_every,
        ..Default::default()
    };
    let run = run_episode(&sim, episode, &recorder, &opts.templates, cfg, &mut collector);
    let result = score_episode(&sim, episode, &run, cfg.d_thres);
    EpisodeOutcome {
        result,
        run,
        calls: recorder.entries(),
        snapshots: collector.snapshots,
    }
}

/// Runs every episode, concurrently when threads allow. Results keep the
/// input order.
pub fn evaluate_episodes(
    episodes: &[LoadedEpisode],
    choice: &BackendChoice,
    opts: &RunOptions,
) -> Result<Vec<EpisodeOutcome>, HarnessError> {
    let shared = shared_backend(choice)?;
    let work = || -> Vec<EpisodeOutcome> {
        episodes
            .par_iter()
            .map(|ep| run_one(ep, choice, shared.as_ref(), opts))
            .collect()
    };
    match opts.threads {
        Some(n) => {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(n.max(1))
                .build()
                .map_err(|e| HarnessError::Io {
                    path: "<thread pool>".into(),
                    message: e.to_string(),
                })?;
            Ok(pool.install(work))
        }
        None => Ok(work()),
    }
}

/// Metadata written next to each trajectory log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpisodeMeta {
    pub episode_file: Option<String>,
    /// Scene as loaded, so the log is self-contained.
    pub scene: Scene,
    pub goals: Vec<[f64; 2]>,
    pub grid: GridSpec,
    pub final_map: String,
    pub result: EpisodeResult,
}

#[derive(Debug, Clone)]
pub struct BenchmarkRun {
    pub summary: BenchmarkSummary,
    pub results: Vec<EpisodeResult>,
}

fn safe_name(id: &str) -> String {
    id.chars()
        .map(|c| if c.is_ascii_alphanumeric() || c == '-' || c == '_' { c } else { '_' })
        .collect()
}

/// Runs a suite file and writes, under `out_dir`:
/// `summary.json`, `results.jsonl`, `vlm_calls.jsonl` and, per episode,
/// `episodes/<id>/{trajectory.jsonl, meta.json, cvm_step<t>.pgm, snapshot.ppm}`.
pub fn run_benchmark(
    suite_path: &Path,
    choice: &BackendChoice,
    out_dir: &Path,
    opts: &RunOptions,
) -> Result<BenchmarkRun, HarnessError> {
    opts.config.validate()?;
    let suite = load_suite(suite_path)?;
    fs::create_dir_all(out_dir).map_err(|e| io_err(out_dir, e))?;
    let outcomes = evaluate_episodes(&suite.episodes, choice, opts)?;

    let mut artifacts = Vec::new();
    let mut results = Vec::new();
    let mut calls = String::new();
    let suite_dir = suite_path.parent().unwrap_or(Path::new("."));
    let listed: Vec<String> = fs::read_to_string(suite_path)
        .ok()
        .and_then(|t| serde_json::from_str::<SuiteFile>(&t).ok())
        .map(|f| f.episodes)
        .unwrap_or_default();
    for (i, (ep, out)) in suite.episodes.iter().zip(&outcomes).enumerate() {
        let rel_dir = format!("episodes/{}", safe_name(&ep.episode.id));
        let dir = out_dir.join(&rel_dir);
        let mut traj = String::new();
        for r in &out.run.records {
            traj.push_str(&serde_json::to_string(r).expect("step record serializes"));
            traj.push('\n');
        }
        write_file(&dir.join("trajectory.jsonl"), traj)?;
        artifacts.push(format!("{rel_dir}/trajectory.jsonl"));

        for (step, map) in &out.snapshots {
            let name = snapshot_file_name(*step);
            map.write_pgm(&dir.join(&name))?;
            artifacts.push(format!("{rel_dir}/{name}"));
        }
        let final_name = snapshot_file_name(out.run.steps());
        if !out.snapshots.iter().any(|(s, _)| *s == out.run.steps()) {
            out.run.final_map.write_pgm(&dir.join(&final_name))?;
            artifacts.push(format!("{rel_dir}/{final_name}"));
        }

        let goals = ep.goal_positions();
        let img = emit_trajectory_snapshot(&ep.scene, &out.run.trajectory, &goals, &out.run.final_map);
        write_ppm(&img, &dir.join("snapshot.ppm"))?;
        artifacts.push(format!("{rel_dir}/snapshot.ppm"));

        let meta = EpisodeMeta {
            episode_file: listed
                .get(i)
                .map(|rel| suite_dir.join(rel).display().to_string()),
            scene: (*ep.scene).clone(),
            goals: goals.iter().map(|g| [g.x, g.y]).collect(),
            grid: *out.run.final_map.spec(),
            final_map: final_name,
            result: out.result.clone(),
        };
        write_file(
            &dir.join("meta.json"),
            serde_json::to_string_pretty(&meta).expect("meta serializes"),
        )?;
        artifacts.push(format!("{rel_dir}/meta.json"));

        for c in &out.calls {
            calls.push_str(&serde_json::to_string(c).expect("record serializes"));
            calls.push('\n');
        }
        results.push(out.result.clone());
    }

    let mut lines = String::new();
    for r in &results {
        lines.push_str(&serde_json::to_string(r).expect("result serializes"));
        lines.push('\n');
    }
    write_file(&out_dir.join("results.jsonl"), lines)?;
    write_file(&out_dir.join("vlm_calls.jsonl"), calls)?;
    artifacts.push("results.jsonl".into());
    artifacts.push("vlm_calls.jsonl".into());
    artifacts.push("summary.json".into());

    let mut summary = summarize(&results, &suite.name, choice.name(), opts.seed)?;
    summary.artifacts = artifacts;
    write_file(
        &out_dir.join("summary.json"),
        serde_json::to_string_pretty(&summary).expect("summary serializes"),
    )?;
    Ok(BenchmarkRun { summary, results })
}

pub const WALL_COLOR: Rgb<u8> = Rgb([0, 0, 255]);
pub const PATH_COLOR: Rgb<u8> = Rgb([255, 0, 0]);
pub const GOAL_COLOR: Rgb<u8> = Rgb([0, 200, 0]);

/// Top-down image over the map grid (one pixel per cell, `+y` up): the
/// final curiosity values in grey, walls, goal instances and the path.
pub fn emit_trajectory_snapshot(
    scene: &Scene,
    trajectory: &[Pose],
    goals: &[Point2<f64>],
    map: &CuriosityValueMap,
) -> RgbImage {
    let spec = *map.spec();
    let n = spec.map_size as u32;
    let mut img = RgbImage::from_fn(n, n, |x, y| {
        let v = pgm_value(map.get(crate::geometry::Cell::new(x as usize, (n - 1 - y) as usize)));
        Rgb([v, v, v])
    });
    let plot = |p: Point2<f64>, color: Rgb<u8>, img: &mut RgbImage| {
        if let Some(c) = spec.world_to_cell(p.x, p.y) {
            img.put_pixel(c.ix as u32, n - 1 - c.iy as u32, color);
        }
    };
    let step = spec.resolution / 4.0;
    let segment = |a: Point2<f64>, b: Point2<f64>, color: Rgb<u8>, img: &mut RgbImage| {
        let len = (b - a).norm();
        let k = (len / step).ceil().max(1.0) as usize;
        for i in 0..=k {
            plot(a + (b - a) * (i as f64 / k as f64), color, img);
        }
    };
    for w in &scene.walls {
        segment(w.a(), w.b(), WALL_COLOR, &mut img);
    }
    for pair in trajectory.windows(2) {
        segment(pair[0].position(), pair[1].position(), PATH_COLOR, &mut img);
    }
    if let [only] = trajectory {
        segment(only.position(), only.position(), PATH_COLOR, &mut img);
    }
    for g in goals {
        for c in spec.cells_within(*g, 0.25) {
            img.put_pixel(c.ix as u32, n - 1 - c.iy as u32, GOAL_COLOR);
        }
    }
    img
}

/// Binary portable pixmap.
pub fn write_ppm(img: &RgbImage, path: &Path) -> Result<(), HarnessError> {
    let mut buf = Vec::with_capacity(img.as_raw().len() + 32);
    let _ = write!(buf, "P6\n{} {}\n255\n", img.width(), img.height());
    buf.extend_from_slice(img.as_raw());
    write_file(path, buf)
}

pub fn read_ppm(path: &Path) -> Result<RgbImage, HarnessError> {
    let bytes = fs::read(path).map_err(|e| io_err(path, e))?;
    let bad = || io_err(path, "not a binary PPM");
    let mut fields = Vec::new();
    let mut pos = 0;
    while fields.len() < 4 {
        while pos < bytes.len() && bytes[pos].is_ascii_whitespace() {
            pos += 1;
        }
        let start = pos;
        while pos < bytes.len() && !bytes[pos].is_ascii_whitespace() {
            pos += 1;
        }
        if start == pos {
            return Err(bad());
        }
        fields.push(String::from_utf8_lossy(&bytes[start..pos]).into_owned());
    }
    pos += 1;
    if fields[0] != "P6" || fields[3] != "255" {
        return Err(bad());
    }
    let (w, h): (u32, u32) = (fields[1].parse().map_err(|_| bad())?, fields[2].parse().map_err(|_| bad())?);
    let data = bytes.get(pos..).ok_or_else(bad)?.to_vec();
    RgbImage::from_raw(w, h, data).ok_or_else(bad)
}

/// Rebuilds the snapshot of a finished episode from its trajectory log and
/// the `meta.json` and map snapshot beside it.
pub fn snapshot_from_log(trajectory_log: &Path) -> Result<RgbImage, HarnessError> {
    let dir = trajectory_log.parent().unwrap_or(Path::new("."));
    let meta_path = dir.join("meta.json");
    let meta_text = fs::read_to_string(&meta_path).map_err(|e| io_err(&meta_path, e))?;
    let meta: EpisodeMeta = serde_json::from_str(&meta_text).map_err(|e| HarnessError::InvalidFile {
        path: meta_path.display().to_string(),
        field: "<document>".into(),
        message: e.to_string(),
    })?;
    let text = fs::read_to_string(trajectory_log).map_err(|e| io_err(trajectory_log, e))?;
    let mut trajectory = Vec::new();
    for (i, line) in text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty()) {
        let r: StepRecord = serde_json::from_str(line).map_err(|e| HarnessError::InvalidFile {
            path: trajectory_log.display().to_string(),
            field: format!("line {}", i + 1),
            message: e.to_string(),
        })?;
        if trajectory.is_empty() {
            trajectory.push(r.pose);
        }
        trajectory.push(r.pose_after);
    }
    let map_path = dir.join(&meta.final_map);
    let pgm = fs::read_to_string(&map_path).map_err(|e| io_err(&map_path, e))?;
    let map = CuriosityValueMap::from_pgm(&pgm, meta.grid)?;
    let goals: Vec<Point2<f64>> = meta.goals.iter().map(|g| Point2::new(g[0], g[1])).collect();
    Ok(emit_trajectory_snapshot(&meta.scene, &trajectory, &goals, &map))
}

/// Generates `count` solvable episodes, one scene each, whose scenes fit in
/// a map of `map_extent` metres centred on the start. Writes
/// `scenes/`, `episodes/` and `suite.json` under `dir`.
pub fn generate_suite(dir: &Path, count: usize, seed: u64, map_extent: f64) -> Result<PathBuf, HarnessError> {
    let params = GeneratorParams::default();
    let mut entries = Vec::with_capacity(count);
    let mut scene_seed = seed.wrapping_mul(1_000_003);
    while entries.len() < count {
        scene_seed = scene_seed.wrapping_add(1);
        let scene = Arc::new(generate_scene(scene_seed, &params));
        let i = entries.len();
        let scene_name = format!("scene_{i:02}.json");
        let id = format!("ep_{i:02}");
        let Some(ep) = generate_episode(&scene, scene_seed, &id, &format!("../scenes/{scene_name}")) else {
            continue;
        };
        let s = ep.episode.start;
        let b = &scene.bounds;
        let half = map_extent / 2.0 - 0.5;
        if s.x - b.min[0] > half || b.max[0] - s.x > half || s.y - b.min[1] > half || b.max[1] - s.y > half {
            continue;
        }
        write_file(&dir.join("scenes").join(&scene_name), scene.to_json_pretty() + "\n")?;
        write_file(
            &dir.join("episodes").join(format!("{id}.json")),
            serde_json::to_string_pretty(&ep.episode).expect("episode serializes") + "\n",
        )?;
        entries.push(format!("episodes/{id}.json"));
    }
    let suite = SuiteFile {
        schema: SUITE_SCHEMA,
        name: dir.file_name().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default(),
        episodes: entries,
    };
    let path = dir.join("suite.json");
    write_file(&path, serde_json::to_string_pretty(&suite).expect("suite serializes") + "\n")?;
    Ok(path)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn result(success: bool, p: f64, l: f64) -> EpisodeResult {
        EpisodeResult {
            episode_id: "e".into(),
            goal_category: "bed".into(),
            success,
            path_length: p,
            optimal_length: Some(l),
            steps: 1,
            failure_reason: (!success).then_some(FailureReason::Budget),
            error: None,
            final_distance_to_goal: None,
        }
    }

    #[test]
    fn spl_terms() {
        assert_abs_diff_eq!(result(true, 4.0, 4.0).spl_term(), 1.0);
        assert_abs_diff_eq!(result(true, 8.0, 4.0).spl_term(), 0.5);
        assert_abs_diff_eq!(result(false, 4.0, 4.0).spl_term(), 0.0);
        assert_abs_diff_eq!(result(true, 0.0, 0.0).spl_term(), 1.0);
        // shorter than the grid optimum still counts as optimal
        assert_abs_diff_eq!(result(true, 3.9, 4.0).spl_term(), 1.0);
    }

    #[test]
    fn empty_results_are_rejected() {
        assert!(matches!(compute_spl(&[]), Err(HarnessError::NoResults)));
    }

    #[test]
    fn summary_breaks_down_by_category() {
        let mut rs = vec![result(true, 2.0, 2.0), result(false, 1.0, 2.0)];
        rs[1].goal_category = "tv".into();
        let s = summarize(&rs, "s", "oracle", 0).unwrap();
        assert_eq!(s.successes, 1);
        assert_abs_diff_eq!(s.sr, 0.5);
        assert_abs_diff_eq!(s.spl, 0.5);
        assert_eq!(s.per_category["bed"].successes, 1);
        assert_eq!(s.per_category["tv"].sr, 0.0);
        assert_eq!(s.failures["budget"], 1);
    }

    #[test]
    fn ppm_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let img = RgbImage::from_fn(3, 2, |x, y| Rgb([x as u8, y as u8, 7]));
        let p = dir.path().join("a.ppm");
        write_ppm(&img, &p).unwrap();
        assert_eq!(read_ppm(&p).unwrap(), img);
    }
}
