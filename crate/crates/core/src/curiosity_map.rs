//! Curiosity value map: the top-down memory of how likely the goal is to
//! be found in, or reached through, each cell.
//!
//! Every cell starts at [`MAX_SCORE`]. Each step the per-direction scores
//! are projected onto the cells seen navigable in that direction and merged
//! with a per-cell minimum, so a cell's value never increases.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use nalgebra::Point2;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::{angular_distance, view_offsets, Cell, CellSet, GridSpec, NUM_VIEWS};

pub const MAX_SCORE: f32 = 10.0;
pub const MIN_SCORE: f32 = 0.0;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MapError {
    #[error("grid spec mismatch between map and score projection")]
    GridMismatch,
    #[error("malformed PGM: {0}")]
    Pgm(String),
    #[error("{0}")]
    Io(String),
}

/// Integer score per panorama direction, in view order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct DirectionScores(pub [u8; NUM_VIEWS]);

impl DirectionScores {
    pub const UNIFORM_FALLBACK: DirectionScores = DirectionScores([5; NUM_VIEWS]);

    /// Builds scores, clamping each into `0..=10`.
    pub fn clamped(raw: [i64; NUM_VIEWS]) -> Self {
        Self(raw.map(|v| v.clamp(0, MAX_SCORE as i64) as u8))
    }

    pub fn get(&self, view: usize) -> f32 {
        self.0[view] as f32
    }
}

/// Mean map value over each direction's navigable cells.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AveragedScores(pub [f64; NUM_VIEWS]);

/// Scores projected onto the cells observed navigable this step.
#[derive(Debug, Clone, PartialEq)]
pub struct NavScoreMap {
    pub spec: GridSpec,
    pub scores: BTreeMap<Cell, f32>,
}

impl NavScoreMap {
    pub fn new(spec: GridSpec) -> Self {
        Self {
            spec,
            scores: BTreeMap::new(),
        }
    }

    /// Inserts a score, keeping the minimum if the cell already has one.
    pub fn insert_min(&mut self, cell: Cell, score: f32) {
        if !self.spec.contains(cell) {
            return;
        }
        let score = score.clamp(MIN_SCORE, MAX_SCORE);
        self.scores
            .entry(cell)
            .and_modify(|s| *s = s.min(score))
            .or_insert(score);
    }

    pub fn len(&self) -> usize {
        self.scores.len()
    }

    pub fn is_empty(&self) -> bool {
        self.scores.is_empty()
    }
}

/// Assigns every navigable cell the score of the view that saw it. Cells seen
/// by overlapping views keep the lowest candidate score.
pub fn project_scores(scores: &DirectionScores, per_view_navigable: &[CellSet], spec: &GridSpec) -> NavScoreMap {
    let mut nav = NavScoreMap::new(*spec);
    for (view, cells) in per_view_navigable.iter().enumerate().take(NUM_VIEWS) {
        let s = scores.get(view);
        for &c in cells {
            nav.insert_min(c, s);
        }
    }
    nav
}

#[derive(Debug, Clone, PartialEq)]
pub struct CuriosityValueMap {
    spec: GridSpec,
    values: Vec<f32>,
}

impl CuriosityValueMap {
    pub fn init(spec: GridSpec) -> Self {
        Self {
            values: vec![MAX_SCORE; spec.num_cells()],
            spec,
        }
    }

    pub fn spec(&self) -> &GridSpec {
        &self.spec
    }

    pub fn values(&self) -> &[f32] {
        &self.values
    }

    pub fn get(&self, c: Cell) -> f32 {
        self.values[self.spec.index(c)]
    }

    /// Restores a map from raw values; each must lie in `[0, 10]`.
    pub fn from_values(spec: GridSpec, values: Vec<f32>) -> Result<Self, MapError> {
        if values.len() != spec.num_cells() {
            return Err(MapError::GridMismatch);
        }
        let values = values.into_iter().map(|v| v.clamp(MIN_SCORE, MAX_SCORE)).collect();
        Ok(Self { spec, values })
    }

    pub fn merge(&self, nav: &NavScoreMap) -> Result<Self, MapError> {
        let mut out = self.clone();
        out.merge_in_place(nav)?;
        Ok(out)
    }

    /// `value(c) = min(value(c), nav(c))` wherever `nav` has a score.
    pub fn merge_in_place(&mut self, nav: &NavScoreMap) -> Result<(), MapError> {
        if nav.spec != self.spec {
            return Err(MapError::GridMismatch);
        }
        for (&c, &s) in &nav.scores {
            let i = self.spec.index(c);
            self.values[i] = self.values[i].min(s);
        }
        Ok(())
    }

    /// Zeroes the disk of cells around a visited position, plus the cell that
    /// contains it. Skipped while the goal flag is raised, since the region
    /// then holds the goal.
    pub fn mark_visited(&mut self, position: Point2<f64>, r_visit: f64, goal_flag: bool) {
        if goal_flag {
            return;
        }
        if let Some(c) = self.spec.world_to_cell(position.x, position.y) {
            let i = self.spec.index(c);
            self.values[i] = MIN_SCORE;
        }
        for c in self.spec.cells_within(position, r_visit) {
            let i = self.spec.index(c);
            self.values[i] = MIN_SCORE;
        }
    }

    pub fn direction_scores(&self, per_view_navigable: &[CellSet]) -> AveragedScores {
        let mut out = [0.0; NUM_VIEWS];
        for (view, cells) in per_view_navigable.iter().enumerate().take(NUM_VIEWS) {
            if cells.is_empty() {
                continue;
            }
            let sum: f64 = cells.iter().map(|&c| self.get(c) as f64).sum();
            out[view] = sum / cells.len() as f64;
        }
        AveragedScores(out)
    }

    /// Portable graymap, one pixel per cell, `+y` up.
    pub fn to_pgm(&self) -> String {
        let n = self.spec.map_size;
        let mut s = String::with_capacity(n * n * 4 + 32);
        let _ = writeln!(s, "P2\n{n} {n}\n255");
        for iy in (0..n).rev() {
            let row: Vec<String> = (0..n)
                .map(|ix| pgm_value(self.get(Cell::new(ix, iy))).to_string())
                .collect();
            let _ = writeln!(s, "{}", row.join(" "));
        }
        s
    }

    pub fn write_pgm(&self, path: &Path) -> Result<(), MapError> {
        fs::write(path, self.to_pgm()).map_err(|e| MapError::Io(format!("{}: {e}", path.display())))
    }

    /// Reads a map back from a graymap produced by [`Self::to_pgm`]. Scores
    /// are recovered to within one grey level.
    pub fn from_pgm(text: &str, spec: GridSpec) -> Result<Self, MapError> {
        let mut tokens = text
            .lines()
            .map(|l| l.split('#').next().unwrap_or(""))
            .flat_map(str::split_whitespace);
        if tokens.next() != Some("P2") {
            return Err(MapError::Pgm("missing P2 magic".into()));
        }
        let mut num = || -> Result<usize, MapError> {
            tokens
                .next()
                .ok_or_else(|| MapError::Pgm("truncated".into()))?
                .parse()
                .map_err(|e| MapError::Pgm(format!("{e}")))
        };
        let (w, h, maxval) = (num()?, num()?, num()?);
        if w != spec.map_size || h != spec.map_size || maxval == 0 {
            return Err(MapError::GridMismatch);
        }
        let mut values = vec![0.0; spec.num_cells()];
        for iy in (0..h).rev() {
            for ix in 0..w {
                let v = num()? as f32 / maxval as f32 * 255.0;
                values[spec.index(Cell::new(ix, iy))] = v / 25.5;
            }
        }
        Self::from_values(spec, values)
    }
}

/// Grey level of a score in exported snapshots.
pub fn pgm_value(score: f32) -> u8 {
    (score as f64 * 25.5).round().clamp(0.0, 255.0) as u8
}

pub fn snapshot_file_name(step: usize) -> String {
    format!("cvm_step{step}.pgm")
}

/// Picks the highest averaged direction. Exact ties go to the view closest
/// to `previous` (agent-relative bearing of the last chosen direction),
/// then to the lowest index.
pub fn argmax_direction(avg: &AveragedScores, previous: Option<f64>) -> usize {
    let max = avg.0.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let offsets = view_offsets();
    let mut best: Option<(usize, f64)> = None;
    for (i, &v) in avg.0.iter().enumerate() {
        if v != max {
            continue;
        }
        let d = previous.map_or(0.0, |p| angular_distance(offsets[i], p));
        match best {
            Some((_, bd)) if d >= bd - 1e-9 => {}
            _ => best = Some((i, d)),
        }
    }
    best.map_or(0, |(i, _)| i)
}

/// Cells the agent has already covered: seen navigable near a past pose, or
/// swept by its footprint. Bits only ever turn on.
#[derive(Debug, Clone, PartialEq)]
pub struct ExploredMap {
    spec: GridSpec,
    observed: Vec<bool>,
    visited: Vec<bool>,
}

impl ExploredMap {
    pub fn new(spec: GridSpec) -> Self {
        Self {
            spec,
            observed: vec![false; spec.num_cells()],
            visited: vec![false; spec.num_cells()],
        }
    }

    pub fn spec(&self) -> &GridSpec {
        &self.spec
    }

    pub fn mark_observed<'a>(&mut self, cells: impl IntoIterator<Item = &'a Cell>) {
        for c in cells {
            if self.spec.contains(*c) {
                let i = self.spec.index(*c);
                self.observed[i] = true;
            }
        }
    }

    pub fn mark_visited(&mut self, position: Point2<f64>, r_visit: f64) {
        if let Some(c) = self.spec.world_to_cell(position.x, position.y) {
            let i = self.spec.index(c);
            self.visited[i] = true;
        }
        for c in self.spec.cells_within(position, r_visit) {
            let i = self.spec.index(c);
            self.visited[i] = true;
        }
    }

    pub fn is_explored(&self, c: Cell) -> bool {
        self.spec.contains(c) && {
            let i = self.spec.index(c);
            self.observed[i] || self.visited[i]
        }
    }

    pub fn explored_count(&self) -> usize {
        self.observed.iter().zip(&self.visited).filter(|(a, b)| **a || **b).count()
    }
}
