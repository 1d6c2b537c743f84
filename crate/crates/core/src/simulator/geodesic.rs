//! Shortest obstacle-avoiding paths over an inflated occupancy grid.
//!
//! Cells are free when their center keeps at least the body radius of
//! clearance. Moves are 8-connected; a diagonal step needs both adjacent
//! orthogonal cells free so paths never squeeze through a corner.

use std::cmp::Ordering;
use std::collections::BinaryHeap;
use std::f64::consts::SQRT_2;

use nalgebra::Point2;

use super::scene::Scene;
use super::SimError;
use crate::geometry::{Cell, GridSpec};

/// Cells searched around a query point when its own cell is blocked.
const SNAP_RADIUS_CELLS: usize = 2;

#[derive(Debug, Clone)]
pub struct GeodesicGrid {
    pub spec: GridSpec,
    free: Vec<bool>,
}

#[derive(Copy, Clone, PartialEq)]
struct Frontier {
    cost: f64,
    idx: usize,
}

impl Eq for Frontier {}

impl Ord for Frontier {
    fn cmp(&self, other: &Self) -> Ordering {
        other.cost.total_cmp(&self.cost).then_with(|| other.idx.cmp(&self.idx))
    }
}

impl PartialOrd for Frontier {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

/// Per-cell path cost to a source set; `INFINITY` where unreachable.
#[derive(Debug, Clone)]
pub struct DistanceField {
    pub spec: GridSpec,
    pub dist: Vec<f64>,
}

impl DistanceField {
    pub fn at_cell(&self, c: Cell) -> f64 {
        if self.spec.contains(c) {
            self.dist[self.spec.index(c)]
        } else {
            f64::INFINITY
        }
    }

    /// Largest finite value in the field.
    pub fn max_finite(&self) -> f64 {
        self.dist.iter().copied().filter(|d| d.is_finite()).fold(0.0, f64::max)
    }
}

impl GeodesicGrid {
    pub fn build(scene: &Scene, resolution: f64, body_radius: f64) -> Self {
        let side = scene.bounds.width().max(scene.bounds.height());
        let map_size = (side / resolution).ceil().max(1.0) as usize;
        let spec = GridSpec::new(map_size, resolution, scene.bounds.min).expect("positive grid");
        let free = (0..spec.num_cells())
            .map(|i| {
                let p = spec.cell_center(spec.cell_at(i));
                scene.bounds.contains(p.x, p.y) && scene.clearance(p) >= body_radius
            })
            .collect();
        Self { spec, free }
    }

    pub fn is_free(&self, c: Cell) -> bool {
        self.spec.contains(c) && self.free[self.spec.index(c)]
    }

    pub fn free_cells(&self) -> impl Iterator<Item = Cell> + '_ {
        (0..self.spec.num_cells()).filter(|&i| self.free[i]).map(|i| self.spec.cell_at(i))
    }

    /// Nearest free cell to `p`, looking a couple of cells around it.
    pub fn snap(&self, p: Point2<f64>) -> Option<Cell> {
        self.snap_within(p, SNAP_RADIUS_CELLS)
    }

    /// Nearest free cell to `p` within `radius_cells` cells of its own.
    pub fn snap_within(&self, p: Point2<f64>, radius_cells: usize) -> Option<Cell> {
        let fx = ((p.x - self.spec.origin[0]) / self.spec.resolution).floor();
        let fy = ((p.y - self.spec.origin[1]) / self.spec.resolution).floor();
        let r = radius_cells as i64;
        let mut best: Option<(f64, Cell)> = None;
        for dy in -r..=r {
            for dx in -r..=r {
                let (ix, iy) = (fx as i64 + dx, fy as i64 + dy);
                if ix < 0 || iy < 0 {
                    continue;
                }
                let c = Cell::new(ix as usize, iy as usize);
                if !self.is_free(c) {
                    continue;
                }
                let d = (self.spec.cell_center(c) - p).norm();
                if best.is_none_or(|(bd, _)| d < bd) {
                    best = Some((d, c));
                }
            }
        }
        best.map(|(_, c)| c)
    }

    fn neighbors(&self, c: Cell, mut f: impl FnMut(Cell, f64)) {
        let res = self.spec.resolution;
        let n = self.spec.map_size as i64;
        let (x, y) = (c.ix as i64, c.iy as i64);
        let free = |x: i64, y: i64| x >= 0 && y >= 0 && x < n && y < n && self.free[(y * n + x) as usize];
        for (dx, dy) in [(1, 0), (-1, 0), (0, 1), (0, -1)] {
            if free(x + dx, y + dy) {
                f(Cell::new((x + dx) as usize, (y + dy) as usize), res);
            }
        }
        for (dx, dy) in [(1, 1), (1, -1), (-1, 1), (-1, -1)] {
            if free(x + dx, y + dy) && free(x + dx, y) && free(x, y + dy) {
                f(Cell::new((x + dx) as usize, (y + dy) as usize), SQRT_2 * res);
            }
        }
    }

    /// Multi-source Dijkstra; each source starts at its own initial cost.
    pub fn distance_field(&self, sources: &[(Cell, f64)]) -> DistanceField {
        let mut dist = vec![f64::INFINITY; self.spec.num_cells()];
        let mut heap = BinaryHeap::new();
        for &(c, cost) in sources {
            if !self.is_free(c) {
                continue;
            }
            let i = self.spec.index(c);
            if cost < dist[i] {
                dist[i] = cost;
                heap.push(Frontier { cost, idx: i });
            }
        }
        while let Some(Frontier { cost, idx }) = heap.pop() {
            if cost > dist[idx] {
                continue;
            }
            self.neighbors(self.spec.cell_at(idx), |n, step| {
                let j = self.spec.index(n);
                let next = cost + step;
                if next < dist[j] {
                    dist[j] = next;
                    heap.push(Frontier { cost: next, idx: j });
                }
            });
        }
        DistanceField { spec: self.spec, dist }
    }

    pub fn cell_distance(&self, from: Cell, to: Cell) -> Option<f64> {
        if !self.is_free(from) || !self.is_free(to) {
            return None;
        }
        let target = self.spec.index(to);
        let mut dist = vec![f64::INFINITY; self.spec.num_cells()];
        let mut heap = BinaryHeap::new();
        dist[self.spec.index(from)] = 0.0;
        heap.push(Frontier { cost: 0.0, idx: self.spec.index(from) });
        while let Some(Frontier { cost, idx }) = heap.pop() {
            if idx == target {
                return Some(cost);
            }
            if cost > dist[idx] {
                continue;
            }
            self.neighbors(self.spec.cell_at(idx), |n, step| {
                let j = self.spec.index(n);
                let next = cost + step;
                if next < dist[j] {
                    dist[j] = next;
                    heap.push(Frontier { cost: next, idx: j });
                }
            });
        }
        None
    }

    /// Geodesic distance between two points, snapped onto free cells.
    pub fn distance(&self, a: Point2<f64>, b: Point2<f64>) -> Result<f64, SimError> {
        let (Some(ca), Some(cb)) = (self.snap(a), self.snap(b)) else {
            return Err(SimError::Unreachable);
        };
        self.cell_distance(ca, cb).ok_or(SimError::Unreachable)
    }

    /// Distances to the region where a stop would count as success: free
    /// cells whose centers lie strictly within `success_distance` of a goal.
    pub fn success_region_field(&self, goals: &[Point2<f64>], success_distance: f64) -> DistanceField {
        let sources: Vec<(Cell, f64)> = self.goal_cells(goals, success_distance).into_iter().map(|(c, _)| (c, 0.0)).collect();
        self.distance_field(&sources)
    }

    /// Like [`Self::success_region_field`] but seeded with each cell's
    /// straight-line distance to its goal, so values keep decreasing all the
    /// way to the object.
    pub fn approach_field(&self, goals: &[Point2<f64>], success_distance: f64) -> DistanceField {
        self.distance_field(&self.goal_cells(goals, success_distance))
    }

    fn goal_cells(&self, goals: &[Point2<f64>], success_distance: f64) -> Vec<(Cell, f64)> {
        let mut out = Vec::new();
        for g in goals {
            for c in self.spec.cells_within(*g, success_distance) {
                let d = (self.spec.cell_center(c) - g).norm();
                if d < success_distance && self.is_free(c) {
                    out.push((c, d));
                }
            }
        }
        out
    }
}
