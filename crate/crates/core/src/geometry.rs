//! Camera model, pose math and the grid transforms shared by the mapping,
//! policy and simulator layers.
//!
//! Frames: the world is right-handed with `z` up and the floor at `z = 0`.
//! Yaw is measured counter-clockwise from world `+x`. Image pixels are
//! addressed `(col, row)` with `row 0` at the top.

use std::collections::BTreeSet;
use std::f64::consts::{PI, TAU};

use nalgebra::{Point2, Point3, Vector3};
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// View centers of the panoramic capture, agent-relative, in degrees.
pub const VIEW_CENTERS_DEG: [f64; 6] = [30.0, 90.0, 150.0, 210.0, 270.0, 330.0];

/// Number of views in a panorama.
pub const NUM_VIEWS: usize = VIEW_CENTERS_DEG.len();

/// Rays beyond this range produce no depth return.
pub const DEFAULT_MAX_RANGE: f64 = 10.0;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GeometryError {
    #[error("depth image is {got_w}x{got_h} but camera expects {want_w}x{want_h}")]
    DimensionMismatch {
        got_w: usize,
        got_h: usize,
        want_w: usize,
        want_h: usize,
    },
    #[error("invalid camera model: {0}")]
    InvalidCamera(String),
    #[error("invalid grid spec: {0}")]
    InvalidGrid(String),
}

/// Wraps an angle into `[0, 2π)`.
pub fn wrap_two_pi(angle: f64) -> f64 {
    let a = angle.rem_euclid(TAU);
    // rem_euclid can return TAU for tiny negative inputs
    if a >= TAU {
        0.0
    } else {
        a
    }
}

/// Wraps an angle into `(-π, π]`.
pub fn wrap_pi(angle: f64) -> f64 {
    let a = wrap_two_pi(angle);
    if a > PI {
        a - TAU
    } else {
        a
    }
}

/// Absolute angular difference in `[0, π]`.
pub fn angular_distance(a: f64, b: f64) -> f64 {
    wrap_pi(a - b).abs()
}

/// Agent pose. `z` is the camera height above the floor.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Pose {
    pub x: f64,
    pub y: f64,
    #[serde(default)]
    pub z: f64,
    pub yaw: f64,
}

impl Pose {
    pub fn new(x: f64, y: f64, z: f64, yaw: f64) -> Self {
        Self {
            x,
            y,
            z: z.max(0.0),
            yaw: wrap_two_pi(yaw),
        }
    }

    pub fn position(&self) -> Point2<f64> {
        Point2::new(self.x, self.y)
    }

    /// Same position, yaw rotated by `delta` radians.
    pub fn rotated(&self, delta: f64) -> Self {
        Self::new(self.x, self.y, self.z, self.yaw + delta)
    }

    pub fn planar_distance_to(&self, p: Point2<f64>) -> f64 {
        (self.position() - p).norm()
    }
}

/// Pinhole camera with square pixels, pitched down about its left axis.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CameraModel {
    pub width: usize,
    pub height: usize,
    pub hfov: f64,
    pub pitch_down: f64,
}

impl Default for CameraModel {
    fn default() -> Self {
        Self {
            width: 640,
            height: 480,
            hfov: 79f64.to_radians(),
            pitch_down: 14f64.to_radians(),
        }
    }
}

impl CameraModel {
    pub fn new(width: usize, height: usize, hfov: f64, pitch_down: f64) -> Result<Self, GeometryError> {
        let cam = Self {
            width,
            height,
            hfov,
            pitch_down,
        };
        cam.validate()?;
        Ok(cam)
    }

    pub fn validate(&self) -> Result<(), GeometryError> {
        if self.width == 0 || self.height == 0 {
            return Err(GeometryError::InvalidCamera("zero-sized image".into()));
        }
        if !(self.hfov > 0.0 && self.hfov < PI) {
            return Err(GeometryError::InvalidCamera(format!(
                "hfov {} outside (0, π)",
                self.hfov
            )));
        }
        Ok(())
    }

    pub fn vfov(&self) -> f64 {
        2.0 * ((self.hfov / 2.0).tan() * self.height as f64 / self.width as f64).atan()
    }

    /// Focal length in pixels (identical on both axes).
    pub fn focal(&self) -> f64 {
        (self.width as f64 / 2.0) / (self.hfov / 2.0).tan()
    }

    /// Unit ray through the center of pixel `(col, row)` expressed in the
    /// level body frame: `(forward, left, up)`.
    pub fn body_ray(&self, col: usize, row: usize) -> Vector3<f64> {
        let f = self.focal();
        let left = -((col as f64 + 0.5) - self.width as f64 / 2.0) / f;
        let up = -((row as f64 + 0.5) - self.height as f64 / 2.0) / f;
        let (sp, cp) = self.pitch_down.sin_cos();
        // camera axes after pitching down: F = (cp, 0, -sp), U = (sp, 0, cp)
        let v = Vector3::new(cp + up * sp, left, -sp + up * cp);
        v.normalize()
    }

    /// Unit world-frame ray for a pixel seen from `pose`.
    pub fn world_ray(&self, pose: &Pose, col: usize, row: usize) -> Vector3<f64> {
        body_to_world(&self.body_ray(col, row), pose.yaw)
    }

    /// Projects a world point into fractional pixel coordinates. `None` when
    /// the point is behind the image plane.
    pub fn project(&self, pose: &Pose, p: &Point3<f64>) -> Option<(f64, f64)> {
        let d = Vector3::new(p.x - pose.x, p.y - pose.y, p.z - pose.z);
        let (sy, cy) = pose.yaw.sin_cos();
        let fwd = d.x * cy + d.y * sy;
        let left = -d.x * sy + d.y * cy;
        let up = d.z;
        let (sp, cp) = self.pitch_down.sin_cos();
        let cam_fwd = fwd * cp - up * sp;
        let cam_up = fwd * sp + up * cp;
        if cam_fwd <= 1e-9 {
            return None;
        }
        let f = self.focal();
        let col = self.width as f64 / 2.0 - f * left / cam_fwd;
        let row = self.height as f64 / 2.0 - f * cam_up / cam_fwd;
        Some((col, row))
    }
}

fn body_to_world(v: &Vector3<f64>, yaw: f64) -> Vector3<f64> {
    let (s, c) = yaw.sin_cos();
    Vector3::new(v.x * c - v.y * s, v.x * s + v.y * c, v.z)
}

/// Range image: Euclidean distance along each pixel ray, `INFINITY` for no hit.
#[derive(Debug, Clone, PartialEq)]
pub struct DepthImage {
    pub width: usize,
    pub height: usize,
    data: Vec<f64>,
}

impl DepthImage {
    pub const NO_HIT: f64 = f64::INFINITY;

    pub fn new(width: usize, height: usize) -> Self {
        Self {
            width,
            height,
            data: vec![Self::NO_HIT; width * height],
        }
    }

    pub fn from_vec(width: usize, height: usize, data: Vec<f64>) -> Self {
        assert_eq!(data.len(), width * height, "depth buffer size");
        Self { width, height, data }
    }

    #[inline]
    pub fn get(&self, col: usize, row: usize) -> f64 {
        self.data[row * self.width + col]
    }

    #[inline]
    pub fn set(&mut self, col: usize, row: usize, range: f64) {
        self.data[row * self.width + col] = range;
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn is_valid(range: f64) -> bool {
        range.is_finite() && range > 0.0
    }
}

/// Grid cell index; `ix` grows with world `x`, `iy` with world `y`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Cell {
    pub ix: usize,
    pub iy: usize,
}

impl Cell {
    pub fn new(ix: usize, iy: usize) -> Self {
        Self { ix, iy }
    }
}

pub type CellSet = BTreeSet<Cell>;

/// Square top-down grid.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    pub map_size: usize,
    pub resolution: f64,
    /// World coordinates of the lower-left corner of cell (0, 0).
    pub origin: [f64; 2],
}

impl GridSpec {
    pub const DEFAULT_MAP_SIZE: usize = 400;
    pub const DEFAULT_RESOLUTION: f64 = 0.1;

    pub fn new(map_size: usize, resolution: f64, origin: [f64; 2]) -> Result<Self, GeometryError> {
        let g = Self {
            map_size,
            resolution,
            origin,
        };
        g.validate()?;
        Ok(g)
    }

    /// Grid of the given size whose center coincides with `center`.
    pub fn centered_on(map_size: usize, resolution: f64, center: Point2<f64>) -> Result<Self, GeometryError> {
        let half = map_size as f64 * resolution / 2.0;
        Self::new(map_size, resolution, [center.x - half, center.y - half])
    }

    pub fn validate(&self) -> Result<(), GeometryError> {
        if self.map_size == 0 {
            return Err(GeometryError::InvalidGrid("map_size must be > 0".into()));
        }
        if !(self.resolution > 0.0 && self.resolution.is_finite()) {
            return Err(GeometryError::InvalidGrid("resolution must be > 0".into()));
        }
        Ok(())
    }

    pub fn num_cells(&self) -> usize {
        self.map_size * self.map_size
    }

    pub fn index(&self, c: Cell) -> usize {
        c.iy * self.map_size + c.ix
    }

    pub fn cell_at(&self, index: usize) -> Cell {
        Cell::new(index % self.map_size, index / self.map_size)
    }

    pub fn contains(&self, c: Cell) -> bool {
        c.ix < self.map_size && c.iy < self.map_size
    }

    pub fn world_to_cell(&self, x: f64, y: f64) -> Option<Cell> {
        let fx = ((x - self.origin[0]) / self.resolution).floor();
        let fy = ((y - self.origin[1]) / self.resolution).floor();
        if fx < 0.0 || fy < 0.0 || !fx.is_finite() || !fy.is_finite() {
            return None;
        }
        let c = Cell::new(fx as usize, fy as usize);
        self.contains(c).then_some(c)
    }

    pub fn cell_center(&self, c: Cell) -> Point2<f64> {
        Point2::new(
            self.origin[0] + (c.ix as f64 + 0.5) * self.resolution,
            self.origin[1] + (c.iy as f64 + 0.5) * self.resolution,
        )
    }

    /// Cells whose centers lie within `radius` of `p` (inclusive).
    pub fn cells_within(&self, p: Point2<f64>, radius: f64) -> Vec<Cell> {
        let r = radius.max(0.0);
        let lo_x = ((p.x - r - self.origin[0]) / self.resolution).floor().max(0.0) as usize;
        let lo_y = ((p.y - r - self.origin[1]) / self.resolution).floor().max(0.0) as usize;
        let hi_x = ((p.x + r - self.origin[0]) / self.resolution).ceil();
        let hi_y = ((p.y + r - self.origin[1]) / self.resolution).ceil();
        if hi_x < 0.0 || hi_y < 0.0 {
            return Vec::new();
        }
        let hi_x = (hi_x as usize).min(self.map_size.saturating_sub(1));
        let hi_y = (hi_y as usize).min(self.map_size.saturating_sub(1));
        let mut out = Vec::new();
        for iy in lo_y..=hi_y {
            for ix in lo_x..=hi_x {
                let c = Cell::new(ix, iy);
                if (self.cell_center(c) - p).norm() <= r {
                    out.push(c);
                }
            }
        }
        out
    }
}

/// Back-projects every valid depth pixel into a world point.
pub fn depth_to_world_points(
    depth: &DepthImage,
    cam: &CameraModel,
    pose: &Pose,
) -> Result<Vec<Point3<f64>>, GeometryError> {
    if depth.width != cam.width || depth.height != cam.height {
        return Err(GeometryError::DimensionMismatch {
            got_w: depth.width,
            got_h: depth.height,
            want_w: cam.width,
            want_h: cam.height,
        });
    }
    let origin = Vector3::new(pose.x, pose.y, pose.z);
    let mut points = Vec::with_capacity(depth.width * depth.height / 2);
    for row in 0..cam.height {
        for col in 0..cam.width {
            let range = depth.get(col, row);
            if !DepthImage::is_valid(range) {
                continue;
            }
            let p = origin + cam.world_ray(pose, col, row) * range;
            points.push(Point3::from(p));
        }
    }
    Ok(points)
}

/// Height thresholds used to classify points into floor and obstacle returns.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NavigabilityParams {
    pub floor_eps: f64,
    pub clearance_height: f64,
}

impl Default for NavigabilityParams {
    fn default() -> Self {
        Self {
            floor_eps: 0.08,
            clearance_height: 0.88,
        }
    }
}

/// Floor/obstacle classification of the cells touched by one view.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct CellClassification {
    pub navigable: CellSet,
    pub obstacle: CellSet,
}

/// Classifies the cells touched by `points`. A cell is navigable when it has
/// a floor return and no return inside the agent's height band.
pub fn classify_cells(points: &[Point3<f64>], grid: &GridSpec, params: &NavigabilityParams) -> CellClassification {
    const FLOOR: u8 = 1;
    const BLOCKED: u8 = 2;
    let mut flags = vec![0u8; grid.num_cells()];
    let mut touched = Vec::new();
    for p in points {
        let Some(c) = grid.world_to_cell(p.x, p.y) else {
            continue;
        };
        let idx = grid.index(c);
        let bit = if p.z.abs() <= params.floor_eps {
            FLOOR
        } else if p.z > params.floor_eps && p.z < params.clearance_height {
            BLOCKED
        } else {
            continue;
        };
        if flags[idx] == 0 {
            touched.push(idx);
        }
        flags[idx] |= bit;
    }
    let mut out = CellClassification::default();
    for idx in touched {
        let c = grid.cell_at(idx);
        if flags[idx] & BLOCKED != 0 {
            out.obstacle.insert(c);
        } else if flags[idx] & FLOOR != 0 {
            out.navigable.insert(c);
        }
    }
    out
}

pub fn navigable_cells(points: &[Point3<f64>], grid: &GridSpec, params: &NavigabilityParams) -> CellSet {
    classify_cells(points, grid, params).navigable
}

/// Index of the view center closest to an agent-relative bearing; ties go to
/// the lower index.
pub fn bearing_to_view(bearing: f64, views_deg: &[f64]) -> usize {
    let mut best = 0;
    let mut best_d = f64::INFINITY;
    for (i, v) in views_deg.iter().enumerate() {
        let d = angular_distance(bearing, v.to_radians());
        // exact ties resolve to the earlier view
        if d < best_d - 1e-12 {
            best = i;
            best_d = d;
        }
    }
    best
}

pub fn view_offsets() -> [f64; NUM_VIEWS] {
    VIEW_CENTERS_DEG.map(f64::to_radians)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    fn odd_cam(pitch_deg: f64) -> CameraModel {
        CameraModel::new(5, 3, 79f64.to_radians(), pitch_deg.to_radians()).unwrap()
    }

    #[test]
    fn vfov_matches_aspect_ratio() {
        let cam = CameraModel::default();
        let expect = 2.0 * ((79f64.to_radians() / 2.0).tan() * 480.0 / 640.0).atan();
        assert_abs_diff_eq!(cam.vfov(), expect, epsilon = 1e-12);
        assert!(CameraModel::new(10, 10, PI, 0.0).is_err());
    }

    #[test]
    fn central_ray_pitched_down() {
        let cam = odd_cam(14.0);
        let mut d = DepthImage::new(5, 3);
        d.set(2, 1, 2.0);
        let pose = Pose::new(0.0, 0.0, 0.88, 0.0);
        let pts = depth_to_world_points(&d, &cam, &pose).unwrap();
        assert_eq!(pts.len(), 1);
        let p = pts[0];
        let p14 = 14f64.to_radians();
        assert_abs_diff_eq!(p.x, 2.0 * p14.cos(), epsilon = 1e-12);
        assert_abs_diff_eq!(p.y, 0.0, epsilon = 1e-12);
        assert_abs_diff_eq!(p.z, 0.88 - 2.0 * p14.sin(), epsilon = 1e-12);
    }

    #[test]
    fn central_ray_yawed_ninety() {
        let cam = odd_cam(0.0);
        let mut d = DepthImage::new(5, 3);
        d.set(2, 1, 1.0);
        let pose = Pose::new(0.0, 0.0, 0.5, PI / 2.0);
        let p = depth_to_world_points(&d, &cam, &pose).unwrap()[0];
        assert_abs_diff_eq!(p.x, 0.0, epsilon = 1e-12);
        assert_abs_diff_eq!(p.y, 1.0, epsilon = 1e-12);
        assert_abs_diff_eq!(p.z, 0.5, epsilon = 1e-12);
    }

    #[test]
    fn dimension_mismatch_is_rejected() {
        let cam = odd_cam(0.0);
        let d = DepthImage::new(4, 3);
        let err = depth_to_world_points(&d, &cam, &Pose::new(0.0, 0.0, 1.0, 0.0)).unwrap_err();
        assert!(matches!(err, GeometryError::DimensionMismatch { .. }));
    }

    #[test]
    fn no_hit_pixels_are_skipped() {
        let cam = odd_cam(10.0);
        let d = DepthImage::new(5, 3);
        assert!(depth_to_world_points(&d, &cam, &Pose::new(0.0, 0.0, 1.0, 0.0)).unwrap().is_empty());
    }

    #[test]
    fn projection_inverts_back_projection() {
        let cam = CameraModel::default();
        let pose = Pose::new(1.0, -2.0, 0.88, 0.7);
        for &(col, row) in &[(0usize, 0usize), (320, 240), (639, 479), (100, 400)] {
            let p = Point3::from(Vector3::new(pose.x, pose.y, pose.z) + cam.world_ray(&pose, col, row) * 3.0);
            let (u, v) = cam.project(&pose, &p).unwrap();
            assert_abs_diff_eq!(u, col as f64 + 0.5, epsilon = 1e-9);
            assert_abs_diff_eq!(v, row as f64 + 0.5, epsilon = 1e-9);
        }
    }

    #[test]
    fn floor_points_are_navigable() {
        let grid = GridSpec::new(10, 0.1, [0.0, 0.0]).unwrap();
        let pts: Vec<_> = (0..10).map(|i| Point3::new(0.05 + i as f64 * 0.1, 0.05, 0.0)).collect();
        let nav = navigable_cells(&pts, &grid, &NavigabilityParams::default());
        assert_eq!(nav.len(), 10);
        assert!(navigable_cells(&[], &grid, &NavigabilityParams::default()).is_empty());
    }

    #[test]
    fn obstacle_point_excludes_cell() {
        let grid = GridSpec::new(10, 0.1, [0.0, 0.0]).unwrap();
        let pts = [Point3::new(0.05, 0.05, 0.0), Point3::new(0.06, 0.04, 0.5)];
        let cls = classify_cells(&pts, &grid, &NavigabilityParams::default());
        assert!(cls.navigable.is_empty());
        assert!(cls.obstacle.contains(&Cell::new(0, 0)));
        // points above the clearance band are ignored
        let pts = [Point3::new(0.05, 0.05, 0.0), Point3::new(0.06, 0.04, 1.5)];
        assert_eq!(navigable_cells(&pts, &grid, &NavigabilityParams::default()).len(), 1);
    }

    #[test]
    fn bearing_to_view_examples() {
        let deg = f64::to_radians;
        assert_eq!(bearing_to_view(deg(30.0), &VIEW_CENTERS_DEG), 0);
        assert_eq!(bearing_to_view(deg(60.0), &VIEW_CENTERS_DEG), 0);
        assert_eq!(bearing_to_view(deg(359.0), &VIEW_CENTERS_DEG), 5);
        assert_eq!(bearing_to_view(deg(-1.0), &VIEW_CENTERS_DEG), 5);
        assert_eq!(bearing_to_view(deg(180.0), &VIEW_CENTERS_DEG), 2);
    }

    #[test]
    fn bearing_to_view_matches_enumeration() {
        // oracle: distances to all six centers on a 1-degree sweep
        for b in 0..360 {
            let bearing = (b as f64).to_radians();
            let dists: Vec<f64> = VIEW_CENTERS_DEG
                .iter()
                .map(|v| {
                    let d = (b as f64 - v).rem_euclid(360.0);
                    d.min(360.0 - d)
                })
                .collect();
            let min = dists.iter().cloned().fold(f64::INFINITY, f64::min);
            let want = dists.iter().position(|&d| (d - min).abs() < 1e-9).unwrap();
            assert_eq!(bearing_to_view(bearing, &VIEW_CENTERS_DEG), want, "bearing {b}");
        }
    }

    #[test]
    fn cells_within_matches_scan() {
        let grid = GridSpec::new(40, 0.1, [0.0, 0.0]).unwrap();
        let p = Point2::new(1.0, 1.0);
        let got: CellSet = grid.cells_within(p, 0.5).into_iter().collect();
        let mut want = CellSet::new();
        for iy in 0..40 {
            for ix in 0..40 {
                let c = Cell::new(ix, iy);
                if (grid.cell_center(c) - p).norm() <= 0.5 {
                    want.insert(c);
                }
            }
        }
        assert_eq!(got, want);
    }

    proptest! {
        #[test]
        fn cell_round_trip(ix in 0usize..400, iy in 0usize..400, ox in -30.0f64..30.0, oy in -30.0f64..30.0) {
            let grid = GridSpec::new(400, 0.1, [ox, oy]).unwrap();
            let c = Cell::new(ix, iy);
            let w = grid.cell_center(c);
            prop_assert_eq!(grid.world_to_cell(w.x, w.y), Some(c));
        }

        #[test]
        fn points_lie_in_horizontal_frustum(
            col in 0usize..64, row in 0usize..48, range in 0.2f64..9.0,
            yaw in 0.0f64..TAU, x in -5.0f64..5.0, y in -5.0f64..5.0,
        ) {
            let cam = CameraModel::new(64, 48, 79f64.to_radians(), 14f64.to_radians()).unwrap();
            let pose = Pose::new(x, y, 0.88, yaw);
            let mut d = DepthImage::new(64, 48);
            d.set(col, row, range);
            let p = depth_to_world_points(&d, &cam, &pose).unwrap()[0];
            let bearing = (p.y - y).atan2(p.x - x);
            // pitch widens the horizontal spread of off-center rows, never past
            // the corner ray's bearing
            let level = Pose::new(0.0, 0.0, 0.0, 0.0);
            let max_half = [(0, 0), (0, 47), (63, 0), (63, 47)]
                .iter()
                .map(|&(c, r)| {
                    let v = cam.world_ray(&level, c, r);
                    v.y.atan2(v.x).abs()
                })
                .fold(0.0, f64::max);
            prop_assert!(angular_distance(bearing, yaw) <= max_half + 1e-9);
        }

        #[test]
        fn obstacles_never_add_navigable_cells(
            floor in proptest::collection::vec((0.0f64..1.0, 0.0f64..1.0), 1..60),
            obst in proptest::collection::vec((0.0f64..1.0, 0.0f64..1.0, 0.1f64..0.8), 0..20),
        ) {
            let grid = GridSpec::new(10, 0.1, [0.0, 0.0]).unwrap();
            let params = NavigabilityParams::default();
            let mut pts: Vec<_> = floor.iter().map(|&(x, y)| Point3::new(x, y, 0.0)).collect();
            let before = navigable_cells(&pts, &grid, &params);
            pts.extend(obst.iter().map(|&(x, y, z)| Point3::new(x, y, z)));
            let after = navigable_cells(&pts, &grid, &params);
            prop_assert!(after.is_subset(&before));
        }
    }
}
