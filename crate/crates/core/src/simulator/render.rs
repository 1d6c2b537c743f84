//! Raycast depth and semantic rendering of a [`Scene`].
//!
//! Every pixel is traced exactly: the ray's horizontal component is
//! intersected with the wall segments and object cylinders in the floor
//! plane and the height of each crossing decides whether the vertical
//! extrusion is hit. Candidate geometry is bucketed by bearing around the
//! camera so each pixel only tests what lies in its direction.

use std::f64::consts::TAU;

use nalgebra::{Point2, Vector2};

use super::scene::Scene;
use super::SimError;
use crate::geometry::{CameraModel, DepthImage, Pose, DEFAULT_MAX_RANGE};

const BINS: usize = 2048;

#[derive(Debug, Clone, PartialEq)]
pub struct Observation {
    pub depth: DepthImage,
    /// Row-major semantic ids; 0 is floor, wall or no hit.
    pub semantic: Vec<u8>,
}

impl Observation {
    pub fn width(&self) -> usize {
        self.depth.width
    }

    pub fn height(&self) -> usize {
        self.depth.height
    }

    pub fn semantic_at(&self, col: usize, row: usize) -> u8 {
        self.semantic[row * self.depth.width + col]
    }
}

#[derive(Clone, Copy)]
enum Prim {
    Wall(usize),
    Object(usize),
}

struct BearingIndex {
    bins: Vec<Vec<Prim>>,
}

fn bin_of(angle: f64) -> usize {
    let a = angle.rem_euclid(TAU);
    ((a / TAU * BINS as f64) as usize).min(BINS - 1)
}

impl BearingIndex {
    fn build(scene: &Scene, eye: Point2<f64>) -> Self {
        let mut bins = vec![Vec::new(); BINS];
        let mark = |prim: Prim, lo: f64, hi: f64, all: bool, bins: &mut Vec<Vec<Prim>>| {
            if all {
                for b in bins.iter_mut() {
                    b.push(prim);
                }
                return;
            }
            // pad one bin on each side against rounding at bin edges
            let start = bin_of(lo) + BINS - 1;
            let span = (((hi - lo) / TAU * BINS as f64).ceil() as usize + 3).min(BINS);
            for k in 0..span {
                bins[(start + k) % BINS].push(prim);
            }
        };
        for (i, w) in scene.walls.iter().enumerate() {
            let (a, b) = (w.a() - eye, w.b() - eye);
            let degenerate = super::scene::point_segment_distance(eye, w.a(), w.b()) < 1e-9;
            let ta = a.y.atan2(a.x);
            let tb = b.y.atan2(b.x);
            // a segment not touching the eye subtends the shorter arc
            let mut d = (tb - ta).rem_euclid(TAU);
            let lo = if d <= std::f64::consts::PI {
                ta
            } else {
                d = TAU - d;
                tb
            };
            mark(Prim::Wall(i), lo, lo + d, degenerate, &mut bins);
        }
        for (i, o) in scene.objects.iter().enumerate() {
            let c = o.center() - eye;
            let dist = c.norm();
            if dist <= o.radius + 1e-9 {
                mark(Prim::Object(i), 0.0, TAU, true, &mut bins);
                continue;
            }
            let half = (o.radius / dist).asin();
            let mid = c.y.atan2(c.x);
            mark(Prim::Object(i), mid - half, mid + half, false, &mut bins);
        }
        Self { bins }
    }
}

/// Horizontal distance along unit direction `u` from `o` to segment `a`–`b`.
fn ray_segment(o: Point2<f64>, u: Vector2<f64>, a: Point2<f64>, b: Point2<f64>) -> Option<f64> {
    let e = b - a;
    let denom = u.x * e.y - u.y * e.x;
    if denom.abs() < 1e-15 {
        return None;
    }
    let w = a - o;
    let s = (w.x * e.y - w.y * e.x) / denom;
    let t = (w.x * u.y - w.y * u.x) / denom;
    (s > 1e-12 && (-1e-12..=1.0 + 1e-12).contains(&t)).then_some(s)
}

/// Entry and exit distances of a ray through a circle.
fn ray_circle(o: Point2<f64>, u: Vector2<f64>, c: Point2<f64>, r: f64) -> Option<(f64, f64)> {
    let oc = o - c;
    let b = u.dot(&oc);
    let cc = oc.norm_squared() - r * r;
    let disc = b * b - cc;
    if disc < 0.0 {
        return None;
    }
    let sq = disc.sqrt();
    let (s0, s1) = (-b - sq, -b + sq);
    (s1 > 0.0).then_some((s0.max(0.0), s1))
}

/// Renders depth and semantics for one camera pose.
pub fn render(scene: &Scene, pose: &Pose, cam: &CameraModel) -> Result<Observation, SimError> {
    render_with_range(scene, pose, cam, DEFAULT_MAX_RANGE)
}

pub fn render_with_range(scene: &Scene, pose: &Pose, cam: &CameraModel, max_range: f64) -> Result<Observation, SimError> {
    if !scene.bounds.contains(pose.x, pose.y) {
        return Err(SimError::OutOfBounds { x: pose.x, y: pose.y });
    }
    let eye = pose.position();
    let index = BearingIndex::build(scene, eye);
    let (w, h) = (cam.width, cam.height);
    let mut depth = DepthImage::new(w, h);
    let mut semantic = vec![0u8; w * h];
    let object_ids: Vec<u8> = scene
        .objects
        .iter()
        .map(|o| scene.category_id(&o.category).unwrap_or(0))
        .collect();
    let z = pose.z;

    for row in 0..h {
        for col in 0..w {
            let d = cam.world_ray(pose, col, row);
            let horiz = d.x.hypot(d.y);
            if horiz < 1e-12 {
                continue;
            }
            let u = Vector2::new(d.x / horiz, d.y / horiz);
            // slope: height change per unit horizontal distance
            let slope = d.z / horiz;
            let height_at = |s: f64| z + slope * s;

            let mut best = f64::INFINITY;
            let mut best_id = 0u8;
            if slope < 0.0 {
                best = z / -slope;
            }
            for prim in &index.bins[bin_of(u.y.atan2(u.x))] {
                match *prim {
                    Prim::Wall(i) => {
                        let wall = &scene.walls[i];
                        if let Some(s) = ray_segment(eye, u, wall.a(), wall.b()) {
                            let hz = height_at(s);
                            if s < best && (0.0..=wall.height).contains(&hz) {
                                best = s;
                                best_id = 0;
                            }
                        }
                    }
                    Prim::Object(i) => {
                        let obj = &scene.objects[i];
                        let Some((s_in, s_out)) = ray_circle(eye, u, obj.center(), obj.radius) else {
                            continue;
                        };
                        if s_in >= best {
                            continue;
                        }
                        let hz = height_at(s_in);
                        let hit = if (0.0..=obj.height).contains(&hz) {
                            Some(s_in)
                        } else if hz > obj.height && slope < 0.0 {
                            let s_top = (z - obj.height) / -slope;
                            (s_top >= s_in && s_top <= s_out).then_some(s_top)
                        } else {
                            None
                        };
                        if let Some(s) = hit {
                            if s < best {
                                best = s;
                                best_id = object_ids[i];
                            }
                        }
                    }
                }
            }
            if best.is_finite() {
                let range = best / horiz;
                if range <= max_range {
                    depth.set(col, row, range);
                    semantic[row * w + col] = best_id;
                }
            }
        }
    }
    Ok(Observation { depth, semantic })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{depth_to_world_points, CameraModel};
    use crate::simulator::scene::{Bounds, SceneObject, Wall};
    use approx::assert_abs_diff_eq;

    fn wall_scene() -> Scene {
        Scene::new(
            Bounds { min: [-5.0, -5.0], max: [5.0, 5.0] },
            vec![Wall::new([3.0, -5.0], [3.0, 5.0], 2.5)],
            vec![],
            vec![],
        )
        .unwrap()
    }

    #[test]
    fn flat_wall_center_depth() {
        let cam = CameraModel::new(641, 481, 79f64.to_radians(), 0.0).unwrap();
        let obs = render(&wall_scene(), &Pose::new(0.0, 0.0, 0.88, 0.0), &cam).unwrap();
        assert_abs_diff_eq!(obs.depth.get(320, 240), 3.0, epsilon = 1e-12);
    }

    #[test]
    fn floor_rows_follow_declination() {
        let scene = Scene::new(Bounds { min: [-50.0, -50.0], max: [50.0, 50.0] }, vec![], vec![], vec![]).unwrap();
        let cam = CameraModel::default();
        let pose = Pose::new(0.0, 0.0, 0.88, 0.0);
        let obs = render(&scene, &pose, &cam).unwrap();
        for row in [300usize, 400, 479] {
            let col = 320;
            let ray = cam.world_ray(&pose, col, row);
            let declination = (-ray.z).asin();
            assert_abs_diff_eq!(obs.depth.get(col, row), 0.88 / declination.sin(), epsilon = 1e-9);
        }
        // the horizon and above see nothing
        assert!(!obs.depth.get(320, 0).is_finite());
    }

    #[test]
    fn object_pixels_carry_category() {
        let scene = Scene::new(
            Bounds { min: [-5.0, -5.0], max: [5.0, 5.0] },
            vec![],
            vec![SceneObject {
                category: "bed".into(),
                position: [2.0, 0.0],
                radius: 0.4,
                height: 0.5,
            }],
            vec![],
        )
        .unwrap();
        let cam = CameraModel::default();
        let obs = render(&scene, &Pose::new(0.0, 0.0, 0.88, 0.0), &cam).unwrap();
        let bed = scene.category_id("bed").unwrap();
        let n = obs.semantic.iter().filter(|&&s| s == bed).count();
        assert!(n > 1000, "bed covers {n} pixels");
        // the object's top and sides are hit, never the floor beneath it
        let pts = depth_to_world_points(&obs.depth, &cam, &Pose::new(0.0, 0.0, 0.88, 0.0)).unwrap();
        for p in pts {
            let inside = (Point2::new(p.x, p.y) - Point2::new(2.0, 0.0)).norm() < 0.399;
            if inside {
                assert_abs_diff_eq!(p.z, 0.5, epsilon = 1e-9);
            }
        }
    }

    #[test]
    fn wall_points_satisfy_plane_equation() {
        let cam = CameraModel::default();
        let pose = Pose::new(0.0, 0.0, 0.88, 0.0);
        let obs = render(&wall_scene(), &pose, &cam).unwrap();
        let pts = depth_to_world_points(&obs.depth, &cam, &pose).unwrap();
        assert_eq!(pts.len(), 640 * 480);
        for p in &pts {
            // points are either on the wall plane x = 3 or on the floor
            let on_wall = (p.x - 3.0).abs() < 1e-6;
            let on_floor = p.z.abs() < 1e-6;
            assert!(on_wall || on_floor, "{p:?}");
        }
    }

    #[test]
    fn rendering_outside_bounds_fails() {
        let err = render(&wall_scene(), &Pose::new(9.0, 0.0, 0.88, 0.0), &CameraModel::default()).unwrap_err();
        assert!(matches!(err, SimError::OutOfBounds { .. }));
    }

    #[test]
    fn rendering_is_deterministic() {
        let cam = CameraModel::default();
        let pose = Pose::new(0.3, -0.2, 0.88, 1.1);
        let a = render(&wall_scene(), &pose, &cam).unwrap();
        let b = render(&wall_scene(), &pose, &cam).unwrap();
        assert_eq!(a, b);
    }
}
