use nalgebra::{Point2, Vector2};
use serde::{Deserialize, Serialize};

use super::scene::{Scene, Wall};
use crate::geometry::Pose;
use crate::policy::PolarAction;

/// Cylindrical agent body.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AgentBody {
    pub radius: f64,
    pub height: f64,
    pub camera_height: f64,
}

impl Default for AgentBody {
    fn default() -> Self {
        Self {
            radius: 0.18,
            height: 0.88,
            camera_height: 0.88,
        }
    }
}

// keeps the stopped disk strictly outside the obstacle it touched
const CONTACT_GAP: f64 = 1e-6;

fn circle_entry(p: Point2<f64>, u: Vector2<f64>, c: Point2<f64>, r: f64) -> Option<f64> {
    let oc = p - c;
    let dist2 = oc.norm_squared();
    if dist2 < r * r {
        // already overlapping: blocked only when moving further in
        return (u.dot(&oc) < 0.0).then_some(0.0);
    }
    let b = u.dot(&oc);
    if b >= 0.0 {
        return None;
    }
    let disc = b * b - (dist2 - r * r);
    if disc < 0.0 {
        return None;
    }
    Some((-b - disc.sqrt()).max(0.0))
}

/// First distance along `u` at which a disk of radius `r` centred at `p`
/// touches the wall segment.
fn wall_entry(p: Point2<f64>, u: Vector2<f64>, wall: &Wall, r: f64) -> Option<f64> {
    let (a, b) = (wall.a(), wall.b());
    let e = b - a;
    let len = e.norm();
    let mut best = f64::INFINITY;
    if len > 0.0 {
        let dir = e / len;
        let n = Vector2::new(-dir.y, dir.x);
        let offset = (p - a).dot(&n);
        let along = (p - a).dot(&dir);
        let approach = u.dot(&n);
        if offset.abs() < r && (0.0..=len).contains(&along) {
            // inside the capsule's rectangle already
            if offset * approach < 0.0 {
                return Some(0.0);
            }
        } else if offset.abs() >= r && offset * approach < 0.0 {
            let t = (offset.abs() - r) / approach.abs();
            let along_t = along + t * u.dot(&dir);
            if (0.0..=len).contains(&along_t) {
                best = t;
            }
        }
    }
    for c in [a, b] {
        if let Some(t) = circle_entry(p, u, c, r) {
            best = best.min(t);
        }
    }
    best.is_finite().then_some(best)
}

/// Free travel distance for the body along `heading` before contact.
pub fn free_travel(scene: &Scene, from: Point2<f64>, heading: f64, radius: f64) -> f64 {
    let u = Vector2::new(heading.cos(), heading.sin());
    let mut best = f64::INFINITY;
    for w in scene.walls.iter().chain(scene.bounds.edges().iter()) {
        if let Some(t) = wall_entry(from, u, w, radius) {
            best = best.min(t);
        }
    }
    for o in &scene.objects {
        if let Some(t) = circle_entry(from, u, o.center(), o.radius + radius) {
            best = best.min(t);
        }
    }
    best
}

/// Turns to `pose.yaw + theta` and translates up to `r`, stopping short of
/// any contact. The resulting yaw faces the travel direction.
pub fn execute_action(scene: &Scene, pose: &Pose, action: &PolarAction, body: &AgentBody) -> Pose {
    let heading = pose.yaw + action.theta;
    let free = free_travel(scene, pose.position(), heading, body.radius);
    let travel = action.r.min(free - CONTACT_GAP).max(0.0);
    Pose::new(
        pose.x + travel * heading.cos(),
        pose.y + travel * heading.sin(),
        pose.z,
        heading,
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::simulator::scene::{Bounds, SceneObject};
    use approx::assert_abs_diff_eq;

    fn scene() -> Scene {
        Scene::new(
            Bounds { min: [-10.0, -10.0], max: [10.0, 10.0] },
            vec![Wall::new([1.0, -3.0], [1.0, 3.0], 2.5)],
            vec![SceneObject {
                category: "sofa".into(),
                position: [-3.0, 0.0],
                radius: 0.5,
                height: 0.6,
            }],
            vec![],
        )
        .unwrap()
    }

    #[test]
    fn open_space_moves_full_distance() {
        let s = scene();
        let p = execute_action(&s, &Pose::new(0.0, 5.0, 0.88, 0.0), &PolarAction::new(2.0, 0.0), &AgentBody::default());
        assert_abs_diff_eq!(p.x, 2.0, epsilon = 1e-12);
        assert_abs_diff_eq!(p.y, 5.0, epsilon = 1e-12);
    }

    #[test]
    fn wall_truncates_by_radius() {
        let s = scene();
        let p = execute_action(&s, &Pose::new(0.0, 0.0, 0.88, 0.0), &PolarAction::new(2.0, 0.0), &AgentBody::default());
        assert_abs_diff_eq!(p.x, 0.82, epsilon = 1e-5);
        assert!(s.clearance(p.position()) >= 0.18);
    }

    #[test]
    fn heading_is_relative_and_final_yaw_faces_travel() {
        let s = scene();
        let start = Pose::new(0.0, 0.0, 0.88, std::f64::consts::FRAC_PI_2);
        let p = execute_action(&s, &start, &PolarAction::new(1.0, std::f64::consts::FRAC_PI_2), &AgentBody::default());
        // 90 + 90 = 180 degrees: moving toward -x
        assert_abs_diff_eq!(p.x, -1.0, epsilon = 1e-12);
        assert_abs_diff_eq!(p.yaw, std::f64::consts::PI, epsilon = 1e-12);
    }

    #[test]
    fn object_footprint_blocks() {
        let s = scene();
        let p = execute_action(&s, &Pose::new(0.0, 0.0, 0.88, std::f64::consts::PI), &PolarAction::new(5.0, 0.0), &AgentBody::default());
        assert_abs_diff_eq!(p.x, -3.0 + 0.5 + 0.18, epsilon = 1e-5);
    }

    #[test]
    fn grazing_past_a_wall_end_keeps_clearance() {
        let s = scene();
        // passes 0.1 m above the wall's top end: the disk must stop before it
        let start = Pose::new(0.0, 3.1, 0.88, 0.0);
        let p = execute_action(&s, &start, &PolarAction::new(3.0, 0.0), &AgentBody::default());
        assert!(p.x < 1.0);
        assert!(s.clearance(p.position()) >= 0.18 - 1e-9);
    }

    #[test]
    fn zero_length_action_turns_in_place() {
        let s = scene();
        let p = execute_action(&s, &Pose::new(0.0, 0.0, 0.88, 0.0), &PolarAction::new(0.0, 1.0), &AgentBody::default());
        assert_eq!((p.x, p.y), (0.0, 0.0));
        assert_abs_diff_eq!(p.yaw, 1.0, epsilon = 1e-12);
    }
}
