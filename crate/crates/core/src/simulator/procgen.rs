//! Seeded generator for small multi-room apartments and their episodes.

use std::collections::BTreeSet;
use std::sync::Arc;

use nalgebra::Point2;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::geodesic::GeodesicGrid;
use super::scene::{Bounds, Room, Scene, SceneObject, Wall, DEFAULT_WALL_HEIGHT, KNOWN_CATEGORIES};
use super::{AgentBody, Episode, LoadedEpisode, StartPose, DEFAULT_MAX_STEPS, SUCCESS_DISTANCE};

const ROOM_LABELS: [&str; 6] = ["bedroom", "living room", "bathroom", "kitchen", "office", "dining room"];
const DOOR_WIDTH: (f64, f64) = (1.0, 1.3);
const WALL_MARGIN: f64 = 0.35;
const DOOR_KEEP_OUT: f64 = 1.3;
const MIN_START_DISTANCE: f64 = 2.0;

/// Footprint radius and height of each known category.
pub fn category_shape(category: &str) -> (f64, f64) {
    match category {
        "bed" => (0.45, 0.55),
        "sofa" => (0.45, 0.8),
        "toilet" => (0.25, 0.45),
        "tv" => (0.3, 1.1),
        "plant" => (0.2, 0.9),
        "chair" => (0.25, 0.9),
        _ => (0.3, 0.8),
    }
}

/// Rooms where a category would naturally be found.
fn preferred_rooms(category: &str) -> &'static [&'static str] {
    match category {
        "bed" => &["bedroom"],
        "sofa" => &["living room"],
        "toilet" => &["bathroom"],
        "tv" => &["living room", "bedroom"],
        "plant" => &["living room", "dining room", "office"],
        "chair" => &["dining room", "office", "kitchen"],
        _ => &[],
    }
}

#[derive(Debug, Clone)]
pub struct GeneratorParams {
    pub min_rooms: usize,
    pub max_rooms: usize,
    pub max_goal_categories: usize,
}

impl Default for GeneratorParams {
    fn default() -> Self {
        Self {
            min_rooms: 2,
            max_rooms: 6,
            max_goal_categories: 3,
        }
    }
}

struct Layout {
    rows: usize,
    cols: usize,
    xs: Vec<f64>,
    ys: Vec<f64>,
    occupied: Vec<bool>,
}

impl Layout {
    fn occ(&self, r: usize, c: usize) -> bool {
        r < self.rows && c < self.cols && self.occupied[r * self.cols + c]
    }
}

/// Generates a scene whose rooms are all mutually reachable.
pub fn generate_scene(seed: u64, params: &GeneratorParams) -> Scene {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n_rooms = rng.random_range(params.min_rooms..=params.max_rooms);
    let rows = if n_rooms <= 2 { 1 } else { rng.random_range(1..=2usize) };
    let cols = n_rooms.div_ceil(rows);
    let mut xs = vec![0.0];
    for _ in 0..cols {
        let w = rng.random_range(3.5..5.5);
        xs.push(xs.last().unwrap() + round_dm(w));
    }
    let mut ys = vec![0.0];
    for _ in 0..rows {
        let h = rng.random_range(3.5..5.0);
        ys.push(ys.last().unwrap() + round_dm(h));
    }
    let mut occupied = vec![true; rows * cols];
    // drop trailing cells so exactly n_rooms remain; the grid stays connected
    for k in n_rooms..rows * cols {
        occupied[k] = false;
    }
    let layout = Layout {
        rows,
        cols,
        xs,
        ys,
        occupied,
    };

    let mut labels: Vec<&str> = ROOM_LABELS.to_vec();
    labels.shuffle(&mut rng);
    let mut rooms = Vec::new();
    let mut room_cells = Vec::new();
    for r in 0..rows {
        for c in 0..cols {
            if !layout.occ(r, c) {
                continue;
            }
            rooms.push(Room {
                label: labels[rooms.len()].to_string(),
                min: [layout.xs[c], layout.ys[r]],
                max: [layout.xs[c + 1], layout.ys[r + 1]],
            });
            room_cells.push((r, c));
        }
    }

    // doors: random spanning tree over adjacent rooms plus some extra loops
    let mut adj = Vec::new();
    for (i, &(r, c)) in room_cells.iter().enumerate() {
        for (j, &(r2, c2)) in room_cells.iter().enumerate() {
            if j > i && ((r == r2 && c + 1 == c2) || (c == c2 && r + 1 == r2)) {
                adj.push((i, j));
            }
        }
    }
    adj.shuffle(&mut rng);
    let mut comp: Vec<usize> = (0..room_cells.len()).collect();
    fn find(comp: &mut [usize], i: usize) -> usize {
        let mut i = i;
        while comp[i] != i {
            comp[i] = comp[comp[i]];
            i = comp[i];
        }
        i
    }
    let mut doors = BTreeSet::new();
    for &(i, j) in &adj {
        let (a, b) = (find(&mut comp, i), find(&mut comp, j));
        if a != b {
            comp[a] = b;
            doors.insert((i, j));
        } else if rng.random_bool(0.3) {
            doors.insert((i, j));
        }
    }

    let mut walls = Vec::new();
    let mut door_centers = Vec::new();
    let h = DEFAULT_WALL_HEIGHT;
    for (i, &(r, c)) in room_cells.iter().enumerate() {
        let (x0, x1, y0, y1) = (layout.xs[c], layout.xs[c + 1], layout.ys[r], layout.ys[r + 1]);
        // outer walls on the sides without a neighbour
        if r == 0 || !layout.occ(r - 1, c) {
            walls.push(Wall::new([x0, y0], [x1, y0], h));
        }
        if !layout.occ(r + 1, c) {
            walls.push(Wall::new([x0, y1], [x1, y1], h));
        }
        if c == 0 || !layout.occ(r, c - 1) {
            walls.push(Wall::new([x0, y0], [x0, y1], h));
        }
        if !layout.occ(r, c + 1) {
            walls.push(Wall::new([x1, y0], [x1, y1], h));
        }
        // shared walls are emitted once, by the left/lower room
        for (j, &(r2, c2)) in room_cells.iter().enumerate() {
            let horizontal_neighbour = r2 == r && c2 == c + 1;
            let vertical_neighbour = c2 == c && r2 == r + 1;
            if !(horizontal_neighbour || vertical_neighbour) {
                continue;
            }
            let (a, b, fixed, vertical) = if horizontal_neighbour { (y0, y1, x1, true) } else { (x0, x1, y1, false) };
            if doors.contains(&(i.min(j), i.max(j))) {
                let width = round_dm(rng.random_range(DOOR_WIDTH.0..DOOR_WIDTH.1));
                let lo = round_dm(rng.random_range(a + 0.5..b - 0.5 - width));
                let hi = lo + width;
                let seg = |p: f64, q: f64| {
                    if vertical {
                        Wall::new([fixed, p], [fixed, q], h)
                    } else {
                        Wall::new([p, fixed], [q, fixed], h)
                    }
                };
                walls.push(seg(a, lo));
                walls.push(seg(hi, b));
                let mid = (lo + hi) / 2.0;
                door_centers.push(if vertical { Point2::new(fixed, mid) } else { Point2::new(mid, fixed) });
            } else {
                walls.push(if vertical {
                    Wall::new([fixed, a], [fixed, b], h)
                } else {
                    Wall::new([a, fixed], [b, fixed], h)
                });
            }
        }
    }

    let bounds = Bounds {
        min: [0.0, 0.0],
        max: [*layout.xs.last().unwrap(), *layout.ys.last().unwrap()],
    };

    // goal categories and their instances
    let n_cats = rng.random_range(1..=params.max_goal_categories.clamp(1, KNOWN_CATEGORIES.len()));
    let mut cats: Vec<&str> = KNOWN_CATEGORIES.to_vec();
    cats.shuffle(&mut rng);
    cats.truncate(n_cats);
    let mut objects: Vec<SceneObject> = Vec::new();
    for cat in cats {
        let preferred: Vec<usize> = rooms
            .iter()
            .enumerate()
            .filter(|(_, r)| preferred_rooms(cat).contains(&r.label.as_str()))
            .map(|(i, _)| i)
            .collect();
        let instances = if rng.random_bool(0.3) { 2 } else { 1 };
        for k in 0..instances {
            let room_idx = if k == 0 && !preferred.is_empty() {
                preferred[rng.random_range(0..preferred.len())]
            } else {
                rng.random_range(0..rooms.len())
            };
            if let Some(obj) = place_object(&mut rng, cat, &rooms[room_idx], &objects, &door_centers) {
                objects.push(obj);
            }
        }
    }
    // every category drawn must exist at least once
    if objects.is_empty() {
        let room = &rooms[0];
        let c = [(room.min[0] + room.max[0]) / 2.0, (room.min[1] + room.max[1]) / 2.0];
        let (radius, height) = category_shape("plant");
        objects.push(SceneObject {
            category: "plant".into(),
            position: c,
            radius,
            height,
        });
    }

    Scene::new(bounds, walls, objects, rooms).expect("generated scene is valid")
}

fn round_dm(v: f64) -> f64 {
    (v * 10.0).round() / 10.0
}

fn place_object(
    rng: &mut ChaCha8Rng,
    category: &str,
    room: &Room,
    existing: &[SceneObject],
    doors: &[Point2<f64>],
) -> Option<SceneObject> {
    let (radius, height) = category_shape(category);
    let pad = radius + WALL_MARGIN;
    for _ in 0..200 {
        let x = round_dm(rng.random_range(room.min[0] + pad..room.max[0] - pad));
        let y = round_dm(rng.random_range(room.min[1] + pad..room.max[1] - pad));
        let p = Point2::new(x, y);
        if doors.iter().any(|d| (d - p).norm() < DOOR_KEEP_OUT + radius) {
            continue;
        }
        if existing.iter().any(|o| (o.center() - p).norm() < o.radius + radius + 0.8) {
            continue;
        }
        return Some(SceneObject {
            category: category.to_string(),
            position: [x, y],
            radius,
            height,
        });
    }
    None
}

/// Picks a goal category and a reachable start pose at least a couple of
/// meters from success, preferring a room without the goal.
pub fn generate_episode(scene: &Arc<Scene>, seed: u64, id: &str, scene_ref: &str) -> Option<LoadedEpisode> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x9e37_79b9_7f4a_7c15);
    let body = AgentBody::default();
    let grid = GeodesicGrid::build(scene, 0.1, body.radius);
    let mut cats: Vec<String> = scene.objects.iter().map(|o| o.category.clone()).collect();
    cats.sort();
    cats.dedup();
    let goal_category = cats[rng.random_range(0..cats.len())].clone();
    let goals: Vec<Point2<f64>> = scene.instances(&goal_category).map(|o| o.center()).collect();
    let field = grid.success_region_field(&goals, SUCCESS_DISTANCE);
    let goal_rooms: Vec<&str> = goals.iter().filter_map(|g| scene.room_at(*g)).map(|r| r.label.as_str()).collect();

    let mut candidates: Vec<(bool, Point2<f64>)> = Vec::new();
    for c in grid.free_cells() {
        let p = grid.spec.cell_center(c);
        let d = field.at_cell(c);
        if !d.is_finite() || d < MIN_START_DISTANCE || scene.clearance(p) < 0.4 {
            continue;
        }
        let other_room = scene.room_at(p).is_none_or(|r| !goal_rooms.contains(&r.label.as_str()));
        candidates.push((other_room, p));
    }
    if candidates.is_empty() {
        return None;
    }
    let preferred: Vec<Point2<f64>> = candidates.iter().filter(|(o, _)| *o).map(|(_, p)| *p).collect();
    let pool: Vec<Point2<f64>> = if preferred.is_empty() {
        candidates.iter().map(|(_, p)| *p).collect()
    } else {
        preferred
    };
    let p = pool[rng.random_range(0..pool.len())];
    let yaw = round_dm(rng.random_range(0.0..std::f64::consts::TAU));
    let episode = Episode {
        schema: 1,
        id: id.to_string(),
        scene: scene_ref.to_string(),
        start: StartPose {
            x: (p.x * 100.0).round() / 100.0,
            y: (p.y * 100.0).round() / 100.0,
            yaw,
        },
        goal_category,
        seed,
        max_steps: DEFAULT_MAX_STEPS,
    };
    LoadedEpisode::new(episode, scene.clone()).ok()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn generation_is_deterministic() {
        let p = GeneratorParams::default();
        assert_eq!(generate_scene(7, &p), generate_scene(7, &p));
        assert_ne!(generate_scene(7, &p), generate_scene(8, &p));
    }

    #[test]
    fn all_rooms_are_connected() {
        let p = GeneratorParams::default();
        for seed in 0..25 {
            let scene = generate_scene(seed, &p);
            assert!((2..=6).contains(&scene.rooms.len()));
            let grid = GeodesicGrid::build(&scene, 0.1, 0.18);
            let centers: Vec<Point2<f64>> = scene
                .rooms
                .iter()
                .map(|r| Point2::new((r.min[0] + r.max[0]) / 2.0, (r.min[1] + r.max[1]) / 2.0))
                .collect();
            let src = grid.snap(centers[0]).or_else(|| grid.free_cells().next()).unwrap();
            let field = grid.distance_field(&[(src, 0.0)]);
            for room in &scene.rooms {
                let reachable = grid
                    .free_cells()
                    .filter(|c| room.contains(grid.spec.cell_center(*c)))
                    .any(|c| field.at_cell(c).is_finite());
                assert!(reachable, "seed {seed}: room {} unreachable", room.label);
            }
        }
    }

    #[test]
    fn episodes_start_away_from_goal() {
        let p = GeneratorParams::default();
        for seed in 0..10 {
            let scene = Arc::new(generate_scene(seed, &p));
            let ep = generate_episode(&scene, seed, "e", "s.json").expect("episode");
            let start = Point2::new(ep.episode.start.x, ep.episode.start.y);
            for g in ep.goal_positions() {
                assert!((g - start).norm() >= SUCCESS_DISTANCE);
            }
        }
    }
}
