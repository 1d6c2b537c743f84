use std::fs;
use std::path::Path;

use nalgebra::Point2;
use serde::{Deserialize, Serialize};

use super::SimError;

pub const SCENE_SCHEMA: u32 = 1;
pub const DEFAULT_WALL_HEIGHT: f64 = 2.5;

/// Categories with fixed semantic ids. Anything else is numbered after these
/// in order of first appearance.
pub const KNOWN_CATEGORIES: [&str; 6] = ["bed", "sofa", "toilet", "tv", "plant", "chair"];

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Bounds {
    pub min: [f64; 2],
    pub max: [f64; 2],
}

impl Bounds {
    pub fn contains(&self, x: f64, y: f64) -> bool {
        x >= self.min[0] && x <= self.max[0] && y >= self.min[1] && y <= self.max[1]
    }

    pub fn width(&self) -> f64 {
        self.max[0] - self.min[0]
    }

    pub fn height(&self) -> f64 {
        self.max[1] - self.min[1]
    }

    pub fn diagonal(&self) -> f64 {
        self.width().hypot(self.height())
    }

    /// The four edges, counter-clockwise from the lower-left corner.
    pub fn edges(&self) -> [Wall; 4] {
        let [x0, y0] = self.min;
        let [x1, y1] = self.max;
        let h = f64::INFINITY;
        [
            Wall::new([x0, y0], [x1, y0], h),
            Wall::new([x1, y0], [x1, y1], h),
            Wall::new([x1, y1], [x0, y1], h),
            Wall::new([x0, y1], [x0, y0], h),
        ]
    }
}

fn default_wall_height() -> f64 {
    DEFAULT_WALL_HEIGHT
}

/// Axis-aligned wall segment extruded from the floor.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Wall {
    pub from: [f64; 2],
    pub to: [f64; 2],
    #[serde(default = "default_wall_height")]
    pub height: f64,
}

impl Wall {
    pub fn new(from: [f64; 2], to: [f64; 2], height: f64) -> Self {
        Self { from, to, height }
    }

    pub fn a(&self) -> Point2<f64> {
        Point2::new(self.from[0], self.from[1])
    }

    pub fn b(&self) -> Point2<f64> {
        Point2::new(self.to[0], self.to[1])
    }

    pub fn distance_to(&self, p: Point2<f64>) -> f64 {
        point_segment_distance(p, self.a(), self.b())
    }
}

/// Upright cylinder standing on the floor.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SceneObject {
    pub category: String,
    pub position: [f64; 2],
    pub radius: f64,
    pub height: f64,
}

impl SceneObject {
    pub fn center(&self) -> Point2<f64> {
        Point2::new(self.position[0], self.position[1])
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Room {
    pub label: String,
    pub min: [f64; 2],
    pub max: [f64; 2],
}

impl Room {
    pub fn contains(&self, p: Point2<f64>) -> bool {
        p.x >= self.min[0] && p.x <= self.max[0] && p.y >= self.min[1] && p.y <= self.max[1]
    }
}

/// Static 2.5D scene. Immutable once loaded.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scene {
    pub schema: u32,
    pub bounds: Bounds,
    pub walls: Vec<Wall>,
    pub objects: Vec<SceneObject>,
    #[serde(default)]
    pub rooms: Vec<Room>,
    #[serde(skip)]
    categories: Vec<String>,
}

pub fn point_segment_distance(p: Point2<f64>, a: Point2<f64>, b: Point2<f64>) -> f64 {
    let ab = b - a;
    let len2 = ab.norm_squared();
    if len2 == 0.0 {
        return (p - a).norm();
    }
    let t = ((p - a).dot(&ab) / len2).clamp(0.0, 1.0);
    (p - (a + ab * t)).norm()
}

fn invalid(field: impl Into<String>, message: impl Into<String>) -> SimError {
    SimError::InvalidScene {
        field: field.into(),
        message: message.into(),
    }
}

impl Scene {
    pub fn new(bounds: Bounds, walls: Vec<Wall>, objects: Vec<SceneObject>, rooms: Vec<Room>) -> Result<Self, SimError> {
        let mut scene = Self {
            schema: SCENE_SCHEMA,
            bounds,
            walls,
            objects,
            rooms,
            categories: Vec::new(),
        };
        scene.finish()?;
        Ok(scene)
    }

    pub fn from_json_str(s: &str) -> Result<Self, SimError> {
        let mut scene: Scene = serde_json::from_str(s).map_err(|e| invalid("<document>", e.to_string()))?;
        scene.finish()?;
        Ok(scene)
    }

    pub fn load(path: &Path) -> Result<Self, SimError> {
        let text = fs::read_to_string(path).map_err(|e| SimError::Io {
            path: path.display().to_string(),
            message: e.to_string(),
        })?;
        Self::from_json_str(&text).map_err(|e| e.in_file(path))
    }

    pub fn to_json_pretty(&self) -> String {
        serde_json::to_string_pretty(self).expect("scene serializes")
    }

    fn finish(&mut self) -> Result<(), SimError> {
        self.validate()?;
        let mut cats: Vec<String> = KNOWN_CATEGORIES.iter().map(|s| s.to_string()).collect();
        for o in &self.objects {
            if !cats.contains(&o.category) {
                cats.push(o.category.clone());
            }
        }
        self.categories = cats;
        Ok(())
    }

    fn validate(&self) -> Result<(), SimError> {
        if self.schema != SCENE_SCHEMA {
            return Err(invalid("schema", format!("unsupported schema {}, expected {SCENE_SCHEMA}", self.schema)));
        }
        let b = &self.bounds;
        if !(b.max[0] > b.min[0] && b.max[1] > b.min[1]) {
            return Err(invalid("bounds", "max must exceed min on both axes"));
        }
        for (i, w) in self.walls.iter().enumerate() {
            if w.from[0] != w.to[0] && w.from[1] != w.to[1] {
                return Err(invalid(format!("walls[{i}]"), "wall is not axis-aligned"));
            }
            if !(w.height > 0.0) {
                return Err(invalid(format!("walls[{i}].height"), "must be > 0"));
            }
            for (name, p) in [("from", w.from), ("to", w.to)] {
                if !b.contains(p[0], p[1]) {
                    return Err(invalid(format!("walls[{i}].{name}"), "outside scene bounds"));
                }
            }
        }
        for (i, o) in self.objects.iter().enumerate() {
            if o.category.trim().is_empty() {
                return Err(invalid(format!("objects[{i}].category"), "empty category"));
            }
            if !(o.radius > 0.0) {
                return Err(invalid(format!("objects[{i}].radius"), "must be > 0"));
            }
            if !(o.height > 0.0) {
                return Err(invalid(format!("objects[{i}].height"), "must be > 0"));
            }
            let [x, y] = o.position;
            if !(x - o.radius >= b.min[0] && x + o.radius <= b.max[0] && y - o.radius >= b.min[1] && y + o.radius <= b.max[1]) {
                return Err(invalid(format!("objects[{i}].position"), "footprint leaves scene bounds"));
            }
            if let Some(j) = self.walls.iter().position(|w| w.distance_to(o.center()) < o.radius) {
                return Err(invalid(format!("objects[{i}].position"), format!("footprint intersects walls[{j}]")));
            }
        }
        for (i, r) in self.rooms.iter().enumerate() {
            if !(r.max[0] > r.min[0] && r.max[1] > r.min[1]) {
                return Err(invalid(format!("rooms[{i}]"), "max must exceed min"));
            }
        }
        Ok(())
    }

    /// Semantic id of a category; 0 is reserved for floor and walls.
    pub fn category_id(&self, category: &str) -> Option<u8> {
        self.categories
            .iter()
            .position(|c| c == category)
            .map(|i| (i + 1).min(u8::MAX as usize) as u8)
    }

    pub fn category_name(&self, id: u8) -> Option<&str> {
        if id == 0 {
            return None;
        }
        self.categories.get(id as usize - 1).map(String::as_str)
    }

    pub fn categories(&self) -> &[String] {
        &self.categories
    }

    pub fn instances<'a>(&'a self, category: &'a str) -> impl Iterator<Item = &'a SceneObject> + 'a {
        self.objects.iter().filter(move |o| o.category == category)
    }

    pub fn room_at(&self, p: Point2<f64>) -> Option<&Room> {
        self.rooms.iter().find(|r| r.contains(p))
    }

    /// Distance from `p` to the nearest wall, object footprint or bounds edge.
    pub fn clearance(&self, p: Point2<f64>) -> f64 {
        let walls = self.walls.iter().map(|w| w.distance_to(p));
        let objects = self.objects.iter().map(|o| (p - o.center()).norm() - o.radius);
        let edges = self.bounds.edges().into_iter().map(|w| w.distance_to(p));
        walls.chain(objects).chain(edges).fold(f64::INFINITY, f64::min)
    }

    /// Whether the open segment `a`–`b` is free of walls and of object
    /// footprints other than those listed in `ignore`.
    pub fn segment_clear(&self, a: Point2<f64>, b: Point2<f64>, ignore: &[usize]) -> bool {
        for w in &self.walls {
            if segments_intersect(a, b, w.a(), w.b()) {
                return false;
            }
        }
        for (i, o) in self.objects.iter().enumerate() {
            if ignore.contains(&i) {
                continue;
            }
            if point_segment_distance(o.center(), a, b) < o.radius {
                return false;
            }
        }
        true
    }
}

fn cross(o: Point2<f64>, a: Point2<f64>, b: Point2<f64>) -> f64 {
    (a.x - o.x) * (b.y - o.y) - (a.y - o.y) * (b.x - o.x)
}

/// Closed-segment intersection test, collinear overlaps included.
pub fn segments_intersect(p1: Point2<f64>, p2: Point2<f64>, q1: Point2<f64>, q2: Point2<f64>) -> bool {
    let d1 = cross(q1, q2, p1);
    let d2 = cross(q1, q2, p2);
    let d3 = cross(p1, p2, q1);
    let d4 = cross(p1, p2, q2);
    if ((d1 > 0.0 && d2 < 0.0) || (d1 < 0.0 && d2 > 0.0)) && ((d3 > 0.0 && d4 < 0.0) || (d3 < 0.0 && d4 > 0.0)) {
        return true;
    }
    let on = |a: Point2<f64>, b: Point2<f64>, p: Point2<f64>| {
        p.x >= a.x.min(b.x) - 1e-12 && p.x <= a.x.max(b.x) + 1e-12 && p.y >= a.y.min(b.y) - 1e-12 && p.y <= a.y.max(b.y) + 1e-12
    };
    (d1 == 0.0 && on(q1, q2, p1)) || (d2 == 0.0 && on(q1, q2, p2)) || (d3 == 0.0 && on(p1, p2, q1)) || (d4 == 0.0 && on(p1, p2, q2))
}
