//! C ABI over the `wmnav` library.
//!
//! Every fallible function returns a [`WmnavStatus`]; `WMNAV_STATUS_OK` is
//! zero and failures are negative. After a failure,
//! [`wmnav_last_error_message`] describes it. The message is per thread.
//!
//! Objects cross the boundary as opaque handles created by a `*_new` or
//! `*_load` function and released by the matching `*_free`. Handles are not
//! synchronized; use one per thread or lock around them.
//!
//! # Safety
//!
//! Pointer arguments must be null or valid for the access described in each
//! function's docs. Strings are NUL-terminated UTF-8.

use std::cell::RefCell;
use std::ffi::{c_char, CStr};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::PathBuf;
use std::ptr;
use std::sync::Arc;

use nalgebra::Point2;
use wmnav::config::NavConfig;
use wmnav::curiosity_map::{CuriosityValueMap, NavScoreMap};
use wmnav::geometry::GridSpec;
use wmnav::harness::{compute_spl, compute_sr, run_benchmark, BackendChoice, EpisodeResult, RunOptions};
use wmnav::simulator::{Scene, Simulator};
use wmnav::vlm::{parse_action, parse_prediction};

/// Result codes. Zero is success, failures are negative.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum WmnavStatus {
    Ok = 0,
    NullPointer = -1,
    InvalidArgument = -2,
    Io = -3,
    Parse = -4,
    Unreachable = -5,
    /// A Rust panic was caught at the boundary.
    Internal = -6,
}

/// VLM backend for [`wmnav_run_benchmark`].
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum WmnavBackend {
    Oracle = 0,
    /// Answers from a recorded `vlm_calls.jsonl`.
    Replay = 1,
}

/// One scored episode, as input to [`wmnav_spl`].
#[repr(C)]
#[derive(Debug, Clone, Copy)]
pub struct WmnavEpisodeResult {
    pub success: bool,
    pub path_length: f64,
    /// Shortest path length; negative when unknown.
    pub optimal_length: f64,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, Default)]
pub struct WmnavSummary {
    pub episodes: usize,
    pub successes: usize,
    pub sr: f64,
    pub spl: f64,
    pub mean_steps: f64,
}

/// A loaded scene and its simulator.
pub struct WmnavScene {
    sim: Simulator,
}

/// A curiosity value map.
pub struct WmnavMap {
    map: CuriosityValueMap,
}

thread_local! {
    static LAST_ERROR: RefCell<String> = const { RefCell::new(String::new()) };
}

fn set_error(msg: impl Into<String>) {
    LAST_ERROR.with(|e| *e.borrow_mut() = msg.into());
}

fn fail(status: WmnavStatus, msg: impl Into<String>) -> WmnavStatus {
    set_error(msg);
    status
}

/// Runs `f`, turning a panic into `WMNAV_STATUS_INTERNAL`.
fn guard(f: impl FnOnce() -> WmnavStatus) -> WmnavStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(s) => {
            if s == WmnavStatus::Ok {
                set_error("");
            }
            s
        }
        Err(e) => {
            let msg = e
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_else(|| "panic".into());
            fail(WmnavStatus::Internal, format!("internal error: {msg}"))
        }
    }
}

unsafe fn read_str<'a>(p: *const c_char, what: &str) -> Result<&'a str, WmnavStatus> {
    if p.is_null() {
        return Err(fail(WmnavStatus::NullPointer, format!("`{what}` is null")));
    }
    CStr::from_ptr(p)
        .to_str()
        .map_err(|_| fail(WmnavStatus::InvalidArgument, format!("`{what}` is not UTF-8")))
}

macro_rules! try_ffi {
    ($e:expr) => {
        match $e {
            Ok(v) => v,
            Err(s) => return s,
        }
    };
}

macro_rules! non_null {
    ($p:expr, $name:literal) => {
        if $p.is_null() {
            return fail(WmnavStatus::NullPointer, concat!("`", $name, "` is null"));
        }
    };
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn wmnav_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Copies the calling thread's last error message into `buf` (NUL
/// terminated, truncated to `len - 1` bytes). Returns the full message
/// length in bytes, excluding the terminator.
///
/// # Safety
/// `buf` must be null or writable for `len` bytes.
#[no_mangle]
pub unsafe extern "C" fn wmnav_last_error_message(buf: *mut c_char, len: usize) -> usize {
    LAST_ERROR.with(|e| {
        let msg = e.borrow();
        if !buf.is_null() && len > 0 {
            let n = msg.len().min(len - 1);
            ptr::copy_nonoverlapping(msg.as_ptr(), buf.cast::<u8>(), n);
            *buf.add(n) = 0;
        }
        msg.len()
    })
}

fn scene_handle(scene: Scene, out: *mut *mut WmnavScene) -> WmnavStatus {
    let cfg = NavConfig::default();
    let sim = Simulator::new(Arc::new(scene), cfg.camera, cfg.body, cfg.resolution);
    unsafe { *out = Box::into_raw(Box::new(WmnavScene { sim })) };
    WmnavStatus::Ok
}

/// Loads a scene JSON file.
///
/// # Safety
/// `path` must be a valid string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn wmnav_scene_load(path: *const c_char, out: *mut *mut WmnavScene) -> WmnavStatus {
    guard(|| {
        non_null!(out, "out");
        let path = try_ffi!(read_str(path, "path"));
        match Scene::load(&PathBuf::from(path)) {
            Ok(scene) => scene_handle(scene, out),
            Err(e) => fail(WmnavStatus::Io, e.to_string()),
        }
    })
}

/// Parses a scene from a JSON string.
///
/// # Safety
/// `json` must be a valid string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn wmnav_scene_from_json(json: *const c_char, out: *mut *mut WmnavScene) -> WmnavStatus {
    guard(|| {
        non_null!(out, "out");
        let json = try_ffi!(read_str(json, "json"));
        match Scene::from_json_str(json) {
            Ok(scene) => scene_handle(scene, out),
            Err(e) => fail(WmnavStatus::Parse, e.to_string()),
        }
    })
}

/// # Safety
/// `scene` must be null or a handle from this library, not yet freed.
#[no_mangle]
pub unsafe extern "C" fn wmnav_scene_free(scene: *mut WmnavScene) {
    if !scene.is_null() {
        drop(Box::from_raw(scene));
    }
}

/// Shortest obstacle-avoiding path length between two floor points for the
/// default agent body.
///
/// # Safety
/// `scene` must be a live handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn wmnav_scene_geodesic_distance(
    scene: *const WmnavScene,
    ax: f64,
    ay: f64,
    bx: f64,
    by: f64,
    out: *mut f64,
) -> WmnavStatus {
    guard(|| {
        non_null!(scene, "scene");
        non_null!(out, "out");
        match (*scene).sim.geodesic_distance(Point2::new(ax, ay), Point2::new(bx, by)) {
            Ok(d) => {
                *out = d;
                WmnavStatus::Ok
            }
            Err(e) => fail(WmnavStatus::Unreachable, e.to_string()),
        }
    })
}

/// Creates a `map_size` x `map_size` map of `resolution` metre cells
/// centred on (`cx`, `cy`), every cell at the maximum score.
///
/// # Safety
/// `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn wmnav_map_new(
    map_size: usize,
    resolution: f64,
    cx: f64,
    cy: f64,
    out: *mut *mut WmnavMap,
) -> WmnavStatus {
    guard(|| {
        non_null!(out, "out");
        match GridSpec::centered_on(map_size, resolution, Point2::new(cx, cy)) {
            Ok(spec) => {
                *out = Box::into_raw(Box::new(WmnavMap {
                    map: CuriosityValueMap::init(spec),
                }));
                WmnavStatus::Ok
            }
            Err(e) => fail(WmnavStatus::InvalidArgument, e.to_string()),
        }
    })
}

/// # Safety
/// `map` must be null or a handle from this library, not yet freed.
#[no_mangle]
pub unsafe extern "C" fn wmnav_map_free(map: *mut WmnavMap) {
    if !map.is_null() {
        drop(Box::from_raw(map));
    }
}

/// Number of cells, `map_size * map_size`; zero for a null handle.
///
/// # Safety
/// `map` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn wmnav_map_len(map: *const WmnavMap) -> usize {
    map.as_ref().map_or(0, |m| m.map.values().len())
}

/// Copies all cell values, row-major from the `-y` edge, into `out`.
///
/// # Safety
/// `map` must be a live handle; `out` must be writable for `len` floats.
#[no_mangle]
pub unsafe extern "C" fn wmnav_map_values(map: *const WmnavMap, out: *mut f32, len: usize) -> WmnavStatus {
    guard(|| {
        non_null!(map, "map");
        non_null!(out, "out");
        let values = (*map).map.values();
        if len < values.len() {
            return fail(
                WmnavStatus::InvalidArgument,
                format!("buffer holds {len} values, map has {}", values.len()),
            );
        }
        ptr::copy_nonoverlapping(values.as_ptr(), out, values.len());
        WmnavStatus::Ok
    })
}

/// Folds per-cell scores into the map, keeping the lower value in each
/// cell. `cells` holds row-major indices and `scores` the matching values.
///
/// # Safety
/// `map` must be a live handle; `cells` and `scores` readable for `n` items.
#[no_mangle]
pub unsafe extern "C" fn wmnav_map_merge(
    map: *mut WmnavMap,
    cells: *const usize,
    scores: *const f32,
    n: usize,
) -> WmnavStatus {
    guard(|| {
        non_null!(map, "map");
        if n > 0 {
            non_null!(cells, "cells");
            non_null!(scores, "scores");
        }
        let m = &mut (*map).map;
        let spec = *m.spec();
        let mut nav = NavScoreMap::new(spec);
        for i in 0..n {
            let (idx, s) = (*cells.add(i), *scores.add(i));
            if idx >= spec.num_cells() {
                return fail(WmnavStatus::InvalidArgument, format!("cell index {idx} out of range"));
            }
            if !(0.0..=10.0).contains(&s) {
                return fail(WmnavStatus::InvalidArgument, format!("score {s} outside [0, 10]"));
            }
            nav.insert_min(spec.cell_at(idx), s);
        }
        match m.merge_in_place(&nav) {
            Ok(()) => WmnavStatus::Ok,
            Err(e) => fail(WmnavStatus::InvalidArgument, e.to_string()),
        }
    })
}

/// Zeroes cells within `r_visit` of (`x`, `y`) unless `goal_flag` is set.
///
/// # Safety
/// `map` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn wmnav_map_mark_visited(
    map: *mut WmnavMap,
    x: f64,
    y: f64,
    r_visit: f64,
    goal_flag: bool,
) -> WmnavStatus {
    guard(|| {
        non_null!(map, "map");
        if !(r_visit >= 0.0) {
            return fail(WmnavStatus::InvalidArgument, "r_visit must be >= 0");
        }
        (*map).map.mark_visited(Point2::new(x, y), r_visit, goal_flag);
        WmnavStatus::Ok
    })
}

/// Writes the map as a plain-text PGM image.
///
/// # Safety
/// `map` must be a live handle; `path` a valid string.
#[no_mangle]
pub unsafe extern "C" fn wmnav_map_write_pgm(map: *const WmnavMap, path: *const c_char) -> WmnavStatus {
    guard(|| {
        non_null!(map, "map");
        let path = try_ffi!(read_str(path, "path"));
        match (*map).map.write_pgm(&PathBuf::from(path)) {
            Ok(()) => WmnavStatus::Ok,
            Err(e) => fail(WmnavStatus::Io, e.to_string()),
        }
    })
}

/// Extracts six direction scores (0..=10) from a model reply.
///
/// # Safety
/// `text` must be a valid string; `out` writable for six bytes.
#[no_mangle]
pub unsafe extern "C" fn wmnav_parse_prediction(text: *const c_char, out: *mut u8) -> WmnavStatus {
    guard(|| {
        non_null!(out, "out");
        let text = try_ffi!(read_str(text, "text"));
        match parse_prediction(text) {
            Ok(p) => {
                ptr::copy_nonoverlapping(p.0 .0.as_ptr(), out, p.0 .0.len());
                WmnavStatus::Ok
            }
            Err(e) => fail(WmnavStatus::Parse, e.to_string()),
        }
    })
}

/// Reads the chosen marker number from a reply and stores its zero-based
/// index among `count` candidates.
///
/// # Safety
/// `text` must be a valid string; `out_index` writable.
#[no_mangle]
pub unsafe extern "C" fn wmnav_parse_action(text: *const c_char, count: usize, out_index: *mut usize) -> WmnavStatus {
    guard(|| {
        non_null!(out_index, "out_index");
        let text = try_ffi!(read_str(text, "text"));
        match parse_action(text, count) {
            Ok(a) => {
                *out_index = a.index;
                WmnavStatus::Ok
            }
            Err(e) => fail(WmnavStatus::Parse, e.to_string()),
        }
    })
}

/// Success rate and SPL over `n` results.
///
/// # Safety
/// `results` readable for `n` items; `spl` and `sr` writable.
#[no_mangle]
pub unsafe extern "C" fn wmnav_spl(
    results: *const WmnavEpisodeResult,
    n: usize,
    spl: *mut f64,
    sr: *mut f64,
) -> WmnavStatus {
    guard(|| {
        non_null!(results, "results");
        non_null!(spl, "spl");
        non_null!(sr, "sr");
        let rs: Vec<EpisodeResult> = std::slice::from_raw_parts(results, n)
            .iter()
            .map(|r| EpisodeResult {
                episode_id: String::new(),
                goal_category: String::new(),
                success: r.success,
                path_length: r.path_length,
                optimal_length: (r.optimal_length >= 0.0).then_some(r.optimal_length),
                steps: 0,
                failure_reason: None,
                error: None,
                final_distance_to_goal: None,
            })
            .collect();
        match (compute_spl(&rs), compute_sr(&rs)) {
            (Ok(a), Ok(b)) => {
                *spl = a;
                *sr = b;
                WmnavStatus::Ok
            }
            (Err(e), _) | (_, Err(e)) => fail(WmnavStatus::InvalidArgument, e.to_string()),
        }
    })
}

/// Runs a suite and writes the usual artifacts under `out_dir`. `replay`
/// names the recorded calls for `WMNAV_BACKEND_REPLAY` and is otherwise
/// ignored. `summary` may be null.
///
/// # Safety
/// String arguments must be valid; `summary` null or writable.
#[no_mangle]
pub unsafe extern "C" fn wmnav_run_benchmark(
    suite: *const c_char,
    out_dir: *const c_char,
    backend: WmnavBackend,
    replay: *const c_char,
    seed: u64,
    summary: *mut WmnavSummary,
) -> WmnavStatus {
    guard(|| {
        let suite = try_ffi!(read_str(suite, "suite"));
        let out_dir = try_ffi!(read_str(out_dir, "out_dir"));
        let choice = match backend {
            WmnavBackend::Oracle => BackendChoice::Oracle,
            WmnavBackend::Replay => BackendChoice::Replay(PathBuf::from(try_ffi!(read_str(replay, "replay")))),
        };
        let opts = RunOptions {
            seed,
            ..RunOptions::default()
        };
        match run_benchmark(&PathBuf::from(suite), &choice, &PathBuf::from(out_dir), &opts) {
            Ok(run) => {
                if !summary.is_null() {
                    let s = &run.summary;
                    *summary = WmnavSummary {
                        episodes: s.episodes,
                        successes: s.successes,
                        sr: s.sr,
                        spl: s.spl,
                        mean_steps: s.mean_steps,
                    };
                }
                WmnavStatus::Ok
            }
            Err(e) => fail(WmnavStatus::Io, e.to_string()),
        }
    })
}
