use std::ffi::{CStr, CString};
use std::path::PathBuf;
use std::ptr;

use wmnav_ffi::*;

fn bundled(rel: &str) -> CString {
    let p = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../suites/bundled").join(rel);
    CString::new(p.to_str().unwrap()).unwrap()
}

fn last_error() -> String {
    unsafe {
        let n = wmnav_last_error_message(ptr::null_mut(), 0);
        let mut buf = vec![0 as std::ffi::c_char; n + 1];
        wmnav_last_error_message(buf.as_mut_ptr(), buf.len());
        CStr::from_ptr(buf.as_ptr()).to_string_lossy().into_owned()
    }
}

#[test]
fn version_is_crate_version() {
    let v = unsafe { CStr::from_ptr(wmnav_version()) };
    assert_eq!(v.to_str().unwrap(), env!("CARGO_PKG_VERSION"));
}

#[test]
fn null_arguments_are_reported() {
    unsafe {
        let mut out = ptr::null_mut();
        assert_eq!(wmnav_scene_load(ptr::null(), &mut out), WmnavStatus::NullPointer);
        assert!(last_error().contains("path"));
        assert_eq!(wmnav_map_merge(ptr::null_mut(), ptr::null(), ptr::null(), 0), WmnavStatus::NullPointer);
        assert_eq!(wmnav_map_len(ptr::null()), 0);
        wmnav_scene_free(ptr::null_mut());
        wmnav_map_free(ptr::null_mut());
    }
}

#[test]
fn scene_geodesic() {
    unsafe {
        let mut scene = ptr::null_mut();
        assert_eq!(wmnav_scene_load(bundled("scenes/scene_00.json").as_ptr(), &mut scene), WmnavStatus::Ok);
        let mut d = -1.0;
        assert_eq!(wmnav_scene_geodesic_distance(scene, 1.05, 3.65, 1.05, 3.65, &mut d), WmnavStatus::Ok);
        assert!(d.abs() < 1e-9);
        assert_eq!(
            wmnav_scene_geodesic_distance(scene, 1.05, 3.65, 500.0, 500.0, &mut d),
            WmnavStatus::Unreachable
        );
        assert!(!last_error().is_empty());
        wmnav_scene_free(scene);

        let bad = CString::new("{not json").unwrap();
        assert_eq!(wmnav_scene_from_json(bad.as_ptr(), &mut scene), WmnavStatus::Parse);
        let missing = CString::new("/nonexistent/scene.json").unwrap();
        assert_eq!(wmnav_scene_load(missing.as_ptr(), &mut scene), WmnavStatus::Io);
    }
}

#[test]
fn map_merge_keeps_minimum() {
    unsafe {
        let mut map = ptr::null_mut();
        assert_eq!(wmnav_map_new(10, 0.5, 0.0, 0.0, &mut map), WmnavStatus::Ok);
        assert_eq!(wmnav_map_len(map), 100);
        let cells = [3usize, 4, 3];
        let scores = [7.0f32, 2.0, 5.0];
        assert_eq!(wmnav_map_merge(map, cells.as_ptr(), scores.as_ptr(), 3), WmnavStatus::Ok);
        let more = [6.0f32, 9.0, 9.0];
        assert_eq!(wmnav_map_merge(map, cells.as_ptr(), more.as_ptr(), 3), WmnavStatus::Ok);
        let mut values = vec![0f32; 100];
        assert_eq!(wmnav_map_values(map, values.as_mut_ptr(), values.len()), WmnavStatus::Ok);
        assert_eq!(values[3], 5.0);
        assert_eq!(values[4], 2.0);
        assert_eq!(values[0], 10.0);

        let out_of_range = [100usize];
        assert_eq!(
            wmnav_map_merge(map, out_of_range.as_ptr(), scores.as_ptr(), 1),
            WmnavStatus::InvalidArgument
        );
        assert_eq!(wmnav_map_values(map, values.as_mut_ptr(), 5), WmnavStatus::InvalidArgument);

        assert_eq!(wmnav_map_mark_visited(map, 0.0, 0.0, 1.0, true), WmnavStatus::Ok);
        wmnav_map_values(map, values.as_mut_ptr(), values.len());
        assert!(values.iter().all(|v| *v > 0.0));
        assert_eq!(wmnav_map_mark_visited(map, 0.0, 0.0, 1.0, false), WmnavStatus::Ok);
        wmnav_map_values(map, values.as_mut_ptr(), values.len());
        assert!(values.contains(&0.0));

        let dir = tempfile::tempdir().unwrap();
        let path = CString::new(dir.path().join("m.pgm").to_str().unwrap()).unwrap();
        assert_eq!(wmnav_map_write_pgm(map, path.as_ptr()), WmnavStatus::Ok);
        assert!(dir.path().join("m.pgm").exists());
        wmnav_map_free(map);

        assert_eq!(wmnav_map_new(0, 0.5, 0.0, 0.0, &mut map), WmnavStatus::InvalidArgument);
    }
}

#[test]
fn parsing() {
    unsafe {
        let text = CString::new("Left: 3, Front-Left: 4, Front: 9, Front-Right: 1, Right: 0, Back: 2").unwrap();
        let mut scores = [0u8; 6];
        let status = wmnav_parse_prediction(text.as_ptr(), scores.as_mut_ptr());
        assert_eq!(status, WmnavStatus::Ok, "{}", last_error());
        assert_eq!(scores.iter().filter(|s| **s == 9).count(), 1);

        let junk = CString::new("no idea").unwrap();
        assert_eq!(wmnav_parse_prediction(junk.as_ptr(), scores.as_mut_ptr()), WmnavStatus::Parse);

        let reply = CString::new(r#"{"action": 2}"#).unwrap();
        let mut idx = 99;
        assert_eq!(wmnav_parse_action(reply.as_ptr(), 3, &mut idx), WmnavStatus::Ok);
        assert_eq!(idx, 1);
        assert_eq!(wmnav_parse_action(reply.as_ptr(), 1, &mut idx), WmnavStatus::Parse);
    }
}

#[test]
fn spl_and_sr() {
    let rs = [
        WmnavEpisodeResult { success: true, path_length: 10.0, optimal_length: 5.0 },
        WmnavEpisodeResult { success: true, path_length: 4.0, optimal_length: 4.0 },
        WmnavEpisodeResult { success: false, path_length: 3.0, optimal_length: 2.0 },
        WmnavEpisodeResult { success: false, path_length: 3.0, optimal_length: -1.0 },
    ];
    let (mut spl, mut sr) = (0.0, 0.0);
    unsafe {
        assert_eq!(wmnav_spl(rs.as_ptr(), rs.len(), &mut spl, &mut sr), WmnavStatus::Ok);
        assert!((sr - 0.5).abs() < 1e-12);
        assert!((spl - 1.5 / 4.0).abs() < 1e-12);
        assert_eq!(wmnav_spl(rs.as_ptr(), 0, &mut spl, &mut sr), WmnavStatus::InvalidArgument);
    }
}

#[test]
fn benchmark_then_replay() {
    let dir = tempfile::tempdir().unwrap();
    let suite_dir = dir.path().join("mini");
    std::fs::create_dir_all(suite_dir.join("episodes")).unwrap();
    let src = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../suites/bundled");
    let scenes = std::fs::canonicalize(src.join("scenes")).unwrap();
    for id in ["ep_00", "ep_01"] {
        let mut ep: serde_json::Value =
            serde_json::from_str(&std::fs::read_to_string(src.join(format!("episodes/{id}.json"))).unwrap()).unwrap();
        let scene = ep["scene"].as_str().unwrap().rsplit('/').next().unwrap().to_string();
        ep["scene"] = scenes.join(scene).to_str().unwrap().into();
        std::fs::write(suite_dir.join(format!("episodes/{id}.json")), ep.to_string()).unwrap();
    }
    let suite = serde_json::json!({
        "schema": 1,
        "name": "mini",
        "episodes": ["episodes/ep_00.json", "episodes/ep_01.json"],
    });
    std::fs::write(suite_dir.join("suite.json"), suite.to_string()).unwrap();

    let c = |p: PathBuf| CString::new(p.to_str().unwrap()).unwrap();
    let suite_path = c(suite_dir.join("suite.json"));
    let out = c(dir.path().join("out"));
    let replay_out = c(dir.path().join("replay"));
    let calls = c(dir.path().join("out/vlm_calls.jsonl"));
    unsafe {
        let mut a = WmnavSummary::default();
        let s = wmnav_run_benchmark(suite_path.as_ptr(), out.as_ptr(), WmnavBackend::Oracle, ptr::null(), 1, &mut a);
        assert_eq!(s, WmnavStatus::Ok, "{}", last_error());
        assert_eq!(a.episodes, 2);
        let mut b = WmnavSummary::default();
        let s = wmnav_run_benchmark(suite_path.as_ptr(), replay_out.as_ptr(), WmnavBackend::Replay, calls.as_ptr(), 1, &mut b);
        assert_eq!(s, WmnavStatus::Ok, "{}", last_error());
        assert_eq!((a.successes, a.spl, a.mean_steps), (b.successes, b.spl, b.mean_steps));

        assert_eq!(
            wmnav_run_benchmark(suite_path.as_ptr(), out.as_ptr(), WmnavBackend::Replay, ptr::null(), 1, ptr::null_mut()),
            WmnavStatus::NullPointer
        );
    }
}
