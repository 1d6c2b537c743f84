//! Compiles and links a small C program against the generated header and
//! the static library. Skipped when no C compiler is on the path.

use std::path::{Path, PathBuf};
use std::process::Command;

const PROGRAM: &str = r#"
#include <stdio.h>
#include <string.h>
#include "wmnav.h"

int main(void) {
    WmnavMap *map = NULL;
    if (wmnav_map_new(4, 1.0, 0.0, 0.0, &map) != WMNAV_STATUS_OK) return 1;
    size_t cells[2] = {0, 5};
    float scores[2] = {3.0f, 8.0f};
    if (wmnav_map_merge(map, cells, scores, 2) != WMNAV_STATUS_OK) return 2;
    float values[16];
    if (wmnav_map_values(map, values, 16) != WMNAV_STATUS_OK) return 3;
    wmnav_map_free(map);
    if (values[0] != 3.0f || values[5] != 8.0f || values[1] != 10.0f) return 4;

    size_t idx = 0;
    if (wmnav_parse_action("{\"action\": 3}", 4, &idx) != WMNAV_STATUS_OK || idx != 2) return 5;
    if (wmnav_parse_action(NULL, 4, &idx) != WMNAV_STATUS_NULL_POINTER) return 6;
    char msg[64];
    size_t n = wmnav_last_error_message(msg, sizeof msg);
    if (n == 0 || strlen(msg) == 0) return 7;

    WmnavEpisodeResult rs[2] = {{true, 2.0, 1.0}, {false, 1.0, 1.0}};
    double spl = 0, sr = 0;
    if (wmnav_spl(rs, 2, &spl, &sr) != WMNAV_STATUS_OK) return 8;
    if (sr != 0.5 || spl != 0.25) return 9;
    printf("%s\n", wmnav_version());
    return 0;
}
"#;

fn static_lib(target_dir: &Path) -> Option<PathBuf> {
    let lib = target_dir.join("libwmnav_ffi.a");
    lib.exists().then_some(lib)
}

#[test]
fn header_compiles_and_links() {
    let cc = std::env::var("CC").unwrap_or_else(|_| "cc".into());
    if Command::new(&cc).arg("--version").output().is_err() {
        eprintln!("no C compiler, skipping");
        return;
    }
    let manifest = PathBuf::from(env!("CARGO_MANIFEST_DIR"));
    // tests run from target/<profile>/deps
    let exe = std::env::current_exe().unwrap();
    let profile_dir = exe.parent().unwrap().parent().unwrap();
    let Some(lib) = static_lib(profile_dir) else {
        eprintln!("static library not found in {}, skipping", profile_dir.display());
        return;
    };
    let dir = tempfile::tempdir().unwrap();
    let src = dir.path().join("main.c");
    std::fs::write(&src, PROGRAM).unwrap();
    let bin = dir.path().join("main");
    let status = Command::new(&cc)
        .arg("-std=c99")
        .arg("-Wall")
        .arg("-Werror")
        .arg("-I")
        .arg(manifest.join("include"))
        .arg(&src)
        .arg(&lib)
        .args(["-lpthread", "-ldl", "-lm"])
        .arg("-o")
        .arg(&bin)
        .status()
        .unwrap();
    assert!(status.success(), "C build failed");
    let out = Command::new(&bin).output().unwrap();
    assert!(out.status.success(), "C program exited with {:?}", out.status.code());
    assert_eq!(String::from_utf8_lossy(&out.stdout).trim(), env!("CARGO_PKG_VERSION"));
}
