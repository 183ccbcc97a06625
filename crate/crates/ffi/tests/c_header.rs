// SPDX-License-Identifier: Apache-2.0

//! Compiles a C program against the generated header and the static library.

use std::path::PathBuf;
use std::process::Command;

const PROGRAM: &str = r#"
#include <stdio.h>
#include <string.h>
#include "gaugebench.h"

int main(void) {
    const char *text = "[lattice]\nsites = 1\n[dissipators]\nloss: 0.5 * c(0,dn)*c(0,up)\n";
    GbModel *m = NULL;
    if (gb_model_parse(text, &m) != GB_STATUS_OK) return 10;
    GbSymmetryClass cls;
    if (gb_model_classify(m, &cls, NULL) != GB_STATUS_OK || cls != GB_SYMMETRY_CLASS_WEAK) return 11;
    GbTrajectory *t = NULL;
    if (gb_simulate(m, GB_INIT_MIXED, 0, 1.0, 0.01, &t) != GB_STATUS_OK) return 12;
    size_t len = 0;
    gb_trajectory_len(t, &len);
    GbStepRecord r;
    gb_trajectory_record(t, len - 1, &r);
    printf("%zu %.12f %.3e\n", len, r.n, r.on_direct);
    gb_trajectory_free(t);
    gb_model_free(m);
    if (gb_model_parse("[lattice]\n", &m) != GB_STATUS_PARSE_ERROR) return 13;
    if (strlen(gb_last_error_message()) == 0) return 14;
    return 0;
}
"#;

fn target_dir() -> PathBuf {
    // target/<profile>/deps/<test binary>
    let exe = std::env::current_exe().unwrap();
    exe.parent().unwrap().parent().unwrap().to_path_buf()
}

#[test]
fn c_program_links_and_runs() {
    let lib = target_dir().join("libgaugebench_ffi.a");
    if Command::new("cc").arg("--version").output().is_err() || !lib.exists() {
        eprintln!("skipping: no C compiler or static library at {}", lib.display());
        return;
    }
    let dir = tempfile::tempdir().unwrap();
    let src = dir.path().join("main.c");
    let bin = dir.path().join("main");
    std::fs::write(&src, PROGRAM).unwrap();
    let include = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("include");
    let status = Command::new("cc")
        .args(["-std=c99", "-Wall", "-Werror", "-o"])
        .arg(&bin)
        .arg(&src)
        .arg("-I")
        .arg(&include)
        .arg(&lib)
        .args(["-lpthread", "-ldl", "-lm"])
        .status()
        .unwrap();
    assert!(status.success());
    let out = Command::new(&bin).output().unwrap();
    assert!(out.status.success(), "exit {:?}", out.status.code());
    let text = String::from_utf8(out.stdout).unwrap();
    let fields: Vec<&str> = text.split_whitespace().collect();
    assert_eq!(fields[0], "101");
    // maximally mixed start: the doubly occupied quarter decays, N = ½ + ½ e^{−γt} at γ = 0.5
    let n: f64 = fields[1].parse().unwrap();
    assert!((n - (0.5 + 0.5 * (-0.5f64).exp())).abs() < 1e-9, "{n}");
}
