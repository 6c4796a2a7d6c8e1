//! Builds and runs a small C program against the generated header and the
//! static library, proving the ABI is consumable outside Rust.

use std::path::PathBuf;
use std::process::Command;

const C_PROGRAM: &str = r#"
#include "heraldsim.h"
#include <stdio.h>
#include <math.h>

int main(void) {
    double out = 0.0;
    if (hs_thermal_pmf(1.0, 0, &out) != HS_STATUS_OK) return 1;
    if (fabs(out - 0.5) > 1e-15) return 2;

    if (hs_predict_g2_after_conversion(22.0, 18.0, &out) != HS_STATUS_OK) return 3;
    if (fabs(out - 10.45) > 1e-12) return 4;

    if (hs_g2_cross_ideal(-1.0, &out) != HS_STATUS_NUMERICAL_ERROR) return 5;
    if (hs_last_error() == NULL) return 6;

    HsExperiment *exp = hs_experiment_preset("smoke");
    if (!exp) return 7;
    if (hs_experiment_set_cycles(exp, 3) != HS_STATUS_OK) return 8;
    HsRun *run = NULL;
    if (hs_experiment_run(exp, &run) != HS_STATUS_OK) return 9;
    if (hs_run_point_count(run) != 1) return 10;
    uint64_t heralds = 1;
    if (hs_run_counts(run, 0, &heralds, NULL, NULL) != HS_STATUS_OK) return 11;
    if (heralds != 0) return 12;
    hs_run_free(run);
    hs_experiment_free(exp);
    printf("c abi ok\n");
    return 0;
}
"#;

fn target_dir() -> PathBuf {
    // tests run from the crate root; the staticlib lands next to the deps
    let exe = std::env::current_exe().unwrap();
    exe.parent().unwrap().parent().unwrap().to_path_buf()
}

#[test]
fn c_program_links_and_runs() {
    let cc = match which_cc() {
        Some(cc) => cc,
        None => {
            eprintln!("no C compiler found, skipping");
            return;
        }
    };
    let crate_dir = PathBuf::from(env!("CARGO_MANIFEST_DIR"));
    let include = crate_dir.join("include");
    let lib_dir = target_dir();
    let lib = lib_dir.join("libheraldsim_ffi.a");
    assert!(lib.exists(), "staticlib missing at {}", lib.display());

    let work = tempfile::tempdir().unwrap();
    let src = work.path().join("smoke.c");
    std::fs::write(&src, C_PROGRAM).unwrap();
    let exe = work.path().join("smoke");

    let compile = Command::new(&cc)
        .arg(&src)
        .arg("-I")
        .arg(&include)
        .arg(&lib)
        .args(["-lpthread", "-ldl", "-lm"])
        .arg("-o")
        .arg(&exe)
        .output()
        .unwrap();
    assert!(
        compile.status.success(),
        "cc failed:\n{}",
        String::from_utf8_lossy(&compile.stderr)
    );

    let run = Command::new(&exe).output().unwrap();
    assert!(
        run.status.success(),
        "c smoke exited {:?}: {}",
        run.status.code(),
        String::from_utf8_lossy(&run.stdout)
    );
    assert!(String::from_utf8_lossy(&run.stdout).contains("c abi ok"));
}

fn which_cc() -> Option<String> {
    for cc in ["cc", "gcc", "clang"] {
        if Command::new(cc).arg("--version").output().map(|o| o.status.success()).unwrap_or(false)
        {
            return Some(cc.to_string());
        }
    }
    None
}
