use std::ffi::CStr;
use std::path::{Path, PathBuf};
use std::process::Command;
use std::ptr;

use mabi_ffi::*;

fn last_error() -> String {
    let p = mabi_last_error_message();
    assert!(!p.is_null());
    unsafe { CStr::from_ptr(p) }.to_string_lossy().into_owned()
}

#[test]
fn containment_and_exposure_round_trip() {
    unsafe {
        let mut universe = ptr::null_mut();
        assert_eq!(mabi_universe_lattice_new(16, &mut universe), MabiStatus::Ok);
        assert_eq!(mabi_universe_len(universe), 256);
        let mut spec = ptr::null_mut();
        assert_eq!(mabi_partition_spec_new(universe, 8.0, 2.0, &mut spec), MabiStatus::Ok);

        // Unit (5, 5) sits in a corner region: contained with probability 1/16.
        let mut p = 0.0;
        assert_eq!(mabi_containment_probability(spec, universe, 5 * 16 + 5, 2.0, &mut p), MabiStatus::Ok);
        assert!((p - 1.0 / 16.0).abs() < 1e-12);

        let probs = [0.3, 0.7];
        let mut q = 0.0;
        let status = mabi_exposure_probability(spec, universe, 7 * 16 + 7, 1, 2.0, probs.as_ptr(), 2, &mut q);
        assert_eq!(status, MabiStatus::Ok);
        assert!((q - 0.7).abs() < 1e-12);

        assert_eq!(
            mabi_partition_spec_new(universe, 4.0, 2.0, &mut spec),
            MabiStatus::Precondition,
            "2r = ℓ must be rejected"
        );
        assert!(last_error().contains("2r"));

        mabi_partition_spec_free(spec);
        mabi_universe_free(universe);
        mabi_universe_free(ptr::null_mut());
    }
}

#[test]
fn exp3_handle_updates() {
    unsafe {
        let mut state = ptr::null_mut();
        assert_eq!(mabi_exp3_new(2, 0.5, 0.0, &mut state), MabiStatus::Ok);
        let mut probs = [0.0; 2];
        assert_eq!(mabi_exp3_probs(state, probs.as_mut_ptr(), 2), MabiStatus::Ok);
        assert_eq!(probs, [0.5, 0.5]);
        assert_eq!(mabi_exp3_update(state, [1.0, 0.0].as_ptr(), 2), MabiStatus::Ok);
        assert_eq!(mabi_exp3_probs(state, probs.as_mut_ptr(), 2), MabiStatus::Ok);
        let expected = 0.5f64.exp() / (0.5f64.exp() + 1.0);
        assert!((probs[0] - expected).abs() < 1e-12);
        assert_eq!(mabi_exp3_probs(state, probs.as_mut_ptr(), 3), MabiStatus::InvalidArgument);
        mabi_exp3_free(state);
        assert_eq!(mabi_exp3_new(0, 0.5, 0.0, &mut state), MabiStatus::InvalidArgument);
    }
}

#[test]
fn estimator_and_quantile() {
    unsafe {
        let rewards = [1.0, 0.5, 0.25];
        let exposed = [0i64, MABI_EXPOSED_NONE, MABI_EXPOSED_ALL];
        let q = [0.5, 0.5, 0.5, 0.5, 1.0, 1.0];
        let mut est = 0.0;
        let status = mabi_ht_ix_estimate(rewards.as_ptr(), exposed.as_ptr(), q.as_ptr(), 3, 2, 0, 0.0, &mut est);
        assert_eq!(status, MabiStatus::Ok);
        assert!((est - (2.0 + 0.25) / 3.0).abs() < 1e-12);
        let bad = [5i64, 0, 0];
        let status = mabi_ht_ix_estimate(rewards.as_ptr(), bad.as_ptr(), q.as_ptr(), 3, 2, 0, 0.0, &mut est);
        assert_eq!(status, MabiStatus::InvalidArgument);

        let values = [3.0, 1.0, 2.0, 4.0];
        let mut v = 0.0;
        assert_eq!(mabi_quantile(values.as_ptr(), 4, 0.5, &mut v), MabiStatus::Ok);
        assert!((v - 2.5).abs() < 1e-12);
        assert_eq!(mabi_quantile(values.as_ptr(), 4, 1.5, &mut v), MabiStatus::InvalidArgument);

        let mut shares = [0.0; 2];
        assert_eq!(mabi_arm_shares([0usize, 1, 1, 1].as_ptr(), 4, 2, shares.as_mut_ptr()), MabiStatus::Ok);
        assert_eq!(shares, [0.25, 0.75]);
    }
}

#[test]
fn null_pointers_are_reported() {
    unsafe {
        assert_eq!(mabi_universe_lattice_new(4, ptr::null_mut()), MabiStatus::NullPointer);
        assert!(last_error().contains("out"));
        let mut p = 0.0;
        let status = mabi_containment_probability(ptr::null(), ptr::null(), 0, 1.0, &mut p);
        assert_eq!(status, MabiStatus::NullPointer);
        assert_eq!(mabi_universe_len(ptr::null()), 0);
        assert_eq!(mabi_quantile(ptr::null(), 0, 0.5, &mut p), MabiStatus::InvalidArgument);
    }
    assert!((mabi_sup_distance(0.0, 0.0, 1.0, -3.0) - 3.0).abs() < 1e-15);
    let v = unsafe { CStr::from_ptr(mabi_version()) };
    assert_eq!(v.to_str().unwrap(), env!("CARGO_PKG_VERSION"));
}

fn header() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("include/mabi.h")
}

fn c_compiler() -> Option<String> {
    let cc = std::env::var("CC").unwrap_or_else(|_| "cc".into());
    Command::new(&cc).arg("--version").output().ok().filter(|o| o.status.success()).map(|_| cc)
}

#[test]
fn header_declares_every_export() {
    let text = std::fs::read_to_string(header()).unwrap();
    for name in [
        "mabi_last_error_message",
        "mabi_universe_lattice_new",
        "mabi_partition_spec_new",
        "mabi_containment_probability",
        "mabi_exposure_probability",
        "mabi_ht_ix_estimate",
        "mabi_exp3_update",
        "mabi_quantile",
        "MABI_STATUS_PRECONDITION",
    ] {
        assert!(text.contains(name), "{name} missing from header");
    }
}

const C_PROGRAM: &str = r#"
#include <math.h>
#include <stdio.h>
#include "mabi.h"

int main(void) {
    MabiUniverse *u = NULL;
    MabiPartitionSpec *s = NULL;
    double p = 0.0;
    if (mabi_universe_lattice_new(16, &u) != MABI_STATUS_OK) return 1;
    if (mabi_partition_spec_new(u, 8.0, 2.0, &s) != MABI_STATUS_OK) return 2;
    if (mabi_containment_probability(s, u, 7 * 16 + 6, 2.0, &p) != MABI_STATUS_OK) return 3;
    if (fabs(p - 0.25) > 1e-12) return 4;
    if (mabi_partition_spec_new(u, 1.0, 1.0, &s) != MABI_STATUS_PRECONDITION) return 5;
    if (mabi_last_error_message() == NULL) return 6;
    mabi_partition_spec_free(s);
    mabi_universe_free(u);
    printf("ok\n");
    return 0;
}
"#;

#[test]
fn header_compiles_as_c() {
    let Some(cc) = c_compiler() else {
        eprintln!("no C compiler; skipping");
        return;
    };
    let dir = tempfile::tempdir().unwrap();
    let src = dir.path().join("check.c");
    std::fs::write(&src, C_PROGRAM).unwrap();
    let include = header().parent().unwrap().to_path_buf();
    let status = Command::new(&cc)
        .args(["-std=c99", "-Wall", "-Werror", "-fsyntax-only", "-I"])
        .arg(&include)
        .arg(&src)
        .status()
        .unwrap();
    assert!(status.success(), "header failed to compile");

    // Link against the static library when cargo has produced it next to
    // this test's deps directory.
    let exe = std::env::current_exe().unwrap();
    let profile_dir = exe.parent().and_then(Path::parent).unwrap();
    let lib = profile_dir.join("libmabi_ffi.a");
    if !lib.exists() {
        eprintln!("{} not built; skipping link step", lib.display());
        return;
    }
    let bin = dir.path().join("check");
    let out = Command::new(&cc)
        .arg("-I")
        .arg(&include)
        .arg(&src)
        .arg(&lib)
        .args(["-lpthread", "-ldl", "-lm", "-o"])
        .arg(&bin)
        .output()
        .unwrap();
    assert!(out.status.success(), "link failed: {}", String::from_utf8_lossy(&out.stderr));
    let run = Command::new(&bin).output().unwrap();
    assert!(run.status.success(), "C program exited with {:?}", run.status.code());
    assert_eq!(String::from_utf8_lossy(&run.stdout).trim(), "ok");
}
