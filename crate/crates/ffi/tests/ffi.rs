use std::ffi::{CStr, CString};
use std::ptr;

use commeco_ffi::*;

fn last_error() -> String {
    let p = commeco_last_error();
    assert!(!p.is_null());
    unsafe { CStr::from_ptr(p) }.to_string_lossy().into_owned()
}

/// Two coupled AR(1) series with small deterministic wiggle.
fn linear_series(t: usize) -> Vec<f64> {
    let mut x = [1.0f64, 2.0];
    let mut out = vec![0.0; 2 * t];
    for w in 0..t {
        out[w] = x[0];
        out[t + w] = x[1];
        let e = ((w as f64) * 1.7).sin() * 0.3;
        let e2 = ((w as f64) * 0.9).cos() * 0.3;
        x = [1.0 + 0.5 * x[0] + 0.2 * x[1] + e, 1.5 + 0.1 * x[0] + 0.4 * x[1] + e2];
    }
    out
}

#[test]
fn smap_fit_and_episode_roundtrip() {
    let t = 60;
    let data = linear_series(t);
    let mut j = ptr::null_mut();
    let s = unsafe { commeco_smap_fit(data.as_ptr(), 2, t, 0.0, 0.5, 0.0, &mut j) };
    assert_eq!(s, CommecoStatus::Ok);
    unsafe {
        assert_eq!(commeco_jacobians_dim(j), 2);
        let len = commeco_jacobians_len(j);
        assert_eq!(len, t - 1);
        let (mut week, mut v) = (0usize, 0.0f64);
        assert_eq!(commeco_jacobians_get(j, 0, 0, 1, &mut week, &mut v), CommecoStatus::Ok);
        assert_eq!(week, 1);
        // θ = 0 gives one global linear map, identical at every step.
        let (mut w2, mut v2) = (0usize, 0.0f64);
        commeco_jacobians_get(j, len - 1, 0, 1, &mut w2, &mut v2);
        assert!((v - v2).abs() < 1e-9);
        assert_eq!(
            commeco_jacobians_get(j, len, 0, 0, &mut week, &mut v),
            CommecoStatus::InvalidArgument
        );
        assert!(last_error().contains("out of range"));

        let mut e = ptr::null_mut();
        assert_eq!(commeco_episodes_extract(j, &mut e), CommecoStatus::Ok);
        let n = commeco_episodes_len(e);
        assert!(n >= 1);
        let mut total = 0;
        for k in 0..n {
            let mut ep = std::mem::zeroed::<CommecoEpisode>();
            assert_eq!(commeco_episodes_get(e, k, &mut ep), CommecoStatus::Ok);
            assert_ne!(ep.target, ep.source);
            assert!(ep.sign == 1 || ep.sign == -1);
            total += ep.duration;
        }
        // Constant signs: one episode per off-diagonal entry spanning every step.
        assert_eq!(total, 2 * len);
        commeco_episodes_free(e);
        commeco_jacobians_free(j);
    }
}

#[test]
fn null_and_invalid_arguments_are_reported() {
    let mut j = ptr::null_mut();
    let s = unsafe { commeco_smap_fit(ptr::null(), 2, 10, 0.0, 0.5, 0.0, &mut j) };
    assert_eq!(s, CommecoStatus::NullPointer);
    assert!(last_error().contains("null"));
    let data = vec![1.0; 20];
    let s = unsafe { commeco_smap_fit(data.as_ptr(), 2, 10, 0.0, 2.0, 0.0, &mut j) };
    assert_ne!(s, CommecoStatus::Ok);
    assert!(j.is_null());
    unsafe {
        assert_eq!(commeco_jacobians_dim(ptr::null()), 0);
        commeco_jacobians_free(ptr::null_mut());
        commeco_episodes_free(ptr::null_mut());
        commeco_pipeline_free(ptr::null_mut());
    }
    let v = unsafe { CStr::from_ptr(commeco_version()) };
    assert_eq!(v.to_str().unwrap(), env!("CARGO_PKG_VERSION"));
}

#[test]
fn pipeline_status_codes() {
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.toml");
    std::fs::write(&bad, "[paths]\nworkdir = \"w\"\n").unwrap();
    let path = CString::new(bad.to_str().unwrap()).unwrap();
    let mut p = ptr::null_mut();
    assert_eq!(unsafe { commeco_pipeline_open(path.as_ptr(), &mut p) }, CommecoStatus::ConfigError);
    assert!(last_error().contains("seed"));

    let good = dir.path().join("good.toml");
    std::fs::write(&good, "seed = 1\n[paths]\nworkdir = \"w\"\n").unwrap();
    let path = CString::new(good.to_str().unwrap()).unwrap();
    assert_eq!(unsafe { commeco_pipeline_open(path.as_ptr(), &mut p) }, CommecoStatus::Ok);
    let stage = CString::new("panel").unwrap();
    let mut fresh = -1;
    let s = unsafe { commeco_pipeline_run(p, stage.as_ptr(), false, &mut fresh) };
    assert_eq!(s, CommecoStatus::DependencyError);
    assert!(last_error().contains("smap") || last_error().contains("run `"));
    let unknown = CString::new("nope").unwrap();
    assert_eq!(
        unsafe { commeco_pipeline_run(p, unknown.as_ptr(), false, ptr::null_mut()) },
        CommecoStatus::InvalidArgument
    );
    unsafe { commeco_pipeline_free(p) };
}

#[test]
fn header_declares_the_exported_api() {
    let header = std::fs::read_to_string(concat!(env!("CARGO_MANIFEST_DIR"), "/include/commeco.h")).unwrap();
    for sym in [
        "commeco_last_error",
        "commeco_smap_fit",
        "commeco_jacobians_get",
        "commeco_episodes_extract",
        "commeco_pipeline_open",
        "commeco_pipeline_run",
        "COMMECO_STATUS_DEPENDENCY_ERROR = 3",
        "typedef struct CommecoJacobians CommecoJacobians;",
    ] {
        assert!(header.contains(sym), "header lacks {sym}");
    }
}

/// Compiles and runs a C program against the header and static library
/// when a C compiler is on the path.
#[test]
fn c_program_links_and_runs() {
    let Ok(cc) = which_cc() else {
        eprintln!("no C compiler; skipping");
        return;
    };
    let manifest = std::path::Path::new(env!("CARGO_MANIFEST_DIR"));
    let target = std::env::current_exe().unwrap().parent().unwrap().parent().unwrap().to_path_buf();
    let lib = target.join("libcommeco_ffi.a");
    if !lib.exists() {
        eprintln!("{} not built; skipping", lib.display());
        return;
    }
    let dir = tempfile::tempdir().unwrap();
    let exe = dir.path().join("smoke");
    let status = std::process::Command::new(cc)
        .arg(manifest.join("tests/c/smoke.c"))
        .arg("-I")
        .arg(manifest.join("include"))
        .arg(&lib)
        .args(["-lpthread", "-ldl", "-lm", "-o"])
        .arg(&exe)
        .status()
        .unwrap();
    assert!(status.success(), "C compilation failed");
    let out = std::process::Command::new(&exe).output().unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(String::from_utf8_lossy(&out.stdout).starts_with("steps=39 episodes="));
}

fn which_cc() -> Result<&'static str, ()> {
    ["cc", "gcc", "clang"]
        .into_iter()
        .find(|c| std::process::Command::new(c).arg("--version").output().is_ok_and(|o| o.status.success()))
        .ok_or(())
}
