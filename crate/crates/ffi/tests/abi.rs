use std::ffi::{CStr, CString};
use std::path::{Path, PathBuf};
use std::process::Command;
use std::ptr;

use orbitforge_ffi::*;

fn last_error() -> String {
    unsafe { CStr::from_ptr(of_last_error()) }.to_string_lossy().into_owned()
}

fn repo_root() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../..")
}

const IM: OfImParams = OfImParams {
    r: 1.0,
    beta_star: 1.0,
    omega_star: 5.0,
    k: 1.0,
};

#[test]
fn im_control_matches_core() {
    let x = [0.3, -1.2, 2.0];
    let mut u = [0.0; 2];
    assert_eq!(unsafe { of_im_control(&IM, x.as_ptr(), u.as_mut_ptr()) }, OfStatus::Ok);
    let core = orbitforge::plants::im::im_control(
        &orbitforge::plants::im::ImParams::default(),
        &orbitforge::numerics::Vector::from_column_slice(&x),
    );
    assert_eq!(u, [core[0], core[1]]);
    assert_eq!(last_error(), "");
}

#[test]
fn null_and_bad_arguments() {
    let x = [0.0, 0.0, 1.0];
    let mut u = [0.0; 2];
    assert_eq!(unsafe { of_im_control(ptr::null(), x.as_ptr(), u.as_mut_ptr()) }, OfStatus::NullPointer);
    assert!(last_error().contains("params"));
    assert_eq!(unsafe { of_im_control(&IM, x.as_ptr(), u.as_mut_ptr()) }, OfStatus::InvalidArgument);
    let p = OfPendulumParams {
        global: 0,
        gamma1: 5.0,
        gamma2: 0.0,
        theta_star: 2.0,
    };
    let mut v = 0.0;
    assert_eq!(unsafe { of_pendulum_control(&p, x.as_ptr(), &mut v) }, OfStatus::InvalidArgument);
    assert!(last_error().contains("theta_star"));
}

#[test]
fn foc_residual_is_rounding_level() {
    let x = [0.7, -0.4, 3.0];
    let mut r = f64::NAN;
    assert_eq!(unsafe { of_foc_equivalence_residual(&IM, x.as_ptr(), 1.3, &mut r) }, OfStatus::Ok);
    assert!(r < 1e-12, "{r}");
}

#[test]
fn pendulum_control_on_both_designs() {
    let x = [0.2, -0.5];
    let mut u = 0.0;
    let local = OfPendulumParams {
        global: 0,
        gamma1: 5.0,
        gamma2: 0.0,
        theta_star: std::f64::consts::FRAC_PI_4,
    };
    assert_eq!(unsafe { of_pendulum_control(&local, x.as_ptr(), &mut u) }, OfStatus::Ok);
    let p = orbitforge::plants::pendulum::PendulumParams::local(5.0, std::f64::consts::FRAC_PI_4);
    let expected = orbitforge::plants::pendulum::pendulum_control(&p, &orbitforge::numerics::Vector::from_column_slice(&x));
    assert_eq!(u, expected);
    let global = OfPendulumParams { global: 1, gamma1: 20.0, gamma2: 2.0, ..local };
    assert_eq!(unsafe { of_pendulum_control(&global, x.as_ptr(), &mut u) }, OfStatus::Ok);
    assert!(u.is_finite());
}

#[test]
fn verify_reports_violations() {
    let design = CString::new("im_msea").unwrap();
    let mut n = usize::MAX;
    assert_eq!(unsafe { of_verify(design.as_ptr(), 200, 1, &mut n) }, OfStatus::Ok);
    assert_eq!(n, 0);
    let bad = CString::new("im_msea_perturbed").unwrap();
    assert_eq!(unsafe { of_verify(bad.as_ptr(), 200, 1, &mut n) }, OfStatus::AnalysisFailed);
    assert!(n > 0);
    let unknown = CString::new("nope").unwrap();
    assert_eq!(unsafe { of_verify(unknown.as_ptr(), 200, 1, &mut n) }, OfStatus::ConfigError);
}

#[test]
fn scenario_handles_round_trip() {
    let path = CString::new(repo_root().join("configs/im_baseline.toml").to_str().unwrap()).unwrap();
    let mut sc = ptr::null_mut();
    assert_eq!(unsafe { of_scenario_load(path.as_ptr(), &mut sc) }, OfStatus::Ok);
    let mut tr = ptr::null_mut();
    assert_eq!(unsafe { of_scenario_simulate(sc, &mut tr) }, OfStatus::Ok);
    let (mut len, mut dim) = (0, 0);
    assert_eq!(unsafe { of_trajectory_shape(tr, &mut len, &mut dim) }, OfStatus::Ok);
    assert_eq!(dim, 3);
    let (mut t, mut d) = (0.0, 0.0);
    let mut x = [0.0; 3];
    assert_eq!(
        unsafe { of_trajectory_sample(tr, len - 1, &mut t, x.as_mut_ptr(), 3, &mut d) },
        OfStatus::Ok
    );
    assert!((t - 20.0).abs() < 1e-9 && d < 1e-6);
    assert_eq!(
        unsafe { of_trajectory_sample(tr, len, &mut t, x.as_mut_ptr(), 3, &mut d) },
        OfStatus::InvalidArgument
    );
    unsafe {
        of_trajectory_free(tr);
        of_scenario_free(sc);
    }
}

#[test]
fn run_config_status_codes() {
    let dir = tempfile::tempdir().unwrap();
    let out = CString::new(dir.path().to_str().unwrap()).unwrap();
    let ok = CString::new(repo_root().join("configs/im_baseline.toml").to_str().unwrap()).unwrap();
    assert_eq!(unsafe { of_run_config(ok.as_ptr(), out.as_ptr()) }, OfStatus::Ok);
    assert!(dir.path().join("trajectory.csv").exists());
    let origin = CString::new(repo_root().join("configs/im_origin_rejected.toml").to_str().unwrap()).unwrap();
    assert_eq!(unsafe { of_run_config(origin.as_ptr(), out.as_ptr()) }, OfStatus::InvalidArgument);
    assert!(last_error().contains("initial flux at unstable origin"));
}

// Compiles a C program against the generated header and the static library.
#[test]
fn c_program_links_against_header() {
    let cc = std::env::var("CC").unwrap_or_else(|_| "cc".into());
    if Command::new(&cc).arg("--version").output().is_err() {
        eprintln!("no C compiler; skipping");
        return;
    }
    let exe = std::env::current_exe().unwrap();
    let profile_dir = exe.parent().and_then(Path::parent).unwrap();
    let lib = profile_dir.join("liborbitforge_ffi.a");
    assert!(lib.exists(), "{} missing", lib.display());
    let crate_dir = Path::new(env!("CARGO_MANIFEST_DIR"));
    let tmp = tempfile::tempdir().unwrap();
    let bin = tmp.path().join("smoke");
    let status = Command::new(&cc)
        .arg("-std=c99")
        .arg("-Wall")
        .arg("-Werror")
        .arg(crate_dir.join("tests/c/smoke.c"))
        .arg("-I")
        .arg(crate_dir.join("include"))
        .arg(&lib)
        .args(["-lpthread", "-ldl", "-lm", "-o"])
        .arg(&bin)
        .status()
        .unwrap();
    assert!(status.success());
    let run = Command::new(&bin).output().unwrap();
    assert!(run.status.success(), "exit {:?}", run.status.code());
    assert_eq!(String::from_utf8_lossy(&run.stdout).trim(), "ok");
}
