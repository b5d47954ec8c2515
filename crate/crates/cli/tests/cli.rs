use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use pucci_core::io::{read_field_csv, write_field_csv};
use pucci_core::{GridField, GridSpec};
use serde_json::Value;

fn lab(dir: &Path, config: &str, out: &str, envs: &[(&str, &str)]) -> Output {
    let cfg = dir.join(format!("{out}.cfg"));
    fs::write(&cfg, config).unwrap();
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_pucci-lab"));
    cmd.arg("--config").arg(&cfg).arg("--out").arg(dir.join(out)).arg("--quiet");
    for (k, v) in envs {
        cmd.env(k, v);
    }
    cmd.output().unwrap()
}

fn manifest(dir: &Path) -> Value {
    serde_json::from_str(&fs::read_to_string(dir.join("manifest.json")).unwrap()).unwrap()
}

fn without_run_specifics(mut m: Value) -> Value {
    let obj = m.as_object_mut().unwrap();
    obj.remove("timings");
    obj["config"].as_object_mut().unwrap().remove("out");
    m
}

#[test]
fn verify_passes_every_suite() {
    let tmp = tempfile::tempdir().unwrap();
    let out = lab(tmp.path(), "command = verify\n", "v", &[]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let m = manifest(&tmp.path().join("v"));
    for suite in ["operator-property", "barrier-residual", "J_r", "slope-fit"] {
        assert_eq!(m["verdicts"][suite], "PASS", "{suite}");
    }
    assert_eq!(m["status"], "pass");
    assert_eq!(m["config_hash"].as_str().unwrap().len(), 64);
}

#[test]
fn laplacian_solve_reproduces_harmonic_datum() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = "command = solve\ngrid.nx = 17\noperator = laplacian\ndatum = harmonic\ntol = 1e-10\n";
    let out = lab(tmp.path(), cfg, "s", &[]);
    assert_eq!(out.status.code(), Some(0));
    let u = read_field_csv(&tmp.path().join("s/field.csv")).unwrap();
    let exact = GridField::from_fn(*u.spec(), pucci_core::fixtures::harmonic_quadratic);
    assert!(u.max_abs_diff(&exact).unwrap() <= 1e-10);
    let res = fs::read_to_string(tmp.path().join("s/residuals.csv")).unwrap();
    assert!(res.starts_with("iter,residual\n"));
}

#[test]
fn diagnose_without_sign_change_is_degenerate() {
    let tmp = tempfile::tempdir().unwrap();
    let field = tmp.path().join("positive.csv");
    write_field_csv(&field, &GridField::from_fn(GridSpec::unit(33).unwrap(), |p| 1.0 + p.x)).unwrap();
    let cfg = format!("command = diagnose\nfield = {}\n", field.display());
    let out = lab(tmp.path(), &cfg, "d", &[]);
    assert_eq!(out.status.code(), Some(1));
    let m = manifest(&tmp.path().join("d"));
    assert_eq!(m["verdicts"]["sign_change"], "FAIL");
    for name in ["regular_points", "jr_monotone", "alpha_beta", "flatness_decay", "eps_monotone"] {
        assert_eq!(m["verdicts"][name], "DEGENERATE", "{name}");
    }
}

#[test]
fn configuration_errors_exit_2_with_line_numbers() {
    let tmp = tempfile::tempdir().unwrap();
    let out = lab(tmp.path(), "command = solve\n# comment\nell.lambda = 1.5\n", "bad", &[]);
    assert_eq!(out.status.code(), Some(2));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("line 3") && err.contains("ell.lambda"), "{err}");
    assert!(!tmp.path().join("bad").exists());

    let out = lab(tmp.path(), "command = solve\ngrid.size = 9\n", "bad2", &[]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("unknown key `grid.size`"));
}

#[test]
fn runtime_errors_exit_2_and_still_write_the_manifest() {
    let tmp = tempfile::tempdir().unwrap();
    let out = lab(tmp.path(), "command = diagnose\nfield = does/not/exist.csv\n", "r", &[]);
    assert_eq!(out.status.code(), Some(2));
    let m = manifest(&tmp.path().join("r"));
    assert_eq!(m["status"], "error");
    assert!(m["error"].as_str().unwrap().contains("does/not/exist.csv"));
}

#[test]
fn runs_are_deterministic_and_self_describing() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = "command = sweep\ngrid.nx = 33\neps_list = 0.2,0.1\nmethod = newton\ntol = 1e-10\nmax_iter = 100\n";
    assert_eq!(lab(tmp.path(), cfg, "a", &[]).status.code(), Some(0));
    assert_eq!(lab(tmp.path(), cfg, "b", &[("PUCCI_LAB_THREADS", "1")]).status.code(), Some(0));
    let (a, b) = (tmp.path().join("a"), tmp.path().join("b"));
    for f in ["field.csv", "sweep.csv"] {
        assert_eq!(fs::read(a.join(f)).unwrap(), fs::read(b.join(f)).unwrap(), "{f}");
    }
    let ma = manifest(&a);
    assert_eq!(without_run_specifics(ma.clone()), without_run_specifics(manifest(&b)));

    let listed: Vec<&str> = ma["outputs"].as_array().unwrap().iter().map(|v| v.as_str().unwrap()).collect();
    for entry in fs::read_dir(&a).unwrap() {
        let name = entry.unwrap().file_name().into_string().unwrap();
        if name != "manifest.json" {
            assert!(listed.contains(&name.as_str()), "{name} not listed");
        }
    }
    for name in &listed {
        assert!(a.join(name).exists(), "{name} listed but missing");
    }
}

#[test]
fn thread_override_is_validated() {
    let tmp = tempfile::tempdir().unwrap();
    let out = lab(tmp.path(), "command = verify\n", "t", &[("PUCCI_LAB_THREADS", "zero")]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("PUCCI_LAB_THREADS"));
}

#[test]
fn rediagnosing_a_stored_field_reproduces_verdicts() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = "command = diagnose\ngrid.nx = 65\nmethod = newton\nnested = true\ntol = 1e-9\nmax_iter = 100\n\
               radii = 0.05,0.1,0.15\nflatness.scales = 0.15,0.1\nfit.radii = 0.15\n";
    let first = lab(tmp.path(), cfg, "first", &[]);
    assert_ne!(first.status.code(), Some(2), "{}", String::from_utf8_lossy(&first.stderr));
    let stored = tmp.path().join("first/field.csv");
    let again = format!("{cfg}field = {}\n", stored.display());
    let second = lab(tmp.path(), &again, "second", &[]);
    assert_eq!(first.status.code(), second.status.code());
    let (m1, m2) = (manifest(&tmp.path().join("first")), manifest(&tmp.path().join("second")));
    let mut v1 = m1["verdicts"].as_object().unwrap().clone();
    v1.remove("sweep_complete");
    assert_eq!(&v1, m2["verdicts"].as_object().unwrap());
    assert_eq!(m2["verdicts"]["sign_change"], "PASS");
    for f in ["curve.csv", "jr_series.csv", "diagnostics.csv"] {
        assert_eq!(
            fs::read(tmp.path().join("first").join(f)).unwrap(),
            fs::read(tmp.path().join("second").join(f)).unwrap(),
            "{f}"
        );
    }
}
