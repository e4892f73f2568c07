use std::fs;
use std::path::PathBuf;
use std::process::{Command, Output};

fn ppcns(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_ppcns")).args(args).output().expect("spawn ppcns")
}

fn scratch(name: &str) -> PathBuf {
    let d = std::env::temp_dir().join(format!("ppcns-cli-{}-{name}", std::process::id()));
    let _ = fs::remove_dir_all(&d);
    fs::create_dir_all(&d).unwrap();
    d
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

#[test]
fn lists_scenarios() {
    let o = ppcns(&["list-scenarios"]);
    assert!(o.status.success());
    let s = stdout(&o);
    for name in ["lax", "double-rarefaction", "sedov-desk", "double-mach-desk", "mms"] {
        assert!(s.contains(name), "missing {name}");
    }
}

#[test]
fn usage_errors_exit_1() {
    assert_eq!(ppcns(&[]).status.code(), Some(1));
    assert_eq!(ppcns(&["run", "--degree", "two"]).status.code(), Some(1));
    assert_eq!(ppcns(&["--help"]).status.code(), Some(0));
}

#[test]
fn config_errors_exit_1() {
    let d = scratch("cfg");
    let bad = d.join("bad.toml");
    fs::write(&bad, "[run]\nscenario = \"lax\"\nbogus = 3\n").unwrap();
    let o = ppcns(&["run", bad.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&o.stderr).contains("bogus"));
    assert_eq!(ppcns(&["run", "--scenario", "no-such-thing"]).status.code(), Some(1));
    assert_eq!(ppcns(&["run", d.join("missing.toml").to_str().unwrap()]).status.code(), Some(1));
    assert_eq!(ppcns(&["run"]).status.code(), Some(1));
}

#[test]
fn numerical_failure_exits_2() {
    let d = scratch("num");
    let cfg = d.join("floor.toml");
    // a floor above every cell average cannot be satisfied
    fs::write(&cfg, "[run]\nscenario = \"periodic-smooth\"\n[numerics]\nfloor = 100.0\n").unwrap();
    assert_eq!(ppcns(&["run", cfg.to_str().unwrap()]).status.code(), Some(2));
}

#[test]
fn run_writes_profiles_and_log() {
    let d = scratch("run");
    let out = d.join("out");
    let o = ppcns(&[
        "run",
        "--scenario",
        "double-rarefaction",
        "--dx",
        "0.0625",
        "--end-time",
        "0.05",
        "--output",
        out.to_str().unwrap(),
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let csv = fs::read_to_string(out.join("final.csv")).unwrap();
    assert!(csv.starts_with("x,rho,u,p,e\n"));
    assert_eq!(csv.lines().count(), 33);
    let log = fs::read_to_string(out.join("log.csv")).unwrap();
    assert!(log.starts_with("step,t,dt,halvings,doublings,min_rho,min_rhoe,total_rho,total_mx,total_my,total_E"));
    let last = log.lines().last().unwrap();
    let t: f64 = last.split(',').nth(1).unwrap().parse().unwrap();
    assert_eq!(t, 0.05);
}

#[test]
fn run_2d_writes_vtk() {
    let d = scratch("vtk");
    let cfg = d.join("sedov.toml");
    let out = d.join("out");
    fs::write(
        &cfg,
        format!(
            "[run]\nscenario = \"sedov-desk\"\ndx = 0.1375\nmax_steps = 2\n[output]\ndir = \"{}\"\n",
            out.display()
        ),
    )
    .unwrap();
    let o = ppcns(&["run", cfg.to_str().unwrap()]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    assert!(stdout(&o).contains("stopped by max_steps"));
    let vtk = fs::read_to_string(out.join("final.vtk")).unwrap();
    assert!(vtk.contains("DIMENSIONS 8 8 1"));
    assert!(fs::read_to_string(out.join("final.csv")).unwrap().starts_with("x,y,rho,p,e,umag\n"));
}

#[test]
fn verify_matrix_reports_m_matrix() {
    let o = ppcns(&["verify-matrix", "--scenario", "mms", "--dx", "0.25"]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let s = stdout(&o);
    assert!(s.contains("min entry of inverse"));
    assert!(s.contains("verdict"));
}

#[test]
fn convergence_prints_rates() {
    let o = ppcns(&[
        "convergence",
        "--scenario",
        "mms",
        "--degree",
        "1",
        "--end-time",
        "1e-4",
        "--fixed-dt",
        "5e-5",
        "--meshes",
        "0.25,0.125",
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let s = stdout(&o);
    let lines: Vec<&str> = s.lines().collect();
    assert_eq!(lines[0], "dx,steps,err_rho,rate_rho,err_m,rate_m,err_E,rate_E");
    assert_eq!(lines.len(), 3);
    assert!(lines[1].contains(",-,"));
    assert_eq!(lines[2].split(',').count(), 8);
    assert_eq!(ppcns(&["convergence", "--scenario", "mms", "--meshes", "0.25"]).status.code(), Some(1));
}
