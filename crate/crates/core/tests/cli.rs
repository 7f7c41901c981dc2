//! End-to-end runs of the binary: exit codes, manifests and output files.

use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn cli(out: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_levy-rbdsde"))
        .arg("--out")
        .arg(out)
        .args(args)
        .output()
        .expect("binary runs")
}

fn manifest(out: &Path) -> toml::Table {
    fs::read_to_string(out.join("manifest.toml")).unwrap().parse().unwrap()
}

#[test]
fn scenarios_lists_the_catalogue() {
    let out = Command::new(env!("CARGO_BIN_EXE_levy-rbdsde")).arg("scenarios").output().unwrap();
    assert!(out.status.success());
    let text = String::from_utf8(out.stdout).unwrap();
    assert!(text.contains("deterministic-obstacle"));
    assert!(text.contains("poisson-example"));
}

#[test]
fn scenario_show_prints_a_loadable_config() {
    let tmp = tempfile::tempdir().unwrap();
    let show = Command::new(env!("CARGO_BIN_EXE_levy-rbdsde"))
        .args(["scenarios", "--show", "linear-ode"])
        .output()
        .unwrap();
    assert!(show.status.success());
    let path = tmp.path().join("linear.toml");
    fs::write(&path, &show.stdout).unwrap();
    let out = cli(&tmp.path().join("run"), &["--config", path.to_str().unwrap(), "--set", "grid.n_steps=50", "solve"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let m = manifest(&tmp.path().join("run"));
    assert_eq!(m["status"].as_str(), Some("ok"));
    assert_eq!(m["config"]["grid"]["n_steps"].as_integer(), Some(50));
}

#[test]
fn solve_writes_outputs_and_manifest() {
    let tmp = tempfile::tempdir().unwrap();
    let out = cli(tmp.path(), &["--scenario", "two-atom-demo", "--set", "monte_carlo.n_paths=300", "solve"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    for name in ["solution.csv", "solution_summary.csv", "report.json", "properties.json", "manifest.toml"] {
        assert!(tmp.path().join(name).exists(), "{name}");
    }
    let m = manifest(tmp.path());
    assert_eq!(m["exit_code"].as_integer(), Some(0));
    assert_eq!(m["seed"].as_integer(), Some(20240601));
    let summary = fs::read_to_string(tmp.path().join("solution_summary.csv")).unwrap();
    assert!(summary.starts_with("node,t,mean_y,sd_y,mean_k,skorokhod\n"));
    assert_eq!(summary.lines().count(), 1 + 201);
}

#[test]
fn invalid_values_exit_with_one_and_name_the_key() {
    let tmp = tempfile::tempdir().unwrap();
    let out = cli(tmp.path(), &["--scenario", "linear-ode", "--set", "monte_carlo.n_paths=0", "solve"]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("monte_carlo.n_paths"));
    let m = manifest(tmp.path());
    assert_eq!(m["status"].as_str(), Some("error"));
    assert_eq!(m["exit_code"].as_integer(), Some(1));
}

#[test]
fn unknown_scenario_exits_with_one() {
    let tmp = tempfile::tempdir().unwrap();
    let out = cli(tmp.path(), &["--scenario", "no-such-thing", "solve"]);
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn nonconvergent_fixed_point_exits_with_two() {
    let tmp = tempfile::tempdir().unwrap();
    let out = cli(
        tmp.path(),
        &["--scenario", "fixed-point", "--set", "solver.max_iter=2", "--set", "monte_carlo.n_paths=100", "solve"],
    );
    assert_eq!(out.status.code(), Some(2), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(String::from_utf8_lossy(&out.stderr).contains("did not converge"));
}

#[test]
fn verify_flags_a_corrupted_solution_with_three() {
    let tmp = tempfile::tempdir().unwrap();
    let run = tmp.path().join("solve");
    let base = ["--scenario", "deterministic-obstacle", "--set", "solver.scheme=\"direct\"", "--set", "grid.n_steps=100"];
    let solved = cli(&run, &[&base[..], &["solve"]].concat());
    assert!(solved.status.success(), "{}", String::from_utf8_lossy(&solved.stderr));

    let clean = cli(&tmp.path().join("clean"), &[&base[..], &["verify", "--solution", run.join("solution.csv").to_str().unwrap()]].concat());
    assert_eq!(clean.status.code(), Some(0), "{}", String::from_utf8_lossy(&clean.stdout));

    // push one value of Y far below the obstacle
    let text = fs::read_to_string(run.join("solution.csv")).unwrap();
    let mut lines: Vec<String> = text.lines().map(String::from).collect();
    let mut cells: Vec<String> = lines[5].split(',').map(String::from).collect();
    cells[3] = "-5.0".into();
    lines[5] = cells.join(",");
    let corrupted = tmp.path().join("corrupted.csv");
    fs::write(&corrupted, lines.join("\n") + "\n").unwrap();

    let out = cli(&tmp.path().join("verify"), &[&base[..], &["verify", "--solution", corrupted.to_str().unwrap()]].concat());
    assert_eq!(out.status.code(), Some(3));
    let stderr = String::from_utf8_lossy(&out.stderr);
    assert!(stderr.contains("obstacle"), "{stderr}");
    let props = fs::read_to_string(tmp.path().join("verify").join("properties.json")).unwrap();
    assert!(props.contains("\"obstacle\""));
}

#[test]
fn sweep_writes_one_monotone_row_per_penalty() {
    let tmp = tempfile::tempdir().unwrap();
    let out = cli(
        tmp.path(),
        &["--scenario", "deterministic-obstacle", "--set", "solver.n_list=[1.0, 2.0, 4.0, 8.0]", "sweep"],
    );
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let text = fs::read_to_string(tmp.path().join("sweep.csv")).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("n,y0,k_terminal,skorokhod,a_priori,gap_to_direct"));
    let y0: Vec<f64> = lines.map(|l| l.split(',').nth(1).unwrap().parse().unwrap()).collect();
    assert_eq!(y0.len(), 4);
    assert!(y0.windows(2).all(|w| w[1] >= w[0]), "{y0:?}");
}

#[test]
fn sweep_without_penalties_is_rejected() {
    let tmp = tempfile::tempdir().unwrap();
    let out = cli(tmp.path(), &["--scenario", "linear-ode", "sweep"]);
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn seed_flag_changes_paths_and_repeats_exactly() {
    let tmp = tempfile::tempdir().unwrap();
    let args = |seed: &'static str| ["--scenario", "two-atom-demo", "--set", "monte_carlo.n_paths=20", "--seed", seed, "simulate"];
    for (dir, seed) in [("a", "1"), ("b", "1"), ("c", "2")] {
        let out = cli(&tmp.path().join(dir), &args(seed));
        assert!(out.status.success());
    }
    let read = |d: &str| fs::read(tmp.path().join(d).join("paths.csv")).unwrap();
    assert_eq!(read("a"), read("b"));
    assert_ne!(read("a"), read("c"));
    // manifests differ only in the output directory
    let strip = |d: &str| -> String {
        fs::read_to_string(tmp.path().join(d).join("manifest.toml"))
            .unwrap()
            .lines()
            .filter(|l| !l.starts_with("dir = "))
            .collect()
    };
    assert_eq!(strip("a"), strip("b"));
}

#[test]
fn reflect_surface_and_example_commands_run() {
    let tmp = tempfile::tempdir().unwrap();
    let small = ["--scenario", "poisson-example", "--set", "monte_carlo.n_paths=200", "--set", "surface.n_paths=64", "--set", "surface.t_points=2", "--set", "surface.x_points=5"];
    for (cmd, file) in [
        ("reflect", "reflected.csv"),
        ("surface", "surface.csv"),
        ("example-poisson", "example_poisson.json"),
        ("basis", "basis.csv"),
    ] {
        let dir = tmp.path().join(cmd);
        let out = cli(&dir, &[&small[..], &[cmd]].concat());
        assert!(out.status.success(), "{cmd}: {}", String::from_utf8_lossy(&out.stderr));
        assert!(dir.join(file).exists(), "{cmd}");
    }
    let surface = fs::read_to_string(tmp.path().join("surface").join("surface.csv")).unwrap();
    assert_eq!(surface.lines().count(), 1 + 2 * 5);
}
