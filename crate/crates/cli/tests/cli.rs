use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;
use sni_core::fem::{l2_relative_error, solve_direct};
use sni_core::schwarz::{sni_run, LocalSolverKind};
use sni_core::verify::{test_mesh, test_problem};
use sni_core::{Mesh, ProblemSpec, SniConfig};

fn sni(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_sni"))
        .args(args)
        .env_remove("SNI_THREADS")
        .output()
        .unwrap()
}

fn stdout_json(out: &Output) -> Value {
    serde_json::from_slice(&out.stdout).unwrap()
}

fn read_json(path: &Path) -> Value {
    serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap()
}

fn error_line(out: &Output) -> String {
    let text = String::from_utf8_lossy(&out.stderr).to_string();
    assert_eq!(text.trim_end().lines().count(), 1, "{text}");
    text.trim_end().to_string()
}

/// Writes a shape file with a sampled problem and returns its path.
fn shape(dir: &Path, seed: &str, equation: &str) -> String {
    let path = dir.join(format!("shape_{equation}_{seed}.json"));
    let p = path.to_str().unwrap();
    let out = sni(&["gen-shape", "--n-min", "150", "--n-max", "400", "--seed", seed, "--equation", equation, "--out", p]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    p.to_string()
}

#[test]
fn gen_shape_writes_polygon_mesh_and_problem() {
    let dir = tempfile::tempdir().unwrap();
    let p = shape(dir.path(), "4", "darcy");
    let v = read_json(p.as_ref());
    let mesh: Mesh = serde_json::from_value(v["mesh"].clone()).unwrap();
    mesh.validate().unwrap();
    assert!((150..=400).contains(&mesh.n_vertices()));
    assert!(v["polygon"]["vertices"].as_array().unwrap().len() >= 3);
    let spec: ProblemSpec = serde_json::from_value(v["spec"].clone()).unwrap();
    spec.validate(&mesh).unwrap();
    assert_eq!(v["flags"]["seed"], 4);
    // the same seed reproduces the same file
    let again = dir.path().join("again.json");
    let out = sni(&["gen-shape", "--n-min", "150", "--n-max", "400", "--seed", "4", "--equation", "darcy", "--out", again.to_str().unwrap()]);
    assert!(out.status.success());
    let w = read_json(&again);
    for key in ["polygon_seed", "polygon", "mesh", "spec"] {
        assert_eq!(v[key], w[key], "{key}");
    }
}

#[test]
fn sni_solve_matches_direct_and_echoes_flags() {
    let dir = tempfile::tempdir().unwrap();
    let s = shape(dir.path(), "1", "laplace_dirichlet");
    let sol = dir.path().join("sni.json");
    let direct = dir.path().join("direct.json");
    let out = sni(&["solve", "--method", "sni", "--mesh", &s, "--problem", &s, "--k", "4", "--depth", "2", "--tau", "0.2", "--tol", "1e-10", "--out", sol.to_str().unwrap()]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    assert_eq!(stdout_json(&out)["converged"], true);
    let out = sni(&["solve", "--method", "direct", "--mesh", &s, "--problem", &s, "--out", direct.to_str().unwrap()]);
    assert!(out.status.success());

    let v = read_json(&sol);
    assert_eq!(v["flags"]["schwarz"]["k"], 4);
    assert_eq!(v["flags"]["schwarz"]["tau"], 0.2);
    assert_eq!(v["flags"]["method"], "sni");
    for key in ["update_norms", "rho_hat", "overlap_factor", "timings"] {
        assert!(v["diagnostics"].get(key).is_some(), "{key}");
    }

    let u: Vec<f64> = serde_json::from_value(v["u"].clone()).unwrap();
    let d: Vec<f64> = serde_json::from_value(read_json(&direct)["u"].clone()).unwrap();
    assert!(l2_relative_error(&u, &d).unwrap() < 1e-6);

    let out = sni(&["error", "--pred", sol.to_str().unwrap(), "--truth", direct.to_str().unwrap()]);
    let e = stdout_json(&out)["l2_relative_error"].as_f64().unwrap();
    assert_eq!(e, l2_relative_error(&u, &d).unwrap());
}

#[test]
fn error_on_identical_files_is_zero() {
    let dir = tempfile::tempdir().unwrap();
    let f = dir.path().join("u.json");
    std::fs::write(&f, "[1.0, -2.0, 3.5]").unwrap();
    let p = f.to_str().unwrap();
    let out = sni(&["error", "--pred", p, "--truth", p]);
    assert!(out.status.success());
    assert_eq!(stdout_json(&out)["l2_relative_error"].as_f64(), Some(0.0));
    let out = sni(&["--format", "csv", "error", "--pred", p, "--truth", p]);
    assert_eq!(String::from_utf8_lossy(&out.stdout), "l2_relative_error\n0.0\n");
}

#[test]
fn unconverged_solve_exits_nonzero() {
    let dir = tempfile::tempdir().unwrap();
    let s = shape(dir.path(), "2", "laplace_dirichlet");
    let sol = dir.path().join("u.json");
    let out = sni(&["solve", "--mesh", &s, "--problem", &s, "--k", "4", "--max-iter", "3", "--out", sol.to_str().unwrap()]);
    assert!(!out.status.success());
    // the partial result is still written
    let v = read_json(&sol);
    assert_eq!(v["converged"], false);
    assert_eq!(v["diagnostics"]["iterations"], 3);
}

#[test]
fn invalid_inputs_fail_with_one_prefixed_line() {
    let dir = tempfile::tempdir().unwrap();
    let s = shape(dir.path(), "3", "laplace_dirichlet");
    let o = dir.path().join("o.json");
    let o = o.to_str().unwrap();
    let cases: Vec<(Vec<&str>, &str)> = vec![
        (vec!["solve", "--mesh", &s, "--problem", &s, "--k", "4", "--tau", "0.25", "--out", o], "error[config]:"),
        (vec!["solve", "--mesh", &s, "--problem", &s, "--local", "newton", "--out", o], "error[config]:"),
        (vec!["solve", "--mesh", "/nonexistent.json", "--problem", &s, "--out", o], "error[io]:"),
        (vec!["solve", "--mesh", &s, "--problem", &s, "--init", "file:/nonexistent", "--out", o], "error[io]:"),
        (vec!["solve-heat", "--mesh", &s, "--problem", &s, "--out", o], "error[config]:"),
        (vec!["gen-data", "--equation", "wave", "--shapes", "1", "--per-shape", "1", "--out-dir", o], "error[config]:"),
        (vec!["verify", "--suite", "everything"], "error[config]:"),
        (vec!["sweep", "--param", "k", "--values", "2.5"], "error[config]:"),
        (vec!["solve", "--frobnicate"], "error[usage]:"),
    ];
    for (args, prefix) in cases {
        let out = sni(&args);
        assert!(!out.status.success(), "{args:?}");
        let line = error_line(&out);
        assert!(line.starts_with(prefix), "{args:?}: {line}");
    }
    let bad = dir.path().join("bad.json");
    std::fs::write(&bad, "{\"vertices\": [[0,0],[1,0],[0,1]], \"triangles\": [[0,1,7]], \"boundary_edges\": []}").unwrap();
    let out = sni(&["solve", "--mesh", bad.to_str().unwrap(), "--problem", &s, "--out", o]);
    assert!(error_line(&out).starts_with("error[invalid-mesh]:"));
}

#[test]
fn threads_come_from_the_environment() {
    let out = Command::new(env!("CARGO_BIN_EXE_sni"))
        .args(["verify", "--suite", "all"])
        .env("SNI_THREADS", "0")
        .output()
        .unwrap();
    assert!(!out.status.success());
    assert!(error_line(&out).starts_with("error[config]: invalid configuration: --threads"));
}

#[test]
fn tau_sweep_matches_direct_runs() {
    let dir = tempfile::tempdir().unwrap();
    let csv = dir.path().join("sweep.csv");
    let out = sni(&[
        "--format", "csv", "sweep", "--param", "tau", "--values", "0.05,0.1,0.2", "--k", "4", "--depth", "2",
        "--seed", "11", "--n-min", "150", "--n-max", "400", "--out", csv.to_str().unwrap(),
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let text = std::fs::read_to_string(&csv).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("value,iterations,final_error,wall_time,converged"));
    let rows: Vec<Vec<f64>> = lines.map(|l| l.split(',').map(|x| x.parse().unwrap()).collect()).collect();
    assert_eq!(rows.len(), 3);

    // independent runs of the library on the same problem
    let (mesh, _) = test_mesh(11, 150, 400).unwrap();
    let spec = test_problem(sni_core::fem::Equation::LaplaceDirichlet, &mesh, 11).unwrap();
    let truth = solve_direct(&mesh, &spec).unwrap();
    for (row, tau) in rows.iter().zip([0.05, 0.1, 0.2]) {
        let run = sni_run(SniConfig::new(4, 2, tau, LocalSolverKind::Exact).unwrap(), &mesh, &spec).unwrap();
        assert_eq!(row[0], tau);
        assert_eq!(row[1], run.diagnostics.iterations as f64);
        let err = l2_relative_error(&run.u, &truth).unwrap();
        assert!((row[2] - err).abs() <= 1e-6 * err, "{} vs {err}", row[2]);
        assert_eq!(row[4], 1.0);
    }
    // a larger step converges in no more iterations
    assert!(rows.windows(2).all(|w| w[1][1] <= w[0][1]));
}

#[test]
fn gen_data_is_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    let run = |name: &str| {
        let d = dir.path().join(name);
        let out = sni(&["--threads", "2", "gen-data", "--equation", "laplace_mixed", "--shapes", "2", "--per-shape", "2", "--seed", "5", "--edge-length", "0.15", "--out-dir", d.to_str().unwrap()]);
        assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
        (stdout_json(&out), read_json(&d.join("manifest.json")))
    };
    let (a, ma) = run("a");
    let (b, _) = run("b");
    assert_eq!(a["sha256"], b["sha256"]);
    assert_eq!(a["count"], 4);
    assert_eq!(ma["sha256"], a["sha256"]);
    assert_eq!(ma["seed"], 5);
}

#[test]
fn space_time_solve_matches_rollout() {
    let dir = tempfile::tempdir().unwrap();
    let s = shape(dir.path(), "6", "heat");
    let st = dir.path().join("st.json");
    let out = sni(&["solve-heat", "--mesh", &s, "--problem", &s, "--k-spatial", "2", "--k-temporal", "2", "--delta-t-overlap", "1", "--tol", "1e-10", "--out", st.to_str().unwrap()]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let v = read_json(&st);
    assert_eq!(v["flags"]["k_temporal"], 2);
    let shape_file = read_json(s.as_ref());
    let mesh: Mesh = serde_json::from_value(shape_file["mesh"].clone()).unwrap();
    let spec: ProblemSpec = serde_json::from_value(shape_file["spec"].clone()).unwrap();
    let truth = solve_direct(&mesh, &spec).unwrap();
    let u: Vec<f64> = serde_json::from_value(v["u"].clone()).unwrap();
    assert!(l2_relative_error(&u, &truth).unwrap() < 1e-6);
}

#[test]
fn convergence_table_as_csv() {
    let dir = tempfile::tempdir().unwrap();
    let s = shape(dir.path(), "7", "laplace_dirichlet");
    let o = dir.path().join("o.json");
    let out = sni(&["--format", "csv", "solve", "--mesh", &s, "--problem", &s, "--k", "4", "--oracle", "--out", o.to_str().unwrap()]);
    assert!(out.status.success());
    let text = String::from_utf8_lossy(&out.stdout).to_string();
    let iterations = read_json(&o)["diagnostics"]["iterations"].as_u64().unwrap() as usize;
    assert!(text.starts_with("iteration,update_norm,error_vs_oracle\n"));
    assert_eq!(text.lines().count(), iterations + 1);
}

#[test]
fn warm_start_from_file() {
    let dir = tempfile::tempdir().unwrap();
    let s = shape(dir.path(), "8", "laplace_dirichlet");
    let direct = dir.path().join("d.json");
    assert!(sni(&["solve", "--method", "direct", "--mesh", &s, "--problem", &s, "--out", direct.to_str().unwrap()]).status.success());
    let o = dir.path().join("o.json");
    let init = format!("file:{}", direct.display());
    let out = sni(&["solve", "--mesh", &s, "--problem", &s, "--k", "4", "--init", &init, "--out", o.to_str().unwrap()]);
    assert!(out.status.success());
    // starting at the solution, the first update is already below tolerance
    assert!(read_json(&o)["diagnostics"]["iterations"].as_u64().unwrap() <= 2);
}

#[test]
fn surrogate_local_solver_from_weight_file() {
    let dir = tempfile::tempdir().unwrap();
    let s = shape(dir.path(), "9", "laplace_dirichlet");
    let mesh: Mesh = serde_json::from_value(read_json(s.as_ref())["mesh"].clone()).unwrap();
    let spec = ProblemSpec::new(sni_core::fem::Equation::LaplaceDirichlet).with_boundary_fn(&mesh, |_| 0.25);
    let problem = dir.path().join("const.json");
    std::fs::write(&problem, serde_json::to_string(&spec).unwrap()).unwrap();
    let weights = concat!(env!("CARGO_MANIFEST_DIR"), "/../core/tests/fixtures/mean_boundary.json");
    let local = format!("surrogate:{weights}");
    let o = dir.path().join("o.json");
    let out = sni(&["solve", "--mesh", &s, "--problem", problem.to_str().unwrap(), "--k", "4", "--local", &local, "--tol", "1e-12", "--max-iter", "20000", "--out", o.to_str().unwrap()]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let u: Vec<f64> = serde_json::from_value(read_json(&o)["u"].clone()).unwrap();
    let dev = u.iter().map(|&x| (x - 0.25).abs()).fold(0.0, f64::max);
    assert!(dev < 1e-8, "{dev}");

    let missing = sni(&["solve", "--mesh", &s, "--problem", problem.to_str().unwrap(), "--k", "4", "--local", "surrogate:/nonexistent.json", "--out", o.to_str().unwrap()]);
    assert!(!missing.status.success());
    assert!(error_line(&missing).starts_with("error["));
}
