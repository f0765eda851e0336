use sni_core::datagen::sample_boundary;
use sni_core::decomp::decompose;
use sni_core::fem::{l2_relative_error, solve_direct, Equation};
use sni_core::geometry::{random_simple_polygon, triangulate, BoundingBox};
use sni_core::schwarz::{sni_run, Init, LocalSolverKind, RunOptions, SniSolver};
use sni_core::surrogate::{evaluate, load_model};
use sni_core::{Mesh, Mesh32, ProblemSpec, ProblemSpec32, SniConfig};

fn mesh(seed: u64, h: f64) -> Mesh {
    let p = random_simple_polygon(3, 12, &BoundingBox::unit_centered(), seed).unwrap();
    triangulate(&p, h).unwrap()
}

#[test]
fn files_round_trip_to_the_same_solution() {
    let m = mesh(21, 0.1);
    let spec = sample_boundary(Equation::LaplaceMixed, &m, 5).unwrap();
    let m2: Mesh = serde_json::from_str(&serde_json::to_string(&m).unwrap()).unwrap();
    let s2: ProblemSpec = serde_json::from_str(&serde_json::to_string(&spec).unwrap()).unwrap();
    assert_eq!(m, m2);
    assert_eq!(spec, s2);
    assert_eq!(solve_direct(&m, &spec).unwrap(), solve_direct(&m2, &s2).unwrap());
}

#[test]
fn mesh_json_uses_tagged_edges() {
    let m = mesh(2, 0.3);
    let v: serde_json::Value = serde_json::to_value(&m).unwrap();
    let e = &v["boundary_edges"][0];
    assert!(e["v"].is_array());
    assert!(e["tag"].as_str().unwrap().starts_with("dirichlet:"));
    assert!(v["vertices"][0].is_array() && v["triangles"][0].is_array());
}

#[test]
fn darcy_through_the_crate_aliases() {
    let m = mesh(4, 0.1);
    let spec: ProblemSpec = sample_boundary(Equation::Darcy, &m, 9).unwrap();
    let truth = solve_direct(&m, &spec).unwrap();
    let cfg = SniConfig::new(4, 2, 0.2, LocalSolverKind::Exact).unwrap();
    let run = sni_run(cfg, &m, &spec).unwrap();
    assert!(run.diagnostics.converged);
    assert!(l2_relative_error(&run.u, &truth).unwrap() < 1e-6);
}

#[test]
fn single_precision_pipeline() {
    let m: Mesh32 = mesh(6, 0.12).cast();
    let spec: ProblemSpec32 = ProblemSpec32::new(Equation::LaplaceDirichlet).with_boundary_fn(&m, |p| p[0] - 0.5 * p[1]);
    let cfg = sni_core::schwarz::SniConfig::<f32>::new(3, 2, 0.25, LocalSolverKind::Exact)
        .unwrap()
        .with_outer_tol(1e-5)
        .unwrap();
    let run = sni_run(cfg, &m, &spec).unwrap();
    assert!(run.diagnostics.converged);
    // linear data is reproduced exactly by P1
    for (p, &u) in m.vertices.iter().zip(&run.u) {
        assert!((u - (p[0] - 0.5 * p[1])).abs() < 1e-4, "{u}");
    }
}

#[test]
fn better_initialization_needs_fewer_iterations() {
    let m = mesh(8, 0.1);
    let spec = sample_boundary(Equation::LaplaceDirichlet, &m, 3).unwrap();
    let truth = solve_direct(&m, &spec).unwrap();
    let opts = RunOptions {
        oracle: Some(&truth),
        target_error: Some(1e-6),
    };
    let cfg = SniConfig::new(4, 2, 0.2, LocalSolverKind::Exact).unwrap().with_outer_tol(1e-14).unwrap();
    let cold = SniSolver::new(cfg.clone(), &m, &spec).unwrap().run(opts).unwrap();
    let mean = truth.iter().sum::<f64>() / truth.len() as f64;
    let warm_start: Vec<f64> = truth.iter().map(|&u| 0.9 * u + 0.1 * mean).collect();
    let first_error = l2_relative_error(&warm_start, &truth).unwrap();
    let cold_start_error = cold.diagnostics.error_vs_oracle.as_ref().unwrap()[0];
    assert!(first_error < cold_start_error);
    let warm = SniSolver::new(cfg.with_init(Init::Provided(warm_start)), &m, &spec)
        .unwrap()
        .run(opts)
        .unwrap();
    assert!(warm.diagnostics.iterations <= cold.diagnostics.iterations);
}

#[test]
fn diagnostics_and_decomposition_json() {
    let m = mesh(10, 0.12);
    let spec = sample_boundary(Equation::LaplaceDirichlet, &m, 1).unwrap();
    let run = sni_run(SniConfig::new(3, 1, 0.3, LocalSolverKind::Exact).unwrap(), &m, &spec).unwrap();
    let d = serde_json::to_value(&run.diagnostics).unwrap();
    for key in ["update_norms", "rho_hat", "overlap_factor", "converged", "iterations", "timings"] {
        assert!(d.get(key).is_some(), "{key}");
    }
    for key in ["partition", "local", "update"] {
        assert!(d["timings"].get(key).is_some(), "{key}");
    }
    let dec = serde_json::to_value(decompose(&m, 3, 1, 0).unwrap()).unwrap();
    for key in ["parts", "core_parts", "depth", "overlap_factor"] {
        assert!(dec.get(key).is_some(), "{key}");
    }
}

#[test]
fn fixture_model_averages_the_boundary() {
    let path = concat!(env!("CARGO_MANIFEST_DIR"), "/tests/fixtures/mean_boundary.json");
    let model = load_model::<f64>(path).unwrap();
    assert_eq!((model.m, model.p), (64, 1));
    let b: Vec<f64> = (0..64).map(|i| i as f64).collect();
    let out = evaluate(&model, &b, &[[0.1, -0.2], [0.4, 0.3]]).unwrap();
    assert!(out.iter().all(|&x| (x - 31.5).abs() < 1e-12));
}

#[test]
fn nonlinear_constants_are_preserved() {
    let m = mesh(12, 0.12);
    let spec = ProblemSpec::new(Equation::NonlinearLaplace).with_boundary_fn(&m, |_| 0.7);
    let cfg = SniConfig::new(3, 2, 0.3, LocalSolverKind::Exact).unwrap().with_outer_tol(1e-12).unwrap();
    let run = sni_run(cfg, &m, &spec).unwrap();
    assert!(run.u.iter().all(|&u| (u - 0.7).abs() < 1e-8));
}
