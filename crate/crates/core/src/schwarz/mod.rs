//! Additive Schwarz-Richardson iteration with pluggable local solvers.
//!
//! Each iteration forms one local problem per subdomain from the current
//! iterate (global Dirichlet data, global Neumann data, and the iterate on the
//! artificial boundary), solves all of them independently, and applies
//! `u ← u + τ Σ_k R_kᵀ (ŵ_k − R_k u)` with the sum taken in ascending `k`.

mod config;
mod local;
mod spacetime;

use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

pub use config::{Init, LocalSolverKind, SniConfig, SpaceTimeConfig, DEFAULT_MAX_OUTER, EXACT_TOL, INEXACT_TOL};
pub use local::LocalProblem;
pub use spacetime::{sni_run_spacetime, time_windows, SpaceTimeRun};

use local::{perturbation_direction, perturbation_size, Subdomain};

use crate::decomp::{decompose, Decomposition};
use crate::error::{Result, SniError};
use crate::fem::{l2_relative_error, Equation, ProblemSpec};
use crate::geometry::{TriMesh, VertexClass};
use crate::scalar::{dist2, norm2, Real};
use crate::surrogate::{load_model, SurrogateModel};

/// Number of trailing update-norm ratios averaged by [`estimate_rho`].
pub const RHO_WINDOW: usize = 5;

/// Geometric mean of the last five successive update-norm ratios,
/// `(‖δ_n‖ / ‖δ_{n−5}‖)^{1/5}`; needs at least six norms.
pub fn estimate_rho<T: Real>(norms: &[T]) -> Option<T> {
    if norms.len() < RHO_WINDOW + 1 {
        return None;
    }
    let last = norms[norms.len() - 1];
    let first = norms[norms.len() - 1 - RHO_WINDOW];
    if !(first > T::zero()) {
        return None;
    }
    Some((last / first).powf(T::one() / T::from_count(RHO_WINDOW)))
}

/// Coefficient of determination of a least-squares line through
/// `(i, ln v_i)`; 1 means exact geometric decay.
pub fn geometric_fit_r2(values: &[f64]) -> Option<f64> {
    if values.len() < 3 || values.iter().any(|&v| !(v > 0.0)) {
        return None;
    }
    let n = values.len() as f64;
    let ys: Vec<f64> = values.iter().map(|v| v.ln()).collect();
    let mx = (n - 1.0) / 2.0;
    let my = ys.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (i, &y) in ys.iter().enumerate() {
        let dx = i as f64 - mx;
        sxy += dx * (y - my);
        sxx += dx * dx;
        syy += (y - my) * (y - my);
    }
    if syy == 0.0 {
        return Some(1.0);
    }
    Some(sxy * sxy / (sxx * syy))
}

/// Wall-clock seconds per phase.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct Timings {
    /// Partitioning, overlap extension and local setup.
    pub partition: f64,
    pub local: f64,
    pub update: f64,
}

/// Global iterate and its history.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Real")]
pub struct SniState<T> {
    pub u: Vec<T>,
    pub iteration: usize,
    pub update_norms: Vec<T>,
    pub rho_hat: Option<T>,
    pub converged: bool,
    /// Largest injected local error so far (perturbed solver only).
    pub c_abs_max: T,
    /// `‖uⁿ − u*‖₂ / ‖u*‖₂` after each iteration when an oracle was supplied.
    pub oracle_errors: Vec<T>,
    pub timings: Timings,
}

/// Machine-readable summary of a run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Diagnostics {
    pub update_norms: Vec<f64>,
    pub rho_hat: Option<f64>,
    pub overlap_factor: usize,
    pub converged: bool,
    pub iterations: usize,
    pub timings: Timings,
    pub c_abs_max: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error_vs_oracle: Option<Vec<f64>>,
}

impl Diagnostics {
    /// `iteration,update_norm[,error_vs_oracle]` rows, one per iteration.
    pub fn convergence_csv(&self) -> String {
        let mut out = String::from("iteration,update_norm");
        if self.error_vs_oracle.is_some() {
            out.push_str(",error_vs_oracle");
        }
        out.push('\n');
        for (i, n) in self.update_norms.iter().enumerate() {
            out.push_str(&format!("{},{:e}", i + 1, n));
            if let Some(errs) = &self.error_vs_oracle {
                out.push_str(&format!(",{:e}", errs[i]));
            }
            out.push('\n');
        }
        out
    }
}

/// Result of [`sni_run`].
#[derive(Debug, Clone)]
pub struct SniRun<T> {
    pub u: Vec<T>,
    pub state: SniState<T>,
    pub diagnostics: Diagnostics,
    pub decomposition: Decomposition,
}

/// Options that only matter for verification runs.
#[derive(Debug, Clone, Copy, Default)]
pub struct RunOptions<'a, T> {
    /// Reference solution; its relative error is recorded every iteration.
    pub oracle: Option<&'a [T]>,
    /// Stop as soon as the oracle error falls to this level.
    pub target_error: Option<T>,
}

/// Decomposed problem ready to iterate.
pub struct SniSolver<'a, T: Real> {
    mesh: &'a TriMesh<T>,
    spec: &'a ProblemSpec<T>,
    config: SniConfig<T>,
    decomposition: Decomposition,
    subdomains: Vec<Subdomain<T>>,
    dirichlet: Vec<(usize, T)>,
    data_range: T,
    surrogate: Option<SurrogateModel<T>>,
    setup_seconds: f64,
}

impl<'a, T: Real> SniSolver<'a, T> {
    /// Partitions the mesh, extends the parts and prepares every local operator.
    pub fn new(config: SniConfig<T>, mesh: &'a TriMesh<T>, spec: &'a ProblemSpec<T>) -> Result<Self> {
        let start = Instant::now();
        if spec.equation == Equation::Heat {
            return Err(SniError::Config("heat problems run through the space-time solver".into()));
        }
        spec.validate(mesh)?;
        let surrogate = match config.local_solver() {
            LocalSolverKind::Surrogate { weights } => {
                if spec.equation != Equation::LaplaceDirichlet {
                    return Err(SniError::UnsupportedBySurrogate(format!(
                        "surrogate local solves support laplace_dirichlet, not {}",
                        spec.equation
                    )));
                }
                Some(load_model(weights).map_err(|e| SniError::Config(format!("surrogate weights: {e}")))?)
            }
            _ => None,
        };
        let decomposition = decompose(mesh, config.k(), config.depth(), config.partition_seed())?;
        let mask = spec.dirichlet_mask(mesh.n_vertices());
        let linear = !matches!(spec.equation, Equation::NonlinearLaplace);
        let subdomains = decomposition
            .parts
            .par_iter()
            .enumerate()
            .map(|(k, part)| Subdomain::new(k, mesh, spec, part.clone(), &mask, linear))
            .collect::<Result<Vec<_>>>()?;
        let dirichlet: Vec<(usize, T)> = spec.dirichlet_values.iter().map(|(&v, &x)| (v, x)).collect();
        let lo = dirichlet.iter().map(|d| d.1).fold(T::infinity(), T::min);
        let hi = dirichlet.iter().map(|d| d.1).fold(T::neg_infinity(), T::max);
        Ok(Self {
            mesh,
            spec,
            config,
            decomposition,
            subdomains,
            dirichlet,
            data_range: hi - lo,
            surrogate,
            setup_seconds: start.elapsed().as_secs_f64(),
        })
    }

    pub fn config(&self) -> &SniConfig<T> {
        &self.config
    }

    pub fn decomposition(&self) -> &Decomposition {
        &self.decomposition
    }

    pub fn n_vertices(&self) -> usize {
        self.mesh.n_vertices()
    }

    fn pin(&self, u: &mut [T]) {
        for &(v, x) in &self.dirichlet {
            u[v] = x;
        }
    }

    /// `u⁰` per the configured initialization.
    pub fn initial_state(&self) -> Result<SniState<T>> {
        let n = self.n_vertices();
        let mut u = match self.config.init() {
            Init::ZeroInterior => vec![T::zero(); n],
            Init::Provided(v) => {
                if v.len() != n {
                    return Err(SniError::LengthMismatch {
                        expected: n,
                        got: v.len(),
                    });
                }
                v.clone()
            }
        };
        self.pin(&mut u);
        Ok(SniState {
            u,
            iteration: 0,
            update_norms: Vec::new(),
            rho_hat: None,
            converged: false,
            c_abs_max: T::zero(),
            oracle_errors: Vec::new(),
            timings: Timings {
                partition: self.setup_seconds,
                ..Timings::default()
            },
        })
    }

    /// Local problem of subdomain `k` at iterate `u`.
    pub fn form_local_problem(&self, k: usize, u: &[T]) -> Result<LocalProblem<T>> {
        let sub = self
            .subdomains
            .get(k)
            .ok_or(SniError::IndexOutOfRange { index: k, len: self.subdomains.len() })?;
        if u.len() != self.n_vertices() {
            return Err(SniError::LengthMismatch {
                expected: self.n_vertices(),
                got: u.len(),
            });
        }
        Ok(sub.problem(k, u))
    }

    /// Local solution on the submesh of `k` and the injected error size.
    pub fn local_solve(&self, k: usize, u: &[T], iteration: usize) -> Result<(Vec<T>, T)> {
        let sub = &self.subdomains[k];
        match self.config.local_solver() {
            LocalSolverKind::Exact => Ok((sub.solve_exact(k, u)?, T::zero())),
            LocalSolverKind::Perturbed { c, seed } => {
                let mut w = sub.solve_exact(k, u)?;
                if *c == 0.0 {
                    return Ok((w, T::zero()));
                }
                let fixed: Vec<bool> = sub
                    .submesh
                    .classes
                    .iter()
                    .map(|&cl| cl == VertexClass::GlobalDirichlet)
                    .collect();
                let dir: Vec<T> = perturbation_direction(*seed, k, iteration, &fixed);
                let size = perturbation_size(T::lit(*c), &w, self.data_range);
                for (x, d) in w.iter_mut().zip(dir) {
                    *x += size * d;
                }
                Ok((w, size))
            }
            LocalSolverKind::Surrogate { .. } => {
                let model = self.surrogate.as_ref().expect("surrogate loaded in new");
                Ok((sub.solve_surrogate(k, u, model)?, T::zero()))
            }
        }
    }

    /// One additive update. All local solves read the same iterate.
    pub fn step(&self, state: &mut SniState<T>) -> Result<()> {
        let n = self.n_vertices();
        if state.u.len() != n {
            return Err(SniError::LengthMismatch {
                expected: n,
                got: state.u.len(),
            });
        }
        let t0 = Instant::now();
        let it = state.iteration;
        let u = &state.u;
        let locals: Vec<Result<(Vec<T>, T)>> = (0..self.subdomains.len())
            .into_par_iter()
            .map(|k| self.local_solve(k, u, it))
            .collect();
        let t1 = Instant::now();
        let mut correction = vec![T::zero(); n];
        let mut c_abs = state.c_abs_max;
        for (k, res) in locals.into_iter().enumerate() {
            let (w, size) = res.map_err(|e| e.in_subdomain(k))?;
            c_abs = c_abs.max(size);
            for (&g, &wl) in self.subdomains[k].submesh.global_ids.iter().zip(&w) {
                correction[g] += wl - u[g];
            }
        }
        let tau = self.config.tau();
        let mut next: Vec<T> = u.iter().zip(&correction).map(|(&x, &c)| x + tau * c).collect();
        self.pin(&mut next);
        let norm = dist2(&next, u);
        state.u = next;
        state.iteration += 1;
        state.update_norms.push(norm);
        state.rho_hat = estimate_rho(&state.update_norms);
        state.c_abs_max = c_abs;
        state.timings.local += (t1 - t0).as_secs_f64();
        state.timings.update += t1.elapsed().as_secs_f64();
        Ok(())
    }

    fn relative_update(&self, state: &SniState<T>) -> T {
        let last = state.update_norms.last().copied().unwrap_or_else(T::infinity);
        last / norm2(&state.u).max(T::lit(1e-12))
    }

    /// Iterates until the relative update drops below the tolerance or the
    /// cap is reached. Hitting the cap is reported through `converged = false`.
    pub fn run(&self, opts: RunOptions<'_, T>) -> Result<SniRun<T>> {
        let mut state = self.initial_state()?;
        if let Some(o) = opts.oracle {
            if o.len() != self.n_vertices() {
                return Err(SniError::LengthMismatch {
                    expected: self.n_vertices(),
                    got: o.len(),
                });
            }
        }
        while state.iteration < self.config.max_outer() {
            self.step(&mut state)?;
            let mut stop = false;
            if let Some(o) = opts.oracle {
                let e = l2_relative_error(&state.u, o)?;
                state.oracle_errors.push(e);
                stop = opts.target_error.is_some_and(|t| e <= t);
            }
            if self.relative_update(&state) < self.config.outer_tol() {
                state.converged = true;
                break;
            }
            if stop {
                break;
            }
        }
        if !state.converged {
            log::debug!(
                "stopped after {} iterations with relative update {}",
                state.iteration,
                self.relative_update(&state)
            );
        }
        let diagnostics = Diagnostics {
            update_norms: state.update_norms.iter().map(|x| x.as_f64()).collect(),
            rho_hat: state.rho_hat.map(Real::as_f64),
            overlap_factor: self.decomposition.overlap_factor,
            converged: state.converged,
            iterations: state.iteration,
            timings: state.timings,
            c_abs_max: state.c_abs_max.as_f64(),
            error_vs_oracle: opts
                .oracle
                .map(|_| state.oracle_errors.iter().map(|x| x.as_f64()).collect()),
        };
        Ok(SniRun {
            u: state.u.clone(),
            state,
            diagnostics,
            decomposition: self.decomposition.clone(),
        })
    }

    /// Spec this solver was built for.
    pub fn spec(&self) -> &ProblemSpec<T> {
        self.spec
    }
}

/// One additive Schwarz update of `state`.
pub fn sni_step<T: Real>(solver: &SniSolver<'_, T>, state: &mut SniState<T>) -> Result<()> {
    solver.step(state)
}

/// Decomposes, initializes and iterates to convergence.
pub fn sni_run<T: Real>(config: SniConfig<T>, mesh: &TriMesh<T>, spec: &ProblemSpec<T>) -> Result<SniRun<T>> {
    SniSolver::new(config, mesh, spec)?.run(RunOptions::default())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fem::solve_direct;
    use crate::geometry::{random_simple_polygon, triangulate, BoundingBox};

    fn grid(n: usize) -> TriMesh<f64> {
        TriMesh::rectangle(n, n, [0.0, 0.0], [1.0, 1.0]).unwrap()
    }

    fn laplace(m: &TriMesh<f64>, f: impl Fn([f64; 2]) -> f64) -> ProblemSpec<f64> {
        ProblemSpec::new(Equation::LaplaceDirichlet).with_boundary_fn(m, f)
    }

    #[test]
    fn rho_estimate() {
        assert_eq!(estimate_rho(&[1.0, 0.5, 0.25, 0.125, 0.0625]), None);
        let norms: Vec<f64> = (0..8).map(|i| 0.5f64.powi(i)).collect();
        assert!((estimate_rho(&norms).unwrap() - 0.5).abs() < 1e-15);
        let r2 = geometric_fit_r2(&norms).unwrap();
        assert!((r2 - 1.0).abs() < 1e-12);
        assert!(geometric_fit_r2(&[1.0, 0.1, 1.0, 0.1, 1.0]).unwrap() < 0.5);
    }

    #[test]
    fn exact_solution_is_a_fixed_point() {
        let m = grid(10);
        let s = laplace(&m, |p| p[0] * p[0] - p[1]);
        let truth = solve_direct(&m, &s).unwrap();
        let cfg = SniConfig::new(4, 2, 0.2, LocalSolverKind::Exact)
            .unwrap()
            .with_init(Init::Provided(truth.clone()));
        let solver = SniSolver::new(cfg, &m, &s).unwrap();
        let mut st = solver.initial_state().unwrap();
        sni_step(&solver, &mut st).unwrap();
        assert!(st.update_norms[0] <= 1e-9 * norm2(&truth), "{}", st.update_norms[0]);
    }

    #[test]
    fn single_domain_half_step() {
        let m = grid(6);
        let s = laplace(&m, |p| 1.0 + p[0] * p[1]);
        let truth = solve_direct(&m, &s).unwrap();
        let cfg = SniConfig::new(1, 0, 0.5, LocalSolverKind::Exact).unwrap();
        let solver = SniSolver::new(cfg, &m, &s).unwrap();
        let mut st = solver.initial_state().unwrap();
        solver.step(&mut st).unwrap();
        let bnd = m.boundary_vertex_mask();
        for v in 0..m.n_vertices() {
            let expect = if bnd[v] { truth[v] } else { 0.5 * truth[v] };
            assert!((st.u[v] - expect).abs() <= 1e-10, "vertex {v}");
        }
    }

    #[test]
    fn whole_domain_local_problem_is_the_global_problem() {
        let m = grid(5);
        let s = laplace(&m, |p| p[0]);
        let solver = SniSolver::new(SniConfig::new(1, 0, 0.5, LocalSolverKind::Exact).unwrap(), &m, &s).unwrap();
        let p = solver.form_local_problem(0, &vec![0.3; m.n_vertices()]).unwrap();
        assert_eq!(p.submesh.mesh.triangles, m.triangles);
        assert_eq!(p.spec.dirichlet_values, s.dirichlet_values);
        assert!(p.submesh.artificial_boundary.is_empty());
    }

    #[test]
    fn artificial_values_come_from_the_iterate() {
        // 4×4 cells; vertex (i, j) has index 5j + i
        let m = grid(4);
        let s = laplace(&m, |p| p[0]);
        let solver = SniSolver::new(SniConfig::new(2, 1, 0.4, LocalSolverKind::Exact).unwrap(), &m, &s).unwrap();
        let u: Vec<f64> = (0..m.n_vertices()).map(|v| 100.0 + v as f64).collect();
        for k in 0..2 {
            let p = solver.form_local_problem(k, &u).unwrap();
            let sub = &p.submesh;
            // recompute the expected boundary data by hand from the index sets
            let parent_counts = m.vertex_triangle_counts();
            for (l, &g) in sub.global_ids.iter().enumerate() {
                let on_boundary = s.dirichlet_values.contains_key(&g);
                let kept = sub.mesh.triangles.iter().filter(|t| t.contains(&l)).count();
                let expected = if on_boundary {
                    Some(m.vertices[g][0])
                } else if kept < parent_counts[g] {
                    Some(100.0 + g as f64)
                } else {
                    None
                };
                assert_eq!(p.spec.dirichlet_values.get(&l).copied(), expected, "k {k} vertex {g}");
            }
        }
    }

    #[test]
    fn interior_subdomain_is_pure_dirichlet_from_iterate() {
        let m = grid(8);
        let s = laplace(&m, |_| 0.0);
        let mask = s.dirichlet_mask(m.n_vertices());
        let part: Vec<usize> = (0..m.n_vertices()).filter(|&v| (2..=6).contains(&(v % 9)) && (2..=6).contains(&(v / 9))).collect();
        let sub = local::Subdomain::new(0, &m, &s, part, &mask, true).unwrap();
        let u: Vec<f64> = (0..m.n_vertices()).map(|v| v as f64).collect();
        let p = sub.problem(0, &u);
        assert!(p.spec.neumann_values.is_empty());
        let boundary = p.submesh.mesh.boundary_vertex_mask();
        for (l, &b) in boundary.iter().enumerate() {
            if b {
                assert_eq!(p.spec.dirichlet_values[&l], p.submesh.global_ids[l] as f64);
            }
        }
    }

    #[test]
    fn converges_to_direct_solution() {
        let m = grid(12);
        let s = laplace(&m, |p| p[0]);
        let truth = solve_direct(&m, &s).unwrap();
        let cfg = SniConfig::new(4, 2, 0.2, LocalSolverKind::Exact).unwrap();
        let run = sni_run(cfg, &m, &s).unwrap();
        assert!(run.diagnostics.converged);
        assert!(l2_relative_error(&run.u, &truth).unwrap() <= 1e-6);
        assert!(run.diagnostics.rho_hat.unwrap() < 1.0);
        assert!(run.diagnostics.overlap_factor >= 2);
    }

    #[test]
    fn constant_data_stays_constant() {
        let p = random_simple_polygon(5, 10, &BoundingBox::unit_centered(), 8).unwrap();
        let m = triangulate(&p, 0.1).unwrap();
        let s = laplace(&m, |_| 2.5);
        let cfg = SniConfig::new(3, 1, 0.3, LocalSolverKind::Exact).unwrap();
        // warm-started inner solves stop at their own 1e-10 residual, which floors the outer error
        let run = sni_run(cfg.clone().with_outer_tol(1e-12).unwrap(), &m, &s).unwrap();
        assert!(run.diagnostics.converged);
        assert!(run.u.iter().all(|&x| (x - 2.5).abs() <= 1e-8));
        // started at the constant, nothing moves
        let run = sni_run(cfg.with_init(Init::Provided(vec![2.5; m.n_vertices()])), &m, &s).unwrap();
        assert_eq!(run.diagnostics.iterations, 1);
        assert!(run.u.iter().all(|&x| (x - 2.5).abs() <= 1e-12));
    }

    #[test]
    fn zero_perturbation_matches_exact_bitwise() {
        let m = grid(8);
        let s = laplace(&m, |p| p[1] * p[1]);
        let base = SniConfig::new(3, 1, 0.3, LocalSolverKind::Exact).unwrap().with_max_outer(5).unwrap();
        let pert = SniConfig::new(3, 1, 0.3, LocalSolverKind::Perturbed { c: 0.0, seed: 9 })
            .unwrap()
            .with_outer_tol(1e-8)
            .unwrap()
            .with_max_outer(5)
            .unwrap();
        let a = sni_run(base, &m, &s).unwrap();
        let b = sni_run(pert, &m, &s).unwrap();
        assert_eq!(a.u, b.u);
    }

    #[test]
    fn perturbation_respects_its_size() {
        let m = grid(8);
        let s = laplace(&m, |p| p[0] + 1.0);
        let c = 0.01;
        let exact = SniSolver::new(SniConfig::new(3, 1, 0.3, LocalSolverKind::Exact).unwrap(), &m, &s).unwrap();
        let pert = SniSolver::new(
            SniConfig::new(3, 1, 0.3, LocalSolverKind::Perturbed { c, seed: 1 }).unwrap(),
            &m,
            &s,
        )
        .unwrap();
        let u = exact.initial_state().unwrap().u;
        for k in 0..3 {
            let (w, _) = exact.local_solve(k, &u, 4).unwrap();
            let (wp, size) = pert.local_solve(k, &u, 4).unwrap();
            let diff = dist2(&w, &wp);
            assert!(diff <= c * norm2(&w) * (1.0 + 1e-12));
            assert!((diff - size).abs() <= 1e-12);
        }
    }

    #[test]
    fn deterministic_across_runs() {
        let m = grid(10);
        let s = laplace(&m, |p| (4.0 * p[0]).sin());
        let cfg = SniConfig::new(5, 2, 0.15, LocalSolverKind::Perturbed { c: 0.01, seed: 4 }).unwrap();
        let a = sni_run(cfg.clone(), &m, &s).unwrap();
        let b = sni_run(cfg, &m, &s).unwrap();
        assert_eq!(a.u, b.u);
        assert_eq!(a.diagnostics.update_norms, b.diagnostics.update_norms);
    }

    #[test]
    fn cap_reports_non_convergence() {
        let m = grid(10);
        let s = laplace(&m, |p| p[0]);
        let cfg = SniConfig::new(4, 1, 0.1, LocalSolverKind::Exact).unwrap().with_max_outer(3).unwrap();
        let run = sni_run(cfg, &m, &s).unwrap();
        assert!(!run.diagnostics.converged);
        assert_eq!(run.diagnostics.iterations, 3);
        let csv = run.diagnostics.convergence_csv();
        assert_eq!(csv.lines().count(), 4);
    }

    #[test]
    fn heat_needs_the_space_time_solver() {
        let m = grid(4);
        let mut s = laplace(&m, |_| 0.0);
        s.equation = Equation::Heat;
        s.alpha = Some(1.0);
        s.dt = Some(0.01);
        s.n_steps = Some(2);
        s.initial_u0 = Some(vec![0.0; m.n_vertices()]);
        assert!(matches!(
            sni_run(SniConfig::new(2, 1, 0.4, LocalSolverKind::Exact).unwrap(), &m, &s),
            Err(SniError::Config(_))
        ));
    }

    #[test]
    fn missing_weights_is_a_config_error() {
        let m = grid(4);
        let s = laplace(&m, |_| 0.0);
        let cfg = SniConfig::new(2, 1, 0.4, LocalSolverKind::Surrogate { weights: "/nonexistent/w.json".into() }).unwrap();
        assert!(matches!(SniSolver::new(cfg, &m, &s), Err(SniError::Config(_))));
    }

    #[test]
    fn surrogate_fixture_preserves_constants() {
        let p = random_simple_polygon(5, 10, &BoundingBox::unit_centered(), 2).unwrap();
        let m = triangulate(&p, 0.08).unwrap();
        let s = laplace(&m, |_| 3.0);
        let weights = concat!(env!("CARGO_MANIFEST_DIR"), "/tests/fixtures/mean_boundary.json");
        let cfg = SniConfig::new(4, 2, 0.2, LocalSolverKind::Surrogate { weights: weights.into() })
            .unwrap()
            .with_init(Init::Provided(vec![3.0; m.n_vertices()]));
        let run = sni_run(cfg, &m, &s).unwrap();
        assert!(run.diagnostics.converged);
        assert!(run.u.iter().all(|&x| (x - 3.0).abs() < 1e-12));
    }

    #[test]
    fn space_time_single_part_and_constants() {
        let m = grid(6);
        let n = m.n_vertices();
        let mut s = laplace(&m, |p| p[0]);
        s.equation = Equation::Heat;
        s.alpha = Some(0.9);
        s.dt = Some(0.01);
        s.n_steps = Some(4);
        s.initial_u0 = Some(m.vertices.iter().map(|p| p[0] * p[1]).collect());
        let truth = solve_direct(&m, &s).unwrap();
        let cfg = SpaceTimeConfig::new(1, 1, 0, 0, 0.9).unwrap();
        let run = sni_run_spacetime(&cfg, &m, &s, RunOptions::default()).unwrap();
        assert!(run.diagnostics.converged);
        assert!(run.diagnostics.iterations <= 20);
        assert!(l2_relative_error(&run.u, &truth).unwrap() <= 1e-8);

        let mut c = laplace(&m, |_| 0.6);
        c.equation = Equation::Heat;
        c.alpha = Some(1.0);
        c.dt = Some(0.01);
        c.n_steps = Some(4);
        c.initial_u0 = Some(vec![0.6; n]);
        let cfg = SpaceTimeConfig::new(2, 2, 1, 1, 0.2).unwrap().with_outer_tol(1e-12).unwrap();
        let run = sni_run_spacetime(&cfg, &m, &c, RunOptions::default()).unwrap();
        assert!(run.diagnostics.converged);
        assert!(run.u.iter().all(|&x| (x - 0.6).abs() <= 1e-9));
    }
}
