use crate::error::{Result, SniError};
use crate::geometry::TriMesh;
use crate::scalar::{dist2, norm2, Real};
use crate::sparse::{conjugate_gradient, CsrMatrix};

use super::assembly::{
    assemble, assemble_unconstrained, dirichlet_vector, mass_matrix, stiffness_matrix,
    DirichletElimination, SparseSystem,
};
use super::problem::{Equation, ProblemSpec};

/// Relative residual target of every inner CG solve.
pub const CG_TOL: f64 = 1e-10;
/// Relative change at which Picard iteration stops.
pub const PICARD_TOL: f64 = 1e-10;
pub const PICARD_MAX_ITER: usize = 100;

/// [`CG_TOL`], raised to `100·ε` for scalars too coarse to reach it.
pub fn inner_tol<T: Real>() -> T {
    T::lit(CG_TOL).max(T::epsilon() * T::lit(100.0))
}

/// [`PICARD_TOL`] with the same precision floor as [`inner_tol`].
pub fn picard_tol<T: Real>() -> T {
    T::lit(PICARD_TOL).max(T::epsilon() * T::lit(100.0))
}

/// Default CG iteration cap, `10·n`.
pub fn cg_cap(n: usize) -> usize {
    (10 * n).max(10)
}

/// Solves an assembled system with Jacobi-preconditioned CG.
pub fn solve_cg<T: Real>(
    system: &SparseSystem<T>,
    tol: T,
    max_iter: usize,
    guess: Option<&[T]>,
) -> Result<Vec<T>> {
    Ok(conjugate_gradient(&system.matrix, &system.rhs, guess, tol, max_iter)?.x)
}

/// Ground-truth solve on the whole mesh.
///
/// Linear equations: one CG solve. Nonlinear Laplace: Picard iteration from
/// the Laplace solution. Heat: the backward-Euler rollout, returned
/// time-major with `n_steps + 1` levels (level 0 is `u₀`).
pub fn solve_direct<T: Real>(mesh: &TriMesh<T>, spec: &ProblemSpec<T>) -> Result<Vec<T>> {
    match spec.equation {
        Equation::NonlinearLaplace => Ok(picard(mesh, spec, None)?.u),
        Equation::Heat => {
            let stepper = HeatStepper::new(mesh, spec)?;
            stepper.rollout(spec.initial_u0.as_deref().unwrap_or_default(), stepper.n_steps())
        }
        _ => solve_linear(mesh, spec, None),
    }
}

/// Stationary linear solve with an optional warm start. Without one, CG
/// starts from the Dirichlet data with free vertices at its mean.
pub fn solve_linear<T: Real>(
    mesh: &TriMesh<T>,
    spec: &ProblemSpec<T>,
    guess: Option<&[T]>,
) -> Result<Vec<T>> {
    let sys = assemble(mesh, spec, None)?;
    let lift;
    let guess = match guess {
        Some(g) => g,
        None => {
            lift = dirichlet_lift(mesh.n_vertices(), spec);
            &lift
        }
    };
    solve_cg(&sys, inner_tol(), cg_cap(mesh.n_vertices()), Some(guess))
}

/// Dirichlet values where prescribed, their mean elsewhere.
pub fn dirichlet_lift<T: Real>(n: usize, spec: &ProblemSpec<T>) -> Vec<T> {
    let count = spec.dirichlet_values.len().max(1);
    let mean = spec.dirichlet_values.values().copied().sum::<T>() / T::from_count(count);
    let mut u = vec![mean; n];
    for (&v, &x) in &spec.dirichlet_values {
        if v < n {
            u[v] = x;
        }
    }
    u
}

/// Converged Picard iterate and the relative change per iteration.
#[derive(Debug, Clone)]
pub struct PicardSolution<T> {
    pub u: Vec<T>,
    pub history: Vec<f64>,
}

/// Picard iteration for `−∇·((u²+1)∇u) = 0`: freeze the coefficient at the
/// previous iterate, solve, repeat until the relative change drops below
/// [`PICARD_TOL`].
///
/// Without `initial` the first iterate is the Laplace solution (coefficient 1).
pub fn picard<T: Real>(
    mesh: &TriMesh<T>,
    spec: &ProblemSpec<T>,
    initial: Option<&[T]>,
) -> Result<PicardSolution<T>> {
    if spec.equation != Equation::NonlinearLaplace {
        return Err(SniError::Specification(format!(
            "Picard iteration is for nonlinear_laplace, got {}",
            spec.equation
        )));
    }
    spec.validate(mesh)?;
    let n = mesh.n_vertices();
    let mask = spec.dirichlet_mask(n);
    let values = dirichlet_vector(n, &spec.dirichlet_values);
    let zero = vec![T::zero(); n];
    let tol = inner_tol::<T>();

    let solve_at = |lin: &[T], guess: Option<&[T]>| -> Result<Vec<T>> {
        let (a, b) = assemble_unconstrained(mesh, spec, Some(lin))?;
        let sys = DirichletElimination::new(&a, mask.clone()).system(&b, &values);
        solve_cg(&sys, tol, cg_cap(n), guess)
    };

    let mut u = match initial {
        Some(u0) => {
            if u0.len() != n {
                return Err(SniError::LengthMismatch {
                    expected: n,
                    got: u0.len(),
                });
            }
            u0.to_vec()
        }
        None => solve_at(&zero, Some(&dirichlet_lift(n, spec)))?,
    };
    let mut history = Vec::new();
    for _ in 0..PICARD_MAX_ITER {
        let next = solve_at(&u, Some(&u))?;
        let change = dist2(&next, &u) / norm2(&next).max(T::min_positive_value());
        history.push(change.as_f64());
        u = next;
        if change < picard_tol() {
            return Ok(PicardSolution { u, history });
        }
    }
    Err(SniError::NonlinearFailure { history })
}

/// Stationary linear operator with its Dirichlet elimination cached; only the
/// Dirichlet values change between solves.
#[derive(Debug, Clone)]
pub struct PreparedLinear<T> {
    elim: DirichletElimination<T>,
    load: Vec<T>,
    cap: usize,
}

impl<T: Real> PreparedLinear<T> {
    pub fn new(mesh: &TriMesh<T>, spec: &ProblemSpec<T>) -> Result<Self> {
        if matches!(spec.equation, Equation::Heat | Equation::NonlinearLaplace) {
            return Err(SniError::Specification(format!(
                "{} is not a stationary linear equation",
                spec.equation
            )));
        }
        spec.validate(mesh)?;
        let (a, load) = assemble_unconstrained(mesh, spec, None)?;
        let n = mesh.n_vertices();
        Ok(Self {
            elim: DirichletElimination::new(&a, spec.dirichlet_mask(n)),
            load,
            cap: cg_cap(n),
        })
    }

    /// Solves with Dirichlet values read from `values` at masked vertices.
    pub fn solve(&self, values: &[T], guess: Option<&[T]>) -> Result<Vec<T>> {
        let rhs = self.elim.rhs(&self.load, values);
        Ok(conjugate_gradient(self.elim.matrix(), &rhs, guess, inner_tol(), self.cap)?.x)
    }
}

/// Backward-Euler stepper `(M + dt·α·K) uⁿ⁺¹ = M uⁿ` with constant Dirichlet data.
#[derive(Debug, Clone)]
pub struct HeatStepper<T> {
    mass: CsrMatrix<T>,
    elim: DirichletElimination<T>,
    boundary: Vec<T>,
    n_steps: usize,
    cap: usize,
}

impl<T: Real> HeatStepper<T> {
    pub fn new(mesh: &TriMesh<T>, spec: &ProblemSpec<T>) -> Result<Self> {
        if spec.equation != Equation::Heat {
            return Err(SniError::Specification(format!(
                "time stepping needs a heat problem, got {}",
                spec.equation
            )));
        }
        spec.validate(mesh)?;
        let n = mesh.n_vertices();
        let alpha = spec.alpha.unwrap_or_else(T::one);
        let dt = spec.dt.unwrap_or_else(T::one);
        let mass = mass_matrix(mesh);
        let k = stiffness_matrix(mesh, &vec![alpha; mesh.n_triangles()]);
        let a = mass.add_scaled(dt, &k);
        Ok(Self {
            mass,
            elim: DirichletElimination::new(&a, spec.dirichlet_mask(n)),
            boundary: dirichlet_vector(n, &spec.dirichlet_values),
            n_steps: spec.n_steps.unwrap_or(0),
            cap: cg_cap(n),
        })
    }

    pub fn n_steps(&self) -> usize {
        self.n_steps
    }

    pub fn n_vertices(&self) -> usize {
        self.boundary.len()
    }

    /// One step with Dirichlet values taken from `values` at masked vertices.
    pub fn step_with(&self, u_prev: &[T], values: &[T]) -> Result<Vec<T>> {
        let b = self.mass.mul_vec(u_prev);
        let rhs = self.elim.rhs(&b, values);
        Ok(conjugate_gradient(self.elim.matrix(), &rhs, Some(u_prev), inner_tol(), self.cap)?.x)
    }

    pub fn step(&self, u_prev: &[T]) -> Result<Vec<T>> {
        self.step_with(u_prev, &self.boundary)
    }

    /// `steps + 1` levels starting from `u0`, flattened time-major.
    pub fn rollout(&self, u0: &[T], steps: usize) -> Result<Vec<T>> {
        let n = self.n_vertices();
        if u0.len() != n {
            return Err(SniError::LengthMismatch {
                expected: n,
                got: u0.len(),
            });
        }
        let mut out = Vec::with_capacity(n * (steps + 1));
        out.extend_from_slice(u0);
        let mut u = u0.to_vec();
        for _ in 0..steps {
            u = self.step(&u)?;
            out.extend_from_slice(&u);
        }
        Ok(out)
    }
}

/// `‖pred − truth‖₂ / ‖truth‖₂`.
pub fn l2_relative_error<T: Real>(pred: &[T], truth: &[T]) -> Result<T> {
    if pred.len() != truth.len() {
        return Err(SniError::LengthMismatch {
            expected: truth.len(),
            got: pred.len(),
        });
    }
    let denom = norm2(truth);
    if !(denom > T::zero()) {
        return Err(SniError::UndefinedMetric(
            "relative error against an all-zero reference".into(),
        ));
    }
    Ok(dist2(pred, truth) / denom)
}

/// Relative error as a percentage with one decimal, e.g. `0.022 → "2.2"`.
pub fn format_percent(err: f64) -> String {
    format!("{:.1}", err * 100.0)
}

/// Mean and population standard deviation of relative errors in percent,
/// formatted as `"mean±std"`.
pub fn format_mean_std(errors: &[f64]) -> String {
    if errors.is_empty() {
        return "nan±nan".into();
    }
    let n = errors.len() as f64;
    let mean = errors.iter().sum::<f64>() / n;
    let var = errors.iter().map(|e| (e - mean) * (e - mean)).sum::<f64>() / n;
    format!("{}±{}", format_percent(mean), format_percent(var.sqrt()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{random_simple_polygon, refine_uniform, triangulate, BoundingBox};

    fn grid(n: usize) -> TriMesh<f64> {
        TriMesh::rectangle(n, n, [0.0, 0.0], [1.0, 1.0]).unwrap()
    }

    fn polygon_mesh(seed: u64, h: f64) -> TriMesh<f64> {
        let p = random_simple_polygon(5, 12, &BoundingBox::unit_centered(), seed).unwrap();
        triangulate(&p, h).unwrap()
    }

    /// Gaussian elimination with partial pivoting on a dense copy.
    fn dense_solve(a: Vec<Vec<f64>>, b: Vec<f64>) -> Vec<f64> {
        let n = b.len();
        let mut m: Vec<Vec<f64>> = a
            .into_iter()
            .zip(b)
            .map(|(mut row, bi)| {
                row.push(bi);
                row
            })
            .collect();
        for col in 0..n {
            let piv = (col..n)
                .max_by(|&i, &j| m[i][col].abs().total_cmp(&m[j][col].abs()))
                .unwrap();
            m.swap(col, piv);
            for r in col + 1..n {
                let f = m[r][col] / m[col][col];
                if f != 0.0 {
                    for c in col..=n {
                        m[r][c] -= f * m[col][c];
                    }
                }
            }
        }
        let mut x = vec![0.0; n];
        for r in (0..n).rev() {
            let s: f64 = (r + 1..n).map(|c| m[r][c] * x[c]).sum();
            x[r] = (m[r][n] - s) / m[r][r];
        }
        x
    }

    #[test]
    fn linear_boundary_data_is_reproduced() {
        let m = grid(8);
        let s = ProblemSpec::new(Equation::LaplaceDirichlet).with_boundary_fn(&m, |p| p[0]);
        let u = solve_direct(&m, &s).unwrap();
        for (v, p) in m.vertices.iter().enumerate() {
            assert!((u[v] - p[0]).abs() <= 1e-10);
        }
    }

    #[test]
    fn galerkin_exact_on_random_meshes() {
        for seed in 0..5 {
            let m = polygon_mesh(seed, 0.08);
            let f = |p: [f64; 2]| 0.3 - 1.2 * p[0] + 0.7 * p[1];
            let s = ProblemSpec::new(Equation::LaplaceDirichlet).with_boundary_fn(&m, f);
            let u = solve_direct(&m, &s).unwrap();
            let mut d = s.clone();
            d.equation = Equation::Darcy;
            d.coeff_a = Some(vec![2.5; m.n_vertices()]);
            d.source_f = Some(vec![0.0; m.n_vertices()]);
            let ud = solve_direct(&m, &d).unwrap();
            for (v, &p) in m.vertices.iter().enumerate() {
                assert!((u[v] - f(p)).abs() <= 1e-9, "seed {seed} vertex {v}");
                assert!((ud[v] - f(p)).abs() <= 1e-9, "darcy seed {seed} vertex {v}");
            }
        }
    }

    #[test]
    fn cg_matches_dense_elimination() {
        let m = grid(20);
        let s = ProblemSpec::new(Equation::LaplaceDirichlet)
            .with_boundary_fn(&m, |p| (3.0 * p[0]).sin() * (1.0 + p[1] * p[1]));
        let sys = assemble(&m, &s, None).unwrap();
        let u = solve_cg(&sys, 1e-10, cg_cap(m.n_vertices()), None).unwrap();
        let r: Vec<f64> = sys
            .matrix
            .mul_vec(&u)
            .iter()
            .zip(&sys.rhs)
            .map(|(a, b)| a - b)
            .collect();
        assert!(norm2(&r) <= 1e-10 * norm2(&sys.rhs));
        let dense = dense_solve(sys.matrix.to_dense(), sys.rhs.clone());
        let worst = u.iter().zip(&dense).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        assert!(worst <= 1e-8, "max deviation {worst}");
    }

    #[test]
    fn maximum_principle_holds() {
        for seed in 10..15 {
            let m = polygon_mesh(seed, 0.06);
            let s = ProblemSpec::new(Equation::LaplaceDirichlet)
                .with_boundary_fn(&m, |p| (7.0 * p[0]).cos() + p[1]);
            let u = solve_direct(&m, &s).unwrap();
            let lo = s.dirichlet_values.values().copied().fold(f64::INFINITY, f64::min);
            let hi = s.dirichlet_values.values().copied().fold(f64::NEG_INFINITY, f64::max);
            for &x in &u {
                assert!(x >= lo - 1e-9 && x <= hi + 1e-9, "seed {seed}: {x} outside [{lo}, {hi}]");
            }
        }
    }

    #[test]
    fn constants_are_preserved() {
        let m = polygon_mesh(3, 0.1);
        let n = m.n_vertices();
        let s = ProblemSpec::new(Equation::LaplaceDirichlet).with_boundary_fn(&m, |_| 0.7);
        for x in solve_direct(&m, &s).unwrap() {
            assert!((x - 0.7).abs() <= 1e-12);
        }
        let mut nl = s.clone();
        nl.equation = Equation::NonlinearLaplace;
        for x in solve_direct(&m, &nl).unwrap() {
            assert!((x - 0.7).abs() <= 1e-12);
        }
        let mut h = s.clone();
        h.equation = Equation::Heat;
        h.alpha = Some(0.9);
        h.dt = Some(0.01);
        h.n_steps = Some(5);
        h.initial_u0 = Some(vec![0.7; n]);
        let series = solve_direct(&m, &h).unwrap();
        assert_eq!(series.len(), 6 * n);
        for x in series {
            assert!((x - 0.7).abs() <= 1e-12);
        }
    }

    #[test]
    fn heat_energy_decays() {
        let m = refine_uniform(&grid(4), 2);
        let n = m.n_vertices();
        let mut s = ProblemSpec::new(Equation::Heat).with_boundary_fn(&m, |_| 0.0);
        let bmask = m.boundary_vertex_mask();
        s.initial_u0 = Some(
            m.vertices
                .iter()
                .zip(&bmask)
                .map(|(p, &b)| if b { 0.0 } else { (p[0] * 9.0).sin().abs() + p[1] })
                .collect(),
        );
        s.alpha = Some(1.0);
        s.dt = Some(0.01);
        s.n_steps = Some(10);
        let series = solve_direct(&m, &s).unwrap();
        let norms: Vec<f64> = series.chunks(n).map(norm2).collect();
        for w in norms.windows(2) {
            assert!(w[1] <= w[0], "{} > {}", w[1], w[0]);
        }
    }

    #[test]
    fn picard_fixed_point() {
        let m = polygon_mesh(21, 0.08);
        let s = ProblemSpec::new(Equation::NonlinearLaplace)
            .with_boundary_fn(&m, |p| 1.0 + 2.0 * p[0] + p[1] * p[1]);
        let sol = picard(&m, &s, None).unwrap();
        assert!(*sol.history.last().unwrap() < PICARD_TOL);
        let again = solve_cg(
            &assemble(&m, &s, Some(&sol.u)).unwrap(),
            1e-12,
            cg_cap(m.n_vertices()),
            None,
        )
        .unwrap();
        assert!(l2_relative_error(&again, &sol.u).unwrap() <= 1e-8);
        // nonlinearity matters here: the Laplace solution is not a fixed point
        let lap = solve_cg(
            &assemble(&m, &s, Some(&vec![0.0; m.n_vertices()])).unwrap(),
            1e-12,
            cg_cap(m.n_vertices()),
            None,
        )
        .unwrap();
        assert!(l2_relative_error(&lap, &sol.u).unwrap() > 1e-4);
    }

    #[test]
    fn prepared_linear_matches_fresh_solve() {
        let m = grid(10);
        let s = ProblemSpec::new(Equation::LaplaceDirichlet).with_boundary_fn(&m, |p| p[0] * p[1]);
        let prep = PreparedLinear::new(&m, &s).unwrap();
        let mut s2 = s.clone();
        for v in s2.dirichlet_values.values_mut() {
            *v = 1.0 - *v;
        }
        let a = prep.solve(&dirichlet_vector(m.n_vertices(), &s2.dirichlet_values), None).unwrap();
        let b = solve_direct(&m, &s2).unwrap();
        assert!(l2_relative_error(&a, &b).unwrap() <= 1e-9);
    }

    #[test]
    fn relative_error_metric() {
        assert_eq!(l2_relative_error(&[1.0, 2.0], &[1.0, 2.0]).unwrap(), 0.0);
        let e = l2_relative_error(&[0.0, 1.0], &[1.0, 0.0]).unwrap();
        assert!((e - 2f64.sqrt()).abs() < 1e-15);
        assert!(matches!(
            l2_relative_error(&[1.0], &[0.0]),
            Err(SniError::UndefinedMetric(_))
        ));
        assert_eq!(format_percent(0.022), "2.2");
        assert_eq!(format_mean_std(&[0.016, 0.028]), "2.2±0.6");
    }

    #[test]
    fn single_precision_solve() {
        let m = TriMesh::<f32>::rectangle(6, 6, [0.0, 0.0], [1.0, 1.0]).unwrap();
        let s = ProblemSpec::new(Equation::LaplaceDirichlet).with_boundary_fn(&m, |p| p[0]);
        let sys = assemble(&m, &s, None).unwrap();
        let u = solve_cg(&sys, 1e-5, 1000, None).unwrap();
        for (v, p) in m.vertices.iter().enumerate() {
            assert!((u[v] - p[0]).abs() < 1e-4);
        }
    }
}
