use std::collections::BTreeMap;

use crate::error::{Result, SniError};
use crate::geometry::TriMesh;
use crate::scalar::Real;
use crate::sparse::CsrMatrix;

use super::problem::{Equation, ProblemSpec};

/// Linear system after Dirichlet elimination.
#[derive(Debug, Clone, PartialEq)]
pub struct SparseSystem<T> {
    pub matrix: CsrMatrix<T>,
    pub rhs: Vec<T>,
    pub dirichlet_mask: Vec<bool>,
}

/// Area and the unscaled barycentric gradients `(b_i, c_i)`; `∇λ_i = (b_i, c_i) / (2A)`.
#[inline]
fn element_geometry<T: Real>(p: [[T; 2]; 3]) -> (T, [T; 3], [T; 3]) {
    let b = [p[1][1] - p[2][1], p[2][1] - p[0][1], p[0][1] - p[1][1]];
    let c = [p[2][0] - p[1][0], p[0][0] - p[2][0], p[1][0] - p[0][0]];
    let area = crate::geometry::orient2d(p[0], p[1], p[2]) * T::lit(0.5);
    (area, b, c)
}

/// P1 stiffness matrix `∫ κ ∇φ_i·∇φ_j` with one coefficient per triangle.
pub fn stiffness_matrix<T: Real>(mesh: &TriMesh<T>, coef: &[T]) -> CsrMatrix<T> {
    assert_eq!(coef.len(), mesh.n_triangles());
    let mut trip = Vec::with_capacity(9 * mesh.n_triangles());
    let four = T::lit(4.0);
    for (t, tri) in mesh.triangles.iter().enumerate() {
        let (area, b, c) = element_geometry(mesh.triangle_points(t));
        let scale = coef[t] / (four * area);
        for i in 0..3 {
            for j in 0..3 {
                trip.push((tri[i], tri[j], scale * (b[i] * b[j] + c[i] * c[j])));
            }
        }
    }
    let n = mesh.n_vertices();
    CsrMatrix::from_triplets(n, n, &trip)
}

/// Consistent P1 mass matrix, `A/12 · (1 + δ_ij)` per element.
pub fn mass_matrix<T: Real>(mesh: &TriMesh<T>) -> CsrMatrix<T> {
    let mut trip = Vec::with_capacity(9 * mesh.n_triangles());
    let twelfth = T::one() / T::lit(12.0);
    for (t, tri) in mesh.triangles.iter().enumerate() {
        let a = mesh.triangle_area(t) * twelfth;
        for i in 0..3 {
            for j in 0..3 {
                let m = if i == j { a + a } else { a };
                trip.push((tri[i], tri[j], m));
            }
        }
    }
    let n = mesh.n_vertices();
    CsrMatrix::from_triplets(n, n, &trip)
}

/// Per-vertex field averaged over each triangle.
pub fn triangle_average<T: Real>(mesh: &TriMesh<T>, field: &[T]) -> Vec<T> {
    let third = T::one() / T::lit(3.0);
    mesh.triangles
        .iter()
        .map(|&[a, b, c]| (field[a] + field[b] + field[c]) * third)
        .collect()
}

/// Element coefficient of the (linearized) operator.
fn element_coefficients<T: Real>(
    mesh: &TriMesh<T>,
    spec: &ProblemSpec<T>,
    linearization: Option<&[T]>,
) -> Result<Vec<T>> {
    let nt = mesh.n_triangles();
    match spec.equation {
        Equation::LaplaceDirichlet | Equation::LaplaceMixed => Ok(vec![T::one(); nt]),
        Equation::Darcy => Ok(triangle_average(mesh, spec.coeff_a.as_deref().unwrap_or(&[]))),
        Equation::Heat => Ok(vec![spec.alpha.unwrap_or(T::one()); nt]),
        Equation::NonlinearLaplace => {
            let u = linearization.ok_or_else(|| {
                SniError::Specification("nonlinear Laplace needs a linearization point".into())
            })?;
            if u.len() != mesh.n_vertices() {
                return Err(SniError::LengthMismatch {
                    expected: mesh.n_vertices(),
                    got: u.len(),
                });
            }
            let k: Vec<T> = u.iter().map(|&x| x * x + T::one()).collect();
            Ok(triangle_average(mesh, &k))
        }
    }
}

/// Load vector: mass-weighted source plus Neumann edge fluxes.
fn load_vector<T: Real>(mesh: &TriMesh<T>, spec: &ProblemSpec<T>) -> Vec<T> {
    let n = mesh.n_vertices();
    let mut b = match (&spec.equation, &spec.source_f) {
        (Equation::Darcy, Some(f)) => mass_matrix(mesh).mul_vec(f),
        _ => vec![T::zero(); n],
    };
    // one-point midpoint rule: g · |e| / 2 to each endpoint
    let half = T::lit(0.5);
    for e in &mesh.boundary_edges {
        let [i, j] = e.v;
        if let Some(g) = spec.neumann_g(i, j) {
            let len = crate::geometry::distance(mesh.vertices[i], mesh.vertices[j]);
            b[i] += g * len * half;
            b[j] += g * len * half;
        }
    }
    b
}

/// Matrix and load vector before any boundary condition is imposed.
///
/// For Heat this is the first backward-Euler step `(M + dt·α·K, M·u₀)`.
pub fn assemble_unconstrained<T: Real>(
    mesh: &TriMesh<T>,
    spec: &ProblemSpec<T>,
    linearization: Option<&[T]>,
) -> Result<(CsrMatrix<T>, Vec<T>)> {
    let coef = element_coefficients(mesh, spec, linearization)?;
    if let Some(t) = coef.iter().position(|&k| !(k > T::zero())) {
        return Err(SniError::Coercivity(format!(
            "element coefficient {} on triangle {t}",
            coef[t]
        )));
    }
    let k = stiffness_matrix(mesh, &coef);
    if spec.equation == Equation::Heat {
        let m = mass_matrix(mesh);
        let dt = spec.dt.unwrap_or(T::zero());
        let b = m.mul_vec(spec.initial_u0.as_deref().unwrap_or(&vec![T::zero(); mesh.n_vertices()]));
        return Ok((m.add_scaled(dt, &k), b));
    }
    Ok((k, load_vector(mesh, spec)))
}

/// Symmetric Dirichlet elimination of a fixed matrix, reusable for any
/// Dirichlet values on the same vertex set.
#[derive(Debug, Clone)]
pub struct DirichletElimination<T> {
    matrix: CsrMatrix<T>,
    coupling: CsrMatrix<T>,
    mask: Vec<bool>,
}

impl<T: Real> DirichletElimination<T> {
    pub fn new(a: &CsrMatrix<T>, mask: Vec<bool>) -> Self {
        let n = a.n_rows();
        assert_eq!(mask.len(), n);
        let mut coupling = Vec::new();
        for r in (0..n).filter(|&r| !mask[r]) {
            coupling.extend(a.row(r).filter(|&(c, _)| mask[c]).map(|(c, v)| (r, c, v)));
        }
        let mut kept = Vec::with_capacity(a.nnz());
        for r in 0..n {
            if mask[r] {
                kept.push((r, r, T::one()));
            } else {
                kept.extend(a.row(r).filter(|&(c, _)| !mask[c]).map(|(c, v)| (r, c, v)));
            }
        }
        let matrix = CsrMatrix::from_triplets(n, n, &kept);
        Self {
            matrix,
            coupling: CsrMatrix::from_triplets(n, n, &coupling),
            mask,
        }
    }

    pub fn matrix(&self) -> &CsrMatrix<T> {
        &self.matrix
    }

    pub fn mask(&self) -> &[bool] {
        &self.mask
    }

    /// Right-hand side `b − A_{·D} u_D` on free rows and `u_D` on Dirichlet rows.
    /// Only the Dirichlet entries of `values` are read.
    pub fn rhs(&self, b: &[T], values: &[T]) -> Vec<T> {
        let mut r = self.coupling.mul_vec(values);
        for i in 0..r.len() {
            r[i] = if self.mask[i] { values[i] } else { b[i] - r[i] };
        }
        r
    }

    pub fn system(&self, b: &[T], values: &[T]) -> SparseSystem<T> {
        SparseSystem {
            matrix: self.matrix.clone(),
            rhs: self.rhs(b, values),
            dirichlet_mask: self.mask.clone(),
        }
    }
}

/// Full-length vector holding the Dirichlet values (zero elsewhere).
pub fn dirichlet_vector<T: Real>(n: usize, values: &BTreeMap<usize, T>) -> Vec<T> {
    let mut v = vec![T::zero(); n];
    for (&i, &x) in values {
        v[i] = x;
    }
    v
}

/// Symmetric elimination: Dirichlet rows and columns zeroed, unit diagonal,
/// rhs = u_D there, and the removed couplings moved to the rhs.
pub fn apply_dirichlet<T: Real>(
    a: &CsrMatrix<T>,
    b: &[T],
    values: &BTreeMap<usize, T>,
) -> SparseSystem<T> {
    let n = a.n_rows();
    let mut mask = vec![false; n];
    for &i in values.keys() {
        mask[i] = true;
    }
    DirichletElimination::new(a, mask).system(b, &dirichlet_vector(n, values))
}

/// Validates `spec` and assembles the constrained P1 system.
///
/// `linearization` is required for the nonlinear Laplace equation, where the
/// coefficient `u² + 1` is evaluated at it and averaged per triangle.
pub fn assemble<T: Real>(
    mesh: &TriMesh<T>,
    spec: &ProblemSpec<T>,
    linearization: Option<&[T]>,
) -> Result<SparseSystem<T>> {
    spec.validate(mesh)?;
    let (a, b) = assemble_unconstrained(mesh, spec, linearization)?;
    Ok(apply_dirichlet(&a, &b, &spec.dirichlet_values))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn grid(n: usize) -> TriMesh<f64> {
        TriMesh::rectangle(n, n, [0.0, 0.0], [1.0, 1.0]).unwrap()
    }

    #[test]
    fn reference_triangle_stiffness() {
        let m: TriMesh<f64> = TriMesh::from_triangles(
            vec![[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]],
            vec![[0, 1, 2]],
            |_, _| crate::geometry::BoundaryTag::dirichlet(0),
        )
        .unwrap();
        let k: Vec<Vec<f64>> = stiffness_matrix(&m, &[1.0]).to_dense();
        let expected = [[1.0, -0.5, -0.5], [-0.5, 0.5, 0.0], [-0.5, 0.0, 0.5]];
        for i in 0..3 {
            for j in 0..3 {
                assert!((k[i][j] - expected[i][j]).abs() < 1e-15);
            }
        }
        let mass: Vec<Vec<f64>> = mass_matrix(&m).to_dense();
        assert!((mass[0][0] - 1.0 / 12.0).abs() < 1e-15);
        assert!((mass[0][1] - 1.0 / 24.0).abs() < 1e-15);
    }

    #[test]
    fn stiffness_rows_sum_to_zero() {
        let m = crate::geometry::refine_uniform(&grid(3), 2);
        let k = stiffness_matrix(&m, &vec![1.0; m.n_triangles()]);
        for r in 0..k.n_rows() {
            let s: f64 = k.row(r).map(|(_, v)| v).sum();
            assert!(s.abs() < 1e-12, "row {r} sums to {s}");
        }
    }

    #[test]
    fn mass_sums_to_area() {
        let m = grid(5);
        let total: f64 = mass_matrix(&m).to_dense().iter().flatten().sum();
        assert!((total - 1.0).abs() < 1e-14);
    }

    #[test]
    fn darcy_unit_coefficient_matches_laplace() {
        let m = grid(6);
        let lap = ProblemSpec::new(Equation::LaplaceDirichlet).with_boundary_fn(&m, |p| p[0] * p[1]);
        let mut darcy = lap.clone();
        darcy.equation = Equation::Darcy;
        darcy.coeff_a = Some(vec![1.0; m.n_vertices()]);
        darcy.source_f = Some(vec![0.0; m.n_vertices()]);
        let a = assemble(&m, &lap, None).unwrap();
        let b = assemble(&m, &darcy, None).unwrap();
        for r in 0..a.matrix.n_rows() {
            for (c, v) in a.matrix.row(r) {
                assert!((v - b.matrix.get(r, c)).abs() <= 1e-14);
            }
            assert!((a.rhs[r] - b.rhs[r]).abs() <= 1e-14);
        }
    }

    #[test]
    fn elimination_is_symmetric() {
        let m = grid(5);
        let s = ProblemSpec::new(Equation::LaplaceDirichlet).with_boundary_fn(&m, |p| p[0]);
        let sys = assemble(&m, &s, None).unwrap();
        assert!(sys.matrix.asymmetry() <= 1e-12 * sys.matrix.max_abs());
        for (&v, &x) in &s.dirichlet_values {
            assert_eq!(sys.rhs[v], x);
            assert_eq!(sys.matrix.row(v).collect::<Vec<_>>(), vec![(v, 1.0)]);
        }
    }

    #[test]
    fn zero_data_gives_zero_rhs() {
        let m = grid(4);
        let s = ProblemSpec::new(Equation::LaplaceDirichlet).with_boundary_fn(&m, |_| 0.0);
        let sys = assemble(&m, &s, None).unwrap();
        assert!(sys.rhs.iter().all(|&x| x == 0.0));
    }

    #[test]
    fn neumann_load_integrates_flux() {
        // g = 2 on the bottom side of the unit square: total load 2
        let m = grid(4);
        let mut s = ProblemSpec::new(Equation::LaplaceMixed);
        for e in &m.boundary_edges {
            if e.tag.segment == "0" {
                s.set_neumann(e.v[0], e.v[1], 2.0);
            }
        }
        let (_, b) = assemble_unconstrained(&m, &s, None).unwrap();
        let total: f64 = b.iter().sum();
        assert!((total - 2.0).abs() < 1e-14);
    }
}
