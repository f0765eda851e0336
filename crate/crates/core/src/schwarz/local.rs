use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Result, SniError};
use crate::fem::{picard, solve_linear, Equation, PreparedLinear, ProblemSpec};
use crate::geometry::{edge_key, extract_submesh, SubMesh, TriMesh, VertexClass};
use crate::scalar::{norm2, Real};
use crate::surrogate::{local_inference, SurrogateModel};

/// Local boundary value problem of one subdomain at one iterate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Real")]
pub struct LocalProblem<T> {
    pub k: usize,
    pub submesh: SubMesh<T>,
    pub spec: ProblemSpec<T>,
}

/// Restricts a per-vertex field through `global_ids`.
pub(crate) fn restrict_field<T: Real>(field: &Option<Vec<T>>, ids: &[usize]) -> Option<Vec<T>> {
    field.as_ref().map(|f| ids.iter().map(|&g| f[g]).collect())
}

/// Everything about a subdomain that does not change between iterations.
#[derive(Debug, Clone)]
pub(crate) struct Subdomain<T> {
    pub submesh: SubMesh<T>,
    /// Local spec with artificial vertices holding a placeholder 0.
    pub template: ProblemSpec<T>,
    /// Local ids of vertices whose Dirichlet value comes from the iterate.
    pub artificial: Vec<usize>,
    pub prepared: Option<PreparedLinear<T>>,
}

impl<T: Real> Subdomain<T> {
    pub fn new(
        k: usize,
        mesh: &TriMesh<T>,
        spec: &ProblemSpec<T>,
        part: Vec<usize>,
        dirichlet: &[bool],
        prepare_linear: bool,
    ) -> Result<Self> {
        let submesh = extract_submesh(mesh, &part, dirichlet).map_err(|e| e.in_subdomain(k))?;
        let ids = &submesh.global_ids;
        let mut template = ProblemSpec::new(spec.equation);
        let mut artificial = Vec::new();
        let mut dvals = BTreeMap::new();
        for (l, &class) in submesh.classes.iter().enumerate() {
            match class {
                VertexClass::GlobalDirichlet => {
                    dvals.insert(l, spec.dirichlet_values[&ids[l]]);
                }
                VertexClass::Artificial => {
                    dvals.insert(l, T::zero());
                    artificial.push(l);
                }
                VertexClass::Interior | VertexClass::GlobalNeumann => {}
            }
        }
        template.dirichlet_values = dvals;
        for e in &submesh.mesh.boundary_edges {
            let [a, b] = e.v;
            if let Some(g) = spec.neumann_g(ids[a], ids[b]) {
                template.neumann_values.insert(edge_key(a, b), g);
            }
        }
        template.coeff_a = restrict_field(&spec.coeff_a, ids);
        template.source_f = restrict_field(&spec.source_f, ids);
        template.alpha = spec.alpha;
        template.dt = spec.dt;
        template.n_steps = spec.n_steps;
        template.initial_u0 = restrict_field(&spec.initial_u0, ids);
        template.validate(&submesh.mesh).map_err(|e| {
            SniError::Subdomain {
                k,
                source: Box::new(SniError::Specification(format!("inconsistent local problem: {e}"))),
            }
        })?;
        let prepared = if prepare_linear {
            Some(PreparedLinear::new(&submesh.mesh, &template).map_err(|e| e.in_subdomain(k))?)
        } else {
            None
        };
        Ok(Self {
            submesh,
            template,
            artificial,
            prepared,
        })
    }

    /// Local Dirichlet values as a full local vector (artificial entries from `u`).
    pub fn dirichlet_vector(&self, u: &[T]) -> Vec<T> {
        let mut v = vec![T::zero(); self.submesh.n_vertices()];
        for (&l, &x) in &self.template.dirichlet_values {
            v[l] = x;
        }
        for &l in &self.artificial {
            v[l] = u[self.submesh.global_ids[l]];
        }
        v
    }

    pub fn restrict(&self, u: &[T]) -> Vec<T> {
        self.submesh.global_ids.iter().map(|&g| u[g]).collect()
    }

    pub fn problem(&self, k: usize, u: &[T]) -> LocalProblem<T> {
        let mut spec = self.template.clone();
        for &l in &self.artificial {
            spec.dirichlet_values.insert(l, u[self.submesh.global_ids[l]]);
        }
        LocalProblem {
            k,
            submesh: self.submesh.clone(),
            spec,
        }
    }

    /// Exact local solve, warm-started from the restricted iterate.
    pub fn solve_exact(&self, k: usize, u: &[T]) -> Result<Vec<T>> {
        let guess = self.restrict(u);
        if let Some(prep) = &self.prepared {
            return prep.solve(&self.dirichlet_vector(u), Some(&guess));
        }
        let p = self.problem(k, u);
        match p.spec.equation {
            Equation::NonlinearLaplace => Ok(picard(&p.submesh.mesh, &p.spec, Some(&guess))?.u),
            _ => solve_linear(&p.submesh.mesh, &p.spec, Some(&guess)),
        }
    }

    pub fn solve_surrogate(&self, k: usize, u: &[T], model: &SurrogateModel<T>) -> Result<Vec<T>> {
        let p = self.problem(k, u);
        local_inference(model, &p.submesh, &p.spec)
    }
}

/// Unit-norm pseudo-random direction, zero where `fixed` is set; one stream
/// per `(seed, k, iteration)`.
pub(crate) fn perturbation_direction<T: Real>(seed: u64, k: usize, iteration: usize, fixed: &[bool]) -> Vec<T> {
    let mut key = [0u8; 32];
    key[..8].copy_from_slice(&seed.to_le_bytes());
    key[8..16].copy_from_slice(&(k as u64).to_le_bytes());
    key[16..24].copy_from_slice(&(iteration as u64).to_le_bytes());
    let mut rng = ChaCha8Rng::from_seed(key);
    let mut d: Vec<T> = fixed
        .iter()
        .map(|&f| {
            let x: f64 = rng.gen_range(-1.0..1.0);
            if f {
                T::zero()
            } else {
                T::lit(x)
            }
        })
        .collect();
    let nrm = norm2(&d);
    if nrm > T::zero() {
        for x in &mut d {
            *x /= nrm;
        }
    }
    d
}

/// Size of the injected error: `c · min(‖w‖₂, R·√m)` with `R` the global
/// Dirichlet data range and `m` the local vertex count.
pub(crate) fn perturbation_size<T: Real>(c: T, w_exact: &[T], data_range: T) -> T {
    let cap = data_range * T::from_count(w_exact.len()).sqrt();
    c * norm2(w_exact).min(cap)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn direction_is_unit_and_respects_fixed() {
        let fixed = [true, false, false, true, false];
        let d: Vec<f64> = perturbation_direction(3, 1, 7, &fixed);
        assert!((norm2(&d) - 1.0).abs() < 1e-14);
        assert_eq!(d[0], 0.0);
        assert_eq!(d[3], 0.0);
        let again: Vec<f64> = perturbation_direction(3, 1, 7, &fixed);
        assert_eq!(d, again);
        let other: Vec<f64> = perturbation_direction(3, 1, 8, &fixed);
        assert_ne!(d, other);
    }

    #[test]
    fn size_is_capped() {
        assert_eq!(perturbation_size(0.1, &[3.0, 4.0], 10.0), 0.5);
        let capped = perturbation_size(0.1, &[30.0, 40.0], 1.0);
        assert!((capped - 0.1 * 2f64.sqrt()).abs() < 1e-15);
    }
}
