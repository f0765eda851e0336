use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Result, SniError};
use crate::geometry::{edge_key, TriMesh};
use crate::scalar::Real;

/// Equations the assembler understands.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Equation {
    /// `−Δu = 0`, Dirichlet data on the whole boundary.
    LaplaceDirichlet,
    /// `−Δu = 0` with Dirichlet and Neumann arcs.
    LaplaceMixed,
    /// `−∇·(a∇u) = f`.
    Darcy,
    /// `∂u/∂t = α Δu`, backward Euler in time.
    Heat,
    /// `−∇·((u² + 1)∇u) = 0`.
    NonlinearLaplace,
}

impl Equation {
    pub const ALL: [Equation; 5] = [
        Equation::LaplaceDirichlet,
        Equation::LaplaceMixed,
        Equation::Darcy,
        Equation::Heat,
        Equation::NonlinearLaplace,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Equation::LaplaceDirichlet => "laplace_dirichlet",
            Equation::LaplaceMixed => "laplace_mixed",
            Equation::Darcy => "darcy",
            Equation::Heat => "heat",
            Equation::NonlinearLaplace => "nonlinear_laplace",
        }
    }

    pub fn admits_neumann(self) -> bool {
        self == Equation::LaplaceMixed
    }
}

impl std::str::FromStr for Equation {
    type Err = SniError;
    fn from_str(s: &str) -> Result<Self> {
        Equation::ALL
            .into_iter()
            .find(|e| e.name() == s || e.name().replace('_', "-") == s)
            .ok_or_else(|| SniError::Config(format!("unknown equation {s:?}")))
    }
}

impl std::fmt::Display for Equation {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

/// Boundary data and input fields of one boundary value problem on a mesh.
///
/// Which boundary vertices are Dirichlet is decided here, not by the mesh
/// tags: a vertex is Dirichlet iff it has an entry in `dirichlet_values`.
/// Neumann edges are keyed by `(min, max)` vertex pairs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Real")]
pub struct ProblemSpec<T> {
    pub equation: Equation,
    pub dirichlet_values: BTreeMap<usize, T>,
    #[serde(with = "neumann_list", default)]
    pub neumann_values: BTreeMap<(usize, usize), T>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub coeff_a: Option<Vec<T>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub source_f: Option<Vec<T>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub alpha: Option<T>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub initial_u0: Option<Vec<T>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub n_steps: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dt: Option<T>,
}

mod neumann_list {
    use std::collections::BTreeMap;

    use serde::{Deserialize, Deserializer, Serialize, Serializer};

    #[derive(Serialize, Deserialize)]
    struct Entry<T> {
        v: [usize; 2],
        g: T,
    }

    pub fn serialize<S: Serializer, T: Serialize + Copy>(
        map: &BTreeMap<(usize, usize), T>,
        s: S,
    ) -> Result<S::Ok, S::Error> {
        let list: Vec<Entry<T>> = map
            .iter()
            .map(|(&(a, b), &g)| Entry { v: [a, b], g })
            .collect();
        list.serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>, T: Deserialize<'de>>(
        d: D,
    ) -> Result<BTreeMap<(usize, usize), T>, D::Error> {
        let list: Vec<Entry<T>> = Vec::deserialize(d)?;
        Ok(list
            .into_iter()
            .map(|e| ((e.v[0].min(e.v[1]), e.v[0].max(e.v[1])), e.g))
            .collect())
    }
}

impl<T: Real> ProblemSpec<T> {
    /// Empty problem of the given kind; fill in data before use.
    pub fn new(equation: Equation) -> Self {
        Self {
            equation,
            dirichlet_values: BTreeMap::new(),
            neumann_values: BTreeMap::new(),
            coeff_a: None,
            source_f: None,
            alpha: None,
            initial_u0: None,
            n_steps: None,
            dt: None,
        }
    }

    /// Dirichlet data `u_D(x)` on every boundary vertex of `mesh`.
    pub fn with_boundary_fn(mut self, mesh: &TriMesh<T>, u_d: impl Fn([T; 2]) -> T) -> Self {
        for (v, on) in mesh.boundary_vertex_mask().into_iter().enumerate() {
            if on {
                self.dirichlet_values.insert(v, u_d(mesh.vertices[v]));
            }
        }
        self
    }

    pub fn is_dirichlet(&self, v: usize) -> bool {
        self.dirichlet_values.contains_key(&v)
    }

    /// Per-vertex Dirichlet flags for a mesh of `n` vertices.
    pub fn dirichlet_mask(&self, n: usize) -> Vec<bool> {
        let mut m = vec![false; n];
        for &v in self.dirichlet_values.keys() {
            if v < n {
                m[v] = true;
            }
        }
        m
    }

    /// Number of stored time levels (`n_steps + 1`) for Heat, 1 otherwise.
    pub fn n_levels(&self) -> usize {
        match self.equation {
            Equation::Heat => self.n_steps.unwrap_or(0) + 1,
            _ => 1,
        }
    }

    /// Sets the flux on boundary edge `{a, b}` (either orientation).
    pub fn set_neumann(&mut self, a: usize, b: usize, g: T) {
        self.neumann_values.insert(edge_key(a, b), g);
    }

    pub fn neumann_g(&self, a: usize, b: usize) -> Option<T> {
        self.neumann_values.get(&edge_key(a, b)).copied()
    }

    /// Checks coverage of the boundary, field lengths and coercivity.
    pub fn validate(&self, mesh: &TriMesh<T>) -> Result<()> {
        let n = mesh.n_vertices();
        let spec_err = |m: String| Err(SniError::Specification(m));
        if self.dirichlet_values.is_empty() {
            return spec_err("at least one Dirichlet vertex is required".into());
        }
        for (&v, &val) in &self.dirichlet_values {
            if v >= n {
                return Err(SniError::IndexOutOfRange { index: v, len: n });
            }
            if !val.is_finite() {
                return spec_err(format!("non-finite Dirichlet value at vertex {v}"));
            }
        }
        if !self.neumann_values.is_empty() && !self.equation.admits_neumann() {
            return spec_err(format!("{} does not take Neumann data", self.equation));
        }
        let boundary: std::collections::HashSet<(usize, usize)> = mesh
            .boundary_edges
            .iter()
            .map(|e| edge_key(e.v[0], e.v[1]))
            .collect();
        for (&(a, b), &g) in &self.neumann_values {
            if !boundary.contains(&(a, b)) {
                return spec_err(format!("Neumann edge ({a}, {b}) is not a boundary edge"));
            }
            if !g.is_finite() {
                return spec_err(format!("non-finite Neumann value on edge ({a}, {b})"));
            }
        }
        for e in &mesh.boundary_edges {
            let [a, b] = e.v;
            if self.neumann_g(a, b).is_none() {
                for v in [a, b] {
                    if !self.is_dirichlet(v) {
                        return spec_err(format!("boundary vertex {v} has no boundary condition"));
                    }
                }
            }
        }

        let check_field = |name: &str, f: &Option<Vec<T>>, wanted: bool| -> Result<()> {
            match (f, wanted) {
                (Some(v), true) if v.len() != n => Err(SniError::Specification(format!(
                    "{name} has {} entries for {n} vertices",
                    v.len()
                ))),
                (Some(v), true) if v.iter().any(|x| !x.is_finite()) => {
                    Err(SniError::Specification(format!("{name} has non-finite entries")))
                }
                (Some(_), true) => Ok(()),
                (None, true) => Err(SniError::Specification(format!(
                    "{name} is required for {}",
                    self.equation
                ))),
                (Some(_), false) => Err(SniError::Specification(format!(
                    "{name} is not used by {}",
                    self.equation
                ))),
                (None, false) => Ok(()),
            }
        };
        let darcy = self.equation == Equation::Darcy;
        let heat = self.equation == Equation::Heat;
        check_field("coeff_a", &self.coeff_a, darcy)?;
        check_field("source_f", &self.source_f, darcy)?;
        check_field("initial_u0", &self.initial_u0, heat)?;
        if let Some(a) = &self.coeff_a {
            if let Some(v) = a.iter().position(|&x| !(x > T::zero())) {
                return Err(SniError::Coercivity(format!("coeff_a[{v}] = {} is not positive", a[v])));
            }
        }
        match (heat, self.alpha, self.dt, self.n_steps) {
            (true, Some(alpha), Some(dt), Some(steps)) => {
                if !(alpha > T::zero()) {
                    return Err(SniError::Coercivity(format!("alpha = {alpha} is not positive")));
                }
                if !(dt > T::zero()) {
                    return spec_err(format!("dt = {dt} is not positive"));
                }
                if steps == 0 {
                    return spec_err("n_steps must be at least 1".into());
                }
            }
            (true, ..) => return spec_err("heat needs alpha, dt and n_steps".into()),
            (false, None, None, None) => {}
            (false, ..) => {
                return spec_err(format!("alpha/dt/n_steps are not used by {}", self.equation))
            }
        }
        Ok(())
    }

    /// Converts every stored value to another scalar type.
    pub fn cast<U: Real>(&self) -> ProblemSpec<U> {
        let c = |x: T| U::lit(x.as_f64());
        let cv = |v: &Option<Vec<T>>| v.as_ref().map(|v| v.iter().map(|&x| c(x)).collect());
        ProblemSpec {
            equation: self.equation,
            dirichlet_values: self.dirichlet_values.iter().map(|(&k, &v)| (k, c(v))).collect(),
            neumann_values: self.neumann_values.iter().map(|(&k, &v)| (k, c(v))).collect(),
            coeff_a: cv(&self.coeff_a),
            source_f: cv(&self.source_f),
            alpha: self.alpha.map(c),
            initial_u0: cv(&self.initial_u0),
            n_steps: self.n_steps,
            dt: self.dt.map(c),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn square() -> TriMesh<f64> {
        TriMesh::rectangle(3, 3, [0.0, 0.0], [1.0, 1.0]).unwrap()
    }

    #[test]
    fn full_dirichlet_validates() {
        let m = square();
        let s = ProblemSpec::new(Equation::LaplaceDirichlet).with_boundary_fn(&m, |p| p[0]);
        s.validate(&m).unwrap();
    }

    #[test]
    fn uncovered_vertex_is_rejected() {
        let m = square();
        let mut s = ProblemSpec::new(Equation::LaplaceDirichlet).with_boundary_fn(&m, |_| 0.0);
        s.dirichlet_values.remove(&0);
        assert!(matches!(s.validate(&m), Err(SniError::Specification(_))));
    }

    #[test]
    fn neumann_only_for_mixed() {
        let m = square();
        let mut s = ProblemSpec::new(Equation::LaplaceDirichlet).with_boundary_fn(&m, |_| 0.0);
        s.neumann_values.insert((0, 1), 1.0);
        assert!(s.validate(&m).is_err());
        s.equation = Equation::LaplaceMixed;
        s.validate(&m).unwrap();
        s.neumann_values.insert((0, 5), 1.0);
        assert!(s.validate(&m).is_err(), "0-5 is an interior edge");
    }

    #[test]
    fn darcy_requires_positive_coefficient() {
        let m = square();
        let mut s = ProblemSpec::new(Equation::Darcy).with_boundary_fn(&m, |_| 0.0);
        assert!(s.validate(&m).is_err());
        s.coeff_a = Some(vec![1.0; 16]);
        s.source_f = Some(vec![0.0; 16]);
        s.validate(&m).unwrap();
        s.coeff_a.as_mut().unwrap()[3] = 0.0;
        assert!(matches!(s.validate(&m), Err(SniError::Coercivity(_))));
    }

    #[test]
    fn heat_parameters_checked() {
        let m = square();
        let mut s = ProblemSpec::new(Equation::Heat).with_boundary_fn(&m, |_| 0.0);
        s.initial_u0 = Some(vec![0.0; 16]);
        s.alpha = Some(1.0);
        s.dt = Some(0.01);
        s.n_steps = Some(3);
        s.validate(&m).unwrap();
        s.dt = Some(0.0);
        assert!(s.validate(&m).is_err());
        s.dt = Some(0.01);
        s.alpha = Some(-1.0);
        assert!(matches!(s.validate(&m), Err(SniError::Coercivity(_))));
    }

    #[test]
    fn json_round_trip() {
        let m = square();
        let mut s = ProblemSpec::new(Equation::LaplaceMixed).with_boundary_fn(&m, |p| p[1]);
        s.set_neumann(1, 0, 0.5);
        let text = serde_json::to_string(&s).unwrap();
        assert!(text.contains("\"neumann_values\":[{\"v\":[0,1],\"g\":0.5}]"));
        let back: ProblemSpec<f64> = serde_json::from_str(&text).unwrap();
        assert_eq!(back, s);
    }
}
