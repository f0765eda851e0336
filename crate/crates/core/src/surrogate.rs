//! Branch-trunk surrogate for normalized pure-Dirichlet Laplace local problems.
//!
//! `value(x) = Σ_i branch_i(b) · trunk_i(x) + output_bias`, where `b` holds the
//! Dirichlet data sampled at `M` equally spaced arc-length positions on the
//! outer boundary loop.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Result, SniError};
use crate::fem::{Equation, ProblemSpec};
use crate::geometry::{distance, BoundingBox, SubMesh, TriMesh};
use crate::scalar::{dot, Real};
use crate::symmetry::{apply_forward, apply_inverse, fit_normalizer};

pub const FORMAT_VERSION: u32 = 1;

/// Box and value range the surrogate was trained on.
pub fn training_box<T: Real>() -> BoundingBox<T> {
    BoundingBox::unit_centered()
}

pub fn training_range<T: Real>() -> (T, T) {
    (T::zero(), T::one())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Activation {
    #[serde(rename = "tanh")]
    Tanh,
    #[serde(rename = "id")]
    Identity,
}

/// Dense layer `y = act(W x + b)`, `W` row-major with shape `out × in`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Real")]
pub struct Layer<T> {
    pub w: Vec<Vec<T>>,
    pub b: Vec<T>,
    pub act: Activation,
}

impl<T: Real> Layer<T> {
    pub fn in_dim(&self) -> usize {
        self.w.first().map_or(0, Vec::len)
    }

    pub fn out_dim(&self) -> usize {
        self.w.len()
    }

    fn forward(&self, x: &[T]) -> Vec<T> {
        self.w
            .iter()
            .zip(&self.b)
            .map(|(row, &bias)| {
                let y = dot(row, x) + bias;
                match self.act {
                    Activation::Tanh => y.tanh(),
                    Activation::Identity => y,
                }
            })
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainingReport {
    pub val_l2_rel: f64,
    pub dataset_hash: String,
}

/// Serialized weight file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Real")]
pub struct SurrogateModel<T> {
    pub format_version: u32,
    #[serde(rename = "M")]
    pub m: usize,
    pub p: usize,
    pub branch: Vec<Layer<T>>,
    pub trunk: Vec<Layer<T>>,
    pub output_bias: T,
    pub training_report: TrainingReport,
}

fn check_stack<T: Real>(name: &str, layers: &[Layer<T>], input: usize, output: usize) -> Result<()> {
    if layers.is_empty() {
        return Err(SniError::Model(format!("{name} has no layers")));
    }
    let mut width = input;
    for (i, l) in layers.iter().enumerate() {
        let err = |msg: String| Err(SniError::Model(format!("{name} layer {i}: {msg}")));
        if l.w.is_empty() {
            return err("empty weight matrix".into());
        }
        if let Some(r) = l.w.iter().position(|row| row.len() != width) {
            return err(format!(
                "weight row {r} has {} columns, expected {width}",
                l.w[r].len()
            ));
        }
        if l.b.len() != l.w.len() {
            return err(format!("bias has {} entries for {} rows", l.b.len(), l.w.len()));
        }
        if l.w.iter().flatten().chain(&l.b).any(|x| !x.is_finite()) {
            return err("non-finite weight".into());
        }
        width = l.out_dim();
    }
    if width != output {
        return Err(SniError::Model(format!("{name} ends with width {width}, expected p = {output}")));
    }
    Ok(())
}

impl<T: Real> SurrogateModel<T> {
    /// Checks version, layer shape chaining and finiteness.
    pub fn validate(&self) -> Result<()> {
        if self.format_version != FORMAT_VERSION {
            return Err(SniError::Model(format!(
                "unsupported format_version {}",
                self.format_version
            )));
        }
        if self.m == 0 || self.p == 0 {
            return Err(SniError::Model("M and p must be positive".into()));
        }
        check_stack("branch", &self.branch, self.m, self.p)?;
        check_stack("trunk", &self.trunk, 2, self.p)?;
        if !self.output_bias.is_finite() {
            return Err(SniError::Model("non-finite output_bias".into()));
        }
        Ok(())
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let model: Self = serde_json::from_str(text).map_err(|e| SniError::Model(format!("malformed weight file: {e}")))?;
        model.validate()?;
        Ok(model)
    }

    pub fn branch_features(&self, b: &[T]) -> Vec<T> {
        self.branch.iter().fold(b.to_vec(), |x, l| l.forward(&x))
    }

    pub fn trunk_features(&self, x: [T; 2]) -> Vec<T> {
        self.trunk.iter().fold(x.to_vec(), |h, l| l.forward(&h))
    }
}

/// Reads and validates a weight file.
pub fn load_model<T: Real>(path: impl AsRef<Path>) -> Result<SurrogateModel<T>> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path)
        .map_err(|e| SniError::Model(format!("cannot read {}: {e}", path.display())))?;
    SurrogateModel::from_json(&text)
}

/// Evaluates the model at every query point.
pub fn evaluate<T: Real>(model: &SurrogateModel<T>, branch_input: &[T], points: &[[T; 2]]) -> Result<Vec<T>> {
    if branch_input.len() != model.m {
        return Err(SniError::LengthMismatch {
            expected: model.m,
            got: branch_input.len(),
        });
    }
    let coeffs = model.branch_features(branch_input);
    Ok(points
        .iter()
        .map(|&x| dot(&coeffs, &model.trunk_features(x)) + model.output_bias)
        .collect())
}

/// Longest boundary loop by perimeter, as (vertex sequence, perimeter).
fn outer_loop<T: Real>(mesh: &TriMesh<T>) -> Option<(Vec<usize>, T)> {
    mesh.boundary_loops()
        .into_iter()
        .map(|lp| {
            let len = (0..lp.len())
                .map(|i| distance(mesh.vertices[lp[i]], mesh.vertices[lp[(i + 1) % lp.len()]]))
                .sum::<T>();
            (lp, len)
        })
        .max_by(|a, b| a.1.partial_cmp(&b.1).unwrap_or(std::cmp::Ordering::Equal))
}

/// Samples the Dirichlet data at `m` equally spaced arc-length positions on
/// the outer boundary loop, counter-clockwise from the loop vertex whose
/// direction from the loop centroid is closest to angle 0.
pub fn encode_boundary<T: Real>(mesh: &TriMesh<T>, spec: &ProblemSpec<T>, m: usize) -> Result<Vec<T>> {
    if !spec.neumann_values.is_empty() {
        return Err(SniError::UnsupportedBySurrogate("local problem has Neumann data".into()));
    }
    if matches!(spec.equation, Equation::Heat) {
        return Err(SniError::UnsupportedBySurrogate("time-dependent problem".into()));
    }
    let (lp, perimeter) =
        outer_loop(mesh).ok_or_else(|| SniError::UnsupportedBySurrogate("mesh has no boundary".into()))?;
    let value = |v: usize| {
        spec.dirichlet_values
            .get(&v)
            .copied()
            .ok_or_else(|| SniError::UnsupportedBySurrogate(format!("boundary vertex {v} is not Dirichlet")))
    };
    let vals: Vec<T> = lp.iter().map(|&v| value(v)).collect::<Result<_>>()?;
    let n = lp.len();
    let inv = T::one() / T::from_count(n);
    let c = lp.iter().fold([T::zero(); 2], |acc, &v| {
        [acc[0] + mesh.vertices[v][0] * inv, acc[1] + mesh.vertices[v][1] * inv]
    });
    let angle = |v: usize| {
        let p = mesh.vertices[v];
        (p[1] - c[1]).atan2(p[0] - c[0]).abs()
    };
    let start = (0..n)
        .min_by(|&a, &b| angle(lp[a]).partial_cmp(&angle(lp[b])).unwrap_or(std::cmp::Ordering::Equal))
        .unwrap_or(0);

    let mut out = Vec::with_capacity(m);
    let mut edge = 0;
    let mut walked = T::zero();
    for j in 0..m {
        let target = perimeter * T::from_count(j) / T::from_count(m);
        loop {
            let a = (start + edge) % n;
            let b = (a + 1) % n;
            let len = distance(mesh.vertices[lp[a]], mesh.vertices[lp[b]]);
            if walked + len >= target || edge + 1 >= n {
                let t = if len > T::zero() {
                    ((target - walked) / len).max(T::zero()).min(T::one())
                } else {
                    T::zero()
                };
                out.push(vals[a] + (vals[b] - vals[a]) * t);
                break;
            }
            walked += len;
            edge += 1;
        }
    }
    Ok(out)
}

/// Normalize, predict at every submesh vertex, pin the Dirichlet values and
/// map back.
pub fn local_inference<T: Real>(model: &SurrogateModel<T>, sub: &SubMesh<T>, spec: &ProblemSpec<T>) -> Result<Vec<T>> {
    if spec.equation != Equation::LaplaceDirichlet {
        return Err(SniError::UnsupportedBySurrogate(format!(
            "surrogate handles laplace_dirichlet, got {}",
            spec.equation
        )));
    }
    let rec = fit_normalizer(sub, spec, &training_box(), training_range())?;
    let (nsub, nspec) = apply_forward(&rec, sub, spec)?;
    let b = encode_boundary(&nsub.mesh, &nspec, model.m)?;
    let mut w = evaluate(model, &b, &nsub.mesh.vertices)?;
    for (&v, &x) in &nspec.dirichlet_values {
        w[v] = x;
    }
    Ok(apply_inverse(&rec, &w))
}
