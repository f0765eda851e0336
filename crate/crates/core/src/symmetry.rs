//! Symmetry transforms of the supported equations, used to normalize local
//! problems before a learned solve and to map the prediction back.
//!
//! Coordinates transform as `x' = s · Rot(θ) · (x + shift)`, values as
//! `u' = σ(s) · v_s · (u + v_shift)` where `σ(s)` is the value factor the
//! equation attaches to a spatial scaling (1, `s` or `s²`).

use serde::{Deserialize, Serialize};

use crate::error::{Result, SniError};
use crate::fem::{Equation, ProblemSpec};
use crate::geometry::{BoundingBox, SubMesh};
use crate::scalar::Real;

/// One row of the symmetry table.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TransformKind {
    SpatialShift,
    SpatialRotation,
    SpatialScaling,
    ValueShift,
    ValueScaling,
}

impl TransformKind {
    pub const ALL: [TransformKind; 5] = [
        TransformKind::SpatialShift,
        TransformKind::SpatialRotation,
        TransformKind::SpatialScaling,
        TransformKind::ValueShift,
        TransformKind::ValueScaling,
    ];
}

/// Whether `kind` is a symmetry of `equation`.
pub fn admits(equation: Equation, kind: TransformKind) -> bool {
    match kind {
        TransformKind::SpatialShift | TransformKind::SpatialRotation | TransformKind::SpatialScaling => true,
        TransformKind::ValueShift | TransformKind::ValueScaling => equation != Equation::NonlinearLaplace,
    }
}

/// All admitted `(equation, transform)` pairs.
pub fn admitted_pairs() -> Vec<(Equation, TransformKind)> {
    Equation::ALL
        .into_iter()
        .flat_map(|e| TransformKind::ALL.into_iter().map(move |k| (e, k)))
        .filter(|&(e, k)| admits(e, k))
        .collect()
}

/// Parameters of an invertible symmetry transform.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Real")]
pub struct TransformRecord<T> {
    pub equation: Equation,
    pub spatial_shift: [T; 2],
    pub spatial_rotation: T,
    pub spatial_scale: T,
    pub value_shift: T,
    pub value_scale: T,
}

impl<T: Real> TransformRecord<T> {
    pub fn identity(equation: Equation) -> Self {
        Self {
            equation,
            spatial_shift: [T::zero(); 2],
            spatial_rotation: T::zero(),
            spatial_scale: T::one(),
            value_shift: T::zero(),
            value_scale: T::one(),
        }
    }

    /// A record exercising a single table row with parameter `p`
    /// (shift amount, angle or scale factor). Shifts use `(p, −p/2)`.
    pub fn single(equation: Equation, kind: TransformKind, p: T) -> Self {
        let mut r = Self::identity(equation);
        match kind {
            TransformKind::SpatialShift => r.spatial_shift = [p, -p * T::lit(0.5)],
            TransformKind::SpatialRotation => r.spatial_rotation = p,
            TransformKind::SpatialScaling => r.spatial_scale = p,
            TransformKind::ValueShift => r.value_shift = p,
            TransformKind::ValueScaling => r.value_scale = p,
        }
        r
    }

    pub fn is_identity(&self) -> bool {
        *self == Self::identity(self.equation)
    }

    fn has_value_part(&self) -> bool {
        self.value_shift != T::zero() || self.value_scale != T::one()
    }

    /// Value factor induced by the spatial scaling.
    pub fn sigma(&self) -> T {
        sigma(self.equation, self.spatial_scale)
    }

    /// Total multiplicative factor on solution values, `σ(s) · v_s`.
    pub fn solution_factor(&self) -> T {
        self.sigma() * self.value_scale
    }

    pub fn validate(&self) -> Result<()> {
        let finite = self.spatial_shift.iter().all(|x| x.is_finite())
            && self.spatial_rotation.is_finite()
            && self.spatial_scale.is_finite()
            && self.value_shift.is_finite()
            && self.value_scale.is_finite();
        if !finite {
            return Err(SniError::UnsupportedTransform("non-finite parameter".into()));
        }
        if !(self.spatial_scale > T::zero()) {
            return Err(SniError::UnsupportedTransform(format!(
                "spatial scale {} must be positive",
                self.spatial_scale
            )));
        }
        if self.value_scale == T::zero() {
            return Err(SniError::UnsupportedTransform("value scale must be nonzero".into()));
        }
        if self.has_value_part() && !admits(self.equation, TransformKind::ValueShift) {
            return Err(SniError::UnsupportedTransform(format!(
                "{} has no value symmetry",
                self.equation
            )));
        }
        Ok(())
    }

    pub fn map_point(&self, p: [T; 2]) -> [T; 2] {
        let (sin, cos) = self.spatial_rotation.sin_cos();
        let x = p[0] + self.spatial_shift[0];
        let y = p[1] + self.spatial_shift[1];
        let s = self.spatial_scale;
        [s * (cos * x - sin * y), s * (sin * x + cos * y)]
    }

    /// Forward map of a solution (or Dirichlet/initial) value.
    #[inline]
    pub fn map_value(&self, u: T) -> T {
        self.solution_factor() * (u + self.value_shift)
    }

    /// Inverse of [`map_value`](Self::map_value).
    #[inline]
    pub fn unmap_value(&self, w: T) -> T {
        w / self.solution_factor() - self.value_shift
    }

    pub fn forward_values(&self, u: &[T]) -> Vec<T> {
        u.iter().map(|&x| self.map_value(x)).collect()
    }
}

fn sigma<T: Real>(equation: Equation, s: T) -> T {
    match equation {
        Equation::LaplaceMixed => s,
        Equation::Darcy => s * s,
        _ => T::one(),
    }
}

/// Transforms a local problem. Coordinates and boundary/input data follow
/// the equation's symmetry: Neumann flux `g → v_s·g`, Darcy source
/// `f → v_s·f`, Heat diffusivity `α → s²·α`, initial data like the solution.
pub fn apply_forward<T: Real>(
    record: &TransformRecord<T>,
    submesh: &SubMesh<T>,
    spec: &ProblemSpec<T>,
) -> Result<(SubMesh<T>, ProblemSpec<T>)> {
    if record.equation != spec.equation {
        return Err(SniError::UnsupportedTransform(format!(
            "record for {} applied to a {} problem",
            record.equation, spec.equation
        )));
    }
    record.validate()?;
    if record.is_identity() {
        return Ok((submesh.clone(), spec.clone()));
    }
    let mut sub = submesh.clone();
    for p in &mut sub.mesh.vertices {
        *p = record.map_point(*p);
    }
    let mut out = spec.clone();
    for v in out.dirichlet_values.values_mut() {
        *v = record.map_value(*v);
    }
    // flux scales like the solution gradient: (σ/s)·v_s
    let g_factor = record.sigma() / record.spatial_scale * record.value_scale;
    for g in out.neumann_values.values_mut() {
        *g *= g_factor;
    }
    if let Some(f) = out.source_f.as_mut() {
        for x in f.iter_mut() {
            *x *= record.value_scale;
        }
    }
    if let Some(alpha) = out.alpha.as_mut() {
        *alpha *= record.spatial_scale * record.spatial_scale;
    }
    if let Some(u0) = out.initial_u0.as_mut() {
        for x in u0.iter_mut() {
            *x = record.map_value(*x);
        }
    }
    Ok((sub, out))
}

/// Maps a solution of the transformed problem back.
pub fn apply_inverse<T: Real>(record: &TransformRecord<T>, w: &[T]) -> Vec<T> {
    if record.is_identity() {
        return w.to_vec();
    }
    w.iter().map(|&x| record.unmap_value(x)).collect()
}

/// Range of the data that carries the value scale of a problem: Dirichlet
/// values, plus the initial condition for Heat.
fn data_range<T: Real>(spec: &ProblemSpec<T>) -> Option<(T, T)> {
    let mut it = spec
        .dirichlet_values
        .values()
        .chain(spec.initial_u0.iter().flatten())
        .copied();
    let first = it.next()?;
    Some(it.fold((first, first), |(lo, hi), x| (lo.min(x), hi.max(x))))
}

/// Chooses a normalizing transform: the bounding box is moved (and shrunk if
/// needed, never enlarged) into `training_box`, and the data range is mapped
/// onto `training_range` when it does not already fit. Rotation is never used.
/// For the nonlinear Laplace equation only the spatial part is fitted and
/// out-of-range data is passed through with a warning.
pub fn fit_normalizer<T: Real>(
    submesh: &SubMesh<T>,
    spec: &ProblemSpec<T>,
    training_box: &BoundingBox<T>,
    training_range: (T, T),
) -> Result<TransformRecord<T>> {
    let bbox = BoundingBox::of_points(&submesh.mesh.vertices)
        .ok_or_else(|| SniError::Normalizer("empty submesh".into()))?;
    let diam = bbox.width().max(bbox.height());
    if !(diam > T::zero()) {
        return Err(SniError::Normalizer("submesh has zero diameter".into()));
    }
    let (r0, r1) = training_range;
    if !(r1 > r0) {
        return Err(SniError::Normalizer(format!("empty training range [{r0}, {r1}]")));
    }
    let mut rec = TransformRecord::identity(spec.equation);
    let tol = T::epsilon() * T::lit(16.0) * (T::one() + diam);
    if !training_box.contains_box(&bbox, tol) {
        let ratio = (training_box.width() / bbox.width()).min(training_box.height() / bbox.height());
        let s = ratio.min(T::one());
        let c = bbox.center();
        let b = training_box.center();
        rec.spatial_scale = s;
        rec.spatial_shift = [b[0] / s - c[0], b[1] / s - c[1]];
    }

    let Some((lo, hi)) = data_range(spec) else {
        return Ok(rec);
    };
    let sig = rec.sigma();
    let (mlo, mhi) = (sig * lo, sig * hi);
    let rtol = T::epsilon() * T::lit(16.0) * (T::one() + r0.abs().max(r1.abs()));
    let fits = mlo >= r0 - rtol && mhi <= r1 + rtol;
    if fits {
        return Ok(rec);
    }
    if !admits(spec.equation, TransformKind::ValueShift) {
        log::warn!(
            "{} data range [{lo}, {hi}] lies outside [{r0}, {r1}] and has no value symmetry",
            spec.equation
        );
        return Ok(rec);
    }
    if hi > lo {
        let vs = (r1 - r0) / (sig * (hi - lo));
        rec.value_scale = vs;
        rec.value_shift = r0 / (sig * vs) - lo;
    } else {
        let mid = (r0 + r1) * T::lit(0.5);
        rec.value_shift = mid / sig - lo;
    }
    Ok(rec)
}
