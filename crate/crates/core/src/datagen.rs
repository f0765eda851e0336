//! Random training problems: shapes, boundary data and input fields drawn
//! per equation, solved exactly and written as JSON records.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Result, SniError};
use crate::fem::{solve_direct, Equation, ProblemSpec};
use crate::geometry::{
    distance, random_simple_polygon, triangulate, BoundaryEdge, BoundaryKind, BoundaryTag, BoundingBox, SubMesh,
    TriMesh,
};
use crate::scalar::Real;
use crate::surrogate::{encode_boundary, training_box, training_range};
use crate::symmetry::{apply_forward, fit_normalizer, TransformRecord};

/// Boundary samples stored per record.
pub const ENCODING_SAMPLES: usize = 64;
pub const DEFAULT_EDGE_LENGTH: f64 = 0.05;
pub const HEAT_DT: f64 = 0.01;
pub const HEAT_STEPS: usize = 10;
/// Lower clip for the Darcy coefficient, keeping the problem coercive.
pub const DARCY_A_MIN: f64 = 0.01;
const PURE_DIRICHLET_SHARE: f64 = 0.2;

/// SplitMix64 finalizer applied over a seed and a list of indices.
pub fn derive_seed(seed: u64, parts: &[u64]) -> u64 {
    fn mix(mut z: u64) -> u64 {
        z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
        z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
        z ^ (z >> 31)
    }
    parts.iter().fold(mix(seed), |h, &p| mix(h ^ mix(p)))
}

fn outer_loop<T: Real>(mesh: &TriMesh<T>) -> Result<Vec<usize>> {
    let perimeter = |lp: &Vec<usize>| {
        (0..lp.len())
            .map(|i| distance(mesh.vertices[lp[i]], mesh.vertices[lp[(i + 1) % lp.len()]]).as_f64())
            .sum::<f64>()
    };
    mesh.boundary_loops()
        .into_iter()
        .max_by(|a, b| perimeter(a).total_cmp(&perimeter(b)))
        .ok_or_else(|| SniError::InvalidMesh("mesh has no boundary".into()))
}

/// Draws boundary conditions and input fields for one training problem.
///
/// All data are piecewise linear (one value per vertex) except the Neumann
/// flux, which is one value per boundary edge.
/// * Laplace-Dirichlet, nonlinear Laplace: `u_D ~ U[0,1]`.
/// * Laplace-mixed: 20% pure Dirichlet as above; otherwise one connected
///   Neumann arc covering less than half the outer boundary, with either
///   `u_D ~ U[0,r], g ~ U[0,1]` or `u_D ~ U[0,1], g ~ U[0,r]`, `r ~ U[0.5,1]`.
/// * Darcy: `u_D ~ U[0,r]`, `r ~ U[0.3,1]`; `a, f ~ U[0,1]` with `a` clipped
///   below at [`DARCY_A_MIN`].
/// * Heat: `u₀, u_D ~ U[0,1]` (`u_D` constant in time), `α ~ U[0.8,1]`,
///   `dt = 0.01`, 10 steps.
pub fn sample_boundary<T: Real>(equation: Equation, mesh: &TriMesh<T>, rng_seed: u64) -> Result<ProblemSpec<T>> {
    let mut rng = ChaCha8Rng::seed_from_u64(rng_seed);
    let n = mesh.n_vertices();
    let boundary = mesh.boundary_vertex_mask();
    let mut spec = ProblemSpec::new(equation);
    let fill_dirichlet = |spec: &mut ProblemSpec<T>, rng: &mut ChaCha8Rng, hi: f64, skip: &[bool]| {
        for v in (0..n).filter(|&v| boundary[v] && !skip[v]) {
            spec.dirichlet_values.insert(v, T::lit(rng.gen_range(0.0..=hi)));
        }
    };
    let none = vec![false; n];
    match equation {
        Equation::LaplaceDirichlet | Equation::NonlinearLaplace => fill_dirichlet(&mut spec, &mut rng, 1.0, &none),
        Equation::LaplaceMixed => {
            if rng.gen_bool(PURE_DIRICHLET_SHARE) {
                fill_dirichlet(&mut spec, &mut rng, 1.0, &none);
            } else {
                let r: f64 = rng.gen_range(0.5..=1.0);
                let (d_hi, g_hi) = if rng.gen_bool(0.5) { (r, 1.0) } else { (1.0, r) };
                let arc = neumann_arc(mesh, &mut rng)?;
                let mut inner = vec![false; n];
                for w in arc.windows(2).skip(1) {
                    inner[w[0]] = true;
                }
                fill_dirichlet(&mut spec, &mut rng, d_hi, &inner);
                for w in arc.windows(2) {
                    spec.set_neumann(w[0], w[1], T::lit(rng.gen_range(0.0..=g_hi)));
                }
            }
        }
        Equation::Darcy => {
            let r: f64 = rng.gen_range(0.3..=1.0);
            fill_dirichlet(&mut spec, &mut rng, r, &none);
            spec.coeff_a = Some((0..n).map(|_| T::lit(rng.gen_range(0.0..=1.0f64).max(DARCY_A_MIN))).collect());
            spec.source_f = Some((0..n).map(|_| T::lit(rng.gen_range(0.0..=1.0))).collect());
        }
        Equation::Heat => {
            fill_dirichlet(&mut spec, &mut rng, 1.0, &none);
            spec.initial_u0 = Some((0..n).map(|_| T::lit(rng.gen_range(0.0..=1.0))).collect());
            spec.alpha = Some(T::lit(rng.gen_range(0.8..=1.0)));
            spec.dt = Some(T::lit(HEAT_DT));
            spec.n_steps = Some(HEAT_STEPS);
        }
    }
    Ok(spec)
}

/// Vertex path along the outer loop: a random start and a target length
/// fraction in `(0, 1/2)`, at least one edge and strictly under half the
/// perimeter.
fn neumann_arc<T: Real>(mesh: &TriMesh<T>, rng: &mut ChaCha8Rng) -> Result<Vec<usize>> {
    let lp = outer_loop(mesh)?;
    let m = lp.len();
    let len = |i: usize| distance(mesh.vertices[lp[i % m]], mesh.vertices[lp[(i + 1) % m]]).as_f64();
    let perimeter: f64 = (0..m).map(len).sum();
    let start = rng.gen_range(0..m);
    // Dirichlet share of the boundary ~ U[0.5, 1]
    let target = (1.0 - rng.gen_range(0.5..1.0)) * perimeter;
    let mut arc = vec![lp[start]];
    let mut walked = 0.0;
    for i in start..start + m {
        let l = len(i);
        if arc.len() > 1 && walked + l > target {
            break;
        }
        if walked + l >= 0.5 * perimeter {
            break;
        }
        walked += l;
        arc.push(lp[(i + 1) % m]);
    }
    if arc.len() < 2 {
        return Err(SniError::Specification("boundary edges too long for a Neumann arc".into()));
    }
    Ok(arc)
}

/// Copy of `mesh` whose boundary tags follow `spec`: edges carrying a flux
/// become Neumann, all others Dirichlet. Segment names are kept.
pub fn retag_boundary<T: Real>(mesh: &TriMesh<T>, spec: &ProblemSpec<T>) -> TriMesh<T> {
    let mut out = mesh.clone();
    out.boundary_edges = mesh
        .boundary_edges
        .iter()
        .map(|e| {
            let kind = if spec.neumann_g(e.v[0], e.v[1]).is_some() {
                BoundaryKind::Neumann
            } else {
                BoundaryKind::Dirichlet
            };
            BoundaryEdge {
                v: e.v,
                tag: BoundaryTag::new(kind, e.tag.segment.clone()),
            }
        })
        .collect();
    out
}

/// Checks every sampled value against the documented ranges for its
/// equation. Returns a description of the first violation.
pub fn check_sample_ranges<T: Real>(mesh: &TriMesh<T>, spec: &ProblemSpec<T>) -> std::result::Result<(), String> {
    let within = |name: &str, x: f64, lo: f64, hi: f64| {
        if (lo..=hi).contains(&x) {
            Ok(())
        } else {
            Err(format!("{name} = {x} outside [{lo}, {hi}]"))
        }
    };
    for (&v, &x) in &spec.dirichlet_values {
        within(&format!("u_D[{v}]"), x.as_f64(), 0.0, 1.0)?;
    }
    for (&(a, b), &g) in &spec.neumann_values {
        within(&format!("g[{a},{b}]"), g.as_f64(), 0.0, 1.0)?;
    }
    let field = |name: &str, f: &Option<Vec<T>>, lo: f64, hi: f64| -> std::result::Result<(), String> {
        for (v, &x) in f.iter().flatten().enumerate() {
            within(&format!("{name}[{v}]"), x.as_f64(), lo, hi)?;
        }
        Ok(())
    };
    match spec.equation {
        Equation::LaplaceMixed if !spec.neumann_values.is_empty() => {
            let edge_len = |&(a, b): &(usize, usize)| distance(mesh.vertices[a], mesh.vertices[b]).as_f64();
            let total: f64 = mesh.boundary_edges.iter().map(|e| edge_len(&(e.v[0], e.v[1]))).sum();
            let neumann: f64 = spec.neumann_values.keys().map(edge_len).sum();
            if neumann >= 0.5 * total {
                return Err(format!("Neumann arc covers {:.3} of the boundary", neumann / total));
            }
        }
        Equation::Darcy => {
            field("a", &spec.coeff_a, DARCY_A_MIN, 1.0)?;
            field("f", &spec.source_f, 0.0, 1.0)?;
        }
        Equation::Heat => {
            field("u0", &spec.initial_u0, 0.0, 1.0)?;
            within("alpha", spec.alpha.map_or(f64::NAN, Real::as_f64), 0.8, 1.0)?;
            if spec.dt.map(Real::as_f64) != Some(HEAT_DT) || spec.n_steps != Some(HEAT_STEPS) {
                return Err(format!("heat time grid {:?} x {:?}", spec.dt.map(Real::as_f64), spec.n_steps));
            }
        }
        _ => {}
    }
    Ok(())
}

/// The problem after normalization, as the trainer consumes it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Real")]
pub struct NormalizedProblem<T> {
    pub vertices: Vec<[T; 2]>,
    pub spec: ProblemSpec<T>,
    pub solution: Vec<T>,
}

/// One solved sample.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Real")]
pub struct Record<T> {
    pub mesh: TriMesh<T>,
    pub spec: ProblemSpec<T>,
    pub solution: Vec<T>,
    pub normalizer: TransformRecord<T>,
    /// Normalized Dirichlet data along the boundary; absent when the problem
    /// has Neumann data or is time dependent.
    pub boundary_encoding: Option<Vec<T>>,
    pub normalized: NormalizedProblem<T>,
}

/// Solves one sampled problem and packages it with its normalization.
pub fn make_record<T: Real>(mesh: &TriMesh<T>, spec: ProblemSpec<T>) -> Result<Record<T>> {
    let mesh = retag_boundary(mesh, &spec);
    let solution = solve_direct(&mesh, &spec)?;
    let sub = SubMesh::whole(&mesh, &spec.dirichlet_mask(mesh.n_vertices()))?;
    let normalizer = fit_normalizer(&sub, &spec, &training_box(), training_range())?;
    let (nsub, nspec) = apply_forward(&normalizer, &sub, &spec)?;
    let boundary_encoding = encode_boundary(&nsub.mesh, &nspec, ENCODING_SAMPLES).ok();
    let normalized = NormalizedProblem {
        vertices: nsub.mesh.vertices,
        solution: normalizer.forward_values(&solution),
        spec: nspec,
    };
    Ok(Record {
        mesh,
        spec,
        solution,
        normalizer,
        boundary_encoding,
        normalized,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetParams {
    pub equation: Equation,
    pub n_shapes: usize,
    pub samples_per_shape: usize,
    pub target_edge_length: f64,
    pub polygon_vertices: [usize; 2],
}

impl DatasetParams {
    pub fn new(equation: Equation, n_shapes: usize, samples_per_shape: usize) -> Self {
        Self {
            equation,
            n_shapes,
            samples_per_shape,
            target_edge_length: DEFAULT_EDGE_LENGTH,
            polygon_vertices: [3, 12],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Skipped {
    pub shape: usize,
    pub sample: usize,
    pub reason: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub count: usize,
    pub skipped: Vec<Skipped>,
    pub seed: u64,
    pub params: DatasetParams,
    /// Over the record files in name order.
    pub sha256: String,
    pub files: Vec<String>,
}

pub fn record_file_name(shape: usize, sample: usize) -> String {
    format!("record_{shape:05}_{sample:03}.json")
}

/// Generates, solves and writes `n_shapes × samples_per_shape` records plus
/// `manifest.json`. Shapes are processed in parallel; the output depends
/// only on `(params, seed)`.
pub fn generate_dataset(params: &DatasetParams, rng_seed: u64, out_dir: impl AsRef<Path>) -> Result<Manifest> {
    let out_dir = out_dir.as_ref();
    if params.n_shapes == 0 || params.samples_per_shape == 0 {
        return Err(SniError::Config("dataset needs at least one shape and one sample per shape".into()));
    }
    if !(params.target_edge_length > 0.0) {
        return Err(SniError::Config(format!(
            "target edge length {} is not positive",
            params.target_edge_length
        )));
    }
    fs::create_dir_all(out_dir)?;
    let [n_min, n_max] = params.polygon_vertices;
    let bbox = BoundingBox::<f64>::unit_centered();

    type Outcome = (usize, usize, std::result::Result<(String, Vec<u8>), String>);
    let outcomes: Vec<Outcome> = (0..params.n_shapes)
        .into_par_iter()
        .flat_map_iter(|shape| {
            let mesh = random_simple_polygon(n_min, n_max, &bbox, derive_seed(rng_seed, &[0, shape as u64]))
                .and_then(|p| triangulate(&p, params.target_edge_length));
            (0..params.samples_per_shape).map(move |sample| {
                let result = mesh
                    .as_ref()
                    .map_err(|e| e.to_string())
                    .and_then(|mesh| {
                        let seed = derive_seed(rng_seed, &[1, shape as u64, sample as u64]);
                        let spec = sample_boundary(params.equation, mesh, seed).map_err(|e| e.to_string())?;
                        let record = make_record(mesh, spec).map_err(|e| e.to_string())?;
                        let bytes = serde_json::to_vec(&record).map_err(|e| e.to_string())?;
                        let name = record_file_name(shape, sample);
                        fs::write(out_dir.join(&name), &bytes).map_err(|e| e.to_string())?;
                        Ok((name, bytes))
                    });
                (shape, sample, result)
            })
        })
        .collect();

    let mut hasher = Sha256::new();
    let mut files = Vec::new();
    let mut skipped = Vec::new();
    for (shape, sample, res) in outcomes {
        match res {
            Ok((name, bytes)) => {
                hasher.update(name.as_bytes());
                hasher.update(&bytes);
                files.push(name);
            }
            Err(reason) => {
                log::warn!("skipping shape {shape} sample {sample}: {reason}");
                skipped.push(Skipped { shape, sample, reason });
            }
        }
    }
    let manifest = Manifest {
        count: files.len(),
        skipped,
        seed: rng_seed,
        params: params.clone(),
        sha256: hex::encode(hasher.finalize()),
        files,
    };
    fs::write(out_dir.join("manifest.json"), serde_json::to_vec_pretty(&manifest)?)?;
    Ok(manifest)
}

/// Reads `manifest.json` from a dataset directory.
pub fn read_manifest(dir: impl AsRef<Path>) -> Result<Manifest> {
    Ok(serde_json::from_slice(&fs::read(dir.as_ref().join("manifest.json"))?)?)
}

/// Per-equation counts of range violations over `n` samples spread across a
/// few random shapes; used by the verification suite.
pub fn range_audit(n: usize, rng_seed: u64) -> Result<BTreeMap<Equation, Vec<String>>> {
    let bbox = BoundingBox::<f64>::unit_centered();
    let meshes: Vec<TriMesh<f64>> = (0..4)
        .map(|i| {
            let p = random_simple_polygon(3, 12, &bbox, derive_seed(rng_seed, &[2, i]))?;
            triangulate(&p, 0.1)
        })
        .collect::<Result<_>>()?;
    let mut out = BTreeMap::new();
    for eq in Equation::ALL {
        let mut bad = Vec::new();
        for i in 0..n {
            let mesh = &meshes[i % meshes.len()];
            let spec = sample_boundary(eq, mesh, derive_seed(rng_seed, &[3, i as u64]))?;
            spec.validate(mesh)?;
            if let Err(e) = check_sample_ranges(mesh, &spec) {
                bad.push(format!("sample {i}: {e}"));
            }
        }
        out.insert(eq, bad);
    }
    Ok(out)
}
