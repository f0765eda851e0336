use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{distance, orient2d};
use crate::error::{Result, SniError};
use crate::scalar::Real;

const MAX_ATTEMPTS: usize = 100;

/// Axis-aligned rectangle `[min, max]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Real")]
pub struct BoundingBox<T> {
    pub min: [T; 2],
    pub max: [T; 2],
}

impl<T: Real> BoundingBox<T> {
    pub fn new(min: [T; 2], max: [T; 2]) -> Self {
        Self { min, max }
    }

    /// The square `[-0.5, 0.5]²` training shapes live in.
    pub fn unit_centered() -> Self {
        let h = T::lit(0.5);
        Self::new([-h, -h], [h, h])
    }

    pub fn of_points(points: &[[T; 2]]) -> Option<Self> {
        let first = *points.first()?;
        let mut bb = Self::new(first, first);
        for p in &points[1..] {
            for d in 0..2 {
                bb.min[d] = bb.min[d].min(p[d]);
                bb.max[d] = bb.max[d].max(p[d]);
            }
        }
        Some(bb)
    }

    pub fn width(&self) -> T {
        self.max[0] - self.min[0]
    }

    pub fn height(&self) -> T {
        self.max[1] - self.min[1]
    }

    pub fn center(&self) -> [T; 2] {
        let h = T::lit(0.5);
        [
            (self.min[0] + self.max[0]) * h,
            (self.min[1] + self.max[1]) * h,
        ]
    }

    pub fn is_degenerate(&self) -> bool {
        !(self.width() > T::zero() && self.height() > T::zero())
    }

    pub fn contains_box(&self, other: &Self, tol: T) -> bool {
        other.min[0] >= self.min[0] - tol
            && other.min[1] >= self.min[1] - tol
            && other.max[0] <= self.max[0] + tol
            && other.max[1] <= self.max[1] + tol
    }

    pub fn contains(&self, p: [T; 2]) -> bool {
        p[0] >= self.min[0] && p[0] <= self.max[0] && p[1] >= self.min[1] && p[1] <= self.max[1]
    }
}

/// Simple polygon with counter-clockwise vertex order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Real")]
pub struct Polygon<T> {
    vertices: Vec<[T; 2]>,
}

impl<T: Real> Polygon<T> {
    /// Validates simplicity and reorients clockwise input to counter-clockwise.
    pub fn new(mut vertices: Vec<[T; 2]>) -> Result<Self> {
        let n = vertices.len();
        if n < 3 {
            return Err(SniError::InvalidPolygon(format!("{n} vertices, need at least 3")));
        }
        for i in 0..n {
            if vertices[i] == vertices[(i + 1) % n] {
                return Err(SniError::InvalidPolygon(format!(
                    "consecutive vertices {i} and {} coincide",
                    (i + 1) % n
                )));
            }
        }
        if let Some((i, j)) = first_crossing(&vertices) {
            return Err(SniError::InvalidPolygon(format!("edges {i} and {j} intersect")));
        }
        let area = signed_area(&vertices);
        if area == T::zero() {
            return Err(SniError::InvalidPolygon("zero area".into()));
        }
        if area < T::zero() {
            vertices.reverse();
        }
        Ok(Self { vertices })
    }

    pub fn vertices(&self) -> &[[T; 2]] {
        &self.vertices
    }

    pub fn len(&self) -> usize {
        self.vertices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vertices.is_empty()
    }

    /// Shoelace area, positive for the stored counter-clockwise order.
    pub fn signed_area(&self) -> T {
        signed_area(&self.vertices)
    }

    /// O(n²) check that no two non-adjacent edges intersect.
    pub fn is_simple(&self) -> bool {
        first_crossing(&self.vertices).is_none()
    }

    pub fn edge(&self, i: usize) -> ([T; 2], [T; 2]) {
        (self.vertices[i], self.vertices[(i + 1) % self.vertices.len()])
    }
}

pub(crate) fn signed_area<T: Real>(v: &[[T; 2]]) -> T {
    let n = v.len();
    let mut s = T::zero();
    for i in 0..n {
        let a = v[i];
        let b = v[(i + 1) % n];
        s += a[0] * b[1] - b[0] * a[1];
    }
    s * T::lit(0.5)
}

/// Closed-segment intersection test, including collinear overlap.
pub fn segments_intersect<T: Real>(p1: [T; 2], p2: [T; 2], q1: [T; 2], q2: [T; 2]) -> bool {
    let d1 = orient2d(q1, q2, p1);
    let d2 = orient2d(q1, q2, p2);
    let d3 = orient2d(p1, p2, q1);
    let d4 = orient2d(p1, p2, q2);
    let zero = T::zero();
    if ((d1 > zero && d2 < zero) || (d1 < zero && d2 > zero))
        && ((d3 > zero && d4 < zero) || (d3 < zero && d4 > zero))
    {
        return true;
    }
    let on_segment = |a: [T; 2], b: [T; 2], p: [T; 2]| {
        p[0] >= a[0].min(b[0])
            && p[0] <= a[0].max(b[0])
            && p[1] >= a[1].min(b[1])
            && p[1] <= a[1].max(b[1])
    };
    (d1 == zero && on_segment(q1, q2, p1))
        || (d2 == zero && on_segment(q1, q2, p2))
        || (d3 == zero && on_segment(p1, p2, q1))
        || (d4 == zero && on_segment(p1, p2, q2))
}

/// First pair of non-adjacent crossing edges, if any.
fn first_crossing<T: Real>(v: &[[T; 2]]) -> Option<(usize, usize)> {
    let n = v.len();
    for i in 0..n {
        for j in (i + 1)..n {
            let adjacent = j == i + 1 || (i == 0 && j == n - 1);
            if adjacent {
                // adjacent edges may only share their common vertex; a fold-back
                // (collinear overlap) still counts as a crossing
                let (shared, a, b) = if j == i + 1 {
                    (v[j], v[i], v[(j + 1) % n])
                } else {
                    (v[0], v[1], v[n - 1])
                };
                if orient2d(a, shared, b) == T::zero() {
                    let da = [a[0] - shared[0], a[1] - shared[1]];
                    let db = [b[0] - shared[0], b[1] - shared[1]];
                    if da[0] * db[0] + da[1] * db[1] > T::zero() {
                        return Some((i, j));
                    }
                }
                continue;
            }
            if segments_intersect(v[i], v[(i + 1) % n], v[j], v[(j + 1) % n]) {
                return Some((i, j));
            }
        }
    }
    None
}

fn point_segment_distance(p: [f64; 2], a: [f64; 2], b: [f64; 2]) -> f64 {
    let ab = [b[0] - a[0], b[1] - a[1]];
    let len2 = ab[0] * ab[0] + ab[1] * ab[1];
    let t = if len2 > 0.0 {
        (((p[0] - a[0]) * ab[0] + (p[1] - a[1]) * ab[1]) / len2).clamp(0.0, 1.0)
    } else {
        0.0
    };
    distance(p, [a[0] + t * ab[0], a[1] + t * ab[1]])
}

/// Rejects slivers that would produce needle-shaped triangles: every vertex
/// must keep a minimum clearance from all edges it is not part of.
fn well_shaped(v: &[[f64; 2]], min_clearance: f64, min_area: f64) -> bool {
    let n = v.len();
    if signed_area(v).abs() < min_area {
        return false;
    }
    for i in 0..n {
        for e in 0..n {
            let e1 = (e + 1) % n;
            if e == i || e1 == i {
                continue;
            }
            if point_segment_distance(v[i], v[e], v[e1]) < min_clearance {
                return false;
            }
        }
    }
    true
}

/// Removes crossings by reversing the chain between two crossing edges
/// (a 2-opt move). Each move strictly shortens the perimeter, so this terminates.
fn untangle(v: &mut [[f64; 2]], max_moves: usize) -> bool {
    for _ in 0..max_moves {
        match first_crossing(v) {
            None => return true,
            Some((i, j)) => v[i + 1..=j].reverse(),
        }
    }
    first_crossing(v).is_none()
}

/// Random simple polygon with `n ∈ [n_min, n_max]` vertices inside `bbox`.
///
/// Points are drawn uniformly, ordered by angle around their centroid and
/// untangled with 2-opt moves. Deterministic for a fixed seed.
pub fn random_simple_polygon<T: Real>(
    n_min: usize,
    n_max: usize,
    bbox: &BoundingBox<T>,
    rng_seed: u64,
) -> Result<Polygon<T>> {
    if n_min < 3 || n_min > n_max {
        return Err(SniError::InvalidPolygon(format!(
            "vertex range [{n_min}, {n_max}] must satisfy 3 <= n_min <= n_max"
        )));
    }
    if bbox.is_degenerate() {
        return Err(SniError::InvalidPolygon("degenerate bounding box".into()));
    }
    let (x0, y0) = (bbox.min[0].as_f64(), bbox.min[1].as_f64());
    let (w, h) = (bbox.width().as_f64(), bbox.height().as_f64());
    let diag = (w * w + h * h).sqrt();
    let mut rng = ChaCha8Rng::seed_from_u64(rng_seed);

    for _ in 0..MAX_ATTEMPTS {
        let n = rng.gen_range(n_min..=n_max);
        let mut pts: Vec<[f64; 2]> = (0..n)
            .map(|_| [x0 + w * rng.gen::<f64>(), y0 + h * rng.gen::<f64>()])
            .collect();
        let cx = pts.iter().map(|p| p[0]).sum::<f64>() / n as f64;
        let cy = pts.iter().map(|p| p[1]).sum::<f64>() / n as f64;
        pts.sort_by(|a, b| {
            let ta = (a[1] - cy).atan2(a[0] - cx);
            let tb = (b[1] - cy).atan2(b[0] - cx);
            ta.total_cmp(&tb)
        });
        if !untangle(&mut pts, n * n * 4) {
            continue;
        }
        if !well_shaped(&pts, 0.02 * diag, 0.02 * w * h) {
            continue;
        }
        let verts: Vec<[T; 2]> = pts.iter().map(|p| [T::lit(p[0]), T::lit(p[1])]).collect();
        if let Ok(poly) = Polygon::new(verts) {
            return Ok(poly);
        }
    }
    Err(SniError::PolygonGeneration {
        attempts: MAX_ATTEMPTS,
    })
}
