use std::collections::{HashMap, HashSet};

use super::mesh::{BoundaryEdge, BoundaryTag, TriMesh};
use super::polygon::{BoundingBox, Polygon};
use super::refine::refine_uniform;
use super::{distance, orient2d};
use crate::error::{Result, SniError};
use crate::scalar::Real;

const MAX_REFINE_ROUNDS: usize = 10;

/// Conforming triangulation of a simple polygon.
///
/// Ear clipping, Delaunay edge flips, midpoint refinement until the longest
/// edge meets `target_edge_length`, one pass of Laplacian smoothing on the
/// interior vertices, then flips again. Boundary edges are tagged
/// `dirichlet:<i>` after the polygon edge `i` they came from.
pub fn triangulate<T: Real>(polygon: &Polygon<T>, target_edge_length: T) -> Result<TriMesh<T>> {
    if !(target_edge_length > T::zero()) {
        return Err(SniError::Meshing("target edge length must be positive".into()));
    }
    let verts = polygon.vertices().to_vec();
    let bb = BoundingBox::of_points(&verts).expect("polygon has vertices");
    let scale = bb.width().max(bb.height());
    if !(polygon.signed_area() > T::lit(1e-12) * scale * scale) {
        return Err(SniError::Meshing("polygon area is numerically zero".into()));
    }

    let triangles = ear_clip(&verts)?;
    let n = verts.len();
    let boundary_edges = (0..n)
        .map(|i| BoundaryEdge {
            v: [i, (i + 1) % n],
            tag: BoundaryTag::dirichlet(i),
        })
        .collect();
    let mut mesh = TriMesh {
        vertices: verts,
        triangles,
        boundary_edges,
    };
    delaunay_flips(&mut mesh);

    let limit = target_edge_length * T::lit(1.5);
    let mut rounds = 0;
    while mesh.max_edge_length() > target_edge_length && rounds < MAX_REFINE_ROUNDS {
        mesh = refine_uniform(&mesh, 1);
        rounds += 1;
    }
    smooth_interior(&mut mesh);
    delaunay_flips(&mut mesh);
    while mesh.max_edge_length() > limit {
        if rounds >= MAX_REFINE_ROUNDS {
            return Err(SniError::Meshing(format!(
                "edge length target not met after {MAX_REFINE_ROUNDS} refinement rounds"
            )));
        }
        mesh = refine_uniform(&mesh, 1);
        rounds += 1;
    }
    mesh.validate()?;
    Ok(mesh)
}

fn point_in_triangle<T: Real>(p: [T; 2], a: [T; 2], b: [T; 2], c: [T; 2]) -> bool {
    let z = T::zero();
    orient2d(a, b, p) >= z && orient2d(b, c, p) >= z && orient2d(c, a, p) >= z
}

fn min_angle_cos<T: Real>(a: [T; 2], b: [T; 2], c: [T; 2]) -> T {
    // largest cosine = smallest angle
    let cos_at = |p: [T; 2], q: [T; 2], r: [T; 2]| {
        let u = [q[0] - p[0], q[1] - p[1]];
        let v = [r[0] - p[0], r[1] - p[1]];
        (u[0] * v[0] + u[1] * v[1]) / (distance(p, q) * distance(p, r))
    };
    cos_at(a, b, c).max(cos_at(b, c, a)).max(cos_at(c, a, b))
}

/// Ear clipping of a counter-clockwise simple polygon. Among the valid ears the
/// one with the largest minimum angle is cut first.
fn ear_clip<T: Real>(v: &[[T; 2]]) -> Result<Vec<[usize; 3]>> {
    let mut ring: Vec<usize> = (0..v.len()).collect();
    let mut out = Vec::with_capacity(v.len().saturating_sub(2));
    while ring.len() > 3 {
        let m = ring.len();
        let mut best: Option<(usize, T)> = None;
        for i in 0..m {
            let (ip, inx) = (ring[(i + m - 1) % m], ring[(i + 1) % m]);
            let (a, b, c) = (v[ip], v[ring[i]], v[inx]);
            if !(orient2d(a, b, c) > T::zero()) {
                continue;
            }
            let blocked = ring.iter().any(|&o| {
                o != ip && o != ring[i] && o != inx && point_in_triangle(v[o], a, b, c)
            });
            if blocked {
                continue;
            }
            let q = min_angle_cos(a, b, c);
            if best.is_none_or(|(_, bq)| q < bq) {
                best = Some((i, q));
            }
        }
        let (i, _) = best.ok_or_else(|| SniError::Meshing("no ear found".into()))?;
        out.push([ring[(i + m - 1) % m], ring[i], ring[(i + 1) % m]]);
        ring.remove(i);
    }
    if !(orient2d(v[ring[0]], v[ring[1]], v[ring[2]]) > T::zero()) {
        return Err(SniError::Meshing("degenerate final ear".into()));
    }
    out.push([ring[0], ring[1], ring[2]]);
    Ok(out)
}

/// Positive when `d` lies strictly inside the circumcircle of the
/// counter-clockwise triangle `(a, b, c)`.
fn in_circle<T: Real>(a: [T; 2], b: [T; 2], c: [T; 2], d: [T; 2]) -> T {
    let (adx, ady) = (a[0] - d[0], a[1] - d[1]);
    let (bdx, bdy) = (b[0] - d[0], b[1] - d[1]);
    let (cdx, cdy) = (c[0] - d[0], c[1] - d[1]);
    let ad = adx * adx + ady * ady;
    let bd = bdx * bdx + bdy * bdy;
    let cd = cdx * cdx + cdy * cdy;
    adx * (bdy * cd - bd * cdy) - ady * (bdx * cd - bd * cdx) + ad * (bdx * cdy - bdy * cdx)
}

/// Lawson flipping of interior edges until the triangulation is (constrained)
/// Delaunay. Boundary edges are never flipped.
pub(crate) fn delaunay_flips<T: Real>(mesh: &mut TriMesh<T>) {
    let eps = T::lit(1e-10);
    for _pass in 0..200 {
        let mut owner: HashMap<(usize, usize), usize> = HashMap::new();
        for (ti, t) in mesh.triangles.iter().enumerate() {
            for k in 0..3 {
                owner.insert((t[k], t[(k + 1) % 3]), ti);
            }
        }
        let mut touched: HashSet<usize> = HashSet::new();
        let mut flipped = false;
        for t1 in 0..mesh.triangles.len() {
            for k in 0..3 {
                if touched.contains(&t1) {
                    break;
                }
                let tri = mesh.triangles[t1];
                let (a, b, c) = (tri[k], tri[(k + 1) % 3], tri[(k + 2) % 3]);
                let Some(&t2) = owner.get(&(b, a)) else {
                    continue;
                };
                if touched.contains(&t2) {
                    continue;
                }
                let other = mesh.triangles[t2];
                let d = *other.iter().find(|&&x| x != a && x != b).expect("third vertex");
                let p = &mesh.vertices;
                let scale = distance(p[a], p[b]);
                let s4 = scale * scale * scale * scale;
                if in_circle(p[a], p[b], p[c], p[d]) <= eps * s4 {
                    continue;
                }
                if !(orient2d(p[a], p[d], p[c]) > T::zero() && orient2d(p[d], p[b], p[c]) > T::zero()) {
                    continue;
                }
                mesh.triangles[t1] = [a, d, c];
                mesh.triangles[t2] = [d, b, c];
                touched.insert(t1);
                touched.insert(t2);
                flipped = true;
            }
        }
        if !flipped {
            break;
        }
    }
}

/// One Gauss-Seidel pass moving each interior vertex to the mean of its
/// neighbours, skipped where it would invert or flatten an incident triangle.
fn smooth_interior<T: Real>(mesh: &mut TriMesh<T>) {
    let boundary = mesh.boundary_vertex_mask();
    let n = mesh.n_vertices();
    let mut incident: Vec<Vec<usize>> = vec![Vec::new(); n];
    let mut neighbours: Vec<Vec<usize>> = vec![Vec::new(); n];
    for (ti, t) in mesh.triangles.iter().enumerate() {
        for k in 0..3 {
            incident[t[k]].push(ti);
        }
    }
    for (a, b) in mesh.edges() {
        neighbours[a].push(b);
        neighbours[b].push(a);
    }
    for v in 0..n {
        if boundary[v] || neighbours[v].is_empty() {
            continue;
        }
        let k = T::from_count(neighbours[v].len());
        let mut target = [T::zero(), T::zero()];
        for &w in &neighbours[v] {
            target[0] += mesh.vertices[w][0];
            target[1] += mesh.vertices[w][1];
        }
        target = [target[0] / k, target[1] / k];
        let old = mesh.vertices[v];
        let before: T = incident[v]
            .iter()
            .map(|&t| mesh.triangle_area(t))
            .fold(T::infinity(), T::min);
        mesh.vertices[v] = target;
        let after: T = incident[v]
            .iter()
            .map(|&t| mesh.triangle_area(t))
            .fold(T::infinity(), T::min);
        if !(after > T::lit(0.5) * before) {
            mesh.vertices[v] = old;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::random_simple_polygon;

    fn unit_square() -> Polygon<f64> {
        Polygon::new(vec![[0.0, 0.0], [1.0, 0.0], [1.0, 1.0], [0.0, 1.0]]).unwrap()
    }

    fn euler(m: &TriMesh<f64>) -> isize {
        m.n_vertices() as isize - m.edges().len() as isize + m.n_triangles() as isize
    }

    #[test]
    fn coarse_square() {
        let m = triangulate(&unit_square(), 1.0).unwrap();
        assert!(m.n_triangles() >= 2);
        assert!((m.area() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn fine_square_area_and_euler() {
        let m = triangulate(&unit_square(), 0.1).unwrap();
        assert!((m.area() - 1.0).abs() < 1e-10);
        assert_eq!(euler(&m), 1);
        assert!(m.max_edge_length() <= 0.15);
    }

    #[test]
    fn random_polygons_conserve_area() {
        for seed in 0..40 {
            let p: Polygon<f64> =
                random_simple_polygon(3, 12, &BoundingBox::unit_centered(), seed).unwrap();
            let m = triangulate(&p, 0.08).unwrap();
            let a = p.signed_area();
            assert!((m.area() - a).abs() <= 1e-10 * a, "seed {seed}");
            assert_eq!(euler(&m), 1, "seed {seed}");
            assert!(m.max_edge_length() <= 1.5 * 0.08, "seed {seed}");
            for e in &m.boundary_edges {
                let seg: usize = e.tag.segment.parse().unwrap();
                assert!(seg < p.len());
            }
        }
    }

    #[test]
    fn mesh_is_delaunay_on_interior_edges() {
        let p: Polygon<f64> = random_simple_polygon(8, 12, &BoundingBox::unit_centered(), 5).unwrap();
        let m = triangulate(&p, 0.1).unwrap();
        let mut owner = HashMap::new();
        for (ti, t) in m.triangles.iter().enumerate() {
            for k in 0..3 {
                owner.insert((t[k], t[(k + 1) % 3]), ti);
            }
        }
        for t in &m.triangles {
            for k in 0..3 {
                let (a, b, c) = (t[k], t[(k + 1) % 3], t[(k + 2) % 3]);
                if let Some(&o) = owner.get(&(b, a)) {
                    let d = *m.triangles[o].iter().find(|&&x| x != a && x != b).unwrap();
                    let s = distance(m.vertices[a], m.vertices[b]).powi(4);
                    let ic = in_circle(m.vertices[a], m.vertices[b], m.vertices[c], m.vertices[d]);
                    // flips are skipped only when the quad is non-convex
                    if ic > 1e-8 * s {
                        let convex = orient2d(m.vertices[a], m.vertices[d], m.vertices[c]) > 0.0
                            && orient2d(m.vertices[d], m.vertices[b], m.vertices[c]) > 0.0;
                        assert!(!convex);
                    }
                }
            }
        }
    }

    #[test]
    fn rejects_bad_target() {
        assert!(triangulate(&unit_square(), 0.0).is_err());
    }
}
