use std::collections::HashMap;

use super::mesh::{edge_key, BoundaryEdge, TriMesh};
use super::midpoint;
use crate::scalar::Real;

/// Splits every triangle into four through its edge midpoints, `rounds` times.
///
/// Original vertices keep their indices; midpoints are appended in first-seen
/// order. Boundary edges split into two halves carrying the parent tag.
pub fn refine_uniform<T: Real>(mesh: &TriMesh<T>, rounds: usize) -> TriMesh<T> {
    let mut out = mesh.clone();
    for _ in 0..rounds {
        out = refine_once(&out);
    }
    out
}

fn refine_once<T: Real>(mesh: &TriMesh<T>) -> TriMesh<T> {
    let mut vertices = mesh.vertices.clone();
    let mut mids: HashMap<(usize, usize), usize> = HashMap::new();
    let mut mid = |a: usize, b: usize, vertices: &mut Vec<[T; 2]>| -> usize {
        *mids.entry(edge_key(a, b)).or_insert_with(|| {
            vertices.push(midpoint(vertices[a], vertices[b]));
            vertices.len() - 1
        })
    };
    let mut triangles = Vec::with_capacity(mesh.triangles.len() * 4);
    for &[a, b, c] in &mesh.triangles {
        let ab = mid(a, b, &mut vertices);
        let bc = mid(b, c, &mut vertices);
        let ca = mid(c, a, &mut vertices);
        triangles.push([a, ab, ca]);
        triangles.push([ab, b, bc]);
        triangles.push([ca, bc, c]);
        triangles.push([ab, bc, ca]);
    }
    let mut boundary_edges = Vec::with_capacity(mesh.boundary_edges.len() * 2);
    for e in &mesh.boundary_edges {
        let m = mid(e.v[0], e.v[1], &mut vertices);
        boundary_edges.push(BoundaryEdge {
            v: [e.v[0], m],
            tag: e.tag.clone(),
        });
        boundary_edges.push(BoundaryEdge {
            v: [m, e.v[1]],
            tag: e.tag.clone(),
        });
    }
    TriMesh {
        vertices,
        triangles,
        boundary_edges,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn square() -> TriMesh<f64> {
        TriMesh::rectangle(2, 3, [0.0, 0.0], [1.0, 2.0]).unwrap()
    }

    #[test]
    fn zero_rounds_is_identity() {
        let m = square();
        assert_eq!(refine_uniform(&m, 0), m);
    }

    #[test]
    fn counts_scale_by_four() {
        let m = square();
        let t = m.n_triangles();
        let r1 = refine_uniform(&m, 1);
        let r2 = refine_uniform(&m, 2);
        assert_eq!(r1.n_triangles(), 4 * t);
        assert_eq!(r2.n_triangles(), 16 * t);
        r1.validate().unwrap();
        r2.validate().unwrap();
        assert!((r1.area() - m.area()).abs() < 1e-12);
        assert!((r2.area() - m.area()).abs() < 1e-12);
        assert_eq!(r2.boundary_edges.len(), 4 * m.boundary_edges.len());
    }

    #[test]
    fn tags_inherited() {
        let m = square();
        let r = refine_uniform(&m, 1);
        for e in &r.boundary_edges {
            let y = [r.vertices[e.v[0]][1], r.vertices[e.v[1]][1]];
            if y[0] == 0.0 && y[1] == 0.0 {
                assert_eq!(e.tag.to_string(), "dirichlet:0");
            }
        }
    }
}
