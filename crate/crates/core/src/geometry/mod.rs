//! Polygons, triangle meshes and the mesh operations the solvers need:
//! random simple polygon generation, triangulation, uniform refinement and
//! vertex-induced submesh extraction.

mod mesh;
mod polygon;
mod refine;
mod submesh;
mod triangulate;

pub use mesh::{BoundaryEdge, BoundaryKind, BoundaryTag, TriMesh};
pub(crate) use mesh::edge_key;
pub use polygon::{random_simple_polygon, segments_intersect, BoundingBox, Polygon};
pub use refine::refine_uniform;
pub use submesh::{extract_submesh, SubMesh, VertexClass};
pub use triangulate::triangulate;

use crate::scalar::Real;

/// Twice the signed area of the triangle `(a, b, c)`; positive when counter-clockwise.
#[inline]
pub fn orient2d<T: Real>(a: [T; 2], b: [T; 2], c: [T; 2]) -> T {
    (b[0] - a[0]) * (c[1] - a[1]) - (b[1] - a[1]) * (c[0] - a[0])
}

#[inline]
pub fn distance<T: Real>(a: [T; 2], b: [T; 2]) -> T {
    ((a[0] - b[0]) * (a[0] - b[0]) + (a[1] - b[1]) * (a[1] - b[1])).sqrt()
}

#[inline]
pub(crate) fn midpoint<T: Real>(a: [T; 2], b: [T; 2]) -> [T; 2] {
    let half = T::lit(0.5);
    [(a[0] + b[0]) * half, (a[1] + b[1]) * half]
}
