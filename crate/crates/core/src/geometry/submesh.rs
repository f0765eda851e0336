use serde::{Deserialize, Serialize};

use super::mesh::{directed_boundary_edges, edge_key, BoundaryEdge, BoundaryKind, BoundaryTag, TriMesh};
use crate::error::{Result, SniError};
use crate::scalar::Real;

/// Role of a submesh vertex in a local boundary value problem.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum VertexClass {
    /// Every parent triangle around the vertex is present; not on the local boundary.
    Interior,
    /// Parent Dirichlet vertex.
    GlobalDirichlet,
    /// On the parent Neumann boundary with its full parent stencil present.
    GlobalNeumann,
    /// Some parent triangle around the vertex is missing: the vertex sits on a
    /// cut and receives Dirichlet data from the current global iterate.
    Artificial,
}

/// Vertex-induced piece of a parent mesh.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Real")]
pub struct SubMesh<T> {
    pub mesh: TriMesh<T>,
    /// Local vertex index → parent vertex index (strictly increasing).
    pub global_ids: Vec<usize>,
    pub classes: Vec<VertexClass>,
    /// Local indices of artificial boundary vertices, ascending.
    pub artificial_boundary: Vec<usize>,
}

impl<T: Real> SubMesh<T> {
    /// The whole mesh viewed as its own submesh.
    pub fn whole(mesh: &TriMesh<T>, dirichlet: &[bool]) -> Result<Self> {
        let all: Vec<usize> = (0..mesh.n_vertices()).collect();
        extract_submesh(mesh, &all, dirichlet)
    }

    pub fn n_vertices(&self) -> usize {
        self.global_ids.len()
    }

    /// Local index of a parent vertex, if present.
    pub fn local_of(&self, global: usize) -> Option<usize> {
        self.global_ids.binary_search(&global).ok()
    }
}

/// Extracts the submesh induced by `vertex_ids`: a parent triangle is kept iff
/// all three of its vertices are in the set.
///
/// `dirichlet` flags parent Dirichlet vertices. Every local vertex is then
/// classified; artificial boundary edges are tagged `artificial:cut`.
pub fn extract_submesh<T: Real>(
    mesh: &TriMesh<T>,
    vertex_ids: &[usize],
    dirichlet: &[bool],
) -> Result<SubMesh<T>> {
    let n = mesh.n_vertices();
    if dirichlet.len() != n {
        return Err(SniError::LengthMismatch {
            expected: n,
            got: dirichlet.len(),
        });
    }
    let mut in_set = vec![false; n];
    for &v in vertex_ids {
        if v >= n {
            return Err(SniError::IndexOutOfRange { index: v, len: n });
        }
        in_set[v] = true;
    }
    let kept: Vec<[usize; 3]> = mesh
        .triangles
        .iter()
        .copied()
        .filter(|t| t.iter().all(|&v| in_set[v]))
        .collect();
    if kept.is_empty() {
        return Err(SniError::EmptySubmesh);
    }

    let mut used = vec![false; n];
    for t in &kept {
        for &v in t {
            used[v] = true;
        }
    }
    let global_ids: Vec<usize> = (0..n).filter(|&v| used[v]).collect();
    let mut to_local = vec![usize::MAX; n];
    for (l, &g) in global_ids.iter().enumerate() {
        to_local[g] = l;
    }

    let parent_counts = mesh.vertex_triangle_counts();
    let mut kept_counts = vec![0usize; n];
    for t in &kept {
        for &v in t {
            kept_counts[v] += 1;
        }
    }

    let parent_tags: std::collections::HashMap<(usize, usize), &BoundaryTag> = mesh
        .boundary_edges
        .iter()
        .map(|e| (edge_key(e.v[0], e.v[1]), &e.tag))
        .collect();

    let boundary_edges: Vec<BoundaryEdge> = directed_boundary_edges(&kept)
        .into_iter()
        .map(|[a, b]| BoundaryEdge {
            v: [to_local[a], to_local[b]],
            tag: parent_tags
                .get(&edge_key(a, b))
                .map(|t| (*t).clone())
                .unwrap_or_else(|| BoundaryTag::new(BoundaryKind::Artificial, "cut")),
        })
        .collect();

    let local_triangles: Vec<[usize; 3]> = kept
        .iter()
        .map(|t| [to_local[t[0]], to_local[t[1]], to_local[t[2]]])
        .collect();
    let local_vertices: Vec<[T; 2]> = global_ids.iter().map(|&g| mesh.vertices[g]).collect();
    let sub = TriMesh {
        vertices: local_vertices,
        triangles: local_triangles,
        boundary_edges,
    };

    let on_local_boundary = sub.boundary_vertex_mask();
    let classes: Vec<VertexClass> = global_ids
        .iter()
        .enumerate()
        .map(|(l, &g)| {
            if dirichlet[g] {
                VertexClass::GlobalDirichlet
            } else if kept_counts[g] < parent_counts[g] {
                VertexClass::Artificial
            } else if on_local_boundary[l] {
                VertexClass::GlobalNeumann
            } else {
                VertexClass::Interior
            }
        })
        .collect();
    let artificial_boundary = classes
        .iter()
        .enumerate()
        .filter(|(_, &c)| c == VertexClass::Artificial)
        .map(|(l, _)| l)
        .collect();

    Ok(SubMesh {
        mesh: sub,
        global_ids,
        classes,
        artificial_boundary,
    })
}
