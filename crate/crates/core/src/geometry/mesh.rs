use std::collections::HashMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::{distance, orient2d};
use crate::error::{Result, SniError};
use crate::scalar::Real;

/// Boundary condition family carried by a boundary edge tag.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BoundaryKind {
    Dirichlet,
    Neumann,
    /// Cut created by restricting to a subdomain; only appears on submeshes.
    Artificial,
}

impl BoundaryKind {
    fn as_str(self) -> &'static str {
        match self {
            BoundaryKind::Dirichlet => "dirichlet",
            BoundaryKind::Neumann => "neumann",
            BoundaryKind::Artificial => "artificial",
        }
    }
}

/// `"<kind>:<segment>"`, e.g. `"dirichlet:3"`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub struct BoundaryTag {
    pub kind: BoundaryKind,
    pub segment: String,
}

impl BoundaryTag {
    pub fn new(kind: BoundaryKind, segment: impl Into<String>) -> Self {
        Self {
            kind,
            segment: segment.into(),
        }
    }

    pub fn dirichlet(segment: impl fmt::Display) -> Self {
        Self::new(BoundaryKind::Dirichlet, segment.to_string())
    }

    pub fn neumann(segment: impl fmt::Display) -> Self {
        Self::new(BoundaryKind::Neumann, segment.to_string())
    }
}

impl fmt::Display for BoundaryTag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}", self.kind.as_str(), self.segment)
    }
}

impl FromStr for BoundaryTag {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        let (kind, segment) = s
            .split_once(':')
            .ok_or_else(|| format!("boundary tag {s:?} is not of the form kind:segment"))?;
        let kind = match kind {
            "dirichlet" => BoundaryKind::Dirichlet,
            "neumann" => BoundaryKind::Neumann,
            "artificial" => BoundaryKind::Artificial,
            other => return Err(format!("unknown boundary kind {other:?}")),
        };
        Ok(Self::new(kind, segment))
    }
}

impl TryFrom<String> for BoundaryTag {
    type Error = String;
    fn try_from(s: String) -> std::result::Result<Self, Self::Error> {
        s.parse()
    }
}

impl From<BoundaryTag> for String {
    fn from(t: BoundaryTag) -> String {
        t.to_string()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BoundaryEdge {
    /// Endpoints in the orientation of the owning triangle.
    pub v: [usize; 2],
    pub tag: BoundaryTag,
}

/// Unstructured P1 triangulation with tagged boundary edges.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Real")]
pub struct TriMesh<T> {
    pub vertices: Vec<[T; 2]>,
    pub triangles: Vec<[usize; 3]>,
    pub boundary_edges: Vec<BoundaryEdge>,
}

#[inline]
pub(crate) fn edge_key(a: usize, b: usize) -> (usize, usize) {
    if a < b {
        (a, b)
    } else {
        (b, a)
    }
}

impl<T: Real> TriMesh<T> {
    /// Builds and validates a mesh.
    pub fn new(
        vertices: Vec<[T; 2]>,
        triangles: Vec<[usize; 3]>,
        boundary_edges: Vec<BoundaryEdge>,
    ) -> Result<Self> {
        let mesh = Self {
            vertices,
            triangles,
            boundary_edges,
        };
        mesh.validate()?;
        Ok(mesh)
    }

    /// Builds a mesh whose boundary edges are derived from the triangles,
    /// each tagged by `tag_of(a, b)`.
    pub fn from_triangles(
        vertices: Vec<[T; 2]>,
        triangles: Vec<[usize; 3]>,
        mut tag_of: impl FnMut(usize, usize) -> BoundaryTag,
    ) -> Result<Self> {
        let boundary_edges = directed_boundary_edges(&triangles)
            .into_iter()
            .map(|[a, b]| BoundaryEdge {
                v: [a, b],
                tag: tag_of(a, b),
            })
            .collect();
        Self::new(vertices, triangles, boundary_edges)
    }

    /// Structured `nx × ny` cell grid over a rectangle, each cell split along
    /// its diagonal. Boundary segments: 0 bottom, 1 right, 2 top, 3 left.
    pub fn rectangle(nx: usize, ny: usize, min: [T; 2], max: [T; 2]) -> Result<Self> {
        if nx == 0 || ny == 0 {
            return Err(SniError::InvalidMesh("grid needs at least one cell per side".into()));
        }
        let mut vertices = Vec::with_capacity((nx + 1) * (ny + 1));
        for j in 0..=ny {
            for i in 0..=nx {
                let fx = T::from_count(i) / T::from_count(nx);
                let fy = T::from_count(j) / T::from_count(ny);
                vertices.push([
                    min[0] + (max[0] - min[0]) * fx,
                    min[1] + (max[1] - min[1]) * fy,
                ]);
            }
        }
        let id = |i: usize, j: usize| j * (nx + 1) + i;
        let mut triangles = Vec::with_capacity(2 * nx * ny);
        for j in 0..ny {
            for i in 0..nx {
                triangles.push([id(i, j), id(i + 1, j), id(i + 1, j + 1)]);
                triangles.push([id(i, j), id(i + 1, j + 1), id(i, j + 1)]);
            }
        }
        let side = |v: usize| (v % (nx + 1), v / (nx + 1));
        Self::from_triangles(vertices, triangles, |a, b| {
            let (ia, ja) = side(a);
            let (ib, jb) = side(b);
            let seg = if ja == 0 && jb == 0 {
                0
            } else if ia == nx && ib == nx {
                1
            } else if ja == ny && jb == ny {
                2
            } else {
                3
            };
            BoundaryTag::dirichlet(seg)
        })
    }

    pub fn n_vertices(&self) -> usize {
        self.vertices.len()
    }

    pub fn n_triangles(&self) -> usize {
        self.triangles.len()
    }

    pub fn triangle_points(&self, t: usize) -> [[T; 2]; 3] {
        let [a, b, c] = self.triangles[t];
        [self.vertices[a], self.vertices[b], self.vertices[c]]
    }

    pub fn triangle_area(&self, t: usize) -> T {
        let [a, b, c] = self.triangle_points(t);
        orient2d(a, b, c) * T::lit(0.5)
    }

    pub fn area(&self) -> T {
        (0..self.n_triangles()).map(|t| self.triangle_area(t)).sum()
    }

    /// Unique undirected edges, sorted.
    pub fn edges(&self) -> Vec<(usize, usize)> {
        let mut e: Vec<(usize, usize)> = self
            .triangles
            .iter()
            .flat_map(|&[a, b, c]| [edge_key(a, b), edge_key(b, c), edge_key(c, a)])
            .collect();
        e.sort_unstable();
        e.dedup();
        e
    }

    pub fn max_edge_length(&self) -> T {
        self.edges()
            .into_iter()
            .map(|(a, b)| distance(self.vertices[a], self.vertices[b]))
            .fold(T::zero(), T::max)
    }

    /// `true` for every vertex touched by a boundary edge.
    pub fn boundary_vertex_mask(&self) -> Vec<bool> {
        let mut mask = vec![false; self.n_vertices()];
        for e in &self.boundary_edges {
            mask[e.v[0]] = true;
            mask[e.v[1]] = true;
        }
        mask
    }

    /// Number of triangles incident to each vertex.
    pub fn vertex_triangle_counts(&self) -> Vec<usize> {
        let mut c = vec![0; self.n_vertices()];
        for t in &self.triangles {
            for &v in t {
                c[v] += 1;
            }
        }
        c
    }

    /// Boundary edges grouped into closed loops, each loop a vertex sequence
    /// following edge orientation (outer loops counter-clockwise).
    pub fn boundary_loops(&self) -> Vec<Vec<usize>> {
        let mut outgoing: HashMap<usize, Vec<usize>> = HashMap::new();
        for (i, e) in self.boundary_edges.iter().enumerate() {
            outgoing.entry(e.v[0]).or_default().push(i);
        }
        for list in outgoing.values_mut() {
            list.sort_unstable();
        }
        let mut used = vec![false; self.boundary_edges.len()];
        let mut loops = Vec::new();
        for start in 0..self.boundary_edges.len() {
            if used[start] {
                continue;
            }
            let mut lp = Vec::new();
            let mut cur = start;
            loop {
                used[cur] = true;
                let [a, b] = self.boundary_edges[cur].v;
                lp.push(a);
                let next = outgoing
                    .get(&b)
                    .and_then(|l| l.iter().copied().find(|&i| !used[i]));
                match next {
                    Some(n) => cur = n,
                    None => break,
                }
            }
            loops.push(lp);
        }
        loops
    }

    /// Checks every structural invariant: index ranges, positive orientation,
    /// manifold edge usage, boundary edge list consistency and closed loops.
    pub fn validate(&self) -> Result<()> {
        let n = self.n_vertices();
        for (ti, t) in self.triangles.iter().enumerate() {
            if t.iter().any(|&v| v >= n) {
                return Err(SniError::InvalidMesh(format!("triangle {ti} index out of range")));
            }
            if t[0] == t[1] || t[1] == t[2] || t[0] == t[2] {
                return Err(SniError::InvalidMesh(format!("triangle {ti} repeats a vertex")));
            }
            if !(self.triangle_area(ti) > T::zero()) {
                return Err(SniError::InvalidMesh(format!(
                    "triangle {ti} has non-positive signed area"
                )));
            }
        }
        if self.vertices.iter().any(|p| !p[0].is_finite() || !p[1].is_finite()) {
            return Err(SniError::InvalidMesh("non-finite vertex coordinate".into()));
        }
        let mut directed: HashMap<(usize, usize), usize> = HashMap::new();
        for t in &self.triangles {
            for k in 0..3 {
                *directed.entry((t[k], t[(k + 1) % 3])).or_default() += 1;
            }
        }
        if let Some((e, _)) = directed.iter().find(|(_, &c)| c > 1) {
            return Err(SniError::InvalidMesh(format!(
                "directed edge {e:?} used by more than one triangle"
            )));
        }
        let mut expected: Vec<[usize; 2]> = directed
            .keys()
            .filter(|(a, b)| !directed.contains_key(&(*b, *a)))
            .map(|&(a, b)| [a, b])
            .collect();
        expected.sort_unstable();
        let mut given: Vec<[usize; 2]> = self.boundary_edges.iter().map(|e| e.v).collect();
        if given.iter().any(|e| e[0] >= n || e[1] >= n) {
            return Err(SniError::InvalidMesh("boundary edge index out of range".into()));
        }
        given.sort_unstable();
        if given != expected {
            return Err(SniError::InvalidMesh(format!(
                "boundary edge list ({} edges) does not match the triangulation boundary ({} edges)",
                given.len(),
                expected.len()
            )));
        }
        let mut balance: HashMap<usize, isize> = HashMap::new();
        for e in &self.boundary_edges {
            *balance.entry(e.v[0]).or_default() += 1;
            *balance.entry(e.v[1]).or_default() -= 1;
        }
        if balance.values().any(|&b| b != 0) {
            return Err(SniError::InvalidMesh("boundary edges do not form closed loops".into()));
        }
        Ok(())
    }

    /// Converts coordinates to another scalar type.
    pub fn cast<U: Real>(&self) -> TriMesh<U> {
        TriMesh {
            vertices: self
                .vertices
                .iter()
                .map(|p| [U::lit(p[0].as_f64()), U::lit(p[1].as_f64())])
                .collect(),
            triangles: self.triangles.clone(),
            boundary_edges: self.boundary_edges.clone(),
        }
    }
}

/// Directed edges used by exactly one triangle, in triangle order.
pub(crate) fn directed_boundary_edges(triangles: &[[usize; 3]]) -> Vec<[usize; 2]> {
    let mut count: HashMap<(usize, usize), usize> = HashMap::new();
    for &[a, b, c] in triangles {
        for (x, y) in [(a, b), (b, c), (c, a)] {
            *count.entry(edge_key(x, y)).or_default() += 1;
        }
    }
    let mut out = Vec::new();
    for &[a, b, c] in triangles {
        for (x, y) in [(a, b), (b, c), (c, a)] {
            if count[&edge_key(x, y)] == 1 {
                out.push([x, y]);
            }
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn unit_square(n: usize) -> TriMesh<f64> {
        TriMesh::rectangle(n, n, [0.0, 0.0], [1.0, 1.0]).unwrap()
    }

    #[test]
    fn rectangle_is_valid() {
        let m = unit_square(4);
        assert_eq!(m.n_vertices(), 25);
        assert_eq!(m.n_triangles(), 32);
        assert_eq!(m.boundary_edges.len(), 16);
        assert!((m.area() - 1.0).abs() < 1e-14);
        assert_eq!(m.boundary_loops().len(), 1);
    }

    #[test]
    fn tag_round_trip() {
        let t: BoundaryTag = "neumann:outer".parse().unwrap();
        assert_eq!(t.kind, BoundaryKind::Neumann);
        assert_eq!(t.to_string(), "neumann:outer");
        assert!("robin:1".parse::<BoundaryTag>().is_err());
        assert!("dirichlet".parse::<BoundaryTag>().is_err());
    }

    #[test]
    fn json_shape() {
        let m = unit_square(1);
        let v: serde_json::Value = serde_json::to_value(&m).unwrap();
        assert!(v["vertices"][0].is_array());
        assert_eq!(v["boundary_edges"][0]["tag"], "dirichlet:0");
        let back: TriMesh<f64> = serde_json::from_value(v).unwrap();
        assert_eq!(back, m);
    }

    #[test]
    fn validation_catches_flipped_triangle() {
        let mut m = unit_square(2);
        m.triangles[0].swap(1, 2);
        assert!(matches!(m.validate(), Err(SniError::InvalidMesh(_))));
    }

    #[test]
    fn validation_catches_missing_boundary_edge() {
        let mut m = unit_square(2);
        m.boundary_edges.pop();
        assert!(m.validate().is_err());
    }

    #[test]
    fn validation_catches_out_of_range() {
        let mut m = unit_square(1);
        m.triangles[0][0] = 99;
        assert!(m.validate().is_err());
    }
}
