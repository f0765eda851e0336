//! Mesh connectivity graphs, K-way partitioning by greedy graph growing,
//! overlap extension and the restriction/extension operators.

use std::collections::VecDeque;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Result, SniError};
use crate::geometry::{BoundaryKind, SubMesh, TriMesh};
use crate::scalar::Real;

/// Undirected graph with sorted adjacency lists.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AdjGraph {
    neighbors: Vec<Vec<usize>>,
}

impl AdjGraph {
    /// Builds from undirected edges; self-loops and duplicates are dropped.
    pub fn from_edges(n: usize, edges: impl IntoIterator<Item = (usize, usize)>) -> Self {
        let mut neighbors = vec![Vec::new(); n];
        for (a, b) in edges {
            if a != b {
                neighbors[a].push(b);
                neighbors[b].push(a);
            }
        }
        for list in &mut neighbors {
            list.sort_unstable();
            list.dedup();
        }
        Self { neighbors }
    }

    pub fn n(&self) -> usize {
        self.neighbors.len()
    }

    pub fn neighbors(&self, v: usize) -> &[usize] {
        &self.neighbors[v]
    }

    pub fn degree(&self, v: usize) -> usize {
        self.neighbors[v].len()
    }

    pub fn edge_count(&self) -> usize {
        self.neighbors.iter().map(Vec::len).sum::<usize>() / 2
    }

    /// Connected components, each sorted, ordered by smallest vertex.
    pub fn components(&self) -> Vec<Vec<usize>> {
        let mut seen = vec![false; self.n()];
        let mut out = Vec::new();
        for s in 0..self.n() {
            if seen[s] {
                continue;
            }
            let mut comp = self.bfs_within(s, |_| true, &mut seen);
            comp.sort_unstable();
            out.push(comp);
        }
        out
    }

    fn bfs_within(&self, start: usize, allowed: impl Fn(usize) -> bool, seen: &mut [bool]) -> Vec<usize> {
        let mut order = vec![start];
        seen[start] = true;
        let mut head = 0;
        while head < order.len() {
            let v = order[head];
            head += 1;
            for &w in &self.neighbors[v] {
                if !seen[w] && allowed(w) {
                    seen[w] = true;
                    order.push(w);
                }
            }
        }
        order
    }

    /// Whether `set` induces a connected subgraph (the empty set does not).
    pub fn is_connected_subset(&self, set: &[usize]) -> bool {
        let Some(&start) = set.first() else {
            return false;
        };
        let mut inside = vec![false; self.n()];
        for &v in set {
            inside[v] = true;
        }
        let mut seen = vec![false; self.n()];
        self.bfs_within(start, |w| inside[w], &mut seen).len() == count_unique(set)
    }

    /// Hop distance from `sources` to every vertex (`usize::MAX` if unreachable).
    pub fn bfs_distances(&self, sources: &[usize]) -> Vec<usize> {
        let mut dist = vec![usize::MAX; self.n()];
        let mut queue = VecDeque::new();
        for &s in sources {
            dist[s] = 0;
            queue.push_back(s);
        }
        while let Some(v) = queue.pop_front() {
            for &w in &self.neighbors[v] {
                if dist[w] == usize::MAX {
                    dist[w] = dist[v] + 1;
                    queue.push_back(w);
                }
            }
        }
        dist
    }
}

fn count_unique(set: &[usize]) -> usize {
    let mut s = set.to_vec();
    s.sort_unstable();
    s.dedup();
    s.len()
}

/// Vertices are adjacent iff they share a mesh edge.
pub fn build_adjacency<T: Real>(mesh: &TriMesh<T>) -> AdjGraph {
    AdjGraph::from_edges(mesh.n_vertices(), mesh.edges())
}

/// Largest part allowed for `n` vertices in `k` parts: `⌊1.5·n/k⌋`.
pub fn max_part_size(n: usize, k: usize) -> usize {
    (3 * n) / (2 * k)
}

const PARTITION_ATTEMPTS: u64 = 10;

/// Splits a connected graph into `k` disjoint connected parts with
/// `max |part| ≤ 1.5·n/k`.
///
/// Seeds are placed by farthest-point sampling started from a random vertex
/// (so the first seed is the vertex farthest from it); the
/// currently smallest part then grows by one vertex of its BFS frontier at a
/// time. One boundary pass then moves vertices that reduce the edge cut
/// without breaking connectivity or balance. Unbalanced results are retried
/// with reseeded fronts.
pub fn partition(graph: &AdjGraph, k: usize, seed: u64) -> Result<Vec<Vec<usize>>> {
    let n = graph.n();
    if k == 0 {
        return Err(SniError::Partition("K must be at least 1".into()));
    }
    if k > n {
        return Err(SniError::Partition(format!("K = {k} exceeds the vertex count {n}")));
    }
    let comps = graph.components();
    if comps.len() > 1 {
        let desc: Vec<String> = comps
            .iter()
            .map(|c| format!("{{{}.. ({} vertices)}}", c[0], c.len()))
            .collect();
        return Err(SniError::Partition(format!(
            "graph is disconnected: {} components {}",
            comps.len(),
            desc.join(", ")
        )));
    }
    if k == 1 {
        return Ok(vec![(0..n).collect()]);
    }
    let cap = max_part_size(n, k);
    let mut best_max = usize::MAX;
    for attempt in 0..PARTITION_ATTEMPTS {
        let s = seed.wrapping_add(attempt.wrapping_mul(0x9E37_79B9_7F4A_7C15));
        let mut owner = grow(graph, k, s);
        refine_boundary(graph, &mut owner, k, cap);
        if part_sizes(&owner, k).into_iter().max().unwrap_or(0) > cap {
            diffuse(graph, &mut owner, k);
        }
        let parts = collect_parts(&owner, k);
        let largest = parts.iter().map(Vec::len).max().unwrap_or(0);
        if largest <= cap && parts.iter().all(|p| !p.is_empty()) {
            if attempt > 0 {
                log::debug!("partition balanced after {} reseeds", attempt);
            }
            return Ok(parts);
        }
        best_max = best_max.min(largest);
    }
    Err(SniError::Partition(format!(
        "no balanced {k}-way partition after {PARTITION_ATTEMPTS} attempts (best largest part {best_max}, limit {cap})"
    )))
}

fn grow(graph: &AdjGraph, k: usize, seed: u64) -> Vec<usize> {
    let n = graph.n();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let start = rng.gen_range(0..n);
    let mut dist = graph.bfs_distances(&[start]);
    let mut seeds = Vec::with_capacity(k);
    while seeds.len() < k {
        // farthest vertex, smallest index on ties
        let mut far = 0;
        for v in 1..n {
            if dist[v] > dist[far] {
                far = v;
            }
        }
        let from_far = graph.bfs_distances(&[far]);
        if seeds.is_empty() {
            dist = from_far;
        } else {
            for (d, nd) in dist.iter_mut().zip(from_far) {
                *d = (*d).min(nd);
            }
        }
        seeds.push(far);
    }

    let mut owner = vec![usize::MAX; n];
    let mut sizes = vec![0usize; k];
    let mut fronts: Vec<VecDeque<usize>> = vec![VecDeque::new(); k];
    for (p, &s) in seeds.iter().enumerate() {
        owner[s] = p;
        sizes[p] = 1;
        fronts[p].extend(graph.neighbors(s));
    }
    let mut assigned = k;
    while assigned < n {
        let mut grew = false;
        let mut order: Vec<usize> = (0..k).collect();
        order.sort_by_key(|&p| (sizes[p], p));
        for p in order {
            while let Some(v) = fronts[p].pop_front() {
                if owner[v] == usize::MAX {
                    owner[v] = p;
                    sizes[p] += 1;
                    assigned += 1;
                    fronts[p].extend(graph.neighbors(v).iter().filter(|&&w| owner[w] == usize::MAX));
                    grew = true;
                    break;
                }
            }
            if grew {
                break;
            }
        }
        if !grew {
            break;
        }
    }
    owner
}

fn refine_boundary(graph: &AdjGraph, owner: &mut [usize], k: usize, cap: usize) {
    let mut sizes = vec![0usize; k];
    for &p in owner.iter() {
        sizes[p] += 1;
    }
    let mut counts = vec![0usize; k];
    for v in 0..graph.n() {
        let p = owner[v];
        for &w in graph.neighbors(v) {
            counts[owner[w]] += 1;
        }
        let mut best = p;
        for &w in graph.neighbors(v) {
            let q = owner[w];
            if counts[q] > counts[best] || (counts[q] == counts[best] && q < best && best != p) {
                best = q;
            }
        }
        let gain = counts[best] as isize - counts[p] as isize;
        for &w in graph.neighbors(v) {
            counts[owner[w]] = 0;
        }
        if best == p || gain <= 0 || sizes[p] <= 1 || sizes[best] + 1 > cap {
            continue;
        }
        let rest: Vec<usize> = (0..graph.n()).filter(|&u| u != v && owner[u] == p).collect();
        if !graph.is_connected_subset(&rest) {
            continue;
        }
        owner[v] = best;
        sizes[p] -= 1;
        sizes[best] += 1;
    }
}

fn part_sizes(owner: &[usize], k: usize) -> Vec<usize> {
    let mut sizes = vec![0usize; k];
    for &p in owner {
        if p < k {
            sizes[p] += 1;
        }
    }
    sizes
}

/// Moves boundary vertices from a part to a neighbouring part at least two
/// smaller, keeping the donor connected. Each move lowers the sum of squared
/// sizes, so this stops.
fn diffuse(graph: &AdjGraph, owner: &mut [usize], k: usize) {
    let mut sizes = part_sizes(owner, k);
    loop {
        let mut moved = false;
        for v in 0..graph.n() {
            let p = owner[v];
            if p >= k {
                continue;
            }
            let Some(q) = graph
                .neighbors(v)
                .iter()
                .map(|&w| owner[w])
                .filter(|&q| q < k && sizes[q] + 1 < sizes[p])
                .min_by_key(|&q| (sizes[q], q))
            else {
                continue;
            };
            let rest: Vec<usize> = (0..graph.n()).filter(|&u| u != v && owner[u] == p).collect();
            if !graph.is_connected_subset(&rest) {
                continue;
            }
            owner[v] = q;
            sizes[p] -= 1;
            sizes[q] += 1;
            moved = true;
        }
        if !moved {
            break;
        }
    }
}

fn collect_parts(owner: &[usize], k: usize) -> Vec<Vec<usize>> {
    let mut parts = vec![Vec::new(); k];
    for (v, &p) in owner.iter().enumerate() {
        if p < k {
            parts[p].push(v);
        }
    }
    parts
}

/// Number of edges joining different parts.
pub fn edge_cut(graph: &AdjGraph, parts: &[Vec<usize>]) -> usize {
    let mut owner = vec![usize::MAX; graph.n()];
    for (p, part) in parts.iter().enumerate() {
        for &v in part {
            owner[v] = p;
        }
    }
    (0..graph.n())
        .flat_map(|v| graph.neighbors(v).iter().map(move |&w| (v, w)))
        .filter(|&(v, w)| v < w && owner[v] != owner[w])
        .count()
}

/// Overlapping cover of the vertex set.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Decomposition {
    /// Extended parts, each sorted ascending.
    pub parts: Vec<Vec<usize>>,
    /// Disjoint parts before extension.
    pub core_parts: Vec<Vec<usize>>,
    pub depth: usize,
    /// Largest number of parts covering one vertex.
    pub overlap_factor: usize,
}

impl Decomposition {
    pub fn k(&self) -> usize {
        self.parts.len()
    }

    /// Number of parts covering each of the `n` vertices.
    pub fn coverage(&self, n: usize) -> Vec<usize> {
        let mut c = vec![0; n];
        for part in &self.parts {
            for &v in part {
                c[v] += 1;
            }
        }
        c
    }

    /// Checks cover completeness, core disjointness and connectivity.
    pub fn validate(&self, graph: &AdjGraph) -> Result<()> {
        let n = graph.n();
        if let Some(v) = self.coverage(n).iter().position(|&c| c == 0) {
            return Err(SniError::Partition(format!("vertex {v} is not covered")));
        }
        let mut owner = vec![false; n];
        for (k, core) in self.core_parts.iter().enumerate() {
            for &v in core {
                if std::mem::replace(&mut owner[v], true) {
                    return Err(SniError::Partition(format!("vertex {v} is in two core parts")));
                }
            }
            if !graph.is_connected_subset(core) {
                return Err(SniError::Partition(format!("core part {k} is not connected")));
            }
        }
        for (k, part) in self.parts.iter().enumerate() {
            if !graph.is_connected_subset(part) {
                return Err(SniError::Partition(format!("part {k} is not connected")));
            }
        }
        Ok(())
    }
}

/// Grows every core part by `depth` layers of graph neighbours.
pub fn extend(graph: &AdjGraph, core_parts: &[Vec<usize>], depth: usize) -> Decomposition {
    let n = graph.n();
    let parts: Vec<Vec<usize>> = core_parts
        .iter()
        .map(|core| {
            let dist = graph.bfs_distances(core);
            (0..n).filter(|&v| dist[v] <= depth).collect()
        })
        .collect();
    let mut d = Decomposition {
        parts,
        core_parts: core_parts
            .iter()
            .map(|c| {
                let mut c = c.clone();
                c.sort_unstable();
                c
            })
            .collect(),
        depth,
        overlap_factor: 0,
    };
    d.overlap_factor = d.coverage(n).into_iter().max().unwrap_or(0);
    debug_assert!(d.coverage(n).iter().all(|&c| c > 0) || core_parts.iter().map(Vec::len).sum::<usize>() < n);
    d
}

/// Partitions the mesh graph and extends by `depth`.
pub fn decompose<T: Real>(mesh: &TriMesh<T>, k: usize, depth: usize, seed: u64) -> Result<Decomposition> {
    let graph = build_adjacency(mesh);
    let core = partition(&graph, k, seed)?;
    let d = extend(&graph, &core, depth);
    d.validate(&graph)?;
    Ok(d)
}

/// `R_k u`: entries of `u` at `part`, in part order.
pub fn restrict<T: Copy>(u: &[T], part: &[usize]) -> Result<Vec<T>> {
    part.iter()
        .map(|&v| {
            u.get(v)
                .copied()
                .ok_or(SniError::IndexOutOfRange { index: v, len: u.len() })
        })
        .collect()
}

/// `R_kᵀ w`: scatters `w` to `part` in a zero vector of length `n`.
pub fn extend_by_zero<T: Real>(w: &[T], part: &[usize], n: usize) -> Result<Vec<T>> {
    if w.len() != part.len() {
        return Err(SniError::LengthMismatch {
            expected: part.len(),
            got: w.len(),
        });
    }
    let mut out = vec![T::zero(); n];
    for (&v, &x) in part.iter().zip(w) {
        *out.get_mut(v).ok_or(SniError::IndexOutOfRange { index: v, len: n })? = x;
    }
    Ok(out)
}

/// Number of connected arcs of each boundary type on a submesh boundary.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct BoundaryMix {
    pub dirichlet_arcs: usize,
    pub neumann_arcs: usize,
    pub artificial_arcs: usize,
}

impl BoundaryMix {
    /// Surrogates trained on simple shapes expect at most two boundary arcs.
    pub fn is_simple(&self) -> bool {
        self.dirichlet_arcs + self.neumann_arcs + self.artificial_arcs <= 2
    }
}

/// Counts connected runs of same-kind boundary edges on a submesh.
pub fn boundary_mix<T: Real>(sub: &SubMesh<T>) -> BoundaryMix {
    let edges = &sub.mesh.boundary_edges;
    let mut arcs = BoundaryMix::default();
    for kind in [BoundaryKind::Dirichlet, BoundaryKind::Neumann, BoundaryKind::Artificial] {
        let ids: Vec<[usize; 2]> = edges.iter().filter(|e| e.tag.kind == kind).map(|e| e.v).collect();
        let g = AdjGraph::from_edges(sub.n_vertices(), ids.iter().map(|e| (e[0], e[1])));
        let mut touched = vec![false; sub.n_vertices()];
        for e in &ids {
            touched[e[0]] = true;
            touched[e[1]] = true;
        }
        let count = g.components().iter().filter(|c| touched[c[0]]).count();
        match kind {
            BoundaryKind::Dirichlet => arcs.dirichlet_arcs = count,
            BoundaryKind::Neumann => arcs.neumann_arcs = count,
            BoundaryKind::Artificial => arcs.artificial_arcs = count,
        }
    }
    arcs
}
