//! Undirected graph storage, adjacency normalization, homophily and
//! structure edits.

use std::cmp::Ordering;
use std::collections::HashSet;
use std::sync::Arc;

use log::warn;
use rand::seq::index;
use rand::Rng;

use crate::error::{Error, Result};
use crate::sparse::CsrMatrix;

/// Undirected simple graph. Edges are kept as sorted unique `(u, v)` pairs
/// with `u < v`; neighbor lists hold both directions and are sorted.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Graph {
    num_nodes: usize,
    edges: Vec<(usize, usize)>,
    offsets: Vec<usize>,
    neighbors: Vec<usize>,
}

impl Graph {
    /// Builds a graph from arbitrary (possibly directed, duplicated or
    /// self-looped) pairs. Pairs are symmetrized, deduplicated and self-loops
    /// dropped.
    pub fn from_edges<I>(num_nodes: usize, pairs: I) -> Result<Self>
    where
        I: IntoIterator<Item = (usize, usize)>,
    {
        let mut edges = Vec::new();
        for (u, v) in pairs {
            for n in [u, v] {
                if n >= num_nodes {
                    return Err(Error::NodeOutOfRange { node: n, num_nodes });
                }
            }
            if u != v {
                edges.push((u.min(v), u.max(v)));
            }
        }
        edges.sort_unstable();
        edges.dedup();
        Ok(Self::from_canonical(num_nodes, edges))
    }

    fn from_canonical(num_nodes: usize, edges: Vec<(usize, usize)>) -> Self {
        let mut offsets = vec![0usize; num_nodes + 1];
        for &(u, v) in &edges {
            offsets[u + 1] += 1;
            offsets[v + 1] += 1;
        }
        for i in 0..num_nodes {
            offsets[i + 1] += offsets[i];
        }
        let mut fill = offsets.clone();
        let mut neighbors = vec![0usize; 2 * edges.len()];
        for &(u, v) in &edges {
            neighbors[fill[u]] = v;
            fill[u] += 1;
            neighbors[fill[v]] = u;
            fill[v] += 1;
        }
        for i in 0..num_nodes {
            neighbors[offsets[i]..offsets[i + 1]].sort_unstable();
        }
        Self {
            num_nodes,
            edges,
            offsets,
            neighbors,
        }
    }

    pub fn num_nodes(&self) -> usize {
        self.num_nodes
    }

    pub fn num_edges(&self) -> usize {
        self.edges.len()
    }

    /// Sorted `(u, v)` pairs with `u < v`.
    pub fn edges(&self) -> &[(usize, usize)] {
        &self.edges
    }

    #[inline]
    pub fn neighbors(&self, u: usize) -> &[usize] {
        &self.neighbors[self.offsets[u]..self.offsets[u + 1]]
    }

    pub fn degree(&self, u: usize) -> usize {
        self.offsets[u + 1] - self.offsets[u]
    }

    pub fn has_edge(&self, u: usize, v: usize) -> bool {
        u < self.num_nodes && v < self.num_nodes && self.neighbors(u).binary_search(&v).is_ok()
    }

    /// Nodes with at least one neighbor, ascending.
    pub fn non_isolated_nodes(&self) -> Vec<usize> {
        (0..self.num_nodes).filter(|&u| self.degree(u) > 0).collect()
    }
}

/// Symmetrically normalized adjacency with self-loops,
/// `D̃^{-1/2} (A + I) D̃^{-1/2}`.
#[derive(Debug, Clone, PartialEq)]
pub struct NormalizedAdjacency(CsrMatrix);

impl NormalizedAdjacency {
    pub fn matrix(&self) -> &CsrMatrix {
        &self.0
    }

    pub fn into_matrix(self) -> CsrMatrix {
        self.0
    }

    pub fn dim(&self) -> usize {
        self.0.rows()
    }
}

pub fn normalize_adjacency(g: &Graph) -> NormalizedAdjacency {
    let n = g.num_nodes();
    let inv_sqrt: Vec<f64> = (0..n)
        .map(|u| 1.0 / ((g.degree(u) + 1) as f64).sqrt())
        .collect();
    let mut indptr = Vec::with_capacity(n + 1);
    let mut indices = Vec::with_capacity(2 * g.num_edges() + n);
    let mut values = Vec::with_capacity(2 * g.num_edges() + n);
    indptr.push(0);
    for u in 0..n {
        let nb = g.neighbors(u);
        let split = nb.partition_point(|&v| v < u);
        for &v in &nb[..split] {
            indices.push(v);
            values.push(inv_sqrt[u] * inv_sqrt[v]);
        }
        indices.push(u);
        values.push(inv_sqrt[u] * inv_sqrt[u]);
        for &v in &nb[split..] {
            indices.push(v);
            values.push(inv_sqrt[u] * inv_sqrt[v]);
        }
        indptr.push(indices.len());
    }
    NormalizedAdjacency(CsrMatrix::new(n, n, indptr, indices, values).expect("valid csr"))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Homophily {
    pub ratio: f64,
    /// Set when the graph has no edges; `ratio` is then reported as 0.
    pub no_edges: bool,
}

/// Fraction of edges whose endpoints share a label.
pub fn homophily_ratio(g: &Graph, labels: &[usize]) -> Result<Homophily> {
    if labels.len() < g.num_nodes() {
        return Err(Error::shape(
            "homophily_ratio",
            format!("{} labels for {} nodes", labels.len(), g.num_nodes()),
        ));
    }
    if g.num_edges() == 0 {
        warn!("homophily ratio of an edgeless graph reported as 0");
        return Ok(Homophily {
            ratio: 0.0,
            no_edges: true,
        });
    }
    let same = g
        .edges()
        .iter()
        .filter(|&&(u, v)| labels[u] == labels[v])
        .count();
    Ok(Homophily {
        ratio: same as f64 / g.num_edges() as f64,
        no_edges: false,
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScoredPair {
    pub u: usize,
    pub v: usize,
    pub score: f64,
}

impl ScoredPair {
    pub fn new(u: usize, v: usize, score: f64) -> Self {
        Self {
            u: u.min(v),
            v: u.max(v),
            score,
        }
    }
}

/// Ranking order shared by every scored edge list: score, then smaller
/// endpoint, then larger endpoint.
pub fn rank_ascending(a: &ScoredPair, b: &ScoredPair) -> Ordering {
    a.score
        .total_cmp(&b.score)
        .then(a.u.cmp(&b.u))
        .then(a.v.cmp(&b.v))
}

/// Highest score first; equal scores fall back to ascending endpoint ids.
pub fn rank_descending(a: &ScoredPair, b: &ScoredPair) -> Ordering {
    b.score
        .total_cmp(&a.score)
        .then(a.u.cmp(&b.u))
        .then(a.v.cmp(&b.v))
}

/// Edges to add (best first) and edges to remove (worst first).
#[derive(Debug, Clone, Default, PartialEq)]
pub struct RefinementPlan {
    pub add: Vec<ScoredPair>,
    pub remove: Vec<ScoredPair>,
}

impl RefinementPlan {
    pub fn is_empty(&self) -> bool {
        self.add.is_empty() && self.remove.is_empty()
    }

    /// The plan that undoes this one.
    pub fn reversed(&self) -> Self {
        Self {
            add: self.remove.clone(),
            remove: self.add.clone(),
        }
    }

    pub fn validate(&self, g: &Graph) -> Result<()> {
        let mut seen = HashSet::new();
        for (kind, list, must_exist) in [("add", &self.add, false), ("remove", &self.remove, true)] {
            for p in list.iter() {
                if p.u >= g.num_nodes() || p.v >= g.num_nodes() {
                    return Err(Error::InvalidPlan(format!(
                        "{kind} ({}, {}) references a node outside 0..{}",
                        p.u,
                        p.v,
                        g.num_nodes()
                    )));
                }
                if p.u == p.v {
                    return Err(Error::InvalidPlan(format!("{kind} ({}, {}) is a self-loop", p.u, p.v)));
                }
                if g.has_edge(p.u, p.v) != must_exist {
                    let what = if must_exist { "not an edge" } else { "already an edge" };
                    return Err(Error::InvalidPlan(format!(
                        "{kind} ({}, {}) is {what} of the source graph",
                        p.u, p.v
                    )));
                }
                if !seen.insert((p.u.min(p.v), p.u.max(p.v))) {
                    return Err(Error::InvalidPlan(format!(
                        "pair ({}, {}) listed more than once",
                        p.u, p.v
                    )));
                }
            }
        }
        Ok(())
    }
}

/// `(E ∖ remove) ∪ add`.
pub fn apply_refinement(g: &Graph, plan: &RefinementPlan) -> Result<Graph> {
    plan.validate(g)?;
    let removed: HashSet<(usize, usize)> = plan
        .remove
        .iter()
        .map(|p| (p.u.min(p.v), p.u.max(p.v)))
        .collect();
    let mut edges: Vec<(usize, usize)> = g
        .edges()
        .iter()
        .copied()
        .filter(|e| !removed.contains(e))
        .collect();
    edges.extend(plan.add.iter().map(|p| (p.u.min(p.v), p.u.max(p.v))));
    edges.sort_unstable();
    Ok(Graph::from_canonical(g.num_nodes(), edges))
}

/// Induced subgraph around a center node. Local index 0 is the center.
#[derive(Debug, Clone, PartialEq)]
pub struct Subgraph {
    /// Global ids, center first, then in discovery order.
    pub nodes: Vec<usize>,
    pub center: usize,
    /// Induced edges in local ids, `(a, b)` with `a < b`.
    pub edges: Vec<(usize, usize)>,
}

impl Subgraph {
    pub fn to_graph(&self) -> Graph {
        Graph::from_canonical(self.nodes.len(), self.edges.clone())
    }
}

/// Samples the `radius`-hop neighborhood of `center`, keeping at most
/// `fanout` unvisited neighbors per expanded node, and returns the subgraph
/// induced on the sampled nodes.
///
/// Neighbors are examined in ascending id order; when a node has more than
/// `fanout` unvisited neighbors, `rand::seq::index::sample` picks which ones
/// and the picks are kept in ascending position order.
pub fn ego_subgraph<R: Rng + ?Sized>(
    g: &Graph,
    center: usize,
    radius: usize,
    fanout: usize,
    rng: &mut R,
) -> Result<Subgraph> {
    if center >= g.num_nodes() {
        return Err(Error::NodeOutOfRange {
            node: center,
            num_nodes: g.num_nodes(),
        });
    }
    if radius == 0 {
        return Err(Error::InvalidConfig("ego-subgraph radius must be at least 1".into()));
    }
    let mut nodes = vec![center];
    let mut visited: HashSet<usize> = HashSet::from([center]);
    let mut frontier = vec![center];
    for _ in 0..radius {
        let mut next = Vec::new();
        for &u in &frontier {
            let fresh: Vec<usize> = g
                .neighbors(u)
                .iter()
                .copied()
                .filter(|v| !visited.contains(v))
                .collect();
            let picked: Vec<usize> = if fresh.len() > fanout {
                let mut pos = index::sample(rng, fresh.len(), fanout).into_vec();
                pos.sort_unstable();
                pos.into_iter().map(|p| fresh[p]).collect()
            } else {
                fresh
            };
            for v in picked {
                visited.insert(v);
                nodes.push(v);
                next.push(v);
            }
        }
        if next.is_empty() {
            break;
        }
        frontier = next;
    }
    let local: std::collections::HashMap<usize, usize> =
        nodes.iter().enumerate().map(|(i, &v)| (v, i)).collect();
    let mut edges = Vec::new();
    for (a, &u) in nodes.iter().enumerate() {
        for v in g.neighbors(u) {
            if let Some(&b) = local.get(v) {
                if a < b {
                    edges.push((a, b));
                }
            }
        }
    }
    edges.sort_unstable();
    Ok(Subgraph {
        nodes,
        center: 0,
        edges,
    })
}

/// Shared, read-only bundle of a graph and its normalized adjacency.
#[derive(Debug, Clone)]
pub struct GraphContext {
    pub graph: Arc<Graph>,
    pub adjacency: Arc<CsrMatrix>,
}

impl GraphContext {
    pub fn new(graph: Graph) -> Self {
        let adjacency = Arc::new(normalize_adjacency(&graph).into_matrix());
        Self {
            graph: Arc::new(graph),
            adjacency,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn path3() -> Graph {
        Graph::from_edges(3, [(0, 1), (1, 2)]).unwrap()
    }

    #[test]
    fn load_symmetrizes_and_strips_loops() {
        let g = Graph::from_edges(4, [(1, 0), (0, 1), (2, 2), (3, 1), (1, 3)]).unwrap();
        assert_eq!(g.edges(), &[(0, 1), (1, 3)]);
        assert_eq!(g.neighbors(1), &[0, 3]);
        assert_eq!(g.neighbors(2), &[] as &[usize]);
        assert!(Graph::from_edges(2, [(0, 2)]).is_err());
    }

    #[test]
    fn normalization_small_cases() {
        let single = Graph::from_edges(1, []).unwrap();
        assert_eq!(normalize_adjacency(&single).matrix().to_dense(), ndarray::array![[1.0]]);
        let pair = Graph::from_edges(2, [(0, 1)]).unwrap();
        let d = normalize_adjacency(&pair).matrix().to_dense();
        assert!(d.iter().all(|v| (v - 0.5).abs() < 1e-15));
        let a = normalize_adjacency(&path3());
        assert!((a.matrix().get(0, 1) - 1.0 / 6f64.sqrt()).abs() < 1e-15);
    }

    #[test]
    fn homophily_cases() {
        let g = path3();
        assert_eq!(homophily_ratio(&g, &[0, 0, 0]).unwrap().ratio, 1.0);
        assert_eq!(homophily_ratio(&g, &[0, 1, 0]).unwrap().ratio, 0.0);
        assert_eq!(homophily_ratio(&g, &[0, 0, 1]).unwrap().ratio, 0.5);
        let empty = Graph::from_edges(3, []).unwrap();
        let h = homophily_ratio(&empty, &[0, 0, 0]).unwrap();
        assert!(h.no_edges);
        assert_eq!(h.ratio, 0.0);
    }

    #[test]
    fn refinement_to_triangle() {
        let g = path3();
        let plan = RefinementPlan {
            add: vec![ScoredPair::new(0, 2, 0.9)],
            remove: vec![],
        };
        let t = apply_refinement(&g, &plan).unwrap();
        assert_eq!(t.num_edges(), 3);
        assert_eq!(apply_refinement(&g, &RefinementPlan::default()).unwrap(), g);
        assert_eq!(apply_refinement(&t, &plan.reversed()).unwrap(), g);
    }

    #[test]
    fn inconsistent_plans_rejected() {
        let g = path3();
        let bad_add = RefinementPlan {
            add: vec![ScoredPair::new(0, 1, 1.0)],
            remove: vec![],
        };
        assert!(matches!(apply_refinement(&g, &bad_add), Err(Error::InvalidPlan(_))));
        let bad_remove = RefinementPlan {
            add: vec![],
            remove: vec![ScoredPair::new(0, 2, 0.0)],
        };
        assert!(apply_refinement(&g, &bad_remove).is_err());
        let out_of_range = RefinementPlan {
            add: vec![ScoredPair::new(0, 7, 0.0)],
            remove: vec![],
        };
        assert!(apply_refinement(&g, &out_of_range).is_err());
    }

    #[test]
    fn ego_isolated_and_star() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let g = Graph::from_edges(5, [(0, 1), (0, 2), (0, 3)]).unwrap();
        let s = ego_subgraph(&g, 4, 2, 3, &mut rng).unwrap();
        assert_eq!(s.nodes, vec![4]);
        assert!(s.edges.is_empty());
        let star = ego_subgraph(&g, 0, 1, 10, &mut rng).unwrap();
        assert_eq!(star.nodes, vec![0, 1, 2, 3]);
        assert_eq!(star.edges, vec![(0, 1), (0, 2), (0, 3)]);
        assert!(ego_subgraph(&g, 0, 0, 1, &mut rng).is_err());
    }
}
