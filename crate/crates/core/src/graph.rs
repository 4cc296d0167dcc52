//! Finite directed manipulation graphs.
//!
//! An edge `(u, v)` means an agent whose true features are `u` can report `v`.
//! Self-loops are never stored: every node implicitly reaches itself, and the
//! inclusive neighborhoods `N^+[x]` / `N^-[x]` are materialized once at
//! construction so queries are slice lookups.

use std::collections::BTreeSet;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Index of a feature vector in the finite feature space `0..n`.
pub type NodeId = usize;

#[derive(Clone, PartialEq, Eq)]
pub struct ManipulationGraph {
    n: usize,
    out: Vec<Vec<NodeId>>,
    inn: Vec<Vec<NodeId>>,
    out_closed: Vec<Vec<NodeId>>,
    in_closed: Vec<Vec<NodeId>>,
    in_index: Vec<Vec<NodeId>>,
}

impl std::fmt::Debug for ManipulationGraph {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("ManipulationGraph")
            .field("n", &self.n)
            .field("edges", &self.edges().collect::<Vec<_>>())
            .finish()
    }
}

impl ManipulationGraph {
    /// Builds a graph, deduplicating edges. Self-loops and out-of-range
    /// endpoints are rejected.
    pub fn new(n: usize, edges: impl IntoIterator<Item = (NodeId, NodeId)>) -> Result<Self> {
        let mut set = BTreeSet::new();
        for (u, v) in edges {
            if u >= n || v >= n {
                return Err(Error::input(format!("edge ({u},{v}) out of range for n={n}")));
            }
            if u == v {
                return Err(Error::input(format!("self-loop at node {u}")));
            }
            set.insert((u, v));
        }
        let mut out = vec![Vec::new(); n];
        let mut inn = vec![Vec::new(); n];
        // BTreeSet iteration is sorted by (u, v), so every list comes out ascending.
        for &(u, v) in &set {
            out[u].push(v);
        }
        for &(u, v) in &set {
            inn[v].push(u);
        }
        for l in &mut inn {
            l.sort_unstable();
        }
        let closed = |lists: &Vec<Vec<NodeId>>| -> Vec<Vec<NodeId>> {
            lists
                .iter()
                .enumerate()
                .map(|(x, l)| {
                    let mut c = l.clone();
                    let pos = c.partition_point(|&y| y < x);
                    c.insert(pos, x);
                    c
                })
                .collect()
        };
        let out_closed = closed(&out);
        let in_closed = closed(&inn);
        let in_index = inn
            .iter()
            .enumerate()
            .map(|(v, l)| std::iter::once(v).chain(l.iter().copied()).collect())
            .collect();
        Ok(ManipulationGraph {
            n,
            out,
            inn,
            out_closed,
            in_closed,
            in_index,
        })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn edge_count(&self) -> usize {
        self.out.iter().map(Vec::len).sum()
    }

    /// Edges in ascending `(u, v)` order.
    pub fn edges(&self) -> impl Iterator<Item = (NodeId, NodeId)> + '_ {
        self.out
            .iter()
            .enumerate()
            .flat_map(|(u, l)| l.iter().map(move |&v| (u, v)))
    }

    pub fn has_edge(&self, u: NodeId, v: NodeId) -> bool {
        u < self.n && self.out[u].binary_search(&v).is_ok()
    }

    fn check(&self, x: NodeId) -> Result<()> {
        if x < self.n {
            Ok(())
        } else {
            Err(Error::input(format!("node {x} out of range for n={}", self.n)))
        }
    }

    /// `N^+[x]`, ascending. Panics if `x` is out of range.
    #[inline]
    pub fn out_closed(&self, x: NodeId) -> &[NodeId] {
        &self.out_closed[x]
    }

    /// `N^-[x]`, ascending. Panics if `x` is out of range.
    #[inline]
    pub fn in_closed(&self, x: NodeId) -> &[NodeId] {
        &self.in_closed[x]
    }

    /// Exclusive out-neighbors `N^+(x)`.
    pub fn out_neighbors(&self, x: NodeId) -> &[NodeId] {
        &self.out[x]
    }

    /// Exclusive in-neighbors `N^-(x)`.
    pub fn in_neighbors(&self, x: NodeId) -> &[NodeId] {
        &self.inn[x]
    }

    pub fn out_neighborhood_inclusive(&self, x: NodeId) -> Result<&[NodeId]> {
        self.check(x)?;
        Ok(self.out_closed(x))
    }

    pub fn in_neighborhood_inclusive(&self, x: NodeId) -> Result<&[NodeId]> {
        self.check(x)?;
        Ok(self.in_closed(x))
    }

    /// The in-neighbor index of `v`: position 0 is `v` itself, then the
    /// exclusive in-neighbors in ascending order.
    pub fn in_neighbor_index(&self, v: NodeId) -> &[NodeId] {
        &self.in_index[v]
    }

    /// The `r`-th entry of [`in_neighbor_index`](Self::in_neighbor_index), or
    /// `None` if `v` has fewer than `r + 1` inclusive in-neighbors.
    pub fn in_neighbor_by_index(&self, v: NodeId, r: usize) -> Option<NodeId> {
        self.in_index.get(v)?.get(r).copied()
    }

    /// Position of `x` within the in-neighbor index of `v`.
    pub fn index_of_in_neighbor(&self, v: NodeId, x: NodeId) -> Option<usize> {
        self.in_index.get(v)?.iter().position(|&y| y == x)
    }

    pub fn max_out_degree(&self) -> usize {
        self.out.iter().map(Vec::len).max().unwrap_or(0)
    }

    pub fn max_in_degree(&self) -> usize {
        self.inn.iter().map(Vec::len).max().unwrap_or(0)
    }

    pub fn is_subgraph_of(&self, other: &ManipulationGraph) -> bool {
        self.n == other.n && self.edges().all(|(u, v)| other.has_edge(u, v))
    }

    /// Same node count and identical `N^+[x]`.
    pub fn same_out_neighborhood(&self, other: &ManipulationGraph, x: NodeId) -> bool {
        self.out_closed(x) == other.out_closed(x)
    }

    pub fn to_json(&self) -> String {
        let file = GraphFile {
            n: self.n,
            edges: self.edges().map(|(u, v)| [u, v]).collect(),
        };
        serde_json::to_string(&file).expect("graph serialization cannot fail")
    }

    /// Parses the `{"n": .., "edges": [[u,v], ..]}` format. Duplicate edges
    /// are merged; self-loops are a parse error.
    pub fn from_json(s: &str) -> Result<Self> {
        let file: GraphFile = serde_json::from_str(s)?;
        ManipulationGraph::new(file.n, file.edges.into_iter().map(|[u, v]| (u, v))).map_err(|e| match e {
            Error::Input(m) => Error::Parse(m),
            other => other,
        })
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::parse(format!("{}: {e}", path.display())))?;
        Self::from_json(&text)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path, self.to_json())?;
        Ok(())
    }
}

#[derive(Serialize, Deserialize)]
struct GraphFile {
    n: usize,
    edges: Vec<[usize; 2]>,
}

/// Edge-set union of graphs over a common node count.
pub fn union_graph(gs: &[ManipulationGraph]) -> Result<ManipulationGraph> {
    let first = gs
        .first()
        .ok_or_else(|| Error::input("union of an empty graph list"))?;
    if let Some(g) = gs.iter().find(|g| g.n != first.n) {
        return Err(Error::input(format!(
            "node count mismatch in union: {} vs {}",
            first.n, g.n
        )));
    }
    ManipulationGraph::new(first.n, gs.iter().flat_map(|g| g.edges()))
}

/// A nonempty family of candidate manipulation graphs with its cached union.
#[derive(Clone, Debug)]
pub struct GraphClass {
    graphs: Vec<ManipulationGraph>,
    union: ManipulationGraph,
}

impl GraphClass {
    pub fn new(graphs: Vec<ManipulationGraph>) -> Result<Self> {
        let union = union_graph(&graphs)?;
        Ok(GraphClass { graphs, union })
    }

    pub fn graphs(&self) -> &[ManipulationGraph] {
        &self.graphs
    }

    pub fn len(&self) -> usize {
        self.graphs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.graphs.is_empty()
    }

    pub fn n(&self) -> usize {
        self.union.n
    }

    pub fn union(&self) -> &ManipulationGraph {
        &self.union
    }

    /// Largest in-degree over the members (not of the union).
    pub fn max_member_in_degree(&self) -> usize {
        self.graphs.iter().map(|g| g.max_in_degree()).max().unwrap_or(0)
    }
}

// ---------------------------------------------------------------------------
// Generators
// ---------------------------------------------------------------------------

/// Star with center 0 and leaves `1..=delta`, edges center → leaf only.
pub fn star(delta: usize) -> Result<ManipulationGraph> {
    if delta == 0 {
        return Err(Error::input("star needs delta >= 1"));
    }
    ManipulationGraph::new(delta + 1, (1..=delta).map(|l| (0, l)))
}

/// Star with center 0 and leaves `1..=delta`, edges in both directions
/// (the undirected star embedded as a directed graph).
pub fn bistar(delta: usize) -> Result<ManipulationGraph> {
    if delta == 0 {
        return Err(Error::input("star needs delta >= 1"));
    }
    ManipulationGraph::new(delta + 1, (1..=delta).flat_map(|l| [(0, l), (l, 0)]))
}

pub fn complete(n: usize) -> Result<ManipulationGraph> {
    if n == 0 {
        return Err(Error::input("complete graph needs n >= 1"));
    }
    ManipulationGraph::new(
        n,
        (0..n).flat_map(|u| (0..n).filter(move |&v| v != u).map(move |v| (u, v))),
    )
}

pub fn isolated(n: usize) -> Result<ManipulationGraph> {
    if n == 0 {
        return Err(Error::input("isolated graph needs n >= 1"));
    }
    ManipulationGraph::new(n, std::iter::empty())
}

/// Erdős–Rényi `G(n, p)`: each unordered pair is realized independently with
/// probability `p` and inserted in both directions.
pub fn random_gnp(n: usize, p: f64, seed: u64) -> Result<ManipulationGraph> {
    if n == 0 {
        return Err(Error::input("G(n,p) needs n >= 1"));
    }
    if !(0.0..=1.0).contains(&p) {
        return Err(Error::input(format!("probability {p} outside [0,1]")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut edges = Vec::new();
    for u in 0..n {
        for v in u + 1..n {
            if rng.gen_bool(p) {
                edges.push((u, v));
                edges.push((v, u));
            }
        }
    }
    ManipulationGraph::new(n, edges)
}

/// Disjoint union of `base` with a complete graph on `clique` fresh nodes
/// numbered `base.n()..base.n() + clique`.
pub fn clique_plus(base: &ManipulationGraph, clique: usize) -> Result<ManipulationGraph> {
    if clique == 0 {
        return Err(Error::input("clique size must be >= 1"));
    }
    let off = base.n();
    let k = complete(clique)?;
    ManipulationGraph::new(
        off + clique,
        base.edges().chain(k.edges().map(|(u, v)| (u + off, v + off))),
    )
}
