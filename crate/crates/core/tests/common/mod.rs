//! Instance generators and brute-force oracles shared by the integration
//! tests. The oracles work from the raw definitions on paths and
//! hypothesis lists; they do not touch the library's masks or caches.

#![allow(dead_code)]

use std::collections::HashMap;

use rand::seq::SliceRandom;
use rand::Rng;
use slc_core::graph::ManipulationGraph;
use slc_core::hypothesis::{HypothesisClass, Label, Labeling};

pub fn random_graph(rng: &mut impl Rng, n: usize, p: f64) -> ManipulationGraph {
    let mut edges = Vec::new();
    for u in 0..n {
        for v in 0..n {
            if u != v && rng.gen_bool(p) {
                edges.push((u, v));
            }
        }
    }
    ManipulationGraph::new(n, edges).unwrap()
}

/// A random graph whose in-degrees do not exceed `max_in`.
pub fn random_graph_max_in(rng: &mut impl Rng, n: usize, p: f64, max_in: usize) -> ManipulationGraph {
    let mut edges = Vec::new();
    for v in 0..n {
        let mut sources: Vec<usize> = (0..n).filter(|&u| u != v && rng.gen_bool(p)).collect();
        sources.shuffle(rng);
        sources.truncate(max_in);
        edges.extend(sources.into_iter().map(|u| (u, v)));
    }
    ManipulationGraph::new(n, edges).unwrap()
}

/// Every directed graph on `n` nodes.
pub fn all_graphs(n: usize) -> Vec<ManipulationGraph> {
    let pairs: Vec<(usize, usize)> = (0..n)
        .flat_map(|u| (0..n).filter(move |&v| v != u).map(move |v| (u, v)))
        .collect();
    (0u64..1 << pairs.len())
        .map(|bits| {
            let edges = pairs.iter().enumerate().filter(|(i, _)| bits >> i & 1 == 1).map(|(_, &e)| e);
            ManipulationGraph::new(n, edges).unwrap()
        })
        .collect()
}

pub fn labeling_from_bits(n: usize, bits: u64) -> Labeling {
    Labeling::new(
        (0..n)
            .map(|x| if bits >> x & 1 == 1 { Label::Pos } else { Label::Neg })
            .collect(),
    )
}

/// A class of `1..=max_size` distinct random labelings.
pub fn random_class(rng: &mut impl Rng, n: usize, max_size: usize) -> HypothesisClass {
    let universe = 1usize << n;
    let size = rng.gen_range(1..=max_size.min(universe));
    let mut all: Vec<u64> = (0..universe as u64).collect();
    all.shuffle(rng);
    HypothesisClass::new(n, all[..size].iter().map(|&b| labeling_from_bits(n, b)).collect()).unwrap()
}

/// Every nonempty class of at most `max_size` labelings over `n` nodes.
pub fn all_classes(n: usize, max_size: usize) -> Vec<HypothesisClass> {
    let universe = 1usize << n;
    (1u64..1 << universe)
        .filter(|s| (s.count_ones() as usize) <= max_size)
        .map(|s| {
            HypothesisClass::new(
                n,
                (0..universe as u64)
                    .filter(|b| s >> b & 1 == 1)
                    .map(|b| labeling_from_bits(n, b))
                    .collect(),
            )
            .unwrap()
        })
        .collect()
}

/// `h̃(x)`, scanning every node for an edge from `x`.
pub fn eff(h: &Labeling, g: &ManipulationGraph, x: usize) -> bool {
    (0..g.n()).any(|u| (u == x || g.has_edge(x, u)) && h.get(u) == Label::Pos)
}

/// Strategic consistency of `h` with the observation `(v, y)`.
pub fn consistent(h: &Labeling, g: &ManipulationGraph, v: usize, y: Label) -> bool {
    match y {
        Label::Pos => eff(h, g, v),
        Label::Neg => (0..g.n()).any(|x| (x == v || g.has_edge(x, v)) && !eff(h, g, x)),
    }
}

/// The edges `(x, +1)` and `(v, -1)` for `v ∈ N^+[x]`.
fn edges_at(g: &ManipulationGraph, x: usize) -> Vec<(usize, Label)> {
    let mut out = vec![(x, Label::Pos)];
    for v in 0..g.n() {
        if v == x || g.has_edge(x, v) {
            out.push((v, Label::Neg));
        }
    }
    out
}

/// Largest depth of a strategic Littlestone tree shattered by `hc`, found
/// by asking depth by depth whether such a tree exists.
pub fn oracle_sldim(hc: &HypothesisClass, g: &ManipulationGraph) -> Option<usize> {
    if hc.is_empty() {
        return None;
    }
    let alive: Vec<usize> = (0..hc.len()).collect();
    let mut memo = HashMap::new();
    let mut d = 0;
    while tree_exists(hc, g, &alive, d + 1, &mut memo) {
        d += 1;
        assert!(d < hc.len(), "a shattered tree cannot be deeper than |H| - 1");
    }
    Some(d)
}

/// Whether some tree of depth `depth` is shattered by the hypotheses in
/// `alive` (those consistent with the path so far).
fn tree_exists(
    hc: &HypothesisClass,
    g: &ManipulationGraph,
    alive: &[usize],
    depth: usize,
    memo: &mut HashMap<(Vec<usize>, usize), bool>,
) -> bool {
    if alive.is_empty() {
        return false;
    }
    if depth == 0 {
        return true;
    }
    if let Some(&b) = memo.get(&(alive.to_vec(), depth)) {
        return b;
    }
    let found = (0..g.n()).any(|x| {
        edges_at(g, x).into_iter().all(|(v, y)| {
            let next: Vec<usize> = alive
                .iter()
                .copied()
                .filter(|&i| consistent(hc.get(i), g, v, y))
                .collect();
            tree_exists(hc, g, &next, depth - 1, memo)
        })
    });
    memo.insert((alive.to_vec(), depth), found);
    found
}

/// Classical Littlestone dimension from the definition.
pub fn oracle_ldim(hc: &HypothesisClass) -> Option<usize> {
    fn go(hc: &HypothesisClass, alive: &[usize], memo: &mut HashMap<Vec<usize>, usize>) -> usize {
        if let Some(&d) = memo.get(alive) {
            return d;
        }
        let mut best = 0;
        for x in 0..hc.n() {
            let (pos, neg): (Vec<usize>, Vec<usize>) = alive.iter().partition(|&&i| hc.get(i).get(x) == Label::Pos);
            if !pos.is_empty() && !neg.is_empty() {
                best = best.max(1 + go(hc, &pos, memo).min(go(hc, &neg, memo)));
            }
        }
        memo.insert(alive.to_vec(), best);
        best
    }
    if hc.is_empty() {
        return None;
    }
    Some(go(hc, &(0..hc.len()).collect::<Vec<_>>(), &mut HashMap::new()))
}
