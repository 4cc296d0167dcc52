//! Exact classical and strategic Littlestone dimensions.
//!
//! The strategic dimension is computed by the max-min recursion
//!
//! ```text
//! sldim(∅) = -1
//! sldim(F) = max_x  min_{e ∈ edges(x)}  1 + sldim(F_e)
//! edges(x) = {(x,+1)} ∪ {(v,-1) : v ∈ N^+[x]}
//! ```
//!
//! memoized on version-space masks. An edge whose filter leaves `F`
//! unchanged can never attain the minimum (monotonicity, plus the fact that
//! at least one edge at every node strictly shrinks a nonempty `F`), so it is
//! skipped; this also makes the recursion well founded. Every nonempty class
//! satisfies `sldim(F) <= |F| - 1`, which caps the outer maximization.

use std::collections::{BTreeMap, HashMap};
use std::sync::Arc;

use serde_json::{Map, Value};

use crate::error::{Error, Result};
use crate::graph::{ManipulationGraph, NodeId};
use crate::hypothesis::{effective_labeling, HypothesisClass, Label, Labeling, Observation, VersionSpace};
use crate::mask::Mask;

/// Largest class the dimension solvers accept.
pub const DEFAULT_CLASS_CAP: usize = 4096;

/// Largest explicit witness tree `sldim_witness` will materialize.
pub const DEFAULT_WITNESS_NODE_CAP: usize = 1_000_000;

/// Edges of a strategic Littlestone tree node labeled `x`: the false-negative
/// edge first, then the false-positive edges in ascending node order.
pub fn tree_edges(g: &ManipulationGraph, x: NodeId) -> impl Iterator<Item = Observation> + '_ {
    std::iter::once(Observation::new(x, Label::Pos))
        .chain(g.out_closed(x).iter().map(|&v| Observation::new(v, Label::Neg)))
}

/// A class paired with a graph, with the consistency filters of every
/// possible observation precomputed as masks over the full class.
#[derive(Debug)]
pub struct StrategicInstance {
    class: Arc<HypothesisClass>,
    graph: Arc<ManipulationGraph>,
    effective: Vec<Labeling>,
    pos: Vec<Mask>,
    neg: Vec<Mask>,
}

impl StrategicInstance {
    pub fn new(class: Arc<HypothesisClass>, graph: Arc<ManipulationGraph>) -> Result<Self> {
        Self::with_cap(class, graph, DEFAULT_CLASS_CAP)
    }

    pub fn with_cap(class: Arc<HypothesisClass>, graph: Arc<ManipulationGraph>, cap: usize) -> Result<Self> {
        if class.len() > cap {
            return Err(Error::resource("hypothesis class size", class.len() as u128, cap as u128));
        }
        if class.n() != graph.n() {
            return Err(Error::input(format!(
                "class is over {} nodes but graph has {}",
                class.n(),
                graph.n()
            )));
        }
        let n = graph.n();
        let m = class.len();
        let effective: Vec<Labeling> = class.members().iter().map(|h| effective_labeling(h, &graph)).collect();
        let mut pos = vec![Mask::empty(m); n];
        let mut neg = vec![Mask::empty(m); n];
        for (i, eff) in effective.iter().enumerate() {
            for v in 0..n {
                if eff.get(v).is_pos() {
                    pos[v].insert(i);
                }
                if graph.in_closed(v).iter().any(|&x| !eff.get(x).is_pos()) {
                    neg[v].insert(i);
                }
            }
        }
        Ok(StrategicInstance {
            class,
            graph,
            effective,
            pos,
            neg,
        })
    }

    pub fn class(&self) -> &Arc<HypothesisClass> {
        &self.class
    }

    pub fn graph(&self) -> &Arc<ManipulationGraph> {
        &self.graph
    }

    pub fn effective(&self, i: usize) -> &Labeling {
        &self.effective[i]
    }

    pub fn full_mask(&self) -> Mask {
        Mask::full(self.class.len())
    }

    /// Members of the full class consistent with `obs`.
    pub fn consistent_mask(&self, obs: Observation) -> &Mask {
        match obs.y {
            Label::Pos => &self.pos[obs.v],
            Label::Neg => &self.neg[obs.v],
        }
    }

    pub fn filter(&self, mask: &Mask, obs: Observation) -> Mask {
        mask.and(self.consistent_mask(obs))
    }
}

/// Memoized strategic-dimension solver for one (class, graph) pair.
///
/// The cache is owned; share a solver across threads only behind a lock.
#[derive(Debug)]
pub struct SldimSolver {
    inst: Arc<StrategicInstance>,
    cache: HashMap<Mask, i32>,
}

impl SldimSolver {
    pub fn new(class: Arc<HypothesisClass>, graph: Arc<ManipulationGraph>) -> Result<Self> {
        Ok(Self::from_instance(Arc::new(StrategicInstance::new(class, graph)?)))
    }

    pub fn from_instance(inst: Arc<StrategicInstance>) -> Self {
        SldimSolver {
            inst,
            cache: HashMap::new(),
        }
    }

    pub fn instance(&self) -> &Arc<StrategicInstance> {
        &self.inst
    }

    pub fn cache_len(&self) -> usize {
        self.cache.len()
    }

    /// Dimension of the subclass `mask`, with `-1` for the empty class.
    pub fn dim(&mut self, mask: &Mask) -> i32 {
        if mask.is_empty() {
            return -1;
        }
        if let Some(&d) = self.cache.get(mask) {
            return d;
        }
        let upper = mask.count() as i32 - 1;
        let mut best = 0;
        for x in 0..self.inst.graph.n() {
            if best >= upper {
                break;
            }
            best = best.max(self.node_value(mask, x, best));
        }
        self.cache.insert(mask.clone(), best);
        best
    }

    pub fn dim_full(&mut self) -> i32 {
        let full = self.inst.full_mask();
        self.dim(&full)
    }

    /// `min_e 1 + sldim(F_e)` at root `x`. Returns early with some value
    /// `<= floor` as soon as the true value is known not to exceed `floor`.
    fn node_value(&mut self, mask: &Mask, x: NodeId, floor: i32) -> i32 {
        let inst = Arc::clone(&self.inst);
        let mut value = i32::MAX;
        for obs in tree_edges(&inst.graph, x) {
            let sub = inst.filter(mask, obs);
            if sub == *mask {
                continue;
            }
            let d = 1 + self.dim(&sub);
            if d < value {
                value = d;
                if value <= floor {
                    break;
                }
            }
        }
        debug_assert!(value != i32::MAX, "every node has a shrinking edge");
        value
    }

    /// Lowest-id root whose subtrees all admit depth `depth - 1`.
    pub fn witness_root(&mut self, mask: &Mask, depth: usize) -> Option<NodeId> {
        if mask.is_empty() {
            return None;
        }
        if depth == 0 {
            return Some(0);
        }
        let need = depth as i32;
        (0..self.inst.graph.n()).find(|&x| self.node_value(mask, x, need - 1) >= need)
    }

    /// Explicit shattered tree of depth `dim(mask)`.
    pub fn witness(&mut self, mask: &Mask) -> Result<SLTreeWitness> {
        self.witness_capped(mask, DEFAULT_WITNESS_NODE_CAP)
    }

    pub fn witness_capped(&mut self, mask: &Mask, node_cap: usize) -> Result<SLTreeWitness> {
        if mask.is_empty() {
            return Err(Error::input("witness requested for an empty version space"));
        }
        let d = self.dim(mask) as usize;
        let mut budget = node_cap;
        self.build(mask, d, &mut budget, node_cap)
    }

    fn build(&mut self, mask: &Mask, depth: usize, budget: &mut usize, cap: usize) -> Result<SLTreeWitness> {
        if *budget == 0 {
            return Err(Error::resource("witness tree nodes", cap as u128 + 1, cap as u128));
        }
        *budget -= 1;
        let x = self
            .witness_root(mask, depth)
            .expect("depth never exceeds the dimension of the subclass");
        let mut children = BTreeMap::new();
        if depth > 0 {
            let inst = Arc::clone(&self.inst);
            for obs in tree_edges(&inst.graph, x) {
                let sub = inst.filter(mask, obs);
                children.insert(obs, self.build(&sub, depth - 1, budget, cap)?);
            }
        }
        Ok(SLTreeWitness { x, children })
    }
}

/// `SLdim(F, G)`, or `None` for an empty class. Uses a fresh cache per call.
pub fn sldim(f: &VersionSpace, g: &ManipulationGraph) -> Result<Option<usize>> {
    let mut solver = SldimSolver::new(Arc::clone(f.class()), Arc::new(g.clone()))?;
    let d = solver.dim(f.mask());
    Ok((d >= 0).then_some(d as usize))
}

/// A shattered tree of depth exactly `SLdim(F, G)`, verified with
/// [`is_shattered`] before it is returned.
pub fn sldim_witness(f: &VersionSpace, g: &ManipulationGraph) -> Result<SLTreeWitness> {
    let mut solver = SldimSolver::new(Arc::clone(f.class()), Arc::new(g.clone()))?;
    let t = solver.witness(f.mask())?;
    if !is_shattered(&t, f, g) {
        return Err(Error::protocol("extracted witness failed the shattering check"));
    }
    Ok(t)
}

// ---------------------------------------------------------------------------
// Witness trees
// ---------------------------------------------------------------------------

/// A strategic Littlestone tree. Leaves have no children; internal nodes
/// should carry exactly the edges returned by [`tree_edges`].
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SLTreeWitness {
    pub x: NodeId,
    pub children: BTreeMap<Observation, SLTreeWitness>,
}

impl SLTreeWitness {
    pub fn leaf(x: NodeId) -> Self {
        SLTreeWitness {
            x,
            children: BTreeMap::new(),
        }
    }

    /// `0` for a leaf, else one more than the shallowest child.
    pub fn depth(&self) -> usize {
        self.children
            .values()
            .map(|c| 1 + c.depth())
            .min()
            .unwrap_or(0)
    }

    pub fn node_count(&self) -> usize {
        1 + self.children.values().map(SLTreeWitness::node_count).sum::<usize>()
    }

    pub fn to_json_value(&self) -> Value {
        let mut children = Map::new();
        for (obs, c) in &self.children {
            children.insert(format!("{},{}", obs.v, obs.y.sign()), c.to_json_value());
        }
        let mut m = Map::new();
        m.insert("x".into(), Value::from(self.x));
        m.insert("children".into(), Value::Object(children));
        Value::Object(m)
    }

    pub fn to_json(&self) -> String {
        self.to_json_value().to_string()
    }

    pub fn from_json_value(v: &Value) -> Result<Self> {
        let obj = v.as_object().ok_or_else(|| Error::parse("witness node must be an object"))?;
        let x = obj
            .get("x")
            .and_then(Value::as_u64)
            .ok_or_else(|| Error::parse("witness node needs integer \"x\""))? as usize;
        let mut children = BTreeMap::new();
        if let Some(c) = obj.get("children") {
            let c = c.as_object().ok_or_else(|| Error::parse("\"children\" must be an object"))?;
            for (key, sub) in c {
                let (v, y) = key
                    .split_once(',')
                    .ok_or_else(|| Error::parse(format!("bad edge key {key:?}")))?;
                let v: usize = v.trim().parse().map_err(|_| Error::parse(format!("bad edge key {key:?}")))?;
                let y: i64 = y
                    .trim()
                    .trim_start_matches('+')
                    .parse()
                    .map_err(|_| Error::parse(format!("bad edge key {key:?}")))?;
                children.insert(Observation::new(v, Label::from_sign(y)?), Self::from_json_value(sub)?);
            }
        }
        Ok(SLTreeWitness { x, children })
    }

    pub fn from_json(s: &str) -> Result<Self> {
        Self::from_json_value(&serde_json::from_str(s)?)
    }
}

/// Whether `t` is a fully branched strategic Littlestone tree shattered by
/// `f` under `g`. Checks every root-to-leaf path against every hypothesis
/// directly, without the recursion or its masks.
pub fn is_shattered(t: &SLTreeWitness, f: &VersionSpace, g: &ManipulationGraph) -> bool {
    if f.is_empty() || f.class().n() != g.n() {
        return false;
    }
    let hyps: Vec<&Labeling> = f.members().map(|(_, h)| h).collect();
    let mut path = Vec::new();
    check_node(t, &hyps, g, &mut path)
}

fn check_node(t: &SLTreeWitness, hyps: &[&Labeling], g: &ManipulationGraph, path: &mut Vec<Observation>) -> bool {
    if t.x >= g.n() {
        return false;
    }
    if t.children.is_empty() {
        return hyps.iter().any(|h| path.iter().all(|&o| path_edge_holds(h, g, o)));
    }
    let expected: Vec<Observation> = tree_edges(g, t.x).collect();
    if t.children.len() != expected.len() || !expected.iter().all(|e| t.children.contains_key(e)) {
        return false;
    }
    for (obs, child) in &t.children {
        path.push(*obs);
        let ok = check_node(child, hyps, g, path);
        path.pop();
        if !ok {
            return false;
        }
    }
    true
}

/// Path consistency of a single edge, evaluated from the raw definition.
fn path_edge_holds(h: &Labeling, g: &ManipulationGraph, o: Observation) -> bool {
    let eff = |x: NodeId| {
        let mut pos = false;
        for u in 0..g.n() {
            if (u == x || g.has_edge(x, u)) && h.get(u) == Label::Pos {
                pos = true;
            }
        }
        pos
    };
    match o.y {
        Label::Pos => eff(o.v),
        Label::Neg => (0..g.n()).any(|x| (x == o.v || g.has_edge(x, o.v)) && !eff(x)),
    }
}

// ---------------------------------------------------------------------------
// Walking a witness one edge at a time
// ---------------------------------------------------------------------------

/// A strategic Littlestone tree explored along a single path.
pub trait WitnessWalk {
    /// Depth of the whole tree.
    fn depth(&self) -> usize;
    /// Feature labeling the current node.
    fn feature(&mut self) -> NodeId;
    /// Moves to the child along `edge`.
    fn descend(&mut self, edge: Observation) -> Result<()>;
}

/// Walks a materialized [`SLTreeWitness`].
pub struct ExplicitWalk<'a> {
    depth: usize,
    node: &'a SLTreeWitness,
}

impl<'a> ExplicitWalk<'a> {
    pub fn new(t: &'a SLTreeWitness) -> Self {
        ExplicitWalk {
            depth: t.depth(),
            node: t,
        }
    }
}

impl WitnessWalk for ExplicitWalk<'_> {
    fn depth(&self) -> usize {
        self.depth
    }

    fn feature(&mut self) -> NodeId {
        self.node.x
    }

    fn descend(&mut self, edge: Observation) -> Result<()> {
        self.node = self
            .node
            .children
            .get(&edge)
            .ok_or_else(|| Error::protocol(format!("witness node {} has no edge {edge:?}", self.node.x)))?;
        Ok(())
    }
}

/// The tree [`SldimSolver::witness`] would build, generated lazily along one
/// path. Needed when the full tree is too large to materialize.
pub struct LazyWitness<'s> {
    solver: &'s mut SldimSolver,
    mask: Mask,
    depth: usize,
    remaining: usize,
}

impl<'s> LazyWitness<'s> {
    pub fn new(solver: &'s mut SldimSolver, mask: Mask) -> Result<Self> {
        if mask.is_empty() {
            return Err(Error::input("witness requested for an empty version space"));
        }
        let depth = solver.dim(&mask) as usize;
        Ok(LazyWitness {
            solver,
            mask,
            depth,
            remaining: depth,
        })
    }
}

impl WitnessWalk for LazyWitness<'_> {
    fn depth(&self) -> usize {
        self.depth
    }

    fn feature(&mut self) -> NodeId {
        self.solver
            .witness_root(&self.mask, self.remaining)
            .expect("remaining depth never exceeds the subclass dimension")
    }

    fn descend(&mut self, edge: Observation) -> Result<()> {
        if self.remaining == 0 {
            return Err(Error::protocol("descending below a witness leaf"));
        }
        let x = self.feature();
        let g = Arc::clone(self.solver.instance().graph());
        if !tree_edges(&g, x).any(|e| e == edge) {
            return Err(Error::protocol(format!("witness node {x} has no edge {edge:?}")));
        }
        self.mask = self.solver.instance().filter(&self.mask, edge);
        self.remaining -= 1;
        Ok(())
    }
}

// ---------------------------------------------------------------------------
// Classical Littlestone dimension
// ---------------------------------------------------------------------------

/// Memoized classical Littlestone dimension with pointwise filtering.
#[derive(Debug)]
pub struct LdimSolver {
    n: usize,
    size: usize,
    pos: Vec<Mask>,
    neg: Vec<Mask>,
    cache: HashMap<Mask, i32>,
}

impl LdimSolver {
    pub fn new(hc: &HypothesisClass) -> Result<Self> {
        if hc.len() > DEFAULT_CLASS_CAP {
            return Err(Error::resource(
                "hypothesis class size",
                hc.len() as u128,
                DEFAULT_CLASS_CAP as u128,
            ));
        }
        let n = hc.n();
        let mut pos = vec![Mask::empty(hc.len()); n];
        let mut neg = vec![Mask::empty(hc.len()); n];
        for (i, h) in hc.members().iter().enumerate() {
            for x in 0..n {
                if h.get(x).is_pos() {
                    pos[x].insert(i);
                } else {
                    neg[x].insert(i);
                }
            }
        }
        Ok(LdimSolver {
            n,
            size: hc.len(),
            pos,
            neg,
            cache: HashMap::new(),
        })
    }

    pub fn full_mask(&self) -> Mask {
        Mask::full(self.size)
    }

    /// Number of features.
    pub fn filter_len(&self) -> usize {
        self.n
    }

    /// Members agreeing with label `y` at `x`.
    pub fn filter(&self, mask: &Mask, x: NodeId, y: Label) -> Mask {
        match y {
            Label::Pos => mask.and(&self.pos[x]),
            Label::Neg => mask.and(&self.neg[x]),
        }
    }

    pub fn dim(&mut self, mask: &Mask) -> i32 {
        if mask.is_empty() {
            return -1;
        }
        if let Some(&d) = self.cache.get(mask) {
            return d;
        }
        // A depth-d Littlestone tree needs 2^d distinct hypotheses.
        let upper = (usize::BITS - 1 - mask.count().leading_zeros()) as i32;
        let mut best = 0;
        for x in 0..self.n {
            if best >= upper {
                break;
            }
            let a = mask.and(&self.pos[x]);
            let b = mask.and(&self.neg[x]);
            if a.is_empty() || b.is_empty() {
                continue;
            }
            let da = self.dim(&a);
            if da < best {
                continue;
            }
            let v = 1 + da.min(self.dim(&b));
            best = best.max(v);
        }
        self.cache.insert(mask.clone(), best);
        best
    }
}

/// Classical `Ldim(H)`, or `None` for an empty class.
pub fn ldim(hc: &HypothesisClass) -> Result<Option<usize>> {
    let mut s = LdimSolver::new(hc)?;
    let full = s.full_mask();
    let d = s.dim(&full);
    Ok((d >= 0).then_some(d as usize))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::{bistar, complete, isolated, star};
    use crate::hypothesis::{all_functions_class, point_functions_class};

    fn full(hc: HypothesisClass) -> VersionSpace {
        VersionSpace::full(Arc::new(hc))
    }

    #[test]
    fn singleton_class_has_dimension_zero() {
        let hc = HypothesisClass::new(3, vec![Labeling::indicator(3, [1])]).unwrap();
        let f = full(hc);
        for g in [star(2).unwrap(), complete(3).unwrap(), isolated(3).unwrap()] {
            assert_eq!(sldim(&f, &g).unwrap(), Some(0));
            let w = sldim_witness(&f, &g).unwrap();
            assert_eq!(w.depth(), 0);
            assert!(w.children.is_empty());
        }
    }

    #[test]
    fn complete_graph_all_functions() {
        for n in 2..=5 {
            let f = full(all_functions_class(n).unwrap());
            assert_eq!(sldim(&f, &complete(n).unwrap()).unwrap(), Some(1));
        }
        let f = full(all_functions_class(2).unwrap());
        let w = sldim_witness(&f, &complete(2).unwrap()).unwrap();
        assert_eq!(w.depth(), 1);
    }

    #[test]
    fn isolated_graph_all_functions() {
        for n in 1..=5 {
            let hc = all_functions_class(n).unwrap();
            assert_eq!(ldim(&hc).unwrap(), Some(n));
            assert_eq!(sldim(&full(hc), &isolated(n).unwrap()).unwrap(), Some(n));
        }
        let f = full(all_functions_class(2).unwrap());
        let w = sldim_witness(&f, &isolated(2).unwrap()).unwrap();
        assert_eq!(w.depth(), 2);
        // Classical mistake tree: each node has exactly the two edges (x,+1), (x,-1).
        assert_eq!(w.children.len(), 2);
    }

    #[test]
    fn star_point_functions() {
        // Center-to-leaf star: a learner positive only at the center errs at
        // most once, so the dimension stays at 1.
        for delta in 2..=6 {
            let f = full(point_functions_class(delta).unwrap());
            assert_eq!(sldim(&f, &star(delta).unwrap()).unwrap(), Some(1));
        }
        // Bidirectional star: dimension delta - 1.
        for delta in 1..=8 {
            let f = full(point_functions_class(delta).unwrap());
            assert_eq!(sldim(&f, &bistar(delta).unwrap()).unwrap(), Some(delta - 1));
        }
    }

    #[test]
    fn shattering_checks() {
        let g = star(2).unwrap();
        let f = full(point_functions_class(2).unwrap());
        assert!(is_shattered(&SLTreeWitness::leaf(0), &f, &g));
        let empty = f.with_mask(Mask::empty(2));
        assert!(!is_shattered(&SLTreeWitness::leaf(0), &empty, &g));

        // Center root: (0,+1) via either h, (1,-1) via h_2, (2,-1) via h_1,
        // but (0,-1) has no consistent hypothesis on the directed star.
        let mut t = SLTreeWitness::leaf(0);
        for e in tree_edges(&g, 0) {
            t.children.insert(e, SLTreeWitness::leaf(0));
        }
        assert!(!is_shattered(&t, &f, &g));
        // On the bidirectional star the same shape is shattered.
        let bg = bistar(2).unwrap();
        let mut t = SLTreeWitness::leaf(0);
        for e in tree_edges(&bg, 0) {
            t.children.insert(e, SLTreeWitness::leaf(0));
        }
        assert!(is_shattered(&t, &f, &bg));
        // Missing an edge breaks full branching.
        t.children.remove(&Observation::new(1, Label::Neg));
        assert!(!is_shattered(&t, &f, &bg));
    }

    #[test]
    fn ldim_examples() {
        let single = HypothesisClass::new(2, vec![Labeling::indicator(2, [0])]).unwrap();
        assert_eq!(ldim(&single).unwrap(), Some(0));
        for n in 2..=5 {
            let points = HypothesisClass::new(n, (0..n).map(|i| Labeling::indicator(n, [i])).collect()).unwrap();
            assert_eq!(ldim(&points).unwrap(), Some(1));
        }
        assert_eq!(ldim(&HypothesisClass::new(2, vec![]).unwrap()).unwrap(), None);
    }

    #[test]
    fn witness_json_roundtrip() {
        let f = full(all_functions_class(2).unwrap());
        let w = sldim_witness(&f, &isolated(2).unwrap()).unwrap();
        let back = SLTreeWitness::from_json(&w.to_json()).unwrap();
        assert_eq!(back, w);
        assert!(w.to_json().contains("\"0,-1\""));
    }

    #[test]
    fn lazy_walk_matches_explicit_tree() {
        let g = bistar(3).unwrap();
        let hc = Arc::new(point_functions_class(3).unwrap());
        let mut solver = SldimSolver::new(Arc::clone(&hc), Arc::new(g.clone())).unwrap();
        let full_mask = solver.instance().full_mask();
        let tree = solver.witness(&full_mask).unwrap();
        // Follow the last edge at every node in both walkers.
        let mut lazy = LazyWitness::new(&mut solver, full_mask).unwrap();
        let mut exp = ExplicitWalk::new(&tree);
        assert_eq!(lazy.depth(), exp.depth());
        for _ in 0..tree.depth() {
            let x = exp.feature();
            assert_eq!(lazy.feature(), x);
            let e = tree_edges(&g, x).last().unwrap();
            exp.descend(e).unwrap();
            lazy.descend(e).unwrap();
        }
    }
}
