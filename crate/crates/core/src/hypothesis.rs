//! Labels, classifiers, hypothesis classes and the strategic consistency
//! filters.
//!
//! A classifier `h` induces an *effective* classifier on a manipulation graph:
//! an agent at `x` is accepted iff some node in `N^+[x]` is labeled positive,
//! whichever of those nodes the agent ends up reporting.

use std::collections::HashMap;
use std::fmt;
use std::path::Path;
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::graph::{ManipulationGraph, NodeId};
use crate::mask::Mask;

/// Largest feature space `all_functions_class` will expand by default.
pub const DEFAULT_ALL_FUNCTIONS_CAP: usize = 20;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Label {
    Neg,
    Pos,
}

impl Label {
    pub fn from_sign(s: i64) -> Result<Self> {
        match s {
            1 => Ok(Label::Pos),
            -1 => Ok(Label::Neg),
            other => Err(Error::parse(format!("label must be +1 or -1, got {other}"))),
        }
    }

    pub fn sign(self) -> i8 {
        match self {
            Label::Pos => 1,
            Label::Neg => -1,
        }
    }

    pub fn flip(self) -> Self {
        match self {
            Label::Pos => Label::Neg,
            Label::Neg => Label::Pos,
        }
    }

    pub fn is_pos(self) -> bool {
        self == Label::Pos
    }
}

impl std::ops::Neg for Label {
    type Output = Label;
    fn neg(self) -> Label {
        self.flip()
    }
}

impl fmt::Display for Label {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.sign())
    }
}

impl Serialize for Label {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.serialize_i8(self.sign())
    }
}

impl<'de> Deserialize<'de> for Label {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let v = i64::deserialize(d)?;
        Label::from_sign(v).map_err(serde::de::Error::custom)
    }
}

/// A total labeling of the feature space; used both for hypotheses and for
/// the classifiers learners commit to.
#[derive(Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Labeling(Vec<Label>);

impl Labeling {
    pub fn new(labels: Vec<Label>) -> Self {
        Labeling(labels)
    }

    pub fn constant(n: usize, label: Label) -> Self {
        Labeling(vec![label; n])
    }

    /// Positive exactly on `positives`.
    pub fn indicator(n: usize, positives: impl IntoIterator<Item = NodeId>) -> Self {
        let mut l = vec![Label::Neg; n];
        for x in positives {
            l[x] = Label::Pos;
        }
        Labeling(l)
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    #[inline]
    pub fn get(&self, x: NodeId) -> Label {
        self.0[x]
    }

    pub fn set(&mut self, x: NodeId, label: Label) {
        self.0[x] = label;
    }

    pub fn labels(&self) -> &[Label] {
        &self.0
    }

    pub fn positives(&self) -> impl Iterator<Item = NodeId> + '_ {
        self.0.iter().enumerate().filter(|(_, l)| l.is_pos()).map(|(i, _)| i)
    }

    /// Stable content hash: first 16 hex digits of SHA-256 over the `+`/`-`
    /// string of the labeling.
    pub fn digest(&self) -> String {
        let text: String = self.0.iter().map(|l| if l.is_pos() { '+' } else { '-' }).collect();
        let hash = Sha256::digest(text.as_bytes());
        hash.iter().take(8).map(|b| format!("{b:02x}")).collect()
    }
}

impl fmt::Debug for Labeling {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s: String = self.0.iter().map(|l| if l.is_pos() { '+' } else { '-' }).collect();
        write!(f, "[{s}]")
    }
}

impl std::ops::Index<NodeId> for Labeling {
    type Output = Label;
    fn index(&self, x: NodeId) -> &Label {
        &self.0[x]
    }
}

/// A post-manipulation observation: the reported node and the true label.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Observation {
    pub v: NodeId,
    pub y: Label,
}

impl Observation {
    pub fn new(v: NodeId, y: Label) -> Self {
        Observation { v, y }
    }
}

/// An ordered list of distinct labelings over a shared feature space.
#[derive(Clone, PartialEq, Eq)]
pub struct HypothesisClass {
    n: usize,
    members: Vec<Labeling>,
}

impl fmt::Debug for HypothesisClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("HypothesisClass")
            .field("n", &self.n)
            .field("members", &self.members)
            .finish()
    }
}

impl HypothesisClass {
    pub fn new(n: usize, members: Vec<Labeling>) -> Result<Self> {
        let mut seen = HashMap::with_capacity(members.len());
        for (i, h) in members.iter().enumerate() {
            if h.len() != n {
                return Err(Error::input(format!(
                    "member {i} has length {} but n={n}",
                    h.len()
                )));
            }
            if let Some(j) = seen.insert(h, i) {
                return Err(Error::input(format!("members {j} and {i} are identical")));
            }
        }
        Ok(HypothesisClass { n, members })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn len(&self) -> usize {
        self.members.len()
    }

    pub fn is_empty(&self) -> bool {
        self.members.is_empty()
    }

    pub fn members(&self) -> &[Labeling] {
        &self.members
    }

    pub fn get(&self, i: usize) -> &Labeling {
        &self.members[i]
    }

    pub fn position(&self, h: &Labeling) -> Option<usize> {
        self.members.iter().position(|m| m == h)
    }

    /// Cartesian product over the disjoint union of the two feature spaces:
    /// every member of `self` concatenated with every member of `other`.
    pub fn product(&self, other: &HypothesisClass, cap: usize) -> Result<Self> {
        let count = self.len() as u128 * other.len() as u128;
        if count > cap as u128 {
            return Err(Error::resource("product class size", count, cap as u128));
        }
        let members = self
            .members
            .iter()
            .flat_map(|a| {
                other.members.iter().map(move |b| {
                    Labeling::new(a.labels().iter().chain(b.labels()).copied().collect())
                })
            })
            .collect();
        HypothesisClass::new(self.n + other.n, members)
    }

    pub fn to_json(&self) -> String {
        let file = ClassFile {
            n: self.n,
            members: self.members.clone(),
        };
        serde_json::to_string(&file).expect("class serialization cannot fail")
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let file: ClassFile = serde_json::from_str(s)?;
        HypothesisClass::new(file.n, file.members).map_err(|e| match e {
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
struct ClassFile {
    n: usize,
    members: Vec<Labeling>,
}

/// Point functions on a star with `n_leaves` leaves: member `i - 1` is
/// positive only on leaf `i` (nodes `0..=n_leaves`, center 0).
pub fn point_functions_class(n_leaves: usize) -> Result<HypothesisClass> {
    if n_leaves == 0 {
        return Err(Error::input("point functions need at least one leaf"));
    }
    let n = n_leaves + 1;
    HypothesisClass::new(n, (1..=n_leaves).map(|i| Labeling::indicator(n, [i])).collect())
}

pub fn all_functions_class(n: usize) -> Result<HypothesisClass> {
    all_functions_class_capped(n, DEFAULT_ALL_FUNCTIONS_CAP)
}

/// All `2^n` labelings, in lexicographic order with `-1 < +1` and node 0 the
/// most significant position.
pub fn all_functions_class_capped(n: usize, cap: usize) -> Result<HypothesisClass> {
    if n > cap || n >= 64 {
        return Err(Error::resource("all-functions feature space size", n as u128, cap as u128));
    }
    let members = (0u64..1 << n)
        .map(|k| {
            Labeling::new(
                (0..n)
                    .map(|i| if k >> (n - 1 - i) & 1 == 1 { Label::Pos } else { Label::Neg })
                    .collect(),
            )
        })
        .collect();
    HypothesisClass::new(n, members)
}

// ---------------------------------------------------------------------------
// Effective classifiers and best responses
// ---------------------------------------------------------------------------

/// `h̃_G(x)`: positive iff some node of `N^+[x]` is positive under `h`.
#[inline]
pub fn effective_label(h: &Labeling, g: &ManipulationGraph, x: NodeId) -> Label {
    if g.out_closed(x).iter().any(|&v| h.get(v).is_pos()) {
        Label::Pos
    } else {
        Label::Neg
    }
}

pub fn effective_labeling(h: &Labeling, g: &ManipulationGraph) -> Labeling {
    Labeling::new((0..g.n()).map(|x| effective_label(h, g, x)).collect())
}

/// `BR_{G,h}(x) = N^+[x] ∩ {h = +1}`, ascending.
pub fn best_response_set(h: &Labeling, g: &ManipulationGraph, x: NodeId) -> Vec<NodeId> {
    g.out_closed(x).iter().copied().filter(|&v| h.get(v).is_pos()).collect()
}

/// What a tie-break callback sees when the best-response set has a choice.
#[derive(Debug)]
pub struct BrQuery<'a> {
    pub round: usize,
    pub x: NodeId,
    pub candidates: &'a [NodeId],
    pub classifier: &'a Labeling,
}

pub type TieBreakFn = Box<dyn FnMut(&BrQuery<'_>) -> NodeId + Send>;

/// How an agent picks among several positively labeled reachable nodes.
pub enum TieBreak {
    /// Stay at `x` when `h(x) = +1`, else move to the lowest-id positive
    /// out-neighbor.
    CanonicalStay,
    /// Lowest-id element of the best-response set.
    LowestId,
    /// Adversary-supplied choice, validated against the best-response set.
    Callback(TieBreakFn),
}

impl fmt::Debug for TieBreak {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            TieBreak::CanonicalStay => write!(f, "CanonicalStay"),
            TieBreak::LowestId => write!(f, "LowestId"),
            TieBreak::Callback(_) => write!(f, "Callback"),
        }
    }
}

/// The node an agent at `x` reports against `h`. Agents with no reachable
/// positive node stay put.
pub fn best_response(
    h: &Labeling,
    g: &ManipulationGraph,
    x: NodeId,
    policy: &mut TieBreak,
    round: usize,
) -> Result<NodeId> {
    if x >= g.n() {
        return Err(Error::input(format!("node {x} out of range for n={}", g.n())));
    }
    let br = best_response_set(h, g, x);
    if br.is_empty() {
        return Ok(x);
    }
    match policy {
        TieBreak::CanonicalStay => Ok(if h.get(x).is_pos() { x } else { br[0] }),
        TieBreak::LowestId => Ok(br[0]),
        TieBreak::Callback(f) => {
            let v = f(&BrQuery {
                round,
                x,
                candidates: &br,
                classifier: h,
            });
            if br.contains(&v) {
                Ok(v)
            } else {
                Err(Error::protocol(format!(
                    "tie-break chose {v}, outside best-response set {br:?} of {x}"
                )))
            }
        }
    }
}

// ---------------------------------------------------------------------------
// Version spaces and consistency filters
// ---------------------------------------------------------------------------

/// A subset of a hypothesis class, as a bit-set over member indices.
#[derive(Clone, PartialEq, Eq)]
pub struct VersionSpace {
    class: Arc<HypothesisClass>,
    mask: Mask,
}

impl fmt::Debug for VersionSpace {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "VersionSpace{:?}", self.mask)
    }
}

impl VersionSpace {
    pub fn full(class: Arc<HypothesisClass>) -> Self {
        let mask = Mask::full(class.len());
        VersionSpace { class, mask }
    }

    pub fn from_mask(class: Arc<HypothesisClass>, mask: Mask) -> Result<Self> {
        if mask.iter().any(|i| i >= class.len()) {
            return Err(Error::input("mask refers to indices outside the class"));
        }
        let mut mask = mask;
        if mask.words().len() != class.len().div_ceil(64) {
            mask = Mask::from_indices(class.len(), mask.iter().collect::<Vec<_>>());
        }
        Ok(VersionSpace { class, mask })
    }

    pub fn from_indices(class: Arc<HypothesisClass>, idx: impl IntoIterator<Item = usize>) -> Result<Self> {
        let len = class.len();
        let idx: Vec<usize> = idx.into_iter().collect();
        if let Some(bad) = idx.iter().find(|&&i| i >= len) {
            return Err(Error::input(format!("index {bad} outside class of size {len}")));
        }
        Ok(VersionSpace {
            mask: Mask::from_indices(len, idx),
            class,
        })
    }

    pub fn class(&self) -> &Arc<HypothesisClass> {
        &self.class
    }

    pub fn mask(&self) -> &Mask {
        &self.mask
    }

    pub fn len(&self) -> usize {
        self.mask.count()
    }

    pub fn is_empty(&self) -> bool {
        self.mask.is_empty()
    }

    pub fn contains(&self, i: usize) -> bool {
        self.mask.contains(i)
    }

    pub fn indices(&self) -> impl Iterator<Item = usize> + '_ {
        self.mask.iter()
    }

    pub fn members(&self) -> impl Iterator<Item = (usize, &Labeling)> + '_ {
        self.mask.iter().map(|i| (i, self.class.get(i)))
    }

    pub fn is_subset(&self, other: &VersionSpace) -> bool {
        self.mask.is_subset(&other.mask)
    }

    pub fn with_mask(&self, mask: Mask) -> VersionSpace {
        VersionSpace {
            class: Arc::clone(&self.class),
            mask,
        }
    }

    /// Materializes the subset as a standalone class.
    pub fn to_class(&self) -> HypothesisClass {
        HypothesisClass {
            n: self.class.n,
            members: self.members().map(|(_, h)| h.clone()).collect(),
        }
    }
}

/// Whether `h` survives the strategic consistency rule for `obs`:
/// `(v, +1)` needs `h̃(v) = +1`; `(v, -1)` needs some `x ∈ N^-[v]` with
/// `h̃(x) = -1`.
pub fn is_consistent(h: &Labeling, g: &ManipulationGraph, obs: Observation) -> bool {
    match obs.y {
        Label::Pos => effective_label(h, g, obs.v).is_pos(),
        Label::Neg => g
            .in_closed(obs.v)
            .iter()
            .any(|&x| !effective_label(h, g, x).is_pos()),
    }
}

/// `F_G^{(v,y)}`.
pub fn filter_consistent(f: &VersionSpace, g: &ManipulationGraph, obs: Observation) -> Result<VersionSpace> {
    if obs.v >= g.n() {
        return Err(Error::input(format!("observed node {} out of range", obs.v)));
    }
    let mut mask = f.mask.clone();
    for (i, h) in f.members() {
        if !is_consistent(h, g, obs) {
            mask.remove(i);
        }
    }
    Ok(f.with_mask(mask))
}

/// Filter that uses the learner's own committed classifier to decide which
/// original nodes could have produced `obs`: a positively labeled `v` may
/// have been reached from any `x ∈ N^-[v]`, while a negatively labeled `v`
/// means the agent did not move. Keeps `h` iff some admissible origin `x`
/// has `h̃(x) = y`.
///
/// Returns an error if `obs` could not have been produced under `committed`.
pub fn filter_by_response(
    f: &VersionSpace,
    g: &ManipulationGraph,
    committed: &Labeling,
    obs: Observation,
) -> Result<VersionSpace> {
    let origins = response_origins(g, committed, obs.v)?;
    let mut mask = f.mask.clone();
    for (i, h) in f.members() {
        if !origins.iter().any(|&x| effective_label(h, g, x) == obs.y) {
            mask.remove(i);
        }
    }
    Ok(f.with_mask(mask))
}

/// Original nodes from which an agent best-responding to `committed` could
/// report `v`.
pub fn response_origins(g: &ManipulationGraph, committed: &Labeling, v: NodeId) -> Result<Vec<NodeId>> {
    if v >= g.n() {
        return Err(Error::input(format!("observed node {v} out of range")));
    }
    if committed.get(v).is_pos() {
        Ok(g.in_closed(v).to_vec())
    } else if g.out_closed(v).iter().all(|&u| !committed.get(u).is_pos()) {
        Ok(vec![v])
    } else {
        Err(Error::protocol(format!(
            "node {v} is negative under the committed classifier but has a positive out-neighbor; no agent reports it"
        )))
    }
}

/// One representative (lowest class index) per distinct effective classifier.
pub fn effective_reduction(hc: &HypothesisClass, g: &ManipulationGraph) -> HypothesisClass {
    let mut seen = std::collections::HashSet::new();
    let members = hc
        .members
        .iter()
        .filter(|h| seen.insert(effective_labeling(h, g)))
        .cloned()
        .collect();
    HypothesisClass { n: hc.n, members }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::{complete, isolated, star};

    fn class(n: usize, members: &[&[i64]]) -> HypothesisClass {
        HypothesisClass::new(
            n,
            members
                .iter()
                .map(|m| Labeling::new(m.iter().map(|&s| Label::from_sign(s).unwrap()).collect()))
                .collect(),
        )
        .unwrap()
    }

    #[test]
    fn effective_labels() {
        let s = star(3).unwrap();
        let h1 = Labeling::indicator(4, [1]);
        assert_eq!(effective_label(&h1, &s, 0), Label::Pos);
        assert_eq!(effective_label(&h1, &s, 2), Label::Neg);
        let iso = isolated(4).unwrap();
        for x in 0..4 {
            assert_eq!(effective_label(&h1, &iso, x), h1.get(x));
        }
        let neg = Labeling::constant(4, Label::Neg);
        assert!((0..4).all(|x| effective_label(&neg, &complete(4).unwrap(), x) == Label::Neg));
    }

    #[test]
    fn best_responses() {
        let s = star(2).unwrap();
        let neg = Labeling::constant(3, Label::Neg);
        assert_eq!(best_response(&neg, &s, 0, &mut TieBreak::LowestId, 0).unwrap(), 0);
        let h2 = Labeling::indicator(3, [2]);
        assert_eq!(best_response(&h2, &s, 0, &mut TieBreak::CanonicalStay, 0).unwrap(), 2);
        let h01 = Labeling::indicator(3, [0, 1]);
        assert_eq!(best_response(&h01, &s, 0, &mut TieBreak::LowestId, 0).unwrap(), 0);
        let mut cb = TieBreak::Callback(Box::new(|q: &BrQuery<'_>| *q.candidates.last().unwrap()));
        assert_eq!(best_response(&h01, &s, 0, &mut cb, 0).unwrap(), 1);
        let mut bad = TieBreak::Callback(Box::new(|_: &BrQuery<'_>| 2));
        assert!(matches!(best_response(&h01, &s, 0, &mut bad, 0), Err(Error::Protocol(_))));
    }

    #[test]
    fn consistency_filters_on_star() {
        let s = star(3).unwrap();
        let f = VersionSpace::full(Arc::new(point_functions_class(3).unwrap()));
        let at_center = filter_consistent(&f, &s, Observation::new(0, Label::Neg)).unwrap();
        assert!(at_center.is_empty());
        let at_leaf = filter_consistent(&f, &s, Observation::new(1, Label::Neg)).unwrap();
        assert_eq!(at_leaf.indices().collect::<Vec<_>>(), vec![1, 2]);

        let all_pos = Arc::new(class(3, &[&[1, 1, 1]]));
        let f = VersionSpace::full(all_pos);
        let g = star(2).unwrap();
        for v in 0..3 {
            assert_eq!(filter_consistent(&f, &g, Observation::new(v, Label::Pos)).unwrap(), f);
        }
    }

    #[test]
    fn named_classes() {
        let p = point_functions_class(2).unwrap();
        assert_eq!((p.len(), p.n()), (2, 3));
        assert_eq!(p.get(0), &Labeling::indicator(3, [1]));
        let a1 = all_functions_class(1).unwrap();
        assert_eq!(a1.members(), &[Labeling::new(vec![Label::Neg]), Labeling::new(vec![Label::Pos])]);
        assert_eq!(all_functions_class(2).unwrap().len(), 4);
        assert!(matches!(all_functions_class(21), Err(Error::Resource { .. })));
    }

    #[test]
    fn reduction() {
        let all3 = all_functions_class(3).unwrap();
        let red = effective_reduction(&all3, &complete(3).unwrap());
        assert_eq!(red.len(), 2);
        assert_eq!(red.get(0), &Labeling::constant(3, Label::Neg));
        assert_eq!(effective_reduction(&all3, &isolated(3).unwrap()), all3);
        let single = class(2, &[&[1, -1]]);
        assert_eq!(effective_reduction(&single, &complete(2).unwrap()), single);
    }

    #[test]
    fn class_json_rejects_duplicates() {
        assert!(matches!(
            HypothesisClass::from_json(r#"{"n":2,"members":[[1,-1],[1,-1]]}"#),
            Err(Error::Parse(_))
        ));
        assert!(HypothesisClass::from_json(r#"{"n":2,"members":[[1,0]]}"#).is_err());
        let c = class(2, &[&[1, -1], &[-1, -1]]);
        assert_eq!(HypothesisClass::from_json(&c.to_json()).unwrap(), c);
    }

    #[test]
    fn response_filter_uses_committed_classifier() {
        // Bidirectional star: from the center an agent can reach any leaf.
        let g = crate::graph::bistar(3).unwrap();
        let f = VersionSpace::full(Arc::new(point_functions_class(3).unwrap()));
        let committed = Labeling::indicator(4, [2]);
        // (leaf 2, +1) may come from the center: no information.
        let kept = filter_by_response(&f, &g, &committed, Observation::new(2, Label::Pos)).unwrap();
        assert_eq!(kept.len(), 3);
        // (leaf 1, +1) under a classifier negative at leaf 1: agent stayed.
        let kept = filter_by_response(&f, &g, &committed, Observation::new(1, Label::Pos)).unwrap();
        assert_eq!(kept.indices().collect::<Vec<_>>(), vec![0]);
        // (leaf 1, -1) eliminates h_1.
        let kept = filter_by_response(&f, &g, &committed, Observation::new(1, Label::Neg)).unwrap();
        assert_eq!(kept.indices().collect::<Vec<_>>(), vec![1, 2]);
        // Center is negative but can reach positive leaf 2: nobody reports it.
        assert!(filter_by_response(&f, &g, &committed, Observation::new(0, Label::Pos)).is_err());
    }

    #[test]
    fn digest_is_stable() {
        let h = Labeling::indicator(4, [1, 3]);
        assert_eq!(h.digest(), h.clone().digest());
        assert_ne!(h.digest(), Labeling::indicator(4, [1]).digest());
        assert_eq!(h.digest().len(), 16);
    }
}
