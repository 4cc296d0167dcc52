//! The learner interface and concrete learners.

use std::collections::HashMap;
use std::sync::{Arc, Mutex, MutexGuard};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::dimension::{LdimSolver, SldimSolver};
use crate::error::{Error, Result};
use crate::graph::{bistar, ManipulationGraph};
use crate::hypothesis::{filter_by_response, point_functions_class, HypothesisClass, Label, Labeling, Observation, VersionSpace};
use crate::mask::Mask;

/// An online learner in the strategic protocol: commit to a classifier, then
/// observe the reported node and its true label.
pub trait Learner: Send {
    fn name(&self) -> String;

    /// The classifier for the current round. Depends only on earlier
    /// observations.
    fn commit(&mut self) -> Result<Labeling>;

    /// `made_mistake` is whether the last committed classifier mislabeled
    /// `obs.v`.
    fn observe(&mut self, obs: Observation, made_mistake: bool) -> Result<()>;

    /// Back to the initial state. Randomized learners also rewind their seed.
    fn reset(&mut self);

    fn is_deterministic(&self) -> bool {
        true
    }

    /// A fingerprint of the internal state, if two learners with equal keys
    /// are guaranteed to behave identically from here on.
    fn state_key(&self) -> Option<Vec<u64>> {
        None
    }
}

fn lock<T>(m: &Mutex<T>) -> MutexGuard<'_, T> {
    m.lock().unwrap_or_else(|e| e.into_inner())
}

// ---------------------------------------------------------------------------
// SSOA
// ---------------------------------------------------------------------------

/// Dimension cache plus a commit cache keyed by version space, shared by
/// every SSOA instance over the same (class, graph).
#[derive(Debug)]
pub struct SsoaCore {
    solver: SldimSolver,
    commits: HashMap<Mask, Labeling>,
}

pub type SharedSsoaCore = Arc<Mutex<SsoaCore>>;

impl SsoaCore {
    pub fn new(class: Arc<HypothesisClass>, graph: Arc<ManipulationGraph>) -> Result<Self> {
        Ok(SsoaCore {
            solver: SldimSolver::new(class, graph)?,
            commits: HashMap::new(),
        })
    }

    pub fn shared(class: Arc<HypothesisClass>, graph: Arc<ManipulationGraph>) -> Result<SharedSsoaCore> {
        Ok(Arc::new(Mutex::new(Self::new(class, graph)?)))
    }

    pub fn solver(&mut self) -> &mut SldimSolver {
        &mut self.solver
    }

    pub fn dim(&mut self, mask: &Mask) -> i32 {
        self.solver.dim(mask)
    }

    pub fn filter(&self, mask: &Mask, obs: Observation) -> Mask {
        self.solver.instance().filter(mask, obs)
    }

    /// `h(x) = +1` iff the false-positive filter at `x` strictly lowers the
    /// dimension.
    pub fn commit_for(&mut self, mask: &Mask) -> Labeling {
        if let Some(h) = self.commits.get(mask) {
            return h.clone();
        }
        let d = self.solver.dim(mask);
        let n = self.solver.instance().graph().n();
        let mut h = Labeling::constant(n, Label::Neg);
        for x in 0..n {
            let sub = self.solver.instance().filter(mask, Observation::new(x, Label::Neg));
            if self.solver.dim(&sub) < d {
                h.set(x, Label::Pos);
            }
        }
        self.commits.insert(mask.clone(), h.clone());
        h
    }
}

/// Strategic Standard Optimal Algorithm. Updates its version space only on
/// mistakes.
#[derive(Clone, Debug)]
pub struct Ssoa {
    core: SharedSsoaCore,
    class: Arc<HypothesisClass>,
    start: Mask,
    mask: Mask,
}

impl Ssoa {
    pub fn new(class: Arc<HypothesisClass>, graph: Arc<ManipulationGraph>) -> Result<Self> {
        if class.is_empty() {
            return Err(Error::input("SSOA needs a nonempty hypothesis class"));
        }
        let core = SsoaCore::shared(Arc::clone(&class), graph)?;
        Ok(Self::with_core(core, class))
    }

    /// A fresh instance reusing an existing cache.
    pub fn with_core(core: SharedSsoaCore, class: Arc<HypothesisClass>) -> Self {
        let start = Mask::full(class.len());
        Ssoa {
            core,
            class,
            mask: start.clone(),
            start,
        }
    }

    pub fn core(&self) -> &SharedSsoaCore {
        &self.core
    }

    pub fn mask(&self) -> &Mask {
        &self.mask
    }

    pub fn version_space(&self) -> VersionSpace {
        VersionSpace::from_mask(Arc::clone(&self.class), self.mask.clone()).expect("mask sized to class")
    }

    /// Strategic dimension of the current version space.
    pub fn dim(&self) -> i32 {
        lock(&self.core).dim(&self.mask)
    }
}

impl Learner for Ssoa {
    fn name(&self) -> String {
        "ssoa".into()
    }

    fn commit(&mut self) -> Result<Labeling> {
        Ok(lock(&self.core).commit_for(&self.mask))
    }

    fn observe(&mut self, obs: Observation, made_mistake: bool) -> Result<()> {
        if !made_mistake {
            return Ok(());
        }
        let next = lock(&self.core).filter(&self.mask, obs);
        if next.is_empty() {
            return Err(Error::NotRealizable(format!(
                "no hypothesis is consistent with observation ({}, {})",
                obs.v, obs.y
            )));
        }
        self.mask = next;
        Ok(())
    }

    fn reset(&mut self) {
        self.mask = self.start.clone();
    }

    fn state_key(&self) -> Option<Vec<u64>> {
        Some(self.mask.words().to_vec())
    }
}

// ---------------------------------------------------------------------------
// Classical SOA
// ---------------------------------------------------------------------------

/// Classical Standard Optimal Algorithm with pointwise filtering. Predicts
/// the label whose filtered class has the larger Littlestone dimension
/// (ties go to `+1`) and filters on every observation.
#[derive(Clone, Debug)]
pub struct Soa {
    solver: Arc<Mutex<LdimSolver>>,
    start: Mask,
    mask: Mask,
}

impl Soa {
    pub fn new(class: &HypothesisClass) -> Result<Self> {
        if class.is_empty() {
            return Err(Error::input("SOA needs a nonempty hypothesis class"));
        }
        let solver = LdimSolver::new(class)?;
        let start = solver.full_mask();
        Ok(Soa {
            solver: Arc::new(Mutex::new(solver)),
            mask: start.clone(),
            start,
        })
    }
}

impl Learner for Soa {
    fn name(&self) -> String {
        "soa".into()
    }

    fn commit(&mut self) -> Result<Labeling> {
        let mut s = lock(&self.solver);
        let n = s.filter_len();
        let mut h = Labeling::constant(n, Label::Neg);
        for x in 0..n {
            let pos = s.filter(&self.mask, x, Label::Pos);
            let neg = s.filter(&self.mask, x, Label::Neg);
            if s.dim(&pos) >= s.dim(&neg) {
                h.set(x, Label::Pos);
            }
        }
        Ok(h)
    }

    fn observe(&mut self, obs: Observation, _made_mistake: bool) -> Result<()> {
        let next = lock(&self.solver).filter(&self.mask, obs.v, obs.y);
        if next.is_empty() {
            return Err(Error::NotRealizable(format!(
                "no hypothesis labels {} as {}",
                obs.v, obs.y
            )));
        }
        self.mask = next;
        Ok(())
    }

    fn reset(&mut self) {
        self.mask = self.start.clone();
    }

    fn state_key(&self) -> Option<Vec<u64>> {
        Some(self.mask.words().to_vec())
    }
}

// ---------------------------------------------------------------------------
// Baselines
// ---------------------------------------------------------------------------

/// Always commits the same constant classifier.
#[derive(Clone, Debug)]
pub struct Constant {
    n: usize,
    label: Label,
}

impl Constant {
    pub fn new(n: usize, label: Label) -> Self {
        Constant { n, label }
    }
}

impl Learner for Constant {
    fn name(&self) -> String {
        match self.label {
            Label::Pos => "const+".into(),
            Label::Neg => "const-".into(),
        }
    }

    fn commit(&mut self) -> Result<Labeling> {
        Ok(Labeling::constant(self.n, self.label))
    }

    fn observe(&mut self, _obs: Observation, _made_mistake: bool) -> Result<()> {
        Ok(())
    }

    fn reset(&mut self) {}

    fn state_key(&self) -> Option<Vec<u64>> {
        Some(Vec::new())
    }
}

/// Starts all positive and turns a node negative after a false positive
/// there. Never produces a false negative, so it errs at most `n` times on
/// realizable input.
#[derive(Clone, Debug)]
pub struct FlipToNegative {
    h: Labeling,
}

impl FlipToNegative {
    pub fn new(n: usize) -> Self {
        FlipToNegative {
            h: Labeling::constant(n, Label::Pos),
        }
    }
}

impl Learner for FlipToNegative {
    fn name(&self) -> String {
        "flip".into()
    }

    fn commit(&mut self) -> Result<Labeling> {
        Ok(self.h.clone())
    }

    fn observe(&mut self, obs: Observation, made_mistake: bool) -> Result<()> {
        if made_mistake && obs.y == Label::Neg {
            self.h.set(obs.v, Label::Neg);
        }
        Ok(())
    }

    fn reset(&mut self) {
        self.h = Labeling::constant(self.h.len(), Label::Pos);
    }

    fn state_key(&self) -> Option<Vec<u64>> {
        let mut words = vec![0u64; self.h.len().div_ceil(64)];
        for v in self.h.positives() {
            words[v / 64] |= 1 << (v % 64);
        }
        Some(words)
    }
}

/// All negative until the first mistake, all positive afterwards.
#[derive(Clone, Debug)]
pub struct NegThenPos {
    n: usize,
    switched: bool,
}

impl NegThenPos {
    pub fn new(n: usize) -> Self {
        NegThenPos { n, switched: false }
    }
}

impl Learner for NegThenPos {
    fn name(&self) -> String {
        "negthenpos".into()
    }

    fn commit(&mut self) -> Result<Labeling> {
        let label = if self.switched { Label::Pos } else { Label::Neg };
        Ok(Labeling::constant(self.n, label))
    }

    fn observe(&mut self, _obs: Observation, made_mistake: bool) -> Result<()> {
        self.switched |= made_mistake;
        Ok(())
    }

    fn reset(&mut self) {
        self.switched = false;
    }

    fn state_key(&self) -> Option<Vec<u64>> {
        Some(vec![self.switched as u64])
    }
}

// ---------------------------------------------------------------------------
// Randomized learner
// ---------------------------------------------------------------------------

/// Commits a hypothesis drawn uniformly from the version space each round.
///
/// The version space is filtered on every round using the committed
/// classifier to work out which original nodes could have produced the
/// report, so it always equals the set of hypotheses consistent with
/// everything observed.
#[derive(Clone, Debug)]
pub struct RandomizedLearner {
    graph: Arc<ManipulationGraph>,
    start: VersionSpace,
    vs: VersionSpace,
    seed: u64,
    rng: ChaCha8Rng,
    last: Option<Labeling>,
}

impl RandomizedLearner {
    pub fn new(class: Arc<HypothesisClass>, graph: Arc<ManipulationGraph>, seed: u64) -> Result<Self> {
        if class.is_empty() {
            return Err(Error::input("randomized learner needs a nonempty hypothesis class"));
        }
        if class.n() != graph.n() {
            return Err(Error::input("class and graph disagree on n"));
        }
        let start = VersionSpace::full(class);
        Ok(RandomizedLearner {
            graph,
            vs: start.clone(),
            start,
            seed,
            rng: ChaCha8Rng::seed_from_u64(seed),
            last: None,
        })
    }

    pub fn version_space(&self) -> &VersionSpace {
        &self.vs
    }

    pub fn graph(&self) -> &Arc<ManipulationGraph> {
        &self.graph
    }
}

/// The uniform version-space learner on the bidirectional star with `delta`
/// leaves and the leaf indicator class.
pub fn randomized_star_learner(delta: usize, seed: u64) -> Result<RandomizedLearner> {
    if delta == 0 {
        return Err(Error::input("star learner needs delta >= 1"));
    }
    RandomizedLearner::new(
        Arc::new(point_functions_class(delta)?),
        Arc::new(bistar(delta)?),
        seed,
    )
}

impl Learner for RandomizedLearner {
    fn name(&self) -> String {
        "randstar".into()
    }

    fn commit(&mut self) -> Result<Labeling> {
        let k = self.vs.len();
        if k == 0 {
            return Err(Error::NotRealizable("empty version space".into()));
        }
        let pick = self.rng.gen_range(0..k);
        let i = self.vs.indices().nth(pick).expect("pick < len");
        let h = self.vs.class().get(i).clone();
        self.last = Some(h.clone());
        Ok(h)
    }

    fn observe(&mut self, obs: Observation, _made_mistake: bool) -> Result<()> {
        let committed = self
            .last
            .take()
            .ok_or_else(|| Error::protocol("observe called before commit"))?;
        let next = filter_by_response(&self.vs, &self.graph, &committed, obs)?;
        if next.is_empty() {
            return Err(Error::NotRealizable(format!(
                "no hypothesis is consistent with observation ({}, {})",
                obs.v, obs.y
            )));
        }
        self.vs = next;
        Ok(())
    }

    fn reset(&mut self) {
        self.vs = self.start.clone();
        self.rng = ChaCha8Rng::seed_from_u64(self.seed);
        self.last = None;
    }

    fn is_deterministic(&self) -> bool {
        false
    }
}

// ---------------------------------------------------------------------------
// Construction by name
// ---------------------------------------------------------------------------

pub const LEARNER_NAMES: &[&str] = &["ssoa", "soa", "flip", "const+", "const-", "negthenpos", "randstar"];

/// Builds a learner from its command-line name.
pub fn learner_by_name(
    name: &str,
    class: &Arc<HypothesisClass>,
    graph: &Arc<ManipulationGraph>,
    seed: u64,
) -> Result<Box<dyn Learner>> {
    let n = graph.n();
    Ok(match name {
        "ssoa" => Box::new(Ssoa::new(Arc::clone(class), Arc::clone(graph))?),
        "soa" => Box::new(Soa::new(class)?),
        "flip" => Box::new(FlipToNegative::new(n)),
        "const+" => Box::new(Constant::new(n, Label::Pos)),
        "const-" => Box::new(Constant::new(n, Label::Neg)),
        "negthenpos" => Box::new(NegThenPos::new(n)),
        "randstar" => Box::new(RandomizedLearner::new(Arc::clone(class), Arc::clone(graph), seed)?),
        other => {
            return Err(Error::input(format!(
                "unknown learner {other:?}; expected one of {}",
                LEARNER_NAMES.join(", ")
            )))
        }
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::{complete, isolated, star};
    use crate::hypothesis::{all_functions_class, effective_labeling};

    #[test]
    fn ssoa_singleton_commits_effective_labeling() {
        let g = Arc::new(star(3).unwrap());
        let h = Labeling::indicator(4, [2]);
        let hc = Arc::new(HypothesisClass::new(4, vec![h.clone()]).unwrap());
        let mut l = Ssoa::new(hc, Arc::clone(&g)).unwrap();
        // Singleton: every FP filter either keeps h (dim 0) or empties it (-1).
        let c = l.commit().unwrap();
        let eff = effective_labeling(&h, &g);
        for x in 0..4 {
            // h survives (x,-1) iff some in-neighbor of x is effectively negative.
            let survives = g.in_closed(x).iter().any(|&u| !eff.get(u).is_pos());
            assert_eq!(c.get(x).is_pos(), !survives);
        }
    }

    #[test]
    fn ssoa_updates_only_on_mistakes() {
        let g = Arc::new(isolated(2).unwrap());
        let hc = Arc::new(all_functions_class(2).unwrap());
        let mut l = Ssoa::new(hc, g).unwrap();
        assert_eq!(l.dim(), 2);
        l.observe(Observation::new(0, Label::Pos), false).unwrap();
        assert_eq!(l.version_space().len(), 4);
        l.observe(Observation::new(0, Label::Pos), true).unwrap();
        assert_eq!(l.version_space().len(), 2);
        assert_eq!(l.dim(), 1);
        l.reset();
        assert_eq!(l.version_space().len(), 4);
    }

    #[test]
    fn ssoa_empty_version_space_is_not_realizable() {
        let g = Arc::new(isolated(1).unwrap());
        let hc = Arc::new(HypothesisClass::new(1, vec![Labeling::indicator(1, [0])]).unwrap());
        let mut l = Ssoa::new(hc, g).unwrap();
        let e = l.observe(Observation::new(0, Label::Neg), true).unwrap_err();
        assert!(matches!(e, Error::NotRealizable(_)));
    }

    #[test]
    fn soa_ties_go_positive() {
        let hc = all_functions_class(2).unwrap();
        let mut l = Soa::new(&hc).unwrap();
        assert_eq!(l.commit().unwrap(), Labeling::constant(2, Label::Pos));
        l.observe(Observation::new(0, Label::Neg), true).unwrap();
        let c = l.commit().unwrap();
        assert_eq!(c.get(0), Label::Neg);
        assert_eq!(c.get(1), Label::Pos);
    }

    #[test]
    fn baselines() {
        let mut f = FlipToNegative::new(3);
        f.observe(Observation::new(1, Label::Neg), true).unwrap();
        f.observe(Observation::new(2, Label::Pos), true).unwrap();
        assert_eq!(f.commit().unwrap(), Labeling::indicator(3, [0, 2]));
        let mut a = NegThenPos::new(2);
        assert_eq!(a.commit().unwrap(), Labeling::constant(2, Label::Neg));
        a.observe(Observation::new(0, Label::Pos), true).unwrap();
        assert_eq!(a.commit().unwrap(), Labeling::constant(2, Label::Pos));
        let _ = complete(2).unwrap();
    }

    #[test]
    fn randomized_learner_is_seeded() {
        let mut a = randomized_star_learner(5, 9).unwrap();
        let mut b = randomized_star_learner(5, 9).unwrap();
        for _ in 0..20 {
            let c = a.commit().unwrap();
            assert_eq!(c, b.commit().unwrap());
            // The agent at the center moves to the committed positive leaf.
            let obs = Observation::new(c.positives().next().unwrap(), Label::Pos);
            a.observe(obs, false).unwrap();
            b.observe(obs, false).unwrap();
        }
        assert!(!a.is_deterministic());
    }

    #[test]
    fn randomized_learner_eliminates_on_negative_leaf() {
        let mut l = randomized_star_learner(4, 1).unwrap();
        l.commit().unwrap();
        // Leaf 2 negative: only the indicator of leaf 2 is eliminated,
        // whatever was committed (the agent at leaf 2 either stays or is
        // positive there already).
        let c = l.last.clone().unwrap();
        let v = 2;
        let mistake = c.get(v).is_pos();
        l.observe(Observation::new(v, Label::Neg), mistake).unwrap();
        assert_eq!(l.version_space().indices().collect::<Vec<_>>(), vec![0, 2, 3]);
    }

    #[test]
    fn by_name() {
        let hc = Arc::new(all_functions_class(2).unwrap());
        let g = Arc::new(complete(2).unwrap());
        for name in LEARNER_NAMES {
            let l = learner_by_name(name, &hc, &g, 0).unwrap();
            assert_eq!(&l.name(), name);
        }
        assert!(learner_by_name("nope", &hc, &g, 0).is_err());
    }
}
