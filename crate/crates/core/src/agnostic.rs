//! Representative experts and the biased weighted majority vote.

use std::sync::Arc;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::graph::ManipulationGraph;
use crate::hypothesis::{best_response, HypothesisClass, Label, Labeling, Observation, TieBreak};
use crate::learners::{Learner, SharedSsoaCore, Ssoa, SsoaCore};

pub const DEFAULT_EXPERT_CAP: u128 = 1_000_000;
pub const DEFAULT_GAMMA: f64 = 0.367_879_441_171_442_33;

/// Weights are re-summed from scratch after this many penalty updates.
const RESUM_EVERY: usize = 64;
const REL_TOL: f64 = 1e-9;

/// Parameters of one expert. Rounds are 1-based.
#[derive(Clone, Debug, Default, PartialEq, Eq, Hash, Serialize)]
pub struct ExpertSpec {
    /// Rounds at which the expert assumes its simulated learner erred.
    pub mistake_rounds: Vec<usize>,
    /// In-neighbor index guessing the original feature at each mistake round.
    pub directions: Vec<usize>,
    /// Rounds at which the expert assumes the graph deviated.
    pub corruption_rounds: Vec<usize>,
    /// In-neighbor index in the union graph at each corruption round.
    pub corruption_directions: Vec<usize>,
    pub belief_graph: usize,
}

/// Shape of an expert family over a horizon.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ExpertFamily {
    pub horizon: usize,
    /// Maximum number of mistake rounds.
    pub depth: usize,
    /// Maximum in-degree of the belief graph.
    pub max_in_degree: usize,
    /// `(N, Δ^-_union)` for the budgeted variant.
    pub budget: Option<(usize, usize)>,
    pub graph_index: usize,
}

fn binomial(n: usize, k: usize) -> u128 {
    if k > n {
        return 0;
    }
    let k = k.min(n - k);
    let mut acc: u128 = 1;
    for i in 0..k {
        // acc * (n - i) / (i + 1) stays integral at every step.
        acc = match acc.checked_mul((n - i) as u128) {
            Some(v) => v / (i as u128 + 1),
            None => return u128::MAX,
        };
    }
    acc
}

/// `Σ_{m ≤ d} C(T, m)·(Δ^- + 1)^m`, saturating.
pub fn count_guess_sets(horizon: usize, depth: usize, max_in_degree: usize) -> u128 {
    let base = max_in_degree as u128 + 1;
    let mut total: u128 = 0;
    for m in 0..=depth.min(horizon) {
        let pow = (0..m).try_fold(1u128, |a, _| a.checked_mul(base)).unwrap_or(u128::MAX);
        total = total.saturating_add(binomial(horizon, m).saturating_mul(pow));
    }
    total
}

impl ExpertFamily {
    pub fn count(&self) -> u128 {
        let main = count_guess_sets(self.horizon, self.depth, self.max_in_degree);
        match self.budget {
            None => main,
            Some((n, union_in)) => main.saturating_mul(count_guess_sets(self.horizon, n, union_in)),
        }
    }

    /// Every spec of the family, in lexicographic order of (mistake part,
    /// corruption part).
    pub fn specs(&self) -> impl Iterator<Item = ExpertSpec> + '_ {
        let main = guess_sets(self.horizon, self.depth, self.max_in_degree);
        let corr = match self.budget {
            None => vec![(Vec::new(), Vec::new())],
            Some((n, union_in)) => guess_sets(self.horizon, n, union_in),
        };
        let graph = self.graph_index;
        main.into_iter().flat_map(move |(rounds, dirs)| {
            corr.clone().into_iter().map(move |(crounds, cdirs)| ExpertSpec {
                mistake_rounds: rounds.clone(),
                directions: dirs.clone(),
                corruption_rounds: crounds,
                corruption_directions: cdirs,
                belief_graph: graph,
            })
        })
    }
}

/// Counts the family and refuses if it exceeds `cap`.
pub fn count_expert_specs_checked(families: &[ExpertFamily], cap: u128) -> Result<u128> {
    let total = families.iter().fold(0u128, |a, f| a.saturating_add(f.count()));
    if total > cap {
        return Err(Error::resource("expert count", total, cap));
    }
    Ok(total)
}

/// All specs of all families after a cap check.
pub fn enumerate_expert_specs(families: &[ExpertFamily], cap: u128) -> Result<Vec<ExpertSpec>> {
    count_expert_specs_checked(families, cap)?;
    Ok(families.iter().flat_map(|f| f.specs()).collect())
}

/// `(rounds, directions)` pairs with `|rounds| ≤ depth`, rounds strictly
/// increasing in `1..=horizon`, directions in `0..=max_index`.
fn guess_sets(horizon: usize, depth: usize, max_index: usize) -> Vec<(Vec<usize>, Vec<usize>)> {
    let mut out = Vec::new();
    for m in 0..=depth.min(horizon) {
        let mut rounds: Vec<usize> = (1..=m).collect();
        loop {
            let mut dirs = vec![0; m];
            loop {
                out.push((rounds.clone(), dirs.clone()));
                // Odometer over directions.
                let mut i = m;
                while i > 0 && dirs[i - 1] == max_index {
                    dirs[i - 1] = 0;
                    i -= 1;
                }
                if i == 0 {
                    break;
                }
                dirs[i - 1] += 1;
            }
            // Next m-combination of 1..=horizon.
            let mut i = m;
            while i > 0 && rounds[i - 1] == horizon - (m - i) {
                i -= 1;
            }
            if i == 0 {
                break;
            }
            rounds[i - 1] += 1;
            for j in i..m {
                rounds[j] = rounds[j - 1] + 1;
            }
        }
    }
    out
}

// ---------------------------------------------------------------------------
// Experts
// ---------------------------------------------------------------------------

/// An SSOA instance that updates only at guessed mistake rounds, feeding
/// itself the mistake it would have made on the guessed original feature.
#[derive(Clone, Debug)]
pub struct Expert {
    spec: ExpertSpec,
    ssoa: Ssoa,
    belief: Arc<ManipulationGraph>,
    union: Option<Arc<ManipulationGraph>>,
    cursor: usize,
    corruption_cursor: usize,
    inert: bool,
    current: Option<Labeling>,
}

impl Expert {
    /// `core` must be built over `(class, belief)`. `union` is needed when
    /// the spec has corruption rounds.
    pub fn new(
        spec: ExpertSpec,
        core: SharedSsoaCore,
        class: Arc<HypothesisClass>,
        belief: Arc<ManipulationGraph>,
        union: Option<Arc<ManipulationGraph>>,
    ) -> Result<Self> {
        if spec.mistake_rounds.len() != spec.directions.len()
            || spec.corruption_rounds.len() != spec.corruption_directions.len()
        {
            return Err(Error::input("expert spec rounds and directions differ in length"));
        }
        if !spec.corruption_rounds.is_empty() && union.is_none() {
            return Err(Error::input("expert spec has corruption rounds but no union graph"));
        }
        Ok(Expert {
            spec,
            ssoa: Ssoa::with_core(core, class),
            belief,
            union,
            cursor: 0,
            corruption_cursor: 0,
            inert: false,
            current: None,
        })
    }

    pub fn spec(&self) -> &ExpertSpec {
        &self.spec
    }

    /// True once a guessed in-neighbor was missing or the simulated version
    /// space would have emptied. Inert experts keep their last classifier.
    pub fn is_inert(&self) -> bool {
        self.inert
    }

    pub fn ssoa(&self) -> &Ssoa {
        &self.ssoa
    }

    /// The classifier for the current round.
    pub fn commit(&mut self) -> Result<Labeling> {
        if self.current.is_none() {
            self.current = Some(self.ssoa.commit()?);
        }
        Ok(self.current.clone().expect("just set"))
    }

    /// Processes round `t` (1-based) given the reported node and label.
    pub fn step(&mut self, t: usize, obs: Observation) -> Result<()> {
        let h_hat = self.commit()?;
        if self.spec.mistake_rounds.get(self.cursor) != Some(&t) {
            return Ok(());
        }
        let r = self.spec.directions[self.cursor];
        self.cursor += 1;
        if self.inert {
            return Ok(());
        }
        while self
            .spec
            .corruption_rounds
            .get(self.corruption_cursor)
            .is_some_and(|&c| c < t)
        {
            self.corruption_cursor += 1;
        }
        let guess = if self.spec.corruption_rounds.get(self.corruption_cursor) == Some(&t) {
            let r2 = self.spec.corruption_directions[self.corruption_cursor];
            self.union.as_ref().expect("checked in new").in_neighbor_by_index(obs.v, r2)
        } else {
            self.belief.in_neighbor_by_index(obs.v, r)
        };
        let Some(x_hat) = guess else {
            self.inert = true;
            return Ok(());
        };
        let v_hat = best_response(&h_hat, &self.belief, x_hat, &mut TieBreak::CanonicalStay, t)?;
        let forced = Observation::new(v_hat, -h_hat.get(v_hat));
        match self.ssoa.observe(forced, true) {
            Ok(()) => {
                self.current = None;
                Ok(())
            }
            Err(Error::NotRealizable(_)) => {
                self.inert = true;
                Ok(())
            }
            Err(e) => Err(e),
        }
    }
}

/// Belief graphs and the union graph shared by a set of experts.
pub struct ExpertContext {
    pub class: Arc<HypothesisClass>,
    pub graphs: Vec<Arc<ManipulationGraph>>,
    pub union: Option<Arc<ManipulationGraph>>,
    cores: Vec<SharedSsoaCore>,
}

impl ExpertContext {
    pub fn new(
        class: Arc<HypothesisClass>,
        graphs: Vec<Arc<ManipulationGraph>>,
        union: Option<Arc<ManipulationGraph>>,
    ) -> Result<Self> {
        let cores = graphs
            .iter()
            .map(|g| SsoaCore::shared(Arc::clone(&class), Arc::clone(g)))
            .collect::<Result<_>>()?;
        Ok(ExpertContext {
            class,
            graphs,
            union,
            cores,
        })
    }

    pub fn core(&self, i: usize) -> &SharedSsoaCore {
        &self.cores[i]
    }

    pub fn build(&self, spec: ExpertSpec) -> Result<Expert> {
        let i = spec.belief_graph;
        if i >= self.graphs.len() {
            return Err(Error::input(format!("belief graph {i} out of range")));
        }
        Expert::new(
            spec,
            Arc::clone(&self.cores[i]),
            Arc::clone(&self.class),
            Arc::clone(&self.graphs[i]),
            self.union.clone(),
        )
    }
}

// ---------------------------------------------------------------------------
// Biased weighted majority vote
// ---------------------------------------------------------------------------

/// Aggregates experts by voting positive at `v` whenever the positive weight
/// reaches `W/(Δ^+ + 2)`. After a false positive, experts positive at `v_t`
/// are penalized; after a false negative, experts negative on all of
/// `N^+[v_t]` minus the committed positives are penalized. A penalty
/// multiplies the weight by `gamma`.
pub struct Bwmv {
    experts: Vec<Expert>,
    weights: Vec<f64>,
    total: f64,
    graph: Arc<ManipulationGraph>,
    delta_plus: usize,
    gamma: f64,
    round: usize,
    commits: Option<Vec<Labeling>>,
    last_commits: Vec<Labeling>,
    committed: Option<Labeling>,
    penalized: Vec<usize>,
    updates: usize,
    decay_violations: usize,
    max_drift: f64,
}

impl Bwmv {
    pub fn new(experts: Vec<Expert>, graph: Arc<ManipulationGraph>, gamma: f64) -> Result<Self> {
        if experts.is_empty() {
            return Err(Error::input("expert set is empty"));
        }
        if !(gamma > 0.0 && gamma < 1.0) {
            return Err(Error::input(format!("gamma must lie in (0, 1), got {gamma}")));
        }
        let k = experts.len();
        Ok(Bwmv {
            experts,
            weights: vec![1.0; k],
            total: k as f64,
            delta_plus: graph.max_out_degree(),
            graph,
            gamma,
            round: 0,
            commits: None,
            last_commits: Vec::new(),
            committed: None,
            penalized: Vec::new(),
            updates: 0,
            decay_violations: 0,
            max_drift: 0.0,
        })
    }

    pub fn experts(&self) -> &[Expert] {
        &self.experts
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn total_weight(&self) -> f64 {
        self.total
    }

    pub fn threshold(&self) -> f64 {
        self.total / (self.delta_plus as f64 + 2.0)
    }

    /// Expert classifiers of the most recently observed round.
    pub fn last_commits(&self) -> &[Labeling] {
        &self.last_commits
    }

    /// Experts penalized in the most recently observed round.
    pub fn last_penalized(&self) -> &[usize] {
        &self.penalized
    }

    /// Mistakes after which the total weight failed to shrink by the factor
    /// `1 - gamma/(Δ^+ + 2)` (relative tolerance 1e-9).
    pub fn decay_violations(&self) -> usize {
        self.decay_violations
    }

    /// Largest relative gap seen between the running total and a fresh sum.
    pub fn max_drift(&self) -> f64 {
        self.max_drift
    }

    pub fn inert_count(&self) -> usize {
        self.experts.iter().filter(|e| e.is_inert()).count()
    }

    fn expert_commits(&mut self) -> Result<&[Labeling]> {
        if self.commits.is_none() {
            let c = self.experts.iter_mut().map(Expert::commit).collect::<Result<Vec<_>>>()?;
            self.commits = Some(c);
        }
        Ok(self.commits.as_deref().expect("just set"))
    }

    fn penalize(&mut self, who: Vec<usize>) {
        for &e in &who {
            let w = self.weights[e];
            self.weights[e] = w * self.gamma;
            self.total -= w * (1.0 - self.gamma);
        }
        self.updates += 1;
        if self.updates % RESUM_EVERY == 0 {
            let exact: f64 = self.weights.iter().sum();
            self.max_drift = self.max_drift.max((self.total - exact).abs() / exact);
            self.total = exact;
        }
        self.penalized = who;
    }
}

impl Learner for Bwmv {
    fn name(&self) -> String {
        "bwmv".into()
    }

    fn commit(&mut self) -> Result<Labeling> {
        let n = self.graph.n();
        let threshold = self.threshold();
        let weights = self.weights.clone();
        let commits = self.expert_commits()?;
        let mut pos_weight = vec![0.0; n];
        for (h, w) in commits.iter().zip(&weights) {
            for v in h.positives() {
                pos_weight[v] += w;
            }
        }
        let h = Labeling::new(
            pos_weight
                .iter()
                .map(|&w| if w >= threshold { Label::Pos } else { Label::Neg })
                .collect(),
        );
        self.committed = Some(h.clone());
        Ok(h)
    }

    fn observe(&mut self, obs: Observation, made_mistake: bool) -> Result<()> {
        let committed = self
            .committed
            .take()
            .ok_or_else(|| Error::protocol("observe called before commit"))?;
        self.expert_commits()?;
        let commits = self.commits.take().expect("computed above");
        self.penalized.clear();
        if made_mistake {
            let before = self.total;
            let who: Vec<usize> = match obs.y {
                Label::Neg => (0..commits.len()).filter(|&e| commits[e].get(obs.v).is_pos()).collect(),
                Label::Pos => {
                    let unlabeled: Vec<_> = self
                        .graph
                        .out_closed(obs.v)
                        .iter()
                        .copied()
                        .filter(|&x| !committed.get(x).is_pos())
                        .collect();
                    (0..commits.len())
                        .filter(|&e| unlabeled.iter().all(|&x| !commits[e].get(x).is_pos()))
                        .collect()
                }
            };
            self.penalize(who);
            let limit = before * (1.0 - self.gamma / (self.delta_plus as f64 + 2.0));
            if self.total > limit * (1.0 + REL_TOL) {
                self.decay_violations += 1;
            }
        }
        self.round += 1;
        for e in &mut self.experts {
            e.step(self.round, obs)?;
        }
        self.last_commits = commits;
        Ok(())
    }

    fn reset(&mut self) {
        // Experts carry simulated state that cannot be rewound cheaply; a
        // reset rebuilds them from their specs.
        for e in &mut self.experts {
            let fresh = Expert::new(
                e.spec.clone(),
                Arc::clone(e.ssoa.core()),
                Arc::clone(e.ssoa.version_space().class()),
                Arc::clone(&e.belief),
                e.union.clone(),
            )
            .expect("spec was valid at construction");
            *e = fresh;
        }
        self.weights.iter_mut().for_each(|w| *w = 1.0);
        self.total = self.weights.len() as f64;
        self.round = 0;
        self.commits = None;
        self.last_commits.clear();
        self.committed = None;
        self.penalized.clear();
        self.updates = 0;
        self.decay_violations = 0;
        self.max_drift = 0.0;
    }
}
