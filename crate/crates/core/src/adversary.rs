//! Agent sequences and the adversaries that produce them.

use std::path::Path;

use rand::seq::index::sample;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::dimension::WitnessWalk;
use crate::error::{Error, Result};
use crate::graph::{ManipulationGraph, NodeId};
use crate::hypothesis::{effective_label, is_consistent, HypothesisClass, Label, Observation, TieBreak};
use crate::learners::Learner;
use crate::protocol::{run_game, Transcript};

/// An agent with its original feature and true label.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Agent {
    pub x: NodeId,
    pub y: Label,
}

impl Agent {
    pub fn new(x: NodeId, y: Label) -> Self {
        Agent { x, y }
    }
}

/// A hypothesis whose effective classifier reproduces every label of a
/// sequence.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct RealizabilityCertificate {
    pub hypothesis: usize,
    pub labels: Vec<Label>,
}

impl RealizabilityCertificate {
    /// Rechecks `h̃*(x_t) = y_t` for every round.
    pub fn verify(&self, seq: &AgentSequence, hc: &HypothesisClass, g: &ManipulationGraph) -> bool {
        if self.hypothesis >= hc.len() || self.labels.len() != seq.len() {
            return false;
        }
        let h = hc.get(self.hypothesis);
        seq.agents
            .iter()
            .zip(&self.labels)
            .all(|(a, &l)| a.x < g.n() && l == a.y && effective_label(h, g, a.x) == a.y)
    }
}

/// A sequence of agents. `graphs`, when present, gives per round an index
/// into a pool of manipulation graphs (the agnostic-graph setting).
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct AgentSequence {
    pub agents: Vec<Agent>,
    pub graphs: Option<Vec<usize>>,
    /// Rounds (0-based) altered by a corruption.
    pub corrupted: Vec<usize>,
    pub certificate: Option<RealizabilityCertificate>,
}

#[derive(Serialize, Deserialize)]
struct SequenceFile {
    agents: Vec<(usize, Label)>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    graphs: Option<Vec<usize>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    certificate: Option<RealizabilityCertificate>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    corrupted: Vec<usize>,
}

impl AgentSequence {
    pub fn new(agents: Vec<Agent>) -> Self {
        AgentSequence {
            agents,
            ..Default::default()
        }
    }

    pub fn len(&self) -> usize {
        self.agents.len()
    }

    pub fn is_empty(&self) -> bool {
        self.agents.is_empty()
    }

    /// Pool index of the graph in force at round `t` (0-based).
    pub fn graph_index(&self, t: usize) -> usize {
        self.graphs.as_ref().map_or(0, |g| g[t])
    }

    /// Checks lengths and ranges against `n` nodes and a pool of `pool_len`
    /// graphs.
    pub fn validate(&self, n: usize, pool_len: usize) -> Result<()> {
        if let Some(a) = self.agents.iter().find(|a| a.x >= n) {
            return Err(Error::input(format!("agent feature {} out of range for n={n}", a.x)));
        }
        if let Some(g) = &self.graphs {
            if g.len() != self.agents.len() {
                return Err(Error::input(format!(
                    "{} per-round graphs for {} agents",
                    g.len(),
                    self.agents.len()
                )));
            }
            if let Some(i) = g.iter().find(|&&i| i >= pool_len) {
                return Err(Error::input(format!("graph index {i} out of range for {pool_len} graphs")));
            }
        }
        Ok(())
    }

    /// The prefix of the first `t` rounds.
    pub fn truncated(&self, t: usize) -> Self {
        let t = t.min(self.len());
        AgentSequence {
            agents: self.agents[..t].to_vec(),
            graphs: self.graphs.as_ref().map(|g| g[..t].to_vec()),
            corrupted: self.corrupted.iter().copied().filter(|&r| r < t).collect(),
            certificate: self.certificate.as_ref().map(|c| RealizabilityCertificate {
                hypothesis: c.hypothesis,
                labels: c.labels[..t].to_vec(),
            }),
        }
    }

    /// Rounds `start..end` as a sequence of their own.
    pub fn slice(&self, start: usize, end: usize) -> Self {
        AgentSequence {
            agents: self.agents[start..end].to_vec(),
            graphs: self.graphs.as_ref().map(|g| g[start..end].to_vec()),
            corrupted: self
                .corrupted
                .iter()
                .filter(|&&r| (start..end).contains(&r))
                .map(|r| r - start)
                .collect(),
            certificate: None,
        }
    }

    pub fn to_json(&self) -> String {
        let file = SequenceFile {
            agents: self.agents.iter().map(|a| (a.x, a.y)).collect(),
            graphs: self.graphs.clone(),
            certificate: self.certificate.clone(),
            corrupted: self.corrupted.clone(),
        };
        serde_json::to_string(&file).expect("sequence serializes")
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let f: SequenceFile = serde_json::from_str(s)?;
        let seq = AgentSequence {
            agents: f.agents.into_iter().map(|(x, y)| Agent { x, y }).collect(),
            graphs: f.graphs,
            corrupted: f.corrupted,
            certificate: f.certificate,
        };
        if let Some(g) = &seq.graphs {
            if g.len() != seq.agents.len() {
                return Err(Error::parse("\"graphs\" and \"agents\" differ in length"));
            }
        }
        Ok(seq)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path, self.to_json())?;
        Ok(())
    }
}

/// Labels each feature by `h̃*` and attaches the certificate.
pub fn realizable_sequence(
    h_star: usize,
    hc: &HypothesisClass,
    g: &ManipulationGraph,
    xs: &[NodeId],
) -> Result<AgentSequence> {
    if h_star >= hc.len() {
        return Err(Error::input(format!("hypothesis index {h_star} out of range")));
    }
    if let Some(&x) = xs.iter().find(|&&x| x >= g.n()) {
        return Err(Error::input(format!("feature {x} out of range for n={}", g.n())));
    }
    let h = hc.get(h_star);
    let agents: Vec<Agent> = xs.iter().map(|&x| Agent::new(x, effective_label(h, g, x))).collect();
    let labels = agents.iter().map(|a| a.y).collect();
    Ok(AgentSequence {
        agents,
        certificate: Some(RealizabilityCertificate {
            hypothesis: h_star,
            labels,
        }),
        ..Default::default()
    })
}

/// Flips the labels of exactly `k` distinct rounds. The certificate is
/// dropped unless `k = 0`.
pub fn corrupt_labels(s: &AgentSequence, k: usize, rng: &mut impl Rng) -> Result<AgentSequence> {
    if k > s.len() {
        return Err(Error::input(format!("cannot corrupt {k} of {} rounds", s.len())));
    }
    if k == 0 {
        return Ok(s.clone());
    }
    let mut out = s.clone();
    let mut rounds = sample(rng, s.len(), k).into_vec();
    rounds.sort_unstable();
    for &t in &rounds {
        out.agents[t].y = -out.agents[t].y;
    }
    out.corrupted = rounds;
    out.certificate = None;
    Ok(out)
}

/// Assigns a non-base graph of `pool` (indices `1..`) to exactly `k`
/// distinct rounds and the base graph `pool[0]` to the rest. Every pool
/// graph must be a subgraph of `union`.
pub fn corrupt_graphs(
    s: &AgentSequence,
    pool: &[ManipulationGraph],
    union: &ManipulationGraph,
    k: usize,
    rng: &mut impl Rng,
) -> Result<AgentSequence> {
    if pool.is_empty() {
        return Err(Error::input("graph pool is empty"));
    }
    if k > s.len() {
        return Err(Error::input(format!("cannot corrupt {k} of {} rounds", s.len())));
    }
    if k > 0 && pool.len() < 2 {
        return Err(Error::input("corrupting rounds needs at least one variant graph"));
    }
    for (i, g) in pool.iter().enumerate() {
        if !g.is_subgraph_of(union) {
            return Err(Error::input(format!("pool graph {i} is not a subgraph of the union graph")));
        }
    }
    let mut out = s.clone();
    let mut graphs = vec![0; s.len()];
    let mut rounds = sample(rng, s.len(), k).into_vec();
    rounds.sort_unstable();
    for &t in &rounds {
        graphs[t] = rng.gen_range(1..pool.len());
    }
    out.graphs = Some(graphs);
    out.corrupted = rounds;
    Ok(out)
}

/// Output of [`lower_bound_adversary`].
#[derive(Debug)]
pub struct AdversaryRun {
    pub sequence: AgentSequence,
    pub certificate: RealizabilityCertificate,
    /// The verified replay, in which the learner errs every round.
    pub transcript: Transcript,
}

/// Forces a mistake in every round of a shattered tree against a
/// deterministic learner.
///
/// At each round the learner's classifier is inspected on `N^+[x']` for the
/// current tree node `x'`: if it is all negative the false-negative edge
/// `(x', +1)` is taken, otherwise the false-positive edge at the lowest
/// positive node. Once the path is fixed, the lowest-index hypothesis
/// consistent with it certifies realizability and each original feature is
/// recovered (`x_t = v_t` on false negatives, the lowest effectively
/// negative in-neighbor of `v_t` on false positives). The learner is then
/// reset and the sequence replayed, with ties broken towards the walked
/// nodes, to confirm the same play.
pub fn lower_bound_adversary(
    walk: &mut dyn WitnessWalk,
    learner: &mut dyn Learner,
    hc: &HypothesisClass,
    g: &ManipulationGraph,
) -> Result<AdversaryRun> {
    if hc.n() != g.n() {
        return Err(Error::input("class and graph disagree on n"));
    }
    learner.reset();
    let depth = walk.depth();
    let mut path = Vec::with_capacity(depth);
    let mut digests = Vec::with_capacity(depth);
    for _ in 0..depth {
        let h = learner.commit()?;
        let x = walk.feature();
        if x >= g.n() {
            return Err(Error::input(format!("witness feature {x} out of range")));
        }
        let edge = match g.out_closed(x).iter().find(|&&v| h.get(v).is_pos()) {
            None => Observation::new(x, Label::Pos),
            Some(&v) => Observation::new(v, Label::Neg),
        };
        learner.observe(edge, true)?;
        walk.descend(edge)?;
        path.push(edge);
        digests.push(h.digest());
    }

    let hypothesis = (0..hc.len())
        .find(|&i| path.iter().all(|&o| is_consistent(hc.get(i), g, o)))
        .ok_or_else(|| Error::protocol("no hypothesis is consistent with the walked path; the witness is not shattered"))?;
    let h_star = hc.get(hypothesis);

    let mut agents = Vec::with_capacity(depth);
    for o in &path {
        let x = match o.y {
            Label::Pos => o.v,
            Label::Neg => *g
                .in_closed(o.v)
                .iter()
                .find(|&&x| effective_label(h_star, g, x) == Label::Neg)
                .expect("consistency of (v,-1) guarantees an effectively negative in-neighbor"),
        };
        agents.push(Agent::new(x, o.y));
    }
    let certificate = RealizabilityCertificate {
        hypothesis,
        labels: agents.iter().map(|a| a.y).collect(),
    };
    let sequence = AgentSequence {
        agents,
        certificate: Some(certificate.clone()),
        ..Default::default()
    };

    learner.reset();
    let reported: Vec<NodeId> = path.iter().map(|o| o.v).collect();
    let mut policy = TieBreak::Callback(Box::new(move |q| reported[q.round - 1]));
    let transcript = run_game(learner, &sequence, std::slice::from_ref(g), &mut policy)?;
    for (t, r) in transcript.rounds.iter().enumerate() {
        if !r.mistake || r.v != path[t].v || r.digest != digests[t] {
            return Err(Error::protocol(format!(
                "replay diverged at round {}; the learner is not deterministic under reset",
                t + 1
            )));
        }
    }
    Ok(AdversaryRun {
        sequence,
        certificate,
        transcript,
    })
}

/// On the bidirectional star with leaf indicators, reveals every leaf other
/// than `target` as negative, then the target leaf as positive. Realizable
/// by the indicator of `target` (a leaf id in `1..=delta`).
pub fn eliminating_sequence(delta: usize, target: NodeId) -> Result<AgentSequence> {
    if !(1..=delta).contains(&target) {
        return Err(Error::input(format!("target leaf {target} not in 1..={delta}")));
    }
    let mut agents: Vec<Agent> = (1..=delta)
        .filter(|&i| i != target)
        .map(|i| Agent::new(i, Label::Neg))
        .collect();
    agents.push(Agent::new(target, Label::Pos));
    let labels = agents.iter().map(|a| a.y).collect();
    Ok(AgentSequence {
        agents,
        certificate: Some(RealizabilityCertificate {
            hypothesis: target - 1,
            labels,
        }),
        ..Default::default()
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dimension::{ExplicitWalk, SldimSolver};
    use crate::graph::{bistar, complete, isolated, star};
    use crate::hypothesis::{all_functions_class, point_functions_class};
    use crate::learners::{Constant, Ssoa};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use std::sync::Arc;

    #[test]
    fn realizable_labels() {
        let hc = point_functions_class(2).unwrap();
        let s = star(2).unwrap();
        let seq = realizable_sequence(0, &hc, &s, &[0, 2]).unwrap();
        assert_eq!(seq.agents, vec![Agent::new(0, Label::Pos), Agent::new(2, Label::Neg)]);
        assert!(seq.certificate.as_ref().unwrap().verify(&seq, &hc, &s));

        let all = all_functions_class(3).unwrap();
        let k = complete(3).unwrap();
        let seq = realizable_sequence(5, &all, &k, &[0, 1, 2]).unwrap();
        assert!(seq.agents.iter().all(|a| a.y == Label::Pos));
        let iso = isolated(3).unwrap();
        let seq = realizable_sequence(5, &all, &iso, &[0, 1, 2]).unwrap();
        for a in &seq.agents {
            assert_eq!(a.y, all.get(5).get(a.x));
        }
    }

    #[test]
    fn label_corruption() {
        let hc = all_functions_class(2).unwrap();
        let g = isolated(2).unwrap();
        let seq = realizable_sequence(1, &hc, &g, &[0, 1, 0, 1]).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        assert_eq!(corrupt_labels(&seq, 0, &mut rng).unwrap(), seq);
        let once = corrupt_labels(&seq, 4, &mut rng).unwrap();
        assert!(once.agents.iter().zip(&seq.agents).all(|(a, b)| a.y == -b.y));
        let twice = corrupt_labels(&once, 4, &mut rng).unwrap();
        assert_eq!(twice.agents, seq.agents);
        let two = corrupt_labels(&seq, 2, &mut rng).unwrap();
        assert_eq!(two.corrupted.len(), 2);
        assert!(corrupt_labels(&seq, 5, &mut rng).is_err());
    }

    #[test]
    fn graph_corruption_requires_subgraphs() {
        let base = star(2).unwrap();
        let variant = bistar(2).unwrap();
        let seq = AgentSequence::new(vec![Agent::new(0, Label::Pos); 5]);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let pool = [base.clone(), variant.clone()];
        let out = corrupt_graphs(&seq, &pool, &variant, 2, &mut rng).unwrap();
        let gs = out.graphs.unwrap();
        assert_eq!(gs.iter().filter(|&&i| i != 0).count(), 2);
        assert!(corrupt_graphs(&seq, &pool, &base, 2, &mut rng).is_err());
    }

    #[test]
    fn sequence_json_roundtrip() {
        let hc = point_functions_class(2).unwrap();
        let seq = realizable_sequence(1, &hc, &star(2).unwrap(), &[0, 1, 2]).unwrap();
        let back = AgentSequence::from_json(&seq.to_json()).unwrap();
        assert_eq!(back, seq);
        let plain = AgentSequence::from_json(r#"{"agents": [[0, 1], [2, -1]], "graphs": [0, 1]}"#).unwrap();
        assert_eq!(plain.agents[1], Agent::new(2, Label::Neg));
        assert!(AgentSequence::from_json(r#"{"agents": [[0, 1]], "graphs": [0, 1]}"#).is_err());
        assert!(AgentSequence::from_json(r#"{"agents": [[0, 2]]}"#).is_err());
    }

    fn bistar_run(learner: &mut dyn Learner) -> AdversaryRun {
        let g = Arc::new(bistar(3).unwrap());
        let hc = Arc::new(point_functions_class(3).unwrap());
        let mut solver = SldimSolver::new(Arc::clone(&hc), Arc::clone(&g)).unwrap();
        let full = solver.instance().full_mask();
        let tree = solver.witness(&full).unwrap();
        let mut walk = ExplicitWalk::new(&tree);
        lower_bound_adversary(&mut walk, learner, &hc, &g).unwrap()
    }

    #[test]
    fn adversary_against_constants() {
        let run = bistar_run(&mut Constant::new(4, Label::Pos));
        assert_eq!(run.transcript.rounds[0].y, Label::Neg);
        let run = bistar_run(&mut Constant::new(4, Label::Neg));
        assert_eq!(run.transcript.rounds[0].y, Label::Pos);
        assert_eq!(run.transcript.mistakes(), 2);
    }

    #[test]
    fn adversary_against_ssoa() {
        let g = Arc::new(bistar(3).unwrap());
        let hc = Arc::new(point_functions_class(3).unwrap());
        let mut l = Ssoa::new(hc.clone(), g.clone()).unwrap();
        let run = bistar_run(&mut l);
        assert_eq!(run.transcript.mistakes(), 2);
        assert!(run.certificate.verify(&run.sequence, &hc, &g));
        for (a, r) in run.sequence.agents.iter().zip(&run.transcript.rounds) {
            assert!(g.out_closed(a.x).contains(&r.v));
        }
    }

    #[test]
    fn eliminating_sequence_is_realizable() {
        let seq = eliminating_sequence(5, 3).unwrap();
        let hc = point_functions_class(5).unwrap();
        let g = bistar(5).unwrap();
        assert_eq!(seq.len(), 5);
        assert!(seq.certificate.as_ref().unwrap().verify(&seq, &hc, &g));
    }
}
