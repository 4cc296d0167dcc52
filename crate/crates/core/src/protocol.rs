//! The repeated game, benchmarks, and the end-to-end runners.

use std::collections::HashMap;
use std::fmt::Write as _;
use std::path::Path;
use std::sync::Arc;

use serde::Serialize;
use serde_json::json;

use crate::adversary::{Agent, AgentSequence};
use crate::agnostic::{count_expert_specs_checked, Bwmv, ExpertContext, ExpertFamily, DEFAULT_EXPERT_CAP, DEFAULT_GAMMA};
use crate::dimension::SldimSolver;
use crate::error::{Error, Result};
use crate::graph::{GraphClass, ManipulationGraph};
use crate::hypothesis::{
    best_response, best_response_set, effective_label, effective_labeling, HypothesisClass, Label, Labeling,
    Observation, TieBreak,
};
use crate::learners::Learner;
use crate::mask::Mask;

// ---------------------------------------------------------------------------
// Transcripts
// ---------------------------------------------------------------------------

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct RoundRecord {
    /// 1-based round number.
    pub t: usize,
    pub x: usize,
    pub v: usize,
    pub y: Label,
    pub pred: Label,
    pub mistake: bool,
    pub graph_idx: usize,
    pub digest: String,
}

/// A measured quantity next to the bound it should respect. `bound` is
/// `None` when the bound's hypotheses do not hold for the run.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct BoundCheck {
    pub name: String,
    pub formula: String,
    pub measured: f64,
    pub bound: Option<f64>,
}

impl BoundCheck {
    pub fn new(name: &str, formula: impl Into<String>, measured: f64, bound: Option<f64>) -> Self {
        BoundCheck {
            name: name.into(),
            formula: formula.into(),
            measured,
            bound,
        }
    }

    /// `Some(measured <= bound)`, or `None` when not applicable.
    pub fn pass(&self) -> Option<bool> {
        self.bound.map(|b| self.measured <= b)
    }

    pub fn status(&self) -> &'static str {
        match self.pass() {
            Some(true) => "PASS",
            Some(false) => "FAIL",
            None => "N/A",
        }
    }

    pub fn line(&self) -> String {
        match self.bound {
            Some(b) => format!(
                "{}: measured {} <= {} = {:.4}  {}",
                self.name,
                self.measured,
                self.formula,
                b,
                self.status()
            ),
            None => format!("{}: measured {}  ({})  N/A", self.name, self.measured, self.formula),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Epoch {
    pub k: u32,
    /// First and last round (1-based, inclusive).
    pub start: usize,
    pub end: usize,
    pub budget: u64,
    pub threshold: f64,
    pub mistakes: usize,
    pub experts: u128,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize)]
pub struct ExpertStats {
    pub count: u128,
    pub ln_count: f64,
    /// Fewest mistakes of any expert, each judged by its own classifier
    /// against the agent's true feature under the round's graph.
    pub opt_e: usize,
    pub depth: usize,
    pub inert: usize,
    pub decay_violations: usize,
    /// Penalized experts that had not in fact erred on the round.
    pub unsound_penalties: usize,
    pub max_weight_drift: f64,
    /// Mistakes of every expert, in enumeration order.
    #[serde(skip)]
    pub expert_mistakes: Vec<usize>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize)]
pub struct Transcript {
    pub learner: String,
    pub rounds: Vec<RoundRecord>,
    pub opt_h: Option<usize>,
    pub opt_g: Option<usize>,
    pub bounds: Vec<BoundCheck>,
    pub epochs: Vec<Epoch>,
    pub experts: Option<ExpertStats>,
}

impl Transcript {
    pub fn mistakes(&self) -> usize {
        self.rounds.iter().filter(|r| r.mistake).count()
    }

    /// `mistakes - opt_h`.
    pub fn regret(&self) -> Option<i64> {
        self.opt_h.map(|o| self.mistakes() as i64 - o as i64)
    }

    pub fn all_bounds_pass(&self) -> bool {
        self.bounds.iter().all(|b| b.pass() != Some(false))
    }

    pub fn bound(&self, name: &str) -> Option<&BoundCheck> {
        self.bounds.iter().find(|b| b.name == name)
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from("t,x,v,y,pred,mistake,graph_idx,classifier_digest\n");
        for r in &self.rounds {
            let _ = writeln!(
                s,
                "{},{},{},{},{},{},{},{}",
                r.t,
                r.x,
                r.v,
                r.y,
                r.pred,
                r.mistake as u8,
                r.graph_idx,
                r.digest
            );
        }
        s
    }

    pub fn summary(&self) -> serde_json::Value {
        json!({
            "learner": self.learner,
            "rounds": self.rounds.len(),
            "mistakes": self.mistakes(),
            "opt_h": self.opt_h,
            "opt_g": self.opt_g,
            "regret": self.regret(),
            "bounds": self.bounds.iter().map(|b| json!({
                "name": b.name,
                "formula": b.formula,
                "measured": b.measured,
                "bound": b.bound,
                "status": b.status(),
            })).collect::<Vec<_>>(),
            "epochs": self.epochs,
            "experts": self.experts,
        })
    }

    /// Writes `<prefix>.csv` and `<prefix>.json`.
    pub fn write(&self, prefix: impl AsRef<Path>) -> Result<()> {
        let prefix = prefix.as_ref();
        let with_ext = |ext: &str| {
            let mut p = prefix.as_os_str().to_owned();
            p.push(ext);
            std::path::PathBuf::from(p)
        };
        std::fs::write(with_ext(".csv"), self.to_csv())?;
        let json = serde_json::to_string_pretty(&self.summary()).expect("summary serializes");
        std::fs::write(with_ext(".json"), json + "\n")?;
        Ok(())
    }
}

// ---------------------------------------------------------------------------
// The game
// ---------------------------------------------------------------------------

/// One round: commit, best response under `g`, prediction at the reported
/// node, then feedback.
pub fn play_round<L: Learner + ?Sized>(
    learner: &mut L,
    agent: Agent,
    g: &ManipulationGraph,
    graph_idx: usize,
    policy: &mut TieBreak,
    t: usize,
) -> Result<RoundRecord> {
    let h = learner.commit()?;
    if h.len() != g.n() {
        return Err(Error::input(format!(
            "learner committed a labeling of {} nodes on a graph of {}",
            h.len(),
            g.n()
        )));
    }
    let v = best_response(&h, g, agent.x, policy, t)?;
    let pred = h.get(v);
    let mistake = pred != agent.y;
    learner.observe(Observation::new(v, agent.y), mistake)?;
    Ok(RoundRecord {
        t,
        x: agent.x,
        v,
        y: agent.y,
        pred,
        mistake,
        graph_idx,
        digest: h.digest(),
    })
}

/// Plays the whole sequence. Round `t` uses `pool[s.graph_index(t)]`
/// (`pool[0]` when the sequence carries no per-round graphs).
pub fn run_game<L: Learner + ?Sized>(
    learner: &mut L,
    s: &AgentSequence,
    pool: &[ManipulationGraph],
    policy: &mut TieBreak,
) -> Result<Transcript> {
    run_game_with(learner, s, pool, policy, |_, _, _| Ok(()))
}

/// [`run_game`] with a hook called after each round's feedback.
pub fn run_game_with<L, F>(
    learner: &mut L,
    s: &AgentSequence,
    pool: &[ManipulationGraph],
    policy: &mut TieBreak,
    mut hook: F,
) -> Result<Transcript>
where
    L: Learner + ?Sized,
    F: FnMut(&L, &RoundRecord, &ManipulationGraph) -> Result<()>,
{
    let n = pool.first().ok_or_else(|| Error::input("no manipulation graph given"))?.n();
    if pool.iter().any(|g| g.n() != n) {
        return Err(Error::input("graphs disagree on n"));
    }
    s.validate(n, pool.len())?;
    let mut rounds = Vec::with_capacity(s.len());
    for (i, &agent) in s.agents.iter().enumerate() {
        let gi = s.graph_index(i);
        let rec = play_round(learner, agent, &pool[gi], gi, policy, i + 1)?;
        hook(learner, &rec, &pool[gi])?;
        rounds.push(rec);
    }
    Ok(Transcript {
        learner: learner.name(),
        rounds,
        ..Default::default()
    })
}

/// Per-round mistakes of a fixed hypothesis, judged by its effective label.
pub fn hypothesis_mistakes(s: &AgentSequence, h: &Labeling, g: &ManipulationGraph) -> Vec<bool> {
    s.agents.iter().map(|a| effective_label(h, g, a.x) != a.y).collect()
}

/// `min_h Σ_t 1{h̃(x_t) ≠ y_t}` with the lowest-index minimizer, or `None`
/// for an empty class.
pub fn compute_opt_h(s: &AgentSequence, hc: &HypothesisClass, g: &ManipulationGraph) -> Option<(usize, usize)> {
    hc.members()
        .iter()
        .enumerate()
        .map(|(i, h)| (hypothesis_mistakes(s, h, g).iter().filter(|&&m| m).count(), i))
        .min()
}

/// `min_{G ∈ gc} Σ_t 1{N^+_G[x_t] ≠ N^+_{G_t}[x_t]}` with the lowest-index
/// minimizer, where `G_t = pool[s.graph_index(t)]`.
pub fn compute_opt_g(s: &AgentSequence, pool: &[ManipulationGraph], gc: &GraphClass) -> (usize, usize) {
    gc.graphs()
        .iter()
        .enumerate()
        .map(|(i, g)| {
            let errs = s
                .agents
                .iter()
                .enumerate()
                .filter(|&(t, a)| !g.same_out_neighborhood(&pool[s.graph_index(t)], a.x))
                .count();
            (errs, i)
        })
        .min()
        .expect("graph classes are nonempty")
}

// ---------------------------------------------------------------------------
// Bounds
// ---------------------------------------------------------------------------

/// `((Δ+2)/γ)·ln|E| - (ln γ·(Δ+2)/γ)·OPT`, the weighted-majority mistake
/// bound; equals `e·(Δ+2)·(ln|E| + OPT)` at `γ = 1/e`.
pub fn bwmv_mistake_bound(delta_plus: usize, gamma: f64, ln_experts: f64, opt: f64) -> f64 {
    let k = (delta_plus as f64 + 2.0) / gamma;
    k * ln_experts - gamma.ln() * k * opt
}

fn bound_formula(gamma: f64, inner: &str) -> String {
    if (gamma - DEFAULT_GAMMA).abs() < 1e-9 {
        format!("e(D+2)({inner})")
    } else {
        format!("((D+2)/g)ln|E| - (ln g (D+2)/g)({})", inner.replace(" + ln|E|", ""))
    }
}

/// `C = max(1, ceil(8·Δ^+·(ln T + ln(Δ^- + 1))))`.
pub fn doubling_constant(horizon: usize, delta_plus: usize, delta_minus: usize) -> f64 {
    let c = 8.0 * delta_plus as f64 * ((horizon.max(1) as f64).ln() + ((delta_minus + 1) as f64).ln());
    c.ceil().max(1.0)
}

// ---------------------------------------------------------------------------
// Expert-based runners
// ---------------------------------------------------------------------------

#[derive(Clone, Debug)]
pub struct RunOptions {
    pub gamma: f64,
    pub cap: u128,
}

impl Default for RunOptions {
    fn default() -> Self {
        RunOptions {
            gamma: DEFAULT_GAMMA,
            cap: DEFAULT_EXPERT_CAP,
        }
    }
}

fn sldim_of(hc: &Arc<HypothesisClass>, g: &Arc<ManipulationGraph>) -> Result<usize> {
    let mut s = SldimSolver::new(Arc::clone(hc), Arc::clone(g))?;
    Ok(s.dim_full().max(0) as usize)
}

/// Builds the experts of `families`, runs BWMV under `vote_graph` on `s`,
/// and tracks each expert's own mistakes and the soundness of penalties.
fn run_experts(
    ctx: &ExpertContext,
    families: &[ExpertFamily],
    vote_graph: &Arc<ManipulationGraph>,
    s: &AgentSequence,
    pool: &[ManipulationGraph],
    opts: &RunOptions,
    policy: &mut TieBreak,
) -> Result<(Transcript, ExpertStats)> {
    let count = count_expert_specs_checked(families, opts.cap)?;
    let experts = families
        .iter()
        .flat_map(|f| f.specs())
        .map(|spec| ctx.build(spec))
        .collect::<Result<Vec<_>>>()?;
    let mut agg = Bwmv::new(experts, Arc::clone(vote_graph), opts.gamma)?;
    let mut expert_mistakes = vec![0usize; count as usize];
    let mut unsound = 0;
    let mut transcript = run_game_with(&mut agg, s, pool, policy, |agg, rec, g| {
        for (e, h) in agg.last_commits().iter().enumerate() {
            if effective_label(h, g, rec.x) != rec.y {
                expert_mistakes[e] += 1;
            }
        }
        unsound += agg
            .last_penalized()
            .iter()
            .filter(|&&e| effective_label(&agg.last_commits()[e], g, rec.x) == rec.y)
            .count();
        Ok(())
    })?;
    transcript.learner = "bwmv".into();
    let stats = ExpertStats {
        count,
        ln_count: (count as f64).ln(),
        opt_e: expert_mistakes.iter().copied().min().unwrap_or(0),
        depth: families.iter().map(|f| f.depth).max().unwrap_or(0),
        inert: agg.inert_count(),
        decay_violations: agg.decay_violations(),
        unsound_penalties: unsound,
        max_weight_drift: agg.max_drift(),
        expert_mistakes,
    };
    Ok((transcript, stats))
}

fn push_expert_bounds(t: &mut Transcript, stats: &ExpertStats, delta_plus: usize, gamma: f64) {
    t.bounds.push(BoundCheck::new(
        "bwmv mistakes",
        bound_formula(gamma, "ln|E| + OPT^E"),
        t.mistakes() as f64,
        Some(bwmv_mistake_bound(delta_plus, gamma, stats.ln_count, stats.opt_e as f64)),
    ));
}

/// Experts from every version of SSOA with at most `SLdim(H, G)` guessed
/// mistakes, aggregated by BWMV under `g`.
pub fn agnostic_runner(
    hc: &Arc<HypothesisClass>,
    g: &Arc<ManipulationGraph>,
    s: &AgentSequence,
    opts: &RunOptions,
    policy: &mut TieBreak,
) -> Result<Transcript> {
    let d = sldim_of(hc, g)?;
    let family = ExpertFamily {
        horizon: s.len(),
        depth: d,
        max_in_degree: g.max_in_degree(),
        budget: None,
        graph_index: 0,
    };
    let ctx = ExpertContext::new(Arc::clone(hc), vec![Arc::clone(g)], None)?;
    let pool = [(**g).clone()];
    let (mut t, stats) = run_experts(&ctx, &[family], g, s, &pool, opts, policy)?;
    let (opt_h, _) = compute_opt_h(s, hc, g).ok_or_else(|| Error::input("empty hypothesis class"))?;
    t.opt_h = Some(opt_h);
    let dp = g.max_out_degree();
    push_expert_bounds(&mut t, &stats, dp, opts.gamma);
    t.bounds.push(BoundCheck::new(
        "regret",
        bound_formula(opts.gamma, "opt_h + d + ln|E|"),
        t.regret().expect("opt_h set") as f64,
        Some(bwmv_mistake_bound(dp, opts.gamma, stats.ln_count, (opt_h + d) as f64)),
    ));
    t.experts = Some(stats);
    Ok(t)
}

/// Per-member expert families and the largest member dimension.
fn member_families(
    hc: &Arc<HypothesisClass>,
    gc: &GraphClass,
    horizon: usize,
    budget: Option<usize>,
) -> Result<(Vec<ExpertFamily>, usize)> {
    let union_in = gc.union().max_in_degree();
    let mut families = Vec::with_capacity(gc.len());
    let mut d_max = 0;
    for (i, g) in gc.graphs().iter().enumerate() {
        let d = sldim_of(hc, &Arc::new(g.clone()))?;
        d_max = d_max.max(d);
        families.push(ExpertFamily {
            horizon,
            depth: d,
            max_in_degree: g.max_in_degree(),
            budget: budget.map(|n| (n, union_in)),
            graph_index: i,
        });
    }
    Ok((families, d_max))
}

fn member_context(hc: &Arc<HypothesisClass>, gc: &GraphClass) -> Result<ExpertContext> {
    ExpertContext::new(
        Arc::clone(hc),
        gc.graphs().iter().map(|g| Arc::new(g.clone())).collect(),
        Some(Arc::new(gc.union().clone())),
    )
}

/// Unknown graph from a class, fixed over the run: one expert family per
/// member, BWMV under the union graph. `true_graph` is the member the agents
/// actually use (known to the harness only).
pub fn graph_class_realizable_runner(
    hc: &Arc<HypothesisClass>,
    gc: &GraphClass,
    true_graph: usize,
    s: &AgentSequence,
    opts: &RunOptions,
    policy: &mut TieBreak,
) -> Result<Transcript> {
    if true_graph >= gc.len() {
        return Err(Error::input(format!("true graph {true_graph} not in a class of {}", gc.len())));
    }
    let (families, d_max) = member_families(hc, gc, s.len(), None)?;
    let ctx = member_context(hc, gc)?;
    let union = Arc::new(gc.union().clone());
    let mut fixed = s.clone();
    fixed.graphs = Some(vec![true_graph; s.len()]);
    let (mut t, stats) = run_experts(&ctx, &families, &union, &fixed, gc.graphs(), opts, policy)?;
    let (opt_h, _) = compute_opt_h(s, hc, &gc.graphs()[true_graph]).ok_or_else(|| Error::input("empty hypothesis class"))?;
    t.opt_h = Some(opt_h);
    t.opt_g = Some(0);
    let dp = union.max_out_degree();
    push_expert_bounds(&mut t, &stats, dp, opts.gamma);
    t.bounds.push(BoundCheck::new(
        "regret",
        bound_formula(opts.gamma, "opt_h + d_G + ln|E|"),
        t.regret().expect("opt_h set") as f64,
        Some(bwmv_mistake_bound(dp, opts.gamma, stats.ln_count, (opt_h + d_max) as f64)),
    ));
    t.experts = Some(ExpertStats { depth: d_max, ..stats });
    Ok(t)
}

fn check_pool(pool: &[ManipulationGraph], s: &AgentSequence, union: &ManipulationGraph) -> Result<()> {
    s.validate(union.n(), pool.len())?;
    for t in 0..s.len() {
        let gi = s.graph_index(t);
        if !pool[gi].is_subgraph_of(union) {
            return Err(Error::input(format!(
                "round {} uses graph {gi}, which is not a subgraph of the union graph",
                t + 1
            )));
        }
    }
    Ok(())
}

/// Per-round graphs drawn from `pool`, each inside the class's union graph.
/// Experts additionally guess up to `budget` rounds at which the graph
/// deviated from their belief.
pub fn graph_class_agnostic_runner(
    hc: &Arc<HypothesisClass>,
    gc: &GraphClass,
    s: &AgentSequence,
    pool: &[ManipulationGraph],
    budget: usize,
    opts: &RunOptions,
    policy: &mut TieBreak,
) -> Result<Transcript> {
    check_pool(pool, s, gc.union())?;
    let (families, d_max) = member_families(hc, gc, s.len(), Some(budget))?;
    let ctx = member_context(hc, gc)?;
    let union = Arc::new(gc.union().clone());
    let (mut t, stats) = run_experts(&ctx, &families, &union, s, pool, opts, policy)?;
    let (opt_g, g_star) = compute_opt_g(s, pool, gc);
    let (opt_h, _) = compute_opt_h(s, hc, &gc.graphs()[g_star]).ok_or_else(|| Error::input("empty hypothesis class"))?;
    t.opt_h = Some(opt_h);
    t.opt_g = Some(opt_g);
    let dp = union.max_out_degree();
    push_expert_bounds(&mut t, &stats, dp, opts.gamma);
    let applicable = budget >= opt_g;
    t.bounds.push(BoundCheck::new(
        "regret",
        if applicable {
            bound_formula(opts.gamma, "opt_h + d_G + N + ln|E|")
        } else {
            format!("requires N >= opt_g; N = {budget}, opt_g = {opt_g}")
        },
        t.regret().expect("opt_h set") as f64,
        applicable.then(|| bwmv_mistake_bound(dp, opts.gamma, stats.ln_count, (opt_h + d_max + budget) as f64)),
    ));
    t.experts = Some(ExpertStats { depth: d_max, ..stats });
    Ok(t)
}

/// Parameter-free wrapper: epoch `k = 1, 2, ...` runs a fresh budgeted
/// runner with `N = 2^k` over the remaining rounds and ends once its
/// mistakes exceed `C·2^k`. `c_override` replaces the computed `C`.
pub fn doubling_runner(
    hc: &Arc<HypothesisClass>,
    gc: &GraphClass,
    s: &AgentSequence,
    pool: &[ManipulationGraph],
    opts: &RunOptions,
    c_override: Option<f64>,
    policy: &mut TieBreak,
) -> Result<Transcript> {
    check_pool(pool, s, gc.union())?;
    let union = Arc::new(gc.union().clone());
    let dp = union.max_out_degree();
    let c = c_override.unwrap_or_else(|| doubling_constant(s.len(), dp, union.max_in_degree()));
    let ctx = member_context(hc, gc)?;
    let mut rounds = Vec::with_capacity(s.len());
    let mut epochs = Vec::new();
    let mut d_max = 0;
    let mut start = 0;
    let mut k: u32 = 1;
    while start < s.len() {
        let budget = 1u64.checked_shl(k).unwrap_or(u64::MAX);
        let horizon = s.len() - start;
        let (families, d) = member_families(hc, gc, horizon, Some(budget as usize))?;
        d_max = d;
        let count = count_expert_specs_checked(&families, opts.cap).map_err(|e| match e {
            Error::Resource { count, cap, .. } => Error::Resource {
                what: format!("expert count in epoch {k}"),
                count,
                cap,
            },
            e => e,
        })?;
        let experts = families
            .iter()
            .flat_map(|f| f.specs())
            .map(|spec| ctx.build(spec))
            .collect::<Result<Vec<_>>>()?;
        let mut agg = Bwmv::new(experts, Arc::clone(&union), opts.gamma)?;
        let threshold = c * budget as f64;
        let mut mistakes = 0;
        let mut end = start;
        for t in start..s.len() {
            let gi = s.graph_index(t);
            let mut rec = play_round(&mut agg, s.agents[t], &pool[gi], gi, policy, t - start + 1)?;
            rec.t = t + 1;
            mistakes += rec.mistake as usize;
            rounds.push(rec);
            end = t + 1;
            if mistakes as f64 > threshold {
                break;
            }
        }
        epochs.push(Epoch {
            k,
            start: start + 1,
            end,
            budget,
            threshold,
            mistakes,
            experts: count,
        });
        start = end;
        k += 1;
    }

    let mut t = Transcript {
        learner: "doubling".into(),
        rounds,
        epochs,
        ..Default::default()
    };
    let (opt_g, g_star) = compute_opt_g(s, pool, gc);
    let (opt_h, _) = compute_opt_h(s, hc, &gc.graphs()[g_star]).ok_or_else(|| Error::input("empty hypothesis class"))?;
    t.opt_h = Some(opt_h);
    t.opt_g = Some(opt_g);
    let k_final = t.epochs.len() as f64;
    t.bounds.push(BoundCheck::new(
        "doubling mistakes",
        format!("C*2^(k+1) + k with C = {c}, k = {k_final}"),
        t.mistakes() as f64,
        Some(c * 2f64.powf(k_final + 1.0) + k_final),
    ));
    let n_star = (opt_h + opt_g + d_max) as f64 + (gc.len() as f64).ln();
    t.bounds.push(BoundCheck::new(
        "epochs",
        format!("ceil(log2(max(N*, 1))) + 1 with N* = {n_star:.4}"),
        k_final,
        Some(n_star.max(1.0).log2().ceil() + 1.0),
    ));
    t.bounds.push(BoundCheck::new(
        "regret",
        "O(D(opt_h + opt_g + d_G + ln|G|) log(T D^-)); constants unspecified",
        t.regret().expect("opt_h set") as f64,
        None,
    ));
    Ok(t)
}

// ---------------------------------------------------------------------------
// Deterministic versus randomized on the star
// ---------------------------------------------------------------------------

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct StarDemo {
    pub delta: usize,
    pub sldim: usize,
    /// Mistakes the lower-bound adversary forces on SSOA.
    pub deterministic_mistakes: usize,
    pub trials: usize,
    /// Mean and sample standard deviation of the randomized learner's
    /// mistakes against the eliminating sequence.
    pub mean: f64,
    pub std: f64,
    /// `H_Δ = 1 + 1/2 + ... + 1/Δ`.
    pub harmonic: f64,
    /// `3·std/√trials`.
    pub margin: f64,
}

impl StarDemo {
    pub fn deterministic_pass(&self) -> bool {
        self.deterministic_mistakes + 1 >= self.delta
    }

    pub fn randomized_pass(&self) -> bool {
        self.mean <= self.harmonic + self.margin
    }
}

pub fn harmonic(k: usize) -> f64 {
    (1..=k).map(|i| 1.0 / i as f64).sum()
}

/// On the bidirectional star with `delta` leaves and leaf indicators: the
/// lower-bound adversary against SSOA, and `trials` seeded runs of the
/// uniform version-space learner against the eliminating sequence with a
/// random target leaf.
pub fn demo_star(delta: usize, trials: usize, seed: u64) -> Result<StarDemo> {
    use crate::adversary::{eliminating_sequence, lower_bound_adversary};
    use crate::dimension::LazyWitness;
    use crate::graph::bistar;
    use crate::hypothesis::point_functions_class;
    use crate::learners::{randomized_star_learner, Ssoa};
    use rand::{Rng, SeedableRng};

    if delta < 1 {
        return Err(Error::input("delta must be at least 1"));
    }
    if trials == 0 {
        return Err(Error::input("trials must be at least 1"));
    }
    let g = Arc::new(bistar(delta)?);
    let hc = Arc::new(point_functions_class(delta)?);
    let mut ssoa = Ssoa::new(Arc::clone(&hc), Arc::clone(&g))?;
    let mut solver = SldimSolver::new(Arc::clone(&hc), Arc::clone(&g))?;
    let full = solver.instance().full_mask();
    let mut walk = LazyWitness::new(&mut solver, full)?;
    let sldim = crate::dimension::WitnessWalk::depth(&walk);
    let run = lower_bound_adversary(&mut walk, &mut ssoa, &hc, &g)?;

    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    let pool = [(*g).clone()];
    let mut counts = Vec::with_capacity(trials);
    for _ in 0..trials {
        let target = rng.gen_range(1..=delta);
        let mut learner = randomized_star_learner(delta, rng.gen())?;
        let seq = eliminating_sequence(delta, target)?;
        let t = run_game(&mut learner, &seq, &pool, &mut TieBreak::CanonicalStay)?;
        counts.push(t.mistakes() as f64);
    }
    let mean = counts.iter().sum::<f64>() / trials as f64;
    let var = if trials > 1 {
        counts.iter().map(|c| (c - mean).powi(2)).sum::<f64>() / (trials - 1) as f64
    } else {
        0.0
    };
    let std = var.sqrt();
    Ok(StarDemo {
        delta,
        sldim,
        deterministic_mistakes: run.transcript.mistakes(),
        trials,
        mean,
        std,
        harmonic: harmonic(delta),
        margin: 3.0 * std / (trials as f64).sqrt(),
    })
}

// ---------------------------------------------------------------------------
// Exhaustive worst case
// ---------------------------------------------------------------------------

/// The largest number of mistakes any realizable adversary can force on a
/// deterministic learner within `depth` rounds, searching every feature,
/// every label some remaining hypothesis allows, and every best-response
/// tie-break. `on_mistake(before, after)` sees the learner on each side of
/// every mistake explored.
pub fn worst_case_mistakes<L, F>(
    learner: &L,
    hc: &HypothesisClass,
    g: &ManipulationGraph,
    depth: usize,
    mut on_mistake: F,
) -> Result<usize>
where
    L: Learner + Clone,
    F: FnMut(&L, &L),
{
    let n = g.n();
    let m = hc.len();
    let mut pos = vec![Mask::empty(m); n];
    for (i, h) in hc.members().iter().enumerate() {
        let eff = effective_labeling(h, g);
        for x in eff.positives() {
            pos[x].insert(i);
        }
    }
    let neg: Vec<Mask> = pos
        .iter()
        .map(|p| {
            let mut q = Mask::full(m);
            for i in p.iter() {
                q.remove(i);
            }
            q
        })
        .collect();
    let mut memo = HashMap::new();
    let mut ctx = SearchCtx {
        g,
        pos: &pos,
        neg: &neg,
        memo: &mut memo,
    };
    ctx.search(learner, &Mask::full(m), depth, &mut on_mistake)
}

struct SearchCtx<'a> {
    g: &'a ManipulationGraph,
    pos: &'a [Mask],
    neg: &'a [Mask],
    memo: &'a mut HashMap<(Vec<u64>, Mask, usize), usize>,
}

impl SearchCtx<'_> {
    fn search<L, F>(&mut self, learner: &L, consistent: &Mask, depth: usize, on_mistake: &mut F) -> Result<usize>
    where
        L: Learner + Clone,
        F: FnMut(&L, &L),
    {
        if depth == 0 || consistent.is_empty() {
            return Ok(0);
        }
        let key = learner.state_key().map(|k| (k, consistent.clone(), depth));
        if let Some(v) = key.as_ref().and_then(|k| self.memo.get(k)) {
            return Ok(*v);
        }
        let mut probe = learner.clone();
        let h = probe.commit()?;
        let mut best = 0;
        for x in 0..self.g.n() {
            let br = best_response_set(&h, self.g, x);
            let reports = if br.is_empty() { vec![x] } else { br };
            for (y, allowed) in [(Label::Pos, &self.pos[x]), (Label::Neg, &self.neg[x])] {
                let next = consistent.and(allowed);
                if next.is_empty() {
                    continue;
                }
                for &v in &reports {
                    let mistake = h.get(v) != y;
                    let mut child = probe.clone();
                    child.observe(Observation::new(v, y), mistake)?;
                    if mistake {
                        on_mistake(&probe, &child);
                    }
                    let val = mistake as usize + self.search(&child, &next, depth - 1, on_mistake)?;
                    best = best.max(val);
                }
            }
        }
        if let Some(k) = key {
            self.memo.insert(k, best);
        }
        Ok(best)
    }
}
