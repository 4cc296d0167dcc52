//! `slc`: command-line front end for the strategic online classification
//! simulator.

use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;

use clap::{Args, Parser, Subcommand, ValueEnum};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use slc_core::adversary::{corrupt_labels, lower_bound_adversary, realizable_sequence, AgentSequence};
use slc_core::dimension::{ldim, LazyWitness, SldimSolver};
use slc_core::graph::{bistar, clique_plus, complete, isolated, random_gnp, star, GraphClass, ManipulationGraph};
use slc_core::hypothesis::{all_functions_class_capped, point_functions_class, HypothesisClass, TieBreak};
use slc_core::learners::{learner_by_name, LEARNER_NAMES};
use slc_core::protocol::{
    agnostic_runner, compute_opt_h, demo_star, doubling_runner, graph_class_agnostic_runner,
    graph_class_realizable_runner, run_game, BoundCheck, RunOptions, Transcript,
};
use slc_core::{Error, Result};

const DEFAULT_GAMMA: f64 = 0.367879441;

#[derive(Parser)]
#[command(name = "slc", version, about = "Online strategic classification simulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a manipulation graph (and a companion class where one is standard).
    Gen(GenArgs),
    /// Report the strategic and classical Littlestone dimensions.
    Dim(DimArgs),
    /// Play a learner against a realizable sequence or the lower-bound adversary.
    Run(RunArgs),
    /// Run the expert-based agnostic learner.
    Agnostic(AgnosticArgs),
    /// Run the graph-class learner, realizable or with a corruption budget.
    Graphclass(GraphclassArgs),
    /// Run the parameter-free doubling wrapper over a graph class.
    Doubling(DoublingArgs),
    /// Deterministic versus randomized mistakes on the star.
    DemoStar(DemoStarArgs),
    /// Many seeded runs in parallel, one summary row each.
    Sweep(SweepArgs),
}

#[derive(Clone, Copy, ValueEnum)]
enum GenKind {
    Star,
    Bistar,
    Complete,
    Isolated,
    Gnp,
    CliquePlus,
}

#[derive(Args)]
struct GenArgs {
    kind: GenKind,
    /// Leaves of a star.
    #[arg(long)]
    delta: Option<usize>,
    /// Node count for complete, isolated and gnp.
    #[arg(long)]
    n: Option<usize>,
    /// Edge probability for gnp.
    #[arg(long)]
    p: Option<f64>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Base graph for clique-plus.
    #[arg(long)]
    base: Option<PathBuf>,
    /// Clique size appended by clique-plus.
    #[arg(long = "N")]
    clique: Option<usize>,
    #[arg(long, env = "SLC_CAP", default_value_t = 1_000_000)]
    cap: u128,
    /// Writes `<out>.graph.json` and, for star, bistar, complete and isolated,
    /// `<out>.class.json`.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct Instance {
    #[arg(long)]
    graph: PathBuf,
    #[arg(long)]
    class: PathBuf,
}

#[derive(Args)]
struct DimArgs {
    #[command(flatten)]
    inst: Instance,
    /// Also emit a shattered tree of maximum depth as JSON.
    #[arg(long)]
    witness: bool,
    /// Write the witness here instead of stdout.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Clone, Copy, ValueEnum)]
enum Tiebreak {
    /// Stay when already positive, else the lowest positive out-neighbor.
    Stay,
    /// Lowest-id positive reachable node.
    Lowest,
    /// The positive reachable node with the most in-neighbors, so the report
    /// says least about where the agent started.
    Adversarial,
}

#[derive(Args)]
struct Common {
    /// Agent sequence JSON. Without it a sequence is generated from --T and --seed.
    #[arg(long)]
    seq: Option<PathBuf>,
    /// Horizon: truncates --seq, or the length of a generated sequence.
    #[arg(long = "T")]
    horizon: Option<usize>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, value_enum, default_value = "stay")]
    tiebreak: Tiebreak,
    /// Transcript prefix: writes `<out>.csv` and `<out>.json`.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct ExpertOpts {
    #[arg(long, default_value_t = DEFAULT_GAMMA)]
    gamma: f64,
    /// Largest expert set a run may enumerate.
    #[arg(long, env = "SLC_CAP", default_value_t = 1_000_000)]
    cap: u128,
}

impl ExpertOpts {
    fn options(&self) -> Result<RunOptions> {
        if !(self.gamma > 0.0 && self.gamma < 1.0) {
            return Err(Error::Input(format!("gamma must lie in (0, 1), got {}", self.gamma)));
        }
        Ok(RunOptions {
            gamma: self.gamma,
            cap: self.cap,
        })
    }
}

#[derive(Args)]
struct RunArgs {
    #[command(flatten)]
    inst: Instance,
    #[command(flatten)]
    common: Common,
    #[arg(long, default_value = "ssoa")]
    learner: String,
    /// Play the lower-bound adversary instead of a sequence.
    #[arg(long, conflicts_with = "seq")]
    adversary: bool,
}

#[derive(Args)]
struct AgnosticArgs {
    #[command(flatten)]
    inst: Instance,
    #[command(flatten)]
    common: Common,
    #[command(flatten)]
    experts: ExpertOpts,
    /// Label flips applied to a generated sequence.
    #[arg(long, default_value_t = 0)]
    flips: usize,
}

#[derive(Args)]
struct ClassInstance {
    #[arg(long)]
    class: PathBuf,
    /// Text file listing member graph paths, one per line.
    #[arg(long)]
    graphclass: PathBuf,
    /// Extra graphs the sequence may index, after the members.
    #[arg(long, num_args = 1..)]
    pool: Vec<PathBuf>,
}

#[derive(Args)]
struct GraphclassArgs {
    #[command(flatten)]
    inst: ClassInstance,
    #[command(flatten)]
    common: Common,
    #[command(flatten)]
    experts: ExpertOpts,
    /// Corruption budget. Without it the sequence is played on --true-graph.
    #[arg(long = "budget-N")]
    budget: Option<usize>,
    /// Member the agents respond under in the realizable setting.
    #[arg(long, default_value_t = 0)]
    true_graph: usize,
}

#[derive(Args)]
struct DoublingArgs {
    #[command(flatten)]
    inst: ClassInstance,
    #[command(flatten)]
    common: Common,
    #[command(flatten)]
    experts: ExpertOpts,
}

#[derive(Args)]
struct DemoStarArgs {
    #[arg(long, default_value_t = 8)]
    delta: usize,
    #[arg(long, default_value_t = 1000)]
    trials: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Args)]
struct SweepArgs {
    #[command(flatten)]
    inst: Instance,
    #[arg(long, default_value = "ssoa")]
    learner: String,
    /// Agnostic runs with the expert learner instead of a single learner.
    #[arg(long, conflicts_with = "learner")]
    agnostic: bool,
    #[arg(long = "T", default_value_t = 10)]
    horizon: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 16)]
    runs: usize,
    #[arg(long, default_value_t = 0)]
    flips: usize,
    #[arg(long, value_enum, default_value = "stay")]
    tiebreak: Tiebreak,
    #[command(flatten)]
    experts: ExpertOpts,
    /// CSV of per-run rows; stdout when absent.
    #[arg(long)]
    out: Option<PathBuf>,
}

fn exit_code(e: &Error) -> u8 {
    match e {
        Error::Resource { .. } => 3,
        Error::Protocol(_) | Error::NotRealizable(_) => 4,
        _ => 2,
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match dispatch(cli.command) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}

fn dispatch(cmd: Command) -> Result<u8> {
    match cmd {
        Command::Gen(a) => cmd_gen(a).map(|()| 0),
        Command::Dim(a) => cmd_dim(a).map(|()| 0),
        Command::Run(a) => cmd_run(a),
        Command::Agnostic(a) => cmd_agnostic(a),
        Command::Graphclass(a) => cmd_graphclass(a),
        Command::Doubling(a) => cmd_doubling(a),
        Command::DemoStar(a) => cmd_demo_star(a),
        Command::Sweep(a) => cmd_sweep(a).map(|()| 0),
    }
}

fn need<T>(v: Option<T>, flag: &str, kind: &str) -> Result<T> {
    v.ok_or_else(|| Error::Input(format!("{kind} needs --{flag}")))
}

fn with_suffix(prefix: &Path, suffix: &str) -> PathBuf {
    let mut p = prefix.as_os_str().to_owned();
    p.push(suffix);
    PathBuf::from(p)
}

fn cmd_gen(a: GenArgs) -> Result<()> {
    let cap = usize::try_from(a.cap).unwrap_or(usize::MAX);
    let (g, hc) = match a.kind {
        GenKind::Star => {
            let d = need(a.delta, "delta", "star")?;
            (star(d)?, Some(point_functions_class(d)?))
        }
        GenKind::Bistar => {
            let d = need(a.delta, "delta", "bistar")?;
            (bistar(d)?, Some(point_functions_class(d)?))
        }
        GenKind::Complete => {
            let n = need(a.n, "n", "complete")?;
            (complete(n)?, Some(all_functions_class_capped(n, cap.min(63))?))
        }
        GenKind::Isolated => {
            let n = need(a.n, "n", "isolated")?;
            (isolated(n)?, Some(all_functions_class_capped(n, cap.min(63))?))
        }
        GenKind::Gnp => {
            let n = need(a.n, "n", "gnp")?;
            let p = need(a.p, "p", "gnp")?;
            (random_gnp(n, p, a.seed)?, None)
        }
        GenKind::CliquePlus => {
            let base = ManipulationGraph::load(need(a.base, "base", "clique-plus")?)?;
            (clique_plus(&base, need(a.clique, "N", "clique-plus")?)?, None)
        }
    };
    let gp = with_suffix(&a.out, ".graph.json");
    g.save(&gp)?;
    println!("wrote {} (n = {}, {} edges)", gp.display(), g.n(), g.edge_count());
    if let Some(hc) = hc {
        let cp = with_suffix(&a.out, ".class.json");
        hc.save(&cp)?;
        println!("wrote {} ({} hypotheses)", cp.display(), hc.len());
    }
    Ok(())
}

fn load_instance(inst: &Instance) -> Result<(Arc<HypothesisClass>, Arc<ManipulationGraph>)> {
    let g = ManipulationGraph::load(&inst.graph)?;
    let hc = HypothesisClass::load(&inst.class)?;
    if hc.n() != g.n() {
        return Err(Error::Input(format!(
            "class has n = {} but graph has n = {}",
            hc.n(),
            g.n()
        )));
    }
    Ok((Arc::new(hc), Arc::new(g)))
}

fn show(v: Option<usize>) -> String {
    v.map_or_else(|| "undefined (empty class)".into(), |d| d.to_string())
}

fn cmd_dim(a: DimArgs) -> Result<()> {
    let (hc, g) = load_instance(&a.inst)?;
    let mut solver = SldimSolver::new(Arc::clone(&hc), Arc::clone(&g))?;
    let full = solver.instance().full_mask();
    let d = solver.dim(&full);
    let sl = (d >= 0).then_some(d as usize);
    println!("n: {}", g.n());
    println!("hypotheses: {}", hc.len());
    println!("max out-degree: {}", g.max_out_degree());
    println!("max in-degree: {}", g.max_in_degree());
    println!("sldim: {}", show(sl));
    println!("ldim: {}", show(ldim(&hc)?));
    if a.witness {
        if sl.is_none() {
            return Err(Error::Input("no witness for an empty class".into()));
        }
        let json = solver.witness(&full)?.to_json();
        match a.out {
            Some(p) => {
                std::fs::write(&p, json + "\n")?;
                println!("witness written to {}", p.display());
            }
            None => println!("witness: {json}"),
        }
    }
    Ok(())
}

fn policy(t: Tiebreak, graphs: Vec<ManipulationGraph>) -> TieBreak {
    match t {
        Tiebreak::Stay => TieBreak::CanonicalStay,
        Tiebreak::Lowest => TieBreak::LowestId,
        Tiebreak::Adversarial => TieBreak::Callback(Box::new(move |q| {
            // The callback does not learn which pool graph is in play; use the
            // largest in-degree over the pool.
            let ambiguity = |v: usize| graphs.iter().map(|g| g.in_closed(v).len()).max().unwrap_or(0);
            *q.candidates
                .iter()
                .max_by_key(|&&v| (ambiguity(v), std::cmp::Reverse(v)))
                .expect("nonempty best-response set")
        })),
    }
}

/// The sequence from --seq (truncated to --T), or a generated one.
fn sequence(
    c: &Common,
    flips: usize,
    generate: impl FnOnce(&mut ChaCha8Rng, usize) -> Result<AgentSequence>,
) -> Result<AgentSequence> {
    let mut rng = ChaCha8Rng::seed_from_u64(c.seed);
    let s = match &c.seq {
        Some(p) => {
            let s = AgentSequence::load(p)?;
            match c.horizon {
                Some(t) => s.truncated(t),
                None => s,
            }
        }
        None => generate(&mut rng, need(c.horizon, "T", "a generated sequence (no --seq)")?)?,
    };
    corrupt_labels(&s, flips, &mut rng)
}

fn random_realizable(
    rng: &mut ChaCha8Rng,
    hc: &HypothesisClass,
    g: &ManipulationGraph,
    horizon: usize,
) -> Result<AgentSequence> {
    if hc.is_empty() {
        return Err(Error::Input("empty hypothesis class".into()));
    }
    let h = rng.gen_range(0..hc.len());
    let xs: Vec<usize> = (0..horizon).map(|_| rng.gen_range(0..g.n())).collect();
    realizable_sequence(h, hc, g, &xs)
}

fn finish(t: &Transcript, out: Option<&Path>) -> Result<u8> {
    println!("learner: {}", t.learner);
    println!("rounds: {}", t.rounds.len());
    println!("mistakes: {}", t.mistakes());
    if let Some(o) = t.opt_h {
        println!("opt_h: {o}");
    }
    if let Some(o) = t.opt_g {
        println!("opt_g: {o}");
    }
    if let Some(r) = t.regret() {
        println!("regret: {r}");
    }
    if let Some(st) = &t.experts {
        println!(
            "experts: {} (ln {:.4}), best expert {} mistakes, {} inert, {} decay violations",
            st.count, st.ln_count, st.opt_e, st.inert, st.decay_violations
        );
    }
    for e in &t.epochs {
        println!(
            "epoch {}: rounds {}..={}, N = {}, threshold {:.4}, mistakes {}",
            e.k, e.start, e.end, e.budget, e.threshold, e.mistakes
        );
    }
    for b in &t.bounds {
        println!("{}", b.line());
    }
    if let Some(p) = out {
        t.write(p)?;
        println!("transcript: {}.csv, {}.json", p.display(), p.display());
    }
    Ok(if t.all_bounds_pass() { 0 } else { 1 })
}

fn sldim_value(hc: &Arc<HypothesisClass>, g: &Arc<ManipulationGraph>) -> Result<usize> {
    let mut solver = SldimSolver::new(Arc::clone(hc), Arc::clone(g))?;
    let full = solver.instance().full_mask();
    usize::try_from(solver.dim(&full)).map_err(|_| Error::Input("empty hypothesis class".into()))
}

fn cmd_run(a: RunArgs) -> Result<u8> {
    let (hc, g) = load_instance(&a.inst)?;
    if !LEARNER_NAMES.contains(&a.learner.as_str()) {
        return Err(Error::Input(format!(
            "unknown learner {:?}; expected one of {}",
            a.learner,
            LEARNER_NAMES.join(", ")
        )));
    }
    let mut learner = learner_by_name(&a.learner, &hc, &g, a.common.seed)?;
    let d = sldim_value(&hc, &g)?;
    println!("sldim: {d}");
    let mut t = if a.adversary {
        if !learner.is_deterministic() {
            return Err(Error::Input("the lower-bound adversary needs a deterministic learner".into()));
        }
        let mut solver = SldimSolver::new(Arc::clone(&hc), Arc::clone(&g))?;
        let full = solver.instance().full_mask();
        let mut walk = LazyWitness::new(&mut solver, full)?;
        let run = lower_bound_adversary(&mut walk, learner.as_mut(), &hc, &g)?;
        if let Some(p) = &a.common.out {
            run.sequence.save(with_suffix(p, ".seq.json"))?;
        }
        let mut t = run.transcript;
        t.bounds.push(BoundCheck::new("lower bound", "forced mistakes", d as f64, Some(t.mistakes() as f64)));
        t
    } else {
        let s = sequence(&a.common, 0, |rng, horizon| random_realizable(rng, &hc, &g, horizon))?;
        s.validate(g.n(), 1)?;
        let (opt, _) = compute_opt_h(&s, &hc, &g).ok_or_else(|| Error::Input("empty hypothesis class".into()))?;
        if opt > 0 {
            return Err(Error::NotRealizable(format!(
                "the best hypothesis errs on {opt} rounds; run needs a realizable sequence"
            )));
        }
        let pool = [(*g).clone()];
        let mut t = run_game(learner.as_mut(), &s, &pool, &mut policy(a.common.tiebreak, pool.to_vec()))?;
        t.opt_h = Some(0);
        t
    };
    if a.learner == "ssoa" {
        t.bounds.push(BoundCheck::new("ssoa mistakes", "sldim", t.mistakes() as f64, Some(d as f64)));
    }
    finish(&t, a.common.out.as_deref())
}

fn cmd_agnostic(a: AgnosticArgs) -> Result<u8> {
    let (hc, g) = load_instance(&a.inst)?;
    let opts = a.experts.options()?;
    let s = sequence(&a.common, a.flips, |rng, horizon| random_realizable(rng, &hc, &g, horizon))?;
    let pool = vec![(*g).clone()];
    let t = agnostic_runner(&hc, &g, &s, &opts, &mut policy(a.common.tiebreak, pool))?;
    finish(&t, a.common.out.as_deref())
}

/// Member graphs from a listing file (paths relative to the file; blank
/// lines and `#` comments skipped), plus any extra pool graphs.
fn load_class_instance(c: &ClassInstance) -> Result<(Arc<HypothesisClass>, GraphClass, Vec<ManipulationGraph>)> {
    let text = std::fs::read_to_string(&c.graphclass)?;
    let dir = c.graphclass.parent().unwrap_or(Path::new("."));
    let members = text
        .lines()
        .map(str::trim)
        .filter(|l| !l.is_empty() && !l.starts_with('#'))
        .map(|l| ManipulationGraph::load(dir.join(l)))
        .collect::<Result<Vec<_>>>()?;
    if members.is_empty() {
        return Err(Error::Parse(format!("{} lists no graphs", c.graphclass.display())));
    }
    let gc = GraphClass::new(members)?;
    let hc = HypothesisClass::load(&c.class)?;
    if hc.n() != gc.n() {
        return Err(Error::Input(format!("class has n = {} but graphs have n = {}", hc.n(), gc.n())));
    }
    let mut pool = gc.graphs().to_vec();
    for p in &c.pool {
        pool.push(ManipulationGraph::load(p)?);
    }
    Ok((Arc::new(hc), gc, pool))
}

fn cmd_graphclass(a: GraphclassArgs) -> Result<u8> {
    let (hc, gc, pool) = load_class_instance(&a.inst)?;
    let opts = a.experts.options()?;
    let truth = a.true_graph;
    if truth >= gc.len() {
        return Err(Error::Input(format!("--true-graph {truth} but the class has {} members", gc.len())));
    }
    let s = sequence(&a.common, 0, |rng, horizon| random_realizable(rng, &hc, &gc.graphs()[truth], horizon))?;
    let mut pol = policy(a.common.tiebreak, pool.clone());
    let t = match a.budget {
        None => graph_class_realizable_runner(&hc, &gc, truth, &s, &opts, &mut pol)?,
        Some(n) => graph_class_agnostic_runner(&hc, &gc, &s, &pool, n, &opts, &mut pol)?,
    };
    finish(&t, a.common.out.as_deref())
}

fn cmd_doubling(a: DoublingArgs) -> Result<u8> {
    let (hc, gc, pool) = load_class_instance(&a.inst)?;
    let opts = a.experts.options()?;
    let s = sequence(&a.common, 0, |rng, horizon| random_realizable(rng, &hc, &gc.graphs()[0], horizon))?;
    let t = doubling_runner(&hc, &gc, &s, &pool, &opts, None, &mut policy(a.common.tiebreak, pool.clone()))?;
    finish(&t, a.common.out.as_deref())
}

fn cmd_demo_star(a: DemoStarArgs) -> Result<u8> {
    if a.delta < 2 {
        return Err(Error::Input("demo-star needs --delta >= 2".into()));
    }
    let d = demo_star(a.delta, a.trials, a.seed)?;
    let status = |ok: bool| if ok { "PASS" } else { "FAIL" };
    println!("delta: {}", d.delta);
    println!("sldim: {}", d.sldim);
    println!(
        "deterministic: SSOA forced into {} mistakes >= delta - 1 = {}  {}",
        d.deterministic_mistakes,
        d.delta - 1,
        status(d.deterministic_pass())
    );
    println!(
        "randomized: mean {:.4} (std {:.4}, {} trials) <= H_{} + 3*std/sqrt(trials) = {:.4} + {:.4}  {}",
        d.mean,
        d.std,
        d.trials,
        d.delta,
        d.harmonic,
        d.margin,
        status(d.randomized_pass())
    );
    Ok(if d.deterministic_pass() && d.randomized_pass() { 0 } else { 1 })
}

fn cmd_sweep(a: SweepArgs) -> Result<()> {
    let (hc, g) = load_instance(&a.inst)?;
    let opts = a.experts.options()?;
    if !a.agnostic && !LEARNER_NAMES.contains(&a.learner.as_str()) {
        return Err(Error::Input(format!("unknown learner {:?}", a.learner)));
    }
    let pool = vec![(*g).clone()];
    let flips = a.flips.min(a.horizon);
    let rows: Vec<Result<String>> = (0..a.runs)
        .into_par_iter()
        .map(|i| {
            let seed = a.seed.wrapping_add(i as u64);
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let s = random_realizable(&mut rng, &hc, &g, a.horizon)?;
            let s = corrupt_labels(&s, flips, &mut rng)?;
            let mut pol = policy(a.tiebreak, pool.clone());
            let mut t = if a.agnostic {
                agnostic_runner(&hc, &g, &s, &opts, &mut pol)?
            } else {
                let mut l = learner_by_name(&a.learner, &hc, &g, seed)?;
                run_game(l.as_mut(), &s, &pool, &mut pol)?
            };
            if t.opt_h.is_none() {
                t.opt_h = compute_opt_h(&s, &hc, &g).map(|(o, _)| o);
            }
            Ok(format!(
                "{seed},{},{},{},{},{}",
                t.learner,
                t.mistakes(),
                t.opt_h.map_or(String::new(), |o| o.to_string()),
                t.regret().map_or(String::new(), |r| r.to_string()),
                if t.all_bounds_pass() { "PASS" } else { "FAIL" }
            ))
        })
        .collect();
    let mut csv = String::from("seed,learner,mistakes,opt_h,regret,bounds\n");
    for r in rows {
        csv.push_str(&r?);
        csv.push('\n');
    }
    match a.out {
        Some(p) => std::fs::write(&p, csv)?,
        None => print!("{csv}"),
    }
    Ok(())
}
