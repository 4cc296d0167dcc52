use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use tempfile::TempDir;

fn slc(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_slc"))
        .current_dir(dir)
        .env_remove("SLC_CAP")
        .args(args)
        .output()
        .expect("slc runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn field(out: &str, key: &str) -> String {
    out.lines()
        .find_map(|l| l.strip_prefix(&format!("{key}: ")))
        .unwrap_or_else(|| panic!("no {key} in {out}"))
        .to_string()
}

fn write(dir: &Path, name: &str, body: &str) -> PathBuf {
    let p = dir.join(name);
    std::fs::write(&p, body).unwrap();
    p
}

#[test]
fn gen_star_writes_graph_and_class() {
    let d = TempDir::new().unwrap();
    let o = slc(d.path(), &["gen", "star", "--delta", "3", "--out", "s"]);
    assert!(o.status.success());
    let g: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(d.path().join("s.graph.json")).unwrap()).unwrap();
    assert_eq!(g["n"], 4);
    assert_eq!(g["edges"].as_array().unwrap().len(), 3);
    let c: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(d.path().join("s.class.json")).unwrap()).unwrap();
    assert_eq!(c["members"].as_array().unwrap().len(), 3);
}

#[test]
fn gen_gnp_is_seeded_and_clique_plus_adds_nodes() {
    let d = TempDir::new().unwrap();
    for out in ["a", "b"] {
        assert!(slc(d.path(), &["gen", "gnp", "--n", "6", "--p", "0.5", "--seed", "7", "--out", out]).status.success());
    }
    let a = std::fs::read(d.path().join("a.graph.json")).unwrap();
    assert_eq!(a, std::fs::read(d.path().join("b.graph.json")).unwrap());
    assert!(slc(d.path(), &["gen", "clique-plus", "--base", "a.graph.json", "--N", "5", "--out", "c"]).status.success());
    let c: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(d.path().join("c.graph.json")).unwrap()).unwrap();
    assert_eq!(c["n"], 11);
}

#[test]
fn dim_reports_known_values() {
    let d = TempDir::new().unwrap();
    slc(d.path(), &["gen", "complete", "--n", "3", "--out", "k"]);
    let o = slc(d.path(), &["dim", "--graph", "k.graph.json", "--class", "k.class.json"]);
    assert_eq!(field(&stdout(&o), "sldim"), "1");
    slc(d.path(), &["gen", "isolated", "--n", "3", "--out", "i"]);
    let out = stdout(&slc(d.path(), &["dim", "--graph", "i.graph.json", "--class", "i.class.json"]));
    assert_eq!(field(&out, "sldim"), "3");
    assert_eq!(field(&out, "ldim"), "3");
    slc(d.path(), &["gen", "star", "--delta", "2", "--out", "s"]);
    let o = slc(d.path(), &["dim", "--graph", "s.graph.json", "--class", "s.class.json", "--witness", "--out", "w.json"]);
    assert!(o.status.success());
    let w: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(d.path().join("w.json")).unwrap()).unwrap();
    assert!(w["x"].is_u64());
}

#[test]
fn parse_errors_exit_2() {
    let d = TempDir::new().unwrap();
    write(d.path(), "loop.json", r#"{"n":2,"edges":[[1,1]]}"#);
    write(d.path(), "c.json", r#"{"n":2,"members":[[1,-1]]}"#);
    let o = slc(d.path(), &["dim", "--graph", "loop.json", "--class", "c.json"]);
    assert_eq!(o.status.code(), Some(2));
    write(d.path(), "dup.json", r#"{"n":2,"members":[[1,-1],[1,-1]]}"#);
    write(d.path(), "g.json", r#"{"n":2,"edges":[[0,1]]}"#);
    let o = slc(d.path(), &["dim", "--graph", "g.json", "--class", "dup.json"]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn adversary_run_forces_sldim_and_replays() {
    let d = TempDir::new().unwrap();
    slc(d.path(), &["gen", "isolated", "--n", "3", "--out", "i"]);
    let o = slc(d.path(), &["run", "--graph", "i.graph.json", "--class", "i.class.json", "--adversary", "--out", "adv"]);
    assert!(o.status.success(), "{}", stdout(&o));
    let out = stdout(&o);
    assert_eq!(field(&out, "mistakes"), "3");
    assert!(out.contains("ssoa mistakes: measured 3 <= sldim = 3.0000  PASS"));
    let csv = std::fs::read_to_string(d.path().join("adv.csv")).unwrap();
    assert!(csv.starts_with("t,x,v,y,pred,mistake,graph_idx,classifier_digest\n"));
    assert_eq!(csv.lines().count(), 4);
    let o = slc(d.path(), &["run", "--graph", "i.graph.json", "--class", "i.class.json", "--seq", "adv.seq.json"]);
    assert!(o.status.success());
    assert_eq!(field(&stdout(&o), "mistakes"), "3");
}

#[test]
fn realizable_run_rejects_unrealizable_input_with_exit_4() {
    let d = TempDir::new().unwrap();
    write(d.path(), "g.json", r#"{"n":2,"edges":[]}"#);
    write(d.path(), "c.json", r#"{"n":2,"members":[[1,1]]}"#);
    write(d.path(), "s.json", r#"{"agents":[[0,-1]]}"#);
    let o = slc(d.path(), &["run", "--graph", "g.json", "--class", "c.json", "--seq", "s.json"]);
    assert_eq!(o.status.code(), Some(4));
}

#[test]
fn agnostic_reports_bounds_and_respects_cap() {
    let d = TempDir::new().unwrap();
    slc(d.path(), &["gen", "complete", "--n", "3", "--out", "k"]);
    let args = ["agnostic", "--graph", "k.graph.json", "--class", "k.class.json", "--T", "8", "--flips", "2", "--seed", "5", "--out", "ag"];
    let o = slc(d.path(), &args);
    assert!(o.status.success(), "{}", stdout(&o));
    let out = stdout(&o);
    assert!(out.lines().any(|l| l.starts_with("bwmv mistakes:") && l.ends_with("PASS")));
    assert!(out.lines().any(|l| l.starts_with("regret:") && l.ends_with("PASS")));
    let summary: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(d.path().join("ag.json")).unwrap()).unwrap();
    assert_eq!(summary["opt_h"], 2);

    let mut capped = args.to_vec();
    capped.extend(["--cap", "3"]);
    let o = slc(d.path(), &capped);
    assert_eq!(o.status.code(), Some(3));
    assert!(String::from_utf8_lossy(&o.stderr).contains("3"));
    let o = Command::new(env!("CARGO_BIN_EXE_slc"))
        .current_dir(d.path())
        .env("SLC_CAP", "3")
        .args(args)
        .output()
        .unwrap();
    assert_eq!(o.status.code(), Some(3));
}

fn class_fixture(d: &Path) {
    write(d, "g0.json", r#"{"n":3,"edges":[[0,1]]}"#);
    write(d, "g1.json", r#"{"n":3,"edges":[[1,2]]}"#);
    write(d, "members.txt", "# two members\ng0.json\n\ng1.json\n");
    write(d, "c.json", r#"{"n":3,"members":[[-1,1,-1],[-1,-1,1],[1,-1,-1]]}"#);
    write(d, "s.json", r#"{"agents":[[0,1],[1,-1],[2,-1],[0,1]],"graphs":[0,1,1,0]}"#);
}

#[test]
fn graphclass_realizable_and_budgeted() {
    let d = TempDir::new().unwrap();
    class_fixture(d.path());
    let o = slc(d.path(), &["graphclass", "--class", "c.json", "--graphclass", "members.txt", "--T", "5", "--seed", "2"]);
    assert!(o.status.success(), "{}", stdout(&o));
    assert_eq!(field(&stdout(&o), "opt_h"), "0");
    let o = slc(d.path(), &["graphclass", "--class", "c.json", "--graphclass", "members.txt", "--seq", "s.json", "--budget-N", "2"]);
    assert!(o.status.success(), "{}", stdout(&o));
    let out = stdout(&o);
    // Under g0 only round 2 (agent at 1) sees a different out-neighborhood.
    assert_eq!(field(&out, "opt_g"), "1");
    assert!(out.lines().any(|l| l.starts_with("regret:") && l.ends_with("PASS")));
}

#[test]
fn doubling_terminates_and_reports_epochs() {
    let d = TempDir::new().unwrap();
    class_fixture(d.path());
    let o = slc(d.path(), &["doubling", "--class", "c.json", "--graphclass", "members.txt", "--seq", "s.json", "--out", "dbl"]);
    assert!(o.status.success(), "{}", stdout(&o));
    let out = stdout(&o);
    assert!(out.contains("epoch 1:"));
    assert!(out.lines().any(|l| l.starts_with("regret:") && l.ends_with("N/A")));
    assert!(out.lines().any(|l| l.starts_with("doubling mistakes:") && l.ends_with("PASS")));
}

#[test]
fn demo_star_small() {
    let d = TempDir::new().unwrap();
    let o = slc(d.path(), &["demo-star", "--delta", "2", "--trials", "200", "--seed", "1"]);
    assert!(o.status.success());
    let out = stdout(&o);
    assert!(out.contains("forced into 1 mistakes"));
    assert_eq!(out.matches("PASS").count(), 2);
}

#[test]
fn sweep_is_deterministic_across_threads() {
    let d = TempDir::new().unwrap();
    slc(d.path(), &["gen", "bistar", "--delta", "4", "--out", "b"]);
    let args = |out: &'static str| {
        vec!["sweep", "--graph", "b.graph.json", "--class", "b.class.json", "--learner", "ssoa", "--T", "12", "--runs", "24", "--seed", "9", "--out", out]
    };
    assert!(slc(d.path(), &args("a.csv")).status.success());
    assert!(slc(d.path(), &args("b.csv")).status.success());
    let a = std::fs::read_to_string(d.path().join("a.csv")).unwrap();
    assert_eq!(a, std::fs::read_to_string(d.path().join("b.csv")).unwrap());
    assert_eq!(a.lines().count(), 25);
    for row in a.lines().skip(1) {
        let mistakes: usize = row.split(',').nth(2).unwrap().parse().unwrap();
        assert!(mistakes <= 3, "ssoa exceeded sldim on bistar(4): {row}");
    }
}
