#[path = "../../core/tests/support/mod.rs"]
mod support;

use std::net::TcpListener;
use std::path::{Path, PathBuf};
use std::process::Command as Process;

use agent_radar::select::segment_sentences;
use agent_radar::{select_context, AgentId, CommGraph, LocalHashEncoder, Round, TranscriptStore};
use agent_radar_cli::*;
use clap::Parser;
use sha2::{Digest, Sha256};
use tempfile::TempDir;

use support::gen;
use support::mock::{chat_body, MockServer, Reply};

fn configs() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs")
}

fn parse(args: &[&str]) -> Command {
    let mut argv = vec!["agent-radar"];
    argv.extend_from_slice(args);
    Cli::try_parse_from(argv).unwrap().command
}

fn hash(path: &Path) -> String {
    format!("{:x}", Sha256::digest(std::fs::read(path).unwrap()))
}

fn topology(args: &[&str]) -> CommGraph {
    match parse(&[&["topology"], args].concat()) {
        Command::Topology(a) => cmd_topology(&a).unwrap(),
        other => panic!("{other:?}"),
    }
}

#[test]
fn topology_examples() {
    assert_eq!(topology(&["--kind", "fully_connected", "--n", "3"]).edge_count(), 6);
    assert_eq!(topology(&["--kind", "random", "--n", "5", "--p", "0", "--seed", "1"]).edge_count(), 0);

    let dir = TempDir::new().unwrap();
    let out = dir.path().join("g.json");
    let out_s = out.to_str().unwrap();
    topology(&["--kind", "layered", "--n", "4", "--layers", "2", "--seed", "0", "--out", out_s]);
    let g = CommGraph::from_json(&std::fs::read_to_string(&out).unwrap()).unwrap();
    let layer = g.layers().unwrap();
    assert!(g.edges().all(|(a, b)| layer[a] < layer[b]));
    assert!(g.edge_count() > 0);

    let g = topology(&["--kind", "layered", "--n", "4", "--layer-assignment", "0,1,1,2"]);
    assert_eq!(g.layers().unwrap(), &[0, 1, 1, 2]);
    assert_eq!(g.edge_count(), 4);
}

#[test]
fn topology_rejects_bad_params() {
    assert!(Cli::try_parse_from(["agent-radar", "topology", "--kind", "star", "--n", "3"]).is_err());
    let Command::Topology(a) = parse(&["topology", "--kind", "random", "--n", "3", "--p", "1.5"]) else { panic!() };
    assert!(cmd_topology(&a).is_err());
}

struct Fixture {
    _dir: TempDir,
    transcript: String,
    graph: String,
    store: TranscriptStore,
    g: CommGraph,
}

fn fixture(store: TranscriptStore, g: CommGraph) -> Fixture {
    let dir = TempDir::new().unwrap();
    let transcript = dir.path().join("t.jsonl");
    let graph = dir.path().join("g.json");
    std::fs::write(&transcript, store.to_jsonl()).unwrap();
    std::fs::write(&graph, g.to_json()).unwrap();
    Fixture {
        transcript: transcript.to_str().unwrap().into(),
        graph: graph.to_str().unwrap().into(),
        _dir: dir,
        store,
        g,
    }
}

fn select(f: &Fixture, query: &str, extra: &[&str]) -> String {
    let base = ["select", "--transcript", &f.transcript, "--graph", &f.graph, "--query", query];
    match parse(&[&base[..], extra].concat()) {
        Command::Select(a) => cmd_select(&a).unwrap(),
        other => panic!("{other:?}"),
    }
}

#[test]
fn select_matches_library_bytes() {
    let enc = LocalHashEncoder::default();
    for seed in 0..60 {
        let s = gen::random_session(seed);
        let f = fixture(s.store.clone(), s.graph.clone());
        let receiver = (seed as usize) % s.graph.n_agents();
        let t = s.rounds + 1;
        let p = s.params;
        let cli = select(
            &f,
            &s.query,
            &[
                "--receiver",
                &receiver.to_string(),
                "--t",
                &t.to_string(),
                "--lambda-s",
                &p.lambda_s.to_string(),
                "--lambda-t",
                &p.lambda_t.to_string(),
                "--theta",
                &p.theta.to_string(),
            ],
        );
        let t = Round::new(t).unwrap();
        let pool = s.store.context_pool(&s.graph, AgentId(receiver), t).unwrap();
        let lib = select_context(&pool, &s.graph, &s.query, t, &p, &enc).unwrap().to_json();
        assert_eq!(cli, lib, "seed {seed}");
    }
}

fn anchors(json: &str) -> Vec<serde_json::Value> {
    let v: serde_json::Value = serde_json::from_str(json).unwrap();
    v["anchors"].as_array().unwrap().clone()
}

#[test]
fn select_flag_semantics() {
    let s = gen::random_session(11);
    let f = fixture(s.store.clone(), s.graph.clone());

    let defaults: serde_json::Value = serde_json::from_str(&select(&f, &s.query, &["--receiver", "0"])).unwrap();
    assert_eq!(defaults["params"]["lambda_s"], 0.92);
    assert_eq!(defaults["params"]["lambda_t"], 0.92);
    assert_eq!(defaults["params"]["theta"], 0.65);

    let everything = anchors(&select(&f, &s.query, &["--receiver", "0", "--theta", "-2"]));
    let pool = f.store.context_pool(&f.g, AgentId(0), Round::new(s.rounds + 1).unwrap()).unwrap();
    let total: usize = pool.messages.iter().map(|m| segment_sentences(m).len()).sum();
    assert_eq!(everything.len(), total);

    let flat = anchors(&select(&f, &s.query, &["--receiver", "0", "--theta", "-2", "--no-spatial", "--no-temporal"]));
    assert!(flat.iter().all(|a| a["phi_s"] == 1.0 && a["phi_t"] == 1.0));
}

#[test]
fn select_reports_transcript_line() {
    let dir = TempDir::new().unwrap();
    let t = dir.path().join("bad.jsonl");
    let g = dir.path().join("g.json");
    let store = gen::random_session(2).store;
    let mut text = store.to_jsonl();
    text.push_str("{not json\n");
    std::fs::write(&t, &text).unwrap();
    std::fs::write(&g, CommGraph::fully_connected(5).unwrap().to_json()).unwrap();
    let Command::Select(a) = parse(&[
        "select",
        "--transcript",
        t.to_str().unwrap(),
        "--graph",
        g.to_str().unwrap(),
        "--query",
        "q",
        "--receiver",
        "0",
    ]) else {
        panic!()
    };
    let err = format!("{:#}", cmd_select(&a).unwrap_err());
    assert!(err.contains(&format!("line {}", store.len() + 1)), "{err}");
}

fn run(config: &Path, out: &Path, backend: &str) -> anyhow::Result<RunFiles> {
    let Command::Run(a) = parse(&[
        "run",
        "--config",
        config.to_str().unwrap(),
        "--backend",
        backend,
        "--out",
        out.to_str().unwrap(),
    ]) else {
        panic!()
    };
    cmd_run(&a)
}

#[test]
fn scripted_demo_runs_deterministically() {
    let dir = TempDir::new().unwrap();
    let a = run(&configs().join("demo_scripted.json"), &dir.path().join("a"), "scripted").unwrap();
    let b = run(&configs().join("demo_scripted.json"), &dir.path().join("b"), "scripted").unwrap();
    assert_eq!(std::fs::read_dir(dir.path().join("a")).unwrap().count(), 3);
    for (x, y) in [(&a.transcript, &b.transcript), (&a.audit, &b.audit), (&a.final_answer_path, &b.final_answer_path)] {
        assert_eq!(hash(x), hash(y));
    }
    assert_eq!(a.final_answer, "H");
}

fn remote_config(dir: &Path, base_url: &str) -> PathBuf {
    let mut cfg: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(configs().join("demo_scripted.json")).unwrap()).unwrap();
    cfg["profiles"]["file"] = configs().join("profiles_qa.json").to_str().unwrap().into();
    cfg["backend"]["remote"]["base_url"] = base_url.into();
    cfg["backend"]["remote"]["retry"] = serde_json::json!({"max_retries": 1, "base_delay_ms": 1});
    let path = dir.join("remote.json");
    std::fs::write(&path, cfg.to_string()).unwrap();
    path
}

// Both remote cases touch CHAT_API_KEY, so they share one test.
#[test]
fn remote_backend_key_and_partial_failure() {
    let dir = TempDir::new().unwrap();

    let silent = TcpListener::bind("127.0.0.1:0").unwrap();
    silent.set_nonblocking(true).unwrap();
    let cfg = remote_config(dir.path(), &format!("http://{}", silent.local_addr().unwrap()));
    std::env::remove_var("CHAT_API_KEY");
    let err = run(&cfg, &dir.path().join("nokey"), "remote").unwrap_err();
    assert!(format!("{err:#}").contains("CHAT_API_KEY"), "{err:#}");
    assert!(silent.accept().is_err(), "no connection expected");

    // Two good replies, then a non-retryable error on the third agent.
    let server = MockServer::start(
        vec![
            Reply::Json(200, chat_body("first\nH")),
            Reply::Json(200, chat_body("second\nH")),
            Reply::Json(400, "{\"error\":\"bad request\"}".into()),
        ],
        3,
    );
    let cfg = remote_config(dir.path(), &server.base_url);
    std::env::set_var("CHAT_API_KEY", "test-key");
    let out = dir.path().join("partial");
    let err = run(&cfg, &out, "remote").unwrap_err();
    std::env::remove_var("CHAT_API_KEY");
    assert!(format!("{err:#}").contains("partial transcript (2 messages)"), "{err:#}");
    let store = TranscriptStore::from_jsonl(&std::fs::read_to_string(out.join("transcript.jsonl")).unwrap()).unwrap();
    assert_eq!(store.len(), 2);
    assert_eq!(std::fs::read_to_string(out.join("audit.jsonl")).unwrap().lines().count(), 4);
    assert!(!out.join("final_answer.txt").exists());
    let sent: serde_json::Value = serde_json::from_str(&server.requests.lock().unwrap()[0]).unwrap();
    assert!(sent["steering"]["anchors"].is_array());
}

fn sweep(f: &Fixture, query: &str, extra: &[&str]) -> (Vec<SweepRow>, String) {
    let base = ["sweep", "--transcript", &f.transcript, "--graph", &f.graph, "--query", query];
    match parse(&[&base[..], extra].concat()) {
        Command::Sweep(a) => (sweep_rows(&a).unwrap().0, cmd_sweep(&a).unwrap()),
        other => panic!("{other:?}"),
    }
}

#[test]
fn sweep_single_cell_is_its_own_reference() {
    let s = gen::random_session(4);
    let f = fixture(s.store, s.graph);
    let (rows, tsv) = sweep(&f, &s.query, &[]);
    assert_eq!(rows.len(), 1);
    assert_eq!(rows[0].jaccard_vs_default, 1.0);
    let mut lines = tsv.lines();
    let header = lines.next().unwrap();
    assert!(header.starts_with("# ") && header.contains("theta=0.65") && header.contains("graph_seed="));
    assert_eq!(lines.next().unwrap(), "lambda_s\tlambda_t\ttheta\tanchors\tpool_sentences\tjaccard_vs_default");
    assert_eq!(lines.count(), 1);
}

#[test]
fn sweep_grid_shape_and_nesting() {
    let s = gen::random_session(21);
    let f = fixture(s.store, s.graph);
    let (rows, tsv) = sweep(
        &f,
        &s.query,
        &["--lambda-s", "0.5,0.92,0.99", "--lambda-t", "0.5,0.92,0.99", "--theta", "0.9,0.5,-0.1"],
    );
    assert_eq!(rows.len(), 27);
    assert_eq!(tsv.lines().count(), 29);
    for r in &rows {
        assert!(r.jaccard_vs_default.is_finite() && (0.0..=1.0).contains(&r.jaccard_vs_default));
    }
    for cell in rows.chunks(3) {
        assert!(cell[0].anchors <= cell[1].anchors && cell[1].anchors <= cell[2].anchors);
    }
}

#[test]
fn sweep_rejects_bad_grid() {
    let s = gen::random_session(4);
    let f = fixture(s.store, s.graph);
    let base = ["sweep", "--transcript", &f.transcript, "--graph", &f.graph, "--query", "q", "--lambda-s", "1.5"];
    let Command::Sweep(a) = parse(&base) else { panic!() };
    assert!(cmd_sweep(&a).is_err());
}

#[test]
fn binary_exit_codes() {
    let dir = TempDir::new().unwrap();
    let ok = Process::new(env!("CARGO_BIN_EXE_agent-radar"))
        .args(["run", "--config"])
        .arg(configs().join("demo_scripted.json"))
        .arg("--out")
        .arg(dir.path())
        .output()
        .unwrap();
    assert!(ok.status.success(), "{}", String::from_utf8_lossy(&ok.stderr));
    assert_eq!(String::from_utf8_lossy(&ok.stdout).trim(), "H");

    let bad = Process::new(env!("CARGO_BIN_EXE_agent-radar"))
        .args(["run", "--config", "/nonexistent.json", "--out"])
        .arg(dir.path())
        .output()
        .unwrap();
    assert!(!bad.status.success());
    assert!(String::from_utf8_lossy(&bad.stderr).starts_with("error:"));
}
