//! Subcommands behind the `agent-radar` binary.
//!
//! Each command is a plain function over its parsed flags so tests can call
//! it without spawning a process.

use std::collections::BTreeSet;
use std::fs;
use std::path::{Path, PathBuf};

use agent_radar::graph::{build_topology, CommGraph, LayerSpec, TopologyKind, TopologyParams};
use agent_radar::harness::config::EncoderConfig;
use agent_radar::harness::{
    audit_to_jsonl, run_session, AgentBackend, AuditRecord, ChatClient, RemoteBackend, SessionFile, StepAudit,
};
use agent_radar::select::{segment_sentences, RemoteEncoderConfig, DEFAULT_LAMBDA_S, DEFAULT_LAMBDA_T, DEFAULT_THETA};
use agent_radar::{
    select_context, AgentId, DecayParams, EmbeddingProvider, Matcher, Round, SelectedContext,
    TranscriptStore,
};
use anyhow::{anyhow, bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use rayon::prelude::*;

#[derive(Debug, Parser)]
#[command(name = "agent-radar", version, about = "Spatio-temporal context selection for multi-agent sessions")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a communication graph.
    Topology(TopologyArgs),
    /// Run a whole session from a config file.
    Run(RunArgs),
    /// Select anchors for one receiver over a recorded transcript.
    Select(SelectArgs),
    /// Grid over decay rates and threshold; emits TSV.
    Sweep(SweepArgs),
}

#[derive(Debug, Args)]
pub struct TopologyArgs {
    #[arg(long, value_parser = parse_kind)]
    pub kind: TopologyKind,
    #[arg(long)]
    pub n: usize,
    /// Edge probability for `random`.
    #[arg(long, default_value_t = 0.5)]
    pub p: f64,
    /// Layer count for `layered`.
    #[arg(long, conflicts_with = "layer_assignment")]
    pub layers: Option<usize>,
    /// Explicit layer per agent for `layered`, e.g. `0,0,1,2`.
    #[arg(long, value_delimiter = ',')]
    pub layer_assignment: Option<Vec<usize>>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

fn parse_kind(s: &str) -> Result<TopologyKind, String> {
    s.parse().map_err(|e: agent_radar::GraphError| e.to_string())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum BackendChoice {
    Scripted,
    Remote,
}

#[derive(Debug, Args)]
pub struct RunArgs {
    #[arg(long)]
    pub config: PathBuf,
    #[arg(long, value_enum, default_value_t = BackendChoice::Scripted)]
    pub backend: BackendChoice,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum MatcherChoice {
    Dense,
    Bm25,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum EncoderChoice {
    Local,
    Remote,
}

/// Flags shared by `select` and `sweep`.
#[derive(Debug, Args)]
pub struct InputArgs {
    #[arg(long)]
    pub transcript: PathBuf,
    #[arg(long)]
    pub graph: PathBuf,
    #[arg(long)]
    pub query: String,
    #[arg(long, value_enum, default_value_t = MatcherChoice::Dense)]
    pub matcher: MatcherChoice,
    #[arg(long, value_enum, default_value_t = EncoderChoice::Local)]
    pub encoder: EncoderChoice,
    /// JSON endpoint settings for `--encoder remote`.
    #[arg(long)]
    pub encoder_config: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct SelectArgs {
    #[command(flatten)]
    pub input: InputArgs,
    #[arg(long)]
    pub receiver: usize,
    /// Selection round; defaults to one past the last recorded round.
    #[arg(long)]
    pub t: Option<u32>,
    #[arg(long, default_value_t = DEFAULT_LAMBDA_S)]
    pub lambda_s: f64,
    #[arg(long, default_value_t = DEFAULT_LAMBDA_T)]
    pub lambda_t: f64,
    #[arg(long, default_value_t = DEFAULT_THETA, allow_negative_numbers = true)]
    pub theta: f64,
    #[arg(long)]
    pub no_spatial: bool,
    #[arg(long)]
    pub no_temporal: bool,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct SweepArgs {
    #[command(flatten)]
    pub input: InputArgs,
    /// Receivers to include; all agents by default.
    #[arg(long, value_delimiter = ',')]
    pub receivers: Option<Vec<usize>>,
    #[arg(long)]
    pub t: Option<u32>,
    #[arg(long, value_delimiter = ',', default_values_t = [DEFAULT_LAMBDA_S])]
    pub lambda_s: Vec<f64>,
    #[arg(long, value_delimiter = ',', default_values_t = [DEFAULT_LAMBDA_T])]
    pub lambda_t: Vec<f64>,
    #[arg(long, value_delimiter = ',', default_values_t = [DEFAULT_THETA], allow_negative_numbers = true)]
    pub theta: Vec<f64>,
    #[arg(long)]
    pub no_spatial: bool,
    #[arg(long)]
    pub no_temporal: bool,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

/// Writes to stdout; a closed pipe (e.g. `| head`) is not an error.
fn emit(text: &str) -> Result<()> {
    use std::io::Write;
    let mut out = std::io::stdout().lock();
    match out.write_all(text.as_bytes()).and_then(|()| out.flush()) {
        Err(e) if e.kind() != std::io::ErrorKind::BrokenPipe => Err(e.into()),
        _ => Ok(()),
    }
}

pub fn run_cli(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Topology(args) => {
            let graph = cmd_topology(&args)?;
            if args.out.is_none() {
                emit(&format!("{}\n", graph.to_json()))?;
            }
        }
        Command::Run(args) => {
            let files = cmd_run(&args)?;
            emit(&format!("{}\n", files.final_answer))?;
        }
        Command::Select(args) => {
            let json = cmd_select(&args)?;
            if args.out.is_none() {
                emit(&format!("{json}\n"))?;
            }
        }
        Command::Sweep(args) => {
            let tsv = cmd_sweep(&args)?;
            if args.out.is_none() {
                emit(&tsv)?;
            }
        }
    }
    Ok(())
}

fn write(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).with_context(|| format!("cannot write {}", path.display()))
}

fn read(path: &Path) -> Result<String> {
    fs::read_to_string(path).with_context(|| format!("cannot read {}", path.display()))
}

pub fn cmd_topology(args: &TopologyArgs) -> Result<CommGraph> {
    let mut params = TopologyParams {
        edge_probability: args.p,
        ..Default::default()
    };
    if let Some(count) = args.layers {
        params.layers = LayerSpec::Count(count);
    }
    if let Some(assign) = &args.layer_assignment {
        let n_layers = assign.iter().max().map_or(0, |m| m + 1);
        let mut groups = vec![Vec::new(); n_layers];
        for (agent, &layer) in assign.iter().enumerate() {
            groups[layer].push(agent);
        }
        params.layers = LayerSpec::Groups(groups);
    }
    let graph = build_topology(args.kind, args.n, &params, args.seed)?;
    if let Some(out) = &args.out {
        write(out, &graph.to_json())?;
    }
    Ok(graph)
}

/// Paths written by [`cmd_run`].
#[derive(Debug, Clone)]
pub struct RunFiles {
    pub transcript: PathBuf,
    pub audit: PathBuf,
    pub final_answer_path: PathBuf,
    pub final_answer: String,
}

fn step_records(steps: &[StepAudit]) -> Vec<AuditRecord> {
    steps
        .iter()
        .flat_map(|s| [AuditRecord::Selection(s.selection.clone()), AuditRecord::Inference(s.inference.clone())])
        .collect()
}

pub fn cmd_run(args: &RunArgs) -> Result<RunFiles> {
    let file = SessionFile::load(&args.config)?;
    let config = file.session_config()?;
    let mut backend: Box<dyn AgentBackend> = match args.backend {
        BackendChoice::Scripted => {
            let script = file
                .backend
                .scripted
                .clone()
                .ok_or_else(|| anyhow!("config has no backend.scripted section"))?;
            script.covers(config.graph.n_agents(), config.rounds)?;
            Box::new(script)
        }
        BackendChoice::Remote => {
            let chat = file
                .backend
                .remote
                .clone()
                .ok_or_else(|| anyhow!("config has no backend.remote section"))?;
            Box::new(RemoteBackend::new(ChatClient::from_env(chat)?, Some(config.seed)))
        }
    };
    let provider = file.encoder.build()?;

    fs::create_dir_all(&args.out).with_context(|| format!("cannot create {}", args.out.display()))?;
    let files = RunFiles {
        transcript: args.out.join("transcript.jsonl"),
        audit: args.out.join("audit.jsonl"),
        final_answer_path: args.out.join("final_answer.txt"),
        final_answer: String::new(),
    };
    match run_session(&config, backend.as_mut(), provider.as_ref()) {
        Ok(result) => {
            write(&files.transcript, &result.transcript.to_jsonl())?;
            write(&files.audit, &result.audit_jsonl())?;
            write(&files.final_answer_path, &format!("{}\n", result.final_answer))?;
            Ok(RunFiles {
                final_answer: result.final_answer,
                ..files
            })
        }
        Err(failure) => {
            write(&files.transcript, &failure.transcript.to_jsonl())?;
            write(&files.audit, &audit_to_jsonl(&step_records(&failure.steps)))?;
            Err(anyhow!(failure.error).context(format!(
                "session failed; partial transcript ({} messages) written to {}",
                failure.transcript.len(),
                files.transcript.display()
            )))
        }
    }
}

struct Inputs {
    store: TranscriptStore,
    graph: CommGraph,
    provider: Box<dyn EmbeddingProvider>,
}

fn load_inputs(args: &InputArgs) -> Result<Inputs> {
    let store = TranscriptStore::from_jsonl(&read(&args.transcript)?)
        .with_context(|| format!("in {}", args.transcript.display()))?;
    let graph = CommGraph::from_json(&read(&args.graph)?).with_context(|| format!("in {}", args.graph.display()))?;
    let encoder = match args.encoder {
        EncoderChoice::Local => EncoderConfig::default(),
        EncoderChoice::Remote => {
            let path = args
                .encoder_config
                .as_ref()
                .ok_or_else(|| anyhow!("--encoder remote needs --encoder-config"))?;
            let cfg: RemoteEncoderConfig =
                serde_json::from_str(&read(path)?).with_context(|| format!("in {}", path.display()))?;
            EncoderConfig::Remote(cfg)
        }
    };
    Ok(Inputs {
        store,
        graph,
        provider: encoder.build()?,
    })
}

fn matcher(choice: MatcherChoice) -> Matcher {
    match choice {
        MatcherChoice::Dense => Matcher::DenseCosine,
        MatcherChoice::Bm25 => Matcher::LexicalBm25,
    }
}

fn selection_round(store: &TranscriptStore, t: Option<u32>) -> Result<Round> {
    let t = t.unwrap_or_else(|| store.last_round().map_or(1, |r| r.get() + 1));
    Round::new(t).map_err(|e| anyhow!("--t: {e}"))
}

fn check_agent(graph: &CommGraph, id: usize) -> Result<AgentId> {
    if id >= graph.n_agents() {
        bail!("agent {id} is not in a graph of {} agents", graph.n_agents());
    }
    Ok(AgentId(id))
}

impl SelectArgs {
    pub fn params(&self) -> DecayParams {
        DecayParams {
            lambda_s: self.lambda_s,
            lambda_t: self.lambda_t,
            theta: self.theta,
            disable_spatial: self.no_spatial,
            disable_temporal: self.no_temporal,
            matcher: matcher(self.input.matcher),
        }
    }
}

/// Returns the selection JSON, exactly as [`SelectedContext::to_json`] renders it.
pub fn cmd_select(args: &SelectArgs) -> Result<String> {
    let inputs = load_inputs(&args.input)?;
    let receiver = check_agent(&inputs.graph, args.receiver)?;
    let t = selection_round(&inputs.store, args.t)?;
    let pool = inputs.store.context_pool(&inputs.graph, receiver, t)?;
    let selected = select_context(&pool, &inputs.graph, &args.input.query, t, &args.params(), inputs.provider.as_ref())?;
    let json = selected.to_json();
    if let Some(out) = &args.out {
        write(out, &json)?;
    }
    Ok(json)
}

/// One grid cell of a sweep.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepRow {
    pub lambda_s: f64,
    pub lambda_t: f64,
    pub theta: f64,
    pub anchors: usize,
    pub pool_sentences: usize,
    pub jaccard_vs_default: f64,
}

type AnchorKey = (usize, u64, usize);

fn anchor_keys(selections: &[SelectedContext]) -> BTreeSet<AnchorKey> {
    selections
        .iter()
        .flat_map(|s| {
            s.anchors
                .iter()
                .map(move |a| (s.receiver.0, a.sentence.message_id.0, a.sentence.ordinal))
        })
        .collect()
}

fn jaccard(a: &BTreeSet<AnchorKey>, b: &BTreeSet<AnchorKey>) -> f64 {
    let union = a.union(b).count();
    if union == 0 {
        return 1.0;
    }
    a.intersection(b).count() as f64 / union as f64
}

fn check_grid(name: &str, values: &[f64], ok: impl Fn(f64) -> bool) -> Result<()> {
    if values.is_empty() {
        bail!("--{name} needs at least one value");
    }
    if let Some(v) = values.iter().find(|&&v| !v.is_finite() || !ok(v)) {
        bail!("--{name} value {v} is out of range");
    }
    Ok(())
}

/// Runs the grid; rows come back in `lambda_s`, `lambda_t`, `theta` order.
pub fn sweep_rows(args: &SweepArgs) -> Result<(Vec<SweepRow>, CommGraph, Round)> {
    let rate = |v: f64| v > 0.0 && v < 1.0;
    check_grid("lambda-s", &args.lambda_s, rate)?;
    check_grid("lambda-t", &args.lambda_t, rate)?;
    check_grid("theta", &args.theta, |_| true)?;
    let inputs = load_inputs(&args.input)?;
    let t = selection_round(&inputs.store, args.t)?;
    let receivers: Vec<AgentId> = match &args.receivers {
        Some(ids) => ids.iter().map(|&i| check_agent(&inputs.graph, i)).collect::<Result<_>>()?,
        None => inputs.graph.agents().collect(),
    };
    let pools = receivers
        .iter()
        .map(|&r| inputs.store.context_pool(&inputs.graph, r, t))
        .collect::<Result<Vec<_>, _>>()?;

    let base = DecayParams {
        disable_spatial: args.no_spatial,
        disable_temporal: args.no_temporal,
        matcher: matcher(args.input.matcher),
        ..Default::default()
    };
    let select_all = |params: &DecayParams| -> Result<Vec<SelectedContext>> {
        pools
            .iter()
            .map(|pool| {
                select_context(pool, &inputs.graph, &args.input.query, t, params, inputs.provider.as_ref())
                    .map_err(Into::into)
            })
            .collect()
    };
    let reference = anchor_keys(&select_all(&base)?);
    let pool_sentences = pools
        .iter()
        .map(|p| p.messages.iter().map(|m| segment_sentences(m).len()).sum::<usize>())
        .sum();

    let mut cells = Vec::new();
    for &ls in &args.lambda_s {
        for &lt in &args.lambda_t {
            for &th in &args.theta {
                cells.push(DecayParams {
                    lambda_s: ls,
                    lambda_t: lt,
                    theta: th,
                    ..base
                });
            }
        }
    }
    let rows = cells
        .par_iter()
        .map(|params| {
            let keys = anchor_keys(&select_all(params)?);
            Ok(SweepRow {
                lambda_s: params.lambda_s,
                lambda_t: params.lambda_t,
                theta: params.theta,
                anchors: keys.len(),
                pool_sentences,
                jaccard_vs_default: jaccard(&keys, &reference),
            })
        })
        .collect::<Result<Vec<_>>>()?;

    for chunk in rows.chunks(args.theta.len()) {
        let mut by_theta: Vec<&SweepRow> = chunk.iter().collect();
        by_theta.sort_by(|a, b| a.theta.total_cmp(&b.theta));
        for w in by_theta.windows(2) {
            if w[1].anchors > w[0].anchors {
                bail!(
                    "anchor count rose from {} to {} as theta went {} -> {} (lambda_s {}, lambda_t {})",
                    w[0].anchors,
                    w[1].anchors,
                    w[0].theta,
                    w[1].theta,
                    w[0].lambda_s,
                    w[0].lambda_t
                );
            }
        }
    }
    Ok((rows, inputs.graph, t))
}

fn join(values: &[f64]) -> String {
    values.iter().map(f64::to_string).collect::<Vec<_>>().join(",")
}

pub fn cmd_sweep(args: &SweepArgs) -> Result<String> {
    let (rows, graph, t) = sweep_rows(args)?;
    let mut out = format!(
        "# transcript={} graph={} graph_seed={} query={:?} t={} matcher={} no_spatial={} no_temporal={} lambda_s={} lambda_t={} theta={}\n",
        args.input.transcript.display(),
        args.input.graph.display(),
        graph.seed(),
        args.input.query,
        t.get(),
        args.input.matcher.to_possible_value().expect("not skipped").get_name(),
        args.no_spatial,
        args.no_temporal,
        join(&args.lambda_s),
        join(&args.lambda_t),
        join(&args.theta),
    );
    out.push_str("lambda_s\tlambda_t\ttheta\tanchors\tpool_sentences\tjaccard_vs_default\n");
    for r in &rows {
        out.push_str(&format!(
            "{}\t{}\t{}\t{}\t{}\t{:.6}\n",
            r.lambda_s, r.lambda_t, r.theta, r.anchors, r.pool_sentences, r.jaccard_vs_default
        ));
    }
    if let Some(path) = &args.out {
        write(path, &out)?;
    }
    Ok(out)
}
