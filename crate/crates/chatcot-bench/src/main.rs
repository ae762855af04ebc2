//! `chatcot` CLI: run an evaluation sweep, recompute metrics from
//! persisted traces, or pretty-print one conversation.

use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::sync::Arc;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};

use chatcot::{
    load_annotated_dialogues, read_jsonl, ChatBackend, DatasetKind, EngineConfig, LiveBackend,
    LiveConfig, MemoryConfig, ScriptedBackend, ScriptedPolicy,
};
use chatcot_bench::config::FileConfig;
use chatcot_bench::{
    load_dataset, render_report, to_exemplars, EquivOptions, Harness, RunnerOptions, Strategy,
};

#[derive(Parser)]
#[command(name = "chatcot", about = "Tool-augmented multi-turn reasoning harness")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Evaluate a strategy over a dataset and stream traces to JSONL.
    Run(RunArgs),
    /// Recompute metrics from a persisted trace file.
    Report {
        #[arg(long)]
        traces: PathBuf,
    },
    /// Pretty-print one problem's conversation from a trace file.
    Inspect {
        #[arg(long)]
        traces: PathBuf,
        #[arg(long)]
        id: String,
    },
}

#[derive(Args)]
struct RunArgs {
    #[arg(long)]
    dataset: Option<PathBuf>,
    /// math | hotpot
    #[arg(long)]
    kind: Option<String>,
    /// chatcot | cot | cot-tool | cot-retri
    #[arg(long)]
    strategy: Option<String>,
    /// live | scripted
    #[arg(long)]
    backend: Option<String>,
    /// Scripted-policy JSON file (scripted backend).
    #[arg(long)]
    policy: Option<PathBuf>,
    /// Self-consistency sample count.
    #[arg(long)]
    k: Option<usize>,
    #[arg(long)]
    temperature: Option<f64>,
    #[arg(long)]
    max_turns: Option<usize>,
    #[arg(long)]
    max_feedback: Option<usize>,
    /// Retrieval exemplar count (n_r).
    #[arg(long)]
    n_retrieval: Option<usize>,
    /// Annotated dialogue count (n_a).
    #[arg(long)]
    n_annotated: Option<usize>,
    #[arg(long)]
    trace_out: Option<PathBuf>,
    #[arg(long)]
    workers: Option<usize>,
    /// Training exemplar file for retrieval and baseline shots.
    #[arg(long)]
    train: Option<PathBuf>,
    /// Annotated-dialogue JSON file.
    #[arg(long)]
    annotated: Option<PathBuf>,
    /// Evaluate only the first N problems.
    #[arg(long)]
    limit: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    /// Baseline shot count (defaults: 5 math, 4 hotpot).
    #[arg(long)]
    shots: Option<usize>,
    /// Correct the task-knowledge template's spelling for live runs.
    #[arg(long)]
    fix_typos: bool,
    /// Documents per retrieval batch.
    #[arg(long)]
    retrieval_k: Option<usize>,
    #[arg(long)]
    max_new_tokens: Option<usize>,
    #[arg(long)]
    conclude_counts_as_turn: bool,
    /// Live endpoint URL.
    #[arg(long)]
    endpoint: Option<String>,
    /// Live model name.
    #[arg(long)]
    model: Option<String>,
    /// TOML config file mirroring these flags.
    #[arg(long)]
    config: Option<PathBuf>,
}

fn parse_kind(s: &str) -> Result<DatasetKind> {
    match s.to_lowercase().as_str() {
        "math" => Ok(DatasetKind::MathStyle),
        "hotpot" => Ok(DatasetKind::HotpotStyle),
        other => bail!("unknown dataset kind '{other}' (expected math|hotpot)"),
    }
}

fn default_annotated_path(kind: DatasetKind) -> PathBuf {
    match kind {
        DatasetKind::MathStyle => PathBuf::from("data/annotated_math.json"),
        DatasetKind::HotpotStyle => PathBuf::from("data/annotated_hotpot.json"),
    }
}

fn run(args: RunArgs) -> Result<()> {
    let file_cfg = match &args.config {
        Some(path) => FileConfig::load(path).map_err(|e| anyhow::anyhow!(e))?,
        None => {
            let default = Path::new("chatcot.toml");
            if default.exists() {
                FileConfig::load(default).map_err(|e| anyhow::anyhow!(e))?
            } else {
                FileConfig::default()
            }
        }
    };

    let dataset_path = args
        .dataset
        .or(file_cfg.run.dataset)
        .context("--dataset is required")?;
    let kind = parse_kind(
        &args
            .kind
            .or(file_cfg.run.kind)
            .context("--kind is required")?,
    )?;
    let strategy = Strategy::from_str(
        &args
            .strategy
            .or(file_cfg.run.strategy)
            .unwrap_or_else(|| "chatcot".into()),
    )
    .map_err(|e| anyhow::anyhow!(e))?;
    let backend_kind = args
        .backend
        .or(file_cfg.run.backend)
        .unwrap_or_else(|| "scripted".into());

    let k = args.k.or(file_cfg.run.k).unwrap_or(1);
    // single paths default greedy; self-consistency needs diversity
    let temperature = args
        .temperature
        .or(file_cfg.run.temperature)
        .unwrap_or(if k > 1 { 0.7 } else { 0.0 });

    let (default_n_r, default_n_a, default_shots) = match kind {
        DatasetKind::MathStyle => (2, 3, 5),
        DatasetKind::HotpotStyle => (2, 2, 4),
    };

    let memory = MemoryConfig {
        n_r: args.n_retrieval.or(file_cfg.run.n_retrieval).unwrap_or(default_n_r),
        n_a: args.n_annotated.or(file_cfg.run.n_annotated).unwrap_or(default_n_a),
        fix_typos: args.fix_typos || file_cfg.run.fix_typos.unwrap_or(false),
    };
    let engine = EngineConfig {
        max_turns: args.max_turns.or(file_cfg.run.max_turns).unwrap_or(12),
        max_feedback: args.max_feedback.or(file_cfg.run.max_feedback).unwrap_or(5),
        memory,
        temperature,
        max_new_tokens: args
            .max_new_tokens
            .or(file_cfg.run.max_new_tokens)
            .unwrap_or(512),
        retrieval_k: args.retrieval_k.or(file_cfg.run.retrieval_k).unwrap_or(3),
        conclude_counts_as_turn: args.conclude_counts_as_turn
            || file_cfg.run.conclude_counts_as_turn.unwrap_or(false),
    };

    let backend: Arc<dyn ChatBackend> = match backend_kind.to_lowercase().as_str() {
        "scripted" => {
            let policy_path = args
                .policy
                .or(file_cfg.run.policy)
                .context("--policy is required with the scripted backend")?;
            let policy = ScriptedPolicy::load(&policy_path).map_err(|e| anyhow::anyhow!(e))?;
            Arc::new(ScriptedBackend::new(policy))
        }
        "live" => {
            let endpoint = args
                .endpoint
                .or(file_cfg.live.endpoint)
                .or_else(|| std::env::var("CHATCOT_API_BASE").ok())
                .context("live backend needs --endpoint, [live].endpoint, or CHATCOT_API_BASE")?;
            let model = args
                .model
                .or(file_cfg.live.model)
                .or_else(|| std::env::var("CHATCOT_MODEL").ok())
                .unwrap_or_else(|| "gpt-3.5-turbo".into());
            let mut live = LiveConfig::new(endpoint, model);
            if let Some(env_name) = file_cfg.live.api_key_env {
                live.api_key_env = env_name;
            }
            Arc::new(LiveBackend::new(live))
        }
        other => bail!("unknown backend '{other}' (expected live|scripted)"),
    };

    let problems = {
        let mut all = load_dataset(&dataset_path, kind)?;
        if let Some(limit) = args.limit.or(file_cfg.run.limit) {
            all.truncate(limit);
        }
        all
    };
    if problems.is_empty() {
        bail!("dataset {} is empty", dataset_path.display());
    }

    let train = match args.train.or(file_cfg.run.train) {
        Some(path) => to_exemplars(&load_dataset(&path, kind)?),
        None => Vec::new(),
    };
    let annotated_path = args
        .annotated
        .or(file_cfg.run.annotated)
        .unwrap_or_else(|| default_annotated_path(kind));
    let annotated = if engine.memory.n_a > 0 && strategy == Strategy::ChatCot {
        load_annotated_dialogues(&annotated_path).map_err(|e| anyhow::anyhow!(e))?
    } else {
        Vec::new()
    };

    let options = RunnerOptions {
        strategy,
        k,
        engine,
        shots: args.shots.or(file_cfg.run.shots).unwrap_or(default_shots),
        evidence_k: 3,
        seed: args.seed.or(file_cfg.run.seed).unwrap_or(0),
        workers: args.workers.or(file_cfg.run.workers).unwrap_or(1),
        index_embeds_solution: true,
        tool_overrides: file_cfg.tools,
    };

    let harness = Harness::new(backend, train, annotated, options)?;
    let (metrics, traces) = harness.evaluate(&problems);

    let trace_out = args
        .trace_out
        .or(file_cfg.run.trace_out)
        .unwrap_or_else(|| PathBuf::from("traces.jsonl"));
    let mut file = std::fs::File::create(&trace_out)
        .with_context(|| format!("cannot create {}", trace_out.display()))?;
    chatcot::write_jsonl(&mut file, &traces)?;

    println!("{}", render_report(&traces, EquivOptions::default()));
    println!(
        "evaluated {} problems; accuracy {:.3}; traces -> {}",
        metrics.n_problems,
        metrics.accuracy,
        trace_out.display()
    );
    Ok(())
}

fn report(traces_path: &Path) -> Result<()> {
    let file = std::fs::File::open(traces_path)
        .with_context(|| format!("cannot open {}", traces_path.display()))?;
    let traces = read_jsonl(std::io::BufReader::new(file)).map_err(|e| anyhow::anyhow!(e))?;
    if traces.is_empty() {
        bail!("no traces in {}", traces_path.display());
    }
    println!("{}", render_report(&traces, EquivOptions::default()));
    Ok(())
}

fn inspect(traces_path: &Path, id: &str) -> Result<()> {
    let file = std::fs::File::open(traces_path)
        .with_context(|| format!("cannot open {}", traces_path.display()))?;
    let traces = read_jsonl(std::io::BufReader::new(file)).map_err(|e| anyhow::anyhow!(e))?;
    let trace = traces
        .iter()
        .find(|t| t.problem_id == id)
        .with_context(|| format!("no trace with problem id '{id}'"))?;
    println!("problem: {}", trace.problem_id);
    println!(
        "strategy: {} | answer: {:?} | gold: {:?} | tokens: {}",
        trace.strategy, trace.answer, trace.gold, trace.generated_tokens
    );
    for m in &trace.messages {
        println!("[{:>15}] {:>5}: {}", m.phase.as_str(), m.role.as_str(), m.content);
    }
    if !trace.tool_calls.is_empty() {
        println!("tool calls:");
        for c in &trace.tool_calls {
            println!("  {} -> {}", c.tool, if c.ok { "ok" } else { "error" });
        }
    }
    Ok(())
}

fn main() -> Result<()> {
    tracing_subscriber::fmt()
        .with_env_filter(
            tracing_subscriber::EnvFilter::try_from_default_env()
                .unwrap_or_else(|_| tracing_subscriber::EnvFilter::new("warn")),
        )
        .with_writer(std::io::stderr)
        .init();
    let cli = Cli::parse();
    match cli.command {
        Command::Run(args) => run(args),
        Command::Report { traces } => report(&traces),
        Command::Inspect { traces, id } => inspect(&traces, &id),
    }
}
