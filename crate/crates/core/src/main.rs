use std::fs;
use std::io::{self, Read, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{anyhow, Context, Result};
use clap::{Args, Parser, Subcommand};
use serde::{Deserialize, Serialize};

use claimver::backend::{BackendConfig, CompletionBackend, HttpBackend, MockBackend};
use claimver::embed::{Embedder, HashedBagEmbedder, HttpEmbedder};
use claimver::exec::Execution;
use claimver::kg::{load_kg_with, KgFormat, KnowledgeGraph, LoadOptions, Triplet};
use claimver::linker::link_entities;
use claimver::pipeline::{run_pipeline, PipelineOptions, Stage};
use claimver::prompt::build_datagen_prompt;
use claimver::report::{render, RenderFormat};
use claimver::retrieval::{retrieve, RetrievalConfig};
use claimver::scoring::ScoringConfig;

const EXIT_INPUT: u8 = 2;
const EXIT_BACKEND: u8 = 3;
const EXIT_PARSE: u8 = 4;

#[derive(Parser)]
#[command(name = "claimver", version, about = "Verify text claims against a triplet knowledge graph")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Split a text into claims, attribute them to graph evidence and score it.
    Verify(VerifyArgs),
    /// Emit span-attribution prompts (and responses, given a backend) as JSONL.
    Datagen(DatagenArgs),
}

#[derive(Args)]
struct KgArgs {
    /// Triplet file.
    #[arg(long)]
    kg: PathBuf,
    #[arg(long, default_value = "tsv")]
    kg_format: KgFormat,
    /// Companion file with node descriptions and aliases.
    #[arg(long)]
    kg_nodes: Option<PathBuf>,
    /// Skip malformed rows instead of failing.
    #[arg(long)]
    lenient: bool,
}

#[derive(Args)]
struct BackendArgs {
    /// Base URL of an OpenAI-compatible endpoint, e.g. http://localhost:8000/v1
    #[arg(long)]
    backend_url: Option<String>,
    #[arg(long, default_value = "default")]
    model: String,
    /// JSON object mapping prompt hashes to canned responses; replaces the HTTP backend.
    #[arg(long, conflicts_with = "backend_url")]
    mock_responses: Option<PathBuf>,
    #[arg(long, default_value_t = 60)]
    timeout_secs: u64,
    #[arg(long, default_value_t = 3)]
    max_retries: u32,
}

#[derive(Args)]
struct VerifyArgs {
    #[command(flatten)]
    kg: KgArgs,
    /// Input text file, or `-` for stdin.
    #[arg(long, default_value = "-")]
    input: String,
    #[command(flatten)]
    backend: BackendArgs,
    /// Embedding endpoint base URL; without it a hashed bag-of-tokens embedder is used.
    #[arg(long)]
    embed_url: Option<String>,
    #[arg(long)]
    embed_model: Option<String>,
    #[arg(long, default_value_t = 0.5)]
    alpha: f64,
    #[arg(long, default_value_t = 0.5)]
    beta: f64,
    /// Slope applied to negative attribution sums.
    #[arg(long, default_value_t = 3.0)]
    gamma: f64,
    #[arg(long, default_value_t = 3)]
    max_hops: usize,
    #[arg(long, default_value_t = 4)]
    max_paths: usize,
    /// Split the input into sentence-aligned chunks of at most this many characters.
    #[arg(long)]
    chunk_chars: Option<usize>,
    #[arg(long, default_value = "json")]
    format: RenderFormat,
    /// Output file; stdout when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Process chunks and claims on one thread.
    #[arg(long)]
    sequential: bool,
}

#[derive(Args)]
struct DatagenArgs {
    #[command(flatten)]
    kg: KgArgs,
    /// JSONL with `full_text` and optional `text_span` per line, or `-` for stdin.
    #[arg(long, default_value = "-")]
    input: String,
    #[command(flatten)]
    backend: BackendArgs,
    #[arg(long, default_value_t = 3)]
    max_hops: usize,
    #[arg(long, default_value_t = 4)]
    max_paths: usize,
    #[arg(long)]
    out: Option<PathBuf>,
}

/// An error tagged with the process exit code it maps to.
struct Failure {
    code: u8,
    error: anyhow::Error,
}

trait ExitWith<T> {
    fn exit_with(self, code: u8) -> Result<T, Failure>;
}

impl<T, E: Into<anyhow::Error>> ExitWith<T> for Result<T, E> {
    fn exit_with(self, code: u8) -> Result<T, Failure> {
        self.map_err(|e| Failure { code, error: e.into() })
    }
}

fn read_input(input: &str) -> Result<String> {
    if input == "-" {
        let mut s = String::new();
        io::stdin().read_to_string(&mut s).context("reading stdin")?;
        Ok(s)
    } else {
        fs::read_to_string(input).with_context(|| format!("reading {input}"))
    }
}

fn write_output(out: Option<&Path>, content: &str) -> Result<()> {
    match out {
        Some(path) => fs::write(path, content).with_context(|| format!("writing {}", path.display())),
        None => {
            let mut stdout = io::stdout().lock();
            stdout.write_all(content.as_bytes())?;
            stdout.flush()?;
            Ok(())
        }
    }
}

fn load_graph(args: &KgArgs) -> Result<KnowledgeGraph> {
    let opts = LoadOptions { node_file: args.kg_nodes.clone(), lenient: args.lenient };
    let (kg, report) =
        load_kg_with(&args.kg, args.kg_format, &opts).with_context(|| format!("loading {}", args.kg.display()))?;
    for r in &report.rejected {
        eprintln!("warning: skipped {}:{}: {}", r.file.display(), r.line, r.reason);
    }
    for w in &report.warnings {
        eprintln!("warning: {w}");
    }
    Ok(kg)
}

fn backend_config(args: &BackendArgs, url: &str) -> Result<BackendConfig> {
    let mut cfg = BackendConfig::from_env(url, args.model.clone());
    cfg.timeout = std::time::Duration::from_secs(args.timeout_secs);
    cfg.max_retries = args.max_retries;
    cfg.validate()?;
    Ok(cfg)
}

fn make_backend(args: &BackendArgs) -> Result<Option<Box<dyn CompletionBackend>>> {
    if let Some(path) = &args.mock_responses {
        return Ok(Some(Box::new(MockBackend::from_file(path)?)));
    }
    match &args.backend_url {
        Some(url) => Ok(Some(Box::new(HttpBackend::new(backend_config(args, url)?)?))),
        None => Ok(None),
    }
}

fn verify(args: VerifyArgs) -> Result<(), Failure> {
    let kg = load_graph(&args.kg).exit_with(EXIT_INPUT)?;
    let text = read_input(&args.input).exit_with(EXIT_INPUT)?;
    let text = text.trim_end();
    let backend = make_backend(&args.backend)
        .exit_with(EXIT_INPUT)?
        .ok_or_else(|| anyhow!("either --backend-url or --mock-responses is required"))
        .exit_with(EXIT_INPUT)?;
    let embedder: Box<dyn Embedder> = match &args.embed_url {
        Some(url) => {
            let mut cfg = backend_config(&args.backend, url).exit_with(EXIT_INPUT)?;
            if let Some(m) = &args.embed_model {
                cfg.model = m.clone();
            }
            Box::new(HttpEmbedder::new(cfg).exit_with(EXIT_INPUT)?)
        }
        None => Box::new(HashedBagEmbedder::default()),
    };

    let opts = PipelineOptions {
        retrieval: RetrievalConfig { max_hops: args.max_hops, max_paths_per_pair: args.max_paths },
        scoring: ScoringConfig { alpha: args.alpha, beta: args.beta, gamma_neg: args.gamma, ..Default::default() },
        chunk_chars: args.chunk_chars,
        exec: if args.sequential { Execution::Sequential } else { Execution::default() },
    };
    let report = run_pipeline(&kg, text, backend.as_ref(), embedder.as_ref(), &[], &opts).map_err(|e| {
        for d in &e.diagnostics {
            eprintln!("diagnostic: {d}");
        }
        let code = match e.stage {
            Stage::Config | Stage::Preprocess | Stage::Retrieval => EXIT_INPUT,
            Stage::Backend | Stage::Scoring => EXIT_BACKEND,
            Stage::Parse => EXIT_PARSE,
        };
        Failure { code, error: e.into() }
    })?;
    write_output(args.out.as_deref(), &render(&report, args.format)).exit_with(EXIT_INPUT)
}

#[derive(Deserialize)]
struct DatagenInput {
    full_text: String,
    #[serde(default)]
    text_span: Option<String>,
}

#[derive(Serialize)]
struct DatagenRecord<'a> {
    full_text: &'a str,
    text_span: &'a str,
    triplets: Vec<String>,
    prompt: String,
    prompt_hash: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    response: Option<String>,
}

fn datagen(args: DatagenArgs) -> Result<(), Failure> {
    let kg = load_graph(&args.kg).exit_with(EXIT_INPUT)?;
    let input = read_input(&args.input).exit_with(EXIT_INPUT)?;
    let backend = make_backend(&args.backend).exit_with(EXIT_INPUT)?;
    let cfg = RetrievalConfig { max_hops: args.max_hops, max_paths_per_pair: args.max_paths };
    cfg.validate().exit_with(EXIT_INPUT)?;

    let mut out = String::new();
    for (i, line) in input.lines().enumerate().filter(|(_, l)| !l.trim().is_empty()) {
        let item: DatagenInput =
            serde_json::from_str(line).with_context(|| format!("input line {}", i + 1)).exit_with(EXIT_INPUT)?;
        let span = item.text_span.as_deref().unwrap_or(&item.full_text);
        let seeds: Vec<_> = link_entities(&kg, &item.full_text).into_iter().map(|e| e.node).collect();
        let triplets: Vec<Triplet> = retrieve(&kg, &seeds, &cfg).exit_with(EXIT_INPUT)?.triplets;
        let prompt = build_datagen_prompt(&item.full_text, span, &triplets)
            .with_context(|| format!("input line {}", i + 1))
            .exit_with(EXIT_INPUT)?;
        let response = match &backend {
            Some(b) => Some(b.complete(&prompt).exit_with(EXIT_BACKEND)?),
            None => None,
        };
        let record = DatagenRecord {
            full_text: &item.full_text,
            text_span: span,
            triplets: triplets.iter().map(Triplet::render).collect(),
            prompt: prompt.text(),
            prompt_hash: prompt.hash(),
            response,
        };
        out.push_str(&serde_json::to_string(&record).expect("record serializes"));
        out.push('\n');
    }
    write_output(args.out.as_deref(), &out).exit_with(EXIT_INPUT)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Verify(args) => verify(args),
        Command::Datagen(args) => datagen(args),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {:#}", f.error);
            ExitCode::from(f.code)
        }
    }
}
