//! `jigsaw`: generate puzzle datasets, run baseline agents, score and
//! evaluate responses, analyze training transcripts, and serve the scoring
//! API.
//!
//! Exit codes: 0 on success, 2 on invalid configuration or input data, 3 on
//! filesystem errors. Every flag can also be set through the environment
//! variable shown in `--help` (prefix `JIGSAW_`).

use std::fs;
use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use jigsaw_core::harness::analysis::{analyze, KeywordSpec, DEFAULT_ALPHA};
use jigsaw_core::harness::dataset::{build_dataset, Corpus, DatasetConfig, MixEntry};
use jigsaw_core::harness::manifest::{load_responses, save_responses, to_jsonl};
use jigsaw_core::harness::{evaluate, oracle_agent, random_agent, Manifest, ResponseRecord};
use jigsaw_core::imaging::MaskConfig;
use jigsaw_core::rng::{derive_seed, seeded, stream_id};
use jigsaw_core::taskgen::{BoxAnswerSemantics, DEFAULT_PATCH_SCALE};
use jigsaw_core::{GridSpec, Mode, TaskKind};
use jigsaw_service::{AppState, ServiceConfig, DEFAULT_BATCH_CAP};

#[derive(Debug, Parser)]
#[command(name = "jigsaw", version, about = "Jigsaw puzzle environment for rule-based visual RL")]
struct Cli {
    /// Worker threads for parallel item processing (default: all cores).
    #[arg(long, global = true, env = "JIGSAW_JOBS")]
    jobs: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Build a dataset (images and manifest.jsonl) from an image corpus.
    Generate(GenerateArgs),
    /// Answer every manifest question with a baseline agent.
    Respond(RespondArgs),
    /// Score responses and print mean rewards.
    Score(ScoreArgs),
    /// Score responses and print the accuracy table.
    Eval(EvalArgs),
    /// Keyword frequency and completion length per training step.
    Analyze(AnalyzeArgs),
    /// Run the HTTP scoring service.
    Serve(ServeArgs),
}

#[derive(Debug, Args)]
struct GenerateArgs {
    #[arg(long, env = "JIGSAW_CORPUS")]
    corpus: PathBuf,
    #[arg(long, env = "JIGSAW_OUT")]
    out: PathBuf,
    /// Task kinds, comma separated.
    #[arg(long, value_delimiter = ',', default_value = "pair", env = "JIGSAW_KIND")]
    kind: Vec<TaskKind>,
    /// Grid sizes such as 2x1, comma separated.
    #[arg(long, value_delimiter = ',', default_value = "2x1", env = "JIGSAW_GRID")]
    grid: Vec<GridSpec>,
    /// think or nothink.
    #[arg(long, default_value = "think", env = "JIGSAW_MODE")]
    mode: Mode,
    #[arg(long, default_value_t = 1000, env = "JIGSAW_COUNT")]
    count: usize,
    #[arg(long, default_value_t = 0, env = "JIGSAW_SEED")]
    seed: u64,
    /// Transpose each non-square puzzle with probability 1/2.
    #[arg(long, env = "JIGSAW_TRANSPOSE50")]
    transpose50: bool,
    /// Per-grid shares, e.g. "3x1:0.5,4x1:0.5"; replaces --grid.
    #[arg(long, value_parser = parse_mix, env = "JIGSAW_MIX")]
    mix: Option<Vec<MixEntry>>,
    /// Gap in pixels between shuffled patches; 0 disables masking.
    #[arg(long, default_value_t = 0, env = "JIGSAW_MASK_GAP")]
    mask_gap: u32,
    /// Box patch side as a fraction of the region side.
    #[arg(long, default_value_t = DEFAULT_PATCH_SCALE, env = "JIGSAW_PATCH_SCALE")]
    patch_scale: f64,
    #[arg(long, value_enum, default_value_t = BoxSemanticsArg::OriginOfOccupant, env = "JIGSAW_BOX_SEMANTICS")]
    box_semantics: BoxSemanticsArg,
    #[arg(long, default_value = "", env = "JIGSAW_ID_PREFIX")]
    id_prefix: String,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum BoxSemanticsArg {
    OriginOfOccupant,
    LocationOfDisplaced,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum Agent {
    Random,
    Oracle,
}

#[derive(Debug, Args)]
struct RespondArgs {
    #[arg(long, env = "JIGSAW_MANIFEST")]
    manifest: PathBuf,
    #[arg(long, value_enum)]
    agent: Agent,
    #[arg(long, default_value_t = 0, env = "JIGSAW_SEED")]
    seed: u64,
    /// Responses file (JSONL).
    #[arg(long, env = "JIGSAW_OUT")]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct ScoreArgs {
    #[arg(long, env = "JIGSAW_MANIFEST")]
    manifest: PathBuf,
    #[arg(long, env = "JIGSAW_RESPONSES")]
    responses: PathBuf,
    /// Per-question scores (JSONL).
    #[arg(long, env = "JIGSAW_OUT")]
    out: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct EvalArgs {
    #[command(flatten)]
    score: ScoreArgs,
    /// Also write the text table here.
    #[arg(long, env = "JIGSAW_TABLE")]
    table: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct AnalyzeArgs {
    #[arg(long, env = "JIGSAW_RESPONSES")]
    responses: PathBuf,
    /// Use the built-in backtracking and backward-chaining keywords.
    #[arg(long, conflicts_with = "keywords")]
    keywords_default: bool,
    /// Keyword spec as JSON: {"groups": [{"name": .., "terms": [..]}]}.
    #[arg(long, env = "JIGSAW_KEYWORDS")]
    keywords: Option<PathBuf>,
    /// Exponential smoothing factor in (0, 1].
    #[arg(long, default_value_t = DEFAULT_ALPHA, env = "JIGSAW_ALPHA")]
    alpha: f64,
    /// Full report as JSON.
    #[arg(long, env = "JIGSAW_OUT")]
    out: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct ServeArgs {
    #[arg(long, default_value = "127.0.0.1", env = "JIGSAW_HOST")]
    host: String,
    #[arg(long, default_value_t = 8080, env = "JIGSAW_PORT")]
    port: u16,
    #[arg(long, env = "JIGSAW_MANIFEST")]
    manifest: Option<PathBuf>,
    #[arg(long, default_value_t = DEFAULT_BATCH_CAP, env = "JIGSAW_BATCH_CAP")]
    batch_cap: usize,
    /// Require this bearer token on /v1 routes.
    #[arg(long, env = "JIGSAW_TOKEN", hide_env_values = true)]
    token: Option<String>,
    /// Where datasets built through the API are written.
    #[arg(long, default_value = "jigsaw-data", env = "JIGSAW_DATA_DIR")]
    data_dir: PathBuf,
}

fn parse_mix(text: &str) -> Result<Vec<MixEntry>, String> {
    text.split(',')
        .map(|part| {
            let (grid, ratio) = part
                .split_once(':')
                .ok_or_else(|| format!("`{part}` is not GRID:RATIO"))?;
            Ok(MixEntry {
                grid: grid.trim().parse().map_err(|e| format!("{e}"))?,
                ratio: ratio.trim().parse().map_err(|_| format!("bad ratio `{ratio}`"))?,
            })
        })
        .collect()
}

enum CliError {
    Config(String),
    Io(String),
}

impl From<jigsaw_core::Error> for CliError {
    fn from(e: jigsaw_core::Error) -> Self {
        match e {
            jigsaw_core::Error::Io { .. } | jigsaw_core::Error::Image { .. } => CliError::Io(e.to_string()),
            _ => CliError::Config(e.to_string()),
        }
    }
}

fn io_error(path: &Path, e: std::io::Error) -> CliError {
    CliError::Io(format!("{}: {e}", path.display()))
}

fn write_file(path: &Path, text: &str) -> Result<(), CliError> {
    fs::write(path, text).map_err(|e| io_error(path, e))
}

fn generate(args: GenerateArgs) -> Result<(), CliError> {
    if args.grid.is_empty() && args.mix.is_none() {
        return Err(CliError::Config("no grid given".into()));
    }
    let cfg = DatasetConfig {
        kinds: args.kind,
        grids: args.grid,
        mode: args.mode,
        count: args.count,
        seed: args.seed,
        transpose_50: args.transpose50,
        mix: args.mix,
        mask: if args.mask_gap == 0 {
            MaskConfig::disabled()
        } else {
            MaskConfig::with_gap(args.mask_gap)
        },
        patch_scale: args.patch_scale,
        box_semantics: match args.box_semantics {
            BoxSemanticsArg::OriginOfOccupant => BoxAnswerSemantics::OriginOfOccupant,
            BoxSemanticsArg::LocationOfDisplaced => BoxAnswerSemantics::LocationOfDisplaced,
        },
        id_prefix: args.id_prefix,
    };
    cfg.validate()?;
    let corpus = Corpus::scan(&args.corpus)?;
    let report = build_dataset(&corpus, &cfg, &args.out)?;
    for s in &report.skipped {
        eprintln!("jigsaw: warning: skipped {}: {}", s.path, s.reason);
    }
    println!(
        "records={} skipped={} manifest={}",
        report.manifest.len(),
        report.skipped.len(),
        report.manifest_path.display()
    );
    Ok(())
}

fn respond(args: RespondArgs) -> Result<(), CliError> {
    let manifest = Manifest::load(&args.manifest)?;
    let stream = stream_id("respond");
    let responses = manifest
        .records
        .iter()
        .enumerate()
        .map(|(i, rec)| {
            let q = rec.question()?;
            let raw = match args.agent {
                Agent::Oracle => oracle_agent(&q),
                Agent::Random => random_agent(&q, &mut seeded(derive_seed(args.seed, stream, i as u64))),
            };
            Ok(ResponseRecord::new(rec.id.clone(), raw))
        })
        .collect::<Result<Vec<_>, jigsaw_core::Error>>()?;
    save_responses(&args.out, &responses)?;
    println!("responses={}", responses.len());
    Ok(())
}

fn load_and_evaluate(args: &ScoreArgs) -> Result<jigsaw_core::harness::EvalReport, CliError> {
    let manifest = Manifest::load(&args.manifest)?;
    let responses = load_responses(&args.responses)?;
    let report = evaluate(&manifest, &responses);
    for id in &report.unknown_ids {
        eprintln!("jigsaw: warning: response for unknown id `{id}` ignored");
    }
    let missing = report.records.iter().filter(|r| r.missing).count();
    if missing > 0 {
        eprintln!("jigsaw: warning: {missing} questions have no response and score 0");
    }
    if let Some(out) = &args.out {
        write_file(out, &to_jsonl(&report.records))?;
    }
    Ok(report)
}

fn score(args: ScoreArgs) -> Result<(), CliError> {
    let report = load_and_evaluate(&args)?;
    let m = report.mean_reward;
    println!(
        "records={} mean_accuracy={} mean_format={} mean_total={}",
        report.records.len(),
        m.accuracy,
        m.format,
        m.total
    );
    Ok(())
}

fn eval(args: EvalArgs) -> Result<(), CliError> {
    let report = load_and_evaluate(&args.score)?;
    let table = report.table.render();
    print!("{table}");
    if let Some(path) = &args.table {
        write_file(path, &table)?;
    }
    Ok(())
}

fn analyze_cmd(args: AnalyzeArgs) -> Result<(), CliError> {
    let spec = match &args.keywords {
        Some(path) => {
            let text = fs::read_to_string(path).map_err(|e| io_error(path, e))?;
            serde_json::from_str(&text).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?
        }
        None => KeywordSpec::default(),
    };
    let responses = load_responses(&args.responses)?;
    let report = analyze(&responses, &spec, args.alpha)?;
    let groups: Vec<&String> = report.keywords.keys().collect();
    let mut header = vec!["step".to_owned(), "responses".to_owned(), "mean_chars".to_owned(), "mean_tokens".to_owned()];
    header.extend(groups.iter().map(|g| g.to_string()));
    println!("{}", header.join("\t"));
    for (i, step) in report.steps.iter().enumerate() {
        let mut row = vec![
            step.to_string(),
            report.responses[i].to_string(),
            format!("{:.2}", report.mean_chars.raw[i]),
            format!("{:.2}", report.mean_tokens.raw[i]),
        ];
        row.extend(groups.iter().map(|g| format!("{:.4}", report.keywords[*g].raw[i])));
        println!("{}", row.join("\t"));
    }
    if let Some(out) = &args.out {
        let json = serde_json::to_string_pretty(&report).expect("report serializes");
        write_file(out, &(json + "\n"))?;
    }
    Ok(())
}

fn serve(args: ServeArgs) -> Result<(), CliError> {
    tracing_subscriber::fmt()
        .with_writer(std::io::stderr)
        .with_env_filter(
            tracing_subscriber::EnvFilter::try_from_default_env()
                .unwrap_or_else(|_| tracing_subscriber::EnvFilter::new("info,tower_http=info")),
        )
        .init();
    let addr: SocketAddr = format!("{}:{}", args.host, args.port)
        .parse()
        .map_err(|e| CliError::Config(format!("bad address: {e}")))?;
    let state = AppState::new(ServiceConfig {
        manifest: args.manifest,
        batch_cap: args.batch_cap,
        token: args.token,
        data_dir: args.data_dir,
    })?;
    let runtime = tokio::runtime::Runtime::new().map_err(|e| CliError::Io(e.to_string()))?;
    runtime
        .block_on(jigsaw_service::run(state, addr))
        .map_err(|e| CliError::Io(format!("{addr}: {e}")))
}

fn run(cli: Cli) -> Result<(), CliError> {
    if let Some(jobs) = cli.jobs {
        if jobs == 0 {
            return Err(CliError::Config("--jobs must be at least 1".into()));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(jobs)
            .build_global()
            .map_err(|e| CliError::Config(e.to_string()))?;
    }
    match cli.command {
        Command::Generate(a) => generate(a),
        Command::Respond(a) => respond(a),
        Command::Score(a) => score(a),
        Command::Eval(a) => eval(a),
        Command::Analyze(a) => analyze_cmd(a),
        Command::Serve(a) => serve(a),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(CliError::Config(msg)) => {
            eprintln!("jigsaw: error: {msg}");
            ExitCode::from(2)
        }
        Err(CliError::Io(msg)) => {
            eprintln!("jigsaw: error: {msg}");
            ExitCode::from(3)
        }
    }
}
