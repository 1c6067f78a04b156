use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use rex_forge::batch::Compiler;
use rex_forge::config::{existing, required, RunConfig, Settings};
use rex_forge::error::ForgeError;
use rex_forge::formats::{self, read_jsonl_lines};
use rex_forge::{eval, gradcheck, sample, stats};

#[derive(Parser)]
#[command(
    name = "rex-forge",
    version,
    about = "Compile and evaluate grounded reasoning explanations"
)]
struct Cli {
    /// TOML file with default settings (falls back to $REX_FORGE_CONFIG).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Execute programs and write grounded explanations as JSONL.
    Compile(CompileArgs),
    /// Score predicted explanations against references.
    Eval(EvalArgs),
    /// Operation and grounded-category distributions as CSV.
    Stats(StatsArgs),
    /// Stratified subset of a program file by reasoning type.
    Sample(SampleArgs),
    /// Compare analytic decoder gradients with finite differences.
    CheckGrads(CheckGradsArgs),
}

#[derive(Args)]
struct CompileArgs {
    #[arg(long)]
    scenes: Option<PathBuf>,
    #[arg(long)]
    regions: Option<PathBuf>,
    #[arg(long)]
    programs: Option<PathBuf>,
    #[arg(long)]
    templates: Option<PathBuf>,
    #[arg(long)]
    mapping: Option<PathBuf>,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    min_iou: Option<f64>,
    #[arg(long, value_parser = ["universal", "existential"])]
    quantifier: Option<String>,
    #[arg(long, value_parser = ["drop-token", "fail"])]
    on_miss: Option<String>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    workers: Option<usize>,
}

#[derive(Args)]
struct EvalArgs {
    predictions: PathBuf,
    references: PathBuf,
    #[arg(long)]
    regions: Option<PathBuf>,
    /// Where to write the JSON report; the table always goes to stdout.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct StatsArgs {
    explanations: PathBuf,
    #[arg(long, default_value_t = 20)]
    top_k: usize,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct SampleArgs {
    #[arg(long)]
    programs: Option<PathBuf>,
    #[arg(long)]
    fraction: Option<f64>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct CheckGradsArgs {
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long, default_value_t = 50)]
    instances: usize,
    #[arg(long, default_value_t = 1e-4)]
    tolerance: f64,
}

fn emit(out: Option<&Path>, text: &str) -> Result<(), ForgeError> {
    match out {
        Some(path) => std::fs::write(path, text).map_err(|source| ForgeError::Io {
            path: path.to_path_buf(),
            source,
        }),
        None => {
            let mut stdout = std::io::stdout().lock();
            stdout
                .write_all(text.as_bytes())
                .and_then(|_| stdout.flush())
                .map_err(|source| ForgeError::Io {
                    path: "<stdout>".into(),
                    source,
                })
        }
    }
}

fn compile(file: Settings, args: CompileArgs) -> Result<ExitCode, ForgeError> {
    let flags = Settings {
        scenes: args.scenes,
        regions: args.regions,
        programs: args.programs,
        templates: args.templates,
        mapping: args.mapping,
        out: args.out,
        min_iou: args.min_iou,
        quantifier: args.quantifier,
        on_miss: args.on_miss,
        seed: args.seed,
        workers: args.workers,
        ..Settings::default()
    };
    let cfg = RunConfig::resolve(file.overlay(flags))?;
    let compiler = Compiler {
        scenes: formats::load_scenes(&cfg.scenes)?,
        regions: formats::load_regions(&cfg.regions)?,
        templates: formats::load_templates(cfg.templates.as_deref())?,
        mapping: formats::load_mapping(cfg.mapping.as_deref())?,
        exec: cfg.exec_config(),
        explain: cfg.explain_config(),
    };
    let lines = read_jsonl_lines(&cfg.programs)?;
    log::info!("compiling {} programs on {} workers", lines.len(), cfg.workers);
    let output = compiler.compile_lines(&lines, cfg.workers);
    emit(cfg.out.as_deref(), &output.to_jsonl())?;
    eprint!("{}", output.summary.render());
    Ok(ExitCode::SUCCESS)
}

fn evaluate(file: Settings, args: EvalArgs) -> Result<ExitCode, ForgeError> {
    let regions_dir = required(args.regions.or(file.regions), "regions")?;
    let predictions = formats::load_explanations(&existing(args.predictions)?)?;
    let references = formats::load_explanations(&existing(args.references)?)?;
    let regions = formats::load_regions(&regions_dir)?;
    let report = eval::run_eval(predictions, references, &regions)?;
    if let Some(out) = args.out.or(file.out) {
        let json = serde_json::to_string_pretty(&report).expect("report serializes") + "\n";
        emit(Some(&out), &json)?;
    }
    emit(None, &report.to_table())?;
    Ok(ExitCode::SUCCESS)
}

fn corpus_stats(file: Settings, args: StatsArgs) -> Result<ExitCode, ForgeError> {
    let explanations = formats::load_explanations(&existing(args.explanations)?)?;
    let report = stats::corpus_stats(&explanations, args.top_k);
    emit(args.out.or(file.out).as_deref(), &report.to_csv())?;
    Ok(ExitCode::SUCCESS)
}

fn subsample(file: Settings, args: SampleArgs) -> Result<ExitCode, ForgeError> {
    let programs = required(args.programs.or(file.programs), "programs")?;
    let fraction = args
        .fraction
        .or(file.fraction)
        .ok_or_else(|| ForgeError::Config("--fraction is required".into()))?;
    let seed = args.seed.or(file.seed).unwrap_or(0);
    let lines = read_jsonl_lines(&programs)?;
    let types = lines
        .iter()
        .map(|(n, text)| {
            sample::reasoning_type_of(text).map_err(|source| ForgeError::Json {
                path: programs.clone(),
                line: Some(*n),
                source,
            })
        })
        .collect::<Result<Vec<_>, _>>()?;
    let picked = sample::stratified_sample(&types, fraction, seed)?;
    let mut out = String::new();
    for i in &picked {
        out.push_str(&lines[*i].1);
        out.push('\n');
    }
    emit(args.out.or(file.out).as_deref(), &out)?;
    log::info!("kept {} of {} programs", picked.len(), lines.len());
    Ok(ExitCode::SUCCESS)
}

fn check_grads(file: Settings, args: CheckGradsArgs) -> Result<ExitCode, ForgeError> {
    let seed = args.seed.or(file.seed).unwrap_or(0);
    let results = gradcheck::run(seed, args.instances)?;
    emit(None, &gradcheck::render(seed, &results, args.tolerance))?;
    if gradcheck::max_rel_error(&results) < args.tolerance {
        Ok(ExitCode::SUCCESS)
    } else {
        Ok(ExitCode::FAILURE)
    }
}

fn run(cli: Cli) -> Result<ExitCode, ForgeError> {
    let file = Settings::load(cli.config.as_deref())?;
    match cli.command {
        Command::Compile(a) => compile(file, a),
        Command::Eval(a) => evaluate(file, a),
        Command::Stats(a) => corpus_stats(file, a),
        Command::Sample(a) => subsample(file, a),
        Command::CheckGrads(a) => check_grads(file, a),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match run(Cli::parse()) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}
