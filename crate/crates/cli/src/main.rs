use std::fs::File;
use std::io::{self, BufRead, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};

use sqlward_core::experiment::{run_experiment, ExperimentConfig};
use sqlward_core::lexer::lex_full;
use sqlward_core::parser::parse_full;
use sqlward_core::server;
use sqlward_core::{
    beam_search, LexOutcome, Mode, ParseOutcome, ScriptedModel, SearchParams, SqlSchema, Timing,
    Vocabulary,
};

#[derive(Parser)]
#[command(name = "sqlward", version, about = "Schema-aware validation of incrementally decoded SQL")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct ModeArg {
    /// Checking mode: off, lex, parse, or parse-guards
    #[arg(long, default_value = "parse-guards")]
    mode: String,
}

impl ModeArg {
    fn parse(&self) -> Result<Mode> {
        self.mode
            .parse()
            .map_err(|e: String| anyhow::anyhow!("{e}"))
    }
}

#[derive(Subcommand)]
enum Command {
    /// Check complete SQL strings read from stdin, one per line
    Validate {
        #[arg(long)]
        schema: PathBuf,
        #[command(flatten)]
        mode: ModeArg,
    },
    /// Run constrained beam search over a scripted model
    Decode {
        #[arg(long)]
        schema: PathBuf,
        #[arg(long)]
        vocab: PathBuf,
        #[arg(long)]
        model: PathBuf,
        #[command(flatten)]
        mode: ModeArg,
        #[arg(long, default_value_t = 4)]
        beam: usize,
        #[arg(long, default_value_t = 4)]
        top_k: usize,
        /// When checks run: incremental or final
        #[arg(long, default_value = "incremental")]
        timing: String,
        #[arg(long, default_value_t = 64)]
        max_length: usize,
    },
    /// Run the ablation sweep and write the report as CSV
    Experiment {
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 40)]
        instances: usize,
        #[arg(long, default_value_t = 1)]
        repetitions: usize,
        /// Record wall-clock per-token latency (breaks CSV determinism)
        #[arg(long)]
        measure_latency: bool,
        /// Output path; stdout when omitted
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Speak the line-delimited JSON protocol on stdin/stdout
    Serve {
        #[arg(long)]
        schema: PathBuf,
        #[arg(long)]
        vocab: PathBuf,
    },
}

fn load_schema(path: &Path) -> Result<SqlSchema> {
    let file = File::open(path).with_context(|| format!("cannot read {}", path.display()))?;
    SqlSchema::load(file).with_context(|| format!("bad schema file {}", path.display()))
}

fn load_vocab(path: &Path) -> Result<Vocabulary> {
    let file = File::open(path).with_context(|| format!("cannot read {}", path.display()))?;
    Vocabulary::load(file).with_context(|| format!("bad vocabulary file {}", path.display()))
}

fn load_model(path: &Path) -> Result<ScriptedModel> {
    let file = File::open(path).with_context(|| format!("cannot read {}", path.display()))?;
    ScriptedModel::load(file).with_context(|| format!("bad model file {}", path.display()))
}

fn validate(schema_path: &Path, mode: &ModeArg) -> Result<ExitCode> {
    let schema = load_schema(schema_path)?;
    let mode = mode.parse()?;
    if mode == Mode::Off {
        bail!("validate requires a checking mode other than off");
    }
    let stdin = io::stdin();
    let stdout = io::stdout();
    let mut out = stdout.lock();
    let mut all_ok = true;
    for line in stdin.lock().lines() {
        let line = line.context("cannot read stdin")?;
        let verdict = match mode {
            Mode::Off => unreachable!(),
            Mode::Lexing => match lex_full(&schema, &line) {
                LexOutcome::Accept(_) => None,
                LexOutcome::Reject { reason, offset } => Some((reason.as_str(), offset)),
            },
            Mode::ParsingNoGuards | Mode::ParsingWithGuards => {
                match parse_full(&schema, &line, mode == Mode::ParsingWithGuards) {
                    ParseOutcome::Complete(_) => None,
                    ParseOutcome::Reject { reason, offset } => Some((reason.as_str(), offset)),
                    ParseOutcome::Accept(_) => unreachable!("full parse cannot stay open"),
                }
            }
        };
        match verdict {
            None => writeln!(out, "accept")?,
            Some((reason, offset)) => {
                all_ok = false;
                writeln!(out, "reject {reason} {offset}")?;
            }
        }
    }
    Ok(if all_ok { ExitCode::SUCCESS } else { ExitCode::from(1) })
}

#[allow(clippy::too_many_arguments)]
fn decode(
    schema_path: &Path,
    vocab_path: &Path,
    model_path: &Path,
    mode: &ModeArg,
    beam: usize,
    top_k: usize,
    timing: &str,
    max_length: usize,
) -> Result<ExitCode> {
    let schema = load_schema(schema_path)?;
    let vocab = load_vocab(vocab_path)?;
    let model = load_model(model_path)?;
    let timing: Timing = timing.parse().map_err(|e: String| anyhow::anyhow!("{e}"))?;
    let params = SearchParams {
        mode: mode.parse()?,
        beam_size: beam,
        k: top_k,
        max_length,
        timing,
        use_cache: true,
    };
    let finished = beam_search(&model, &schema, &vocab, &params)
        .map_err(|e| anyhow::anyhow!("decode failed: {e:?}"))?;
    match finished.first() {
        Some(best) => {
            println!("{}\t{:.6}", best.text.trim(), best.log_score);
            Ok(ExitCode::SUCCESS)
        }
        None => {
            println!("NO-VALID-HYPOTHESIS");
            Ok(ExitCode::from(1))
        }
    }
}

fn experiment(
    seed: u64,
    instances: usize,
    repetitions: usize,
    measure_latency: bool,
    out: Option<&Path>,
) -> Result<ExitCode> {
    let config = ExperimentConfig {
        seed,
        instances,
        repetitions,
        measure_latency,
        ..ExperimentConfig::default()
    };
    let csv = run_experiment(&config).to_csv();
    match out {
        Some(path) => std::fs::write(path, csv)
            .with_context(|| format!("cannot write {}", path.display()))?,
        None => io::stdout().write_all(csv.as_bytes())?,
    }
    Ok(ExitCode::SUCCESS)
}

fn run() -> Result<ExitCode> {
    let cli = Cli::parse();
    match &cli.command {
        Command::Validate { schema, mode } => validate(schema, mode),
        Command::Decode {
            schema,
            vocab,
            model,
            mode,
            beam,
            top_k,
            timing,
            max_length,
        } => decode(schema, vocab, model, mode, *beam, *top_k, timing, *max_length),
        Command::Experiment {
            seed,
            instances,
            repetitions,
            measure_latency,
            out,
        } => experiment(*seed, *instances, *repetitions, *measure_latency, out.as_deref()),
        Command::Serve { schema, vocab } => {
            let schema = load_schema(schema)?;
            let vocab = load_vocab(vocab)?;
            let stdin = io::stdin();
            server::serve(&schema, &vocab, stdin.lock(), io::stdout().lock())?;
            Ok(ExitCode::SUCCESS)
        }
    }
}

fn main() -> ExitCode {
    match run() {
        Ok(code) => code,
        Err(err) => {
            eprintln!("error: {err:#}");
            ExitCode::from(2)
        }
    }
}
