use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use log::error;

use clir::pipeline::{run_stages, Outcome, Overrides, PipelineConfig, PipelineError, Stage};
use clir::testbed::{generate, TestbedConfig};
use clir::Method;

#[derive(Parser)]
#[command(
    name = "clir",
    version,
    about = "Cross-language retrieval by embedding-based query translation"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Build the inverted index from the document collection.
    Index(StageArgs),
    /// Fit the source-to-target projection (training vectors first if needed).
    TrainProjection(StageArgs),
    /// Translate topics into weighted target-language queries.
    Translate(StageArgs),
    /// Rank documents for every translated query and write a run file.
    Search(StageArgs),
    /// Score a run against relevance judgments.
    Evaluate(StageArgs),
    /// Run every stage in order.
    Pipeline(StageArgs),
    /// Write a synthetic bilingual testbed with a ready-to-run configuration.
    GenerateTestbed {
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 7)]
        seed: u64,
        /// Corpus size per language, in tokens.
        #[arg(long)]
        tokens: Option<usize>,
    },
}

#[derive(Args)]
struct StageArgs {
    #[arg(short, long)]
    config: PathBuf,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long, value_parser = parse_method)]
    method: Option<Method>,
    #[arg(short)]
    k: Option<usize>,
    #[arg(long)]
    top_n: Option<usize>,
    #[arg(long)]
    lambda: Option<f64>,
    #[arg(long)]
    dict_weight: Option<f64>,
    #[arg(long)]
    out_dir: Option<PathBuf>,
}

fn parse_method(s: &str) -> Result<Method, String> {
    s.parse()
}

impl StageArgs {
    fn config(&self) -> Result<PipelineConfig, PipelineError> {
        let mut cfg = PipelineConfig::load(&self.config)?;
        cfg.apply(&Overrides {
            seed: self.seed,
            method: self.method,
            k: self.k,
            top_n: self.top_n,
            lambda: self.lambda,
            dict_weight: self.dict_weight,
            out_dir: self.out_dir.clone(),
        });
        Ok(cfg)
    }
}

fn report(outcome: &Outcome) {
    if let Some(i) = &outcome.index {
        println!("indexed {} documents, {} distinct terms", i.documents, i.vocabulary);
    }
    if let Some(p) = &outcome.projection {
        println!(
            "projection: {} training pairs ({} dropped), RMSE {:.6}",
            p.pairs, p.dropped, p.rmse
        );
    }
    if let Some(n) = outcome.translated {
        println!("translated {n} queries");
    }
    if let Some(n) = outcome.searched {
        println!("searched {n} queries");
    }
    if let Some(r) = &outcome.report {
        print!("{}", r.render());
    }
}

fn run(cli: Cli) -> Result<(), PipelineError> {
    let (args, stages): (&StageArgs, &[Stage]) = match &cli.command {
        Command::Index(a) => (a, &[Stage::Index]),
        Command::TrainProjection(a) => (a, &[Stage::TrainProjection]),
        Command::Translate(a) => (a, &[Stage::Translate]),
        Command::Search(a) => (a, &[Stage::Search]),
        Command::Evaluate(a) => (a, &[Stage::Evaluate]),
        Command::Pipeline(a) => (a, &Stage::ALL),
        Command::GenerateTestbed { out, seed, tokens } => {
            let mut cfg = TestbedConfig {
                seed: *seed,
                ..TestbedConfig::default()
            };
            if let Some(t) = tokens {
                cfg.tokens_per_side = *t;
            }
            let files = generate(&cfg)
                .write(out)
                .map_err(|e| PipelineError::Validation(format!("writing {}: {e}", out.display())))?;
            println!("{}", files.config.display());
            return Ok(());
        }
    };
    let cfg = args.config()?;
    let outcome = run_stages(&cfg, stages)?;
    report(&outcome);
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            error!("{e}");
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
