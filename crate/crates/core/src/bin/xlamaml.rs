use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use xlamaml::cli::config::{self, language_list, FlagOverrides, Override};
use xlamaml::cli::{report, run, sweep};
use xlamaml::episodes::Strategy;
use xlamaml::metatrain::Mode;
use xlamaml::Error;

#[derive(Parser)]
#[command(name = "xlamaml", version, about = "Cross-lingual meta-learning experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Write a synthetic corpus as train/dev/test JSONL.
    GenData {
        #[command(flatten)]
        common: Common,
        /// Directory to write into.
        #[arg(long)]
        dir: PathBuf,
    },
    /// Finetune, meta-train and evaluate one configuration.
    Run {
        #[command(flatten)]
        common: Common,
    },
    /// One run per auxiliary language; writes the aux × target matrix.
    Sweep {
        #[command(flatten)]
        common: Common,
        /// Auxiliary languages (rows); defaults to the family's auxiliaries.
        #[arg(long)]
        aux: Option<String>,
        /// Target languages (columns); defaults to the family's targets.
        #[arg(long)]
        targets: Option<String>,
    },
    /// Summarise a run or sweep directory.
    Report { dir: PathBuf },
}

#[derive(Args)]
struct Common {
    /// TOML experiment config.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long, value_parser = parse_mode)]
    mode: Option<Mode>,
    #[arg(long, value_parser = parse_strategy)]
    strategy: Option<Strategy>,
    /// Support and query sets are translations of each other.
    #[arg(long)]
    parallel: bool,
    /// Comma-separated support languages.
    #[arg(long)]
    support_langs: Option<String>,
    /// Comma-separated query languages.
    #[arg(long)]
    query_langs: Option<String>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    iters_per_lang: Option<usize>,
    #[arg(long)]
    inner_steps: Option<usize>,
    #[arg(long)]
    alpha: Option<f64>,
    #[arg(long)]
    beta: Option<f64>,
    /// Output directory (default: $XLAMAML_OUTPUT_ROOT/<name> or runs/<name>).
    #[arg(long)]
    out: Option<PathBuf>,
    /// Any other config key, e.g. `--set train.sampler.k=4`. Repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
}

fn parse_mode(s: &str) -> Result<Mode, String> {
    s.parse().map_err(|e: Error| e.to_string())
}

fn parse_strategy(s: &str) -> Result<Strategy, String> {
    s.parse().map_err(|e: Error| e.to_string())
}

impl Common {
    fn load(&self) -> Result<config::ExperimentConfig, Error> {
        let flags = FlagOverrides {
            mode: self.mode,
            strategy: self.strategy,
            parallel: self.parallel,
            support_langs: self.support_langs.clone(),
            query_langs: self.query_langs.clone(),
            seed: self.seed,
            iters_per_lang: self.iters_per_lang,
            inner_steps: self.inner_steps,
            alpha: self.alpha,
            beta: self.beta,
            out: self.out.clone(),
        };
        let mut overrides = flags.to_overrides();
        for s in &self.set {
            overrides.push(Override::parse(s)?);
        }
        let cfg = config::load(self.config.as_deref(), &overrides)?;
        cfg.validate()?;
        Ok(cfg)
    }
}

fn languages(raw: &Option<String>, default: &[String]) -> Vec<String> {
    match raw.as_deref().map(language_list) {
        Some(toml::Value::Array(items)) => items.into_iter().filter_map(|v| v.as_str().map(String::from)).collect(),
        _ => default.to_vec(),
    }
}

fn execute(cli: Cli) -> Result<(), Error> {
    match cli.command {
        Command::GenData { common, dir } => {
            let cfg = common.load()?;
            let counts = run::gen_data(&cfg, &dir)?;
            for (split, n) in counts {
                println!("{split}: {n} examples");
            }
        }
        Command::Run { common } => {
            let cfg = common.load()?;
            let out = cfg.output_dir();
            let results = run::run(&cfg, Some(&out))?;
            println!(
                "{} ({}): target {} {:.4} vs baseline {:.4} ({:+.4}); artifacts in {}",
                results.name,
                results.mode,
                results.metric,
                results.target_mean,
                results.baseline_target_mean,
                results.delta(),
                out.display()
            );
        }
        Command::Sweep { common, aux, targets } => {
            let cfg = common.load()?;
            let aux = languages(&aux, &cfg.family.auxiliary);
            let targets = languages(&targets, &cfg.family.targets);
            let out = cfg.output_dir();
            sweep::sweep_matrix(&cfg, &aux, &targets, Some(&out))?;
            print!("{}", report::report(&out)?.text);
        }
        Command::Report { dir } => print!("{}", report::report(&dir)?.text),
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match execute(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            match e {
                Error::Config { .. } => ExitCode::from(2),
                _ => ExitCode::FAILURE,
            }
        }
    }
}
