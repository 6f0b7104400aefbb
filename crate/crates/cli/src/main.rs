use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use log::info;

use zsl_core::harness::{emit_report, load_report, preview_prompts, revote, run_with_mode, DispatchMode, RunConfig};
use zsl_core::{
    load_dataset, summarize, AbstentionPolicy, DatasetSchema, OutputFormat, PartState, RunReport, TieBreak, VoteTally,
    Winner,
};

/// Exit status when `--strict-ties` is set and some dataset has no single winner.
const TIE_EXIT: u8 = 2;

#[derive(Parser)]
#[command(name = "zsl", version)]
#[command(about = "Zero-shot LLM evaluation of part obsolescence on tabular datasets")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a full evaluation (cache first, backend on a miss)
    Run(RunArgs),
    /// Score from the response cache only; never contacts a backend
    Replay(RunArgs),
    /// Print class statistics for a dataset
    Stats {
        /// Dataset schema config (TOML)
        #[arg(long)]
        schema: PathBuf,
        /// CSV export matching the schema
        #[arg(long)]
        data: PathBuf,
    },
    /// Re-run model selection over an existing report.json
    Vote {
        report: PathBuf,
        #[arg(long, value_enum, default_value_t = TieBreakArg::Surface)]
        tie_break: TieBreakArg,
        /// Exit with status 2 if any dataset ends in a tie
        #[arg(long)]
        strict_ties: bool,
    },
}

#[derive(Args)]
struct RunArgs {
    /// Run config (TOML)
    config: PathBuf,
    #[arg(long)]
    output_dir: Option<PathBuf>,
    /// Evaluate only the first N rows of each dataset
    #[arg(long)]
    row_limit: Option<usize>,
    /// Concurrent requests per backend
    #[arg(long)]
    max_in_flight: Option<usize>,
    #[arg(long, value_enum)]
    abstention_policy: Option<PolicyArg>,
    /// Positive class for every dataset
    #[arg(long, value_enum)]
    positive_class: Option<ClassArg>,
    /// Response cache file (JSONL)
    #[arg(long)]
    cache: Option<PathBuf>,
    /// Custom question form with {serialization} and {noun}/{Noun} placeholders
    #[arg(long)]
    template: Option<String>,
    /// Output formats, comma separated; a bare `--formats` writes nothing
    #[arg(long, value_enum, value_delimiter = ',', num_args = 0..)]
    formats: Option<Vec<FormatArg>>,
    #[arg(long, value_enum)]
    tie_break: Option<TieBreakArg>,
    /// Exit with status 2 if any dataset ends in a tie
    #[arg(long)]
    strict_ties: bool,
    /// Print the first N rendered prompts per dataset and exit
    #[arg(long, value_name = "N")]
    dry_run: Option<usize>,
}

#[derive(Clone, Copy, ValueEnum)]
enum PolicyArg {
    ExcludeAbstain,
    AbstainAsNegative,
    AbstainAsPositive,
}

#[derive(Clone, Copy, ValueEnum)]
enum ClassArg {
    Available,
    Obsolete,
}

#[derive(Clone, Copy, ValueEnum)]
enum FormatArg {
    Json,
    Csv,
    Markdown,
}

#[derive(Clone, Copy, ValueEnum)]
enum TieBreakArg {
    Surface,
    Lexicographic,
}

impl From<TieBreakArg> for TieBreak {
    fn from(arg: TieBreakArg) -> Self {
        match arg {
            TieBreakArg::Surface => TieBreak::Surface,
            TieBreakArg::Lexicographic => TieBreak::Lexicographic,
        }
    }
}

impl RunArgs {
    fn load_config(&self) -> Result<RunConfig> {
        let mut config = RunConfig::from_file(&self.config)
            .with_context(|| format!("loading run config {}", self.config.display()))?;
        if let Some(dir) = &self.output_dir {
            config.output_dir = dir.clone();
        }
        if let Some(n) = self.row_limit {
            config.row_limit = Some(n);
        }
        if let Some(n) = self.max_in_flight {
            config.max_in_flight = Some(n);
        }
        if let Some(policy) = self.abstention_policy {
            config.abstention_policy = match policy {
                PolicyArg::ExcludeAbstain => AbstentionPolicy::ExcludeAbstain,
                PolicyArg::AbstainAsNegative => AbstentionPolicy::AbstainAsNegative,
                PolicyArg::AbstainAsPositive => AbstentionPolicy::AbstainAsPositive,
            };
        }
        if let Some(class) = self.positive_class {
            let class = match class {
                ClassArg::Available => PartState::Available,
                ClassArg::Obsolete => PartState::Obsolete,
            };
            for d in &mut config.datasets {
                d.positive_class = Some(class);
            }
        }
        if let Some(cache) = &self.cache {
            config.cache_path = Some(cache.clone());
        }
        if let Some(template) = &self.template {
            config.template = Some(template.clone());
        }
        if let Some(formats) = &self.formats {
            config.formats = formats
                .iter()
                .map(|f| match f {
                    FormatArg::Json => OutputFormat::Json,
                    FormatArg::Csv => OutputFormat::Csv,
                    FormatArg::Markdown => OutputFormat::Markdown,
                })
                .collect();
        }
        if let Some(tie_break) = self.tie_break {
            config.tie_break = tie_break.into();
        }
        config.validate()?;
        Ok(config)
    }
}

fn run(args: &RunArgs, mode: DispatchMode) -> Result<ExitCode> {
    let config = args.load_config()?;
    if let Some(n) = args.dry_run {
        for (dataset, row_id, prompt) in preview_prompts(&config, n)? {
            println!("[{dataset} {row_id}]\n{prompt}\n");
        }
        return Ok(ExitCode::SUCCESS);
    }

    let report = run_with_mode(&config, mode)?;
    let written = emit_report(&report, &config.formats, &config.output_dir)?;
    for path in &written {
        info!("wrote {}", path.display());
    }
    print_results(&report);
    print_tallies(&report.tallies);
    Ok(tie_status(&report.tallies, args.strict_ties))
}

fn print_results(report: &RunReport) {
    for r in &report.reports {
        let show = |v: Option<f64>| v.map(|v| format!("{v:.3}")).unwrap_or_else(|| "---".into());
        println!(
            "{} / {}: accuracy {} precision {} recall {} f1 {} auc {} abstained {:.4}",
            r.model_id,
            r.dataset_name,
            r.accuracy.map(|a| format!("{:.2}", a * 100.0)).unwrap_or_else(|| "---".into()),
            show(r.precision),
            show(r.recall),
            show(r.f1),
            show(r.auc),
            r.abstention_rate,
        );
    }
}

fn print_tallies(tallies: &[VoteTally]) {
    for t in tallies {
        let votes: Vec<String> = t.votes.iter().map(|(m, v)| format!("{m}={v}")).collect();
        let winner = match &t.winner {
            Winner::Model(m) => m.clone(),
            Winner::Tie(ms) => format!("tie ({})", ms.join(", ")),
        };
        println!("{}: winner {} [{}]", t.dataset_name, winner, votes.join(" "));
    }
}

fn tie_status(tallies: &[VoteTally], strict: bool) -> ExitCode {
    if strict && tallies.iter().any(|t| t.winner.is_tie()) {
        ExitCode::from(TIE_EXIT)
    } else {
        ExitCode::SUCCESS
    }
}

fn stats(schema: &Path, data: &Path) -> Result<()> {
    let schema = DatasetSchema::from_config_file(schema)?;
    let records = load_dataset(data, &schema)?;
    let s = summarize(&records)?;
    println!("| Dataset | Number of parts | Obsolete | Available | % obsolete |");
    println!("|---|---|---|---|---|");
    println!("| {} | {} | {} | {} | {:.2} |", schema.name, s.n_total, s.n_obsolete, s.n_available, s.pct_obsolete);
    Ok(())
}

fn main() -> Result<ExitCode> {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    match cli.command {
        Command::Run(args) => run(&args, DispatchMode::Live),
        Command::Replay(args) => run(&args, DispatchMode::Replay),
        Command::Stats { schema, data } => {
            stats(&schema, &data)?;
            Ok(ExitCode::SUCCESS)
        }
        Command::Vote { report, tie_break, strict_ties } => {
            let report = load_report(&report)?;
            let tallies = revote(&report, tie_break.into())?;
            print_tallies(&tallies);
            Ok(tie_status(&tallies, strict_ties))
        }
    }
}
