use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use wikidelta::pipeline::{run_all, run_diffset, run_probes, run_stats, PipelineConfig, RunSummary};
use wikidelta::{Error, Result};

/// Training diffsets and factual probes from two consecutive snapshots.
#[derive(Parser)]
#[command(name = "wikidelta", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Extract new and updated article text.
    Diffset(Flags),
    /// Categorize, align and filter facts into probes.
    Probes(Flags),
    /// Render corpus, funnel and distribution reports.
    Stats(Flags),
    /// Run diffset, probes and stats together.
    All(Flags),
}

/// Flags override values from the config file.
#[derive(Args)]
struct Flags {
    /// key=value file providing defaults.
    #[arg(long, short)]
    config: Option<PathBuf>,
    #[arg(long)]
    prev_articles: Option<String>,
    #[arg(long)]
    recent_articles: Option<String>,
    #[arg(long)]
    prev_triples: Option<String>,
    #[arg(long)]
    recent_triples: Option<String>,
    /// article_id, title, entity_id TSV.
    #[arg(long)]
    mapping: Option<String>,
    /// xml-dump or article-records.
    #[arg(long)]
    article_format: Option<String>,
    /// tsv or json-records.
    #[arg(long)]
    triple_format: Option<String>,
    #[arg(long, short)]
    out_dir: Option<String>,
    /// YYYY-MM
    #[arg(long)]
    prev_tag: Option<String>,
    /// YYYY-MM
    #[arg(long)]
    recent_tag: Option<String>,
    #[arg(long)]
    seed: Option<String>,
    /// Keep rate for Unchanged facts, as a decimal or a/b.
    #[arg(long)]
    sample_rate: Option<String>,
    #[arg(long)]
    subject_cap: Option<String>,
    #[arg(long)]
    object_cap: Option<String>,
    #[arg(long)]
    relation_cap: Option<String>,
    #[arg(long, short)]
    workers: Option<String>,
    #[arg(long, num_args = 0..=1, default_missing_value = "true")]
    case_insensitive: Option<String>,
    #[arg(long, num_args = 0..=1, default_missing_value = "true")]
    strip_markup: Option<String>,
    /// Rerun even when the output directory is already complete.
    #[arg(long, num_args = 0..=1, default_missing_value = "true")]
    force: Option<String>,
    #[arg(long)]
    top_k: Option<String>,
}

impl Flags {
    fn config(&self) -> Result<PipelineConfig> {
        let mut config = PipelineConfig::default();
        if let Some(path) = &self.config {
            config.apply_file(path)?;
        }
        let overrides = [
            ("prev_articles", &self.prev_articles),
            ("recent_articles", &self.recent_articles),
            ("prev_triples", &self.prev_triples),
            ("recent_triples", &self.recent_triples),
            ("mapping", &self.mapping),
            ("article_format", &self.article_format),
            ("triple_format", &self.triple_format),
            ("out_dir", &self.out_dir),
            ("prev_tag", &self.prev_tag),
            ("recent_tag", &self.recent_tag),
            ("seed", &self.seed),
            ("sample_rate", &self.sample_rate),
            ("subject_cap", &self.subject_cap),
            ("object_cap", &self.object_cap),
            ("relation_cap", &self.relation_cap),
            ("workers", &self.workers),
            ("case_insensitive", &self.case_insensitive),
            ("strip_markup", &self.strip_markup),
            ("force", &self.force),
            ("top_k", &self.top_k),
        ];
        for (key, value) in overrides {
            if let Some(value) = value {
                config.set(key, value, None)?;
            }
        }
        Ok(config)
    }
}

fn report(summary: &RunSummary) {
    if summary.already_complete {
        eprintln!("output directory is already complete; pass --force to rebuild");
        return;
    }
    for stats in &summary.corpus {
        eprintln!("{}: {} articles, {} tokens", stats.label, stats.article_count, stats.token_count);
    }
    if let Some(r) = &summary.report {
        eprintln!(
            "probes: {} Unchanged, {} Changed (from {} / {} categorized)",
            r.rule3.unchanged, r.rule3.changed, r.categorized.unchanged, r.categorized.changed
        );
    }
    for path in &summary.outputs {
        eprintln!("wrote {}", path.display());
    }
}

fn run(cli: Cli) -> Result<RunSummary> {
    match cli.command {
        Command::Diffset(f) => run_diffset(&f.config()?),
        Command::Probes(f) => run_probes(&f.config()?),
        Command::Stats(f) => run_stats(&f.config()?),
        Command::All(f) => run_all(&f.config()?),
    }
}

fn exit_code(error: &Error) -> ExitCode {
    if error.is_validation() {
        ExitCode::from(1)
    } else {
        ExitCode::from(2)
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(summary) => {
            report(&summary);
            ExitCode::SUCCESS
        }
        Err(error) => {
            eprintln!("error: {error}");
            exit_code(&error)
        }
    }
}
