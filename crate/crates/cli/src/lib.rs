//! `readpath`: command-line front-end for the reading-path analysis.
//!
//! Exit status is 0 on success, 1 for input or validation errors and 2 when
//! an internal invariant fails.

use std::ffi::OsString;
use std::path::PathBuf;

use anyhow::Result;
use clap::{Args, Parser, Subcommand};
use readpath_core::exec::{self, Exec};
use readpath_core::surprise::SurpriseKind;

pub mod config;
pub mod pipeline;
pub mod report;

use config::RunConfig;
use pipeline::{Exports, Stage};

#[derive(Debug, Parser)]
#[command(
    name = "readpath",
    version,
    about = "Topic-model surprise along a reading order, against constrained nulls",
    after_help = "Any config value can be overridden with --section.key VALUE, e.g. --topics.alpha 0.5"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
    #[command(flatten)]
    pub common: Common,
}

#[derive(Debug, Args)]
pub struct Common {
    /// TOML configuration file.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Seed for both topic training and null sampling.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Topic count, or a comma-separated list.
    #[arg(long, global = true, value_delimiter = ',')]
    pub k: Option<Vec<usize>>,
    /// Null permutations per ensemble.
    #[arg(long, global = true)]
    pub samples: Option<usize>,
    /// Worker threads (0 = all cores). Results do not depend on this.
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    /// Output directory.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Tokenize the manifest's texts and write the corpus cache.
    Ingest,
    /// Fit one topic model per configured k.
    Train,
    /// Export reading-order surprise series.
    Surprise,
    /// Sample the constrained null and export ensembles.
    Null,
    /// Export publication-order surprise series.
    Puborder,
    /// Export greedy minimum-surprise paths.
    Greedy,
    /// Export successor-rank statistics against the null.
    Ranks,
    /// Segment surprise into epochs and select their number by AIC.
    Epochs,
    /// Run every stage and write the summary and bundle manifest.
    Run,
    /// Print summary tables for a finished run.
    Report {
        /// Bundle directory; defaults to the output directory.
        #[arg(long)]
        bundle: Option<PathBuf>,
    },
}

/// Error for a broken internal invariant (exit status 2).
#[derive(Debug, thiserror::Error)]
#[error("internal invariant failed: {0}")]
pub struct Internal(pub String);

impl Common {
    fn overrides(&self) -> Vec<(String, String)> {
        let mut o = Vec::new();
        if let Some(s) = self.seed {
            o.push(("topics.seed".into(), s.to_string()));
            o.push(("null.seed".into(), s.to_string()));
        }
        if let Some(ks) = &self.k {
            let list: Vec<String> = ks.iter().map(|k| k.to_string()).collect();
            o.push(("topics.k".into(), format!("[{}]", list.join(","))));
        }
        if let Some(n) = self.samples {
            o.push(("null.samples".into(), n.to_string()));
        }
        if let Some(t) = self.threads {
            o.push(("output.threads".into(), t.to_string()));
        }
        if let Some(p) = &self.out {
            o.push(("output.dir".into(), p.to_string_lossy().into_owned()));
        }
        o
    }
}

/// Exit status for an error chain.
pub fn exit_code(err: &anyhow::Error) -> i32 {
    let internal = err.chain().any(|c| {
        c.downcast_ref::<Internal>().is_some() || c.downcast_ref::<readpath_core::Error>().is_some_and(|e| e.is_internal())
    });
    if internal {
        2
    } else {
        1
    }
}

/// Parse `args` (program name first) and run. Returns the exit status.
pub fn main_with_args(args: impl IntoIterator<Item = OsString>) -> i32 {
    let (rest, dotted) = match config::split_overrides(args) {
        Ok(v) => v,
        Err(e) => {
            eprintln!("error: {e:#}");
            return 1;
        }
    };
    let cli = match Cli::try_parse_from(rest) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    let outcome = std::panic::catch_unwind(|| execute(&cli, &dotted));
    match outcome {
        Ok(Ok(())) => 0,
        Ok(Err(e)) => {
            eprintln!("error: {e:#}");
            exit_code(&e)
        }
        Err(_) => 2,
    }
}

/// Load the configuration: file, then dotted overrides, then named flags.
pub fn load_config(cli: &Cli, dotted: &[(String, String)]) -> Result<RunConfig> {
    let mut overrides = dotted.to_vec();
    overrides.extend(cli.common.overrides());
    RunConfig::load(cli.common.config.as_deref(), &overrides)
}

fn execute(cli: &Cli, dotted: &[(String, String)]) -> Result<()> {
    let cfg = load_config(cli, dotted)?;
    exec::with_threads(cfg.output.threads, || dispatch(&cli.command, &cfg))
}

fn print_paths(ex: &Exports) {
    for e in ex.entries() {
        println!("{}", ex.root().join(&e.path).display());
    }
}

fn dispatch(command: &Command, cfg: &RunConfig) -> Result<()> {
    let exec = Exec::Parallel;
    if let Command::Report { bundle } = command {
        let root = bundle.clone().unwrap_or_else(|| cfg.output.dir.clone());
        report::BundleManifest::open(&root)?;
        let summary = report::read_summary(&root)?;
        print!("{}", report::render(&summary));
        return Ok(());
    }
    if let Command::Run = command {
        pipeline::run(cfg, exec)?;
        println!("{}", cfg.output.dir.join(report::SUMMARY).display());
        return Ok(());
    }

    let mut ex = Exports::new(&cfg.output.dir)?;
    if let Command::Ingest = command {
        let cache = pipeline::ingest(cfg, exec, &mut ex)?;
        println!("{}", serde_json::to_string(&cache.stats())?);
        return Ok(());
    }
    let cache = pipeline::corpus(cfg, exec, &mut ex)?;
    let reuse = !matches!(command, Command::Train);
    let fitted = pipeline::models(cfg, &cache, exec, reuse, &mut ex)?;
    let mut stage_ex = Exports::new(&cfg.output.dir)?;
    for f in &fitted {
        let s = Stage {
            cfg,
            records: &cache.records,
            fitted: f,
            exec,
        };
        let ex = &mut stage_ex;
        match command {
            Command::Train => {}
            Command::Surprise => {
                s.write_series(ex)?;
            }
            Command::Null => {
                for kind in [SurpriseKind::T2T, SurpriseKind::T2P] {
                    s.write_null(kind, ex)?;
                }
            }
            Command::Puborder => {
                for kind in [SurpriseKind::T2T, SurpriseKind::T2P] {
                    s.write_puborder(kind, ex)?;
                }
            }
            Command::Greedy => {
                s.write_greedy(ex)?;
            }
            Command::Ranks => {
                let m = readpath_core::paths::DivergenceMatrix::from_thetas_with(&f.thetas, exec)?;
                let null = s.null(SurpriseKind::T2T)?;
                s.write_ranks(&m, &null, ex)?;
            }
            Command::Epochs => {
                for kind in [SurpriseKind::T2T, SurpriseKind::T2P] {
                    let observed = s.series(kind)?;
                    let null = s.null(kind)?;
                    s.write_epochs(&observed, &null, ex)?;
                }
            }
            Command::Ingest | Command::Run | Command::Report { .. } => {
                return Err(Internal(format!("{command:?} reached the per-model stage")).into())
            }
        }
    }
    if let Command::Train = command {
        print_paths(&ex);
    } else {
        print_paths(&stage_ex);
    }
    Ok(())
}
