use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use quantlearn::synthetic::{synthetic_corpus, SyntheticSpec};
use quantlearn::{paired_ttest, prevalence_from_labels};
use quantlearn_cli::experiment::{self, build_pool, cache_dir, select_model, RunPaths};
use quantlearn_cli::report::{self, aligned_table, pair_rows, Metric, ResultRow};
use quantlearn_cli::{write_dataset, ExperimentConfig};
use rayon::prelude::*;

#[derive(Parser)]
#[command(name = "quantlearn", version, about = "Quantification experiments with quantification-oriented model selection")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct RunArgs {
    /// JSON experiment configuration.
    #[arg(long)]
    config: PathBuf,
    /// Overrides the master seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Overrides the output directory.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Worker threads (default: all cores).
    #[arg(long)]
    jobs: Option<usize>,
}

impl RunArgs {
    fn load(&self) -> Result<ExperimentConfig> {
        let mut config = ExperimentConfig::from_file(&self.config)?;
        if let Some(seed) = self.seed {
            config.seed = seed;
        }
        if let Some(out) = &self.out {
            config.output_dir = out.clone();
        }
        config.validate()?;
        Ok(config)
    }
}

#[derive(Subcommand)]
enum Command {
    /// Load datasets, build and cache vocabularies, print dataset statistics.
    Prepare(RunArgs),
    /// Model selection only (first repetition); writes selection reports.
    Select(RunArgs),
    /// Full protocol run; resumes from completed parts in the output directory.
    Protocol(RunArgs),
    /// Paired t-test between two raw result files.
    Ttest {
        a: PathBuf,
        b: PathBuf,
        #[arg(long, default_value = "ae")]
        metric: Metric,
        /// Keep only rows of `a` selected with this loss.
        #[arg(long)]
        loss_a: Option<String>,
        /// Keep only rows of `b` selected with this loss.
        #[arg(long)]
        loss_b: Option<String>,
    },
    /// Render summary and t-test tables from a raw result file.
    Report {
        /// Raw CSV (default: <out>/raw.csv).
        #[arg(long)]
        input: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Write a synthetic TSV train/test pair.
    Synth {
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value = "synth")]
        name: String,
        #[arg(long, default_value_t = 2000)]
        n_docs: usize,
        #[arg(long, default_value_t = 0.9)]
        prevalence: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}

fn run(cli: Cli) -> Result<ExitCode> {
    match cli.command {
        Command::Prepare(args) => prepare(&args.load()?),
        Command::Select(args) => select(&args.load()?, args.jobs),
        Command::Protocol(args) => protocol(&args.load()?, args.jobs),
        Command::Ttest { a, b, metric, loss_a, loss_b } => ttest(&a, &b, metric, loss_a, loss_b),
        Command::Report { input, out } => {
            let input = input.unwrap_or_else(|| out.join("raw.csv"));
            let rows = report::read_rows(&input)?;
            if rows.is_empty() {
                bail!("{} holds no rows", input.display());
            }
            report::write_report_tables(&rows, &out)?;
            print!("{}", report::summary_text(&report::summarize(&rows)));
            Ok(ExitCode::SUCCESS)
        }
        Command::Synth { out, name, n_docs, prevalence, seed } => {
            std::fs::create_dir_all(&out)?;
            let spec = SyntheticSpec { n_docs, prevalence, seed, ..SyntheticSpec::default() };
            let test = SyntheticSpec { seed: seed.wrapping_add(1), ..spec.clone() };
            for (part, spec) in [("train", spec), ("test", test)] {
                let path = out.join(format!("{name}_{part}.tsv"));
                write_dataset(&synthetic_corpus(&name, &spec)?, &path)?;
                println!("wrote {}", path.display());
            }
            Ok(ExitCode::SUCCESS)
        }
    }
}

fn prepare(config: &ExperimentConfig) -> Result<ExitCode> {
    let cache = cache_dir(config);
    let mut body = Vec::new();
    for d in &config.datasets {
        let data = experiment::prepare_dataset(d, config.min_count, Some(&cache))?;
        let prev = |f: &quantlearn::FeatureSet| prevalence_from_labels(f.labels.as_slice()).map(|p| format!("{:.3}", p.pos()));
        body.push(vec![
            data.name.clone(),
            data.labelled.len().to_string(),
            prev(&data.labelled)?,
            data.test.len().to_string(),
            prev(&data.test)?,
            data.vocabulary.len().to_string(),
        ]);
    }
    print!("{}", aligned_table(&["dataset", "|L|", "p(L)", "|U|", "p(U)", "terms"], &body));
    println!("cache: {}", cache.display());
    Ok(ExitCode::SUCCESS)
}

fn select(config: &ExperimentConfig, jobs: Option<usize>) -> Result<ExitCode> {
    let paths = RunPaths::new(&config.output_dir);
    std::fs::create_dir_all(paths.root.join("selection"))?;
    let combos: Vec<_> = experiment::combinations(config).into_iter().filter(|c| c.repetition == 0 && c.loss.is_some()).collect();
    let cache = cache_dir(config);
    let datasets = config
        .datasets
        .iter()
        .map(|d| experiment::prepare_dataset(d, config.min_count, Some(&cache)))
        .collect::<Result<Vec<_>>>()?;
    let results: Vec<_> = build_pool(jobs)?.install(|| {
        combos
            .par_iter()
            .map(|c| {
                let data = datasets.iter().find(|d| d.name == c.dataset).expect("dataset prepared");
                select_model(config, data, c).map(|(_, r)| r)
            })
            .collect()
    });
    let mut body = Vec::new();
    let mut failed = false;
    for (c, r) in combos.iter().zip(results) {
        match r {
            Ok(Some(r)) => {
                std::fs::write(paths.selection(c), serde_json::to_string_pretty(&r)?)?;
                body.push(vec![c.dataset.clone(), c.method.to_string(), c.learner_code().into(), c.loss_code().into(), r.winner.to_string(), format!("{:.4}", r.winner_loss)]);
            }
            Ok(None) => {}
            Err(e) => {
                failed = true;
                eprintln!("FAILED {}: {e:#}", c.file_stem());
            }
        }
    }
    print!("{}", aligned_table(&["dataset", "method", "learner", "loss", "winner", "validation loss"], &body));
    Ok(if failed { ExitCode::FAILURE } else { ExitCode::SUCCESS })
}

fn protocol(config: &ExperimentConfig, jobs: Option<usize>) -> Result<ExitCode> {
    let summary = experiment::run_protocol(config, jobs)?;
    let rows = report::read_rows(&summary.raw_csv)?;
    if !rows.is_empty() {
        report::audit_rows(&rows, config.test.sample_size, 1e-12)?;
        report::write_report_tables(&rows, &config.output_dir)?;
        print!("{}", report::summary_text(&report::summarize(&rows)));
    }
    eprintln!(
        "{} combinations run, {} resumed, {} failed; results in {}",
        summary.completed,
        summary.resumed,
        summary.failures.len(),
        config.output_dir.display()
    );
    Ok(if summary.failures.is_empty() { ExitCode::SUCCESS } else { ExitCode::FAILURE })
}

fn ttest(a: &Path, b: &Path, metric: Metric, loss_a: Option<String>, loss_b: Option<String>) -> Result<ExitCode> {
    let rows_a = report::read_rows(a)?;
    let rows_b = report::read_rows(b)?;
    let keep = |rows: &[ResultRow], loss: &Option<String>| -> Vec<ResultRow> {
        rows.iter().filter(|r| loss.as_ref().is_none_or(|l| &r.optimized_for == l)).cloned().collect()
    };
    let (rows_a, rows_b) = (keep(&rows_a, &loss_a), keep(&rows_b, &loss_b));
    let groups: std::collections::BTreeSet<(String, String)> =
        rows_a.iter().map(|r| (r.method.clone(), r.learner.clone())).collect();
    let mut body = Vec::new();
    for (method, learner) in groups {
        let pick = |rows: &[ResultRow]| -> Vec<ResultRow> {
            rows.iter().filter(|r| r.method == method && r.learner == learner).cloned().collect()
        };
        let (ga, gb) = (pick(&rows_a), pick(&rows_b));
        let (xa, xb) = pair_rows(&ga.iter().collect::<Vec<_>>(), &gb.iter().collect::<Vec<_>>(), metric)
            .with_context(|| format!("{method}/{learner}: use --loss-a/--loss-b to disambiguate"))?;
        if xa.len() < 2 {
            continue;
        }
        let v = paired_ttest(&xa, &xb)?;
        let mean = |x: &[f64]| x.iter().sum::<f64>() / x.len() as f64;
        body.push(vec![
            method,
            learner,
            xa.len().to_string(),
            format!("{:.3}", mean(&xa)),
            format!("{:.3}", mean(&xb)),
            format!("{:.3}", v.t),
            v.df.to_string(),
            format!("{:.3e}", v.p_value),
            v.verdict.symbol().to_string(),
        ]);
    }
    if body.is_empty() {
        bail!("no paired samples between {} and {}", a.display(), b.display());
    }
    print!("{}", aligned_table(&["method", "learner", "pairs", "mean a", "mean b", "t", "df", "p", "a vs b"], &body));
    Ok(ExitCode::SUCCESS)
}
