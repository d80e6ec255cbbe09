//! The evaluation protocol: split, select, test, persist.

use std::collections::BTreeSet;
use std::path::{Path, PathBuf};
use std::sync::mpsc;

use anyhow::{anyhow, bail, Context, Result};
use quantlearn::sampling::RNG_NAME;
use quantlearn::synthetic::synthetic_corpus;
use quantlearn::text::STOP_LIST_VERSION;
use quantlearn::{
    absolute_error, build_vocabulary, derive_seed, fit, protocol_samples, relative_absolute_error, select,
    stratified_split, Corpus, FeatureSet, FitOptions, LearnerKind, Method, QuantifierModel, SelectionLoss,
    SelectionReport, Vocabulary,
};
use quantlearn::selection::SampleQuantifier;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::config::{DatasetConfig, ExperimentConfig, CACHE_ENV};
use crate::dataset::load_dataset;
use crate::report::{self, ResultRow, NONE};

// purposes mixed into per-repetition seeds
const SEED_SPLIT: u64 = 0;
const SEED_VALIDATION: u64 = 1;
const SEED_FIT: u64 = 2;
const SEED_TEST: u64 = 3;

fn fnv1a(bytes: impl IntoIterator<Item = u8>) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in bytes {
        h ^= u64::from(b);
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    h
}

/// Stable numeric id of a dataset name, used in seed derivation.
pub fn dataset_id(name: &str) -> u64 {
    fnv1a(name.bytes())
}

/// Seeds of one (dataset, repetition). Shared by every method, learner and
/// loss, so their test rows pair up sample by sample.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct RepetitionSeeds {
    pub split: u64,
    pub validation: u64,
    pub fit: u64,
    pub test: u64,
}

impl RepetitionSeeds {
    pub fn derive(master: u64, dataset: &str, repetition: usize) -> Self {
        let at = |purpose| derive_seed(master, &[dataset_id(dataset), repetition as u64, purpose]);
        Self { split: at(SEED_SPLIT), validation: at(SEED_VALIDATION), fit: at(SEED_FIT), test: at(SEED_TEST) }
    }
}

pub fn load_corpora(d: &DatasetConfig) -> Result<(Corpus, Corpus)> {
    match (&d.train, &d.test, &d.synthetic) {
        (Some(train), Some(test), None) => Ok((load_dataset(train)?, load_dataset(test)?)),
        (None, None, Some(s)) => Ok((synthetic_corpus(&d.name, &s.train)?, synthetic_corpus(&d.name, &s.test)?)),
        _ => bail!("dataset {} needs either train+test paths or a synthetic block", d.name),
    }
}

/// A labelled set L and a test set U vectorized with L's vocabulary.
#[derive(Debug, Clone)]
pub struct PreparedDataset {
    pub name: String,
    pub vocabulary: Vocabulary,
    pub labelled: FeatureSet,
    pub test: FeatureSet,
}

pub fn cache_dir(config: &ExperimentConfig) -> PathBuf {
    std::env::var_os(CACHE_ENV).map(PathBuf::from).unwrap_or_else(|| config.output_dir.join("cache"))
}

fn vocabulary_cache_path(dir: &Path, name: &str, documents: &[String], min_count: usize) -> PathBuf {
    let mut bytes = Vec::new();
    for d in documents {
        bytes.extend_from_slice(d.as_bytes());
        bytes.push(0);
    }
    bytes.extend_from_slice(&(min_count as u64).to_le_bytes());
    bytes.extend_from_slice(STOP_LIST_VERSION.as_bytes());
    dir.join(format!("{name}-{:016x}.vocab.json", fnv1a(bytes)))
}

/// Loads a dataset and builds (or reuses from `cache`) its vocabulary.
pub fn prepare_dataset(d: &DatasetConfig, min_count: usize, cache: Option<&Path>) -> Result<PreparedDataset> {
    let (train, test) = load_corpora(d).with_context(|| format!("dataset {}", d.name))?;
    let cached = cache.map(|dir| vocabulary_cache_path(dir, &d.name, &train.documents, min_count));
    let vocabulary = match cached.as_deref().filter(|p| p.exists()) {
        Some(path) => {
            let text = std::fs::read_to_string(path)?;
            serde_json::from_str(&text).with_context(|| format!("reading cached vocabulary {}", path.display()))?
        }
        None => {
            let v = build_vocabulary(&train.documents, min_count).with_context(|| format!("dataset {}", d.name))?;
            if let Some(path) = &cached {
                std::fs::create_dir_all(path.parent().expect("cache file has a parent"))?;
                write_atomic(path, serde_json::to_string(&v)?.as_bytes())?;
            }
            v
        }
    };
    Ok(PreparedDataset {
        name: d.name.clone(),
        labelled: FeatureSet::from_corpus(&train, &vocabulary),
        test: FeatureSet::from_corpus(&test, &vocabulary),
        vocabulary,
    })
}

fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let tmp = path.with_extension("tmp");
    std::fs::write(&tmp, bytes).with_context(|| format!("writing {}", tmp.display()))?;
    std::fs::rename(&tmp, path).with_context(|| format!("renaming to {}", path.display()))?;
    Ok(())
}

/// One unit of work and the key under which its results are persisted.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Combination {
    pub dataset: String,
    pub method: Method,
    pub learner: Option<LearnerKind>,
    pub loss: Option<SelectionLoss>,
    pub repetition: usize,
}

impl Combination {
    pub fn learner_code(&self) -> &'static str {
        self.learner.map_or(NONE, LearnerKind::code)
    }

    pub fn loss_code(&self) -> &'static str {
        self.loss.map_or(NONE, SelectionLoss::code)
    }

    pub fn file_stem(&self) -> String {
        let or_none = |s: &str| if s == NONE { "none".to_string() } else { s.to_string() };
        format!(
            "{}__{}__{}__{}__r{:03}",
            self.dataset,
            self.method.code(),
            or_none(self.learner_code()),
            or_none(self.loss_code()),
            self.repetition
        )
    }
}

/// Every combination of a config in canonical order.
pub fn combinations(config: &ExperimentConfig) -> Vec<Combination> {
    let mut out = BTreeSet::new();
    for d in &config.datasets {
        for &method in &config.methods {
            let pairs: Vec<(Option<LearnerKind>, Option<SelectionLoss>)> = if method.needs_classifier() {
                config.learners.iter().flat_map(|&l| config.losses.iter().map(move |&s| (Some(l), Some(s)))).collect()
            } else {
                vec![(None, None)]
            };
            for (learner, loss) in pairs {
                for repetition in 0..config.repetitions_for(method) {
                    out.insert(Combination { dataset: d.name.clone(), method, learner, loss, repetition });
                }
            }
        }
    }
    out.into_iter().collect()
}

/// Model selection for one combination on the outer split of L.
pub fn select_model(
    config: &ExperimentConfig,
    data: &PreparedDataset,
    combo: &Combination,
) -> Result<(QuantifierModel, Option<SelectionReport>)> {
    let seeds = RepetitionSeeds::derive(config.seed, &data.name, combo.repetition);
    let (tr, va) = stratified_split(&data.labelled.labels, config.train_fraction, seeds.split)?;
    let train = data.labelled.subset(&tr.indices)?;
    let validation = data.labelled.subset(&va.indices)?;
    let options = FitOptions { inner_train_fraction: config.inner_train_fraction, seed: seeds.fit, ..FitOptions::default() };
    match (combo.learner, combo.loss) {
        (Some(kind), Some(loss)) => {
            let grid = config.grid(kind)?;
            let plan = config.validation.plan(seeds.validation)?;
            let (model, report) = select(combo.method, &grid, &train, &validation, &plan, loss, &options)?;
            Ok((model, Some(report)))
        }
        _ => Ok((fit(combo.method, &train, None, &options)?, None)),
    }
}

/// Scores `model` on the test plan drawn from U.
pub fn evaluate_on_test(
    config: &ExperimentConfig,
    data: &PreparedDataset,
    combo: &Combination,
    model: &QuantifierModel,
) -> Result<Vec<ResultRow>> {
    let seeds = RepetitionSeeds::derive(config.seed, &data.name, combo.repetition);
    let plan = config.test.plan(seeds.test)?;
    let points = protocol_samples(&data.test.labels, &plan)?;
    let prepared = model.prepare(&data.test);
    let mut rows = Vec::with_capacity(plan.total_samples());
    for point in &points {
        for (sample_id, sample) in point.samples.iter().enumerate() {
            let truth = sample.prevalence();
            let estimate = model.estimate(&data.test, prepared.as_ref(), sample)?;
            rows.push(ResultRow {
                method: combo.method.code().into(),
                learner: combo.learner_code().into(),
                optimized_for: combo.loss_code().into(),
                dataset: data.name.clone(),
                grid_prevalence: point.prevalence,
                sample_id,
                repetition: combo.repetition,
                true_prevalence: truth.pos(),
                estimated_prevalence: estimate.pos(),
                ae: absolute_error(&truth, &estimate),
                rae: relative_absolute_error(&truth, &estimate, sample.len()),
            });
        }
    }
    Ok(rows)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Failure {
    pub combination: String,
    pub error: String,
}

#[derive(Debug, Default)]
pub struct RunSummary {
    pub completed: usize,
    pub resumed: usize,
    pub failures: Vec<Failure>,
    pub raw_csv: PathBuf,
}

/// Output layout of a protocol run.
#[derive(Debug, Clone)]
pub struct RunPaths {
    pub root: PathBuf,
}

impl RunPaths {
    pub fn new(root: impl Into<PathBuf>) -> Self {
        Self { root: root.into() }
    }

    pub fn parts(&self) -> PathBuf {
        self.root.join("parts")
    }

    pub fn part(&self, c: &Combination) -> PathBuf {
        self.parts().join(format!("{}.csv", c.file_stem()))
    }

    pub fn selection(&self, c: &Combination) -> PathBuf {
        self.root.join("selection").join(format!("{}.json", c.file_stem()))
    }

    pub fn raw(&self) -> PathBuf {
        self.root.join("raw.csv")
    }

    pub fn failures(&self) -> PathBuf {
        self.root.join("failures.csv")
    }

    pub fn manifest(&self) -> PathBuf {
        self.root.join("manifest.json")
    }
}

#[derive(Serialize)]
struct Manifest<'a> {
    config: &'a ExperimentConfig,
    rng: &'a str,
    stop_list: &'a str,
    repetition_seeds: Vec<(String, usize, RepetitionSeeds)>,
}

enum Message {
    Done { combo: Combination, rows: Vec<ResultRow>, report: Option<SelectionReport> },
    Failed { combo: Combination, error: String },
}

/// Runs every combination not already persisted under `config.output_dir`,
/// then merges all parts into `raw.csv` in canonical order.
pub fn run_protocol(config: &ExperimentConfig, jobs: Option<usize>) -> Result<RunSummary> {
    config.validate()?;
    let paths = RunPaths::new(&config.output_dir);
    std::fs::create_dir_all(paths.parts())?;
    std::fs::create_dir_all(paths.root.join("selection"))?;
    let combos = combinations(config);
    let todo: Vec<&Combination> = combos.iter().filter(|c| !paths.part(c).exists()).collect();
    let resumed = combos.len() - todo.len();

    let repetition_seeds = combos
        .iter()
        .map(|c| (c.dataset.clone(), c.repetition))
        .collect::<BTreeSet<_>>()
        .into_iter()
        .map(|(d, r)| {
            let s = RepetitionSeeds::derive(config.seed, &d, r);
            (d, r, s)
        })
        .collect();
    let manifest = Manifest { config, rng: RNG_NAME, stop_list: STOP_LIST_VERSION, repetition_seeds };
    write_atomic(&paths.manifest(), serde_json::to_string_pretty(&manifest)?.as_bytes())?;

    let pool = build_pool(jobs)?;
    let needed: BTreeSet<&str> = todo.iter().map(|c| c.dataset.as_str()).collect();
    let cache = cache_dir(config);
    let datasets: Vec<PreparedDataset> = config
        .datasets
        .iter()
        .filter(|d| needed.contains(d.name.as_str()))
        .map(|d| prepare_dataset(d, config.min_count, Some(&cache)))
        .collect::<Result<_>>()?;

    let (tx, rx) = mpsc::channel::<Message>();
    let writer_paths = paths.clone();
    let writer = std::thread::spawn(move || -> Result<Vec<Failure>> {
        let mut failures = Vec::new();
        for msg in rx {
            match msg {
                Message::Done { combo, rows, report } => {
                    if let Some(report) = report {
                        write_atomic(&writer_paths.selection(&combo), serde_json::to_string(&report)?.as_bytes())?;
                    }
                    // the part file is written last and marks completion
                    write_atomic(&writer_paths.part(&combo), &report::csv_bytes(&rows, false)?)?;
                    eprintln!("done {}", combo.file_stem());
                }
                Message::Failed { combo, error } => {
                    eprintln!("FAILED {}: {error}", combo.file_stem());
                    failures.push(Failure { combination: combo.file_stem(), error });
                }
            }
        }
        Ok(failures)
    });

    pool.install(|| {
        todo.par_iter().for_each_with(tx, |tx, combo| {
            let data = datasets.iter().find(|d| d.name == combo.dataset).expect("dataset prepared");
            let outcome = select_model(config, data, combo)
                .and_then(|(model, report)| Ok((evaluate_on_test(config, data, combo, &model)?, report)));
            let msg = match outcome {
                Ok((rows, report)) => Message::Done { combo: (*combo).clone(), rows, report },
                Err(e) => Message::Failed { combo: (*combo).clone(), error: format!("{e:#}") },
            };
            // the receiver only hangs up after a write error, reported below
            let _ = tx.send(msg);
        });
    });
    let mut failures = writer.join().map_err(|_| anyhow!("result writer panicked"))??;
    failures.sort_by(|a, b| a.combination.cmp(&b.combination));

    let mut w = csv::Writer::from_path(paths.failures())?;
    for f in &failures {
        w.serialize(f)?;
    }
    w.flush()?;

    merge_parts(&paths, &combos)?;
    Ok(RunSummary { completed: todo.len() - failures.len(), resumed, failures, raw_csv: paths.raw() })
}

/// Concatenates completed part files in canonical combination order.
pub fn merge_parts(paths: &RunPaths, combos: &[Combination]) -> Result<()> {
    let mut bytes = report::csv_bytes(&[], true)?;
    for c in combos {
        let part = paths.part(c);
        if part.exists() {
            bytes.extend(std::fs::read(&part).with_context(|| format!("reading {}", part.display()))?);
        }
    }
    write_atomic(&paths.raw(), &bytes)
}

pub fn build_pool(jobs: Option<usize>) -> Result<rayon::ThreadPool> {
    let mut b = rayon::ThreadPoolBuilder::new();
    if let Some(n) = jobs {
        b = b.num_threads(n);
    }
    Ok(b.build()?)
}
