//! Result rows, summaries and t-test tables.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;
use std::path::Path;

use anyhow::{bail, Context, Result};
use quantlearn::{absolute_error, paired_ttest, relative_absolute_error, PrevalenceVector, SelectionLoss, TTestVerdict};
use serde::{Deserialize, Serialize};

/// Placeholder in the learner and loss columns of classifier-free methods.
pub const NONE: &str = "-";

/// One test sample scored by one fitted quantifier.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultRow {
    pub method: String,
    pub learner: String,
    pub optimized_for: String,
    pub dataset: String,
    pub grid_prevalence: f64,
    pub sample_id: usize,
    pub repetition: usize,
    pub true_prevalence: f64,
    pub estimated_prevalence: f64,
    pub ae: f64,
    pub rae: f64,
}

impl ResultRow {
    /// Recomputes AE and RAE from the prevalence fields.
    pub fn recompute(&self, sample_size: usize) -> Result<(f64, f64)> {
        let p = PrevalenceVector::from_positive(self.true_prevalence)?;
        let q = PrevalenceVector::from_positive(self.estimated_prevalence)?;
        Ok((absolute_error(&p, &q), relative_absolute_error(&p, &q, sample_size)))
    }
}

/// Checks every row's error fields against recomputation.
pub fn audit_rows(rows: &[ResultRow], sample_size: usize, tolerance: f64) -> Result<()> {
    for (i, r) in rows.iter().enumerate() {
        let (ae, rae) = r.recompute(sample_size)?;
        if (ae - r.ae).abs() > tolerance || (rae - r.rae).abs() > tolerance {
            bail!("row {i}: stored ae/rae ({}, {}) disagree with recomputed ({ae}, {rae})", r.ae, r.rae);
        }
    }
    Ok(())
}

pub fn csv_bytes(rows: &[ResultRow], header: bool) -> Result<Vec<u8>> {
    let mut w = csv::WriterBuilder::new().has_headers(header).from_writer(Vec::new());
    for r in rows {
        w.serialize(r)?;
    }
    if header && rows.is_empty() {
        w.write_record(HEADER)?;
    }
    Ok(w.into_inner().map_err(|e| e.into_error())?)
}

pub const HEADER: [&str; 11] = [
    "method",
    "learner",
    "optimized_for",
    "dataset",
    "grid_prevalence",
    "sample_id",
    "repetition",
    "true_prevalence",
    "estimated_prevalence",
    "ae",
    "rae",
];

pub fn read_rows(path: &Path) -> Result<Vec<ResultRow>> {
    let mut r = csv::Reader::from_path(path).with_context(|| format!("opening {}", path.display()))?;
    r.deserialize().collect::<std::result::Result<Vec<_>, _>>().with_context(|| format!("parsing {}", path.display()))
}

pub fn parse_rows(bytes: &[u8], header: bool) -> Result<Vec<ResultRow>> {
    let mut r = csv::ReaderBuilder::new().has_headers(header).from_reader(bytes);
    Ok(r.deserialize().collect::<std::result::Result<Vec<_>, _>>()?)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryRow {
    pub dataset: String,
    pub method: String,
    pub learner: String,
    pub optimized_for: String,
    pub repetitions: usize,
    pub samples: usize,
    pub mean_ae: f64,
    pub mean_rae: f64,
}

/// Mean AE/RAE per dataset x method x learner x loss. Each repetition is
/// averaged first, then the repetition means are averaged.
pub fn summarize(rows: &[ResultRow]) -> Vec<SummaryRow> {
    type Key = (String, String, String, String);
    let mut groups: BTreeMap<Key, BTreeMap<usize, (f64, f64, usize)>> = BTreeMap::new();
    for r in rows {
        let key = (r.dataset.clone(), r.method.clone(), r.learner.clone(), r.optimized_for.clone());
        let acc = groups.entry(key).or_default().entry(r.repetition).or_insert((0.0, 0.0, 0));
        acc.0 += r.ae;
        acc.1 += r.rae;
        acc.2 += 1;
    }
    groups
        .into_iter()
        .map(|((dataset, method, learner, optimized_for), reps)| {
            let k = reps.len() as f64;
            let mean_ae = reps.values().map(|(ae, _, n)| ae / *n as f64).sum::<f64>() / k;
            let mean_rae = reps.values().map(|(_, rae, n)| rae / *n as f64).sum::<f64>() / k;
            SummaryRow {
                dataset,
                method,
                learner,
                optimized_for,
                repetitions: reps.len(),
                samples: reps.values().map(|v| v.2).sum(),
                mean_ae,
                mean_rae,
            }
        })
        .collect()
}

/// Left-aligned text columns, numbers pre-rendered by the caller.
pub fn aligned_table(header: &[&str], body: &[Vec<String>]) -> String {
    let mut widths: Vec<usize> = header.iter().map(|h| h.chars().count()).collect();
    for row in body {
        for (w, cell) in widths.iter_mut().zip(row) {
            *w = (*w).max(cell.chars().count());
        }
    }
    let mut out = String::new();
    let mut line = |cells: &mut dyn Iterator<Item = &str>| {
        let parts: Vec<String> = cells.zip(&widths).map(|(c, w)| format!("{c:<w$}")).collect();
        let _ = writeln!(out, "{}", parts.join("  ").trim_end());
    };
    line(&mut header.iter().copied());
    let rule: Vec<String> = widths.iter().map(|w| "-".repeat(*w)).collect();
    line(&mut rule.iter().map(String::as_str));
    for row in body {
        line(&mut row.iter().map(String::as_str));
    }
    out
}

pub fn summary_text(summary: &[SummaryRow]) -> String {
    let body: Vec<Vec<String>> = summary
        .iter()
        .map(|s| {
            vec![
                s.dataset.clone(),
                s.method.clone(),
                s.learner.clone(),
                s.optimized_for.clone(),
                s.repetitions.to_string(),
                format!("{:.3}", s.mean_ae),
                format!("{:.3}", s.mean_rae),
            ]
        })
        .collect();
    aligned_table(&["dataset", "method", "learner", "optimized_for", "reps", "AE", "RAE"], &body)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Metric {
    Ae,
    Rae,
}

impl Metric {
    pub fn of(self, r: &ResultRow) -> f64 {
        match self {
            Metric::Ae => r.ae,
            Metric::Rae => r.rae,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Metric::Ae => "ae",
            Metric::Rae => "rae",
        }
    }
}

impl std::str::FromStr for Metric {
    type Err = anyhow::Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "ae" => Ok(Metric::Ae),
            "rae" => Ok(Metric::Rae),
            other => bail!("unknown metric {other:?}"),
        }
    }
}

/// Identifies one test sample independently of the loss a model was selected
/// with.
pub type PairKey = (String, String, String, usize, u64, usize);

pub fn pair_key(r: &ResultRow) -> PairKey {
    (r.dataset.clone(), r.method.clone(), r.learner.clone(), r.repetition, r.grid_prevalence.to_bits(), r.sample_id)
}

/// Pairs rows of `a` and `b` sample by sample and returns aligned metric
/// vectors. Fails if either side has two rows for one sample.
pub fn pair_rows(a: &[&ResultRow], b: &[&ResultRow], metric: Metric) -> Result<(Vec<f64>, Vec<f64>)> {
    let mut index = BTreeMap::new();
    for r in b {
        if index.insert(pair_key(r), metric.of(r)).is_some() {
            bail!("ambiguous pairing: several rows for {:?}", pair_key(r));
        }
    }
    let mut seen = BTreeSet::new();
    let (mut xa, mut xb) = (Vec::new(), Vec::new());
    for r in a {
        let key = pair_key(r);
        if let Some(v) = index.get(&key) {
            if !seen.insert(key.clone()) {
                bail!("ambiguous pairing: several rows for {key:?}");
            }
            xa.push(metric.of(r));
            xb.push(*v);
        }
    }
    Ok((xa, xb))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TTestRow {
    pub method: String,
    pub metric: Metric,
    pub loss_a: String,
    pub loss_b: String,
    pub pairs: usize,
    pub mean_a: f64,
    pub mean_b: f64,
    pub t: f64,
    pub df: usize,
    pub p_value: f64,
    pub symbol: String,
}

impl TTestRow {
    fn new(method: &str, metric: Metric, loss_a: &str, loss_b: &str, a: &[f64], b: &[f64], v: &TTestVerdict) -> Self {
        let mean = |x: &[f64]| x.iter().sum::<f64>() / x.len() as f64;
        Self {
            method: method.into(),
            metric,
            loss_a: loss_a.into(),
            loss_b: loss_b.into(),
            pairs: a.len(),
            mean_a: mean(a),
            mean_b: mean(b),
            t: v.t,
            df: v.df,
            p_value: v.p_value,
            symbol: v.verdict.symbol().into(),
        }
    }
}

/// For every method, compares each pair of selection losses on identical
/// test samples, pooled over datasets, learners and repetitions.
pub fn loss_ttests(rows: &[ResultRow]) -> Result<Vec<TTestRow>> {
    let mut by_method: BTreeMap<&str, BTreeMap<&str, Vec<&ResultRow>>> = BTreeMap::new();
    for r in rows.iter().filter(|r| r.optimized_for != NONE) {
        by_method.entry(&r.method).or_default().entry(&r.optimized_for).or_default().push(r);
    }
    let mut out = Vec::new();
    for (method, by_loss) in &by_method {
        let mut losses: Vec<&&str> = by_loss.keys().collect();
        // quantification losses first: AE, RAE, A, F1
        losses.sort_by_key(|l| (l.parse::<SelectionLoss>().ok(), l.to_string()));
        for (i, la) in losses.iter().enumerate() {
            for lb in &losses[i + 1..] {
                for metric in [Metric::Ae, Metric::Rae] {
                    let (a, b) = pair_rows(&by_loss[**la], &by_loss[**lb], metric)?;
                    if a.len() < 2 {
                        continue;
                    }
                    let v = paired_ttest(&a, &b)?;
                    out.push(TTestRow::new(method, metric, la, lb, &a, &b, &v));
                }
            }
        }
    }
    Ok(out)
}

/// Method rows by "loss_a vs loss_b" columns, holding verdict symbols.
pub fn ttest_matrix(tests: &[TTestRow], metric: Metric) -> (Vec<String>, Vec<Vec<String>>) {
    let tests: Vec<&TTestRow> = tests.iter().filter(|t| t.metric == metric).collect();
    let columns: BTreeSet<String> = tests.iter().map(|t| format!("{} vs {}", t.loss_a, t.loss_b)).collect();
    let methods: BTreeSet<&str> = tests.iter().map(|t| t.method.as_str()).collect();
    let mut header = vec!["method".to_string()];
    header.extend(columns.iter().cloned());
    let body = methods
        .into_iter()
        .map(|m| {
            let mut row = vec![m.to_string()];
            for c in &columns {
                let cell = tests
                    .iter()
                    .find(|t| t.method == m && &format!("{} vs {}", t.loss_a, t.loss_b) == c)
                    .map(|t| t.symbol.clone())
                    .unwrap_or_default();
                row.push(cell);
            }
            row
        })
        .collect();
    (header, body)
}

fn write_csv<S: Serialize>(path: &Path, items: &[S]) -> Result<()> {
    let mut w = csv::Writer::from_path(path).with_context(|| format!("writing {}", path.display()))?;
    for item in items {
        w.serialize(item)?;
    }
    w.flush()?;
    Ok(())
}

/// Writes raw rows, the summary (CSV and text) and the t-test tables.
pub fn report(rows: &[ResultRow], dir: &Path) -> Result<()> {
    if rows.is_empty() {
        bail!("no result rows to report");
    }
    std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    std::fs::write(dir.join("raw.csv"), csv_bytes(rows, true)?)?;
    write_report_tables(rows, dir)
}

/// Everything [`report`] writes except the raw rows.
pub fn write_report_tables(rows: &[ResultRow], dir: &Path) -> Result<()> {
    let summary = summarize(rows);
    write_csv(&dir.join("summary.csv"), &summary)?;
    std::fs::write(dir.join("summary.txt"), summary_text(&summary))?;
    let tests = loss_ttests(rows)?;
    write_csv(&dir.join("ttest.csv"), &tests)?;
    for metric in [Metric::Ae, Metric::Rae] {
        let (header, body) = ttest_matrix(&tests, metric);
        let path = dir.join(format!("ttest_matrix_{}.csv", metric.name()));
        let mut w = csv::Writer::from_path(&path).with_context(|| format!("writing {}", path.display()))?;
        w.write_record(&header)?;
        for row in &body {
            w.write_record(row)?;
        }
        w.flush()?;
    }
    Ok(())
}
