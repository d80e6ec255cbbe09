//! TSV datasets: one document per line, `label<TAB>text`.
//!
//! Labels are `1`/`0` or `positive`/`negative` (any case). Blank lines are
//! skipped.

use std::io::Write;
use std::path::Path;

use anyhow::{anyhow, bail, Context, Result};
use quantlearn::{BinaryLabelVector, Corpus, Label};

pub fn parse_label(token: &str) -> Option<Label> {
    match token.trim().to_ascii_lowercase().as_str() {
        "1" | "positive" => Some(Label::Positive),
        "0" | "negative" => Some(Label::Negative),
        _ => None,
    }
}

pub fn parse_dataset(name: &str, text: &str) -> Result<Corpus> {
    let mut documents = Vec::new();
    let mut labels = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line_no = i + 1;
        if line.trim().is_empty() {
            continue;
        }
        let (label, doc) = line
            .split_once('\t')
            .ok_or_else(|| anyhow!("line {line_no}: malformed line, expected label<TAB>text"))?;
        let label = parse_label(label).ok_or_else(|| anyhow!("line {line_no}: unknown label {label:?}"))?;
        labels.push(label);
        documents.push(doc.to_owned());
    }
    if documents.is_empty() {
        bail!("empty corpus");
    }
    Ok(Corpus::new(name, documents, BinaryLabelVector::new(labels)?)?)
}

pub fn load_dataset(path: &Path) -> Result<Corpus> {
    let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let name = path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    parse_dataset(&name, &text).with_context(|| format!("loading {}", path.display()))
}

/// Writes a corpus as TSV; tabs and newlines inside documents become spaces.
pub fn write_dataset(corpus: &Corpus, path: &Path) -> Result<()> {
    let mut out = std::io::BufWriter::new(std::fs::File::create(path).with_context(|| format!("creating {}", path.display()))?);
    for (doc, label) in corpus.documents.iter().zip(corpus.labels.as_slice()) {
        let clean: String = doc.chars().map(|c| if matches!(c, '\t' | '\n' | '\r') { ' ' } else { c }).collect();
        writeln!(out, "{}\t{}", u8::from(label.is_positive()), clean)?;
    }
    out.flush()?;
    Ok(())
}
