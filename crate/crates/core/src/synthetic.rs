//! Synthetic labelled text for dataset-free runs.
//!
//! Each class owns a block of indicative words; every token is drawn from
//! the document's own block with probability `signal`, otherwise uniformly
//! from the whole vocabulary (which includes the other class's block).

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{QuantError, Result};
use crate::prevalence::{BinaryLabelVector, Label};
use crate::sampling::rng_from_seed;
use crate::text::Corpus;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticSpec {
    pub n_docs: usize,
    pub prevalence: f64,
    pub vocabulary: usize,
    pub indicative_words: usize,
    /// Probability that a token comes from the class block.
    pub signal: f64,
    pub min_length: usize,
    pub max_length: usize,
    pub seed: u64,
}

impl Default for SyntheticSpec {
    fn default() -> Self {
        Self {
            n_docs: 2000,
            prevalence: 0.9,
            vocabulary: 600,
            indicative_words: 40,
            signal: 0.08,
            min_length: 20,
            max_length: 60,
            seed: 0,
        }
    }
}

fn word(i: usize) -> String {
    format!("w{i:04}")
}

/// Generates a corpus with exactly `round(prevalence * n_docs)` positives in
/// shuffled order.
pub fn synthetic_corpus(name: &str, spec: &SyntheticSpec) -> Result<Corpus> {
    if spec.n_docs == 0 {
        return Err(QuantError::EmptySample);
    }
    if !(0.0..=1.0).contains(&spec.prevalence) || !(0.0..=1.0).contains(&spec.signal) {
        return Err(QuantError::InvalidArgument("prevalence and signal must lie in [0, 1]".into()));
    }
    if 2 * spec.indicative_words > spec.vocabulary || spec.indicative_words == 0 {
        return Err(QuantError::InvalidArgument("need 0 < 2 * indicative_words <= vocabulary".into()));
    }
    if spec.min_length == 0 || spec.min_length > spec.max_length {
        return Err(QuantError::InvalidArgument("need 0 < min_length <= max_length".into()));
    }
    let mut rng = rng_from_seed(spec.seed);
    let n_pos = (spec.prevalence * spec.n_docs as f64).round() as usize;
    let mut labels: Vec<Label> = (0..spec.n_docs).map(|i| Label::from_bool(i < n_pos)).collect();
    labels.shuffle(&mut rng);
    let k = spec.indicative_words;
    let documents = labels
        .iter()
        .map(|label| {
            let offset = if label.is_positive() { 0 } else { k };
            let len = rng.random_range(spec.min_length..=spec.max_length);
            (0..len)
                .map(|_| {
                    if rng.random_bool(spec.signal) {
                        word(offset + rng.random_range(0..k))
                    } else {
                        word(rng.random_range(0..spec.vocabulary))
                    }
                })
                .collect::<Vec<_>>()
                .join(" ")
        })
        .collect();
    Corpus::new(name, documents, BinaryLabelVector::new(labels)?)
}
