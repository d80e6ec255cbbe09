//! The artificial-prevalence sampling protocol and stratified splits.
//!
//! Samples are index lists into a labelled pool; the pool itself is never
//! touched. All randomness comes from [`ChaCha8Rng`] seeded through
//! [`derive_seed`], so a plan reproduces bit-for-bit on any platform and
//! regardless of the order in which its samples are generated.

use rand::seq::{index, SliceRandom};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{QuantError, Result};
use crate::prevalence::{BinaryLabelVector, Label, PrevalenceVector};

/// Name of the generator behind every sampling decision, recorded in experiment output.
pub const RNG_NAME: &str = "ChaCha8 (rand_chacha 0.9), seeds mixed with SplitMix64";

/// SplitMix64 finalizer.
fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Mixes a master seed with a path of coordinates into a child seed.
pub fn derive_seed(master: u64, path: &[u64]) -> u64 {
    path.iter()
        .fold(splitmix64(master), |acc, &p| splitmix64(acc ^ splitmix64(p)))
}

pub fn rng_from_seed(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Request for one sample at a prescribed prevalence.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SampleSpec {
    pub target_prevalence: f64,
    pub size: usize,
    pub seed: u64,
}

impl SampleSpec {
    pub fn new(target_prevalence: f64, size: usize, seed: u64) -> Result<Self> {
        if !(0.0..=1.0).contains(&target_prevalence) {
            return Err(QuantError::InvalidArgument(format!(
                "target prevalence {target_prevalence} outside [0, 1]"
            )));
        }
        if size == 0 {
            return Err(QuantError::InvalidArgument("sample size must be positive".into()));
        }
        Ok(Self { target_prevalence, size, seed })
    }

    /// Number of positives drawn: `round(pi * q)`, halves away from zero.
    pub fn positive_count(&self) -> usize {
        (self.target_prevalence * self.size as f64).round() as usize
    }
}

/// One drawn sample.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SampleIndex {
    pub indices: Vec<usize>,
    pub positives: usize,
}

impl SampleIndex {
    pub fn len(&self) -> usize {
        self.indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }

    /// Realized prevalence of the sample.
    pub fn prevalence(&self) -> PrevalenceVector {
        PrevalenceVector::from_positive(self.positives as f64 / self.indices.len() as f64)
            .expect("positives never exceed sample size")
    }
}

/// The 21-point grid {0.00, 0.05, ..., 1.00}.
pub fn default_grid() -> Vec<f64> {
    (0..=20).map(|i| i as f64 / 20.0).collect()
}

/// A sampling plan: `samples_per_point` samples of `sample_size` documents
/// at every grid prevalence.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProtocolPlan {
    pub grid: Vec<f64>,
    pub samples_per_point: usize,
    pub sample_size: usize,
    pub master_seed: u64,
}

impl ProtocolPlan {
    pub fn new(grid: Vec<f64>, samples_per_point: usize, sample_size: usize, master_seed: u64) -> Result<Self> {
        let plan = Self { grid, samples_per_point, sample_size, master_seed };
        plan.validate()?;
        Ok(plan)
    }

    /// Model-selection plan: 21 points, m = 10, q = 500.
    pub fn validation_default(master_seed: u64) -> Self {
        Self { grid: default_grid(), samples_per_point: 10, sample_size: 500, master_seed }
    }

    /// Evaluation plan: 21 points, m = 100, q = 500.
    pub fn test_default(master_seed: u64) -> Self {
        Self { grid: default_grid(), samples_per_point: 100, sample_size: 500, master_seed }
    }

    pub fn validate(&self) -> Result<()> {
        if self.grid.is_empty() {
            return Err(QuantError::InvalidArgument("empty prevalence grid".into()));
        }
        if self.grid.iter().any(|p| !(0.0..=1.0).contains(p)) {
            return Err(QuantError::InvalidArgument("grid prevalence outside [0, 1]".into()));
        }
        if self.grid.windows(2).any(|w| w[0] >= w[1]) {
            return Err(QuantError::InvalidArgument("grid must be strictly increasing".into()));
        }
        if self.samples_per_point == 0 || self.sample_size == 0 {
            return Err(QuantError::InvalidArgument("m and q must be positive".into()));
        }
        Ok(())
    }

    pub fn total_samples(&self) -> usize {
        self.grid.len() * self.samples_per_point
    }

    /// Spec of the `sample`-th draw at grid position `point`.
    pub fn sample_spec(&self, point: usize, sample: usize) -> SampleSpec {
        SampleSpec {
            target_prevalence: self.grid[point],
            size: self.sample_size,
            seed: derive_seed(self.master_seed, &[point as u64, sample as u64]),
        }
    }
}

fn draw_class(rng: &mut ChaCha8Rng, members: &[usize], need: usize, out: &mut Vec<usize>) {
    if need == 0 {
        return;
    }
    if members.len() >= need {
        out.extend(index::sample(rng, members.len(), need).into_iter().map(|i| members[i]));
    } else {
        out.extend((0..need).map(|_| members[rng.random_range(0..members.len())]));
    }
}

/// Draws one sample by undersampling each class to its required count.
///
/// A class is sampled without replacement when the pool holds enough of its
/// documents and with replacement otherwise.
pub fn generate_indices(pool_labels: &BinaryLabelVector, spec: &SampleSpec) -> Result<SampleIndex> {
    let positives = pool_labels.positions(Label::Positive);
    let negatives = pool_labels.positions(Label::Negative);
    sample_from_partition(&positives, &negatives, spec)
}

fn sample_from_partition(positives: &[usize], negatives: &[usize], spec: &SampleSpec) -> Result<SampleIndex> {
    let n_pos = spec.positive_count();
    let n_neg = spec.size - n_pos;
    if n_pos > 0 && positives.is_empty() {
        return Err(QuantError::ClassUnavailable(Label::Positive));
    }
    if n_neg > 0 && negatives.is_empty() {
        return Err(QuantError::ClassUnavailable(Label::Negative));
    }
    let mut rng = rng_from_seed(spec.seed);
    let mut indices = Vec::with_capacity(spec.size);
    draw_class(&mut rng, positives, n_pos, &mut indices);
    draw_class(&mut rng, negatives, n_neg, &mut indices);
    Ok(SampleIndex { indices, positives: n_pos })
}

/// Samples drawn at one grid prevalence.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridPoint {
    pub prevalence: f64,
    pub samples: Vec<SampleIndex>,
}

/// Every sample of a plan, grouped by grid point in grid order.
pub fn protocol_samples(pool_labels: &BinaryLabelVector, plan: &ProtocolPlan) -> Result<Vec<GridPoint>> {
    plan.validate()?;
    let positives = pool_labels.positions(Label::Positive);
    let negatives = pool_labels.positions(Label::Negative);
    (0..plan.grid.len())
        .into_par_iter()
        .map(|point| {
            let samples = (0..plan.samples_per_point)
                .map(|s| sample_from_partition(&positives, &negatives, &plan.sample_spec(point, s)))
                .collect::<Result<Vec<_>>>()?;
            Ok(GridPoint { prevalence: plan.grid[point], samples })
        })
        .collect()
}

/// Splits a pool into disjoint train and holdout parts with the pool's
/// prevalence: each class contributes `round(fraction * class size)`
/// documents to train and the rest to holdout. Indices come back sorted.
pub fn stratified_split(
    labels: &BinaryLabelVector,
    train_fraction: f64,
    seed: u64,
) -> Result<(SampleIndex, SampleIndex)> {
    if !(train_fraction > 0.0 && train_fraction < 1.0) {
        return Err(QuantError::InvalidArgument(format!(
            "train fraction {train_fraction} outside (0, 1)"
        )));
    }
    let mut rng = rng_from_seed(seed);
    let mut train = Vec::new();
    let mut holdout = Vec::new();
    let mut train_pos = 0;
    let mut holdout_pos = 0;
    for label in [Label::Positive, Label::Negative] {
        let mut members = labels.positions(label);
        if members.is_empty() {
            return Err(QuantError::DegenerateStratification(label));
        }
        members.shuffle(&mut rng);
        let k = (train_fraction * members.len() as f64).round() as usize;
        if label.is_positive() {
            train_pos = k;
            holdout_pos = members.len() - k;
        }
        train.extend_from_slice(&members[..k]);
        holdout.extend_from_slice(&members[k..]);
    }
    train.sort_unstable();
    holdout.sort_unstable();
    Ok((
        SampleIndex { indices: train, positives: train_pos },
        SampleIndex { indices: holdout, positives: holdout_pos },
    ))
}
