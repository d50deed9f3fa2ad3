//! Seeded, stratified train/test splitting.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::label::{ClassLabel, NUM_CLASSES};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Split {
    /// Ascending indices into the input.
    pub train: Vec<usize>,
    /// Ascending indices into the input.
    pub test: Vec<usize>,
}

/// Puts `round(test_fraction * n_k)` rows of every class `k` into the test
/// side, chosen by a seeded shuffle. Classes with a single row stay in train.
pub fn stratified_split(labels: &[ClassLabel], test_fraction: f64, seed: u64) -> Split {
    let fraction = test_fraction.clamp(0.0, 1.0);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut per_class: [Vec<usize>; NUM_CLASSES] = Default::default();
    for (i, l) in labels.iter().enumerate() {
        per_class[l.index()].push(i);
    }
    let mut split = Split {
        train: Vec::with_capacity(labels.len()),
        test: Vec::new(),
    };
    for mut idx in per_class {
        idx.shuffle(&mut rng);
        let n_test = if idx.len() < 2 {
            0
        } else {
            ((idx.len() as f64 * fraction).round() as usize).min(idx.len() - 1)
        };
        split.test.extend_from_slice(&idx[..n_test]);
        split.train.extend_from_slice(&idx[n_test..]);
    }
    split.train.sort_unstable();
    split.test.sort_unstable();
    split
}
