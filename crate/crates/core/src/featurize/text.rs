//! Description cleaning and hashed bag-of-words vectors.

use serde::{Deserialize, Serialize};

const FNV_OFFSET: u64 = 0xcbf2_9ce4_8422_2325;
const FNV_PRIME: u64 = 0x0000_0100_0000_01b3;

/// 64-bit FNV-1a.
pub fn fnv1a64(bytes: &[u8]) -> u64 {
    bytes
        .iter()
        .fold(FNV_OFFSET, |h, &b| (h ^ b as u64).wrapping_mul(FNV_PRIME))
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct TokenList(Vec<String>);

impl TokenList {
    pub fn tokens(&self) -> &[String] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

impl From<Vec<&str>> for TokenList {
    /// Lowercases and drops empty strings.
    fn from(tokens: Vec<&str>) -> Self {
        TokenList(
            tokens
                .into_iter()
                .filter(|t| !t.is_empty())
                .map(str::to_lowercase)
                .collect(),
        )
    }
}

/// Lowercases and splits on runs of non-alphanumeric characters.
pub fn clean_tokenize(description: &str) -> TokenList {
    TokenList(
        description
            .split(|c: char| !c.is_alphanumeric())
            .filter(|t| !t.is_empty())
            .map(str::to_lowercase)
            .collect(),
    )
}

/// Each token adds 1 at `fnv1a64(token) mod dim`; the result is L2-normalised
/// unless it is all zeros.
pub fn text_vector(tokens: &TokenList, dim: usize) -> Vec<f64> {
    assert!(dim > 0, "text dimension must be positive");
    let mut v = vec![0.0; dim];
    for t in tokens.tokens() {
        v[(fnv1a64(t.as_bytes()) % dim as u64) as usize] += 1.0;
    }
    let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    if norm > 0.0 {
        v.iter_mut().for_each(|x| *x /= norm);
    }
    v
}
