//! Post text encoders.
//!
//! The default encoder is a seeded hashed bag-of-tokens: tokens are hashed
//! into a fixed bucket table and projected through a frozen random matrix.
//! It is deterministic, stateless, and needs no external weight files;
//! heavier encoders (for example a frozen pretrained transformer emitting
//! one vector per post) can be swapped in by implementing [`TextEncoder`].

use crate::linalg::{Mat, Vec1};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

/// Maps a post's text to a fixed-size vector.
///
/// Implementations must be deterministic and stateless; the trainer treats
/// them as frozen and never propagates gradients into them.
pub trait TextEncoder: Send + Sync {
    fn dim(&self) -> usize;
    fn encode(&self, text: &str) -> Vec1;
}

/// Number of hash buckets.
pub const HASH_BUCKETS: usize = 1 << 14;

/// Hashed bag-of-tokens encoder.
///
/// Text is lowercased and split on non-alphanumeric characters, truncated
/// to `max_tokens` tokens. Each token selects a bucket via FNV-1a, each
/// bucket owns a frozen random row of the projection table, and the post
/// vector is the L2-normalized mean of the selected rows (with
/// multiplicity). Empty text maps to the zero vector.
pub struct HashedBowEncoder {
    dim: usize,
    max_tokens: usize,
    /// HASH_BUCKETS × dim, entries N(0,1)/√dim, fixed by the seed.
    projection: Mat,
}

impl HashedBowEncoder {
    pub fn new(dim: usize, seed: u64, max_tokens: usize) -> Self {
        assert!(dim > 0 && max_tokens > 0);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let normal = Normal::new(0.0, 1.0).unwrap();
        let scale = 1.0 / (dim as f64).sqrt();
        let mut projection = Mat::zeros((HASH_BUCKETS, dim));
        for v in projection.iter_mut() {
            *v = normal.sample(&mut rng) * scale;
        }
        Self {
            dim,
            max_tokens,
            projection,
        }
    }

    fn bucket(token: &str) -> usize {
        (fnv1a(token.as_bytes()) % HASH_BUCKETS as u64) as usize
    }
}

impl TextEncoder for HashedBowEncoder {
    fn dim(&self) -> usize {
        self.dim
    }

    fn encode(&self, text: &str) -> Vec1 {
        let mut acc = Vec1::zeros(self.dim);
        let mut count = 0usize;
        for raw in text
            .split(|c: char| !c.is_alphanumeric())
            .filter(|t| !t.is_empty())
            .take(self.max_tokens)
        {
            let token = raw.to_lowercase();
            acc += &self.projection.row(Self::bucket(&token));
            count += 1;
        }
        if count == 0 {
            return acc;
        }
        acc /= count as f64;
        let norm = acc.dot(&acc).sqrt();
        if norm > 0.0 {
            acc /= norm;
        }
        acc
    }
}

/// FNV-1a over the token's UTF-8 bytes.
fn fnv1a(bytes: &[u8]) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for &b in bytes {
        h ^= b as u64;
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    h
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn case_and_punctuation_insensitive() {
        let enc = HashedBowEncoder::new(8, 3, 50);
        assert_eq!(enc.encode("Hello, WORLD!"), enc.encode("hello world"));
        assert_eq!(enc.encode("a--b  c"), enc.encode("a b c"));
    }

    #[test]
    fn truncates_to_max_tokens() {
        let enc = HashedBowEncoder::new(8, 3, 50);
        let long: Vec<String> = (0..60).map(|i| format!("tok{i}")).collect();
        let head = long[..50].join(" ");
        assert_eq!(enc.encode(&long.join(" ")), enc.encode(&head));
        assert_ne!(enc.encode(&long[..49].join(" ")), enc.encode(&head));
    }

    #[test]
    fn empty_and_symbol_only_text_is_zero() {
        let enc = HashedBowEncoder::new(8, 3, 50);
        assert!(enc.encode("").iter().all(|&v| v == 0.0));
        assert!(enc.encode("!!! ... ??").iter().all(|&v| v == 0.0));
    }

    #[test]
    fn nonempty_output_has_unit_norm() {
        let enc = HashedBowEncoder::new(16, 9, 50);
        for text in ["one", "a b c d", "再 见 world", "x x x"] {
            let v = enc.encode(text);
            let norm = v.dot(&v).sqrt();
            assert!((norm - 1.0).abs() < 1e-12, "{text}: norm {norm}");
        }
    }

    #[test]
    fn matches_hand_recomputed_bag() {
        // Independent recomputation: hash each token with FNV-1a written
        // out locally, average the projection rows, normalize.
        let enc = HashedBowEncoder::new(4, 11, 50);
        let text = "spread the Word word";
        let tokens = ["spread", "the", "word", "word"];
        let mut expect = Vec1::zeros(4);
        for tok in tokens {
            let mut h: u64 = 0xcbf29ce484222325;
            for &b in tok.as_bytes() {
                h ^= b as u64;
                h = h.wrapping_mul(0x100000001b3);
            }
            let bucket = (h % (1u64 << 14)) as usize;
            expect += &enc.projection.row(bucket);
        }
        expect /= 4.0;
        let norm = expect.dot(&expect).sqrt();
        expect /= norm;
        let got = enc.encode(text);
        for (a, b) in got.iter().zip(expect.iter()) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn same_seed_same_projection() {
        let a = HashedBowEncoder::new(8, 42, 50);
        let b = HashedBowEncoder::new(8, 42, 50);
        assert_eq!(a.encode("deterministic by seed"), b.encode("deterministic by seed"));
        let c = HashedBowEncoder::new(8, 43, 50);
        assert_ne!(a.encode("deterministic by seed"), c.encode("deterministic by seed"));
    }
}
