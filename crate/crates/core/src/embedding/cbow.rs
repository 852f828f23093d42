//! Small single-threaded CBOW trainer with negative sampling.
//!
//! Follows the word2vec recipe: averaged context vectors, a dynamically
//! shrunk window, noise words drawn from the unigram distribution raised to
//! 0.75, and a learning rate that decays linearly over all epochs. Output is
//! a pure function of the corpus and the configuration, seed included.

use std::collections::HashMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{EmbeddingError, EmbeddingStore, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CbowConfig {
    pub window: usize,
    pub dim: usize,
    pub epochs: usize,
    pub learning_rate: f32,
    /// Fraction of `learning_rate` below which the decay stops.
    pub min_learning_rate_ratio: f32,
    pub negative: usize,
    pub min_count: usize,
    pub seed: u64,
    pub case_fold: bool,
}

impl Default for CbowConfig {
    fn default() -> Self {
        CbowConfig {
            window: 5,
            dim: 200,
            epochs: 5,
            learning_rate: 0.05,
            min_learning_rate_ratio: 1e-4,
            negative: 5,
            min_count: 5,
            seed: 1,
            case_fold: false,
        }
    }
}

impl CbowConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |what: &str| Err(EmbeddingError::InvalidConfig(what.to_string()));
        if self.window < 1 {
            return bad("window must be at least 1");
        }
        if self.dim < 1 {
            return bad("dim must be at least 1");
        }
        if self.negative < 1 {
            return bad("negative samples must be at least 1");
        }
        if self.min_count < 1 {
            return bad("min-count must be at least 1");
        }
        if self.epochs < 1 {
            return bad("epochs must be at least 1");
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return bad("learning rate must be positive");
        }
        Ok(())
    }
}

const NOISE_POWER: f64 = 0.75;

/// Trains CBOW vectors over `sentences`; vocabulary order is by descending
/// frequency, ties by first occurrence.
pub fn train_cbow<S, T>(sentences: &[S], config: &CbowConfig) -> Result<EmbeddingStore>
where
    S: AsRef<[T]>,
    T: AsRef<str>,
{
    config.validate()?;
    let fold = |t: &str| {
        if config.case_fold {
            t.to_lowercase()
        } else {
            t.to_string()
        }
    };

    // vocabulary
    let mut counts: HashMap<String, (usize, usize)> = HashMap::new();
    let mut order = 0;
    for s in sentences {
        for t in s.as_ref() {
            let e = counts.entry(fold(t.as_ref())).or_insert_with(|| {
                order += 1;
                (0, order)
            });
            e.0 += 1;
        }
    }
    let mut vocab: Vec<(String, usize, usize)> = counts
        .into_iter()
        .filter(|(_, (c, _))| *c >= config.min_count)
        .map(|(w, (c, o))| (w, c, o))
        .collect();
    if vocab.is_empty() {
        return Err(EmbeddingError::EmptyVocabulary);
    }
    vocab.sort_by(|a, b| b.1.cmp(&a.1).then(a.2.cmp(&b.2)));
    let index: HashMap<&str, usize> = vocab.iter().enumerate().map(|(i, (w, _, _))| (w.as_str(), i)).collect();

    let encoded: Vec<Vec<usize>> = sentences
        .iter()
        .map(|s| {
            s.as_ref()
                .iter()
                .filter_map(|t| index.get(fold(t.as_ref()).as_str()).copied())
                .collect()
        })
        .filter(|s: &Vec<usize>| !s.is_empty())
        .collect();
    let total_tokens: usize = encoded.iter().map(Vec::len).sum();

    let noise = NoiseTable::new(vocab.iter().map(|v| v.1));
    let dim = config.dim;
    let n = vocab.len();
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut input: Vec<f32> = (0..n * dim).map(|_| (rng.random::<f32>() - 0.5) / dim as f32).collect();
    let mut output = vec![0f32; n * dim];

    let mut hidden = vec![0f32; dim];
    let mut grad = vec![0f32; dim];
    let mut context = Vec::with_capacity(2 * config.window);
    let planned = (total_tokens * config.epochs).max(1) as f64;
    let floor = config.learning_rate * config.min_learning_rate_ratio;
    let mut processed = 0usize;

    for _ in 0..config.epochs {
        for sentence in &encoded {
            for (pos, &center) in sentence.iter().enumerate() {
                let alpha = (config.learning_rate * (1.0 - (processed as f64 / planned) as f32)).max(floor);
                processed += 1;

                let shrink = rng.random_range(0..config.window);
                let reach = config.window - shrink;
                context.clear();
                let lo = pos.saturating_sub(reach);
                let hi = (pos + reach).min(sentence.len() - 1);
                context.extend((lo..=hi).filter(|&j| j != pos).map(|j| sentence[j]));
                if context.is_empty() {
                    continue;
                }

                hidden.fill(0.0);
                for &c in &context {
                    for (h, v) in hidden.iter_mut().zip(&input[c * dim..(c + 1) * dim]) {
                        *h += v;
                    }
                }
                let scale = 1.0 / context.len() as f32;
                hidden.iter_mut().for_each(|h| *h *= scale);
                grad.fill(0.0);

                for d in 0..=config.negative {
                    let (target, label) = if d == 0 {
                        (center, 1.0)
                    } else {
                        let t = noise.sample(&mut rng);
                        if t == center {
                            continue;
                        }
                        (t, 0.0)
                    };
                    let out = &mut output[target * dim..(target + 1) * dim];
                    let f: f32 = hidden.iter().zip(out.iter()).map(|(a, b)| a * b).sum();
                    let g = (label - sigmoid(f)) * alpha;
                    for ((e, o), h) in grad.iter_mut().zip(out.iter_mut()).zip(&hidden) {
                        *e += g * *o;
                        *o += g * h;
                    }
                }
                for &c in &context {
                    for (v, e) in input[c * dim..(c + 1) * dim].iter_mut().zip(&grad) {
                        *v += e;
                    }
                }
            }
        }
    }

    let words = vocab.into_iter().map(|(w, _, _)| w).collect();
    EmbeddingStore::new(words, dim, input)
}

fn sigmoid(x: f32) -> f32 {
    if x > 6.0 {
        1.0
    } else if x < -6.0 {
        0.0
    } else {
        1.0 / (1.0 + (-x).exp())
    }
}

/// Cumulative unigram^0.75 distribution sampled by binary search.
struct NoiseTable {
    cumulative: Vec<f64>,
}

impl NoiseTable {
    fn new(counts: impl Iterator<Item = usize>) -> Self {
        let mut acc = 0.0;
        let cumulative = counts
            .map(|c| {
                acc += (c as f64).powf(NOISE_POWER);
                acc
            })
            .collect();
        NoiseTable { cumulative }
    }

    fn sample(&self, rng: &mut impl Rng) -> usize {
        let total = *self.cumulative.last().expect("non-empty vocabulary");
        let x = rng.random::<f64>() * total;
        self.cumulative
            .partition_point(|&c| c <= x)
            .min(self.cumulative.len() - 1)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::embedding::cosine;
    use crate::embedding::widen;
    use rand::seq::IndexedRandom;

    fn small(seed: u64) -> CbowConfig {
        CbowConfig {
            dim: 16,
            window: 2,
            epochs: 10,
            min_count: 1,
            seed,
            ..CbowConfig::default()
        }
    }

    #[test]
    fn vocabulary_from_repeated_sentence() {
        let sentence = ["the", "cat", "sat", "on", "the", "mat"];
        let corpus = vec![sentence; 20];
        let store = train_cbow(&corpus, &small(1)).unwrap();
        let mut words = store.words().to_vec();
        words.sort();
        assert_eq!(words, ["cat", "mat", "on", "sat", "the"]);
        assert_eq!(store.word(0), "the");
        assert!(store.raw_matrix().iter().all(|v| v.is_finite()));
    }

    #[test]
    fn same_seed_is_bitwise_identical() {
        let corpus = vec![vec!["a", "b", "c", "d", "a", "c"]; 30];
        let a = train_cbow(&corpus, &small(7)).unwrap();
        let b = train_cbow(&corpus, &small(7)).unwrap();
        let bits = |s: &EmbeddingStore| s.raw_matrix().iter().map(|v| v.to_bits()).collect::<Vec<_>>();
        assert_eq!(bits(&a), bits(&b));
        let c = train_cbow(&corpus, &small(8)).unwrap();
        assert_ne!(bits(&a), bits(&c));
    }

    #[test]
    fn min_count_filters_and_empty_vocab_errors() {
        let corpus = vec![vec!["x", "y", "y"]];
        let cfg = CbowConfig {
            min_count: 2,
            ..small(1)
        };
        let s = train_cbow(&corpus, &cfg).unwrap();
        assert_eq!(s.words(), ["y"]);
        let cfg = CbowConfig {
            min_count: 5,
            ..small(1)
        };
        assert!(matches!(
            train_cbow(&corpus, &cfg),
            Err(EmbeddingError::EmptyVocabulary)
        ));
    }

    #[test]
    fn invalid_config_rejected() {
        let corpus = vec![vec!["x"]];
        for cfg in [
            CbowConfig { window: 0, ..small(1) },
            CbowConfig { dim: 0, ..small(1) },
            CbowConfig {
                negative: 0,
                ..small(1)
            },
            CbowConfig {
                min_count: 0,
                ..small(1)
            },
        ] {
            assert!(matches!(
                train_cbow(&corpus, &cfg),
                Err(EmbeddingError::InvalidConfig(_))
            ));
        }
    }

    #[test]
    fn shared_contexts_pull_words_together() {
        // "hot" and "warm" appear in identical contexts, "cold" in disjoint ones.
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let warm_ctx = ["sun", "summer", "fire", "desert", "oven"];
        let cold_ctx = ["snow", "ice", "winter", "frost", "glacier"];
        let mut corpus = Vec::new();
        for _ in 0..1500 {
            let (center, ctx) = match rng.random_range(0..3) {
                0 => ("hot", &warm_ctx),
                1 => ("warm", &warm_ctx),
                _ => ("cold", &cold_ctx),
            };
            let mut s: Vec<&str> = (0..2).map(|_| *ctx.choose(&mut rng).unwrap()).collect();
            s.push(center);
            s.extend((0..2).map(|_| *ctx.choose(&mut rng).unwrap()));
            corpus.push(s);
        }
        let store = train_cbow(&corpus, &CbowConfig { epochs: 5, ..small(11) }).unwrap();
        let v = |w: &str| widen(store.vector(w).unwrap());
        let hw = cosine(&v("hot"), &v("warm")).unwrap();
        let hc = cosine(&v("hot"), &v("cold")).unwrap();
        assert!(hw > hc, "cos(hot,warm)={hw} cos(hot,cold)={hc}");
    }
}
