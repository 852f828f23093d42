//! Dense word vectors for one language.
//!
//! An [`EmbeddingStore`] owns a vocabulary and a `|vocab| x dim` matrix of
//! `f32` components. Similarity computations accumulate in `f64`.

mod cbow;
mod text;

use std::collections::{HashMap, HashSet};

use thiserror::Error;

pub use cbow::{train_cbow, CbowConfig};
pub use text::{load_embeddings, read_embeddings_file, save_embeddings, write_embeddings_file};

#[derive(Debug, Error)]
pub enum EmbeddingError {
    #[error("format error at line {line}: {message}")]
    Format { line: usize, message: String },
    #[error("duplicate word {word:?} at line {line}")]
    DuplicateWord { word: String, line: usize },
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("degenerate input: zero vector")]
    Degenerate,
    #[error("embedding store is empty")]
    EmptyStore,
    #[error("k must be at least 1")]
    InvalidK,
    #[error("invalid CBOW configuration: {0}")]
    InvalidConfig(String),
    #[error("empty vocabulary after min-count filtering")]
    EmptyVocabulary,
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, EmbeddingError>;

/// Vocabulary plus one dense row per word.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingStore {
    words: Vec<String>,
    index: HashMap<String, usize>,
    dim: usize,
    matrix: Vec<f32>,
    norms: Vec<f64>,
    normalized: bool,
}

impl EmbeddingStore {
    /// Builds a store from parallel word and row-major vector data.
    ///
    /// Rejects duplicate words, ragged rows and non-finite components.
    pub fn new(words: Vec<String>, dim: usize, matrix: Vec<f32>) -> Result<Self> {
        if dim == 0 {
            return Err(EmbeddingError::Format {
                line: 1,
                message: "dimension must be positive".into(),
            });
        }
        if matrix.len() != words.len() * dim {
            return Err(EmbeddingError::DimensionMismatch {
                expected: words.len() * dim,
                got: matrix.len(),
            });
        }
        let mut index = HashMap::with_capacity(words.len());
        for (i, w) in words.iter().enumerate() {
            if index.insert(w.clone(), i).is_some() {
                return Err(EmbeddingError::DuplicateWord {
                    word: w.clone(),
                    line: i + 2,
                });
            }
        }
        if let Some(pos) = matrix.iter().position(|v| !v.is_finite()) {
            return Err(EmbeddingError::Format {
                line: pos / dim + 2,
                message: "non-finite component".into(),
            });
        }
        let norms = matrix.chunks_exact(dim).map(norm_f32).collect();
        Ok(EmbeddingStore {
            words,
            index,
            dim,
            matrix,
            norms,
            normalized: false,
        })
    }

    /// Convenience constructor from `(word, vector)` pairs.
    pub fn from_rows<S, I>(rows: I) -> Result<Self>
    where
        S: Into<String>,
        I: IntoIterator<Item = (S, Vec<f32>)>,
    {
        let mut words = Vec::new();
        let mut matrix = Vec::new();
        let mut dim = None;
        for (w, v) in rows {
            let d = *dim.get_or_insert(v.len());
            if v.len() != d {
                return Err(EmbeddingError::DimensionMismatch {
                    expected: d,
                    got: v.len(),
                });
            }
            words.push(w.into());
            matrix.extend(v);
        }
        Self::new(words, dim.unwrap_or(1), matrix)
    }

    pub fn len(&self) -> usize {
        self.words.len()
    }

    pub fn is_empty(&self) -> bool {
        self.words.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn words(&self) -> &[String] {
        &self.words
    }

    pub fn word(&self, idx: usize) -> &str {
        &self.words[idx]
    }

    pub fn index_of(&self, word: &str) -> Option<usize> {
        self.index.get(word).copied()
    }

    pub fn contains(&self, word: &str) -> bool {
        self.index.contains_key(word)
    }

    pub fn row(&self, idx: usize) -> &[f32] {
        &self.matrix[idx * self.dim..(idx + 1) * self.dim]
    }

    pub fn vector(&self, word: &str) -> Option<&[f32]> {
        self.index_of(word).map(|i| self.row(i))
    }

    /// Euclidean norm of row `idx`, computed in `f64`.
    pub fn norm(&self, idx: usize) -> f64 {
        self.norms[idx]
    }

    /// A row is degenerate when it is the zero vector; cosine is undefined for it.
    pub fn is_degenerate(&self, idx: usize) -> bool {
        self.norms[idx] == 0.0
    }

    pub fn is_normalized(&self) -> bool {
        self.normalized
    }

    /// Returns a copy with every non-zero row scaled to unit length.
    pub fn normalized(&self) -> Self {
        let mut out = self.clone();
        for (row, norm) in out.matrix.chunks_exact_mut(self.dim).zip(&self.norms) {
            if *norm > 0.0 {
                for v in row.iter_mut() {
                    *v = (f64::from(*v) / norm) as f32;
                }
            }
        }
        out.norms = out.matrix.chunks_exact(self.dim).map(norm_f32).collect();
        out.normalized = true;
        out
    }

    /// Cosine similarity between `query` and row `idx`; `query_norm` must be `‖query‖`.
    fn cosine_row(&self, query: &[f64], query_norm: f64, idx: usize) -> f64 {
        let dot = dot_mixed(query, self.row(idx));
        (dot / (query_norm * self.norms[idx])).clamp(-1.0, 1.0)
    }

    /// Cosine of `query` against every row. Degenerate rows yield `None`.
    pub fn cosine_all(&self, query: &[f64]) -> Result<Vec<Option<f64>>> {
        self.check_query(query)?;
        let qn = norm_f64(query);
        if qn == 0.0 {
            return Err(EmbeddingError::Degenerate);
        }
        Ok((0..self.len())
            .map(|i| (!self.is_degenerate(i)).then(|| self.cosine_row(query, qn, i)))
            .collect())
    }

    /// Exact top-`k` search by cosine similarity.
    ///
    /// Results are sorted by descending score with ties going to the lower
    /// vocabulary index. Words in `exclude` and degenerate rows are skipped.
    pub fn nearest_neighbors(&self, query: &[f64], k: usize, exclude: &HashSet<String>) -> Result<Vec<(String, f64)>> {
        if k == 0 {
            return Err(EmbeddingError::InvalidK);
        }
        if self.is_empty() {
            return Err(EmbeddingError::EmptyStore);
        }
        let scores = self.cosine_all(query)?;
        let candidates = scores
            .into_iter()
            .enumerate()
            .filter_map(|(i, s)| s.map(|s| (i, s)))
            .filter(|(i, _)| !exclude.contains(&self.words[*i]));
        Ok(top_k(candidates, k)
            .into_iter()
            .map(|(i, s)| (self.words[i].clone(), s))
            .collect())
    }

    /// Top-`k` by raw dot product. Equivalent to cosine ranking on normalized stores.
    pub fn nearest_by_dot(&self, query: &[f64], k: usize, exclude: &HashSet<String>) -> Result<Vec<(String, f64)>> {
        if k == 0 {
            return Err(EmbeddingError::InvalidK);
        }
        if self.is_empty() {
            return Err(EmbeddingError::EmptyStore);
        }
        self.check_query(query)?;
        let candidates = (0..self.len())
            .filter(|&i| !self.is_degenerate(i) && !exclude.contains(&self.words[i]))
            .map(|i| (i, dot_mixed(query, self.row(i))));
        Ok(top_k(candidates, k)
            .into_iter()
            .map(|(i, s)| (self.words[i].clone(), s))
            .collect())
    }

    fn check_query(&self, query: &[f64]) -> Result<()> {
        if query.len() != self.dim {
            return Err(EmbeddingError::DimensionMismatch {
                expected: self.dim,
                got: query.len(),
            });
        }
        Ok(())
    }

    #[cfg(test)]
    pub(crate) fn raw_matrix(&self) -> &[f32] {
        &self.matrix
    }
}

/// Cosine similarity `a·b / (‖a‖‖b‖)`. Zero vectors are an error.
pub fn cosine(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.len() != b.len() {
        return Err(EmbeddingError::DimensionMismatch {
            expected: a.len(),
            got: b.len(),
        });
    }
    let na = norm_f64(a);
    let nb = norm_f64(b);
    if na == 0.0 || nb == 0.0 {
        return Err(EmbeddingError::Degenerate);
    }
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    Ok((dot / (na * nb)).clamp(-1.0, 1.0))
}

/// Selects the `k` best `(index, score)` pairs, score descending then index ascending.
pub(crate) fn top_k<I>(candidates: I, k: usize) -> Vec<(usize, f64)>
where
    I: IntoIterator<Item = (usize, f64)>,
{
    let mut all: Vec<(usize, f64)> = candidates.into_iter().collect();
    let by_rank = |a: &(usize, f64), b: &(usize, f64)| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0));
    if all.len() > k {
        all.select_nth_unstable_by(k - 1, by_rank);
        all.truncate(k);
    }
    all.sort_by(by_rank);
    all
}

pub(crate) fn dot_mixed(a: &[f64], b: &[f32]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * f64::from(*y)).sum()
}

pub(crate) fn norm_f64(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

fn norm_f32(v: &[f32]) -> f64 {
    v.iter().map(|&x| f64::from(x) * f64::from(x)).sum::<f64>().sqrt()
}

pub(crate) fn widen(v: &[f32]) -> Vec<f64> {
    v.iter().map(|&x| f64::from(x)).collect()
}
