//! Linear map from the source embedding space into the target space.
//!
//! The map is fitted on translation pairs `(x, y)` by ridge regression,
//! `min_W Σ ‖W x − y‖² + λ‖W‖²_F`, whose normal equations
//! `(X Xᵀ + λI) Wᵀ = X Yᵀ` are solved with a Cholesky factorisation.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use log::debug;
use thiserror::Error;

use crate::embedding::{widen, EmbeddingStore};

pub const DEFAULT_LAMBDA: f64 = 1e-3;

/// Relative pivot size below which the Gram matrix is treated as singular.
const SINGULAR_TOLERANCE: f64 = 1e-12;

#[derive(Debug, Error)]
pub enum ProjectionError {
    #[error("no usable training pairs ({dropped} lexicon entries had no embedding on one side)")]
    NoTrainingPairs { dropped: usize },
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("ridge coefficient must be finite and non-negative, got {0}")]
    InvalidLambda(f64),
    #[error("X Xᵀ is singular with lambda = {lambda}; retry with a positive ridge coefficient (e.g. --lambda 1e-3)")]
    Singular { lambda: f64 },
    #[error("format error at line {line}: {message}")]
    Format { line: usize, message: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, ProjectionError>;

/// Single-word translation pairs read from a `source<TAB>target` file.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct TranslationLexicon {
    pub entries: Vec<(String, String)>,
    pub path: Option<PathBuf>,
    /// Lines skipped because one side held more than one word.
    pub skipped_multiword: usize,
}

impl TranslationLexicon {
    pub fn from_pairs<S: Into<String>>(pairs: impl IntoIterator<Item = (S, S)>) -> Self {
        TranslationLexicon {
            entries: pairs.into_iter().map(|(a, b)| (a.into(), b.into())).collect(),
            ..Default::default()
        }
    }

    pub fn read<R: BufRead>(reader: R) -> Result<Self> {
        let mut lex = TranslationLexicon::default();
        for (i, line) in reader.lines().enumerate() {
            let line = line?;
            let line = line.trim_end_matches(['\r', '\n']);
            if line.trim().is_empty() {
                continue;
            }
            let (src, tgt) = line.split_once('\t').ok_or_else(|| ProjectionError::Format {
                line: i + 1,
                message: "expected source<TAB>target".into(),
            })?;
            let (src, tgt) = (src.trim(), tgt.trim());
            if src.is_empty() || tgt.is_empty() {
                return Err(ProjectionError::Format {
                    line: i + 1,
                    message: "empty source or target".into(),
                });
            }
            if src.contains(char::is_whitespace) || tgt.contains(char::is_whitespace) {
                lex.skipped_multiword += 1;
                continue;
            }
            lex.entries.push((src.to_string(), tgt.to_string()));
        }
        Ok(lex)
    }

    pub fn read_file(path: &Path) -> Result<Self> {
        let mut lex = Self::read(BufReader::new(File::open(path)?))?;
        lex.path = Some(path.to_path_buf());
        Ok(lex)
    }
}

/// `(x, y)` vectors for every lexicon entry present in both stores.
#[derive(Debug, Clone)]
pub struct TrainingSet {
    pub pairs: Vec<(Vec<f64>, Vec<f64>)>,
    pub words: Vec<(String, String)>,
    pub dropped: usize,
}

/// Looks up both sides of every lexicon entry. Target words fall back to
/// their lowercase form, matching case-folded target stores.
pub fn build_training_set(
    lexicon: &TranslationLexicon,
    src: &EmbeddingStore,
    tgt: &EmbeddingStore,
    normalize: bool,
) -> Result<TrainingSet> {
    let mut set = TrainingSet {
        pairs: Vec::new(),
        words: Vec::new(),
        dropped: 0,
    };
    for (s, t) in &lexicon.entries {
        let x = src.vector(s);
        let y = tgt.vector(t).or_else(|| tgt.vector(&t.to_lowercase()));
        match (x, y) {
            (Some(x), Some(y)) => {
                let (mut x, mut y) = (widen(x), widen(y));
                if normalize {
                    unit(&mut x);
                    unit(&mut y);
                }
                set.pairs.push((x, y));
                set.words.push((s.clone(), t.clone()));
            }
            _ => set.dropped += 1,
        }
    }
    if set.pairs.is_empty() {
        return Err(ProjectionError::NoTrainingPairs { dropped: set.dropped });
    }
    debug!("training set: {} pairs, {} dropped", set.pairs.len(), set.dropped);
    Ok(set)
}

fn unit(v: &mut [f64]) {
    let n = crate::embedding::norm_f64(v);
    if n > 0.0 {
        v.iter_mut().for_each(|x| *x /= n);
    }
}

/// Row-major `target_dim x source_dim` matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct ProjectionMatrix {
    target_dim: usize,
    source_dim: usize,
    data: Vec<f64>,
    pub lambda: f64,
    pub pairs: usize,
    /// Training residual `sqrt(mean_i ‖W xᵢ − yᵢ‖²)`; NaN when loaded from disk.
    pub rmse: f64,
}

impl ProjectionMatrix {
    pub fn from_rows(rows: Vec<Vec<f64>>) -> Result<Self> {
        let target_dim = rows.len();
        let source_dim = rows.first().map_or(0, Vec::len);
        let mut data = Vec::with_capacity(target_dim * source_dim);
        for r in rows {
            if r.len() != source_dim {
                return Err(ProjectionError::DimensionMismatch {
                    expected: source_dim,
                    got: r.len(),
                });
            }
            data.extend(r);
        }
        Ok(ProjectionMatrix {
            target_dim,
            source_dim,
            data,
            lambda: 0.0,
            pairs: 0,
            rmse: f64::NAN,
        })
    }

    pub fn identity(dim: usize) -> Self {
        let rows = (0..dim)
            .map(|i| (0..dim).map(|j| if i == j { 1.0 } else { 0.0 }).collect())
            .collect();
        Self::from_rows(rows).expect("square")
    }

    pub fn source_dim(&self) -> usize {
        self.source_dim
    }

    pub fn target_dim(&self) -> usize {
        self.target_dim
    }

    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.data[row * self.source_dim + col]
    }

    pub fn row(&self, row: usize) -> &[f64] {
        &self.data[row * self.source_dim..(row + 1) * self.source_dim]
    }

    /// `W x`.
    pub fn project(&self, x: &[f64]) -> Result<Vec<f64>> {
        if x.len() != self.source_dim {
            return Err(ProjectionError::DimensionMismatch {
                expected: self.source_dim,
                got: x.len(),
            });
        }
        Ok(self
            .data
            .chunks_exact(self.source_dim.max(1))
            .take(self.target_dim)
            .map(|row| row.iter().zip(x).map(|(w, v)| w * v).sum())
            .collect())
    }

    pub fn project_f32(&self, x: &[f32]) -> Result<Vec<f64>> {
        self.project(&widen(x))
    }

    /// Writes the header `d2 d1 lambda n` followed by `d2` rows of `d1` values.
    pub fn write<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(
            w,
            "{} {} {} {}",
            self.target_dim, self.source_dim, self.lambda, self.pairs
        )?;
        for r in 0..self.target_dim {
            let row = self.row(r);
            for (j, v) in row.iter().enumerate() {
                if j > 0 {
                    w.write_all(b" ")?;
                }
                write!(w, "{v}")?;
            }
            w.write_all(b"\n")?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn read<R: BufRead>(reader: R) -> Result<Self> {
        let fmt = |line: usize, message: String| ProjectionError::Format { line, message };
        let mut lines = reader.lines();
        let header = lines.next().ok_or_else(|| fmt(1, "missing header".into()))??;
        let h: Vec<&str> = header.split_whitespace().collect();
        if h.len() != 4 {
            return Err(fmt(1, format!("expected \"d2 d1 lambda n\", got {header:?}")));
        }
        let target_dim: usize = h[0].parse().map_err(|_| fmt(1, "bad d2".into()))?;
        let source_dim: usize = h[1].parse().map_err(|_| fmt(1, "bad d1".into()))?;
        let lambda: f64 = h[2].parse().map_err(|_| fmt(1, "bad lambda".into()))?;
        let pairs: usize = h[3].parse().map_err(|_| fmt(1, "bad n".into()))?;
        let mut data = Vec::with_capacity(target_dim * source_dim);
        for r in 0..target_dim {
            let line = lines.next().ok_or_else(|| fmt(r + 2, "missing row".into()))??;
            let before = data.len();
            for tok in line.split_whitespace() {
                let v: f64 = tok.parse().map_err(|_| fmt(r + 2, format!("invalid number {tok:?}")))?;
                if !v.is_finite() {
                    return Err(fmt(r + 2, "non-finite entry".into()));
                }
                data.push(v);
            }
            if data.len() - before != source_dim {
                return Err(fmt(
                    r + 2,
                    format!("{} values, expected {source_dim}", data.len() - before),
                ));
            }
        }
        Ok(ProjectionMatrix {
            target_dim,
            source_dim,
            data,
            lambda,
            pairs,
            rmse: f64::NAN,
        })
    }

    pub fn write_file(&self, path: &Path) -> Result<()> {
        self.write(BufWriter::new(File::create(path)?))
    }

    pub fn read_file(path: &Path) -> Result<Self> {
        Self::read(BufReader::new(File::open(path)?))
    }
}

/// Fits `W` in closed form. `λ = 0` is plain least squares and fails on
/// rank-deficient data.
pub fn learn_projection(pairs: &[(Vec<f64>, Vec<f64>)], lambda: f64) -> Result<ProjectionMatrix> {
    if !(lambda >= 0.0 && lambda.is_finite()) {
        return Err(ProjectionError::InvalidLambda(lambda));
    }
    let (x0, y0) = pairs.first().ok_or(ProjectionError::NoTrainingPairs { dropped: 0 })?;
    let (d1, d2) = (x0.len(), y0.len());
    for (x, y) in pairs {
        if x.len() != d1 {
            return Err(ProjectionError::DimensionMismatch {
                expected: d1,
                got: x.len(),
            });
        }
        if y.len() != d2 {
            return Err(ProjectionError::DimensionMismatch {
                expected: d2,
                got: y.len(),
            });
        }
    }

    // gram = X Xᵀ + λI (d1 x d1), cross = X Yᵀ (d1 x d2)
    let mut gram = vec![0.0; d1 * d1];
    let mut cross = vec![0.0; d1 * d2];
    for (x, y) in pairs {
        for i in 0..d1 {
            let xi = x[i];
            if xi == 0.0 {
                continue;
            }
            let g = &mut gram[i * d1..(i + 1) * d1];
            for j in 0..=i {
                g[j] += xi * x[j];
            }
            for (c, yj) in cross[i * d2..(i + 1) * d2].iter_mut().zip(y) {
                *c += xi * yj;
            }
        }
    }
    for i in 0..d1 {
        for j in 0..i {
            gram[j * d1 + i] = gram[i * d1 + j];
        }
        gram[i * d1 + i] += lambda;
    }

    let chol = cholesky(&gram, d1).ok_or(ProjectionError::Singular { lambda })?;
    // Solve for each column of Wᵀ, i.e. each row of W.
    let mut data = vec![0.0; d2 * d1];
    let mut rhs = vec![0.0; d1];
    for r in 0..d2 {
        for i in 0..d1 {
            rhs[i] = cross[i * d2 + r];
        }
        let sol = cholesky_solve(&chol, d1, &rhs);
        data[r * d1..(r + 1) * d1].copy_from_slice(&sol);
    }

    let mut w = ProjectionMatrix {
        target_dim: d2,
        source_dim: d1,
        data,
        lambda,
        pairs: pairs.len(),
        rmse: f64::NAN,
    };
    if w.data.iter().any(|v| !v.is_finite()) {
        return Err(ProjectionError::Singular { lambda });
    }
    w.rmse = training_rmse(&w, pairs)?;
    Ok(w)
}

/// `sqrt(mean_i ‖W xᵢ − yᵢ‖²)`.
pub fn training_rmse(w: &ProjectionMatrix, pairs: &[(Vec<f64>, Vec<f64>)]) -> Result<f64> {
    let mut sse = 0.0;
    for (x, y) in pairs {
        let p = w.project(x)?;
        sse += p.iter().zip(y).map(|(a, b)| (a - b) * (a - b)).sum::<f64>();
    }
    Ok((sse / pairs.len().max(1) as f64).sqrt())
}

/// Lower-triangular `L` with `A = L Lᵀ`, or `None` if `A` is not numerically
/// positive definite.
fn cholesky(a: &[f64], n: usize) -> Option<Vec<f64>> {
    let scale = (0..n).map(|i| a[i * n + i].abs()).fold(0.0, f64::max);
    if scale == 0.0 {
        return None;
    }
    let mut l = vec![0.0; n * n];
    for j in 0..n {
        let mut d = a[j * n + j];
        for k in 0..j {
            d -= l[j * n + k] * l[j * n + k];
        }
        if d.is_nan() || d <= SINGULAR_TOLERANCE * scale {
            return None;
        }
        let d = d.sqrt();
        l[j * n + j] = d;
        for i in j + 1..n {
            let mut s = a[i * n + j];
            for k in 0..j {
                s -= l[i * n + k] * l[j * n + k];
            }
            l[i * n + j] = s / d;
        }
    }
    Some(l)
}

fn cholesky_solve(l: &[f64], n: usize, b: &[f64]) -> Vec<f64> {
    let mut z = vec![0.0; n];
    for i in 0..n {
        let mut s = b[i];
        for k in 0..i {
            s -= l[i * n + k] * z[k];
        }
        z[i] = s / l[i * n + i];
    }
    let mut x = vec![0.0; n];
    for i in (0..n).rev() {
        let mut s = z[i];
        for k in i + 1..n {
            s -= l[k * n + i] * x[k];
        }
        x[i] = s / l[i * n + i];
    }
    x
}
