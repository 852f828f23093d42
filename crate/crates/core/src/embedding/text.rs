//! word2vec text format.
//!
//! The first line holds `<count> <dim>`; each following line holds a word and
//! its `dim` components, separated by single spaces. Components are written
//! in the shortest decimal form that round-trips to the same `f32`.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use super::{EmbeddingError, EmbeddingStore, Result};

/// Parses a word2vec text stream. With `case_fold`, words are lowercased first.
pub fn load_embeddings<R: BufRead>(reader: R, case_fold: bool) -> Result<EmbeddingStore> {
    let mut lines = reader.lines();
    let header = lines.next().ok_or_else(|| EmbeddingError::Format {
        line: 1,
        message: "missing header".into(),
    })??;
    let mut parts = header.split(' ');
    let (count, dim) = match (parts.next(), parts.next(), parts.next()) {
        (Some(c), Some(d), None) => (parse_usize(c, 1)?, parse_usize(d, 1)?),
        _ => {
            return Err(EmbeddingError::Format {
                line: 1,
                message: format!("expected \"<count> <dim>\", got {header:?}"),
            })
        }
    };
    if dim == 0 {
        return Err(EmbeddingError::Format {
            line: 1,
            message: "dimension must be positive".into(),
        });
    }

    let mut words = Vec::with_capacity(count);
    let mut matrix = Vec::with_capacity(count * dim);
    let mut seen = std::collections::HashSet::with_capacity(count);
    for (i, line) in lines.enumerate() {
        let lineno = i + 2;
        let line = line?;
        let line = line.strip_suffix('\r').unwrap_or(&line);
        if line.is_empty() && words.len() == count {
            continue;
        }
        if words.len() == count {
            return Err(EmbeddingError::Format {
                line: lineno,
                message: format!("more than {count} rows"),
            });
        }
        let line = line.strip_suffix(' ').unwrap_or(line);
        let mut fields = line.split(' ');
        let word = fields.next().unwrap_or_default();
        if word.is_empty() {
            return Err(EmbeddingError::Format {
                line: lineno,
                message: "empty word".into(),
            });
        }
        let start = matrix.len();
        for field in fields {
            let v: f32 = field.parse().map_err(|_| EmbeddingError::Format {
                line: lineno,
                message: format!("invalid number {field:?}"),
            })?;
            if !v.is_finite() {
                return Err(EmbeddingError::Format {
                    line: lineno,
                    message: format!("non-finite value {field:?}"),
                });
            }
            matrix.push(v);
        }
        let got = matrix.len() - start;
        if got != dim {
            return Err(EmbeddingError::Format {
                line: lineno,
                message: format!("{got} components, expected {dim}"),
            });
        }
        let word = if case_fold {
            word.to_lowercase()
        } else {
            word.to_string()
        };
        if !seen.insert(word.clone()) {
            return Err(EmbeddingError::DuplicateWord { word, line: lineno });
        }
        words.push(word);
    }
    if words.len() != count {
        return Err(EmbeddingError::Format {
            line: words.len() + 2,
            message: format!("expected {count} rows, got {}", words.len()),
        });
    }
    EmbeddingStore::new(words, dim, matrix)
}

fn parse_usize(s: &str, line: usize) -> Result<usize> {
    s.parse().map_err(|_| EmbeddingError::Format {
        line,
        message: format!("invalid integer {s:?}"),
    })
}

pub fn save_embeddings<W: Write>(store: &EmbeddingStore, mut writer: W) -> Result<()> {
    writeln!(writer, "{} {}", store.len(), store.dim())?;
    for (i, word) in store.words().iter().enumerate() {
        writer.write_all(word.as_bytes())?;
        for v in store.row(i) {
            write!(writer, " {v}")?;
        }
        writer.write_all(b"\n")?;
    }
    writer.flush()?;
    Ok(())
}

pub fn read_embeddings_file(path: &Path, case_fold: bool) -> Result<EmbeddingStore> {
    load_embeddings(BufReader::new(File::open(path)?), case_fold)
}

pub fn write_embeddings_file(store: &EmbeddingStore, path: &Path) -> Result<()> {
    save_embeddings(store, BufWriter::new(File::create(path)?))
}
