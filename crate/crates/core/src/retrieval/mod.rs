//! Inverted index with classic TF-IDF ranking.
//!
//! For a weighted query `q` and document `d`:
//!
//! ```text
//! score(q, d) = coord(q, d) · Σ_t w_t · √tf(t, d) · idf(t)² · 1/√len(d)
//! idf(t)      = 1 + ln(N / (df(t) + 1))
//! coord(q, d) = matched query terms / query terms
//! ```
//!
//! The per-query normalisation factor is omitted; it never changes a ranking.

mod corpus;

use std::cmp::Ordering;
use std::collections::{BTreeMap, HashMap, HashSet};
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use log::warn;
use thiserror::Error;

use crate::stopwords::Stoplist;
use crate::translation::WeightedQuery;

pub use corpus::{parse_trec_sgml, read_corpus, read_corpus_dir, read_trec_sgml};

const FORMAT_HEADER: &str = "#clir-index 1";

#[derive(Debug, Error)]
pub enum RetrievalError {
    #[error("duplicate document id {0:?}")]
    DuplicateId(String),
    #[error("invalid document id {0:?}: ids must be non-empty and free of whitespace")]
    InvalidId(String),
    #[error("top_n must be at least 1")]
    InvalidTopN,
    #[error("corpus error: {0}")]
    Corpus(String),
    #[error("index format error at line {line}: {message}")]
    Format { line: usize, message: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, RetrievalError>;

/// Splits on anything that is not a letter or digit, lowercases, and drops stopwords.
pub fn analyze(text: &str, stoplist: &Stoplist) -> Vec<String> {
    text.split(|c: char| !c.is_alphanumeric())
        .filter(|t| !t.is_empty())
        .map(str::to_lowercase)
        .filter(|t| !stoplist.contains(t))
        .collect()
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Document {
    pub id: String,
    pub title: String,
    pub body: String,
}

impl Document {
    pub fn new(id: impl Into<String>, body: impl Into<String>) -> Self {
        Document {
            id: id.into(),
            title: String::new(),
            body: body.into(),
        }
    }

    pub fn with_title(mut self, title: impl Into<String>) -> Self {
        self.title = title.into();
        self
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Posting {
    pub doc: u32,
    pub tf: u32,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct InvertedIndex {
    doc_ids: Vec<String>,
    doc_lens: Vec<u32>,
    postings: BTreeMap<String, Vec<Posting>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Hit {
    pub doc_id: String,
    pub score: f64,
}

/// Indexes title and body as one field. Document ordinals follow input order.
pub fn index_corpus<I>(docs: I, stoplist: &Stoplist) -> Result<InvertedIndex>
where
    I: IntoIterator<Item = Document>,
{
    let mut index = InvertedIndex::default();
    let mut seen = HashSet::new();
    for doc in docs {
        if doc.id.is_empty() || doc.id.contains(char::is_whitespace) {
            return Err(RetrievalError::InvalidId(doc.id));
        }
        if !seen.insert(doc.id.clone()) {
            return Err(RetrievalError::DuplicateId(doc.id));
        }
        let ordinal = index.doc_ids.len() as u32;
        let mut tokens = analyze(&doc.title, stoplist);
        tokens.extend(analyze(&doc.body, stoplist));
        let mut counts: HashMap<String, u32> = HashMap::new();
        for t in &tokens {
            *counts.entry(t.clone()).or_default() += 1;
        }
        for (term, tf) in counts {
            index
                .postings
                .entry(term)
                .or_default()
                .push(Posting { doc: ordinal, tf });
        }
        index.doc_ids.push(doc.id);
        index.doc_lens.push(tokens.len() as u32);
    }
    Ok(index)
}

impl InvertedIndex {
    pub fn num_docs(&self) -> usize {
        self.doc_ids.len()
    }

    pub fn vocabulary_size(&self) -> usize {
        self.postings.len()
    }

    pub fn doc_id(&self, ordinal: u32) -> &str {
        &self.doc_ids[ordinal as usize]
    }

    pub fn doc_len(&self, ordinal: u32) -> u32 {
        self.doc_lens[ordinal as usize]
    }

    pub fn postings(&self, term: &str) -> &[Posting] {
        self.postings.get(term).map(Vec::as_slice).unwrap_or(&[])
    }

    pub fn df(&self, term: &str) -> usize {
        self.postings(term).len()
    }

    pub fn idf(&self, term: &str) -> f64 {
        1.0 + (self.num_docs() as f64 / (self.df(term) as f64 + 1.0)).ln()
    }

    /// Best `top_n` documents, by descending score then ascending id.
    pub fn search(&self, query: &WeightedQuery, top_n: usize) -> Result<Vec<Hit>> {
        if top_n == 0 {
            return Err(RetrievalError::InvalidTopN);
        }
        let mut merged: Vec<(String, f64)> = Vec::new();
        for (t, w) in query.terms() {
            let t = t.to_lowercase();
            match merged.iter_mut().find(|(m, _)| *m == t) {
                Some(entry) => entry.1 += w,
                None => merged.push((t, *w)),
            }
        }
        if merged.is_empty() {
            warn!("empty query; no documents retrieved");
            return Ok(Vec::new());
        }

        let mut score = vec![0f64; self.num_docs()];
        let mut matched = vec![0u32; self.num_docs()];
        for (term, w) in &merged {
            let postings = self.postings(term);
            if postings.is_empty() {
                continue;
            }
            let idf = self.idf(term);
            for p in postings {
                let d = p.doc as usize;
                // sqrt(tf / len) equals sqrt(tf) / sqrt(len) but rounds
                // identically for equal ratios, so tied documents stay tied.
                let tf_norm = (p.tf as f64 / self.doc_lens[d] as f64).sqrt();
                score[d] += w * idf * idf * tf_norm;
                matched[d] += 1;
            }
        }
        let total = merged.len() as f64;
        let mut hits: Vec<Hit> = (0..self.num_docs())
            .filter(|&d| matched[d] > 0)
            .map(|d| Hit {
                doc_id: self.doc_ids[d].clone(),
                score: score[d] * matched[d] as f64 / total,
            })
            .collect();
        hits.sort_by(|a, b| {
            b.score
                .partial_cmp(&a.score)
                .unwrap_or(Ordering::Equal)
                .then_with(|| a.doc_id.cmp(&b.doc_id))
        });
        hits.truncate(top_n);
        Ok(hits)
    }

    /// Line-based format: header, document table, then one postings line per term.
    pub fn write<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "{FORMAT_HEADER}")?;
        writeln!(w, "docs {}", self.num_docs())?;
        for (id, len) in self.doc_ids.iter().zip(&self.doc_lens) {
            writeln!(w, "{id}\t{len}")?;
        }
        writeln!(w, "terms {}", self.postings.len())?;
        for (term, postings) in &self.postings {
            write!(w, "{term}\t")?;
            for (i, p) in postings.iter().enumerate() {
                if i > 0 {
                    w.write_all(b" ")?;
                }
                write!(w, "{}:{}", p.doc, p.tf)?;
            }
            w.write_all(b"\n")?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn read<R: BufRead>(reader: R) -> Result<Self> {
        let mut lines = reader.lines().enumerate();
        let mut next = |what: &str| -> Result<(usize, String)> {
            match lines.next() {
                Some((i, l)) => Ok((i + 1, l?)),
                None => Err(RetrievalError::Format {
                    line: 0,
                    message: format!("unexpected end of file, expected {what}"),
                }),
            }
        };
        let bad = |line: usize, message: String| RetrievalError::Format { line, message };

        let (n, header) = next("header")?;
        if header != FORMAT_HEADER {
            return Err(bad(n, format!("unsupported header {header:?}")));
        }
        let count = |n: usize, line: &str, key: &str| -> Result<usize> {
            line.strip_prefix(key)
                .and_then(|s| s.strip_prefix(' '))
                .and_then(|s| s.parse().ok())
                .ok_or_else(|| bad(n, format!("expected \"{key} <count>\"")))
        };
        let (n, line) = next("document count")?;
        let docs = count(n, &line, "docs")?;
        let mut index = InvertedIndex::default();
        for _ in 0..docs {
            let (n, line) = next("document row")?;
            let (id, len) = line
                .split_once('\t')
                .and_then(|(id, len)| Some((id, len.parse::<u32>().ok()?)))
                .ok_or_else(|| bad(n, "expected id<TAB>length".into()))?;
            index.doc_ids.push(id.to_string());
            index.doc_lens.push(len);
        }
        let (n, line) = next("term count")?;
        let terms = count(n, &line, "terms")?;
        for _ in 0..terms {
            let (n, line) = next("postings row")?;
            let (term, rest) = line
                .split_once('\t')
                .ok_or_else(|| bad(n, "expected term<TAB>postings".into()))?;
            let mut postings = Vec::new();
            for p in rest.split(' ') {
                let posting = p
                    .split_once(':')
                    .and_then(|(d, tf)| {
                        Some(Posting {
                            doc: d.parse().ok()?,
                            tf: tf.parse().ok()?,
                        })
                    })
                    .filter(|p| (p.doc as usize) < docs && p.tf > 0)
                    .ok_or_else(|| bad(n, format!("invalid posting {p:?}")))?;
                if postings.last().is_some_and(|l: &Posting| l.doc >= posting.doc) {
                    return Err(bad(n, "postings not strictly increasing".into()));
                }
                postings.push(posting);
            }
            if index.postings.insert(term.to_string(), postings).is_some() {
                return Err(bad(n, format!("duplicate term {term:?}")));
            }
        }
        Ok(index)
    }

    pub fn write_file(&self, path: &Path) -> Result<()> {
        self.write(BufWriter::new(File::create(path)?))
    }

    pub fn read_file(path: &Path) -> Result<Self> {
        Self::read(BufReader::new(File::open(path)?))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::translation::Method;

    fn query(terms: &[(&str, f64)]) -> WeightedQuery {
        WeightedQuery::from_terms(Method::We, terms.iter().map(|(t, w)| (t.to_string(), *w)).collect())
    }

    fn two_docs() -> InvertedIndex {
        index_corpus(
            [
                Document::new("d1", "bomb blast city"),
                Document::new("d2", "cricket match city"),
            ],
            &Stoplist::default(),
        )
        .unwrap()
    }

    #[test]
    fn analyzer() {
        let none = Stoplist::default();
        assert_eq!(analyze("Bomb blast, 2008!", &none), ["bomb", "blast", "2008"]);
        assert!(analyze("", &none).is_empty());
        assert!(analyze("The the THE", &Stoplist::new(["the"])).is_empty());
        assert_eq!(analyze("Ça-va Über", &none), ["ça", "va", "über"]);
    }

    #[test]
    fn index_counts() {
        let idx = index_corpus([Document::new("x", "a b a")], &Stoplist::default()).unwrap();
        assert_eq!(idx.postings("a"), [Posting { doc: 0, tf: 2 }]);
        assert_eq!(idx.postings("b"), [Posting { doc: 0, tf: 1 }]);
        assert_eq!(idx.doc_len(0), 3);
        let empty = index_corpus(Vec::new(), &Stoplist::default()).unwrap();
        assert_eq!(empty.num_docs(), 0);
        assert_eq!(two_docs().df("city"), 2);
    }

    #[test]
    fn duplicate_and_invalid_ids() {
        let stop = Stoplist::default();
        match index_corpus([Document::new("a", "x"), Document::new("a", "y")], &stop) {
            Err(RetrievalError::DuplicateId(id)) => assert_eq!(id, "a"),
            other => panic!("{other:?}"),
        }
        assert!(matches!(
            index_corpus([Document::new("a b", "x")], &stop),
            Err(RetrievalError::InvalidId(_))
        ));
    }

    #[test]
    fn hand_scored_fixture() {
        let hits = two_docs().search(&query(&[("bomb", 1.0)]), 10).unwrap();
        assert_eq!(hits.len(), 1);
        assert_eq!(hits[0].doc_id, "d1");
        assert!((hits[0].score - 1.0 / 3f64.sqrt()).abs() < 1e-12);
    }

    #[test]
    fn absent_and_empty_queries() {
        let idx = two_docs();
        assert!(idx.search(&query(&[("zebra", 1.0)]), 5).unwrap().is_empty());
        assert!(idx.search(&query(&[]), 5).unwrap().is_empty());
        assert!(matches!(
            idx.search(&query(&[("bomb", 1.0)]), 0),
            Err(RetrievalError::InvalidTopN)
        ));
    }

    #[test]
    fn weights_are_linear() {
        let idx = two_docs();
        let one = idx.search(&query(&[("bomb", 1.0)]), 5).unwrap();
        let two = idx.search(&query(&[("bomb", 2.0)]), 5).unwrap();
        assert!((two[0].score - 2.0 * one[0].score).abs() < 1e-12);
    }

    #[test]
    fn coord_and_case_folding() {
        let idx = two_docs();
        let hits = idx.search(&query(&[("City", 1.0), ("BOMB", 1.0)]), 5).unwrap();
        assert_eq!(hits[0].doc_id, "d1");
        // d2 only matches "city": coord 1/2, idf(city) = 1 + ln(2/3)
        let idf = 1.0 + (2.0f64 / 3.0).ln();
        assert!((hits[1].score - 0.5 * idf * idf / 3f64.sqrt()).abs() < 1e-12);
    }

    #[test]
    fn ties_break_by_id_and_top_n_is_exact() {
        let docs = ["c", "a", "b"].map(|id| Document::new(id, "same words"));
        let idx = index_corpus(docs, &Stoplist::default()).unwrap();
        let hits = idx.search(&query(&[("same", 1.0)]), 2).unwrap();
        assert_eq!(hits.iter().map(|h| h.doc_id.as_str()).collect::<Vec<_>>(), ["a", "b"]);
    }

    #[test]
    fn serialization_round_trip() {
        let idx = index_corpus(
            [
                Document::new("d1", "alpha beta beta").with_title("Gamma"),
                Document::new("d2", ""),
            ],
            &Stoplist::default(),
        )
        .unwrap();
        let mut buf = Vec::new();
        idx.write(&mut buf).unwrap();
        let back = InvertedIndex::read(buf.as_slice()).unwrap();
        assert_eq!(back, idx);
        let mut again = Vec::new();
        back.write(&mut again).unwrap();
        assert_eq!(buf, again);
        assert!(InvertedIndex::read("#clir-index 2\n".as_bytes()).is_err());
        assert!(InvertedIndex::read("#clir-index 1\ndocs 1\nd\t1\nterms 1\nx\t3:1\n".as_bytes()).is_err());
    }
}
