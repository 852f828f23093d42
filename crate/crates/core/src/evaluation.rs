//! trec_eval-compatible run scoring: P@5, P@10 and MAP.
//!
//! P@k always divides by `k`, and AP divides by the number of relevant
//! documents in the qrels, retrieved or not. Queries with relevant documents
//! but no run entries count with AP 0; run queries missing from the qrels are
//! skipped with a warning.

use std::cmp::Ordering;
use std::collections::{BTreeMap, HashSet};
use std::fmt::Write as _;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use log::warn;
use thiserror::Error;

use crate::retrieval::Hit;

#[derive(Debug, Error)]
pub enum EvaluationError {
    #[error("format error at line {line}: {message}")]
    Format { line: usize, message: String },
    #[error("duplicate judgment for query {qid:?}, document {doc:?}")]
    DuplicateJudgment { qid: String, doc: String },
    #[error("document {doc:?} appears twice in the run for query {qid:?}")]
    DuplicateDoc { qid: String, doc: String },
    #[error("k must be at least 1")]
    InvalidK,
    #[error("no query in the run has relevance judgments with at least one relevant document")]
    NoEvaluableQueries,
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, EvaluationError>;

/// Binary relevance judgments. Any positive grade counts as relevant.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Qrels {
    judged: BTreeMap<String, BTreeMap<String, bool>>,
}

impl Qrels {
    pub fn from_judgments<S: Into<String>>(judgments: impl IntoIterator<Item = (S, S, bool)>) -> Result<Self> {
        let mut qrels = Qrels::default();
        for (q, d, rel) in judgments {
            qrels.insert(q.into(), d.into(), rel)?;
        }
        Ok(qrels)
    }

    fn insert(&mut self, qid: String, doc: String, rel: bool) -> Result<()> {
        let q = self.judged.entry(qid.clone()).or_default();
        if q.insert(doc.clone(), rel).is_some() {
            return Err(EvaluationError::DuplicateJudgment { qid, doc });
        }
        Ok(())
    }

    /// Reads `qid 0 docid rel` lines.
    pub fn read<R: BufRead>(reader: R) -> Result<Self> {
        let mut qrels = Qrels::default();
        for (i, line) in reader.lines().enumerate() {
            let line = line?;
            let f: Vec<&str> = line.split_whitespace().collect();
            if f.is_empty() {
                continue;
            }
            let [qid, _, doc, rel] = f[..] else {
                return Err(EvaluationError::Format {
                    line: i + 1,
                    message: format!("expected 4 fields, got {}", f.len()),
                });
            };
            let rel: i64 = rel.parse().map_err(|_| EvaluationError::Format {
                line: i + 1,
                message: format!("invalid relevance {rel:?}"),
            })?;
            qrels.insert(qid.to_string(), doc.to_string(), rel > 0)?;
        }
        Ok(qrels)
    }

    pub fn read_file(path: &Path) -> Result<Self> {
        Self::read(BufReader::new(File::open(path)?))
    }

    pub fn relevant(&self, qid: &str) -> HashSet<&str> {
        self.judged
            .get(qid)
            .map(|q| q.iter().filter(|(_, r)| **r).map(|(d, _)| d.as_str()).collect())
            .unwrap_or_default()
    }

    pub fn contains_query(&self, qid: &str) -> bool {
        self.judged.contains_key(qid)
    }

    pub fn queries(&self) -> impl Iterator<Item = &str> {
        self.judged.keys().map(String::as_str)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunEntry {
    pub doc_id: String,
    pub rank: usize,
    pub score: f64,
    pub tag: String,
}

/// Ranked results per query, ordered by descending score then ascending doc id.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Run {
    queries: BTreeMap<String, Vec<RunEntry>>,
}

fn by_score(a: &RunEntry, b: &RunEntry) -> Ordering {
    b.score
        .partial_cmp(&a.score)
        .unwrap_or(Ordering::Equal)
        .then_with(|| a.doc_id.cmp(&b.doc_id))
}

impl Run {
    /// Adds one query's results, re-sorting and renumbering ranks.
    pub fn insert(&mut self, qid: impl Into<String>, mut entries: Vec<RunEntry>) -> Result<()> {
        let qid = qid.into();
        let mut seen = HashSet::new();
        for e in &entries {
            if !seen.insert(e.doc_id.as_str()) {
                return Err(EvaluationError::DuplicateDoc {
                    qid,
                    doc: e.doc_id.clone(),
                });
            }
        }
        let stored: Vec<usize> = entries.iter().map(|e| e.rank).collect();
        entries.sort_by(by_score);
        if entries.iter().zip(&stored).any(|(e, r)| e.rank != *r) {
            warn!("query {qid}: stored ranks disagree with score order; re-sorted");
        }
        for (i, e) in entries.iter_mut().enumerate() {
            e.rank = i + 1;
        }
        self.queries.insert(qid, entries);
        Ok(())
    }

    pub fn from_hits(hits: &[Hit], tag: &str) -> Vec<RunEntry> {
        hits.iter()
            .enumerate()
            .map(|(i, h)| RunEntry {
                doc_id: h.doc_id.clone(),
                rank: i + 1,
                score: h.score,
                tag: tag.to_string(),
            })
            .collect()
    }

    /// Reads `qid Q0 docid rank score tag` lines.
    pub fn read<R: BufRead>(reader: R) -> Result<Self> {
        let mut grouped: BTreeMap<String, Vec<RunEntry>> = BTreeMap::new();
        for (i, line) in reader.lines().enumerate() {
            let line = line?;
            let f: Vec<&str> = line.split_whitespace().collect();
            if f.is_empty() {
                continue;
            }
            let bad = |message: String| EvaluationError::Format { line: i + 1, message };
            let [qid, _, doc, rank, score, tag] = f[..] else {
                return Err(bad(format!("expected 6 fields, got {}", f.len())));
            };
            let rank = rank.parse().map_err(|_| bad(format!("invalid rank {rank:?}")))?;
            let score: f64 = score
                .parse()
                .ok()
                .filter(|s: &f64| s.is_finite())
                .ok_or_else(|| bad(format!("invalid score {score:?}")))?;
            grouped.entry(qid.to_string()).or_default().push(RunEntry {
                doc_id: doc.to_string(),
                rank,
                score,
                tag: tag.to_string(),
            });
        }
        let mut run = Run::default();
        for (qid, entries) in grouped {
            run.insert(qid, entries)?;
        }
        Ok(run)
    }

    pub fn read_file(path: &Path) -> Result<Self> {
        Self::read(BufReader::new(File::open(path)?))
    }

    pub fn write<W: Write>(&self, mut w: W) -> Result<()> {
        for (qid, entries) in &self.queries {
            for e in entries {
                writeln!(w, "{qid} Q0 {} {} {} {}", e.doc_id, e.rank, e.score, e.tag)?;
            }
        }
        w.flush()?;
        Ok(())
    }

    pub fn write_file(&self, path: &Path) -> Result<()> {
        self.write(BufWriter::new(File::create(path)?))
    }

    pub fn get(&self, qid: &str) -> Option<&[RunEntry]> {
        self.queries.get(qid).map(Vec::as_slice)
    }

    pub fn queries(&self) -> impl Iterator<Item = &str> {
        self.queries.keys().map(String::as_str)
    }

    pub fn ranking(&self, qid: &str) -> Vec<&str> {
        self.get(qid)
            .map(|e| e.iter().map(|e| e.doc_id.as_str()).collect())
            .unwrap_or_default()
    }
}

/// Relevant documents among the first `k`, divided by `k`.
pub fn precision_at_k<S: AsRef<str>>(ranking: &[S], relevant: &HashSet<&str>, k: usize) -> Result<f64> {
    if k == 0 {
        return Err(EvaluationError::InvalidK);
    }
    let hits = ranking.iter().take(k).filter(|d| relevant.contains(d.as_ref())).count();
    Ok(hits as f64 / k as f64)
}

/// Mean of precision at each relevant rank, over all relevant documents.
/// `None` when there are no relevant documents.
pub fn average_precision<S: AsRef<str>>(ranking: &[S], relevant: &HashSet<&str>) -> Option<f64> {
    if relevant.is_empty() {
        return None;
    }
    let mut found = 0usize;
    let mut sum = 0.0;
    for (i, d) in ranking.iter().enumerate() {
        if relevant.contains(d.as_ref()) {
            found += 1;
            sum += found as f64 / (i + 1) as f64;
        }
    }
    Some(sum / relevant.len() as f64)
}

#[derive(Debug, Clone, PartialEq)]
pub struct QueryMetrics {
    pub qid: String,
    pub retrieved: usize,
    pub relevant: usize,
    pub relevant_retrieved: usize,
    pub p5: f64,
    pub p10: f64,
    pub ap: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Report {
    pub queries: Vec<QueryMetrics>,
    pub p5: f64,
    pub p10: f64,
    pub map: f64,
    /// Run queries skipped for lack of judgments or relevant documents.
    pub excluded: Vec<String>,
}

pub fn evaluate(run: &Run, qrels: &Qrels) -> Result<Report> {
    let mut excluded = Vec::new();
    for qid in run.queries() {
        if !qrels.contains_query(qid) {
            warn!("query {qid} has no relevance judgments; excluded");
            excluded.push(qid.to_string());
        }
    }
    let mut queries = Vec::new();
    for qid in qrels.queries() {
        let relevant = qrels.relevant(qid);
        let ranking = run.ranking(qid);
        let Some(ap) = average_precision(&ranking, &relevant) else {
            if run.get(qid).is_some() {
                warn!("query {qid} has no relevant documents; excluded");
                excluded.push(qid.to_string());
            }
            continue;
        };
        queries.push(QueryMetrics {
            qid: qid.to_string(),
            retrieved: ranking.len(),
            relevant: relevant.len(),
            relevant_retrieved: ranking.iter().filter(|d| relevant.contains(*d)).count(),
            p5: precision_at_k(&ranking, &relevant, 5)?,
            p10: precision_at_k(&ranking, &relevant, 10)?,
            ap,
        });
    }
    if queries.is_empty() {
        return Err(EvaluationError::NoEvaluableQueries);
    }
    excluded.sort();
    let n = queries.len() as f64;
    let mean = |f: fn(&QueryMetrics) -> f64| queries.iter().map(f).sum::<f64>() / n;
    Ok(Report {
        p5: mean(|q| q.p5),
        p10: mean(|q| q.p10),
        map: mean(|q| q.ap),
        queries,
        excluded,
    })
}

/// Mean AP over every judged query with at least one relevant document.
pub fn mean_average_precision(run: &Run, qrels: &Qrels) -> Result<f64> {
    evaluate(run, qrels).map(|r| r.map)
}

impl Report {
    /// Aligned table followed by `metric<TAB>query<TAB>value` lines.
    pub fn render(&self) -> String {
        let width = self.queries.iter().map(|q| q.qid.len()).max().unwrap_or(0).max(5);
        let mut out = String::new();
        let _ = writeln!(
            out,
            "{:<width$}  {:>7}  {:>7}  {:>7}  {:>7}",
            "query", "P@5", "P@10", "AP", "rel_ret"
        );
        for q in &self.queries {
            let _ = writeln!(
                out,
                "{:<width$}  {:>7.4}  {:>7.4}  {:>7.4}  {:>3}/{:<3}",
                q.qid, q.p5, q.p10, q.ap, q.relevant_retrieved, q.relevant
            );
        }
        let _ = writeln!(
            out,
            "{:<width$}  {:>7.4}  {:>7.4}  {:>7.4}",
            "all", self.p5, self.p10, self.map
        );
        out.push('\n');
        for q in &self.queries {
            let _ = writeln!(out, "P_5\t{}\t{:.6}", q.qid, q.p5);
            let _ = writeln!(out, "P_10\t{}\t{:.6}", q.qid, q.p10);
            let _ = writeln!(out, "map\t{}\t{:.6}", q.qid, q.ap);
        }
        let _ = writeln!(out, "P_5\tall\t{:.6}", self.p5);
        let _ = writeln!(out, "P_10\tall\t{:.6}", self.p10);
        let _ = writeln!(out, "map\tall\t{:.6}", self.map);
        let _ = writeln!(out, "num_q\tall\t{}", self.queries.len());
        out
    }
}
