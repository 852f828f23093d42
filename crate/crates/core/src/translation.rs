//! Query translation through the projected embedding space.
//!
//! Four strategies produce a [`WeightedQuery`]:
//!
//! * per-term nearest neighbours with uniform weights,
//! * per-term nearest neighbours weighted by similarity,
//! * similarity vectors over the whole target vocabulary, aggregated across
//!   query terms by sum or max, then cut to the best `k` words,
//! * source-side aggregation of projected vectors followed by one search.
//!
//! Terms missing from the source vocabulary are treated as names and handed
//! to an [`EntityResolver`]; they enter the query with weight 1.

use std::collections::{HashMap, HashSet};
use std::fmt;
use std::str::FromStr;

use log::warn;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::embedding::{top_k, EmbeddingError, EmbeddingStore};
use crate::projection::{ProjectionError, ProjectionMatrix};
use crate::stopwords::Stoplist;
use crate::transliteration::EntityResolver;

#[derive(Debug, Error)]
pub enum TranslationError {
    #[error(transparent)]
    Embedding(#[from] EmbeddingError),
    #[error(transparent)]
    Projection(#[from] ProjectionError),
    #[error("k must be at least 1")]
    InvalidK,
    #[error("similarity vectors differ in length: {0} vs {1}")]
    LengthMismatch(usize, usize),
    #[error("no similarity vectors to aggregate")]
    NothingToAggregate,
    #[error("query has no in-vocabulary terms")]
    NoInVocabTerms,
    #[error("projection maps {proj_src}->{proj_tgt} but stores have dims {src}->{tgt}")]
    IncompatibleSpaces {
        proj_src: usize,
        proj_tgt: usize,
        src: usize,
        tgt: usize,
    },
    #[error("internal error: {0}")]
    Internal(String),
    #[error("invalid weighted query token {0:?}")]
    Parse(String),
}

pub type Result<T> = std::result::Result<T, TranslationError>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum TermClass {
    /// Present in the source embedding vocabulary.
    InVocab,
    /// Absent from it; treated as a name and transliterated.
    OovNamed,
}

/// A source query after stopword removal, with each content term classified.
#[derive(Debug, Clone, PartialEq)]
pub struct Query {
    pub raw: Vec<String>,
    pub terms: Vec<(String, TermClass)>,
}

impl Query {
    /// Whitespace-tokenises `text`, drops stopwords and classifies terms
    /// against `vocabulary`. Source tokens are kept verbatim.
    pub fn parse(text: &str, stoplist: &Stoplist, vocabulary: &EmbeddingStore) -> Self {
        let raw: Vec<String> = text.split_whitespace().map(str::to_string).collect();
        Self::classify(raw, stoplist, |t| vocabulary.contains(t))
    }

    pub fn classify(raw: Vec<String>, stoplist: &Stoplist, known: impl Fn(&str) -> bool) -> Self {
        let (content, _) = remove_stopwords(&raw, stoplist);
        let terms = content
            .into_iter()
            .map(|t| {
                let class = if known(&t) {
                    TermClass::InVocab
                } else {
                    TermClass::OovNamed
                };
                (t, class)
            })
            .collect();
        Query { raw, terms }
    }

    pub fn is_empty(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn in_vocab(&self) -> impl Iterator<Item = &str> {
        self.terms
            .iter()
            .filter(|(_, c)| *c == TermClass::InVocab)
            .map(|(t, _)| t.as_str())
    }

    pub fn named(&self) -> impl Iterator<Item = &str> {
        self.terms
            .iter()
            .filter(|(_, c)| *c == TermClass::OovNamed)
            .map(|(t, _)| t.as_str())
    }
}

/// Order-preserving stopword filter. The flag is true when nothing survives.
pub fn remove_stopwords<S: AsRef<str>>(terms: &[S], stoplist: &Stoplist) -> (Vec<String>, bool) {
    let kept: Vec<String> = terms
        .iter()
        .map(AsRef::as_ref)
        .filter(|t| !stoplist.contains(t))
        .map(str::to_string)
        .collect();
    let empty = kept.is_empty();
    (kept, empty)
}

/// Translation strategy that produced a query.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Method {
    We,
    WeWeighted,
    SimvecSum,
    SimvecMax,
    SourceAggSum,
    SourceAggMax,
    SourceAggMin,
    Dict,
    WeDt,
    WeDtWeighted,
    ExternalSimvecDt,
}

impl Method {
    pub const ALL: [Method; 11] = [
        Method::We,
        Method::WeWeighted,
        Method::SimvecSum,
        Method::SimvecMax,
        Method::SourceAggSum,
        Method::SourceAggMax,
        Method::SourceAggMin,
        Method::Dict,
        Method::WeDt,
        Method::WeDtWeighted,
        Method::ExternalSimvecDt,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Method::We => "we",
            Method::WeWeighted => "we-weighted",
            Method::SimvecSum => "simvec-sum",
            Method::SimvecMax => "simvec-max",
            Method::SourceAggSum => "source-agg-sum",
            Method::SourceAggMax => "source-agg-max",
            Method::SourceAggMin => "source-agg-min",
            Method::Dict => "dict",
            Method::WeDt => "we-dt",
            Method::WeDtWeighted => "we-dt-weighted",
            Method::ExternalSimvecDt => "external-simvec-dt",
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Method {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        Method::ALL
            .into_iter()
            .find(|m| m.name() == s)
            .ok_or_else(|| format!("unknown method {s:?}"))
    }
}

/// Where a weighted term came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Origin {
    Embedding,
    Dictionary,
    External,
    Transliteration,
}

#[derive(Debug, Clone, PartialEq)]
pub struct WeightedTerm {
    pub term: String,
    pub weight: f64,
    pub origin: Origin,
}

/// Terms produced for one source term (or for the whole query).
#[derive(Debug, Clone, PartialEq)]
pub struct WeightGroup {
    /// Source term, or `None` for query-level groups.
    pub source: Option<String>,
    /// Whether the group's weights are meant to sum to 1.
    pub normalized: bool,
    pub terms: Vec<WeightedTerm>,
}

impl WeightGroup {
    pub fn total(&self) -> f64 {
        self.terms.iter().map(|t| t.weight).sum()
    }

    pub fn mass_from(&self, origin: Origin) -> f64 {
        self.terms.iter().filter(|t| t.origin == origin).map(|t| t.weight).sum()
    }

    fn named_entity(source: &str, target: String) -> Self {
        WeightGroup {
            source: Some(source.to_string()),
            normalized: false,
            terms: vec![WeightedTerm {
                term: target,
                weight: 1.0,
                origin: Origin::Transliteration,
            }],
        }
    }
}

/// Bag of target-language terms with positive weights.
///
/// Groups keep the provenance of every weight; [`WeightedQuery::terms`]
/// merges collisions by summation in first-seen order.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightedQuery {
    pub method: Method,
    groups: Vec<WeightGroup>,
    terms: Vec<(String, f64)>,
}

impl WeightedQuery {
    pub fn from_groups(method: Method, groups: Vec<WeightGroup>) -> Self {
        let groups: Vec<WeightGroup> = groups
            .into_iter()
            .map(|mut g| {
                g.terms.retain(|t| t.weight > 0.0 && t.weight.is_finite());
                g
            })
            .filter(|g| !g.terms.is_empty())
            .collect();
        let mut terms: Vec<(String, f64)> = Vec::new();
        let mut pos: HashMap<String, usize> = HashMap::new();
        for t in groups.iter().flat_map(|g| &g.terms) {
            match pos.get(&t.term) {
                Some(&i) => terms[i].1 += t.weight,
                None => {
                    pos.insert(t.term.clone(), terms.len());
                    terms.push((t.term.clone(), t.weight));
                }
            }
        }
        WeightedQuery { method, groups, terms }
    }

    /// A query given directly as `(term, weight)` pairs, e.g. read back from disk.
    pub fn from_terms(method: Method, terms: Vec<(String, f64)>) -> Self {
        let group = WeightGroup {
            source: None,
            normalized: false,
            terms: terms
                .into_iter()
                .map(|(term, weight)| WeightedTerm {
                    term,
                    weight,
                    origin: Origin::Embedding,
                })
                .collect(),
        };
        Self::from_groups(method, vec![group])
    }

    pub fn terms(&self) -> &[(String, f64)] {
        &self.terms
    }

    pub fn groups(&self) -> &[WeightGroup] {
        &self.groups
    }

    pub fn is_empty(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn weight(&self, term: &str) -> Option<f64> {
        self.terms.iter().find(|(t, _)| t == term).map(|(_, w)| *w)
    }

    pub fn words(&self) -> Vec<&str> {
        self.terms.iter().map(|(t, _)| t.as_str()).collect()
    }

    /// `term^weight` tokens with full-precision weights.
    pub fn to_exact_string(&self) -> String {
        self.terms
            .iter()
            .map(|(t, w)| format!("{t}^{w}"))
            .collect::<Vec<_>>()
            .join(" ")
    }

    /// Parses space-separated `term^weight` tokens.
    pub fn parse(method: Method, text: &str) -> Result<Self> {
        let mut terms = Vec::new();
        for tok in text.split_whitespace() {
            let (term, weight) = tok
                .rsplit_once('^')
                .ok_or_else(|| TranslationError::Parse(tok.to_string()))?;
            let weight: f64 = weight.parse().map_err(|_| TranslationError::Parse(tok.to_string()))?;
            if term.is_empty() || !(weight > 0.0 && weight.is_finite()) {
                return Err(TranslationError::Parse(tok.to_string()));
            }
            terms.push((term.to_string(), weight));
        }
        Ok(Self::from_terms(method, terms))
    }
}

/// Five-decimal `term^weight` notation.
impl fmt::Display for WeightedQuery {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (i, (t, w)) in self.terms.iter().enumerate() {
            if i > 0 {
                f.write_str(" ")?;
            }
            let s = format!("{w:.5}");
            let s = s.trim_end_matches('0').trim_end_matches('.');
            write!(f, "{t}^{s}")?;
        }
        Ok(())
    }
}

/// Cosine of one projected source term against every target word.
#[derive(Debug, Clone, PartialEq)]
pub struct SimilarityVector {
    pub term: String,
    /// Component `i` is the cosine with target word `i`; 0 for zero rows.
    pub values: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SimAggregation {
    Sum,
    Max,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SourceAggregation {
    Sum,
    Max,
    Min,
}

/// Componentwise sum or max of similarity vectors.
pub fn sim_vec_aggregate(vectors: &[SimilarityVector], mode: SimAggregation) -> Result<Vec<f64>> {
    let first = vectors.first().ok_or(TranslationError::NothingToAggregate)?;
    let mut acc = first.values.clone();
    for v in &vectors[1..] {
        if v.values.len() != acc.len() {
            return Err(TranslationError::LengthMismatch(acc.len(), v.values.len()));
        }
        for (a, b) in acc.iter_mut().zip(&v.values) {
            match mode {
                SimAggregation::Sum => *a += b,
                SimAggregation::Max => *a = a.max(*b),
            }
        }
    }
    Ok(acc)
}

/// Weights proportional to the positive part of each score. Falls back to
/// uniform weights when no score is positive.
pub(crate) fn proportional(scores: &[f64], mass: f64, context: &str) -> Vec<f64> {
    let clamped: Vec<f64> = scores.iter().map(|s| s.max(0.0)).collect();
    let total: f64 = clamped.iter().sum();
    if total > 0.0 {
        clamped.iter().map(|s| mass * s / total).collect()
    } else {
        if !scores.is_empty() {
            warn!("non-positive similarity mass for {context}; using uniform weights");
        }
        vec![mass / scores.len().max(1) as f64; scores.len()]
    }
}

/// Ranked `(target word, similarity)` candidates for each in-vocabulary term.
pub type TermCandidates = HashMap<String, Vec<(String, f64)>>;

/// Bundles the two embedding spaces, the projection and a name resolver.
pub struct Translator<'a> {
    pub src: &'a EmbeddingStore,
    pub tgt: &'a EmbeddingStore,
    pub projection: &'a ProjectionMatrix,
    pub resolver: &'a dyn EntityResolver,
}

impl<'a> Translator<'a> {
    pub fn new(
        src: &'a EmbeddingStore,
        tgt: &'a EmbeddingStore,
        projection: &'a ProjectionMatrix,
        resolver: &'a dyn EntityResolver,
    ) -> Result<Self> {
        if projection.source_dim() != src.dim() || projection.target_dim() != tgt.dim() {
            return Err(TranslationError::IncompatibleSpaces {
                proj_src: projection.source_dim(),
                proj_tgt: projection.target_dim(),
                src: src.dim(),
                tgt: tgt.dim(),
            });
        }
        Ok(Translator {
            src,
            tgt,
            projection,
            resolver,
        })
    }

    /// `W x` for a source word.
    pub fn project_term(&self, term: &str) -> Result<Vec<f64>> {
        let x = self.src.vector(term).ok_or_else(|| {
            TranslationError::Internal(format!(
                "term {term:?} classified in-vocabulary but missing from the source store"
            ))
        })?;
        Ok(self.projection.project_f32(x)?)
    }

    /// Top-`k` target words for one source word.
    pub fn candidates(&self, term: &str, k: usize) -> Result<Vec<(String, f64)>> {
        if k == 0 {
            return Err(TranslationError::InvalidK);
        }
        let v = self.project_term(term)?;
        Ok(self.tgt.nearest_neighbors(&v, k, &HashSet::new())?)
    }

    pub fn term_candidates(&self, query: &Query, k: usize) -> Result<TermCandidates> {
        query
            .in_vocab()
            .map(|t| Ok((t.to_string(), self.candidates(t, k)?)))
            .collect()
    }

    pub fn named_entity_group(&self, term: &str) -> WeightGroup {
        WeightGroup::named_entity(term, self.resolver.resolve(term))
    }

    fn per_term(
        &self,
        query: &Query,
        k: usize,
        method: Method,
        weigh: impl Fn(&str, &[(String, f64)]) -> (Vec<f64>, bool),
    ) -> Result<WeightedQuery> {
        if k == 0 {
            return Err(TranslationError::InvalidK);
        }
        let mut groups = Vec::with_capacity(query.terms.len());
        for (term, class) in &query.terms {
            match class {
                TermClass::OovNamed => groups.push(self.named_entity_group(term)),
                TermClass::InVocab => {
                    let cands = self.candidates(term, k)?;
                    let (weights, normalized) = weigh(term, &cands);
                    groups.push(WeightGroup {
                        source: Some(term.clone()),
                        normalized,
                        terms: cands
                            .into_iter()
                            .zip(weights)
                            .map(|((t, _), weight)| WeightedTerm {
                                term: t,
                                weight,
                                origin: Origin::Embedding,
                            })
                            .collect(),
                    });
                }
            }
        }
        Ok(WeightedQuery::from_groups(method, groups))
    }

    /// Each term's `k` nearest target words, all with weight 1.
    pub fn translate_we(&self, query: &Query, k: usize) -> Result<WeightedQuery> {
        self.per_term(query, k, Method::We, |_, c| (vec![1.0; c.len()], false))
    }

    /// Each term's `k` nearest target words, weighted by similarity so that
    /// every term's translations sum to 1.
    pub fn translate_we_weighted(&self, query: &Query, k: usize) -> Result<WeightedQuery> {
        self.per_term(query, k, Method::WeWeighted, |term, c| {
            let sims: Vec<f64> = c.iter().map(|(_, s)| *s).collect();
            (proportional(&sims, 1.0, term), true)
        })
    }

    pub fn similarity_vector(&self, term: &str) -> Result<SimilarityVector> {
        let v = self.project_term(term)?;
        let values = self.tgt.cosine_all(&v)?.into_iter().map(|s| s.unwrap_or(0.0)).collect();
        Ok(SimilarityVector {
            term: term.to_string(),
            values,
        })
    }

    /// Aggregates every in-vocabulary term's similarity vector and keeps the
    /// `k` best target words, weighted to sum to 1. Names follow with weight 1.
    pub fn sim_vec_translate(&self, query: &Query, k: usize, mode: SimAggregation) -> Result<WeightedQuery> {
        if k == 0 {
            return Err(TranslationError::InvalidK);
        }
        let method = match mode {
            SimAggregation::Sum => Method::SimvecSum,
            SimAggregation::Max => Method::SimvecMax,
        };
        let mut groups: Vec<WeightGroup> = query.named().map(|t| self.named_entity_group(t)).collect();
        let vectors = query
            .in_vocab()
            .map(|t| self.similarity_vector(t))
            .collect::<Result<Vec<_>>>()?;
        if !vectors.is_empty() {
            let combined = sim_vec_aggregate(&vectors, mode)?;
            let best = top_k(
                combined
                    .iter()
                    .enumerate()
                    .filter(|(i, _)| !self.tgt.is_degenerate(*i))
                    .map(|(i, s)| (i, *s)),
                k,
            );
            let scores: Vec<f64> = best.iter().map(|(_, s)| *s).collect();
            let weights = proportional(&scores, 1.0, "similarity-vector query");
            groups.push(WeightGroup {
                source: None,
                normalized: true,
                terms: best
                    .iter()
                    .zip(weights)
                    .map(|((i, _), weight)| WeightedTerm {
                        term: self.tgt.word(*i).to_string(),
                        weight,
                        origin: Origin::Embedding,
                    })
                    .collect(),
            });
        }
        Ok(WeightedQuery::from_groups(method, groups))
    }

    /// Combines projected term vectors componentwise, then takes the `k`
    /// nearest target words with uniform weights.
    pub fn translate_aggregated_source(
        &self,
        query: &Query,
        k: usize,
        mode: SourceAggregation,
    ) -> Result<WeightedQuery> {
        if k == 0 {
            return Err(TranslationError::InvalidK);
        }
        let method = match mode {
            SourceAggregation::Sum => Method::SourceAggSum,
            SourceAggregation::Max => Method::SourceAggMax,
            SourceAggregation::Min => Method::SourceAggMin,
        };
        let projected = query
            .in_vocab()
            .map(|t| self.project_term(t))
            .collect::<Result<Vec<_>>>()?;
        let combined = aggregate_source_vectors(&projected, mode)?;
        let hits = self.tgt.nearest_neighbors(&combined, k, &HashSet::new())?;
        let mut groups: Vec<WeightGroup> = query.named().map(|t| self.named_entity_group(t)).collect();
        groups.push(WeightGroup {
            source: None,
            normalized: false,
            terms: hits
                .into_iter()
                .map(|(term, _)| WeightedTerm {
                    term,
                    weight: 1.0,
                    origin: Origin::Embedding,
                })
                .collect(),
        });
        Ok(WeightedQuery::from_groups(method, groups))
    }

    /// Dispatches the embedding-only strategies.
    pub fn translate(&self, query: &Query, k: usize, method: Method) -> Result<WeightedQuery> {
        match method {
            Method::We => self.translate_we(query, k),
            Method::WeWeighted => self.translate_we_weighted(query, k),
            Method::SimvecSum => self.sim_vec_translate(query, k, SimAggregation::Sum),
            Method::SimvecMax => self.sim_vec_translate(query, k, SimAggregation::Max),
            Method::SourceAggSum => self.translate_aggregated_source(query, k, SourceAggregation::Sum),
            Method::SourceAggMax => self.translate_aggregated_source(query, k, SourceAggregation::Max),
            Method::SourceAggMin => self.translate_aggregated_source(query, k, SourceAggregation::Min),
            other => Err(TranslationError::Internal(format!(
                "{other} needs dictionary inputs; use the hybrid module"
            ))),
        }
    }
}

pub fn aggregate_source_vectors(vectors: &[Vec<f64>], mode: SourceAggregation) -> Result<Vec<f64>> {
    let first = vectors.first().ok_or(TranslationError::NoInVocabTerms)?;
    let mut acc = first.clone();
    for v in &vectors[1..] {
        if v.len() != acc.len() {
            return Err(TranslationError::LengthMismatch(acc.len(), v.len()));
        }
        for (a, b) in acc.iter_mut().zip(v) {
            *a = match mode {
                SourceAggregation::Sum => *a + b,
                SourceAggregation::Max => a.max(*b),
                SourceAggregation::Min => a.min(*b),
            };
        }
    }
    Ok(acc)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::transliteration::Verbatim;

    /// Target store whose cosines with the unit vector e0 are exactly the khela values.
    pub(crate) fn khela_fixture() -> (EmbeddingStore, EmbeddingStore, ProjectionMatrix) {
        let sims = [0.64f64, 0.69, 0.8, 0.32, 0.25];
        let names = ["cricket", "football", "game", "laptop", "computer"];
        let tgt = EmbeddingStore::from_rows(
            names
                .iter()
                .zip(sims)
                .map(|(n, s)| (*n, vec![s as f32, (1.0 - s * s).sqrt() as f32])),
        )
        .unwrap();
        let src = EmbeddingStore::from_rows([("khela", vec![1.0f32, 0.0])]).unwrap();
        (src, tgt, ProjectionMatrix::identity(2))
    }

    fn q(terms: &[(&str, TermClass)]) -> Query {
        Query {
            raw: terms.iter().map(|(t, _)| t.to_string()).collect(),
            terms: terms.iter().map(|(t, c)| (t.to_string(), *c)).collect(),
        }
    }

    #[test]
    fn stopword_removal() {
        let stop = Stoplist::new(["se"]);
        assert_eq!(
            remove_stopwords(&["se", "xati"], &stop),
            (vec!["xati".to_string()], false)
        );
        assert_eq!(remove_stopwords(&["se", "se"], &stop), (vec![], true));
        let none = Stoplist::default();
        assert_eq!(remove_stopwords(&["a", "b"], &none).0, ["a", "b"]);
    }

    #[test]
    fn query_classification() {
        let (src, _, _) = khela_fixture();
        let query = Query::parse("2008 khela se guvaahaaTii", &Stoplist::new(["se"]), &src);
        assert_eq!(query.raw.len(), 4);
        assert_eq!(
            query.terms,
            vec![
                ("2008".to_string(), TermClass::OovNamed),
                ("khela".to_string(), TermClass::InVocab),
                ("guvaahaaTii".to_string(), TermClass::OovNamed),
            ]
        );
    }

    #[test]
    fn similarity_vector_reproduces_khela_table() {
        let (src, tgt, w) = khela_fixture();
        let t = Translator::new(&src, &tgt, &w, &Verbatim).unwrap();
        let v = t.similarity_vector("khela").unwrap();
        let expected = [0.64, 0.69, 0.8, 0.32, 0.25];
        for (a, b) in v.values.iter().zip(expected) {
            assert!((a - b).abs() < 1e-6, "{a} vs {b}");
        }
        assert!(t.similarity_vector("nope").is_err());
    }

    #[test]
    fn simvec_khela_weights() {
        let (src, tgt, w) = khela_fixture();
        let t = Translator::new(&src, &tgt, &w, &Verbatim).unwrap();
        let query = q(&[("khela", TermClass::InVocab)]);
        let max = t.sim_vec_translate(&query, 3, SimAggregation::Max).unwrap();
        assert_eq!(max.words(), ["game", "football", "cricket"]);
        for ((_, got), want) in max.terms().iter().zip([0.8 / 2.13, 0.69 / 2.13, 0.64 / 2.13]) {
            assert!((got - want).abs() < 1e-6);
        }
        assert_eq!(max.to_string(), "game^0.37559 football^0.32394 cricket^0.30047");
        let sum = t.sim_vec_translate(&query, 3, SimAggregation::Sum).unwrap();
        assert_eq!(sum.terms(), max.terms());
    }

    #[test]
    fn aggregate_examples() {
        let v = |x: Vec<f64>| SimilarityVector {
            term: "t".into(),
            values: x,
        };
        let vs = [v(vec![0.1, 0.9]), v(vec![0.8, 0.2])];
        let sum = sim_vec_aggregate(&vs, SimAggregation::Sum).unwrap();
        assert!((sum[0] - 0.9).abs() < 1e-12 && (sum[1] - 1.1).abs() < 1e-12);
        assert_eq!(sim_vec_aggregate(&vs, SimAggregation::Max).unwrap(), vec![0.8, 0.9]);
        assert_eq!(
            sim_vec_aggregate(&vs[..1], SimAggregation::Max).unwrap(),
            vec![0.1, 0.9]
        );
        assert!(matches!(
            sim_vec_aggregate(&[v(vec![1.0]), v(vec![1.0, 2.0])], SimAggregation::Sum),
            Err(TranslationError::LengthMismatch(1, 2))
        ));
        assert!(sim_vec_aggregate(&[], SimAggregation::Sum).is_err());
    }

    #[test]
    fn we_exact_match_and_ne_bypass() {
        let tgt = EmbeddingStore::from_rows([("g", vec![0.0f32, 1.0]), ("h", vec![1.0, 0.0])]).unwrap();
        let src = EmbeddingStore::from_rows([("s", vec![0.0f32, 1.0])]).unwrap();
        let w = ProjectionMatrix::identity(2);
        let t = Translator::new(&src, &tgt, &w, &Verbatim).unwrap();
        let out = t.translate_we(&q(&[("s", TermClass::InVocab)]), 1).unwrap();
        assert_eq!(out.terms(), [("g".to_string(), 1.0)]);
        let out = t.translate_we(&q(&[("Delhi", TermClass::OovNamed)]), 3).unwrap();
        assert_eq!(out.terms(), [("Delhi".to_string(), 1.0)]);
        assert_eq!(out.groups()[0].terms[0].origin, Origin::Transliteration);
        assert!(matches!(
            t.translate_we(&q(&[("zz", TermClass::InVocab)]), 1),
            Err(TranslationError::Internal(_))
        ));
        assert!(matches!(
            t.translate_we(&q(&[("s", TermClass::InVocab)]), 0),
            Err(TranslationError::InvalidK)
        ));
    }

    #[test]
    fn we_weighted_normalizes_each_term() {
        // cosines with e0: a 0.6, b 0.4, c 0.2
        let tgt = EmbeddingStore::from_rows(
            [("a", 0.6f64), ("b", 0.4), ("c", 0.2)].map(|(n, s)| (n, vec![s as f32, (1.0 - s * s).sqrt() as f32])),
        )
        .unwrap();
        let src = EmbeddingStore::from_rows([("x", vec![1.0f32, 0.0])]).unwrap();
        let w = ProjectionMatrix::identity(2);
        let t = Translator::new(&src, &tgt, &w, &Verbatim).unwrap();
        let out = t.translate_we_weighted(&q(&[("x", TermClass::InVocab)]), 3).unwrap();
        let expect = [0.5, 1.0 / 3.0, 1.0 / 6.0];
        for ((_, got), want) in out.terms().iter().zip(expect) {
            assert!((got - want).abs() < 1e-6, "{got} {want}");
        }
        let one = t.translate_we_weighted(&q(&[("x", TermClass::InVocab)]), 1).unwrap();
        assert_eq!(one.terms()[0].1, 1.0);
    }

    #[test]
    fn non_positive_similarities_fall_back_to_uniform() {
        assert_eq!(proportional(&[-0.5, -0.1], 1.0, "t"), vec![0.5, 0.5]);
        assert_eq!(proportional(&[0.5, -0.1], 1.0, "t"), vec![1.0, 0.0]);
    }

    #[test]
    fn source_aggregation() {
        let tgt = EmbeddingStore::from_rows([
            ("diag", vec![1.0f32, 1.0]),
            ("x", vec![1.0, 0.0]),
            ("y", vec![0.0, 1.0]),
        ])
        .unwrap();
        let src = EmbeddingStore::from_rows([("p", vec![1.0f32, 0.0]), ("r", vec![0.0, 1.0])]).unwrap();
        let w = ProjectionMatrix::identity(2);
        let t = Translator::new(&src, &tgt, &w, &Verbatim).unwrap();
        let both = q(&[("p", TermClass::InVocab), ("r", TermClass::InVocab)]);
        assert_eq!(
            aggregate_source_vectors(&[vec![1.0, 0.0], vec![0.0, 1.0]], SourceAggregation::Sum).unwrap(),
            vec![1.0, 1.0]
        );
        let out = t.translate_aggregated_source(&both, 1, SourceAggregation::Sum).unwrap();
        assert_eq!(out.words(), ["diag"]);
        assert!(matches!(
            t.translate_aggregated_source(&both, 1, SourceAggregation::Min),
            Err(TranslationError::Embedding(EmbeddingError::Degenerate))
        ));
        let single = q(&[("p", TermClass::InVocab)]);
        for mode in [SourceAggregation::Sum, SourceAggregation::Max, SourceAggregation::Min] {
            assert_eq!(
                t.translate_aggregated_source(&single, 2, mode).unwrap().terms(),
                t.translate_we(&single, 2).unwrap().terms()
            );
        }
        assert!(matches!(
            t.translate_aggregated_source(&q(&[("N", TermClass::OovNamed)]), 1, SourceAggregation::Sum),
            Err(TranslationError::NoInVocabTerms)
        ));
    }

    #[test]
    fn simvec_without_in_vocab_terms_keeps_names() {
        let (src, tgt, w) = khela_fixture();
        let t = Translator::new(&src, &tgt, &w, &Verbatim).unwrap();
        let out = t
            .sim_vec_translate(
                &q(&[("Sri", TermClass::OovNamed), ("Lankan", TermClass::OovNamed)]),
                3,
                SimAggregation::Max,
            )
            .unwrap();
        assert_eq!(out.to_string(), "Sri^1 Lankan^1");
    }

    #[test]
    fn weighted_query_merges_and_parses() {
        let g = |terms: &[(&str, f64)]| WeightGroup {
            source: None,
            normalized: false,
            terms: terms
                .iter()
                .map(|(t, w)| WeightedTerm {
                    term: t.to_string(),
                    weight: *w,
                    origin: Origin::Embedding,
                })
                .collect(),
        };
        let wq = WeightedQuery::from_groups(
            Method::We,
            vec![g(&[("a", 0.5), ("b", 0.25)]), g(&[("a", 0.25), ("z", 0.0)])],
        );
        assert_eq!(wq.terms(), [("a".to_string(), 0.75), ("b".to_string(), 0.25)]);
        let back = WeightedQuery::parse(Method::We, &wq.to_exact_string()).unwrap();
        assert_eq!(back.terms(), wq.terms());
        assert!(WeightedQuery::parse(Method::We, "a^x").is_err());
        assert!(WeightedQuery::parse(Method::We, "a").is_err());
        assert!(WeightedQuery::parse(Method::We, "a^-1").is_err());
    }

    #[test]
    fn translator_checks_dimensions() {
        let (src, tgt, _) = khela_fixture();
        let w = ProjectionMatrix::identity(3);
        assert!(matches!(
            Translator::new(&src, &tgt, &w, &Verbatim),
            Err(TranslationError::IncompatibleSpaces { .. })
        ));
    }

    #[test]
    fn method_names_round_trip() {
        for m in Method::ALL {
            assert_eq!(m.name().parse::<Method>().unwrap(), m);
        }
        assert!("bogus".parse::<Method>().is_err());
    }
}
