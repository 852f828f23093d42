//! Blending dictionary, embedding and external-translator output.

use std::collections::{BTreeMap, HashMap};
use std::fs::File;
use std::io::{BufRead, BufReader};
use std::path::Path;

use log::{info, warn};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::projection::{ProjectionError, TranslationLexicon};
use crate::retrieval::analyze;
use crate::stopwords::Stoplist;
use crate::translation::{
    proportional, Method, Origin, Query, TermCandidates, TermClass, WeightGroup, WeightedQuery, WeightedTerm,
};
use crate::transliteration::EntityResolver;

pub const DEFAULT_DICT_WEIGHT: f64 = 0.2;
pub const DEFAULT_EXTERNAL_WEIGHT: f64 = 0.6;
pub const DEFAULT_EXTERNAL_DICT_WEIGHT: f64 = 0.1;

const MASS_SLACK: f64 = 1e-12;

#[derive(Debug, Error)]
pub enum HybridError {
    #[error("weight {name} = {value} outside [0, 1]")]
    InvalidWeight { name: &'static str, value: f64 },
    #[error("external and dictionary masses sum to {0} > 1")]
    MassOverflow(f64),
    #[error("format error at line {line}: {message}")]
    Format { line: usize, message: String },
    #[error("duplicate external translation for query {0:?}")]
    DuplicateQuery(String),
    #[error(transparent)]
    Lexicon(#[from] ProjectionError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, HybridError>;

/// Source term → single-word target translations, in file order without repeats.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct DictionaryTranslations {
    map: BTreeMap<String, Vec<String>>,
    pub skipped_multiword: usize,
}

impl DictionaryTranslations {
    pub fn from_pairs<S: Into<String>>(pairs: impl IntoIterator<Item = (S, S)>) -> Self {
        let mut dict = DictionaryTranslations::default();
        for (s, t) in pairs {
            dict.insert(s.into(), t.into());
        }
        dict
    }

    pub fn from_lexicon(lexicon: &TranslationLexicon) -> Self {
        let mut dict = Self::from_pairs(lexicon.entries.iter().cloned());
        dict.skipped_multiword = lexicon.skipped_multiword;
        dict
    }

    pub fn read<R: BufRead>(reader: R) -> Result<Self> {
        Ok(Self::from_lexicon(&TranslationLexicon::read(reader)?))
    }

    pub fn read_file(path: &Path) -> Result<Self> {
        Ok(Self::from_lexicon(&TranslationLexicon::read_file(path)?))
    }

    fn insert(&mut self, source: String, target: String) {
        let list = self.map.entry(source).or_default();
        if !list.contains(&target) {
            list.push(target);
        }
    }

    pub fn get(&self, term: &str) -> Option<&[String]> {
        self.map.get(term).map(Vec::as_slice)
    }

    pub fn len(&self) -> usize {
        self.map.len()
    }

    pub fn is_empty(&self) -> bool {
        self.map.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &[String])> {
        self.map.iter().map(|(k, v)| (k.as_str(), v.as_slice()))
    }
}

/// Pre-produced translations of whole queries, keyed by query id.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ExternalTranslations {
    map: BTreeMap<String, String>,
}

impl ExternalTranslations {
    pub fn from_pairs<S: Into<String>>(pairs: impl IntoIterator<Item = (S, S)>) -> Result<Self> {
        let mut map = BTreeMap::new();
        for (q, t) in pairs {
            let q = q.into();
            if map.insert(q.clone(), t.into()).is_some() {
                return Err(HybridError::DuplicateQuery(q));
            }
        }
        Ok(ExternalTranslations { map })
    }

    /// Reads `query_id<TAB>translated text` lines.
    pub fn read<R: BufRead>(reader: R) -> Result<Self> {
        let mut pairs = Vec::new();
        for (i, line) in reader.lines().enumerate() {
            let line = line?;
            let line = line.trim_end_matches('\r');
            if line.trim().is_empty() {
                continue;
            }
            let (qid, text) = line.split_once('\t').ok_or_else(|| HybridError::Format {
                line: i + 1,
                message: "expected query_id<TAB>text".into(),
            })?;
            pairs.push((qid.trim().to_string(), text.trim().to_string()));
        }
        Self::from_pairs(pairs)
    }

    pub fn read_file(path: &Path) -> Result<Self> {
        Self::read(BufReader::new(File::open(path)?))
    }

    pub fn get(&self, qid: &str) -> Option<&str> {
        self.map.get(qid).map(String::as_str)
    }

    pub fn len(&self) -> usize {
        self.map.len()
    }

    pub fn is_empty(&self) -> bool {
        self.map.is_empty()
    }
}

fn check_unit(name: &'static str, value: f64) -> Result<()> {
    if (0.0..=1.0).contains(&value) {
        Ok(())
    } else {
        Err(HybridError::InvalidWeight { name, value })
    }
}

fn term(term: &str, weight: f64, origin: Origin) -> WeightedTerm {
    WeightedTerm {
        term: term.to_string(),
        weight,
        origin,
    }
}

fn uniform(targets: &[String], mass: f64, origin: Origin) -> Vec<WeightedTerm> {
    let share = mass / targets.len() as f64;
    targets.iter().map(|t| term(t, share, origin)).collect()
}

fn embedding_share(term_name: &str, cands: &[(String, f64)], mass: f64) -> Vec<WeightedTerm> {
    let sims: Vec<f64> = cands.iter().map(|(_, s)| *s).collect();
    cands
        .iter()
        .zip(proportional(&sims, mass, term_name))
        .map(|((t, _), w)| term(t, w, Origin::Embedding))
        .collect()
}

fn named_group(source: &str, resolver: &dyn EntityResolver) -> WeightGroup {
    WeightGroup {
        source: Some(source.to_string()),
        normalized: false,
        terms: vec![term(&resolver.resolve(source), 1.0, Origin::Transliteration)],
    }
}

/// Dictionary baseline: every dictionary translation at weight 1. Names
/// without an entry are transliterated; other missing terms are dropped.
pub fn translate_dictionary(
    query: &Query,
    dict: &DictionaryTranslations,
    resolver: &dyn EntityResolver,
) -> WeightedQuery {
    let mut groups = Vec::new();
    for (t, class) in &query.terms {
        match (dict.get(t), class) {
            (Some(targets), _) => groups.push(WeightGroup {
                source: Some(t.clone()),
                normalized: false,
                terms: targets.iter().map(|x| term(x, 1.0, Origin::Dictionary)).collect(),
            }),
            (None, TermClass::OovNamed) => groups.push(named_group(t, resolver)),
            (None, TermClass::InVocab) => warn!("no dictionary translation for {t:?}; term dropped"),
        }
    }
    WeightedQuery::from_groups(Method::Dict, groups)
}

/// Dictionary translations when they exist, else the top `k` embedding
/// translations, all at weight 1.
pub fn combine_we_dt(
    query: &Query,
    dict: &DictionaryTranslations,
    candidates: &TermCandidates,
    k: usize,
    resolver: &dyn EntityResolver,
) -> WeightedQuery {
    let mut groups = Vec::new();
    for (t, class) in &query.terms {
        let group = match (dict.get(t), candidates.get(t), class) {
            (Some(targets), _, _) => WeightGroup {
                source: Some(t.clone()),
                normalized: false,
                terms: targets.iter().map(|x| term(x, 1.0, Origin::Dictionary)).collect(),
            },
            (None, _, TermClass::OovNamed) => named_group(t, resolver),
            (None, Some(cands), TermClass::InVocab) => WeightGroup {
                source: Some(t.clone()),
                normalized: false,
                terms: cands
                    .iter()
                    .take(k)
                    .map(|(x, _)| term(x, 1.0, Origin::Embedding))
                    .collect(),
            },
            (None, None, TermClass::InVocab) => {
                warn!("no translation source for {t:?}; term dropped");
                continue;
            }
        };
        groups.push(group);
    }
    WeightedQuery::from_groups(Method::WeDt, groups)
}

/// Per source term: dictionary translations share `w` uniformly, embedding
/// translations share `1 - w` in proportion to similarity. A term with a
/// single source gives that source the whole unit mass.
pub fn combine_weighted(
    query: &Query,
    dict: &DictionaryTranslations,
    candidates: &TermCandidates,
    w: f64,
    resolver: &dyn EntityResolver,
) -> Result<WeightedQuery> {
    check_unit("w", w)?;
    let mut groups = Vec::new();
    for (t, class) in &query.terms {
        let d = dict.get(t).filter(|d| !d.is_empty());
        let e = candidates.get(t).filter(|e| !e.is_empty());
        let terms = match (d, e, class) {
            (Some(d), Some(e), _) => {
                let mut terms = uniform(d, w, Origin::Dictionary);
                terms.extend(embedding_share(t, e, 1.0 - w));
                terms
            }
            (Some(d), None, _) => uniform(d, 1.0, Origin::Dictionary),
            (None, _, TermClass::OovNamed) => {
                groups.push(named_group(t, resolver));
                continue;
            }
            (None, Some(e), TermClass::InVocab) => embedding_share(t, e, 1.0),
            (None, None, TermClass::InVocab) => {
                warn!("no translation source for {t:?}; term dropped");
                continue;
            }
        };
        groups.push(WeightGroup {
            source: Some(t.clone()),
            normalized: true,
            terms,
        });
    }
    Ok(WeightedQuery::from_groups(Method::WeDtWeighted, groups))
}

/// Mass split for [`combine_external`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ExternalBlend {
    pub w_ext: f64,
    pub w_dict: f64,
    /// Dictionary mass for the [`combine_weighted`] fallback.
    pub fallback_w: f64,
}

impl Default for ExternalBlend {
    fn default() -> Self {
        ExternalBlend {
            w_ext: DEFAULT_EXTERNAL_WEIGHT,
            w_dict: DEFAULT_EXTERNAL_DICT_WEIGHT,
            fallback_w: DEFAULT_DICT_WEIGHT,
        }
    }
}

impl ExternalBlend {
    pub fn validate(&self) -> Result<()> {
        check_unit("w_ext", self.w_ext)?;
        check_unit("w_dict", self.w_dict)?;
        check_unit("fallback_w", self.fallback_w)?;
        let total = self.w_ext + self.w_dict;
        if total > 1.0 + MASS_SLACK {
            return Err(HybridError::MassOverflow(total));
        }
        Ok(())
    }
}

/// Inputs shared by the external blend and its fallback.
pub struct ExternalInputs<'a> {
    pub dict: &'a DictionaryTranslations,
    pub candidates: &'a TermCandidates,
    pub stoplist: &'a Stoplist,
    pub resolver: &'a dyn EntityResolver,
}

/// Query-level blend of an external translation, dictionary translations and
/// a similarity-vector translation. The three sources share one unit of mass:
/// `w_ext` for external tokens, `w_dict` for dictionary translations and the
/// rest for embedding terms. An absent external or dictionary source leaves
/// its mass to the embeddings; absent embeddings rescale the other two.
/// Names from `sim_vec` keep weight 1 outside that mass.
pub fn combine_external(
    query: &Query,
    external: Option<&str>,
    sim_vec: &WeightedQuery,
    inputs: &ExternalInputs<'_>,
    blend: &ExternalBlend,
) -> Result<WeightedQuery> {
    blend.validate()?;
    let Some(text) = external else {
        info!("no external translation; falling back to weighted dictionary blend");
        return combine_weighted(query, inputs.dict, inputs.candidates, blend.fallback_w, inputs.resolver);
    };

    let ext_tokens = analyze(text, inputs.stoplist);
    let dict_terms: Vec<String> = query
        .terms
        .iter()
        .filter_map(|(t, _)| inputs.dict.get(t))
        .flatten()
        .cloned()
        .collect();
    let emb: Vec<&WeightedTerm> = sim_vec
        .groups()
        .iter()
        .filter(|g| g.normalized)
        .flat_map(|g| &g.terms)
        .filter(|t| t.origin == Origin::Embedding)
        .collect();

    let mut ext_mass = if ext_tokens.is_empty() { 0.0 } else { blend.w_ext };
    let mut dict_mass = if dict_terms.is_empty() { 0.0 } else { blend.w_dict };
    let emb_mass = if emb.is_empty() {
        0.0
    } else {
        (1.0 - ext_mass - dict_mass).max(0.0)
    };
    let total = ext_mass + dict_mass + emb_mass;
    if total > 0.0 && total < 1.0 {
        ext_mass /= total;
        dict_mass /= total;
    }

    let mut groups: Vec<WeightGroup> = sim_vec
        .groups()
        .iter()
        .filter(|g| !g.normalized && g.terms.iter().all(|t| t.origin == Origin::Transliteration))
        .cloned()
        .collect();
    let mut terms = Vec::new();
    if ext_mass > 0.0 {
        terms.extend(uniform(&ext_tokens, ext_mass, Origin::External));
    }
    if dict_mass > 0.0 {
        terms.extend(uniform(&dict_terms, dict_mass, Origin::Dictionary));
    }
    if emb_mass > 0.0 {
        let emb_total: f64 = emb.iter().map(|t| t.weight).sum();
        terms.extend(
            emb.iter()
                .map(|t| term(&t.term, emb_mass * t.weight / emb_total, Origin::Embedding)),
        );
    }
    if !terms.is_empty() {
        groups.push(WeightGroup {
            source: None,
            normalized: true,
            terms,
        });
    }
    Ok(WeightedQuery::from_groups(Method::ExternalSimvecDt, groups))
}

/// Coverage statistics for a dictionary over a set of queries.
pub fn dictionary_coverage<'q>(
    dict: &DictionaryTranslations,
    queries: impl IntoIterator<Item = &'q Query>,
) -> (usize, usize) {
    let mut seen: HashMap<&str, bool> = HashMap::new();
    for q in queries {
        for (t, _) in &q.terms {
            seen.insert(t, dict.get(t).is_some());
        }
    }
    (seen.values().filter(|v| **v).count(), seen.len())
}
