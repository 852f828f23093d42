//! Rule-based romanisation of out-of-vocabulary source words and
//! edit-distance matching against a list of target-language named entities.
//!
//! Source words are written in ITrans. A word is segmented into table units
//! by longest match; each unit expands into its Latin alternatives, and a
//! consonant followed by the inherent vowel `a` may either keep or drop it.
//! Candidates are the cross product of those choices, pruned to a beam.

use std::collections::{BTreeMap, HashSet};
use std::fs::File;
use std::io::{BufRead, BufReader};
use std::path::Path;

use log::debug;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub const DEFAULT_TABLE: &str = include_str!("../data/itrans_latin.tsv");
pub const DEFAULT_CAP: usize = 256;
pub const DEFAULT_THETA: f64 = 0.5;

const INHERENT_VOWEL: &str = "a";

#[derive(Debug, Error)]
pub enum TransliterationError {
    #[error("table line {line}: {message}")]
    Table { line: usize, message: String },
    #[error("named-entity list is empty")]
    EmptyEntityList,
    #[error("candidate cap must be at least 1")]
    InvalidCap,
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, TransliterationError>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum UnitClass {
    Consonant,
    Vowel,
    Other,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TableEntry {
    pub class: UnitClass,
    pub alternatives: Vec<String>,
}

/// Mapping from ITrans units to prioritised Latin spellings.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TransliterationTable {
    entries: BTreeMap<String, TableEntry>,
    longest_unit: usize,
}

impl TransliterationTable {
    /// Parses `unit<TAB>class<TAB>alt1,alt2,...` lines; `#` starts a comment line.
    pub fn parse(text: &str) -> Result<Self> {
        let mut entries = BTreeMap::new();
        for (i, raw) in text.lines().enumerate() {
            let line = i + 1;
            let err = |message: String| TransliterationError::Table { line, message };
            let raw = raw.trim_end_matches('\r');
            if raw.trim().is_empty() || raw.starts_with('#') {
                continue;
            }
            let fields: Vec<&str> = raw.split('\t').collect();
            if fields.len() != 3 {
                return Err(err("expected unit<TAB>class<TAB>alternatives".into()));
            }
            let unit = fields[0];
            if unit.is_empty() {
                return Err(err("empty unit".into()));
            }
            let class = match fields[1] {
                "consonant" => UnitClass::Consonant,
                "vowel" => UnitClass::Vowel,
                "other" => UnitClass::Other,
                c => return Err(err(format!("unknown class {c:?}"))),
            };
            let alternatives: Vec<String> = fields[2]
                .split(',')
                .map(str::trim)
                .filter(|s| !s.is_empty())
                .map(str::to_lowercase)
                .collect();
            if alternatives.is_empty() {
                return Err(err(format!("no alternatives for {unit:?}")));
            }
            if class == UnitClass::Consonant {
                if let Some(bad) = alternatives
                    .iter()
                    .find(|a| !a.ends_with(INHERENT_VOWEL) || a.len() < 2)
                {
                    return Err(err(format!(
                        "consonant alternative {bad:?} must end in the inherent vowel"
                    )));
                }
            }
            if entries
                .insert(unit.to_string(), TableEntry { class, alternatives })
                .is_some()
            {
                return Err(err(format!("duplicate unit {unit:?}")));
            }
        }
        let longest_unit = entries.keys().map(|k| k.chars().count()).max().unwrap_or(0);
        Ok(TransliterationTable { entries, longest_unit })
    }

    pub fn read_file(path: &Path) -> Result<Self> {
        Self::parse(&std::fs::read_to_string(path)?)
    }

    pub fn get(&self, unit: &str) -> Option<&TableEntry> {
        self.entries.get(unit)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Longest-match segmentation; `None` if some position matches no unit.
    pub fn segment<'a>(&'a self, word: &str) -> Option<Vec<(&'a str, &'a TableEntry)>> {
        let chars: Vec<(usize, char)> = word.char_indices().collect();
        let mut out = Vec::new();
        let mut i = 0;
        while i < chars.len() {
            let start = chars[i].0;
            let found = (1..=self.longest_unit.min(chars.len() - i)).rev().find_map(|len| {
                let end = chars.get(i + len).map_or(word.len(), |c| c.0);
                self.entries
                    .get_key_value(&word[start..end])
                    .map(|(k, e)| (len, k.as_str(), e))
            });
            let (len, unit, entry) = found?;
            out.push((unit, entry));
            i += len;
        }
        Some(out)
    }
}

impl Default for TransliterationTable {
    fn default() -> Self {
        Self::parse(DEFAULT_TABLE).expect("shipped table parses")
    }
}

/// Output of [`generate_candidates`].
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Candidates {
    /// Deduplicated, best first.
    pub strings: Vec<String>,
    /// False when the word could not be segmented and is returned verbatim.
    pub segmented: bool,
}

fn bare(alt: &str) -> &str {
    alt.strip_suffix(INHERENT_VOWEL).unwrap_or(alt)
}

/// Latin spellings for `word`, at most `cap`, ordered by the summed priority
/// of the chosen alternatives.
pub fn generate_candidates(word: &str, table: &TransliterationTable, cap: usize) -> Result<Candidates> {
    if cap == 0 {
        return Err(TransliterationError::InvalidCap);
    }
    let Some(units) = table.segment(word).filter(|u| !u.is_empty()) else {
        debug!("cannot segment {word:?}; using it verbatim");
        return Ok(Candidates {
            strings: vec![word.to_string()],
            segmented: false,
        });
    };

    // Each slot is a list of (text, priority) choices.
    let mut slots: Vec<Vec<(String, usize)>> = Vec::new();
    let mut i = 0;
    while i < units.len() {
        let (_, entry) = units[i];
        match entry.class {
            UnitClass::Consonant => match units.get(i + 1) {
                Some((unit, next)) if next.class == UnitClass::Vowel && *unit == INHERENT_VOWEL => {
                    let word_final = i + 2 == units.len();
                    let mut slot = Vec::new();
                    for (r, alt) in entry.alternatives.iter().enumerate() {
                        // Word-final schwa is usually silent; medial schwa usually kept.
                        let (keep, drop) = if word_final { (r + 1, r) } else { (r, r + 1) };
                        slot.push((alt.clone(), keep));
                        slot.push((bare(alt).to_string(), drop));
                    }
                    slots.push(slot);
                    i += 2;
                }
                Some((_, next)) if next.class == UnitClass::Vowel => {
                    let mut slot = Vec::new();
                    for (r, alt) in entry.alternatives.iter().enumerate() {
                        for (q, v) in next.alternatives.iter().enumerate() {
                            slot.push((format!("{}{}", bare(alt), v), r + q));
                        }
                    }
                    slots.push(slot);
                    i += 2;
                }
                // conjunct consonant, modifier, or end of word
                _ => {
                    slots.push(
                        entry
                            .alternatives
                            .iter()
                            .enumerate()
                            .map(|(r, a)| (bare(a).to_string(), r))
                            .collect(),
                    );
                    i += 1;
                }
            },
            UnitClass::Vowel | UnitClass::Other => {
                slots.push(
                    entry
                        .alternatives
                        .iter()
                        .enumerate()
                        .map(|(r, a)| (a.clone(), r))
                        .collect(),
                );
                i += 1;
            }
        }
    }

    let mut beam: Vec<(String, usize)> = vec![(String::new(), 0)];
    for mut slot in slots {
        slot.sort_by_key(|(_, r)| *r);
        let mut next: Vec<(String, usize)> = beam
            .iter()
            .flat_map(|(p, pr)| slot.iter().map(move |(s, r)| (format!("{p}{s}"), pr + r)))
            .collect();
        next.sort_by_key(|(_, r)| *r);
        let mut seen = HashSet::new();
        next.retain(|(s, _)| seen.insert(s.clone()));
        next.truncate(cap);
        beam = next;
    }
    Ok(Candidates {
        strings: beam.into_iter().map(|(s, _)| s).collect(),
        segmented: true,
    })
}

/// Levenshtein distance over Unicode scalar values with unit costs.
pub fn edit_distance(a: &str, b: &str) -> usize {
    let a: Vec<char> = a.chars().collect();
    let b: Vec<char> = b.chars().collect();
    if a.is_empty() {
        return b.len();
    }
    let mut prev: Vec<usize> = (0..=b.len()).collect();
    let mut curr = vec![0; b.len() + 1];
    for (i, ca) in a.iter().enumerate() {
        curr[0] = i + 1;
        for (j, cb) in b.iter().enumerate() {
            let sub = prev[j] + usize::from(ca != cb);
            curr[j + 1] = sub.min(prev[j + 1] + 1).min(curr[j] + 1);
        }
        std::mem::swap(&mut prev, &mut curr);
    }
    prev[b.len()]
}

/// Target-language entity strings; matching is on the lowercase form.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct NamedEntityList {
    entries: Vec<(String, String)>,
}

impl NamedEntityList {
    pub fn new<S: AsRef<str>>(entities: impl IntoIterator<Item = S>) -> Self {
        let mut seen = HashSet::new();
        let entries = entities
            .into_iter()
            .map(|e| e.as_ref().trim().to_string())
            .filter(|e| !e.is_empty())
            .filter_map(|e| {
                let folded = e.to_lowercase();
                seen.insert(folded.clone()).then_some((folded, e))
            })
            .collect();
        NamedEntityList { entries }
    }

    pub fn read<R: BufRead>(reader: R) -> Result<Self> {
        let lines: Vec<String> = reader.lines().collect::<std::io::Result<_>>()?;
        Ok(Self::new(lines))
    }

    pub fn read_file(path: &Path) -> Result<Self> {
        Self::read(BufReader::new(File::open(path)?))
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &str)> {
        self.entries.iter().map(|(f, o)| (f.as_str(), o.as_str()))
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EntityMatch {
    /// Entity in its original casing.
    pub entity: String,
    pub candidate: String,
    pub distance: usize,
}

/// Best `(candidate, entity)` pair by edit distance, ties to the
/// lexicographically smaller entity. `None` when the best pair's distance
/// relative to the longer string exceeds `theta`.
pub fn match_named_entity(
    word: &str,
    table: &TransliterationTable,
    entities: &NamedEntityList,
    cap: usize,
    theta: f64,
) -> Result<Option<EntityMatch>> {
    if entities.is_empty() {
        return Err(TransliterationError::EmptyEntityList);
    }
    let candidates = generate_candidates(word, table, cap)?;
    let mut best: Option<(usize, &str, &str, &str)> = None;
    for cand in &candidates.strings {
        let cand_folded = cand.to_lowercase();
        let cand_len = cand_folded.chars().count();
        for (folded, original) in entities.iter() {
            if let Some((d, e, _, _)) = best {
                let gap = cand_len.abs_diff(folded.chars().count());
                if gap > d || (gap == d && original >= e) {
                    continue;
                }
            }
            let d = edit_distance(&cand_folded, folded);
            let better = match best {
                None => true,
                Some((bd, be, _, _)) => d < bd || (d == bd && original < be),
            };
            if better {
                best = Some((d, original, folded, cand));
            }
        }
    }
    let (distance, entity, folded, candidate) = best.expect("non-empty inputs");
    let longest = candidate.chars().count().max(folded.chars().count()).max(1);
    if distance as f64 / longest as f64 > theta {
        return Ok(None);
    }
    Ok(Some(EntityMatch {
        entity: entity.to_string(),
        candidate: candidate.to_string(),
        distance,
    }))
}

/// Maps an out-of-vocabulary source term to a single target-language term.
pub trait EntityResolver {
    fn resolve(&self, term: &str) -> String;
}

/// Passes terms through unchanged.
#[derive(Debug, Clone, Copy, Default)]
pub struct Verbatim;

impl EntityResolver for Verbatim {
    fn resolve(&self, term: &str) -> String {
        term.to_string()
    }
}

/// Transliteration table plus entity list with matching parameters.
#[derive(Debug, Clone)]
pub struct Transliterator {
    pub table: TransliterationTable,
    pub entities: NamedEntityList,
    pub cap: usize,
    pub theta: f64,
}

impl Transliterator {
    pub fn new(table: TransliterationTable, entities: NamedEntityList) -> Result<Self> {
        if entities.is_empty() {
            return Err(TransliterationError::EmptyEntityList);
        }
        Ok(Transliterator {
            table,
            entities,
            cap: DEFAULT_CAP,
            theta: DEFAULT_THETA,
        })
    }

    pub fn with_cap(mut self, cap: usize) -> Self {
        self.cap = cap;
        self
    }

    pub fn with_theta(mut self, theta: f64) -> Self {
        self.theta = theta;
        self
    }

    pub fn match_entity(&self, word: &str) -> Result<Option<EntityMatch>> {
        match_named_entity(word, &self.table, &self.entities, self.cap, self.theta)
    }
}

impl EntityResolver for Transliterator {
    /// Matched entity, else the best raw candidate.
    fn resolve(&self, term: &str) -> String {
        match self.match_entity(term) {
            Ok(Some(m)) => m.entity,
            _ => generate_candidates(term, &self.table, 1)
                .ok()
                .and_then(|c| c.strings.into_iter().next())
                .unwrap_or_else(|| term.to_string()),
        }
    }
}
