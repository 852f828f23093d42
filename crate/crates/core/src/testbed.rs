//! Seeded synthetic bilingual testbed.
//!
//! Both languages share one concept inventory. Every concept has a latent
//! vector near its topic's centroid, and text is emitted by a slowly drifting
//! discourse vector that picks concept `w` with weight `exp(<z_w, c>)`. Each
//! language renders concepts with its own word forms and samples its corpus
//! from an independent random stream.
//! The generator also emits a target-language document collection with
//! queries and judgments, a partial bilingual dictionary, a small training
//! lexicon, held-out evaluation pairs, named entities and simulated external
//! translations.

use std::collections::{BTreeSet, HashSet};
use std::fmt::Write as _;
use std::fs;
use std::io;
use std::path::{Path, PathBuf};

use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::seq::{IndexedRandom, SliceRandom};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::retrieval::Document;
use crate::transliteration::{generate_candidates, TransliterationTable};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TestbedConfig {
    pub seed: u64,
    pub topics: usize,
    pub concepts_per_topic: usize,
    /// Dimension of the latent space shared by both languages.
    pub latent_dim: usize,
    /// Standard deviation of a concept's offset from its topic centroid.
    pub concept_spread: f64,
    /// Norm of the discourse vector; larger values give sharper topics.
    pub focus: f64,
    /// Per-word random-walk step of the discourse vector.
    pub drift: f64,
    pub tokens_per_side: usize,
    pub min_sentence: usize,
    pub max_sentence: usize,
    pub training_pairs: usize,
    pub heldout_pairs: usize,
    pub dictionary_coverage: f64,
    pub queries: usize,
    pub concepts_per_query: usize,
    pub named_entity_rate: f64,
    pub min_relevant: usize,
    pub max_relevant: usize,
    pub background_docs: usize,
    pub doc_len: usize,
}

impl Default for TestbedConfig {
    fn default() -> Self {
        TestbedConfig {
            seed: 7,
            topics: 16,
            concepts_per_topic: 25,
            latent_dim: 8,
            concept_spread: 0.5,
            focus: 4.0,
            drift: 0.3,
            tokens_per_side: 200_000,
            min_sentence: 10,
            max_sentence: 20,
            training_pairs: 50,
            heldout_pairs: 20,
            dictionary_coverage: 0.5,
            queries: 25,
            concepts_per_query: 3,
            named_entity_rate: 0.6,
            min_relevant: 4,
            max_relevant: 8,
            background_docs: 600,
            doc_len: 40,
        }
    }
}

pub const SOURCE_STOPWORDS: [&str; 6] = ["kii", "ke", "kaa", "se", "meM", "hai"];
pub const TARGET_STOPWORDS: [&str; 6] = ["the", "of", "in", "and", "a", "is"];

#[derive(Debug, Clone, PartialEq)]
pub struct Topic {
    pub id: String,
    pub text: String,
    pub concepts: Vec<usize>,
    /// `(source ITrans form, target name)` when the query mentions a name.
    pub named_entity: Option<(String, String)>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Testbed {
    pub config: TestbedConfig,
    pub source_words: Vec<String>,
    pub target_words: Vec<String>,
    pub source_corpus: Vec<Vec<String>>,
    pub target_corpus: Vec<Vec<String>>,
    pub lexicon: Vec<(String, String)>,
    pub heldout: Vec<(String, String)>,
    pub dictionary: Vec<(String, String)>,
    pub named_entities: Vec<(String, String)>,
    pub documents: Vec<Document>,
    pub topics: Vec<Topic>,
    pub qrels: Vec<(String, String, bool)>,
    pub external: Vec<(String, String)>,
}

/// Paths of the files written by [`Testbed::write`].
#[derive(Debug, Clone)]
pub struct TestbedFiles {
    pub dir: PathBuf,
    pub config: PathBuf,
}

struct Discourse {
    dim: usize,
    per: usize,
    centroids: Vec<Vec<f64>>,
    latents: Vec<Vec<f64>>,
    focus: f64,
    drift: f64,
}

fn gaussian(dim: usize, scale: f64, rng: &mut ChaCha8Rng) -> Vec<f64> {
    (0..dim).map(|_| scale * rng.sample::<f64, _>(StandardNormal)).collect()
}

impl Discourse {
    fn new(cfg: &TestbedConfig, rng: &mut ChaCha8Rng) -> Self {
        let dim = cfg.latent_dim;
        let centroids: Vec<Vec<f64>> = (0..cfg.topics)
            .map(|_| {
                let v = gaussian(dim, 1.0, rng);
                let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
                v.iter().map(|x| x / norm).collect()
            })
            .collect();
        let latents = (0..cfg.topics * cfg.concepts_per_topic)
            .map(|c| {
                let mu = &centroids[c / cfg.concepts_per_topic];
                gaussian(dim, cfg.concept_spread, rng)
                    .iter()
                    .zip(mu)
                    .map(|(e, m)| m + e)
                    .collect()
            })
            .collect();
        Discourse {
            dim,
            per: cfg.concepts_per_topic,
            centroids,
            latents,
            focus: cfg.focus,
            drift: cfg.drift,
        }
    }

    /// Emits `len` concepts while a discourse vector, started at `topic`'s
    /// centroid, drifts; each emission is drawn with weight `exp(<z, c>)`.
    fn walk(&self, topic: usize, len: usize, rng: &mut ChaCha8Rng) -> Vec<usize> {
        let mut c: Vec<f64> = self.centroids[topic].iter().map(|x| x * self.focus).collect();
        let mut out = Vec::with_capacity(len);
        let mut weights = vec![0.0; self.latents.len()];
        for _ in 0..len {
            let mut top = f64::NEG_INFINITY;
            for (w, z) in weights.iter_mut().zip(&self.latents) {
                *w = z.iter().zip(&c).map(|(a, b)| a * b).sum::<f64>();
                top = top.max(*w);
            }
            for w in &mut weights {
                *w = (*w - top).exp();
            }
            let pick = WeightedIndex::new(&weights).expect("finite weights").sample(rng);
            out.push(pick);
            for (x, e) in c.iter_mut().zip(gaussian(self.dim, self.drift, rng)) {
                *x += e;
            }
            let norm = c.iter().map(|x| x * x).sum::<f64>().sqrt();
            for x in &mut c {
                *x *= self.focus / norm;
            }
        }
        out
    }

    fn topic_of(&self, concept: usize) -> usize {
        concept / self.per
    }
}

const SRC_ONSETS: [&str; 20] = [
    "k", "kh", "g", "ch", "j", "T", "D", "t", "d", "n", "p", "b", "m", "y", "r", "l", "v", "sh", "s", "h",
];
const SRC_VOWELS: [&str; 8] = ["a", "aa", "i", "ii", "u", "e", "o", "ai"];
const TGT_ONSETS: [&str; 16] = [
    "b", "c", "d", "f", "g", "l", "m", "n", "p", "r", "s", "t", "v", "z", "br", "st",
];
const TGT_VOWELS: [&str; 6] = ["a", "e", "i", "o", "u", "ou"];

fn word(onsets: &[&str], vowels: &[&str], syllables: usize, rng: &mut ChaCha8Rng) -> String {
    let mut w = String::new();
    for _ in 0..syllables {
        w.push_str(onsets.choose(rng).unwrap());
        w.push_str(vowels.choose(rng).unwrap());
    }
    w
}

fn unique_words(
    n: usize,
    onsets: &[&str],
    vowels: &[&str],
    taken: &mut HashSet<String>,
    rng: &mut ChaCha8Rng,
) -> Vec<String> {
    let mut out = Vec::with_capacity(n);
    while out.len() < n {
        let w = word(onsets, vowels, rng.random_range(2..=3), rng);
        if taken.insert(w.clone()) {
            out.push(w);
        }
    }
    out
}

fn capitalize(s: &str) -> String {
    let mut c = s.chars();
    match c.next() {
        Some(f) => f.to_uppercase().chain(c).collect(),
        None => String::new(),
    }
}

fn rng_for(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

pub fn generate(cfg: &TestbedConfig) -> Testbed {
    let n = cfg.topics * cfg.concepts_per_topic;
    let mut rng = rng_for(cfg.seed, 0);
    let discourse = Discourse::new(cfg, &mut rng);

    let mut src_taken: HashSet<String> = SOURCE_STOPWORDS.iter().map(|s| s.to_string()).collect();
    let mut tgt_taken: HashSet<String> = TARGET_STOPWORDS.iter().map(|s| s.to_string()).collect();
    let source_words = unique_words(n, &SRC_ONSETS, &SRC_VOWELS, &mut src_taken, &mut rng);
    let target_words = unique_words(n, &TGT_ONSETS, &TGT_VOWELS, &mut tgt_taken, &mut rng);

    let corpus = |stream: u64, words: &[String]| -> Vec<Vec<String>> {
        let mut rng = rng_for(cfg.seed, stream);
        let mut out = Vec::new();
        let mut total = 0;
        while total < cfg.tokens_per_side {
            let len = rng.random_range(cfg.min_sentence..=cfg.max_sentence);
            let topic = rng.random_range(0..cfg.topics);
            let s: Vec<String> = discourse
                .walk(topic, len, &mut rng)
                .into_iter()
                .map(|c| words[c].clone())
                .collect();
            total += s.len();
            out.push(s);
        }
        out
    };
    let source_corpus = corpus(1, &source_words);
    let target_corpus = corpus(2, &target_words);

    let pair = |c: usize| (source_words[c].clone(), target_words[c].clone());
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut rng);
    let lexicon: Vec<_> = order[..cfg.training_pairs].iter().map(|&c| pair(c)).collect();
    let heldout: Vec<_> = order[cfg.training_pairs..cfg.training_pairs + cfg.heldout_pairs]
        .iter()
        .map(|&c| pair(c))
        .collect();

    let table = TransliterationTable::default();
    let mut named_entities = Vec::new();
    let mut names_taken = tgt_taken.clone();
    while named_entities.len() < cfg.queries {
        let form = word(&SRC_ONSETS, &SRC_VOWELS, rng.random_range(2..=3), &mut rng);
        if src_taken.contains(&form) {
            continue;
        }
        let Ok(cands) = generate_candidates(&form, &table, 8) else {
            continue;
        };
        let Some(target) = cands.strings.choose(&mut rng) else {
            continue;
        };
        if names_taken.insert(target.to_lowercase()) {
            src_taken.insert(form.clone());
            named_entities.push((form, capitalize(target)));
        }
    }

    // Each query gets its own topic where possible and its own concepts, which
    // never occur in background documents.
    let mut topics = Vec::new();
    let mut reserved = BTreeSet::new();
    for (q, entity) in named_entities.iter().enumerate().take(cfg.queries) {
        let topic = q % cfg.topics;
        let base = topic * cfg.concepts_per_topic;
        let free: Vec<usize> = (base..base + cfg.concepts_per_topic)
            .filter(|c| !reserved.contains(c))
            .collect();
        let concepts: Vec<usize> = free
            .choose_multiple(&mut rng, cfg.concepts_per_query)
            .copied()
            .collect();
        reserved.extend(concepts.iter().copied());
        let named_entity = rng.random_bool(cfg.named_entity_rate).then(|| entity.clone());
        let mut terms: Vec<String> = concepts.iter().map(|&c| source_words[c].clone()).collect();
        if let Some((form, _)) = &named_entity {
            terms.insert(rng.random_range(0..=terms.len()), form.clone());
        }
        terms.insert(
            rng.random_range(1..=terms.len()),
            SOURCE_STOPWORDS.choose(&mut rng).unwrap().to_string(),
        );
        topics.push(Topic {
            id: format!("{}", 101 + q),
            text: terms.join(" "),
            concepts,
            named_entity,
        });
    }

    // The dictionary covers the same fraction of query concepts as of the
    // rest, so its coverage on the topics does not depend on luck.
    let mut covered = Vec::new();
    let (mut asked, mut rest): (Vec<usize>, Vec<usize>) = (0..n).partition(|c| reserved.contains(c));
    for group in [&mut asked, &mut rest] {
        group.shuffle(&mut rng);
        let take = (group.len() as f64 * cfg.dictionary_coverage).round() as usize;
        covered.extend_from_slice(&group[..take]);
    }
    covered.sort_unstable();
    let dictionary: Vec<_> = covered.iter().map(|&c| pair(c)).collect();

    let mut doc_rng = rng_for(cfg.seed, 3);
    let render = |concepts: &[usize], rng: &mut ChaCha8Rng| -> String {
        let mut words: Vec<&str> = Vec::new();
        for &c in concepts {
            if rng.random_bool(0.15) {
                words.push(TARGET_STOPWORDS.choose(rng).unwrap());
            }
            words.push(&target_words[c]);
        }
        words.join(" ")
    };
    let background = |topic: usize, rng: &mut ChaCha8Rng| -> Vec<usize> {
        discourse
            .walk(topic, cfg.doc_len * 2, rng)
            .into_iter()
            .filter(|c| !reserved.contains(c))
            .take(cfg.doc_len)
            .collect()
    };

    let mut documents = Vec::new();
    let mut qrels = Vec::new();
    for t in &topics {
        let relevant = doc_rng.random_range(cfg.min_relevant..=cfg.max_relevant);
        let topic = discourse.topic_of(t.concepts[0]);
        for _ in 0..relevant {
            let mut concepts = background(topic, &mut doc_rng);
            let mut mentioned: Vec<usize> = t
                .concepts
                .iter()
                .copied()
                .filter(|_| doc_rng.random_bool(0.6))
                .collect();
            if mentioned.is_empty() {
                mentioned.push(*t.concepts.choose(&mut doc_rng).unwrap());
            }
            for &c in &mentioned {
                for _ in 0..doc_rng.random_range(1..=3) {
                    let at = doc_rng.random_range(0..=concepts.len());
                    concepts.insert(at, c);
                }
            }
            let mut text = render(&concepts, &mut doc_rng);
            if let Some((_, name)) = &t.named_entity {
                if doc_rng.random_bool(0.8) {
                    text = format!("{name} {text}");
                }
            }
            documents.push((text, Some(t.id.clone())));
        }
    }
    for _ in 0..cfg.background_docs {
        let topic = doc_rng.random_range(0..cfg.topics);
        let concepts = background(topic, &mut doc_rng);
        documents.push((render(&concepts, &mut doc_rng), None));
    }
    documents.shuffle(&mut doc_rng);
    let documents: Vec<Document> = documents
        .into_iter()
        .enumerate()
        .map(|(i, (text, rel))| {
            let id = format!("SYN-{i:05}");
            if let Some(q) = rel {
                qrels.push((q, id.clone(), true));
            }
            Document::new(id, text)
        })
        .collect();
    qrels.sort();

    let external = topics
        .iter()
        .map(|t| {
            let mut words: Vec<String> = t
                .concepts
                .iter()
                .map(|&c| {
                    if doc_rng.random_bool(0.7) {
                        target_words[c].clone()
                    } else {
                        let base = (c / cfg.concepts_per_topic) * cfg.concepts_per_topic;
                        target_words[doc_rng.random_range(base..base + cfg.concepts_per_topic)].clone()
                    }
                })
                .collect();
            if let Some((_, name)) = &t.named_entity {
                words.insert(0, name.clone());
            }
            words.insert(1.min(words.len()), "the".to_string());
            (t.id.clone(), words.join(" "))
        })
        .collect();

    Testbed {
        config: cfg.clone(),
        source_words,
        target_words,
        source_corpus,
        target_corpus,
        lexicon,
        heldout,
        dictionary,
        named_entities,
        documents,
        topics,
        qrels,
        external,
    }
}

fn lines<I, S>(items: I) -> String
where
    I: IntoIterator<Item = S>,
    S: AsRef<str>,
{
    let mut out = String::new();
    for item in items {
        out.push_str(item.as_ref());
        out.push('\n');
    }
    out
}

fn pairs(items: &[(String, String)]) -> String {
    lines(items.iter().map(|(a, b)| format!("{a}\t{b}")))
}

impl Testbed {
    pub fn token_counts(&self) -> (usize, usize) {
        let count = |c: &[Vec<String>]| c.iter().map(Vec::len).sum();
        (count(&self.source_corpus), count(&self.target_corpus))
    }

    /// Writes every input file plus a `pipeline.toml` whose paths are relative
    /// to `dir`.
    pub fn write(&self, dir: &Path) -> io::Result<TestbedFiles> {
        fs::create_dir_all(dir)?;
        let put = |name: &str, body: String| fs::write(dir.join(name), body);
        put(
            "source_corpus.txt",
            lines(self.source_corpus.iter().map(|s| s.join(" "))),
        )?;
        put(
            "target_corpus.txt",
            lines(self.target_corpus.iter().map(|s| s.join(" "))),
        )?;
        put("lexicon.tsv", pairs(&self.lexicon))?;
        put("heldout.tsv", pairs(&self.heldout))?;
        put("dictionary.tsv", pairs(&self.dictionary))?;
        put("source_stopwords.txt", lines(SOURCE_STOPWORDS))?;
        put("target_stopwords.txt", lines(TARGET_STOPWORDS))?;
        put("named_entities.txt", lines(self.named_entities.iter().map(|(_, t)| t)))?;
        put(
            "topics.tsv",
            pairs(
                &self
                    .topics
                    .iter()
                    .map(|t| (t.id.clone(), t.text.clone()))
                    .collect::<Vec<_>>(),
            ),
        )?;
        put(
            "qrels.txt",
            lines(self.qrels.iter().map(|(q, d, r)| format!("{q} 0 {d} {}", u8::from(*r)))),
        )?;
        put("external.tsv", pairs(&self.external))?;
        let mut sgml = String::new();
        for d in &self.documents {
            let _ = write!(
                sgml,
                "<DOC>\n<DOCNO>{}</DOCNO>\n<TEXT>\n{}\n</TEXT>\n</DOC>\n",
                d.id, d.body
            );
        }
        put("documents.sgml", sgml)?;
        put("pipeline.toml", self.pipeline_toml())?;
        Ok(TestbedFiles {
            dir: dir.to_path_buf(),
            config: dir.join("pipeline.toml"),
        })
    }

    fn pipeline_toml(&self) -> String {
        format!(
            r#"seed = {seed}
method = "we"
k = 3
top_n = 1000
out_dir = "out"

[paths]
source_corpus = "source_corpus.txt"
target_corpus = "target_corpus.txt"
lexicon = "lexicon.tsv"
dictionary = "dictionary.tsv"
source_stopwords = "source_stopwords.txt"
target_stopwords = "target_stopwords.txt"
named_entities = "named_entities.txt"
corpus = "documents.sgml"
topics = "topics.tsv"
qrels = "qrels.txt"
external = "external.tsv"

[cbow]
dim = 20
window = 5
epochs = 5
negative = 5
min_count = 5
"#,
            seed = self.config.seed
        )
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small() -> TestbedConfig {
        TestbedConfig {
            topics: 4,
            concepts_per_topic: 10,
            tokens_per_side: 2_000,
            training_pairs: 10,
            heldout_pairs: 5,
            queries: 4,
            background_docs: 20,
            ..TestbedConfig::default()
        }
    }

    #[test]
    fn deterministic_for_a_seed() {
        assert_eq!(generate(&small()), generate(&small()));
        let other = generate(&TestbedConfig { seed: 8, ..small() });
        assert_ne!(other.source_corpus, generate(&small()).source_corpus);
    }

    #[test]
    fn structure() {
        let tb = generate(&small());
        let (s, t) = tb.token_counts();
        assert!(s >= 2_000 && t >= 2_000);
        assert_eq!(tb.lexicon.len(), 10);
        assert_eq!(tb.heldout.len(), 5);
        let train: HashSet<_> = tb.lexicon.iter().collect();
        assert!(tb.heldout.iter().all(|p| !train.contains(p)));
        let ids: HashSet<_> = tb.documents.iter().map(|d| &d.id).collect();
        assert_eq!(ids.len(), tb.documents.len());
        for (q, d, _) in &tb.qrels {
            assert!(ids.contains(d));
            assert!(tb.topics.iter().any(|t| &t.id == q));
        }
        let vocab: HashSet<_> = tb.source_words.iter().collect();
        for (form, _) in &tb.named_entities {
            assert!(!vocab.contains(form));
        }
    }

    #[test]
    fn named_entity_targets_are_candidates() {
        let tb = generate(&small());
        let table = TransliterationTable::default();
        for (form, name) in &tb.named_entities {
            let c = generate_candidates(form, &table, 8).unwrap();
            assert!(c.strings.contains(&name.to_lowercase()), "{form} -> {name}");
        }
    }

    #[test]
    fn writes_files() {
        let dir = tempfile::tempdir().unwrap();
        let files = generate(&small()).write(dir.path()).unwrap();
        assert!(files.config.exists());
        for f in [
            "documents.sgml",
            "topics.tsv",
            "qrels.txt",
            "lexicon.tsv",
            "source_corpus.txt",
        ] {
            assert!(dir.path().join(f).exists(), "{f}");
        }
    }
}
