//! Stage orchestration driven by one TOML configuration.
//!
//! Stages read their inputs from configured paths, falling back to the
//! artifacts an earlier stage left in the output directory. Every command
//! validates its inputs before creating anything and finishes by rewriting
//! `manifest.toml`, which records input and artifact digests, the
//! configuration digest and the seed.

use std::collections::BTreeMap;
use std::fmt;
use std::fs;
use std::io::{self, BufRead, BufReader, Write};
use std::path::{Path, PathBuf};
use std::time::Instant;

use log::{info, warn};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::embedding::{read_embeddings_file, train_cbow, write_embeddings_file, CbowConfig, EmbeddingStore};
use crate::evaluation::{evaluate, Qrels, Report, Run};
use crate::hybrid::{
    combine_external, combine_we_dt, combine_weighted, translate_dictionary, DictionaryTranslations, ExternalBlend,
    ExternalInputs, ExternalTranslations,
};
use crate::projection::{
    build_training_set, learn_projection, training_rmse, ProjectionMatrix, TranslationLexicon, DEFAULT_LAMBDA,
};
use crate::retrieval::{index_corpus, read_corpus, InvertedIndex};
use crate::stopwords::Stoplist;
use crate::translation::{Method, Query, SimAggregation, TranslationError, Translator, WeightGroup, WeightedQuery};
use crate::transliteration::{
    EntityResolver, NamedEntityList, TransliterationTable, Transliterator, Verbatim, DEFAULT_CAP, DEFAULT_THETA,
};

pub const INDEX_FILE: &str = "index.clir";
pub const SOURCE_VECTORS_FILE: &str = "source.vec";
pub const TARGET_VECTORS_FILE: &str = "target.vec";
pub const PROJECTION_FILE: &str = "projection.txt";
pub const QUERIES_FILE: &str = "queries.tsv";
pub const RUN_FILE: &str = "run.txt";
pub const METRICS_FILE: &str = "metrics.txt";
pub const MANIFEST_FILE: &str = "manifest.toml";

const ARTIFACTS: [&str; 7] = [
    INDEX_FILE,
    SOURCE_VECTORS_FILE,
    TARGET_VECTORS_FILE,
    PROJECTION_FILE,
    QUERIES_FILE,
    RUN_FILE,
    METRICS_FILE,
];

#[derive(Debug)]
pub enum PipelineError {
    /// Bad configuration or missing inputs; nothing was written.
    Validation(String),
    /// A stage failed on its input data.
    Data {
        stage: Stage,
        message: String,
    },
    Internal {
        stage: Stage,
        message: String,
    },
}

impl PipelineError {
    pub fn exit_code(&self) -> i32 {
        match self {
            PipelineError::Validation(_) => 1,
            PipelineError::Data { .. } => 2,
            PipelineError::Internal { .. } => 3,
        }
    }
}

impl fmt::Display for PipelineError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            PipelineError::Validation(m) => write!(f, "invalid configuration: {m}"),
            PipelineError::Data { stage, message } => write!(f, "stage {stage} failed: {message}"),
            PipelineError::Internal { stage, message } => write!(f, "stage {stage} internal error: {message}"),
        }
    }
}

impl std::error::Error for PipelineError {}

pub type Result<T> = std::result::Result<T, PipelineError>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum Stage {
    Index,
    TrainProjection,
    Translate,
    Search,
    Evaluate,
}

impl Stage {
    pub const ALL: [Stage; 5] = [
        Stage::Index,
        Stage::TrainProjection,
        Stage::Translate,
        Stage::Search,
        Stage::Evaluate,
    ];
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Stage::Index => "index",
            Stage::TrainProjection => "train-projection",
            Stage::Translate => "translate",
            Stage::Search => "search",
            Stage::Evaluate => "evaluate",
        })
    }
}

fn data(stage: Stage) -> impl Fn(&dyn fmt::Display) -> PipelineError {
    move |e| PipelineError::Data {
        stage,
        message: e.to_string(),
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Paths {
    pub source_embeddings: Option<PathBuf>,
    pub target_embeddings: Option<PathBuf>,
    pub source_corpus: Option<PathBuf>,
    pub target_corpus: Option<PathBuf>,
    pub lexicon: Option<PathBuf>,
    pub dictionary: Option<PathBuf>,
    pub source_stopwords: Option<PathBuf>,
    pub target_stopwords: Option<PathBuf>,
    pub named_entities: Option<PathBuf>,
    pub transliteration_table: Option<PathBuf>,
    pub corpus: Option<PathBuf>,
    pub topics: Option<PathBuf>,
    pub qrels: Option<PathBuf>,
    pub external: Option<PathBuf>,
    /// Prebuilt artifacts; default to the output directory.
    pub index: Option<PathBuf>,
    pub projection: Option<PathBuf>,
    pub queries: Option<PathBuf>,
    pub run: Option<PathBuf>,
}

impl Paths {
    fn entries(&self) -> [(&'static str, &Option<PathBuf>); 18] {
        [
            ("source_embeddings", &self.source_embeddings),
            ("target_embeddings", &self.target_embeddings),
            ("source_corpus", &self.source_corpus),
            ("target_corpus", &self.target_corpus),
            ("lexicon", &self.lexicon),
            ("dictionary", &self.dictionary),
            ("source_stopwords", &self.source_stopwords),
            ("target_stopwords", &self.target_stopwords),
            ("named_entities", &self.named_entities),
            ("transliteration_table", &self.transliteration_table),
            ("corpus", &self.corpus),
            ("topics", &self.topics),
            ("qrels", &self.qrels),
            ("external", &self.external),
            ("index", &self.index),
            ("projection", &self.projection),
            ("queries", &self.queries),
            ("run", &self.run),
        ]
    }

    fn entries_mut(&mut self) -> [&mut Option<PathBuf>; 18] {
        [
            &mut self.source_embeddings,
            &mut self.target_embeddings,
            &mut self.source_corpus,
            &mut self.target_corpus,
            &mut self.lexicon,
            &mut self.dictionary,
            &mut self.source_stopwords,
            &mut self.target_stopwords,
            &mut self.named_entities,
            &mut self.transliteration_table,
            &mut self.corpus,
            &mut self.topics,
            &mut self.qrels,
            &mut self.external,
            &mut self.index,
            &mut self.projection,
            &mut self.queries,
            &mut self.run,
        ]
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TransliterationSettings {
    pub cap: usize,
    pub theta: f64,
}

impl Default for TransliterationSettings {
    fn default() -> Self {
        TransliterationSettings {
            cap: DEFAULT_CAP,
            theta: DEFAULT_THETA,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    pub seed: u64,
    pub method: Method,
    pub k: usize,
    pub top_n: usize,
    pub lambda: f64,
    /// Length-normalise vectors before fitting the projection.
    pub normalize: bool,
    /// Dictionary mass for the weighted dictionary/embedding blend.
    pub dict_weight: f64,
    /// Lowercase target-language words when loading or training vectors.
    pub target_case_fold: bool,
    pub run_tag: String,
    pub out_dir: PathBuf,
    pub paths: Paths,
    pub cbow: CbowConfig,
    pub transliteration: TransliterationSettings,
    pub external: ExternalBlend,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            seed: 1,
            method: Method::We,
            k: 5,
            top_n: 1000,
            lambda: DEFAULT_LAMBDA,
            normalize: false,
            dict_weight: crate::hybrid::DEFAULT_DICT_WEIGHT,
            target_case_fold: true,
            run_tag: "clir".into(),
            out_dir: PathBuf::from("out"),
            paths: Paths::default(),
            cbow: CbowConfig::default(),
            transliteration: TransliterationSettings::default(),
            external: ExternalBlend::default(),
        }
    }
}

/// Command-line values that replace configuration fields.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub method: Option<Method>,
    pub k: Option<usize>,
    pub top_n: Option<usize>,
    pub lambda: Option<f64>,
    pub dict_weight: Option<f64>,
    pub out_dir: Option<PathBuf>,
}

impl PipelineConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| PipelineError::Validation(e.to_string()))
    }

    /// Reads a configuration file; relative paths resolve against its directory.
    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path)
            .map_err(|e| PipelineError::Validation(format!("cannot read {}: {e}", path.display())))?;
        let mut cfg = Self::from_toml(&text)?;
        let base = path.parent().unwrap_or(Path::new(""));
        cfg.resolve_relative(base);
        Ok(cfg)
    }

    pub fn resolve_relative(&mut self, base: &Path) {
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        fix(&mut self.out_dir);
        for p in self.paths.entries_mut().into_iter().flatten() {
            fix(p);
        }
    }

    pub fn apply(&mut self, o: &Overrides) {
        if let Some(v) = o.seed {
            self.seed = v;
        }
        if let Some(v) = o.method {
            self.method = v;
        }
        if let Some(v) = o.k {
            self.k = v;
        }
        if let Some(v) = o.top_n {
            self.top_n = v;
        }
        if let Some(v) = o.lambda {
            self.lambda = v;
        }
        if let Some(v) = o.dict_weight {
            self.dict_weight = v;
        }
        if let Some(v) = &o.out_dir {
            self.out_dir = v.clone();
        }
    }

    /// SHA-256 of the canonical TOML rendering, excluding the output directory.
    pub fn digest(&self) -> String {
        let mut c = self.clone();
        c.out_dir = PathBuf::new();
        let text = toml::to_string(&c).expect("configuration serialises");
        hex::encode(Sha256::digest(text.as_bytes()))
    }

    fn artifact(&self, name: &str) -> PathBuf {
        self.out_dir.join(name)
    }

    fn check_parameters(&self) -> Result<()> {
        let bad = |m: String| Err(PipelineError::Validation(m));
        if self.k == 0 {
            return bad("k must be at least 1".into());
        }
        if self.top_n == 0 {
            return bad("top_n must be at least 1".into());
        }
        if !(self.lambda >= 0.0 && self.lambda.is_finite()) {
            return bad(format!("lambda must be finite and non-negative, got {}", self.lambda));
        }
        if !(0.0..=1.0).contains(&self.dict_weight) {
            return bad(format!("dict_weight must lie in [0, 1], got {}", self.dict_weight));
        }
        if self.transliteration.cap == 0 {
            return bad("transliteration.cap must be at least 1".into());
        }
        if self.transliteration.theta.is_nan() || self.transliteration.theta < 0.0 {
            return bad("transliteration.theta must be non-negative".into());
        }
        self.external
            .validate()
            .map_err(|e| PipelineError::Validation(e.to_string()))?;
        self.cbow
            .validate()
            .map_err(|e| PipelineError::Validation(e.to_string()))?;
        for (name, p) in self.paths.entries() {
            if let Some(p) = p {
                if !p.exists() {
                    return bad(format!("paths.{name}: {} does not exist", p.display()));
                }
            }
        }
        Ok(())
    }

    fn require(&self, name: &str, p: &Option<PathBuf>, why: &str) -> Result<()> {
        match p {
            Some(_) => Ok(()),
            None => Err(PipelineError::Validation(format!("paths.{name} is required {why}"))),
        }
    }

    /// A configured path, or an artifact that an earlier stage in `planned`
    /// will produce or already left in the output directory.
    fn require_artifact(
        &self,
        name: &str,
        p: &Option<PathBuf>,
        file: &str,
        by: Stage,
        planned: &[Stage],
    ) -> Result<()> {
        if p.is_some() || planned.contains(&by) || self.artifact(file).exists() {
            Ok(())
        } else {
            Err(PipelineError::Validation(format!(
                "paths.{name} is not set and {} does not exist; run {by} first",
                self.artifact(file).display()
            )))
        }
    }

    fn require_vectors(&self, _planned: &[Stage]) -> Result<()> {
        let p = &self.paths;
        for (side, vecs, corpus, file) in [
            ("source", &p.source_embeddings, &p.source_corpus, SOURCE_VECTORS_FILE),
            ("target", &p.target_embeddings, &p.target_corpus, TARGET_VECTORS_FILE),
        ] {
            let have = vecs.is_some() || corpus.is_some() || self.artifact(file).exists();
            if !have {
                return Err(PipelineError::Validation(format!(
                    "{side} vectors need paths.{side}_embeddings or paths.{side}_corpus"
                )));
            }
        }
        Ok(())
    }

    /// Checks everything the given stages need, before any work starts.
    pub fn validate(&self, stages: &[Stage]) -> Result<()> {
        self.check_parameters()?;
        let p = &self.paths;
        for stage in stages {
            match stage {
                Stage::Index => self.require("corpus", &p.corpus, "to build an index")?,
                Stage::TrainProjection => {
                    self.require_vectors(stages)?;
                    self.require("lexicon", &p.lexicon, "to train a projection")?;
                }
                Stage::Translate => {
                    self.require("topics", &p.topics, "to translate queries")?;
                    if self.method.uses_embeddings() {
                        self.require_vectors(stages)?;
                        self.require_artifact(
                            "projection",
                            &p.projection,
                            PROJECTION_FILE,
                            Stage::TrainProjection,
                            stages,
                        )?;
                    }
                    if self.method.uses_dictionary() {
                        self.require("dictionary", &p.dictionary, &format!("by method {}", self.method))?;
                    }
                    if self.method == Method::ExternalSimvecDt {
                        self.require("external", &p.external, &format!("by method {}", self.method))?;
                    }
                }
                Stage::Search => {
                    self.require_artifact("index", &p.index, INDEX_FILE, Stage::Index, stages)?;
                    self.require_artifact("queries", &p.queries, QUERIES_FILE, Stage::Translate, stages)?;
                }
                Stage::Evaluate => {
                    self.require("qrels", &p.qrels, "to evaluate")?;
                    self.require_artifact("run", &p.run, RUN_FILE, Stage::Search, stages)?;
                }
            }
        }
        Ok(())
    }
}

impl Method {
    pub fn uses_embeddings(self) -> bool {
        self != Method::Dict
    }

    pub fn uses_dictionary(self) -> bool {
        matches!(
            self,
            Method::Dict | Method::WeDt | Method::WeDtWeighted | Method::ExternalSimvecDt
        )
    }
}

/// What a stage or command produced.
#[derive(Debug, Clone, Default)]
pub struct Outcome {
    pub index: Option<IndexSummary>,
    pub projection: Option<ProjectionSummary>,
    pub translated: Option<usize>,
    pub searched: Option<usize>,
    pub report: Option<Report>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct IndexSummary {
    pub documents: usize,
    pub vocabulary: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ProjectionSummary {
    pub pairs: usize,
    pub dropped: usize,
    pub rmse: f64,
}

/// Runs `stages` in order after validating all of them.
pub fn run_stages(cfg: &PipelineConfig, stages: &[Stage]) -> Result<Outcome> {
    cfg.validate(stages)?;
    fs::create_dir_all(&cfg.out_dir)
        .map_err(|e| PipelineError::Validation(format!("cannot create {}: {e}", cfg.out_dir.display())))?;
    let mut outcome = Outcome::default();
    for &stage in stages {
        let started = Instant::now();
        match stage {
            Stage::Index => outcome.index = Some(cmd_index(cfg)?),
            Stage::TrainProjection => outcome.projection = Some(cmd_train_projection(cfg)?),
            Stage::Translate => outcome.translated = Some(cmd_translate(cfg)?),
            Stage::Search => outcome.searched = Some(cmd_search(cfg)?),
            Stage::Evaluate => outcome.report = Some(cmd_evaluate(cfg)?),
        }
        info!("stage {stage} finished in {:.2?}", started.elapsed());
    }
    write_manifest(cfg, stages).map_err(|e| PipelineError::Internal {
        stage: *stages.last().unwrap_or(&Stage::Evaluate),
        message: format!("writing manifest: {e}"),
    })?;
    Ok(outcome)
}

pub fn cmd_pipeline(cfg: &PipelineConfig) -> Result<Outcome> {
    run_stages(cfg, &Stage::ALL)
}

fn stoplist(stage: Stage, p: &Option<PathBuf>) -> Result<Stoplist> {
    match p {
        Some(p) => Stoplist::read_file(p).map_err(|e| data(stage)(&format!("{}: {e}", p.display()))),
        None => Ok(Stoplist::default()),
    }
}

fn cmd_index(cfg: &PipelineConfig) -> Result<IndexSummary> {
    let stage = Stage::Index;
    let corpus = cfg.paths.corpus.as_ref().expect("validated");
    let stop = stoplist(stage, &cfg.paths.target_stopwords)?;
    let docs = read_corpus(corpus).map_err(|e| data(stage)(&e))?;
    let index = index_corpus(docs, &stop).map_err(|e| data(stage)(&e))?;
    index
        .write_file(&cfg.artifact(INDEX_FILE))
        .map_err(|e| data(stage)(&e))?;
    let summary = IndexSummary {
        documents: index.num_docs(),
        vocabulary: index.vocabulary_size(),
    };
    info!("indexed {} documents, {} terms", summary.documents, summary.vocabulary);
    Ok(summary)
}

fn read_sentences(path: &Path) -> io::Result<Vec<Vec<String>>> {
    let reader = BufReader::new(fs::File::open(path)?);
    let mut out = Vec::new();
    for line in reader.lines() {
        let s: Vec<String> = line?.split_whitespace().map(str::to_string).collect();
        if !s.is_empty() {
            out.push(s);
        }
    }
    Ok(out)
}

/// Configured vectors, else vectors cached in the output directory, else
/// vectors trained from the configured corpus and cached.
fn vectors(cfg: &PipelineConfig, stage: Stage, source: bool) -> Result<EmbeddingStore> {
    let (given, corpus, file, fold, stream) = if source {
        (
            &cfg.paths.source_embeddings,
            &cfg.paths.source_corpus,
            SOURCE_VECTORS_FILE,
            false,
            0,
        )
    } else {
        (
            &cfg.paths.target_embeddings,
            &cfg.paths.target_corpus,
            TARGET_VECTORS_FILE,
            cfg.target_case_fold,
            1,
        )
    };
    let err = data(stage);
    if let Some(p) = given {
        return read_embeddings_file(p, fold).map_err(|e| err(&format!("{}: {e}", p.display())));
    }
    let cached = cfg.artifact(file);
    if cached.exists() {
        return read_embeddings_file(&cached, fold).map_err(|e| err(&format!("{}: {e}", cached.display())));
    }
    let corpus = corpus.as_ref().ok_or_else(|| err(&"no vectors or corpus configured"))?;
    let sentences = read_sentences(corpus).map_err(|e| err(&format!("{}: {e}", corpus.display())))?;
    let config = CbowConfig {
        seed: cfg.seed.wrapping_add(stream),
        case_fold: fold,
        ..cfg.cbow.clone()
    };
    let started = Instant::now();
    let store = train_cbow(&sentences, &config).map_err(|e| err(&e))?;
    info!(
        "trained {} vectors for {} words in {:.2?}",
        if source { "source" } else { "target" },
        store.len(),
        started.elapsed()
    );
    write_embeddings_file(&store, &cached).map_err(|e| err(&e))?;
    // Reload so the in-memory store matches what later commands will read.
    read_embeddings_file(&cached, fold).map_err(|e| err(&e))
}

fn cmd_train_projection(cfg: &PipelineConfig) -> Result<ProjectionSummary> {
    let stage = Stage::TrainProjection;
    let err = data(stage);
    let src = vectors(cfg, stage, true)?;
    let tgt = vectors(cfg, stage, false)?;
    let lexicon = TranslationLexicon::read_file(cfg.paths.lexicon.as_ref().expect("validated")).map_err(|e| err(&e))?;
    let set = build_training_set(&lexicon, &src, &tgt, cfg.normalize).map_err(|e| err(&e))?;
    let w = learn_projection(&set.pairs, cfg.lambda).map_err(|e| err(&e))?;
    let rmse = training_rmse(&w, &set.pairs).map_err(|e| err(&e))?;
    w.write_file(&cfg.artifact(PROJECTION_FILE)).map_err(|e| err(&e))?;
    info!(
        "projection fitted on {} pairs ({} dropped), training RMSE {rmse:.6}",
        set.pairs.len(),
        set.dropped
    );
    Ok(ProjectionSummary {
        pairs: set.pairs.len(),
        dropped: set.dropped,
        rmse,
    })
}

/// Reads `qid<TAB>title` lines; ids must be unique.
pub fn read_topics(path: &Path) -> io::Result<Vec<(String, String)>> {
    let text = fs::read_to_string(path)?;
    let mut out: Vec<(String, String)> = Vec::new();
    let mut seen = std::collections::HashSet::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let (qid, title) = line.split_once('\t').ok_or_else(|| {
            io::Error::new(
                io::ErrorKind::InvalidData,
                format!("line {}: expected qid<TAB>title", i + 1),
            )
        })?;
        let qid = qid.trim().to_string();
        if !seen.insert(qid.clone()) {
            return Err(io::Error::new(
                io::ErrorKind::InvalidData,
                format!("line {}: duplicate topic id {qid:?}", i + 1),
            ));
        }
        out.push((qid, title.trim().to_string()));
    }
    Ok(out)
}

/// Translated queries as `qid<TAB>term^weight ...` lines after a header comment.
pub fn write_queries(path: &Path, method: Method, seed: u64, queries: &[(String, WeightedQuery)]) -> io::Result<()> {
    let mut out = io::BufWriter::new(fs::File::create(path)?);
    writeln!(out, "# method={method} seed={seed}")?;
    for (qid, q) in queries {
        writeln!(out, "{qid}\t{}", q.to_exact_string())?;
    }
    out.flush()
}

pub fn read_queries(path: &Path) -> io::Result<Vec<(String, WeightedQuery)>> {
    let text = fs::read_to_string(path)?;
    let mut method = Method::We;
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if let Some(header) = line.strip_prefix('#') {
            if let Some(m) = header.split_whitespace().find_map(|kv| kv.strip_prefix("method=")) {
                method = m.parse().map_err(|e| io::Error::new(io::ErrorKind::InvalidData, e))?;
            }
            continue;
        }
        if line.trim().is_empty() {
            continue;
        }
        let (qid, terms) = line.split_once('\t').unwrap_or((line, ""));
        let q = WeightedQuery::parse(method, terms)
            .map_err(|e| io::Error::new(io::ErrorKind::InvalidData, format!("line {}: {e}", i + 1)))?;
        out.push((qid.trim().to_string(), q));
    }
    Ok(out)
}

fn resolver(cfg: &PipelineConfig, stage: Stage) -> Result<Box<dyn EntityResolver>> {
    let Some(list) = &cfg.paths.named_entities else {
        return Ok(Box::new(Verbatim));
    };
    let err = data(stage);
    let table = match &cfg.paths.transliteration_table {
        Some(p) => TransliterationTable::read_file(p).map_err(|e| err(&e))?,
        None => TransliterationTable::default(),
    };
    let entities = NamedEntityList::read_file(list).map_err(|e| err(&e))?;
    let t = Transliterator::new(table, entities)
        .map_err(|e| PipelineError::Validation(e.to_string()))?
        .with_cap(cfg.transliteration.cap)
        .with_theta(cfg.transliteration.theta);
    Ok(Box::new(t))
}

fn cmd_translate(cfg: &PipelineConfig) -> Result<usize> {
    let stage = Stage::Translate;
    let err = data(stage);
    let topics = read_topics(cfg.paths.topics.as_ref().expect("validated")).map_err(|e| err(&e))?;
    let stop = stoplist(stage, &cfg.paths.source_stopwords)?;
    let resolver = resolver(cfg, stage)?;
    let dict = match &cfg.paths.dictionary {
        Some(p) if cfg.method.uses_dictionary() => DictionaryTranslations::read_file(p).map_err(|e| err(&e))?,
        _ => DictionaryTranslations::default(),
    };
    let external = match &cfg.paths.external {
        Some(p) if cfg.method == Method::ExternalSimvecDt => ExternalTranslations::read_file(p).map_err(|e| err(&e))?,
        _ => ExternalTranslations::default(),
    };
    let target_stop = stoplist(stage, &cfg.paths.target_stopwords)?;

    let mut out = Vec::with_capacity(topics.len());
    if cfg.method == Method::Dict {
        // Source vectors, when available, separate names from missing terms.
        let src = match cfg.require_vectors(&[]) {
            Ok(()) => Some(vectors(cfg, stage, true)?),
            Err(_) => None,
        };
        for (qid, text) in &topics {
            let query = match &src {
                Some(src) => Query::parse(text, &stop, src),
                None => Query::classify(text.split_whitespace().map(str::to_string).collect(), &stop, |_| true),
            };
            out.push((qid.clone(), translate_dictionary(&query, &dict, resolver.as_ref())));
        }
    } else {
        let src = vectors(cfg, stage, true)?;
        let tgt = vectors(cfg, stage, false)?;
        let proj_path = cfg
            .paths
            .projection
            .clone()
            .unwrap_or_else(|| cfg.artifact(PROJECTION_FILE));
        let w = ProjectionMatrix::read_file(&proj_path).map_err(|e| err(&format!("{}: {e}", proj_path.display())))?;
        let tr = Translator::new(&src, &tgt, &w, resolver.as_ref()).map_err(|e| err(&e))?;
        for (qid, text) in &topics {
            let query = Query::parse(text, &stop, &src);
            if query.is_empty() {
                warn!("query {qid}: no terms left after stopword removal");
            }
            let translated = translate_one(cfg, &tr, &query, qid, &dict, &external, &target_stop)
                .map_err(|e| err(&format!("query {qid}: {e}")))?;
            out.push((qid.clone(), translated));
        }
    }
    write_queries(&cfg.artifact(QUERIES_FILE), cfg.method, cfg.seed, &out).map_err(|e| err(&e))?;
    info!("translated {} queries with {}", out.len(), cfg.method);
    Ok(out.len())
}

fn translate_one(
    cfg: &PipelineConfig,
    tr: &Translator<'_>,
    query: &Query,
    qid: &str,
    dict: &DictionaryTranslations,
    external: &ExternalTranslations,
    target_stop: &Stoplist,
) -> std::result::Result<WeightedQuery, Box<dyn std::error::Error>> {
    let k = cfg.k;
    Ok(match cfg.method {
        Method::Dict => translate_dictionary(query, dict, tr.resolver),
        Method::WeDt => combine_we_dt(query, dict, &tr.term_candidates(query, k)?, k, tr.resolver),
        Method::WeDtWeighted => combine_weighted(
            query,
            dict,
            &tr.term_candidates(query, k)?,
            cfg.dict_weight,
            tr.resolver,
        )?,
        Method::ExternalSimvecDt => {
            let sim = tr.sim_vec_translate(query, k, SimAggregation::Max)?;
            let candidates = tr.term_candidates(query, k)?;
            let inputs = ExternalInputs {
                dict,
                candidates: &candidates,
                stoplist: target_stop,
                resolver: tr.resolver,
            };
            let ext = external.get(qid);
            if ext.is_none() {
                warn!("query {qid}: no external translation");
            }
            combine_external(query, ext, &sim, &inputs, &cfg.external)?
        }
        m => match tr.translate(query, k, m) {
            Err(TranslationError::NoInVocabTerms) => {
                warn!("query {qid}: no in-vocabulary terms; names only");
                let groups: Vec<WeightGroup> = query.named().map(|t| tr.named_entity_group(t)).collect();
                WeightedQuery::from_groups(m, groups)
            }
            other => other?,
        },
    })
}

fn cmd_search(cfg: &PipelineConfig) -> Result<usize> {
    let stage = Stage::Search;
    let err = data(stage);
    let index_path = cfg.paths.index.clone().unwrap_or_else(|| cfg.artifact(INDEX_FILE));
    let queries_path = cfg.paths.queries.clone().unwrap_or_else(|| cfg.artifact(QUERIES_FILE));
    let index = InvertedIndex::read_file(&index_path).map_err(|e| err(&format!("{}: {e}", index_path.display())))?;
    let queries = read_queries(&queries_path).map_err(|e| err(&format!("{}: {e}", queries_path.display())))?;
    let mut run = Run::default();
    for (qid, q) in &queries {
        if q.is_empty() {
            warn!("query {qid}: empty translation; no results");
        }
        let hits = index.search(q, cfg.top_n).map_err(|e| err(&e))?;
        run.insert(qid.clone(), Run::from_hits(&hits, &cfg.run_tag))
            .map_err(|e| PipelineError::Internal {
                stage,
                message: e.to_string(),
            })?;
    }
    run.write_file(&cfg.artifact(RUN_FILE)).map_err(|e| err(&e))?;
    Ok(queries.len())
}

fn cmd_evaluate(cfg: &PipelineConfig) -> Result<Report> {
    let stage = Stage::Evaluate;
    let err = data(stage);
    let run_path = cfg.paths.run.clone().unwrap_or_else(|| cfg.artifact(RUN_FILE));
    let run = Run::read_file(&run_path).map_err(|e| err(&format!("{}: {e}", run_path.display())))?;
    let qrels = Qrels::read_file(cfg.paths.qrels.as_ref().expect("validated")).map_err(|e| err(&e))?;
    let report = evaluate(&run, &qrels).map_err(|e| err(&e))?;
    fs::write(cfg.artifact(METRICS_FILE), report.render()).map_err(|e| err(&e))?;
    Ok(report)
}

fn sha256_file(path: &Path) -> io::Result<String> {
    Ok(hex::encode(Sha256::digest(fs::read(path)?)))
}

#[derive(Debug, Serialize, Deserialize, PartialEq)]
pub struct Manifest {
    pub seed: u64,
    pub method: Method,
    pub config_sha256: String,
    pub stages: Vec<String>,
    pub inputs: BTreeMap<String, FileDigest>,
    pub artifacts: BTreeMap<String, String>,
}

#[derive(Debug, Serialize, Deserialize, PartialEq)]
pub struct FileDigest {
    pub path: PathBuf,
    pub sha256: String,
}

fn write_manifest(cfg: &PipelineConfig, stages: &[Stage]) -> io::Result<()> {
    let mut inputs = BTreeMap::new();
    for (name, p) in cfg.paths.entries() {
        if let Some(p) = p {
            if p.is_file() {
                inputs.insert(
                    name.to_string(),
                    FileDigest {
                        path: p.clone(),
                        sha256: sha256_file(p)?,
                    },
                );
            }
        }
    }
    let mut artifacts = BTreeMap::new();
    for name in ARTIFACTS {
        let p = cfg.artifact(name);
        if p.is_file() {
            artifacts.insert(name.to_string(), sha256_file(&p)?);
        }
    }
    let manifest = Manifest {
        seed: cfg.seed,
        method: cfg.method,
        config_sha256: cfg.digest(),
        stages: stages.iter().map(|s| s.to_string()).collect(),
        inputs,
        artifacts,
    };
    let text = toml::to_string(&manifest).map_err(|e| io::Error::other(e.to_string()))?;
    fs::write(cfg.artifact(MANIFEST_FILE), text)
}

pub fn read_manifest(out_dir: &Path) -> io::Result<Manifest> {
    let text = fs::read_to_string(out_dir.join(MANIFEST_FILE))?;
    toml::from_str(&text).map_err(|e| io::Error::new(io::ErrorKind::InvalidData, e.to_string()))
}
