//! Pipeline configuration and the stages that turn source files into a
//! bundle: ingest, analyze, embed, index-images, bundle.

use std::collections::BTreeMap;
use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};

use chrono::{SubsecRound, Utc};
use rayon::prelude::*;
use serde_json::json;
use thiserror::Error;

use crate::corpus::{load_accounts, load_tweets, tokenize, AccountLabel, AccountRegistry, Corpus, IngestPolicy};
use crate::embeddings::{train_skipgram, EmbeddingModel, TrainingConfig};
use crate::entities::{index_corpus, join_entities, load_blocklist, load_gazetteer, TweetMentions};
use crate::graph::{build_bipartite, build_social_graph, detect_bipartite_communities, BipartiteCommunities, DetectionConfig};
use crate::imagesim::{load_image_features, ImageIndex};
use crate::lexicon::{feature_stats, load_lexicons, scale_and_rank, score_all, Feature, PerFeature};
use crate::store::{self, Analysis, BundleCounts, BundleData, EntitiesFile, Manifest, ProfilesFile, Provenance, SourceFile};

/// Keys a config file may set. Path keys are resolved against the config
/// file's directory.
pub const PATH_KEYS: [&str; 8] = ["accounts", "tweets", "lexicons", "gazetteer", "blocklist", "images", "image_dir", "out"];
pub const VALUE_KEYS: [&str; 10] = [
    "seed",
    "strict",
    "threads",
    "resolution",
    "dimension",
    "window",
    "negatives",
    "epochs",
    "learning_rate",
    "min_count",
];

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read config {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("config line {line}: expected `key = value`")]
    Syntax { line: usize },
    #[error("config line {line}: unknown key `{key}`")]
    UnknownKey { line: usize, key: String },
    #[error("config is missing required key `{0}`")]
    MissingKey(String),
    #[error("config key `{key}`: cannot use `{value}`: {reason}")]
    InvalidValue { key: String, value: String, reason: String },
}

fn known(key: &str) -> bool {
    PATH_KEYS.contains(&key) || VALUE_KEYS.contains(&key)
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct PipelineConfig {
    values: BTreeMap<String, String>,
}

impl PipelineConfig {
    /// Parses `key = value` lines (`#` starts a comment line). Later lines
    /// win over earlier ones; `overrides` win over the file.
    pub fn parse(text: &str, base: &Path, overrides: &[(String, String)]) -> std::result::Result<Self, ConfigError> {
        let mut values = BTreeMap::new();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or(ConfigError::Syntax { line: i + 1 })?;
            let (key, value) = (key.trim(), value.trim());
            if key.is_empty() {
                return Err(ConfigError::Syntax { line: i + 1 });
            }
            if !known(key) {
                return Err(ConfigError::UnknownKey { line: i + 1, key: key.to_string() });
            }
            let value = if PATH_KEYS.contains(&key) && Path::new(value).is_relative() {
                base.join(value).to_string_lossy().into_owned()
            } else {
                value.to_string()
            };
            values.insert(key.to_string(), value);
        }
        let mut cfg = PipelineConfig { values };
        cfg.apply(overrides)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path, overrides: &[(String, String)]) -> std::result::Result<Self, ConfigError> {
        let text = fs::read_to_string(path).map_err(|source| ConfigError::Io { path: path.to_path_buf(), source })?;
        let base = path.parent().unwrap_or(Path::new("."));
        Self::parse(&text, base, overrides)
    }

    /// Config built from flags alone.
    pub fn from_overrides(overrides: &[(String, String)]) -> std::result::Result<Self, ConfigError> {
        Self::parse("", Path::new("."), overrides)
    }

    fn apply(&mut self, overrides: &[(String, String)]) -> std::result::Result<(), ConfigError> {
        for (key, value) in overrides {
            if !known(key) {
                return Err(ConfigError::UnknownKey { line: 0, key: key.clone() });
            }
            self.values.insert(key.clone(), value.clone());
        }
        Ok(())
    }

    fn validate(&self) -> std::result::Result<(), ConfigError> {
        self.seed()?;
        self.strict()?;
        self.threads()?;
        self.resolution()?;
        self.training()?;
        Ok(())
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.values.get(key).map(String::as_str)
    }

    pub fn path(&self, key: &str) -> std::result::Result<PathBuf, ConfigError> {
        self.optional_path(key).ok_or_else(|| ConfigError::MissingKey(key.to_string()))
    }

    pub fn optional_path(&self, key: &str) -> Option<PathBuf> {
        self.get(key).map(PathBuf::from)
    }

    fn parsed<T: std::str::FromStr>(&self, key: &str, default: T) -> std::result::Result<T, ConfigError>
    where
        T::Err: fmt::Display,
    {
        match self.get(key) {
            None => Ok(default),
            Some(v) => v.parse().map_err(|e: T::Err| ConfigError::InvalidValue {
                key: key.to_string(),
                value: v.to_string(),
                reason: e.to_string(),
            }),
        }
    }

    pub fn seed(&self) -> std::result::Result<u64, ConfigError> {
        self.parsed("seed", 0)
    }

    pub fn strict(&self) -> std::result::Result<bool, ConfigError> {
        self.parsed("strict", false)
    }

    pub fn policy(&self) -> std::result::Result<IngestPolicy, ConfigError> {
        Ok(IngestPolicy::from_strict(self.strict()?))
    }

    pub fn threads(&self) -> std::result::Result<Option<usize>, ConfigError> {
        match self.get("threads") {
            None => Ok(None),
            Some(_) => match self.parsed("threads", 0usize)? {
                0 => Err(ConfigError::InvalidValue {
                    key: "threads".into(),
                    value: "0".into(),
                    reason: "must be at least 1".into(),
                }),
                n => Ok(Some(n)),
            },
        }
    }

    pub fn resolution(&self) -> std::result::Result<f64, ConfigError> {
        let r: f64 = self.parsed("resolution", 1.0)?;
        if !(r.is_finite() && r > 0.0) {
            return Err(ConfigError::InvalidValue {
                key: "resolution".into(),
                value: r.to_string(),
                reason: "must be positive".into(),
            });
        }
        Ok(r)
    }

    pub fn training(&self) -> std::result::Result<TrainingConfig, ConfigError> {
        let d = TrainingConfig::default();
        let cfg = TrainingConfig {
            dimension: self.parsed("dimension", d.dimension)?,
            window: self.parsed("window", d.window)?,
            negatives: self.parsed("negatives", d.negatives)?,
            epochs: self.parsed("epochs", d.epochs)?,
            learning_rate: self.parsed("learning_rate", d.learning_rate)?,
            seed: self.seed()?,
            min_count: self.parsed("min_count", d.min_count)?,
        };
        cfg.validate().map_err(|e| ConfigError::InvalidValue {
            key: "embedding".into(),
            value: format!("{cfg:?}"),
            reason: e.to_string(),
        })?;
        Ok(cfg)
    }

    pub fn detection(&self) -> std::result::Result<DetectionConfig, ConfigError> {
        Ok(DetectionConfig { resolution: self.resolution()?, seed: self.seed()?, ..Default::default() })
    }

    /// Settings echoed into the manifest (paths are recorded as sources).
    pub fn echo(&self) -> std::result::Result<serde_json::Value, ConfigError> {
        Ok(json!({
            "seed": self.seed()?,
            "strict": self.strict()?,
            "resolution": self.resolution()?,
            "embedding": self.training()?,
        }))
    }

    /// Every input file the bundle depends on, hashed.
    pub fn sources(&self) -> Result<Vec<SourceFile>> {
        let stage = Stage::Bundle;
        let mut out = Vec::new();
        for role in ["accounts", "tweets", "gazetteer", "images"] {
            let path = self.path(role).map_err(|e| stage.err(e))?;
            out.push(SourceFile::hash(role, &path).map_err(|e| stage.err(e))?);
        }
        if let Some(path) = self.optional_path("blocklist") {
            out.push(SourceFile::hash("blocklist", &path).map_err(|e| stage.err(e))?);
        }
        let dir = self.path("lexicons").map_err(|e| stage.err(e))?;
        for f in Feature::ALL {
            let role = format!("lexicon:{f}");
            out.push(SourceFile::hash(&role, &dir.join(format!("{f}.txt"))).map_err(|e| stage.err(e))?);
        }
        Ok(out)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Stage {
    Config,
    Ingest,
    Analyze,
    Embed,
    IndexImages,
    Bundle,
}

impl Stage {
    pub fn as_str(self) -> &'static str {
        match self {
            Stage::Config => "config",
            Stage::Ingest => "ingest",
            Stage::Analyze => "analyze",
            Stage::Embed => "embed",
            Stage::IndexImages => "index-images",
            Stage::Bundle => "bundle",
        }
    }

    pub fn err(self, e: impl std::error::Error + Send + Sync + 'static) -> PipelineError {
        PipelineError { stage: self, source: Box::new(e) }
    }
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Error)]
#[error("{stage} stage failed: {source}")]
pub struct PipelineError {
    pub stage: Stage,
    #[source]
    pub source: Box<dyn std::error::Error + Send + Sync>,
}

pub type Result<T> = std::result::Result<T, PipelineError>;

pub fn ingest(cfg: &PipelineConfig) -> Result<(AccountRegistry, Corpus)> {
    let s = Stage::Ingest;
    let registry = load_accounts(&cfg.path("accounts").map_err(|e| s.err(e))?).map_err(|e| s.err(e))?;
    let policy = cfg.policy().map_err(|e| s.err(e))?;
    let corpus = load_tweets(&cfg.path("tweets").map_err(|e| s.err(e))?, &registry, policy).map_err(|e| s.err(e))?;
    tracing::info!(accounts = registry.len(), tweets = corpus.len(), skipped = corpus.warnings(), "ingested corpus");
    Ok((registry, corpus))
}

/// Language profiles, entity index, social and bipartite graphs, communities.
pub fn analyze(cfg: &PipelineConfig, registry: &AccountRegistry, corpus: &Corpus) -> Result<Analysis> {
    let s = Stage::Analyze;
    let lexicons = load_lexicons(&cfg.path("lexicons").map_err(|e| s.err(e))?).map_err(|e| s.err(e))?;
    let mut gazetteer = load_gazetteer(&cfg.path("gazetteer").map_err(|e| s.err(e))?).map_err(|e| s.err(e))?;
    if let Some(path) = cfg.optional_path("blocklist") {
        gazetteer = gazetteer.without(&load_blocklist(&path).map_err(|e| s.err(e))?);
    }

    let mut tokens_by_account: BTreeMap<&str, Vec<String>> =
        registry.accounts().iter().map(|a| (a.id.as_str(), Vec::new())).collect();
    for t in corpus.tweets() {
        if let Some(v) = tokens_by_account.get_mut(t.account_id.as_str()) {
            v.extend(tokenize(&t.text));
        }
    }
    let raw: Vec<(String, PerFeature<f64>)> = tokens_by_account
        .par_iter()
        .map(|(id, tokens)| (id.to_string(), score_all(tokens, &lexicons)))
        .collect();
    let profiles = scale_and_rank(&raw);
    let stats = feature_stats(&profiles);

    let (index, mentions) = index_corpus(corpus, &gazetteer);
    let social = build_social_graph(corpus, registry);
    let bipartite = build_bipartite(&index);
    let communities = if bipartite.edges.is_empty() {
        tracing::warn!("no entity mentions; community detection skipped");
        BipartiteCommunities::default()
    } else {
        detect_bipartite_communities(&bipartite, &cfg.detection().map_err(|e| s.err(e))?).map_err(|e| s.err(e))?
    };
    tracing::info!(
        entities = bipartite.entities.len(),
        communities = communities.community_count,
        modularity = communities.modularity,
        "analysis done"
    );
    Ok(Analysis {
        profiles: ProfilesFile { profiles, stats },
        entities: EntitiesFile { index, mentions },
        social,
        bipartite,
        communities,
    })
}

/// Tweet token streams per partition, with entity phrases joined into
/// single tokens.
pub fn partition_sentences(
    registry: &AccountRegistry,
    corpus: &Corpus,
    mentions: &TweetMentions,
    label: AccountLabel,
) -> Vec<Vec<String>> {
    let empty = Vec::new();
    corpus
        .tweets()
        .iter()
        .filter(|t| registry.label_of(&t.account_id) == Some(label))
        .map(|t| join_entities(&tokenize(&t.text), mentions.get(&t.id).unwrap_or(&empty)))
        .collect()
}

pub struct Embeddings {
    pub real: EmbeddingModel,
    pub suspicious: EmbeddingModel,
    pub epoch_losses_real: Vec<f64>,
    pub epoch_losses_suspicious: Vec<f64>,
}

/// Trains both partition models. Each model is trained single-threaded; the
/// two run side by side.
pub fn embed(cfg: &PipelineConfig, registry: &AccountRegistry, corpus: &Corpus, mentions: &TweetMentions) -> Result<Embeddings> {
    let s = Stage::Embed;
    let training = cfg.training().map_err(|e| s.err(e))?;
    let train = |label| {
        let sentences = partition_sentences(registry, corpus, mentions, label);
        train_skipgram(label, &sentences, &training).map_err(|e| s.err(e))
    };
    let (real, suspicious) = rayon::join(|| train(AccountLabel::Real), || train(AccountLabel::Suspicious));
    let (real, suspicious) = (real?, suspicious?);
    tracing::info!(
        real = real.model.vocab().len(),
        suspicious = suspicious.model.vocab().len(),
        "trained embeddings"
    );
    Ok(Embeddings {
        real: real.model,
        suspicious: suspicious.model,
        epoch_losses_real: real.epoch_losses,
        epoch_losses_suspicious: suspicious.epoch_losses,
    })
}

pub fn index_images(cfg: &PipelineConfig, registry: &AccountRegistry) -> Result<ImageIndex> {
    let s = Stage::IndexImages;
    let path = cfg.path("images").map_err(|e| s.err(e))?;
    let index = load_image_features(&path, registry, cfg.policy().map_err(|e| s.err(e))?).map_err(|e| s.err(e))?;
    tracing::info!(images = index.len(), skipped = index.warnings(), "indexed images");
    Ok(index)
}

pub fn provenance(cfg: &PipelineConfig) -> Result<Provenance> {
    Ok(Provenance {
        sources: cfg.sources()?,
        config: cfg.echo().map_err(|e| Stage::Bundle.err(e))?,
    })
}

/// Counts reported after a run.
#[derive(Clone, Debug, PartialEq)]
pub struct RunSummary {
    pub out: PathBuf,
    pub manifest: Manifest,
}

impl fmt::Display for RunSummary {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let c = &self.manifest.counts;
        write!(
            f,
            "bundle {}: accounts {} ({} real, {} suspicious), tweets {} ({} skipped), entities {}, communities {} (Q={:.4}), vocabulary {}/{}, images {} ({} skipped), fingerprint {}",
            self.out.display(),
            c.accounts,
            c.real_accounts,
            c.suspicious_accounts,
            c.tweets,
            c.tweet_warnings,
            c.entities,
            c.communities,
            c.modularity,
            c.vocabulary_real,
            c.vocabulary_suspicious,
            c.images,
            c.image_warnings,
            &self.manifest.bundle_fingerprint[..16],
        )
    }
}

/// Hashes the artifacts already written to the output directory and writes
/// the manifest.
pub fn bundle(cfg: &PipelineConfig) -> Result<RunSummary> {
    let s = Stage::Bundle;
    let out = cfg.path("out").map_err(|e| s.err(e))?;
    let provenance = provenance(cfg)?;
    let (registry, corpus) = store::read_ingest(&out).map_err(|e| s.err(e))?;
    let analysis = store::read_analysis(&out).map_err(|e| s.err(e))?;
    let data = BundleData {
        embeddings_real: store::read_embedding(&out, AccountLabel::Real).map_err(|e| s.err(e))?,
        embeddings_suspicious: store::read_embedding(&out, AccountLabel::Suspicious).map_err(|e| s.err(e))?,
        images: store::read_images(&out, &registry).map_err(|e| s.err(e))?,
        registry,
        corpus,
        profiles: analysis.profiles,
        entities: analysis.entities,
        social: analysis.social,
        bipartite: analysis.bipartite,
        communities: analysis.communities,
    };
    // skipped rows are not in the stored index; recount them from the source
    let mut counts = BundleCounts::of(&data);
    counts.image_warnings = index_images(cfg, &data.registry)?.warnings();
    let manifest = store::finalize_bundle(&out, &provenance, counts, Utc::now().trunc_subsecs(0)).map_err(|e| s.err(e))?;
    Ok(RunSummary { out, manifest })
}

/// All stages in order, writing a complete bundle to the `out` directory.
pub fn run_pipeline(cfg: &PipelineConfig) -> Result<RunSummary> {
    let out = cfg.path("out").map_err(|e| Stage::Config.err(e))?;
    cfg.path("lexicons").map_err(|e| Stage::Config.err(e))?;
    let (registry, corpus) = ingest(cfg)?;
    let analysis = analyze(cfg, &registry, &corpus)?;
    let embeddings = embed(cfg, &registry, &corpus, &analysis.entities.mentions)?;
    let images = index_images(cfg, &registry)?;
    let provenance = provenance(cfg)?;
    let data = BundleData {
        registry,
        corpus,
        profiles: analysis.profiles,
        entities: analysis.entities,
        social: analysis.social,
        bipartite: analysis.bipartite,
        communities: analysis.communities,
        embeddings_real: embeddings.real,
        embeddings_suspicious: embeddings.suspicious,
        images,
    };
    let manifest = store::save_bundle(&data, &provenance, &out, Utc::now().trunc_subsecs(0)).map_err(|e| Stage::Bundle.err(e))?;
    Ok(RunSummary { out, manifest })
}

/// Entry points for running one stage at a time. Each reads what earlier
/// stages left in `out`, writes its own files there and drops the manifest,
/// which `bundle` writes again once every file is present.
pub mod stages {
    use super::*;

    fn out_dir(cfg: &PipelineConfig, stage: Stage) -> Result<PathBuf> {
        let out = cfg.path("out").map_err(|e| stage.err(e))?;
        store::remove_manifest(&out).map_err(|e| stage.err(e))?;
        Ok(out)
    }

    pub fn ingest(cfg: &PipelineConfig) -> Result<(usize, usize)> {
        let out = out_dir(cfg, Stage::Ingest)?;
        let (registry, corpus) = super::ingest(cfg)?;
        store::write_ingest(&out, &registry, &corpus).map_err(|e| Stage::Ingest.err(e))?;
        Ok((registry.len(), corpus.len()))
    }

    pub fn analyze(cfg: &PipelineConfig) -> Result<Analysis> {
        let out = out_dir(cfg, Stage::Analyze)?;
        let (registry, corpus) = store::read_ingest(&out).map_err(|e| Stage::Analyze.err(e))?;
        let a = super::analyze(cfg, &registry, &corpus)?;
        store::write_analysis(&out, &a.profiles, &a.entities, &a.social, &a.bipartite, &a.communities)
            .map_err(|e| Stage::Analyze.err(e))?;
        Ok(a)
    }

    pub fn embed(cfg: &PipelineConfig) -> Result<Embeddings> {
        let s = Stage::Embed;
        let out = out_dir(cfg, s)?;
        let (registry, corpus) = store::read_ingest(&out).map_err(|e| s.err(e))?;
        let analysis = store::read_analysis(&out).map_err(|e| s.err(e))?;
        let e = super::embed(cfg, &registry, &corpus, &analysis.entities.mentions)?;
        store::write_embedding(&out, &e.real).map_err(|e| s.err(e))?;
        store::write_embedding(&out, &e.suspicious).map_err(|e| s.err(e))?;
        Ok(e)
    }

    pub fn index_images(cfg: &PipelineConfig) -> Result<ImageIndex> {
        let s = Stage::IndexImages;
        let out = out_dir(cfg, s)?;
        let (registry, _) = store::read_ingest(&out).map_err(|e| s.err(e))?;
        let images = super::index_images(cfg, &registry)?;
        store::write_images(&out, &images).map_err(|e| s.err(e))?;
        Ok(images)
    }
}
