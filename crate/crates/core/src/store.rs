//! On-disk artifact bundle: a directory of JSON files, two binary embedding
//! models and the image feature CSV, tied together by `manifest.json`.
//!
//! Every file is written to a temporary name and renamed into place. The
//! manifest is removed first and written last, so an interrupted save never
//! leaves a manifest describing files that are not there.

use std::collections::BTreeMap;
use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};

use chrono::{DateTime, Utc};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::corpus::{Account, AccountLabel, AccountRegistry, Corpus, Tweet};
use crate::embeddings::{EmbeddingError, EmbeddingModel};
use crate::entities::{EntityIndex, TweetMentions};
use crate::graph::{BipartiteCommunities, BipartiteGraph, SocialGraph};
use crate::imagesim::{image_features_csv, load_image_features, ImageError, ImageIndex};
use crate::corpus::IngestPolicy;
use crate::lexicon::{FeatureStats, LanguageProfile};

pub const BUNDLE_VERSION: u32 = 1;

pub const MANIFEST: &str = "manifest.json";
pub const ACCOUNTS: &str = "accounts.json";
pub const TWEETS: &str = "tweets.json";
pub const PROFILES: &str = "profiles.json";
pub const ENTITIES: &str = "entities.json";
pub const SOCIAL_GRAPH: &str = "social_graph.json";
pub const BIPARTITE: &str = "bipartite.json";
pub const COMMUNITIES: &str = "communities.json";
pub const EMBEDDINGS_REAL: &str = "embeddings_real.bin";
pub const EMBEDDINGS_SUSPICIOUS: &str = "embeddings_suspicious.bin";
pub const IMAGE_INDEX: &str = "image_index.csv";

/// Artifact files in the order they are produced by the pipeline stages.
pub const ARTIFACT_FILES: [&str; 10] = [
    ACCOUNTS,
    TWEETS,
    PROFILES,
    ENTITIES,
    SOCIAL_GRAPH,
    BIPARTITE,
    COMMUNITIES,
    EMBEDDINGS_REAL,
    EMBEDDINGS_SUSPICIOUS,
    IMAGE_INDEX,
];

#[derive(Debug, Error)]
pub enum StoreError {
    #[error("cannot access {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },
    #[error("{file} is missing from the bundle")]
    MissingFile { file: String },
    #[error("{file} does not match its manifest hash")]
    HashMismatch { file: String },
    #[error("bundle version {found} is not supported (expected {BUNDLE_VERSION})")]
    Version { found: u32 },
    #[error("bundle fingerprint does not match its file hashes")]
    BundleFingerprint,
    #[error("source `{role}` at {path} has changed since the bundle was built")]
    SourceChanged { role: String, path: String },
    #[error("corpus fingerprint mismatch: bundle has {expected}, sources hash to {found}")]
    FingerprintMismatch { expected: String, found: String },
    #[error("cannot parse {file}: {reason}")]
    Parse { file: String, reason: String },
    #[error("{file}: {source}")]
    Embedding {
        file: String,
        #[source]
        source: EmbeddingError,
    },
    #[error("{file}: {source}")]
    Image {
        file: String,
        #[source]
        source: ImageError,
    },
}

pub type Result<T> = std::result::Result<T, StoreError>;

fn io_err(path: &Path) -> impl FnOnce(io::Error) -> StoreError + '_ {
    move |source| StoreError::Io { path: path.to_path_buf(), source }
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

/// Writes `bytes` to `dir/name` through a temporary file and a rename.
pub fn write_atomic(dir: &Path, name: &str, bytes: &[u8]) -> Result<()> {
    fs::create_dir_all(dir).map_err(io_err(dir))?;
    let target = dir.join(name);
    let mut tmp = tempfile::Builder::new()
        .prefix(&format!(".{name}."))
        .tempfile_in(dir)
        .map_err(io_err(dir))?;
    tmp.write_all(bytes).map_err(io_err(tmp.path()))?;
    tmp.as_file().sync_all().map_err(io_err(&target))?;
    tmp.persist(&target).map_err(|e| StoreError::Io { path: target.clone(), source: e.error })?;
    Ok(())
}

fn read_file(dir: &Path, name: &str) -> Result<Vec<u8>> {
    let path = dir.join(name);
    match fs::read(&path) {
        Ok(b) => Ok(b),
        Err(e) if e.kind() == io::ErrorKind::NotFound => Err(StoreError::MissingFile { file: name.to_string() }),
        Err(source) => Err(StoreError::Io { path, source }),
    }
}

fn to_json<T: Serialize>(value: &T) -> Vec<u8> {
    let mut v = serde_json::to_vec_pretty(value).expect("artifact serializes to JSON");
    v.push(b'\n');
    v
}

fn from_json<T: DeserializeOwned>(name: &str, bytes: &[u8]) -> Result<T> {
    serde_json::from_slice(bytes).map_err(|e| StoreError::Parse { file: name.to_string(), reason: e.to_string() })
}

#[derive(Serialize, Deserialize)]
struct TweetsFile {
    warnings: usize,
    tweets: Vec<Tweet>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProfilesFile {
    pub profiles: Vec<LanguageProfile>,
    pub stats: FeatureStats,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EntitiesFile {
    pub index: EntityIndex,
    pub mentions: TweetMentions,
}

/// Everything the service needs, without the manifest.
#[derive(Clone, Debug, PartialEq)]
pub struct BundleData {
    pub registry: AccountRegistry,
    pub corpus: Corpus,
    pub profiles: ProfilesFile,
    pub entities: EntitiesFile,
    pub social: SocialGraph,
    pub bipartite: BipartiteGraph,
    pub communities: BipartiteCommunities,
    pub embeddings_real: EmbeddingModel,
    pub embeddings_suspicious: EmbeddingModel,
    pub images: ImageIndex,
}

pub fn write_ingest(dir: &Path, registry: &AccountRegistry, corpus: &Corpus) -> Result<()> {
    write_atomic(dir, ACCOUNTS, &to_json(&registry.accounts()))?;
    let tweets = TweetsFile { warnings: corpus.warnings(), tweets: corpus.tweets().to_vec() };
    write_atomic(dir, TWEETS, &to_json(&tweets))
}

pub fn read_ingest(dir: &Path) -> Result<(AccountRegistry, Corpus)> {
    let accounts: Vec<Account> = from_json(ACCOUNTS, &read_file(dir, ACCOUNTS)?)?;
    let registry = AccountRegistry::from_accounts(accounts)
        .map_err(|reason| StoreError::Parse { file: ACCOUNTS.to_string(), reason })?;
    let tweets: TweetsFile = from_json(TWEETS, &read_file(dir, TWEETS)?)?;
    Ok((registry, Corpus::from_tweets(tweets.tweets).with_warnings(tweets.warnings)))
}

pub fn write_analysis(
    dir: &Path,
    profiles: &ProfilesFile,
    entities: &EntitiesFile,
    social: &SocialGraph,
    bipartite: &BipartiteGraph,
    communities: &BipartiteCommunities,
) -> Result<()> {
    write_atomic(dir, PROFILES, &to_json(profiles))?;
    write_atomic(dir, ENTITIES, &to_json(entities))?;
    write_atomic(dir, SOCIAL_GRAPH, &to_json(social))?;
    write_atomic(dir, BIPARTITE, &to_json(bipartite))?;
    write_atomic(dir, COMMUNITIES, &to_json(communities))
}

pub struct Analysis {
    pub profiles: ProfilesFile,
    pub entities: EntitiesFile,
    pub social: SocialGraph,
    pub bipartite: BipartiteGraph,
    pub communities: BipartiteCommunities,
}

pub fn read_analysis(dir: &Path) -> Result<Analysis> {
    let read = |name: &str| read_file(dir, name);
    Ok(Analysis {
        profiles: from_json(PROFILES, &read(PROFILES)?)?,
        entities: from_json(ENTITIES, &read(ENTITIES)?)?,
        social: from_json(SOCIAL_GRAPH, &read(SOCIAL_GRAPH)?)?,
        bipartite: from_json(BIPARTITE, &read(BIPARTITE)?)?,
        communities: from_json(COMMUNITIES, &read(COMMUNITIES)?)?,
    })
}

fn embedding_file(label: AccountLabel) -> &'static str {
    match label {
        AccountLabel::Real => EMBEDDINGS_REAL,
        AccountLabel::Suspicious => EMBEDDINGS_SUSPICIOUS,
    }
}

pub fn write_embedding(dir: &Path, model: &EmbeddingModel) -> Result<()> {
    write_atomic(dir, embedding_file(model.partition()), &model.to_bytes())
}

pub fn read_embedding(dir: &Path, label: AccountLabel) -> Result<EmbeddingModel> {
    let name = embedding_file(label);
    let bytes = read_file(dir, name)?;
    let model = EmbeddingModel::read_from(&mut bytes.as_slice())
        .map_err(|source| StoreError::Embedding { file: name.to_string(), source })?;
    if model.partition() != label {
        return Err(StoreError::Parse {
            file: name.to_string(),
            reason: format!("holds the {} partition", model.partition()),
        });
    }
    Ok(model)
}

pub fn write_images(dir: &Path, images: &ImageIndex) -> Result<()> {
    write_atomic(dir, IMAGE_INDEX, &image_features_csv(images))
}

pub fn read_images(dir: &Path, registry: &AccountRegistry) -> Result<ImageIndex> {
    read_file(dir, IMAGE_INDEX)?;
    load_image_features(&dir.join(IMAGE_INDEX), registry, IngestPolicy::Strict)
        .map_err(|source| StoreError::Image { file: IMAGE_INDEX.to_string(), source })
}

/// An input file the bundle was derived from.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SourceFile {
    pub role: String,
    pub path: PathBuf,
    pub sha256: String,
}

impl SourceFile {
    pub fn hash(role: &str, path: &Path) -> Result<SourceFile> {
        let bytes = fs::read(path).map_err(io_err(path))?;
        Ok(SourceFile { role: role.to_string(), path: path.to_path_buf(), sha256: sha256_hex(&bytes) })
    }
}

/// Hash over the roles and content hashes of the sources, independent of
/// where the files live.
pub fn corpus_fingerprint(sources: &[SourceFile]) -> String {
    let mut lines: Vec<String> = sources.iter().map(|s| format!("{}\0{}\n", s.role, s.sha256)).collect();
    lines.sort();
    sha256_hex(lines.concat().as_bytes())
}

fn bundle_fingerprint(corpus_fingerprint: &str, files: &BTreeMap<String, String>) -> String {
    let mut body = format!("{BUNDLE_VERSION}\n{corpus_fingerprint}\n");
    for (name, hash) in files {
        body.push_str(&format!("{name}\0{hash}\n"));
    }
    sha256_hex(body.as_bytes())
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct BundleCounts {
    pub accounts: usize,
    pub real_accounts: usize,
    pub suspicious_accounts: usize,
    pub tweets: usize,
    pub tweet_warnings: usize,
    pub entities: usize,
    pub communities: usize,
    pub modularity: f64,
    pub vocabulary_real: usize,
    pub vocabulary_suspicious: usize,
    pub images: usize,
    pub image_warnings: usize,
}

impl BundleCounts {
    pub fn of(data: &BundleData) -> Self {
        BundleCounts {
            accounts: data.registry.len(),
            real_accounts: data.registry.count_label(AccountLabel::Real),
            suspicious_accounts: data.registry.count_label(AccountLabel::Suspicious),
            tweets: data.corpus.len(),
            tweet_warnings: data.corpus.warnings(),
            entities: data.bipartite.entities.len(),
            communities: data.communities.community_count,
            modularity: data.communities.modularity,
            vocabulary_real: data.embeddings_real.vocab().len(),
            vocabulary_suspicious: data.embeddings_suspicious.vocab().len(),
            images: data.images.len(),
            image_warnings: data.images.warnings(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub version: u32,
    pub created_at: DateTime<Utc>,
    pub corpus_fingerprint: String,
    pub bundle_fingerprint: String,
    pub sources: Vec<SourceFile>,
    /// Settings the bundle was built with, echoed verbatim.
    pub config: serde_json::Value,
    pub counts: BundleCounts,
    /// sha256 of every artifact file.
    pub files: BTreeMap<String, String>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ArtifactBundle {
    pub manifest: Manifest,
    pub data: BundleData,
}

/// Where the bundle came from: hashed input files plus the config echo.
#[derive(Clone, Debug)]
pub struct Provenance {
    pub sources: Vec<SourceFile>,
    pub config: serde_json::Value,
}

/// Hashes the artifact files already in `dir` and writes the manifest.
pub fn finalize_bundle(dir: &Path, provenance: &Provenance, counts: BundleCounts, created_at: DateTime<Utc>) -> Result<Manifest> {
    let mut files = BTreeMap::new();
    for name in ARTIFACT_FILES {
        files.insert(name.to_string(), sha256_hex(&read_file(dir, name)?));
    }
    let corpus_fingerprint = corpus_fingerprint(&provenance.sources);
    let manifest = Manifest {
        version: BUNDLE_VERSION,
        created_at,
        bundle_fingerprint: bundle_fingerprint(&corpus_fingerprint, &files),
        corpus_fingerprint,
        sources: provenance.sources.clone(),
        config: provenance.config.clone(),
        counts,
        files,
    };
    write_atomic(dir, MANIFEST, &to_json(&manifest))?;
    Ok(manifest)
}

pub fn remove_manifest(dir: &Path) -> Result<()> {
    let path = dir.join(MANIFEST);
    match fs::remove_file(&path) {
        Err(e) if e.kind() != io::ErrorKind::NotFound => Err(StoreError::Io { path, source: e }),
        _ => Ok(()),
    }
}

pub fn save_bundle(data: &BundleData, provenance: &Provenance, dir: &Path, created_at: DateTime<Utc>) -> Result<Manifest> {
    remove_manifest(dir)?;
    write_ingest(dir, &data.registry, &data.corpus)?;
    write_analysis(dir, &data.profiles, &data.entities, &data.social, &data.bipartite, &data.communities)?;
    write_embedding(dir, &data.embeddings_real)?;
    write_embedding(dir, &data.embeddings_suspicious)?;
    write_images(dir, &data.images)?;
    finalize_bundle(dir, provenance, BundleCounts::of(data), created_at)
}

pub fn read_manifest(dir: &Path) -> Result<Manifest> {
    let bytes = read_file(dir, MANIFEST)?;
    let raw: serde_json::Value = from_json(MANIFEST, &bytes)?;
    let version = raw.get("version").and_then(|v| v.as_u64()).unwrap_or(0) as u32;
    if version != BUNDLE_VERSION {
        return Err(StoreError::Version { found: version });
    }
    from_json(MANIFEST, &bytes)
}

/// Loads and validates a bundle: version, every file hash and the bundle
/// fingerprint are checked before anything is parsed.
pub fn load_bundle(dir: &Path) -> Result<ArtifactBundle> {
    let manifest = read_manifest(dir)?;
    for name in ARTIFACT_FILES {
        let expected = manifest
            .files
            .get(name)
            .ok_or_else(|| StoreError::MissingFile { file: name.to_string() })?;
        if sha256_hex(&read_file(dir, name)?) != *expected {
            return Err(StoreError::HashMismatch { file: name.to_string() });
        }
    }
    if bundle_fingerprint(&manifest.corpus_fingerprint, &manifest.files) != manifest.bundle_fingerprint {
        return Err(StoreError::BundleFingerprint);
    }
    if corpus_fingerprint(&manifest.sources) != manifest.corpus_fingerprint {
        return Err(StoreError::FingerprintMismatch {
            expected: manifest.corpus_fingerprint.clone(),
            found: corpus_fingerprint(&manifest.sources),
        });
    }

    let (registry, corpus) = read_ingest(dir)?;
    let analysis = read_analysis(dir)?;
    let images = read_images(dir, &registry)?.with_warnings(manifest.counts.image_warnings);
    let data = BundleData {
        embeddings_real: read_embedding(dir, AccountLabel::Real)?,
        embeddings_suspicious: read_embedding(dir, AccountLabel::Suspicious)?,
        registry,
        corpus,
        profiles: analysis.profiles,
        entities: analysis.entities,
        social: analysis.social,
        bipartite: analysis.bipartite,
        communities: analysis.communities,
        images,
    };
    Ok(ArtifactBundle { manifest, data })
}

/// Re-hashes the recorded source files and checks them against the
/// manifest's corpus fingerprint.
pub fn verify_sources(manifest: &Manifest) -> Result<()> {
    let mut current = Vec::with_capacity(manifest.sources.len());
    for s in &manifest.sources {
        let fresh = SourceFile::hash(&s.role, &s.path)?;
        if fresh.sha256 != s.sha256 {
            return Err(StoreError::SourceChanged { role: s.role.clone(), path: s.path.display().to_string() });
        }
        current.push(fresh);
    }
    let found = corpus_fingerprint(&current);
    if found != manifest.corpus_fingerprint {
        return Err(StoreError::FingerprintMismatch { expected: manifest.corpus_fingerprint.clone(), found });
    }
    Ok(())
}
