//! Skip-gram word vectors with negative sampling, one model per account
//! partition, and cosine nearest-word queries over the input vectors.

use std::collections::HashMap;
use std::fs;
use std::io::{self, Read, Write};
use std::path::{Path, PathBuf};

use byteorder::{LittleEndian, ReadBytesExt, WriteBytesExt};
use num_traits::Float;
use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::AccountLabel;
use crate::entities::entity_token;

pub const MODEL_MAGIC: &[u8; 4] = b"SLWV";
pub const MODEL_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum EmbeddingError {
    #[error("token stream is empty")]
    EmptyStream,
    #[error("no token occurs at least {min_count} times")]
    EmptyVocabulary { min_count: u64 },
    #[error("invalid training config: {0}")]
    InvalidConfig(String),
    #[error("`{token}` is not in the {partition} vocabulary")]
    OutOfVocabulary { token: String, partition: AccountLabel },
    #[error("`{0}` is in neither partition's vocabulary")]
    MissingFromBoth(String),
    #[error("cannot access model file {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },
    #[error("bad model file: {0}")]
    Format(String),
}

pub type Result<T> = std::result::Result<T, EmbeddingError>;

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Vocabulary {
    tokens: Vec<String>,
    counts: Vec<u64>,
    ids: HashMap<String, usize>,
    min_count: u64,
}

impl Vocabulary {
    fn from_parts(tokens: Vec<String>, counts: Vec<u64>, min_count: u64) -> Self {
        let ids = tokens.iter().enumerate().map(|(i, t)| (t.clone(), i)).collect();
        Vocabulary { tokens, counts, ids, min_count }
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn id(&self, token: &str) -> Option<usize> {
        self.ids.get(token).copied()
    }

    pub fn token(&self, id: usize) -> &str {
        &self.tokens[id]
    }

    pub fn count(&self, id: usize) -> u64 {
        self.counts[id]
    }

    pub fn tokens(&self) -> &[String] {
        &self.tokens
    }

    pub fn min_count(&self) -> u64 {
        self.min_count
    }
}

/// Ids are assigned by descending frequency, then token.
pub fn build_vocab<S: AsRef<[String]>>(sentences: &[S], min_count: u64) -> Result<Vocabulary> {
    let mut freq: HashMap<&str, u64> = HashMap::new();
    for sentence in sentences {
        for token in sentence.as_ref() {
            *freq.entry(token.as_str()).or_default() += 1;
        }
    }
    if freq.is_empty() {
        return Err(EmbeddingError::EmptyStream);
    }
    let mut kept: Vec<(&str, u64)> = freq.into_iter().filter(|&(_, c)| c >= min_count).collect();
    if kept.is_empty() {
        return Err(EmbeddingError::EmptyVocabulary { min_count });
    }
    kept.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(b.0)));
    let (tokens, counts) = kept.into_iter().map(|(t, c)| (t.to_string(), c)).unzip();
    Ok(Vocabulary::from_parts(tokens, counts, min_count))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainingConfig {
    pub dimension: usize,
    pub window: usize,
    pub negatives: usize,
    pub epochs: usize,
    /// Initial rate, decayed linearly towards zero over all epochs.
    pub learning_rate: f64,
    pub seed: u64,
    pub min_count: u64,
}

impl Default for TrainingConfig {
    fn default() -> Self {
        TrainingConfig {
            dimension: 100,
            window: 5,
            negatives: 5,
            epochs: 5,
            learning_rate: 0.025,
            seed: 0,
            min_count: 5,
        }
    }
}

impl TrainingConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: &str| Err(EmbeddingError::InvalidConfig(msg.to_string()));
        if self.dimension < 2 {
            return bad("dimension must be at least 2");
        }
        if self.window < 1 {
            return bad("window must be at least 1");
        }
        if self.negatives < 1 {
            return bad("negatives must be at least 1");
        }
        if self.epochs < 1 {
            return bad("epochs must be at least 1");
        }
        if !self.learning_rate.is_finite() || self.learning_rate < 0.0 {
            return bad("learning rate must be finite and non-negative");
        }
        if self.dimension > u32::MAX as usize || self.window > u32::MAX as usize {
            return bad("dimension or window too large");
        }
        Ok(())
    }
}

/// `ln σ(x)` without overflow for large |x|.
pub fn log_sigmoid<F: Float>(x: F) -> F {
    if x >= F::zero() {
        -(-x).exp().ln_1p()
    } else {
        x - x.exp().ln_1p()
    }
}

pub fn sigmoid<F: Float>(x: F) -> F {
    if x >= F::zero() {
        F::one() / (F::one() + (-x).exp())
    } else {
        let e = x.exp();
        e / (F::one() + e)
    }
}

/// One term of the negative-sampling loss for a center vector `v` and a
/// target output vector `u`: `-ln σ(u·v)` for the observed context,
/// `-ln σ(-u·v)` for a sampled negative.
///
/// Adds d loss/dv into `grad_center` and writes d loss/du into `grad_target`.
pub fn sgns_term<F: Float>(center: &[F], target: &[F], positive: bool, grad_center: &mut [F], grad_target: &mut [F]) -> F {
    let dot = center.iter().zip(target).fold(F::zero(), |acc, (&a, &b)| acc + a * b);
    let label = if positive { F::one() } else { F::zero() };
    let g = sigmoid(dot) - label;
    for i in 0..center.len() {
        grad_center[i] = grad_center[i] + g * target[i];
        grad_target[i] = g * center[i];
    }
    if positive {
        -log_sigmoid(dot)
    } else {
        -log_sigmoid(-dot)
    }
}

/// Full loss of one example: `targets[0]` is the observed context, the rest
/// are negatives. Returns the loss, d/dcenter and d/dtarget for each target.
pub fn sgns_loss_and_gradient<F: Float>(center: &[F], targets: &[&[F]]) -> (F, Vec<F>, Vec<Vec<F>>) {
    let d = center.len();
    let mut grad_center = vec![F::zero(); d];
    let mut grad_targets = Vec::with_capacity(targets.len());
    let mut loss = F::zero();
    for (i, target) in targets.iter().enumerate() {
        let mut g = vec![F::zero(); d];
        loss = loss + sgns_term(center, target, i == 0, &mut grad_center, &mut g);
        grad_targets.push(g);
    }
    (loss, grad_center, grad_targets)
}

#[derive(Clone, Debug, PartialEq)]
pub struct EmbeddingModel {
    partition: AccountLabel,
    config: TrainingConfig,
    vocab: Vocabulary,
    input: Vec<f32>,
    output: Vec<f32>,
    norms: Vec<f64>,
}

#[derive(Clone, Debug)]
pub struct TrainingOutcome {
    pub model: EmbeddingModel,
    /// Mean loss per (center, context) example in each epoch.
    pub epoch_losses: Vec<f64>,
}

impl EmbeddingModel {
    fn new(partition: AccountLabel, config: TrainingConfig, vocab: Vocabulary, input: Vec<f32>, output: Vec<f32>) -> Self {
        let d = config.dimension;
        let norms = input
            .chunks(d)
            .map(|row| row.iter().map(|&x| f64::from(x) * f64::from(x)).sum::<f64>().sqrt())
            .collect();
        EmbeddingModel { partition, config, vocab, input, output, norms }
    }

    pub fn partition(&self) -> AccountLabel {
        self.partition
    }

    pub fn config(&self) -> &TrainingConfig {
        &self.config
    }

    pub fn vocab(&self) -> &Vocabulary {
        &self.vocab
    }

    pub fn dimension(&self) -> usize {
        self.config.dimension
    }

    pub fn input_vector(&self, id: usize) -> &[f32] {
        let d = self.config.dimension;
        &self.input[id * d..(id + 1) * d]
    }

    pub fn output_vector(&self, id: usize) -> &[f32] {
        let d = self.config.dimension;
        &self.output[id * d..(id + 1) * d]
    }

    pub fn vector(&self, token: &str) -> Option<&[f32]> {
        self.vocab.id(token).map(|id| self.input_vector(id))
    }

    fn cosine_ids(&self, a: usize, b: usize) -> f64 {
        let denom = self.norms[a] * self.norms[b];
        if denom == 0.0 {
            return 0.0;
        }
        let dot: f64 = self
            .input_vector(a)
            .iter()
            .zip(self.input_vector(b))
            .map(|(&x, &y)| f64::from(x) * f64::from(y))
            .sum();
        (dot / denom).clamp(-1.0, 1.0)
    }

    pub fn similarity(&self, a: &str, b: &str) -> Option<f64> {
        Some(self.cosine_ids(self.vocab.id(a)?, self.vocab.id(b)?))
    }

    pub fn write_to<W: Write>(&self, w: &mut W) -> io::Result<()> {
        let c = &self.config;
        w.write_all(MODEL_MAGIC)?;
        w.write_u32::<LittleEndian>(MODEL_VERSION)?;
        w.write_u8(match self.partition {
            AccountLabel::Real => 0,
            AccountLabel::Suspicious => 1,
        })?;
        w.write_u32::<LittleEndian>(c.dimension as u32)?;
        w.write_u32::<LittleEndian>(self.vocab.len() as u32)?;
        w.write_u32::<LittleEndian>(c.window as u32)?;
        w.write_u32::<LittleEndian>(c.negatives as u32)?;
        w.write_u32::<LittleEndian>(c.epochs as u32)?;
        w.write_f64::<LittleEndian>(c.learning_rate)?;
        w.write_u64::<LittleEndian>(c.seed)?;
        w.write_u64::<LittleEndian>(c.min_count)?;
        for (token, &count) in self.vocab.tokens.iter().zip(&self.vocab.counts) {
            w.write_u32::<LittleEndian>(token.len() as u32)?;
            w.write_all(token.as_bytes())?;
            w.write_u64::<LittleEndian>(count)?;
        }
        for &x in self.input.iter().chain(&self.output) {
            w.write_f32::<LittleEndian>(x)?;
        }
        Ok(())
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut buf = Vec::new();
        self.write_to(&mut buf).expect("writing to a Vec cannot fail");
        buf
    }

    pub fn read_from<R: Read>(r: &mut R) -> Result<Self> {
        let fmt = |e: io::Error| EmbeddingError::Format(format!("truncated or unreadable: {e}"));
        let mut magic = [0u8; 4];
        r.read_exact(&mut magic).map_err(fmt)?;
        if &magic != MODEL_MAGIC {
            return Err(EmbeddingError::Format("bad magic".into()));
        }
        let version = r.read_u32::<LittleEndian>().map_err(fmt)?;
        if version != MODEL_VERSION {
            return Err(EmbeddingError::Format(format!("unsupported version {version}")));
        }
        let partition = match r.read_u8().map_err(fmt)? {
            0 => AccountLabel::Real,
            1 => AccountLabel::Suspicious,
            other => return Err(EmbeddingError::Format(format!("unknown partition tag {other}"))),
        };
        let dimension = r.read_u32::<LittleEndian>().map_err(fmt)? as usize;
        let vocab_len = r.read_u32::<LittleEndian>().map_err(fmt)? as usize;
        let config = TrainingConfig {
            dimension,
            window: r.read_u32::<LittleEndian>().map_err(fmt)? as usize,
            negatives: r.read_u32::<LittleEndian>().map_err(fmt)? as usize,
            epochs: r.read_u32::<LittleEndian>().map_err(fmt)? as usize,
            learning_rate: r.read_f64::<LittleEndian>().map_err(fmt)?,
            seed: r.read_u64::<LittleEndian>().map_err(fmt)?,
            min_count: r.read_u64::<LittleEndian>().map_err(fmt)?,
        };
        config.validate().map_err(|e| EmbeddingError::Format(e.to_string()))?;
        if vocab_len == 0 {
            return Err(EmbeddingError::Format("empty vocabulary".into()));
        }
        let mut tokens = Vec::with_capacity(vocab_len.min(1 << 20));
        let mut counts = Vec::with_capacity(vocab_len.min(1 << 20));
        for _ in 0..vocab_len {
            let len = r.read_u32::<LittleEndian>().map_err(fmt)? as usize;
            let mut bytes = vec![0u8; len];
            r.read_exact(&mut bytes).map_err(fmt)?;
            let token = String::from_utf8(bytes).map_err(|_| EmbeddingError::Format("token is not UTF-8".into()))?;
            tokens.push(token);
            counts.push(r.read_u64::<LittleEndian>().map_err(fmt)?);
        }
        let vocab = Vocabulary::from_parts(tokens, counts, config.min_count);
        if vocab.ids.len() != vocab_len {
            return Err(EmbeddingError::Format("duplicate vocabulary token".into()));
        }
        let cells = vocab_len
            .checked_mul(dimension)
            .ok_or_else(|| EmbeddingError::Format("matrix size overflows".into()))?;
        let mut read_matrix = || -> Result<Vec<f32>> {
            let mut m = vec![0f32; cells];
            r.read_f32_into::<LittleEndian>(&mut m).map_err(fmt)?;
            if m.iter().any(|x| !x.is_finite()) {
                return Err(EmbeddingError::Format("non-finite matrix entry".into()));
            }
            Ok(m)
        };
        let input = read_matrix()?;
        let output = read_matrix()?;
        let mut rest = [0u8; 1];
        if r.read(&mut rest).map_err(fmt)? != 0 {
            return Err(EmbeddingError::Format("trailing bytes after matrices".into()));
        }
        Ok(EmbeddingModel::new(partition, config, vocab, input, output))
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_bytes()).map_err(|source| EmbeddingError::Io { path: path.to_path_buf(), source })
    }

    pub fn load(path: &Path) -> Result<Self> {
        let bytes = fs::read(path).map_err(|source| EmbeddingError::Io { path: path.to_path_buf(), source })?;
        Self::read_from(&mut bytes.as_slice())
    }
}

/// Trains one partition's model. Tokens below `min_count` are dropped from
/// the sentences before windows are formed. Training is single-threaded and
/// reproducible for a given seed.
pub fn train_skipgram<S: AsRef<[String]>>(
    partition: AccountLabel,
    sentences: &[S],
    config: &TrainingConfig,
) -> Result<TrainingOutcome> {
    config.validate()?;
    let vocab = build_vocab(sentences, config.min_count)?;
    let d = config.dimension;
    let v = vocab.len();
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);

    let mut input: Vec<f32> = (0..v * d).map(|_| (rng.random::<f32>() - 0.5) / d as f32).collect();
    let mut output = vec![0f32; v * d];

    let encoded: Vec<Vec<usize>> = sentences
        .iter()
        .map(|s| s.as_ref().iter().filter_map(|t| vocab.id(t)).collect::<Vec<_>>())
        .filter(|s: &Vec<usize>| s.len() > 1)
        .collect();
    let weights: Vec<f64> = vocab.counts.iter().map(|&c| (c as f64).powf(0.75)).collect();
    let noise = WeightedIndex::new(&weights).expect("vocabulary counts are positive");

    let words_per_epoch: usize = encoded.iter().map(Vec::len).sum();
    let total = (words_per_epoch * config.epochs).max(1) as f64;
    let floor = config.learning_rate * 1e-4;
    let mut processed = 0usize;

    let mut grad_center = vec![0f32; d];
    let mut grad_target = vec![0f32; d];
    let mut epoch_losses = Vec::with_capacity(config.epochs);

    for _ in 0..config.epochs {
        let mut loss_sum = 0f64;
        let mut examples = 0usize;
        for sentence in &encoded {
            for (pos, &center) in sentence.iter().enumerate() {
                let lr = (config.learning_rate * (1.0 - processed as f64 / total)).max(floor) as f32;
                processed += 1;
                let reach = config.window - rng.random_range(0..config.window);
                let lo = pos.saturating_sub(reach);
                let hi = (pos + reach).min(sentence.len() - 1);
                for (ctx_pos, &context) in sentence.iter().enumerate().take(hi + 1).skip(lo) {
                    if ctx_pos == pos {
                        continue;
                    }
                    grad_center.iter_mut().for_each(|g| *g = 0.0);
                    let c = &input[center * d..(center + 1) * d];
                    let mut loss = 0f32;
                    for k in 0..=config.negatives {
                        let (target, positive) = if k == 0 {
                            (context, true)
                        } else {
                            let t = noise.sample(&mut rng);
                            if t == context {
                                continue;
                            }
                            (t, false)
                        };
                        let row = &mut output[target * d..(target + 1) * d];
                        loss += sgns_term(c, row, positive, &mut grad_center, &mut grad_target);
                        for (u, g) in row.iter_mut().zip(&grad_target) {
                            *u -= lr * g;
                        }
                    }
                    for (x, g) in input[center * d..(center + 1) * d].iter_mut().zip(&grad_center) {
                        *x -= lr * g;
                    }
                    loss_sum += f64::from(loss);
                    examples += 1;
                }
            }
        }
        epoch_losses.push(if examples == 0 { 0.0 } else { loss_sum / examples as f64 });
    }

    if input.iter().chain(&output).any(|x| !x.is_finite()) {
        return Err(EmbeddingError::InvalidConfig("training diverged; lower the learning rate".into()));
    }
    let model = EmbeddingModel::new(partition, config.clone(), vocab, input, output);
    Ok(TrainingOutcome { model, epoch_losses })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Neighbor {
    pub token: String,
    pub cosine: f64,
}

/// Top-k tokens by cosine to `query`, excluding the query itself. Ties are
/// ordered by token.
pub fn nearest_words(model: &EmbeddingModel, query: &str, k: usize) -> Result<Vec<Neighbor>> {
    let q = model.vocab.id(query).ok_or_else(|| EmbeddingError::OutOfVocabulary {
        token: query.to_string(),
        partition: model.partition,
    })?;
    let mut scored: Vec<(usize, f64)> = (0..model.vocab.len())
        .filter(|&i| i != q)
        .map(|i| (i, model.cosine_ids(q, i)))
        .collect();
    scored.sort_by(|a, b| b.1.total_cmp(&a.1).then_with(|| model.vocab.token(a.0).cmp(model.vocab.token(b.0))));
    scored.truncate(k);
    Ok(scored
        .into_iter()
        .map(|(i, cosine)| Neighbor { token: model.vocab.token(i).to_string(), cosine })
        .collect())
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum PartitionWords {
    Words { words: Vec<Neighbor> },
    Missing { reason: String },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct WordComparison {
    pub query: String,
    pub real: PartitionWords,
    pub suspicious: PartitionWords,
}

/// Side-by-side neighbors of an entity in the two partition models. The
/// query is joined the same way entities are joined in the training text.
pub fn compare_entity_words(
    real: &EmbeddingModel,
    suspicious: &EmbeddingModel,
    query: &str,
    k: usize,
) -> Result<WordComparison> {
    let token = entity_token(query);
    let side = |model: &EmbeddingModel| match nearest_words(model, &token, k) {
        Ok(words) => Ok(PartitionWords::Words { words }),
        Err(EmbeddingError::OutOfVocabulary { partition, .. }) => Ok(PartitionWords::Missing {
            reason: format!("no data for `{token}` in the {partition} partition"),
        }),
        Err(e) => Err(e),
    };
    let real_words = side(real)?;
    let suspicious_words = side(suspicious)?;
    if matches!(real_words, PartitionWords::Missing { .. }) && matches!(suspicious_words, PartitionWords::Missing { .. }) {
        return Err(EmbeddingError::MissingFromBoth(token));
    }
    Ok(WordComparison { query: token, real: real_words, suspicious: suspicious_words })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sentences(raw: &[&str]) -> Vec<Vec<String>> {
        raw.iter().map(|s| s.split_whitespace().map(String::from).collect()).collect()
    }

    fn small_config(seed: u64) -> TrainingConfig {
        TrainingConfig { dimension: 8, window: 2, negatives: 3, epochs: 3, learning_rate: 0.05, seed, min_count: 1 }
    }

    #[test]
    fn vocab_orders_by_frequency_then_token() {
        let s = sentences(&["gop gop b a", "gop a c gop gop"]);
        let v = build_vocab(&s, 2).unwrap();
        assert_eq!(v.tokens(), &["gop".to_string(), "a".to_string()]);
        assert_eq!(v.count(0), 5);
        assert_eq!(v.id("a"), Some(1));
        assert_eq!(v.id("b"), None);
    }

    #[test]
    fn vocab_errors() {
        let s = sentences(&["a b c"]);
        assert!(matches!(build_vocab(&s, 2), Err(EmbeddingError::EmptyVocabulary { min_count: 2 })));
        let empty: Vec<Vec<String>> = vec![vec![]];
        assert!(matches!(build_vocab(&empty, 1), Err(EmbeddingError::EmptyStream)));
    }

    #[test]
    fn config_validation() {
        assert!(TrainingConfig::default().validate().is_ok());
        for bad in [
            TrainingConfig { dimension: 1, ..Default::default() },
            TrainingConfig { window: 0, ..Default::default() },
            TrainingConfig { negatives: 0, ..Default::default() },
            TrainingConfig { epochs: 0, ..Default::default() },
            TrainingConfig { learning_rate: f64::NAN, ..Default::default() },
        ] {
            assert!(matches!(bad.validate(), Err(EmbeddingError::InvalidConfig(_))));
        }
        let s = sentences(&["a b"]);
        let cfg = TrainingConfig { dimension: 1, min_count: 1, ..Default::default() };
        assert!(train_skipgram(AccountLabel::Real, &s, &cfg).is_err());
    }

    #[test]
    fn log_sigmoid_is_stable() {
        assert!((log_sigmoid(0.0f64) - 0.5f64.ln()).abs() < 1e-15);
        assert!(log_sigmoid(800.0f64).abs() < 1e-300);
        assert!((log_sigmoid(-800.0f64) + 800.0).abs() < 1e-9);
        assert!((sigmoid(-800.0f64)).abs() < 1e-300);
    }

    #[test]
    fn zero_learning_rate_keeps_initialization() {
        let s = sentences(&["the quick brown fox jumps"]);
        let mut cfg = small_config(7);
        cfg.epochs = 1;
        let trained = train_skipgram(AccountLabel::Real, &s, &cfg).unwrap().model;
        cfg.learning_rate = 0.0;
        let frozen = train_skipgram(AccountLabel::Real, &s, &cfg).unwrap().model;
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let init: Vec<f32> = (0..5 * 8).map(|_| (rng.random::<f32>() - 0.5) / 8.0).collect();
        assert_eq!(frozen.input, init);
        assert!(frozen.output.iter().all(|&x| x == 0.0));
        assert_ne!(trained.input, init);
    }

    #[test]
    fn nearest_excludes_query_and_truncates() {
        let s = sentences(&["a b c d", "a b c d", "d c b a"]);
        let model = train_skipgram(AccountLabel::Real, &s, &small_config(1)).unwrap().model;
        let all = nearest_words(&model, "a", 100).unwrap();
        assert_eq!(all.len(), 3);
        assert!(all.iter().all(|n| n.token != "a" && (-1.0..=1.0).contains(&n.cosine)));
        assert!(all.windows(2).all(|w| w[0].cosine >= w[1].cosine));
        assert_eq!(nearest_words(&model, "a", 1).unwrap().len(), 1);
        assert!(matches!(
            nearest_words(&model, "zzz", 3),
            Err(EmbeddingError::OutOfVocabulary { partition: AccountLabel::Real, .. })
        ));
        assert!((model.similarity("b", "b").unwrap() - 1.0).abs() < 1e-6);
        assert_eq!(model.similarity("a", "c"), model.similarity("c", "a"));
    }

    #[test]
    fn binary_round_trip_and_corruption() {
        let s = sentences(&["north_korea talks resume", "talks stall north_korea"]);
        let model = train_skipgram(AccountLabel::Suspicious, &s, &small_config(3)).unwrap().model;
        let bytes = model.to_bytes();
        let back = EmbeddingModel::read_from(&mut bytes.as_slice()).unwrap();
        assert_eq!(back, model);

        let mut bad = bytes.clone();
        bad[0] = b'X';
        assert!(matches!(EmbeddingModel::read_from(&mut bad.as_slice()), Err(EmbeddingError::Format(_))));
        let mut bad = bytes.clone();
        bad[4] = 9;
        assert!(matches!(EmbeddingModel::read_from(&mut bad.as_slice()), Err(EmbeddingError::Format(_))));
        let short = &bytes[..bytes.len() - 1];
        assert!(EmbeddingModel::read_from(&mut &short[..]).is_err());
        let mut long = bytes.clone();
        long.push(0);
        assert!(EmbeddingModel::read_from(&mut long.as_slice()).is_err());
    }

    #[test]
    fn compare_reports_missing_side() {
        let real = train_skipgram(AccountLabel::Real, &sentences(&["north_korea talks", "talks north_korea"]), &small_config(1))
            .unwrap()
            .model;
        let susp = train_skipgram(AccountLabel::Suspicious, &sentences(&["fake news", "news fake"]), &small_config(1))
            .unwrap()
            .model;
        let cmp = compare_entity_words(&real, &susp, "North Korea", 10).unwrap();
        assert_eq!(cmp.query, "north_korea");
        assert!(matches!(&cmp.real, PartitionWords::Words { words } if words[0].token == "talks"));
        assert!(matches!(cmp.suspicious, PartitionWords::Missing { .. }));
        assert!(matches!(compare_entity_words(&real, &susp, "nowhere", 10), Err(EmbeddingError::MissingFromBoth(_))));
    }
}
