//! Precomputed image feature vectors and cosine nearest-image queries,
//! answered separately for images posted by real and by suspicious accounts.

use std::collections::HashMap;
use std::fs;
use std::io;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::{account_id, AccountLabel, AccountRegistry, IngestPolicy};

pub const IMAGE_DIM: usize = 512;

#[derive(Debug, Error)]
pub enum ImageError {
    #[error("cannot access {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },
    #[error("bad header: {0}")]
    Header(String),
    #[error("line {line}: expected {IMAGE_DIM} components, found {found}")]
    Dimension { line: u64, found: usize },
    #[error("line {line}: vector of image `{image_id}` is all zeros")]
    ZeroVector { line: u64, image_id: String },
    #[error("line {line}: image `{image_id}` belongs to unknown account `{account}`")]
    UnknownAccount { line: u64, image_id: String, account: String },
    #[error("line {line}: {reason}")]
    Malformed { line: u64, reason: String },
    #[error("unknown image `{0}`")]
    UnknownImage(String),
}

pub type Result<T> = std::result::Result<T, ImageError>;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ImageFeature {
    pub image_id: String,
    pub account_id: String,
    pub tweet_id: String,
    pub vector: Vec<f32>,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct ImageIndex {
    features: Vec<ImageFeature>,
    labels: Vec<AccountLabel>,
    norms: Vec<f64>,
    by_id: HashMap<String, usize>,
    warnings: usize,
}

fn norm(v: &[f32]) -> f64 {
    v.iter().map(|&x| f64::from(x) * f64::from(x)).sum::<f64>().sqrt()
}

fn dot(a: &[f32], b: &[f32]) -> f64 {
    a.iter().zip(b).map(|(&x, &y)| f64::from(x) * f64::from(y)).sum()
}

impl ImageIndex {
    /// Features are kept sorted by image id. Each must belong to a
    /// registered account and have a nonzero vector of the expected length.
    pub fn from_features(mut features: Vec<ImageFeature>, registry: &AccountRegistry) -> Result<Self> {
        features.sort_by(|a, b| a.image_id.cmp(&b.image_id));
        let mut labels = Vec::with_capacity(features.len());
        for (i, f) in features.iter().enumerate() {
            let line = i as u64 + 1;
            if f.vector.len() != IMAGE_DIM {
                return Err(ImageError::Dimension { line, found: f.vector.len() });
            }
            if f.vector.iter().all(|&x| x == 0.0) {
                return Err(ImageError::ZeroVector { line, image_id: f.image_id.clone() });
            }
            let label = registry.label_of(&f.account_id).ok_or_else(|| ImageError::UnknownAccount {
                line,
                image_id: f.image_id.clone(),
                account: f.account_id.clone(),
            })?;
            labels.push(label);
        }
        let mut by_id = HashMap::with_capacity(features.len());
        for (i, f) in features.iter().enumerate() {
            if by_id.insert(f.image_id.clone(), i).is_some() {
                return Err(ImageError::Malformed { line: i as u64 + 1, reason: format!("duplicate image id `{}`", f.image_id) });
            }
        }
        let norms = features.iter().map(|f| norm(&f.vector)).collect();
        Ok(ImageIndex { features, labels, norms, by_id, warnings: 0 })
    }

    pub fn len(&self) -> usize {
        self.features.len()
    }

    pub fn is_empty(&self) -> bool {
        self.features.is_empty()
    }

    pub fn with_warnings(mut self, warnings: usize) -> Self {
        self.warnings = warnings;
        self
    }

    pub fn warnings(&self) -> usize {
        self.warnings
    }

    pub fn features(&self) -> &[ImageFeature] {
        &self.features
    }

    pub fn get(&self, image_id: &str) -> Option<&ImageFeature> {
        self.by_id.get(image_id).map(|&i| &self.features[i])
    }

    pub fn label(&self, image_id: &str) -> Option<AccountLabel> {
        self.by_id.get(image_id).map(|&i| self.labels[i])
    }

    pub fn partition_size(&self, label: AccountLabel) -> usize {
        self.labels.iter().filter(|&&l| l == label).count()
    }

    fn position(&self, image_id: &str) -> Result<usize> {
        self.by_id.get(image_id).copied().ok_or_else(|| ImageError::UnknownImage(image_id.to_string()))
    }
}

fn header() -> Vec<String> {
    let mut h = vec!["image_id".to_string(), "account".to_string(), "tweet_id".to_string()];
    h.extend((0..IMAGE_DIM).map(|i| format!("v{i}")));
    h
}

/// Reads `image_id,account,tweet_id,v0..v511`. Rows whose account is not
/// registered are skipped with a warning unless the policy is strict; every
/// other defect fails the load. An empty file gives an empty index.
pub fn load_image_features(path: &Path, registry: &AccountRegistry, policy: IngestPolicy) -> Result<ImageIndex> {
    let text = fs::read_to_string(path).map_err(|source| ImageError::Io { path: path.to_path_buf(), source })?;
    if text.trim().is_empty() {
        return Ok(ImageIndex::default());
    }
    let mut reader = csv::ReaderBuilder::new().has_headers(true).flexible(true).from_reader(text.as_bytes());
    let found: Vec<String> = reader
        .headers()
        .map_err(|e| ImageError::Header(e.to_string()))?
        .iter()
        .map(|s| s.trim().to_string())
        .collect();
    if found != header() {
        return Err(ImageError::Header(format!(
            "expected `image_id,account,tweet_id,v0..v{}`, found {} columns starting `{}`",
            IMAGE_DIM - 1,
            found.len(),
            found.iter().take(4).cloned().collect::<Vec<_>>().join(",")
        )));
    }

    let mut features = Vec::new();
    let mut warnings = 0;
    for record in reader.records() {
        let record = record.map_err(|e| ImageError::Malformed {
            line: e.position().map_or(0, |p| p.line()),
            reason: e.to_string(),
        })?;
        let line = record.position().map_or(0, |p| p.line());
        if record.len() < 3 {
            return Err(ImageError::Malformed { line, reason: "missing id columns".into() });
        }
        let found = record.len() - 3;
        if found != IMAGE_DIM {
            return Err(ImageError::Dimension { line, found });
        }
        let image_id = record[0].trim().to_string();
        if image_id.is_empty() {
            return Err(ImageError::Malformed { line, reason: "empty image id".into() });
        }
        let account = account_id(record[1].trim());
        if !registry.contains(&account) {
            if policy == IngestPolicy::Strict {
                return Err(ImageError::UnknownAccount { line, image_id, account });
            }
            warnings += 1;
            continue;
        }
        let vector = record
            .iter()
            .skip(3)
            .map(|v| v.trim().parse::<f32>().ok().filter(|x| x.is_finite()))
            .collect::<Option<Vec<f32>>>()
            .ok_or_else(|| ImageError::Malformed { line, reason: "non-numeric or non-finite component".into() })?;
        if vector.iter().all(|&x| x == 0.0) {
            return Err(ImageError::ZeroVector { line, image_id });
        }
        features.push(ImageFeature { image_id, account_id: account, tweet_id: record[2].trim().to_string(), vector });
    }
    let mut index = ImageIndex::from_features(features, registry)?;
    index.warnings = warnings;
    Ok(index)
}

pub fn write_image_features(index: &ImageIndex, path: &Path) -> Result<()> {
    fs::write(path, image_features_csv(index)).map_err(|source| ImageError::Io { path: path.to_path_buf(), source })
}

pub fn image_features_csv(index: &ImageIndex) -> Vec<u8> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(header()).expect("writing CSV to memory cannot fail");
    for f in &index.features {
        let mut row = vec![f.image_id.clone(), f.account_id.clone(), f.tweet_id.clone()];
        row.extend(f.vector.iter().map(|x| x.to_string()));
        w.write_record(&row).expect("writing CSV to memory cannot fail");
    }
    w.into_inner().expect("flushing CSV to memory cannot fail")
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ImageMatch {
    pub image_id: String,
    pub score: f64,
    pub account_id: String,
    pub label: AccountLabel,
    pub tweet_id: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ImageComparison {
    pub query: String,
    pub real: Vec<ImageMatch>,
    pub suspicious: Vec<ImageMatch>,
}

fn rank(index: &ImageIndex, q: usize, k: usize, score: impl Fn(usize) -> f64) -> ImageComparison {
    let mut real = Vec::new();
    let mut suspicious = Vec::new();
    for i in (0..index.len()).filter(|&i| i != q) {
        let entry = (i, score(i).clamp(-1.0, 1.0));
        match index.labels[i] {
            AccountLabel::Real => real.push(entry),
            AccountLabel::Suspicious => suspicious.push(entry),
        }
    }
    let finish = |mut v: Vec<(usize, f64)>| -> Vec<ImageMatch> {
        v.sort_by(|a, b| {
            b.1.total_cmp(&a.1)
                .then_with(|| index.features[a.0].image_id.cmp(&index.features[b.0].image_id))
        });
        v.truncate(k);
        v.into_iter()
            .map(|(i, score)| {
                let f = &index.features[i];
                ImageMatch {
                    image_id: f.image_id.clone(),
                    score,
                    account_id: f.account_id.clone(),
                    label: index.labels[i],
                    tweet_id: f.tweet_id.clone(),
                }
            })
            .collect()
    };
    ImageComparison { query: index.features[q].image_id.clone(), real: finish(real), suspicious: finish(suspicious) }
}

/// Top-k images by cosine to the query in each partition, query excluded,
/// ties by image id. Uses the norms cached at index construction.
pub fn top_similar_images(index: &ImageIndex, image_id: &str, k: usize) -> Result<ImageComparison> {
    let q = index.position(image_id)?;
    let qv = &index.features[q].vector;
    let qn = index.norms[q];
    Ok(rank(index, q, k, |i| dot(qv, &index.features[i].vector) / (qn * index.norms[i])))
}

/// Reference scan recomputing every norm per pair.
pub fn top_similar_images_brute_force(index: &ImageIndex, image_id: &str, k: usize) -> Result<ImageComparison> {
    let q = index.position(image_id)?;
    let qv = &index.features[q].vector;
    Ok(rank(index, q, k, |i| {
        let v = &index.features[i].vector;
        dot(qv, v) / (norm(qv) * norm(v))
    }))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::Account;

    fn registry() -> AccountRegistry {
        let acct = |h: &str, label| Account {
            id: h.into(),
            handle: h.into(),
            label,
            description: String::new(),
            location: None,
        };
        AccountRegistry::from_accounts(vec![acct("r1", AccountLabel::Real), acct("s1", AccountLabel::Suspicious)]).unwrap()
    }

    fn unit(i: usize, scale: f32) -> Vec<f32> {
        let mut v = vec![0.0; IMAGE_DIM];
        v[i] = scale;
        v[(i + 1) % IMAGE_DIM] = 0.5;
        v
    }

    fn feature(id: &str, account: &str, vector: Vec<f32>) -> ImageFeature {
        ImageFeature { image_id: id.into(), account_id: account.into(), tweet_id: format!("t-{id}"), vector }
    }

    fn csv_line(id: &str, account: &str, v: &[f32]) -> String {
        let comps: Vec<String> = v.iter().map(|x| x.to_string()).collect();
        format!("{id},{account},t1,{}\n", comps.join(","))
    }

    #[test]
    fn duplicate_ranks_first_with_unit_score() {
        let idx = ImageIndex::from_features(
            vec![
                feature("a", "r1", unit(0, 1.0)),
                feature("b", "r1", unit(0, 3.0)),
                feature("c", "r1", unit(0, 1.0)),
                feature("d", "s1", unit(5, 1.0)),
            ],
            &registry(),
        )
        .unwrap();
        let cmp = top_similar_images(&idx, "a", 10).unwrap();
        assert_eq!(cmp.real[0].image_id, "c");
        assert!((cmp.real[0].score - 1.0).abs() < 1e-12);
        assert_eq!(cmp.real.len(), 2);
        assert_eq!(cmp.suspicious.len(), 1);
        assert!(cmp.real.iter().chain(&cmp.suspicious).all(|m| m.image_id != "a"));
        assert_eq!(cmp.suspicious[0].label, AccountLabel::Suspicious);
        assert!(matches!(top_similar_images(&idx, "zz", 3), Err(ImageError::UnknownImage(_))));
    }

    #[test]
    fn loading_validates_rows() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("img.csv");
        let head = header().join(",") + "\n";

        fs::write(&path, "").unwrap();
        assert!(load_image_features(&path, &registry(), IngestPolicy::Skip).unwrap().is_empty());

        fs::write(&path, format!("{head}{}", csv_line("a", "r1", &unit(0, 1.0)[..511]))).unwrap();
        assert!(matches!(
            load_image_features(&path, &registry(), IngestPolicy::Skip),
            Err(ImageError::Dimension { found: 511, .. })
        ));

        fs::write(&path, format!("{head}{}", csv_line("a", "r1", &[0.0; IMAGE_DIM]))).unwrap();
        assert!(matches!(load_image_features(&path, &registry(), IngestPolicy::Skip), Err(ImageError::ZeroVector { .. })));

        let body = format!("{head}{}{}", csv_line("a", "ghost", &unit(0, 1.0)), csv_line("b", "S1", &unit(1, 1.0)));
        fs::write(&path, body).unwrap();
        let idx = load_image_features(&path, &registry(), IngestPolicy::Skip).unwrap();
        assert_eq!((idx.len(), idx.warnings()), (1, 1));
        assert_eq!(idx.label("b"), Some(AccountLabel::Suspicious));
        assert!(matches!(
            load_image_features(&path, &registry(), IngestPolicy::Strict),
            Err(ImageError::UnknownAccount { .. })
        ));

        fs::write(&path, "image_id,account,tweet_id,v0\n").unwrap();
        assert!(matches!(load_image_features(&path, &registry(), IngestPolicy::Skip), Err(ImageError::Header(_))));
    }

    #[test]
    fn csv_round_trip() {
        let mut v = unit(3, 0.1);
        v[7] = -1.0e-7;
        v[9] = 123.456;
        let idx = ImageIndex::from_features(vec![feature("x", "s1", v), feature("a", "r1", unit(0, 2.0))], &registry()).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("out.csv");
        write_image_features(&idx, &path).unwrap();
        let back = load_image_features(&path, &registry(), IngestPolicy::Strict).unwrap();
        assert_eq!(back, idx);
        assert_eq!(back.features()[0].image_id, "a");
    }
}
