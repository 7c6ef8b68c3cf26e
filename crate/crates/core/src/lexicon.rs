//! Dictionary-based language features.
//!
//! Each account is scored on six features as the fraction of its token
//! positions covered by lexicon terms (phrases matched longest-first). Raw
//! fractions are then min-max scaled to 0..=100 across accounts and ranked,
//! rank 1 being the highest score.

use std::collections::{BTreeSet, HashMap};
use std::fmt;
use std::fs;
use std::ops::{Index, IndexMut};
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum LexiconError {
    #[error("lexicon for `{feature}` not found at {path}")]
    MissingFeature { feature: Feature, path: PathBuf },
    #[error("cannot read lexicon {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("lexicon for `{0}` has no terms")]
    Empty(Feature),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Feature {
    Fairness,
    Loyalty,
    Subjectivity,
    Fear,
    Anger,
    Negativity,
}

/// Which side of the real/suspicious split a feature tends to indicate.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FeatureGroup {
    Real,
    Suspicious,
}

impl Feature {
    pub const ALL: [Feature; 6] = [
        Feature::Fairness,
        Feature::Loyalty,
        Feature::Subjectivity,
        Feature::Fear,
        Feature::Anger,
        Feature::Negativity,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Feature::Fairness => "fairness",
            Feature::Loyalty => "loyalty",
            Feature::Subjectivity => "subjectivity",
            Feature::Fear => "fear",
            Feature::Anger => "anger",
            Feature::Negativity => "negativity",
        }
    }

    pub fn group(self) -> FeatureGroup {
        match self {
            Feature::Fairness | Feature::Loyalty | Feature::Subjectivity => FeatureGroup::Real,
            Feature::Fear | Feature::Anger | Feature::Negativity => FeatureGroup::Suspicious,
        }
    }

    fn index(self) -> usize {
        self as usize
    }
}

impl fmt::Display for Feature {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Feature {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Feature::ALL
            .into_iter()
            .find(|f| f.as_str() == s)
            .ok_or_else(|| s.to_string())
    }
}

/// One value per feature; serializes as a map keyed by feature name.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct PerFeature<T> {
    pub fairness: T,
    pub loyalty: T,
    pub subjectivity: T,
    pub fear: T,
    pub anger: T,
    pub negativity: T,
}

impl<T> PerFeature<T> {
    pub fn from_fn(mut f: impl FnMut(Feature) -> T) -> Self {
        PerFeature {
            fairness: f(Feature::Fairness),
            loyalty: f(Feature::Loyalty),
            subjectivity: f(Feature::Subjectivity),
            fear: f(Feature::Fear),
            anger: f(Feature::Anger),
            negativity: f(Feature::Negativity),
        }
    }

    pub fn iter(&self) -> impl Iterator<Item = (Feature, &T)> {
        Feature::ALL.into_iter().map(move |f| (f, &self[f]))
    }
}

impl<T> Index<Feature> for PerFeature<T> {
    type Output = T;

    fn index(&self, f: Feature) -> &T {
        match f {
            Feature::Fairness => &self.fairness,
            Feature::Loyalty => &self.loyalty,
            Feature::Subjectivity => &self.subjectivity,
            Feature::Fear => &self.fear,
            Feature::Anger => &self.anger,
            Feature::Negativity => &self.negativity,
        }
    }
}

impl<T> IndexMut<Feature> for PerFeature<T> {
    fn index_mut(&mut self, f: Feature) -> &mut T {
        match f {
            Feature::Fairness => &mut self.fairness,
            Feature::Loyalty => &mut self.loyalty,
            Feature::Subjectivity => &mut self.subjectivity,
            Feature::Fear => &mut self.fear,
            Feature::Anger => &mut self.anger,
            Feature::Negativity => &mut self.negativity,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Lexicon {
    feature: Feature,
    terms: BTreeSet<String>,
    /// First token -> phrase lengths present, longest first.
    starts: HashMap<String, Vec<usize>>,
    phrases: BTreeSet<Vec<String>>,
}

impl Lexicon {
    /// Builds a lexicon from raw terms. Terms are lowercased and whitespace-normalized.
    pub fn new<I, S>(feature: Feature, terms: I) -> Result<Self, LexiconError>
    where
        I: IntoIterator<Item = S>,
        S: AsRef<str>,
    {
        let terms: BTreeSet<String> = terms
            .into_iter()
            .map(|t| t.as_ref().split_whitespace().collect::<Vec<_>>().join(" ").to_lowercase())
            .filter(|t| !t.is_empty())
            .collect();
        if terms.is_empty() {
            return Err(LexiconError::Empty(feature));
        }
        let phrases: BTreeSet<Vec<String>> = terms
            .iter()
            .map(|t| t.split(' ').map(str::to_string).collect())
            .collect();
        let mut starts: HashMap<String, Vec<usize>> = HashMap::new();
        for p in &phrases {
            let lens = starts.entry(p[0].clone()).or_default();
            if !lens.contains(&p.len()) {
                lens.push(p.len());
            }
        }
        for lens in starts.values_mut() {
            lens.sort_unstable_by(|a, b| b.cmp(a));
        }
        Ok(Self {
            feature,
            terms,
            starts,
            phrases,
        })
    }

    pub fn feature(&self) -> Feature {
        self.feature
    }

    pub fn terms(&self) -> &BTreeSet<String> {
        &self.terms
    }

    pub fn len(&self) -> usize {
        self.terms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.terms.is_empty()
    }

    /// Number of token positions covered by greedy left-to-right longest matches.
    pub fn matched_positions<S: AsRef<str>>(&self, tokens: &[S]) -> usize {
        let mut i = 0;
        let mut matched = 0;
        while i < tokens.len() {
            let hit = self.starts.get(tokens[i].as_ref()).and_then(|lens| {
                lens.iter().copied().find(|&len| {
                    i + len <= tokens.len()
                        && self.phrases.contains(
                            &tokens[i..i + len]
                                .iter()
                                .map(|t| t.as_ref().to_string())
                                .collect::<Vec<_>>(),
                        )
                })
            });
            match hit {
                Some(len) => {
                    matched += len;
                    i += len;
                }
                None => i += 1,
            }
        }
        matched
    }
}

/// The six feature lexicons.
#[derive(Clone, Debug, PartialEq)]
pub struct LexiconSet {
    lexicons: Vec<Lexicon>,
}

impl LexiconSet {
    pub fn new(mut lexicons: Vec<Lexicon>) -> Option<Self> {
        lexicons.sort_by_key(|l| l.feature);
        let features: Vec<Feature> = lexicons.iter().map(|l| l.feature).collect();
        (features == Feature::ALL).then_some(Self { lexicons })
    }

    pub fn get(&self, feature: Feature) -> &Lexicon {
        &self.lexicons[feature.index()]
    }

    pub fn iter(&self) -> impl Iterator<Item = &Lexicon> {
        self.lexicons.iter()
    }
}

/// Parses a lexicon file body: one term per line, `#` starts a comment line.
pub fn parse_terms(body: &str) -> Vec<String> {
    body.lines()
        .map(str::trim)
        .filter(|l| !l.is_empty() && !l.starts_with('#'))
        .map(str::to_lowercase)
        .collect()
}

/// Loads `<feature>.txt` for each of the six features from `dir`.
pub fn load_lexicons(dir: &Path) -> Result<LexiconSet, LexiconError> {
    let mut lexicons = Vec::with_capacity(Feature::ALL.len());
    for feature in Feature::ALL {
        let path = dir.join(format!("{feature}.txt"));
        if !path.is_file() {
            return Err(LexiconError::MissingFeature { feature, path });
        }
        let body = fs::read_to_string(&path).map_err(|source| LexiconError::Io {
            path: path.clone(),
            source,
        })?;
        lexicons.push(Lexicon::new(feature, parse_terms(&body))?);
    }
    Ok(LexiconSet::new(lexicons).expect("one lexicon per feature"))
}

/// Fraction of token positions matched by `lexicon`; 0 for an empty token list.
pub fn score_raw<S: AsRef<str>>(tokens: &[S], lexicon: &Lexicon) -> f64 {
    if tokens.is_empty() {
        return 0.0;
    }
    lexicon.matched_positions(tokens) as f64 / tokens.len() as f64
}

pub fn score_all<S: AsRef<str>>(tokens: &[S], lexicons: &LexiconSet) -> PerFeature<f64> {
    PerFeature::from_fn(|f| score_raw(tokens, lexicons.get(f)))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LanguageProfile {
    pub account_id: String,
    pub raw: PerFeature<f64>,
    pub scaled: PerFeature<f64>,
    pub rank: PerFeature<usize>,
}

/// Min-max scales each feature to 0..=100 and ranks accounts.
///
/// Rank order is raw score descending, ties by account id ascending. A
/// feature whose raw scores are all equal scales to 0 for every account.
/// Output is in account-id order.
pub fn scale_and_rank(raw: &[(String, PerFeature<f64>)]) -> Vec<LanguageProfile> {
    let mut order: Vec<usize> = (0..raw.len()).collect();
    order.sort_by(|&a, &b| raw[a].0.cmp(&raw[b].0));
    let mut profiles: Vec<LanguageProfile> = order
        .iter()
        .map(|&i| LanguageProfile {
            account_id: raw[i].0.clone(),
            raw: raw[i].1,
            scaled: PerFeature::default(),
            rank: PerFeature::default(),
        })
        .collect();

    for feature in Feature::ALL {
        let values: Vec<f64> = profiles.iter().map(|p| p.raw[feature]).collect();
        let min = values.iter().copied().fold(f64::INFINITY, f64::min);
        let max = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let spread = max - min;
        for p in profiles.iter_mut() {
            p.scaled[feature] = if spread > 0.0 {
                ((p.raw[feature] - min) / spread * 100.0).clamp(0.0, 100.0)
            } else {
                0.0
            };
        }
        // profiles are already in id order, so a stable sort on score breaks ties by id
        let mut ranked: Vec<usize> = (0..profiles.len()).collect();
        ranked.sort_by(|&a, &b| values[b].total_cmp(&values[a]));
        for (pos, &i) in ranked.iter().enumerate() {
            profiles[i].rank[feature] = pos + 1;
        }
    }
    profiles
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Marker {
    pub mean: f64,
    pub median: f64,
}

pub type FeatureStats = PerFeature<Marker>;

pub fn mean_median(values: &[f64]) -> Marker {
    if values.is_empty() {
        return Marker {
            mean: 0.0,
            median: 0.0,
        };
    }
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let n = sorted.len();
    let median = if n % 2 == 1 {
        sorted[n / 2]
    } else {
        (sorted[n / 2 - 1] + sorted[n / 2]) / 2.0
    };
    Marker {
        mean: sorted.iter().sum::<f64>() / n as f64,
        median,
    }
}

/// Mean and median of the scaled scores, per feature.
pub fn feature_stats(profiles: &[LanguageProfile]) -> FeatureStats {
    PerFeature::from_fn(|f| {
        let v: Vec<f64> = profiles.iter().map(|p| p.scaled[f]).collect();
        mean_median(&v)
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn toks(s: &str) -> Vec<String> {
        s.split_whitespace().map(str::to_string).collect()
    }

    fn uniform(f: impl Fn(Feature) -> f64) -> PerFeature<f64> {
        PerFeature::from_fn(f)
    }

    #[test]
    fn raw_score_examples() {
        let anger = Lexicon::new(Feature::Anger, ["angry"]).unwrap();
        assert!((score_raw(&toks("angry angry calm"), &anger) - 2.0 / 3.0).abs() < 1e-15);
        assert_eq!(score_raw::<String>(&[], &anger), 0.0);
        assert_eq!(score_raw(&toks("calm quiet"), &anger), 0.0);
    }

    #[test]
    fn phrases_match_longest_first() {
        let lex = Lexicon::new(Feature::Fear, ["under attack", "attack", "under attack now"]).unwrap();
        // "under attack now" (3) then "attack" (1)
        assert_eq!(lex.matched_positions(&toks("under attack now attack x")), 4);
        assert_eq!(lex.matched_positions(&toks("under siege")), 0);
        assert_eq!(lex.matched_positions(&toks("under attack")), 2);
    }

    #[test]
    fn lexicon_normalizes_terms() {
        let lex = Lexicon::new(Feature::Fear, ["Panic", "panic", "  Under   Attack "]).unwrap();
        assert_eq!(lex.len(), 2);
        assert!(lex.terms().contains("under attack"));
        assert!(matches!(Lexicon::new(Feature::Fear, ["", " "]), Err(LexiconError::Empty(Feature::Fear))));
    }

    #[test]
    fn load_lexicon_dir() {
        let dir = tempfile::tempdir().unwrap();
        for f in Feature::ALL {
            let body: String = (0..10).map(|i| format!("{f}word{i}\n")).collect();
            fs::write(dir.path().join(format!("{f}.txt")), format!("# comment\n{body}\n")).unwrap();
        }
        let set = load_lexicons(dir.path()).unwrap();
        assert!(set.iter().all(|l| l.len() == 10));
        assert_eq!(set.get(Feature::Anger).feature(), Feature::Anger);

        fs::remove_file(dir.path().join("anger.txt")).unwrap();
        let err = load_lexicons(dir.path()).unwrap_err();
        assert!(matches!(err, LexiconError::MissingFeature { feature: Feature::Anger, .. }));
        assert!(err.to_string().contains("anger"));

        fs::write(dir.path().join("anger.txt"), "# only a comment\n").unwrap();
        assert!(matches!(load_lexicons(dir.path()), Err(LexiconError::Empty(Feature::Anger))));
    }

    #[test]
    fn scale_and_rank_example() {
        let raw = vec![
            ("a".to_string(), uniform(|_| 0.1)),
            ("b".to_string(), uniform(|_| 0.3)),
            ("c".to_string(), uniform(|_| 0.2)),
        ];
        let p = scale_and_rank(&raw);
        let get = |id: &str| p.iter().find(|x| x.account_id == id).unwrap();
        for f in Feature::ALL {
            assert_eq!(get("a").scaled[f], 0.0);
            assert_eq!(get("b").scaled[f], 100.0);
            assert!((get("c").scaled[f] - 50.0).abs() < 1e-9);
            assert_eq!((get("b").rank[f], get("c").rank[f], get("a").rank[f]), (1, 2, 3));
        }
    }

    #[test]
    fn degenerate_feature_scales_to_zero() {
        let raw = vec![
            ("zed".to_string(), uniform(|_| 0.4)),
            ("amy".to_string(), uniform(|_| 0.4)),
            ("max".to_string(), uniform(|_| 0.4)),
        ];
        let p = scale_and_rank(&raw);
        let ids: Vec<_> = p.iter().map(|x| x.account_id.as_str()).collect();
        assert_eq!(ids, ["amy", "max", "zed"]);
        for f in Feature::ALL {
            assert!(p.iter().all(|x| x.scaled[f] == 0.0));
            assert_eq!(p.iter().map(|x| x.rank[f]).collect::<Vec<_>>(), [1, 2, 3]);
        }
    }

    #[test]
    fn stats_examples() {
        assert_eq!(mean_median(&[0.0, 50.0, 100.0]), Marker { mean: 50.0, median: 50.0 });
        assert_eq!(mean_median(&[42.0]), Marker { mean: 42.0, median: 42.0 });
        assert_eq!(mean_median(&[100.0, 0.0]), Marker { mean: 50.0, median: 50.0 });
    }

    fn raw_profiles() -> impl Strategy<Value = Vec<(String, PerFeature<f64>)>> {
        proptest::collection::btree_map("[a-z]{1,6}", proptest::collection::vec(0.0f64..1.0, 6), 1..40).prop_map(|m| {
            m.into_iter()
                .map(|(k, v)| (k, PerFeature::from_fn(|f| v[f as usize])))
                .collect()
        })
    }

    proptest! {
        #[test]
        fn ranks_are_permutations(raw in raw_profiles()) {
            let p = scale_and_rank(&raw);
            let n = p.len();
            for f in Feature::ALL {
                let mut ranks: Vec<usize> = p.iter().map(|x| x.rank[f]).collect();
                ranks.sort_unstable();
                prop_assert_eq!(ranks, (1..=n).collect::<Vec<_>>());
                let max = p.iter().map(|x| x.scaled[f]).fold(f64::MIN, f64::max);
                let top = p.iter().find(|x| x.rank[f] == 1).unwrap();
                prop_assert_eq!(top.scaled[f], max);
                for x in &p {
                    prop_assert!((0.0..=100.0).contains(&x.scaled[f]));
                }
                for a in &p {
                    for b in &p {
                        if a.raw[f] > b.raw[f] {
                            prop_assert!(a.scaled[f] > b.scaled[f]);
                            prop_assert!(a.rank[f] < b.rank[f]);
                        }
                    }
                }
                let stats = feature_stats(&p);
                prop_assert!((0.0..=100.0).contains(&stats[f].mean));
                prop_assert!((0.0..=100.0).contains(&stats[f].median));
            }
        }

        #[test]
        fn padding_lowers_raw_scores(words in proptest::collection::vec(prop_oneof!["angry", "calm", "mad"], 1..30), pad in 1usize..10) {
            let lex = Lexicon::new(Feature::Anger, ["angry", "mad"]).unwrap();
            let before = score_raw(&words, &lex);
            let mut padded = words.clone();
            padded.extend(std::iter::repeat_n("filler".to_string(), pad));
            let after = score_raw(&padded, &lex);
            if before > 0.0 {
                prop_assert!(after < before);
            } else {
                prop_assert_eq!(after, 0.0);
            }
        }
    }
}
