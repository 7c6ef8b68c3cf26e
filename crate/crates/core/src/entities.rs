//! Gazetteer-based person / place / organization extraction and the
//! account-by-entity mention index.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::{tokenize, Corpus};

#[derive(Debug, Error)]
pub enum EntityError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}:{line}: malformed gazetteer record: {reason}")]
    Malformed {
        path: PathBuf,
        line: usize,
        reason: String,
    },
    #[error("surface form `{form}` is claimed by both `{first}` and `{second}`")]
    DuplicateSurfaceForm {
        form: String,
        first: String,
        second: String,
    },
    #[error("entity `{0}` has no usable surface forms")]
    NoSurfaceForms(String),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EntityType {
    Person,
    Place,
    Organization,
}

impl EntityType {
    pub const ALL: [EntityType; 3] = [EntityType::Person, EntityType::Place, EntityType::Organization];

    pub fn as_str(self) -> &'static str {
        match self {
            EntityType::Person => "person",
            EntityType::Place => "place",
            EntityType::Organization => "organization",
        }
    }
}

impl fmt::Display for EntityType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for EntityType {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        EntityType::ALL
            .into_iter()
            .find(|t| t.as_str() == s.trim())
            .ok_or_else(|| s.to_string())
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct PerType<T> {
    pub person: T,
    pub place: T,
    pub organization: T,
}

impl<T> PerType<T> {
    pub fn get(&self, kind: EntityType) -> &T {
        match kind {
            EntityType::Person => &self.person,
            EntityType::Place => &self.place,
            EntityType::Organization => &self.organization,
        }
    }

    pub fn get_mut(&mut self, kind: EntityType) -> &mut T {
        match kind {
            EntityType::Person => &mut self.person,
            EntityType::Place => &mut self.place,
            EntityType::Organization => &mut self.organization,
        }
    }
}

/// Single-token form of an entity name, used in embedding streams: `North Korea` -> `north_korea`.
pub fn entity_token(name: &str) -> String {
    name.split_whitespace()
        .map(str::to_lowercase)
        .collect::<Vec<_>>()
        .join("_")
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct GazetteerEntry {
    pub name: String,
    pub kind: EntityType,
    pub surface_forms: BTreeSet<String>,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct Gazetteer {
    entries: BTreeMap<String, GazetteerEntry>,
    /// Tokenized surface form -> canonical name.
    forms: HashMap<Vec<String>, String>,
    max_len: usize,
}

impl Gazetteer {
    pub fn new(entries: impl IntoIterator<Item = GazetteerEntry>) -> Result<Self, EntityError> {
        let mut g = Gazetteer::default();
        for e in entries {
            g.insert(e)?;
        }
        Ok(g)
    }

    fn insert(&mut self, entry: GazetteerEntry) -> Result<(), EntityError> {
        let mut forms = BTreeSet::new();
        for form in &entry.surface_forms {
            let toks = tokenize(form);
            if toks.is_empty() {
                continue;
            }
            if let Some(owner) = self.forms.get(&toks) {
                return Err(EntityError::DuplicateSurfaceForm {
                    form: toks.join(" "),
                    first: owner.clone(),
                    second: entry.name.clone(),
                });
            }
            forms.insert(toks);
        }
        if forms.is_empty() {
            return Err(EntityError::NoSurfaceForms(entry.name));
        }
        let mut stored = entry.clone();
        stored.surface_forms = forms.iter().map(|t| t.join(" ")).collect();
        if let Some(prev) = self.entries.get(&entry.name) {
            // repeated canonical name: merge forms, keep first type
            stored.kind = prev.kind;
            stored.surface_forms.extend(prev.surface_forms.iter().cloned());
        }
        for toks in forms {
            self.max_len = self.max_len.max(toks.len());
            self.forms.insert(toks, entry.name.clone());
        }
        self.entries.insert(entry.name.clone(), stored);
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn get(&self, name: &str) -> Option<&GazetteerEntry> {
        self.entries.get(name)
    }

    pub fn entries(&self) -> impl Iterator<Item = &GazetteerEntry> {
        self.entries.values()
    }

    /// Drops blocked canonical names, and blocked surface forms from the remaining entries.
    pub fn without(&self, blocklist: &BTreeSet<String>) -> Gazetteer {
        let blocked_forms: BTreeSet<Vec<String>> = blocklist.iter().map(|b| tokenize(b)).collect();
        let entries = self
            .entries
            .values()
            .filter(|e| !blocklist.contains(&e.name))
            .filter_map(|e| {
                let forms: BTreeSet<String> = e
                    .surface_forms
                    .iter()
                    .filter(|f| !blocked_forms.contains(&tokenize(f)))
                    .cloned()
                    .collect();
                (!forms.is_empty()).then(|| GazetteerEntry {
                    surface_forms: forms,
                    ..e.clone()
                })
            });
        Gazetteer::new(entries).expect("subset of a valid gazetteer")
    }

    fn lookup<S: AsRef<str>>(&self, span: &[S]) -> Option<&str> {
        let key: Vec<String> = span.iter().map(|s| s.as_ref().to_string()).collect();
        self.forms.get(&key).map(String::as_str)
    }
}

/// Reads `name<TAB>type<TAB>form|form|...` records.
pub fn load_gazetteer(path: &Path) -> Result<Gazetteer, EntityError> {
    let body = fs::read_to_string(path).map_err(|source| EntityError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    let mut entries = Vec::new();
    for (i, line) in body.lines().enumerate() {
        if line.trim().is_empty() || line.starts_with('#') {
            continue;
        }
        let malformed = |reason: String| EntityError::Malformed {
            path: path.to_path_buf(),
            line: i + 1,
            reason,
        };
        let fields: Vec<&str> = line.split('\t').collect();
        if fields.len() != 3 {
            return Err(malformed(format!("expected 3 tab-separated fields, found {}", fields.len())));
        }
        let name = fields[0].trim();
        if name.is_empty() {
            return Err(malformed("empty canonical name".into()));
        }
        let kind = fields[1]
            .parse::<EntityType>()
            .map_err(|t| malformed(format!("unknown entity type `{t}`")))?;
        let surface_forms = fields[2]
            .split('|')
            .map(|s| s.trim().to_lowercase())
            .filter(|s| !s.is_empty())
            .collect();
        entries.push(GazetteerEntry {
            name: name.to_string(),
            kind,
            surface_forms,
        });
    }
    Gazetteer::new(entries)
}

/// One name or surface form per line; `#` comments.
pub fn load_blocklist(path: &Path) -> Result<BTreeSet<String>, EntityError> {
    let body = fs::read_to_string(path).map_err(|source| EntityError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    Ok(body
        .lines()
        .map(str::trim)
        .filter(|l| !l.is_empty() && !l.starts_with('#'))
        .map(str::to_string)
        .collect())
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct EntityMention {
    pub tweet_id: String,
    pub name: String,
    pub kind: EntityType,
    pub start: usize,
    pub len: usize,
}

/// Greedy longest-match-first scan over `tokens`, left to right.
pub fn extract_entities<S: AsRef<str>>(tweet_id: &str, tokens: &[S], gazetteer: &Gazetteer) -> Vec<EntityMention> {
    let mut out = Vec::new();
    let mut i = 0;
    while i < tokens.len() {
        let longest = gazetteer.max_len.min(tokens.len() - i);
        let hit = (1..=longest)
            .rev()
            .find_map(|len| gazetteer.lookup(&tokens[i..i + len]).map(|name| (len, name)));
        match hit {
            Some((len, name)) => {
                out.push(EntityMention {
                    tweet_id: tweet_id.to_string(),
                    name: name.to_string(),
                    kind: gazetteer.entries[name].kind,
                    start: i,
                    len,
                });
                i += len;
            }
            None => i += 1,
        }
    }
    out
}

/// Replaces each mention span by its joined entity token.
pub fn join_entities<S: AsRef<str>>(tokens: &[S], mentions: &[EntityMention]) -> Vec<String> {
    let mut out = Vec::with_capacity(tokens.len());
    let mut i = 0;
    let mut spans = mentions.iter().peekable();
    while i < tokens.len() {
        match spans.peek() {
            Some(m) if m.start == i => {
                out.push(entity_token(&m.name));
                i += m.len.max(1);
                spans.next();
            }
            _ => {
                out.push(tokens[i].as_ref().to_string());
                i += 1;
            }
        }
    }
    out
}

/// Mention counts per (entity, account).
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct EntityIndex {
    kinds: BTreeMap<String, EntityType>,
    counts: BTreeMap<String, BTreeMap<String, u64>>,
    totals: PerType<u64>,
}

impl EntityIndex {
    pub fn add(&mut self, account_id: &str, mention: &EntityMention) {
        self.add_count(&mention.name, mention.kind, account_id, 1);
    }

    fn add_count(&mut self, name: &str, kind: EntityType, account_id: &str, n: u64) {
        if n == 0 {
            return;
        }
        self.kinds.entry(name.to_string()).or_insert(kind);
        *self
            .counts
            .entry(name.to_string())
            .or_default()
            .entry(account_id.to_string())
            .or_insert(0) += n;
        *self.totals.get_mut(kind) += n;
    }

    pub fn merge(&mut self, other: &EntityIndex) {
        for (name, per_account) in &other.counts {
            let kind = other.kinds[name];
            for (account, &n) in per_account {
                self.add_count(name, kind, account, n);
            }
        }
    }

    pub fn is_empty(&self) -> bool {
        self.counts.is_empty()
    }

    pub fn contains(&self, name: &str) -> bool {
        self.counts.contains_key(name)
    }

    pub fn kind(&self, name: &str) -> Option<EntityType> {
        self.kinds.get(name).copied()
    }

    pub fn totals(&self) -> &PerType<u64> {
        &self.totals
    }

    pub fn count(&self, name: &str, account_id: &str) -> u64 {
        self.counts
            .get(name)
            .and_then(|m| m.get(account_id))
            .copied()
            .unwrap_or(0)
    }

    pub fn total_for(&self, name: &str) -> u64 {
        self.counts.get(name).map(|m| m.values().sum()).unwrap_or(0)
    }

    /// `(entity, account, count)` triples in name then account order.
    pub fn pairs(&self) -> impl Iterator<Item = (&str, &str, u64)> {
        self.counts
            .iter()
            .flat_map(|(e, m)| m.iter().map(move |(a, &n)| (e.as_str(), a.as_str(), n)))
    }

    /// Top `k` entities of `kind` by total count; ties by name ascending.
    pub fn top(&self, kind: EntityType, k: usize) -> Vec<(String, u64)> {
        rank_counts(
            self.counts
                .iter()
                .filter(|(name, _)| self.kinds[*name] == kind)
                .map(|(name, m)| (name.clone(), m.values().sum())),
            k,
        )
    }

    /// Top `k` entities of any type, summed over `accounts`.
    pub fn top_for_accounts<'a>(&self, accounts: impl IntoIterator<Item = &'a str>, k: usize) -> Vec<(String, u64)> {
        let accounts: BTreeSet<&str> = accounts.into_iter().collect();
        rank_counts(
            self.counts.iter().map(|(name, m)| {
                (
                    name.clone(),
                    m.iter()
                        .filter(|(a, _)| accounts.contains(a.as_str()))
                        .map(|(_, n)| n)
                        .sum(),
                )
            }),
            k,
        )
    }
}

pub(crate) fn rank_counts(items: impl Iterator<Item = (String, u64)>, k: usize) -> Vec<(String, u64)> {
    let mut v: Vec<(String, u64)> = items.filter(|(_, n)| *n > 0).collect();
    v.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
    v.truncate(k);
    v
}

/// Mentions found in each tweet, keyed by tweet id (tweets without mentions are omitted).
pub type TweetMentions = BTreeMap<String, Vec<EntityMention>>;

/// Extracts mentions from every tweet in parallel and folds them into an index.
pub fn index_corpus(corpus: &Corpus, gazetteer: &Gazetteer) -> (EntityIndex, TweetMentions) {
    let per_tweet: Vec<Vec<EntityMention>> = corpus
        .tweets()
        .par_iter()
        .map(|t| extract_entities(&t.id, &tokenize(&t.text), gazetteer))
        .collect();
    let mut index = EntityIndex::default();
    let mut mentions = TweetMentions::new();
    for (t, found) in corpus.tweets().iter().zip(per_tweet) {
        for m in &found {
            index.add(&t.account_id, m);
        }
        if !found.is_empty() {
            mentions.insert(t.id.clone(), found);
        }
    }
    (index, mentions)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn entry(name: &str, kind: EntityType, forms: &[&str]) -> GazetteerEntry {
        GazetteerEntry {
            name: name.into(),
            kind,
            surface_forms: forms.iter().map(|s| s.to_string()).collect(),
        }
    }

    fn toks(s: &str) -> Vec<String> {
        s.split_whitespace().map(str::to_string).collect()
    }

    #[test]
    fn multiword_match() {
        let g = Gazetteer::new([entry("north korea", EntityType::Place, &["north korea"])]).unwrap();
        let m = extract_entities("t", &toks("north korea talks"), &g);
        assert_eq!(m.len(), 1);
        assert_eq!((m[0].name.as_str(), m[0].start, m[0].len), ("north korea", 0, 2));
    }

    #[test]
    fn longest_match_wins() {
        let g = Gazetteer::new([
            entry("new york", EntityType::Place, &["new york"]),
            entry("york", EntityType::Place, &["york"]),
        ])
        .unwrap();
        let m = extract_entities("t", &toks("new york"), &g);
        assert_eq!(m.len(), 1);
        assert_eq!(m[0].name, "new york");
        let m = extract_entities("t", &toks("old york new"), &g);
        assert_eq!(m.iter().map(|x| x.name.as_str()).collect::<Vec<_>>(), ["york"]);
    }

    #[test]
    fn empty_gazetteer_matches_nothing() {
        assert!(extract_entities("t", &toks("north korea"), &Gazetteer::default()).is_empty());
    }

    #[test]
    fn aliases_canonicalize() {
        let g = Gazetteer::new([entry("gop", EntityType::Organization, &["gop", "gops", "Republican Party"])]).unwrap();
        let m = extract_entities("t", &tokenize("GOPs and the Republican party"), &g);
        assert_eq!(m.len(), 2);
        assert!(m.iter().all(|x| x.name == "gop"));
    }

    #[test]
    fn duplicate_forms_rejected() {
        let err = Gazetteer::new([
            entry("a", EntityType::Place, &["x"]),
            entry("b", EntityType::Person, &["X"]),
        ])
        .unwrap_err();
        assert!(matches!(err, EntityError::DuplicateSurfaceForm { .. }));
        assert!(matches!(
            Gazetteer::new([entry("a", EntityType::Place, &["!!"])]),
            Err(EntityError::NoSurfaceForms(_))
        ));
    }

    #[test]
    fn gazetteer_file_and_blocklist() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("g.tsv");
        fs::write(&p, "# name\ttype\tforms\ngop\torganization\tgop|gops\nnorth korea\tplace\tnorth korea|dprk\nmay\tperson\tmay\n").unwrap();
        let g = load_gazetteer(&p).unwrap();
        assert_eq!(g.len(), 3);
        assert_eq!(g.get("north korea").unwrap().kind, EntityType::Place);

        let blocked = g.without(&["may".to_string(), "gops".to_string()].into_iter().collect());
        assert_eq!(blocked.len(), 2);
        assert_eq!(extract_entities("t", &toks("may gops gop"), &blocked).len(), 1);

        fs::write(&p, "gop\tparty\tgop\n").unwrap();
        assert!(matches!(load_gazetteer(&p), Err(EntityError::Malformed { line: 1, .. })));
    }

    #[test]
    fn join_replaces_spans() {
        let g = Gazetteer::new([entry("North Korea", EntityType::Place, &["north korea"])]).unwrap();
        let t = toks("talks with north korea resume");
        let m = extract_entities("t", &t, &g);
        assert_eq!(join_entities(&t, &m), ["talks", "with", "north_korea", "resume"]);
    }

    #[test]
    fn index_totals_and_top() {
        let mut idx = EntityIndex::default();
        let m = |name: &str, kind| EntityMention {
            tweet_id: "t".into(),
            name: name.into(),
            kind,
            start: 0,
            len: 1,
        };
        for _ in 0..3 {
            idx.add("a1", &m("gop", EntityType::Organization));
        }
        idx.add("a2", &m("gop", EntityType::Organization));
        idx.add("a2", &m("senate", EntityType::Organization));
        idx.add("a2", &m("putin", EntityType::Person));
        assert_eq!(idx.totals().organization, 5);
        assert_eq!(idx.totals().person, 1);
        assert_eq!(idx.top(EntityType::Organization, 10), [("gop".to_string(), 4), ("senate".to_string(), 1)]);
        assert_eq!(idx.top(EntityType::Organization, 1).len(), 1);
        assert_eq!(idx.top_for_accounts(["a2"], 10)[0].1, 1);
        assert!(idx.top_for_accounts(["nobody"], 10).is_empty());
    }

    fn vocab() -> Vec<&'static str> {
        vec!["north", "korea", "new", "york", "gop", "the", "x"]
    }

    proptest! {
        #[test]
        fn mentions_disjoint_and_reproducible(words in proptest::collection::vec(proptest::sample::select(vocab()), 0..40)) {
            let g = Gazetteer::new([
                entry("north korea", EntityType::Place, &["north korea"]),
                entry("korea", EntityType::Place, &["korea"]),
                entry("new york", EntityType::Place, &["new york"]),
                entry("gop", EntityType::Organization, &["gop", "the gop"]),
            ]).unwrap();
            let a = extract_entities("t", &words, &g);
            let b = extract_entities("t", &words, &g);
            prop_assert_eq!(&a, &b);
            let mut end = 0;
            for m in &a {
                prop_assert!(m.start >= end);
                prop_assert!(m.start + m.len <= words.len());
                end = m.start + m.len;
            }
            let mut idx = EntityIndex::default();
            for m in &a { idx.add("acct", m); }
            let total: u64 = idx.totals().person + idx.totals().place + idx.totals().organization;
            prop_assert_eq!(total as usize, a.len());
        }
    }
}
