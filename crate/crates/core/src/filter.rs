//! Stacked selections over the tweet corpus. A filter state is a conjunction
//! of an optional account, a set of entities, an optional time range and an
//! optional (entity, related word) pair.

use std::collections::{BTreeMap, BTreeSet, HashMap, HashSet};

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::{account_id, tokenize, AccountRegistry, Corpus, TimeRange};
use crate::entities::{entity_token, join_entities, rank_counts, EntityIndex, EntityType, TweetMentions};

#[derive(Debug, Error, PartialEq, Eq)]
pub enum FilterError {
    #[error("unknown account `{0}`")]
    UnknownAccount(String),
    #[error("unknown entity `{0}`")]
    UnknownEntity(String),
    #[error("word `{0}` does not occur in any tweet")]
    UnknownWord(String),
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct FilterState {
    pub account: Option<String>,
    pub entities: BTreeSet<String>,
    pub time: Option<TimeRange>,
    /// An entity and a word related to it; both must occur in the tweet.
    pub word_pair: Option<(String, String)>,
}

impl FilterState {
    pub fn is_empty(&self) -> bool {
        self.account.is_none() && self.entities.is_empty() && self.time.is_none() && self.word_pair.is_none()
    }

    /// The single-member filters this state is the conjunction of.
    pub fn parts(&self) -> Vec<FilterState> {
        let mut out = Vec::new();
        if let Some(a) = &self.account {
            out.push(FilterState { account: Some(a.clone()), ..Default::default() });
        }
        for e in &self.entities {
            out.push(FilterState { entities: BTreeSet::from([e.clone()]), ..Default::default() });
        }
        if let Some(t) = self.time {
            out.push(FilterState { time: Some(t), ..Default::default() });
        }
        if let Some(p) = &self.word_pair {
            out.push(FilterState { word_pair: Some(p.clone()), ..Default::default() });
        }
        out
    }

    /// Stacks two states. Returns `None` when both set the account or the
    /// word pair to different values, or their time ranges do not overlap.
    pub fn and(&self, other: &FilterState) -> Option<FilterState> {
        fn one<T: Clone + PartialEq>(a: &Option<T>, b: &Option<T>) -> Option<Option<T>> {
            match (a, b) {
                (Some(x), Some(y)) if x != y => None,
                _ => Some(a.clone().or_else(|| b.clone())),
            }
        }
        let time = match (self.time, other.time) {
            (Some(a), Some(b)) => Some(TimeRange::new(a.start().max(b.start()), a.end().min(b.end())).ok()?),
            (a, b) => a.or(b),
        };
        let mut entities = self.entities.clone();
        entities.extend(other.entities.iter().cloned());
        Some(FilterState {
            account: one(&self.account, &other.account)?,
            entities,
            time,
            word_pair: one(&self.word_pair, &other.word_pair)?,
        })
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct TweetRow {
    pub id: String,
    pub account_id: String,
    pub timestamp: DateTime<Utc>,
    /// Canonical names in mention order, with repeats.
    pub mentions: Vec<(String, EntityType)>,
    /// Plain tokens plus joined entity tokens.
    pub words: HashSet<String>,
}

/// Per-tweet lookup structure filters are evaluated against. Rows keep
/// corpus order.
#[derive(Clone, Debug)]
pub struct TweetTable {
    rows: Vec<TweetRow>,
    accounts: HashSet<String>,
    entities: HashMap<String, String>,
    vocabulary: HashSet<String>,
}

impl TweetTable {
    pub fn new(corpus: &Corpus, registry: &AccountRegistry, index: &EntityIndex, mentions: &TweetMentions) -> Self {
        let empty = Vec::new();
        let rows: Vec<TweetRow> = corpus
            .tweets()
            .iter()
            .map(|t| {
                let found = mentions.get(&t.id).unwrap_or(&empty);
                let tokens = tokenize(&t.text);
                let mut words: HashSet<String> = join_entities(&tokens, found).into_iter().collect();
                words.extend(tokens);
                TweetRow {
                    id: t.id.clone(),
                    account_id: t.account_id.clone(),
                    timestamp: t.timestamp,
                    mentions: found.iter().map(|m| (m.name.clone(), m.kind)).collect(),
                    words,
                }
            })
            .collect();
        let vocabulary = rows.iter().flat_map(|r| r.words.iter().cloned()).collect();
        let entities = index.pairs().map(|(e, _, _)| (e.to_lowercase(), e.to_string())).collect();
        let accounts = registry.accounts().iter().map(|a| a.id.clone()).collect();
        TweetTable { rows, accounts, entities, vocabulary }
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn rows(&self) -> &[TweetRow] {
        &self.rows
    }

    pub fn row(&self, i: usize) -> &TweetRow {
        &self.rows[i]
    }

    /// Canonical spelling of an entity name, matched case-insensitively.
    pub fn resolve_entity(&self, name: &str) -> Option<&str> {
        self.entities.get(&name.trim().to_lowercase()).map(String::as_str)
    }

    fn resolve(&self, state: &FilterState) -> Result<Resolved, FilterError> {
        let account = match &state.account {
            Some(a) => {
                let id = account_id(a);
                if !self.accounts.contains(&id) {
                    return Err(FilterError::UnknownAccount(a.clone()));
                }
                Some(id)
            }
            None => None,
        };
        let entity = |e: &str| {
            self.resolve_entity(e)
                .map(str::to_string)
                .ok_or_else(|| FilterError::UnknownEntity(e.to_string()))
        };
        let entities = state.entities.iter().map(|e| entity(e)).collect::<Result<BTreeSet<_>, _>>()?;
        let word_pair = match &state.word_pair {
            Some((e, w)) => {
                let canonical = entity(e)?;
                let word = w.trim().to_lowercase();
                if !self.vocabulary.contains(&word) {
                    return Err(FilterError::UnknownWord(w.clone()));
                }
                Some((canonical, word))
            }
            None => None,
        };
        Ok(Resolved { account, entities, time: state.time, word_pair })
    }

    /// Row indices (ascending) of tweets matching every member of the state.
    pub fn apply_filters(&self, state: &FilterState) -> Result<Vec<usize>, FilterError> {
        let r = self.resolve(state)?;
        Ok((0..self.rows.len()).filter(|&i| r.matches(&self.rows[i])).collect())
    }

    /// Entities of one type ranked by mention count within the filtered
    /// tweets, ties by name.
    pub fn top_entities(&self, state: &FilterState, kind: EntityType, k: usize) -> Result<Vec<(String, u64)>, FilterError> {
        let mut counts: BTreeMap<&str, u64> = BTreeMap::new();
        for i in self.apply_filters(state)? {
            for (name, t) in &self.rows[i].mentions {
                if *t == kind {
                    *counts.entry(name).or_default() += 1;
                }
            }
        }
        Ok(rank_counts(counts.into_iter().map(|(n, c)| (n.to_string(), c)), k))
    }
}

struct Resolved {
    account: Option<String>,
    entities: BTreeSet<String>,
    time: Option<TimeRange>,
    word_pair: Option<(String, String)>,
}

impl Resolved {
    fn mentions(row: &TweetRow, entity: &str) -> bool {
        row.mentions.iter().any(|(n, _)| n == entity)
    }

    fn matches(&self, row: &TweetRow) -> bool {
        if self.account.as_ref().is_some_and(|a| *a != row.account_id) {
            return false;
        }
        if !self.entities.iter().all(|e| Self::mentions(row, e)) {
            return false;
        }
        if self.time.is_some_and(|t| !t.contains(row.timestamp)) {
            return false;
        }
        match &self.word_pair {
            Some((e, w)) => (Self::mentions(row, e) || row.words.contains(&entity_token(e))) && row.words.contains(w),
            None => true,
        }
    }
}
