//! Account registry, tweet corpus ingestion, tokenization and daily counts.
//!
//! Account lists are tab-separated (`handle, label, description, location`);
//! tweet corpora are JSON lines. Every tweet is bound to a registered account
//! at load time. Mentions and retweet targets are kept as lowercase handles
//! and may point outside the registry.

use std::collections::{BTreeMap, HashMap};
use std::fmt;
use std::fs;
use std::io::{BufRead, BufReader};
use std::path::{Path, PathBuf};
use std::str::FromStr;

use chrono::{DateTime, Duration, NaiveDate, Utc};
use serde::{Deserialize, Serialize};
use thiserror::Error;
use unicode_segmentation::UnicodeSegmentation;

#[derive(Debug, Error)]
pub enum CorpusError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}:{line}: duplicate handle `{handle}`")]
    DuplicateHandle {
        path: PathBuf,
        line: usize,
        handle: String,
    },
    #[error("{path}:{line}: unknown label `{token}` (expected `real` or `suspicious`)")]
    UnknownLabel {
        path: PathBuf,
        line: usize,
        token: String,
    },
    #[error("{path}:{line}: malformed record: {reason}")]
    Malformed {
        path: PathBuf,
        line: usize,
        reason: String,
    },
    #[error("{path}:{line}: tweet references unregistered account `{handle}`")]
    UnknownAccount {
        path: PathBuf,
        line: usize,
        handle: String,
    },
    #[error("account registry is empty")]
    EmptyRegistry,
    #[error("unknown account `{0}`")]
    NoSuchAccount(String),
    #[error("invalid time range: start {start} is not before end {end}")]
    InvalidRange {
        start: DateTime<Utc>,
        end: DateTime<Utc>,
    },
}

pub type Result<T, E = CorpusError> = std::result::Result<T, E>;

/// Source label of a news account.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AccountLabel {
    Real,
    Suspicious,
}

impl AccountLabel {
    pub const ALL: [AccountLabel; 2] = [AccountLabel::Real, AccountLabel::Suspicious];

    pub fn as_str(self) -> &'static str {
        match self {
            AccountLabel::Real => "real",
            AccountLabel::Suspicious => "suspicious",
        }
    }
}

impl fmt::Display for AccountLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for AccountLabel {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s.trim() {
            "real" => Ok(AccountLabel::Real),
            "suspicious" => Ok(AccountLabel::Suspicious),
            other => Err(other.to_string()),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Account {
    /// Lowercased handle; stable across loads of the same list.
    pub id: String,
    /// Handle as written in the account list.
    pub handle: String,
    pub label: AccountLabel,
    pub description: String,
    pub location: Option<String>,
}

/// Normalizes a handle (with or without a leading `@`) to an account id.
pub fn account_id(handle: &str) -> String {
    handle.trim().trim_start_matches('@').to_lowercase()
}

/// Accounts in list order, addressable by case-insensitive handle.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(from = "Vec<Account>", into = "Vec<Account>")]
pub struct AccountRegistry {
    accounts: Vec<Account>,
    by_id: HashMap<String, usize>,
}

impl AccountRegistry {
    /// Builds a registry, rejecting duplicate handles (case-insensitive).
    pub fn from_accounts(accounts: Vec<Account>) -> std::result::Result<Self, String> {
        let mut by_id = HashMap::with_capacity(accounts.len());
        for (i, a) in accounts.iter().enumerate() {
            if by_id.insert(a.id.clone(), i).is_some() {
                return Err(a.handle.clone());
            }
        }
        Ok(Self { accounts, by_id })
    }

    pub fn len(&self) -> usize {
        self.accounts.len()
    }

    pub fn is_empty(&self) -> bool {
        self.accounts.is_empty()
    }

    pub fn accounts(&self) -> &[Account] {
        &self.accounts
    }

    /// Looks up by id or handle, ignoring case and a leading `@`.
    pub fn get(&self, handle: &str) -> Option<&Account> {
        self.by_id.get(&account_id(handle)).map(|&i| &self.accounts[i])
    }

    pub fn contains(&self, handle: &str) -> bool {
        self.by_id.contains_key(&account_id(handle))
    }

    pub fn count_label(&self, label: AccountLabel) -> usize {
        self.accounts.iter().filter(|a| a.label == label).count()
    }

    pub fn label_of(&self, handle: &str) -> Option<AccountLabel> {
        self.get(handle).map(|a| a.label)
    }
}

impl From<Vec<Account>> for AccountRegistry {
    fn from(accounts: Vec<Account>) -> Self {
        // Serialized registries were unique when written; keep the first on conflict.
        let mut by_id = HashMap::with_capacity(accounts.len());
        for (i, a) in accounts.iter().enumerate() {
            by_id.entry(a.id.clone()).or_insert(i);
        }
        Self { accounts, by_id }
    }
}

impl From<AccountRegistry> for Vec<Account> {
    fn from(r: AccountRegistry) -> Self {
        r.accounts
    }
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> CorpusError + '_ {
    move |source| CorpusError::Io {
        path: path.to_path_buf(),
        source,
    }
}

/// Reads a tab-separated account list.
pub fn load_accounts(path: &Path) -> Result<AccountRegistry> {
    let text = fs::read_to_string(path).map_err(io_err(path))?;
    let mut accounts: Vec<Account> = Vec::new();
    let mut seen: HashMap<String, usize> = HashMap::new();
    for (i, line) in text.lines().enumerate() {
        let lineno = i + 1;
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split('\t').collect();
        if fields.len() < 2 || fields.len() > 4 {
            return Err(CorpusError::Malformed {
                path: path.to_path_buf(),
                line: lineno,
                reason: format!("expected 2 to 4 tab-separated fields, found {}", fields.len()),
            });
        }
        let handle = fields[0].trim().trim_start_matches('@');
        if handle.is_empty() {
            return Err(CorpusError::Malformed {
                path: path.to_path_buf(),
                line: lineno,
                reason: "empty handle".into(),
            });
        }
        let label = fields[1]
            .parse::<AccountLabel>()
            .map_err(|token| CorpusError::UnknownLabel {
                path: path.to_path_buf(),
                line: lineno,
                token,
            })?;
        let id = account_id(handle);
        if seen.insert(id.clone(), lineno).is_some() {
            return Err(CorpusError::DuplicateHandle {
                path: path.to_path_buf(),
                line: lineno,
                handle: handle.to_string(),
            });
        }
        let location = fields
            .get(3)
            .map(|s| s.trim())
            .filter(|s| !s.is_empty())
            .map(str::to_string);
        accounts.push(Account {
            id,
            handle: handle.to_string(),
            label,
            description: fields.get(2).map(|s| s.trim().to_string()).unwrap_or_default(),
            location,
        });
    }
    Ok(AccountRegistry::from_accounts(accounts).expect("duplicates rejected above"))
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Tweet {
    pub id: String,
    pub account_id: String,
    pub timestamp: DateTime<Utc>,
    pub text: String,
    /// Lowercase handles without `@`.
    pub mentions: Vec<String>,
    pub retweet_of: Option<String>,
    pub image_ids: Vec<String>,
}

/// One line of the tweet corpus file.
#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct TweetRecord {
    id: String,
    account: String,
    created_at: String,
    text: String,
    mentions: Vec<String>,
    retweet_of: Option<String>,
    images: Vec<String>,
}

/// What to do with records that cannot be bound or parsed.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum IngestPolicy {
    /// Skip the record and count a warning.
    #[default]
    Skip,
    /// Fail the whole load.
    Strict,
}

impl IngestPolicy {
    pub fn from_strict(strict: bool) -> Self {
        if strict {
            IngestPolicy::Strict
        } else {
            IngestPolicy::Skip
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct Corpus {
    tweets: Vec<Tweet>,
    by_id: HashMap<String, usize>,
    warnings: usize,
}

impl Corpus {
    /// Builds a corpus from already-validated tweets. Later duplicates of an id are dropped.
    pub fn from_tweets(tweets: Vec<Tweet>) -> Self {
        let mut kept = Vec::with_capacity(tweets.len());
        let mut by_id = HashMap::with_capacity(tweets.len());
        for t in tweets {
            if by_id.contains_key(&t.id) {
                continue;
            }
            by_id.insert(t.id.clone(), kept.len());
            kept.push(t);
        }
        Self {
            tweets: kept,
            by_id,
            warnings: 0,
        }
    }

    pub fn with_warnings(mut self, warnings: usize) -> Self {
        self.warnings = warnings;
        self
    }

    pub fn tweets(&self) -> &[Tweet] {
        &self.tweets
    }

    pub fn len(&self) -> usize {
        self.tweets.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tweets.is_empty()
    }

    pub fn get(&self, id: &str) -> Option<&Tweet> {
        self.by_id.get(id).map(|&i| &self.tweets[i])
    }

    /// Number of records skipped during load.
    pub fn warnings(&self) -> usize {
        self.warnings
    }

    pub fn count_for(&self, account_id: &str) -> usize {
        self.tweets.iter().filter(|t| t.account_id == account_id).count()
    }

    pub fn counts_by_account(&self) -> BTreeMap<&str, usize> {
        let mut out = BTreeMap::new();
        for t in &self.tweets {
            *out.entry(t.account_id.as_str()).or_insert(0) += 1;
        }
        out
    }

    /// Smallest half-open range covering every tweet, or `None` when empty.
    pub fn span(&self) -> Option<TimeRange> {
        let start = self.tweets.iter().map(|t| t.timestamp).min()?;
        let end = self.tweets.iter().map(|t| t.timestamp).max()?;
        TimeRange::new(start, end + Duration::seconds(1)).ok()
    }
}

/// Reads a JSON-lines tweet corpus and binds each record to `registry`.
pub fn load_tweets(path: &Path, registry: &AccountRegistry, policy: IngestPolicy) -> Result<Corpus> {
    if registry.is_empty() {
        return Err(CorpusError::EmptyRegistry);
    }
    let file = fs::File::open(path).map_err(io_err(path))?;
    let reader = BufReader::new(file);
    let mut tweets = Vec::new();
    let mut by_id = HashMap::new();
    let mut warnings = 0usize;

    for (i, line) in reader.lines().enumerate() {
        let lineno = i + 1;
        let line = line.map_err(io_err(path))?;
        if line.trim().is_empty() {
            continue;
        }
        let parsed = parse_record(&line).and_then(|rec| {
            let account = registry.get(&rec.account).ok_or_else(|| {
                RecordError::UnknownAccount(rec.account.clone())
            })?;
            if by_id.contains_key(&rec.id) {
                return Err(RecordError::Malformed(format!("duplicate tweet id `{}`", rec.id)));
            }
            let timestamp = DateTime::parse_from_rfc3339(rec.created_at.trim())
                .map_err(|e| RecordError::Malformed(format!("bad created_at `{}`: {e}", rec.created_at)))?
                .with_timezone(&Utc);
            Ok(Tweet {
                id: rec.id,
                account_id: account.id.clone(),
                timestamp,
                text: rec.text,
                mentions: rec
                    .mentions
                    .iter()
                    .map(|h| account_id(h))
                    .filter(|h| !h.is_empty())
                    .collect(),
                retweet_of: rec.retweet_of.map(|h| account_id(&h)).filter(|h| !h.is_empty()),
                image_ids: rec.images,
            })
        });
        match parsed {
            Ok(tweet) => {
                by_id.insert(tweet.id.clone(), tweets.len());
                tweets.push(tweet);
            }
            Err(e) if policy == IngestPolicy::Skip => {
                tracing::warn!("{}:{lineno}: skipping record: {e}", path.display());
                warnings += 1;
            }
            Err(RecordError::UnknownAccount(handle)) => {
                return Err(CorpusError::UnknownAccount {
                    path: path.to_path_buf(),
                    line: lineno,
                    handle,
                })
            }
            Err(RecordError::Malformed(reason)) => {
                return Err(CorpusError::Malformed {
                    path: path.to_path_buf(),
                    line: lineno,
                    reason,
                })
            }
        }
    }
    Ok(Corpus {
        tweets,
        by_id,
        warnings,
    })
}

#[derive(Debug)]
enum RecordError {
    UnknownAccount(String),
    Malformed(String),
}

impl fmt::Display for RecordError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            RecordError::UnknownAccount(h) => write!(f, "unregistered account `{h}`"),
            RecordError::Malformed(r) => f.write_str(r),
        }
    }
}

fn parse_record(line: &str) -> std::result::Result<TweetRecord, RecordError> {
    serde_json::from_str(line).map_err(|e| RecordError::Malformed(e.to_string()))
}

fn is_url(chunk: &str) -> bool {
    let lower = chunk.to_ascii_lowercase();
    lower.starts_with("http://") || lower.starts_with("https://") || lower.starts_with("www.")
}

fn is_handle_char(c: char) -> bool {
    c.is_alphanumeric() || c == '_'
}

/// Lowercase word tokens with URLs removed and `@handle` / `#tag` kept whole.
pub fn tokenize(text: &str) -> Vec<String> {
    let mut out = Vec::new();
    for chunk in text.split_whitespace() {
        if is_url(chunk) {
            continue;
        }
        let mut rest = chunk;
        if let Some(prefix) = chunk.chars().next().filter(|c| *c == '@' || *c == '#') {
            let body = &chunk[1..];
            let len: usize = body
                .chars()
                .take_while(|c| is_handle_char(*c))
                .map(char::len_utf8)
                .sum();
            if len > 0 {
                out.push(format!("{prefix}{}", body[..len].to_lowercase()));
                rest = &body[len..];
            }
        }
        out.extend(rest.unicode_words().map(str::to_lowercase).filter(|w| !w.is_empty()));
    }
    out
}

/// Half-open UTC interval `[start, end)`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct TimeRange {
    start: DateTime<Utc>,
    end: DateTime<Utc>,
}

impl TimeRange {
    pub fn new(start: DateTime<Utc>, end: DateTime<Utc>) -> Result<Self> {
        if start < end {
            Ok(Self { start, end })
        } else {
            Err(CorpusError::InvalidRange { start, end })
        }
    }

    pub fn start(&self) -> DateTime<Utc> {
        self.start
    }

    pub fn end(&self) -> DateTime<Utc> {
        self.end
    }

    pub fn contains(&self, t: DateTime<Utc>) -> bool {
        self.start <= t && t < self.end
    }

    /// Calendar days touched by the range, first to last.
    pub fn days(&self) -> Vec<NaiveDate> {
        let first = self.start.date_naive();
        let last = (self.end - Duration::nanoseconds(1)).date_naive();
        first.iter_days().take_while(|d| *d <= last).collect()
    }
}

/// Per-day tweet counts for one account, zero-filled over every day of `range`.
pub fn daily_counts(
    corpus: &Corpus,
    registry: &AccountRegistry,
    account: &str,
    range: &TimeRange,
) -> Result<Vec<(NaiveDate, usize)>> {
    let account = registry
        .get(account)
        .ok_or_else(|| CorpusError::NoSuchAccount(account.to_string()))?;
    let mut series: BTreeMap<NaiveDate, usize> = range.days().into_iter().map(|d| (d, 0)).collect();
    for t in corpus.tweets() {
        if t.account_id == account.id && range.contains(t.timestamp) {
            *series.entry(t.timestamp.date_naive()).or_insert(0) += 1;
        }
    }
    Ok(series.into_iter().collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Write;

    fn ts(s: &str) -> DateTime<Utc> {
        DateTime::parse_from_rfc3339(s).unwrap().with_timezone(&Utc)
    }

    fn write(dir: &Path, name: &str, body: &str) -> PathBuf {
        let p = dir.join(name);
        fs::File::create(&p).unwrap().write_all(body.as_bytes()).unwrap();
        p
    }

    fn registry() -> AccountRegistry {
        let dir = tempfile::tempdir().unwrap();
        let p = write(
            dir.path(),
            "accounts.tsv",
            "nytimes\treal\tNews\tNew York\nRumorMill\tsuspicious\tHot takes\t\n",
        );
        load_accounts(&p).unwrap()
    }

    #[test]
    fn tokenize_sentence() {
        assert_eq!(
            tokenize("GOP fails to back Dems' weapons ban proposal"),
            ["gop", "fails", "to", "back", "dems", "weapons", "ban", "proposal"]
        );
    }

    #[test]
    fn tokenize_urls_tags_mentions() {
        assert_eq!(tokenize("see https://t.co/x #savetps @nytimes"), ["see", "#savetps", "@nytimes"]);
        assert_eq!(tokenize("@NYTimes: wow!"), ["@nytimes", "wow"]);
        assert_eq!(tokenize("jeff_flake"), ["jeff_flake"]);
        assert_eq!(tokenize("# lone"), ["lone"]);
        assert!(tokenize("").is_empty());
        assert!(tokenize("  ...  !!! ").is_empty());
    }

    #[test]
    fn accounts_load_and_count() {
        let reg = registry();
        assert_eq!(reg.len(), 2);
        assert_eq!(reg.count_label(AccountLabel::Real), 1);
        assert_eq!(reg.count_label(AccountLabel::Suspicious), 1);
        let rm = reg.get("@rumormill").unwrap();
        assert_eq!(rm.handle, "RumorMill");
        assert_eq!(rm.location, None);
        assert_eq!(reg.get("NYTIMES").unwrap().location.as_deref(), Some("New York"));
    }

    #[test]
    fn accounts_errors() {
        let dir = tempfile::tempdir().unwrap();
        let dup = write(dir.path(), "dup.tsv", "a\treal\t\t\nA\tsuspicious\t\t\n");
        assert!(matches!(load_accounts(&dup), Err(CorpusError::DuplicateHandle { line: 2, .. })));
        let bad = write(dir.path(), "bad.tsv", "a\tfake\t\t\n");
        assert!(matches!(load_accounts(&bad), Err(CorpusError::UnknownLabel { .. })));
        assert!(matches!(
            load_accounts(&dir.path().join("missing.tsv")),
            Err(CorpusError::Io { .. })
        ));
        let empty = write(dir.path(), "empty.tsv", "");
        assert!(load_accounts(&empty).unwrap().is_empty());
    }

    #[test]
    fn tweets_skip_and_strict() {
        let reg = registry();
        let dir = tempfile::tempdir().unwrap();
        let p = write(
            dir.path(),
            "t.jsonl",
            r#"{"id":"1","account":"ghost","created_at":"2017-11-01T00:00:00Z","text":"x","mentions":[],"retweet_of":null,"images":[]}
"#,
        );
        let c = load_tweets(&p, &reg, IngestPolicy::Skip).unwrap();
        assert_eq!(c.len(), 0);
        assert_eq!(c.warnings(), 1);
        assert!(matches!(
            load_tweets(&p, &reg, IngestPolicy::Strict),
            Err(CorpusError::UnknownAccount { line: 1, .. })
        ));

        let bad = write(dir.path(), "bad.jsonl", "{\"id\":\"1\"}\n");
        assert_eq!(load_tweets(&bad, &reg, IngestPolicy::Skip).unwrap().warnings(), 1);
        assert!(matches!(
            load_tweets(&bad, &reg, IngestPolicy::Strict),
            Err(CorpusError::Malformed { .. })
        ));

        let empty = write(dir.path(), "e.jsonl", "");
        assert!(load_tweets(&empty, &reg, IngestPolicy::Strict).unwrap().is_empty());
        assert!(matches!(
            load_tweets(&empty, &AccountRegistry::default(), IngestPolicy::Skip),
            Err(CorpusError::EmptyRegistry)
        ));
    }

    #[test]
    fn tweets_normalize_handles() {
        let reg = registry();
        let dir = tempfile::tempdir().unwrap();
        let p = write(
            dir.path(),
            "t.jsonl",
            r#"{"id":"1","account":"@NYTimes","created_at":"2017-11-01T10:00:00+02:00","text":"hi","mentions":["@RumorMill","other"],"retweet_of":"RumorMill","images":["i1"]}
"#,
        );
        let c = load_tweets(&p, &reg, IngestPolicy::Strict).unwrap();
        let t = c.get("1").unwrap();
        assert_eq!(t.account_id, "nytimes");
        assert_eq!(t.timestamp, ts("2017-11-01T08:00:00Z"));
        assert_eq!(t.mentions, ["rumormill", "other"]);
        assert_eq!(t.retweet_of.as_deref(), Some("rumormill"));
        assert_eq!(c.count_for("nytimes"), 1);
    }

    fn tweet(id: &str, account: &str, at: &str) -> Tweet {
        Tweet {
            id: id.into(),
            account_id: account.into(),
            timestamp: ts(at),
            text: String::new(),
            mentions: vec![],
            retweet_of: None,
            image_ids: vec![],
        }
    }

    #[test]
    fn daily_counts_zero_fill() {
        let reg = registry();
        let corpus = Corpus::from_tweets(vec![
            tweet("1", "nytimes", "2017-11-01T01:00:00Z"),
            tweet("2", "nytimes", "2017-11-01T12:00:00Z"),
            tweet("3", "nytimes", "2017-11-01T23:59:59Z"),
            tweet("4", "rumormill", "2017-11-02T05:00:00Z"),
        ]);
        let range = TimeRange::new(ts("2017-11-01T00:00:00Z"), ts("2017-11-03T00:00:00Z")).unwrap();
        let series = daily_counts(&corpus, &reg, "nytimes", &range).unwrap();
        let d1 = NaiveDate::from_ymd_opt(2017, 11, 1).unwrap();
        let d2 = NaiveDate::from_ymd_opt(2017, 11, 2).unwrap();
        assert_eq!(series, vec![(d1, 3), (d2, 0)]);

        let empty = daily_counts(&Corpus::default(), &reg, "nytimes", &range).unwrap();
        assert!(empty.iter().all(|(_, c)| *c == 0));
        assert_eq!(empty.len(), 2);

        assert!(matches!(
            daily_counts(&corpus, &reg, "nobody", &range),
            Err(CorpusError::NoSuchAccount(_))
        ));
    }

    #[test]
    fn time_range_rejects_empty() {
        let t = ts("2017-11-01T00:00:00Z");
        assert!(TimeRange::new(t, t).is_err());
    }

    proptest::proptest! {
        #[test]
        fn tokens_lowercase_nonempty(s in "\\PC{0,80}") {
            for tok in tokenize(&s) {
                proptest::prop_assert!(!tok.is_empty());
                proptest::prop_assert_eq!(tok.to_lowercase(), tok);
            }
        }

        #[test]
        fn daily_counts_conserve(offsets in proptest::collection::vec(0i64..(5 * 86_400), 0..60)) {
            let reg = registry();
            let base = ts("2017-11-01T00:00:00Z");
            let tweets = offsets
                .iter()
                .enumerate()
                .map(|(i, o)| Tweet { timestamp: base + Duration::seconds(*o), ..tweet(&i.to_string(), "nytimes", "2017-11-01T00:00:00Z") })
                .collect();
            let corpus = Corpus::from_tweets(tweets);
            let range = TimeRange::new(base, base + Duration::days(5)).unwrap();
            let series = daily_counts(&corpus, &reg, "nytimes", &range).unwrap();
            proptest::prop_assert_eq!(series.len(), 5);
            proptest::prop_assert_eq!(series.iter().map(|(_, c)| c).sum::<usize>(), corpus.count_for("nytimes"));
        }
    }
}
