//! Deterministic synthetic dataset with known ground truth: 12 accounts split
//! across two entity topics, label-dependent language, partition-specific
//! co-occurring words and image vectors with one cross-partition
//! near-duplicate pair.

use std::fmt::Write as _;
use std::fs;
use std::io;
use std::path::{Path, PathBuf};

use chrono::{DateTime, Duration, TimeZone, Utc};
use rand::seq::IndexedRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::imagesim::IMAGE_DIM;
use crate::lexicon::Feature;

#[derive(Debug, Error)]
#[error("cannot write fixture file {path}: {source}")]
pub struct FixtureError {
    pub path: PathBuf,
    #[source]
    pub source: io::Error,
}

pub const TWEET_COUNT: usize = 2000;
pub const DAYS: i64 = 30;

/// (handle, label, topic)
const ACCOUNTS: [(&str, &str, usize); 12] = [
    ("dailyledger", "real", 0),
    ("civicpost", "real", 0),
    ("capitolreport", "real", 0),
    ("globedesk", "real", 1),
    ("worldbrief", "real", 1),
    ("harborherald", "real", 1),
    ("truthpatriot", "suspicious", 0),
    ("wakeupwire", "suspicious", 0),
    ("deepstatewatch", "suspicious", 0),
    ("borderalarm", "suspicious", 1),
    ("globalexpose", "suspicious", 1),
    ("realfreedomnow", "suspicious", 1),
];

pub const ANGER_ACCOUNT: &str = "borderalarm";
pub const DOMINANT_ENTITY: &str = "gop";
pub const REAL_COOCCURRENCE: &str = "reform";
pub const SUSPICIOUS_COOCCURRENCE: &str = "traitors";

/// (canonical name, type, surface forms, topic, sampling weight)
const ENTITIES: [(&str, &str, &str, usize, u32); 16] = [
    ("gop", "organization", "gop|gops|republican party", 0, 12),
    ("congress", "organization", "congress", 0, 4),
    ("senate", "organization", "senate", 0, 4),
    ("democrats", "organization", "democrats|dems", 0, 3),
    ("jeff flake", "person", "jeff flake|flake", 0, 3),
    ("mitch mcconnell", "person", "mitch mcconnell|mcconnell", 0, 2),
    ("washington", "place", "washington|washington dc", 0, 3),
    ("alabama", "place", "alabama", 0, 2),
    ("north korea", "place", "north korea|dprk", 1, 6),
    ("kim jong un", "person", "kim jong un", 1, 4),
    ("vladimir putin", "person", "vladimir putin|putin", 1, 3),
    ("russia", "place", "russia", 1, 4),
    ("china", "place", "china", 1, 3),
    ("beijing", "place", "beijing", 1, 2),
    ("united nations", "organization", "united nations", 1, 3),
    ("nato", "organization", "nato", 1, 2),
];

const TOPIC_WORDS: [&[&str]; 2] = [
    &["healthcare", "hearing", "campaign", "election", "committee", "law"],
    &["talks", "missile", "sanctions", "summit", "border", "trade", "embassy", "treaty", "nuclear", "envoy"],
];

const GOP_FRAME: &[&str] = &["bill", "vote", "tax", "budget"];

const COMMON_WORDS: &[&str] = &[
    "the", "a", "of", "to", "in", "on", "for", "with", "after", "new", "says", "report", "today", "over", "as", "by",
];

const LEXICONS: [(Feature, [&str; 10]); 6] = [
    (Feature::Fairness, ["fair", "fairness", "equal", "justice", "rights", "honest", "balanced", "impartial", "equity", "due process"]),
    (Feature::Loyalty, ["loyal", "allegiance", "solidarity", "unity", "community", "nation", "together", "ally", "allies", "stand by"]),
    (Feature::Subjectivity, ["believe", "think", "feel", "seems", "perhaps", "apparently", "arguably", "opinion", "suggests", "likely"]),
    (Feature::Fear, ["threat", "danger", "afraid", "panic", "terror", "crisis", "alarm", "scared", "risk", "under attack"]),
    (Feature::Anger, ["outrage", "furious", "rage", "angry", "disgusting", "hate", "fury", "fed up", "livid", "slam"]),
    (Feature::Negativity, ["bad", "worst", "corrupt", "fail", "fails", "disaster", "lies", "evil", "sad", "terrible"]),
];

const UNREGISTERED: [&str; 2] = ["potus", "whitehouse"];

pub const IMAGE_COUNT: usize = 40;

/// Ground truth planted by the generator.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct FixtureTruth {
    pub seed: u64,
    /// Account ids per planted topic.
    pub topic_accounts: [Vec<String>; 2],
    /// Canonical entity names per planted topic.
    pub topic_entities: [Vec<String>; 2],
    pub anger_account: String,
    pub dominant_entity: String,
    pub real_cooccurrence: String,
    pub suspicious_cooccurrence: String,
    /// (real image, suspicious image)
    pub near_duplicate_images: (String, String),
    pub tweet_count: usize,
}

#[derive(Serialize)]
struct TweetOut {
    id: String,
    account: String,
    created_at: String,
    text: String,
    mentions: Vec<String>,
    retweet_of: Option<String>,
    images: Vec<String>,
}

struct Draft {
    account: usize,
    timestamp: DateTime<Utc>,
    text: String,
    mentions: Vec<String>,
    retweet_of: Option<String>,
    images: Vec<String>,
}

pub fn start_time() -> DateTime<Utc> {
    Utc.with_ymd_and_hms(2017, 10, 25, 0, 0, 0).unwrap()
}

fn pick_weighted<'a>(rng: &mut ChaCha8Rng, items: &[&'a (&'a str, &'a str, &'a str, usize, u32)]) -> &'a (&'a str, &'a str, &'a str, usize, u32) {
    let total: u32 = items.iter().map(|e| e.4).sum();
    let mut x = rng.random_range(0..total);
    for e in items {
        if x < e.4 {
            return e;
        }
        x -= e.4;
    }
    unreachable!("weights sum to total")
}

fn draft_tweet(rng: &mut ChaCha8Rng, account: usize) -> Draft {
    let (_, label, topic) = ACCOUNTS[account];
    let real = label == "real";
    let mut words: Vec<String> = Vec::new();
    let push = |w: &str, words: &mut Vec<String>| words.push(w.to_string());

    let entity_topic = if rng.random_bool(0.04) { 1 - topic } else { topic };
    let pool: Vec<_> = ENTITIES.iter().filter(|e| e.3 == entity_topic).collect();
    let mut mentioned_gop = false;
    for _ in 0..rng.random_range(1..3) {
        let e = pick_weighted(rng, &pool);
        let forms: Vec<&str> = e.2.split('|').collect();
        let form = if rng.random_bool(0.8) { forms[0] } else { forms.choose(rng).unwrap() };
        push(form, &mut words);
        mentioned_gop |= e.0 == DOMINANT_ENTITY;
    }

    for _ in 0..rng.random_range(2..5) {
        push(COMMON_WORDS.choose(rng).unwrap(), &mut words);
    }
    // Tweets about the dominant entity share their own framing words, and
    // each partition adds its own word to that frame.
    if mentioned_gop {
        let own = if real { REAL_COOCCURRENCE } else { SUSPICIOUS_COOCCURRENCE };
        for _ in 0..rng.random_range(2..4) {
            let i = rng.random_range(0..=GOP_FRAME.len());
            push(GOP_FRAME.get(i).copied().unwrap_or(own), &mut words);
        }
    } else {
        for _ in 0..rng.random_range(1..3) {
            push(TOPIC_WORDS[topic].choose(rng).unwrap(), &mut words);
        }
    }

    let features: &[Feature] = if real {
        &[Feature::Fairness, Feature::Loyalty, Feature::Subjectivity]
    } else {
        &[Feature::Fear, Feature::Anger, Feature::Negativity]
    };
    for f in features {
        if rng.random_bool(0.35) {
            push(LEXICONS[*f as usize].1.choose(rng).unwrap(), &mut words);
        }
    }
    if ACCOUNTS[account].0 == ANGER_ACCOUNT {
        for _ in 0..2 {
            push(LEXICONS[Feature::Anger as usize].1.choose(rng).unwrap(), &mut words);
        }
    }

    shuffle(rng, &mut words);

    let mut mentions = Vec::new();
    let mut retweet_of = None;
    let same_topic: Vec<usize> = (0..ACCOUNTS.len()).filter(|&j| j != account && ACCOUNTS[j].2 == topic).collect();
    if rng.random_bool(0.12) {
        let target = ACCOUNTS[*same_topic.choose(rng).unwrap()].0;
        retweet_of = Some(target.to_string());
    }
    if rng.random_bool(0.2) {
        let target = if rng.random_bool(0.85) {
            ACCOUNTS[*same_topic.choose(rng).unwrap()].0
        } else {
            ACCOUNTS[rng.random_range(0..ACCOUNTS.len())].0
        };
        if target != ACCOUNTS[account].0 {
            mentions.push(target.to_string());
        }
    }
    if rng.random_bool(0.04) {
        mentions.push(UNREGISTERED.choose(rng).unwrap().to_string());
    }

    let mut text = String::new();
    if let Some(rt) = &retweet_of {
        let _ = write!(text, "RT @{rt}: ");
    }
    text.push_str(&words.join(" "));
    for m in &mentions {
        let _ = write!(text, " @{m}");
    }
    if rng.random_bool(0.3) {
        let _ = write!(text, " https://t.co/{:08x}", rng.random::<u32>());
    }

    let offset = rng.random_range(0..DAYS * 86_400);
    Draft {
        account,
        timestamp: start_time() + Duration::seconds(offset),
        text,
        mentions,
        retweet_of,
        images: Vec::new(),
    }
}

fn shuffle<T>(rng: &mut ChaCha8Rng, v: &mut [T]) {
    for i in (1..v.len()).rev() {
        let j = rng.random_range(0..=i);
        v.swap(i, j);
    }
}

fn image_vectors(rng: &mut ChaCha8Rng) -> Vec<Vec<f32>> {
    let mut vectors: Vec<Vec<f32>> = (0..IMAGE_COUNT)
        .map(|_| (0..IMAGE_DIM).map(|_| rng.random::<f32>()).collect())
        .collect();
    // image 7 (real) and image 27 (suspicious) are near-duplicates
    let base = vectors[7].clone();
    vectors[27] = base.iter().map(|&x| x + (rng.random::<f32>() - 0.5) * 0.02).collect();
    vectors
}

fn image_id(i: usize) -> String {
    format!("img{:03}", i + 1)
}

fn svg(i: usize, v: &[f32]) -> String {
    let shade = |x: f32| (x * 255.0) as u8;
    format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"64\" height=\"64\"><rect width=\"64\" height=\"64\" fill=\"#{:02x}{:02x}{:02x}\"/><text x=\"8\" y=\"36\" font-size=\"12\">{}</text></svg>\n",
        shade(v[0]),
        shade(v[1]),
        shade(v[2]),
        image_id(i)
    )
}

fn write(path: &Path, body: impl AsRef<[u8]>) -> Result<(), FixtureError> {
    fs::write(path, body).map_err(|source| FixtureError { path: path.to_path_buf(), source })
}

/// Writes the dataset and a `pipeline.conf` pointing at it into `dir`.
/// Output files are byte-identical for a given seed.
pub fn generate_fixture(seed: u64, dir: &Path) -> Result<FixtureTruth, FixtureError> {
    let mkdir = |p: &Path| fs::create_dir_all(p).map_err(|source| FixtureError { path: p.to_path_buf(), source });
    mkdir(dir)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);

    let mut accounts = String::new();
    for (handle, label, topic) in ACCOUNTS {
        let beat = if topic == 0 { "US politics" } else { "world affairs" };
        let location = if topic == 0 { "Washington" } else { "New York" };
        let _ = writeln!(accounts, "{handle}\t{label}\t{handle} covers {beat}\t{location}");
    }
    write(&dir.join("accounts.tsv"), accounts)?;

    let mut gazetteer = String::from("# canonical name\ttype\tsurface forms\n");
    for (name, kind, forms, _, _) in ENTITIES {
        let _ = writeln!(gazetteer, "{name}\t{kind}\t{forms}");
    }
    write(&dir.join("gazetteer.tsv"), gazetteer)?;
    write(&dir.join("blocklist.txt"), "# canonical names or surface forms to ignore\n")?;

    let lex_dir = dir.join("lexicons");
    mkdir(&lex_dir)?;
    for (feature, terms) in LEXICONS {
        let body = format!("# {feature}\n{}\n", terms.join("\n"));
        write(&lex_dir.join(format!("{feature}.txt")), body)?;
    }

    let mut drafts: Vec<Draft> = (0..TWEET_COUNT)
        .map(|i| draft_tweet(&mut rng, i % ACCOUNTS.len()))
        .collect();
    drafts.sort_by_key(|d| d.timestamp);

    let vectors = image_vectors(&mut rng);
    let mut images_csv = String::from("image_id,account,tweet_id");
    for i in 0..IMAGE_DIM {
        let _ = write!(images_csv, ",v{i}");
    }
    images_csv.push('\n');
    let img_dir = dir.join("images");
    mkdir(&img_dir)?;
    let real_tweets: Vec<usize> = (0..drafts.len()).filter(|&i| ACCOUNTS[drafts[i].account].1 == "real").collect();
    let susp_tweets: Vec<usize> = (0..drafts.len()).filter(|&i| ACCOUNTS[drafts[i].account].1 != "real").collect();
    let tweet_id = |i: usize| format!("t{:05}", i + 1);
    for (i, v) in vectors.iter().enumerate() {
        let pool = if i < IMAGE_COUNT / 2 { &real_tweets } else { &susp_tweets };
        // spread images over the pool without reusing a tweet
        let slot = i % (IMAGE_COUNT / 2);
        let t = pool[(slot * pool.len()) / (IMAGE_COUNT / 2) + rng.random_range(0..pool.len() / (IMAGE_COUNT / 2))];
        drafts[t].images.push(image_id(i));
        let _ = write!(images_csv, "{},{},{}", image_id(i), ACCOUNTS[drafts[t].account].0, tweet_id(t));
        for x in v {
            let _ = write!(images_csv, ",{x}");
        }
        images_csv.push('\n');
        write(&img_dir.join(format!("{}.svg", image_id(i))), svg(i, v))?;
    }
    write(&dir.join("image_features.csv"), images_csv)?;

    let mut tweets = String::new();
    for (i, d) in drafts.iter().enumerate() {
        let out = TweetOut {
            id: tweet_id(i),
            account: ACCOUNTS[d.account].0.to_string(),
            created_at: d.timestamp.format("%Y-%m-%dT%H:%M:%SZ").to_string(),
            text: d.text.clone(),
            mentions: d.mentions.clone(),
            retweet_of: d.retweet_of.clone(),
            images: d.images.clone(),
        };
        tweets.push_str(&serde_json::to_string(&out).expect("tweet record serializes"));
        tweets.push('\n');
    }
    write(&dir.join("tweets.jsonl"), tweets)?;

    let conf = format!(
        "# generated fixture, seed {seed}\n\
         accounts = accounts.tsv\n\
         tweets = tweets.jsonl\n\
         lexicons = lexicons\n\
         gazetteer = gazetteer.tsv\n\
         blocklist = blocklist.txt\n\
         images = image_features.csv\n\
         image_dir = images\n\
         out = bundle\n\
         seed = {seed}\n"
    );
    write(&dir.join("pipeline.conf"), conf)?;

    let by_topic = |t: usize| ACCOUNTS.iter().filter(|a| a.2 == t).map(|a| a.0.to_string()).collect::<Vec<_>>();
    let entities_by_topic = |t: usize| ENTITIES.iter().filter(|e| e.3 == t).map(|e| e.0.to_string()).collect::<Vec<_>>();
    let truth = FixtureTruth {
        seed,
        topic_accounts: [by_topic(0), by_topic(1)],
        topic_entities: [entities_by_topic(0), entities_by_topic(1)],
        anger_account: ANGER_ACCOUNT.to_string(),
        dominant_entity: DOMINANT_ENTITY.to_string(),
        real_cooccurrence: REAL_COOCCURRENCE.to_string(),
        suspicious_cooccurrence: SUSPICIOUS_COOCCURRENCE.to_string(),
        near_duplicate_images: (image_id(7), image_id(27)),
        tweet_count: TWEET_COUNT,
    };
    let json = serde_json::to_string_pretty(&truth).expect("truth serializes");
    write(&dir.join("fixture_truth.json"), json + "\n")?;
    Ok(truth)
}
