use std::collections::BTreeMap;
use std::sync::Arc;

use axum::extract::rejection::QueryRejection;
use axum::extract::{Path, Query, State};
use axum::http::{header, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::Json;
use chrono::{DateTime, SecondsFormat, Utc};
use serde::Serialize;

use sourcelens_core::corpus::{daily_counts, AccountLabel, TimeRange};
use sourcelens_core::embeddings::{compare_entity_words, WordComparison};
use sourcelens_core::entities::EntityType;
use sourcelens_core::graph::{community_entity_cloud, export_social, ExportEdge, ExportNode};
use sourcelens_core::imagesim::{top_similar_images, ImageMatch};
use sourcelens_core::lexicon::{Feature, FeatureGroup, FeatureStats, PerFeature};
use sourcelens_core::store::Manifest;

use crate::error::ApiError;
use crate::query::{Params, FILTER_KEYS};
use crate::AppState;

pub const PAGE_SIZE: usize = 50;
const CLOUD_SIZE: usize = 30;
const MAX_TIMELINE_DAYS: i64 = 3660;

/// Published response schemas, by name.
pub const SCHEMAS: [(&str, &str); 9] = [
    ("accounts", include_str!("../schemas/accounts.schema.json")),
    ("timeline", include_str!("../schemas/timeline.schema.json")),
    ("network", include_str!("../schemas/network.schema.json")),
    ("entities", include_str!("../schemas/entities.schema.json")),
    ("tweets", include_str!("../schemas/tweets.schema.json")),
    ("compare_words", include_str!("../schemas/compare_words.schema.json")),
    ("compare_images", include_str!("../schemas/compare_images.schema.json")),
    ("meta", include_str!("../schemas/meta.schema.json")),
    ("error", include_str!("../schemas/error.schema.json")),
];

type Shared = State<Arc<AppState>>;
type RawQuery = Result<Query<BTreeMap<String, String>>, QueryRejection>;

fn params(q: RawQuery, allowed: &[&str]) -> Result<Params, ApiError> {
    let Query(map) = q.map_err(|e| ApiError::bad_request(e.body_text()))?;
    let p = Params(map);
    p.only(allowed)?;
    Ok(p)
}

fn timestamp(t: DateTime<Utc>) -> String {
    t.to_rfc3339_opts(SecondsFormat::Secs, true)
}

#[derive(Serialize)]
pub struct AccountRow {
    id: String,
    handle: String,
    label: AccountLabel,
    description: String,
    location: Option<String>,
    tweet_count: usize,
    raw: Option<PerFeature<f64>>,
    scaled: Option<PerFeature<f64>>,
    rank: Option<PerFeature<usize>>,
}

#[derive(Serialize)]
pub struct FeatureInfo {
    name: Feature,
    group: FeatureGroup,
    /// Every account has the same raw score, so all scaled values are 0 and
    /// ranks follow account id order.
    constant: bool,
}

#[derive(Serialize)]
pub struct AccountsResponse {
    accounts: Vec<AccountRow>,
    features: Vec<FeatureInfo>,
    markers: FeatureStats,
}

pub async fn accounts(State(s): Shared, q: RawQuery) -> Result<Json<AccountsResponse>, ApiError> {
    params(q, &[])?;
    let d = &s.bundle.data;
    let profiles: BTreeMap<&str, _> = d.profiles.profiles.iter().map(|p| (p.account_id.as_str(), p)).collect();
    let counts = d.corpus.counts_by_account();
    let accounts = d
        .registry
        .accounts()
        .iter()
        .map(|a| {
            let p = profiles.get(a.id.as_str());
            AccountRow {
                id: a.id.clone(),
                handle: a.handle.clone(),
                label: a.label,
                description: a.description.clone(),
                location: a.location.clone(),
                tweet_count: counts.get(a.id.as_str()).copied().unwrap_or(0),
                raw: p.map(|p| p.raw),
                scaled: p.map(|p| p.scaled),
                rank: p.map(|p| p.rank),
            }
        })
        .collect();
    Ok(Json(AccountsResponse {
        accounts,
        features: Feature::ALL
            .iter()
            .map(|&f| {
                let mut raws = d.profiles.profiles.iter().map(|p| p.raw[f]);
                let first = raws.next();
                FeatureInfo { name: f, group: f.group(), constant: first.is_some_and(|x| raws.all(|y| y == x)) }
            })
            .collect(),
        markers: d.profiles.stats,
    }))
}

#[derive(Serialize)]
pub struct DayCount {
    date: String,
    count: usize,
}

#[derive(Serialize)]
pub struct TimelineResponse {
    account: String,
    handle: String,
    start: Option<String>,
    end: Option<String>,
    days: Vec<DayCount>,
}

pub async fn timeline(State(s): Shared, Path(handle): Path<String>, q: RawQuery) -> Result<Json<TimelineResponse>, ApiError> {
    let p = params(q, &["start", "end"])?;
    let d = &s.bundle.data;
    let account = d
        .registry
        .get(&handle)
        .ok_or_else(|| ApiError::not_found("unknown_account", format!("unknown account `{handle}`")))?;
    let span = d.corpus.span().map(|r| {
        let midnight = r.start().date_naive().and_hms_opt(0, 0, 0).expect("midnight exists").and_utc();
        TimeRange::new(midnight, r.end()).expect("midnight precedes the first tweet")
    });
    let Some(range) = p.range(span)?.or(span) else {
        return Ok(Json(TimelineResponse { account: account.id.clone(), handle: account.handle.clone(), start: None, end: None, days: vec![] }));
    };
    if (range.end() - range.start()).num_days() > MAX_TIMELINE_DAYS {
        return Err(ApiError::bad_request(format!("time range longer than {MAX_TIMELINE_DAYS} days")));
    }
    let days = daily_counts(&d.corpus, &d.registry, &account.id, &range)
        .map_err(|e| ApiError::bad_request(e.to_string()))?
        .into_iter()
        .map(|(date, count)| DayCount { date: date.to_string(), count })
        .collect();
    Ok(Json(TimelineResponse {
        account: account.id.clone(),
        handle: account.handle.clone(),
        start: Some(timestamp(range.start())),
        end: Some(timestamp(range.end())),
        days,
    }))
}

#[derive(Serialize)]
pub struct CloudTerm {
    name: String,
    #[serde(rename = "type")]
    kind: Option<EntityType>,
    count: u64,
}

#[derive(Serialize)]
pub struct CommunityInfo {
    id: usize,
    accounts: Vec<String>,
    entities: Vec<String>,
    cloud: Vec<CloudTerm>,
}

#[derive(Serialize)]
pub struct NetworkResponse {
    nodes: Vec<ExportNode>,
    edges: Vec<ExportEdge>,
    communities: Vec<CommunityInfo>,
    modularity: f64,
}

pub async fn network(State(s): Shared, q: RawQuery) -> Result<Json<NetworkResponse>, ApiError> {
    params(q, &[])?;
    let d = &s.bundle.data;
    let export = export_social(&d.social, &d.registry, &d.communities);
    let index = &d.entities.index;
    let communities = (0..d.communities.community_count)
        .map(|c| {
            let cloud = community_entity_cloud(&d.communities, index, c, CLOUD_SIZE)
                .expect("community id is in range")
                .into_iter()
                .map(|(name, count)| CloudTerm { kind: index.kind(&name), name, count })
                .collect();
            CommunityInfo {
                id: c,
                accounts: d.communities.accounts_in(c).into_iter().map(str::to_string).collect(),
                entities: d.communities.entities_in(c).into_iter().map(str::to_string).collect(),
                cloud,
            }
        })
        .collect();
    Ok(Json(NetworkResponse { nodes: export.nodes, edges: export.edges, communities, modularity: d.communities.modularity }))
}

#[derive(Serialize)]
pub struct EntitiesResponse {
    matched_tweets: usize,
    entities: Vec<CloudTerm>,
}

pub async fn entities(State(s): Shared, q: RawQuery) -> Result<Json<EntitiesResponse>, ApiError> {
    let mut allowed = vec!["type", "k"];
    allowed.extend(FILTER_KEYS);
    let p = params(q, &allowed)?;
    let kinds = match p.get("type") {
        Some(t) => vec![t
            .parse::<EntityType>()
            .map_err(|t| ApiError::bad_request(format!("`type` must be person, place or organization, got `{t}`")))?],
        None => EntityType::ALL.to_vec(),
    };
    let k = p.count("k", CLOUD_SIZE, 1000)?;
    let state = p.filter()?;
    let matched_tweets = s.table.apply_filters(&state)?.len();
    let mut entities = Vec::new();
    for kind in kinds {
        for (name, count) in s.table.top_entities(&state, kind, k)? {
            entities.push(CloudTerm { name, kind: Some(kind), count });
        }
    }
    Ok(Json(EntitiesResponse { matched_tweets, entities }))
}

#[derive(Serialize)]
pub struct EntityHighlight {
    name: String,
    #[serde(rename = "type")]
    kind: EntityType,
    surface: String,
}

#[derive(Serialize)]
pub struct ImageRef {
    id: String,
    url: Option<String>,
}

#[derive(Serialize)]
pub struct TweetItem {
    id: String,
    account: String,
    handle: String,
    label: AccountLabel,
    created_at: String,
    text: String,
    mentions: Vec<String>,
    retweet_of: Option<String>,
    entities: Vec<EntityHighlight>,
    images: Vec<ImageRef>,
}

#[derive(Serialize)]
pub struct TweetsResponse {
    total: usize,
    page: usize,
    page_size: usize,
    pages: usize,
    tweets: Vec<TweetItem>,
}

fn asset_url(s: &AppState, id: &str) -> Option<String> {
    s.assets.contains_key(id).then(|| format!("/assets/images/{id}"))
}

pub async fn tweets(State(s): Shared, q: RawQuery) -> Result<Json<TweetsResponse>, ApiError> {
    let mut allowed = vec!["page"];
    allowed.extend(FILTER_KEYS);
    let p = params(q, &allowed)?;
    let page = p.count("page", 1, usize::MAX)?;
    let state = p.filter()?;
    let mut selected = vec![false; s.table.len()];
    for i in s.table.apply_filters(&state)? {
        selected[i] = true;
    }
    let ordered: Vec<usize> = s.newest_first.iter().copied().filter(|&i| selected[i]).collect();
    let total = ordered.len();
    let d = &s.bundle.data;
    let tweets = ordered
        .iter()
        .skip((page - 1).saturating_mul(PAGE_SIZE))
        .take(PAGE_SIZE)
        .map(|&i| {
            let t = &d.corpus.tweets()[i];
            let account = d.registry.get(&t.account_id).expect("tweets are bound to registered accounts");
            TweetItem {
                id: t.id.clone(),
                account: account.id.clone(),
                handle: account.handle.clone(),
                label: account.label,
                created_at: timestamp(t.timestamp),
                text: t.text.clone(),
                mentions: t.mentions.clone(),
                retweet_of: t.retweet_of.clone(),
                entities: s.highlights[i]
                    .iter()
                    .map(|h| EntityHighlight { name: h.name.clone(), kind: h.kind, surface: h.surface.clone() })
                    .collect(),
                images: t.image_ids.iter().map(|id| ImageRef { id: id.clone(), url: asset_url(&s, id) }).collect(),
            }
        })
        .collect();
    Ok(Json(TweetsResponse { total, page, page_size: PAGE_SIZE, pages: total.div_ceil(PAGE_SIZE), tweets }))
}

pub async fn compare_words(State(s): Shared, q: RawQuery) -> Result<Json<WordComparison>, ApiError> {
    let p = params(q, &["entity", "k"])?;
    let entity = p.get("entity").ok_or_else(|| ApiError::bad_request("missing `entity`"))?;
    let k = p.count("k", 10, 100)?;
    let d = &s.bundle.data;
    Ok(Json(compare_entity_words(&d.embeddings_real, &d.embeddings_suspicious, entity, k)?))
}

#[derive(Serialize)]
pub struct ImageHit {
    image_id: String,
    score: Option<f64>,
    account_id: String,
    label: AccountLabel,
    tweet_id: String,
    text: Option<String>,
    url: Option<String>,
}

#[derive(Serialize)]
pub struct ImagesResponse {
    query: ImageHit,
    real: Vec<ImageHit>,
    suspicious: Vec<ImageHit>,
}

pub async fn compare_images(State(s): Shared, q: RawQuery) -> Result<Json<ImagesResponse>, ApiError> {
    let p = params(q, &["image", "k"])?;
    let image = p.get("image").ok_or_else(|| ApiError::bad_request("missing `image`"))?;
    let k = p.count("k", 10, 1000)?;
    let d = &s.bundle.data;
    let result = top_similar_images(&d.images, image.trim(), k)?;
    let text = |tweet_id: &str| d.corpus.get(tweet_id).map(|t| t.text.clone());
    let hit = |m: ImageMatch| ImageHit {
        text: text(&m.tweet_id),
        url: asset_url(&s, &m.image_id),
        score: Some(m.score),
        image_id: m.image_id,
        account_id: m.account_id,
        label: m.label,
        tweet_id: m.tweet_id,
    };
    let f = d.images.get(&result.query).expect("query image is indexed");
    let query = ImageHit {
        image_id: f.image_id.clone(),
        score: None,
        account_id: f.account_id.clone(),
        label: d.images.label(&f.image_id).expect("query image is indexed"),
        tweet_id: f.tweet_id.clone(),
        text: text(&f.tweet_id),
        url: asset_url(&s, &f.image_id),
    };
    Ok(Json(ImagesResponse {
        query,
        real: result.real.into_iter().map(hit).collect(),
        suspicious: result.suspicious.into_iter().map(hit).collect(),
    }))
}

pub async fn meta(State(s): Shared, q: RawQuery) -> Result<Json<Manifest>, ApiError> {
    params(q, &[])?;
    Ok(Json(s.bundle.manifest.clone()))
}

pub async fn schema(Path(name): Path<String>) -> Result<Response, ApiError> {
    let name = name.strip_suffix(".json").unwrap_or(&name);
    let name = name.strip_suffix(".schema").unwrap_or(name);
    let (_, body) = SCHEMAS
        .iter()
        .find(|(n, _)| *n == name)
        .ok_or_else(|| ApiError::not_found("unknown_schema", format!("no schema named `{name}`")))?;
    Ok(([(header::CONTENT_TYPE, "application/schema+json")], *body).into_response())
}

fn content_type(path: &std::path::Path) -> &'static str {
    match path.extension().and_then(|e| e.to_str()).map(str::to_ascii_lowercase).as_deref() {
        Some("svg") => "image/svg+xml",
        Some("png") => "image/png",
        Some("jpg" | "jpeg") => "image/jpeg",
        Some("gif") => "image/gif",
        Some("webp") => "image/webp",
        _ => "application/octet-stream",
    }
}

pub async fn image_asset(State(s): Shared, Path(id): Path<String>) -> Result<Response, ApiError> {
    let path = s
        .assets
        .get(&id)
        .ok_or_else(|| ApiError::not_found("unknown_image", format!("no image file for `{id}`")))?;
    let bytes = tokio::fs::read(path)
        .await
        .map_err(|_| ApiError::not_found("unknown_image", format!("image file for `{id}` is unreadable")))?;
    Ok(([(header::CONTENT_TYPE, content_type(path))], bytes).into_response())
}

pub async fn not_found() -> ApiError {
    ApiError::not_found("not_found", "no such endpoint")
}

pub async fn method_not_allowed() -> ApiError {
    ApiError { status: StatusCode::METHOD_NOT_ALLOWED, code: "method_not_allowed", message: "only GET is supported".into() }
}
