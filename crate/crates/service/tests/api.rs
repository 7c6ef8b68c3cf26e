//! Endpoint conformance on the generated fixture bundle.

use std::collections::BTreeSet;
use std::path::PathBuf;
use std::sync::{Arc, OnceLock};

use axum::body::{to_bytes, Body};
use axum::http::{Request, StatusCode};
use serde_json::Value;
use tokio::io::{AsyncReadExt, AsyncWriteExt};
use tower::ServiceExt;

use sourcelens_core::filter::FilterState;
use sourcelens_core::fixture::{generate_fixture, FixtureTruth};
use sourcelens_core::pipeline::{run_pipeline, PipelineConfig};
use sourcelens_service::{bind, router, serve, AppState, PAGE_SIZE, SCHEMAS};

struct Fixture {
    _dir: tempfile::TempDir,
    truth: FixtureTruth,
    state: Arc<AppState>,
}

fn fixture() -> &'static Fixture {
    static CELL: OnceLock<Fixture> = OnceLock::new();
    CELL.get_or_init(|| {
        let dir = tempfile::tempdir().unwrap();
        let truth = generate_fixture(42, dir.path()).unwrap();
        let cfg = PipelineConfig::load(&dir.path().join("pipeline.conf"), &[]).unwrap();
        run_pipeline(&cfg).unwrap();
        let images: PathBuf = cfg.path("image_dir").unwrap();
        let state = AppState::load(&cfg.path("out").unwrap(), Some(&images)).unwrap();
        Fixture { _dir: dir, truth, state: Arc::new(state) }
    })
}

async fn get(uri: &str) -> (StatusCode, Vec<u8>) {
    let resp = router(fixture().state.clone())
        .oneshot(Request::get(uri).body(Body::empty()).unwrap())
        .await
        .unwrap();
    let status = resp.status();
    (status, to_bytes(resp.into_body(), usize::MAX).await.unwrap().to_vec())
}

async fn get_json(uri: &str) -> (StatusCode, Value) {
    let (status, body) = get(uri).await;
    (status, serde_json::from_slice(&body).unwrap_or_else(|e| panic!("{uri}: {e}")))
}

fn validate(schema: &str, instance: &Value) {
    let body = SCHEMAS.iter().find(|(n, _)| *n == schema).unwrap().1;
    let schema_json: Value = serde_json::from_str(body).unwrap();
    let validator = jsonschema::validator_for(&schema_json).unwrap();
    let errors: Vec<String> = validator.iter_errors(instance).map(|e| format!("{} at {}", e, e.instance_path)).collect();
    assert!(errors.is_empty(), "{schema}: {errors:#?}");
}

/// One request per endpoint with the schema its body must satisfy.
fn conformance_requests() -> Vec<(String, &'static str)> {
    let t = &fixture().truth;
    let acct = &t.topic_accounts[0][0];
    let (img, _) = &t.near_duplicate_images;
    vec![
        ("/api/accounts".into(), "accounts"),
        (format!("/api/accounts/{acct}/timeline"), "timeline"),
        (format!("/api/accounts/{acct}/timeline?start=2017-11-01&end=2017-11-08"), "timeline"),
        ("/api/network".into(), "network"),
        ("/api/entities".into(), "entities"),
        ("/api/entities?type=organization&k=5".into(), "entities"),
        (format!("/api/entities?type=person&account={acct}&entities=gop"), "entities"),
        ("/api/tweets".into(), "tweets"),
        ("/api/tweets?page=3".into(), "tweets"),
        (format!("/api/tweets?account={acct}&entities=gop&word={}", t.real_cooccurrence), "tweets"),
        ("/api/tweets?start=2017-11-01T00:00:00Z&end=2017-11-02".into(), "tweets"),
        ("/api/tweets?page=999".into(), "tweets"),
        ("/api/compare/words?entity=gop".into(), "compare_words"),
        ("/api/compare/words?entity=North%20Korea&k=3".into(), "compare_words"),
        (format!("/api/compare/words?entity={}", t.real_cooccurrence), "compare_words"),
        (format!("/api/compare/images?image={img}"), "compare_images"),
        (format!("/api/compare/images?image={img}&k=40"), "compare_images"),
        ("/api/meta".into(), "meta"),
        ("/api/compare/words?entity=unknown".into(), "error"),
        ("/api/compare/images?image=nope".into(), "error"),
        ("/api/tweets?entities=martians".into(), "error"),
        ("/api/tweets?colour=red".into(), "error"),
        ("/api/entities?type=animal".into(), "error"),
        ("/api/accounts/nobody/timeline".into(), "error"),
        ("/api/nothing".into(), "error"),
    ]
}

#[tokio::test]
async fn every_response_matches_its_schema() {
    for (uri, schema) in conformance_requests() {
        let (status, body) = get_json(&uri).await;
        assert_eq!(status.is_success(), schema != "error", "{uri}: {status} {body}");
        validate(schema, &body);
    }
}

#[tokio::test]
async fn repeated_and_concurrent_requests_are_byte_identical() {
    for (uri, _) in conformance_requests() {
        let first = get(&uri).await;
        let tasks: Vec<_> = (0..8).map(|_| tokio::spawn({
            let uri = uri.clone();
            async move { get(&uri).await }
        })).collect();
        for t in tasks {
            assert_eq!(t.await.unwrap(), first, "{uri}");
        }
    }
}

#[tokio::test]
async fn accounts_carry_scores_and_markers() {
    let (_, body) = get_json("/api/accounts").await;
    let rows = body["accounts"].as_array().unwrap();
    assert_eq!(rows.len(), 12);
    assert_eq!(rows.iter().filter(|r| r["label"] == "real").count(), 6);
    let anger = rows.iter().find(|r| r["id"] == fixture().truth.anger_account.as_str()).unwrap();
    assert_eq!(anger["rank"]["anger"], 1);
    let total: u64 = rows.iter().map(|r| r["tweet_count"].as_u64().unwrap()).sum();
    assert_eq!(total, 2000);
    let features = body["features"].as_array().unwrap();
    assert_eq!(features.len(), 6);
    assert!(features.iter().all(|f| f["constant"] == false));
}

#[tokio::test]
async fn unknown_entity_word_comparison_is_404() {
    let (status, body) = get_json("/api/compare/words?entity=unknown").await;
    assert_eq!(status, StatusCode::NOT_FOUND);
    assert_eq!(body["error"]["code"], "unknown_word");
    let (status, _) = get_json("/api/compare/words").await;
    assert_eq!(status, StatusCode::BAD_REQUEST);
    let (status, _) = get_json("/api/compare/words?entity=gop&k=0").await;
    assert_eq!(status, StatusCode::BAD_REQUEST);
}

#[tokio::test]
async fn tweets_are_paged_newest_first() {
    let (_, first) = get_json("/api/tweets").await;
    assert_eq!(first["total"], 2000);
    assert_eq!(first["pages"], 2000 / PAGE_SIZE);
    let mut all = Vec::new();
    for page in 1..=first["pages"].as_u64().unwrap() {
        let (_, body) = get_json(&format!("/api/tweets?page={page}")).await;
        for t in body["tweets"].as_array().unwrap() {
            all.push((t["created_at"].as_str().unwrap().to_string(), t["id"].as_str().unwrap().to_string()));
        }
    }
    assert_eq!(all.len(), 2000);
    let mut expected = all.clone();
    expected.sort_by(|a, b| b.0.cmp(&a.0).then(a.1.cmp(&b.1)));
    assert_eq!(all, expected);
    let (_, past) = get_json("/api/tweets?page=999").await;
    assert_eq!(past["tweets"].as_array().unwrap().len(), 0);
}

#[tokio::test]
async fn api_filters_stack_like_the_table() {
    let f = fixture();
    let acct = &f.truth.topic_accounts[0][1];
    let ids = |body: &Value| -> BTreeSet<String> {
        body["tweets"].as_array().unwrap().iter().map(|t| t["id"].as_str().unwrap().to_string()).collect()
    };
    let all_pages = |query: String| async move {
        let mut out = BTreeSet::new();
        let mut page = 1;
        loop {
            let (status, body) = get_json(&format!("/api/tweets?{query}&page={page}")).await;
            assert_eq!(status, StatusCode::OK, "{body}");
            out.extend(ids(&body));
            if page >= body["pages"].as_u64().unwrap() as usize {
                return out;
            }
            page += 1;
        }
    };
    let by_account = all_pages(format!("account={acct}")).await;
    let by_entity = all_pages("entities=gop".into()).await;
    let both = all_pages(format!("account={acct}&entities=gop")).await;
    let expected: BTreeSet<String> = by_account.intersection(&by_entity).cloned().collect();
    assert_eq!(both, expected);
    assert!(!both.is_empty());

    let state = FilterState {
        account: Some(acct.clone()),
        entities: BTreeSet::from(["gop".to_string()]),
        ..Default::default()
    };
    let rows = f.state.bundle.data.corpus.tweets();
    let direct: BTreeSet<String> = sourcelens_core::filter::TweetTable::new(
        &f.state.bundle.data.corpus,
        &f.state.bundle.data.registry,
        &f.state.bundle.data.entities.index,
        &f.state.bundle.data.entities.mentions,
    )
    .apply_filters(&state)
    .unwrap()
    .into_iter()
    .map(|i| rows[i].id.clone())
    .collect();
    assert_eq!(both, direct);

    // entity counts under the same filter only see the filtered tweets
    let (_, ent) = get_json(&format!("/api/entities?type=organization&account={acct}&entities=gop")).await;
    assert_eq!(ent["matched_tweets"].as_u64().unwrap() as usize, both.len());
    let gop = ent["entities"].as_array().unwrap().iter().find(|e| e["name"] == "gop").unwrap();
    assert!(gop["count"].as_u64().unwrap() as usize >= both.len());
}

#[tokio::test]
async fn word_comparison_shows_planted_neighbors() {
    let t = &fixture().truth;
    let (_, body) = get_json("/api/compare/words?entity=GOP").await;
    let words = |side: &str| -> Vec<String> {
        body[side]["words"].as_array().unwrap().iter().map(|w| w["token"].as_str().unwrap().to_string()).collect()
    };
    assert_eq!(body["query"], "gop");
    assert!(words("real").contains(&t.real_cooccurrence));
    assert!(words("suspicious").contains(&t.suspicious_cooccurrence));
    assert!(!words("real").contains(&t.suspicious_cooccurrence));
}

#[tokio::test]
async fn image_comparison_and_assets() {
    let (a, b) = &fixture().truth.near_duplicate_images;
    let (_, body) = get_json(&format!("/api/compare/images?image={a}")).await;
    assert_eq!(body["query"]["image_id"], a.as_str());
    assert_eq!(body["suspicious"][0]["image_id"], b.as_str());
    assert!(body["suspicious"][0]["score"].as_f64().unwrap() > 0.99);
    assert_eq!(body["real"].as_array().unwrap().len(), 10);
    let url = body["query"]["url"].as_str().unwrap().to_string();

    let resp = router(fixture().state.clone())
        .oneshot(Request::get(&url).body(Body::empty()).unwrap())
        .await
        .unwrap();
    assert_eq!(resp.status(), StatusCode::OK);
    assert_eq!(resp.headers()["content-type"], "image/svg+xml");
    let (status, _) = get("/assets/images/..%2Fpipeline").await;
    assert_eq!(status, StatusCode::NOT_FOUND);
}

#[tokio::test]
async fn schemas_are_published() {
    for (name, body) in SCHEMAS {
        let (status, got) = get(&format!("/api/schemas/{name}.schema.json")).await;
        assert_eq!(status, StatusCode::OK);
        assert_eq!(got, body.as_bytes());
    }
}

#[tokio::test]
async fn serves_over_a_real_socket() {
    let listener = bind("127.0.0.1:0".parse().unwrap()).await.unwrap();
    let addr = listener.local_addr().unwrap();
    let (stop, stopped) = tokio::sync::oneshot::channel::<()>();
    let server = tokio::spawn(serve(listener, fixture().state.clone(), async {
        stopped.await.ok();
    }));

    let mut stream = tokio::net::TcpStream::connect(addr).await.unwrap();
    stream
        .write_all(b"GET /api/meta HTTP/1.1\r\nHost: localhost\r\nConnection: close\r\n\r\n")
        .await
        .unwrap();
    let mut raw = Vec::new();
    stream.read_to_end(&mut raw).await.unwrap();
    let text = String::from_utf8(raw).unwrap();
    assert!(text.starts_with("HTTP/1.1 200 OK"), "{text}");
    let body = &text[text.find("\r\n\r\n").unwrap() + 4..];
    let (_, direct) = get("/api/meta").await;
    assert_eq!(body.as_bytes(), direct.as_slice());

    stop.send(()).unwrap();
    server.await.unwrap().unwrap();

    // a second bind on the same port while it is held fails cleanly
    let held = bind("127.0.0.1:0".parse().unwrap()).await.unwrap();
    assert!(bind(held.local_addr().unwrap()).await.is_err());
}

#[tokio::test]
async fn schemas_reject_malformed_bodies() {
    let check = |schema: &str, instance: Value| {
        let body = SCHEMAS.iter().find(|(n, _)| *n == schema).unwrap().1;
        let v = jsonschema::validator_for(&serde_json::from_str(body).unwrap()).unwrap();
        assert!(!v.is_valid(&instance), "{schema} accepted {instance}");
    };
    let (_, mut tweets) = get_json("/api/tweets").await;
    tweets["tweets"][0]["label"] = "neutral".into();
    check("tweets", tweets);
    let (_, mut words) = get_json("/api/compare/words?entity=gop").await;
    words["real"]["words"][0]["cosine"] = 1.5.into();
    check("compare_words", words);
    let (_, mut images) = get_json("/api/compare/images?image=img001").await;
    images["real"][0]["label"] = "suspicious".into();
    check("compare_images", images);
    let (_, mut accounts) = get_json("/api/accounts").await;
    accounts["accounts"][0]["extra"] = 1.into();
    check("accounts", accounts);
}
