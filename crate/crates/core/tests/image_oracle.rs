//! Nearest-image queries checked against an all-pairs cosine scan.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use sourcelens_core::corpus::{Account, AccountLabel, AccountRegistry};
use sourcelens_core::imagesim::{
    top_similar_images, top_similar_images_brute_force, ImageFeature, ImageIndex, IMAGE_DIM,
};

fn registry() -> AccountRegistry {
    let accounts = (0..4)
        .map(|i| Account {
            id: format!("acct{i}"),
            handle: format!("acct{i}"),
            label: if i < 2 { AccountLabel::Real } else { AccountLabel::Suspicious },
            description: String::new(),
            location: None,
        })
        .collect();
    AccountRegistry::from_accounts(accounts).unwrap()
}

fn cosine(a: &[f32], b: &[f32]) -> f64 {
    let (mut ab, mut aa, mut bb) = (0.0, 0.0, 0.0);
    for (&x, &y) in a.iter().zip(b) {
        let (x, y) = (x as f64, y as f64);
        ab += x * y;
        aa += x * x;
        bb += y * y;
    }
    ab / (aa.sqrt() * bb.sqrt())
}

fn random_index(seed: u64) -> ImageIndex {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let features = (0..40)
        .map(|i| ImageFeature {
            image_id: format!("img{i:02}"),
            account_id: format!("acct{}", if i < 20 { i % 2 } else { 2 + i % 2 }),
            tweet_id: format!("t{i}"),
            vector: (0..IMAGE_DIM).map(|_| rng.random_range(-1.0f32..1.0)).collect(),
        })
        .collect();
    ImageIndex::from_features(features, &registry()).unwrap()
}

type Ranked = Vec<(String, f64)>;

/// Every other image ranked by the oracle, split by label.
fn oracle(index: &ImageIndex, query: &str) -> (Ranked, Ranked) {
    let q = index.get(query).unwrap();
    let mut real = vec![];
    let mut susp = vec![];
    for f in index.features() {
        if f.image_id == query {
            continue;
        }
        let entry = (f.image_id.clone(), cosine(&q.vector, &f.vector));
        if f.account_id == "acct0" || f.account_id == "acct1" {
            real.push(entry);
        } else {
            susp.push(entry);
        }
    }
    for side in [&mut real, &mut susp] {
        side.sort_by(|a, b| b.1.partial_cmp(&a.1).unwrap().then(a.0.cmp(&b.0)));
    }
    (real, susp)
}

#[test]
fn rankings_equal_all_pairs_scan() {
    for seed in 0..3 {
        let index = random_index(seed);
        assert_eq!(index.partition_size(AccountLabel::Real), 20);
        for f in index.features() {
            let (real, susp) = oracle(&index, &f.image_id);
            for k in [1, 10, 40] {
                let fast = top_similar_images(&index, &f.image_id, k).unwrap();
                let slow = top_similar_images_brute_force(&index, &f.image_id, k).unwrap();
                assert_eq!(fast, slow);
                for (got, want) in [(&fast.real, &real), (&fast.suspicious, &susp)] {
                    let ids: Vec<&str> = got.iter().map(|m| m.image_id.as_str()).collect();
                    let want_ids: Vec<&str> = want.iter().take(k).map(|(id, _)| id.as_str()).collect();
                    assert_eq!(ids, want_ids);
                    for (m, (_, s)) in got.iter().zip(want) {
                        assert!((m.score - s).abs() < 1e-12);
                    }
                }
                assert!(fast.real.iter().all(|m| m.label == AccountLabel::Real));
                assert!(fast.suspicious.iter().all(|m| m.label == AccountLabel::Suspicious));
            }
        }
    }
}

#[test]
fn oversized_k_returns_whole_partition() {
    let index = random_index(5);
    let cmp = top_similar_images(&index, "img03", 1000).unwrap();
    assert_eq!(cmp.real.len(), 19);
    assert_eq!(cmp.suspicious.len(), 20);
}
