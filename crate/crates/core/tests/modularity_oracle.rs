//! Community detection checked against exhaustive enumeration of set partitions.

#![allow(clippy::needless_range_loop)]

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use sourcelens_core::graph::{detect_communities, modularity, UndirectedGraph};

/// Direct double-sum evaluation over the adjacency matrix.
fn q_dense(adj: &[Vec<f64>], part: &[usize]) -> f64 {
    let n = adj.len();
    let k: Vec<f64> = adj.iter().map(|row| row.iter().sum()).collect();
    let two_m: f64 = k.iter().sum();
    let mut q = 0.0;
    for i in 0..n {
        for j in 0..n {
            if part[i] == part[j] {
                q += adj[i][j] - k[i] * k[j] / two_m;
            }
        }
    }
    q / two_m
}

/// Every set partition of `0..n` as restricted growth strings.
fn all_partitions(n: usize) -> Vec<Vec<usize>> {
    fn rec(i: usize, n: usize, cur: &mut Vec<usize>, max: usize, out: &mut Vec<Vec<usize>>) {
        if i == n {
            out.push(cur.clone());
            return;
        }
        for c in 0..=max + 1 {
            if i == 0 && c > 0 {
                break;
            }
            cur.push(c);
            rec(i + 1, n, cur, if i == 0 { 0 } else { max.max(c) }, out);
            cur.pop();
        }
    }
    let mut out = Vec::new();
    rec(0, n, &mut Vec::new(), 0, &mut out);
    out
}

fn optimum(adj: &[Vec<f64>]) -> f64 {
    all_partitions(adj.len())
        .iter()
        .map(|p| q_dense(adj, p))
        .fold(f64::NEG_INFINITY, f64::max)
}

fn random_graph(rng: &mut ChaCha8Rng) -> (UndirectedGraph, Vec<Vec<f64>>) {
    loop {
        let n = rng.random_range(3..=8);
        let p = rng.random_range(0.2..0.7);
        let mut adj = vec![vec![0.0; n]; n];
        let mut g = UndirectedGraph::new(n);
        for i in 0..n {
            for j in i + 1..n {
                if rng.random_bool(p) {
                    let w = rng.random_range(1..=4) as f64;
                    adj[i][j] = w;
                    adj[j][i] = w;
                    g.add_edge(i, j, w);
                }
            }
        }
        if g.total_weight() > 0.0 {
            return (g, adj);
        }
    }
}

#[test]
fn partition_enumeration_counts_bell_numbers() {
    let bell = [1, 1, 2, 5, 15, 52, 203, 877, 4140];
    for n in 1..=8 {
        assert_eq!(all_partitions(n).len(), bell[n]);
    }
}

#[test]
fn oracle_agrees_with_library_modularity() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for _ in 0..20 {
        let (g, adj) = random_graph(&mut rng);
        for p in all_partitions(adj.len()).iter().step_by(37) {
            let a = modularity(&g, p).unwrap();
            let b = q_dense(&adj, p);
            assert!((a - b).abs() < 1e-12, "{a} vs {b}");
        }
    }
}

#[test]
fn detection_within_five_percent_of_optimum() {
    let mut rng = ChaCha8Rng::seed_from_u64(20171025);
    for case in 0..40 {
        let (g, adj) = random_graph(&mut rng);
        let best = optimum(&adj);
        let found = detect_communities(&g, case).unwrap();
        let q = q_dense(&adj, &found.communities);
        assert!((q - found.modularity).abs() < 1e-12);
        assert!(q >= 0.95 * best - 1e-12, "case {case}: detected {q}, optimum {best}");
        let singletons: Vec<usize> = (0..adj.len()).collect();
        assert!(q >= q_dense(&adj, &singletons) - 1e-12);
        assert!(q >= -1e-12);
        assert_eq!(detect_communities(&g, case).unwrap(), found);
    }
}

#[test]
fn complete_graph_optimum_is_single_community() {
    let n = 4;
    let mut adj = vec![vec![1.0; n]; n];
    for (i, row) in adj.iter_mut().enumerate() {
        row[i] = 0.0;
    }
    let best = all_partitions(n)
        .into_iter()
        .max_by(|a, b| q_dense(&adj, a).total_cmp(&q_dense(&adj, b)))
        .unwrap();
    assert_eq!(best, vec![0; n]);
    let mut edges = vec![];
    for i in 0..n {
        for j in i + 1..n {
            edges.push((i, j, 1.0));
        }
    }
    let found = detect_communities(&UndirectedGraph::from_edges(n, &edges), 5).unwrap();
    assert_eq!(found.communities, best);
}

#[test]
fn ratio_holds_across_many_random_graphs() {
    let mut rng = ChaCha8Rng::seed_from_u64(99);
    for case in 0..2000 {
        let (g, adj) = random_graph(&mut rng);
        let best = optimum(&adj);
        let q = detect_communities(&g, case).unwrap().modularity;
        assert!(q >= 0.95 * best - 1e-12, "case {case}: detected {q}, optimum {best}");
    }
}
