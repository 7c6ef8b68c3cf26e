//! Mention/retweet network, account-entity bipartite network, and
//! modularity-based community detection.
//!
//! Detection alternates a local-move phase and an aggregation phase. Local
//! moves sweep nodes in ascending index order, moving each to the community
//! with the largest modularity gain until a full sweep makes no move. Each
//! community is then refined into well-merged sub-communities, which become
//! the super-nodes of the next level while keeping their parent community as
//! the starting partition. This repeats until nothing can be aggregated. A
//! Kernighan-Lin style fine-tuning pass over single nodes follows, and the
//! whole cycle restarts from its result until modularity stops improving.
//!
//! The same improvement cycle is also run from a leading-eigenvector
//! bisection of the modularity matrix, and the partition with the higher
//! modularity wins. The seed only breaks exact ties between equally good
//! target communities.

use std::collections::{BTreeMap, BTreeSet, HashMap};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::{AccountRegistry, Corpus};
use crate::entities::EntityIndex;

#[derive(Debug, Error, PartialEq)]
pub enum GraphError {
    #[error("graph has zero total edge weight")]
    NoEdges,
    #[error("partition covers {got} nodes but the graph has {expected}")]
    PartitionSize { expected: usize, got: usize },
    #[error("unknown account `{0}`")]
    UnknownAccount(String),
    #[error("unknown community {0}")]
    UnknownCommunity(usize),
}

/// Undirected weighted graph over nodes `0..node_count`. Parallel edges are summed.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct UndirectedGraph {
    node_count: usize,
    edges: BTreeMap<(usize, usize), f64>,
}

impl UndirectedGraph {
    pub fn new(node_count: usize) -> Self {
        Self {
            node_count,
            edges: BTreeMap::new(),
        }
    }

    pub fn from_edges(node_count: usize, edges: &[(usize, usize, f64)]) -> Self {
        let mut g = Self::new(node_count);
        for &(u, v, w) in edges {
            g.add_edge(u, v, w);
        }
        g
    }

    /// Adds weight to edge `{u, v}`; `u == v` is a self-loop.
    pub fn add_edge(&mut self, u: usize, v: usize, weight: f64) {
        assert!(u < self.node_count && v < self.node_count, "edge endpoint out of range");
        let key = (u.min(v), u.max(v));
        *self.edges.entry(key).or_insert(0.0) += weight;
    }

    pub fn node_count(&self) -> usize {
        self.node_count
    }

    pub fn edges(&self) -> impl Iterator<Item = (usize, usize, f64)> + '_ {
        self.edges.iter().map(|(&(u, v), &w)| (u, v, w))
    }

    pub fn total_weight(&self) -> f64 {
        self.edges.values().sum()
    }

    /// Weighted degrees; a self-loop contributes twice its weight.
    pub fn degrees(&self) -> Vec<f64> {
        let mut d = vec![0.0; self.node_count];
        for (u, v, w) in self.edges() {
            d[u] += w;
            d[v] += w;
        }
        d
    }
}

/// Node-to-community map with dense ids from 0, numbered by first node.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CommunityAssignment {
    pub communities: Vec<usize>,
    pub modularity: f64,
}

impl CommunityAssignment {
    pub fn community_count(&self) -> usize {
        self.communities.iter().max().map_or(0, |&c| c + 1)
    }

    pub fn members(&self, community: usize) -> Vec<usize> {
        (0..self.communities.len())
            .filter(|&i| self.communities[i] == community)
            .collect()
    }
}

/// Renumbers labels densely in order of first appearance.
pub fn normalize_labels(labels: &[usize]) -> Vec<usize> {
    let mut map = HashMap::new();
    labels
        .iter()
        .map(|&l| {
            let next = map.len();
            *map.entry(l).or_insert(next)
        })
        .collect()
}

pub fn modularity(graph: &UndirectedGraph, partition: &[usize]) -> Result<f64, GraphError> {
    modularity_with_resolution(graph, partition, 1.0)
}

/// `Q = Σ_c [ L_c / m − γ (K_c / 2m)² ]`, with `L_c` the weight inside `c` and `K_c` its degree sum.
pub fn modularity_with_resolution(graph: &UndirectedGraph, partition: &[usize], resolution: f64) -> Result<f64, GraphError> {
    if partition.len() != graph.node_count {
        return Err(GraphError::PartitionSize {
            expected: graph.node_count,
            got: partition.len(),
        });
    }
    let m = graph.total_weight();
    if m <= 0.0 {
        return Err(GraphError::NoEdges);
    }
    let mut internal: BTreeMap<usize, f64> = BTreeMap::new();
    let mut degree: BTreeMap<usize, f64> = BTreeMap::new();
    for (u, v, w) in graph.edges() {
        *degree.entry(partition[u]).or_insert(0.0) += w;
        *degree.entry(partition[v]).or_insert(0.0) += w;
        if partition[u] == partition[v] {
            *internal.entry(partition[u]).or_insert(0.0) += w;
        }
    }
    Ok(degree
        .iter()
        .map(|(c, &k)| {
            let l = internal.get(c).copied().unwrap_or(0.0);
            l / m - resolution * (k / (2.0 * m)).powi(2)
        })
        .sum())
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct DetectionConfig {
    pub resolution: f64,
    pub seed: u64,
    pub max_sweeps: usize,
    pub max_levels: usize,
}

impl Default for DetectionConfig {
    fn default() -> Self {
        Self {
            resolution: 1.0,
            seed: 0,
            max_sweeps: 1000,
            max_levels: 64,
        }
    }
}

/// Graph collapsed to one node per community at some level.
struct Level {
    adj: Vec<Vec<(usize, f64)>>,
    self_loops: Vec<f64>,
    degree: Vec<f64>,
}

impl Level {
    fn from_graph(g: &UndirectedGraph) -> Self {
        let n = g.node_count;
        let mut adj = vec![Vec::new(); n];
        let mut self_loops = vec![0.0; n];
        for (u, v, w) in g.edges() {
            if u == v {
                self_loops[u] += w;
            } else {
                adj[u].push((v, w));
                adj[v].push((u, w));
            }
        }
        let degree = g.degrees();
        Self {
            adj,
            self_loops,
            degree,
        }
    }

    fn len(&self) -> usize {
        self.adj.len()
    }

    /// Local-move phase from `start`. Returns dense labels and whether anything moved.
    ///
    /// Candidates are the current community, neighboring communities, and an
    /// empty community; a node moves only on a strictly positive gain.
    fn local_moves(&self, start: Vec<usize>, m: f64, cfg: &DetectionConfig, rng: &mut ChaCha8Rng) -> (Vec<usize>, bool) {
        let n = self.len();
        let mut comm = start;
        let mut tot = vec![0.0; n];
        let mut size = vec![0usize; n];
        for (node, &c) in comm.iter().enumerate() {
            tot[c] += self.degree[node];
            size[c] += 1;
        }
        let mut moved_any = false;
        let eps = 1e-12 * m.max(1.0);

        for _ in 0..cfg.max_sweeps {
            let mut moved = false;
            for node in 0..n {
                let k = self.degree[node];
                let current = comm[node];
                tot[current] -= k;
                size[current] -= 1;

                let mut links: BTreeMap<usize, f64> = BTreeMap::new();
                links.insert(current, 0.0);
                for &(nb, w) in &self.adj[node] {
                    *links.entry(comm[nb]).or_insert(0.0) += w;
                }
                if size[current] > 0 {
                    let free = (0..n).find(|&c| size[c] == 0).expect("a label is free");
                    links.entry(free).or_insert(0.0);
                }
                let gain = |c: usize, l: f64| l - cfg.resolution * tot[c] * k / (2.0 * m);
                let stay = gain(current, links[&current]);
                let best = links
                    .iter()
                    .map(|(&c, &l)| gain(c, l))
                    .fold(f64::NEG_INFINITY, f64::max);

                let mut target = current;
                if best > stay + eps {
                    let tied: Vec<usize> = links
                        .iter()
                        .filter(|(&c, &l)| gain(c, l) >= best - eps)
                        .map(|(&c, _)| c)
                        .collect();
                    target = if tied.len() == 1 {
                        tied[0]
                    } else {
                        tied[rng.random_range(0..tied.len())]
                    };
                }
                tot[target] += k;
                size[target] += 1;
                if target != current {
                    comm[node] = target;
                    moved = true;
                    moved_any = true;
                }
            }
            if !moved {
                break;
            }
        }
        (normalize_labels(&comm), moved_any)
    }

    /// Splits each community of `parent` into greedily merged sub-communities.
    ///
    /// Starting from singletons, each node still on its own joins the adjacent
    /// sub-community of the same parent with the best positive gain.
    fn refine(&self, parent: &[usize], m: f64, cfg: &DetectionConfig) -> Vec<usize> {
        let n = self.len();
        let mut comm: Vec<usize> = (0..n).collect();
        let mut tot = self.degree.clone();
        let mut size = vec![1usize; n];
        let eps = 1e-12 * m.max(1.0);
        for node in 0..n {
            if size[comm[node]] != 1 {
                continue;
            }
            let k = self.degree[node];
            let own = comm[node];
            let mut links: BTreeMap<usize, f64> = BTreeMap::new();
            for &(nb, w) in &self.adj[node] {
                if parent[nb] == parent[node] && comm[nb] != own {
                    *links.entry(comm[nb]).or_insert(0.0) += w;
                }
            }
            let gain = |c: usize, l: f64| l - cfg.resolution * tot[c] * k / (2.0 * m);
            let best = links
                .iter()
                .map(|(&c, &l)| (c, gain(c, l)))
                .fold(None, |acc: Option<(usize, f64)>, (c, g)| match acc {
                    Some((_, bg)) if bg >= g => acc,
                    _ => Some((c, g)),
                });
            if let Some((target, g)) = best {
                if g > eps {
                    tot[own] -= k;
                    size[own] -= 1;
                    tot[target] += k;
                    size[target] += 1;
                    comm[node] = target;
                }
            }
        }
        normalize_labels(&comm)
    }

    /// Kernighan-Lin style pass: every node is moved exactly once, each time
    /// taking the best available move even if it lowers Q, and the best
    /// intermediate partition is kept. Repeats while a pass improves Q.
    fn fine_tune(&self, start: Vec<usize>, m: f64, cfg: &DetectionConfig) -> Vec<usize> {
        let n = self.len();
        let mut comm = start;
        let mut tot = vec![0.0; n];
        let mut size = vec![0usize; n];
        for (node, &c) in comm.iter().enumerate() {
            tot[c] += self.degree[node];
            size[c] += 1;
        }
        let eps = 1e-12;

        for _ in 0..cfg.max_sweeps {
            let mut locked = vec![false; n];
            let mut history: Vec<(usize, usize, usize)> = Vec::with_capacity(n);
            let mut running = 0.0;
            let mut best = 0.0;
            let mut best_len = 0;

            for _ in 0..n {
                let mut choice: Option<(f64, usize, usize)> = None;
                for node in (0..n).filter(|&v| !locked[v]) {
                    let k = self.degree[node];
                    let current = comm[node];
                    let mut links: BTreeMap<usize, f64> = BTreeMap::new();
                    for &(nb, w) in &self.adj[node] {
                        *links.entry(comm[nb]).or_insert(0.0) += w;
                    }
                    let own_links = links.remove(&current).unwrap_or(0.0);
                    if size[current] > 1 {
                        let free = (0..n).find(|&c| size[c] == 0).expect("a label is free");
                        links.insert(free, 0.0);
                    }
                    let rest = tot[current] - k;
                    for (&c, &l) in &links {
                        let delta = ((l - own_links) - cfg.resolution * k * (tot[c] - rest) / (2.0 * m)) / m;
                        if choice.is_none_or(|(d, _, _)| delta > d + eps) {
                            choice = Some((delta, node, c));
                        }
                    }
                }
                let Some((delta, node, target)) = choice else {
                    break;
                };
                let from = comm[node];
                let k = self.degree[node];
                tot[from] -= k;
                size[from] -= 1;
                tot[target] += k;
                size[target] += 1;
                comm[node] = target;
                locked[node] = true;
                history.push((node, from, target));
                running += delta;
                if running > best + eps {
                    best = running;
                    best_len = history.len();
                }
            }

            for &(node, from, target) in history[best_len..].iter().rev() {
                let k = self.degree[node];
                tot[target] -= k;
                size[target] -= 1;
                tot[from] += k;
                size[from] += 1;
                comm[node] = from;
            }
            if best_len == 0 {
                break;
            }
        }
        normalize_labels(&comm)
    }

    /// Recursive bisection by the sign of the leading eigenvector of the
    /// (generalized) modularity matrix. A group is left whole when its
    /// leading eigenvalue or the split's gain is not positive.
    fn spectral_partition(&self, m: f64, cfg: &DetectionConfig) -> Vec<usize> {
        let n = self.len();
        let mut comm = vec![0usize; n];
        let mut next_label = 1;
        let mut pending = vec![0usize];
        while let Some(label) = pending.pop() {
            let group: Vec<usize> = (0..n).filter(|&i| comm[i] == label).collect();
            if group.len() < 2 {
                continue;
            }
            let Some(signs) = self.leading_split(&group, &comm, label, m, cfg) else {
                continue;
            };
            let new_label = next_label;
            next_label += 1;
            for (&node, &positive) in group.iter().zip(&signs) {
                if !positive {
                    comm[node] = new_label;
                }
            }
            pending.push(label);
            pending.push(new_label);
        }
        normalize_labels(&comm)
    }

    fn leading_split(&self, group: &[usize], comm: &[usize], label: usize, m: f64, cfg: &DetectionConfig) -> Option<Vec<bool>> {
        let size = group.len();
        let pos: HashMap<usize, usize> = group.iter().enumerate().map(|(i, &v)| (v, i)).collect();
        let k: Vec<f64> = group.iter().map(|&v| self.degree[v]).collect();
        let k_group: f64 = k.iter().sum();
        let gamma = cfg.resolution;
        // row sums of the restricted modularity matrix
        let row_sum: Vec<f64> = group
            .iter()
            .enumerate()
            .map(|(i, &v)| {
                let inside: f64 = self.adj[v]
                    .iter()
                    .filter(|(u, _)| comm[*u] == label)
                    .map(|(_, w)| w)
                    .sum::<f64>()
                    + 2.0 * self.self_loops[v];
                inside - gamma * k[i] * k_group / (2.0 * m)
            })
            .collect();
        let apply = |x: &[f64]| -> Vec<f64> {
            let kx: f64 = k.iter().zip(x).map(|(a, b)| a * b).sum();
            group
                .iter()
                .enumerate()
                .map(|(i, &v)| {
                    let ax: f64 = self.adj[v]
                        .iter()
                        .filter_map(|(u, w)| pos.get(u).map(|&j| w * x[j]))
                        .sum::<f64>()
                        + 2.0 * self.self_loops[v] * x[i];
                    ax - gamma * k[i] * kx / (2.0 * m) - row_sum[i] * x[i]
                })
                .collect()
        };
        let shift = group
            .iter()
            .enumerate()
            .map(|(i, &v)| {
                let a: f64 = self.adj[v].iter().map(|(_, w)| w).sum::<f64>() + 2.0 * self.self_loops[v];
                a + gamma * k[i] * k_group / (2.0 * m) + row_sum[i].abs()
            })
            .fold(0.0, f64::max)
            + 1.0;

        let norm = |x: &mut [f64]| {
            let len = x.iter().map(|a| a * a).sum::<f64>().sqrt();
            if len > 0.0 {
                x.iter_mut().for_each(|a| *a /= len);
            }
        };
        let mut x: Vec<f64> = (0..size).map(|i| 1.0 + ((i * 7919) % 13) as f64 / 13.0).collect();
        norm(&mut x);
        for _ in 0..1000 {
            let bx = apply(&x);
            let mut y: Vec<f64> = bx.iter().zip(&x).map(|(b, a)| b + shift * a).collect();
            norm(&mut y);
            let diff: f64 = y.iter().zip(&x).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
            x = y;
            if diff < 1e-10 {
                break;
            }
        }
        let bx = apply(&x);
        let eigenvalue: f64 = bx.iter().zip(&x).map(|(a, b)| a * b).sum();
        if eigenvalue <= 1e-10 {
            return None;
        }
        let signs: Vec<bool> = x.iter().map(|&a| a >= 0.0).collect();
        if signs.iter().all(|&p| p) || signs.iter().all(|&p| !p) {
            return None;
        }
        let s: Vec<f64> = signs.iter().map(|&p| if p { 1.0 } else { -1.0 }).collect();
        let gain: f64 = apply(&s).iter().zip(&s).map(|(a, b)| a * b).sum::<f64>() / (4.0 * m);
        (gain > 1e-12).then_some(signs)
    }

    fn aggregate(&self, comm: &[usize]) -> Level {
        let count = comm.iter().max().map_or(0, |&c| c + 1);
        let mut g = UndirectedGraph::new(count);
        for u in 0..self.len() {
            if self.self_loops[u] != 0.0 {
                g.add_edge(comm[u], comm[u], self.self_loops[u]);
            }
            for &(v, w) in &self.adj[u] {
                if u < v {
                    g.add_edge(comm[u], comm[v], w);
                }
            }
        }
        Level::from_graph(&g)
    }
}

/// Local moves, refinement and aggregation repeated until refinement can no
/// longer merge anything. Returns labels for the base level's nodes.
fn run_levels(base: &Level, start: Vec<usize>, m: f64, cfg: &DetectionConfig, rng: &mut ChaCha8Rng) -> Vec<usize> {
    let mut level_of: Vec<usize> = (0..base.len()).collect();
    let mut owned;
    let mut level = base;
    let mut partition = start;
    for _ in 0..cfg.max_levels {
        let (moved, _) = level.local_moves(partition, m, cfg, rng);
        partition = moved;
        let refined = level.refine(&partition, m, cfg);
        let count = refined.iter().max().map_or(0, |&c| c + 1);
        if count == level.len() {
            break;
        }
        let mut next_partition = vec![0; count];
        for (node, &r) in refined.iter().enumerate() {
            next_partition[r] = partition[node];
        }
        for l in level_of.iter_mut() {
            *l = refined[*l];
        }
        owned = level.aggregate(&refined);
        level = &owned;
        partition = next_partition;
    }
    normalize_labels(&level_of.iter().map(|&l| partition[l]).collect::<Vec<_>>())
}

/// Level phases plus fine-tuning, restarted from the best partition until Q stops improving.
fn improve(
    graph: &UndirectedGraph,
    base: &Level,
    start: Vec<usize>,
    m: f64,
    cfg: &DetectionConfig,
    rng: &mut ChaCha8Rng,
) -> Result<(Vec<usize>, f64), GraphError> {
    let mut best = normalize_labels(&start);
    let mut best_q = modularity_with_resolution(graph, &best, cfg.resolution)?;
    for _ in 0..cfg.max_levels {
        let leveled = run_levels(base, best.clone(), m, cfg, rng);
        let candidate = base.fine_tune(leveled, m, cfg);
        let q = modularity_with_resolution(graph, &candidate, cfg.resolution)?;
        if q <= best_q + 1e-12 {
            break;
        }
        best = candidate;
        best_q = q;
    }
    Ok((best, best_q))
}

/// Greedy modularity maximization with default settings and the given tie-break seed.
pub fn detect_communities(graph: &UndirectedGraph, seed: u64) -> Result<CommunityAssignment, GraphError> {
    detect_communities_with(
        graph,
        &DetectionConfig {
            seed,
            ..DetectionConfig::default()
        },
    )
}

pub fn detect_communities_with(graph: &UndirectedGraph, cfg: &DetectionConfig) -> Result<CommunityAssignment, GraphError> {
    let m = graph.total_weight();
    if m <= 0.0 {
        return Err(GraphError::NoEdges);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let base = Level::from_graph(graph);

    let singletons: Vec<usize> = (0..graph.node_count).collect();
    let (greedy, greedy_q) = improve(graph, &base, singletons, m, cfg, &mut rng)?;
    let spectral = base.fine_tune(base.spectral_partition(m, cfg), m, cfg);
    let (spectral, spectral_q) = improve(graph, &base, spectral, m, cfg, &mut rng)?;
    let best = if spectral_q > greedy_q + 1e-12 { spectral } else { greedy };

    let assignment = best;
    let communities = normalize_labels(&assignment);
    let modularity = modularity_with_resolution(graph, &communities, cfg.resolution)?;
    Ok(CommunityAssignment {
        communities,
        modularity,
    })
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SocialEdge {
    pub src: String,
    pub dst: String,
    pub weight: u64,
}

/// Directed account network: `src -> dst` when `src` mentions or retweets `dst`.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct SocialGraph {
    pub nodes: Vec<String>,
    pub edges: Vec<SocialEdge>,
}

/// Edge weight is the number of tweets by `src` that mention or retweet `dst`.
pub fn build_social_graph(corpus: &Corpus, registry: &AccountRegistry) -> SocialGraph {
    let mut weights: BTreeMap<(String, String), u64> = BTreeMap::new();
    for t in corpus.tweets() {
        let targets: BTreeSet<&str> = t
            .mentions
            .iter()
            .chain(t.retweet_of.iter())
            .filter_map(|h| registry.get(h))
            .map(|a| a.id.as_str())
            .filter(|id| *id != t.account_id)
            .collect();
        for dst in targets {
            *weights.entry((t.account_id.clone(), dst.to_string())).or_insert(0) += 1;
        }
    }
    SocialGraph {
        nodes: registry.accounts().iter().map(|a| a.id.clone()).collect(),
        edges: weights
            .into_iter()
            .map(|((src, dst), weight)| SocialEdge { src, dst, weight })
            .collect(),
    }
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize)]
pub struct Neighbors {
    /// Accounts referencing this one, heaviest first.
    pub incoming: Vec<(String, u64)>,
    /// Accounts this one references, heaviest first.
    pub outgoing: Vec<(String, u64)>,
}

pub fn account_neighbors(graph: &SocialGraph, account: &str) -> Result<Neighbors, GraphError> {
    if !graph.nodes.iter().any(|n| n == account) {
        return Err(GraphError::UnknownAccount(account.to_string()));
    }
    let sort = |v: &mut Vec<(String, u64)>| v.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
    let mut incoming: Vec<(String, u64)> = graph
        .edges
        .iter()
        .filter(|e| e.dst == account)
        .map(|e| (e.src.clone(), e.weight))
        .collect();
    let mut outgoing: Vec<(String, u64)> = graph
        .edges
        .iter()
        .filter(|e| e.src == account)
        .map(|e| (e.dst.clone(), e.weight))
        .collect();
    sort(&mut incoming);
    sort(&mut outgoing);
    Ok(Neighbors { incoming, outgoing })
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct BipartiteEdge {
    pub account: String,
    pub entity: String,
    pub weight: u64,
}

/// Accounts on one side, entities on the other; weight = mention count.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct BipartiteGraph {
    pub accounts: Vec<String>,
    pub entities: Vec<String>,
    pub edges: Vec<BipartiteEdge>,
}

pub fn build_bipartite(index: &EntityIndex) -> BipartiteGraph {
    let mut accounts = BTreeSet::new();
    let mut entities = BTreeSet::new();
    let mut edges = Vec::new();
    for (entity, account, weight) in index.pairs() {
        if weight == 0 {
            continue;
        }
        accounts.insert(account.to_string());
        entities.insert(entity.to_string());
        edges.push(BipartiteEdge {
            account: account.to_string(),
            entity: entity.to_string(),
            weight,
        });
    }
    edges.sort_by(|a, b| a.account.cmp(&b.account).then_with(|| a.entity.cmp(&b.entity)));
    BipartiteGraph {
        accounts: accounts.into_iter().collect(),
        entities: entities.into_iter().collect(),
        edges,
    }
}

impl BipartiteGraph {
    /// Plain weighted graph with accounts as nodes `0..A` and entities as `A..A+E`.
    pub fn to_undirected(&self) -> UndirectedGraph {
        let acc: HashMap<&str, usize> = self.accounts.iter().enumerate().map(|(i, a)| (a.as_str(), i)).collect();
        let ent: HashMap<&str, usize> = self
            .entities
            .iter()
            .enumerate()
            .map(|(i, e)| (e.as_str(), self.accounts.len() + i))
            .collect();
        let mut g = UndirectedGraph::new(self.accounts.len() + self.entities.len());
        for e in &self.edges {
            g.add_edge(acc[e.account.as_str()], ent[e.entity.as_str()], e.weight as f64);
        }
        g
    }

    pub fn entity_degree(&self, entity: &str) -> usize {
        self.edges.iter().filter(|e| e.entity == entity).count()
    }
}

/// Communities over the bipartite graph; accounts and entities share ids.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct BipartiteCommunities {
    pub accounts: BTreeMap<String, usize>,
    pub entities: BTreeMap<String, usize>,
    pub community_count: usize,
    pub modularity: f64,
}

impl BipartiteCommunities {
    pub fn accounts_in(&self, community: usize) -> Vec<&str> {
        self.accounts
            .iter()
            .filter(|(_, &c)| c == community)
            .map(|(a, _)| a.as_str())
            .collect()
    }

    pub fn entities_in(&self, community: usize) -> Vec<&str> {
        self.entities
            .iter()
            .filter(|(_, &c)| c == community)
            .map(|(e, _)| e.as_str())
            .collect()
    }
}

pub fn detect_bipartite_communities(graph: &BipartiteGraph, cfg: &DetectionConfig) -> Result<BipartiteCommunities, GraphError> {
    let assignment = detect_communities_with(&graph.to_undirected(), cfg)?;
    let a = graph.accounts.len();
    Ok(BipartiteCommunities {
        accounts: graph
            .accounts
            .iter()
            .enumerate()
            .map(|(i, id)| (id.clone(), assignment.communities[i]))
            .collect(),
        entities: graph
            .entities
            .iter()
            .enumerate()
            .map(|(i, e)| (e.clone(), assignment.communities[a + i]))
            .collect(),
        community_count: assignment.community_count(),
        modularity: assignment.modularity,
    })
}

/// Top `k` entities by mention count summed over the community's accounts.
pub fn community_entity_cloud(
    communities: &BipartiteCommunities,
    index: &EntityIndex,
    community: usize,
    k: usize,
) -> Result<Vec<(String, u64)>, GraphError> {
    if community >= communities.community_count {
        return Err(GraphError::UnknownCommunity(community));
    }
    Ok(index.top_for_accounts(communities.accounts_in(community), k))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExportNode {
    pub id: String,
    /// `real` / `suspicious` for accounts, the entity type for entities.
    pub label: String,
    pub community: Option<usize>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExportEdge {
    pub src: String,
    pub dst: String,
    pub weight: u64,
    pub kind: String,
}

/// Node/edge listing consumed by the network view.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GraphExport {
    pub nodes: Vec<ExportNode>,
    pub edges: Vec<ExportEdge>,
}

pub fn export_social(graph: &SocialGraph, registry: &AccountRegistry, communities: &BipartiteCommunities) -> GraphExport {
    GraphExport {
        nodes: graph
            .nodes
            .iter()
            .map(|id| ExportNode {
                id: id.clone(),
                label: registry.label_of(id).map(|l| l.to_string()).unwrap_or_default(),
                community: communities.accounts.get(id).copied(),
            })
            .collect(),
        edges: graph
            .edges
            .iter()
            .map(|e| ExportEdge {
                src: e.src.clone(),
                dst: e.dst.clone(),
                weight: e.weight,
                kind: "mention_retweet".into(),
            })
            .collect(),
    }
}

pub fn export_bipartite(
    graph: &BipartiteGraph,
    registry: &AccountRegistry,
    index: &EntityIndex,
    communities: &BipartiteCommunities,
) -> GraphExport {
    let accounts = graph.accounts.iter().map(|id| ExportNode {
        id: id.clone(),
        label: registry.label_of(id).map(|l| l.to_string()).unwrap_or_default(),
        community: communities.accounts.get(id).copied(),
    });
    let entities = graph.entities.iter().map(|e| ExportNode {
        id: e.clone(),
        label: index.kind(e).map(|k| k.to_string()).unwrap_or_default(),
        community: communities.entities.get(e).copied(),
    });
    GraphExport {
        nodes: accounts.chain(entities).collect(),
        edges: graph
            .edges
            .iter()
            .map(|e| ExportEdge {
                src: e.account.clone(),
                dst: e.entity.clone(),
                weight: e.weight,
                kind: "mentions_entity".into(),
            })
            .collect(),
    }
}
