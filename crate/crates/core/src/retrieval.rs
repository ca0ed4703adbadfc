//! Connecting-path retrieval between linked entities.
//!
//! A bounded BFS is run from every seed. A pair of seeds is connected when one
//! seed lies inside the other's search ball; its paths are then recovered by a
//! depth-first walk from the smaller endpoint that only enters nodes whose BFS
//! distance to the other endpoint still fits in the remaining hop budget.
//! Paths are simple and ranked by `(hops, node-id sequence, triplet
//! sequence)`; the first `max_paths_per_pair` are kept per pair.

use std::collections::{HashMap, HashSet, VecDeque};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::exec::Execution;
use crate::kg::{KnowledgeGraph, NodeId, Triplet};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct RetrievalConfig {
    pub max_hops: usize,
    pub max_paths_per_pair: usize,
}

impl Default for RetrievalConfig {
    fn default() -> Self {
        Self { max_hops: 3, max_paths_per_pair: 4 }
    }
}

impl RetrievalConfig {
    pub fn validate(&self) -> Result<(), RetrievalError> {
        if self.max_hops == 0 {
            return Err(RetrievalError::InvalidConfig("max_hops must be at least 1".into()));
        }
        if self.max_paths_per_pair == 0 {
            return Err(RetrievalError::InvalidConfig("max_paths_per_pair must be at least 1".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum RetrievalError {
    #[error("unknown seed node `{0}`")]
    UnknownSeed(NodeId),
    #[error("invalid retrieval config: {0}")]
    InvalidConfig(String),
}

/// A simple path between two seeds, oriented from the smaller endpoint id.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct KgPath {
    pub endpoints: (NodeId, NodeId),
    pub nodes: Vec<NodeId>,
    pub edges: Vec<Triplet>,
}

impl KgPath {
    pub fn hops(&self) -> usize {
        self.edges.len()
    }

    fn rank_key(&self) -> (usize, &[NodeId], &[Triplet]) {
        (self.edges.len(), &self.nodes, &self.edges)
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct RetrievedTriplets {
    pub paths: Vec<KgPath>,
    /// Union of all path edges, deduplicated, in order of first appearance.
    pub triplets: Vec<Triplet>,
}

impl RetrievedTriplets {
    pub fn from_paths(paths: Vec<KgPath>) -> Self {
        let mut seen = HashSet::new();
        let triplets = paths
            .iter()
            .flat_map(|p| p.edges.iter())
            .filter(|t| seen.insert((*t).clone()))
            .cloned()
            .collect();
        Self { paths, triplets }
    }

    pub fn is_empty(&self) -> bool {
        self.paths.is_empty()
    }

    /// Concatenates paths from several retrievals and re-derives the triplet
    /// union.
    pub fn merge(parts: impl IntoIterator<Item = RetrievedTriplets>) -> Self {
        Self::from_paths(parts.into_iter().flat_map(|r| r.paths).collect())
    }
}

/// Hop distance from a seed to every node within `max_hops`.
fn bounded_bfs(kg: &KnowledgeGraph, seed: u32, max_hops: usize) -> HashMap<u32, usize> {
    let mut dist = HashMap::new();
    dist.insert(seed, 0);
    let mut queue = VecDeque::from([seed]);
    while let Some(x) = queue.pop_front() {
        let d = dist[&x];
        if d == max_hops {
            continue;
        }
        for &(n, _) in kg.adjacency_at(x) {
            dist.entry(n).or_insert_with(|| {
                queue.push_back(n);
                d + 1
            });
        }
    }
    dist
}

struct PairSearch<'a> {
    kg: &'a KnowledgeGraph,
    target: u32,
    to_target: &'a HashMap<u32, usize>,
    limit: usize,
    stack: Vec<u32>,
    on_path: HashSet<u32>,
    found: Vec<Vec<u32>>,
}

impl PairSearch<'_> {
    /// Emits node sequences of exactly `remaining` more hops, in lexicographic
    /// node order.
    fn walk(&mut self, x: u32, remaining: usize) {
        if self.found.len() >= self.limit {
            return;
        }
        if x == self.target {
            if remaining == 0 {
                self.found.push(self.stack.clone());
            }
            return;
        }
        if remaining == 0 {
            return;
        }
        let adj = self.kg.adjacency_at(x);
        let mut i = 0;
        while i < adj.len() {
            let n = adj[i].0;
            while i < adj.len() && adj[i].0 == n {
                i += 1;
            }
            if self.on_path.contains(&n) {
                continue;
            }
            match self.to_target.get(&n) {
                Some(&d) if d < remaining => {}
                _ => continue,
            }
            self.stack.push(n);
            self.on_path.insert(n);
            self.walk(n, remaining - 1);
            self.on_path.remove(&n);
            self.stack.pop();
            if self.found.len() >= self.limit {
                return;
            }
        }
    }
}

/// Every edge choice along a node sequence, in triplet order.
fn expand_edges(kg: &KnowledgeGraph, nodes: &[u32], limit: usize, out: &mut Vec<Vec<u32>>) {
    let hops: Vec<Vec<u32>> = nodes
        .windows(2)
        .map(|w| kg.adjacency_at(w[0]).iter().filter(|&&(n, _)| n == w[1]).map(|&(_, e)| e).collect())
        .collect();
    let mut choice = vec![0usize; hops.len()];
    loop {
        if out.len() >= limit {
            return;
        }
        out.push(choice.iter().zip(&hops).map(|(&c, h)| h[c]).collect());
        // Odometer increment, last position fastest.
        let mut k = hops.len();
        loop {
            if k == 0 {
                return;
            }
            k -= 1;
            choice[k] += 1;
            if choice[k] < hops[k].len() {
                break;
            }
            choice[k] = 0;
        }
    }
}

fn pair_paths_indexed(
    kg: &KnowledgeGraph,
    (u, v): (u32, u32),
    from_u: &HashMap<u32, usize>,
    from_v: &HashMap<u32, usize>,
    cfg: &RetrievalConfig,
) -> Vec<KgPath> {
    let Some(&shortest) = from_u.get(&v) else {
        return Vec::new();
    };
    if u == v {
        return Vec::new();
    }
    let limit = cfg.max_paths_per_pair;
    let mut paths = Vec::new();
    for length in shortest..=cfg.max_hops {
        let mut search = PairSearch {
            kg,
            target: v,
            to_target: from_v,
            limit: limit - paths.len(),
            stack: vec![u],
            on_path: HashSet::from([u]),
            found: Vec::new(),
        };
        search.walk(u, length);
        for seq in search.found {
            let mut edge_choices = Vec::new();
            expand_edges(kg, &seq, limit - paths.len(), &mut edge_choices);
            for edges in edge_choices {
                paths.push(KgPath {
                    endpoints: (kg.id_at(u).clone(), kg.id_at(v).clone()),
                    nodes: seq.iter().map(|&x| kg.id_at(x).clone()).collect(),
                    edges: edges.iter().map(|&e| kg.edge_at(e).clone()).collect(),
                });
            }
            if paths.len() >= limit {
                return paths;
            }
        }
    }
    paths
}

fn resolve_seeds(kg: &KnowledgeGraph, seeds: &[NodeId]) -> Result<Vec<u32>, RetrievalError> {
    let mut idx = seeds
        .iter()
        .map(|s| kg.index_of(s).ok_or_else(|| RetrievalError::UnknownSeed(s.clone())))
        .collect::<Result<Vec<_>, _>>()?;
    idx.sort_unstable();
    idx.dedup();
    Ok(idx)
}

/// The top-ranked connecting paths for one pair of nodes.
pub fn pair_paths(
    kg: &KnowledgeGraph,
    a: &NodeId,
    b: &NodeId,
    cfg: &RetrievalConfig,
) -> Result<Vec<KgPath>, RetrievalError> {
    cfg.validate()?;
    let ia = kg.index_of(a).ok_or_else(|| RetrievalError::UnknownSeed(a.clone()))?;
    let ib = kg.index_of(b).ok_or_else(|| RetrievalError::UnknownSeed(b.clone()))?;
    let (u, v) = if ia <= ib { (ia, ib) } else { (ib, ia) };
    let from_u = bounded_bfs(kg, u, cfg.max_hops);
    let from_v = bounded_bfs(kg, v, cfg.max_hops);
    Ok(pair_paths_indexed(kg, (u, v), &from_u, &from_v, cfg))
}

pub fn retrieve(
    kg: &KnowledgeGraph,
    seeds: &[NodeId],
    cfg: &RetrievalConfig,
) -> Result<RetrievedTriplets, RetrievalError> {
    retrieve_with(kg, seeds, cfg, Execution::default())
}

/// Paths for every unordered pair of distinct seeds. Pairs are reported in
/// seed-id order; output is identical under either execution strategy.
pub fn retrieve_with(
    kg: &KnowledgeGraph,
    seeds: &[NodeId],
    cfg: &RetrievalConfig,
    exec: Execution,
) -> Result<RetrievedTriplets, RetrievalError> {
    cfg.validate()?;
    let seeds = resolve_seeds(kg, seeds)?;
    let balls = exec.map(&seeds, |&s| bounded_bfs(kg, s, cfg.max_hops));
    let pairs: Vec<(usize, usize)> =
        (0..seeds.len()).flat_map(|i| (i + 1..seeds.len()).map(move |j| (i, j))).collect();
    let per_pair = exec.map(&pairs, |&(i, j)| {
        pair_paths_indexed(kg, (seeds[i], seeds[j]), &balls[i], &balls[j], cfg)
    });
    Ok(RetrievedTriplets::from_paths(per_pair.into_iter().flatten().collect()))
}

/// Exhaustive enumeration of every simple path of 1..=`max_hops` edges
/// between `u` and `v`, sorted by `(hops, node ids, triplets)`. Builds its own
/// adjacency from the raw edge list and does no pruning; used to check
/// [`retrieve`].
pub fn enumerate_paths_oracle(
    kg: &KnowledgeGraph,
    u: &NodeId,
    v: &NodeId,
    max_hops: usize,
) -> Result<Vec<KgPath>, RetrievalError> {
    for id in [u, v] {
        if !kg.contains_node(id) {
            return Err(RetrievalError::UnknownSeed(id.clone()));
        }
    }
    if u == v {
        return Ok(Vec::new());
    }
    let (u, v) = if u <= v { (u, v) } else { (v, u) };

    let mut adj: HashMap<&NodeId, Vec<(&NodeId, &Triplet)>> = HashMap::new();
    for t in kg.edges() {
        if t.subject == t.object {
            continue;
        }
        adj.entry(&t.subject).or_default().push((&t.object, t));
        adj.entry(&t.object).or_default().push((&t.subject, t));
    }

    fn dfs<'a>(
        adj: &HashMap<&'a NodeId, Vec<(&'a NodeId, &'a Triplet)>>,
        target: &NodeId,
        max_hops: usize,
        nodes: &mut Vec<&'a NodeId>,
        edges: &mut Vec<&'a Triplet>,
        out: &mut Vec<(Vec<NodeId>, Vec<Triplet>)>,
    ) {
        let here = *nodes.last().expect("path starts non-empty");
        if here == target {
            out.push((nodes.iter().map(|&n| n.clone()).collect(), edges.iter().map(|&t| t.clone()).collect()));
            return;
        }
        if edges.len() == max_hops {
            return;
        }
        for &(next, t) in adj.get(here).map(Vec::as_slice).unwrap_or(&[]) {
            if nodes.contains(&next) {
                continue;
            }
            nodes.push(next);
            edges.push(t);
            dfs(adj, target, max_hops, nodes, edges, out);
            nodes.pop();
            edges.pop();
        }
    }

    let mut raw = Vec::new();
    dfs(&adj, v, max_hops, &mut vec![u], &mut Vec::new(), &mut raw);
    let mut paths: Vec<KgPath> = raw
        .into_iter()
        .map(|(nodes, edges)| KgPath { endpoints: (u.clone(), v.clone()), nodes, edges })
        .collect();
    paths.sort_by(|a, b| a.rank_key().cmp(&b.rank_key()));
    Ok(paths)
}
