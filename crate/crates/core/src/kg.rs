//! Triplet knowledge graph: loading from TSV/JSONL snapshots, the undirected
//! adjacency index used by retrieval, and the label/alias index used by entity
//! linking and triplet membership checks.
//!
//! The graph is immutable once built and is `Send + Sync`.

use std::cmp::Ordering;
use std::collections::{BTreeMap, HashMap, HashSet};
use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::text::normalize;

/// Opaque node identifier, e.g. a Wikidata-style `Q42`.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct NodeId(String);

impl NodeId {
    /// Returns `None` for an empty (or all-whitespace) id.
    pub fn new(id: impl Into<String>) -> Option<Self> {
        let id = id.into();
        let trimmed = id.trim();
        if trimmed.is_empty() {
            None
        } else if trimmed.len() == id.len() {
            Some(Self(id))
        } else {
            Some(Self(trimmed.to_string()))
        }
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl fmt::Display for NodeId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct KgNode {
    pub id: NodeId,
    pub label: String,
    #[serde(default)]
    pub description: String,
    #[serde(default)]
    pub aliases: Vec<String>,
}

/// One stored fact. Labels are carried alongside the ids so evidence can be
/// displayed without a graph handle; identity and ordering use
/// `(subject, predicate, object)` only.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Triplet {
    pub subject: NodeId,
    pub subject_label: String,
    pub predicate: String,
    pub object: NodeId,
    pub object_label: String,
}

impl Triplet {
    fn key(&self) -> (&NodeId, &str, &NodeId) {
        (&self.subject, &self.predicate, &self.object)
    }

    pub fn is_self_loop(&self) -> bool {
        self.subject == self.object
    }

    /// `(subject label, predicate, object label)`.
    pub fn render(&self) -> String {
        format!("({}, {}, {})", self.subject_label, self.predicate, self.object_label)
    }
}

impl PartialEq for Triplet {
    fn eq(&self, other: &Self) -> bool {
        self.key() == other.key()
    }
}

impl Eq for Triplet {}

impl std::hash::Hash for Triplet {
    fn hash<H: std::hash::Hasher>(&self, state: &mut H) {
        self.key().hash(state)
    }
}

impl PartialOrd for Triplet {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Triplet {
    fn cmp(&self, other: &Self) -> Ordering {
        self.key().cmp(&other.key())
    }
}

/// A triplet as written by a model or a user: labels only.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CandidateTriplet {
    pub subject: String,
    pub predicate: String,
    pub object: String,
}

impl CandidateTriplet {
    pub fn new(subject: impl Into<String>, predicate: impl Into<String>, object: impl Into<String>) -> Self {
        Self { subject: subject.into(), predicate: predicate.into(), object: object.into() }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum KgFormat {
    Tsv,
    Jsonl,
}

impl std::str::FromStr for KgFormat {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "tsv" => Ok(Self::Tsv),
            "jsonl" => Ok(Self::Jsonl),
            other => Err(format!("unknown knowledge graph format `{other}` (expected tsv or jsonl)")),
        }
    }
}

#[derive(Debug, Clone, Default)]
pub struct LoadOptions {
    /// Companion node file: TSV `node_id, description, alias1|alias2|...`
    /// or JSONL `{"id","label","description","aliases"}`.
    pub node_file: Option<PathBuf>,
    /// Skip malformed or dangling rows instead of failing.
    pub lenient: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct RejectedRow {
    pub file: PathBuf,
    pub line: usize,
    pub reason: String,
}

impl fmt::Display for RejectedRow {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}: {}", self.file.display(), self.line, self.reason)
    }
}

/// What happened during a load besides the graph itself.
#[derive(Debug, Clone, Default, Serialize)]
pub struct LoadReport {
    pub rejected: Vec<RejectedRow>,
    pub duplicate_triplets: usize,
    pub self_loops: usize,
    pub warnings: Vec<String>,
}

#[derive(Debug, Error)]
pub enum KgError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{} malformed row(s); first at {}", .rows.len(), .rows[0])]
    Malformed { rows: Vec<RejectedRow> },
    #[error("{file}:{line}: dangling reference to node `{id}`", file = .file.display())]
    Dangling { file: PathBuf, line: usize, id: String },
    #[error("unknown node `{0}`")]
    UnknownNode(String),
    #[error("node `{0}` has an empty label")]
    EmptyLabel(String),
}

/// Accumulates nodes and triplets, then freezes them into a [`KnowledgeGraph`].
#[derive(Debug, Default)]
pub struct KgBuilder {
    nodes: BTreeMap<NodeId, KgNode>,
    triplets: Vec<(NodeId, String, NodeId)>,
    seen: HashSet<(NodeId, String, NodeId)>,
    report: LoadReport,
}

impl KgBuilder {
    pub fn new() -> Self {
        Self::default()
    }

    /// Inserts a node, or merges description/aliases into an existing one.
    /// The first label seen for an id wins.
    pub fn add_node(&mut self, node: KgNode) -> Result<(), KgError> {
        if node.label.trim().is_empty() {
            return Err(KgError::EmptyLabel(node.id.to_string()));
        }
        match self.nodes.get_mut(&node.id) {
            Some(existing) => {
                if normalize(&existing.label) != normalize(&node.label) {
                    self.report.warnings.push(format!(
                        "node `{}` seen with labels `{}` and `{}`; keeping the first",
                        node.id, existing.label, node.label
                    ));
                }
                if existing.description.is_empty() {
                    existing.description = node.description;
                }
                existing.aliases.extend(node.aliases);
            }
            None => {
                self.nodes.insert(node.id.clone(), node);
            }
        }
        Ok(())
    }

    /// Shorthand for a node with no description or aliases.
    pub fn node(&mut self, id: &str, label: &str) -> &mut Self {
        let id = NodeId::new(id).expect("non-empty node id");
        self.add_node(KgNode { id, label: label.to_string(), description: String::new(), aliases: vec![] })
            .expect("non-empty label");
        self
    }

    pub fn has_node(&self, id: &NodeId) -> bool {
        self.nodes.contains_key(id)
    }

    fn node_mut(&mut self, id: &NodeId) -> Option<&mut KgNode> {
        self.nodes.get_mut(id)
    }

    /// Adds an edge between two existing nodes. Returns `false` for a
    /// duplicate, which is dropped.
    pub fn add_triplet(&mut self, subject: &str, predicate: &str, object: &str) -> Result<bool, KgError> {
        let s = NodeId::new(subject).ok_or_else(|| KgError::UnknownNode(subject.to_string()))?;
        let o = NodeId::new(object).ok_or_else(|| KgError::UnknownNode(object.to_string()))?;
        for id in [&s, &o] {
            if !self.nodes.contains_key(id) {
                return Err(KgError::UnknownNode(id.to_string()));
            }
        }
        let key = (s, predicate.trim().to_string(), o);
        if !self.seen.insert(key.clone()) {
            self.report.duplicate_triplets += 1;
            return Ok(false);
        }
        if key.0 == key.2 {
            self.report.self_loops += 1;
        }
        self.triplets.push(key);
        Ok(true)
    }

    /// Chainable [`add_triplet`](Self::add_triplet) for fixtures; panics on
    /// unknown nodes.
    pub fn edge(&mut self, subject: &str, predicate: &str, object: &str) -> &mut Self {
        self.add_triplet(subject, predicate, object).expect("edge endpoints must exist");
        self
    }

    pub fn build(&mut self) -> KnowledgeGraph {
        let builder = std::mem::take(self);
        builder.finish().0
    }

    fn finish(self) -> (KnowledgeGraph, LoadReport) {
        let KgBuilder { nodes, triplets, report, .. } = self;
        let nodes: Vec<KgNode> = nodes
            .into_values()
            .map(|mut n| {
                let label_key = normalize(&n.label);
                let mut seen = HashSet::new();
                seen.insert(label_key);
                n.aliases.retain(|a| !a.trim().is_empty() && seen.insert(normalize(a)));
                n
            })
            .collect();
        let index: HashMap<NodeId, u32> =
            nodes.iter().enumerate().map(|(i, n)| (n.id.clone(), i as u32)).collect();

        let mut edges = Vec::with_capacity(triplets.len());
        let mut ends = Vec::with_capacity(triplets.len());
        let mut predicate_keys = Vec::with_capacity(triplets.len());
        for (s, p, o) in triplets {
            let si = index[&s];
            let oi = index[&o];
            predicate_keys.push(normalize(&p));
            edges.push(Triplet {
                subject_label: nodes[si as usize].label.clone(),
                object_label: nodes[oi as usize].label.clone(),
                subject: s,
                predicate: p,
                object: o,
            });
            ends.push((si, oi));
        }

        let mut adjacency: Vec<Vec<(u32, u32)>> = vec![Vec::new(); nodes.len()];
        for (ei, &(si, oi)) in ends.iter().enumerate() {
            adjacency[si as usize].push((oi, ei as u32));
            if si != oi {
                adjacency[oi as usize].push((si, ei as u32));
            }
        }
        for list in &mut adjacency {
            list.sort_by(|a, b| a.0.cmp(&b.0).then_with(|| edges[a.1 as usize].cmp(&edges[b.1 as usize])));
        }

        let mut label_index: HashMap<String, Vec<u32>> = HashMap::new();
        for (i, n) in nodes.iter().enumerate() {
            for surface in std::iter::once(&n.label).chain(n.aliases.iter()) {
                let list = label_index.entry(normalize(surface)).or_default();
                if list.last() != Some(&(i as u32)) {
                    list.push(i as u32);
                }
            }
        }
        let max_label_words =
            label_index.keys().map(|k| k.split(' ').count()).max().unwrap_or(0);

        let kg = KnowledgeGraph { nodes, index, edges, ends, predicate_keys, adjacency, label_index, max_label_words };
        (kg, report)
    }
}

/// Read-only, fully indexed knowledge graph. Nodes iterate in id order; edges
/// in first-occurrence order after deduplication.
#[derive(Debug, Clone)]
pub struct KnowledgeGraph {
    nodes: Vec<KgNode>,
    index: HashMap<NodeId, u32>,
    edges: Vec<Triplet>,
    ends: Vec<(u32, u32)>,
    predicate_keys: Vec<String>,
    adjacency: Vec<Vec<(u32, u32)>>,
    label_index: HashMap<String, Vec<u32>>,
    max_label_words: usize,
}

impl KnowledgeGraph {
    pub fn builder() -> KgBuilder {
        KgBuilder::new()
    }

    pub fn node_count(&self) -> usize {
        self.nodes.len()
    }

    pub fn edge_count(&self) -> usize {
        self.edges.len()
    }

    pub fn nodes(&self) -> impl Iterator<Item = &KgNode> {
        self.nodes.iter()
    }

    pub fn edges(&self) -> &[Triplet] {
        &self.edges
    }

    pub fn node(&self, id: &NodeId) -> Option<&KgNode> {
        self.index.get(id).map(|&i| &self.nodes[i as usize])
    }

    pub fn contains_node(&self, id: &NodeId) -> bool {
        self.index.contains_key(id)
    }

    /// Every `(neighbor, edge)` incident to `id`, in either direction, ordered
    /// by neighbor id and then by triplet.
    pub fn neighbors(&self, id: &NodeId) -> Vec<(&NodeId, &Triplet)> {
        match self.index.get(id) {
            Some(&i) => self.adjacency[i as usize]
                .iter()
                .map(|&(n, e)| (&self.nodes[n as usize].id, &self.edges[e as usize]))
                .collect(),
            None => Vec::new(),
        }
    }

    /// Node ids whose label or alias equals `surface` after normalization,
    /// in id order.
    pub fn lookup_by_label(&self, surface: &str) -> Vec<NodeId> {
        self.lookup_normalized(&normalize(surface))
    }

    pub(crate) fn lookup_normalized(&self, key: &str) -> Vec<NodeId> {
        self.label_index
            .get(key)
            .map(|ids| ids.iter().map(|&i| self.nodes[i as usize].id.clone()).collect())
            .unwrap_or_default()
    }

    pub(crate) fn has_label_key(&self, key: &str) -> bool {
        self.label_index.contains_key(key)
    }

    /// Largest word count among all normalized labels and aliases.
    pub(crate) fn max_label_words(&self) -> usize {
        self.max_label_words
    }

    /// Finds the stored triplet whose subject and object match the candidate
    /// labels (or aliases) and whose predicate matches, all after
    /// normalization. Direction matters. The earliest stored edge wins.
    pub fn contains_triplet(&self, candidate: &CandidateTriplet) -> Option<&Triplet> {
        let subjects = self.label_index.get(&normalize(&candidate.subject))?;
        let objects = self.label_index.get(&normalize(&candidate.object))?;
        let predicate = normalize(&candidate.predicate);
        subjects
            .iter()
            .flat_map(|&s| self.adjacency[s as usize].iter().map(move |&(n, e)| (s, n, e)))
            .filter(|&(s, n, e)| {
                let (es, eo) = self.ends[e as usize];
                es == s && eo == n && objects.contains(&n) && self.predicate_keys[e as usize] == predicate
            })
            .map(|(_, _, e)| e)
            .min()
            .map(|e| &self.edges[e as usize])
    }

    pub(crate) fn index_of(&self, id: &NodeId) -> Option<u32> {
        self.index.get(id).copied()
    }

    pub(crate) fn id_at(&self, idx: u32) -> &NodeId {
        &self.nodes[idx as usize].id
    }

    pub(crate) fn adjacency_at(&self, idx: u32) -> &[(u32, u32)] {
        &self.adjacency[idx as usize]
    }

    pub(crate) fn edge_at(&self, idx: u32) -> &Triplet {
        &self.edges[idx as usize]
    }
}

#[derive(Debug)]
struct RawRow {
    line: usize,
    subject: String,
    subject_label: Option<String>,
    predicate: String,
    object: String,
    object_label: Option<String>,
}

#[derive(Debug)]
struct RawNode {
    line: usize,
    id: String,
    label: Option<String>,
    description: String,
    aliases: Vec<String>,
}

#[derive(Deserialize)]
struct JsonTriplet {
    s_id: String,
    #[serde(default)]
    s_label: Option<String>,
    p: String,
    o_id: String,
    #[serde(default)]
    o_label: Option<String>,
}

#[derive(Deserialize)]
struct JsonNode {
    id: String,
    #[serde(default)]
    label: Option<String>,
    #[serde(default)]
    description: String,
    #[serde(default)]
    aliases: Vec<String>,
}

fn read(path: &Path) -> Result<String, KgError> {
    fs::read_to_string(path).map_err(|source| KgError::Io { path: path.to_path_buf(), source })
}

fn non_empty(s: &str) -> Option<String> {
    let t = s.trim();
    (!t.is_empty()).then(|| t.to_string())
}

fn content_lines(text: &str) -> impl Iterator<Item = (usize, &str)> {
    text.lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l.trim_end_matches('\r')))
        .filter(|(_, l)| !l.trim().is_empty())
}

fn parse_triplet_rows(text: &str, format: KgFormat) -> (Vec<RawRow>, Vec<(usize, String)>) {
    let mut rows = Vec::new();
    let mut bad = Vec::new();
    for (line, raw) in content_lines(text) {
        let parsed = match format {
            KgFormat::Tsv => {
                let cols: Vec<&str> = raw.split('\t').collect();
                if cols.len() != 5 {
                    Err(format!("expected 5 tab-separated columns, found {}", cols.len()))
                } else {
                    Ok(RawRow {
                        line,
                        subject: cols[0].trim().to_string(),
                        subject_label: non_empty(cols[1]),
                        predicate: cols[2].trim().to_string(),
                        object: cols[3].trim().to_string(),
                        object_label: non_empty(cols[4]),
                    })
                }
            }
            KgFormat::Jsonl => serde_json::from_str::<JsonTriplet>(raw)
                .map_err(|e| format!("invalid JSON triplet: {e}"))
                .map(|t| RawRow {
                    line,
                    subject: t.s_id.trim().to_string(),
                    subject_label: t.s_label.as_deref().and_then(non_empty),
                    predicate: t.p.trim().to_string(),
                    object: t.o_id.trim().to_string(),
                    object_label: t.o_label.as_deref().and_then(non_empty),
                }),
        };
        match parsed {
            Ok(r) if r.subject.is_empty() || r.object.is_empty() => bad.push((line, "empty node id".to_string())),
            Ok(r) if r.predicate.is_empty() => bad.push((line, "empty predicate".to_string())),
            Ok(r) => rows.push(r),
            Err(e) => bad.push((line, e)),
        }
    }
    (rows, bad)
}

fn parse_node_rows(text: &str, format: KgFormat) -> (Vec<RawNode>, Vec<(usize, String)>) {
    let mut rows = Vec::new();
    let mut bad = Vec::new();
    for (line, raw) in content_lines(text) {
        let parsed = match format {
            KgFormat::Tsv => {
                let cols: Vec<&str> = raw.split('\t').collect();
                if cols.is_empty() || cols.len() > 3 {
                    Err(format!("expected 1 to 3 tab-separated columns, found {}", cols.len()))
                } else {
                    Ok(RawNode {
                        line,
                        id: cols[0].trim().to_string(),
                        label: None,
                        description: cols.get(1).map(|s| s.trim().to_string()).unwrap_or_default(),
                        aliases: cols
                            .get(2)
                            .map(|s| s.split('|').filter_map(non_empty).collect())
                            .unwrap_or_default(),
                    })
                }
            }
            KgFormat::Jsonl => serde_json::from_str::<JsonNode>(raw)
                .map_err(|e| format!("invalid JSON node: {e}"))
                .map(|n| RawNode {
                    line,
                    id: n.id.trim().to_string(),
                    label: n.label.as_deref().and_then(non_empty),
                    description: n.description.trim().to_string(),
                    aliases: n.aliases.iter().filter_map(|a| non_empty(a)).collect(),
                }),
        };
        match parsed {
            Ok(n) if n.id.is_empty() => bad.push((line, "empty node id".to_string())),
            Ok(n) => rows.push(n),
            Err(e) => bad.push((line, e)),
        }
    }
    (rows, bad)
}

/// Loads a snapshot without a companion node file, failing on any malformed
/// row.
pub fn load_kg(path: &Path, format: KgFormat) -> Result<(KnowledgeGraph, LoadReport), KgError> {
    load_kg_with(path, format, &LoadOptions::default())
}

pub fn load_kg_with(
    path: &Path,
    format: KgFormat,
    opts: &LoadOptions,
) -> Result<(KnowledgeGraph, LoadReport), KgError> {
    let text = read(path)?;
    let (rows, bad_rows) = parse_triplet_rows(&text, format);
    let mut rejected: Vec<RejectedRow> = bad_rows
        .into_iter()
        .map(|(line, reason)| RejectedRow { file: path.to_path_buf(), line, reason })
        .collect();

    let mut node_rows = Vec::new();
    if let Some(node_path) = &opts.node_file {
        let node_text = read(node_path)?;
        let (parsed, bad) = parse_node_rows(&node_text, format);
        rejected.extend(bad.into_iter().map(|(line, reason)| RejectedRow { file: node_path.clone(), line, reason }));
        node_rows = parsed;
    }

    if !rejected.is_empty() && !opts.lenient {
        return Err(KgError::Malformed { rows: rejected });
    }

    let mut builder = KgBuilder::new();

    // Labelled node rows first, then labels carried on triplet rows.
    for n in node_rows.iter().filter(|n| n.label.is_some()) {
        let id = NodeId::new(n.id.as_str()).expect("checked non-empty");
        builder.add_node(KgNode {
            id,
            label: n.label.clone().expect("filtered"),
            description: n.description.clone(),
            aliases: n.aliases.clone(),
        })?;
    }
    for r in &rows {
        for (id, label) in [(&r.subject, &r.subject_label), (&r.object, &r.object_label)] {
            if let Some(label) = label {
                let id = NodeId::new(id.as_str()).expect("checked non-empty");
                builder.add_node(KgNode { id, label: label.clone(), description: String::new(), aliases: vec![] })?;
            }
        }
    }

    // Unlabelled node rows only decorate nodes defined elsewhere.
    if let Some(node_path) = &opts.node_file {
        for n in node_rows.iter().filter(|n| n.label.is_none()) {
            let id = NodeId::new(n.id.as_str()).expect("checked non-empty");
            match builder.node_mut(&id) {
                Some(existing) => {
                    if existing.description.is_empty() {
                        existing.description = n.description.clone();
                    }
                    existing.aliases.extend(n.aliases.iter().cloned());
                }
                None if opts.lenient => rejected.push(RejectedRow {
                    file: node_path.clone(),
                    line: n.line,
                    reason: format!("dangling reference to node `{}`", n.id),
                }),
                None => return Err(KgError::Dangling { file: node_path.clone(), line: n.line, id: n.id.clone() }),
            }
        }
    }

    for r in &rows {
        let missing = [&r.subject, &r.object]
            .into_iter()
            .find(|id| !builder.has_node(&NodeId::new(id.as_str()).expect("checked non-empty")));
        if let Some(id) = missing {
            if opts.lenient {
                rejected.push(RejectedRow {
                    file: path.to_path_buf(),
                    line: r.line,
                    reason: format!("dangling reference to node `{id}`"),
                });
                continue;
            }
            return Err(KgError::Dangling { file: path.to_path_buf(), line: r.line, id: id.clone() });
        }
        builder.add_triplet(&r.subject, &r.predicate, &r.object)?;
    }

    let (kg, mut report) = builder.finish();
    rejected.sort_by(|a, b| a.file.cmp(&b.file).then(a.line.cmp(&b.line)));
    report.rejected = rejected;
    Ok((kg, report))
}
