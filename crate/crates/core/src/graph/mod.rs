//! The propagation graph.
//!
//! Pair nodes stand for a (document subject, noun phrase) pair; list nodes
//! stand for one coordinate list (singletons included). Three edge types
//! couple them:
//!
//! * `L`: list membership, pair node to list node, weight 1.
//! * `S`: shared section of a structured corpus, pair to pair, weight 1.
//! * `N`: context similarity across corpora, pair to pair, weight in (0, 1].

mod build;
mod io;
mod merge;
mod neighbor;

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use crate::corpus::{normalize, CorpusKind};

pub use build::{add_section_edges, build_bipartite, SectionMap, SectionReport};
pub use io::{read_graph, write_graph};
pub use merge::{merge_graphs, merge_matching_nodes};
pub use neighbor::{add_neighbor_edges, build_contexts};

/// Identity of a pair node: lowercased subject and noun phrase.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct PairKey {
    pub subject: String,
    pub np: String,
}

impl PairKey {
    pub fn new(subject: &str, np: &str) -> Self {
        PairKey {
            subject: normalize(subject),
            np: normalize(np),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct ListKey {
    pub corpus: CorpusKind,
    pub doc_id: String,
    pub sentence: usize,
    pub ordinal: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum NodeKey {
    Pair(PairKey),
    List(ListKey),
}

impl NodeKey {
    pub fn pair(subject: &str, np: &str) -> Self {
        NodeKey::Pair(PairKey::new(subject, np))
    }

    pub fn is_list(&self) -> bool {
        matches!(self, NodeKey::List(_))
    }

    pub fn kind(&self) -> &'static str {
        match self {
            NodeKey::Pair(_) => "pair",
            NodeKey::List(_) => "list",
        }
    }
}

impl fmt::Display for NodeKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            NodeKey::Pair(p) => write!(f, "pair:{}|{}", p.subject, p.np),
            NodeKey::List(l) => write!(f, "list:{}/{}#{}.{}", l.corpus, l.doc_id, l.sentence, l.ordinal),
        }
    }
}

impl FromStr for NodeKey {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        if let Some(rest) = s.strip_prefix("pair:") {
            let (subject, np) = rest.split_once('|').ok_or_else(|| format!("bad pair key `{s}`"))?;
            return Ok(NodeKey::Pair(PairKey {
                subject: subject.to_string(),
                np: np.to_string(),
            }));
        }
        if let Some(rest) = s.strip_prefix("list:") {
            let bad = || format!("bad list key `{s}`");
            let (corpus, rest) = rest.split_once('/').ok_or_else(bad)?;
            let (doc_id, pos) = rest.rsplit_once('#').ok_or_else(bad)?;
            let (sentence, ordinal) = pos.split_once('.').ok_or_else(bad)?;
            return Ok(NodeKey::List(ListKey {
                corpus: CorpusKind::parse(corpus).ok_or_else(bad)?,
                doc_id: doc_id.to_string(),
                sentence: sentence.parse().map_err(|_| bad())?,
                ordinal: ordinal.parse().map_err(|_| bad())?,
            }));
        }
        Err(format!("unknown node key `{s}`"))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum EdgeType {
    L,
    S,
    N,
}

impl EdgeType {
    pub fn as_str(self) -> &'static str {
        match self {
            EdgeType::L => "L",
            EdgeType::S => "S",
            EdgeType::N => "N",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "L" => Some(EdgeType::L),
            "S" => Some(EdgeType::S),
            "N" => Some(EdgeType::N),
            _ => None,
        }
    }
}

/// Undirected edge with `a < b`.
#[derive(Debug, Clone, PartialEq)]
pub struct Edge {
    pub a: NodeKey,
    pub b: NodeKey,
    pub etype: EdgeType,
    pub weight: f64,
}

/// Where a node was observed.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Provenance {
    pub corpus: CorpusKind,
    pub doc_id: String,
    /// `s<sentence>` for lists, `s<sentence>:<start>-<end>` for mentions.
    pub location: String,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct PropGraph {
    nodes: BTreeMap<NodeKey, Vec<Provenance>>,
    edges: BTreeMap<(NodeKey, NodeKey, EdgeType), f64>,
    aliases: BTreeMap<PairKey, PairKey>,
}

impl PropGraph {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add_node(&mut self, key: NodeKey, provenance: Option<Provenance>) {
        let entry = self.nodes.entry(key).or_default();
        if let Some(p) = provenance {
            if let Err(at) = entry.binary_search(&p) {
                entry.insert(at, p);
            }
        }
    }

    /// Inserts an undirected edge between existing nodes. Self-edges and
    /// duplicates of an existing `(a, b, etype)` are ignored (a duplicate
    /// may raise the stored weight). Returns whether a new edge was added.
    pub fn add_edge(&mut self, a: &NodeKey, b: &NodeKey, etype: EdgeType, weight: f64) -> bool {
        assert!(
            weight > 0.0 && weight <= 1.0 && weight.is_finite(),
            "edge weight {weight} outside (0, 1]"
        );
        if a == b || !self.nodes.contains_key(a) || !self.nodes.contains_key(b) {
            return false;
        }
        let (lo, hi) = if a < b { (a, b) } else { (b, a) };
        let weight = match etype {
            EdgeType::L | EdgeType::S => 1.0,
            EdgeType::N => weight,
        };
        let key = (lo.clone(), hi.clone(), etype);
        match self.edges.get_mut(&key) {
            Some(w) => {
                *w = w.max(weight);
                false
            }
            None => {
                self.edges.insert(key, weight);
                true
            }
        }
    }

    pub fn contains(&self, key: &NodeKey) -> bool {
        self.nodes.contains_key(key)
    }

    pub fn node_count(&self) -> usize {
        self.nodes.len()
    }

    pub fn edge_count(&self) -> usize {
        self.edges.len()
    }

    pub fn count_edges(&self, etype: EdgeType) -> usize {
        self.edges.keys().filter(|k| k.2 == etype).count()
    }

    /// Nodes in their canonical (sorted) order.
    pub fn nodes(&self) -> impl Iterator<Item = &NodeKey> {
        self.nodes.keys()
    }

    pub fn provenance(&self, key: &NodeKey) -> &[Provenance] {
        self.nodes.get(key).map_or(&[], Vec::as_slice)
    }

    pub fn edges(&self) -> impl Iterator<Item = Edge> + '_ {
        self.edges.iter().map(|((a, b, t), &w)| Edge {
            a: a.clone(),
            b: b.clone(),
            etype: *t,
            weight: w,
        })
    }

    /// True if the node was observed in a corpus of `kind`.
    pub fn seen_in(&self, key: &NodeKey, kind: CorpusKind) -> bool {
        self.provenance(key).iter().any(|p| p.corpus == kind)
    }

    /// Maps a pair key to its node, following merge aliases.
    pub fn resolve(&self, key: &PairKey) -> Option<NodeKey> {
        let canonical = self.aliases.get(key).unwrap_or(key);
        let node = NodeKey::Pair(canonical.clone());
        self.nodes.contains_key(&node).then_some(node)
    }

    pub fn aliases(&self) -> &BTreeMap<PairKey, PairKey> {
        &self.aliases
    }

    /// Copy of the graph keeping only edges of the given types.
    pub fn with_edge_types(&self, keep: &[EdgeType]) -> PropGraph {
        PropGraph {
            nodes: self.nodes.clone(),
            edges: self
                .edges
                .iter()
                .filter(|(k, _)| keep.contains(&k.2))
                .map(|(k, w)| (k.clone(), *w))
                .collect(),
            aliases: self.aliases.clone(),
        }
    }

    /// Subgraph induced by nodes satisfying `keep`.
    pub fn filter_nodes(&self, keep: impl Fn(&NodeKey, &[Provenance]) -> bool) -> PropGraph {
        let nodes: BTreeMap<_, _> = self
            .nodes
            .iter()
            .filter(|(k, p)| keep(k, p))
            .map(|(k, p)| (k.clone(), p.clone()))
            .collect();
        let edges = self
            .edges
            .iter()
            .filter(|(k, _)| nodes.contains_key(&k.0) && nodes.contains_key(&k.1))
            .map(|(k, w)| (k.clone(), *w))
            .collect();
        PropGraph {
            nodes,
            edges,
            aliases: self.aliases.clone(),
        }
    }
}
