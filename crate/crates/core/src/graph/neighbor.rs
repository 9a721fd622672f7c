use std::collections::{BTreeMap, HashMap};

use super::{EdgeType, NodeKey, PairKey, PropGraph};
use crate::corpus::{chunk_nps, Corpus, CorpusKind};
use crate::error::{Error, Result};
use crate::simstring::{ContextBow, TokenStats};

fn is_word(token: &str) -> bool {
    token.chars().any(char::is_alphanumeric)
}

/// Context bag of every pair node: the words of all sentences containing
/// one of its mentions, minus the mention tokens themselves. Weights are
/// TFIDF with each node's context counted as one document.
pub fn build_contexts(graph: &PropGraph, corpora: &[&Corpus]) -> BTreeMap<NodeKey, ContextBow> {
    let mut counts: BTreeMap<NodeKey, BTreeMap<String, usize>> = BTreeMap::new();
    for corpus in corpora {
        for r in corpus.sentence_refs() {
            let doc = &corpus.documents[r.doc];
            let sentence = &doc.sentences[r.sentence];
            for m in chunk_nps(doc, r) {
                let Some(node) = graph.resolve(&PairKey::new(&doc.subject, &m.normalized)) else {
                    continue;
                };
                let bag = counts.entry(node).or_default();
                for t in sentence.tokens.iter().filter(|t| !m.span.contains(t.index)) {
                    if is_word(&t.text) {
                        *bag.entry(t.text.to_lowercase()).or_insert(0) += 1;
                    }
                }
            }
        }
    }
    let mut stats = TokenStats::default();
    for bag in counts.values() {
        stats.add_document(bag.keys().cloned());
    }
    counts
        .into_iter()
        .map(|(node, bag)| (node, ContextBow::from_counts(&bag, &stats)))
        .collect()
}

/// Candidate cross-corpus N-edges with cosine `>= min_sim`, found through an
/// inverted index over context words. Each unordered pair appears once.
pub(crate) fn neighbor_candidates(
    graph: &PropGraph,
    contexts: &BTreeMap<NodeKey, ContextBow>,
    min_sim: f64,
) -> Vec<(NodeKey, NodeKey, f64)> {
    let nodes: Vec<(&NodeKey, &ContextBow, f64)> = contexts
        .iter()
        .filter(|(k, _)| !k.is_list() && graph.contains(k))
        .map(|(k, c)| (k, c, c.norm()))
        .filter(|(_, _, n)| *n > 0.0)
        .collect();
    let in_target: Vec<bool> = nodes
        .iter()
        .map(|(k, _, _)| graph.seen_in(k, CorpusKind::Target))
        .collect();
    let in_structured: Vec<bool> = nodes
        .iter()
        .map(|(k, _, _)| graph.seen_in(k, CorpusKind::Structured))
        .collect();

    let mut postings: HashMap<&str, Vec<(usize, f64)>> = HashMap::new();
    for (i, (_, c, _)) in nodes.iter().enumerate() {
        if in_structured[i] {
            for (t, &w) in &c.weights {
                postings.entry(t.as_str()).or_default().push((i, w));
            }
        }
    }

    let mut out = Vec::new();
    let mut dots: HashMap<usize, f64> = HashMap::new();
    for (i, (ki, ci, ni)) in nodes.iter().enumerate() {
        if !in_target[i] {
            continue;
        }
        dots.clear();
        for (t, &w) in &ci.weights {
            if let Some(list) = postings.get(t.as_str()) {
                for &(j, v) in list {
                    *dots.entry(j).or_insert(0.0) += w * v;
                }
            }
        }
        for (&j, &dot) in &dots {
            if j == i {
                continue;
            }
            // a node seen in both corpora pairs with another such node from
            // either side; keep one orientation
            if in_target[j] && in_structured[i] && j < i {
                continue;
            }
            let (kj, _, nj) = nodes[j];
            let sim = (dot / (ni * nj)).min(1.0);
            if sim >= min_sim {
                let (a, b) = if *ki < kj { (*ki, kj) } else { (kj, *ki) };
                out.push((a.clone(), b.clone(), sim));
            }
        }
    }
    out.sort_by(|x, y| x.0.cmp(&y.0).then_with(|| x.1.cmp(&y.1)));
    out.dedup_by(|x, y| x.0 == y.0 && x.1 == y.1);
    out
}

/// Keeps an edge only if it ranks among the `cap` most similar edges of
/// both endpoints (ties broken by the other endpoint's key).
pub(crate) fn cap_per_node(candidates: Vec<(NodeKey, NodeKey, f64)>, cap: usize) -> Vec<(NodeKey, NodeKey, f64)> {
    let mut incident: BTreeMap<&NodeKey, Vec<(f64, &NodeKey)>> = BTreeMap::new();
    for (a, b, s) in &candidates {
        incident.entry(a).or_default().push((*s, b));
        incident.entry(b).or_default().push((*s, a));
    }
    let mut allowed: BTreeMap<&NodeKey, Vec<&NodeKey>> = BTreeMap::new();
    for (node, mut list) in incident {
        list.sort_by(|x, y| y.0.total_cmp(&x.0).then_with(|| x.1.cmp(y.1)));
        allowed.insert(node, list.into_iter().take(cap).map(|(_, k)| k).collect());
    }
    candidates
        .iter()
        .filter(|(a, b, _)| allowed[a].contains(&b) && allowed[b].contains(&a))
        .cloned()
        .collect()
}

/// Adds N-edges between target-corpus and structured-corpus pair nodes
/// whose context cosine is at least `min_sim`, weighted by the cosine, with
/// at most `cap` N-edges per node. Returns the number of edges added.
pub fn add_neighbor_edges(
    graph: &mut PropGraph,
    contexts: &BTreeMap<NodeKey, ContextBow>,
    min_sim: f64,
    cap: usize,
) -> Result<usize> {
    if !(min_sim > 0.0 && min_sim <= 1.0) {
        return Err(Error::InvalidParameter(format!("min_sim {min_sim} not in (0, 1]")));
    }
    let edges = cap_per_node(neighbor_candidates(graph, contexts, min_sim), cap);
    let mut added = 0;
    for (a, b, sim) in edges {
        if graph.add_edge(&a, &b, EdgeType::N, sim) {
            added += 1;
        }
    }
    Ok(added)
}
