use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fs;
use std::path::Path;

use super::{EdgeType, ListKey, NodeKey, PairKey, PropGraph, Provenance};
use crate::corpus::{chunk_nps, extract_coord_lists, normalize, Corpus};
use crate::error::{Error, Result};
use crate::simstring::{names_match, TokenStats};
use crate::Relation;

/// One pair node per distinct (subject, NP), one list node per coordinate
/// list, and an L-edge from every list item to its list.
pub fn build_bipartite(corpus: &Corpus) -> PropGraph {
    let mut g = PropGraph::new();
    for r in corpus.sentence_refs() {
        let doc = &corpus.documents[r.doc];
        for list in extract_coord_lists(doc, r) {
            let list_key = NodeKey::List(ListKey {
                corpus: corpus.kind,
                doc_id: doc.doc_id.clone(),
                sentence: r.sentence,
                ordinal: list.ordinal,
            });
            g.add_node(
                list_key.clone(),
                Some(Provenance {
                    corpus: corpus.kind,
                    doc_id: doc.doc_id.clone(),
                    location: format!("s{}", r.sentence),
                }),
            );
            for m in &list.items {
                let pair = NodeKey::pair(&doc.subject, &m.normalized);
                g.add_node(
                    pair.clone(),
                    Some(Provenance {
                        corpus: corpus.kind,
                        doc_id: doc.doc_id.clone(),
                        location: format!("s{}:{}-{}", r.sentence, m.span.start, m.span.end),
                    }),
                );
                g.add_edge(&pair, &list_key, EdgeType::L, 1.0);
            }
        }
    }
    g
}

/// Whitelist of section titles that license S-edges, with the relation each
/// section is about. Titles compare case-insensitively.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SectionMap {
    titles: BTreeMap<String, Relation>,
}

impl Default for SectionMap {
    fn default() -> Self {
        let pairs = [
            ("Uses", Relation::UsedToTreat),
            ("Side Effects", Relation::SideEffects),
            ("Prevents", Relation::ConditionsThisMayPrevent),
            ("Symptoms", Relation::Symptoms),
            ("Causes", Relation::Causes),
            ("Risk Factors", Relation::RiskFactors),
            ("Treatments and Drugs", Relation::Treatments),
            ("Prevention", Relation::PreventionFactors),
        ];
        SectionMap::from_pairs(pairs)
    }
}

impl SectionMap {
    pub fn from_pairs<'a>(pairs: impl IntoIterator<Item = (&'a str, Relation)>) -> Self {
        SectionMap {
            titles: pairs.into_iter().map(|(t, r)| (normalize(t.trim()), r)).collect(),
        }
    }

    /// Reads `title \t relation` lines.
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut titles = BTreeMap::new();
        for (i, line) in text.lines().enumerate() {
            if line.trim().is_empty() || line.starts_with('#') {
                continue;
            }
            let (title, rel) = line
                .split_once('\t')
                .ok_or_else(|| Error::parse(path.display(), i + 1, "columns", "expected title \\t relation"))?;
            let rel: Relation = rel.trim().parse().map_err(|e: crate::relation::UnknownRelation| {
                Error::parse(path.display(), i + 1, "relation", e.to_string())
            })?;
            titles.insert(normalize(title.trim()), rel);
        }
        Ok(SectionMap { titles })
    }

    pub fn relation(&self, title: &str) -> Option<Relation> {
        self.titles.get(&normalize(title.trim())).copied()
    }

    pub fn titles(&self) -> impl Iterator<Item = (&str, Relation)> {
        self.titles.iter().map(|(t, r)| (t.as_str(), *r))
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct SectionReport {
    pub added: usize,
    /// Non-whitelisted section titles and how many (document, section)
    /// occurrences were skipped.
    pub skipped: BTreeMap<String, usize>,
}

/// Adds S-edges from the structured corpus.
///
/// Two pair nodes under the same whitelisted section title in two different
/// documents are linked when their NP strings name-match. Pair nodes in the
/// same section of one document are linked too, each to at most `cap`
/// others, picked greedily in document order.
pub fn add_section_edges(
    graph: &mut PropGraph,
    structured: &Corpus,
    section_map: &SectionMap,
    stats: &TokenStats,
    cap: usize,
) -> Result<SectionReport> {
    let mut report = SectionReport::default();
    // title -> doc -> pair keys in order of first appearance
    let mut sections: BTreeMap<String, BTreeMap<usize, Vec<PairKey>>> = BTreeMap::new();
    let mut skipped_seen = BTreeSet::new();
    for r in structured.sentence_refs() {
        let doc = &structured.documents[r.doc];
        let title = &doc.sentences[r.sentence].section_title;
        if section_map.relation(title).is_none() {
            if skipped_seen.insert((r.doc, title.clone())) {
                *report.skipped.entry(title.clone()).or_insert(0) += 1;
            }
            continue;
        }
        let keys = sections
            .entry(normalize(title.trim()))
            .or_default()
            .entry(r.doc)
            .or_default();
        for m in chunk_nps(doc, r) {
            let key = PairKey::new(&doc.subject, &m.normalized);
            if !keys.contains(&key) {
                keys.push(key);
            }
        }
    }

    let node = |k: &PairKey| graph.resolve(k);
    let mut pending: Vec<(NodeKey, NodeKey)> = Vec::new();

    for per_doc in sections.values() {
        // within one document
        for keys in per_doc.values() {
            let nodes: Vec<NodeKey> = keys.iter().filter_map(node).collect();
            let mut degree = vec![0usize; nodes.len()];
            for i in 0..nodes.len() {
                for j in i + 1..nodes.len() {
                    if degree[i] >= cap {
                        break;
                    }
                    if degree[j] < cap && nodes[i] != nodes[j] {
                        degree[i] += 1;
                        degree[j] += 1;
                        pending.push((nodes[i].clone(), nodes[j].clone()));
                    }
                }
            }
        }

        // across documents: group documents by NP string, then link matching strings
        let mut docs_by_np: BTreeMap<&str, Vec<(usize, &PairKey)>> = BTreeMap::new();
        for (&d, keys) in per_doc {
            for k in keys {
                docs_by_np.entry(k.np.as_str()).or_default().push((d, k));
            }
        }
        let nps: Vec<&str> = docs_by_np.keys().copied().collect();
        let mut matches: HashMap<(usize, usize), bool> = HashMap::new();
        for i in 0..nps.len() {
            for j in i..nps.len() {
                let ok = i == j || *matches.entry((i, j)).or_insert(names_match(nps[i], nps[j], stats)?);
                if !ok {
                    continue;
                }
                for &(d1, k1) in &docs_by_np[nps[i]] {
                    for &(d2, k2) in &docs_by_np[nps[j]] {
                        if d1 == d2 || (i == j && d1 > d2) {
                            continue;
                        }
                        if let (Some(a), Some(b)) = (node(k1), node(k2)) {
                            pending.push((a, b));
                        }
                    }
                }
            }
        }
    }

    for (a, b) in pending {
        if graph.add_edge(&a, &b, EdgeType::S, 1.0) {
            report.added += 1;
        }
    }
    Ok(report)
}
