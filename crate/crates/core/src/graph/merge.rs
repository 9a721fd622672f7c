use std::collections::{BTreeMap, BTreeSet, HashMap};

use super::{NodeKey, PairKey, PropGraph};
use crate::error::Result;
use crate::simstring::{names_match, TokenStats};

struct UnionFind {
    parent: Vec<usize>,
}

impl UnionFind {
    fn new(n: usize) -> Self {
        UnionFind {
            parent: (0..n).collect(),
        }
    }

    fn find(&mut self, x: usize) -> usize {
        let mut root = x;
        while self.parent[root] != root {
            root = self.parent[root];
        }
        let mut cur = x;
        while self.parent[cur] != root {
            let next = self.parent[cur];
            self.parent[cur] = root;
            cur = next;
        }
        root
    }

    fn union(&mut self, a: usize, b: usize) {
        let (ra, rb) = (self.find(a), self.find(b));
        if ra != rb {
            // smaller index wins so the representative is the smallest key
            let (lo, hi) = if ra < rb { (ra, rb) } else { (rb, ra) };
            self.parent[hi] = lo;
        }
    }
}

fn matches(a: &str, b: &str, stats: &TokenStats, cache: &mut HashMap<(String, String), bool>) -> Result<bool> {
    if a == b {
        return Ok(true);
    }
    let key = if a < b {
        (a.to_string(), b.to_string())
    } else {
        (b.to_string(), a.to_string())
    };
    if let Some(&m) = cache.get(&key) {
        return Ok(m);
    }
    let m = names_match(a, b, stats)?;
    cache.insert(key, m);
    Ok(m)
}

/// Augments the target graph with the structured graph, collapsing pair
/// nodes whose subjects and NP strings both name-match.
pub fn merge_matching_nodes(target: &PropGraph, structured: &PropGraph, stats: &TokenStats) -> Result<PropGraph> {
    merge_graphs(&[target, structured], stats)
}

/// Union of the graphs with pair nodes merged under the transitive closure
/// of "subject matches and NP matches". Each merged node takes the smallest
/// member key and inherits the union of edges and provenance.
pub fn merge_graphs(graphs: &[&PropGraph], stats: &TokenStats) -> Result<PropGraph> {
    let mut pairs: BTreeSet<PairKey> = BTreeSet::new();
    for g in graphs {
        for k in g.nodes() {
            if let NodeKey::Pair(p) = k {
                pairs.insert(p.clone());
            }
        }
    }
    let pairs: Vec<PairKey> = pairs.into_iter().collect();
    let index: HashMap<&PairKey, usize> = pairs.iter().enumerate().map(|(i, p)| (p, i)).collect();

    let mut by_subject: BTreeMap<&str, Vec<usize>> = BTreeMap::new();
    for (i, p) in pairs.iter().enumerate() {
        by_subject.entry(p.subject.as_str()).or_default().push(i);
    }
    let subjects: Vec<&str> = by_subject.keys().copied().collect();

    let mut cache = HashMap::new();
    let mut uf = UnionFind::new(pairs.len());
    for si in 0..subjects.len() {
        for sj in si..subjects.len() {
            if !matches(subjects[si], subjects[sj], stats, &mut cache)? {
                continue;
            }
            let (left, right) = (&by_subject[subjects[si]], &by_subject[subjects[sj]]);
            for (x, &a) in left.iter().enumerate() {
                let start = if si == sj { x + 1 } else { 0 };
                for &b in &right[start..] {
                    if matches(&pairs[a].np, &pairs[b].np, stats, &mut cache)? {
                        uf.union(a, b);
                    }
                }
            }
        }
    }

    let canonical: Vec<PairKey> = (0..pairs.len()).map(|i| pairs[uf.find(i)].clone()).collect();
    let remap = |k: &NodeKey| -> NodeKey {
        match k {
            NodeKey::Pair(p) => NodeKey::Pair(canonical[index[p]].clone()),
            list => list.clone(),
        }
    };

    let mut out = PropGraph::new();
    for g in graphs {
        for k in g.nodes() {
            let target = remap(k);
            let prov = g.provenance(k);
            out.add_node(target.clone(), None);
            for p in prov {
                out.add_node(target.clone(), Some(p.clone()));
            }
        }
    }
    for g in graphs {
        for e in g.edges() {
            out.add_edge(&remap(&e.a), &remap(&e.b), e.etype, e.weight);
        }
    }

    let mut aliases = BTreeMap::new();
    for g in graphs {
        for (from, to) in g.aliases() {
            aliases.insert(from.clone(), canonical[index[to]].clone());
        }
    }
    for (i, p) in pairs.iter().enumerate() {
        if canonical[i] != *p {
            aliases.insert(p.clone(), canonical[i].clone());
        }
    }
    out.aliases = aliases;
    Ok(out)
}
