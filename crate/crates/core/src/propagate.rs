//! MultiRankWalk: one personalized PageRank vector per relation.
//!
//! For every class `c` the score vector solves
//!
//! ```text
//! v = alpha * r + (1 - alpha) * S D^-1 v
//! ```
//!
//! where `S` is the symmetric weighted adjacency matrix, `D` its column
//! sums and `r` the uniform distribution over the class's seed nodes. Nodes
//! without edges are dangling; the mass sitting on them is sent back to `r`
//! on every step so each vector stays a probability distribution.

use std::collections::{BTreeMap, HashMap};
use std::fs;
use std::io::Write;
use std::path::Path;

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::graph::{NodeKey, PropGraph};
use crate::Relation;

#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PropConfig {
    /// Restart probability.
    pub alpha: f64,
    /// L1 tolerance between successive iterates.
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for PropConfig {
    fn default() -> Self {
        PropConfig {
            alpha: 0.1,
            tol: 1e-8,
            max_iter: 200,
        }
    }
}

impl PropConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.alpha > 0.0 && self.alpha <= 1.0) {
            return Err(Error::InvalidParameter(format!("alpha {} not in (0, 1]", self.alpha)));
        }
        if !(self.tol > 0.0) {
            return Err(Error::InvalidParameter(format!("tol {} must be positive", self.tol)));
        }
        Ok(())
    }
}

/// Restart distribution of one class.
#[derive(Debug, Clone, PartialEq)]
pub struct SeedVector {
    pub class: Relation,
    pub r: BTreeMap<NodeKey, f64>,
}

impl SeedVector {
    /// Uniform over the given seed occurrences; a node listed twice gets
    /// twice the mass.
    pub fn uniform(class: Relation, seeds: impl IntoIterator<Item = NodeKey>) -> Self {
        let mut r: BTreeMap<NodeKey, f64> = BTreeMap::new();
        let mut n = 0usize;
        for s in seeds {
            *r.entry(s).or_insert(0.0) += 1.0;
            n += 1;
        }
        r.values_mut().for_each(|w| *w /= n as f64);
        SeedVector { class, r }
    }
}

/// Column-stochastic transition operator `S D^-1` in compressed-column form.
#[derive(Debug, Clone)]
pub struct Transition {
    nodes: Vec<NodeKey>,
    index: HashMap<NodeKey, usize>,
    offsets: Vec<usize>,
    rows: Vec<usize>,
    probs: Vec<f64>,
}

impl Transition {
    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn nodes(&self) -> &[NodeKey] {
        &self.nodes
    }

    pub fn index_of(&self, key: &NodeKey) -> Option<usize> {
        self.index.get(key).copied()
    }

    /// Non-zero entries `(row, probability)` of column `j`.
    pub fn column(&self, j: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let span = self.offsets[j]..self.offsets[j + 1];
        self.rows[span.clone()]
            .iter()
            .copied()
            .zip(self.probs[span].iter().copied())
    }

    pub fn is_dangling(&self, j: usize) -> bool {
        self.offsets[j] == self.offsets[j + 1]
    }

    /// Dense row-major copy, `m[i][j] = P(j -> i)`.
    #[allow(clippy::needless_range_loop)]
    pub fn to_dense(&self) -> Vec<Vec<f64>> {
        let n = self.len();
        let mut m = vec![vec![0.0; n]; n];
        for j in 0..n {
            for (i, p) in self.column(j) {
                m[i][j] += p;
            }
        }
        m
    }
}

/// Builds `S D^-1`. Parallel edges of different types between the same
/// two nodes add up in `S`.
pub fn transition_matrix(graph: &PropGraph) -> Result<Transition> {
    if graph.node_count() == 0 {
        return Err(Error::InvalidParameter("graph has no nodes".into()));
    }
    let nodes: Vec<NodeKey> = graph.nodes().cloned().collect();
    let index: HashMap<NodeKey, usize> = nodes.iter().enumerate().map(|(i, k)| (k.clone(), i)).collect();
    let mut adjacency: Vec<BTreeMap<usize, f64>> = vec![BTreeMap::new(); nodes.len()];
    for e in graph.edges() {
        let (a, b) = (index[&e.a], index[&e.b]);
        *adjacency[a].entry(b).or_insert(0.0) += e.weight;
        *adjacency[b].entry(a).or_insert(0.0) += e.weight;
    }
    let mut offsets = Vec::with_capacity(nodes.len() + 1);
    let mut rows = Vec::new();
    let mut probs = Vec::new();
    offsets.push(0);
    for col in &adjacency {
        let degree: f64 = col.values().sum();
        for (&i, &w) in col {
            rows.push(i);
            probs.push(w / degree);
        }
        offsets.push(rows.len());
    }
    Ok(Transition {
        nodes,
        index,
        offsets,
        rows,
        probs,
    })
}

/// Per-class stationary scores.
#[derive(Debug, Clone, PartialEq)]
pub struct ScoreTable {
    pub nodes: Vec<NodeKey>,
    pub classes: Vec<Relation>,
    /// `scores[c][i]` is the score of `nodes[i]` for `classes[c]`.
    pub scores: Vec<Vec<f64>>,
    pub iterations: Vec<usize>,
    pub converged: Vec<bool>,
}

impl ScoreTable {
    pub fn class_index(&self, class: Relation) -> Option<usize> {
        self.classes.iter().position(|&c| c == class)
    }

    pub fn score(&self, class: Relation, node: &NodeKey) -> f64 {
        let Some(c) = self.class_index(class) else { return 0.0 };
        self.nodes.binary_search(node).map_or(0.0, |i| self.scores[c][i])
    }
}

/// Power iteration for one class, starting from `v = r`.
pub fn personalized_pagerank(p: &Transition, restart: &[f64], config: &PropConfig) -> (Vec<f64>, usize, bool) {
    let n = p.len();
    let alpha = config.alpha;
    let mut v = restart.to_vec();
    let mut next = vec![0.0; n];
    for iter in 1..=config.max_iter {
        next.iter_mut().for_each(|x| *x = 0.0);
        let mut dangling = 0.0;
        for (j, &vj) in v.iter().enumerate() {
            if vj == 0.0 {
                continue;
            }
            if p.is_dangling(j) {
                dangling += vj;
                continue;
            }
            for (i, prob) in p.column(j) {
                next[i] += prob * vj;
            }
        }
        let mut delta = 0.0;
        for i in 0..n {
            let x = (1.0 - alpha) * (next[i] + dangling * restart[i]) + alpha * restart[i];
            delta += (x - v[i]).abs();
            next[i] = x;
        }
        std::mem::swap(&mut v, &mut next);
        if delta < config.tol {
            return (v, iter, true);
        }
    }
    (v, config.max_iter, false)
}

/// Runs one personalized PageRank per seed vector. Classes are returned in
/// sorted order.
pub fn mrw(graph: &PropGraph, seed_vectors: &[SeedVector], config: &PropConfig) -> Result<ScoreTable> {
    config.validate()?;
    let p = transition_matrix(graph)?;
    let mut ordered: Vec<&SeedVector> = seed_vectors.iter().collect();
    ordered.sort_by_key(|s| s.class);

    let mut restarts = Vec::with_capacity(ordered.len());
    for sv in &ordered {
        let mut r = vec![0.0; p.len()];
        for (node, &w) in &sv.r {
            let i = p
                .index_of(node)
                .ok_or_else(|| Error::MissingSeedNode(node.to_string()))?;
            r[i] += w;
        }
        let total: f64 = r.iter().sum();
        if total <= 0.0 {
            return Err(Error::InvalidParameter(format!("class {} has no seed mass", sv.class)));
        }
        r.iter_mut().for_each(|x| *x /= total);
        restarts.push(r);
    }

    let runs: Vec<(Vec<f64>, usize, bool)> = restarts
        .par_iter()
        .map(|r| personalized_pagerank(&p, r, config))
        .collect();

    let mut table = ScoreTable {
        nodes: p.nodes().to_vec(),
        classes: ordered.iter().map(|s| s.class).collect(),
        scores: Vec::new(),
        iterations: Vec::new(),
        converged: Vec::new(),
    };
    for (v, it, ok) in runs {
        if !ok {
            log::warn!("personalized PageRank stopped after {it} iterations without converging");
        }
        table.scores.push(v);
        table.iterations.push(it);
        table.converged.push(ok);
    }
    Ok(table)
}

/// Argmax class per node; ties go to the lexicographically first class and
/// nodes scoring zero everywhere stay unlabeled.
pub fn assign_labels(scores: &ScoreTable) -> BTreeMap<NodeKey, Relation> {
    let mut order: Vec<usize> = (0..scores.classes.len()).collect();
    order.sort_by_key(|&c| scores.classes[c]);
    let mut out = BTreeMap::new();
    for (i, node) in scores.nodes.iter().enumerate() {
        let mut best: Option<(usize, f64)> = None;
        for &c in &order {
            let s = scores.scores[c][i];
            if s > 0.0 && best.is_none_or(|(_, b)| s > b) {
                best = Some((c, s));
            }
        }
        if let Some((c, _)) = best {
            out.insert(node.clone(), scores.classes[c]);
        }
    }
    out
}

/// The `n` list nodes with the highest positive score for `class`,
/// descending, ties by node key.
pub fn top_n(scores: &ScoreTable, class: Relation, n: usize) -> Vec<NodeKey> {
    let Some(c) = scores.class_index(class) else {
        return Vec::new();
    };
    let mut ranked: Vec<(f64, &NodeKey)> = scores
        .nodes
        .iter()
        .enumerate()
        .filter(|(i, k)| k.is_list() && scores.scores[c][*i] > 0.0)
        .map(|(i, k)| (scores.scores[c][i], k))
        .collect();
    ranked.sort_by(|a, b| b.0.total_cmp(&a.0).then_with(|| a.1.cmp(b.1)));
    ranked.into_iter().take(n).map(|(_, k)| k.clone()).collect()
}

/// Writes `class \t node \t score` for every positive score, sorted by class
/// then by descending score.
pub fn write_scores(scores: &ScoreTable, mut out: impl Write) -> std::io::Result<()> {
    for (c, class) in scores.classes.iter().enumerate() {
        let mut rows: Vec<(f64, &NodeKey)> = scores
            .nodes
            .iter()
            .enumerate()
            .filter(|(i, _)| scores.scores[c][*i] > 0.0)
            .map(|(i, k)| (scores.scores[c][i], k))
            .collect();
        rows.sort_by(|a, b| b.0.total_cmp(&a.0).then_with(|| a.1.cmp(b.1)));
        for (s, k) in rows {
            writeln!(out, "{class}\t{k}\t{s}")?;
        }
    }
    Ok(())
}

/// Reads a score file back against the node set of `graph`.
pub fn read_scores(path: impl AsRef<Path>, graph: &PropGraph) -> Result<ScoreTable> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let origin = path.display().to_string();
    let nodes: Vec<NodeKey> = graph.nodes().cloned().collect();
    let mut per_class: BTreeMap<Relation, Vec<f64>> = BTreeMap::new();
    for (i, line) in text.lines().enumerate() {
        let cols: Vec<&str> = line.split('\t').collect();
        let bad = |f: &str| Error::parse(&origin, i + 1, f, line);
        if cols.len() != 3 {
            return Err(bad("columns"));
        }
        let class: Relation = cols[0].parse().map_err(|_| bad("class"))?;
        let node: NodeKey = cols[1].parse().map_err(|_| bad("node"))?;
        let score: f64 = cols[2].parse().map_err(|_| bad("score"))?;
        let at = nodes.binary_search(&node).map_err(|_| bad("node"))?;
        per_class.entry(class).or_insert_with(|| vec![0.0; nodes.len()])[at] = score;
    }
    let classes: Vec<Relation> = per_class.keys().copied().collect();
    let k = classes.len();
    Ok(ScoreTable {
        nodes,
        classes,
        scores: per_class.into_values().collect(),
        iterations: vec![0; k],
        converged: vec![true; k],
    })
}
