//! String and context similarity.
//!
//! [`soft_tfidf`] scores two names by aligning near-identical tokens
//! (Jaro-Winkler above an inner threshold) and summing the products of their
//! normalized TFIDF weights. [`context_cosine`] compares TFIDF-weighted bags
//! of context words.

use std::collections::{BTreeMap, HashMap, HashSet};

use crate::error::{Error, Result};

/// Default inner Jaro-Winkler threshold for token alignment.
pub const INNER_THRESHOLD: f64 = 0.9;

/// Score at or above which two names are considered the same.
pub const MATCH_THRESHOLD: f64 = 0.8;

/// Lowercase, whitespace-split tokens.
pub fn tokenize(s: &str) -> Vec<String> {
    s.split_whitespace().map(str::to_lowercase).collect()
}

/// Document frequencies of tokens over a collection of texts.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct TokenStats {
    pub doc_freq: HashMap<String, usize>,
    pub n_docs: usize,
}

impl TokenStats {
    /// Each text counts as one document; repeated tokens count once.
    pub fn from_texts<I, S>(texts: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: AsRef<str>,
    {
        let mut stats = TokenStats::default();
        for text in texts {
            stats.add_document(tokenize(text.as_ref()));
        }
        stats
    }

    pub fn add_document<I: IntoIterator<Item = String>>(&mut self, tokens: I) {
        let distinct: HashSet<String> = tokens.into_iter().collect();
        for tok in distinct {
            *self.doc_freq.entry(tok).or_insert(0) += 1;
        }
        self.n_docs += 1;
    }

    /// `ln(n_docs / df)`, or `ln(n_docs + 1)` for unseen tokens.
    pub fn idf(&self, token: &str) -> f64 {
        match self.doc_freq.get(token) {
            Some(&df) if df > 0 => (self.n_docs as f64 / df as f64).ln(),
            _ => (self.n_docs as f64 + 1.0).ln(),
        }
    }

    /// L2-normalized TFIDF vector of a tokenized string.
    ///
    /// When every token has zero idf (for instance a token present in all
    /// documents) the raw term frequencies are normalized instead, so a
    /// non-empty string never maps to the zero vector.
    pub fn tfidf_vector(&self, tokens: &[String]) -> BTreeMap<String, f64> {
        let mut tf: BTreeMap<String, f64> = BTreeMap::new();
        for t in tokens {
            *tf.entry(t.clone()).or_insert(0.0) += 1.0;
        }
        let mut weighted: BTreeMap<String, f64> = tf.iter().map(|(t, &c)| (t.clone(), c * self.idf(t))).collect();
        if l2(weighted.values()) <= 0.0 {
            weighted = tf;
        }
        let norm = l2(weighted.values());
        if norm > 0.0 {
            weighted.values_mut().for_each(|w| *w /= norm);
        }
        weighted
    }
}

fn l2<'a>(values: impl Iterator<Item = &'a f64>) -> f64 {
    values.map(|v| v * v).sum::<f64>().sqrt()
}

pub fn jaro_winkler(a: &str, b: &str) -> f64 {
    strsim::jaro_winkler(a, b)
}

/// Greedy one-to-one alignment of `a`'s tokens onto `b`'s, strongest pairs first.
fn aligned_score(a: &BTreeMap<String, f64>, b: &BTreeMap<String, f64>, inner_threshold: f64) -> f64 {
    let mut pairs = Vec::new();
    for (ta, &wa) in a {
        for (tb, &wb) in b {
            let sim = if ta == tb { 1.0 } else { jaro_winkler(ta, tb) };
            if sim >= inner_threshold {
                pairs.push((sim, wa * wb, ta, tb));
            }
        }
    }
    pairs.sort_by(|x, y| {
        y.0.total_cmp(&x.0)
            .then(y.1.total_cmp(&x.1))
            .then_with(|| x.2.cmp(y.2))
            .then_with(|| x.3.cmp(y.3))
    });
    let mut used_a = HashSet::new();
    let mut used_b = HashSet::new();
    let mut score = 0.0;
    for (sim, w, ta, tb) in pairs {
        if used_a.contains(ta) || used_b.contains(tb) {
            continue;
        }
        used_a.insert(ta);
        used_b.insert(tb);
        score += w * sim;
    }
    score
}

/// SoftTFIDF similarity in `[0, 1]`, symmetric in its arguments.
pub fn soft_tfidf(a: &str, b: &str, stats: &TokenStats, inner_threshold: f64) -> Result<f64> {
    let ta = tokenize(a);
    let tb = tokenize(b);
    if ta.is_empty() {
        return Err(Error::EmptyTokens(a.to_string()));
    }
    if tb.is_empty() {
        return Err(Error::EmptyTokens(b.to_string()));
    }
    if ta == tb {
        return Ok(1.0);
    }
    let va = stats.tfidf_vector(&ta);
    let vb = stats.tfidf_vector(&tb);
    let forward = aligned_score(&va, &vb, inner_threshold);
    let backward = aligned_score(&vb, &va, inner_threshold);
    Ok(forward.max(backward).clamp(0.0, 1.0))
}

/// `soft_tfidf(a, b) >= 0.8` with the default inner threshold.
pub fn names_match(a: &str, b: &str, stats: &TokenStats) -> Result<bool> {
    Ok(soft_tfidf(a, b, stats, INNER_THRESHOLD)? >= MATCH_THRESHOLD)
}

/// TFIDF-weighted bag of context words.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ContextBow {
    pub weights: BTreeMap<String, f64>,
}

impl ContextBow {
    /// Weights raw counts by `stats.idf`; zero-weight entries are dropped.
    pub fn from_counts(counts: &BTreeMap<String, usize>, stats: &TokenStats) -> Self {
        let weights = counts
            .iter()
            .map(|(t, &c)| (t.clone(), c as f64 * stats.idf(t)))
            .filter(|(_, w)| *w > 0.0)
            .collect();
        ContextBow { weights }
    }

    pub fn norm(&self) -> f64 {
        l2(self.weights.values())
    }
}

/// Cosine of two sparse non-negative vectors; 0 if either is all-zero.
pub fn context_cosine(x: &ContextBow, y: &ContextBow) -> f64 {
    let nx = x.norm();
    let ny = y.norm();
    if nx <= 0.0 || ny <= 0.0 {
        return 0.0;
    }
    let (small, large) = if x.weights.len() <= y.weights.len() {
        (x, y)
    } else {
        (y, x)
    };
    let dot: f64 = small
        .weights
        .iter()
        .filter_map(|(t, w)| large.weights.get(t).map(|v| w * v))
        .sum();
    (dot / (nx * ny)).clamp(0.0, 1.0)
}
