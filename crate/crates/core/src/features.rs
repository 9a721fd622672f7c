//! Sparse lexical, contextual and dependency features for lists and
//! mentions, plus the frequency filter applied before training.
//!
//! A lone mention is a singleton list, so one generator serves both.

use std::collections::{BTreeMap, BTreeSet};
use std::io::Write;

use crate::corpus::{CoordList, Corpus, Sentence, Token};
use crate::error::{Error, Result};

pub const AFFIX_LEN: usize = 3;
pub const DEFAULT_WINDOW: usize = 2;
pub const DEFAULT_DROP_TOP: f64 = 0.05;

#[derive(Debug, Clone, Default, PartialEq)]
pub struct FeatureVector {
    pub items: BTreeMap<String, f64>,
}

impl FeatureVector {
    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    pub fn get(&self, id: &str) -> f64 {
        self.items.get(id).copied().unwrap_or(0.0)
    }

    pub fn contains(&self, id: &str) -> bool {
        self.items.contains_key(id)
    }

    fn set(&mut self, kind: &str, value: &str) {
        self.items.insert(format!("{kind}={}", clean(value)), 1.0);
    }
}

impl FromIterator<(String, f64)> for FeatureVector {
    fn from_iter<I: IntoIterator<Item = (String, f64)>>(iter: I) -> Self {
        FeatureVector {
            items: iter.into_iter().collect(),
        }
    }
}

fn clean(value: &str) -> String {
    value
        .to_lowercase()
        .chars()
        .map(|c| if c.is_whitespace() { '_' } else { c })
        .collect()
}

fn prefix(word: &str) -> String {
    word.chars().take(AFFIX_LEN).collect()
}

fn suffix(word: &str) -> String {
    let n = word.chars().count();
    word.chars().skip(n.saturating_sub(AFFIX_LEN)).collect()
}

/// Features of `list`, which must lie in `sentence`.
pub fn featurize(list: &CoordList, sentence: &Sentence, window: usize) -> FeatureVector {
    let mut fv = FeatureVector::default();
    let span = list.span();

    for item in &list.items {
        for i in item.span.start..=item.span.end {
            let Some(tok) = sentence.token(i) else { continue };
            fv.set("npTok", &tok.text);
            fv.set("prefix", &prefix(&tok.text));
            fv.set("suffix", &suffix(&tok.text));
        }
    }

    for tok in &sentence.tokens {
        if !span.contains(tok.index) {
            fv.set("sentTok", &tok.text);
        }
    }

    let n = sentence.tokens.len();
    let left: Vec<&Token> = (span.start.saturating_sub(window).max(1)..span.start)
        .filter_map(|i| sentence.token(i))
        .collect();
    let right: Vec<&Token> = (span.end + 1..=(span.end + window).min(n))
        .filter_map(|i| sentence.token(i))
        .collect();
    for (side, toks) in [("left", &left), ("right", &right)] {
        for t in toks.iter() {
            fv.set("ctxTok", &format!("{side}_{}", t.text));
        }
        for pair in toks.windows(2) {
            fv.set("ctxBigram", &format!("{side}_{}_{}", pair[0].text, pair[1].text));
        }
    }

    if sentence.has_dependencies() {
        dependency_features(sentence, list.head_index(), &mut fv);
    }
    fv
}

/// Walks up from `head` to the closest verb ancestor.
fn dependency_features(sentence: &Sentence, head: usize, fv: &mut FeatureVector) {
    let mut labels = Vec::new();
    let mut path = BTreeSet::from([head]);
    let mut cur = head;
    for _ in 0..sentence.tokens.len() {
        let Some(tok) = sentence.token(cur) else { return };
        labels.push(tok.deplabel.clone().unwrap_or_default());
        let parent = match tok.head {
            Some(p) if p > 0 => p,
            _ => return,
        };
        let Some(ptok) = sentence.token(parent) else { return };
        if ptok.pos.starts_with("VB") {
            fv.set("depVerb", &ptok.text);
            fv.set("depPath", &labels.join("_"));
            for dep in &sentence.tokens {
                if dep.head == Some(parent) && !path.contains(&dep.index) {
                    fv.set("depMod", &dep.text);
                }
            }
            return;
        }
        path.insert(parent);
        cur = parent;
    }
}

/// Resolves the list's sentence in `corpus` and featurizes it.
pub fn featurize_in(corpus: &Corpus, list: &CoordList, window: usize) -> Result<FeatureVector> {
    let r = list.sentence_ref;
    let sentence = corpus.sentence(r).ok_or(Error::UnresolvedSentence {
        doc: r.doc,
        sentence: r.sentence,
    })?;
    Ok(featurize(list, sentence, window))
}

#[derive(Debug, Clone, PartialEq)]
pub struct FeatureFilter {
    pub kept: BTreeSet<String>,
    pub drop_singletons: bool,
    pub drop_top_fraction: f64,
}

/// Keeps ids seen in at least two vectors, minus the `ceil(fraction * |vocab|)`
/// ids with the highest document frequency (ties by id).
pub fn fit_filter(vectors: &[FeatureVector], drop_top_fraction: f64) -> Result<FeatureFilter> {
    if vectors.is_empty() {
        return Err(Error::InvalidParameter(
            "cannot fit a feature filter on no vectors".into(),
        ));
    }
    if !(0.0..1.0).contains(&drop_top_fraction) {
        return Err(Error::InvalidParameter(format!(
            "drop_top_fraction {drop_top_fraction} not in [0, 1)"
        )));
    }
    let mut df: BTreeMap<&str, usize> = BTreeMap::new();
    for v in vectors {
        for id in v.items.keys() {
            *df.entry(id).or_insert(0) += 1;
        }
    }
    let mut ranked: Vec<(&str, usize)> = df.into_iter().collect();
    ranked.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(b.0)));
    let n_top = (drop_top_fraction * ranked.len() as f64).ceil() as usize;
    let kept: BTreeSet<String> = ranked
        .iter()
        .skip(n_top)
        .filter(|(_, c)| *c > 1)
        .map(|(id, _)| id.to_string())
        .collect();
    if kept.is_empty() {
        log::warn!("feature filter kept nothing out of {} ids", ranked.len());
    }
    Ok(FeatureFilter {
        kept,
        drop_singletons: true,
        drop_top_fraction,
    })
}

pub fn apply_filter(filter: &FeatureFilter, vector: &FeatureVector) -> FeatureVector {
    vector
        .items
        .iter()
        .filter(|(id, _)| filter.kept.contains(*id))
        .map(|(id, w)| (id.clone(), *w))
        .collect()
}

/// Writes `label id:weight id:weight ...` lines.
pub fn write_vectors<'a>(
    rows: impl IntoIterator<Item = (&'a str, &'a FeatureVector)>,
    mut out: impl Write,
) -> std::io::Result<()> {
    for (label, v) in rows {
        write!(out, "{label}")?;
        for (id, w) in &v.items {
            write!(out, " {id}:{w}")?;
        }
        writeln!(out)?;
    }
    Ok(())
}

pub fn parse_vectors(text: &str, origin: &str) -> Result<Vec<(String, FeatureVector)>> {
    let mut rows = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let mut fields = line.split(' ');
        let label = fields.next().unwrap_or_default().to_string();
        let mut v = FeatureVector::default();
        for f in fields {
            let (id, w) = f
                .rsplit_once(':')
                .ok_or_else(|| Error::parse(origin, i + 1, "feature", f))?;
            let w: f64 = w.parse().map_err(|_| Error::parse(origin, i + 1, "weight", f))?;
            if !w.is_finite() {
                return Err(Error::parse(origin, i + 1, "weight", f));
            }
            v.items.insert(id.to_string(), w);
        }
        rows.push((label, v));
    }
    Ok(rows)
}

/// One vector per line, ids only (the `fit_filter` kept set).
pub fn write_filter(filter: &FeatureFilter, mut out: impl Write) -> std::io::Result<()> {
    writeln!(out, "# drop_top_fraction\t{}", filter.drop_top_fraction)?;
    for id in &filter.kept {
        writeln!(out, "{id}")?;
    }
    Ok(())
}

pub fn parse_filter(text: &str, origin: &str) -> Result<FeatureFilter> {
    let mut lines = text.lines();
    let header = lines.next().unwrap_or_default();
    let fraction = header
        .strip_prefix("# drop_top_fraction\t")
        .and_then(|f| f.parse().ok())
        .ok_or_else(|| Error::parse(origin, 1, "header", header))?;
    Ok(FeatureFilter {
        kept: lines.filter(|l| !l.is_empty()).map(str::to_string).collect(),
        drop_singletons: true,
        drop_top_fraction: fraction,
    })
}
