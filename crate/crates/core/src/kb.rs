//! Knowledge-base triples and distant-supervision seeds.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fs;
use std::io::Write;
use std::path::Path;

use log::warn;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::corpus::{normalize, Corpus};
use crate::error::{Error, Result};
use crate::graph::PairKey;
use crate::simstring::{names_match, TokenStats};
use crate::Relation;

/// Objects longer than this many characters are dropped as KB noise.
pub const MAX_OBJECT_CHARS: usize = 60;

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Triple {
    pub subject: String,
    pub relation: Relation,
    pub object: String,
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Seed {
    pub node: PairKey,
    pub relation: Relation,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SeedSplit {
    pub development: Vec<Seed>,
    pub validation: Vec<Seed>,
    pub rng_seed: u64,
}

fn is_noisy_object(object: &str) -> bool {
    object.chars().count() > MAX_OBJECT_CHARS || object.contains(',')
}

pub fn load_triples(path: impl AsRef<Path>) -> Result<Vec<Triple>> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_triples(&text, &path.display().to_string())
}

/// Parses `subject \t relation \t object` lines; `#` lines are comments.
pub fn parse_triples(text: &str, origin: &str) -> Result<Vec<Triple>> {
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let lineno = i + 1;
        if line.trim().is_empty() || line.starts_with('#') {
            continue;
        }
        let cols: Vec<&str> = line.split('\t').collect();
        if cols.len() != 3 {
            return Err(Error::parse(
                origin,
                lineno,
                "columns",
                format!("expected 3 tab-separated columns, found {}", cols.len()),
            ));
        }
        let relation: Relation = cols[1]
            .trim()
            .parse()
            .map_err(|e: crate::relation::UnknownRelation| Error::parse(origin, lineno, "relation", e.to_string()))?;
        let (subject, object) = (cols[0].trim(), cols[2].trim());
        if subject.is_empty() || object.is_empty() {
            return Err(Error::parse(origin, lineno, "subject/object", "must be non-empty"));
        }
        if is_noisy_object(object) {
            continue;
        }
        out.push(Triple {
            subject: subject.to_string(),
            relation,
            object: object.to_string(),
        });
    }
    Ok(out)
}

pub fn write_triples(triples: &[Triple], mut out: impl Write) -> std::io::Result<()> {
    for t in triples {
        writeln!(out, "{}\t{}\t{}", t.subject, t.relation, t.object)?;
    }
    Ok(())
}

/// Matches each triple against the corpus: the subject must name-match a
/// document subject and the object must name-match a mention in that
/// document. Returns sorted, de-duplicated seeds.
pub fn generate_seeds(triples: &[Triple], corpus: &Corpus, stats: &TokenStats) -> Result<Vec<Seed>> {
    let doc_mentions: Vec<BTreeSet<String>> = corpus
        .documents
        .iter()
        .enumerate()
        .map(|(d, _)| {
            corpus
                .sentence_refs()
                .filter(|r| r.doc == d)
                .flat_map(|r| crate::corpus::chunk_nps(&corpus.documents[d], r))
                .map(|m| m.normalized)
                .collect()
        })
        .collect();

    let mut docs_for_subject: HashMap<String, Vec<usize>> = HashMap::new();
    let mut seeds = BTreeSet::new();
    for t in triples {
        let subject = normalize(&t.subject);
        if !docs_for_subject.contains_key(&subject) {
            let mut docs = Vec::new();
            for (d, doc) in corpus.documents.iter().enumerate() {
                if string_match(&subject, &normalize(&doc.subject), stats)? {
                    docs.push(d);
                }
            }
            docs_for_subject.insert(subject.clone(), docs);
        }
        let object = normalize(&t.object);
        for &d in &docs_for_subject[&subject] {
            for np in &doc_mentions[d] {
                if string_match(&object, np, stats)? {
                    seeds.insert(Seed {
                        node: PairKey::new(&corpus.documents[d].subject, np),
                        relation: t.relation,
                    });
                }
            }
        }
    }
    Ok(seeds.into_iter().collect())
}

fn string_match(a: &str, b: &str, stats: &TokenStats) -> Result<bool> {
    if a == b {
        return Ok(true);
    }
    names_match(a, b, stats)
}

/// Per-relation stratified split: within each relation the seeds are
/// shuffled under `rng_seed` and the first `floor(ratio * n)` go to
/// development, the rest to validation.
pub fn split_seeds(seeds: &[Seed], ratio: f64, rng_seed: u64) -> Result<SeedSplit> {
    if !(ratio > 0.0 && ratio < 1.0) {
        return Err(Error::InvalidParameter(format!("split ratio {ratio} not in (0, 1)")));
    }
    let mut by_relation: BTreeMap<Relation, Vec<Seed>> = BTreeMap::new();
    for s in seeds {
        by_relation.entry(s.relation).or_default().push(s.clone());
    }
    let mut development = Vec::new();
    let mut validation = Vec::new();
    for (k, (relation, mut group)) in by_relation.into_iter().enumerate() {
        group.sort();
        if group.len() < 2 {
            warn!(
                "relation {relation} has {} seed(s); all kept for development",
                group.len()
            );
            development.extend(group);
            continue;
        }
        let mut rng = ChaCha8Rng::seed_from_u64(rng_seed.wrapping_add(k as u64));
        group.shuffle(&mut rng);
        let n_dev = ((ratio * group.len() as f64).floor() as usize).clamp(1, group.len() - 1);
        validation.extend(group.split_off(n_dev));
        development.extend(group);
    }
    Ok(SeedSplit {
        development,
        validation,
        rng_seed,
    })
}

/// Keeps a deterministic `fraction` of each relation's seeds (at least one).
pub fn subsample_seeds(seeds: &[Seed], fraction: f64, rng_seed: u64) -> Vec<Seed> {
    if fraction >= 1.0 {
        return seeds.to_vec();
    }
    let mut by_relation: BTreeMap<Relation, Vec<Seed>> = BTreeMap::new();
    for s in seeds {
        by_relation.entry(s.relation).or_default().push(s.clone());
    }
    let mut out = Vec::new();
    for (k, (_, mut group)) in by_relation.into_iter().enumerate() {
        group.sort();
        let mut rng = ChaCha8Rng::seed_from_u64(rng_seed.wrapping_mul(31).wrapping_add(k as u64));
        group.shuffle(&mut rng);
        let keep = ((fraction * group.len() as f64).round() as usize).clamp(1, group.len());
        group.truncate(keep);
        out.extend(group);
    }
    out.sort();
    out
}

/// Seeds as `relation \t subject \t np` lines.
pub fn write_seeds(seeds: &[Seed], mut out: impl Write) -> std::io::Result<()> {
    for s in seeds {
        writeln!(out, "{}\t{}\t{}", s.relation, s.node.subject, s.node.np)?;
    }
    Ok(())
}

pub fn read_seeds(path: impl AsRef<Path>) -> Result<Vec<Seed>> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let origin = path.display().to_string();
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.is_empty() {
            continue;
        }
        let cols: Vec<&str> = line.splitn(3, '\t').collect();
        if cols.len() != 3 {
            return Err(Error::parse(
                &origin,
                i + 1,
                "columns",
                "expected relation, subject, np",
            ));
        }
        let relation = cols[0]
            .parse()
            .map_err(|e: crate::relation::UnknownRelation| Error::parse(&origin, i + 1, "relation", e.to_string()))?;
        out.push(Seed {
            node: PairKey::new(cols[1], cols[2]),
            relation,
        });
    }
    Ok(out)
}
