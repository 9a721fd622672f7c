//! Retrieval-style scoring of extracted triples against labeled pages,
//! interpolated precision-recall curves, and conjunctive question answering
//! over a triple store.

use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::classify::TripleStore;
use crate::corpus::normalize;
use crate::error::{Error, Result};
use crate::simstring::{names_match, TokenStats};
use crate::Relation;

/// Recall levels 0.0, 0.1, ..., 1.0.
pub const RECALL_LEVELS: usize = 11;

#[derive(Debug, Clone, Default, PartialEq)]
pub struct GoldSet {
    pub facts: BTreeSet<(String, Relation, String)>,
}

impl GoldSet {
    pub fn insert(&mut self, subject: &str, relation: Relation, object: &str) {
        self.facts.insert((normalize(subject), relation, normalize(object)));
    }

    /// Gold objects per `(subject, relation)` query.
    pub fn queries(&self) -> BTreeMap<(String, Relation), Vec<String>> {
        let mut q: BTreeMap<(String, Relation), Vec<String>> = BTreeMap::new();
        for (s, r, o) in &self.facts {
            q.entry((s.clone(), *r)).or_default().push(o.clone());
        }
        q
    }

    pub fn parse(text: &str, origin: &str) -> Result<Self> {
        let mut gold = GoldSet::default();
        for t in crate::kb::parse_triples(text, origin)? {
            gold.insert(&t.subject, t.relation, &t.object);
        }
        Ok(gold)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        GoldSet::parse(&text, &path.display().to_string())
    }

    pub fn write(&self, mut out: impl Write) -> std::io::Result<()> {
        for (s, r, o) in &self.facts {
            writeln!(out, "{s}\t{r}\t{o}")?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct Prf {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

impl Prf {
    pub fn from_counts(matched: usize, predicted: usize, gold: usize) -> Prf {
        let ratio = |a: usize, b: usize| if b == 0 { 0.0 } else { a as f64 / b as f64 };
        let precision = ratio(matched, predicted);
        let recall = ratio(matched, gold);
        Prf {
            precision,
            recall,
            f1: harmonic(precision, recall),
        }
    }
}

fn harmonic(p: f64, r: f64) -> f64 {
    if p + r == 0.0 {
        0.0
    } else {
        2.0 * p * r / (p + r)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QueryScore {
    pub subject: String,
    pub relation: Relation,
    pub predicted: usize,
    pub gold: usize,
    pub matched: usize,
    pub prf: Prf,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct QaScores {
    pub mrr: f64,
    pub map: f64,
    pub recall: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub queries: Vec<QueryScore>,
    /// Pooled counts over all queries.
    pub micro: Prf,
    /// Mean of per-query precision, recall and F1.
    pub macro_avg: Prf,
    pub pr_curve: Vec<f64>,
    pub qa: Option<QaScores>,
}

/// Ranked predictions of one query with their relevance after greedy
/// one-to-one matching against the gold objects.
fn judge(predicted: &[(&str, f64)], gold: &[String], stats: &TokenStats) -> Vec<(f64, bool)> {
    let mut ranked = predicted.to_vec();
    ranked.sort_by(|a, b| b.1.total_cmp(&a.1).then_with(|| a.0.cmp(b.0)));
    let mut used = vec![false; gold.len()];
    ranked
        .into_iter()
        .map(|(obj, score)| {
            let hit =
                gold.iter().position(|g| g == obj).filter(|&i| !used[i]).or_else(|| {
                    (0..gold.len()).find(|&i| !used[i] && names_match(obj, &gold[i], stats).unwrap_or(false))
                });
            if let Some(i) = hit {
                used[i] = true;
            }
            (score, hit.is_some())
        })
        .collect()
}

/// Name statistics over every gold and predicted object string.
pub fn object_stats(store: &TripleStore, gold: &GoldSet) -> TokenStats {
    let names: BTreeSet<&str> = store
        .iter()
        .map(|(_, _, o, _)| o)
        .chain(gold.facts.iter().map(|(_, _, o)| o.as_str()))
        .collect();
    TokenStats::from_texts(names)
}

/// Scores every gold `(subject, relation)` query; also fills the pooled
/// 11-point curve.
pub fn ir_eval(store: &TripleStore, gold: &GoldSet) -> EvalReport {
    let stats = object_stats(store, gold);
    let mut by_query: BTreeMap<(&str, Relation), Vec<(&str, f64)>> = BTreeMap::new();
    for (s, r, o, x) in store.iter() {
        by_query.entry((s, r)).or_default().push((o, x));
    }
    let mut report = EvalReport::default();
    let mut pooled: Vec<(f64, bool)> = Vec::new();
    let (mut m_sum, mut p_sum, mut g_sum) = (0, 0, 0);
    for ((subject, relation), objects) in gold.queries() {
        if objects.is_empty() {
            log::warn!("query ({subject}, {relation}) has no gold objects; excluded");
            continue;
        }
        let preds = by_query.get(&(subject.as_str(), relation)).cloned().unwrap_or_default();
        let judged = judge(&preds, &objects, &stats);
        let matched = judged.iter().filter(|(_, rel)| *rel).count();
        m_sum += matched;
        p_sum += preds.len();
        g_sum += objects.len();
        pooled.extend(judged);
        report.queries.push(QueryScore {
            prf: Prf::from_counts(matched, preds.len(), objects.len()),
            subject,
            relation,
            predicted: preds.len(),
            gold: objects.len(),
            matched,
        });
    }
    report.micro = Prf::from_counts(m_sum, p_sum, g_sum);
    let n = report.queries.len().max(1) as f64;
    let mean = |f: fn(&Prf) -> f64| report.queries.iter().map(|q| f(&q.prf)).sum::<f64>() / n;
    report.macro_avg = Prf {
        precision: mean(|p| p.precision),
        recall: mean(|p| p.recall),
        f1: mean(|p| p.f1),
    };
    pooled.sort_by(|a, b| b.0.total_cmp(&a.0));
    let relevance: Vec<bool> = pooled.iter().map(|(_, r)| *r).collect();
    report.pr_curve = interpolated_precision(&relevance, g_sum).to_vec();
    report
}

/// Interpolated precision at recall 0.0, 0.1, ..., 1.0 for a ranked list
/// of relevance judgments against `n_gold` relevant items.
pub fn interpolated_precision(ranking: &[bool], n_gold: usize) -> [f64; RECALL_LEVELS] {
    let mut points = Vec::with_capacity(ranking.len());
    let mut hits = 0;
    for (k, &rel) in ranking.iter().enumerate() {
        if rel {
            hits += 1;
        }
        let recall = if n_gold == 0 { 0.0 } else { hits as f64 / n_gold as f64 };
        points.push((recall, hits as f64 / (k + 1) as f64));
    }
    let mut out = [0.0f64; RECALL_LEVELS];
    for (level, slot) in out.iter_mut().enumerate() {
        let at = level as f64 / 10.0;
        *slot = points
            .iter()
            .filter(|(recall, _)| *recall + 1e-12 >= at)
            .map(|(_, precision)| *precision)
            .fold(0.0, f64::max);
    }
    out
}

/// Pooled curve from a triple store, same judgments as [`ir_eval`].
pub fn pr_curve_11pt(store: &TripleStore, gold: &GoldSet) -> [f64; RECALL_LEVELS] {
    let report = ir_eval(store, gold);
    let mut out = [0.0; RECALL_LEVELS];
    out.copy_from_slice(&report.pr_curve);
    out
}

/// Argument of an atom.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Term {
    Var(String),
    Const(String),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Atom {
    pub relation: Relation,
    pub subject: Term,
    pub object: Term,
}

/// `q(Answer) :- rel(X, Answer), ...` with a single answer variable.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Rule {
    pub answer: String,
    pub body: Vec<Atom>,
}

fn parse_term(s: &str) -> Result<Term> {
    let s = s.trim();
    let unquoted = s.strip_prefix('"').and_then(|t| t.strip_suffix('"'));
    match (unquoted, s.chars().next()) {
        (Some(c), _) => Ok(Term::Const(normalize(c))),
        (None, Some(c)) if c.is_uppercase() || c == '_' => Ok(Term::Var(s.to_string())),
        (None, Some(_)) => Ok(Term::Const(normalize(s))),
        (None, None) => Err(Error::Query("empty argument".into())),
    }
}

/// Splits `name(a, b)` into its parts; `rest` is what follows the `)`.
fn parse_call(s: &str) -> Result<(&str, Vec<&str>, &str)> {
    let open = s
        .find('(')
        .ok_or_else(|| Error::Query(format!("expected `(` in `{s}`")))?;
    let close = s[open..]
        .find(')')
        .map(|i| i + open)
        .ok_or_else(|| Error::Query(format!("expected `)` in `{s}`")))?;
    let args = s[open + 1..close].split(',').map(str::trim).collect();
    Ok((s[..open].trim(), args, &s[close + 1..]))
}

impl std::str::FromStr for Rule {
    type Err = Error;

    fn from_str(line: &str) -> Result<Rule> {
        let (head, body) = line
            .split_once(":-")
            .ok_or_else(|| Error::Query(format!("missing `:-` in `{line}`")))?;
        let (_, head_args, _) = parse_call(head.trim())?;
        let answer = match head_args.as_slice() {
            [a] => match parse_term(a)? {
                Term::Var(v) => v,
                Term::Const(c) => return Err(Error::Query(format!("answer `{c}` must be a variable"))),
            },
            _ => return Err(Error::Query("head must have exactly one answer variable".into())),
        };
        let mut atoms = Vec::new();
        let mut rest = body.trim().trim_end_matches('.').trim();
        while !rest.is_empty() {
            let (name, args, tail) = parse_call(rest)?;
            let relation: Relation = name.parse().map_err(|e| Error::Query(format!("{e}")))?;
            let [s, o] = args.as_slice() else {
                return Err(Error::Query(format!("`{name}` takes two arguments")));
            };
            atoms.push(Atom {
                relation,
                subject: parse_term(s)?,
                object: parse_term(o)?,
            });
            rest = tail.trim().trim_start_matches(',').trim();
        }
        if atoms.is_empty() {
            return Err(Error::Query("empty rule body".into()));
        }
        let bound = atoms
            .iter()
            .flat_map(|a| [&a.subject, &a.object])
            .any(|t| *t == Term::Var(answer.clone()));
        if !bound {
            return Err(Error::Query(format!(
                "answer variable `{answer}` does not occur in the body"
            )));
        }
        Ok(Rule { answer, body: atoms })
    }
}

/// Rules of a question file; question ids are 1-based over non-blank,
/// non-comment lines.
pub fn parse_rules(text: &str, origin: &str) -> Result<Vec<Rule>> {
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty() && !l.trim_start().starts_with('#'))
        .map(|(i, l)| {
            l.parse()
                .map_err(|e: Error| Error::parse(origin, i + 1, "rule", e.to_string()))
        })
        .collect()
}

/// Gold answers `question id -> answers`.
pub fn parse_answers(text: &str, origin: &str) -> Result<BTreeMap<usize, BTreeSet<String>>> {
    let mut out: BTreeMap<usize, BTreeSet<String>> = BTreeMap::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() || line.starts_with('#') {
            continue;
        }
        let (id, answer) = line
            .split_once('\t')
            .ok_or_else(|| Error::parse(origin, i + 1, "columns", line))?;
        let id: usize = id
            .trim()
            .parse()
            .map_err(|_| Error::parse(origin, i + 1, "question", line))?;
        out.entry(id).or_default().insert(normalize(answer.trim()));
    }
    Ok(out)
}

/// Conjunctive join of `rule` over `store`. An answer's score is the best
/// grounding, a grounding's score the minimum of its triples' scores.
pub fn answer_query(rule: &Rule, store: &TripleStore) -> Vec<(String, f64)> {
    let mut by_rel: BTreeMap<Relation, Vec<(&str, &str, f64)>> = BTreeMap::new();
    for (s, r, o, x) in store.iter() {
        by_rel.entry(r).or_default().push((s, o, x));
    }
    let mut best: BTreeMap<String, f64> = BTreeMap::new();
    let mut bindings: BTreeMap<&str, &str> = BTreeMap::new();
    join(rule, 0, &by_rel, &mut bindings, f64::INFINITY, &mut best);
    let mut out: Vec<(String, f64)> = best.into_iter().collect();
    out.sort_by(|a, b| b.1.total_cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
    out
}

fn join<'a>(
    rule: &'a Rule,
    depth: usize,
    by_rel: &BTreeMap<Relation, Vec<(&'a str, &'a str, f64)>>,
    bindings: &mut BTreeMap<&'a str, &'a str>,
    score: f64,
    best: &mut BTreeMap<String, f64>,
) {
    let Some(atom) = rule.body.get(depth) else {
        if let Some(a) = bindings.get(rule.answer.as_str()) {
            let e = best.entry(a.to_string()).or_insert(score);
            *e = e.max(score);
        }
        return;
    };
    let Some(rows) = by_rel.get(&atom.relation) else { return };
    for &(s, o, x) in rows {
        let mut added = Vec::new();
        let ok = [(&atom.subject, s), (&atom.object, o)]
            .into_iter()
            .all(|(term, value)| match term {
                Term::Const(c) => c == value,
                Term::Var(v) => match bindings.get(v.as_str()) {
                    Some(bound) => *bound == value,
                    None => {
                        bindings.insert(v.as_str(), value);
                        added.push(v.as_str());
                        true
                    }
                },
            });
        if ok {
            join(rule, depth + 1, by_rel, bindings, score.min(x), best);
        }
        for v in added {
            bindings.remove(v);
        }
    }
}

/// Mean reciprocal rank, mean average precision and mean recall over the
/// gold questions. Answers are compared after normalization.
pub fn qa_eval(answers: &BTreeMap<usize, Vec<String>>, gold: &BTreeMap<usize, BTreeSet<String>>) -> QaScores {
    let questions: Vec<(&usize, &BTreeSet<String>)> = gold.iter().filter(|(_, g)| !g.is_empty()).collect();
    if questions.is_empty() {
        return QaScores::default();
    }
    let mut total = QaScores::default();
    for (id, g) in &questions {
        let ranked = answers.get(id).map(Vec::as_slice).unwrap_or(&[]);
        let mut seen = BTreeSet::new();
        let mut hits = 0usize;
        let mut ap = 0.0;
        let mut rr = 0.0;
        for (k, a) in ranked.iter().enumerate() {
            let a = normalize(a);
            if g.contains(&a) && seen.insert(a) {
                hits += 1;
                ap += hits as f64 / (k + 1) as f64;
                if rr == 0.0 {
                    rr = 1.0 / (k + 1) as f64;
                }
            }
        }
        total.mrr += rr;
        total.map += ap / g.len() as f64;
        total.recall += hits as f64 / g.len() as f64;
    }
    let n = questions.len() as f64;
    QaScores {
        mrr: total.mrr / n,
        map: total.map / n,
        recall: total.recall / n,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn store(rows: &[(&str, Relation, &str, f64)]) -> TripleStore {
        let mut s = TripleStore::default();
        for &(a, r, b, x) in rows {
            s.insert(a, r, b, x);
        }
        s
    }

    fn gold(rows: &[(&str, Relation, &str)]) -> GoldSet {
        let mut g = GoldSet::default();
        for &(a, r, b) in rows {
            g.insert(a, r, b);
        }
        g
    }

    #[test]
    fn perfect_predictions() {
        let g = gold(&[
            ("m", Relation::SideEffects, "nausea"),
            ("m", Relation::SideEffects, "rash"),
        ]);
        let s = store(&[
            ("m", Relation::SideEffects, "nausea", 0.9),
            ("m", Relation::SideEffects, "rash", 0.8),
        ]);
        let r = ir_eval(&s, &g);
        assert_eq!(
            r.micro,
            Prf {
                precision: 1.0,
                recall: 1.0,
                f1: 1.0
            }
        );
        assert_eq!(r.pr_curve, vec![1.0; 11]);
    }

    #[test]
    fn three_predicted_two_gold() {
        let g = gold(&[
            ("m", Relation::SideEffects, "nausea"),
            ("m", Relation::SideEffects, "rash"),
        ]);
        let s = store(&[
            ("m", Relation::SideEffects, "nausea", 0.9),
            ("m", Relation::SideEffects, "tablet", 0.8),
            ("m", Relation::SideEffects, "rashes", 0.7),
            // other subjects and relations are not queried
            ("z", Relation::SideEffects, "nausea", 0.9),
            ("m", Relation::UsedToTreat, "pain", 0.9),
        ]);
        let r = ir_eval(&s, &g);
        assert_eq!(r.queries.len(), 1);
        let q = &r.queries[0];
        assert_eq!((q.predicted, q.gold, q.matched), (3, 2, 2));
        assert!((r.micro.precision - 2.0 / 3.0).abs() < 1e-12);
        assert_eq!(r.micro.recall, 1.0);
        assert!((r.micro.f1 - 0.8).abs() < 1e-12);
    }

    #[test]
    fn one_gold_object_matches_once() {
        let g = gold(&[("m", Relation::SideEffects, "stomach bleeding")]);
        let s = store(&[
            ("m", Relation::SideEffects, "stomach bleeding", 0.9),
            ("m", Relation::SideEffects, "stomach bleedings", 0.8),
        ]);
        let q = &ir_eval(&s, &g).queries[0];
        assert_eq!(q.matched, 1);
    }

    #[test]
    fn micro_and_macro_differ() {
        let g = gold(&[
            ("a", Relation::Symptoms, "fever"),
            ("b", Relation::Symptoms, "cough"),
            ("b", Relation::Symptoms, "chills"),
            ("b", Relation::Symptoms, "headache"),
        ]);
        let s = store(&[("a", Relation::Symptoms, "fever", 0.5)]);
        let r = ir_eval(&s, &g);
        assert!((r.micro.recall - 0.25).abs() < 1e-12);
        assert!((r.macro_avg.recall - 0.5).abs() < 1e-12);
    }

    #[test]
    fn worked_interpolation() {
        let curve = interpolated_precision(&[true, false, true], 2);
        for (i, p) in curve.iter().enumerate() {
            let want = if i <= 5 { 1.0 } else { 2.0 / 3.0 };
            assert!((p - want).abs() < 1e-15, "level {i}: {p}");
        }
        assert_eq!(interpolated_precision(&[true, true], 2), [1.0; 11]);
        assert_eq!(interpolated_precision(&[false, false], 2), [0.0; 11]);
        assert_eq!(interpolated_precision(&[], 3), [0.0; 11]);
    }

    #[test]
    fn parses_rules() {
        let r: Rule = "q(Y) :- used_to_treat(daonil, Y).".parse().unwrap();
        assert_eq!(r.answer, "Y");
        assert_eq!(r.body[0].subject, Term::Const("daonil".into()));
        let r: Rule = "q(Effect) :- used_to_treat(Drug, \"Diabetes Mellitus\"), side_effects(Drug, Effect)."
            .parse()
            .unwrap();
        assert_eq!(r.body.len(), 2);
        assert_eq!(r.body[0].object, Term::Const("diabetes mellitus".into()));
        assert!("q(Z) :- used_to_treat(X, Y).".parse::<Rule>().is_err());
        assert!("q(Y) :- adverse_effect_of(X, Y).".parse::<Rule>().is_err());
        assert!("q(y) :- used_to_treat(x, y).".parse::<Rule>().is_err());
        assert!("q(Y) used_to_treat(X, Y).".parse::<Rule>().is_err());
    }

    #[test]
    fn single_atom_query() {
        let s = store(&[
            ("daonil", Relation::UsedToTreat, "diabetes mellitus", 0.9),
            ("aspirin", Relation::UsedToTreat, "pain", 0.8),
        ]);
        let rule: Rule = "q(Y) :- used_to_treat(daonil, Y).".parse().unwrap();
        assert_eq!(answer_query(&rule, &s), vec![("diabetes mellitus".to_string(), 0.9)]);
        assert!(answer_query(&rule, &TripleStore::default()).is_empty());
    }

    #[test]
    fn join_scores_by_weakest_triple_and_best_grounding() {
        let s = store(&[
            ("d1", Relation::UsedToTreat, "gout", 0.9),
            ("d2", Relation::UsedToTreat, "gout", 0.4),
            ("d1", Relation::SideEffects, "rash", 0.5),
            ("d2", Relation::SideEffects, "rash", 0.95),
            ("d2", Relation::SideEffects, "cough", 0.95),
        ]);
        let rule: Rule = "q(E) :- used_to_treat(D, gout), side_effects(D, E).".parse().unwrap();
        assert_eq!(
            answer_query(&rule, &s),
            vec![("rash".to_string(), 0.5), ("cough".to_string(), 0.4)]
        );
    }

    #[test]
    fn qa_worked_examples() {
        let gold = BTreeMap::from([(1, BTreeSet::from(["c".to_string()]))]);
        let answers = BTreeMap::from([(1, vec!["a".into(), "b".into(), "c".into()])]);
        assert!((qa_eval(&answers, &gold).mrr - 1.0 / 3.0).abs() < 1e-15);

        let gold = BTreeMap::from([(1, BTreeSet::from(["a".to_string(), "c".to_string()]))]);
        let answers = BTreeMap::from([(1, vec!["a".into(), "b".into(), "c".into()])]);
        let s = qa_eval(&answers, &gold);
        assert!((s.map - 5.0 / 6.0).abs() < 1e-15);
        assert_eq!(s.recall, 1.0);

        let answers = BTreeMap::from([(1, vec!["c".into(), "a".into()])]);
        assert_eq!(
            qa_eval(&answers, &gold),
            QaScores {
                mrr: 1.0,
                map: 1.0,
                recall: 1.0
            }
        );
    }

    #[test]
    fn rule_file_and_answer_file() {
        let rules = parse_rules(
            "# drugs\nq(Y) :- used_to_treat(daonil, Y).\n\nq(X) :- causes(flu, X).\n",
            "mem",
        )
        .unwrap();
        assert_eq!(rules.len(), 2);
        let answers = parse_answers("1\tDiabetes Mellitus\n2\tfever\n2\tchills\n", "mem").unwrap();
        assert_eq!(answers[&2].len(), 2);
        assert!(answers[&1].contains("diabetes mellitus"));
        assert!(parse_rules("q(Y) :- nope(a, Y).", "mem").is_err());
    }
}
