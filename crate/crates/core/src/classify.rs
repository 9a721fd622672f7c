//! One binary linear max-margin classifier per relation, trained on the
//! L2-regularized hinge loss, with a Platt-style logistic calibration of the
//! margin.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fs;
use std::io::Write;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::corpus::{normalize, Corpus};
use crate::error::{Error, Result};
use crate::features::{apply_filter, featurize_in, FeatureFilter, FeatureVector};
use crate::Relation;

const BIAS_FEATURE: &str = "\u{1}bias";
const PROB_EPS: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrainConfig {
    pub reg_lambda: f64,
    pub epochs: usize,
    /// Fraction of each binary problem held out for calibration.
    pub holdout: f64,
    pub rng_seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            reg_lambda: 1e-4,
            epochs: 20,
            holdout: 0.1,
            rng_seed: 0,
        }
    }
}

/// An instance with a stable identifier (a list node key in the pipeline).
#[derive(Debug, Clone, PartialEq)]
pub struct Example {
    pub id: String,
    pub features: FeatureVector,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct TrainingSet {
    pub positives: BTreeMap<Relation, Vec<Example>>,
    /// Lists never ranked in any top-N, sampled as extra negatives.
    pub unlabeled: Vec<Example>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LinearModel {
    pub relation: Relation,
    pub weights: BTreeMap<String, f64>,
    pub bias: f64,
    /// Probability is `1 / (1 + exp(a * margin + b))`, with `a < 0`.
    pub cal_a: f64,
    pub cal_b: f64,
}

impl LinearModel {
    pub fn margin(&self, x: &FeatureVector) -> f64 {
        self.bias
            + x.items
                .iter()
                .filter_map(|(id, v)| self.weights.get(id).map(|w| w * v))
                .sum::<f64>()
    }

    pub fn probability(&self, margin: f64) -> f64 {
        sigmoid(-(self.cal_a * margin + self.cal_b)).clamp(PROB_EPS, 1.0 - PROB_EPS)
    }
}

fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// Dense binary problem over a local feature index.
struct Problem {
    rows: Vec<Vec<(usize, f64)>>,
    labels: Vec<f64>,
    dim: usize,
}

impl Problem {
    fn new(examples: &[(&FeatureVector, f64)], vocab: &mut HashMap<String, usize>) -> Problem {
        let mut rows = Vec::with_capacity(examples.len());
        let bias = intern(vocab, BIAS_FEATURE);
        for (x, _) in examples {
            let mut row: Vec<(usize, f64)> = x.items.iter().map(|(id, &v)| (intern(vocab, id), v)).collect();
            row.push((bias, 1.0));
            rows.push(row);
        }
        Problem {
            rows,
            labels: examples.iter().map(|(_, y)| *y).collect(),
            dim: vocab.len(),
        }
    }
}

fn intern(vocab: &mut HashMap<String, usize>, id: &str) -> usize {
    let n = vocab.len();
    *vocab.entry(id.to_string()).or_insert(n)
}

fn dot(w: &[f64], row: &[(usize, f64)]) -> f64 {
    row.iter().map(|&(j, v)| w[j] * v).sum()
}

/// Stochastic dual coordinate ascent on
/// `lambda / 2 |w|^2 + 1/n sum hinge(y w.x)`, one fixed permutation per
/// epoch. Each step solves its dual coordinate exactly, so no step size is
/// needed.
fn sdca(p: &Problem, lambda: f64, epochs: usize, rng: &mut ChaCha8Rng) -> Vec<f64> {
    let n = p.rows.len();
    let mut w = vec![0.0; p.dim];
    if n == 0 {
        return w;
    }
    let ln = lambda * n as f64;
    let mut alpha = vec![0.0; n];
    let sq: Vec<f64> = p.rows.iter().map(|r| r.iter().map(|(_, v)| v * v).sum()).collect();
    let mut order: Vec<usize> = (0..n).collect();
    for _ in 0..epochs {
        order.shuffle(rng);
        for &i in &order {
            if sq[i] == 0.0 {
                continue;
            }
            let y = p.labels[i];
            let row = &p.rows[i];
            let grad = 1.0 - y * dot(&w, row);
            let next = (alpha[i] + grad * ln / sq[i]).clamp(0.0, 1.0);
            let delta = next - alpha[i];
            if delta != 0.0 {
                alpha[i] = next;
                for &(j, v) in row {
                    w[j] += delta * y * v / ln;
                }
            }
        }
    }
    w
}

/// Platt's sigmoid fit with smoothed targets, by Newton's method with
/// backtracking. Returns `(a, b)`.
pub fn fit_platt(margins: &[f64], labels: &[bool]) -> (f64, f64) {
    let n_pos = labels.iter().filter(|&&l| l).count() as f64;
    let n_neg = labels.len() as f64 - n_pos;
    let hi = (n_pos + 1.0) / (n_pos + 2.0);
    let lo = 1.0 / (n_neg + 2.0);
    let targets: Vec<f64> = labels.iter().map(|&l| if l { hi } else { lo }).collect();
    let objective = |a: f64, b: f64| -> f64 {
        margins
            .iter()
            .zip(&targets)
            .map(|(&f, &t)| {
                let z = a * f + b;
                // -t log p - (1 - t) log(1 - p) with p = 1 / (1 + e^z)
                if z >= 0.0 {
                    t * z + (1.0 + (-z).exp()).ln()
                } else {
                    (t - 1.0) * z + (1.0 + z.exp()).ln()
                }
            })
            .sum()
    };
    let (mut a, mut b) = (0.0, ((n_neg + 1.0) / (n_pos + 1.0)).ln());
    let mut fval = objective(a, b);
    for _ in 0..100 {
        let (mut g1, mut g2, mut h11, mut h22, mut h21) = (0.0, 0.0, 1e-12, 1e-12, 0.0);
        for (&f, &t) in margins.iter().zip(&targets) {
            let p = sigmoid(-(a * f + b));
            let d1 = t - p;
            let d2 = p * (1.0 - p);
            g1 += f * d1;
            g2 += d1;
            h11 += f * f * d2;
            h22 += d2;
            h21 += f * d2;
        }
        if g1.abs() < 1e-9 && g2.abs() < 1e-9 {
            break;
        }
        let det = h11 * h22 - h21 * h21;
        let da = -(h22 * g1 - h21 * g2) / det;
        let db = -(-h21 * g1 + h11 * g2) / det;
        let gd = g1 * da + g2 * db;
        let mut step = 1.0;
        let mut moved = false;
        while step >= 1e-10 {
            let (na, nb) = (a + step * da, b + step * db);
            let nf = objective(na, nb);
            if nf < fval + 1e-4 * step * gd {
                a = na;
                b = nb;
                fval = nf;
                moved = true;
                break;
            }
            step /= 2.0;
        }
        if !moved {
            break;
        }
    }
    if !(a < 0.0) || !a.is_finite() || !b.is_finite() {
        (-1.0, 0.0)
    } else {
        (a, b)
    }
}

fn rng_for(seed: u64, relation: Relation) -> ChaCha8Rng {
    let offset = Relation::ALL.iter().position(|&r| r == relation).unwrap_or(0) as u64;
    ChaCha8Rng::seed_from_u64(seed.wrapping_mul(0x9E37_79B9_7F4A_7C15).wrapping_add(offset))
}

/// Builds the binary problem for `relation`: its positives against the
/// other relations' positives plus as many sampled unlabeled lists.
pub fn binary_examples<'a>(
    set: &'a TrainingSet,
    relation: Relation,
    rng: &mut ChaCha8Rng,
) -> Vec<(&'a FeatureVector, f64)> {
    let positives = set.positives.get(&relation).map(Vec::as_slice).unwrap_or(&[]);
    let pos_ids: BTreeSet<&str> = positives.iter().map(|e| e.id.as_str()).collect();
    let mut out: Vec<(&FeatureVector, f64)> = positives.iter().map(|e| (&e.features, 1.0)).collect();
    let mut neg_ids = BTreeSet::new();
    for (r, exs) in &set.positives {
        if *r == relation {
            continue;
        }
        for e in exs {
            if !pos_ids.contains(e.id.as_str()) && neg_ids.insert(e.id.as_str()) {
                out.push((&e.features, -1.0));
            }
        }
    }
    let mut pool: Vec<&Example> = set
        .unlabeled
        .iter()
        .filter(|e| !pos_ids.contains(e.id.as_str()) && !neg_ids.contains(e.id.as_str()))
        .collect();
    pool.shuffle(rng);
    out.extend(pool.into_iter().take(positives.len()).map(|e| (&e.features, -1.0)));
    out
}

/// Trains one model per relation with at least one positive, in relation
/// order.
pub fn train(set: &TrainingSet, config: &TrainConfig) -> Result<Vec<LinearModel>> {
    if !(config.reg_lambda > 0.0) {
        return Err(Error::InvalidParameter(format!(
            "reg_lambda {} must be positive",
            config.reg_lambda
        )));
    }
    if !(0.0..1.0).contains(&config.holdout) {
        return Err(Error::InvalidParameter(format!(
            "holdout {} not in [0, 1)",
            config.holdout
        )));
    }
    let relations: Vec<Relation> = set
        .positives
        .iter()
        .filter_map(|(r, exs)| {
            if exs.is_empty() {
                log::warn!("no positives for {r}; model omitted");
                None
            } else {
                Some(*r)
            }
        })
        .collect();
    Ok(relations
        .par_iter()
        .map(|&r| {
            let mut rng = rng_for(config.rng_seed, r);
            let examples = binary_examples(set, r, &mut rng);
            train_binary(r, &examples, config, &mut rng)
        })
        .collect())
}

/// Trains a single binary model on labeled `(x, +1/-1)` pairs.
pub fn train_binary(
    relation: Relation,
    examples: &[(&FeatureVector, f64)],
    config: &TrainConfig,
    rng: &mut ChaCha8Rng,
) -> LinearModel {
    let mut idx: Vec<usize> = (0..examples.len()).collect();
    idx.shuffle(rng);
    let n_hold = (config.holdout * examples.len() as f64).floor() as usize;
    let (held, fit) = idx.split_at(n_hold);
    let both_classes =
        |ix: &[usize]| ix.iter().any(|&i| examples[i].1 > 0.0) && ix.iter().any(|&i| examples[i].1 < 0.0);
    // too small or one-sided holdouts calibrate on the training margins
    let (fit, held): (Vec<usize>, Vec<usize>) = if held.len() >= 2 && both_classes(held) && both_classes(fit) {
        (fit.to_vec(), held.to_vec())
    } else {
        (idx.clone(), idx.clone())
    };

    let mut vocab = HashMap::new();
    let fit_examples: Vec<(&FeatureVector, f64)> = fit.iter().map(|&i| examples[i]).collect();
    let problem = Problem::new(&fit_examples, &mut vocab);
    let w = sdca(&problem, config.reg_lambda, config.epochs, rng);

    let mut weights = BTreeMap::new();
    let mut bias = 0.0;
    for (id, j) in vocab {
        if id == BIAS_FEATURE {
            bias = w[j];
        } else if w[j] != 0.0 {
            weights.insert(id, w[j]);
        }
    }
    let mut model = LinearModel {
        relation,
        weights,
        bias,
        cal_a: -1.0,
        cal_b: 0.0,
    };
    let margins: Vec<f64> = held.iter().map(|&i| model.margin(examples[i].0)).collect();
    let labels: Vec<bool> = held.iter().map(|&i| examples[i].1 > 0.0).collect();
    (model.cal_a, model.cal_b) = fit_platt(&margins, &labels);
    model
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Prediction {
    /// `None` means "other".
    pub relation: Option<Relation>,
    pub score: f64,
}

/// One-vs-rest decision: the positive-margin model with the highest
/// calibrated probability, or "other" scored `1 - max probability`.
pub fn predict(models: &[LinearModel], x: &FeatureVector) -> Prediction {
    let mut best_pos: Option<(Relation, f64)> = None;
    let mut max_prob: f64 = 0.0;
    let mut ordered: Vec<&LinearModel> = models.iter().collect();
    ordered.sort_by_key(|m| m.relation);
    for m in ordered {
        let margin = m.margin(x);
        let p = m.probability(margin);
        max_prob = max_prob.max(p);
        if margin > 0.0 && best_pos.is_none_or(|(_, bp)| p > bp) {
            best_pos = Some((m.relation, p));
        }
    }
    match best_pos {
        Some((r, p)) => Prediction {
            relation: Some(r),
            score: p,
        },
        None => Prediction {
            relation: None,
            score: (1.0 - max_prob).clamp(PROB_EPS, 1.0 - PROB_EPS),
        },
    }
}

/// Extracted `(subject, relation, object) -> score`, max over duplicates.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct TripleStore {
    pub triples: BTreeMap<(String, Relation, String), f64>,
}

impl TripleStore {
    pub fn insert(&mut self, subject: &str, relation: Relation, object: &str, score: f64) {
        let e = self
            .triples
            .entry((normalize(subject), relation, normalize(object)))
            .or_insert(score);
        *e = e.max(score);
    }

    pub fn len(&self) -> usize {
        self.triples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.triples.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, Relation, &str, f64)> {
        self.triples
            .iter()
            .map(|((s, r, o), &x)| (s.as_str(), *r, o.as_str(), x))
    }

    pub fn write(&self, mut out: impl Write) -> std::io::Result<()> {
        for (s, r, o, x) in self.iter() {
            writeln!(out, "{s}\t{r}\t{o}\t{x}")?;
        }
        Ok(())
    }

    pub fn parse(text: &str, origin: &str) -> Result<Self> {
        let mut store = TripleStore::default();
        for (i, line) in text.lines().enumerate() {
            if line.is_empty() {
                continue;
            }
            let cols: Vec<&str> = line.split('\t').collect();
            let bad = |f: &str| Error::parse(origin, i + 1, f, line);
            if cols.len() != 4 {
                return Err(bad("columns"));
            }
            let r: Relation = cols[1].parse().map_err(|_| bad("relation"))?;
            let x: f64 = cols[3].parse().map_err(|_| bad("score"))?;
            store.insert(cols[0], r, cols[2], x);
        }
        Ok(store)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        TripleStore::parse(&text, &path.display().to_string())
    }
}

/// Classifies every list of `corpus` with the models of the document's
/// domain and breaks positive lists into per-item triples.
pub fn extract_triples(
    models: &[LinearModel],
    corpus: &Corpus,
    filter: &FeatureFilter,
    window: usize,
) -> Result<TripleStore> {
    let lists = corpus.coord_lists();
    let predictions: Vec<Result<Prediction>> = lists
        .par_iter()
        .map(|l| {
            let doc = &corpus.documents[l.sentence_ref.doc];
            let domain_models: Vec<LinearModel> = models
                .iter()
                .filter(|m| doc.domain.relations().contains(&m.relation))
                .cloned()
                .collect();
            let x = apply_filter(filter, &featurize_in(corpus, l, window)?);
            Ok(predict(&domain_models, &x))
        })
        .collect();
    let mut store = TripleStore::default();
    for (l, p) in lists.iter().zip(predictions) {
        let p = p?;
        let Some(r) = p.relation else { continue };
        let subject = &corpus.documents[l.sentence_ref.doc].subject;
        for item in &l.items {
            store.insert(subject, r, &item.normalized, p.score);
        }
    }
    Ok(store)
}

/// Writes models as `model relation bias a b` headers followed by
/// `feature weight` lines.
pub fn write_models(models: &[LinearModel], mut out: impl Write) -> std::io::Result<()> {
    for m in models {
        writeln!(out, "model\t{}\t{}\t{}\t{}", m.relation, m.bias, m.cal_a, m.cal_b)?;
        for (id, w) in &m.weights {
            writeln!(out, "{id}\t{w}")?;
        }
    }
    Ok(())
}

pub fn parse_models(text: &str, origin: &str) -> Result<Vec<LinearModel>> {
    let mut models: Vec<LinearModel> = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.is_empty() {
            continue;
        }
        let cols: Vec<&str> = line.split('\t').collect();
        let bad = |f: &str| Error::parse(origin, i + 1, f, line);
        let num = |s: &str, f: &str| s.parse::<f64>().ok().filter(|x| x.is_finite()).ok_or_else(|| bad(f));
        if cols[0] == "model" {
            if cols.len() != 5 {
                return Err(bad("header"));
            }
            models.push(LinearModel {
                relation: cols[1].parse().map_err(|_| bad("relation"))?,
                bias: num(cols[2], "bias")?,
                cal_a: num(cols[3], "a")?,
                cal_b: num(cols[4], "b")?,
                weights: BTreeMap::new(),
            });
        } else {
            let m = models.last_mut().ok_or_else(|| bad("header"))?;
            if cols.len() != 2 {
                return Err(bad("weight"));
            }
            m.weights.insert(cols[0].to_string(), num(cols[1], "weight")?);
        }
    }
    Ok(models)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn fv(pairs: &[(&str, f64)]) -> FeatureVector {
        pairs.iter().map(|(k, v)| (k.to_string(), *v)).collect()
    }

    fn ex(id: &str, pairs: &[(&str, f64)]) -> Example {
        Example {
            id: id.into(),
            features: fv(pairs),
        }
    }

    fn toy_set() -> TrainingSet {
        let mut set = TrainingSet::default();
        set.positives.insert(
            Relation::SideEffects,
            (0..6)
                .map(|i| ex(&format!("s{i}"), &[("npTok=nausea", 1.0), ("ctx=cause", 1.0)]))
                .collect(),
        );
        set.positives.insert(
            Relation::UsedToTreat,
            (0..6)
                .map(|i| ex(&format!("u{i}"), &[("npTok=pain", 1.0), ("ctx=treat", 1.0)]))
                .collect(),
        );
        set.unlabeled = (0..6).map(|i| ex(&format!("o{i}"), &[("npTok=tablet", 1.0)])).collect();
        set
    }

    #[test]
    fn separable_set_is_fit_exactly() {
        let set = toy_set();
        let models = train(&set, &TrainConfig::default()).unwrap();
        assert_eq!(models.len(), 2);
        for (r, exs) in &set.positives {
            for e in exs {
                assert_eq!(predict(&models, &e.features).relation, Some(*r));
            }
        }
        for e in &set.unlabeled {
            assert_eq!(predict(&models, &e.features).relation, None);
        }
        let p = predict(&models, &fv(&[("npTok=nausea", 1.0), ("ctx=cause", 1.0)]));
        assert!(p.score > 0.5 && p.score < 1.0);
    }

    #[test]
    fn training_is_deterministic() {
        let set = toy_set();
        let cfg = TrainConfig {
            rng_seed: 9,
            ..TrainConfig::default()
        };
        assert_eq!(train(&set, &cfg).unwrap(), train(&set, &cfg).unwrap());
    }

    #[test]
    fn empty_positives_are_skipped() {
        let mut set = toy_set();
        set.positives.insert(Relation::Causes, Vec::new());
        let models = train(&set, &TrainConfig::default()).unwrap();
        assert!(models.iter().all(|m| m.relation != Relation::Causes));
    }

    #[test]
    fn identical_vectors_give_small_margins() {
        let x = fv(&[("a", 1.0)]);
        let mut examples: Vec<(&FeatureVector, f64)> = vec![(&x, 1.0); 7];
        examples.extend(vec![(&x, -1.0); 3]);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let m = train_binary(Relation::Causes, &examples, &TrainConfig::default(), &mut rng);
        let margin = m.margin(&x);
        // majority label wins; the optimum sits on the hinge
        assert!(margin > 0.0 && margin <= 1.0 + 1e-9, "{margin}");
    }

    #[test]
    fn zero_vector_is_other_when_biases_are_not_positive() {
        let models = vec![LinearModel {
            relation: Relation::Causes,
            weights: BTreeMap::from([("a".to_string(), 2.0)]),
            bias: -0.5,
            cal_a: -2.0,
            cal_b: 0.0,
        }];
        let p = predict(&models, &FeatureVector::default());
        assert_eq!(p.relation, None);
        assert!((p.score - (1.0 - 1.0 / (1.0 + 1f64.exp()))).abs() < 1e-12);
    }

    #[test]
    fn platt_fit_is_monotone_and_separates() {
        let margins = [-2.0, -1.5, -1.0, -0.2, 0.3, 1.0, 1.4, 2.2];
        let labels = [false, false, false, true, false, true, true, true];
        let (a, b) = fit_platt(&margins, &labels);
        assert!(a < 0.0);
        let p = |f: f64| 1.0 / (1.0 + (a * f + b).exp());
        assert!(p(2.0) > 0.5 && p(-2.0) < 0.5);
    }

    #[test]
    fn models_round_trip() {
        let models = train(&toy_set(), &TrainConfig::default()).unwrap();
        let mut buf = Vec::new();
        write_models(&models, &mut buf).unwrap();
        let back = parse_models(std::str::from_utf8(&buf).unwrap(), "mem").unwrap();
        assert_eq!(back, models);
    }

    #[test]
    fn store_keeps_max_score() {
        let mut s = TripleStore::default();
        s.insert("Meloxicam", Relation::SideEffects, "Nausea", 0.3);
        s.insert("meloxicam", Relation::SideEffects, "nausea", 0.7);
        s.insert("meloxicam", Relation::SideEffects, "nausea", 0.5);
        assert_eq!(s.len(), 1);
        let mut buf = Vec::new();
        s.write(&mut buf).unwrap();
        assert_eq!(
            String::from_utf8(buf.clone()).unwrap(),
            "meloxicam\tside_effects\tnausea\t0.7\n"
        );
        assert_eq!(
            TripleStore::parse(std::str::from_utf8(&buf).unwrap(), "mem").unwrap(),
            s
        );
    }
}
