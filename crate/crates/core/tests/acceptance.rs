//! Acceptance checks. Prints one PASS/FAIL line per criterion and exits
//! nonzero if any fails.

use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;
use std::time::Instant;

use coupled_ie::classify::TripleStore;
use coupled_ie::classify::{predict, train, Example, LinearModel, TrainConfig, TrainingSet};
use coupled_ie::corpus::Corpus;
use coupled_ie::evaluate::{answer_query, interpolated_precision, qa_eval, EvalReport, Rule};
use coupled_ie::features::{featurize_in, fit_filter, FeatureVector};
use coupled_ie::graph::{EdgeType, NodeKey, PropGraph};
use coupled_ie::pipeline::{Mode, Pipeline, PipelineConfig};
use coupled_ie::propagate::{mrw, transition_matrix, PropConfig, SeedVector};
use coupled_ie::synthdata::{self, SynthSpec};
use coupled_ie::Relation;
use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

type Check = Result<String, String>;

fn ensure(cond: bool, msg: impl Into<String>) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg.into())
    }
}

fn key(i: usize) -> NodeKey {
    NodeKey::pair("s", &format!("n{i:02}"))
}

struct RandomGraph {
    graph: PropGraph,
    seeds: Vec<Vec<usize>>,
}

/// Up to ten nodes, weights in (0, 1], one to three classes with random seeds.
fn random_graph(rng: &mut ChaCha8Rng) -> RandomGraph {
    let n = rng.gen_range(1..=10);
    let mut graph = PropGraph::new();
    for i in 0..n {
        graph.add_node(key(i), None);
    }
    for _ in 0..rng.gen_range(0..=2 * n) {
        let (a, b) = (rng.gen_range(0..n), rng.gen_range(0..n));
        graph.add_edge(&key(a), &key(b), EdgeType::L, 1.0 - rng.gen::<f64>());
    }
    let seeds = (0..rng.gen_range(1..=3))
        .map(|_| (0..rng.gen_range(1..=n)).map(|_| rng.gen_range(0..n)).collect())
        .collect();
    RandomGraph { graph, seeds }
}

/// Dense solve of `(I - (1 - a) S D^-1) v = a r`, with columns of isolated
/// nodes pointing back at the restart distribution.
fn dense_ppr(g: &PropGraph, seeds: &[usize], alpha: f64) -> Vec<f64> {
    let t = transition_matrix(g).unwrap();
    let n = t.len();
    let p = t.to_dense();
    let mut r = DVector::zeros(n);
    for &s in seeds {
        r[t.index_of(&key(s)).unwrap()] += 1.0 / seeds.len() as f64;
    }
    let mut m = DMatrix::identity(n, n);
    for i in 0..n {
        for j in 0..n {
            let back = if t.is_dangling(j) { r[i] } else { 0.0 };
            m[(i, j)] -= (1.0 - alpha) * (p[i][j] + back);
        }
    }
    m.lu().solve(&(r * alpha)).unwrap().iter().copied().collect()
}

fn seed_vectors(seeds: &[Vec<usize>]) -> Vec<SeedVector> {
    seeds
        .iter()
        .zip(Relation::ALL)
        .map(|(s, r)| SeedVector::uniform(r, s.iter().map(|&i| key(i))))
        .collect()
}

fn ppr_oracle() -> Check {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let cfg = PropConfig::default();
    let mut worst = 0.0f64;
    for _ in 0..100 {
        let rg = random_graph(&mut rng);
        let table = mrw(&rg.graph, &seed_vectors(&rg.seeds), &cfg).map_err(|e| e.to_string())?;
        for (c, s) in rg.seeds.iter().enumerate() {
            let oracle = dense_ppr(&rg.graph, s, cfg.alpha);
            for (got, want) in table.scores[c].iter().zip(&oracle) {
                worst = worst.max((got - want).abs());
            }
        }
    }
    let secs = start.elapsed().as_secs_f64();
    ensure(worst <= 1e-6, format!("max deviation {worst:e}"))?;
    ensure(secs < 10.0, format!("took {secs:.1}s"))?;
    Ok(format!("100 graphs, max deviation {worst:.1e}, {secs:.2}s"))
}

fn conservation() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let mut worst = 0.0f64;
    let mut vectors = 0;
    for _ in 0..100 {
        let rg = random_graph(&mut rng);
        let table = mrw(&rg.graph, &seed_vectors(&rg.seeds), &PropConfig::default()).map_err(|e| e.to_string())?;
        for v in &table.scores {
            worst = worst.max((v.iter().sum::<f64>() - 1.0).abs());
            vectors += 1;
        }
    }
    ensure(worst <= 1e-8, format!("mass off by {worst:e}"))?;
    Ok(format!("{vectors} class vectors, max |sum - 1| = {worst:.1e}"))
}

fn closed_form() -> Check {
    let mut g = PropGraph::new();
    let (a, b) = (key(0), key(1));
    g.add_node(a.clone(), None);
    g.add_node(b.clone(), None);
    g.add_edge(&a, &b, EdgeType::L, 1.0);
    // default tolerance stops once the L1 step is below 1e-8, too coarse for 1e-9
    let cfg = PropConfig {
        tol: 1e-12,
        max_iter: 1000,
        ..PropConfig::default()
    };
    let t = mrw(&g, &[SeedVector::uniform(Relation::Causes, [a.clone()])], &cfg).map_err(|e| e.to_string())?;
    let va = t.score(Relation::Causes, &a);
    let want = 0.1 / 0.19;
    ensure((va - want).abs() <= 1e-9, format!("v_A = {va}, want {want}"))?;
    Ok(format!("v_A = {va:.12}"))
}

/// One replicate's micro scores per mode.
fn replicate(seed: u64, root: &Path) -> Result<BTreeMap<Mode, EvalReport>, String> {
    let spec = SynthSpec {
        n_target_docs: 200,
        n_structured_docs: 50,
        ambiguity_rate: 0.3,
        noise_rate: 0.2,
        rng_seed: seed,
        ..SynthSpec::default()
    };
    let data = synthdata::generate(&spec).map_err(|e| e.to_string())?;
    let dir = root.join(format!("rep{seed}"));
    synthdata::write_synth(&data, &dir).map_err(|e| e.to_string())?;
    let mut out = BTreeMap::new();
    for mode in [
        Mode::Ds1,
        Mode::DsL,
        Mode::NoSectionNoNeighbor,
        Mode::NoSection,
        Mode::Full,
    ] {
        let p = Pipeline::new(PipelineConfig {
            mode,
            rng_seed: seed,
            ..synthdata::pipeline_config(&dir, &dir.join("out"))
        })
        .map_err(|e| e.to_string())?;
        p.run_all(false).map_err(|e| e.to_string())?;
        out.insert(mode, p.report().map_err(|e| e.to_string())?);
    }
    Ok(out)
}

fn ablation_runs() -> Result<(Vec<BTreeMap<Mode, EvalReport>>, f64), String> {
    let start = Instant::now();
    let tmp = tempfile::tempdir().map_err(|e| e.to_string())?;
    let reps = (0..3)
        .map(|s| replicate(s, tmp.path()))
        .collect::<Result<Vec<_>, _>>()?;
    Ok((reps, start.elapsed().as_secs_f64()))
}

fn directional(runs: &[BTreeMap<Mode, EvalReport>], secs: f64) -> Check {
    let f1 = |r: &BTreeMap<Mode, EvalReport>, m: Mode| r[&m].micro.f1;
    let mut ordered = 0;
    let mut gains = Vec::new();
    let mut rows = Vec::new();
    for r in runs {
        let chain = [Mode::Full, Mode::NoSectionNoNeighbor, Mode::DsL, Mode::Ds1].map(|m| f1(r, m));
        if chain.windows(2).all(|w| w[0] >= w[1]) {
            ordered += 1;
        }
        gains.push(chain[0] / chain[3] - 1.0);
        rows.push(chain.map(|x| format!("{x:.3}")).join(">="));
    }
    let gain = gains.iter().sum::<f64>() / gains.len() as f64;
    let detail = format!(
        "ordering in {ordered}/3 [{}], mean gain over DS1 {:+.1}%, {secs:.0}s",
        rows.join(" | "),
        100.0 * gain
    );
    ensure(ordered >= 2, detail.clone())?;
    ensure(gain >= 0.2, detail.clone())?;
    ensure(secs < 300.0, detail.clone())?;
    Ok(detail)
}

fn precision_mechanism(runs: &[BTreeMap<Mode, EvalReport>]) -> Check {
    let pairs: Vec<(f64, f64)> = runs
        .iter()
        .map(|r| (r[&Mode::Full].micro.precision, r[&Mode::NoSection].micro.precision))
        .collect();
    let wins = pairs.iter().filter(|(a, b)| a >= b).count();
    let detail = format!(
        "DIEBOLDS P >= DIEBOLDS-S P in {wins}/3 [{}]",
        pairs
            .iter()
            .map(|(a, b)| format!("{a:.3} vs {b:.3}"))
            .collect::<Vec<_>>()
            .join(", ")
    );
    ensure(wins >= 2, detail.clone())?;
    Ok(detail)
}

fn eleven_point() -> Check {
    let curve = interpolated_precision(&[true, false, true], 2);
    let mut want = [2.0 / 3.0; 11];
    want[..6].fill(1.0);
    ensure(curve == want, format!("{curve:?}"))?;
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    for _ in 0..1000 {
        let ranking: Vec<bool> = (0..rng.gen_range(0..40)).map(|_| rng.gen_bool(0.3)).collect();
        let hits = ranking.iter().filter(|&&x| x).count();
        let c = interpolated_precision(&ranking, hits + rng.gen_range(0..4));
        ensure(
            c.windows(2).all(|w| w[0] >= w[1]),
            format!("increasing curve for {ranking:?}"),
        )?;
    }
    Ok("worked ranking exact, 1000 random curves non-increasing".into())
}

fn feature_filter() -> Check {
    let spec = SynthSpec {
        n_target_docs: 40,
        n_structured_docs: 0,
        rng_seed: 77,
        ..SynthSpec::default()
    };
    let data = synthdata::generate(&spec).map_err(|e| e.to_string())?;
    let corpus: &Corpus = &data.target;
    let vectors: Vec<FeatureVector> = corpus
        .coord_lists()
        .iter()
        .map(|l| featurize_in(corpus, l, 3))
        .collect::<Result<_, _>>()
        .map_err(|e| e.to_string())?;
    let filter = fit_filter(&vectors, 0.05).map_err(|e| e.to_string())?;

    // recount every id by scanning all vectors
    let vocab: BTreeSet<&String> = vectors.iter().flat_map(|v| v.items.keys()).collect();
    let mut counts: Vec<(&String, usize)> = vocab
        .iter()
        .map(|id| (*id, vectors.iter().filter(|v| v.items.contains_key(*id)).count()))
        .collect();
    counts.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(b.0)));
    let n_drop = (0.05 * counts.len() as f64).ceil() as usize;
    let oracle: BTreeSet<String> = counts[n_drop..]
        .iter()
        .filter(|(_, c)| *c >= 2)
        .map(|(id, _)| id.to_string())
        .collect();
    ensure(filter.kept == oracle, "kept vocabulary differs from recount")?;
    let singletons = counts.iter().filter(|(_, c)| *c == 1).count();
    ensure(
        counts
            .iter()
            .filter(|(_, c)| *c == 1)
            .all(|(id, _)| !filter.kept.contains(*id)),
        "a singleton survived",
    )?;
    let dropped_frequent = counts
        .iter()
        .filter(|(id, c)| *c >= 2 && !filter.kept.contains(*id))
        .count();
    ensure(
        dropped_frequent == n_drop,
        format!("{dropped_frequent} frequent ids dropped, want {n_drop}"),
    )?;
    Ok(format!(
        "{} lists, vocab {}, dropped top {n_drop} and {singletons} singletons, kept {}",
        vectors.len(),
        counts.len(),
        filter.kept.len()
    ))
}

fn toy_vector(rng: &mut ChaCha8Rng, class: Option<usize>) -> FeatureVector {
    let mut v: FeatureVector = (0..rng.gen_range(1..5))
        .map(|_| (format!("noise={}", rng.gen_range(0..10)), 1.0))
        .collect();
    if let Some(k) = class {
        v.items.insert(format!("class={k}"), 1.0);
    }
    v
}

/// Highest calibrated probability among positive margins, else "other".
fn margin_oracle(models: &[LinearModel], x: &FeatureVector) -> Option<Relation> {
    let mut best: Option<(Relation, f64)> = None;
    let mut sorted: Vec<&LinearModel> = models.iter().collect();
    sorted.sort_by_key(|m| m.relation);
    for m in sorted {
        let margin = m.bias
            + x.items
                .iter()
                .map(|(id, v)| m.weights.get(id).unwrap_or(&0.0) * v)
                .sum::<f64>();
        let p = 1.0 / (1.0 + (m.cal_a * margin + m.cal_b).exp());
        if margin > 0.0 && best.is_none_or(|(_, bp)| p > bp) {
            best = Some((m.relation, p));
        }
    }
    best.map(|(r, _)| r)
}

fn classifier() -> Check {
    let relations = [Relation::Causes, Relation::Symptoms, Relation::Treatments];
    let mut disagreements = 0;
    let mut min_acc: f64 = 1.0;
    for set_seed in 0..50u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(set_seed);
        let mut set = TrainingSet::default();
        for (k, r) in relations.iter().enumerate() {
            let exs = (0..rng.gen_range(4..10))
                .map(|i| Example {
                    id: format!("{r}-{i}"),
                    features: toy_vector(&mut rng, Some(k)),
                })
                .collect();
            set.positives.insert(*r, exs);
        }
        set.unlabeled = (0..8)
            .map(|i| Example {
                id: format!("u{i}"),
                features: toy_vector(&mut rng, None),
            })
            .collect();
        let models = train(
            &set,
            &TrainConfig {
                rng_seed: set_seed,
                ..TrainConfig::default()
            },
        )
        .map_err(|e| e.to_string())?;

        // each class owns one indicator feature, so the positives are separable
        let mut total = 0;
        let mut right = 0;
        for (r, exs) in &set.positives {
            for e in exs {
                total += 1;
                right += usize::from(predict(&models, &e.features).relation == Some(*r));
            }
        }
        min_acc = min_acc.min(right as f64 / total as f64);

        for _ in 0..20 {
            let class = rng.gen_bool(0.6).then(|| rng.gen_range(0..3));
            let x = toy_vector(&mut rng, class);
            disagreements += usize::from(predict(&models, &x).relation != margin_oracle(&models, &x));
        }
    }
    ensure(min_acc == 1.0, format!("training accuracy {min_acc}"))?;
    ensure(
        disagreements == 0,
        format!("{disagreements} predictions differ from the oracle"),
    )?;
    Ok("training accuracy 1.0 on 50 sets, 1000 predictions match the oracle".into())
}

fn qa() -> Check {
    let q = |answers: &[&str], gold: &[&str]| {
        qa_eval(
            &BTreeMap::from([(1, answers.iter().map(|s| s.to_string()).collect())]),
            &BTreeMap::from([(1, gold.iter().map(|s| s.to_string()).collect())]),
        )
    };
    let rr = q(&["x", "y", "a"], &["a"]).mrr;
    ensure(rr == 1.0 / 3.0, format!("RR {rr}"))?;
    let ap = q(&["a", "x", "b"], &["a", "b"]).map;
    // (1/1 + 2/3) / 2 evaluated as written
    ensure(ap == (1.0 + 2.0 / 3.0) / 2.0, format!("AP {ap}"))?;

    const TREAT: Relation = Relation::UsedToTreat;
    const SIDE: Relation = Relation::SideEffects;
    for seed in 0..20u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut store = TripleStore::default();
        for _ in 0..rng.gen_range(0..40) {
            let r = if rng.gen_bool(0.5) { TREAT } else { SIDE };
            let (d, o) = (format!("d{}", rng.gen_range(0..5)), format!("e{}", rng.gen_range(0..6)));
            store.insert(&d, r, &o, rng.gen_range(1..100) as f64 / 100.0);
        }
        let c = format!("e{}", rng.gen_range(0..6));
        let rows = |r: Relation| -> Vec<(String, String, f64)> {
            store
                .iter()
                .filter(|t| t.1 == r)
                .map(|(a, _, b, x)| (a.into(), b.into(), x))
                .collect()
        };
        let mut best: BTreeMap<String, f64> = BTreeMap::new();
        for (d1, o1, x1) in rows(TREAT) {
            for (d2, o2, x2) in rows(SIDE) {
                if o1 == c && d1 == d2 {
                    let e = best.entry(o2).or_insert(f64::MIN);
                    *e = e.max(x1.min(x2));
                }
            }
        }
        let mut want: Vec<(String, f64)> = best.into_iter().collect();
        want.sort_by(|a, b| b.1.total_cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
        let rule: Rule = format!("q(E) :- used_to_treat(D, {c}), side_effects(D, E).")
            .parse()
            .map_err(|e: coupled_ie::Error| e.to_string())?;
        ensure(
            answer_query(&rule, &store) == want,
            format!("join differs on store {seed}"),
        )?;
    }
    Ok("RR = 1/3, AP = 5/6, 20 joins match nested loops".into())
}

fn reproducibility() -> Check {
    let tmp = tempfile::tempdir().map_err(|e| e.to_string())?;
    let data = synthdata::generate(&SynthSpec {
        n_target_docs: 60,
        n_structured_docs: 15,
        rng_seed: 5,
        ..SynthSpec::default()
    })
    .map_err(|e| e.to_string())?;
    synthdata::write_synth(&data, tmp.path()).map_err(|e| e.to_string())?;
    let mut outputs = Vec::new();
    for run in ["a", "b"] {
        let p = Pipeline::new(PipelineConfig {
            mode: Mode::Full,
            rng_seed: 11,
            ..synthdata::pipeline_config(tmp.path(), &tmp.path().join(run))
        })
        .map_err(|e| e.to_string())?;
        p.run_all(false).map_err(|e| e.to_string())?;
        let read = |path: std::path::PathBuf| std::fs::read(&path).map_err(|e| format!("{}: {e}", path.display()));
        outputs.push((read(p.triples_path())?, read(p.report_path())?));
    }
    ensure(!outputs[0].0.is_empty(), "no triples extracted")?;
    ensure(outputs[0].0 == outputs[1].0, "triple stores differ")?;
    ensure(outputs[0].1 == outputs[1].1, "reports differ")?;
    Ok(format!(
        "{} triple bytes and {} report bytes identical",
        outputs[0].0.len(),
        outputs[0].1.len()
    ))
}

fn main() {
    let mut results: Vec<(u8, &str, Check)> = vec![
        (1, "PPR matches dense solve", ppr_oracle()),
        (2, "class vectors conserve mass", conservation()),
        (3, "two-node closed form", closed_form()),
    ];
    match ablation_runs() {
        Ok((runs, secs)) => {
            results.push((4, "F1 ordering and gain over DS1", directional(&runs, secs)));
            results.push((5, "DIEBOLDS precision vs DIEBOLDS-S", precision_mechanism(&runs)));
        }
        Err(e) => {
            results.push((4, "F1 ordering and gain over DS1", Err(e.clone())));
            results.push((5, "DIEBOLDS precision vs DIEBOLDS-S", Err(e)));
        }
    }
    results.push((6, "11-point interpolated curve", eleven_point()));
    results.push((7, "feature filter vs recount", feature_filter()));
    results.push((8, "classifier sanity", classifier()));
    results.push((9, "QA metrics and join", qa()));
    results.push((10, "byte-identical reruns", reproducibility()));

    let mut failed = 0;
    for (n, name, r) in &results {
        match r {
            Ok(d) => println!("criterion {n:>2} PASS {name}: {d}"),
            Err(d) => {
                failed += 1;
                println!("criterion {n:>2} FAIL {name}: {d}");
            }
        }
    }
    println!("acceptance: {} passed, {failed} failed", results.len() - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}
