use std::collections::BTreeMap;

use coupled_ie::classify::{predict, train, train_binary, Example, LinearModel, TrainConfig, TrainingSet};
use coupled_ie::features::FeatureVector;
use coupled_ie::Relation;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn point(x: f64, y: f64) -> FeatureVector {
    [("x".to_string(), x), ("y".to_string(), y)].into_iter().collect()
}

/// Ten positives in a cone around `theta`, each mirrored as a negative.
fn mirrored_cloud(rng: &mut ChaCha8Rng, theta: f64) -> Vec<(FeatureVector, f64)> {
    let mut out = Vec::new();
    for _ in 0..10 {
        let a = theta + rng.gen_range(-1.2..1.2);
        let r = rng.gen_range(0.5..2.0);
        let (x, y) = (r * a.cos(), r * a.sin());
        out.push((point(x, y), 1.0));
        out.push((point(-x, -y), -1.0));
    }
    out
}

/// Direction maximizing the smallest functional margin, scanned at 0.01 degrees.
fn grid_max_margin(points: &[(FeatureVector, f64)]) -> f64 {
    let mut best = (f64::NEG_INFINITY, 0.0);
    for step in 0..36_000 {
        let t = (step as f64 / 100.0).to_radians();
        let m = points
            .iter()
            .map(|(p, y)| y * (t.cos() * p.get("x") + t.sin() * p.get("y")))
            .fold(f64::INFINITY, f64::min);
        if m > best.0 {
            best = (m, t);
        }
    }
    best.1
}

fn angle_between(a: f64, b: f64) -> f64 {
    let d = (a - b).rem_euclid(std::f64::consts::TAU);
    d.min(std::f64::consts::TAU - d).to_degrees()
}

#[test]
fn boundary_matches_grid_search_max_margin() {
    let mut rng = ChaCha8Rng::seed_from_u64(42);
    let cfg = TrainConfig {
        holdout: 0.0,
        ..TrainConfig::default()
    };
    for trial in 0..10 {
        let theta = rng.gen_range(0.0..std::f64::consts::TAU);
        let data = mirrored_cloud(&mut rng, theta);
        let examples: Vec<(&FeatureVector, f64)> = data.iter().map(|(x, y)| (x, *y)).collect();
        let m = train_binary(Relation::Causes, &examples, &cfg, &mut rng);
        let learned = m
            .weights
            .get("y")
            .copied()
            .unwrap_or(0.0)
            .atan2(m.weights.get("x").copied().unwrap_or(0.0));
        let oracle = grid_max_margin(&data);
        let diff = angle_between(learned, oracle);
        assert!(diff < 5.0, "trial {trial}: {diff} degrees off");
        for (x, y) in &data {
            assert!(y * m.margin(x) > 0.0);
        }
    }
}

fn oracle_predict(models: &[LinearModel], x: &FeatureVector) -> (Option<Relation>, f64) {
    let mut rows: Vec<(Relation, f64, f64)> = Vec::new();
    for m in models {
        let mut margin = m.bias;
        for (id, v) in &x.items {
            if let Some(w) = m.weights.get(id) {
                margin += w * v;
            }
        }
        let p = 1.0 / (1.0 + (m.cal_a * margin + m.cal_b).exp());
        rows.push((m.relation, margin, p));
    }
    rows.sort_by_key(|r| r.0);
    let max_p = rows.iter().map(|r| r.2).fold(0.0, f64::max);
    let mut best: Option<(Relation, f64)> = None;
    for &(r, margin, p) in &rows {
        if margin > 0.0 && best.is_none_or(|(_, bp)| p > bp) {
            best = Some((r, p));
        }
    }
    match best {
        Some((r, p)) => (Some(r), p),
        None => (None, 1.0 - max_p),
    }
}

fn random_vector(rng: &mut ChaCha8Rng, vocab: usize) -> FeatureVector {
    (0..rng.gen_range(1..6))
        .map(|_| (format!("f={}", rng.gen_range(0..vocab)), 1.0))
        .collect()
}

#[test]
fn predictions_match_one_vs_rest_margin_oracle() {
    let relations = [Relation::Causes, Relation::Symptoms, Relation::Treatments];
    for set_seed in 0..50u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(set_seed);
        let mut set = TrainingSet::default();
        for (k, r) in relations.iter().enumerate() {
            let exs = (0..rng.gen_range(3..10))
                .map(|i| {
                    let mut x = random_vector(&mut rng, 12);
                    x.items.insert(format!("class={k}"), 1.0);
                    Example {
                        id: format!("{r}-{i}"),
                        features: x,
                    }
                })
                .collect();
            set.positives.insert(*r, exs);
        }
        set.unlabeled = (0..10)
            .map(|i| Example {
                id: format!("u{i}"),
                features: random_vector(&mut rng, 12),
            })
            .collect();
        let cfg = TrainConfig {
            rng_seed: set_seed,
            ..TrainConfig::default()
        };
        let models = train(&set, &cfg).unwrap();
        for _ in 0..20 {
            let mut x = random_vector(&mut rng, 12);
            if rng.gen_bool(0.5) {
                x.items.insert(format!("class={}", rng.gen_range(0..3)), 1.0);
            }
            let got = predict(&models, &x);
            let (rel, score) = oracle_predict(&models, &x);
            assert_eq!(got.relation, rel, "set {set_seed}");
            assert!((got.score - score).abs() < 1e-9);
            assert!(got.score > 0.0 && got.score < 1.0);
        }
    }
}

#[test]
fn single_positive_margin_decides() {
    let mk = |r, bias| LinearModel {
        relation: r,
        weights: BTreeMap::new(),
        bias,
        cal_a: -1.0,
        cal_b: 3.0,
    };
    let models = vec![
        mk(Relation::Causes, -0.5),
        mk(Relation::Symptoms, 0.1),
        mk(Relation::Treatments, -2.0),
    ];
    assert_eq!(
        predict(&models, &FeatureVector::default()).relation,
        Some(Relation::Symptoms)
    );
}
