use coupled_ie::graph::{EdgeType, NodeKey, PropGraph};
use coupled_ie::propagate::{mrw, transition_matrix, PropConfig, SeedVector};
use coupled_ie::Relation;
use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;

fn key(i: usize) -> NodeKey {
    NodeKey::pair("s", &format!("n{i:02}"))
}

fn build(n: usize, edges: &[(usize, usize, f64)]) -> PropGraph {
    let mut g = PropGraph::new();
    for i in 0..n {
        g.add_node(key(i), None);
    }
    for &(a, b, w) in edges {
        g.add_edge(&key(a), &key(b), EdgeType::N, w);
    }
    g
}

/// Solves `(I - (1 - a)(P + r d^T)) v = a r` directly, `d` marking dangling
/// columns.
fn dense_solution(g: &PropGraph, seeds: &[usize], alpha: f64) -> Vec<f64> {
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
            let dangling = if t.is_dangling(j) { r[i] } else { 0.0 };
            m[(i, j)] -= (1.0 - alpha) * (p[i][j] + dangling);
        }
    }
    let v = m.lu().solve(&(r * alpha)).unwrap();
    v.iter().copied().collect()
}

fn arb_graph() -> impl Strategy<Value = (usize, Vec<(usize, usize, f64)>, Vec<usize>)> {
    (2usize..=10).prop_flat_map(|n| {
        let edges = prop::collection::vec((0..n, 0..n, 0.05f64..=1.0), 0..25);
        let seeds = prop::collection::vec(0..n, 1..4);
        (Just(n), edges, seeds)
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn power_iteration_matches_linear_solve((n, edges, seeds) in arb_graph()) {
        let g = build(n, &edges);
        let cfg = PropConfig::default();
        let sv = SeedVector::uniform(Relation::Causes, seeds.iter().map(|&s| key(s)));
        let table = mrw(&g, &[sv], &cfg).unwrap();
        let oracle = dense_solution(&g, &seeds, cfg.alpha);
        for (got, want) in table.scores[0].iter().zip(&oracle) {
            prop_assert!((got - want).abs() < 1e-6, "{got} vs {want}");
        }
    }

    #[test]
    fn vectors_are_distributions((n, edges, seeds) in arb_graph(), extra in 0usize..10) {
        let g = build(n, &edges);
        let svs = [
            SeedVector::uniform(Relation::Causes, seeds.iter().map(|&s| key(s))),
            SeedVector::uniform(Relation::Symptoms, [key(extra % n)]),
        ];
        let table = mrw(&g, &svs, &PropConfig::default()).unwrap();
        for v in &table.scores {
            prop_assert!(v.iter().all(|&x| x >= 0.0));
            prop_assert!((v.iter().sum::<f64>() - 1.0).abs() < 1e-8);
        }
    }

    #[test]
    fn uniform_weight_scaling_changes_nothing((n, edges, seeds) in arb_graph()) {
        let halved: Vec<_> = edges.iter().map(|&(a, b, w)| (a, b, w / 2.0)).collect();
        let sv = SeedVector::uniform(Relation::Causes, seeds.iter().map(|&s| key(s)));
        let a = mrw(&build(n, &edges), std::slice::from_ref(&sv), &PropConfig::default()).unwrap();
        let b = mrw(&build(n, &halved), &[sv], &PropConfig::default()).unwrap();
        for (x, y) in a.scores[0].iter().zip(&b.scores[0]) {
            prop_assert!((x - y).abs() < 1e-12);
        }
    }
}

#[test]
fn hub_outranks_leaves() {
    // seed 0 attached to hub 1, which fans out to 2..6; 6 also touches 7
    let edges = [
        (0, 1, 1.0),
        (1, 2, 1.0),
        (1, 3, 1.0),
        (1, 4, 1.0),
        (1, 5, 1.0),
        (1, 6, 1.0),
        (6, 7, 1.0),
    ];
    let g = build(8, &edges);
    let t = mrw(
        &g,
        &[SeedVector::uniform(Relation::Causes, [key(0)])],
        &PropConfig::default(),
    )
    .unwrap();
    let s = |i: usize| t.score(Relation::Causes, &key(i));
    for leaf in 2..=7 {
        assert!(s(1) > s(leaf));
    }
    assert!(s(6) > s(7));
}

#[test]
fn literal_equation_without_dangling_nodes() {
    // connected, so S D^-1 is already column stochastic
    let edges = [(0, 1, 1.0), (1, 2, 0.5), (2, 3, 0.25), (3, 0, 0.75), (1, 3, 0.3)];
    let g = build(4, &edges);
    let alpha = 0.1;
    let mut s = DMatrix::<f64>::zeros(4, 4);
    for &(a, b, w) in &edges {
        s[(a, b)] += w;
        s[(b, a)] += w;
    }
    let d = DMatrix::from_diagonal(&DVector::from_iterator(4, (0..4).map(|j| 1.0 / s.column(j).sum())));
    let m = DMatrix::identity(4, 4) - (s * d) * (1.0 - alpha);
    let r = DVector::from_vec(vec![0.0, 0.0, 1.0, 0.0]);
    let v = m.lu().solve(&(r * alpha)).unwrap();
    let cfg = PropConfig {
        tol: 1e-13,
        max_iter: 2000,
        ..PropConfig::default()
    };
    let t = mrw(&g, &[SeedVector::uniform(Relation::Causes, [key(2)])], &cfg).unwrap();
    for i in 0..4 {
        assert!((t.score(Relation::Causes, &key(i)) - v[i]).abs() < 1e-10);
    }
}
