mod support;

use lineage_core::selection::infer;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use support::oracle;

#[test]
fn inferred_sets_match_exhaustive_minimum() {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let mut exact = 0;
    let mut multi = 0;
    for case in 0..150 {
        let (store, selection) = oracle::random_case(&mut rng, 6, 4);
        let inference = infer(&store, &selection).unwrap();
        let paths: Vec<_> = selection.iter().map(|id| store.op_path(id).unwrap()).collect();
        let best = oracle::min_cost(&paths);
        let got = inference.cost();
        assert_eq!(
            (got.count, got.complexity),
            best,
            "case {case}: selection {selection:?} paths {paths:?}"
        );
        exact += inference.exact as usize;
        multi += (best.0 >= 2) as usize;
    }
    assert_eq!(exact, 150);
    // The generator must produce selections that need several variables.
    assert!(multi >= 30, "only {multi} multi-variable cases");
}

#[test]
fn oracle_slot_examples() {
    use lineage_core::store::Operation;
    let p = Operation::new("prune").with("sparsity", 0.5);
    let q = Operation::new("prune").with("sparsity", 0.9);
    assert_eq!(oracle::slot_min_cost(&[Some(&p), Some(&q)]), (1, 1));
    assert_eq!(oracle::slot_min_cost(&[Some(&p), None]), (1, 2));
    assert_eq!(oracle::slot_min_cost(&[Some(&p), Some(&q), None]), (2, 3));
    let c = Operation::new("calibrate");
    assert_eq!(oracle::slot_min_cost(&[Some(&p), Some(&c)]), (1, 3));
}
