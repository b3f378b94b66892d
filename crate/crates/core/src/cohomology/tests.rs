use proptest::prelude::*;

use super::*;

fn dense_rank(a: &SparseMatrix) -> usize {
    let d = a.to_dense();
    let sv = d.svd(false, false).singular_values;
    let top = sv.iter().fold(0.0f64, |m, v| m.max(*v));
    sv.iter().filter(|&&v| v > 1e-10 * top).count()
}

fn dense_betti(c: &TwistedCochainComplex) -> Vec<usize> {
    let ranks: Vec<usize> = c.d.iter().map(dense_rank).collect();
    (0..=c.n)
        .map(|k| c.dim(k) - if k < c.n { ranks[k] } else { 0 } - if k > 0 { ranks[k - 1] } else { 0 })
        .collect()
}

fn betti(n: usize, m: usize, mu: &[f64]) -> Vec<usize> {
    twisted_betti(&build_torus_complex(n, m, mu).unwrap(), RankOptions::default()).unwrap()
}

#[test]
fn weighted_difference_on_a_circle_is_injective() {
    let c = build_torus_complex(1, 8, &[1.0]).unwrap();
    assert_eq!(dense_rank(&c.d[0]), 8);
    assert_eq!(sparse_rank(&c.d[0], RankOptions::default()).unwrap(), 8);
    let trivial = build_torus_complex(1, 8, &[0.0]).unwrap();
    assert_eq!(sparse_rank(&trivial.d[0], RankOptions::default()).unwrap(), 7);
}

#[test]
fn coboundary_squares_to_zero_exactly() {
    let c = build_torus_complex(2, 4, &[1.0, 2f64.sqrt()]).unwrap();
    assert_eq!(c.square_defect(), 0.0);
    let c = build_torus_complex(3, 3, &[0.3, -1.7, 2.2]).unwrap();
    assert_eq!(c.square_defect(), 0.0);
    let c = build_torus_complex(2, 2, &[0.5, 0.25]).unwrap();
    assert_eq!(c.square_defect(), 0.0);
}

#[test]
fn torus_betti_numbers_match_the_dense_oracle() {
    for mu in [[0.0, 0.0], [1.0, 0.0], [0.0, -0.5], [1.0, 2f64.sqrt()]] {
        let c = build_torus_complex(2, 8, &mu).unwrap();
        let b = twisted_betti(&c, RankOptions::default()).unwrap();
        assert_eq!(b, dense_betti(&c), "μ = {mu:?}");
    }
    assert_eq!(betti(2, 8, &[0.0, 0.0]), vec![1, 2, 1]);
    assert_eq!(betti(2, 8, &[1.0, 0.0]), vec![0, 0, 0]);
}

#[test]
fn three_torus() {
    let c = build_torus_complex(3, 6, &[2f64.sqrt(), 0.0, 0.0]).unwrap();
    let b = twisted_betti(&c, RankOptions::default()).unwrap();
    assert_eq!(b, vec![0, 0, 0, 0]);
    assert_eq!(b, dense_betti(&c));
    assert_eq!(betti(3, 4, &[0.0; 3]), vec![1, 3, 3, 1]);
}

#[test]
fn euler_characteristic_is_untwisted() {
    for (n, mu) in [(2, vec![0.7, -0.2]), (3, vec![1.0, 1.0, 1.0]), (1, vec![0.5])] {
        let c = build_torus_complex(n, 4, &mu).unwrap();
        let e = euler_characteristic_check(&c, RankOptions::default()).unwrap();
        assert!(e.passed && e.twisted == 0, "{e:?}");
    }
}

#[test]
fn gauge_rescaling_conjugates_the_complexes() {
    let mu = [0.8, -0.3];
    for cuts in [[3usize, 3], [1, 2]] {
        let cut = build_torus_complex_with(2, 4, &mu, &cuts, Gauge::Cut).unwrap();
        let uni = build_torus_complex_with(2, 4, &mu, &cuts, Gauge::Uniform).unwrap();
        for k in 0..2 {
            let g0 = cut.gauge_scaling(k);
            let g1 = cut.gauge_scaling(k + 1);
            let dense_cut = cut.d[k].to_dense();
            let dense_uni = uni.d[k].to_dense();
            let lhs = &dense_uni * nalgebra::DMatrix::from_diagonal(&nalgebra::DVector::from_vec(g0));
            let rhs = nalgebra::DMatrix::from_diagonal(&nalgebra::DVector::from_vec(g1)) * &dense_cut;
            assert!((lhs - rhs).amax() < 1e-12, "cuts {cuts:?}, degree {k}");
        }
    }
}

#[test]
fn refinement_and_cut_placement_do_not_change_betti() {
    for mu in [[0.0, 0.0], [1.0, 0.0], [0.3, 0.9]] {
        assert_eq!(betti(2, 8, &mu), betti(2, 16, &mu));
        let shifted = build_torus_complex_with(2, 8, &mu, &[2, 5], Gauge::Cut).unwrap();
        assert_eq!(twisted_betti(&shifted, RankOptions::default()).unwrap(), betti(2, 8, &mu));
    }
}

#[test]
fn nontrivial_holonomy_kills_both_ends() {
    for mu in [vec![1.0, 0.0], vec![0.0, 0.1], vec![-2.0, 3.0]] {
        let b = betti(2, 6, &mu);
        assert_eq!((b[0], b[2]), (0, 0), "μ = {mu:?}");
    }
    let b = betti(3, 4, &[0.0, 0.0, 0.4]);
    assert_eq!((b[0], b[3]), (0, 0));
}

#[test]
fn averaging_is_an_idempotent_chain_map() {
    let c = build_torus_complex(2, 5, &[0.0, 0.0]).unwrap();
    let a: Vec<f64> = (0..c.dim(1)).map(|i| ((i * 37 % 11) as f64 - 5.0) / 3.0).collect();
    let avg = average_cochain(&c, 1, &a).unwrap();
    assert_eq!(average_cochain(&c, 1, &avg).unwrap(), avg);
    // Invariance: constant on each axis slot.
    for i in 0..avg.len() {
        assert!((avg[i] - avg[i % 2]).abs() < 1e-15);
    }
    let lhs = c.d[1].mul_vec(&avg);
    let rhs = average_cochain(&c, 2, &c.d[1].mul_vec(&a)).unwrap();
    let gap = lhs.iter().zip(&rhs).fold(0.0f64, |m, (x, y)| m.max((x - y).abs()));
    assert!(gap < 1e-14);
    // D of an invariant 1-cochain vanishes exactly.
    for b in invariant_basis(&c, 1) {
        assert!(c.d[1].mul_vec(&b).iter().all(|&v| v == 0.0));
    }
    let twisted = build_torus_complex(2, 5, &[1.0, 0.0]).unwrap();
    assert!(matches!(
        average_cochain(&twisted, 1, &a),
        Err(CohomologyError::NontrivialWeights { axis: 0, .. })
    ));
    assert!(average_cochain(&c, 1, &a[1..]).is_err());
}

#[test]
fn area_class_obstruction() {
    for (n, m) in [(2, 8), (3, 6)] {
        let r = ot_obstruction_check(n, m).unwrap();
        assert!(r.passed(), "{r:#?}");
        assert!(r.distance > 0.1);
        assert_eq!(r.invariant_coboundary, 0.0);
    }
    // Oracle: on T² the image of D₁ is the zero-sum 2-cochains, so the
    // constant area cochain is orthogonal to it.
    let r = ot_obstruction_check(2, 8).unwrap();
    assert!((r.distance - 1.0).abs() < 1e-8);
    assert!(ot_obstruction_check(1, 8).is_err());
}

#[test]
fn memory_budget_is_enforced() {
    let c = build_torus_complex(2, 8, &[0.0, 0.0]).unwrap();
    let tiny = RankOptions {
        max_entries: 10,
        ..Default::default()
    };
    assert!(matches!(twisted_betti(&c, tiny), Err(CohomologyError::MemoryBudget { .. })));
}

#[test]
fn analysis_report_is_green() {
    let r = analyze_torus(2, 8, &[1.0, 0.0], RankOptions::default()).unwrap();
    assert!(crate::check::all_passed(&r.checks), "{:#?}", r.checks);
    let r = analyze_torus(2, 8, &[0.0, 0.0], RankOptions::default()).unwrap();
    assert_eq!(r.betti, vec![1, 2, 1]);
    assert!(crate::check::all_passed(&r.checks), "{:#?}", r.checks);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn d_squared_vanishes(n in 1usize..=3, m in 2usize..=4, mu in proptest::collection::vec(-3.0f64..3.0, 3)) {
        let c = build_torus_complex(n, m, &mu[..n]).unwrap();
        prop_assert_eq!(c.square_defect(), 0.0);
    }

    #[test]
    fn sparse_rank_matches_svd(n in 1usize..=2, m in 2usize..=5, mu in proptest::collection::vec(-2.0f64..2.0, 2)) {
        let c = build_torus_complex(n, m, &mu[..n]).unwrap();
        prop_assert_eq!(twisted_betti(&c, RankOptions::default()).unwrap(), dense_betti(&c));
    }
}

#[test]
fn averaging_and_refinement_helpers() {
    for (n, m) in [(1, 5), (2, 4), (3, 3)] {
        let checks = averaging_checks(n, m, 3).unwrap();
        assert!(crate::check::all_passed(&checks), "{checks:#?}");
    }
    assert!(refinement_check(2, 8, &[1.0, 0.0], RankOptions::default()).unwrap().passed);
}
