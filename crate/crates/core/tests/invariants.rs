//! Property tests through the public API.

use std::sync::Arc;

use proptest::prelude::*;

use lcskit::check::Check;
use lcskit::cohomology::{build_torus_complex, twisted_betti, RankOptions};
use lcskit::exec::{set_mode, Mode};
use lcskit::forms::{Coordinate, CoordinateDomain, DifferentialForm, SmoothMap};
use lcskit::models::{model_reduction_universal, validate_first_kind};
use lcskit::sampling::CheckOptions;
use lcskit::symexpr::{parse, Expr};
use lcskit::twisted::d_twisted;

fn cube() -> Arc<CoordinateDomain> {
    Arc::new(
        CoordinateDomain::new(
            "cube",
            ["x", "y", "z"].iter().map(|n| Coordinate::linear(n, -1.0, 1.0)).collect(),
        )
        .unwrap(),
    )
}

/// Smooth, bounded expressions in x, y, z.
fn expr() -> impl Strategy<Value = Expr> {
    let leaf = prop_oneof![
        (-2.0f64..2.0).prop_map(Expr::constant),
        prop_oneof![Just("x"), Just("y"), Just("z")].prop_map(Expr::var),
    ];
    leaf.prop_recursive(4, 24, 2, |inner| {
        prop_oneof![
            (inner.clone(), inner.clone()).prop_map(|(a, b)| a.add(&b)),
            (inner.clone(), inner.clone()).prop_map(|(a, b)| a.mul(&b)),
            inner.clone().prop_map(|a| a.sin()),
            inner.clone().prop_map(|a| a.cos()),
            inner.prop_map(|a| a.scale(0.5).exp()),
        ]
    })
}

fn one_form(d: &Arc<CoordinateDomain>, c: [Expr; 3]) -> DifferentialForm {
    DifferentialForm::one_form(d, c.to_vec()).unwrap()
}

fn zero(form: &DifferentialForm) -> Result<(), TestCaseError> {
    let cert = form.certify_zero(40, 1e-7, 5).unwrap();
    prop_assert!(cert.passed, "residual {:e}", cert.max_residual);
    Ok(())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn d_squared_vanishes(a in expr(), b in expr(), c in expr()) {
        let d = cube();
        let f = one_form(&d, [a, b, c]);
        zero(&f.ext_d().ext_d())?;
    }

    #[test]
    fn twisted_d_squares_to_zero_for_closed_lee_forms(g in expr(), a in expr(), b in expr(), c in expr()) {
        let d = cube();
        let omega = DifferentialForm::scalar(&d, g).ext_d();
        let alpha = one_form(&d, [a, b, c]);
        zero(&d_twisted(&omega, &d_twisted(&omega, &alpha).unwrap()).unwrap())?;
    }

    #[test]
    fn pullback_commutes_with_d(p in expr(), q in expr(), a in expr(), b in expr(), c in expr()) {
        let d = cube();
        let plane = Arc::new(CoordinateDomain::new("plane", vec![Coordinate::linear("u", -1.0, 1.0), Coordinate::linear("v", -1.0, 1.0)]).unwrap());
        let sub = |e: &Expr| {
            let mut m = std::collections::HashMap::new();
            m.insert("x".to_string(), Expr::var("u"));
            m.insert("y".to_string(), Expr::var("v"));
            m.insert("z".to_string(), Expr::var("u").mul(&Expr::var("v")));
            e.substitute(&m)
        };
        let map = SmoothMap::new(&plane, &d, vec![sub(&p), sub(&q), Expr::var("u")]).unwrap();
        let beta = one_form(&d, [a, b, c]);
        let lhs = map.pullback(&beta.ext_d()).unwrap();
        let rhs = map.pullback(&beta).unwrap().ext_d();
        zero(&lhs.sub(&rhs).unwrap())?;
    }

    #[test]
    fn wedge_is_graded_commutative(a in expr(), b in expr(), c in expr(), e in expr()) {
        let d = cube();
        let x = one_form(&d, [a, b.clone(), c.clone()]);
        let y = one_form(&d, [e, c, b]);
        zero(&x.wedge(&y).unwrap().add(&y.wedge(&x).unwrap()).unwrap())?;
    }

    #[test]
    fn universal_models_are_first_kind(
        mu in proptest::collection::vec(-3.0f64..3.0, 1..=2),
        n in 0usize..=2,
    ) {
        let s = model_reduction_universal(mu.len(), n, &mu).unwrap();
        let checks = validate_first_kind(&s, CheckOptions::default().with_samples(40)).unwrap();
        prop_assert!(checks.iter().all(|c| c.passed), "{:?}", checks.iter().filter(|c| !c.passed).collect::<Vec<_>>());
    }

    #[test]
    fn check_records_round_trip(
        residual in prop_oneof![any::<f64>(), Just(f64::INFINITY), Just(f64::NAN)],
        tol in any::<f64>(),
        name in "[a-z-]{1,12}",
    ) {
        let c = Check::residual(&name, "a = b", residual, tol);
        let back: Check = serde_json::from_str(&serde_json::to_string(&c).unwrap()).unwrap();
        prop_assert_eq!(back.max_residual.to_bits() == c.max_residual.to_bits() || (back.max_residual.is_nan() && c.max_residual.is_nan()), true);
        prop_assert_eq!(back.tolerance.to_bits(), c.tolerance.to_bits());
        prop_assert_eq!(back.check, c.check);
        prop_assert_eq!(back.passed, c.passed);
    }

    #[test]
    fn expressions_print_and_reparse(e in expr()) {
        let again = parse(&e.to_string()).unwrap();
        let d = cube();
        let diff = DifferentialForm::scalar(&d, e.sub(&again));
        zero(&diff)?;
    }
}

#[test]
fn sequential_and_parallel_agree_bit_for_bit() {
    let d = cube();
    let f = one_form(&d, [parse("sin(x*y)").unwrap(), parse("exp(z)*x").unwrap(), parse("y^2").unwrap()]);
    let complex = build_torus_complex(3, 4, &[0.0, 0.7, 0.0]).unwrap();
    let run = || {
        let cert = f.ext_d().certify_zero(500, 1e-9, 2).unwrap();
        let betti = twisted_betti(&complex, RankOptions::default()).unwrap();
        (cert.max_residual.to_bits(), cert.worst_point.clone(), betti)
    };
    set_mode(Mode::Sequential);
    let seq = run();
    set_mode(Mode::Parallel);
    let par = run();
    assert_eq!(seq, par);
}
