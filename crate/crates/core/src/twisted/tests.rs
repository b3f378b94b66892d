use std::sync::Arc;

use nalgebra::{DMatrix, DVector};

use super::*;
use crate::forms::{Coordinate, CoordinateDomain, VectorField};
use crate::symexpr::parse;

fn opts() -> CheckOptions {
    CheckOptions {
        samples: 200,
        tol: 1e-9,
        seed: 3,
    }
}

fn domain(coords: Vec<Coordinate>) -> Arc<CoordinateDomain> {
    Arc::new(CoordinateDomain::new("d", coords).unwrap())
}

fn lin(names: &[&str]) -> Arc<CoordinateDomain> {
    domain(names.iter().map(|n| Coordinate::linear(n, -1.0, 1.0)).collect())
}

fn dx(d: &Arc<CoordinateDomain>, n: &str) -> DifferentialForm {
    DifferentialForm::dx(d, n).unwrap()
}

fn assert_zero(f: &DifferentialForm, tol: f64) {
    let c = f.certify_zero(200, tol, 5).unwrap();
    assert!(c.passed, "residual {}", c.max_residual);
}

/// Chart of the one-torus, one-line jet model.
fn m11() -> Arc<CoordinateDomain> {
    domain(vec![
        Coordinate::linear("s", -1.0, 1.0),
        Coordinate::linear("u", -1.0, 1.0),
        Coordinate::angular("th"),
        Coordinate::linear("t", -1.0, 1.0),
        Coordinate::linear("pth", -1.0, 1.0),
        Coordinate::linear("pt", -1.0, 1.0),
    ])
}

#[test]
fn zero_twist_is_plain_differential() {
    let d = lin(&["a", "b", "c"]);
    let a = DifferentialForm::from_named(&d, 1, &[(&["a"], parse("b*c").unwrap()), (&["c"], parse("sin(a)").unwrap())]).unwrap();
    let tw = d_twisted(&DifferentialForm::zero(&d, 1), &a).unwrap();
    assert_zero(&tw.sub(&a.ext_d()).unwrap(), 1e-15);
}

#[test]
fn twisted_differential_squares_to_zero() {
    let d = m11();
    let omega = dx(&d, "s").add(&dx(&d, "th").scale(2f64.sqrt())).unwrap();
    let a = DifferentialForm::from_named(
        &d,
        1,
        &[
            (&["u"], parse("s*pth + t^2").unwrap()),
            (&["th"], parse("exp(pt)*u").unwrap()),
            (&["pt"], parse("s - pth*t").unwrap()),
        ],
    )
    .unwrap();
    let twice = d_twisted(&omega, &d_twisted(&omega, &a).unwrap()).unwrap();
    assert_zero(&twice, 1e-10);
}

#[test]
fn conformal_action() {
    let d = lin(&["a", "b", "c", "e"]);
    let omega = dx(&d, "a").scale(0.5);
    let beta = DifferentialForm::from_named(&d, 2, &[(&["a", "b"], parse("c*e + 1").unwrap()), (&["c", "e"], parse("a").unwrap())]).unwrap();

    // constant f only rescales
    let (scaled, new_omega) = conformal_rescale(&Expr::constant(0.7), &beta, &omega).unwrap();
    assert_zero(&new_omega.sub(&omega).unwrap(), 1e-15);
    assert_zero(&scaled.sub(&beta.scale(0.7f64.exp())).unwrap(), 1e-13);

    // chain map e^f d_ω = d_{ω+df} e^f
    let f = parse("a^2").unwrap();
    let (fb, fo) = conformal_rescale(&f, &beta, &omega).unwrap();
    let lhs = d_twisted(&omega, &beta).unwrap().scale_by(&f.exp());
    let rhs = d_twisted(&fo, &fb).unwrap();
    assert_zero(&lhs.sub(&rhs).unwrap(), 1e-9);

    // group action: (f then g) = f + g, and f then −f is the identity
    let g = parse("sin(b)*c").unwrap();
    let (b1, o1) = conformal_rescale(&f, &beta, &omega).unwrap();
    let (b2, o2) = conformal_rescale(&g, &b1, &o1).unwrap();
    let (b3, o3) = conformal_rescale(&f.add(&g), &beta, &omega).unwrap();
    assert_zero(&b2.sub(&b3).unwrap(), 1e-10);
    assert_zero(&o2.sub(&o3).unwrap(), 1e-10);
    let (b4, o4) = conformal_rescale(&f.neg(), &b1, &o1).unwrap();
    assert_zero(&b4.sub(&beta).unwrap(), 1e-10);
    assert_zero(&o4.sub(&omega).unwrap(), 1e-10);
}

/// Brute-force Lee form: central differences for dΦ and a QR solve of the
/// dense system `Σ_σ sgn(σ) ν Φ` built slot by slot.
fn brute_force_lee(phi: &DifferentialForm, p: &[f64]) -> Vec<f64> {
    let n = p.len();
    let tape = phi.compile().unwrap();
    let skew = |q: &[f64]| tape.eval_skew(q).unwrap();
    let h = 1e-5;
    let mut dphi = vec![vec![vec![0.0; n]; n]; n];
    let mut grad = Vec::new();
    for l in 0..n {
        let mut a = p.to_vec();
        let mut b = p.to_vec();
        a[l] += h;
        b[l] -= h;
        grad.push((skew(&a) - skew(&b)) / (2.0 * h));
    }
    for i in 0..n {
        for j in 0..n {
            for k in 0..n {
                dphi[i][j][k] = grad[i][(j, k)] - grad[j][(i, k)] + grad[k][(i, j)];
            }
        }
    }
    let m = skew(p);
    let mut rows = Vec::new();
    let mut rhs = Vec::new();
    for i in 0..n {
        for j in 0..n {
            for k in 0..n {
                let mut row = vec![0.0; n];
                row[i] += m[(j, k)];
                row[j] -= m[(i, k)];
                row[k] += m[(i, j)];
                rows.extend(row);
                rhs.push(dphi[i][j][k]);
            }
        }
    }
    let a = DMatrix::from_row_slice(rhs.len(), n, &rows);
    let b = DVector::from_vec(rhs);
    let x = (a.transpose() * &a).lu().solve(&(a.transpose() * b)).unwrap();
    x.iter().copied().collect()
}

#[test]
fn lee_form_of_exponential_rescaling() {
    let d = lin(&["x", "y", "s", "t"]);
    let base = dx(&d, "x").wedge(&dx(&d, "y")).unwrap().add(&dx(&d, "s").wedge(&dx(&d, "t")).unwrap()).unwrap();
    let phi = base.scale_by(&Expr::var("s").exp());
    let lee = extract_lee(&phi, None, opts().with_samples(100)).unwrap();
    assert!(lee.equation_residual < 1e-10);
    for (p, nu) in &lee.pointwise {
        let oracle = brute_force_lee(&phi, p);
        for (a, b) in nu.iter().zip(&oracle) {
            assert!((a - b).abs() < 1e-6, "{nu:?} vs {oracle:?}");
        }
        assert!((nu[2] - 1.0).abs() < 1e-10);
    }
    let ansatz = [dx(&d, "x"), dx(&d, "y"), dx(&d, "s"), dx(&d, "t")];
    let fit = extract_lee(&phi, Some(&ansatz), opts()).unwrap();
    assert!((fit.coefficients[2] - 1.0).abs() < 1e-10);
    assert!(fit.closedness_residual < 1e-12);
}

#[test]
fn symplectic_form_has_zero_lee_form() {
    let d = lin(&["x", "y", "s", "t"]);
    let phi = dx(&d, "x").wedge(&dx(&d, "y")).unwrap().add(&dx(&d, "s").wedge(&dx(&d, "t")).unwrap()).unwrap();
    let lee = extract_lee(&phi, None, opts()).unwrap();
    for (_, nu) in lee.pointwise {
        assert!(nu.iter().all(|v| v.abs() < 1e-14));
    }
}

#[test]
fn non_lcs_form_is_rejected() {
    // In dimension 4 every nondegenerate Φ solves dΦ = ν∧Φ pointwise, so the
    // pointwise test needs dimension 6.
    let d = lin(&["x1", "y1", "x2", "y2", "x3", "y3"]);
    let phi = DifferentialForm::from_named(
        &d,
        2,
        &[
            (&["x1", "y1"], Expr::one()),
            (&["x2", "y2"], Expr::one()),
            (&["x3", "y3"], Expr::one()),
            (&["x2", "x3"], Expr::var("x1")),
        ],
    )
    .unwrap();
    assert!(matches!(extract_lee(&phi, None, opts()), Err(TwistedError::NotLcs { .. })));
}

#[test]
fn lee_round_trip_on_jet_model() {
    let d = m11();
    let mu = 2f64.sqrt();
    let omega = dx(&d, "s").add(&dx(&d, "th").scale(mu)).unwrap();
    let alpha = DifferentialForm::from_named(
        &d,
        1,
        &[(&["u"], Expr::one()), (&["th"], Expr::var("pth").neg()), (&["t"], Expr::var("pt").neg())],
    )
    .unwrap();
    let phi = d_twisted(&omega, &alpha).unwrap();
    let ansatz = [dx(&d, "s"), dx(&d, "th")];
    let fit = extract_lee(&phi, Some(&ansatz), opts()).unwrap();
    assert!((fit.coefficients[0] - 1.0).abs() < 1e-8);
    assert!((fit.coefficients[1] - mu).abs() < 1e-8);
}

fn circle_loop(target: &Arc<CoordinateDomain>, parts: &[(&str, &str)]) -> SmoothMap {
    let src = domain(vec![Coordinate::linear("tau", 0.0, 1.0)]);
    let named: Vec<(&str, Expr)> = parts.iter().map(|(n, e)| (*n, parse(e).unwrap())).collect();
    SmoothMap::from_named(&src, target, &named).unwrap()
}

#[test]
fn circle_has_integral_lattice() {
    let d = domain(vec![Coordinate::angular("th")]);
    let l = circle_loop(&d, &[("th", "tau")]);
    let lee = period_lattice(&dx(&d, "th"), &[l], opts(), RelationSearch::default()).unwrap();
    assert!((lee.periods[0] - 1.0).abs() < 1e-12);
    assert_eq!(lee.rank(), 1);
    assert!(lee.is_integral(1e-9));
}

#[test]
fn irrational_torus_has_rank_two() {
    let d = domain(vec![Coordinate::angular("a"), Coordinate::angular("b")]);
    let omega = dx(&d, "a").add(&dx(&d, "b").scale(2f64.sqrt())).unwrap();
    let la = circle_loop(&d, &[("a", "tau"), ("b", "0.3")]);
    let lb = circle_loop(&d, &[("a", "0.1"), ("b", "tau")]);
    let diag = circle_loop(&d, &[("a", "tau + 0.05*sin(2*pi*tau)"), ("b", "-tau")]);
    let lee = period_lattice(&omega, &[la, lb, diag], opts(), RelationSearch::default()).unwrap();
    assert_eq!(lee.rank(), 2);
    assert!((lee.periods[2] - (1.0 - 2f64.sqrt())).abs() < 1e-10);
}

#[test]
fn open_curve_is_rejected() {
    let d = lin(&["x", "y"]);
    let l = circle_loop(&d, &[("x", "tau"), ("y", "0")]);
    assert!(matches!(
        period_lattice(&dx(&d, "x"), &[l], opts(), RelationSearch::default()),
        Err(TwistedError::OpenCurve(_))
    ));
}

#[test]
fn exact_perturbation_is_conformal_not_strict() {
    let d = domain(vec![Coordinate::angular("th"), Coordinate::linear("r", -1.0, 1.0)]);
    let omega = dx(&d, "th");
    let g = parse("r^2*sin(2*pi*th)").unwrap();
    let omega2 = omega.add(&DifferentialForm::scalar(&d, g.clone()).ext_d()).unwrap();
    let id = SmoothMap::identity(&d);
    let loops = [circle_loop(&d, &[("th", "tau"), ("r", "0.2")])];
    let rep = classify_morphism(&id, &omega, &omega2, &loops, &loops, opts(), RelationSearch::default()).unwrap();
    assert!(rep.conformal && !rep.strict && rep.full);
    assert!(rep.scaling_residual < 1e-8, "{}", rep.scaling_residual);

    // reconstructed f agrees with g − g(base)
    let delta = omega2.sub(&omega).unwrap();
    let base = vec![0.1, 0.3];
    let sf = ScalingFunction::new(&delta, base.clone(), 1e-13).unwrap();
    let g0 = g.eval(&[("th", base[0]), ("r", base[1])]).unwrap();
    for p in d.sample_points(20, 9) {
        let expect = g.eval(&[("th", p[0]), ("r", p[1])]).unwrap() - g0;
        assert!((sf.eval(&p).unwrap() - expect).abs() < 1e-10);
    }
}

#[test]
fn constant_map_is_strict_only_for_zero_form() {
    let src = domain(vec![Coordinate::angular("a")]);
    let tgt = domain(vec![Coordinate::angular("b")]);
    let c = SmoothMap::from_named(&src, &tgt, &[("b", Expr::constant(0.25))]).unwrap();
    let lsrc = [circle_loop(&src, &[("a", "tau")])];
    let ltgt = [circle_loop(&tgt, &[("b", "tau")])];
    let zero = DifferentialForm::zero(&src, 1);
    let rep = classify_morphism(&c, &zero, &dx(&tgt, "b"), &lsrc, &ltgt, opts(), RelationSearch::default()).unwrap();
    assert!(rep.strict);
    assert!(!rep.full);
    assert_eq!(rep.rank_decrease, 1);
    assert!(rep.inclusion);
    let rep = classify_morphism(&c, &dx(&src, "a"), &dx(&tgt, "b"), &lsrc, &ltgt, opts(), RelationSearch::default()).unwrap();
    assert!(!rep.strict && !rep.conformal);
}

#[test]
fn strict_morphisms_compose() {
    let a = domain(vec![Coordinate::angular("a")]);
    let b = domain(vec![Coordinate::angular("b"), Coordinate::linear("y", -1.0, 1.0)]);
    let c = domain(vec![Coordinate::angular("c")]);
    let f = SmoothMap::from_named(&a, &b, &[("b", parse("a").unwrap()), ("y", parse("sin(2*pi*a)/2").unwrap())]).unwrap();
    let g = SmoothMap::from_named(&b, &c, &[("c", parse("b + y^2").unwrap())]).unwrap();
    let wa = dx(&a, "a");
    let wc = dx(&c, "c");
    let wb = g.pullback(&wc).unwrap();
    let la = [circle_loop(&a, &[("a", "tau")])];
    let lb = [circle_loop(&b, &[("b", "tau"), ("y", "0")])];
    let lc = [circle_loop(&c, &[("c", "tau")])];
    let search = RelationSearch::default();
    let r1 = classify_morphism(&g, &wb, &wc, &lb, &lc, opts(), search).unwrap();
    assert!(r1.strict);
    let r2 = classify_morphism(&f, &f.pullback(&wb).unwrap(), &wb, &la, &lb, opts(), search).unwrap();
    assert!(r2.strict);
    let gf = f.then(&g).unwrap();
    let r = classify_morphism(&gf, &gf.pullback(&wc).unwrap(), &wc, &la, &lc, opts(), search).unwrap();
    assert!(r.strict && r.full);
    // the composite pulls dc back to a form that is not da, only cohomologous
    let r3 = classify_morphism(&gf, &wa, &wc, &la, &lc, opts(), search).unwrap();
    assert!(r3.conformal && !r3.strict);
}

#[test]
fn twisted_pullback_preserves_closedness() {
    let d = domain(vec![Coordinate::angular("th"), Coordinate::linear("r", -1.0, 1.0), Coordinate::linear("z", -1.0, 1.0)]);
    let omega = dx(&d, "th");
    let f = parse("r*z").unwrap();
    let omega2 = omega.add(&DifferentialForm::scalar(&d, f.clone()).ext_d()).unwrap();
    let id = SmoothMap::identity(&d);
    // a d_{ω2}-closed 2-form: d_{ω2} of anything
    let gamma = DifferentialForm::from_named(&d, 1, &[(&["r"], parse("cos(2*pi*th)*z").unwrap()), (&["z"], parse("r^3").unwrap())]).unwrap();
    let beta = d_twisted(&omega2, &gamma).unwrap();
    assert_zero(&d_twisted(&omega2, &beta).unwrap(), 1e-10);
    let pulled = twisted_pullback(&id, &f, &beta, &omega, &omega2, opts()).unwrap();
    assert_zero(&d_twisted(&omega, &pulled).unwrap(), 1e-9);

    // f = 0 with a strict morphism is the plain pullback
    let plain = twisted_pullback(&id, &Expr::zero(), &beta, &omega2, &omega2, opts()).unwrap();
    assert_zero(&plain.sub(&beta).unwrap(), 1e-15);

    // constant f is a homothety
    let h = twisted_pullback(&id, &Expr::constant(2.0), &beta, &omega2, &omega2, opts()).unwrap();
    assert_zero(&h.sub(&beta.scale((-2.0f64).exp())).unwrap(), 1e-14);

    // wrong scaling function is rejected
    assert!(matches!(
        twisted_pullback(&id, &Expr::var("r"), &beta, &omega, &omega2, opts()),
        Err(TwistedError::ScalingMismatch(_))
    ));
    let _ = VectorField::zero(&d);
}
