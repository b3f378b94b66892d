use std::sync::Arc;

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::*;
use crate::symexpr::{parse, Expr};

fn cube(names: &[&str]) -> Arc<CoordinateDomain> {
    Arc::new(CoordinateDomain::new("cube", names.iter().map(|n| Coordinate::linear(n, -1.0, 1.0)).collect()).unwrap())
}

fn dx(d: &Arc<CoordinateDomain>, n: &str) -> DifferentialForm {
    DifferentialForm::dx(d, n).unwrap()
}

fn random_poly(rng: &mut ChaCha8Rng, vars: &[&str]) -> Expr {
    let mut acc = Expr::constant(rng.gen_range(-1.0..1.0));
    for _ in 0..3 {
        let mut term = Expr::constant(rng.gen_range(-1.0..1.0));
        for v in vars {
            let p = rng.gen_range(0..3);
            term = term.mul(&Expr::var(v).powi(p));
        }
        acc = acc.add(&term);
    }
    acc
}

fn random_form(d: &Arc<CoordinateDomain>, degree: usize, seed: u64) -> DifferentialForm {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let names = d.names();
    let terms = numeric::multi_indices(d.dim(), degree)
        .into_iter()
        .map(|idx| (idx, random_poly(&mut rng, &names)))
        .collect::<Vec<_>>();
    DifferentialForm::from_terms(d, degree, terms).unwrap()
}

fn assert_zero(f: &DifferentialForm, tol: f64) {
    let c = f.certify_zero(200, tol, 11).unwrap();
    assert!(c.passed, "residual {} at {:?}", c.max_residual, c.worst_point);
}

#[test]
fn basis_wedge_and_antisymmetry() {
    let d = cube(&["x", "y"]);
    let w = dx(&d, "x").wedge(&dx(&d, "y")).unwrap();
    assert_eq!(w.coefficient(&[0, 1]).as_const(), Some(1.0));
    assert_eq!(w.coefficient(&[1, 0]).as_const(), Some(-1.0));
    let a = random_form(&d, 1, 3);
    assert_zero(&a.wedge(&a).unwrap(), 1e-12);
}

#[test]
fn graded_commutativity() {
    let d = cube(&["a", "b", "c", "e"]);
    let a = random_form(&d, 1, 1);
    let b = random_form(&d, 2, 2);
    let ab = a.wedge(&b).unwrap();
    let ba = b.wedge(&a).unwrap();
    assert_zero(&ab.sub(&ba).unwrap(), 1e-12);
    let c = random_form(&d, 1, 5);
    assert_zero(&a.wedge(&c).unwrap().add(&c.wedge(&a).unwrap()).unwrap(), 1e-12);
}

/// Dense antisymmetrization: (a∧b)(v1..vk+l) = Σ_σ sgn σ a(..)b(..)/(k! l!).
fn dense_wedge(a: &[(Vec<usize>, f64)], ka: usize, b: &[(Vec<usize>, f64)], kb: usize, dim: usize) -> Vec<(Vec<usize>, f64)> {
    let full = |terms: &[(Vec<usize>, f64)], idx: &[usize]| -> f64 {
        let mut sorted = idx.to_vec();
        let mut sign = 1.0;
        for i in 0..sorted.len() {
            for j in 0..sorted.len() - 1 - i {
                if sorted[j] > sorted[j + 1] {
                    sorted.swap(j, j + 1);
                    sign = -sign;
                } else if sorted[j] == sorted[j + 1] {
                    return 0.0;
                }
            }
        }
        terms.iter().find(|(k, _)| *k == sorted).map(|(_, v)| sign * v).unwrap_or(0.0)
    };
    fn perms(n: usize) -> Vec<(Vec<usize>, f64)> {
        if n == 0 {
            return vec![(vec![], 1.0)];
        }
        let mut out = Vec::new();
        for (p, s) in perms(n - 1) {
            for pos in 0..=p.len() {
                let mut q = p.clone();
                q.insert(pos, n - 1);
                let sign = if (p.len() - pos) % 2 == 0 { s } else { -s };
                out.push((q, sign));
            }
        }
        out
    }
    let k = ka + kb;
    let fact = |n: usize| (1..=n).product::<usize>() as f64;
    numeric::multi_indices(dim, k)
        .into_iter()
        .map(|idx| {
            let v: f64 = perms(k)
                .into_iter()
                .map(|(p, s)| {
                    let slots: Vec<usize> = p.iter().map(|&i| idx[i]).collect();
                    s * full(a, &slots[..ka]) * full(b, &slots[ka..])
                })
                .sum();
            (idx, v / (fact(ka) * fact(kb)))
        })
        .collect()
}

#[test]
fn wedge_matches_dense_antisymmetrization() {
    // ω_μ ∧ Φ for the one-torus, one-line universal model, μ = 1.
    let d = Arc::new(
        CoordinateDomain::new(
            "m11",
            vec![
                Coordinate::linear("s", -1.0, 1.0),
                Coordinate::linear("u", -1.0, 1.0),
                Coordinate::angular("th"),
                Coordinate::linear("t", -1.0, 1.0),
                Coordinate::linear("pth", -1.0, 1.0),
                Coordinate::linear("pt", -1.0, 1.0),
            ],
        )
        .unwrap(),
    );
    let omega = dx(&d, "s").add(&dx(&d, "th")).unwrap();
    let alpha = DifferentialForm::from_named(
        &d,
        1,
        &[(&["u"], Expr::one()), (&["th"], Expr::var("pth").neg()), (&["t"], Expr::var("pt").neg())],
    )
    .unwrap();
    let phi = alpha.ext_d().sub(&omega.wedge(&alpha).unwrap()).unwrap();
    let w = omega.wedge(&phi).unwrap();
    let point = [0.3, -0.2, 0.7, 0.1, 0.5, -0.4];
    let vals = |f: &DifferentialForm| -> Vec<(Vec<usize>, f64)> { f.compile().unwrap().eval_terms(&point).unwrap() };
    let dense = dense_wedge(&vals(&omega), 1, &vals(&phi), 2, 6);
    let got = w.compile().unwrap().eval_terms(&point).unwrap();
    for (idx, v) in dense {
        let g = got.iter().find(|(k, _)| *k == idx).map(|(_, x)| *x).unwrap_or(0.0);
        assert!((g - v).abs() < 1e-12, "{idx:?}: {g} vs {v}");
    }
}

#[test]
fn differential_of_product() {
    let d = cube(&["x", "y"]);
    let f = DifferentialForm::scalar(&d, parse("x*y").unwrap());
    let expect = DifferentialForm::from_named(&d, 1, &[(&["x"], Expr::var("y")), (&["y"], Expr::var("x"))]).unwrap();
    assert_zero(&f.ext_d().sub(&expect).unwrap(), 1e-14);
}

#[test]
fn d_squared_vanishes() {
    let d = cube(&["a", "b", "c", "e"]);
    for deg in 0..3 {
        let f = random_form(&d, deg, 40 + deg as u64);
        assert_zero(&f.ext_d().ext_d(), 1e-10);
    }
    let trig = DifferentialForm::from_named(
        &d,
        1,
        &[(&["a"], parse("sin(a*b)*exp(c)").unwrap()), (&["c"], parse("cos(e)*sqrt(2+a)").unwrap())],
    )
    .unwrap();
    assert_zero(&trig.ext_d().ext_d(), 1e-10);
}

#[test]
fn differential_of_eta_two() {
    let d = cube(&["x1", "y1", "x2", "y2"]);
    let eta = DifferentialForm::from_named(
        &d,
        1,
        &[
            (&["x1"], parse("y1/2").unwrap()),
            (&["y1"], parse("-x1/2").unwrap()),
            (&["x2"], parse("y2/2").unwrap()),
            (&["y2"], parse("-x2/2").unwrap()),
        ],
    )
    .unwrap();
    let expect = dx(&d, "y1").wedge(&dx(&d, "x1")).unwrap().add(&dx(&d, "y2").wedge(&dx(&d, "x2")).unwrap()).unwrap();
    assert_zero(&eta.ext_d().sub(&expect).unwrap(), 1e-14);
}

#[test]
fn interior_products() {
    let d = cube(&["x", "y"]);
    let w = dx(&d, "x").wedge(&dx(&d, "y")).unwrap();
    let ix = w.interior(&VectorField::coordinate(&d, "x").unwrap()).unwrap();
    assert_zero(&ix.sub(&dx(&d, "y")).unwrap(), 1e-15);
    let d4 = cube(&["a", "b", "c", "e"]);
    let a = random_form(&d4, 2, 9);
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let names = d4.names();
    let x = VectorField::new(&d4, (0..4).map(|_| random_poly(&mut rng, &names)).collect()).unwrap();
    assert_zero(&a.interior(&x).unwrap().interior(&x).unwrap(), 1e-12);
}

#[test]
fn lie_derivative_of_constant_form() {
    let d = cube(&["x", "y"]);
    let w = dx(&d, "x").wedge(&dx(&d, "y")).unwrap();
    let l = w.lie_derivative(&VectorField::coordinate(&d, "x").unwrap()).unwrap();
    assert!(l.is_structurally_zero());
}

/// Flow of a linear field `v' = A v` by RK4, and its Jacobian `exp(tA)`.
fn rk4_linear(a: &DMatrix<f64>, x: &[f64], t: f64, steps: usize) -> (Vec<f64>, DMatrix<f64>) {
    let n = x.len();
    let h = t / steps as f64;
    let step = |m: &DMatrix<f64>| -> DMatrix<f64> {
        let k1 = a * m;
        let k2 = a * (m + &k1 * (h / 2.0));
        let k3 = a * (m + &k2 * (h / 2.0));
        let k4 = a * (m + &k3 * h);
        m + (k1 + k2 * 2.0 + k3 * 2.0 + k4) * (h / 6.0)
    };
    let mut phi = DMatrix::identity(n, n);
    for _ in 0..steps {
        phi = step(&phi);
    }
    let y = &phi * nalgebra::DVector::from_column_slice(x);
    (y.iter().copied().collect(), phi)
}

#[test]
fn cartan_formula_matches_flow_difference() {
    let d = cube(&["a", "b", "c"]);
    let a = DMatrix::from_row_slice(3, 3, &[0.2, -1.0, 0.0, 0.5, 0.1, 0.3, 0.0, -0.4, 0.0]);
    let names = d.names();
    let comps = (0..3)
        .map(|i| Expr::sum(&(0..3).map(|j| Expr::var(names[j]).scale(a[(i, j)])).collect::<Vec<_>>()))
        .collect();
    let x = VectorField::new(&d, comps).unwrap();
    let beta = DifferentialForm::from_named(
        &d,
        2,
        &[(&["a", "b"], parse("a*c + b^2").unwrap()), (&["b", "c"], parse("sin(a)").unwrap())],
    )
    .unwrap();
    let lie = beta.lie_derivative(&x).unwrap().compile().unwrap();
    let tape = beta.compile().unwrap();
    let t = 1e-5;
    for p in d.sample_points(20, 2) {
        let (y, j) = rk4_linear(&a, &p, t, 4);
        let at_y = tape.eval_terms(&y).unwrap();
        let pulled = numeric::pullback_values(&at_y, &j);
        let here: std::collections::BTreeMap<_, _> = tape.eval_terms(&p).unwrap().into_iter().collect();
        let expect: std::collections::BTreeMap<_, _> = lie.eval_terms(&p).unwrap().into_iter().collect();
        for idx in numeric::multi_indices(3, 2) {
            let fd = (pulled.get(&idx).copied().unwrap_or(0.0) - here.get(&idx).copied().unwrap_or(0.0)) / t;
            let ex = expect.get(&idx).copied().unwrap_or(0.0);
            assert!((fd - ex).abs() < 1e-4, "{idx:?}: {fd} vs {ex}");
        }
    }
}

fn random_map(src: &Arc<CoordinateDomain>, tgt: &Arc<CoordinateDomain>, seed: u64) -> SmoothMap {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let names = src.names();
    let comps = (0..tgt.dim())
        .map(|_| random_poly(&mut rng, &names).add(&Expr::var(names[rng.gen_range(0..names.len())]).sin()))
        .collect();
    SmoothMap::new(src, tgt, comps).unwrap()
}

#[test]
fn pullback_identity_and_naturality() {
    let src = cube(&["p", "q", "r"]);
    let tgt = cube(&["a", "b", "c", "e"]);
    let beta = random_form(&tgt, 1, 17);
    let gamma = random_form(&tgt, 2, 18);
    assert_zero(&SmoothMap::identity(&tgt).pullback(&gamma).unwrap().sub(&gamma).unwrap(), 1e-15);
    let f = random_map(&src, &tgt, 19);
    for form in [&beta, &gamma] {
        let lhs = f.pullback(form).unwrap().ext_d();
        let rhs = f.pullback(&form.ext_d()).unwrap();
        assert_zero(&lhs.sub(&rhs).unwrap(), 1e-9);
    }
}

#[test]
fn pullback_is_functorial() {
    let a = cube(&["p", "q"]);
    let b = cube(&["r", "s", "t"]);
    let c = cube(&["x", "y", "z"]);
    let f = random_map(&a, &b, 1);
    let g = random_map(&b, &c, 2);
    let beta = random_form(&c, 2, 3);
    let lhs = f.then(&g).unwrap().pullback(&beta).unwrap();
    let rhs = f.pullback(&g.pullback(&beta).unwrap()).unwrap();
    assert_zero(&lhs.sub(&rhs).unwrap(), 1e-9);
}

#[test]
fn numeric_pullback_agrees_with_symbolic() {
    let src = cube(&["p", "q", "r"]);
    let tgt = cube(&["a", "b", "c", "e"]);
    let f = random_map(&src, &tgt, 7);
    let gamma = random_form(&tgt, 2, 8);
    let sym = f.pullback(&gamma).unwrap().compile().unwrap();
    let mt = f.compile().unwrap();
    let gt = gamma.compile().unwrap();
    for p in src.sample_points(30, 1) {
        let (y, j) = mt.eval(&p).unwrap();
        let num = numeric::pullback_values(&gt.eval_terms(&y).unwrap(), &j);
        let s: std::collections::BTreeMap<_, _> = sym.eval_terms(&p).unwrap().into_iter().collect();
        assert!(numeric::max_abs_diff(&num, &s) < 1e-10);
    }
}

#[test]
fn flat_sharp_round_trip() {
    let d = cube(&["a", "b", "c", "e"]);
    let phi = DifferentialForm::from_named(
        &d,
        2,
        &[
            (&["a", "b"], parse("2 + a*a").unwrap()),
            (&["c", "e"], parse("exp(b)").unwrap()),
            (&["a", "c"], parse("c/3").unwrap()),
        ],
    )
    .unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let names = d.names();
    let x = VectorField::new(&d, (0..4).map(|_| random_poly(&mut rng, &names)).collect()).unwrap();
    let fl = flat(&phi, &x).unwrap();
    let xt = x.compile().unwrap();
    for p in d.sample_points(50, 6) {
        let v = sharp(&phi, &fl, &p).unwrap();
        let expect = xt.eval(&p).unwrap();
        for (a, b) in v.iter().zip(&expect) {
            assert!((a - b).abs() < 1e-9);
        }
    }
}

#[test]
fn standard_symplectic_rank() {
    let d = cube(&["x1", "y1", "x2", "y2"]);
    let w = dx(&d, "x1").wedge(&dx(&d, "y1")).unwrap().add(&dx(&d, "x2").wedge(&dx(&d, "y2")).unwrap()).unwrap();
    assert_eq!(nondegeneracy_rank(&w, 20, 0).unwrap().0, 4);
}

#[test]
fn bracket_of_coordinate_fields_vanishes() {
    let d = cube(&["x", "y"]);
    let a = VectorField::coordinate(&d, "x").unwrap();
    let b = VectorField::from_named(&d, &[("y", Expr::var("x"))]).unwrap();
    let br = a.bracket(&b).unwrap();
    assert_eq!(br.components()[1].as_const(), Some(1.0));
    assert!(br.components()[0].is_const_zero());
}

#[test]
fn domain_mismatch_is_an_error() {
    let a = cube(&["x", "y"]);
    let b = cube(&["u", "v"]);
    assert!(matches!(dx(&a, "x").wedge(&dx(&b, "u")), Err(FormError::DomainMismatch(..))));
}
