//! The odd sphere `S^{2N−1} ⊂ ℝ^{2N}` with its standard contact form
//! `η_N = ½Σ(y_j dx_j − x_j dy_j)`, and the product structures on
//! `S^{2N−1} × S¹`.

use std::f64::consts::{FRAC_PI_2, PI};
use std::sync::Arc;

use super::{ChartData, LcsStructure, ModelError, StructureKind};
use crate::check::Check;
use crate::forms::{Coordinate, CoordinateDomain, DifferentialForm, FormError, SmoothMap, VectorField};
use crate::sampling::CheckOptions;
use crate::symexpr::{Expr, SymError};

/// Radius of the coordinate ball used by graph charts.
pub const GRAPH_RADIUS: f64 = 0.95;

/// Name of the circle coordinate in product charts.
pub const CIRCLE: &str = "theta";

pub fn ambient_names(n: usize) -> Vec<String> {
    (1..=n).flat_map(|j| [format!("x{j}"), format!("y{j}")]).collect()
}

/// `ℝ^{2n}` with coordinates `x1, y1, …` in `[-bound, bound]`.
pub fn ambient_domain(n: usize, bound: f64) -> Arc<CoordinateDomain> {
    let coords = ambient_names(n)
        .iter()
        .map(|c| Coordinate::linear(c, -bound, bound))
        .collect();
    Arc::new(CoordinateDomain::new(&format!("R{}", 2 * n), coords).expect("distinct names"))
}

/// `η_n = ½Σ(y_j dx_j − x_j dy_j)` on any domain whose first `2n`
/// coordinates are `x1, y1, …, xn, yn` (extra coordinates are ignored).
pub fn eta(domain: &Arc<CoordinateDomain>, n: usize) -> DifferentialForm {
    let mut coeffs = vec![Expr::zero(); domain.dim()];
    for j in 0..n {
        coeffs[2 * j] = Expr::var(&domain.names()[2 * j + 1]).scale(0.5);
        coeffs[2 * j + 1] = Expr::var(&domain.names()[2 * j]).scale(-0.5);
    }
    DifferentialForm::one_form(domain, coeffs).expect("dimension matches")
}

/// Reeb field `R = 2Σ(y_j ∂x_j − x_j ∂y_j)` of `η_n` on the unit sphere.
pub fn reeb(domain: &Arc<CoordinateDomain>, n: usize) -> VectorField {
    let mut comps = vec![Expr::zero(); domain.dim()];
    for j in 0..n {
        comps[2 * j] = Expr::var(&domain.names()[2 * j + 1]).scale(2.0);
        comps[2 * j + 1] = Expr::var(&domain.names()[2 * j]).scale(-2.0);
    }
    VectorField::new(domain, comps).expect("dimension matches")
}

/// `ℝ^{2n} × S¹` with `θ` last.
pub fn ambient_with_circle(n: usize, bound: f64) -> Arc<CoordinateDomain> {
    let mut coords: Vec<Coordinate> = ambient_names(n)
        .iter()
        .map(|c| Coordinate::linear(c, -bound, bound))
        .collect();
    coords.push(Coordinate::angular(CIRCLE));
    Arc::new(CoordinateDomain::new(&format!("R{}xS1", 2 * n), coords).expect("distinct names"))
}

/// `Φ_n = dη_n − dθ ∧ η_n` on `ℝ^{2n} × S¹`.
pub fn phi_ambient(domain: &Arc<CoordinateDomain>, n: usize) -> Result<DifferentialForm, FormError> {
    let e = eta(domain, n);
    let dtheta = DifferentialForm::dx(domain, CIRCLE)?;
    e.ext_d().sub(&dtheta.wedge(&e)?)
}

/// One chart of the sphere: a parametrization into `ℝ^{2n}` together with
/// `η_n` and its Reeb field expressed in the chart.
#[derive(Debug, Clone)]
pub struct SphereChart {
    pub param: SmoothMap,
    pub eta: DifferentialForm,
    pub reeb: VectorField,
    /// For graph charts: ambient index of the solved coordinate and its sign.
    pub solved: Option<(usize, f64)>,
}

impl SphereChart {
    pub fn domain(&self) -> &Arc<CoordinateDomain> {
        self.param.source()
    }

    /// Chart coordinates of an ambient point on the sphere, if it lies in
    /// this chart.
    pub fn locate(&self, ambient: &[f64]) -> Option<Vec<f64>> {
        let (i, sign) = self.solved?;
        if ambient[i] * sign <= 0.0 {
            return None;
        }
        let p: Vec<f64> = ambient
            .iter()
            .enumerate()
            .filter(|(k, _)| *k != i)
            .map(|(_, v)| *v)
            .collect();
        self.domain().contains(&p).then_some(p)
    }
}

/// The sphere `S^{2n−1}` presented by `4n` graph charts and one polar chart.
#[derive(Debug, Clone)]
pub struct SphereAtlas {
    pub n: usize,
    pub ambient: Arc<CoordinateDomain>,
    pub graph: Vec<SphereChart>,
    pub polar: SphereChart,
}

impl SphereAtlas {
    pub fn new(n: usize) -> Result<Self, ModelError> {
        if n < 1 {
            return Err(ModelError::BadParameter(format!("sphere needs N ≥ 1, got {n}")));
        }
        let ambient = ambient_domain(n, 1.0);
        let names = ambient_names(n);
        let mut graph = Vec::with_capacity(4 * n);
        for i in 0..2 * n {
            for sign in [1.0, -1.0] {
                graph.push(graph_chart(&ambient, &names, n, i, sign)?);
            }
        }
        let polar = polar_chart(&ambient, n)?;
        Ok(SphereAtlas { n, ambient, graph, polar })
    }

    pub fn charts(&self) -> impl Iterator<Item = &SphereChart> {
        self.graph.iter().chain(std::iter::once(&self.polar))
    }
}

fn graph_chart(
    ambient: &Arc<CoordinateDomain>,
    names: &[String],
    n: usize,
    solved: usize,
    sign: f64,
) -> Result<SphereChart, ModelError> {
    let kept: Vec<&str> = names
        .iter()
        .enumerate()
        .filter(|(k, _)| *k != solved)
        .map(|(_, s)| s.as_str())
        .collect();
    let label = format!("{}{}", if sign > 0.0 { "+" } else { "-" }, names[solved]);
    let domain = Arc::new(
        CoordinateDomain::new(
            &format!("graph{label}"),
            kept.iter().map(|c| Coordinate::linear(c, -GRAPH_RADIUS, GRAPH_RADIUS)).collect(),
        )?
        .with_ball(&kept, GRAPH_RADIUS)?,
    );
    let sq: Vec<Expr> = kept.iter().map(|c| Expr::var(c).powi(2)).collect();
    let height = Expr::one().sub(&Expr::sum(&sq)).sqrt().scale(sign);
    let comps: Vec<Expr> = (0..2 * n)
        .map(|k| if k == solved { height.clone() } else { Expr::var(&names[k]) })
        .collect();
    let param = SmoothMap::new(&domain, ambient, comps.clone())?;
    let eta_c = param.pullback(&eta(ambient, n))?;
    let r = reeb(ambient, n);
    let reeb_c = VectorField::new(
        &domain,
        (0..2 * n)
            .filter(|k| *k != solved)
            .map(|k| param.compose_expr(&r.components()[k]))
            .collect(),
    )?;
    Ok(SphereChart {
        param,
        eta: eta_c,
        reeb: reeb_c,
        solved: Some((solved, sign)),
    })
}

/// Radii `r_1 = cos a_1`, `r_j = sin a_1 ⋯ sin a_{j−1} cos a_j`,
/// `r_n = sin a_1 ⋯ sin a_{n−1}`.
fn polar_radii(n: usize) -> Vec<Expr> {
    let mut out = Vec::with_capacity(n);
    let mut prefix = Expr::one();
    for j in 1..n {
        let a = Expr::var(&format!("a{j}"));
        out.push(prefix.mul(&a.cos()));
        prefix = prefix.mul(&a.sin());
    }
    out.push(prefix);
    out
}

/// Polar chart: `x_j = r_j cos 2πφ_j`, `y_j = r_j sin 2πφ_j` where
/// `η = −πΣ r_j² dφ_j` and `R = −(1/π)Σ ∂φ_j`.
fn polar_chart(ambient: &Arc<CoordinateDomain>, n: usize) -> Result<SphereChart, ModelError> {
    let mut coords: Vec<Coordinate> = (1..n)
        .map(|j| Coordinate::linear(&format!("a{j}"), 0.1, FRAC_PI_2 - 0.1))
        .collect();
    coords.extend((1..=n).map(|j| Coordinate::angular(&format!("phi{j}"))));
    let domain = Arc::new(CoordinateDomain::new("polar", coords)?);
    let radii = polar_radii(n);
    let mut comps = Vec::with_capacity(2 * n);
    for (j, r) in radii.iter().enumerate() {
        let ang = Expr::var(&format!("phi{}", j + 1)).scale(2.0 * PI);
        comps.push(r.mul(&ang.cos()));
        comps.push(r.mul(&ang.sin()));
    }
    let param = SmoothMap::new(&domain, ambient, comps)?;
    let eta_c = param.pullback(&eta(ambient, n))?;
    let mut reeb_comps = vec![Expr::zero(); domain.dim()];
    for c in reeb_comps.iter_mut().skip(n - 1) {
        *c = Expr::constant(-1.0 / PI);
    }
    Ok(SphereChart {
        param,
        eta: eta_c,
        reeb: VectorField::new(&domain, reeb_comps)?,
        solved: None,
    })
}

/// Closed form of `η` in the polar chart, kept as an oracle for the
/// pullback.
pub fn polar_eta_closed_form(chart: &SphereChart, n: usize) -> Result<DifferentialForm, FormError> {
    let dom = chart.domain();
    let radii = polar_radii(n);
    let mut coeffs = vec![Expr::zero(); dom.dim()];
    for (j, r) in radii.iter().enumerate() {
        coeffs[n - 1 + j] = r.powi(2).scale(-PI);
    }
    DifferentialForm::one_form(dom, coeffs)
}

fn with_circle(d: &CoordinateDomain) -> Result<Arc<CoordinateDomain>, FormError> {
    let circle = CoordinateDomain::new("S1", vec![Coordinate::angular(CIRCLE)])?;
    Ok(Arc::new(d.product(&circle, &format!("{}xS1", d.name))?))
}

/// `(S^{2N−1} × S¹, qΦ_N)` with `α = qη_N`, `ω = dθ`, `B = ∂θ` and
/// `E = −R/q`, on every chart of the sphere atlas.
pub fn model_sphere_circle(n: usize, q: f64) -> Result<LcsStructure, ModelError> {
    if n < 2 {
        return Err(ModelError::BadParameter(format!("sphere_circle needs N ≥ 2, got {n}")));
    }
    if !(q > 0.0 && q.is_finite()) {
        return Err(ModelError::BadParameter(format!("q must be positive, got {q}")));
    }
    let atlas = SphereAtlas::new(n)?;
    let charts = atlas
        .charts()
        .map(|c| sphere_circle_chart(c, q))
        .collect::<Result<Vec<_>, _>>()?;
    Ok(LcsStructure {
        name: format!("sphere_circle(N={n},q={q})"),
        kind: StructureKind::FirstKind,
        charts,
    })
}

fn sphere_circle_chart(c: &SphereChart, q: f64) -> Result<ChartData, ModelError> {
    let dom = with_circle(c.domain())?;
    let eta_c = c.eta.extend_to(&dom)?;
    let dtheta = DifferentialForm::dx(&dom, CIRCLE)?;
    let alpha = eta_c.scale(q);
    let phi = alpha.ext_d().sub(&dtheta.wedge(&alpha)?)?;
    let e = c.reeb.extend_to(&dom)?.scale_by(&Expr::constant(-1.0 / q));
    Ok(ChartData {
        b: Some(VectorField::coordinate(&dom, CIRCLE)?),
        e: Some(e),
        domain: dom,
        phi,
        omega: dtheta,
        alpha: Some(alpha),
    })
}

/// The sphere product with a discrete period lattice `qℤ`: `ω = q dθ`,
/// `α = η_N`, `Φ = dη_N − q dθ ∧ η_N`, `B = (1/q)∂θ`, `E = −R`.
pub fn model_sphere_circle_lattice(n: usize, q: f64) -> Result<LcsStructure, ModelError> {
    if n < 2 || !(q > 0.0 && q.is_finite()) {
        return Err(ModelError::BadParameter(format!("need N ≥ 2 and q > 0, got N={n}, q={q}")));
    }
    let atlas = SphereAtlas::new(n)?;
    let charts = atlas
        .charts()
        .map(|c| {
            let dom = with_circle(c.domain())?;
            let alpha = c.eta.extend_to(&dom)?;
            let omega = DifferentialForm::dx(&dom, CIRCLE)?.scale(q);
            let phi = alpha.ext_d().sub(&omega.wedge(&alpha)?)?;
            Ok(ChartData {
                b: Some(VectorField::coordinate(&dom, CIRCLE)?.scale_by(&Expr::constant(1.0 / q))),
                e: Some(c.reeb.extend_to(&dom)?.neg()),
                domain: dom,
                phi,
                omega,
                alpha: Some(alpha),
            })
        })
        .collect::<Result<Vec<_>, ModelError>>()?;
    Ok(LcsStructure {
        name: format!("sphere_circle_lattice(N={n},q={q})"),
        kind: StructureKind::FirstKind,
        charts,
    })
}

/// On every ordered pair of overlapping graph charts, the transition map
/// carries one chart's `η` onto the other's.
pub fn sphere_overlap_checks(n: usize, opts: CheckOptions) -> Result<Vec<Check>, ModelError> {
    let atlas = SphereAtlas::new(n)?;
    let tapes = atlas
        .graph
        .iter()
        .map(|c| Ok((c.param.compile()?, c.eta.compile()?)))
        .collect::<Result<Vec<_>, SymError>>()?;
    let mut worst = 0.0f64;
    let mut pairs = 0usize;
    let mut compared = 0usize;
    for (a, ca) in atlas.graph.iter().enumerate() {
        let pts = ca.domain().sample_points(opts.samples, opts.seed ^ a as u64);
        for (b, cb) in atlas.graph.iter().enumerate() {
            if a == b {
                continue;
            }
            let (si, _) = cb.solved.expect("graph chart");
            let mut hit = false;
            for p in &pts {
                let err = |source| SymError::Eval {
                    source,
                    point: ca.domain().format_point(p),
                };
                let (x, jac) = tapes[a].0.eval(p).map_err(err)?;
                let Some(pb) = cb.locate(&x) else { continue };
                hit = true;
                compared += 1;
                let ea = tapes[a].1.eval_covector(p).map_err(err)?;
                let eb = tapes[b].1.eval_covector(&pb).map_err(|source| SymError::Eval {
                    source,
                    point: cb.domain().format_point(&pb),
                })?;
                // Transition Jacobian: ambient Jacobian rows of the coordinates kept by `b`.
                let rows: Vec<usize> = (0..2 * n).filter(|k| *k != si).collect();
                for col in 0..ca.domain().dim() {
                    let pulled: f64 = rows.iter().zip(&eb).map(|(&r, w)| w * jac[(r, col)]).sum();
                    worst = worst.max((pulled - ea[col]).abs());
                }
            }
            pairs += hit as usize;
        }
    }
    Ok(vec![Check::residual(
        &format!("sphere{}-overlap", 2 * n - 1),
        "η_a = T*η_b on chart overlaps",
        worst,
        opts.tol,
    )
    .with_detail(format!("{pairs} overlapping chart pairs, {compared} compared points"))])
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::forms::numeric::nondegeneracy_rank;

    #[test]
    fn atlas_has_four_n_graph_charts() {
        let a = SphereAtlas::new(3).unwrap();
        assert_eq!(a.graph.len(), 12);
        assert!(a.charts().all(|c| c.domain().dim() == 5));
    }

    #[test]
    fn parametrizations_land_on_the_unit_sphere() {
        let a = SphereAtlas::new(2).unwrap();
        for c in a.charts() {
            let t = c.param.compile().unwrap();
            for p in c.domain().sample_points(50, 3) {
                let (x, _) = t.eval(&p).unwrap();
                let r2: f64 = x.iter().map(|v| v * v).sum();
                assert!((r2 - 1.0).abs() < 1e-12, "{}", c.domain().name);
            }
        }
    }

    #[test]
    fn polar_eta_matches_closed_form() {
        for n in 2..=3 {
            let a = SphereAtlas::new(n).unwrap();
            let closed = polar_eta_closed_form(&a.polar, n).unwrap();
            let cert = a.polar.eta.certify_equal(&closed, 200, 1e-12, 1).unwrap();
            assert!(cert.passed, "{}", cert.max_residual);
        }
    }

    #[test]
    fn reeb_is_normalized_and_in_kernel() {
        let a = SphereAtlas::new(2).unwrap();
        for c in a.charts() {
            let one = DifferentialForm::scalar(c.domain(), c.eta.pair(&c.reeb).unwrap().sub(&Expr::one()));
            assert!(one.certify_zero(100, 1e-10, 2).unwrap().passed, "{}", c.domain().name);
            let k = c.eta.ext_d().interior(&c.reeb).unwrap();
            assert!(k.certify_zero(100, 1e-10, 2).unwrap().passed, "{}", c.domain().name);
        }
    }

    #[test]
    fn product_form_is_full_rank_on_every_chart() {
        let s = model_sphere_circle(2, 1.0).unwrap();
        for c in &s.charts {
            let (r, _) = nondegeneracy_rank(&c.phi, 100, 4).unwrap();
            assert_eq!(r, 4, "{}", c.domain.name);
        }
    }

    #[test]
    fn potential_is_minus_flat_of_b() {
        let s = model_sphere_circle(2, 1.0).unwrap();
        for c in &s.charts {
            let ib = c.phi.interior(c.b.as_ref().unwrap()).unwrap();
            let r = ib.add(c.alpha.as_ref().unwrap()).unwrap();
            assert!(r.certify_zero(200, 1e-9, 5).unwrap().passed);
        }
    }

    #[test]
    fn overlaps_agree() {
        let checks = sphere_overlap_checks(2, CheckOptions::default()).unwrap();
        assert!(checks[0].passed, "{checks:?}");
        assert!(checks[0].detail.as_ref().unwrap().contains("pairs"));
    }

    #[test]
    fn bad_parameters_are_rejected() {
        assert!(model_sphere_circle(1, 1.0).is_err());
        assert!(model_sphere_circle(2, 0.0).is_err());
        assert!(model_sphere_circle(2, -1.0).is_err());
    }

    #[test]
    fn ambient_phi_restricts_to_chart_phi() {
        let n = 2;
        let amb = ambient_with_circle(n, 1.0);
        let phi = phi_ambient(&amb, n).unwrap();
        let s = model_sphere_circle(n, 1.0).unwrap();
        let atlas = SphereAtlas::new(n).unwrap();
        for (chart, data) in atlas.charts().zip(&s.charts) {
            let mut comps = chart.param.components().to_vec();
            comps.push(Expr::var(CIRCLE));
            let f = SmoothMap::new(&data.domain, &amb, comps).unwrap();
            let pulled = f.pullback(&phi).unwrap();
            assert!(pulled.certify_equal(&data.phi, 100, 1e-9, 6).unwrap().passed);
        }
    }
}
