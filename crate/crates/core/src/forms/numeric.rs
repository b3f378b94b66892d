//! Pointwise linear algebra on compiled forms: skew matrices, numerical
//! rank, the musical isomorphisms and numeric pullbacks.

use std::collections::BTreeMap;
use std::sync::atomic::{AtomicU64, Ordering};

use nalgebra::{DMatrix, DVector};

use super::form::{sort_with_sign, MultiIndex};
use super::{DifferentialForm, FormError, VectorField};
use crate::symexpr::SymError;

static RANK_THRESHOLD_BITS: AtomicU64 = AtomicU64::new(0x3DDB_7CDF_D9D7_BDBB); // 1e-10

/// Relative singular-value cutoff used for every numerical rank.
pub fn rank_threshold() -> f64 {
    f64::from_bits(RANK_THRESHOLD_BITS.load(Ordering::Relaxed))
}

pub fn set_rank_threshold(t: f64) {
    RANK_THRESHOLD_BITS.store(t.to_bits(), Ordering::Relaxed);
}

pub fn skew_from_terms<'a, I>(dim: usize, terms: I) -> DMatrix<f64>
where
    I: IntoIterator<Item = (&'a MultiIndex, f64)>,
{
    let mut m = DMatrix::zeros(dim, dim);
    for (idx, v) in terms {
        m[(idx[0], idx[1])] = v;
        m[(idx[1], idx[0])] = -v;
    }
    m
}

/// Number of singular values above `rel * max singular value`.
pub fn numerical_rank(m: &DMatrix<f64>, rel: f64) -> usize {
    if m.nrows() == 0 || m.ncols() == 0 {
        return 0;
    }
    let sv = m.clone().svd(false, false).singular_values;
    let max = sv.iter().fold(0.0f64, |a, &b| a.max(b));
    if max == 0.0 {
        return 0;
    }
    sv.iter().filter(|&&s| s > rel * max).count()
}

/// Determinant of the `rows × cols` submatrix of `m`.
fn minor(m: &DMatrix<f64>, rows: &[usize], cols: &[usize]) -> f64 {
    match rows.len() {
        0 => 1.0,
        1 => m[(rows[0], cols[0])],
        2 => m[(rows[0], cols[0])] * m[(rows[1], cols[1])] - m[(rows[0], cols[1])] * m[(rows[1], cols[0])],
        k => DMatrix::from_fn(k, k, |i, j| m[(rows[i], cols[j])]).determinant(),
    }
}

fn combinations(n: usize, k: usize) -> Vec<Vec<usize>> {
    let mut out = Vec::new();
    let mut cur = Vec::with_capacity(k);
    fn rec(start: usize, n: usize, k: usize, cur: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
        if cur.len() == k {
            out.push(cur.clone());
            return;
        }
        for i in start..n {
            if n - i < k - cur.len() {
                break;
            }
            cur.push(i);
            rec(i + 1, n, k, cur, out);
            cur.pop();
        }
    }
    rec(0, n, k, &mut cur, &mut out);
    out
}

/// Strictly increasing `k`-subsets of `0..n`.
pub fn multi_indices(n: usize, k: usize) -> Vec<MultiIndex> {
    combinations(n, k)
}

/// Pulls back sparse form values through a Jacobian (`target × source`).
pub fn pullback_values(terms: &[(MultiIndex, f64)], jac: &DMatrix<f64>) -> BTreeMap<MultiIndex, f64> {
    let mut out = BTreeMap::new();
    let Some((first, _)) = terms.first() else {
        return out;
    };
    let k = first.len();
    let cols_list = combinations(jac.ncols(), k);
    for cols in cols_list {
        let v: f64 = terms.iter().map(|(rows, a)| a * minor(jac, rows, &cols)).sum();
        if v != 0.0 {
            out.insert(cols, v);
        }
    }
    out
}

/// Dense 1-form pullback `J^T a`.
pub fn pullback_covector(a: &[f64], jac: &DMatrix<f64>) -> Vec<f64> {
    (jac.transpose() * DVector::from_column_slice(a)).iter().copied().collect()
}

/// Skew 2-form pullback `J^T A J`.
pub fn pullback_skew(a: &DMatrix<f64>, jac: &DMatrix<f64>) -> DMatrix<f64> {
    jac.transpose() * a * jac
}

/// Largest absolute entry of a difference of sparse value maps.
pub fn max_abs_diff(a: &BTreeMap<MultiIndex, f64>, b: &BTreeMap<MultiIndex, f64>) -> f64 {
    let mut m = 0.0f64;
    for (k, v) in a {
        m = m.max((v - b.get(k).copied().unwrap_or(0.0)).abs());
    }
    for (k, v) in b {
        if !a.contains_key(k) {
            m = m.max(v.abs());
        }
    }
    m
}

/// Sparse values of an arbitrary-order index list, sorted with sign.
pub fn canonical_terms(raw: Vec<(Vec<usize>, f64)>) -> BTreeMap<MultiIndex, f64> {
    let mut out = BTreeMap::new();
    for (mut idx, v) in raw {
        if let Some(sign) = sort_with_sign(&mut idx) {
            *out.entry(idx).or_insert(0.0) += sign * v;
        }
    }
    out
}

/// `♭_Φ(X) = i_X Φ`.
pub fn flat(phi: &DifferentialForm, x: &VectorField) -> Result<DifferentialForm, FormError> {
    if phi.degree() != 2 {
        return Err(FormError::DegreeMismatch(phi.degree(), 2));
    }
    phi.interior(x)
}

/// Solves `i_v Φ = a` at `point`.
pub fn sharp(phi: &DifferentialForm, a: &DifferentialForm, point: &[f64]) -> Result<Vec<f64>, FormError> {
    if phi.degree() != 2 {
        return Err(FormError::DegreeMismatch(phi.degree(), 2));
    }
    if a.degree() != 1 {
        return Err(FormError::DegreeMismatch(a.degree(), 1));
    }
    super::same_domain(phi.domain(), a.domain())?;
    let domain = phi.domain();
    let eval_err = |source| FormError::Sym(SymError::Eval {
        source,
        point: domain.format_point(point),
    });
    let m = phi.compile()?.eval_skew(point).map_err(eval_err)?;
    let rhs = a.compile()?.eval_covector(point).map_err(eval_err)?;
    sharp_values(&m, &rhs).map_err(|rank| FormError::Singular {
        point: domain.format_point(point),
        rank,
        dim: domain.dim(),
    })
}

/// Numeric sharp: `(i_v Φ)_j = Σ_i v_i Φ_ij`, i.e. `Φ^T v = a`.
/// Returns the rank as error when `Φ` is singular.
pub fn sharp_values(phi: &DMatrix<f64>, a: &[f64]) -> Result<Vec<f64>, usize> {
    let rank = numerical_rank(phi, rank_threshold());
    if rank < phi.nrows() {
        return Err(rank);
    }
    let lu = phi.transpose().lu();
    match lu.solve(&DVector::from_column_slice(a)) {
        Some(v) => Ok(v.iter().copied().collect()),
        None => Err(rank),
    }
}

/// Minimum numerical rank of `Φ` over seeded samples, with a point attaining it.
pub fn nondegeneracy_rank(phi: &DifferentialForm, samples: usize, seed: u64) -> Result<(usize, Vec<f64>), FormError> {
    if phi.degree() != 2 {
        return Err(FormError::DegreeMismatch(phi.degree(), 2));
    }
    let domain = phi.domain().clone();
    let tape = phi.compile()?;
    let points = domain.sample_points(samples, seed);
    let thr = rank_threshold();
    let ranks = crate::exec::try_map(&points, |p| {
        tape.eval_skew(p)
            .map(|m| numerical_rank(&m, thr))
            .map_err(|source| {
                FormError::Sym(SymError::Eval {
                    source,
                    point: domain.format_point(p),
                })
            })
    })?;
    let mut best = (domain.dim(), points.first().cloned().unwrap_or_default());
    for (r, p) in ranks.into_iter().zip(points) {
        if r < best.0 {
            best = (r, p);
        }
    }
    Ok(best)
}

/// Absolute value of the coefficient of `Φ^n` on `dx_1∧…∧dx_2n`, i.e.
/// `n! |Pf(Φ)| = n! sqrt|det Φ|`.
pub fn top_power_magnitude(phi: &DMatrix<f64>) -> f64 {
    let n = phi.nrows() / 2;
    let fact: f64 = (1..=n).map(|i| i as f64).product();
    fact * phi.determinant().abs().sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::forms::{Coordinate, CoordinateDomain};
    use std::sync::Arc;

    fn plane(names: &[&str]) -> Arc<CoordinateDomain> {
        Arc::new(
            CoordinateDomain::new("r", names.iter().map(|n| Coordinate::linear(n, -1.0, 1.0)).collect()).unwrap(),
        )
    }

    #[test]
    fn default_threshold() {
        assert_eq!(rank_threshold(), 1e-10);
    }

    #[test]
    fn sharp_of_dy_is_d_dx() {
        let d = plane(&["x", "y"]);
        let phi = DifferentialForm::dx(&d, "x").unwrap().wedge(&DifferentialForm::dx(&d, "y").unwrap()).unwrap();
        let v = sharp(&phi, &DifferentialForm::dx(&d, "y").unwrap(), &[0.3, 0.1]).unwrap();
        assert!((v[0] - 1.0).abs() < 1e-14 && v[1].abs() < 1e-14);
    }

    #[test]
    fn degenerate_form_reports_rank() {
        let d = plane(&["x", "y", "z", "w"]);
        let phi = DifferentialForm::dx(&d, "x").unwrap().wedge(&DifferentialForm::dx(&d, "y").unwrap()).unwrap();
        let err = sharp(&phi, &DifferentialForm::dx(&d, "z").unwrap(), &[0.0; 4]).unwrap_err();
        assert!(matches!(err, FormError::Singular { rank: 2, .. }));
        assert_eq!(nondegeneracy_rank(&phi, 10, 1).unwrap().0, 2);
        assert_eq!(nondegeneracy_rank(&DifferentialForm::zero(&d, 2), 10, 1).unwrap().0, 0);
    }

    #[test]
    fn pullback_minors_match_skew_product() {
        let a = DMatrix::from_row_slice(3, 3, &[0.0, 1.0, 2.0, -1.0, 0.0, 3.0, -2.0, -3.0, 0.0]);
        let j = DMatrix::from_row_slice(3, 2, &[1.0, 2.0, 0.5, -1.0, 3.0, 0.25]);
        let terms = vec![(vec![0, 1], 1.0), (vec![0, 2], 2.0), (vec![1, 2], 3.0)];
        let sparse = pullback_values(&terms, &j);
        let dense = pullback_skew(&a, &j);
        assert!((sparse[&vec![0, 1]] - dense[(0, 1)]).abs() < 1e-12);
    }

    #[test]
    fn top_power_of_standard_form() {
        let mut m = DMatrix::zeros(4, 4);
        m[(0, 1)] = 1.0;
        m[(1, 0)] = -1.0;
        m[(2, 3)] = 1.0;
        m[(3, 2)] = -1.0;
        assert!((top_power_magnitude(&m) - 2.0).abs() < 1e-14);
    }
}
