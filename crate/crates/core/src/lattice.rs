//! Integer relations among real numbers and finitely generated subgroups of ℝ.
//!
//! Pairs are handled by continued fractions, which find every relation with
//! coefficients under the bound. Three or more numbers use LLL on the usual
//! scaled embedding; a reported relation is always re-verified in floating
//! point before it is trusted.

use num_integer::Integer;

/// Bounded search parameters.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RelationSearch {
    pub bound: i64,
    pub tol: f64,
}

impl Default for RelationSearch {
    fn default() -> Self {
        RelationSearch { bound: 1_000_000, tol: 1e-9 }
    }
}

/// Finds integers `(p, q)`, `q > 0`, with `|x - p/q| < tol/q` and
/// `|p|, q ≤ bound`, i.e. a relation `q x - p ≈ 0`.
pub fn rational_approximation(x: f64, search: RelationSearch) -> Option<(i64, i64)> {
    if !x.is_finite() {
        return None;
    }
    let (mut h0, mut h1) = (0i128, 1i128);
    let (mut k0, mut k1) = (1i128, 0i128);
    let mut r = x;
    for _ in 0..64 {
        let a = r.floor();
        if a.abs() > 1e15 {
            break;
        }
        let ai = a as i128;
        let h2 = ai * h1 + h0;
        let k2 = ai * k1 + k0;
        if k2.abs() > search.bound as i128 || h2.abs() > search.bound as i128 {
            break;
        }
        (h0, h1, k0, k1) = (h1, h2, k1, k2);
        if (k1 as f64 * x - h1 as f64).abs() < search.tol {
            return Some((h1 as i64, k1 as i64));
        }
        let frac = r - a;
        if frac.abs() < 1e-300 {
            break;
        }
        r = 1.0 / frac;
    }
    None
}

/// LLL reduction (δ = 3/4) of the rows of `b`, in place.
fn lll(b: &mut [Vec<f64>]) {
    let n = b.len();
    let dot = |x: &[f64], y: &[f64]| x.iter().zip(y).map(|(a, b)| a * b).sum::<f64>();
    let gram_schmidt = |b: &[Vec<f64>]| {
        let mut bs: Vec<Vec<f64>> = Vec::with_capacity(n);
        let mut mu = vec![vec![0.0; n]; n];
        for i in 0..n {
            let mut v = b[i].clone();
            for j in 0..i {
                mu[i][j] = dot(&b[i], &bs[j]) / dot(&bs[j], &bs[j]);
                for (vk, bk) in v.iter_mut().zip(&bs[j]) {
                    *vk -= mu[i][j] * bk;
                }
            }
            bs.push(v);
        }
        (bs, mu)
    };
    let mut k = 1;
    let mut guard = 0;
    while k < n && guard < 100_000 {
        guard += 1;
        for j in (0..k).rev() {
            let (_, mu) = gram_schmidt(b);
            let q = mu[k][j].round();
            if q != 0.0 {
                let bj = b[j].clone();
                for (x, y) in b[k].iter_mut().zip(&bj) {
                    *x -= q * y;
                }
            }
        }
        let (bs, mu) = gram_schmidt(b);
        let lhs = dot(&bs[k], &bs[k]);
        let rhs = (0.75 - mu[k][k - 1] * mu[k][k - 1]) * dot(&bs[k - 1], &bs[k - 1]);
        if lhs >= rhs {
            k += 1;
        } else {
            b.swap(k, k - 1);
            k = (k - 1).max(1);
        }
    }
}

/// Integer relation `Σ c_i x_i ≈ 0` with `max |c_i| ≤ bound`, if one exists
/// that the search can certify.
pub fn integer_relation(xs: &[f64], search: RelationSearch) -> Option<Vec<i64>> {
    match xs.len() {
        0 => None,
        1 => (xs[0].abs() < search.tol).then(|| vec![1]),
        2 => {
            if xs[1].abs() < search.tol {
                return Some(vec![0, 1]);
            }
            if xs[0].abs() < search.tol {
                return Some(vec![1, 0]);
            }
            // q x0 - p x1 = 0 with x = x0/x1 ≈ p/q
            let (p, q) = rational_approximation(xs[0] / xs[1], search)?;
            let c = vec![q, -p];
            verify(xs, &c, search).then_some(c)
        }
        n => {
            let scale = xs.iter().fold(0.0f64, |a, x| a.max(x.abs()));
            if scale == 0.0 {
                let mut c = vec![0; n];
                c[0] = 1;
                return Some(c);
            }
            let weight = 1.0 / search.tol.max(1e-14);
            let mut basis: Vec<Vec<f64>> = (0..n)
                .map(|i| {
                    let mut row = vec![0.0; n + 1];
                    row[i] = 1.0;
                    row[n] = weight * xs[i] / scale;
                    row
                })
                .collect();
            lll(&mut basis);
            basis
                .iter()
                .map(|row| row[..n].iter().map(|v| v.round() as i64).collect::<Vec<_>>())
                .filter(|c| c.iter().any(|&v| v != 0))
                .find(|c| verify(xs, c, search))
        }
    }
}

fn verify(xs: &[f64], c: &[i64], search: RelationSearch) -> bool {
    if c.iter().all(|&v| v == 0) || c.iter().any(|v| v.abs() > search.bound) {
        return false;
    }
    let scale = xs.iter().fold(1.0f64, |a, x| a.max(x.abs()));
    let s: f64 = xs.iter().zip(c).map(|(x, &ci)| x * ci as f64).sum();
    s.abs() < search.tol * scale
}

/// Rational coordinates of `x` in terms of a ℚ-independent list, if `x` lies
/// in their ℚ-span (with denominators under the bound).
pub fn rational_coordinates(basis: &[f64], x: f64, search: RelationSearch) -> Option<Vec<(i64, i64)>> {
    let mut xs = vec![x];
    xs.extend_from_slice(basis);
    let c = integer_relation(&xs, search)?;
    if c[0] == 0 {
        return None;
    }
    Some(
        c[1..]
            .iter()
            .map(|&ci| {
                let (mut p, mut q) = (-ci, c[0]);
                if q < 0 {
                    p = -p;
                    q = -q;
                }
                let g = p.gcd(&q).max(1);
                (p / g, q / g)
            })
            .collect(),
    )
}

/// Subgroup of ℝ generated by finitely many numbers: a ℚ-independent
/// spanning set plus a ℤ-basis of the generated group.
#[derive(Debug, Clone, PartialEq)]
pub struct GeneratedGroup {
    pub rank: usize,
    /// ℤ-basis of the group generated by the inputs.
    pub basis: Vec<f64>,
    /// Generators found to be ℚ-independent (greedy, in input order).
    pub independent: Vec<f64>,
}

impl GeneratedGroup {
    pub fn new(values: &[f64], search: RelationSearch) -> Self {
        let mut independent: Vec<f64> = Vec::new();
        for &v in values {
            if v.abs() < search.tol {
                continue;
            }
            if independent.is_empty() || rational_coordinates(&independent, v, search).is_none() {
                independent.push(v);
            }
        }
        let r = independent.len();
        if r == 0 {
            return GeneratedGroup {
                rank: 0,
                basis: vec![],
                independent,
            };
        }
        // integer coordinates of every generator over independent/D
        let coords: Vec<Vec<(i64, i64)>> = values
            .iter()
            .filter(|v| v.abs() >= search.tol)
            .map(|&v| rational_coordinates(&independent, v, search).expect("spanned by construction"))
            .collect();
        let denom = coords
            .iter()
            .flatten()
            .fold(1i64, |acc, &(_, q)| acc.lcm(&q));
        let rows: Vec<Vec<i64>> = coords
            .iter()
            .map(|row| row.iter().map(|&(p, q)| p * (denom / q)).collect())
            .collect();
        let h = hermite_rows(rows, r);
        let basis = h
            .iter()
            .map(|row| {
                row.iter()
                    .zip(&independent)
                    .map(|(&a, b)| a as f64 / denom as f64 * b)
                    .sum::<f64>()
            })
            .collect();
        GeneratedGroup {
            rank: r,
            basis,
            independent,
        }
    }

    /// Whether `x` is an integer combination of the basis.
    pub fn contains(&self, x: f64, search: RelationSearch) -> bool {
        if x.abs() < search.tol {
            return true;
        }
        if self.basis.is_empty() {
            return false;
        }
        match rational_coordinates(&self.basis, x, search) {
            Some(c) => c.iter().all(|&(_, q)| q == 1),
            None => false,
        }
    }

    pub fn same_as(&self, other: &GeneratedGroup, search: RelationSearch) -> bool {
        self.rank == other.rank
            && self.basis.iter().all(|&b| other.contains(b, search))
            && other.basis.iter().all(|&b| self.contains(b, search))
    }

    /// Rank one and generated by ±1.
    pub fn is_integral(&self, tol: f64) -> bool {
        self.rank == 1 && (self.basis[0].abs() - 1.0).abs() < tol
    }
}

/// Row-style Hermite normal form; returns the `r` nonzero rows.
pub fn hermite_rows(mut rows: Vec<Vec<i64>>, ncols: usize) -> Vec<Vec<i64>> {
    let mut out = Vec::new();
    let mut pivot_row = 0;
    for col in 0..ncols {
        // Euclid on column `col` among rows[pivot_row..]
        loop {
            let nz: Vec<usize> = (pivot_row..rows.len()).filter(|&i| rows[i][col] != 0).collect();
            if nz.len() <= 1 {
                break;
            }
            let min_i = *nz.iter().min_by_key(|&&i| rows[i][col].abs()).unwrap();
            for &i in &nz {
                if i != min_i {
                    let q = rows[i][col] / rows[min_i][col];
                    let pr = rows[min_i].clone();
                    for (a, b) in rows[i].iter_mut().zip(&pr) {
                        *a -= q * b;
                    }
                }
            }
        }
        if let Some(i) = (pivot_row..rows.len()).find(|&i| rows[i][col] != 0) {
            rows.swap(pivot_row, i);
            if rows[pivot_row][col] < 0 {
                for a in rows[pivot_row].iter_mut() {
                    *a = -*a;
                }
            }
            pivot_row += 1;
        }
    }
    for row in rows.into_iter().take(pivot_row) {
        out.push(row);
    }
    // reduce entries above pivots
    for i in 0..out.len() {
        let col = out[i].iter().position(|&v| v != 0).unwrap();
        let p = out[i][col];
        for k in 0..i {
            let q = Integer::div_floor(&out[k][col], &p);
            let pr = out[i].clone();
            for (a, b) in out[k].iter_mut().zip(&pr) {
                *a -= q * b;
            }
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn search() -> RelationSearch {
        RelationSearch::default()
    }

    #[test]
    fn continued_fraction_relation() {
        assert_eq!(rational_approximation(0.75, search()), Some((3, 4)));
        assert!(rational_approximation(2f64.sqrt(), search()).is_none());
    }

    #[test]
    fn dependent_integers_collapse_to_one() {
        let g = GeneratedGroup::new(&[1.0, 2.0, 3.0], search());
        assert_eq!(g.rank, 1);
        assert_eq!(g.basis.len(), 1);
        assert!((g.basis[0] - 1.0).abs() < 1e-12);
        assert!(g.is_integral(1e-9));
    }

    #[test]
    fn coprime_generators() {
        let g = GeneratedGroup::new(&[2.0, 3.0], search());
        assert_eq!(g.rank, 1);
        assert!((g.basis[0].abs() - 1.0).abs() < 1e-12);
        let h = GeneratedGroup::new(&[0.5, 1.0], search());
        assert!((h.basis[0] - 0.5).abs() < 1e-12);
        assert!(!h.is_integral(1e-9));
    }

    #[test]
    fn irrational_pair_is_independent() {
        let g = GeneratedGroup::new(&[1.0, 2f64.sqrt()], search());
        assert_eq!(g.rank, 2);
    }

    #[test]
    fn three_term_relation_via_lll() {
        let s2 = 2f64.sqrt();
        let s3 = 3f64.sqrt();
        let xs = [s2, s3, 3.0 * s2 - 2.0 * s3];
        let c = integer_relation(&xs, search()).unwrap();
        let v: f64 = xs.iter().zip(&c).map(|(x, &k)| x * k as f64).sum();
        assert!(v.abs() < 1e-9);
        let g = GeneratedGroup::new(&[1.0, s2, s3, 1.0 + s2], search());
        assert_eq!(g.rank, 3);
        assert!(integer_relation(&[1.0, s2, s3], search()).is_none());
    }

    #[test]
    fn group_equality() {
        let a = GeneratedGroup::new(&[2.0, 3.0], search());
        let b = GeneratedGroup::new(&[1.0], search());
        assert!(a.same_as(&b, search()));
        let c = GeneratedGroup::new(&[2.0], search());
        assert!(!a.same_as(&c, search()));
    }

    #[test]
    fn hermite_of_small_matrix() {
        let h = hermite_rows(vec![vec![2, 4], vec![3, 5], vec![0, 2]], 2);
        assert_eq!(h, vec![vec![1, 1], vec![0, 2]]);
    }
}
