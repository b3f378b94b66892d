//! Twisted (local-system) cochain complexes on cubulated flat tori.
//!
//! `T^n` is the grid `(ℤ/m)^n`; a `k`-cell is a vertex `v` with a set `S`
//! of `k` axes. The coboundary transports values along an edge of axis
//! `j` with weight `t_j = e^{−μ_j}` when the edge crosses the cut of axis
//! `j` (and weight 1 otherwise), which realises the rank-one local system
//! with holonomy `t_j` around the `j`-th circle.

#[cfg(test)]
mod tests;

use thiserror::Error;

use crate::check::Check;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum CohomologyError {
    #[error("bad torus complex parameters: {0}")]
    BadParameter(String),
    #[error("elimination needs more than {limit} stored entries; try a smaller grid resolution m")]
    MemoryBudget { limit: usize },
    #[error("averaging needs trivial weights; axis {axis} has weight {weight}")]
    NontrivialWeights { axis: usize, weight: f64 },
    #[error("cochain of degree {degree} has {got} entries, expected {expected}")]
    CochainLength { degree: usize, got: usize, expected: usize },
}

/// Row-major sparse matrix with sorted rows.
#[derive(Debug, Clone, PartialEq)]
pub struct SparseMatrix {
    pub rows: usize,
    pub cols: usize,
    pub entries: Vec<Vec<(usize, f64)>>,
}

impl SparseMatrix {
    pub fn nnz(&self) -> usize {
        self.entries.iter().map(Vec::len).sum()
    }

    pub fn max_abs(&self) -> f64 {
        self.entries
            .iter()
            .flatten()
            .fold(0.0, |m, (_, v)| m.max(v.abs()))
    }

    pub fn mul_vec(&self, x: &[f64]) -> Vec<f64> {
        self.entries
            .iter()
            .map(|row| row.iter().map(|&(c, v)| v * x[c]).sum())
            .collect()
    }

    pub fn transpose_mul_vec(&self, y: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.cols];
        for (row, &yr) in self.entries.iter().zip(y) {
            for &(c, v) in row {
                out[c] += v * yr;
            }
        }
        out
    }

    /// `self · other`.
    pub fn mul(&self, other: &SparseMatrix) -> SparseMatrix {
        let entries = self
            .entries
            .iter()
            .map(|row| {
                let mut acc: std::collections::BTreeMap<usize, f64> = Default::default();
                for &(k, a) in row {
                    for &(c, b) in &other.entries[k] {
                        *acc.entry(c).or_insert(0.0) += a * b;
                    }
                }
                acc.into_iter().filter(|(_, v)| *v != 0.0).collect()
            })
            .collect();
        SparseMatrix {
            rows: self.rows,
            cols: other.cols,
            entries,
        }
    }

    pub fn to_dense(&self) -> nalgebra::DMatrix<f64> {
        let mut m = nalgebra::DMatrix::zeros(self.rows, self.cols);
        for (r, row) in self.entries.iter().enumerate() {
            for &(c, v) in row {
                m[(r, c)] += v;
            }
        }
        m
    }
}

/// Where the holonomy sits: on the edges crossing the cut (default) or
/// spread evenly as `t_j^{1/m}` over every edge of axis `j`. The two are
/// conjugate by a diagonal rescaling of cochains.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Gauge {
    Cut,
    Uniform,
}

#[derive(Debug, Clone)]
pub struct TwistedCochainComplex {
    pub n: usize,
    pub m: usize,
    pub mu: Vec<f64>,
    /// `t_j = e^{−μ_j}`.
    pub weights: Vec<f64>,
    /// Edges of axis `j` leaving a vertex with `v_j = cuts[j]` cross the cut.
    pub cuts: Vec<usize>,
    pub gauge: Gauge,
    /// `D_k: C^k → C^{k+1}` for `k = 0..n−1`.
    pub d: Vec<SparseMatrix>,
    subsets: Vec<Vec<Vec<usize>>>,
}

fn subsets_of_size(n: usize, k: usize) -> Vec<Vec<usize>> {
    (0u32..1 << n)
        .filter(|mask| mask.count_ones() as usize == k)
        .map(|mask| (0..n).filter(|j| mask & (1 << j) != 0).collect())
        .collect()
}

pub fn binomial(n: usize, k: usize) -> usize {
    if k > n {
        return 0;
    }
    (0..k).fold(1, |acc, i| acc * (n - i) / (i + 1))
}

pub fn build_torus_complex(n: usize, m: usize, mu: &[f64]) -> Result<TwistedCochainComplex, CohomologyError> {
    build_torus_complex_with(n, m, mu, &vec![m.saturating_sub(1); n], Gauge::Cut)
}

pub fn build_torus_complex_with(
    n: usize,
    m: usize,
    mu: &[f64],
    cuts: &[usize],
    gauge: Gauge,
) -> Result<TwistedCochainComplex, CohomologyError> {
    if n < 1 || m < 2 {
        return Err(CohomologyError::BadParameter(format!("need n ≥ 1 and m ≥ 2, got n={n}, m={m}")));
    }
    if n > 16 {
        return Err(CohomologyError::BadParameter(format!("n = {n} is too large")));
    }
    if mu.len() != n || cuts.len() != n {
        return Err(CohomologyError::BadParameter(format!(
            "μ has {} entries and cuts {}, expected {n}",
            mu.len(),
            cuts.len()
        )));
    }
    if let Some(c) = cuts.iter().find(|&&c| c >= m) {
        return Err(CohomologyError::BadParameter(format!("cut {c} outside 0..{m}")));
    }
    if mu.iter().any(|x| !x.is_finite()) {
        return Err(CohomologyError::BadParameter("μ must be finite".into()));
    }
    let weights: Vec<f64> = mu.iter().map(|x| (-x).exp()).collect();
    let subsets: Vec<Vec<Vec<usize>>> = (0..=n).map(|k| subsets_of_size(n, k)).collect();
    let mut c = TwistedCochainComplex {
        n,
        m,
        mu: mu.to_vec(),
        weights,
        cuts: cuts.to_vec(),
        gauge,
        d: vec![],
        subsets,
    };
    c.d = (0..n).map(|k| c.assemble(k)).collect();
    Ok(c)
}

impl TwistedCochainComplex {
    pub fn vertices(&self) -> usize {
        self.m.pow(self.n as u32)
    }

    /// `dim C^k = m^n · C(n, k)`.
    pub fn dim(&self, k: usize) -> usize {
        self.vertices() * binomial(self.n, k)
    }

    fn coords(&self, mut v: usize) -> Vec<usize> {
        let mut out = vec![0; self.n];
        for c in out.iter_mut() {
            *c = v % self.m;
            v /= self.m;
        }
        out
    }

    fn index(&self, coords: &[usize]) -> usize {
        coords.iter().rev().fold(0, |acc, &c| acc * self.m + c)
    }

    fn cell(&self, k: usize, v: usize, s: &[usize]) -> usize {
        let pos = self.subsets[k].iter().position(|t| t == s).expect("subset of the right size");
        v * self.subsets[k].len() + pos
    }

    /// Transport weight of the axis-`j` edge leaving vertex `coords`.
    fn edge_weight(&self, coords: &[usize], j: usize) -> f64 {
        match self.gauge {
            Gauge::Cut if coords[j] == self.cuts[j] => self.weights[j],
            Gauge::Cut => 1.0,
            Gauge::Uniform => self.weights[j].powf(1.0 / self.m as f64),
        }
    }

    /// `(D a)(v, T) = Σ_{j∈T} (−1)^{pos(j,T)} [w(v,j) a(v+e_j, T∖j) − a(v, T∖j)]`.
    fn assemble(&self, k: usize) -> SparseMatrix {
        let rows = self.dim(k + 1);
        let mut entries = Vec::with_capacity(rows);
        for v in 0..self.vertices() {
            let coords = self.coords(v);
            for t in &self.subsets[k + 1] {
                let mut row: Vec<(usize, f64)> = Vec::with_capacity(2 * t.len());
                for (pos, &j) in t.iter().enumerate() {
                    let sign = if pos % 2 == 0 { 1.0 } else { -1.0 };
                    let face: Vec<usize> = t.iter().copied().filter(|&i| i != j).collect();
                    let mut next = coords.clone();
                    next[j] = (next[j] + 1) % self.m;
                    let w = self.edge_weight(&coords, j);
                    row.push((self.cell(k, self.index(&next), &face), sign * w));
                    row.push((self.cell(k, v, &face), -sign));
                }
                row.sort_by_key(|e| e.0);
                // m = 2 can land both ends of an edge on distinct cells only;
                // merge defensively anyway.
                let mut merged: Vec<(usize, f64)> = Vec::with_capacity(row.len());
                for (c, val) in row {
                    match merged.last_mut() {
                        Some(last) if last.0 == c => last.1 += val,
                        _ => merged.push((c, val)),
                    }
                }
                merged.retain(|e| e.1 != 0.0);
                entries.push(merged);
            }
        }
        SparseMatrix {
            rows,
            cols: self.dim(k),
            entries,
        }
    }

    /// Largest entry of `D_{k+1} D_k` over all `k`.
    pub fn square_defect(&self) -> f64 {
        self.d
            .windows(2)
            .map(|w| w[1].mul(&w[0]).max_abs())
            .fold(0.0, f64::max)
    }

    /// Diagonal cochain rescaling `g(v) = Π_j t_j^{−v_j/m}` (coordinates
    /// measured from just after the cut) taking the cut gauge to the
    /// uniform one: `D_uniform G = G D_cut`.
    pub fn gauge_scaling(&self, k: usize) -> Vec<f64> {
        let per = self.subsets[k].len();
        (0..self.dim(k))
            .map(|cell| {
                let coords = self.coords(cell / per);
                coords
                    .iter()
                    .enumerate()
                    .map(|(j, &c)| {
                        let from_cut = (c + self.m - (self.cuts[j] + 1) % self.m) % self.m;
                        self.weights[j].powf(-(from_cut as f64) / self.m as f64)
                    })
                    .product()
            })
            .collect()
    }

    fn trivial(&self) -> bool {
        self.weights.iter().all(|&w| w == 1.0)
    }
}

/// Threshold and memory budget of the sparse rank.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RankOptions {
    /// Entries below `rel × max|entry|` are treated as zero.
    pub rel: f64,
    /// Largest number of stored pivot-row entries.
    pub max_entries: usize,
}

impl Default for RankOptions {
    fn default() -> Self {
        RankOptions {
            rel: 1e-10,
            max_entries: 50_000_000,
        }
    }
}

/// `a ← a − f·b` on sorted sparse rows, dropping entries at or below `drop`.
fn axpy(a: &[(usize, f64)], f: f64, b: &[(usize, f64)], drop: f64) -> Vec<(usize, f64)> {
    let mut out = Vec::with_capacity(a.len() + b.len());
    let (mut i, mut j) = (0, 0);
    while i < a.len() || j < b.len() {
        let (c, v) = match (a.get(i), b.get(j)) {
            (Some(&(ca, va)), Some(&(cb, vb))) if ca == cb => {
                i += 1;
                j += 1;
                (ca, va - f * vb)
            }
            (Some(&(ca, va)), Some(&(cb, _))) if ca < cb => {
                i += 1;
                (ca, va)
            }
            (Some(&(ca, va)), None) => {
                i += 1;
                (ca, va)
            }
            (_, Some(&(cb, vb))) => {
                j += 1;
                (cb, -f * vb)
            }
            (None, None) => unreachable!(),
        };
        if v.abs() > drop {
            out.push((c, v));
        }
    }
    out
}

/// Rank by sparse row echelon elimination: each row is reduced against the
/// pivot rows of its leading columns until it vanishes or opens a new
/// pivot. Entries at or below `rel × max|entry|` count as zero.
pub fn sparse_rank(a: &SparseMatrix, opts: RankOptions) -> Result<usize, CohomologyError> {
    let drop = opts.rel * a.max_abs();
    let mut pivots: Vec<Option<Vec<(usize, f64)>>> = vec![None; a.cols];
    let mut stored = 0usize;
    let mut rank = 0;
    for row in &a.entries {
        let mut r: Vec<(usize, f64)> = row.iter().copied().filter(|e| e.1.abs() > drop).collect();
        while let Some(&(c, v)) = r.first() {
            match &pivots[c] {
                Some(p) => {
                    let f = v / p[0].1;
                    let mut next = axpy(&r[1..], f, &p[1..], drop);
                    std::mem::swap(&mut r, &mut next);
                }
                None => {
                    stored += r.len();
                    if stored > opts.max_entries {
                        return Err(CohomologyError::MemoryBudget { limit: opts.max_entries });
                    }
                    pivots[c] = Some(r);
                    rank += 1;
                    break;
                }
            }
        }
    }
    Ok(rank)
}

/// `b^k = dim C^k − rank D_k − rank D_{k−1}`. Ranks of the `D_k` are
/// computed in parallel.
pub fn twisted_betti(c: &TwistedCochainComplex, opts: RankOptions) -> Result<Vec<usize>, CohomologyError> {
    let ranks: Vec<usize> = crate::exec::try_map(&c.d, |d| sparse_rank(d, opts))?;
    Ok((0..=c.n)
        .map(|k| {
            let out = if k < c.n { ranks[k] } else { 0 };
            let inc = if k > 0 { ranks[k - 1] } else { 0 };
            c.dim(k) - out - inc
        })
        .collect())
}

pub fn euler_characteristic(betti: &[usize]) -> i64 {
    betti
        .iter()
        .enumerate()
        .map(|(k, &b)| if k % 2 == 0 { b as i64 } else { -(b as i64) })
        .sum()
}

/// Euler characteristic of the twisted complex against the untwisted one
/// on the same grid.
#[derive(Debug, Clone, PartialEq, serde::Serialize)]
pub struct EulerReport {
    pub twisted: i64,
    pub untwisted: i64,
    pub passed: bool,
}

pub fn euler_characteristic_check(
    c: &TwistedCochainComplex,
    opts: RankOptions,
) -> Result<EulerReport, CohomologyError> {
    let twisted = euler_characteristic(&twisted_betti(c, opts)?);
    let trivial = build_torus_complex_with(c.n, c.m, &vec![0.0; c.n], &c.cuts, c.gauge)?;
    let untwisted = euler_characteristic(&twisted_betti(&trivial, opts)?);
    Ok(EulerReport {
        twisted,
        untwisted,
        passed: twisted == untwisted,
    })
}

/// Average of a `k`-cochain over all `m^n` grid translations. Only defined
/// for the trivial local system.
pub fn average_cochain(c: &TwistedCochainComplex, k: usize, a: &[f64]) -> Result<Vec<f64>, CohomologyError> {
    if let Some(axis) = c.weights.iter().position(|&w| w != 1.0) {
        return Err(CohomologyError::NontrivialWeights {
            axis,
            weight: c.weights[axis],
        });
    }
    if k > c.n || a.len() != c.dim(k) {
        return Err(CohomologyError::CochainLength {
            degree: k,
            got: a.len(),
            expected: if k > c.n { 0 } else { c.dim(k) },
        });
    }
    let per = binomial(c.n, k);
    let nv = c.vertices() as f64;
    // A slot that is already constant keeps its value bit for bit, so
    // averaging is exactly idempotent.
    let means: Vec<f64> = (0..per)
        .map(|s| {
            let first = a[s];
            if a.iter().skip(s).step_by(per).all(|&v| v == first) {
                first
            } else {
                a.iter().skip(s).step_by(per).sum::<f64>() / nv
            }
        })
        .collect();
    Ok((0..a.len()).map(|i| means[i % per]).collect())
}

/// The constant `k`-cochains, one per set of `k` axes: a basis of the
/// translation-invariant cochains.
pub fn invariant_basis(c: &TwistedCochainComplex, k: usize) -> Vec<Vec<f64>> {
    let per = binomial(c.n, k);
    (0..per)
        .map(|s| (0..c.dim(k)).map(|i| if i % per == s { 1.0 } else { 0.0 }).collect())
        .collect()
}

/// Conjugate gradients on `AᵀA x = Aᵀb`; returns the residual `b − A x`.
fn least_squares_residual(a: &SparseMatrix, b: &[f64], tol: f64, max_iter: usize) -> Vec<f64> {
    let mut x = vec![0.0; a.cols];
    let mut r = a.transpose_mul_vec(b);
    let mut p = r.clone();
    let dot = |u: &[f64], v: &[f64]| u.iter().zip(v).map(|(x, y)| x * y).sum::<f64>();
    let mut rr = dot(&r, &r);
    let stop = tol * tol * rr.max(f64::MIN_POSITIVE);
    for _ in 0..max_iter {
        if rr <= stop {
            break;
        }
        let ap = a.mul_vec(&p);
        let q = a.transpose_mul_vec(&ap);
        let step = rr / dot(&p, &q);
        for i in 0..x.len() {
            x[i] += step * p[i];
            r[i] -= step * q[i];
        }
        let next = dot(&r, &r);
        let beta = next / rr;
        rr = next;
        for i in 0..p.len() {
            p[i] = r[i] + beta * p[i];
        }
    }
    let ax = a.mul_vec(&x);
    b.iter().zip(&ax).map(|(u, v)| u - v).collect()
}

/// The contradiction skeleton behind non-exactness of a form that is
/// `d` of an invariant primitive on a fiber torus: the area 2-cochain on
/// axes 0, 1 is not a coboundary, while every translation-invariant
/// 1-cochain is a cocycle, so no invariant primitive can exist.
#[derive(Debug, Clone, PartialEq, serde::Serialize)]
pub struct ObstructionReport {
    pub n: usize,
    pub m: usize,
    /// `‖a − proj_{im D₁} a‖ / ‖a‖`.
    pub distance: f64,
    /// `max ‖D₁ b‖∞` over the invariant 1-cochain basis.
    pub invariant_coboundary: f64,
    pub checks: Vec<Check>,
}

impl ObstructionReport {
    pub fn passed(&self) -> bool {
        crate::check::all_passed(&self.checks)
    }
}

pub fn ot_obstruction_check(n: usize, m: usize) -> Result<ObstructionReport, CohomologyError> {
    if n < 2 {
        return Err(CohomologyError::BadParameter(format!("need n ≥ 2, got {n}")));
    }
    let c = build_torus_complex(n, m, &vec![0.0; n])?;
    let per = binomial(n, 2);
    let area_slot = c.subsets[2].iter().position(|s| s == &[0, 1]).expect("axes 0 and 1");
    let cell_area = 1.0 / (m * m) as f64;
    let area: Vec<f64> = (0..c.dim(2))
        .map(|i| if i % per == area_slot { cell_area } else { 0.0 })
        .collect();
    let norm = area.iter().map(|v| v * v).sum::<f64>().sqrt();
    let res = least_squares_residual(&c.d[1], &area, 1e-13, 20 * c.dim(1));
    let distance = res.iter().map(|v| v * v).sum::<f64>().sqrt() / norm;
    let invariant_coboundary = invariant_basis(&c, 1)
        .iter()
        .map(|b| c.d[1].mul_vec(b).into_iter().fold(0.0f64, |acc, v| acc.max(v.abs())))
        .fold(0.0, f64::max);
    let mut not_exact = Check::residual("area-not-exact", "[dx∧dy] ≠ 0 in H²(T^n)", distance, 0.1);
    not_exact.passed = distance > 0.1;
    not_exact.detail = Some(format!("normalized distance from im D₁: {distance:.6}"));
    let mut closed = Check::residual("invariant-closed", "D₁ b = 0 for invariant b", invariant_coboundary, 0.0);
    closed.passed = invariant_coboundary == 0.0;
    let no_primitive = Check::flag(
        "no-invariant-primitive",
        "Φ̂|T = d(∫α̂|T) impossible",
        not_exact.passed && closed.passed,
        "the area class is nonzero while invariant primitives have zero coboundary",
    );
    Ok(ObstructionReport {
        n,
        m,
        distance,
        invariant_coboundary,
        checks: vec![not_exact, closed, no_primitive]
            .into_iter()
            .map(|ch| ch.prefixed(&format!("obstruction(n={n},m={m})")))
            .collect(),
    })
}

/// Averaging over translations on a trivial-weight torus: exactly
/// idempotent, translation invariant, and a chain map up to rounding.
pub fn averaging_checks(n: usize, m: usize, seed: u64) -> Result<Vec<Check>, CohomologyError> {
    use rand::{Rng, SeedableRng};
    let c = build_torus_complex(n, m, &vec![0.0; n])?;
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    let prefix = format!("averaging(n={n},m={m})");
    let mut out = Vec::new();
    let (mut idem, mut invariant, mut chain) = (0.0f64, 0.0f64, 0.0f64);
    for k in 0..=n {
        let a: Vec<f64> = (0..c.dim(k)).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let avg = average_cochain(&c, k, &a)?;
        let again = average_cochain(&c, k, &avg)?;
        idem = idem.max(avg.iter().zip(&again).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max));
        let per = binomial(n, k);
        invariant = invariant.max((0..avg.len()).map(|i| (avg[i] - avg[i % per]).abs()).fold(0.0, f64::max));
        if k < n {
            let lhs = c.d[k].mul_vec(&avg);
            let rhs = average_cochain(&c, k + 1, &c.d[k].mul_vec(&a))?;
            chain = chain.max(lhs.iter().zip(&rhs).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max));
        }
    }
    let mut check = Check::residual("idempotent", "A∘A = A", idem, 0.0);
    check.passed = idem == 0.0;
    out.push(check);
    let mut check = Check::residual("invariant", "A a is translation invariant", invariant, 0.0);
    check.passed = invariant == 0.0;
    out.push(check);
    out.push(Check::residual("chain-map", "D A = A D", chain, 1e-12));
    Ok(out.into_iter().map(|ch| ch.prefixed(&prefix)).collect())
}

/// Betti numbers at resolution `m` against `2m`.
pub fn refinement_check(n: usize, m: usize, mu: &[f64], opts: RankOptions) -> Result<Check, CohomologyError> {
    let coarse = twisted_betti(&build_torus_complex(n, m, mu)?, opts)?;
    let fine = twisted_betti(&build_torus_complex(n, 2 * m, mu)?, opts)?;
    Ok(Check::flag(
        "refinement-stable",
        "b(m) = b(2m)",
        coarse == fine,
        format!("m={m}: {coarse:?}, m={}: {fine:?}", 2 * m),
    )
    .prefixed(&format!("torus(n={n},mu={mu:?})")))
}

/// Betti numbers with the structural checks that accompany them.
#[derive(Debug, Clone, PartialEq, serde::Serialize)]
pub struct CohomologyReport {
    pub n: usize,
    pub m: usize,
    pub mu: Vec<f64>,
    pub betti: Vec<usize>,
    pub euler: EulerReport,
    pub checks: Vec<Check>,
}

/// Builds the complex and certifies `D² = 0`, the Euler characteristic,
/// the vanishing of `b⁰` and `bⁿ` for nontrivial holonomy (binomial Betti
/// numbers otherwise), and agreement with the uniform gauge and with a
/// shifted cut.
pub fn analyze_torus(n: usize, m: usize, mu: &[f64], opts: RankOptions) -> Result<CohomologyReport, CohomologyError> {
    let c = build_torus_complex(n, m, mu)?;
    let betti = twisted_betti(&c, opts)?;
    let euler = euler_characteristic_check(&c, opts)?;
    let prefix = format!("torus(n={n},m={m},mu={mu:?})");
    let mut checks = vec![Check::residual("d-squared", "D_{k+1} D_k = 0", c.square_defect(), f64::MIN_POSITIVE)];
    checks[0].passed = checks[0].max_residual == 0.0;
    let mut e = Check::flag(
        "euler",
        "χ(H_ω) = χ(M)",
        euler.passed,
        format!("twisted {}, untwisted {}", euler.twisted, euler.untwisted),
    );
    e.passed = euler.passed;
    checks.push(e);
    if c.trivial() {
        let expected: Vec<usize> = (0..=n).map(|k| binomial(n, k)).collect();
        checks.push(Check::flag(
            "binomial",
            "b^k(T^n) = C(n,k)",
            betti == expected,
            format!("{betti:?}"),
        ));
    } else {
        checks.push(Check::flag(
            "vanishing-ends",
            "H⁰_ω = H^top_ω = 0",
            betti[0] == 0 && betti[n] == 0,
            format!("{betti:?}"),
        ));
    }
    let uniform = build_torus_complex_with(n, m, mu, &vec![m - 1; n], Gauge::Uniform)?;
    let shifted = build_torus_complex_with(n, m, mu, &vec![0; n], Gauge::Cut)?;
    let bu = twisted_betti(&uniform, opts)?;
    let bs = twisted_betti(&shifted, opts)?;
    checks.push(Check::flag(
        "gauge-invariant",
        "H(t_j on cut edges) ≅ H(t_j^{1/m} on all edges)",
        bu == betti,
        format!("{bu:?}"),
    ));
    checks.push(Check::flag(
        "cut-invariant",
        "H independent of cut placement",
        bs == betti,
        format!("{bs:?}"),
    ));
    Ok(CohomologyReport {
        n,
        m,
        mu: mu.to_vec(),
        betti,
        euler,
        checks: checks.into_iter().map(|ch| ch.prefixed(&prefix)).collect(),
    })
}
