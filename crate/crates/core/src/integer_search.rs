//! Integer-coefficient optimization.
//!
//! Two problems share the same machinery:
//!
//! * per-user coefficients `a` minimizing `aᵀ(SNR⁻¹I + hhᵀ)⁻¹a`, a shortest
//!   vector problem in the lattice whose Gram matrix is that quadratic form;
//! * integer-forcing beamforming, where the columns of the unimodular matrix
//!   that LLL-reduces `H⁻¹` give short, linearly independent vectors `H⁻¹aₗ`.
//!
//! Reduction is textbook LLL on floating-point Gram-Schmidt data, tracking the
//! unimodular transform exactly in integers. Enumeration is depth-first with
//! Schnorr-Euchner zig-zag ordering.

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::zp_field::{FieldMatrix, PrimeField, RowSpace};

/// Dense row-major integer matrix.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct IntegerMatrix {
    rows: usize,
    cols: usize,
    data: Vec<i64>,
}

impl IntegerMatrix {
    pub fn identity(n: usize) -> Self {
        let mut data = vec![0; n * n];
        for i in 0..n {
            data[i * n + i] = 1;
        }
        Self { rows: n, cols: n, data }
    }

    pub fn from_rows<R: AsRef<[i64]>>(rows: &[R]) -> Result<Self> {
        let cols = rows.first().map_or(0, |r| r.as_ref().len());
        let mut data = Vec::with_capacity(rows.len() * cols);
        for r in rows {
            let r = r.as_ref();
            if r.len() != cols {
                return Err(Error::DimensionMismatch { expected: cols, found: r.len() });
            }
            data.extend_from_slice(r);
        }
        Ok(Self { rows: rows.len(), cols, data })
    }

    pub fn from_columns<C: AsRef<[i64]>>(cols: &[C]) -> Result<Self> {
        Ok(Self::from_rows(cols)?.transpose())
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn get(&self, r: usize, c: usize) -> i64 {
        self.data[r * self.cols + c]
    }

    pub fn row(&self, r: usize) -> &[i64] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn column(&self, c: usize) -> Vec<i64> {
        (0..self.rows).map(|r| self.get(r, c)).collect()
    }

    pub fn row_vecs(&self) -> Vec<Vec<i64>> {
        (0..self.rows).map(|r| self.row(r).to_vec()).collect()
    }

    pub fn transpose(&self) -> Self {
        let mut data = Vec::with_capacity(self.data.len());
        for c in 0..self.cols {
            for r in 0..self.rows {
                data.push(self.get(r, c));
            }
        }
        Self { rows: self.cols, cols: self.rows, data }
    }

    pub fn to_f64(&self) -> DMatrix<f64> {
        DMatrix::from_fn(self.rows, self.cols, |r, c| self.get(r, c) as f64)
    }

    /// Exact determinant by fraction-free (Bareiss) elimination.
    pub fn determinant(&self) -> i128 {
        assert_eq!(self.rows, self.cols, "determinant of a non-square matrix");
        let n = self.rows;
        if n == 0 {
            return 1;
        }
        let mut m: Vec<Vec<i128>> = (0..n).map(|r| self.row(r).iter().map(|&v| v as i128).collect()).collect();
        let mut sign = 1;
        let mut prev = 1i128;
        for k in 0..n - 1 {
            if m[k][k] == 0 {
                let Some(swap) = (k + 1..n).find(|&r| m[r][k] != 0) else {
                    return 0;
                };
                m.swap(k, swap);
                sign = -sign;
            }
            for i in k + 1..n {
                for j in k + 1..n {
                    m[i][j] = (m[i][j] * m[k][k] - m[i][k] * m[k][j]) / prev;
                }
            }
            prev = m[k][k];
        }
        sign * m[n - 1][n - 1]
    }
}

/// Lattice generated by the columns of a real matrix.
#[derive(Debug, Clone)]
pub struct LatticeBasis {
    generator: DMatrix<f64>,
}

impl LatticeBasis {
    pub fn new(generator: DMatrix<f64>) -> Result<Self> {
        let (rows, cols) = generator.shape();
        if cols == 0 || rows < cols {
            return Err(Error::DegenerateBasis(0.0));
        }
        let mut normalized = generator.clone();
        for mut col in normalized.column_iter_mut() {
            let n = col.norm();
            if !(n.is_finite() && n > 0.0) {
                return Err(Error::DegenerateBasis(0.0));
            }
            col /= n;
        }
        let smallest = normalized.singular_values().min();
        if !(smallest > 1e-10) {
            return Err(Error::DegenerateBasis(smallest));
        }
        Ok(Self { generator })
    }

    pub fn generator(&self) -> &DMatrix<f64> {
        &self.generator
    }

    pub fn dim(&self) -> usize {
        self.generator.ncols()
    }

    /// Lattice point `generator · z`.
    pub fn point(&self, z: &[i64]) -> Vec<f64> {
        let v = &self.generator * nalgebra::DVector::from_iterator(z.len(), z.iter().map(|&x| x as f64));
        v.iter().copied().collect()
    }

    pub fn norm_sq(&self, z: &[i64]) -> f64 {
        self.point(z).iter().map(|x| x * x).sum()
    }
}

#[derive(Debug, Clone)]
pub struct LllOutput {
    /// `generator · unimodular`, recomputed from the exact transform.
    pub reduced: DMatrix<f64>,
    pub unimodular: IntegerMatrix,
}

struct Gso {
    mu: Vec<Vec<f64>>,
    norms: Vec<f64>,
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn gram_schmidt(b: &[Vec<f64>]) -> Gso {
    let n = b.len();
    let mut star: Vec<Vec<f64>> = Vec::with_capacity(n);
    let mut mu = vec![vec![0.0; n]; n];
    let mut norms = vec![0.0; n];
    for i in 0..n {
        let mut v = b[i].clone();
        for j in 0..i {
            mu[i][j] = dot(&b[i], &star[j]) / norms[j];
            for (x, s) in v.iter_mut().zip(&star[j]) {
                *x -= mu[i][j] * s;
            }
        }
        norms[i] = dot(&v, &v);
        star.push(v);
    }
    Gso { mu, norms }
}

/// LLL-reduces the columns of `basis` with Lovász parameter `delta ∈ (1/4, 1)`.
pub fn lll_reduce(basis: &LatticeBasis, delta: f64) -> Result<LllOutput> {
    if !(delta > 0.25 && delta < 1.0) {
        return Err(Error::InvalidParameter(format!("LLL delta must lie in (1/4, 1), got {delta}")));
    }
    let g = basis.generator();
    let n = g.ncols();
    let mut b: Vec<Vec<f64>> = g.column_iter().map(|c| c.iter().copied().collect()).collect();
    let mut u: Vec<Vec<i64>> = (0..n).map(|i| (0..n).map(|j| i64::from(i == j)).collect()).collect();
    let mut gso = gram_schmidt(&b);

    let mut k = 1;
    let mut iterations = 0usize;
    while k < n {
        iterations += 1;
        if iterations > 100_000 * n * n {
            return Err(Error::DegenerateBasis(0.0));
        }
        for j in (0..k).rev() {
            let r = gso.mu[k][j].round();
            if r != 0.0 && gso.mu[k][j].abs() > 0.5 {
                let ri = r as i64;
                let (bj, uj) = (b[j].clone(), u[j].clone());
                for (x, y) in b[k].iter_mut().zip(&bj) {
                    *x -= r * y;
                }
                for (x, y) in u[k].iter_mut().zip(&uj) {
                    *x -= ri * y;
                }
                for i in 0..j {
                    gso.mu[k][i] -= r * gso.mu[j][i];
                }
                gso.mu[k][j] -= r;
            }
        }
        let m = gso.mu[k][k - 1];
        if gso.norms[k] >= (delta - m * m) * gso.norms[k - 1] {
            k += 1;
        } else {
            b.swap(k, k - 1);
            u.swap(k, k - 1);
            gso = gram_schmidt(&b);
            k = (k - 1).max(1);
        }
    }
    let unimodular = IntegerMatrix::from_columns(&u)?;
    let reduced = g * unimodular.to_f64();
    Ok(LllOutput { reduced, unimodular })
}

/// Checks the size-reduction and Lovász conditions on the columns of `m`.
pub fn is_lll_reduced(m: &DMatrix<f64>, delta: f64, tol: f64) -> bool {
    let b: Vec<Vec<f64>> = m.column_iter().map(|c| c.iter().copied().collect()).collect();
    let gso = gram_schmidt(&b);
    let n = b.len();
    for i in 1..n {
        for j in 0..i {
            if gso.mu[i][j].abs() > 0.5 + tol {
                return false;
            }
        }
        let mm = gso.mu[i][i - 1];
        if gso.norms[i] < (delta - mm * mm) * gso.norms[i - 1] * (1.0 - tol) {
            return false;
        }
    }
    true
}

/// Flips the sign so the first nonzero entry is positive.
pub fn canonical_sign(z: &mut [i64]) {
    if z.iter().find(|&&x| x != 0).is_some_and(|&x| x < 0) {
        z.iter_mut().for_each(|x| *x = -*x);
    }
}

/// Upper-triangular factor `R` with `‖Bz‖² = ‖Rz‖²`.
fn gram_factor(basis: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let gram = basis.transpose() * basis;
    let chol = gram.cholesky().ok_or(Error::DegenerateBasis(0.0))?;
    Ok(chol.l().transpose())
}

/// Depth-first enumeration of nonzero `z` with `‖Bz‖² ≤ radius_sq`, one
/// representative per `±z` pair. The visitor may shrink the radius by
/// returning a smaller bound.
fn enumerate<F>(basis: &DMatrix<f64>, radius_sq: f64, mut visit: F) -> Result<()>
where
    F: FnMut(&[i64], f64) -> f64,
{
    let r = gram_factor(basis)?;
    let n = r.ncols();
    let mut z = vec![0i64; n];
    let mut bound = radius_sq;
    descend(&r, n - 1, 0.0, &mut z, &mut bound, true, &mut visit);
    Ok(())
}

fn descend<F>(r: &DMatrix<f64>, level: usize, partial: f64, z: &mut [i64], bound: &mut f64, upper_zero: bool, visit: &mut F)
where
    F: FnMut(&[i64], f64) -> f64,
{
    let n = r.ncols();
    let rii = r[(level, level)];
    let center = -(level + 1..n).map(|j| r[(level, j)] * z[j] as f64).sum::<f64>() / rii;
    let contribution = |x: i64| {
        let d = rii * (x as f64 - center);
        d * d
    };
    let slack = |b: f64| b * (1.0 + 1e-10) + 1e-300;

    // Schnorr-Euchner order: nearest integer to the center, then alternate outward.
    let start = center.round() as i64;
    let mut up = start;
    let mut down = start - 1;
    let mut up_open = true;
    let mut down_open = true;
    while up_open || down_open {
        let take_up = match (up_open, down_open) {
            (true, true) => (up as f64 - center).abs() <= (center - down as f64).abs(),
            (u, _) => u,
        };
        let x = if take_up { up } else { down };
        let total = partial + contribution(x);
        if total > slack(*bound) {
            if take_up {
                up_open = false;
            } else {
                down_open = false;
            }
            continue;
        }
        if take_up {
            up += 1;
        } else {
            down -= 1;
        }
        // with every higher coordinate zero, keep only x ≥ 0 to skip the -z twin
        if upper_zero && x < 0 {
            continue;
        }
        z[level] = x;
        if level == 0 {
            if z.iter().any(|&v| v != 0) {
                *bound = visit(z, total);
            }
        } else {
            descend(r, level - 1, total, z, bound, upper_zero && x == 0, visit);
        }
        z[level] = 0;
    }
}

/// All nonzero lattice points within `radius`, sign-canonicalized, sorted by
/// norm then lexicographically.
pub fn short_vectors(basis: &LatticeBasis, radius: f64) -> Result<Vec<(Vec<i64>, f64)>> {
    let mut out = Vec::new();
    enumerate(basis.generator(), radius * radius, |z, norm| {
        let mut v = z.to_vec();
        canonical_sign(&mut v);
        out.push((v, norm));
        radius * radius
    })?;
    sort_candidates(&mut out);
    Ok(out)
}

fn sort_candidates(c: &mut [(Vec<i64>, f64)]) {
    c.sort_by(|a, b| a.1.total_cmp(&b.1).then_with(|| a.0.cmp(&b.0)));
}

/// Picks the minimum-norm candidate; norms within a relative `1e-9` tie and
/// the lexicographically smallest vector wins.
fn pick_min(mut c: Vec<(Vec<i64>, f64)>) -> Option<Vec<i64>> {
    let best = c.iter().map(|x| x.1).fold(f64::INFINITY, f64::min);
    c.retain(|x| x.1 <= best * (1.0 + 1e-9) + 1e-300);
    c.into_iter().map(|x| x.0).min()
}

/// Shortest nonzero lattice vector within `radius`, by enumeration with a
/// shrinking radius.
pub fn shortest_vector_enumerate(basis: &LatticeBasis, radius: f64) -> Result<Vec<i64>> {
    let mut found: Vec<(Vec<i64>, f64)> = Vec::new();
    enumerate(basis.generator(), radius * radius, |z, norm| {
        let mut v = z.to_vec();
        canonical_sign(&mut v);
        found.push((v, norm));
        let best = found.iter().map(|x| x.1).fold(f64::INFINITY, f64::min);
        best.min(radius * radius)
    })?;
    pick_min(found).ok_or(Error::EmptySphere(radius))
}

/// Knobs for coefficient search.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SearchOptions {
    /// Lovász parameter for LLL.
    pub delta: f64,
    /// Refine the LLL result by sphere enumeration when the dimension is at most this.
    pub enumerate_max_dim: usize,
}

impl Default for SearchOptions {
    fn default() -> Self {
        Self { delta: 0.75, enumerate_max_dim: 8 }
    }
}

/// Generator `B` with `‖Ba‖² = aᵀ(SNR⁻¹I + hhᵀ)⁻¹a`.
///
/// The Gram matrix is formed from the rank-one identity
/// `(SNR⁻¹I + hhᵀ)⁻¹ = snr·I − snr²hhᵀ/(1 + snr‖h‖²)`, so nothing is inverted.
fn qcof_lattice(h: &[f64], snr: f64) -> Result<LatticeBasis> {
    let n = h.len();
    let hh: f64 = h.iter().map(|x| x * x).sum();
    let c = snr * snr / (1.0 + snr * hh);
    let gram = DMatrix::from_fn(n, n, |i, j| if i == j { snr } else { 0.0 } - c * h[i] * h[j]);
    let chol = gram.cholesky().ok_or(Error::DegenerateBasis(0.0))?;
    let l = chol.l();
    let min_pivot = (0..n).map(|i| l[(i, i)] * l[(i, i)] / snr).fold(f64::INFINITY, f64::min);
    if !(min_pivot > 1e-12) {
        return Err(Error::DegenerateBasis(min_pivot));
    }
    LatticeBasis::new(l.transpose())
}

fn nonzero_mod(a: &[i64], field: PrimeField) -> bool {
    a.iter().any(|&x| field.natural_map(x) != 0)
}

/// Candidate coefficient vectors for user channel `h`, ordered by effective
/// variance, all nonzero modulo `p`. Returns at least `count` candidates unless
/// the search radius cap is reached.
pub fn qcof_candidates(h: &[f64], snr: f64, field: PrimeField, count: usize, opts: SearchOptions) -> Result<Vec<(Vec<i64>, f64)>> {
    let basis = qcof_lattice(h, snr)?;
    let lll = lll_reduce(&basis, opts.delta)?;
    let reduced = LatticeBasis::new(lll.reduced.clone())?;
    let u = &lll.unimodular;
    let n = h.len();

    let to_coeffs = |z: &[i64]| -> Vec<i64> {
        let mut a: Vec<i64> = (0..n).map(|r| (0..n).map(|c| u.get(r, c) * z[c]).sum()).collect();
        canonical_sign(&mut a);
        a
    };

    // shortest reduced column that survives mod p; one always exists because U is unimodular
    let seed_norm = (0..n)
        .map(|c| {
            let mut z = vec![0; n];
            z[c] = 1;
            (to_coeffs(&z), reduced.norm_sq(&z))
        })
        .filter(|(a, _)| nonzero_mod(a, field))
        .map(|(_, v)| v)
        .fold(f64::INFINITY, f64::min);

    if n > opts.enumerate_max_dim {
        let mut cols: Vec<(Vec<i64>, f64)> = (0..n)
            .map(|c| {
                let mut z = vec![0; n];
                z[c] = 1;
                let a = to_coeffs(&z);
                let v = crate::effective_noise::effective_variance(h, &a, snr);
                (a, v)
            })
            .filter(|(a, _)| nonzero_mod(a, field))
            .collect();
        sort_candidates(&mut cols);
        cols.truncate(count.max(1));
        return Ok(cols);
    }

    let mut radius_sq = seed_norm;
    for _ in 0..12 {
        let mut found = Vec::new();
        enumerate(reduced.generator(), radius_sq, |z, _| {
            found.push(to_coeffs(z));
            radius_sq
        })?;
        let mut scored: Vec<(Vec<i64>, f64)> = found
            .into_iter()
            .filter(|a| nonzero_mod(a, field))
            .map(|a| {
                let v = crate::effective_noise::effective_variance(h, &a, snr);
                (a, v)
            })
            .collect();
        if scored.len() >= count || count == 1 && !scored.is_empty() {
            sort_candidates(&mut scored);
            scored.truncate(count);
            return Ok(scored);
        }
        radius_sq *= 2.0;
    }
    Err(Error::EmptySphere(radius_sq.sqrt()))
}

/// Integer vector minimizing `aᵀ(SNR⁻¹I + hhᵀ)⁻¹a` over `a` with `[a] mod p ≠ 0`.
pub fn best_coeff_qcof(h: &[f64], snr: f64, field: PrimeField, opts: SearchOptions) -> Result<Vec<i64>> {
    if h.iter().all(|&x| x == 0.0) {
        return Err(Error::InvalidParameter("channel vector is zero".into()));
    }
    let cands = qcof_candidates(h, snr, field, 1, opts)?;
    let best = cands[0].1;
    // resolve numerical near-ties by the lexicographic rule
    let ties: Vec<(Vec<i64>, f64)> = cands.into_iter().filter(|c| c.1 <= best * (1.0 + 1e-9)).collect();
    pick_min(ties).ok_or(Error::EmptySphere(0.0))
}

/// Integer coefficient matrix `A` together with its reduction `Q = [A] mod p`.
#[derive(Debug, Clone, PartialEq)]
pub struct IntegerCoeffMatrix {
    pub a: IntegerMatrix,
    pub q: FieldMatrix,
    pub full_rank: bool,
}

impl IntegerCoeffMatrix {
    pub fn new(a: IntegerMatrix, field: PrimeField) -> Result<Self> {
        let q = FieldMatrix::from_integer_rows(field, &a.row_vecs())?;
        let full_rank = q.rank() == a.rows().min(a.cols());
        Ok(Self { a, q, full_rank })
    }

    /// Coefficient vector of row `l`.
    pub fn row(&self, l: usize) -> &[i64] {
        self.a.row(l)
    }
}

/// Integer-forcing beamforming coefficients.
///
/// LLL-reduces the lattice generated by `H⁻¹`, giving `F = H⁻¹U` with short
/// columns, and returns `A = U`. The beamformer `W = H⁻¹A` then has columns
/// `H⁻¹aₗ` (with `aₗ` the columns of `A`) and the effective channel is
/// `HW = A`, so UT `l` decodes with row `l` of `A`.
pub fn ifbf_coeffs(h: &DMatrix<f64>, field: PrimeField, delta: f64) -> Result<IntegerCoeffMatrix> {
    if !h.is_square() {
        return Err(Error::DimensionMismatch { expected: h.nrows(), found: h.ncols() });
    }
    let basis = LatticeBasis::new(h.clone()).map_err(|_| Error::SingularChannel)?;
    let inv = basis.generator().clone().try_inverse().ok_or(Error::SingularChannel)?;
    let lattice = LatticeBasis::new(inv).map_err(|_| Error::SingularChannel)?;
    let lll = lll_reduce(&lattice, delta)?;
    IntegerCoeffMatrix::new(lll.unimodular, field)
}

/// `maxₗ ‖H⁻¹aₗ‖²` over the columns `aₗ` of `a`.
pub fn max_beam_norm_sq(h: &DMatrix<f64>, a: &IntegerMatrix) -> Result<f64> {
    let inv = h.clone().try_inverse().ok_or(Error::SingularChannel)?;
    let w = inv * a.to_f64();
    Ok(w.column_iter().map(|c| c.norm_squared()).fold(0.0, f64::max))
}

/// Per-user coefficients, chosen independently by each user.
pub fn independent_coeffs(channels: &[Vec<f64>], snr: f64, field: PrimeField, opts: SearchOptions) -> Result<IntegerCoeffMatrix> {
    let rows = channels
        .iter()
        .map(|h| best_coeff_qcof(h, snr, field, opts))
        .collect::<Result<Vec<_>>>()?;
    IntegerCoeffMatrix::new(IntegerMatrix::from_rows(&rows)?, field)
}

/// Per-user coefficients with a joint full-rank repair.
///
/// Users are visited in order of increasing best effective variance; each takes
/// its best candidate that keeps the rows independent over Z_p, trying at most
/// `budget` candidates. Fails with `RankDeficient` if some user runs out.
pub fn coordinated_coeffs(channels: &[Vec<f64>], snr: f64, field: PrimeField, budget: usize, opts: SearchOptions) -> Result<IntegerCoeffMatrix> {
    let n = channels.first().map_or(0, Vec::len);
    let candidates = channels
        .iter()
        .map(|h| qcof_candidates(h, snr, field, budget, opts))
        .collect::<Result<Vec<_>>>()?;
    let mut order: Vec<usize> = (0..channels.len()).collect();
    order.sort_by(|&i, &j| candidates[i][0].1.total_cmp(&candidates[j][0].1).then(i.cmp(&j)));

    let mut space = RowSpace::new(field, n);
    let mut rows = vec![Vec::new(); channels.len()];
    for &user in &order {
        let pick = candidates[user].iter().find(|(a, _)| {
            let q: Vec<u64> = a.iter().map(|&x| field.natural_map(x)).collect();
            space.is_independent(&q)
        });
        let Some((a, _)) = pick else {
            return Err(Error::RankDeficient { rank: space.rank(), needed: channels.len().min(n) });
        };
        let q: Vec<u64> = a.iter().map(|&x| field.natural_map(x)).collect();
        space.insert(&q);
        rows[user] = a.clone();
    }
    IntegerCoeffMatrix::new(IntegerMatrix::from_rows(&rows)?, field)
}
