//! Exact arithmetic and linear algebra over the prime field Z_p.
//!
//! Elements are stored as their natural representative in `0..p`. The modulus
//! must fit in a `u64`; every product goes through a `u128` intermediate so no
//! operation can overflow for any word-sized prime.

use std::fmt;

use crate::error::{Error, Result};

/// Deterministic Miller-Rabin for 64-bit integers.
pub fn is_prime(n: u64) -> bool {
    if n < 2 {
        return false;
    }
    const SMALL: [u64; 12] = [2, 3, 5, 7, 11, 13, 17, 19, 23, 29, 31, 37];
    for &q in &SMALL {
        if n % q == 0 {
            return n == q;
        }
    }
    let mut d = n - 1;
    let mut s = 0;
    while d % 2 == 0 {
        d /= 2;
        s += 1;
    }
    'witness: for &a in &SMALL {
        let mut x = pow_mod(a, d, n);
        if x == 1 || x == n - 1 {
            continue;
        }
        for _ in 1..s {
            x = mul_mod(x, x, n);
            if x == n - 1 {
                continue 'witness;
            }
        }
        return false;
    }
    true
}

#[inline]
fn mul_mod(a: u64, b: u64, m: u64) -> u64 {
    ((a as u128 * b as u128) % m as u128) as u64
}

fn pow_mod(mut base: u64, mut exp: u64, m: u64) -> u64 {
    let mut acc = 1u64 % m;
    base %= m;
    while exp > 0 {
        if exp & 1 == 1 {
            acc = mul_mod(acc, base, m);
        }
        base = mul_mod(base, base, m);
        exp >>= 1;
    }
    acc
}

/// The field Z_p for a prime `p`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct PrimeField {
    p: u64,
}

impl PrimeField {
    pub fn new(p: u64) -> Result<Self> {
        if !is_prime(p) {
            return Err(Error::NotPrime(p));
        }
        Ok(Self { p })
    }

    #[inline]
    pub fn modulus(&self) -> u64 {
        self.p
    }

    /// Maps an integer onto Z_p: the unique `u` in `0..p` with `u ≡ z (mod p)`.
    #[inline]
    pub fn natural_map(&self, z: i64) -> u64 {
        (z as i128).rem_euclid(self.p as i128) as u64
    }

    /// Centered representative of `u` in `[-p/2, p/2)`.
    #[inline]
    pub fn centered(&self, u: u64) -> i64 {
        if 2 * (u as u128) >= self.p as u128 {
            u as i64 - self.p as i64
        } else {
            u as i64
        }
    }

    #[inline]
    pub fn add(&self, a: u64, b: u64) -> u64 {
        ((a as u128 + b as u128) % self.p as u128) as u64
    }

    #[inline]
    pub fn sub(&self, a: u64, b: u64) -> u64 {
        self.add(a, self.p - b % self.p)
    }

    #[inline]
    pub fn neg(&self, a: u64) -> u64 {
        if a == 0 {
            0
        } else {
            self.p - a
        }
    }

    #[inline]
    pub fn mul(&self, a: u64, b: u64) -> u64 {
        mul_mod(a, b, self.p)
    }

    /// Multiplicative inverse by Fermat; `None` for zero.
    pub fn inv(&self, a: u64) -> Option<u64> {
        let a = a % self.p;
        if a == 0 {
            None
        } else {
            Some(pow_mod(a, self.p - 2, self.p))
        }
    }
}

/// Dense row-major matrix over Z_p.
#[derive(Clone, PartialEq, Eq)]
pub struct FieldMatrix {
    field: PrimeField,
    rows: usize,
    cols: usize,
    data: Vec<u64>,
}

impl fmt::Debug for FieldMatrix {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "FieldMatrix(p={}) [", self.field.p)?;
        for r in 0..self.rows {
            if r > 0 {
                write!(f, "; ")?;
            }
            write!(f, "{:?}", self.row(r))?;
        }
        write!(f, "]")
    }
}

impl FieldMatrix {
    pub fn zeros(field: PrimeField, rows: usize, cols: usize) -> Self {
        Self { field, rows, cols, data: vec![0; rows * cols] }
    }

    pub fn identity(field: PrimeField, n: usize) -> Self {
        let mut m = Self::zeros(field, n, n);
        for i in 0..n {
            m.data[i * n + i] = 1;
        }
        m
    }

    /// Builds a matrix from integer rows, reducing every entry with the natural map.
    pub fn from_integer_rows<R: AsRef<[i64]>>(field: PrimeField, rows: &[R]) -> Result<Self> {
        let cols = rows.first().map_or(0, |r| r.as_ref().len());
        let mut data = Vec::with_capacity(rows.len() * cols);
        for r in rows {
            let r = r.as_ref();
            if r.len() != cols {
                return Err(Error::DimensionMismatch { expected: cols, found: r.len() });
            }
            data.extend(r.iter().map(|&z| field.natural_map(z)));
        }
        Ok(Self { field, rows: rows.len(), cols, data })
    }

    pub fn field(&self) -> PrimeField {
        self.field
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    #[inline]
    pub fn get(&self, r: usize, c: usize) -> u64 {
        self.data[r * self.cols + c]
    }

    #[inline]
    pub fn set(&mut self, r: usize, c: usize, value: u64) {
        self.data[r * self.cols + c] = value % self.field.p;
    }

    pub fn row(&self, r: usize) -> &[u64] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    /// Submatrix made of the listed rows, in the given order.
    pub fn select_rows(&self, idx: &[usize]) -> Self {
        let mut data = Vec::with_capacity(idx.len() * self.cols);
        for &r in idx {
            data.extend_from_slice(self.row(r));
        }
        Self { field: self.field, rows: idx.len(), cols: self.cols, data }
    }

    /// Reduces `self` in place to row echelon form and returns the rank.
    /// Pivots are the first nonzero entry in column order.
    fn echelon(&mut self) -> usize {
        let f = self.field;
        let mut rank = 0;
        for c in 0..self.cols {
            if rank == self.rows {
                break;
            }
            let Some(pivot) = (rank..self.rows).find(|&r| self.get(r, c) != 0) else {
                continue;
            };
            self.swap_rows(pivot, rank);
            let inv = f.inv(self.get(rank, c)).expect("pivot is nonzero");
            for r in rank + 1..self.rows {
                let factor = f.mul(self.get(r, c), inv);
                if factor != 0 {
                    for k in c..self.cols {
                        let v = f.sub(self.get(r, k), f.mul(factor, self.get(rank, k)));
                        self.data[r * self.cols + k] = v;
                    }
                }
            }
            rank += 1;
        }
        rank
    }

    fn swap_rows(&mut self, a: usize, b: usize) {
        if a != b {
            for k in 0..self.cols {
                self.data.swap(a * self.cols + k, b * self.cols + k);
            }
        }
    }

    /// Row rank over Z_p.
    pub fn rank(&self) -> usize {
        self.clone().echelon()
    }

    /// Gauss-Jordan inverse over Z_p.
    pub fn invert(&self) -> Result<Self> {
        if self.rows != self.cols {
            return Err(Error::DimensionMismatch { expected: self.rows, found: self.cols });
        }
        let n = self.rows;
        let f = self.field;
        let mut aug = Self::zeros(f, n, 2 * n);
        for r in 0..n {
            for c in 0..n {
                aug.data[r * 2 * n + c] = self.get(r, c);
            }
            aug.data[r * 2 * n + n + r] = 1;
        }
        for c in 0..n {
            let pivot = (c..n).find(|&r| aug.get(r, c) != 0).ok_or(Error::SingularMatrix)?;
            aug.swap_rows(pivot, c);
            let inv = f.inv(aug.get(c, c)).expect("pivot is nonzero");
            for k in 0..2 * n {
                let v = f.mul(aug.get(c, k), inv);
                aug.data[c * 2 * n + k] = v;
            }
            for r in 0..n {
                let factor = aug.get(r, c);
                if r != c && factor != 0 {
                    for k in 0..2 * n {
                        let v = f.sub(aug.get(r, k), f.mul(factor, aug.get(c, k)));
                        aug.data[r * 2 * n + k] = v;
                    }
                }
            }
        }
        let mut out = Self::zeros(f, n, n);
        for r in 0..n {
            out.data[r * n..(r + 1) * n].copy_from_slice(&aug.data[r * 2 * n + n..(r + 1) * 2 * n]);
        }
        Ok(out)
    }

    pub fn matvec(&self, v: &[u64]) -> Result<Vec<u64>> {
        if v.len() != self.cols {
            return Err(Error::DimensionMismatch { expected: self.cols, found: v.len() });
        }
        let f = self.field;
        Ok((0..self.rows)
            .map(|r| {
                self.row(r)
                    .iter()
                    .zip(v)
                    .fold(0, |acc, (&a, &b)| f.add(acc, f.mul(a, b % f.p)))
            })
            .collect())
    }

    pub fn matmul(&self, other: &Self) -> Result<Self> {
        if self.cols != other.rows {
            return Err(Error::DimensionMismatch { expected: self.cols, found: other.rows });
        }
        let f = self.field;
        let mut out = Self::zeros(f, self.rows, other.cols);
        for r in 0..self.rows {
            for c in 0..other.cols {
                let mut acc = 0u64;
                for k in 0..self.cols {
                    acc = f.add(acc, f.mul(self.get(r, k), other.get(k, c)));
                }
                out.data[r * other.cols + c] = acc;
            }
        }
        Ok(out)
    }
}

/// Incremental row space over Z_p, kept in echelon form.
///
/// Used to answer "does adding this row increase the rank?" in O(L²) per query.
#[derive(Debug, Clone)]
pub struct RowSpace {
    field: PrimeField,
    dim: usize,
    // (pivot column, normalized row with 1 at the pivot)
    basis: Vec<(usize, Vec<u64>)>,
}

impl RowSpace {
    pub fn new(field: PrimeField, dim: usize) -> Self {
        Self { field, dim, basis: Vec::new() }
    }

    pub fn rank(&self) -> usize {
        self.basis.len()
    }

    fn reduce(&self, row: &[u64]) -> Vec<u64> {
        let f = self.field;
        let mut v: Vec<u64> = row.iter().map(|&x| x % f.p).collect();
        for (pc, b) in &self.basis {
            let factor = v[*pc];
            if factor != 0 {
                for (x, &y) in v.iter_mut().zip(b) {
                    *x = f.sub(*x, f.mul(factor, y));
                }
            }
        }
        v
    }

    /// Whether `row` lies outside the current span.
    pub fn is_independent(&self, row: &[u64]) -> bool {
        self.reduce(row).iter().any(|&x| x != 0)
    }

    /// Adds `row` if it increases the rank; returns whether it did.
    pub fn insert(&mut self, row: &[u64]) -> bool {
        assert_eq!(row.len(), self.dim, "row length must match the space dimension");
        let f = self.field;
        let mut v = self.reduce(row);
        let Some(pc) = v.iter().position(|&x| x != 0) else {
            return false;
        };
        let inv = f.inv(v[pc]).expect("nonzero");
        for x in v.iter_mut() {
            *x = f.mul(*x, inv);
        }
        // keep the basis fully reduced at the new pivot column
        for (_, b) in self.basis.iter_mut() {
            let factor = b[pc];
            if factor != 0 {
                for (x, &y) in b.iter_mut().zip(&v) {
                    *x = f.sub(*x, f.mul(factor, y));
                }
            }
        }
        self.basis.push((pc, v));
        true
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn fm(p: u64, rows: &[&[i64]]) -> FieldMatrix {
        FieldMatrix::from_integer_rows(PrimeField::new(p).unwrap(), rows).unwrap()
    }

    fn random_matrix(rng: &mut ChaCha8Rng, field: PrimeField, rows: usize, cols: usize) -> FieldMatrix {
        let mut m = FieldMatrix::zeros(field, rows, cols);
        for r in 0..rows {
            for c in 0..cols {
                m.set(r, c, rng.random_range(0..field.modulus()));
            }
        }
        m
    }

    // Cofactor-expansion determinant over Z_p; independent of elimination.
    fn det_cofactor(m: &FieldMatrix) -> u64 {
        let f = m.field();
        let n = m.rows();
        if n == 0 {
            return 1;
        }
        if n == 1 {
            return m.get(0, 0);
        }
        let mut acc = 0;
        for c in 0..n {
            let mut minor = FieldMatrix::zeros(f, n - 1, n - 1);
            for r in 1..n {
                let mut cc = 0;
                for k in 0..n {
                    if k != c {
                        minor.set(r - 1, cc, m.get(r, k));
                        cc += 1;
                    }
                }
            }
            let term = f.mul(m.get(0, c), det_cofactor(&minor));
            acc = if c % 2 == 0 { f.add(acc, term) } else { f.sub(acc, term) };
        }
        acc
    }

    // Rank as the largest k with a nonzero k×k minor.
    fn rank_by_minors(m: &FieldMatrix) -> usize {
        fn subsets(n: usize, k: usize) -> Vec<Vec<usize>> {
            (0u32..1 << n)
                .filter(|s| s.count_ones() as usize == k)
                .map(|s| (0..n).filter(|i| s >> i & 1 == 1).collect())
                .collect()
        }
        let f = m.field();
        for k in (1..=m.rows().min(m.cols())).rev() {
            for rs in subsets(m.rows(), k) {
                for cs in subsets(m.cols(), k) {
                    let mut sub = FieldMatrix::zeros(f, k, k);
                    for (i, &r) in rs.iter().enumerate() {
                        for (j, &c) in cs.iter().enumerate() {
                            sub.set(i, j, m.get(r, c));
                        }
                    }
                    if det_cofactor(&sub) != 0 {
                        return k;
                    }
                }
            }
        }
        0
    }

    #[test]
    fn rejects_composites() {
        assert!(PrimeField::new(1).is_err());
        assert!(PrimeField::new(91).is_err());
        assert!(PrimeField::new(3_215_031_751).is_err()); // strong pseudoprime to bases 2,3,5,7
        assert!(PrimeField::new(251).is_ok());
        assert!(PrimeField::new(18_446_744_073_709_551_557).is_ok());
    }

    #[test]
    fn natural_map_examples() {
        let f5 = PrimeField::new(5).unwrap();
        assert_eq!(f5.natural_map(7), 2);
        assert_eq!(f5.natural_map(-1), 4);
        assert_eq!(PrimeField::new(251).unwrap().natural_map(251), 0);
    }

    #[test]
    fn large_prime_products_do_not_overflow() {
        let f = PrimeField::new(18_446_744_073_709_551_557).unwrap();
        let a = f.modulus() - 1;
        assert_eq!(f.mul(a, a), 1);
        assert_eq!(f.mul(a, f.inv(a).unwrap()), 1);
    }

    #[test]
    fn rank_examples() {
        assert_eq!(fm(5, &[&[1, 2], &[2, 4]]).rank(), 1);
        assert_eq!(fm(2, &[&[1, 1], &[1, 1]]).rank(), 1);

        let f17 = PrimeField::new(17).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        let mut tested = 0;
        while tested < 20 {
            let m = random_matrix(&mut rng, f17, 5, 5);
            if det_cofactor(&m) != 0 {
                assert_eq!(m.rank(), 5);
                tested += 1;
            } else {
                assert!(m.rank() < 5);
            }
        }
    }

    #[test]
    fn invert_examples() {
        let f5 = PrimeField::new(5).unwrap();
        let i3 = FieldMatrix::identity(f5, 3);
        assert_eq!(i3.invert().unwrap(), i3);
        assert_eq!(fm(5, &[&[2, 0], &[0, 3]]).invert().unwrap(), fm(5, &[&[3, 0], &[0, 2]]));

        let m = fm(7, &[&[1, 1], &[0, 1]]);
        let inv = m.invert().unwrap();
        assert_eq!(inv, fm(7, &[&[1, 6], &[0, 1]]));
        assert_eq!(m.matmul(&inv).unwrap(), FieldMatrix::identity(m.field(), 2));
    }

    #[test]
    fn invert_rejects_singular_and_non_square() {
        assert!(matches!(fm(5, &[&[1, 2], &[2, 4]]).invert(), Err(Error::SingularMatrix)));
        assert!(matches!(fm(5, &[&[1, 2, 3]]).invert(), Err(Error::DimensionMismatch { .. })));
    }

    #[test]
    fn matvec_examples() {
        let q = fm(5, &[&[1, 2], &[3, 4]]);
        let w = [1, 4];
        let mu = q.invert().unwrap().matvec(&w).unwrap();
        assert_eq!(q.matvec(&mu).unwrap(), w);
        assert_eq!(fm(2, &[&[1, 1]]).matvec(&[1, 1]).unwrap(), vec![0]);
        assert!(fm(2, &[&[1, 1]]).matvec(&[1]).is_err());
    }

    #[test]
    fn row_of_q_recovers_message_through_inverse() {
        let f17 = PrimeField::new(17).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(99);
        let q = loop {
            let m = random_matrix(&mut rng, f17, 5, 5);
            if m.rank() == 5 {
                break m;
            }
        };
        let qinv = q.invert().unwrap();
        for _ in 0..100 {
            let w: Vec<u64> = (0..5).map(|_| rng.random_range(0..17)).collect();
            let mu = qinv.matvec(&w).unwrap();
            for l in 0..5 {
                let single = q.select_rows(&[l]).matvec(&mu).unwrap();
                assert_eq!(single[0], w[l]);
            }
        }
    }

    #[test]
    fn inverse_round_trip_on_random_matrices() {
        for &p in &[2u64, 5, 17, 251] {
            let f = PrimeField::new(p).unwrap();
            let mut rng = ChaCha8Rng::seed_from_u64(p);
            let mut count = 0;
            while count < 100 {
                let n = rng.random_range(1..=6);
                let m = random_matrix(&mut rng, f, n, n);
                let Ok(inv) = m.invert() else {
                    assert!(m.rank() < n);
                    continue;
                };
                let id = FieldMatrix::identity(f, n);
                assert_eq!(m.matmul(&inv).unwrap(), id);
                assert_eq!(inv.matmul(&m).unwrap(), id);
                count += 1;
            }
        }
    }

    #[test]
    fn rank_matches_minor_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        for &p in &[2u64, 3, 5] {
            let f = PrimeField::new(p).unwrap();
            for _ in 0..150 {
                let rows = rng.random_range(1..=4);
                let cols = rng.random_range(1..=4);
                let m = random_matrix(&mut rng, f, rows, cols);
                assert_eq!(m.rank(), rank_by_minors(&m), "{m:?}");
            }
        }
    }

    #[test]
    fn row_space_tracks_rank() {
        let f = PrimeField::new(5).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        for _ in 0..100 {
            let m = random_matrix(&mut rng, f, 6, 3);
            let mut space = RowSpace::new(f, 3);
            for r in 0..6 {
                let before = m.select_rows(&(0..r).collect::<Vec<_>>()).rank();
                let after = m.select_rows(&(0..=r).collect::<Vec<_>>()).rank();
                assert_eq!(space.insert(m.row(r)), after > before);
                assert_eq!(space.rank(), after);
            }
        }
    }

    proptest! {
        #[test]
        fn natural_map_is_ring_homomorphism(a in -1_000_000i64..1_000_000, b in -1_000_000i64..1_000_000,
                                            pi in 0usize..4) {
            let p = [2u64, 5, 17, 251][pi];
            let f = PrimeField::new(p).unwrap();
            prop_assert_eq!(f.natural_map(a + b), f.add(f.natural_map(a), f.natural_map(b)));
            prop_assert_eq!(f.natural_map(a * b), f.mul(f.natural_map(a), f.natural_map(b)));
            prop_assert!(f.natural_map(a) < p);
        }
    }
}
