//! User selection under the full-rank constraint over Z_p.
//!
//! Choosing `L` of `K` users so that their coefficient rows are independent
//! over Z_p, while minimizing the worst effective noise, is weight
//! maximization over a linear matroid. Best-In-Greedy solves it exactly.

use crate::error::{Error, Result};
use crate::zp_field::{FieldMatrix, PrimeField, RowSpace};

#[derive(Debug, Clone, PartialEq)]
pub struct SelectionInstance {
    field: PrimeField,
    l: usize,
    q_rows: Vec<Vec<u64>>,
    sigma2: Vec<f64>,
    full_rank: usize,
}

impl SelectionInstance {
    /// `q_rows` are reduced mod `p`; `sigma2` are the users' effective noise variances.
    pub fn new(field: PrimeField, l: usize, q_rows: &[Vec<i64>], sigma2: &[f64]) -> Result<Self> {
        if q_rows.len() != sigma2.len() {
            return Err(Error::DimensionMismatch { expected: q_rows.len(), found: sigma2.len() });
        }
        if let Some(bad) = sigma2.iter().find(|s| !(s.is_finite() && **s > 0.0)) {
            return Err(Error::InvalidParameter(format!("effective variances must be positive and finite, got {bad}")));
        }
        if let Some(r) = q_rows.iter().find(|r| r.len() != l) {
            return Err(Error::DimensionMismatch { expected: l, found: r.len() });
        }
        let q = FieldMatrix::from_integer_rows(field, q_rows)?;
        let q_rows = (0..q.rows()).map(|r| q.row(r).to_vec()).collect();
        let full_rank = if q.rows() == 0 { 0 } else { q.rank() };
        Ok(Self { field, l, q_rows, sigma2: sigma2.to_vec(), full_rank })
    }

    pub fn k(&self) -> usize {
        self.q_rows.len()
    }

    pub fn l(&self) -> usize {
        self.l
    }

    pub fn weights(&self) -> Vec<f64> {
        self.sigma2.iter().map(|s| 1.0 / s).collect()
    }

    /// Rank over Z_p of all `K` rows.
    pub fn rank(&self) -> usize {
        self.full_rank
    }

    pub fn is_feasible(&self) -> bool {
        self.full_rank == self.l
    }

    pub fn rank_of(&self, users: &[usize]) -> usize {
        let mut space = RowSpace::new(self.field, self.l);
        users.iter().filter(|&&u| space.insert(&self.q_rows[u])).count()
    }

    fn objective(&self, users: &[usize]) -> f64 {
        users.iter().map(|&u| self.sigma2[u]).fold(f64::NEG_INFINITY, f64::max)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SelectionResult {
    /// Chosen users in selection order (0-based).
    pub chosen: Vec<usize>,
    /// Largest effective variance among the chosen users.
    pub objective: f64,
    pub feasible: bool,
}

/// Best-In-Greedy: visit users by decreasing weight `1/σ²` (stable in the user
/// index) and keep each one that raises the rank, until the rank reaches `L`.
pub fn greedy_select(inst: &SelectionInstance) -> SelectionResult {
    let w = inst.weights();
    let mut order: Vec<usize> = (0..inst.k()).collect();
    order.sort_by(|&i, &j| w[j].total_cmp(&w[i]));

    let mut space = RowSpace::new(inst.field, inst.l);
    let mut chosen = Vec::with_capacity(inst.l);
    for u in order {
        if space.rank() == inst.l {
            break;
        }
        if space.insert(&inst.q_rows[u]) {
            chosen.push(u);
        }
    }
    SelectionResult { objective: inst.objective(&chosen), feasible: space.rank() == inst.l, chosen }
}

/// Exhaustive search over all `L`-subsets; ties go to the lexicographically first subset.
pub fn brute_force_select(inst: &SelectionInstance) -> Result<SelectionResult> {
    let (k, l) = (inst.k(), inst.l);
    if k > 20 {
        return Err(Error::InstanceTooLarge(k));
    }
    let mut best: Option<(f64, Vec<usize>)> = None;
    if l <= k {
        let mut idx: Vec<usize> = (0..l).collect();
        loop {
            if inst.rank_of(&idx) == l {
                let obj = inst.objective(&idx);
                if best.as_ref().is_none_or(|(b, _)| obj < *b) {
                    best = Some((obj, idx.clone()));
                }
            }
            // next combination in lexicographic order
            let Some(i) = (0..l).rev().find(|&i| idx[i] < k - l + i) else {
                break;
            };
            idx[i] += 1;
            for j in i + 1..l {
                idx[j] = idx[j - 1] + 1;
            }
        }
    }
    Ok(match best {
        Some((objective, chosen)) => SelectionResult { chosen, objective, feasible: true },
        None => SelectionResult { chosen: Vec::new(), objective: f64::INFINITY, feasible: false },
    })
}

/// Checks the matroid axioms for the family of subsets of `{0, …, ground−1}`
/// accepted by `independent` (subsets passed as bitmasks).
pub fn matroid_check<F: Fn(u32) -> bool>(ground: usize, independent: F) -> bool {
    assert!(ground <= 12, "ground set too large for exhaustive checking");
    let family: Vec<u32> = (0..1u32 << ground).filter(|&s| independent(s)).collect();
    let member = {
        let mut m = vec![false; 1 << ground];
        for &s in &family {
            m[s as usize] = true;
        }
        m
    };
    if !member[0] {
        return false;
    }
    // removing any single element keeps a set independent (enough for all subsets by induction)
    for &s in &family {
        let mut bits = s;
        while bits != 0 {
            let b = bits & bits.wrapping_neg();
            if !member[(s & !b) as usize] {
                return false;
            }
            bits &= bits - 1;
        }
    }
    for &a in &family {
        for &b in &family {
            if a.count_ones() < b.count_ones() {
                let extra = b & !a;
                let ok = (0..ground).any(|e| extra >> e & 1 == 1 && member[(a | 1 << e) as usize]);
                if !ok {
                    return false;
                }
            }
        }
    }
    true
}

/// Independence oracle of the linear matroid on the rows of `rows` over Z_p.
pub fn row_independence(field: PrimeField, rows: &[Vec<i64>]) -> impl Fn(u32) -> bool + '_ {
    move |mask| {
        let picked: Vec<&Vec<i64>> = rows.iter().enumerate().filter(|(i, _)| mask >> i & 1 == 1).map(|(_, r)| r).collect();
        if picked.is_empty() {
            return true;
        }
        FieldMatrix::from_integer_rows(field, &picked).is_ok_and(|m| m.rank() == picked.len())
    }
}
