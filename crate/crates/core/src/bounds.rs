//! Hadamard upper bound on `|det V_{J∪K}|` over completions `K`, in log2.
//!
//! With `J` fixed, `|det V_{J∪K}| <= Π_{i∈J∪K} ||v_i||`, so the best completion is
//! bounded by taking the `r - |J|` longest candidate rows. Evaluated on the
//! projected rows `Ṽ` the same bound is never weaker, since projection only
//! shortens rows while preserving every determinant.

use std::cmp::Ordering;

use crate::error::{Error, Result};
use crate::linalg::{project_rows, validate_index_set, InstanceMatrix, ProjectedRows};

/// An upper bound on `log2 |det V_{J∪K}|` and the rows that realize it.
#[derive(Debug, Clone, PartialEq)]
pub struct BoundValue {
    pub log2_absdet_ub: f64,
    /// Bound on `log2 det M_{J∪K}`, always exactly twice `log2_absdet_ub`.
    pub log2_det_m_ub: f64,
    /// `J` in inclusion order followed by the selected candidates.
    pub support: Vec<usize>,
}

impl BoundValue {
    fn new(log2_absdet_ub: f64, support: Vec<usize>) -> Self {
        Self {
            log2_absdet_ub,
            log2_det_m_ub: 2.0 * log2_absdet_ub,
            support,
        }
    }

    /// Re-evaluates `Σ_{i∈support} ½ log2 ||row_i||²` from the supplied squared norms.
    pub fn recompute(&self, sq_norm: impl Fn(usize) -> f64) -> f64 {
        self.support.iter().map(|&i| 0.5 * sq_norm(i).log2()).sum()
    }
}

/// Sorts by squared norm descending, smaller index first on ties.
fn by_norm_desc(a: &(usize, f64), b: &(usize, f64)) -> Ordering {
    b.1.total_cmp(&a.1).then(a.0.cmp(&b.0))
}

/// Adds the `needed` largest half-log norms from `pool` to `base`.
fn top_k_bound(
    base: f64,
    fixed: &[usize],
    mut pool: Vec<(usize, f64)>,
    needed: usize,
) -> Result<BoundValue> {
    if pool.len() < needed {
        return Err(Error::InfeasibleNode {
            available: pool.len(),
            needed,
        });
    }
    if needed > 0 && needed < pool.len() {
        pool.select_nth_unstable_by(needed - 1, by_norm_desc);
    }
    pool.truncate(needed);
    pool.sort_by(by_norm_desc);

    let mut support = fixed.to_vec();
    let mut value = base;
    for &(i, sq) in &pool {
        value += 0.5 * sq.log2();
        support.push(i);
    }
    Ok(BoundValue::new(value, support))
}

/// Hadamard bound at the node `(J, candidates)` on projected rows.
///
/// Candidates whose projected norm is numerically zero cannot be part of a
/// nonsingular completion and are ignored; if fewer than `r - |J|` remain the
/// node is infeasible.
pub fn hadamard_bound(state: &ProjectedRows<'_>, candidates: &[usize]) -> Result<BoundValue> {
    let n = state.base().nrows();
    if let Some(&bad) = candidates.iter().find(|&&i| i >= n || state.is_included(i)) {
        return Err(Error::InvalidIndexSet(format!(
            "candidate {bad} is out of range or already fixed"
        )));
    }
    hadamard_bound_unchecked(state, candidates.iter().copied())
}

pub(crate) fn hadamard_bound_unchecked(
    state: &ProjectedRows<'_>,
    candidates: impl Iterator<Item = usize>,
) -> Result<BoundValue> {
    let needed = state.base().ncols() - state.included().len();
    let pool = candidates
        .filter(|&i| state.has_positive_norm(i))
        .map(|i| (i, state.tilde_sq_norm(i)))
        .collect();
    top_k_bound(state.log_volume2(), state.included(), pool, needed)
}

/// `δ_H(V, J)` evaluated on the raw rows, without projection.
pub fn raw_hadamard_bound(v: &InstanceMatrix, j: &[usize]) -> Result<BoundValue> {
    validate_index_set(v, j)?;
    let base = j.iter().map(|&i| 0.5 * v.sq_norm(i).log2()).sum();
    let pool = (0..v.nrows())
        .filter(|i| !j.contains(i) && v.sq_norm(*i) > 0.0)
        .map(|i| (i, v.sq_norm(i)))
        .collect();
    top_k_bound(base, j, pool, v.ncols() - j.len())
}

/// Checks `δ_H(Ṽ, J) <= δ_H(V, J)` in log2 with slack `1e-9`.
///
/// An infeasible projected node has bound `-inf` and passes trivially.
pub fn bound_dominance_check(v: &InstanceMatrix, j: &[usize]) -> Result<bool> {
    let state = project_rows(v, j)?;
    let candidates = (0..v.nrows()).filter(|&i| !state.is_included(i));
    let projected = match hadamard_bound_unchecked(&state, candidates) {
        Ok(b) => b.log2_absdet_ub,
        Err(Error::InfeasibleNode { .. }) => return Ok(true),
        Err(e) => return Err(e),
    };
    let raw = match raw_hadamard_bound(v, j) {
        Ok(b) => b.log2_absdet_ub,
        Err(Error::InfeasibleNode { .. }) => f64::NEG_INFINITY,
        Err(e) => return Err(e),
    };
    Ok(projected <= raw + 1e-9)
}
