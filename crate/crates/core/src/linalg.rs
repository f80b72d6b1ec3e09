//! Dense kernels: the instance factor `V`, orthogonal projection of rows against a
//! fixed set (Gram-Schmidt without normalization, cached across inclusions), and
//! the weighted log-determinant `x -> ln det(V^T Diag(x) V)` with its gradient.

use nalgebra::DMatrix;

use crate::error::{Error, Result};

/// Relative pivot threshold for column-rank checks.
pub const TAU_RANK: f64 = 1e-10;
/// Relative threshold under which a projected row counts as zero.
pub const TAU_ZERO: f64 = 1e-12;
/// Relative tolerance on inner products between rows that should be orthogonal.
pub const TAU_ORTH: f64 = 1e-8;
/// Ratio of smallest to largest Cholesky pivot below which a Gram matrix is singular.
pub const TAU_PSD: f64 = 1e-12;

/// The factor `V` in `M = V V^T`: `n` rows of length `r`, full column rank.
///
/// Rows are stored row-major together with their squared norms.
#[derive(Debug, Clone, PartialEq)]
pub struct InstanceMatrix {
    n: usize,
    r: usize,
    data: Vec<f64>,
    sq_norms: Vec<f64>,
}

impl InstanceMatrix {
    /// Builds an instance from row-major data, checking `n >= r >= 1`, finiteness
    /// and full column rank (pivoted QR, relative pivot threshold [`TAU_RANK`]).
    pub fn new(n: usize, r: usize, data: Vec<f64>) -> Result<Self> {
        if r == 0 || n < r {
            return Err(Error::InvalidDimensions(format!(
                "need n >= r >= 1, got n = {n}, r = {r}"
            )));
        }
        if data.len() != n * r {
            return Err(Error::InvalidDimensions(format!(
                "expected {} entries for a {n}x{r} matrix, got {}",
                n * r,
                data.len()
            )));
        }
        if data.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidDimensions("non-finite entry".into()));
        }
        let m = Self::from_parts(n, r, data);
        if let Some(pivot) = first_small_pivot(n, r, &m.data) {
            return Err(Error::RankDeficient {
                pivot,
                rank_needed: r,
            });
        }
        Ok(m)
    }

    /// Builds an instance from a list of equal-length rows.
    pub fn from_rows<R: AsRef<[f64]>>(rows: &[R]) -> Result<Self> {
        let n = rows.len();
        let r = rows.first().map_or(0, |row| row.as_ref().len());
        let mut data = Vec::with_capacity(n * r);
        for (i, row) in rows.iter().enumerate() {
            let row = row.as_ref();
            if row.len() != r {
                return Err(Error::InvalidDimensions(format!(
                    "row {i} has length {}, expected {r}",
                    row.len()
                )));
            }
            data.extend_from_slice(row);
        }
        Self::new(n, r, data)
    }

    fn from_parts(n: usize, r: usize, data: Vec<f64>) -> Self {
        let sq_norms = data.chunks_exact(r).map(dot_self).collect();
        Self {
            n,
            r,
            data,
            sq_norms,
        }
    }

    pub fn nrows(&self) -> usize {
        self.n
    }

    pub fn ncols(&self) -> usize {
        self.r
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.r..(i + 1) * self.r]
    }

    pub fn rows(&self) -> impl Iterator<Item = &[f64]> {
        self.data.chunks_exact(self.r)
    }

    /// Cached squared Euclidean norm of row `i`.
    pub fn sq_norm(&self, i: usize) -> f64 {
        self.sq_norms[i]
    }

    /// Row-major entries.
    pub fn data(&self) -> &[f64] {
        &self.data
    }

    /// Returns a copy with every entry multiplied by `c`.
    pub fn scaled(&self, c: f64) -> Result<Self> {
        Self::new(self.n, self.r, self.data.iter().map(|v| v * c).collect())
    }

    /// `log2 |det V_K|` for a square row selection, by LU with partial pivoting.
    /// Returns `-inf` for an exactly singular selection.
    pub fn log2_abs_det(&self, rows: &[usize]) -> f64 {
        assert_eq!(rows.len(), self.r, "selection must have r rows");
        let mut sel = Vec::with_capacity(self.r * self.r);
        for &i in rows {
            sel.extend_from_slice(self.row(i));
        }
        log2_abs_det_square(self.r, &sel)
    }
}

/// `log2 |det A|` of a square row-major matrix via LU; `-inf` if singular.
pub fn log2_abs_det_square(k: usize, data: &[f64]) -> f64 {
    let det = DMatrix::from_row_slice(k, k, data).lu().determinant();
    if det == 0.0 {
        f64::NEG_INFINITY
    } else {
        det.abs().log2()
    }
}

/// Index of the first diagonal entry of the column-pivoted `R` factor that falls
/// below `TAU_RANK` times the largest one, if any.
fn first_small_pivot(n: usize, r: usize, data: &[f64]) -> Option<usize> {
    let qr = DMatrix::from_row_slice(n, r, data).col_piv_qr();
    let rf = qr.r();
    let lead = rf[(0, 0)].abs();
    if lead == 0.0 {
        return Some(0);
    }
    (0..r).find(|&k| rf[(k, k)].abs() <= TAU_RANK * lead)
}

#[inline]
pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

#[inline]
fn dot_self(a: &[f64]) -> f64 {
    dot(a, a)
}

/// `target -= (dot(basis, coeff_source) / basis_sq) * basis`
#[inline]
fn subtract_component(target: &mut [f64], coeff_source: &[f64], basis: &[f64], basis_sq: f64) {
    let c = dot(basis, coeff_source) / basis_sq;
    axpy_neg(target, c, basis);
}

#[inline]
fn axpy_neg(target: &mut [f64], c: f64, basis: &[f64]) {
    if c != 0.0 {
        for (t, b) in target.iter_mut().zip(basis) {
            *t -= c * b;
        }
    }
}

/// Rows of `V` orthogonalized against the fixed (included) set `J`.
///
/// Rows in `J` are pairwise orthogonal; every other row is orthogonal to all of
/// them. Determinants of every `J ∪ K` selection are preserved up to sign.
#[derive(Debug, Clone)]
pub struct ProjectedRows<'a> {
    base: &'a InstanceMatrix,
    included: Vec<usize>,
    member: Vec<bool>,
    tilde: Vec<f64>,
    tilde_sq: Vec<f64>,
    log_volume2: f64,
}

impl<'a> ProjectedRows<'a> {
    /// The empty projection: `J = ∅`, rows unchanged.
    pub fn identity(base: &'a InstanceMatrix) -> Self {
        Self {
            base,
            included: Vec::new(),
            member: vec![false; base.n],
            tilde: base.data.clone(),
            tilde_sq: base.sq_norms.clone(),
            log_volume2: 0.0,
        }
    }

    pub fn base(&self) -> &'a InstanceMatrix {
        self.base
    }

    /// Included indices in inclusion order.
    pub fn included(&self) -> &[usize] {
        &self.included
    }

    pub fn is_included(&self, i: usize) -> bool {
        self.member[i]
    }

    pub fn tilde_row(&self, i: usize) -> &[f64] {
        let r = self.base.r;
        &self.tilde[i * r..(i + 1) * r]
    }

    pub fn tilde_sq_norm(&self, i: usize) -> f64 {
        self.tilde_sq[i]
    }

    /// `log2 |det V_J|` accumulated as the sum of `log2 ||ṽ_j||` over `J`.
    pub fn log_volume2(&self) -> f64 {
        self.log_volume2
    }

    /// Whether row `i` can still be included: not in `J` and with projected norm
    /// above `TAU_ZERO` relative to its original norm.
    pub fn is_includable(&self, i: usize) -> bool {
        !self.member[i] && self.has_positive_norm(i)
    }

    pub(crate) fn has_positive_norm(&self, i: usize) -> bool {
        let sq = self.tilde_sq[i];
        sq > 0.0 && sq > TAU_ZERO * TAU_ZERO * self.base.sq_norms[i]
    }

    /// Child state with `J' = J ∪ {i}`. Every row outside `J'` is re-projected
    /// against `ṽ_i` alone; the earlier basis vectors are already orthogonal to it.
    pub fn include_row(&self, i: usize) -> Result<ProjectedRows<'a>> {
        if i >= self.base.n {
            return Err(Error::InvalidIndexSet(format!(
                "index {i} out of range for {} rows",
                self.base.n
            )));
        }
        if self.member[i] {
            return Err(Error::InvalidIndexSet(format!("row {i} already included")));
        }
        if self.included.len() == self.base.r {
            return Err(Error::InvalidIndexSet(format!(
                "already {} rows included",
                self.base.r
            )));
        }
        if !self.has_positive_norm(i) {
            return Err(Error::ZeroPivot { index: i });
        }

        let r = self.base.r;
        let mut child = self.clone();
        let pivot_sq = self.tilde_sq[i];
        let pivot: Vec<f64> = self.tilde_row(i).to_vec();
        let pivot_norm = pivot_sq.sqrt();

        for k in 0..self.base.n {
            if k == i || self.member[k] {
                continue;
            }
            let row = &mut child.tilde[k * r..(k + 1) * r];
            // the cached row is already orthogonal to J, so its coefficient
            // against ṽ_i equals that of the original v_k
            axpy_neg(row, dot(row, &pivot) / pivot_sq, &pivot);
            let mut sq = dot_self(row);
            if dot(row, &pivot).abs() > TAU_ORTH * sq.sqrt() * pivot_norm {
                axpy_neg(row, dot(row, &pivot) / pivot_sq, &pivot);
                sq = dot_self(row);
            }
            child.tilde_sq[k] = sq;
        }

        child.member[i] = true;
        child.included.push(i);
        child.log_volume2 += 0.5 * pivot_sq.log2();
        Ok(child)
    }

    /// The projected rows as a standalone instance (`Ṽ`).
    pub fn to_instance(&self) -> Result<InstanceMatrix> {
        InstanceMatrix::new(self.base.n, self.base.r, self.tilde.clone())
    }
}

/// Orthogonal projection process for a fixed set `J` (taken in the given order).
///
/// The first rows of `J` are orthogonalized successively; all other rows are
/// projected onto the orthogonal complement of `span{ṽ_j : j ∈ J}` with
/// `ṽ_i = v_i - Σ_j (ṽ_j·v_i / ṽ_j·ṽ_j) ṽ_j`. One re-orthogonalization pass is
/// applied to a row whose result still has an inner product above `TAU_ORTH`
/// with some basis vector.
pub fn project_rows<'a>(v: &'a InstanceMatrix, j: &[usize]) -> Result<ProjectedRows<'a>> {
    validate_index_set(v, j)?;
    let r = v.r;
    let mut state = ProjectedRows::identity(v);

    let mut basis: Vec<usize> = Vec::with_capacity(j.len());
    for &i in j {
        let sq = project_against_basis(&mut state, i, &basis);
        if !(sq > 0.0 && sq > TAU_ZERO * TAU_ZERO * v.sq_norms[i]) {
            return Err(Error::DependentFixedRows { index: i });
        }
        state.log_volume2 += 0.5 * sq.log2();
        state.member[i] = true;
        state.included.push(i);
        basis.push(i);
    }
    for k in 0..v.n {
        if !state.member[k] && !basis.is_empty() {
            project_against_basis(&mut state, k, &basis);
        }
    }
    debug_assert_eq!(state.tilde.len(), v.n * r);
    Ok(state)
}

/// Replaces row `k` of `state.tilde` by `v_k` projected against the listed
/// (orthogonal) basis rows; returns the new squared norm.
fn project_against_basis(state: &mut ProjectedRows<'_>, k: usize, basis: &[usize]) -> f64 {
    let r = state.base.r;
    let original = state.base.row(k);
    let mut row = original.to_vec();
    for &b in basis {
        let brow = &state.tilde[b * r..(b + 1) * r];
        subtract_component(&mut row, original, brow, state.tilde_sq[b]);
    }
    let mut sq = dot_self(&row);
    let norm = sq.sqrt();
    let lost = basis.iter().any(|&b| {
        let brow = &state.tilde[b * r..(b + 1) * r];
        dot(&row, brow).abs() > TAU_ORTH * norm * state.tilde_sq[b].sqrt()
    });
    if lost {
        for &b in basis {
            let brow = &state.tilde[b * r..(b + 1) * r];
            let c = dot(brow, &row) / state.tilde_sq[b];
            axpy_neg(&mut row, c, brow);
        }
        sq = dot_self(&row);
    }
    state.tilde[k * r..(k + 1) * r].copy_from_slice(&row);
    state.tilde_sq[k] = sq;
    sq
}

pub(crate) fn validate_index_set(v: &InstanceMatrix, j: &[usize]) -> Result<()> {
    if j.len() > v.r {
        return Err(Error::InvalidIndexSet(format!(
            "{} fixed rows exceed r = {}",
            j.len(),
            v.r
        )));
    }
    let mut seen = vec![false; v.n];
    for &i in j {
        if i >= v.n {
            return Err(Error::InvalidIndexSet(format!(
                "index {i} out of range for {} rows",
                v.n
            )));
        }
        if std::mem::replace(&mut seen[i], true) {
            return Err(Error::InvalidIndexSet(format!("index {i} repeated")));
        }
    }
    Ok(())
}

/// Lower Cholesky factor of a small dense SPD matrix, row-major.
struct Cholesky {
    r: usize,
    l: Vec<f64>,
}

impl Cholesky {
    /// Factors `a`; `None` if a pivot is non-positive or the smallest pivot is
    /// at most `TAU_PSD` times the largest.
    fn factor(a: &[f64], r: usize) -> Option<Self> {
        let mut l = vec![0.0; r * r];
        let mut min_pivot = f64::INFINITY;
        let mut max_pivot: f64 = 0.0;
        for i in 0..r {
            for j in 0..=i {
                let s = a[i * r + j] - dot(&l[i * r..i * r + j], &l[j * r..j * r + j]);
                if i == j {
                    if s.is_nan() || s <= 0.0 {
                        return None;
                    }
                    min_pivot = min_pivot.min(s);
                    max_pivot = max_pivot.max(s);
                    l[i * r + i] = s.sqrt();
                } else {
                    l[i * r + j] = s / l[j * r + j];
                }
            }
        }
        if min_pivot <= TAU_PSD * max_pivot {
            return None;
        }
        Some(Self { r, l })
    }

    fn logdet(&self) -> f64 {
        (0..self.r).map(|i| 2.0 * self.l[i * self.r + i].ln()).sum()
    }

    /// `||L^{-1} b||^2 = b^T A^{-1} b`
    fn inv_quad(&self, b: &[f64], work: &mut [f64]) -> f64 {
        let r = self.r;
        for i in 0..r {
            let s = b[i] - dot(&self.l[i * r..i * r + i], &work[..i]);
            work[i] = s / self.l[i * r + i];
        }
        dot_self(&work[..r])
    }
}

/// `V^T Diag(x) V + ridge·I`, row-major r x r.
fn weighted_gram(v: &InstanceMatrix, x: &[f64], ridge: f64) -> Vec<f64> {
    let r = v.r;
    let mut g = vec![0.0; r * r];
    for (row, &w) in v.rows().zip(x) {
        if w == 0.0 {
            continue;
        }
        for a in 0..r {
            let wa = w * row[a];
            for b in 0..=a {
                g[a * r + b] += wa * row[b];
            }
        }
    }
    for a in 0..r {
        g[a * r + a] += ridge;
        for b in 0..a {
            g[b * r + a] = g[a * r + b];
        }
    }
    g
}

/// `ln det(V^T Diag(x) V)`, or `-inf` when the weighted Gram matrix is
/// numerically singular.
pub fn logdet_weighted(v: &InstanceMatrix, x: &[f64]) -> f64 {
    logdet_weighted_ridge(v, x, 0.0)
}

pub(crate) fn logdet_weighted_ridge(v: &InstanceMatrix, x: &[f64], ridge: f64) -> f64 {
    assert_eq!(x.len(), v.n, "weight vector length must equal n");
    match Cholesky::factor(&weighted_gram(v, x, ridge), v.r) {
        Some(c) => c.logdet(),
        None => f64::NEG_INFINITY,
    }
}

/// Gradient of `x -> ln det(V^T Diag(x) V)`: component `i` is
/// `v_i^T (V^T Diag(x) V)^{-1} v_i` (a leverage score).
pub fn grad_logdet_weighted(v: &InstanceMatrix, x: &[f64]) -> Result<Vec<f64>> {
    value_and_grad(v, x, 0.0)
        .map(|(_, g)| g)
        .ok_or(Error::SingularWeighting)
}

/// Objective and gradient from a single factorization.
pub(crate) fn value_and_grad(v: &InstanceMatrix, x: &[f64], ridge: f64) -> Option<(f64, Vec<f64>)> {
    assert_eq!(x.len(), v.n, "weight vector length must equal n");
    let chol = Cholesky::factor(&weighted_gram(v, x, ridge), v.r)?;
    let mut work = vec![0.0; v.r];
    let grad = v.rows().map(|row| chol.inv_quad(row, &mut work)).collect();
    Some((chol.logdet(), grad))
}
