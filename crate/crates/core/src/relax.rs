//! Concave relaxation `max ln det(V^T Diag(x) V)` over the capped simplex
//! `{x : e^T x = r, 0 <= x <= 1, x_J = 1}`.
//!
//! Solved by projected gradient ascent. At every iterate the linear
//! maximization over the simplex vertices gives an upper bound on the relaxed
//! optimum (by concavity), and since vertices are binary, on the integer optimum
//! too. The smallest such bound seen is reported, so the bound stays valid
//! however early the iteration stops.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{
    logdet_weighted, logdet_weighted_ridge, project_rows, validate_index_set, value_and_grad,
    InstanceMatrix,
};

pub const DEFAULT_TOL: f64 = 1e-6;
pub const DEFAULT_MAX_ITERS: usize = 5000;
const ARMIJO: f64 = 1e-4;
const MAX_HALVINGS: usize = 60;
/// Absolute slack (natural log) in [`lp_projection_dominance`].
pub const DOMINANCE_SLACK: f64 = 1e-4;

/// `{x ∈ [0,1]^n : e^T x = r, x_i = 1 for i ∈ fixed_one}`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CappedSimplex {
    pub n: usize,
    pub r: usize,
    pub fixed_one: Vec<usize>,
    pinned: Vec<bool>,
}

impl CappedSimplex {
    pub fn new(n: usize, r: usize, fixed_one: &[usize]) -> Result<Self> {
        let mut pinned = vec![false; n];
        for &i in fixed_one {
            if i >= n {
                return Err(Error::InvalidIndexSet(format!(
                    "index {i} out of range for n = {n}"
                )));
            }
            if std::mem::replace(&mut pinned[i], true) {
                return Err(Error::InvalidIndexSet(format!("index {i} repeated")));
            }
        }
        let k = fixed_one.len();
        if r < k || r > n {
            return Err(Error::InfeasibleDomain(format!(
                "need |J| <= r <= n, got |J| = {k}, r = {r}, n = {n}"
            )));
        }
        Ok(Self {
            n,
            r,
            fixed_one: fixed_one.to_vec(),
            pinned,
        })
    }

    pub fn is_fixed(&self, i: usize) -> bool {
        self.pinned[i]
    }

    /// Number of free coordinates that must be set to one at a vertex.
    pub fn free_budget(&self) -> usize {
        self.r - self.fixed_one.len()
    }

    fn free(&self) -> impl Iterator<Item = usize> + '_ {
        (0..self.n).filter(|&i| !self.pinned[i])
    }

    /// Membership with tolerance `tol` on the sum, bounds and pinned entries.
    pub fn contains(&self, x: &[f64], tol: f64) -> bool {
        x.len() == self.n
            && (x.iter().sum::<f64>() - self.r as f64).abs() <= tol
            && x.iter().all(|&xi| xi >= -tol && xi <= 1.0 + tol)
            && self.fixed_one.iter().all(|&i| (x[i] - 1.0).abs() <= tol)
    }

    /// The starting point: one on `J`, the remaining budget spread evenly.
    pub fn center(&self) -> Vec<f64> {
        let nfree = self.n - self.fixed_one.len();
        let level = if nfree == 0 {
            0.0
        } else {
            self.free_budget() as f64 / nfree as f64
        };
        (0..self.n)
            .map(|i| if self.pinned[i] { 1.0 } else { level })
            .collect()
    }
}

fn clipped_sum(y: &[f64], tau: f64) -> f64 {
    y.iter().map(|&v| (v - tau).clamp(0.0, 1.0)).sum()
}

/// Euclidean projection of `y` onto the capped simplex.
///
/// Free coordinates become `clip(y_i - τ, 0, 1)`; the shift `τ` is located
/// exactly among the breakpoints `y_i - 1` and `y_i`, between which the
/// clipped sum is linear.
pub fn project_capped_simplex(y: &[f64], domain: &CappedSimplex) -> Result<Vec<f64>> {
    if y.len() != domain.n {
        return Err(Error::InvalidDimensions(format!(
            "vector has length {}, domain has n = {}",
            y.len(),
            domain.n
        )));
    }
    let free: Vec<usize> = domain.free().collect();
    let ys: Vec<f64> = free.iter().map(|&i| y[i]).collect();
    let m = domain.free_budget() as f64;

    let mut x = vec![1.0; domain.n];
    let fill = |x: &mut Vec<f64>, value: &dyn Fn(f64) -> f64| {
        for (&i, &yi) in free.iter().zip(&ys) {
            x[i] = value(yi);
        }
    };
    if domain.free_budget() == 0 {
        fill(&mut x, &|_| 0.0);
        return Ok(x);
    }
    if domain.free_budget() == free.len() {
        return Ok(x);
    }

    let mut breaks: Vec<f64> = ys.iter().flat_map(|&v| [v - 1.0, v]).collect();
    breaks.sort_by(f64::total_cmp);
    breaks.dedup();
    // clipped sum is non-increasing in τ: |free| at breaks[0], 0 at the last
    let (mut lo, mut hi) = (0usize, breaks.len() - 1);
    while hi - lo > 1 {
        let mid = (lo + hi) / 2;
        if clipped_sum(&ys, breaks[mid]) >= m {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let (h_lo, h_hi) = (clipped_sum(&ys, breaks[lo]), clipped_sum(&ys, breaks[hi]));
    let tau = if h_lo == h_hi {
        breaks[lo]
    } else {
        breaks[lo] + (h_lo - m) / (h_lo - h_hi) * (breaks[hi] - breaks[lo])
    };
    fill(&mut x, &|v| (v - tau).clamp(0.0, 1.0));
    Ok(x)
}

fn certificate_from(f: f64, g: &[f64], x: &[f64], domain: &CappedSimplex) -> f64 {
    let mut free_g: Vec<f64> = domain.free().map(|i| g[i]).collect();
    let current: f64 = domain.free().map(|i| g[i] * x[i]).sum();
    let k = domain.free_budget();
    if k > 0 && k < free_g.len() {
        free_g.select_nth_unstable_by(k - 1, |a, b| b.total_cmp(a));
    }
    let best: f64 = free_g[..k].iter().sum();
    f + best - current
}

/// `f(x) + max_{vertex u} ∇f(x)^T (u - x)`, an upper bound on the relaxed
/// optimum and on `ln det M_K` for every feasible binary `K`.
pub fn certificate_ub(x: &[f64], v: &InstanceMatrix, domain: &CappedSimplex) -> Result<f64> {
    if x.len() != v.nrows() || domain.n != v.nrows() || domain.r != v.ncols() {
        return Err(Error::InvalidDimensions(
            "point, instance and domain disagree".into(),
        ));
    }
    let (f, g) = value_and_grad(v, x, 0.0).ok_or(Error::SingularWeighting)?;
    Ok(certificate_from(f, &g, x, domain))
}

#[derive(Debug, Clone, PartialEq)]
pub struct RelaxOptions {
    /// Stop once `cert - f <= tol·max(1, |f|)`.
    pub tol: f64,
    pub max_iters: usize,
}

impl Default for RelaxOptions {
    fn default() -> Self {
        Self {
            tol: DEFAULT_TOL,
            max_iters: DEFAULT_MAX_ITERS,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RelaxIterate {
    pub iter: usize,
    pub obj_ln: f64,
    /// Certificate at this iterate; `+inf` if the unridged objective was singular.
    pub cert_ln: f64,
    pub step: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RelaxSolution {
    pub x: Vec<f64>,
    /// `ln det(V^T Diag(x) V)` at `x`.
    pub obj_ln: f64,
    /// Smallest certificate seen; bounds the natural-log integer optimum.
    pub cert_ub_ln: f64,
    pub iters: usize,
    pub converged: bool,
    pub trace: Vec<RelaxIterate>,
}

impl RelaxSolution {
    pub fn gap_ln(&self) -> f64 {
        self.cert_ub_ln - self.obj_ln
    }
}

/// Maximizes `ln det(V^T Diag(x) V)` over the capped simplex with `x_J = 1`.
///
/// If the start is singular, the line search runs on `V^T Diag(x) V + μI`
/// with `μ = 1e-10` times the mean squared row norm. Certificates are only
/// taken at iterates where the unridged objective is finite.
pub fn solve_lp_relaxation(
    v: &InstanceMatrix,
    j: &[usize],
    opts: &RelaxOptions,
) -> Result<RelaxSolution> {
    let domain = CappedSimplex::new(v.nrows(), v.ncols(), j)?;
    let mut x = domain.center();

    let mut ridge = 0.0;
    if logdet_weighted(v, &x) == f64::NEG_INFINITY {
        ridge = 1e-10 * (0..v.nrows()).map(|i| v.sq_norm(i)).sum::<f64>() / v.nrows() as f64;
    }
    let Some((mut f, mut g)) = value_and_grad(v, &x, ridge) else {
        return Err(Error::StartSingular);
    };

    let mut best_cert = f64::INFINITY;
    let mut best_obj = f64::NEG_INFINITY;
    let mut best_x = x.clone();
    let mut trace = Vec::new();
    let mut converged = false;
    let mut iters = 0;
    let mut step = 0.0;

    loop {
        // objective and gradient without ridge, for the certificate
        let exact = if ridge == 0.0 {
            Some((f, g.clone()))
        } else {
            value_and_grad(v, &x, 0.0)
        };
        let cert = match &exact {
            Some((fe, ge)) => {
                let c = certificate_from(*fe, ge, &x, &domain);
                best_cert = best_cert.min(c);
                if *fe > best_obj {
                    best_obj = *fe;
                    best_x.clone_from(&x);
                }
                c
            }
            None => f64::INFINITY,
        };
        trace.push(RelaxIterate {
            iter: iters,
            obj_ln: exact.as_ref().map_or(f64::NEG_INFINITY, |e| e.0),
            cert_ln: cert,
            step,
        });
        if best_obj.is_finite() && best_cert - best_obj <= opts.tol * best_obj.abs().max(1.0) {
            converged = true;
            break;
        }
        if iters >= opts.max_iters {
            break;
        }

        let mut alpha = 1.0;
        let mut accepted = None;
        for _ in 0..MAX_HALVINGS {
            let trial: Vec<f64> = x.iter().zip(&g).map(|(xi, gi)| xi + alpha * gi).collect();
            let y = project_capped_simplex(&trial, &domain)?;
            let ascent: f64 = y
                .iter()
                .zip(&x)
                .zip(&g)
                .map(|((a, b), gi)| gi * (a - b))
                .sum();
            if ascent <= 0.0 {
                break;
            }
            let fy = logdet_weighted_ridge(v, &y, ridge);
            if fy >= f + ARMIJO * ascent {
                accepted = Some(y);
                break;
            }
            alpha *= 0.5;
        }
        let Some(y) = accepted else {
            break;
        };
        let Some((fy, gy)) = value_and_grad(v, &y, ridge) else {
            break;
        };
        x = y;
        f = fy;
        g = gy;
        step = alpha;
        iters += 1;
    }

    if !best_obj.is_finite() {
        return Err(Error::StartSingular);
    }
    Ok(RelaxSolution {
        x: best_x,
        obj_ln: best_obj,
        cert_ub_ln: best_cert,
        iters,
        converged,
        trace,
    })
}

/// Certified relaxation bounds on `V` and on the projected rows `Ṽ`, and
/// whether `ub_proj <= ub_raw + DOMINANCE_SLACK`.
pub fn lp_projection_dominance(v: &InstanceMatrix, j: &[usize]) -> Result<(f64, f64, bool)> {
    validate_index_set(v, j)?;
    let opts = RelaxOptions::default();
    let raw = solve_lp_relaxation(v, j, &opts)?.cert_ub_ln;
    let projected = project_rows(v, j)?.to_instance()?;
    let proj = solve_lp_relaxation(&projected, j, &opts)?.cert_ub_ln;
    Ok((raw, proj, proj <= raw + DOMINANCE_SLACK))
}
