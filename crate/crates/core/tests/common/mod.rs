//! Test-side oracles shared by the integration tests.
#![allow(dead_code)]

use maxdet::conic::{ConicModel, ExpArg, Relation};
use maxdet::InstanceMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

// links the system BLAS/LAPACK used by the conic solver
extern crate openblas_src;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn gaussian(rng: &mut ChaCha8Rng, n: usize, r: usize) -> InstanceMatrix {
    let data = (0..n * r).map(|_| StandardNormal.sample(rng)).collect();
    InstanceMatrix::new(n, r, data).expect("gaussian matrix has full rank")
}

/// The seeded corpus: 200 instances, n in [6, 14], r in [2, 6].
pub fn corpus() -> Vec<InstanceMatrix> {
    let mut g = rng(20_240_601);
    (0..200)
        .map(|_| {
            let n = g.random_range(6..=14);
            let r = g.random_range(2..=6);
            gaussian(&mut g, n, r)
        })
        .collect()
}

/// `|det A|` by Gaussian elimination with partial pivoting, as `log2`.
pub fn log2_absdet_elim(k: usize, mut a: Vec<f64>) -> f64 {
    let mut acc = 0.0;
    for c in 0..k {
        let p = (c..k)
            .max_by(|&x, &y| a[x * k + c].abs().total_cmp(&a[y * k + c].abs()))
            .unwrap();
        let piv = a[p * k + c];
        if piv == 0.0 {
            return f64::NEG_INFINITY;
        }
        for j in 0..k {
            a.swap(c * k + j, p * k + j);
        }
        acc += piv.abs().log2();
        for i in c + 1..k {
            let f = a[i * k + c] / piv;
            for j in c..k {
                a[i * k + j] -= f * a[c * k + j];
            }
        }
    }
    acc
}

pub fn rows_of(v: &InstanceMatrix, rows: &[usize]) -> Vec<f64> {
    rows.iter()
        .flat_map(|&i| v.row(i).iter().copied())
        .collect()
}

/// `log2 det M_K = 2 log2 |det V_K|`.
pub fn log2_det_m(v: &InstanceMatrix, rows: &[usize]) -> f64 {
    2.0 * log2_absdet_elim(v.ncols(), rows_of(v, rows))
}

/// Calls `f` on every `k`-subset of `items`, in lexicographic order.
pub fn for_each_subset(items: &[usize], k: usize, f: &mut impl FnMut(&[usize])) {
    fn rec(
        items: &[usize],
        k: usize,
        start: usize,
        cur: &mut Vec<usize>,
        f: &mut impl FnMut(&[usize]),
    ) {
        if cur.len() == k {
            f(cur);
            return;
        }
        for i in start..items.len() {
            if items.len() - i < k - cur.len() {
                break;
            }
            cur.push(items[i]);
            rec(items, k, i + 1, cur, f);
            cur.pop();
        }
    }
    rec(items, k, 0, &mut Vec::with_capacity(k), f);
}

/// Best `log2 det M_{J∪K}` over `K ⊆ candidates`, `|J ∪ K| = r`, by enumeration.
pub fn best_completion(v: &InstanceMatrix, j: &[usize], candidates: &[usize]) -> f64 {
    let need = v.ncols() - j.len();
    let mut best = f64::NEG_INFINITY;
    let mut rows = j.to_vec();
    for_each_subset(candidates, need, &mut |k| {
        rows.truncate(j.len());
        rows.extend_from_slice(k);
        best = best.max(log2_det_m(v, &rows));
    });
    best
}

pub fn brute_force_log2(v: &InstanceMatrix) -> f64 {
    let all: Vec<usize> = (0..v.nrows()).collect();
    best_completion(v, &[], &all)
}

pub fn binomial(n: usize, k: usize) -> u128 {
    (0..k as u128).fold(1u128, |acc, i| acc * (n as u128 - i) / (i + 1))
}

/// Solves a conic model with Clarabel and returns the maximized objective.
///
/// Rows are `A w + b ∈ K`; Clarabel wants `b' - A' w ∈ K`, so `A' = -A`.
/// Its exponential cone is `{(x, y, z) : y e^{x/y} <= z}`, the reverse of the
/// model's `(x1, x2, x3)` ordering, and its PSD cone uses the scaled upper
/// triangle in column-major order.
pub fn solve_with_clarabel(model: &ConicModel) -> Result<f64, String> {
    use clarabel::algebra::CscMatrix;
    use clarabel::solver::*;

    struct Rows {
        ii: Vec<usize>,
        jj: Vec<usize>,
        vv: Vec<f64>,
        b: Vec<f64>,
    }
    impl Rows {
        fn push(&mut self, terms: &[(usize, f64)], constant: f64) {
            let row = self.b.len();
            for &(v, c) in terms {
                self.ii.push(row);
                self.jj.push(v);
                self.vv.push(-c);
            }
            self.b.push(constant);
        }
    }

    let nv = model.num_scalar_vars;
    let mut rows = Rows {
        ii: vec![],
        jj: vec![],
        vv: vec![],
        b: vec![],
    };
    let mut cones = Vec::new();

    let mut zero = 0;
    for c in model
        .linear_constraints
        .iter()
        .filter(|c| c.relation == Relation::Eq)
    {
        rows.push(&c.terms, -c.rhs);
        zero += 1;
    }
    for (i, bb) in model.box_bounds.iter().enumerate() {
        if let (Some(lo), Some(hi)) = (bb.lo, bb.hi) {
            if lo == hi {
                rows.push(&[(i, 1.0)], -lo);
                zero += 1;
            }
        }
    }
    if zero > 0 {
        cones.push(ZeroConeT(zero));
    }

    let mut nonneg = 0;
    for c in &model.linear_constraints {
        match c.relation {
            Relation::Eq => {}
            Relation::Ge => {
                rows.push(&c.terms, -c.rhs);
                nonneg += 1;
            }
            Relation::Le => {
                let neg: Vec<_> = c.terms.iter().map(|&(v, a)| (v, -a)).collect();
                rows.push(&neg, c.rhs);
                nonneg += 1;
            }
        }
    }
    for (i, bb) in model.box_bounds.iter().enumerate() {
        if bb.lo.is_some() && bb.lo == bb.hi {
            continue;
        }
        if let Some(lo) = bb.lo {
            rows.push(&[(i, 1.0)], -lo);
            nonneg += 1;
        }
        if let Some(hi) = bb.hi {
            rows.push(&[(i, -1.0)], hi);
            nonneg += 1;
        }
    }
    if nonneg > 0 {
        cones.push(NonnegativeConeT(nonneg));
    }

    for cone in &model.exp_cones {
        for arg in cone.iter().rev() {
            match *arg {
                ExpArg::Var(v) => rows.push(&[(v, 1.0)], 0.0),
                ExpArg::Const(c) => rows.push(&[], c),
            }
        }
        cones.push(ExponentialConeT());
    }

    for blk in &model.psd_blocks {
        let d = blk.order;
        let len = d * (d + 1) / 2;
        let mut constant = vec![0.0; len];
        let mut coeffs: Vec<Vec<(usize, f64)>> = vec![Vec::new(); len];
        for t in &blk.terms {
            for &(a, bcol, c) in &t.entries {
                // lower (a, b) is upper (b, a): column a, row b
                let idx = a * (a + 1) / 2 + bcol;
                let scale = if a == bcol {
                    1.0
                } else {
                    std::f64::consts::SQRT_2
                };
                match t.var {
                    Some(v) => coeffs[idx].push((v, c * scale)),
                    None => constant[idx] += c * scale,
                }
            }
        }
        for k in 0..len {
            rows.push(&coeffs[k], constant[k]);
        }
        cones.push(PSDTriangleConeT(d));
    }

    let m = rows.b.len();
    let a = CscMatrix::new_from_triplets(m, nv, rows.ii, rows.jj, rows.vv);
    let p = CscMatrix::zeros((nv, nv));
    let mut q = vec![0.0; nv];
    for &(v, c) in &model.objective {
        q[v] -= c;
    }
    let settings = DefaultSettingsBuilder::default()
        .verbose(false)
        .tol_gap_abs(1e-9)
        .tol_gap_rel(1e-9)
        .tol_feas(1e-9)
        .max_iter(500)
        .build()
        .map_err(|e| format!("{e:?}"))?;
    let mut solver =
        DefaultSolver::new(&p, &q, &a, &rows.b, &cones, settings).map_err(|e| format!("{e:?}"))?;
    solver.solve();
    match solver.solution.status {
        SolverStatus::Solved | SolverStatus::AlmostSolved => Ok(-solver.solution.obj_val),
        s => Err(format!("{s:?}")),
    }
}

/// Signed determinant by elimination.
pub fn det_signed(k: usize, mut a: Vec<f64>) -> f64 {
    let mut det = 1.0;
    for c in 0..k {
        let p = (c..k)
            .max_by(|&x, &y| a[x * k + c].abs().total_cmp(&a[y * k + c].abs()))
            .unwrap();
        if a[p * k + c] == 0.0 {
            return 0.0;
        }
        if p != c {
            for j in 0..k {
                a.swap(c * k + j, p * k + j);
            }
            det = -det;
        }
        let piv = a[c * k + c];
        det *= piv;
        for i in c + 1..k {
            let f = a[i * k + c] / piv;
            for j in c..k {
                a[i * k + j] -= f * a[c * k + j];
            }
        }
    }
    det
}

/// `G G^T` for a random `k x rank` Gaussian `G`, row-major.
pub fn random_psd(g: &mut ChaCha8Rng, k: usize, rank: usize) -> Vec<f64> {
    let f: Vec<f64> = (0..k * rank).map(|_| StandardNormal.sample(g)).collect();
    let mut out = vec![0.0; k * k];
    for i in 0..k {
        for j in 0..k {
            out[i * k + j] = (0..rank).map(|t| f[i * rank + t] * f[j * rank + t]).sum();
        }
    }
    out
}

/// Multilinearity check: returns `(lhs, rhs, scale)` for
/// `det [[α + a, b^T], [c, D]] = α det D + det [[a, b^T], [c, D]]`.
pub fn multilinear_trial(g: &mut ChaCha8Rng, m: usize) -> (f64, f64, f64) {
    let mut sample = || -> f64 { StandardNormal.sample(g) };
    let alpha = sample();
    let mut base: Vec<f64> = (0..m * m).map(|_| sample()).collect();
    let d: Vec<f64> = (1..m)
        .flat_map(|i| base[i * m + 1..(i + 1) * m].to_vec())
        .collect();
    let det_unsummed = det_signed(m, base.clone());
    base[0] += alpha;
    let lhs = det_signed(m, base);
    let det_d = if m == 1 { 1.0 } else { det_signed(m - 1, d) };
    let rhs = alpha * det_d + det_unsummed;
    let scale = (alpha * det_d).abs() + det_unsummed.abs();
    (lhs, rhs, scale)
}

/// Block PSD check: returns `(det [[A+B, C], [C^T, D]], det A · det D)`
/// for random PSD `A` (order `k`) and PSD `[[B, C], [C^T, D]]` (order `k + m`).
pub fn block_psd_trial(g: &mut ChaCha8Rng, k: usize, m: usize) -> (f64, f64) {
    let rank_a = g.random_range(1..=k);
    let rank_big = g.random_range(1..=k + m);
    let a = random_psd(g, k, rank_a);
    let big_n = k + m;
    let mut big = random_psd(g, big_n, rank_big);
    let d: Vec<f64> = (k..big_n)
        .flat_map(|i| big[i * big_n + k..(i + 1) * big_n].to_vec())
        .collect();
    for i in 0..k {
        for j in 0..k {
            big[i * big_n + j] += a[i * k + j];
        }
    }
    let lhs = det_signed(big_n, big);
    let rhs = det_signed(k, a) * det_signed(m, d);
    (lhs, rhs)
}
