//! Conic formulations of the relaxation, for external solvers.
//!
//! Both models maximize `Σ s_j` subject to `(z_jj, 1, s_j) ∈ K_exp` and the
//! block constraint
//!
//! ```text
//! 𝒱(x, z) = [ V^T Diag(x) V   L(z)             ]  ⪰ 0
//!           [ L(z)^T          Diag(z_11..z_rr) ]
//! ```
//!
//! with `L(z)` lower triangular. The `lp` model relaxes `x` to the capped
//! simplex; the `sdp` model lifts `x` to a moment matrix `Y` of order `n+1`
//! and imposes the block constraint on every column of `Y` and its complement.
//!
//! A PSD block reads `Σ_v var_v·H_v + D ⪰ 0` with coefficient matrices stored
//! as lower-triangular `(row, col, value)` triplets, `row >= col`.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use nalgebra::{DMatrix, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{validate_index_set, InstanceMatrix};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Form {
    Lp,
    Sdp,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ModelFormat {
    Cbf,
    Json,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Relation {
    Eq,
    Le,
    Ge,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LinearConstraint {
    /// `(variable, coefficient)` pairs.
    pub terms: Vec<(usize, f64)>,
    pub relation: Relation,
    pub rhs: f64,
}

/// `None` on either side means unbounded.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BoxBound {
    pub lo: Option<f64>,
    pub hi: Option<f64>,
}

impl BoxBound {
    pub const FREE: Self = Self { lo: None, hi: None };

    pub fn new(lo: f64, hi: f64) -> Self {
        Self {
            lo: Some(lo),
            hi: Some(hi),
        }
    }
}

/// Coefficient matrix of one variable in a PSD block; `var = None` is the constant term.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PsdTerm {
    pub var: Option<usize>,
    pub entries: Vec<(usize, usize, f64)>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PsdBlock {
    pub order: usize,
    pub terms: Vec<PsdTerm>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExpArg {
    Var(usize),
    Const(f64),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VarGroup {
    pub name: String,
    pub start: usize,
    pub len: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelMetadata {
    pub name: String,
    pub form: Form,
    pub n: usize,
    pub r: usize,
    /// Fixed rows, 0-based.
    pub j: Vec<usize>,
}

/// A conic program `max c^T w` over linear rows, boxes, PSD blocks and
/// exponential cones `x1 >= x2·exp(x3/x2)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConicModel {
    pub metadata: ModelMetadata,
    pub num_scalar_vars: usize,
    pub var_groups: Vec<VarGroup>,
    pub objective: Vec<(usize, f64)>,
    pub linear_constraints: Vec<LinearConstraint>,
    pub box_bounds: Vec<BoxBound>,
    pub psd_blocks: Vec<PsdBlock>,
    pub exp_cones: Vec<[ExpArg; 3]>,
}

/// Largest violation of each constraint family at a point.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Residuals {
    pub bounds: f64,
    pub linear: f64,
    /// Largest `-λ_min` over PSD blocks, floored at zero.
    pub psd: f64,
    pub exp: f64,
}

impl Residuals {
    pub fn max(&self) -> f64 {
        self.bounds.max(self.linear).max(self.psd).max(self.exp)
    }
}

/// Number of entries of a lower-triangular `r x r` matrix.
pub fn tri_len(r: usize) -> usize {
    r * (r + 1) / 2
}

/// Position of `L_ab` (`a >= b`) inside `z`: diagonal first, then the strict
/// lower triangle row by row.
pub fn tri_index(r: usize, a: usize, b: usize) -> usize {
    debug_assert!(a >= b && a < r);
    if a == b {
        a
    } else {
        r + a * (a - 1) / 2 + b
    }
}

/// Accumulates a PSD block, merging repeated coefficients.
struct BlockBuilder {
    order: usize,
    terms: BTreeMap<Option<usize>, BTreeMap<(usize, usize), f64>>,
}

impl BlockBuilder {
    fn new(order: usize) -> Self {
        Self {
            order,
            terms: BTreeMap::new(),
        }
    }

    fn add(&mut self, var: Option<usize>, i: usize, j: usize, coef: f64) {
        if coef == 0.0 {
            return;
        }
        *self
            .terms
            .entry(var)
            .or_default()
            .entry((i.max(j), i.min(j)))
            .or_insert(0.0) += coef;
    }

    /// Adds `sign · 𝒱(y, z)` where `y_k` is variable `y(k)` and `L_ab` is `z(a, b)`.
    fn add_v_block(
        &mut self,
        v: &InstanceMatrix,
        y: impl Fn(usize) -> usize,
        z: impl Fn(usize, usize) -> usize,
        sign: f64,
    ) {
        let r = v.ncols();
        for k in 0..v.nrows() {
            let row = v.row(k);
            for a in 0..r {
                for b in 0..=a {
                    self.add(Some(y(k)), a, b, sign * row[a] * row[b]);
                }
            }
        }
        for a in 0..r {
            for b in 0..=a {
                // top-right block holds L, so L_ab lands at (r + b, a)
                self.add(Some(z(a, b)), r + b, a, sign);
            }
            self.add(Some(z(a, a)), r + a, r + a, sign);
        }
    }

    fn finish(self) -> PsdBlock {
        let terms = self
            .terms
            .into_iter()
            .filter_map(|(var, entries)| {
                let entries: Vec<_> = entries
                    .into_iter()
                    .filter(|&(_, c)| c != 0.0)
                    .map(|((i, j), c)| (i, j, c))
                    .collect();
                (!entries.is_empty()).then_some(PsdTerm { var, entries })
            })
            .collect();
        PsdBlock {
            order: self.order,
            terms,
        }
    }
}

/// Variable layout of the `lp` model: `x`, then `z`, then `s`.
#[derive(Debug, Clone, Copy)]
pub struct LpLayout {
    pub n: usize,
    pub r: usize,
}

impl LpLayout {
    pub fn x(&self, i: usize) -> usize {
        i
    }
    pub fn z(&self, a: usize, b: usize) -> usize {
        self.n + tri_index(self.r, a, b)
    }
    pub fn s(&self, j: usize) -> usize {
        self.n + tri_len(self.r) + j
    }
    pub fn len(&self) -> usize {
        self.n + tri_len(self.r) + self.r
    }
    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// Variable layout of the `sdp` model: the upper triangle of `Y` (row-major,
/// indices `0..=n`), then `z^0, ..., z^n`, then `s`.
#[derive(Debug, Clone, Copy)]
pub struct SdpLayout {
    pub n: usize,
    pub r: usize,
}

impl SdpLayout {
    fn y_len(&self) -> usize {
        (self.n + 1) * (self.n + 2) / 2
    }
    /// `Y_ab`, symmetric in its arguments.
    pub fn y(&self, a: usize, b: usize) -> usize {
        let (a, b) = (a.min(b), a.max(b));
        // rows before `a` hold n+1, n, ..., n+2-a entries
        a * (self.n + 1) - a * a.saturating_sub(1) / 2 + (b - a)
    }
    pub fn z(&self, i: usize, a: usize, b: usize) -> usize {
        self.y_len() + i * tri_len(self.r) + tri_index(self.r, a, b)
    }
    pub fn s(&self, j: usize) -> usize {
        self.y_len() + (self.n + 1) * tri_len(self.r) + j
    }
    pub fn len(&self) -> usize {
        self.s(0) + self.r
    }
    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

fn metadata(name: &str, form: Form, v: &InstanceMatrix, j: &[usize]) -> ModelMetadata {
    ModelMetadata {
        name: name.to_string(),
        form,
        n: v.nrows(),
        r: v.ncols(),
        j: j.to_vec(),
    }
}

/// The block-constraint model with `x` relaxed to the capped simplex. Its
/// optimum equals the optimum of the log-det relaxation.
pub fn build_expcone_lp(v: &InstanceMatrix, j: &[usize]) -> Result<ConicModel> {
    validate_index_set(v, j)?;
    let (n, r) = (v.nrows(), v.ncols());
    let lay = LpLayout { n, r };

    let mut box_bounds = vec![BoxBound::FREE; lay.len()];
    for i in 0..n {
        box_bounds[lay.x(i)] = BoxBound::new(0.0, 1.0);
    }
    for &i in j {
        box_bounds[lay.x(i)] = BoxBound::new(1.0, 1.0);
    }

    let mut block = BlockBuilder::new(2 * r);
    block.add_v_block(v, |k| lay.x(k), |a, b| lay.z(a, b), 1.0);

    Ok(ConicModel {
        metadata: metadata("lp", Form::Lp, v, j),
        num_scalar_vars: lay.len(),
        var_groups: vec![
            VarGroup {
                name: "x".into(),
                start: 0,
                len: n,
            },
            VarGroup {
                name: "z".into(),
                start: n,
                len: tri_len(r),
            },
            VarGroup {
                name: "s".into(),
                start: lay.s(0),
                len: r,
            },
        ],
        objective: (0..r).map(|k| (lay.s(k), 1.0)).collect(),
        linear_constraints: vec![LinearConstraint {
            terms: (0..n).map(|i| (lay.x(i), 1.0)).collect(),
            relation: Relation::Eq,
            rhs: r as f64,
        }],
        box_bounds,
        psd_blocks: vec![block.finish()],
        exp_cones: (0..r)
            .map(|k| {
                [
                    ExpArg::Var(lay.z(k, k)),
                    ExpArg::Const(1.0),
                    ExpArg::Var(lay.s(k)),
                ]
            })
            .collect(),
    })
}

/// The lifted relaxation over a moment matrix `Y ⪰ 0`, `Y >= 0`, with
/// `Y_00 = 1`, `Y_0i = Y_ii`, `Y (-r, e)^T = 0` and `y^0` in the capped
/// simplex with `y^0_J = 1`.
pub fn build_sdp_relaxation(v: &InstanceMatrix, j: &[usize]) -> Result<ConicModel> {
    validate_index_set(v, j)?;
    let (n, r) = (v.nrows(), v.ncols());
    let lay = SdpLayout { n, r };

    let mut box_bounds = vec![BoxBound::FREE; lay.len()];
    for a in 0..=n {
        for b in a..=n {
            box_bounds[lay.y(a, b)] = BoxBound {
                lo: Some(0.0),
                hi: None,
            };
        }
    }
    for k in 1..=n {
        box_bounds[lay.y(0, k)] = BoxBound::new(0.0, 1.0);
    }
    for &i in j {
        box_bounds[lay.y(0, i + 1)] = BoxBound::new(1.0, 1.0);
    }

    let mut linear = Vec::new();
    for a in 0..=n {
        let mut terms = BTreeMap::new();
        *terms.entry(lay.y(a, 0)).or_insert(0.0) -= r as f64;
        for k in 1..=n {
            *terms.entry(lay.y(a, k)).or_insert(0.0) += 1.0;
        }
        linear.push(LinearConstraint {
            terms: terms.into_iter().filter(|&(_, c)| c != 0.0).collect(),
            relation: Relation::Eq,
            rhs: 0.0,
        });
    }
    for i in 1..=n {
        linear.push(LinearConstraint {
            terms: vec![(lay.y(0, i), 1.0), (lay.y(i, i), -1.0)],
            relation: Relation::Eq,
            rhs: 0.0,
        });
    }
    linear.push(LinearConstraint {
        terms: vec![(lay.y(0, 0), 1.0)],
        relation: Relation::Eq,
        rhs: 1.0,
    });
    linear.push(LinearConstraint {
        terms: (1..=n).map(|k| (lay.y(0, k), 1.0)).collect(),
        relation: Relation::Eq,
        rhs: r as f64,
    });

    let mut blocks = Vec::with_capacity(2 * n + 2);
    let mut ylmi = BlockBuilder::new(n + 1);
    for a in 0..=n {
        for b in 0..=a {
            ylmi.add(Some(lay.y(a, b)), a, b, 1.0);
        }
    }
    blocks.push(ylmi.finish());
    // y^i_k = Y_{k,i} for rows k = 1..n
    for i in 0..=n {
        let mut blk = BlockBuilder::new(2 * r);
        blk.add_v_block(v, |k| lay.y(k + 1, i), |a, b| lay.z(i, a, b), 1.0);
        blocks.push(blk.finish());
    }
    for i in 1..=n {
        let mut blk = BlockBuilder::new(2 * r);
        blk.add_v_block(v, |k| lay.y(k + 1, 0), |a, b| lay.z(0, a, b), 1.0);
        blk.add_v_block(v, |k| lay.y(k + 1, i), |a, b| lay.z(i, a, b), -1.0);
        blocks.push(blk.finish());
    }

    let mut groups = vec![VarGroup {
        name: "Y".into(),
        start: 0,
        len: lay.y_len(),
    }];
    for i in 0..=n {
        groups.push(VarGroup {
            name: format!("z{i}"),
            start: lay.z(i, 0, 0),
            len: tri_len(r),
        });
    }
    groups.push(VarGroup {
        name: "s".into(),
        start: lay.s(0),
        len: r,
    });

    Ok(ConicModel {
        metadata: metadata("sdp", Form::Sdp, v, j),
        num_scalar_vars: lay.len(),
        var_groups: groups,
        objective: (0..r).map(|k| (lay.s(k), 1.0)).collect(),
        linear_constraints: linear,
        box_bounds,
        psd_blocks: blocks,
        exp_cones: (0..r)
            .map(|k| {
                [
                    ExpArg::Var(lay.z(0, k, k)),
                    ExpArg::Const(1.0),
                    ExpArg::Var(lay.s(k)),
                ]
            })
            .collect(),
    })
}

/// Lower Cholesky factor `C` of `V_K^T V_K`, and `Z = C·Diag(C_11..C_rr)`
/// stored as `z` (diagonal `C_jj²`). Then `𝒱(x, z) ⪰ 0` with `Π z_jj = det`.
fn lifted_z(v: &InstanceMatrix, subset: &[usize]) -> Result<Vec<f64>> {
    let r = v.ncols();
    if subset.len() != r {
        return Err(Error::InvalidIndexSet(format!(
            "binary point needs exactly r = {r} rows, got {}",
            subset.len()
        )));
    }
    validate_index_set(v, subset)?;
    let mut g = DMatrix::<f64>::zeros(r, r);
    for &k in subset {
        let row = nalgebra::DVector::from_row_slice(v.row(k));
        g += &row * row.transpose();
    }
    let c = g.cholesky().ok_or(Error::SingularWeighting)?.unpack();
    let mut z = vec![0.0; tri_len(r)];
    for a in 0..r {
        for b in 0..=a {
            z[tri_index(r, a, b)] = c[(a, b)] * c[(b, b)];
        }
    }
    Ok(z)
}

/// Embeds the binary point with support `subset` (0-based) into the `lp` model.
pub fn lifted_lp_point(v: &InstanceMatrix, subset: &[usize]) -> Result<Vec<f64>> {
    let z = lifted_z(v, subset)?;
    let (n, r) = (v.nrows(), v.ncols());
    let lay = LpLayout { n, r };
    let mut w = vec![0.0; lay.len()];
    for &k in subset {
        w[lay.x(k)] = 1.0;
    }
    w[n..n + z.len()].copy_from_slice(&z);
    for k in 0..r {
        w[lay.s(k)] = z[k].ln();
    }
    Ok(w)
}

/// Embeds the binary point with support `subset` into the `sdp` model:
/// `Y = (1; x)(1; x)^T`, `z^0 = z`, and `z^i = z` or `0` as `x_i` is 1 or 0.
pub fn lifted_sdp_point(v: &InstanceMatrix, subset: &[usize]) -> Result<Vec<f64>> {
    let z = lifted_z(v, subset)?;
    let (n, r) = (v.nrows(), v.ncols());
    let lay = SdpLayout { n, r };
    let mut lifted = vec![0.0; n + 1];
    lifted[0] = 1.0;
    for &k in subset {
        lifted[k + 1] = 1.0;
    }
    let mut w = vec![0.0; lay.len()];
    for a in 0..=n {
        for b in a..=n {
            w[lay.y(a, b)] = lifted[a] * lifted[b];
        }
    }
    for (i, &on) in lifted.iter().enumerate() {
        if on == 1.0 {
            let start = lay.z(i, 0, 0);
            w[start..start + z.len()].copy_from_slice(&z);
        }
    }
    for k in 0..r {
        w[lay.s(k)] = z[k].ln();
    }
    Ok(w)
}

impl ConicModel {
    /// Structural checks: index ranges, lower-triangular entries, box sizes.
    pub fn validate(&self) -> Result<()> {
        let m = self.num_scalar_vars;
        let bad = |msg: String| Err(Error::InvalidDimensions(msg));
        if self.box_bounds.len() != m {
            return bad(format!(
                "{} box bounds for {m} variables",
                self.box_bounds.len()
            ));
        }
        for (i, b) in self.box_bounds.iter().enumerate() {
            if let (Some(lo), Some(hi)) = (b.lo, b.hi) {
                if lo > hi {
                    return bad(format!("variable {i} has empty box [{lo}, {hi}]"));
                }
            }
        }
        let var_ok = |i: usize| i < m;
        if !self.objective.iter().all(|&(i, _)| var_ok(i)) {
            return bad("objective references an unknown variable".into());
        }
        for (k, row) in self.linear_constraints.iter().enumerate() {
            if !row.terms.iter().all(|&(i, _)| var_ok(i)) {
                return bad(format!("linear row {k} references an unknown variable"));
            }
        }
        for (k, blk) in self.psd_blocks.iter().enumerate() {
            for t in &blk.terms {
                if t.var.is_some_and(|i| !var_ok(i)) {
                    return bad(format!("psd block {k} references an unknown variable"));
                }
                if !t.entries.iter().all(|&(a, b, _)| a < blk.order && b <= a) {
                    return bad(format!(
                        "psd block {k} has an entry outside its lower triangle"
                    ));
                }
            }
        }
        for (k, cone) in self.exp_cones.iter().enumerate() {
            let vars: Vec<usize> = cone
                .iter()
                .filter_map(|a| match a {
                    ExpArg::Var(i) => Some(*i),
                    ExpArg::Const(_) => None,
                })
                .collect();
            if !vars.iter().all(|&i| var_ok(i)) {
                return bad(format!("exp cone {k} references an unknown variable"));
            }
            if (1..vars.len()).any(|a| vars[..a].contains(&vars[a])) {
                return bad(format!("exp cone {k} repeats a variable"));
            }
        }
        Ok(())
    }

    pub fn objective_value(&self, w: &[f64]) -> f64 {
        self.objective.iter().map(|&(i, c)| c * w[i]).sum()
    }

    /// Dense symmetric value of PSD block `k` at `w`.
    pub fn block_matrix(&self, k: usize, w: &[f64]) -> DMatrix<f64> {
        let blk = &self.psd_blocks[k];
        let mut m = DMatrix::zeros(blk.order, blk.order);
        for t in &blk.terms {
            let scale = t.var.map_or(1.0, |i| w[i]);
            for &(a, b, c) in &t.entries {
                m[(a, b)] += scale * c;
                if a != b {
                    m[(b, a)] += scale * c;
                }
            }
        }
        m
    }

    /// Constraint violations at `w`.
    pub fn residuals(&self, w: &[f64]) -> Residuals {
        assert_eq!(w.len(), self.num_scalar_vars, "point has the wrong length");
        let mut res = Residuals::default();
        for (b, &x) in self.box_bounds.iter().zip(w) {
            if let Some(lo) = b.lo {
                res.bounds = res.bounds.max(lo - x);
            }
            if let Some(hi) = b.hi {
                res.bounds = res.bounds.max(x - hi);
            }
        }
        for row in &self.linear_constraints {
            let lhs: f64 = row.terms.iter().map(|&(i, c)| c * w[i]).sum();
            let d = lhs - row.rhs;
            let viol = match row.relation {
                Relation::Eq => d.abs(),
                Relation::Le => d,
                Relation::Ge => -d,
            };
            res.linear = res.linear.max(viol);
        }
        for k in 0..self.psd_blocks.len() {
            let eig = SymmetricEigen::new(self.block_matrix(k, w)).eigenvalues;
            let min = eig.iter().copied().fold(f64::INFINITY, f64::min);
            res.psd = res.psd.max(-min);
        }
        for cone in &self.exp_cones {
            let val = |a: &ExpArg| match *a {
                ExpArg::Var(i) => w[i],
                ExpArg::Const(c) => c,
            };
            let (x1, x2, x3) = (val(&cone[0]), val(&cone[1]), val(&cone[2]));
            let viol = if x2 > 0.0 {
                x2 * (x3 / x2).exp() - x1
            } else {
                (-x1).max(x3).max(-x2)
            };
            res.exp = res.exp.max(viol);
        }
        res
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("model serializes")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::Parse {
            line: e.line(),
            column: e.column(),
            message: e.to_string(),
        })
    }

    /// Conic Benchmark Format (version 3) text.
    pub fn to_cbf(&self) -> String {
        cbf::write(self)
    }
}

pub fn write_model(model: &ConicModel, format: ModelFormat, path: impl AsRef<Path>) -> Result<()> {
    model.validate()?;
    let mut text = match format {
        ModelFormat::Cbf => model.to_cbf(),
        ModelFormat::Json => model.to_json(),
    };
    if !text.ends_with('\n') {
        text.push('\n');
    }
    std::fs::write(path, text)?;
    Ok(())
}

/// Reads a JSON model written by [`write_model`].
pub fn read_model(path: impl AsRef<Path>) -> Result<ConicModel> {
    let text = std::fs::read_to_string(path)?;
    ConicModel::from_json(&text)
}

mod cbf {
    use super::*;

    #[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
    enum Cone {
        Zero,
        NonNeg,
        Exp,
    }

    struct Row {
        cone: Cone,
        terms: Vec<(usize, f64)>,
        constant: f64,
    }

    fn num(v: f64) -> String {
        if v == v.trunc() && v.abs() < 1e15 {
            format!("{}", v as i64)
        } else {
            format!("{v:e}")
        }
    }

    /// Affine rows `A w + b` in cone order: zero, nonnegative, then one
    /// exponential triple per cone.
    fn rows(model: &ConicModel) -> Vec<Row> {
        let mut zero = Vec::new();
        let mut nonneg = Vec::new();
        for c in &model.linear_constraints {
            let neg = |t: &Vec<(usize, f64)>| t.iter().map(|&(i, a)| (i, -a)).collect();
            match c.relation {
                Relation::Eq => zero.push(Row {
                    cone: Cone::Zero,
                    terms: c.terms.clone(),
                    constant: -c.rhs,
                }),
                Relation::Ge => nonneg.push(Row {
                    cone: Cone::NonNeg,
                    terms: c.terms.clone(),
                    constant: -c.rhs,
                }),
                Relation::Le => nonneg.push(Row {
                    cone: Cone::NonNeg,
                    terms: neg(&c.terms),
                    constant: c.rhs,
                }),
            }
        }
        for (i, b) in model.box_bounds.iter().enumerate() {
            match (b.lo, b.hi) {
                (Some(lo), Some(hi)) if lo == hi => zero.push(Row {
                    cone: Cone::Zero,
                    terms: vec![(i, 1.0)],
                    constant: -lo,
                }),
                (lo, hi) => {
                    if let Some(lo) = lo {
                        nonneg.push(Row {
                            cone: Cone::NonNeg,
                            terms: vec![(i, 1.0)],
                            constant: -lo,
                        });
                    }
                    if let Some(hi) = hi {
                        nonneg.push(Row {
                            cone: Cone::NonNeg,
                            terms: vec![(i, -1.0)],
                            constant: hi,
                        });
                    }
                }
            }
        }
        let mut out = zero;
        out.extend(nonneg);
        for cone in &model.exp_cones {
            for arg in cone {
                out.push(match *arg {
                    ExpArg::Var(i) => Row {
                        cone: Cone::Exp,
                        terms: vec![(i, 1.0)],
                        constant: 0.0,
                    },
                    ExpArg::Const(c) => Row {
                        cone: Cone::Exp,
                        terms: vec![],
                        constant: c,
                    },
                });
            }
        }
        out
    }

    pub(super) fn write(model: &ConicModel) -> String {
        let rows = rows(model);
        let mut s = String::new();
        let _ = writeln!(
            s,
            "# {} n={} r={}",
            model.metadata.name, model.metadata.n, model.metadata.r
        );
        s.push_str("VER\n3\n\nOBJSENSE\nMAX\n\n");
        let _ = writeln!(
            s,
            "VAR\n{} 1\nF {}\n",
            model.num_scalar_vars, model.num_scalar_vars
        );

        if !model.psd_blocks.is_empty() {
            let _ = writeln!(s, "PSDCON\n{}", model.psd_blocks.len());
            for b in &model.psd_blocks {
                let _ = writeln!(s, "{}", b.order);
            }
            s.push('\n');
        }

        let mut chunks: Vec<(&str, usize)> = Vec::new();
        for row in &rows {
            match row.cone {
                Cone::Zero | Cone::NonNeg => {
                    let name = if row.cone == Cone::Zero { "L=" } else { "L+" };
                    match chunks.last_mut() {
                        Some((last, count)) if *last == name => *count += 1,
                        _ => chunks.push((name, 1)),
                    }
                }
                Cone::Exp => {}
            }
        }
        for _ in &model.exp_cones {
            chunks.push(("EXP", 3));
        }
        let _ = writeln!(s, "CON\n{} {}", rows.len(), chunks.len());
        for (name, count) in &chunks {
            let _ = writeln!(s, "{name} {count}");
        }
        s.push('\n');

        let _ = writeln!(s, "OBJACOORD\n{}", model.objective.len());
        for &(i, c) in &model.objective {
            let _ = writeln!(s, "{i} {}", num(c));
        }
        s.push('\n');

        let acoord: Vec<(usize, usize, f64)> = rows
            .iter()
            .enumerate()
            .flat_map(|(k, row)| row.terms.iter().map(move |&(i, c)| (k, i, c)))
            .filter(|t| t.2 != 0.0)
            .collect();
        let _ = writeln!(s, "ACOORD\n{}", acoord.len());
        for (k, i, c) in acoord {
            let _ = writeln!(s, "{k} {i} {}", num(c));
        }
        s.push('\n');

        let bcoord: Vec<(usize, f64)> = rows
            .iter()
            .enumerate()
            .filter(|(_, row)| row.constant != 0.0)
            .map(|(k, row)| (k, row.constant))
            .collect();
        let _ = writeln!(s, "BCOORD\n{}", bcoord.len());
        for (k, c) in bcoord {
            let _ = writeln!(s, "{k} {}", num(c));
        }

        let mut hcoord = Vec::new();
        let mut dcoord = Vec::new();
        for (k, blk) in model.psd_blocks.iter().enumerate() {
            for t in &blk.terms {
                for &(a, b, c) in &t.entries {
                    match t.var {
                        Some(i) => hcoord.push((k, i, a, b, c)),
                        None => dcoord.push((k, a, b, c)),
                    }
                }
            }
        }
        if !hcoord.is_empty() {
            let _ = writeln!(s, "\nHCOORD\n{}", hcoord.len());
            for (k, i, a, b, c) in hcoord {
                let _ = writeln!(s, "{k} {i} {a} {b} {}", num(c));
            }
        }
        if !dcoord.is_empty() {
            let _ = writeln!(s, "\nDCOORD\n{}", dcoord.len());
            for (k, a, b, c) in dcoord {
                let _ = writeln!(s, "{k} {a} {b} {}", num(c));
            }
        }
        s
    }
}
