//! Odd-cycle-packing instances: rows of `V` are edge incidence vectors of a
//! random simple graph on `r` nodes.
//!
//! A set of `r` edges is nonsingular iff every connected component of the
//! edge subgraph has exactly one cycle and that cycle is odd; then
//! `|det V_K| = 2^k` with `k` the number of components.

use std::collections::VecDeque;
use std::fmt::Write as _;

use rand::seq::index;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::linalg::{log2_abs_det_square, InstanceMatrix};

#[derive(Debug, Clone, PartialEq)]
pub struct OcpInstance {
    /// Number of nodes (columns of `V`).
    pub r: usize,
    /// Number of edges (rows of `V`).
    pub n: usize,
    /// Sorted edges `(u, v)` with `u < v`, 0-based nodes.
    pub edges: Vec<(usize, usize)>,
    pub seed: u64,
    incidence: Vec<f64>,
}

/// Structure of an `r`-edge selection.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SelectionCheck {
    /// Number of odd-unicyclic components, 0 if singular.
    pub k: usize,
    /// `log2 |det V_K|`: `k`, or `-inf` when singular.
    pub absdet_log2: f64,
}

impl OcpInstance {
    /// Builds an instance from explicit edges (normalized to `u < v` and sorted).
    pub fn from_edges(r: usize, edges: &[(usize, usize)], seed: u64) -> Result<Self> {
        let mut norm: Vec<(usize, usize)> = Vec::with_capacity(edges.len());
        for &(a, b) in edges {
            if a == b || a >= r || b >= r {
                return Err(Error::BadDimensions(format!(
                    "edge ({a}, {b}) is a loop or leaves 0..{r}"
                )));
            }
            norm.push((a.min(b), a.max(b)));
        }
        norm.sort_unstable();
        if norm.windows(2).any(|w| w[0] == w[1]) {
            return Err(Error::BadDimensions("repeated edge".into()));
        }
        let n = norm.len();
        let mut incidence = vec![0.0; n * r];
        for (i, &(u, v)) in norm.iter().enumerate() {
            incidence[i * r + u] = 1.0;
            incidence[i * r + v] = 1.0;
        }
        Ok(Self {
            r,
            n,
            edges: norm,
            seed,
            incidence,
        })
    }

    /// Row-major `n x r` incidence matrix.
    pub fn incidence(&self) -> &[f64] {
        &self.incidence
    }

    /// The instance as a solver input. Fails with `RankDeficient` when some
    /// component of the graph is bipartite, since then `V` has rank below `r`.
    pub fn instance(&self) -> Result<InstanceMatrix> {
        InstanceMatrix::new(self.n, self.r, self.incidence.clone())
    }

    /// CSV with one row per edge and one column per node, no header.
    pub fn to_csv(&self) -> String {
        let mut out = String::with_capacity(self.n * (2 * self.r + 1));
        for &(u, v) in &self.edges {
            for c in 0..self.r {
                if c > 0 {
                    out.push(',');
                }
                out.push(if c == u || c == v { '1' } else { '0' });
            }
            out.push('\n');
        }
        out
    }

    pub fn write_csv(&self, path: impl AsRef<std::path::Path>) -> Result<()> {
        std::fs::write(path, self.to_csv())?;
        Ok(())
    }

    /// Human-readable edge list, 1-based nodes.
    pub fn describe(&self) -> String {
        let mut s = String::new();
        for &(u, v) in &self.edges {
            let _ = write!(s, "({},{}) ", u + 1, v + 1);
        }
        s.trim_end().to_string()
    }
}

/// Random graph with `n` distinct edges of `K_r`, chosen by a seeded partial
/// Fisher–Yates shuffle of the lexicographically ordered edge list.
pub fn gen_ocp(r: usize, n: usize, seed: u64) -> Result<OcpInstance> {
    let total = r.saturating_mul(r.saturating_sub(1)) / 2;
    if r < 3 || n < r || n > total {
        return Err(Error::BadDimensions(format!(
            "need 3 <= r <= n <= r(r-1)/2, got r = {r}, n = {n}"
        )));
    }
    let all: Vec<(usize, usize)> = (0..r)
        .flat_map(|u| (u + 1..r).map(move |v| (u, v)))
        .collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let picked: Vec<(usize, usize)> = index::sample(&mut rng, total, n)
        .into_iter()
        .map(|i| all[i])
        .collect();
    OcpInstance::from_edges(r, &picked, seed)
}

/// Component analysis of the selected edges (0-based row indices), checked
/// against a direct determinant.
pub fn verify_selection(inst: &OcpInstance, k: &[usize]) -> Result<SelectionCheck> {
    if k.len() != inst.r {
        return Err(Error::BadSubset(format!(
            "selected {} edges, need r = {}",
            k.len(),
            inst.r
        )));
    }
    let mut seen = vec![false; inst.n];
    for &e in k {
        if e >= inst.n || std::mem::replace(&mut seen[e], true) {
            return Err(Error::BadSubset(format!(
                "edge index {e} out of range or repeated"
            )));
        }
    }

    let structural = odd_unicyclic_components(inst.r, k.iter().map(|&e| inst.edges[e]));

    let mut sub = Vec::with_capacity(inst.r * inst.r);
    for &e in k {
        sub.extend_from_slice(&inst.incidence[e * inst.r..(e + 1) * inst.r]);
    }
    let direct = log2_abs_det_square(inst.r, &sub);
    let agrees = match structural {
        Some(c) => (direct.exp2() - (c as f64).exp2()).abs() <= 1e-9 * (c as f64).exp2(),
        None => direct == f64::NEG_INFINITY || direct.exp2() <= 1e-9,
    };
    if !agrees {
        return Err(Error::DeterminantMismatch {
            structural: structural.unwrap_or(0),
            direct: direct.exp2(),
        });
    }
    Ok(match structural {
        Some(c) => SelectionCheck {
            k: c,
            absdet_log2: c as f64,
        },
        None => SelectionCheck {
            k: 0,
            absdet_log2: f64::NEG_INFINITY,
        },
    })
}

/// Number of components if every one is unicyclic with an odd cycle.
fn odd_unicyclic_components(
    nodes: usize,
    edges: impl Iterator<Item = (usize, usize)>,
) -> Option<usize> {
    let mut adj = vec![Vec::new(); nodes];
    for (u, v) in edges {
        adj[u].push(v);
        adj[v].push(u);
    }
    let mut depth = vec![usize::MAX; nodes];
    let mut components = 0;
    for start in 0..nodes {
        if depth[start] != usize::MAX {
            continue;
        }
        components += 1;
        depth[start] = 0;
        let mut queue = VecDeque::from([start]);
        let (mut vertices, mut degree_sum, mut odd_cycle) = (0usize, 0usize, false);
        while let Some(u) = queue.pop_front() {
            vertices += 1;
            degree_sum += adj[u].len();
            for &w in &adj[u] {
                if depth[w] == usize::MAX {
                    depth[w] = depth[u] + 1;
                    queue.push_back(w);
                } else if depth[w] % 2 == depth[u] % 2 {
                    odd_cycle = true;
                }
            }
        }
        // unicyclic: edges == vertices
        if degree_sum / 2 != vertices || !odd_cycle {
            return None;
        }
    }
    Some(components)
}
