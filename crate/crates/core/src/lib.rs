//! Maximum-determinant principal submatrix selection.
//!
//! Given a full column rank factor `V` (n x r) of a rank-r PSD matrix `M = V V^T`,
//! choose `r` rows `K` maximizing `det M_K = det(V_K)^2`. The crate provides:
//!
//! - [`bnb`]: an exact branch-and-bound driven by the Hadamard bound evaluated on
//!   rows orthogonalized against the fixed set ([`linalg::project_rows`]).
//! - [`relax`]: the concave log-det relaxation over the capped simplex, solved by
//!   projected gradient ascent, with a linear-maximization certificate that is a
//!   rigorous upper bound at every iterate.
//! - [`conic`]: builders for the exponential-cone and strengthened SDP
//!   formulations, exported as CBF or JSON for external conic solvers.
//! - [`graph`]: odd-cycle-packing instances built from random graphs.
//! - [`io`]: CSV ingestion and independent-column extraction.
//! - [`cli`]: the `maxdet` command-line front end and report formatting.
//!
//! All volumes are carried in log space; `log2` for the combinatorial side and the
//! natural log inside the relaxation.

pub mod bnb;
pub mod bounds;
pub mod cli;
pub mod conic;
pub mod error;
pub mod graph;
pub mod io;
pub mod linalg;
pub mod relax;

pub use bnb::{greedy_incumbent, node_expand, solve, BnbNode, SolveOptions, SolveReport};
pub use bounds::{bound_dominance_check, hadamard_bound, BoundValue};
pub use error::{Error, Result};
pub use linalg::{
    grad_logdet_weighted, logdet_weighted, project_rows, InstanceMatrix, ProjectedRows,
};
pub use relax::{
    certificate_ub, lp_projection_dominance, project_capped_simplex, solve_lp_relaxation,
    CappedSimplex, RelaxOptions, RelaxSolution,
};
