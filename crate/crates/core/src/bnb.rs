//! Exact branch-and-bound for `max det M_{J∪K}` over completions `K`.
//!
//! Nodes carry the projected rows for their included set, so an include-branch
//! costs one rank-one re-projection of the remaining rows and an exclude-branch
//! reuses the parent's projection untouched. Bounds are the Hadamard bound on
//! the projected rows. The search is depth-first with the include child first,
//! warm-started by a greedy incumbent.

use std::collections::VecDeque;
use std::sync::atomic::{AtomicBool, AtomicU64, Ordering};
use std::sync::{Arc, Mutex};
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};

use crate::bounds::{hadamard_bound_unchecked, BoundValue};
use crate::cli::gap;
use crate::error::{Error, Result};
use crate::linalg::{project_rows, InstanceMatrix, ProjectedRows};

/// Default pruning/optimality tolerance on `log2 det M`.
pub const DEFAULT_EPS_OPT: f64 = 1e-9;
/// Default wall-clock limit for a solve, in seconds.
pub const DEFAULT_TIME_LIMIT_S: f64 = 600.0;

/// How often (in processed nodes) a worker looks at the clock.
const CLOCK_CHECK_EVERY: u64 = 64;

#[derive(Debug, Clone)]
pub struct SolveOptions {
    pub time_limit: Duration,
    pub eps_opt: f64,
    /// Number of worker threads. `1` is the deterministic mode.
    pub workers: usize,
    /// Record a progress sample every this many nodes (single-worker only, 0 = off).
    pub trace_every: u64,
}

impl Default for SolveOptions {
    fn default() -> Self {
        Self {
            time_limit: Duration::from_secs_f64(DEFAULT_TIME_LIMIT_S),
            eps_opt: DEFAULT_EPS_OPT,
            workers: 1,
            trace_every: 0,
        }
    }
}

/// Snapshot of the global bounds during a search.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ProgressSample {
    pub nodes: u64,
    pub lb_log2: f64,
    pub ub_log2: f64,
}

/// Outcome of [`solve`]. Values are `log2 det M_K`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SolveReport {
    pub n: usize,
    pub r: usize,
    pub lb_log2: f64,
    pub ub_log2: f64,
    /// Best subset found, 1-based and sorted.
    pub subset: Vec<usize>,
    pub optimal: bool,
    pub gap: f64,
    pub nodes_explored: u64,
    pub time_seconds: f64,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub trace: Vec<ProgressSample>,
}

impl SolveReport {
    pub fn subset_zero_based(&self) -> Vec<usize> {
        self.subset.iter().map(|i| i - 1).collect()
    }
}

/// A branch-and-bound node: included rows (inside `state`), excluded rows, and
/// the Hadamard bound over the remaining candidates.
#[derive(Debug, Clone)]
pub struct BnbNode<'a> {
    pub state: Arc<ProjectedRows<'a>>,
    pub excluded: Vec<bool>,
    pub bound: BoundValue,
    pub depth: usize,
}

impl<'a> BnbNode<'a> {
    /// Root node for the fixed set `J`.
    pub fn root(v: &'a InstanceMatrix, j: &[usize]) -> Result<Self> {
        let state = project_rows(v, j)?;
        let excluded = vec![false; v.nrows()];
        Self::with_state(Arc::new(state), excluded).map_err(|e| match e {
            Error::InfeasibleNode { .. } => Error::Infeasible,
            other => other,
        })
    }

    fn with_state(state: Arc<ProjectedRows<'a>>, excluded: Vec<bool>) -> Result<Self> {
        let bound = hadamard_bound_unchecked(
            &state,
            (0..excluded.len()).filter(|&i| !excluded[i] && !state.is_included(i)),
        )?;
        let depth = state.included().len();
        Ok(Self {
            state,
            excluded,
            bound,
            depth,
        })
    }

    /// Candidate rows: neither included nor excluded.
    pub fn candidates(&self) -> impl Iterator<Item = usize> + '_ {
        (0..self.excluded.len()).filter(|&i| !self.excluded[i] && !self.state.is_included(i))
    }

    /// `|J| = r`: the bound is the exact value of the subset `J`.
    pub fn is_leaf(&self) -> bool {
        self.depth == self.state.base().ncols()
    }

    /// Branch variable: the includable candidate with the largest projected
    /// norm, smallest index on ties.
    fn pivot(&self) -> Option<usize> {
        let mut best: Option<(usize, f64)> = None;
        for i in self.candidates() {
            if !self.state.is_includable(i) {
                continue;
            }
            let sq = self.state.tilde_sq_norm(i);
            if best.is_none_or(|(_, b)| sq > b) {
                best = Some((i, sq));
            }
        }
        best.map(|(i, _)| i)
    }
}

/// Expands `node` into its include and exclude children (in that order),
/// dropping children that are infeasible or whose bound does not exceed
/// `incumbent_log2 + DEFAULT_EPS_OPT`. Pass `-inf` to disable pruning.
pub fn node_expand<'a>(node: &BnbNode<'a>, incumbent_log2: f64) -> Vec<BnbNode<'a>> {
    expand_with(node, incumbent_log2, DEFAULT_EPS_OPT)
}

fn expand_with<'a>(node: &BnbNode<'a>, incumbent_log2: f64, eps: f64) -> Vec<BnbNode<'a>> {
    let mut children = Vec::with_capacity(2);
    if node.is_leaf() {
        return children;
    }
    let Some(pivot) = node.pivot() else {
        return children;
    };
    let keep = |b: &BoundValue| b.log2_det_m_ub > incumbent_log2 + eps;

    if let Ok(state) = node.state.include_row(pivot) {
        if let Ok(child) = BnbNode::with_state(Arc::new(state), node.excluded.clone()) {
            if keep(&child.bound) {
                children.push(child);
            }
        }
    }

    let mut excluded = node.excluded.clone();
    excluded[pivot] = true;
    if let Ok(child) = BnbNode::with_state(Arc::clone(&node.state), excluded) {
        if keep(&child.bound) {
            children.push(child);
        }
    }
    children
}

/// Greedy completion of `J`: repeatedly include the row with the largest
/// projected norm. Returns the sorted 0-based subset and its `log2 det M`.
pub fn greedy_incumbent(v: &InstanceMatrix, j: &[usize]) -> Result<(Vec<usize>, f64)> {
    let mut state = project_rows(v, j)?;
    while state.included().len() < v.ncols() {
        let next = (0..v.nrows()).filter(|&i| state.is_includable(i)).fold(
            None::<(usize, f64)>,
            |best, i| {
                let sq = state.tilde_sq_norm(i);
                match best {
                    Some((_, b)) if b >= sq => best,
                    _ => Some((i, sq)),
                }
            },
        );
        let Some((i, _)) = next else {
            return Err(Error::Infeasible);
        };
        state = state.include_row(i)?;
    }
    let mut subset = state.included().to_vec();
    subset.sort_unstable();
    Ok((subset, 2.0 * state.log_volume2()))
}

struct Incumbent {
    value: f64,
    subset: Vec<usize>,
}

struct Shared {
    best: Mutex<Incumbent>,
    best_bits: AtomicU64,
    nodes: AtomicU64,
    stop: AtomicBool,
    deadline: Instant,
    eps: f64,
}

impl Shared {
    fn incumbent(&self) -> f64 {
        f64::from_bits(self.best_bits.load(Ordering::Acquire))
    }

    fn offer(&self, value: f64, subset: &[usize]) {
        let mut best = self.best.lock().expect("incumbent lock poisoned");
        if value > best.value {
            best.value = value;
            best.subset = subset.to_vec();
            self.best_bits.store(value.to_bits(), Ordering::Release);
        }
    }

    fn out_of_time(&self, local_count: u64) -> bool {
        if self.stop.load(Ordering::Relaxed) {
            return true;
        }
        if local_count.is_multiple_of(CLOCK_CHECK_EVERY) && Instant::now() >= self.deadline {
            self.stop.store(true, Ordering::Relaxed);
            return true;
        }
        false
    }

    /// Handles one popped node. Returns its children to be searched, if any.
    fn process<'a>(&self, node: BnbNode<'a>) -> Vec<BnbNode<'a>> {
        self.nodes.fetch_add(1, Ordering::Relaxed);
        let inc = self.incumbent();
        if node.is_leaf() {
            if node.bound.log2_det_m_ub > inc {
                self.offer(node.bound.log2_det_m_ub, node.state.included());
            }
            return Vec::new();
        }
        if node.bound.log2_det_m_ub <= inc + self.eps {
            return Vec::new();
        }
        expand_with(&node, inc, self.eps)
    }
}

fn max_bound<'n, 'a: 'n>(nodes: impl IntoIterator<Item = &'n BnbNode<'a>>) -> Option<f64> {
    nodes
        .into_iter()
        .map(|n| n.bound.log2_det_m_ub)
        .reduce(f64::max)
}

/// Depth-first search from `stack`. Returns the largest bound among nodes left
/// open when the time limit stops the search, or `None` if it ran to completion.
fn depth_first<'a>(
    mut stack: Vec<BnbNode<'a>>,
    shared: &Shared,
    trace: Option<(u64, &mut Vec<ProgressSample>)>,
) -> Option<f64> {
    let (every, samples) = match trace {
        Some((every, samples)) if every > 0 => (every, Some(samples)),
        _ => (0, None),
    };
    let mut samples = samples;
    let mut local: u64 = 0;
    while let Some(node) = stack.pop() {
        if shared.out_of_time(local) {
            stack.push(node);
            return Some(max_bound(&stack).unwrap_or(f64::NEG_INFINITY));
        }
        local += 1;
        let children = shared.process(node);
        // include child is first; push it last so it is searched first
        stack.extend(children.into_iter().rev());
        if let Some(samples) = samples.as_deref_mut() {
            if local.is_multiple_of(every) {
                let lb = shared.incumbent();
                let open = max_bound(&stack).unwrap_or(f64::NEG_INFINITY);
                samples.push(ProgressSample {
                    nodes: local,
                    lb_log2: lb,
                    ub_log2: lb.max(open),
                });
            }
        }
    }
    None
}

fn parallel_search<'a>(root: BnbNode<'a>, shared: &Shared, workers: usize) -> Option<f64> {
    // breadth-first until there is enough independent work to share out
    let target = 4 * workers;
    let mut frontier = VecDeque::from([root]);
    let mut local = 0u64;
    while frontier.len() < target {
        let Some(node) = frontier.pop_front() else {
            break;
        };
        if shared.out_of_time(local) {
            frontier.push_front(node);
            return max_bound(&frontier);
        }
        local += 1;
        frontier.extend(shared.process(node));
    }

    let queue = Mutex::new(frontier.into_iter().rev().collect::<Vec<_>>());
    let open = std::thread::scope(|scope| {
        let handles: Vec<_> = (0..workers)
            .map(|_| {
                scope.spawn(|| {
                    let mut open: Option<f64> = None;
                    loop {
                        let next = queue.lock().expect("work queue poisoned").pop();
                        let Some(node) = next else { break };
                        if let Some(m) = depth_first(vec![node], shared, None) {
                            open = Some(open.map_or(m, |o: f64| o.max(m)));
                            break;
                        }
                    }
                    open
                })
            })
            .collect();
        handles
            .into_iter()
            .filter_map(|h| h.join().expect("worker panicked"))
            .reduce(f64::max)
    });
    let leftover = max_bound(queue.lock().expect("work queue poisoned").iter());
    match (open, leftover) {
        (None, None) if !shared.stop.load(Ordering::Relaxed) => None,
        (a, b) => Some(
            a.unwrap_or(f64::NEG_INFINITY)
                .max(b.unwrap_or(f64::NEG_INFINITY)),
        ),
    }
}

/// Solves `max det M_{J∪K}` over `K` with `J ∩ K = ∅`, `|J ∪ K| = r`.
///
/// On completion the incumbent is optimal up to `eps_opt` and `ub = lb`. On
/// timeout `ub` is the largest bound over the nodes still open (and at least
/// `lb`), and `optimal` is false.
pub fn solve(v: &InstanceMatrix, j: &[usize], opts: &SolveOptions) -> Result<SolveReport> {
    let start = Instant::now();
    let root = BnbNode::root(v, j)?;
    let (greedy_subset, greedy_value) = greedy_incumbent(v, j)?;

    let shared = Shared {
        best: Mutex::new(Incumbent {
            value: greedy_value,
            subset: greedy_subset,
        }),
        best_bits: AtomicU64::new(greedy_value.to_bits()),
        nodes: AtomicU64::new(0),
        stop: AtomicBool::new(false),
        deadline: start + opts.time_limit,
        eps: opts.eps_opt,
    };

    let mut trace = Vec::new();
    let open = if opts.workers <= 1 {
        depth_first(vec![root], &shared, Some((opts.trace_every, &mut trace)))
    } else {
        parallel_search(root, &shared, opts.workers)
    };

    let best = shared.best.into_inner().expect("incumbent lock poisoned");
    let lb = best.value;
    let (ub, optimal) = match open {
        None => (lb, true),
        Some(open_max) => (lb.max(open_max), false),
    };
    let mut subset: Vec<usize> = best.subset.iter().map(|i| i + 1).collect();
    subset.sort_unstable();

    Ok(SolveReport {
        n: v.nrows(),
        r: v.ncols(),
        lb_log2: lb,
        ub_log2: ub,
        subset,
        optimal,
        gap: gap(lb, ub),
        nodes_explored: shared.nodes.load(Ordering::Relaxed),
        time_seconds: start.elapsed().as_secs_f64(),
        trace,
    })
}
