//! Ground truth: branch-and-bound for desk-sized instances, the continuous
//! relaxation, the perturbed-problem probe, and an edge-coloring oracle.

use nalgebra::{DMatrix, DVector};
use serde::Serialize;

use crate::config::Tolerances;
use crate::error::{Error, Result};
use crate::model::{Graph, MbqpInstance};
use crate::numerics::{
    min_eigenvalue, solve_lp_with, solve_qp_with, LpProblem, QpProblem, SolveStatus,
};

pub const DEFAULT_NODE_BUDGET: usize = 2_000_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum ExactStatus {
    Optimal,
    Infeasible,
    Unbounded,
    BudgetExceeded,
}

#[derive(Debug, Clone)]
pub struct ExactResult {
    pub status: ExactStatus,
    /// Optimal value, or the incumbent value when the budget ran out.
    pub value: f64,
    pub x: Option<DVector<f64>>,
    pub nodes: usize,
}

impl ExactResult {
    pub fn is_optimal(&self) -> bool {
        self.status == ExactStatus::Optimal
    }
}

#[derive(Debug, Clone, Copy)]
pub struct ExactOptions {
    pub node_budget: usize,
    /// Prune nodes by their relaxation bound. When off, every binary
    /// pattern is enumerated.
    pub prune: bool,
}

impl Default for ExactOptions {
    fn default() -> Self {
        ExactOptions {
            node_budget: DEFAULT_NODE_BUDGET,
            prune: true,
        }
    }
}

/// Exact optimum by depth-first branch-and-bound.
///
/// Branches on the lowest unfixed binary, 0 before 1, and prunes with the
/// continuous relaxation of the node. Convex objectives are required unless
/// the quadratic part only involves binaries, in which case it is
/// convexified with `x_j² = x_j`.
pub fn solve_exact(inst: &MbqpInstance, node_budget: usize) -> Result<ExactResult> {
    solve_exact_with(
        inst,
        &ExactOptions {
            node_budget,
            ..ExactOptions::default()
        },
    )
}

pub fn solve_exact_with(inst: &MbqpInstance, opts: &ExactOptions) -> Result<ExactResult> {
    let sub = Subproblem::new(inst, 0.0, true)?;
    let out = branch_and_bound(&sub, opts)?;
    let value = match (&out.x, out.status) {
        (Some(x), _) => inst.objective(x),
        (None, _) => out.value,
    };
    Ok(ExactResult { value, ..out })
}

/// Continuous relaxation: binaries relaxed to `[0, 1]`.
#[derive(Debug, Clone)]
pub struct ContResult {
    pub status: SolveStatus,
    pub value: f64,
    pub x: DVector<f64>,
    /// `d(value)/d(b_i)` per constraint row.
    pub duals: DVector<f64>,
}

pub fn solve_cont(inst: &MbqpInstance) -> Result<ContResult> {
    if !inst.is_convex() {
        return Err(Error::NotPsd(inst.quad_min_eigenvalue()));
    }
    let sub = Subproblem::new(inst, 0.0, false)?;
    let n = inst.num_vars();
    let lower = vec![0.0; n];
    let mut upper = vec![f64::INFINITY; n];
    for &j in &inst.binaries {
        upper[j] = 1.0;
    }
    let node = sub.solve(&lower, &upper)?;
    Ok(ContResult {
        status: node.status,
        value: node.value,
        x: node.x,
        duals: node.duals,
    })
}

/// `max Σx` over `{Ax = rhs, x ≥ 0}`: `Some(0)` when the set is empty and
/// `None` when it is unbounded.
pub fn mass_bound(constraints: &DMatrix<f64>, rhs: &DVector<f64>) -> Result<Option<f64>> {
    let lp = LpProblem::new(
        DVector::from_element(constraints.ncols(), -1.0),
        constraints.clone(),
        rhs.clone(),
    );
    let out = solve_lp_with(&lp, &Tolerances::default())?;
    match out.status {
        SolveStatus::Optimal => Ok(Some(-out.objective)),
        SolveStatus::Infeasible => Ok(Some(0.0)),
        SolveStatus::Unbounded => Ok(None),
        SolveStatus::IterLimit => Err(Error::Solver("mass bound LP hit its iteration limit".into())),
    }
}

/// Maximizes `Σx` over `{Ax = b, x ≥ 0}`; `false` when unbounded.
pub fn is_bounded(inst: &MbqpInstance) -> Result<bool> {
    let lp = LpProblem::new(
        DVector::from_element(inst.num_vars(), -1.0),
        inst.constraints.clone(),
        inst.rhs.clone(),
    );
    let out = solve_lp_with(&lp, &Tolerances::default())?;
    Ok(out.status != SolveStatus::Unbounded)
}

#[derive(Debug, Clone, Serialize)]
pub struct ZetaResult {
    pub value: f64,
    /// False when the node budget ran out and `value` is only an upper
    /// estimate from the patterns visited.
    pub complete: bool,
    pub nodes: usize,
}

/// Optimal value of the perturbed problem in which every row may move by
/// at most `eps` and every binary may sit within `eps` of 0 or 1.
///
/// Requires a convex objective, or a bounded feasible region together with
/// a quadratic part supported on binaries only.
pub fn zeta_probe(inst: &MbqpInstance, eps: f64, node_budget: usize) -> Result<ZetaResult> {
    if !(eps >= 0.0) {
        return Err(Error::InvalidArgument(format!("eps must be nonnegative, got {eps}")));
    }
    if !inst.is_convex() && eps > 0.0 {
        return Err(Error::Unsupported(
            "perturbed probe needs a convex objective when eps > 0".into(),
        ));
    }
    let sub = Subproblem::new(inst, eps, true)?;
    let out = branch_and_bound(
        &sub,
        &ExactOptions {
            node_budget,
            prune: true,
        },
    )?;
    match out.status {
        ExactStatus::Optimal => Ok(ZetaResult {
            value: out.value,
            complete: true,
            nodes: out.nodes,
        }),
        ExactStatus::Infeasible => Ok(ZetaResult {
            value: f64::INFINITY,
            complete: true,
            nodes: out.nodes,
        }),
        ExactStatus::Unbounded => Ok(ZetaResult {
            value: f64::NEG_INFINITY,
            complete: true,
            nodes: out.nodes,
        }),
        ExactStatus::BudgetExceeded => Ok(ZetaResult {
            value: out.value,
            complete: false,
            nodes: out.nodes,
        }),
    }
}

/// Global minimum of the perturbed problem for an instance without
/// binaries, with every variable additionally capped at `cap`.
///
/// Works for indefinite objectives by enumerating all faces of the box and
/// band constraints and solving the stationarity system on each, so it is
/// limited to a handful of variables. Growing caps expose perturbed
/// problems whose value is unbounded below.
pub fn zeta_box_probe(inst: &MbqpInstance, eps: f64, cap: f64) -> Result<f64> {
    if !inst.binaries.is_empty() {
        return Err(Error::Unsupported("box probe handles continuous instances only".into()));
    }
    let n = inst.num_vars();
    let m = inst.num_rows();
    if n + m > 10 {
        return Err(Error::Unsupported(format!(
            "box probe enumerates 3^(n+m) faces; n+m = {} is too large",
            n + m
        )));
    }
    let faces = 3usize.pow((n + m) as u32);
    let mut best = f64::INFINITY;
    let tol = 1e-9 * (1.0 + cap);
    for code in 0..faces {
        // 0 = inactive, 1 = lower side, 2 = upper side
        let mut digits = Vec::with_capacity(n + m);
        let mut c = code;
        for _ in 0..n + m {
            digits.push(c % 3);
            c /= 3;
        }
        let mut rows: Vec<(DVector<f64>, f64)> = Vec::new();
        for k in 0..n {
            let mut e = DVector::zeros(n);
            e[k] = 1.0;
            match digits[k] {
                1 => rows.push((e, 0.0)),
                2 => rows.push((e, cap)),
                _ => {}
            }
        }
        for i in 0..m {
            match digits[n + i] {
                1 => rows.push((inst.row(i), inst.rhs[i] - eps)),
                2 => rows.push((inst.row(i), inst.rhs[i] + eps)),
                _ => {}
            }
        }
        let k = rows.len();
        let mut kkt = DMatrix::zeros(n + k, n + k);
        let mut rhs = DVector::zeros(n + k);
        kkt.view_mut((0, 0), (n, n)).copy_from(&(&inst.quad * 2.0));
        for (r, (a, h)) in rows.iter().enumerate() {
            for j in 0..n {
                kkt[(n + r, j)] = a[j];
                kkt[(j, n + r)] = a[j];
            }
            rhs[n + r] = *h;
        }
        for j in 0..n {
            rhs[j] = -2.0 * inst.linear[j];
        }
        let svd = kkt.clone().svd(true, true);
        let Ok(sol) = svd.solve(&rhs, 1e-12) else {
            continue;
        };
        if (&kkt * &sol - &rhs).amax() > 1e-8 * (1.0 + rhs.amax()) {
            continue;
        }
        let x = sol.rows(0, n).into_owned();
        if x.iter().any(|&v| v < -tol || v > cap + tol) {
            continue;
        }
        let band = &inst.constraints * &x - &inst.rhs;
        if band.iter().any(|&v| v.abs() > eps + tol) {
            continue;
        }
        best = best.min(inst.objective(&x));
    }
    Ok(best)
}

/// Relaxation data shared by all nodes of one search.
struct Subproblem<'a> {
    inst: &'a MbqpInstance,
    quad: DMatrix<f64>,
    linear: DVector<f64>,
    band: f64,
    tol: Tolerances,
}

struct NodeSolution {
    status: SolveStatus,
    value: f64,
    x: DVector<f64>,
    duals: DVector<f64>,
}

impl<'a> Subproblem<'a> {
    /// `convexify` allows a nonconvex quadratic supported on binaries to be
    /// shifted by `x_j² = x_j`, which is exact only at binary points.
    fn new(inst: &'a MbqpInstance, band: f64, convexify: bool) -> Result<Self> {
        let mut quad = inst.quad.clone();
        let mut linear = inst.linear.clone();
        if !inst.is_convex() {
            let n = inst.num_vars();
            let mut is_bin = vec![false; n];
            for &j in &inst.binaries {
                is_bin[j] = true;
            }
            let touches_continuous = (0..n)
                .any(|i| (0..n).any(|j| inst.quad[(i, j)] != 0.0 && !(is_bin[i] && is_bin[j])));
            if touches_continuous || !convexify || band > 0.0 {
                return Err(Error::Unsupported(
                    "nonconvex objective involving continuous variables".into(),
                ));
            }
            let shift = -inst.quad_min_eigenvalue() * (1.0 + 1e-9) + 1e-10;
            for &j in &inst.binaries {
                quad[(j, j)] += shift;
                linear[j] -= 0.5 * shift;
            }
            debug_assert!(min_eigenvalue(&quad) > -1e-9);
        }
        Ok(Subproblem {
            inst,
            quad,
            linear,
            band,
            tol: Tolerances::default(),
        })
    }

    fn is_linear(&self) -> bool {
        self.quad.iter().all(|&v| v == 0.0)
    }

    fn objective(&self, x: &DVector<f64>) -> f64 {
        x.dot(&(&self.quad * x)) + 2.0 * self.linear.dot(x)
    }

    /// Solves the relaxation with variable bounds `lower ≤ x ≤ upper` and
    /// rows `|Ax − b| ≤ band`.
    fn solve(&self, lower: &[f64], upper: &[f64]) -> Result<NodeSolution> {
        if self.is_linear() {
            self.solve_lp(lower, upper)
        } else {
            self.solve_qp(lower, upper)
        }
    }

    fn solve_qp(&self, lower: &[f64], upper: &[f64]) -> Result<NodeSolution> {
        let n = self.inst.num_vars();
        let m = self.inst.num_rows();
        let banded = self.band > 0.0;
        let nv = if banded { n + m } else { n };
        let mut quad = DMatrix::zeros(nv, nv);
        quad.view_mut((0, 0), (n, n)).copy_from(&self.quad);
        let mut linear = DVector::zeros(nv);
        linear.rows_mut(0, n).copy_from(&self.linear);
        let mut e = DMatrix::zeros(m, nv);
        e.view_mut((0, 0), (m, n)).copy_from(&self.inst.constraints);
        let mut lo = DVector::zeros(nv);
        let mut hi = DVector::zeros(nv);
        for k in 0..n {
            lo[k] = lower[k];
            hi[k] = upper[k];
        }
        if banded {
            for i in 0..m {
                e[(i, n + i)] = -1.0;
                lo[n + i] = -self.band;
                hi[n + i] = self.band;
            }
        }
        let qp = QpProblem {
            quad,
            linear,
            eq_matrix: e,
            rhs: self.inst.rhs.clone(),
            lower: lo,
            upper: hi,
        };
        let out = solve_qp_with(&qp, &self.tol)?;
        let x = out.primal.rows(0, n).into_owned();
        let value = if out.is_optimal() {
            self.objective(&x)
        } else {
            out.objective
        };
        Ok(NodeSolution {
            status: out.status,
            value,
            x,
            duals: out.duals,
        })
    }

    fn solve_lp(&self, lower: &[f64], upper: &[f64]) -> Result<NodeSolution> {
        let inst = self.inst;
        let n = inst.num_vars();
        let m = inst.num_rows();
        let eps = self.band;
        // Columns: shifted variables y = x − lower (fixed ones substituted),
        // upper-bound slacks, then band slacks and their caps.
        let mut col_of = vec![None; n];
        let mut ncols = 0;
        for k in 0..n {
            if upper[k] > lower[k] {
                col_of[k] = Some(ncols);
                ncols += 1;
            } else if upper[k] < lower[k] {
                return Ok(NodeSolution {
                    status: SolveStatus::Infeasible,
                    value: f64::INFINITY,
                    x: DVector::zeros(n),
                    duals: DVector::zeros(m),
                });
            }
        }
        let capped: Vec<usize> = (0..n)
            .filter(|&k| col_of[k].is_some() && upper[k].is_finite())
            .collect();
        let n_cap = capped.len();
        let n_band = if eps > 0.0 { m } else { 0 };
        let total_cols = ncols + n_cap + 2 * n_band;
        let total_rows = m + n_cap + n_band;
        let mut e = DMatrix::zeros(total_rows, total_cols);
        let mut h = DVector::zeros(total_rows);
        let mut cost = DVector::zeros(total_cols);
        let base = DVector::from_column_slice(lower);
        let shifted_rhs = &inst.rhs - &inst.constraints * &base;
        for i in 0..m {
            for k in 0..n {
                if let Some(c) = col_of[k] {
                    e[(i, c)] = inst.constraints[(i, k)];
                }
            }
            h[i] = shifted_rhs[i];
        }
        for k in 0..n {
            if let Some(c) = col_of[k] {
                cost[c] = 2.0 * self.linear[k];
            }
        }
        for (t, &k) in capped.iter().enumerate() {
            let row = m + t;
            e[(row, col_of[k].unwrap())] = 1.0;
            e[(row, ncols + t)] = 1.0;
            h[row] = upper[k] - lower[k];
        }
        for i in 0..n_band {
            let s = ncols + n_cap + 2 * i;
            e[(i, s)] = -1.0;
            h[i] -= eps;
            let row = m + n_cap + i;
            e[(row, s)] = 1.0;
            e[(row, s + 1)] = 1.0;
            h[row] = 2.0 * eps;
        }
        let out = solve_lp_with(&LpProblem::new(cost, e, h), &self.tol)?;
        let mut x = base.clone();
        if out.is_optimal() {
            for k in 0..n {
                if let Some(c) = col_of[k] {
                    x[k] += out.primal[c];
                }
            }
        }
        let value = if out.is_optimal() {
            self.objective(&x)
        } else {
            out.objective
        };
        Ok(NodeSolution {
            status: out.status,
            value,
            x,
            duals: out.duals.rows(0, m).into_owned(),
        })
    }

    /// Binary pattern the point is compatible with, if every binary lies
    /// within the band of 0 or 1.
    fn pattern_of(&self, x: &DVector<f64>) -> Option<Vec<f64>> {
        let slack = self.band + self.tol.integrality;
        self.inst
            .binaries
            .iter()
            .map(|&j| {
                if x[j] <= slack {
                    Some(0.0)
                } else if (x[j] - 1.0).abs() <= slack {
                    Some(1.0)
                } else {
                    None
                }
            })
            .collect()
    }

    fn bounds(&self, fixed: &[Option<f64>]) -> (Vec<f64>, Vec<f64>) {
        let n = self.inst.num_vars();
        let mut lower = vec![0.0; n];
        let mut upper = vec![f64::INFINITY; n];
        for (pos, &j) in self.inst.binaries.iter().enumerate() {
            if let Some(w) = fixed[pos] {
                lower[j] = (w - self.band).max(0.0);
                upper[j] = w + self.band;
            }
        }
        (lower, upper)
    }
}

struct Search<'s, 'a> {
    sub: &'s Subproblem<'a>,
    opts: ExactOptions,
    nodes: usize,
    best: f64,
    best_x: Option<DVector<f64>>,
    unbounded: bool,
    exhausted: bool,
}

impl Search<'_, '_> {
    fn prune_level(&self) -> f64 {
        self.best - 1e-9 * (1.0 + self.best.abs())
    }

    fn offer(&mut self, value: f64, x: DVector<f64>) {
        if value < self.best {
            self.best = value;
            self.best_x = Some(x);
        }
    }

    fn visit(&mut self, fixed: &mut Vec<Option<f64>>, depth: usize) -> Result<()> {
        if self.exhausted || self.unbounded {
            return Ok(());
        }
        if self.nodes >= self.opts.node_budget {
            self.exhausted = true;
            return Ok(());
        }
        self.nodes += 1;
        let nb = fixed.len();
        let leaf = depth == nb;
        if leaf || self.opts.prune {
            let (lower, upper) = self.sub.bounds(fixed);
            let node = self.sub.solve(&lower, &upper)?;
            match node.status {
                SolveStatus::Infeasible => return Ok(()),
                SolveStatus::Unbounded => {
                    if leaf {
                        self.unbounded = true;
                        return Ok(());
                    }
                }
                SolveStatus::IterLimit => {
                    if leaf {
                        return Err(Error::Solver(
                            "leaf subproblem hit its iteration limit".into(),
                        ));
                    }
                }
                SolveStatus::Optimal => {
                    if leaf {
                        self.offer(node.value, node.x);
                        return Ok(());
                    }
                    if node.value >= self.prune_level() {
                        return Ok(());
                    }
                    if let Some(pattern) = self.sub.pattern_of(&node.x) {
                        if self.sub.band == 0.0 {
                            // Snap to the exact pattern and re-solve the
                            // continuous part so the incumbent is exact.
                            let mut full = fixed.clone();
                            for (pos, w) in pattern.iter().enumerate() {
                                full[pos] = Some(*w);
                            }
                            let (lo, hi) = self.sub.bounds(&full);
                            let snapped = self.sub.solve(&lo, &hi)?;
                            if snapped.status == SolveStatus::Optimal {
                                let done = snapped.value <= node.value + 1e-9 * (1.0 + node.value.abs());
                                self.offer(snapped.value, snapped.x);
                                if done {
                                    return Ok(());
                                }
                            }
                        } else {
                            self.offer(node.value, node.x);
                            return Ok(());
                        }
                    }
                }
            }
        }
        if leaf {
            return Ok(());
        }
        for w in [0.0, 1.0] {
            fixed[depth] = Some(w);
            self.visit(fixed, depth + 1)?;
            fixed[depth] = None;
        }
        Ok(())
    }
}

fn branch_and_bound(sub: &Subproblem, opts: &ExactOptions) -> Result<ExactResult> {
    let mut search = Search {
        sub,
        opts: *opts,
        nodes: 0,
        best: f64::INFINITY,
        best_x: None,
        unbounded: false,
        exhausted: false,
    };
    let mut fixed = vec![None; sub.inst.binaries.len()];
    search.visit(&mut fixed, 0)?;
    let status = if search.unbounded {
        ExactStatus::Unbounded
    } else if search.exhausted {
        ExactStatus::BudgetExceeded
    } else if search.best_x.is_some() {
        ExactStatus::Optimal
    } else {
        ExactStatus::Infeasible
    };
    let value = match status {
        ExactStatus::Unbounded => f64::NEG_INFINITY,
        ExactStatus::Infeasible => f64::INFINITY,
        _ => search.best,
    };
    let x = if status == ExactStatus::Unbounded {
        None
    } else {
        search.best_x
    };
    Ok(ExactResult {
        status,
        value,
        x,
        nodes: search.nodes,
    })
}

/// Chromatic index of a graph, or the Vizing bracket when the search budget
/// runs out.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum ChromaticIndex {
    Exact(usize),
    Between(usize, usize),
}

/// Edge chromatic number by backtracking. Edges at a maximum-degree vertex
/// are coloured first with fixed distinct colours (symmetry breaking);
/// remaining edges follow in breadth-first order from that vertex.
pub fn chromatic_index(g: &Graph, budget: usize) -> ChromaticIndex {
    let delta = g.max_degree();
    if delta == 0 {
        return ChromaticIndex::Exact(0);
    }
    match colorable(g, delta, budget) {
        Some(true) => ChromaticIndex::Exact(delta),
        Some(false) => ChromaticIndex::Exact(delta + 1),
        None => ChromaticIndex::Between(delta, delta + 1),
    }
}

fn edge_order(g: &Graph) -> Vec<usize> {
    let nv = g.num_vertices();
    let start = (0..nv).max_by_key(|&v| (g.degree(v), usize::MAX - v)).unwrap_or(0);
    let mut order: Vec<usize> = Vec::new();
    let mut placed = vec![false; g.edges().len()];
    let mut seen = vec![false; nv];
    let mut queue = std::collections::VecDeque::new();
    // Every component is started from its highest-degree vertex.
    let mut roots: Vec<usize> = (0..nv).collect();
    roots.sort_by_key(|&v| (v != start, usize::MAX - g.degree(v), v));
    for root in roots {
        if seen[root] {
            continue;
        }
        seen[root] = true;
        queue.push_back(root);
        while let Some(v) = queue.pop_front() {
            for (e, &(a, b)) in g.edges().iter().enumerate() {
                if (a == v || b == v) && !placed[e] {
                    placed[e] = true;
                    order.push(e);
                    let other = if a == v { b } else { a };
                    if !seen[other] {
                        seen[other] = true;
                        queue.push_back(other);
                    }
                }
            }
        }
    }
    order
}

fn colorable(g: &Graph, colors: usize, budget: usize) -> Option<bool> {
    let order = edge_order(g);
    let first = g.edges()[order[0]];
    let hub = if g.degree(first.0) >= g.degree(first.1) {
        first.0
    } else {
        first.1
    };
    let hub_edges = order
        .iter()
        .take_while(|&&e| g.edges()[e].0 == hub || g.edges()[e].1 == hub)
        .count();
    let mut used = vec![0u64; g.num_vertices()];
    let mut nodes = 0usize;
    let full = if colors >= 64 { u64::MAX } else { (1u64 << colors) - 1 };

    fn go(
        g: &Graph,
        order: &[usize],
        k: usize,
        hub_edges: usize,
        used: &mut [u64],
        full: u64,
        nodes: &mut usize,
        budget: usize,
    ) -> Option<bool> {
        if k == order.len() {
            return Some(true);
        }
        *nodes += 1;
        if *nodes > budget {
            return None;
        }
        let (a, b) = g.edges()[order[k]];
        let mut avail = full & !(used[a] | used[b]);
        if k < hub_edges {
            // hub edges take colours 0, 1, 2, … in order
            avail &= 1u64 << k;
        }
        while avail != 0 {
            let bit = avail & avail.wrapping_neg();
            avail &= !bit;
            used[a] |= bit;
            used[b] |= bit;
            let r = go(g, order, k + 1, hub_edges, used, full, nodes, budget);
            used[a] &= !bit;
            used[b] &= !bit;
            match r {
                Some(true) => return Some(true),
                None => return None,
                Some(false) => {}
            }
        }
        Some(false)
    }
    go(g, &order, 0, hub_edges, &mut used, full, &mut nodes, budget)
}
