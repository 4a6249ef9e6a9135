//! Finite optimal transport solvers.
//!
//! * [`solve_transport`]: exact two-marginal transportation simplex.
//! * [`solve_multimarginal`]: exact N-marginal LP by revised simplex.
//! * [`sinkhorn`], [`grid_sinkhorn`], [`grid_barycenter`]: log-domain
//!   entropic solvers, the grid versions exploiting separable costs.
//! * [`empirical_w2`]: exact squared W2 between equal-size point clouds.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mixture::log_sum_exp;

/// Marginal masses must agree to this tolerance.
pub const MARGINAL_TOLERANCE: f64 = 1e-9;

/// Default cap on the number of multimarginal LP variables.
pub const DEFAULT_VARIABLE_CAP: usize = 1_000_000;

/// Largest cloud size [`empirical_w2`] solves exactly.
pub const EXACT_EMPIRICAL_LIMIT: usize = 2000;

/// Optimal coupling of two discrete marginals.
#[derive(Debug, Clone, PartialEq)]
pub struct TransportPlan {
    pub weights: Vec<Vec<f64>>,
    pub row_marginal: Vec<f64>,
    pub col_marginal: Vec<f64>,
    pub objective: f64,
}

/// Sparse plan serialization: `{"entries":[{"idx":[..],"w":..}],"objective":..}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlanJson {
    pub entries: Vec<PlanEntry>,
    pub objective: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlanEntry {
    pub idx: Vec<usize>,
    pub w: f64,
}

impl TransportPlan {
    pub fn rows(&self) -> usize {
        self.weights.len()
    }

    pub fn cols(&self) -> usize {
        self.col_marginal.len()
    }

    /// Strictly positive entries in row-major order.
    pub fn support(&self) -> Vec<(usize, usize, f64)> {
        let mut out = Vec::new();
        for (k, row) in self.weights.iter().enumerate() {
            for (l, &w) in row.iter().enumerate() {
                if w > 0.0 {
                    out.push((k, l, w));
                }
            }
        }
        out
    }

    pub fn transpose(&self) -> TransportPlan {
        let weights = (0..self.cols())
            .map(|l| self.weights.iter().map(|row| row[l]).collect())
            .collect();
        TransportPlan {
            weights,
            row_marginal: self.col_marginal.clone(),
            col_marginal: self.row_marginal.clone(),
            objective: self.objective,
        }
    }

    pub fn to_json(&self) -> PlanJson {
        PlanJson {
            entries: self
                .support()
                .into_iter()
                .map(|(k, l, w)| PlanEntry { idx: vec![k, l], w })
                .collect(),
            objective: self.objective,
        }
    }

    /// Largest absolute deviation of a row or column sum from its marginal.
    pub fn marginal_error(&self) -> f64 {
        let mut err: f64 = 0.0;
        for (row, a) in self.weights.iter().zip(&self.row_marginal) {
            err = err.max((row.iter().sum::<f64>() - a).abs());
        }
        for (l, b) in self.col_marginal.iter().enumerate() {
            err = err.max((self.weights.iter().map(|r| r[l]).sum::<f64>() - b).abs());
        }
        err
    }
}

fn check_weights(name: &str, w: &[f64]) -> Result<f64> {
    if w.is_empty() {
        return Err(Error::domain(format!("{name} is empty")));
    }
    if w.iter().any(|x| !(x.is_finite() && *x >= 0.0)) {
        return Err(Error::domain(format!("{name} must be finite and nonnegative")));
    }
    let total: f64 = w.iter().sum();
    if total <= 0.0 {
        return Err(Error::domain(format!("{name} has zero total mass")));
    }
    Ok(total)
}

fn check_balanced(a: &[f64], b: &[f64]) -> Result<()> {
    let sa = check_weights("row marginal", a)?;
    let sb = check_weights("column marginal", b)?;
    if (sa - sb).abs() > MARGINAL_TOLERANCE {
        return Err(Error::Infeasible(format!(
            "marginal masses differ: {sa} vs {sb}"
        )));
    }
    Ok(())
}

fn check_cost(cost: &[Vec<f64>], rows: usize, cols: usize) -> Result<()> {
    if cost.len() != rows || cost.iter().any(|r| r.len() != cols) {
        return Err(Error::domain(format!("cost matrix must be {rows}x{cols}")));
    }
    if cost.iter().flatten().any(|c| !c.is_finite()) {
        return Err(Error::domain("cost matrix must be finite"));
    }
    Ok(())
}

/// Exact solution of `min <w, cost>` over couplings of `a` and `b`.
///
/// Rows and columns with zero mass are removed before solving and come back
/// as zero rows/columns. Ties are broken deterministically.
pub fn solve_transport(a: &[f64], b: &[f64], cost: &[Vec<f64>]) -> Result<TransportPlan> {
    check_balanced(a, b)?;
    check_cost(cost, a.len(), b.len())?;
    let rows: Vec<usize> = (0..a.len()).filter(|&i| a[i] > 0.0).collect();
    let cols: Vec<usize> = (0..b.len()).filter(|&j| b[j] > 0.0).collect();
    let sa: Vec<f64> = rows.iter().map(|&i| a[i]).collect();
    let sb: Vec<f64> = cols.iter().map(|&j| b[j]).collect();
    let sc: Vec<Vec<f64>> =
        rows.iter().map(|&i| cols.iter().map(|&j| cost[i][j]).collect()).collect();
    let cells = TransportSimplex::new(&sa, &sb, &sc).solve()?;
    let mut weights = vec![vec![0.0; b.len()]; a.len()];
    let mut objective = 0.0;
    // Flows at rounding scale come from marginals that differ in the last
    // bits; keeping them would put sqrt(1e-16)-sized noise into distances.
    let residue = 64.0 * f64::EPSILON * sa.iter().sum::<f64>();
    for ((i, j), x) in cells {
        if x > residue {
            weights[rows[i]][cols[j]] = x;
            objective += x * cost[rows[i]][cols[j]];
        }
    }
    Ok(TransportPlan { weights, row_marginal: a.to_vec(), col_marginal: b.to_vec(), objective })
}

/// Primal transportation simplex over a spanning-tree basis.
struct TransportSimplex<'a> {
    a: Vec<f64>,
    b: Vec<f64>,
    cost: &'a [Vec<f64>],
    basis: Vec<(usize, usize)>,
    flow: Vec<f64>,
}

impl<'a> TransportSimplex<'a> {
    fn new(a: &[f64], b: &[f64], cost: &'a [Vec<f64>]) -> Self {
        // Rescale the columns so both totals agree in floating point.
        let ratio = a.iter().sum::<f64>() / b.iter().sum::<f64>();
        let b: Vec<f64> = b.iter().map(|x| x * ratio).collect();
        TransportSimplex { a: a.to_vec(), b, cost, basis: Vec::new(), flow: Vec::new() }
    }

    fn m(&self) -> usize {
        self.a.len()
    }

    fn n(&self) -> usize {
        self.b.len()
    }

    /// North-west corner rule: exactly `m + n - 1` basic cells.
    fn north_west(&mut self) {
        let (m, n) = (self.m(), self.n());
        let mut ra = self.a.clone();
        let mut rb = self.b.clone();
        let (mut i, mut j) = (0, 0);
        loop {
            let x = ra[i].min(rb[j]).max(0.0);
            self.basis.push((i, j));
            self.flow.push(x);
            ra[i] -= x;
            rb[j] -= x;
            if i == m - 1 && j == n - 1 {
                break;
            }
            if i < m - 1 && (ra[i] <= rb[j] || j == n - 1) {
                i += 1;
            } else {
                j += 1;
            }
        }
    }

    /// Adjacency of the basis tree; nodes `0..m` are rows, `m..m+n` columns.
    fn adjacency(&self) -> Vec<Vec<usize>> {
        let m = self.m();
        let mut adj = vec![Vec::new(); m + self.n()];
        for (e, &(i, j)) in self.basis.iter().enumerate() {
            adj[i].push(e);
            adj[m + j].push(e);
        }
        adj
    }

    fn other_end(&self, e: usize, node: usize) -> usize {
        let (i, j) = self.basis[e];
        if node == i {
            self.m() + j
        } else {
            i
        }
    }

    /// Dual potentials with `u_0 = 0` and `u_i + v_j = c_ij` on the basis.
    fn potentials(&self, adj: &[Vec<usize>]) -> (Vec<f64>, Vec<f64>) {
        let m = self.m();
        let mut pot = vec![f64::NAN; m + self.n()];
        pot[0] = 0.0;
        let mut stack = vec![0];
        while let Some(node) = stack.pop() {
            for &e in &adj[node] {
                let other = self.other_end(e, node);
                if pot[other].is_nan() {
                    let (i, j) = self.basis[e];
                    pot[other] = self.cost[i][j] - pot[node];
                    stack.push(other);
                }
            }
        }
        let v = pot.split_off(m);
        (pot, v)
    }

    /// Basis edges on the tree path from column node `j` to row node `i`.
    fn path(&self, adj: &[Vec<usize>], i: usize, j: usize) -> Vec<usize> {
        let m = self.m();
        let mut parent = vec![usize::MAX; m + self.n()];
        let mut seen = vec![false; m + self.n()];
        seen[i] = true;
        let mut queue = std::collections::VecDeque::from([i]);
        while let Some(node) = queue.pop_front() {
            if node == m + j {
                break;
            }
            for &e in &adj[node] {
                let other = self.other_end(e, node);
                if !seen[other] {
                    seen[other] = true;
                    parent[other] = e;
                    queue.push_back(other);
                }
            }
        }
        let mut edges = Vec::new();
        let mut node = m + j;
        while node != i {
            let e = parent[node];
            edges.push(e);
            node = self.other_end(e, node);
        }
        edges
    }

    fn solve(mut self) -> Result<Vec<((usize, usize), f64)>> {
        let (m, n) = (self.m(), self.n());
        self.north_west();
        let scale = self.cost.iter().flatten().fold(0.0f64, |s, c| s.max(c.abs()));
        let tol = 1e-12 * (1.0 + scale);
        let max_pivots = 1000 + 200 * (m + n) * (m + n);
        let mut is_basic = vec![vec![false; n]; m];
        for &(i, j) in &self.basis {
            is_basic[i][j] = true;
        }
        for _ in 0..max_pivots {
            let adj = self.adjacency();
            let (u, v) = self.potentials(&adj);
            // Bland: first improving cell in row-major order.
            let entering = (0..m)
                .flat_map(|i| (0..n).map(move |j| (i, j)))
                .find(|&(i, j)| !is_basic[i][j] && self.cost[i][j] - u[i] - v[j] < -tol);
            let Some((ei, ej)) = entering else {
                self.recompute_flows();
                return Ok(self.basis.into_iter().zip(self.flow).collect());
            };
            let path = self.path(&adj, ei, ej);
            // Edges at odd positions along the path (0, 2, ...) lose flow.
            let mut theta = f64::INFINITY;
            for &e in path.iter().step_by(2) {
                theta = theta.min(self.flow[e]);
            }
            let leaving = path
                .iter()
                .step_by(2)
                .copied()
                .filter(|&e| self.flow[e] <= theta)
                .min_by_key(|&e| self.basis[e].0 * n + self.basis[e].1)
                .expect("path has a decreasing edge");
            for (pos, &e) in path.iter().enumerate() {
                if pos % 2 == 0 {
                    self.flow[e] -= theta;
                } else {
                    self.flow[e] += theta;
                }
            }
            let (li, lj) = self.basis[leaving];
            is_basic[li][lj] = false;
            is_basic[ei][ej] = true;
            self.basis[leaving] = (ei, ej);
            self.flow[leaving] = theta;
        }
        Err(Error::Infeasible("transportation simplex exceeded its pivot budget".into()))
    }

    /// Solves the tree equations for the flows by peeling leaves, which
    /// removes drift accumulated over pivots.
    fn recompute_flows(&mut self) {
        let adj = self.adjacency();
        let mut remaining: Vec<f64> = self.a.iter().chain(&self.b).copied().collect();
        let mut degree: Vec<usize> = adj.iter().map(|a| a.len()).collect();
        let mut done = vec![false; self.basis.len()];
        let mut leaves: Vec<usize> = (0..degree.len()).filter(|&k| degree[k] == 1).collect();
        while let Some(node) = leaves.pop() {
            let Some(&e) = adj[node].iter().find(|&&e| !done[e]) else { continue };
            done[e] = true;
            let x = remaining[node].max(0.0);
            self.flow[e] = x;
            let other = self.other_end(e, node);
            remaining[other] -= x;
            degree[node] -= 1;
            degree[other] -= 1;
            if degree[other] == 1 {
                leaves.push(other);
            }
        }
        debug_assert!(done.iter().all(|&d| d), "basis is not a spanning tree");
    }
}

/// Cost tensor of an N-marginal problem, row-major (last axis fastest).
#[derive(Debug, Clone, PartialEq)]
pub struct CostTensor {
    shape: Vec<usize>,
    values: Vec<f64>,
}

impl CostTensor {
    pub fn new(shape: Vec<usize>, values: Vec<f64>) -> Result<Self> {
        let size: usize = shape.iter().product();
        if shape.is_empty() || values.len() != size {
            return Err(Error::domain("cost tensor size does not match its shape"));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::domain("cost tensor must be finite"));
        }
        Ok(CostTensor { shape, values })
    }

    /// Evaluates `f` at every multi-index.
    pub fn from_fn<F: FnMut(&[usize]) -> f64>(shape: Vec<usize>, mut f: F) -> Result<Self> {
        let size: usize = shape.iter().product();
        let mut values = Vec::with_capacity(size);
        let mut idx = vec![0; shape.len()];
        for _ in 0..size {
            values.push(f(&idx));
            advance(&mut idx, &shape);
        }
        Self::new(shape, values)
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn get(&self, idx: &[usize]) -> f64 {
        self.values[flat_index(idx, &self.shape)]
    }
}

fn advance(idx: &mut [usize], shape: &[usize]) {
    for ax in (0..shape.len()).rev() {
        idx[ax] += 1;
        if idx[ax] < shape[ax] {
            return;
        }
        idx[ax] = 0;
    }
}

fn flat_index(idx: &[usize], shape: &[usize]) -> usize {
    idx.iter().zip(shape).fold(0, |acc, (i, n)| acc * n + i)
}

/// Sparse optimal coupling of N marginals.
#[derive(Debug, Clone, PartialEq)]
pub struct MultimarginalPlan {
    pub entries: Vec<(Vec<usize>, f64)>,
    pub marginals: Vec<Vec<f64>>,
    pub objective: f64,
}

impl MultimarginalPlan {
    pub fn to_json(&self) -> PlanJson {
        PlanJson {
            entries: self
                .entries
                .iter()
                .map(|(idx, w)| PlanEntry { idx: idx.clone(), w: *w })
                .collect(),
            objective: self.objective,
        }
    }

    pub fn marginal_error(&self) -> f64 {
        let mut err: f64 = 0.0;
        for (ax, pi) in self.marginals.iter().enumerate() {
            let mut sums = vec![0.0; pi.len()];
            for (idx, w) in &self.entries {
                sums[idx[ax]] += w;
            }
            for (s, p) in sums.iter().zip(pi) {
                err = err.max((s - p).abs());
            }
        }
        err
    }
}

/// Exact N-marginal transport with the default variable cap.
pub fn solve_multimarginal(marginals: &[Vec<f64>], cost: &CostTensor) -> Result<MultimarginalPlan> {
    solve_multimarginal_with_cap(marginals, cost, DEFAULT_VARIABLE_CAP)
}

/// Exact N-marginal transport; fails with a capacity error when the tensor
/// has more than `cap` entries.
pub fn solve_multimarginal_with_cap(
    marginals: &[Vec<f64>],
    cost: &CostTensor,
    cap: usize,
) -> Result<MultimarginalPlan> {
    let n_axes = marginals.len();
    if n_axes < 2 {
        return Err(Error::domain("multimarginal transport needs at least two marginals"));
    }
    let shape: Vec<usize> = marginals.iter().map(|m| m.len()).collect();
    if shape != cost.shape {
        return Err(Error::domain("cost tensor shape does not match the marginals"));
    }
    let size: usize = shape.iter().product();
    if size > cap {
        return Err(Error::Capacity(format!(
            "{size} coupling variables exceed the cap of {cap}; use fewer components"
        )));
    }
    let mut totals = Vec::with_capacity(n_axes);
    for (j, m) in marginals.iter().enumerate() {
        totals.push(check_weights(&format!("marginal {j}"), m)?);
    }
    if totals.iter().any(|t| (t - totals[0]).abs() > MARGINAL_TOLERANCE) {
        return Err(Error::Infeasible(format!("marginal masses differ: {totals:?}")));
    }
    // Drop zero-mass indices.
    let keep: Vec<Vec<usize>> =
        marginals.iter().map(|m| (0..m.len()).filter(|&k| m[k] > 0.0).collect()).collect();
    let sub_marg: Vec<Vec<f64>> = marginals
        .iter()
        .zip(&keep)
        .map(|(m, k)| {
            let v: Vec<f64> = k.iter().map(|&i| m[i]).collect();
            let s: f64 = v.iter().sum();
            v.into_iter().map(|x| x * totals[0] / s).collect()
        })
        .collect();
    let sub_shape: Vec<usize> = keep.iter().map(|k| k.len()).collect();
    let sub_cost = CostTensor::from_fn(sub_shape.clone(), |idx| {
        let full: Vec<usize> = idx.iter().zip(&keep).map(|(&i, k)| k[i]).collect();
        cost.get(&full)
    })?;
    let basic = MultiSimplex::new(&sub_marg, &sub_cost).solve()?;
    let mut entries: Vec<(Vec<usize>, f64)> = basic
        .into_iter()
        .filter(|(_, x)| *x > 1e-14)
        .map(|(idx, x)| (idx.iter().zip(&keep).map(|(&i, k)| k[i]).collect(), x))
        .collect();
    entries.sort_by(|a, b| a.0.cmp(&b.0));
    let objective = entries.iter().map(|(idx, w)| w * cost.get(idx)).sum();
    Ok(MultimarginalPlan { entries, marginals: marginals.to_vec(), objective })
}

/// Revised simplex on the multi-index transportation polytope.
///
/// Constraint rows: every index of axis 0 and all but the last index of the
/// other axes (the dropped rows are implied by equal totals), so the basis
/// has `sum K_j - N + 1` columns.
struct MultiSimplex<'a> {
    shape: Vec<usize>,
    offsets: Vec<usize>,
    rows: usize,
    rhs: Vec<f64>,
    cost: &'a CostTensor,
}

impl<'a> MultiSimplex<'a> {
    fn new(marginals: &[Vec<f64>], cost: &'a CostTensor) -> Self {
        let shape: Vec<usize> = marginals.iter().map(|m| m.len()).collect();
        let mut offsets = Vec::with_capacity(shape.len());
        let mut rhs = Vec::new();
        for (j, m) in marginals.iter().enumerate() {
            offsets.push(rhs.len());
            let used = if j == 0 { m.len() } else { m.len() - 1 };
            rhs.extend_from_slice(&m[..used]);
        }
        MultiSimplex { rows: rhs.len(), shape, offsets, rhs, cost }
    }

    /// Constraint rows touched by a variable.
    fn column_rows(&self, idx: &[usize], out: &mut Vec<usize>) {
        out.clear();
        for (j, &k) in idx.iter().enumerate() {
            if j == 0 || k + 1 < self.shape[j] {
                out.push(self.offsets[j] + k);
            }
        }
    }

    fn unravel(&self, mut flat: usize) -> Vec<usize> {
        let mut idx = vec![0; self.shape.len()];
        for ax in (0..self.shape.len()).rev() {
            idx[ax] = flat % self.shape[ax];
            flat /= self.shape[ax];
        }
        idx
    }

    /// Multi-index north-west corner rule; advancing one axis per step
    /// gives a triangular, hence nonsingular, starting basis.
    fn initial_basis(&self, marginals: &[Vec<f64>]) -> Vec<usize> {
        let mut rem: Vec<Vec<f64>> = marginals.to_vec();
        let mut idx = vec![0; self.shape.len()];
        let mut basis = Vec::with_capacity(self.rows);
        loop {
            basis.push(flat_index(&idx, &self.shape));
            let x = idx.iter().enumerate().map(|(j, &k)| rem[j][k]).fold(f64::INFINITY, f64::min);
            for (j, &k) in idx.iter().enumerate() {
                rem[j][k] -= x;
            }
            let movable = (0..idx.len()).filter(|&j| idx[j] + 1 < self.shape[j]);
            let Some(axis) = movable.min_by(|&p, &q| rem[p][idx[p]].total_cmp(&rem[q][idx[q]]))
            else {
                break;
            };
            idx[axis] += 1;
        }
        debug_assert_eq!(basis.len(), self.rows);
        basis
    }

    fn basis_inverse(&self, basis: &[usize]) -> Result<DMatrix<f64>> {
        let mut b = DMatrix::zeros(self.rows, self.rows);
        let mut rows = Vec::new();
        for (c, &var) in basis.iter().enumerate() {
            self.column_rows(&self.unravel(var), &mut rows);
            for &r in &rows {
                b[(r, c)] = 1.0;
            }
        }
        b.try_inverse().ok_or_else(|| Error::Infeasible("singular simplex basis".into()))
    }

    fn solve(self) -> Result<Vec<(Vec<usize>, f64)>> {
        let marginals: Vec<Vec<f64>> = {
            // Rebuild full marginals (including dropped rows) for the start.
            let mut full = Vec::new();
            let mut pos = 0;
            let total: f64 = self.rhs[..self.shape[0]].iter().sum();
            for (j, &k) in self.shape.iter().enumerate() {
                let used = if j == 0 { k } else { k - 1 };
                let mut m: Vec<f64> = self.rhs[pos..pos + used].to_vec();
                if j > 0 {
                    m.push((total - m.iter().sum::<f64>()).max(0.0));
                }
                pos += used;
                full.push(m);
            }
            full
        };
        let size = self.cost.values.len();
        let mut basis = self.initial_basis(&marginals);
        let mut is_basic = vec![false; size];
        for &v in &basis {
            is_basic[v] = true;
        }
        let mut binv = self.basis_inverse(&basis)?;
        let rhs = nalgebra::DVector::from_column_slice(&self.rhs);
        let mut xb: Vec<f64> = (&binv * &rhs).iter().copied().collect();
        let scale = self.cost.values.iter().fold(0.0f64, |s, c| s.max(c.abs()));
        let tol = 1e-11 * (1.0 + scale);
        let mut rows = Vec::new();
        let mut degenerate_streak = 0usize;
        let max_pivots = 50_000 + 50 * size;
        for pivot in 0..max_pivots {
            if pivot > 0 && pivot % 64 == 0 {
                binv = self.basis_inverse(&basis)?;
                xb = (&binv * &rhs).iter().map(|x| x.max(0.0)).collect();
            }
            // Simplex multipliers y = c_B^T B^{-1}.
            let cb: Vec<f64> = basis.iter().map(|&v| self.cost.values[v]).collect();
            let mut y = vec![0.0; self.rows];
            for (r, yr) in y.iter_mut().enumerate() {
                *yr = (0..self.rows).map(|i| cb[i] * binv[(i, r)]).sum();
            }
            // Pricing: Dantzig, falling back to Bland after degenerate stalls.
            let bland = degenerate_streak > 20;
            let mut entering = None;
            let mut best = -tol;
            let mut idx = vec![0; self.shape.len()];
            for var in 0..size {
                if !is_basic[var] {
                    self.column_rows(&idx, &mut rows);
                    let reduced = self.cost.values[var] - rows.iter().map(|&r| y[r]).sum::<f64>();
                    if reduced < best {
                        entering = Some(var);
                        if bland {
                            break;
                        }
                        best = reduced;
                    }
                }
                advance(&mut idx, &self.shape);
            }
            let Some(enter) = entering else {
                return Ok(basis.iter().zip(&xb).map(|(&v, &x)| (self.unravel(v), x.max(0.0))).collect());
            };
            self.column_rows(&self.unravel(enter), &mut rows);
            let col: Vec<f64> =
                (0..self.rows).map(|i| rows.iter().map(|&r| binv[(i, r)]).sum()).collect();
            // Ratio test with smallest-variable tie breaking.
            let mut leave: Option<usize> = None;
            let mut ratio = f64::INFINITY;
            for i in 0..self.rows {
                if col[i] > 1e-12 {
                    let r = xb[i].max(0.0) / col[i];
                    let better = match leave {
                        None => true,
                        Some(l) => r < ratio - 1e-15 || (r <= ratio + 1e-15 && basis[i] < basis[l]),
                    };
                    if better {
                        ratio = if leave.is_none() { r } else { r.min(ratio) };
                        leave = Some(i);
                    }
                }
            }
            let Some(r) = leave else {
                return Err(Error::Infeasible("multimarginal LP reported unbounded".into()));
            };
            degenerate_streak = if ratio <= 1e-15 { degenerate_streak + 1 } else { 0 };
            for i in 0..self.rows {
                xb[i] -= ratio * col[i];
            }
            xb[r] = ratio;
            let piv = col[r];
            for c in 0..self.rows {
                binv[(r, c)] /= piv;
            }
            for i in 0..self.rows {
                if i != r && col[i] != 0.0 {
                    let f = col[i];
                    for c in 0..self.rows {
                        binv[(i, c)] -= f * binv[(r, c)];
                    }
                }
            }
            is_basic[basis[r]] = false;
            is_basic[enter] = true;
            basis[r] = enter;
        }
        Err(Error::Infeasible("multimarginal simplex exceeded its pivot budget".into()))
    }
}

/// Sinkhorn stopping rules.
#[derive(Debug, Clone, Copy)]
pub struct SinkhornOptions {
    /// Stop once the L1 row-marginal violation is at most this.
    pub tol: f64,
    pub max_iter: usize,
    /// Record the dual objective after every iteration.
    pub record_dual: bool,
}

impl Default for SinkhornOptions {
    fn default() -> Self {
        SinkhornOptions { tol: 1e-8, max_iter: 100_000, record_dual: false }
    }
}

/// Output of the entropic solvers.
#[derive(Debug, Clone)]
pub struct SinkhornResult {
    /// Dense plan (empty for grid solvers).
    pub plan: Vec<Vec<f64>>,
    /// `<P, C>` of the returned plan.
    pub transport_cost: f64,
    /// `<P, C> + eps * KL(P | a b^T)`.
    pub objective: f64,
    /// Dual objective trace, nondecreasing over iterations.
    pub dual_trace: Vec<f64>,
    pub iterations: usize,
    /// L1 row-marginal violation at exit.
    pub violation: f64,
    /// False when `max_iter` ran out first; the result is still usable.
    pub converged: bool,
}

fn log_weights(w: &[f64]) -> Vec<f64> {
    w.iter().map(|&x| if x > 0.0 { x.ln() } else { f64::NEG_INFINITY }).collect()
}

/// Entropic OT between `a` and `b` with log-domain updates.
pub fn sinkhorn(
    a: &[f64],
    b: &[f64],
    cost: &[Vec<f64>],
    eps: f64,
    opts: SinkhornOptions,
) -> Result<SinkhornResult> {
    if !(eps > 0.0 && eps.is_finite()) {
        return Err(Error::domain(format!("epsilon must be positive, got {eps}")));
    }
    check_balanced(a, b)?;
    check_cost(cost, a.len(), b.len())?;
    let kernel = DenseKernel { cost, eps };
    let mut solver = EntropicSolver::new(a, b, eps);
    solver.run(&kernel, opts);
    let mut result = solver.finish(&kernel);
    // Materialize the plan.
    let (la, lb) = (log_weights(a), log_weights(b));
    result.plan = (0..a.len())
        .map(|i| {
            (0..b.len())
                .map(|j| {
                    (la[i] + lb[j] + solver.f[i] + solver.g[j] - cost[i][j] / eps).exp()
                })
                .collect()
        })
        .collect();
    Ok(result)
}

/// Log-domain kernel operations needed by the entropic solvers.
trait LogKernel {
    /// `out_i = LSE_j(v_j - C_ij / eps)`.
    fn apply(&self, v: &[f64]) -> Vec<f64>;
    /// `out_j = LSE_i(v_i - C_ij / eps)`.
    fn apply_t(&self, v: &[f64]) -> Vec<f64>;
    /// `log sum_ij exp(u_i + v_j - C_ij / eps) C_ij`.
    fn log_cost(&self, u: &[f64], v: &[f64]) -> f64;
}

struct DenseKernel<'a> {
    cost: &'a [Vec<f64>],
    eps: f64,
}

impl LogKernel for DenseKernel<'_> {
    fn apply(&self, v: &[f64]) -> Vec<f64> {
        let mut buf = vec![0.0; v.len()];
        self.cost
            .iter()
            .map(|row| {
                for (j, t) in buf.iter_mut().enumerate() {
                    *t = v[j] - row[j] / self.eps;
                }
                log_sum_exp(&buf)
            })
            .collect()
    }

    fn apply_t(&self, v: &[f64]) -> Vec<f64> {
        let cols = self.cost[0].len();
        let mut buf = vec![0.0; v.len()];
        (0..cols)
            .map(|j| {
                for (i, t) in buf.iter_mut().enumerate() {
                    *t = v[i] - self.cost[i][j] / self.eps;
                }
                log_sum_exp(&buf)
            })
            .collect()
    }

    fn log_cost(&self, u: &[f64], v: &[f64]) -> f64 {
        let mut terms = Vec::with_capacity(u.len() * v.len());
        for (i, row) in self.cost.iter().enumerate() {
            for (j, &c) in row.iter().enumerate() {
                if c > 0.0 {
                    terms.push(u[i] + v[j] - c / self.eps + c.ln());
                }
            }
        }
        log_sum_exp(&terms)
    }
}

/// Potentials stored divided by epsilon: `P_ij = a_i b_j exp(F_i + G_j - C_ij/eps)`.
struct EntropicSolver {
    la: Vec<f64>,
    lb: Vec<f64>,
    f: Vec<f64>,
    g: Vec<f64>,
    eps: f64,
    mass: f64,
    dual_trace: Vec<f64>,
    iterations: usize,
    violation: f64,
    converged: bool,
}

impl EntropicSolver {
    fn new(a: &[f64], b: &[f64], eps: f64) -> Self {
        EntropicSolver {
            la: log_weights(a),
            lb: log_weights(b),
            f: vec![0.0; a.len()],
            g: vec![0.0; b.len()],
            eps,
            mass: a.iter().sum::<f64>() * b.iter().sum::<f64>(),
            dual_trace: Vec::new(),
            iterations: 0,
            violation: f64::INFINITY,
            converged: false,
        }
    }

    fn shifted(base: &[f64], pot: &[f64]) -> Vec<f64> {
        base.iter().zip(pot).map(|(l, p)| l + p).collect()
    }

    fn row_sums<K: LogKernel>(&self, k: &K) -> Vec<f64> {
        let kv = k.apply(&Self::shifted(&self.lb, &self.g));
        (0..self.f.len()).map(|i| (self.la[i] + self.f[i] + kv[i]).exp()).collect()
    }

    fn dual<K: LogKernel>(&self, k: &K) -> f64 {
        // After a column update the plan mass equals sum(b).
        let total: f64 = self.lb.iter().map(|l| l.exp()).sum();
        let fa: f64 = self
            .la
            .iter()
            .zip(&self.f)
            .filter(|(l, _)| l.is_finite())
            .map(|(l, f)| l.exp() * f)
            .sum();
        let gb: f64 = self
            .lb
            .iter()
            .zip(&self.g)
            .filter(|(l, _)| l.is_finite())
            .map(|(l, g)| l.exp() * g)
            .sum();
        let _ = k;
        self.eps * (fa + gb) - self.eps * (total - self.mass)
    }

    fn run<K: LogKernel>(&mut self, k: &K, opts: SinkhornOptions) {
        let check_every = if opts.record_dual { 1 } else { 10 };
        for it in 1..=opts.max_iter {
            let kg = k.apply(&Self::shifted(&self.lb, &self.g));
            for (f, v) in self.f.iter_mut().zip(&kg) {
                *f = -v;
            }
            let kf = k.apply_t(&Self::shifted(&self.la, &self.f));
            for (g, v) in self.g.iter_mut().zip(&kf) {
                *g = -v;
            }
            self.iterations = it;
            if opts.record_dual {
                let d = self.dual(k);
                self.dual_trace.push(d);
            }
            if it % check_every == 0 || it == opts.max_iter {
                let rows = self.row_sums(k);
                self.violation = rows
                    .iter()
                    .zip(&self.la)
                    .map(|(r, l)| (r - l.exp()).abs())
                    .sum();
                if self.violation <= opts.tol {
                    self.converged = true;
                    return;
                }
            }
        }
    }

    /// Self-transport `OT(a, a)` under a symmetric kernel: one potential,
    /// updated by averaging with its Sinkhorn image. Plain alternating
    /// updates can oscillate for thousands of iterations on this problem.
    fn run_symmetric<K: LogKernel>(&mut self, k: &K, opts: SinkhornOptions) {
        for it in 1..=opts.max_iter {
            let kf = k.apply(&Self::shifted(&self.la, &self.f));
            for (f, v) in self.f.iter_mut().zip(&kf) {
                *f = 0.5 * (*f - v);
            }
            self.g.clone_from(&self.f);
            self.iterations = it;
            let rows = self.row_sums(k);
            self.violation = rows.iter().zip(&self.la).map(|(r, l)| (r - l.exp()).abs()).sum();
            if self.violation <= opts.tol {
                self.converged = true;
                return;
            }
        }
    }

    fn finish<K: LogKernel>(&self, k: &K) -> SinkhornResult {
        let u = Self::shifted(&self.la, &self.f);
        let v = Self::shifted(&self.lb, &self.g);
        let transport_cost = k.log_cost(&u, &v).exp();
        let rows = self.row_sums(k);
        let cols: Vec<f64> = self.lb.iter().map(|l| l.exp()).collect();
        let total: f64 = cols.iter().sum();
        let pf: f64 = rows.iter().zip(&self.f).filter(|(r, _)| **r > 0.0).map(|(r, f)| r * f).sum();
        let pg: f64 = cols.iter().zip(&self.g).filter(|(c, _)| **c > 0.0).map(|(c, g)| c * g).sum();
        // <P, C> + eps KL(P | ab^T) = eps (sum P (F + G)) - eps sum P + eps |a||b|
        let objective = self.eps * (pf + pg) - self.eps * total + self.eps * self.mass;
        SinkhornResult {
            plan: Vec::new(),
            transport_cost,
            objective,
            dual_trace: self.dual_trace.clone(),
            iterations: self.iterations,
            violation: self.violation,
            converged: self.converged,
        }
    }
}

/// Tensor-product grid; points are ordered row-major (last axis fastest).
#[derive(Debug, Clone, PartialEq)]
pub struct Grid {
    axes: Vec<Vec<f64>>,
}

impl Grid {
    pub fn new(axes: Vec<Vec<f64>>) -> Result<Self> {
        if axes.is_empty() || axes.iter().any(|a| a.is_empty()) {
            return Err(Error::domain("grid needs at least one nonempty axis"));
        }
        Ok(Grid { axes })
    }

    /// `n` evenly spaced cell centers on `[lo, hi]` along each of `dim` axes.
    pub fn uniform(dim: usize, lo: f64, hi: f64, n: usize) -> Result<Self> {
        let h = (hi - lo) / n as f64;
        let axis: Vec<f64> = (0..n).map(|i| lo + (i as f64 + 0.5) * h).collect();
        Self::new(vec![axis; dim])
    }

    pub fn axes(&self) -> &[Vec<f64>] {
        &self.axes
    }

    pub fn dim(&self) -> usize {
        self.axes.len()
    }

    pub fn shape(&self) -> Vec<usize> {
        self.axes.iter().map(|a| a.len()).collect()
    }

    pub fn len(&self) -> usize {
        self.axes.iter().map(|a| a.len()).product()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Volume of one cell (product of the axis spacings).
    pub fn cell_volume(&self) -> f64 {
        self.axes
            .iter()
            .map(|a| if a.len() > 1 { (a[a.len() - 1] - a[0]) / (a.len() - 1) as f64 } else { 1.0 })
            .product()
    }

    pub fn points(&self) -> Vec<Vec<f64>> {
        let shape = self.shape();
        let mut idx = vec![0; shape.len()];
        (0..self.len())
            .map(|_| {
                let p = idx.iter().zip(&self.axes).map(|(&i, a)| a[i]).collect();
                advance(&mut idx, &shape);
                p
            })
            .collect()
    }
}

/// Squared-Euclidean kernel on a grid, applied one axis at a time.
struct GridKernel<'a> {
    grid: &'a Grid,
    eps: f64,
}

impl GridKernel<'_> {
    /// Transforms `v` along each axis with `log K_axis`, optionally
    /// weighting `weighted` by the squared axis offset.
    fn transform(&self, v: &[f64], weighted: Option<usize>) -> Vec<f64> {
        let shape = self.grid.shape();
        let mut cur = v.to_vec();
        let mut next = vec![0.0; cur.len()];
        for ax in 0..shape.len() {
            let n = shape[ax];
            let stride: usize = shape[ax + 1..].iter().product();
            let block = n * stride;
            let coords = &self.grid.axes[ax];
            let mut buf = vec![0.0; n];
            for outer in (0..cur.len()).step_by(block) {
                for inner in 0..stride {
                    let base = outer + inner;
                    for i in 0..n {
                        for (j, t) in buf.iter_mut().enumerate() {
                            let d = coords[i] - coords[j];
                            let d2 = d * d;
                            *t = cur[base + j * stride] - d2 / self.eps;
                            if weighted == Some(ax) {
                                *t += if d2 > 0.0 { d2.ln() } else { f64::NEG_INFINITY };
                            }
                        }
                        next[base + i * stride] = log_sum_exp(&buf);
                    }
                }
            }
            std::mem::swap(&mut cur, &mut next);
        }
        cur
    }
}

impl LogKernel for GridKernel<'_> {
    fn apply(&self, v: &[f64]) -> Vec<f64> {
        self.transform(v, None)
    }

    fn apply_t(&self, v: &[f64]) -> Vec<f64> {
        self.transform(v, None)
    }

    fn log_cost(&self, u: &[f64], v: &[f64]) -> f64 {
        let terms: Vec<f64> = (0..self.grid.dim())
            .map(|ax| {
                let kv = self.transform(v, Some(ax));
                let t: Vec<f64> = u.iter().zip(&kv).map(|(a, b)| a + b).collect();
                log_sum_exp(&t)
            })
            .collect();
        log_sum_exp(&terms)
    }
}

fn check_grid_measure(grid: &Grid, w: &[f64], name: &str) -> Result<()> {
    if w.len() != grid.len() {
        return Err(Error::domain(format!("{name} has {} weights for {} grid points", w.len(), grid.len())));
    }
    check_weights(name, w).map(|_| ())
}

/// Entropic OT between two measures on the same grid with squared
/// Euclidean cost, without forming the cost matrix.
pub fn grid_sinkhorn(
    grid: &Grid,
    a: &[f64],
    b: &[f64],
    eps: f64,
    opts: SinkhornOptions,
) -> Result<SinkhornResult> {
    if !(eps > 0.0 && eps.is_finite()) {
        return Err(Error::domain(format!("epsilon must be positive, got {eps}")));
    }
    check_grid_measure(grid, a, "source")?;
    check_grid_measure(grid, b, "target")?;
    check_balanced(a, b)?;
    let kernel = GridKernel { grid, eps };
    let mut solver = EntropicSolver::new(a, b, eps);
    solver.run(&kernel, opts);
    Ok(solver.finish(&kernel))
}

/// Debiased entropic cost on a grid,
/// `OT(a, b) - (OT(a, a) + OT(b, b)) / 2` with `OT` the entropic objective.
/// Nonnegative up to solver tolerance and much closer to `W2^2` than the
/// plain entropic cost at the same epsilon.
pub fn grid_sinkhorn_divergence(grid: &Grid, a: &[f64], b: &[f64], eps: f64, opts: SinkhornOptions) -> Result<f64> {
    let cross = grid_sinkhorn(grid, a, b, eps, opts)?.objective;
    let kernel = GridKernel { grid, eps };
    let self_cost = |x: &[f64]| {
        let mut solver = EntropicSolver::new(x, x, eps);
        solver.run_symmetric(&kernel, opts);
        solver.finish(&kernel).objective
    };
    Ok(cross - 0.5 * (self_cost(a) + self_cost(b)))
}

/// Entropic W2 barycenter of measures on a shared grid by iterative
/// Bregman projections. Returns normalized barycenter weights.
pub fn grid_barycenter(
    grid: &Grid,
    measures: &[Vec<f64>],
    lambda: &[f64],
    eps: f64,
    opts: SinkhornOptions,
) -> Result<Vec<f64>> {
    if measures.is_empty() || measures.len() != lambda.len() {
        return Err(Error::domain("need one barycenter weight per measure"));
    }
    if !(eps > 0.0 && eps.is_finite()) {
        return Err(Error::domain(format!("epsilon must be positive, got {eps}")));
    }
    crate::radial::check_simplex(lambda, measures.len())?;
    for (j, m) in measures.iter().enumerate() {
        check_grid_measure(grid, m, &format!("measure {j}"))?;
    }
    let kernel = GridKernel { grid, eps };
    let logp: Vec<Vec<f64>> = measures
        .iter()
        .map(|m| {
            let s: f64 = m.iter().sum();
            m.iter().map(|&x| if x > 0.0 { (x / s).ln() } else { f64::NEG_INFINITY }).collect()
        })
        .collect();
    let n = grid.len();
    let mut v = vec![vec![0.0; n]; measures.len()];
    let mut q = vec![1.0 / n as f64; n];
    for _ in 0..opts.max_iter {
        let mut logq = vec![0.0; n];
        let mut ktu_all = Vec::with_capacity(measures.len());
        for (k, lp) in logp.iter().enumerate() {
            let kv = kernel.apply(&v[k]);
            let u: Vec<f64> = lp.iter().zip(&kv).map(|(p, x)| p - x).collect();
            let ktu = kernel.apply_t(&u);
            for i in 0..n {
                if lambda[k] > 0.0 {
                    logq[i] += lambda[k] * (v[k][i] + ktu[i]);
                }
            }
            ktu_all.push(ktu);
        }
        for (k, ktu) in ktu_all.iter().enumerate() {
            for i in 0..n {
                v[k][i] = logq[i] - ktu[i];
            }
        }
        let total = log_sum_exp(&logq);
        let next: Vec<f64> = logq.iter().map(|l| (l - total).exp()).collect();
        let change: f64 = next.iter().zip(&q).map(|(x, y)| (x - y).abs()).sum();
        q = next;
        if change <= opts.tol {
            break;
        }
    }
    Ok(q)
}

/// Minimum-cost perfect matching on an `n x n` cost matrix (row-major),
/// by shortest augmenting paths with potentials. Returns the column
/// assigned to each row.
pub fn assignment(cost: &[f64], n: usize) -> Vec<usize> {
    assert_eq!(cost.len(), n * n);
    let inf = f64::INFINITY;
    let mut u = vec![0.0; n + 1];
    let mut v = vec![0.0; n + 1];
    let mut p = vec![0usize; n + 1];
    let mut way = vec![0usize; n + 1];
    for i in 1..=n {
        p[0] = i;
        let mut j0 = 0;
        let mut minv = vec![inf; n + 1];
        let mut used = vec![false; n + 1];
        loop {
            used[j0] = true;
            let i0 = p[j0];
            let mut delta = inf;
            let mut j1 = 0;
            let row = &cost[(i0 - 1) * n..i0 * n];
            for j in 1..=n {
                if !used[j] {
                    let cur = row[j - 1] - u[i0] - v[j];
                    if cur < minv[j] {
                        minv[j] = cur;
                        way[j] = j0;
                    }
                    if minv[j] < delta {
                        delta = minv[j];
                        j1 = j;
                    }
                }
            }
            for j in 0..=n {
                if used[j] {
                    u[p[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
            if p[j0] == 0 {
                break;
            }
        }
        loop {
            let j1 = way[j0];
            p[j0] = p[j1];
            j0 = j1;
            if j0 == 0 {
                break;
            }
        }
    }
    let mut out = vec![0; n];
    for j in 1..=n {
        out[p[j] - 1] = j - 1;
    }
    out
}

fn check_clouds(x: &[Vec<f64>], y: &[Vec<f64>]) -> Result<()> {
    if x.len() != y.len() {
        return Err(Error::domain(format!(
            "point clouds must have equal sizes ({} vs {}); resample first",
            x.len(),
            y.len()
        )));
    }
    if x.is_empty() {
        return Err(Error::domain("point clouds are empty"));
    }
    let d = x[0].len();
    if x.iter().chain(y).any(|p| p.len() != d) {
        return Err(Error::domain("points have inconsistent dimensions"));
    }
    Ok(())
}

fn squared_costs(x: &[Vec<f64>], y: &[Vec<f64>]) -> Vec<f64> {
    let mut c = Vec::with_capacity(x.len() * y.len());
    for p in x {
        for q in y {
            c.push(crate::radial::dist2(p, q));
        }
    }
    c
}

/// Exact squared W2 between two uniform clouds of equal size.
///
/// With uniform weights the transportation LP has a permutation optimum,
/// so the exact value comes from an assignment solver. Sizes above
/// [`EXACT_EMPIRICAL_LIMIT`] must use [`empirical_w2_sinkhorn`].
pub fn empirical_w2(x: &[Vec<f64>], y: &[Vec<f64>]) -> Result<f64> {
    check_clouds(x, y)?;
    let n = x.len();
    if n > EXACT_EMPIRICAL_LIMIT {
        return Err(Error::Unsupported(format!(
            "exact empirical W2 is limited to {EXACT_EMPIRICAL_LIMIT} points (got {n}); \
             use the Sinkhorn estimate"
        )));
    }
    let cost = squared_costs(x, y);
    let perm = assignment(&cost, n);
    Ok(perm.iter().enumerate().map(|(i, &j)| cost[i * n + j]).sum::<f64>() / n as f64)
}

/// Entropic estimate of the squared W2 between two uniform clouds; the
/// transport cost of the returned plan is the estimate.
pub fn empirical_w2_sinkhorn(
    x: &[Vec<f64>],
    y: &[Vec<f64>],
    eps: f64,
    opts: SinkhornOptions,
) -> Result<SinkhornResult> {
    check_clouds(x, y)?;
    let n = x.len();
    let cost = squared_costs(x, y);
    let rows: Vec<Vec<f64>> = cost.chunks(n).map(|r| r.to_vec()).collect();
    let w = vec![1.0 / n as f64; n];
    sinkhorn(&w, &w, &rows, eps, opts)
}

/// Gluing of two plans through their shared marginal `pi1`:
/// `w02_kl = sum_j w01_kj w12_jl / pi1_j`.
pub fn compose(w01: &TransportPlan, w12: &TransportPlan) -> TransportPlan {
    let (k0, k1, k2) = (w01.rows(), w01.cols(), w12.cols());
    let mut weights = vec![vec![0.0; k2]; k0];
    for (k, row) in weights.iter_mut().enumerate() {
        for j in 0..k1 {
            let pj = w01.col_marginal[j];
            if pj <= 0.0 || w01.weights[k][j] == 0.0 {
                continue;
            }
            for (l, w) in row.iter_mut().enumerate() {
                *w += w01.weights[k][j] * w12.weights[j][l] / pj;
            }
        }
    }
    TransportPlan {
        weights,
        row_marginal: w01.row_marginal.clone(),
        col_marginal: w12.col_marginal.clone(),
        objective: f64::NAN,
    }
}
