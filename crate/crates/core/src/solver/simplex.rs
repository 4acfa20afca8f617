//! Bounded primal revised simplex.
//!
//! Every row `a·x ⋚ b` is written `a·x + s = b` with a logical `s` whose
//! bounds encode the relation. Phase one minimises the sum of bound
//! violations of the basic variables starting from any basis, which also
//! serves warm starts after branching changes variable bounds.

use super::factor::EtaFile;
use super::{LpProblem, LpSolution, LpStatus, Relation};

#[derive(Debug, Clone)]
pub struct SimplexOptions {
    pub feasibility_tol: f64,
    pub optimality_tol: f64,
    pub pivot_tol: f64,
    /// Defaults to `20 * (rows + columns) + 10_000`.
    pub max_iterations: Option<usize>,
    /// Consecutive degenerate pivots before switching to Bland's rule.
    pub bland_after: usize,
    pub refactor_every: usize,
}

impl Default for SimplexOptions {
    fn default() -> Self {
        Self {
            feasibility_tol: 1e-9,
            optimality_tol: 1e-9,
            pivot_tol: 1e-9,
            max_iterations: None,
            bland_after: 50,
            refactor_every: 100,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) enum NonBasic {
    Lower,
    Upper,
    Free,
}

/// Basis snapshot used to warm start a related problem.
#[derive(Debug, Clone)]
pub(crate) struct Basis {
    head: Vec<usize>,
    state: Vec<NonBasic>,
}

struct Model {
    n: usize,
    m: usize,
    col_ptr: Vec<usize>,
    row_idx: Vec<usize>,
    vals: Vec<f64>,
    b: Vec<f64>,
    cost: Vec<f64>,
    lower: Vec<f64>,
    upper: Vec<f64>,
}

impl Model {
    fn new(p: &LpProblem, lower: &[f64], upper: &[f64]) -> Self {
        let n = p.num_vars();
        let m = p.num_constraints();
        let mut entries: Vec<(usize, usize, f64)> = Vec::new();
        let mut b = Vec::with_capacity(m);
        let mut lo = lower.to_vec();
        let mut hi = upper.to_vec();
        let mut row_buf: Vec<(usize, f64)> = Vec::new();
        for (i, c) in p.constraints().iter().enumerate() {
            row_buf.clear();
            row_buf.extend(c.coeffs.iter().copied());
            row_buf.sort_by_key(|&(j, _)| j);
            let mut k = 0;
            while k < row_buf.len() {
                let j = row_buf[k].0;
                let mut a = 0.0;
                while k < row_buf.len() && row_buf[k].0 == j {
                    a += row_buf[k].1;
                    k += 1;
                }
                if a != 0.0 {
                    entries.push((j, i, a));
                }
            }
            b.push(c.rhs);
            let (l, u) = match c.relation {
                Relation::Le => (0.0, f64::INFINITY),
                Relation::Ge => (f64::NEG_INFINITY, 0.0),
                Relation::Eq => (0.0, 0.0),
            };
            lo.push(l);
            hi.push(u);
        }
        entries.sort_by_key(|&(j, i, _)| (j, i));
        let mut col_ptr = vec![0usize; n + 1];
        for &(j, _, _) in &entries {
            col_ptr[j + 1] += 1;
        }
        for j in 0..n {
            col_ptr[j + 1] += col_ptr[j];
        }
        let row_idx = entries.iter().map(|e| e.1).collect();
        let vals = entries.iter().map(|e| e.2).collect();
        let mut cost = p.cost().to_vec();
        cost.resize(n + m, 0.0);
        Self {
            n,
            m,
            col_ptr,
            row_idx,
            vals,
            b,
            cost,
            lower: lo,
            upper: hi,
        }
    }

    fn col_nnz(&self, j: usize) -> usize {
        if j < self.n {
            self.col_ptr[j + 1] - self.col_ptr[j]
        } else {
            1
        }
    }

    fn scatter(&self, j: usize, dense: &mut [f64]) {
        dense.iter_mut().for_each(|v| *v = 0.0);
        if j < self.n {
            for k in self.col_ptr[j]..self.col_ptr[j + 1] {
                dense[self.row_idx[k]] = self.vals[k];
            }
        } else {
            dense[j - self.n] = 1.0;
        }
    }

    fn dot(&self, j: usize, y: &[f64]) -> f64 {
        if j < self.n {
            (self.col_ptr[j]..self.col_ptr[j + 1])
                .map(|k| self.vals[k] * y[self.row_idx[k]])
                .sum()
        } else {
            y[j - self.n]
        }
    }

    /// dense -= a_j * scale
    fn axpy(&self, j: usize, scale: f64, dense: &mut [f64]) {
        if j < self.n {
            for k in self.col_ptr[j]..self.col_ptr[j + 1] {
                dense[self.row_idx[k]] -= self.vals[k] * scale;
            }
        } else {
            dense[j - self.n] -= scale;
        }
    }
}

const NOT_BASIC: usize = usize::MAX;

struct Engine<'a> {
    md: Model,
    opts: &'a SimplexOptions,
    head: Vec<usize>,
    pos: Vec<usize>,
    state: Vec<NonBasic>,
    x: Vec<f64>,
    inv: EtaFile,
    etas_at_refactor: usize,
    iterations: usize,
    alpha: Vec<f64>,
    y: Vec<f64>,
}

enum Outcome {
    Optimal,
    Infeasible,
    Unbounded,
    Limit,
}

pub(crate) fn solve(
    p: &LpProblem,
    lower: &[f64],
    upper: &[f64],
    warm: Option<&Basis>,
    opts: &SimplexOptions,
) -> LpSolution {
    let md = Model::new(p, lower, upper);
    let n = md.n;
    let total = md.n + md.m;
    let mut eng = Engine {
        head: Vec::new(),
        pos: vec![NOT_BASIC; total],
        state: vec![NonBasic::Lower; total],
        x: vec![0.0; total],
        inv: EtaFile::default(),
        etas_at_refactor: 0,
        iterations: 0,
        alpha: vec![0.0; md.m],
        y: vec![0.0; md.m],
        md,
        opts,
    };
    match warm {
        Some(basis) if basis.head.len() == eng.md.m && basis.state.len() == total => {
            eng.head = basis.head.clone();
            eng.state = basis.state.clone();
        }
        _ => {
            eng.head = (n..total).collect();
        }
    }
    for (r, &v) in eng.head.iter().enumerate() {
        eng.pos[v] = r;
    }
    for j in 0..total {
        eng.normalize_state(j);
    }
    eng.refactor();
    let outcome = eng.run();
    let status = match outcome {
        Outcome::Optimal => LpStatus::Optimal,
        Outcome::Infeasible => LpStatus::Infeasible,
        Outcome::Unbounded => LpStatus::Unbounded,
        Outcome::Limit => LpStatus::IterationLimit,
    };
    let values = eng.x[..n].to_vec();
    let objective = p.objective_value(&values);
    LpSolution {
        status,
        values,
        objective,
        iterations: eng.iterations,
        basis: Some(Basis {
            head: eng.head,
            state: eng.state,
        }),
    }
}

impl Engine<'_> {
    fn normalize_state(&mut self, j: usize) {
        let (lf, uf) = (self.md.lower[j].is_finite(), self.md.upper[j].is_finite());
        self.state[j] = match (self.state[j], lf, uf) {
            (_, false, false) => NonBasic::Free,
            (NonBasic::Upper, _, true) => NonBasic::Upper,
            (_, true, _) => NonBasic::Lower,
            (_, false, true) => NonBasic::Upper,
        };
    }

    fn nonbasic_value(&self, j: usize) -> f64 {
        match self.state[j] {
            NonBasic::Lower => self.md.lower[j],
            NonBasic::Upper => self.md.upper[j],
            NonBasic::Free => 0.0,
        }
    }

    /// Rebuild the basis inverse from scratch and recompute basic values.
    /// Structural columns that turn out dependent are swapped for logicals.
    fn refactor(&mut self) {
        let (n, m) = (self.md.n, self.md.m);
        self.inv.clear();
        let mut claimed = vec![false; m];
        let mut new_head = vec![NOT_BASIC; m];
        let mut structurals = Vec::new();
        for &v in &self.head {
            if v >= n {
                claimed[v - n] = true;
                new_head[v - n] = v;
            } else {
                structurals.push(v);
            }
        }
        structurals.sort_by_key(|&j| (self.md.col_nnz(j), j));
        let mut w = vec![0.0; m];
        for j in structurals {
            self.md.scatter(j, &mut w);
            self.inv.ftran(&mut w);
            let mut best = NOT_BASIC;
            let mut best_abs = 0.0;
            for (r, &v) in w.iter().enumerate() {
                if !claimed[r] && v.abs() > best_abs {
                    best_abs = v.abs();
                    best = r;
                }
            }
            if best == NOT_BASIC || best_abs < 1e-9 {
                self.pos[j] = NOT_BASIC;
                self.state[j] = NonBasic::Lower;
                self.normalize_state(j);
                continue;
            }
            self.inv.push(best, &w);
            claimed[best] = true;
            new_head[best] = j;
        }
        for r in 0..m {
            if new_head[r] == NOT_BASIC {
                new_head[r] = n + r;
            }
        }
        for (r, &v) in new_head.iter().enumerate() {
            self.pos[v] = r;
        }
        self.head = new_head;
        self.etas_at_refactor = self.inv.len();
        self.compute_basic_values();
    }

    fn compute_basic_values(&mut self) {
        let total = self.md.n + self.md.m;
        let mut rhs = self.md.b.clone();
        for j in 0..total {
            if self.pos[j] == NOT_BASIC {
                let v = self.nonbasic_value(j);
                self.x[j] = v;
                if v != 0.0 {
                    self.md.axpy(j, v, &mut rhs);
                }
            }
        }
        self.inv.ftran(&mut rhs);
        for (r, &v) in self.head.iter().enumerate() {
            self.x[v] = rhs[r];
        }
    }

    fn updates(&self) -> usize {
        self.inv.len() - self.etas_at_refactor
    }

    fn infeasibility(&self, v: usize) -> i8 {
        let tol = self.opts.feasibility_tol;
        if self.x[v] < self.md.lower[v] - tol {
            -1
        } else if self.x[v] > self.md.upper[v] + tol {
            1
        } else {
            0
        }
    }

    fn run(&mut self) -> Outcome {
        let (n, m) = (self.md.n, self.md.m);
        let total = n + m;
        let max_iter = self
            .opts
            .max_iterations
            .unwrap_or(20 * total + 10_000);
        let tol = self.opts.feasibility_tol;
        let mut degenerate_run = 0usize;
        let mut bland = false;
        let mut stalled_phase1 = 0usize;

        loop {
            if self.iterations >= max_iter {
                return Outcome::Limit;
            }
            if self.updates() >= self.opts.refactor_every {
                self.refactor();
            }

            let phase1 = self.head.iter().any(|&v| self.infeasibility(v) != 0);
            for r in 0..m {
                let v = self.head[r];
                self.y[r] = if phase1 {
                    self.infeasibility(v) as f64
                } else {
                    self.md.cost[v]
                };
            }
            self.inv.btran(&mut self.y);

            // Pricing.
            let mut entering = NOT_BASIC;
            let mut entering_dir = 0.0;
            let mut best_score = 0.0;
            for j in 0..total {
                if self.pos[j] != NOT_BASIC || self.md.lower[j] == self.md.upper[j] {
                    continue;
                }
                let c = if phase1 { 0.0 } else { self.md.cost[j] };
                let d = c - self.md.dot(j, &self.y);
                let dir = match self.state[j] {
                    NonBasic::Lower if d < -self.opts.optimality_tol => 1.0,
                    NonBasic::Upper if d > self.opts.optimality_tol => -1.0,
                    NonBasic::Free if d.abs() > self.opts.optimality_tol => -d.signum(),
                    _ => continue,
                };
                if bland {
                    entering = j;
                    entering_dir = dir;
                    break;
                }
                if d.abs() > best_score {
                    best_score = d.abs();
                    entering = j;
                    entering_dir = dir;
                }
            }

            if entering == NOT_BASIC {
                if self.updates() > 0 {
                    // Confirm on a fresh factorization before declaring.
                    self.refactor();
                    continue;
                }
                return if phase1 {
                    Outcome::Infeasible
                } else {
                    Outcome::Optimal
                };
            }

            let q = entering;
            self.md.scatter(q, &mut self.alpha);
            self.inv.ftran(&mut self.alpha);

            // Harris two-pass ratio test.
            let range = self.md.upper[q] - self.md.lower[q];
            let mut t_max = range;
            let mut ratios: Vec<(usize, f64, bool)> = Vec::new();
            for r in 0..m {
                let a = self.alpha[r];
                if a.abs() <= self.opts.pivot_tol {
                    continue;
                }
                let delta = -entering_dir * a;
                let v = self.head[r];
                let (xv, l, u) = (self.x[v], self.md.lower[v], self.md.upper[v]);
                let (t_exact, t_relaxed, hits_upper) = if xv < l - tol {
                    if delta <= 0.0 {
                        continue;
                    }
                    ((l - xv) / delta, (l - xv + tol) / delta, false)
                } else if xv > u + tol {
                    if delta >= 0.0 {
                        continue;
                    }
                    ((xv - u) / -delta, (xv - u + tol) / -delta, true)
                } else if delta < 0.0 {
                    if !l.is_finite() {
                        continue;
                    }
                    ((xv - l).max(0.0) / -delta, (xv - l + tol) / -delta, false)
                } else {
                    if !u.is_finite() {
                        continue;
                    }
                    ((u - xv).max(0.0) / delta, (u - xv + tol) / delta, true)
                };
                if t_relaxed < t_max {
                    t_max = t_relaxed;
                }
                ratios.push((r, t_exact, hits_upper));
            }

            let mut leave: Option<(usize, f64, bool)> = None;
            if bland {
                let t_min = ratios
                    .iter()
                    .map(|&(_, t, _)| t)
                    .fold(f64::INFINITY, f64::min);
                if t_min < range || !range.is_finite() {
                    for &(r, t, up) in &ratios {
                        if t <= t_min + 1e-12
                            && leave.is_none_or(|(lr, _, _)| self.head[r] < self.head[lr])
                        {
                            leave = Some((r, t, up));
                        }
                    }
                }
            } else if !(range.is_finite() && range <= t_max) {
                let mut best_abs = 0.0;
                for &(r, t, up) in &ratios {
                    if t <= t_max && self.alpha[r].abs() > best_abs {
                        best_abs = self.alpha[r].abs();
                        leave = Some((r, t, up));
                    }
                }
            }

            self.iterations += 1;
            match leave {
                None if range.is_finite() => {
                    // Bound flip of the entering variable.
                    for r in 0..m {
                        let a = self.alpha[r];
                        if a != 0.0 {
                            self.x[self.head[r]] -= entering_dir * a * range;
                        }
                    }
                    self.state[q] = if entering_dir > 0.0 {
                        NonBasic::Upper
                    } else {
                        NonBasic::Lower
                    };
                    self.x[q] = self.nonbasic_value(q);
                    degenerate_run = 0;
                    bland = false;
                }
                None => {
                    if !phase1 {
                        return Outcome::Unbounded;
                    }
                    // Phase one cannot be unbounded; treat as numerical trouble.
                    stalled_phase1 += 1;
                    if stalled_phase1 > 3 {
                        return Outcome::Limit;
                    }
                    self.refactor();
                }
                Some((r, t, hits_upper)) => {
                    let t = t.max(0.0);
                    if t > 0.0 {
                        for i in 0..m {
                            let a = self.alpha[i];
                            if a != 0.0 {
                                self.x[self.head[i]] -= entering_dir * a * t;
                            }
                        }
                    }
                    let leaving = self.head[r];
                    self.x[q] += entering_dir * t;
                    self.state[leaving] = if hits_upper {
                        NonBasic::Upper
                    } else {
                        NonBasic::Lower
                    };
                    self.normalize_state(leaving);
                    self.x[leaving] = self.nonbasic_value(leaving);
                    self.pos[leaving] = NOT_BASIC;
                    self.pos[q] = r;
                    self.head[r] = q;
                    self.inv.push(r, &self.alpha);

                    if t * self.alpha[r].abs() < 1e-12 {
                        degenerate_run += 1;
                        if degenerate_run >= self.opts.bland_after {
                            bland = true;
                        }
                    } else {
                        degenerate_run = 0;
                        bland = false;
                    }
                    stalled_phase1 = 0;
                }
            }
        }
    }
}
