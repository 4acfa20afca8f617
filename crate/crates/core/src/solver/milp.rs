//! Best-first branch and bound over binary variables.

use std::cmp::Ordering;
use std::collections::BinaryHeap;
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};

use super::simplex::{self, Basis, SimplexOptions};
use super::{LpProblem, LpStatus, MilpProblem, Relation, SolverError};

const INT_TOL: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MilpLimits {
    pub node_cap: usize,
    pub time_cap: Option<Duration>,
    pub rel_gap: f64,
}

impl Default for MilpLimits {
    fn default() -> Self {
        Self {
            node_cap: 50_000,
            time_cap: None,
            rel_gap: 1e-6,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum MilpStatus {
    Optimal,
    Infeasible,
    Unbounded,
    LimitReached,
}

#[derive(Debug, Clone)]
pub struct MilpSolution {
    pub status: MilpStatus,
    pub values: Vec<f64>,
    pub objective: f64,
    /// (incumbent - best bound) / max(|incumbent|, 1); infinite without an incumbent.
    pub gap: f64,
    /// Branch-and-bound nodes solved beyond the root relaxation.
    pub nodes_explored: usize,
    pub lp_iterations: usize,
}

struct Node {
    bound: f64,
    depth: usize,
    id: usize,
    fixings: Vec<(usize, f64)>,
    values: Vec<f64>,
    basis: Option<Basis>,
}

impl PartialEq for Node {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}

impl Eq for Node {}

impl PartialOrd for Node {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Node {
    // BinaryHeap pops the greatest: lowest bound, then deepest, then oldest.
    fn cmp(&self, other: &Self) -> Ordering {
        other
            .bound
            .total_cmp(&self.bound)
            .then(self.depth.cmp(&other.depth))
            .then(other.id.cmp(&self.id))
    }
}

struct Search<'a> {
    lp: &'a LpProblem,
    binaries: Vec<usize>,
    base_lower: Vec<f64>,
    base_upper: Vec<f64>,
    /// Rows touched by each binary, indexed like `binaries`.
    binary_rows: Vec<Vec<(usize, f64)>>,
    opts: SimplexOptions,
    lp_iterations: usize,
}

fn gap_scale(obj: f64) -> f64 {
    obj.abs().max(1.0)
}

pub fn solve_milp(p: &MilpProblem, limits: &MilpLimits) -> Result<MilpSolution, SolverError> {
    p.validate()?;
    let started = Instant::now();
    let lp = &p.lp;
    let binaries: Vec<usize> = p.binaries.iter().copied().collect();
    let mut base_lower = lp.lower().to_vec();
    let mut base_upper = lp.upper().to_vec();
    for &j in &binaries {
        base_lower[j] = if base_lower[j] > INT_TOL { 1.0 } else { 0.0 };
        base_upper[j] = if base_upper[j] < 1.0 - INT_TOL { 0.0 } else { 1.0 };
    }
    let mut slot = vec![usize::MAX; lp.num_vars()];
    for (k, &j) in binaries.iter().enumerate() {
        slot[j] = k;
    }
    let mut binary_rows = vec![Vec::new(); binaries.len()];
    for (r, c) in lp.constraints().iter().enumerate() {
        for &(j, a) in &c.coeffs {
            if slot[j] != usize::MAX {
                binary_rows[slot[j]].push((r, a));
            }
        }
    }
    let mut search = Search {
        lp,
        binaries,
        base_lower,
        base_upper,
        binary_rows,
        opts: SimplexOptions::default(),
        lp_iterations: 0,
    };
    let infeasible = |nodes, iters| MilpSolution {
        status: MilpStatus::Infeasible,
        values: Vec::new(),
        objective: f64::INFINITY,
        gap: f64::INFINITY,
        nodes_explored: nodes,
        lp_iterations: iters,
    };
    if search
        .binaries
        .iter()
        .any(|&j| search.base_lower[j] > search.base_upper[j])
    {
        return Ok(infeasible(0, 0));
    }

    let root = search.solve_node(&[], None);
    match root.status {
        LpStatus::Optimal => {}
        LpStatus::Infeasible => return Ok(infeasible(0, search.lp_iterations)),
        LpStatus::Unbounded => {
            return Ok(MilpSolution {
                status: MilpStatus::Unbounded,
                values: root.values,
                objective: f64::NEG_INFINITY,
                gap: f64::INFINITY,
                nodes_explored: 0,
                lp_iterations: search.lp_iterations,
            })
        }
        LpStatus::IterationLimit => {
            return Ok(MilpSolution {
                status: MilpStatus::LimitReached,
                values: Vec::new(),
                objective: f64::INFINITY,
                gap: f64::INFINITY,
                nodes_explored: 0,
                lp_iterations: search.lp_iterations,
            })
        }
    }

    let mut incumbent: Option<(Vec<f64>, f64)> = None;
    let mut pruned_bound = f64::INFINITY;
    let mut heap = BinaryHeap::new();
    let mut next_id = 1usize;
    let mut nodes_explored = 0usize;
    let mut incomplete = false;
    let mut limit_hit = false;

    search.consider(
        Node {
            bound: root.objective,
            depth: 0,
            id: 0,
            fixings: Vec::new(),
            values: root.values,
            basis: root.basis,
        },
        &mut incumbent,
        &mut heap,
    );

    while let Some(node) = heap.pop() {
        if let Some((_, inc)) = &incumbent {
            if inc - node.bound <= limits.rel_gap * gap_scale(*inc) {
                pruned_bound = pruned_bound.min(node.bound);
                continue;
            }
        }
        let out_of_time = limits.time_cap.is_some_and(|cap| started.elapsed() >= cap);
        if nodes_explored >= limits.node_cap || out_of_time {
            heap.push(node);
            limit_hit = true;
            break;
        }
        let Some(j) = search.branching_variable(&node.values) else {
            continue;
        };
        for value in [0.0, 1.0] {
            let mut fixings = node.fixings.clone();
            fixings.push((j, value));
            let sol = search.solve_node(&fixings, node.basis.as_ref());
            nodes_explored += 1;
            match sol.status {
                LpStatus::Optimal => {
                    let child = Node {
                        bound: sol.objective,
                        depth: node.depth + 1,
                        id: next_id,
                        fixings,
                        values: sol.values,
                        basis: sol.basis,
                    };
                    next_id += 1;
                    if let Some((_, inc)) = &incumbent {
                        if inc - child.bound <= limits.rel_gap * gap_scale(*inc) {
                            pruned_bound = pruned_bound.min(child.bound);
                            continue;
                        }
                    }
                    search.consider(child, &mut incumbent, &mut heap);
                }
                LpStatus::Infeasible => {}
                LpStatus::Unbounded | LpStatus::IterationLimit => incomplete = true,
            }
        }
    }

    let open_bound = heap
        .iter()
        .map(|n| n.bound)
        .fold(pruned_bound, f64::min);
    let Some((values, _)) = incumbent else {
        if limit_hit || incomplete {
            return Ok(MilpSolution {
                status: MilpStatus::LimitReached,
                values: Vec::new(),
                objective: f64::INFINITY,
                gap: f64::INFINITY,
                nodes_explored,
                lp_iterations: search.lp_iterations,
            });
        }
        return Ok(infeasible(nodes_explored, search.lp_iterations));
    };
    let values = search.polish(values);
    let objective = lp.objective_value(&values);
    let gap = if open_bound.is_finite() {
        ((objective - open_bound) / gap_scale(objective)).max(0.0)
    } else {
        0.0
    };
    let status = if limit_hit || incomplete {
        if gap <= limits.rel_gap {
            MilpStatus::Optimal
        } else {
            MilpStatus::LimitReached
        }
    } else {
        MilpStatus::Optimal
    };
    Ok(MilpSolution {
        status,
        values,
        objective,
        gap,
        nodes_explored,
        lp_iterations: search.lp_iterations,
    })
}

impl Search<'_> {
    fn bounds_with(&self, fixings: &[(usize, f64)]) -> (Vec<f64>, Vec<f64>) {
        let mut lo = self.base_lower.clone();
        let mut hi = self.base_upper.clone();
        for &(j, v) in fixings {
            lo[j] = v;
            hi[j] = v;
        }
        (lo, hi)
    }

    fn solve_node(&mut self, fixings: &[(usize, f64)], warm: Option<&Basis>) -> super::LpSolution {
        let (lo, hi) = self.bounds_with(fixings);
        let sol = simplex::solve(self.lp, &lo, &hi, warm, &self.opts);
        self.lp_iterations += sol.iterations;
        sol
    }

    /// Most fractional binary, lowest index on ties.
    fn branching_variable(&self, x: &[f64]) -> Option<usize> {
        let mut best = None;
        let mut best_frac = INT_TOL;
        for &j in &self.binaries {
            let f = x[j] - x[j].floor();
            let dist = f.min(1.0 - f);
            if dist > best_frac {
                best_frac = dist;
                best = Some(j);
            }
        }
        best
    }

    /// Record an integral node as incumbent, otherwise try rounding and queue it.
    fn consider(
        &self,
        node: Node,
        incumbent: &mut Option<(Vec<f64>, f64)>,
        heap: &mut BinaryHeap<Node>,
    ) {
        let mut offer = |x: Vec<f64>| {
            let obj = self.lp.objective_value(&x);
            if incumbent.as_ref().is_none_or(|(_, best)| obj < *best) {
                *incumbent = Some((x, obj));
            }
        };
        if self.branching_variable(&node.values).is_none() {
            offer(node.values);
            return;
        }
        if let Some(x) = self.simple_rounding(&node) {
            offer(x);
        }
        heap.push(node);
    }

    /// Move each fractional binary to 0 or 1 while every row it touches stays
    /// satisfied, leaving continuous values untouched.
    fn simple_rounding(&self, node: &Node) -> Option<Vec<f64>> {
        const ROW_TOL: f64 = 1e-6;
        let (lo, hi) = self.bounds_with(&node.fixings);
        let mut x = node.values.clone();
        let mut activity: Vec<f64> = self
            .lp
            .constraints()
            .iter()
            .map(|c| c.coeffs.iter().map(|&(j, a)| a * x[j]).sum())
            .collect();
        for (k, &j) in self.binaries.iter().enumerate() {
            let v = x[j];
            let nearest = v.round().clamp(0.0, 1.0);
            let mut placed = false;
            for cand in [nearest, 1.0 - nearest] {
                if cand < lo[j] || cand > hi[j] {
                    continue;
                }
                let shift = cand - v;
                let ok = self.binary_rows[k].iter().all(|&(r, a)| {
                    let c = &self.lp.constraints()[r];
                    let act = activity[r] + a * shift;
                    match c.relation {
                        Relation::Le => act <= c.rhs + ROW_TOL,
                        Relation::Ge => act >= c.rhs - ROW_TOL,
                        Relation::Eq => (act - c.rhs).abs() <= ROW_TOL,
                    }
                });
                if ok {
                    for &(r, a) in &self.binary_rows[k] {
                        activity[r] += a * shift;
                    }
                    x[j] = cand;
                    placed = true;
                    break;
                }
            }
            if !placed {
                return None;
            }
        }
        Some(x)
    }

    /// Re-solve the continuous part with binaries fixed at their exact values.
    fn polish(&mut self, x: Vec<f64>) -> Vec<f64> {
        let fixings: Vec<(usize, f64)> = self
            .binaries
            .iter()
            .map(|&j| (j, x[j].round()))
            .collect();
        let sol = self.solve_node(&fixings, None);
        if sol.status == LpStatus::Optimal
            && sol.objective <= self.lp.objective_value(&x) + 1e-9 * gap_scale(sol.objective)
        {
            sol.values
        } else {
            let mut x = x;
            for &j in &self.binaries {
                x[j] = x[j].round();
            }
            x
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn knapsack() {
        // max 5a + 4b + 3c, 2a + 3b + c <= 4
        let mut p = MilpProblem::new();
        let a = p.add_binary(-5.0);
        let b = p.add_binary(-4.0);
        let c = p.add_binary(-3.0);
        p.lp
            .add_constraint(vec![(a, 2.0), (b, 3.0), (c, 1.0)], Relation::Le, 4.0);
        let s = solve_milp(&p, &MilpLimits::default()).unwrap();
        assert_eq!(s.status, MilpStatus::Optimal);
        assert!((s.objective + 8.0).abs() < 1e-9);
        assert_eq!(
            [s.values[a], s.values[b], s.values[c]].map(f64::round),
            [1.0, 0.0, 1.0]
        );
    }

    #[test]
    fn integral_relaxation_needs_no_branching() {
        let mut p = MilpProblem::new();
        let a = p.add_binary(-1.0);
        let x = p.lp.add_var(0.0, 10.0, -1.0);
        p.lp.add_constraint(vec![(x, 1.0), (a, 1.0)], Relation::Le, 3.0);
        let s = solve_milp(&p, &MilpLimits::default()).unwrap();
        assert_eq!(s.status, MilpStatus::Optimal);
        assert_eq!(s.nodes_explored, 0);
        assert!((s.objective + 3.0).abs() < 1e-9);
    }

    #[test]
    fn infeasible_binaries() {
        let mut p = MilpProblem::new();
        let a = p.add_binary(0.0);
        let b = p.add_binary(0.0);
        p.lp.add_constraint(vec![(a, 1.0), (b, 1.0)], Relation::Eq, 1.5);
        let s = solve_milp(&p, &MilpLimits::default()).unwrap();
        assert_eq!(s.status, MilpStatus::Infeasible);
    }

    #[test]
    fn node_cap_reports_limit() {
        // Parity-style constraint that forces branching.
        let mut p = MilpProblem::new();
        let vars: Vec<usize> = (0..8).map(|_| p.add_binary(-1.0)).collect();
        p.lp.add_constraint(
            vars.iter().map(|&v| (v, 2.0)).collect(),
            Relation::Le,
            7.0,
        );
        let limits = MilpLimits {
            node_cap: 1,
            ..Default::default()
        };
        let s = solve_milp(&p, &limits).unwrap();
        assert!(matches!(s.status, MilpStatus::LimitReached | MilpStatus::Optimal));
        if s.status == MilpStatus::LimitReached {
            assert!(s.gap > limits.rel_gap);
        }
        let full = solve_milp(&p, &MilpLimits::default()).unwrap();
        assert_eq!(full.status, MilpStatus::Optimal);
        assert!((full.objective + 3.0).abs() < 1e-9);
    }
}
