//! Embedded linear and mixed-binary programming.
//!
//! [`solve_lp`] runs a bounded primal revised simplex over a product-form
//! basis inverse; [`solve_milp`] wraps it in best-first branch and bound for
//! problems whose integer variables are all binary.

mod factor;
mod lp_format;
mod milp;
mod simplex;

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use lp_format::write_lp_format;
pub use milp::{solve_milp, MilpLimits, MilpSolution, MilpStatus};
pub use simplex::SimplexOptions;

#[derive(Debug, Error)]
pub enum SolverError {
    #[error("constraint {row} references variable {var} but only {num_vars} are declared")]
    UnknownVariable {
        row: usize,
        var: usize,
        num_vars: usize,
    },
    #[error("non-finite coefficient in {0}")]
    NonFinite(String),
    #[error("variable {var} has inverted bounds [{lower}, {upper}]")]
    InvertedBounds { var: usize, lower: f64, upper: f64 },
    #[error("binary variable {0} has bounds outside [0, 1]")]
    BinaryBounds(usize),
    #[error("expected {expected} values, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Relation {
    Le,
    Eq,
    Ge,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Constraint {
    pub coeffs: Vec<(usize, f64)>,
    pub relation: Relation,
    pub rhs: f64,
}

/// Minimisation over bounded variables subject to sparse linear rows.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct LpProblem {
    cost: Vec<f64>,
    lower: Vec<f64>,
    upper: Vec<f64>,
    constraints: Vec<Constraint>,
}

impl LpProblem {
    pub fn new() -> Self {
        Self::default()
    }

    /// Declare a variable with bounds `[lower, upper]` (either may be
    /// infinite) and objective coefficient `cost`. Returns its index.
    pub fn add_var(&mut self, lower: f64, upper: f64, cost: f64) -> usize {
        self.cost.push(cost);
        self.lower.push(lower);
        self.upper.push(upper);
        self.cost.len() - 1
    }

    pub fn add_constraint(&mut self, coeffs: Vec<(usize, f64)>, relation: Relation, rhs: f64) -> usize {
        self.constraints.push(Constraint {
            coeffs,
            relation,
            rhs,
        });
        self.constraints.len() - 1
    }

    pub fn set_cost(&mut self, var: usize, cost: f64) {
        self.cost[var] = cost;
    }

    pub fn set_bounds(&mut self, var: usize, lower: f64, upper: f64) {
        self.lower[var] = lower;
        self.upper[var] = upper;
    }

    pub fn num_vars(&self) -> usize {
        self.cost.len()
    }

    pub fn num_constraints(&self) -> usize {
        self.constraints.len()
    }

    pub fn cost(&self) -> &[f64] {
        &self.cost
    }

    pub fn lower(&self) -> &[f64] {
        &self.lower
    }

    pub fn upper(&self) -> &[f64] {
        &self.upper
    }

    pub fn constraints(&self) -> &[Constraint] {
        &self.constraints
    }

    pub fn objective_value(&self, x: &[f64]) -> f64 {
        self.cost.iter().zip(x).map(|(c, v)| c * v).sum()
    }

    /// Largest absolute violation of any row or bound at `x`.
    pub fn max_violation(&self, x: &[f64]) -> f64 {
        let mut worst = 0.0f64;
        for (j, &v) in x.iter().enumerate() {
            worst = worst.max(self.lower[j] - v).max(v - self.upper[j]);
        }
        for c in &self.constraints {
            let act: f64 = c.coeffs.iter().map(|&(j, a)| a * x[j]).sum();
            let viol = match c.relation {
                Relation::Le => act - c.rhs,
                Relation::Ge => c.rhs - act,
                Relation::Eq => (act - c.rhs).abs(),
            };
            worst = worst.max(viol);
        }
        worst
    }

    pub fn validate(&self) -> Result<(), SolverError> {
        let n = self.num_vars();
        if self.cost.iter().any(|c| !c.is_finite()) {
            return Err(SolverError::NonFinite("objective".into()));
        }
        for j in 0..n {
            let (lo, hi) = (self.lower[j], self.upper[j]);
            if lo.is_nan() || hi.is_nan() || lo == f64::INFINITY || hi == f64::NEG_INFINITY {
                return Err(SolverError::NonFinite(format!("bounds of variable {j}")));
            }
            if lo > hi {
                return Err(SolverError::InvertedBounds {
                    var: j,
                    lower: lo,
                    upper: hi,
                });
            }
        }
        for (row, c) in self.constraints.iter().enumerate() {
            if !c.rhs.is_finite() {
                return Err(SolverError::NonFinite(format!("rhs of constraint {row}")));
            }
            for &(var, a) in &c.coeffs {
                if var >= n {
                    return Err(SolverError::UnknownVariable {
                        row,
                        var,
                        num_vars: n,
                    });
                }
                if !a.is_finite() {
                    return Err(SolverError::NonFinite(format!("constraint {row}")));
                }
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum LpStatus {
    Optimal,
    Infeasible,
    Unbounded,
    IterationLimit,
}

#[derive(Debug, Clone)]
pub struct LpSolution {
    pub status: LpStatus,
    pub values: Vec<f64>,
    pub objective: f64,
    pub iterations: usize,
    pub(crate) basis: Option<simplex::Basis>,
}

/// Solve an LP with default tolerances.
pub fn solve_lp(p: &LpProblem) -> Result<LpSolution, SolverError> {
    solve_lp_with(p, &SimplexOptions::default())
}

pub fn solve_lp_with(p: &LpProblem, opts: &SimplexOptions) -> Result<LpSolution, SolverError> {
    p.validate()?;
    Ok(simplex::solve(p, &p.lower, &p.upper, None, opts))
}

/// An LP in which some variables are restricted to {0, 1}.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct MilpProblem {
    pub lp: LpProblem,
    pub binaries: BTreeSet<usize>,
}

impl MilpProblem {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add_binary(&mut self, cost: f64) -> usize {
        let j = self.lp.add_var(0.0, 1.0, cost);
        self.binaries.insert(j);
        j
    }

    pub fn validate(&self) -> Result<(), SolverError> {
        self.lp.validate()?;
        for &j in &self.binaries {
            if j >= self.lp.num_vars() {
                return Err(SolverError::UnknownVariable {
                    row: usize::MAX,
                    var: j,
                    num_vars: self.lp.num_vars(),
                });
            }
            if self.lp.lower[j] < 0.0 || self.lp.upper[j] > 1.0 {
                return Err(SolverError::BinaryBounds(j));
            }
        }
        Ok(())
    }
}

impl From<LpProblem> for MilpProblem {
    fn from(lp: LpProblem) -> Self {
        Self {
            lp,
            binaries: BTreeSet::new(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn single_variable() {
        let mut p = LpProblem::new();
        let x = p.add_var(0.0, f64::INFINITY, -1.0);
        p.add_constraint(vec![(x, 1.0)], Relation::Le, 5.0);
        let s = solve_lp(&p).unwrap();
        assert_eq!(s.status, LpStatus::Optimal);
        assert!((s.values[x] - 5.0).abs() < 1e-9);
        assert!((s.objective + 5.0).abs() < 1e-9);
    }

    #[test]
    fn square_polytope() {
        let mut p = LpProblem::new();
        let x = p.add_var(0.0, f64::INFINITY, -1.0);
        let y = p.add_var(0.0, f64::INFINITY, -1.0);
        p.add_constraint(vec![(x, 1.0), (y, 1.0)], Relation::Le, 3.0);
        p.add_constraint(vec![(x, 1.0)], Relation::Le, 2.0);
        p.add_constraint(vec![(y, 1.0)], Relation::Le, 2.0);
        let s = solve_lp(&p).unwrap();
        assert_eq!(s.status, LpStatus::Optimal);
        assert!((s.objective + 3.0).abs() < 1e-9);
        assert!((s.values[x] + s.values[y] - 3.0).abs() < 1e-9);
    }

    #[test]
    fn contradictory_bounds() {
        let mut p = LpProblem::new();
        let x = p.add_var(f64::NEG_INFINITY, f64::INFINITY, 1.0);
        p.add_constraint(vec![(x, 1.0)], Relation::Ge, 2.0);
        p.add_constraint(vec![(x, 1.0)], Relation::Le, 1.0);
        assert_eq!(solve_lp(&p).unwrap().status, LpStatus::Infeasible);
    }

    #[test]
    fn unbounded_ray() {
        let mut p = LpProblem::new();
        let x = p.add_var(0.0, f64::INFINITY, -1.0);
        let y = p.add_var(0.0, f64::INFINITY, 0.0);
        p.add_constraint(vec![(x, 1.0), (y, -1.0)], Relation::Le, 1.0);
        assert_eq!(solve_lp(&p).unwrap().status, LpStatus::Unbounded);
    }

    #[test]
    fn equality_and_free_variables() {
        // min x + 2y, x + y = 4, x - y >= -2, x free, y in [0, 10]
        let mut p = LpProblem::new();
        let x = p.add_var(f64::NEG_INFINITY, f64::INFINITY, 1.0);
        let y = p.add_var(0.0, 10.0, 2.0);
        p.add_constraint(vec![(x, 1.0), (y, 1.0)], Relation::Eq, 4.0);
        p.add_constraint(vec![(x, 1.0), (y, -1.0)], Relation::Ge, -2.0);
        let s = solve_lp(&p).unwrap();
        assert_eq!(s.status, LpStatus::Optimal);
        assert!((s.values[x] - 4.0).abs() < 1e-9);
        assert!(s.values[y].abs() < 1e-9);
    }

    #[test]
    fn rejects_unknown_variable() {
        let mut p = LpProblem::new();
        p.add_var(0.0, 1.0, 0.0);
        p.add_constraint(vec![(3, 1.0)], Relation::Le, 1.0);
        assert!(matches!(
            solve_lp(&p),
            Err(SolverError::UnknownVariable { var: 3, .. })
        ));
    }

    #[test]
    fn rejects_inverted_bounds() {
        let mut p = LpProblem::new();
        p.add_var(2.0, 1.0, 0.0);
        assert!(matches!(solve_lp(&p), Err(SolverError::InvertedBounds { .. })));
    }

    #[test]
    fn binary_bounds_checked() {
        let mut p = MilpProblem::new();
        let b = p.add_binary(1.0);
        p.lp.set_bounds(b, 0.0, 2.0);
        assert!(matches!(p.validate(), Err(SolverError::BinaryBounds(_))));
    }
}
