use lvtariff::solver::{
    solve_lp, solve_milp, LpProblem, LpStatus, MilpLimits, MilpProblem, MilpStatus, Relation,
};
use proptest::prelude::*;

/// Optimum of min c·x over a bounded 2-D polygon by enumerating all
/// pairwise intersections of its boundary lines.
fn vertex_oracle(c: [f64; 2], rows: &[([f64; 2], f64)], bound: f64) -> Option<f64> {
    let mut lines: Vec<([f64; 2], f64)> = rows.to_vec();
    lines.push(([1.0, 0.0], bound));
    lines.push(([-1.0, 0.0], bound));
    lines.push(([0.0, 1.0], bound));
    lines.push(([0.0, -1.0], bound));
    let feasible = |x: [f64; 2]| {
        lines
            .iter()
            .all(|(a, b)| a[0] * x[0] + a[1] * x[1] <= b + 1e-7)
    };
    let mut best: Option<f64> = None;
    for i in 0..lines.len() {
        for j in i + 1..lines.len() {
            let (a, b) = (lines[i], lines[j]);
            let det = a.0[0] * b.0[1] - a.0[1] * b.0[0];
            if det.abs() < 1e-9 {
                continue;
            }
            let x = [
                (a.1 * b.0[1] - a.0[1] * b.1) / det,
                (a.0[0] * b.1 - a.1 * b.0[0]) / det,
            ];
            if feasible(x) {
                let v = c[0] * x[0] + c[1] * x[1];
                best = Some(best.map_or(v, |b: f64| b.min(v)));
            }
        }
    }
    best
}

fn row_strategy() -> impl Strategy<Value = ([f64; 2], f64)> {
    (-5i32..=5, -5i32..=5, -10i32..=10).prop_map(|(a, b, r)| ([a as f64, b as f64], r as f64))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(300))]

    #[test]
    fn lp_matches_vertex_enumeration(
        c in (-5i32..=5, -5i32..=5),
        rows in prop::collection::vec(row_strategy(), 0..6),
    ) {
        let bound = 20.0;
        let c = [c.0 as f64, c.1 as f64];
        let mut p = LpProblem::new();
        let x = p.add_var(-bound, bound, c[0]);
        let y = p.add_var(-bound, bound, c[1]);
        for (a, r) in &rows {
            p.add_constraint(vec![(x, a[0]), (y, a[1])], Relation::Le, *r);
        }
        let s = solve_lp(&p).unwrap();
        match vertex_oracle(c, &rows, bound) {
            None => prop_assert_eq!(s.status, LpStatus::Infeasible),
            Some(v) => {
                prop_assert_eq!(s.status, LpStatus::Optimal);
                prop_assert!((s.objective - v).abs() < 1e-6, "{} vs {}", s.objective, v);
                prop_assert!(p.max_violation(&s.values) < 1e-7);
            }
        }
    }

    #[test]
    fn milp_matches_enumeration(
        costs in prop::collection::vec(-10i32..=10, 1..9),
        rows in prop::collection::vec(
            (prop::collection::vec(-4i32..=6, 8), 0i32..=12, 0u8..3),
            1..4,
        ),
        cont_cost in -3i32..=3,
    ) {
        // Binaries plus one bounded continuous variable coupled to every row.
        let n = costs.len();
        let mut p = MilpProblem::new();
        let vars: Vec<usize> = costs.iter().map(|&c| p.add_binary(c as f64)).collect();
        let z = p.lp.add_var(0.0, 2.5, cont_cost as f64);
        let mut dense = Vec::new();
        for (coef, rhs, rel) in &rows {
            let rel = [Relation::Le, Relation::Ge, Relation::Le][*rel as usize];
            let mut terms: Vec<(usize, f64)> =
                vars.iter().zip(coef).map(|(&v, &a)| (v, a as f64)).collect();
            terms.push((z, 1.0));
            let rhs = if rel == Relation::Ge { *rhs as f64 / 4.0 } else { *rhs as f64 };
            p.lp.add_constraint(terms, rel, rhs);
            dense.push((coef[..n].to_vec(), rhs, rel));
        }
        // Oracle: for each binary assignment the best z is an endpoint of an interval.
        let mut best: Option<f64> = None;
        for mask in 0u32..(1 << n) {
            let bits: Vec<f64> = (0..n).map(|i| ((mask >> i) & 1) as f64).collect();
            let (mut lo, mut hi) = (0.0f64, 2.5f64);
            for (coef, rhs, rel) in &dense {
                let act: f64 = coef.iter().zip(&bits).map(|(&a, b)| a as f64 * b).sum();
                match rel {
                    Relation::Le => hi = hi.min(rhs - act),
                    Relation::Ge => lo = lo.max(rhs - act),
                    Relation::Eq => unreachable!(),
                }
            }
            if lo > hi + 1e-12 {
                continue;
            }
            let zc = cont_cost as f64;
            let zv = if zc >= 0.0 { lo } else { hi };
            let v: f64 = costs.iter().zip(&bits).map(|(&c, b)| c as f64 * b).sum::<f64>() + zc * zv;
            best = Some(best.map_or(v, |b: f64| b.min(v)));
        }
        let s = solve_milp(&p, &MilpLimits::default()).unwrap();
        match best {
            None => prop_assert_eq!(s.status, MilpStatus::Infeasible),
            Some(v) => {
                prop_assert_eq!(s.status, MilpStatus::Optimal);
                prop_assert!((s.objective - v).abs() < 1e-6, "{} vs {}", s.objective, v);
                prop_assert!(p.lp.max_violation(&s.values) < 1e-7);
                for &b in &vars {
                    prop_assert!(s.values[b] == 0.0 || s.values[b] == 1.0);
                }
            }
        }
    }
}

#[test]
fn transportation_problem() {
    // Two supplies (20, 30), three demands (10, 25, 15), balanced.
    let cost = [[8.0, 6.0, 10.0], [9.0, 12.0, 13.0]];
    let supply = [20.0, 30.0];
    let demand = [10.0, 25.0, 15.0];
    let mut p = LpProblem::new();
    let mut x = [[0usize; 3]; 2];
    for i in 0..2 {
        for j in 0..3 {
            x[i][j] = p.add_var(0.0, f64::INFINITY, cost[i][j]);
        }
    }
    for i in 0..2 {
        p.add_constraint((0..3).map(|j| (x[i][j], 1.0)).collect(), Relation::Eq, supply[i]);
    }
    for j in 0..3 {
        p.add_constraint((0..2).map(|i| (x[i][j], 1.0)).collect(), Relation::Eq, demand[j]);
    }
    let s = solve_lp(&p).unwrap();
    assert_eq!(s.status, LpStatus::Optimal);
    // Enumerate the single free parameter pair on a fine grid of basic solutions:
    // the optimum ships supply 0 to demand 1 (cheapest), remainder by cost order.
    let mut best = f64::INFINITY;
    for a in 0..=10 {
        for b in 0..=20 - a {
            let c = 20 - a - b;
            if c > 15 {
                continue;
            }
            let row1 = [10 - a, 25 - b, 15 - c];
            if row1.iter().any(|&v| v < 0) {
                continue;
            }
            let v = 8.0 * a as f64
                + 6.0 * b as f64
                + 10.0 * c as f64
                + 9.0 * row1[0] as f64
                + 12.0 * row1[1] as f64
                + 13.0 * row1[2] as f64;
            best = best.min(v);
        }
    }
    assert!((s.objective - best).abs() < 1e-9, "{} vs {best}", s.objective);
}
