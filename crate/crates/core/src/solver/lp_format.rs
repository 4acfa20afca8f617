//! CPLEX LP text export for cross-checking with third-party solvers.

use std::fmt::Write as _;

use super::{MilpProblem, Relation};

fn term(out: &mut String, first: bool, coef: f64, var: usize) {
    let sign = if coef < 0.0 {
        " -"
    } else if first {
        ""
    } else {
        " +"
    };
    let _ = write!(out, "{sign} {} x{var}", coef.abs());
}

pub fn write_lp_format(p: &MilpProblem) -> String {
    let lp = &p.lp;
    let mut out = String::from("\\ lvtariff export\nMinimize\n obj:");
    let mut first = true;
    for (j, &c) in lp.cost().iter().enumerate() {
        if c != 0.0 {
            term(&mut out, first, c, j);
            first = false;
        }
    }
    if first {
        out.push_str(" 0 x0");
    }
    out.push_str("\nSubject To\n");
    for (i, c) in lp.constraints().iter().enumerate() {
        let _ = write!(out, " c{i}:");
        if c.coeffs.is_empty() {
            out.push_str(" 0 x0");
        }
        for (k, &(j, a)) in c.coeffs.iter().enumerate() {
            term(&mut out, k == 0, a, j);
        }
        let rel = match c.relation {
            Relation::Le => "<=",
            Relation::Ge => ">=",
            Relation::Eq => "=",
        };
        let _ = writeln!(out, " {rel} {}", c.rhs);
    }
    out.push_str("Bounds\n");
    for j in 0..lp.num_vars() {
        let (lo, hi) = (lp.lower()[j], lp.upper()[j]);
        match (lo.is_finite(), hi.is_finite()) {
            (false, false) => {
                let _ = writeln!(out, " x{j} free");
            }
            (true, true) if lo == hi => {
                let _ = writeln!(out, " x{j} = {lo}");
            }
            (true, true) => {
                let _ = writeln!(out, " {lo} <= x{j} <= {hi}");
            }
            (true, false) => {
                let _ = writeln!(out, " x{j} >= {lo}");
            }
            (false, true) => {
                let _ = writeln!(out, " -inf <= x{j} <= {hi}");
            }
        }
    }
    if !p.binaries.is_empty() {
        out.push_str("Binaries\n");
        for &j in &p.binaries {
            let _ = writeln!(out, " x{j}");
        }
    }
    out.push_str("End\n");
    out
}
