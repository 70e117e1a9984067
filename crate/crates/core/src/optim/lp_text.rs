//! Human-readable LP-format dump for checking problems by hand against an
//! external solver.

use std::fmt::Write;

use super::{MilpProblem, Relation};
use crate::scalar::Scalar;

fn term<T: Scalar>(out: &mut String, first: &mut bool, coeff: T, var: usize) {
    if coeff == T::zero() {
        return;
    }
    let sign = if coeff < T::zero() { "-" } else { "+" };
    if *first && sign == "+" {
        let _ = write!(out, " {} x{var}", coeff.abs());
    } else {
        let _ = write!(out, " {sign} {} x{var}", coeff.abs());
    }
    *first = false;
}

pub fn to_lp_text<T: Scalar>(p: &MilpProblem<T>) -> String {
    let lp = &p.base;
    let mut out = String::from("Minimize\n obj:");
    let mut first = true;
    for (j, &c) in lp.objective.iter().enumerate() {
        term(&mut out, &mut first, c, j);
    }
    if first {
        out.push_str(" 0");
    }
    out.push_str("\nSubject To\n");
    for (i, c) in lp.constraints.iter().enumerate() {
        let _ = write!(out, " c{i}:");
        let mut first = true;
        for (j, &a) in c.coeffs.iter().enumerate() {
            term(&mut out, &mut first, a, j);
        }
        if first {
            out.push_str(" 0");
        }
        let rel = match c.relation {
            Relation::Le => "<=",
            Relation::Eq => "=",
            Relation::Ge => ">=",
        };
        let _ = writeln!(out, " {rel} {}", c.rhs);
    }
    out.push_str("Bounds\n");
    for (j, &(lo, hi)) in lp.bounds.iter().enumerate() {
        let _ = writeln!(out, " {lo} <= x{j} <= {hi}");
    }
    if !p.binary_vars.is_empty() {
        out.push_str("Binaries\n");
        for j in &p.binary_vars {
            let _ = write!(out, " x{j}");
        }
        out.push('\n');
    }
    out.push_str("End\n");
    out
}
