// SPDX-License-Identifier: Apache-2.0

//! DIMACS CNF files and solver-competition style solution output.

use std::fmt::Write as _;

use super::{CnfFormula, Lit, SatError, SolveResult};

fn err(line: usize, message: impl Into<String>) -> SatError {
    SatError::Dimacs {
        line,
        message: message.into(),
    }
}

pub fn write_dimacs(formula: &CnfFormula) -> String {
    let mut out = String::new();
    let _ = writeln!(
        out,
        "p cnf {} {}",
        formula.num_vars(),
        formula.clauses().len()
    );
    for c in formula.clauses() {
        for l in c {
            let _ = write!(out, "{} ", l.to_dimacs());
        }
        out.push_str("0\n");
    }
    out
}

pub fn parse_dimacs(text: &str) -> Result<CnfFormula, SatError> {
    let mut header: Option<(usize, usize)> = None;
    let mut clauses: Vec<Vec<Lit>> = Vec::new();
    let mut current: Vec<Lit> = Vec::new();
    for (idx, raw) in text.lines().enumerate() {
        let line = idx + 1;
        let t = raw.trim();
        if t.is_empty() || t.starts_with('c') || t.starts_with('%') {
            continue;
        }
        if t.starts_with('p') {
            let parts: Vec<&str> = t.split_whitespace().collect();
            if parts.len() != 4 || parts[1] != "cnf" {
                return Err(err(line, "expected `p cnf <vars> <clauses>`"));
            }
            let v = parts[2]
                .parse()
                .map_err(|_| err(line, "bad variable count"))?;
            let c = parts[3]
                .parse()
                .map_err(|_| err(line, "bad clause count"))?;
            header = Some((v, c));
            continue;
        }
        let (nv, _) = header.ok_or_else(|| err(line, "clause before header"))?;
        for tok in t.split_whitespace() {
            let x: i64 = tok
                .parse()
                .map_err(|_| err(line, format!("bad literal `{tok}`")))?;
            match Lit::from_dimacs(x) {
                None => {
                    if current.is_empty() {
                        return Err(err(line, "empty clause"));
                    }
                    clauses.push(std::mem::take(&mut current));
                }
                Some(l) => {
                    if l.var().index() >= nv {
                        return Err(err(line, format!("variable {} exceeds header", x.abs())));
                    }
                    current.push(l);
                }
            }
        }
    }
    let (nv, nc) = header.ok_or_else(|| err(0, "missing header"))?;
    if !current.is_empty() {
        clauses.push(current);
    }
    if clauses.len() != nc {
        return Err(err(
            0,
            format!("header declares {nc} clauses, found {}", clauses.len()),
        ));
    }
    Ok(CnfFormula::from_parts(nv, clauses))
}

/// Reads `s SATISFIABLE` / `s UNSATISFIABLE` and `v` lines. Variables not
/// mentioned default to false.
pub fn parse_dimacs_solution(text: &str, num_vars: usize) -> Result<SolveResult, SatError> {
    let mut status: Option<bool> = None;
    let mut model = vec![false; num_vars];
    for (idx, raw) in text.lines().enumerate() {
        let line = idx + 1;
        let t = raw.trim();
        if let Some(rest) = t.strip_prefix('s') {
            match rest.trim() {
                "SATISFIABLE" => status = Some(true),
                "UNSATISFIABLE" => status = Some(false),
                other => return Err(err(line, format!("unknown status `{other}`"))),
            }
        } else if let Some(rest) = t.strip_prefix('v') {
            for tok in rest.split_whitespace() {
                let x: i64 = tok
                    .parse()
                    .map_err(|_| err(line, format!("bad literal `{tok}`")))?;
                if let Some(l) = Lit::from_dimacs(x) {
                    if l.var().index() < num_vars {
                        model[l.var().index()] = !l.is_negative();
                    }
                }
            }
        }
    }
    match status {
        Some(true) => Ok(SolveResult::Sat(model)),
        Some(false) => Ok(SolveResult::Unsat),
        None => Err(err(0, "no status line")),
    }
}

/// Solution text in the format [`parse_dimacs_solution`] reads.
pub fn format_dimacs_solution(result: &SolveResult) -> String {
    match result {
        SolveResult::Unsat => "s UNSATISFIABLE\n".to_string(),
        SolveResult::Sat(m) => {
            let mut out = String::from("s SATISFIABLE\nv");
            for (i, &b) in m.iter().enumerate() {
                let x = i as i64 + 1;
                let _ = write!(out, " {}", if b { x } else { -x });
            }
            out.push_str(" 0\n");
            out
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sat::ClauseSink;

    #[test]
    fn round_trip() {
        let mut f = CnfFormula::new();
        let a = f.new_var();
        let b = f.new_var();
        f.add_clause(&[a.pos(), b.neg()]);
        f.add_clause(&[b.pos()]);
        let text = write_dimacs(&f);
        assert!(text.starts_with("p cnf 2 2\n"));
        assert_eq!(parse_dimacs(&text).unwrap(), f);
    }

    #[test]
    fn rejects_bad_input() {
        assert!(parse_dimacs("1 2 0\n").is_err());
        assert!(parse_dimacs("p cnf 1 1\n2 0\n").is_err());
        assert!(parse_dimacs("p cnf 1 2\n1 0\n").is_err());
        assert!(parse_dimacs("p cnf 1 1\n0\n").is_err());
    }

    #[test]
    fn solution_round_trip() {
        let r = SolveResult::Sat(vec![true, false, true]);
        assert_eq!(
            parse_dimacs_solution(&format_dimacs_solution(&r), 3).unwrap(),
            r
        );
        let u = SolveResult::Unsat;
        assert_eq!(
            parse_dimacs_solution(&format_dimacs_solution(&u), 3).unwrap(),
            u
        );
    }
}
