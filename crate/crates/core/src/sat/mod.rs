// SPDX-License-Identifier: Apache-2.0

//! CNF representation, Tseitin encoding, DIMACS I/O, a CDCL solver and the
//! oracle-guided key-recovery attack.

mod attack;
mod dimacs;
mod encode;
mod solver;

use std::collections::HashMap;
use std::ops::Not;

use thiserror::Error;

use crate::netlist::{Circuit, NetId};

pub use attack::{
    sat_attack, verify_key, AttackBudget, AttackModel, AttackReport, AttackResult, AttackStatus,
    CircuitOracle, DipRecord, KeyVerification, Oracle, SolverBackend,
};
pub use dimacs::{format_dimacs_solution, parse_dimacs, parse_dimacs_solution, write_dimacs};
pub use encode::{encode_gate, Signal};
pub use solver::{Solver, SolverStats};

#[derive(Debug, Error)]
pub enum SatError {
    #[error("solver resource limit exceeded")]
    ResourceLimit,
    #[error("circuit has {0} flip-flops; frame it first")]
    NotCombinational(usize),
    #[error("DIMACS line {line}: {message}")]
    Dimacs { line: usize, message: String },
    #[error("external solver: {0}")]
    External(String),
    #[error("oracle width mismatch: expected {expected} {what}, got {got}")]
    OracleWidth {
        what: &'static str,
        expected: usize,
        got: usize,
    },
    #[error("oracle response contradicts every key at pattern {0}")]
    OracleInconsistent(usize),
    #[error(transparent)]
    Locking(#[from] crate::locking::LockingError),
    #[error(transparent)]
    Netlist(#[from] crate::netlist::NetlistError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Propositional variable, 0-based. DIMACS numbering is `index + 1`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Var(pub u32);

impl Var {
    pub fn index(self) -> usize {
        self.0 as usize
    }

    pub fn pos(self) -> Lit {
        Lit::new(self, false)
    }

    pub fn neg(self) -> Lit {
        Lit::new(self, true)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Lit(u32);

impl Lit {
    pub fn new(var: Var, negative: bool) -> Lit {
        Lit(var.0 * 2 + u32::from(negative))
    }

    pub fn var(self) -> Var {
        Var(self.0 >> 1)
    }

    pub fn is_negative(self) -> bool {
        self.0 & 1 == 1
    }

    pub(crate) fn code(self) -> usize {
        self.0 as usize
    }

    pub(crate) fn from_code(code: u32) -> Lit {
        Lit(code)
    }

    /// Positive or negative literal for `value`.
    pub fn with_value(var: Var, value: bool) -> Lit {
        Lit::new(var, !value)
    }

    pub fn to_dimacs(self) -> i64 {
        let v = i64::from(self.var().0) + 1;
        if self.is_negative() {
            -v
        } else {
            v
        }
    }

    /// `None` for 0.
    pub fn from_dimacs(x: i64) -> Option<Lit> {
        if x == 0 {
            return None;
        }
        let var = Var(u32::try_from(x.unsigned_abs() - 1).ok()?);
        Some(Lit::new(var, x < 0))
    }
}

impl Not for Lit {
    type Output = Lit;
    fn not(self) -> Lit {
        Lit(self.0 ^ 1)
    }
}

/// Anything that can receive fresh variables and clauses.
pub trait ClauseSink {
    fn new_var(&mut self) -> Var;
    fn add_clause(&mut self, lits: &[Lit]);
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum SolveResult {
    /// Assignment indexed by variable.
    Sat(Vec<bool>),
    Unsat,
}

impl SolveResult {
    pub fn is_sat(&self) -> bool {
        matches!(self, SolveResult::Sat(_))
    }

    pub fn model(&self) -> Option<&[bool]> {
        match self {
            SolveResult::Sat(m) => Some(m),
            SolveResult::Unsat => None,
        }
    }
}

/// Clause database with an optional net-to-variable map.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct CnfFormula {
    num_vars: usize,
    clauses: Vec<Vec<Lit>>,
    net_to_var: HashMap<NetId, Var>,
}

impl CnfFormula {
    pub fn new() -> CnfFormula {
        CnfFormula::default()
    }

    pub fn num_vars(&self) -> usize {
        self.num_vars
    }

    pub fn clauses(&self) -> &[Vec<Lit>] {
        &self.clauses
    }

    pub fn net_var(&self, net: NetId) -> Option<Var> {
        self.net_to_var.get(&net).copied()
    }

    pub fn net_to_var(&self) -> &HashMap<NetId, Var> {
        &self.net_to_var
    }

    pub(crate) fn from_parts(num_vars: usize, clauses: Vec<Vec<Lit>>) -> CnfFormula {
        CnfFormula {
            num_vars,
            clauses,
            net_to_var: HashMap::new(),
        }
    }

    /// Loads the formula into a fresh solver.
    pub fn to_solver(&self, seed: u64) -> Solver {
        let mut s = Solver::with_seed(seed);
        for _ in 0..self.num_vars {
            s.new_var();
        }
        for c in &self.clauses {
            s.add_clause(c);
        }
        s
    }

    pub fn solve(&self, assumptions: &[Lit]) -> Result<SolveResult, SatError> {
        self.to_solver(0).solve(assumptions)
    }
}

impl ClauseSink for CnfFormula {
    fn new_var(&mut self) -> Var {
        self.num_vars += 1;
        Var(self.num_vars as u32 - 1)
    }

    fn add_clause(&mut self, lits: &[Lit]) {
        assert!(!lits.is_empty(), "empty clause");
        for l in lits {
            assert!(
                l.var().index() < self.num_vars,
                "literal of undeclared variable"
            );
        }
        self.clauses.push(lits.to_vec());
    }
}

/// One variable per net and the standard per-gate clauses; multi-input
/// XOR/XNOR gates get auxiliary chain variables.
pub fn tseitin_encode(circuit: &Circuit) -> Result<CnfFormula, SatError> {
    if !circuit.is_combinational() {
        return Err(SatError::NotCombinational(circuit.flip_flops().len()));
    }
    let mut f = CnfFormula::new();
    let vars: Vec<Var> = (0..circuit.num_nets()).map(|_| f.new_var()).collect();
    for &g in circuit.topo_order() {
        let gate = circuit.gate(g);
        let ins: Vec<Lit> = gate.inputs.iter().map(|&n| vars[n].pos()).collect();
        encode::encode_gate_lits(&mut f, gate.kind, &ins, vars[gate.output].pos());
    }
    f.net_to_var = vars.iter().enumerate().map(|(n, &v)| (n, v)).collect();
    Ok(f)
}
