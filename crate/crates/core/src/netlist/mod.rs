// SPDX-License-Identifier: Apache-2.0

//! Gate-level netlist IR shared by every other module.
//!
//! A [`Circuit`] is immutable once built. Nets are dense indices whose
//! order is fixed at construction: primary inputs first, then gate
//! outputs in gate order. Gate ids are dense and follow insertion order,
//! so every seeded procedure downstream is reproducible.

mod bench;
mod builder;
mod eval;

use std::collections::HashMap;
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use bench::{parse_bench, write_bench};
pub use builder::CircuitBuilder;
pub use eval::Evaluation;

pub type NetId = usize;
pub type GateId = usize;

/// Name prefix of key inputs in locked netlists.
pub const KEY_INPUT_PREFIX: &str = "keyinput";

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum NetlistError {
    #[error("line {line}: syntax error: {message}")]
    Syntax { line: usize, message: String },
    #[error("{}undefined net `{name}`", line_prefix(*.line))]
    UndefinedNet { name: String, line: Option<usize> },
    #[error("{}net `{name}` has more than one driver", line_prefix(*.line))]
    DuplicateDriver { name: String, line: Option<usize> },
    #[error("combinational cycle through net `{net}`")]
    CombinationalCycle { net: String },
    #[error("{}{kind} gate driving `{output}` has {got} inputs", line_prefix(*.line))]
    Arity {
        kind: GateKind,
        output: String,
        got: usize,
        line: Option<usize>,
    },
    #[error("expected {expected} {what} values, got {got}")]
    MissingAssignment {
        what: &'static str,
        expected: usize,
        got: usize,
    },
    #[error("circuit contains {0} flip-flops; a combinational circuit is required")]
    NotCombinational(usize),
    #[error("unknown net `{0}`")]
    UnknownNet(String),
}

fn line_prefix(line: Option<usize>) -> String {
    match line {
        Some(l) => format!("line {l}: "),
        None => String::new(),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum GateKind {
    And,
    Nand,
    Or,
    Nor,
    Xor,
    Xnor,
    Not,
    Buf,
    Dff,
}

impl GateKind {
    pub const ALL: [GateKind; 9] = [
        GateKind::And,
        GateKind::Nand,
        GateKind::Or,
        GateKind::Nor,
        GateKind::Xor,
        GateKind::Xnor,
        GateKind::Not,
        GateKind::Buf,
        GateKind::Dff,
    ];

    /// Keyword used in bench files.
    pub fn bench_name(self) -> &'static str {
        match self {
            GateKind::And => "AND",
            GateKind::Nand => "NAND",
            GateKind::Or => "OR",
            GateKind::Nor => "NOR",
            GateKind::Xor => "XOR",
            GateKind::Xnor => "XNOR",
            GateKind::Not => "NOT",
            GateKind::Buf => "BUF",
            GateKind::Dff => "DFF",
        }
    }

    /// Case-insensitive keyword lookup; accepts the ISCAS `BUFF` spelling.
    pub fn from_bench_name(s: &str) -> Option<GateKind> {
        let up = s.to_ascii_uppercase();
        Some(match up.as_str() {
            "AND" => GateKind::And,
            "NAND" => GateKind::Nand,
            "OR" => GateKind::Or,
            "NOR" => GateKind::Nor,
            "XOR" => GateKind::Xor,
            "XNOR" => GateKind::Xnor,
            "NOT" | "INV" => GateKind::Not,
            "BUF" | "BUFF" => GateKind::Buf,
            "DFF" => GateKind::Dff,
            _ => return None,
        })
    }

    pub fn is_unary(self) -> bool {
        matches!(self, GateKind::Not | GateKind::Buf | GateKind::Dff)
    }

    pub fn arity_ok(self, n: usize) -> bool {
        if self.is_unary() {
            n == 1
        } else {
            n >= 2
        }
    }

    /// Boolean function of a combinational gate. DFFs behave as buffers here.
    pub fn eval<I: IntoIterator<Item = bool>>(self, inputs: I) -> bool {
        let mut it = inputs.into_iter();
        match self {
            GateKind::And => it.all(|b| b),
            GateKind::Nand => !it.all(|b| b),
            GateKind::Or => it.any(|b| b),
            GateKind::Nor => !it.any(|b| b),
            GateKind::Xor => it.fold(false, |a, b| a ^ b),
            GateKind::Xnor => !it.fold(false, |a, b| a ^ b),
            GateKind::Not => !it.next().unwrap_or(false),
            GateKind::Buf | GateKind::Dff => it.next().unwrap_or(false),
        }
    }

    /// 64-way bit-parallel version of [`GateKind::eval`].
    pub fn eval_word<I: IntoIterator<Item = u64>>(self, inputs: I) -> u64 {
        let mut it = inputs.into_iter();
        match self {
            GateKind::And => it.fold(!0, |a, b| a & b),
            GateKind::Nand => !it.fold(!0, |a, b| a & b),
            GateKind::Or => it.fold(0, |a, b| a | b),
            GateKind::Nor => !it.fold(0, |a, b| a | b),
            GateKind::Xor => it.fold(0, |a, b| a ^ b),
            GateKind::Xnor => !it.fold(0, |a, b| a ^ b),
            GateKind::Not => !it.next().unwrap_or(0),
            GateKind::Buf | GateKind::Dff => it.next().unwrap_or(0),
        }
    }
}

impl fmt::Display for GateKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.bench_name())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Gate {
    pub id: GateId,
    pub kind: GateKind,
    pub inputs: Vec<NetId>,
    pub output: NetId,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Driver {
    /// Index into the primary-input list.
    Input(usize),
    Gate(GateId),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Circuit {
    name: String,
    net_names: Vec<String>,
    net_lookup: HashMap<String, NetId>,
    gates: Vec<Gate>,
    primary_inputs: Vec<NetId>,
    primary_outputs: Vec<NetId>,
    flip_flops: Vec<GateId>,
    drivers: Vec<Driver>,
    topo_order: Vec<GateId>,
    fanout: Vec<Vec<GateId>>,
}

impl Circuit {
    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn with_name(mut self, name: impl Into<String>) -> Circuit {
        self.name = name.into();
        self
    }

    pub fn gates(&self) -> &[Gate] {
        &self.gates
    }

    pub fn gate(&self, id: GateId) -> &Gate {
        &self.gates[id]
    }

    pub fn primary_inputs(&self) -> &[NetId] {
        &self.primary_inputs
    }

    pub fn primary_outputs(&self) -> &[NetId] {
        &self.primary_outputs
    }

    pub fn flip_flops(&self) -> &[GateId] {
        &self.flip_flops
    }

    pub fn num_nets(&self) -> usize {
        self.net_names.len()
    }

    pub fn net_name(&self, net: NetId) -> &str {
        &self.net_names[net]
    }

    pub fn net_names(&self) -> &[String] {
        &self.net_names
    }

    pub fn net(&self, name: &str) -> Option<NetId> {
        self.net_lookup.get(name).copied()
    }

    pub fn driver(&self, net: NetId) -> Driver {
        self.drivers[net]
    }

    /// Gates reading `net`.
    pub fn fanout(&self, net: NetId) -> &[GateId] {
        &self.fanout[net]
    }

    /// Combinational gates in a topological order (DFFs excluded).
    pub fn topo_order(&self) -> &[GateId] {
        &self.topo_order
    }

    pub fn is_combinational(&self) -> bool {
        self.flip_flops.is_empty()
    }

    /// Number of non-DFF gates.
    pub fn num_logic_gates(&self) -> usize {
        self.gates.len() - self.flip_flops.len()
    }

    pub fn count_kind(&self, kind: GateKind) -> usize {
        self.gates.iter().filter(|g| g.kind == kind).count()
    }

    /// DFF Q nets in flip-flop declaration order.
    pub fn state_nets(&self) -> Vec<NetId> {
        self.flip_flops
            .iter()
            .map(|&g| self.gates[g].output)
            .collect()
    }

    /// DFF D nets in flip-flop declaration order.
    pub fn next_state_nets(&self) -> Vec<NetId> {
        self.flip_flops
            .iter()
            .map(|&g| self.gates[g].inputs[0])
            .collect()
    }

    /// Position of `net` in the primary-input list.
    pub fn input_position(&self, net: NetId) -> Option<usize> {
        match self.drivers[net] {
            Driver::Input(i) => Some(i),
            Driver::Gate(_) => None,
        }
    }

    /// Nets in the transitive fanout of `sources` (sources included),
    /// following combinational gates only.
    pub fn transitive_fanout(&self, sources: &[NetId]) -> Vec<bool> {
        let mut mark = vec![false; self.num_nets()];
        for &s in sources {
            mark[s] = true;
        }
        for &g in &self.topo_order {
            let gate = &self.gates[g];
            if gate.inputs.iter().any(|&i| mark[i]) {
                mark[gate.output] = true;
            }
        }
        mark
    }

    /// Copy of this circuit as a builder, for constructing derived netlists.
    pub fn to_builder(&self) -> CircuitBuilder {
        let mut b = CircuitBuilder::new(self.name.clone());
        for &pi in &self.primary_inputs {
            b.add_input(self.net_name(pi));
        }
        for &po in &self.primary_outputs {
            b.add_output(self.net_name(po));
        }
        for g in &self.gates {
            let ins: Vec<&str> = g.inputs.iter().map(|&n| self.net_name(n)).collect();
            b.add_gate(g.kind, &ins, self.net_name(g.output));
        }
        b
    }
}

/// Structural statistics used for similarity matching.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct CircuitMetadata {
    pub name: String,
    pub key_length: usize,
    pub num_gates: usize,
    #[serde(rename = "num_pi")]
    pub num_primary_inputs: usize,
    #[serde(rename = "num_po")]
    pub num_primary_outputs: usize,
    #[serde(rename = "num_ffio")]
    pub num_flip_flop_io: usize,
}

impl CircuitMetadata {
    pub const CSV_HEADER: &'static str = "name,keyLength,numGates,numPI,numPO,numFFIO";

    pub fn to_csv_row(&self) -> String {
        format!(
            "{},{},{},{},{},{}",
            self.name,
            self.key_length,
            self.num_gates,
            self.num_primary_inputs,
            self.num_primary_outputs,
            self.num_flip_flop_io
        )
    }

    /// Feature vector (keyLength, numGates, numPI, numPO, numFFIO).
    pub fn features(&self) -> [f64; 5] {
        [
            self.key_length as f64,
            self.num_gates as f64,
            self.num_primary_inputs as f64,
            self.num_primary_outputs as f64,
            self.num_flip_flop_io as f64,
        ]
    }
}

pub(crate) fn is_key_input_name(name: &str) -> bool {
    name.strip_prefix(KEY_INPUT_PREFIX)
        .is_some_and(|rest| !rest.is_empty() && rest.bytes().all(|c| c.is_ascii_digit()))
}

/// Metadata of `circuit`. `num_gates` counts logic gates (DFFs are
/// reported separately as `num_flip_flop_io`); primary inputs named
/// `keyinput<N>` are not counted as primary inputs.
pub fn extract_metadata(circuit: &Circuit, key_length: usize) -> CircuitMetadata {
    let key_pis = circuit
        .primary_inputs()
        .iter()
        .filter(|&&n| is_key_input_name(circuit.net_name(n)))
        .count();
    CircuitMetadata {
        name: circuit.name().to_string(),
        key_length,
        num_gates: circuit.num_logic_gates(),
        num_primary_inputs: circuit.primary_inputs().len() - key_pis,
        num_primary_outputs: circuit.primary_outputs().len(),
        num_flip_flop_io: circuit.flip_flops().len(),
    }
}
