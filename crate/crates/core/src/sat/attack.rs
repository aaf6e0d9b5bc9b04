// SPDX-License-Identifier: Apache-2.0

//! Oracle-guided key recovery with distinguishing input patterns (DIPs).

use std::io::Write as _;
use std::path::PathBuf;
use std::process::Command;
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::locking::{LockedCircuit, LockingKey};
use crate::netlist::{Circuit, NetId};

use super::dimacs::{parse_dimacs_solution, write_dimacs};
use super::encode::{encode_gate, Signal};
use super::{ClauseSink, CnfFormula, Lit, SatError, SolveResult, Solver, Var};

/// Combinational locked model seen by the attacker: observable data inputs,
/// key inputs and primary outputs.
#[derive(Debug, Clone)]
pub struct AttackModel {
    circuit: Circuit,
    data_inputs: Vec<NetId>,
    key_inputs: Vec<NetId>,
}

impl AttackModel {
    /// Every primary input that is not in `key_inputs` is a data input, in
    /// declaration order.
    pub fn new(circuit: Circuit, key_inputs: Vec<NetId>) -> Result<AttackModel, SatError> {
        if !circuit.is_combinational() {
            return Err(SatError::NotCombinational(circuit.flip_flops().len()));
        }
        let data_inputs = circuit
            .primary_inputs()
            .iter()
            .copied()
            .filter(|n| !key_inputs.contains(n))
            .collect();
        Ok(AttackModel {
            circuit,
            data_inputs,
            key_inputs,
        })
    }

    pub fn from_locked(locked: &LockedCircuit) -> Result<AttackModel, SatError> {
        AttackModel::new(locked.core().clone(), locked.key_inputs().to_vec())
    }

    pub fn circuit(&self) -> &Circuit {
        &self.circuit
    }

    pub fn data_inputs(&self) -> &[NetId] {
        &self.data_inputs
    }

    pub fn key_inputs(&self) -> &[NetId] {
        &self.key_inputs
    }

    pub fn input_width(&self) -> usize {
        self.data_inputs.len()
    }

    pub fn output_width(&self) -> usize {
        self.circuit.primary_outputs().len()
    }

    pub fn key_len(&self) -> usize {
        self.key_inputs.len()
    }

    /// Outputs under `key` for one input pattern.
    pub fn evaluate(&self, key: &LockingKey, inputs: &[bool]) -> Result<Vec<bool>, SatError> {
        if key.len() != self.key_len() {
            return Err(SatError::OracleWidth {
                what: "key bits",
                expected: self.key_len(),
                got: key.len(),
            });
        }
        if inputs.len() != self.input_width() {
            return Err(SatError::OracleWidth {
                what: "inputs",
                expected: self.input_width(),
                got: inputs.len(),
            });
        }
        let mut pis = vec![false; self.circuit.primary_inputs().len()];
        for (&net, &v) in self.data_inputs.iter().zip(inputs) {
            pis[self.circuit.input_position(net).unwrap()] = v;
        }
        for (&net, &v) in self.key_inputs.iter().zip(key.bits()) {
            pis[self.circuit.input_position(net).unwrap()] = v;
        }
        Ok(self.circuit.evaluate(&pis, &[])?.outputs)
    }

    /// Signals for every net of one copy. `shared` lets a second copy reuse
    /// the first copy's key-independent nets.
    fn encode_copy<S: ClauseSink>(
        &self,
        sink: &mut S,
        inputs: &[Signal],
        key: &[Signal],
        shared: Option<(&[Signal], &[bool])>,
    ) -> Vec<Signal> {
        let c = &self.circuit;
        let mut sig = vec![Signal::Const(false); c.num_nets()];
        for (&n, &s) in self.data_inputs.iter().zip(inputs) {
            sig[n] = s;
        }
        for (&n, &s) in self.key_inputs.iter().zip(key) {
            sig[n] = s;
        }
        let mut buf = Vec::new();
        for &g in c.topo_order() {
            let gate = c.gate(g);
            if let Some((base, key_dep)) = shared {
                if !key_dep[gate.output] {
                    sig[gate.output] = base[gate.output];
                    continue;
                }
            }
            buf.clear();
            buf.extend(gate.inputs.iter().map(|&n| sig[n]));
            sig[gate.output] = encode_gate(sink, gate.kind, &buf);
        }
        sig
    }

    fn output_signals(&self, sig: &[Signal]) -> Vec<Signal> {
        self.circuit
            .primary_outputs()
            .iter()
            .map(|&n| sig[n])
            .collect()
    }
}

/// Black-box access to an activated chip at the attack model's interface.
pub trait Oracle {
    fn input_width(&self) -> usize;
    fn output_width(&self) -> usize;
    fn query(&mut self, inputs: &[bool]) -> Result<Vec<bool>, SatError>;
}

/// Oracle that evaluates the model itself under the correct key.
#[derive(Debug, Clone)]
pub struct CircuitOracle {
    model: AttackModel,
    key: LockingKey,
    queries: usize,
}

impl CircuitOracle {
    pub fn new(model: AttackModel, key: LockingKey) -> CircuitOracle {
        CircuitOracle {
            model,
            key,
            queries: 0,
        }
    }

    pub fn from_locked(locked: &LockedCircuit) -> Result<CircuitOracle, SatError> {
        Ok(CircuitOracle::new(
            AttackModel::from_locked(locked)?,
            locked.correct_key().clone(),
        ))
    }

    pub fn queries(&self) -> usize {
        self.queries
    }
}

impl Oracle for CircuitOracle {
    fn input_width(&self) -> usize {
        self.model.input_width()
    }

    fn output_width(&self) -> usize {
        self.model.output_width()
    }

    fn query(&mut self, inputs: &[bool]) -> Result<Vec<bool>, SatError> {
        self.queries += 1;
        self.model.evaluate(&self.key, inputs)
    }
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct AttackBudget {
    /// Wall-clock limit for the whole attack.
    pub timeout: Option<Duration>,
    pub max_iterations: Option<usize>,
}

impl Default for AttackBudget {
    fn default() -> Self {
        AttackBudget {
            timeout: Some(Duration::from_secs(3600)),
            max_iterations: None,
        }
    }
}

/// Which engine answers the SAT queries.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum SolverBackend {
    Builtin {
        seed: u64,
    },
    /// External executable called as `<path> <file.cnf>`; it must print
    /// `s SATISFIABLE`/`s UNSATISFIABLE` and `v` lines on stdout.
    Dimacs {
        path: PathBuf,
    },
}

impl Default for SolverBackend {
    fn default() -> Self {
        SolverBackend::Builtin { seed: 0 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AttackStatus {
    Success,
    Timeout,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DipRecord {
    pub input: Vec<bool>,
    pub output: Vec<bool>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct KeyVerification {
    pub exhaustive: bool,
    pub patterns: usize,
    pub mismatches: usize,
}

impl KeyVerification {
    pub fn passed(&self) -> bool {
        self.mismatches == 0
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AttackResult {
    /// `None` only when the attack stopped before a key could be extracted.
    pub recovered_key: Option<LockingKey>,
    pub iterations: usize,
    pub elapsed_seconds: f64,
    pub dip_trace: Vec<DipRecord>,
    pub status: AttackStatus,
    pub verification: Option<KeyVerification>,
}

/// Report row for one attack.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttackReport {
    pub design: String,
    pub key_length: usize,
    pub cr: usize,
    pub iterations: usize,
    pub elapsed_s: f64,
    pub status: AttackStatus,
    pub recovered_key: Option<String>,
}

impl AttackReport {
    pub fn new(design: &str, key_length: usize, cr: usize, result: &AttackResult) -> AttackReport {
        AttackReport {
            design: design.to_string(),
            key_length,
            cr,
            iterations: result.iterations,
            elapsed_s: result.elapsed_seconds,
            status: result.status,
            recovered_key: result.recovered_key.as_ref().map(|k| k.to_string()),
        }
    }
}

enum Engine {
    Builtin(Solver),
    External { path: PathBuf, formula: CnfFormula },
}

impl ClauseSink for Engine {
    fn new_var(&mut self) -> Var {
        match self {
            Engine::Builtin(s) => s.new_var(),
            Engine::External { formula, .. } => formula.new_var(),
        }
    }

    fn add_clause(&mut self, lits: &[Lit]) {
        match self {
            Engine::Builtin(s) => s.add_clause(lits),
            Engine::External { formula, .. } => formula.add_clause(lits),
        }
    }
}

impl Engine {
    fn solve(
        &mut self,
        assumptions: &[Lit],
        deadline: Option<Instant>,
    ) -> Result<SolveResult, SatError> {
        match self {
            Engine::Builtin(s) => {
                s.set_deadline(deadline);
                s.solve(assumptions)
            }
            Engine::External { path, formula } => {
                let mut f = formula.clone();
                for &a in assumptions {
                    f.add_clause(&[a]);
                }
                let mut file = tempfile::Builder::new().suffix(".cnf").tempfile()?;
                file.write_all(write_dimacs(&f).as_bytes())?;
                file.flush()?;
                let out = Command::new(&*path).arg(file.path()).output()?;
                let stdout = String::from_utf8_lossy(&out.stdout);
                parse_dimacs_solution(&stdout, f.num_vars()).map_err(|e| {
                    SatError::External(format!(
                        "{}: {e}; stderr: {}",
                        path.display(),
                        String::from_utf8_lossy(&out.stderr).trim()
                    ))
                })
            }
        }
    }
}

fn lit_signals(vars: &[Var]) -> Vec<Signal> {
    vars.iter().map(|v| Signal::Lit(v.pos())).collect()
}

fn read_bits(model: &[bool], vars: &[Var]) -> Vec<bool> {
    vars.iter().map(|v| model[v.index()]).collect()
}

/// Forces one key copy to reproduce `output` on `input`.
fn constrain_copy(
    engine: &mut Engine,
    model: &AttackModel,
    key: &[Signal],
    input: &[bool],
    output: &[bool],
    iteration: usize,
) -> Result<(), SatError> {
    let consts: Vec<Signal> = input.iter().map(|&b| Signal::Const(b)).collect();
    let sig = model.encode_copy(engine, &consts, key, None);
    for (s, &y) in model.output_signals(&sig).into_iter().zip(output) {
        match s {
            Signal::Const(b) if b == y => {}
            Signal::Const(_) => return Err(SatError::OracleInconsistent(iteration)),
            Signal::Lit(l) => engine.add_clause(&[if y { l } else { !l }]),
        }
    }
    Ok(())
}

/// Runs the DIP loop until no two keys disagree on any input, then
/// extracts a key consistent with every recorded oracle response and
/// verifies it against the oracle.
pub fn sat_attack(
    model: &AttackModel,
    oracle: &mut dyn Oracle,
    budget: &AttackBudget,
    backend: &SolverBackend,
) -> Result<AttackResult, SatError> {
    if oracle.input_width() != model.input_width() {
        return Err(SatError::OracleWidth {
            what: "inputs",
            expected: model.input_width(),
            got: oracle.input_width(),
        });
    }
    if oracle.output_width() != model.output_width() {
        return Err(SatError::OracleWidth {
            what: "outputs",
            expected: model.output_width(),
            got: oracle.output_width(),
        });
    }
    let start = Instant::now();
    let deadline = budget.timeout.map(|t| start + t);
    let mut engine = match backend {
        SolverBackend::Builtin { seed } => Engine::Builtin(Solver::with_seed(*seed)),
        SolverBackend::Dimacs { path } => Engine::External {
            path: path.clone(),
            formula: CnfFormula::new(),
        },
    };

    let x: Vec<Var> = (0..model.input_width()).map(|_| engine.new_var()).collect();
    let k1: Vec<Var> = (0..model.key_len()).map(|_| engine.new_var()).collect();
    let k2: Vec<Var> = (0..model.key_len()).map(|_| engine.new_var()).collect();
    let act = engine.new_var();
    let xs = lit_signals(&x);
    let key_dep = model.circuit.transitive_fanout(&model.key_inputs);
    let sig1 = model.encode_copy(&mut engine, &xs, &lit_signals(&k1), None);
    let sig2 = model.encode_copy(&mut engine, &xs, &lit_signals(&k2), Some((&sig1, &key_dep)));
    let mut miter = vec![act.neg()];
    let mut always_differs = false;
    for (a, b) in model
        .output_signals(&sig1)
        .into_iter()
        .zip(model.output_signals(&sig2))
    {
        match encode_gate(&mut engine, crate::netlist::GateKind::Xor, &[a, b]) {
            Signal::Const(false) => {}
            Signal::Const(true) => always_differs = true,
            Signal::Lit(l) => miter.push(l),
        }
    }
    if !always_differs {
        engine.add_clause(&miter);
    }

    let k1s = lit_signals(&k1);
    let k2s = lit_signals(&k2);
    let mut trace: Vec<DipRecord> = Vec::new();
    let timed_out = |trace: Vec<DipRecord>| AttackResult {
        recovered_key: None,
        iterations: trace.len(),
        elapsed_seconds: start.elapsed().as_secs_f64(),
        dip_trace: trace,
        status: AttackStatus::Timeout,
        verification: None,
    };
    loop {
        if budget.max_iterations.is_some_and(|m| trace.len() >= m)
            || deadline.is_some_and(|d| Instant::now() >= d)
        {
            return Ok(timed_out(trace));
        }
        let m = match engine.solve(&[act.pos()], deadline) {
            Ok(SolveResult::Sat(m)) => m,
            Ok(SolveResult::Unsat) => break,
            Err(SatError::ResourceLimit) => return Ok(timed_out(trace)),
            Err(e) => return Err(e),
        };
        let dip = read_bits(&m, &x);
        let y = oracle.query(&dip)?;
        if y.len() != model.output_width() {
            return Err(SatError::OracleWidth {
                what: "outputs",
                expected: model.output_width(),
                got: y.len(),
            });
        }
        constrain_copy(&mut engine, model, &k1s, &dip, &y, trace.len())?;
        constrain_copy(&mut engine, model, &k2s, &dip, &y, trace.len())?;
        trace.push(DipRecord {
            input: dip,
            output: y,
        });
    }

    let key = match engine.solve(&[act.neg()], deadline) {
        Ok(SolveResult::Sat(m)) => LockingKey::new(read_bits(&m, &k1))?,
        Ok(SolveResult::Unsat) => return Err(SatError::OracleInconsistent(trace.len())),
        Err(SatError::ResourceLimit) => return Ok(timed_out(trace)),
        Err(e) => return Err(e),
    };
    let elapsed = start.elapsed().as_secs_f64();
    let verification = verify_key(model, oracle, &key, 0)?;
    Ok(AttackResult {
        recovered_key: Some(key),
        iterations: trace.len(),
        elapsed_seconds: elapsed,
        dip_trace: trace,
        status: AttackStatus::Success,
        verification: Some(verification),
    })
}

/// Patterns used when the input space is too large to enumerate.
pub const VERIFY_SAMPLES: usize = 10_000;
/// Widths up to this are verified exhaustively.
pub const VERIFY_EXHAUSTIVE_WIDTH: usize = 16;

/// Compares the model under `key` with the oracle.
pub fn verify_key(
    model: &AttackModel,
    oracle: &mut dyn Oracle,
    key: &LockingKey,
    seed: u64,
) -> Result<KeyVerification, SatError> {
    let n = model.input_width();
    let mut mismatches = 0;
    let mut check = |pattern: &[bool]| -> Result<(), SatError> {
        if model.evaluate(key, pattern)? != oracle.query(pattern)? {
            mismatches += 1;
        }
        Ok(())
    };
    if n <= VERIFY_EXHAUSTIVE_WIDTH {
        let total = 1usize << n;
        let mut pattern = vec![false; n];
        for p in 0..total {
            for (i, b) in pattern.iter_mut().enumerate() {
                *b = (p >> i) & 1 == 1;
            }
            check(&pattern)?;
        }
        Ok(KeyVerification {
            exhaustive: true,
            patterns: total,
            mismatches,
        })
    } else {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut pattern = vec![false; n];
        for _ in 0..VERIFY_SAMPLES {
            for b in pattern.iter_mut() {
                *b = rng.gen();
            }
            check(&pattern)?;
        }
        Ok(KeyVerification {
            exhaustive: false,
            patterns: VERIFY_SAMPLES,
            mismatches,
        })
    }
}
