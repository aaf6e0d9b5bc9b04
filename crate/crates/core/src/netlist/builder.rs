// SPDX-License-Identifier: Apache-2.0

use std::collections::{HashMap, HashSet, VecDeque};

use super::{Circuit, Driver, Gate, GateKind, NetId, NetlistError};

#[derive(Debug, Clone)]
struct PendingGate {
    kind: GateKind,
    inputs: Vec<String>,
    output: String,
    line: Option<usize>,
}

/// Name-based netlist construction with full validation in [`CircuitBuilder::build`].
#[derive(Debug, Clone)]
pub struct CircuitBuilder {
    name: String,
    inputs: Vec<(String, Option<usize>)>,
    outputs: Vec<(String, Option<usize>)>,
    gates: Vec<PendingGate>,
    used_names: HashSet<String>,
}

impl CircuitBuilder {
    pub fn new(name: impl Into<String>) -> CircuitBuilder {
        CircuitBuilder {
            name: name.into(),
            inputs: Vec::new(),
            outputs: Vec::new(),
            gates: Vec::new(),
            used_names: HashSet::new(),
        }
    }

    pub fn add_input(&mut self, name: &str) -> &mut Self {
        self.add_input_at(name, None)
    }

    pub fn add_output(&mut self, name: &str) -> &mut Self {
        self.add_output_at(name, None)
    }

    pub fn add_gate(&mut self, kind: GateKind, inputs: &[&str], output: &str) -> &mut Self {
        self.add_gate_at(kind, inputs, output, None)
    }

    pub(crate) fn add_input_at(&mut self, name: &str, line: Option<usize>) -> &mut Self {
        self.used_names.insert(name.to_string());
        self.inputs.push((name.to_string(), line));
        self
    }

    pub(crate) fn add_output_at(&mut self, name: &str, line: Option<usize>) -> &mut Self {
        self.used_names.insert(name.to_string());
        self.outputs.push((name.to_string(), line));
        self
    }

    pub(crate) fn add_gate_at(
        &mut self,
        kind: GateKind,
        inputs: &[&str],
        output: &str,
        line: Option<usize>,
    ) -> &mut Self {
        for i in inputs {
            self.used_names.insert(i.to_string());
        }
        self.used_names.insert(output.to_string());
        self.gates.push(PendingGate {
            kind,
            inputs: inputs.iter().map(|s| s.to_string()).collect(),
            output: output.to_string(),
            line,
        });
        self
    }

    /// A net name not yet referenced by this builder, derived from `base`.
    pub fn fresh_name(&mut self, base: &str) -> String {
        let mut candidate = base.to_string();
        let mut n = 0usize;
        while self.used_names.contains(&candidate) {
            candidate = format!("{base}_{n}");
            n += 1;
        }
        self.used_names.insert(candidate.clone());
        candidate
    }

    pub fn is_used(&self, name: &str) -> bool {
        self.used_names.contains(name)
    }

    pub fn num_gates(&self) -> usize {
        self.gates.len()
    }

    pub fn build(&self) -> Result<Circuit, NetlistError> {
        let mut net_names: Vec<String> = Vec::new();
        let mut net_lookup: HashMap<String, NetId> = HashMap::new();
        let mut drivers: Vec<Driver> = Vec::new();

        for (i, (name, line)) in self.inputs.iter().enumerate() {
            if net_lookup.contains_key(name) {
                return Err(NetlistError::DuplicateDriver {
                    name: name.clone(),
                    line: *line,
                });
            }
            net_lookup.insert(name.clone(), net_names.len());
            net_names.push(name.clone());
            drivers.push(Driver::Input(i));
        }
        for (g, pg) in self.gates.iter().enumerate() {
            if net_lookup.contains_key(&pg.output) {
                return Err(NetlistError::DuplicateDriver {
                    name: pg.output.clone(),
                    line: pg.line,
                });
            }
            net_lookup.insert(pg.output.clone(), net_names.len());
            net_names.push(pg.output.clone());
            drivers.push(Driver::Gate(g));
        }

        let resolve = |name: &str, line: Option<usize>| -> Result<NetId, NetlistError> {
            net_lookup
                .get(name)
                .copied()
                .ok_or_else(|| NetlistError::UndefinedNet {
                    name: name.to_string(),
                    line,
                })
        };

        let mut gates = Vec::with_capacity(self.gates.len());
        let mut flip_flops = Vec::new();
        for (id, pg) in self.gates.iter().enumerate() {
            if !pg.kind.arity_ok(pg.inputs.len()) {
                return Err(NetlistError::Arity {
                    kind: pg.kind,
                    output: pg.output.clone(),
                    got: pg.inputs.len(),
                    line: pg.line,
                });
            }
            let inputs = pg
                .inputs
                .iter()
                .map(|n| resolve(n, pg.line))
                .collect::<Result<Vec<_>, _>>()?;
            if pg.kind == GateKind::Dff {
                flip_flops.push(id);
            }
            gates.push(Gate {
                id,
                kind: pg.kind,
                inputs,
                output: net_lookup[&pg.output],
            });
        }

        let primary_inputs: Vec<NetId> = (0..self.inputs.len()).collect();
        let primary_outputs = self
            .outputs
            .iter()
            .map(|(n, line)| resolve(n, *line))
            .collect::<Result<Vec<_>, _>>()?;

        let mut fanout = vec![Vec::new(); net_names.len()];
        for g in &gates {
            for &i in &g.inputs {
                if fanout[i].last() != Some(&g.id) {
                    fanout[i].push(g.id);
                }
            }
        }

        let topo_order =
            topo_sort(&gates, &drivers, &fanout).map_err(|g| NetlistError::CombinationalCycle {
                net: net_names[gates[g].output].clone(),
            })?;

        Ok(Circuit {
            name: self.name.clone(),
            net_names,
            net_lookup,
            gates,
            primary_inputs,
            primary_outputs,
            flip_flops,
            drivers,
            topo_order,
            fanout,
        })
    }
}

/// Kahn's algorithm over combinational gates, seeded in gate-id order.
/// Returns a gate on a cycle on failure.
fn topo_sort(
    gates: &[Gate],
    drivers: &[Driver],
    fanout: &[Vec<usize>],
) -> Result<Vec<usize>, usize> {
    let is_comb_driver = |net: NetId| match drivers[net] {
        Driver::Gate(g) => gates[g].kind != GateKind::Dff,
        Driver::Input(_) => false,
    };
    let mut pending = vec![0usize; gates.len()];
    let mut queue = VecDeque::new();
    let mut n_comb = 0;
    for g in gates {
        if g.kind == GateKind::Dff {
            continue;
        }
        n_comb += 1;
        pending[g.id] = g.inputs.iter().filter(|&&i| is_comb_driver(i)).count();
        if pending[g.id] == 0 {
            queue.push_back(g.id);
        }
    }
    let mut order = Vec::with_capacity(n_comb);
    while let Some(g) = queue.pop_front() {
        order.push(g);
        let out = gates[g].output;
        for &succ in &fanout[out] {
            if gates[succ].kind == GateKind::Dff {
                continue;
            }
            // a gate may read the same net on several pins
            let pins = gates[succ].inputs.iter().filter(|&&i| i == out).count();
            pending[succ] -= pins;
            if pending[succ] == 0 {
                queue.push_back(succ);
            }
        }
    }
    if order.len() == n_comb {
        Ok(order)
    } else {
        let stuck = gates
            .iter()
            .find(|g| g.kind != GateKind::Dff && pending[g.id] > 0)
            .map(|g| g.id)
            .unwrap_or(0);
        Err(stuck)
    }
}
