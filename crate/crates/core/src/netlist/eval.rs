// SPDX-License-Identifier: Apache-2.0

use serde::{Deserialize, Serialize};

use super::{Circuit, NetId, NetlistError};

/// Result of one combinational evaluation.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Evaluation {
    /// Values of the primary outputs, in declaration order.
    pub outputs: Vec<bool>,
    /// Values at the DFF D pins, in flip-flop order.
    pub next_state: Vec<bool>,
}

impl Circuit {
    fn check_widths(&self, inputs: usize, state: usize) -> Result<(), NetlistError> {
        if inputs != self.primary_inputs().len() {
            return Err(NetlistError::MissingAssignment {
                what: "primary input",
                expected: self.primary_inputs().len(),
                got: inputs,
            });
        }
        if state != self.flip_flops().len() {
            return Err(NetlistError::MissingAssignment {
                what: "flip-flop state",
                expected: self.flip_flops().len(),
                got: state,
            });
        }
        Ok(())
    }

    /// Values of every net for the given primary inputs and DFF state.
    pub fn net_values(&self, inputs: &[bool], state: &[bool]) -> Result<Vec<bool>, NetlistError> {
        self.check_widths(inputs.len(), state.len())?;
        let mut values = vec![false; self.num_nets()];
        for (&net, &v) in self.primary_inputs().iter().zip(inputs) {
            values[net] = v;
        }
        for (&ff, &v) in self.flip_flops().iter().zip(state) {
            values[self.gate(ff).output] = v;
        }
        for &g in self.topo_order() {
            let gate = self.gate(g);
            values[gate.output] = gate.kind.eval(gate.inputs.iter().map(|&i| values[i]));
        }
        Ok(values)
    }

    /// Primary outputs and next state for one clock cycle.
    pub fn evaluate(&self, inputs: &[bool], state: &[bool]) -> Result<Evaluation, NetlistError> {
        let values = self.net_values(inputs, state)?;
        Ok(self.collect(&values))
    }

    pub(crate) fn collect(&self, values: &[bool]) -> Evaluation {
        Evaluation {
            outputs: self.primary_outputs().iter().map(|&n| values[n]).collect(),
            next_state: self
                .flip_flops()
                .iter()
                .map(|&ff| values[self.gate(ff).inputs[0]])
                .collect(),
        }
    }

    /// 64 patterns at once: bit `j` of every word belongs to pattern `j`.
    pub fn simulate_words(&self, inputs: &[u64], state: &[u64]) -> Result<Vec<u64>, NetlistError> {
        self.simulate_words_forced(inputs, state, None)
    }

    /// Like [`Circuit::simulate_words`], with one net overridden by a
    /// forced value after its driver is evaluated (stuck-at injection).
    pub fn simulate_words_forced(
        &self,
        inputs: &[u64],
        state: &[u64],
        forced: Option<(NetId, u64)>,
    ) -> Result<Vec<u64>, NetlistError> {
        self.check_widths(inputs.len(), state.len())?;
        let mut values = vec![0u64; self.num_nets()];
        for (&net, &v) in self.primary_inputs().iter().zip(inputs) {
            values[net] = v;
        }
        for (&ff, &v) in self.flip_flops().iter().zip(state) {
            values[self.gate(ff).output] = v;
        }
        let forced_net = forced.map(|(n, _)| n);
        if let Some((net, v)) = forced {
            values[net] = v;
        }
        for &g in self.topo_order() {
            let gate = self.gate(g);
            if Some(gate.output) == forced_net {
                continue;
            }
            values[gate.output] = gate.kind.eval_word(gate.inputs.iter().map(|&i| values[i]));
        }
        Ok(values)
    }
}
