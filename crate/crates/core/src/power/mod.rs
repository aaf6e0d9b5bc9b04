// SPDX-License-Identifier: Apache-2.0

//! Switching-activity simulation: per-cycle toggle counts of gate-level
//! circuits, an AES-128 core, and subsystems that combine them.

mod aes;
mod subsystem;

use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::netlist::{Circuit, NetId};

pub use aes::{
    aes128_encrypt_trace, format_block, parse_block, Aes128Core, Block, AES_CYCLES, SBOX,
};
pub use subsystem::{
    simulate_subsystem, Granularity, NoiseIp, PowerError, SubsystemConfig, SubsystemTrace,
    SwitchingProfile, AES_BLOCK,
};

/// Toggle counts per cycle, optionally broken down by block.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ToggleTrace {
    pub per_cycle: Vec<u64>,
    pub per_block: BTreeMap<String, Vec<u64>>,
}

impl ToggleTrace {
    pub fn total(&self) -> u64 {
        self.per_cycle.iter().sum()
    }
}

/// Cycle-by-cycle simulator that counts net transitions. Flip-flops and
/// inputs reset to 0 and the logic starts settled at that reset state.
#[derive(Debug, Clone)]
pub struct ToggleSimulator<'a> {
    circuit: &'a Circuit,
    values: Vec<bool>,
    state: Vec<bool>,
    inputs: Vec<bool>,
    d_nets: Vec<NetId>,
}

impl<'a> ToggleSimulator<'a> {
    pub fn new(circuit: &'a Circuit) -> ToggleSimulator<'a> {
        let state = vec![false; circuit.flip_flops().len()];
        let inputs = vec![false; circuit.primary_inputs().len()];
        let values = circuit
            .net_values(&inputs, &state)
            .expect("widths match by construction");
        ToggleSimulator {
            circuit,
            values,
            state,
            inputs,
            d_nets: circuit.next_state_nets(),
        }
    }

    /// Applies `inputs`, settles the logic, clocks the flip-flops and returns
    /// the number of nets whose value changed (primary inputs included).
    pub fn step(&mut self, inputs: &[bool]) -> u64 {
        self.inputs.copy_from_slice(inputs);
        let next = self
            .circuit
            .net_values(&self.inputs, &self.state)
            .expect("widths match by construction");
        let toggles = next
            .iter()
            .zip(&self.values)
            .filter(|(a, b)| a != b)
            .count() as u64;
        for (s, d) in self.state.iter_mut().zip(&self.d_nets) {
            *s = next[*d];
        }
        self.values = next;
        toggles
    }

    /// One cycle with a uniformly random input vector.
    pub fn step_random<R: Rng>(&mut self, rng: &mut R) -> u64 {
        let v: Vec<bool> = (0..self.inputs.len()).map(|_| rng.gen()).collect();
        self.step(&v)
    }
}

/// Toggles under caller-supplied stimulus; `stimulus(cycle, inputs)` fills
/// the primary-input vector for each cycle.
pub fn simulate_toggles_with<F: FnMut(usize, &mut [bool])>(
    circuit: &Circuit,
    cycles: usize,
    mut stimulus: F,
) -> ToggleTrace {
    let mut sim = ToggleSimulator::new(circuit);
    let mut pis = vec![false; circuit.primary_inputs().len()];
    let per_cycle: Vec<u64> = (0..cycles)
        .map(|c| {
            stimulus(c, &mut pis);
            sim.step(&pis)
        })
        .collect();
    let mut per_block = BTreeMap::new();
    per_block.insert(circuit.name().to_string(), per_cycle.clone());
    ToggleTrace {
        per_cycle,
        per_block,
    }
}

/// Toggles under i.i.d. uniform random inputs drawn from ChaCha8 seeded
/// with `seed`, inputs in declaration order.
pub fn simulate_circuit_toggles(circuit: &Circuit, seed: u64, cycles: usize) -> ToggleTrace {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    simulate_toggles_with(circuit, cycles, |_, pis| {
        for b in pis.iter_mut() {
            *b = rng.gen();
        }
    })
}
