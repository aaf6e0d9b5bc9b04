// SPDX-License-Identifier: Apache-2.0
#![allow(dead_code)]

use std::path::PathBuf;

use platsec_core::netlist::{parse_bench, Circuit, CircuitBuilder, GateKind};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn bench_path(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR"))
        .join("../../benchmarks")
        .join(format!("{name}.bench"))
}

pub fn bench_text(name: &str) -> String {
    std::fs::read_to_string(bench_path(name)).unwrap()
}

pub fn load(name: &str) -> Circuit {
    parse_bench(name, &bench_text(name)).unwrap()
}

/// Truth function written out per gate type, independent of the library.
pub fn gate_value(kind: GateKind, ins: &[bool]) -> bool {
    let ones = ins.iter().filter(|&&b| b).count();
    match kind {
        GateKind::And => ones == ins.len(),
        GateKind::Nand => ones != ins.len(),
        GateKind::Or => ones > 0,
        GateKind::Nor => ones == 0,
        GateKind::Xor => ones % 2 == 1,
        GateKind::Xnor => ones % 2 == 0,
        GateKind::Not => !ins[0],
        GateKind::Buf | GateKind::Dff => ins[0],
    }
}

/// Net values by repeated sweeps over the gate list until nothing changes.
pub fn fixpoint_values(c: &Circuit, inputs: &[bool], state: &[bool]) -> Vec<bool> {
    let mut v = vec![false; c.num_nets()];
    let mut known = vec![false; c.num_nets()];
    for (&n, &b) in c.primary_inputs().iter().zip(inputs) {
        v[n] = b;
        known[n] = true;
    }
    for (&g, &b) in c.flip_flops().iter().zip(state) {
        v[c.gate(g).output] = b;
        known[c.gate(g).output] = true;
    }
    loop {
        let mut changed = false;
        for g in c.gates() {
            if g.kind == GateKind::Dff || known[g.output] || !g.inputs.iter().all(|&i| known[i]) {
                continue;
            }
            let ins: Vec<bool> = g.inputs.iter().map(|&i| v[i]).collect();
            v[g.output] = gate_value(g.kind, &ins);
            known[g.output] = true;
            changed = true;
        }
        if !changed {
            return v;
        }
    }
}

/// Outputs followed by next state, from [`fixpoint_values`].
pub fn naive_response(c: &Circuit, inputs: &[bool], state: &[bool]) -> (Vec<bool>, Vec<bool>) {
    let v = fixpoint_values(c, inputs, state);
    let outs = c.primary_outputs().iter().map(|&n| v[n]).collect();
    let ns = c
        .flip_flops()
        .iter()
        .map(|&g| v[c.gate(g).inputs[0]])
        .collect();
    (outs, ns)
}

pub fn bits(value: u64, n: usize) -> Vec<bool> {
    (0..n).map(|i| value >> i & 1 == 1).collect()
}

pub fn random_bits<R: Rng>(rng: &mut R, n: usize) -> Vec<bool> {
    (0..n).map(|_| rng.gen()).collect()
}

/// Random acyclic circuit: gates read earlier nets; `ffs` flip-flops whose
/// D pins are picked from the logic after it is built.
pub fn random_circuit(
    seed: u64,
    inputs: usize,
    gates: usize,
    outputs: usize,
    ffs: usize,
) -> Circuit {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut b = CircuitBuilder::new(format!("rand{seed}"));
    let mut nets: Vec<String> = (0..inputs).map(|i| format!("i{i}")).collect();
    for n in &nets {
        b.add_input(n);
    }
    let qs: Vec<String> = (0..ffs).map(|i| format!("q{i}")).collect();
    nets.extend(qs.iter().cloned());
    let kinds = [
        GateKind::And,
        GateKind::Nand,
        GateKind::Or,
        GateKind::Nor,
        GateKind::Xor,
        GateKind::Xnor,
        GateKind::Not,
        GateKind::Buf,
    ];
    for g in 0..gates {
        let kind = kinds[rng.gen_range(0..kinds.len())];
        let arity = if kind.is_unary() {
            1
        } else {
            rng.gen_range(2..=3)
        };
        let ins: Vec<String> = (0..arity)
            .map(|_| nets[rng.gen_range(0..nets.len())].clone())
            .collect();
        let refs: Vec<&str> = ins.iter().map(String::as_str).collect();
        let out = format!("g{g}");
        b.add_gate(kind, &refs, &out);
        nets.push(out);
    }
    let first_gate = inputs + ffs;
    for q in &qs {
        let d = nets[rng.gen_range(first_gate..nets.len())].clone();
        b.add_gate(GateKind::Dff, &[&d], q);
    }
    let picks = rand::seq::index::sample(&mut rng, gates, outputs.min(gates));
    for i in picks.iter() {
        b.add_output(&nets[first_gate + i]);
    }
    b.build().unwrap()
}
