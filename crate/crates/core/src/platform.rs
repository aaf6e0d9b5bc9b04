// SPDX-License-Identifier: Apache-2.0

//! Platform view of a sequential IP: framing, scan topology with
//! broadcast decompression and XOR compaction, and the composed one-frame
//! attack model plus a cycle-level scan oracle.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::locking::{LockedCircuit, LockingKey};
use crate::netlist::{Circuit, CircuitBuilder, GateKind, NetId, NetlistError};
use crate::sat::{AttackModel, Oracle, SatError};

#[derive(Debug, Error)]
pub enum PlatformError {
    #[error("compression ratio must be at least 1")]
    ZeroCompression,
    #[error("{chains} chains are not divisible by compression ratio {cr}")]
    Indivisible { chains: usize, cr: usize },
    #[error("topology holds {capacity} cells but the design has {flip_flops} flip-flops")]
    Capacity { capacity: usize, flip_flops: usize },
    #[error("topology needs at least one chain")]
    NoChains,
    #[error(transparent)]
    Netlist(#[from] NetlistError),
    #[error(transparent)]
    Sat(#[from] SatError),
}

/// One-cycle combinational view of a sequential circuit.
#[derive(Debug, Clone)]
pub struct FrameModel {
    pub frame: Circuit,
    /// Frame primary inputs carrying the DFF Q values, in flip-flop order.
    pub ff_input_order: Vec<NetId>,
    /// Frame primary outputs carrying the DFF D values, in flip-flop order.
    pub ff_output_order: Vec<NetId>,
    pub num_original_inputs: usize,
    pub num_original_outputs: usize,
}

/// Exposes each DFF Q pin as a primary input and each D pin as a primary
/// output. Original inputs and outputs come first, in their order.
pub fn frame(circuit: &Circuit) -> FrameModel {
    let mut b = CircuitBuilder::new(circuit.name());
    for &pi in circuit.primary_inputs() {
        b.add_input(circuit.net_name(pi));
    }
    for q in circuit.state_nets() {
        b.add_input(circuit.net_name(q));
    }
    for &po in circuit.primary_outputs() {
        b.add_output(circuit.net_name(po));
    }
    for d in circuit.next_state_nets() {
        b.add_output(circuit.net_name(d));
    }
    for g in circuit.gates() {
        if g.kind == GateKind::Dff {
            continue;
        }
        let ins: Vec<&str> = g.inputs.iter().map(|&n| circuit.net_name(n)).collect();
        b.add_gate(g.kind, &ins, circuit.net_name(g.output));
    }
    let frame = b
        .build()
        .expect("framing a valid circuit yields a valid circuit");
    let n_in = circuit.primary_inputs().len();
    let n_out = circuit.primary_outputs().len();
    let ff_input_order = frame.primary_inputs()[n_in..].to_vec();
    let ff_output_order = frame.primary_outputs()[n_out..].to_vec();
    FrameModel {
        frame,
        ff_input_order,
        ff_output_order,
        num_original_inputs: n_in,
        num_original_outputs: n_out,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ScanTopology {
    pub num_chains: usize,
    pub chain_length: usize,
    pub compression_ratio: usize,
    pub external_channels: usize,
}

impl ScanTopology {
    pub fn new(
        num_chains: usize,
        chain_length: usize,
        cr: usize,
    ) -> Result<ScanTopology, PlatformError> {
        if cr == 0 {
            return Err(PlatformError::ZeroCompression);
        }
        if num_chains == 0 {
            return Err(PlatformError::NoChains);
        }
        if num_chains % cr != 0 {
            return Err(PlatformError::Indivisible {
                chains: num_chains,
                cr,
            });
        }
        Ok(ScanTopology {
            num_chains,
            chain_length,
            compression_ratio: cr,
            external_channels: num_chains / cr,
        })
    }

    /// Shortest chains that hold `flip_flops` cells across `num_chains`.
    pub fn for_flip_flops(
        flip_flops: usize,
        num_chains: usize,
        cr: usize,
    ) -> Result<ScanTopology, PlatformError> {
        let len = if num_chains == 0 {
            0
        } else {
            flip_flops.div_ceil(num_chains)
        };
        ScanTopology::new(num_chains, len, cr)
    }

    pub fn capacity(&self) -> usize {
        self.num_chains * self.chain_length
    }

    /// (chain, position) of flip-flop `j`; chains fill one after another.
    pub fn cell_of(&self, j: usize) -> (usize, usize) {
        (j / self.chain_length, j % self.chain_length)
    }

    /// Flip-flop at (chain, position), if that cell is populated.
    pub fn flip_flop_at(&self, chain: usize, position: usize, flip_flops: usize) -> Option<usize> {
        let j = chain * self.chain_length + position;
        (j < flip_flops).then_some(j)
    }

    /// External channel feeding (and observing) `chain`.
    pub fn channel_of(&self, chain: usize) -> usize {
        chain / self.compression_ratio
    }

    fn check(&self, flip_flops: usize) -> Result<(), PlatformError> {
        if self.capacity() < flip_flops {
            return Err(PlatformError::Capacity {
                capacity: self.capacity(),
                flip_flops,
            });
        }
        Ok(())
    }
}

/// Broadcast decompressor: inputs `ch0..`, outputs `sc0..`; chain `c` is a
/// buffer of channel `c / cr`.
pub fn build_decompressor(topology: &ScanTopology) -> Circuit {
    let mut b = CircuitBuilder::new(format!("decompressor_cr{}", topology.compression_ratio));
    for i in 0..topology.external_channels {
        b.add_input(&format!("ch{i}"));
    }
    for c in 0..topology.num_chains {
        let out = format!("sc{c}");
        b.add_output(&out);
        b.add_gate(
            GateKind::Buf,
            &[&format!("ch{}", topology.channel_of(c))],
            &out,
        );
    }
    b.build().expect("decompressor is well formed")
}

/// XOR compactor: inputs `so0..`, outputs `co0..`; output `g` is the parity
/// of chains `g*cr .. (g+1)*cr`.
pub fn build_compactor(topology: &ScanTopology) -> Circuit {
    let cr = topology.compression_ratio;
    let mut b = CircuitBuilder::new(format!("compactor_cr{cr}"));
    for c in 0..topology.num_chains {
        b.add_input(&format!("so{c}"));
    }
    for g in 0..topology.external_channels {
        let out = format!("co{g}");
        b.add_output(&out);
        let ins: Vec<String> = (g * cr..(g + 1) * cr).map(|c| format!("so{c}")).collect();
        let refs: Vec<&str> = ins.iter().map(String::as_str).collect();
        add_parity(&mut b, &refs, &out);
    }
    b.build().expect("compactor is well formed")
}

/// Balanced tree of 2-input XORs, or a buffer for a single input.
fn add_parity(b: &mut CircuitBuilder, ins: &[&str], out: &str) {
    match ins.len() {
        0 => unreachable!("parity of nothing"),
        1 => {
            b.add_gate(GateKind::Buf, ins, out);
        }
        2 => {
            b.add_gate(GateKind::Xor, ins, out);
        }
        _ => {
            let mut level: Vec<String> = ins.iter().map(|s| s.to_string()).collect();
            while level.len() > 2 {
                let mut next = Vec::with_capacity(level.len().div_ceil(2));
                for pair in level.chunks(2) {
                    if pair.len() == 2 {
                        let t = b.fresh_name(&format!("{out}_x"));
                        b.add_gate(GateKind::Xor, &[&pair[0], &pair[1]], &t);
                        next.push(t);
                    } else {
                        next.push(pair[0].clone());
                    }
                }
                level = next;
            }
            b.add_gate(GateKind::Xor, &[&level[0], &level[1]], out);
        }
    }
}

/// Composed one-frame platform circuit with its interface bookkeeping.
#[derive(Debug, Clone)]
pub struct PlatformModel {
    pub circuit: Circuit,
    pub topology: ScanTopology,
    /// Original primary inputs, passed through.
    pub direct_inputs: Vec<NetId>,
    /// Scan-in channel inputs, `scan_inputs[p][i]` for shift group `p`.
    pub scan_inputs: Vec<Vec<NetId>>,
    /// Original primary outputs, passed through.
    pub direct_outputs: Vec<NetId>,
    /// Compacted responses, `scan_outputs[p][g]` for shift group `p`.
    pub scan_outputs: Vec<Vec<NetId>>,
}

/// Drives the frame's state inputs through one decompressor copy per shift
/// group and compacts its next-state outputs through one compactor copy per
/// shift group. Group `p` holds the cells at chain position `p`. Unpopulated
/// cells act as plain scan cells: they pass their scan-in value to the
/// compactor unchanged.
pub fn compose_platform_frame(
    fm: &FrameModel,
    topology: &ScanTopology,
) -> Result<PlatformModel, PlatformError> {
    let n_ff = fm.ff_input_order.len();
    topology.check(n_ff)?;
    let f = &fm.frame;
    let q_nets: Vec<&str> = fm.ff_input_order.iter().map(|&n| f.net_name(n)).collect();
    let d_nets: Vec<&str> = fm.ff_output_order.iter().map(|&n| f.net_name(n)).collect();

    let mut b = CircuitBuilder::new(format!("{}_cr{}", f.name(), topology.compression_ratio));
    for n in f.net_names() {
        b.fresh_name(n);
    }
    for &pi in &f.primary_inputs()[..fm.num_original_inputs] {
        b.add_input(f.net_name(pi));
    }
    let l = topology.chain_length;
    let mut scan_in_names: Vec<Vec<String>> = Vec::with_capacity(l);
    for p in 0..l {
        let row: Vec<String> = (0..topology.external_channels)
            .map(|i| b.fresh_name(&format!("scan_in_p{p}_ch{i}")))
            .collect();
        for name in &row {
            b.add_input(name);
        }
        scan_in_names.push(row);
    }
    for &po in &f.primary_outputs()[..fm.num_original_outputs] {
        b.add_output(f.net_name(po));
    }
    let mut scan_out_names: Vec<Vec<String>> = Vec::with_capacity(l);
    for p in 0..l {
        let mut row = Vec::with_capacity(topology.external_channels);
        for g in 0..topology.external_channels {
            let out = b.fresh_name(&format!("scan_out_p{p}_ch{g}"));
            b.add_output(&out);
            row.push(out);
        }
        scan_out_names.push(row);
    }

    // decompressor copies
    for p in 0..l {
        for c in 0..topology.num_chains {
            if let Some(j) = topology.flip_flop_at(c, p, n_ff) {
                let src = scan_in_names[p][topology.channel_of(c)].clone();
                b.add_gate(GateKind::Buf, &[&src], q_nets[j]);
            }
        }
    }
    for g in f.gates() {
        let ins: Vec<&str> = g.inputs.iter().map(|&n| f.net_name(n)).collect();
        b.add_gate(g.kind, &ins, f.net_name(g.output));
    }
    // compactor copies
    let cr = topology.compression_ratio;
    for p in 0..l {
        for g in 0..topology.external_channels {
            let ins: Vec<String> = (g * cr..(g + 1) * cr)
                .map(|c| match topology.flip_flop_at(c, p, n_ff) {
                    Some(j) => d_nets[j].to_string(),
                    None => scan_in_names[p][g].clone(),
                })
                .collect();
            let refs: Vec<&str> = ins.iter().map(String::as_str).collect();
            let out = scan_out_names[p][g].clone();
            add_parity(&mut b, &refs, &out);
        }
    }

    let circuit = b.build()?;
    let look = |name: &str| circuit.net(name).expect("declared net");
    let direct_inputs = circuit.primary_inputs()[..fm.num_original_inputs].to_vec();
    let direct_outputs = circuit.primary_outputs()[..fm.num_original_outputs].to_vec();
    let scan_inputs = scan_in_names
        .iter()
        .map(|row| row.iter().map(|s| look(s)).collect())
        .collect();
    let scan_outputs = scan_out_names
        .iter()
        .map(|row| row.iter().map(|s| look(s)).collect())
        .collect();
    Ok(PlatformModel {
        circuit,
        topology: *topology,
        direct_inputs,
        scan_inputs,
        direct_outputs,
        scan_outputs,
    })
}

/// Attack model for a locked sequential design behind the given scan
/// topology, with key inputs kept as primary inputs.
pub fn platform_attack_model(
    locked: &LockedCircuit,
    topology: &ScanTopology,
) -> Result<(PlatformModel, AttackModel), PlatformError> {
    let fm = frame(locked.core());
    let pm = compose_platform_frame(&fm, topology)?;
    let key_inputs: Vec<NetId> = locked
        .key_inputs()
        .iter()
        .map(|&k| {
            pm.circuit
                .net(locked.core().net_name(k))
                .expect("key inputs survive composition")
        })
        .collect();
    let model = AttackModel::new(pm.circuit.clone(), key_inputs)?;
    Ok((pm, model))
}

/// Activated chip accessed through its scan interface. A query shifts the
/// stimulus in over `chain_length` cycles, runs one functional cycle and
/// shifts the captured state out through the compactor.
///
/// Input order matches [`platform_attack_model`]: non-key primary inputs,
/// then scan channels group by group. Output order: primary outputs, then
/// compacted channels group by group.
#[derive(Debug, Clone)]
pub struct ScanOracle {
    circuit: Circuit,
    topology: ScanTopology,
    key: LockingKey,
    key_slots: Vec<Option<usize>>,
    data_width: usize,
    queries: usize,
}

impl ScanOracle {
    pub fn new(
        locked: &LockedCircuit,
        topology: &ScanTopology,
    ) -> Result<ScanOracle, PlatformError> {
        let circuit = locked.core().clone();
        topology.check(circuit.flip_flops().len())?;
        let key_slots: Vec<Option<usize>> = circuit
            .primary_inputs()
            .iter()
            .map(|n| locked.key_inputs().iter().position(|k| k == n))
            .collect();
        let data_width = key_slots.iter().filter(|s| s.is_none()).count();
        Ok(ScanOracle {
            circuit,
            topology: *topology,
            key: locked.correct_key().clone(),
            key_slots,
            data_width,
            queries: 0,
        })
    }

    pub fn queries(&self) -> usize {
        self.queries
    }
}

impl Oracle for ScanOracle {
    fn input_width(&self) -> usize {
        self.data_width + self.topology.chain_length * self.topology.external_channels
    }

    fn output_width(&self) -> usize {
        self.circuit.primary_outputs().len()
            + self.topology.chain_length * self.topology.external_channels
    }

    fn query(&mut self, inputs: &[bool]) -> Result<Vec<bool>, SatError> {
        if inputs.len() != self.input_width() {
            return Err(SatError::OracleWidth {
                what: "inputs",
                expected: self.input_width(),
                got: inputs.len(),
            });
        }
        self.queries += 1;
        let t = &self.topology;
        let l = t.chain_length;
        let ch = t.external_channels;
        let n_ff = self.circuit.flip_flops().len();
        let (direct, scan) = inputs.split_at(self.data_width);

        // chains[c][k]: cell at position k, position 0 nearest scan-in
        let mut chains = vec![vec![false; l]; t.num_chains];
        for cycle in 0..l {
            // value shifted at this cycle ends up at position l-1-cycle
            let p = l - 1 - cycle;
            for (c, chain) in chains.iter_mut().enumerate() {
                chain.rotate_right(1);
                chain[0] = scan[p * ch + t.channel_of(c)];
            }
        }
        let state: Vec<bool> = (0..n_ff)
            .map(|j| {
                let (c, k) = t.cell_of(j);
                chains[c][k]
            })
            .collect();

        let mut pis = Vec::with_capacity(self.key_slots.len());
        let mut d = direct.iter();
        for slot in &self.key_slots {
            pis.push(match slot {
                Some(i) => self.key.bits()[*i],
                None => *d.next().unwrap(),
            });
        }
        let eval = self.circuit.evaluate(&pis, &state)?;
        for (j, &v) in eval.next_state.iter().enumerate() {
            let (c, k) = t.cell_of(j);
            chains[c][k] = v;
        }

        let mut out = eval.outputs;
        let mut compacted = vec![false; l * ch];
        for cycle in 0..l {
            // the tail cell leaves the chain; it was captured at position l-1-cycle
            let p = l - 1 - cycle;
            for (c, chain) in chains.iter_mut().enumerate() {
                compacted[p * ch + t.channel_of(c)] ^= chain[l - 1];
                chain.rotate_right(1);
                chain[0] = false;
            }
        }
        out.extend(compacted);
        Ok(out)
    }
}

/// Unrolls `frames` clock cycles: inputs are the initial state followed by
/// each frame's primary inputs; outputs are each frame's primary outputs
/// followed by the final state.
pub fn unroll(circuit: &Circuit, frames: usize) -> Result<Circuit, PlatformError> {
    let mut b = CircuitBuilder::new(format!("{}_x{frames}", circuit.name()));
    let rename = |n: NetId, f: usize| format!("{}@{f}", circuit.net_name(n));
    let q = circuit.state_nets();
    let d = circuit.next_state_nets();
    for &n in &q {
        b.add_input(&rename(n, 0));
    }
    for f in 0..frames {
        for &pi in circuit.primary_inputs() {
            b.add_input(&rename(pi, f));
        }
    }
    for f in 0..frames {
        for &po in circuit.primary_outputs() {
            b.add_output(&rename(po, f));
        }
        if f > 0 {
            for (&qn, &dn) in q.iter().zip(&d) {
                b.add_gate(GateKind::Buf, &[&rename(dn, f - 1)], &rename(qn, f));
            }
        }
        for g in circuit.gates() {
            if g.kind == GateKind::Dff {
                continue;
            }
            let ins: Vec<String> = g.inputs.iter().map(|&n| rename(n, f)).collect();
            let refs: Vec<&str> = ins.iter().map(String::as_str).collect();
            b.add_gate(g.kind, &refs, &rename(g.output, f));
        }
    }
    if frames > 0 {
        for &dn in &d {
            b.add_output(&rename(dn, frames - 1));
        }
    }
    Ok(b.build()?)
}
