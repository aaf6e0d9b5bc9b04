// SPDX-License-Identifier: Apache-2.0

//! Random XOR/XNOR logic locking and the IP-piracy metrics computed on
//! locked netlists: output corruptibility, key error rate, input error rate.
//!
//! All metrics use the combinational view of the netlist: DFF outputs
//! count as inputs and DFF inputs as outputs, so a sequential design is
//! judged one clock cycle at a time. An output is corrupted when any
//! output bit differs from the correctly keyed response.

use std::fmt;
use std::str::FromStr;

use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::netlist::{
    extract_metadata, is_key_input_name, Circuit, CircuitMetadata, Driver, Evaluation, GateKind,
    NetId, NetlistError, KEY_INPUT_PREFIX,
};

#[derive(Debug, Error)]
pub enum LockingError {
    #[error("key length {requested} exceeds the {available} lockable nets")]
    TooManyKeyBits { requested: usize, available: usize },
    #[error("a locking key needs at least one bit")]
    EmptyKey,
    #[error("key has {got} bits, locked circuit expects {expected}")]
    KeyLengthMismatch { expected: usize, got: usize },
    #[error("invalid key string: {0}")]
    InvalidKey(String),
    #[error("net `{0}` is not a lockable gate output")]
    NotLockable(String),
    #[error("circuit already has a net named `{0}`")]
    NameCollision(String),
    #[error("{what} space of 2^{bits} is over the exhaustive limit 2^{limit}")]
    TooLarge {
        what: &'static str,
        bits: usize,
        limit: usize,
    },
    #[error("circuit has no `{KEY_INPUT_PREFIX}<N>` inputs")]
    NoKeyInputs,
    #[error(transparent)]
    Netlist(#[from] NetlistError),
}

/// Ordered key bits; bit `i` drives `keyinput<i>`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct LockingKey {
    bits: Vec<bool>,
}

impl LockingKey {
    pub fn new(bits: Vec<bool>) -> Result<LockingKey, LockingError> {
        if bits.is_empty() {
            return Err(LockingError::EmptyKey);
        }
        Ok(LockingKey { bits })
    }

    /// Key whose bit `i` is bit `i` of `index`.
    pub fn from_index(index: u64, len: usize) -> LockingKey {
        assert!(len >= 1 && len <= 64);
        LockingKey {
            bits: (0..len).map(|i| (index >> i) & 1 == 1).collect(),
        }
    }

    pub fn to_index(&self) -> u64 {
        assert!(self.bits.len() <= 64);
        self.bits
            .iter()
            .enumerate()
            .fold(0, |acc, (i, &b)| acc | ((b as u64) << i))
    }

    pub fn random<R: Rng>(len: usize, rng: &mut R) -> LockingKey {
        LockingKey {
            bits: (0..len.max(1)).map(|_| rng.gen()).collect(),
        }
    }

    pub fn bits(&self) -> &[bool] {
        &self.bits
    }

    pub fn len(&self) -> usize {
        self.bits.len()
    }

    pub fn is_empty(&self) -> bool {
        self.bits.is_empty()
    }
}

impl fmt::Display for LockingKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for &b in &self.bits {
            f.write_str(if b { "1" } else { "0" })?;
        }
        Ok(())
    }
}

impl FromStr for LockingKey {
    type Err = LockingError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let bits = s
            .trim()
            .chars()
            .map(|c| match c {
                '0' => Ok(false),
                '1' => Ok(true),
                other => Err(LockingError::InvalidKey(format!(
                    "unexpected character `{other}`"
                ))),
            })
            .collect::<Result<Vec<_>, _>>()?;
        LockingKey::new(bits)
    }
}

impl Serialize for LockingKey {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for LockingKey {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct LockSite {
    /// The locked net in the core netlist (now driven by the key gate).
    pub net: NetId,
    pub kind: GateKind,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum InputSlot {
    Data(usize),
    Key(usize),
}

/// A netlist with key inputs and its correct key.
#[derive(Debug, Clone)]
pub struct LockedCircuit {
    core: Circuit,
    data_inputs: Vec<NetId>,
    key_inputs: Vec<NetId>,
    correct_key: LockingKey,
    lock_sites: Vec<LockSite>,
    slots: Vec<InputSlot>,
}

impl LockedCircuit {
    /// Wraps a netlist whose key inputs are named `keyinput<N>`. Lock sites
    /// are recovered from XOR/XNOR gates fed directly by a key input.
    pub fn from_parts(
        core: Circuit,
        correct_key: LockingKey,
    ) -> Result<LockedCircuit, LockingError> {
        let mut keyed: Vec<(usize, NetId)> = core
            .primary_inputs()
            .iter()
            .filter_map(|&n| {
                let name = core.net_name(n);
                if is_key_input_name(name) {
                    name[KEY_INPUT_PREFIX.len()..]
                        .parse::<usize>()
                        .ok()
                        .map(|i| (i, n))
                } else {
                    None
                }
            })
            .collect();
        if keyed.is_empty() {
            return Err(LockingError::NoKeyInputs);
        }
        keyed.sort();
        let key_inputs: Vec<NetId> = keyed.into_iter().map(|(_, n)| n).collect();
        if key_inputs.len() != correct_key.len() {
            return Err(LockingError::KeyLengthMismatch {
                expected: key_inputs.len(),
                got: correct_key.len(),
            });
        }
        let lock_sites = key_inputs
            .iter()
            .filter_map(|&k| {
                core.fanout(k).iter().find_map(|&g| {
                    let gate = core.gate(g);
                    matches!(gate.kind, GateKind::Xor | GateKind::Xnor).then_some(LockSite {
                        net: gate.output,
                        kind: gate.kind,
                    })
                })
            })
            .collect();
        Ok(Self::assemble(core, key_inputs, correct_key, lock_sites))
    }

    fn assemble(
        core: Circuit,
        key_inputs: Vec<NetId>,
        correct_key: LockingKey,
        lock_sites: Vec<LockSite>,
    ) -> LockedCircuit {
        let mut slots = Vec::with_capacity(core.primary_inputs().len());
        let mut data_inputs = Vec::new();
        for &pi in core.primary_inputs() {
            match key_inputs.iter().position(|&k| k == pi) {
                Some(i) => slots.push(InputSlot::Key(i)),
                None => {
                    slots.push(InputSlot::Data(data_inputs.len()));
                    data_inputs.push(pi);
                }
            }
        }
        LockedCircuit {
            core,
            data_inputs,
            key_inputs,
            correct_key,
            lock_sites,
            slots,
        }
    }

    pub fn core(&self) -> &Circuit {
        &self.core
    }

    pub fn data_inputs(&self) -> &[NetId] {
        &self.data_inputs
    }

    pub fn key_inputs(&self) -> &[NetId] {
        &self.key_inputs
    }

    pub fn correct_key(&self) -> &LockingKey {
        &self.correct_key
    }

    pub fn lock_sites(&self) -> &[LockSite] {
        &self.lock_sites
    }

    pub fn key_len(&self) -> usize {
        self.key_inputs.len()
    }

    pub fn metadata(&self) -> CircuitMetadata {
        extract_metadata(&self.core, self.key_len())
    }

    fn check_key(&self, key: &LockingKey) -> Result<(), LockingError> {
        if key.len() != self.key_len() {
            return Err(LockingError::KeyLengthMismatch {
                expected: self.key_len(),
                got: key.len(),
            });
        }
        Ok(())
    }

    /// Interleaves data inputs and key bits into core primary-input order.
    pub fn core_inputs(
        &self,
        key: &LockingKey,
        inputs: &[bool],
    ) -> Result<Vec<bool>, LockingError> {
        self.check_key(key)?;
        if inputs.len() != self.data_inputs.len() {
            return Err(NetlistError::MissingAssignment {
                what: "primary input",
                expected: self.data_inputs.len(),
                got: inputs.len(),
            }
            .into());
        }
        Ok(self
            .slots
            .iter()
            .map(|s| match *s {
                InputSlot::Data(i) => inputs[i],
                InputSlot::Key(i) => key.bits()[i],
            })
            .collect())
    }

    /// Evaluates the core with `key` bound to the key inputs.
    pub fn evaluate_locked(
        &self,
        key: &LockingKey,
        inputs: &[bool],
        state: &[bool],
    ) -> Result<Evaluation, LockingError> {
        let pis = self.core_inputs(key, inputs)?;
        Ok(self.core.evaluate(&pis, state)?)
    }

    /// Width of the combinational input space: data inputs plus DFF state.
    pub fn observable_input_width(&self) -> usize {
        self.data_inputs.len() + self.core.flip_flops().len()
    }

    /// Bit-parallel combinational response (POs then next state) with
    /// data/state words in `pattern` order and key words per key input.
    fn respond_words(&self, pattern: &[u64], key_words: &[u64]) -> Vec<u64> {
        let n_data = self.data_inputs.len();
        let pis: Vec<u64> = self
            .slots
            .iter()
            .map(|s| match *s {
                InputSlot::Data(i) => pattern[i],
                InputSlot::Key(i) => key_words[i],
            })
            .collect();
        let values = self
            .core
            .simulate_words(&pis, &pattern[n_data..])
            .expect("widths are consistent by construction");
        self.core
            .primary_outputs()
            .iter()
            .copied()
            .chain(self.core.next_state_nets())
            .map(|n| values[n])
            .collect()
    }
}

fn key_words(key: &LockingKey) -> Vec<u64> {
    key.bits().iter().map(|&b| if b { !0 } else { 0 }).collect()
}

/// Input words for patterns `block*64 .. block*64+63` of an exhaustive
/// enumeration over `width` bits (pattern index bit `i` = input `i`).
fn enumeration_words(width: usize, block: u64) -> Vec<u64> {
    const LOW: [u64; 6] = [
        0xAAAA_AAAA_AAAA_AAAA,
        0xCCCC_CCCC_CCCC_CCCC,
        0xF0F0_F0F0_F0F0_F0F0,
        0xFF00_FF00_FF00_FF00,
        0xFFFF_0000_FFFF_0000,
        0xFFFF_FFFF_0000_0000,
    ];
    (0..width)
        .map(|i| {
            if i < 6 {
                LOW[i]
            } else if (block >> (i - 6)) & 1 == 1 {
                !0
            } else {
                0
            }
        })
        .collect()
}

fn valid_mask(width: usize) -> u64 {
    if width >= 6 {
        !0
    } else {
        (1u64 << (1u64 << width)) - 1
    }
}

fn num_blocks(width: usize) -> u64 {
    if width >= 6 {
        1u64 << (width - 6)
    } else {
        1
    }
}

fn mismatch_word(a: &[u64], b: &[u64]) -> u64 {
    a.iter().zip(b).fold(0, |acc, (x, y)| acc | (x ^ y))
}

/// Inserts `k` key gates on distinct, uniformly chosen gate-output nets.
/// Key bit 0 gives an XOR gate and bit 1 an XNOR gate, so the correct key
/// restores the original polarity.
pub fn insert_random_locking(
    circuit: &Circuit,
    k: usize,
    seed: u64,
) -> Result<LockedCircuit, LockingError> {
    let lockable = lockable_nets(circuit);
    if k == 0 {
        return Err(LockingError::EmptyKey);
    }
    if k > lockable.len() {
        return Err(LockingError::TooManyKeyBits {
            requested: k,
            available: lockable.len(),
        });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let picks = sample(&mut rng, lockable.len(), k);
    let sites: Vec<(NetId, bool)> = picks
        .iter()
        .map(|i| (lockable[i], rng.gen::<bool>()))
        .collect();
    lock_at_sites(circuit, &sites)
}

/// Outputs of combinational gates, in gate order.
pub fn lockable_nets(circuit: &Circuit) -> Vec<NetId> {
    circuit
        .gates()
        .iter()
        .filter(|g| g.kind != GateKind::Dff)
        .map(|g| g.output)
        .collect()
}

/// Locks the given `(net, key bit)` sites; site `i` is controlled by `keyinput<i>`.
pub fn lock_at_sites(
    circuit: &Circuit,
    sites: &[(NetId, bool)],
) -> Result<LockedCircuit, LockingError> {
    if sites.is_empty() {
        return Err(LockingError::EmptyKey);
    }
    let mut site_of = vec![None; circuit.num_nets()];
    for (i, &(net, bit)) in sites.iter().enumerate() {
        let lockable =
            matches!(circuit.driver(net), Driver::Gate(g) if circuit.gate(g).kind != GateKind::Dff);
        if !lockable || site_of[net].is_some() {
            return Err(LockingError::NotLockable(circuit.net_name(net).to_string()));
        }
        site_of[net] = Some((i, bit));
    }

    let mut names = circuit.to_builder();
    let key_names: Vec<String> = (0..sites.len())
        .map(|i| format!("{KEY_INPUT_PREFIX}{i}"))
        .collect();
    for name in &key_names {
        if names.is_used(name) {
            return Err(LockingError::NameCollision(name.clone()));
        }
    }
    // rebuild from scratch so key gates sit right after their sites
    let mut out = crate::netlist::CircuitBuilder::new(circuit.name());
    for &pi in circuit.primary_inputs() {
        out.add_input(circuit.net_name(pi));
    }
    for name in &key_names {
        out.add_input(name);
    }
    for &po in circuit.primary_outputs() {
        out.add_output(circuit.net_name(po));
    }
    for g in circuit.gates() {
        let ins: Vec<&str> = g.inputs.iter().map(|&n| circuit.net_name(n)).collect();
        let net_name = circuit.net_name(g.output);
        match site_of[g.output] {
            None => {
                out.add_gate(g.kind, &ins, net_name);
            }
            Some((i, bit)) => {
                let inner = names.fresh_name(&format!("{net_name}_lk"));
                out.add_gate(g.kind, &ins, &inner);
                let kind = if bit { GateKind::Xnor } else { GateKind::Xor };
                out.add_gate(kind, &[&inner, &key_names[i]], net_name);
            }
        }
    }
    let core = out.build()?;
    let key_inputs: Vec<NetId> = key_names.iter().map(|n| core.net(n).unwrap()).collect();
    let lock_sites = sites
        .iter()
        .map(|&(net, bit)| LockSite {
            net: core.net(circuit.net_name(net)).unwrap(),
            kind: if bit { GateKind::Xnor } else { GateKind::Xor },
        })
        .collect();
    let key = LockingKey::new(sites.iter().map(|&(_, b)| b).collect())?;
    Ok(LockedCircuit::assemble(core, key_inputs, key, lock_sites))
}

/// Output corruptibility estimate with the sample counts behind it.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Corruptibility {
    pub value: f64,
    /// Input patterns evaluated per wrong key.
    pub input_samples: u64,
    /// Wrong keys evaluated.
    pub key_samples: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum CorruptibilityMode {
    Exhaustive,
    Sampled { inputs: u64, keys: u64, seed: u64 },
}

pub const EXHAUSTIVE_CR_LIMIT: usize = 24;
pub const EXHAUSTIVE_KER_LIMIT: usize = 20;
pub const EXHAUSTIVE_IER_LIMIT: usize = 20;

/// Probability that a wrong key corrupts the output of a random input.
pub fn compute_output_corruptibility(
    locked: &LockedCircuit,
    mode: CorruptibilityMode,
) -> Result<Corruptibility, LockingError> {
    let n = locked.observable_input_width();
    let k = locked.key_len();
    match mode {
        CorruptibilityMode::Exhaustive => {
            if n + k > EXHAUSTIVE_CR_LIMIT {
                return Err(LockingError::TooLarge {
                    what: "input x key",
                    bits: n + k,
                    limit: EXHAUSTIVE_CR_LIMIT,
                });
            }
            let correct = locked.correct_key().to_index();
            let mask = valid_mask(n);
            let wrong_keys: Vec<Vec<u64>> = (0..1u64 << k)
                .filter(|&w| w != correct)
                .map(|w| key_words(&LockingKey::from_index(w, k)))
                .collect();
            let reference_key = key_words(locked.correct_key());
            let corrupted: u64 = (0..num_blocks(n))
                .into_par_iter()
                .map(|block| {
                    let pattern = enumeration_words(n, block);
                    let reference = locked.respond_words(&pattern, &reference_key);
                    wrong_keys
                        .iter()
                        .map(|kw| {
                            let resp = locked.respond_words(&pattern, kw);
                            (mismatch_word(&resp, &reference) & mask).count_ones() as u64
                        })
                        .sum::<u64>()
                })
                .sum();
            let inputs = 1u64 << n;
            let keys = (1u64 << k) - 1;
            Ok(Corruptibility {
                value: corrupted as f64 / (inputs as f64 * keys as f64),
                input_samples: inputs,
                key_samples: keys,
            })
        }
        CorruptibilityMode::Sampled { inputs, keys, seed } => {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let reference_key = key_words(locked.correct_key());
            let mut corrupted = 0u64;
            for _ in 0..keys {
                let wrong = loop {
                    let cand = LockingKey::random(k, &mut rng);
                    if &cand != locked.correct_key() {
                        break cand;
                    }
                };
                let kw = key_words(&wrong);
                let mut left = inputs;
                while left > 0 {
                    let take = left.min(64);
                    let pattern: Vec<u64> = (0..n).map(|_| rng.gen()).collect();
                    let mask = if take == 64 { !0 } else { (1u64 << take) - 1 };
                    let a = locked.respond_words(&pattern, &kw);
                    let b = locked.respond_words(&pattern, &reference_key);
                    corrupted += (mismatch_word(&a, &b) & mask).count_ones() as u64;
                    left -= take;
                }
            }
            let total = inputs as f64 * keys as f64;
            Ok(Corruptibility {
                value: if total > 0.0 {
                    corrupted as f64 / total
                } else {
                    0.0
                },
                input_samples: inputs,
                key_samples: keys,
            })
        }
    }
}

/// Fraction of input minterms corrupted by `key`.
pub fn compute_ker(locked: &LockedCircuit, key: &LockingKey) -> Result<f64, LockingError> {
    locked.check_key(key)?;
    let n = locked.observable_input_width();
    if n > EXHAUSTIVE_KER_LIMIT {
        return Err(LockingError::TooLarge {
            what: "input",
            bits: n,
            limit: EXHAUSTIVE_KER_LIMIT,
        });
    }
    let kw = key_words(key);
    let reference_key = key_words(locked.correct_key());
    let mask = valid_mask(n);
    let corrupted: u64 = (0..num_blocks(n))
        .into_par_iter()
        .map(|block| {
            let pattern = enumeration_words(n, block);
            let a = locked.respond_words(&pattern, &kw);
            let b = locked.respond_words(&pattern, &reference_key);
            (mismatch_word(&a, &b) & mask).count_ones() as u64
        })
        .sum();
    Ok(corrupted as f64 / (1u64 << n) as f64)
}

/// Fraction of the wrong keys that corrupt `minterm` (data inputs then
/// DFF state).
pub fn compute_ier(locked: &LockedCircuit, minterm: &[bool]) -> Result<f64, LockingError> {
    let n = locked.observable_input_width();
    let k = locked.key_len();
    if minterm.len() != n {
        return Err(NetlistError::MissingAssignment {
            what: "minterm",
            expected: n,
            got: minterm.len(),
        }
        .into());
    }
    if k > EXHAUSTIVE_IER_LIMIT {
        return Err(LockingError::TooLarge {
            what: "key",
            bits: k,
            limit: EXHAUSTIVE_IER_LIMIT,
        });
    }
    let pattern: Vec<u64> = minterm.iter().map(|&b| if b { !0 } else { 0 }).collect();
    let reference = locked.respond_words(&pattern, &key_words(locked.correct_key()));
    let correct = locked.correct_key().to_index();
    let mut corrupted = 0u64;
    for block in 0..num_blocks(k) {
        let kw = enumeration_words(k, block);
        let resp = locked.respond_words(&pattern, &kw);
        let mut hits = mismatch_word(&resp, &reference) & valid_mask(k);
        // the correct key never corrupts, but mask it anyway
        if correct >> 6 == block {
            hits &= !(1u64 << (correct & 63));
        }
        corrupted += hits.count_ones() as u64;
    }
    Ok(corrupted as f64 / ((1u64 << k) - 1) as f64)
}
