// SPDX-License-Identifier: Apache-2.0

//! Assurance metric calculators: probabilistic controllability and
//! observability, observation hardness, FSM fault-injection vulnerability,
//! PUF Hamming distances and counterfeit defect coverage.
//!
//! Sequential circuits are handled in their framed view: flip-flop outputs
//! act as extra primary inputs and flip-flop data pins as extra primary
//! outputs.

use std::io::Read;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::netlist::{Circuit, GateKind, NetId};
use crate::Scalar;

/// Truth tables are enumerated up to this fan-in.
pub const MAX_FANIN: usize = 16;

#[derive(Debug, Error, PartialEq)]
pub enum AssuranceError {
    #[error("gate driving {net} has fan-in {fanin}, limit is {MAX_FANIN}")]
    FanIn { net: String, fanin: usize },
    #[error("unknown net {0}")]
    UnknownNet(String),
    #[error("there are no transitions")]
    NoTransitions,
    #[error("{0}")]
    InvalidDelays(String),
    #[error("responses have different lengths ({0} and {1} bits)")]
    LengthMismatch(usize, usize),
    #[error("at least {0} responses are required")]
    TooFewResponses(usize),
    #[error("invalid hex response {0:?}")]
    Hex(String),
    #[error("all defect frequencies are zero")]
    ZeroFrequency,
    #[error("{0}")]
    InvalidInput(String),
    #[error("csv: {0}")]
    Csv(String),
}

impl From<csv::Error> for AssuranceError {
    fn from(e: csv::Error) -> Self {
        AssuranceError::Csv(e.to_string())
    }
}

/// Normalization of the controllability transfer function.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CtfForm {
    /// `1 - |N(0) - N(1)| / 2` with N as fractions of the input space.
    #[default]
    Fractional,
    /// `1 - |N(0) - N(1)| / (N(0) + N(1))`.
    Classical,
}

fn check_fanin(c: &Circuit) -> Result<(), AssuranceError> {
    for &g in c.topo_order() {
        let gate = c.gate(g);
        if gate.inputs.len() > MAX_FANIN {
            return Err(AssuranceError::FanIn {
                net: c.net_name(gate.output).to_string(),
                fanin: gate.inputs.len(),
            });
        }
    }
    Ok(())
}

fn truth_table(kind: GateKind, n: usize) -> Vec<bool> {
    (0..1usize << n)
        .map(|p| kind.eval((0..n).map(|i| p >> i & 1 == 1)))
        .collect()
}

/// CTF of a gate with `n` inputs.
pub fn ctf<T: Scalar>(kind: GateKind, n: usize, form: CtfForm) -> T {
    let tt = truth_table(kind, n);
    let size = T::from_usize_lossy(tt.len());
    let n1 = T::from_usize_lossy(tt.iter().filter(|&&b| b).count()) / size;
    let n0 = T::one() - n1;
    let diff = (n0 - n1).abs();
    match form {
        CtfForm::Fractional => T::one() - diff / T::two(),
        CtfForm::Classical => T::one() - diff / (n0 + n1),
    }
}

/// OTF of a gate with `n` inputs: mean over inputs of the fraction of
/// input patterns on which flipping that input flips the output.
pub fn otf<T: Scalar>(kind: GateKind, n: usize) -> T {
    if n == 0 {
        return T::zero();
    }
    let tt = truth_table(kind, n);
    let size = T::from_usize_lossy(tt.len());
    let per_input: T = (0..n)
        .map(|i| {
            let ns = (0..tt.len()).filter(|&p| tt[p] != tt[p ^ (1 << i)]).count();
            T::from_usize_lossy(ns) / size
        })
        .sum();
    per_input / T::from_usize_lossy(n)
}

/// Per-net controllability. Inputs (and flip-flop outputs) have CY = 1;
/// a gate output has CY = CTF x mean input CY.
pub fn controllability<T: Scalar>(c: &Circuit, form: CtfForm) -> Result<Vec<T>, AssuranceError> {
    check_fanin(c)?;
    let mut cy = vec![T::one(); c.num_nets()];
    for &g in c.topo_order() {
        let gate = c.gate(g);
        let n = gate.inputs.len();
        let mean = gate.inputs.iter().map(|&i| cy[i]).sum::<T>() / T::from_usize_lossy(n.max(1));
        cy[gate.output] = ctf::<T>(gate.kind, n, form) * mean;
    }
    Ok(cy)
}

/// Per-net observability. Outputs (and flip-flop data pins) have OY = 1;
/// any other net averages `OTF x OY(output)` over the gates reading it.
/// Nets nobody reads get 0.
pub fn observability<T: Scalar>(c: &Circuit) -> Result<Vec<T>, AssuranceError> {
    check_fanin(c)?;
    let mut observed = vec![false; c.num_nets()];
    for &o in c.primary_outputs().iter().chain(&c.next_state_nets()) {
        observed[o] = true;
    }
    let mut oy = vec![T::zero(); c.num_nets()];
    let gate_otf: Vec<T> = c
        .gates()
        .iter()
        .map(|g| otf::<T>(g.kind, g.inputs.len()))
        .collect();
    let mut order: Vec<NetId> = c.topo_order().iter().map(|&g| c.gate(g).output).collect();
    order.reverse();
    let sources = c.primary_inputs().iter().copied().chain(c.state_nets());
    for net in order.into_iter().chain(sources) {
        if observed[net] {
            oy[net] = T::one();
            continue;
        }
        let readers: Vec<_> = c
            .fanout(net)
            .iter()
            .filter(|&&g| c.gate(g).kind != GateKind::Dff)
            .collect();
        if readers.is_empty() {
            continue;
        }
        let total: T = readers
            .iter()
            .map(|&&g| gate_otf[g] * oy[c.gate(g).output])
            .sum();
        oy[net] = total / T::from_usize_lossy(readers.len());
    }
    Ok(oy)
}

/// Fraction of primary-input stuck-at faults (both polarities) whose
/// effect reaches `node` on at least one pattern. With `n_patterns` at
/// least `2^inputs` (and no flip-flops) every pattern is enumerated;
/// otherwise patterns are drawn from ChaCha8 seeded with `seed`.
pub fn observation_hardness<T: Scalar>(
    c: &Circuit,
    node: &str,
    n_patterns: usize,
    seed: u64,
) -> Result<T, AssuranceError> {
    let target = c
        .net(node)
        .ok_or_else(|| AssuranceError::UnknownNet(node.to_string()))?;
    let npi = c.primary_inputs().len();
    if npi == 0 {
        return Ok(T::zero());
    }
    let nstate = c.flip_flops().len();
    let exhaustive = nstate == 0 && npi < 32 && n_patterns >= 1usize << npi;
    let total = if exhaustive {
        1usize << npi
    } else {
        n_patterns.max(1)
    };
    let words = total.div_ceil(64);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let batches: Vec<(Vec<u64>, Vec<u64>, u64)> = (0..words)
        .map(|w| {
            let valid = (total - w * 64).min(64);
            let mask = if valid == 64 {
                u64::MAX
            } else {
                (1u64 << valid) - 1
            };
            let inputs = if exhaustive {
                (0..npi)
                    .map(|i| {
                        let mut v = 0u64;
                        for b in 0..valid {
                            let p = w * 64 + b;
                            v |= ((p >> i & 1) as u64) << b;
                        }
                        v
                    })
                    .collect()
            } else {
                (0..npi).map(|_| rng.gen::<u64>()).collect()
            };
            let state = (0..nstate).map(|_| rng.gen::<u64>()).collect();
            (inputs, state, mask)
        })
        .collect();
    let good: Vec<u64> = batches
        .iter()
        .map(|(i, s, _)| c.simulate_words(i, s).map(|v| v[target]))
        .collect::<Result<_, _>>()
        .map_err(|e| AssuranceError::InvalidInput(e.to_string()))?;
    let faults: Vec<(NetId, u64)> = c
        .primary_inputs()
        .iter()
        .flat_map(|&pi| [(pi, 0u64), (pi, u64::MAX)])
        .collect();
    let detected = faults
        .par_iter()
        .filter(|&&fault| {
            batches.iter().zip(&good).any(|((i, s, mask), g)| {
                let v = c
                    .simulate_words_forced(i, s, Some(fault))
                    .expect("widths checked by the fault-free run");
                (v[target] ^ g) & mask != 0
            })
        })
        .count();
    Ok(T::from_usize_lossy(detected) / T::from_usize_lossy(2 * npi))
}

/// One FSM transition with its path-delay sets.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FsmTransition<T> {
    pub from: String,
    pub to: String,
    pub vulnerable: bool,
    /// Delays of violated paths.
    pub pv: Vec<T>,
    /// Delays of non-violated paths.
    pub po: Vec<T>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FsmSpec<T> {
    pub transitions: Vec<FsmTransition<T>>,
    /// Path delays of the full design.
    pub p_fs: Vec<T>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FsmVulnerability<T> {
    /// Vulnerable transitions as a percentage of all transitions.
    pub pvt_percent: T,
    /// Average susceptibility; `None` when no transition is vulnerable.
    pub asf: Option<T>,
    /// `(transition index, SF)` for each vulnerable transition.
    pub susceptibility: Vec<(usize, T)>,
}

impl<T: Scalar> FsmSpec<T> {
    /// Reads `from,to,vulnerable,pv,po` rows; delay sets are
    /// `;`-separated and may be empty for non-vulnerable transitions.
    pub fn read_transitions<R: Read>(
        reader: R,
        p_fs: Vec<T>,
    ) -> Result<FsmSpec<T>, AssuranceError> {
        let mut rd = csv::Reader::from_reader(reader);
        let mut transitions = Vec::new();
        for (row, rec) in rd.records().enumerate() {
            let rec = rec?;
            if rec.len() != 5 {
                return Err(AssuranceError::InvalidInput(format!(
                    "transition row {} has {} fields, expected 5",
                    row + 1,
                    rec.len()
                )));
            }
            let vulnerable = match rec[2].trim().to_ascii_lowercase().as_str() {
                "1" | "true" | "yes" => true,
                "0" | "false" | "no" => false,
                other => {
                    return Err(AssuranceError::InvalidInput(format!(
                        "bad vulnerable flag {other:?}"
                    )))
                }
            };
            transitions.push(FsmTransition {
                from: rec[0].trim().to_string(),
                to: rec[1].trim().to_string(),
                vulnerable,
                pv: parse_delays(&rec[3])?,
                po: parse_delays(&rec[4])?,
            });
        }
        Ok(FsmSpec { transitions, p_fs })
    }
}

/// Parses a `;`- or `,`-separated delay list.
pub fn parse_delays<T: Scalar>(s: &str) -> Result<Vec<T>, AssuranceError> {
    s.split([';', ','])
        .map(str::trim)
        .filter(|x| !x.is_empty())
        .map(|x| {
            x.parse::<f64>()
                .map(T::from_f64_lossy)
                .map_err(|_| AssuranceError::InvalidDelays(format!("bad delay {x:?}")))
        })
        .collect()
}

/// PVT = vulnerable/total (percent), SF = (min PV - max PO) / mean P_FS
/// per vulnerable transition, ASF = mean SF.
pub fn fsm_fi_vulnerability<T: Scalar>(
    spec: &FsmSpec<T>,
) -> Result<FsmVulnerability<T>, AssuranceError> {
    if spec.transitions.is_empty() {
        return Err(AssuranceError::NoTransitions);
    }
    let positive = |v: &[T]| v.iter().all(|&d| d > T::zero());
    if !positive(&spec.p_fs) {
        return Err(AssuranceError::InvalidDelays(
            "design delays must be positive".into(),
        ));
    }
    let mut susceptibility = Vec::new();
    for (i, t) in spec
        .transitions
        .iter()
        .enumerate()
        .filter(|(_, t)| t.vulnerable)
    {
        if t.pv.is_empty() {
            return Err(AssuranceError::InvalidDelays(format!(
                "vulnerable transition {} -> {} has no violated paths",
                t.from, t.to
            )));
        }
        if !positive(&t.pv) || !positive(&t.po) {
            return Err(AssuranceError::InvalidDelays(
                "delays must be positive".into(),
            ));
        }
        if spec.p_fs.is_empty() {
            return Err(AssuranceError::InvalidDelays(
                "design delay set is empty".into(),
            ));
        }
        let min_pv = t.pv.iter().copied().fold(T::infinity(), T::min);
        let max_po = t.po.iter().copied().fold(T::zero(), T::max);
        let avg = crate::scalar::mean(&spec.p_fs);
        susceptibility.push((i, (min_pv - max_po) / avg));
    }
    let hundred = T::from_f64_lossy(100.0);
    let vt = T::from_usize_lossy(susceptibility.len());
    let pvt_percent = vt / T::from_usize_lossy(spec.transitions.len()) * hundred;
    let asf =
        (!susceptibility.is_empty()).then(|| susceptibility.iter().map(|s| s.1).sum::<T>() / vt);
    Ok(FsmVulnerability {
        pvt_percent,
        asf,
        susceptibility,
    })
}

/// A PUF response as a bit vector.
pub type Response = Vec<bool>;

/// Parses a hex string (optional `0x`, `_` separators ignored), most
/// significant nibble first.
pub fn parse_hex_response(s: &str) -> Result<Response, AssuranceError> {
    let t = s.trim();
    let t = t
        .strip_prefix("0x")
        .or_else(|| t.strip_prefix("0X"))
        .unwrap_or(t);
    let mut bits = Vec::with_capacity(t.len() * 4);
    for ch in t.chars().filter(|&c| c != '_') {
        let d = ch
            .to_digit(16)
            .ok_or_else(|| AssuranceError::Hex(s.to_string()))?;
        bits.extend((0..4).rev().map(|i| d >> i & 1 == 1));
    }
    if bits.is_empty() {
        return Err(AssuranceError::Hex(s.to_string()));
    }
    Ok(bits)
}

/// One response per non-empty, non-comment line.
pub fn read_hex_responses(text: &str) -> Result<Vec<Response>, AssuranceError> {
    text.lines()
        .map(str::trim)
        .filter(|l| !l.is_empty() && !l.starts_with('#'))
        .map(parse_hex_response)
        .collect()
}

fn hamming(a: &[bool], b: &[bool]) -> Result<usize, AssuranceError> {
    if a.len() != b.len() {
        return Err(AssuranceError::LengthMismatch(a.len(), b.len()));
    }
    Ok(a.iter().zip(b).filter(|(x, y)| x != y).count())
}

/// Mean pairwise Hamming distance as a percentage of the response length.
pub fn puf_inter_hd<T: Scalar>(responses: &[Response]) -> Result<T, AssuranceError> {
    let n = responses.len();
    if n < 2 {
        return Err(AssuranceError::TooFewResponses(2));
    }
    let k = responses[0].len();
    let mut sum = T::zero();
    for i in 0..n {
        for j in i + 1..n {
            sum = sum
                + T::from_usize_lossy(hamming(&responses[i], &responses[j])?)
                    / T::from_usize_lossy(k);
        }
    }
    let pairs = T::from_usize_lossy(n * (n - 1)) / T::two();
    Ok(sum / pairs * T::from_f64_lossy(100.0))
}

/// Mean Hamming distance of repeated responses from the reference, in
/// percent of the response length.
pub fn puf_intra_hd<T: Scalar>(
    reference: &[bool],
    samples: &[Response],
) -> Result<T, AssuranceError> {
    if samples.is_empty() {
        return Err(AssuranceError::TooFewResponses(1));
    }
    let k = T::from_usize_lossy(reference.len());
    let mut sum = T::zero();
    for s in samples {
        sum = sum + T::from_usize_lossy(hamming(reference, s)?) / k;
    }
    Ok(sum / T::from_usize_lossy(samples.len()) * T::from_f64_lossy(100.0))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Defect<T> {
    /// Detection confidence in [0, 1].
    pub confidence: T,
    /// Relative frequency of the defect.
    pub frequency: T,
}

/// Frequency-weighted detection confidence, in percent.
pub fn cdc<T: Scalar>(defects: &[Defect<T>]) -> Result<T, AssuranceError> {
    let mut num = T::zero();
    let mut den = T::zero();
    for d in defects {
        if !(d.confidence >= T::zero() && d.confidence <= T::one()) || !(d.frequency >= T::zero()) {
            return Err(AssuranceError::InvalidInput(
                "confidences must lie in [0, 1] and frequencies be non-negative".into(),
            ));
        }
        num = num + d.confidence * d.frequency;
        den = den + d.frequency;
    }
    if den == T::zero() {
        return Err(AssuranceError::ZeroFrequency);
    }
    Ok(num / den * T::from_f64_lossy(100.0))
}

/// Reads `confidence,frequency` rows (header required).
pub fn read_defects<T: Scalar, R: Read>(reader: R) -> Result<Vec<Defect<T>>, AssuranceError> {
    let mut rd = csv::Reader::from_reader(reader);
    let mut out = Vec::new();
    for rec in rd.records() {
        let rec = rec?;
        let field = |i: usize| -> Result<T, AssuranceError> {
            rec.get(i)
                .and_then(|s| s.trim().parse::<f64>().ok())
                .map(T::from_f64_lossy)
                .ok_or_else(|| AssuranceError::InvalidInput(format!("bad defect row {:?}", rec)))
        };
        out.push(Defect {
            confidence: field(0)?,
            frequency: field(1)?,
        });
    }
    Ok(out)
}
