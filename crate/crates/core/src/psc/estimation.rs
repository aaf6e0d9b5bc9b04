// SPDX-License-Identifier: Apache-2.0

//! Side-channel estimation from a database of pre-simulated benchmark
//! profiles. Each IP of a subsystem is mapped to the most similar database
//! entry and the subsystem trace is composed from the AES samples plus
//! draws from the mapped profiles.

use std::cmp::Ordering;
use std::fs;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::netlist::{Circuit, CircuitBuilder, GateKind, NetlistError};
use crate::power::{simulate_circuit_toggles, Granularity, SubsystemTrace, SwitchingProfile};
use crate::Scalar;

use super::metrics::{js_from_samples, security_score, MetricError, ScoreThresholds};

#[derive(Debug, Error)]
pub enum PscEstimationError {
    #[error("the profile database is empty")]
    EmptyDatabase,
    #[error("profile {0} has no samples")]
    EmptyProfile(String),
    #[error("granularity mismatch between AES and noise profiles")]
    Granularity,
    #[error("malformed database: {0}")]
    Format(String),
    #[error(transparent)]
    Metric(#[from] MetricError),
    #[error(transparent)]
    Netlist(#[from] NetlistError),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Structural attributes used to map an IP onto a database entry.
/// `num_gates` is the AND+NAND+OR+NOR total.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
pub struct IpAttributes {
    pub num_inputs: usize,
    pub num_outputs: usize,
    pub num_dff: usize,
    pub num_inverters: usize,
    pub num_gates: usize,
    pub num_and: usize,
    pub num_nand: usize,
    pub num_or: usize,
    pub num_nor: usize,
}

impl IpAttributes {
    pub const CSV_COLUMNS: [&'static str; 9] = [
        "inputs",
        "outputs",
        "dff",
        "inverters",
        "gates",
        "and",
        "nand",
        "or",
        "nor",
    ];

    /// Builds attributes from the row order inputs, outputs, D-FF,
    /// inverters, gates, AND, NAND, OR, NOR.
    pub const fn from_row(r: [usize; 9]) -> IpAttributes {
        IpAttributes {
            num_inputs: r[0],
            num_outputs: r[1],
            num_dff: r[2],
            num_inverters: r[3],
            num_gates: r[4],
            num_and: r[5],
            num_nand: r[6],
            num_or: r[7],
            num_nor: r[8],
        }
    }

    pub fn to_row(&self) -> [usize; 9] {
        [
            self.num_inputs,
            self.num_outputs,
            self.num_dff,
            self.num_inverters,
            self.num_gates,
            self.num_and,
            self.num_nand,
            self.num_or,
            self.num_nor,
        ]
    }

    pub fn from_circuit(c: &Circuit) -> IpAttributes {
        let and = c.count_kind(GateKind::And);
        let nand = c.count_kind(GateKind::Nand);
        let or = c.count_kind(GateKind::Or);
        let nor = c.count_kind(GateKind::Nor);
        IpAttributes {
            num_inputs: c.primary_inputs().len(),
            num_outputs: c.primary_outputs().len(),
            num_dff: c.flip_flops().len(),
            num_inverters: c.count_kind(GateKind::Not),
            num_gates: and + nand + or + nor,
            num_and: and,
            num_nand: nand,
            num_or: or,
            num_nor: nor,
        }
    }

    pub fn features(&self) -> [f64; 9] {
        self.to_row().map(|x| x as f64)
    }
}

/// Attributes of ISCAS'89 circuits used to synthesize the bundled
/// profile database.
pub const ISCAS89_ATTRIBUTES: [(&str, IpAttributes); 18] = [
    (
        "s298",
        IpAttributes::from_row([3, 6, 14, 44, 75, 31, 9, 16, 19]),
    ),
    (
        "s344",
        IpAttributes::from_row([9, 11, 15, 59, 101, 44, 18, 9, 30]),
    ),
    (
        "s386",
        IpAttributes::from_row([7, 7, 6, 41, 118, 83, 0, 35, 0]),
    ),
    (
        "s400",
        IpAttributes::from_row([3, 6, 21, 58, 106, 11, 36, 25, 34]),
    ),
    (
        "s444",
        IpAttributes::from_row([3, 6, 21, 62, 119, 13, 58, 14, 34]),
    ),
    (
        "s510",
        IpAttributes::from_row([19, 7, 6, 32, 179, 34, 61, 29, 55]),
    ),
    (
        "s526",
        IpAttributes::from_row([3, 6, 21, 52, 141, 56, 22, 28, 35]),
    ),
    (
        "s641",
        IpAttributes::from_row([35, 24, 19, 272, 107, 90, 4, 13, 0]),
    ),
    (
        "s713",
        IpAttributes::from_row([35, 23, 19, 254, 139, 94, 28, 17, 0]),
    ),
    (
        "s820",
        IpAttributes::from_row([18, 19, 5, 33, 256, 76, 54, 60, 66]),
    ),
    (
        "s832",
        IpAttributes::from_row([18, 19, 5, 25, 262, 78, 54, 64, 66]),
    ),
    (
        "s838",
        IpAttributes::from_row([34, 1, 32, 158, 288, 105, 57, 56, 70]),
    ),
    (
        "s953",
        IpAttributes::from_row([16, 23, 29, 84, 311, 49, 114, 36, 112]),
    ),
    (
        "s1196",
        IpAttributes::from_row([14, 14, 18, 141, 388, 118, 119, 101, 50]),
    ),
    (
        "s1238",
        IpAttributes::from_row([14, 14, 18, 80, 428, 134, 125, 112, 57]),
    ),
    (
        "s1423",
        IpAttributes::from_row([17, 5, 74, 167, 490, 197, 64, 137, 92]),
    ),
    (
        "s1488",
        IpAttributes::from_row([8, 19, 6, 103, 550, 350, 0, 200, 0]),
    ),
    (
        "s5378",
        IpAttributes::from_row([35, 49, 179, 1775, 1004, 0, 0, 239, 765]),
    ),
];

pub fn iscas89_attributes(name: &str) -> Option<IpAttributes> {
    let base = name.strip_suffix("_synth").unwrap_or(name);
    ISCAS89_ATTRIBUTES
        .iter()
        .find(|(n, _)| *n == base)
        .map(|(_, a)| *a)
}

/// Random sequential circuit with exactly the given attribute counts.
/// Gates read from earlier nets only, so the logic is acyclic; every gate
/// prefers a net nobody reads yet as its first input. Logic gates get two
/// or three inputs.
pub fn synthesize_circuit(
    name: &str,
    attrs: &IpAttributes,
    seed: u64,
) -> Result<Circuit, PscEstimationError> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut b = CircuitBuilder::new(name);
    let inputs: Vec<String> = (0..attrs.num_inputs).map(|i| format!("in{i}")).collect();
    let states: Vec<String> = (0..attrs.num_dff).map(|i| format!("ff{i}")).collect();
    for i in &inputs {
        b.add_input(i);
    }
    let mut pool: Vec<String> = inputs.iter().chain(&states).cloned().collect();
    if pool.is_empty() {
        return Err(PscEstimationError::Format(
            "a circuit needs at least one input or flip-flop".into(),
        ));
    }
    let mut unread: Vec<usize> = (0..pool.len()).collect();

    let mut kinds = Vec::new();
    for (k, n) in [
        (GateKind::Not, attrs.num_inverters),
        (GateKind::And, attrs.num_and),
        (GateKind::Nand, attrs.num_nand),
        (GateKind::Or, attrs.num_or),
        (GateKind::Nor, attrs.num_nor),
    ] {
        kinds.extend(std::iter::repeat(k).take(n));
    }
    kinds.shuffle(&mut rng);

    let first_gate = pool.len();
    for (g, kind) in kinds.into_iter().enumerate() {
        let fanin = if kind == GateKind::Not {
            1
        } else {
            rng.gen_range(2..=3)
        };
        let mut picks: Vec<usize> = Vec::with_capacity(fanin);
        if !unread.is_empty() {
            picks.push(unread.swap_remove(rng.gen_range(0..unread.len())));
        }
        while picks.len() < fanin {
            // mostly recent nets, for some logic depth
            let lo = if rng.gen_bool(0.7) {
                pool.len().saturating_sub(32)
            } else {
                0
            };
            let p = rng.gen_range(lo..pool.len());
            if !picks.contains(&p) || pool.len() <= picks.len() {
                unread.retain(|&u| u != p);
                picks.push(p);
            }
        }
        let out = format!("n{g}");
        let ins: Vec<&str> = picks.iter().map(|&p| pool[p].as_str()).collect();
        b.add_gate(kind, &ins, &out);
        unread.push(pool.len());
        pool.push(out);
    }

    let gate_nets = first_gate..pool.len();
    let sink = |rng: &mut ChaCha8Rng, unread: &mut Vec<usize>| -> usize {
        let open: Vec<usize> = unread
            .iter()
            .copied()
            .filter(|u| gate_nets.contains(u))
            .collect();
        if let Some(&u) = open.get(rng.gen_range(0..open.len().max(1))) {
            unread.retain(|&x| x != u);
            u
        } else if gate_nets.is_empty() {
            rng.gen_range(0..first_gate)
        } else {
            rng.gen_range(gate_nets.clone())
        }
    };
    for q in &states {
        let d = sink(&mut rng, &mut unread);
        let d = pool[d].clone();
        b.add_gate(GateKind::Dff, &[&d], q);
    }
    for _ in 0..attrs.num_outputs {
        let o = sink(&mut rng, &mut unread);
        let o = pool[o].clone();
        b.add_output(&o);
    }
    Ok(b.build()?)
}

/// Switching profile of one benchmark under random stimulus.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BenchmarkProfile {
    pub name: String,
    pub attributes: IpAttributes,
    pub seed: u64,
    /// Per-cycle toggle counts.
    pub profile: SwitchingProfile,
}

impl BenchmarkProfile {
    /// The profile at `granularity`; per-encryption samples sum
    /// consecutive windows of `cycles_per_encryption` cycles.
    pub fn samples(
        &self,
        granularity: Granularity,
        cycles_per_encryption: usize,
    ) -> SwitchingProfile {
        let samples = match granularity {
            Granularity::PerCycle => self.profile.samples.clone(),
            Granularity::PerEncryption => self
                .profile
                .samples
                .chunks_exact(cycles_per_encryption.max(1))
                .map(|c| c.iter().sum())
                .collect(),
        };
        SwitchingProfile {
            samples,
            key: None,
            granularity,
        }
    }
}

/// Immutable set of pre-simulated benchmark profiles.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ProfileDb {
    pub profiles: Vec<BenchmarkProfile>,
}

const INDEX_FILE: &str = "attributes.csv";

impl ProfileDb {
    /// Simulates every circuit for `cycles` cycles; circuit `i` uses
    /// stimulus seed `seed + i`.
    pub fn build(
        circuits: &[Circuit],
        cycles: usize,
        seed: u64,
    ) -> Result<ProfileDb, PscEstimationError> {
        if circuits.is_empty() {
            return Err(PscEstimationError::EmptyDatabase);
        }
        let profiles = circuits
            .par_iter()
            .enumerate()
            .map(|(i, c)| {
                let s = seed.wrapping_add(i as u64);
                BenchmarkProfile {
                    name: c.name().to_string(),
                    attributes: IpAttributes::from_circuit(c),
                    seed: s,
                    profile: SwitchingProfile {
                        samples: simulate_circuit_toggles(c, s, cycles).per_cycle,
                        key: None,
                        granularity: Granularity::PerCycle,
                    },
                }
            })
            .collect();
        Ok(ProfileDb { profiles })
    }

    pub fn get(&self, name: &str) -> Option<&BenchmarkProfile> {
        self.profiles.iter().find(|p| p.name == name)
    }

    /// Writes `attributes.csv` plus one `<name>.csv` per profile.
    pub fn save(&self, dir: &Path) -> Result<(), PscEstimationError> {
        fs::create_dir_all(dir)?;
        let mut idx = csv::Writer::from_path(dir.join(INDEX_FILE))?;
        let mut header = vec!["name"];
        header.extend(IpAttributes::CSV_COLUMNS);
        header.extend(["seed", "cycles"]);
        idx.write_record(&header)?;
        for p in &self.profiles {
            let mut row = vec![p.name.clone()];
            row.extend(p.attributes.to_row().iter().map(|x| x.to_string()));
            row.push(p.seed.to_string());
            row.push(p.profile.samples.len().to_string());
            idx.write_record(&row)?;
            let mut w = csv::Writer::from_path(dir.join(format!("{}.csv", p.name)))?;
            w.write_record(["cycle", "toggles"])?;
            for (c, t) in p.profile.samples.iter().enumerate() {
                w.write_record([c.to_string(), t.to_string()])?;
            }
            w.flush()?;
        }
        idx.flush()?;
        Ok(())
    }

    pub fn load(dir: &Path) -> Result<ProfileDb, PscEstimationError> {
        let mut idx = csv::Reader::from_path(dir.join(INDEX_FILE))?;
        let mut profiles = Vec::new();
        for rec in idx.records() {
            let rec = rec?;
            if rec.len() != 12 {
                return Err(PscEstimationError::Format(format!(
                    "index row has {} fields",
                    rec.len()
                )));
            }
            let num = |i: usize| -> Result<u64, PscEstimationError> {
                rec[i]
                    .trim()
                    .parse()
                    .map_err(|_| PscEstimationError::Format(format!("bad number {:?}", &rec[i])))
            };
            let name = rec[0].to_string();
            let mut row = [0usize; 9];
            for (j, r) in row.iter_mut().enumerate() {
                *r = num(j + 1)? as usize;
            }
            let seed = num(10)?;
            let cycles = num(11)? as usize;
            let mut rd = csv::Reader::from_path(dir.join(format!("{name}.csv")))?;
            let mut samples = Vec::with_capacity(cycles);
            for r in rd.records() {
                let r = r?;
                let t = r
                    .get(1)
                    .and_then(|s| s.trim().parse().ok())
                    .ok_or_else(|| {
                        PscEstimationError::Format(format!("bad toggle row in {name}.csv"))
                    })?;
                samples.push(t);
            }
            if samples.len() != cycles {
                return Err(PscEstimationError::Format(format!(
                    "{name}.csv has {} samples, index says {cycles}",
                    samples.len()
                )));
            }
            profiles.push(BenchmarkProfile {
                name,
                attributes: IpAttributes::from_row(row),
                seed,
                profile: SwitchingProfile {
                    samples,
                    key: None,
                    granularity: Granularity::PerCycle,
                },
            });
        }
        if profiles.is_empty() {
            return Err(PscEstimationError::EmptyDatabase);
        }
        Ok(ProfileDb { profiles })
    }
}

/// Mapping result with the similarity that won.
#[derive(Debug, Clone, Copy)]
pub struct IpMatch<'a> {
    pub profile: &'a BenchmarkProfile,
    pub similarity: f64,
}

/// Most similar database entry by cosine similarity of attribute vectors
/// scaled by the per-feature maximum over the database and the query.
/// Near ties (relative 1e-12) go to the closest gate count, then to the
/// lexicographically smaller name.
pub fn map_ip<'a>(
    query: &IpAttributes,
    db: &'a ProfileDb,
) -> Result<IpMatch<'a>, PscEstimationError> {
    if db.profiles.is_empty() {
        return Err(PscEstimationError::EmptyDatabase);
    }
    let mut scale = query.features();
    for p in &db.profiles {
        for (s, f) in scale.iter_mut().zip(p.attributes.features()) {
            *s = s.max(f);
        }
    }
    for s in scale.iter_mut() {
        if *s == 0.0 {
            *s = 1.0;
        }
    }
    let norm = |a: &IpAttributes| -> [f64; 9] {
        let mut f = a.features();
        for (x, s) in f.iter_mut().zip(scale) {
            *x /= s;
        }
        f
    };
    let q = norm(query);
    let cos = |v: &[f64; 9]| -> f64 {
        let nq = q.iter().map(|x| x * x).sum::<f64>().sqrt();
        let nv = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if nq == 0.0 || nv == 0.0 {
            return if nq == nv { 1.0 } else { 0.0 };
        }
        q.iter().zip(v).map(|(a, b)| a * b).sum::<f64>() / (nq * nv)
    };
    let gate_gap = |p: &BenchmarkProfile| p.attributes.num_gates.abs_diff(query.num_gates);
    let mut best: Option<(&BenchmarkProfile, f64)> = None;
    for p in &db.profiles {
        let s = cos(&norm(&p.attributes));
        best = match best {
            None => Some((p, s)),
            Some((b, bs)) => {
                let tol = 1e-12 * bs.abs().max(s.abs()).max(1.0);
                let better = if (s - bs).abs() <= tol {
                    match gate_gap(p).cmp(&gate_gap(b)) {
                        Ordering::Less => true,
                        Ordering::Greater => false,
                        Ordering::Equal => p.name < b.name,
                    }
                } else {
                    s > bs
                };
                Some(if better { (p, s) } else { (b, bs) })
            }
        };
    }
    let (profile, similarity) = best.expect("non-empty database");
    Ok(IpMatch {
        profile,
        similarity,
    })
}

/// Indices into a profile of length `len` for `n` composite samples: a
/// seeded draw without replacement when the profile is long enough, with
/// replacement otherwise.
pub fn draw_indices<R: Rng>(len: usize, n: usize, rng: &mut R) -> Vec<usize> {
    if len >= n {
        let mut idx: Vec<usize> = (0..len).collect();
        let (head, _) = idx.partial_shuffle(rng, n);
        head.to_vec()
    } else {
        (0..n).map(|_| rng.gen_range(0..len)).collect()
    }
}

/// Composite samples for both keys: `aes[i] + sum of one draw per noise
/// profile`. The same draws are used under both keys. AES sample sets are
/// truncated to the shorter of the two.
pub fn compose_pair<R: Rng>(
    aes_k1: &[u64],
    aes_k2: &[u64],
    noise: &[&[u64]],
    rng: &mut R,
) -> Result<(Vec<u64>, Vec<u64>), PscEstimationError> {
    let n = aes_k1.len().min(aes_k2.len());
    let mut c1 = aes_k1[..n].to_vec();
    let mut c2 = aes_k2[..n].to_vec();
    for (j, prof) in noise.iter().enumerate() {
        if prof.is_empty() {
            return Err(PscEstimationError::EmptyProfile(format!("#{j}")));
        }
        for (i, d) in draw_indices(prof.len(), n, rng).into_iter().enumerate() {
            c1[i] += prof[d];
            c2[i] += prof[d];
        }
    }
    Ok((c1, c2))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PscEstimate<T> {
    pub js: T,
    pub score: u8,
    /// Per cycle position, when estimated from per-cycle traces.
    pub js_per_cycle: Vec<T>,
}

/// Estimated JS and score for one pair of AES profiles and the profiles
/// of the mapped noise IPs, all at the same granularity.
pub fn estimate_subsystem_score<T: Scalar>(
    aes_k1: &SwitchingProfile,
    aes_k2: &SwitchingProfile,
    mapped: &[&SwitchingProfile],
    thresholds: &ScoreThresholds<T>,
    bins: Option<usize>,
    seed: u64,
) -> Result<PscEstimate<T>, PscEstimationError> {
    if aes_k1.granularity != aes_k2.granularity
        || mapped.iter().any(|m| m.granularity != aes_k1.granularity)
    {
        return Err(PscEstimationError::Granularity);
    }
    let noise: Vec<&[u64]> = mapped.iter().map(|m| m.samples.as_slice()).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (c1, c2) = compose_pair(&aes_k1.samples, &aes_k2.samples, &noise, &mut rng)?;
    let js: T = js_from_samples(&c1, &c2, bins)?;
    Ok(PscEstimate {
        js,
        score: security_score(js, thresholds),
        js_per_cycle: Vec::new(),
    })
}

/// Per-cycle estimate matching the headline of a measurement: composite
/// samples are formed at each cycle position of the AES traces and the
/// largest JS over positions is reported. `aes_k1`/`aes_k2` hold the AES
/// core as block `block`.
pub fn estimate_per_cycle<T: Scalar>(
    aes_k1: &SubsystemTrace,
    aes_k2: &SubsystemTrace,
    block: usize,
    mapped: &[&BenchmarkProfile],
    thresholds: &ScoreThresholds<T>,
    bins: Option<usize>,
    seed: u64,
) -> Result<PscEstimate<T>, PscEstimationError> {
    if aes_k1.cycles_per_encryption != aes_k2.cycles_per_encryption {
        return Err(PscEstimationError::Granularity);
    }
    let noise: Vec<&[u64]> = mapped
        .iter()
        .map(|m| m.profile.samples.as_slice())
        .collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut js_per_cycle = Vec::with_capacity(aes_k1.cycles_per_encryption);
    for c in 0..aes_k1.cycles_per_encryption {
        let (c1, c2) = compose_pair(
            &aes_k1.cycle_samples(Some(block), c),
            &aes_k2.cycle_samples(Some(block), c),
            &noise,
            &mut rng,
        )?;
        js_per_cycle.push(js_from_samples::<T>(&c1, &c2, bins)?);
    }
    let js = js_per_cycle.iter().copied().fold(T::zero(), T::max);
    Ok(PscEstimate {
        js,
        score: security_score(js, thresholds),
        js_per_cycle,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::netlist::parse_bench;

    #[test]
    fn synthesized_rows_match_attributes() {
        for (name, attrs) in ISCAS89_ATTRIBUTES {
            let c = synthesize_circuit(name, &attrs, 7).unwrap();
            assert_eq!(IpAttributes::from_circuit(&c), attrs, "{name}");
        }
    }

    #[test]
    fn single_gate_attributes() {
        let c = parse_bench("g", "INPUT(a)\nINPUT(b)\nOUTPUT(y)\ny = NOR(a, b)\n").unwrap();
        let a = IpAttributes::from_circuit(&c);
        assert_eq!(a.to_row(), [2, 1, 0, 0, 1, 0, 0, 0, 1]);
    }

    #[test]
    fn draws_without_replacement_are_a_permutation() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mut d = draw_indices(10, 10, &mut rng);
        d.sort();
        assert_eq!(d, (0..10).collect::<Vec<_>>());
        assert!(draw_indices(3, 20, &mut rng).iter().all(|&i| i < 3));
    }
}
