// SPDX-License-Identifier: Apache-2.0

//! Experiment building blocks shared by the subcommands and batch runs.

use std::fs;
use std::path::Path;
use std::time::Duration;

use anyhow::{bail, Context, Result};
use platsec_core::locking::{insert_random_locking, LockingKey};
use platsec_core::netlist::{extract_metadata, parse_bench, Circuit, CircuitMetadata};
use platsec_core::platform::{platform_attack_model, ScanOracle, ScanTopology};
use platsec_core::power::{
    parse_block, simulate_subsystem, Block, Granularity, NoiseIp, SubsystemConfig, SubsystemTrace,
};
use platsec_core::psc::estimation::{
    estimate_per_cycle, estimate_subsystem_score, map_ip, IpAttributes, ProfileDb,
};
use platsec_core::psc::metrics::measure_psc;
use platsec_core::sat::{sat_attack, AttackBudget, AttackStatus, KeyVerification, SolverBackend};
use platsec_core::sat_estimation::ExperimentRecord;
use platsec_core::{PscMeasurement, ScoreThresholds};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

/// Reads a `.bench` file; the circuit is named after the file stem.
pub fn load_bench(path: &Path) -> Result<Circuit> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let name = path
        .file_stem()
        .and_then(|s| s.to_str())
        .unwrap_or("circuit")
        .to_string();
    parse_bench(&name, &text).with_context(|| format!("parsing {}", path.display()))
}

/// `builtin` or `dimacs:<path>`.
pub fn parse_solver(spec: &str, seed: u64) -> Result<SolverBackend> {
    if spec == "builtin" {
        Ok(SolverBackend::Builtin { seed })
    } else if let Some(p) = spec.strip_prefix("dimacs:") {
        if p.is_empty() {
            bail!("dimacs solver needs a path");
        }
        Ok(SolverBackend::Dimacs { path: p.into() })
    } else {
        bail!("unknown solver {spec:?}; expected builtin or dimacs:<path>")
    }
}

/// Quarantined wall-clock measurements; excluded from determinism checks.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct WallClock {
    pub elapsed_s: f64,
}

/// One SAT attack on a locked design behind a scan topology.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttackRun {
    pub kind: String,
    pub design: String,
    pub key_length: usize,
    pub cr: usize,
    pub chains: usize,
    pub lock_seed: u64,
    pub metadata: CircuitMetadata,
    pub iterations: usize,
    pub status: AttackStatus,
    pub correct_key: String,
    pub recovered_key: Option<String>,
    pub verification: Option<KeyVerification>,
    pub wall_clock: WallClock,
}

impl AttackRun {
    pub fn succeeded(&self) -> bool {
        self.status == AttackStatus::Success
            && self.verification.as_ref().is_some_and(|v| v.passed())
    }

    pub fn record(&self) -> ExperimentRecord {
        ExperimentRecord {
            metadata: self.metadata.clone(),
            cr: self.cr,
            elapsed_seconds: self.wall_clock.elapsed_s.max(1e-9),
            iterations: self.iterations,
        }
    }
}

#[derive(Debug, Clone)]
pub struct AttackSetup {
    pub key_length: usize,
    pub lock_seed: u64,
    pub chains: usize,
    pub cr: usize,
    pub budget: AttackBudget,
    pub backend: SolverBackend,
}

pub fn attack_budget(timeout_s: Option<f64>, max_iterations: Option<usize>) -> AttackBudget {
    AttackBudget {
        timeout: timeout_s
            .map(Duration::from_secs_f64)
            .or(AttackBudget::default().timeout),
        max_iterations,
    }
}

/// Locks `circuit`, places its flip-flops on `chains` scan chains at
/// compression ratio `cr` and attacks it through the scan oracle.
pub fn run_attack(circuit: &Circuit, setup: &AttackSetup) -> Result<AttackRun> {
    let locked = insert_random_locking(circuit, setup.key_length, setup.lock_seed)?;
    let topo = ScanTopology::for_flip_flops(circuit.flip_flops().len(), setup.chains, setup.cr)?;
    let (_, model) = platform_attack_model(&locked, &topo)?;
    let mut oracle = ScanOracle::new(&locked, &topo)?;
    let result = sat_attack(&model, &mut oracle, &setup.budget, &setup.backend)?;
    Ok(AttackRun {
        kind: "sat".into(),
        design: circuit.name().to_string(),
        key_length: setup.key_length,
        cr: setup.cr,
        chains: setup.chains,
        lock_seed: setup.lock_seed,
        metadata: extract_metadata(circuit, setup.key_length),
        iterations: result.iterations,
        status: result.status,
        correct_key: locked.correct_key().to_string(),
        recovered_key: result.recovered_key.as_ref().map(LockingKey::to_string),
        verification: result.verification,
        wall_clock: WallClock {
            elapsed_s: result.elapsed_seconds,
        },
    })
}

pub fn random_plaintexts(n: usize, seed: u64) -> Vec<Block> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n).map(|_| rng.gen()).collect()
}

pub fn parse_key(s: &str) -> Result<Block> {
    parse_block(s).with_context(|| format!("invalid 128-bit hex key {s:?}"))
}

/// A subsystem experiment: AES core plus noise IPs under two keys.
#[derive(Debug, Clone)]
pub struct PscSetup {
    pub noise: Vec<NoiseIp>,
    pub plaintexts: Vec<Block>,
    pub key1: Block,
    pub key2: Block,
    pub bins: Option<usize>,
    pub thresholds: ScoreThresholds,
}

pub struct PscRun {
    pub trace1: SubsystemTrace,
    pub trace2: SubsystemTrace,
    pub measurement: PscMeasurement,
}

pub fn measure(setup: &PscSetup) -> Result<PscRun> {
    let cfg = SubsystemConfig::new(setup.noise.clone());
    let trace1 = simulate_subsystem(&cfg, &setup.key1, &setup.plaintexts)?;
    let trace2 = simulate_subsystem(&cfg, &setup.key2, &setup.plaintexts)?;
    let measurement = measure_psc(&trace1, &trace2, setup.bins, &setup.thresholds)?;
    Ok(PscRun {
        trace1,
        trace2,
        measurement,
    })
}

/// Estimate for one subsystem: each noise IP is mapped onto the database
/// by its attributes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EstimateRecord {
    pub kind: String,
    pub noise_ips: Vec<String>,
    pub mapped_to: Vec<String>,
    pub similarity: Vec<f64>,
    pub js: f64,
    pub js_per_encryption: f64,
    pub js_per_cycle: Vec<f64>,
    pub score: u8,
    pub threshold_profile: String,
}

pub fn estimate(
    key1: &Block,
    key2: &Block,
    plaintexts: &[Block],
    noise: &[(String, IpAttributes)],
    db: &ProfileDb,
    bins: Option<usize>,
    thresholds: &ScoreThresholds,
    seed: u64,
) -> Result<EstimateRecord> {
    let cfg = SubsystemConfig::new(Vec::new());
    let aes1 = simulate_subsystem(&cfg, key1, plaintexts)?;
    let aes2 = simulate_subsystem(&cfg, key2, plaintexts)?;
    let mut mapped = Vec::new();
    let mut similarity = Vec::new();
    for (_, a) in noise {
        let m = map_ip(a, db)?;
        mapped.push(m.profile);
        similarity.push(m.similarity);
    }
    let per_cycle = estimate_per_cycle(&aes1, &aes2, 0, &mapped, thresholds, bins, seed)?;
    let cpe = aes1.cycles_per_encryption;
    let enc_profiles: Vec<_> = mapped
        .iter()
        .map(|p| p.samples(Granularity::PerEncryption, cpe))
        .collect();
    let enc_refs: Vec<_> = enc_profiles.iter().collect();
    let per_enc = estimate_subsystem_score(
        &aes1.profile(Some(0), Granularity::PerEncryption, None),
        &aes2.profile(Some(0), Granularity::PerEncryption, None),
        &enc_refs,
        thresholds,
        bins,
        seed,
    )?;
    Ok(EstimateRecord {
        kind: "psc-estimate".into(),
        noise_ips: noise.iter().map(|(n, _)| n.clone()).collect(),
        mapped_to: mapped.iter().map(|p| p.name.clone()).collect(),
        similarity,
        js: per_cycle.js,
        js_per_encryption: per_enc.js,
        js_per_cycle: per_cycle.js_per_cycle,
        score: per_cycle.score,
        threshold_profile: thresholds.profile_name(),
    })
}

/// Serializable summary of a measurement.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MeasureRecord {
    pub kind: String,
    pub noise_ips: Vec<String>,
    pub plaintexts: usize,
    pub key1: String,
    pub key2: String,
    pub js: f64,
    pub js_per_encryption: f64,
    pub js_per_cycle: Vec<f64>,
    pub score: u8,
    pub threshold_profile: String,
}

impl MeasureRecord {
    pub fn new(setup: &PscSetup, m: &PscMeasurement) -> MeasureRecord {
        MeasureRecord {
            kind: "psc".into(),
            noise_ips: setup.noise.iter().map(|n| n.name.clone()).collect(),
            plaintexts: setup.plaintexts.len(),
            key1: platsec_core::power::format_block(&setup.key1),
            key2: platsec_core::power::format_block(&setup.key2),
            js: m.js,
            js_per_encryption: m.js_per_encryption,
            js_per_cycle: m.js_per_cycle.clone(),
            score: m.score,
            threshold_profile: setup.thresholds.profile_name(),
        }
    }
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir)?;
    }
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}
