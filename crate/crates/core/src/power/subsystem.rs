// SPDX-License-Identifier: Apache-2.0

//! AES core plus free-running noise IPs sharing one power domain.

use std::io::Write;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::netlist::Circuit;

use super::aes::{Aes128Core, Block, AES_CYCLES};
use super::ToggleSimulator;

/// Block name of the AES core in traces and reports.
pub const AES_BLOCK: &str = "aes";

#[derive(Debug, Error)]
pub enum PowerError {
    #[error("at least one plaintext is required")]
    NoPlaintexts,
    #[error("the AES core needs {AES_CYCLES} cycles per encryption, got {0}")]
    CycleCount(usize),
    #[error("scheduler has {got} rows for {expected} noise IPs")]
    SchedulerRows { expected: usize, got: usize },
    #[error("scheduler row {row} has {got} entries, expected {expected}")]
    SchedulerWidth {
        row: usize,
        expected: usize,
        got: usize,
    },
    #[error(transparent)]
    Csv(#[from] csv::Error),
}

#[derive(Debug, Clone)]
pub struct NoiseIp {
    pub name: String,
    pub circuit: Circuit,
    pub seed: u64,
}

#[derive(Debug, Clone)]
pub struct SubsystemConfig {
    pub aes_enabled: bool,
    pub noise_ips: Vec<NoiseIp>,
    pub cycles_per_encryption: usize,
    /// `scheduler[ip][cycle]` over the cycles of one encryption; `None`
    /// keeps every IP active. An inactive IP holds its state, draws no
    /// stimulus and does not toggle.
    pub scheduler: Option<Vec<Vec<bool>>>,
}

impl SubsystemConfig {
    pub fn new(noise_ips: Vec<NoiseIp>) -> SubsystemConfig {
        SubsystemConfig {
            aes_enabled: true,
            noise_ips,
            cycles_per_encryption: AES_CYCLES,
            scheduler: None,
        }
    }

    fn validate(&self) -> Result<(), PowerError> {
        if self.aes_enabled && self.cycles_per_encryption != AES_CYCLES {
            return Err(PowerError::CycleCount(self.cycles_per_encryption));
        }
        if let Some(s) = &self.scheduler {
            if s.len() != self.noise_ips.len() {
                return Err(PowerError::SchedulerRows {
                    expected: self.noise_ips.len(),
                    got: s.len(),
                });
            }
            for (row, r) in s.iter().enumerate() {
                if r.len() != self.cycles_per_encryption {
                    return Err(PowerError::SchedulerWidth {
                        row,
                        expected: self.cycles_per_encryption,
                        got: r.len(),
                    });
                }
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum Granularity {
    #[default]
    PerEncryption,
    PerCycle,
}

/// Toggle samples of one block (or the whole subsystem) under one key.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SwitchingProfile {
    pub samples: Vec<u64>,
    pub key: Option<String>,
    pub granularity: Granularity,
}

/// Per-block, per-cycle toggles of one subsystem run.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SubsystemTrace {
    pub blocks: Vec<String>,
    /// `toggles[block][cycle]`, cycles of all encryptions back to back.
    pub toggles: Vec<Vec<u64>>,
    pub cycles_per_encryption: usize,
    pub ciphertexts: Vec<Block>,
}

impl SubsystemTrace {
    pub fn num_encryptions(&self) -> usize {
        self.toggles.first().map_or(self.ciphertexts.len(), |t| {
            t.len() / self.cycles_per_encryption
        })
    }

    /// Sum over blocks, per cycle.
    pub fn subsystem_cycles(&self) -> Vec<u64> {
        let n = self.num_encryptions() * self.cycles_per_encryption;
        (0..n)
            .map(|c| self.toggles.iter().map(|b| b[c]).sum())
            .collect()
    }

    fn series(&self, block: Option<usize>) -> Vec<u64> {
        match block {
            None => self.subsystem_cycles(),
            Some(b) => self.toggles[b].clone(),
        }
    }

    pub fn block_index(&self, name: &str) -> Option<usize> {
        self.blocks.iter().position(|b| b == name)
    }

    /// Samples of `block` (`None` for the subsystem total).
    pub fn samples(&self, block: Option<usize>, granularity: Granularity) -> Vec<u64> {
        let s = self.series(block);
        match granularity {
            Granularity::PerCycle => s,
            Granularity::PerEncryption => s
                .chunks(self.cycles_per_encryption)
                .map(|c| c.iter().sum())
                .collect(),
        }
    }

    /// Samples at one cycle position of every encryption.
    pub fn cycle_samples(&self, block: Option<usize>, cycle: usize) -> Vec<u64> {
        self.series(block)
            .chunks(self.cycles_per_encryption)
            .map(|c| c[cycle])
            .collect()
    }

    pub fn profile(
        &self,
        block: Option<usize>,
        granularity: Granularity,
        key: Option<String>,
    ) -> SwitchingProfile {
        SwitchingProfile {
            samples: self.samples(block, granularity),
            key,
            granularity,
        }
    }

    /// One row per sample: `sample,subsystem,<block>...`.
    pub fn write_csv<W: Write>(
        &self,
        writer: W,
        granularity: Granularity,
    ) -> Result<(), PowerError> {
        let mut w = csv::Writer::from_writer(writer);
        let mut header = vec!["sample".to_string(), "subsystem".to_string()];
        header.extend(self.blocks.iter().cloned());
        w.write_record(&header)?;
        let total = self.samples(None, granularity);
        let per_block: Vec<Vec<u64>> = (0..self.blocks.len())
            .map(|b| self.samples(Some(b), granularity))
            .collect();
        for (i, t) in total.iter().enumerate() {
            let mut row = vec![i.to_string(), t.to_string()];
            row.extend(per_block.iter().map(|b| b[i].to_string()));
            w.write_record(&row)?;
        }
        w.flush().map_err(csv::Error::from)?;
        Ok(())
    }
}

/// Runs one encryption per plaintext on a reset AES core while the noise
/// IPs run continuously from reset under their own seeded stimulus.
pub fn simulate_subsystem(
    config: &SubsystemConfig,
    key: &Block,
    plaintexts: &[Block],
) -> Result<SubsystemTrace, PowerError> {
    config.validate()?;
    if plaintexts.is_empty() {
        return Err(PowerError::NoPlaintexts);
    }
    let cpe = config.cycles_per_encryption;
    let n = plaintexts.len();
    let mut blocks = Vec::new();
    let mut toggles = Vec::new();
    let mut ciphertexts = Vec::new();
    if config.aes_enabled {
        let runs: Vec<(Block, [u64; AES_CYCLES])> = plaintexts
            .par_iter()
            .map(|pt| Aes128Core::new().encrypt(key, pt))
            .collect();
        blocks.push(AES_BLOCK.to_string());
        toggles.push(runs.iter().flat_map(|r| r.1).collect());
        ciphertexts = runs.into_iter().map(|r| r.0).collect();
    }
    let noise: Vec<Vec<u64>> = config
        .noise_ips
        .par_iter()
        .enumerate()
        .map(|(i, ip)| {
            let mask = config.scheduler.as_ref().map(|s| &s[i]);
            let mut sim = ToggleSimulator::new(&ip.circuit);
            let mut rng = ChaCha8Rng::seed_from_u64(ip.seed);
            (0..n * cpe)
                .map(|c| {
                    if mask.map_or(true, |m| m[c % cpe]) {
                        sim.step_random(&mut rng)
                    } else {
                        0
                    }
                })
                .collect()
        })
        .collect();
    for (ip, t) in config.noise_ips.iter().zip(noise) {
        blocks.push(ip.name.clone());
        toggles.push(t);
    }
    Ok(SubsystemTrace {
        blocks,
        toggles,
        cycles_per_encryption: cpe,
        ciphertexts,
    })
}
