// SPDX-License-Identifier: Apache-2.0

//! Declarative experiment configuration (TOML).

use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use platsec_core::ScoreThresholds;
use serde::{Deserialize, Serialize};

/// Environment variable that relocates relative output directories.
pub const OUT_ROOT_ENV: &str = "PLATSEC_OUT_ROOT";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub name: String,
    pub seed: u64,
    #[serde(default)]
    pub out: Option<PathBuf>,
    #[serde(default)]
    pub workers: Option<usize>,
    #[serde(default)]
    pub timeout_s: Option<f64>,
    #[serde(default = "default_solver")]
    pub solver: String,
    #[serde(default)]
    pub sat: Option<SatTask>,
    #[serde(default)]
    pub psc: Option<PscTask>,
    #[serde(default)]
    pub metrics: Option<MetricsTask>,
}

fn default_solver() -> String {
    "builtin".into()
}

/// Attack grid: benchmarks x key lengths x compression ratios x seeds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SatTask {
    pub benchmarks: Vec<PathBuf>,
    pub key_lengths: Vec<usize>,
    pub crs: Vec<usize>,
    /// Internal scan chains; must be divisible by every CR.
    pub chains: usize,
    /// Locking seeds; one run per seed.
    pub seeds: Vec<u64>,
    #[serde(default)]
    pub max_iterations: Option<usize>,
    /// Fit an estimation model on the grid's records.
    #[serde(default)]
    pub fit: bool,
    #[serde(default = "default_basis")]
    pub fit_basis: String,
    #[serde(default = "default_submodels")]
    pub max_submodels: usize,
}

fn default_basis() -> String {
    "seconds".into()
}

fn default_submodels() -> usize {
    platsec_core::sat_estimation::DEFAULT_SUBMODELS
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PscTask {
    pub plaintexts: usize,
    pub key1: String,
    pub key2: String,
    /// Noise IP roster; the run with `k` noise IPs uses the first `k`.
    pub noise: Vec<PathBuf>,
    pub noise_counts: Vec<usize>,
    /// Simulate the subsystem and compute the measured JS.
    #[serde(default = "yes")]
    pub measure: bool,
    /// Build a profile database from the roster and estimate each subsystem.
    #[serde(default)]
    pub estimate: bool,
    /// Existing profile database to map onto instead of the roster.
    #[serde(default)]
    pub db: Option<PathBuf>,
    #[serde(default)]
    pub db_cycles: Option<usize>,
    #[serde(default)]
    pub bins: Option<usize>,
    #[serde(default)]
    pub thresholds: Option<[f64; 4]>,
}

fn yes() -> bool {
    true
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MetricsTask {
    #[serde(default)]
    pub scoap: Vec<PathBuf>,
    #[serde(default)]
    pub classical_ctf: bool,
    #[serde(default)]
    pub oh: Vec<OhTask>,
    #[serde(default)]
    pub fsm: Vec<FsmTask>,
    #[serde(default)]
    pub puf: Vec<PufTask>,
    #[serde(default)]
    pub cdc: Vec<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OhTask {
    pub bench: PathBuf,
    pub node: String,
    pub patterns: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FsmTask {
    pub transitions: PathBuf,
    pub p_fs: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PufTask {
    /// One response per device (uniqueness).
    #[serde(default)]
    pub responses: Option<PathBuf>,
    /// Reference response and repeated reads of one device (reproducibility).
    #[serde(default)]
    pub reference: Option<PathBuf>,
    #[serde(default)]
    pub samples: Option<PathBuf>,
}

impl PscTask {
    pub fn thresholds(&self) -> Result<ScoreThresholds> {
        match self.thresholds {
            None => Ok(ScoreThresholds::default()),
            Some(c) => Ok(ScoreThresholds::new(c)?),
        }
    }
}

impl ExperimentConfig {
    pub fn parse(text: &str) -> Result<ExperimentConfig> {
        Ok(toml::from_str(text)?)
    }

    /// Loads a config; relative paths inside it are resolved against the
    /// config file's directory.
    pub fn load(path: &Path) -> Result<ExperimentConfig> {
        let text =
            fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        let mut cfg = ExperimentConfig::parse(&text)
            .with_context(|| format!("parsing {}", path.display()))?;
        let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
        cfg.resolve_paths(&base);
        Ok(cfg)
    }

    pub fn resolve_paths(&mut self, base: &Path) {
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        if let Some(o) = &mut self.out {
            fix(o);
        }
        if let Some(s) = &mut self.sat {
            s.benchmarks.iter_mut().for_each(fix);
        }
        if let Some(p) = &mut self.psc {
            p.noise.iter_mut().for_each(fix);
            if let Some(d) = &mut p.db {
                fix(d);
            }
        }
        if let Some(m) = &mut self.metrics {
            m.scoap.iter_mut().for_each(fix);
            m.cdc.iter_mut().for_each(fix);
            for o in &mut m.oh {
                fix(&mut o.bench);
            }
            for f in &mut m.fsm {
                fix(&mut f.transitions);
            }
            for p in &mut m.puf {
                for q in [&mut p.responses, &mut p.reference, &mut p.samples]
                    .into_iter()
                    .flatten()
                {
                    fix(q);
                }
            }
        }
    }

    /// Checks that every referenced file exists and the grids are sane.
    pub fn validate(&self) -> Result<()> {
        let mut files: Vec<&Path> = Vec::new();
        if self.sat.is_none() && self.psc.is_none() && self.metrics.is_none() {
            bail!("config {} defines no task", self.name);
        }
        if let Some(t) = self.timeout_s {
            if !(t > 0.0) {
                bail!("timeout_s must be positive");
            }
        }
        crate::flows::parse_solver(&self.solver, self.seed)?;
        if let Some(s) = &self.sat {
            if s.benchmarks.is_empty()
                || s.key_lengths.is_empty()
                || s.crs.is_empty()
                || s.seeds.is_empty()
            {
                bail!("sat grid has an empty axis");
            }
            for &cr in &s.crs {
                if cr == 0 || s.chains % cr != 0 {
                    bail!("{} chains are not divisible by CR {cr}", s.chains);
                }
            }
            if s.key_lengths.contains(&0) {
                bail!("key lengths must be positive");
            }
            if !matches!(s.fit_basis.as_str(), "seconds" | "iterations") {
                bail!("fit_basis must be seconds or iterations");
            }
            files.extend(s.benchmarks.iter().map(PathBuf::as_path));
        }
        if let Some(p) = &self.psc {
            if p.plaintexts == 0 {
                bail!("psc needs at least one plaintext");
            }
            crate::flows::parse_key(&p.key1)?;
            crate::flows::parse_key(&p.key2)?;
            p.thresholds()?;
            if let Some(&k) = p.noise_counts.iter().find(|&&k| k > p.noise.len()) {
                bail!("noise count {k} exceeds the roster of {}", p.noise.len());
            }
            if p.noise_counts.is_empty() {
                bail!("psc needs at least one noise count");
            }
            files.extend(p.noise.iter().map(PathBuf::as_path));
            if let Some(d) = &p.db {
                files.push(d.as_path());
            }
        }
        if let Some(m) = &self.metrics {
            files.extend(m.scoap.iter().map(PathBuf::as_path));
            files.extend(m.cdc.iter().map(PathBuf::as_path));
            files.extend(m.oh.iter().map(|o| o.bench.as_path()));
            files.extend(m.fsm.iter().map(|f| f.transitions.as_path()));
            for p in &m.puf {
                if p.responses.is_none() && (p.reference.is_none() || p.samples.is_none()) {
                    bail!("puf task needs responses, or reference and samples");
                }
                files.extend(
                    [&p.responses, &p.reference, &p.samples]
                        .into_iter()
                        .flatten()
                        .map(PathBuf::as_path),
                );
            }
        }
        for f in files {
            if !f.exists() {
                bail!("missing input file {}", f.display());
            }
        }
        Ok(())
    }
}

/// Output directory: explicit flag, then the config's `out`, then
/// `out/<name>`; relative results are placed under `$PLATSEC_OUT_ROOT`
/// when it is set.
pub fn output_dir(flag: Option<&Path>, cfg: &ExperimentConfig) -> PathBuf {
    let p = flag
        .map(Path::to_path_buf)
        .or_else(|| cfg.out.clone())
        .unwrap_or_else(|| PathBuf::from("out").join(&cfg.name));
    match std::env::var_os(OUT_ROOT_ENV) {
        Some(root) if p.is_relative() => PathBuf::from(root).join(p),
        _ => p,
    }
}
