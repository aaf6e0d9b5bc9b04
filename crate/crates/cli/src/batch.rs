// SPDX-License-Identifier: Apache-2.0

//! Batch execution of an experiment config.

use std::fs;
use std::path::Path;

use anyhow::{Context, Result};
use platsec_core::assurance::{
    cdc, controllability, fsm_fi_vulnerability, observability, observation_hardness, puf_inter_hd,
    puf_intra_hd, read_defects, read_hex_responses, CtfForm, FsmSpec,
};
use platsec_core::netlist::Circuit;
use platsec_core::power::{Granularity, NoiseIp};
use platsec_core::psc::estimation::{IpAttributes, ProfileDb};
use platsec_core::psc::metrics::MetricReport;
use platsec_core::sat_estimation::{write_dataset, FitBasis};
use platsec_core::EstimationModel;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::config::{ExperimentConfig, MetricsTask, PscTask, SatTask};
use crate::flows::{
    attack_budget, estimate, load_bench, measure, parse_key, parse_solver, random_plaintexts,
    run_attack, write_json, AttackRun, AttackSetup, MeasureRecord, PscSetup,
};
use crate::report::{metrics_rows, sat_series, write_csv};

/// Directory name for outputs that depend on wall-clock time.
pub const WALL_CLOCK_DIR: &str = "wall_clock";

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct BatchOutcome {
    pub name: String,
    pub runs: usize,
    pub failures: Vec<String>,
}

impl BatchOutcome {
    /// 0 when every run completed within budget, 1 otherwise.
    pub fn exit_code(&self) -> i32 {
        if self.failures.is_empty() {
            0
        } else {
            1
        }
    }
}

/// Runs every task of `cfg`, writing results under `out`. Configuration
/// problems are returned as errors; failed runs are listed in the outcome.
pub fn run_batch(cfg: &ExperimentConfig, out: &Path) -> Result<BatchOutcome> {
    cfg.validate()?;
    fs::create_dir_all(out).with_context(|| format!("creating {}", out.display()))?;
    let workers = cfg.workers.unwrap_or(0);
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()?;
    let mut outcome = BatchOutcome {
        name: cfg.name.clone(),
        ..Default::default()
    };
    pool.install(|| -> Result<()> {
        if let Some(sat) = &cfg.sat {
            run_sat(cfg, sat, &out.join("sat"), &mut outcome)?;
        }
        if let Some(psc) = &cfg.psc {
            run_psc(cfg, psc, &out.join("psc"), &mut outcome)?;
        }
        if let Some(m) = &cfg.metrics {
            run_metrics(m, &out.join("metrics"), &mut outcome)?;
        }
        Ok(())
    })?;
    write_json(&out.join("summary.json"), &outcome)?;
    Ok(outcome)
}

fn run_sat(
    cfg: &ExperimentConfig,
    task: &SatTask,
    out: &Path,
    outcome: &mut BatchOutcome,
) -> Result<()> {
    let circuits: Vec<Circuit> = task
        .benchmarks
        .iter()
        .map(|p| load_bench(p))
        .collect::<Result<_>>()?;
    let backend = parse_solver(&cfg.solver, cfg.seed)?;
    let budget = attack_budget(cfg.timeout_s, task.max_iterations);
    let mut jobs = Vec::new();
    for (ci, _) in circuits.iter().enumerate() {
        for &k in &task.key_lengths {
            for &cr in &task.crs {
                for &s in &task.seeds {
                    jobs.push((
                        ci,
                        AttackSetup {
                            key_length: k,
                            lock_seed: s,
                            chains: task.chains,
                            cr,
                            budget: budget.clone(),
                            backend: backend.clone(),
                        },
                    ));
                }
            }
        }
    }
    let results: Vec<(String, Result<AttackRun>)> = jobs
        .par_iter()
        .map(|(ci, setup)| {
            let id = format!(
                "{}_k{}_cr{}_s{}",
                circuits[*ci].name(),
                setup.key_length,
                setup.cr,
                setup.lock_seed
            );
            (id, run_attack(&circuits[*ci], setup))
        })
        .collect();

    let mut runs = Vec::new();
    for (id, r) in results {
        outcome.runs += 1;
        match r {
            Ok(run) => {
                if !run.succeeded() {
                    outcome.failures.push(format!("sat {id}: {:?}", run.status));
                }
                write_json(&out.join("runs").join(format!("{id}.json")), &run)?;
                runs.push(run);
            }
            Err(e) => outcome.failures.push(format!("sat {id}: {e:#}")),
        }
    }

    let header = [
        "design",
        "key_length",
        "cr",
        "chains",
        "lock_seed",
        "num_gates",
        "num_pi",
        "num_po",
        "num_ffio",
        "iterations",
        "status",
        "key_verified",
        "correct_key",
        "recovered_key",
        "wall_elapsed_s",
    ];
    let rows: Vec<Vec<String>> = runs
        .iter()
        .map(|r| {
            vec![
                r.design.clone(),
                r.key_length.to_string(),
                r.cr.to_string(),
                r.chains.to_string(),
                r.lock_seed.to_string(),
                r.metadata.num_gates.to_string(),
                r.metadata.num_primary_inputs.to_string(),
                r.metadata.num_primary_outputs.to_string(),
                r.metadata.num_flip_flop_io.to_string(),
                r.iterations.to_string(),
                format!("{:?}", r.status).to_lowercase(),
                r.verification
                    .as_ref()
                    .is_some_and(|v| v.passed())
                    .to_string(),
                r.correct_key.clone(),
                r.recovered_key.clone().unwrap_or_default(),
                format!("{:.6}", r.wall_clock.elapsed_s),
            ]
        })
        .collect();
    write_csv(&out.join("runs.csv"), &header, &rows)?;
    let (h, series) = sat_series(&runs);
    write_csv(&out.join("series.csv"), &h, &series)?;

    let records: Vec<_> = runs
        .iter()
        .filter(|r| r.succeeded())
        .map(AttackRun::record)
        .collect();
    let mut buf = Vec::new();
    write_dataset(&mut buf, &records)?;
    fs::write(out.join("dataset.csv"), buf)?;

    if task.fit {
        let basis = if task.fit_basis == "iterations" {
            FitBasis::Iterations
        } else {
            FitBasis::Seconds
        };
        match EstimationModel::fit(&records, basis, task.max_submodels) {
            Ok(model) => {
                let path = if basis == FitBasis::Seconds {
                    out.join(WALL_CLOCK_DIR).join("model.json")
                } else {
                    out.join("model.json")
                };
                write_json(&path, &model)?;
            }
            Err(e) => outcome.failures.push(format!("sat-fit: {e}")),
        }
    }
    Ok(())
}

fn noise_roster(cfg: &ExperimentConfig, task: &PscTask) -> Result<Vec<NoiseIp>> {
    task.noise
        .iter()
        .enumerate()
        .map(|(i, p)| {
            let circuit = load_bench(p)?;
            Ok(NoiseIp {
                name: circuit.name().to_string(),
                circuit,
                seed: noise_seed(cfg.seed, i),
            })
        })
        .collect()
}

/// Stimulus seed of roster entry `i`; the profile database built from the
/// roster uses the same seeds.
pub fn noise_seed(base: u64, i: usize) -> u64 {
    base.wrapping_add(i as u64)
}

fn run_psc(
    cfg: &ExperimentConfig,
    task: &PscTask,
    out: &Path,
    outcome: &mut BatchOutcome,
) -> Result<()> {
    let roster = noise_roster(cfg, task)?;
    let thresholds = task.thresholds()?;
    let plaintexts = random_plaintexts(task.plaintexts, cfg.seed);
    let key1 = parse_key(&task.key1)?;
    let key2 = parse_key(&task.key2)?;
    let db = if !task.estimate {
        None
    } else if let Some(dir) = &task.db {
        Some(ProfileDb::load(dir)?)
    } else if roster.is_empty() {
        None
    } else {
        let circuits: Vec<Circuit> = roster.iter().map(|n| n.circuit.clone()).collect();
        let cycles = task
            .db_cycles
            .unwrap_or(task.plaintexts * platsec_core::power::AES_CYCLES);
        let db = ProfileDb::build(&circuits, cycles, noise_seed(cfg.seed, 0))?;
        db.save(&out.join("db"))?;
        Some(db)
    };

    let header = [
        "noise_ips",
        "measured_js",
        "measured_js_per_encryption",
        "measured_score",
        "estimated_js",
        "estimated_js_per_encryption",
        "estimated_score",
    ];
    let mut rows = Vec::new();
    for &k in &task.noise_counts {
        outcome.runs += 1;
        let dir = out.join(format!("noise_{k}"));
        let setup = PscSetup {
            noise: roster[..k].to_vec(),
            plaintexts: plaintexts.clone(),
            key1,
            key2,
            bins: task.bins,
            thresholds: thresholds.clone(),
        };
        let mut row = vec![k.to_string()];
        if task.measure {
            match measure(&setup) {
                Ok(run) => {
                    let rec = MeasureRecord::new(&setup, &run.measurement);
                    write_json(&dir.join("measurement.json"), &rec)?;
                    let mut buf = Vec::new();
                    run.measurement.matrix.write_csv(&mut buf)?;
                    fs::write(dir.join("js_matrix.csv"), buf)?;
                    for (name, t) in [
                        ("trace_key1.csv", &run.trace1),
                        ("trace_key2.csv", &run.trace2),
                    ] {
                        let mut buf = Vec::new();
                        t.write_csv(&mut buf, Granularity::PerEncryption)?;
                        fs::write(dir.join(name), buf)?;
                    }
                    row.extend([
                        fmt(rec.js),
                        fmt(rec.js_per_encryption),
                        rec.score.to_string(),
                    ]);
                }
                Err(e) => {
                    outcome
                        .failures
                        .push(format!("psc-measure noise_{k}: {e:#}"));
                    row.extend(["".into(), "".into(), "".into()]);
                }
            }
        } else {
            row.extend(["".into(), "".into(), "".into()]);
        }
        match &db {
            Some(db) => {
                let noise: Vec<(String, IpAttributes)> = setup
                    .noise
                    .iter()
                    .map(|n| (n.name.clone(), IpAttributes::from_circuit(&n.circuit)))
                    .collect();
                match estimate(
                    &key1,
                    &key2,
                    &plaintexts,
                    &noise,
                    db,
                    task.bins,
                    &thresholds,
                    cfg.seed,
                ) {
                    Ok(rec) => {
                        write_json(&dir.join("estimate.json"), &rec)?;
                        row.extend([
                            fmt(rec.js),
                            fmt(rec.js_per_encryption),
                            rec.score.to_string(),
                        ]);
                    }
                    Err(e) => {
                        outcome
                            .failures
                            .push(format!("psc-estimate noise_{k}: {e:#}"));
                        row.extend(["".into(), "".into(), "".into()]);
                    }
                }
            }
            None => row.extend(["".into(), "".into(), "".into()]),
        }
        rows.push(row);
    }
    write_csv(&out.join("summary.csv"), &header, &rows)
}

fn fmt(x: f64) -> String {
    format!("{x:.10}")
}

fn stem(p: &Path) -> String {
    p.file_stem()
        .and_then(|s| s.to_str())
        .unwrap_or("input")
        .to_string()
}

fn run_metrics(task: &MetricsTask, out: &Path, outcome: &mut BatchOutcome) -> Result<()> {
    let mut reports: Vec<(String, MetricReport)> = Vec::new();
    let form = if task.classical_ctf {
        CtfForm::Classical
    } else {
        CtfForm::Fractional
    };
    let mut attempt = |what: String, f: &mut dyn FnMut() -> Result<Vec<MetricReport>>| {
        outcome.runs += 1;
        match f() {
            Ok(rs) => reports.extend(rs.into_iter().map(|r| (what.clone(), r))),
            Err(e) => outcome.failures.push(format!("metrics {what}: {e:#}")),
        }
    };
    for p in &task.scoap {
        attempt(stem(p), &mut || {
            let c = load_bench(p)?;
            let r = scoap_report(&c, form)?;
            write_json(&out.join(format!("scoap_{}.json", c.name())), &r)?;
            Ok(r.summary)
        });
    }
    for o in &task.oh {
        attempt(format!("{}:{}", stem(&o.bench), o.node), &mut || {
            let c = load_bench(&o.bench)?;
            let v: f64 = observation_hardness(&c, &o.node, o.patterns, 0)?;
            Ok(vec![MetricReport {
                metric: "observation_hardness".into(),
                value: v,
                params: json!({"design": c.name(), "node": o.node, "patterns": o.patterns}),
                threshold_profile: None,
            }])
        });
    }
    for f in &task.fsm {
        attempt(stem(&f.transitions), &mut || {
            let spec = FsmSpec::read_transitions(fs::File::open(&f.transitions)?, f.p_fs.clone())?;
            fsm_reports(&spec, &stem(&f.transitions))
        });
    }
    for (i, p) in task.puf.iter().enumerate() {
        attempt(format!("puf{i}"), &mut || {
            puf_reports(
                p.responses.as_deref(),
                p.reference.as_deref(),
                p.samples.as_deref(),
            )
        });
    }
    for p in &task.cdc {
        attempt(stem(p), &mut || {
            let defects = read_defects(fs::File::open(p)?)?;
            Ok(vec![MetricReport {
                metric: "cdc_percent".into(),
                value: cdc::<f64>(&defects)?,
                params: json!({"defects": defects.len(), "source": stem(p)}),
                threshold_profile: None,
            }])
        });
    }
    let (header, rows) = metrics_rows(&reports);
    write_json(
        &out.join("reports.json"),
        &reports.iter().map(|(_, r)| r).collect::<Vec<_>>(),
    )?;
    write_csv(&out.join("reports.csv"), &header, &rows)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoapReport {
    pub kind: String,
    pub design: String,
    pub ctf_form: CtfForm,
    pub nets: Vec<String>,
    pub controllability: Vec<f64>,
    pub observability: Vec<f64>,
    pub summary: Vec<MetricReport>,
}

pub fn scoap_report(c: &Circuit, form: CtfForm) -> Result<ScoapReport> {
    let cy: Vec<f64> = controllability(c, form)?;
    let oy: Vec<f64> = observability(c)?;
    let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len().max(1) as f64;
    let min = |v: &[f64]| v.iter().copied().fold(f64::INFINITY, f64::min);
    let params = json!({"design": c.name(), "ctf_form": form});
    let summary = vec![
        MetricReport {
            metric: "controllability_mean".into(),
            value: mean(&cy),
            params: params.clone(),
            threshold_profile: None,
        },
        MetricReport {
            metric: "controllability_min".into(),
            value: min(&cy),
            params: params.clone(),
            threshold_profile: None,
        },
        MetricReport {
            metric: "observability_mean".into(),
            value: mean(&oy),
            params: params.clone(),
            threshold_profile: None,
        },
        MetricReport {
            metric: "observability_min".into(),
            value: min(&oy),
            params,
            threshold_profile: None,
        },
    ];
    Ok(ScoapReport {
        kind: "metrics".into(),
        design: c.name().to_string(),
        ctf_form: form,
        nets: c.net_names().to_vec(),
        controllability: cy,
        observability: oy,
        summary,
    })
}

pub fn fsm_reports(spec: &FsmSpec<f64>, source: &str) -> Result<Vec<MetricReport>> {
    let v = fsm_fi_vulnerability(spec)?;
    let params = json!({
        "source": source,
        "transitions": spec.transitions.len(),
        "susceptibility": v.susceptibility,
    });
    let mut out = vec![MetricReport {
        metric: "fsm_pvt_percent".into(),
        value: v.pvt_percent,
        params: params.clone(),
        threshold_profile: None,
    }];
    // ASF is undefined without vulnerable transitions; the report says so
    out.push(MetricReport {
        metric: "fsm_asf".into(),
        value: v.asf.unwrap_or(f64::NAN),
        params: json!({"source": source, "defined": v.asf.is_some()}),
        threshold_profile: None,
    });
    Ok(out)
}

pub fn puf_reports(
    responses: Option<&Path>,
    reference: Option<&Path>,
    samples: Option<&Path>,
) -> Result<Vec<MetricReport>> {
    let mut out = Vec::new();
    if let Some(p) = responses {
        let rs = read_hex_responses(&fs::read_to_string(p)?)?;
        out.push(MetricReport {
            metric: "puf_inter_hd_percent".into(),
            value: puf_inter_hd::<f64>(&rs)?,
            params: json!({"responses": rs.len(), "bits": rs[0].len(), "source": stem(p)}),
            threshold_profile: None,
        });
    }
    if let (Some(r), Some(s)) = (reference, samples) {
        let reference = read_hex_responses(&fs::read_to_string(r)?)?;
        let reference = reference
            .first()
            .ok_or_else(|| anyhow::anyhow!("{} holds no response", r.display()))?;
        let ss = read_hex_responses(&fs::read_to_string(s)?)?;
        out.push(MetricReport {
            metric: "puf_intra_hd_percent".into(),
            value: puf_intra_hd::<f64>(reference, &ss)?,
            params: json!({"samples": ss.len(), "bits": reference.len(), "source": stem(s)}),
            threshold_profile: None,
        });
    }
    Ok(out)
}
