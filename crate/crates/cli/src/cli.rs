// SPDX-License-Identifier: Apache-2.0

//! Command-line interface.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use anyhow::{anyhow, bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use platsec_core::assurance::{observation_hardness, read_defects, CtfForm, FsmSpec};
use platsec_core::locking::insert_random_locking;
use platsec_core::netlist::{extract_metadata, write_bench};
use platsec_core::platform::{compose_platform_frame, frame, ScanTopology};
use platsec_core::power::{Granularity, NoiseIp, AES_CYCLES};
use platsec_core::psc::estimation::{
    synthesize_circuit, IpAttributes, ProfileDb, ISCAS89_ATTRIBUTES,
};
use platsec_core::psc::metrics::MetricReport;
use platsec_core::sat::{format_dimacs_solution, parse_dimacs};
use platsec_core::sat_estimation::{read_dataset, FitBasis, DEFAULT_SUBMODELS};
use platsec_core::{EstimationModel, ScoreThresholds};
use serde_json::json;

use crate::batch::{fsm_reports, noise_seed, puf_reports, run_batch, scoap_report};
use crate::config::{output_dir, ExperimentConfig};
use crate::digest::digest_dir;
use crate::flows::{
    attack_budget, estimate, load_bench, measure, parse_key, parse_solver, random_plaintexts,
    run_attack, AttackSetup, MeasureRecord, PscSetup,
};
use crate::report::{build_report, collect_results, write_csv, ReportKind};

/// Exit code for invalid configuration or arguments.
pub const EXIT_INVALID: i32 = 2;
/// Exit code when some runs failed or timed out.
pub const EXIT_PARTIAL: i32 = 1;

#[derive(Debug, Parser)]
#[command(
    name = "platsec",
    version,
    about = "Platform-level hardware security measurement and estimation"
)]
pub struct Cli {
    #[command(flatten)]
    pub global: Global,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args, Clone, Default)]
pub struct Global {
    /// Experiment config (TOML); flags given here override its values.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Output directory.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    #[arg(long, global = true)]
    pub workers: Option<usize>,
    #[arg(long = "timeout-s", global = true)]
    pub timeout_s: Option<f64>,
    /// `builtin` or `dimacs:<path>`.
    #[arg(long, global = true)]
    pub solver: Option<String>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Insert XOR/XNOR key gates.
    Lock {
        bench: PathBuf,
        #[arg(long)]
        key_length: usize,
    },
    /// One-cycle combinational view of a sequential design.
    Frame { bench: PathBuf },
    /// Frame composed with scan decompressor and compactor.
    Compose {
        bench: PathBuf,
        #[arg(long)]
        chains: usize,
        #[arg(long)]
        cr: usize,
    },
    /// SAT attack through the scan interface.
    Attack {
        bench: PathBuf,
        #[arg(long)]
        key_length: usize,
        #[arg(long, default_value_t = 1)]
        cr: usize,
        #[arg(long)]
        chains: Option<usize>,
        #[arg(long)]
        max_iterations: Option<usize>,
    },
    /// Fit the CR multiplier model on a dataset CSV.
    SatFit {
        dataset: PathBuf,
        #[arg(long, default_value = "seconds")]
        basis: String,
        #[arg(long, default_value_t = DEFAULT_SUBMODELS)]
        max_submodels: usize,
    },
    /// Platform-level attack effort from an IP-level measurement.
    SatEstimate {
        #[arg(long)]
        model: PathBuf,
        bench: PathBuf,
        #[arg(long)]
        key_length: usize,
        #[arg(long)]
        cr: f64,
        /// Attack effort measured on the bare IP (seconds or iterations).
        #[arg(long)]
        ip_level: f64,
    },
    /// Simulate AES plus noise IPs under two keys and compute JS.
    PscMeasure(PscArgs),
    /// Estimate JS from a profile database instead of simulating.
    PscEstimate {
        #[command(flatten)]
        psc: PscArgs,
        #[arg(long)]
        db: PathBuf,
    },
    /// Build a profile database from .bench files.
    PscDb {
        benches: Vec<PathBuf>,
        #[arg(long, default_value_t = 100 * AES_CYCLES)]
        cycles: usize,
    },
    /// Hardware assurance metrics.
    #[command(subcommand)]
    Metrics(MetricsCommand),
    /// Tabulate stored JSON results of one kind.
    Report {
        inputs: Vec<PathBuf>,
        /// sat, psc or metrics.
        #[arg(long)]
        kind: Option<String>,
    },
    /// Run a config in batch mode.
    Run,
    /// Digest of an output tree without wall-clock fields.
    Digest { dir: PathBuf },
    /// DIMACS solver front end (reads a CNF file, prints s/v lines).
    #[command(hide = true)]
    Solve { cnf: PathBuf },
    /// Write synthetic ISCAS'89-sized benches.
    #[command(hide = true)]
    Synth { dir: PathBuf },
}

#[derive(Debug, Args, Clone)]
pub struct PscArgs {
    /// Noise IP .bench files.
    #[arg(long = "noise")]
    pub noise: Vec<PathBuf>,
    #[arg(long, default_value_t = 100)]
    pub plaintexts: usize,
    #[arg(long, default_value = "00000000000000000000000000000000")]
    pub key1: String,
    #[arg(long, default_value = "ffffffffffffffffffffffffffffffff")]
    pub key2: String,
    #[arg(long)]
    pub bins: Option<usize>,
    /// Four descending JS cuts, comma separated.
    #[arg(long, value_delimiter = ',', num_args = 4)]
    pub thresholds: Option<Vec<f64>>,
}

#[derive(Debug, Subcommand)]
pub enum MetricsCommand {
    /// Controllability and observability of every net.
    Scoap {
        bench: PathBuf,
        #[arg(long)]
        classical_ctf: bool,
    },
    /// Observation hardness of one net under PI stuck-at faults.
    Oh {
        bench: PathBuf,
        #[arg(long)]
        node: String,
        #[arg(long, default_value_t = 1024)]
        patterns: usize,
    },
    /// FSM fault-injection vulnerability.
    FsmFi {
        transitions: PathBuf,
        /// Path delays of the full design, comma separated.
        #[arg(long, value_delimiter = ',')]
        p_fs: Vec<f64>,
    },
    /// PUF uniqueness and reproducibility.
    Puf {
        #[arg(long)]
        responses: Option<PathBuf>,
        #[arg(long)]
        reference: Option<PathBuf>,
        #[arg(long)]
        samples: Option<PathBuf>,
    },
    /// Coverage of detected defects.
    Cdc { defects: PathBuf },
}

/// Typed error that carries the exit code.
#[derive(Debug)]
pub struct Exit(pub i32, pub anyhow::Error);

fn invalid(e: anyhow::Error) -> Exit {
    Exit(EXIT_INVALID, e)
}

fn thresholds(t: &Option<Vec<f64>>) -> Result<ScoreThresholds> {
    match t {
        None => Ok(ScoreThresholds::default()),
        Some(v) => Ok(ScoreThresholds::new([v[0], v[1], v[2], v[3]])?),
    }
}

struct Ctx {
    seed: u64,
    out: Option<PathBuf>,
    timeout_s: Option<f64>,
    solver: String,
}

impl Ctx {
    fn from(g: &Global, cfg: Option<&ExperimentConfig>) -> Ctx {
        Ctx {
            seed: g.seed.or(cfg.map(|c| c.seed)).unwrap_or(0),
            out: g.out.clone(),
            timeout_s: g.timeout_s.or(cfg.and_then(|c| c.timeout_s)),
            solver: g
                .solver
                .clone()
                .or(cfg.map(|c| c.solver.clone()))
                .unwrap_or_else(|| "builtin".into()),
        }
    }

    /// Writes `text` to `<out>/<name>` or stdout.
    fn emit(&self, name: &str, text: &str) -> Result<()> {
        match &self.out {
            Some(dir) => {
                fs::create_dir_all(dir)?;
                let p = dir.join(name);
                fs::write(&p, text).with_context(|| format!("writing {}", p.display()))?;
                eprintln!("wrote {}", p.display());
                Ok(())
            }
            None => {
                std::io::stdout().write_all(text.as_bytes())?;
                Ok(())
            }
        }
    }

    fn emit_json<T: serde::Serialize>(&self, name: &str, v: &T) -> Result<()> {
        let mut s = serde_json::to_string_pretty(v)?;
        s.push('\n');
        self.emit(name, &s)
    }
}

fn stem(p: &Path) -> String {
    p.file_stem()
        .and_then(|s| s.to_str())
        .unwrap_or("design")
        .to_string()
}

fn psc_setup(a: &PscArgs, seed: u64) -> Result<PscSetup> {
    let noise = a
        .noise
        .iter()
        .enumerate()
        .map(|(i, p)| {
            let circuit = load_bench(p)?;
            Ok(NoiseIp {
                name: circuit.name().to_string(),
                circuit,
                seed: noise_seed(seed, i),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    if a.plaintexts == 0 {
        bail!("need at least one plaintext");
    }
    Ok(PscSetup {
        noise,
        plaintexts: random_plaintexts(a.plaintexts, seed),
        key1: parse_key(&a.key1)?,
        key2: parse_key(&a.key2)?,
        bins: a.bins,
        thresholds: thresholds(&a.thresholds)?,
    })
}

/// Parses `args` and runs the command; returns the process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_INVALID } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    match dispatch(cli) {
        Ok(code) => code,
        Err(Exit(code, e)) => {
            eprintln!("error: {e:#}");
            code
        }
    }
}

fn dispatch(cli: Cli) -> Result<i32, Exit> {
    let cfg = match &cli.global.config {
        Some(p) => Some(ExperimentConfig::load(p).map_err(invalid)?),
        None => None,
    };
    let ctx = Ctx::from(&cli.global, cfg.as_ref());
    match cli.command {
        Command::Run => {
            let mut cfg = cfg.ok_or_else(|| invalid(anyhow!("run needs --config")))?;
            let g = &cli.global;
            if let Some(s) = g.seed {
                cfg.seed = s;
            }
            if let Some(w) = g.workers {
                cfg.workers = Some(w);
            }
            if let Some(t) = g.timeout_s {
                cfg.timeout_s = Some(t);
            }
            if let Some(s) = &g.solver {
                cfg.solver = s.clone();
            }
            cfg.validate().map_err(invalid)?;
            let out = output_dir(g.out.as_deref(), &cfg);
            let outcome = run_batch(&cfg, &out).map_err(|e| Exit(EXIT_PARTIAL, e))?;
            for f in &outcome.failures {
                eprintln!("failed: {f}");
            }
            println!(
                "{} runs, {} failed; results in {}",
                outcome.runs,
                outcome.failures.len(),
                out.display()
            );
            Ok(outcome.exit_code())
        }
        other => single(other, &ctx),
    }
}

fn single(cmd: Command, ctx: &Ctx) -> Result<i32, Exit> {
    match cmd {
        Command::Lock { bench, key_length } => {
            let c = load_bench(&bench).map_err(invalid)?;
            let locked =
                insert_random_locking(&c, key_length, ctx.seed).map_err(|e| invalid(e.into()))?;
            let name = stem(&bench);
            ctx.emit(&format!("{name}_locked.bench"), &write_bench(locked.core()))
                .map_err(|e| Exit(1, e))?;
            eprintln!("key {}", locked.correct_key());
            if ctx.out.is_some() {
                ctx.emit(
                    &format!("{name}_key.txt"),
                    &format!("{}\n", locked.correct_key()),
                )
                .map_err(|e| Exit(1, e))?;
            }
            Ok(0)
        }
        Command::Frame { bench } => {
            let c = load_bench(&bench).map_err(invalid)?;
            ctx.emit(
                &format!("{}_frame.bench", stem(&bench)),
                &write_bench(&frame(&c).frame),
            )
            .map_err(|e| Exit(1, e))?;
            Ok(0)
        }
        Command::Compose { bench, chains, cr } => {
            let c = load_bench(&bench).map_err(invalid)?;
            let topo = ScanTopology::for_flip_flops(c.flip_flops().len(), chains, cr)
                .map_err(|e| invalid(e.into()))?;
            let pm = compose_platform_frame(&frame(&c), &topo).map_err(|e| invalid(e.into()))?;
            ctx.emit(
                &format!("{}_cr{cr}.bench", stem(&bench)),
                &write_bench(&pm.circuit),
            )
            .map_err(|e| Exit(1, e))?;
            Ok(0)
        }
        Command::Attack {
            bench,
            key_length,
            cr,
            chains,
            max_iterations,
        } => {
            let c = load_bench(&bench).map_err(invalid)?;
            let setup = AttackSetup {
                key_length,
                lock_seed: ctx.seed,
                chains: chains.unwrap_or(cr.max(1)),
                cr,
                budget: attack_budget(ctx.timeout_s, max_iterations),
                backend: parse_solver(&ctx.solver, ctx.seed).map_err(invalid)?,
            };
            let run = run_attack(&c, &setup).map_err(invalid)?;
            ctx.emit_json(
                &format!("{}_k{key_length}_cr{cr}_s{}.json", c.name(), ctx.seed),
                &run,
            )
            .map_err(|e| Exit(1, e))?;
            Ok(if run.succeeded() { 0 } else { EXIT_PARTIAL })
        }
        Command::SatFit {
            dataset,
            basis,
            max_submodels,
        } => {
            let basis = match basis.as_str() {
                "seconds" => FitBasis::Seconds,
                "iterations" => FitBasis::Iterations,
                b => return Err(invalid(anyhow!("unknown basis {b:?}"))),
            };
            let f = fs::File::open(&dataset)
                .with_context(|| format!("opening {}", dataset.display()))
                .map_err(invalid)?;
            let recs = read_dataset(f).map_err(|e| invalid(e.into()))?;
            let model =
                EstimationModel::fit(&recs, basis, max_submodels).map_err(|e| Exit(1, e.into()))?;
            ctx.emit_json("model.json", &model)
                .map_err(|e| Exit(1, e))?;
            Ok(0)
        }
        Command::SatEstimate {
            model,
            bench,
            key_length,
            cr,
            ip_level,
        } => {
            let text = fs::read_to_string(&model)
                .with_context(|| format!("reading {}", model.display()))
                .map_err(invalid)?;
            let m = EstimationModel::from_json(&text).map_err(|e| invalid(e.into()))?;
            let c = load_bench(&bench).map_err(invalid)?;
            let meta = extract_metadata(&c, key_length);
            let (i, sim) = m.select(&meta).map_err(|e| Exit(1, e.into()))?;
            let est = m
                .estimate(&meta, cr, ip_level)
                .map_err(|e| Exit(1, e.into()))?;
            let v = json!({
                "kind": "sat-estimate",
                "design": c.name(),
                "key_length": key_length,
                "cr": cr,
                "ip_level": ip_level,
                "basis": m.basis,
                "sub_model": m.sub_models[i].metadata.name,
                "similarity": sim,
                "estimate": est,
            });
            ctx.emit_json(&format!("{}_estimate.json", c.name()), &v)
                .map_err(|e| Exit(1, e))?;
            Ok(0)
        }
        Command::PscMeasure(a) => {
            let setup = psc_setup(&a, ctx.seed).map_err(invalid)?;
            let run = measure(&setup).map_err(|e| Exit(1, e))?;
            let rec = MeasureRecord::new(&setup, &run.measurement);
            ctx.emit_json("measurement.json", &rec)
                .map_err(|e| Exit(1, e))?;
            if let Some(dir) = &ctx.out {
                let res: Result<()> = (|| {
                    let mut buf = Vec::new();
                    run.measurement.matrix.write_csv(&mut buf)?;
                    fs::write(dir.join("js_matrix.csv"), buf)?;
                    for (n, t) in [
                        ("trace_key1.csv", &run.trace1),
                        ("trace_key2.csv", &run.trace2),
                    ] {
                        let mut buf = Vec::new();
                        t.write_csv(&mut buf, Granularity::PerEncryption)?;
                        fs::write(dir.join(n), buf)?;
                    }
                    Ok(())
                })();
                res.map_err(|e| Exit(1, e))?;
            }
            Ok(0)
        }
        Command::PscEstimate { psc, db } => {
            let setup = psc_setup(&psc, ctx.seed).map_err(invalid)?;
            let db = ProfileDb::load(&db).map_err(|e| invalid(e.into()))?;
            let noise: Vec<(String, IpAttributes)> = setup
                .noise
                .iter()
                .map(|n| (n.name.clone(), IpAttributes::from_circuit(&n.circuit)))
                .collect();
            let rec = estimate(
                &setup.key1,
                &setup.key2,
                &setup.plaintexts,
                &noise,
                &db,
                setup.bins,
                &setup.thresholds,
                ctx.seed,
            )
            .map_err(|e| Exit(1, e))?;
            ctx.emit_json("estimate.json", &rec)
                .map_err(|e| Exit(1, e))?;
            Ok(0)
        }
        Command::PscDb { benches, cycles } => {
            let out = ctx
                .out
                .clone()
                .ok_or_else(|| invalid(anyhow!("psc-db needs --out")))?;
            let circuits = benches
                .iter()
                .map(|p| load_bench(p))
                .collect::<Result<Vec<_>>>()
                .map_err(invalid)?;
            let db =
                ProfileDb::build(&circuits, cycles, ctx.seed).map_err(|e| Exit(1, e.into()))?;
            db.save(&out).map_err(|e| Exit(1, e.into()))?;
            eprintln!("{} profiles in {}", db.profiles.len(), out.display());
            Ok(0)
        }
        Command::Metrics(m) => metrics(m, ctx).map(|_| 0),
        Command::Report { inputs, kind } => {
            let kind = kind
                .as_deref()
                .map(ReportKind::parse)
                .transpose()
                .map_err(invalid)?;
            let results = collect_results(&inputs).map_err(invalid)?;
            let (h, rows) = build_report(&results, kind).map_err(invalid)?;
            match &ctx.out {
                Some(dir) => {
                    write_csv(&dir.join("report.csv"), &h, &rows).map_err(|e| Exit(1, e))?
                }
                None => {
                    let mut w = csv::Writer::from_writer(std::io::stdout());
                    let res: Result<()> = (|| {
                        w.write_record(&h)?;
                        for r in &rows {
                            w.write_record(r)?;
                        }
                        w.flush()?;
                        Ok(())
                    })();
                    res.map_err(|e| Exit(1, e))?;
                }
            }
            Ok(0)
        }
        Command::Digest { dir } => {
            let d = digest_dir(&dir).map_err(invalid)?;
            println!("{d}");
            Ok(0)
        }
        Command::Solve { cnf } => {
            let text = fs::read_to_string(&cnf)
                .with_context(|| format!("reading {}", cnf.display()))
                .map_err(invalid)?;
            let f = parse_dimacs(&text).map_err(|e| invalid(e.into()))?;
            let r = f
                .to_solver(ctx.seed)
                .solve(&[])
                .map_err(|e| Exit(1, e.into()))?;
            print!("{}", format_dimacs_solution(&r));
            Ok(0)
        }
        Command::Synth { dir } => {
            fs::create_dir_all(&dir).map_err(|e| Exit(1, e.into()))?;
            for (name, attrs) in ISCAS89_ATTRIBUTES {
                let c =
                    synthesize_circuit(name, &attrs, ctx.seed).map_err(|e| Exit(1, e.into()))?;
                let p = dir.join(format!("{name}_synth.bench"));
                fs::write(&p, write_bench(&c)).map_err(|e| Exit(1, e.into()))?;
            }
            Ok(0)
        }
        Command::Run => unreachable!("handled by dispatch"),
    }
}

fn metrics(cmd: MetricsCommand, ctx: &Ctx) -> Result<(), Exit> {
    let wrap = |e: anyhow::Error| Exit(1, e);
    match cmd {
        MetricsCommand::Scoap {
            bench,
            classical_ctf,
        } => {
            let c = load_bench(&bench).map_err(invalid)?;
            let form = if classical_ctf {
                CtfForm::Classical
            } else {
                CtfForm::Fractional
            };
            let r = scoap_report(&c, form).map_err(wrap)?;
            ctx.emit_json(&format!("scoap_{}.json", c.name()), &r)
                .map_err(wrap)
        }
        MetricsCommand::Oh {
            bench,
            node,
            patterns,
        } => {
            let c = load_bench(&bench).map_err(invalid)?;
            let v: f64 = observation_hardness(&c, &node, patterns, ctx.seed)
                .map_err(|e| invalid(e.into()))?;
            let r = vec![MetricReport {
                metric: "observation_hardness".into(),
                value: v,
                params: json!({"design": c.name(), "node": node, "patterns": patterns}),
                threshold_profile: None,
            }];
            ctx.emit_json(&format!("oh_{}.json", c.name()), &r)
                .map_err(wrap)
        }
        MetricsCommand::FsmFi { transitions, p_fs } => {
            let f = fs::File::open(&transitions)
                .with_context(|| format!("opening {}", transitions.display()))
                .map_err(invalid)?;
            let spec = FsmSpec::read_transitions(f, p_fs).map_err(|e| invalid(e.into()))?;
            let r = fsm_reports(&spec, &stem(&transitions)).map_err(wrap)?;
            ctx.emit_json("fsm_fi.json", &r).map_err(wrap)
        }
        MetricsCommand::Puf {
            responses,
            reference,
            samples,
        } => {
            if responses.is_none() && (reference.is_none() || samples.is_none()) {
                return Err(invalid(anyhow!(
                    "give --responses, or --reference with --samples"
                )));
            }
            let r = puf_reports(
                responses.as_deref(),
                reference.as_deref(),
                samples.as_deref(),
            )
            .map_err(invalid)?;
            ctx.emit_json("puf.json", &r).map_err(wrap)
        }
        MetricsCommand::Cdc { defects } => {
            let f = fs::File::open(&defects)
                .with_context(|| format!("opening {}", defects.display()))
                .map_err(invalid)?;
            let d = read_defects::<f64, _>(f).map_err(|e| invalid(e.into()))?;
            let v = platsec_core::assurance::cdc::<f64>(&d).map_err(|e| invalid(e.into()))?;
            let r = vec![MetricReport {
                metric: "cdc_percent".into(),
                value: v,
                params: json!({"defects": d.len(), "source": stem(&defects)}),
                threshold_profile: None,
            }];
            ctx.emit_json("cdc.json", &r).map_err(wrap)
        }
    }
}
