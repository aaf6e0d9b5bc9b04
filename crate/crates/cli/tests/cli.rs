// SPDX-License-Identifier: Apache-2.0

use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;

fn root() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR"))
        .join("../..")
        .canonicalize()
        .unwrap()
}

fn bench(name: &str) -> String {
    root()
        .join("benchmarks")
        .join(format!("{name}.bench"))
        .display()
        .to_string()
}

fn platsec(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_platsec"))
        .args(args)
        .env_remove("PLATSEC_OUT_ROOT")
        .output()
        .unwrap()
}

fn ok(args: &[&str]) -> Output {
    let o = platsec(args);
    assert_eq!(
        o.status.code(),
        Some(0),
        "{args:?}: {}",
        String::from_utf8_lossy(&o.stderr)
    );
    o
}

fn stdout(o: &Output) -> String {
    String::from_utf8(o.stdout.clone()).unwrap()
}

fn read_csv(p: &Path) -> (Vec<String>, Vec<Vec<String>>) {
    let mut rd = csv::Reader::from_path(p).unwrap();
    let h = rd.headers().unwrap().iter().map(String::from).collect();
    let rows = rd
        .records()
        .map(|r| r.unwrap().iter().map(String::from).collect())
        .collect();
    (h, rows)
}

fn write_config(dir: &Path, body: &str) -> String {
    let p = dir.join("cfg.toml");
    fs::write(&p, body).unwrap();
    p.display().to_string()
}

fn grid_config(dir: &Path, crs: &str, chains: usize, design: &str) -> String {
    write_config(
        dir,
        &format!(
            "name = \"grid\"\nseed = 3\nworkers = 2\n\n[sat]\nbenchmarks = [\"{}\"]\nkey_lengths = [4]\ncrs = {crs}\nchains = {chains}\nseeds = [1]\n",
            bench(design)
        ),
    )
}

#[test]
fn invalid_configs_exit_with_code_2() {
    let dir = tempfile::tempdir().unwrap();
    let cases = [
        format!("name = \"x\"\nseed = 1\n[sat]\nbenchmarks = [\"{}\"]\nkey_lengths = [4]\ncrs = [3]\nchains = 4\nseeds = [1]\n", bench("c17")),
        "name = \"x\"\nseed = 1\n[sat]\nbenchmarks = [\"missing.bench\"]\nkey_lengths = [4]\ncrs = [1]\nchains = 4\nseeds = [1]\n".into(),
        "name = \"x\"\nseed = 1\nunknown_field = 2\n".into(),
        "name = \"x\"\nseed = 1\n".into(),
        "not toml at all [[[".into(),
    ];
    for body in cases {
        let cfg = write_config(dir.path(), &body);
        let out = dir.path().join("o").display().to_string();
        let o = platsec(&["run", "--config", &cfg, "--out", &out]);
        assert_eq!(o.status.code(), Some(2), "{body}");
    }
    assert_eq!(platsec(&["run"]).status.code(), Some(2));
    assert_eq!(
        platsec(&["lock", "--key-length", "4", "nope.bench"])
            .status
            .code(),
        Some(2)
    );
    assert_eq!(platsec(&["no-such-command"]).status.code(), Some(2));
}

#[test]
fn grid_writes_one_record_per_run_and_a_rollup() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = grid_config(dir.path(), "[1, 2]", 2, "c17");
    let out = dir.path().join("out");
    let o = ok(&["run", "--config", &cfg, "--out", out.to_str().unwrap()]);
    assert!(stdout(&o).starts_with("2 runs, 0 failed"));
    let mut records: Vec<_> = fs::read_dir(out.join("sat/runs"))
        .unwrap()
        .map(|e| e.unwrap().path())
        .collect();
    records.sort();
    assert_eq!(records.len(), 2);
    for r in &records {
        let v: Value = serde_json::from_str(&fs::read_to_string(r).unwrap()).unwrap();
        assert_eq!(v["kind"], "sat");
        assert_eq!(v["design"], "c17");
        assert_eq!(v["key_length"], 4);
        assert_eq!(v["status"], "success");
        assert_eq!(v["verification"]["mismatches"], 0);
    }
    let (h, rows) = read_csv(&out.join("sat/runs.csv"));
    assert_eq!(rows.len(), 2);
    assert_eq!(h.last().unwrap(), "wall_elapsed_s");
    let crs: Vec<&str> = rows
        .iter()
        .map(|r| r[h.iter().position(|c| c == "cr").unwrap()].as_str())
        .collect();
    assert_eq!(crs, ["1", "2"]);
    assert!(out.join("summary.json").exists());
}

#[test]
fn rerun_replays_iterations_and_keys() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = grid_config(dir.path(), "[1, 2, 4]", 4, "s27");
    let mut digests = Vec::new();
    let mut tables = Vec::new();
    for run in ["a", "b"] {
        let out = dir.path().join(run);
        ok(&[
            "run",
            "--config",
            &cfg,
            "--out",
            out.to_str().unwrap(),
            "--workers",
            if run == "a" { "1" } else { "3" },
        ]);
        digests.push(stdout(&ok(&["digest", out.to_str().unwrap()])));
        let (h, rows) = read_csv(&out.join("sat/runs.csv"));
        let keep: Vec<usize> = h
            .iter()
            .enumerate()
            .filter(|(_, c)| c.as_str() != "wall_elapsed_s")
            .map(|(i, _)| i)
            .collect();
        tables.push(
            rows.iter()
                .map(|r| keep.iter().map(|&i| r[i].clone()).collect::<Vec<_>>())
                .collect::<Vec<_>>(),
        );
    }
    assert_eq!(digests[0], digests[1]);
    assert_eq!(digests[0].trim().len(), 64);
    assert_eq!(tables[0], tables[1]);
}

#[test]
fn out_root_relocates_relative_output() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = grid_config(dir.path(), "[1]", 1, "c17");
    let o = Command::new(env!("CARGO_BIN_EXE_platsec"))
        .args(["run", "--config", &cfg, "--out", "rel"])
        .env("PLATSEC_OUT_ROOT", dir.path())
        .output()
        .unwrap();
    assert_eq!(o.status.code(), Some(0));
    assert!(dir.path().join("rel/sat/runs.csv").exists());
}

#[test]
fn report_tables() {
    let dir = tempfile::tempdir().unwrap();
    let empty = dir.path().join("empty");
    fs::create_dir(&empty).unwrap();
    let o = ok(&["report", "--kind", "sat", empty.to_str().unwrap()]);
    let text = stdout(&o);
    assert_eq!(text.lines().count(), 1);
    assert!(text.starts_with("source,design,key_length,cr"));
    assert_eq!(
        platsec(&["report", empty.to_str().unwrap()]).status.code(),
        Some(2)
    );

    // one design over five compression ratios
    let cfg = grid_config(dir.path(), "[1, 2, 4, 8, 16]", 16, "s27");
    let out = dir.path().join("series");
    ok(&["run", "--config", &cfg, "--out", out.to_str().unwrap()]);
    let (h, rows) = read_csv(&out.join("sat/series.csv"));
    assert_eq!(
        h,
        [
            "design",
            "key_length",
            "cr",
            "runs",
            "successes",
            "median_iterations",
            "wall_median_s"
        ]
    );
    assert_eq!(rows.len(), 5);
    assert_eq!(
        rows.iter().map(|r| r[2].as_str()).collect::<Vec<_>>(),
        ["1", "2", "4", "8", "16"]
    );
    let rep = dir.path().join("rep");
    ok(&[
        "report",
        "--out",
        rep.to_str().unwrap(),
        out.join("sat/runs").to_str().unwrap(),
    ]);
    assert_eq!(read_csv(&rep.join("report.csv")).1.len(), 5);

    // mixed kinds are refused
    let m = dir.path().join("m");
    ok(&[
        "metrics",
        "cdc",
        "--out",
        m.to_str().unwrap(),
        root().join("configs/data/defects.csv").to_str().unwrap(),
    ]);
    let o = platsec(&[
        "report",
        out.join("sat/runs").to_str().unwrap(),
        m.to_str().unwrap(),
    ]);
    assert_eq!(o.status.code(), Some(2));
    let o = ok(&["report", m.to_str().unwrap()]);
    assert!(stdout(&o).contains("cdc_percent,65"));
}

#[test]
fn js_matrix_has_cycle_rows_and_block_columns() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("psc");
    let (s27, s298) = (bench("s27"), bench("s298_synth"));
    ok(&[
        "psc-measure",
        "--plaintexts",
        "60",
        "--noise",
        &s27,
        "--noise",
        &s298,
        "--seed",
        "4",
        "--out",
        out.to_str().unwrap(),
    ]);
    let (h, rows) = read_csv(&out.join("js_matrix.csv"));
    assert_eq!(h, ["cycle", "subsystem", "aes", "s27", "s298_synth"]);
    assert_eq!(rows.len(), 11);
    for r in &rows {
        for v in &r[1..] {
            let x: f64 = v.parse().unwrap();
            assert!((0.0..=1.0).contains(&x));
        }
        // noise blocks run the same stimulus under both keys
        assert_eq!(r[3], "0");
        assert_eq!(r[4], "0");
    }
    let m: Value =
        serde_json::from_str(&fs::read_to_string(out.join("measurement.json")).unwrap()).unwrap();
    assert_eq!(m["kind"], "psc");
    assert_eq!(m["threshold_profile"], "default (invented calibration)");
    assert_eq!(read_csv(&out.join("trace_key1.csv")).1.len(), 60);

    let db = dir.path().join("db");
    ok(&[
        "psc-db",
        "--cycles",
        "660",
        "--seed",
        "4",
        "--out",
        db.to_str().unwrap(),
        &s27,
        &s298,
    ]);
    let est = dir.path().join("est");
    ok(&[
        "psc-estimate",
        "--plaintexts",
        "60",
        "--noise",
        &s27,
        "--db",
        db.to_str().unwrap(),
        "--seed",
        "4",
        "--out",
        est.to_str().unwrap(),
    ]);
    let e: Value =
        serde_json::from_str(&fs::read_to_string(est.join("estimate.json")).unwrap()).unwrap();
    let js = e["js"].as_f64().unwrap();
    assert!((0.0..=1.0).contains(&js));
    assert_eq!(
        platsec(&["psc-measure", "--thresholds", "0.1,0.2,0.3,0.4"])
            .status
            .code(),
        Some(2)
    );
}

#[test]
fn dimacs_backend_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let sat = dir.path().join("sat.cnf");
    fs::write(&sat, "c tiny\np cnf 3 3\n1 -2 0\n2 3 0\n-1 -3 0\n").unwrap();
    let text = stdout(&ok(&["solve", sat.to_str().unwrap()]));
    assert!(text.starts_with("s SATISFIABLE"));
    let lits: Vec<i64> = text
        .lines()
        .filter(|l| l.starts_with("v "))
        .flat_map(|l| l[2..].split_whitespace().map(|x| x.parse::<i64>().unwrap()))
        .filter(|&x| x != 0)
        .collect();
    let val = |v: i64| lits.contains(&v);
    assert!((val(1) || val(-2)) && (val(2) || val(3)) && (val(-1) || val(-3)));
    let unsat = dir.path().join("unsat.cnf");
    fs::write(&unsat, "p cnf 1 2\n1 0\n-1 0\n").unwrap();
    assert!(stdout(&ok(&["solve", unsat.to_str().unwrap()])).starts_with("s UNSATISFIABLE"));

    // an attack driven through the external-solver path with this binary as the solver
    let script = dir.path().join("solver.sh");
    fs::write(
        &script,
        format!(
            "#!/bin/sh\nexec \"{}\" solve \"$1\"\n",
            env!("CARGO_BIN_EXE_platsec")
        ),
    )
    .unwrap();
    #[cfg(unix)]
    {
        use std::os::unix::fs::PermissionsExt;
        fs::set_permissions(&script, fs::Permissions::from_mode(0o755)).unwrap();
        let out = dir.path().join("att");
        let solver = format!("dimacs:{}", script.display());
        ok(&[
            "attack",
            "--key-length",
            "4",
            "--cr",
            "1",
            "--seed",
            "2",
            "--solver",
            &solver,
            "--out",
            out.to_str().unwrap(),
            &bench("c17"),
        ]);
        let rec: Value =
            serde_json::from_str(&fs::read_to_string(out.join("c17_k4_cr1_s2.json")).unwrap())
                .unwrap();
        let builtin = dir.path().join("att2");
        ok(&[
            "attack",
            "--key-length",
            "4",
            "--cr",
            "1",
            "--seed",
            "2",
            "--out",
            builtin.to_str().unwrap(),
            &bench("c17"),
        ]);
        let b: Value =
            serde_json::from_str(&fs::read_to_string(builtin.join("c17_k4_cr1_s2.json")).unwrap())
                .unwrap();
        assert_eq!(rec["status"], "success");
        assert_eq!(rec["verification"]["mismatches"], 0);
        assert_eq!(b["verification"]["mismatches"], 0);
    }
}

#[test]
fn subcommand_smoke() {
    let dir = tempfile::tempdir().unwrap();
    let o = dir.path().to_str().unwrap();
    let s27 = bench("s27");
    ok(&["lock", "--key-length", "6", "--seed", "1", "--out", o, &s27]);
    let locked = fs::read_to_string(dir.path().join("s27_locked.bench")).unwrap();
    assert_eq!(locked.matches("INPUT(keyinput").count(), 6);
    assert_eq!(
        fs::read_to_string(dir.path().join("s27_key.txt"))
            .unwrap()
            .trim()
            .len(),
        6
    );
    ok(&["frame", "--out", o, &s27]);
    assert!(!fs::read_to_string(dir.path().join("s27_frame.bench"))
        .unwrap()
        .contains("DFF"));
    ok(&["compose", "--chains", "4", "--cr", "2", "--out", o, &s27]);
    assert!(dir.path().join("s27_cr2.bench").exists());
    assert!(stdout(&ok(&["frame", &s27])).contains("OUTPUT("));

    let c17 = bench("c17");
    let scoap = ok(&["metrics", "scoap", &c17]);
    let v: Value = serde_json::from_slice(&scoap.stdout).unwrap();
    assert_eq!(v["kind"], "metrics");
    assert_eq!(v["ctf_form"], "fractional");
    let v: Value = serde_json::from_slice(
        &ok(&["metrics", "oh", "--node", "N22", "--patterns", "32", &c17]).stdout,
    )
    .unwrap();
    assert!(
        (v[0]["value"].as_f64().unwrap() - 0.8).abs() < 1e-12,
        "N7 does not reach N22"
    );
    let data = root().join("configs/data");
    let d = |f: &str| data.join(f).display().to_string();
    let v: Value = serde_json::from_slice(
        &ok(&[
            "metrics",
            "fsm-fi",
            "--p-fs",
            "2,3,4,5",
            &d("fsm_transitions.csv"),
        ])
        .stdout,
    )
    .unwrap();
    assert_eq!(v[0]["metric"], "fsm_pvt_percent");
    assert_eq!(v[0]["value"], 50.0);
    let v: Value = serde_json::from_slice(
        &ok(&["metrics", "puf", "--responses", &d("puf_responses.txt")]).stdout,
    )
    .unwrap();
    assert!(v
        .as_array()
        .unwrap()
        .iter()
        .any(|r| r["metric"] == "puf_inter_hd_percent"));
    let v: Value =
        serde_json::from_slice(&ok(&["metrics", "cdc", &d("defects.csv")]).stdout).unwrap();
    assert!((v[0]["value"].as_f64().unwrap() - 65.0).abs() < 1e-12);
    assert_eq!(platsec(&["metrics", "puf"]).status.code(), Some(2));
    assert_eq!(
        platsec(&["metrics", "oh", "--node", "zz", &c17])
            .status
            .code(),
        Some(2)
    );

    // fit and estimate from a small attack dataset
    let cfg = grid_config(dir.path(), "[1, 2, 4]", 4, "s27");
    let run = dir.path().join("run");
    ok(&["run", "--config", &cfg, "--out", run.to_str().unwrap()]);
    let fit = dir.path().join("fit");
    ok(&[
        "sat-fit",
        "--basis",
        "iterations",
        "--out",
        fit.to_str().unwrap(),
        run.join("sat/dataset.csv").to_str().unwrap(),
    ]);
    let est: Value = serde_json::from_slice(
        &ok(&[
            "sat-estimate",
            "--model",
            fit.join("model.json").to_str().unwrap(),
            "--key-length",
            "4",
            "--cr",
            "2",
            "--ip-level",
            "3",
            &s27,
        ])
        .stdout,
    )
    .unwrap();
    assert_eq!(est["sub_model"], "s27");
    assert!(est["estimate"].as_f64().unwrap().is_finite());
    assert!(stdout(&ok(&["--help"])).contains("psc-estimate"));
}
