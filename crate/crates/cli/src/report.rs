// SPDX-License-Identifier: Apache-2.0

//! CSV tables over stored results.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use platsec_core::psc::metrics::MetricReport;
use serde_json::Value;

use crate::flows::AttackRun;

pub fn write_csv<H: AsRef<str>>(path: &Path, header: &[H], rows: &[Vec<String>]) -> Result<()> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir)?;
    }
    let mut w =
        csv::Writer::from_path(path).with_context(|| format!("writing {}", path.display()))?;
    w.write_record(header.iter().map(AsRef::as_ref))?;
    for r in rows {
        w.write_record(r)?;
    }
    w.flush()?;
    Ok(())
}

fn median(mut xs: Vec<f64>) -> f64 {
    xs.sort_by(f64::total_cmp);
    let n = xs.len();
    if n == 0 {
        f64::NAN
    } else if n % 2 == 1 {
        xs[n / 2]
    } else {
        0.5 * (xs[n / 2 - 1] + xs[n / 2])
    }
}

/// Median iterations per (design, key length, CR) over seeds, successful
/// runs only; wall-clock medians come last.
pub fn sat_series(runs: &[AttackRun]) -> (Vec<String>, Vec<Vec<String>>) {
    let header = [
        "design",
        "key_length",
        "cr",
        "runs",
        "successes",
        "median_iterations",
        "wall_median_s",
    ]
    .map(String::from)
    .to_vec();
    let mut groups: BTreeMap<(String, usize, usize), Vec<&AttackRun>> = BTreeMap::new();
    for r in runs {
        groups
            .entry((r.design.clone(), r.key_length, r.cr))
            .or_default()
            .push(r);
    }
    let rows = groups
        .into_iter()
        .map(|((d, k, cr), rs)| {
            let ok: Vec<_> = rs.iter().filter(|r| r.succeeded()).collect();
            vec![
                d,
                k.to_string(),
                cr.to_string(),
                rs.len().to_string(),
                ok.len().to_string(),
                format!(
                    "{}",
                    median(ok.iter().map(|r| r.iterations as f64).collect())
                ),
                format!(
                    "{:.6}",
                    median(ok.iter().map(|r| r.wall_clock.elapsed_s).collect())
                ),
            ]
        })
        .collect();
    (header, rows)
}

pub fn metrics_rows(reports: &[(String, MetricReport)]) -> (Vec<String>, Vec<Vec<String>>) {
    let header = ["source", "metric", "value", "threshold_profile", "params"]
        .map(String::from)
        .to_vec();
    let rows = reports
        .iter()
        .map(|(src, r)| {
            vec![
                src.clone(),
                r.metric.clone(),
                format!("{}", r.value),
                r.threshold_profile.clone().unwrap_or_default(),
                r.params.to_string(),
            ]
        })
        .collect();
    (header, rows)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ReportKind {
    Sat,
    Psc,
    Metrics,
}

impl ReportKind {
    pub fn parse(s: &str) -> Result<ReportKind> {
        Ok(match s {
            "sat" => ReportKind::Sat,
            "psc" => ReportKind::Psc,
            "metrics" => ReportKind::Metrics,
            _ => bail!("unknown result kind {s:?}"),
        })
    }

    fn of(v: &Value) -> Option<ReportKind> {
        match v {
            Value::Array(_) => Some(ReportKind::Metrics),
            Value::Object(m) => match m.get("kind")?.as_str()? {
                "sat" => Some(ReportKind::Sat),
                "psc" | "psc-estimate" => Some(ReportKind::Psc),
                "metrics" => Some(ReportKind::Metrics),
                _ => None,
            },
            _ => None,
        }
    }
}

/// JSON result files below `inputs` (files or directories), sorted.
/// Files without a recognizable kind and `summary.json` are skipped.
pub fn collect_results(inputs: &[PathBuf]) -> Result<Vec<(PathBuf, Value)>> {
    let mut files = Vec::new();
    for p in inputs {
        if p.is_dir() {
            walk(p, &mut files)?;
        } else if p.exists() {
            files.push(p.clone());
        } else {
            bail!("no such result path {}", p.display());
        }
    }
    files.sort();
    files.dedup();
    let mut out = Vec::new();
    for f in files {
        if f.extension().and_then(|e| e.to_str()) != Some("json") {
            continue;
        }
        let text = fs::read_to_string(&f)?;
        let v: Value =
            serde_json::from_str(&text).with_context(|| format!("parsing {}", f.display()))?;
        if ReportKind::of(&v).is_some() {
            out.push((f, v));
        }
    }
    Ok(out)
}

fn walk(dir: &Path, out: &mut Vec<PathBuf>) -> Result<()> {
    for e in fs::read_dir(dir)? {
        let p = e?.path();
        if p.is_dir() {
            walk(&p, out)?;
        } else {
            out.push(p);
        }
    }
    Ok(())
}

fn header_for(kind: ReportKind) -> Vec<String> {
    let h: &[&str] = match kind {
        ReportKind::Sat => &[
            "source",
            "design",
            "key_length",
            "cr",
            "chains",
            "lock_seed",
            "iterations",
            "status",
            "key_verified",
        ],
        ReportKind::Psc => &[
            "source",
            "kind",
            "noise_ips",
            "js",
            "js_per_encryption",
            "score",
            "threshold_profile",
        ],
        ReportKind::Metrics => &["source", "metric", "value", "threshold_profile", "params"],
    };
    h.iter().map(|s| s.to_string()).collect()
}

fn field(v: &Value, k: &str) -> String {
    match v.get(k) {
        None | Some(Value::Null) => String::new(),
        Some(Value::String(s)) => s.clone(),
        Some(x) => x.to_string(),
    }
}

/// One table over results of a single kind. With `kind` unset it is taken
/// from the results; an empty input yields the header of `kind` only.
pub fn build_report(
    results: &[(PathBuf, Value)],
    kind: Option<ReportKind>,
) -> Result<(Vec<String>, Vec<Vec<String>>)> {
    let mut found = kind;
    for (p, v) in results {
        let k = ReportKind::of(v).expect("filtered on collection");
        match found {
            None => found = Some(k),
            Some(f) if f != k => bail!("{} holds {k:?} results, expected {f:?}", p.display()),
            _ => {}
        }
    }
    let Some(kind) = found else {
        bail!("no results found and no kind given");
    };
    let mut rows = Vec::new();
    for (p, v) in results {
        let src = p.display().to_string();
        match kind {
            ReportKind::Sat => rows.push(vec![
                src,
                field(v, "design"),
                field(v, "key_length"),
                field(v, "cr"),
                field(v, "chains"),
                field(v, "lock_seed"),
                field(v, "iterations"),
                field(v, "status"),
                v.get("verification")
                    .and_then(|x| x.get("mismatches"))
                    .map(|m| (m.as_u64() == Some(0)).to_string())
                    .unwrap_or_else(|| "false".into()),
            ]),
            ReportKind::Psc => rows.push(vec![
                src,
                field(v, "kind"),
                v.get("noise_ips")
                    .and_then(Value::as_array)
                    .map(|a| {
                        a.iter()
                            .filter_map(Value::as_str)
                            .collect::<Vec<_>>()
                            .join(";")
                    })
                    .unwrap_or_default(),
                field(v, "js"),
                field(v, "js_per_encryption"),
                field(v, "score"),
                field(v, "threshold_profile"),
            ]),
            ReportKind::Metrics => {
                let items: Vec<MetricReport> = match v {
                    Value::Array(_) => serde_json::from_value(v.clone())?,
                    _ => serde_json::from_value(
                        v.get("summary").cloned().unwrap_or(Value::Array(vec![])),
                    )?,
                };
                let (_, r) = metrics_rows(
                    &items
                        .into_iter()
                        .map(|m| (src.clone(), m))
                        .collect::<Vec<_>>(),
                );
                rows.extend(r);
            }
        }
    }
    Ok((header_for(kind), rows))
}
