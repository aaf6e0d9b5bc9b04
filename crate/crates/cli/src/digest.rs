// SPDX-License-Identifier: Apache-2.0

//! Content digest of an output tree with wall-clock fields removed.

use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use serde_json::Value;
use sha2::{Digest, Sha256};

use crate::batch::WALL_CLOCK_DIR;

fn is_wall_column(name: &str) -> bool {
    name == "elapsed_s" || name.starts_with("wall_")
}

fn strip_json(v: &mut Value) {
    match v {
        Value::Object(m) => {
            m.retain(|k, _| k != "wall_clock");
            m.values_mut().for_each(strip_json);
        }
        Value::Array(a) => a.iter_mut().for_each(strip_json),
        _ => {}
    }
}

fn strip_csv(bytes: &[u8]) -> Result<Vec<u8>> {
    let mut rd = csv::ReaderBuilder::new()
        .has_headers(false)
        .from_reader(bytes);
    let mut out = csv::Writer::from_writer(Vec::new());
    let mut keep: Option<Vec<bool>> = None;
    for rec in rd.records() {
        let rec = rec?;
        let k = keep.get_or_insert_with(|| rec.iter().map(|h| !is_wall_column(h)).collect());
        out.write_record(rec.iter().zip(k.iter()).filter(|(_, &k)| k).map(|(f, _)| f))?;
    }
    Ok(out.into_inner().map_err(|e| anyhow::anyhow!("{e}"))?)
}

fn files(dir: &Path, out: &mut Vec<PathBuf>) -> Result<()> {
    for e in fs::read_dir(dir).with_context(|| format!("reading {}", dir.display()))? {
        let p = e?.path();
        if p.is_dir() {
            if p.file_name().and_then(|n| n.to_str()) != Some(WALL_CLOCK_DIR) {
                files(&p, out)?;
            }
        } else {
            out.push(p);
        }
    }
    Ok(())
}

/// Normalized content of one output file as hashed by [`digest_dir`].
pub fn normalized(path: &Path) -> Result<Vec<u8>> {
    let bytes = fs::read(path)?;
    Ok(match path.extension().and_then(|e| e.to_str()) {
        Some("json") => {
            let mut v: Value = serde_json::from_slice(&bytes)
                .with_context(|| format!("parsing {}", path.display()))?;
            strip_json(&mut v);
            serde_json::to_vec(&v)?
        }
        Some("csv") => strip_csv(&bytes)?,
        _ => bytes,
    })
}

/// SHA-256 over relative paths and normalized contents, in path order.
pub fn digest_dir(dir: &Path) -> Result<String> {
    let mut list = Vec::new();
    files(dir, &mut list)?;
    let mut rel: Vec<(String, PathBuf)> = list
        .into_iter()
        .map(|p| {
            let r = p
                .strip_prefix(dir)
                .unwrap_or(&p)
                .to_string_lossy()
                .replace('\\', "/");
            (r, p)
        })
        .collect();
    rel.sort();
    let mut h = Sha256::new();
    for (r, p) in rel {
        let body = normalized(&p)?;
        h.update(r.as_bytes());
        h.update([0]);
        h.update((body.len() as u64).to_le_bytes());
        h.update(&body);
    }
    Ok(h.finalize().iter().map(|b| format!("{b:02x}")).collect())
}
