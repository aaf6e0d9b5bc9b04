// SPDX-License-Identifier: Apache-2.0

//! Platform-level attack-time estimation from per-design quadratic
//! submodels of the compression-ratio multiplier.

use std::collections::BTreeMap;
use std::io::{Read, Write};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::netlist::CircuitMetadata;
use crate::scalar::Scalar;

/// Multiplier floor applied to the fitted curve.
pub const MULTIPLIER_FLOOR: f64 = 0.01;
/// Submodels kept by [`EstimationModel::fit`] by default.
pub const DEFAULT_SUBMODELS: usize = 20;

#[derive(Debug, Error)]
pub enum EstimationError {
    #[error("need at least 3 distinct compression ratios, got {0}")]
    RankDeficient(usize),
    #[error("feature vector is zero")]
    ZeroVector,
    #[error("feature vectors differ in length ({0} vs {1})")]
    DimensionMismatch(usize, usize),
    #[error("design `{0}` has no CR=1 record")]
    MissingBaseline(String),
    #[error("no design has enough records to fit a submodel")]
    EmptyModel,
    #[error("invalid record: {0}")]
    InvalidRecord(String),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

/// One attack measurement.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentRecord {
    pub metadata: CircuitMetadata,
    pub cr: usize,
    pub elapsed_seconds: f64,
    pub iterations: usize,
}

#[derive(Debug, Serialize, Deserialize)]
struct DatasetRow {
    name: String,
    key_length: usize,
    num_gates: usize,
    num_pi: usize,
    num_po: usize,
    num_ffio: usize,
    cr: usize,
    iterations: usize,
    elapsed_s: f64,
}

impl ExperimentRecord {
    fn validate(&self) -> Result<(), EstimationError> {
        if self.cr == 0 {
            return Err(EstimationError::InvalidRecord(format!(
                "{}: cr must be >= 1",
                self.metadata.name
            )));
        }
        if !(self.elapsed_seconds > 0.0) {
            return Err(EstimationError::InvalidRecord(format!(
                "{}: elapsed time must be positive",
                self.metadata.name
            )));
        }
        Ok(())
    }
}

pub fn read_dataset<R: Read>(reader: R) -> Result<Vec<ExperimentRecord>, EstimationError> {
    let mut rdr = csv::Reader::from_reader(reader);
    let mut out = Vec::new();
    for row in rdr.deserialize() {
        let r: DatasetRow = row?;
        let rec = ExperimentRecord {
            metadata: CircuitMetadata {
                name: r.name,
                key_length: r.key_length,
                num_gates: r.num_gates,
                num_primary_inputs: r.num_pi,
                num_primary_outputs: r.num_po,
                num_flip_flop_io: r.num_ffio,
            },
            cr: r.cr,
            elapsed_seconds: r.elapsed_s,
            iterations: r.iterations,
        };
        rec.validate()?;
        out.push(rec);
    }
    Ok(out)
}

pub fn write_dataset<W: Write>(
    writer: W,
    records: &[ExperimentRecord],
) -> Result<(), EstimationError> {
    let mut w = csv::Writer::from_writer(writer);
    for r in records {
        let m = &r.metadata;
        w.serialize(DatasetRow {
            name: m.name.clone(),
            key_length: m.key_length,
            num_gates: m.num_gates,
            num_pi: m.num_primary_inputs,
            num_po: m.num_primary_outputs,
            num_ffio: m.num_flip_flop_io,
            cr: r.cr,
            iterations: r.iterations,
            elapsed_s: r.elapsed_seconds,
        })?;
    }
    w.flush().map_err(csv::Error::from)?;
    Ok(())
}

/// `a0 + a1 x + a2 x^2`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Quadratic<T> {
    pub a0: T,
    pub a1: T,
    pub a2: T,
}

impl<T: Scalar> Quadratic<T> {
    pub fn eval(&self, x: T) -> T {
        self.a0 + (self.a1 + self.a2 * x) * x
    }

    pub fn coefficients(&self) -> [T; 3] {
        [self.a0, self.a1, self.a2]
    }

    pub fn residual(&self, points: &[(T, T)]) -> T {
        points
            .iter()
            .map(|&(x, y)| {
                let r = self.eval(x) - y;
                r * r
            })
            .sum()
    }
}

/// Least-squares quadratic through `points` via Householder QR.
pub fn fit_quadratic<T: Scalar>(points: &[(T, T)]) -> Result<Quadratic<T>, EstimationError> {
    let mut xs: Vec<T> = points.iter().map(|p| p.0).collect();
    xs.sort_by(|a, b| a.partial_cmp(b).unwrap_or(std::cmp::Ordering::Equal));
    xs.dedup();
    if xs.len() < 3 {
        return Err(EstimationError::RankDeficient(xs.len()));
    }
    let n = points.len();
    let mut a: Vec<[T; 3]> = points.iter().map(|&(x, _)| [T::one(), x, x * x]).collect();
    let mut b: Vec<T> = points.iter().map(|p| p.1).collect();
    let mut diag = [T::zero(); 3];
    for k in 0..3 {
        let norm = (k..n).map(|i| a[i][k] * a[i][k]).sum::<T>().sqrt();
        if norm == T::zero() {
            return Err(EstimationError::RankDeficient(xs.len()));
        }
        let alpha = if a[k][k] > T::zero() { -norm } else { norm };
        let mut v: Vec<T> = (k..n).map(|i| a[i][k]).collect();
        v[0] = v[0] - alpha;
        let vv: T = v.iter().map(|&x| x * x).sum();
        if vv > T::zero() {
            for j in k..3 {
                let dot: T = (k..n).map(|i| v[i - k] * a[i][j]).sum();
                let f = T::two() * dot / vv;
                for i in k..n {
                    a[i][j] = a[i][j] - f * v[i - k];
                }
            }
            let dot: T = (k..n).map(|i| v[i - k] * b[i]).sum();
            let f = T::two() * dot / vv;
            for i in k..n {
                b[i] = b[i] - f * v[i - k];
            }
        }
        diag[k] = a[k][k];
    }
    let scale = diag.iter().fold(T::zero(), |m, d| m.max(d.abs()));
    if diag
        .iter()
        .any(|d| d.abs() <= scale * T::epsilon() * T::from_usize_lossy(n))
    {
        return Err(EstimationError::RankDeficient(xs.len()));
    }
    let mut c = [T::zero(); 3];
    for k in (0..3).rev() {
        let mut s = b[k];
        for j in k + 1..3 {
            s = s - a[k][j] * c[j];
        }
        c[k] = s / a[k][k];
    }
    Ok(Quadratic {
        a0: c[0],
        a1: c[1],
        a2: c[2],
    })
}

pub fn cosine_similarity<T: Scalar>(u: &[T], v: &[T]) -> Result<T, EstimationError> {
    if u.len() != v.len() {
        return Err(EstimationError::DimensionMismatch(u.len(), v.len()));
    }
    let nu = u.iter().map(|&x| x * x).sum::<T>().sqrt();
    let nv = v.iter().map(|&x| x * x).sum::<T>().sqrt();
    if nu == T::zero() || nv == T::zero() {
        return Err(EstimationError::ZeroVector);
    }
    let dot: T = u.iter().zip(v).map(|(&a, &b)| a * b).sum();
    Ok(dot / (nu * nv))
}

/// What the multiplier is computed from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum FitBasis {
    #[default]
    Seconds,
    /// DIP iterations; machine independent.
    Iterations,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubModel<T> {
    pub metadata: CircuitMetadata,
    pub coefficients: Quadratic<T>,
    /// (cr, multiplier) points the curve was fitted to.
    pub points: Vec<(T, T)>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EstimationModel<T> {
    pub basis: FitBasis,
    pub feature_scales: [T; 5],
    pub sub_models: Vec<SubModel<T>>,
}

fn median(mut xs: Vec<f64>) -> f64 {
    xs.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let n = xs.len();
    if n % 2 == 1 {
        xs[n / 2]
    } else {
        0.5 * (xs[n / 2 - 1] + xs[n / 2])
    }
}

/// Groups records by design and returns the normalized multiplier series;
/// repeated measurements at one CR are reduced to their median.
pub fn multiplier_series(
    records: &[ExperimentRecord],
    basis: FitBasis,
) -> Result<Vec<(CircuitMetadata, Vec<(f64, f64)>)>, EstimationError> {
    let mut groups: BTreeMap<(String, usize), (CircuitMetadata, BTreeMap<usize, Vec<f64>>)> =
        BTreeMap::new();
    for r in records {
        r.validate()?;
        let v = match basis {
            FitBasis::Seconds => r.elapsed_seconds,
            FitBasis::Iterations => r.iterations.max(1) as f64,
        };
        groups
            .entry((r.metadata.name.clone(), r.metadata.key_length))
            .or_insert_with(|| (r.metadata.clone(), BTreeMap::new()))
            .1
            .entry(r.cr)
            .or_default()
            .push(v);
    }
    let mut out = Vec::new();
    for ((name, _), (meta, by_cr)) in groups {
        let base = match by_cr.get(&1) {
            Some(v) => median(v.clone()),
            None => return Err(EstimationError::MissingBaseline(name)),
        };
        let pts = by_cr
            .into_iter()
            .map(|(cr, v)| (cr as f64, median(v) / base))
            .collect();
        out.push((meta, pts));
    }
    Ok(out)
}

/// Greedy farthest-point subset: starts from the point with the largest
/// norm, then repeatedly adds the point farthest from the chosen set.
pub fn farthest_point_selection(points: &[Vec<f64>], k: usize) -> Vec<usize> {
    if points.is_empty() || k == 0 {
        return Vec::new();
    }
    let norm = |p: &[f64]| p.iter().map(|x| x * x).sum::<f64>();
    let dist = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>();
    let mut first = 0;
    for i in 1..points.len() {
        if norm(&points[i]) > norm(&points[first]) {
            first = i;
        }
    }
    let mut chosen = vec![first];
    let mut min_d: Vec<f64> = points.iter().map(|p| dist(p, &points[first])).collect();
    while chosen.len() < k.min(points.len()) {
        let mut best: Option<usize> = None;
        for i in 0..points.len() {
            if chosen.contains(&i) {
                continue;
            }
            if best.map_or(true, |b| min_d[i] > min_d[b]) {
                best = Some(i);
            }
        }
        let b = best.unwrap();
        chosen.push(b);
        for i in 0..points.len() {
            min_d[i] = min_d[i].min(dist(&points[i], &points[b]));
        }
    }
    chosen
}

/// Relative tolerance under which two similarities count as tied.
const TIE_TOLERANCE: f64 = 1e-12;

impl<T: Scalar> EstimationModel<T> {
    /// Fits one submodel per design with at least three distinct CRs and
    /// keeps up to `max_submodels` of them, chosen for diversity.
    pub fn fit(
        records: &[ExperimentRecord],
        basis: FitBasis,
        max_submodels: usize,
    ) -> Result<EstimationModel<T>, EstimationError> {
        let series = multiplier_series(records, basis)?;
        let mut scales = [0.0f64; 5];
        for r in records {
            for (s, f) in scales.iter_mut().zip(r.metadata.features()) {
                *s = s.max(f);
            }
        }
        // a feature that is zero everywhere carries no information
        for s in &mut scales {
            if *s <= 0.0 {
                *s = 1.0;
            }
        }
        let mut candidates = Vec::new();
        for (meta, pts) in series {
            let distinct = pts.len();
            if distinct < 3 {
                continue;
            }
            let tp: Vec<(T, T)> = pts
                .iter()
                .map(|&(x, y)| (T::from_f64_lossy(x), T::from_f64_lossy(y)))
                .collect();
            let coefficients = fit_quadratic(&tp)?;
            candidates.push(SubModel {
                metadata: meta,
                coefficients,
                points: tp,
            });
        }
        if candidates.is_empty() {
            return Err(EstimationError::EmptyModel);
        }
        let scaled: Vec<Vec<f64>> = candidates
            .iter()
            .map(|c| {
                c.metadata
                    .features()
                    .iter()
                    .zip(&scales)
                    .map(|(f, s)| f / s)
                    .collect()
            })
            .collect();
        let mut picked = farthest_point_selection(&scaled, max_submodels);
        picked.sort_unstable();
        let sub_models = picked.into_iter().map(|i| candidates[i].clone()).collect();
        Ok(EstimationModel {
            basis,
            feature_scales: scales.map(T::from_f64_lossy),
            sub_models,
        })
    }

    fn scaled(&self, meta: &CircuitMetadata) -> Vec<T> {
        meta.features()
            .iter()
            .zip(&self.feature_scales)
            .map(|(&f, &s)| T::from_f64_lossy(f) / s)
            .collect()
    }

    /// Index and similarity of the best-matching submodel.
    pub fn select(&self, meta: &CircuitMetadata) -> Result<(usize, T), EstimationError> {
        if self.sub_models.is_empty() {
            return Err(EstimationError::EmptyModel);
        }
        let q = self.scaled(meta);
        let tol = T::from_f64_lossy(TIE_TOLERANCE);
        let mut best: Option<(usize, T)> = None;
        for (i, sm) in self.sub_models.iter().enumerate() {
            let sim = cosine_similarity(&q, &self.scaled(&sm.metadata))?;
            best = match best {
                None => Some((i, sim)),
                Some((b, bs)) => {
                    let tied = (sim - bs).abs() <= tol * bs.abs().max(T::one());
                    if tied {
                        let gd = |j: usize| {
                            self.sub_models[j]
                                .metadata
                                .num_gates
                                .abs_diff(meta.num_gates)
                        };
                        if gd(i) < gd(b) {
                            Some((i, sim))
                        } else {
                            Some((b, bs))
                        }
                    } else if sim > bs {
                        Some((i, sim))
                    } else {
                        Some((b, bs))
                    }
                }
            };
        }
        Ok(best.unwrap())
    }

    /// Platform-level estimate: `ip_level * max(m(cr), 0.01)` with `m` the
    /// selected submodel's curve.
    pub fn estimate(
        &self,
        meta: &CircuitMetadata,
        cr: T,
        ip_level: T,
    ) -> Result<T, EstimationError> {
        let (i, _) = self.select(meta)?;
        let m = self.sub_models[i].coefficients.eval(cr);
        Ok(ip_level * m.max(T::from_f64_lossy(MULTIPLIER_FLOOR)))
    }
}

impl<T: Scalar + Serialize + for<'de> Deserialize<'de>> EstimationModel<T> {
    pub fn to_json(&self) -> Result<String, EstimationError> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(text: &str) -> Result<EstimationModel<T>, EstimationError> {
        let m: EstimationModel<T> = serde_json::from_str(text)?;
        if m.sub_models.is_empty() {
            return Err(EstimationError::EmptyModel);
        }
        if m.feature_scales.iter().any(|&s| !(s > T::zero())) {
            return Err(EstimationError::InvalidRecord(
                "feature scales must be positive".into(),
            ));
        }
        Ok(m)
    }
}
