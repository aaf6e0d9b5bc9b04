// SPDX-License-Identifier: Apache-2.0

//! Empirical distributions and side-channel leakage metrics.

use std::collections::BTreeMap;
use std::io::Write;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::power::SubsystemTrace;
use crate::scalar::{mean, population_variance, sample_variance, Scalar};

/// Smoothing mass added to the second KL argument.
pub const KL_EPSILON: f64 = 1e-9;

#[derive(Debug, Error, PartialEq)]
pub enum MetricError {
    #[error("distribution needs at least one sample")]
    Empty,
    #[error("{0} needs at least two samples per set")]
    TooFewSamples(&'static str),
    #[error("both sets have zero variance; the t statistic is undefined")]
    DegenerateVariance,
    #[error("noise variance or power is zero")]
    ZeroNoise,
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
}

/// Mass function over integer support.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmpiricalDistribution<T> {
    support: Vec<i64>,
    probabilities: Vec<T>,
    sample_count: usize,
}

impl<T: Scalar> EmpiricalDistribution<T> {
    pub fn from_values(
        values: impl IntoIterator<Item = i64>,
    ) -> Result<EmpiricalDistribution<T>, MetricError> {
        let mut counts: BTreeMap<i64, usize> = BTreeMap::new();
        let mut n = 0usize;
        for v in values {
            *counts.entry(v).or_default() += 1;
            n += 1;
        }
        if n == 0 {
            return Err(MetricError::Empty);
        }
        let total = T::from_usize_lossy(n);
        let (support, probabilities) = counts
            .into_iter()
            .map(|(v, c)| (v, T::from_usize_lossy(c) / total))
            .unzip();
        Ok(EmpiricalDistribution {
            support,
            probabilities,
            sample_count: n,
        })
    }

    pub fn support(&self) -> &[i64] {
        &self.support
    }

    pub fn probabilities(&self) -> &[T] {
        &self.probabilities
    }

    pub fn sample_count(&self) -> usize {
        self.sample_count
    }

    /// Mass at `x`, zero off the support.
    pub fn mass(&self, x: i64) -> T {
        match self.support.binary_search(&x) {
            Ok(i) => self.probabilities[i],
            Err(_) => T::zero(),
        }
    }

    fn iter(&self) -> impl Iterator<Item = (i64, T)> + '_ {
        self.support
            .iter()
            .copied()
            .zip(self.probabilities.iter().copied())
    }
}

/// Exact mass function of raw toggle counts.
pub fn build_distribution<T: Scalar>(
    samples: &[u64],
) -> Result<EmpiricalDistribution<T>, MetricError> {
    EmpiricalDistribution::from_values(samples.iter().map(|&s| s as i64))
}

/// Sturges' rule: `ceil(log2 n) + 1`.
pub fn sturges_bins(n: usize) -> usize {
    if n <= 1 {
        return 1;
    }
    (usize::BITS - (n - 1).leading_zeros()) as usize + 1
}

/// Histograms of two sample sets over shared equal-width bins spanning the
/// pooled range. Bin indices use integer arithmetic, so adding the same
/// constant to both sets gives the same histograms.
pub fn binned_pair<T: Scalar>(
    a: &[u64],
    b: &[u64],
    bins: usize,
) -> Result<(EmpiricalDistribution<T>, EmpiricalDistribution<T>), MetricError> {
    if a.is_empty() || b.is_empty() {
        return Err(MetricError::Empty);
    }
    if bins == 0 {
        return Err(MetricError::InvalidArgument(
            "bin count must be positive".into(),
        ));
    }
    let lo = *a.iter().chain(b).min().unwrap();
    let hi = *a.iter().chain(b).max().unwrap();
    let width = u128::from(hi - lo) + 1;
    let bin = |x: u64| (u128::from(x - lo) * bins as u128 / width) as i64;
    Ok((
        EmpiricalDistribution::from_values(a.iter().map(|&x| bin(x)))?,
        EmpiricalDistribution::from_values(b.iter().map(|&x| bin(x)))?,
    ))
}

fn union_support<T: Scalar>(
    p: &EmpiricalDistribution<T>,
    q: &EmpiricalDistribution<T>,
) -> Vec<i64> {
    let mut s: Vec<i64> = p.support.iter().chain(&q.support).copied().collect();
    s.sort_unstable();
    s.dedup();
    s
}

/// `sum p log2(p / q~)` with `q~ = (q + eps) / (1 + eps * |union support|)`.
pub fn kl_divergence<T: Scalar>(p: &EmpiricalDistribution<T>, q: &EmpiricalDistribution<T>) -> T {
    let eps = T::from_f64_lossy(KL_EPSILON);
    let k = T::from_usize_lossy(union_support(p, q).len());
    let norm = T::one() + eps * k;
    let kl: T = p
        .iter()
        .filter(|&(_, px)| px > T::zero())
        .map(|(x, px)| {
            let qx = (q.mass(x) + eps) / norm;
            px * (px / qx).log2()
        })
        .sum();
    kl.max(T::zero())
}

/// Jensen-Shannon divergence, base 2, in `[0, 1]`.
pub fn js_divergence<T: Scalar>(p: &EmpiricalDistribution<T>, q: &EmpiricalDistribution<T>) -> T {
    let mut js = T::zero();
    for x in union_support(p, q) {
        let (px, qx) = (p.mass(x), q.mass(x));
        let m = (px + qx) * T::half();
        if px > T::zero() {
            js = js + T::half() * px * (px / m).log2();
        }
        if qx > T::zero() {
            js = js + T::half() * qx * (qx / m).log2();
        }
    }
    js.max(T::zero()).min(T::one())
}

/// JS between two sample sets binned with [`binned_pair`]; `bins = None`
/// uses Sturges' rule on the smaller set.
pub fn js_from_samples<T: Scalar>(
    a: &[u64],
    b: &[u64],
    bins: Option<usize>,
) -> Result<T, MetricError> {
    let bins = bins.unwrap_or_else(|| sturges_bins(a.len().min(b.len())));
    let (p, q) = binned_pair::<T>(a, b, bins)?;
    Ok(js_divergence(&p, &q))
}

/// Welch's t: `(mu_r - mu_f) / sqrt(s_r^2/n_r + s_f^2/n_f)`, sample variances.
pub fn tvla<T: Scalar>(fixed: &[T], random: &[T]) -> Result<T, MetricError> {
    if fixed.len() < 2 || random.len() < 2 {
        return Err(MetricError::TooFewSamples("tvla"));
    }
    let denom = sample_variance(random) / T::from_usize_lossy(random.len())
        + sample_variance(fixed) / T::from_usize_lossy(fixed.len());
    if denom <= T::zero() {
        return Err(MetricError::DegenerateVariance);
    }
    Ok((mean(random) - mean(fixed)) / denom.sqrt())
}

/// `Var(signal) / Var(noise)`, population variances.
pub fn snr<T: Scalar>(signal: &[T], noise: &[T]) -> Result<T, MetricError> {
    if signal.is_empty() || noise.is_empty() {
        return Err(MetricError::Empty);
    }
    let vn = population_variance(noise);
    if vn <= T::zero() {
        return Err(MetricError::ZeroNoise);
    }
    Ok(population_variance(signal) / vn)
}

/// `(P_hi - P_hj) / P_noise`.
pub fn scv<T: Scalar>(
    mean_power_hi: T,
    mean_power_hj: T,
    noise_power: T,
) -> Result<T, MetricError> {
    if noise_power == T::zero() {
        return Err(MetricError::ZeroNoise);
    }
    Ok((mean_power_hi - mean_power_hj) / noise_power)
}

/// Measurements to disclose up to a constant factor: `1 / (snr * rho0^2)`.
pub fn mtd_relative<T: Scalar>(snr: T, rho0: T) -> Result<T, MetricError> {
    if !(snr > T::zero()) {
        return Err(MetricError::InvalidArgument("snr must be positive".into()));
    }
    if !(rho0.abs() > T::zero() && rho0.abs() <= T::one()) {
        return Err(MetricError::InvalidArgument(
            "|rho0| must be in (0, 1]".into(),
        ));
    }
    Ok(T::one() / (snr * rho0 * rho0))
}

pub fn success_rate<T: Scalar>(successes: usize, attempts: usize) -> Result<T, MetricError> {
    if attempts == 0 || successes > attempts {
        return Err(MetricError::InvalidArgument(format!(
            "need 0 <= successes <= attempts and attempts >= 1, got {successes}/{attempts}"
        )));
    }
    Ok(T::from_usize_lossy(successes) / T::from_usize_lossy(attempts))
}

/// Descending JS cut points; a design scores 1 plus the number of cuts its
/// JS lies strictly below.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScoreThresholds<T> {
    pub cuts: [T; 4],
}

impl<T: Scalar> Default for ScoreThresholds<T> {
    fn default() -> Self {
        ScoreThresholds {
            cuts: [0.30, 0.20, 0.12, 0.05].map(T::from_f64_lossy),
        }
    }
}

impl<T: Scalar> ScoreThresholds<T> {
    pub fn new(cuts: [T; 4]) -> Result<ScoreThresholds<T>, MetricError> {
        let in_range = cuts.iter().all(|&c| c > T::zero() && c < T::one());
        let decreasing = cuts.windows(2).all(|w| w[0] > w[1]);
        if !in_range || !decreasing {
            return Err(MetricError::InvalidArgument(
                "score cuts must be strictly decreasing and inside (0, 1)".into(),
            ));
        }
        Ok(ScoreThresholds { cuts })
    }

    /// Name used in reports.
    pub fn profile_name(&self) -> String {
        if *self == Self::default() {
            "default (invented calibration)".into()
        } else {
            "custom".into()
        }
    }
}

/// 5 is the most secure; a value on a cut point takes the lower score.
pub fn security_score<T: Scalar>(js: T, thresholds: &ScoreThresholds<T>) -> u8 {
    1 + thresholds.cuts.iter().filter(|&&c| js < c).count() as u8
}

/// Report row for one computed metric.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub metric: String,
    pub value: f64,
    pub params: serde_json::Value,
    pub threshold_profile: Option<String>,
}

/// Per-cycle JS between two runs: rows are cycle positions, columns are the
/// subsystem total followed by each block.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JsMatrix<T> {
    pub columns: Vec<String>,
    pub rows: Vec<Vec<T>>,
}

impl<T: Scalar> JsMatrix<T> {
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<(), csv::Error> {
        let mut w = csv::Writer::from_writer(writer);
        let mut header = vec!["cycle".to_string()];
        header.extend(self.columns.iter().cloned());
        w.write_record(&header)?;
        for (c, row) in self.rows.iter().enumerate() {
            let mut rec = vec![c.to_string()];
            rec.extend(row.iter().map(|v| format!("{v}")));
            w.write_record(&rec)?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn column(&self, j: usize) -> Vec<T> {
        self.rows.iter().map(|r| r[j]).collect()
    }
}

/// Side-channel measurement between the runs under two keys.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PscMeasurement<T> {
    /// Largest per-cycle subsystem JS; the headline value.
    pub js: T,
    pub js_per_encryption: T,
    pub js_per_cycle: Vec<T>,
    pub score: u8,
    pub matrix: JsMatrix<T>,
}

fn check_shapes(a: &SubsystemTrace, b: &SubsystemTrace) -> Result<(), MetricError> {
    if a.blocks != b.blocks || a.cycles_per_encryption != b.cycles_per_encryption {
        return Err(MetricError::InvalidArgument(
            "traces have different block layouts".into(),
        ));
    }
    if a.num_encryptions() == 0 || b.num_encryptions() == 0 {
        return Err(MetricError::Empty);
    }
    Ok(())
}

pub fn js_matrix<T: Scalar>(
    k1: &SubsystemTrace,
    k2: &SubsystemTrace,
    bins: Option<usize>,
) -> Result<JsMatrix<T>, MetricError> {
    check_shapes(k1, k2)?;
    let mut columns = vec!["subsystem".to_string()];
    columns.extend(k1.blocks.iter().cloned());
    let blocks: Vec<Option<usize>> = std::iter::once(None)
        .chain((0..k1.blocks.len()).map(Some))
        .collect();
    let rows = (0..k1.cycles_per_encryption)
        .map(|c| {
            blocks
                .iter()
                .map(|&b| js_from_samples(&k1.cycle_samples(b, c), &k2.cycle_samples(b, c), bins))
                .collect::<Result<Vec<T>, _>>()
        })
        .collect::<Result<Vec<_>, _>>()?;
    Ok(JsMatrix { columns, rows })
}

/// Subsystem-level JS per cycle position and per encryption, with the
/// score of the headline (largest per-cycle) value.
pub fn measure_psc<T: Scalar>(
    k1: &SubsystemTrace,
    k2: &SubsystemTrace,
    bins: Option<usize>,
    thresholds: &ScoreThresholds<T>,
) -> Result<PscMeasurement<T>, MetricError> {
    let matrix = js_matrix::<T>(k1, k2, bins)?;
    let js_per_cycle = matrix.column(0);
    let js = js_per_cycle.iter().copied().fold(T::zero(), T::max);
    let js_per_encryption = js_from_samples(
        &k1.samples(None, crate::power::Granularity::PerEncryption),
        &k2.samples(None, crate::power::Granularity::PerEncryption),
        bins,
    )?;
    Ok(PscMeasurement {
        js,
        js_per_encryption,
        js_per_cycle,
        score: security_score(js, thresholds),
        matrix,
    })
}
