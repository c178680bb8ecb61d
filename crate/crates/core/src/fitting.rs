//! Non-parametric joint transiogram models.
//!
//! Two estimators evaluate a curve family at arbitrary lags `h*` in one
//! direction:
//!
//! * linear interpolation between the two bracketing empirical lags, which
//!   cannot extrapolate;
//! * Nadaraya-Watson kernel regression
//!   `π(h*) = Σ κ(|h_n - h*|/r) p(h_n) / Σ κ(|h_n - h*|/r)`, with `π(0)` forced
//!   to the identity matrix.
//!
//! Every head of a tail shares the same weights, so each fitted tail row is
//! a convex combination of unit-sum rows and therefore itself unit-sum and
//! non-negative.

use std::fmt;
use std::io::Write;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::empirical::EmpiricalTransiogram;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum KernelFamily {
    Epanechnikov,
    Gaussian,
    Biweight,
    Triangular,
}

impl KernelFamily {
    pub const ALL: [KernelFamily; 4] = [
        KernelFamily::Epanechnikov,
        KernelFamily::Gaussian,
        KernelFamily::Biweight,
        KernelFamily::Triangular,
    ];

    /// κ(t). The Gaussian profile is `exp(-t²)/√(2π)`; its constant cancels
    /// in the regression ratio.
    pub fn profile(self, t: f64) -> f64 {
        let a = t.abs();
        match self {
            KernelFamily::Epanechnikov => {
                if a <= 1.0 {
                    0.75 * (1.0 - t * t)
                } else {
                    0.0
                }
            }
            KernelFamily::Gaussian => (-t * t).exp() / (2.0 * std::f64::consts::PI).sqrt(),
            KernelFamily::Biweight => {
                if a <= 1.0 {
                    let u = 1.0 - t * t;
                    15.0 / 16.0 * u * u
                } else {
                    0.0
                }
            }
            KernelFamily::Triangular => {
                if a <= 1.0 {
                    1.0 - a
                } else {
                    0.0
                }
            }
        }
    }

    pub fn is_compact(self) -> bool {
        !matches!(self, KernelFamily::Gaussian)
    }

    pub fn name(self) -> &'static str {
        match self {
            KernelFamily::Epanechnikov => "epanechnikov",
            KernelFamily::Gaussian => "gaussian",
            KernelFamily::Biweight => "biweight",
            KernelFamily::Triangular => "triangular",
        }
    }
}

impl fmt::Display for KernelFamily {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for KernelFamily {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        KernelFamily::ALL
            .into_iter()
            .find(|k| k.name().eq_ignore_ascii_case(s))
            .ok_or_else(|| Error::InvalidArgument(format!("unknown kernel `{s}`")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KernelSpec {
    pub family: KernelFamily,
    pub bandwidth: f64,
}

impl KernelSpec {
    pub fn new(family: KernelFamily, bandwidth: f64) -> Result<Self> {
        if !(bandwidth.is_finite() && bandwidth > 0.0) {
            return Err(Error::InvalidArgument(format!(
                "bandwidth must be > 0, got {bandwidth}"
            )));
        }
        Ok(Self { family, bandwidth })
    }

    /// Weight for a lag difference `dh` (map units).
    pub fn eval(&self, dh: f64) -> f64 {
        self.family.profile(dh / self.bandwidth)
    }
}

/// Linear interpolation between the knots bracketing `h`.
///
/// `knots` must be sorted by strictly increasing distance.
pub fn linear_interpolate(knots: &[(f64, f64)], h: f64) -> Result<f64> {
    if knots.is_empty() {
        return Err(Error::InvalidArgument("no knots".into()));
    }
    if knots.windows(2).any(|w| w[1].0 <= w[0].0) {
        return Err(Error::InvalidArgument("knot distances must be strictly increasing".into()));
    }
    let (lo, hi) = (knots[0].0, knots[knots.len() - 1].0);
    if !(h >= lo && h <= hi) {
        return Err(Error::OutOfRange { h, lo, hi });
    }
    let n = knots.partition_point(|k| k.0 <= h);
    if n == knots.len() {
        return Ok(knots[n - 1].1);
    }
    let (h0, p0) = knots[n - 1];
    let (h1, p1) = knots[n];
    Ok((p0 * (h1 - h).abs() + p1 * (h - h0).abs()) / (h1 - h0).abs())
}

/// Which samples take part in a regression.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Neighborhood {
    /// All defined samples, weighted by the kernel at the model bandwidth.
    #[default]
    All,
    /// Only the two samples bracketing `h*`, with the bandwidth set locally to
    /// their spacing. With the triangular kernel this is linear interpolation.
    Bracketing,
}

/// A Nadaraya-Watson transiogram model over one curve family.
#[derive(Debug, Clone, PartialEq)]
pub struct NonparametricModel {
    nclasses: usize,
    distances: Vec<f64>,
    /// `values[lag][(tail-1)*K + (head-1)]`, `None` when the tail is undefined.
    values: Vec<Vec<Option<f64>>>,
    /// `npairs[lag][tail-1]`
    npairs: Vec<Vec<u64>>,
    kernel: KernelSpec,
    pair_weights: bool,
    neighborhood: Neighborhood,
}

impl NonparametricModel {
    /// Build from empirical samples. Lags are ordered by distance; a tail is
    /// used at a lag only when all of its heads are defined there.
    pub fn new(curve: &EmpiricalTransiogram, kernel: KernelSpec) -> Result<Self> {
        let k = curve.nclasses();
        let mut order: Vec<usize> = (0..curve.nlags()).collect();
        let dist = curve.distances();
        if dist.iter().any(|d| !(d.is_finite() && *d > 0.0)) {
            return Err(Error::InvalidArgument("sample lags must have positive distance".into()));
        }
        order.sort_by(|&a, &b| dist[a].total_cmp(&dist[b]));
        let mut distances = Vec::with_capacity(order.len());
        let mut values = Vec::with_capacity(order.len());
        let mut npairs = Vec::with_capacity(order.len());
        for i in order {
            distances.push(dist[i]);
            let row = curve.samples_at(i);
            let mut v = vec![None; k * k];
            let mut np = vec![0u64; k];
            for tail in 0..k {
                let cells = &row[tail * k..(tail + 1) * k];
                if cells.iter().all(|s| s.value.is_some()) {
                    for (j, s) in cells.iter().enumerate() {
                        v[tail * k + j] = s.value;
                    }
                    np[tail] = cells[0].npairs;
                }
            }
            values.push(v);
            npairs.push(np);
        }
        Ok(Self {
            nclasses: k,
            distances,
            values,
            npairs,
            kernel,
            pair_weights: false,
            neighborhood: Neighborhood::All,
        })
    }

    /// Multiply kernel weights by the per-tail pair count.
    pub fn with_pair_weights(mut self, on: bool) -> Self {
        self.pair_weights = on;
        self
    }

    pub fn with_neighborhood(mut self, neighborhood: Neighborhood) -> Self {
        self.neighborhood = neighborhood;
        self
    }

    pub fn with_kernel(mut self, kernel: KernelSpec) -> Self {
        self.kernel = kernel;
        self
    }

    pub fn nclasses(&self) -> usize {
        self.nclasses
    }

    pub fn kernel(&self) -> KernelSpec {
        self.kernel
    }

    pub fn distances(&self) -> &[f64] {
        &self.distances
    }

    fn defined(&self, lag: usize, tail: usize) -> bool {
        self.values[lag][(tail - 1) * self.nclasses].is_some()
    }

    fn value(&self, lag: usize, tail: usize, head: usize) -> f64 {
        self.values[lag][(tail - 1) * self.nclasses + (head - 1)].expect("defined sample")
    }

    /// Non-zero weights shared by every head of `tail`, optionally leaving out
    /// one lag.
    fn weights(&self, tail: usize, h: f64, skip: Option<usize>) -> Result<Vec<(usize, f64)>> {
        let usable = (0..self.distances.len())
            .filter(|&n| Some(n) != skip && self.defined(n, tail));
        let mut out: Vec<(usize, f64)> = match self.neighborhood {
            Neighborhood::All => usable
                .map(|n| (n, self.kernel.eval(self.distances[n] - h)))
                .collect(),
            Neighborhood::Bracketing => {
                let idx: Vec<usize> = usable.collect();
                let pos = idx.partition_point(|&n| self.distances[n] <= h);
                if idx.is_empty()
                    || h < self.distances[idx[0]]
                    || h > self.distances[idx[idx.len() - 1]]
                {
                    return Err(Error::NotEvaluable(format!(
                        "h* = {h} outside the sampled range for tail {tail}"
                    )));
                }
                if pos == idx.len() {
                    vec![(idx[pos - 1], 1.0)]
                } else {
                    let (lo, hi) = (idx[pos - 1], idx[pos]);
                    let local = KernelSpec {
                        family: self.kernel.family,
                        bandwidth: self.distances[hi] - self.distances[lo],
                    };
                    vec![
                        (lo, local.eval(self.distances[lo] - h)),
                        (hi, local.eval(self.distances[hi] - h)),
                    ]
                }
            }
        };
        if self.pair_weights {
            for (n, w) in &mut out {
                *w *= self.npairs[*n][tail - 1] as f64;
            }
        }
        out.retain(|&(_, w)| w > 0.0);
        if out.is_empty() {
            return Err(Error::NotEvaluable(format!(
                "no sample receives weight at h* = {h} for tail {tail}"
            )));
        }
        Ok(out)
    }

    fn check_classes(&self, tail: usize, head: usize) -> Result<()> {
        for c in [tail, head] {
            if c == 0 || c > self.nclasses {
                return Err(Error::ClassOutOfRange {
                    class: c,
                    nclasses: self.nclasses,
                });
            }
        }
        Ok(())
    }

    fn weighted(&self, weights: &[(usize, f64)], tail: usize, head: usize) -> f64 {
        let total: f64 = weights.iter().map(|w| w.1).sum();
        let acc: f64 = weights
            .iter()
            .map(|&(n, w)| w * self.value(n, tail, head))
            .sum();
        (acc / total).clamp(0.0, 1.0)
    }

    /// `π̂_{head|tail}(h*)`.
    pub fn kernel_regress(&self, tail: usize, head: usize, h: f64) -> Result<f64> {
        self.check_classes(tail, head)?;
        if !(h >= 0.0) {
            return Err(Error::InvalidArgument(format!("lag distance must be >= 0, got {h}")));
        }
        if h == 0.0 {
            return Ok(if tail == head { 1.0 } else { 0.0 });
        }
        let w = self.weights(tail, h, None)?;
        Ok(self.weighted(&w, tail, head))
    }

    /// The full K×K matrix at `h*`; rows are `None` where the tail is not
    /// evaluable.
    pub fn regress_matrix(&self, h: f64) -> Result<Vec<Option<Vec<f64>>>> {
        if !(h >= 0.0) {
            return Err(Error::InvalidArgument(format!("lag distance must be >= 0, got {h}")));
        }
        let k = self.nclasses;
        Ok((1..=k)
            .map(|tail| {
                if h == 0.0 {
                    return Some((1..=k).map(|head| f64::from(u8::from(head == tail))).collect());
                }
                let w = self.weights(tail, h, None).ok()?;
                Some((1..=k).map(|head| self.weighted(&w, tail, head)).collect())
            })
            .collect())
    }

    /// Jump between the limit at `0⁺` (evaluated at a thousandth of the
    /// smallest lag) and the forced origin value.
    pub fn nugget(&self, tail: usize, head: usize) -> Result<f64> {
        self.check_classes(tail, head)?;
        let first = (0..self.distances.len())
            .find(|&n| self.defined(n, tail))
            .ok_or_else(|| Error::NotEvaluable(format!("tail {tail} has no defined samples")))?;
        let h = self.distances[first] / 1000.0;
        let near = self.kernel_regress(tail, head, h)?;
        let origin = if tail == head { 1.0 } else { 0.0 };
        Ok((near - origin).abs())
    }

    /// Leave-one-out squared error, weighted by pair counts and normalised by
    /// the weight of the terms that could be evaluated. `None` when no term
    /// is evaluable.
    pub fn loo_score(&self) -> Option<f64> {
        let k = self.nclasses;
        let mut loss = 0.0;
        let mut weight = 0.0;
        for n in 0..self.distances.len() {
            for tail in 1..=k {
                if !self.defined(n, tail) {
                    continue;
                }
                let Ok(w) = self.weights(tail, self.distances[n], Some(n)) else {
                    continue;
                };
                let wn = self.npairs[n][tail - 1] as f64;
                let mut sq = 0.0;
                for head in 1..=k {
                    let d = self.value(n, tail, head) - self.weighted(&w, tail, head);
                    sq += d * d;
                }
                loss += wn * sq;
                weight += wn;
            }
        }
        (weight > 0.0).then(|| loss / weight)
    }
}

/// Outcome of least-squares cross-validation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LscvResult {
    pub bandwidth: f64,
    /// `(candidate, score)`; `None` when the candidate evaluated no term.
    pub scores: Vec<(f64, Option<f64>)>,
}

/// Pick the candidate bandwidth with the smallest leave-one-out error.
/// Ties go to the smaller bandwidth.
pub fn select_bandwidth_lscv(
    curve: &EmpiricalTransiogram,
    family: KernelFamily,
    candidates: &[f64],
) -> Result<LscvResult> {
    if candidates.is_empty() {
        return Err(Error::InvalidArgument("empty bandwidth candidate grid".into()));
    }
    let mut sorted = candidates.to_vec();
    for &r in &sorted {
        KernelSpec::new(family, r)?;
    }
    sorted.sort_by(f64::total_cmp);
    sorted.dedup();

    let base = NonparametricModel::new(curve, KernelSpec::new(family, sorted[0])?)?;
    let lags_with_data = (0..base.distances.len())
        .filter(|&n| (1..=base.nclasses).any(|t| base.defined(n, t)))
        .count();
    if lags_with_data < 3 {
        return Err(Error::InvalidArgument(format!(
            "cross-validation needs at least 3 lags with defined samples, got {lags_with_data}"
        )));
    }

    use rayon::prelude::*;
    let scores: Vec<(f64, Option<f64>)> = sorted
        .par_iter()
        .map(|&r| {
            let model = base.clone().with_kernel(KernelSpec {
                family,
                bandwidth: r,
            });
            (r, model.loo_score())
        })
        .collect();

    let mut best: Option<(f64, f64)> = None;
    for &(r, s) in &scores {
        let Some(s) = s else { continue };
        match best {
            None => best = Some((r, s)),
            Some((_, bs)) if s < bs - 1e-12 * bs.abs() - 1e-300 => best = Some((r, s)),
            _ => {}
        }
    }
    let (bandwidth, _) = best.ok_or_else(|| {
        Error::NotEvaluable("no candidate bandwidth could evaluate any held-out sample".into())
    })?;
    Ok(LscvResult { bandwidth, scores })
}

/// Write fitted curves at the given lags using the curve CSV schema plus a
/// `fitted` column. Offsets and pair counts are empty; non-evaluable values
/// are empty.
pub fn write_fitted_csv<W: Write>(model: &NonparametricModel, lags: &[f64], w: W) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(w);
    wtr.write_record(["tail", "head", "drow", "dcol", "distance", "value", "npairs", "fitted"])?;
    for &h in lags {
        let matrix = model.regress_matrix(h)?;
        for (t, row) in matrix.iter().enumerate() {
            for head in 0..model.nclasses {
                let value = row
                    .as_ref()
                    .map(|r| r[head].to_string())
                    .unwrap_or_default();
                wtr.write_record([
                    (t + 1).to_string(),
                    (head + 1).to_string(),
                    String::new(),
                    String::new(),
                    h.to_string(),
                    value,
                    String::new(),
                    "1".to_string(),
                ])?;
            }
        }
    }
    wtr.flush()?;
    Ok(())
}
