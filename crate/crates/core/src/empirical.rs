//! Exhaustive-scan estimation of auto- and cross-transiograms.
//!
//! For a lag `h`, every cell `x` whose head `x + h` falls inside the grid
//! contributes one ordered pair. Pairs with out-of-bounds heads are discarded.
//! The default estimator divides the transition count `k -> k'` by the number
//! of in-bounds pairs whose tail is `k`, so every defined tail row sums to
//! exactly one.

use std::collections::HashMap;
use std::io::{Read, Write};

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::grid::{CategoricalGrid, LagVector};

/// Tolerance on per-tail unit sums when reading curves from text.
pub const CSV_UNIT_SUM_TOL: f64 = 1e-9;

/// One transiogram value π̂_{head|tail}(h) with its supporting counts.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TransiogramSample {
    pub tail: usize,
    pub head: usize,
    /// `None` when no in-bounds pair has this tail class.
    pub value: Option<f64>,
    pub npairs: u64,
    pub ntransitions: u64,
}

/// Lag at which a curve is sampled: an exact offset or a distance bin.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum CurveLag {
    Vector(LagVector),
    /// Half-open distance bin `(lower, upper]`.
    Bin { lower: f64, upper: f64 },
}

impl CurveLag {
    /// Map-unit distance: the exact length, or the bin midpoint.
    pub fn distance(&self) -> f64 {
        match *self {
            CurveLag::Vector(v) => v.distance,
            CurveLag::Bin { lower, upper } => 0.5 * (lower + upper),
        }
    }

    pub fn vector(&self) -> Option<LagVector> {
        match *self {
            CurveLag::Vector(v) => Some(v),
            CurveLag::Bin { .. } => None,
        }
    }
}

/// Integer transition counts for one lag; `counts[tail][head]`, 0-based.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TransitionCounts {
    nclasses: usize,
    counts: Vec<u64>,
}

impl TransitionCounts {
    pub fn zeros(nclasses: usize) -> Self {
        Self {
            nclasses,
            counts: vec![0; nclasses * nclasses],
        }
    }

    #[inline]
    pub fn get(&self, tail: usize, head: usize) -> u64 {
        self.counts[(tail - 1) * self.nclasses + (head - 1)]
    }

    #[inline]
    fn bump(&mut self, tail: u32, head: u32) {
        self.counts[(tail as usize - 1) * self.nclasses + (head as usize - 1)] += 1;
    }

    /// Number of in-bounds pairs with the given tail class.
    pub fn npairs(&self, tail: usize) -> u64 {
        let row = (tail - 1) * self.nclasses;
        self.counts[row..row + self.nclasses].iter().sum()
    }

    /// Total number of in-bounds pairs, N(h).
    pub fn total(&self) -> u64 {
        self.counts.iter().sum()
    }

    pub fn merge(&mut self, other: &TransitionCounts) {
        for (a, b) in self.counts.iter_mut().zip(&other.counts) {
            *a += b;
        }
    }

    pub fn sample(&self, tail: usize, head: usize) -> TransiogramSample {
        let npairs = self.npairs(tail);
        let ntransitions = self.get(tail, head);
        TransiogramSample {
            tail,
            head,
            value: (npairs > 0).then(|| ntransitions as f64 / npairs as f64),
            npairs,
            ntransitions,
        }
    }

    /// All K×K samples, row-major by tail.
    pub fn samples(&self) -> Vec<TransiogramSample> {
        let k = self.nclasses;
        let mut out = Vec::with_capacity(k * k);
        for tail in 1..=k {
            for head in 1..=k {
                out.push(self.sample(tail, head));
            }
        }
        out
    }
}

/// Count all in-bounds ordered pairs separated by `(drow, dcol)`.
pub fn count_lag(grid: &CategoricalGrid, drow: i64, dcol: i64) -> TransitionCounts {
    let mut counts = TransitionCounts::zeros(grid.nclasses());
    accumulate(grid, drow, dcol, &mut counts);
    counts
}

fn accumulate(grid: &CategoricalGrid, drow: i64, dcol: i64, counts: &mut TransitionCounts) {
    let (nr, nc) = (grid.nrows() as i64, grid.ncols() as i64);
    if drow.abs() >= nr || dcol.abs() >= nc {
        return;
    }
    let r0 = 0.max(-drow);
    let r1 = nr.min(nr - drow);
    let c0 = 0.max(-dcol);
    let c1 = nc.min(nc - dcol);
    let labels = grid.labels();
    let width = (c1 - c0) as usize;
    for r in r0..r1 {
        let tail_start = (r * nc + c0) as usize;
        let head_start = ((r + drow) * nc + c0 + dcol) as usize;
        let tails = &labels[tail_start..tail_start + width];
        let heads = &labels[head_start..head_start + width];
        for (&t, &h) in tails.iter().zip(heads) {
            counts.bump(t, h);
        }
    }
}

/// K×K samples at a single lag vector, row-major by tail.
pub fn scan_lag(grid: &CategoricalGrid, lag: LagVector) -> Vec<TransiogramSample> {
    count_lag(grid, lag.drow, lag.dcol).samples()
}

/// Literal whole-map normalisation: `(1 / (π_k N(h))) Σ i_k(x) i_k'(x+h)`.
///
/// Rows need not sum to one near borders. Entries are `None` when the tail
/// class is absent from the map or no pair is in bounds.
pub fn scan_lag_global_norm(grid: &CategoricalGrid, lag: LagVector) -> Vec<Vec<Option<f64>>> {
    let counts = count_lag(grid, lag.drow, lag.dcol);
    let props = grid.proportions();
    let n = counts.total();
    let k = grid.nclasses();
    (1..=k)
        .map(|tail| {
            let pk = props[tail - 1];
            (1..=k)
                .map(|head| {
                    (pk > 0.0 && n > 0)
                        .then(|| counts.get(tail, head) as f64 / (pk * n as f64))
                })
                .collect()
        })
        .collect()
}

/// A K×K family of transiogram curves sampled at an ordered list of lags.
#[derive(Debug, Clone, PartialEq)]
pub struct EmpiricalTransiogram {
    nclasses: usize,
    lags: Vec<CurveLag>,
    /// `samples[lag][ (tail-1)*K + (head-1) ]`
    samples: Vec<Vec<TransiogramSample>>,
}

impl EmpiricalTransiogram {
    pub fn new(
        nclasses: usize,
        lags: Vec<CurveLag>,
        samples: Vec<Vec<TransiogramSample>>,
    ) -> Result<Self> {
        if lags.len() != samples.len() {
            return Err(Error::InvalidArgument(
                "one sample matrix is required per lag".into(),
            ));
        }
        for row in &samples {
            if row.len() != nclasses * nclasses {
                return Err(Error::InvalidArgument(format!(
                    "expected {} samples per lag, got {}",
                    nclasses * nclasses,
                    row.len()
                )));
            }
        }
        Ok(Self {
            nclasses,
            lags,
            samples,
        })
    }

    fn from_counts(nclasses: usize, lags: Vec<CurveLag>, counts: &[TransitionCounts]) -> Self {
        let samples = counts.iter().map(TransitionCounts::samples).collect();
        Self {
            nclasses,
            lags,
            samples,
        }
    }

    pub fn nclasses(&self) -> usize {
        self.nclasses
    }

    pub fn lags(&self) -> &[CurveLag] {
        &self.lags
    }

    pub fn nlags(&self) -> usize {
        self.lags.len()
    }

    pub fn distances(&self) -> Vec<f64> {
        self.lags.iter().map(CurveLag::distance).collect()
    }

    pub fn sample(&self, lag_index: usize, tail: usize, head: usize) -> &TransiogramSample {
        &self.samples[lag_index][(tail - 1) * self.nclasses + (head - 1)]
    }

    pub fn samples_at(&self, lag_index: usize) -> &[TransiogramSample] {
        &self.samples[lag_index]
    }

    /// `(distance, value, npairs)` along one curve.
    pub fn curve(&self, tail: usize, head: usize) -> Vec<(f64, Option<f64>, u64)> {
        (0..self.lags.len())
            .map(|i| {
                let s = self.sample(i, tail, head);
                (self.lags[i].distance(), s.value, s.npairs)
            })
            .collect()
    }

    /// Largest deviation of a defined tail row from unit sum.
    pub fn max_unit_sum_error(&self) -> f64 {
        let k = self.nclasses;
        let mut worst = 0.0f64;
        for row in &self.samples {
            for tail in 0..k {
                let cells = &row[tail * k..(tail + 1) * k];
                if cells.iter().all(|s| s.value.is_some()) {
                    let sum: f64 = cells.iter().filter_map(|s| s.value).sum();
                    worst = worst.max((sum - 1.0).abs());
                }
            }
        }
        worst
    }

    /// Write the curve CSV: `tail,head,drow,dcol,distance,value,npairs`.
    /// Undefined values and bin offsets are empty fields.
    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut wtr = csv::Writer::from_writer(w);
        wtr.write_record(["tail", "head", "drow", "dcol", "distance", "value", "npairs"])?;
        for (lag, row) in self.lags.iter().zip(&self.samples) {
            let (dr, dc) = match lag.vector() {
                Some(v) => (v.drow.to_string(), v.dcol.to_string()),
                None => (String::new(), String::new()),
            };
            for s in row {
                wtr.write_record([
                    s.tail.to_string(),
                    s.head.to_string(),
                    dr.clone(),
                    dc.clone(),
                    lag.distance().to_string(),
                    s.value.map(|v| v.to_string()).unwrap_or_default(),
                    s.npairs.to_string(),
                ])?;
            }
        }
        wtr.flush()?;
        Ok(())
    }

    /// Parse the curve CSV. Rows are grouped into lags by `(drow, dcol,
    /// distance)` in order of first appearance; lags are then sorted by
    /// distance. Rejects incomplete K×K blocks and any defined tail row whose
    /// values miss unit sum by more than [`CSV_UNIT_SUM_TOL`]. An empty
    /// `npairs` (as in fitted output) reads as 0.
    pub fn read_csv<R: Read>(r: R) -> Result<Self> {
        let mut rdr = csv::Reader::from_reader(r);
        let headers = rdr.headers()?.clone();
        let expected = ["tail", "head", "drow", "dcol", "distance", "value", "npairs"];
        for (i, name) in expected.iter().enumerate() {
            if headers.get(i).map(str::trim) != Some(*name) {
                return Err(Error::CorruptCurve(format!(
                    "header column {} should be `{name}`",
                    i + 1
                )));
            }
        }

        struct Row {
            tail: usize,
            head: usize,
            value: Option<f64>,
            npairs: u64,
        }
        type Key = (Option<i64>, Option<i64>, u64);
        let mut order: Vec<(Key, f64)> = Vec::new();
        let mut groups: HashMap<Key, Vec<Row>> = HashMap::new();
        let mut nclasses = 0usize;

        for (i, rec) in rdr.records().enumerate() {
            let rec = rec?;
            let line = i + 2;
            let field = |j: usize| rec.get(j).map(str::trim).unwrap_or("");
            let bad = |what: &str| Error::Parse {
                line,
                message: format!("invalid {what}"),
            };
            let opt_int = |s: &str| -> std::result::Result<Option<i64>, ()> {
                if s.is_empty() {
                    Ok(None)
                } else {
                    s.parse().map(Some).map_err(|_| ())
                }
            };
            let tail: usize = field(0).parse().map_err(|_| bad("tail"))?;
            let head: usize = field(1).parse().map_err(|_| bad("head"))?;
            let drow = opt_int(field(2)).map_err(|_| bad("drow"))?;
            let dcol = opt_int(field(3)).map_err(|_| bad("dcol"))?;
            let distance: f64 = field(4).parse().map_err(|_| bad("distance"))?;
            let value = match field(5) {
                "" => None,
                s => Some(s.parse::<f64>().map_err(|_| bad("value"))?),
            };
            let npairs: u64 = match field(6) {
                "" => 0,
                s => s.parse().map_err(|_| bad("npairs"))?,
            };
            if tail == 0 || head == 0 || !(distance.is_finite() && distance >= 0.0) {
                return Err(bad("tail/head/distance"));
            }
            if let Some(v) = value {
                if !(0.0..=1.0).contains(&v) {
                    return Err(Error::CorruptCurve(format!(
                        "line {line}: value {v} outside [0, 1]"
                    )));
                }
            }
            nclasses = nclasses.max(tail).max(head);
            let key = (drow, dcol, distance.to_bits());
            groups
                .entry(key)
                .or_insert_with(|| {
                    order.push((key, distance));
                    Vec::new()
                })
                .push(Row {
                    tail,
                    head,
                    value,
                    npairs,
                });
        }
        if order.is_empty() {
            return Err(Error::CorruptCurve("no samples".into()));
        }
        if nclasses < 2 {
            return Err(Error::CorruptCurve("need at least 2 classes".into()));
        }
        order.sort_by(|a, b| a.1.total_cmp(&b.1));

        let k = nclasses;
        let mut lags = Vec::with_capacity(order.len());
        let mut samples = Vec::with_capacity(order.len());
        for (key, distance) in order {
            let rows = &groups[&key];
            let mut block: Vec<Option<TransiogramSample>> = vec![None; k * k];
            for r in rows {
                let slot = &mut block[(r.tail - 1) * k + (r.head - 1)];
                if slot.is_some() {
                    return Err(Error::CorruptCurve(format!(
                        "duplicate sample {}->{} at distance {distance}",
                        r.tail, r.head
                    )));
                }
                let ntransitions = r
                    .value
                    .map(|v| (v * r.npairs as f64).round() as u64)
                    .unwrap_or(0);
                *slot = Some(TransiogramSample {
                    tail: r.tail,
                    head: r.head,
                    value: r.value,
                    npairs: r.npairs,
                    ntransitions,
                });
            }
            let block: Vec<TransiogramSample> = block
                .into_iter()
                .collect::<Option<_>>()
                .ok_or_else(|| {
                    Error::CorruptCurve(format!("incomplete {k}x{k} block at distance {distance}"))
                })?;
            for tail in 1..=k {
                let cells = &block[(tail - 1) * k..tail * k];
                let defined = cells.iter().filter(|s| s.value.is_some()).count();
                if defined == 0 {
                    continue;
                }
                if defined != k {
                    return Err(Error::CorruptCurve(format!(
                        "tail {tail} partially defined at distance {distance}"
                    )));
                }
                let sum: f64 = cells.iter().filter_map(|s| s.value).sum();
                if (sum - 1.0).abs() > CSV_UNIT_SUM_TOL {
                    return Err(Error::CorruptCurve(format!(
                        "tail {tail} sums to {sum} at distance {distance}"
                    )));
                }
            }
            let lag = match (key.0, key.1) {
                (Some(dr), Some(dc)) => {
                    let mut v = LagVector::new(dr, dc, 1.0);
                    v.distance = distance;
                    CurveLag::Vector(v)
                }
                _ => CurveLag::Bin {
                    lower: distance,
                    upper: distance,
                },
            };
            lags.push(lag);
            samples.push(block);
        }
        Self::new(k, lags, samples)
    }
}

/// Scan at integer multiples `1..=maxlag` of a unit cell step.
pub fn directional_curve(
    grid: &CategoricalGrid,
    step: (i64, i64),
    maxlag: usize,
) -> Result<EmpiricalTransiogram> {
    if step == (0, 0) {
        return Err(Error::InvalidArgument("direction step must be nonzero".into()));
    }
    if maxlag == 0 {
        return Err(Error::InvalidArgument("maxlag must be at least 1".into()));
    }
    let lags: Vec<CurveLag> = (1..=maxlag as i64)
        .map(|m| CurveLag::Vector(LagVector::new(step.0 * m, step.1 * m, grid.cellsize())))
        .collect();
    let counts: Vec<TransitionCounts> = lags
        .par_iter()
        .map(|lag| {
            let v = lag.vector().expect("directional lags are vectors");
            count_lag(grid, v.drow, v.dcol)
        })
        .collect();
    Ok(EmpiricalTransiogram::from_counts(grid.nclasses(), lags, &counts))
}

/// Pool counts of every integer offset (both `h` and `-h`) whose length lies
/// in each half-open bin `(edges[i], edges[i+1]]`, then divide.
pub fn omnidirectional_curve(
    grid: &CategoricalGrid,
    edges: &[f64],
) -> Result<EmpiricalTransiogram> {
    if edges.len() < 2 {
        return Err(Error::InvalidArgument("need at least two bin edges".into()));
    }
    if !(edges[0] > 0.0) || edges.iter().any(|e| !e.is_finite()) {
        return Err(Error::InvalidArgument("bin edges must be finite and start above 0".into()));
    }
    if edges.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::InvalidArgument("bin edges must be strictly increasing".into()));
    }
    let c = grid.cellsize();
    let max = *edges.last().unwrap();
    let rmax = ((max / c).floor() as i64).min(grid.nrows() as i64 - 1);
    let cmax = ((max / c).floor() as i64).min(grid.ncols() as i64 - 1);

    let nbins = edges.len() - 1;
    let mut members: Vec<Vec<(i64, i64)>> = vec![Vec::new(); nbins];
    for dr in -rmax..=rmax {
        for dc in -cmax..=cmax {
            if dr == 0 && dc == 0 {
                continue;
            }
            let d = c * (dr as f64).hypot(dc as f64);
            // first bin whose upper edge is >= d
            let idx = edges.partition_point(|&e| e < d);
            if idx >= 1 && idx <= nbins {
                members[idx - 1].push((dr, dc));
            }
        }
    }

    let counts: Vec<TransitionCounts> = members
        .par_iter()
        .map(|offsets| {
            let mut acc = TransitionCounts::zeros(grid.nclasses());
            for &(dr, dc) in offsets {
                accumulate(grid, dr, dc, &mut acc);
            }
            acc
        })
        .collect();
    let lags = edges
        .windows(2)
        .map(|w| CurveLag::Bin {
            lower: w[0],
            upper: w[1],
        })
        .collect();
    Ok(EmpiricalTransiogram::from_counts(grid.nclasses(), lags, &counts))
}
