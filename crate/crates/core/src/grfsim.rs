//! Stationary Gaussian random fields on a lattice, truncated into
//! categorical maps, with their theoretical indicator auto-transiograms.
//!
//! Two exact-in-distribution samplers are provided:
//!
//! * dense: factorise the full covariance matrix (Cholesky, with a clamped
//!   eigendecomposition fallback for numerically singular matrices);
//! * circulant embedding: embed the lattice in a torus of at least twice its
//!   size, diagonalise the block-circulant covariance with a 2D FFT, and
//!   colour complex white noise. The embedding is rejected when its spectrum
//!   has materially negative eigenvalues.
//!
//! Random numbers come from ChaCha8 seeded with the user seed; stream `i`
//! feeds row `i` (of the lattice, or of the torus for the circulant path), so
//! a seed always reproduces the same field.

use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use nalgebra::{Cholesky, DMatrix, DVector, SymmetricEigen};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rustfft::num_complex::Complex;
use rustfft::{Fft, FftPlanner};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::CategoricalGrid;
use crate::special::norm_cdf;
use crate::validity::indicator_variogram_from_correlogram;

/// Largest lattice (in cells) accepted by the dense sampler.
pub const DENSE_MAX_CELLS: usize = 64 * 64;
/// Largest lattice that [`SimMethod::Auto`] sends to the dense sampler.
pub const AUTO_DENSE_MAX_CELLS: usize = 32 * 32;
/// Negative circulant eigenvalues down to `-EMBEDDING_TOL * max` are clamped.
pub const EMBEDDING_TOL: f64 = 1e-8;
/// Padding factors tried for the circulant embedding.
const EMBEDDING_FACTORS: [usize; 3] = [2, 4, 8];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CorrelogramFamily {
    Exponential,
    Gaussian,
    Spherical,
}

impl CorrelogramFamily {
    pub const ALL: [CorrelogramFamily; 3] = [
        CorrelogramFamily::Exponential,
        CorrelogramFamily::Gaussian,
        CorrelogramFamily::Spherical,
    ];

    pub fn name(self) -> &'static str {
        match self {
            CorrelogramFamily::Exponential => "exponential",
            CorrelogramFamily::Gaussian => "gaussian",
            CorrelogramFamily::Spherical => "spherical",
        }
    }
}

impl fmt::Display for CorrelogramFamily {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for CorrelogramFamily {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        CorrelogramFamily::ALL
            .into_iter()
            .find(|f| f.name().eq_ignore_ascii_case(s))
            .ok_or_else(|| Error::InvalidArgument(format!("unknown correlogram `{s}`")))
    }
}

/// Unit-variance correlogram of the latent field.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CorrelogramSpec {
    pub family: CorrelogramFamily,
    pub range: f64,
}

impl CorrelogramSpec {
    pub fn new(family: CorrelogramFamily, range: f64) -> Result<Self> {
        if !(range.is_finite() && range > 0.0) {
            return Err(Error::InvalidArgument(format!("range must be > 0, got {range}")));
        }
        Ok(Self { family, range })
    }

    /// `ρ(h)`: `exp(-h/a)`, `exp(-(h/a)²)`, or the spherical polynomial.
    pub fn rho(&self, h: f64) -> f64 {
        let t = h.abs() / self.range;
        match self.family {
            CorrelogramFamily::Exponential => (-t).exp(),
            CorrelogramFamily::Gaussian => (-t * t).exp(),
            CorrelogramFamily::Spherical => {
                if t >= 1.0 {
                    0.0
                } else {
                    1.0 - 1.5 * t + 0.5 * t * t * t
                }
            }
        }
    }
}

/// Cut-offs `z_1 < … < z_{K-1}`; class `k` is the band `[z_{k-1}, z_k)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ThresholdSet {
    cutoffs: Vec<f64>,
}

impl ThresholdSet {
    pub fn new(cutoffs: Vec<f64>) -> Result<Self> {
        if cutoffs.is_empty() {
            return Err(Error::InvalidArgument("need at least one cut-off".into()));
        }
        if cutoffs.iter().any(|z| z.is_nan()) {
            return Err(Error::InvalidArgument("cut-offs must not be NaN".into()));
        }
        if cutoffs.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::InvalidArgument("cut-offs must be strictly increasing".into()));
        }
        Ok(Self { cutoffs })
    }

    /// Cut-offs whose Gaussian band probabilities equal `proportions`.
    pub fn from_proportions(proportions: &[f64]) -> Result<Self> {
        let cum = cumulative(proportions)?;
        Self::new(cum.into_iter().map(crate::special::norm_quantile).collect())
    }

    /// Cut-offs at the empirical quantiles of `field`, so that the truncated
    /// map realises `proportions` up to rounding.
    pub fn from_field_quantiles(field: &RealField, proportions: &[f64]) -> Result<Self> {
        let cum = cumulative(proportions)?;
        let mut sorted = field.values.clone();
        sorted.sort_by(f64::total_cmp);
        let n = sorted.len();
        let cutoffs = cum
            .into_iter()
            .map(|c| {
                let idx = ((c * n as f64).round() as usize).clamp(1, n - 1);
                0.5 * (sorted[idx - 1] + sorted[idx])
            })
            .collect();
        Self::new(cutoffs)
    }

    pub fn cutoffs(&self) -> &[f64] {
        &self.cutoffs
    }

    pub fn nclasses(&self) -> usize {
        self.cutoffs.len() + 1
    }

    /// Gaussian band probabilities implied by the cut-offs.
    pub fn proportions(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.nclasses());
        let mut prev = 0.0;
        for &z in &self.cutoffs {
            let c = norm_cdf(z);
            out.push(c - prev);
            prev = c;
        }
        out.push(1.0 - prev);
        out
    }

    /// Class label of a latent value: one plus the number of cut-offs at or
    /// below it.
    pub fn classify(&self, value: f64) -> u32 {
        1 + self.cutoffs.partition_point(|&z| z <= value) as u32
    }
}

fn cumulative(proportions: &[f64]) -> Result<Vec<f64>> {
    if proportions.len() < 2 {
        return Err(Error::InvalidArgument("need at least two proportions".into()));
    }
    if proportions.iter().any(|&p| !(p > 0.0 && p < 1.0)) {
        return Err(Error::InvalidArgument("proportions must lie in (0, 1)".into()));
    }
    let total: f64 = proportions.iter().sum();
    if (total - 1.0).abs() > 1e-9 {
        return Err(Error::InvalidArgument(format!("proportions sum to {total}, not 1")));
    }
    let mut acc = 0.0;
    Ok(proportions[..proportions.len() - 1]
        .iter()
        .map(|p| {
            acc += p;
            acc
        })
        .collect())
}

/// Real-valued lattice field, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct RealField {
    pub nrows: usize,
    pub ncols: usize,
    pub cellsize: f64,
    pub values: Vec<f64>,
}

impl RealField {
    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.values[row * self.ncols + col]
    }
}

/// Label each cell by its band.
pub fn truncate(field: &RealField, thresholds: &ThresholdSet) -> Result<CategoricalGrid> {
    let labels = field.values.iter().map(|&v| thresholds.classify(v)).collect();
    CategoricalGrid::new(
        field.nrows,
        field.ncols,
        field.cellsize,
        thresholds.nclasses(),
        labels,
    )
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SimMethod {
    /// Dense up to [`AUTO_DENSE_MAX_CELLS`], circulant above.
    #[default]
    Auto,
    Dense,
    Circulant,
}

impl FromStr for SimMethod {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "auto" => Ok(SimMethod::Auto),
            "dense" => Ok(SimMethod::Dense),
            "circulant" => Ok(SimMethod::Circulant),
            _ => Err(Error::InvalidArgument(format!("unknown simulation method `{s}`"))),
        }
    }
}

enum Sampler {
    Dense {
        factor: DMatrix<f64>,
    },
    Circulant {
        mrows: usize,
        mcols: usize,
        /// `sqrt(λ / M)` per torus cell.
        scale: Vec<f64>,
        row_fft: Arc<dyn Fft<f64>>,
        col_fft: Arc<dyn Fft<f64>>,
    },
}

/// A prepared sampler for one lattice and correlogram; draw with [`sample`].
///
/// [`sample`]: GrfSimulator::sample
pub struct GrfSimulator {
    nrows: usize,
    ncols: usize,
    cellsize: f64,
    spec: CorrelogramSpec,
    sampler: Sampler,
}

impl fmt::Debug for GrfSimulator {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("GrfSimulator")
            .field("nrows", &self.nrows)
            .field("ncols", &self.ncols)
            .field("cellsize", &self.cellsize)
            .field("spec", &self.spec)
            .field("method", &self.method())
            .finish()
    }
}

impl GrfSimulator {
    pub fn new(
        nrows: usize,
        ncols: usize,
        cellsize: f64,
        spec: CorrelogramSpec,
        method: SimMethod,
    ) -> Result<Self> {
        if nrows == 0 || ncols == 0 {
            return Err(Error::InvalidArgument("dimensions must be positive".into()));
        }
        if !(cellsize.is_finite() && cellsize > 0.0) {
            return Err(Error::InvalidArgument(format!("cellsize must be > 0, got {cellsize}")));
        }
        let cells = nrows * ncols;
        let method = match method {
            SimMethod::Auto if cells <= AUTO_DENSE_MAX_CELLS => SimMethod::Dense,
            SimMethod::Auto => SimMethod::Circulant,
            m => m,
        };
        let sampler = match method {
            SimMethod::Dense => {
                if cells > DENSE_MAX_CELLS {
                    return Err(Error::InvalidArgument(format!(
                        "dense sampler supports at most {DENSE_MAX_CELLS} cells, got {cells}"
                    )));
                }
                dense_factor(nrows, ncols, cellsize, &spec)
            }
            _ => circulant_sampler(nrows, ncols, cellsize, &spec)?,
        };
        Ok(Self {
            nrows,
            ncols,
            cellsize,
            spec,
            sampler,
        })
    }

    pub fn method(&self) -> SimMethod {
        match self.sampler {
            Sampler::Dense { .. } => SimMethod::Dense,
            Sampler::Circulant { .. } => SimMethod::Circulant,
        }
    }

    pub fn spec(&self) -> CorrelogramSpec {
        self.spec
    }

    /// Torus dimensions used by the circulant path.
    pub fn embedding(&self) -> Option<(usize, usize)> {
        match self.sampler {
            Sampler::Circulant { mrows, mcols, .. } => Some((mrows, mcols)),
            Sampler::Dense { .. } => None,
        }
    }

    pub fn sample(&self, seed: u64) -> RealField {
        let values = match &self.sampler {
            Sampler::Dense { factor } => {
                let mut noise = Vec::with_capacity(self.nrows * self.ncols);
                for r in 0..self.nrows {
                    let mut rng = row_rng(seed, r);
                    noise.extend((0..self.ncols).map(|_| -> f64 { StandardNormal.sample(&mut rng) }));
                }
                let v: DVector<f64> = factor * DVector::from_vec(noise);
                v.as_slice().to_vec()
            }
            Sampler::Circulant {
                mrows,
                mcols,
                scale,
                row_fft,
                col_fft,
            } => {
                let (mr, mc) = (*mrows, *mcols);
                let mut buf: Vec<Complex<f64>> = Vec::with_capacity(mr * mc);
                for r in 0..mr {
                    let mut rng = row_rng(seed, r);
                    for c in 0..mc {
                        let re: f64 = StandardNormal.sample(&mut rng);
                        let im: f64 = StandardNormal.sample(&mut rng);
                        buf.push(Complex::new(re, im) * scale[r * mc + c]);
                    }
                }
                fft2(&mut buf, mr, mc, row_fft.as_ref(), col_fft.as_ref());
                let mut out = Vec::with_capacity(self.nrows * self.ncols);
                for r in 0..self.nrows {
                    out.extend(buf[r * mc..r * mc + self.ncols].iter().map(|z| z.re));
                }
                out
            }
        };
        RealField {
            nrows: self.nrows,
            ncols: self.ncols,
            cellsize: self.cellsize,
            values,
        }
    }
}

fn row_rng(seed: u64, row: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(row as u64);
    rng
}

fn dense_factor(nrows: usize, ncols: usize, cellsize: f64, spec: &CorrelogramSpec) -> Sampler {
    let n = nrows * ncols;
    let cov = DMatrix::from_fn(n, n, |i, j| {
        let dr = (i / ncols) as f64 - (j / ncols) as f64;
        let dc = (i % ncols) as f64 - (j % ncols) as f64;
        spec.rho(cellsize * dr.hypot(dc))
    });
    let factor = match Cholesky::new(cov.clone()) {
        Some(ch) => ch.unpack(),
        None => {
            // numerically singular (smooth correlograms): V sqrt(max(λ, 0))
            let eig = SymmetricEigen::new(cov);
            let mut v = eig.eigenvectors;
            for (j, &l) in eig.eigenvalues.iter().enumerate() {
                let s = l.max(0.0).sqrt();
                v.column_mut(j).scale_mut(s);
            }
            v
        }
    };
    Sampler::Dense { factor }
}

fn fft2(
    buf: &mut [Complex<f64>],
    mrows: usize,
    mcols: usize,
    row_fft: &dyn Fft<f64>,
    col_fft: &dyn Fft<f64>,
) {
    row_fft.process(buf);
    let mut column = vec![Complex::new(0.0, 0.0); mrows];
    for c in 0..mcols {
        for r in 0..mrows {
            column[r] = buf[r * mcols + c];
        }
        col_fft.process(&mut column);
        for r in 0..mrows {
            buf[r * mcols + c] = column[r];
        }
    }
}

fn circulant_sampler(
    nrows: usize,
    ncols: usize,
    cellsize: f64,
    spec: &CorrelogramSpec,
) -> Result<Sampler> {
    let mut planner = FftPlanner::new();
    let mut worst = f64::NEG_INFINITY;
    for factor in EMBEDDING_FACTORS {
        let (mr, mc) = (factor * nrows, factor * ncols);
        let row_fft = planner.plan_fft_forward(mc);
        let col_fft = planner.plan_fft_forward(mr);
        let mut buf: Vec<Complex<f64>> = Vec::with_capacity(mr * mc);
        for r in 0..mr {
            let dr = r.min(mr - r) as f64;
            for c in 0..mc {
                let dc = c.min(mc - c) as f64;
                buf.push(Complex::new(spec.rho(cellsize * dr.hypot(dc)), 0.0));
            }
        }
        fft2(&mut buf, mr, mc, row_fft.as_ref(), col_fft.as_ref());
        let max = buf.iter().map(|z| z.re).fold(f64::NEG_INFINITY, f64::max);
        let min = buf.iter().map(|z| z.re).fold(f64::INFINITY, f64::min);
        if min >= -EMBEDDING_TOL * max {
            let m = (mr * mc) as f64;
            let scale = buf.iter().map(|z| (z.re.max(0.0) / m).sqrt()).collect();
            return Ok(Sampler::Circulant {
                mrows: mr,
                mcols: mc,
                scale,
                row_fft,
                col_fft,
            });
        }
        worst = min / max;
    }
    Err(Error::EmbeddingNotPsd {
        min_eigenvalue: worst,
    })
}

/// Simulate with the automatic method choice.
pub fn simulate_grf(
    nrows: usize,
    ncols: usize,
    cellsize: f64,
    spec: CorrelogramSpec,
    seed: u64,
) -> Result<RealField> {
    Ok(GrfSimulator::new(nrows, ncols, cellsize, spec, SimMethod::Auto)?.sample(seed))
}

/// `π_{k|k}(h)` of the excursion set `{Z ≥ z}`, with `π_k = 1 - Φ(z)`.
///
/// For the lowest band `{Z < z}` of a map use `-z` (the field is symmetric).
pub fn theoretical_auto_transiogram(spec: &CorrelogramSpec, z: f64, h: f64) -> Result<f64> {
    if !(h >= 0.0) {
        return Err(Error::InvalidArgument(format!("lag distance must be >= 0, got {h}")));
    }
    let pk = 1.0 - norm_cdf(z);
    if !(pk > 0.0) {
        return Err(Error::InvalidArgument(format!("threshold {z} leaves an empty excursion set")));
    }
    let gamma = indicator_variogram_from_correlogram(spec.rho(h).clamp(-1.0, 1.0), z)?;
    Ok(1.0 - gamma / pk)
}
