//! Necessary-condition audits for auto-transiogram models.
//!
//! Three checks are run against a [`ParametricModel`]:
//!
//! * **triangle**: `π(h+h') ≥ π(h) + π(h') - 1` at `h = h'` for a few small lags;
//! * **matheron**: `ΣΣ ε_i ε_j (1 - π(x_i, x_j)) ≤ 0` for point configurations
//!   and weights `ε_i ∈ {-1, 0, 1}` with `Σ ε_i = 1`;
//! * **excursion-psd**: the model is mapped to an indicator variogram, the
//!   latent Gaussian correlogram is recovered by inverting
//!   `γ(ρ) = (1/2π) ∫_ρ^1 exp(-z²/(1+u)) du / √(1-u²)`, and the implied
//!   correlation matrix must be positive semidefinite on every configuration.
//!
//! A failing check carries a concrete witness whose re-evaluation reproduces
//! the reported margin. Margins are signed so that negative means violation.

use std::collections::HashMap;
use std::f64::consts::{FRAC_PI_2, TAU};
use std::fmt;

use nalgebra::{DMatrix, SymmetricEigen};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::models::ParametricModel;
use crate::special::{integrate, norm_quantile};

/// Tolerance on inequality margins.
pub const MARGIN_TOL: f64 = 1e-9;
/// Per-point eigenvalue tolerance; the threshold is `-EIGEN_TOL * m`.
pub const EIGEN_TOL: f64 = 1e-8;
/// Lags (as fractions of the range) probed by the triangle check.
pub const TRIANGLE_FRACTIONS: [f64; 3] = [0.01, 0.05, 0.2];

const QUAD_TOL: f64 = 1e-13;
const INVERSION_TOL: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CheckKind {
    Triangle,
    Matheron,
    ExcursionPsd,
}

impl fmt::Display for CheckKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            CheckKind::Triangle => "triangle",
            CheckKind::Matheron => "matheron",
            CheckKind::ExcursionPsd => "excursion-psd",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Verdict {
    Pass,
    Fail,
}

/// Planar points with Matheron weights.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PointConfiguration {
    pub points: Vec<[f64; 2]>,
    pub epsilon: Vec<i8>,
}

impl PointConfiguration {
    pub fn new(points: Vec<[f64; 2]>, epsilon: Vec<i8>) -> Result<Self> {
        if points.len() < 2 {
            return Err(Error::InvalidArgument("a configuration needs m >= 2 points".into()));
        }
        if points.len() != epsilon.len() {
            return Err(Error::InvalidArgument("one weight per point is required".into()));
        }
        check_epsilon(&epsilon)?;
        Ok(Self { points, epsilon })
    }

    /// Collinear points `0, s, 2s, ...` along the first axis.
    pub fn collinear(spacing: f64, epsilon: Vec<i8>) -> Result<Self> {
        let points = collinear_points(epsilon.len(), spacing);
        Self::new(points, epsilon)
    }
}

fn check_epsilon(epsilon: &[i8]) -> Result<()> {
    if epsilon.iter().any(|e| !(-1..=1).contains(e)) {
        return Err(Error::InvalidArgument("weights must be -1, 0 or 1".into()));
    }
    let sum: i32 = epsilon.iter().map(|&e| e as i32).sum();
    if sum != 1 {
        return Err(Error::InvalidArgument(format!("weights must sum to 1, got {sum}")));
    }
    Ok(())
}

/// Concrete configuration that violates (or bounds) a check.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "kebab-case")]
pub enum Witness {
    Triangle { h: f64, h2: f64 },
    Matheron { configuration: PointConfiguration },
    Eigen { points: Vec<[f64; 2]> },
    /// The model's variogram exceeds what any correlation can produce.
    InversionInfeasible { points: Vec<[f64; 2]>, distance: f64, gamma: f64 },
}

impl Witness {
    /// Recompute the signed margin this witness certifies.
    pub fn evaluate(&self, model: &ParametricModel) -> Result<f64> {
        match self {
            Witness::Triangle { h, h2 } => Ok(check_triangle(model, *h, *h2)?.margin),
            Witness::Matheron { configuration } => {
                let values = pairwise_transiogram(model, &configuration.points);
                Ok(-matheron_form(&values, &configuration.epsilon)?)
            }
            Witness::Eigen { points } => {
                let z = threshold_for(model)?;
                match correlation_matrix(model, z, points) {
                    Ok(m) => Ok(min_eigenvalue(&m)),
                    Err(_) => Ok(f64::NEG_INFINITY),
                }
            }
            Witness::InversionInfeasible { .. } => Ok(f64::NEG_INFINITY),
        }
    }
}

/// Result of one check kind over its whole search.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Check {
    pub name: CheckKind,
    pub verdict: Verdict,
    /// Worst margin found; negative means violation.
    pub margin: f64,
    pub witness: Option<Witness>,
    /// Number of configurations (or lag pairs) examined.
    pub examined: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValidityReport {
    pub model: ParametricModel,
    pub checks: Vec<Check>,
}

impl ValidityReport {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.verdict == Verdict::Pass)
    }

    pub fn check(&self, kind: CheckKind) -> Option<&Check> {
        self.checks.iter().find(|c| c.name == kind)
    }

    /// Fixed-width table for terminals.
    pub fn table(&self) -> String {
        let mut out = format!(
            "model: {} range={} proportion={}\n{:<14} {:<7} {:>14} {:>9}  witness\n",
            self.model.family, self.model.range, self.model.proportion, "check", "verdict", "margin", "examined"
        );
        for c in &self.checks {
            let verdict = match c.verdict {
                Verdict::Pass => "PASS",
                Verdict::Fail => "FAIL",
            };
            let witness = match &c.witness {
                None => "-".to_string(),
                Some(Witness::Triangle { h, h2 }) => format!("h={h} h'={h2}"),
                Some(Witness::Matheron { configuration }) => format!(
                    "m={} eps={:?}",
                    configuration.points.len(),
                    configuration.epsilon
                ),
                Some(Witness::Eigen { points }) => format!("m={}", points.len()),
                Some(Witness::InversionInfeasible { distance, gamma, .. }) => {
                    format!("infeasible gamma={gamma} at d={distance}")
                }
            };
            out.push_str(&format!(
                "{:<14} {:<7} {:>14.6e} {:>9}  {}\n",
                c.name.to_string(),
                verdict,
                c.margin,
                c.examined,
                witness
            ));
        }
        out.push_str(&format!(
            "overall: {}\n",
            if self.passed() { "PASS" } else { "FAIL" }
        ));
        out
    }
}

/// Triangle inequality margin at a single pair of lags.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TriangleCheck {
    pub margin: f64,
    pub pass: bool,
}

/// `margin = π(h+h') - π(h) - π(h') + 1`, passing when `margin ≥ -tol`.
pub fn check_triangle(model: &ParametricModel, h: f64, h2: f64) -> Result<TriangleCheck> {
    let margin = model.eval(h + h2)? - model.eval(h)? - model.eval(h2)? + 1.0;
    Ok(TriangleCheck {
        margin,
        pass: margin >= -MARGIN_TOL,
    })
}

/// Triangle check at `h = h' = f·a` for each of [`TRIANGLE_FRACTIONS`].
pub fn triangle_search(model: &ParametricModel) -> Result<Check> {
    let mut worst: Option<(f64, f64)> = None;
    for f in TRIANGLE_FRACTIONS {
        let h = f * model.range;
        let c = check_triangle(model, h, h)?;
        if worst.is_none_or(|(m, _)| c.margin < m) {
            worst = Some((c.margin, h));
        }
    }
    let (margin, h) = worst.expect("at least one lag");
    Ok(Check {
        name: CheckKind::Triangle,
        verdict: if margin >= -MARGIN_TOL { Verdict::Pass } else { Verdict::Fail },
        margin,
        witness: Some(Witness::Triangle { h, h2: h }),
        examined: TRIANGLE_FRACTIONS.len(),
    })
}

/// `ΣΣ ε_i ε_j (1 - π(x_i, x_j))` for an m×m table of transiogram values.
pub fn matheron_form(values: &[Vec<f64>], epsilon: &[i8]) -> Result<f64> {
    check_epsilon(epsilon)?;
    if values.len() != epsilon.len() || values.iter().any(|r| r.len() != epsilon.len()) {
        return Err(Error::InvalidArgument("value table must be m x m".into()));
    }
    Ok(quadratic_form(values, epsilon))
}

fn quadratic_form(values: &[Vec<f64>], epsilon: &[i8]) -> f64 {
    let mut total = 0.0;
    for (i, row) in values.iter().enumerate() {
        let ei = epsilon[i];
        if ei == 0 {
            continue;
        }
        for (j, v) in row.iter().enumerate() {
            let ej = epsilon[j];
            if ej != 0 {
                total += f64::from(ei * ej) * (1.0 - v);
            }
        }
    }
    total
}

/// Model transiogram at every pairwise distance of `points`.
pub fn pairwise_transiogram(model: &ParametricModel, points: &[[f64; 2]]) -> Vec<Vec<f64>> {
    points
        .iter()
        .map(|p| points.iter().map(|q| model.eval_unchecked(dist(p, q))).collect())
        .collect()
}

fn dist(p: &[f64; 2], q: &[f64; 2]) -> f64 {
    (p[0] - q[0]).hypot(p[1] - q[1])
}

fn collinear_points(m: usize, spacing: f64) -> Vec<[f64; 2]> {
    (0..m).map(|i| [i as f64 * spacing, 0.0]).collect()
}

/// All weight vectors in `{-1,0,1}^m` summing to 1, in lexicographic order.
pub fn legal_epsilons(m: usize) -> Vec<Vec<i8>> {
    let mut out = Vec::new();
    let mut current = vec![-1i8; m];
    loop {
        if current.iter().map(|&e| e as i32).sum::<i32>() == 1 {
            out.push(current.clone());
        }
        // odometer increment over -1, 0, 1
        let mut i = m;
        loop {
            if i == 0 {
                return out;
            }
            i -= 1;
            if current[i] < 1 {
                current[i] += 1;
                break;
            }
            current[i] = -1;
        }
    }
}

fn random_epsilon<R: Rng>(m: usize, rng: &mut R) -> Vec<i8> {
    loop {
        let e: Vec<i8> = (0..m).map(|_| rng.random_range(-1i8..=1)).collect();
        if e.iter().map(|&x| x as i32).sum::<i32>() == 1 {
            return e;
        }
    }
}

/// Search-space parameters shared by the Matheron and excursion-PSD checks.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SearchParams {
    /// Largest random configuration; ε is enumerated exhaustively up to 8.
    pub max_points: usize,
    /// Largest collinear lattice.
    pub lattice_max_points: usize,
    /// Lattice spacings as fractions of the model range.
    pub spacings: Vec<f64>,
    pub random_configs: usize,
    /// ε samples drawn per configuration when m exceeds the exhaustive limit.
    pub random_epsilons: usize,
    pub seed: u64,
}

impl Default for SearchParams {
    fn default() -> Self {
        Self {
            max_points: 8,
            lattice_max_points: 10,
            spacings: (1..20).map(|j| j as f64 / 20.0).collect(),
            random_configs: 1000,
            random_epsilons: 2000,
            seed: 0,
        }
    }
}

/// Largest m for which every legal ε is enumerated.
pub const EXHAUSTIVE_MAX_POINTS: usize = 8;

impl SearchParams {
    /// Collinear and square lattices, then seeded random planar sets, in a
    /// fixed order.
    pub fn configurations(&self, range: f64) -> Vec<Vec<[f64; 2]>> {
        let mut configs = Vec::new();
        for m in 2..=self.lattice_max_points {
            for &s in &self.spacings {
                configs.push(collinear_points(m, s * range));
            }
        }
        for n in 2usize.. {
            if n * n > self.lattice_max_points {
                break;
            }
            for &s in &self.spacings {
                let step = s * range;
                configs.push(
                    (0..n * n)
                        .map(|i| [(i % n) as f64 * step, (i / n) as f64 * step])
                        .collect(),
                );
            }
        }
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        let max_m = self.max_points.max(2);
        for _ in 0..self.random_configs {
            let m = rng.random_range(2..=max_m);
            let extent = range * rng.random_range(0.2..3.0);
            configs.push(
                (0..m)
                    .map(|_| [rng.random_range(0.0..extent), rng.random_range(0.0..extent)])
                    .collect(),
            );
        }
        configs
    }
}

/// Worst-margin reduction with ties broken by lowest configuration index.
fn reduce_worst<T>(items: Vec<(usize, f64, T)>) -> Option<(usize, f64, T)> {
    items.into_iter().fold(None, |best, item| match best {
        None => Some(item),
        Some(b) => {
            if item.1 < b.1 || (item.1 == b.1 && item.0 < b.0) {
                Some(item)
            } else {
                Some(b)
            }
        }
    })
}

/// Matheron search over the configurations of `params`.
pub fn matheron_search(model: &ParametricModel, params: &SearchParams) -> Result<Check> {
    model.validate()?;
    let configs = params.configurations(model.range);
    let mut eps_cache: HashMap<usize, Vec<Vec<i8>>> = HashMap::new();
    for c in &configs {
        if c.len() <= EXHAUSTIVE_MAX_POINTS {
            eps_cache.entry(c.len()).or_insert_with(|| legal_epsilons(c.len()));
        }
    }
    let results: Vec<(usize, f64, Vec<i8>)> = configs
        .par_iter()
        .enumerate()
        .map(|(idx, points)| {
            let values = pairwise_transiogram(model, points);
            let m = points.len();
            let candidates: Vec<Vec<i8>> = match eps_cache.get(&m) {
                Some(all) => all.clone(),
                None => {
                    let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
                    rng.set_stream(idx as u64 + 1);
                    (0..params.random_epsilons)
                        .map(|_| random_epsilon(m, &mut rng))
                        .collect()
                }
            };
            let mut best = (f64::INFINITY, Vec::new());
            for e in candidates {
                let margin = -quadratic_form(&values, &e);
                if margin < best.0 {
                    best = (margin, e);
                }
            }
            (idx, best.0, best.1)
        })
        .collect();
    let examined = results.len();
    let (idx, margin, epsilon) =
        reduce_worst(results).ok_or_else(|| Error::InvalidArgument("empty search".into()))?;
    Ok(Check {
        name: CheckKind::Matheron,
        verdict: if margin >= -MARGIN_TOL { Verdict::Pass } else { Verdict::Fail },
        margin,
        witness: Some(Witness::Matheron {
            configuration: PointConfiguration {
                points: configs[idx].clone(),
                epsilon,
            },
        }),
        examined,
    })
}

/// Matheron search packaged as a report.
pub fn search_violation(model: &ParametricModel, params: &SearchParams) -> Result<ValidityReport> {
    Ok(ValidityReport {
        model: *model,
        checks: vec![matheron_search(model, params)?],
    })
}

fn integrand(theta: f64, z2: f64) -> f64 {
    if z2 == 0.0 {
        return 1.0;
    }
    let s = 1.0 + theta.sin();
    if s <= 0.0 {
        0.0
    } else {
        (-z2 / s).exp()
    }
}

/// `(1/2π) ∫_θ^{π/2} exp(-z²/(1 + sin t)) dt`, the integral after `u = sin t`.
fn gamma_of_theta(theta: f64, z2: f64) -> f64 {
    if theta >= FRAC_PI_2 {
        return 0.0;
    }
    integrate(|t| integrand(t, z2), theta, FRAC_PI_2, QUAD_TOL) / TAU
}

/// Indicator variogram of the excursion set `{Z ≥ z}` of a unit-variance
/// Gaussian field whose correlation at the lag is `rho`.
pub fn indicator_variogram_from_correlogram(rho: f64, z: f64) -> Result<f64> {
    if !(-1.0..=1.0).contains(&rho) {
        return Err(Error::InvalidArgument(format!("correlation {rho} outside [-1, 1]")));
    }
    if !z.is_finite() {
        return Err(Error::InvalidArgument("threshold must be finite".into()));
    }
    if rho == 1.0 {
        return Ok(0.0);
    }
    Ok(gamma_of_theta(rho.asin(), z * z))
}

/// Largest indicator variogram reachable, attained at `ρ = -1`.
pub fn max_indicator_variogram(z: f64) -> f64 {
    gamma_of_theta(-FRAC_PI_2, z * z)
}

/// Correlation `ρ` whose excursion indicator variogram equals `gamma`.
///
/// Safeguarded Newton iteration on `θ = asin ρ`, where the integrand is
/// smooth and `dγ/dθ = -g(θ)/2π`.
///
/// For `z ≠ 0` the map is nearly flat as `ρ → -1` (`g ~ exp(-2z²/δ²)` with
/// `δ = θ + π/2`), so `ρ` is only weakly determined there.
pub fn invert_indicator_variogram(gamma: f64, z: f64) -> Result<f64> {
    if !z.is_finite() {
        return Err(Error::InvalidArgument("threshold must be finite".into()));
    }
    let z2 = z * z;
    let gmax = gamma_of_theta(-FRAC_PI_2, z2);
    if !(gamma >= 0.0) || gamma > gmax * (1.0 + 1e-14) {
        return Err(Error::Infeasible(format!(
            "indicator variogram {gamma} outside attainable range [0, {gmax}]"
        )));
    }
    if gamma == 0.0 {
        return Ok(1.0);
    }
    if gamma >= gmax {
        return Ok(-1.0);
    }
    let (mut lo, mut hi) = (-FRAC_PI_2, FRAC_PI_2);
    // exact for z = 0
    let mut theta = (FRAC_PI_2 - TAU * gamma).clamp(lo, hi);
    for _ in 0..200 {
        let f = gamma_of_theta(theta, z2) - gamma;
        if f.abs() <= INVERSION_TOL {
            break;
        }
        // f is decreasing in theta
        if f > 0.0 {
            lo = theta;
        } else {
            hi = theta;
        }
        let slope = -integrand(theta, z2) / TAU;
        let newton = theta - f / slope;
        theta = if slope < 0.0 && newton > lo && newton < hi {
            newton
        } else {
            0.5 * (lo + hi)
        };
        if hi - lo < 1e-16 {
            break;
        }
    }
    Ok(theta.sin())
}

/// Threshold `z` with `1 - Φ(z) = π_k`.
pub fn threshold_for(model: &ParametricModel) -> Result<f64> {
    model.validate()?;
    Ok(norm_quantile(1.0 - model.proportion))
}

#[derive(Debug)]
struct Infeasible {
    distance: f64,
    gamma: f64,
}

fn correlation_matrix(
    model: &ParametricModel,
    z: f64,
    points: &[[f64; 2]],
) -> std::result::Result<DMatrix<f64>, Infeasible> {
    let m = points.len();
    let mut cache: HashMap<u64, f64> = HashMap::new();
    let mut mat = DMatrix::<f64>::identity(m, m);
    for i in 0..m {
        for j in (i + 1)..m {
            let d = dist(&points[i], &points[j]);
            let rho = match cache.get(&d.to_bits()) {
                Some(&r) => r,
                None => {
                    let gamma = model.proportion * (1.0 - model.eval_unchecked(d));
                    let r = invert_indicator_variogram(gamma, z)
                        .map_err(|_| Infeasible { distance: d, gamma })?;
                    cache.insert(d.to_bits(), r);
                    r
                }
            };
            mat[(i, j)] = rho;
            mat[(j, i)] = rho;
        }
    }
    Ok(mat)
}

fn min_eigenvalue(m: &DMatrix<f64>) -> f64 {
    SymmetricEigen::new(m.clone())
        .eigenvalues
        .iter()
        .copied()
        .fold(f64::INFINITY, f64::min)
}

/// Excursion-set eligibility over explicit configurations.
///
/// Fails when the correlogram implied by the model is not positive
/// semidefinite on some configuration (margin = smallest eigenvalue), or when
/// the model's variogram cannot be produced by any correlation (margin = -∞).
/// Single-point configurations pass trivially.
pub fn excursion_eligibility(
    model: &ParametricModel,
    configurations: &[Vec<[f64; 2]>],
) -> Result<Check> {
    let z = threshold_for(model)?;
    let results: Vec<(usize, f64, Witness)> = configurations
        .par_iter()
        .enumerate()
        .map(|(idx, points)| {
            if points.len() < 2 {
                return (idx, 1.0, Witness::Eigen { points: points.clone() });
            }
            match correlation_matrix(model, z, points) {
                Ok(mat) => (idx, min_eigenvalue(&mat), Witness::Eigen { points: points.clone() }),
                Err(Infeasible { distance, gamma }) => (
                    idx,
                    f64::NEG_INFINITY,
                    Witness::InversionInfeasible {
                        points: points.clone(),
                        distance,
                        gamma,
                    },
                ),
            }
        })
        .collect();
    let examined = results.len();
    let Some((idx, margin, witness)) = reduce_worst(results) else {
        return Ok(Check {
            name: CheckKind::ExcursionPsd,
            verdict: Verdict::Pass,
            margin: f64::INFINITY,
            witness: None,
            examined: 0,
        });
    };
    let m = configurations[idx].len().max(1) as f64;
    Ok(Check {
        name: CheckKind::ExcursionPsd,
        verdict: if margin >= -EIGEN_TOL * m { Verdict::Pass } else { Verdict::Fail },
        margin,
        witness: Some(witness),
        examined,
    })
}

/// Run every check and collect a report.
pub fn audit(model: &ParametricModel, params: &SearchParams) -> Result<ValidityReport> {
    model.validate()?;
    let configs = params.configurations(model.range);
    Ok(ValidityReport {
        model: *model,
        checks: vec![
            triangle_search(model)?,
            matheron_search(model, params)?,
            excursion_eligibility(model, &configs)?,
        ],
    })
}
