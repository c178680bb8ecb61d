//! Transition rates at the origin and perimeter-to-area ratios.
//!
//! The slope of an auto-transiogram at the origin, integrated over
//! directions, gives the mean perimeter-to-area ratio of the class:
//! `Ψ = -½ ∫₀^{2π} π'(0; φ) dφ`, which reduces to `Ψ = -π · π'(0)` for
//! isotropic fields. A 4-connected raster edge count provides an independent
//! (staircase-biased) oracle.

use std::f64::consts::{FRAC_2_PI, PI};

use serde::{Deserialize, Serialize};

use crate::empirical::EmpiricalTransiogram;
use crate::error::{Error, Result};
use crate::grid::CategoricalGrid;

/// Log-log slope of |rate| against lag below which boundaries are flagged
/// as fractal (the one-sided rate keeps growing as the lag shrinks).
pub const FRACTAL_EXPONENT: f64 = -0.25;

/// First derivative of an auto-transiogram at the origin, per map unit.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TransitionRate {
    pub class: usize,
    /// Direction angle in `[0, 2π)`; `None` for omnidirectional curves.
    pub direction: Option<f64>,
    pub rate: f64,
    /// Residual standard error of the anchored fit; NaN for a single lag.
    pub stderr: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PsiMethod {
    Isotropic,
    Directional,
    RasterOracle,
}

/// Perimeter-to-area ratio in inverse map units.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ShapeMetric {
    pub class: usize,
    pub psi: f64,
    pub method: PsiMethod,
}

impl ShapeMetric {
    /// Ψ rescaled so that the whole map has unit area.
    pub fn unit_area_psi(&self, map_area: f64) -> f64 {
        self.psi * map_area.sqrt()
    }
}

/// Least-squares slope through the fixed point `(0, 1)` using the first
/// `nlags` `(distance, value)` samples.
pub fn anchored_slope(samples: &[(f64, f64)], nlags: usize) -> Result<(f64, f64)> {
    if nlags == 0 {
        return Err(Error::InvalidArgument("nlags must be at least 1".into()));
    }
    if samples.len() < nlags {
        return Err(Error::NotEvaluable(format!(
            "need {nlags} lags, only {} available",
            samples.len()
        )));
    }
    let used = &samples[..nlags];
    let mut sxx = 0.0;
    let mut sxy = 0.0;
    for &(d, v) in used {
        if !(d > 0.0) {
            return Err(Error::InvalidArgument(format!("lag distance must be > 0, got {d}")));
        }
        sxx += d * d;
        sxy += d * (v - 1.0);
    }
    let slope = sxy / sxx;
    let stderr = if nlags > 1 {
        let rss: f64 = used
            .iter()
            .map(|&(d, v)| (v - 1.0 - slope * d).powi(2))
            .sum();
        (rss / (nlags - 1) as f64 / sxx).sqrt()
    } else {
        f64::NAN
    };
    Ok((slope, stderr))
}

/// Transition rate of `class` from the first `nlags` lags of a curve.
pub fn transition_rate(
    curve: &EmpiricalTransiogram,
    class: usize,
    nlags: usize,
) -> Result<TransitionRate> {
    if class == 0 || class > curve.nclasses() {
        return Err(Error::ClassOutOfRange {
            class,
            nclasses: curve.nclasses(),
        });
    }
    if nlags == 0 {
        return Err(Error::InvalidArgument("nlags must be at least 1".into()));
    }
    if curve.nlags() < nlags {
        return Err(Error::NotEvaluable(format!(
            "curve has {} lags, {nlags} requested",
            curve.nlags()
        )));
    }
    let mut samples = Vec::with_capacity(nlags);
    for (i, lag) in curve.lags().iter().take(nlags).enumerate() {
        let s = curve.sample(i, class, class);
        let v = s.value.ok_or_else(|| {
            Error::NotEvaluable(format!(
                "undefined sample for class {class} at distance {}",
                lag.distance()
            ))
        })?;
        samples.push((lag.distance(), v));
    }
    let (rate, stderr) = anchored_slope(&samples, nlags)?;
    Ok(TransitionRate {
        class,
        direction: curve.lags()[0].vector().map(|v| v.direction),
        rate,
        stderr,
    })
}

/// `Ψ = -π × rate` for isotropic fields.
pub fn psi_isotropic(rate: &TransitionRate) -> Result<ShapeMetric> {
    if !rate.rate.is_finite() {
        return Err(Error::InvalidArgument("transition rate must be finite".into()));
    }
    if rate.rate > 0.0 {
        return Err(Error::NonPhysical(format!(
            "positive transition rate {} (auto-transiogram increasing at the origin)",
            rate.rate
        )));
    }
    Ok(ShapeMetric {
        class: rate.class,
        psi: 0.0 - PI * rate.rate,
        method: PsiMethod::Isotropic,
    })
}

/// Trapezoidal `Ψ = -½ ∫₀^{2π} π'(0; φ) dφ` over the supplied directions.
///
/// Auto-transiograms are even in the lag, so each direction also stands for
/// `φ + π`; rates sharing an axis are averaged. At least two distinct axes are
/// required.
pub fn psi_directional(rates: &[TransitionRate]) -> Result<ShapeMetric> {
    let Some(first) = rates.first() else {
        return Err(Error::InvalidArgument("no transition rates supplied".into()));
    };
    let class = first.class;
    let mut axes: Vec<(f64, f64, usize)> = Vec::new();
    for r in rates {
        if r.class != class {
            return Err(Error::InvalidArgument("rates mix several classes".into()));
        }
        if !r.rate.is_finite() {
            return Err(Error::InvalidArgument("transition rate must be finite".into()));
        }
        if r.rate > 0.0 {
            return Err(Error::NonPhysical(format!(
                "positive transition rate {} in direction {:?}",
                r.rate, r.direction
            )));
        }
        let phi = r
            .direction
            .ok_or_else(|| Error::InvalidArgument("directional rates need a direction".into()))?;
        let axis = phi.rem_euclid(PI);
        let axis = if PI - axis < 1e-12 { 0.0 } else { axis };
        match axes.iter_mut().find(|(a, _, _)| (a - axis).abs() < 1e-12) {
            Some(entry) => {
                entry.1 += r.rate;
                entry.2 += 1;
            }
            None => axes.push((axis, r.rate, 1)),
        }
    }
    if axes.len() < 2 {
        return Err(Error::InvalidArgument(
            "need transition rates in at least two distinct directions".into(),
        ));
    }
    let mut axes: Vec<(f64, f64)> = axes.into_iter().map(|(a, s, n)| (a, s / n as f64)).collect();
    axes.sort_by(|a, b| a.0.total_cmp(&b.0));

    // periodic trapezoid over one half turn; the other half is identical
    let mut half_turn = 0.0;
    for i in 0..axes.len() {
        let (a0, r0) = axes[i];
        let (a1, r1) = if i + 1 < axes.len() {
            axes[i + 1]
        } else {
            (axes[0].0 + PI, axes[0].1)
        };
        half_turn += 0.5 * (r0 + r1) * (a1 - a0);
    }
    Ok(ShapeMetric {
        class,
        psi: 0.0 - half_turn,
        method: PsiMethod::Directional,
    })
}

/// Whether the one-sided rate settles as the lag shrinks.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum RateLimit {
    /// Rate at the smallest lag.
    Finite { rate: f64 },
    /// |rate| grows like `h^exponent` with `exponent < FRACTAL_EXPONENT`.
    Fractal { exponent: f64 },
}

/// Classify the behaviour of `(π(h) - 1)/h` over lags that shrink toward 0.
///
/// Fits `log|rate|` against `log h`; a clearly negative slope means the
/// derivative has no finite limit.
pub fn rate_limit(samples: &[(f64, f64)]) -> Result<RateLimit> {
    if samples.len() < 3 {
        return Err(Error::InvalidArgument("need at least three lags".into()));
    }
    let mut pts = Vec::with_capacity(samples.len());
    for &(h, v) in samples {
        if !(h > 0.0) {
            return Err(Error::InvalidArgument(format!("lag distance must be > 0, got {h}")));
        }
        pts.push((h, (v - 1.0) / h));
    }
    pts.sort_by(|a, b| a.0.total_cmp(&b.0));
    let smallest = pts[0].1;
    if pts.iter().any(|&(_, r)| r == 0.0) {
        return Ok(RateLimit::Finite { rate: smallest });
    }
    let n = pts.len() as f64;
    let xs: Vec<f64> = pts.iter().map(|p| p.0.ln()).collect();
    let ys: Vec<f64> = pts.iter().map(|p| p.1.abs().ln()).collect();
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    let exponent = sxy / sxx;
    if exponent < FRACTAL_EXPONENT {
        Ok(RateLimit::Fractal { exponent })
    } else {
        Ok(RateLimit::Finite { rate: smallest })
    }
}

/// Auto-transiogram of a disk of radius `radius`: the lens overlap between
/// the disk and its translate, divided by the disk area. Zero for `h ≥ 2R`.
pub fn circle_auto_transiogram(radius: f64, h: f64) -> Result<f64> {
    if !(radius > 0.0) {
        return Err(Error::InvalidArgument(format!("radius must be > 0, got {radius}")));
    }
    if !(h >= 0.0) {
        return Err(Error::InvalidArgument(format!("lag distance must be >= 0, got {h}")));
    }
    let t = h / (2.0 * radius);
    if t >= 1.0 {
        return Ok(0.0);
    }
    Ok(FRAC_2_PI * (t.acos() - t * (1.0 - t * t).sqrt()))
}

/// Raster edge-count perimeter and area of one class.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RasterShape {
    pub class: usize,
    pub perimeter: f64,
    pub area: f64,
    pub metric: ShapeMetric,
}

/// Count 4-neighbour edges between `class` and other classes. Edges on the
/// map boundary count only when `include_boundary` is set.
pub fn raster_perimeter_area(
    grid: &CategoricalGrid,
    class: usize,
    include_boundary: bool,
) -> Result<RasterShape> {
    grid.check_class(class)?;
    let (nr, nc) = (grid.nrows(), grid.ncols());
    let k = class as u32;
    let mut cells = 0u64;
    let mut edges = 0u64;
    for r in 0..nr {
        for c in 0..nc {
            if grid.get(r, c) != k {
                continue;
            }
            cells += 1;
            let neighbours = [
                (r > 0).then(|| grid.get(r - 1, c)),
                (r + 1 < nr).then(|| grid.get(r + 1, c)),
                (c > 0).then(|| grid.get(r, c - 1)),
                (c + 1 < nc).then(|| grid.get(r, c + 1)),
            ];
            for n in neighbours {
                match n {
                    Some(l) if l != k => edges += 1,
                    None if include_boundary => edges += 1,
                    _ => {}
                }
            }
        }
    }
    if cells == 0 {
        return Err(Error::AbsentClass(class));
    }
    let cs = grid.cellsize();
    let perimeter = edges as f64 * cs;
    let area = cells as f64 * cs * cs;
    Ok(RasterShape {
        class,
        perimeter,
        area,
        metric: ShapeMetric {
            class,
            psi: perimeter / area,
            method: PsiMethod::RasterOracle,
        },
    })
}

/// An `n × n` unit-area map with class 2 inside a centred disk (cell centres
/// within `radius`) and class 1 elsewhere.
pub fn rasterize_disk(n: usize, radius: f64) -> Result<CategoricalGrid> {
    if n == 0 {
        return Err(Error::InvalidArgument("grid size must be positive".into()));
    }
    let cs = 1.0 / n as f64;
    let labels = (0..n * n)
        .map(|i| {
            let y = ((i / n) as f64 + 0.5) * cs - 0.5;
            let x = ((i % n) as f64 + 0.5) * cs - 0.5;
            if x.hypot(y) <= radius {
                2
            } else {
                1
            }
        })
        .collect();
    CategoricalGrid::new(n, n, cs, 2, labels)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::empirical::directional_curve;
    use std::f64::consts::FRAC_PI_4;

    fn rate(r: f64, direction: Option<f64>) -> TransitionRate {
        TransitionRate {
            class: 1,
            direction,
            rate: r,
            stderr: f64::NAN,
        }
    }

    #[test]
    fn flat_curve_has_zero_rate() {
        let g = CategoricalGrid::new(4, 4, 1.0, 2, vec![1; 16]).unwrap();
        let c = directional_curve(&g, (0, 1), 3).unwrap();
        let r = transition_rate(&c, 1, 3).unwrap();
        assert_eq!(r.rate, 0.0);
        assert_eq!(r.direction, Some(0.0));
        let psi = psi_isotropic(&r).unwrap();
        assert_eq!(psi.psi, 0.0);
        assert!(psi.psi.is_sign_positive());
        assert!(transition_rate(&c, 2, 1).is_err());
    }

    #[test]
    fn exact_line_recovers_slope() {
        let c = 0.37;
        let samples: Vec<(f64, f64)> = (1..=5).map(|i| (i as f64 * 0.1, 1.0 - c * i as f64 * 0.1)).collect();
        for n in 1..=5 {
            let (slope, _) = anchored_slope(&samples, n).unwrap();
            assert!((slope + c).abs() < 1e-14);
        }
        assert!(anchored_slope(&samples, 6).is_err());
        assert!(anchored_slope(&samples, 0).is_err());
    }

    #[test]
    fn circle_values() {
        assert_eq!(circle_auto_transiogram(0.25, 0.0).unwrap(), 1.0);
        assert_eq!(circle_auto_transiogram(0.25, 0.5).unwrap(), 0.0);
        assert_eq!(circle_auto_transiogram(0.25, 0.9).unwrap(), 0.0);
        let v = circle_auto_transiogram(0.25, 0.125).unwrap();
        let expected = (2.0 / PI) * (0.25f64.acos() - 0.25 * (1.0 - 0.0625f64).sqrt());
        assert!((v - expected).abs() < 1e-15);
        assert!((v - 0.685_04).abs() < 1e-5);
        assert!(circle_auto_transiogram(0.0, 0.1).is_err());
        assert!(circle_auto_transiogram(1.0, -0.1).is_err());
    }

    #[test]
    fn circle_rate_converges_to_analytic_slope() {
        let target = -2.0 / (PI * 0.25);
        let mut prev_err = f64::INFINITY;
        let mut h = 0.02;
        while h >= 0.00125 {
            let v = circle_auto_transiogram(0.25, h).unwrap();
            let (slope, _) = anchored_slope(&[(h, v)], 1).unwrap();
            let err = (slope - target).abs();
            assert!(err < prev_err);
            prev_err = err;
            h /= 2.0;
        }
        assert!(prev_err / target.abs() < 1e-2);
    }

    #[test]
    fn psi_isotropic_examples() {
        let p = psi_isotropic(&rate(-8.0 / PI, None)).unwrap();
        assert!((p.psi - 8.0).abs() < 1e-12);
        assert!((psi_isotropic(&rate(-1.0 / PI, None)).unwrap().psi - 1.0).abs() < 1e-15);
        assert!(matches!(psi_isotropic(&rate(0.1, None)), Err(Error::NonPhysical(_))));
    }

    #[test]
    fn psi_directional_constant_matches_isotropic() {
        let r = -1.7;
        let dirs = [0.0, FRAC_PI_4, PI / 2.0, 3.0 * FRAC_PI_4];
        let rates: Vec<_> = dirs.iter().map(|&d| rate(r, Some(d))).collect();
        let dir = psi_directional(&rates).unwrap().psi;
        let iso = psi_isotropic(&rate(r, None)).unwrap().psi;
        assert!((dir - iso).abs() < 1e-12);
        // two axes suffice, and opposite directions collapse onto one axis
        let two = psi_directional(&[rate(r, Some(0.0)), rate(r, Some(PI / 2.0))]).unwrap();
        assert!((two.psi - iso).abs() < 1e-12);
        assert!(psi_directional(&[rate(r, Some(0.0)), rate(r, Some(PI))]).is_err());
    }

    #[test]
    fn psi_directional_rejects_positive_rates() {
        let rates = [rate(-1.0, Some(0.0)), rate(0.5, Some(PI / 2.0))];
        assert!(matches!(psi_directional(&rates), Err(Error::NonPhysical(_))));
        assert!(psi_directional(&[rate(-1.0, None), rate(-1.0, None)]).is_err());
        assert!(psi_directional(&[]).is_err());
    }

    #[test]
    fn raster_oracle_unit_squares() {
        let c = 0.5;
        let mut labels = vec![1u32; 25];
        labels[12] = 2;
        let g = CategoricalGrid::new(5, 5, c, 2, labels).unwrap();
        let s = raster_perimeter_area(&g, 2, false).unwrap();
        assert_eq!(s.perimeter, 4.0 * c);
        assert_eq!(s.area, c * c);

        let mut labels = vec![1u32; 36];
        for i in [14, 15, 20, 21] {
            labels[i] = 2;
        }
        let g2 = CategoricalGrid::new(6, 6, c, 2, labels).unwrap();
        let b = raster_perimeter_area(&g2, 2, false).unwrap();
        assert_eq!(b.perimeter, 8.0 * c);
        assert_eq!(b.area, 4.0 * c * c);
        assert!((b.metric.psi - 0.5 * s.metric.psi).abs() < 1e-12);
    }

    #[test]
    fn raster_oracle_boundary_flag_and_absent_class() {
        let g = CategoricalGrid::new(2, 2, 1.0, 3, vec![1, 2, 1, 1]).unwrap();
        let open = raster_perimeter_area(&g, 2, false).unwrap();
        let closed = raster_perimeter_area(&g, 2, true).unwrap();
        assert_eq!(open.perimeter, 2.0);
        assert_eq!(closed.perimeter, 4.0);
        assert!(matches!(raster_perimeter_area(&g, 3, false), Err(Error::AbsentClass(3))));
    }

    #[test]
    fn rasterized_disk_oracle_within_staircase_bias() {
        let g = rasterize_disk(512, 0.25).unwrap();
        let s = raster_perimeter_area(&g, 2, false).unwrap();
        assert!((s.metric.psi - 8.0).abs() / 8.0 < 0.30, "{}", s.metric.psi);
        assert!((s.metric.unit_area_psi(g.area()) - s.metric.psi).abs() < 1e-9);
    }

    #[test]
    fn rate_limit_classifies_smooth_and_rough_curves() {
        let hs = [0.001, 0.002, 0.004, 0.008];
        let smooth: Vec<_> = hs.iter().map(|&h| (h, circle_auto_transiogram(0.25, h).unwrap())).collect();
        match rate_limit(&smooth).unwrap() {
            RateLimit::Finite { rate } => assert!((rate + 8.0 / PI).abs() < 0.01),
            other => panic!("{other:?}"),
        }
        let rough: Vec<_> = hs.iter().map(|&h| (h, 1.0 - 0.3 * h.sqrt())).collect();
        match rate_limit(&rough).unwrap() {
            RateLimit::Fractal { exponent } => assert!((exponent + 0.5).abs() < 1e-9),
            other => panic!("{other:?}"),
        }
        assert!(rate_limit(&smooth[..2]).is_err());
    }
}
