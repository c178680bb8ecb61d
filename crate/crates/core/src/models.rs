//! Parametric auto-transiogram families and the linear links between
//! transiograms, indicator covariograms and indicator variograms.

use std::f64::consts::FRAC_2_PI;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Family {
    Exponential,
    Gaussian,
    Spherical,
    Circular,
    Triangular,
}

impl Family {
    pub const ALL: [Family; 5] = [
        Family::Exponential,
        Family::Gaussian,
        Family::Spherical,
        Family::Circular,
        Family::Triangular,
    ];

    /// Normalised variogram shape `g(h/a)` in `[0, 1]`, so that the auto
    /// transiogram is `1 - (1 - π_k) g`.
    pub fn shape(self, t: f64) -> f64 {
        match self {
            Family::Exponential => -(-t).exp_m1(),
            Family::Gaussian => -(-t * t).exp_m1(),
            Family::Triangular => t.min(1.0),
            Family::Spherical => {
                if t >= 1.0 {
                    1.0
                } else {
                    1.5 * t - 0.5 * t * t * t
                }
            }
            Family::Circular => {
                if t >= 1.0 {
                    1.0
                } else {
                    1.0 - FRAC_2_PI * (t.acos() - t * (1.0 - t * t).sqrt())
                }
            }
        }
    }

    /// True when the family reaches its sill exactly at `h = a`.
    pub fn is_bounded(self) -> bool {
        !matches!(self, Family::Exponential | Family::Gaussian)
    }

    pub fn name(self) -> &'static str {
        match self {
            Family::Exponential => "exponential",
            Family::Gaussian => "gaussian",
            Family::Spherical => "spherical",
            Family::Circular => "circular",
            Family::Triangular => "triangular",
        }
    }
}

impl fmt::Display for Family {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Family {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Family::ALL
            .into_iter()
            .find(|f| f.name().eq_ignore_ascii_case(s))
            .ok_or_else(|| Error::InvalidArgument(format!("unknown model family `{s}`")))
    }
}

fn default_class() -> usize {
    1
}

/// An auto-transiogram model `π_{k|k}(h)` with range `a` and sill `π_k`.
///
/// Serialises as `{"family": ..., "range": ..., "proportion": ..., "tail": ..., "head": ...}`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ParametricModel {
    pub family: Family,
    pub range: f64,
    pub proportion: f64,
    #[serde(default = "default_class")]
    pub tail: usize,
    #[serde(default = "default_class")]
    pub head: usize,
}

impl ParametricModel {
    pub fn new(family: Family, range: f64, proportion: f64) -> Result<Self> {
        let m = Self {
            family,
            range,
            proportion,
            tail: 1,
            head: 1,
        };
        m.validate()?;
        Ok(m)
    }

    pub fn with_class(mut self, class: usize) -> Self {
        self.tail = class;
        self.head = class;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.range.is_finite() && self.range > 0.0) {
            return Err(Error::InvalidArgument(format!(
                "range must be > 0, got {}",
                self.range
            )));
        }
        if !(self.proportion > 0.0 && self.proportion < 1.0) {
            return Err(Error::InvalidArgument(format!(
                "proportion must lie in (0, 1), got {}",
                self.proportion
            )));
        }
        if self.tail == 0 || self.head == 0 {
            return Err(Error::InvalidArgument("class labels are 1-based".into()));
        }
        if self.tail != self.head {
            return Err(Error::InvalidArgument(
                "parametric models describe auto-transiograms only (tail must equal head)".into(),
            ));
        }
        Ok(())
    }

    /// `π_{k|k}(h)`.
    pub fn eval(&self, h: f64) -> Result<f64> {
        if !(h >= 0.0) {
            return Err(Error::InvalidArgument(format!("lag distance must be >= 0, got {h}")));
        }
        Ok(self.eval_unchecked(h))
    }

    pub(crate) fn eval_unchecked(&self, h: f64) -> f64 {
        1.0 - (1.0 - self.proportion) * self.family.shape(h / self.range)
    }

    /// Indicator auto-variogram `γ_kk(h) = π_k (1 - π_{k|k}(h))`.
    pub fn variogram(&self, h: f64) -> Result<f64> {
        Ok(self.proportion * (1.0 - self.eval(h)?))
    }
}

/// `σ_kk'(h) = π_k (π_{k'|k}(h) - π_k')`.
pub fn transiogram_to_covariogram(p_cond: f64, p_tail: f64, p_head: f64) -> f64 {
    p_tail * (p_cond - p_head)
}

/// `γ_kk'(h) = π_k {π_{k'|k}(0) - [π_{k'|k}(h) + π_{k'|k}(-h)] / 2}`.
///
/// Cross values (where `π_{k'|k}(0) = 0`) are non-positive and returned as is.
pub fn transiogram_to_crossvariogram(p_h: f64, p_minus_h: f64, p_zero: f64, p_tail: f64) -> f64 {
    p_tail * (p_zero - 0.5 * (p_h + p_minus_h))
}

/// `π_{k|k}(h) = 1 - γ_kk(h) / π_k`.
pub fn variogram_to_auto_transiogram(gamma: f64, p_tail: f64) -> Result<f64> {
    if !(p_tail > 0.0 && p_tail <= 1.0) {
        return Err(Error::InvalidArgument(format!(
            "proportion must lie in (0, 1], got {p_tail}"
        )));
    }
    if !(gamma >= 0.0) || gamma > p_tail {
        return Err(Error::NonPhysical(format!(
            "variogram value {gamma} outside [0, {p_tail}] would give an invalid probability"
        )));
    }
    Ok(1.0 - gamma / p_tail)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn model(f: Family) -> ParametricModel {
        ParametricModel::new(f, 1.0, 0.5).unwrap()
    }

    #[test]
    fn origin_is_one_for_every_family() {
        for f in Family::ALL {
            assert_eq!(model(f).eval(0.0).unwrap(), 1.0, "{f}");
        }
    }

    #[test]
    fn bounded_families_reach_sill_at_range() {
        for f in [Family::Spherical, Family::Circular, Family::Triangular] {
            let m = ParametricModel::new(f, 2.0, 0.3).unwrap();
            for h in [2.0, 2.5, 100.0] {
                assert!((m.eval(h).unwrap() - 0.3).abs() < 1e-15, "{f} {h}");
            }
        }
    }

    #[test]
    fn exponential_value() {
        let v = model(Family::Exponential).eval(0.2).unwrap();
        let expected = 1.0 - 0.5 * (1.0 - (-0.2f64).exp());
        assert!((v - expected).abs() < 1e-15);
        assert!((v - 0.909_365_376_5).abs() < 1e-9);
    }

    #[test]
    fn circular_value() {
        let v = model(Family::Circular).eval(0.5).unwrap();
        let inner = (0.5f64).acos() - 0.75f64.sqrt() * 0.5;
        let expected = 1.0 - 0.5 * (1.0 - (2.0 / std::f64::consts::PI) * inner);
        assert!((v - expected).abs() < 1e-15);
        assert!((v - 0.695_501_109_2).abs() < 1e-9);
    }

    #[test]
    fn gaussian_and_triangular_values() {
        let g = model(Family::Gaussian);
        assert!((g.eval(0.2).unwrap() - 0.980_394_719_6).abs() < 1e-9);
        assert!((g.eval(0.4).unwrap() - 0.926_071_894_5).abs() < 1e-9);
        let t = model(Family::Triangular);
        assert_eq!(t.eval(0.5).unwrap(), 0.75);
        let s = model(Family::Spherical);
        assert!((s.eval(0.5).unwrap() - (1.0 - 0.5 * (0.75 - 0.0625))).abs() < 1e-15);
    }

    #[test]
    fn rejects_negative_lag_and_bad_parameters() {
        assert!(model(Family::Exponential).eval(-1e-9).is_err());
        assert!(ParametricModel::new(Family::Spherical, 0.0, 0.5).is_err());
        assert!(ParametricModel::new(Family::Spherical, 1.0, 1.0).is_err());
        assert!(ParametricModel::new(Family::Spherical, 1.0, 0.0).is_err());
        let mut m = model(Family::Gaussian);
        m.head = 2;
        assert!(m.validate().is_err());
    }

    #[test]
    fn family_names_round_trip() {
        for f in Family::ALL {
            assert_eq!(f.name().parse::<Family>().unwrap(), f);
        }
        assert!("cubic".parse::<Family>().is_err());
    }

    #[test]
    fn covariogram_examples() {
        let pk = 0.3;
        assert!((transiogram_to_covariogram(1.0, pk, pk) - pk * (1.0 - pk)).abs() < 1e-15);
        assert_eq!(transiogram_to_covariogram(0.3, 0.5, 0.3), 0.0);
        assert!((transiogram_to_covariogram(0.4, 0.5, 0.3) - 0.05).abs() < 1e-15);
    }

    #[test]
    fn crossvariogram_examples() {
        assert!((transiogram_to_crossvariogram(0.7, 0.7, 1.0, 0.4) - 0.12).abs() < 1e-15);
        let g = transiogram_to_crossvariogram(0.2, 0.4, 0.0, 0.5);
        assert!((g + 0.15).abs() < 1e-15);
        assert!(g <= 0.0);
    }

    #[test]
    fn auto_transiogram_from_variogram() {
        assert_eq!(variogram_to_auto_transiogram(0.0, 0.4).unwrap(), 1.0);
        let pk = 0.4;
        let sill = variogram_to_auto_transiogram(pk * (1.0 - pk), pk).unwrap();
        assert!((sill - pk).abs() < 1e-15);
        assert_eq!(variogram_to_auto_transiogram(0.25, 0.5).unwrap(), 0.5);
        assert!(matches!(
            variogram_to_auto_transiogram(0.6, 0.5),
            Err(Error::NonPhysical(_))
        ));
    }

    #[test]
    fn config_json_shape() {
        let m: ParametricModel =
            serde_json::from_str(r#"{"family":"spherical","range":2.0,"proportion":0.4}"#).unwrap();
        assert_eq!(m.family, Family::Spherical);
        assert_eq!((m.tail, m.head), (1, 1));
        let text = serde_json::to_string(&m).unwrap();
        assert!(text.contains(r#""family":"spherical""#));
    }

    fn family() -> impl Strategy<Value = Family> {
        prop::sample::select(Family::ALL.to_vec())
    }

    proptest! {
        #[test]
        fn variogram_round_trip(f in family(), a in 0.1f64..10.0, p in 0.01f64..0.99, h in 0.0f64..20.0) {
            let m = ParametricModel::new(f, a, p).unwrap();
            let pkk = m.eval(h).unwrap();
            let gamma = transiogram_to_crossvariogram(pkk, pkk, 1.0, p);
            let back = variogram_to_auto_transiogram(gamma, p).unwrap();
            prop_assert!((back - pkk).abs() < 1e-12);
        }

        #[test]
        fn monotone_and_bounded(f in family(), a in 0.1f64..10.0, p in 0.01f64..0.99, h in 0.0f64..20.0, dh in 0.0f64..1.0) {
            let m = ParametricModel::new(f, a, p).unwrap();
            let v0 = m.eval(h).unwrap();
            let v1 = m.eval(h + dh).unwrap();
            prop_assert!(v1 <= v0 + 1e-15);
            prop_assert!(v0 >= p - 1e-15 && v0 <= 1.0);
        }

        #[test]
        fn continuous_at_range(f in family(), a in 0.1f64..10.0, p in 0.01f64..0.99) {
            let m = ParametricModel::new(f, a, p).unwrap();
            let left = m.eval(a * (1.0 - 1e-9)).unwrap();
            let right = m.eval(a * (1.0 + 1e-9)).unwrap();
            prop_assert!((left - right).abs() < 1e-3);
        }
    }
}
