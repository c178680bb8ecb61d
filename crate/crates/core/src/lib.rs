//! Transiograms (spatial transition probabilities) for categorical rasters.
//!
//! The crate covers the whole pipeline: exhaustive-scan estimation from a
//! [`grid::CategoricalGrid`], parametric auto-transiogram families and their
//! variogram links, validity audits against Gaussian excursion sets,
//! Nadaraya-Watson kernel fitting, shape metrics near the origin, and a
//! Gaussian random field simulator used as a verification oracle.

pub mod empirical;
pub mod error;
pub mod fitting;
pub mod grfsim;
pub mod grid;
pub mod models;
pub mod shape;
pub mod special;
pub mod validity;

pub use empirical::{CurveLag, EmpiricalTransiogram, TransiogramSample};
pub use error::{Error, Result};
pub use fitting::{KernelFamily, KernelSpec, NonparametricModel};
pub use grfsim::{CorrelogramFamily, CorrelogramSpec, GrfSimulator, RealField, ThresholdSet};
pub use grid::{CategoricalGrid, IndicatorField, LagVector};
pub use models::{Family, ParametricModel};
pub use validity::{ValidityReport, Verdict};
