pub mod autocorr;
pub mod basis;
pub mod bessel;
pub mod binning;
pub mod config;
pub mod error;
pub mod forward;
pub mod grid;
pub mod invariant;
pub mod io;
pub mod metrics;
pub mod optim;
pub mod phantom;
pub mod recover;
pub mod rng;
pub mod simulate;

pub use basis::{BasisIndex, CoefficientVector, Selection, SteerableBasis};
pub use binning::{AngleConvention, BinningParams, BinningScheme};
pub use config::ExperimentConfig;
pub use error::{Error, Result};
pub use forward::PrecomputedWeights;
pub use grid::{Grid, Image};
pub use invariant::{InvariantTensor, Scale, Space};
pub use recover::{RecoveryConfig, RecoveryReport};
pub use simulate::{Micrograph, Placement};
