//! Smooth hazards over one or two time scales with P-splines.
//!
//! Data are binned on a Lexis grid: [`lexis`] turns follow-up records into
//! event counts and exposures, [`fit1d`] and [`fit2d`] fit penalized Poisson
//! models to them, and [`ph2d`] adds proportional covariate effects on top of
//! a two-dimensional baseline. [`simulate`] generates data from known hazard
//! surfaces and measures how well they are recovered.

// `!(x > 0.0)` is used on purpose so that NaN is rejected too.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod basis;
pub mod error;
pub mod fit1d;
pub mod fit2d;
pub mod glam;
pub mod iwls;
pub mod lexis;
pub mod linalg;
pub mod ph2d;
pub mod select;
pub mod simulate;

pub use basis::{build_basis, build_difference_matrix, BasisMatrix, KnotGrid};
pub use error::{Error, Result};
pub use fit1d::{fit_1d, predict_1d, select_rho_1d, Fit1DResult};
pub use fit2d::{fit_2d, predict_2d, select_rho_2d, Coordinates, Fit2DResult, Penalty2D};
pub use iwls::IwlsControl;
pub use lexis::{
    bin_1d, bin_2d, bin_individuals, BinAxis, BinGrid, BinnedData1D, BinnedData2D, BinnedData3D,
    IndividualRecord,
};
pub use ph2d::{fit_ph, predict_ph, select_rho_ph, PHFitResult};
pub use select::{NelderMeadOptions, RhoEvaluation, RhoStrategy};
pub use simulate::{
    run_study, simulate_dataset, HazardSpec, ObservationScheme, SimConfig, StudySettings,
};
