//! Piecewise-affine multi-model inferential sensors.
//!
//! The numerical core (`linalg`, `model`, `classify::kmeans`) is generic over
//! [`Scalar`]; the optimization solvers and the design routines work in `f64`.

pub mod classify;
pub mod design;
pub mod error;
pub mod io;
pub mod linalg;
pub mod lp;
pub mod milp;
pub mod model;
pub mod qp;
pub mod scalar;
pub mod study;

pub use error::{Error, Result};
pub use scalar::Scalar;

pub type DenseMatrix = linalg::DenseMatrix<f64>;
pub type Dataset = model::Dataset<f64>;
pub type Hyperplane = model::Hyperplane<f64>;
pub type SwitchingLogic = model::SwitchingLogic<f64>;
pub type AffineModel = model::AffineModel<f64>;
pub type Scaler = model::Scaler<f64>;
pub type SensorModel = model::SensorModel<f64>;

pub type DatasetF32 = model::Dataset<f32>;
pub type SensorModelF32 = model::SensorModel<f32>;

pub use model::LabelingMatrix;
