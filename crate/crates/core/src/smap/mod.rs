//! Regularized S-Map: locally weighted elastic-net regressions that yield a
//! time-varying interaction Jacobian per cluster.

pub mod cv;
pub mod enet;
pub mod kernel;
pub mod sequence;
pub mod transform;

pub use cv::{loocv_grid_search, CvCell, CvReport, SmapGrid};
pub use enet::{ElasticNetFit, ElasticNetOptions, WeightedDesign};
pub use kernel::kernel_weights;
pub use sequence::{
    fit_local_regression, jacobian_sequence, read_jacobian_csv, write_jacobian_csv, JacobianSequence, JacobianStep,
    SmapHyperparameters,
};
pub use transform::{preprocess, CoordinateTransform, PreprocessOptions, StateTrajectory};
