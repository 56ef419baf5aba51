pub mod adaptive;
pub mod assembly;
pub mod eigensolver;
pub mod error;
pub mod estimator;
pub mod experiment;
pub mod mesh;
pub mod oracle;
pub mod postprocess;
pub mod quadrature;
pub mod selftest;
pub mod sparse;
pub mod spaces;
pub mod vtk;

pub use error::{Error, Result};

/// Version of this crate, recorded in output metadata.
pub const VERSION: &str = env!("CARGO_PKG_VERSION");
