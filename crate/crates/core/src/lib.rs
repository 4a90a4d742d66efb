pub mod adaptive;
pub mod clairvoyant;
pub mod dist;
pub mod dp;
pub mod error;
pub mod fixtures;
pub mod hillkertz;
pub mod maxvariant;
pub mod mc;
pub mod nonadaptive;
pub mod noniid;
pub mod quad;
pub mod report;
pub mod verify;

pub use dist::{Instance, QuantileDistribution};
pub use error::{Error, Result};
pub use mc::{Estimate, McConfig};
pub use report::RatioReport;
