//! Broad learning systems with closed-form incremental updates, and the
//! correntropy-based variant for training data with outliers.

pub mod bls;
pub mod broadnet;
pub mod cbls;
pub mod correntropy;
pub mod datasets;
pub mod error;
pub mod harness;
pub mod linalg;
pub mod persist;

pub use bls::{train_bls, BlsModel};
pub use broadnet::{Activation, Architecture, RandomBasis};
pub use cbls::{train_cbls, CblsModel, TrainConfig};
pub use datasets::{Dataset, Task};
pub use error::{Error, Result};
