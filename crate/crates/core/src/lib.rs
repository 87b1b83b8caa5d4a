//! Signal-space alignment for the symmetric MIMO multiway relay channel with
//! pairwise data exchange.

pub mod alignment;
pub mod channel;
pub mod dof;
pub mod error;
pub mod lemmas;
pub mod linalg;
pub mod pipeline;
pub mod relay;
pub mod rng;
pub mod wire;

pub use alignment::{AlignmentPlan, PatternOrder, Unit};
pub use channel::{ChannelSet, SystemConfig};
pub use dof::{DofResult, Rational};
pub use error::{Error, Result};
pub use linalg::{ComplexMatrix, ComplexVector, Tolerance};
