//! Simulation and option pricing for multi-factor Markovian stochastic
//! volatility models with kernel-based variance memory.

pub mod cli;
pub mod error;
pub mod kernel;
pub mod model;
pub mod pathscheme;
pub mod pricing;
pub mod randstream;
pub mod reference;
pub mod smallmat;
pub mod volscheme;

pub use error::{Error, Result};
pub use kernel::KernelApprox;
pub use model::ModelParams;
pub use pricing::{EnginePlan, EstimateWithCI, SamplingPlan, SchemeKind};
pub use randstream::{StreamKind, StreamSpec};
pub use reference::OptionSide;
