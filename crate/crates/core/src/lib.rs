//! Competition among model providers over heterogeneous data sources.
//!
//! Each source holds a ground-truth parameter, a precision matrix and a market
//! weight. Providers pick parameters; sources route their users according to a
//! choice model (proximity or logit), and providers earn the weight they win.

// `!(x > 0.0)` style checks are deliberate: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod assumptions;
pub mod choice;
pub mod cli;
pub mod equilibrium;
pub mod error;
pub mod experiments;
pub mod game;
pub mod loss;
pub mod probability;
pub mod profile;
pub mod proximity;
pub mod simplex;

pub use error::{GameError, Result};
pub use game::{DataSource, GameSpec};
pub use profile::{ChoiceModel, LossMatrix, MixtureWeights, StrategyProfile};
