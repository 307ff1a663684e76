//! Bounded-support state estimation with orthotopic filters, and source to
//! target knowledge transfer between such filters.
//!
//! The filter keeps axis-aligned boxes as the supports of its predictive and
//! filtering distributions. A target filter can condition its predictor on
//! predictors shared by source filters ([`transfer`]), and a centralised
//! baseline processes every channel itself ([`bcm`]).

pub mod bcm;
pub mod filter;
pub mod geometry;
mod lp;
pub mod metrics;
pub mod synthesis;
pub mod transfer;

pub use filter::{ChannelModel, EmptyPolicy, FilterError, FilterRun, LsuModel, StateModel};
pub use geometry::{GeometryError, Orthotope, StripSet};
pub use transfer::{run_btl, transfer_step, BtlRun, SourcePredictor, TransferOutcome};
