//! Adaptive (APA) and robust adaptive (APA-R) power allocation for
//! rate-splitting multiuser MIMO downlinks with imperfect CSIT.
//!
//! The crate covers the transmit model and channel generation ([`model`]),
//! linear precoders ([`precoders`]), the closed-form MSE objectives
//! ([`objective`]), the gradient allocators and baselines ([`alloc`]),
//! sum-rate evaluation ([`rates`]), FLOP accounting ([`complexity`]) and the
//! experiment sweeps ([`harness`]).

pub mod alloc;
pub mod complexity;
pub mod error;
pub mod harness;
pub mod model;
pub mod objective;
pub mod precoders;
pub mod rates;

pub use alloc::{run_apa, run_apar, AllocOptions, AllocatorRun, StepBounds, StepRule};
pub use error::{Error, Result};
pub use model::{CMatrix, CVector, ChannelRealization, SystemConfig};
pub use objective::{CouplingSource, CouplingTable, PowerVector};
pub use precoders::{PrecoderKind, PrecoderSet};
pub use rates::{RateModel, RateOptions, RateReport, Scheme};
