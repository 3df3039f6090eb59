//! Prior-aware beam repetition for beam alignment at low SNR.
//!
//! A base station that knows, for the user's location, how likely each
//! codeword is to be the best one can probe only the likely codewords and
//! repeat each probe to average out noise. This crate provides the pieces:
//!
//! * [`channel`]: arrays, DFT codebooks, channels and noisy beam probes.
//! * [`prior`]: location-conditioned beam priors, counted or learned.
//! * [`misalign`]: closed-form misalignment bounds and their Monte Carlo check.
//! * [`alloc`]: choosing the candidate set and splitting the budget.
//! * [`feedback`]: two-coefficient compression of a repetition vector.
//! * [`sim`]: scenario-driven Monte Carlo sweeps.
//! * [`oracle`]: brute-force and simulation cross-checks of the closed forms.
//!
//! Beam indices are zero-based in the library API.

pub mod alloc;
pub mod channel;
pub mod error;
pub mod feedback;
pub mod misalign;
pub mod oracle;
pub mod prior;
pub mod reference;
pub mod rng;
pub mod sim;

pub use error::{Error, Result};
