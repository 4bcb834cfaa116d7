//! Shared-random-variable simulations of singlet correlations.
//!
//! The crate evaluates the Toner–Bacon and Svozil protocols together with
//! their nonlocal-box variants, estimates their correlations and CHSH scores
//! by Monte Carlo, and implements the sweep attack by which Bob recovers
//! Alice's measurement axis from the communicated bits (or from his own
//! outputs when the bit is hidden in a box).

pub mod attack;
pub mod cli;
pub mod estimators;
pub mod geometry;
pub mod protocols;
pub mod random;
pub mod textfmt;

pub use geometry::{PlaneAngle, SignBit, UnitVec3};
pub use protocols::{ChannelModel, Setting};
