//! Compound arbitrarily varying channels (CAVCs).
//!
//! A CAVC has one kernel W(y|x,s) and two state families S₁, S₂. A block-constant
//! compound state selects the family and an adversary picks the per-symbol
//! state inside it. This crate decides symmetrizability, computes the
//! communication, and-, and or-task capacities, and simulates codes, decoders
//! and attacks at small blocklengths.

pub mod adversary;
pub mod capacity;
pub mod catalog;
pub mod channel;
pub mod codec;
pub mod error;
pub mod ext;
pub mod info;
pub mod lp;
pub mod model_file;
pub mod rng;
pub mod simulation;
pub mod symmetry;

pub use channel::{Alphabet, CavcModel, ChannelKernel, Dmc, Family, SimplexVector};
pub use error::{CavcError, Result};
pub use ext::ExtReal;
