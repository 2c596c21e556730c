//! Speaker-conditioned acoustic-to-articulatory inversion at desk scale.
//!
//! The crate covers the full experimental pipeline on a deterministic
//! synthetic corpus: signal preprocessing and MFCC extraction ([`dsp`]),
//! speaker embeddings ([`embed`]), BLSTM inversion models under five training
//! schemes ([`aai`]), a statistical evaluation harness ([`eval`]), and an
//! orchestrating pipeline ([`pipeline`]) behind the `artinv` CLI.

pub mod aai;
pub mod corpus;
pub mod dsp;
pub mod error;
pub mod eval;
pub mod io;
pub mod embed;
pub mod nncore;
pub mod pipeline;

pub use error::{Error, Result};
