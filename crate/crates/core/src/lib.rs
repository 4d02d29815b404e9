//! Parallel decoding engine for masked-diffusion language models.
//!
//! Three decoding strategies share one loop: a one-token-per-step baseline,
//! confidence-based parallel decoding (CBPD), and LEAP, which decodes
//! medium-confidence tokens whose greedy prediction survives a lookahead
//! perturbation built from the previous step's candidates.
//!
//! Two denoisers are provided. [`backend::TinyDenoiser`] wraps a small
//! bidirectional transformer that accepts arbitrary visibility masks and
//! duplicated position ids, which is what the superposed lookahead pass
//! needs. [`exact::MarkovDenoiser`] answers masked-position posteriors of a
//! first-order Markov chain in closed form and doubles as a ground-truth
//! oracle.

pub mod analysis;
pub mod backend;
pub mod config;
pub mod decoding;
pub mod distribution;
pub mod error;
pub mod exact;
pub mod harness;
pub mod par;
pub mod rng;
pub mod sequence;
pub mod superposition;
pub mod trace;

pub use config::{DecodeConfig, Strategy, VisibilityMode};
pub use decoding::{run_decode, Denoiser};
pub use distribution::Distribution;
pub use error::{LeapError, Result};
pub use sequence::{SequenceState, TokenId, Vocab};
pub use trace::DecodeTrace;
