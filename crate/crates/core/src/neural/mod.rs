//! Learnable blocks with hand-written forward and backward passes.
//!
//! * [`sigma`]: scores how alike two distribution rows are,
//!   `sigmoid(W2 relu(W1 |d_i - d_j| + b1) + b2)`.
//! * [`phi`]: per-modality gated residual update of a clue feature followed
//!   by L2 renormalization.
//! * [`adam`]: the optimizer.

pub mod adam;
pub mod model;
pub mod phi;
pub mod sigma;

pub use adam::{AdamConfig, AdamState};
pub use model::{CycleParams, Model, ModelShape};
pub use phi::{phi_backward, phi_forward, PhiCache, PhiParams};
pub use sigma::{sigma_backward, sigma_forward, SigmaCache, SigmaParams};
