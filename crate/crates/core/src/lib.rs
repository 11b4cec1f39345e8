//! Desk-scale simulator of federated preference modeling with binary
//! selectors.
//!
//! Clients train a two-logit selector on local comparisons, either as one
//! shared model ([`fed`]) or as several selectors over balanced client
//! clusters ([`biscuit`]). The trained selectors label policy-generated
//! completion pairs, and the policy is fine-tuned on those labels with DPO
//! ([`rlft`]). A synthetic world with latent labeler clusters and an oracle
//! reward ([`data`]) replaces human judges in [`eval`].

pub mod biscuit;
pub mod checkpoint;
pub mod data;
pub mod error;
pub mod eval;
pub mod fed;
pub mod models;
pub mod pipeline;
pub mod rlft;
pub mod rng;

pub use error::{Error, Result};
