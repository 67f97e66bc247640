//! Contrastive disentanglement for domain generalization, desk scale.
//!
//! A sample from a multi-domain image corpus carries two kinds of information:
//! what it depicts (class) and how it is rendered (domain). This crate trains
//! two encoders side by side, a class branch and a domain branch, with a
//! cross-entropy term per branch plus a supervised contrastive term that
//! treats the two feature types as mutual negatives in a shared latent space.
//! Pulling same-label embeddings together while repelling the opposite feature
//! type pushes domain information out of the class features, which is the
//! property that transfers to an unseen target domain.
//!
//! What lives where:
//! - [`core`]: label-space algebra and batch/embedding containers.
//! - [`losses`]: the contrastive objectives (combined and independent label
//!   spaces), the two-branch cross-entropy, analytic gradients, and an
//!   independent brute-force oracle.
//! - [`networks`]: dual encoders (small CNN or MLP) and linear classifiers
//!   with manual forward/backward passes.
//! - [`data`]: synthetic shape/style dataset generation, directory corpus
//!   ingestion, leave-one-domain-out splits, and two-view augmented batching.
//! - [`training`]: the joint optimization loop, checkpointing, and
//!   training-domain vs test-domain model selection.
//! - [`evaluation`]: the leave-one-domain-out benchmark, the ablation table,
//!   linear probes on frozen encoders, and embedding export.
//! - [`verify`]: fast self-checks (oracle equivalence, gradient checks,
//!   structural invariants) behind `cddg verify`.
//!
//! Every run is deterministic given its seed: all randomness derives from
//! explicit seeds and the math is single-threaded within a run.
//!
//! Start with the crate examples (`cargo run --release -p cddg --example ...`),
//! one per capability, or the `cddg` binary, which exposes the same
//! operations as subcommands.

pub mod cli;
pub mod config;
pub mod core;
pub mod data;
mod error;
pub mod evaluation;
pub mod losses;
pub mod networks;
pub mod seeding;
pub mod training;
pub mod verify;

pub use error::{Error, Result};
