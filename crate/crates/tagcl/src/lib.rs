//! Contrastive pretraining and few/zero-shot node classification for
//! text-attributed graphs.
//!
//! The crate couples a GCN graph encoder with a transformer text encoder in
//! a shared embedding space, augments the contrastive objective with
//! positive retrieval from a FIFO text bank and with a separately trained
//! negative text encoder, and classifies nodes from class descriptions via
//! prompting (discrete, continuous, and negative).
//!
//! See the `examples/` directory for runnable end-to-end flows and the CLI
//! (`tagcl`) for file-based workflows.

pub mod bank;
pub mod checkpoint;
pub mod cli;
pub mod encoders;
pub mod episode;
pub mod error;
pub mod eval;
pub mod graph;
pub mod losses;
pub mod metrics;
pub mod optim;
pub mod prompting;
pub mod synthetic;
pub mod tape;
pub mod tokenizer;
pub mod train;

pub use error::{Result, TagclError};
