//! Bit-serial sparse attention with guarded early pruning.
//!
//! The library decomposes INT8 key vectors into 1-bit planes (MSB first) and
//! speculates attention scores plane by plane. A per-query uncertainty table
//! bounds the contribution of unseen planes, so keys whose score upper bound
//! falls below a running threshold can be pruned after only a few planes —
//! cutting computation and memory traffic without a separate sparsity
//! predictor. On top of the functional kernels sit a tiled online-softmax
//! engine, a reuse-aware value-fetch scheduler, and a deterministic
//! cycle-level model of a lane-parallel accelerator executing the same
//! dataflow.
//!
//! Start with [`bitplane`] for the arithmetic, [`filter`] for the pruning
//! pipeline, and [`sim`] for the cycle model. The book under `book/` walks
//! through each concept with runnable examples.

pub mod bitplane;
pub mod bitsparsity;
pub mod error;
pub mod filter;
pub mod reference;
pub mod schedule;
pub mod sim;
pub mod tiling;
pub mod workload;

pub use error::{Error, Result};
