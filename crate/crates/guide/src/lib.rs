//! Doc-tested book chapters.
//!
//! mdbook renders `book/` for reading, but it cannot compile the snippets
//! against this workspace. Including each chapter as a rustdoc page makes
//! `cargo test --doc -p bitprune-guide` build and run every fenced code
//! block, so the book cannot drift from the library.

#[doc = include_str!("../../../book/src/introduction.md")]
pub mod introduction {}

#[doc = include_str!("../../../book/src/bit-planes.md")]
pub mod bit_planes {}

#[doc = include_str!("../../../book/src/guarded-filtering.md")]
pub mod guarded_filtering {}

#[doc = include_str!("../../../book/src/bit-sparsity.md")]
pub mod bit_sparsity {}

#[doc = include_str!("../../../book/src/tiled-attention.md")]
pub mod tiled_attention {}

#[doc = include_str!("../../../book/src/value-scheduling.md")]
pub mod value_scheduling {}

#[doc = include_str!("../../../book/src/simulator.md")]
pub mod simulator {}

#[doc = include_str!("../../../book/src/metrics.md")]
pub mod metrics {}

#[doc = include_str!("../../../book/src/command-line.md")]
pub mod command_line {}
