//! The guide under `book/`, one module per chapter, so that every code
//! block in it is compiled and run by `cargo test`.

#[doc = include_str!("../../../book/src/overview.md")]
pub mod overview {}

#[doc = include_str!("../../../book/src/models.md")]
pub mod models {}

#[doc = include_str!("../../../book/src/solving.md")]
pub mod solving {}

#[doc = include_str!("../../../book/src/multigrid.md")]
pub mod multigrid {}

#[doc = include_str!("../../../book/src/readout.md")]
pub mod readout {}

#[doc = include_str!("../../../book/src/experiments.md")]
pub mod experiments {}
