// The guide in book/ is plain mdbook, which cannot run its Rust listings.
// Each chapter is attached here as the docs of an empty module so that
// `cargo test --doc` compiles and runs every listing against this crate.

#[doc = include_str!("../../../book/src/introduction.md")]
mod introduction {}
#[doc = include_str!("../../../book/src/running.md")]
mod running {}
#[doc = include_str!("../../../book/src/configuration.md")]
mod configuration {}
#[doc = include_str!("../../../book/src/base-flow.md")]
mod base_flow {}
#[doc = include_str!("../../../book/src/transport.md")]
mod transport {}
#[doc = include_str!("../../../book/src/divcurl.md")]
mod divcurl {}
#[doc = include_str!("../../../book/src/fixed-point.md")]
mod fixed_point {}
#[doc = include_str!("../../../book/src/outputs.md")]
mod outputs {}
#[doc = include_str!("../../../book/src/verification.md")]
mod verification {}
