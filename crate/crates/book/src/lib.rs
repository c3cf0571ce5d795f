//! Code listings of the guide in `book/`, compiled and run as doc-tests.

#![doc = include_str!("../../../book/src/introduction.md")]

#[doc = include_str!("../../../book/src/scenarios.md")]
pub mod scenarios {}

#[doc = include_str!("../../../book/src/checks.md")]
pub mod checks {}

#[doc = include_str!("../../../book/src/regulator.md")]
pub mod regulator {}

#[doc = include_str!("../../../book/src/feedback.md")]
pub mod feedback {}

#[doc = include_str!("../../../book/src/observers.md")]
pub mod observers {}

#[doc = include_str!("../../../book/src/simulation.md")]
pub mod simulation {}

#[doc = include_str!("../../../book/src/seds.md")]
pub mod seds {}

#[doc = include_str!("../../../book/src/numerics.md")]
pub mod numerics {}

#[doc = include_str!("../../../book/src/cli.md")]
pub mod cli {}
