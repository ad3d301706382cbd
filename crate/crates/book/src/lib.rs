//! Chapters of the guide in `book/src`, compiled so their snippets run as doc-tests.

#[doc = include_str!("../../../book/src/states.md")]
pub mod chapter1 {}

#[doc = include_str!("../../../book/src/photon-statistics.md")]
pub mod chapter2 {}

#[doc = include_str!("../../../book/src/measures.md")]
pub mod chapter3 {}

#[doc = include_str!("../../../book/src/loss.md")]
pub mod chapter4 {}

#[doc = include_str!("../../../book/src/mitigation.md")]
pub mod chapter5 {}

#[doc = include_str!("../../../book/src/vibronic.md")]
pub mod chapter6 {}

#[doc = include_str!("../../../book/src/sweeps.md")]
pub mod chapter7 {}

#[doc = include_str!("../../../book/src/cli.md")]
pub mod chapter8 {}

#[doc = include_str!("../../../README.md")]
pub mod readme {}
