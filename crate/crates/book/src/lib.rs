//! The guide under `book/src`, compiled as doctests so its snippets keep
//! working. Nothing to use from here.

#[doc = include_str!("../../../README.md")]
pub mod readme {}

#[doc = include_str!("../../../book/src/introduction.md")]
pub mod introduction {}

#[doc = include_str!("../../../book/src/model.md")]
pub mod model {}

#[doc = include_str!("../../../book/src/solving.md")]
pub mod solving {}

#[doc = include_str!("../../../book/src/tykhonov.md")]
pub mod tykhonov {}

#[doc = include_str!("../../../book/src/control.md")]
pub mod control {}

#[doc = include_str!("../../../book/src/lab.md")]
pub mod lab {}

#[doc = include_str!("../../../book/src/acceptance.md")]
pub mod acceptance {}
