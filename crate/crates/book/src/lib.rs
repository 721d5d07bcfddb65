//! The guide in `book/src` is an mdbook, which cannot run snippets that
//! depend on this workspace. Each chapter is included here as a module doc
//! so `cargo test` runs its code blocks as doctests.

#[doc = include_str!("../../../book/src/introduction.md")]
pub mod introduction {}
#[doc = include_str!("../../../book/src/quick_start.md")]
pub mod quick_start {}
#[doc = include_str!("../../../book/src/tape.md")]
pub mod tape {}
#[doc = include_str!("../../../book/src/hand_model.md")]
pub mod hand_model {}
#[doc = include_str!("../../../book/src/projection.md")]
pub mod projection {}
#[doc = include_str!("../../../book/src/interaction.md")]
pub mod interaction {}
#[doc = include_str!("../../../book/src/losses.md")]
pub mod losses {}
#[doc = include_str!("../../../book/src/metrics.md")]
pub mod metrics {}
#[doc = include_str!("../../../book/src/synthetic_scenes.md")]
pub mod synthetic_scenes {}
#[doc = include_str!("../../../book/src/command_line.md")]
pub mod command_line {}
