// mdbook cannot run listings that depend on a workspace crate, so each
// chapter is pulled in as a doc module and `cargo test` runs the code
// blocks as doctests. One module per chapter keeps failures traceable.

#[doc = include_str!("../../../book/src/introduction.md")]
pub mod introduction {}
#[doc = include_str!("../../../book/src/trajectories.md")]
pub mod trajectories {}
#[doc = include_str!("../../../book/src/kinematics.md")]
pub mod kinematics {}
#[doc = include_str!("../../../book/src/scenes.md")]
pub mod scenes {}
#[doc = include_str!("../../../book/src/embeddings.md")]
pub mod embeddings {}
#[doc = include_str!("../../../book/src/classifier.md")]
pub mod classifier {}
#[doc = include_str!("../../../book/src/pipeline.md")]
pub mod pipeline {}
