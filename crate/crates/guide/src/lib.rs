//! Book listings as doc-tests.
//!
//! Each chapter under `book/src` is included as the docs of one module, so
//! `cargo test -p ehrchain-guide` compiles and runs every listing and a
//! failure points at the chapter it came from.

#[doc = include_str!("../../../book/src/introduction.md")]
pub mod introduction {}
#[doc = include_str!("../../../book/src/policies.md")]
pub mod policies {}
#[doc = include_str!("../../../book/src/key-chain.md")]
pub mod key_chain {}
#[doc = include_str!("../../../book/src/abe.md")]
pub mod abe {}
#[doc = include_str!("../../../book/src/ledger.md")]
pub mod ledger {}
#[doc = include_str!("../../../book/src/contracts.md")]
pub mod contracts {}
#[doc = include_str!("../../../book/src/storage.md")]
pub mod storage {}
#[doc = include_str!("../../../book/src/workflow.md")]
pub mod workflow {}
#[doc = include_str!("../../../book/src/attacker-model.md")]
pub mod attacker_model {}
#[doc = include_str!("../../../book/src/scenarios.md")]
pub mod scenarios {}
