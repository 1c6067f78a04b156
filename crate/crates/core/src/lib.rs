//! Reasoning-program interpreter and grounded-explanation compiler.
//!
//! Pure `no_std` + `alloc` core: scene graphs and IoU alignment, the
//! twelve-operation program IR, its interpreter, the template-driven
//! explanation compiler, reference math for a grounding-gated decoder head,
//! and evaluation metrics. File formats, batching and the CLI live in the
//! `rex-forge` crate.

#![cfg_attr(not(test), no_std)]

extern crate alloc;

pub mod decoder;
pub mod explain;
pub mod interp;
pub mod mapping;
pub mod metrics;
pub mod program;
pub mod scene;
pub mod templates;
pub mod vocab;
