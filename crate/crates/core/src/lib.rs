//! Learning `≡_E`-minimal probabilistic deterministic finite automata (PDFA)
//! from language models whose next-symbol distributions contain zeros.
//!
//! The crate is organised bottom-up: [`simplex`] holds distributions and
//! equivalences, [`automata`] the PDFA core, [`equivcheck`] and [`teacher`]
//! the oracles, and [`learner`] the classification-tree learner. [`randgen`],
//! [`lmbridge`], [`compose`] and [`harness`] provide benchmark instances,
//! token-model adapters, guided sampling and the command line.

pub mod automata;
pub mod compose;
pub mod equivcheck;
pub mod harness;
pub mod learner;
pub mod lmbridge;
pub mod randgen;
pub mod simplex;
pub mod teacher;
