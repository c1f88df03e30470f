//! Distance-biased graph transformer experiments on contextual stochastic
//! block model (CSBM) graphs.
//!
//! The crate is `no_std` (with `alloc`) and contains every pure piece of the
//! pipeline:
//!
//! * [`graphgen`] samples CSBM graphs and computes hop-distance geometry.
//! * [`task`] builds two-signal node labels mixing a local and a far-shell score.
//! * [`model`] is a small dense graph transformer whose attention logits carry
//!   a `-lambda * hops` bias, with hand-written reverse mode and Adam.
//! * [`diagnostics`] compares where the task depends on information with
//!   where the model attends, over hop distance.
//! * [`control`] holds the fixed, zero-gap and target-gap lambda policies.
//! * [`experiment`] wires everything into one seeded training run.
//!
//! File formats, configuration, sweeps and the CLI live in the `misalign`
//! crate.

#![no_std]
#![forbid(unsafe_code)]

extern crate alloc;

pub mod control;
pub mod diagnostics;
pub mod error;
pub mod experiment;
pub mod graphgen;
pub mod model;
pub mod rng;
pub mod task;

#[cfg(any(test, feature = "oracles"))]
#[doc(hidden)]
pub mod oracles;

pub use control::{ControllerConfig, ControllerKind, ControllerState};
pub use diagnostics::{DistanceProfile, MismatchReport, Regime};
pub use error::{Error, Result};
pub use experiment::{run_one, EvalRecord, RunConfig, RunResult};
pub use graphgen::{CsbmParams, DistanceMatrix, Graph};
pub use model::{AttentionRecord, ModelConfig, ModelState};
pub use task::{LabeledTask, Split, TaskSpec};
