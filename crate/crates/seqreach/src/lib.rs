//! Sequential stochastic reachability for controlled diffusions.
//!
//! The library answers one question: from which initial states can a
//! controlled diffusion execute a multi-phase motion plan — visit goal sets
//! in order while confined to way sets, under path, fixed-schedule or dwell
//! timing — with probability above a chosen level? It computes the chain of
//! value functions behind that question by solving one backward HJB sweep
//! per phase, each sweep receiving its terminal and spatial boundary data
//! from its successor, and cross-validates every number with a Monte Carlo
//! estimator built on sequential exit times.
//!
//! Module map:
//!
//! - [`sde`] — controlled SDE models, Euler-Maruyama paths, feedback policies
//! - [`geometry`] — implicit sets, erosion, mollified goal payoffs
//! - [`motion`] — motion specifications, exit-time tracking, event scoring
//! - [`mc`] — Monte Carlo success probabilities and DPP residual checks
//! - [`grid`], [`hjb`] — grids, the Dynkin stencil and the backward chain
//! - [`policy`] — bang-bang policy extraction and closed-loop verification
//! - [`models`] — the bundled bio-switch case study and calibration problems
//! - [`config`], [`exports`], [`cli`] — run configs, file formats, commands
//!
//! Start with the runnable examples (`cargo run --release --example ...`);
//! each one demonstrates a single capability end to end.

pub mod cli;
pub mod config;
pub mod error;
pub mod exports;
pub mod geometry;
pub mod grid;
pub mod hjb;
pub mod mc;
pub mod models;
pub mod motion;
pub mod policy;
pub mod sde;

pub use error::{Error, Result};
pub use geometry::{MollifiedPayoff, RegionSet};
pub use grid::{Grid, ValueField};
pub use hjb::{ChainProblem, ChainSolution};
pub use mc::ProbEstimate;
pub use motion::{Deadline, MotionSpec, Phase, Scoring};
pub use policy::FeedbackPolicy;
pub use sde::{ConstantPolicy, Policy, SdeModel, TrajectorySample};
