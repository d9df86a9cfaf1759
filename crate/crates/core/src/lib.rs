//! Cost-aware coarse-to-fine detection scheduling.
//!
//! A cheap coarse detector runs on a half-scale frame; a learned gain
//! regressor turns its detections into an accuracy-gain map; a Q-network then
//! picks full-resolution zoom windows one at a time, trading detection
//! improvement against processed pixels. Detector oracles are simulated.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod error;
pub mod experiment;
pub mod geom;
pub mod agmap;
pub mod matching;
pub mod metrics;
pub mod nn;
pub mod policy;
pub mod records;
pub mod regressor;
pub mod seed;
pub mod sim;

pub use error::{Error, Result};
