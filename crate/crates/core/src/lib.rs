//! Hierarchical news aggregation for forex movement prediction.
//!
//! The pipeline groups a window's headlines (by time bucket, topic cluster or
//! category), encodes each group with a small transformer, keeps the top-k
//! headlines per group by a learned importance score, attends over groups with
//! a trade-data query and classifies the next move as up or down.

pub mod aggregation;
pub mod autodiff;
pub mod config;
pub mod corpus;
pub mod encoder;
pub mod error;
pub mod eval;
pub mod extraction;
pub mod features;
pub mod grouping;
pub mod model;
pub mod nn;
pub mod parallel;
pub mod params;
pub mod pipeline;
pub mod plot;
pub mod tensor;
pub mod text;
pub mod training;

pub use error::{Error, Result};
