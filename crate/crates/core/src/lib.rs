//! Center-of-gravity aware grasp planning.
//!
//! A target object's CoG is located by retrieving similar annotated
//! exemplars from a [`memory_bank`], transferring their CoG annotations with
//! dense [`correspondence`], and picking one candidate in [`cog_locator`].
//! Candidate grasp poses are then filtered by proximity to that point in
//! [`grasp_filter`], and [`executor`] re-checks the plan before execution.
//! [`stability_sim`] provides a planar rigid-body oracle used to compare
//! grasp policies on synthetic tools.

// `!(x > 0.0)` style checks deliberately reject NaN as well.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod annotation;
pub mod api;
pub mod cog_locator;
pub mod correspondence;
pub mod executor;
pub mod features;
pub mod geometry;
pub mod grasp_filter;
pub mod mask;
pub mod memory_bank;
pub mod pipeline;
pub mod report;
pub mod stability_sim;
pub mod synth;

pub use geometry::{Pixel, Point2};
pub use mask::Mask;
