//! Alignment correctness assessment for registered point-cloud pairs.
//!
//! The central measure compares the average differential entropy of local
//! neighborhoods computed in each cloud separately with the same quantity in
//! the joined cloud: joining well-aligned scans leaves it unchanged, while a
//! misalignment blurs surfaces and raises the joint entropy. The difference,
//! or the two averages as separate features, feed a logistic classifier.

pub mod baselines;
pub mod classify;
pub mod cli;
pub mod cloud;
pub mod entropy;
pub mod error;
pub mod features;
pub mod harness;
pub mod io;
pub mod spatial;

pub use cloud::{apply_transform, join, voxel_downsample, Point3, PointCloud, RigidTransform, SourceLabel};
pub use error::{CoralError, Result};
