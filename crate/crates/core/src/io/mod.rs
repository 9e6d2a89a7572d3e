//! File formats: point clouds, poses, dataset manifests and run configs.

mod cloud_file;
mod config;
mod keyvalue;
mod manifest;
mod poses;

pub use cloud_file::{load_cloud, read_points, write_xyz, write_xyz_to, CloudFormat, MAX_REJECTED_FRACTION};
pub use config::{Profile, RunConfig};
pub use manifest::{load_sequence, write_manifest, DatasetManifest, Pairing, ScanFrame, SequenceEntry};
pub use poses::{load_poses, read_poses, repair_rotation, write_poses, PoseLayout, REPAIRABLE_ROTATION_ERROR};
