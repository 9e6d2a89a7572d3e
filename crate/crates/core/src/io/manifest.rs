//! Dataset manifests: scan sequences with ground-truth poses.
//!
//! ```text
//! [sequence apartment]
//! environment = structured        # structured | semi | unstructured
//! poses = apartment/poses.csv
//! pose_layout = skip:2,4x4        # optional, default auto
//! alpha_deg = 0.4                 # optional sensor vertical resolution
//! format = pcd                    # optional, default from extension
//! frame = sensor                  # sensor (default) | world
//! pairing = consecutive           # consecutive (default) | disjoint
//! scan = apartment/scan000.pcd
//! scan = apartment/scan001.pcd
//! ```
//!
//! Relative paths resolve against the manifest's directory. Consecutive
//! scans form the evaluated pairs (1-2, 2-3, ...); `disjoint` pairing
//! takes them two at a time (1-2, 3-4, ...) for collections of
//! independent scan pairs.

use std::path::{Path, PathBuf};
use std::str::FromStr;

use rayon::prelude::*;

use super::cloud_file::{load_cloud, CloudFormat};
use super::keyvalue::Document;
use super::poses::{load_poses, PoseLayout};
use crate::cloud::{apply_transform, voxel_downsample, PointCloud, RigidTransform, SourceLabel};
use crate::error::{CoralError, Result};
use crate::harness::{Environment, ScanPair, Sequence};

/// Frame the scan files are stored in.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum ScanFrame {
    /// Sensor-local; the pose maps points into the world.
    #[default]
    Sensor,
    /// Already in world coordinates; the pose only locates the sensor.
    World,
}

/// How scans of a sequence are grouped into pairs.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Pairing {
    #[default]
    Consecutive,
    Disjoint,
}

impl FromStr for Pairing {
    type Err = CoralError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "consecutive" => Ok(Pairing::Consecutive),
            "disjoint" => Ok(Pairing::Disjoint),
            other => Err(CoralError::Config(format!("unknown pairing '{other}'"))),
        }
    }
}

impl FromStr for ScanFrame {
    type Err = CoralError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "sensor" => Ok(ScanFrame::Sensor),
            "world" => Ok(ScanFrame::World),
            other => Err(CoralError::Config(format!("unknown scan frame '{other}'"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SequenceEntry {
    pub id: String,
    pub environment: Environment,
    pub scans: Vec<PathBuf>,
    pub poses: PathBuf,
    pub pose_layout: PoseLayout,
    /// Radians.
    pub alpha: Option<f64>,
    pub format: Option<CloudFormat>,
    pub frame: ScanFrame,
    pub pairing: Pairing,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DatasetManifest {
    pub path: PathBuf,
    pub sequences: Vec<SequenceEntry>,
}

impl DatasetManifest {
    /// Parses the manifest and checks that every referenced file exists.
    /// `layout` overrides the per-sequence pose layouts.
    pub fn load(path: &Path, layout: Option<PoseLayout>) -> Result<Self> {
        let doc = Document::load(path)?;
        let base = path.parent().unwrap_or(Path::new("."));
        let resolve = |p: &str| base.join(p);
        let mut sequences: Vec<SequenceEntry> = Vec::new();
        for section in &doc.sections {
            if section.kind.is_empty() {
                if let Some(e) = section.entries.first() {
                    return Err(doc.error(e.line, "manifest keys must follow a [sequence <id>] header"));
                }
                continue;
            }
            if section.kind != "sequence" {
                return Err(doc.error(section.line, format!("unknown section '{}'", section.kind)));
            }
            let id = section
                .name
                .clone()
                .ok_or_else(|| doc.error(section.line, "sequence header needs an id"))?;
            if sequences.iter().any(|s| s.id == id) {
                return Err(doc.error(section.line, format!("duplicate sequence '{id}'")));
            }
            let mut environment = None;
            let mut poses = None;
            let mut entry = SequenceEntry {
                id,
                environment: Environment::Structured,
                scans: Vec::new(),
                poses: PathBuf::new(),
                pose_layout: PoseLayout::default(),
                alpha: None,
                format: None,
                frame: ScanFrame::Sensor,
                pairing: Pairing::Consecutive,
            };
            let config_err = |line: usize, e: CoralError| doc.error(line, e.to_string());
            for e in &section.entries {
                match e.key.as_str() {
                    "environment" => {
                        environment = Some(e.value.parse().map_err(|err| config_err(e.line, err))?)
                    }
                    "poses" => poses = Some(resolve(&e.value)),
                    "pose_layout" => entry.pose_layout = e.value.parse().map_err(|err| config_err(e.line, err))?,
                    "alpha_deg" => {
                        let deg: f64 = doc.value(e)?;
                        if !(deg >= 0.0 && deg.is_finite()) {
                            return Err(doc.error(e.line, "alpha_deg must be finite and >= 0"));
                        }
                        entry.alpha = Some(deg.to_radians());
                    }
                    "format" => entry.format = Some(e.value.parse().map_err(|err| config_err(e.line, err))?),
                    "frame" => entry.frame = e.value.parse().map_err(|err| config_err(e.line, err))?,
                    "pairing" => entry.pairing = e.value.parse().map_err(|err| config_err(e.line, err))?,
                    "scan" => entry.scans.push(resolve(&e.value)),
                    other => return Err(doc.error(e.line, format!("unknown manifest key '{other}'"))),
                }
            }
            entry.environment = environment
                .ok_or_else(|| doc.error(section.line, format!("sequence '{}' lacks environment", entry.id)))?;
            entry.poses =
                poses.ok_or_else(|| doc.error(section.line, format!("sequence '{}' lacks poses", entry.id)))?;
            if let Some(l) = layout {
                entry.pose_layout = l;
            }
            if entry.scans.len() < 2 {
                return Err(doc.error(section.line, format!("sequence '{}' needs at least 2 scans", entry.id)));
            }
            if entry.pairing == Pairing::Disjoint && !entry.scans.len().is_multiple_of(2) {
                return Err(doc.error(
                    section.line,
                    format!("sequence '{}' has an odd scan count for disjoint pairing", entry.id),
                ));
            }
            for file in entry.scans.iter().chain(std::iter::once(&entry.poses)) {
                if !file.is_file() {
                    return Err(CoralError::io(
                        file,
                        std::io::Error::new(std::io::ErrorKind::NotFound, "referenced by manifest"),
                    ));
                }
            }
            sequences.push(entry);
        }
        if sequences.is_empty() {
            return Err(CoralError::Format {
                path: path.to_path_buf(),
                message: "manifest lists no sequences".into(),
            });
        }
        Ok(Self {
            path: path.to_path_buf(),
            sequences,
        })
    }

    /// Loads every scan into the world frame (optionally voxel-downsampled)
    /// and pairs consecutive scans.
    pub fn load_sequences(&self, downsample: Option<f64>) -> Result<Vec<Sequence>> {
        self.sequences.iter().map(|s| load_sequence(s, downsample)).collect()
    }
}

fn load_scan(path: &Path, entry: &SequenceEntry, pose: &RigidTransform, downsample: Option<f64>) -> Result<PointCloud> {
    let format = entry.format.unwrap_or_else(|| CloudFormat::from_path(path));
    let raw = load_cloud(path, format)?;
    let world = match entry.frame {
        ScanFrame::Sensor => apply_transform(&raw, pose)?,
        ScanFrame::World => {
            let origin = pose.transform_point(&crate::cloud::Point3::origin());
            PointCloud::new(raw.points().to_vec(), origin, SourceLabel::A)?
        }
    };
    match downsample {
        Some(cell) => voxel_downsample(&world, cell),
        None => Ok(world),
    }
}

pub fn load_sequence(entry: &SequenceEntry, downsample: Option<f64>) -> Result<Sequence> {
    let poses = load_poses(&entry.poses, entry.pose_layout)?;
    if poses.len() != entry.scans.len() {
        return Err(CoralError::Format {
            path: entry.poses.clone(),
            message: format!(
                "{} poses for {} scans in sequence '{}'",
                poses.len(),
                entry.scans.len(),
                entry.id
            ),
        });
    }
    let clouds: Vec<PointCloud> = entry
        .scans
        .par_iter()
        .zip(&poses)
        .map(|(path, pose)| load_scan(path, entry, pose, downsample))
        .collect::<Result<_>>()?;
    let step = match entry.pairing {
        Pairing::Consecutive => 1,
        Pairing::Disjoint => 2,
    };
    let pairs = clouds
        .windows(2)
        .step_by(step)
        .enumerate()
        .map(|(i, w)| ScanPair {
            cloud_a: w[0].clone().relabeled(SourceLabel::A),
            cloud_b: w[1].clone().relabeled(SourceLabel::B),
            sequence_id: entry.id.clone(),
            pair_index: i,
        })
        .collect();
    Ok(Sequence {
        id: entry.id.clone(),
        environment: entry.environment,
        alpha: entry.alpha,
        pairs,
    })
}

/// Writes a manifest listing `sequences`; paths are written as given.
pub fn write_manifest(path: &Path, sequences: &[SequenceEntry]) -> Result<()> {
    let mut text = String::new();
    for s in sequences {
        text.push_str(&format!("[sequence {}]\n", s.id));
        text.push_str(&format!("environment = {}\n", s.environment));
        text.push_str(&format!("poses = {}\n", s.poses.display()));
        if s.pose_layout != PoseLayout::default() {
            text.push_str(&format!("pose_layout = {}\n", s.pose_layout));
        }
        if let Some(a) = s.alpha {
            text.push_str(&format!("alpha_deg = {}\n", a.to_degrees()));
        }
        if let Some(f) = s.format {
            text.push_str(&format!("format = {f}\n"));
        }
        if s.frame == ScanFrame::World {
            text.push_str("frame = world\n");
        }
        if s.pairing == Pairing::Disjoint {
            text.push_str("pairing = disjoint\n");
        }
        for scan in &s.scans {
            text.push_str(&format!("scan = {}\n", scan.display()));
        }
        text.push('\n');
    }
    std::fs::write(path, text).map_err(|e| CoralError::io(path, e))
}
