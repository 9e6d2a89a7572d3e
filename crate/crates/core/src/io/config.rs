//! Run configuration files.
//!
//! ```text
//! profile = eth            # eth | spinning-lidar; applied before other keys
//!
//! [entropy]
//! r = 0.3                  # sets r_min and r_max
//! r_min = 0.2
//! r_max = 1.0
//! alpha_deg = 0.92
//! epsilon = 1e-8
//! e_reject = 0.2
//! min_overlap = 0.1
//! min_neighbors = 5
//! aggregation = mean       # mean | median
//!
//! [ndt]
//! voxel_size = 0.6
//! min_cell_points = 6
//! eigen_floor = 1e-3
//! adjacency = full         # own | face | full
//! epsilon = 0
//!
//! [error]
//! e_d = 0.1
//! e_theta_deg = 0.57
//! seed = 0
//!
//! [run]
//! protocol = separate      # separate | joint | generalization
//! method = coral           # coral | coral-median | mme | ndt | rel-ndt
//! downsample = 0.08        # voxel cell in meters, or none
//! folds = 5
//! threshold = 0.5
//! output_dir = out
//! ```

use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use super::keyvalue::{Document, Entry};
use crate::baselines::{Adjacency, NdtParams};
use crate::entropy::{Aggregation, EntropyParams};
use crate::error::{CoralError, Result};
use crate::features::{MeasureParams, Method};
use crate::harness::{ErrorSpec, Protocol};

/// Shipped parameter sets.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Profile {
    /// Survey-grade scans: r = 0.3 fixed, 20 % rejection, ε = 0, NDT voxel
    /// 0.6 m, 0.08 m load-time downsampling.
    #[default]
    Eth,
    /// Spinning lidar: r in [0.2, 1.0] from 0.92° resolution, 20 %
    /// rejection, ε = 1e-8, NDT voxel 0.4 m, no downsampling.
    SpinningLidar,
}

impl fmt::Display for Profile {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Profile::Eth => "eth",
            Profile::SpinningLidar => "spinning-lidar",
        })
    }
}

impl FromStr for Profile {
    type Err = CoralError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "eth" => Ok(Profile::Eth),
            "spinning-lidar" => Ok(Profile::SpinningLidar),
            other => Err(CoralError::Config(format!("unknown profile '{other}'"))),
        }
    }
}

impl Profile {
    pub fn measure(self) -> MeasureParams {
        match self {
            Profile::Eth => MeasureParams {
                entropy: EntropyParams::eth(),
                ndt: NdtParams::with_voxel(0.6),
            },
            Profile::SpinningLidar => MeasureParams {
                entropy: EntropyParams::spinning_lidar(),
                ndt: NdtParams::with_voxel(0.4),
            },
        }
    }

    pub fn downsample(self) -> Option<f64> {
        match self {
            Profile::Eth => Some(0.08),
            Profile::SpinningLidar => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub measure: MeasureParams,
    pub error: ErrorSpec,
    pub protocol: Protocol,
    pub method: Method,
    /// Load-time voxel cell, meters.
    pub downsample: Option<f64>,
    pub folds: usize,
    pub threshold: f64,
    pub output_dir: PathBuf,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self::from_profile(Profile::default())
    }
}

impl RunConfig {
    pub fn from_profile(profile: Profile) -> Self {
        Self {
            measure: profile.measure(),
            error: ErrorSpec::default(),
            protocol: Protocol::Separate5Fold,
            method: Method::Coral,
            downsample: profile.downsample(),
            folds: 5,
            threshold: 0.5,
            output_dir: PathBuf::from("out"),
        }
    }

    pub fn load(path: &Path) -> Result<Self> {
        let doc = match Document::load(path) {
            Err(e @ CoralError::Parse { .. }) => return Err(CoralError::Config(e.to_string())),
            other => other?,
        };
        Self::from_document(&doc)
    }

    pub fn parse(text: &str) -> Result<Self> {
        let doc = Document::parse(text, Path::new("<config>")).map_err(|e| CoralError::Config(e.to_string()))?;
        Self::from_document(&doc)
    }

    fn from_document(doc: &Document) -> Result<Self> {
        let mut profile = Profile::default();
        for e in &doc.sections[0].entries {
            match e.key.as_str() {
                "profile" => profile = e.value.parse().map_err(|err| wrap(doc, e, err))?,
                other => return Err(unknown(doc, e, "top level", other)),
            }
        }
        let mut cfg = Self::from_profile(profile);
        for section in &doc.sections[1..] {
            if section.name.is_some() {
                return Err(config_error(doc, section.line, format!("section [{}] takes no name", section.kind)));
            }
            let apply: fn(&mut RunConfig, &Document, &Entry) -> Result<bool> = match section.kind.as_str() {
                "entropy" => apply_entropy,
                "ndt" => apply_ndt,
                "error" => apply_error,
                "run" => apply_run,
                other => return Err(config_error(doc, section.line, format!("unknown section [{other}]"))),
            };
            for e in &section.entries {
                if !apply(&mut cfg, doc, e)? {
                    return Err(unknown(doc, e, &section.kind, &e.key));
                }
            }
        }
        cfg.validate()?;
        Ok(cfg)
    }

    /// Checks every embedded parameter set.
    pub fn validate(&self) -> Result<()> {
        let as_config = |e: CoralError| CoralError::Config(e.to_string());
        self.measure.entropy.validate().map_err(as_config)?;
        self.measure.ndt.validate().map_err(as_config)?;
        self.error.validate().map_err(as_config)?;
        if self.folds < 2 {
            return Err(CoralError::Config(format!("folds must be >= 2, got {}", self.folds)));
        }
        if !(self.threshold > 0.0 && self.threshold < 1.0) {
            return Err(CoralError::Config(format!(
                "threshold must lie in (0, 1), got {}",
                self.threshold
            )));
        }
        if let Some(cell) = self.downsample {
            if !(cell > 0.0 && cell.is_finite()) {
                return Err(CoralError::Config(format!("downsample cell must be positive, got {cell}")));
            }
        }
        Ok(())
    }
}

fn config_error(doc: &Document, line: usize, message: String) -> CoralError {
    CoralError::Config(format!("{}:{line}: {message}", doc.path.display()))
}

fn wrap(doc: &Document, e: &Entry, err: CoralError) -> CoralError {
    config_error(doc, e.line, err.to_string())
}

fn unknown(doc: &Document, e: &Entry, section: &str, key: &str) -> CoralError {
    config_error(doc, e.line, format!("unknown key '{key}' in {section}"))
}

fn number<T: FromStr>(doc: &Document, e: &Entry) -> Result<T> {
    e.value.parse().map_err(|_| {
        config_error(doc, e.line, format!("invalid value '{}' for '{}'", e.value, e.key))
    })
}

fn apply_entropy(cfg: &mut RunConfig, doc: &Document, e: &Entry) -> Result<bool> {
    let p = &mut cfg.measure.entropy;
    match e.key.as_str() {
        "r" => {
            let r = number(doc, e)?;
            p.r_min = r;
            p.r_max = r;
        }
        "r_min" => p.r_min = number(doc, e)?,
        "r_max" => p.r_max = number(doc, e)?,
        "alpha_deg" => p.alpha = number::<f64>(doc, e)?.to_radians(),
        "epsilon" => p.epsilon = number(doc, e)?,
        "e_reject" => p.e_reject = number(doc, e)?,
        "min_overlap" => p.min_overlap = number(doc, e)?,
        "min_neighbors" => p.min_neighbors = number(doc, e)?,
        "aggregation" => {
            p.aggregation = match e.value.as_str() {
                "mean" => Aggregation::Mean,
                "median" => Aggregation::Median,
                other => return Err(config_error(doc, e.line, format!("unknown aggregation '{other}'"))),
            }
        }
        _ => return Ok(false),
    }
    Ok(true)
}

fn apply_ndt(cfg: &mut RunConfig, doc: &Document, e: &Entry) -> Result<bool> {
    let p = &mut cfg.measure.ndt;
    match e.key.as_str() {
        "voxel_size" => p.voxel_size = number(doc, e)?,
        "min_cell_points" => p.min_cell_points = number(doc, e)?,
        "eigen_floor" => p.eigen_floor = number(doc, e)?,
        "epsilon" => p.epsilon = number(doc, e)?,
        "adjacency" => {
            p.adjacency = match e.value.as_str() {
                "own" => Adjacency::Own,
                "face" => Adjacency::Face,
                "full" => Adjacency::Full,
                other => return Err(config_error(doc, e.line, format!("unknown adjacency '{other}'"))),
            }
        }
        _ => return Ok(false),
    }
    Ok(true)
}

fn apply_error(cfg: &mut RunConfig, doc: &Document, e: &Entry) -> Result<bool> {
    match e.key.as_str() {
        "e_d" => cfg.error.e_d = number(doc, e)?,
        "e_theta_deg" => cfg.error.e_theta = number::<f64>(doc, e)?.to_radians(),
        "seed" => cfg.error.seed = number(doc, e)?,
        _ => return Ok(false),
    }
    Ok(true)
}

fn apply_run(cfg: &mut RunConfig, doc: &Document, e: &Entry) -> Result<bool> {
    match e.key.as_str() {
        "protocol" => cfg.protocol = e.value.parse().map_err(|err| wrap(doc, e, err))?,
        "method" => cfg.method = e.value.parse().map_err(|err| wrap(doc, e, err))?,
        "downsample" => {
            cfg.downsample = match e.value.as_str() {
                "none" | "off" => None,
                _ => Some(number(doc, e)?),
            }
        }
        "folds" => cfg.folds = number(doc, e)?,
        "threshold" => cfg.threshold = number(doc, e)?,
        "output_dir" => cfg.output_dir = PathBuf::from(&e.value),
        _ => return Ok(false),
    }
    Ok(true)
}
