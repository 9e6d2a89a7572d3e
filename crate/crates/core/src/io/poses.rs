//! Per-scan pose files: one row-major 3×4 or 4×4 matrix per row, comma or
//! whitespace separated.

use std::fmt;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;
use std::str::FromStr;

use nalgebra::{Matrix3, Vector3};

use crate::cloud::{orthonormality_error, RigidTransform, ROTATION_TOLERANCE};
use crate::error::{CoralError, Result};

/// Rotations with an orthonormality error up to this are projected back onto
/// SO(3); larger errors reject the file.
pub const REPAIRABLE_ROTATION_ERROR: f64 = 1e-4;

/// Column layout of a pose file.
///
/// Written as `auto`, `3x4`, `4x4`, `skip:N`, or a comma-joined combination
/// such as `skip:2,4x4` (N leading columns, e.g. ids and timestamps, are
/// ignored).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct PoseLayout {
    pub skip: usize,
    /// 12 or 16; `None` accepts either.
    pub columns: Option<usize>,
}

impl fmt::Display for PoseLayout {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let shape = match self.columns {
            Some(12) => "3x4",
            Some(_) => "4x4",
            None => "auto",
        };
        if self.skip > 0 {
            write!(f, "skip:{},{shape}", self.skip)
        } else {
            f.write_str(shape)
        }
    }
}

impl FromStr for PoseLayout {
    type Err = CoralError;

    fn from_str(s: &str) -> Result<Self> {
        let mut layout = PoseLayout::default();
        for part in s.split(',').map(str::trim) {
            match part {
                "auto" => layout.columns = None,
                "3x4" => layout.columns = Some(12),
                "4x4" => layout.columns = Some(16),
                _ => {
                    layout.skip = part
                        .strip_prefix("skip:")
                        .and_then(|n| n.parse().ok())
                        .ok_or_else(|| CoralError::Config(format!("unknown pose layout '{part}'")))?;
                }
            }
        }
        Ok(layout)
    }
}

pub fn load_poses(path: &Path, layout: PoseLayout) -> Result<Vec<RigidTransform>> {
    let file = File::open(path).map_err(|e| CoralError::io(path, e))?;
    read_poses(BufReader::new(file), layout, path)
}

/// Parses poses from `reader`. A first row containing non-numeric tokens is
/// taken as a column header and skipped.
pub fn read_poses<R: BufRead>(reader: R, layout: PoseLayout, path: &Path) -> Result<Vec<RigidTransform>> {
    let format_error = |line: usize, message: String| CoralError::Format {
        path: path.to_path_buf(),
        message: format!("line {line}: {message}"),
    };
    let mut poses = Vec::new();
    let mut first_row = true;
    for (i, raw) in reader.lines().enumerate() {
        let line = i + 1;
        let raw = raw.map_err(|e| CoralError::io(path, e))?;
        let content = raw.split('#').next().unwrap_or("").trim();
        if content.is_empty() {
            continue;
        }
        let tokens: Vec<&str> = content
            .split(|c: char| c == ',' || c.is_whitespace())
            .filter(|t| !t.is_empty())
            .collect();
        let parsed: std::result::Result<Vec<f64>, _> =
            tokens.iter().skip(layout.skip).map(|t| t.parse::<f64>()).collect();
        let is_header = std::mem::replace(&mut first_row, false)
            && tokens.iter().any(|t| t.parse::<f64>().is_err());
        if is_header {
            continue;
        }
        let values = parsed.map_err(|_| CoralError::Parse {
            path: path.to_path_buf(),
            line,
            message: "non-numeric pose entry".into(),
        })?;
        let n = values.len();
        if !(n == 12 || n == 16) || layout.columns.is_some_and(|c| c != n) {
            let expected = layout.columns.map_or("12 or 16".to_string(), |c| c.to_string());
            return Err(format_error(line, format!("expected {expected} pose columns, found {n}")));
        }
        if n == 16 {
            let bottom = &values[12..16];
            let expected = [0.0, 0.0, 0.0, 1.0];
            if bottom.iter().zip(expected).any(|(v, e)| (v - e).abs() > 1e-6) {
                return Err(format_error(line, format!("bottom row {bottom:?} is not [0 0 0 1]")));
            }
        }
        let rotation = Matrix3::new(
            values[0], values[1], values[2], values[4], values[5], values[6], values[8], values[9], values[10],
        );
        let translation = Vector3::new(values[3], values[7], values[11]);
        let rotation = repair_rotation(&rotation)
            .map_err(|message| format_error(line, message))?;
        poses.push(RigidTransform::new(rotation, translation).map_err(|e| format_error(line, e.to_string()))?);
    }
    Ok(poses)
}

/// Returns `rotation` unchanged if it is orthonormal, its closest rotation
/// (polar factor) if the error is small, and an explanation otherwise.
pub fn repair_rotation(rotation: &Matrix3<f64>) -> std::result::Result<Matrix3<f64>, String> {
    if !rotation.iter().all(|v| v.is_finite()) {
        return Err("non-finite rotation entry".into());
    }
    let err = orthonormality_error(rotation);
    if err <= ROTATION_TOLERANCE {
        return Ok(*rotation);
    }
    if err > REPAIRABLE_ROTATION_ERROR {
        return Err(format!("rotation orthonormality error {err:.3e} is too large"));
    }
    let svd = rotation.svd(true, true);
    let (u, v_t) = (svd.u.unwrap(), svd.v_t.unwrap());
    let polar = u * v_t;
    if polar.determinant() < 0.0 {
        return Err("rotation block is a reflection".into());
    }
    Ok(polar)
}

/// Writes poses as 12-column comma-separated rows.
pub fn write_poses(path: &Path, poses: &[RigidTransform]) -> Result<()> {
    let file = File::create(path).map_err(|e| CoralError::io(path, e))?;
    let mut out = BufWriter::new(file);
    let write = |out: &mut BufWriter<File>| -> std::io::Result<()> {
        for pose in poses {
            let m = pose.to_matrix4();
            let row: Vec<String> = (0..3)
                .flat_map(|r| (0..4).map(move |c| (r, c)))
                .map(|(r, c)| m[(r, c)].to_string())
                .collect();
            writeln!(out, "{}", row.join(","))?;
        }
        out.flush()
    };
    write(&mut out).map_err(|e| CoralError::io(path, e))
}
