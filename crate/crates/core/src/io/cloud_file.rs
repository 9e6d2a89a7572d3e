//! ASCII point-cloud files: whitespace-separated `x y z` rows and ASCII PCD.

use std::fmt;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;
use std::str::FromStr;

use crate::cloud::{Point3, PointCloud, SourceLabel};
use crate::error::{CoralError, Result};

/// Largest fraction of non-finite points a file may contain; such points are
/// dropped, anything beyond fails the load.
pub const MAX_REJECTED_FRACTION: f64 = 0.01;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CloudFormat {
    XyzAscii,
    PcdAscii,
}

impl CloudFormat {
    /// Guesses the format from the file extension (`.pcd` or anything else).
    pub fn from_path(path: &Path) -> Self {
        match path.extension().and_then(|e| e.to_str()) {
            Some(ext) if ext.eq_ignore_ascii_case("pcd") => CloudFormat::PcdAscii,
            _ => CloudFormat::XyzAscii,
        }
    }
}

impl fmt::Display for CloudFormat {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            CloudFormat::XyzAscii => "xyz-ascii",
            CloudFormat::PcdAscii => "pcd-ascii",
        })
    }
}

impl FromStr for CloudFormat {
    type Err = CoralError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "xyz" | "xyz-ascii" => Ok(CloudFormat::XyzAscii),
            "pcd" | "pcd-ascii" => Ok(CloudFormat::PcdAscii),
            other => Err(CoralError::Config(format!("unknown cloud format '{other}'"))),
        }
    }
}

/// Reads a cloud with its sensor at the origin of the file frame.
pub fn load_cloud(path: &Path, format: CloudFormat) -> Result<PointCloud> {
    let file = File::open(path).map_err(|e| CoralError::io(path, e))?;
    let points = read_points(BufReader::new(file), format, path)?;
    PointCloud::new(points, Point3::origin(), SourceLabel::A)
}

/// Parses points from `reader`; `path` only labels diagnostics.
pub fn read_points<R: BufRead>(reader: R, format: CloudFormat, path: &Path) -> Result<Vec<Point3>> {
    let mut rows = Rows::new(reader, path);
    let (points, rejected) = match format {
        CloudFormat::XyzAscii => read_xyz(&mut rows)?,
        CloudFormat::PcdAscii => read_pcd(&mut rows)?,
    };
    let total = points.len() + rejected;
    if rejected > 0 {
        if rejected as f64 > MAX_REJECTED_FRACTION * total as f64 {
            return Err(CoralError::Format {
                path: path.to_path_buf(),
                message: format!("{rejected} of {total} points have non-finite coordinates"),
            });
        }
        log::warn!("{}: dropped {rejected} of {total} non-finite points", path.display());
    }
    Ok(points)
}

struct Rows<'a, R> {
    lines: std::io::Lines<R>,
    line: usize,
    path: &'a Path,
}

impl<'a, R: BufRead> Rows<'a, R> {
    fn new(reader: R, path: &'a Path) -> Self {
        Self {
            lines: reader.lines(),
            line: 0,
            path,
        }
    }

    /// Next non-blank, non-comment line with its number.
    fn next_row(&mut self) -> Result<Option<(usize, String)>> {
        for raw in self.lines.by_ref() {
            self.line += 1;
            let raw = raw.map_err(|e| CoralError::io(self.path, e))?;
            let content = raw.split('#').next().unwrap_or("").trim();
            if !content.is_empty() {
                return Ok(Some((self.line, content.to_string())));
            }
        }
        Ok(None)
    }

    fn parse_error(&self, line: usize, message: String) -> CoralError {
        CoralError::Parse {
            path: self.path.to_path_buf(),
            line,
            message,
        }
    }

    fn format_error(&self, message: String) -> CoralError {
        CoralError::Format {
            path: self.path.to_path_buf(),
            message,
        }
    }

    fn numbers(&self, line: usize, content: &str) -> Result<Vec<f64>> {
        content
            .split_whitespace()
            .map(|tok| {
                tok.parse::<f64>()
                    .map_err(|_| self.parse_error(line, format!("'{tok}' is not a number")))
            })
            .collect()
    }
}

/// Keeps finite points, counts the rest.
fn push_point(points: &mut Vec<Point3>, rejected: &mut usize, x: f64, y: f64, z: f64) {
    if x.is_finite() && y.is_finite() && z.is_finite() {
        points.push(Point3::new(x, y, z));
    } else {
        *rejected += 1;
    }
}

fn read_xyz<R: BufRead>(rows: &mut Rows<'_, R>) -> Result<(Vec<Point3>, usize)> {
    let mut points = Vec::new();
    let mut rejected = 0;
    while let Some((line, content)) = rows.next_row()? {
        let v = rows.numbers(line, &content)?;
        if v.len() != 3 {
            return Err(rows.parse_error(line, format!("expected 3 coordinates, found {}", v.len())));
        }
        push_point(&mut points, &mut rejected, v[0], v[1], v[2]);
    }
    Ok((points, rejected))
}

fn read_pcd<R: BufRead>(rows: &mut Rows<'_, R>) -> Result<(Vec<Point3>, usize)> {
    let mut fields: Option<Vec<String>> = None;
    let mut counts: Option<Vec<usize>> = None;
    let mut declared: Option<usize> = None;
    loop {
        let (line, content) = rows
            .next_row()?
            .ok_or_else(|| rows.format_error("PCD header has no DATA line".into()))?;
        let mut words = content.split_whitespace();
        let key = words.next().unwrap_or_default().to_ascii_uppercase();
        let rest: Vec<&str> = words.collect();
        let count = |s: &str| {
            s.parse::<usize>()
                .map_err(|_| rows.parse_error(line, format!("invalid {key} value '{s}'")))
        };
        match key.as_str() {
            "FIELDS" => fields = Some(rest.iter().map(|s| s.to_ascii_lowercase()).collect()),
            "COUNT" => counts = Some(rest.iter().map(|s| count(s)).collect::<Result<_>>()?),
            "POINTS" => {
                let [n] = rest[..] else {
                    return Err(rows.parse_error(line, "POINTS takes one value".into()));
                };
                declared = Some(count(n)?);
            }
            "DATA" => {
                if rest.first().map(|s| s.to_ascii_lowercase()) != Some("ascii".into()) {
                    return Err(rows.format_error(format!(
                        "only ASCII PCD data is supported, found '{}'",
                        rest.join(" ")
                    )));
                }
                break;
            }
            "VERSION" | "SIZE" | "TYPE" | "WIDTH" | "HEIGHT" | "VIEWPOINT" => {}
            other => return Err(rows.parse_error(line, format!("unknown PCD header key '{other}'"))),
        }
    }
    let fields = fields.ok_or_else(|| rows.format_error("PCD header lacks FIELDS".into()))?;
    let counts = counts.unwrap_or_else(|| vec![1; fields.len()]);
    if counts.len() != fields.len() {
        return Err(rows.format_error("PCD COUNT and FIELDS lengths differ".into()));
    }
    // Column offset of every field.
    let offsets: Vec<usize> = counts
        .iter()
        .scan(0, |acc, &c| {
            let o = *acc;
            *acc += c;
            Some(o)
        })
        .collect();
    let width: usize = counts.iter().sum();
    let column = |name: &str| {
        fields
            .iter()
            .position(|f| f == name)
            .map(|i| offsets[i])
            .ok_or_else(|| rows.format_error(format!("PCD FIELDS lack '{name}'")))
    };
    let (cx, cy, cz) = (column("x")?, column("y")?, column("z")?);

    let mut points = Vec::with_capacity(declared.unwrap_or(0));
    let mut rejected = 0;
    let mut rows_read = 0;
    while let Some((line, content)) = rows.next_row()? {
        let v = rows.numbers(line, &content)?;
        if v.len() != width {
            return Err(rows.parse_error(line, format!("expected {width} values, found {}", v.len())));
        }
        push_point(&mut points, &mut rejected, v[cx], v[cy], v[cz]);
        rows_read += 1;
    }
    if let Some(n) = declared {
        if n != rows_read {
            return Err(rows.format_error(format!("header declares {n} points, data has {rows_read}")));
        }
    }
    Ok((points, rejected))
}

/// Writes one `x y z` row per point with round-trip exact formatting.
pub fn write_xyz(path: &Path, cloud: &PointCloud) -> Result<()> {
    let file = File::create(path).map_err(|e| CoralError::io(path, e))?;
    let mut out = BufWriter::new(file);
    write_xyz_to(&mut out, cloud)
        .and_then(|_| out.flush())
        .map_err(|e| CoralError::io(path, e))
}

pub fn write_xyz_to<W: Write>(out: &mut W, cloud: &PointCloud) -> std::io::Result<()> {
    for p in cloud.points() {
        writeln!(out, "{} {} {}", p.x, p.y, p.z)?;
    }
    Ok(())
}
