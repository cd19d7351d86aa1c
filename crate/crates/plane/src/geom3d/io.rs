//! ASCII PLY and whitespace-separated XYZ point-cloud I/O.
//!
//! The PLY dialect is ASCII with a `vertex` element carrying float `x y z`
//! properties, an optional `uchar anomaly` label property, and (on export)
//! optional score/color properties. Readers reject non-finite coordinates.

use super::{Point3, PointCloud};
use crate::{Error, Result};
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

fn parse_err(path: &Path, reason: impl Into<String>) -> Error {
    Error::Parse {
        path: path.display().to_string(),
        reason: reason.into(),
    }
}

/// Reads an ASCII PLY file, attaching labels if an `anomaly` property exists.
pub fn read_ply(path: &Path) -> Result<PointCloud> {
    let file = File::open(path).map_err(|e| Error::io(path.display().to_string(), e))?;
    let mut lines = BufReader::new(file).lines();

    let magic = lines
        .next()
        .transpose()
        .map_err(|e| Error::io(path.display().to_string(), e))?
        .ok_or_else(|| parse_err(path, "empty file"))?;
    if magic.trim() != "ply" {
        return Err(parse_err(path, "missing 'ply' magic"));
    }

    let mut vertex_count: Option<usize> = None;
    let mut properties: Vec<String> = Vec::new();
    let mut in_vertex_element = false;
    loop {
        let line = lines
            .next()
            .transpose()
            .map_err(|e| Error::io(path.display().to_string(), e))?
            .ok_or_else(|| parse_err(path, "header ended before end_header"))?;
        let line = line.trim().to_string();
        let tokens: Vec<&str> = line.split_whitespace().collect();
        match tokens.first().copied() {
            Some("format") => {
                if tokens.get(1) != Some(&"ascii") {
                    return Err(parse_err(path, "only ascii PLY is supported"));
                }
            }
            Some("element") => {
                in_vertex_element = tokens.get(1) == Some(&"vertex");
                if in_vertex_element {
                    let n = tokens
                        .get(2)
                        .and_then(|t| t.parse().ok())
                        .ok_or_else(|| parse_err(path, "bad vertex count"))?;
                    vertex_count = Some(n);
                }
            }
            Some("property") if in_vertex_element => {
                if let Some(name) = tokens.last() {
                    properties.push((*name).to_string());
                }
            }
            Some("end_header") => break,
            _ => {}
        }
    }

    let count = vertex_count.ok_or_else(|| parse_err(path, "no vertex element"))?;
    let find = |name: &str| properties.iter().position(|p| p == name);
    let (ix, iy, iz) = match (find("x"), find("y"), find("z")) {
        (Some(a), Some(b), Some(c)) => (a, b, c),
        _ => return Err(parse_err(path, "vertex element lacks x/y/z properties")),
    };
    let ianomaly = find("anomaly");

    let mut points = Vec::with_capacity(count);
    let mut labels = ianomaly.map(|_| Vec::with_capacity(count));
    for row in 0..count {
        let line = lines
            .next()
            .transpose()
            .map_err(|e| Error::io(path.display().to_string(), e))?
            .ok_or_else(|| parse_err(path, format!("expected {count} vertices, got {row}")))?;
        let fields: Vec<f64> = line
            .split_whitespace()
            .map(|t| t.parse::<f64>())
            .collect::<std::result::Result<_, _>>()
            .map_err(|_| parse_err(path, format!("bad vertex row {row}")))?;
        if fields.len() < properties.len() {
            return Err(parse_err(path, format!("short vertex row {row}")));
        }
        let p: Point3 = [fields[ix], fields[iy], fields[iz]];
        if !p.iter().all(|c| c.is_finite()) {
            return Err(parse_err(path, format!("non-finite coordinate in row {row}")));
        }
        points.push(p);
        if let (Some(i), Some(l)) = (ianomaly, labels.as_mut()) {
            l.push(if fields[i] != 0.0 { 1 } else { 0 });
        }
    }

    let class_name = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    PointCloud::new(points, labels, class_name)
}

/// Writes an ASCII PLY file; labels, when present, become a `uchar anomaly`
/// property.
pub fn write_ply(path: &Path, cloud: &PointCloud) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path.display().to_string(), e))?;
    let mut w = BufWriter::new(file);
    let write = |w: &mut BufWriter<File>, s: String| -> Result<()> {
        w.write_all(s.as_bytes())
            .map_err(|e| Error::io(path.display().to_string(), e))
    };
    write(&mut w, "ply\nformat ascii 1.0\n".into())?;
    write(&mut w, format!("element vertex {}\n", cloud.len()))?;
    write(
        &mut w,
        "property double x\nproperty double y\nproperty double z\n".into(),
    )?;
    if cloud.labels.is_some() {
        write(&mut w, "property uchar anomaly\n".into())?;
    }
    write(&mut w, "end_header\n".into())?;
    for (i, p) in cloud.points.iter().enumerate() {
        match &cloud.labels {
            Some(l) => write(&mut w, format!("{:.17e} {:.17e} {:.17e} {}\n", p[0], p[1], p[2], l[i]))?,
            None => write(&mut w, format!("{:.17e} {:.17e} {:.17e}\n", p[0], p[1], p[2]))?,
        }
    }
    w.flush().map_err(|e| Error::io(path.display().to_string(), e))
}

/// Writes a score-colored PLY: per-vertex float `score` plus an 8-bit heat
/// color (blue = 0, red = 1).
pub fn write_ply_scored(path: &Path, cloud: &PointCloud, scores: &[f64]) -> Result<()> {
    if scores.len() != cloud.len() {
        return Err(Error::InvalidArgument(format!(
            "score count {} does not match point count {}",
            scores.len(),
            cloud.len()
        )));
    }
    let file = File::create(path).map_err(|e| Error::io(path.display().to_string(), e))?;
    let mut w = BufWriter::new(file);
    let mut out = String::new();
    out.push_str("ply\nformat ascii 1.0\n");
    out.push_str(&format!("element vertex {}\n", cloud.len()));
    out.push_str("property double x\nproperty double y\nproperty double z\n");
    out.push_str("property float score\n");
    out.push_str("property uchar red\nproperty uchar green\nproperty uchar blue\n");
    out.push_str("end_header\n");
    for (p, &s) in cloud.points.iter().zip(scores) {
        let s = s.clamp(0.0, 1.0);
        let r = (s * 255.0).round() as u8;
        let g = ((1.0 - (2.0 * s - 1.0).abs()) * 200.0).round() as u8;
        let b = ((1.0 - s) * 255.0).round() as u8;
        out.push_str(&format!(
            "{:.17e} {:.17e} {:.17e} {:.9} {} {} {}\n",
            p[0], p[1], p[2], s, r, g, b
        ));
    }
    w.write_all(out.as_bytes())
        .map_err(|e| Error::io(path.display().to_string(), e))?;
    w.flush().map_err(|e| Error::io(path.display().to_string(), e))
}

/// Reads a whitespace-separated text format: three coordinates per line, with
/// an optional fourth 0/1 label column. Non-numeric lines (e.g. PCD-style
/// headers) are skipped.
pub fn read_xyz(path: &Path) -> Result<PointCloud> {
    let file = File::open(path).map_err(|e| Error::io(path.display().to_string(), e))?;
    let mut points = Vec::new();
    let mut labels = Vec::new();
    let mut any_label = false;
    for (row, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| Error::io(path.display().to_string(), e))?;
        let fields: Vec<&str> = line.split_whitespace().collect();
        if fields.len() < 3 {
            continue;
        }
        let parsed: Option<Vec<f64>> = fields.iter().map(|t| t.parse::<f64>().ok()).collect();
        let Some(values) = parsed else { continue };
        let p: Point3 = [values[0], values[1], values[2]];
        if !p.iter().all(|c| c.is_finite()) {
            return Err(parse_err(path, format!("non-finite coordinate in line {row}")));
        }
        points.push(p);
        if values.len() >= 4 {
            any_label = true;
            labels.push(if values[3] != 0.0 { 1 } else { 0 });
        } else {
            labels.push(0);
        }
    }
    if points.is_empty() {
        return Err(parse_err(path, "no points found"));
    }
    let class_name = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    PointCloud::new(points, any_label.then_some(labels), class_name)
}

/// Writes the plain XYZ text format (label column appended when present).
pub fn write_xyz(path: &Path, cloud: &PointCloud) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path.display().to_string(), e))?;
    let mut w = BufWriter::new(file);
    let mut out = String::new();
    for (i, p) in cloud.points.iter().enumerate() {
        match &cloud.labels {
            Some(l) => out.push_str(&format!("{:.17e} {:.17e} {:.17e} {}\n", p[0], p[1], p[2], l[i])),
            None => out.push_str(&format!("{:.17e} {:.17e} {:.17e}\n", p[0], p[1], p[2])),
        }
    }
    w.write_all(out.as_bytes())
        .map_err(|e| Error::io(path.display().to_string(), e))?;
    w.flush().map_err(|e| Error::io(path.display().to_string(), e))
}

/// Reads a cloud by extension: `.ply` via the PLY parser, anything else via
/// the tolerant text reader.
pub fn read_cloud(path: &Path) -> Result<PointCloud> {
    match path.extension().and_then(|e| e.to_str()) {
        Some("ply") => read_ply(path),
        _ => read_xyz(path),
    }
}
