//! Inspection exports: ASCII PLY clouds, OBJ meshes with a part-label
//! sidecar, PGM masks, and CSV tables for elevation maps, candidates and
//! alignment results.

use std::io::{BufRead, Write};

use nalgebra::Vector3;

use crate::alignment::AlignmentResult;
use crate::elevation::ElevationMap;
use crate::error::{Error, Result};
use crate::geometry::{PointCloud, PointLabel};
use crate::scene::{BinaryMask, LabeledMesh, PartLabel};
use crate::viewpoints::CandidateView;

/// ASCII PLY with `x y z`, then `nx ny nz` and `label` (1 target, 0
/// background) when present. Missing normals are written as `nan`.
pub fn write_ply<W: Write>(mut w: W, cloud: &PointCloud) -> Result<()> {
    writeln!(w, "ply\nformat ascii 1.0\nelement vertex {}", cloud.len())?;
    writeln!(w, "property double x\nproperty double y\nproperty double z")?;
    if cloud.normals.is_some() {
        writeln!(w, "property double nx\nproperty double ny\nproperty double nz")?;
    }
    if cloud.labels.is_some() {
        writeln!(w, "property uchar label")?;
    }
    writeln!(w, "end_header")?;
    for (i, p) in cloud.points.iter().enumerate() {
        write!(w, "{} {} {}", p.x, p.y, p.z)?;
        if cloud.normals.is_some() {
            match cloud.normal(i) {
                Some(n) => write!(w, " {} {} {}", n.x, n.y, n.z)?,
                None => write!(w, " nan nan nan")?,
            }
        }
        if let Some(l) = cloud.label(i) {
            write!(w, " {}", u8::from(l == PointLabel::Target))?;
        }
        writeln!(w)?;
    }
    Ok(())
}

/// Reads the subset written by [`write_ply`].
pub fn read_ply<R: BufRead>(r: R) -> Result<PointCloud> {
    let mut lines = r.lines();
    let mut next = || -> Result<String> {
        lines
            .next()
            .ok_or_else(|| Error::Parse("unexpected end of PLY".into()))?
            .map_err(Error::from)
    };
    if next()?.trim() != "ply" {
        return Err(Error::Parse("missing PLY magic".into()));
    }
    let mut count = None;
    let mut props = Vec::new();
    loop {
        let line = next()?;
        let tok: Vec<&str> = line.split_whitespace().collect();
        match tok.as_slice() {
            ["end_header"] => break,
            ["format", "ascii", _] | ["comment", ..] => {}
            ["format", f, ..] => return Err(Error::Parse(format!("unsupported PLY format {f}"))),
            ["element", "vertex", n] => {
                count = Some(n.parse::<usize>().map_err(|e| Error::Parse(e.to_string()))?);
            }
            ["property", _, name] => props.push(name.to_string()),
            _ => return Err(Error::Parse(format!("unexpected PLY header line '{line}'"))),
        }
    }
    let n = count.ok_or_else(|| Error::Parse("PLY without vertex element".into()))?;
    let has = |name: &str| props.iter().position(|p| p == name);
    let (ix, iy, iz) = match (has("x"), has("y"), has("z")) {
        (Some(a), Some(b), Some(c)) => (a, b, c),
        _ => return Err(Error::Parse("PLY needs x, y, z".into())),
    };
    let normal_idx = match (has("nx"), has("ny"), has("nz")) {
        (Some(a), Some(b), Some(c)) => Some((a, b, c)),
        _ => None,
    };
    let label_idx = has("label");

    let mut points = Vec::with_capacity(n);
    let mut normals = Vec::new();
    let mut labels = Vec::new();
    for _ in 0..n {
        let line = next()?;
        let vals: Vec<f64> = line
            .split_whitespace()
            .map(|t| t.parse::<f64>().map_err(|e| Error::Parse(format!("'{t}': {e}"))))
            .collect::<Result<_>>()?;
        if vals.len() != props.len() {
            return Err(Error::Parse(format!("PLY row has {} values, expected {}", vals.len(), props.len())));
        }
        points.push(Vector3::new(vals[ix], vals[iy], vals[iz]));
        if let Some((a, b, c)) = normal_idx {
            let v = Vector3::new(vals[a], vals[b], vals[c]);
            normals.push(v.iter().all(|x| x.is_finite()).then_some(v));
        }
        if let Some(l) = label_idx {
            labels.push(if vals[l] != 0.0 { PointLabel::Target } else { PointLabel::Background });
        }
    }
    let mut cloud = match label_idx {
        Some(_) => PointCloud::with_labels(points, labels)?,
        None => PointCloud::new(points),
    };
    if normal_idx.is_some() {
        cloud.set_normals(normals)?;
    }
    Ok(cloud)
}

/// Wavefront OBJ of vertices and triangles (1-based indices).
pub fn write_obj<W: Write>(mut w: W, mesh: &LabeledMesh) -> Result<()> {
    for v in &mesh.vertices {
        writeln!(w, "v {} {} {}", v.x, v.y, v.z)?;
    }
    for f in &mesh.faces {
        writeln!(w, "f {} {} {}", f[0] + 1, f[1] + 1, f[2] + 1)?;
    }
    Ok(())
}

/// One part index per line, in vertex order.
pub fn write_part_labels<W: Write>(mut w: W, mesh: &LabeledMesh) -> Result<()> {
    for p in &mesh.part_of {
        writeln!(w, "{}", p.index())?;
    }
    Ok(())
}

pub fn read_part_labels<R: BufRead>(r: R) -> Result<Vec<PartLabel>> {
    r.lines()
        .map(|line| {
            let line = line?;
            let i: usize = line.trim().parse().map_err(|e| Error::Parse(format!("part label '{line}': {e}")))?;
            PartLabel::ALL
                .get(i)
                .copied()
                .ok_or_else(|| Error::Parse(format!("part label {i} out of range")))
        })
        .collect()
}

/// Binary PGM (P5), 255 inside the mask, one pixel per ray-grid cell.
pub fn write_pgm<W: Write>(mut w: W, mask: &BinaryMask) -> Result<()> {
    write!(w, "P5\n{} {}\n255\n", mask.width, mask.height)?;
    let bytes: Vec<u8> = mask.data.iter().map(|&b| if b { 255 } else { 0 }).collect();
    w.write_all(&bytes)?;
    Ok(())
}

/// Height grid: one row per `j`, one column per `i`, empty where unknown.
pub fn write_elevation_csv<W: Write>(w: W, map: &ElevationMap) -> Result<()> {
    let mut wr = csv::WriterBuilder::new().has_headers(false).from_writer(w);
    for j in 0..map.size {
        wr.write_record((0..map.size).map(|i| map.height(i, j).map(|h| h.to_string()).unwrap_or_default()))?;
    }
    wr.flush()?;
    Ok(())
}

/// Validity grid matching [`write_elevation_csv`], 1 for known cells.
pub fn write_validity_csv<W: Write>(w: W, map: &ElevationMap) -> Result<()> {
    let mut wr = csv::WriterBuilder::new().has_headers(false).from_writer(w);
    for j in 0..map.size {
        wr.write_record((0..map.size).map(|i| u8::from(map.is_valid(i, j)).to_string()))?;
    }
    wr.flush()?;
    Ok(())
}

fn matrix_fields(m: &nalgebra::Matrix4<f64>) -> Vec<String> {
    (0..4).flat_map(|r| (0..4).map(move |c| m[(r, c)].to_string())).collect()
}

const MATRIX_HEADER: [&str; 16] = [
    "m00", "m01", "m02", "m03", "m10", "m11", "m12", "m13", "m20", "m21", "m22", "m23", "m30", "m31", "m32", "m33",
];

/// One row per candidate: id, base position and yaw, pitch, and the camera
/// pose as a row-major 4x4.
pub fn write_candidates_csv<W: Write>(w: W, cands: &[CandidateView]) -> Result<()> {
    let mut wr = csv::Writer::from_writer(w);
    let mut header = vec!["position", "pitch", "base_x", "base_y", "base_z", "yaw", "alpha"];
    header.extend(MATRIX_HEADER);
    wr.write_record(&header)?;
    for c in cands {
        let b = c.base.translation;
        let mut row = vec![
            c.id.position.to_string(),
            c.id.pitch.to_string(),
            b.x.to_string(),
            b.y.to_string(),
            b.z.to_string(),
            c.base.yaw().to_string(),
            c.alpha.to_string(),
        ];
        row.extend(matrix_fields(&c.cam.to_matrix()));
        wr.write_record(&row)?;
    }
    wr.flush()?;
    Ok(())
}

/// Residual per ICP iteration.
pub fn write_residuals_csv<W: Write>(w: W, result: &AlignmentResult) -> Result<()> {
    let mut wr = csv::Writer::from_writer(w);
    wr.write_record(["iteration", "residual"])?;
    for (i, r) in result.residual_history.iter().enumerate() {
        wr.write_record([i.to_string(), r.to_string()])?;
    }
    wr.flush()?;
    Ok(())
}

/// `T_icp` as a row-major 4x4 with the flags and, when known, the MPVPE.
pub fn write_alignment_summary_csv<W: Write>(w: W, result: &AlignmentResult, mpvpe: Option<f64>) -> Result<()> {
    let mut wr = csv::Writer::from_writer(w);
    let mut header: Vec<&str> = MATRIX_HEADER.to_vec();
    header.extend(["skipped", "degenerate", "source_vertices", "mpvpe"]);
    wr.write_record(&header)?;
    let mut row = matrix_fields(&result.t_icp.to_matrix());
    row.extend([
        result.skipped.to_string(),
        result.degenerate.to_string(),
        result.source_vertices.len().to_string(),
        mpvpe.map(|v| v.to_string()).unwrap_or_default(),
    ]);
    wr.write_record(&row)?;
    wr.flush()?;
    Ok(())
}
