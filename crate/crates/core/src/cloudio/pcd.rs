use std::path::Path;

use nalgebra::Point3;

use super::ply::{read_normal, write_records};
use super::{parse_coord, PointCloud};
use crate::error::{Error, Result};

pub(super) fn parse(path: &Path, text: &str) -> Result<PointCloud> {
    let err = |line: usize, message: String| Error::Parse {
        path: path.to_path_buf(),
        line,
        message,
    };
    let mut lines = text.lines().enumerate().map(|(i, l)| (i + 1, l));
    // Column names, expanded by COUNT.
    let mut fields: Vec<String> = Vec::new();
    let mut counts: Vec<usize> = Vec::new();
    let mut points_decl: Option<usize> = None;
    let mut width_height: (Option<usize>, Option<usize>) = (None, None);
    let mut data_line = None;

    for (no, line) in lines.by_ref() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let mut tok = line.split_whitespace();
        let key = tok.next().unwrap_or("");
        let rest: Vec<&str> = tok.collect();
        let parse_usize = |s: Option<&&str>| -> Result<usize> {
            s.and_then(|v| v.parse().ok())
                .ok_or_else(|| err(no, format!("invalid {key} value")))
        };
        match key {
            "VERSION" | "SIZE" | "TYPE" | "VIEWPOINT" => {}
            "FIELDS" => fields = rest.iter().map(|s| s.to_string()).collect(),
            "COUNT" => {
                counts = rest
                    .iter()
                    .map(|c| c.parse().map_err(|_| err(no, format!("invalid COUNT `{c}`"))))
                    .collect::<Result<_>>()?
            }
            "WIDTH" => width_height.0 = Some(parse_usize(rest.first())?),
            "HEIGHT" => width_height.1 = Some(parse_usize(rest.first())?),
            "POINTS" => points_decl = Some(parse_usize(rest.first())?),
            "DATA" => {
                let kind = rest.first().copied().unwrap_or("");
                if kind != "ascii" {
                    return Err(Error::UnsupportedFormat(format!(
                        "{}: PCD DATA `{kind}` (only ascii is supported)",
                        path.display()
                    )));
                }
                data_line = Some(no);
                break;
            }
            other => return Err(err(no, format!("unexpected header keyword `{other}`"))),
        }
    }
    let data_line = data_line.ok_or_else(|| err(text.lines().count(), "missing DATA line".into()))?;
    if fields.is_empty() {
        return Err(err(data_line, "missing FIELDS line".into()));
    }
    if counts.is_empty() {
        counts = vec![1; fields.len()];
    }
    if counts.len() != fields.len() {
        return Err(err(data_line, "COUNT and FIELDS lengths differ".into()));
    }
    let mut columns: Vec<&str> = Vec::new();
    for (f, &c) in fields.iter().zip(&counts) {
        for _ in 0..c {
            columns.push(f.as_str());
        }
    }
    let col = |n: &str| columns.iter().position(|c| *c == n);
    let (Some(x), Some(y), Some(z)) = (col("x"), col("y"), col("z")) else {
        return Err(err(data_line, "FIELDS lacks x, y, z".into()));
    };
    let normal_cols = match (col("normal_x"), col("normal_y"), col("normal_z")) {
        (Some(a), Some(b), Some(c)) => Some([a, b, c]),
        (None, None, None) => None,
        _ => return Err(err(data_line, "partial normal fields".into())),
    };
    let expected = match (points_decl, width_height) {
        (Some(n), _) => n,
        (None, (Some(w), Some(h))) => w * h,
        _ => return Err(err(data_line, "missing POINTS (or WIDTH/HEIGHT)".into())),
    };

    let mut points = Vec::with_capacity(expected);
    let mut normals = Vec::new();
    for (no, line) in lines {
        let vals: Vec<&str> = line.split_whitespace().collect();
        if vals.is_empty() {
            continue;
        }
        if points.len() == expected {
            return Err(err(no, "more records than POINTS declares".into()));
        }
        if vals.len() < columns.len() {
            return Err(err(no, format!("expected {} values, found {}", columns.len(), vals.len())));
        }
        let v = |c: usize| parse_coord(path, no, vals[c]);
        points.push(Point3::new(v(x)?, v(y)?, v(z)?));
        if let Some([a, b, c]) = normal_cols {
            normals.push(read_normal(path, no, v(a)?, v(b)?, v(c)?)?);
        }
    }
    if points.len() != expected {
        return Err(err(
            text.lines().count(),
            format!("POINTS declares {expected}, found {}", points.len()),
        ));
    }
    Ok(PointCloud::from_parts_unchecked(
        points,
        normal_cols.map(|_| normals),
    ))
}

pub(super) fn render(cloud: &PointCloud) -> String {
    let n = cloud.len();
    let mut out = String::with_capacity(256 + n * 48);
    out.push_str("# .PCD v0.7 - Point Cloud Data file format\nVERSION 0.7\n");
    if cloud.has_normals() {
        out.push_str("FIELDS x y z normal_x normal_y normal_z\nSIZE 8 8 8 8 8 8\nTYPE F F F F F F\nCOUNT 1 1 1 1 1 1\n");
    } else {
        out.push_str("FIELDS x y z\nSIZE 8 8 8\nTYPE F F F\nCOUNT 1 1 1\n");
    }
    out.push_str(&format!(
        "WIDTH {n}\nHEIGHT 1\nVIEWPOINT 0 0 0 1 0 0 0\nPOINTS {n}\nDATA ascii\n"
    ));
    write_records(&mut out, cloud);
    out
}
