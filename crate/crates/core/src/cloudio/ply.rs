use std::path::Path;

use nalgebra::{Point3, Vector3};

use super::{fmt_coord, parse_coord, PointCloud};
use crate::error::{Error, Result};

struct Element {
    name: String,
    count: usize,
    properties: Vec<String>,
}

pub(super) fn parse(path: &Path, text: &str) -> Result<PointCloud> {
    let err = |line: usize, message: String| Error::Parse {
        path: path.to_path_buf(),
        line,
        message,
    };
    let mut lines = text.lines().enumerate().map(|(i, l)| (i + 1, l));
    let mut elements: Vec<Element> = Vec::new();
    let mut saw_format = false;
    let mut header_done = false;

    // magic line already checked by the caller
    lines.next();
    for (no, line) in lines.by_ref() {
        let mut tok = line.split_whitespace();
        match tok.next() {
            None | Some("comment") | Some("obj_info") => {}
            Some("format") => {
                let kind = tok.next().unwrap_or("");
                if kind != "ascii" {
                    return Err(Error::UnsupportedFormat(format!(
                        "{}: PLY format `{kind}` (only ascii is supported)",
                        path.display()
                    )));
                }
                saw_format = true;
            }
            Some("element") => {
                let name = tok.next().ok_or_else(|| err(no, "element without name".into()))?;
                let count = tok
                    .next()
                    .and_then(|c| c.parse().ok())
                    .ok_or_else(|| err(no, "element without a valid count".into()))?;
                elements.push(Element {
                    name: name.to_string(),
                    count,
                    properties: Vec::new(),
                });
            }
            Some("property") => {
                let el = elements
                    .last_mut()
                    .ok_or_else(|| err(no, "property before any element".into()))?;
                let words: Vec<&str> = tok.collect();
                if words.first() == Some(&"list") {
                    if el.name == "vertex" {
                        return Err(err(no, "list properties on vertices are not supported".into()));
                    }
                    el.properties.push(words.last().unwrap_or(&"").to_string());
                } else {
                    let name = words.get(1).ok_or_else(|| err(no, "property without name".into()))?;
                    el.properties.push(name.to_string());
                }
            }
            Some("end_header") => {
                header_done = true;
                break;
            }
            Some(other) => return Err(err(no, format!("unexpected header keyword `{other}`"))),
        }
    }
    if !saw_format {
        return Err(err(1, "missing `format` line".into()));
    }
    if !header_done {
        return Err(err(text.lines().count(), "missing `end_header`".into()));
    }

    let mut points = Vec::new();
    let mut normals = Vec::new();
    let mut with_normals = false;
    for el in &elements {
        if el.name != "vertex" {
            // skip records of elements we do not interpret
            for _ in 0..el.count {
                if lines.next().is_none() {
                    return Err(err(text.lines().count(), format!("truncated `{}` element", el.name)));
                }
            }
            continue;
        }
        let col = |n: &str| el.properties.iter().position(|p| p == n);
        let (Some(x), Some(y), Some(z)) = (col("x"), col("y"), col("z")) else {
            return Err(err(1, "vertex element lacks x, y, z properties".into()));
        };
        let normal_cols = match (col("nx"), col("ny"), col("nz")) {
            (Some(a), Some(b), Some(c)) => Some([a, b, c]),
            (None, None, None) => None,
            _ => return Err(err(1, "partial normal properties (need nx, ny, nz)".into())),
        };
        with_normals = normal_cols.is_some();
        points.reserve(el.count);
        for _ in 0..el.count {
            let (no, line) = lines
                .next()
                .ok_or_else(|| err(text.lines().count(), "fewer vertex records than declared".into()))?;
            let fields: Vec<&str> = line.split_whitespace().collect();
            if fields.len() < el.properties.len() {
                return Err(err(
                    no,
                    format!("expected {} values, found {}", el.properties.len(), fields.len()),
                ));
            }
            let v = |c: usize| parse_coord(path, no, fields[c]);
            points.push(Point3::new(v(x)?, v(y)?, v(z)?));
            if let Some([a, b, c]) = normal_cols {
                normals.push(read_normal(path, no, v(a)?, v(b)?, v(c)?)?);
            }
        }
    }
    let normals = with_normals.then_some(normals);
    Ok(PointCloud::from_parts_unchecked(points, normals))
}

pub(super) fn read_normal(path: &Path, line: usize, x: f64, y: f64, z: f64) -> Result<Vector3<f64>> {
    let n = Vector3::new(x, y, z);
    let len = n.norm();
    if len < 1e-12 {
        return Err(Error::Parse {
            path: path.to_path_buf(),
            line,
            message: "zero-length normal".into(),
        });
    }
    Ok(n / len)
}

pub(super) fn render(cloud: &PointCloud) -> String {
    let mut out = String::with_capacity(64 + cloud.len() * 48);
    out.push_str("ply\nformat ascii 1.0\n");
    out.push_str(&format!("element vertex {}\n", cloud.len()));
    out.push_str("property double x\nproperty double y\nproperty double z\n");
    if cloud.has_normals() {
        out.push_str("property double nx\nproperty double ny\nproperty double nz\n");
    }
    out.push_str("end_header\n");
    write_records(&mut out, cloud);
    out
}

pub(super) fn write_records(out: &mut String, cloud: &PointCloud) {
    for (i, p) in cloud.points().iter().enumerate() {
        fmt_coord(out, p.x);
        out.push(' ');
        fmt_coord(out, p.y);
        out.push(' ');
        fmt_coord(out, p.z);
        if let Some(ns) = cloud.normals() {
            for v in ns[i].iter() {
                out.push(' ');
                fmt_coord(out, *v);
            }
        }
        out.push('\n');
    }
}
