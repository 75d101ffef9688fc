//! Landmark and template CSV files.
//!
//! Landmark files hold one `name,x,y` line per landmark, in contour order, with
//! pixel coordinates (origin at the top-left pixel center, y down). Blank lines
//! and lines starting with `#` are ignored, and an optional `name,x,y` header is
//! accepted. Coordinates are written with six decimals.
//!
//! Template files hold the closed outline, one `x,y,anchor` line per vertex;
//! `anchor` names the landmark a vertex corresponds to and is empty otherwise.
//! Template coordinates are written in shortest round-trip form.

use std::collections::HashSet;
use std::path::Path;

use liplab_core::maskgen::MaskError;
use liplab_core::{LandmarkSet, Point, TemplateContour};

use crate::error::{read_text, write_file, FormatError, IoError};

/// Landmarks exactly as listed in a file.
#[derive(Debug, Clone, PartialEq)]
pub struct LandmarkFile {
    pub names: Vec<String>,
    pub points: Vec<Point>,
}

impl LandmarkFile {
    pub fn from_set(set: &LandmarkSet) -> Self {
        Self {
            names: set.names().to_vec(),
            points: set.points().to_vec(),
        }
    }

    pub fn into_set(self) -> Result<LandmarkSet, MaskError> {
        LandmarkSet::new(self.names, self.points)
    }

    /// Rejects points outside `[0, width) x [0, height)`.
    pub fn check_bounds(&self, height: usize, width: usize) -> Result<(), FormatError> {
        for (name, p) in self.names.iter().zip(&self.points) {
            if !(p.x >= 0.0 && p.y >= 0.0 && p.x < width as f64 && p.y < height as f64) {
                return Err(FormatError::other(format!(
                    "landmark {name} at ({}, {}) lies outside the {height}x{width} image",
                    p.x, p.y
                )));
            }
        }
        Ok(())
    }
}

/// Data lines with their 1-based line numbers.
fn data_lines(text: &str) -> impl Iterator<Item = (usize, &str)> {
    text.lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l.trim()))
        .filter(|(_, l)| !l.is_empty() && !l.starts_with('#'))
}

fn coord(line: usize, field: &str, name: &str) -> Result<f64, FormatError> {
    let v: f64 = field
        .trim()
        .parse()
        .map_err(|_| FormatError::line(line, format!("non-numeric {name} {:?}", field.trim())))?;
    if !v.is_finite() {
        return Err(FormatError::line(line, format!("non-finite {name}")));
    }
    Ok(v)
}

pub fn parse_landmarks(text: &str) -> Result<LandmarkFile, FormatError> {
    let mut out = LandmarkFile {
        names: Vec::new(),
        points: Vec::new(),
    };
    let mut seen = HashSet::new();
    for (k, (line, l)) in data_lines(text).enumerate() {
        if k == 0 && l.replace(' ', "") == "name,x,y" {
            continue;
        }
        let fields: Vec<&str> = l.split(',').collect();
        let [name, x, y] = fields[..] else {
            return Err(FormatError::line(
                line,
                format!("expected name,x,y, got {} fields", fields.len()),
            ));
        };
        let name = name.trim();
        if name.is_empty() {
            return Err(FormatError::line(line, "empty landmark name"));
        }
        if !seen.insert(name.to_string()) {
            return Err(FormatError::line(
                line,
                format!("duplicate landmark name {name:?}"),
            ));
        }
        out.names.push(name.to_string());
        out.points
            .push(Point::new(coord(line, x, "x")?, coord(line, y, "y")?));
    }
    if out.names.is_empty() {
        return Err(FormatError::other("no landmarks"));
    }
    Ok(out)
}

pub fn format_landmarks(lm: &LandmarkFile) -> String {
    let mut s = String::new();
    for (name, p) in lm.names.iter().zip(&lm.points) {
        s.push_str(&format!("{name},{:.6},{:.6}\n", p.x, p.y));
    }
    s
}

pub fn read_landmarks(path: &Path) -> Result<LandmarkFile, IoError> {
    parse_landmarks(&read_text(path)?).map_err(|e| IoError::format(path, e))
}

pub fn write_landmarks(path: &Path, lm: &LandmarkFile) -> Result<(), IoError> {
    write_file(path, format_landmarks(lm).as_bytes())
}

pub fn parse_template(text: &str) -> Result<TemplateContour, FormatError> {
    let mut vertices = Vec::new();
    let mut anchors = Vec::new();
    let mut names = Vec::new();
    let mut seen = HashSet::new();
    for (k, (line, l)) in data_lines(text).enumerate() {
        if k == 0 && l.replace(' ', "") == "x,y,anchor" {
            continue;
        }
        let fields: Vec<&str> = l.split(',').collect();
        let [x, y, anchor] = fields[..] else {
            return Err(FormatError::line(
                line,
                format!("expected x,y,anchor, got {} fields", fields.len()),
            ));
        };
        let anchor = anchor.trim();
        if !anchor.is_empty() {
            if !seen.insert(anchor.to_string()) {
                return Err(FormatError::line(
                    line,
                    format!("duplicate anchor {anchor:?}"),
                ));
            }
            anchors.push(vertices.len());
            names.push(anchor.to_string());
        }
        vertices.push(Point::new(coord(line, x, "x")?, coord(line, y, "y")?));
    }
    if vertices.is_empty() {
        return Err(FormatError::other("no template vertices"));
    }
    TemplateContour::new(vertices, anchors, names).map_err(|e| FormatError::other(e.to_string()))
}

pub fn format_template(t: &TemplateContour) -> String {
    let mut s = String::from("x,y,anchor\n");
    let mut next = 0;
    for (i, p) in t.vertices().iter().enumerate() {
        let anchor = if t.anchor_indices().get(next) == Some(&i) {
            next += 1;
            t.anchor_names()[next - 1].as_str()
        } else {
            ""
        };
        s.push_str(&format!("{},{},{anchor}\n", p.x, p.y));
    }
    s
}

pub fn read_template(path: &Path) -> Result<TemplateContour, IoError> {
    parse_template(&read_text(path)?).map_err(|e| IoError::format(path, e))
}

pub fn write_template(path: &Path, t: &TemplateContour) -> Result<(), IoError> {
    write_file(path, format_template(t).as_bytes())
}

/// The shipped canonical upper-lip template.
pub const DEFAULT_TEMPLATE: &str = include_str!("../data/upper_lip_template.csv");

pub fn default_template() -> TemplateContour {
    parse_template(DEFAULT_TEMPLATE).expect("shipped template parses")
}
