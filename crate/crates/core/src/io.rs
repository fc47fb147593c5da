//! The `.nvbm` text format.
//!
//! ```text
//! nvbm 1
//! <nv> <ne>
//! x y                                  (nv lines)
//! v0 v1 v2 gen ancestor red_son(0|1)   (ne lines)
//! ```
//!
//! Coordinates are written in the shortest form that parses back to the same
//! `f64`. Blank lines and lines starting with `#` are skipped on input.

use std::fmt::Write as _;
use std::path::Path;

use crate::error::{Error, Result};
use crate::mesh::{Element, Mesh, Vertex, Violation};

pub fn to_nvbm(mesh: &Mesh) -> String {
    let mut out = String::with_capacity(32 * (mesh.num_nodes() + mesh.num_elements()) + 16);
    out.push_str("nvbm 1\n");
    let _ = writeln!(out, "{} {}", mesh.num_nodes(), mesh.num_elements());
    for v in mesh.vertices() {
        let _ = writeln!(out, "{} {}", v.x, v.y);
    }
    for el in mesh.elements() {
        let _ =
            writeln!(out, "{} {} {} {} {} {}", el.v[0], el.v[1], el.v[2], el.gen, el.ancestor, u8::from(el.red_son));
    }
    out
}

fn perr<T>(line: usize, message: impl Into<String>) -> Result<T> {
    Err(Error::Parse { line, message: message.into() })
}

fn field<T: std::str::FromStr>(tok: Option<&str>, line: usize, what: &str) -> Result<T> {
    match tok {
        None => perr(line, format!("missing {what}")),
        Some(s) => s.parse().or_else(|_| perr(line, format!("cannot parse {what} from {s:?}"))),
    }
}

/// Parses a mesh and rejects anything that is not a valid conforming triangulation.
pub fn parse_nvbm(text: &str) -> Result<Mesh> {
    let mut lines =
        text.lines().enumerate().map(|(i, l)| (i + 1, l.trim())).filter(|(_, l)| !l.is_empty() && !l.starts_with('#'));
    let last_line = text.lines().count().max(1);

    let (ln, header) = lines.next().ok_or(Error::Parse { line: 1, message: "empty input".into() })?;
    if header.split_whitespace().collect::<Vec<_>>() != ["nvbm", "1"] {
        return perr(ln, format!("expected header `nvbm 1`, found {header:?}"));
    }
    let Some((ln, counts)) = lines.next() else {
        return perr(last_line, "missing counts line");
    };
    let mut toks = counts.split_whitespace();
    let nv: usize = field(toks.next(), ln, "vertex count")?;
    let ne: usize = field(toks.next(), ln, "element count")?;
    if toks.next().is_some() {
        return perr(ln, "trailing tokens after counts");
    }

    let mut vertices = Vec::with_capacity(nv);
    let mut vertex_lines = Vec::with_capacity(nv);
    for _ in 0..nv {
        let Some((ln, l)) = lines.next() else {
            return perr(last_line, format!("expected {nv} vertices, found {}", vertices.len()));
        };
        let mut toks = l.split_whitespace();
        let x: f64 = field(toks.next(), ln, "x coordinate")?;
        let y: f64 = field(toks.next(), ln, "y coordinate")?;
        if toks.next().is_some() {
            return perr(ln, "trailing tokens after vertex");
        }
        if !x.is_finite() || !y.is_finite() {
            return perr(ln, "non-finite coordinate");
        }
        vertices.push(Vertex::new(x, y));
        vertex_lines.push(ln);
    }

    let mut elements = Vec::with_capacity(ne);
    let mut element_lines = Vec::with_capacity(ne);
    for _ in 0..ne {
        let Some((ln, l)) = lines.next() else {
            return perr(last_line, format!("expected {ne} elements, found {}", elements.len()));
        };
        let mut toks = l.split_whitespace();
        let v0: usize = field(toks.next(), ln, "v0")?;
        let v1: usize = field(toks.next(), ln, "v1")?;
        let v2: usize = field(toks.next(), ln, "v2")?;
        let gen: u32 = field(toks.next(), ln, "gen")?;
        let ancestor: usize = field(toks.next(), ln, "ancestor")?;
        let red: u8 = field(toks.next(), ln, "red_son flag")?;
        if red > 1 {
            return perr(ln, "red_son flag must be 0 or 1");
        }
        if toks.next().is_some() {
            return perr(ln, "trailing tokens after element");
        }
        if let Some(bad) = [v0, v1, v2].into_iter().find(|&n| n >= nv) {
            return perr(ln, format!("node {bad} out of range (mesh has {nv} nodes)"));
        }
        elements.push(Element { v: [v0, v1, v2], gen, ancestor, red_son: red == 1 });
        element_lines.push(ln);
    }
    if let Some((ln, _)) = lines.next() {
        return perr(ln, "unexpected content after the last element");
    }

    let mesh = Mesh::from_parts(vertices, elements)?;
    let report = mesh.validate();
    if let Some(v) = report.violations.first() {
        let (line, what) = match v {
            Violation::NonFiniteVertex { node } => (vertex_lines[*node], format!("{v:?}")),
            Violation::DuplicateVertex { second, .. } => (vertex_lines[*second], format!("{v:?}")),
            Violation::BadElement { elem, .. }
            | Violation::Inverted { elem }
            | Violation::Degenerate { elem }
            | Violation::HangingNode { elem, .. } => (element_lines[*elem], format!("{v:?}")),
            Violation::OverSharedEdge { elems, .. } => (element_lines[elems[2]], format!("{v:?}")),
        };
        return perr(line, format!("mesh is not conforming: {what}"));
    }
    Ok(mesh)
}

pub fn read_nvbm(path: impl AsRef<Path>) -> Result<Mesh> {
    parse_nvbm(&std::fs::read_to_string(path)?)
}

pub fn write_nvbm(path: impl AsRef<Path>, mesh: &Mesh) -> Result<()> {
    std::fs::write(path, to_nvbm(mesh))?;
    Ok(())
}
