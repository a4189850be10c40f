//! Plain-text mesh format.
//!
//! ```text
//! hosfem-mesh 1
//! order 4
//! elements 3
//! global_nodes 325
//! element 0 parallelepiped
//! 0 0 0
//! ... (8 vertex rows)
//! element 1 trilinear
//! ...
//! connectivity
//! <N1^3 global ids for element 0>
//! <N1^3 global ids for element 1>
//! ...
//! ```
//!
//! Blank lines and lines starting with `#` are ignored. Coordinates are
//! written with Rust's shortest round-trip formatting, so a write/read cycle
//! is lossless.

use std::fmt::Write as _;
use std::io::{BufRead, Write};

use super::{Element, ElementKind, Mesh, Vertices};
use crate::error::{HosfemError, Result};

const MAGIC: &str = "hosfem-mesh";
const VERSION: &str = "1";

pub fn write_mesh<W: Write>(mesh: &Mesh, mut out: W) -> Result<()> {
    let mut s = String::new();
    let _ = writeln!(s, "{MAGIC} {VERSION}");
    let _ = writeln!(s, "order {}", mesh.order());
    let _ = writeln!(s, "elements {}", mesh.element_count());
    let _ = writeln!(s, "global_nodes {}", mesh.global_node_count());
    for (e, el) in mesh.elements().iter().enumerate() {
        let _ = writeln!(s, "element {e} {}", el.kind.name());
        for v in &el.vertices {
            let _ = writeln!(s, "{} {} {}", v[0], v[1], v[2]);
        }
    }
    let _ = writeln!(s, "connectivity");
    for e in 0..mesh.element_count() {
        let row: Vec<String> = mesh
            .element_connectivity(e)
            .iter()
            .map(|g| g.to_string())
            .collect();
        let _ = writeln!(s, "{}", row.join(" "));
    }
    out.write_all(s.as_bytes())?;
    Ok(())
}

pub fn read_mesh<R: BufRead>(input: R) -> Result<Mesh> {
    let mut lines = Vec::new();
    for (i, line) in input.lines().enumerate() {
        let line = line?;
        let trimmed = line.trim();
        if trimmed.is_empty() || trimmed.starts_with('#') {
            continue;
        }
        lines.push((i + 1, trimmed.to_string()));
    }
    let mut it = lines.into_iter();
    let mut next = |what: &str| {
        it.next().ok_or_else(|| HosfemError::Parse {
            line: 0,
            msg: format!("unexpected end of file, expected {what}"),
        })
    };

    let (ln, header) = next("header")?;
    if header != format!("{MAGIC} {VERSION}") {
        return Err(HosfemError::Parse {
            line: ln,
            msg: format!("expected '{MAGIC} {VERSION}', got '{header}'"),
        });
    }
    let order = keyed_usize(next("order")?, "order")?;
    let count = keyed_usize(next("elements")?, "elements")?;
    let global = keyed_usize(next("global_nodes")?, "global_nodes")?;

    let mut elements = Vec::with_capacity(count);
    for e in 0..count {
        let (ln, line) = next("element header")?;
        let parts: Vec<&str> = line.split_whitespace().collect();
        if parts.len() != 3 || parts[0] != "element" || parts[1] != e.to_string() {
            return Err(HosfemError::Parse {
                line: ln,
                msg: format!("expected 'element {e} <kind>'"),
            });
        }
        let kind = ElementKind::parse(parts[2]).ok_or_else(|| HosfemError::Parse {
            line: ln,
            msg: format!("unknown element kind '{}'", parts[2]),
        })?;
        let mut v: Vertices = [[0.0; 3]; 8];
        for row in v.iter_mut() {
            let (ln, line) = next("vertex row")?;
            let vals = parse_all::<f64>(ln, &line)?;
            if vals.len() != 3 {
                return Err(HosfemError::Parse {
                    line: ln,
                    msg: "vertex row needs 3 coordinates".into(),
                });
            }
            row.copy_from_slice(&vals);
        }
        let el = Element::new(v, kind).map_err(|err| match err {
            HosfemError::NotParallelepiped { residual, .. } => HosfemError::NotParallelepiped {
                element: e,
                residual,
            },
            other => other,
        })?;
        elements.push(el);
    }

    let (ln, line) = next("connectivity")?;
    if line != "connectivity" {
        return Err(HosfemError::Parse {
            line: ln,
            msg: "expected 'connectivity'".into(),
        });
    }
    let n = (order + 1).pow(3);
    let mut l2g = Vec::with_capacity(count * n);
    for _ in 0..count {
        let (ln, line) = next("connectivity row")?;
        let ids = parse_all::<usize>(ln, &line)?;
        if ids.len() != n {
            return Err(HosfemError::Parse {
                line: ln,
                msg: format!("connectivity row needs {n} ids, got {}", ids.len()),
            });
        }
        l2g.extend(ids);
    }
    Mesh::new(order, elements, l2g, global)
}

fn keyed_usize((ln, line): (usize, String), key: &str) -> Result<usize> {
    let mut parts = line.split_whitespace();
    match (parts.next(), parts.next(), parts.next()) {
        (Some(k), Some(v), None) if k == key => v.parse().map_err(|_| HosfemError::Parse {
            line: ln,
            msg: format!("invalid value for {key}: '{v}'"),
        }),
        _ => Err(HosfemError::Parse {
            line: ln,
            msg: format!("expected '{key} <integer>'"),
        }),
    }
}

fn parse_all<T: std::str::FromStr>(ln: usize, line: &str) -> Result<Vec<T>> {
    line.split_whitespace()
        .map(|tok| {
            tok.parse::<T>().map_err(|_| HosfemError::Parse {
                line: ln,
                msg: format!("cannot parse '{tok}'"),
            })
        })
        .collect()
}
