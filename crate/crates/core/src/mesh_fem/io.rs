//! Plain-text mesh format.
//!
//! ```text
//! nodes N
//! x y            (N lines)
//! triangles M
//! i j k          (M lines, 0-based)
//! boundary B
//! i j TAG        (B lines, TAG in G0 | G1 | G2)
//! ```
//!
//! Coordinates are written with the shortest representation that parses
//! back to the same `f64`, so write → read is exact.

use std::fmt::Write as _;
use std::io::{BufRead, Write};

use super::mesh::{BoundaryEdge, BoundaryTag, TriMesh};
use crate::error::{Error, Result};

pub fn write_mesh<W: Write>(mesh: &TriMesh, mut out: W) -> Result<()> {
    out.write_all(mesh_to_string(mesh).as_bytes())?;
    Ok(())
}

pub fn mesh_to_string(mesh: &TriMesh) -> String {
    let mut s = String::new();
    let _ = writeln!(s, "nodes {}", mesh.num_nodes());
    for p in mesh.nodes() {
        let _ = writeln!(s, "{:?} {:?}", p[0], p[1]);
    }
    let _ = writeln!(s, "triangles {}", mesh.num_triangles());
    for t in mesh.triangles() {
        let _ = writeln!(s, "{} {} {}", t[0], t[1], t[2]);
    }
    let _ = writeln!(s, "boundary {}", mesh.boundary_edges().len());
    for b in mesh.boundary_edges() {
        let _ = writeln!(s, "{} {} {}", b.nodes[0], b.nodes[1], b.tag.as_str());
    }
    s
}

struct Lines<R> {
    inner: std::io::Lines<R>,
    line_no: usize,
}

impl<R: BufRead> Lines<R> {
    fn next_line(&mut self) -> Result<String> {
        loop {
            self.line_no += 1;
            match self.inner.next() {
                Some(line) => {
                    let line = line?;
                    if !line.trim().is_empty() {
                        return Ok(line);
                    }
                }
                None => return Err(self.err("unexpected end of file")),
            }
        }
    }

    fn err(&self, msg: impl Into<String>) -> Error {
        Error::Parse { line: self.line_no, message: msg.into() }
    }

    fn header(&mut self, keyword: &str) -> Result<usize> {
        let line = self.next_line()?;
        let mut it = line.split_whitespace();
        match (it.next(), it.next(), it.next()) {
            (Some(k), Some(n), None) if k == keyword => {
                n.parse().map_err(|_| self.err(format!("bad count in `{keyword}` header")))
            }
            _ => Err(self.err(format!("expected `{keyword} <count>`"))),
        }
    }

    fn fields<const K: usize>(&mut self) -> Result<[String; K]> {
        let line = self.next_line()?;
        let parts: Vec<String> = line.split_whitespace().map(str::to_owned).collect();
        parts
            .try_into()
            .map_err(|_| self.err(format!("expected {K} fields")))
    }

    fn parse<T: std::str::FromStr>(&self, s: &str) -> Result<T> {
        s.parse().map_err(|_| self.err(format!("cannot parse `{s}`")))
    }
}

pub fn read_mesh<R: BufRead>(input: R) -> Result<TriMesh> {
    let mut lines = Lines { inner: input.lines(), line_no: 0 };

    let n = lines.header("nodes")?;
    let mut nodes = Vec::with_capacity(n);
    for _ in 0..n {
        let [x, y] = lines.fields::<2>()?;
        nodes.push([lines.parse(&x)?, lines.parse(&y)?]);
    }

    let m = lines.header("triangles")?;
    let mut triangles = Vec::with_capacity(m);
    for _ in 0..m {
        let [i, j, k] = lines.fields::<3>()?;
        triangles.push([lines.parse(&i)?, lines.parse(&j)?, lines.parse(&k)?]);
    }

    let b = lines.header("boundary")?;
    let mut boundary = Vec::with_capacity(b);
    for _ in 0..b {
        let [i, j, tag] = lines.fields::<3>()?;
        let tag = BoundaryTag::parse(&tag)
            .ok_or_else(|| lines.err(format!("unknown boundary tag `{tag}`")))?;
        boundary.push(BoundaryEdge { nodes: [lines.parse(&i)?, lines.parse(&j)?], tag });
    }

    TriMesh::new(nodes, triangles, boundary)
}

pub fn read_mesh_file(path: &std::path::Path) -> Result<TriMesh> {
    let f = std::fs::File::open(path)?;
    read_mesh(std::io::BufReader::new(f))
}

pub fn write_mesh_file(mesh: &TriMesh, path: &std::path::Path) -> Result<()> {
    std::fs::write(path, mesh_to_string(mesh))?;
    Ok(())
}
