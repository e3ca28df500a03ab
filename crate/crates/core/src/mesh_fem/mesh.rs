//! Triangular meshes with tagged boundaries.
//!
//! Boundary edges carry one of three tags: [`BoundaryTag::Gamma1`] and
//! [`BoundaryTag::Gamma2`] are the two electrodes, [`BoundaryTag::Gamma0`] is
//! the insulated remainder of the boundary.

use std::collections::HashMap;
use std::sync::OnceLock;

use crate::error::{Error, Result};

pub type Point = [f64; 2];

/// Relative area below which a triangle is rejected as degenerate.
pub const DEGENERATE_AREA_RATIO: f64 = 1e-14;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum BoundaryTag {
    Gamma0,
    Gamma1,
    Gamma2,
}

impl BoundaryTag {
    pub fn as_str(self) -> &'static str {
        match self {
            BoundaryTag::Gamma0 => "G0",
            BoundaryTag::Gamma1 => "G1",
            BoundaryTag::Gamma2 => "G2",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "G0" => Some(BoundaryTag::Gamma0),
            "G1" => Some(BoundaryTag::Gamma1),
            "G2" => Some(BoundaryTag::Gamma2),
            _ => None,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct BoundaryEdge {
    pub nodes: [usize; 2],
    pub tag: BoundaryTag,
}

/// An undirected mesh edge with its one or two neighbouring triangles.
#[derive(Clone, Copy, Debug)]
pub struct Edge {
    pub nodes: [usize; 2],
    pub left: usize,
    pub right: Option<usize>,
}

impl Edge {
    pub fn is_interior(&self) -> bool {
        self.right.is_some()
    }
}

#[derive(Debug)]
pub struct TriMesh {
    nodes: Vec<Point>,
    triangles: Vec<[usize; 3]>,
    boundary: Vec<BoundaryEdge>,
    areas: Vec<f64>,
    edges: OnceLock<Vec<Edge>>,
}

impl Clone for TriMesh {
    fn clone(&self) -> Self {
        TriMesh {
            nodes: self.nodes.clone(),
            triangles: self.triangles.clone(),
            boundary: self.boundary.clone(),
            areas: self.areas.clone(),
            edges: OnceLock::new(),
        }
    }
}

impl PartialEq for TriMesh {
    fn eq(&self, other: &Self) -> bool {
        self.nodes == other.nodes
            && self.triangles == other.triangles
            && self.boundary == other.boundary
    }
}

pub(crate) fn signed_area(a: Point, b: Point, c: Point) -> f64 {
    0.5 * ((b[0] - a[0]) * (c[1] - a[1]) - (c[0] - a[0]) * (b[1] - a[1]))
}

fn edge_key(a: usize, b: usize) -> (usize, usize) {
    if a < b {
        (a, b)
    } else {
        (b, a)
    }
}

impl TriMesh {
    /// Builds a mesh and checks every structural invariant: positive
    /// orientation, a single closed boundary loop matching the free edges,
    /// nonempty node-disjoint electrodes, and no orphan nodes.
    pub fn new(
        nodes: Vec<Point>,
        triangles: Vec<[usize; 3]>,
        boundary: Vec<BoundaryEdge>,
    ) -> Result<Self> {
        if nodes.is_empty() || triangles.is_empty() {
            return Err(Error::geometry("mesh needs at least one triangle"));
        }
        if nodes.iter().any(|p| !p[0].is_finite() || !p[1].is_finite()) {
            return Err(Error::geometry("non-finite node coordinate"));
        }
        let n = nodes.len();
        let (lo, hi) = bounding_box(&nodes);
        let box_area = ((hi[0] - lo[0]) * (hi[1] - lo[1])).max(f64::MIN_POSITIVE);

        let mut used = vec![false; n];
        let mut areas = Vec::with_capacity(triangles.len());
        for (t, tri) in triangles.iter().enumerate() {
            if tri.iter().any(|&i| i >= n) {
                return Err(Error::geometry(format!("triangle {t} references a missing node")));
            }
            let area = signed_area(nodes[tri[0]], nodes[tri[1]], nodes[tri[2]]);
            if area <= 0.0 {
                return Err(Error::geometry(format!(
                    "triangle {t} is not counterclockwise (signed area {area:e})"
                )));
            }
            if area < DEGENERATE_AREA_RATIO * box_area {
                return Err(Error::geometry(format!(
                    "triangle {t} is degenerate (area {area:e})"
                )));
            }
            for &i in tri {
                used[i] = true;
            }
            areas.push(area);
        }
        if let Some(orphan) = used.iter().position(|u| !u) {
            return Err(Error::geometry(format!("node {orphan} belongs to no triangle")));
        }

        let mut counts: HashMap<(usize, usize), usize> = HashMap::new();
        for tri in &triangles {
            for k in 0..3 {
                *counts.entry(edge_key(tri[k], tri[(k + 1) % 3])).or_default() += 1;
            }
        }
        if let Some((e, c)) = counts.iter().find(|(_, &c)| c > 2) {
            return Err(Error::geometry(format!(
                "edge {e:?} shared by {c} triangles"
            )));
        }
        let mut free: Vec<(usize, usize)> = counts
            .iter()
            .filter(|(_, &c)| c == 1)
            .map(|(&e, _)| e)
            .collect();
        free.sort_unstable();
        let mut tagged: Vec<(usize, usize)> =
            boundary.iter().map(|b| edge_key(b.nodes[0], b.nodes[1])).collect();
        tagged.sort_unstable();
        if tagged.windows(2).any(|w| w[0] == w[1]) {
            return Err(Error::geometry("duplicate boundary edge"));
        }
        if free != tagged {
            return Err(Error::geometry(
                "tagged boundary edges do not match the free edges of the triangulation",
            ));
        }
        check_single_loop(n, &tagged)?;

        let mut on_g1 = vec![false; n];
        let mut on_g2 = vec![false; n];
        for b in &boundary {
            match b.tag {
                BoundaryTag::Gamma1 => b.nodes.iter().for_each(|&i| on_g1[i] = true),
                BoundaryTag::Gamma2 => b.nodes.iter().for_each(|&i| on_g2[i] = true),
                BoundaryTag::Gamma0 => {}
            }
        }
        if !on_g1.iter().any(|&x| x) || !on_g2.iter().any(|&x| x) {
            return Err(Error::geometry("both electrodes Gamma1 and Gamma2 must be nonempty"));
        }
        if on_g1.iter().zip(&on_g2).any(|(a, b)| *a && *b) {
            return Err(Error::geometry("electrodes Gamma1 and Gamma2 touch"));
        }

        Ok(TriMesh {
            nodes,
            triangles,
            boundary,
            areas,
            edges: OnceLock::new(),
        })
    }

    /// Structured mesh of `[x0,x1]×[y0,y1]` split into `2·nx·ny` triangles.
    /// The bottom side is tagged Gamma1, the top side Gamma2, the vertical
    /// sides Gamma0.
    pub fn rectangle(x0: f64, x1: f64, y0: f64, y1: f64, nx: usize, ny: usize) -> Result<Self> {
        if nx == 0 || ny == 0 || x1 <= x0 || y1 <= y0 {
            return Err(Error::geometry("invalid rectangle specification"));
        }
        let idx = |i: usize, j: usize| j * (nx + 1) + i;
        let mut nodes = Vec::with_capacity((nx + 1) * (ny + 1));
        for j in 0..=ny {
            for i in 0..=nx {
                // exact endpoints, so boundary coordinates are reproduced bit-for-bit
                let x = if i == nx { x1 } else { x0 + (x1 - x0) * i as f64 / nx as f64 };
                let y = if j == ny { y1 } else { y0 + (y1 - y0) * j as f64 / ny as f64 };
                nodes.push([x, y]);
            }
        }
        let mut triangles = Vec::with_capacity(2 * nx * ny);
        for j in 0..ny {
            for i in 0..nx {
                let (a, b, c, d) = (idx(i, j), idx(i + 1, j), idx(i + 1, j + 1), idx(i, j + 1));
                // alternate the diagonal so the mesh has no preferred direction
                if (i + j) % 2 == 0 {
                    triangles.push([a, b, c]);
                    triangles.push([a, c, d]);
                } else {
                    triangles.push([a, b, d]);
                    triangles.push([b, c, d]);
                }
            }
        }
        let mut boundary = Vec::with_capacity(2 * (nx + ny));
        for i in 0..nx {
            boundary.push(BoundaryEdge { nodes: [idx(i, 0), idx(i + 1, 0)], tag: BoundaryTag::Gamma1 });
        }
        for j in 0..ny {
            boundary.push(BoundaryEdge { nodes: [idx(nx, j), idx(nx, j + 1)], tag: BoundaryTag::Gamma0 });
        }
        for i in (0..nx).rev() {
            boundary.push(BoundaryEdge { nodes: [idx(i + 1, ny), idx(i, ny)], tag: BoundaryTag::Gamma2 });
        }
        for j in (0..ny).rev() {
            boundary.push(BoundaryEdge { nodes: [idx(0, j + 1), idx(0, j)], tag: BoundaryTag::Gamma0 });
        }
        TriMesh::new(nodes, triangles, boundary)
    }

    /// Rectangle mesh with target element size `h`.
    pub fn rectangle_with_size(x0: f64, x1: f64, y0: f64, y1: f64, h: f64) -> Result<Self> {
        if !(h > 0.0) {
            return Err(Error::geometry("mesh size must be positive"));
        }
        let nx = ((x1 - x0) / h).round().max(1.0) as usize;
        let ny = ((y1 - y0) / h).round().max(1.0) as usize;
        TriMesh::rectangle(x0, x1, y0, y1, nx, ny)
    }

    pub fn num_nodes(&self) -> usize {
        self.nodes.len()
    }

    pub fn num_triangles(&self) -> usize {
        self.triangles.len()
    }

    pub fn nodes(&self) -> &[Point] {
        &self.nodes
    }

    pub fn node(&self, i: usize) -> Point {
        self.nodes[i]
    }

    pub fn triangles(&self) -> &[[usize; 3]] {
        &self.triangles
    }

    pub fn triangle(&self, t: usize) -> [usize; 3] {
        self.triangles[t]
    }

    pub fn boundary_edges(&self) -> &[BoundaryEdge] {
        &self.boundary
    }

    pub fn area(&self, t: usize) -> f64 {
        self.areas[t]
    }

    pub fn areas(&self) -> &[f64] {
        &self.areas
    }

    pub fn total_area(&self) -> f64 {
        self.areas.iter().sum()
    }

    pub fn vertices(&self, t: usize) -> [Point; 3] {
        let [a, b, c] = self.triangles[t];
        [self.nodes[a], self.nodes[b], self.nodes[c]]
    }

    pub fn centroid(&self, t: usize) -> Point {
        let [a, b, c] = self.vertices(t);
        [(a[0] + b[0] + c[0]) / 3.0, (a[1] + b[1] + c[1]) / 3.0]
    }

    pub fn bounding_box(&self) -> (Point, Point) {
        bounding_box(&self.nodes)
    }

    /// Gradients of the three barycentric (P1 hat) functions on triangle `t`.
    pub fn shape_gradients(&self, t: usize) -> [[f64; 2]; 3] {
        let [a, b, c] = self.vertices(t);
        let two_area = 2.0 * self.areas[t];
        [
            [(b[1] - c[1]) / two_area, (c[0] - b[0]) / two_area],
            [(c[1] - a[1]) / two_area, (a[0] - c[0]) / two_area],
            [(a[1] - b[1]) / two_area, (b[0] - a[0]) / two_area],
        ]
    }

    /// Per-node flags for nodes lying on an edge with the given tag
    /// (endpoints included, so electrode corners count as electrode nodes).
    pub fn nodes_on(&self, tag: BoundaryTag) -> Vec<bool> {
        let mut flags = vec![false; self.nodes.len()];
        for b in self.boundary.iter().filter(|b| b.tag == tag) {
            flags[b.nodes[0]] = true;
            flags[b.nodes[1]] = true;
        }
        flags
    }

    pub fn boundary_nodes(&self) -> Vec<bool> {
        let mut flags = vec![false; self.nodes.len()];
        for b in &self.boundary {
            flags[b.nodes[0]] = true;
            flags[b.nodes[1]] = true;
        }
        flags
    }

    /// All edges with their neighbouring triangles, sorted by node pair.
    pub fn edges(&self) -> &[Edge] {
        self.edges.get_or_init(|| {
            let mut map: HashMap<(usize, usize), (usize, Option<usize>)> = HashMap::new();
            for (t, tri) in self.triangles.iter().enumerate() {
                for k in 0..3 {
                    let key = edge_key(tri[k], tri[(k + 1) % 3]);
                    map.entry(key)
                        .and_modify(|e| e.1 = Some(t))
                        .or_insert((t, None));
                }
            }
            let mut edges: Vec<Edge> = map
                .into_iter()
                .map(|((a, b), (left, right))| Edge { nodes: [a, b], left, right })
                .collect();
            edges.sort_unstable_by_key(|e| e.nodes);
            edges
        })
    }

    pub fn edge_length(&self, e: &Edge) -> f64 {
        let (p, q) = (self.nodes[e.nodes[0]], self.nodes[e.nodes[1]]);
        (q[0] - p[0]).hypot(q[1] - p[1])
    }

    /// Neighbouring nodes of every node (sorted, no duplicates).
    pub fn node_neighbours(&self) -> Vec<Vec<usize>> {
        let mut adj = vec![Vec::new(); self.nodes.len()];
        for e in self.edges() {
            adj[e.nodes[0]].push(e.nodes[1]);
            adj[e.nodes[1]].push(e.nodes[0]);
        }
        for list in &mut adj {
            list.sort_unstable();
        }
        adj
    }

    /// Smallest interior angle (radians) of triangle `t`.
    pub fn min_angle(&self, t: usize) -> f64 {
        let v = self.vertices(t);
        (0..3)
            .map(|k| {
                let (p, q, r) = (v[k], v[(k + 1) % 3], v[(k + 2) % 3]);
                let u = [q[0] - p[0], q[1] - p[1]];
                let w = [r[0] - p[0], r[1] - p[1]];
                let cos = (u[0] * w[0] + u[1] * w[1]) / (u[0].hypot(u[1]) * w[0].hypot(w[1]));
                cos.clamp(-1.0, 1.0).acos()
            })
            .fold(f64::INFINITY, f64::min)
    }

    /// Largest edge length over the mesh.
    pub fn max_edge_length(&self) -> f64 {
        self.edges().iter().map(|e| self.edge_length(e)).fold(0.0, f64::max)
    }
}

fn bounding_box(nodes: &[Point]) -> (Point, Point) {
    let mut lo = [f64::INFINITY; 2];
    let mut hi = [f64::NEG_INFINITY; 2];
    for p in nodes {
        for k in 0..2 {
            lo[k] = lo[k].min(p[k]);
            hi[k] = hi[k].max(p[k]);
        }
    }
    (lo, hi)
}

fn check_single_loop(n: usize, edges: &[(usize, usize)]) -> Result<()> {
    let mut adj: Vec<Vec<usize>> = vec![Vec::new(); n];
    for &(a, b) in edges {
        adj[a].push(b);
        adj[b].push(a);
    }
    if adj.iter().any(|l| !l.is_empty() && l.len() != 2) {
        return Err(Error::geometry("boundary is not a simple closed curve"));
    }
    let start = edges[0].0;
    let (mut prev, mut cur) = (start, adj[start][0]);
    let mut visited = 1;
    while cur != start {
        let next = if adj[cur][0] == prev { adj[cur][1] } else { adj[cur][0] };
        prev = cur;
        cur = next;
        visited += 1;
        if visited > edges.len() {
            break;
        }
    }
    if visited != edges.len() {
        return Err(Error::geometry("boundary consists of more than one loop"));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rectangle_counts_and_tags() {
        let m = TriMesh::rectangle(0.0, 2.0, 0.0, 1.0, 4, 2).unwrap();
        assert_eq!(m.num_nodes(), 15);
        assert_eq!(m.num_triangles(), 16);
        assert!((m.total_area() - 2.0).abs() < 1e-14);
        let g1 = m.nodes_on(BoundaryTag::Gamma1);
        assert!(g1.iter().enumerate().all(|(i, &f)| f == (m.node(i)[1] == 0.0)));
        let g2 = m.nodes_on(BoundaryTag::Gamma2);
        assert!(g2.iter().enumerate().all(|(i, &f)| f == (m.node(i)[1] == 1.0)));
    }

    #[test]
    fn clockwise_triangle_rejected() {
        let nodes = vec![[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]];
        let boundary = vec![
            BoundaryEdge { nodes: [0, 1], tag: BoundaryTag::Gamma1 },
            BoundaryEdge { nodes: [1, 2], tag: BoundaryTag::Gamma0 },
            BoundaryEdge { nodes: [2, 0], tag: BoundaryTag::Gamma2 },
        ];
        // Gamma1 and Gamma2 share node 0, and orientation is also wrong.
        assert!(TriMesh::new(nodes.clone(), vec![[0, 2, 1]], boundary.clone()).is_err());
    }

    #[test]
    fn degenerate_triangle_rejected() {
        let nodes = vec![[0.0, 0.0], [1.0, 0.0], [0.5, 1e-16], [0.5, 1.0]];
        let tris = vec![[0, 1, 2], [0, 2, 3]];
        let err = TriMesh::new(nodes, tris, vec![]).unwrap_err();
        assert!(matches!(err, Error::Geometry(_)));
    }

    #[test]
    fn orphan_node_rejected() {
        let m = TriMesh::rectangle(0.0, 1.0, 0.0, 1.0, 1, 1).unwrap();
        let mut nodes = m.nodes().to_vec();
        nodes.push([5.0, 5.0]);
        let err = TriMesh::new(nodes, m.triangles().to_vec(), m.boundary_edges().to_vec());
        assert!(err.is_err());
    }

    #[test]
    fn missing_boundary_edge_rejected() {
        let m = TriMesh::rectangle(0.0, 1.0, 0.0, 1.0, 2, 2).unwrap();
        let mut b = m.boundary_edges().to_vec();
        b.pop();
        assert!(TriMesh::new(m.nodes().to_vec(), m.triangles().to_vec(), b).is_err());
    }

    #[test]
    fn shape_gradients_sum_to_zero() {
        let m = TriMesh::rectangle(0.0, 2.0, 0.0, 1.0, 3, 3).unwrap();
        for t in 0..m.num_triangles() {
            let g = m.shape_gradients(t);
            let s = [g[0][0] + g[1][0] + g[2][0], g[0][1] + g[1][1] + g[2][1]];
            assert!(s[0].abs() < 1e-12 && s[1].abs() < 1e-12);
        }
    }

    #[test]
    fn edge_adjacency_counts() {
        let m = TriMesh::rectangle(0.0, 1.0, 0.0, 1.0, 3, 2).unwrap();
        let interior = m.edges().iter().filter(|e| e.is_interior()).count();
        let boundary = m.edges().len() - interior;
        assert_eq!(boundary, m.boundary_edges().len());
        // Euler: E = V + T - 1 for a disk
        assert_eq!(m.edges().len(), m.num_nodes() + m.num_triangles() - 1);
    }
}
