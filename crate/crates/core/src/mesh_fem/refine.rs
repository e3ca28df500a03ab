//! Conforming red–green refinement.
//!
//! Marked triangles are split into four similar children (red). Neighbours
//! that end up with exactly one split edge are bisected from that edge's
//! midpoint to the opposite vertex (green); a triangle with two split edges
//! is promoted to red, so no hanging nodes remain. Boundary edges that are
//! split hand their tag to both halves.

use std::collections::HashMap;

use super::mesh::{BoundaryEdge, TriMesh};

fn edge_key(a: usize, b: usize) -> (usize, usize) {
    if a < b {
        (a, b)
    } else {
        (b, a)
    }
}

/// Refined mesh plus, for every child triangle, the index of its parent.
pub struct Refinement {
    pub mesh: TriMesh,
    pub parent: Vec<usize>,
}

pub fn refine(mesh: &TriMesh, marker: &[bool]) -> TriMesh {
    refine_with_parents(mesh, marker).mesh
}

pub fn refine_with_parents(mesh: &TriMesh, marker: &[bool]) -> Refinement {
    assert_eq!(marker.len(), mesh.num_triangles(), "one marker per triangle");
    let tris = mesh.triangles();

    let mut split: HashMap<(usize, usize), usize> = HashMap::new();
    for (t, tri) in tris.iter().enumerate() {
        if marker[t] {
            for k in 0..3 {
                split.insert(edge_key(tri[k], tri[(k + 1) % 3]), usize::MAX);
            }
        }
    }
    // closure: two split edges make a red triangle
    loop {
        let mut changed = false;
        for tri in tris {
            let keys = [0, 1, 2].map(|k| edge_key(tri[k], tri[(k + 1) % 3]));
            let count = keys.iter().filter(|k| split.contains_key(k)).count();
            if count == 2 {
                for k in keys {
                    split.entry(k).or_insert(usize::MAX);
                }
                changed = true;
            }
        }
        if !changed {
            break;
        }
    }

    // midpoints numbered in triangle order for reproducible output
    let mut nodes = mesh.nodes().to_vec();
    for tri in tris {
        for k in 0..3 {
            let key = edge_key(tri[k], tri[(k + 1) % 3]);
            if let Some(slot) = split.get_mut(&key) {
                if *slot == usize::MAX {
                    let (p, q) = (nodes[key.0], nodes[key.1]);
                    *slot = nodes.len();
                    nodes.push([(p[0] + q[0]) / 2.0, (p[1] + q[1]) / 2.0]);
                }
            }
        }
    }

    let mut triangles = Vec::with_capacity(tris.len());
    let mut parent = Vec::with_capacity(tris.len());
    for (t, &[a, b, c]) in tris.iter().enumerate() {
        let mids = [(a, b), (b, c), (c, a)].map(|(p, q)| split.get(&edge_key(p, q)).copied());
        match mids {
            [Some(mab), Some(mbc), Some(mca)] => {
                triangles.extend([[a, mab, mca], [mab, b, mbc], [mca, mbc, c], [mab, mbc, mca]]);
                parent.extend([t; 4]);
            }
            [None, None, None] => {
                triangles.push([a, b, c]);
                parent.push(t);
            }
            _ => {
                let k = mids.iter().position(Option::is_some).expect("one split edge");
                let m = mids[k].unwrap();
                let v = [a, b, c];
                let (p, q, r) = (v[k], v[(k + 1) % 3], v[(k + 2) % 3]);
                triangles.extend([[p, m, r], [m, q, r]]);
                parent.extend([t; 2]);
            }
        }
    }

    let mut boundary = Vec::with_capacity(mesh.boundary_edges().len());
    for be in mesh.boundary_edges() {
        let [p, q] = be.nodes;
        match split.get(&edge_key(p, q)) {
            Some(&m) => {
                boundary.push(BoundaryEdge { nodes: [p, m], tag: be.tag });
                boundary.push(BoundaryEdge { nodes: [m, q], tag: be.tag });
            }
            None => boundary.push(*be),
        }
    }

    let mesh = TriMesh::new(nodes, triangles, boundary)
        .expect("red-green refinement preserves mesh invariants");
    Refinement { mesh, parent }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh_fem::mesh::BoundaryTag;

    /// No node may lie strictly inside an edge it is not an endpoint of.
    fn assert_conforming(m: &TriMesh) {
        for e in m.edges() {
            let (p, q) = (m.node(e.nodes[0]), m.node(e.nodes[1]));
            for (i, x) in m.nodes().iter().enumerate() {
                if e.nodes.contains(&i) {
                    continue;
                }
                let cross = (q[0] - p[0]) * (x[1] - p[1]) - (q[1] - p[1]) * (x[0] - p[0]);
                let s = ((x[0] - p[0]) * (q[0] - p[0]) + (x[1] - p[1]) * (q[1] - p[1]))
                    / ((q[0] - p[0]).powi(2) + (q[1] - p[1]).powi(2));
                assert!(
                    !(cross.abs() < 1e-12 && s > 1e-9 && s < 1.0 - 1e-9),
                    "hanging node {i} on edge {:?}",
                    e.nodes
                );
            }
        }
    }

    #[test]
    fn no_marks_is_identity() {
        let m = TriMesh::rectangle(0.0, 2.0, 0.0, 1.0, 4, 2).unwrap();
        let r = refine(&m, &vec![false; m.num_triangles()]);
        assert_eq!(r, m);
    }

    #[test]
    fn uniform_red_quadruples() {
        let m = TriMesh::rectangle(0.0, 2.0, 0.0, 1.0, 4, 2).unwrap();
        let r = refine(&m, &vec![true; m.num_triangles()]);
        assert_eq!(r.num_triangles(), 4 * m.num_triangles());
        assert!((r.total_area() - m.total_area()).abs() < 1e-13);
        assert_conforming(&r);
    }

    #[test]
    fn single_mark_stays_conforming() {
        let m = TriMesh::rectangle(0.0, 2.0, 0.0, 1.0, 6, 3).unwrap();
        for t in [0, 7, 17, m.num_triangles() - 1] {
            let mut marker = vec![false; m.num_triangles()];
            marker[t] = true;
            let r = refine_with_parents(&m, &marker);
            assert_conforming(&r.mesh);
            assert_eq!(r.parent.len(), r.mesh.num_triangles());
            assert!(r.parent.iter().filter(|&&p| p == t).count() == 4);
        }
    }

    #[test]
    fn red_children_keep_min_angle() {
        let m = TriMesh::rectangle(0.0, 2.0, 0.0, 1.0, 3, 2).unwrap();
        let r = refine_with_parents(&m, &vec![true; m.num_triangles()]);
        for (c, &p) in r.parent.iter().enumerate() {
            assert!(r.mesh.min_angle(c) >= 0.5 * m.min_angle(p) - 1e-12);
        }
    }

    #[test]
    fn boundary_tags_inherited() {
        let m = TriMesh::rectangle(0.0, 2.0, 0.0, 1.0, 2, 2).unwrap();
        let r = refine(&m, &vec![true; m.num_triangles()]);
        let g1 = r.nodes_on(BoundaryTag::Gamma1);
        for (i, p) in r.nodes().iter().enumerate() {
            assert_eq!(g1[i], p[1] == 0.0);
        }
    }
}
