use std::sync::Arc;

use super::mesh::{Point, TriMesh};

/// Bucket grid for point-in-triangle queries.
#[derive(Clone, Debug)]
pub struct Locator {
    mesh: Arc<TriMesh>,
    origin: Point,
    upper: Point,
    cell: f64,
    dims: [usize; 2],
    buckets: Vec<Vec<usize>>,
}

impl Locator {
    pub fn new(mesh: Arc<TriMesh>) -> Self {
        let (lo, hi) = mesh.bounding_box();
        let area = (hi[0] - lo[0]) * (hi[1] - lo[1]);
        let cell = (area / mesh.num_triangles() as f64).sqrt().max(f64::MIN_POSITIVE) * 1.5;
        let dims = [
            (((hi[0] - lo[0]) / cell).ceil() as usize).max(1),
            (((hi[1] - lo[1]) / cell).ceil() as usize).max(1),
        ];
        let mut buckets = vec![Vec::new(); dims[0] * dims[1]];
        for t in 0..mesh.num_triangles() {
            let v = mesh.vertices(t);
            let (mut a, mut b) = ([f64::INFINITY; 2], [f64::NEG_INFINITY; 2]);
            for p in v {
                for k in 0..2 {
                    a[k] = a[k].min(p[k]);
                    b[k] = b[k].max(p[k]);
                }
            }
            let (i0, j0) = Self::cell_of(lo, cell, dims, a);
            let (i1, j1) = Self::cell_of(lo, cell, dims, b);
            for j in j0..=j1 {
                for i in i0..=i1 {
                    buckets[j * dims[0] + i].push(t);
                }
            }
        }
        Locator { mesh, origin: lo, upper: hi, cell, dims, buckets }
    }

    fn cell_of(origin: Point, cell: f64, dims: [usize; 2], p: Point) -> (usize, usize) {
        let i = ((p[0] - origin[0]) / cell).floor().clamp(0.0, (dims[0] - 1) as f64) as usize;
        let j = ((p[1] - origin[1]) / cell).floor().clamp(0.0, (dims[1] - 1) as f64) as usize;
        (i, j)
    }

    pub fn mesh(&self) -> &Arc<TriMesh> {
        &self.mesh
    }

    /// Triangle containing `p` (closed triangles; the lowest index wins on
    /// shared edges), or `None` outside the mesh.
    pub fn locate(&self, p: Point) -> Option<usize> {
        let (lo, hi) = (self.origin, self.upper);
        let tol = 1e-12 * self.cell;
        if p[0] < lo[0] - tol || p[0] > hi[0] + tol || p[1] < lo[1] - tol || p[1] > hi[1] + tol {
            return None;
        }
        let (i, j) = Self::cell_of(self.origin, self.cell, self.dims, p);
        self.buckets[j * self.dims[0] + i]
            .iter()
            .copied()
            .find(|&t| barycentric_min(&self.mesh, t, p) >= -1e-12)
    }
}

fn barycentric_min(mesh: &TriMesh, t: usize, p: Point) -> f64 {
    let [a, b, c] = mesh.vertices(t);
    let area2 = 2.0 * mesh.area(t);
    let l0 = ((b[0] - p[0]) * (c[1] - p[1]) - (c[0] - p[0]) * (b[1] - p[1])) / area2;
    let l1 = ((c[0] - p[0]) * (a[1] - p[1]) - (a[0] - p[0]) * (c[1] - p[1])) / area2;
    let l2 = 1.0 - l0 - l1;
    l0.min(l1).min(l2)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn every_centroid_found_in_its_triangle() {
        let m = Arc::new(TriMesh::rectangle(0.0, 2.0, 0.0, 1.0, 13, 7).unwrap());
        let loc = Locator::new(m.clone());
        for t in 0..m.num_triangles() {
            assert_eq!(loc.locate(m.centroid(t)), Some(t));
        }
        assert_eq!(loc.locate([2.5, 0.5]), None);
        assert!(loc.locate([2.0, 1.0]).is_some());
    }
}
