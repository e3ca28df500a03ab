use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mesh_fem::{Bounds, ConductivityMap, Point, TriMesh};

use super::config::Geometry;

/// Minimum distance between an inclusion and the domain boundary.
pub const SHAPE_MARGIN: f64 = 0.1;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum Shape {
    Disk { center: [f64; 2], radius: f64, sigma: f64 },
    Rectangle { min: [f64; 2], max: [f64; 2], sigma: f64 },
}

impl Shape {
    pub fn sigma(&self) -> f64 {
        match self {
            Shape::Disk { sigma, .. } | Shape::Rectangle { sigma, .. } => *sigma,
        }
    }

    /// Positive inside, negative outside; the distance to the edge for a
    /// disk and the smallest side distance for a rectangle.
    pub fn depth(&self, p: Point) -> f64 {
        match self {
            Shape::Disk { center, radius, .. } => radius - (p[0] - center[0]).hypot(p[1] - center[1]),
            Shape::Rectangle { min, max, .. } => {
                (p[0] - min[0]).min(max[0] - p[0]).min(p[1] - min[1]).min(max[1] - p[1])
            }
        }
    }

    fn extent(&self) -> (Point, Point) {
        match self {
            Shape::Disk { center, radius, .. } => {
                ([center[0] - radius, center[1] - radius], [center[0] + radius, center[1] + radius])
            }
            Shape::Rectangle { min, max, .. } => (*min, *max),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PhantomSpec {
    pub background: f64,
    /// Width of the tanh edge of every shape; 0 gives sharp edges.
    pub transition: f64,
    pub bounds: Bounds,
    /// Later shapes are painted over earlier ones.
    pub shapes: Vec<Shape>,
}

impl Default for PhantomSpec {
    fn default() -> Self {
        PhantomSpec {
            background: 1.0,
            transition: 0.0,
            bounds: Bounds { low: 1.0, high: 8.0 },
            shapes: Vec::new(),
        }
    }
}

impl PhantomSpec {
    pub fn validate(&self, g: Geometry) -> Result<()> {
        let b = Bounds::new(self.bounds.low, self.bounds.high)?;
        if !(self.transition >= 0.0) || !self.transition.is_finite() {
            return Err(Error::validation("transition width must be finite and >= 0"));
        }
        if !b.contains(self.background) {
            return Err(Error::validation(format!("background {} outside the bounds", self.background)));
        }
        for (i, s) in self.shapes.iter().enumerate() {
            if !b.contains(s.sigma()) {
                return Err(Error::validation(format!("shape {i}: sigma {} outside the bounds", s.sigma())));
            }
            let ok = match s {
                Shape::Disk { radius, .. } => *radius > 0.0,
                Shape::Rectangle { min, max, .. } => max[0] > min[0] && max[1] > min[1],
            };
            if !ok {
                return Err(Error::geometry(format!("shape {i} is empty")));
            }
            let (lo, hi) = s.extent();
            if lo[1] < SHAPE_MARGIN || hi[1] > g.height - SHAPE_MARGIN {
                return Err(Error::validation(format!(
                    "shape {i} comes within {SHAPE_MARGIN} of an electrode"
                )));
            }
            if lo[0] < SHAPE_MARGIN || hi[0] > g.width - SHAPE_MARGIN {
                return Err(Error::validation(format!(
                    "shape {i} comes within {SHAPE_MARGIN} of an insulated side"
                )));
            }
        }
        Ok(())
    }

    /// Conductivity at a point.
    pub fn eval(&self, p: Point) -> f64 {
        self.shapes.iter().fold(self.background, |acc, s| {
            let d = s.depth(p);
            let w = if self.transition > 0.0 {
                0.5 * (1.0 + (d / self.transition).tanh())
            } else if d > 0.0 {
                1.0
            } else {
                0.0
            };
            acc + w * (s.sigma() - acc)
        })
    }
}

/// Phantom sampled at triangle centroids.
pub fn make_phantom(spec: &PhantomSpec, geometry: Geometry, mesh: &Arc<TriMesh>) -> Result<ConductivityMap> {
    spec.validate(geometry)?;
    let b = Bounds::new(spec.bounds.low, spec.bounds.high)?;
    let sigma = (0..mesh.num_triangles()).map(|t| b.clamp(spec.eval(mesh.centroid(t)))).collect();
    ConductivityMap::new(mesh.clone(), sigma, b)
}
