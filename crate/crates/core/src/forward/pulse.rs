//! Acoustic pulse geometry and profiles.
//!
//! A pulse launched from `origin` along the unit vector `direction` has
//! velocity amplitude `v(x,t) = w(z − ct) A(z, |r|)`, where `z` is the
//! distance travelled along the beam axis and `r` the signed transverse
//! offset of `x` from the axis.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mesh_fem::Point;

/// `exp(1 − 1/(1 − u²))` on `|u| < 1`: a C∞ bump with peak 1 at `u = 0`.
pub fn bump(u: f64) -> f64 {
    if u.abs() >= 1.0 {
        0.0
    } else {
        (1.0 - 1.0 / (1.0 - u * u)).exp()
    }
}

/// Temporal pulse profile `w`, supported in `]−η, 0[`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum PulseProfile {
    /// Smooth bump centred at `−η/2`.
    Bump { eta: f64 },
    /// Indicator of `]−η, 0[`.
    Boxcar { eta: f64 },
    /// Samples at `−η + iη/(n−1)`, linearly interpolated; the end samples
    /// are forced to zero so `w` vanishes outside the support.
    Sampled { eta: f64, samples: Vec<f64> },
}

impl PulseProfile {
    pub fn eta(&self) -> f64 {
        match self {
            PulseProfile::Bump { eta } | PulseProfile::Boxcar { eta } => *eta,
            PulseProfile::Sampled { eta, .. } => *eta,
        }
    }

    pub fn eval(&self, s: f64) -> f64 {
        let eta = self.eta();
        if !(s > -eta && s < 0.0) {
            return 0.0;
        }
        match self {
            PulseProfile::Bump { .. } => bump(2.0 * s / eta + 1.0),
            PulseProfile::Boxcar { .. } => 1.0,
            PulseProfile::Sampled { samples, .. } => {
                let n = samples.len();
                let x = (s + eta) / eta * (n - 1) as f64;
                let i = (x.floor() as usize).min(n - 2);
                let f = x - i as f64;
                let at = |k: usize| if k == 0 || k == n - 1 { 0.0 } else { samples[k] };
                (1.0 - f) * at(i) + f * at(i + 1)
            }
        }
    }

    fn validate(&self) -> Result<()> {
        if !(self.eta() > 0.0) || !self.eta().is_finite() {
            return Err(Error::validation("pulse support width must be positive"));
        }
        if let PulseProfile::Sampled { samples, .. } = self {
            if samples.len() < 3 || samples.iter().any(|v| !v.is_finite()) {
                return Err(Error::validation("sampled pulse needs at least 3 finite samples"));
            }
        }
        Ok(())
    }
}

/// Transverse beam profile `A(z, |r|)`, even in `r` and independent of `z`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum BeamProfile {
    Bump { radius: f64 },
    Flat { radius: f64 },
}

impl BeamProfile {
    pub fn radius(&self) -> f64 {
        match self {
            BeamProfile::Bump { radius } | BeamProfile::Flat { radius } => *radius,
        }
    }

    pub fn eval(&self, _z: f64, r: f64) -> f64 {
        let radius = self.radius();
        match self {
            BeamProfile::Bump { .. } => bump(r / radius),
            BeamProfile::Flat { .. } => {
                if r.abs() < radius {
                    1.0
                } else {
                    0.0
                }
            }
        }
    }

    /// `∫ A(z, |r|) dr` over the transverse line.
    pub fn transverse_integral(&self, z: f64) -> f64 {
        self.transverse_integral_over(z, -self.radius(), self.radius())
    }

    /// `∫_a^b A(z, |r|) dr` by composite Simpson on 4096 panels.
    pub fn transverse_integral_over(&self, z: f64, a: f64, b: f64) -> f64 {
        let radius = self.radius();
        let (a, b) = (a.max(-radius), b.min(radius));
        if b <= a {
            return 0.0;
        }
        if let BeamProfile::Flat { .. } = self {
            return b - a;
        }
        let n = 4096;
        let h = (b - a) / n as f64;
        let mut s = self.eval(z, a) + self.eval(z, b);
        for i in 1..n {
            let w = if i % 2 == 1 { 4.0 } else { 2.0 };
            s += w * self.eval(z, a + i as f64 * h);
        }
        s * h / 3.0
    }
}

/// One acoustic pulse: launch point, direction and profiles.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PulseSpec {
    pub origin: Point,
    pub direction: [f64; 2],
    pub pulse: PulseProfile,
    pub beam: BeamProfile,
    /// Sound speed; time and travel distance are related by `z = ct`.
    pub speed: f64,
    /// Magnetic coupling `|B|/e⁺` multiplying the induced current.
    #[serde(default = "unit")]
    pub coupling: f64,
}

fn unit() -> f64 {
    1.0
}

impl PulseSpec {
    pub fn new(
        origin: Point,
        direction: [f64; 2],
        pulse: PulseProfile,
        beam: BeamProfile,
        speed: f64,
    ) -> Result<Self> {
        let spec = PulseSpec { origin, direction, pulse, beam, speed, coupling: 1.0 };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        let norm = self.direction[0].hypot(self.direction[1]);
        if (norm - 1.0).abs() > 1e-12 {
            return Err(Error::validation(format!("pulse direction has norm {norm}, expected 1")));
        }
        if !(self.speed > 0.0) {
            return Err(Error::validation("sound speed must be positive"));
        }
        if !(self.beam.radius() > 0.0) {
            return Err(Error::validation("beam radius must be positive"));
        }
        if !(self.coupling.is_finite()) {
            return Err(Error::validation("coupling must be finite"));
        }
        self.pulse.validate()
    }

    /// Unit vector orthogonal to the pulse direction, `τ = (−ξ₂, ξ₁)`.
    pub fn tau(&self) -> [f64; 2] {
        perp(self.direction)
    }

    /// Beam coordinates `(z, r)` of `x`: travel distance and signed offset.
    pub fn beam_coords(&self, x: Point) -> (f64, f64) {
        let d = [x[0] - self.origin[0], x[1] - self.origin[1]];
        let tau = self.tau();
        (
            d[0] * self.direction[0] + d[1] * self.direction[1],
            d[0] * tau[0] + d[1] * tau[1],
        )
    }

    /// Point with beam coordinates `(z, r)`.
    pub fn point_at(&self, z: f64, r: f64) -> Point {
        let tau = self.tau();
        [
            self.origin[0] + z * self.direction[0] + r * tau[0],
            self.origin[1] + z * self.direction[1] + r * tau[1],
        ]
    }

    /// Velocity amplitude `v(x, t)`.
    pub fn velocity(&self, x: Point, t: f64) -> f64 {
        let (z, r) = self.beam_coords(x);
        let w = self.pulse.eval(z - self.speed * t);
        if w == 0.0 {
            return 0.0;
        }
        w * self.beam.eval(z, r.abs())
    }

    /// Kernel `W(z) = w(−z)`, supported in `]0, η[`.
    pub fn kernel(&self, z: f64) -> f64 {
        self.pulse.eval(-z)
    }
}

/// Counterclockwise perpendicular `(−v₂, v₁)`.
pub fn perp(v: [f64; 2]) -> [f64; 2] {
    [-v[1], v[0]]
}
