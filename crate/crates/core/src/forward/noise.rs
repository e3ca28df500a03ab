use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use super::measure::MeasurementSet;
use crate::error::{Error, Result};

/// Adds i.i.d. `N(0, ν²)` noise to every sample. Curve `p` draws from
/// stream `p` of a ChaCha8 generator seeded with `seed`, so the result does
/// not depend on how curves are scheduled.
pub fn add_noise(set: &MeasurementSet, nu: f64, seed: u64) -> Result<MeasurementSet> {
    if !(nu >= 0.0) || !nu.is_finite() {
        return Err(Error::validation(format!("noise level must be a finite ν ≥ 0, got {nu}")));
    }
    let mut out = set.clone();
    out.noise_level = (set.noise_level.powi(2) + nu * nu).sqrt();
    if nu == 0.0 {
        return Ok(out);
    }
    let normal = Normal::new(0.0, nu).expect("valid standard deviation");
    for (p, curve) in out.curves.iter_mut().enumerate() {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(p as u64);
        for v in curve.iter_mut() {
            *v += normal.sample(&mut rng);
        }
    }
    Ok(out)
}
