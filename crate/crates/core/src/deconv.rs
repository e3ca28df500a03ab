//! Wiener deconvolution of measurement curves.
//!
//! A curve is modelled as `M_k = Δz Σ_m W_m Φ_{k−m}` (see
//! [`crate::forward::convolve_causal`]). In the frequency domain the filter
//! is `L̂ = conj(Ŵ) / (|Ŵ|² + r·max|Ŵ|²)` with `r` the configured
//! noise-to-signal ratio. `r` is measured relative to the kernel's peak
//! power so it does not depend on Δz or on the pulse amplitude.

use rustfft::num_complex::Complex64;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Bins with `|Ŵ|² < CUTOFF · max|Ŵ|²` are dropped instead of amplified.
pub const CUTOFF: f64 = 1e-14;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct WienerConfig {
    /// Per-sample noise variance ν² of the curve; only its sign matters
    /// here (a noisy curve needs a positive `snr`).
    pub noise_variance: f64,
    /// Noise-to-signal ratio `r`; see [`estimate_snr`].
    pub snr: f64,
    /// Transform length; `None` picks the next power of two at or above
    /// twice the padded length.
    pub fft_size: Option<usize>,
    /// Fraction of trailing samples tapered to zero by a half cosine.
    pub taper: f64,
}

impl Default for WienerConfig {
    fn default() -> Self {
        WienerConfig { noise_variance: 0.0, snr: 0.0, fft_size: None, taper: 0.05 }
    }
}

impl WienerConfig {
    pub fn with_snr(snr: f64) -> Self {
        WienerConfig { snr, ..Default::default() }
    }

    fn validate(&self, len: usize) -> Result<()> {
        if !(self.noise_variance >= 0.0) {
            return Err(Error::validation("noise variance must be non-negative"));
        }
        if !(self.snr >= 0.0) || !self.snr.is_finite() {
            return Err(Error::validation("noise-to-signal ratio must be finite and non-negative"));
        }
        if self.noise_variance > 0.0 && self.snr <= 0.0 {
            return Err(Error::validation("noisy curves need a positive noise-to-signal ratio"));
        }
        if !(0.0..0.5).contains(&self.taper) {
            return Err(Error::validation("taper fraction must lie in [0, 0.5)"));
        }
        if let Some(n) = self.fft_size {
            if n < len {
                return Err(Error::validation(format!("fft size {n} shorter than curve length {len}")));
            }
        }
        Ok(())
    }

    fn size_for(&self, curve: usize, kernel: usize) -> usize {
        self.fft_size.unwrap_or_else(|| (2 * curve.max(kernel)).next_power_of_two())
    }
}

/// Zero-padded spectrum `Δz · DFT(x)` of length `n`.
fn spectrum(x: &[f64], n: usize, dz: f64) -> Vec<Complex64> {
    let mut buf: Vec<Complex64> = (0..n)
        .map(|i| Complex64::new(x.get(i).copied().unwrap_or(0.0) * dz, 0.0))
        .collect();
    FftPlanner::new().plan_fft_forward(n).process(&mut buf);
    buf
}

/// Discrete kernel transform `Ŵ_k = Δz Σ_m W_m e^{−2πikm/n}`.
pub fn kernel_spectrum(kernel: &[f64], n: usize, dz: f64) -> Vec<Complex64> {
    spectrum(kernel, n, dz)
}

/// Per-bin filter `L̂` for a transform of length `n`; dropped bins are 0.
pub fn filter_gain(kernel: &[f64], n: usize, dz: f64, snr: f64) -> Result<Vec<Complex64>> {
    let w = kernel_spectrum(kernel, n, dz);
    let peak = w.iter().fold(0.0f64, |m, c| m.max(c.norm_sqr()));
    if peak == 0.0 || !peak.is_finite() {
        return Err(Error::validation("deconvolution kernel is zero"));
    }
    Ok(w.iter()
        .map(|c| {
            let p = c.norm_sqr();
            if p < CUTOFF * peak {
                Complex64::new(0.0, 0.0)
            } else {
                c.conj() / (p + snr * peak)
            }
        })
        .collect())
}

fn tapered(curve: &[f64], fraction: f64) -> Vec<f64> {
    let n = curve.len();
    let m = (fraction * n as f64).round() as usize;
    let mut out = curve.to_vec();
    for i in 0..m {
        // weight runs from just below 1 down to 0 at the last sample
        let s = (i + 1) as f64 / m as f64;
        out[n - m + i] *= 0.5 * (1.0 + (std::f64::consts::PI * s).cos());
    }
    out
}

/// Deconvolves `curve` by the sampled kernel `W_m = w(−mΔz)`.
pub fn wiener_deconvolve(curve: &[f64], kernel: &[f64], dz: f64, cfg: &WienerConfig) -> Result<Vec<f64>> {
    cfg.validate(curve.len())?;
    if curve.iter().chain(kernel).any(|v| !v.is_finite()) {
        return Err(Error::validation("curve and kernel must be finite"));
    }
    if !(dz > 0.0) {
        return Err(Error::validation("sample spacing must be positive"));
    }
    if curve.is_empty() {
        return Ok(Vec::new());
    }
    let n = cfg.size_for(curve.len(), kernel.len());
    let gain = filter_gain(kernel, n, dz, cfg.snr)?;
    let mut buf = spectrum(&tapered(curve, cfg.taper), n, 1.0);
    for (b, g) in buf.iter_mut().zip(&gain) {
        *b *= g;
    }
    FftPlanner::new().plan_fft_inverse(n).process(&mut buf);
    Ok(buf[..curve.len()].iter().map(|c| c.re / n as f64).collect())
}

/// Fraction of the Nyquist band below which `|Ŵ|²` stays above `1e-8`
/// of its peak.
pub fn kernel_bandwidth(kernel: &[f64], n: usize) -> f64 {
    let w = kernel_spectrum(kernel, n, 1.0);
    let half = n / 2;
    let peak = w[..=half].iter().fold(0.0f64, |m, c| m.max(c.norm_sqr()));
    if peak == 0.0 {
        return 0.0;
    }
    let last = (0..=half).rev().find(|&k| w[k].norm_sqr() >= 1e-8 * peak).unwrap_or(0);
    last as f64 / half as f64
}

/// Estimates the noise-to-signal ratio of a curve as an amplitude ratio:
/// RMS of the spectral tail over RMS of the remaining bins (with the tail
/// level removed). The tail is the top quartile of frequencies, moved up
/// to `kernel_bandwidth` (a fraction of Nyquist) when that is higher but
/// never narrower than the top eighth. Capped at 1e3.
pub fn estimate_snr(curve: &[f64], kernel_bandwidth: f64) -> f64 {
    let n = curve.len();
    if n < 2 || curve.iter().all(|&v| v == 0.0) {
        return 0.0;
    }
    let spec = spectrum(curve, n, 1.0);
    let half = n / 2;
    let edge = kernel_bandwidth.clamp(0.75, 0.875);
    let start = ((edge * half as f64).ceil() as usize).clamp(1, half);
    let power = |range: std::ops::Range<usize>| {
        let len = range.len().max(1) as f64;
        spec[range].iter().map(|c| c.norm_sqr()).sum::<f64>() / len
    };
    let noise = power(start..half + 1);
    let signal = power(0..start) - noise;
    if noise == 0.0 {
        return 0.0;
    }
    if signal <= noise * 1e-6 {
        return 1e3;
    }
    (noise / signal).sqrt().min(1e3)
}
