use std::f64::consts::PI;
use std::sync::Arc;

use rustfft::{num_complex::Complex, Fft, FftPlanner};

/// RMS energy floor (1e-5 linear).
pub const ENERGY_FLOOR_DB: f64 = -100.0;

const POWER_FLOOR: f64 = 1e-12;
const LOG_MEL_FLOOR: f64 = 1e-10;

pub(crate) struct PowerSpectrum {
    fft: Arc<dyn Fft<f64>>,
    scratch: Vec<Complex<f64>>,
}

impl PowerSpectrum {
    pub fn new(fft_size: usize) -> Self {
        Self {
            fft: FftPlanner::new().plan_fft_forward(fft_size),
            scratch: vec![Complex::new(0.0, 0.0); fft_size],
        }
    }

    /// `|X_k|^2` for `k = 0..=n/2` of the zero-padded frame.
    pub fn compute(&mut self, frame: &[f64]) -> Vec<f64> {
        let n = self.scratch.len();
        for (i, s) in self.scratch.iter_mut().enumerate() {
            *s = Complex::new(frame.get(i).copied().unwrap_or(0.0), 0.0);
        }
        self.fft.process(&mut self.scratch);
        self.scratch[..=n / 2].iter().map(|c| c.norm_sqr()).collect()
    }
}

pub(crate) fn rms_db(raw: &[f64]) -> f64 {
    let rms = (raw.iter().map(|v| v * v).sum::<f64>() / raw.len() as f64).sqrt();
    20.0 * rms.max(10f64.powf(ENERGY_FLOOR_DB / 20.0)).log10()
}

/// Sign changes per sample; zero counts as positive.
pub(crate) fn zero_crossing_rate(raw: &[f64]) -> f64 {
    if raw.len() < 2 {
        return 0.0;
    }
    let crossings = raw.windows(2).filter(|w| (w[0] >= 0.0) != (w[1] >= 0.0)).count();
    crossings as f64 / (raw.len() - 1) as f64
}

pub(crate) fn centroid(power: &[f64], bin_hz: f64) -> f64 {
    let total: f64 = power.iter().sum();
    if total <= 0.0 {
        return 0.0;
    }
    power
        .iter()
        .enumerate()
        .map(|(k, p)| k as f64 * bin_hz * p)
        .sum::<f64>()
        / total
}

pub(crate) fn rolloff(power: &[f64], bin_hz: f64, fraction: f64) -> f64 {
    let total: f64 = power.iter().sum();
    if total <= 0.0 {
        return 0.0;
    }
    let mut acc = 0.0;
    for (k, p) in power.iter().enumerate() {
        acc += p;
        if acc >= fraction * total {
            return k as f64 * bin_hz;
        }
    }
    (power.len() - 1) as f64 * bin_hz
}

/// Least-squares slope of the dB power spectrum over `[lo_hz, hi_hz]`, in dB/kHz.
pub(crate) fn band_slope(power: &[f64], bin_hz: f64, lo_hz: f64, hi_hz: f64) -> f64 {
    let pts: Vec<(f64, f64)> = power
        .iter()
        .enumerate()
        .map(|(k, &p)| (k as f64 * bin_hz, p))
        .filter(|&(f, _)| f >= lo_hz && f <= hi_hz)
        .map(|(f, p)| (f / 1000.0, 10.0 * p.max(POWER_FLOOR).log10()))
        .collect();
    if pts.len() < 2 {
        return 0.0;
    }
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    if sxx == 0.0 {
        0.0
    } else {
        sxy / sxx
    }
}

/// Magnitude spectrum scaled to unit sum (all zeros for a silent frame).
pub(crate) fn normalized_magnitude(power: &[f64]) -> Vec<f64> {
    let mag: Vec<f64> = power.iter().map(|p| p.sqrt()).collect();
    let total: f64 = mag.iter().sum();
    if total <= 0.0 {
        return vec![0.0; mag.len()];
    }
    mag.iter().map(|m| m / total).collect()
}

pub(crate) fn flux(prev: &[f64], cur: &[f64]) -> f64 {
    prev.iter().zip(cur).map(|(a, b)| (b - a).powi(2)).sum::<f64>().sqrt()
}

/// Orthonormal DCT-II of the natural-log filterbank energies, first `n_ceps` terms:
/// `c_k = s_k * sum_m ln(E_m) cos(pi k (m + 1/2) / M)`, `s_0 = sqrt(1/M)`, `s_k = sqrt(2/M)`.
pub(crate) fn mfcc(power: &[f64], filterbank: &[Vec<(usize, f64)>], n_ceps: usize) -> Vec<f64> {
    let m = filterbank.len();
    let log_e: Vec<f64> = filterbank
        .iter()
        .map(|band| {
            let e: f64 = band.iter().map(|&(k, w)| w * power[k]).sum();
            e.max(LOG_MEL_FLOOR).ln()
        })
        .collect();
    (0..n_ceps)
        .map(|k| {
            let scale = if k == 0 {
                (1.0 / m as f64).sqrt()
            } else {
                (2.0 / m as f64).sqrt()
            };
            scale
                * log_e
                    .iter()
                    .enumerate()
                    .map(|(j, e)| e * (PI * k as f64 * (j as f64 + 0.5) / m as f64).cos())
                    .sum::<f64>()
        })
        .collect()
}
