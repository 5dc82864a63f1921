use serde::{Deserialize, Serialize};

use super::frames::window;
use super::spectral::PowerSpectrum;
use super::{FeatureError, FeatureVector, WindowKind};
use crate::audio::AudioBuffer;

/// HTK mel scale: `2595 log10(1 + f / 700)`.
pub fn hz_to_mel(hz: f64) -> f64 {
    2595.0 * (1.0 + hz / 700.0).log10()
}

pub fn mel_to_hz(mel: f64) -> f64 {
    700.0 * (10f64.powf(mel / 2595.0) - 1.0)
}

/// Triangular filters with unit peak, centres equally spaced on the mel scale
/// between `fmin_hz` and `fmax_hz`. Each band is a sparse list of `(bin, weight)`.
pub fn mel_filterbank(
    n_mels: usize,
    fft_size: usize,
    sample_rate: u32,
    fmin_hz: f64,
    fmax_hz: f64,
) -> Vec<Vec<(usize, f64)>> {
    let (lo, hi) = (hz_to_mel(fmin_hz), hz_to_mel(fmax_hz));
    let edges: Vec<f64> = (0..n_mels + 2)
        .map(|i| mel_to_hz(lo + (hi - lo) * i as f64 / (n_mels + 1) as f64))
        .collect();
    let bin_hz = sample_rate as f64 / fft_size as f64;
    (0..n_mels)
        .map(|m| {
            let (l, c, r) = (edges[m], edges[m + 1], edges[m + 2]);
            (0..=fft_size / 2)
                .filter_map(|k| {
                    let f = k as f64 * bin_hz;
                    let w = if f > l && f <= c {
                        (f - l) / (c - l)
                    } else if f > c && f < r {
                        (r - f) / (r - c)
                    } else {
                        0.0
                    };
                    (w > 0.0).then_some((k, w))
                })
                .collect()
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MelSpecConfig {
    pub n_mels: usize,
    pub fft_size: usize,
    pub win_ms: f64,
    pub hop_ms: f64,
    pub fmin_hz: f64,
    pub fmax_hz: f64,
    pub log_floor_db: f64,
}

impl Default for MelSpecConfig {
    fn default() -> Self {
        Self {
            n_mels: 128,
            fft_size: 2048,
            win_ms: 25.0,
            hop_ms: 10.0,
            fmin_hz: 0.0,
            fmax_hz: 8000.0,
            log_floor_db: -100.0,
        }
    }
}

impl MelSpecConfig {
    fn validate(&self, rate: u32) -> Result<(usize, usize), FeatureError> {
        let win = (self.win_ms * rate as f64 / 1000.0).round() as usize;
        let hop = (self.hop_ms * rate as f64 / 1000.0).round() as usize;
        let problem = if self.n_mels == 0 {
            Some("n_mels must be at least 1".to_string())
        } else if self.fmax_hz > rate as f64 / 2.0 {
            Some(format!("fmax {} Hz above Nyquist", self.fmax_hz))
        } else if !(self.fmin_hz >= 0.0 && self.fmin_hz < self.fmax_hz) {
            Some(format!("bad band {}..{} Hz", self.fmin_hz, self.fmax_hz))
        } else if win == 0 || hop == 0 || self.fft_size < win {
            Some(format!("window {win} / hop {hop} / fft {}", self.fft_size))
        } else {
            None
        };
        match problem {
            Some(p) => Err(FeatureError::InvalidConfig(p)),
            None => Ok((win, hop)),
        }
    }
}

/// Log-power mel spectrogram, `frames x n_mels`, in dB.
#[derive(Debug, Clone, PartialEq)]
pub struct MelSpectrogram {
    pub values: Vec<Vec<f64>>,
    pub n_mels: usize,
}

/// Hann-windowed STFT power, scaled by the squared window sum, mapped onto the
/// mel filterbank and converted to `10 log10`, never below `log_floor_db`.
pub fn mel_spectrogram(buffer: &AudioBuffer, config: &MelSpecConfig) -> Result<MelSpectrogram, FeatureError> {
    let rate = buffer.sample_rate_hz();
    let (win, hop) = config.validate(rate)?;
    let x = buffer.samples();
    if x.len() < win {
        return Err(FeatureError::BufferTooShort {
            len: x.len(),
            frame_len: win,
        });
    }
    let w = window(WindowKind::Hann, win);
    let norm = w.iter().sum::<f64>().powi(2);
    let bank = mel_filterbank(config.n_mels, config.fft_size, rate, config.fmin_hz, config.fmax_hz);
    let floor = 10f64.powf(config.log_floor_db / 10.0);
    let mut spec = PowerSpectrum::new(config.fft_size);
    let n_frames = (x.len() - win) / hop + 1;
    let values = (0..n_frames)
        .map(|i| {
            let frame: Vec<f64> = x[i * hop..i * hop + win].iter().zip(&w).map(|(s, w)| s * w).collect();
            let power = spec.compute(&frame);
            bank.iter()
                .map(|band| {
                    let e: f64 = band.iter().map(|&(k, wt)| wt * power[k]).sum::<f64>() / norm;
                    10.0 * e.max(floor).log10()
                })
                .collect()
        })
        .collect();
    Ok(MelSpectrogram {
        values,
        n_mels: config.n_mels,
    })
}

/// Per-band mean and population standard deviation over frames.
pub fn melspec_summary(spec: &MelSpectrogram) -> FeatureVector {
    let n = spec.values.len() as f64;
    let mut names = Vec::with_capacity(2 * spec.n_mels);
    let mut values = Vec::with_capacity(2 * spec.n_mels);
    for m in 0..spec.n_mels {
        let mean = spec.values.iter().map(|r| r[m]).sum::<f64>() / n;
        let var = spec.values.iter().map(|r| (r[m] - mean).powi(2)).sum::<f64>() / n;
        names.push(format!("mel{m:03}_mean"));
        values.push(mean);
        names.push(format!("mel{m:03}_std"));
        values.push(var.sqrt());
    }
    FeatureVector::new(names, values).expect("finite mel statistics")
}
