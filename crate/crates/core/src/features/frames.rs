use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use super::FeatureError;
use crate::audio::AudioBuffer;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum WindowKind {
    Hann,
    Hamming,
    Gauss,
}

/// Framing parameters. `frame_ms >= hop_ms > 0`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FrameConfig {
    pub frame_ms: f64,
    pub hop_ms: f64,
    pub window: WindowKind,
}

impl Default for FrameConfig {
    fn default() -> Self {
        Self {
            frame_ms: 25.0,
            hop_ms: 10.0,
            window: WindowKind::Hann,
        }
    }
}

impl FrameConfig {
    pub fn validate(&self) -> Result<(), FeatureError> {
        if !(self.hop_ms > 0.0 && self.frame_ms >= self.hop_ms) {
            return Err(FeatureError::InvalidConfig(format!(
                "need frame_ms >= hop_ms > 0, got {} / {}",
                self.frame_ms, self.hop_ms
            )));
        }
        Ok(())
    }

    pub fn frame_len(&self, rate: u32) -> usize {
        ((self.frame_ms * rate as f64 / 1000.0).round() as usize).max(1)
    }

    pub fn hop_len(&self, rate: u32) -> usize {
        ((self.hop_ms * rate as f64 / 1000.0).round() as usize).max(1)
    }

    /// `floor((len - frame_len) / hop) + 1`, or an error when `len < frame_len`.
    pub fn frame_count(&self, len: usize, rate: u32) -> Result<usize, FeatureError> {
        self.validate()?;
        let frame_len = self.frame_len(rate);
        if len < frame_len {
            return Err(FeatureError::BufferTooShort { len, frame_len });
        }
        Ok((len - frame_len) / self.hop_len(rate) + 1)
    }
}

const GAUSS_SIGMA: f64 = 0.4;

/// Symmetric window of length `n` (the centre sample of an odd-length Hann is 1).
pub fn window(kind: WindowKind, n: usize) -> Vec<f64> {
    if n == 1 {
        return vec![1.0];
    }
    let m = (n - 1) as f64;
    (0..n)
        .map(|i| {
            let x = i as f64;
            match kind {
                WindowKind::Hann => 0.5 - 0.5 * (2.0 * PI * x / m).cos(),
                WindowKind::Hamming => 0.54 - 0.46 * (2.0 * PI * x / m).cos(),
                WindowKind::Gauss => {
                    let z = (x - m / 2.0) / (GAUSS_SIGMA * m / 2.0);
                    (-0.5 * z * z).exp()
                }
            }
        })
        .collect()
}

/// Splits the buffer into overlapping frames, each multiplied by the window.
pub fn frame_signal(buffer: &AudioBuffer, config: &FrameConfig) -> Result<Vec<Vec<f64>>, FeatureError> {
    let rate = buffer.sample_rate_hz();
    let n = config.frame_count(buffer.len(), rate)?;
    let frame_len = config.frame_len(rate);
    let hop = config.hop_len(rate);
    let w = window(config.window, frame_len);
    let x = buffer.samples();
    Ok((0..n)
        .map(|i| {
            x[i * hop..i * hop + frame_len]
                .iter()
                .zip(&w)
                .map(|(s, w)| s * w)
                .collect()
        })
        .collect())
}
