use serde::{Deserialize, Serialize};

use super::{FeatureError, FrameConfig};
use crate::audio::AudioBuffer;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PitchConfig {
    pub fmin_hz: f64,
    pub fmax_hz: f64,
    pub voicing_threshold: f64,
}

impl Default for PitchConfig {
    fn default() -> Self {
        Self {
            fmin_hz: 60.0,
            fmax_hz: 500.0,
            voicing_threshold: 0.45,
        }
    }
}

/// Per-frame pitch estimates.
#[derive(Debug, Clone, PartialEq)]
pub struct PitchTrack {
    /// `None` on unvoiced frames.
    pub f0_hz: Vec<Option<f64>>,
    /// `1 - min(cmndf)`, clamped to `[0, 1]`.
    pub voicing_prob: Vec<f64>,
    /// Sample range `[start, start + len)` each estimate was computed over.
    pub windows: Vec<(usize, usize)>,
}

impl PitchTrack {
    pub fn voicing_mask(&self) -> Vec<bool> {
        self.f0_hz.iter().map(Option::is_some).collect()
    }
}

/// YIN-style F0 tracking.
///
/// Each frame is analysed over `frame_len + tau_max` raw samples centred on
/// the frame centre (shifted to stay inside the buffer). The cumulative-mean
/// normalized difference function is searched for the first dip below the
/// voicing threshold, followed down to its local minimum and refined by
/// parabolic interpolation. Frames whose best dip stays above the threshold
/// are unvoiced.
pub fn f0_contour(
    buffer: &AudioBuffer,
    frames: &FrameConfig,
    config: &PitchConfig,
) -> Result<PitchTrack, FeatureError> {
    let rate = buffer.sample_rate_hz();
    let sr = rate as f64;
    if !(config.fmin_hz > 0.0 && config.fmax_hz > config.fmin_hz) {
        return Err(FeatureError::InvalidConfig(format!(
            "pitch range {}..{} Hz",
            config.fmin_hz, config.fmax_hz
        )));
    }
    if sr < 2.0 * config.fmax_hz {
        return Err(FeatureError::InvalidConfig(format!(
            "sample rate {rate} Hz below twice fmax {} Hz",
            config.fmax_hz
        )));
    }
    let n_frames = frames.frame_count(buffer.len(), rate)?;
    let frame_len = frames.frame_len(rate);
    let hop = frames.hop_len(rate);
    let x = buffer.samples();
    let tau_min = ((sr / config.fmax_hz).floor() as usize).max(2);
    let tau_max_full = (sr / config.fmin_hz).ceil() as usize;

    let mut track = PitchTrack {
        f0_hz: Vec::with_capacity(n_frames),
        voicing_prob: Vec::with_capacity(n_frames),
        windows: Vec::with_capacity(n_frames),
    };
    let mut diff = Vec::new();
    for i in 0..n_frames {
        let centre = i * hop + frame_len / 2;
        let (start, width, tau_max) = if x.len() >= frame_len + tau_max_full {
            let span = frame_len + tau_max_full;
            let start = centre.saturating_sub(span / 2).min(x.len() - span);
            (start, frame_len, tau_max_full)
        } else {
            let tau_max = (x.len() / 2).min(tau_max_full);
            (0, x.len() - tau_max, tau_max)
        };
        let region = &x[start..start + width + tau_max];
        track.windows.push((start, width + tau_max));
        let energy: f64 = region.iter().map(|v| v * v).sum();
        if tau_max <= tau_min + 1 || energy < 1e-20 {
            track.f0_hz.push(None);
            track.voicing_prob.push(0.0);
            continue;
        }
        let (f0, dmin) = yin_frame(region, width, tau_min, tau_max, config.voicing_threshold, &mut diff);
        track.voicing_prob.push((1.0 - dmin).clamp(0.0, 1.0));
        track.f0_hz.push(f0.map(|tau| sr / tau));
    }
    Ok(track)
}

/// Returns the refined period in samples (if voiced) and the dip depth.
fn yin_frame(
    region: &[f64],
    width: usize,
    tau_min: usize,
    tau_max: usize,
    threshold: f64,
    cmndf: &mut Vec<f64>,
) -> (Option<f64>, f64) {
    cmndf.clear();
    cmndf.resize(tau_max + 1, 1.0);
    let mut running = 0.0;
    for tau in 1..=tau_max {
        let d: f64 = region[..width]
            .iter()
            .zip(&region[tau..tau + width])
            .map(|(a, b)| (a - b) * (a - b))
            .sum();
        running += d;
        cmndf[tau] = if running > 0.0 { d * tau as f64 / running } else { 1.0 };
    }

    let mut best = None;
    let mut tau = tau_min;
    while tau <= tau_max {
        if cmndf[tau] < threshold {
            while tau < tau_max && cmndf[tau + 1] < cmndf[tau] {
                tau += 1;
            }
            best = Some(tau);
            break;
        }
        tau += 1;
    }
    let best = best.unwrap_or_else(|| {
        (tau_min..=tau_max)
            .min_by(|&a, &b| cmndf[a].total_cmp(&cmndf[b]))
            .expect("non-empty lag range")
    });
    let dmin = cmndf[best];
    if dmin >= threshold {
        return (None, dmin);
    }
    let refined = if best > tau_min && best < tau_max {
        let (a, b, c) = (cmndf[best - 1], cmndf[best], cmndf[best + 1]);
        let denom = a - 2.0 * b + c;
        if denom > 0.0 {
            best as f64 + 0.5 * (a - c) / denom
        } else {
            best as f64
        }
    } else {
        best as f64
    };
    (Some(refined), dmin)
}
