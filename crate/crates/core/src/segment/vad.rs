use super::{SegmentError, SegmentKind, SegmentSpan, Vowel};
use crate::audio::AudioBuffer;

/// Parameters of the energy detector. Durations in milliseconds, threshold in
/// dB relative to the loudest frame.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VadConfig {
    pub frame_ms: f64,
    pub hop_ms: f64,
    pub threshold_db: f64,
    pub min_seg_ms: f64,
    pub min_gap_ms: f64,
}

impl Default for VadConfig {
    fn default() -> Self {
        Self {
            frame_ms: 25.0,
            hop_ms: 10.0,
            threshold_db: -35.0,
            min_seg_ms: 200.0,
            min_gap_ms: 300.0,
        }
    }
}

/// Width of the sub-windows used to place span edges inside boundary frames.
const EDGE_REFINE_MS: f64 = 1.0;

fn rms(x: &[f64]) -> f64 {
    if x.is_empty() {
        return 0.0;
    }
    (x.iter().map(|v| v * v).sum::<f64>() / x.len() as f64).sqrt()
}

/// Finds speech-like regions by frame energy.
///
/// Frames whose RMS exceeds the loudest frame's RMS lowered by
/// `threshold_db` are active. Runs of active frames become spans whose edges
/// are then refined to 1 ms resolution inside the first and last frame. Gaps
/// shorter than `min_gap_ms` are bridged, then spans shorter than `min_seg_ms`
/// are dropped. Every span gets `kind` and `vowel`.
pub fn energy_vad(
    buffer: &AudioBuffer,
    config: &VadConfig,
    kind: SegmentKind,
    vowel: Option<Vowel>,
) -> Result<Vec<SegmentSpan>, SegmentError> {
    let rate = buffer.sample_rate_hz() as f64;
    let frame_len = ((config.frame_ms * rate / 1000.0).round() as usize).max(1);
    let hop = ((config.hop_ms * rate / 1000.0).round() as usize).max(1);
    let x = buffer.samples();
    if x.len() < frame_len {
        return Err(SegmentError::BufferTooShort {
            len: x.len(),
            frame_len,
        });
    }
    let n_frames = (x.len() - frame_len) / hop + 1;
    let energies: Vec<f64> = (0..n_frames).map(|i| rms(&x[i * hop..i * hop + frame_len])).collect();
    let max_rms = energies.iter().cloned().fold(0.0, f64::max);
    if max_rms == 0.0 {
        return Ok(Vec::new());
    }
    let threshold = max_rms * 10f64.powf(config.threshold_db / 20.0);

    // Active frame runs as sample ranges.
    let mut runs: Vec<(usize, usize)> = Vec::new();
    let mut i = 0;
    while i < n_frames {
        if energies[i] > threshold {
            let first = i;
            while i + 1 < n_frames && energies[i + 1] > threshold {
                i += 1;
            }
            runs.push((first, i));
        }
        i += 1;
    }

    let sub = ((EDGE_REFINE_MS * rate / 1000.0).round() as usize).max(1);
    let mut regions: Vec<(usize, usize)> = runs
        .into_iter()
        .map(|(first, last)| {
            let f_start = first * hop;
            let l_start = last * hop;
            let l_end = l_start + frame_len;
            let start = (f_start..f_start + frame_len)
                .step_by(sub)
                .find(|&s| rms(&x[s..(s + sub).min(x.len())]) > threshold)
                .unwrap_or(f_start);
            let end = (l_start..l_end)
                .step_by(sub)
                .rev()
                .find(|&s| rms(&x[s..(s + sub).min(x.len())]) > threshold)
                .map(|s| (s + sub).min(x.len()))
                .unwrap_or(l_end);
            (start, end.max(start + 1))
        })
        .collect();

    let min_gap = (config.min_gap_ms * rate / 1000.0).round() as usize;
    let mut merged: Vec<(usize, usize)> = Vec::with_capacity(regions.len());
    for (s, e) in regions.drain(..) {
        match merged.last_mut() {
            Some(prev) if s <= prev.1 || s - prev.1 < min_gap => prev.1 = prev.1.max(e),
            _ => merged.push((s, e)),
        }
    }

    let min_seg = (config.min_seg_ms * rate / 1000.0).round() as usize;
    Ok(merged
        .into_iter()
        .filter(|(s, e)| e - s >= min_seg)
        .map(|(s, e)| {
            let mut span = SegmentSpan::new(s as f64 / rate, e as f64 / rate, kind);
            span.vowel_label = vowel;
            span
        })
        .collect())
}
