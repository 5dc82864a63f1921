use super::mel::mel_filterbank;
use super::pitch::{f0_contour, PitchConfig};
#[cfg(test)]
use super::spectral::ENERGY_FLOOR_DB;
use super::spectral::{self, PowerSpectrum};
use super::voice::{self, cycle_amplitudes, cycle_marks_with, cycle_periods, GlottalCycle};
use super::{frames::window, FeatureError, FrameConfig};
use crate::audio::AudioBuffer;

use std::collections::HashMap;
use std::rc::Rc;

/// Reference frequency of the semitone F0 scale (A0).
pub const SEMITONE_REF_HZ: f64 = 27.5;

const MFCC_BANDS: usize = 26;
const MFCC_COEFFS: usize = 13;
const ROLLOFF_FRACTION: f64 = 0.85;
/// Half-width of the neighbourhood whose glottal cycles feed per-frame jitter/shimmer.
const PERTURBATION_HALF_WINDOW_S: f64 = 0.03;
const MIN_CYCLES: usize = 3;

/// Descriptor columns in output order, with their voiced-only flag.
pub const DESCRIPTORS: [(&str, bool); 26] = [
    ("f0_semitone", true),
    ("f0_hz", true),
    ("voicing_prob", false),
    ("jitter_local", true),
    ("shimmer_local", true),
    ("hnr_db", true),
    ("energy_rms_db", false),
    ("zcr", false),
    ("spectral_centroid_hz", false),
    ("spectral_slope_0_500", false),
    ("spectral_slope_500_1500", false),
    ("spectral_flux", false),
    ("spectral_rolloff85_hz", false),
    ("mfcc_0", false),
    ("mfcc_1", false),
    ("mfcc_2", false),
    ("mfcc_3", false),
    ("mfcc_4", false),
    ("mfcc_5", false),
    ("mfcc_6", false),
    ("mfcc_7", false),
    ("mfcc_8", false),
    ("mfcc_9", false),
    ("mfcc_10", false),
    ("mfcc_11", false),
    ("mfcc_12", false),
];

pub fn is_voiced_only(descriptor: &str) -> bool {
    DESCRIPTORS.iter().any(|&(n, v)| v && n == descriptor)
}

/// Frame-by-descriptor contour matrix. Absent cells (`None`) mark
/// voiced-only descriptors that could not be measured on a frame.
#[derive(Debug, Clone, PartialEq)]
pub struct LldMatrix {
    values: Vec<Option<f64>>,
    descriptor_names: Vec<String>,
    n_frames: usize,
    pub hop_ms: f64,
    pub voicing_mask: Vec<bool>,
}

impl LldMatrix {
    /// Builds a matrix from frame rows; names must be unique and rows complete.
    pub fn from_rows(
        descriptor_names: Vec<String>,
        rows: Vec<Vec<Option<f64>>>,
        hop_ms: f64,
        voicing_mask: Vec<bool>,
    ) -> Result<Self, FeatureError> {
        let mut seen = std::collections::HashSet::new();
        if let Some(dup) = descriptor_names.iter().find(|n| !seen.insert(n.as_str())) {
            return Err(FeatureError::InvalidConfig(format!("duplicate descriptor `{dup}`")));
        }
        if rows.len() != voicing_mask.len() {
            return Err(FeatureError::InvalidConfig(
                "voicing mask length differs from frame count".into(),
            ));
        }
        let width = descriptor_names.len();
        let n_frames = rows.len();
        let mut values = Vec::with_capacity(width * n_frames);
        for row in rows {
            if row.len() != width {
                return Err(FeatureError::LengthMismatch {
                    names: width,
                    values: row.len(),
                });
            }
            if let Some(i) = row.iter().position(|v| v.is_some_and(|x| !x.is_finite())) {
                return Err(FeatureError::NonFinite(descriptor_names[i].clone()));
            }
            values.extend(row);
        }
        Ok(Self {
            values,
            descriptor_names,
            n_frames,
            hop_ms,
            voicing_mask,
        })
    }

    pub fn n_frames(&self) -> usize {
        self.n_frames
    }

    pub fn descriptor_names(&self) -> &[String] {
        &self.descriptor_names
    }

    pub fn get(&self, frame: usize, col: usize) -> Option<f64> {
        self.values[frame * self.descriptor_names.len() + col]
    }

    pub fn column_index(&self, name: &str) -> Option<usize> {
        self.descriptor_names.iter().position(|n| n == name)
    }

    pub fn column(&self, col: usize) -> Vec<Option<f64>> {
        (0..self.n_frames).map(|f| self.get(f, col)).collect()
    }
}

/// Computes the descriptor matrix with the default pitch settings.
pub fn compute_lld(buffer: &AudioBuffer, config: &FrameConfig) -> Result<LldMatrix, FeatureError> {
    compute_lld_with(buffer, config, &PitchConfig::default())
}

pub(crate) fn compute_lld_with(
    buffer: &AudioBuffer,
    config: &FrameConfig,
    pitch: &PitchConfig,
) -> Result<LldMatrix, FeatureError> {
    let rate = buffer.sample_rate_hz();
    let sr = rate as f64;
    let n_frames = config.frame_count(buffer.len(), rate)?;
    let frame_len = config.frame_len(rate);
    let hop = config.hop_len(rate);
    let x = buffer.samples();
    let track = f0_contour(buffer, config, pitch)?;

    let fft_size = frame_len.next_power_of_two();
    let mut spectrum = PowerSpectrum::new(fft_size);
    let bin_hz = sr / fft_size as f64;
    let bank = mel_filterbank(MFCC_BANDS, fft_size, rate, 0.0, sr / 2.0);
    let w = window(config.window, frame_len);

    let cycles = voiced_run_cycles(x, &track.f0_hz, rate, frame_len, hop);
    let half = (PERTURBATION_HALF_WINDOW_S * sr).round() as usize;

    let mut rows = Vec::with_capacity(n_frames);
    let mut prev_mag: Option<Vec<f64>> = None;
    for i in 0..n_frames {
        let start = i * hop;
        let raw = &x[start..start + frame_len];
        let windowed: Vec<f64> = raw.iter().zip(&w).map(|(s, w)| s * w).collect();
        let power = spectrum.compute(&windowed);
        let mag = spectral::normalized_magnitude(&power);
        let flux = prev_mag.as_ref().map_or(0.0, |p| spectral::flux(p, &mag));
        prev_mag = Some(mag);

        let f0 = track.f0_hz[i];
        let (jitter, shimmer) = match (f0, cycles.get(&i)) {
            (Some(_), Some(run)) => {
                let centre = start + frame_len / 2;
                let local: Vec<GlottalCycle> = run
                    .iter()
                    .filter(|c| c.index + half >= centre && c.index <= centre + half)
                    .copied()
                    .collect();
                if local.len() >= MIN_CYCLES {
                    (
                        voice::jitter_local(&cycle_periods(&local, rate)).ok(),
                        voice::shimmer_local(&cycle_amplitudes(&local)).ok(),
                    )
                } else {
                    (None, None)
                }
            }
            _ => (None, None),
        };
        let hnr = f0.and_then(|f| {
            let (s, len) = track.windows[i];
            voice::hnr_db(&x[s..s + len], rate, f).ok()
        });

        let mut row = Vec::with_capacity(DESCRIPTORS.len());
        row.push(f0.map(|f| 12.0 * (f / SEMITONE_REF_HZ).log2()));
        row.push(f0);
        row.push(Some(track.voicing_prob[i]));
        row.push(jitter);
        row.push(shimmer);
        row.push(hnr);
        row.push(Some(spectral::rms_db(raw)));
        row.push(Some(spectral::zero_crossing_rate(raw)));
        row.push(Some(spectral::centroid(&power, bin_hz)));
        row.push(Some(spectral::band_slope(&power, bin_hz, 0.0, 500.0)));
        row.push(Some(spectral::band_slope(&power, bin_hz, 500.0, 1500.0)));
        row.push(Some(flux));
        row.push(Some(spectral::rolloff(&power, bin_hz, ROLLOFF_FRACTION)));
        row.extend(spectral::mfcc(&power, &bank, MFCC_COEFFS).into_iter().map(Some));
        rows.push(row);
    }
    let names = DESCRIPTORS.iter().map(|(n, _)| n.to_string()).collect();
    LldMatrix::from_rows(names, rows, config.hop_ms, track.voicing_mask())
}

/// Glottal cycles for every voiced run, keyed by each frame of the run.
///
/// Cycle indices are absolute sample positions.
fn voiced_run_cycles(
    x: &[f64],
    f0: &[Option<f64>],
    rate: u32,
    frame_len: usize,
    hop: usize,
) -> HashMap<usize, Rc<Vec<GlottalCycle>>> {
    let mut out = HashMap::new();
    let mut i = 0;
    while i < f0.len() {
        if f0[i].is_none() {
            i += 1;
            continue;
        }
        let first = i;
        while i + 1 < f0.len() && f0[i + 1].is_some() {
            i += 1;
        }
        let last = i;
        let lo = first * hop;
        let hi = (last * hop + frame_len).min(x.len());
        let period_at = |k: usize| {
            let frame = ((lo + k).saturating_sub(frame_len / 2) / hop).clamp(first, last);
            f0[frame].map(|f| rate as f64 / f)
        };
        let cycles: Vec<GlottalCycle> = cycle_marks_with(&x[lo..hi], period_at)
            .into_iter()
            .map(|c| GlottalCycle {
                index: c.index + lo,
                ..c
            })
            .collect();
        let shared = Rc::new(cycles);
        for f in first..=last {
            out.insert(f, Rc::clone(&shared));
        }
        i += 1;
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::features::WindowKind;
    use std::f64::consts::PI;

    const SR: u32 = 16_000;

    fn sine(f: f64, amp: f64, secs: f64) -> AudioBuffer {
        let n = (secs * SR as f64) as usize;
        let x = (0..n)
            .map(|i| amp * (2.0 * PI * f * i as f64 / SR as f64).sin())
            .collect();
        AudioBuffer::new(x, SR, "sine").unwrap()
    }

    fn col(m: &LldMatrix, name: &str) -> Vec<Option<f64>> {
        m.column(m.column_index(name).unwrap())
    }

    #[test]
    fn tone_descriptors() {
        let m = compute_lld(&sine(220.0, 0.5, 0.5), &FrameConfig::default()).unwrap();
        assert_eq!(m.descriptor_names().len(), 26);
        for v in col(&m, "spectral_centroid_hz") {
            assert!((v.unwrap() - 220.0).abs() <= 20.0, "{v:?}");
        }
        for v in col(&m, "zcr") {
            assert!((v.unwrap() - 2.0 * 220.0 / 16_000.0).abs() < 0.003, "{v:?}");
        }
        assert!(m.voicing_mask.iter().all(|&v| v));
        let f0 = col(&m, "f0_hz");
        assert!(f0.iter().all(|f| (f.unwrap() - 220.0).abs() <= 1.0));
        let st = col(&m, "f0_semitone")[0].unwrap();
        assert!((st - 12.0 * (220.0f64 / 27.5).log2()).abs() < 0.1);
        // Interior frames see enough cycles for perturbation measures.
        let j = col(&m, "jitter_local");
        assert!(j[10].unwrap() < 1e-3);
        assert!(col(&m, "hnr_db")[10].unwrap() >= 30.0);
    }

    #[test]
    fn silence_is_floor_and_unvoiced() {
        let b = AudioBuffer::new(vec![0.0; 8000], SR, "z").unwrap();
        let m = compute_lld(&b, &FrameConfig::default()).unwrap();
        assert!(m.voicing_mask.iter().all(|&v| !v));
        assert!(col(&m, "energy_rms_db").iter().all(|v| *v == Some(ENERGY_FLOOR_DB)));
        for name in ["f0_hz", "f0_semitone", "jitter_local", "shimmer_local", "hnr_db"] {
            assert!(col(&m, name).iter().all(Option::is_none), "{name}");
        }
    }

    #[test]
    fn deterministic_names_and_values() {
        let b = sine(180.0, 0.3, 0.3);
        let cfg = FrameConfig {
            window: WindowKind::Hamming,
            ..Default::default()
        };
        let a = compute_lld(&b, &cfg).unwrap();
        let c = compute_lld(&b, &cfg).unwrap();
        assert_eq!(a.descriptor_names(), c.descriptor_names());
        assert_eq!(a, c);
    }

    #[test]
    fn gain_covariance() {
        // Two-tone signal with a little deterministic noise keeps every band above the floors.
        let n = 8000;
        let x: Vec<f64> = (0..n)
            .map(|i| {
                let t = i as f64 / SR as f64;
                0.3 * (2.0 * PI * 150.0 * t).sin()
                    + 0.1 * (2.0 * PI * 1250.0 * t).sin()
                    + 0.01 * ((i * 7919 % 1000) as f64 / 500.0 - 1.0)
            })
            .collect();
        let b1 = AudioBuffer::new(x.clone(), SR, "g").unwrap();
        let k = 0.37;
        let b2 = AudioBuffer::new(x.iter().map(|v| v * k).collect(), SR, "g").unwrap();
        let cfg = FrameConfig::default();
        let (m1, m2) = (compute_lld(&b1, &cfg).unwrap(), compute_lld(&b2, &cfg).unwrap());
        let rel = |a: f64, b: f64| (a - b).abs() <= 1e-6 * a.abs().max(b.abs()).max(1e-12);
        for f in 0..m1.n_frames() {
            for (c, name) in m1.descriptor_names().iter().enumerate() {
                let (a, b) = (m1.get(f, c), m2.get(f, c));
                match name.as_str() {
                    "energy_rms_db" => {
                        let shift = 20.0 * k.log10();
                        assert!((a.unwrap() + shift - b.unwrap()).abs() < 1e-9);
                    }
                    "mfcc_0" | "spectral_slope_0_500" | "spectral_slope_500_1500" => {}
                    _ => match (a, b) {
                        (Some(a), Some(b)) => assert!(rel(a, b), "{name} frame {f}: {a} vs {b}"),
                        (None, None) => {}
                        other => panic!("{name} frame {f}: presence differs {other:?}"),
                    },
                }
            }
        }
    }
}
