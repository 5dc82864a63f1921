//! Recording ingestion: WAV decoding, channel mixdown, resampling and peak
//! normalization into a canonical mono [`AudioBuffer`].

use std::f64::consts::PI;
use std::io;
use std::path::Path;

use thiserror::Error;

/// Internal sample rate every DSP routine assumes.
pub const CANONICAL_RATE_HZ: u32 = 16_000;

/// Default target for [`normalize_peak`].
pub const DEFAULT_TARGET_PEAK: f64 = 0.95;

/// Kaiser window shape parameter used by [`resample`].
pub const KAISER_BETA: f64 = 8.6;

/// Number of sinc zero crossings kept on each side of the interpolation kernel.
const SINC_ZERO_CROSSINGS: f64 = 32.0;

/// Passband edge as a fraction of the lower Nyquist frequency.
const RESAMPLE_ROLLOFF: f64 = 0.95;

#[derive(Debug, Error)]
pub enum AudioError {
    #[error("missing file: {0}")]
    MissingFile(String),
    #[error("malformed WAV header in {path}: {detail}")]
    MalformedHeader { path: String, detail: String },
    #[error("unsupported encoding in {path}: {detail}")]
    UnsupportedEncoding { path: String, detail: String },
    #[error("empty audio buffer")]
    EmptyBuffer,
    #[error("target sample rate must be positive")]
    ZeroTargetRate,
    #[error("non-finite sample at index {0}")]
    NonFiniteSample(usize),
    #[error("I/O error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: io::Error,
    },
}

/// Mono floating-point signal with its sample rate.
#[derive(Debug, Clone, PartialEq)]
pub struct AudioBuffer {
    samples: Vec<f64>,
    sample_rate_hz: u32,
    source_id: String,
}

impl AudioBuffer {
    /// Builds a buffer, rejecting non-finite samples and a zero rate.
    pub fn new(samples: Vec<f64>, sample_rate_hz: u32, source_id: impl Into<String>) -> Result<Self, AudioError> {
        if sample_rate_hz == 0 {
            return Err(AudioError::ZeroTargetRate);
        }
        if let Some(i) = samples.iter().position(|s| !s.is_finite()) {
            return Err(AudioError::NonFiniteSample(i));
        }
        Ok(Self {
            samples,
            sample_rate_hz,
            source_id: source_id.into(),
        })
    }

    pub fn samples(&self) -> &[f64] {
        &self.samples
    }

    pub fn into_samples(self) -> Vec<f64> {
        self.samples
    }

    pub fn sample_rate_hz(&self) -> u32 {
        self.sample_rate_hz
    }

    pub fn source_id(&self) -> &str {
        &self.source_id
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn duration_s(&self) -> f64 {
        self.samples.len() as f64 / self.sample_rate_hz as f64
    }

    pub fn peak(&self) -> f64 {
        self.samples.iter().fold(0.0_f64, |m, s| m.max(s.abs()))
    }

    pub fn with_source_id(mut self, source_id: impl Into<String>) -> Self {
        self.source_id = source_id.into();
        self
    }
}

/// On-disk sample encodings supported for reading and writing.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SampleFormat {
    Pcm16,
    Pcm24,
    Float32,
}

fn path_str(path: &Path) -> String {
    path.display().to_string()
}

fn map_hound(path: &Path, err: hound::Error) -> AudioError {
    match err {
        hound::Error::IoError(e) if e.kind() == io::ErrorKind::NotFound => AudioError::MissingFile(path_str(path)),
        hound::Error::IoError(e) if e.kind() == io::ErrorKind::UnexpectedEof => AudioError::MalformedHeader {
            path: path_str(path),
            detail: "unexpected end of file".into(),
        },
        hound::Error::IoError(e) => AudioError::Io {
            path: path_str(path),
            source: e,
        },
        hound::Error::FormatError(detail) => AudioError::MalformedHeader {
            path: path_str(path),
            detail: detail.to_string(),
        },
        hound::Error::Unsupported => AudioError::UnsupportedEncoding {
            path: path_str(path),
            detail: "format tag is not PCM or IEEE float".into(),
        },
        other => AudioError::MalformedHeader {
            path: path_str(path),
            detail: other.to_string(),
        },
    }
}

/// Reads a RIFF/WAVE file (PCM16, PCM24 or Float32) and mixes it down to mono.
///
/// Integer samples are divided by the magnitude of the type's most negative
/// value (32768 for 16-bit), so full-scale negative maps to exactly -1.0.
/// Channels are averaged per frame.
pub fn load_wav(path: impl AsRef<Path>) -> Result<AudioBuffer, AudioError> {
    let path = path.as_ref();
    if !path.exists() {
        return Err(AudioError::MissingFile(path_str(path)));
    }
    let mut reader = hound::WavReader::open(path).map_err(|e| map_hound(path, e))?;
    let spec = reader.spec();
    let channels = spec.channels as usize;
    if channels == 0 {
        return Err(AudioError::MalformedHeader {
            path: path_str(path),
            detail: "zero channels".into(),
        });
    }
    let interleaved: Vec<f64> = match (spec.sample_format, spec.bits_per_sample) {
        (hound::SampleFormat::Int, bits @ (16 | 24)) => {
            let scale = (1_i64 << (bits - 1)) as f64;
            reader
                .samples::<i32>()
                .map(|s| s.map(|v| v as f64 / scale))
                .collect::<Result<_, _>>()
                .map_err(|e| map_hound(path, e))?
        }
        (hound::SampleFormat::Float, 32) => reader
            .samples::<f32>()
            .map(|s| s.map(|v| v as f64))
            .collect::<Result<_, _>>()
            .map_err(|e| map_hound(path, e))?,
        (fmt, bits) => {
            return Err(AudioError::UnsupportedEncoding {
                path: path_str(path),
                detail: format!("{fmt:?} with {bits} bits per sample"),
            })
        }
    };
    let samples = if channels == 1 {
        interleaved
    } else {
        interleaved
            .chunks_exact(channels)
            .map(|frame| frame.iter().sum::<f64>() / channels as f64)
            .collect()
    };
    let id = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    AudioBuffer::new(samples, spec.sample_rate, id).map_err(|e| match e {
        AudioError::ZeroTargetRate => AudioError::MalformedHeader {
            path: path_str(path),
            detail: "sample rate is zero".into(),
        },
        other => other,
    })
}

/// Writes a mono WAV file. Integer encodings clip to the representable range.
pub fn write_wav(path: impl AsRef<Path>, buffer: &AudioBuffer, format: SampleFormat) -> Result<(), AudioError> {
    let path = path.as_ref();
    let (bits, sample_format) = match format {
        SampleFormat::Pcm16 => (16, hound::SampleFormat::Int),
        SampleFormat::Pcm24 => (24, hound::SampleFormat::Int),
        SampleFormat::Float32 => (32, hound::SampleFormat::Float),
    };
    let spec = hound::WavSpec {
        channels: 1,
        sample_rate: buffer.sample_rate_hz(),
        bits_per_sample: bits,
        sample_format,
    };
    let mut writer = hound::WavWriter::create(path, spec).map_err(|e| map_hound(path, e))?;
    match format {
        SampleFormat::Float32 => {
            for &s in buffer.samples() {
                writer.write_sample(s as f32).map_err(|e| map_hound(path, e))?;
            }
        }
        SampleFormat::Pcm16 | SampleFormat::Pcm24 => {
            let scale = (1_i64 << (bits - 1)) as f64;
            let (lo, hi) = (-scale, scale - 1.0);
            for &s in buffer.samples() {
                let v = (s * scale).round().clamp(lo, hi) as i32;
                writer.write_sample(v).map_err(|e| map_hound(path, e))?;
            }
        }
    }
    writer.finalize().map_err(|e| map_hound(path, e))
}

/// Scales the buffer by a single gain so its peak magnitude equals `target_peak`.
///
/// All-zero input is returned unchanged. A buffer already at the target is
/// returned bit-for-bit.
pub fn normalize_peak(buffer: &AudioBuffer, target_peak: f64) -> Result<AudioBuffer, AudioError> {
    if buffer.is_empty() {
        return Err(AudioError::EmptyBuffer);
    }
    let peak = buffer.peak();
    if peak == 0.0 || peak == target_peak {
        return Ok(buffer.clone());
    }
    let gain = target_peak / peak;
    let mut samples: Vec<f64> = buffer.samples().iter().map(|s| s * gain).collect();
    // Pin the extreme sample so a second pass sees exactly the target peak.
    if let Some(i) = samples
        .iter()
        .enumerate()
        .max_by(|a, b| a.1.abs().total_cmp(&b.1.abs()))
        .map(|(i, _)| i)
    {
        samples[i] = target_peak.copysign(samples[i]);
    }
    for s in &mut samples {
        *s = s.clamp(-target_peak, target_peak);
    }
    AudioBuffer::new(samples, buffer.sample_rate_hz(), buffer.source_id())
}

/// Zeroth-order modified Bessel function of the first kind (power series).
fn bessel_i0(x: f64) -> f64 {
    let half = x / 2.0;
    let mut term = 1.0;
    let mut sum = 1.0;
    for k in 1..200 {
        term *= (half / k as f64) * (half / k as f64);
        sum += term;
        if term < sum * 1e-17 {
            break;
        }
    }
    sum
}

fn kaiser(u: f64, beta: f64, i0_beta: f64) -> f64 {
    if u.abs() >= 1.0 {
        return 0.0;
    }
    bessel_i0(beta * (1.0 - u * u).sqrt()) / i0_beta
}

fn sinc(x: f64) -> f64 {
    if x == 0.0 {
        1.0
    } else {
        let px = PI * x;
        px.sin() / px
    }
}

/// Band-limited resampling by Kaiser-windowed sinc interpolation
/// (beta [`KAISER_BETA`], 32 zero crossings per side).
///
/// Output length is `round(len * target / source)`.
pub fn resample(buffer: &AudioBuffer, target_rate_hz: u32) -> Result<AudioBuffer, AudioError> {
    if target_rate_hz == 0 {
        return Err(AudioError::ZeroTargetRate);
    }
    if buffer.is_empty() {
        return Err(AudioError::EmptyBuffer);
    }
    let source_rate = buffer.sample_rate_hz();
    if source_rate == target_rate_hz {
        return Ok(buffer.clone());
    }
    let ratio = target_rate_hz as f64 / source_rate as f64;
    let cutoff = ratio.min(1.0) * RESAMPLE_ROLLOFF;
    let half_width = SINC_ZERO_CROSSINGS / cutoff;
    let i0_beta = bessel_i0(KAISER_BETA);
    let input = buffer.samples();
    let out_len = (input.len() as f64 * ratio).round().max(1.0) as usize;

    let samples = (0..out_len)
        .map(|n| {
            let t = n as f64 / ratio;
            let lo = ((t - half_width).ceil().max(0.0)) as usize;
            let hi = ((t + half_width).floor() as usize).min(input.len() - 1);
            let mut acc = 0.0;
            for (k, &x) in input.iter().enumerate().take(hi + 1).skip(lo) {
                let d = t - k as f64;
                acc += x * cutoff * sinc(cutoff * d) * kaiser(d / half_width, KAISER_BETA, i0_beta);
            }
            acc
        })
        .collect();
    AudioBuffer::new(samples, target_rate_hz, buffer.source_id())
}

/// Loads a file and brings it to the canonical rate, normalized to the default peak.
pub fn load_canonical(path: impl AsRef<Path>) -> Result<AudioBuffer, AudioError> {
    let raw = load_wav(path)?;
    if raw.is_empty() {
        return Err(AudioError::EmptyBuffer);
    }
    let resampled = resample(&raw, CANONICAL_RATE_HZ)?;
    normalize_peak(&resampled, DEFAULT_TARGET_PEAK)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rustfft::{num_complex::Complex, FftPlanner};

    fn buf(samples: Vec<f64>, rate: u32) -> AudioBuffer {
        AudioBuffer::new(samples, rate, "t").unwrap()
    }

    fn write_raw_i16(path: &Path, channels: u16, rate: u32, data: &[i16]) {
        let spec = hound::WavSpec {
            channels,
            sample_rate: rate,
            bits_per_sample: 16,
            sample_format: hound::SampleFormat::Int,
        };
        let mut w = hound::WavWriter::create(path, spec).unwrap();
        for &s in data {
            w.write_sample(s).unwrap();
        }
        w.finalize().unwrap();
    }

    #[test]
    fn pcm16_scaling() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("a.wav");
        write_raw_i16(&p, 1, 16_000, &[0, 16384, -32768]);
        let b = load_wav(&p).unwrap();
        assert_eq!(b.samples(), &[0.0, 0.5, -1.0]);
    }

    #[test]
    fn stereo_mixdown_by_mean() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("s.wav");
        let spec = hound::WavSpec {
            channels: 2,
            sample_rate: 16_000,
            bits_per_sample: 32,
            sample_format: hound::SampleFormat::Float,
        };
        let mut w = hound::WavWriter::create(&p, spec).unwrap();
        w.write_sample(1.0_f32).unwrap();
        w.write_sample(0.0_f32).unwrap();
        w.finalize().unwrap();
        assert_eq!(load_wav(&p).unwrap().samples(), &[0.5]);
    }

    #[test]
    fn three_seconds_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("t.wav");
        let samples: Vec<f64> = (0..48_000)
            .map(|i| 0.3 * (2.0 * PI * 200.0 * i as f64 / 16_000.0).sin())
            .collect();
        write_wav(&p, &buf(samples, 16_000), SampleFormat::Pcm24).unwrap();
        let b = load_wav(&p).unwrap();
        assert_eq!(b.len(), 48_000);
        assert_eq!(b.duration_s(), 3.0);
    }

    #[test]
    fn errors_carry_detail() {
        let dir = tempfile::tempdir().unwrap();
        assert!(matches!(
            load_wav(dir.path().join("nope.wav")),
            Err(AudioError::MissingFile(_))
        ));
        let junk = dir.path().join("junk.wav");
        std::fs::write(&junk, b"RIFX0000WAVEjunkjunk").unwrap();
        assert!(matches!(load_wav(&junk), Err(AudioError::MalformedHeader { .. })));

        // mu-law: format tag 7
        let mulaw = dir.path().join("mulaw.wav");
        let mut bytes = Vec::new();
        bytes.extend_from_slice(b"RIFF");
        bytes.extend_from_slice(&(36u32 + 4).to_le_bytes());
        bytes.extend_from_slice(b"WAVEfmt ");
        bytes.extend_from_slice(&16u32.to_le_bytes());
        bytes.extend_from_slice(&7u16.to_le_bytes());
        bytes.extend_from_slice(&1u16.to_le_bytes());
        bytes.extend_from_slice(&8000u32.to_le_bytes());
        bytes.extend_from_slice(&8000u32.to_le_bytes());
        bytes.extend_from_slice(&1u16.to_le_bytes());
        bytes.extend_from_slice(&8u16.to_le_bytes());
        bytes.extend_from_slice(b"data");
        bytes.extend_from_slice(&4u32.to_le_bytes());
        bytes.extend_from_slice(&[0xff, 0x7f, 0x00, 0x80]);
        std::fs::write(&mulaw, bytes).unwrap();
        match load_wav(&mulaw) {
            Err(AudioError::UnsupportedEncoding { .. }) => {}
            other => panic!("expected UnsupportedEncoding, got {other:?}"),
        }
    }

    #[test]
    fn pcm16_round_trip_within_one_lsb() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("r.wav");
        let samples: Vec<f64> = (0..1000).map(|i| ((i * 7919) % 2001) as f64 / 1000.0 - 1.0).collect();
        write_wav(&p, &buf(samples.clone(), 16_000), SampleFormat::Pcm16).unwrap();
        let b = load_wav(&p).unwrap();
        for (a, b) in samples.iter().zip(b.samples()) {
            assert!((a - b).abs() <= 1.0 / 32768.0 + 1e-12);
        }
    }

    #[test]
    fn normalize_examples() {
        let b = buf(vec![0.1, -0.5, 0.25], 16_000);
        let n = normalize_peak(&b, 0.95).unwrap();
        assert_eq!(n.peak(), 0.95);
        assert!((n.samples()[0] - 0.19).abs() < 1e-12);

        let z = buf(vec![0.0; 10], 16_000);
        assert_eq!(normalize_peak(&z, 0.95).unwrap(), z);

        let at = buf(vec![0.95, -0.2], 16_000);
        assert_eq!(normalize_peak(&at, 0.95).unwrap(), at);

        assert!(matches!(
            normalize_peak(&buf(vec![], 16_000), 0.95),
            Err(AudioError::EmptyBuffer)
        ));
    }

    #[test]
    fn resample_identity_and_errors() {
        let b = buf(vec![0.1, 0.2, 0.3], 16_000);
        assert_eq!(resample(&b, 16_000).unwrap(), b);
        assert!(matches!(resample(&b, 0), Err(AudioError::ZeroTargetRate)));
        assert!(matches!(
            resample(&buf(vec![], 16_000), 8_000),
            Err(AudioError::EmptyBuffer)
        ));
    }

    #[test]
    fn resampled_tone_keeps_its_frequency() {
        let samples: Vec<f64> = (0..48_000)
            .map(|i| 0.5 * (2.0 * PI * 440.0 * i as f64 / 48_000.0).sin())
            .collect();
        let out = resample(&buf(samples, 48_000), 16_000).unwrap();
        assert_eq!(out.sample_rate_hz(), 16_000);
        assert!((out.duration_s() - 1.0).abs() <= 0.001);
        let n = out.len();
        let mut spec: Vec<Complex<f64>> = out.samples().iter().map(|&s| Complex::new(s, 0.0)).collect();
        FftPlanner::new().plan_fft_forward(n).process(&mut spec);
        let peak_bin = (1..n / 2)
            .max_by(|&a, &b| spec[a].norm().total_cmp(&spec[b].norm()))
            .unwrap();
        let freq = peak_bin as f64 * 16_000.0 / n as f64;
        assert!((freq - 440.0).abs() <= 2.0, "peak at {freq}");
    }

    proptest! {
        #[test]
        fn normalize_is_idempotent(samples in proptest::collection::vec(-1.0f64..1.0, 1..200), target in 0.05f64..1.0) {
            let b = buf(samples, 16_000);
            let once = normalize_peak(&b, target).unwrap();
            let twice = normalize_peak(&once, target).unwrap();
            prop_assert_eq!(once, twice);
        }

        #[test]
        fn resample_preserves_duration(len in 10usize..3000, rate_idx in 0usize..4) {
            let rates = [8_000u32, 22_050, 44_100, 48_000];
            let src = rates[rate_idx];
            let b = buf((0..len).map(|i| (i as f64 * 0.01).sin()).collect(), src);
            let out = resample(&b, 16_000).unwrap();
            prop_assert!((out.duration_s() - b.duration_s()).abs() <= 1.0 / 16_000.0);
        }
    }
}
