//! Synthetic cohort generator: formant-filtered pulse-train vowels and
//! syllable-chain utterances with class-dependent voice effects, plus
//! alignment manifests and a metadata table.

use std::collections::BTreeMap;
use std::f64::consts::PI;
use std::fs;
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::audio::{write_wav, AudioBuffer, AudioError, SampleFormat, CANONICAL_RATE_HZ};
use crate::cohort::{metadata_to_csv, Gender, MetadataField, SubjectRecord, HOPELESSNESS_MAX};
use crate::segment::{write_manifest, SegmentError, SegmentKind, SegmentManifest, SegmentSpan, Vowel};

#[derive(Debug, Error)]
pub enum SynthError {
    #[error("invalid synthesis spec: {0}")]
    InvalidSpec(String),
    #[error(transparent)]
    Audio(#[from] AudioError),
    #[error(transparent)]
    Segment(#[from] SegmentError),
    #[error("I/O error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

/// Class-dependent effects applied to high-risk subjects.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SynthEffect {
    /// Added to the speaker's base F0.
    #[serde(default)]
    pub f0_shift_hz: f64,
    /// Extra relative standard deviation of glottal period lengths.
    #[serde(default)]
    pub jitter_amount: f64,
    /// Extra relative standard deviation of glottal pulse amplitudes.
    #[serde(default)]
    pub shimmer_amount: f64,
    /// Boolean metadata field name to the probability that it equals the
    /// subject's class (true for high risk). Other booleans are drawn at 0.3.
    #[serde(default)]
    pub metadata_determinism: BTreeMap<String, f64>,
}

impl Default for SynthEffect {
    fn default() -> Self {
        Self {
            f0_shift_hz: 0.0,
            jitter_amount: 0.0,
            shimmer_amount: 0.0,
            metadata_determinism: BTreeMap::new(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SynthSpec {
    pub n_subjects: usize,
    /// Fraction of high-risk subjects.
    pub class_ratio: f64,
    #[serde(default)]
    pub effect: SynthEffect,
    pub seed: u64,
}

impl SynthSpec {
    pub fn n_high(&self) -> usize {
        (self.n_subjects as f64 * self.class_ratio).round() as usize
    }

    pub fn validate(&self) -> Result<(), SynthError> {
        let bad = |m: String| Err(SynthError::InvalidSpec(m));
        if self.n_subjects < 4 {
            return bad(format!("need at least 4 subjects, got {}", self.n_subjects));
        }
        if !(0.0..=1.0).contains(&self.class_ratio) {
            return bad(format!("class_ratio must lie in [0, 1], got {}", self.class_ratio));
        }
        let high = self.n_high();
        if high < 2 || self.n_subjects - high < 2 {
            return bad(format!(
                "class_ratio {} leaves fewer than 2 subjects in a class",
                self.class_ratio
            ));
        }
        let e = &self.effect;
        for (name, v) in [
            ("f0_shift_hz", e.f0_shift_hz),
            ("jitter_amount", e.jitter_amount),
            ("shimmer_amount", e.shimmer_amount),
        ] {
            if !v.is_finite() || v < 0.0 {
                return bad(format!("{name} must be finite and non-negative, got {v}"));
            }
        }
        if e.jitter_amount > 0.2 || e.shimmer_amount > 0.5 {
            return bad("jitter_amount must be at most 0.2 and shimmer_amount at most 0.5".into());
        }
        for (field, p) in &e.metadata_determinism {
            let f: MetadataField = field.parse().map_err(SynthError::InvalidSpec)?;
            if !MetadataField::BOOLEAN.contains(&f) {
                return bad(format!("metadata_determinism field `{field}` is not boolean"));
            }
            if !(0.0..=1.0).contains(p) {
                return bad(format!("probability for `{field}` must lie in [0, 1], got {p}"));
            }
        }
        Ok(())
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("spec serializes") + "\n"
    }
}

/// Baseline voice perturbation shared by every speaker.
const BASE_JITTER: f64 = 0.004;
const BASE_SHIMMER: f64 = 0.03;
const OUTPUT_PEAK: f64 = 0.7;

fn formants(v: Vowel) -> [f64; 3] {
    match v {
        Vowel::A => [730.0, 1090.0, 2440.0],
        Vowel::E => [530.0, 1840.0, 2480.0],
        Vowel::I => [270.0, 2290.0, 3010.0],
        Vowel::O => [570.0, 840.0, 2410.0],
        Vowel::U => [300.0, 870.0, 2240.0],
    }
}

struct Voice {
    f0_hz: f64,
    jitter: f64,
    shimmer: f64,
}

/// Two-pole resonator cascade over `x`, one section per formant.
fn resonate(x: &mut [f64], formants: [f64; 3], rate: f64) {
    for (f, bw) in formants.into_iter().zip([80.0, 100.0, 120.0]) {
        let r = (-PI * bw / rate).exp();
        let a1 = 2.0 * r * (2.0 * PI * f / rate).cos();
        let a2 = -r * r;
        let gain = 1.0 - a1 - a2;
        let (mut y1, mut y2) = (0.0, 0.0);
        for s in x.iter_mut() {
            let y = gain * *s + a1 * y1 + a2 * y2;
            y2 = y1;
            y1 = y;
            *s = y;
        }
    }
}

/// Voiced stretch of `n` samples: a perturbed pulse train, shaped by a
/// glottal low-pass and the vowel's formants. `f0_at(t)` gives the
/// intended F0 at fraction `t` of the stretch.
fn voiced(n: usize, vowel: Vowel, voice: &Voice, f0_at: &dyn Fn(f64) -> f64, rng: &mut ChaCha8Rng) -> Vec<f64> {
    let rate = CANONICAL_RATE_HZ as f64;
    let normal = Normal::new(0.0, 1.0).expect("unit normal");
    let mut x = vec![0.0; n];
    let mut t = rng.gen_range(0.0..0.5) * rate / voice.f0_hz;
    while (t as usize) < n {
        let f0 = f0_at(t / n as f64) * voice.f0_hz;
        let amp = (1.0 + voice.shimmer * normal.sample(rng)).max(0.05);
        x[t as usize] += amp;
        let period = rate / f0 * (1.0 + voice.jitter * normal.sample(rng)).clamp(0.5, 1.5);
        t += period;
    }
    // Glottal spectral tilt.
    let mut prev = 0.0;
    for s in x.iter_mut() {
        prev = 0.9 * prev + *s;
        *s = prev;
    }
    resonate(&mut x, formants(vowel), rate);
    // Breath noise well below the harmonics.
    let peak = x.iter().fold(0.0_f64, |m, v| m.max(v.abs())).max(1e-12);
    for s in x.iter_mut() {
        *s = *s / peak + 0.003 * normal.sample(rng);
    }
    fade(&mut x, (0.02 * rate) as usize);
    x
}

/// High-passed noise burst, a stand-in for a fricative.
fn unvoiced(n: usize, rng: &mut ChaCha8Rng) -> Vec<f64> {
    let normal = Normal::new(0.0, 1.0).expect("unit normal");
    let mut prev = 0.0;
    let mut x: Vec<f64> = (0..n)
        .map(|_| {
            let v = normal.sample(rng);
            let y = v - prev;
            prev = v;
            0.08 * y
        })
        .collect();
    fade(&mut x, n / 4);
    x
}

fn fade(x: &mut [f64], len: usize) {
    let len = len.min(x.len() / 2);
    let n = x.len();
    for i in 0..len {
        let g = 0.5 - 0.5 * (PI * i as f64 / len as f64).cos();
        x[i] *= g;
        x[n - 1 - i] *= g;
    }
}

fn silence(rate: f64, seconds: f64) -> Vec<f64> {
    vec![0.0; (rate * seconds).round() as usize]
}

/// One recording: samples plus the utterance spans it contains.
struct Recording {
    id: String,
    samples: Vec<f64>,
    spans: Vec<SegmentSpan>,
}

fn vowel_recording(v: Vowel, voice: &Voice, rng: &mut ChaCha8Rng) -> Recording {
    let rate = CANONICAL_RATE_HZ as f64;
    let mut samples = silence(rate, rng.gen_range(0.25..0.4));
    let start = samples.len() as f64 / rate;
    let n = (rate * rng.gen_range(1.0..1.5)) as usize;
    let drift = rng.gen_range(-0.02..0.02);
    samples.extend(voiced(n, v, voice, &move |t| 1.0 + drift * t, rng));
    let end = samples.len() as f64 / rate;
    samples.extend(silence(rate, rng.gen_range(0.25..0.4)));
    Recording {
        id: format!("vowel_{}", v.as_str()),
        samples,
        spans: vec![SegmentSpan::vowel(start, end, v)],
    }
}

/// Two utterances of chained consonant-vowel syllables with falling
/// intonation, separated by a pause.
fn utterance_recording(kind: SegmentKind, voice: &Voice, rng: &mut ChaCha8Rng) -> Recording {
    let rate = CANONICAL_RATE_HZ as f64;
    let mut samples = silence(rate, 0.3);
    let mut spans = Vec::new();
    for u in 0..2 {
        let start = samples.len() as f64 / rate;
        let syllables = rng.gen_range(8..14);
        let mut words = Vec::new();
        for k in 0..syllables {
            let pos = k as f64 / syllables as f64;
            samples.extend(unvoiced((rate * rng.gen_range(0.04..0.08)) as usize, rng));
            let v = *Vowel::ALL.choose(rng).expect("non-empty");
            let n = (rate * rng.gen_range(0.09..0.2)) as usize;
            let (a, b) = (1.1 - 0.2 * pos, 1.1 - 0.2 * (pos + 1.0 / syllables as f64));
            samples.extend(voiced(n, v, voice, &move |t| a + (b - a) * t, rng));
            words.push(format!("t{}", v.as_str()));
        }
        let end = samples.len() as f64 / rate;
        let mut span = SegmentSpan::new(start, end, kind);
        if kind == SegmentKind::NeutralText {
            span.text = Some(words.join(" "));
        }
        spans.push(span);
        samples.extend(silence(rate, if u == 0 { 0.7 } else { 0.3 }));
    }
    let id = match kind {
        SegmentKind::NeutralText => "text",
        _ => "picture",
    };
    Recording {
        id: id.into(),
        samples,
        spans,
    }
}

fn subject_ids(n: usize) -> Vec<String> {
    let width = n.to_string().len().max(2);
    (1..=n).map(|i| format!("S{i:0width$}")).collect()
}

fn draw_record(id: &str, high: bool, effect: &SynthEffect, rng: &mut ChaCha8Rng) -> SubjectRecord {
    let normal = Normal::new(0.0_f64, 1.0).expect("unit normal");
    let rating = if high {
        rng.gen_range(5..=6)
    } else {
        rng.gen_range(1..=4)
    };
    let mut r = SubjectRecord::bare(id, rating);
    r.age = Some(rng.gen_range(18..=70) as f64);
    r.gender = Some(*[Gender::Female, Gender::Male].choose(rng).expect("non-empty"));
    r.height_cm = Some((170.0 + 9.0 * normal.sample(rng)).round());
    r.weight_kg = Some((75.0 + 12.0 * normal.sample(rng)).round());
    for f in MetadataField::BOOLEAN {
        let value = match effect.metadata_determinism.get(f.as_str()) {
            Some(&p) => {
                if rng.gen_bool(p) {
                    high
                } else {
                    !high
                }
            }
            None => rng.gen_bool(0.3),
        };
        r.set_flag(f, Some(value));
    }
    r.hopelessness = Some(rng.gen_range(0..=HOPELESSNESS_MAX));
    r.bdi_score = Some(rng.gen_range(0..=63));
    r
}

/// Summary of a generated cohort.
#[derive(Debug, Clone, PartialEq)]
pub struct SynthOutput {
    pub records: Vec<SubjectRecord>,
    pub audio_dir: PathBuf,
    pub manifest_dir: PathBuf,
    pub metadata_path: PathBuf,
}

/// Writes `audio/<subject>/<recording>.wav`, `manifests/<subject>/<recording>.json`,
/// `metadata.csv` and `synth_spec.json` under `out_dir`.
///
/// Each subject records five sustained vowels, a read text and a picture
/// description (two utterances each). Subjects are generated from their
/// own random stream, so output does not depend on thread count.
pub fn synth_cohort(spec: &SynthSpec, out_dir: impl AsRef<Path>) -> Result<SynthOutput, SynthError> {
    spec.validate()?;
    let out = out_dir.as_ref();
    let audio_dir = out.join("audio");
    let manifest_dir = out.join("manifests");
    let ids = subject_ids(spec.n_subjects);
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let mut is_high: Vec<bool> = (0..spec.n_subjects).map(|i| i < spec.n_high()).collect();
    is_high.shuffle(&mut rng);

    let records = ids
        .par_iter()
        .enumerate()
        .map(|(i, id)| {
            let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
            rng.set_stream(i as u64 + 1);
            let high = is_high[i];
            let record = draw_record(id, high, &spec.effect, &mut rng);
            let voice = Voice {
                f0_hz: rng.gen_range(105.0..135.0) + if high { spec.effect.f0_shift_hz } else { 0.0 },
                jitter: BASE_JITTER + if high { spec.effect.jitter_amount } else { 0.0 },
                shimmer: BASE_SHIMMER + if high { spec.effect.shimmer_amount } else { 0.0 },
            };
            let mut recs: Vec<Recording> = Vowel::ALL
                .iter()
                .map(|&v| vowel_recording(v, &voice, &mut rng))
                .collect();
            recs.push(utterance_recording(SegmentKind::NeutralText, &voice, &mut rng));
            recs.push(utterance_recording(SegmentKind::PictureDescription, &voice, &mut rng));
            let (adir, mdir) = (audio_dir.join(id), manifest_dir.join(id));
            for d in [&adir, &mdir] {
                fs::create_dir_all(d).map_err(|source| SynthError::Io {
                    path: d.display().to_string(),
                    source,
                })?;
            }
            for rec in recs {
                let peak = rec.samples.iter().fold(0.0_f64, |m, v| m.max(v.abs())).max(1e-12);
                let samples: Vec<f64> = rec.samples.iter().map(|v| v * OUTPUT_PEAK / peak).collect();
                let duration_s = samples.len() as f64 / CANONICAL_RATE_HZ as f64;
                let buffer = AudioBuffer::new(samples, CANONICAL_RATE_HZ, format!("{id}/{}", rec.id))?;
                write_wav(adir.join(format!("{}.wav", rec.id)), &buffer, SampleFormat::Pcm16)?;
                let manifest = SegmentManifest {
                    recording_id: rec.id.clone(),
                    subject_id: id.clone(),
                    duration_s: Some(duration_s),
                    spans: rec.spans,
                };
                write_manifest(mdir.join(format!("{}.json", rec.id)), &manifest)?;
            }
            Ok(record)
        })
        .collect::<Result<Vec<_>, SynthError>>()?;

    let metadata_path = out.join("metadata.csv");
    let write = |p: &Path, text: String| {
        fs::write(p, text).map_err(|source| SynthError::Io {
            path: p.display().to_string(),
            source,
        })
    };
    write(&metadata_path, metadata_to_csv(&records))?;
    write(&out.join("synth_spec.json"), spec.to_json())?;
    Ok(SynthOutput {
        records,
        audio_dir,
        manifest_dir,
        metadata_path,
    })
}
