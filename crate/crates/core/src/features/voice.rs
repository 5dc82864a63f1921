//! Voice-quality measures: cycle-to-cycle period and amplitude perturbation
//! (jitter, shimmer) and the harmonics-to-noise ratio.

use super::FeatureError;

/// Clamp range for [`hnr_db`].
pub const HNR_MIN_DB: f64 = -20.0;
pub const HNR_MAX_DB: f64 = 40.0;

/// Mean absolute difference of consecutive periods over the mean period.
pub fn jitter_local(periods: &[f64]) -> Result<f64, FeatureError> {
    if periods.len() < 2 {
        return Err(FeatureError::TooFewPeriods(periods.len()));
    }
    Ok(mean_abs_step(periods) / mean(periods))
}

/// Mean absolute difference of consecutive peak amplitudes over the mean amplitude.
pub fn shimmer_local(amplitudes: &[f64]) -> Result<f64, FeatureError> {
    if amplitudes.len() < 2 {
        return Err(FeatureError::TooFewPeriods(amplitudes.len()));
    }
    if let Some((index, &value)) = amplitudes.iter().enumerate().find(|(_, &a)| a <= 0.0 || a.is_nan()) {
        return Err(FeatureError::NonPositiveAmplitude { index, value });
    }
    Ok(mean_abs_step(amplitudes) / mean(amplitudes))
}

fn mean(x: &[f64]) -> f64 {
    x.iter().sum::<f64>() / x.len() as f64
}

fn mean_abs_step(x: &[f64]) -> f64 {
    x.windows(2).map(|w| (w[1] - w[0]).abs()).sum::<f64>() / (x.len() - 1) as f64
}

/// Harmonics-to-noise ratio `10 log10(r / (1 - r))` in dB.
///
/// `r` is the normalized autocorrelation of the (rectangular-windowed) frame
/// at the pitch period, taken at the parabolic peak around `sr / f0`. The
/// result is clamped to `[HNR_MIN_DB, HNR_MAX_DB]`.
pub fn hnr_db(frame: &[f64], sample_rate: u32, f0_hz: f64) -> Result<f64, FeatureError> {
    if !(f0_hz.is_finite() && f0_hz > 0.0) {
        return Err(FeatureError::UnvoicedFrame);
    }
    let lag = sample_rate as f64 / f0_hz;
    let centre = lag.round() as usize;
    if centre < 2 || centre + 2 >= frame.len() {
        return Err(FeatureError::UnvoicedFrame);
    }
    let r_at = |tau: usize| -> f64 {
        let a = &frame[..frame.len() - tau];
        let b = &frame[tau..];
        let cross: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
        let ea: f64 = a.iter().map(|x| x * x).sum();
        let eb: f64 = b.iter().map(|x| x * x).sum();
        if ea <= 0.0 || eb <= 0.0 {
            0.0
        } else {
            cross / (ea * eb).sqrt()
        }
    };
    let (a, b, c) = (r_at(centre - 1), r_at(centre), r_at(centre + 1));
    let denom = a - 2.0 * b + c;
    let r = if denom < 0.0 {
        let shift = (0.5 * (a - c) / denom).clamp(-1.0, 1.0);
        b - 0.25 * (a - c) * shift
    } else {
        b.max(a).max(c)
    };
    if b == 0.0 && a == 0.0 && c == 0.0 {
        return Err(FeatureError::UnvoicedFrame);
    }
    Ok(hnr_from_r(r))
}

/// Maps a normalized autocorrelation to clamped dB.
pub(crate) fn hnr_from_r(r: f64) -> f64 {
    if r >= 1.0 {
        return HNR_MAX_DB;
    }
    if r <= 0.0 {
        return HNR_MIN_DB;
    }
    (10.0 * (r / (1.0 - r)).log10()).clamp(HNR_MIN_DB, HNR_MAX_DB)
}

/// One detected glottal cycle: the waveform peak that starts it.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GlottalCycle {
    /// Integer sample index of the peak.
    pub index: usize,
    /// Sub-sample offset from parabolic refinement, in `[-0.5, 0.5]`.
    pub offset: f64,
    /// Interpolated peak amplitude.
    pub amplitude: f64,
}

impl GlottalCycle {
    pub fn position(&self) -> f64 {
        self.index as f64 + self.offset
    }
}

/// Period lengths in seconds between consecutive cycles.
///
/// Integer and fractional parts are differenced separately, so identical
/// pulse shapes at integer spacing give exactly equal periods.
pub fn cycle_periods(cycles: &[GlottalCycle], sample_rate: u32) -> Vec<f64> {
    cycles
        .windows(2)
        .map(|w| ((w[1].index - w[0].index) as f64 + (w[1].offset - w[0].offset)) / sample_rate as f64)
        .collect()
}

pub fn cycle_amplitudes(cycles: &[GlottalCycle]) -> Vec<f64> {
    cycles.iter().map(|c| c.amplitude).collect()
}

/// Peak-picks one waveform maximum per pitch period, with a constant F0.
pub fn cycle_marks(samples: &[f64], sample_rate: u32, f0_hz: f64) -> Vec<GlottalCycle> {
    let period = sample_rate as f64 / f0_hz;
    cycle_marks_with(samples, |_| Some(period))
}

/// Peak-picks one waveform maximum per period; `period_at(i)` gives the
/// expected period in samples near index `i` (`None` ends the search).
///
/// The first peak is the maximum of the first period; each following peak is
/// the maximum within 0.7–1.3 periods after the previous one.
pub(crate) fn cycle_marks_with(samples: &[f64], period_at: impl Fn(usize) -> Option<f64>) -> Vec<GlottalCycle> {
    let mut out = Vec::new();
    let Some(p0) = period_at(0) else {
        return out;
    };
    let first_end = (p0.round() as usize).clamp(1, samples.len());
    let Some(mut peak) = argmax(samples, 0, first_end) else {
        return out;
    };
    loop {
        out.push(refine(samples, peak));
        let Some(period) = period_at(peak) else { break };
        let lo = peak + (0.7 * period).round() as usize;
        let hi = peak + (1.3 * period).round() as usize + 1;
        if hi > samples.len() || lo >= hi {
            break;
        }
        match argmax(samples, lo, hi) {
            Some(next) => peak = next,
            None => break,
        }
    }
    out
}

fn argmax(x: &[f64], lo: usize, hi: usize) -> Option<usize> {
    (lo..hi.min(x.len())).fold(None, |best: Option<usize>, i| match best {
        Some(b) if x[b] >= x[i] => Some(b),
        _ => Some(i),
    })
}

fn refine(x: &[f64], k: usize) -> GlottalCycle {
    if k == 0 || k + 1 >= x.len() {
        return GlottalCycle {
            index: k,
            offset: 0.0,
            amplitude: x[k],
        };
    }
    let (a, b, c) = (x[k - 1], x[k], x[k + 1]);
    let denom = a - 2.0 * b + c;
    if denom < 0.0 {
        let offset = (0.5 * (a - c) / denom).clamp(-0.5, 0.5);
        GlottalCycle {
            index: k,
            offset,
            amplitude: b - 0.25 * (a - c) * offset,
        }
    } else {
        GlottalCycle {
            index: k,
            offset: 0.0,
            amplitude: b,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_distr::{Distribution, Normal};
    use std::f64::consts::PI;

    const SR: u32 = 16_000;

    /// Pulse train with a 3-tap symmetric pulse at each given position.
    pub(crate) fn pulse_train(positions: &[usize], amps: &[f64], len: usize) -> Vec<f64> {
        let mut x = vec![0.0; len];
        for (&p, &a) in positions.iter().zip(amps) {
            x[p - 1] += 0.5 * a;
            x[p] += a;
            x[p + 1] += 0.5 * a;
        }
        x
    }

    fn perturbed(eps: usize, amp_eps: f64) -> (Vec<f64>, usize) {
        let base = 100;
        let mut positions = vec![50];
        let mut amps = vec![0.8];
        for k in 1..40 {
            let step = if k % 2 == 0 { base + eps } else { base - eps };
            positions.push(positions[k - 1] + step);
            amps.push(if k % 2 == 0 { 0.8 + amp_eps } else { 0.8 - amp_eps });
        }
        let len = positions.last().unwrap() + 60;
        (pulse_train(&positions, &amps, len), base)
    }

    #[test]
    fn jitter_examples() {
        assert_eq!(jitter_local(&[0.005; 10]).unwrap(), 0.0);
        let j = jitter_local(&[0.005, 0.006, 0.005, 0.006]).unwrap();
        assert!((j - 0.001 / 0.0055).abs() < 1e-12, "{j}");
        assert!(matches!(jitter_local(&[0.005]), Err(FeatureError::TooFewPeriods(1))));
    }

    #[test]
    fn shimmer_examples() {
        assert_eq!(shimmer_local(&[0.7; 6]).unwrap(), 0.0);
        let s = shimmer_local(&[1.0, 0.8, 1.0]).unwrap();
        assert!((s - 0.2 / (2.8 / 3.0)).abs() < 1e-12, "{s}");
        let scaled = shimmer_local(&[3.0, 2.4, 3.0]).unwrap();
        assert!((s - scaled).abs() < 1e-12);
        assert!(matches!(
            shimmer_local(&[1.0, 0.0]),
            Err(FeatureError::NonPositiveAmplitude { index: 1, .. })
        ));
    }

    #[test]
    fn periodic_pulse_train_is_exactly_stable() {
        let (x, base) = perturbed(0, 0.0);
        let cycles = cycle_marks(&x, SR, SR as f64 / base as f64);
        assert_eq!(cycles.len(), 40);
        assert_eq!(jitter_local(&cycle_periods(&cycles, SR)).unwrap(), 0.0);
        assert_eq!(shimmer_local(&cycle_amplitudes(&cycles)).unwrap(), 0.0);
    }

    #[test]
    fn perturbation_is_monotone() {
        let mut last = (-1.0, -1.0);
        for level in 1..=5 {
            let (x, base) = perturbed(level, 0.04 * level as f64);
            let cycles = cycle_marks(&x, SR, SR as f64 / base as f64);
            let j = jitter_local(&cycle_periods(&cycles, SR)).unwrap();
            let s = shimmer_local(&cycle_amplitudes(&cycles)).unwrap();
            assert!(j > last.0 && s > last.1, "level {level}: {j} {s}");
            last = (j, s);
        }
    }

    #[test]
    fn hnr_fixed_point_and_tones() {
        assert_eq!(hnr_from_r(0.5), 0.0);
        assert_eq!(hnr_from_r(1.0), HNR_MAX_DB);
        assert_eq!(hnr_from_r(-0.3), HNR_MIN_DB);

        let n = 4000;
        let f = 220.0;
        let tone: Vec<f64> = (0..n).map(|i| (2.0 * PI * f * i as f64 / SR as f64).sin()).collect();
        assert!(hnr_db(&tone, SR, f).unwrap() >= 30.0);

        // Equal-power noise: sine power 0.5, noise variance 0.5.
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(3);
        let noise = Normal::new(0.0, 0.5_f64.sqrt()).unwrap();
        let noisy: Vec<f64> = tone.iter().map(|s| s + noise.sample(&mut rng)).collect();
        let h = hnr_db(&noisy, SR, f).unwrap();
        assert!(h.abs() <= 1.5, "{h}");

        assert!(matches!(hnr_db(&tone, SR, 0.0), Err(FeatureError::UnvoicedFrame)));
    }
}
