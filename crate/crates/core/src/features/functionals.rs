use serde::{Deserialize, Serialize};

use super::lld::{is_voiced_only, LldMatrix, DESCRIPTORS};
use super::{FeatureError, FeatureVector};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SetId {
    Compact,
    Extended,
}

/// A statistic that reduces one contour to one number.
///
/// Slopes are per frame step. Percentiles interpolate linearly between order
/// statistics (rank `p (n - 1)`). Regression terms use the frame index for the
/// linear fit and normalized time `t in [0, 1]` for the quadratic
/// `a t^2 + b t + c`. Up-level crossing rates count upward passes through
/// `min + q (max - min)` per frame.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Functional {
    Mean,
    CoefficientOfVariation,
    P20,
    P50,
    P80,
    Range20To80,
    MeanRisingSlope,
    MeanFallingSlope,
    Min,
    Max,
    Skewness,
    Kurtosis,
    LinRegSlope,
    LinRegOffset,
    QuadRegA,
    QuadRegB,
    QuadRegC,
    UpLevelCross25,
    UpLevelCross50,
    UpLevelCross75,
}

impl Functional {
    pub const COMPACT: [Functional; 8] = [
        Functional::Mean,
        Functional::CoefficientOfVariation,
        Functional::P20,
        Functional::P50,
        Functional::P80,
        Functional::Range20To80,
        Functional::MeanRisingSlope,
        Functional::MeanFallingSlope,
    ];

    pub const EXTENDED_EXTRA: [Functional; 12] = [
        Functional::Min,
        Functional::Max,
        Functional::Skewness,
        Functional::Kurtosis,
        Functional::LinRegSlope,
        Functional::LinRegOffset,
        Functional::QuadRegA,
        Functional::QuadRegB,
        Functional::QuadRegC,
        Functional::UpLevelCross25,
        Functional::UpLevelCross50,
        Functional::UpLevelCross75,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Functional::Mean => "mean",
            Functional::CoefficientOfVariation => "cov",
            Functional::P20 => "p20",
            Functional::P50 => "p50",
            Functional::P80 => "p80",
            Functional::Range20To80 => "range_p20_p80",
            Functional::MeanRisingSlope => "mean_rising_slope",
            Functional::MeanFallingSlope => "mean_falling_slope",
            Functional::Min => "min",
            Functional::Max => "max",
            Functional::Skewness => "skewness",
            Functional::Kurtosis => "kurtosis",
            Functional::LinRegSlope => "linreg_slope",
            Functional::LinRegOffset => "linreg_offset",
            Functional::QuadRegA => "quadreg_a",
            Functional::QuadRegB => "quadreg_b",
            Functional::QuadRegC => "quadreg_c",
            Functional::UpLevelCross25 => "upcross_25",
            Functional::UpLevelCross50 => "upcross_50",
            Functional::UpLevelCross75 => "upcross_75",
        }
    }
}

/// A fixed functional inventory.
///
/// * compact: 11 descriptors x 8 functionals + 4 presence indicators = 92.
/// * extended: all 26 descriptors and their first differences x 20
///   functionals + 10 presence indicators = 1050.
///
/// Voiced-only descriptors are summarized over the frames where they are
/// present; an absent contour yields zeros plus a `_present = 0` indicator.
#[derive(Debug, Clone, PartialEq)]
pub struct FunctionalSet {
    pub id: SetId,
    descriptors: Vec<&'static str>,
    functionals: Vec<Functional>,
    with_deltas: bool,
}

const COMPACT_DESCRIPTORS: [&str; 11] = [
    "f0_semitone",
    "jitter_local",
    "shimmer_local",
    "hnr_db",
    "energy_rms_db",
    "spectral_slope_0_500",
    "spectral_slope_500_1500",
    "spectral_flux",
    "mfcc_1",
    "mfcc_2",
    "mfcc_3",
];

impl FunctionalSet {
    pub fn compact() -> Self {
        Self {
            id: SetId::Compact,
            descriptors: COMPACT_DESCRIPTORS.to_vec(),
            functionals: Functional::COMPACT.to_vec(),
            with_deltas: false,
        }
    }

    pub fn extended() -> Self {
        let mut functionals = Functional::COMPACT.to_vec();
        functionals.extend(Functional::EXTENDED_EXTRA);
        Self {
            id: SetId::Extended,
            descriptors: DESCRIPTORS.iter().map(|(n, _)| *n).collect(),
            functionals,
            with_deltas: true,
        }
    }

    pub fn for_id(id: SetId) -> Self {
        match id {
            SetId::Compact => Self::compact(),
            SetId::Extended => Self::extended(),
        }
    }

    pub fn functional_names(&self) -> Vec<&'static str> {
        self.functionals.iter().map(|f| f.name()).collect()
    }

    /// Contours summarized, as `(descriptor, is_delta)`.
    fn contours(&self) -> Vec<(&'static str, bool)> {
        let mut out: Vec<_> = self.descriptors.iter().map(|&d| (d, false)).collect();
        if self.with_deltas {
            out.extend(self.descriptors.iter().map(|&d| (d, true)));
        }
        out
    }

    pub fn feature_names(&self) -> Vec<String> {
        let mut names = Vec::with_capacity(self.output_dim());
        for (d, delta) in self.contours() {
            let stem = if delta { format!("{d}_de") } else { d.to_string() };
            for f in &self.functionals {
                names.push(format!("{stem}_{}", f.name()));
            }
            if is_voiced_only(d) {
                names.push(format!("{stem}_present"));
            }
        }
        names
    }

    pub fn output_dim(&self) -> usize {
        self.contours()
            .iter()
            .map(|(d, _)| self.functionals.len() + usize::from(is_voiced_only(d)))
            .sum()
    }
}

/// Summarizes every contour of the set into a fixed-length vector.
pub fn apply_functionals(lld: &LldMatrix, set: &FunctionalSet) -> Result<FeatureVector, FeatureError> {
    if lld.n_frames() == 0 {
        return Err(FeatureError::EmptyLld);
    }
    let mut values = Vec::with_capacity(set.output_dim());
    for (d, delta) in set.contours() {
        let col = lld
            .column_index(d)
            .ok_or_else(|| FeatureError::MissingDescriptor(d.to_string()))?;
        let raw = lld.column(col);
        let contour: Vec<f64> = if delta {
            raw.windows(2)
                .filter_map(|w| match (w[0], w[1]) {
                    (Some(a), Some(b)) => Some(b - a),
                    _ => None,
                })
                .collect()
        } else {
            raw.into_iter().flatten().collect()
        };
        if contour.is_empty() {
            values.extend(std::iter::repeat_n(0.0, set.functionals.len()));
        } else {
            let stats = ContourStats::new(&contour);
            values.extend(set.functionals.iter().map(|&f| stats.eval(f)));
        }
        if is_voiced_only(d) {
            values.push(if contour.is_empty() { 0.0 } else { 1.0 });
        }
    }
    let names = set.feature_names();
    // Degenerate contours can still overflow (e.g. huge kurtosis); keep the vector finite.
    let values = values
        .into_iter()
        .map(|v| if v.is_finite() { v } else { 0.0 })
        .collect();
    FeatureVector::new(names, values)
}

struct ContourStats<'a> {
    x: &'a [f64],
    sorted: Vec<f64>,
    mean: f64,
    var: f64,
}

impl<'a> ContourStats<'a> {
    fn new(x: &'a [f64]) -> Self {
        let mut sorted = x.to_vec();
        sorted.sort_by(f64::total_cmp);
        let n = x.len() as f64;
        let mean = x.iter().sum::<f64>() / n;
        let var = x.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
        Self { x, sorted, mean, var }
    }

    fn percentile(&self, p: f64) -> f64 {
        let n = self.sorted.len();
        let rank = p / 100.0 * (n - 1) as f64;
        let lo = rank.floor() as usize;
        let hi = rank.ceil() as usize;
        let frac = rank - lo as f64;
        self.sorted[lo] + (self.sorted[hi] - self.sorted[lo]) * frac
    }

    fn degenerate(&self) -> bool {
        self.var <= 1e-24 * (1.0 + self.mean * self.mean)
    }

    fn moment(&self, k: i32) -> f64 {
        self.x.iter().map(|v| (v - self.mean).powi(k)).sum::<f64>() / self.x.len() as f64
    }

    fn slope_mean(&self, rising: bool) -> f64 {
        let steps: Vec<f64> = self
            .x
            .windows(2)
            .map(|w| w[1] - w[0])
            .filter(|&d| if rising { d > 0.0 } else { d < 0.0 })
            .map(f64::abs)
            .collect();
        if steps.is_empty() {
            0.0
        } else {
            steps.iter().sum::<f64>() / steps.len() as f64
        }
    }

    fn linreg(&self) -> (f64, f64) {
        let n = self.x.len();
        if n < 2 {
            return (0.0, self.x[0]);
        }
        let mx = (n - 1) as f64 / 2.0;
        let sxx: f64 = (0..n).map(|i| (i as f64 - mx).powi(2)).sum();
        let sxy: f64 = self
            .x
            .iter()
            .enumerate()
            .map(|(i, v)| (i as f64 - mx) * (v - self.mean))
            .sum();
        let slope = sxy / sxx;
        (slope, self.mean - slope * mx)
    }

    fn quadreg(&self) -> [f64; 3] {
        let n = self.x.len();
        if n < 3 {
            let (slope, offset) = self.linreg();
            // Linear fallback expressed on normalized time.
            return [0.0, slope * (n.max(2) - 1) as f64, offset];
        }
        let t: Vec<f64> = (0..n).map(|i| i as f64 / (n - 1) as f64).collect();
        let mut s = [0.0; 5];
        let mut r = [0.0; 3];
        for (&ti, &yi) in t.iter().zip(self.x) {
            let mut p = 1.0;
            for (k, sk) in s.iter_mut().enumerate() {
                *sk += p;
                if k < 3 {
                    r[k] += p * yi;
                }
                p *= ti;
            }
        }
        // Normal equations for [c, b, a].
        let m = [[s[0], s[1], s[2]], [s[1], s[2], s[3]], [s[2], s[3], s[4]]];
        match solve3(m, r) {
            Some([c, b, a]) => [a, b, c],
            None => [0.0, 0.0, self.mean],
        }
    }

    fn upcross(&self, q: f64) -> f64 {
        let (lo, hi) = (self.sorted[0], self.sorted[self.sorted.len() - 1]);
        if hi <= lo {
            return 0.0;
        }
        let level = lo + q * (hi - lo);
        let count = self.x.windows(2).filter(|w| w[0] < level && w[1] >= level).count();
        count as f64 / self.x.len() as f64
    }

    fn eval(&self, f: Functional) -> f64 {
        match f {
            Functional::Mean => self.mean,
            Functional::CoefficientOfVariation => {
                if self.mean.abs() < 1e-12 {
                    0.0
                } else {
                    self.var.sqrt() / self.mean.abs()
                }
            }
            Functional::P20 => self.percentile(20.0),
            Functional::P50 => self.percentile(50.0),
            Functional::P80 => self.percentile(80.0),
            Functional::Range20To80 => self.percentile(80.0) - self.percentile(20.0),
            Functional::MeanRisingSlope => self.slope_mean(true),
            Functional::MeanFallingSlope => self.slope_mean(false),
            Functional::Min => self.sorted[0],
            Functional::Max => self.sorted[self.sorted.len() - 1],
            Functional::Skewness => {
                if self.degenerate() {
                    0.0
                } else {
                    self.moment(3) / self.var.powf(1.5)
                }
            }
            Functional::Kurtosis => {
                if self.degenerate() {
                    0.0
                } else {
                    self.moment(4) / (self.var * self.var) - 3.0
                }
            }
            Functional::LinRegSlope => self.linreg().0,
            Functional::LinRegOffset => self.linreg().1,
            Functional::QuadRegA => self.quadreg()[0],
            Functional::QuadRegB => self.quadreg()[1],
            Functional::QuadRegC => self.quadreg()[2],
            Functional::UpLevelCross25 => self.upcross(0.25),
            Functional::UpLevelCross50 => self.upcross(0.5),
            Functional::UpLevelCross75 => self.upcross(0.75),
        }
    }
}

/// Gaussian elimination with partial pivoting.
fn solve3(mut m: [[f64; 3]; 3], mut r: [f64; 3]) -> Option<[f64; 3]> {
    for col in 0..3 {
        let pivot = (col..3).max_by(|&a, &b| m[a][col].abs().total_cmp(&m[b][col].abs()))?;
        if m[pivot][col].abs() < 1e-12 {
            return None;
        }
        m.swap(col, pivot);
        r.swap(col, pivot);
        for row in col + 1..3 {
            let f = m[row][col] / m[col][col];
            let pivot_row = m[col];
            for (v, p) in m[row].iter_mut().zip(pivot_row).skip(col) {
                *v -= f * p;
            }
            r[row] -= f * r[col];
        }
    }
    let mut out = [0.0; 3];
    for row in (0..3).rev() {
        let tail: f64 = (row + 1..3).map(|k| m[row][k] * out[k]).sum();
        out[row] = (r[row] - tail) / m[row][row];
    }
    Some(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    /// Matrix whose every descriptor follows `contour`; voiced-only columns
    /// are absent where `voiced` is false.
    fn lld_from(contour: &[f64], voiced: &[bool]) -> LldMatrix {
        let names: Vec<String> = DESCRIPTORS.iter().map(|(n, _)| n.to_string()).collect();
        let rows = contour
            .iter()
            .zip(voiced)
            .map(|(&v, &on)| {
                DESCRIPTORS
                    .iter()
                    .map(|&(_, vo)| if vo && !on { None } else { Some(v) })
                    .collect()
            })
            .collect();
        LldMatrix::from_rows(names, rows, 10.0, voiced.to_vec()).unwrap()
    }

    #[test]
    fn documented_dimensions() {
        assert_eq!(FunctionalSet::compact().output_dim(), 92);
        assert_eq!(FunctionalSet::extended().output_dim(), 1050);
        assert!(FunctionalSet::extended().output_dim() >= 10 * FunctionalSet::compact().output_dim());
        for set in [FunctionalSet::compact(), FunctionalSet::extended()] {
            let names = set.feature_names();
            let unique: std::collections::HashSet<_> = names.iter().collect();
            assert_eq!(unique.len(), names.len());
            assert_eq!(names.len(), set.output_dim());
        }
    }

    #[test]
    fn constant_contour() {
        let m = lld_from(&[2.5; 7], &[true; 7]);
        let v = apply_functionals(&m, &FunctionalSet::extended()).unwrap();
        let get = |n: &str| v.get(n).unwrap();
        assert_eq!(get("energy_rms_db_mean"), 2.5);
        assert_eq!(get("energy_rms_db_cov"), 0.0);
        for p in ["p20", "p50", "p80"] {
            assert_eq!(get(&format!("energy_rms_db_{p}")), 2.5);
        }
        assert_eq!(get("energy_rms_db_mean_rising_slope"), 0.0);
        assert_eq!(get("energy_rms_db_mean_falling_slope"), 0.0);
        assert_eq!(get("energy_rms_db_skewness"), 0.0);
        assert_eq!(get("energy_rms_db_upcross_50"), 0.0);
    }

    #[test]
    fn ramp_contour() {
        let m = lld_from(&[1.0, 2.0, 3.0, 4.0, 5.0], &[true; 5]);
        let v = apply_functionals(&m, &FunctionalSet::extended()).unwrap();
        let get = |n: &str| v.get(n).unwrap();
        assert_eq!(get("zcr_mean"), 3.0);
        assert_eq!(get("zcr_p50"), 3.0);
        assert_eq!(get("zcr_mean_rising_slope"), 1.0);
        assert_eq!(get("zcr_mean_falling_slope"), 0.0);
        assert!((get("zcr_linreg_slope") - 1.0).abs() < 1e-12);
        assert!((get("zcr_linreg_offset") - 1.0).abs() < 1e-12);
        assert!(get("zcr_quadreg_a").abs() < 1e-9);
        assert!((get("zcr_quadreg_b") - 4.0).abs() < 1e-9);
        assert!((get("zcr_quadreg_c") - 1.0).abs() < 1e-9);
        assert_eq!(get("zcr_de_mean"), 1.0);
        // p20 at rank 0.8 -> 1.8
        assert!((get("zcr_p20") - 1.8).abs() < 1e-12);
    }

    #[test]
    fn quadratic_recovered() {
        let contour: Vec<f64> = (0..11)
            .map(|i| {
                let t = i as f64 / 10.0;
                3.0 * t * t - 2.0 * t + 0.5
            })
            .collect();
        let m = lld_from(&contour, &[true; 11]);
        let v = apply_functionals(&m, &FunctionalSet::extended()).unwrap();
        assert!((v.get("mfcc_4_quadreg_a").unwrap() - 3.0).abs() < 1e-9);
        assert!((v.get("mfcc_4_quadreg_b").unwrap() + 2.0).abs() < 1e-9);
        assert!((v.get("mfcc_4_quadreg_c").unwrap() - 0.5).abs() < 1e-9);
    }

    #[test]
    fn unvoiced_segment_keeps_dimension() {
        let m = lld_from(&[1.0, 2.0, 3.0], &[false; 3]);
        for set in [FunctionalSet::compact(), FunctionalSet::extended()] {
            let v = apply_functionals(&m, &set).unwrap();
            assert_eq!(v.len(), set.output_dim());
            assert_eq!(v.get("f0_semitone_mean"), Some(0.0));
            assert_eq!(v.get("f0_semitone_present"), Some(0.0));
            assert_eq!(v.get("jitter_local_present"), Some(0.0));
        }
        let voiced = lld_from(&[1.0, 2.0, 3.0], &[false, true, false]);
        let v = apply_functionals(&voiced, &FunctionalSet::compact()).unwrap();
        assert_eq!(v.get("f0_semitone_present"), Some(1.0));
        assert_eq!(v.get("f0_semitone_mean"), Some(2.0));
    }

    #[test]
    fn single_frame() {
        let m = lld_from(&[4.0], &[true]);
        let v = apply_functionals(&m, &FunctionalSet::extended()).unwrap();
        assert_eq!(v.len(), 1050);
        assert_eq!(v.get("zcr_quadreg_c"), Some(4.0));
        assert_eq!(v.get("zcr_de_mean"), Some(0.0));
    }

    proptest! {
        #[test]
        fn rotation_leaves_order_free_functionals(
            contour in proptest::collection::vec(-50.0f64..50.0, 2..40),
            shift in 0usize..40,
        ) {
            let n = contour.len();
            let mut rotated = contour.clone();
            rotated.rotate_left(shift % n);
            let a = apply_functionals(&lld_from(&contour, &vec![true; n]), &FunctionalSet::extended()).unwrap();
            let b = apply_functionals(&lld_from(&rotated, &vec![true; n]), &FunctionalSet::extended()).unwrap();
            for f in ["p20", "p50", "p80", "min", "max"] {
                let name = format!("hnr_db_{f}");
                prop_assert_eq!(a.get(&name), b.get(&name));
            }
            let (ma, mb) = (a.get("hnr_db_mean").unwrap(), b.get("hnr_db_mean").unwrap());
            prop_assert!((ma - mb).abs() <= 1e-12 * ma.abs().max(1.0));
        }

        #[test]
        fn dimension_contract(
            contour in proptest::collection::vec(-1e3f64..1e3, 1..30),
            mask_seed in any::<u64>(),
        ) {
            let voiced: Vec<bool> = (0..contour.len()).map(|i| (mask_seed >> (i % 64)) & 1 == 1).collect();
            let m = lld_from(&contour, &voiced);
            for set in [FunctionalSet::compact(), FunctionalSet::extended()] {
                let v = apply_functionals(&m, &set).unwrap();
                prop_assert_eq!(v.len(), set.output_dim());
                prop_assert!(v.values().iter().all(|x| x.is_finite()));
            }
        }
    }
}
