//! Random shoebox room configurations, their 16-value feature vectors, and
//! MinMax feature scaling.
//!
//! Feature layout: `[L, W, H, sx, sy, sz, rx, ry, rz, d_sr, a1..a6]` where
//! `a_g` is the mean absorption of third-octave bands `4(g-1)..4g`.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::bands::NUM_BANDS;
use crate::error::{Error, Result};

pub const NUM_FEATURES: usize = 16;
/// Bands averaged into each absorption feature.
pub const BANDS_PER_GROUP: usize = 4;
/// Bound applied to scaled val/test features.
pub const SCALED_CLAMP: (f64, f64) = (-0.5, 1.5);

const MAX_POSITION_ATTEMPTS: usize = 10_000;

/// Sampling ranges for room generation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoomRanges {
    pub length_m: (f64, f64),
    pub width_m: (f64, f64),
    pub height_m: (f64, f64),
    pub distance_m: (f64, f64),
    pub absorption: (f64, f64),
    pub wall_clearance_m: f64,
}

impl Default for RoomRanges {
    fn default() -> Self {
        RoomRanges {
            length_m: (3.0, 6.0),
            width_m: (3.0, 6.0),
            height_m: (2.5, 4.0),
            distance_m: (1.0, 4.0),
            absorption: (0.14, 0.65),
            wall_clearance_m: 0.3,
        }
    }
}

/// One shoebox room: geometry, source/receiver and per-band absorption shared by all walls.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoomConfig {
    pub length_m: f64,
    pub width_m: f64,
    pub height_m: f64,
    pub source_xyz: [f64; 3],
    pub receiver_xyz: [f64; 3],
    pub absorption: [f64; NUM_BANDS],
    #[serde(default)]
    pub seed: u64,
}

impl RoomConfig {
    pub fn dims(&self) -> [f64; 3] {
        [self.length_m, self.width_m, self.height_m]
    }

    pub fn volume(&self) -> f64 {
        self.length_m * self.width_m * self.height_m
    }

    pub fn surface_area(&self) -> f64 {
        let [l, w, h] = self.dims();
        2.0 * (l * w + l * h + w * h)
    }

    pub fn source_receiver_distance(&self) -> f64 {
        distance(&self.source_xyz, &self.receiver_xyz)
    }

    /// Same room with source and receiver exchanged.
    pub fn swapped(&self) -> RoomConfig {
        RoomConfig {
            source_xyz: self.receiver_xyz,
            receiver_xyz: self.source_xyz,
            ..self.clone()
        }
    }

    /// Checks the invariants of `ranges`.
    pub fn validate(&self, ranges: &RoomRanges) -> Result<()> {
        let within = |v: f64, (lo, hi): (f64, f64)| v >= lo && v <= hi;
        if !within(self.length_m, ranges.length_m)
            || !within(self.width_m, ranges.width_m)
            || !within(self.height_m, ranges.height_m)
        {
            return Err(Error::Validation(format!(
                "room dimensions {:?} out of range",
                self.dims()
            )));
        }
        let d = self.source_receiver_distance();
        if !within(d, ranges.distance_m) {
            return Err(Error::Validation(format!(
                "source-receiver distance {d} outside {:?}",
                ranges.distance_m
            )));
        }
        for (b, &a) in self.absorption.iter().enumerate() {
            if !within(a, ranges.absorption) {
                return Err(Error::Validation(format!("absorption[{b}] = {a} out of range")));
            }
        }
        self.validate_positions(ranges.wall_clearance_m)
    }

    /// Checks that source and receiver lie inside the room with `clearance` to every wall.
    pub fn validate_positions(&self, clearance: f64) -> Result<()> {
        let dims = self.dims();
        for (name, p) in [("source", &self.source_xyz), ("receiver", &self.receiver_xyz)] {
            for axis in 0..3 {
                if p[axis] < clearance || p[axis] > dims[axis] - clearance {
                    return Err(Error::Validation(format!(
                        "{name} coordinate {axis} = {} violates {clearance} m wall clearance",
                        p[axis]
                    )));
                }
            }
        }
        Ok(())
    }
}

pub fn distance(a: &[f64; 3], b: &[f64; 3]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f64>()
        .sqrt()
}

/// Samples a room with the default ranges.
pub fn sample_room(seed: u64) -> Result<RoomConfig> {
    sample_room_with(seed, &RoomRanges::default())
}

/// Samples a room: uniform dimensions, spectrally smoothed absorption, and
/// rejection-sampled source/receiver positions.
pub fn sample_room_with(seed: u64, ranges: &RoomRanges) -> Result<RoomConfig> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let length_m = rng.gen_range(ranges.length_m.0..=ranges.length_m.1);
    let width_m = rng.gen_range(ranges.width_m.0..=ranges.width_m.1);
    let height_m = rng.gen_range(ranges.height_m.0..=ranges.height_m.1);

    let (a_lo, a_hi) = ranges.absorption;
    let raw: Vec<f64> = (0..NUM_BANDS).map(|_| rng.gen_range(a_lo..=a_hi)).collect();
    let mut absorption = [0.0; NUM_BANDS];
    for (b, a) in absorption.iter_mut().enumerate() {
        let lo = b.saturating_sub(1);
        let hi = (b + 1).min(NUM_BANDS - 1);
        let window = &raw[lo..=hi];
        *a = (window.iter().sum::<f64>() / window.len() as f64).clamp(a_lo, a_hi);
    }

    let dims = [length_m, width_m, height_m];
    let c = ranges.wall_clearance_m;
    if dims.iter().any(|&d| d <= 2.0 * c) {
        return Err(Error::Generation(format!(
            "room {dims:?} too small for {c} m wall clearance"
        )));
    }
    let point = |rng: &mut ChaCha8Rng| -> [f64; 3] {
        [0, 1, 2].map(|i| rng.gen_range(c..=dims[i] - c))
    };
    for _ in 0..MAX_POSITION_ATTEMPTS {
        let s = point(&mut rng);
        let r = point(&mut rng);
        let d = distance(&s, &r);
        if d >= ranges.distance_m.0 && d <= ranges.distance_m.1 {
            return Ok(RoomConfig {
                length_m,
                width_m,
                height_m,
                source_xyz: s,
                receiver_xyz: r,
                absorption,
                seed,
            });
        }
    }
    Err(Error::Generation(format!(
        "no source/receiver pair with distance in {:?} after {MAX_POSITION_ATTEMPTS} attempts; constraints are inconsistent",
        ranges.distance_m
    )))
}

/// Model input for one room, unscaled unless produced by [`MinMaxScaler::scale`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FeatureVector(pub [f64; NUM_FEATURES]);

impl FeatureVector {
    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }
}

pub fn featurize(cfg: &RoomConfig) -> FeatureVector {
    let mut v = [0.0; NUM_FEATURES];
    v[..3].copy_from_slice(&cfg.dims());
    v[3..6].copy_from_slice(&cfg.source_xyz);
    v[6..9].copy_from_slice(&cfg.receiver_xyz);
    v[9] = cfg.source_receiver_distance();
    for (g, chunk) in cfg.absorption.chunks(BANDS_PER_GROUP).enumerate() {
        v[10 + g] = chunk.iter().sum::<f64>() / chunk.len() as f64;
    }
    FeatureVector(v)
}

/// Per-feature MinMax scaling fitted on the training split.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MinMaxScaler {
    pub min: Vec<f64>,
    pub max: Vec<f64>,
}

impl MinMaxScaler {
    pub fn fit(features: &[FeatureVector]) -> Result<Self> {
        if features.len() < 2 {
            return Err(Error::InvalidArgument(format!(
                "scaler needs at least 2 feature vectors, got {}",
                features.len()
            )));
        }
        let mut min = vec![f64::INFINITY; NUM_FEATURES];
        let mut max = vec![f64::NEG_INFINITY; NUM_FEATURES];
        for f in features {
            for (j, &x) in f.0.iter().enumerate() {
                min[j] = min[j].min(x);
                max[j] = max[j].max(x);
            }
        }
        Ok(MinMaxScaler { min, max })
    }

    fn span(&self, j: usize) -> Option<f64> {
        let s = self.max[j] - self.min[j];
        (s > 0.0).then_some(s)
    }

    /// Unclamped scaling; constant features map to 0.
    pub fn scale(&self, f: &FeatureVector) -> FeatureVector {
        let mut out = [0.0; NUM_FEATURES];
        for (j, o) in out.iter_mut().enumerate() {
            *o = match self.span(j) {
                Some(s) => (f.0[j] - self.min[j]) / s,
                None => 0.0,
            };
        }
        FeatureVector(out)
    }

    /// Scaling for data outside the fitted split: values are clamped to
    /// [`SCALED_CLAMP`]. Returns the number of clamped entries.
    pub fn scale_clamped(&self, f: &FeatureVector) -> (FeatureVector, usize) {
        let mut v = self.scale(f);
        let mut clamped = 0;
        for x in v.0.iter_mut() {
            let c = x.clamp(SCALED_CLAMP.0, SCALED_CLAMP.1);
            if c != *x {
                clamped += 1;
                *x = c;
            }
        }
        if clamped > 0 {
            log::warn!("{clamped} scaled features clamped to {SCALED_CLAMP:?}");
        }
        (v, clamped)
    }

    pub fn unscale(&self, f: &FeatureVector) -> FeatureVector {
        let mut out = [0.0; NUM_FEATURES];
        for (j, o) in out.iter_mut().enumerate() {
            *o = match self.span(j) {
                Some(s) => self.min[j] + f.0[j] * s,
                None => self.min[j],
            };
        }
        FeatureVector(out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn room(abs: [f64; NUM_BANDS]) -> RoomConfig {
        RoomConfig {
            length_m: 4.0,
            width_m: 5.0,
            height_m: 3.0,
            source_xyz: [1.0, 1.0, 1.0],
            receiver_xyz: [3.0, 1.0, 1.0],
            absorption: abs,
            seed: 0,
        }
    }

    #[test]
    fn sampling_is_deterministic() {
        assert_eq!(sample_room(42).unwrap(), sample_room(42).unwrap());
        assert_ne!(sample_room(42).unwrap(), sample_room(43).unwrap());
    }

    #[test]
    fn sampled_rooms_satisfy_invariants() {
        let ranges = RoomRanges::default();
        let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
        for seed in 0..10_000 {
            let r = sample_room(seed).unwrap();
            r.validate(&ranges).unwrap();
            let d = r.source_receiver_distance();
            assert!((1.0..=4.0).contains(&d));
            for &a in &r.absorption {
                lo = lo.min(a);
                hi = hi.max(a);
            }
        }
        assert!(lo >= 0.14 && hi <= 0.65, "{lo} {hi}");
    }

    #[test]
    fn impossible_distance_is_a_generation_error() {
        let ranges = RoomRanges {
            distance_m: (50.0, 60.0),
            ..RoomRanges::default()
        };
        assert!(matches!(sample_room_with(1, &ranges), Err(Error::Generation(_))));
    }

    #[test]
    fn featurize_constant_absorption() {
        let f = featurize(&room([0.3; NUM_BANDS]));
        for g in 0..6 {
            assert!((f.0[10 + g] - 0.3).abs() < 1e-15);
        }
    }

    #[test]
    fn featurize_axis_aligned_distance() {
        let f = featurize(&room([0.3; NUM_BANDS]));
        assert_eq!(f.0[9], 2.0);
        assert_eq!(&f.0[..9], &[4.0, 5.0, 3.0, 1.0, 1.0, 1.0, 3.0, 1.0, 1.0]);
    }

    #[test]
    fn featurize_group_means() {
        let mut abs = [0.0; NUM_BANDS];
        for (b, a) in abs.iter_mut().enumerate() {
            *a = if (b / 4) % 2 == 0 { 0.14 } else { 0.65 };
        }
        let f = featurize(&room(abs));
        let expected = [0.14, 0.65, 0.14, 0.65, 0.14, 0.65];
        for g in 0..6 {
            assert!((f.0[10 + g] - expected[g]).abs() < 1e-15);
        }
    }

    fn fv(first: f64) -> FeatureVector {
        let mut v = [1.0; NUM_FEATURES];
        v[0] = first;
        FeatureVector(v)
    }

    #[test]
    fn scaler_midpoint_and_constant_column() {
        let s = MinMaxScaler::fit(&[fv(0.0), fv(10.0)]).unwrap();
        let scaled = s.scale(&fv(5.0));
        assert_eq!(scaled.0[0], 0.5);
        // column 1 is constant 1.0
        assert_eq!(scaled.0[1], 0.0);
        assert_eq!(s.unscale(&scaled).0[1], 1.0);
    }

    #[test]
    fn scaler_rejects_short_input() {
        assert!(matches!(MinMaxScaler::fit(&[]), Err(Error::InvalidArgument(_))));
    }

    #[test]
    fn training_columns_span_unit_interval() {
        let feats: Vec<_> = (0..50).map(|s| featurize(&sample_room(s).unwrap())).collect();
        let s = MinMaxScaler::fit(&feats).unwrap();
        let scaled: Vec<_> = feats.iter().map(|f| s.scale(f)).collect();
        for j in 0..NUM_FEATURES {
            let lo = scaled.iter().map(|f| f.0[j]).fold(f64::INFINITY, f64::min);
            let hi = scaled.iter().map(|f| f.0[j]).fold(f64::NEG_INFINITY, f64::max);
            assert_eq!(lo, 0.0);
            assert!((hi - 1.0).abs() < 1e-15);
        }
    }

    #[test]
    fn clamping_counts_out_of_range() {
        let s = MinMaxScaler::fit(&[fv(0.0), fv(1.0)]).unwrap();
        let (v, n) = s.scale_clamped(&fv(5.0));
        assert_eq!(n, 1);
        assert_eq!(v.0[0], 1.5);
    }

    proptest! {
        #[test]
        fn scale_unscale_identity(xs in prop::collection::vec(-100.0f64..100.0, NUM_FEATURES),
                                  a in prop::collection::vec(-50.0f64..0.0, NUM_FEATURES),
                                  b in prop::collection::vec(0.5f64..50.0, NUM_FEATURES)) {
            let lo = FeatureVector(a.clone().try_into().unwrap());
            let hi = FeatureVector(b.clone().try_into().unwrap());
            let s = MinMaxScaler::fit(&[lo, hi]).unwrap();
            let x = FeatureVector(xs.clone().try_into().unwrap());
            let back = s.unscale(&s.scale(&x));
            for j in 0..NUM_FEATURES {
                let tol = 1e-12 * xs[j].abs().max(1.0);
                prop_assert!((back.0[j] - xs[j]).abs() <= tol, "{} vs {}", back.0[j], xs[j]);
            }
        }
    }
}
