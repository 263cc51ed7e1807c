//! Impulse-response synthesis from decay curves.
//!
//! Each band's curve is differenced into a magnitude envelope at the curve
//! frame rate, given random "sticky" signs (each sign repeats the previous
//! one with probability `p`), linearly interpolated to audio rate and
//! rescaled frame by frame so every frame keeps exactly its envelope
//! energy. Bands are summed and the result is peak-normalized.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::edc::EdcMatrix;
use crate::error::{Error, Result};
use crate::scalar::{mix_seed, Scalar};

/// Peak amplitude of a reconstructed waveform.
pub const OUTPUT_PEAK: f64 = 0.99;
/// Increases smaller than this are treated as rounding noise.
pub const INCREASE_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RssConfig {
    /// Probability that a sample keeps the previous sign.
    pub p: f64,
    pub seed: u64,
}

impl Default for RssConfig {
    fn default() -> Self {
        RssConfig { p: 0.9, seed: 0 }
    }
}

impl RssConfig {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.p) {
            return Err(Error::InvalidArgument(format!("stickiness {} outside [0, 1]", self.p)));
        }
        Ok(())
    }

    /// Independent stream for one band.
    pub fn for_band(&self, band: usize) -> RssConfig {
        RssConfig {
            p: self.p,
            seed: mix_seed(self.seed, band as u64),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Envelope<T> {
    pub values: Vec<T>,
    /// Curve steps that increased by more than [`INCREASE_TOLERANCE`] and were clamped to zero.
    pub clamped: usize,
}

/// `env[n] = sqrt(max(edc[n] - edc[n + 1], 0))`.
pub fn edc_to_envelope<T: Scalar>(edc: &[T]) -> Result<Envelope<T>> {
    if edc.len() < 2 {
        return Err(Error::InvalidArgument(format!(
            "curve of length {} has no steps",
            edc.len()
        )));
    }
    let mut clamped = 0;
    let values = edc
        .windows(2)
        .map(|w| {
            let d = w[0] - w[1];
            if d.as_f64() < -INCREASE_TOLERANCE {
                clamped += 1;
            }
            d.max(T::zero()).sqrt()
        })
        .collect();
    if clamped > 0 {
        log::warn!("{clamped} increasing curve step(s) clamped to zero energy");
    }
    Ok(Envelope { values, clamped })
}

/// Random sign-sticky sequence of `+1`/`-1`.
pub fn rss_signs(len: usize, cfg: &RssConfig) -> Result<Vec<i8>> {
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut out = Vec::with_capacity(len);
    if len == 0 {
        return Ok(out);
    }
    let mut s: i8 = if rng.gen_bool(0.5) { 1 } else { -1 };
    out.push(s);
    for _ in 1..len {
        if !rng.gen_bool(cfg.p) {
            s = -s;
        }
        out.push(s);
    }
    Ok(out)
}

/// Sample index where each curve frame starts; `len + 1` boundaries.
fn frame_bounds(len: usize, frame_dt: f64, fs: f64) -> Result<Vec<usize>> {
    let hop = frame_dt * fs;
    if !(hop >= 1.0) || !hop.is_finite() {
        return Err(Error::InvalidArgument(format!(
            "curve frame of {frame_dt} s is shorter than one sample at {fs} Hz"
        )));
    }
    Ok((0..=len).map(|n| (n as f64 * hop).round() as usize).collect())
}

/// One band's waveform. Its length is `round(len * frame_dt * fs)`; the
/// last curve frame releases whatever energy the curve still holds, so the
/// waveform carries exactly `edc[0]`.
pub fn reconstruct_band<T: Scalar>(
    edc: &[T],
    frame_dt: f64,
    fs: f64,
    cfg: &RssConfig,
) -> Result<(Vec<T>, usize)> {
    let env = edc_to_envelope(edc)?;
    let frames = edc.len();
    let signs = rss_signs(frames, cfg)?;
    let bounds = frame_bounds(frames, frame_dt, fs)?;
    let residual = edc[frames - 1].as_f64().max(0.0).sqrt();
    let values: Vec<f64> = env
        .values
        .iter()
        .map(|e| e.as_f64())
        .chain(std::iter::once(residual))
        .zip(&signs)
        .map(|(e, &s)| e * s as f64)
        .collect();
    let centers: Vec<f64> = (0..frames)
        .map(|n| 0.5 * (bounds[n] + bounds[n + 1]) as f64 - 0.5)
        .collect();

    let mut out = vec![T::zero(); bounds[frames]];
    for n in 0..frames {
        let (lo, hi) = (bounds[n], bounds[n + 1]);
        if hi <= lo {
            continue;
        }
        let seg = &mut out[lo..hi];
        for (i, o) in seg.iter_mut().enumerate() {
            let m = (lo + i) as f64;
            let (a, b, w) = if m < centers[n] {
                if n == 0 {
                    (values[0], values[0], 0.0)
                } else {
                    let w = (m - centers[n - 1]) / (centers[n] - centers[n - 1]);
                    (values[n - 1], values[n], w)
                }
            } else if n + 1 < frames {
                let w = (m - centers[n]) / (centers[n + 1] - centers[n]);
                (values[n], values[n + 1], w)
            } else {
                (values[n], values[n], 0.0)
            };
            *o = T::lit(a * (1.0 - w) + b * w);
        }
        let target = values[n] * values[n];
        let have: f64 = seg.iter().map(|v| v.as_f64() * v.as_f64()).sum();
        if have > 0.0 {
            let g = T::lit((target / have).sqrt());
            seg.iter_mut().for_each(|v| *v *= g);
        } else if target > 0.0 {
            let a = T::lit(signs[n] as f64 * (target / seg.len() as f64).sqrt());
            seg.iter_mut().for_each(|v| *v = a);
        }
    }
    Ok((out, env.clamped))
}

#[derive(Debug, Clone, PartialEq)]
pub struct Reconstruction<T> {
    /// Peak-normalized sum of all bands.
    pub waveform: Vec<T>,
    /// Per-band signals before summation and normalization.
    pub bands: Vec<Vec<T>>,
    /// Gain applied to the band sum.
    pub gain: f64,
    pub clamped_steps: usize,
}

/// Full impulse response from a multi-band curve matrix.
pub fn reconstruct_rir<T: Scalar>(
    edcs: &EdcMatrix<T>,
    fs: f64,
    cfg: &RssConfig,
) -> Result<Reconstruction<T>> {
    cfg.validate()?;
    let mut bands = Vec::with_capacity(edcs.bands);
    let mut clamped_steps = 0;
    for (b, row) in edcs.rows().enumerate() {
        let (sig, c) = reconstruct_band(row, edcs.frame_dt, fs, &cfg.for_band(b))?;
        clamped_steps += c;
        bands.push(sig);
    }
    let n = bands.first().map_or(0, Vec::len);
    let mut sum = vec![0.0f64; n];
    for band in &bands {
        for (s, v) in sum.iter_mut().zip(band) {
            *s += v.as_f64();
        }
    }
    let peak = sum.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let gain = if peak > 0.0 { OUTPUT_PEAK / peak } else { 1.0 };
    let waveform = sum.iter().map(|&v| T::lit(v * gain)).collect();
    Ok(Reconstruction {
        waveform,
        bands,
        gain,
        clamped_steps,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::edc::{downsample_edc, schroeder};

    #[test]
    fn envelope_examples() {
        assert_eq!(edc_to_envelope(&[1.0, 0.0]).unwrap().values, vec![1.0]);
        let e = edc_to_envelope(&[1.0, 0.5, 0.25, 0.0]).unwrap().values;
        let expected = [0.5f64.sqrt(), 0.5, 0.5];
        for (a, b) in e.iter().zip(expected) {
            assert!((a - b).abs() < 1e-15);
        }
    }

    #[test]
    fn envelope_clamps_increases() {
        let e = edc_to_envelope(&[1.0, 0.5, 0.6, 0.1]).unwrap();
        assert_eq!(e.clamped, 1);
        assert_eq!(e.values[1], 0.0);
        let tiny = edc_to_envelope(&[1.0, 0.5, 0.5 + 1e-12]).unwrap();
        assert_eq!(tiny.clamped, 0);
    }

    #[test]
    fn sign_extremes() {
        let s = rss_signs(1000, &RssConfig { p: 1.0, seed: 4 }).unwrap();
        assert!(s.iter().all(|&v| v == s[0]));
        let s = rss_signs(1000, &RssConfig { p: 0.0, seed: 4 }).unwrap();
        assert!(s.windows(2).all(|w| w[0] == -w[1]));
        assert!(rss_signs(3, &RssConfig { p: 1.5, seed: 0 }).is_err());
    }

    #[test]
    fn signs_are_seeded() {
        let a = rss_signs(500, &RssConfig { p: 0.9, seed: 1 }).unwrap();
        let b = rss_signs(500, &RssConfig { p: 0.9, seed: 1 }).unwrap();
        let c = rss_signs(500, &RssConfig { p: 0.9, seed: 2 }).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, c);
    }

    #[test]
    fn flat_then_zero_curve_is_a_burst() {
        // all energy released in the step from frame 3 to 4
        let edc = [1.0, 1.0, 1.0, 1.0, 0.0, 0.0, 0.0, 0.0];
        let (sig, _) = reconstruct_band(&edc, 0.01, 1000.0, &RssConfig::default()).unwrap();
        assert_eq!(sig.len(), 80);
        let energy: f64 = sig.iter().map(|v| v * v).sum();
        assert!((energy - 1.0).abs() < 1e-12);
        assert!(sig[..30].iter().all(|&v| v == 0.0));
        assert!(sig[30..40].iter().all(|&v| v != 0.0));
        assert!(sig[40..].iter().all(|&v| v == 0.0));
    }

    #[test]
    fn frame_energy_is_preserved() {
        let edc: Vec<f64> = (0..200).map(|n| (-0.05 * n as f64).exp()).collect();
        let (sig, _) = reconstruct_band(&edc, 0.0015, 16000.0, &RssConfig::default()).unwrap();
        let energy: f64 = sig.iter().map(|v| v * v).sum();
        assert!((energy - edc[0]).abs() < 1e-6);
        let back = downsample_edc(&schroeder(&sig).unwrap(), 200).unwrap();
        for j in 0..200 {
            assert!((back[j] - edc[j]).abs() < 1e-9, "{j}: {} vs {}", back[j], edc[j]);
        }
    }

    #[test]
    fn waveform_is_peak_normalized() {
        let row: Vec<f64> = (0..100).map(|n| (-0.1 * n as f64).exp()).collect();
        let mut curves = row.clone();
        curves.extend(&row);
        let m = EdcMatrix::new(2, 100, 0.002, curves).unwrap();
        let r = reconstruct_rir(&m, 16000.0, &RssConfig::default()).unwrap();
        let peak = r.waveform.iter().fold(0.0f64, |a, v| a.max(v.abs()));
        assert!((peak - OUTPUT_PEAK).abs() < 1e-12);
        assert!(r.waveform.iter().all(|v| v.is_finite()));
        assert_ne!(r.bands[0], r.bands[1]);
    }

    #[test]
    fn too_coarse_sample_rate_rejected() {
        assert!(reconstruct_band(&[1.0, 0.5, 0.0], 0.0001, 1000.0, &RssConfig::default()).is_err());
    }
}
