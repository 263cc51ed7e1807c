//! Shoebox image-source simulation producing one impulse response per
//! third-octave band.
//!
//! Every band shares the same image set and arrival times; only the wall
//! reflection factor `sqrt(1 - absorption[b])` differs. Fractional arrival
//! times are split linearly over the two neighbouring samples.
//!
//! Reflected images get a pseudo-random polarity by default. With all-positive
//! impulses the dense late tail adds up coherently (dozens of arrivals share a
//! sample), which inflates the decay time well past Eyring. The sign depends
//! only on the reflection path, so swapping source and receiver keeps it.

use serde::{Deserialize, Serialize};

use crate::bands::{NUM_BANDS, THIRD_OCTAVE_CENTERS};
use crate::error::{Error, Result};
use crate::roomgen::{RoomConfig, RoomRanges};
use crate::scalar::mix_seed;

pub const SPEED_OF_SOUND: f64 = 343.0;
pub const DEFAULT_SAMPLE_RATE: f64 = 16_000.0;
/// Signal length as a multiple of the slowest band's Eyring T60.
pub const LENGTH_T60_FACTOR: f64 = 1.5;
pub const MIN_LENGTH_S: f64 = 0.5;
/// Images closer than this to the receiver are skipped.
pub const MIN_IMAGE_DISTANCE: f64 = 1e-6;
/// Default energy cutoff for an image, relative to the direct sound.
pub const DEFAULT_PRUNE_DB: f64 = -160.0;

/// A mirrored copy of the source in the shoebox lattice.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImageSource {
    /// Lattice cell index per axis.
    pub lattice: [i32; 3],
    /// 1 when the image is mirrored along the axis.
    pub parity: [u8; 3],
    pub position: [f64; 3],
    /// Wall hits per axis (each axis owns a pair of opposite walls).
    pub reflections: [u32; 3],
    pub order: u32,
}

fn axis_image(s: f64, len: f64, n: i32, q: u8) -> (f64, u32) {
    let sign = if q == 1 { -1.0 } else { 1.0 };
    let pos = sign * s + 2.0 * n as f64 * len;
    let hits = (n - q as i32).unsigned_abs() + n.unsigned_abs();
    (pos, hits)
}

/// All images whose total reflection order is at most `max_order`.
pub fn enumerate_images(cfg: &RoomConfig, max_order: u32) -> Vec<ImageSource> {
    let dims = cfg.dims();
    let span = (max_order / 2 + 1) as i32;
    let mut per_axis: [Vec<(i32, u8, f64, u32)>; 3] = Default::default();
    for axis in 0..3 {
        for q in 0..2u8 {
            for n in -span..=span {
                let (p, hits) = axis_image(cfg.source_xyz[axis], dims[axis], n, q);
                if hits <= max_order {
                    per_axis[axis].push((n, q, p, hits));
                }
            }
        }
    }
    let mut out = Vec::new();
    for &(nx, qx, px, hx) in &per_axis[0] {
        for &(ny, qy, py, hy) in &per_axis[1] {
            if hx + hy > max_order {
                continue;
            }
            for &(nz, qz, pz, hz) in &per_axis[2] {
                let order = hx + hy + hz;
                if order > max_order {
                    continue;
                }
                out.push(ImageSource {
                    lattice: [nx, ny, nz],
                    parity: [qx, qy, qz],
                    position: [px, py, pz],
                    reflections: [hx, hy, hz],
                    order,
                });
            }
        }
    }
    out
}

/// Classical Eyring reverberation time for one band, in seconds.
pub fn eyring_t60(cfg: &RoomConfig, band: usize) -> Result<f64> {
    let alpha = *cfg
        .absorption
        .get(band)
        .ok_or_else(|| Error::InvalidArgument(format!("band {band} out of range")))?;
    eyring_t60_for(cfg.volume(), cfg.surface_area(), alpha)
}

pub fn eyring_t60_for(volume: f64, surface: f64, alpha: f64) -> Result<f64> {
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(Error::Domain(format!(
            "Eyring formula needs 0 < absorption < 1, got {alpha}"
        )));
    }
    Ok(0.161 * volume / (-surface * (1.0 - alpha).ln()))
}

/// Samples needed to hold `LENGTH_T60_FACTOR` times the slowest band's
/// Eyring T60, and at least `MIN_LENGTH_S`.
pub fn required_length(cfg: &RoomConfig, fs: f64) -> Result<usize> {
    let mut t60 = 0.0f64;
    for b in 0..NUM_BANDS {
        t60 = t60.max(eyring_t60(cfg, b)?);
    }
    Ok(length_for_t60(t60, fs))
}

fn length_for_t60(t60: f64, fs: f64) -> usize {
    ((LENGTH_T60_FACTOR * t60 * fs).ceil() as usize).max((MIN_LENGTH_S * fs).ceil() as usize)
}

/// Signal length covering every room the ranges can produce: largest room,
/// least absorption. Rounded up to a multiple of `multiple`.
pub fn worst_case_length(ranges: &RoomRanges, fs: f64, multiple: usize) -> Result<usize> {
    let (l, w, h) = (ranges.length_m.1, ranges.width_m.1, ranges.height_m.1);
    let surface = 2.0 * (l * w + l * h + w * h);
    let t60 = eyring_t60_for(l * w * h, surface, ranges.absorption.0)?;
    let n = length_for_t60(t60, fs);
    let m = multiple.max(1);
    Ok(n.div_ceil(m) * m)
}

/// Simulation settings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimConfig {
    pub sample_rate: f64,
    /// Reflection-order cap. `None` keeps every image that arrives within the signal.
    pub max_order: Option<u32>,
    /// Signal length in samples. `None` uses [`required_length`].
    pub length: Option<usize>,
    /// Images whose energy relative to the direct sound falls below this
    /// level (in dB) in every band are dropped.
    pub prune_db: f64,
    /// Randomize the sign of reflected images. Direct sound stays positive.
    #[serde(default = "default_polarity")]
    pub polarity: bool,
}

fn default_polarity() -> bool {
    true
}

impl Default for SimConfig {
    fn default() -> Self {
        SimConfig {
            sample_rate: DEFAULT_SAMPLE_RATE,
            max_order: None,
            length: None,
            prune_db: DEFAULT_PRUNE_DB,
            polarity: true,
        }
    }
}

/// Per-band impulse responses of one room.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BandRirSet {
    pub sample_rate: f64,
    pub bands: Vec<f64>,
    pub signals: Vec<Vec<f64>>,
    /// Highest reflection order that contributed.
    pub max_order: u32,
    pub image_count: usize,
    /// Images skipped because they coincide with the receiver.
    pub skipped_coincident: usize,
}

impl BandRirSet {
    pub fn len(&self) -> usize {
        self.signals.first().map_or(0, Vec::len)
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

struct AxisTerm {
    offset: f64,
    hits: u32,
    /// Lattice label that survives a source/receiver swap: unmirrored
    /// images map n -> -n, mirrored ones keep n.
    key: u64,
}

fn axis_key(n: i32, q: u8) -> u64 {
    let n = if q == 0 { n.unsigned_abs() } else { n as u32 };
    ((q as u64) << 32) | n as u64
}

fn image_sign(kx: u64, ky: u64, kz: u64) -> f64 {
    let h = mix_seed(mix_seed(mix_seed(0x1A6E_5167, kx), ky), kz);
    if h & 1 == 0 { 1.0 } else { -1.0 }
}

/// Axis terms `image - receiver` with `|offset| <= radius`, sorted by `|offset|`.
fn axis_terms(s: f64, r: f64, len: f64, radius: f64, max_order: Option<u32>) -> Vec<AxisTerm> {
    let mut out = Vec::new();
    for q in 0..2u8 {
        let base = if q == 1 { -s } else { s } - r;
        let n_lo = ((-radius - base) / (2.0 * len)).floor() as i32;
        let n_hi = ((radius - base) / (2.0 * len)).ceil() as i32;
        for n in n_lo..=n_hi {
            let (p, hits) = axis_image(s, len, n, q);
            let offset = p - r;
            if offset.abs() <= radius && max_order.is_none_or(|m| hits <= m) {
                out.push(AxisTerm { offset, hits, key: axis_key(n, q) });
            }
        }
    }
    out.sort_by(|a, b| a.offset.abs().total_cmp(&b.offset.abs()));
    out
}

/// Simulates the 24 band impulse responses of `cfg`.
pub fn simulate_band_rirs(cfg: &RoomConfig, sim: &SimConfig) -> Result<BandRirSet> {
    let fs = sim.sample_rate;
    if !(fs > 0.0) {
        return Err(Error::InvalidArgument(format!("sample rate {fs}")));
    }
    cfg.validate_positions(0.0)?;
    for (b, &a) in cfg.absorption.iter().enumerate() {
        if !(0.0..=1.0).contains(&a) {
            return Err(Error::Domain(format!("absorption[{b}] = {a} outside [0, 1]")));
        }
    }
    let n_samples = match sim.length {
        Some(n) => n,
        None => {
            let a_min = cfg.absorption.iter().cloned().fold(f64::INFINITY, f64::min);
            if a_min > 0.0 && a_min < 1.0 {
                required_length(cfg, fs)?
            } else {
                (MIN_LENGTH_S * fs).ceil() as usize
            }
        }
    };
    if n_samples < 2 {
        return Err(Error::InvalidArgument(format!("signal length {n_samples}")));
    }

    let dims = cfg.dims();
    let radius = SPEED_OF_SOUND * n_samples as f64 / fs;
    let terms: Vec<Vec<AxisTerm>> = (0..3)
        .map(|a| axis_terms(cfg.source_xyz[a], cfg.receiver_xyz[a], dims[a], radius, sim.max_order))
        .collect();

    let beta: Vec<f64> = cfg.absorption.iter().map(|a| (1.0 - a).sqrt()).collect();
    let beta_max = beta.iter().cloned().fold(0.0, f64::max);
    let max_hits: u32 = terms
        .iter()
        .map(|t| t.iter().map(|x| x.hits).max().unwrap_or(0))
        .sum();
    // gains[k * NUM_BANDS + b] = beta_b^k
    let mut gains = vec![0.0; (max_hits as usize + 1) * NUM_BANDS];
    for b in 0..NUM_BANDS {
        let mut g = 1.0;
        for k in 0..=max_hits as usize {
            gains[k * NUM_BANDS + b] = g;
            g *= beta[b];
        }
    }
    let d0 = cfg.source_receiver_distance();
    let prune = 10f64.powf(sim.prune_db / 10.0);
    let ln_beta2 = if beta_max > 0.0 { 2.0 * beta_max.ln() } else { f64::NEG_INFINITY };

    let r2 = radius * radius;
    let mut interleaved = vec![0.0f64; n_samples * NUM_BANDS];
    let mut used_order = 0u32;
    let mut image_count = 0usize;
    let mut skipped = 0usize;
    for tx in &terms[0] {
        let dx2 = tx.offset * tx.offset;
        if dx2 > r2 {
            break;
        }
        for ty in &terms[1] {
            let dxy2 = dx2 + ty.offset * ty.offset;
            if dxy2 > r2 {
                break;
            }
            let hxy = tx.hits + ty.hits;
            if sim.max_order.is_some_and(|m| hxy > m) {
                continue;
            }
            for tz in &terms[2] {
                let d2 = dxy2 + tz.offset * tz.offset;
                if d2 > r2 {
                    break;
                }
                let order = hxy + tz.hits;
                if sim.max_order.is_some_and(|m| order > m) {
                    continue;
                }
                // energy of this image relative to the direct sound, loudest band
                if order > 0 && (order as f64 * ln_beta2 + (d0 * d0 / d2).ln()) < prune.ln() {
                    continue;
                }
                let d = d2.sqrt();
                if d < MIN_IMAGE_DISTANCE {
                    skipped += 1;
                    continue;
                }
                let delay = d / SPEED_OF_SOUND * fs;
                let i = delay.floor() as usize;
                if i >= n_samples {
                    continue;
                }
                let frac = delay - i as f64;
                let sign = if sim.polarity && order > 0 {
                    image_sign(tx.key, ty.key, tz.key)
                } else {
                    1.0
                };
                let inv_d = sign / d;
                let g = &gains[order as usize * NUM_BANDS..(order as usize + 1) * NUM_BANDS];
                let w0 = (1.0 - frac) * inv_d;
                let row = &mut interleaved[i * NUM_BANDS..(i + 1) * NUM_BANDS];
                for (o, &gb) in row.iter_mut().zip(g) {
                    *o += gb * w0;
                }
                if i + 1 < n_samples && frac > 0.0 {
                    let w1 = frac * inv_d;
                    let row = &mut interleaved[(i + 1) * NUM_BANDS..(i + 2) * NUM_BANDS];
                    for (o, &gb) in row.iter_mut().zip(g) {
                        *o += gb * w1;
                    }
                }
                image_count += 1;
                used_order = used_order.max(order);
            }
        }
    }
    if skipped > 0 {
        log::warn!("{skipped} image(s) coincide with the receiver and were skipped");
    }

    let mut signals = vec![vec![0.0; n_samples]; NUM_BANDS];
    for (i, row) in interleaved.chunks_exact(NUM_BANDS).enumerate() {
        for (b, &v) in row.iter().enumerate() {
            signals[b][i] = v;
        }
    }
    Ok(BandRirSet {
        sample_rate: fs,
        bands: THIRD_OCTAVE_CENTERS.to_vec(),
        signals,
        max_order: used_order,
        image_count,
        skipped_coincident: skipped,
    })
}
