//! Energy decay curves and the room-acoustic parameters read from them.
//!
//! Curves are backward-integrated squared signals normalized to start at
//! 1.0. Decay times come from least-squares line fits to the dB curve
//! between the first crossings of two levels.

use serde::{Deserialize, Serialize};

use crate::acoustics::BandRirSet;
use crate::error::{Error, Result};
use crate::scalar::Scalar;

pub const DEFAULT_EDC_LEN: usize = 1000;
pub const DEFAULT_EPSILON: f64 = 1e-10;
/// Clarity reported when there is no late energy.
pub const C50_CLAMP_DB: f64 = 50.0;
/// Fraction of the peak magnitude that marks direct-sound onset.
pub const ONSET_FRACTION: f64 = 0.01;

/// Level range and extrapolation factor of a decay-time estimator.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DecayRange {
    pub hi_db: f64,
    pub lo_db: f64,
    pub scale: f64,
}

pub const EDT: DecayRange = DecayRange { hi_db: 0.0, lo_db: -10.0, scale: 6.0 };
pub const T20: DecayRange = DecayRange { hi_db: -5.0, lo_db: -25.0, scale: 3.0 };
pub const T30: DecayRange = DecayRange { hi_db: -5.0, lo_db: -35.0, scale: 2.0 };

/// Normalized decay curves for every band of one room, stored row-major.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EdcMatrix<T> {
    pub bands: usize,
    pub len: usize,
    /// Seconds between consecutive curve samples.
    pub frame_dt: f64,
    pub curves: Vec<T>,
}

impl<T: Scalar> EdcMatrix<T> {
    pub fn new(bands: usize, len: usize, frame_dt: f64, curves: Vec<T>) -> Result<Self> {
        if curves.len() != bands * len {
            return Err(Error::shape(
                format!("({bands}, {len})"),
                format!("{} values", curves.len()),
            ));
        }
        Ok(EdcMatrix { bands, len, frame_dt, curves })
    }

    pub fn row(&self, band: usize) -> &[T] {
        &self.curves[band * self.len..(band + 1) * self.len]
    }

    pub fn rows(&self) -> impl Iterator<Item = &[T]> {
        self.curves.chunks_exact(self.len)
    }

    pub fn cast<U: Scalar>(&self) -> EdcMatrix<U> {
        EdcMatrix {
            bands: self.bands,
            len: self.len,
            frame_dt: self.frame_dt,
            curves: self.curves.iter().map(|v| U::lit(v.as_f64())).collect(),
        }
    }

    /// Checks row[0] == 1, values in [0, 1] and non-increasing rows within `slack`.
    pub fn validate(&self, slack: f64) -> Result<()> {
        for (b, row) in self.rows().enumerate() {
            if row[0] != T::one() {
                return Err(Error::Validation(format!("band {b}: curve starts at {}", row[0])));
            }
            if let Some(i) = first_increase(row, slack) {
                return Err(Error::Validation(format!("band {b}: curve increases at {i}")));
            }
            if row.iter().any(|&v| v < T::zero() || v > T::one()) {
                return Err(Error::Validation(format!("band {b}: value outside [0, 1]")));
            }
        }
        Ok(())
    }
}

/// Index of the first sample exceeding its predecessor by more than `slack`.
pub fn first_increase<T: Scalar>(row: &[T], slack: f64) -> Option<usize> {
    row.windows(2)
        .position(|w| (w[1] - w[0]).as_f64() > slack)
        .map(|i| i + 1)
}

/// Unnormalized backward integral `sum_{m >= n} x[m]^2`.
pub fn schroeder_raw<T: Scalar>(signal: &[T]) -> Vec<T> {
    let mut out = vec![T::zero(); signal.len()];
    let mut acc = T::zero();
    for (o, &x) in out.iter_mut().zip(signal).rev() {
        acc += x * x;
        *o = acc;
    }
    out
}

/// Backward integral normalized so the first value is exactly 1.
pub fn schroeder<T: Scalar>(signal: &[T]) -> Result<Vec<T>> {
    if signal.is_empty() {
        return Err(Error::Domain("empty signal".into()));
    }
    let mut out = schroeder_raw(signal);
    let total = out[0];
    if !(total > T::zero()) || !total.is_finite() {
        return Err(Error::Domain(format!("signal energy {total} is not positive and finite")));
    }
    for v in out.iter_mut() {
        *v = *v / total;
    }
    Ok(out)
}

/// Stride subsampling: `out[j] = edc[floor(j * len / target)]`.
pub fn downsample_edc<T: Scalar>(edc: &[T], target: usize) -> Result<Vec<T>> {
    if target < 2 {
        return Err(Error::InvalidArgument(format!("target length {target} < 2")));
    }
    let n = edc.len();
    if n < target {
        return Err(Error::InvalidArgument(format!(
            "curve of length {n} shorter than target {target}"
        )));
    }
    Ok((0..target).map(|j| edc[j * n / target]).collect())
}

/// Elementwise `10 log10(y + epsilon)`.
pub fn to_db<T: Scalar>(y: &[T], epsilon: T) -> Result<Vec<T>> {
    if !(epsilon > T::zero()) {
        return Err(Error::InvalidArgument(format!("epsilon {epsilon} must be positive")));
    }
    y.iter()
        .map(|&v| {
            if v < T::zero() {
                Err(Error::Domain(format!("negative energy {v}")))
            } else {
                Ok(T::lit(10.0) * (v + epsilon).log10())
            }
        })
        .collect()
}

/// Least-squares decay time over `range` on a dB curve sampled every `frame_dt` seconds.
///
/// Fails with [`Error::InsufficientDecayRange`] when the curve never reaches
/// `range.lo_db`, and [`Error::DegenerateFit`] when the fitted slope is not negative.
pub fn decay_time<T: Scalar>(edc_db: &[T], frame_dt: f64, range: DecayRange) -> Result<f64> {
    if !(range.hi_db > range.lo_db) {
        return Err(Error::InvalidArgument(format!("hi {} <= lo {}", range.hi_db, range.lo_db)));
    }
    let start = edc_db
        .iter()
        .position(|v| v.as_f64() <= range.hi_db)
        .ok_or(Error::InsufficientDecayRange(range.hi_db))?;
    let end = edc_db[start..]
        .iter()
        .position(|v| v.as_f64() <= range.lo_db)
        .map(|i| i + start)
        .ok_or(Error::InsufficientDecayRange(range.lo_db))?;
    if end <= start {
        return Err(Error::DegenerateFit(format!(
            "{} dB and {} dB crossed at the same sample",
            range.hi_db, range.lo_db
        )));
    }
    let pts = (end - start + 1) as f64;
    let (mut st, mut sy) = (0.0, 0.0);
    for (i, v) in edc_db[start..=end].iter().enumerate() {
        st += (start + i) as f64 * frame_dt;
        sy += v.as_f64();
    }
    let (mt, my) = (st / pts, sy / pts);
    let (mut sxy, mut sxx) = (0.0, 0.0);
    for (i, v) in edc_db[start..=end].iter().enumerate() {
        let dt = (start + i) as f64 * frame_dt - mt;
        sxy += dt * (v.as_f64() - my);
        sxx += dt * dt;
    }
    let slope = sxy / sxx;
    if !(slope < 0.0) || !slope.is_finite() {
        return Err(Error::DegenerateFit(format!("fitted slope {slope} dB/s")));
    }
    Ok(range.scale * (range.hi_db - range.lo_db) / -slope)
}

/// Clarity with a flag telling whether it was clamped for lack of late energy.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Clarity {
    pub db: f64,
    pub clamped: bool,
}

/// Early-to-late energy ratio around 50 ms after the direct-sound onset.
pub fn clarity_c50<T: Scalar>(signal: &[T], fs: f64) -> Result<Clarity> {
    let window = (0.05 * fs).round() as usize;
    if signal.len() <= window {
        return Err(Error::InvalidArgument(format!(
            "signal of {} samples not longer than 50 ms ({window} samples)",
            signal.len()
        )));
    }
    let peak = signal.iter().map(|v| v.as_f64().abs()).fold(0.0, f64::max);
    if !(peak > 0.0) {
        return Err(Error::Domain("all-zero signal".into()));
    }
    let onset = signal
        .iter()
        .position(|v| v.as_f64().abs() >= ONSET_FRACTION * peak)
        .unwrap_or(0);
    let split = (onset + window).min(signal.len());
    let energy = |s: &[T]| s.iter().map(|v| v.as_f64() * v.as_f64()).sum::<f64>();
    let early = energy(&signal[onset..split]);
    let late = energy(&signal[split..]);
    if !(late > 0.0) {
        return Ok(Clarity { db: C50_CLAMP_DB, clamped: true });
    }
    let db = 10.0 * (early / late).log10();
    if db > C50_CLAMP_DB {
        return Ok(Clarity { db: C50_CLAMP_DB, clamped: true });
    }
    Ok(Clarity { db, clamped: false })
}

/// Per-band target curves from simulated impulse responses.
pub fn rirs_to_targets(rirs: &BandRirSet, len: usize) -> Result<EdcMatrix<f64>> {
    let n = rirs.len();
    let mut curves = Vec::with_capacity(rirs.signals.len() * len);
    for s in &rirs.signals {
        curves.extend(downsample_edc(&schroeder(s)?, len)?);
    }
    EdcMatrix::new(rirs.signals.len(), len, n as f64 / (rirs.sample_rate * len as f64), curves)
}

/// Acoustic parameters of one band. `None` marks an estimate that could not be made.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct AcousticParams {
    pub edt_s: Option<f64>,
    pub t20_s: Option<f64>,
    pub t30_s: Option<f64>,
    pub c50_db: Option<f64>,
    #[serde(default)]
    pub c50_clamped: bool,
}

fn flagged(r: Result<f64>) -> Result<Option<f64>> {
    match r {
        Ok(t) => Ok(Some(t)),
        Err(Error::InsufficientDecayRange(_)) | Err(Error::DegenerateFit(_)) => Ok(None),
        Err(e) => Err(e),
    }
}

/// Decay times of a linear-energy curve; C50 is left unset.
pub fn decay_params<T: Scalar>(edc: &[T], frame_dt: f64, epsilon: f64) -> Result<AcousticParams> {
    let db = to_db(edc, T::lit(epsilon))?;
    Ok(AcousticParams {
        edt_s: flagged(decay_time(&db, frame_dt, EDT))?,
        t20_s: flagged(decay_time(&db, frame_dt, T20))?,
        t30_s: flagged(decay_time(&db, frame_dt, T30))?,
        c50_db: None,
        c50_clamped: false,
    })
}

/// All parameters of a time signal: Schroeder curve at full rate plus C50.
pub fn analyze_signal<T: Scalar>(signal: &[T], fs: f64) -> Result<AcousticParams> {
    let edc = schroeder(signal)?;
    let mut p = decay_params(&edc, 1.0 / fs, DEFAULT_EPSILON)?;
    match clarity_c50(signal, fs) {
        Ok(c) => {
            p.c50_db = Some(c.db);
            p.c50_clamped = c.clamped;
        }
        Err(Error::InvalidArgument(_)) => {}
        Err(e) => return Err(e),
    }
    Ok(p)
}
