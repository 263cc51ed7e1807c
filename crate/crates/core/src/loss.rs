//! Log-domain decay-curve loss: dB-level MSE plus a stride-`k` slope term.
//!
//! ```text
//! y_db  = 10 log10(y + eps)
//! slope = y_db[n + k] - y_db[n]
//! loss  = mean((p_db - t_db)^2) + alpha * mean((slope(p_db) - slope(t_db))^2)
//! ```
//!
//! Both means run over every band and position. The gradient with respect
//! to the linear-energy prediction is exact, including the logarithm.

use serde::{Deserialize, Serialize};

use crate::edc::DEFAULT_EPSILON;
use crate::error::{Error, Result};
use crate::scalar::Scalar;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossConfig {
    /// Weight of the slope term.
    pub alpha: f64,
    /// Finite-difference stride in curve samples.
    pub k: usize,
    /// Floor added before the logarithm. Zero is accepted only for strictly
    /// positive inputs.
    pub epsilon: f64,
}

impl Default for LossConfig {
    fn default() -> Self {
        LossConfig {
            alpha: 0.2,
            k: 50,
            epsilon: DEFAULT_EPSILON,
        }
    }
}

impl LossConfig {
    pub fn validate(&self, len: usize) -> Result<()> {
        if !(self.alpha >= 0.0) {
            return Err(Error::InvalidArgument(format!("alpha {} < 0", self.alpha)));
        }
        if self.k < 1 || self.k >= len {
            return Err(Error::InvalidArgument(format!(
                "stride k = {} must satisfy 1 <= k < L = {len}",
                self.k
            )));
        }
        if !(self.epsilon >= 0.0) {
            return Err(Error::InvalidArgument(format!("epsilon {} < 0", self.epsilon)));
        }
        Ok(())
    }
}

/// `out[n] = y_db[n + k] - y_db[n]`.
pub fn slope<T: Scalar>(y_db: &[T], k: usize) -> Result<Vec<T>> {
    if k == 0 || y_db.len() <= k {
        return Err(Error::InvalidArgument(format!(
            "slope stride {k} needs a curve longer than {k}, got {}",
            y_db.len()
        )));
    }
    Ok(y_db.windows(k + 1).map(|w| w[k] - w[0]).collect())
}

/// Loss value with its two parts.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossValue<T> {
    pub total: T,
    /// dB-domain MSE.
    pub level: T,
    /// MSE of stride-`k` slopes.
    pub slope: T,
}

fn db_of<T: Scalar>(y: &[T], eps: T, what: &str) -> Result<Vec<T>> {
    let ten = T::lit(10.0);
    y.iter()
        .map(|&v| {
            let d = ten * (v + eps).log10();
            if d.is_finite() {
                Ok(d)
            } else {
                Err(Error::NonFinite(format!("{what} in dB ({v} + {eps})")))
            }
        })
        .collect()
}

/// Loss and its gradient with respect to `pred`, both `(bands, len)` row-major.
pub fn composite_loss<T: Scalar>(
    pred: &[T],
    target: &[T],
    bands: usize,
    cfg: &LossConfig,
) -> Result<(LossValue<T>, Vec<T>)> {
    if bands == 0 || pred.len() != target.len() || pred.len() % bands != 0 {
        return Err(Error::shape(
            format!("{} values in {bands} bands", target.len()),
            format!("{} values", pred.len()),
        ));
    }
    let len = pred.len() / bands;
    cfg.validate(len)?;
    let eps = T::lit(cfg.epsilon);
    let p_db = db_of(pred, eps, "prediction")?;
    let t_db = db_of(target, eps, "target")?;
    let k = cfg.k;
    let alpha = T::lit(cfg.alpha);
    let two = T::lit(2.0);
    let n_level = T::lit((bands * len) as f64);
    let n_slope = T::lit((bands * (len - k)) as f64);

    let mut level_sum = T::zero();
    let mut slope_sum = T::zero();
    let mut grad_db = vec![T::zero(); pred.len()];
    for b in 0..bands {
        let r = b * len..(b + 1) * len;
        let (p, t, g) = (&p_db[r.clone()], &t_db[r.clone()], &mut grad_db[r]);
        for n in 0..len {
            let e = p[n] - t[n];
            level_sum += e * e;
            g[n] = two * e / n_level;
        }
        for n in 0..len - k {
            let e = (p[n + k] - p[n]) - (t[n + k] - t[n]);
            slope_sum += e * e;
            let ge = alpha * two * e / n_slope;
            g[n + k] += ge;
            g[n] -= ge;
        }
    }
    let level = level_sum / n_level;
    let slope = slope_sum / n_slope;
    // d(10 log10(y + eps))/dy = 10 / (ln 10 (y + eps))
    let c = T::lit(10.0 / std::f64::consts::LN_10);
    let grad = grad_db
        .iter()
        .zip(pred)
        .map(|(&g, &y)| g * c / (y + eps))
        .collect();
    Ok((
        LossValue {
            total: level + alpha * slope,
            level,
            slope,
        },
        grad,
    ))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn slope_examples() {
        assert!(slope(&[3.0f64; 80], 50).unwrap().iter().all(|&v| v == 0.0));
        let ramp: Vec<f64> = (0..200).map(|n| -0.1 * n as f64).collect();
        let s = slope(&ramp, 50).unwrap();
        assert_eq!(s.len(), 150);
        assert!(s.iter().all(|v| (v + 5.0).abs() < 1e-12));
        assert!(slope(&ramp[..50], 50).is_err());
    }

    #[test]
    fn perfect_prediction_is_zero() {
        let y: Vec<f64> = (0..2 * 100).map(|i| 0.99f64.powi(i % 100)).collect();
        let (l, g) = composite_loss(&y, &y, 2, &LossConfig::default()).unwrap();
        assert_eq!(l.total, 0.0);
        assert!(g.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn rejects_bad_shapes_and_values() {
        let y = vec![0.5f64; 100];
        assert!(matches!(
            composite_loss(&y, &y[..99], 1, &LossConfig::default()),
            Err(Error::ShapeMismatch { .. })
        ));
        let mut bad = y.clone();
        bad[3] = f64::NAN;
        assert!(composite_loss(&bad, &y, 1, &LossConfig::default()).is_err());
        let cfg = LossConfig { k: 100, ..LossConfig::default() };
        assert!(composite_loss(&y, &y, 1, &cfg).is_err());
    }
}
