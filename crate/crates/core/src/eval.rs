//! Objective metrics for predicted decay curves.
//!
//! Predicted and target curves go through the same extraction path
//! ([`room_params`]): decay times come from the curve itself, clarity from a
//! seed-0 reconstruction, since a curve alone has no sub-frame early/late split.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::bands::HEADLINE_BAND;
use crate::dataset::Dataset;
use crate::edc::{clarity_c50, decay_params, to_db, AcousticParams, EdcMatrix};
use crate::error::{Error, Result};
use crate::nn::ModelParams;
use crate::recon::{reconstruct_rir, RssConfig};
use crate::scalar::Scalar;
use crate::stamp::RunStamp;

/// Relative reverberation-time error considered inaudible.
pub const JND_FRACTION: f64 = 0.05;
pub const STAIRCASE_STRIDE: usize = 50;
pub const STAIRCASE_RISE_DB: f64 = 0.5;
pub const EXAMPLE_ROOMS: usize = 3;

/// `1 - SS_res / SS_tot`, with `SS_tot` about the target mean.
pub fn r_squared(pred: &[f64], target: &[f64]) -> Result<f64> {
    if pred.len() != target.len() {
        return Err(Error::shape(format!("{} points", target.len()), format!("{} points", pred.len())));
    }
    if target.len() < 2 {
        return Err(Error::Domain(format!("R² needs at least 2 points, got {}", target.len())));
    }
    let mean = target.iter().sum::<f64>() / target.len() as f64;
    let ss_tot: f64 = target.iter().map(|t| (t - mean).powi(2)).sum();
    if !(ss_tot > 0.0) {
        return Err(Error::Domain("R² undefined for zero target variance".into()));
    }
    let ss_res: f64 = pred.iter().zip(target).map(|(p, t)| (p - t).powi(2)).sum();
    Ok(1.0 - ss_res / ss_tot)
}

/// Whether `pred` lies within 5% of `truth`.
pub fn jnd_pass(pred: f64, truth: f64) -> bool {
    // the tiny slack keeps 1.05 / 1.00 on the passing side despite rounding
    (pred - truth).abs() / truth <= JND_FRACTION + 1e-12
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct ParamStats {
    /// Pairs where both sides produced an estimate.
    pub n: usize,
    /// Pairs dropped because either side lacked decay range.
    pub excluded: usize,
    pub rmse: Option<f64>,
    pub mae: Option<f64>,
    /// `None` when fewer than two pairs or zero target variance.
    pub r2: Option<f64>,
}

impl ParamStats {
    pub fn from_pairs(pairs: &[(Option<f64>, Option<f64>)]) -> Self {
        let (p, t): (Vec<f64>, Vec<f64>) = pairs
            .iter()
            .filter_map(|&(p, t)| Some((p?, t?)))
            .unzip();
        let n = p.len();
        let mut s = ParamStats {
            n,
            excluded: pairs.len() - n,
            ..Default::default()
        };
        if n > 0 {
            let err = p.iter().zip(&t).map(|(a, b)| a - b);
            s.mae = Some(err.clone().map(f64::abs).sum::<f64>() / n as f64);
            s.rmse = Some((err.map(|e| e * e).sum::<f64>() / n as f64).sqrt());
            s.r2 = r_squared(&p, &t).ok();
        }
        s
    }

    fn validate(&self, what: &str) -> Result<()> {
        if let (Some(rmse), Some(mae)) = (self.rmse, self.mae) {
            // RMSE >= MAE up to rounding
            if !(mae >= 0.0 && rmse >= mae * (1.0 - 1e-12)) {
                return Err(Error::Validation(format!("{what}: RMSE {rmse} < MAE {mae}")));
            }
        }
        if let Some(r2) = self.r2 {
            if !(r2 <= 1.0) {
                return Err(Error::Validation(format!("{what}: R² {r2} > 1")));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct BandMetrics {
    pub center_hz: Option<f64>,
    pub edt: ParamStats,
    pub t20: ParamStats,
    pub t30: ParamStats,
    pub c50: ParamStats,
    /// Fraction of rooms with T30 within the JND; `None` when no room has a T30.
    pub t30_jnd: Option<f64>,
}

impl BandMetrics {
    fn from_params(center_hz: Option<f64>, pairs: &[(AcousticParams, AcousticParams)]) -> Self {
        let col = |f: fn(&AcousticParams) -> Option<f64>| -> Vec<(Option<f64>, Option<f64>)> {
            pairs.iter().map(|(p, t)| (f(p), f(t))).collect()
        };
        let t30 = col(|a| a.t30_s);
        let judged: Vec<bool> = t30
            .iter()
            .filter_map(|&(p, t)| Some(jnd_pass(p?, t?)))
            .collect();
        let t30_jnd = (!judged.is_empty())
            .then(|| judged.iter().filter(|&&b| b).count() as f64 / judged.len() as f64);
        BandMetrics {
            center_hz,
            edt: ParamStats::from_pairs(&col(|a| a.edt_s)),
            t20: ParamStats::from_pairs(&col(|a| a.t20_s)),
            t30: ParamStats::from_pairs(&t30),
            c50: ParamStats::from_pairs(&col(|a| a.c50_db)),
            t30_jnd,
        }
    }

    fn validate(&self) -> Result<()> {
        self.edt.validate("EDT")?;
        self.t20.validate("T20")?;
        self.t30.validate("T30")?;
        self.c50.validate("C50")?;
        if let Some(j) = self.t30_jnd {
            if !(0.0..=1.0).contains(&j) {
                return Err(Error::Validation(format!("JND fraction {j} outside [0, 1]")));
            }
        }
        Ok(())
    }
}

/// Curve error over time in dB, averaged over rooms and bands.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct EdcError {
    pub time_s: Vec<f64>,
    pub mae_db: Vec<f64>,
    pub rmse_db: Vec<f64>,
}

/// (predicted, target) pairs at the headline band.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct Scatter {
    pub edt: Vec<[f64; 2]>,
    pub t20: Vec<[f64; 2]>,
    pub t30: Vec<[f64; 2]>,
    pub c50: Vec<[f64; 2]>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EdcExample {
    pub room: usize,
    pub band: usize,
    pub pred_db: Vec<f64>,
    pub target_db: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub rooms: usize,
    pub bands: Vec<f64>,
    pub headline_band: usize,
    pub frame_dt: f64,
    pub epsilon: f64,
    pub headline: BandMetrics,
    /// All bands pooled.
    pub aggregate: BandMetrics,
    pub per_band: Vec<BandMetrics>,
    /// C50 of the full reconstructed waveform.
    pub broadband_c50: ParamStats,
    pub c50_clamped: usize,
    pub edc_error: EdcError,
    pub scatter: Scatter,
    /// Fraction of predicted rows rising more than 0.5 dB over some stride-50 window.
    pub staircase_fraction: f64,
    pub target_staircase_fraction: f64,
    pub examples: Vec<EdcExample>,
    pub stamp: Option<RunStamp>,
}

impl EvalReport {
    pub fn validate(&self) -> Result<()> {
        self.headline.validate()?;
        self.aggregate.validate()?;
        self.broadband_c50.validate("broadband C50")?;
        for b in &self.per_band {
            b.validate()?;
        }
        if self.per_band.len() != self.bands.len() {
            return Err(Error::Validation("per-band table does not match band list".into()));
        }
        for f in [self.staircase_fraction, self.target_staircase_fraction] {
            if !(0.0..=1.0).contains(&f) {
                return Err(Error::Validation(format!("staircase fraction {f} outside [0, 1]")));
            }
        }
        Ok(())
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let r: EvalReport = serde_json::from_str(s)?;
        r.validate()?;
        Ok(r)
    }
}

/// Parameters of every band plus broadband clarity for one curve matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct RoomParams {
    pub bands: Vec<AcousticParams>,
    pub broadband_c50: Option<f64>,
    pub c50_clamped: usize,
}

fn clarity(signal: &[f64], fs: f64) -> Result<(Option<f64>, bool)> {
    match clarity_c50(signal, fs) {
        Ok(c) => Ok((Some(c.db), c.clamped)),
        Err(Error::Domain(_)) | Err(Error::InvalidArgument(_)) => Ok((None, false)),
        Err(e) => Err(e),
    }
}

/// The single extraction path shared by predictions and targets.
pub fn room_params<T: Scalar>(edc: &EdcMatrix<T>, fs: f64, epsilon: f64) -> Result<RoomParams> {
    let edc = edc.cast::<f64>();
    let rec = reconstruct_rir(&edc, fs, &RssConfig::default())?;
    let mut clamped = 0;
    let mut bands = Vec::with_capacity(edc.bands);
    for (row, sig) in edc.rows().zip(&rec.bands) {
        let mut p = decay_params(row, edc.frame_dt, epsilon)?;
        let (c, cl) = clarity(sig, fs)?;
        p.c50_db = c;
        p.c50_clamped = cl;
        clamped += cl as usize;
        bands.push(p);
    }
    let (broadband_c50, cl) = clarity(&rec.waveform, fs)?;
    Ok(RoomParams {
        bands,
        broadband_c50,
        c50_clamped: clamped + cl as usize,
    })
}

/// Whether a curve rises by more than `rise_db` across any `stride`-sample window.
pub fn has_staircase(db: &[f64], stride: usize, rise_db: f64) -> bool {
    db.len() > stride && (0..db.len() - stride).any(|n| db[n + stride] - db[n] > rise_db)
}

fn staircase_fraction(curves: &[EdcMatrix<f64>], epsilon: f64) -> Result<f64> {
    let mut hits = 0usize;
    let mut rows = 0usize;
    for m in curves {
        for row in m.rows() {
            rows += 1;
            hits += has_staircase(&to_db(row, epsilon)?, STAIRCASE_STRIDE, STAIRCASE_RISE_DB) as usize;
        }
    }
    Ok(if rows == 0 { 0.0 } else { hits as f64 / rows as f64 })
}

/// Scores `preds` against `targets`, room by room. `room_ids` labels the
/// example curves and defaults to positions.
pub fn evaluate_curves<T: Scalar>(
    preds: &[EdcMatrix<T>],
    targets: &[EdcMatrix<T>],
    band_centers: &[f64],
    fs: f64,
    epsilon: f64,
    room_ids: Option<&[usize]>,
) -> Result<EvalReport> {
    if preds.is_empty() {
        return Err(Error::InvalidArgument("nothing to evaluate".into()));
    }
    if preds.len() != targets.len() {
        return Err(Error::shape(format!("{} rooms", targets.len()), format!("{} rooms", preds.len())));
    }
    let (bands, len, frame_dt) = (targets[0].bands, targets[0].len, targets[0].frame_dt);
    for m in preds.iter().chain(targets) {
        if (m.bands, m.len) != (bands, len) || m.frame_dt != frame_dt {
            return Err(Error::shape(
                format!("({bands}, {len}) at {frame_dt} s"),
                format!("({}, {}) at {} s", m.bands, m.len, m.frame_dt),
            ));
        }
    }
    if band_centers.len() != bands {
        return Err(Error::shape(format!("{bands} band centres"), format!("{}", band_centers.len())));
    }
    let preds: Vec<EdcMatrix<f64>> = preds.iter().map(|m| m.cast()).collect();
    let targets: Vec<EdcMatrix<f64>> = targets.iter().map(|m| m.cast()).collect();

    let params: Vec<(RoomParams, RoomParams)> = preds
        .par_iter()
        .zip(&targets)
        .map(|(p, t)| Ok((room_params(p, fs, epsilon)?, room_params(t, fs, epsilon)?)))
        .collect::<Result<_>>()?;

    let per_band: Vec<BandMetrics> = (0..bands)
        .map(|b| {
            let pairs: Vec<_> = params.iter().map(|(p, t)| (p.bands[b], t.bands[b])).collect();
            BandMetrics::from_params(Some(band_centers[b]), &pairs)
        })
        .collect();
    let pooled: Vec<_> = params
        .iter()
        .flat_map(|(p, t)| p.bands.iter().copied().zip(t.bands.iter().copied()))
        .collect();
    let headline_band = HEADLINE_BAND.min(bands - 1);
    let broadband: Vec<_> = params.iter().map(|(p, t)| (p.broadband_c50, t.broadband_c50)).collect();

    let pair = |f: fn(&AcousticParams) -> Option<f64>| -> Vec<[f64; 2]> {
        params
            .iter()
            .filter_map(|(p, t)| Some([f(&p.bands[headline_band])?, f(&t.bands[headline_band])?]))
            .collect()
    };
    let scatter = Scatter {
        edt: pair(|a| a.edt_s),
        t20: pair(|a| a.t20_s),
        t30: pair(|a| a.t30_s),
        c50: pair(|a| a.c50_db),
    };

    let mut sum_abs = vec![0.0; len];
    let mut sum_sq = vec![0.0; len];
    for (p, t) in preds.iter().zip(&targets) {
        for (pr, tr) in p.rows().zip(t.rows()) {
            let (pd, td) = (to_db(pr, epsilon)?, to_db(tr, epsilon)?);
            for i in 0..len {
                let e = pd[i] - td[i];
                sum_abs[i] += e.abs();
                sum_sq[i] += e * e;
            }
        }
    }
    let rows = (preds.len() * bands) as f64;
    let edc_error = EdcError {
        time_s: (0..len).map(|i| i as f64 * frame_dt).collect(),
        mae_db: sum_abs.iter().map(|s| s / rows).collect(),
        rmse_db: sum_sq.iter().map(|s| (s / rows).sqrt()).collect(),
    };

    let examples = (0..preds.len().min(EXAMPLE_ROOMS))
        .map(|i| {
            Ok(EdcExample {
                room: room_ids.map_or(i, |ids| ids[i]),
                band: headline_band,
                pred_db: to_db(preds[i].row(headline_band), epsilon)?,
                target_db: to_db(targets[i].row(headline_band), epsilon)?,
            })
        })
        .collect::<Result<_>>()?;

    let report = EvalReport {
        rooms: preds.len(),
        bands: band_centers.to_vec(),
        headline_band,
        frame_dt,
        epsilon,
        headline: per_band[headline_band].clone(),
        aggregate: BandMetrics::from_params(None, &pooled),
        per_band,
        broadband_c50: ParamStats::from_pairs(&broadband),
        c50_clamped: params.iter().map(|(p, t)| p.c50_clamped + t.c50_clamped).sum(),
        edc_error,
        scatter,
        staircase_fraction: staircase_fraction(&preds, epsilon)?,
        target_staircase_fraction: staircase_fraction(&targets, epsilon)?,
        examples,
        stamp: None,
    };
    report.validate()?;
    Ok(report)
}

/// Predicted curves for the given rooms of a dataset.
pub fn predict_rooms<T: Scalar>(model: &ModelParams<T>, ds: &Dataset, rooms: &[usize]) -> Result<Vec<EdcMatrix<T>>> {
    let (bands, len) = (ds.bands(), ds.manifest.edc_len);
    if (model.config.bands, model.config.out_len) != (bands, len) {
        return Err(Error::shape(
            format!("model output ({bands}, {len})"),
            format!("({}, {})", model.config.bands, model.config.out_len),
        ));
    }
    rooms
        .par_iter()
        .map(|&i| {
            let y = model.predict(&ds.scaled_features::<T>(i))?;
            EdcMatrix::new(bands, len, ds.manifest.frame_dt, y)
        })
        .collect()
}

/// Scores a model on the dataset's test split.
pub fn evaluate<T: Scalar>(model: &ModelParams<T>, ds: &Dataset, epsilon: f64) -> Result<EvalReport> {
    let rooms = &ds.manifest.test;
    let preds = predict_rooms(model, ds, rooms)?;
    let targets: Vec<EdcMatrix<T>> = rooms.iter().map(|&i| ds.edc(i).cast()).collect();
    evaluate_curves(&preds, &targets, &ds.manifest.bands, ds.manifest.sample_rate, epsilon, Some(rooms))
}

/// Targets scored against themselves; every error is exactly zero.
pub fn self_check(ds: &Dataset, epsilon: f64) -> Result<EvalReport> {
    let rooms = &ds.manifest.test;
    let targets: Vec<EdcMatrix<f32>> = rooms.iter().map(|&i| ds.edc(i)).collect();
    evaluate_curves(&targets, &targets, &ds.manifest.bands, ds.manifest.sample_rate, epsilon, Some(rooms))
}

fn fmt_opt(v: Option<f64>, digits: usize) -> String {
    v.map_or_else(|| "n/a".to_string(), |x| format!("{x:.digits$}"))
}

/// Summary table: one row per parameter with RMSE, MAE and R².
pub fn render_markdown(r: &EvalReport) -> String {
    let mut s = String::new();
    let hz = r.bands.get(r.headline_band).copied().unwrap_or(f64::NAN);
    let _ = writeln!(s, "# Evaluation ({} rooms, headline band {hz} Hz)\n", r.rooms);
    let _ = writeln!(s, "| Parameter | RMSE | MAE | R² | n | excluded |");
    let _ = writeln!(s, "|---|---|---|---|---|---|");
    let rows = [
        ("EDT (s)", &r.headline.edt),
        ("T20 (s)", &r.headline.t20),
        ("T30 (s)", &r.headline.t30),
        ("C50 (dB)", &r.headline.c50),
        ("C50 broadband (dB)", &r.broadband_c50),
    ];
    for (name, p) in rows {
        let _ = writeln!(
            s,
            "| {name} | {} | {} | {} | {} | {} |",
            fmt_opt(p.rmse, 3),
            fmt_opt(p.mae, 3),
            fmt_opt(p.r2, 3),
            p.n,
            p.excluded
        );
    }
    let pct = |v: Option<f64>| v.map_or_else(|| "n/a".into(), |x| format!("{:.1}%", 100.0 * x));
    let _ = writeln!(s, "\nT30 within 5% JND: {} (all bands: {})", pct(r.headline.t30_jnd), pct(r.aggregate.t30_jnd));
    let _ = writeln!(
        s,
        "Staircase rows: {:.1}% predicted, {:.1}% target",
        100.0 * r.staircase_fraction,
        100.0 * r.target_staircase_fraction
    );
    let mean = |v: &[f64]| if v.is_empty() { f64::NAN } else { v.iter().sum::<f64>() / v.len() as f64 };
    let _ = writeln!(
        s,
        "EDC error over time: MAE {:.3} dB, RMSE {:.3} dB",
        mean(&r.edc_error.mae_db),
        mean(&r.edc_error.rmse_db)
    );
    let _ = writeln!(s, "\n## Per band\n");
    let _ = writeln!(s, "| Band (Hz) | EDT RMSE | T20 RMSE | T30 RMSE | T30 R² | C50 RMSE | T30 JND |");
    let _ = writeln!(s, "|---|---|---|---|---|---|---|");
    for b in &r.per_band {
        let _ = writeln!(
            s,
            "| {} | {} | {} | {} | {} | {} | {} |",
            fmt_opt(b.center_hz, 0),
            fmt_opt(b.edt.rmse, 3),
            fmt_opt(b.t20.rmse, 3),
            fmt_opt(b.t30.rmse, 3),
            fmt_opt(b.t30.r2, 3),
            fmt_opt(b.c50.rmse, 3),
            pct(b.t30_jnd)
        );
    }
    s
}

/// Writes `edc_error.csv`, `t30_scatter.csv`, `edt_scatter.csv` and `edc_examples.csv`.
pub fn write_plot_data(r: &EvalReport, dir: &Path) -> Result<()> {
    fs::create_dir_all(dir)?;
    let mut s = String::from("time_s,mae_db,rmse_db\n");
    for i in 0..r.edc_error.time_s.len() {
        let _ = writeln!(s, "{},{},{}", r.edc_error.time_s[i], r.edc_error.mae_db[i], r.edc_error.rmse_db[i]);
    }
    fs::write(dir.join("edc_error.csv"), s)?;
    for (name, pairs) in [("t30_scatter.csv", &r.scatter.t30), ("edt_scatter.csv", &r.scatter.edt)] {
        let mut s = String::from("predicted_s,target_s\n");
        for [p, t] in pairs {
            let _ = writeln!(s, "{p},{t}");
        }
        fs::write(dir.join(name), s)?;
    }
    let mut s = String::from("room,band,time_s,pred_db,target_db\n");
    for e in &r.examples {
        for (i, (p, t)) in e.pred_db.iter().zip(&e.target_db).enumerate() {
            let _ = writeln!(s, "{},{},{},{p},{t}", e.room, e.band, i as f64 * r.frame_dt);
        }
    }
    fs::write(dir.join("edc_examples.csv"), s)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bands::THIRD_OCTAVE_CENTERS;

    const FS: f64 = 16_000.0;
    const LEN: usize = 400;
    const DT: f64 = 0.005;

    fn exp_curve(t60: f64) -> Vec<f64> {
        (0..LEN).map(|i| 10f64.powf(-6.0 * i as f64 * DT / t60)).collect()
    }

    fn room(t60s: &[f64]) -> EdcMatrix<f64> {
        let curves = t60s.iter().flat_map(|&t| exp_curve(t)).collect();
        EdcMatrix::new(t60s.len(), LEN, DT, curves).unwrap()
    }

    #[test]
    fn r_squared_definition() {
        let t = [1.0, 2.0, 3.0, 4.0];
        assert_eq!(r_squared(&t, &t).unwrap(), 1.0);
        assert_eq!(r_squared(&[2.5; 4], &t).unwrap(), 0.0);
        assert!(r_squared(&[4.0, 3.0, 2.0, 1.0], &t).unwrap() < 0.0);
        assert!(matches!(r_squared(&[1.0, 2.0], &[3.0, 3.0]), Err(Error::Domain(_))));
        assert!(r_squared(&[1.0], &[1.0]).is_err());
    }

    #[test]
    fn jnd_boundary() {
        assert!(jnd_pass(1.0, 1.0));
        assert!(jnd_pass(1.049, 1.0));
        assert!(!jnd_pass(1.051, 1.0));
        assert!(!jnd_pass(0.5, 1.0));
    }

    #[test]
    fn stats_respect_invariants() {
        let s = ParamStats::from_pairs(&[(Some(1.0), Some(1.5)), (Some(2.0), None), (Some(3.0), Some(2.0))]);
        assert_eq!((s.n, s.excluded), (2, 1));
        assert!((s.mae.unwrap() - 0.75).abs() < 1e-15);
        assert!(s.rmse.unwrap() >= s.mae.unwrap());
    }

    #[test]
    fn self_comparison_is_exact() {
        let centers = &THIRD_OCTAVE_CENTERS[..2];
        let rooms: Vec<_> = [0.4, 0.7, 1.1].iter().map(|&t| room(&[t, t * 0.8])).collect();
        let r = evaluate_curves(&rooms, &rooms, centers, FS, 1e-10, None).unwrap();
        for b in r.per_band.iter().chain([&r.aggregate]) {
            for p in [&b.edt, &b.t20, &b.t30, &b.c50] {
                assert_eq!(p.rmse, Some(0.0));
                assert_eq!(p.mae, Some(0.0));
                assert_eq!(p.r2, Some(1.0));
            }
            assert_eq!(b.t30_jnd, Some(1.0));
        }
        assert!(r.edc_error.mae_db.iter().all(|&v| v == 0.0));
        assert_eq!(r.staircase_fraction, 0.0);
    }

    #[test]
    fn ten_percent_longer_t30_fails_jnd() {
        let centers = &THIRD_OCTAVE_CENTERS[..1];
        let t60s = [0.4, 0.7, 1.1];
        let targets: Vec<_> = t60s.iter().map(|&t| room(&[t])).collect();
        let preds: Vec<_> = t60s.iter().map(|&t| room(&[1.1 * t])).collect();
        let r = evaluate_curves(&preds, &targets, centers, FS, 1e-10, None).unwrap();
        assert_eq!(r.per_band[0].t30_jnd, Some(0.0));
        let mean_t30 = t60s.iter().sum::<f64>() / 3.0;
        assert!((r.per_band[0].t30.mae.unwrap() - 0.1 * mean_t30).abs() < 1e-6 * mean_t30);
    }

    #[test]
    fn staircase_detection() {
        let mut db = vec![0.0; 200];
        for (i, v) in db.iter_mut().enumerate() {
            *v = -0.1 * i as f64;
        }
        assert!(!has_staircase(&db, 50, 0.5));
        db[120] = 0.0;
        assert!(has_staircase(&db, 50, 0.5));
    }

    #[test]
    fn report_json_roundtrip_and_plots() {
        let centers = &THIRD_OCTAVE_CENTERS[..1];
        let rooms: Vec<_> = [0.5, 0.9].iter().map(|&t| room(&[t])).collect();
        let r = evaluate_curves(&rooms, &rooms, centers, FS, 1e-10, None).unwrap();
        let back = EvalReport::from_json(&r.to_json().unwrap()).unwrap();
        assert_eq!(back, r);
        let mut bad = serde_json::to_value(&r).unwrap();
        bad["headline"]["t30_jnd"] = 1.5.into();
        assert!(EvalReport::from_json(&bad.to_string()).is_err());
        assert!(serde_json::from_str::<EvalReport>("{\"rooms\": 1}").is_err());

        let dir = tempfile::tempdir().unwrap();
        write_plot_data(&r, dir.path()).unwrap();
        for f in ["edc_error.csv", "t30_scatter.csv", "edt_scatter.csv", "edc_examples.csv"] {
            assert!(dir.path().join(f).exists());
        }
        assert!(render_markdown(&r).contains("| T30 (s) | 0.000 | 0.000 | 1.000 |"));
    }
}
