//! Dataset generation and on-disk layout.
//!
//! A dataset directory holds `manifest.json`, `features.bin` with shape
//! `(count, 16, 1)` of unscaled features, `edcs.bin` with shape
//! `(count, bands, L)` of normalized decay curves, and `rooms.json` with the
//! sampled room configurations.

use std::collections::BTreeSet;
use std::fs;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::acoustics::{simulate_band_rirs, worst_case_length, SimConfig};
use crate::bands::{NUM_BANDS, THIRD_OCTAVE_CENTERS};
use crate::binfmt::ArrayFile;
use crate::edc::{rirs_to_targets, EdcMatrix, DEFAULT_EDC_LEN};
use crate::error::{Error, Result};
use crate::roomgen::{featurize, sample_room_with, FeatureVector, MinMaxScaler, RoomConfig, RoomRanges, NUM_FEATURES};
use crate::scalar::{mix_seed, Scalar};
use crate::stamp::RunStamp;
use crate::train::{Sample, TrainSet};

pub const DATASET_FORMAT_VERSION: u32 = 1;
pub const MANIFEST_FILE: &str = "manifest.json";
pub const FEATURES_FILE: &str = "features.bin";
pub const EDCS_FILE: &str = "edcs.bin";
pub const ROOMS_FILE: &str = "rooms.json";

const SPLIT_STREAM: u64 = 0x5B11_7000;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SplitRatios {
    pub val: f64,
    pub test: f64,
}

impl Default for SplitRatios {
    fn default() -> Self {
        SplitRatios { val: 0.1, test: 0.1 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GenOptions {
    pub count: usize,
    pub seed: u64,
    pub edc_len: usize,
    pub sim: SimConfig,
    pub ranges: RoomRanges,
    pub split: SplitRatios,
}

impl Default for GenOptions {
    fn default() -> Self {
        GenOptions::new(200, 0)
    }
}

impl GenOptions {
    pub fn new(count: usize, seed: u64) -> Self {
        GenOptions {
            count,
            seed,
            edc_len: DEFAULT_EDC_LEN,
            sim: SimConfig::default(),
            ranges: RoomRanges::default(),
            split: SplitRatios::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetManifest {
    pub format_version: u32,
    pub count: usize,
    pub train: Vec<usize>,
    pub val: Vec<usize>,
    pub test: Vec<usize>,
    /// Fitted on the training split only.
    pub scaler: MinMaxScaler,
    pub edc_len: usize,
    pub sample_rate: f64,
    /// Simulated impulse-response length in samples.
    pub signal_len: usize,
    /// Seconds per curve sample.
    pub frame_dt: f64,
    pub bands: Vec<f64>,
    pub global_seed: u64,
    pub options: GenOptions,
    pub stamp: RunStamp,
}

impl DatasetManifest {
    /// Splits must be disjoint and cover `0..count`.
    pub fn validate(&self) -> Result<()> {
        let mut seen = BTreeSet::new();
        for &i in self.train.iter().chain(&self.val).chain(&self.test) {
            if i >= self.count {
                return Err(Error::Validation(format!("split index {i} >= count {}", self.count)));
            }
            if !seen.insert(i) {
                return Err(Error::Validation(format!("index {i} appears in more than one split")));
            }
        }
        if seen.len() != self.count {
            return Err(Error::Validation(format!(
                "splits cover {} of {} rooms",
                seen.len(),
                self.count
            )));
        }
        if self.scaler.min.len() != NUM_FEATURES || self.scaler.max.len() != NUM_FEATURES {
            return Err(Error::Validation("scaler does not have 16 features".into()));
        }
        Ok(())
    }
}

/// Features, curves and rooms of a generated dataset.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub manifest: DatasetManifest,
    /// Unscaled features, `count * 16` row-major.
    pub features: Vec<f32>,
    /// Curves, `count * bands * L` row-major.
    pub edcs: Vec<f32>,
    pub rooms: Vec<RoomConfig>,
}

impl Dataset {
    pub fn count(&self) -> usize {
        self.manifest.count
    }

    pub fn bands(&self) -> usize {
        self.manifest.bands.len()
    }

    pub fn raw_features(&self, i: usize) -> FeatureVector {
        let mut v = [0.0; NUM_FEATURES];
        for (o, &x) in v.iter_mut().zip(&self.features[i * NUM_FEATURES..(i + 1) * NUM_FEATURES]) {
            *o = x as f64;
        }
        FeatureVector(v)
    }

    /// Scaled features; rooms outside the training split are clamped.
    pub fn scaled_features<T: Scalar>(&self, i: usize) -> Vec<T> {
        let raw = self.raw_features(i);
        let s = &self.manifest.scaler;
        let v = if self.manifest.train.binary_search(&i).is_ok() {
            s.scale(&raw)
        } else {
            s.scale_clamped(&raw).0
        };
        v.0.iter().map(|&x| T::lit(x)).collect()
    }

    pub fn edc_slice(&self, i: usize) -> &[f32] {
        let n = self.bands() * self.manifest.edc_len;
        &self.edcs[i * n..(i + 1) * n]
    }

    pub fn edc(&self, i: usize) -> EdcMatrix<f32> {
        EdcMatrix {
            bands: self.bands(),
            len: self.manifest.edc_len,
            frame_dt: self.manifest.frame_dt,
            curves: self.edc_slice(i).to_vec(),
        }
    }

    pub fn sample<T: Scalar>(&self, i: usize) -> Sample<T> {
        Sample {
            features: self.scaled_features(i),
            target: self.edc_slice(i).iter().map(|&v| T::lit(v as f64)).collect(),
        }
    }

    pub fn train_set<T: Scalar>(&self) -> TrainSet<T> {
        TrainSet {
            train: self.manifest.train.iter().map(|&i| self.sample(i)).collect(),
            val: self.manifest.val.iter().map(|&i| self.sample(i)).collect(),
        }
    }
}

fn split_indices(count: usize, seed: u64, ratios: &SplitRatios) -> Result<(Vec<usize>, Vec<usize>, Vec<usize>)> {
    let mut idx: Vec<usize> = (0..count).collect();
    idx.shuffle(&mut ChaCha8Rng::seed_from_u64(mix_seed(seed, SPLIT_STREAM)));
    let size = |r: f64| {
        let n = (r * count as f64).round() as usize;
        if r > 0.0 { n.max(1) } else { 0 }
    };
    let (n_val, n_test) = (size(ratios.val), size(ratios.test));
    if n_val + n_test + 2 > count {
        return Err(Error::InvalidArgument(format!(
            "{count} rooms leave fewer than 2 training rooms after {n_val} val / {n_test} test"
        )));
    }
    let mut val = idx[..n_val].to_vec();
    let mut test = idx[n_val..n_val + n_test].to_vec();
    let mut train = idx[n_val + n_test..].to_vec();
    val.sort_unstable();
    test.sort_unstable();
    train.sort_unstable();
    Ok((train, val, test))
}

/// Generates `opts.count` rooms. Every room is a pure function of
/// `(opts.seed, index)`; all rooms share one signal length, so curve frames
/// line up across the dataset.
pub fn generate_dataset(opts: &GenOptions) -> Result<Dataset> {
    let fs = opts.sim.sample_rate;
    let signal_len = match opts.sim.length {
        Some(n) => n,
        None => worst_case_length(&opts.ranges, fs, opts.edc_len)?,
    };
    let sim = SimConfig {
        length: Some(signal_len),
        ..opts.sim.clone()
    };
    let (train, val, test) = split_indices(opts.count, opts.seed, &opts.split)?;

    let rooms: Vec<RoomConfig> = (0..opts.count)
        .into_par_iter()
        .map(|i| sample_room_with(mix_seed(opts.seed, i as u64), &opts.ranges))
        .collect::<Result<_>>()?;
    let curves: Vec<EdcMatrix<f64>> = rooms
        .par_iter()
        .map(|r| rirs_to_targets(&simulate_band_rirs(r, &sim)?, opts.edc_len))
        .collect::<Result<_>>()?;

    let features: Vec<f32> = rooms
        .iter()
        .flat_map(|r| featurize(r).0.map(|v| v as f32))
        .collect();
    let mut edcs = Vec::with_capacity(opts.count * NUM_BANDS * opts.edc_len);
    for c in &curves {
        edcs.extend(c.curves.iter().map(|&v| v as f32));
    }
    let mut ds = Dataset {
        manifest: DatasetManifest {
            format_version: DATASET_FORMAT_VERSION,
            count: opts.count,
            train: train.clone(),
            val,
            test,
            scaler: MinMaxScaler { min: vec![], max: vec![] },
            edc_len: opts.edc_len,
            sample_rate: fs,
            signal_len,
            frame_dt: signal_len as f64 / (fs * opts.edc_len as f64),
            bands: THIRD_OCTAVE_CENTERS.to_vec(),
            global_seed: opts.seed,
            options: opts.clone(),
            stamp: RunStamp::new(opts, opts.seed),
        },
        features,
        edcs,
        rooms,
    };
    let train_feats: Vec<FeatureVector> = train.iter().map(|&i| ds.raw_features(i)).collect();
    ds.manifest.scaler = MinMaxScaler::fit(&train_feats)?;
    Ok(ds)
}

pub fn write_dataset(ds: &Dataset, dir: &Path) -> Result<()> {
    ds.manifest.validate()?;
    let m = &ds.manifest;
    let per_room = m.bands.len() * m.edc_len;
    if ds.features.len() != m.count * NUM_FEATURES || ds.edcs.len() != m.count * per_room {
        return Err(Error::shape(
            format!("{} rooms x ({NUM_FEATURES} features, {} curve values)", m.count, per_room),
            format!("{} features, {} curve values", ds.features.len(), ds.edcs.len()),
        ));
    }
    fs::create_dir_all(dir)?;
    fs::write(dir.join(MANIFEST_FILE), serde_json::to_vec_pretty(m)?)?;
    ArrayFile::new([m.count as u64, NUM_FEATURES as u64, 1], ds.features.clone())?
        .write(&dir.join(FEATURES_FILE))?;
    ArrayFile::new(
        [m.count as u64, m.bands.len() as u64, m.edc_len as u64],
        ds.edcs.clone(),
    )?
    .write(&dir.join(EDCS_FILE))?;
    fs::write(dir.join(ROOMS_FILE), serde_json::to_vec_pretty(&ds.rooms)?)?;
    Ok(())
}

pub fn read_dataset(dir: &Path) -> Result<Dataset> {
    let mpath = dir.join(MANIFEST_FILE);
    let raw: serde_json::Value = serde_json::from_slice(&fs::read(&mpath)?)
        .map_err(|e| Error::format(&mpath, e.to_string()))?;
    let version = raw.get("format_version").and_then(|v| v.as_u64());
    if version != Some(DATASET_FORMAT_VERSION as u64) {
        return Err(Error::VersionMismatch {
            path: mpath,
            found: format!("{version:?}"),
            expected: DATASET_FORMAT_VERSION.to_string(),
        });
    }
    let manifest: DatasetManifest =
        serde_json::from_value(raw).map_err(|e| Error::format(&mpath, e.to_string()))?;
    manifest.validate()?;

    let f = ArrayFile::read(&dir.join(FEATURES_FILE))?;
    let want_f = [manifest.count as u64, NUM_FEATURES as u64, 1];
    if f.dims != want_f {
        return Err(Error::shape(format!("{want_f:?}"), format!("{:?}", f.dims)));
    }
    let e = ArrayFile::read(&dir.join(EDCS_FILE))?;
    let want_e = [manifest.count as u64, manifest.bands.len() as u64, manifest.edc_len as u64];
    if e.dims != want_e {
        return Err(Error::shape(format!("{want_e:?}"), format!("{:?}", e.dims)));
    }
    let rpath = dir.join(ROOMS_FILE);
    let rooms: Vec<RoomConfig> = if rpath.exists() {
        serde_json::from_slice(&fs::read(&rpath)?)?
    } else {
        Vec::new()
    };
    Ok(Dataset {
        manifest,
        features: f.data,
        edcs: e.data,
        rooms,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small() -> GenOptions {
        GenOptions {
            edc_len: 100,
            sim: SimConfig {
                length: Some(4000),
                ..SimConfig::default()
            },
            ..GenOptions::new(10, 7)
        }
    }

    #[test]
    fn splits_are_disjoint_and_cover() {
        let (tr, va, te) = split_indices(100, 3, &SplitRatios::default()).unwrap();
        assert_eq!((tr.len(), va.len(), te.len()), (80, 10, 10));
        let mut all: Vec<_> = tr.into_iter().chain(va).chain(te).collect();
        all.sort_unstable();
        assert_eq!(all, (0..100).collect::<Vec<_>>());
        let (tr, va, te) = split_indices(8, 3, &SplitRatios::default()).unwrap();
        assert_eq!((tr.len(), va.len(), te.len()), (6, 1, 1));
        assert!(split_indices(3, 3, &SplitRatios::default()).is_err());
    }

    #[test]
    fn generation_is_deterministic_and_valid() {
        let a = generate_dataset(&small()).unwrap();
        let b = generate_dataset(&small()).unwrap();
        assert_eq!(a.features, b.features);
        assert_eq!(a.edcs, b.edcs);
        assert_eq!(a.manifest.train, b.manifest.train);
        for i in 0..a.count() {
            a.edc(i).validate(1e-12).unwrap();
        }
        assert!((a.manifest.frame_dt - 4000.0 / 16000.0 / 100.0).abs() < 1e-15);
    }

    #[test]
    fn roundtrip_and_errors() {
        let dir = tempfile::tempdir().unwrap();
        let mut ds = generate_dataset(&GenOptions { count: 4, ..small() }).unwrap();
        ds.manifest.stamp.created_unix = 0;
        write_dataset(&ds, dir.path()).unwrap();
        let back = read_dataset(dir.path()).unwrap();
        assert_eq!(back, ds);

        // corrupt magic
        let fpath = dir.path().join(FEATURES_FILE);
        let mut bytes = fs::read(&fpath).unwrap();
        bytes[1] = b'?';
        fs::write(&fpath, &bytes).unwrap();
        assert!(matches!(read_dataset(dir.path()), Err(Error::Format { .. })));
        write_dataset(&ds, dir.path()).unwrap();

        // truncated curves
        let epath = dir.path().join(EDCS_FILE);
        let bytes = fs::read(&epath).unwrap();
        fs::write(&epath, &bytes[..bytes.len() - 10]).unwrap();
        assert!(matches!(read_dataset(dir.path()), Err(Error::Truncated { .. })));
        write_dataset(&ds, dir.path()).unwrap();

        // overlapping splits
        let mut bad = ds.manifest.clone();
        bad.val.push(bad.train[0]);
        fs::write(dir.path().join(MANIFEST_FILE), serde_json::to_vec(&bad).unwrap()).unwrap();
        assert!(matches!(read_dataset(dir.path()), Err(Error::Validation(_))));

        // version
        let mut v = serde_json::to_value(&ds.manifest).unwrap();
        v["format_version"] = 2.into();
        fs::write(dir.path().join(MANIFEST_FILE), serde_json::to_vec(&v).unwrap()).unwrap();
        assert!(matches!(read_dataset(dir.path()), Err(Error::VersionMismatch { .. })));

        // shape mismatch between manifest and arrays
        let mut m = ds.manifest.clone();
        m.edc_len = 50;
        fs::write(dir.path().join(MANIFEST_FILE), serde_json::to_vec(&m).unwrap()).unwrap();
        assert!(matches!(read_dataset(dir.path()), Err(Error::ShapeMismatch { .. })));
    }

    #[test]
    fn scaled_training_features_lie_in_unit_interval() {
        let ds = generate_dataset(&small()).unwrap();
        for &i in &ds.manifest.train {
            assert!(ds.scaled_features::<f64>(i).iter().all(|&v| (0.0..=1.0).contains(&v)));
        }
        for &i in ds.manifest.val.iter().chain(&ds.manifest.test) {
            assert!(ds.scaled_features::<f64>(i).iter().all(|&v| (-0.5..=1.5).contains(&v)));
        }
    }
}
