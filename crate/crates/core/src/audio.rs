//! Mono WAV input and output.

use std::path::Path;

use crate::error::{Error, Result};

/// Writes 32-bit float mono samples.
pub fn write_wav(path: &Path, samples: &[f64], sample_rate: f64) -> Result<()> {
    if !(sample_rate > 0.0 && sample_rate.fract() == 0.0 && sample_rate <= u32::MAX as f64) {
        return Err(Error::InvalidArgument(format!("sample rate {sample_rate} is not a positive integer")));
    }
    let spec = hound::WavSpec {
        channels: 1,
        sample_rate: sample_rate as u32,
        bits_per_sample: 32,
        sample_format: hound::SampleFormat::Float,
    };
    let mut w = hound::WavWriter::create(path, spec)?;
    for &s in samples {
        w.write_sample(s as f32)?;
    }
    w.finalize()?;
    Ok(())
}

/// Reads the first channel as floats in [-1, 1] and the sample rate.
pub fn read_wav(path: &Path) -> Result<(Vec<f64>, f64)> {
    let mut r = hound::WavReader::open(path)?;
    let spec = r.spec();
    let ch = spec.channels.max(1) as usize;
    let all: Vec<f64> = match spec.sample_format {
        hound::SampleFormat::Float => r
            .samples::<f32>()
            .map(|s| s.map(f64::from))
            .collect::<std::result::Result<_, _>>()?,
        hound::SampleFormat::Int => {
            let full = (1u64 << (spec.bits_per_sample - 1)) as f64;
            r.samples::<i32>()
                .map(|s| s.map(|v| v as f64 / full))
                .collect::<std::result::Result<_, _>>()?
        }
    };
    Ok((all.into_iter().step_by(ch).collect(), spec.sample_rate as f64))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn float_roundtrip() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("x.wav");
        let x = [0.0, 0.5, -0.25, 0.875];
        write_wav(&p, &x, 16_000.0).unwrap();
        let (y, fs) = read_wav(&p).unwrap();
        assert_eq!(fs, 16_000.0);
        assert_eq!(y, x);
        assert!(write_wav(&p, &x, 16_000.5).is_err());
    }
}
