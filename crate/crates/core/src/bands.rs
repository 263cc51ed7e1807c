//! Third-octave analysis bands.

/// Number of third-octave bands between 100 Hz and 20 kHz.
pub const NUM_BANDS: usize = 24;

/// Nominal third-octave centre frequencies in Hz, 100 Hz to 20 kHz.
pub const THIRD_OCTAVE_CENTERS: [f64; NUM_BANDS] = [
    100.0, 125.0, 160.0, 200.0, 250.0, 315.0, 400.0, 500.0, 630.0, 800.0, 1000.0, 1250.0, 1600.0,
    2000.0, 2500.0, 3150.0, 4000.0, 5000.0, 6300.0, 8000.0, 10000.0, 12500.0, 16000.0, 20000.0,
];

/// Index of the 1 kHz band, used for headline figures.
pub const HEADLINE_BAND: usize = 10;

/// Index of the band whose nominal centre is closest to `hz`.
pub fn band_index(hz: f64) -> usize {
    THIRD_OCTAVE_CENTERS
        .iter()
        .enumerate()
        .min_by(|a, b| {
            (a.1.ln() - hz.ln())
                .abs()
                .total_cmp(&(b.1.ln() - hz.ln()).abs())
        })
        .map(|(i, _)| i)
        .unwrap_or(0)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn centers_are_third_octave_spaced() {
        for w in THIRD_OCTAVE_CENTERS.windows(2) {
            let ratio = w[1] / w[0];
            // nominal values deviate from 2^(1/3) by a few percent
            assert!((ratio - 2f64.powf(1.0 / 3.0)).abs() < 0.05, "{w:?}");
        }
        assert_eq!(THIRD_OCTAVE_CENTERS[HEADLINE_BAND], 1000.0);
        assert_eq!(band_index(1000.0), HEADLINE_BAND);
        assert_eq!(band_index(19000.0), 23);
    }
}
