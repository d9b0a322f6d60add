//! Fourier compression of climate series.
//!
//! Coefficients are one-sided (`0..=T/2`) with `1/T` normalization, so the DC bin
//! is the series mean and a unit-amplitude sinusoid has amplitude 1.

mod dft;
mod distance;
mod features;
mod selection;

pub use dft::{amplitude, bin_weight, dft_coefficients, n_bins, reconstruct, Dft};
pub use distance::{climate_distance, distance_vector, DistanceMode, DISTANCE_CHANNELS};
pub use features::{FeatureSpace, NormalizationTable, FEATURE_SPACE_FORMAT, FEATURE_SPACE_VERSION, STD_FLOOR};
pub use rustfft::num_complex::Complex64;
pub use selection::{select_frequencies, FrequencyScorer, FrequencySelection, RankingRule};

/// Input sizes (bins per variable) swept by the training grid.
pub fn power_of_two_sizes(min: usize, max: usize) -> Vec<usize> {
    std::iter::successors(Some(min.max(1)), |k| Some(k * 2))
        .take_while(|k| *k <= max)
        .collect()
}
