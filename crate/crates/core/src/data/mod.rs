// SPDX-License-Identifier: MIT OR Apache-2.0

//! Time series containers, synthetic generators, CSV ingestion and splits.

mod generate;
mod io;
mod series;

pub use generate::{
    evenly_spaced_cps, gen_elliptical, gen_gaussian_mean_shift, normalize_to_sphere,
    EllipticalFamily,
};
pub use io::{csv_string, load_csv, read_csv, split, write_csv, SplitSpec};
pub use series::{sliding_windows, CpLabels, TimeSeries};
