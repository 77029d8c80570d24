// SPDX-License-Identifier: MIT OR Apache-2.0

//! Writes a labeled series to CSV, reads it back, normalizes it onto the
//! unit sphere and splits it into contiguous segments.

use sncpd::data::{
    gen_gaussian_mean_shift, load_csv, normalize_to_sphere, split, write_csv, SplitSpec, TimeSeries,
};

fn main() -> sncpd::Result<()> {
    let series = gen_gaussian_mean_shift(3, 200, &[60, 130], 2.0, 1)?;
    let path = std::env::temp_dir().join("sncpd_csv_io_example.csv");
    write_csv(&series, &path)?;
    let loaded = load_csv(&path)?;
    println!(
        "{}: {} rows, {} channels, change points {:?}",
        path.display(),
        loaded.len(),
        loaded.channels(),
        loaded.change_points()
    );

    let unit = normalize_to_sphere(loaded.values());
    let norms: Vec<f64> = unit
        .rows()
        .take(3)
        .map(|r| r.iter().map(|v| v * v).sum::<f64>().sqrt())
        .collect();
    println!("first row norms after normalization: {norms:?}");

    let normalized = TimeSeries::new("normalized", unit, loaded.labels().cloned())?;
    let (train, val, test) = split(&normalized, &SplitSpec::new(0.5, 0.25, 0.25)?)?;
    for s in [&train, &val, &test] {
        println!(
            "{:<16} {:>4} rows, change points {:?}",
            s.name,
            s.len(),
            s.change_points()
        );
    }
    std::fs::remove_file(&path).ok();
    Ok(())
}
