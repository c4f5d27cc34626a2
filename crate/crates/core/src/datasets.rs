//! Bundled data sets.
//!
//! `growth`: heights in cm of 54 girls and 39 boys measured at 31 ages
//! between 1 and 18 years. The ages are unevenly spaced; curves are stored
//! by age index and placed on the equispaced grid in `growth_grid.json`.

use crate::error::Result;
use crate::fdata::{FunctionalSample, GridSpec};
use crate::io;

pub const GROWTH_CSV: &str = include_str!("../data/growth.csv");
pub const GROWTH_LABELS_CSV: &str = include_str!("../data/growth_labels.csv");
pub const GROWTH_GRID_JSON: &str = include_str!("../data/growth_grid.json");

/// Measurement ages in years, one per grid index.
pub const GROWTH_AGES: [f64; 31] = [
    1.0, 1.25, 1.5, 1.75, 2.0, 3.0, 4.0, 5.0, 6.0, 7.0, 8.0, 8.5, 9.0, 9.5, 10.0, 10.5, 11.0, 11.5, 12.0,
    12.5, 13.0, 13.5, 14.0, 14.5, 15.0, 15.5, 16.0, 16.5, 17.0, 17.5, 18.0,
];

pub fn growth_grid() -> Result<GridSpec> {
    io::read_grid_json(GROWTH_GRID_JSON.as_bytes())
}

/// The growth curves with `girl`/`boy` labels on the bundled grid.
pub fn growth() -> Result<FunctionalSample> {
    growth_on(growth_grid()?)
}

/// The growth curves on a caller-chosen grid of 31 points.
pub fn growth_on(grid: GridSpec) -> Result<FunctionalSample> {
    let sample = io::read_curves(GROWTH_CSV.as_bytes(), Some(grid))?;
    let labels = io::read_labels(GROWTH_LABELS_CSV.as_bytes(), sample.ids())?;
    sample.with_labels(labels)
}
