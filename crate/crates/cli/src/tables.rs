//! CSV row schemas and grid conversions shared by the subcommands.

use std::io::Write;
use std::path::Path;

use image::GrayImage;
use isac_core::RMat;
use serde::{Deserialize, Serialize};

use crate::error::{CliError, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DetectionRow {
    pub method: String,
    pub range_bin: usize,
    pub doppler_bin: usize,
    pub tau_bar: f64,
    pub fd_bar: f64,
    pub range_m: f64,
    pub vel_mps: f64,
    pub amp_re: f64,
    pub amp_im: f64,
    /// GLRT statistic for refined detections, map magnitude for CFAR.
    pub stat: f64,
    pub evals: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RocRow {
    pub threshold: f64,
    pub p_fa: f64,
    pub p_d: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RmseRow {
    pub trial: usize,
    pub file: String,
    pub range_rmse_m: f64,
    pub velocity_rmse_mps: f64,
    pub matched: usize,
    pub n_truth: usize,
}

/// Writes serde rows with a header line to `out`, or to stdout when `None`.
pub fn write_rows<T: Serialize>(rows: &[T], out: Option<&Path>) -> Result<()> {
    let sink: Box<dyn Write> = match out {
        Some(p) => Box::new(std::fs::File::create(p)?),
        None => Box::new(std::io::stdout().lock()),
    };
    let mut w = csv::Writer::from_writer(sink);
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_rows<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<Vec<T>> {
    let mut r = csv::Reader::from_path(path)?;
    r.deserialize().map(|row| row.map_err(CliError::from)).collect()
}

/// Magnitudes in dB relative to the grid maximum, clamped below at `floor`.
pub fn db_grid(mag: &RMat, floor: f64) -> RMat {
    let peak = mag.iter().copied().fold(0.0, f64::max);
    mag.map(|m| if peak > 0.0 && m > 0.0 { (20.0 * (m / peak).log10()).max(floor) } else { floor })
}

/// Rows of the grid become image rows; `floor` maps to black and 0 dB to white.
pub fn gray_image(db: &RMat, floor: f64) -> GrayImage {
    GrayImage::from_fn(db.ncols() as u32, db.nrows() as u32, |x, y| {
        let v = (db[(y as usize, x as usize)] - floor) / -floor;
        image::Luma([(255.0 * v.clamp(0.0, 1.0)).round() as u8])
    })
}

/// Writes a grid with a header of column indices and a leading row index.
pub fn write_grid(grid: &RMat, path: &Path) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    let mut header = vec!["range_bin".to_string()];
    header.extend((0..grid.ncols()).map(|c| c.to_string()));
    w.write_record(&header)?;
    for r in 0..grid.nrows() {
        let mut rec = vec![r.to_string()];
        rec.extend((0..grid.ncols()).map(|c| grid[(r, c)].to_string()));
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}

/// `n` thresholds spaced logarithmically between the smallest positive and
/// the largest score, ascending.
pub fn log_thresholds(maps: &[RMat], n: usize) -> Result<Vec<f64>> {
    if n < 2 {
        return Err(CliError::Usage("--points must be at least 2".into()));
    }
    let (mut lo, mut hi) = (f64::INFINITY, 0.0f64);
    for v in maps.iter().flat_map(|m| m.iter()) {
        if *v > 0.0 {
            lo = lo.min(*v);
            hi = hi.max(*v);
        }
    }
    if hi <= 0.0 {
        return Err(CliError::Input("all scores are zero".into()));
    }
    if hi <= lo {
        lo = hi / 10.0;
    }
    let (a, b) = (lo.ln(), hi.ln());
    Ok((0..n).map(|i| (a + (b - a) * i as f64 / (n - 1) as f64).exp()).collect())
}
