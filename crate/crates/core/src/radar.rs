//! Doppler correction filters and the FFT range-velocity imaging operator.
//!
//! The imaging operator computes `F^-1 (F Y ./ S) F_Nsym`: a fast-time DFT
//! back to subcarriers, symbol equalization, an inverse DFT to the range
//! domain, then a slow-time DFT to Doppler. A Doppler correction filter
//! left-multiplies the frame by `D_I*(offset)`, which removes ICI exactly
//! for paths whose normalized Doppler equals the offset.

use rayon::prelude::*;

use crate::dft::{dft_columns, dft_rows, Direction};
use crate::error::{Error, Result};
use crate::params::SystemConfig;
use crate::waveform::{phase_diag, EffectiveSymbolMatrix, PhaseKind, RxFrame};
use crate::{CMat, Complex64, RMat};

/// Entries of `S` below this fraction of its median modulus are erased.
pub const DIVISION_GUARD: f64 = 1e-3;
/// Maximum fraction of erased entries before the symbols count as degenerate.
pub const MAX_ERASED_FRACTION: f64 = 0.10;

#[derive(Debug, Clone, PartialEq)]
pub struct DcfBank {
    offsets: Vec<f64>,
}

impl DcfBank {
    pub fn new(offsets: Vec<f64>) -> Result<Self> {
        if offsets.is_empty() {
            return Err(Error::Config("DCF bank needs at least one filter".into()));
        }
        for (i, &o) in offsets.iter().enumerate() {
            if !o.is_finite() || o.abs() > 1.0 {
                return Err(Error::Config(format!("DCF offset {o} outside [-1, 1]")));
            }
            if offsets[..i].contains(&o) {
                return Err(Error::Config(format!("duplicate DCF offset {o}")));
            }
        }
        Ok(Self { offsets })
    }

    /// Three filters centred on the negative, zero and positive Doppler
    /// thirds: `{-0.5/alpha, 0, +0.5/alpha}`.
    pub fn default_for(cfg: &SystemConfig) -> Self {
        let edge = 0.5 / cfg.alpha;
        Self { offsets: vec![-edge, 0.0, edge] }
    }

    pub fn offsets(&self) -> &[f64] {
        &self.offsets
    }

    pub fn len(&self) -> usize {
        self.offsets.len()
    }

    pub fn is_empty(&self) -> bool {
        self.offsets.is_empty()
    }
}

/// Range-velocity map; rows are range bins, columns Doppler bins.
#[derive(Debug, Clone, PartialEq)]
pub struct RVMap {
    pub mag: RMat,
    pub image: Option<CMat>,
    /// DCF offset applied before imaging (0 for the unfiltered map).
    pub offset: f64,
}

impl RVMap {
    pub fn from_image(image: CMat, offset: f64) -> Self {
        let mag = image.map(|z| z.norm());
        Self { mag, image: Some(image), offset }
    }

    /// Cell with the largest magnitude.
    pub fn peak(&self) -> (usize, usize) {
        argmax(&self.mag)
    }
}

pub(crate) fn argmax(m: &RMat) -> (usize, usize) {
    let mut best = (0, 0);
    let mut best_v = f64::NEG_INFINITY;
    // Column-major walk; ties keep the first (smallest column, then row).
    for c in 0..m.ncols() {
        for r in 0..m.nrows() {
            let v = m[(r, c)];
            if v > best_v {
                best_v = v;
                best = (r, c);
            }
        }
    }
    best
}

/// Applies the filter `D_I*(offset)` to the frame and its components.
pub fn apply_dcf(frame: &RxFrame, offset: f64, cfg: &SystemConfig) -> RxFrame {
    if offset == 0.0 {
        return frame.clone();
    }
    let w = phase_diag(PhaseKind::Ici, offset, cfg).map(|z| z.conj());
    frame.scale_rows(&w)
}

/// Imaging operator applied to a bare received matrix.
pub fn radar_image(y: &CMat, s_ref: &EffectiveSymbolMatrix) -> Result<CMat> {
    let s = &s_ref.s;
    if y.shape() != s.shape() {
        return Err(Error::Dimension(format!("frame {:?} vs effective symbols {:?}", y.shape(), s.shape())));
    }
    let inv = guarded_inverse(s)?;
    let mut x = y.clone();
    dft_columns(&mut x, Direction::Forward);
    x.component_mul_assign(&inv);
    dft_columns(&mut x, Direction::Inverse);
    dft_rows(&mut x, Direction::Forward);
    Ok(x)
}

/// Elementwise reciprocal of `S` with near-zero entries erased.
pub fn guarded_inverse(s: &CMat) -> Result<CMat> {
    let total = s.len();
    if total == 0 {
        return Ok(s.clone());
    }
    let mut moduli: Vec<f64> = s.iter().map(|z| z.norm()).collect();
    let mid = total / 2;
    let (_, median, _) = moduli.select_nth_unstable_by(mid, |a, b| a.total_cmp(b));
    let floor = DIVISION_GUARD * *median;
    let mut erased = 0usize;
    let inv = s.map(|z| {
        let m = z.norm();
        if m < floor || m == 0.0 {
            erased += 1;
            Complex64::new(0.0, 0.0)
        } else {
            z.inv()
        }
    });
    if erased as f64 > MAX_ERASED_FRACTION * total as f64 {
        return Err(Error::DegenerateSymbols { erased, total });
    }
    Ok(inv)
}

pub fn radar_fft(frame: &RxFrame, s_ref: &EffectiveSymbolMatrix) -> Result<RVMap> {
    Ok(RVMap::from_image(radar_image(&frame.y, s_ref)?, 0.0))
}

/// One map per filter in the bank, in bank order.
pub fn pipeline(
    frame: &RxFrame,
    bank: &DcfBank,
    s_ref: &EffectiveSymbolMatrix,
    cfg: &SystemConfig,
) -> Result<Vec<RVMap>> {
    if bank.is_empty() {
        return Err(Error::Config("empty DCF bank".into()));
    }
    bank.offsets()
        .par_iter()
        .map(|&offset| {
            let w = phase_diag(PhaseKind::Ici, offset, cfg).map(|z| z.conj());
            let mut y = frame.y.clone();
            for mut col in y.column_iter_mut() {
                col.component_mul_assign(&w);
            }
            let image = radar_image(&y, s_ref)?;
            Ok(RVMap::from_image(image, offset))
        })
        .collect()
}
