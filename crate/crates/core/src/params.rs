//! System constants, unit conversions, steering vectors and the
//! range-velocity grid geometry shared by every other module.
//!
//! Normalized quantities follow the OFDM frame: delays are measured in
//! symbol durations (`tau_bar = tau * delta_f`) and Doppler shifts in
//! subcarrier spacings (`fd_bar = f_D * T`). The slow-time phase advances by
//! `fd_bar * alpha` cycles per symbol, which is what the Doppler FFT sees.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::{CVec, Complex64};

/// Speed of light in vacuum, m/s.
pub const SPEED_OF_LIGHT: f64 = 299_792_458.0;

/// Raw, user-facing system parameters. Defaults reproduce the reference
/// 60 GHz / 50 MHz / 2048-subcarrier configuration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RawConfig {
    pub n_tx: usize,
    pub n_rx: usize,
    pub n_subcarriers: usize,
    pub n_symbols: usize,
    /// Hz.
    pub carrier_freq: f64,
    /// Hz.
    pub bandwidth: f64,
    /// Cyclic prefix length as a fraction of the useful symbol duration.
    pub cp_fraction: f64,
    /// Receiver noise variance, W.
    pub noise_var: f64,
    /// Total transmit power budget summed over subcarriers, W.
    pub power_budget: f64,
    /// Total beampattern gain required toward every focal angle, W.
    pub sensing_gain_req: f64,
    /// Antenna spacing in wavelengths.
    pub antenna_sep: f64,
    pub subgrid_range: usize,
    pub subgrid_doppler: usize,
}

impl Default for RawConfig {
    fn default() -> Self {
        Self {
            n_tx: 20,
            n_rx: 20,
            n_subcarriers: 2048,
            n_symbols: 64,
            carrier_freq: 60e9,
            bandwidth: 50e6,
            cp_fraction: 0.25,
            // -97 dBm
            noise_var: 1e-3 * 10f64.powf(-9.7),
            // 30 dBm
            power_budget: 1.0,
            sensing_gain_req: 4e-3,
            antenna_sep: 0.5,
            subgrid_range: 64,
            subgrid_doppler: 64,
        }
    }
}

impl RawConfig {
    /// Desk-scale variant: 256 subcarriers at the same bandwidth, 8x8 array.
    pub fn desk() -> Self {
        Self { n_tx: 8, n_rx: 8, n_subcarriers: 256, ..Self::default() }
    }
}

/// Validated configuration with every derived quantity precomputed.
/// Immutable after construction.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SystemConfig {
    raw: RawConfig,
    /// Hz.
    pub subcarrier_spacing: f64,
    /// Useful symbol duration, s.
    pub symbol_time: f64,
    /// Symbol duration including the cyclic prefix, s.
    pub total_time: f64,
    /// `total_time / symbol_time`.
    pub alpha: f64,
    /// m.
    pub range_res: f64,
    /// m/s.
    pub v_max: f64,
}

impl SystemConfig {
    pub fn raw(&self) -> &RawConfig {
        &self.raw
    }
    pub fn n_tx(&self) -> usize {
        self.raw.n_tx
    }
    pub fn n_rx(&self) -> usize {
        self.raw.n_rx
    }
    pub fn n_subcarriers(&self) -> usize {
        self.raw.n_subcarriers
    }
    pub fn n_symbols(&self) -> usize {
        self.raw.n_symbols
    }
    pub fn carrier_freq(&self) -> f64 {
        self.raw.carrier_freq
    }
    pub fn bandwidth(&self) -> f64 {
        self.raw.bandwidth
    }
    pub fn noise_var(&self) -> f64 {
        self.raw.noise_var
    }
    pub fn power_budget(&self) -> f64 {
        self.raw.power_budget
    }
    pub fn sensing_gain_req(&self) -> f64 {
        self.raw.sensing_gain_req
    }
    pub fn antenna_sep(&self) -> f64 {
        self.raw.antenna_sep
    }
    pub fn subgrid_range(&self) -> usize {
        self.raw.subgrid_range
    }
    pub fn subgrid_doppler(&self) -> usize {
        self.raw.subgrid_doppler
    }

    /// `range_res * n_subcarriers`, m.
    pub fn unambiguous_range(&self) -> f64 {
        self.range_res * self.raw.n_subcarriers as f64
    }

    /// Velocity step of one Doppler bin, m/s.
    pub fn velocity_res(&self) -> f64 {
        2.0 * self.v_max / self.raw.n_symbols as f64
    }

    /// Per-subcarrier power budget under a uniform split.
    pub fn power_per_subcarrier(&self) -> f64 {
        self.raw.power_budget / self.raw.n_subcarriers as f64
    }

    /// Per-subcarrier beampattern requirement under a uniform split.
    pub fn gain_req_per_subcarrier(&self) -> f64 {
        self.raw.sensing_gain_req / self.raw.n_subcarriers as f64
    }

    pub fn tau_to_range(&self, tau_bar: f64) -> f64 {
        tau_bar * SPEED_OF_LIGHT / (2.0 * self.subcarrier_spacing)
    }

    pub fn range_to_tau(&self, range_m: f64) -> f64 {
        2.0 * range_m / SPEED_OF_LIGHT * self.subcarrier_spacing
    }

    /// Normalized Doppler for a radial velocity (positive = receding).
    pub fn velocity_to_fd(&self, velocity_mps: f64) -> f64 {
        let f_d = -2.0 * velocity_mps * self.raw.carrier_freq / SPEED_OF_LIGHT;
        f_d * self.symbol_time
    }

    pub fn fd_to_velocity(&self, fd_bar: f64) -> f64 {
        -fd_bar * SPEED_OF_LIGHT / (2.0 * self.raw.carrier_freq * self.symbol_time)
    }

    /// Center `fd_bar` of a Doppler bin, using signed bins in
    /// `[-N_sym/2, N_sym/2)`.
    pub fn doppler_bin_center(&self, bin: usize) -> f64 {
        signed_bin(bin, self.raw.n_symbols) as f64 / (self.alpha * self.raw.n_symbols as f64)
    }

    /// Center `tau_bar` of a range bin.
    pub fn range_bin_center(&self, bin: usize) -> f64 {
        bin as f64 / self.raw.n_subcarriers as f64
    }
}

/// Maps a bin index in `[0, n)` to its signed counterpart in `[-n/2, n/2)`.
pub fn signed_bin(bin: usize, n: usize) -> i64 {
    let b = bin as i64;
    let n = n as i64;
    if b >= (n + 1) / 2 {
        b - n
    } else {
        b
    }
}

/// Validates raw parameters and computes every derived quantity.
pub fn derive_config(raw: RawConfig) -> Result<SystemConfig> {
    let counts = [
        ("n_tx", raw.n_tx),
        ("n_rx", raw.n_rx),
        ("n_subcarriers", raw.n_subcarriers),
        ("n_symbols", raw.n_symbols),
        ("subgrid_range", raw.subgrid_range),
        ("subgrid_doppler", raw.subgrid_doppler),
    ];
    for (name, value) in counts {
        if value == 0 {
            return Err(Error::Config(format!("{name} must be at least 1")));
        }
    }
    let positives = [
        ("carrier_freq", raw.carrier_freq),
        ("bandwidth", raw.bandwidth),
        ("noise_var", raw.noise_var),
        ("power_budget", raw.power_budget),
        ("antenna_sep", raw.antenna_sep),
    ];
    for (name, value) in positives {
        if !(value.is_finite() && value > 0.0) {
            return Err(Error::Config(format!("{name} must be positive, got {value}")));
        }
    }
    if !(raw.cp_fraction.is_finite() && raw.cp_fraction > 0.0) {
        return Err(Error::Config(format!("cp_fraction must be positive, got {}", raw.cp_fraction)));
    }
    if !(raw.sensing_gain_req.is_finite() && raw.sensing_gain_req >= 0.0) {
        return Err(Error::Config(format!("sensing_gain_req must be non-negative, got {}", raw.sensing_gain_req)));
    }

    let subcarrier_spacing = raw.bandwidth / raw.n_subcarriers as f64;
    let symbol_time = 1.0 / subcarrier_spacing;
    let total_time = (1.0 + raw.cp_fraction) * symbol_time;
    let alpha = total_time / symbol_time;
    let range_res = SPEED_OF_LIGHT / (2.0 * raw.bandwidth);
    let v_max = SPEED_OF_LIGHT / (4.0 * raw.carrier_freq * total_time);

    Ok(SystemConfig { raw, subcarrier_spacing, symbol_time, total_time, alpha, range_res, v_max })
}

/// Uniform linear array response, element `m` equal to
/// `exp(-j 2 pi m sep sin(angle))`.
pub fn steering_vector(angle: f64, n_elem: usize, sep: f64) -> CVec {
    let step = -2.0 * PI * sep * angle.sin();
    CVec::from_fn(n_elem, |m, _| Complex64::from_polar(1.0, step * m as f64))
}

/// Which look direction a path belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PathGroup {
    /// Member of the focal group with this index.
    Focal(usize),
    /// Scatterer outside every focal group.
    Clutter,
}

/// Physical description of one propagation path.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PathParams {
    pub range_m: f64,
    /// Radial velocity, positive when receding.
    pub velocity_mps: f64,
    pub aoa_rad: f64,
    pub aod_rad: f64,
    pub reflect: Complex64,
    pub group: PathGroup,
}

/// A path expressed in frame-normalized units.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NormalizedPath {
    pub tau_bar: f64,
    pub fd_bar: f64,
    /// Reflection coefficient with the carrier phase of the delay folded in.
    pub amp: Complex64,
    pub aoa_rad: f64,
    pub aod_rad: f64,
    pub group: PathGroup,
    /// Set when `|v| > v_max`; the Doppler then aliases.
    pub ambiguous: bool,
}

pub fn normalize_path(p: &PathParams, cfg: &SystemConfig) -> Result<NormalizedPath> {
    let r_max = cfg.unambiguous_range();
    if !(p.range_m >= 0.0 && p.range_m < r_max) {
        return Err(Error::OutOfRange(format!("range {} m outside [0, {r_max:.3}) m", p.range_m)));
    }
    let tau = 2.0 * p.range_m / SPEED_OF_LIGHT;
    let carrier_phase = -2.0 * PI * cfg.carrier_freq() * tau;
    Ok(NormalizedPath {
        tau_bar: tau * cfg.subcarrier_spacing,
        fd_bar: cfg.velocity_to_fd(p.velocity_mps),
        amp: p.reflect * Complex64::from_polar(1.0, carrier_phase),
        aoa_rad: p.aoa_rad,
        aod_rad: p.aod_rad,
        group: p.group,
        ambiguous: p.velocity_mps.abs() > cfg.v_max * (1.0 + 1e-12),
    })
}

/// Coarse grid cell `(range_bin, doppler_bin)` of a normalized path.
///
/// Both indices use rounding so the cell coincides with the FFT peak of an
/// on-grid path; the Doppler index wraps modulo `N_sym`.
pub fn cell_of(np: &NormalizedPath, cfg: &SystemConfig) -> (usize, usize) {
    cell_of_params(np.tau_bar, np.fd_bar, cfg)
}

pub fn cell_of_params(tau_bar: f64, fd_bar: f64, cfg: &SystemConfig) -> (usize, usize) {
    let n_c = cfg.n_subcarriers() as i64;
    let n_sym = cfg.n_symbols() as i64;
    let r = (tau_bar * n_c as f64).round() as i64;
    let d = (fd_bar * cfg.alpha * n_sym as f64).round() as i64;
    (r.rem_euclid(n_c) as usize, d.rem_euclid(n_sym) as usize)
}
