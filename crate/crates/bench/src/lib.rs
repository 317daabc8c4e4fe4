//! Shared inputs for the benchmarks.

use isac_core::channel::{generate_channels, ChannelSpec, CommChannelSet};
use isac_core::params::{
    derive_config, steering_vector, PathGroup, PathParams, RawConfig, SystemConfig, SPEED_OF_LIGHT,
};
use isac_core::radar::{radar_fft, RVMap};
use isac_core::sim::{render_frame, FrameBundle};
use isac_core::waveform::{BeamformerSet, Constellation};
use isac_core::Complex64;

/// A noisy frame with a few off-grid targets under a broadside beam.
pub struct Workload {
    pub cfg: SystemConfig,
    pub bundle: FrameBundle,
    pub map: RVMap,
}

pub fn config(n_subcarriers: usize, n_symbols: usize) -> SystemConfig {
    derive_config(RawConfig { n_subcarriers, n_symbols, ..RawConfig::desk() }).expect("valid config")
}

pub fn workload(n_subcarriers: usize, n_symbols: usize) -> Workload {
    let cfg = config(n_subcarriers, n_symbols);
    let a_t = steering_vector(0.0, cfg.n_tx(), cfg.antenna_sep()) / Complex64::from((cfg.n_tx() as f64).sqrt());
    let u = steering_vector(0.0, cfg.n_rx(), cfg.antenna_sep()) / Complex64::from((cfg.n_rx() as f64).sqrt());
    let beams = BeamformerSet::new(vec![vec![a_t]; cfg.n_subcarriers()], u);
    let bin = SPEED_OF_LIGHT / (2.0 * cfg.bandwidth());
    let paths: Vec<PathParams> = [(10.3, 0.2), (40.7, -0.35), (77.5, 0.1)]
        .iter()
        .map(|&(rb, vfrac)| PathParams {
            range_m: rb * bin,
            velocity_mps: vfrac * cfg.velocity_res() * cfg.n_symbols() as f64,
            aoa_rad: 0.0,
            aod_rad: 0.0,
            reflect: Complex64::new(1.0, 0.0),
            group: PathGroup::Focal(0),
        })
        .collect();
    let bundle = render_frame(&cfg, 0.0, &beams, &paths, Constellation::Qpsk, true, 1).expect("frame");
    let map = radar_fft(&bundle.frame, &bundle.s_ref).expect("map");
    Workload { cfg, bundle, map }
}

pub fn channels(cfg: &SystemConfig, users: usize) -> CommChannelSet {
    generate_channels(&ChannelSpec { count: users, seed: 7, ..ChannelSpec::default() }, cfg).expect("channels")
}
