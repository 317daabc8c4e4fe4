//! End-to-end frame simulation from a scenario.

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::channel::{generate_channels, CommChannelSet};
use crate::error::{Error, Result};
use crate::io::scenario::{BeamformerMode, Scenario};
use crate::params::{normalize_path, steering_vector, NormalizedPath, PathParams, SystemConfig};
use crate::rx::{design_rx, FocalDirection, RxSolution};
use crate::tx::{optimize, zf_baseline, Objective, TxOptions, TxSolution};
use crate::waveform::{
    effective_symbols, gen_symbols, synthesize_rx, BeamformerSet, Constellation, EffectiveSymbolMatrix, RxFrame, Scene,
    SymbolTensor,
};
use crate::{CVec, Complex64};

/// Independent 64-bit seed for a named sub-stream of `seed`.
pub fn sub_seed(seed: u64, stream: u64) -> u64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng.next_u64()
}

const STREAM_SYMBOLS: u64 = 1;
const STREAM_NOISE: u64 = 2;

/// Transmit and receive beamformers designed once per scenario.
#[derive(Debug, Clone, PartialEq)]
pub struct BeamDesign {
    pub channels: CommChannelSet,
    pub tx: TxSolution,
    pub rx: RxSolution,
    pub beams: BeamformerSet,
}

fn steered(cfg: &SystemConfig, angle: f64, n_users: usize) -> Vec<Vec<CVec>> {
    let a = steering_vector(angle, cfg.n_tx(), cfg.antenna_sep());
    let scale = (cfg.power_per_subcarrier() / n_users as f64).sqrt() / a.norm();
    vec![vec![&a * Complex64::from(scale); n_users]; cfg.n_subcarriers()]
}

pub fn design_beams(scn: &Scenario) -> Result<BeamDesign> {
    let cfg = &scn.cfg;
    if scn.focal_angles_rad.is_empty() {
        return Err(Error::Validation("at least one focal angle is required".into()));
    }
    let channels = generate_channels(&scn.file.users, cfg)?;
    let opts =
        TxOptions { max_iter: scn.file.beamformer.max_iter, tol: scn.file.beamformer.tol, ..TxOptions::default() };
    let tx = match scn.file.beamformer.mode {
        BeamformerMode::Optimized => optimize(&channels, cfg, &scn.focal_angles_rad, &opts)?,
        BeamformerMode::SensingOnly => {
            optimize(&channels, cfg, &scn.focal_angles_rad, &TxOptions { objective: Objective::SensingOnly, ..opts })?
        }
        BeamformerMode::ZeroForcing => zf_baseline(&channels, cfg, &scn.focal_angles_rad)?,
        BeamformerMode::Steered => {
            let v = steered(cfg, scn.focal_angles_rad[0], channels.n_users());
            let rate = crate::tx::sum_rate(&channels, cfg, &v);
            TxSolution {
                beta: Vec::new(),
                xi: Vec::new(),
                lambda: Vec::new(),
                mu: Vec::new(),
                trace: vec![rate],
                iterations: 0,
                converged: true,
                v,
            }
        }
    };
    let focal: Vec<FocalDirection> = scn.focal_angles_rad.iter().map(|&a| FocalDirection::monostatic(a)).collect();
    let rx = design_rx(&tx.v, &focal, cfg)?;
    let peak = rx.focal_gains.iter().copied().fold(0.0, f64::max);
    for (g, a) in rx.focal_gains.iter().zip(&scn.file.focal_angles_deg) {
        if *g < 1e-6 * peak {
            log::warn!("receive combiner has almost no gain toward focal angle {a} deg ({g:.2e} against {peak:.2e})");
        }
    }
    let beams = tx.to_beamformers(rx.u.clone());
    Ok(BeamDesign { channels, tx, rx, beams })
}

/// Effective symbols toward the reference focal angle.
pub fn reference_symbols(
    scn: &Scenario,
    beams: &BeamformerSet,
    symbols: &SymbolTensor,
) -> Result<EffectiveSymbolMatrix> {
    let a = scn.focal_angles_rad[0];
    effective_symbols(a, a, beams, symbols, &scn.cfg)
}

/// One synthesized frame with everything needed to process and score it.
#[derive(Debug, Clone, PartialEq)]
pub struct FrameBundle {
    pub frame: RxFrame,
    pub symbols: SymbolTensor,
    pub s_ref: EffectiveSymbolMatrix,
    /// Normalized targets and clutter, in scene order.
    pub truth: Vec<NormalizedPath>,
}

/// Synthesizes one frame of `paths` under fixed beamformers.
pub fn render_frame(
    cfg: &SystemConfig,
    focal_angle_rad: f64,
    beams: &BeamformerSet,
    paths: &[PathParams],
    constellation: Constellation,
    noise_on: bool,
    seed: u64,
) -> Result<FrameBundle> {
    let n_users = beams.tx.first().map_or(0, |u| u.len());
    let symbols = gen_symbols(cfg, n_users, constellation, sub_seed(seed, STREAM_SYMBOLS))?;
    let scene = Scene { paths: paths.to_vec(), reference_group: 0 };
    let frame = synthesize_rx(cfg, &scene, &symbols, beams, noise_on, sub_seed(seed, STREAM_NOISE))?;
    let s_ref = effective_symbols(focal_angle_rad, focal_angle_rad, beams, &symbols, cfg)?;
    let truth = paths.iter().map(|p| normalize_path(p, cfg)).collect::<Result<_>>()?;
    Ok(FrameBundle { frame, symbols, s_ref, truth })
}

#[derive(Debug, Clone, PartialEq)]
pub struct Simulation {
    pub design: BeamDesign,
    pub bundle: FrameBundle,
}

pub fn simulate(scn: &Scenario) -> Result<Simulation> {
    let design = design_beams(scn)?;
    let bundle = render_frame(
        &scn.cfg,
        scn.focal_angles_rad[0],
        &design.beams,
        &scn.paths(),
        scn.constellation,
        scn.file.noise,
        scn.file.seed,
    )?;
    Ok(Simulation { design, bundle })
}
