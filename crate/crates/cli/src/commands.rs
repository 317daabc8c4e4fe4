use std::fs;
use std::path::{Path, PathBuf};

use isac_core::detect::{ca_cfar, ground_truth, match_and_score, rmse, roc_sweep, DetectionSet, GroundTruthMap};
use isac_core::glrt::{dcfnet_lr, ml_full_search, refine_cells, RefinedDetection};
use isac_core::io::container::{DType, FrameContainer, Sidecar};
use isac_core::io::dataset::{export_dataset, import_confidence, import_confidence_for, Manifest, SampleDistribution};
use isac_core::io::scenario::{parse_scenario, validate, BeamformerMode, Scenario};
use isac_core::params::{cell_of_params, derive_config, NormalizedPath, PathGroup, SystemConfig};
use isac_core::radar::{apply_dcf, pipeline, radar_fft, DcfBank, RVMap};
use isac_core::sim::{design_beams, simulate};
use isac_core::tx::{beampattern_gain, focal_steering, total_power};
use isac_core::waveform::{EffectiveSymbolMatrix, RxFrame};
use isac_core::{CMat, Complex64, RMat};
use serde::Serialize;

use crate::error::{CliError, Result};
use crate::tables::{
    db_grid, gray_image, log_thresholds, read_rows, write_grid, write_rows, DetectionRow, RmseRow, RocRow,
};
use crate::{Cli, Command, Method};

const FRAME_CHANNELS: [&str; 2] = ["y", "s_ref"];

pub fn run(cli: Cli) -> Result<()> {
    let seed = cli.seed;
    match cli.command {
        Command::Simulate { config, out } => cmd_simulate(&config, &out, seed),
        Command::Rvmap { frame, dcf, out } => cmd_rvmap(&frame, dcf, out, seed),
        Command::Beamform { config, out } => cmd_beamform(&config, out.as_deref(), seed),
        Command::Detect { frame, method, pfa, guard, train, dcf, conf, delta, pmax, tol, out } => {
            let opts = DetectOptions { method, pfa, guard, train, dcf, conf, delta, pmax, tol };
            cmd_detect(&frame, &opts, out.as_deref())
        }
        Command::ExportDataset { config, n, out, dcf } => cmd_export(&config, n, &out, dcf, seed),
        Command::Eval { roc: Some(dir), channel, conf_dir, points, tol, out, .. } => {
            cmd_roc(&dir, channel.as_deref(), conf_dir.as_deref(), points, tol, out.as_deref())
        }
        Command::Eval { rmse, truth, out, .. } => cmd_rmse(&rmse, &truth, out.as_deref()),
        Command::Plot { input, channel, out, csv, dbfloor } => cmd_plot(&input, channel, &out, csv, dbfloor),
    }
}

fn load_scenario(path: &Path, seed: Option<u64>) -> Result<Scenario> {
    let scn = parse_scenario(path)?;
    match seed {
        Some(s) if s != scn.file.seed => Ok(validate(isac_core::io::scenario::ScenarioFile { seed: s, ..scn.file })?),
        _ => Ok(scn),
    }
}

fn stem_id(path: &Path) -> String {
    path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default()
}

fn cmd_simulate(config: &Path, out: &Path, seed: Option<u64>) -> Result<()> {
    let scn = load_scenario(config, seed)?;
    let sim = simulate(&scn)?;
    let b = &sim.bundle;
    FrameContainer::from_complex(&[&b.frame.y, &b.s_ref.s])?.write(out)?;
    Sidecar {
        frame_id: stem_id(out),
        kind: "frame".into(),
        channels: FRAME_CHANNELS.iter().map(|c| c.to_string()).collect(),
        config: Some(scn.cfg.raw().clone()),
        paths: b.truth.clone(),
        dcf_offsets: Vec::new(),
        focal_angles_deg: scn.file.focal_angles_deg.clone(),
        seed: Some(scn.file.seed),
        provenance: [
            ("scenario".to_string(), config.display().to_string()),
            ("focal_angle_rad".to_string(), b.s_ref.aoa_rad.to_string()),
            ("sum_rate".to_string(), sim.design.tx.final_rate().to_string()),
        ]
        .into(),
    }
    .write_for(out)?;
    log::info!("wrote {} ({} paths)", out.display(), b.truth.len());
    Ok(())
}

/// A frame container with its sidecar and derived configuration.
struct LoadedFrame {
    cfg: SystemConfig,
    side: Sidecar,
    frame: RxFrame,
    s_ref: EffectiveSymbolMatrix,
}

impl LoadedFrame {
    fn read(path: &Path) -> Result<Self> {
        let c = FrameContainer::read(path)?;
        let side = Sidecar::read_for(path)?;
        if c.dtype != DType::Complex64 || side.kind != "frame" {
            return Err(CliError::Input(format!("{} is not a frame container", path.display())));
        }
        let raw = side
            .config
            .clone()
            .ok_or_else(|| CliError::Input(format!("{}: sidecar carries no config", path.display())))?;
        let cfg = derive_config(raw)?;
        let idx = |name: &str| {
            side.channel_index(name)
                .ok_or_else(|| CliError::Input(format!("{}: missing channel `{name}`", path.display())))
        };
        let y = c.complex_channel(idx("y")?)?;
        let s = c.complex_channel(idx("s_ref")?)?;
        if y.shape() != (cfg.n_subcarriers(), cfg.n_symbols()) {
            return Err(CliError::Input(format!("{}: grid does not match its config", path.display())));
        }
        let angle: f64 = side.provenance.get("focal_angle_rad").and_then(|a| a.parse().ok()).unwrap_or(0.0);
        Ok(Self {
            cfg,
            frame: RxFrame::from_matrix(y),
            s_ref: EffectiveSymbolMatrix { s, aoa_rad: angle, aod_rad: angle },
            side,
        })
    }

    fn targets(&self) -> Vec<NormalizedPath> {
        focal_paths(&self.side.paths)
    }
}

fn focal_paths(paths: &[NormalizedPath]) -> Vec<NormalizedPath> {
    paths.iter().filter(|p| matches!(p.group, PathGroup::Focal(_))).cloned().collect()
}

fn bank_for(dcf: Option<Vec<f64>>, cfg: &SystemConfig) -> Result<DcfBank> {
    Ok(match dcf {
        Some(offsets) => DcfBank::new(offsets)?,
        None => DcfBank::default_for(cfg),
    })
}

fn cmd_rvmap(path: &Path, dcf: Option<Vec<f64>>, out: Option<PathBuf>, seed: Option<u64>) -> Result<()> {
    let lf = LoadedFrame::read(path)?;
    let bank = bank_for(dcf, &lf.cfg)?;
    let maps = pipeline(&lf.frame, &bank, &lf.s_ref, &lf.cfg)?;
    let out = out.unwrap_or_else(|| path.with_extension("rv.bin"));
    let grids: Vec<&RMat> = maps.iter().map(|m| &m.mag).collect();
    FrameContainer::from_real(&grids)?.write(&out)?;
    Sidecar {
        frame_id: lf.side.frame_id.clone(),
        kind: "rv_maps".into(),
        channels: (0..maps.len()).map(|i| format!("rv_{i}")).collect(),
        dcf_offsets: bank.offsets().to_vec(),
        seed: seed.or(lf.side.seed),
        provenance: [("frame".to_string(), path.display().to_string())].into(),
        ..lf.side
    }
    .write_for(&out)?;
    log::info!("wrote {} maps to {}", maps.len(), out.display());
    Ok(())
}

#[derive(Debug, Serialize)]
struct RxReport {
    eigenvalue: f64,
    focal_gains: Vec<f64>,
    degenerate: bool,
    u: Vec<[f64; 2]>,
}

#[derive(Debug, Serialize)]
struct BeamformReport {
    mode: BeamformerMode,
    n_users: usize,
    iterations: usize,
    converged: bool,
    sum_rate_trace: Vec<f64>,
    final_sum_rate: f64,
    power_per_subcarrier: f64,
    max_subcarrier_power: f64,
    gain_required: f64,
    min_focal_gain: Vec<f64>,
    rx: RxReport,
}

fn cmd_beamform(config: &Path, out: Option<&Path>, seed: Option<u64>) -> Result<()> {
    let scn = load_scenario(config, seed)?;
    let cfg = &scn.cfg;
    let d = design_beams(&scn)?;
    let focal = focal_steering(&scn.focal_angles_rad, cfg);
    let n_c = cfg.n_subcarriers() as f64;
    let min_focal_gain = focal
        .iter()
        .map(|a| d.tx.v.iter().map(|v| beampattern_gain(a, v, n_c)).fold(f64::INFINITY, f64::min))
        .collect();
    let report = BeamformReport {
        mode: scn.file.beamformer.mode,
        n_users: d.channels.n_users(),
        iterations: d.tx.iterations,
        converged: d.tx.converged,
        sum_rate_trace: d.tx.trace.clone(),
        final_sum_rate: d.tx.final_rate(),
        power_per_subcarrier: cfg.power_per_subcarrier(),
        max_subcarrier_power: d.tx.v.iter().map(|v| total_power(v)).fold(0.0, f64::max),
        gain_required: cfg.gain_req_per_subcarrier(),
        min_focal_gain,
        rx: RxReport {
            eigenvalue: d.rx.eigenvalue,
            focal_gains: d.rx.focal_gains.clone(),
            degenerate: d.rx.degenerate,
            u: d.rx.u.iter().map(|z| [z.re, z.im]).collect(),
        },
    };
    let text = serde_json::to_string_pretty(&report)? + "\n";
    match out {
        Some(p) => fs::write(p, text)?,
        None => print!("{text}"),
    }
    Ok(())
}

struct DetectOptions {
    method: Method,
    pfa: f64,
    guard: usize,
    train: usize,
    dcf: f64,
    conf: Option<PathBuf>,
    delta: f64,
    pmax: usize,
    tol: usize,
}

fn method_name(m: Method) -> &'static str {
    match m {
        Method::Cfar => "cfar",
        Method::Ml => "ml",
        Method::Lr => "lr",
    }
}

fn cfar_on(lf: &LoadedFrame, opts: &DetectOptions) -> Result<(RVMap, DetectionSet)> {
    let map = radar_fft(&apply_dcf(&lf.frame, opts.dcf, &lf.cfg), &lf.s_ref)?;
    let dets = ca_cfar(&map.mag, opts.guard, opts.train, opts.pfa)?;
    Ok((map, dets))
}

fn cfar_rows(map: &RVMap, dets: &DetectionSet, cfg: &SystemConfig) -> Vec<DetectionRow> {
    let scale = ((cfg.n_subcarriers() * cfg.n_symbols()) as f64).sqrt();
    dets.ranked()
        .iter()
        .map(|d| {
            let (tau_bar, fd_bar) = (cfg.range_bin_center(d.range_bin), cfg.doppler_bin_center(d.doppler_bin));
            let amp = map.image.as_ref().map_or(Complex64::new(0.0, 0.0), |im| im[d.cell()] / scale);
            DetectionRow {
                method: "cfar".into(),
                range_bin: d.range_bin,
                doppler_bin: d.doppler_bin,
                tau_bar,
                fd_bar,
                range_m: cfg.tau_to_range(tau_bar),
                vel_mps: cfg.fd_to_velocity(fd_bar),
                amp_re: amp.re,
                amp_im: amp.im,
                stat: d.score,
                evals: 0,
            }
        })
        .collect()
}

fn refined_rows(dets: &[RefinedDetection], cfg: &SystemConfig, method: &str) -> Vec<DetectionRow> {
    dets.iter()
        .map(|d| {
            let (range_bin, doppler_bin) = cell_of_params(d.tau_bar, d.fd_bar, cfg);
            DetectionRow {
                method: method.into(),
                range_bin,
                doppler_bin,
                tau_bar: d.tau_bar,
                fd_bar: d.fd_bar,
                range_m: d.range_m(cfg),
                vel_mps: d.velocity_mps(cfg),
                amp_re: d.amp.re,
                amp_im: d.amp.im,
                stat: d.stat,
                evals: d.eval_count,
            }
        })
        .collect()
}

fn cmd_detect(path: &Path, opts: &DetectOptions, out: Option<&Path>) -> Result<()> {
    let lf = LoadedFrame::read(path)?;
    let cfg = &lf.cfg;
    let name = method_name(opts.method);
    if opts.conf.is_some() && opts.method != Method::Lr {
        return Err(CliError::Usage("--conf only applies to --method lr".into()));
    }
    let rows = match opts.method {
        Method::Cfar => {
            let (map, dets) = cfar_on(&lf, opts)?;
            cfar_rows(&map, &dets, cfg)
        }
        Method::Ml => refined_rows(&ml_full_search(&lf.frame.y, &lf.s_ref.s, cfg, opts.pmax)?, cfg, name),
        Method::Lr => {
            let dets = match &opts.conf {
                Some(conf_path) => {
                    let conf = import_confidence(conf_path)?;
                    if let Some(id) = conf.frame_id.as_deref().filter(|id| !id.is_empty()) {
                        if id != lf.side.frame_id {
                            log::warn!("confidence map is for frame `{id}`, not `{}`", lf.side.frame_id);
                        }
                    }
                    dcfnet_lr(&conf, &lf.frame.y, &lf.s_ref.s, cfg, opts.delta, opts.pmax)?
                }
                None => {
                    log::warn!("no --conf given; seeding local refinement with CFAR detections");
                    let cells: Vec<_> =
                        cfar_on(&lf, opts)?.1.ranked().iter().take(opts.pmax).map(|d| d.cell()).collect();
                    refine_cells(&lf.frame.y, &cells, &lf.s_ref.s, cfg)?
                }
            };
            refined_rows(&dets, cfg, name)
        }
    };
    let targets = lf.targets();
    if !targets.is_empty() {
        let set = DetectionSet::new(
            rows.iter()
                .map(|r| isac_core::detect::Detection {
                    range_bin: r.range_bin,
                    doppler_bin: r.doppler_bin,
                    score: r.stat,
                })
                .collect(),
        );
        match set {
            Ok(set) => {
                let m = match_and_score(&set, &ground_truth(&targets, cfg), opts.tol);
                log::info!(
                    "{name}: {} of {} targets hit, {} false alarms",
                    m.true_positives,
                    m.n_targets,
                    m.false_positives
                );
            }
            Err(e) => log::info!("{name}: no match summary ({e})"),
        }
    }
    write_rows(&rows, out)
}

fn cmd_export(config: &Path, n: usize, out: &Path, dcf: Option<Vec<f64>>, seed: Option<u64>) -> Result<()> {
    if n == 0 {
        return Err(CliError::Usage("--n must be at least 1".into()));
    }
    let scn = parse_scenario(config)?;
    let bank = bank_for(dcf, &scn.cfg)?;
    let seed = seed.unwrap_or(scn.file.seed);
    let m = export_dataset(&scn, &bank, &SampleDistribution::default(), n, seed, out)?;
    log::info!("exported {} samples to {}", m.n_samples, out.display());
    Ok(())
}

fn default_score_channel(m: &Manifest) -> String {
    let i = m.dcf_offsets.iter().position(|&o| o == 0.0).unwrap_or(0);
    format!("rv_{i}")
}

fn cmd_roc(
    dir: &Path,
    channel: Option<&str>,
    conf_dir: Option<&Path>,
    points: usize,
    tol: usize,
    out: Option<&Path>,
) -> Result<()> {
    let manifest = Manifest::read(dir)?;
    let cfg = derive_config(manifest.config.clone())?;
    let channel = channel.map(str::to_string).unwrap_or_else(|| default_score_channel(&manifest));
    let mut scores: Vec<RMat> = Vec::with_capacity(manifest.n_samples);
    let mut truths: Vec<GroundTruthMap> = Vec::with_capacity(manifest.n_samples);
    for entry in &manifest.samples {
        let path = dir.join(&entry.file);
        let side = Sidecar::read_for(&path)?;
        truths.push(ground_truth(&focal_paths(&side.paths), &cfg));
        scores.push(match conf_dir {
            Some(cd) => import_confidence_for(&cd.join(format!("{}.conf.bin", entry.frame_id)), &manifest)?.0.values,
            None => {
                let idx = side
                    .channel_index(&channel)
                    .ok_or_else(|| CliError::Input(format!("{}: no channel `{channel}`", path.display())))?;
                FrameContainer::read(&path)?.real_channel(idx)?
            }
        });
    }
    let thresholds = log_thresholds(&scores, points)?;
    let rows: Vec<RocRow> = roc_sweep(&scores, &truths, &thresholds, tol)?
        .into_iter()
        .map(|p| RocRow { threshold: p.threshold, p_fa: p.p_fa, p_d: p.p_d })
        .collect();
    write_rows(&rows, out)
}

fn cmd_rmse(dets: &[PathBuf], truth: &[PathBuf], out: Option<&Path>) -> Result<()> {
    if dets.len() != truth.len() {
        return Err(CliError::Usage(format!("{} detection files for {} truth frames", dets.len(), truth.len())));
    }
    let mut rows = Vec::with_capacity(dets.len());
    for (trial, (d, t)) in dets.iter().zip(truth).enumerate() {
        let lf = LoadedFrame::read(t)?;
        let cfg = &lf.cfg;
        let est: Vec<(f64, f64)> = read_rows::<DetectionRow>(d)?.iter().map(|r| (r.range_m, r.vel_mps)).collect();
        let tr: Vec<(f64, f64)> =
            lf.targets().iter().map(|p| (cfg.tau_to_range(p.tau_bar), cfg.fd_to_velocity(p.fd_bar))).collect();
        let e = rmse(&est, &tr, cfg.range_res, cfg.velocity_res())?;
        rows.push(RmseRow {
            trial,
            file: d.display().to_string(),
            range_rmse_m: e.range_m,
            velocity_rmse_mps: e.velocity_mps,
            matched: e.matched,
            n_truth: tr.len(),
        });
    }
    write_rows(&rows, out)
}

fn channel_magnitude(c: &FrameContainer, i: usize) -> Result<RMat> {
    if i >= c.n_channels as usize {
        return Err(CliError::Usage(format!("channel {i} out of range ({} present)", c.n_channels)));
    }
    Ok(match c.dtype {
        DType::Float32 => c.real_channel(i)?,
        DType::Complex64 => {
            let z: CMat = c.complex_channel(i)?;
            z.map(|v| v.norm())
        }
    })
}

fn cmd_plot(input: &Path, channel: usize, out: &Path, csv: Option<PathBuf>, floor: f64) -> Result<()> {
    if !(floor < 0.0 && floor.is_finite()) {
        return Err(CliError::Usage("--dbfloor must be negative".into()));
    }
    let c = FrameContainer::read(input)?;
    let db = db_grid(&channel_magnitude(&c, channel)?, floor);
    gray_image(&db, floor).save_with_format(out, image::ImageFormat::Png)?;
    let csv = csv.unwrap_or_else(|| out.with_extension("csv"));
    write_grid(&db, &csv)?;
    log::info!("wrote {} and {}", out.display(), csv.display());
    Ok(())
}
