//! Training-set export and confidence-map import.
//!
//! An export directory holds `sample_NNNNN.bin` containers, each with one
//! float32 magnitude map per DCF filter followed by the binary ground-truth
//! grid, their sidecars, and a `manifest.json` written after every sample.

use std::fs;
use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::detect::{ground_truth, ConfidenceMap};
use crate::error::{Error, Result};
use crate::io::container::{ensure_free_space, FrameContainer, Sidecar, HEADER_LEN};
use crate::io::scenario::Scenario;
use crate::params::{cell_of, normalize_path, steering_vector, PathGroup, PathParams, RawConfig, SystemConfig};
use crate::radar::{pipeline, DcfBank};
use crate::sim::{design_beams, render_frame, sub_seed};
use crate::waveform::BeamformerSet;
use crate::{Complex64, RMat};

pub const MANIFEST_NAME: &str = "manifest.json";
pub const MANIFEST_FORMAT: &str = "isac-dataset/1";
pub const TRUTH_CHANNEL: &str = "truth";
const STREAM_TARGETS: u64 = 3;
const SAMPLE_STREAM_BASE: u64 = 1 << 32;
const MAX_PLACEMENT_TRIES: usize = 10_000;

/// How targets are drawn for each exported sample.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SampleDistribution {
    pub min_targets: usize,
    pub max_targets: usize,
    pub min_range_m: f64,
    /// Upper range limit as a fraction of the unambiguous range.
    pub max_range_fraction: f64,
    /// Per-sample SNR `|a|^2 E|S|^2 / sigma^2` is uniform in dB over
    /// `[snr_min_db, snr_min_db + snr_span_db]`, i.e. `|a|` is log-uniform.
    pub snr_min_db: f64,
    pub snr_span_db: f64,
    pub noise: bool,
}

impl Default for SampleDistribution {
    fn default() -> Self {
        Self {
            min_targets: 1,
            max_targets: 5,
            min_range_m: 10.0,
            max_range_fraction: 0.125,
            snr_min_db: -10.0,
            snr_span_db: 30.0,
            noise: true,
        }
    }
}

impl SampleDistribution {
    pub fn validate(&self, cfg: &SystemConfig) -> Result<()> {
        let hi = self.max_range_fraction * cfg.unambiguous_range();
        if self.min_targets == 0 || self.min_targets > self.max_targets {
            return Err(Error::Config(format!(
                "target count range {}..={} is empty or starts at zero",
                self.min_targets, self.max_targets
            )));
        }
        if !(self.min_range_m >= 0.0 && self.min_range_m < hi && self.max_range_fraction <= 1.0) {
            return Err(Error::Config(format!("target range [{}, {hi}) m is empty", self.min_range_m)));
        }
        if !(self.snr_min_db.is_finite() && self.snr_span_db >= 0.0) {
            return Err(Error::Config("SNR interval must be finite".into()));
        }
        let cells = cfg.n_subcarriers() * cfg.n_symbols();
        if self.max_targets > cells {
            return Err(Error::Config("more targets than grid cells".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SampleEntry {
    pub frame_id: String,
    /// Relative to the manifest directory.
    pub file: String,
    pub seed: u64,
    pub n_targets: usize,
    pub sha256: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Manifest {
    pub format: String,
    pub seed: u64,
    pub n_samples: usize,
    pub config: RawConfig,
    pub config_sha256: String,
    pub dcf_offsets: Vec<f64>,
    pub focal_angle_deg: f64,
    pub constellation: String,
    pub channels: Vec<String>,
    pub distribution: SampleDistribution,
    pub samples: Vec<SampleEntry>,
}

impl Manifest {
    pub fn read(dir: &Path) -> Result<Self> {
        let text = fs::read_to_string(dir.join(MANIFEST_NAME))?;
        let de = &mut serde_json::Deserializer::from_str(&text);
        let m: Manifest = serde_path_to_error::deserialize(de)
            .map_err(|e| Error::Parse { field: e.path().to_string(), msg: e.inner().to_string() })?;
        if m.format != MANIFEST_FORMAT {
            return Err(Error::Format(format!("unsupported manifest format {:?}", m.format)));
        }
        if m.samples.len() != m.n_samples {
            return Err(Error::Validation(format!(
                "manifest lists {} samples but declares {}",
                m.samples.len(),
                m.n_samples
            )));
        }
        Ok(m)
    }

    pub fn entry(&self, frame_id: &str) -> Option<&SampleEntry> {
        self.samples.iter().find(|s| s.frame_id == frame_id)
    }
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

pub fn config_hash(raw: &RawConfig) -> Result<String> {
    Ok(sha256_hex(serde_json::to_string(raw)?.as_bytes()))
}

pub fn frame_id(i: usize) -> String {
    format!("sample_{i:05}")
}

/// `E|S|^2` toward `angle` for unit-power symbols.
pub fn expected_symbol_power(beams: &BeamformerSet, angle_rad: f64, cfg: &SystemConfig) -> f64 {
    let a_r = steering_vector(angle_rad, cfg.n_rx(), cfg.antenna_sep());
    let a_t = steering_vector(angle_rad, cfg.n_tx(), cfg.antenna_sep());
    let rx = beams.rx.dotc(&a_r).norm_sqr();
    let total: f64 = beams.tx.iter().flat_map(|u| u.iter()).map(|v| a_t.dotc(v).norm_sqr()).sum();
    rx * total / beams.tx.len() as f64
}

/// Draws targets at `angle_rad` whose coarse cells are pairwise distinct.
pub fn draw_targets(
    dist: &SampleDistribution,
    cfg: &SystemConfig,
    angle_rad: f64,
    symbol_power: f64,
    seed: u64,
) -> Result<Vec<PathParams>> {
    dist.validate(cfg)?;
    if symbol_power.is_nan() || symbol_power <= 0.0 {
        return Err(Error::Validation("beams deliver no power toward the focal angle".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let count = rng.random_range(dist.min_targets..=dist.max_targets);
    let hi = dist.max_range_fraction * cfg.unambiguous_range();
    let mut out: Vec<PathParams> = Vec::with_capacity(count);
    let mut cells = Vec::with_capacity(count);
    let mut tries = 0;
    while out.len() < count {
        tries += 1;
        if tries > MAX_PLACEMENT_TRIES {
            return Err(Error::Validation(format!("could not place {count} targets in distinct cells")));
        }
        let range_m = rng.random_range(dist.min_range_m..hi);
        let velocity_mps = rng.random_range(-cfg.v_max..cfg.v_max);
        let snr_db = dist.snr_min_db + dist.snr_span_db * rng.random::<f64>();
        let phase = rng.random_range(0.0..std::f64::consts::TAU);
        let mag = (10f64.powf(snr_db / 10.0) * cfg.noise_var() / symbol_power).sqrt();
        let p = PathParams {
            range_m,
            velocity_mps,
            aoa_rad: angle_rad,
            aod_rad: angle_rad,
            reflect: Complex64::from_polar(mag, phase),
            group: PathGroup::Focal(0),
        };
        let cell = cell_of(&normalize_path(&p, cfg)?, cfg);
        if !cells.contains(&cell) {
            cells.push(cell);
            out.push(p);
        }
    }
    Ok(out)
}

/// Writes `n_samples` samples and the manifest into `out_dir`.
///
/// Beamformers are designed once from `base`; its targets and clutter are
/// ignored. The output depends only on the arguments.
pub fn export_dataset(
    base: &Scenario,
    bank: &DcfBank,
    dist: &SampleDistribution,
    n_samples: usize,
    seed: u64,
    out_dir: &Path,
) -> Result<Manifest> {
    let cfg = &base.cfg;
    dist.validate(cfg)?;
    fs::create_dir_all(out_dir)?;
    let cells = cfg.n_subcarriers() * cfg.n_symbols();
    let per_sample = HEADER_LEN + cells * (bank.len() + 1) * 4 + 64 * 1024;
    ensure_free_space(out_dir, (per_sample * n_samples) as u64 + 1024 * 1024)?;

    let design = design_beams(base)?;
    let angle = base.focal_angles_rad[0];
    let symbol_power = expected_symbol_power(&design.beams, angle, cfg);
    let mut channels: Vec<String> = (0..bank.len()).map(|i| format!("rv_{i}")).collect();
    channels.push(TRUTH_CHANNEL.into());

    let samples = (0..n_samples)
        .into_par_iter()
        .map(|i| {
            let s_seed = sub_seed(seed, SAMPLE_STREAM_BASE + i as u64);
            let targets = draw_targets(dist, cfg, angle, symbol_power, sub_seed(s_seed, STREAM_TARGETS))?;
            let bundle = render_frame(cfg, angle, &design.beams, &targets, base.constellation, dist.noise, s_seed)?;
            let maps = pipeline(&bundle.frame, bank, &bundle.s_ref, cfg)?;
            let truth = ground_truth(&bundle.truth, cfg);
            let truth_real: RMat = truth.grid.map(f64::from);
            let mut grids: Vec<&RMat> = maps.iter().map(|m| &m.mag).collect();
            grids.push(&truth_real);
            let bytes = FrameContainer::from_real(&grids)?.to_bytes();

            let id = frame_id(i);
            let file = format!("{id}.bin");
            let path = out_dir.join(&file);
            fs::write(&path, &bytes)?;
            Sidecar {
                frame_id: id.clone(),
                kind: "sample".into(),
                channels: channels.clone(),
                config: Some(cfg.raw().clone()),
                paths: bundle.truth.clone(),
                dcf_offsets: bank.offsets().to_vec(),
                focal_angles_deg: vec![angle.to_degrees()],
                seed: Some(s_seed),
                provenance: [("source".to_string(), "export_dataset".to_string())].into(),
            }
            .write_for(&path)?;
            Ok(SampleEntry { frame_id: id, file, seed: s_seed, n_targets: targets.len(), sha256: sha256_hex(&bytes) })
        })
        .collect::<Result<Vec<_>>>()?;

    let manifest = Manifest {
        format: MANIFEST_FORMAT.into(),
        seed,
        n_samples,
        config: cfg.raw().clone(),
        config_sha256: config_hash(cfg.raw())?,
        dcf_offsets: bank.offsets().to_vec(),
        focal_angle_deg: angle.to_degrees(),
        constellation: base.file.constellation.clone(),
        channels,
        distribution: dist.clone(),
        samples,
    };
    fs::write(out_dir.join(MANIFEST_NAME), serde_json::to_string_pretty(&manifest)? + "\n")?;
    Ok(manifest)
}

/// Writes a confidence map as a one-channel float32 container with sidecar.
pub fn export_confidence(map: &ConfidenceMap, path: &Path) -> Result<()> {
    FrameContainer::from_real(&[&map.values])?.write(path)?;
    Sidecar {
        frame_id: map.frame_id.clone().unwrap_or_default(),
        kind: "confidence".into(),
        channels: vec!["confidence".into()],
        ..Sidecar::default()
    }
    .write_for(path)
}

/// Reads a one-channel float32 confidence container. The frame id comes
/// from the sidecar when present.
pub fn import_confidence(path: &Path) -> Result<ConfidenceMap> {
    let c = FrameContainer::read(path)?;
    if c.n_channels != 1 || c.dtype != crate::io::container::DType::Float32 {
        return Err(Error::Format(format!(
            "confidence container must hold one float32 channel, found {} of {:?}",
            c.n_channels, c.dtype
        )));
    }
    let frame_id = Sidecar::try_read_for(path)?.map(|s| s.frame_id).filter(|id| !id.is_empty());
    ConfidenceMap::new(c.real_channel(0)?, frame_id)
}

/// Imports a confidence map and checks it against its manifest sample.
pub fn import_confidence_for(path: &Path, manifest: &Manifest) -> Result<(ConfidenceMap, SampleEntry)> {
    let map = import_confidence(path)?;
    let id =
        map.frame_id.clone().ok_or_else(|| Error::Validation(format!("{} carries no frame id", path.display())))?;
    let entry = manifest.entry(&id).ok_or_else(|| Error::Validation(format!("frame id {id} not in manifest")))?.clone();
    let want = (manifest.config.n_subcarriers, manifest.config.n_symbols);
    if map.values.shape() != want {
        return Err(Error::Dimension(format!("confidence map {:?}, frames are {want:?}", map.values.shape())));
    }
    Ok((map, entry))
}

/// Paths of all sample containers listed in a manifest.
pub fn sample_paths(dir: &Path, manifest: &Manifest) -> Vec<PathBuf> {
    manifest.samples.iter().map(|s| dir.join(&s.file)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::glrt::dcfnet_lr;
    use crate::io::scenario::parse_scenario_str;

    fn base() -> Scenario {
        parse_scenario_str(
            r#"{"config": {"n_tx": 4, "n_rx": 4, "n_subcarriers": 64, "n_symbols": 16},
                "users": {"count": 2, "seed": 1}, "focal_angles_deg": [0.0],
                "beamformer": {"mode": "zero_forcing"}}"#,
        )
        .unwrap()
    }

    fn read_all(dir: &Path) -> Vec<(String, Vec<u8>)> {
        let mut v: Vec<_> = fs::read_dir(dir)
            .unwrap()
            .map(|e| {
                let e = e.unwrap();
                (e.file_name().to_string_lossy().into_owned(), fs::read(e.path()).unwrap())
            })
            .collect();
        v.sort();
        v
    }

    #[test]
    fn one_sample_three_filters_gives_four_channels() {
        let scn = base();
        let dir = tempfile::tempdir().unwrap();
        let bank = DcfBank::default_for(&scn.cfg);
        let m = export_dataset(&scn, &bank, &SampleDistribution::default(), 1, 7, dir.path()).unwrap();
        assert_eq!(m.samples.len(), 1);
        let c = FrameContainer::read(&dir.path().join(&m.samples[0].file)).unwrap();
        assert_eq!(c.n_channels, 4);
        assert_eq!(c.shape(), (64, 16));
        assert_eq!(Manifest::read(dir.path()).unwrap(), m);
        assert_eq!(m.config_sha256, config_hash(scn.cfg.raw()).unwrap());
        assert_eq!(m.config_sha256.len(), 64);
    }

    #[test]
    fn same_seed_is_byte_identical() {
        let scn = base();
        let bank = DcfBank::default_for(&scn.cfg);
        let (a, b, c) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
        export_dataset(&scn, &bank, &SampleDistribution::default(), 6, 3, a.path()).unwrap();
        export_dataset(&scn, &bank, &SampleDistribution::default(), 6, 3, b.path()).unwrap();
        export_dataset(&scn, &bank, &SampleDistribution::default(), 6, 4, c.path()).unwrap();
        assert_eq!(read_all(a.path()), read_all(b.path()));
        assert_ne!(read_all(a.path()), read_all(c.path()));
    }

    #[test]
    fn truth_channel_counts_targets_and_matches_regeneration() {
        let scn = base();
        let dir = tempfile::tempdir().unwrap();
        let bank = DcfBank::new(vec![0.0]).unwrap();
        let dist = SampleDistribution { noise: false, ..SampleDistribution::default() };
        let m = export_dataset(&scn, &bank, &dist, 8, 21, dir.path()).unwrap();
        let design = design_beams(&scn).unwrap();
        let sp = expected_symbol_power(&design.beams, 0.0, &scn.cfg);
        for e in &m.samples {
            let path = dir.path().join(&e.file);
            let c = FrameContainer::read(&path).unwrap();
            let truth = c.real_channel(1).unwrap();
            let ones = truth.iter().filter(|&&v| v == 1.0).count();
            assert_eq!(truth.iter().filter(|&&v| v != 0.0).count(), ones);
            assert_eq!(ones, e.n_targets);
            assert!((1..=5).contains(&e.n_targets));

            let targets = draw_targets(&dist, &scn.cfg, 0.0, sp, sub_seed(e.seed, STREAM_TARGETS)).unwrap();
            assert_eq!(targets.len(), e.n_targets);
            let side = Sidecar::read_for(&path).unwrap();
            for (p, np) in targets.iter().zip(&side.paths) {
                let (r, d) = cell_of(np, &scn.cfg);
                assert_eq!(truth[(r, d)], 1.0);
                assert!((scn.cfg.tau_to_range(np.tau_bar) - p.range_m).abs() < 1e-9);
                assert!(p.range_m >= 10.0 && p.range_m < scn.cfg.unambiguous_range() / 8.0);
                assert!(p.velocity_mps.abs() < scn.cfg.v_max);
            }
            assert_eq!(e.sha256, sha256_hex(&fs::read(&path).unwrap()));
        }
    }

    #[test]
    fn snr_follows_log_uniform_magnitude() {
        let scn = base();
        let beams = design_beams(&scn).unwrap().beams;
        let sp = expected_symbol_power(&beams, 0.0, &scn.cfg);
        let dist = SampleDistribution { min_targets: 5, max_targets: 5, ..SampleDistribution::default() };
        let mut snrs = Vec::new();
        for s in 0..200 {
            for p in draw_targets(&dist, &scn.cfg, 0.0, sp, s).unwrap() {
                snrs.push(10.0 * (p.reflect.norm_sqr() * sp / scn.cfg.noise_var()).log10());
            }
        }
        assert!(snrs.iter().all(|&x| (-10.0 - 1e-9..=20.0 + 1e-9).contains(&x)));
        let mean = snrs.iter().sum::<f64>() / snrs.len() as f64;
        assert!((mean - 5.0).abs() < 1.0, "{mean}");
    }

    #[test]
    fn confidence_round_trip_and_range_check() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("c.bin");
        let values = RMat::from_fn(64, 16, |r, c| ((r * 16 + c) % 17) as f32 as f64 / 16.0);
        let map = ConfidenceMap::new(values, Some("sample_00000".into())).unwrap();
        export_confidence(&map, &path).unwrap();
        assert_eq!(import_confidence(&path).unwrap(), map);

        let mut bad = map.values.clone();
        bad[(3, 3)] = 1.2;
        FrameContainer::from_real(&[&bad]).unwrap().write(&path).unwrap();
        assert!(matches!(import_confidence(&path), Err(Error::Validation(_))));

        let two = FrameContainer::from_real(&[&map.values, &map.values]).unwrap();
        two.write(&path).unwrap();
        assert!(matches!(import_confidence(&path), Err(Error::Format(_))));
    }

    #[test]
    fn confidence_binds_to_manifest() {
        let scn = base();
        let dir = tempfile::tempdir().unwrap();
        let bank = DcfBank::new(vec![0.0]).unwrap();
        let m = export_dataset(&scn, &bank, &SampleDistribution::default(), 2, 5, dir.path()).unwrap();
        let path = dir.path().join("conf.bin");
        let map = ConfidenceMap::new(RMat::zeros(64, 16), Some("sample_00001".into())).unwrap();
        export_confidence(&map, &path).unwrap();
        let (_, entry) = import_confidence_for(&path, &m).unwrap();
        assert_eq!(entry.frame_id, "sample_00001");
        let stray = ConfidenceMap::new(RMat::zeros(64, 16), Some("sample_00099".into())).unwrap();
        export_confidence(&stray, &path).unwrap();
        assert!(import_confidence_for(&path, &m).is_err());
    }

    #[test]
    fn all_zero_map_yields_no_refinements() {
        let scn = base();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("z.bin");
        export_confidence(&ConfidenceMap::new(RMat::zeros(64, 16), None).unwrap(), &path).unwrap();
        let map = import_confidence(&path).unwrap();
        let design = design_beams(&scn).unwrap();
        let b = render_frame(&scn.cfg, 0.0, &design.beams, &[], scn.constellation, true, 1).unwrap();
        for delta in [1e-6, 0.5, 0.999] {
            assert!(dcfnet_lr(&map, &b.frame.y, &b.s_ref.s, &scn.cfg, delta, 4).unwrap().is_empty());
        }
    }
}
