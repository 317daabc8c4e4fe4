//! Communication symbols, beamformed effective symbol matrices and exact
//! synthesis of the received radar matrix.
//!
//! The received frame is built directly in matrix form after CP removal:
//!
//! ```text
//! Y = sum_i a_i D_I(f_i) F^-1 D_R*(tau_i) S_i D_v(f_i) + Z
//! ```
//!
//! Rows are fast time (sample / subcarrier index `n`), columns slow time
//! (symbol index `mu`). Every frame keeps its desired, multipath, ICI and
//! noise addends so callers can inspect each separately.

use std::f64::consts::PI;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::dft::{dft_columns, Direction};
use crate::error::{Error, Result};
use crate::params::{normalize_path, steering_vector, NormalizedPath, PathGroup, PathParams, SystemConfig};
use crate::{CMat, CVec, Complex64};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Constellation {
    Bpsk,
    Qpsk,
    #[serde(rename = "qam16")]
    Qam16,
}

impl Constellation {
    /// Unit-average-power constellation points.
    pub fn points(self) -> Vec<Complex64> {
        match self {
            Constellation::Bpsk => vec![Complex64::new(1.0, 0.0), Complex64::new(-1.0, 0.0)],
            Constellation::Qpsk => {
                let s = std::f64::consts::FRAC_1_SQRT_2;
                vec![Complex64::new(s, s), Complex64::new(-s, s), Complex64::new(-s, -s), Complex64::new(s, -s)]
            }
            Constellation::Qam16 => {
                let norm = 1.0 / 10f64.sqrt();
                let levels = [-3.0, -1.0, 1.0, 3.0];
                levels.iter().flat_map(|&i| levels.iter().map(move |&q| Complex64::new(i * norm, q * norm))).collect()
            }
        }
    }
}

impl FromStr for Constellation {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "bpsk" => Ok(Constellation::Bpsk),
            "qpsk" => Ok(Constellation::Qpsk),
            "qam16" | "16qam" | "16-qam" => Ok(Constellation::Qam16),
            other => Err(Error::UnknownConstellation(other.to_string())),
        }
    }
}

/// Per-user `N_c x N_sym` grids of i.i.d. unit-power symbols.
#[derive(Debug, Clone, PartialEq)]
pub struct SymbolTensor {
    pub grids: Vec<CMat>,
    pub constellation: Constellation,
    pub seed: u64,
}

impl SymbolTensor {
    pub fn n_users(&self) -> usize {
        self.grids.len()
    }
}

pub fn gen_symbols(
    cfg: &SystemConfig,
    n_users: usize,
    constellation: Constellation,
    seed: u64,
) -> Result<SymbolTensor> {
    if n_users == 0 {
        return Err(Error::Config("user count must be at least 1".into()));
    }
    let points = constellation.points();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let grids = (0..n_users)
        .map(|_| CMat::from_fn(cfg.n_subcarriers(), cfg.n_symbols(), |_, _| points[rng.random_range(0..points.len())]))
        .collect();
    Ok(SymbolTensor { grids, constellation, seed })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PhaseKind {
    /// `D_I(f) = diag(exp(j 2 pi f n / N_c))`.
    Ici,
    /// `D_R(tau) = diag(exp(j 2 pi tau n))`.
    Range,
    /// `D_v(f) = diag(exp(j 2 pi f alpha mu))`, length `N_sym`.
    Doppler,
}

/// Diagonal of one of the phase matrices.
pub fn phase_diag(kind: PhaseKind, value: f64, cfg: &SystemConfig) -> CVec {
    let (len, step) = match kind {
        PhaseKind::Ici => (cfg.n_subcarriers(), value / cfg.n_subcarriers() as f64),
        PhaseKind::Range => (cfg.n_subcarriers(), value),
        PhaseKind::Doppler => (cfg.n_symbols(), value * cfg.alpha),
    };
    CVec::from_fn(len, |n, _| cis(step * n as f64))
}

#[inline]
pub(crate) fn cis(cycles: f64) -> Complex64 {
    // Reduce first so large arguments keep full phase precision.
    let frac = cycles - cycles.round();
    Complex64::from_polar(1.0, 2.0 * PI * frac)
}

/// Transmit precoders per subcarrier and user, plus the receive combiner.
#[derive(Debug, Clone, PartialEq)]
pub struct BeamformerSet {
    /// `tx[n][k]`; a single entry is reused on every subcarrier.
    pub tx: Vec<Vec<CVec>>,
    pub rx: CVec,
}

impl BeamformerSet {
    pub fn new(tx: Vec<Vec<CVec>>, rx: CVec) -> Self {
        Self { tx, rx }
    }

    fn tx_at(&self, n: usize) -> &[CVec] {
        if self.tx.len() == 1 {
            &self.tx[0]
        } else {
            &self.tx[n]
        }
    }

    pub fn validate(&self, cfg: &SystemConfig, n_users: usize) -> Result<()> {
        if self.rx.len() != cfg.n_rx() {
            return Err(Error::Dimension(format!(
                "receive combiner has {} entries, expected {}",
                self.rx.len(),
                cfg.n_rx()
            )));
        }
        if self.tx.len() != 1 && self.tx.len() != cfg.n_subcarriers() {
            return Err(Error::Dimension(format!(
                "{} precoder sets for {} subcarriers",
                self.tx.len(),
                cfg.n_subcarriers()
            )));
        }
        for (n, users) in self.tx.iter().enumerate() {
            if users.len() != n_users {
                return Err(Error::Dimension(format!(
                    "subcarrier {n} has {} precoders, expected {n_users}",
                    users.len()
                )));
            }
            if let Some(v) = users.iter().find(|v| v.len() != cfg.n_tx()) {
                return Err(Error::Dimension(format!(
                    "precoder length {} on subcarrier {n}, expected {}",
                    v.len(),
                    cfg.n_tx()
                )));
            }
        }
        Ok(())
    }
}

/// Effective symbols `[S]_(p,q) = u^H A sum_k v_k^(p) s_k^(p,q)` for a
/// propagation direction with `A = a_R(aoa) a_T^H(aod)`.
#[derive(Debug, Clone, PartialEq)]
pub struct EffectiveSymbolMatrix {
    pub s: CMat,
    pub aoa_rad: f64,
    pub aod_rad: f64,
}

pub fn effective_symbols(
    aoa_rad: f64,
    aod_rad: f64,
    beams: &BeamformerSet,
    symbols: &SymbolTensor,
    cfg: &SystemConfig,
) -> Result<EffectiveSymbolMatrix> {
    beams.validate(cfg, symbols.n_users())?;
    for g in &symbols.grids {
        if g.shape() != (cfg.n_subcarriers(), cfg.n_symbols()) {
            return Err(Error::Dimension(format!(
                "symbol grid {:?}, expected {:?}",
                g.shape(),
                (cfg.n_subcarriers(), cfg.n_symbols())
            )));
        }
    }
    let a_r = steering_vector(aoa_rad, cfg.n_rx(), cfg.antenna_sep());
    let a_t = steering_vector(aod_rad, cfg.n_tx(), cfg.antenna_sep());
    let rx_gain = beams.rx.dotc(&a_r);

    let n_c = cfg.n_subcarriers();
    // Per-subcarrier, per-user scalar u^H A v_k^(n).
    let gains: Vec<Vec<Complex64>> =
        (0..n_c).map(|n| beams.tx_at(n).iter().map(|v| rx_gain * a_t.dotc(v)).collect()).collect();
    let s = CMat::from_fn(n_c, cfg.n_symbols(), |p, q| {
        gains[p].iter().zip(&symbols.grids).map(|(g, grid)| g * grid[(p, q)]).sum()
    });
    Ok(EffectiveSymbolMatrix { s, aoa_rad, aod_rad })
}

/// The propagation environment of one frame.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Scene {
    pub paths: Vec<PathParams>,
    /// Focal group treated as the desired look direction.
    pub reference_group: usize,
}

/// The four addends of a synthesized frame.
#[derive(Debug, Clone, PartialEq)]
pub struct Components {
    pub desired: CMat,
    pub multipath: CMat,
    pub ici: CMat,
    pub noise: CMat,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RxFrame {
    pub y: CMat,
    pub components: Option<Components>,
}

impl RxFrame {
    /// A frame carrying only the received matrix, e.g. one read from disk.
    pub fn from_matrix(y: CMat) -> Self {
        Self { y, components: None }
    }

    pub fn shape(&self) -> (usize, usize) {
        self.y.shape()
    }

    /// Left-multiplies `y` and every component by `diag(d)`.
    pub fn scale_rows(&self, d: &CVec) -> RxFrame {
        let apply = |m: &CMat| {
            let mut out = m.clone();
            for mut col in out.column_iter_mut() {
                for (x, w) in col.iter_mut().zip(d.iter()) {
                    *x *= w;
                }
            }
            out
        };
        RxFrame {
            y: apply(&self.y),
            components: self.components.as_ref().map(|c| Components {
                desired: apply(&c.desired),
                multipath: apply(&c.multipath),
                ici: apply(&c.ici),
                noise: apply(&c.noise),
            }),
        }
    }
}

/// ICI-free response of one path: `amp F^-1 D_R*(tau) S D_v(f)`.
pub fn path_response(np: &NormalizedPath, s: &CMat, cfg: &SystemConfig) -> CMat {
    let d_r = phase_diag(PhaseKind::Range, np.tau_bar, cfg);
    let d_v = phase_diag(PhaseKind::Doppler, np.fd_bar, cfg);
    let mut x = CMat::from_fn(s.nrows(), s.ncols(), |n, mu| np.amp * d_r[n].conj() * s[(n, mu)] * d_v[mu]);
    dft_columns(&mut x, Direction::Inverse);
    x
}

/// Synthesizes the received matrix for every path in `scene`.
///
/// `noise_seed` drives the complex Gaussian noise; it is ignored when
/// `noise_on` is false.
pub fn synthesize_rx(
    cfg: &SystemConfig,
    scene: &Scene,
    symbols: &SymbolTensor,
    beams: &BeamformerSet,
    noise_on: bool,
    noise_seed: u64,
) -> Result<RxFrame> {
    let shape = (cfg.n_subcarriers(), cfg.n_symbols());
    let zero = || CMat::zeros(shape.0, shape.1);
    let mut y = zero();
    let mut desired = zero();
    let mut multipath = zero();
    let mut ici = zero();

    // Paths sharing angles share their effective symbols.
    let mut s_cache: Vec<((u64, u64), CMat)> = Vec::new();
    for p in &scene.paths {
        let np = normalize_path(p, cfg)?;
        let key = (p.aoa_rad.to_bits(), p.aod_rad.to_bits());
        let s = match s_cache.iter().find(|(k, _)| *k == key) {
            Some((_, s)) => s,
            None => {
                let eff = effective_symbols(p.aoa_rad, p.aod_rad, beams, symbols, cfg)?;
                s_cache.push((key, eff.s));
                &s_cache.last().unwrap().1
            }
        };
        let x = path_response(&np, s, cfg);
        let d_i = phase_diag(PhaseKind::Ici, np.fd_bar, cfg);
        let target = if p.group == PathGroup::Focal(scene.reference_group) { &mut desired } else { &mut multipath };
        *target += &x;
        for mu in 0..shape.1 {
            for n in 0..shape.0 {
                let v = x[(n, mu)];
                y[(n, mu)] += d_i[n] * v;
                ici[(n, mu)] += (d_i[n] - Complex64::new(1.0, 0.0)) * v;
            }
        }
    }

    let noise = if noise_on {
        let z = complex_noise(shape.0, shape.1, cfg.noise_var(), noise_seed);
        y += &z;
        z
    } else {
        zero()
    };

    Ok(RxFrame { y, components: Some(Components { desired, multipath, ici, noise }) })
}

/// I.i.d. circular complex Gaussian entries with variance `var`.
pub fn complex_noise(rows: usize, cols: usize, var: f64, seed: u64) -> CMat {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let normal = Normal::new(0.0, (var / 2.0).sqrt()).expect("finite variance");
    CMat::from_fn(rows, cols, |_, _| Complex64::new(normal.sample(&mut rng), normal.sample(&mut rng)))
}

pub fn decompose_rx(frame: &RxFrame) -> Result<&Components> {
    frame.components.as_ref().ok_or_else(|| Error::Validation("frame carries no component bookkeeping".into()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dft::dft_matrix;
    use crate::params::{derive_config, RawConfig};

    fn small_cfg() -> SystemConfig {
        derive_config(RawConfig {
            n_tx: 4,
            n_rx: 4,
            n_subcarriers: 32,
            n_symbols: 8,
            noise_var: 1e-2,
            ..RawConfig::default()
        })
        .unwrap()
    }

    fn unit_beams(cfg: &SystemConfig, n_users: usize, angle: f64) -> BeamformerSet {
        let a_t = steering_vector(angle, cfg.n_tx(), cfg.antenna_sep()) / Complex64::from((cfg.n_tx() as f64).sqrt());
        let a_r = steering_vector(angle, cfg.n_rx(), cfg.antenna_sep()) / Complex64::from((cfg.n_rx() as f64).sqrt());
        BeamformerSet::new(vec![vec![a_t; n_users]], a_r)
    }

    fn path(range_m: f64, velocity_mps: f64, angle: f64, group: PathGroup) -> PathParams {
        PathParams { range_m, velocity_mps, aoa_rad: angle, aod_rad: angle, reflect: Complex64::new(0.8, -0.3), group }
    }

    #[test]
    fn qpsk_is_unit_modulus() {
        let cfg = small_cfg();
        let sym = gen_symbols(&cfg, 2, Constellation::Qpsk, 9).unwrap();
        assert!(sym.grids.iter().all(|g| g.iter().all(|s| (s.norm() - 1.0).abs() < 1e-12)));
    }

    #[test]
    fn qam16_unit_mean_power() {
        let cfg = derive_config(RawConfig { n_subcarriers: 1000, n_symbols: 1000, ..RawConfig::default() }).unwrap();
        let sym = gen_symbols(&cfg, 1, Constellation::Qam16, 5).unwrap();
        let p = sym.grids[0].iter().map(|s| s.norm_sqr()).sum::<f64>() / 1e6;
        assert!((p - 1.0).abs() < 0.01, "mean power {p}");
    }

    #[test]
    fn symbols_deterministic_and_checked() {
        let cfg = small_cfg();
        let a = gen_symbols(&cfg, 2, Constellation::Qam16, 42).unwrap();
        let b = gen_symbols(&cfg, 2, Constellation::Qam16, 42).unwrap();
        assert_eq!(a, b);
        assert!(gen_symbols(&cfg, 0, Constellation::Qpsk, 1).is_err());
        assert!(matches!("8psk".parse::<Constellation>(), Err(Error::UnknownConstellation(_))));
    }

    #[test]
    fn phase_diag_examples() {
        let cfg = small_cfg();
        assert!(phase_diag(PhaseKind::Ici, 0.0, &cfg).iter().all(|x| (x - Complex64::new(1.0, 0.0)).norm() < 1e-15));
        assert!(phase_diag(PhaseKind::Range, 1.0, &cfg).iter().all(|x| (x - Complex64::new(1.0, 0.0)).norm() < 1e-12));
        let cfg4 = derive_config(RawConfig { n_symbols: 4, ..RawConfig::default() }).unwrap();
        // Quarter-cycle steps.
        let d = phase_diag(PhaseKind::Doppler, 0.25 / cfg4.alpha, &cfg4);
        let expect =
            [Complex64::new(1.0, 0.0), Complex64::new(0.0, 1.0), Complex64::new(-1.0, 0.0), Complex64::new(0.0, -1.0)];
        for (x, e) in d.iter().zip(expect) {
            assert!((x - e).norm() < 1e-12);
        }
        // Half-cycle steps alternate sign.
        let d = phase_diag(PhaseKind::Doppler, 0.5 / cfg4.alpha, &cfg4);
        for (m, x) in d.iter().enumerate() {
            let e = if m % 2 == 0 { 1.0 } else { -1.0 };
            assert!((x - Complex64::new(e, 0.0)).norm() < 1e-12);
        }
    }

    #[test]
    fn effective_symbols_matched_beams() {
        let cfg = small_cfg();
        let angle = 0.3;
        let beams = unit_beams(&cfg, 1, angle);
        let ones = SymbolTensor {
            grids: vec![CMat::from_element(cfg.n_subcarriers(), cfg.n_symbols(), Complex64::new(1.0, 0.0))],
            constellation: Constellation::Bpsk,
            seed: 0,
        };
        let eff = effective_symbols(angle, angle, &beams, &ones, &cfg).unwrap();
        let expect = ((cfg.n_rx() * cfg.n_tx()) as f64).sqrt();
        assert!(eff.s.iter().all(|s| (s - Complex64::new(expect, 0.0)).norm() < 1e-10));
    }

    #[test]
    fn effective_symbols_null_and_mismatch() {
        let cfg = small_cfg();
        let sym = gen_symbols(&cfg, 1, Constellation::Qpsk, 1).unwrap();
        let zero = BeamformerSet::new(vec![vec![CVec::zeros(cfg.n_tx())]], CVec::zeros(cfg.n_rx()));
        let eff = effective_symbols(0.1, 0.1, &zero, &sym, &cfg).unwrap();
        assert_eq!(eff.s.norm(), 0.0);
        let wrong = BeamformerSet::new(vec![vec![CVec::zeros(3)]], CVec::zeros(cfg.n_rx()));
        assert!(matches!(effective_symbols(0.1, 0.1, &wrong, &sym, &cfg), Err(Error::Dimension(_))));
    }

    #[test]
    fn static_path_has_no_ici_and_reconstructs() {
        let cfg = small_cfg();
        let sym = gen_symbols(&cfg, 2, Constellation::Qpsk, 3).unwrap();
        let beams = unit_beams(&cfg, 2, 0.2);
        let scene = Scene {
            paths: vec![path(30.0, 0.0, 0.2, PathGroup::Focal(0)), path(90.0, 0.0, -0.5, PathGroup::Clutter)],
            reference_group: 0,
        };
        let frame = synthesize_rx(&cfg, &scene, &sym, &beams, true, 11).unwrap();
        let c = decompose_rx(&frame).unwrap();
        assert_eq!(c.ici.norm(), 0.0);
        let sum = &c.desired + &c.multipath + &c.ici + &c.noise;
        assert!((sum - &frame.y).norm() < 1e-10 * frame.y.norm());
        assert!(c.multipath.norm() > 0.0);
    }

    #[test]
    fn noise_off_and_empty_scene() {
        let cfg = small_cfg();
        let sym = gen_symbols(&cfg, 1, Constellation::Qpsk, 3).unwrap();
        let beams = unit_beams(&cfg, 1, 0.0);
        let frame = synthesize_rx(&cfg, &Scene::default(), &sym, &beams, false, 0).unwrap();
        assert_eq!(frame.y.norm(), 0.0);
        assert_eq!(decompose_rx(&frame).unwrap().noise.norm(), 0.0);
        assert!(decompose_rx(&RxFrame::from_matrix(frame.y.clone())).is_err());
    }

    #[test]
    fn noise_variance() {
        let z = complex_noise(200, 200, 0.5, 1);
        let var = z.iter().map(|x| x.norm_sqr()).sum::<f64>() / 40_000.0;
        assert!((var - 0.5).abs() < 0.02, "variance {var}");
    }

    #[test]
    fn moving_path_ici_matches_dense_oracle() {
        let cfg = small_cfg();
        let sym = gen_symbols(&cfg, 2, Constellation::Qam16, 8).unwrap();
        let beams = unit_beams(&cfg, 2, 0.1);
        let p = path(45.0, -150.0, 0.1, PathGroup::Focal(0));
        let scene = Scene { paths: vec![p.clone()], reference_group: 0 };
        let frame = synthesize_rx(&cfg, &scene, &sym, &beams, false, 0).unwrap();
        let ici = &frame.components.as_ref().unwrap().ici;

        // Dense triple product, independent of the FFT path.
        let np = normalize_path(&p, &cfg).unwrap();
        let s = effective_symbols(0.1, 0.1, &beams, &sym, &cfg).unwrap().s;
        let n_c = cfg.n_subcarriers();
        let finv = dft_matrix(n_c).adjoint();
        let d_i = CMat::from_diagonal(&phase_diag(PhaseKind::Ici, np.fd_bar, &cfg));
        let d_r = CMat::from_diagonal(&phase_diag(PhaseKind::Range, np.tau_bar, &cfg)).conjugate();
        let d_v = CMat::from_diagonal(&phase_diag(PhaseKind::Doppler, np.fd_bar, &cfg));
        let eye = CMat::identity(n_c, n_c);
        let oracle = (d_i - eye) * finv * d_r * s * d_v;
        let expected = oracle.norm() * np.amp.norm();
        assert!(ici.norm() > 0.0);
        assert!((ici.norm() - expected).abs() < 1e-10 * expected);
    }

    #[test]
    fn synthesis_is_linear() {
        let cfg = small_cfg();
        let sym = gen_symbols(&cfg, 2, Constellation::Qpsk, 4).unwrap();
        let beams = unit_beams(&cfg, 2, 0.0);
        let a = path(12.0, 40.0, 0.0, PathGroup::Focal(0));
        let b = path(60.0, -90.0, 0.4, PathGroup::Clutter);
        let one = |paths: Vec<PathParams>| {
            synthesize_rx(&cfg, &Scene { paths, reference_group: 0 }, &sym, &beams, false, 0).unwrap().y
        };
        let joint = one(vec![a.clone(), b.clone()]);
        let split = one(vec![a]) + one(vec![b]);
        assert!((joint - &split).norm() < 1e-12 * split.norm());
    }

    #[test]
    fn ici_grows_with_doppler() {
        let cfg = small_cfg();
        let sym = gen_symbols(&cfg, 1, Constellation::Qpsk, 6).unwrap();
        let beams = unit_beams(&cfg, 1, 0.0);
        let mut last = 0.0;
        for i in 0..=20 {
            let fd = 0.4 / cfg.alpha * i as f64 / 20.0;
            let v = cfg.fd_to_velocity(fd);
            let scene = Scene { paths: vec![path(20.0, v, 0.0, PathGroup::Focal(0))], reference_group: 0 };
            let f = synthesize_rx(&cfg, &scene, &sym, &beams, false, 0).unwrap();
            let norm = f.components.unwrap().ici.norm();
            assert!(norm >= last - 1e-12, "ICI norm dropped at step {i}");
            last = norm;
        }
    }
}
