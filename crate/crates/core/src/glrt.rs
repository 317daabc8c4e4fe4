//! GLRT delay-Doppler estimation: steered templates, the normalized
//! statistic, full-grid ML search with successive cancellation, and local
//! sub-grid refinement seeded by confidence maps.
//!
//! For a hypothesis `(f, tau)` the template inner product factors as
//!
//! ```text
//! Xi^H y = sum_n exp(j 2 pi tau n) g_n,
//! g_n    = sum_mu conj(S[n,mu]) [F D_I*(f) Y]_(n,mu) exp(-j 2 pi f alpha mu)
//! ```
//!
//! so one Doppler hypothesis costs `N_sym` column FFTs, after which every
//! on-grid delay falls out of a single inverse FFT of `g`. The template
//! energy equals `||S||_F^2` for every hypothesis.

use rayon::prelude::*;

use crate::detect::ConfidenceMap;
use crate::dft::{dft_columns, dft_in_place, Direction};
use crate::error::{Error, Result};
use crate::params::{signed_bin, SystemConfig};
use crate::waveform::{cis, phase_diag, PhaseKind};
use crate::{CMat, CVec, Complex64};

pub const DEFAULT_DELTA: f64 = 0.5;
pub const DEFAULT_P_MAX: usize = 10;

/// Stacked template `[Psi_0; ...; Psi_{N_sym-1}]`.
#[derive(Debug, Clone, PartialEq)]
pub struct SteeredTemplate {
    pub xi: CVec,
    pub fd_bar: f64,
    pub tau_bar: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RefinedDetection {
    pub tau_bar: f64,
    pub fd_bar: f64,
    pub amp: Complex64,
    pub stat: f64,
    /// Statistic evaluations spent producing this estimate.
    pub eval_count: usize,
}

impl RefinedDetection {
    pub fn range_m(&self, cfg: &SystemConfig) -> f64 {
        cfg.tau_to_range(self.tau_bar)
    }

    pub fn velocity_mps(&self, cfg: &SystemConfig) -> f64 {
        cfg.fd_to_velocity(self.fd_bar)
    }
}

pub fn total_evals(dets: &[RefinedDetection]) -> usize {
    dets.iter().map(|d| d.eval_count).sum()
}

/// Column stacking: column `mu` occupies `[mu N_c, (mu+1) N_c)`.
pub fn vectorize(y: &CMat) -> CVec {
    CVec::from_column_slice(y.as_slice())
}

fn unvectorize(y_vec: &CVec, rows: usize, cols: usize) -> Result<CMat> {
    if y_vec.len() != rows * cols {
        return Err(Error::Dimension(format!("vector of length {} cannot hold a {rows}x{cols} frame", y_vec.len())));
    }
    Ok(CMat::from_column_slice(rows, cols, y_vec.as_slice()))
}

fn template_matrix(fd_bar: f64, tau_bar: f64, s: &CMat, cfg: &SystemConfig) -> CMat {
    let d_r = phase_diag(PhaseKind::Range, tau_bar, cfg);
    let d_v = phase_diag(PhaseKind::Doppler, fd_bar, cfg);
    let d_i = phase_diag(PhaseKind::Ici, fd_bar, cfg);
    let mut x = CMat::from_fn(s.nrows(), s.ncols(), |n, mu| d_r[n].conj() * s[(n, mu)]);
    dft_columns(&mut x, Direction::Inverse);
    for mu in 0..x.ncols() {
        for n in 0..x.nrows() {
            x[(n, mu)] *= d_i[n] * d_v[mu];
        }
    }
    x
}

pub fn build_template(fd_bar: f64, tau_bar: f64, s: &CMat, cfg: &SystemConfig) -> SteeredTemplate {
    SteeredTemplate { xi: vectorize(&template_matrix(fd_bar, tau_bar, s, cfg)), fd_bar, tau_bar }
}

/// Least-squares amplitude `Xi^H y / ||Xi||^2`.
pub fn amp_hat(y_vec: &CVec, t: &SteeredTemplate) -> Result<Complex64> {
    let e = t.xi.norm_squared();
    if e == 0.0 {
        return Err(Error::Singular("zero template".into()));
    }
    Ok(t.xi.dotc(y_vec) / e)
}

/// Normalized statistic `|Xi^H y|^2 / ||Xi||^2`; zero for a zero template.
pub fn glrt_stat(y_vec: &CVec, t: &SteeredTemplate) -> f64 {
    let e = t.xi.norm_squared();
    if e == 0.0 {
        return 0.0;
    }
    t.xi.dotc(y_vec).norm_sqr() / e
}

/// Sub-grid offsets in units of one coarse cell, always including 0.
pub fn subgrid_offsets(m: usize) -> Vec<f64> {
    let m = m.max(1);
    (0..m).map(|i| (i as f64 - (m / 2) as f64) / m as f64).collect()
}

#[derive(Clone, Copy)]
struct Best {
    stat: f64,
    tau: f64,
    fd: f64,
    cross: Complex64,
}

impl Best {
    const NONE: Best =
        Best { stat: f64::NEG_INFINITY, tau: f64::INFINITY, fd: f64::INFINITY, cross: Complex64::new(0.0, 0.0) };

    /// Whether `other` displaces `self`; ties go to the smaller `(tau, fd)`.
    fn loses_to(&self, other: &Best) -> bool {
        other.stat > self.stat || (other.stat == self.stat && (other.tau, other.fd) < (self.tau, self.fd))
    }

    fn better(self, other: Best) -> Best {
        if self.loses_to(&other) {
            other
        } else {
            self
        }
    }
}

/// Fast statistic evaluation on one received frame.
struct Evaluator<'a> {
    y: &'a CMat,
    s: &'a CMat,
    energy: f64,
    cfg: &'a SystemConfig,
}

impl<'a> Evaluator<'a> {
    fn new(y: &'a CMat, s: &'a CMat, cfg: &'a SystemConfig) -> Result<Self> {
        if y.shape() != s.shape() || y.shape() != (cfg.n_subcarriers(), cfg.n_symbols()) {
            return Err(Error::Dimension(format!(
                "frame {:?}, symbols {:?}, config {:?}",
                y.shape(),
                s.shape(),
                (cfg.n_subcarriers(), cfg.n_symbols())
            )));
        }
        Ok(Self { y, s, energy: s.norm_squared(), cfg })
    }

    /// `g_n` for one Doppler hypothesis.
    fn doppler_profile(&self, fd: f64) -> Vec<Complex64> {
        let d_i = phase_diag(PhaseKind::Ici, fd, self.cfg);
        let mut z = self.y.clone();
        for mut col in z.column_iter_mut() {
            col.component_mul_assign(&d_i.map(|w| w.conj()));
        }
        dft_columns(&mut z, Direction::Forward);
        let step = fd * self.cfg.alpha;
        let mut g = vec![Complex64::new(0.0, 0.0); z.nrows()];
        for mu in 0..z.ncols() {
            let rot = cis(-step * mu as f64);
            for (n, gn) in g.iter_mut().enumerate() {
                *gn += self.s[(n, mu)].conj() * z[(n, mu)] * rot;
            }
        }
        g
    }

    fn finish(&self, tau: f64, fd: f64, cross: Complex64) -> Best {
        let stat = if self.energy > 0.0 { cross.norm_sqr() / self.energy } else { 0.0 };
        Best { stat, tau, fd, cross }
    }

    fn coarse_fd(&self, q: usize) -> f64 {
        let n_sym = self.cfg.n_symbols();
        signed_bin(q, n_sym) as f64 / (self.cfg.alpha * n_sym as f64)
    }

    /// Best coarse-grid hypothesis, `N_c * N_sym` evaluations.
    fn coarse_argmax(&self) -> (usize, usize) {
        let n_c = self.cfg.n_subcarriers();
        let best = (0..self.cfg.n_symbols())
            .into_par_iter()
            .map(|q| {
                let fd = self.coarse_fd(q);
                let mut g = self.doppler_profile(fd);
                // sum_n exp(+j 2 pi p n / N_c) g_n = sqrt(N_c) * unitary IDFT.
                dft_in_place(&mut g, Direction::Inverse);
                let scale = (n_c as f64).sqrt();
                let mut local = (Best::NONE, 0, q);
                for (p, v) in g.iter().enumerate() {
                    let b = self.finish(p as f64 / n_c as f64, fd, v * scale);
                    if local.0.loses_to(&b) {
                        local = (b, p, q);
                    }
                }
                local
            })
            .reduce(|| (Best::NONE, 0, 0), |a, b| if a.0.loses_to(&b.0) { b } else { a });
        (best.1, best.2)
    }

    /// Best hypothesis on the `M_c x M_sym` sub-grid around a coarse cell.
    fn refine(&self, cell: (usize, usize)) -> RefinedDetection {
        let n_c = self.cfg.n_subcarriers();
        let n_sym = self.cfg.n_symbols();
        let (p, q) = cell;
        let off_r = subgrid_offsets(self.cfg.subgrid_range());
        let off_d = subgrid_offsets(self.cfg.subgrid_doppler());
        let q_signed = signed_bin(q, n_sym) as f64;
        let taus: Vec<f64> = off_r.iter().map(|o| ((p as f64 + o) / n_c as f64).rem_euclid(1.0)).collect();
        let best = off_d
            .par_iter()
            .map(|o| {
                let fd = (q_signed + o) / (self.cfg.alpha * n_sym as f64);
                let g = self.doppler_profile(fd);
                let mut local = Best::NONE;
                for &tau in &taus {
                    let cross: Complex64 = g.iter().enumerate().map(|(n, gn)| cis(tau * n as f64) * gn).sum();
                    local = local.better(self.finish(tau, fd, cross));
                }
                local
            })
            .reduce(|| Best::NONE, Best::better);
        let amp = if self.energy > 0.0 { best.cross / self.energy } else { Complex64::new(0.0, 0.0) };
        RefinedDetection {
            tau_bar: best.tau,
            fd_bar: best.fd,
            amp,
            stat: best.stat.max(0.0),
            eval_count: off_r.len() * off_d.len(),
        }
    }
}

/// Sub-grid refinement around `cell = (range_bin, doppler_bin)`.
pub fn local_refine(y_vec: &CVec, cell: (usize, usize), s: &CMat, cfg: &SystemConfig) -> Result<RefinedDetection> {
    check_cell(cell, cfg)?;
    let y = unvectorize(y_vec, cfg.n_subcarriers(), cfg.n_symbols())?;
    Ok(Evaluator::new(&y, s, cfg)?.refine(cell))
}

fn check_cell(cell: (usize, usize), cfg: &SystemConfig) -> Result<()> {
    if cell.0 >= cfg.n_subcarriers() || cell.1 >= cfg.n_symbols() {
        return Err(Error::OutOfRange(format!(
            "cell {cell:?} outside {}x{} grid",
            cfg.n_subcarriers(),
            cfg.n_symbols()
        )));
    }
    Ok(())
}

/// `C` rounds of coarse argmax, sub-grid refinement, and cancellation of
/// the fitted component.
pub fn ml_full_search(y: &CMat, s: &CMat, cfg: &SystemConfig, n_targets: usize) -> Result<Vec<RefinedDetection>> {
    if n_targets == 0 {
        return Err(Error::Config("ML search needs at least one target".into()));
    }
    let mut residual = y.clone();
    let coarse = cfg.n_subcarriers() * cfg.n_symbols();
    let mut out = Vec::with_capacity(n_targets);
    for _ in 0..n_targets {
        let ev = Evaluator::new(&residual, s, cfg)?;
        let cell = ev.coarse_argmax();
        let mut det = ev.refine(cell);
        det.eval_count += coarse;
        let t = template_matrix(det.fd_bar, det.tau_bar, s, cfg);
        residual -= t * det.amp;
        out.push(det);
    }
    Ok(out)
}

/// Independent sub-grid refinements of the given cells, in input order.
pub fn refine_cells(y: &CMat, cells: &[(usize, usize)], s: &CMat, cfg: &SystemConfig) -> Result<Vec<RefinedDetection>> {
    for &c in cells {
        check_cell(c, cfg)?;
    }
    let ev = Evaluator::new(y, s, cfg)?;
    Ok(cells.par_iter().map(|&c| ev.refine(c)).collect())
}

/// Cells with confidence above `delta`, strongest first, at most `p_max`.
pub fn confident_cells(conf: &ConfidenceMap, delta: f64, p_max: usize) -> Vec<(usize, usize)> {
    let v = &conf.values;
    let mut cells: Vec<(f64, (usize, usize))> = Vec::new();
    for c in 0..v.ncols() {
        for r in 0..v.nrows() {
            if v[(r, c)] > delta {
                cells.push((v[(r, c)], (r, c)));
            }
        }
    }
    cells.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)));
    cells.into_iter().take(p_max).map(|(_, c)| c).collect()
}

/// Confidence-seeded refinement without cancellation.
pub fn dcfnet_lr(
    conf: &ConfidenceMap,
    y: &CMat,
    s: &CMat,
    cfg: &SystemConfig,
    delta: f64,
    p_max: usize,
) -> Result<Vec<RefinedDetection>> {
    if !(delta > 0.0 && delta < 1.0) {
        return Err(Error::Config(format!("delta {delta} outside (0, 1)")));
    }
    if p_max == 0 {
        return Err(Error::Config("p_max must be at least 1".into()));
    }
    if conf.values.shape() != y.shape() {
        return Err(Error::Dimension(format!("confidence map {:?} vs frame {:?}", conf.values.shape(), y.shape())));
    }
    refine_cells(y, &confident_cells(conf, delta, p_max), s, cfg)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::params::{derive_config, NormalizedPath, PathGroup, RawConfig};
    use crate::waveform::{complex_noise, gen_symbols, path_response, Constellation};
    use crate::RMat;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn cfg(m: usize) -> SystemConfig {
        derive_config(RawConfig {
            n_tx: 2,
            n_rx: 2,
            n_subcarriers: 32,
            n_symbols: 16,
            subgrid_range: m,
            subgrid_doppler: m,
            noise_var: 1e-3,
            ..RawConfig::default()
        })
        .unwrap()
    }

    fn qpsk(c: &SystemConfig, seed: u64) -> CMat {
        gen_symbols(c, 1, Constellation::Qpsk, seed).unwrap().grids.remove(0)
    }

    fn frame(c: &SystemConfig, s: &CMat, tau: f64, fd: f64, amp: Complex64) -> CMat {
        let np = NormalizedPath {
            tau_bar: tau,
            fd_bar: fd,
            amp,
            aoa_rad: 0.0,
            aod_rad: 0.0,
            group: PathGroup::Focal(0),
            ambiguous: false,
        };
        let d_i = phase_diag(PhaseKind::Ici, fd, c);
        let mut x = path_response(&np, s, c);
        for mut col in x.column_iter_mut() {
            col.component_mul_assign(&d_i);
        }
        x
    }

    fn brute_stat(y: &CMat, s: &CMat, c: &SystemConfig, fd: f64, tau: f64) -> f64 {
        glrt_stat(&vectorize(y), &build_template(fd, tau, s, c))
    }

    #[test]
    fn vectorize_stacks_columns() {
        let (a, b, c, d) = (1.0, 2.0, 3.0, 4.0);
        let y = CMat::from_row_slice(2, 2, &[a, b, c, d].map(|v| Complex64::new(v, 0.0)));
        let v: Vec<f64> = vectorize(&y).iter().map(|z| z.re).collect();
        assert_eq!(v, vec![a, c, b, d]);
        assert!((vectorize(&y).norm() - y.norm()).abs() < 1e-15);
    }

    #[test]
    fn template_identities() {
        let c = cfg(4);
        let s = qpsk(&c, 1);
        let t0 = build_template(0.0, 0.0, &s, &c);
        let mut f_inv_s = s.clone();
        dft_columns(&mut f_inv_s, Direction::Inverse);
        assert!((&t0.xi - vectorize(&f_inv_s)).norm() < 1e-12);
        let t = build_template(0.13, 0.377, &s, &c);
        let n = (c.n_subcarriers() * c.n_symbols()) as f64;
        assert!((t.xi.norm_squared() - n).abs() < 1e-9 * n);
        let a = Complex64::new(0.7, -0.2);
        let y = frame(&c, &s, 0.377, 0.13, a);
        assert!((vectorize(&y) - &t.xi * a).norm() < 1e-10);
    }

    #[test]
    fn amplitude_and_statistic_examples() {
        let c = cfg(4);
        let s = qpsk(&c, 2);
        let t = build_template(-0.05, 0.2, &s, &c);
        let a = Complex64::new(-1.5, 0.25);
        let y = &t.xi * a;
        assert!((amp_hat(&y, &t).unwrap() - a).norm() < 1e-12);
        assert!((glrt_stat(&t.xi, &t) - t.xi.norm_squared()).abs() < 1e-9);
        let noise = vectorize(&complex_noise(32, 16, 1.0, 5));
        let perp = &noise - &t.xi * (t.xi.dotc(&noise) / t.xi.norm_squared());
        assert!(amp_hat(&perp, &t).unwrap().norm() < 1e-12);
        assert!(glrt_stat(&perp, &t) < 1e-20 * perp.norm_squared().max(1.0) + 1e-20);
        let zero = SteeredTemplate { xi: CVec::zeros(4), fd_bar: 0.0, tau_bar: 0.0 };
        assert!(amp_hat(&CVec::zeros(4), &zero).is_err());
    }

    #[test]
    fn projection_identity_random() {
        let c = cfg(4);
        let s = qpsk(&c, 3);
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for i in 0..20 {
            let t = build_template(rng.random_range(-0.4..0.4), rng.random::<f64>(), &s, &c);
            let y = vectorize(&complex_noise(32, 16, 1.0, 100 + i));
            let a = amp_hat(&y, &t).unwrap();
            let resid = (&y - &t.xi * a).norm_squared();
            let total = y.norm_squared();
            assert!((glrt_stat(&y, &t) + resid - total).abs() < 1e-9 * total);
        }
    }

    #[test]
    fn fast_evaluator_matches_template_products() {
        let c = cfg(4);
        let s = qpsk(&c, 4);
        let y = complex_noise(32, 16, 1.0, 9) + frame(&c, &s, 0.31, 0.07, Complex64::new(2.0, 1.0));
        let ev = Evaluator::new(&y, &s, &c).unwrap();
        for (tau, fd) in [(0.0, 0.0), (0.31, 0.07), (0.9, -0.2), (5.0 / 32.0, 3.0 / (16.0 * c.alpha))] {
            let g = ev.doppler_profile(fd);
            let cross: Complex64 = g.iter().enumerate().map(|(n, gn)| cis(tau * n as f64) * gn).sum();
            let fast = ev.finish(tau, fd, cross).stat;
            let slow = brute_stat(&y, &s, &c, fd, tau);
            assert!((fast - slow).abs() < 1e-9 * slow.max(1.0), "{fast} vs {slow}");
        }
    }

    #[test]
    fn coarse_argmax_matches_brute_grid() {
        let c = cfg(4);
        let s = qpsk(&c, 5);
        let fd = -3.0 / (16.0 * c.alpha);
        let y = complex_noise(32, 16, 0.5, 1) + frame(&c, &s, 11.0 / 32.0, fd, Complex64::new(1.0, 0.0));
        let ev = Evaluator::new(&y, &s, &c).unwrap();
        let mut best = (f64::NEG_INFINITY, (0, 0));
        for q in 0..16 {
            for p in 0..32 {
                let v = brute_stat(&y, &s, &c, ev.coarse_fd(q), p as f64 / 32.0);
                if v > best.0 {
                    best = (v, (p, q));
                }
            }
        }
        assert_eq!(ev.coarse_argmax(), best.1);
        assert_eq!(best.1, (11, 13));
    }

    #[test]
    fn refine_on_grid_returns_center() {
        let c = cfg(8);
        let s = qpsk(&c, 6);
        let fd = 2.0 / (16.0 * c.alpha);
        let y = frame(&c, &s, 7.0 / 32.0, fd, Complex64::new(0.0, 1.0));
        let d = local_refine(&vectorize(&y), (7, 2), &s, &c).unwrap();
        assert!((d.tau_bar - 7.0 / 32.0).abs() < 1e-15);
        assert!((d.fd_bar - fd).abs() < 1e-15);
        assert!((d.amp - Complex64::new(0.0, 1.0)).norm() < 1e-10);
        assert_eq!(d.eval_count, 64);
    }

    #[test]
    fn refine_off_grid_within_fine_bin() {
        let c = cfg(16);
        let s = qpsk(&c, 7);
        let tau = (9.0 + 0.37) / 32.0;
        let fd = (-4.0 + 0.2) / (16.0 * c.alpha);
        // Per-sample SNR 20 dB.
        let y = frame(&c, &s, tau, fd, Complex64::new(1.0, 0.0)) + complex_noise(32, 16, 0.01, 3);
        let d = local_refine(&vectorize(&y), (9, 12), &s, &c).unwrap();
        assert!((d.tau_bar - tau).abs() <= 1.0 / (32.0 * 16.0));
        assert!(d.tau_bar >= 8.5 / 32.0 && d.tau_bar < 9.5 / 32.0);
    }

    #[test]
    fn subgrid_brute_force_oracle() {
        let c = cfg(4);
        let s = qpsk(&c, 8);
        let y = complex_noise(32, 16, 1.0, 4);
        let d = local_refine(&vectorize(&y), (0, 15), &s, &c).unwrap();
        let mut best = (f64::NEG_INFINITY, 0.0, 0.0);
        for od in subgrid_offsets(4) {
            for or in subgrid_offsets(4) {
                let tau = (or / 32.0f64).rem_euclid(1.0);
                let fd = (-1.0 + od) / (16.0 * c.alpha);
                let v = brute_stat(&y, &s, &c, fd, tau);
                if v > best.0 {
                    best = (v, tau, fd);
                }
            }
        }
        assert!((d.stat - best.0).abs() < 1e-9 * best.0);
        assert!((d.tau_bar - best.1).abs() < 1e-12 && (d.fd_bar - best.2).abs() < 1e-12);
    }

    #[test]
    fn cancellation_removes_single_path() {
        let c = cfg(4);
        let s = qpsk(&c, 9);
        let fd = 1.0 / (16.0 * c.alpha);
        let y = frame(&c, &s, 3.0 / 32.0, fd, Complex64::new(0.5, 0.5));
        let t = build_template(fd, 3.0 / 32.0, &s, &c);
        let yv = vectorize(&y);
        let resid = &yv - &t.xi * amp_hat(&yv, &t).unwrap();
        assert!(resid.norm() < 1e-8 * yv.norm());
    }

    #[test]
    fn ml_search_counts_and_two_targets() {
        let c = cfg(4);
        let s = qpsk(&c, 10);
        let fd = 5.0 / (16.0 * c.alpha);
        let strong = frame(&c, &s, 4.0 / 32.0, fd, Complex64::new(10.0, 0.0));
        let weak = frame(&c, &s, 20.0 / 32.0, fd, Complex64::new(0.3, 0.0));
        let y = strong + weak;
        let dets = ml_full_search(&y, &s, &c, 2).unwrap();
        assert_eq!(total_evals(&dets), 2 * (32 * 16 + 16));
        assert!((dets[0].tau_bar - 4.0 / 32.0).abs() < 1e-12);
        assert!((dets[1].tau_bar - 20.0 / 32.0).abs() < 1e-12);
        assert!(ml_full_search(&y, &s, &c, 0).is_err());
    }

    #[test]
    fn dcfnet_lr_selection() {
        let c = cfg(4);
        let s = qpsk(&c, 11);
        let y = frame(&c, &s, 6.0 / 32.0, 0.0, Complex64::new(1.0, 0.0));
        let zero = ConfidenceMap::new(RMat::zeros(32, 16), None).unwrap();
        assert!(dcfnet_lr(&zero, &y, &s, &c, 0.5, 10).unwrap().is_empty());
        let mut v = RMat::zeros(32, 16);
        v[(6, 0)] = 0.9;
        let one = ConfidenceMap::new(v.clone(), None).unwrap();
        let lr = dcfnet_lr(&one, &y, &s, &c, 0.5, 10).unwrap();
        assert_eq!(lr, vec![local_refine(&vectorize(&y), (6, 0), &s, &c).unwrap()]);
        for (i, cell) in [(1, 1), (2, 2), (3, 3)].iter().enumerate() {
            v[*cell] = 0.6 + 0.01 * i as f64;
        }
        let many = ConfidenceMap::new(v, None).unwrap();
        assert_eq!(confident_cells(&many, 0.5, 2), vec![(6, 0), (3, 3)]);
        assert!(dcfnet_lr(&many, &y, &s, &c, 0.0, 2).is_err());
        assert!(dcfnet_lr(&many, &y, &s, &c, 0.5, 0).is_err());
    }

    #[test]
    fn subgrid_offsets_include_zero() {
        assert_eq!(subgrid_offsets(4), vec![-0.5, -0.25, 0.0, 0.25]);
        assert_eq!(subgrid_offsets(3), vec![-1.0 / 3.0, 0.0, 1.0 / 3.0]);
        assert_eq!(subgrid_offsets(1), vec![0.0]);
    }
}
