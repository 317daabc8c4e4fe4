//! Receive combining: the principal eigenvector of the focal-direction
//! signal covariance.

use nalgebra::SymmetricEigen;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::params::{steering_vector, SystemConfig};
use crate::{CMat, CVec, Complex64};

const RAYLEIGH_TOL: f64 = 1e-10;
const MAX_POWER_ITERS: usize = 20_000;

/// A focal direction seen by the receiver.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FocalDirection {
    pub aoa_rad: f64,
    pub aod_rad: f64,
    /// Expected `|a_l|^2`; unit by default.
    pub gain: f64,
}

impl FocalDirection {
    pub fn monostatic(angle_rad: f64) -> Self {
        Self { aoa_rad: angle_rad, aod_rad: angle_rad, gain: 1.0 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RxSolution {
    pub u: CVec,
    pub eigenvalue: f64,
    /// `u^H B_l u` for each focal direction.
    pub focal_gains: Vec<f64>,
    /// Set when `B` is zero and `u` is an arbitrary unit vector.
    pub degenerate: bool,
}

fn focal_term(v: &[Vec<CVec>], dir: &FocalDirection, cfg: &SystemConfig) -> CMat {
    let a_r = steering_vector(dir.aoa_rad, cfg.n_rx(), cfg.antenna_sep());
    let a_t = steering_vector(dir.aod_rad, cfg.n_tx(), cfg.antenna_sep());
    // A C A^H = a_R (a_T^H C a_T) a_R^H with C = sum_k v v^H.
    let energy: f64 = v.iter().flat_map(|users| users.iter()).map(|vk| a_t.dotc(vk).norm_sqr()).sum();
    (&a_r * a_r.adjoint()) * Complex64::from(dir.gain * energy)
}

/// `B = sum_l g_l sum_n A_l (sum_k v_k v_k^H) A_l^H` with `A_l = a_R a_T^H`.
pub fn build_b(v: &[Vec<CVec>], focal: &[FocalDirection], cfg: &SystemConfig) -> CMat {
    let mut b = CMat::zeros(cfg.n_rx(), cfg.n_rx());
    for dir in focal {
        b += focal_term(v, dir, cfg);
    }
    (&b + b.adjoint()) * Complex64::from(0.5)
}

fn rayleigh(b: &CMat, u: &CVec) -> f64 {
    u.dotc(&(b * u)).re / u.norm_squared()
}

fn power_iteration(b: &CMat, start: CVec) -> Option<(CVec, f64)> {
    let mut u = start.normalize();
    let mut rho = rayleigh(b, &u);
    for _ in 0..MAX_POWER_ITERS {
        let w = b * &u;
        let n = w.norm();
        if n == 0.0 {
            return None;
        }
        u = w / Complex64::from(n);
        let next = rayleigh(b, &u);
        let done = (next - rho).abs() <= RAYLEIGH_TOL * next.abs().max(f64::MIN_POSITIVE);
        rho = next;
        if done {
            return Some((u, rho));
        }
    }
    None
}

fn residual_ok(b: &CMat, u: &CVec, rho: f64) -> bool {
    (b * u - u * Complex64::from(rho)).norm() <= 1e-8 * b.norm()
}

/// Maximizer of `u^H B u / u^H u`, unit norm.
///
/// Power iteration from `e_1`, restarted from a seeded random vector when
/// the start is orthogonal to the dominant subspace or the iteration stalls;
/// a dense eigendecomposition settles anything still unconverged.
pub fn principal_eigvec(b: &CMat) -> Result<RxSolution> {
    let n = b.nrows();
    if n == 0 || b.ncols() != n {
        return Err(Error::Dimension(format!("B must be square and nonempty, got {:?}", b.shape())));
    }
    if b.norm() == 0.0 {
        let mut u = CVec::zeros(n);
        u[0] = Complex64::new(1.0, 0.0);
        return Ok(RxSolution { u, eigenvalue: 0.0, focal_gains: vec![], degenerate: true });
    }
    let mut e1 = CVec::zeros(n);
    e1[0] = Complex64::new(1.0, 0.0);
    let mut rng = ChaCha8Rng::seed_from_u64(0x5eed);
    let random = CVec::from_fn(n, |_, _| Complex64::new(rng.random::<f64>() - 0.5, rng.random::<f64>() - 0.5));
    let found = [e1, random].into_iter().filter_map(|s| power_iteration(b, s)).find(|(u, rho)| residual_ok(b, u, *rho));
    let (u, rho) = match found {
        Some(x) => x,
        None => {
            log::debug!("power iteration stalled; using a dense eigendecomposition");
            let eig = SymmetricEigen::new(b.clone());
            let (i, &val) = eig.eigenvalues.iter().enumerate().max_by(|a, b| a.1.total_cmp(b.1)).expect("nonempty");
            (eig.eigenvectors.column(i).into_owned(), val)
        }
    };
    Ok(RxSolution { u: u.normalize(), eigenvalue: rho, focal_gains: vec![], degenerate: false })
}

/// Designs the combiner for the given precoders and reports the per-focal
/// received power.
pub fn design_rx(v: &[Vec<CVec>], focal: &[FocalDirection], cfg: &SystemConfig) -> Result<RxSolution> {
    let b = build_b(v, focal, cfg);
    let mut sol = principal_eigvec(&b)?;
    sol.focal_gains = focal
        .iter()
        .map(|d| {
            let t = focal_term(v, d, cfg);
            sol.u.dotc(&(t * &sol.u)).re
        })
        .collect();
    Ok(sol)
}
