//! Sum-rate transmit beamforming under per-subcarrier power and
//! beampattern-gain constraints.
//!
//! Each subcarrier is solved independently by fractional programming:
//! `beta` and `xi` are refreshed in closed form, then the precoders solve a
//! quadratic program with one power constraint and one gain constraint per
//! focal angle. That program is handled through its Lagrange dual, whose
//! stationary point gives
//!
//! ```text
//! v_k = (Q + lambda I - (1/N_c) sum_l mu_l a_l a_l^H)^-1 sqrt(1 + beta_k) xi_k h_k,
//! Q   = sum_p |xi_p|^2 h_p h_p^H.
//! ```
//!
//! The multipliers come from nested one-dimensional searches: `lambda`
//! solves the power equation for every trial `mu`, and each `mu_l` is found
//! by regula falsi on its gain equation, warm-started from the previous
//! outer iteration.

use nalgebra::SymmetricEigen;
use rayon::prelude::*;

use crate::channel::CommChannelSet;
use crate::error::{Error, Result};
use crate::params::{steering_vector, SystemConfig};
use crate::waveform::BeamformerSet;
use crate::{CMat, CVec, Complex64};

/// Relative slack accepted on the power and gain constraints.
pub const CONSTRAINT_TOL: f64 = 1e-9;
const BISECT_ITERS: usize = 200;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Objective {
    SumRate,
    /// Drops the rate term: all power goes to the focal directions.
    SensingOnly,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TxOptions {
    pub max_iter: usize,
    pub tol: f64,
    pub objective: Objective,
}

impl Default for TxOptions {
    fn default() -> Self {
        Self { max_iter: 50, tol: 1e-5, objective: Objective::SumRate }
    }
}

/// One subcarrier's view of the problem.
#[derive(Debug, Clone, Copy)]
pub struct Subcarrier<'a> {
    pub h: &'a [CVec],
    pub noise_var: &'a [f64],
    /// Transmit steering vectors of the focal angles.
    pub focal: &'a [CVec],
    /// Subcarrier count `N_c`, which scales noise and gain.
    pub n_c: f64,
    pub power: f64,
    pub gain_req: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TxSolution {
    /// `v[n][k]`.
    pub v: Vec<Vec<CVec>>,
    pub beta: Vec<Vec<f64>>,
    pub xi: Vec<Vec<Complex64>>,
    pub lambda: Vec<f64>,
    pub mu: Vec<Vec<f64>>,
    /// Sum-rate in bit/s/Hz (averaged over subcarriers) after each round.
    pub trace: Vec<f64>,
    pub iterations: usize,
    pub converged: bool,
}

impl TxSolution {
    pub fn to_beamformers(&self, rx: CVec) -> BeamformerSet {
        BeamformerSet::new(self.v.clone(), rx)
    }

    pub fn final_rate(&self) -> f64 {
        self.trace.last().copied().unwrap_or(0.0)
    }
}

pub fn focal_steering(angles_rad: &[f64], cfg: &SystemConfig) -> Vec<CVec> {
    angles_rad.iter().map(|&a| steering_vector(a, cfg.n_tx(), cfg.antenna_sep())).collect()
}

/// `gamma_k = |h_k^H v_k|^2 / (sum_{l != k} |h_k^H v_l|^2 + N_c sigma_k^2)`.
pub fn user_sinr(sc: &Subcarrier, v: &[CVec], k: usize) -> f64 {
    let h = &sc.h[k];
    let mut interf = 0.0;
    for (l, vl) in v.iter().enumerate() {
        if l != k {
            interf += h.dotc(vl).norm_sqr();
        }
    }
    h.dotc(&v[k]).norm_sqr() / (interf + sc.n_c * sc.noise_var[k])
}

/// `(1/N_c) sum_k |a^H v_k|^2`.
pub fn beampattern_gain(a: &CVec, v: &[CVec], n_c: f64) -> f64 {
    v.iter().map(|vk| a.dotc(vk).norm_sqr()).sum::<f64>() / n_c
}

pub fn total_power(v: &[CVec]) -> f64 {
    v.iter().map(|x| x.norm_squared()).sum()
}

/// Sum of `log2(1 + gamma_k)` on one subcarrier.
pub fn subcarrier_rate(sc: &Subcarrier, v: &[CVec]) -> f64 {
    (0..v.len()).map(|k| (1.0 + user_sinr(sc, v, k)).log2()).sum()
}

pub fn update_beta(sc: &Subcarrier, v: &[CVec]) -> Vec<f64> {
    (0..v.len()).map(|k| user_sinr(sc, v, k)).collect()
}

/// `xi_k = sqrt(1 + beta_k) h_k^H v_k / (sum_p |h_k^H v_p|^2 + N_c sigma_k^2)`.
pub fn update_xi(sc: &Subcarrier, v: &[CVec], beta: &[f64]) -> Vec<Complex64> {
    (0..v.len())
        .map(|k| {
            let h = &sc.h[k];
            let denom: f64 = v.iter().map(|vp| h.dotc(vp).norm_sqr()).sum::<f64>() + sc.n_c * sc.noise_var[k];
            h.dotc(&v[k]) * (1.0 + beta[k]).sqrt() / denom
        })
        .collect()
}

/// Quadratic-transform objective in nats:
/// `sum_k ln(1+beta) - beta + 2 sqrt(1+beta) Re(xi* h^H v) - |xi|^2 (sum_p |h^H v_p|^2 + N_c sigma^2)`.
pub fn fp_objective(sc: &Subcarrier, v: &[CVec], beta: &[f64], xi: &[Complex64]) -> f64 {
    (0..v.len())
        .map(|k| {
            let h = &sc.h[k];
            let denom: f64 = v.iter().map(|vp| h.dotc(vp).norm_sqr()).sum::<f64>() + sc.n_c * sc.noise_var[k];
            (1.0 + beta[k]).ln() - beta[k] + 2.0 * (1.0 + beta[k]).sqrt() * (xi[k].conj() * h.dotc(&v[k])).re
                - xi[k].norm_sqr() * denom
        })
        .sum()
}

/// `Q = sum_p |xi_p|^2 h_p h_p^H` and `b_k = sqrt(1 + beta_k) xi_k h_k`.
pub fn quadratic_terms(sc: &Subcarrier, beta: &[f64], xi: &[Complex64]) -> (CMat, Vec<CVec>) {
    let n_t = sc.h[0].len();
    let mut q = CMat::zeros(n_t, n_t);
    for (h, x) in sc.h.iter().zip(xi) {
        q += (h * h.adjoint()) * Complex64::from(x.norm_sqr());
    }
    let b = sc.h.iter().zip(beta.iter().zip(xi)).map(|(h, (bt, x))| h * (x * (1.0 + bt).sqrt())).collect();
    (q, b)
}

/// `Q + lambda I - (1/N_c) sum_l mu_l a_l a_l^H`.
pub fn regularized_matrix(q: &CMat, lambda: f64, mu: &[f64], focal: &[CVec], n_c: f64) -> CMat {
    let mut m = q.clone();
    for i in 0..m.nrows() {
        m[(i, i)] += lambda;
    }
    for (a, &w) in focal.iter().zip(mu) {
        if w != 0.0 {
            m -= (a * a.adjoint()) * Complex64::from(w / n_c);
        }
    }
    m
}

/// Cholesky factor of a Hermitian positive definite matrix. The complex
/// factorization happily takes square roots of negative pivots, so the
/// diagonal of the factor is checked to be real and positive.
fn hpd_cholesky(m: CMat) -> Option<nalgebra::Cholesky<Complex64, nalgebra::Dyn>> {
    let chol = m.cholesky()?;
    let l = chol.l_dirty();
    let ok = (0..l.nrows()).all(|i| {
        let d = l[(i, i)];
        d.re > 0.0 && d.im.abs() <= 1e-12 * d.re
    });
    ok.then_some(chol)
}

/// Closed-form precoders for fixed `beta`, `xi` and multipliers.
pub fn update_v(sc: &Subcarrier, beta: &[f64], xi: &[Complex64], lambda: f64, mu: &[f64]) -> Result<Vec<CVec>> {
    let (q, b) = quadratic_terms(sc, beta, xi);
    let m = regularized_matrix(&q, lambda, mu, sc.focal, sc.n_c);
    let chol = hpd_cholesky(m)
        .ok_or_else(|| Error::Singular("regularized matrix is not positive definite; increase lambda".into()))?;
    Ok(b.iter().map(|bk| chol.solve(bk)).collect())
}

/// `(Xi - c a a^H)^-1` from `Xi^-1`.
pub fn sherman_morrison(xi_inv: &CMat, a: &CVec, c: f64) -> Result<CMat> {
    let u = xi_inv * a;
    let s = a.dotc(&u).re;
    let denom = 1.0 - c * s;
    if denom.abs() < 1e-300 {
        return Err(Error::Singular("rank-one update makes the matrix singular".into()));
    }
    let w = xi_inv.adjoint() * a;
    Ok(xi_inv + (u * w.adjoint()) * Complex64::from(c / denom))
}

/// Spectral data of `A = Q - (1/N_c) sum mu a a^H` used by the power equation.
#[derive(Debug, Clone)]
pub struct Spectrum {
    pub eigvals: Vec<f64>,
    pub eigvecs: CMat,
    /// `Upsilon_i = sum_k |[E^H b_k]_i|^2`.
    pub upsilon: Vec<f64>,
    /// `E^H b_k` per user.
    coords: Vec<CVec>,
}

impl Spectrum {
    pub fn new(a: &CMat, b: &[CVec]) -> Self {
        let herm = (a + a.adjoint()) * Complex64::from(0.5);
        let eig = SymmetricEigen::new(herm);
        let coords: Vec<CVec> = b.iter().map(|bk| eig.eigenvectors.adjoint() * bk).collect();
        let upsilon = (0..eig.eigenvalues.len()).map(|i| coords.iter().map(|c| c[i].norm_sqr()).sum()).collect();
        Self { eigvals: eig.eigenvalues.iter().copied().collect(), eigvecs: eig.eigenvectors, upsilon, coords }
    }

    fn scale(&self) -> f64 {
        self.eigvals.iter().fold(0.0f64, |m, e| m.max(e.abs()))
    }

    /// `v_k = E (Lambda + lambda)^-1 E^H b_k`, dropping null directions that
    /// carry no signal.
    pub fn precoders(&self, lambda: f64) -> Vec<CVec> {
        let (zero_eig, zero_ups) = self.null_tolerances();
        self.coords
            .iter()
            .map(|c| {
                let scaled = CVec::from_fn(c.len(), |i, _| {
                    let d = self.eigvals[i] + lambda;
                    if d.abs() <= zero_eig && self.upsilon[i] <= zero_ups {
                        Complex64::new(0.0, 0.0)
                    } else {
                        c[i] / d
                    }
                });
                &self.eigvecs * scaled
            })
            .collect()
    }

    fn null_tolerances(&self) -> (f64, f64) {
        let total: f64 = self.upsilon.iter().sum();
        (1e-10 * self.scale(), 1e-20 * total)
    }
}

/// Power equation `sum_i Upsilon_i / (Lambda_i + lambda)^2`.
pub fn power_of_lambda(eigvals: &[f64], upsilon: &[f64], lambda: f64) -> f64 {
    let scale = eigvals.iter().fold(0.0f64, |m, e| m.max(e.abs()));
    let total: f64 = upsilon.iter().sum();
    eigvals
        .iter()
        .zip(upsilon)
        .map(|(&e, &u)| {
            let d = e + lambda;
            if u <= 1e-20 * total {
                0.0
            } else if d.abs() <= 1e-10 * scale {
                f64::INFINITY
            } else {
                u / (d * d)
            }
        })
        .sum()
}

/// Smallest admissible `lambda >= 0` meeting the power budget: zero when the
/// unconstrained solution fits, otherwise the root of the power equation on
/// the interval where the regularized matrix stays positive definite.
pub fn solve_lambda_spectral(eigvals: &[f64], upsilon: &[f64], budget: f64) -> Result<f64> {
    if budget.is_nan() || budget <= 0.0 {
        return Err(Error::Config("power budget must be positive".into()));
    }
    let scale = eigvals.iter().fold(0.0f64, |m, e| m.max(e.abs()));
    let min_eig = eigvals.iter().copied().fold(f64::INFINITY, f64::min);
    let zero = 1e-10 * scale;
    let lo0 = if min_eig >= -zero { 0.0 } else { -min_eig };
    let p_lo = power_of_lambda(eigvals, upsilon, lo0);
    if lo0 == 0.0 && p_lo <= budget {
        return Ok(0.0);
    }
    if p_lo.is_finite() && p_lo < budget {
        return Err(Error::Infeasible(format!(
            "power equation has no root: power stays at or below {p_lo:e} < budget {budget:e}"
        )));
    }
    let total: f64 = upsilon.iter().sum();
    let mut hi = lo0 + (total / budget).sqrt().max(scale * 1e-12).max(f64::MIN_POSITIVE);
    let mut doublings = 0;
    while power_of_lambda(eigvals, upsilon, hi) > budget {
        hi = lo0 + 2.0 * (hi - lo0);
        doublings += 1;
        if doublings > 2000 {
            return Err(Error::Infeasible("no upper bracket for the power equation".into()));
        }
    }
    let mut lo = lo0;
    for _ in 0..BISECT_ITERS {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        let p = power_of_lambda(eigvals, upsilon, mid);
        if p > budget {
            lo = mid;
        } else {
            hi = mid;
        }
        if (p - budget).abs() <= 1e-13 * budget && p <= budget {
            return Ok(mid);
        }
    }
    Ok(hi)
}

pub fn solve_lambda(sc: &Subcarrier, beta: &[f64], xi: &[Complex64], mu: &[f64]) -> Result<f64> {
    let (q, b) = quadratic_terms(sc, beta, xi);
    let a = regularized_matrix(&q, 0.0, mu, sc.focal, sc.n_c);
    let spec = Spectrum::new(&a, &b);
    solve_lambda_spectral(&spec.eigvals, &spec.upsilon, sc.power)
}

/// Closed-form `mu_l` for fixed `lambda` and the other multipliers.
///
/// With `Xi_l` the regularized matrix without the `l`-th gain term,
/// `s = a^H Xi_l^-1 a` and `T = (1/N_c) sum_k |a^H Xi_l^-1 b_k|^2`, the
/// gain at `mu` is `T / (1 - mu s / N_c)^2`. The root keeping the matrix
/// positive definite is `mu = N_c (1 - sqrt(T / G)) / s`.
pub fn solve_mu(sc: &Subcarrier, beta: &[f64], xi: &[Complex64], lambda: f64, mu: &[f64], l: usize) -> Result<f64> {
    let (q, b) = quadratic_terms(sc, beta, xi);
    let mut others = mu.to_vec();
    others[l] = 0.0;
    let m = regularized_matrix(&q, lambda, &others, sc.focal, sc.n_c);
    let chol = hpd_cholesky(m).ok_or_else(|| Error::Singular("Xi_l is not positive definite".into()))?;
    let a = &sc.focal[l];
    let xa = chol.solve(a);
    let s = a.dotc(&xa).re;
    let t: f64 = b.iter().map(|bk| xa.dotc(bk).norm_sqr()).sum::<f64>() / sc.n_c;
    if t >= sc.gain_req {
        return Ok(0.0);
    }
    if t == 0.0 {
        return Err(Error::Infeasible("no signal component along the focal direction".into()));
    }
    Ok(sc.n_c * (1.0 - (t / sc.gain_req).sqrt()) / s)
}

/// Dual solution for fixed `beta`, `xi`.
#[derive(Debug, Clone)]
pub struct DualSolution {
    pub lambda: f64,
    pub mu: Vec<f64>,
    pub v: Vec<CVec>,
}

fn evaluate_mu(sc: &Subcarrier, q: &CMat, b: &[CVec], mu: &[f64]) -> Result<DualSolution> {
    let a = regularized_matrix(q, 0.0, mu, sc.focal, sc.n_c);
    let spec = Spectrum::new(&a, b);
    let lambda = solve_lambda_spectral(&spec.eigvals, &spec.upsilon, sc.power)?;
    Ok(DualSolution { lambda, mu: mu.to_vec(), v: spec.precoders(lambda) })
}

/// Minimizes the dual over `(lambda, mu)`.
pub fn solve_dual(sc: &Subcarrier, beta: &[f64], xi: &[Complex64]) -> Result<DualSolution> {
    solve_dual_from(sc, beta, xi, &vec![0.0; sc.focal.len()])
}

/// [`solve_dual`] with the coordinate search on `mu` started at `mu0`.
pub fn solve_dual_from(sc: &Subcarrier, beta: &[f64], xi: &[Complex64], mu0: &[f64]) -> Result<DualSolution> {
    let (q, b) = quadratic_terms(sc, beta, xi);
    let n_l = sc.focal.len();
    if mu0.len() != n_l {
        return Err(Error::Dimension(format!("{} multipliers for {n_l} focal angles", mu0.len())));
    }
    let mut mu: Vec<f64> = mu0.iter().map(|m| m.max(0.0)).collect();
    let mut sol = evaluate_mu(sc, &q, &b, &mu)?;
    if sc.gain_req <= 0.0 || n_l == 0 {
        return Ok(sol);
    }
    let target = sc.gain_req;
    let q_scale = q.norm().max(f64::MIN_POSITIVE);
    let sweeps = if n_l == 1 { 1 } else { 100 };
    for _ in 0..sweeps {
        let before = mu.clone();
        for l in 0..n_l {
            let a = &sc.focal[l];
            mu[l] = 0.0;
            let at_zero = evaluate_mu(sc, &q, &b, &mu)?;
            let mut g_lo = beampattern_gain(a, &at_zero.v, sc.n_c);
            if g_lo >= target {
                sol = at_zero;
                continue;
            }
            // Gain rises monotonically in mu_l once lambda is re-solved.
            let mut lo = 0.0;
            let mut g_hi: f64;
            let mut hi = if before[l] > 0.0 { before[l] } else { sc.n_c * q_scale / a.norm_squared() };
            let mut hi_sol = loop {
                mu[l] = hi;
                let s = evaluate_mu(sc, &q, &b, &mu)?;
                let g = beampattern_gain(a, &s.v, sc.n_c);
                if g >= target {
                    g_hi = g;
                    break s;
                }
                (lo, g_lo) = (hi, g);
                hi *= 2.0;
                if !hi.is_finite() || hi > 1e300 {
                    return Err(Error::Infeasible(format!(
                        "gain requirement {target:e} unreachable at focal angle {l}"
                    )));
                }
            };
            if lo == 0.0 && before[l] > 0.0 {
                let mut step = 1e-3 * hi;
                while step < hi {
                    mu[l] = hi - step;
                    let s = evaluate_mu(sc, &q, &b, &mu)?;
                    let g = beampattern_gain(a, &s.v, sc.n_c);
                    if g < target {
                        (lo, g_lo) = (hi - step, g);
                        break;
                    }
                    (hi, g_hi) = (hi - step, g);
                    hi_sol = s;
                    step *= 4.0;
                }
            }
            // Illinois variant of regula falsi on the bracket.
            let (mut f_lo, mut f_hi) = (g_lo - target, g_hi - target);
            let mut last_side = 0i8;
            for _ in 0..BISECT_ITERS {
                if g_hi - target <= 1e-13 * target {
                    break;
                }
                let mut mid = (lo * f_hi - hi * f_lo) / (f_hi - f_lo);
                if !(mid > lo && mid < hi) {
                    mid = 0.5 * (lo + hi);
                }
                if mid <= lo || mid >= hi {
                    break;
                }
                mu[l] = mid;
                let s = evaluate_mu(sc, &q, &b, &mu)?;
                let g = beampattern_gain(a, &s.v, sc.n_c);
                if g >= target {
                    (hi, g_hi, f_hi) = (mid, g, g - target);
                    hi_sol = s;
                    if last_side == 1 {
                        f_lo *= 0.5;
                    }
                    last_side = 1;
                } else {
                    (lo, f_lo) = (mid, g - target);
                    if last_side == -1 {
                        f_hi *= 0.5;
                    }
                    last_side = -1;
                }
            }
            mu[l] = hi;
            sol = hi_sol;
        }
        let change = mu.iter().zip(&before).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        let size = mu.iter().fold(0.0f64, |m, x| m.max(x.abs()));
        let all_met = sc.focal.iter().all(|a| beampattern_gain(a, &sol.v, sc.n_c) >= target * (1.0 - CONSTRAINT_TOL));
        if all_met && change <= 1e-10 * size.max(f64::MIN_POSITIVE) {
            break;
        }
    }
    Ok(sol)
}

pub fn is_feasible(sc: &Subcarrier, v: &[CVec]) -> bool {
    total_power(v) <= sc.power * (1.0 + CONSTRAINT_TOL)
        && sc.focal.iter().all(|a| beampattern_gain(a, v, sc.n_c) >= sc.gain_req * (1.0 - CONSTRAINT_TOL))
}

/// Largest gain reachable at each focal angle alone: `P ||a_l||^2 / N_c`.
pub fn max_gain_per_angle(sc: &Subcarrier) -> Vec<f64> {
    sc.focal.iter().map(|a| sc.power * a.norm_squared() / sc.n_c).collect()
}

/// Principal eigenvector of `sum_l a_l a_l^H` and its eigenvalue.
pub fn principal_focal_direction(focal: &[CVec], n_t: usize) -> (CVec, f64) {
    let mut r = CMat::zeros(n_t, n_t);
    for a in focal {
        r += a * a.adjoint();
    }
    let eig = SymmetricEigen::new(r);
    let (i, &val) = eig.eigenvalues.iter().enumerate().max_by(|a, b| a.1.total_cmp(b.1)).expect("nonempty matrix");
    (eig.eigenvectors.column(i).into_owned(), val)
}

/// All users share the principal focal direction at equal power.
pub fn sensing_only_precoders(sc: &Subcarrier, n_users: usize, n_t: usize) -> Vec<CVec> {
    if sc.focal.is_empty() {
        return vec![CVec::zeros(n_t); n_users];
    }
    let (w, _) = principal_focal_direction(sc.focal, n_t);
    let amp = Complex64::from((sc.power / n_users as f64).sqrt());
    vec![w * amp; n_users]
}

/// Mixes unit directions toward the principal focal direction, phase aligned,
/// by the smallest weight meeting every gain constraint at equal power.
fn mix_toward_focal(sc: &Subcarrier, dirs: &[CVec]) -> Vec<CVec> {
    let k = dirs.len();
    let n_t = dirs[0].len();
    let p_user = Complex64::from((sc.power / k as f64).sqrt());
    let build = |t: f64| -> Vec<CVec> {
        if sc.focal.is_empty() {
            return dirs.iter().map(|d| d * p_user).collect();
        }
        let (w, _) = principal_focal_direction(sc.focal, n_t);
        dirs.iter()
            .map(|d| {
                let ph = w.dotc(d);
                let rot = if ph.norm() > 0.0 { ph / ph.norm() } else { Complex64::new(1.0, 0.0) };
                let mixed = d * Complex64::from(1.0 - t) + &w * (rot * t);
                let n = mixed.norm();
                if n > 0.0 {
                    mixed * (p_user / n)
                } else {
                    &w * p_user
                }
            })
            .collect()
    };
    let ok = |v: &[CVec]| sc.focal.iter().all(|a| beampattern_gain(a, v, sc.n_c) >= sc.gain_req);
    let v0 = build(0.0);
    if ok(&v0) {
        return v0;
    }
    let (mut lo, mut hi) = (0.0, 1.0);
    for _ in 0..100 {
        let mid = 0.5 * (lo + hi);
        if ok(&build(mid)) {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    build(hi)
}

/// Zero-forcing directions (pseudo-inverse columns), or `None` when the
/// channels are rank deficient or users outnumber antennas.
fn zf_directions(h: &[CVec]) -> Option<Vec<CVec>> {
    let n_t = h[0].len();
    if h.len() > n_t {
        return None;
    }
    let hm = CMat::from_columns(h);
    let gram = hm.adjoint() * &hm;
    let inv = gram.try_inverse()?;
    let w = &hm * inv;
    let dirs: Vec<CVec> = w
        .column_iter()
        .map(|c| {
            let n = c.norm();
            c.into_owned() / Complex64::from(n)
        })
        .collect();
    dirs.iter().all(|d| d.iter().all(|z| z.re.is_finite() && z.im.is_finite())).then_some(dirs)
}

/// Zero-forcing at equal power, phase-aligned and mixed toward the focal
/// direction just enough to satisfy the gain constraints.
pub fn zf_precoders(sc: &Subcarrier) -> Result<Vec<CVec>> {
    let dirs =
        zf_directions(sc.h).ok_or_else(|| Error::Singular("zero forcing needs full column rank channels".into()))?;
    Ok(mix_toward_focal(sc, &dirs))
}

fn mrt_directions(h: &[CVec]) -> Vec<CVec> {
    h.iter()
        .map(|x| {
            let n = x.norm();
            if n > 0.0 {
                x / Complex64::from(n)
            } else {
                CVec::from_fn(x.len(), |i, _| Complex64::new(if i == 0 { 1.0 } else { 0.0 }, 0.0))
            }
        })
        .collect()
}

#[derive(Debug, Clone)]
pub struct SubcarrierSolution {
    pub v: Vec<CVec>,
    pub beta: Vec<f64>,
    pub xi: Vec<Complex64>,
    pub lambda: f64,
    pub mu: Vec<f64>,
    /// Rate in bit/s/Hz after the start point and after every round.
    pub trace: Vec<f64>,
    pub converged: bool,
}

fn probe(sc: &Subcarrier) -> Result<()> {
    for (l, g) in max_gain_per_angle(sc).into_iter().enumerate() {
        if sc.gain_req > g * (1.0 + CONSTRAINT_TOL) {
            log::debug!("focal angle {l} cannot reach the gain requirement");
            return Err(Error::GainInfeasible { required: sc.gain_req, max_achievable: g });
        }
    }
    Ok(())
}

/// Alternating optimization on one subcarrier.
pub fn optimize_subcarrier(sc: &Subcarrier, opts: &TxOptions) -> Result<SubcarrierSolution> {
    probe(sc)?;
    let k = sc.h.len();
    let n_t = sc.h[0].len();
    if opts.objective == Objective::SensingOnly {
        let v = sensing_only_precoders(sc, k, n_t);
        let beta = update_beta(sc, &v);
        let xi = update_xi(sc, &v, &beta);
        let rate = subcarrier_rate(sc, &v);
        return Ok(SubcarrierSolution {
            v,
            beta,
            xi,
            lambda: 0.0,
            mu: vec![0.0; sc.focal.len()],
            trace: vec![rate],
            converged: true,
        });
    }

    let dirs = zf_directions(sc.h).unwrap_or_else(|| mrt_directions(sc.h));
    let mut v = mix_toward_focal(sc, &dirs);
    let mut lambda = 0.0;
    let mut mu = vec![0.0; sc.focal.len()];
    if !is_feasible(sc, &v) {
        let beta = update_beta(sc, &v);
        let xi = update_xi(sc, &v, &beta);
        let d = solve_dual(sc, &beta, &xi)?;
        if !is_feasible(sc, &d.v) {
            let g = sc.focal.iter().map(|a| beampattern_gain(a, &d.v, sc.n_c)).fold(f64::INFINITY, f64::min);
            return Err(Error::GainInfeasible { required: sc.gain_req, max_achievable: g });
        }
        (v, lambda, mu) = (d.v, d.lambda, d.mu);
    }

    let mut rate = subcarrier_rate(sc, &v);
    let mut trace = vec![rate];
    let mut converged = false;
    for _ in 0..opts.max_iter {
        let beta = update_beta(sc, &v);
        let xi = update_xi(sc, &v, &beta);
        let f_old = fp_objective(sc, &v, &beta, &xi);
        match solve_dual_from(sc, &beta, &xi, &mu) {
            Ok(d) => {
                let new_rate = subcarrier_rate(sc, &d.v);
                let accept = is_feasible(sc, &d.v) && fp_objective(sc, &d.v, &beta, &xi) >= f_old && new_rate >= rate;
                if accept {
                    v = d.v;
                    lambda = d.lambda;
                    mu = d.mu;
                }
            }
            Err(e) => log::debug!("dual step failed, keeping the current iterate: {e}"),
        }
        let prev = rate;
        rate = subcarrier_rate(sc, &v);
        trace.push(rate);
        if (rate - prev).abs() <= opts.tol * prev.abs().max(f64::MIN_POSITIVE) {
            converged = true;
            break;
        }
    }
    let beta = update_beta(sc, &v);
    let xi = update_xi(sc, &v, &beta);
    Ok(SubcarrierSolution { v, beta, xi, lambda, mu, trace, converged })
}

fn check_inputs(channels: &CommChannelSet, cfg: &SystemConfig) -> Result<()> {
    if channels.n_subcarriers() != cfg.n_subcarriers() {
        return Err(Error::Dimension(format!(
            "{} channel subcarriers for {} configured",
            channels.n_subcarriers(),
            cfg.n_subcarriers()
        )));
    }
    if channels.h[0][0].len() != cfg.n_tx() {
        return Err(Error::Dimension(format!(
            "channel length {} vs {} transmit antennas",
            channels.h[0][0].len(),
            cfg.n_tx()
        )));
    }
    Ok(())
}

fn subcarrier<'a>(channels: &'a CommChannelSet, focal: &'a [CVec], cfg: &SystemConfig, n: usize) -> Subcarrier<'a> {
    Subcarrier {
        h: &channels.h[n],
        noise_var: &channels.noise_var,
        focal,
        n_c: cfg.n_subcarriers() as f64,
        power: cfg.power_per_subcarrier(),
        gain_req: cfg.gain_req_per_subcarrier(),
    }
}

/// Optimizes every subcarrier in parallel.
pub fn optimize(
    channels: &CommChannelSet,
    cfg: &SystemConfig,
    focal_angles_rad: &[f64],
    opts: &TxOptions,
) -> Result<TxSolution> {
    check_inputs(channels, cfg)?;
    let focal = focal_steering(focal_angles_rad, cfg);
    let subs: Vec<SubcarrierSolution> = (0..cfg.n_subcarriers())
        .into_par_iter()
        .map(|n| optimize_subcarrier(&subcarrier(channels, &focal, cfg, n), opts))
        .collect::<Result<_>>()?;
    let rounds = subs.iter().map(|s| s.trace.len()).max().unwrap_or(0);
    let n_c = cfg.n_subcarriers() as f64;
    let trace =
        (0..rounds).map(|r| subs.iter().map(|s| s.trace[r.min(s.trace.len() - 1)]).sum::<f64>() / n_c).collect();
    Ok(TxSolution {
        converged: subs.iter().all(|s| s.converged),
        iterations: rounds.saturating_sub(1),
        v: subs.iter().map(|s| s.v.clone()).collect(),
        beta: subs.iter().map(|s| s.beta.clone()).collect(),
        xi: subs.iter().map(|s| s.xi.clone()).collect(),
        lambda: subs.iter().map(|s| s.lambda).collect(),
        mu: subs.iter().map(|s| s.mu.clone()).collect(),
        trace,
    })
}

/// Zero-forcing baseline under the same constraints, as a full solution.
pub fn zf_baseline(channels: &CommChannelSet, cfg: &SystemConfig, focal_angles_rad: &[f64]) -> Result<TxSolution> {
    check_inputs(channels, cfg)?;
    let focal = focal_steering(focal_angles_rad, cfg);
    let k = channels.n_users();
    let mut v = Vec::with_capacity(cfg.n_subcarriers());
    let mut rate = 0.0;
    let (mut beta, mut xi) = (Vec::new(), Vec::new());
    for n in 0..cfg.n_subcarriers() {
        let sc = subcarrier(channels, &focal, cfg, n);
        let vn = zf_precoders(&sc)?;
        rate += subcarrier_rate(&sc, &vn);
        let b = update_beta(&sc, &vn);
        xi.push(update_xi(&sc, &vn, &b));
        beta.push(b);
        v.push(vn);
    }
    Ok(TxSolution {
        v,
        beta,
        xi,
        lambda: vec![0.0; cfg.n_subcarriers()],
        mu: vec![vec![0.0; focal.len()]; cfg.n_subcarriers()],
        trace: vec![rate / cfg.n_subcarriers() as f64],
        iterations: 0,
        converged: k > 0,
    })
}

/// Average sum-rate in bit/s/Hz of arbitrary precoders.
pub fn sum_rate(channels: &CommChannelSet, cfg: &SystemConfig, v: &[Vec<CVec>]) -> f64 {
    let n_c = cfg.n_subcarriers() as f64;
    (0..channels.n_subcarriers())
        .map(|n| {
            let sc = subcarrier(channels, &[], cfg, n);
            subcarrier_rate(&sc, &v[n])
        })
        .sum::<f64>()
        / n_c
}
