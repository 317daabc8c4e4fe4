//! Clustered-ray frequency-selective downlink channels.
//!
//! Each user sees a few scattering clusters around its direction of
//! departure. Cluster powers decay exponentially, rays inside a cluster
//! spread uniformly in angle, and each cluster carries one excess delay that
//! produces the frequency selectivity across subcarriers.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::params::{steering_vector, SystemConfig, SPEED_OF_LIGHT};
use crate::waveform::cis;
use crate::{CVec, Complex64};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ChannelSpec {
    pub count: usize,
    pub range_m: f64,
    pub clusters: usize,
    pub rays_per_cluster: usize,
    pub angle_spread_deg: f64,
    /// Mean total power gain per antenna, dB.
    pub gain_db: f64,
    pub delay_spread_ns: f64,
    /// Directions of departure; drawn uniformly in [-60, 60] deg when empty.
    pub angles_deg: Vec<f64>,
    pub seed: u64,
}

impl Default for ChannelSpec {
    fn default() -> Self {
        Self {
            count: 4,
            range_m: 40.0,
            clusters: 3,
            rays_per_cluster: 4,
            angle_spread_deg: 5.0,
            gain_db: -58.0,
            delay_spread_ns: 50.0,
            angles_deg: Vec::new(),
            seed: 0,
        }
    }
}

/// Downlink channel vectors `h[n][k]` of length `N_T`.
#[derive(Debug, Clone, PartialEq)]
pub struct CommChannelSet {
    pub h: Vec<Vec<CVec>>,
    pub noise_var: Vec<f64>,
}

impl CommChannelSet {
    pub fn new(h: Vec<Vec<CVec>>, noise_var: Vec<f64>) -> Result<Self> {
        let k = noise_var.len();
        if k == 0 {
            return Err(Error::Config("channel set needs at least one user".into()));
        }
        if h.is_empty() {
            return Err(Error::Config("channel set needs at least one subcarrier".into()));
        }
        let n_t = h[0].first().map_or(0, |v| v.len());
        for (n, users) in h.iter().enumerate() {
            if users.len() != k || users.iter().any(|v| v.len() != n_t) {
                return Err(Error::Dimension(format!("subcarrier {n} channel shape mismatch")));
            }
            if users.iter().flat_map(|v| v.iter()).any(|z| !z.re.is_finite() || !z.im.is_finite()) {
                return Err(Error::Validation(format!("non-finite channel on subcarrier {n}")));
            }
        }
        if noise_var.iter().any(|&s| s.is_nan() || s <= 0.0) {
            return Err(Error::Config("noise variances must be positive".into()));
        }
        Ok(Self { h, noise_var })
    }

    pub fn n_users(&self) -> usize {
        self.noise_var.len()
    }

    pub fn n_subcarriers(&self) -> usize {
        self.h.len()
    }

    /// Multiplies every channel by `c` and every noise variance by `c^2`.
    pub fn scaled(&self, c: f64) -> Self {
        Self {
            h: self.h.iter().map(|u| u.iter().map(|v| v * Complex64::from(c)).collect()).collect(),
            noise_var: self.noise_var.iter().map(|s| s * c * c).collect(),
        }
    }
}

pub fn generate_channels(spec: &ChannelSpec, cfg: &SystemConfig) -> Result<CommChannelSet> {
    if spec.count == 0 || spec.clusters == 0 || spec.rays_per_cluster == 0 {
        return Err(Error::Config("users, clusters and rays must all be at least 1".into()));
    }
    if !spec.angles_deg.is_empty() && spec.angles_deg.len() != spec.count {
        return Err(Error::Config(format!("{} user angles given for {} users", spec.angles_deg.len(), spec.count)));
    }
    if !(spec.angle_spread_deg >= 0.0 && spec.delay_spread_ns >= 0.0 && spec.range_m >= 0.0) {
        return Err(Error::Config("channel spreads and range must be nonnegative".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let std_normal = Normal::new(0.0, 1.0).expect("unit normal");
    let power = 10f64.powf(spec.gain_db / 10.0);
    let weights: Vec<f64> = (0..spec.clusters).map(|c| (-(c as f64)).exp()).collect();
    let wsum: f64 = weights.iter().sum();

    struct Ray {
        gain: Complex64,
        steer: CVec,
        delay_s: f64,
    }
    let mut users: Vec<Vec<Ray>> = Vec::with_capacity(spec.count);
    for k in 0..spec.count {
        let center = match spec.angles_deg.get(k) {
            Some(a) => a.to_radians(),
            None => rng.random_range(-60.0f64..60.0).to_radians(),
        };
        let base_delay = spec.range_m / SPEED_OF_LIGHT;
        let mut rays = Vec::new();
        for (c, w) in weights.iter().enumerate() {
            let cluster_angle = if c == 0 { center } else { center + rng.random_range(-30.0f64..30.0).to_radians() };
            let delay_s = base_delay + rng.random::<f64>() * spec.delay_spread_ns * 1e-9;
            let ray_var = power * w / wsum / spec.rays_per_cluster as f64;
            for _ in 0..spec.rays_per_cluster {
                let spread = spec.angle_spread_deg.to_radians();
                let angle = cluster_angle + spread * (2.0 * rng.random::<f64>() - 1.0);
                let gain =
                    Complex64::new(std_normal.sample(&mut rng), std_normal.sample(&mut rng)) * (ray_var / 2.0).sqrt();
                rays.push(Ray { gain, steer: steering_vector(angle, cfg.n_tx(), cfg.antenna_sep()), delay_s });
            }
        }
        users.push(rays);
    }

    let df = cfg.subcarrier_spacing;
    let h = (0..cfg.n_subcarriers())
        .map(|n| {
            users
                .iter()
                .map(|rays| {
                    let mut v = CVec::zeros(cfg.n_tx());
                    for r in rays {
                        // h^H x then sees gain * a^H x * exp(-j 2 pi n df tau).
                        let coeff = (r.gain * cis(-(n as f64) * df * r.delay_s)).conj();
                        v.axpy(coeff, &r.steer, Complex64::new(1.0, 0.0));
                    }
                    v
                })
                .collect()
        })
        .collect();
    CommChannelSet::new(h, vec![cfg.noise_var(); spec.count])
}
