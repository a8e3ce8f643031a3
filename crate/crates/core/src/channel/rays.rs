//! Reduced clustered multipath: one optional LOS ray plus a handful of NLOS
//! clusters spread around the LOS direction.

use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::Serialize;

use crate::error::{Error, Result};
use crate::scenario::{angles_of, wrap_deg, Vec3};

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Ray {
    pub power: f64,
    pub delay_s: f64,
    /// (azimuth, elevation) in degrees at the transmitter.
    pub aod: (f64, f64),
    /// (azimuth, elevation) in degrees at the receiver.
    pub aoa: (f64, f64),
    pub phase: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RaySet {
    pub rays: Vec<Ray>,
}

impl RaySet {
    pub fn total_power(&self) -> f64 {
        self.rays.iter().map(|r| r.power).sum()
    }

    pub fn scaled(&self, c: f64) -> Self {
        let rays = self.rays.iter().map(|r| Ray { power: r.power * c, ..*r }).collect();
        Self { rays }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RayConfig {
    pub n_clusters: usize,
    /// RMS angular spread (degrees) in azimuth and elevation.
    pub az_spread_deg: f64,
    pub el_spread_deg: f64,
    pub delay_spread_s: f64,
    /// Rician K in dB for LOS links; `f64::INFINITY` keeps only the LOS ray.
    pub k_factor_db: f64,
    /// Per-cluster log-normal power perturbation (dB).
    pub cluster_shadow_db: f64,
}

impl Default for RayConfig {
    fn default() -> Self {
        Self {
            n_clusters: 6,
            az_spread_deg: 10.0,
            el_spread_deg: 3.0,
            delay_spread_s: 300e-9,
            k_factor_db: 9.0,
            cluster_shadow_db: 3.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LinkGeometry {
    pub tx: Vec3,
    pub rx: Vec3,
}

impl LinkGeometry {
    pub fn distance(&self) -> f64 {
        (self.rx - self.tx).norm()
    }

    /// Geometric (aod, aoa) of the direct path.
    pub fn los_angles(&self) -> ((f64, f64), (f64, f64)) {
        (angles_of(&(self.rx - self.tx)), angles_of(&(self.tx - self.rx)))
    }
}

fn laplace<R: Rng + ?Sized>(rms: f64, rng: &mut R) -> f64 {
    // Laplacian with standard deviation `rms` has scale rms / √2
    let b = rms / std::f64::consts::SQRT_2;
    let u: f64 = rng.random_range(-0.5..0.5);
    -b * u.signum() * (1.0 - 2.0 * u.abs()).max(f64::MIN_POSITIVE).ln()
}

fn perturb<R: Rng + ?Sized>(base: (f64, f64), cfg: &RayConfig, rng: &mut R) -> (f64, f64) {
    let az = wrap_deg(base.0 + laplace(cfg.az_spread_deg, rng));
    let el = (base.1 + laplace(cfg.el_spread_deg, rng)).clamp(-90.0, 90.0);
    (az, el)
}

/// Draw a ray set for one link. Powers sum to one.
pub fn gen_rays<R: Rng + ?Sized>(geom: &LinkGeometry, los: bool, cfg: &RayConfig, rng: &mut R) -> Result<RaySet> {
    if !(geom.distance() > 0.0) {
        return Err(Error::Domain("ray generation needs distinct endpoints".into()));
    }
    let (los_aod, los_aoa) = geom.los_angles();
    let mut rays = Vec::with_capacity(cfg.n_clusters + 1);

    let k = if los { 10f64.powf(cfg.k_factor_db / 10.0) } else { 0.0 };
    if los && (k.is_infinite() || cfg.n_clusters == 0) {
        rays.push(Ray { power: 1.0, delay_s: 0.0, aod: los_aod, aoa: los_aoa, phase: rng.random_range(0.0..std::f64::consts::TAU) });
        return Ok(RaySet { rays });
    }
    if cfg.n_clusters == 0 {
        return Err(Error::Config("an NLOS link needs at least one cluster".into()));
    }
    let nlos_share = 1.0 / (1.0 + k);
    if los {
        rays.push(Ray {
            power: k * nlos_share,
            delay_s: 0.0,
            aod: los_aod,
            aoa: los_aoa,
            phase: rng.random_range(0.0..std::f64::consts::TAU),
        });
    }

    let shadow = Normal::new(0.0, cfg.cluster_shadow_db.max(0.0)).map_err(|e| Error::Config(e.to_string()))?;
    let mut delays: Vec<f64> = (0..cfg.n_clusters)
        .map(|_| -cfg.delay_spread_s * rng.random_range(f64::MIN_POSITIVE..1.0f64).ln())
        .collect();
    delays.sort_by(f64::total_cmp);
    let d0 = if los { 0.0 } else { delays[0] };
    let mut powers = Vec::with_capacity(cfg.n_clusters);
    for &d in &delays {
        let z: f64 = shadow.sample(rng);
        powers.push((-(d - d0) / cfg.delay_spread_s.max(f64::MIN_POSITIVE)).exp() * 10f64.powf(-z / 10.0));
    }
    let sum: f64 = powers.iter().sum();
    for (d, p) in delays.iter().zip(&powers) {
        rays.push(Ray {
            power: p / sum * nlos_share,
            delay_s: d - d0,
            aod: perturb(los_aod, cfg, rng),
            aoa: perturb(los_aoa, cfg, rng),
            phase: rng.random_range(0.0..std::f64::consts::TAU),
        });
    }
    Ok(RaySet { rays })
}
