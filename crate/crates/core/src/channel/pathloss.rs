//! Large-scale propagation: urban-macro pathloss, LOS probability,
//! outdoor-to-indoor penetration, shadowing and free-space loss.

use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::Serialize;

use crate::error::{Error, Result};
use crate::units::SPEED_OF_LIGHT;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct LargeScale {
    pub pathloss_db: f64,
    pub shadowing_db: f64,
    pub penetration_db: f64,
    pub los: bool,
}

impl LargeScale {
    pub fn total_loss_db(&self) -> f64 {
        self.pathloss_db + self.shadowing_db + self.penetration_db
    }

    /// Linear power gain `10^(-loss/10)`.
    pub fn linear(&self) -> f64 {
        10f64.powf(-self.total_loss_db() / 10.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Heights {
    pub bs_m: f64,
    pub ut_m: f64,
}

impl Default for Heights {
    fn default() -> Self {
        Self { bs_m: 25.0, ut_m: 1.5 }
    }
}

pub const SHADOWING_SIGMA_LOS_DB: f64 = 4.0;
pub const SHADOWING_SIGMA_NLOS_DB: f64 = 6.0;
pub const INDOOR_LOSS_DB_PER_M: f64 = 0.5;

/// Urban-macro pathloss (dB) at 3D distance `d3d` metres and carrier `f_ghz`.
///
/// LOS uses the two-slope model with effective-height breakpoint; NLOS is
/// `max(LOS, 13.54 + 39.08 log10 d + 20 log10 f - 0.6 (h_ut - 1.5))`.
pub fn pathloss(d3d: f64, f_ghz: f64, los: bool, heights: Heights) -> Result<f64> {
    if !(d3d >= 1.0) || !d3d.is_finite() {
        return Err(Error::Domain(format!("pathloss distance {d3d} m below 1 m")));
    }
    if !(f_ghz > 0.0) {
        return Err(Error::Domain(format!("carrier frequency {f_ghz} GHz must be positive")));
    }
    let dh = heights.bs_m - heights.ut_m;
    let d2d = (d3d * d3d - dh * dh).max(0.0).sqrt();
    let d_bp = 4.0 * (heights.bs_m - 1.0) * (heights.ut_m - 1.0).max(0.0) * f_ghz * 1e9 / SPEED_OF_LIGHT;
    let lf = 20.0 * f_ghz.log10();
    let pl_los = if d2d <= d_bp || d_bp <= 0.0 {
        28.0 + 22.0 * d3d.log10() + lf
    } else {
        28.0 + 40.0 * d3d.log10() + lf - 9.0 * (d_bp * d_bp + dh * dh).log10()
    };
    if los {
        Ok(pl_los)
    } else {
        let pl_nlos = 13.54 + 39.08 * d3d.log10() + lf - 0.6 * (heights.ut_m - 1.5);
        Ok(pl_los.max(pl_nlos))
    }
}

/// Urban-macro LOS probability for outdoor 2D distance `d2d_out` and terminal height.
pub fn los_probability(d2d_out: f64, h_ut: f64) -> f64 {
    if d2d_out <= 18.0 {
        return 1.0;
    }
    let c = if h_ut <= 13.0 { 0.0 } else { ((h_ut - 13.0) / 10.0).powf(1.5) };
    let base = 18.0 / d2d_out + (-d2d_out / 63.0).exp() * (1.0 - 18.0 / d2d_out);
    base * (1.0 + c * 1.25 * (d2d_out / 100.0).powi(3) * (-d2d_out / 150.0).exp())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum O2iModel {
    LowLoss,
    HighLoss,
}

impl O2iModel {
    pub fn sigma_db(self) -> f64 {
        match self {
            O2iModel::LowLoss => 4.4,
            O2iModel::HighLoss => 6.5,
        }
    }
}

/// Building-entry (wall) loss of the composite glass/concrete or IRR-glass/concrete facade.
pub fn o2i_wall_loss_db(f_ghz: f64, model: O2iModel) -> f64 {
    let l_glass = 2.0 + 0.2 * f_ghz;
    let l_irr = 23.0 + 0.3 * f_ghz;
    let l_concrete = 5.0 + 4.0 * f_ghz;
    let mix = match model {
        O2iModel::LowLoss => 0.3 * 10f64.powf(-l_glass / 10.0) + 0.7 * 10f64.powf(-l_concrete / 10.0),
        O2iModel::HighLoss => 0.7 * 10f64.powf(-l_irr / 10.0) + 0.3 * 10f64.powf(-l_concrete / 10.0),
    };
    5.0 - 10.0 * mix.log10()
}

/// Deterministic part of the penetration loss: wall plus 0.5 dB/m inside.
pub fn o2i_mean_db(f_ghz: f64, depth_m: f64, model: O2iModel) -> f64 {
    o2i_wall_loss_db(f_ghz, model) + INDOOR_LOSS_DB_PER_M * depth_m
}

/// Low-loss outdoor-to-indoor penetration with its Gaussian random term, floored at zero.
pub fn o2i_penetration<R: Rng + ?Sized>(f_ghz: f64, depth_m: f64, rng: &mut R) -> f64 {
    o2i_penetration_with(f_ghz, depth_m, O2iModel::LowLoss, rng)
}

pub fn o2i_penetration_with<R: Rng + ?Sized>(f_ghz: f64, depth_m: f64, model: O2iModel, rng: &mut R) -> f64 {
    let n = Normal::new(0.0, model.sigma_db()).expect("finite sigma");
    (o2i_mean_db(f_ghz, depth_m.max(0.0), model) + n.sample(rng)).max(0.0)
}

/// Indoor depth: minimum of two uniform draws on [0, 25] m.
pub fn draw_indoor_depth<R: Rng + ?Sized>(rng: &mut R) -> f64 {
    let a: f64 = rng.random_range(0.0..25.0);
    let b: f64 = rng.random_range(0.0..25.0);
    a.min(b)
}

pub fn shadowing_sigma_db(los: bool) -> f64 {
    if los {
        SHADOWING_SIGMA_LOS_DB
    } else {
        SHADOWING_SIGMA_NLOS_DB
    }
}

pub fn draw_shadowing<R: Rng + ?Sized>(los: bool, rng: &mut R) -> f64 {
    Normal::new(0.0, shadowing_sigma_db(los)).expect("finite sigma").sample(rng)
}

/// Free-space loss `32.45 + 20 log10(d_km) + 20 log10(f_MHz)`.
pub fn friis_loss_db(d_m: f64, f_ghz: f64) -> Result<f64> {
    if !(d_m > 0.0) {
        return Err(Error::Domain("free-space loss needs a positive distance".into()));
    }
    Ok(32.45 + 20.0 * (d_m / 1000.0).log10() + 20.0 * (f_ghz * 1000.0).log10())
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    const H: Heights = Heights { bs_m: 25.0, ut_m: 1.5 };

    #[test]
    fn reference_values() {
        assert!((pathloss(100.0, 2.0, true, H).unwrap() - 78.02).abs() < 0.01);
        assert!((pathloss(100.0, 2.0, false, H).unwrap() - 97.72).abs() < 0.01);
        assert!((o2i_wall_loss_db(2.0, O2iModel::LowLoss) - 11.83).abs() < 0.01);
        assert!(o2i_wall_loss_db(6.0, O2iModel::LowLoss) > o2i_wall_loss_db(2.0, O2iModel::LowLoss));
        assert!((o2i_mean_db(2.0, 10.0, O2iModel::LowLoss) - o2i_mean_db(2.0, 0.0, O2iModel::LowLoss) - 5.0).abs() < 1e-12);
        assert!((friis_loss_db(1.0, 6.0).unwrap() - 48.01).abs() < 0.01);
        assert!((friis_loss_db(1.0, 2.0).unwrap() - 38.47).abs() < 0.01);
    }

    #[test]
    fn domain_errors() {
        assert!(pathloss(0.5, 2.0, true, H).is_err());
        assert!(pathloss(f64::NAN, 2.0, true, H).is_err());
        assert!(friis_loss_db(0.0, 6.0).is_err());
    }

    #[test]
    fn monotone_over_sweep() {
        for los in [true, false] {
            let mut prev = 0.0;
            for i in 0..=2000 {
                let d = 1.0 + i as f64 * 0.5;
                let pl = pathloss(d, 2.0, los, H).unwrap();
                assert!(pl > 0.0 && pl >= prev - 1e-9, "d={d} los={los}");
                prev = pl;
            }
        }
        assert!(pathloss(200.0, 6.0, false, H).unwrap() > pathloss(100.0, 6.0, false, H).unwrap());
    }

    #[test]
    fn los_probability_bounds() {
        assert_eq!(los_probability(10.0, 1.5), 1.0);
        let mut prev = 1.0;
        for d in (19..500).map(|x| x as f64) {
            let p = los_probability(d, 1.5);
            assert!((0.0..=1.0).contains(&p) && p <= prev + 1e-12);
            prev = p;
        }
    }

    #[test]
    fn penetration_nonnegative_and_frequency_ordered_on_average() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let n = 4000;
        let mut m2 = 0.0;
        let mut m6 = 0.0;
        for _ in 0..n {
            let a = o2i_penetration(2.0, 5.0, &mut rng);
            let b = o2i_penetration(6.0, 5.0, &mut rng);
            assert!(a >= 0.0 && b >= 0.0);
            m2 += a;
            m6 += b;
        }
        assert!(m6 > m2);
    }

    #[test]
    fn high_loss_is_lossier() {
        for f in [2.0, 6.0] {
            assert!(o2i_wall_loss_db(f, O2iModel::HighLoss) > o2i_wall_loss_db(f, O2iModel::LowLoss) + 5.0);
        }
    }
}
