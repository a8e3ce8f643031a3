//! Simplified high-resolution codebook: per layer, a combination of the
//! strongest orthogonal 2D-DFT beams with coarse amplitude and phase quantization.

use std::f64::consts::{FRAC_PI_4, TAU};

use crate::error::{Error, Result};
use crate::linalg::{cis, frobenius_sq, orthonormalize_columns, svd_sorted, CMat, CVec, C64};

use super::Precoder;

/// 3-bit wideband amplitude alphabet.
pub const AMPLITUDE_SET: [f64; 8] = [
    1.0,
    std::f64::consts::FRAC_1_SQRT_2,
    0.5,
    0.353_553_390_593_273_8,
    0.25,
    0.176_776_695_296_636_9,
    0.125,
    0.0,
];

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Type2Config {
    /// Panel columns (first index) and rows.
    pub n1: usize,
    pub n2: usize,
    pub o1: usize,
    pub o2: usize,
    pub n_beams: usize,
    pub quantize: bool,
}

impl Type2Config {
    pub fn for_panel(n1: usize, n2: usize, n_beams: usize) -> Self {
        Self { n1, n2, o1: 4, o2: if n2 > 1 { 4 } else { 1 }, n_beams, quantize: true }
    }

    pub fn n_ports(&self) -> usize {
        self.n1 * self.n2
    }
}

/// Unit-norm oversampled DFT beam `(l, m)` on an `n1 x n2` panel with port
/// index `col + n1·row`.
pub fn dft_beam(n1: usize, n2: usize, o1: usize, o2: usize, l: usize, m: usize) -> CVec {
    let norm = 1.0 / ((n1 * n2) as f64).sqrt();
    CVec::from_fn(n1 * n2, |i, _| {
        let (col, row) = (i % n1, i / n1);
        let ph = TAU * (col * l) as f64 / (o1 * n1) as f64 + TAU * (row * m) as f64 / (o2 * n2) as f64;
        cis(ph) * norm
    })
}

fn quantize_coefficients(c: &CVec) -> CVec {
    let (imax, ref_val) = c
        .iter()
        .enumerate()
        .max_by(|a, b| a.1.norm().total_cmp(&b.1.norm()))
        .map(|(i, z)| (i, *z))
        .unwrap_or((0, C64::new(1.0, 0.0)));
    if ref_val.norm() == 0.0 {
        let mut e = CVec::zeros(c.len());
        e[imax] = C64::new(1.0, 0.0);
        return e;
    }
    c.map(|z| {
        let rel = z / ref_val;
        let amp = AMPLITUDE_SET
            .iter()
            .copied()
            .min_by(|a, b| (a - rel.norm()).abs().total_cmp(&(b - rel.norm()).abs()))
            .unwrap_or(0.0);
        let phase = (rel.arg() / FRAC_PI_4).round() * FRAC_PI_4;
        cis(phase) * amp
    })
}

/// Beam-combination precoder for `h_est` (`n_rx x n_tx`, typically noise-whitened).
///
/// The orthogonal beam group whose `n_beams` strongest beams capture the most
/// energy is chosen; each layer's combining weights are the corresponding
/// right singular vector of `h_est·B`, optionally quantized, and the final
/// columns are re-orthonormalized.
pub fn type2_like_precoder(h_est: &CMat, cfg: &Type2Config, rank: usize, power: f64) -> Result<Precoder> {
    if h_est.ncols() != cfg.n_ports() {
        return Err(Error::Dimension(format!("codebook for {} ports, channel has {}", cfg.n_ports(), h_est.ncols())));
    }
    if rank == 0 || cfg.n_beams < rank || cfg.n_beams > cfg.n_ports() {
        return Err(Error::Domain(format!("need 1 <= rank ({rank}) <= beams ({}) <= ports", cfg.n_beams)));
    }
    // groups whose top beams span the same subspace tie on energy; the
    // strongest single beam breaks the tie
    let mut best: Option<(f64, f64, Vec<CVec>)> = None;
    for q1 in 0..cfg.o1 {
        for q2 in 0..cfg.o2 {
            let mut beams: Vec<(f64, CVec)> = (0..cfg.n1)
                .flat_map(|i1| (0..cfg.n2).map(move |i2| (i1, i2)))
                .map(|(i1, i2)| {
                    let b = dft_beam(cfg.n1, cfg.n2, cfg.o1, cfg.o2, cfg.o1 * i1 + q1, cfg.o2 * i2 + q2);
                    ((h_est * &b).norm_squared(), b)
                })
                .collect();
            beams.sort_by(|a, b| b.0.total_cmp(&a.0));
            beams.truncate(cfg.n_beams);
            let energy: f64 = beams.iter().map(|b| b.0).sum();
            let top = beams.first().map_or(0.0, |b| b.0);
            let better = best.as_ref().is_none_or(|(e, t, _)| {
                let tol = 1e-9 * e.max(energy);
                energy > e + tol || ((energy - e).abs() <= tol && top > *t)
            });
            if better {
                best = Some((energy, top, beams.into_iter().map(|b| b.1).collect()));
            }
        }
    }
    let beams = best.map(|b| b.2).unwrap_or_default();
    let b = CMat::from_columns(&beams);
    let svd = svd_sorted(&(h_est * &b));
    let mut cols = Vec::with_capacity(rank);
    for k in 0..rank {
        let coeff: CVec = if k < svd.v.ncols() { svd.v.column(k).into_owned() } else { CVec::zeros(cfg.n_beams) };
        let coeff = if cfg.quantize { quantize_coefficients(&coeff) } else { coeff };
        cols.push(&b * coeff);
    }
    let p = orthonormalize_columns(&CMat::from_columns(&cols));
    Ok(Precoder::equal_power(p, power))
}

/// Fraction of `‖H P‖²_F` achieved relative to the SVD precoder of equal rank.
pub fn energy_ratio_vs_svd(h: &CMat, p: &Precoder) -> f64 {
    let svd = svd_sorted(h);
    let top: f64 = svd.s.iter().take(p.rank()).map(|s| s * s).sum();
    if top == 0.0 {
        return 1.0;
    }
    frobenius_sq(&(h * &p.p)) / top
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::channel::{assemble_channel, gen_rays, Band, Endpoint, LargeScale, LinkGeometry, RayConfig};
    use crate::linalg::{chordal_distance, complex_gaussian, identity};
    use crate::phy::{capacity, svd_precoder};
    use crate::scenario::{ArrayGeometry, ElementPattern, Pose, Vec3};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn grid_beam_channel_recovers_the_beam() {
        let cfg = Type2Config::for_panel(8, 4, 4);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for (l, m) in [(0, 0), (5, 3), (17, 9), (31, 15)] {
            let b = dft_beam(8, 4, 4, 4, l, m);
            let u = complex_gaussian(4, 1, &mut rng);
            let h = &u * b.adjoint();
            let p = type2_like_precoder(&h, &cfg, 1, 1.0).unwrap();
            let bm = CMat::from_columns(&[b]);
            assert!(chordal_distance(&p.p, &bm) < 1e-9, "({l},{m}) d={}", chordal_distance(&p.p, &bm));
        }
    }

    #[test]
    fn unconstrained_limit_matches_svd() {
        let cfg = Type2Config { n_beams: 32, quantize: false, ..Type2Config::for_panel(8, 4, 32) };
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let r = identity(4);
        for _ in 0..20 {
            let h = complex_gaussian(4, 32, &mut rng);
            for rank in 1..=4 {
                let t2 = type2_like_precoder(&h, &cfg, rank, 10.0).unwrap();
                let sv = svd_precoder(&h, rank, 10.0).unwrap();
                assert!((capacity(&h, &t2, &r).unwrap() - capacity(&h, &sv, &r).unwrap()).abs() < 1e-6);
            }
        }
    }

    #[test]
    fn columns_orthonormal() {
        let cfg = Type2Config::for_panel(8, 4, 4);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let h = complex_gaussian(4, 32, &mut rng);
        let p = type2_like_precoder(&h, &cfg, 4, 1.0).unwrap();
        assert!((p.p.adjoint() * &p.p - identity(4)).norm() < 1e-9);
        assert!(type2_like_precoder(&h, &cfg, 5, 1.0).is_err());
    }

    #[test]
    fn quantization_loss_bounded_on_clustered_channels() {
        let cfg = Type2Config::for_panel(8, 4, 4);
        let panel = ArrayGeometry::panel(8, 4, 0.075, ElementPattern::Isotropic);
        let ue = ArrayGeometry::handset(4);
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let large = LargeScale { pathloss_db: 0.0, shadowing_db: 0.0, penetration_db: 0.0, los: false };
        for _ in 0..1000 {
            let rx = Vec3::new(rng.random_range(40.0..150.0), rng.random_range(-80.0..80.0), 1.5);
            let g = LinkGeometry { tx: Vec3::new(0.0, 0.0, 25.0), rx };
            let rays = gen_rays(&g, rng.random_bool(0.3), &RayConfig::default(), &mut rng).unwrap();
            let (tp, rp) = (Pose::at(g.tx), Pose::yaw_pitch(rx, rng.random_range(-180.0..180.0), 0.0));
            let ch = assemble_channel(&rays, Endpoint { array: &panel, pose: &tp }, Endpoint { array: &ue, pose: &rp }, &large, &[0.0], 2.0, Band::Low).unwrap();
            for rank in [1, 2] {
                let p = type2_like_precoder(&ch.h[0], &cfg, rank, 1.0).unwrap();
                assert!(energy_ratio_vs_svd(&ch.h[0], &p) >= 0.5);
            }
        }
    }
}
