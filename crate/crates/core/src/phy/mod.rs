//! Link abstraction: precoders, MMSE-IRC combining, per-layer SINR and the
//! capped-Shannon spectral-efficiency mapping.

mod type2;

use serde::Serialize;

pub use type2::{dft_beam, energy_ratio_vs_svd, type2_like_precoder, Type2Config, AMPLITUDE_SET};

use crate::error::{Error, Result};
use crate::linalg::{
    diag_real, hermitian_eigen, hermitize, hpd_inverse, identity, inv_sqrt_hpd, log2_det_hpd, numerical_rank,
    scaled_identity, svd_sorted, trace_re, CMat, C64,
};

pub const DEFAULT_SE_CAP: f64 = 7.4;
/// Singular values below this fraction of the largest do not count toward rank.
pub const RANK_TOL: f64 = 1e-9;
/// Relative SE margin a higher rank must clear to be preferred.
pub const RANK_SE_REL_TOL: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq)]
pub struct Precoder {
    /// `n_tx x n_layers`, orthonormal columns.
    pub p: CMat,
    pub power_per_layer: Vec<f64>,
}

impl Precoder {
    pub fn rank(&self) -> usize {
        self.p.ncols()
    }

    pub fn total_power(&self) -> f64 {
        self.power_per_layer.iter().sum()
    }

    /// `P · diag(√power)`.
    pub fn scaled(&self) -> CMat {
        let amps: Vec<f64> = self.power_per_layer.iter().map(|p| p.max(0.0).sqrt()).collect();
        &self.p * diag_real(&amps)
    }

    pub fn equal_power(p: CMat, power: f64) -> Self {
        let r = p.ncols().max(1);
        Self { power_per_layer: vec![power / r as f64; p.ncols()], p }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct LinkReport {
    #[serde(skip)]
    pub h_eff: CMat,
    #[serde(skip)]
    pub r_nn: CMat,
    pub sinr: Vec<f64>,
    pub se_bps_hz: f64,
    pub rank: usize,
}

/// Top-`rank` right singular vectors of `h`, equal power split.
pub fn svd_precoder(h: &CMat, rank: usize, power: f64) -> Result<Precoder> {
    let max = h.nrows().min(h.ncols());
    let available = numerical_rank(h, RANK_TOL);
    if rank == 0 || rank > max || rank > available {
        return Err(Error::RankDeficient { requested: rank, available: available.min(max) });
    }
    let svd = svd_sorted(h);
    Ok(Precoder::equal_power(svd.v.columns(0, rank).into_owned(), power))
}

/// SINRs of the MMSE receiver from the Gram matrix `G = Aᴴ R⁻¹ A`:
/// `SINR_k = 1/[(I + G)⁻¹]_kk − 1`.
pub fn sinr_from_gram(gram: &CMat) -> Result<Vec<f64>> {
    let n = gram.nrows();
    let inv = hpd_inverse(&(hermitize(gram) + identity(n)))?;
    Ok((0..n).map(|k| (1.0 / inv[(k, k)].re - 1.0).max(0.0)).collect())
}

fn check_dims(h: &CMat, p: &Precoder, r: &CMat) -> Result<()> {
    if h.ncols() != p.p.nrows() {
        return Err(Error::Dimension(format!("channel has {} tx ports, precoder {}", h.ncols(), p.p.nrows())));
    }
    if p.power_per_layer.len() != p.p.ncols() {
        return Err(Error::Dimension("precoder power list does not match its layer count".into()));
    }
    if r.nrows() != h.nrows() || r.ncols() != h.nrows() {
        return Err(Error::Dimension(format!("noise covariance is {}x{}, channel has {} rx", r.nrows(), r.ncols(), h.nrows())));
    }
    Ok(())
}

/// MMSE-IRC combiner `W = (A Aᴴ + R)⁻¹ A` with `A = H P diag(√p)` and the per-layer SINRs.
pub fn mmse_irc_combine(h_eff: &CMat, p: &Precoder, r_nn: &CMat) -> Result<(CMat, Vec<f64>)> {
    check_dims(h_eff, p, r_nn)?;
    let a = h_eff * p.scaled();
    let total = &a * a.adjoint() + r_nn;
    let w = hpd_inverse(&total)? * &a;
    let r_inv = hpd_inverse(r_nn)?;
    let sinr = sinr_from_gram(&(a.adjoint() * r_inv * &a))?;
    Ok((w, sinr))
}

/// Per-layer MMSE SINRs only.
pub fn mmse_sinr(h_eff: &CMat, p: &Precoder, r_nn: &CMat) -> Result<Vec<f64>> {
    check_dims(h_eff, p, r_nn)?;
    let a = h_eff * p.scaled();
    sinr_from_gram(&(a.adjoint() * hpd_inverse(r_nn)? * &a))
}

/// MMSE SINRs for `R = s·I + U Uᴴ` via Woodbury, without forming `R⁻¹`.
/// With `u = None` the noise is white.
pub fn mmse_sinr_lowrank(a: &CMat, s: f64, u: Option<&CMat>) -> Result<Vec<f64>> {
    if !(s > 0.0) {
        return Err(Error::Numerical("white noise level must be positive".into()));
    }
    let mut gram = a.adjoint() * a;
    if let Some(u) = u {
        let uh_a = u.adjoint() * a;
        let core = hpd_inverse(&(scaled_identity(u.ncols(), s) + u.adjoint() * u))?;
        gram -= uh_a.adjoint() * core * uh_a;
    }
    sinr_from_gram(&(gram / C64::new(s, 0.0)))
}

/// Post-combining SINRs of per-layer matched filters that treat all
/// interference as white noise of the same total power.
pub fn mrc_white_sinr(h_eff: &CMat, p: &Precoder, r_nn: &CMat) -> Result<Vec<f64>> {
    check_dims(h_eff, p, r_nn)?;
    let a = h_eff * p.scaled();
    let cov = &a * a.adjoint() + r_nn;
    Ok((0..a.ncols())
        .map(|k| {
            let w = a.column(k);
            let sig = w.dotc(&w).norm_sqr();
            let tot = (w.adjoint() * &cov * w)[(0, 0)].re;
            sig / (tot - sig).max(f64::MIN_POSITIVE)
        })
        .collect())
}

pub fn sinr_to_se(sinr: f64, cap: f64) -> f64 {
    (1.0 + sinr.max(0.0)).log2().min(cap)
}

/// Σ over layers of the subband-mean capped SE; `sinrs[s][k]` is layer `k` on subband `s`.
pub fn effective_se(sinrs: &[Vec<f64>], cap: f64) -> Result<f64> {
    if sinrs.is_empty() {
        return Err(Error::Domain("effective SE needs at least one subband".into()));
    }
    let total: f64 = sinrs.iter().flat_map(|s| s.iter().map(|&x| sinr_to_se(x, cap))).sum();
    Ok(total / sinrs.len() as f64)
}

/// Mutual information `log2 det(I + R⁻¹ H Q Hᴴ)` with `Q = P diag(p) Pᴴ`.
pub fn capacity(h: &CMat, p: &Precoder, r_nn: &CMat) -> Result<f64> {
    check_dims(h, p, r_nn)?;
    let a = h * p.scaled();
    let n = a.ncols();
    log2_det_hpd(&(identity(n) + a.adjoint() * hpd_inverse(r_nn)? * &a))
}

/// SVD precoder on the noise-whitened channel `R^{-1/2} H`.
pub fn whitened_svd_precoder(h: &CMat, r_nn: &CMat, rank: usize, power: f64) -> Result<Precoder> {
    svd_precoder(&(inv_sqrt_hpd(r_nn)? * h), rank, power)
}

/// Rank in `[1, max_rank]` maximizing capped SE under whitened SVD precoding
/// with equal power; a higher rank must beat the best lower one by a relative
/// margin of [`RANK_SE_REL_TOL`].
pub fn select_rank(h_eff: &CMat, r_nn: &CMat, power: f64, max_rank: usize, cap: f64) -> Result<usize> {
    if max_rank == 0 {
        return Err(Error::Domain("max_rank must be at least 1".into()));
    }
    let hw = inv_sqrt_hpd(r_nn)? * h_eff;
    let limit = max_rank.min(numerical_rank(&hw, RANK_TOL)).max(1);
    let svd = svd_sorted(&hw);
    let mut best = (1, f64::NEG_INFINITY);
    for r in 1..=limit {
        let pre = Precoder::equal_power(svd.v.columns(0, r).into_owned(), power);
        let a = &hw * pre.scaled();
        let se: f64 = sinr_from_gram(&(a.adjoint() * &a))?.iter().map(|&x| sinr_to_se(x, cap)).sum();
        if se > best.1 + RANK_SE_REL_TOL * best.1.abs().max(f64::MIN_POSITIVE) || best.1 == f64::NEG_INFINITY {
            best = (r, se);
        }
    }
    Ok(best.0)
}

/// Build a full report for a fixed precoder.
pub fn link_report(h_eff: &CMat, r_nn: &CMat, p: &Precoder, cap: f64) -> Result<LinkReport> {
    let sinr = mmse_sinr(h_eff, p, r_nn)?;
    let se = sinr.iter().map(|&x| sinr_to_se(x, cap)).sum();
    Ok(LinkReport { h_eff: h_eff.clone(), r_nn: r_nn.clone(), sinr, se_bps_hz: se, rank: p.rank() })
}

/// Check the covariance contract: Hermitian and eigenvalues ≥ −1e-12·scale.
pub fn is_valid_covariance(r: &CMat) -> bool {
    if !crate::linalg::is_hermitian(r, 1e-9) {
        return false;
    }
    let scale = trace_re(r).abs().max(1.0);
    hermitian_eigen(r).0.iter().all(|&l| l >= -1e-12 * scale)
}
