//! Collaborative links: frequency-translation amplify-and-forward relay
//! chains, diversity arms and rank-augmented (stacked) effective links.
//!
//! The device-to-device hop is a single LOS ray and therefore rank one. When
//! a helper forwards several streams, each stream is translated to its own
//! sub-channel of the high band and received with transmit/receive maximum
//! ratio combining, so the second hop is a diagonal channel `g·I` in units
//! whitened by the primary's high-band noise plus interference.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::linalg::{
    block_diag, hermitize, hstack, identity, inv_sqrt_hpd, scaled_identity, svd_sorted, trace_re, vstack, CMat, C64,
};
use crate::phy::LinkReport;
use crate::units::{dbm_to_watts, watts_to_dbm};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Provenance {
    Direct,
    Relayed,
    Stacked,
}

#[derive(Debug, Clone)]
pub struct EffectiveLink {
    pub h_eff: CMat,
    pub r_nn: CMat,
    pub provenance: Provenance,
}

#[derive(Debug, Clone)]
pub struct RelayChain {
    pub h1: CMat,
    /// Receive beamformer, `n_out x n_helper_rx`.
    pub w: CMat,
    /// Amplitude gain.
    pub gain: f64,
    pub h2: CMat,
    pub r1: CMat,
    pub r2: CMat,
    pub cap_dbm: f64,
}

impl RelayChain {
    /// Mean output power (W) for a first-hop transmit covariance `q`.
    pub fn output_power_w(&self, q: &CMat) -> f64 {
        self.gain * self.gain * relay_input_power_w(&self.w, &self.h1, q, &self.r1)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum PathChoice {
    Direct,
    Relayed,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum CaSelection {
    Legacy2CA,
    Collaborate,
}

/// Whitened-MRC receive directions: the top `n_out` left singular vectors of
/// `R^{-1/2} H₁`, applied after whitening (`W = U_nᴴ R^{-1/2}`, so `W R Wᴴ = I`).
pub fn relay_rx_beamformer(h1: &CMat, r_int: &CMat, n_out: usize) -> Result<CMat> {
    if n_out == 0 || n_out > h1.nrows() {
        return Err(Error::Dimension(format!("cannot form {n_out} relay outputs from {} antennas", h1.nrows())));
    }
    if r_int.nrows() != h1.nrows() || r_int.ncols() != h1.nrows() {
        return Err(Error::Dimension("relay interference covariance does not match its antenna count".into()));
    }
    let wh = inv_sqrt_hpd(r_int)?;
    let svd = svd_sorted(&(&wh * h1));
    let mut u = CMat::zeros(h1.nrows(), n_out);
    for k in 0..n_out {
        if k < svd.u.ncols() {
            u.set_column(k, &svd.u.column(k));
        }
    }
    if svd.u.ncols() < n_out {
        // fewer singular directions than outputs: complete with an orthonormal basis
        u = crate::linalg::orthonormalize_columns(&u);
    }
    Ok(u.adjoint() * wh)
}

/// Amplitude gain that drives the output to `cap_dbm`: `20·log10 G = cap − input`.
pub fn relay_gain(input_power_dbm: f64, cap_dbm: f64) -> f64 {
    10f64.powf((cap_dbm - input_power_dbm) / 20.0)
}

/// `tr(W (H₁ Q H₁ᴴ + R₁) Wᴴ)`.
pub fn relay_input_power_w(w: &CMat, h1: &CMat, q: &CMat, r1: &CMat) -> f64 {
    let cov = h1 * q * h1.adjoint() + r1;
    trace_re(&(w * cov * w.adjoint()))
}

/// Relay gain for a known total received covariance at the helper
/// (desired signal, interference and noise).
pub fn agc_gain(w: &CMat, rx_cov: &CMat, cap_dbm: f64) -> f64 {
    let p = trace_re(&(w * rx_cov * w.adjoint()));
    if p <= 0.0 {
        return 0.0;
    }
    relay_gain(watts_to_dbm(p), cap_dbm)
}

/// `H_eff = H₂ G W H₁`, `R_eff = G² H₂ W R₁ Wᴴ H₂ᴴ + R₂`.
pub fn compose_af_link(chain: &RelayChain) -> Result<EffectiveLink> {
    let RelayChain { h1, w, gain, h2, r1, r2, .. } = chain;
    if w.ncols() != h1.nrows() || h2.ncols() != w.nrows() || r1.nrows() != h1.nrows() || r2.nrows() != h2.nrows() {
        return Err(Error::Dimension(format!(
            "relay chain shapes H2 {:?}, W {:?}, H1 {:?}, R1 {:?}, R2 {:?} do not compose",
            h2.shape(),
            w.shape(),
            h1.shape(),
            r1.shape(),
            r2.shape()
        )));
    }
    if !(*gain >= 0.0) {
        return Err(Error::Domain("relay gain must be nonnegative".into()));
    }
    let g = C64::new(*gain, 0.0);
    let h2w = h2 * w;
    let h_eff = &h2w * h1 * g;
    let r_nn = hermitize(&(&h2w * r1 * h2w.adjoint() * C64::new(gain * gain, 0.0) + r2));
    Ok(EffectiveLink { h_eff, r_nn, provenance: Provenance::Relayed })
}

/// Second hop of a stream-multiplexed frequency translation: each of the
/// `n_streams` forwarded streams rides its own sub-channel over the rank-one
/// local link, combined with MRT at the sender and whitened MRC at the receiver.
/// Returns `(g·I, I)` in whitened units, `g = σ_max(R^{-1/2} H_loc)`.
pub fn translated_second_hop(h_loc: &CMat, r_loc: &CMat, n_streams: usize) -> Result<(CMat, CMat)> {
    let g = local_link_gain(h_loc, r_loc)?;
    Ok((scaled_identity(n_streams, g), identity(n_streams)))
}

/// `σ_max(R^{-1/2} H)`: amplitude gain of the best single stream over a link.
pub fn local_link_gain(h_loc: &CMat, r_loc: &CMat) -> Result<f64> {
    let hw = inv_sqrt_hpd(r_loc)? * h_loc;
    Ok(svd_sorted(&hw).s.first().copied().unwrap_or(0.0))
}

/// Per-subband channel state of one collaboration group, as seen in the
/// downlink. Covariances are in watts.
#[derive(Debug, Clone)]
pub struct DlGroupChannels {
    /// Serving BS → primary, low band.
    pub h_direct: CMat,
    /// Noise plus interference at the primary, low band.
    pub r_direct: CMat,
    /// Serving BS → helper, low band.
    pub h_helper: CMat,
    /// Noise plus interference at the helper, low band.
    pub r_helper: CMat,
    /// Everything the helper receives (serving cell included); drives the AGC.
    pub rx_cov_helper: CMat,
    /// Helper → primary local link, high band.
    pub h_local: CMat,
    /// Noise plus high-band interference at the primary.
    pub r_local: CMat,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RelaySettings {
    pub n_out: usize,
    pub cap_dbm: f64,
}

/// AF relay chain for one subband: whitened-MRC combining designed on
/// `r_design`, AGC to the output cap, translated local link as second hop.
pub fn dl_relay_chain(gc: &DlGroupChannels, r_design: &CMat, settings: RelaySettings) -> Result<RelayChain> {
    let n_out = settings.n_out.min(gc.h_helper.nrows());
    let w = relay_rx_beamformer(&gc.h_helper, r_design, n_out)?;
    let gain = agc_gain(&w, &gc.rx_cov_helper, settings.cap_dbm);
    let (h2, r2) = translated_second_hop(&gc.h_local, &gc.r_local, n_out)?;
    Ok(RelayChain { h1: gc.h_helper.clone(), w, gain, h2, r1: gc.r_helper.clone(), r2, cap_dbm: settings.cap_dbm })
}

/// Direct arm (BS → primary) and relayed arm (BS → helper → primary).
pub fn build_diversity_arms(gc: &DlGroupChannels, settings: RelaySettings) -> Result<(EffectiveLink, EffectiveLink)> {
    let direct = EffectiveLink { h_eff: gc.h_direct.clone(), r_nn: gc.r_direct.clone(), provenance: Provenance::Direct };
    let chain = dl_relay_chain(gc, &gc.r_helper, settings)?;
    Ok((direct, compose_af_link(&chain)?))
}

/// Higher SE wins; ties keep the direct path.
pub fn diversity_select(direct: &LinkReport, relayed: &LinkReport) -> PathChoice {
    if relayed.se_bps_hz > direct.se_bps_hz {
        PathChoice::Relayed
    } else {
        PathChoice::Direct
    }
}

/// Stack a direct link and a relayed link that see the same transmitter.
pub fn stack_links(direct: &EffectiveLink, relayed: &EffectiveLink) -> Result<EffectiveLink> {
    Ok(EffectiveLink {
        h_eff: vstack(&direct.h_eff, &relayed.h_eff)?,
        r_nn: block_diag(&direct.r_nn, &relayed.r_nn),
        provenance: Provenance::Stacked,
    })
}

/// Downlink rank augmentation: the primary's own antennas stacked with the
/// helper's relayed outputs.
pub fn build_rank_augmented_link_dl(gc: &DlGroupChannels, settings: RelaySettings) -> Result<EffectiveLink> {
    let (direct, relayed) = build_diversity_arms(gc, settings)?;
    stack_links(&direct, &relayed)
}

/// Uplink state of one group on one subband.
#[derive(Debug, Clone)]
pub struct UlGroupChannels {
    /// Primary → BS, low band (`n_bs x n_primary_tx`).
    pub h_direct: CMat,
    /// Helper → BS, low band (`n_bs x n_helper_tx`).
    pub h_helper: CMat,
    /// Primary → helper local link, high band.
    pub h_local: CMat,
    /// Helper receive noise (W), white.
    pub helper_noise_w: f64,
}

/// Uplink rank-augmented link in structured form: the BS sees
/// `y = H_d x_d + G·√snr·H_r s_r + G·H_r n_r + v`, `v` white of power `s`.
#[derive(Debug, Clone)]
pub struct UlStackedLink {
    pub h_direct: CMat,
    /// Relayed-stream columns, already scaled by `G·√snr`.
    pub h_relay: CMat,
    /// Relay-noise factor `G·H_r` (colored part of the BS noise).
    pub relay_noise: CMat,
    pub gain: f64,
    /// Primary transmit power spent on the local link (W).
    pub local_power_w: f64,
}

impl UlStackedLink {
    /// Dense [`EffectiveLink`] for BS white noise level `s` (W): columns are the
    /// primary's antennas followed by the relayed streams.
    pub fn to_effective(&self, s: f64) -> Result<EffectiveLink> {
        let h_eff = hstack(&self.h_direct, &self.h_relay)?;
        let r_nn = hermitize(&(&self.relay_noise * self.relay_noise.adjoint() + scaled_identity(self.h_direct.nrows(), s)));
        Ok(EffectiveLink { h_eff, r_nn, provenance: Provenance::Stacked })
    }
}

/// Uplink layer split: `n_relay` streams cross the local link at the target
/// SNR (whitened MRT/MRC, one sub-channel each) and leave helper transmit
/// antennas `0..n_relay` with a common AGC gain that meets the relay cap.
pub fn build_rank_augmented_link_ul(
    gc: &UlGroupChannels,
    n_relay: usize,
    local_snr_db: f64,
    relay_cap_dbm: f64,
) -> Result<UlStackedLink> {
    if n_relay > gc.h_helper.ncols() {
        return Err(Error::Dimension(format!("helper has {} transmit antennas, {n_relay} relayed layers requested", gc.h_helper.ncols())));
    }
    let n_bs = gc.h_direct.nrows();
    if n_relay == 0 {
        return Ok(UlStackedLink {
            h_direct: gc.h_direct.clone(),
            h_relay: CMat::zeros(n_bs, 0),
            relay_noise: CMat::zeros(n_bs, 0),
            gain: 0.0,
            local_power_w: 0.0,
        });
    }
    let snr = 10f64.powf(local_snr_db / 10.0);
    let r_loc = scaled_identity(gc.h_local.nrows(), gc.helper_noise_w);
    let g_loc = local_link_gain(&gc.h_local, &r_loc)?;
    if g_loc <= 0.0 {
        return Err(Error::Numerical("local link has no gain".into()));
    }
    let local_power_w = n_relay as f64 * snr / (g_loc * g_loc);
    // each whitened stream has power snr + 1
    let gain = (dbm_to_watts(relay_cap_dbm) / (n_relay as f64 * (snr + 1.0))).sqrt();
    let h_r = gc.h_helper.columns(0, n_relay).into_owned();
    let relay_noise = &h_r * C64::new(gain, 0.0);
    let h_relay = &relay_noise * C64::new(snr.sqrt(), 0.0);
    Ok(UlStackedLink { h_direct: gc.h_direct.clone(), h_relay, relay_noise, gain, local_power_w })
}

/// Collaborate iff the wideband high-band SNR is strictly below the threshold.
pub fn case_select_semistatic(_direct_quality_fl_db: f64, direct_quality_fh_db: f64, threshold_db: f64) -> CaSelection {
    if direct_quality_fh_db < threshold_db {
        CaSelection::Collaborate
    } else {
        CaSelection::Legacy2CA
    }
}

/// Debug line `group,arm,provenance,rank,se`.
pub fn debug_csv_row(group: usize, arm: &str, link: &EffectiveLink, report: &LinkReport) -> String {
    format!("{group},{arm},{:?},{},{}", link.provenance, report.rank, report.se_bps_hz)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::{complex_gaussian, frobenius_sq, numerical_rank};
    use crate::phy::{capacity, link_report, mmse_sinr, sinr_from_gram, svd_precoder, Precoder};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn c(x: f64) -> C64 {
        C64::new(x, 0.0)
    }

    fn scalar(x: f64) -> CMat {
        CMat::from_element(1, 1, c(x))
    }

    fn report(se: f64) -> LinkReport {
        LinkReport { h_eff: scalar(1.0), r_nn: scalar(1.0), sinr: vec![], se_bps_hz: se, rank: 1 }
    }

    #[test]
    fn beamformer_examples() {
        let h = CMat::from_element(1, 1, C64::new(0.6, -0.8));
        let w = relay_rx_beamformer(&h, &scalar(1.0), 1).unwrap();
        assert!((w[(0, 0)] - h[(0, 0)].conj()).norm() < 1e-12);

        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let h1 = complex_gaussian(4, 1, &mut rng) * complex_gaussian(1, 8, &mut rng);
        let sigma2 = 0.3;
        let w = relay_rx_beamformer(&h1, &scaled_identity(4, sigma2), 1).unwrap();
        let p = 2.0;
        // rank-one first hop: the best transmit direction carries everything
        let v = svd_sorted(&h1).v.column(0).into_owned();
        let snr = (&w * &h1 * v).norm_squared() * p;
        assert!((snr - frobenius_sq(&h1) * p / sigma2).abs() < 1e-9 * snr);

        let dir = complex_gaussian(4, 1, &mut rng);
        let h1 = &dir * complex_gaussian(1, 3, &mut rng) + complex_gaussian(4, 3, &mut rng) * c(0.1);
        let r = &dir * dir.adjoint() * c(1e12) + identity(4);
        let w = relay_rx_beamformer(&h1, &r, 1).unwrap();
        let leak = (&w * &dir).norm() / (w.norm() * dir.norm());
        assert!(leak < 1e-4, "leak {leak}");
    }

    #[test]
    fn gain_arithmetic() {
        assert!((20.0 * relay_gain(-60.0, 14.0).log10() - 74.0).abs() < 1e-12);
        assert!((relay_gain(14.0, 14.0) - 1.0).abs() < 1e-15);
        assert!((20.0 * relay_gain(-30.0, 14.0).log10() - 44.0).abs() < 1e-12);
    }

    #[test]
    fn scalar_chain() {
        let chain = RelayChain { h1: scalar(1.0), w: scalar(1.0), gain: 2.0, h2: scalar(1.0), r1: scalar(1.0), r2: scalar(1.0), cap_dbm: 14.0 };
        let link = compose_af_link(&chain).unwrap();
        let p = Precoder::equal_power(scalar(1.0), 4.0);
        let s = mmse_sinr(&link.h_eff, &p, &link.r_nn).unwrap();
        assert!((s[0] - 3.2).abs() < 1e-12);
        assert_eq!(link.provenance, Provenance::Relayed);

        let zero = compose_af_link(&RelayChain { gain: 0.0, ..chain.clone() }).unwrap();
        assert_eq!(zero.h_eff[(0, 0)], c(0.0));
        assert_eq!(zero.r_nn, chain.r2);

        let bad = RelayChain { h2: CMat::zeros(2, 3), ..chain };
        assert!(compose_af_link(&bad).is_err());
    }

    #[test]
    fn noiseless_first_hop_is_a_plain_link() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let h1 = complex_gaussian(4, 6, &mut rng);
        let w = relay_rx_beamformer(&h1, &identity(4), 2).unwrap();
        let h2 = complex_gaussian(3, 2, &mut rng);
        let chain = RelayChain { h1: h1.clone(), w: w.clone(), gain: 1.7, h2: h2.clone(), r1: CMat::zeros(4, 4), r2: identity(3), cap_dbm: 14.0 };
        let link = compose_af_link(&chain).unwrap();
        let p = Precoder::equal_power(svd_sorted(&h1).v.columns(0, 2).into_owned(), 1.0);
        let direct = &h2 * &w * &h1 * c(1.7);
        let a = mmse_sinr(&link.h_eff, &p, &link.r_nn).unwrap();
        let b = mmse_sinr(&direct, &p, &identity(3)).unwrap();
        for (x, y) in a.iter().zip(&b) {
            assert!((x - y).abs() < 1e-9 * x.max(1.0));
        }
    }

    fn random_chain(rng: &mut ChaCha8Rng) -> (RelayChain, Precoder) {
        let n_tx = rng.random_range(2..6);
        let n_h = rng.random_range(2..5);
        let n_out = rng.random_range(1..=n_h);
        let n_p = rng.random_range(1..5);
        let h1 = complex_gaussian(n_h, n_tx, rng);
        let g = complex_gaussian(n_h, 1, rng);
        let r1 = &g * g.adjoint() * c(rng.random_range(0.0..5.0)) + scaled_identity(n_h, rng.random_range(0.05..2.0));
        let w = relay_rx_beamformer(&h1, &r1, n_out).unwrap();
        let h2 = complex_gaussian(n_p, n_out, rng);
        let r2 = scaled_identity(n_p, rng.random_range(0.05..2.0));
        let rank = rng.random_range(1..=n_tx.min(2));
        let p = svd_precoder(&h1, rank, rng.random_range(0.1..10.0)).unwrap();
        let chain = RelayChain { h1, w, gain: rng.random_range(0.0..3.0), h2, r1, r2, cap_dbm: 14.0 };
        (chain, p)
    }

    #[test]
    fn af_bottleneck() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..1000 {
            let (chain, p) = random_chain(&mut rng);
            let link = compose_af_link(&chain).unwrap();
            let composed = mmse_sinr(&link.h_eff, &p, &link.r_nn).unwrap();
            let a1 = &chain.w * &chain.h1 * p.scaled();
            let first = sinr_from_gram(&(a1.adjoint() * crate::linalg::hpd_inverse(&(&chain.w * &chain.r1 * chain.w.adjoint())).unwrap() * &a1)).unwrap();
            let noiseless = RelayChain { r1: CMat::zeros(chain.r1.nrows(), chain.r1.ncols()), ..chain.clone() };
            let l2 = compose_af_link(&noiseless).unwrap();
            let second = mmse_sinr(&l2.h_eff, &p, &l2.r_nn).unwrap();
            for k in 0..composed.len() {
                assert!(composed[k] <= first[k] + 1e-9 * first[k].max(1.0));
                assert!(composed[k] <= second[k] + 1e-9 * second[k].max(1.0));
            }
        }
    }

    #[test]
    fn stacking_never_hurts() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        for _ in 0..1000 {
            let (chain, p) = random_chain(&mut rng);
            let relayed = compose_af_link(&chain).unwrap();
            let n_d = rng.random_range(1..5);
            let hd = complex_gaussian(n_d, chain.h1.ncols(), &mut rng);
            let direct = EffectiveLink { h_eff: hd, r_nn: scaled_identity(n_d, rng.random_range(0.05..2.0)), provenance: Provenance::Direct };
            let st = stack_links(&direct, &relayed).unwrap();
            let c_st = capacity(&st.h_eff, &p, &st.r_nn).unwrap();
            let c_d = capacity(&direct.h_eff, &p, &direct.r_nn).unwrap();
            assert!(c_st >= c_d - 1e-9);
        }
    }

    #[test]
    fn agc_meets_cap() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let h1 = complex_gaussian(4, 8, &mut rng) * c(1e-4);
        let r1 = scaled_identity(4, 1e-12);
        let q = scaled_identity(8, 20.0 / 8.0);
        let w = relay_rx_beamformer(&h1, &r1, 2).unwrap();
        let rx_cov = &h1 * &q * h1.adjoint() + &r1;
        let g = agc_gain(&w, &rx_cov, 14.0);
        let n = 20_000;
        let mut acc = 0.0;
        let qs = crate::linalg::sqrt_psd(&q);
        let rs = crate::linalg::sqrt_psd(&r1);
        for _ in 0..n {
            let x = &qs * complex_gaussian(8, 1, &mut rng);
            let noise = &rs * complex_gaussian(4, 1, &mut rng);
            let out = (&w * (&h1 * x + noise)) * c(g);
            acc += out.norm_squared();
        }
        let measured_dbm = watts_to_dbm(acc / n as f64);
        assert!((measured_dbm - 14.0).abs() < 0.1, "{measured_dbm}");
    }

    fn dl_group(rng: &mut ChaCha8Rng, snr_lin: f64) -> DlGroupChannels {
        let n0 = 1.0 / snr_lin;
        let h_direct = complex_gaussian(4, 32, rng);
        let h_helper = complex_gaussian(4, 32, rng);
        let q = identity(32) * c(1.0 / 32.0);
        let rx_cov_helper = &h_helper * q * h_helper.adjoint() + scaled_identity(4, n0);
        DlGroupChannels {
            h_direct,
            r_direct: scaled_identity(4, n0),
            h_helper,
            r_helper: scaled_identity(4, n0),
            rx_cov_helper,
            h_local: complex_gaussian(4, 1, rng) * complex_gaussian(1, 4, rng) * c(1e3),
            r_local: identity(4),
        }
    }

    #[test]
    fn stacked_link_has_doubled_rank() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let gc = dl_group(&mut rng, 100.0);
        let st = build_rank_augmented_link_dl(&gc, RelaySettings { n_out: 4, cap_dbm: 14.0 }).unwrap();
        assert_eq!(st.h_eff.shape(), (8, 32));
        assert_eq!(numerical_rank(&st.h_eff, 1e-9), 8);
        assert_eq!(st.provenance, Provenance::Stacked);
    }

    #[test]
    fn zero_gain_stack_equals_direct() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let gc = dl_group(&mut rng, 100.0);
        let (direct, _) = build_diversity_arms(&gc, RelaySettings { n_out: 4, cap_dbm: 14.0 }).unwrap();
        let mut chain = dl_relay_chain(&gc, &gc.r_helper, RelaySettings { n_out: 4, cap_dbm: 14.0 }).unwrap();
        chain.gain = 0.0;
        let relayed = compose_af_link(&chain).unwrap();
        let st = stack_links(&direct, &relayed).unwrap();
        let p = svd_precoder(&gc.h_direct, 4, 1.0).unwrap();
        let a = capacity(&st.h_eff, &p, &st.r_nn).unwrap();
        let b = capacity(&direct.h_eff, &p, &direct.r_nn).unwrap();
        assert!((a - b).abs() < 1e-9);
        let rep = link_report(&relayed.h_eff, &relayed.r_nn, &p, 7.4).unwrap();
        assert_eq!(rep.se_bps_hz, 0.0);
        let drep = link_report(&direct.h_eff, &direct.r_nn, &p, 7.4).unwrap();
        assert_eq!(diversity_select(&drep, &rep), PathChoice::Direct);
    }

    #[test]
    fn faded_direct_arm_loses_to_relay() {
        let mut rng = ChaCha8Rng::seed_from_u64(10);
        let mut gc = dl_group(&mut rng, 10.0);
        gc.h_direct *= c(0.1);
        let (d, r) = build_diversity_arms(&gc, RelaySettings { n_out: 4, cap_dbm: 14.0 }).unwrap();
        let pd = svd_precoder(&d.h_eff, 1, 1.0).unwrap();
        let pr = svd_precoder(&r.h_eff, 1, 1.0).unwrap();
        let rd = link_report(&d.h_eff, &d.r_nn, &pd, 7.4).unwrap();
        let rr = link_report(&r.h_eff, &r.r_nn, &pr, 7.4).unwrap();
        assert!(rr.se_bps_hz > rd.se_bps_hz);
        assert_eq!(diversity_select(&rd, &rr), PathChoice::Relayed);
    }

    #[test]
    fn selection_rules() {
        assert_eq!(diversity_select(&report(2.0), &report(3.0)), PathChoice::Relayed);
        assert_eq!(diversity_select(&report(3.0), &report(3.0)), PathChoice::Direct);
        assert_eq!(diversity_select(&report(3.0), &report(0.0)), PathChoice::Direct);
        assert_eq!(case_select_semistatic(5.0, -10.0, -3.0), CaSelection::Collaborate);
        assert_eq!(case_select_semistatic(5.0, 10.0, -3.0), CaSelection::Legacy2CA);
        assert_eq!(case_select_semistatic(5.0, -3.0, -3.0), CaSelection::Legacy2CA);
    }

    /// High-SNR slope of the stacked link relative to the direct link.
    fn slope_ratio(seed: u64, n: usize) -> f64 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut ratios = 0.0;
        for _ in 0..n {
            let h_direct = complex_gaussian(4, 32, &mut rng);
            let h_helper = complex_gaussian(4, 32, &mut rng);
            let h_local = complex_gaussian(4, 1, &mut rng) * complex_gaussian(1, 4, &mut rng);
            let cap = |snr_db: f64, stacked: bool| {
                let n0 = 10f64.powf(-snr_db / 10.0);
                let q = identity(32) * c(1.0 / 32.0);
                let gc = DlGroupChannels {
                    h_direct: h_direct.clone(),
                    r_direct: scaled_identity(4, n0),
                    h_helper: h_helper.clone(),
                    r_helper: scaled_identity(4, n0),
                    rx_cov_helper: &h_helper * q * h_helper.adjoint() + scaled_identity(4, n0),
                    h_local: &h_local * c(1e4),
                    r_local: identity(4),
                };
                let link = if stacked {
                    build_rank_augmented_link_dl(&gc, RelaySettings { n_out: 4, cap_dbm: 14.0 }).unwrap()
                } else {
                    EffectiveLink { h_eff: gc.h_direct.clone(), r_nn: gc.r_direct.clone(), provenance: Provenance::Direct }
                };
                let rank = link.h_eff.nrows();
                let p = crate::phy::whitened_svd_precoder(&link.h_eff, &link.r_nn, rank, 1.0).unwrap();
                capacity(&link.h_eff, &p, &link.r_nn).unwrap()
            };
            let s_st = cap(30.0, true) - cap(20.0, true);
            let s_d = cap(30.0, false) - cap(20.0, false);
            ratios += s_st / s_d;
        }
        ratios / n as f64
    }

    #[test]
    fn rank_doubling_slope() {
        let r = slope_ratio(11, 100);
        assert!((1.8..=2.0).contains(&r), "ratio {r}");
    }
}
