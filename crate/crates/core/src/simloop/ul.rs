//! Uplink rank-augmentation program.
//!
//! Legacy arm: every UE transmits on both carriers (low and high band) with
//! half its power budget on each. Rank-augmentation arm: a UE whose wideband
//! high-band SNR after combining over the BS array falls below the selection threshold drops the
//! high-band carrier and sends part of its low-band layers through the
//! helper, which forwards them from its own antennas. Uplink channels follow
//! from downlink reciprocity; inter-cell interference is white at the BS with
//! the mean per-element gain of each interferer.

use rayon::prelude::*;

use crate::channel::{local_link_channel, Band};
use crate::comimo::{build_rank_augmented_link_ul, case_select_semistatic, CaSelection, UlGroupChannels};
use crate::error::{Error, Result};
use crate::linalg::{hstack, scaled_identity, CMat};
use crate::phy::{mmse_sinr_lowrank, select_rank, sinr_to_se, svd_precoder, RANK_SE_REL_TOL};
use crate::units::{dbm_to_watts, lin_to_db};

use super::engine::{Activity, Cqi, SlotModel};
use super::env::{with_antennas, DropEnv};

#[derive(Debug, Clone)]
struct UlLink {
    /// Precoded channel seen by the BS, `n_bs x layers`.
    a: CMat,
    /// Colored relay-noise factor (`R = s·I + U Uᴴ`).
    u: Option<CMat>,
}

/// Transmitters of one UE on one carrier: (device node, power W).
type TxProfile = Vec<(usize, f64)>;

/// Per group: legacy links per carrier, plus the stacked links with the
/// direct and relay powers used when the group collaborates.
type GroupLinks = (Vec<Vec<UlLink>>, Option<(Vec<UlLink>, f64, f64)>);

#[derive(Debug, Clone)]
struct ArmState {
    links: Vec<Vec<Vec<UlLink>>>,
    tx: Vec<Vec<TxProfile>>,
    carriers: Vec<[bool; 2]>,
}

/// Per-drop uplink state for both arms.
#[derive(Debug, Clone)]
pub struct UlLinks {
    legacy: ArmState,
    rank_aug: ArmState,
    /// Which groups collaborate in the rank-augmentation arm.
    pub collaborating: Vec<bool>,
    /// Wideband high-band SNR (dB) at legacy power, combined over the BS
    /// antennas for a single transmit antenna.
    pub fh_snr_db: Vec<f64>,
    sb_prbs: Vec<usize>,
}

fn ul_channel(h_dl: &CMat, n_tx: usize) -> CMat {
    h_dl.rows(0, n_tx.min(h_dl.nrows())).transpose()
}

fn se_lowrank(link: &UlLink, s: f64, cap: f64) -> Result<f64> {
    Ok(mmse_sinr_lowrank(&link.a, s, link.u.as_ref())?.iter().map(|&x| sinr_to_se(x, cap)).sum())
}

impl UlLinks {
    pub fn build(env: &DropEnv) -> Result<Self> {
        let cfg = &env.cfg;
        let cap = cfg.se_cap_bps_hz;
        let n_tx = cfg.ue_ul_config.0;
        let n_helper_tx = cfg.helper_config.0;
        let p_total = dbm_to_watts(cfg.ue_max_tx_dbm);
        let p_carrier = 0.5 * p_total;
        let p_relay = dbm_to_watts(cfg.relay_max_tx_dbm);
        let n_cells = env.n_cells();
        let ns = env.subband_hz.len();

        // nominal load: one average legacy UE per other cell on each carrier
        let mut members = vec![Vec::new(); n_cells];
        for g in 0..env.n_groups() {
            members[env.primary(g).serving].push(g);
        }
        let nominal: Vec<[f64; 2]> = (0..n_cells)
            .map(|c| {
                let mut s = [env.noise_bs_w; 2];
                for (b, band) in [Band::Low, Band::High].into_iter().enumerate() {
                    for (c2, m) in members.iter().enumerate() {
                        if c2 == c || m.is_empty() {
                            continue;
                        }
                        s[b] += p_carrier * m.iter().map(|&g| env.primary(g).band(band).gain[c]).sum::<f64>() / m.len() as f64;
                    }
                }
                s
            })
            .collect();

        let fh_snr_db: Vec<f64> = (0..env.n_groups())
            .map(|g| {
                let p = env.primary(g);
                let n_bs = p.high.h_serving[0].ncols() as f64;
                lin_to_db(p_carrier * n_bs * p.high.gain[p.serving] / env.noise_bs_w)
            })
            .collect();
        let collaborating: Vec<bool> = (0..env.n_groups())
            .map(|g| {
                env.drop.groups[g].advanced
                    && case_select_semistatic(f64::NAN, fh_snr_db[g], cfg.semi_static_threshold_db) == CaSelection::Collaborate
            })
            .collect();

        let per_group: Vec<GroupLinks> = (0..env.n_groups())
            .into_par_iter()
            .map(|g| {
                let pri = env.primary(g);
                let serv = pri.serving;
                let legacy = [Band::Low, Band::High]
                    .into_iter()
                    .enumerate()
                    .map(|(b, band)| {
                        (0..ns)
                            .map(|s| {
                                let h = ul_channel(&pri.band(band).h_serving[s], n_tx);
                                let r = scaled_identity(h.nrows(), nominal[serv][b]);
                                let rank = select_rank(&h, &r, p_carrier, n_tx, cap)?;
                                let p = svd_precoder(&h, rank, p_carrier)?;
                                Ok(UlLink { a: &h * p.scaled(), u: None })
                            })
                            .collect::<Result<Vec<_>>>()
                    })
                    .collect::<Result<Vec<_>>>()?;
                if !collaborating[g] {
                    return Ok((legacy, None));
                }
                let hel = env.helper(g);
                let primary_tx = with_antennas(env.drop.primary(g), n_tx);
                let h_local = local_link_channel(env.drop.helper(g).expect("helper"), &primary_tx, cfg.f_high_ghz, &[0.0], Band::High)?.h.remove(0);
                let mut stacked = Vec::with_capacity(ns);
                let mut p_direct_used: f64 = 0.0;
                let mut relay_used: f64 = 0.0;
                for s in 0..ns {
                    let gc = UlGroupChannels {
                        h_direct: ul_channel(&pri.low.h_serving[s], n_tx),
                        h_helper: ul_channel(&hel.low.h_serving[s], n_helper_tx),
                        h_local: h_local.clone(),
                        helper_noise_w: env.noise_helper_w,
                    };
                    let s_nom = nominal[serv][0];
                    let mut best: Option<(f64, UlLink, f64, usize)> = None;
                    for layers in 1..=(n_tx + n_helper_tx) {
                        let n_relay = (layers / 2).min(n_helper_tx);
                        let n_direct = layers - n_relay;
                        if n_direct > n_tx || n_direct > gc.h_direct.nrows() {
                            continue;
                        }
                        let st = build_rank_augmented_link_ul(&gc, n_relay, cfg.local_link_target_snr_db, cfg.relay_max_tx_dbm)?;
                        let p_direct = p_total - st.local_power_w;
                        if !(p_direct > 0.0) {
                            continue;
                        }
                        let pd = match svd_precoder(&gc.h_direct, n_direct, p_direct) {
                            Ok(p) => p,
                            Err(Error::RankDeficient { .. }) => continue,
                            Err(e) => return Err(e),
                        };
                        let a = hstack(&(&gc.h_direct * pd.scaled()), &st.h_relay)?;
                        let link = UlLink { a, u: (n_relay > 0).then(|| st.relay_noise.clone()) };
                        let se = se_lowrank(&link, s_nom, cap)?;
                        if best.as_ref().is_none_or(|b| se > b.0 + RANK_SE_REL_TOL * b.0.abs()) {
                            best = Some((se, link, p_direct, n_relay));
                        }
                    }
                    let (_, link, pd, n_relay) = best.ok_or_else(|| Error::Numerical(format!("no feasible uplink layer split for group {g}")))?;
                    p_direct_used = p_direct_used.max(pd);
                    if n_relay > 0 {
                        relay_used = p_relay;
                    }
                    stacked.push(link);
                }
                Ok((legacy, Some((stacked, p_direct_used, relay_used))))
            })
            .collect::<Result<Vec<_>>>()?;

        let mut legacy = ArmState { links: Vec::new(), tx: Vec::new(), carriers: Vec::new() };
        let mut rank_aug = ArmState { links: Vec::new(), tx: Vec::new(), carriers: Vec::new() };
        for (g, (leg, collab)) in per_group.into_iter().enumerate() {
            let grp = &env.drop.groups[g];
            let leg_tx = vec![vec![(grp.primary, p_carrier)], vec![(grp.primary, p_carrier)]];
            legacy.links.push(leg.clone());
            legacy.tx.push(leg_tx.clone());
            legacy.carriers.push([true, true]);
            match collab {
                Some((stacked, p_direct, p_rel)) => {
                    let mut tx = vec![(grp.primary, p_direct)];
                    if p_rel > 0.0 {
                        tx.push((grp.helpers[0], p_rel));
                    }
                    rank_aug.links.push(vec![stacked, leg[1].clone()]);
                    rank_aug.tx.push(vec![tx, Vec::new()]);
                    rank_aug.carriers.push([true, false]);
                }
                None => {
                    rank_aug.links.push(leg);
                    rank_aug.tx.push(leg_tx);
                    rank_aug.carriers.push([true, true]);
                }
            }
        }
        Ok(Self { legacy, rank_aug, collaborating, fh_snr_db, sb_prbs: cfg.subband_sizes() })
    }
}

/// One uplink arm over a drop.
pub struct UlModel<'a> {
    pub env: &'a DropEnv,
    pub links: &'a UlLinks,
    pub rank_aug: bool,
}

impl UlModel<'_> {
    fn arm(&self) -> &ArmState {
        if self.rank_aug {
            &self.links.rank_aug
        } else {
            &self.links.legacy
        }
    }

    /// White noise plus interference at the serving BS of `ue` on `(carrier, s)`.
    fn white_level(&self, ue: usize, carrier: usize, s: usize, act: &Activity) -> f64 {
        let arm = self.arm();
        let serv = self.env.drop.serving_cell[ue];
        let band = if carrier == 0 { Band::Low } else { Band::High };
        let mut level = self.env.noise_bs_w;
        for (c, row) in act[carrier].iter().enumerate() {
            if c == serv {
                continue;
            }
            if let Some(v) = row[s] {
                for &(node, p) in &arm.tx[v][carrier] {
                    level += p * self.env.device(node).band(band).gain[serv];
                }
            }
        }
        level
    }

    fn se(&self, ue: usize, carrier: usize, s: usize, act: &Activity) -> Result<f64> {
        let level = self.white_level(ue, carrier, s, act);
        se_lowrank(&self.arm().links[ue][carrier][s], level, self.env.cfg.se_cap_bps_hz)
    }
}

impl SlotModel for UlModel<'_> {
    fn n_ues(&self) -> usize {
        self.env.n_groups()
    }

    fn n_cells(&self) -> usize {
        self.env.n_cells()
    }

    fn n_carriers(&self) -> usize {
        2
    }

    fn subband_prbs(&self) -> &[usize] {
        &self.links.sb_prbs
    }

    fn serving(&self, ue: usize) -> usize {
        self.env.drop.serving_cell[ue]
    }

    fn uses_carrier(&self, ue: usize, carrier: usize) -> bool {
        self.arm().carriers[ue][carrier]
    }

    fn cqi(&self, ue: usize, carrier: usize, s: usize, act: &Activity) -> Result<Cqi> {
        let se = self.se(ue, carrier, s, act)?;
        Ok(Cqi { metric_se: se, budget_se: se, choice: 0 })
    }

    fn realized_se(&self, ue: usize, carrier: usize, s: usize, _: u8, act: &Activity) -> Result<f64> {
        self.se(ue, carrier, s, act)
    }
}
