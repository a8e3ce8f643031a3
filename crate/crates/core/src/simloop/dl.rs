//! Downlink diversity program: baseline (direct path only) against per-subband
//! selection between the direct path and the helper's relayed path.
//!
//! Precoders and ranks are fixed per drop from the fully loaded interference
//! covariance (channels are static within a drop); SINRs are re-evaluated
//! against the actual set of transmitting cells. Interference from a cell is
//! its precoder-averaged covariance, so only cell activity matters.

use rayon::prelude::*;

use crate::channel::{local_link_channel, Band};
use crate::comimo::{dl_relay_chain, DlGroupChannels, RelaySettings};
use crate::error::Result;
use crate::linalg::{hermitize, hpd_inverse, identity, inv_sqrt_hpd, scaled_identity, CMat, C64};
use crate::phy::{select_rank, sinr_from_gram, sinr_to_se, type2_like_precoder, Type2Config};
use crate::scenario::bs_panel_shape;

use super::engine::{Activity, Cqi, SlotModel};
use super::env::{with_antennas, DropEnv};

pub const PATH_DIRECT: u8 = 0;
pub const PATH_RELAYED: u8 = 1;

#[derive(Debug, Clone)]
struct RelayedLink {
    /// `g·G·W`: maps the helper's received vector to the primary's whitened outputs.
    m: CMat,
    a: CMat,
}

#[derive(Debug, Clone)]
struct SubbandLinks {
    /// Precoded direct channel `H P diag(√p)`.
    a_direct: CMat,
    relayed: Option<RelayedLink>,
}

/// Per-drop downlink link state for every group and subband.
#[derive(Debug, Clone)]
pub struct DlLinks {
    links: Vec<Vec<SubbandLinks>>,
    advanced: Vec<bool>,
    sb_prbs: Vec<usize>,
}

fn se_of(a: &CMat, r: &CMat, cap: f64) -> Result<f64> {
    let gram = a.adjoint() * hpd_inverse(r)? * a;
    Ok(sinr_from_gram(&gram)?.iter().map(|&x| sinr_to_se(x, cap)).sum())
}

fn precode(h: &CMat, r: &CMat, power: f64, max_rank: usize, t2: &Type2Config, cap: f64) -> Result<CMat> {
    let rank = select_rank(h, r, power, max_rank.min(t2.n_beams), cap)?;
    let hw = inv_sqrt_hpd(r)? * h;
    let p = type2_like_precoder(&hw, t2, rank, power)?;
    Ok(h * p.scaled())
}

/// Noise plus the covariance of every other cell, on subband `s`.
fn full_load_cov(noise: f64, total: &CMat, own: &CMat) -> CMat {
    hermitize(&(scaled_identity(total.nrows(), noise) + total - own))
}

impl DlLinks {
    pub fn build(env: &DropEnv) -> Result<Self> {
        let cfg = &env.cfg;
        let (n1, n2) = bs_panel_shape(cfg);
        let t2 = Type2Config::for_panel(n1, n2, cfg.type2_beams);
        let cap = cfg.se_cap_bps_hz;
        let p_bs = env.bs_power_w;
        let settings = RelaySettings { n_out: cfg.helper_config.1, cap_dbm: cfg.relay_max_tx_dbm };
        let links = (0..env.n_groups())
            .into_par_iter()
            .map(|g| {
                let (pri, hel) = (env.primary(g), env.helper(g));
                let serv = pri.serving;
                let helper_tx = with_antennas(env.drop.helper(g).expect("every group has a helper"), cfg.helper_config.0);
                let h_local = local_link_channel(env.drop.primary(g), &helper_tx, cfg.f_high_ghz, &[0.0], Band::High)?.h.remove(0);
                (0..env.subband_hz.len())
                    .map(|s| {
                        let h_d = &pri.low.h_serving[s];
                        let r_d = full_load_cov(env.noise_primary_w, &pri.low.cov_total[s], &pri.low.cov[serv][s]);
                        let a_direct = precode(h_d, &r_d, p_bs, h_d.nrows(), &t2, cap)?;
                        let r_h = full_load_cov(env.noise_helper_w, &hel.low.cov_total[s], &hel.low.cov[serv][s]);
                        let gc = DlGroupChannels {
                            h_direct: h_d.clone(),
                            r_direct: r_d,
                            h_helper: hel.low.h_serving[s].clone(),
                            rx_cov_helper: &r_h + &hel.low.cov[serv][s],
                            r_helper: r_h.clone(),
                            h_local: h_local.clone(),
                            r_local: hermitize(&(scaled_identity(h_local.nrows(), env.noise_primary_w) + &pri.high.cov_total[s])),
                        };
                        let chain = dl_relay_chain(&gc, &r_h, settings)?;
                        let m = &chain.h2 * &chain.w * C64::new(chain.gain, 0.0);
                        let h_r = &m * &gc.h_helper;
                        let r_r = hermitize(&(&m * &r_h * m.adjoint() + identity(m.nrows())));
                        let a = precode(&h_r, &r_r, p_bs, h_r.nrows(), &t2, cap)?;
                        Ok(SubbandLinks { a_direct, relayed: Some(RelayedLink { m, a }) })
                    })
                    .collect::<Result<Vec<_>>>()
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self { links, advanced: env.drop.groups.iter().map(|g| g.advanced).collect(), sb_prbs: cfg.subband_sizes() })
    }
}

/// One downlink arm over a drop.
pub struct DlModel<'a> {
    pub env: &'a DropEnv,
    pub links: &'a DlLinks,
    pub diversity: bool,
}

impl DlModel<'_> {
    /// Interference-plus-noise covariance at `node` on subband `s` (low band)
    /// for the cells active in `act`.
    fn rx_cov(&self, node: usize, noise: f64, s: usize, act: &Activity) -> CMat {
        let dev = self.env.device(node);
        let n = dev.low.h_serving[s].nrows();
        let mut r = scaled_identity(n, noise);
        for (c, cov) in dev.low.cov.iter().enumerate() {
            if c != dev.serving && act[0][c][s].is_some() {
                r += &cov[s];
            }
        }
        r
    }

    fn direct_se(&self, g: usize, s: usize, act: &Activity) -> Result<f64> {
        let r = self.rx_cov(self.env.drop.groups[g].primary, self.env.noise_primary_w, s, act);
        se_of(&self.links.links[g][s].a_direct, &r, self.env.cfg.se_cap_bps_hz)
    }

    fn relayed_se(&self, g: usize, s: usize, act: &Activity) -> Result<Option<f64>> {
        let Some(rl) = &self.links.links[g][s].relayed else { return Ok(None) };
        let r_h = self.rx_cov(self.env.drop.groups[g].helpers[0], self.env.noise_helper_w, s, act);
        let r = hermitize(&(&rl.m * r_h * rl.m.adjoint() + identity(rl.m.nrows())));
        Ok(Some(se_of(&rl.a, &r, self.env.cfg.se_cap_bps_hz)?))
    }

    fn relay_allowed(&self, g: usize) -> bool {
        self.diversity && self.links.advanced[g]
    }
}

impl SlotModel for DlModel<'_> {
    fn n_ues(&self) -> usize {
        self.env.n_groups()
    }

    fn n_cells(&self) -> usize {
        self.env.n_cells()
    }

    fn n_carriers(&self) -> usize {
        1
    }

    fn subband_prbs(&self) -> &[usize] {
        &self.links.sb_prbs
    }

    fn serving(&self, ue: usize) -> usize {
        self.env.drop.serving_cell[ue]
    }

    fn uses_carrier(&self, _: usize, carrier: usize) -> bool {
        carrier == 0
    }

    /// The PF metric always uses the direct-path CQI so that both arms see
    /// the same schedule under full buffer; the budget follows the selected path.
    fn cqi(&self, ue: usize, _: usize, s: usize, act: &Activity) -> Result<Cqi> {
        let direct = self.direct_se(ue, s, act)?;
        let mut q = Cqi { metric_se: direct, budget_se: direct, choice: PATH_DIRECT };
        if self.relay_allowed(ue) {
            if let Some(rel) = self.relayed_se(ue, s, act)? {
                if rel > direct {
                    q.budget_se = rel;
                    q.choice = PATH_RELAYED;
                }
            }
        }
        Ok(q)
    }

    fn realized_se(&self, ue: usize, _: usize, s: usize, choice: u8, act: &Activity) -> Result<f64> {
        if choice == PATH_RELAYED && self.relay_allowed(ue) {
            if let Some(se) = self.relayed_se(ue, s, act)? {
                return Ok(se);
            }
        }
        self.direct_se(ue, s, act)
    }
}
