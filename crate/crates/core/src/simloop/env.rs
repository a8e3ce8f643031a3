//! Propagation state of one drop, shared by the downlink and uplink programs.
//!
//! LOS state and shadowing are drawn per (collaboration group, site) and
//! shared by the two co-located devices and both bands; outdoor-to-indoor
//! loss shares the building and indoor depth within a group, while the
//! random part of the penetration loss is drawn per device.

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;

use crate::channel::{assemble_channel, gen_rays, los_probability, o2i_mean_db, pathloss, Band, Endpoint, Heights, LargeScale, LinkGeometry, O2iModel, RayConfig};
use crate::error::Result;
use crate::linalg::{hermitize, CMat, C64};
use crate::rng::{self, domain};
use crate::scenario::{bs_panel, build_hex_layout, drop_ues, wraparound_vector, ArrayGeometry, Drop, Pose, ScenarioConfig, SiteLayout, Vec2, Vec3};
use crate::units::{dbm_to_watts, noise_power_watts};

#[derive(Debug, Clone)]
pub struct BandState {
    /// Serving-cell channel per subband (device antennas x BS ports).
    pub h_serving: Vec<CMat>,
    /// Mean per-element power gain `‖H‖²_F / (n_rx n_tx)` to every cell.
    pub gain: Vec<f64>,
    /// Downlink interference covariance `(P/N_bs) H Hᴴ` per cell and subband
    /// (kept for the low band only).
    pub cov: Vec<Vec<CMat>>,
    /// Sum of `cov` over all cells, per subband.
    pub cov_total: Vec<CMat>,
}

#[derive(Debug, Clone)]
pub struct DeviceState {
    pub node: usize,
    pub group: usize,
    pub serving: usize,
    pub o2i: O2iModel,
    pub low: BandState,
    pub high: BandState,
}

impl DeviceState {
    pub fn band(&self, band: Band) -> &BandState {
        match band {
            Band::Low => &self.low,
            Band::High => &self.high,
        }
    }
}

#[derive(Debug, Clone)]
pub struct DropEnv {
    pub cfg: ScenarioConfig,
    pub layout: SiteLayout,
    pub drop: Drop,
    pub drop_index: u64,
    /// Baseband centre of each subband (Hz).
    pub subband_hz: Vec<f64>,
    /// UE-side devices in node order: `devices[i].node == n_cells + i`.
    pub devices: Vec<DeviceState>,
    pub bs_power_w: f64,
    pub noise_bs_w: f64,
    pub noise_primary_w: f64,
    pub noise_helper_w: f64,
}

impl DropEnv {
    pub fn n_cells(&self) -> usize {
        self.layout.cells.len()
    }

    pub fn n_groups(&self) -> usize {
        self.drop.groups.len()
    }

    pub fn device(&self, node: usize) -> &DeviceState {
        &self.devices[node - self.n_cells()]
    }

    pub fn primary(&self, group: usize) -> &DeviceState {
        self.device(self.drop.groups[group].primary)
    }

    pub fn helper(&self, group: usize) -> &DeviceState {
        self.device(self.drop.groups[group].helpers[0])
    }
}

struct GroupLarge {
    depth_m: f64,
    o2i: O2iModel,
    /// Per site: (los, standard normal shadowing draw).
    per_site: Vec<(bool, f64)>,
}

fn group_large(cfg: &ScenarioConfig, layout: &SiteLayout, drop: &Drop, drop_index: u64, g: usize) -> GroupLarge {
    let mut r = rng::stream(cfg.seed, &[domain::LARGE_SCALE, drop_index, g as u64, u64::MAX]);
    let depth_m = crate::channel::draw_indoor_depth(&mut r);
    let o2i = if r.random::<f64>() < cfg.o2i_high_loss_fraction { O2iModel::HighLoss } else { O2iModel::LowLoss };
    let pos = drop.primary(g).pose.position;
    let p2 = Vec2::new(pos.x, pos.y);
    let per_site = layout
        .sites
        .iter()
        .enumerate()
        .map(|(si, site)| {
            let mut r = rng::stream(cfg.seed, &[domain::LARGE_SCALE, drop_index, g as u64, si as u64]);
            let d2d = wraparound_vector(&p2, &site.position, layout).norm();
            let los = r.random::<f64>() < los_probability((d2d - depth_m).max(0.0), cfg.ue_height_m);
            let z: f64 = StandardNormal.sample(&mut r);
            (los, z)
        })
        .collect();
    GroupLarge { depth_m, o2i, per_site }
}

/// Draw the UEs and every UE-to-cell channel of drop `drop_index`.
pub fn build_drop_env(cfg: &ScenarioConfig, drop_index: u64) -> Result<DropEnv> {
    cfg.validate()?;
    let layout = build_hex_layout(cfg.num_rings, cfg.isd_m);
    let drop = drop_ues(&layout, cfg, drop_index)?;
    let n_cells = layout.cells.len();
    let subband_hz = cfg.subband_centers_hz();
    let bs_power_w = dbm_to_watts(cfg.bs_tx_dbm);
    let panels = [bs_panel(cfg, cfg.f_low_ghz), bs_panel(cfg, cfg.f_high_ghz)];
    let groups: Vec<GroupLarge> = (0..drop.groups.len()).map(|g| group_large(cfg, &layout, &drop, drop_index, g)).collect();

    let mut group_of = vec![0; drop.nodes.len()];
    for (g, grp) in drop.groups.iter().enumerate() {
        group_of[grp.primary] = g;
        for &h in &grp.helpers {
            group_of[h] = g;
        }
    }

    let devices: Vec<DeviceState> = (n_cells..drop.nodes.len())
        .into_par_iter()
        .map(|node| {
            let g = group_of[node];
            let dev = drop.node(node);
            let gl = &groups[g];
            let mut r = rng::stream(cfg.seed, &[domain::LARGE_SCALE, drop_index, 1 << 32, node as u64]);
            let z_pen: f64 = StandardNormal.sample(&mut r);
            let bands = [(Band::Low, cfg.f_low_ghz, &panels[0]), (Band::High, cfg.f_high_ghz, &panels[1])];
            let mut states = Vec::with_capacity(2);
            let pen: Vec<f64> = bands
                .iter()
                .map(|&(_, f, _)| (o2i_mean_db(f, gl.depth_m, gl.o2i) + gl.o2i.sigma_db() * z_pen).max(0.0))
                .collect();
            let mut per_cell: Vec<[Vec<CMat>; 2]> = Vec::with_capacity(n_cells);
            let dev2 = Vec2::new(dev.pose.position.x, dev.pose.position.y);
            for c in 0..n_cells {
                let site = layout.cells[c].site;
                let w = wraparound_vector(&dev2, &layout.sites[site].position, &layout);
                let bs_pos = Vec3::new(dev2.x + w.x, dev2.y + w.y, cfg.bs_height_m);
                let (los, z) = gl.per_site[site];
                let geom = LinkGeometry { tx: bs_pos, rx: dev.pose.position };
                let mut rr = rng::stream(cfg.seed, &[domain::SMALL_SCALE, drop_index, node as u64, site as u64]);
                let rays = gen_rays(&geom, los, &RayConfig::default(), &mut rr)?;
                let bs_pose = Pose { position: bs_pos, rotation: drop.bs(c).pose.rotation };
                let mut hs: [Vec<CMat>; 2] = [Vec::new(), Vec::new()];
                for (bi, &(band, f, panel)) in bands.iter().enumerate() {
                    let mut rays_b = rays.clone();
                    if bi == 1 {
                        let mut rp = rng::stream(cfg.seed, &[domain::SMALL_SCALE, drop_index, node as u64, site as u64, 1]);
                        for ray in &mut rays_b.rays {
                            ray.phase = rp.random_range(0.0..std::f64::consts::TAU);
                        }
                    }
                    let large = LargeScale {
                        pathloss_db: pathloss(geom.distance(), f, los, Heights { bs_m: cfg.bs_height_m, ut_m: cfg.ue_height_m })?,
                        shadowing_db: z * crate::channel::shadowing_sigma_db(los),
                        penetration_db: if dev.indoor { pen[bi] } else { 0.0 },
                        los,
                    };
                    let tx = Endpoint { array: panel, pose: &bs_pose };
                    let rx: Endpoint<'_> = dev.into();
                    hs[bi] = assemble_channel(&rays_b, tx, rx, &large, &subband_hz, f, band)?.h;
                }
                per_cell.push(hs);
            }
            let serving = drop.serving_cell[g];
            for bi in 0..2 {
                let keep_cov = bi == 0;
                let n_dev = dev.array.len();
                let n_bs = panels[bi].len();
                let mut st = BandState {
                    h_serving: per_cell[serving][bi].clone(),
                    gain: Vec::with_capacity(n_cells),
                    cov: Vec::new(),
                    cov_total: vec![CMat::zeros(n_dev, n_dev); subband_hz.len()],
                };
                let scale = C64::new(bs_power_w / n_bs as f64, 0.0);
                for cell_h in &per_cell {
                    let hs = &cell_h[bi];
                    let gain = hs.iter().map(|h| h.norm_squared()).sum::<f64>() / (hs.len() * n_dev * n_bs) as f64;
                    st.gain.push(gain);
                    let covs: Vec<CMat> = hs.iter().map(|h| hermitize(&(h * h.adjoint() * scale))).collect();
                    for (tot, cv) in st.cov_total.iter_mut().zip(&covs) {
                        *tot += cv;
                    }
                    if keep_cov {
                        st.cov.push(covs);
                    }
                }
                states.push(st);
            }
            let high = states.pop().expect("two bands");
            let low = states.pop().expect("two bands");
            Ok(DeviceState { node, group: g, serving, o2i: gl.o2i, low, high })
        })
        .collect::<Result<_>>()?;

    Ok(DropEnv {
        cfg: cfg.clone(),
        noise_bs_w: noise_power_watts(cfg.bandwidth_hz(), cfg.nf_bs_db),
        noise_primary_w: noise_power_watts(cfg.bandwidth_hz(), cfg.nf_primary_db),
        noise_helper_w: noise_power_watts(cfg.bandwidth_hz(), cfg.nf_helper_db),
        layout,
        drop,
        drop_index,
        subband_hz,
        devices,
        bs_power_w,
    })
}

/// Node copy restricted to its first `n` antennas.
pub fn with_antennas(node: &crate::scenario::DeviceNode, n: usize) -> crate::scenario::DeviceNode {
    let mut out = node.clone();
    out.array = ArrayGeometry::subset(&node.array, n);
    out
}
