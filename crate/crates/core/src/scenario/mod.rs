//! Deployment geometry: hexagonal sites, sectors, device drops and wraparound.

mod array;
mod config;

pub use array::{
    angles_of, direction, element_amplitude, steering, wrap_deg, ArrayGeometry, ElementPattern, Pose, Vec3,
};
pub use config::{
    parse_kv, Case, KvEntry, LocBand, ScenarioConfig, SpectrumMethod, Traffic, DEFAULT_FTP_FILE_BYTES,
    SCENARIO_KEYS,
};

use nalgebra::Vector2;
use rand::Rng;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::rng::{self, domain};

pub type Vec2 = Vector2<f64>;

#[derive(Debug, Clone, PartialEq)]
pub struct Site {
    pub position: Vec2,
    pub cell_azimuths_deg: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Cell {
    pub site: usize,
    pub azimuth_deg: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SiteLayout {
    pub isd_m: f64,
    pub num_rings: usize,
    pub sites: Vec<Site>,
    pub cells: Vec<Cell>,
    /// Translations of the six wraparound mirror clusters (empty for a single site).
    pub wrap_offsets: Vec<Vec2>,
}

pub const SECTOR_AZIMUTHS_DEG: [f64; 3] = [0.0, 120.0, 240.0];

fn axial_to_xy(q: i64, r: i64, isd: f64) -> Vec2 {
    Vec2::new(isd * (q as f64 + 0.5 * r as f64), isd * 0.5 * 3f64.sqrt() * r as f64)
}

/// Hexagonal site lattice with `num_rings` rings around a centre site, three
/// sectors per site. Sites are ordered by ring, then counter-clockwise from +x.
pub fn build_hex_layout(num_rings: usize, isd: f64) -> SiteLayout {
    let r = num_rings as i64;
    let mut axial = Vec::new();
    for q in -r..=r {
        for s in -r..=r {
            if q.abs().max(s.abs()).max((q + s).abs()) <= r {
                axial.push((q, s));
            }
        }
    }
    let key = |&(q, s): &(i64, i64)| {
        let ring = q.abs().max(s.abs()).max((q + s).abs());
        let p = axial_to_xy(q, s, 1.0);
        let ang = p.y.atan2(p.x).rem_euclid(std::f64::consts::TAU);
        (ring, (ang * 1e9).round() as i64)
    };
    axial.sort_by_key(key);

    let sites: Vec<Site> = axial
        .iter()
        .map(|&(q, s)| Site { position: axial_to_xy(q, s, isd), cell_azimuths_deg: SECTOR_AZIMUTHS_DEG.to_vec() })
        .collect();
    let cells = sites
        .iter()
        .enumerate()
        .flat_map(|(i, s)| s.cell_azimuths_deg.iter().map(move |&a| Cell { site: i, azimuth_deg: a }))
        .collect();

    let wrap_offsets = if num_rings == 0 {
        Vec::new()
    } else {
        let mut t = (2 * r + 1, -r);
        let mut out = Vec::with_capacity(6);
        for _ in 0..6 {
            out.push(axial_to_xy(t.0, t.1, isd));
            t = (-t.1, t.0 + t.1);
        }
        out
    };

    SiteLayout { isd_m: isd, num_rings, sites, cells, wrap_offsets }
}

/// Shortest displacement from `a` to any of the seven images of `b`.
pub fn wraparound_vector(a: &Vec2, b: &Vec2, layout: &SiteLayout) -> Vec2 {
    let mut best = b - a;
    for t in &layout.wrap_offsets {
        let d = b + t - a;
        if d.norm_squared() < best.norm_squared() {
            best = d;
        }
    }
    best
}

impl SiteLayout {
    /// Is `p` (relative to a site) inside that site's hexagon?
    pub fn in_site_hexagon(&self, rel: &Vec2) -> bool {
        let half = 0.5 * self.isd_m + 1e-9;
        (0..3).all(|k| {
            let a = (60.0 * k as f64).to_radians();
            (rel.x * a.cos() + rel.y * a.sin()).abs() <= half
        })
    }

    /// Sector footprint test: inside the site hexagon and within ±60° of the cell azimuth.
    pub fn in_cell_footprint(&self, cell: usize, p: &Vec2) -> bool {
        let c = self.cells[cell];
        let rel = p - self.sites[c.site].position;
        if !self.in_site_hexagon(&rel) {
            return false;
        }
        let ang = rel.y.atan2(rel.x).to_degrees();
        wrap_deg(ang - c.azimuth_deg).abs() <= 60.0 + 1e-9
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum DeviceKind {
    Bs,
    PrimaryUe,
    Helper,
    LegacyUe,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DeviceNode {
    pub id: usize,
    pub kind: DeviceKind,
    pub pose: Pose,
    pub array: ArrayGeometry,
    pub indoor: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum GroupMode {
    Diversity,
    Rank,
    Localization,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CollaborationGroup {
    pub primary: usize,
    pub helpers: Vec<usize>,
    pub mode: GroupMode,
    /// Whether the primary supports collaboration at all.
    pub advanced: bool,
}

/// Output of [`drop_ues`].
#[derive(Debug, Clone)]
pub struct Drop {
    /// BS nodes first (one per cell, index = cell id), then primary/helper pairs.
    pub nodes: Vec<DeviceNode>,
    pub groups: Vec<CollaborationGroup>,
    /// Cell whose footprint the primary was dropped in.
    pub serving_cell: Vec<usize>,
}

impl Drop {
    pub fn node(&self, id: usize) -> &DeviceNode {
        &self.nodes[id]
    }

    pub fn bs(&self, cell: usize) -> &DeviceNode {
        &self.nodes[cell]
    }

    pub fn primary(&self, group: usize) -> &DeviceNode {
        &self.nodes[self.groups[group].primary]
    }

    pub fn helper(&self, group: usize) -> Option<&DeviceNode> {
        self.groups[group].helpers.first().map(|&h| &self.nodes[h])
    }
}

pub const MAX_PLACEMENT_TRIES: usize = 10_000;

/// Panel shape `(cols, rows)`: rows is the largest divisor of the port count
/// with `2·rows² ≤ ports`, so 32 ports give an 8 x 4 panel.
pub fn bs_panel_shape(cfg: &ScenarioConfig) -> (usize, usize) {
    let n = cfg.bs_ports.max(1);
    let rows = (1..=n).filter(|d| n.is_multiple_of(*d) && 2 * d * d <= n).max().unwrap_or(1);
    (n / rows, rows)
}

/// Half-wavelength BS panel for the given band.
pub fn bs_panel(cfg: &ScenarioConfig, f_ghz: f64) -> ArrayGeometry {
    let (cols, rows) = bs_panel_shape(cfg);
    ArrayGeometry::panel(
        cols,
        rows,
        0.5 * crate::units::wavelength_m(f_ghz),
        ElementPattern::sector(cfg.bs_downtilt_deg, cfg.bs_front_to_back_db),
    )
}

fn mode_for(case: Case) -> GroupMode {
    match case {
        Case::RankAug => GroupMode::Rank,
        Case::Loc1 | Case::Loc2 | Case::Loc3 => GroupMode::Localization,
        Case::Baseline | Case::Diversity => GroupMode::Diversity,
    }
}

/// Drop `ues_per_cell` primaries uniformly in every cell footprint (at least
/// `min_bs_distance_m` from the site) and one helper per primary at
/// `helper_distance_m` in a uniformly random horizontal bearing.
pub fn drop_ues(layout: &SiteLayout, cfg: &ScenarioConfig, drop_index: u64) -> Result<Drop> {
    let mut nodes = Vec::new();
    for (ci, cell) in layout.cells.iter().enumerate() {
        let site = &layout.sites[cell.site];
        nodes.push(DeviceNode {
            id: ci,
            kind: DeviceKind::Bs,
            pose: Pose::yaw_pitch(Vec3::new(site.position.x, site.position.y, cfg.bs_height_m), cell.azimuth_deg, 0.0),
            array: bs_panel(cfg, cfg.f_low_ghz),
            indoor: false,
        });
    }

    let radius = layout.isd_m / 3f64.sqrt();
    let mut groups = Vec::new();
    let mut serving_cell = Vec::new();
    let n_rx = cfg.ue_dl_config.1.max(cfg.ue_ul_config.0).max(cfg.ue_ul_config.1).max(cfg.ue_dl_config.0);
    let n_helper = cfg.helper_config.0.max(cfg.helper_config.1);
    for (ci, cell) in layout.cells.iter().enumerate() {
        let site = layout.sites[cell.site].position;
        for k in 0..cfg.ues_per_cell {
            let mut rng = rng::stream(cfg.seed, &[domain::PLACEMENT, drop_index, ci as u64, k as u64]);
            let mut placed = None;
            for _ in 0..MAX_PLACEMENT_TRIES {
                let p = site + Vec2::new(rng.random_range(-radius..radius), rng.random_range(-radius..radius));
                if (p - site).norm() >= cfg.min_bs_distance_m && layout.in_cell_footprint(ci, &p) {
                    placed = Some(p);
                    break;
                }
            }
            let p = placed.ok_or_else(|| {
                Error::Config(format!("could not place a UE in cell {ci} after {MAX_PLACEMENT_TRIES} tries"))
            })?;
            let bearing = rng.random_range(0.0..std::f64::consts::TAU);
            let yaw_p: f64 = rng.random_range(-180.0..180.0);
            let yaw_h: f64 = rng.random_range(-180.0..180.0);
            let advanced = rng.random::<f64>() < cfg.advanced_fraction;

            let primary_pos = Vec3::new(p.x, p.y, cfg.ue_height_m);
            let helper_pos = primary_pos + Vec3::new(bearing.cos(), bearing.sin(), 0.0) * cfg.helper_distance_m;
            let pid = nodes.len();
            nodes.push(DeviceNode {
                id: pid,
                kind: DeviceKind::PrimaryUe,
                pose: Pose::yaw_pitch(primary_pos, yaw_p, 0.0),
                array: ArrayGeometry::handset(n_rx),
                indoor: true,
            });
            nodes.push(DeviceNode {
                id: pid + 1,
                kind: DeviceKind::Helper,
                pose: Pose::yaw_pitch(helper_pos, yaw_h, 0.0),
                array: ArrayGeometry::handset(n_helper),
                indoor: true,
            });
            groups.push(CollaborationGroup { primary: pid, helpers: vec![pid + 1], mode: mode_for(cfg.case), advanced });
            serving_cell.push(ci);
        }
    }
    Ok(Drop { nodes, groups, serving_cell })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn layout_counts() {
        for (r, sites) in [(0, 1), (1, 7), (2, 19), (3, 37)] {
            let l = build_hex_layout(r, 200.0);
            assert_eq!(l.sites.len(), sites);
            assert_eq!(l.cells.len(), 3 * sites);
        }
    }

    #[test]
    fn nearest_neighbours_at_isd() {
        for r in 1..=3 {
            let l = build_hex_layout(r, 200.0);
            for (i, a) in l.sites.iter().enumerate() {
                let nn = l
                    .sites
                    .iter()
                    .enumerate()
                    .filter(|(j, _)| *j != i)
                    .map(|(_, b)| (b.position - a.position).norm())
                    .fold(f64::INFINITY, f64::min);
                assert!((nn - 200.0).abs() < 1e-6);
            }
        }
    }

    #[test]
    fn single_site_has_no_wrap() {
        let l = build_hex_layout(0, 200.0);
        let a = Vec2::new(3.0, -4.0);
        let b = Vec2::new(900.0, 50.0);
        assert_eq!(wraparound_vector(&a, &b, &l), b - a);
        assert_eq!(wraparound_vector(&a, &a, &l), Vec2::zeros());
    }

    #[test]
    fn mirrored_clusters_tile_without_overlap() {
        let l = build_hex_layout(2, 200.0);
        let mut pts: Vec<Vec2> = l.sites.iter().map(|s| s.position).collect();
        for t in &l.wrap_offsets {
            pts.extend(l.sites.iter().map(|s| s.position + t));
        }
        for i in 0..pts.len() {
            for j in 0..i {
                assert!((pts[i] - pts[j]).norm() > 1.0);
            }
        }
    }

    #[test]
    fn drop_counts_and_helper_distance() {
        let cfg = ScenarioConfig { num_rings: 1, ..Default::default() };
        let l = build_hex_layout(1, cfg.isd_m);
        let d = drop_ues(&l, &cfg, 0).unwrap();
        assert_eq!(d.groups.len(), 210);
        assert_eq!(d.nodes.iter().filter(|n| n.kind == DeviceKind::Helper).count(), 210);
        for (g, grp) in d.groups.iter().enumerate() {
            let p = d.primary(g);
            let h = d.helper(g).unwrap();
            assert!(((p.pose.position - h.pose.position).norm() - 1.0).abs() < 1e-9);
            assert!(p.indoor && h.indoor);
            assert!(l.in_cell_footprint(d.serving_cell[g], &p.pose.position.xy()));
            assert_eq!(grp.helpers.len(), 1);
        }
    }

    #[test]
    fn bs_panel_is_8_by_4() {
        let cfg = ScenarioConfig::default();
        assert_eq!(bs_panel_shape(&cfg), (8, 4));
        let cfg = ScenarioConfig { bs_ports: 8, ..Default::default() };
        assert_eq!(bs_panel(&cfg, 2.0).len(), 8);
    }
}
