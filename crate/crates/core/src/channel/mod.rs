//! Per-link channel generation: large-scale loss, clustered rays and the
//! per-subband MIMO matrices built from them.

mod pathloss;
mod rays;

use std::io::Write;

use serde::Serialize;

pub use pathloss::{
    draw_indoor_depth, draw_shadowing, friis_loss_db, los_probability, o2i_mean_db, o2i_penetration,
    o2i_penetration_with, o2i_wall_loss_db, pathloss, shadowing_sigma_db, Heights, LargeScale, O2iModel,
    INDOOR_LOSS_DB_PER_M, SHADOWING_SIGMA_LOS_DB, SHADOWING_SIGMA_NLOS_DB,
};
pub use rays::{gen_rays, LinkGeometry, Ray, RayConfig, RaySet};

use crate::error::{Error, Result};
use crate::linalg::{cis, CMat, C64};
use crate::scenario::{element_amplitude, steering, ArrayGeometry, DeviceNode, Pose};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
pub enum Band {
    Low,
    High,
}

impl Band {
    pub fn name(self) -> &'static str {
        match self {
            Band::Low => "low",
            Band::High => "high",
        }
    }
}

#[derive(Debug, Clone, Copy)]
pub struct Endpoint<'a> {
    pub array: &'a ArrayGeometry,
    pub pose: &'a Pose,
}

impl<'a> From<&'a DeviceNode> for Endpoint<'a> {
    fn from(n: &'a DeviceNode) -> Self {
        Endpoint { array: &n.array, pose: &n.pose }
    }
}

#[derive(Debug, Clone)]
pub struct ChannelRealization {
    /// One `n_rx x n_tx` matrix per subband.
    pub h: Vec<CMat>,
    pub large: LargeScale,
    pub rays: RaySet,
    pub band: Band,
}

impl ChannelRealization {
    pub fn n_rx(&self) -> usize {
        self.h.first().map_or(0, |m| m.nrows())
    }

    pub fn n_tx(&self) -> usize {
        self.h.first().map_or(0, |m| m.ncols())
    }
}

/// `H[s] = √lin · Σ_r √p_r e^{jφ_r} e^{-j2π f_s τ_r} a_rx(aoa_r) a_tx(aod_r)ᴴ`,
/// with the element pattern of each side applied per ray.
///
/// `subcarriers` are baseband offsets (Hz) of the samples; `f_ghz` the carrier
/// used for the array manifolds.
pub fn assemble_channel(
    rays: &RaySet,
    tx: Endpoint<'_>,
    rx: Endpoint<'_>,
    large: &LargeScale,
    subcarriers: &[f64],
    f_ghz: f64,
    band: Band,
) -> Result<ChannelRealization> {
    if tx.array.is_empty() || rx.array.is_empty() {
        return Err(Error::Domain("channel endpoints need non-empty arrays".into()));
    }
    let (n_rx, n_tx) = (rx.array.len(), tx.array.len());
    let amp = large.linear().sqrt();
    let mut a_rx = CMat::zeros(n_rx, rays.rays.len());
    let mut a_tx = CMat::zeros(n_tx, rays.rays.len());
    for (r, ray) in rays.rays.iter().enumerate() {
        let g = ray.power.max(0.0).sqrt()
            * element_amplitude(rx.array, rx.pose, ray.aoa.0, ray.aoa.1)
            * element_amplitude(tx.array, tx.pose, ray.aod.0, ray.aod.1)
            * amp;
        let sr = steering(rx.array, &rx.pose.rotation, ray.aoa.0, ray.aoa.1, f_ghz);
        let st = steering(tx.array, &tx.pose.rotation, ray.aod.0, ray.aod.1, f_ghz);
        a_rx.set_column(r, &(sr * C64::new(g, 0.0)));
        a_tx.set_column(r, &st);
    }
    let a_tx_h = a_tx.adjoint();
    let h = subcarriers
        .iter()
        .map(|&f| {
            let mut scaled = a_rx.clone();
            for (r, ray) in rays.rays.iter().enumerate() {
                let c = cis(ray.phase - std::f64::consts::TAU * f * ray.delay_s);
                scaled.column_mut(r).iter_mut().for_each(|z| *z *= c);
            }
            &scaled * &a_tx_h
        })
        .collect();
    Ok(ChannelRealization { h, large: *large, rays: rays.clone(), band })
}

/// Device-to-device link (`tx` transmits to `rx`): a single LOS ray with
/// free-space loss. The reverse direction is the transpose.
pub fn local_link_channel(
    rx: &DeviceNode,
    tx: &DeviceNode,
    f_ghz: f64,
    subcarriers: &[f64],
    band: Band,
) -> Result<ChannelRealization> {
    let geom = LinkGeometry { tx: tx.pose.position, rx: rx.pose.position };
    let d = geom.distance();
    if !(d > 0.0) {
        return Err(Error::Domain(format!("devices {} and {} are coincident", rx.id, tx.id)));
    }
    let (aod, aoa) = geom.los_angles();
    let phase = -std::f64::consts::TAU * d / crate::units::wavelength_m(f_ghz);
    let rays = RaySet { rays: vec![Ray { power: 1.0, delay_s: 0.0, aod, aoa, phase }] };
    let large = LargeScale { pathloss_db: friis_loss_db(d, f_ghz)?, shadowing_db: 0.0, penetration_db: 0.0, los: true };
    assemble_channel(&rays, tx.into(), rx.into(), &large, subcarriers, f_ghz, band)
}

/// Debug dump with columns `link,band,subband,rx,tx,re,im`.
pub fn write_channel_csv<W: Write>(out: &mut W, link: &str, ch: &ChannelRealization, header: bool) -> std::io::Result<()> {
    if header {
        writeln!(out, "link,band,subband,rx,tx,re,im")?;
    }
    for (s, h) in ch.h.iter().enumerate() {
        for r in 0..h.nrows() {
            for t in 0..h.ncols() {
                let z = h[(r, t)];
                writeln!(out, "{link},{},{s},{r},{t},{:e},{:e}", ch.band.name(), z.re, z.im)?;
            }
        }
    }
    Ok(())
}
