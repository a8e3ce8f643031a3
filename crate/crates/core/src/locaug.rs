//! Localization with collaborating devices: virtual arrays, per-device
//! channel estimates from synchronization signals, non-coherent AoA
//! estimation and AoA+range positioning.

use rand::Rng;
use rand_distr::{Distribution, Normal, StandardNormal};
use rayon::prelude::*;
use serde::Serialize;

use crate::channel::{gen_rays, LinkGeometry, RayConfig, RaySet};
use crate::error::{Error, Result};
use crate::linalg::{cis, hermitian_eigen, CMat, CVec, C64};
use crate::rng::{self, domain};
use crate::scenario::{angles_of, direction, wrap_deg, ArrayGeometry, Case, LocBand, Pose, ScenarioConfig, SpectrumMethod, Vec3};
use crate::units::wavelength_m;

/// Elements of several devices expressed in one frame.
#[derive(Debug, Clone, PartialEq)]
pub struct VirtualArray {
    pub positions: Vec<Vec3>,
    /// Element index range of each device.
    pub boundaries: Vec<std::ops::Range<usize>>,
}

impl VirtualArray {
    pub fn len(&self) -> usize {
        self.positions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.positions.is_empty()
    }

    pub fn n_devices(&self) -> usize {
        self.boundaries.len()
    }

    pub fn device(&self, d: usize) -> &[Vec3] {
        &self.positions[self.boundaries[d].clone()]
    }
}

pub fn build_virtual_array(devices: &[(ArrayGeometry, Pose)]) -> Result<VirtualArray> {
    if devices.is_empty() {
        return Err(Error::Domain("a virtual array needs at least one device".into()));
    }
    let mut positions = Vec::new();
    let mut boundaries = Vec::with_capacity(devices.len());
    for (geom, pose) in devices {
        let start = positions.len();
        positions.extend(geom.positions.iter().map(|p| pose.to_global(p)));
        boundaries.push(start..positions.len());
    }
    if positions.iter().any(|p| !p.iter().all(|c| c.is_finite())) {
        return Err(Error::Domain("virtual array positions must be finite".into()));
    }
    Ok(VirtualArray { positions, boundaries })
}

/// Narrowband manifold `exp(j·2π/λ·⟨p_n, u(az, el)⟩)`.
pub fn steering_vector(positions: &[Vec3], az_deg: f64, el_deg: f64, f_ghz: f64) -> CVec {
    let u = direction(az_deg, el_deg);
    let k = std::f64::consts::TAU / wavelength_m(f_ghz);
    CVec::from_iterator(positions.len(), positions.iter().map(|p| cis(k * p.dot(&u))))
}

/// Channel estimate of one device: `n_antennas x n_subcarriers`.
#[derive(Debug, Clone, PartialEq)]
pub struct DeviceResponse {
    pub h: CMat,
    pub snr_db: f64,
}

/// Least-squares estimate `ĥ = y / s` per antenna and subcarrier. `rx` is
/// `n_antennas x n_subcarriers`; `noise_var` is only used for the SNR figure.
pub fn estimate_device_response(rx: &CMat, pilots: &[C64], noise_var: f64) -> Result<DeviceResponse> {
    if rx.ncols() != pilots.len() {
        return Err(Error::Dimension(format!("{} subcarriers received, {} pilots", rx.ncols(), pilots.len())));
    }
    if let Some(k) = pilots.iter().position(|s| s.norm_sqr() == 0.0) {
        return Err(Error::Domain(format!("pilot on subcarrier {k} is zero")));
    }
    let h = CMat::from_fn(rx.nrows(), rx.ncols(), |n, k| rx[(n, k)] / pilots[k]);
    let power = h.iter().map(|z| z.norm_sqr()).sum::<f64>() / h.len().max(1) as f64;
    let snr = (power / noise_var - 1.0).max(f64::MIN_POSITIVE);
    Ok(DeviceResponse { h, snr_db: 10.0 * snr.log10() })
}

/// Average of repeated estimates of the same device (e.g. successive SSBs).
pub fn average_responses(reps: &[DeviceResponse]) -> Result<DeviceResponse> {
    let first = reps.first().ok_or_else(|| Error::Domain("no responses to average".into()))?;
    let mut h = first.h.clone();
    for r in &reps[1..] {
        if r.h.shape() != h.shape() {
            return Err(Error::Dimension("responses of different shapes".into()));
        }
        h += &r.h;
    }
    let n = reps.len() as f64;
    let snr_db = reps.iter().map(|r| r.snr_db).sum::<f64>() / n + 10.0 * n.log10();
    Ok(DeviceResponse { h: h / C64::new(n, 0.0), snr_db })
}

/// Search grid in degrees.
#[derive(Debug, Clone, PartialEq)]
pub struct Grid {
    pub az_deg: Vec<f64>,
    pub el_deg: Vec<f64>,
}

impl Grid {
    /// Full azimuth circle `[-180, 180)` and elevations `[el_min, el_max]`.
    pub fn uniform(step_deg: f64, el_min: f64, el_max: f64) -> Result<Self> {
        if !(step_deg > 0.0) || !(el_min <= el_max) || el_min < -90.0 || el_max > 90.0 {
            return Err(Error::Domain(format!("invalid grid: step {step_deg}, elevation [{el_min}, {el_max}]")));
        }
        let n_az = (360.0 / step_deg).round() as usize;
        let n_el = ((el_max - el_min) / step_deg).floor() as usize + 1;
        Ok(Self {
            az_deg: (0..n_az).map(|i| -180.0 + i as f64 * step_deg).collect(),
            el_deg: (0..n_el).map(|i| el_min + i as f64 * step_deg).collect(),
        })
    }

    fn az_wraps(&self) -> bool {
        let n = self.az_deg.len();
        n > 2 && {
            let step = self.az_deg[1] - self.az_deg[0];
            (self.az_deg[n - 1] + step - self.az_deg[0] - 360.0).abs() < 1e-9
        }
    }
}

/// Spectrum values stored row-major by elevation: `values[i_el * n_az + i_az]`.
#[derive(Debug, Clone, PartialEq)]
pub struct SpatialSpectrum {
    pub az_deg: Vec<f64>,
    pub el_deg: Vec<f64>,
    pub values: Vec<f64>,
}

impl SpatialSpectrum {
    pub fn at(&self, i_az: usize, i_el: usize) -> f64 {
        self.values[i_el * self.az_deg.len() + i_az]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum EstimateMethod {
    SingleDevice,
    NonCoherentCombined,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct AoAEstimate {
    pub az: f64,
    pub el: f64,
    /// Great-circle error against the truth, when known.
    pub angular_error_deg: Option<f64>,
    pub method: EstimateMethod,
}

impl AoAEstimate {
    pub fn with_truth(mut self, az: f64, el: f64) -> Self {
        self.angular_error_deg = Some(aoa_error((self.az, self.el), (az, el)));
        self
    }
}

/// Per-device quadratic form evaluated over the grid.
enum DeviceKernel {
    /// Sample covariance.
    Bartlett(CMat),
    /// Noise-subspace projector.
    Music(CMat),
}

fn device_kernel(h: &CMat, method: SpectrumMethod) -> DeviceKernel {
    let r = h * h.adjoint() / C64::new(h.ncols() as f64, 0.0);
    match method {
        SpectrumMethod::Bartlett => DeviceKernel::Bartlett(r),
        SpectrumMethod::Music => {
            // one dominant arrival per device
            let (_, v) = hermitian_eigen(&r);
            let en = v.columns(1, v.ncols() - 1).into_owned();
            DeviceKernel::Music(&en * en.adjoint())
        }
    }
}

fn quad(a: &CVec, m: &CMat) -> f64 {
    let mut acc = 0.0;
    for i in 0..a.len() {
        let mut row = C64::new(0.0, 0.0);
        for j in 0..a.len() {
            row += m[(i, j)] * a[j];
        }
        acc += (a[i].conj() * row).re;
    }
    acc
}

/// Parabolic vertex offset in grid steps, within half a step.
fn vertex(lo: f64, mid: f64, hi: f64) -> f64 {
    let den = lo - 2.0 * mid + hi;
    if den < 0.0 {
        (0.5 * (lo - hi) / den).clamp(-0.5, 0.5)
    } else {
        0.0
    }
}

/// Non-coherent spectrum: per device `a_dᴴ R_d a_d / ‖a_d‖²` (Bartlett) or
/// `‖a_d‖² / a_dᴴ E_n E_nᴴ a_d` (MUSIC), summed over devices. Each device
/// contributes only through its own covariance, so per-device phases cancel.
pub fn noncoherent_aoa(
    responses: &[DeviceResponse],
    array: &VirtualArray,
    grid: &Grid,
    method: SpectrumMethod,
    f_ghz: f64,
) -> Result<(AoAEstimate, SpatialSpectrum)> {
    if responses.is_empty() {
        return Err(Error::Estimation("no device responses".into()));
    }
    if responses.len() != array.n_devices() {
        return Err(Error::Dimension(format!("{} responses for {} devices", responses.len(), array.n_devices())));
    }
    if grid.az_deg.is_empty() || grid.el_deg.is_empty() {
        return Err(Error::Domain("empty search grid".into()));
    }
    for (d, r) in responses.iter().enumerate() {
        if r.h.nrows() != array.boundaries[d].len() {
            return Err(Error::Dimension(format!("device {d}: {} antennas estimated, {} in the array", r.h.nrows(), array.boundaries[d].len())));
        }
        if r.h.ncols() == 0 {
            return Err(Error::Estimation(format!("device {d}: no subcarriers to form a covariance")));
        }
    }
    let kernels: Vec<DeviceKernel> = responses.iter().map(|r| device_kernel(&r.h, method)).collect();
    let n_az = grid.az_deg.len();
    let values: Vec<f64> = grid
        .el_deg
        .par_iter()
        .flat_map_iter(|&el| {
            let kernels = &kernels;
            grid.az_deg.iter().map(move |&az| {
                let mut s = 0.0;
                for (d, k) in kernels.iter().enumerate() {
                    let a = steering_vector(array.device(d), az, el, f_ghz);
                    let n = a.len() as f64;
                    s += match k {
                        DeviceKernel::Bartlett(r) => quad(&a, r).max(0.0) / n,
                        DeviceKernel::Music(p) if p.ncols() > 0 && p.nrows() > 1 => n / quad(&a, p).max(1e-12 * n),
                        DeviceKernel::Music(_) => 0.0,
                    };
                }
                s
            })
        })
        .collect();
    if values.iter().any(|v| !v.is_finite()) {
        return Err(Error::Numerical("non-finite spatial spectrum".into()));
    }
    let spec = SpatialSpectrum { az_deg: grid.az_deg.clone(), el_deg: grid.el_deg.clone(), values };

    let best = (0..spec.values.len()).fold(0, |b, i| if spec.values[i] > spec.values[b] { i } else { b });
    let (i_el, i_az) = (best / n_az, best % n_az);
    let mut az = grid.az_deg[i_az];
    let mut el = grid.el_deg[i_el];
    let mid = spec.at(i_az, i_el);
    if n_az > 2 && (grid.az_wraps() || (i_az > 0 && i_az + 1 < n_az)) {
        let (l, h) = ((i_az + n_az - 1) % n_az, (i_az + 1) % n_az);
        az += vertex(spec.at(l, i_el), mid, spec.at(h, i_el)) * (grid.az_deg[1] - grid.az_deg[0]);
    }
    if i_el > 0 && i_el + 1 < grid.el_deg.len() {
        el += vertex(spec.at(i_az, i_el - 1), mid, spec.at(i_az, i_el + 1)) * (grid.el_deg[1] - grid.el_deg[0]);
    }
    let method = if responses.len() == 1 { EstimateMethod::SingleDevice } else { EstimateMethod::NonCoherentCombined };
    let est = AoAEstimate { az: wrap_deg(az), el: el.clamp(-90.0, 90.0), angular_error_deg: None, method };
    Ok((est, spec))
}

/// Great-circle angle (degrees) between two directions.
pub fn aoa_error(est: (f64, f64), truth: (f64, f64)) -> f64 {
    direction(est.0, est.1).dot(&direction(truth.0, truth.1)).clamp(-1.0, 1.0).acos().to_degrees()
}

/// Position from the direction toward the BS and the range to it.
pub fn localize(est: &AoAEstimate, range_m: f64, bs_position: &Vec3) -> Result<Vec3> {
    if !(range_m > 0.0) {
        return Err(Error::Domain(format!("range {range_m} must be positive")));
    }
    Ok(bs_position - direction(est.az, est.el) * range_m)
}

/// One user of a localization experiment.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct LocRow {
    pub seed: u64,
    pub user: usize,
    pub case: Case,
    pub true_az: f64,
    pub true_el: f64,
    pub est_az: f64,
    pub est_el: f64,
    pub aoa_err_deg: f64,
    pub pos_err_m: f64,
    pub indoor: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LocExperiment {
    pub case: Case,
    pub rows: Vec<LocRow>,
    pub median_aoa_err_deg: f64,
    pub mean_aoa_err_deg: f64,
    pub median_pos_err_m: f64,
    pub mean_pos_err_m: f64,
}

pub fn median(values: &[f64]) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    match v.len() {
        0 => f64::NAN,
        n if n % 2 == 1 => v[n / 2],
        n => 0.5 * (v[n / 2 - 1] + v[n / 2]),
    }
}

/// Baseband offsets (Hz) of the subcarriers carrying the reference signal.
pub fn loc_subcarriers(cfg: &ScenarioConfig) -> Vec<f64> {
    let n = match cfg.loc_band {
        LocBand::Ssb => 240,
        LocBand::Prs => 12 * cfg.num_prbs(),
    };
    let scs = cfg.scs_khz * 1e3;
    (0..n).map(|k| (k as f64 - 0.5 * (n as f64 - 1.0)) * scs).collect()
}

pub const PHONE_OFFSET_M: (f64, f64) = (0.3, -0.5);
pub const PHONE_MAX_PITCH_DEG: f64 = 15.0;
pub const CPE_DISTANCE_M: (f64, f64) = (3.0, 5.0);
pub const CPE_HEIGHT_OFFSET_M: f64 = 1.0;
pub const LOC_DISTANCE_M: (f64, f64) = (35.0, 250.0);
/// Residual timing offset of an unsynchronized device.
const MAX_TIMING_OFFSET_S: f64 = 50e-9;

/// Devices around one user; the glasses come first.
struct UserScene {
    bs: Vec3,
    glasses: Vec3,
    indoor: bool,
    devices: Vec<(ArrayGeometry, Pose)>,
    rays: RaySet,
}

fn devices_for(case: Case) -> Result<usize> {
    match case {
        Case::Loc1 => Ok(1),
        Case::Loc2 => Ok(2),
        Case::Loc3 => Ok(4),
        _ => Err(Error::Config(format!("case `{case}` is not a localization experiment"))),
    }
}

fn user_scene(cfg: &ScenarioConfig, seed: u64, user: usize) -> Result<UserScene> {
    let mut rng = rng::stream(cfg.seed, &[domain::LOCALIZATION, seed, user as u64, 0]);
    let half = 0.5 * wavelength_m(cfg.f_low_ghz);
    let bs = Vec3::new(0.0, 0.0, cfg.bs_height_m);
    let d = rng.random_range(LOC_DISTANCE_M.0..LOC_DISTANCE_M.1);
    let bearing = rng.random_range(0.0..std::f64::consts::TAU);
    let glasses = Vec3::new(d * bearing.cos(), d * bearing.sin(), cfg.ue_height_m);
    let indoor = rng.random_bool(cfg.loc_indoor_fraction.clamp(0.0, 1.0));
    let yaw = rng.random_range(-180.0..180.0);
    let glasses_pose = Pose::yaw_pitch(glasses, yaw, 0.0);

    // phone held in front below the head, long axis pointing forward
    let phone_pos = glasses_pose.to_global(&Vec3::new(0.0, PHONE_OFFSET_M.0, PHONE_OFFSET_M.1));
    let phone_yaw = yaw + 90.0 + 10.0 * rng.sample::<f64, _>(StandardNormal);
    let phone_pitch = rng.random_range(-PHONE_MAX_PITCH_DEG..PHONE_MAX_PITCH_DEG);
    let ula = ArrayGeometry::ula(2, half, Vec3::x());
    let mut devices = vec![(ula.clone(), glasses_pose), (ula, Pose::yaw_pitch(phone_pos, phone_yaw, phone_pitch))];
    for _ in 0..2 {
        let r = rng.random_range(CPE_DISTANCE_M.0..CPE_DISTANCE_M.1);
        let b = rng.random_range(0.0..std::f64::consts::TAU);
        let pos = glasses + Vec3::new(r * b.cos(), r * b.sin(), CPE_HEIGHT_OFFSET_M);
        let panel = ArrayGeometry::panel(2, 2, half, crate::scenario::ElementPattern::Isotropic);
        devices.push((panel, Pose::yaw_pitch(pos, rng.random_range(-180.0..180.0), 0.0)));
    }
    let rays = gen_rays(&LinkGeometry { tx: bs, rx: glasses }, !indoor, &RayConfig::default(), &mut rng)?;
    Ok(UserScene { bs, glasses, indoor, devices, rays })
}

/// Received reference-signal symbols at one device. The BS is far enough
/// that every device of the user sees the same rays as plane waves; each
/// device adds its own carrier phase and timing offset.
fn device_rx<R: Rng + ?Sized>(positions: &[Vec3], rays: &RaySet, subcarriers: &[f64], pilots: &[C64], noise_var: f64, f_ghz: f64, rng: &mut R) -> CMat {
    let phase = rng.random_range(0.0..std::f64::consts::TAU);
    let timing = rng.random_range(-MAX_TIMING_OFFSET_S..MAX_TIMING_OFFSET_S);
    let sigma = (0.5 * noise_var).sqrt();
    let steer: Vec<CVec> = rays.rays.iter().map(|r| steering_vector(positions, r.aoa.0, r.aoa.1, f_ghz)).collect();
    CMat::from_fn(positions.len(), subcarriers.len(), |n, k| {
        let f = subcarriers[k];
        let mut h = C64::new(0.0, 0.0);
        for (ray, a) in rays.rays.iter().zip(&steer) {
            h += a[n] * cis(ray.phase - std::f64::consts::TAU * f * ray.delay_s) * ray.power.sqrt();
        }
        h *= cis(phase - std::f64::consts::TAU * f * timing);
        let noise = C64::new(sigma * rng.sample::<f64, _>(StandardNormal), sigma * rng.sample::<f64, _>(StandardNormal));
        h * pilots[k] + noise
    })
}

fn perturbed_pose<R: Rng + ?Sized>(pose: &Pose, sigma_deg: f64, rng: &mut R) -> Pose {
    if sigma_deg <= 0.0 {
        return pose.clone();
    }
    let e: f64 = sigma_deg * rng.sample::<f64, _>(StandardNormal);
    let r = nalgebra::Rotation3::from_axis_angle(&nalgebra::Vector3::z_axis(), e.to_radians());
    Pose { position: pose.position, rotation: r.matrix() * pose.rotation }
}

fn loc_user(cfg: &ScenarioConfig, case: Case, seed: u64, user: usize, grid: &Grid, subcarriers: &[f64]) -> Result<LocRow> {
    let scene = user_scene(cfg, seed, user)?;
    let n_dev = devices_for(case)?;
    let f = cfg.f_low_ghz;
    // shared across cases, so users are paired between them
    let mut rng = rng::stream(cfg.seed, &[domain::LOCALIZATION, seed, user as u64, 1]);
    let pilots: Vec<C64> = (0..subcarriers.len())
        .map(|_| cis(std::f64::consts::FRAC_PI_4 * (2 * rng.random_range(0..4) + 1) as f64))
        .collect();
    let noise_var = 10f64.powf(-cfg.loc_snr_db / 10.0);

    // the channel and estimates are drawn for every device so that cases share them
    let mut responses = Vec::with_capacity(scene.devices.len());
    let mut assumed = Vec::with_capacity(scene.devices.len());
    for (d, (geom, pose)) in scene.devices.iter().enumerate() {
        let rel = Pose { position: pose.position - scene.glasses, rotation: pose.rotation };
        let truth: Vec<Vec3> = geom.positions.iter().map(|p| rel.to_global(p)).collect();
        let rx = device_rx(&truth, &scene.rays, subcarriers, &pilots, noise_var, f, &mut rng);
        responses.push(estimate_device_response(&rx, &pilots, noise_var)?);
        let believed = if d == 0 { rel } else { perturbed_pose(&rel, cfg.loc_pose_error_deg, &mut rng) };
        assumed.push((geom.clone(), believed));
    }
    let array = build_virtual_array(&assumed[..n_dev])?;
    let (true_az, true_el) = angles_of(&(scene.bs - scene.glasses));
    let (est, _) = noncoherent_aoa(&responses[..n_dev], &array, grid, cfg.loc_method, f)?;
    let est = est.with_truth(true_az, true_el);

    let range_true = (scene.bs - scene.glasses).norm();
    let range_noise = Normal::new(0.0, cfg.loc_range_sigma_m.max(0.0)).map_err(|e| Error::Config(e.to_string()))?;
    let range = (range_true + range_noise.sample(&mut rng)).max(1e-3);
    let pos = localize(&est, range, &scene.bs)?;
    Ok(LocRow {
        seed,
        user,
        case,
        true_az,
        true_el,
        est_az: est.az,
        est_el: est.el,
        aoa_err_deg: est.angular_error_deg.expect("truth attached"),
        pos_err_m: (pos - scene.glasses).norm(),
        indoor: scene.indoor,
    })
}

/// Search grid of the experiment: 1° steps, upper hemisphere (the BS is
/// above every user).
pub fn loc_grid() -> Grid {
    Grid::uniform(1.0, 0.0, 90.0).expect("static grid is valid")
}

/// Run `n_users` synthetic users for one localization case. Users, devices
/// and channels depend only on `(cfg.seed, seed)` and the user index, so the
/// three cases are evaluated on the same population.
pub fn run_loc_experiment(cfg: &ScenarioConfig, case: Case, n_users: usize, seed: u64) -> Result<LocExperiment> {
    devices_for(case)?;
    if n_users == 0 {
        return Err(Error::Domain("need at least one user".into()));
    }
    let grid = loc_grid();
    let subcarriers = loc_subcarriers(cfg);
    let rows = (0..n_users)
        .into_par_iter()
        .map(|u| loc_user(cfg, case, seed, u, &grid, &subcarriers))
        .collect::<Result<Vec<_>>>()?;
    let aoa: Vec<f64> = rows.iter().map(|r| r.aoa_err_deg).collect();
    let pos: Vec<f64> = rows.iter().map(|r| r.pos_err_m).collect();
    let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
    Ok(LocExperiment {
        case,
        median_aoa_err_deg: median(&aoa),
        mean_aoa_err_deg: mean(&aoa),
        median_pos_err_m: median(&pos),
        mean_pos_err_m: mean(&pos),
        rows,
    })
}
