//! Antenna array geometry, element patterns and device poses.

use nalgebra::{Matrix3, Rotation3, Vector3};

use crate::error::{Error, Result};
use crate::linalg::{cis, CVec};
use crate::units::{db_to_lin, wavelength_m};

pub type Vec3 = Vector3<f64>;

/// Unit vector for azimuth/elevation in degrees.
pub fn direction(az_deg: f64, el_deg: f64) -> Vec3 {
    let (az, el) = (az_deg.to_radians(), el_deg.to_radians());
    Vec3::new(el.cos() * az.cos(), el.cos() * az.sin(), el.sin())
}

/// Azimuth in [-180, 180) and elevation in [-90, 90] (degrees) of a non-zero vector.
pub fn angles_of(v: &Vec3) -> (f64, f64) {
    let n = v.norm();
    let el = (v.z / n).clamp(-1.0, 1.0).asin().to_degrees();
    let az = wrap_deg(v.y.atan2(v.x).to_degrees());
    (az, el)
}

/// Wrap an angle to [-180, 180).
pub fn wrap_deg(a: f64) -> f64 {
    let w = (a + 180.0).rem_euclid(360.0) - 180.0;
    if w >= 180.0 {
        w - 360.0
    } else {
        w
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ElementPattern {
    Isotropic,
    /// Three-sector macro pattern: 65° half-power beamwidth in both planes,
    /// boresight along local +x tilted down by `downtilt_deg`.
    Sector3gpp {
        downtilt_deg: f64,
        max_gain_dbi: f64,
        front_to_back_db: f64,
    },
}

impl ElementPattern {
    pub fn sector(downtilt_deg: f64, front_to_back_db: f64) -> Self {
        ElementPattern::Sector3gpp { downtilt_deg, max_gain_dbi: 8.0, front_to_back_db }
    }

    /// Power gain (dBi) toward a direction given in the array's local frame.
    pub fn gain_db(&self, local_az_deg: f64, local_el_deg: f64) -> f64 {
        match *self {
            ElementPattern::Isotropic => 0.0,
            ElementPattern::Sector3gpp { downtilt_deg, max_gain_dbi, front_to_back_db } => {
                let a_h = -(12.0 * (wrap_deg(local_az_deg) / 65.0).powi(2)).min(front_to_back_db);
                let a_v = -(12.0 * ((local_el_deg + downtilt_deg) / 65.0).powi(2)).min(front_to_back_db);
                max_gain_dbi - (-(a_h + a_v)).min(front_to_back_db)
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ArrayGeometry {
    /// Element positions in metres, local frame.
    pub positions: Vec<Vec3>,
    pub pattern: ElementPattern,
}

impl ArrayGeometry {
    pub fn new(positions: Vec<Vec3>, pattern: ElementPattern) -> Result<Self> {
        if positions.is_empty() {
            return Err(Error::Domain("array needs at least one element".into()));
        }
        if positions.iter().any(|p| !p.iter().all(|c| c.is_finite())) {
            return Err(Error::Domain("array element positions must be finite".into()));
        }
        Ok(Self { positions, pattern })
    }

    pub fn len(&self) -> usize {
        self.positions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.positions.is_empty()
    }

    /// Uniform linear array along `axis`, centred on the origin.
    pub fn ula(n: usize, spacing_m: f64, axis: Vec3) -> Self {
        let axis = axis.normalize();
        let c = 0.5 * (n as f64 - 1.0);
        let positions = (0..n).map(|i| axis * ((i as f64 - c) * spacing_m)).collect();
        Self { positions, pattern: ElementPattern::Isotropic }
    }

    /// Planar panel in the local y-z plane facing +x. Element index is
    /// `col + n_cols * row`, `col` running along y.
    pub fn panel(n_cols: usize, n_rows: usize, spacing_m: f64, pattern: ElementPattern) -> Self {
        let cy = 0.5 * (n_cols as f64 - 1.0);
        let cz = 0.5 * (n_rows as f64 - 1.0);
        let mut positions = Vec::with_capacity(n_cols * n_rows);
        for row in 0..n_rows {
            for col in 0..n_cols {
                positions.push(Vec3::new(0.0, (col as f64 - cy) * spacing_m, (row as f64 - cz) * spacing_m));
            }
        }
        Self { positions, pattern }
    }

    /// Handset-style layout: up to four antennas at the corners of a
    /// 7 cm x 14 cm chassis held upright in the local x-z plane. The first two
    /// elements sit on opposite corners so that a 2-antenna subset is well spread.
    pub fn handset(n: usize) -> Self {
        let corners = [
            Vec3::new(-0.035, 0.0, -0.07),
            Vec3::new(0.035, 0.0, 0.07),
            Vec3::new(0.035, 0.0, -0.07),
            Vec3::new(-0.035, 0.0, 0.07),
        ];
        let mut positions: Vec<Vec3> = corners.iter().copied().cycle().take(n).collect();
        // more than four antennas: stack further rings 2 cm apart along y
        for (i, p) in positions.iter_mut().enumerate().skip(4) {
            p.y = 0.02 * (i / 4) as f64;
        }
        Self { positions, pattern: ElementPattern::Isotropic }
    }

    /// Keep only the first `n` elements.
    pub fn subset(&self, n: usize) -> Self {
        Self { positions: self.positions[..n.min(self.len())].to_vec(), pattern: self.pattern }
    }

    pub fn scaled(&self, factor: f64) -> Self {
        Self { positions: self.positions.iter().map(|p| p * factor).collect(), pattern: self.pattern }
    }
}

/// Position plus orientation (columns of `rotation` are the local axes in the global frame).
#[derive(Debug, Clone, PartialEq)]
pub struct Pose {
    pub position: Vec3,
    pub rotation: Matrix3<f64>,
}

impl Pose {
    pub fn new(position: Vec3, rotation: Matrix3<f64>) -> Result<Self> {
        let err = (rotation * rotation.transpose() - Matrix3::identity()).abs().max();
        if err > 1e-9 || (rotation.determinant() - 1.0).abs() > 1e-9 {
            return Err(Error::Domain("pose rotation must be orthonormal".into()));
        }
        Ok(Self { position, rotation })
    }

    pub fn at(position: Vec3) -> Self {
        Self { position, rotation: Matrix3::identity() }
    }

    /// Yaw (about +z), then pitch (about the rotated y axis), degrees.
    pub fn yaw_pitch(position: Vec3, yaw_deg: f64, pitch_deg: f64) -> Self {
        let r = Rotation3::from_axis_angle(&Vector3::z_axis(), yaw_deg.to_radians())
            * Rotation3::from_axis_angle(&Vector3::y_axis(), pitch_deg.to_radians());
        Self { position, rotation: *r.matrix() }
    }

    pub fn to_global(&self, local: &Vec3) -> Vec3 {
        self.position + self.rotation * local
    }

    pub fn to_local_dir(&self, global_dir: &Vec3) -> Vec3 {
        self.rotation.transpose() * global_dir
    }
}

/// Steering vector of an array at `pose` toward global direction `(az, el)`:
/// entries `exp(j·2π/λ·⟨R·p_n, u⟩)`.
pub fn steering(array: &ArrayGeometry, rotation: &Matrix3<f64>, az_deg: f64, el_deg: f64, f_ghz: f64) -> CVec {
    let u = direction(az_deg, el_deg);
    let k = 2.0 * std::f64::consts::PI / wavelength_m(f_ghz);
    CVec::from_iterator(
        array.len(),
        array.positions.iter().map(|p| cis(k * (rotation * p).dot(&u))),
    )
}

/// Element amplitude gain `√g` toward a global direction.
pub fn element_amplitude(array: &ArrayGeometry, pose: &Pose, az_deg: f64, el_deg: f64) -> f64 {
    match array.pattern {
        ElementPattern::Isotropic => 1.0,
        pattern => {
            let (laz, lel) = angles_of(&pose.to_local_dir(&direction(az_deg, el_deg)));
            db_to_lin(pattern.gain_db(laz, lel)).sqrt()
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn direction_round_trip() {
        for &(az, el) in &[(0.0, 0.0), (30.0, 20.0), (-170.0, -45.0), (90.0, 89.0)] {
            let (a, e) = angles_of(&direction(az, el));
            assert!((a - az).abs() < 1e-9 && (e - el).abs() < 1e-9);
        }
        assert_eq!(wrap_deg(180.0), -180.0);
        assert!((wrap_deg(370.0) - 10.0).abs() < 1e-12);
    }

    #[test]
    fn sector_pattern_peaks_at_boresight_and_respects_floor() {
        let p = ElementPattern::sector(12.0, 30.0);
        assert!((p.gain_db(0.0, -12.0) - 8.0).abs() < 1e-12);
        assert!(p.gain_db(0.0, 0.0) < 8.0);
        assert!((p.gain_db(180.0, -12.0) - (8.0 - 30.0)).abs() < 1e-12);
        assert!((p.gain_db(65.0 / 2.0, -12.0) - 5.0).abs() < 1e-12);
    }

    #[test]
    fn rotation_must_be_orthonormal() {
        assert!(Pose::new(Vec3::zeros(), Matrix3::identity() * 2.0).is_err());
        let pose = Pose::yaw_pitch(Vec3::zeros(), 37.0, -12.0);
        assert!(Pose::new(pose.position, pose.rotation).is_ok());
    }

    #[test]
    fn panel_indexing() {
        let a = ArrayGeometry::panel(8, 4, 0.5, ElementPattern::Isotropic);
        assert_eq!(a.len(), 32);
        assert!((a.positions[1].y - a.positions[0].y - 0.5).abs() < 1e-12);
        assert!((a.positions[8].z - a.positions[0].z - 0.5).abs() < 1e-12);
    }
}
