//! dB / linear conversions and radio constants.

pub const SPEED_OF_LIGHT: f64 = 299_792_458.0;
pub const THERMAL_NOISE_DBM_PER_HZ: f64 = -174.0;

#[inline]
pub fn db_to_lin(db: f64) -> f64 {
    10f64.powf(db / 10.0)
}

#[inline]
pub fn lin_to_db(lin: f64) -> f64 {
    10.0 * lin.log10()
}

#[inline]
pub fn dbm_to_watts(dbm: f64) -> f64 {
    db_to_lin(dbm - 30.0)
}

#[inline]
pub fn watts_to_dbm(w: f64) -> f64 {
    lin_to_db(w) + 30.0
}

pub fn wavelength_m(f_ghz: f64) -> f64 {
    SPEED_OF_LIGHT / (f_ghz * 1e9)
}

/// Receiver noise power in watts over `bandwidth_hz` with noise figure `nf_db`.
pub fn noise_power_watts(bandwidth_hz: f64, nf_db: f64) -> f64 {
    dbm_to_watts(THERMAL_NOISE_DBM_PER_HZ + lin_to_db(bandwidth_hz) + nf_db)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn conversions_round_trip() {
        assert!((dbm_to_watts(30.0) - 1.0).abs() < 1e-12);
        assert!((watts_to_dbm(dbm_to_watts(14.0)) - 14.0).abs() < 1e-12);
        assert!((lin_to_db(db_to_lin(-7.3)) + 7.3).abs() < 1e-12);
    }

    #[test]
    fn noise_floor_10mhz() {
        let n = watts_to_dbm(noise_power_watts(10e6, 0.0));
        assert!((n + 104.0).abs() < 1e-9);
    }
}
