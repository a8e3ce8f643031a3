//! Experiment configuration and its plain-text `key = value` file format.

use std::fmt;
use std::str::FromStr;

use serde::Serialize;

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub enum Traffic {
    FullBuffer,
    Ftp3 { file_bytes: u64, lambda_per_s: f64 },
}

/// Which experiment a drop runs.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Case {
    Baseline,
    Diversity,
    RankAug,
    Loc1,
    Loc2,
    Loc3,
}

impl Case {
    pub const ALL: [Case; 6] = [
        Case::Baseline,
        Case::Diversity,
        Case::RankAug,
        Case::Loc1,
        Case::Loc2,
        Case::Loc3,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Case::Baseline => "baseline",
            Case::Diversity => "diversity",
            Case::RankAug => "rank_aug",
            Case::Loc1 => "loc1",
            Case::Loc2 => "loc2",
            Case::Loc3 => "loc3",
        }
    }

    pub fn is_localization(self) -> bool {
        matches!(self, Case::Loc1 | Case::Loc2 | Case::Loc3)
    }
}

impl fmt::Display for Case {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Case {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        let norm = s.trim().to_ascii_lowercase().replace('-', "_");
        Case::ALL
            .into_iter()
            .find(|c| c.name() == norm || (norm == "rank" && *c == Case::RankAug))
            .ok_or_else(|| format!("unknown case `{s}`"))
    }
}

/// Reference signal used for angle estimation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum LocBand {
    /// 240 subcarriers (one SSB).
    Ssb,
    /// All subcarriers of the carrier.
    Prs,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum SpectrumMethod {
    Bartlett,
    Music,
}

/// Full description of one experiment.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ScenarioConfig {
    pub isd_m: f64,
    pub num_rings: usize,
    pub cells_per_site: usize,
    pub ues_per_cell: usize,
    pub f_low_ghz: f64,
    pub f_high_ghz: f64,
    pub bandwidth_mhz: f64,
    pub scs_khz: f64,
    pub bs_ports: usize,
    /// (tx, rx) antennas of the primary device on the downlink.
    pub ue_dl_config: (usize, usize),
    /// (tx, rx) antennas of the primary device on the uplink.
    pub ue_ul_config: (usize, usize),
    /// (tx, rx) antennas of a helper device.
    pub helper_config: (usize, usize),
    pub helper_distance_m: f64,
    pub ue_max_tx_dbm: f64,
    pub relay_max_tx_dbm: f64,
    pub bs_tx_dbm: f64,
    pub traffic: Traffic,
    pub case: Case,
    pub seed: u64,

    pub duration_s: f64,
    pub min_bs_distance_m: f64,
    pub bs_height_m: f64,
    pub ue_height_m: f64,
    pub bs_downtilt_deg: f64,
    pub bs_front_to_back_db: f64,
    pub nf_bs_db: f64,
    pub nf_primary_db: f64,
    pub nf_helper_db: f64,
    /// Fraction of buildings using the high-loss outdoor-to-indoor model.
    pub o2i_high_loss_fraction: f64,
    pub se_cap_bps_hz: f64,
    pub type2_beams: usize,
    pub subband_prbs: usize,
    pub sounding_period_slots: usize,
    pub pf_time_constant_slots: f64,
    pub semi_static_threshold_db: f64,
    /// SNR the primary targets on the local link when feeding a helper on the uplink.
    pub local_link_target_snr_db: f64,
    /// Fraction of primaries that are collaboration-capable.
    pub advanced_fraction: f64,

    pub loc_users: usize,
    pub loc_snr_db: f64,
    pub loc_indoor_fraction: f64,
    pub loc_band: LocBand,
    pub loc_range_sigma_m: f64,
    pub loc_pose_error_deg: f64,
    pub loc_method: SpectrumMethod,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        Self {
            isd_m: 200.0,
            num_rings: 2,
            cells_per_site: 3,
            ues_per_cell: 10,
            f_low_ghz: 2.0,
            f_high_ghz: 6.0,
            bandwidth_mhz: 10.0,
            scs_khz: 30.0,
            bs_ports: 32,
            ue_dl_config: (2, 4),
            ue_ul_config: (2, 2),
            helper_config: (2, 4),
            helper_distance_m: 1.0,
            ue_max_tx_dbm: 23.0,
            relay_max_tx_dbm: 14.0,
            bs_tx_dbm: 41.0,
            traffic: Traffic::FullBuffer,
            case: Case::Baseline,
            seed: 1,
            duration_s: 20.0,
            min_bs_distance_m: 35.0,
            bs_height_m: 25.0,
            ue_height_m: 1.5,
            bs_downtilt_deg: 12.0,
            bs_front_to_back_db: 30.0,
            nf_bs_db: 5.0,
            nf_primary_db: 7.0,
            nf_helper_db: 9.0,
            o2i_high_loss_fraction: 0.0,
            se_cap_bps_hz: 7.4,
            type2_beams: 4,
            subband_prbs: 4,
            sounding_period_slots: 5,
            pf_time_constant_slots: 100.0,
            semi_static_threshold_db: -3.0,
            local_link_target_snr_db: 30.0,
            advanced_fraction: 1.0,
            loc_users: 200,
            loc_snr_db: 10.0,
            loc_indoor_fraction: 0.5,
            loc_band: LocBand::Ssb,
            loc_range_sigma_m: 1.0,
            loc_pose_error_deg: 0.0,
            loc_method: SpectrumMethod::Bartlett,
        }
    }
}

pub const DEFAULT_FTP_FILE_BYTES: u64 = 500_000;

/// Keys understood by [`ScenarioConfig::set`], in documentation order.
pub const SCENARIO_KEYS: &[&str] = &[
    "isd_m",
    "num_rings",
    "cells_per_site",
    "ues_per_cell",
    "f_low_ghz",
    "f_high_ghz",
    "bandwidth_mhz",
    "scs_khz",
    "bs_ports",
    "ue_dl_tx",
    "ue_dl_rx",
    "ue_ul_tx",
    "ue_ul_rx",
    "helper_tx",
    "helper_rx",
    "helper_distance_m",
    "ue_max_tx_dbm",
    "relay_max_tx_dbm",
    "bs_tx_dbm",
    "traffic",
    "ftp_file_bytes",
    "ftp_lambda_per_s",
    "case",
    "seed",
    "duration_s",
    "min_bs_distance_m",
    "bs_height_m",
    "ue_height_m",
    "bs_downtilt_deg",
    "bs_front_to_back_db",
    "nf_bs_db",
    "nf_primary_db",
    "nf_helper_db",
    "o2i_high_loss_fraction",
    "se_cap_bps_hz",
    "type2_beams",
    "subband_prbs",
    "sounding_period_slots",
    "pf_time_constant_slots",
    "semi_static_threshold_db",
    "local_link_target_snr_db",
    "advanced_fraction",
    "loc_users",
    "loc_snr_db",
    "loc_indoor_fraction",
    "loc_band",
    "loc_range_sigma_m",
    "loc_pose_error_deg",
    "loc_method",
];

fn parse_num<T: FromStr>(key: &str, value: &str) -> Result<T> {
    value
        .parse::<T>()
        .map_err(|_| Error::Config(format!("`{key}`: cannot parse `{value}`")))
}

impl ScenarioConfig {
    pub fn slot_duration_s(&self) -> f64 {
        1e-3 * 15.0 / self.scs_khz
    }

    pub fn bandwidth_hz(&self) -> f64 {
        self.bandwidth_mhz * 1e6
    }

    pub fn prb_bandwidth_hz(&self) -> f64 {
        12.0 * self.scs_khz * 1e3
    }

    pub fn num_prbs(&self) -> usize {
        (self.bandwidth_hz() / self.prb_bandwidth_hz()).floor() as usize
    }

    /// PRB count of every subband; the last one may be partial.
    pub fn subband_sizes(&self) -> Vec<usize> {
        let n = self.num_prbs();
        let k = self.subband_prbs.max(1);
        (0..n.div_ceil(k)).map(|i| k.min(n - i * k)).collect()
    }

    /// Baseband centre frequency offset (Hz) of each subband.
    pub fn subband_centers_hz(&self) -> Vec<f64> {
        let prb = self.prb_bandwidth_hz();
        let occupied = self.num_prbs() as f64 * prb;
        let mut start = 0.0;
        self.subband_sizes()
            .into_iter()
            .map(|n| {
                let c = start + 0.5 * n as f64 * prb - 0.5 * occupied;
                start += n as f64 * prb;
                c
            })
            .collect()
    }

    pub fn num_sites(&self) -> usize {
        1 + 3 * self.num_rings * (self.num_rings + 1)
    }

    pub fn num_cells(&self) -> usize {
        self.num_sites() * self.cells_per_site
    }

    /// Set one key from its textual value.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let v = value.trim();
        match key {
            "isd_m" => self.isd_m = parse_num(key, v)?,
            "num_rings" => self.num_rings = parse_num(key, v)?,
            "cells_per_site" => self.cells_per_site = parse_num(key, v)?,
            "ues_per_cell" => self.ues_per_cell = parse_num(key, v)?,
            "f_low_ghz" => self.f_low_ghz = parse_num(key, v)?,
            "f_high_ghz" => self.f_high_ghz = parse_num(key, v)?,
            "bandwidth_mhz" => self.bandwidth_mhz = parse_num(key, v)?,
            "scs_khz" => self.scs_khz = parse_num(key, v)?,
            "bs_ports" => self.bs_ports = parse_num(key, v)?,
            "ue_dl_tx" => self.ue_dl_config.0 = parse_num(key, v)?,
            "ue_dl_rx" => self.ue_dl_config.1 = parse_num(key, v)?,
            "ue_ul_tx" => self.ue_ul_config.0 = parse_num(key, v)?,
            "ue_ul_rx" => self.ue_ul_config.1 = parse_num(key, v)?,
            "helper_tx" => self.helper_config.0 = parse_num(key, v)?,
            "helper_rx" => self.helper_config.1 = parse_num(key, v)?,
            "helper_distance_m" => self.helper_distance_m = parse_num(key, v)?,
            "ue_max_tx_dbm" => self.ue_max_tx_dbm = parse_num(key, v)?,
            "relay_max_tx_dbm" => self.relay_max_tx_dbm = parse_num(key, v)?,
            "bs_tx_dbm" => self.bs_tx_dbm = parse_num(key, v)?,
            "traffic" => {
                self.traffic = match v.to_ascii_lowercase().as_str() {
                    "full_buffer" | "fullbuffer" => Traffic::FullBuffer,
                    "ftp3" | "ftp" => match self.traffic {
                        Traffic::Ftp3 { .. } => self.traffic,
                        Traffic::FullBuffer => Traffic::Ftp3 {
                            file_bytes: DEFAULT_FTP_FILE_BYTES,
                            lambda_per_s: 0.5,
                        },
                    },
                    _ => {
                        return Err(Error::Config(format!(
                            "`traffic`: expected full_buffer or ftp3, got `{v}`"
                        )))
                    }
                }
            }
            "ftp_file_bytes" => {
                let fb: u64 = parse_num(key, v)?;
                self.traffic = match self.traffic {
                    Traffic::Ftp3 { lambda_per_s, .. } => Traffic::Ftp3 { file_bytes: fb, lambda_per_s },
                    Traffic::FullBuffer => Traffic::Ftp3 { file_bytes: fb, lambda_per_s: 0.5 },
                };
            }
            "ftp_lambda_per_s" => {
                let l: f64 = parse_num(key, v)?;
                self.traffic = match self.traffic {
                    Traffic::Ftp3 { file_bytes, .. } => Traffic::Ftp3 { file_bytes, lambda_per_s: l },
                    Traffic::FullBuffer => Traffic::Ftp3 {
                        file_bytes: DEFAULT_FTP_FILE_BYTES,
                        lambda_per_s: l,
                    },
                };
            }
            "case" => self.case = v.parse().map_err(|e: String| Error::Config(format!("`case`: {e}")))?,
            "seed" => self.seed = parse_num(key, v)?,
            "duration_s" => self.duration_s = parse_num(key, v)?,
            "min_bs_distance_m" => self.min_bs_distance_m = parse_num(key, v)?,
            "bs_height_m" => self.bs_height_m = parse_num(key, v)?,
            "ue_height_m" => self.ue_height_m = parse_num(key, v)?,
            "bs_downtilt_deg" => self.bs_downtilt_deg = parse_num(key, v)?,
            "bs_front_to_back_db" => self.bs_front_to_back_db = parse_num(key, v)?,
            "nf_bs_db" => self.nf_bs_db = parse_num(key, v)?,
            "nf_primary_db" => self.nf_primary_db = parse_num(key, v)?,
            "nf_helper_db" => self.nf_helper_db = parse_num(key, v)?,
            "o2i_high_loss_fraction" => self.o2i_high_loss_fraction = parse_num(key, v)?,
            "se_cap_bps_hz" => self.se_cap_bps_hz = parse_num(key, v)?,
            "type2_beams" => self.type2_beams = parse_num(key, v)?,
            "subband_prbs" => self.subband_prbs = parse_num(key, v)?,
            "sounding_period_slots" => self.sounding_period_slots = parse_num(key, v)?,
            "pf_time_constant_slots" => self.pf_time_constant_slots = parse_num(key, v)?,
            "semi_static_threshold_db" => self.semi_static_threshold_db = parse_num(key, v)?,
            "local_link_target_snr_db" => self.local_link_target_snr_db = parse_num(key, v)?,
            "advanced_fraction" => self.advanced_fraction = parse_num(key, v)?,
            "loc_users" => self.loc_users = parse_num(key, v)?,
            "loc_snr_db" => self.loc_snr_db = parse_num(key, v)?,
            "loc_indoor_fraction" => self.loc_indoor_fraction = parse_num(key, v)?,
            "loc_band" => {
                self.loc_band = match v.to_ascii_lowercase().as_str() {
                    "ssb" => LocBand::Ssb,
                    "prs" => LocBand::Prs,
                    _ => return Err(Error::Config(format!("`loc_band`: expected ssb or prs, got `{v}`"))),
                }
            }
            "loc_range_sigma_m" => self.loc_range_sigma_m = parse_num(key, v)?,
            "loc_pose_error_deg" => self.loc_pose_error_deg = parse_num(key, v)?,
            "loc_method" => {
                self.loc_method = match v.to_ascii_lowercase().as_str() {
                    "bartlett" => SpectrumMethod::Bartlett,
                    "music" => SpectrumMethod::Music,
                    _ => {
                        return Err(Error::Config(format!(
                            "`loc_method`: expected bartlett or music, got `{v}`"
                        )))
                    }
                }
            }
            _ => return Err(Error::Config(format!("unknown key `{key}`"))),
        }
        Ok(())
    }

    /// Check every invariant; the error names the offending key.
    pub fn validate(&self) -> Result<()> {
        fn bad(key: &str, why: &str) -> Error {
            Error::Config(format!("`{key}`: {why}"))
        }
        let finite_pos = |key: &str, v: f64| {
            if v.is_finite() && v > 0.0 {
                Ok(())
            } else {
                Err(bad(key, "must be a finite positive number"))
            }
        };
        finite_pos("isd_m", self.isd_m)?;
        finite_pos("f_low_ghz", self.f_low_ghz)?;
        finite_pos("f_high_ghz", self.f_high_ghz)?;
        if self.f_low_ghz >= self.f_high_ghz {
            return Err(bad("f_high_ghz", "must exceed f_low_ghz"));
        }
        finite_pos("bandwidth_mhz", self.bandwidth_mhz)?;
        finite_pos("scs_khz", self.scs_khz)?;
        if self.num_prbs() < 1 {
            return Err(bad("bandwidth_mhz", "smaller than one PRB"));
        }
        for (key, v) in [
            ("cells_per_site", self.cells_per_site),
            ("ues_per_cell", self.ues_per_cell),
            ("bs_ports", self.bs_ports),
            ("ue_dl_tx", self.ue_dl_config.0),
            ("ue_dl_rx", self.ue_dl_config.1),
            ("ue_ul_tx", self.ue_ul_config.0),
            ("ue_ul_rx", self.ue_ul_config.1),
            ("helper_tx", self.helper_config.0),
            ("helper_rx", self.helper_config.1),
            ("type2_beams", self.type2_beams),
            ("subband_prbs", self.subband_prbs),
            ("sounding_period_slots", self.sounding_period_slots),
            ("loc_users", self.loc_users),
        ] {
            if v < 1 {
                return Err(bad(key, "must be at least 1"));
            }
        }
        if self.cells_per_site != 3 {
            return Err(bad("cells_per_site", "only 3-sector sites are supported"));
        }
        finite_pos("helper_distance_m", self.helper_distance_m)?;
        finite_pos("duration_s", self.duration_s)?;
        finite_pos("pf_time_constant_slots", self.pf_time_constant_slots)?;
        finite_pos("se_cap_bps_hz", self.se_cap_bps_hz)?;
        finite_pos("bs_height_m", self.bs_height_m)?;
        finite_pos("ue_height_m", self.ue_height_m)?;
        if !(self.min_bs_distance_m >= 0.0) || self.min_bs_distance_m >= self.isd_m / 3f64.sqrt() {
            return Err(bad("min_bs_distance_m", "must be within [0, cell radius)"));
        }
        for (key, v) in [
            ("ue_max_tx_dbm", self.ue_max_tx_dbm),
            ("relay_max_tx_dbm", self.relay_max_tx_dbm),
            ("bs_tx_dbm", self.bs_tx_dbm),
            ("bs_downtilt_deg", self.bs_downtilt_deg),
            ("bs_front_to_back_db", self.bs_front_to_back_db),
            ("nf_bs_db", self.nf_bs_db),
            ("nf_primary_db", self.nf_primary_db),
            ("nf_helper_db", self.nf_helper_db),
            ("semi_static_threshold_db", self.semi_static_threshold_db),
            ("local_link_target_snr_db", self.local_link_target_snr_db),
            ("loc_snr_db", self.loc_snr_db),
        ] {
            if !v.is_finite() {
                return Err(bad(key, "must be finite"));
            }
        }
        for (key, v) in [
            ("o2i_high_loss_fraction", self.o2i_high_loss_fraction),
            ("advanced_fraction", self.advanced_fraction),
            ("loc_indoor_fraction", self.loc_indoor_fraction),
        ] {
            if !(0.0..=1.0).contains(&v) {
                return Err(bad(key, "must lie in [0, 1]"));
            }
        }
        if !(self.loc_range_sigma_m >= 0.0) {
            return Err(bad("loc_range_sigma_m", "must be non-negative"));
        }
        if !(self.loc_pose_error_deg >= 0.0) {
            return Err(bad("loc_pose_error_deg", "must be non-negative"));
        }
        if let Traffic::Ftp3 { file_bytes, lambda_per_s } = self.traffic {
            if file_bytes == 0 {
                return Err(bad("ftp_file_bytes", "must be positive"));
            }
            if !(lambda_per_s.is_finite() && lambda_per_s > 0.0) {
                return Err(bad("ftp_lambda_per_s", "must be a finite positive rate"));
            }
        }
        Ok(())
    }
}

/// One `key = value` entry of a configuration file.
#[derive(Debug, Clone, PartialEq)]
pub struct KvEntry {
    pub line: usize,
    pub key: String,
    pub value: String,
}

/// Split a configuration file into entries. `#` starts a comment.
pub fn parse_kv(text: &str) -> Result<Vec<KvEntry>> {
    let mut out = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = i + 1;
        let content = raw.split('#').next().unwrap_or("").trim();
        if content.is_empty() {
            continue;
        }
        let (k, v) = content.split_once('=').ok_or_else(|| Error::Parse {
            line,
            msg: format!("expected `key = value`, got `{content}`"),
        })?;
        let key = k.trim();
        if key.is_empty() || !key.chars().all(|c| c.is_ascii_alphanumeric() || c == '_') {
            return Err(Error::Parse { line, msg: format!("invalid key `{key}`") });
        }
        if out.iter().any(|e: &KvEntry| e.key == key) {
            return Err(Error::Parse { line, msg: format!("duplicate key `{key}`") });
        }
        out.push(KvEntry {
            line,
            key: key.to_string(),
            value: v.trim().trim_matches('"').to_string(),
        });
    }
    Ok(out)
}

impl ScenarioConfig {
    /// Build a validated configuration from file text; every unset key keeps its default.
    pub fn from_kv_text(text: &str) -> Result<Self> {
        let mut cfg = Self::default();
        for e in parse_kv(text)? {
            cfg.set(&e.key, &e.value)
                .map_err(|err| Error::Parse { line: e.line, msg: err.to_string() })?;
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_are_valid() {
        let cfg = ScenarioConfig::default();
        cfg.validate().unwrap();
        assert_eq!(cfg.num_prbs(), 27);
        assert_eq!(cfg.subband_sizes(), vec![4, 4, 4, 4, 4, 4, 3]);
        assert!((cfg.slot_duration_s() - 0.5e-3).abs() < 1e-15);
        assert_eq!(cfg.num_sites(), 19);
    }

    #[test]
    fn subband_centres_are_symmetric() {
        let cfg = ScenarioConfig { subband_prbs: 3, ..Default::default() };
        let c = cfg.subband_centers_hz();
        assert_eq!(c.len(), 9);
        assert!((c[0] + c[8]).abs() < 1e-6);
    }

    #[test]
    fn kv_parsing_and_errors() {
        let cfg = ScenarioConfig::from_kv_text("# comment\nisd_m = 500\ntraffic = ftp3 # inline\n").unwrap();
        assert_eq!(cfg.isd_m, 500.0);
        assert!(matches!(cfg.traffic, Traffic::Ftp3 { file_bytes: 500_000, .. }));

        let err = ScenarioConfig::from_kv_text("isd_m = -5").unwrap_err().to_string();
        assert!(err.contains("isd_m"), "{err}");
        let err = ScenarioConfig::from_kv_text("\nfooo = 1").unwrap_err().to_string();
        assert!(err.contains("fooo") && err.contains("line 2"), "{err}");
        let err = ScenarioConfig::from_kv_text("isd_m 200").unwrap_err().to_string();
        assert!(err.contains("line 1"), "{err}");
        let err = ScenarioConfig::from_kv_text("f_low_ghz = 7").unwrap_err().to_string();
        assert!(err.contains("f_high_ghz"), "{err}");
    }

    #[test]
    fn every_documented_key_is_settable() {
        for key in SCENARIO_KEYS {
            let mut cfg = ScenarioConfig::default();
            let value = match *key {
                "traffic" => "ftp3",
                "case" => "diversity",
                "loc_band" => "prs",
                "loc_method" => "music",
                _ => "1",
            };
            cfg.set(key, value).unwrap_or_else(|e| panic!("{key}: {e}"));
        }
    }

    #[test]
    fn case_names_round_trip() {
        for c in Case::ALL {
            assert_eq!(c.name().parse::<Case>().unwrap(), c);
        }
        assert_eq!("Rank".parse::<Case>().unwrap(), Case::RankAug);
    }
}
