//! Monte-Carlo drops: traffic, proportional-fair slot loop and throughput
//! statistics for the downlink diversity and uplink rank programs.

mod dl;
mod engine;
mod env;
mod scheduler;
mod stats;
mod traffic;
mod ul;

use rand::Rng;
use serde::Serialize;

pub use dl::{DlLinks, DlModel, PATH_DIRECT, PATH_RELAYED};
pub use engine::{run_slots, Activity, Cqi, EngineOutput, Load, SlotModel, SlotParams};
pub use env::{build_drop_env, with_antennas, BandState, DeviceState, DropEnv};
pub use scheduler::{jain_index, pf_schedule, Candidate, SchedulerState, AVG_FLOOR_BPS};
pub use stats::{record_stats, upt_stats, DropStats, ThroughputRecord, UptStats};
pub use traffic::{ftp3_arrivals, TrafficEvent};
pub use ul::{UlLinks, UlModel};

use crate::error::{Error, Result};
use crate::rng::{self, domain};
use crate::scenario::{Case, ScenarioConfig, Traffic};

/// Arm names of the downlink program.
pub const DL_ARMS: [&str; 2] = ["baseline", "diversity"];
/// Arm names of the uplink program.
pub const UL_ARMS: [&str; 2] = ["legacy2ca", "rank_aug"];

#[derive(Debug, Clone)]
enum ProgramLinks {
    Dl(DlLinks),
    Ul(UlLinks),
}

/// A drop with its channels and per-drop link state, reusable across loads.
#[derive(Debug, Clone)]
pub struct DropProgram {
    pub env: DropEnv,
    links: ProgramLinks,
}

impl DropProgram {
    pub fn build(cfg: &ScenarioConfig, case: Case, drop_index: u64) -> Result<Self> {
        if case.is_localization() {
            return Err(Error::Config(format!("case `{case}` is not a throughput experiment")));
        }
        let env = build_drop_env(cfg, drop_index)?;
        let links = match case {
            Case::RankAug => ProgramLinks::Ul(UlLinks::build(&env)?),
            _ => ProgramLinks::Dl(DlLinks::build(&env)?),
        };
        Ok(Self { env, links })
    }

    pub fn arm_names(&self) -> [&'static str; 2] {
        match self.links {
            ProgramLinks::Dl(_) => DL_ARMS,
            ProgramLinks::Ul(_) => UL_ARMS,
        }
    }

    pub fn ul_links(&self) -> Option<&UlLinks> {
        match &self.links {
            ProgramLinks::Ul(l) => Some(l),
            ProgramLinks::Dl(_) => None,
        }
    }

    /// Run arm 0 (reference) or arm 1 (collaborative) under `load`.
    pub fn run_arm(&self, arm: usize, load: Load<'_>, params: &SlotParams) -> Result<EngineOutput> {
        match &self.links {
            ProgramLinks::Dl(l) => run_slots(&DlModel { env: &self.env, links: l, diversity: arm == 1 }, load, params),
            ProgramLinks::Ul(l) => run_slots(&UlModel { env: &self.env, links: l, rank_aug: arm == 1 }, load, params),
        }
    }

    /// FTP events of this drop at rate `lambda`. Inter-arrival times scale as
    /// `1/lambda` on fixed random numbers, so loads are comparable across rates.
    pub fn traffic(&self, lambda_per_s: f64, file_bytes: u64) -> Result<Vec<TrafficEvent>> {
        let seed = rng::stream(self.env.cfg.seed, &[domain::TRAFFIC, self.env.drop_index]).random::<u64>();
        ftp3_arrivals(lambda_per_s, self.env.cfg.duration_s, self.env.n_groups(), file_bytes, seed)
    }
}

/// Records of one arm, tagged by arm name.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ArmRecord {
    pub arm: &'static str,
    #[serde(flatten)]
    pub record: ThroughputRecord,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DropResult {
    pub case: Case,
    pub seed: u64,
    pub stats: Vec<DropStats>,
    pub records: Vec<ArmRecord>,
}

fn arms_for(case: Case) -> &'static [usize] {
    match case {
        Case::Baseline => &[0],
        _ => &[0, 1],
    }
}

fn drop_stats(arm: &str, out: &EngineOutput) -> DropStats {
    let (p5, mean) = record_stats(&out.records).map_or((0.0, 0.0), |s| (s.p5, s.mean));
    DropStats { arm: arm.to_string(), p5_bps: p5, mean_bps: mean, ru: out.ru, n_records: out.records.len() }
}

/// Run the arms of `case` on drop `seed` with the traffic of `cfg`.
/// `Baseline` runs the downlink reference arm only; `Diversity` runs both
/// downlink arms and `RankAug` both uplink arms.
pub fn run_drop(cfg: &ScenarioConfig, case: Case, seed: u64) -> Result<DropResult> {
    let prog = DropProgram::build(cfg, case, seed)?;
    run_program(&prog, cfg, case, seed)
}

pub fn run_program(prog: &DropProgram, cfg: &ScenarioConfig, case: Case, seed: u64) -> Result<DropResult> {
    let events = match cfg.traffic {
        Traffic::FullBuffer => None,
        Traffic::Ftp3 { file_bytes, lambda_per_s } => Some(prog.traffic(lambda_per_s, file_bytes)?),
    };
    let load = events.as_deref().map_or(Load::FullBuffer, Load::Files);
    let params = SlotParams::from_config(cfg, true);
    let names = prog.arm_names();
    let mut stats = Vec::new();
    let mut records = Vec::new();
    for &arm in arms_for(case) {
        let out = prog.run_arm(arm, load, &params)?;
        stats.push(drop_stats(names[arm], &out));
        records.extend(out.records.into_iter().map(|record| ArmRecord { arm: names[arm], record }));
    }
    Ok(DropResult { case, seed, stats, records })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Calibration {
    pub lambda_per_s: f64,
    pub ru: f64,
    /// Every probe as `(lambda, mean RU)`, in evaluation order.
    pub probes: Vec<(f64, f64)>,
}

pub const CALIBRATION_MIN_SEEDS: usize = 3;
const MAX_BRACKET_STEPS: usize = 16;
const MAX_REFINE_STEPS: usize = 40;

/// Per-UE FTP arrival rate whose reference-arm resource utilization, averaged
/// over `seeds` (at least three), is within `tolerance` of `target_ru`.
///
/// Drops are built once; probes reuse the same random numbers. The bracket
/// starts from the empty load and doubles the rate; inside it a
/// safeguarded secant step is used.
pub fn calibrate_load(cfg: &ScenarioConfig, case: Case, target_ru: f64, tolerance: f64, seeds: &[u64]) -> Result<Calibration> {
    if !(target_ru > 0.0 && target_ru < 1.0) {
        return Err(Error::Domain(format!("target RU {target_ru} must lie in (0, 1)")));
    }
    if seeds.len() < CALIBRATION_MIN_SEEDS {
        return Err(Error::Calibration(format!("need at least {CALIBRATION_MIN_SEEDS} seeds, got {}", seeds.len())));
    }
    let file_bytes = match cfg.traffic {
        Traffic::Ftp3 { file_bytes, .. } => file_bytes,
        Traffic::FullBuffer => crate::scenario::DEFAULT_FTP_FILE_BYTES,
    };
    let progs: Vec<DropProgram> = seeds.iter().map(|&s| DropProgram::build(cfg, case, s)).collect::<Result<_>>()?;
    let params = SlotParams::from_config(cfg, false);
    let mut probes = Vec::new();
    let mut probe = |lambda: f64| -> Result<f64> {
        let mut ru = 0.0;
        for p in &progs {
            let ev = p.traffic(lambda, file_bytes)?;
            ru += p.run_arm(0, Load::Files(&ev), &params)?.ru;
        }
        ru /= progs.len() as f64;
        probes.push((lambda, ru));
        Ok(ru)
    };

    let mut lambda = match cfg.traffic {
        Traffic::Ftp3 { lambda_per_s, .. } => lambda_per_s,
        Traffic::FullBuffer => 1.0,
    };
    // no load means no utilization, so the bracket starts at zero
    let mut lo = (0.0, 0.0);
    let mut hi = None;
    let mut found = None;
    for _ in 0..MAX_BRACKET_STEPS {
        let ru = probe(lambda)?;
        if (ru - target_ru).abs() <= tolerance {
            found = Some((lambda, ru));
            break;
        }
        if ru > target_ru {
            hi = Some((lambda, ru));
            break;
        }
        lo = (lambda, ru);
        lambda *= 2.0;
    }
    if found.is_none() && hi.is_none() {
        return Err(Error::Calibration(format!("RU target {target_ru} not bracketed after {MAX_BRACKET_STEPS} probes")));
    }
    let mut hi = hi.unwrap_or(lo);
    let mut steps = 0;
    while found.is_none() {
        if steps == MAX_REFINE_STEPS {
            return Err(Error::Calibration(format!("RU did not reach {target_ru} ± {tolerance} within {MAX_REFINE_STEPS} refinements")));
        }
        steps += 1;
        let width = hi.0 - lo.0;
        let secant = lo.0 + (target_ru - lo.1) * width / (hi.1 - lo.1).max(f64::MIN_POSITIVE);
        let l = secant.clamp(lo.0 + 0.1 * width, hi.0 - 0.1 * width);
        let ru = probe(l)?;
        if (ru - target_ru).abs() <= tolerance {
            found = Some((l, ru));
        } else if ru < target_ru {
            lo = (l, ru);
        } else {
            hi = (l, ru);
        }
    }
    let (lambda_per_s, ru) = found.expect("loop exits with a result");
    Ok(Calibration { lambda_per_s, ru, probes })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny() -> ScenarioConfig {
        ScenarioConfig { num_rings: 1, ues_per_cell: 3, duration_s: 0.25, ..ScenarioConfig::default() }
    }

    #[test]
    fn full_buffer_dl_fills_resources_and_diversity_dominates() {
        let cfg = tiny();
        let res = run_drop(&cfg, Case::Diversity, 2).unwrap();
        assert_eq!(res.stats.len(), 2);
        for s in &res.stats {
            assert_eq!(s.ru, 1.0);
            assert!(s.p5_bps <= s.mean_bps);
        }
        let by_arm = |a: &str| -> Vec<f64> { res.records.iter().filter(|r| r.arm == a).map(|r| r.record.upt_bps).collect() };
        let (base, div) = (by_arm("baseline"), by_arm("diversity"));
        assert_eq!(base.len(), div.len());
        assert!(base.iter().zip(&div).all(|(b, d)| d >= b), "per-UE dominance violated");
        assert!(div.iter().sum::<f64>() > base.iter().sum::<f64>());
    }

    #[test]
    fn deterministic_records() {
        let mut cfg = tiny();
        cfg.traffic = Traffic::Ftp3 { file_bytes: 500_000, lambda_per_s: 2.0 };
        let a = run_drop(&cfg, Case::RankAug, 4).unwrap();
        let b = run_drop(&cfg, Case::RankAug, 4).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.stats[0].arm, "legacy2ca");
    }
}
