//! Experiment runner: configuration files, case/seed matrices and reports.

use std::collections::BTreeMap;
use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use comimo_core::locaug::{median, run_loc_experiment, LocRow};
use comimo_core::scenario::{parse_kv, Case, ScenarioConfig, Traffic};
use comimo_core::simloop::{calibrate_load, run_program, upt_stats, Calibration, DropProgram};

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error(transparent)]
    Core(#[from] comimo_core::Error),

    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },

    #[error("{path}: {source}")]
    Csv { path: PathBuf, source: csv::Error },

    #[error("json: {0}")]
    Json(#[from] serde_json::Error),

    #[error("aggregation error: {0}")]
    Aggregation(String),

    #[error("plan error: {0}")]
    Plan(String),
}

pub type Result<T> = std::result::Result<T, CliError>;

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> CliError + '_ {
    move |source| CliError::Io { path: path.to_path_buf(), source }
}

fn csv_err(path: &Path) -> impl FnOnce(csv::Error) -> CliError + '_ {
    move |source| CliError::Csv { path: path.to_path_buf(), source }
}

/// Keys of a configuration file that describe the run rather than the scenario.
pub const PLAN_KEYS: &[&str] = &["cases", "seeds", "out_dir", "threads", "target_ru", "ru_tolerance"];

pub const DEFAULT_RU_TOLERANCE: f64 = 0.02;

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentPlan {
    pub scenario: ScenarioConfig,
    pub cases: Vec<Case>,
    pub seeds: Vec<u64>,
    pub out_dir: PathBuf,
    pub threads: Option<usize>,
    /// When set, the FTP arrival rate is calibrated to this resource utilization first.
    pub target_ru: Option<f64>,
    pub ru_tolerance: f64,
}

impl Default for ExperimentPlan {
    fn default() -> Self {
        let scenario = ScenarioConfig::default();
        Self {
            cases: vec![scenario.case],
            scenario,
            seeds: vec![0],
            out_dir: PathBuf::from("out"),
            threads: None,
            target_ru: None,
            ru_tolerance: DEFAULT_RU_TOLERANCE,
        }
    }
}

pub fn parse_cases(v: &str) -> std::result::Result<Vec<Case>, String> {
    let cases = v.split(',').filter(|s| !s.trim().is_empty()).map(str::parse).collect::<std::result::Result<Vec<Case>, _>>()?;
    if cases.is_empty() {
        return Err("no cases given".into());
    }
    Ok(cases)
}

/// `N` means seeds `0..N`; a comma-separated list is taken literally.
pub fn parse_seeds(v: &str) -> std::result::Result<Vec<u64>, String> {
    let v = v.trim();
    let seeds: Vec<u64> = if v.contains(',') {
        v.split(',').filter(|s| !s.trim().is_empty()).map(|s| s.trim().parse().map_err(|_| format!("bad seed `{s}`"))).collect::<std::result::Result<_, _>>()?
    } else {
        let n: u64 = v.parse().map_err(|_| format!("bad seed count `{v}`"))?;
        (0..n).collect()
    };
    if seeds.is_empty() {
        return Err("no seeds given".into());
    }
    Ok(seeds)
}

impl ExperimentPlan {
    pub fn from_text(text: &str) -> Result<Self> {
        let mut plan = Self::default();
        let mut cases = None;
        for e in parse_kv(text)? {
            let line = e.line;
            let parse_err = |msg: String| comimo_core::Error::Parse { line, msg };
            match e.key.as_str() {
                "cases" => cases = Some(parse_cases(&e.value).map_err(|m| parse_err(format!("`cases`: {m}")))?),
                "seeds" => plan.seeds = parse_seeds(&e.value).map_err(|m| parse_err(format!("`seeds`: {m}")))?,
                "out_dir" => plan.out_dir = PathBuf::from(&e.value),
                "threads" => {
                    let n: usize = e.value.parse().map_err(|_| parse_err(format!("`threads`: expected a count, got `{}`", e.value)))?;
                    plan.threads = (n > 0).then_some(n);
                }
                "target_ru" => plan.target_ru = Some(e.value.parse().map_err(|_| parse_err(format!("`target_ru`: expected a number, got `{}`", e.value)))?),
                "ru_tolerance" => plan.ru_tolerance = e.value.parse().map_err(|_| parse_err(format!("`ru_tolerance`: expected a number, got `{}`", e.value)))?,
                key => plan.scenario.set(key, &e.value).map_err(|err| parse_err(err.to_string()))?,
            }
        }
        plan.cases = cases.unwrap_or_else(|| vec![plan.scenario.case]);
        plan.validate()?;
        Ok(plan)
    }

    pub fn validate(&self) -> Result<()> {
        self.scenario.validate()?;
        if self.cases.is_empty() || self.seeds.is_empty() {
            return Err(CliError::Plan("a plan needs at least one case and one seed".into()));
        }
        if let Some(t) = self.target_ru {
            if !(t > 0.0 && t < 1.0) {
                return Err(CliError::Plan(format!("`target_ru` = {t} must lie in (0, 1)")));
            }
            if matches!(self.scenario.traffic, Traffic::FullBuffer) && self.cases.iter().any(|c| !c.is_localization()) {
                return Err(CliError::Plan("`target_ru` needs `traffic = ftp3`".into()));
            }
        }
        if self.ru_tolerance.is_nan() || self.ru_tolerance <= 0.0 {
            return Err(CliError::Plan("`ru_tolerance` must be positive".into()));
        }
        Ok(())
    }
}

pub fn parse_config(path: &Path) -> Result<ExperimentPlan> {
    let text = fs::read_to_string(path).map_err(io_err(path))?;
    ExperimentPlan::from_text(&text)
}

/// One line of `records.csv`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RecordRow {
    pub case: String,
    pub seed: u64,
    pub ue: usize,
    pub arm: String,
    pub bytes: u64,
    pub arrival: f64,
    pub completion: f64,
    pub upt_bps: f64,
}

const RECORD_HEADER: [&str; 8] = ["case", "seed", "ue", "arm", "bytes", "arrival", "completion", "upt_bps"];
const LOC_HEADER: [&str; 10] = ["seed", "user", "case", "true_az", "true_el", "est_az", "est_el", "aoa_err_deg", "pos_err_m", "indoor"];

/// Reference arms; every other arm is compared against the reference of its case.
pub const BASELINE_ARMS: [&str; 2] = ["baseline", "legacy2ca"];

pub fn gain_pct(baseline: f64, treatment: f64) -> f64 {
    100.0 * (treatment - baseline) / baseline
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ArmSummary {
    pub arm: String,
    pub n_records: usize,
    pub p5_bps: f64,
    pub mean_bps: f64,
    /// Mean resource utilization over seeds (absent when summarizing CSVs).
    pub ru: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GainRow {
    pub case: String,
    pub baseline_arm: String,
    pub treatment_arm: String,
    pub gain_cell_edge_pct: f64,
    pub gain_mean_pct: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GainTable {
    pub arms: BTreeMap<String, Vec<ArmSummary>>,
    pub gains: Vec<GainRow>,
}

impl fmt::Display for GainTable {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "{:<10} {:<10} {:>8} {:>14} {:>14}", "case", "arm", "files", "p5 [Mbps]", "mean [Mbps]")?;
        for (case, arms) in &self.arms {
            for a in arms {
                writeln!(f, "{case:<10} {:<10} {:>8} {:>14.3} {:>14.3}", a.arm, a.n_records, a.p5_bps / 1e6, a.mean_bps / 1e6)?;
            }
        }
        for g in &self.gains {
            writeln!(
                f,
                "{}: {} vs {}: {:+.1}% cell-edge, {:+.1}% average",
                g.case, g.treatment_arm, g.baseline_arm, g.gain_cell_edge_pct, g.gain_mean_pct
            )?;
        }
        Ok(())
    }
}

/// Pool records per (case, arm) and compare each treatment arm with the
/// reference arm of the same case.
pub fn gain_table(rows: &[RecordRow]) -> Result<GainTable> {
    let mut pooled: BTreeMap<(String, String), Vec<f64>> = BTreeMap::new();
    for r in rows {
        pooled.entry((r.case.clone(), r.arm.clone())).or_default().push(r.upt_bps);
    }
    let mut arms: BTreeMap<String, Vec<ArmSummary>> = BTreeMap::new();
    for ((case, arm), v) in &pooled {
        let s = upt_stats(v)?;
        arms.entry(case.clone()).or_default().push(ArmSummary { arm: arm.clone(), n_records: v.len(), p5_bps: s.p5, mean_bps: s.mean, ru: None });
    }
    let mut gains = Vec::new();
    for (case, list) in &arms {
        let Some(base) = list.iter().find(|a| BASELINE_ARMS.contains(&a.arm.as_str())) else { continue };
        for t in list.iter().filter(|a| !BASELINE_ARMS.contains(&a.arm.as_str())) {
            gains.push(GainRow {
                case: case.clone(),
                baseline_arm: base.arm.clone(),
                treatment_arm: t.arm.clone(),
                gain_cell_edge_pct: gain_pct(base.p5_bps, t.p5_bps),
                gain_mean_pct: gain_pct(base.mean_bps, t.mean_bps),
            });
        }
    }
    Ok(GainTable { arms, gains })
}

pub fn read_records(path: &Path) -> Result<Vec<RecordRow>> {
    let mut rd = csv::Reader::from_path(path).map_err(csv_err(path))?;
    rd.deserialize().map(|r| r.map_err(csv_err(path))).collect()
}

/// Gain table over one or more `records.csv` files.
pub fn summarize(paths: &[PathBuf]) -> Result<GainTable> {
    let mut rows = Vec::new();
    for p in paths {
        rows.extend(read_records(p)?);
    }
    if !rows.iter().any(|r| BASELINE_ARMS.contains(&r.arm.as_str())) {
        return Err(CliError::Aggregation("no baseline arm in the records".into()));
    }
    let table = gain_table(&rows)?;
    if table.gains.is_empty() {
        return Err(CliError::Aggregation("no treatment arm to compare with a baseline".into()));
    }
    Ok(table)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CaseSummary {
    pub case: Case,
    pub seeds: Vec<u64>,
    pub lambda_per_s: Option<f64>,
    pub calibration: Option<Calibration>,
    pub arms: Vec<ArmSummary>,
    pub gain_cell_edge_pct: Option<f64>,
    pub gain_mean_pct: Option<f64>,
    /// Uplink only: share of UEs that collaborate in the treatment arm.
    pub collaborating_fraction: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LocSummary {
    pub case: Case,
    pub seeds: Vec<u64>,
    pub n_users: usize,
    pub median_aoa_err_deg: f64,
    pub mean_aoa_err_deg: f64,
    pub median_pos_err_m: f64,
    pub mean_pos_err_m: f64,
    /// Relative reduction of the median AoA error against `loc1`, when run.
    pub aoa_reduction_vs_loc1_pct: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Summary {
    pub scenario: ScenarioConfig,
    pub throughput: Vec<CaseSummary>,
    pub localization: Vec<LocSummary>,
}

/// Everything an experiment produced, before it is written to disk.
#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentOutput {
    pub summary: Summary,
    pub records: Vec<RecordRow>,
    pub loc_rows: Vec<LocRow>,
}

struct Cell {
    rows: Vec<RecordRow>,
    ru: Vec<(String, f64)>,
    collaborating: Option<(usize, usize)>,
}

fn run_cell(cfg: &ScenarioConfig, case: Case, seed: u64) -> Result<Cell> {
    let prog = DropProgram::build(cfg, case, seed)?;
    let res = run_program(&prog, cfg, case, seed)?;
    let rows = res
        .records
        .iter()
        .map(|r| RecordRow {
            case: case.name().to_string(),
            seed,
            ue: r.record.ue,
            arm: r.arm.to_string(),
            bytes: r.record.file_bytes,
            arrival: r.record.arrival,
            completion: r.record.completion,
            upt_bps: r.record.upt_bps,
        })
        .collect();
    let collaborating = prog.ul_links().map(|l| (l.collaborating.iter().filter(|&&c| c).count(), l.collaborating.len()));
    Ok(Cell { rows, ru: res.stats.iter().map(|s| (s.arm.clone(), s.ru)).collect(), collaborating })
}

fn calibration_key(case: Case) -> u8 {
    // downlink cases share the reference arm
    u8::from(case == Case::RankAug)
}

/// Execute every (case, seed) cell of the plan. Nothing is written.
pub fn execute(plan: &ExperimentPlan) -> Result<ExperimentOutput> {
    plan.validate()?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(plan.threads.unwrap_or(0))
        .build()
        .map_err(|e| CliError::Plan(format!("thread pool: {e}")))?;
    pool.install(|| execute_in_pool(plan))
}

fn execute_in_pool(plan: &ExperimentPlan) -> Result<ExperimentOutput> {
    let mut cases: Vec<Case> = Vec::new();
    for &c in &plan.cases {
        if !cases.contains(&c) {
            cases.push(c);
        }
    }
    let tput: Vec<Case> = cases.iter().copied().filter(|c| !c.is_localization()).collect();
    let loc: Vec<Case> = cases.iter().copied().filter(|c| c.is_localization()).collect();

    let mut calibrations: BTreeMap<u8, Calibration> = BTreeMap::new();
    if let (Some(target), Traffic::Ftp3 { .. }) = (plan.target_ru, plan.scenario.traffic) {
        for &case in &tput {
            if let std::collections::btree_map::Entry::Vacant(e) = calibrations.entry(calibration_key(case)) {
                e.insert(calibrate_load(&plan.scenario, case, target, plan.ru_tolerance, &plan.seeds)?);
            }
        }
    }
    let cfg_for = |case: Case| {
        let mut cfg = plan.scenario.clone();
        if let (Some(cal), Traffic::Ftp3 { file_bytes, .. }) = (calibrations.get(&calibration_key(case)), cfg.traffic) {
            cfg.traffic = Traffic::Ftp3 { file_bytes, lambda_per_s: cal.lambda_per_s };
        }
        cfg
    };

    let jobs: Vec<(Case, u64)> = tput.iter().flat_map(|&c| plan.seeds.iter().map(move |&s| (c, s))).collect();
    let cells = jobs.par_iter().map(|&(c, s)| run_cell(&cfg_for(c), c, s)).collect::<Result<Vec<_>>>()?;

    let mut records = Vec::new();
    let mut throughput = Vec::new();
    for &case in &tput {
        let mine: Vec<&Cell> = jobs.iter().zip(&cells).filter(|((c, _), _)| *c == case).map(|(_, cell)| cell).collect();
        let rows: Vec<RecordRow> = mine.iter().flat_map(|c| c.rows.iter().cloned()).collect();
        let table = gain_table(&rows)?;
        let mut arms = table.arms.get(case.name()).cloned().unwrap_or_default();
        for a in &mut arms {
            let ru: Vec<f64> = mine.iter().flat_map(|c| c.ru.iter().filter(|(n, _)| *n == a.arm).map(|(_, r)| *r)).collect();
            a.ru = (!ru.is_empty()).then(|| ru.iter().sum::<f64>() / ru.len() as f64);
        }
        let gain = table.gains.first();
        let collab = mine.iter().filter_map(|c| c.collaborating).fold(None, |acc: Option<(usize, usize)>, (a, b)| {
            let (x, y) = acc.unwrap_or((0, 0));
            Some((x + a, y + b))
        });
        let cfg = cfg_for(case);
        throughput.push(CaseSummary {
            case,
            seeds: plan.seeds.clone(),
            lambda_per_s: match cfg.traffic {
                Traffic::Ftp3 { lambda_per_s, .. } => Some(lambda_per_s),
                Traffic::FullBuffer => None,
            },
            calibration: calibrations.get(&calibration_key(case)).cloned(),
            arms,
            gain_cell_edge_pct: gain.map(|g| g.gain_cell_edge_pct),
            gain_mean_pct: gain.map(|g| g.gain_mean_pct),
            collaborating_fraction: collab.map(|(a, b)| a as f64 / b.max(1) as f64),
        });
        records.extend(rows);
    }

    let mut loc_rows = Vec::new();
    let mut localization = Vec::new();
    for &case in &loc {
        let mut rows = Vec::new();
        for &seed in &plan.seeds {
            rows.extend(run_loc_experiment(&plan.scenario, case, plan.scenario.loc_users, seed)?.rows);
        }
        let aoa: Vec<f64> = rows.iter().map(|r| r.aoa_err_deg).collect();
        let pos: Vec<f64> = rows.iter().map(|r| r.pos_err_m).collect();
        let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
        localization.push(LocSummary {
            case,
            seeds: plan.seeds.clone(),
            n_users: rows.len(),
            median_aoa_err_deg: median(&aoa),
            mean_aoa_err_deg: mean(&aoa),
            median_pos_err_m: median(&pos),
            mean_pos_err_m: mean(&pos),
            aoa_reduction_vs_loc1_pct: None,
        });
        loc_rows.extend(rows);
    }
    if let Some(base) = localization.iter().find(|l| l.case == Case::Loc1).map(|l| l.median_aoa_err_deg) {
        for l in &mut localization {
            l.aoa_reduction_vs_loc1_pct = Some(-gain_pct(base, l.median_aoa_err_deg));
        }
    }

    Ok(ExperimentOutput { summary: Summary { scenario: plan.scenario.clone(), throughput, localization }, records, loc_rows })
}

fn write_csv<T: Serialize>(path: &Path, header: &[&str], rows: &[T]) -> Result<()> {
    let mut w = csv::WriterBuilder::new().has_headers(false).from_path(path).map_err(csv_err(path))?;
    w.write_record(header).map_err(csv_err(path))?;
    for r in rows {
        w.serialize(r).map_err(csv_err(path))?;
    }
    w.flush().map_err(io_err(path))
}

pub fn write_outputs(out_dir: &Path, output: &ExperimentOutput) -> Result<()> {
    fs::create_dir_all(out_dir).map_err(io_err(out_dir))?;
    write_csv(&out_dir.join("records.csv"), &RECORD_HEADER, &output.records)?;
    write_csv(&out_dir.join("loc_results.csv"), &LOC_HEADER, &output.loc_rows)?;
    let path = out_dir.join("summary.json");
    let mut json = serde_json::to_string_pretty(&output.summary)?;
    json.push('\n');
    fs::write(&path, json).map_err(io_err(&path))
}

/// Run the plan and write `records.csv`, `loc_results.csv` and `summary.json`
/// into its output directory.
pub fn run_experiment(plan: &ExperimentPlan) -> Result<Summary> {
    let out = execute(plan)?;
    write_outputs(&plan.out_dir, &out)?;
    Ok(out.summary)
}
