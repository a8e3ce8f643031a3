//! Per-file throughput records and their summary statistics.

use serde::Serialize;

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ThroughputRecord {
    pub ue: usize,
    pub file_bytes: u64,
    pub arrival: f64,
    pub completion: f64,
    pub upt_bps: f64,
}

impl ThroughputRecord {
    pub fn new(ue: usize, file_bytes: u64, arrival: f64, completion: f64) -> Result<Self> {
        if !(completion > arrival) {
            return Err(Error::Statistics(format!("file of UE {ue} completes at {completion} before arriving at {arrival}")));
        }
        Ok(Self { ue, file_bytes, arrival, completion, upt_bps: file_bytes as f64 * 8.0 / (completion - arrival) })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct UptStats {
    /// Nearest-rank 5th percentile.
    pub p5: f64,
    pub mean: f64,
}

/// Nearest-rank 5th percentile and arithmetic mean.
pub fn upt_stats(values: &[f64]) -> Result<UptStats> {
    if values.is_empty() {
        return Err(Error::Statistics("no throughput samples".into()));
    }
    if values.iter().any(|v| !v.is_finite()) {
        return Err(Error::Statistics("non-finite throughput sample".into()));
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let rank = ((0.05 * v.len() as f64).ceil() as usize).max(1);
    // shifted sum: exact for constant samples
    let mean = v[0] + v.iter().map(|x| x - v[0]).sum::<f64>() / v.len() as f64;
    Ok(UptStats { p5: v[rank - 1].min(mean), mean })
}

pub fn record_stats(records: &[ThroughputRecord]) -> Result<UptStats> {
    upt_stats(&records.iter().map(|r| r.upt_bps).collect::<Vec<_>>())
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DropStats {
    pub arm: String,
    pub p5_bps: f64,
    pub mean_bps: f64,
    pub ru: f64,
    pub n_records: usize,
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn nearest_rank_examples() {
        let v: Vec<f64> = (1..=100).map(f64::from).collect();
        let s = upt_stats(&v).unwrap();
        assert_eq!(s.p5, 5.0);
        assert_eq!(s.mean, 50.5);
        let s = upt_stats(&[3.5]).unwrap();
        assert_eq!((s.p5, s.mean), (3.5, 3.5));
        let s = upt_stats(&[0.1; 37]).unwrap();
        assert_eq!(s.p5, s.mean);
        assert!(matches!(upt_stats(&[]), Err(Error::Statistics(_))));
    }

    #[test]
    fn record_upt() {
        let r = ThroughputRecord::new(0, 500_000, 1.0, 3.0).unwrap();
        assert_eq!(r.upt_bps, 2e6);
        assert!(ThroughputRecord::new(0, 1, 2.0, 2.0).is_err());
    }
}
