//! Proportional-fair scheduling state.

use crate::error::{Error, Result};

/// Floor of the averaged throughput (bps).
pub const AVG_FLOOR_BPS: f64 = 1.0;

#[derive(Debug, Clone, PartialEq)]
pub struct SchedulerState {
    /// Exponentially averaged served rate per UE (bps).
    pub avg_bps: Vec<f64>,
    pub time_constant_slots: f64,
    /// Pending bytes per UE.
    pub buffers: Vec<f64>,
}

impl SchedulerState {
    pub fn new(n_ues: usize, time_constant_slots: f64) -> Self {
        Self { avg_bps: vec![AVG_FLOOR_BPS; n_ues], time_constant_slots: time_constant_slots.max(1.0), buffers: vec![0.0; n_ues] }
    }

    pub fn metric(&self, ue: usize, rate_bps: f64) -> f64 {
        rate_bps / self.avg_bps[ue]
    }

    /// One EMA step with the rate granted to each UE in this slot.
    pub fn update(&mut self, granted_bps: &[f64]) {
        let a = 1.0 / self.time_constant_slots;
        for (avg, g) in self.avg_bps.iter_mut().zip(granted_bps) {
            *avg = ((1.0 - a) * *avg + a * g).max(AVG_FLOOR_BPS);
        }
    }
}

/// A backlogged UE and its instantaneous rate (bps) on every subband.
#[derive(Debug, Clone, PartialEq)]
pub struct Candidate {
    pub ue: usize,
    pub rates_bps: Vec<f64>,
}

/// Give each subband to the candidate with the largest `rate / avg` (ties
/// to the earlier candidate), then update the averages.
pub fn pf_schedule(state: &mut SchedulerState, candidates: &[Candidate]) -> Result<Vec<Option<usize>>> {
    let Some(first) = candidates.first() else {
        return Err(Error::Domain("no backlogged candidates".into()));
    };
    let n_sb = first.rates_bps.len();
    if candidates.iter().any(|c| c.rates_bps.len() != n_sb || c.ue >= state.avg_bps.len()) {
        return Err(Error::Dimension("candidate rate lists disagree with the scheduler state".into()));
    }
    let mut alloc = vec![None; n_sb];
    let mut granted = vec![0.0; state.avg_bps.len()];
    for (s, slot) in alloc.iter_mut().enumerate() {
        let mut best: Option<(f64, &Candidate)> = None;
        for c in candidates {
            let m = state.metric(c.ue, c.rates_bps[s]);
            if best.is_none_or(|(bm, _)| m > bm) {
                best = Some((m, c));
            }
        }
        if let Some((_, c)) = best {
            *slot = Some(c.ue);
            granted[c.ue] += c.rates_bps[s];
        }
    }
    state.update(&granted);
    Ok(alloc)
}

/// `(Σx)² / (n·Σx²)`.
pub fn jain_index(x: &[f64]) -> f64 {
    let s: f64 = x.iter().sum();
    let s2: f64 = x.iter().map(|v| v * v).sum();
    if s2 == 0.0 {
        return 1.0;
    }
    s * s / (x.len() as f64 * s2)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::{self, domain};
    use rand_distr::{Distribution, Exp1};

    fn cand(ue: usize, r: &[f64]) -> Candidate {
        Candidate { ue, rates_bps: r.to_vec() }
    }

    #[test]
    fn argmax_examples() {
        let mut st = SchedulerState::new(2, 100.0);
        assert_eq!(pf_schedule(&mut st, &[cand(0, &[2.0]), cand(1, &[1.0])]).unwrap(), vec![Some(0)]);

        let mut st = SchedulerState::new(2, 100.0);
        st.avg_bps = vec![4.0, 1.0];
        assert_eq!(pf_schedule(&mut st, &[cand(0, &[2.0]), cand(1, &[1.0])]).unwrap(), vec![Some(1)]);

        let mut st = SchedulerState::new(3, 100.0);
        assert_eq!(pf_schedule(&mut st, &[cand(2, &[1.0, 5.0, 0.1])]).unwrap(), vec![Some(2); 3]);
        assert!(pf_schedule(&mut st, &[]).is_err());
    }

    #[test]
    fn ema_update() {
        let mut st = SchedulerState::new(2, 100.0);
        st.avg_bps = vec![100.0, 100.0];
        st.update(&[200.0, 0.0]);
        assert!((st.avg_bps[0] - 101.0).abs() < 1e-12);
        assert!((st.avg_bps[1] - 99.0).abs() < 1e-12);
        let mut st = SchedulerState::new(1, 100.0);
        st.update(&[0.0]);
        assert_eq!(st.avg_bps[0], AVG_FLOOR_BPS);
    }

    #[test]
    fn long_run_fairness_symmetric_ues() {
        let n = 10;
        let n_sb = 7;
        let mut st = SchedulerState::new(n, 100.0);
        let mut r = rng::stream(5, &[domain::TEST, 1]);
        let mut served = vec![0.0; n];
        for _ in 0..10_000 {
            let cands: Vec<Candidate> = (0..n)
                .map(|ue| {
                    let rates: Vec<f64> = (0..n_sb)
                        .map(|_| {
                            let snr: f64 = Exp1.sample(&mut r);
                            1e6 * (1.0 + 10.0 * snr).log2()
                        })
                        .collect();
                    cand(ue, &rates)
                })
                .collect();
            for (s, ue) in pf_schedule(&mut st, &cands).unwrap().into_iter().enumerate() {
                let ue = ue.unwrap();
                served[ue] += cands[ue].rates_bps[s];
            }
        }
        let j = jain_index(&served);
        assert!(j >= 0.9, "jain {j}");
    }

    #[test]
    fn jain_examples() {
        assert!((jain_index(&[1.0, 1.0, 1.0]) - 1.0).abs() < 1e-12);
        assert!((jain_index(&[1.0, 0.0, 0.0, 0.0]) - 0.25).abs() < 1e-12);
    }
}
