//! FTP model 3 file arrivals.

use rand::Rng;
use rand_distr::{Distribution, Exp1};
use serde::Serialize;

use crate::error::{Error, Result};
use crate::rng::{self, domain};

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TrafficEvent {
    pub ue: usize,
    pub arrival: f64,
    pub file_bytes: u64,
}

/// Independent Poisson file arrivals per UE on `[0, duration_s]`, sorted by
/// time then UE. Each UE draws from its own counter stream, and inter-arrival
/// times are unit exponentials divided by `lambda_per_s`, so a higher rate
/// yields a superset-shaped, earlier schedule for the same seed.
pub fn ftp3_arrivals(lambda_per_s: f64, duration_s: f64, n_ues: usize, file_bytes: u64, seed: u64) -> Result<Vec<TrafficEvent>> {
    if !(lambda_per_s > 0.0) || !lambda_per_s.is_finite() {
        return Err(Error::Domain(format!("arrival rate {lambda_per_s} must be positive")));
    }
    if file_bytes == 0 {
        return Err(Error::Domain("file size must be positive".into()));
    }
    let mut events = Vec::new();
    for ue in 0..n_ues {
        let mut r = rng::stream(seed, &[domain::TRAFFIC, ue as u64]);
        events.extend(poisson_times(lambda_per_s, duration_s, &mut r).into_iter().map(|arrival| TrafficEvent { ue, arrival, file_bytes }));
    }
    events.sort_by(|a, b| a.arrival.total_cmp(&b.arrival).then(a.ue.cmp(&b.ue)));
    Ok(events)
}

fn poisson_times<R: Rng + ?Sized>(lambda: f64, duration: f64, rng: &mut R) -> Vec<f64> {
    let mut t = 0.0;
    let mut out = Vec::new();
    loop {
        let e: f64 = Exp1.sample(rng);
        t += e / lambda;
        if t > duration {
            return out;
        }
        out.push(t);
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use statrs::distribution::{ContinuousCDF, Exp};

    #[test]
    fn count_statistics() {
        // 200 draws of Poisson(100): mean and variance both near 100
        let counts: Vec<f64> = (0..200).map(|s| ftp3_arrivals(0.5, 200.0, 1, 1000, s).unwrap().len() as f64).collect();
        let n = counts.len() as f64;
        let mean = counts.iter().sum::<f64>() / n;
        let var = counts.iter().map(|c| (c - mean).powi(2)).sum::<f64>() / (n - 1.0);
        assert!((mean - 100.0).abs() < 3.0, "mean {mean}");
        assert!((var / 100.0 - 1.0).abs() < 0.35, "var {var}");
    }

    #[test]
    fn interarrivals_are_exponential() {
        let ev = ftp3_arrivals(2.0, 5200.0, 1, 1000, 3).unwrap();
        let mut gaps: Vec<f64> = ev.windows(2).map(|w| w[1].arrival - w[0].arrival).take(10_000).collect();
        assert!(gaps.len() >= 10_000);
        gaps.sort_by(f64::total_cmp);
        let d = Exp::new(2.0).unwrap();
        let n = gaps.len() as f64;
        let ks = gaps
            .iter()
            .enumerate()
            .map(|(i, &x)| {
                let f = d.cdf(x);
                (f - i as f64 / n).abs().max(((i + 1) as f64 / n - f).abs())
            })
            .fold(0.0, f64::max);
        // asymptotic Kolmogorov critical value at the 1% level
        assert!(ks < 1.628 / n.sqrt(), "ks {ks}");
    }

    #[test]
    fn deterministic_and_validated() {
        assert_eq!(ftp3_arrivals(1.0, 10.0, 5, 100, 9).unwrap(), ftp3_arrivals(1.0, 10.0, 5, 100, 9).unwrap());
        assert!(ftp3_arrivals(0.0, 10.0, 5, 100, 9).is_err());
        assert!(ftp3_arrivals(1.0, 10.0, 5, 0, 9).is_err());
    }
}
