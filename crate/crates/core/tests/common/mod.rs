//! Independent reference computations used by the acceptance suite.

use std::collections::BTreeMap;

use railcrowd::desttable::DestinationSource;
use railcrowd::ingest::AfcRecord;
use railcrowd::network::StationIdx;
use statrs::distribution::{Continuous, ContinuousCDF, Gamma};

/// Gamma law given by its mean and variance.
pub fn gamma(mean: f64, variance: f64) -> Gamma {
    Gamma::new(mean * mean / variance, mean / variance).unwrap()
}

/// Integral of the Gamma CDF from 0 to `x`, in closed form:
/// `x·G_k(x) − kθ·G_{k+1}(x)`.
fn integrated_cdf(k: f64, theta: f64, x: f64) -> f64 {
    if x <= 0.0 {
        return 0.0;
    }
    let g = Gamma::new(k, 1.0 / theta).unwrap();
    let g1 = Gamma::new(k + 1.0, 1.0 / theta).unwrap();
    x * g.cdf(x) - k * theta * g1.cdf(x)
}

/// Occupancy probabilities of an Enter, Move, Exit route computed by
/// numeric convolution of the action-time laws.
///
/// Enter lasts a Gamma walk plus a Uniform(0, headway) wait, Move a fixed
/// time and Exit a Gamma walk.
pub struct ThreeActionOracle {
    pub enter_shape: f64,
    pub enter_scale: f64,
    pub headway: f64,
    pub move_time: f64,
    pub exit: Gamma,
    pub exit_mean: f64,
    pub exit_sd: f64,
}

impl ThreeActionOracle {
    pub fn new(enter: (f64, f64), headway: f64, move_time: f64, exit: (f64, f64)) -> Self {
        ThreeActionOracle {
            enter_shape: enter.0 * enter.0 / enter.1,
            enter_scale: enter.1 / enter.0,
            headway,
            move_time,
            exit: gamma(exit.0, exit.1),
            exit_mean: exit.0,
            exit_sd: exit.1.sqrt(),
        }
    }

    /// CDF of the Enter duration (Gamma plus independent uniform wait).
    pub fn enter_cdf(&self, t: f64) -> f64 {
        let (k, th, h) = (self.enter_shape, self.enter_scale, self.headway);
        ((integrated_cdf(k, th, t) - integrated_cdf(k, th, t - h)) / h).clamp(0.0, 1.0)
    }

    /// CDF of Enter plus Exit durations, by Simpson integration over the Exit density.
    pub fn enter_exit_cdf(&self, s: f64) -> f64 {
        let lo = (self.exit_mean - 20.0 * self.exit_sd).max(0.0);
        let hi = self.exit_mean + 20.0 * self.exit_sd;
        let n = 8000;
        let h = (hi - lo) / n as f64;
        let f = |x: f64| self.exit.pdf(x) * self.enter_cdf(s - x);
        let mut acc = f(lo) + f(hi);
        for i in 1..n {
            let x = lo + i as f64 * h;
            acc += if i % 2 == 1 { 4.0 } else { 2.0 } * f(x);
        }
        (acc * h / 3.0).clamp(0.0, 1.0)
    }

    /// `[P(Enter), P(Move), P(Exit), P(exited)]` at `t` seconds after tap-in.
    pub fn occupancy(&self, t: f64) -> [f64; 4] {
        let f1 = self.enter_cdf(t);
        let f1_shift = self.enter_cdf(t - self.move_time);
        let done = self.enter_exit_cdf(t - self.move_time);
        [1.0 - f1, f1 - f1_shift, (f1_shift - done).max(0.0), done]
    }
}

/// Destination distribution by direct filtering of the raw records.
pub fn brute_force_destinations(
    records: &[AfcRecord],
    n_stations: usize,
    s: StationIdx,
    t_in: i64,
    dt: f64,
    bin_width: i64,
) -> (Vec<(StationIdx, f64)>, DestinationSource) {
    let bin = |t: i64| t.rem_euclid(86_400) / bin_width;
    let completed = || records.iter().filter(|r| r.entry_station == s && r.exit.is_some());
    let to_probs = |counts: BTreeMap<StationIdx, u64>| {
        let total: u64 = counts.values().sum();
        counts.into_iter().map(|(d, n)| (d, n as f64 / total as f64)).collect::<Vec<_>>()
    };
    let tally = |it: &mut dyn Iterator<Item = &AfcRecord>| {
        let mut m = BTreeMap::new();
        for r in it {
            *m.entry(r.exit.unwrap().0).or_insert(0u64) += 1;
        }
        m
    };

    let same_bin = || completed().filter(|r| bin(r.entry_ts) == bin(t_in));
    let survivors = tally(&mut same_bin().filter(|r| (r.exit.unwrap().1 - r.entry_ts) as f64 > dt));
    if !survivors.is_empty() {
        return (to_probs(survivors), DestinationSource::Survivors);
    }
    let in_bin = tally(&mut same_bin());
    if !in_bin.is_empty() {
        return (to_probs(in_bin), DestinationSource::Bin);
    }
    let day = tally(&mut completed());
    if !day.is_empty() {
        return (to_probs(day), DestinationSource::Day);
    }
    let others: Vec<StationIdx> = (0..n_stations as u32).map(StationIdx).filter(|&d| d != s).collect();
    let p = 1.0 / others.len() as f64;
    (others.into_iter().map(|d| (d, p)).collect(), DestinationSource::Uniform)
}
