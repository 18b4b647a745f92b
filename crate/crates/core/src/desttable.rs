//! Destination distributions from historical trips.
//!
//! For an entry station, a time-of-day bin and an elapsed time `dt`, the
//! weight of destination `s'` is the number of historical trips from the
//! same station and bin to `s'` whose travel time is strictly greater than
//! `dt`. Travel times are kept sorted per (origin, bin, destination), so a
//! query is one binary search per destination. Days are pooled by bin.

use std::collections::BTreeMap;

use crate::ingest::{bin_time_of_day, AfcRecord, DEFAULT_BIN_WIDTH, SECONDS_PER_DAY};
use crate::network::StationIdx;

/// Which rule produced a destination distribution.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DestinationSource {
    /// Trips in the bin still travelling after `dt`.
    Survivors,
    /// All trips of the bin, ignoring `dt`.
    Bin,
    /// All trips from the station, any bin.
    Day,
    /// No history from the station; every other station is equally likely.
    Uniform,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DestinationDistribution {
    /// `(destination, probability)` in station order, zero entries omitted.
    pub probs: Vec<(StationIdx, f64)>,
    pub source: DestinationSource,
}

impl DestinationDistribution {
    pub fn get(&self, s: StationIdx) -> f64 {
        self.probs.iter().find(|(d, _)| *d == s).map_or(0.0, |(_, p)| *p)
    }
}

/// Sorted travel times of one (origin, bin) cell, per destination.
type Cell = BTreeMap<StationIdx, Vec<f64>>;

#[derive(Debug, Clone, PartialEq)]
pub struct DestinationTable {
    n_stations: usize,
    bin_width: i64,
    fingerprint: [u8; 32],
    cells: BTreeMap<(StationIdx, u32), Cell>,
    /// Per-origin pooled counts over all bins.
    day_counts: Vec<BTreeMap<StationIdx, u64>>,
}

impl DestinationTable {
    /// Assembles a table from per-(origin, bin, destination) travel times,
    /// which need not be sorted.
    pub fn from_cells(
        n_stations: usize,
        bin_width: i64,
        fingerprint: [u8; 32],
        entries: impl IntoIterator<Item = ((StationIdx, u32, StationIdx), Vec<f64>)>,
    ) -> Self {
        let mut cells: BTreeMap<(StationIdx, u32), Cell> = BTreeMap::new();
        for ((s, bin, d), times) in entries {
            cells.entry((s, bin)).or_default().entry(d).or_default().extend(times);
        }
        let mut day_counts = vec![BTreeMap::new(); n_stations];
        for ((s, _), cell) in cells.iter_mut() {
            for (d, times) in cell.iter_mut() {
                times.sort_by(f64::total_cmp);
                *day_counts[s.index()].entry(*d).or_insert(0) += times.len() as u64;
            }
        }
        DestinationTable { n_stations, bin_width, fingerprint, cells, day_counts }
    }

    pub fn n_stations(&self) -> usize {
        self.n_stations
    }

    pub fn bin_width(&self) -> i64 {
        self.bin_width
    }

    pub fn n_bins(&self) -> u32 {
        ((SECONDS_PER_DAY + self.bin_width - 1) / self.bin_width) as u32
    }

    pub fn fingerprint(&self) -> [u8; 32] {
        self.fingerprint
    }

    pub fn is_empty(&self) -> bool {
        self.cells.is_empty()
    }

    /// Number of stored trips.
    pub fn n_records(&self) -> usize {
        self.cells.values().flat_map(|c| c.values()).map(Vec::len).sum()
    }

    /// `((origin, bin, destination), sorted travel times)` in key order.
    pub fn cells(&self) -> impl Iterator<Item = ((StationIdx, u32, StationIdx), &[f64])> {
        self.cells.iter().flat_map(|(&(s, bin), cell)| cell.iter().map(move |(&d, t)| ((s, bin, d), t.as_slice())))
    }

    /// Trips from `s` in `bin` to `d` with travel time strictly above `dt`.
    pub fn survival_count(&self, s: StationIdx, bin: u32, d: StationIdx, dt: f64) -> u64 {
        self.cells
            .get(&(s, bin))
            .and_then(|c| c.get(&d))
            .map_or(0, |times| (times.len() - times.partition_point(|&x| x <= dt)) as u64)
    }

    pub fn bin_of(&self, t_in: i64) -> u32 {
        bin_time_of_day(t_in, self.bin_width)
    }

    /// Destination probabilities of a passenger who entered `s` at `t_in`
    /// and has been travelling for `dt` seconds.
    ///
    /// Falls back, in order, to the bin without the `dt` condition, to the
    /// whole day, and to a uniform choice among the other stations.
    pub fn destination_distribution(&self, s: StationIdx, t_in: i64, dt: f64) -> DestinationDistribution {
        let bin = self.bin_of(t_in);
        if let Some(cell) = self.cells.get(&(s, bin)) {
            let survivors: Vec<(StationIdx, u64)> = cell
                .iter()
                .map(|(&d, times)| (d, (times.len() - times.partition_point(|&x| x <= dt)) as u64))
                .collect();
            if let Some(d) = normalise(&survivors, DestinationSource::Survivors) {
                return d;
            }
            let all: Vec<(StationIdx, u64)> = cell.iter().map(|(&d, t)| (d, t.len() as u64)).collect();
            if let Some(d) = normalise(&all, DestinationSource::Bin) {
                return d;
            }
        }
        if let Some(counts) = self.day_counts.get(s.index()) {
            let all: Vec<(StationIdx, u64)> = counts.iter().map(|(&d, &n)| (d, n)).collect();
            if let Some(d) = normalise(&all, DestinationSource::Day) {
                return d;
            }
        }
        let others: Vec<StationIdx> = (0..self.n_stations as u32).map(StationIdx).filter(|&d| d != s).collect();
        let p = 1.0 / others.len().max(1) as f64;
        DestinationDistribution {
            probs: others.into_iter().map(|d| (d, p)).collect(),
            source: DestinationSource::Uniform,
        }
    }
}

fn normalise(counts: &[(StationIdx, u64)], source: DestinationSource) -> Option<DestinationDistribution> {
    let total: u64 = counts.iter().map(|(_, n)| n).sum();
    if total == 0 {
        return None;
    }
    let probs = counts.iter().filter(|(_, n)| *n > 0).map(|&(d, n)| (d, n as f64 / total as f64)).collect();
    Some(DestinationDistribution { probs, source })
}

/// Groups completed trips by (origin, time-of-day bin, destination).
/// Open trips and same-station trips are skipped.
pub fn build_destination_table(
    n_stations: usize,
    fingerprint: [u8; 32],
    records: &[AfcRecord],
    bin_width: i64,
) -> DestinationTable {
    let mut entries: BTreeMap<(StationIdx, u32, StationIdx), Vec<f64>> = BTreeMap::new();
    for r in records {
        let Some((d, _)) = r.exit else { continue };
        if d == r.entry_station {
            continue;
        }
        let key = (r.entry_station, bin_time_of_day(r.entry_ts, bin_width), d);
        entries.entry(key).or_default().push(r.travel_time().unwrap());
    }
    DestinationTable::from_cells(n_stations, bin_width, fingerprint, entries)
}

impl Default for DestinationTable {
    fn default() -> Self {
        DestinationTable::from_cells(0, DEFAULT_BIN_WIDTH, [0; 32], std::iter::empty())
    }
}
