//! AFC record parsing and per-OD travel-time statistics.

use std::collections::BTreeMap;
use std::io::Read;

use crate::network::{StationIdx, Topology};

pub const SECONDS_PER_DAY: i64 = 86_400;
pub const DEFAULT_BIN_WIDTH: i64 = 1_800;
pub const AFC_HEADER: [&str; 5] = ["trip_id", "entry_station", "entry_ts", "exit_station", "exit_ts"];

#[derive(Debug, thiserror::Error)]
pub enum IngestError {
    #[error("cannot read AFC stream: {0}")]
    Io(#[from] std::io::Error),
    #[error("malformed AFC stream: {0}")]
    Csv(#[from] csv::Error),
    #[error("bad AFC header: expected `trip_id,entry_station,entry_ts,exit_station,exit_ts`, got `{0}`")]
    Header(String),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AfcRecord {
    pub trip_id: String,
    pub entry_station: StationIdx,
    /// Seconds; day `d` of a multi-day corpus starts at `d * 86400`.
    pub entry_ts: i64,
    pub exit: Option<(StationIdx, i64)>,
}

impl AfcRecord {
    pub fn exit_station(&self) -> Option<StationIdx> {
        self.exit.map(|e| e.0)
    }

    pub fn exit_ts(&self) -> Option<i64> {
        self.exit.map(|e| e.1)
    }

    pub fn travel_time(&self) -> Option<f64> {
        self.exit.map(|(_, t)| (t - self.entry_ts) as f64)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RejectedRow {
    /// 1-based line number in the input, header included.
    pub line: u64,
    pub reason: String,
}

/// Parse an AFC CSV stream. Rows that fail validation are collected with
/// their reasons; only an unreadable stream or a bad header aborts.
pub fn parse_afc_records<R: Read>(
    input: R,
    topo: &Topology,
) -> Result<(Vec<AfcRecord>, Vec<RejectedRow>), IngestError> {
    let mut reader = csv::ReaderBuilder::new().has_headers(true).flexible(true).from_reader(input);
    let header = reader.headers()?.clone();
    let trimmed: Vec<&str> = header.iter().map(str::trim).collect();
    if trimmed != AFC_HEADER {
        return Err(IngestError::Header(trimmed.join(",")));
    }

    let mut records = Vec::new();
    let mut rejected = Vec::new();
    for (i, row) in reader.records().enumerate() {
        let line = i as u64 + 2;
        let row = match row {
            Ok(r) => r,
            Err(e) if e.is_io_error() => return Err(e.into()),
            Err(e) => {
                rejected.push(RejectedRow { line, reason: e.to_string() });
                continue;
            }
        };
        match parse_row(&row, topo) {
            Ok(r) => records.push(r),
            Err(reason) => rejected.push(RejectedRow { line, reason }),
        }
    }
    Ok((records, rejected))
}

fn parse_row(row: &csv::StringRecord, topo: &Topology) -> Result<AfcRecord, String> {
    if row.len() != 5 {
        return Err(format!("expected 5 fields, found {}", row.len()));
    }
    let field = |k: usize| row.get(k).unwrap().trim();
    let trip_id = field(0);
    if trip_id.is_empty() {
        return Err("empty trip_id".into());
    }
    let station = |id: &str| topo.station_idx(id).ok_or_else(|| format!("unknown station '{id}'"));
    let ts = |s: &str, what: &str| s.parse::<i64>().map_err(|_| format!("{what} is not an integer: '{s}'"));

    let entry_station = station(field(1))?;
    let entry_ts = ts(field(2), "entry_ts")?;
    let exit = match (field(3), field(4)) {
        ("", "") => None,
        ("", _) | (_, "") => return Err("exit_station and exit_ts must both be present or both empty".into()),
        (s, t) => {
            let exit_station = station(s)?;
            let exit_ts = ts(t, "exit_ts")?;
            if exit_ts <= entry_ts {
                return Err("non-positive travel time".into());
            }
            if exit_station == entry_station {
                return Err("exit station equals entry station".into());
            }
            Some((exit_station, exit_ts))
        }
    };
    Ok(AfcRecord { trip_id: trip_id.to_string(), entry_station, entry_ts, exit })
}

/// Write records in the AFC CSV layout.
pub fn write_afc_records<W: std::io::Write>(out: W, topo: &Topology, records: &[AfcRecord]) -> Result<(), IngestError> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(AFC_HEADER)?;
    for r in records {
        let (xs, xt) = match r.exit {
            Some((s, t)) => (topo.station(s).id.as_str(), t.to_string()),
            None => ("", String::new()),
        };
        w.write_record([
            r.trip_id.as_str(),
            topo.station(r.entry_station).id.as_str(),
            &r.entry_ts.to_string(),
            xs,
            &xt,
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// Time-of-day bin of a timestamp.
pub fn bin_time_of_day(t: i64, bin_width: i64) -> u32 {
    assert!(bin_width > 0, "bin width must be positive");
    (t.rem_euclid(SECONDS_PER_DAY) / bin_width) as u32
}

/// Running count, mean and sum of squared deviations of one OD pair.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct MomentAccumulator {
    pub n: u64,
    mean: f64,
    m2: f64,
}

impl MomentAccumulator {
    pub fn push(&mut self, x: f64) {
        self.n += 1;
        let d = x - self.mean;
        self.mean += d / self.n as f64;
        self.m2 += d * (x - self.mean);
    }

    /// Pooled merge of two disjoint samples.
    pub fn merge(&mut self, other: &MomentAccumulator) {
        if other.n == 0 {
            return;
        }
        if self.n == 0 {
            *self = *other;
            return;
        }
        let n = self.n + other.n;
        let d = other.mean - self.mean;
        self.mean += d * other.n as f64 / n as f64;
        self.m2 += other.m2 + d * d * (self.n as f64 * other.n as f64) / n as f64;
        self.n = n;
    }

    pub fn mean(&self) -> f64 {
        self.mean
    }

    /// Variance normalised by `n`, not `n - 1`.
    pub fn variance(&self) -> f64 {
        if self.n == 0 {
            0.0
        } else {
            (self.m2 / self.n as f64).max(0.0)
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OdStat {
    pub count: u64,
    pub mean: f64,
    pub variance: f64,
}

/// Sample travel-time moments per (origin, destination).
#[derive(Debug, Clone, Default, PartialEq)]
pub struct OdTravelStats {
    pairs: BTreeMap<(StationIdx, StationIdx), OdStat>,
}

impl OdTravelStats {
    pub fn get(&self, from: StationIdx, to: StationIdx) -> Option<&OdStat> {
        self.pairs.get(&(from, to))
    }

    pub fn iter(&self) -> impl Iterator<Item = (&(StationIdx, StationIdx), &OdStat)> {
        self.pairs.iter()
    }

    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }

    pub fn total_count(&self) -> u64 {
        self.pairs.values().map(|s| s.count).sum()
    }

    pub fn insert(&mut self, from: StationIdx, to: StationIdx, stat: OdStat) {
        self.pairs.insert((from, to), stat);
    }
}

/// Per-pair count, mean and variance of completed trips. Records without an
/// exit are ignored.
pub fn build_od_stats<'a, I>(records: I) -> OdTravelStats
where
    I: IntoIterator<Item = &'a AfcRecord>,
{
    let mut acc: BTreeMap<(StationIdx, StationIdx), MomentAccumulator> = BTreeMap::new();
    for r in records {
        if let Some((exit, _)) = r.exit {
            acc.entry((r.entry_station, exit)).or_default().push(r.travel_time().unwrap());
        }
    }
    OdTravelStats {
        pairs: acc
            .into_iter()
            .map(|(k, a)| (k, OdStat { count: a.n, mean: a.mean(), variance: a.variance() }))
            .collect(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::network::load_topology;
    use proptest::prelude::*;

    fn topo() -> Topology {
        load_topology(include_str!("../../../data/six_station.toml")).unwrap()
    }

    fn rec(from: u32, to: u32, t_in: i64, t_out: i64) -> AfcRecord {
        AfcRecord {
            trip_id: format!("{from}-{to}-{t_in}"),
            entry_station: StationIdx(from),
            entry_ts: t_in,
            exit: Some((StationIdx(to), t_out)),
        }
    }

    #[test]
    fn parses_a_row() {
        let csv = "trip_id,entry_station,entry_ts,exit_station,exit_ts\nt1,A,28800,F,30000\n";
        let (recs, bad) = parse_afc_records(csv.as_bytes(), &topo()).unwrap();
        assert!(bad.is_empty());
        assert_eq!(recs.len(), 1);
        assert_eq!(recs[0].travel_time(), Some(1200.0));
    }

    #[test]
    fn rejects_non_positive_travel_time() {
        let csv = "trip_id,entry_station,entry_ts,exit_station,exit_ts\nt1,A,28800,F,28800\n";
        let (recs, bad) = parse_afc_records(csv.as_bytes(), &topo()).unwrap();
        assert!(recs.is_empty());
        assert_eq!(bad, vec![RejectedRow { line: 2, reason: "non-positive travel time".into() }]);
    }

    #[test]
    fn rejects_unknown_station_by_name() {
        let csv = "trip_id,entry_station,entry_ts,exit_station,exit_ts\nt1,A,1,ZZ,9\nt2,B,1,C,100\n";
        let (recs, bad) = parse_afc_records(csv.as_bytes(), &topo()).unwrap();
        assert_eq!(recs.len(), 1);
        assert_eq!(bad.len(), 1);
        assert!(bad[0].reason.contains("ZZ"));
    }

    #[test]
    fn accepts_open_trips_and_rejects_half_exits() {
        let csv = "trip_id,entry_station,entry_ts,exit_station,exit_ts\nt1,A,1,,\nt2,A,1,F,\nt3,A,x,F,5\n";
        let (recs, bad) = parse_afc_records(csv.as_bytes(), &topo()).unwrap();
        assert_eq!(recs.len(), 1);
        assert!(recs[0].exit.is_none());
        assert_eq!(bad.iter().map(|b| b.line).collect::<Vec<_>>(), vec![3, 4]);
    }

    #[test]
    fn bad_header_aborts() {
        let csv = "id,from,at,to,out\n";
        assert!(matches!(parse_afc_records(csv.as_bytes(), &topo()), Err(IngestError::Header(_))));
    }

    #[test]
    fn write_then_parse_is_identity() {
        let t = topo();
        let recs = vec![rec(0, 5, 100, 900), AfcRecord { exit: None, ..rec(1, 2, 50, 60) }];
        let mut buf = Vec::new();
        write_afc_records(&mut buf, &t, &recs).unwrap();
        let (back, bad) = parse_afc_records(buf.as_slice(), &t).unwrap();
        assert!(bad.is_empty());
        assert_eq!(back, recs);
    }

    #[test]
    fn od_stats_examples() {
        let s = build_od_stats(&[rec(0, 5, 0, 600)]);
        let st = s.get(StationIdx(0), StationIdx(5)).unwrap();
        assert_eq!((st.count, st.mean, st.variance), (1, 600.0, 0.0));

        let s = build_od_stats(&[rec(0, 5, 0, 500), rec(0, 5, 10, 710)]);
        let st = s.get(StationIdx(0), StationIdx(5)).unwrap();
        assert_eq!(st.mean, 600.0);
        assert_eq!(st.variance, 10_000.0);

        let same: Vec<_> = (0..7).map(|k| rec(1, 3, k * 100, k * 100 + 333)).collect();
        assert_eq!(build_od_stats(&same).get(StationIdx(1), StationIdx(3)).unwrap().variance, 0.0);
    }

    #[test]
    fn bins() {
        assert_eq!(bin_time_of_day(0, 1800), 0);
        assert_eq!(bin_time_of_day(30_600, 1800), 17);
        assert_eq!(bin_time_of_day(86_399, 1800), 47);
        assert_eq!(bin_time_of_day(86_400 + 30_600, 1800), 17);
    }

    fn two_pass(xs: &[f64]) -> (f64, f64) {
        let n = xs.len() as f64;
        let m = xs.iter().sum::<f64>() / n;
        (m, xs.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / n)
    }

    proptest! {
        #[test]
        fn stats_match_two_pass_and_ignore_order(
            times in prop::collection::vec((0u32..3, 1i64..4000), 1..200),
            seed in any::<u64>(),
        ) {
            let recs: Vec<_> = times.iter().enumerate()
                .map(|(k, &(d, t))| rec(0, 1 + d, k as i64, k as i64 + t)).collect();
            let stats = build_od_stats(&recs);
            prop_assert_eq!(stats.total_count(), recs.len() as u64);

            let mut shuffled = recs.clone();
            let mut state = seed | 1;
            for i in (1..shuffled.len()).rev() {
                state ^= state << 13; state ^= state >> 7; state ^= state << 17;
                shuffled.swap(i, (state % (i as u64 + 1)) as usize);
            }
            let again = build_od_stats(&shuffled);
            for ((k, a), (_, b)) in stats.iter().zip(again.iter()) {
                let xs: Vec<f64> = recs.iter()
                    .filter(|r| (r.entry_station, r.exit_station().unwrap()) == *k)
                    .map(|r| r.travel_time().unwrap()).collect();
                let (m, v) = two_pass(&xs);
                prop_assert!((a.mean - m).abs() <= 1e-9 * m.abs().max(1.0));
                prop_assert!((a.variance - v).abs() <= 1e-9 * v.abs().max(1.0));
                prop_assert!((a.mean - b.mean).abs() <= 1e-9 * m.abs().max(1.0));
                prop_assert!((a.variance - b.variance).abs() <= 1e-9 * v.abs().max(1.0));
            }
        }

        #[test]
        fn merge_equals_single_pass(xs in prop::collection::vec(0.0f64..5000.0, 2..100), cut in 0usize..100) {
            let cut = cut % xs.len();
            let mut whole = MomentAccumulator::default();
            xs.iter().for_each(|&x| whole.push(x));
            let (mut a, mut b) = (MomentAccumulator::default(), MomentAccumulator::default());
            xs[..cut].iter().for_each(|&x| a.push(x));
            xs[cut..].iter().for_each(|&x| b.push(x));
            a.merge(&b);
            prop_assert_eq!(a.n, whole.n);
            prop_assert!((a.mean() - whole.mean()).abs() < 1e-9 * whole.mean().max(1.0));
            prop_assert!((a.variance() - whole.variance()).abs() < 1e-9 * whole.variance().max(1.0));
        }
    }
}
