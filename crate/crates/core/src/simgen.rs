//! Synthetic fare-collection data with a per-trip ground truth.
//!
//! Demand is a set of piecewise-constant arrival rates per OD pair. Arrivals
//! in each bucket form a Poisson process; every trip follows the
//! minimum-time route of the truth model and draws its action durations
//! with the same sampler used for the location tables.

use std::collections::BTreeMap;
use std::io::Write;

use rand_distr::{Distribution, Exp};
use rayon::prelude::*;
use serde::Deserialize;

use crate::estimator::{ActionTimeModel, EstimateError};
use crate::ingest::{AfcRecord, SECONDS_PER_DAY};
use crate::network::{ActionId, StationIdx, Topology};
use crate::sampling::{rng_for, ActionSampler, SampleError, WaitingMode};

#[derive(Debug, thiserror::Error)]
pub enum SimError {
    #[error("demand profile parse error: {0}")]
    Parse(String),
    #[error("invalid demand profile: {0}")]
    Invalid(String),
    #[error(transparent)]
    Sample(#[from] SampleError),
    #[error(transparent)]
    Estimate(#[from] EstimateError),
}

/// Time of day as seconds or as an `HH:MM[:SS]` string.
#[derive(Debug, Clone, Deserialize)]
#[serde(untagged)]
enum ClockTime {
    Seconds(f64),
    Text(String),
}

impl ClockTime {
    fn seconds(&self) -> Result<f64, SimError> {
        match self {
            ClockTime::Seconds(s) => Ok(*s),
            ClockTime::Text(t) => {
                let parts: Vec<&str> = t.split(':').collect();
                let bad = || SimError::Parse(format!("bad time of day '{t}'"));
                if !(2..=3).contains(&parts.len()) {
                    return Err(bad());
                }
                let mut secs = 0.0;
                for (p, mult) in parts.iter().zip([3600.0, 60.0, 1.0]) {
                    secs += p.trim().parse::<u32>().map_err(|_| bad())? as f64 * mult;
                }
                Ok(secs)
            }
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
struct BucketConfig {
    start: ClockTime,
    end: ClockTime,
    /// Trips per hour for each matching OD pair.
    rate: f64,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
struct FlowConfig {
    /// Station id or `"*"` for every station.
    from: String,
    to: String,
    buckets: Vec<BucketConfig>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
struct DemandConfig {
    #[serde(default)]
    flows: Vec<FlowConfig>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RateBucket {
    /// Seconds after midnight, `start < end ≤ 86400`.
    pub start: f64,
    pub end: f64,
    /// Trips per hour.
    pub rate: f64,
}

/// Arrival rates per OD pair.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct DemandProfile {
    flows: BTreeMap<(StationIdx, StationIdx), Vec<RateBucket>>,
}

impl DemandProfile {
    /// Parses a TOML profile:
    ///
    /// ```toml
    /// [[flows]]
    /// from = "*"
    /// to = "CEN"
    /// buckets = [{ start = "07:00", end = "09:00", rate = 12.0 }]
    /// ```
    ///
    /// Rates of overlapping flows add up. Same-station pairs are skipped.
    pub fn from_toml(text: &str, topo: &Topology) -> Result<Self, SimError> {
        let cfg: DemandConfig = toml::from_str(text).map_err(|e| SimError::Parse(e.to_string()))?;
        let mut profile = DemandProfile::default();
        let resolve = |id: &str| -> Result<Vec<StationIdx>, SimError> {
            if id == "*" {
                Ok((0..topo.n_stations() as u32).map(StationIdx).collect())
            } else {
                topo.station_idx(id)
                    .map(|s| vec![s])
                    .ok_or_else(|| SimError::Invalid(format!("unknown station '{id}'")))
            }
        };
        for flow in &cfg.flows {
            let buckets = flow
                .buckets
                .iter()
                .map(|b| Ok(RateBucket { start: b.start.seconds()?, end: b.end.seconds()?, rate: b.rate }))
                .collect::<Result<Vec<_>, SimError>>()?;
            for o in resolve(&flow.from)? {
                for d in resolve(&flow.to)? {
                    if o != d {
                        profile.add(o, d, &buckets)?;
                    }
                }
            }
        }
        Ok(profile)
    }

    /// The same buckets for every OD pair.
    pub fn uniform(topo: &Topology, buckets: &[RateBucket]) -> Result<Self, SimError> {
        let mut profile = DemandProfile::default();
        for o in 0..topo.n_stations() as u32 {
            for d in 0..topo.n_stations() as u32 {
                if o != d {
                    profile.add(StationIdx(o), StationIdx(d), buckets)?;
                }
            }
        }
        Ok(profile)
    }

    pub fn add(&mut self, from: StationIdx, to: StationIdx, buckets: &[RateBucket]) -> Result<(), SimError> {
        for b in buckets {
            if !(b.rate.is_finite() && b.rate >= 0.0) {
                return Err(SimError::Invalid(format!("rate must be non-negative, got {}", b.rate)));
            }
            if !(0.0 <= b.start && b.start < b.end && b.end <= SECONDS_PER_DAY as f64) {
                return Err(SimError::Invalid(format!("bucket [{}, {}) is not within one day", b.start, b.end)));
            }
        }
        self.flows.entry((from, to)).or_default().extend_from_slice(buckets);
        Ok(())
    }

    /// Every rate multiplied by `factor`.
    pub fn scaled(&self, factor: f64) -> Self {
        let mut out = self.clone();
        for b in out.flows.values_mut().flatten() {
            b.rate *= factor;
        }
        out
    }

    pub fn buckets(&self, from: StationIdx, to: StationIdx) -> &[RateBucket] {
        self.flows.get(&(from, to)).map_or(&[], Vec::as_slice)
    }

    pub fn pairs(&self) -> impl Iterator<Item = (StationIdx, StationIdx)> + '_ {
        self.flows.keys().copied()
    }

    /// Expected number of trips per day.
    pub fn expected_trips(&self) -> f64 {
        self.flows.values().flatten().map(|b| b.rate * (b.end - b.start) / 3600.0).sum()
    }
}

/// Realised action boundaries of one simulated trip.
#[derive(Debug, Clone, PartialEq)]
pub struct TraceTrip {
    pub trip_id: String,
    pub origin: StationIdx,
    pub destination: StationIdx,
    /// Tap-in time, seconds.
    pub entry: f64,
    pub actions: Vec<ActionId>,
    /// End time of each action; the last one is the tap-out.
    pub ends: Vec<f64>,
}

impl TraceTrip {
    pub fn exit(&self) -> f64 {
        *self.ends.last().expect("trips have actions")
    }

    /// Index of the action being performed at `t`, if the trip is in the network.
    pub fn action_at(&self, t: f64) -> Option<usize> {
        if t <= self.entry || t > self.exit() {
            return None;
        }
        Some(self.ends.partition_point(|&e| e < t))
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct GroundTruthTrace {
    pub trips: Vec<TraceTrip>,
}

impl GroundTruthTrace {
    /// Number of trips on each component at `t`, indexed by component id.
    pub fn true_crowdedness(&self, topo: &Topology, t: f64) -> Vec<u64> {
        let catalog = topo.catalog();
        let mut out = vec![0u64; catalog.components().len()];
        for trip in &self.trips {
            if let Some(c) = trip.action_at(t) {
                out[catalog.component_of(trip.actions[c]).index()] += 1;
            }
        }
        out
    }

    /// Trips in the network at `t`.
    pub fn in_network(&self, t: f64) -> usize {
        self.trips.iter().filter(|trip| trip.action_at(t).is_some()).count()
    }

    /// Long CSV: one row per trip action with its start and end time.
    pub fn write_csv<W: Write>(&self, topo: &Topology, out: W) -> csv::Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["trip_id", "step", "action", "component", "start", "end"])?;
        let catalog = topo.catalog();
        for trip in &self.trips {
            let mut start = trip.entry;
            for (k, (&a, &end)) in trip.actions.iter().zip(&trip.ends).enumerate() {
                w.write_record([
                    trip.trip_id.clone(),
                    k.to_string(),
                    topo.describe_action(&catalog.action(a)),
                    topo.component_name(catalog.component(catalog.component_of(a))),
                    start.to_string(),
                    end.to_string(),
                ])?;
                start = end;
            }
        }
        w.flush()?;
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SimParams {
    pub seed: u64,
    /// Day index; timestamps of day `d` start at `d · 86400`.
    pub day: u32,
    pub waiting: WaitingMode,
}

impl Default for SimParams {
    fn default() -> Self {
        SimParams { seed: 0, day: 0, waiting: WaitingMode::Uniform }
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct SimulatedDay {
    pub records: Vec<AfcRecord>,
    pub trace: GroundTruthTrace,
}

/// Simulates one day of demand. Tap-in stamps are the arrival time rounded
/// down to a second and tap-out stamps the realised exit time rounded to the
/// nearest second (at least one second after tap-in). Trip ids are
/// `d<day>-<n>` in order of entry.
pub fn generate_day(
    topo: &Topology,
    truth: &ActionTimeModel,
    demand: &DemandProfile,
    params: &SimParams,
) -> Result<SimulatedDay, SimError> {
    let sampler = ActionSampler::new(topo, truth)?.with_waiting(params.waiting);
    let routes = truth.routes(topo)?;
    let day0 = params.day as i64 * SECONDS_PER_DAY;
    let pairs: Vec<(StationIdx, StationIdx)> = demand.pairs().collect();

    let per_pair = pairs
        .par_iter()
        .map(|&(o, d)| -> Result<Vec<(i64, TraceTrip)>, SimError> {
            let route = routes.get(o, d).expect("every pair of a connected network has a route");
            let plan = sampler.plan(route)?;
            let actions: Vec<ActionId> =
                route.actions.iter().map(|a| topo.catalog().id_of(a).expect("route actions are catalogued")).collect();
            let mut rng = rng_for(params.seed, &[params.day as u64, o.0 as u64, d.0 as u64]);
            let mut out = Vec::new();
            let mut durations = Vec::with_capacity(actions.len());
            for b in demand.buckets(o, d) {
                if b.rate <= 0.0 {
                    continue;
                }
                let gap = Exp::new(b.rate / 3600.0).expect("positive rate");
                let mut t = b.start;
                loop {
                    t += gap.sample(&mut rng);
                    if t >= b.end {
                        break;
                    }
                    plan.sample_into(&mut rng, &mut durations);
                    let entry_ts = day0 + t.floor() as i64;
                    let entry = entry_ts as f64;
                    let mut acc = entry;
                    let ends: Vec<f64> = durations
                        .iter()
                        .map(|x| {
                            acc += x;
                            acc
                        })
                        .collect();
                    let trip = TraceTrip {
                        trip_id: String::new(),
                        origin: o,
                        destination: d,
                        entry,
                        actions: actions.clone(),
                        ends,
                    };
                    out.push((entry_ts, trip));
                }
            }
            Ok(out)
        })
        .collect::<Result<Vec<_>, _>>()?;

    let mut trips: Vec<(i64, TraceTrip)> = per_pair.into_iter().flatten().collect();
    // stable: pairs are in key order and arrivals in time order within a pair
    trips.sort_by(|a, b| a.0.cmp(&b.0).then(a.1.entry.total_cmp(&b.1.entry)));
    let mut records = Vec::with_capacity(trips.len());
    let mut trace = GroundTruthTrace { trips: Vec::with_capacity(trips.len()) };
    for (n, (entry_ts, mut trip)) in trips.into_iter().enumerate() {
        trip.trip_id = format!("d{}-{n}", params.day);
        let exit_ts = (trip.exit().round() as i64).max(entry_ts + 1);
        records.push(AfcRecord {
            trip_id: trip.trip_id.clone(),
            entry_station: trip.origin,
            entry_ts,
            exit: Some((trip.destination, exit_ts)),
        });
        trace.trips.push(trip);
    }
    Ok(SimulatedDay { records, trace })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ingest::MomentAccumulator;
    use crate::network::{load_topology, Component};

    const SIX_STATION: &str = include_str!("../../../data/six_station.toml");

    fn st(topo: &Topology, id: &str) -> StationIdx {
        topo.station_idx(id).unwrap()
    }

    fn one_pair(topo: &Topology, from: &str, to: &str, rate: f64) -> DemandProfile {
        let mut p = DemandProfile::default();
        p.add(st(topo, from), st(topo, to), &[RateBucket { start: 6.0 * 3600.0, end: 22.0 * 3600.0, rate }]).unwrap();
        p
    }

    #[test]
    fn zero_rates_give_an_empty_day() {
        let topo = load_topology(SIX_STATION).unwrap();
        let model = ActionTimeModel::uniform(&topo, 40.0, 5.0);
        let demand = DemandProfile::uniform(&topo, &[RateBucket { start: 0.0, end: 86_400.0, rate: 0.0 }]).unwrap();
        let day = generate_day(&topo, &model, &demand, &SimParams::default()).unwrap();
        assert!(day.records.is_empty() && day.trace.trips.is_empty());
    }

    #[test]
    fn deterministic_given_seed() {
        let topo = load_topology(SIX_STATION).unwrap();
        let model = ActionTimeModel::uniform(&topo, 40.0, 5.0);
        let demand =
            DemandProfile::uniform(&topo, &[RateBucket { start: 7.0 * 3600.0, end: 9.0 * 3600.0, rate: 20.0 }])
                .unwrap();
        let p = SimParams { seed: 5, day: 2, ..SimParams::default() };
        let a = generate_day(&topo, &model, &demand, &p).unwrap();
        let b = generate_day(&topo, &model, &demand, &p).unwrap();
        assert_eq!(a, b);
        let c = generate_day(&topo, &model, &demand, &SimParams { seed: 6, ..p }).unwrap();
        assert_ne!(a.records, c.records);
        assert!(a.records.iter().all(|r| r.entry_ts >= 2 * SECONDS_PER_DAY + 7 * 3600));
        assert!(a.records.windows(2).all(|w| w[0].entry_ts <= w[1].entry_ts));
    }

    #[test]
    fn degenerate_times_are_identical() {
        let topo = load_topology(SIX_STATION).unwrap();
        let model = ActionTimeModel::uniform(&topo, 40.0, 0.0);
        let p = SimParams { waiting: WaitingMode::Midpoint, ..SimParams::default() };
        let day = generate_day(&topo, &model, &one_pair(&topo, "A", "F", 30.0), &p).unwrap();
        assert!(day.records.len() > 100);
        let tt: Vec<f64> = day.trace.trips.iter().map(|t| t.exit() - t.entry).collect();
        assert!(tt.iter().all(|&x| x == tt[0]));
        // walks 3 × 40, waits 60 + 90, moves 550
        assert_eq!(tt[0], 820.0);
    }

    #[test]
    fn travel_time_moments_match_the_route() {
        let topo = load_topology(SIX_STATION).unwrap();
        let model = ActionTimeModel::uniform(&topo, 40.0, 5.0);
        let demand = one_pair(&topo, "B", "F", 700.0);
        let day = generate_day(&topo, &model, &demand, &SimParams { seed: 8, ..SimParams::default() }).unwrap();
        assert!(day.trace.trips.len() > 10_000);
        let mut acc = MomentAccumulator::default();
        for t in &day.trace.trips {
            acc.push(t.exit() - t.entry);
        }
        let routes = model.routes(&topo).unwrap();
        let route = routes.get(st(&topo, "B"), st(&topo, "F")).unwrap();
        let mean = route.expected_time(&topo, model.walks(), &model.means());
        // waits 1200 + 2700, walks 3 × 5
        let se = (3915.0 / acc.n as f64).sqrt();
        assert!((acc.mean() - mean).abs() < 3.0 * se, "{} vs {mean}", acc.mean());
    }

    #[test]
    fn records_agree_with_the_trace() {
        let topo = load_topology(SIX_STATION).unwrap();
        let model = ActionTimeModel::uniform(&topo, 40.0, 5.0);
        let demand =
            DemandProfile::uniform(&topo, &[RateBucket { start: 8.0 * 3600.0, end: 9.0 * 3600.0, rate: 10.0 }])
                .unwrap();
        let day = generate_day(&topo, &model, &demand, &SimParams::default()).unwrap();
        for (r, t) in day.records.iter().zip(&day.trace.trips) {
            assert_eq!(r.trip_id, t.trip_id);
            assert_eq!(r.entry_ts as f64, t.entry);
            assert_eq!(r.exit_ts().unwrap(), t.exit().round() as i64);
            assert!(t.ends.windows(2).all(|w| w[0] < w[1]));
            assert!(t.ends[0] > t.entry);
        }
    }

    #[test]
    fn true_crowdedness_is_conserved() {
        let topo = load_topology(SIX_STATION).unwrap();
        let model = ActionTimeModel::uniform(&topo, 40.0, 5.0);
        let demand =
            DemandProfile::uniform(&topo, &[RateBucket { start: 8.0 * 3600.0, end: 10.0 * 3600.0, rate: 15.0 }])
                .unwrap();
        let day = generate_day(&topo, &model, &demand, &SimParams::default()).unwrap();
        assert!(day.trace.true_crowdedness(&topo, 7.0 * 3600.0).iter().all(|&c| c == 0));
        for k in 0..30 {
            let t = 8.0 * 3600.0 + 300.0 * k as f64 + 0.5;
            let counts = day.trace.true_crowdedness(&topo, t);
            assert_eq!(counts.iter().sum::<u64>() as usize, day.trace.in_network(t));
        }
    }

    #[test]
    fn one_trip_inside_a_move() {
        let topo = load_topology(SIX_STATION).unwrap();
        let catalog = topo.catalog();
        let a = |x| catalog.id_of(&x).unwrap();
        let route = crate::network::compute_route(&topo, st(&topo, "A"), st(&topo, "C")).unwrap();
        let trip = TraceTrip {
            trip_id: "x".into(),
            origin: st(&topo, "A"),
            destination: st(&topo, "C"),
            entry: 100.0,
            actions: route.actions.iter().map(|x| a(*x)).collect(),
            ends: vec![200.0, 290.0, 380.0, 420.0],
        };
        let trace = GroundTruthTrace { trips: vec![trip] };
        let counts = trace.true_crowdedness(&topo, 250.0);
        let seg = topo.segment_between(topo.line_idx("purple").unwrap(), st(&topo, "A"), st(&topo, "B")).unwrap();
        let k = catalog.component_id(&Component::Segment(seg)).unwrap();
        assert_eq!(counts[k.index()], 1);
        assert_eq!(counts.iter().sum::<u64>(), 1);
        assert_eq!(trace.in_network(100.0), 0);
        assert_eq!(trace.in_network(420.0), 1);
        assert_eq!(trace.in_network(420.5), 0);
    }

    #[test]
    fn demand_toml_wildcards_and_clock_times() {
        let topo = load_topology(SIX_STATION).unwrap();
        let text = r#"
[[flows]]
from = "*"
to = "F"
buckets = [{ start = "07:00", end = "09:30", rate = 6.0 }]
[[flows]]
from = "A"
to = "F"
buckets = [{ start = 25200, end = 28800, rate = 2.0 }]
"#;
        let p = DemandProfile::from_toml(text, &topo).unwrap();
        assert_eq!(p.pairs().count(), 5);
        assert_eq!(p.buckets(st(&topo, "A"), st(&topo, "F")).len(), 2);
        assert_eq!(p.buckets(st(&topo, "B"), st(&topo, "F"))[0].end, 9.5 * 3600.0);
        assert!((p.expected_trips() - (5.0 * 6.0 * 2.5 + 2.0)).abs() < 1e-9);

        let bad = text.replace("rate = 6.0", "rate = -1.0");
        assert!(matches!(DemandProfile::from_toml(&bad, &topo), Err(SimError::Invalid(_))));
        let bad = text.replace("\"07:00\"", "\"7h\"");
        assert!(matches!(DemandProfile::from_toml(&bad, &topo), Err(SimError::Parse(_))));
        let bad = text.replace("to = \"F\"", "to = \"Z\"");
        assert!(DemandProfile::from_toml(&bad, &topo).unwrap_err().to_string().contains("'Z'"));
    }

    #[test]
    fn trace_csv_has_one_row_per_action() {
        let topo = load_topology(SIX_STATION).unwrap();
        let model = ActionTimeModel::uniform(&topo, 40.0, 5.0);
        let day = generate_day(&topo, &model, &one_pair(&topo, "A", "F", 2.0), &SimParams::default()).unwrap();
        let mut buf = Vec::new();
        day.trace.write_csv(&topo, &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(text.lines().count(), 1 + 8 * day.trace.trips.len());
        assert!(text.lines().nth(1).unwrap().contains("enter A@purple"));
    }
}
