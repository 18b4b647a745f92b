//! Online crowdedness inference from tap events.
//!
//! A passenger is active from tap-in until tap-out: at time `t` the trip
//! counts if `t_in < t ≤ t_out`. Each active passenger is spread over the
//! actions of every possible route, weighting route `s → s'` by the
//! destination probability and the route's location table at the elapsed
//! time. Summing over passengers gives the expected number of people
//! performing each action, which is then aggregated per component.

use std::collections::BTreeMap;
use std::io::Write;

use crate::desttable::DestinationTable;
use crate::ingest::AfcRecord;
use crate::loctable::LocationTableSet;
use crate::network::{ActionId, Component, ComponentId, ComponentKind, StationIdx, Topology};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum EngineError {
    #[error("trip '{0}' tapped in twice")]
    DuplicateTapIn(String),
    #[error("tap-out for unknown trip '{0}'")]
    UnknownTapOut(String),
    #[error("no location table for {from} -> {to}")]
    MissingTable { from: String, to: String },
    #[error("query time {t_now} precedes entry time {t_in}")]
    BeforeEntry { t_in: i64, t_now: i64 },
    #[error("tables were built for a different network")]
    FingerprintMismatch,
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord)]
pub enum TapEvent {
    TapIn { trip_id: String, station: StationIdx, ts: i64 },
    TapOut { trip_id: String, station: StationIdx, ts: i64 },
}

impl TapEvent {
    pub fn ts(&self) -> i64 {
        match self {
            TapEvent::TapIn { ts, .. } | TapEvent::TapOut { ts, .. } => *ts,
        }
    }

    pub fn trip_id(&self) -> &str {
        match self {
            TapEvent::TapIn { trip_id, .. } | TapEvent::TapOut { trip_id, .. } => trip_id,
        }
    }
}

/// Tap-in and (when present) tap-out events of the records, ordered by
/// timestamp, then tap-ins before tap-outs, then trip id.
pub fn events_from_records(records: &[AfcRecord]) -> Vec<TapEvent> {
    let mut events = Vec::with_capacity(records.len() * 2);
    for r in records {
        events.push(TapEvent::TapIn { trip_id: r.trip_id.clone(), station: r.entry_station, ts: r.entry_ts });
        if let Some((station, ts)) = r.exit {
            events.push(TapEvent::TapOut { trip_id: r.trip_id.clone(), station, ts });
        }
    }
    events.sort_by(|a, b| a.ts().cmp(&b.ts()).then_with(|| a.cmp(b)));
    events
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ActivePassenger {
    pub station: StationIdx,
    pub t_in: i64,
}

/// Passengers currently inside the network, keyed by trip id.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ActivePassengerSet {
    passengers: BTreeMap<String, ActivePassenger>,
    per_station: Vec<u64>,
}

impl ActivePassengerSet {
    pub fn new(n_stations: usize) -> Self {
        ActivePassengerSet { passengers: BTreeMap::new(), per_station: vec![0; n_stations] }
    }

    /// Applies one event. On error the set is left unchanged.
    pub fn apply(&mut self, event: &TapEvent) -> Result<(), EngineError> {
        match event {
            TapEvent::TapIn { trip_id, station, ts } => {
                if self.passengers.contains_key(trip_id) {
                    return Err(EngineError::DuplicateTapIn(trip_id.clone()));
                }
                self.passengers.insert(trip_id.clone(), ActivePassenger { station: *station, t_in: *ts });
                if self.per_station.len() <= station.index() {
                    self.per_station.resize(station.index() + 1, 0);
                }
                self.per_station[station.index()] += 1;
            }
            TapEvent::TapOut { trip_id, .. } => {
                let p = self.passengers.remove(trip_id).ok_or_else(|| EngineError::UnknownTapOut(trip_id.clone()))?;
                self.per_station[p.station.index()] -= 1;
            }
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.passengers.len()
    }

    pub fn is_empty(&self) -> bool {
        self.passengers.is_empty()
    }

    /// Active passengers who entered at `s`.
    pub fn station_count(&self, s: StationIdx) -> u64 {
        self.per_station.get(s.index()).copied().unwrap_or(0)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &ActivePassenger)> {
        self.passengers.iter().map(|(k, v)| (k.as_str(), v))
    }
}

/// Expected occupancy at one instant.
#[derive(Debug, Clone, PartialEq)]
pub struct CrowdednessSnapshot {
    pub t_now: i64,
    /// Number of active passengers.
    pub active: u64,
    /// Expected count per action, indexed by [`ActionId`].
    pub actions: Vec<f64>,
    /// Expected count per component, indexed by [`ComponentId`].
    pub components: Vec<f64>,
}

impl CrowdednessSnapshot {
    pub fn total(&self) -> f64 {
        self.actions.iter().sum()
    }

    pub fn component(&self, c: ComponentId) -> f64 {
        self.components[c.index()]
    }

    /// Component counts with every transfer point added to its station and
    /// set to zero.
    pub fn folded(&self, topo: &Topology) -> Vec<f64> {
        let catalog = topo.catalog();
        let mut out = self.components.clone();
        for (k, c) in catalog.components().iter().enumerate() {
            if let Component::TransferPoint(s) = *c {
                let station = catalog.component_id(&Component::Station(s)).expect("station component");
                out[station.index()] += out[k];
                out[k] = 0.0;
            }
        }
        out
    }

    /// Sum of component counts of one kind.
    pub fn kind_total(&self, topo: &Topology, kind: ComponentKind) -> f64 {
        topo.catalog()
            .components()
            .iter()
            .zip(&self.components)
            .filter(|(c, _)| Topology::component_kind(**c) == kind)
            .map(|(_, v)| v)
            .sum()
    }

    /// CSV `component_id,kind,expected_count` with a trailing `total,system,<sum>` line.
    /// With `fold_transfers`, transfer points are merged into their stations.
    pub fn write_csv<W: Write>(&self, topo: &Topology, fold_transfers: bool, out: W) -> csv::Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["component_id", "kind", "expected_count"])?;
        let values = if fold_transfers { self.folded(topo) } else { self.components.clone() };
        for (c, v) in topo.catalog().components().iter().zip(&values) {
            let kind = Topology::component_kind(*c);
            if fold_transfers && kind == ComponentKind::Transfer {
                continue;
            }
            w.write_record([topo.component_name(*c), kind.as_str().to_string(), v.to_string()])?;
        }
        w.write_record(["total".to_string(), "system".to_string(), self.total().to_string()])?;
        w.flush()?;
        Ok(())
    }
}

/// Location and destination tables bound to a topology.
#[derive(Debug, Clone, Copy)]
pub struct CrowdEngine<'a> {
    topo: &'a Topology,
    locations: &'a LocationTableSet,
    destinations: &'a DestinationTable,
}

impl<'a> CrowdEngine<'a> {
    pub fn new(
        topo: &'a Topology,
        locations: &'a LocationTableSet,
        destinations: &'a DestinationTable,
    ) -> Result<Self, EngineError> {
        if locations.fingerprint() != topo.fingerprint() || locations.n_stations() != topo.n_stations() {
            return Err(EngineError::FingerprintMismatch);
        }
        Ok(CrowdEngine { topo, locations, destinations })
    }

    pub fn topology(&self) -> &'a Topology {
        self.topo
    }

    /// Adds `weight` times the action distribution of one passenger to `out`.
    fn accumulate(
        &self,
        s: StationIdx,
        t_in: i64,
        t_now: i64,
        weight: f64,
        out: &mut [f64],
    ) -> Result<(), EngineError> {
        if t_now < t_in {
            return Err(EngineError::BeforeEntry { t_in, t_now });
        }
        let dt = (t_now - t_in) as f64;
        let dest = self.destinations.destination_distribution(s, t_in, dt);
        for (d, pd) in dest.probs {
            let table = self.locations.get(s, d).ok_or_else(|| EngineError::MissingTable {
                from: self.topo.station(s).id.clone(),
                to: self.topo.station(d).id.clone(),
            })?;
            let w = weight * pd;
            let actions = table.actions();
            if table.step_for(dt) > table.horizon() as u64 {
                out[actions[actions.len() - 1].index()] += w;
            } else {
                for (a, p) in actions.iter().zip(table.location_distribution(dt)) {
                    out[a.index()] += w * p;
                }
            }
        }
        Ok(())
    }

    /// Probability of each action for one passenger; actions with zero
    /// probability are omitted.
    pub fn action_distribution_for_passenger(
        &self,
        s: StationIdx,
        t_in: i64,
        t_now: i64,
    ) -> Result<Vec<(ActionId, f64)>, EngineError> {
        let mut dense = vec![0.0; self.topo.catalog().len()];
        self.accumulate(s, t_in, t_now, 1.0, &mut dense)?;
        Ok(dense.into_iter().enumerate().filter(|(_, p)| *p > 0.0).map(|(k, p)| (ActionId(k as u32), p)).collect())
    }

    pub fn snapshot(&self, set: &ActivePassengerSet, t_now: i64) -> Result<CrowdednessSnapshot, EngineError> {
        let catalog = self.topo.catalog();
        let mut actions = vec![0.0; catalog.len()];
        for (_, p) in set.iter() {
            self.accumulate(p.station, p.t_in, t_now, 1.0, &mut actions)?;
        }
        let mut components = vec![0.0; catalog.components().len()];
        for (k, v) in actions.iter().enumerate() {
            components[catalog.component_of(ActionId(k as u32)).index()] += v;
        }
        Ok(CrowdednessSnapshot { t_now, active: set.len() as u64, actions, components })
    }
}

/// Replays a time-ordered event list, applying every event stamped before
/// the requested instant.
#[derive(Debug, Clone)]
pub struct Replay<'e> {
    events: &'e [TapEvent],
    next: usize,
    set: ActivePassengerSet,
    rejected: Vec<EngineError>,
}

impl<'e> Replay<'e> {
    pub fn new(n_stations: usize, events: &'e [TapEvent]) -> Self {
        Replay { events, next: 0, set: ActivePassengerSet::new(n_stations), rejected: Vec::new() }
    }

    /// Applies events with `ts < t_now`. Invalid events are recorded and skipped.
    pub fn advance_to(&mut self, t_now: i64) -> &ActivePassengerSet {
        while let Some(e) = self.events.get(self.next) {
            if e.ts() >= t_now {
                break;
            }
            if let Err(err) = self.set.apply(e) {
                self.rejected.push(err);
            }
            self.next += 1;
        }
        &self.set
    }

    pub fn active(&self) -> &ActivePassengerSet {
        &self.set
    }

    pub fn rejected(&self) -> &[EngineError] {
        &self.rejected
    }
}

/// Snapshot times from `from` to `to` inclusive every `cadence` seconds.
pub fn snapshot_times(from: i64, to: i64, cadence: i64) -> Vec<i64> {
    assert!(cadence > 0, "cadence must be positive");
    (0..).map(|k| from + k * cadence).take_while(|&t| t <= to).collect()
}

/// Snapshots of an event stream at each of `times`, which must be nondecreasing.
pub fn run_snapshots(
    engine: &CrowdEngine<'_>,
    events: &[TapEvent],
    times: &[i64],
) -> Result<(Vec<CrowdednessSnapshot>, Vec<EngineError>), EngineError> {
    let mut replay = Replay::new(engine.topology().n_stations(), events);
    let mut out = Vec::with_capacity(times.len());
    for &t in times {
        let set = replay.advance_to(t);
        out.push(engine.snapshot(set, t)?);
    }
    Ok((out, replay.rejected))
}
