use std::collections::HashMap;
use std::fmt;

use sha2::{Digest, Sha256};

macro_rules! index_type {
    ($(#[$meta:meta])* $name:ident) => {
        $(#[$meta])*
        #[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
        pub struct $name(pub u32);

        impl $name {
            #[inline]
            pub fn index(self) -> usize {
                self.0 as usize
            }
        }
    };
}

index_type!(
    /// Position of a station in [`Topology::stations`].
    StationIdx
);
index_type!(
    /// Position of a line in [`Topology::lines`].
    LineIdx
);
index_type!(
    /// Position of a railway segment in [`Topology::segments`].
    SegmentIdx
);
index_type!(
    /// Dense id of an action in the topology's [`ActionCatalog`].
    ActionId
);
index_type!(
    /// Dense id of a network component (station, segment or transfer point).
    ComponentId
);

#[derive(Debug, Clone, PartialEq)]
pub struct Station {
    pub id: String,
    pub position: Option<(f64, f64)>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Line {
    pub id: String,
    pub stations: Vec<StationIdx>,
    /// Train inter-arrival time in seconds.
    pub headway: f64,
}

impl Line {
    pub fn position_of(&self, station: StationIdx) -> Option<usize> {
        self.stations.iter().position(|&s| s == station)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Segment {
    pub id: String,
    pub line: LineIdx,
    pub a: StationIdx,
    pub b: StationIdx,
    /// In-vehicle time including the dwell, seconds.
    pub time: f64,
}

/// A permitted line change. Undirected transfers allow both directions and
/// share one walk variable.
#[derive(Debug, Clone, PartialEq)]
pub struct Transfer {
    pub station: StationIdx,
    pub from_line: LineIdx,
    pub to_line: LineIdx,
    pub directed: bool,
    pub walk: String,
}

impl Transfer {
    pub fn allows(&self, station: StationIdx, from: LineIdx, to: LineIdx) -> bool {
        self.station == station
            && ((self.from_line == from && self.to_line == to)
                || (!self.directed && self.from_line == to && self.to_line == from))
    }
}

/// One ride in an explicit route: board `line` and ride it to `to`.
#[derive(Debug, Clone, PartialEq)]
pub struct Leg {
    pub line: LineIdx,
    pub to: StationIdx,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Action {
    Enter { station: StationIdx, line: LineIdx },
    Move { segment: SegmentIdx },
    Transfer { station: StationIdx, from: LineIdx, to: LineIdx },
    Exit { station: StationIdx, line: LineIdx },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Component {
    Station(StationIdx),
    Segment(SegmentIdx),
    /// The transfer area of a station, reported apart from the station itself.
    TransferPoint(StationIdx),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ComponentKind {
    Station,
    Segment,
    Transfer,
}

impl ComponentKind {
    pub fn as_str(self) -> &'static str {
        match self {
            ComponentKind::Station => "station",
            ComponentKind::Segment => "segment",
            ComponentKind::Transfer => "transfer",
        }
    }
}

impl fmt::Display for ComponentKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Dense numbering of every action and component of a topology.
#[derive(Debug, Clone)]
pub struct ActionCatalog {
    actions: Vec<Action>,
    action_ids: HashMap<Action, ActionId>,
    action_component: Vec<ComponentId>,
    components: Vec<Component>,
    component_ids: HashMap<Component, ComponentId>,
}

impl ActionCatalog {
    fn build(lines: &[Line], segments: &[Segment], transfers: &[Transfer], n_stations: usize) -> Self {
        let mut components = Vec::new();
        for s in 0..n_stations {
            components.push(Component::Station(StationIdx(s as u32)));
        }
        for g in 0..segments.len() {
            components.push(Component::Segment(SegmentIdx(g as u32)));
        }
        let mut xfer_stations: Vec<StationIdx> = transfers.iter().map(|t| t.station).collect();
        xfer_stations.sort();
        xfer_stations.dedup();
        components.extend(xfer_stations.into_iter().map(Component::TransferPoint));
        let component_ids: HashMap<Component, ComponentId> =
            components.iter().enumerate().map(|(i, c)| (*c, ComponentId(i as u32))).collect();

        let mut actions = Vec::new();
        for (j, line) in lines.iter().enumerate() {
            let line_idx = LineIdx(j as u32);
            for &station in &line.stations {
                actions.push(Action::Enter { station, line: line_idx });
                actions.push(Action::Exit { station, line: line_idx });
            }
        }
        for g in 0..segments.len() {
            actions.push(Action::Move { segment: SegmentIdx(g as u32) });
        }
        for t in transfers {
            actions.push(Action::Transfer { station: t.station, from: t.from_line, to: t.to_line });
            if !t.directed {
                actions.push(Action::Transfer { station: t.station, from: t.to_line, to: t.from_line });
            }
        }
        actions.sort();
        actions.dedup();
        let action_ids = actions.iter().enumerate().map(|(i, a)| (*a, ActionId(i as u32))).collect();
        let action_component = actions
            .iter()
            .map(|a| {
                let c = match *a {
                    Action::Enter { station, .. } | Action::Exit { station, .. } => Component::Station(station),
                    Action::Move { segment } => Component::Segment(segment),
                    Action::Transfer { station, .. } => Component::TransferPoint(station),
                };
                component_ids[&c]
            })
            .collect();
        ActionCatalog { actions, action_ids, action_component, components, component_ids }
    }

    pub fn len(&self) -> usize {
        self.actions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.actions.is_empty()
    }

    pub fn id_of(&self, action: &Action) -> Option<ActionId> {
        self.action_ids.get(action).copied()
    }

    pub fn action(&self, id: ActionId) -> Action {
        self.actions[id.index()]
    }

    pub fn actions(&self) -> &[Action] {
        &self.actions
    }

    pub fn component_of(&self, id: ActionId) -> ComponentId {
        self.action_component[id.index()]
    }

    pub fn components(&self) -> &[Component] {
        &self.components
    }

    pub fn component(&self, id: ComponentId) -> Component {
        self.components[id.index()]
    }

    pub fn component_id(&self, c: &Component) -> Option<ComponentId> {
        self.component_ids.get(c).copied()
    }
}

/// A validated rail network. Built through [`super::load_topology`] or
/// [`super::TopologyConfig::build`].
#[derive(Debug, Clone)]
pub struct Topology {
    pub(crate) stations: Vec<Station>,
    pub(crate) lines: Vec<Line>,
    pub(crate) segments: Vec<Segment>,
    pub(crate) transfers: Vec<Transfer>,
    pub(crate) overrides: HashMap<(StationIdx, StationIdx), Vec<Leg>>,
    pub(crate) default_walk_mean: f64,
    pub(crate) station_ids: HashMap<String, StationIdx>,
    pub(crate) line_ids: HashMap<String, LineIdx>,
    /// (line, lower station, higher station) -> segment
    pub(crate) segment_lookup: HashMap<(LineIdx, StationIdx, StationIdx), SegmentIdx>,
    pub(crate) catalog: ActionCatalog,
    /// Rank of each line when ordered by id, used for route tie-breaking.
    pub(crate) line_rank: Vec<u32>,
}

impl Topology {
    #[allow(clippy::too_many_arguments)]
    pub(crate) fn assemble(
        stations: Vec<Station>,
        lines: Vec<Line>,
        segments: Vec<Segment>,
        transfers: Vec<Transfer>,
        overrides: HashMap<(StationIdx, StationIdx), Vec<Leg>>,
        default_walk_mean: f64,
    ) -> Self {
        let station_ids = stations.iter().enumerate().map(|(i, s)| (s.id.clone(), StationIdx(i as u32))).collect();
        let line_ids = lines.iter().enumerate().map(|(i, l)| (l.id.clone(), LineIdx(i as u32))).collect();
        let segment_lookup = segments
            .iter()
            .enumerate()
            .map(|(g, s)| ((s.line, s.a.min(s.b), s.a.max(s.b)), SegmentIdx(g as u32)))
            .collect();
        let catalog = ActionCatalog::build(&lines, &segments, &transfers, stations.len());
        let mut order: Vec<usize> = (0..lines.len()).collect();
        order.sort_by(|&a, &b| lines[a].id.cmp(&lines[b].id));
        let mut line_rank = vec![0; lines.len()];
        for (rank, j) in order.into_iter().enumerate() {
            line_rank[j] = rank as u32;
        }
        Topology {
            stations,
            lines,
            segments,
            transfers,
            overrides,
            default_walk_mean,
            station_ids,
            line_ids,
            segment_lookup,
            catalog,
            line_rank,
        }
    }

    pub fn stations(&self) -> &[Station] {
        &self.stations
    }

    pub fn n_stations(&self) -> usize {
        self.stations.len()
    }

    pub fn station(&self, s: StationIdx) -> &Station {
        &self.stations[s.index()]
    }

    pub fn station_idx(&self, id: &str) -> Option<StationIdx> {
        self.station_ids.get(id).copied()
    }

    pub fn lines(&self) -> &[Line] {
        &self.lines
    }

    pub fn line(&self, j: LineIdx) -> &Line {
        &self.lines[j.index()]
    }

    pub fn line_idx(&self, id: &str) -> Option<LineIdx> {
        self.line_ids.get(id).copied()
    }

    pub fn headway(&self, j: LineIdx) -> f64 {
        self.lines[j.index()].headway
    }

    pub fn segments(&self) -> &[Segment] {
        &self.segments
    }

    pub fn segment(&self, g: SegmentIdx) -> &Segment {
        &self.segments[g.index()]
    }

    pub fn segment_between(&self, line: LineIdx, a: StationIdx, b: StationIdx) -> Option<SegmentIdx> {
        self.segment_lookup.get(&(line, a.min(b), a.max(b))).copied()
    }

    pub fn transfers(&self) -> &[Transfer] {
        &self.transfers
    }

    pub fn transfer_allowed(&self, station: StationIdx, from: LineIdx, to: LineIdx) -> bool {
        self.transfers.iter().any(|t| t.allows(station, from, to))
    }

    pub fn route_override(&self, from: StationIdx, to: StationIdx) -> Option<&[Leg]> {
        self.overrides.get(&(from, to)).map(Vec::as_slice)
    }

    pub fn n_overrides(&self) -> usize {
        self.overrides.len()
    }

    /// Walk-time mean assumed for routing before any estimate exists.
    pub fn default_walk_mean(&self) -> f64 {
        self.default_walk_mean
    }

    pub fn lines_at(&self, station: StationIdx) -> impl Iterator<Item = LineIdx> + '_ {
        self.lines
            .iter()
            .enumerate()
            .filter(move |(_, l)| l.stations.contains(&station))
            .map(|(j, _)| LineIdx(j as u32))
    }

    pub fn catalog(&self) -> &ActionCatalog {
        &self.catalog
    }

    pub fn has_layout(&self) -> bool {
        self.stations.iter().all(|s| s.position.is_some())
    }

    pub fn component_name(&self, c: Component) -> String {
        match c {
            Component::Station(s) => self.station(s).id.clone(),
            Component::Segment(g) => self.segment(g).id.clone(),
            Component::TransferPoint(s) => format!("{}/Trans", self.station(s).id),
        }
    }

    pub fn component_kind(c: Component) -> ComponentKind {
        match c {
            Component::Station(_) => ComponentKind::Station,
            Component::Segment(_) => ComponentKind::Segment,
            Component::TransferPoint(_) => ComponentKind::Transfer,
        }
    }

    pub fn describe_action(&self, a: &Action) -> String {
        match *a {
            Action::Enter { station, line } => {
                format!("enter {}@{}", self.station(station).id, self.line(line).id)
            }
            Action::Move { segment } => format!("move {}", self.segment(segment).id),
            Action::Transfer { station, from, to } => {
                format!("transfer {} {}>{}", self.station(station).id, self.line(from).id, self.line(to).id)
            }
            Action::Exit { station, line } => {
                format!("exit {}@{}", self.station(station).id, self.line(line).id)
            }
        }
    }

    /// Content hash of the validated network, independent of config formatting.
    pub fn fingerprint(&self) -> [u8; 32] {
        let mut h = Sha256::new();
        let put_str = |h: &mut Sha256, s: &str| {
            h.update((s.len() as u64).to_le_bytes());
            h.update(s.as_bytes());
        };
        h.update((self.stations.len() as u64).to_le_bytes());
        for s in &self.stations {
            put_str(&mut h, &s.id);
        }
        h.update((self.lines.len() as u64).to_le_bytes());
        for l in &self.lines {
            put_str(&mut h, &l.id);
            h.update(l.headway.to_le_bytes());
            h.update((l.stations.len() as u64).to_le_bytes());
            for s in &l.stations {
                h.update(s.0.to_le_bytes());
            }
        }
        h.update((self.segments.len() as u64).to_le_bytes());
        for g in &self.segments {
            put_str(&mut h, &g.id);
            h.update(g.line.0.to_le_bytes());
            h.update(g.a.0.to_le_bytes());
            h.update(g.b.0.to_le_bytes());
            h.update(g.time.to_le_bytes());
        }
        h.update((self.transfers.len() as u64).to_le_bytes());
        for t in &self.transfers {
            h.update(t.station.0.to_le_bytes());
            h.update(t.from_line.0.to_le_bytes());
            h.update(t.to_line.0.to_le_bytes());
            h.update([t.directed as u8]);
            put_str(&mut h, &t.walk);
        }
        let mut keys: Vec<_> = self.overrides.keys().copied().collect();
        keys.sort();
        h.update((keys.len() as u64).to_le_bytes());
        for k in keys {
            h.update(k.0 .0.to_le_bytes());
            h.update(k.1 .0.to_le_bytes());
            for leg in &self.overrides[&k] {
                h.update(leg.line.0.to_le_bytes());
                h.update(leg.to.0.to_le_bytes());
            }
        }
        h.update(self.default_walk_mean.to_le_bytes());
        h.finalize().into()
    }
}
