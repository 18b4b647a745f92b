//! TOML schema for network topologies.
//!
//! ```toml
//! default_walk_mean = 60.0          # optional, seconds
//!
//! [[stations]]
//! id = "A"
//! x = 0.0                           # optional layout coordinates
//! y = 0.0
//!
//! [[lines]]
//! id = "purple"
//! stations = ["A", "B", "C"]
//!
//! [[segments]]
//! from = "A"
//! to = "B"
//! time = 90.0
//! line = "purple"                   # optional when unambiguous
//! id = "AB"                         # optional label
//!
//! [headways]
//! purple = 120.0
//!
//! [[transfers]]
//! station = "E"
//! from_line = "purple"
//! to_line = "blue"
//! directed = false                  # default: both directions, one walk variable
//! walk = "trans_E"                  # optional walk variable name
//!
//! [[route_overrides]]
//! from = ["W1", "W2"]               # one id or a list
//! to = "N3"
//! legs = [{ line = "blue", to = "ADM" }, { line = "red" }]
//! ```

use std::collections::{BTreeMap, HashMap, HashSet, VecDeque};

use serde::{Deserialize, Serialize};

use super::topology::{Leg, Line, LineIdx, Segment, Station, StationIdx, Topology, Transfer};
use super::NetworkError;

pub const DEFAULT_WALK_MEAN: f64 = 60.0;

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TopologyConfig {
    #[serde(default)]
    pub default_walk_mean: Option<f64>,
    #[serde(default)]
    pub stations: Vec<StationConfig>,
    #[serde(default)]
    pub lines: Vec<LineConfig>,
    #[serde(default)]
    pub segments: Vec<SegmentConfig>,
    #[serde(default)]
    pub headways: BTreeMap<String, f64>,
    #[serde(default)]
    pub transfers: Vec<TransferConfig>,
    #[serde(default)]
    pub route_overrides: Vec<OverrideConfig>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StationConfig {
    pub id: String,
    #[serde(default)]
    pub x: Option<f64>,
    #[serde(default)]
    pub y: Option<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LineConfig {
    pub id: String,
    pub stations: Vec<String>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SegmentConfig {
    pub from: String,
    pub to: String,
    pub time: f64,
    #[serde(default)]
    pub line: Option<String>,
    #[serde(default)]
    pub id: Option<String>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TransferConfig {
    pub station: String,
    pub from_line: String,
    pub to_line: String,
    #[serde(default)]
    pub directed: bool,
    #[serde(default)]
    pub walk: Option<String>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(untagged)]
pub enum OneOrMany {
    One(String),
    Many(Vec<String>),
}

impl OneOrMany {
    fn items(&self) -> Vec<&str> {
        match self {
            OneOrMany::One(s) => vec![s.as_str()],
            OneOrMany::Many(v) => v.iter().map(String::as_str).collect(),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OverrideConfig {
    pub from: OneOrMany,
    pub to: OneOrMany,
    pub legs: Vec<LegConfig>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LegConfig {
    pub line: String,
    /// Omitted on the final leg, which always ends at the destination.
    #[serde(default)]
    pub to: Option<String>,
}

impl TopologyConfig {
    pub fn from_toml(text: &str) -> Result<Self, NetworkError> {
        toml::from_str(text).map_err(|e| NetworkError::Parse(e.to_string()))
    }

    pub fn build(&self) -> Result<Topology, NetworkError> {
        if self.stations.is_empty() {
            return Err(NetworkError::Invalid("station list is empty".into()));
        }
        let default_walk_mean = self.default_walk_mean.unwrap_or(DEFAULT_WALK_MEAN);
        if !(default_walk_mean.is_finite() && default_walk_mean >= 0.0) {
            return Err(NetworkError::Invalid(format!(
                "default_walk_mean must be a nonnegative number, got {default_walk_mean}"
            )));
        }

        let mut station_ids: HashMap<&str, StationIdx> = HashMap::new();
        let mut stations = Vec::with_capacity(self.stations.len());
        for (i, s) in self.stations.iter().enumerate() {
            if s.id.is_empty() {
                return Err(NetworkError::Invalid(format!("station #{} has an empty id", i + 1)));
            }
            if station_ids.insert(&s.id, StationIdx(i as u32)).is_some() {
                return Err(NetworkError::Invalid(format!("duplicate station '{}'", s.id)));
            }
            let position = match (s.x, s.y) {
                (Some(x), Some(y)) => Some((x, y)),
                (None, None) => None,
                _ => return Err(NetworkError::Invalid(format!("station '{}' has only one of x/y", s.id))),
            };
            stations.push(Station { id: s.id.clone(), position });
        }
        let station = |id: &str, ctx: &str| {
            station_ids
                .get(id)
                .copied()
                .ok_or_else(|| NetworkError::UnknownStation { id: id.to_string(), context: ctx.to_string() })
        };

        if self.lines.is_empty() {
            return Err(NetworkError::Invalid("line list is empty".into()));
        }
        let mut line_ids: HashMap<&str, LineIdx> = HashMap::new();
        let mut lines = Vec::with_capacity(self.lines.len());
        for (j, l) in self.lines.iter().enumerate() {
            if line_ids.insert(&l.id, LineIdx(j as u32)).is_some() {
                return Err(NetworkError::Invalid(format!("duplicate line '{}'", l.id)));
            }
            if l.stations.len() < 2 {
                return Err(NetworkError::Invalid(format!("line '{}' needs at least two stations", l.id)));
            }
            let mut seen = HashSet::new();
            let mut members = Vec::with_capacity(l.stations.len());
            for sid in &l.stations {
                let s = station(sid, &format!("line '{}'", l.id))?;
                if !seen.insert(s) {
                    return Err(NetworkError::Invalid(format!("line '{}' visits '{}' twice", l.id, sid)));
                }
                members.push(s);
            }
            let headway = *self
                .headways
                .get(&l.id)
                .ok_or_else(|| NetworkError::Invalid(format!("line '{}' has no headway", l.id)))?;
            if !(headway.is_finite() && headway > 0.0) {
                return Err(NetworkError::Invalid(format!(
                    "headway of line '{}' must be positive, got {headway}",
                    l.id
                )));
            }
            lines.push(Line { id: l.id.clone(), stations: members, headway });
        }
        for name in self.headways.keys() {
            if !line_ids.contains_key(name.as_str()) {
                return Err(NetworkError::Invalid(format!("headway given for unknown line '{name}'")));
            }
        }
        let line = |id: &str, ctx: &str| {
            line_ids
                .get(id)
                .copied()
                .ok_or_else(|| NetworkError::Invalid(format!("{ctx} references unknown line '{id}'")))
        };
        let adjacent = |j: LineIdx, a: StationIdx, b: StationIdx| {
            lines[j.index()].stations.windows(2).any(|w| (w[0] == a && w[1] == b) || (w[0] == b && w[1] == a))
        };

        let mut segments: Vec<Segment> = Vec::with_capacity(self.segments.len());
        let mut seg_seen: HashSet<(LineIdx, StationIdx, StationIdx)> = HashSet::new();
        let mut seg_names: HashSet<String> = HashSet::new();
        for sc in &self.segments {
            let ctx = format!("segment {}-{}", sc.from, sc.to);
            let a = station(&sc.from, &ctx)?;
            let b = station(&sc.to, &ctx)?;
            if !(sc.time.is_finite() && sc.time > 0.0) {
                return Err(NetworkError::Invalid(format!("{ctx} has non-positive time {}", sc.time)));
            }
            let owner = match &sc.line {
                Some(lid) => {
                    let j = line(lid, &ctx)?;
                    if !adjacent(j, a, b) {
                        return Err(NetworkError::Invalid(format!("{ctx}: stations are not adjacent on line '{lid}'")));
                    }
                    j
                }
                None => {
                    let owners: Vec<LineIdx> =
                        (0..lines.len()).map(|j| LineIdx(j as u32)).filter(|&j| adjacent(j, a, b)).collect();
                    match owners.as_slice() {
                        [j] => *j,
                        [] => {
                            return Err(NetworkError::Invalid(format!("{ctx}: stations are not adjacent on any line")))
                        }
                        _ => {
                            return Err(NetworkError::Invalid(format!("{ctx}: adjacent on several lines, set `line`")))
                        }
                    }
                }
            };
            if !seg_seen.insert((owner, a.min(b), a.max(b))) {
                return Err(NetworkError::Invalid(format!("{ctx} declared twice on one line")));
            }
            let id = sc.id.clone().unwrap_or_else(|| {
                let base = format!("{}-{}", sc.from, sc.to);
                if seg_names.contains(&base) {
                    format!("{}:{}", lines[owner.index()].id, base)
                } else {
                    base
                }
            });
            if !seg_names.insert(id.clone()) {
                return Err(NetworkError::Invalid(format!("duplicate segment id '{id}'")));
            }
            segments.push(Segment { id, line: owner, a, b, time: sc.time });
        }
        for (j, l) in lines.iter().enumerate() {
            for w in l.stations.windows(2) {
                if !seg_seen.contains(&(LineIdx(j as u32), w[0].min(w[1]), w[0].max(w[1]))) {
                    return Err(NetworkError::Invalid(format!(
                        "line '{}' has no segment between '{}' and '{}'",
                        l.id,
                        stations[w[0].index()].id,
                        stations[w[1].index()].id
                    )));
                }
            }
        }

        let mut transfers = Vec::with_capacity(self.transfers.len());
        for tc in &self.transfers {
            let ctx = format!("transfer at '{}'", tc.station);
            let s = station(&tc.station, &ctx)?;
            let from = line(&tc.from_line, &ctx)?;
            let to = line(&tc.to_line, &ctx)?;
            if from == to {
                return Err(NetworkError::Invalid(format!("{ctx}: from_line equals to_line")));
            }
            for j in [from, to] {
                if !lines[j.index()].stations.contains(&s) {
                    return Err(NetworkError::Invalid(format!(
                        "{ctx}: station is not on line '{}'",
                        lines[j.index()].id
                    )));
                }
            }
            let walk = tc.walk.clone().unwrap_or_else(|| {
                if tc.directed {
                    format!("trans:{}:{}>{}", tc.station, tc.from_line, tc.to_line)
                } else {
                    format!("trans:{}:{}<>{}", tc.station, tc.from_line, tc.to_line)
                }
            });
            let t = Transfer { station: s, from_line: from, to_line: to, directed: tc.directed, walk };
            if transfers.iter().any(|o: &Transfer| o.allows(s, from, to) || (!t.directed && o.allows(s, to, from))) {
                return Err(NetworkError::Invalid(format!("{ctx}: duplicate transfer direction")));
            }
            transfers.push(t);
        }

        let mut overrides = HashMap::new();
        for oc in &self.route_overrides {
            let origins = oc.from.items();
            let dests = oc.to.items();
            for o in &origins {
                for d in &dests {
                    let ctx = format!("route override {o}->{d}");
                    let s = station(o, &ctx)?;
                    let t = station(d, &ctx)?;
                    if s == t {
                        return Err(NetworkError::Invalid(format!("{ctx}: origin equals destination")));
                    }
                    let legs = resolve_legs(&oc.legs, s, t, &lines, &transfers, &ctx, &line, &station)?;
                    if overrides.insert((s, t), legs).is_some() {
                        return Err(NetworkError::Invalid(format!("{ctx} declared twice")));
                    }
                }
            }
        }

        let topo = Topology::assemble(stations, lines, segments, transfers, overrides, default_walk_mean);
        check_connected(&topo)?;
        Ok(topo)
    }
}

#[allow(clippy::too_many_arguments)]
fn resolve_legs(
    legs: &[LegConfig],
    origin: StationIdx,
    dest: StationIdx,
    lines: &[Line],
    transfers: &[Transfer],
    ctx: &str,
    line: &dyn Fn(&str, &str) -> Result<LineIdx, NetworkError>,
    station: &dyn Fn(&str, &str) -> Result<StationIdx, NetworkError>,
) -> Result<Vec<Leg>, NetworkError> {
    if legs.is_empty() {
        return Err(NetworkError::Invalid(format!("{ctx}: no legs")));
    }
    let mut out = Vec::with_capacity(legs.len());
    let mut at = origin;
    for (k, lc) in legs.iter().enumerate() {
        let j = line(&lc.line, ctx)?;
        let last = k + 1 == legs.len();
        let to = match (&lc.to, last) {
            (Some(id), _) => station(id, ctx)?,
            (None, true) => dest,
            (None, false) => return Err(NetworkError::Invalid(format!("{ctx}: leg {} needs `to`", k + 1))),
        };
        if last && to != dest {
            return Err(NetworkError::Invalid(format!("{ctx}: final leg does not end at the destination")));
        }
        let l = &lines[j.index()];
        if l.position_of(at).is_none() || l.position_of(to).is_none() {
            return Err(NetworkError::Invalid(format!(
                "{ctx}: leg {} on line '{}' does not serve both endpoints",
                k + 1,
                l.id
            )));
        }
        if at == to {
            return Err(NetworkError::Invalid(format!("{ctx}: leg {} has zero length", k + 1)));
        }
        if let Some(prev) = out.last() {
            let prev: &Leg = prev;
            if !transfers.iter().any(|t| t.allows(at, prev.line, j)) {
                return Err(NetworkError::Invalid(format!(
                    "{ctx}: no transfer from '{}' to '{}' at the end of leg {}",
                    lines[prev.line.index()].id,
                    l.id,
                    k
                )));
            }
        }
        out.push(Leg { line: j, to });
        at = to;
    }
    Ok(out)
}

/// Every ordered station pair must be joined by a sequence of line rides and
/// permitted transfers.
fn check_connected(topo: &Topology) -> Result<(), NetworkError> {
    let n_lines = topo.lines.len();
    // reachability over (line) nodes via transfers, then stations via lines
    let mut line_adj = vec![Vec::new(); n_lines];
    for t in &topo.transfers {
        line_adj[t.from_line.index()].push(t.to_line);
        if !t.directed {
            line_adj[t.to_line.index()].push(t.from_line);
        }
    }
    for s in 0..topo.stations.len() {
        let s = StationIdx(s as u32);
        let mut seen = vec![false; n_lines];
        let mut queue: VecDeque<LineIdx> = topo.lines_at(s).collect();
        for j in &queue {
            seen[j.index()] = true;
        }
        while let Some(j) = queue.pop_front() {
            for &k in &line_adj[j.index()] {
                if !seen[k.index()] {
                    seen[k.index()] = true;
                    queue.push_back(k);
                }
            }
        }
        for (t, st) in topo.stations.iter().enumerate() {
            let reached =
                topo.lines.iter().enumerate().any(|(j, l)| seen[j] && l.stations.contains(&StationIdx(t as u32)));
            if !reached {
                return Err(NetworkError::Unreachable { from: topo.stations[s.index()].id.clone(), to: st.id.clone() });
            }
        }
    }
    Ok(())
}
