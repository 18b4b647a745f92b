use std::cmp::Reverse;
use std::collections::BinaryHeap;

use super::topology::{Action, Leg, LineIdx, SegmentIdx, StationIdx, Topology};
use super::walk::{enumerate_walk_variables, WalkVariableIndex};
use super::NetworkError;

#[derive(Debug, Clone, PartialEq)]
pub struct Route {
    pub origin: StationIdx,
    pub destination: StationIdx,
    pub entry_line: LineIdx,
    pub exit_line: LineIdx,
    pub actions: Vec<Action>,
}

impl Route {
    pub fn len(&self) -> usize {
        self.actions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.actions.is_empty()
    }

    pub fn segments(&self) -> impl Iterator<Item = SegmentIdx> + '_ {
        self.actions.iter().filter_map(|a| match a {
            Action::Move { segment } => Some(*segment),
            _ => None,
        })
    }

    /// (station, from line, to line) for each transfer, in travel order.
    pub fn transfers(&self) -> impl Iterator<Item = (StationIdx, LineIdx, LineIdx)> + '_ {
        self.actions.iter().filter_map(|a| match a {
            Action::Transfer { station, from, to } => Some((*station, *from, *to)),
            _ => None,
        })
    }

    pub fn n_transfers(&self) -> usize {
        self.transfers().count()
    }

    /// Expected door-to-door time given walk-time means indexed like `walks`.
    pub fn expected_time(&self, topo: &Topology, walks: &WalkVariableIndex, means: &[f64]) -> f64 {
        self.actions
            .iter()
            .map(|a| match *a {
                Action::Enter { line, .. } => means[walks.resolve(a).unwrap()] + topo.headway(line) / 2.0,
                Action::Move { segment } => topo.segment(segment).time,
                Action::Transfer { to, .. } => means[walks.resolve(a).unwrap()] + topo.headway(to) / 2.0,
                Action::Exit { .. } => means[walks.resolve(a).unwrap()],
            })
            .sum()
    }
}

/// Lexicographic route cost: time first, then fewer transfers, then the
/// smallest line-id sequence, then the smallest transfer-station sequence.
/// Each key is preserved under extension by a common suffix, so label-setting
/// search remains exact.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord)]
struct Cost {
    micros: i64,
    transfers: u32,
    line_ranks: Vec<u32>,
    transfer_stations: Vec<u32>,
}

fn micros(seconds: f64) -> i64 {
    (seconds * 1e6).round() as i64
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Node {
    Source,
    Platform(StationIdx, LineIdx),
}

/// Minimum expected-time routing over the line-expanded graph whose nodes are
/// (station, line) pairs.
pub struct Router<'a> {
    topo: &'a Topology,
    walks: WalkVariableIndex,
    means: Vec<f64>,
    node_of: Vec<Vec<Option<usize>>>,
    nodes: Vec<(StationIdx, LineIdx)>,
}

impl<'a> Router<'a> {
    /// Router using the topology's default walk mean for every variable.
    pub fn with_default_means(topo: &'a Topology) -> Self {
        let walks = enumerate_walk_variables(topo);
        let means = vec![topo.default_walk_mean(); walks.len()];
        Self::build(topo, walks, means)
    }

    pub fn with_means(topo: &'a Topology, means: &[f64]) -> Result<Self, NetworkError> {
        let walks = enumerate_walk_variables(topo);
        if means.len() != walks.len() {
            return Err(NetworkError::Invalid(format!("expected {} walk means, got {}", walks.len(), means.len())));
        }
        Ok(Self::build(topo, walks, means.to_vec()))
    }

    fn build(topo: &'a Topology, walks: WalkVariableIndex, means: Vec<f64>) -> Self {
        let mut node_of = vec![vec![None; topo.lines().len()]; topo.n_stations()];
        let mut nodes = Vec::new();
        for (j, line) in topo.lines().iter().enumerate() {
            for &s in &line.stations {
                node_of[s.index()][j] = Some(nodes.len());
                nodes.push((s, LineIdx(j as u32)));
            }
        }
        Router { topo, walks, means, node_of, nodes }
    }

    pub fn walks(&self) -> &WalkVariableIndex {
        &self.walks
    }

    pub fn means(&self) -> &[f64] {
        &self.means
    }

    pub fn route(&self, from: StationIdx, to: StationIdx) -> Result<Route, NetworkError> {
        let n = self.topo.n_stations();
        if from.index() >= n || to.index() >= n {
            return Err(NetworkError::Invalid("station index out of range".into()));
        }
        if from == to {
            return Err(NetworkError::SameStation(self.topo.station(from).id.clone()));
        }
        if let Some(legs) = self.topo.route_override(from, to) {
            return Ok(expand_legs(self.topo, from, to, legs));
        }
        self.shortest(from, to)
    }

    fn walk_mean(&self, a: &Action) -> f64 {
        self.means[self.walks.resolve(a).expect("walk variable for action")]
    }

    fn shortest(&self, from: StationIdx, to: StationIdx) -> Result<Route, NetworkError> {
        let topo = self.topo;
        let n_nodes = self.nodes.len();
        let sink = n_nodes;
        let mut best: Vec<Option<Cost>> = vec![None; n_nodes + 1];
        let mut pred: Vec<Option<Node>> = vec![None; n_nodes + 1];
        let mut done = vec![false; n_nodes + 1];
        let mut heap = BinaryHeap::new();

        let relax = |best: &mut Vec<Option<Cost>>,
                     pred: &mut Vec<Option<Node>>,
                     heap: &mut BinaryHeap<Reverse<(Cost, usize)>>,
                     node: usize,
                     cost: Cost,
                     via: Node| {
            if best[node].as_ref().is_none_or(|b| cost < *b) {
                best[node] = Some(cost.clone());
                pred[node] = Some(via);
                heap.push(Reverse((cost, node)));
            }
        };

        for j in topo.lines_at(from) {
            let enter = Action::Enter { station: from, line: j };
            let t = self.walk_mean(&enter) + topo.headway(j) / 2.0;
            let cost = Cost {
                micros: micros(t),
                transfers: 0,
                line_ranks: vec![topo.line_rank[j.index()]],
                transfer_stations: vec![],
            };
            let node = self.node_of[from.index()][j.index()].unwrap();
            relax(&mut best, &mut pred, &mut heap, node, cost, Node::Source);
        }

        while let Some(Reverse((cost, u))) = heap.pop() {
            if done[u] || best[u].as_ref() != Some(&cost) {
                continue;
            }
            done[u] = true;
            if u == sink {
                break;
            }
            let (s, j) = self.nodes[u];
            let line = topo.line(j);
            let pos = line.position_of(s).unwrap();
            let mut neighbours = Vec::with_capacity(2);
            if pos > 0 {
                neighbours.push(line.stations[pos - 1]);
            }
            if pos + 1 < line.stations.len() {
                neighbours.push(line.stations[pos + 1]);
            }
            for nb in neighbours {
                let g = topo.segment_between(j, s, nb).unwrap();
                let mut c = cost.clone();
                c.micros += micros(topo.segment(g).time);
                let v = self.node_of[nb.index()][j.index()].unwrap();
                relax(&mut best, &mut pred, &mut heap, v, c, Node::Platform(s, j));
            }
            for k in topo.lines_at(s) {
                if k == j || !topo.transfer_allowed(s, j, k) {
                    continue;
                }
                let xfer = Action::Transfer { station: s, from: j, to: k };
                let mut c = cost.clone();
                c.micros += micros(self.walk_mean(&xfer) + topo.headway(k) / 2.0);
                c.transfers += 1;
                c.line_ranks.push(topo.line_rank[k.index()]);
                c.transfer_stations.push(s.0);
                let v = self.node_of[s.index()][k.index()].unwrap();
                relax(&mut best, &mut pred, &mut heap, v, c, Node::Platform(s, j));
            }
            if s == to {
                let exit = Action::Exit { station: s, line: j };
                let mut c = cost.clone();
                c.micros += micros(self.walk_mean(&exit));
                relax(&mut best, &mut pred, &mut heap, sink, c, Node::Platform(s, j));
            }
        }

        if !done[sink] {
            return Err(NetworkError::Unreachable {
                from: topo.station(from).id.clone(),
                to: topo.station(to).id.clone(),
            });
        }

        // walk predecessors back to the source
        let mut path: Vec<(StationIdx, LineIdx)> = Vec::new();
        let mut cur = pred[sink];
        while let Some(Node::Platform(s, j)) = cur {
            path.push((s, j));
            cur = pred[self.node_of[s.index()][j.index()].unwrap()];
        }
        path.reverse();

        let (first_s, first_j) = path[0];
        let (last_s, last_j) = *path.last().unwrap();
        let mut actions = vec![Action::Enter { station: first_s, line: first_j }];
        for w in path.windows(2) {
            let ((s0, j0), (s1, j1)) = (w[0], w[1]);
            if j0 == j1 {
                let segment = topo.segment_between(j0, s0, s1).unwrap();
                actions.push(Action::Move { segment });
            } else {
                actions.push(Action::Transfer { station: s0, from: j0, to: j1 });
            }
        }
        actions.push(Action::Exit { station: last_s, line: last_j });
        Ok(Route { origin: from, destination: to, entry_line: first_j, exit_line: last_j, actions })
    }

    /// Routes for every ordered pair of distinct stations.
    pub fn all_routes(&self) -> Result<RouteSet, NetworkError> {
        let n = self.topo.n_stations();
        let mut routes = Vec::with_capacity(n * n);
        for s in 0..n {
            for t in 0..n {
                routes.push(if s == t { None } else { Some(self.route(StationIdx(s as u32), StationIdx(t as u32))?) });
            }
        }
        Ok(RouteSet { n_stations: n, routes })
    }
}

fn expand_legs(topo: &Topology, from: StationIdx, to: StationIdx, legs: &[Leg]) -> Route {
    let mut actions = vec![Action::Enter { station: from, line: legs[0].line }];
    let mut at = from;
    let mut prev_line: Option<LineIdx> = None;
    for leg in legs {
        if let Some(p) = prev_line {
            actions.push(Action::Transfer { station: at, from: p, to: leg.line });
        }
        let line = topo.line(leg.line);
        let a = line.position_of(at).unwrap();
        let b = line.position_of(leg.to).unwrap();
        let hops: Vec<usize> = if a < b { (a..b).collect() } else { (b + 1..=a).rev().collect() };
        for p in hops {
            let (x, y) = if a < b { (p, p + 1) } else { (p, p - 1) };
            let segment = topo.segment_between(leg.line, line.stations[x], line.stations[y]).unwrap();
            actions.push(Action::Move { segment });
        }
        at = leg.to;
        prev_line = Some(leg.line);
    }
    let exit_line = legs.last().unwrap().line;
    actions.push(Action::Exit { station: to, line: exit_line });
    Route { origin: from, destination: to, entry_line: legs[0].line, exit_line, actions }
}

/// Minimum-time route of a single pair using the topology's default walk means.
pub fn compute_route(topo: &Topology, from: StationIdx, to: StationIdx) -> Result<Route, NetworkError> {
    Router::with_default_means(topo).route(from, to)
}

/// Routes of all ordered station pairs, indexed `origin * I + destination`.
#[derive(Debug, Clone, PartialEq)]
pub struct RouteSet {
    n_stations: usize,
    routes: Vec<Option<Route>>,
}

impl RouteSet {
    pub fn from_routes(n_stations: usize, routes: Vec<Route>) -> Self {
        let mut slots = vec![None; n_stations * n_stations];
        for r in routes {
            let k = r.origin.index() * n_stations + r.destination.index();
            slots[k] = Some(r);
        }
        RouteSet { n_stations, routes: slots }
    }

    pub fn n_stations(&self) -> usize {
        self.n_stations
    }

    pub fn get(&self, from: StationIdx, to: StationIdx) -> Option<&Route> {
        self.routes.get(from.index() * self.n_stations + to.index())?.as_ref()
    }

    pub fn iter(&self) -> impl Iterator<Item = &Route> {
        self.routes.iter().flatten()
    }

    pub fn len(&self) -> usize {
        self.iter().count()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}
