use std::collections::HashMap;

use super::topology::{Action, LineIdx, StationIdx, Topology};

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum WalkKind {
    /// Gate-to-platform walk of a line at a station; entry and exit share it.
    Platform { line: LineIdx, station: StationIdx },
    /// Platform-to-platform walk of one or more transfer directions.
    Transfer { name: String },
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct WalkVariable {
    pub id: String,
    pub kind: WalkKind,
}

/// Ordered list of every walk-time variable of a network.
///
/// Platform variables come first, line by line in station order, followed by
/// transfer variables in declaration order.
#[derive(Debug, Clone, PartialEq)]
pub struct WalkVariableIndex {
    vars: Vec<WalkVariable>,
    platform: HashMap<(LineIdx, StationIdx), usize>,
    transfer: HashMap<(StationIdx, LineIdx, LineIdx), usize>,
    by_id: HashMap<String, usize>,
}

impl WalkVariableIndex {
    pub fn len(&self) -> usize {
        self.vars.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vars.is_empty()
    }

    pub fn vars(&self) -> &[WalkVariable] {
        &self.vars
    }

    pub fn get(&self, l: usize) -> &WalkVariable {
        &self.vars[l]
    }

    pub fn position(&self, id: &str) -> Option<usize> {
        self.by_id.get(id).copied()
    }

    pub fn platform(&self, line: LineIdx, station: StationIdx) -> Option<usize> {
        self.platform.get(&(line, station)).copied()
    }

    /// Walk variable of an action, `None` for moves.
    pub fn resolve(&self, action: &Action) -> Option<usize> {
        match *action {
            Action::Enter { station, line } | Action::Exit { station, line } => self.platform(line, station),
            Action::Transfer { station, from, to } => self.transfer.get(&(station, from, to)).copied(),
            Action::Move { .. } => None,
        }
    }
}

pub fn enumerate_walk_variables(topo: &Topology) -> WalkVariableIndex {
    let mut vars = Vec::new();
    let mut platform = HashMap::new();
    let mut transfer = HashMap::new();
    let mut by_id = HashMap::new();
    for (j, line) in topo.lines().iter().enumerate() {
        for &s in &line.stations {
            let id = format!("{}:{}", line.id, topo.station(s).id);
            let l = vars.len();
            platform.insert((LineIdx(j as u32), s), l);
            by_id.insert(id.clone(), l);
            vars.push(WalkVariable { id, kind: WalkKind::Platform { line: LineIdx(j as u32), station: s } });
        }
    }
    for t in topo.transfers() {
        let l = match by_id.get(&t.walk) {
            Some(&l) => l,
            None => {
                let l = vars.len();
                by_id.insert(t.walk.clone(), l);
                vars.push(WalkVariable { id: t.walk.clone(), kind: WalkKind::Transfer { name: t.walk.clone() } });
                l
            }
        };
        transfer.insert((t.station, t.from_line, t.to_line), l);
        if !t.directed {
            transfer.insert((t.station, t.to_line, t.from_line), l);
        }
    }
    WalkVariableIndex { vars, platform, transfer, by_id }
}
