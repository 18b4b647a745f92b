//! Monte Carlo location tables: for each route, the probability that a
//! passenger is performing each of its actions a given time after entry.
//!
//! A table simulates `i_max` trips along a route and, at every grid time
//! `rδ` for `r = 1..=R`, counts which action each trip is performing. An
//! action `c` holds step `r` when `cum[c-1] < rδ ≤ cum[c]`; once `rδ` passes
//! the trip's total duration the trip counts as exited. Counts are
//! accumulated with per-trip difference arrays, so a build costs
//! `O(i_max · m + m · R)`.

use rayon::prelude::*;

use crate::estimator::{moment_row, ActionTimeModel, EstimateError};
use crate::network::{ActionId, Route, RouteSet, StationIdx, Topology};
use crate::sampling::{rng_for, ActionSampler, SampleError, WaitingMode};

pub const DEFAULT_DELTA: f64 = 15.0;
pub const DEFAULT_IMAX: u32 = 20_000;
/// Upper bound on `R · δ`, seconds.
pub const MAX_HORIZON_SECONDS: f64 = 3.0 * 3600.0;
/// Standard deviations of trip duration covered by the automatic horizon.
pub const HORIZON_SIGMAS: f64 = 6.0;

#[derive(Debug, thiserror::Error)]
pub enum TableError {
    #[error("invalid table parameters: {0}")]
    Params(String),
    #[error(transparent)]
    Sample(#[from] SampleError),
    #[error(transparent)]
    Estimate(#[from] EstimateError),
    #[error("route action {0} is not in the network catalog")]
    UnknownAction(String),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TableParams {
    pub delta: f64,
    pub i_max: u32,
    /// Fixed number of grid steps; `None` sizes each route from its moments.
    pub horizon: Option<u32>,
    pub seed: u64,
    pub waiting: WaitingMode,
}

impl Default for TableParams {
    fn default() -> Self {
        TableParams { delta: DEFAULT_DELTA, i_max: DEFAULT_IMAX, horizon: None, seed: 0, waiting: WaitingMode::Uniform }
    }
}

impl TableParams {
    fn validate(&self) -> Result<(), TableError> {
        if !(self.delta.is_finite() && self.delta > 0.0) {
            return Err(TableError::Params(format!("grid step must be positive, got {}", self.delta)));
        }
        if self.i_max == 0 {
            return Err(TableError::Params("iteration count must be at least 1".into()));
        }
        if self.horizon == Some(0) {
            return Err(TableError::Params("horizon must be at least one step".into()));
        }
        Ok(())
    }
}

/// Number of grid steps needed to cover a route: mean plus six standard
/// deviations of its duration, at most three hours, at least one step.
pub fn horizon_for(topo: &Topology, route: &Route, model: &ActionTimeModel, delta: f64) -> Result<u32, TableError> {
    let row = moment_row(topo, route, model.walks())?;
    let mean = row.predict_mean(&model.means());
    let sd = row.predict_variance(&model.variances()).max(0.0).sqrt();
    let span = (mean + HORIZON_SIGMAS * sd).min(MAX_HORIZON_SECONDS);
    let cap = (MAX_HORIZON_SECONDS / delta).floor().max(1.0);
    Ok((span / delta).ceil().clamp(1.0, cap) as u32)
}

/// Occupancy counts and location probabilities of one route.
#[derive(Debug, Clone, PartialEq)]
pub struct LocationTable {
    origin: StationIdx,
    destination: StationIdx,
    actions: Vec<ActionId>,
    delta: f64,
    horizon: u32,
    i_max: u32,
    /// Column-major `(m + 1) × R`; row `m` counts exited trips.
    counts: Vec<u32>,
    /// Column-major `m × R`.
    probs: Vec<f64>,
}

impl LocationTable {
    /// Rebuilds a table from stored counts; probabilities are derived.
    pub fn from_counts(
        origin: StationIdx,
        destination: StationIdx,
        actions: Vec<ActionId>,
        delta: f64,
        horizon: u32,
        i_max: u32,
        counts: Vec<u32>,
    ) -> Result<Self, TableError> {
        let m = actions.len();
        if m == 0 || horizon == 0 || counts.len() != (m + 1) * horizon as usize {
            return Err(TableError::Params(format!(
                "count matrix has {} entries, expected {} × {}",
                counts.len(),
                m + 1,
                horizon
            )));
        }
        if let Some(r) =
            counts.chunks_exact(m + 1).position(|c| c.iter().map(|&x| x as u64).sum::<u64>() != i_max as u64)
        {
            return Err(TableError::Params(format!("counts at step {} do not sum to {i_max}", r + 1)));
        }
        let mut probs = vec![0.0; m * horizon as usize];
        for r in 0..horizon as usize {
            let col = &counts[r * (m + 1)..r * (m + 1) + m];
            let total: u64 = col.iter().map(|&c| c as u64).sum();
            let out = &mut probs[r * m..(r + 1) * m];
            if total == 0 {
                out[m - 1] = 1.0;
            } else {
                for (p, &c) in out.iter_mut().zip(col) {
                    *p = c as f64 / total as f64;
                }
            }
        }
        Ok(LocationTable { origin, destination, actions, delta, horizon, i_max, counts, probs })
    }

    pub fn origin(&self) -> StationIdx {
        self.origin
    }

    pub fn destination(&self) -> StationIdx {
        self.destination
    }

    pub fn actions(&self) -> &[ActionId] {
        &self.actions
    }

    pub fn n_actions(&self) -> usize {
        self.actions.len()
    }

    pub fn delta(&self) -> f64 {
        self.delta
    }

    pub fn horizon(&self) -> u32 {
        self.horizon
    }

    pub fn i_max(&self) -> u32 {
        self.i_max
    }

    pub fn counts(&self) -> &[u32] {
        &self.counts
    }

    /// Count of trips performing action `c` (or exited, for `c = m`) at step `r` (1-based).
    pub fn count(&self, c: usize, r: u32) -> u32 {
        let m = self.actions.len();
        assert!(c <= m && (1..=self.horizon).contains(&r));
        self.counts[(r as usize - 1) * (m + 1) + c]
    }

    pub fn exited(&self, r: u32) -> u32 {
        self.count(self.actions.len(), r)
    }

    /// Trips still in the network at step `r`.
    pub fn in_network(&self, r: u32) -> u32 {
        self.i_max - self.exited(r)
    }

    /// Probability row at step `r` (1-based).
    pub fn column(&self, r: u32) -> &[f64] {
        let m = self.actions.len();
        assert!((1..=self.horizon).contains(&r));
        &self.probs[(r as usize - 1) * m..r as usize * m]
    }

    /// Grid step nearest to `dt`, without clamping.
    pub fn step_for(&self, dt: f64) -> u64 {
        (dt.max(0.0) / self.delta).round() as u64
    }

    /// Location distribution `dt` seconds after entry: nearest grid step,
    /// clamped to `[1, R]`.
    pub fn location_distribution(&self, dt: f64) -> &[f64] {
        let r = self.step_for(dt).clamp(1, self.horizon as u64) as u32;
        self.column(r)
    }
}

/// Simulates `params.i_max` trips along `route` and tabulates occupancy.
pub fn build_location_table(
    topo: &Topology,
    route: &Route,
    model: &ActionTimeModel,
    params: &TableParams,
) -> Result<LocationTable, TableError> {
    params.validate()?;
    let sampler = ActionSampler::new(topo, model)?.with_waiting(params.waiting);
    let plan = sampler.plan(route)?;
    let horizon = match params.horizon {
        Some(r) => r,
        None => horizon_for(topo, route, model, params.delta)?,
    };
    let actions = route
        .actions
        .iter()
        .map(|a| topo.catalog().id_of(a).ok_or_else(|| TableError::UnknownAction(topo.describe_action(a))))
        .collect::<Result<Vec<_>, _>>()?;
    let m = actions.len();
    let rows = m + 1;
    let r_max = horizon as i64;
    let delta = params.delta;
    // diff[c][k] for k in 1..=R+1, stored row-major with stride R + 2
    let stride = horizon as usize + 2;
    let mut diff = vec![0i64; rows * stride];
    let mut add = |c: usize, lo: i64, hi: i64| {
        let lo = lo.max(1);
        let hi = hi.min(r_max);
        if lo <= hi {
            diff[c * stride + lo as usize] += 1;
            diff[c * stride + hi as usize + 1] -= 1;
        }
    };

    let mut rng = rng_for(params.seed, &[route.origin.0 as u64, route.destination.0 as u64]);
    let mut durations = Vec::with_capacity(m);
    for _ in 0..params.i_max {
        plan.sample_into(&mut rng, &mut durations);
        let mut start = 0.0;
        let mut lo = 1;
        for (c, &d) in durations.iter().enumerate() {
            let end = start + d;
            let hi = last_step_at_or_before(end, delta);
            add(c, lo, hi);
            lo = hi + 1;
            start = end;
        }
        add(m, lo, r_max);
    }

    let mut counts = vec![0u32; rows * horizon as usize];
    for c in 0..rows {
        let mut acc = 0i64;
        for r in 1..=horizon as usize {
            acc += diff[c * stride + r];
            counts[(r - 1) * rows + c] = acc as u32;
        }
    }
    LocationTable::from_counts(route.origin, route.destination, actions, delta, horizon, params.i_max, counts)
}

/// Largest `r` with `r · δ ≤ t`.
fn last_step_at_or_before(t: f64, delta: f64) -> i64 {
    let mut r = (t / delta).floor() as i64;
    while ((r + 1) as f64) * delta <= t {
        r += 1;
    }
    while r > 0 && (r as f64) * delta > t {
        r -= 1;
    }
    r
}

/// Location tables of every OD pair, indexed by (origin, destination).
#[derive(Debug, Clone, PartialEq)]
pub struct LocationTableSet {
    n_stations: usize,
    fingerprint: [u8; 32],
    tables: Vec<Option<LocationTable>>,
}

impl LocationTableSet {
    pub fn new(n_stations: usize, fingerprint: [u8; 32], tables: Vec<LocationTable>) -> Self {
        let mut slots = vec![None; n_stations * n_stations];
        for t in tables {
            let k = t.origin.index() * n_stations + t.destination.index();
            slots[k] = Some(t);
        }
        LocationTableSet { n_stations, fingerprint, tables: slots }
    }

    pub fn n_stations(&self) -> usize {
        self.n_stations
    }

    /// Fingerprint of the topology the tables were built for.
    pub fn fingerprint(&self) -> [u8; 32] {
        self.fingerprint
    }

    pub fn get(&self, from: StationIdx, to: StationIdx) -> Option<&LocationTable> {
        if from.index() >= self.n_stations || to.index() >= self.n_stations {
            return None;
        }
        self.tables[from.index() * self.n_stations + to.index()].as_ref()
    }

    pub fn iter(&self) -> impl Iterator<Item = &LocationTable> {
        self.tables.iter().flatten()
    }

    pub fn len(&self) -> usize {
        self.iter().count()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// Builds the tables of all routes in parallel. Each route has its own
/// generator seeded from `params.seed` and its OD pair, so the result does
/// not depend on scheduling.
pub fn build_all_tables(
    topo: &Topology,
    routes: &RouteSet,
    model: &ActionTimeModel,
    params: &TableParams,
) -> Result<LocationTableSet, TableError> {
    let routes: Vec<&Route> = routes.iter().collect();
    let tables =
        routes.par_iter().map(|r| build_location_table(topo, r, model, params)).collect::<Result<Vec<_>, _>>()?;
    Ok(LocationTableSet::new(topo.n_stations(), topo.fingerprint(), tables))
}
