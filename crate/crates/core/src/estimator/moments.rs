use crate::network::{Action, Route, RouteSet, StationIdx, Topology, WalkVariableIndex};

use super::EstimateError;

/// Travel-time moments of one route written as a constant plus a linear
/// function of the walk-time moments.
#[derive(Debug, Clone, PartialEq)]
pub struct MomentRow {
    pub origin: StationIdx,
    pub destination: StationIdx,
    /// Expected waiting plus in-vehicle time, seconds.
    pub c_mean: f64,
    /// Variance of the waiting times, seconds².
    pub c_var: f64,
    /// Occurrences of each walk variable on the route.
    pub coeffs: Vec<u32>,
}

impl MomentRow {
    pub fn predict_mean(&self, walk_means: &[f64]) -> f64 {
        self.c_mean + self.dot(walk_means)
    }

    pub fn predict_variance(&self, walk_vars: &[f64]) -> f64 {
        self.c_var + self.dot(walk_vars)
    }

    pub(crate) fn dot(&self, x: &[f64]) -> f64 {
        self.coeffs.iter().zip(x).map(|(&r, &v)| r as f64 * v).sum()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MomentSystem {
    pub n_vars: usize,
    pub rows: Vec<MomentRow>,
}

impl MomentSystem {
    pub fn row(&self, from: StationIdx, to: StationIdx) -> Option<&MomentRow> {
        self.rows.iter().find(|r| r.origin == from && r.destination == to)
    }
}

pub fn moment_row(topo: &Topology, route: &Route, walks: &WalkVariableIndex) -> Result<MomentRow, EstimateError> {
    let mut coeffs = vec![0u32; walks.len()];
    let mut c_mean = 0.0;
    let mut c_var = 0.0;
    for a in &route.actions {
        let waiting_line = match *a {
            Action::Enter { line, .. } => Some(line),
            Action::Transfer { to, .. } => Some(to),
            Action::Move { segment } => {
                c_mean += topo.segment(segment).time;
                None
            }
            Action::Exit { .. } => None,
        };
        if let Some(line) = waiting_line {
            let h = topo.headway(line);
            c_mean += h / 2.0;
            c_var += h * h / 12.0;
        }
        if !matches!(a, Action::Move { .. }) {
            let l = walks.resolve(a).ok_or_else(|| EstimateError::UnresolvedAction(topo.describe_action(a)))?;
            coeffs[l] += 1;
        }
    }
    Ok(MomentRow { origin: route.origin, destination: route.destination, c_mean, c_var, coeffs })
}

pub fn build_moment_system(
    topo: &Topology,
    routes: &RouteSet,
    walks: &WalkVariableIndex,
) -> Result<MomentSystem, EstimateError> {
    let rows = routes.iter().map(|r| moment_row(topo, r, walks)).collect::<Result<Vec<_>, _>>()?;
    Ok(MomentSystem { n_vars: walks.len(), rows })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::network::{enumerate_walk_variables, load_topology, Router};

    fn six_station() -> Topology {
        load_topology(include_str!("../../../../data/six_station.toml")).unwrap()
    }

    #[test]
    fn no_transfer_route_constants() {
        // A -> C on purple: headway 120 s, two 90 s segments
        let topo = six_station();
        let walks = enumerate_walk_variables(&topo);
        let a = topo.station_idx("A").unwrap();
        let c = topo.station_idx("C").unwrap();
        let route = Router::with_default_means(&topo).route(a, c).unwrap();
        let row = moment_row(&topo, &route, &walks).unwrap();
        assert_eq!(row.c_mean, 240.0);
        assert_eq!(row.c_var, 1200.0);
        let purple = topo.line_idx("purple").unwrap();
        let mut expect = vec![0; walks.len()];
        expect[walks.platform(purple, a).unwrap()] = 1;
        expect[walks.platform(purple, c).unwrap()] = 1;
        assert_eq!(row.coeffs, expect);
    }

    #[test]
    fn six_station_transfer_route_has_three_unit_entries() {
        let topo = six_station();
        let walks = enumerate_walk_variables(&topo);
        let a = topo.station_idx("A").unwrap();
        let f = topo.station_idx("F").unwrap();
        let route = Router::with_default_means(&topo).route(a, f).unwrap();
        let row = moment_row(&topo, &route, &walks).unwrap();
        assert_eq!(row.coeffs.iter().filter(|&&c| c == 1).count(), 3);
        assert_eq!(row.coeffs.iter().sum::<u32>(), 3);
        // waits on purple and blue, five segments
        assert_eq!(row.c_mean, 60.0 + 90.0 + 90.0 + 120.0 + 100.0 + 90.0 + 150.0);
        assert_eq!(row.c_var, 120.0 * 120.0 / 12.0 + 180.0 * 180.0 / 12.0);
    }

    #[test]
    fn coefficient_mass_is_two_plus_transfers() {
        let topo = load_topology(include_str!("../../../../data/two_line_31.toml")).unwrap();
        let walks = enumerate_walk_variables(&topo);
        let routes = Router::with_default_means(&topo).all_routes().unwrap();
        let sys = build_moment_system(&topo, &routes, &walks).unwrap();
        assert_eq!(sys.rows.len(), 930);
        for (row, route) in sys.rows.iter().zip(routes.iter()) {
            assert_eq!(row.coeffs.iter().sum::<u32>() as usize, 2 + route.n_transfers());
            let means = vec![60.0; walks.len()];
            let t = route.expected_time(&topo, &walks, &means);
            assert!((row.predict_mean(&means) - t).abs() < 1e-9);
        }
    }
}
