//! Method-of-moments estimation of walk-time distributions from OD travel
//! time statistics.
//!
//! Each route's travel time is a sum of independent parts: walk times
//! (Gamma), platform waits (uniform over the headway) and fixed in-vehicle
//! times. Its mean and variance are therefore linear in the walk-time means
//! and variances, and the sample moments of all OD pairs give two
//! overdetermined linear systems. Both are solved by weighted least squares
//! and the resulting moments are inverted to Gamma parameters.

mod export;
mod gamma;
mod moments;
mod solver;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::ingest::{build_od_stats, AfcRecord, OdTravelStats};
use crate::network::{
    enumerate_walk_variables, NetworkError, RouteSet, Router, StationIdx, Topology, WalkVariableIndex,
};

pub use export::{ModelFile, ModelVariable, MseReport};
pub use gamma::{gamma_from_moments, GammaParams};
pub use moments::{build_moment_system, moment_row, MomentRow, MomentSystem};
pub use solver::{
    MomentSolver, NonNegativeLeastSquares, RidgeNormalEquations, SolverOutput, SolverRegistry, WeightedProblem,
    DEFAULT_RIDGE, DEFAULT_SOLVER,
};

pub const DEFAULT_N_MIN: u64 = 5;
pub const MEAN_FLOOR: f64 = 1.0;
pub const VARIANCE_FLOOR: f64 = 0.01;
/// Variance floor used only inside the mean-problem weights.
pub const WEIGHT_VARIANCE_FLOOR: f64 = 1.0;

#[derive(Debug, thiserror::Error)]
pub enum EstimateError {
    #[error("no travel records to estimate from")]
    EmptyHistory,
    #[error("no usable pairs: no OD pair has at least {n_min} completed trips")]
    NoUsablePairs { n_min: u64 },
    #[error("design matrix is rank deficient beyond ridge repair")]
    RankDeficient,
    #[error("solver '{0}' did not converge")]
    SolverDiverged(&'static str),
    #[error("unknown solver '{name}' (available: {known})")]
    UnknownSolver { name: String, known: String },
    #[error("action {0} has no walk variable")]
    UnresolvedAction(String),
    #[error("invalid moments (mean {mean}, variance {variance}): {reason}")]
    InvalidMoments { mean: f64, variance: f64, reason: &'static str },
    #[error("model file: {0}")]
    ModelFile(String),
    #[error(transparent)]
    Network(#[from] NetworkError),
}

#[derive(Debug, Clone, PartialEq)]
pub struct WalkTimeEstimates {
    pub means: Vec<f64>,
    pub variances: Vec<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct WlsDiagnostics {
    pub solver: String,
    pub pairs_used: usize,
    pub pairs_excluded: usize,
    pub mean_objective: f64,
    pub variance_objective: f64,
    pub mean_rms_residual: f64,
    pub variance_rms_residual: f64,
    /// Variables that no retained route touches.
    pub untouched: Vec<usize>,
    pub clipped_means: Vec<usize>,
    pub clipped_variances: Vec<usize>,
    /// Coordinates the solver itself held at a bound.
    pub solver_active_means: Vec<usize>,
    pub solver_active_variances: Vec<usize>,
}

#[derive(Clone, Copy)]
pub struct WlsOptions<'a> {
    pub n_min: u64,
    pub ridge: f64,
    pub solver: &'a dyn MomentSolver,
}

impl std::fmt::Debug for WlsOptions<'_> {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("WlsOptions")
            .field("n_min", &self.n_min)
            .field("ridge", &self.ridge)
            .field("solver", &self.solver.name())
            .finish()
    }
}

impl Default for WlsOptions<'static> {
    fn default() -> Self {
        static RIDGE: RidgeNormalEquations = RidgeNormalEquations;
        WlsOptions { n_min: DEFAULT_N_MIN, ridge: DEFAULT_RIDGE, solver: &RIDGE }
    }
}

/// The two weighted problems before solving; exposed for diagnostics and tests.
pub struct WlsProblems {
    pub mean: WeightedProblem,
    pub variance: WeightedProblem,
    pub pairs_used: usize,
    pub pairs_excluded: usize,
    pub untouched: Vec<usize>,
}

pub fn assemble_wls(
    system: &MomentSystem,
    stats: &OdTravelStats,
    n_min: u64,
    ridge: f64,
) -> Result<WlsProblems, EstimateError> {
    let used: Vec<(&MomentRow, _)> = system
        .rows
        .iter()
        .filter_map(|row| stats.get(row.origin, row.destination).filter(|s| s.count >= n_min).map(|s| (row, *s)))
        .collect();
    if used.is_empty() {
        return Err(EstimateError::NoUsablePairs { n_min });
    }
    let n = system.n_vars;
    let design = DMatrix::from_fn(used.len(), n, |i, j| used[i].0.coeffs[j] as f64);
    let mean_targets = DVector::from_fn(used.len(), |i, _| used[i].1.mean - used[i].0.c_mean);
    let mean_weights =
        DVector::from_fn(used.len(), |i, _| used[i].1.count as f64 / used[i].1.variance.max(WEIGHT_VARIANCE_FLOOR));
    let var_targets = DVector::from_fn(used.len(), |i, _| used[i].1.variance - used[i].0.c_var);
    let var_weights = DVector::from_fn(used.len(), |i, _| used[i].1.count as f64);
    let untouched = (0..n).filter(|&j| used.iter().all(|(row, _)| row.coeffs[j] == 0)).collect();
    Ok(WlsProblems {
        mean: WeightedProblem { design: design.clone(), targets: mean_targets, weights: mean_weights, ridge },
        variance: WeightedProblem { design, targets: var_targets, weights: var_weights, ridge },
        pairs_used: used.len(),
        pairs_excluded: system.rows.len() - used.len(),
        untouched,
    })
}

fn rms(p: &WeightedProblem, x: &[f64]) -> f64 {
    let r = &p.targets - &p.design * DVector::from_column_slice(x);
    (r.norm_squared() / r.len() as f64).sqrt()
}

/// Solve both weighted problems and clip the results at their floors.
pub fn solve_wls(
    system: &MomentSystem,
    stats: &OdTravelStats,
    opts: &WlsOptions<'_>,
) -> Result<(WalkTimeEstimates, WlsDiagnostics), EstimateError> {
    let problems = assemble_wls(system, stats, opts.n_min, opts.ridge)?;
    let mean_out = opts.solver.solve(&problems.mean)?;
    let var_out = opts.solver.solve(&problems.variance)?;

    let clip = |xs: &[f64], floor: f64| {
        let mut clipped = Vec::new();
        let vals = xs
            .iter()
            .enumerate()
            .map(|(i, &v)| {
                if v < floor {
                    clipped.push(i);
                    floor
                } else {
                    v
                }
            })
            .collect::<Vec<_>>();
        (vals, clipped)
    };
    let (means, clipped_means) = clip(&mean_out.x, MEAN_FLOOR);
    let (variances, clipped_variances) = clip(&var_out.x, VARIANCE_FLOOR);
    let diagnostics = WlsDiagnostics {
        solver: opts.solver.name().to_string(),
        pairs_used: problems.pairs_used,
        pairs_excluded: problems.pairs_excluded,
        mean_objective: problems.mean.objective(&mean_out.x),
        variance_objective: problems.variance.objective(&var_out.x),
        mean_rms_residual: rms(&problems.mean, &mean_out.x),
        variance_rms_residual: rms(&problems.variance, &var_out.x),
        untouched: problems.untouched,
        clipped_means,
        clipped_variances,
        solver_active_means: mean_out.active,
        solver_active_variances: var_out.active,
    };
    Ok((WalkTimeEstimates { means, variances }, diagnostics))
}

/// Mean and variance of one walk-time variable.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WalkMoments {
    pub mean: f64,
    pub variance: f64,
}

/// Complete action-time model: walk-time moments per variable. Headways and
/// segment times are read from the topology.
#[derive(Debug, Clone, PartialEq)]
pub struct ActionTimeModel {
    walks: WalkVariableIndex,
    moments: Vec<WalkMoments>,
}

impl ActionTimeModel {
    pub fn new(walks: WalkVariableIndex, moments: Vec<WalkMoments>) -> Result<Self, EstimateError> {
        if moments.len() != walks.len() {
            return Err(EstimateError::ModelFile(format!(
                "model has {} variables, network has {}",
                moments.len(),
                walks.len()
            )));
        }
        for (m, v) in moments.iter().zip(walks.vars()) {
            if !(m.mean.is_finite() && m.mean >= 0.0 && m.variance.is_finite() && m.variance >= 0.0) {
                return Err(EstimateError::ModelFile(format!("variable '{}' has invalid moments", v.id)));
            }
        }
        Ok(ActionTimeModel { walks, moments })
    }

    /// Same mean and variance for every walk variable of the topology.
    pub fn uniform(topo: &Topology, mean: f64, variance: f64) -> Self {
        let walks = enumerate_walk_variables(topo);
        let moments = vec![WalkMoments { mean, variance }; walks.len()];
        ActionTimeModel { walks, moments }
    }

    pub fn from_gamma(topo: &Topology, params: &[GammaParams]) -> Result<Self, EstimateError> {
        let moments = params.iter().map(|g| WalkMoments { mean: g.mean(), variance: g.variance() }).collect();
        Self::new(enumerate_walk_variables(topo), moments)
    }

    pub fn walks(&self) -> &WalkVariableIndex {
        &self.walks
    }

    pub fn len(&self) -> usize {
        self.moments.len()
    }

    pub fn is_empty(&self) -> bool {
        self.moments.is_empty()
    }

    pub fn moments(&self) -> &[WalkMoments] {
        &self.moments
    }

    pub fn means(&self) -> Vec<f64> {
        self.moments.iter().map(|m| m.mean).collect()
    }

    pub fn variances(&self) -> Vec<f64> {
        self.moments.iter().map(|m| m.variance).collect()
    }

    /// `None` for degenerate (zero-variance) variables.
    pub fn gamma(&self, l: usize) -> Option<GammaParams> {
        let m = self.moments[l];
        gamma_from_moments(m.mean, m.variance).ok()
    }

    /// Routes of every OD pair under this model's walk means.
    pub fn routes(&self, topo: &Topology) -> Result<RouteSet, EstimateError> {
        Ok(Router::with_means(topo, &self.means())?.all_routes()?)
    }

    /// Mean squared error of means and of variances against a reference model.
    pub fn mse_against(&self, truth: &ActionTimeModel) -> (f64, f64) {
        let n = self.moments.len().max(1) as f64;
        let (mut em, mut ev) = (0.0, 0.0);
        for (a, b) in self.moments.iter().zip(&truth.moments) {
            em += (a.mean - b.mean).powi(2);
            ev += (a.variance - b.variance).powi(2);
        }
        (em / n, ev / n)
    }
}

#[derive(Debug, Clone)]
pub struct EstimationOutcome {
    pub model: ActionTimeModel,
    pub diagnostics: WlsDiagnostics,
    pub stats: OdTravelStats,
    pub system: MomentSystem,
}

/// Observed and fitted travel-time moments of one OD pair.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PairResidual {
    pub origin: StationIdx,
    pub destination: StationIdx,
    pub count: u64,
    pub observed_mean: f64,
    pub fitted_mean: f64,
    pub observed_variance: f64,
    pub fitted_variance: f64,
}

impl EstimationOutcome {
    /// Fit of every OD pair with at least `n_min` trips, in pair order.
    pub fn residuals(&self, n_min: u64) -> Vec<PairResidual> {
        let (means, vars) = (self.model.means(), self.model.variances());
        self.system
            .rows
            .iter()
            .filter_map(|row| {
                let s = self.stats.get(row.origin, row.destination).filter(|s| s.count >= n_min)?;
                Some(PairResidual {
                    origin: row.origin,
                    destination: row.destination,
                    count: s.count,
                    observed_mean: s.mean,
                    fitted_mean: row.predict_mean(&means),
                    observed_variance: s.variance,
                    fitted_variance: row.predict_variance(&vars),
                })
            })
            .collect()
    }
}

/// Records → OD statistics → moment system → weighted least squares → model.
///
/// Routes come from the topology's default walk means. Variables that no
/// retained pair touches get the default mean and the average estimated
/// variance and are listed in `diagnostics.untouched`.
pub fn estimate_action_times(
    topo: &Topology,
    records: &[AfcRecord],
    opts: &WlsOptions<'_>,
) -> Result<EstimationOutcome, EstimateError> {
    if records.iter().all(|r| r.exit.is_none()) {
        return Err(EstimateError::EmptyHistory);
    }
    let stats = build_od_stats(records);
    let router = Router::with_default_means(topo);
    let routes = router.all_routes()?;
    let system = build_moment_system(topo, &routes, router.walks())?;
    let (est, diagnostics) = solve_wls(&system, &stats, opts)?;

    let touched: Vec<usize> = (0..est.means.len()).filter(|i| !diagnostics.untouched.contains(i)).collect();
    let fill_var = touched.iter().map(|&i| est.variances[i]).sum::<f64>() / touched.len().max(1) as f64;
    let moments = (0..est.means.len())
        .map(|i| {
            if diagnostics.untouched.contains(&i) {
                WalkMoments { mean: topo.default_walk_mean().max(MEAN_FLOOR), variance: fill_var.max(VARIANCE_FLOOR) }
            } else {
                WalkMoments { mean: est.means[i], variance: est.variances[i] }
            }
        })
        .collect();
    let model = ActionTimeModel::new(router.walks().clone(), moments)?;
    Ok(EstimationOutcome { model, diagnostics, stats, system })
}
