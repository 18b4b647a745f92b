//! Weighted least-squares back ends, registered by name.

use std::collections::BTreeMap;

use nalgebra::{DMatrix, DVector};

use super::EstimateError;

pub const DEFAULT_RIDGE: f64 = 1e-6;
pub const DEFAULT_SOLVER: &str = "ridge-normal";

/// `min Σ_i w_i (y_i - a_iᵀ x)² + ridge · |x|²`
#[derive(Debug, Clone)]
pub struct WeightedProblem {
    pub design: DMatrix<f64>,
    pub targets: DVector<f64>,
    pub weights: DVector<f64>,
    pub ridge: f64,
}

impl WeightedProblem {
    /// Ridge-regularised normal equations `(AᵀWA + λI, AᵀWy)`.
    pub fn normal_equations(&self) -> (DMatrix<f64>, DVector<f64>) {
        let n = self.design.ncols();
        let mut gram = DMatrix::zeros(n, n);
        let mut rhs = DVector::zeros(n);
        for (i, row) in self.design.row_iter().enumerate() {
            let w = self.weights[i];
            let y = self.targets[i];
            let nz: Vec<(usize, f64)> =
                row.iter().enumerate().filter(|(_, v)| **v != 0.0).map(|(j, v)| (j, *v)).collect();
            for &(a, va) in &nz {
                rhs[a] += w * va * y;
                for &(b, vb) in &nz {
                    gram[(a, b)] += w * va * vb;
                }
            }
        }
        for d in 0..n {
            gram[(d, d)] += self.ridge;
        }
        (gram, rhs)
    }

    /// Weighted residual sum of squares, without the ridge term.
    pub fn objective(&self, x: &[f64]) -> f64 {
        let x = DVector::from_column_slice(x);
        let r = &self.targets - &self.design * x;
        r.iter().zip(self.weights.iter()).map(|(r, w)| w * r * r).sum()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolverOutput {
    pub x: Vec<f64>,
    /// Coordinates held at a bound by the solver.
    pub active: Vec<usize>,
}

pub trait MomentSolver: Send + Sync {
    fn name(&self) -> &'static str;
    fn description(&self) -> &'static str;
    fn solve(&self, problem: &WeightedProblem) -> Result<SolverOutput, EstimateError>;
}

/// Unconstrained solve of the ridge-regularised normal equations by Cholesky.
#[derive(Debug, Default, Clone, Copy)]
pub struct RidgeNormalEquations;

impl MomentSolver for RidgeNormalEquations {
    fn name(&self) -> &'static str {
        "ridge-normal"
    }

    fn description(&self) -> &'static str {
        "weighted normal equations with a ridge on the diagonal, Cholesky factorised"
    }

    fn solve(&self, problem: &WeightedProblem) -> Result<SolverOutput, EstimateError> {
        let (gram, rhs) = problem.normal_equations();
        let chol = gram.cholesky().ok_or(EstimateError::RankDeficient)?;
        let x = chol.solve(&rhs);
        if x.iter().any(|v| !v.is_finite()) {
            return Err(EstimateError::RankDeficient);
        }
        Ok(SolverOutput { x: x.iter().copied().collect(), active: Vec::new() })
    }
}

/// Lawson–Hanson active-set solver for the same objective with `x ≥ 0`.
#[derive(Debug, Clone, Copy)]
pub struct NonNegativeLeastSquares {
    pub max_iter: usize,
}

impl Default for NonNegativeLeastSquares {
    fn default() -> Self {
        NonNegativeLeastSquares { max_iter: 1000 }
    }
}

impl NonNegativeLeastSquares {
    fn solve_subset(gram: &DMatrix<f64>, rhs: &DVector<f64>, set: &[usize]) -> Option<Vec<f64>> {
        let k = set.len();
        let g = DMatrix::from_fn(k, k, |a, b| gram[(set[a], set[b])]);
        let h = DVector::from_fn(k, |a, _| rhs[set[a]]);
        let s = g.cholesky()?.solve(&h);
        Some(s.iter().copied().collect())
    }
}

impl MomentSolver for NonNegativeLeastSquares {
    fn name(&self) -> &'static str {
        "nnls"
    }

    fn description(&self) -> &'static str {
        "Lawson-Hanson non-negative least squares on the ridge-regularised Gram matrix"
    }

    fn solve(&self, problem: &WeightedProblem) -> Result<SolverOutput, EstimateError> {
        let (gram, rhs) = problem.normal_equations();
        let n = gram.nrows();
        let scale = gram.diagonal().amax().max(1.0);
        let tol = 1e-12 * scale;
        let mut x = vec![0.0; n];
        let mut passive = vec![false; n];
        let gradient = |x: &[f64]| -> Vec<f64> {
            let xv = DVector::from_column_slice(x);
            (&rhs - &gram * xv).iter().copied().collect()
        };

        let mut outer = 0;
        loop {
            let w = gradient(&x);
            let candidate =
                (0..n).filter(|&j| !passive[j] && w[j] > tol).max_by(|&a, &b| w[a].total_cmp(&w[b]).then(b.cmp(&a)));
            let Some(j) = candidate else { break };
            passive[j] = true;
            loop {
                outer += 1;
                if outer > self.max_iter {
                    return Err(EstimateError::SolverDiverged(self.name()));
                }
                let set: Vec<usize> = (0..n).filter(|&i| passive[i]).collect();
                let s = Self::solve_subset(&gram, &rhs, &set).ok_or(EstimateError::RankDeficient)?;
                if s.iter().all(|&v| v > 0.0) {
                    for (&i, &v) in set.iter().zip(&s) {
                        x[i] = v;
                    }
                    break;
                }
                let mut alpha = f64::INFINITY;
                for (&i, &v) in set.iter().zip(&s) {
                    if v <= 0.0 {
                        alpha = alpha.min(x[i] / (x[i] - v));
                    }
                }
                for (&i, &v) in set.iter().zip(&s) {
                    x[i] += alpha * (v - x[i]);
                    if x[i] <= 1e-15 * scale {
                        x[i] = 0.0;
                        passive[i] = false;
                    }
                }
                if !passive.iter().any(|&p| p) {
                    break;
                }
            }
        }
        let active = (0..n).filter(|&i| !passive[i]).collect();
        Ok(SolverOutput { x, active })
    }
}

/// Named solver strategies; selected at run time by name.
pub struct SolverRegistry {
    entries: BTreeMap<&'static str, Box<dyn MomentSolver>>,
}

impl SolverRegistry {
    pub fn empty() -> Self {
        SolverRegistry { entries: BTreeMap::new() }
    }

    /// Registry holding the built-in `ridge-normal` and `nnls` solvers.
    pub fn builtin() -> Self {
        let mut r = Self::empty();
        r.register(Box::new(RidgeNormalEquations));
        r.register(Box::new(NonNegativeLeastSquares::default()));
        r
    }

    /// Adds a solver, replacing any previous one with the same name.
    pub fn register(&mut self, solver: Box<dyn MomentSolver>) {
        self.entries.insert(solver.name(), solver);
    }

    pub fn get(&self, name: &str) -> Result<&dyn MomentSolver, EstimateError> {
        self.entries
            .get(name)
            .map(|b| b.as_ref())
            .ok_or_else(|| EstimateError::UnknownSolver { name: name.to_string(), known: self.names().join(", ") })
    }

    pub fn names(&self) -> Vec<&'static str> {
        self.entries.keys().copied().collect()
    }
}

impl Default for SolverRegistry {
    fn default() -> Self {
        Self::builtin()
    }
}
