//! Random action durations shared by the table builder and the simulator.
//!
//! Walk times are Gamma distributed (`rand_distr`'s Marsaglia–Tsang sampler);
//! a zero-variance walk is the constant mean. Waiting for a train is uniform
//! over the headway. All randomness comes from `ChaCha8Rng` streams seeded by
//! [`derive_seed`], so results are reproducible for a given build.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Gamma};

use crate::estimator::ActionTimeModel;
use crate::network::{Action, Route, Topology};

#[derive(Debug, thiserror::Error)]
pub enum SampleError {
    #[error("the action-time model does not cover action {0}")]
    Uncovered(String),
    #[error("the action-time model has {model} walk variables but the network has {network}")]
    ModelMismatch { model: usize, network: usize },
}

/// Mixes a base seed with a list of integers (splitmix64 finaliser per word).
pub fn derive_seed(base: u64, parts: &[u64]) -> u64 {
    fn mix(mut z: u64) -> u64 {
        z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
        z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
        z ^ (z >> 31)
    }
    parts.iter().fold(mix(base), |h, &p| mix(h ^ mix(p)))
}

pub fn rng_for(base: u64, parts: &[u64]) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(derive_seed(base, parts))
}

/// How the wait for a train is drawn.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum WaitingMode {
    /// Uniform over `[0, headway)`.
    #[default]
    Uniform,
    /// Always half the headway.
    Midpoint,
}

#[derive(Debug, Clone, Copy)]
enum WalkDraw {
    Gamma(Gamma<f64>),
    Constant(f64),
}

impl WalkDraw {
    fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        match self {
            WalkDraw::Gamma(g) => g.sample(rng),
            WalkDraw::Constant(c) => *c,
        }
    }
}

/// Draws action durations under one action-time model.
#[derive(Debug, Clone)]
pub struct ActionSampler<'a> {
    topo: &'a Topology,
    model: &'a ActionTimeModel,
    walks: Vec<WalkDraw>,
    waiting: WaitingMode,
}

impl<'a> ActionSampler<'a> {
    pub fn new(topo: &'a Topology, model: &'a ActionTimeModel) -> Result<Self, SampleError> {
        let network = crate::network::enumerate_walk_variables(topo).len();
        if network != model.len() {
            return Err(SampleError::ModelMismatch { model: model.len(), network });
        }
        let walks = (0..model.len())
            .map(|l| match model.gamma(l) {
                Some(g) => WalkDraw::Gamma(Gamma::new(g.shape, g.scale).expect("validated gamma parameters")),
                None => WalkDraw::Constant(model.moments()[l].mean),
            })
            .collect();
        Ok(ActionSampler { topo, model, walks, waiting: WaitingMode::Uniform })
    }

    pub fn with_waiting(mut self, waiting: WaitingMode) -> Self {
        self.waiting = waiting;
        self
    }

    pub fn waiting(&self) -> WaitingMode {
        self.waiting
    }

    pub fn sample_action<R: Rng + ?Sized>(&self, action: &Action, rng: &mut R) -> Result<f64, SampleError> {
        Ok(self.step(action)?.sample(rng))
    }

    fn step(&self, action: &Action) -> Result<PlanStep, SampleError> {
        let walk = |a: &Action| {
            self.model.walks().resolve(a).ok_or_else(|| SampleError::Uncovered(self.topo.describe_action(a)))
        };
        let (walk, headway, fixed) = match *action {
            Action::Enter { line, .. } => (Some(walk(action)?), Some(self.topo.headway(line)), 0.0),
            Action::Move { segment } => (None, None, self.topo.segment(segment).time),
            Action::Transfer { to, .. } => (Some(walk(action)?), Some(self.topo.headway(to)), 0.0),
            Action::Exit { .. } => (Some(walk(action)?), None, 0.0),
        };
        let (fixed, wait) = match (headway, self.waiting) {
            (Some(h), WaitingMode::Uniform) => (fixed, Some(h)),
            (Some(h), WaitingMode::Midpoint) => (fixed + h / 2.0, None),
            (None, _) => (fixed, None),
        };
        Ok(PlanStep { fixed, walk: walk.map(|l| self.walks[l]), wait })
    }

    /// Precomputes the per-action draws of a route.
    pub fn plan(&self, route: &Route) -> Result<RoutePlan, SampleError> {
        let steps = route.actions.iter().map(|a| self.step(a)).collect::<Result<Vec<_>, _>>()?;
        Ok(RoutePlan { steps })
    }
}

#[derive(Debug, Clone, Copy)]
struct PlanStep {
    fixed: f64,
    walk: Option<WalkDraw>,
    wait: Option<f64>,
}

impl PlanStep {
    fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        let mut t = self.fixed;
        if let Some(w) = &self.walk {
            t += w.sample(rng);
        }
        if let Some(h) = self.wait {
            t += rng.random_range(0.0..h);
        }
        t
    }
}

/// Ready-to-sample durations of a route's actions.
#[derive(Debug, Clone)]
pub struct RoutePlan {
    steps: Vec<PlanStep>,
}

impl RoutePlan {
    pub fn len(&self) -> usize {
        self.steps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.steps.is_empty()
    }

    /// Writes one duration per action into `out`, replacing its contents.
    pub fn sample_into<R: Rng + ?Sized>(&self, rng: &mut R, out: &mut Vec<f64>) {
        out.clear();
        out.extend(self.steps.iter().map(|s| s.sample(rng)));
    }
}
