//! Rail network representation, minimum-time routing and action decomposition.

mod config;
mod route;
mod topology;
mod walk;

pub use config::{
    LegConfig, LineConfig, OneOrMany, OverrideConfig, SegmentConfig, StationConfig, TopologyConfig, TransferConfig,
    DEFAULT_WALK_MEAN,
};
pub use route::{compute_route, Route, RouteSet, Router};
pub use topology::{
    Action, ActionCatalog, ActionId, Component, ComponentId, ComponentKind, Leg, Line, LineIdx, Segment, SegmentIdx,
    Station, StationIdx, Topology, Transfer,
};
pub use walk::{enumerate_walk_variables, WalkKind, WalkVariable, WalkVariableIndex};

#[derive(Debug, thiserror::Error)]
pub enum NetworkError {
    #[error("topology parse error: {0}")]
    Parse(String),
    #[error("invalid topology: {0}")]
    Invalid(String),
    #[error("unknown station '{id}' in {context}")]
    UnknownStation { id: String, context: String },
    #[error("no route from '{from}' to '{to}'")]
    Unreachable { from: String, to: String },
    #[error("origin and destination are both '{0}'")]
    SameStation(String),
}

/// Parse and validate a TOML topology document.
pub fn load_topology(document: &str) -> Result<Topology, NetworkError> {
    TopologyConfig::from_toml(document)?.build()
}
