pub mod desttable;
pub mod engine;
pub mod estimator;
pub mod ingest;
pub mod loctable;
pub mod network;
pub mod render;
pub mod sampling;
pub mod simgen;
pub mod store;
