pub mod analysis;
pub mod conformance;
pub mod engine;
pub mod model;
pub mod registry;
pub mod simulator;
pub mod stats;
pub mod transport;
