//! Two-busbar grid simulator with a DC power flow, the substation
//! reconfiguration action space, and hierarchical RL agents for topology control.

pub mod actions;
pub mod agents;
pub mod engine;
pub mod flow;
pub mod grid;
pub mod metrics;
pub mod nn;
pub mod rl;
pub mod scenario;
pub mod train;
