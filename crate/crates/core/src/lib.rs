//! Agent-based model of repo and interbank funding contagion, with a
//! weighted-network SIS model of distress propagation.

pub mod accounting;
pub mod assets;
pub mod funding;
pub mod risk;
pub mod rng;
pub mod strategy;
pub mod engine;
pub mod scenario;
pub mod sis;
pub mod output;
