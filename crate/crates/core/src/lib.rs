pub mod agents;
pub mod config;
pub mod environment;
pub mod gp;
pub mod kernels;
pub mod metrics;
pub mod output;
pub mod priors;
pub mod rng;
pub mod verify;
