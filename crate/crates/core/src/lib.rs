//! Two-tier anomaly detection for industrial IoT flow data.
//!
//! Local units run a shared autoencoder over their own flow records, flag
//! anomalies by reconstruction error and forward compact messages (predicted
//! class, error, bottleneck code) to a simulated cloud. The cloud routes each
//! message by the sending unit's local range to one of three class-weighted
//! AdaBoost ensembles. Every byte that crosses the simulated uplink is counted
//! against a raw-feature offload baseline.

pub mod adaboost;
pub mod autoencoder;
pub mod cli;
pub mod config;
pub mod dataset;
pub mod federation;
pub mod metrics;
pub mod neuralnet;
pub mod plot;
pub mod report;
pub mod seed;
