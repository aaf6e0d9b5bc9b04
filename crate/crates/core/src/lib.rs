// SPDX-License-Identifier: Apache-2.0

//! Platform-level security measurement: logic locking and SAT attacks under
//! scan compression, switching-activity side-channel metrics, estimation
//! models and assurance metrics.

pub mod assurance;
pub mod locking;
pub mod netlist;
pub mod platform;
pub mod power;
pub mod psc;
pub mod sat;
pub mod sat_estimation;
pub mod scalar;

pub use scalar::Scalar;

pub type Quadratic = sat_estimation::Quadratic<f64>;
pub type EstimationModel = sat_estimation::EstimationModel<f64>;
pub type EmpiricalDistribution = psc::metrics::EmpiricalDistribution<f64>;
pub type JsMatrix = psc::metrics::JsMatrix<f64>;
pub type ScoreThresholds = psc::metrics::ScoreThresholds<f64>;
pub type PscMeasurement = psc::metrics::PscMeasurement<f64>;
pub type PscEstimate = psc::estimation::PscEstimate<f64>;
