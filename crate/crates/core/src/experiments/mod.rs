//! Estimators and statistical checks that confront sampled ensembles with
//! the model's quantitative laws.

mod report;

pub use report::{Check, Estimate, ExperimentReport};

pub mod bl;
pub mod clt;
pub mod counting;
pub mod coupling;
pub mod extremes;
pub mod mgf;
pub mod stiffness;
pub mod tail;
pub mod tiles;
