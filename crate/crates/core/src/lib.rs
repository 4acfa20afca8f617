//! Residential tariff and home energy management study toolkit.

pub mod domain;
pub mod solver;
pub mod billing;
pub mod hems;
pub mod seed;
pub mod synthesis;
pub mod fixtures;
pub mod powerflow;
pub mod montecarlo;
