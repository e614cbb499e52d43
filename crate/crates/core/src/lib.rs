pub mod data;
pub mod decoy;
pub mod error;
pub mod keyrates;
pub mod linkmodel;
pub mod params;
pub mod report;
pub mod simulator;
pub mod tallies;
pub mod units;
pub mod validation;

pub use error::{Error, Result};
