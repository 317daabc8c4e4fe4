//! On-disk formats: binary frame containers with JSON sidecars, scenario
//! files and dataset export.

pub mod container;
pub mod dataset;
pub mod scenario;
