pub mod calibration;
pub mod ensemble;
pub mod mapping;
pub mod metrics;
pub mod reclassify;
pub mod samples;
pub mod training;
