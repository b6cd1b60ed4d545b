pub mod config;
pub mod datasets;
pub mod embedding;
pub mod frontend;
pub mod ggnn;
pub mod model;
pub mod nn;
pub mod pipeline;
pub mod readout;
pub mod training;
