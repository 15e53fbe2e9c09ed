//! Facial displacement measurement on a canonical face mesh.

pub mod cli;
pub mod features;
pub mod flow;
pub mod geometry;
pub mod ingest;
pub mod model;
pub mod pipeline;
pub mod render;
pub mod smoothing;
pub mod synthetic;
