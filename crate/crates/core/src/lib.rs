pub mod capture;
pub mod config;
pub mod dataset;
pub mod error;
pub mod evaluation;
pub mod features;
pub mod gatekeeper;
pub mod graphic;
pub mod io;
pub mod labels;
pub mod models;
pub mod oracle;
pub mod pipeline;
pub mod probe;
pub mod raster;
pub mod seed;
pub mod stats;
pub mod svg;

pub use error::{Category, Error, Result};
