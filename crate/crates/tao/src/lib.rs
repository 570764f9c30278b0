//! File formats, dataset ingestion, external segmenters and the `tao`
//! command line around [`tao_core`].

pub mod cli;
pub mod config;
pub mod error;
pub mod external;
pub mod formats;
pub mod manifest;
pub mod pgm;

pub use error::TaoError;
