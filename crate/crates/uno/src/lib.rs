//! Files, experiments and the `uno` command line on top of [`uno_core`].

pub mod atomic;
pub mod capture_file;
pub mod cli;
pub mod error;
pub mod experiment;
pub mod image_io;

pub use error::{Error, Result};
pub use experiment::{run_experiment, ExperimentReport};
pub use image_io::{load_image, save_image, ImageBuffer};
