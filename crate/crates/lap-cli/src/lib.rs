//! Standard-library companion to `lap-core`: file formats (checkpoints,
//! netpbm images, config files), the timed training driver, rendering, and
//! the command implementations behind the `lap` binary.

pub mod checkpoint;
pub mod commands;
pub mod config_file;
pub mod netpbm;
pub mod render;
pub mod trainer;
