//! Configuration, commands and on-disk formats behind the CLI.

pub mod commands;
pub mod config;
pub mod output;

pub use commands::{
    cmd_analytic, cmd_coherence_scan, cmd_fit, cmd_magnetization, cmd_noise_check, error_json, CommandReport,
};
pub use config::{ChannelSelector, Preset, RunConfig};
