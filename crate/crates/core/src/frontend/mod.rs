//! Command line, rendering and report serialization.

pub mod cli;
pub mod render;
pub mod report;

pub use cli::{run_cli, run_cli_with, RunConfig};
pub use render::{render, Overlays, Palette};
pub use report::{report_parse, report_serialize, Versioned};
