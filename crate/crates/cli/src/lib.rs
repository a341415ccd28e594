//! Command-line tools, SVG wireframes and the HTTP service for layout
//! generation.

pub mod api;
pub mod commands;
pub mod server;
pub mod svg;
