//! Bridge between a sensor board and browser clients rendering a seasonal scene.

pub mod cli;
pub mod clock;
pub mod config;
pub mod protocol;
pub mod scene;
pub mod seasons;
pub mod server;
pub mod simulate;
pub mod smoothing;
