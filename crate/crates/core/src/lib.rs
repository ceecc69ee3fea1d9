pub mod cli;
pub mod config;
pub mod error;
pub mod ik;
pub mod kinematics;
mod report;
pub mod robot;
pub mod servo;
mod svg;
pub mod tasks;
pub mod transmission;
pub mod wrist;

pub use error::{Error, Result};
