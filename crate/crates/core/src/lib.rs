//! Spectral foliation of graphical tori by holomorphic disks.

pub mod barrier;
pub mod circle;
pub mod disk;
pub mod error;
pub mod foliation;
pub mod motion;
pub mod parallel;
pub mod torus;

pub use error::{Error, Result};
