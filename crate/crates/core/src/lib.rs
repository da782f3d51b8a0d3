//! Competitive actionable recourse under upper-tail CVaR selection.
//!
//! A designer repeatedly picks the top `rho` fraction of a population with a
//! regularized CVaR-optimal linear score; rejected candidates respond by moving
//! their actionable features along the direction the score rewards, with effort
//! limited by a log barrier below a ceiling. The crate simulates that loop,
//! detects its fixed points and measures the gap between accepted and rejected
//! groups.

pub mod cli;
pub mod dynamics;
pub mod effort;
pub mod error;
pub mod oracles;
pub mod population;
pub mod recourse;
pub mod selection;
pub mod trace;

pub use error::{Error, Result};
