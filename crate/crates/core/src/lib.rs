//! Simulator for a uni-directional time-bin phase-coding QKD link built from
//! two unbalanced Mach-Zehnder interferometers.
//!
//! - [`optics`]: complex amplitudes over (slot, port, polarisation) and the
//!   elementary linear elements.
//! - [`devices`]: source, switch, interferometer, fibre and detector models.
//! - [`linksim`]: the assembled chain, fringe scans and visibility.
//! - [`qkd`]: BB84 state preparation, detection, sifting and QBER.

pub mod devices;
pub mod error;
pub mod linksim;
pub mod optics;
pub mod qkd;

pub use error::{Error, Result};
