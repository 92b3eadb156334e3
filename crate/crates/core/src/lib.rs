//! Decentralized electromagnetic formation flying with alternating magnetic
//! field forces.
//!
//! Satellites carry coils whose magnetic moments are sums of sinusoids, one
//! tone per neighbor. Averaged over a control window, only same-tone products
//! survive, so each pair's force can be commanded independently. The crate
//! provides:
//!
//! - [`em_model`]: far-field dipole forces and n-body translational dynamics.
//! - [`amff`]: moment waveforms, window averaging and the closed-form
//!   amplitude pair that realizes a desired force shape.
//! - [`formation`]: the control graph and the spring-dashpot force law.
//! - [`testbed`]: the single-axis current controller with saturation and a
//!   deadband integrator.
//! - [`estimator`]: per-pair steady-state Kalman filtering.
//! - [`sim`]: the sampled-data closed-loop simulator and transient metrics.
//! - [`config`], [`telemetry_csv`], [`plot`]: scenario files, CSV telemetry
//!   and SVG plots.
//! - [`verify`]: numerical self-checks.
//!
//! ```
//! use emff::amff::allocate_pair;
//! use emff::em_model::{force_shape, Vec3};
//!
//! let r = Vec3::new(0.4, 0.1, 0.0);
//! let target = Vec3::new(-2.0, 1.0, 0.5);
//! let pair = allocate_pair(&r, &target)?;
//! let realized = force_shape(&r, &pair.g, &pair.h)?;
//! assert!((realized - target).norm() < 1e-9);
//! # Ok::<(), emff::Error>(())
//! ```

// `!(x > 0.0)` is used on purpose: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod amff;
pub mod config;
pub mod em_model;
pub mod error;
pub mod estimator;
pub mod formation;
pub mod plot;
pub mod sim;
pub mod telemetry_csv;
pub mod testbed;
pub mod verify;

pub use em_model::Vec3;
pub use error::{Error, Result};

/// Guide chapters, compiled so their snippets stay correct.
#[cfg(doctest)]
mod guide {
    #[doc = include_str!("../../../book/src/force-model.md")]
    mod force_model {}
    #[doc = include_str!("../../../book/src/multiplexing.md")]
    mod multiplexing {}
    #[doc = include_str!("../../../book/src/allocation.md")]
    mod allocation {}
    #[doc = include_str!("../../../book/src/air-track.md")]
    mod air_track {}
    #[doc = include_str!("../../../book/src/estimation.md")]
    mod estimation {}
    #[doc = include_str!("../../../book/src/simulation.md")]
    mod simulation {}
    #[doc = include_str!("../../../book/src/scenario-files.md")]
    mod scenario_files {}
    #[doc = include_str!("../../../book/src/development.md")]
    mod development {}
}
