//! Federated learning with over-the-air model aggregation assisted by a
//! reconfigurable intelligent surface (RIS).
//!
//! The crate is organised bottom-up:
//!
//! - [`channel`]: Rayleigh-fading links and the RIS-composed effective channel.
//! - [`aircomp`]: pre/post-processing, simultaneous analog transmission and
//!   the aggregation MSE.
//! - [`solvers`]: lifted SDP solvers for the receive beamformer and the RIS
//!   phases (DC programming and semidefinite relaxation), plus the
//!   alternating outer loop.
//! - [`selection`]: greedy channel-driven device selection.
//! - [`trainer`]: linear SVM federated training over a chosen aggregation
//!   scenario.
//! - [`harness`]: configuration, dataset loading, sweeps and output files.

pub mod aircomp;
pub mod channel;
pub mod harness;
pub mod model;
pub mod seed;
pub mod selection;
pub mod solvers;
pub mod trainer;

pub use num_complex_alias::C64;

mod num_complex_alias {
    /// Complex baseband sample.
    pub type C64 = nalgebra::Complex<f64>;
}
