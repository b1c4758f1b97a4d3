//! Linear sequential coding for a two-sender Gaussian multiple access channel
//! with active noisy feedback.
//!
//! Two senders hold independent Gaussian messages and transmit over a shared
//! additive Gaussian channel. The receiver feeds an actively encoded signal
//! back over two independent noisy channels. Every node runs a small linear
//! controller; because everything is linear and Gaussian, the receiver's
//! estimation error covariance is a deterministic function of the controller
//! parameters and can be propagated, searched over, and validated by Monte
//! Carlo.
//!
//! The crate is organized along that pipeline:
//!
//! - [`model`]: domain types, index layout, power-normalized transmit gains,
//!   and assembly of the time-varying system matrices.
//! - [`covariance`]: joint covariance propagation, the receiver's conditional
//!   (Kalman) covariance recursion, and a batch linear-MMSE oracle.
//! - [`simulate`]: seeded stochastic rollouts and Monte Carlo validation of
//!   the analytic quantities.
//! - [`optimize`]: terminal-cost minimization over controller schedules under
//!   instantaneous or total power constraints, plus reference baselines.

pub mod config;
pub mod covariance;
pub mod error;
pub mod linalg;
pub mod model;
pub mod optimize;
pub mod simulate;

pub use config::{CostVariant, PowerMode, SystemConfig};
pub use error::Error;

/// Dimension of each node's controller state. The scheme fixes this to 3;
/// the derived state layouts below follow from it.
pub const CONTROLLER_DIM: usize = 3;

/// Dimension of the joint state (m1, m2, u1, u2, ur).
pub const Q_DIM: usize = 2 + 3 * CONTROLLER_DIM;

/// Dimension of the receiver-observed state (joint state plus the embedded
/// channel output).
pub const P_DIM: usize = Q_DIM + 1;

pub type Result<T> = std::result::Result<T, Error>;
