//! Loadability analysis for AC power networks.
//!
//! Bus voltages are handled in rectangular coordinates, which makes the
//! power flow equations quadratic and the Jacobian affine in the state. On
//! top of that model the crate answers three questions about an operating
//! point:
//!
//! * is it on the loadability boundary (the Pareto front of achievable
//!   active-power consumptions)? See [`boundary::check_on_boundary`].
//! * how far is it from that boundary? See [`boundary::margin`].
//! * which boundary point maximizes a weighted load growth `z·p`? See
//!   [`pareto::locate_boundary_point`].
//!
//! Supporting modules cover case ingestion ([`case_io`]), the power flow
//! model and Newton solver ([`powerflow`]), the per-bus circle picture
//! ([`geometry`]), brute-force ground truth for small networks ([`oracle`])
//! and a Thevenin-equivalent baseline ([`thevenin`]).

pub mod boundary;
pub mod case_io;
mod error;
pub mod geometry;
pub mod oracle;
pub mod pareto;
pub mod plotdata;
pub mod powerflow;
pub mod thevenin;

pub use case_io::{Network, NetworkCase};
pub use error::{Error, Result};
pub use num_complex::Complex64;
pub use powerflow::{JacobianMatrix, VoltageState};
