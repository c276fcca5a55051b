//! Momentum observables of a quantum particle under a quadratic friction
//! force evolve, in the Heisenberg picture, by the Lorenz flow. Their averages
//! over a momentum wavepacket follow the classical trajectory of the packet
//! center for a time that grows without bound as the packet narrows.
//!
//! Modules:
//! - [`lorenz`]: the vector field, Jacobian, equilibria and the decaying invariant
//! - [`integrate`]: fixed RK4 and adaptive 5(4) propagation with dense output
//! - [`ensemble`]: wavepacket densities, quadrature and observable averages
//! - [`chaos`]: Lyapunov spectrum and Ehrenfest-time measurements
//! - [`cli`]: command-line front end writing CSV artifacts

pub mod chaos;
pub mod cli;
pub mod ensemble;
pub mod error;
pub mod integrate;
pub mod lorenz;
mod ode;
pub(crate) mod summation;

pub use error::{Error, Result};
pub use integrate::{dense_eval, flow_map, integrate, integrate_with_tangent, IntegratorConfig, Method, Trajectory};
pub use lorenz::{fixed_points, kus_invariant, lorenz_jacobian, lorenz_rhs, JacobianMatrix, LorenzParams, PhasePoint};
