//! Coordinate charts and diagnostics for total collisions of the spatial
//! N-body problem.
//!
//! The library walks a gravitational system through a chain of canonical
//! chart changes — translation reduction to relative coordinates, rotation
//! reduction to a body frame at zero angular momentum, shape/size splitting,
//! and a polar regularization of the frame angles — then rescales time and
//! momenta so that the total-collision set becomes an invariant boundary
//! manifold of a smooth flow. On that boundary it locates the rest points
//! (central configurations), classifies their linearized spectra, and
//! certifies that trajectories converging to a rest point drag the body
//! frame through only a finite total rotation.
//!
//! Modules, in chain order:
//!
//! * [`masses`] — mass bookkeeping shared by every chart.
//! * [`nbody`] — the original barycentric chart and its direct integrator.
//! * [`jacobi`] — translation reduction to relative position/momentum pairs.
//! * [`so3`] — rotation reduction to frame angles plus surviving components.
//! * [`shape`] — shape/size split with the radial pair factored out.
//! * [`regular`] — polar regularization of the frame angles near a pole.
//! * [`mcgehee`] — collision rescaling and the blown-up flow.
//! * [`equilibria`] — rest points of the blown-up flow and their spectra.
//! * [`spin`] — experiment driver and finite-rotation certificates.
//! * [`selfcheck`] — end-to-end verification battery used by the CLI.
//! * [`ode`] — the embedded Runge–Kutta integrator with dense output.

pub mod equilibria;
pub mod error;
pub mod jacobi;
pub mod masses;
pub mod mcgehee;
pub mod nbody;
pub mod ode;
pub mod regular;
pub mod selfcheck;
pub mod shape;
pub mod so3;
pub mod spin;

pub use error::{Error, Result};
pub use masses::MassSystem;

/// Guard thresholds below which a chart refuses to evaluate, because a
/// denominator or a chart domain boundary is too close.
///
/// Each field protects one kind of division:
///
/// * `separation` — inter-body distances in the potential;
/// * `frame` — the triple product defining the adapted body frame;
/// * `gimbal` — `sin(theta)` in the frame-angle chart;
/// * `division` — generic shape-chart denominators (`sigma_2`, normals);
/// * `pole` — `1 + c` in the regularized angle chart.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct Floors {
    pub separation: f64,
    pub frame: f64,
    pub gimbal: f64,
    pub division: f64,
    pub pole: f64,
}

impl Default for Floors {
    fn default() -> Self {
        Floors {
            separation: 1e-12,
            frame: 1e-10,
            gimbal: 1e-10,
            division: 1e-10,
            pole: 1e-10,
        }
    }
}
