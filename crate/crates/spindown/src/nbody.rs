//! Newtonian gravity in inertial Cartesian coordinates.
//!
//! This is the ground truth the coordinate chain is checked against: plain
//! positions and momenta of the n+1 bodies, the pairwise 1/r potential with
//! unit gravitational constant, and a direct integrator for it.

use nalgebra::Vector3;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::masses::MassSystem;
use crate::ode::{
    self, CrossingDirection, Event, EventAction, Solution, SolverOptions,
};

/// Pairwise separations below this are treated as a collision by default.
pub const DEFAULT_SEPARATION_FLOOR: f64 = 1e-12;

/// Positions and conjugate momenta of all bodies, body i at `q[i]`, `p[i]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CartesianState {
    pub q: Vec<Vector3<f64>>,
    pub p: Vec<Vector3<f64>>,
}

impl CartesianState {
    pub fn new(q: Vec<Vector3<f64>>, p: Vec<Vector3<f64>>) -> Result<Self> {
        if q.len() != p.len() {
            return Err(Error::InvalidInput(format!(
                "positions and momenta disagree in length: {} vs {}",
                q.len(),
                p.len()
            )));
        }
        Ok(CartesianState { q, p })
    }

    pub fn n_bodies(&self) -> usize {
        self.q.len()
    }

    fn check(&self, ms: &MassSystem) -> Result<()> {
        if self.q.len() != ms.n_bodies() {
            return Err(Error::InvalidInput(format!(
                "state holds {} bodies but the mass system has {}",
                self.q.len(),
                ms.n_bodies()
            )));
        }
        Ok(())
    }
}

/// Smallest pairwise separation, with the offending pair (1-based indices).
pub fn min_separation(s: &CartesianState) -> (usize, usize, f64) {
    let mut best = (1, 2, f64::INFINITY);
    for i in 0..s.q.len() {
        for j in (i + 1)..s.q.len() {
            let r = (s.q[i] - s.q[j]).norm();
            if r < best.2 {
                best = (i + 1, j + 1, r);
            }
        }
    }
    best
}

/// Potential energy -sum m_i m_j / r_ij (the sign convention puts the force
/// as minus its gradient; the value is negative).
pub fn potential_energy(ms: &MassSystem, s: &CartesianState, floor: f64) -> Result<f64> {
    s.check(ms)?;
    let mut u = 0.0;
    for i in 0..s.q.len() {
        for j in (i + 1)..s.q.len() {
            let r = (s.q[i] - s.q[j]).norm();
            if r < floor {
                return Err(Error::SingularConfiguration {
                    i: i + 1,
                    j: j + 1,
                    sep: r,
                    floor,
                });
            }
            u -= ms.mass(i + 1) * ms.mass(j + 1) / r;
        }
    }
    Ok(u)
}

/// Right-hand side of Hamilton's equations: returns (dq/dt, dp/dt).
pub fn gravitational_field(
    ms: &MassSystem,
    s: &CartesianState,
    floor: f64,
) -> Result<(Vec<Vector3<f64>>, Vec<Vector3<f64>>)> {
    s.check(ms)?;
    let n = s.q.len();
    let dq: Vec<Vector3<f64>> = (0..n).map(|i| s.p[i] / ms.mass(i + 1)).collect();
    let mut dp = vec![Vector3::zeros(); n];
    for i in 0..n {
        for j in (i + 1)..n {
            let d = s.q[j] - s.q[i];
            let r = d.norm();
            if r < floor {
                return Err(Error::SingularConfiguration {
                    i: i + 1,
                    j: j + 1,
                    sep: r,
                    floor,
                });
            }
            let f = d * (ms.mass(i + 1) * ms.mass(j + 1) / (r * r * r));
            dp[i] += f;
            dp[j] -= f;
        }
    }
    Ok((dq, dp))
}

/// Total energy sum |p_i|^2 / (2 m_i) - sum m_i m_j / r_ij.
pub fn hamiltonian_cartesian(ms: &MassSystem, s: &CartesianState, floor: f64) -> Result<f64> {
    s.check(ms)?;
    let kinetic: f64 = s
        .p
        .iter()
        .enumerate()
        .map(|(i, p)| p.norm_squared() / (2.0 * ms.mass(i + 1)))
        .sum();
    Ok(kinetic + potential_energy(ms, s, floor)?)
}

/// Total angular momentum sum q_i x p_i about the origin.
pub fn angular_momentum_cartesian(s: &CartesianState) -> Vector3<f64> {
    s.q.iter().zip(&s.p).map(|(q, p)| q.cross(p)).sum()
}

/// Center of mass of the configuration.
pub fn center_of_mass(ms: &MassSystem, s: &CartesianState) -> Vector3<f64> {
    let mut b = Vector3::zeros();
    for (i, q) in s.q.iter().enumerate() {
        b += q * ms.mass(i + 1);
    }
    b / ms.total()
}

/// Configuration translated to its center of mass and scaled to unit
/// mass-weighted norm |q|_m = sqrt(sum m_i |q_i|^2).
pub fn normalized_configuration(
    ms: &MassSystem,
    q: &[Vector3<f64>],
) -> Result<Vec<Vector3<f64>>> {
    if q.len() != ms.n_bodies() {
        return Err(Error::InvalidInput(format!(
            "configuration holds {} bodies but the mass system has {}",
            q.len(),
            ms.n_bodies()
        )));
    }
    let mut b = Vector3::zeros();
    for (i, qi) in q.iter().enumerate() {
        b += qi * ms.mass(i + 1);
    }
    b /= ms.total();
    let centered: Vec<Vector3<f64>> = q.iter().map(|qi| qi - b).collect();
    let norm_sq: f64 = centered
        .iter()
        .enumerate()
        .map(|(i, c)| ms.mass(i + 1) * c.norm_squared())
        .sum();
    let norm = norm_sq.sqrt();
    if norm < 1e-300 {
        return Err(Error::InvalidInput(
            "configuration is a total collision; cannot normalize".into(),
        ));
    }
    Ok(centered.into_iter().map(|c| c / norm).collect())
}

/// Result of a direct Cartesian integration.
#[derive(Debug, Clone)]
pub struct CartesianTrajectory {
    pub solution: Solution,
    /// Set when the run was stopped by the minimum-separation event rather
    /// than reaching the end of the requested time span.
    pub collided: bool,
}

impl CartesianTrajectory {
    pub fn state_at(&self, t: f64, n_bodies: usize) -> CartesianState {
        unpack(&self.solution.sample(t), n_bodies)
    }

    pub fn final_state(&self, n_bodies: usize) -> CartesianState {
        unpack(self.solution.y_end(), n_bodies)
    }
}

pub fn pack(s: &CartesianState) -> nalgebra::DVector<f64> {
    let n = s.q.len();
    let mut y = nalgebra::DVector::zeros(6 * n);
    for i in 0..n {
        for a in 0..3 {
            y[3 * i + a] = s.q[i][a];
            y[3 * (n + i) + a] = s.p[i][a];
        }
    }
    y
}

pub fn unpack(y: &nalgebra::DVector<f64>, n: usize) -> CartesianState {
    let mut q = Vec::with_capacity(n);
    let mut p = Vec::with_capacity(n);
    for i in 0..n {
        q.push(Vector3::new(y[3 * i], y[3 * i + 1], y[3 * i + 2]));
        p.push(Vector3::new(
            y[3 * (n + i)],
            y[3 * (n + i) + 1],
            y[3 * (n + i) + 2],
        ));
    }
    CartesianState { q, p }
}

/// Integrate the Cartesian equations of motion over `t_span`.
///
/// A pair approaching within `floor` halts the run and marks it as a
/// collision; that is an outcome, not an error.
pub fn integrate_cartesian(
    ms: &MassSystem,
    s0: &CartesianState,
    t_span: (f64, f64),
    opts: &SolverOptions,
    floor: f64,
) -> Result<CartesianTrajectory> {
    s0.check(ms)?;
    let n = s0.n_bodies();
    let y0 = pack(s0);
    let field = |_t: f64, y: &nalgebra::DVector<f64>, dy: &mut nalgebra::DVector<f64>| {
        let s = unpack(y, n);
        // Use a fraction of the event floor inside the field so the stopping
        // event fires before the field itself gives up.
        let (dq, dp) = gravitational_field(ms, &s, floor * 1e-3)?;
        for i in 0..n {
            for a in 0..3 {
                dy[3 * i + a] = dq[i][a];
                dy[3 * (n + i) + a] = dp[i][a];
            }
        }
        Ok(())
    };
    let collision = Event {
        name: "collision".into(),
        action: EventAction::Halt,
        direction: CrossingDirection::Falling,
        func: Box::new(move |_t, y: &nalgebra::DVector<f64>| {
            let s = unpack(y, n);
            min_separation(&s).2 - floor
        }),
    };
    let solution = ode::integrate(field, t_span, &y0, opts, &[collision])?;
    let collided = solution.halted_by.as_deref() == Some("collision");
    Ok(CartesianTrajectory { solution, collided })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::{assert_relative_eq, assert_abs_diff_eq};

    fn two_unit_masses_at(d: f64) -> (MassSystem, CartesianState) {
        let ms = MassSystem::new(vec![1.0, 1.0]).unwrap();
        let s = CartesianState {
            q: vec![
                Vector3::new(d / 2.0, 0.0, 0.0),
                Vector3::new(-d / 2.0, 0.0, 0.0),
            ],
            p: vec![Vector3::zeros(), Vector3::zeros()],
        };
        (ms, s)
    }

    #[test]
    fn force_between_two_unit_masses() {
        let (ms, s) = two_unit_masses_at(2.0);
        let (dq, dp) = gravitational_field(&ms, &s, 1e-12).unwrap();
        assert_eq!(dq[0], Vector3::zeros());
        // Attraction of strength 1/4 pulling body 1 toward body 2.
        assert_abs_diff_eq!(dp[0], Vector3::new(-0.25, 0.0, 0.0), epsilon = 1e-15);
        assert_abs_diff_eq!(dp[1], Vector3::new(0.25, 0.0, 0.0), epsilon = 1e-15);
    }

    #[test]
    fn energy_of_resting_pair() {
        let (ms, s) = two_unit_masses_at(2.0);
        assert_relative_eq!(hamiltonian_cartesian(&ms, &s, 1e-12).unwrap(), -0.5);
    }

    #[test]
    fn field_is_gradient_of_potential() {
        let ms = MassSystem::new(vec![1.0, 2.0, 3.0]).unwrap();
        let s = CartesianState {
            q: vec![
                Vector3::new(0.3, 0.2, 0.1),
                Vector3::new(-0.9, 0.4, 0.0),
                Vector3::new(0.2, -1.1, 0.8),
            ],
            p: vec![Vector3::zeros(); 3],
        };
        let (_, dp) = gravitational_field(&ms, &s, 1e-12).unwrap();
        let h = 1e-6;
        for i in 0..3 {
            for a in 0..3 {
                let mut sp = s.clone();
                let mut sm = s.clone();
                sp.q[i][a] += h;
                sm.q[i][a] -= h;
                let up = potential_energy(&ms, &sp, 1e-12).unwrap();
                let um = potential_energy(&ms, &sm, 1e-12).unwrap();
                let grad = (up - um) / (2.0 * h);
                assert_relative_eq!(dp[i][a], -grad, epsilon = 1e-7, max_relative = 1e-6);
            }
        }
    }

    #[test]
    fn angular_momentum_example() {
        let s = CartesianState {
            q: vec![Vector3::new(1.0, 0.0, 0.0), Vector3::new(0.0, 0.0, 0.0)],
            p: vec![Vector3::new(0.0, 2.0, 0.0), Vector3::new(0.0, 0.0, 0.0)],
        };
        assert_eq!(
            angular_momentum_cartesian(&s),
            Vector3::new(0.0, 0.0, 2.0)
        );
    }

    #[test]
    fn normalized_configuration_example() {
        let ms = MassSystem::new(vec![1.0, 1.0]).unwrap();
        let q = vec![Vector3::new(1.0, 0.0, 0.0), Vector3::new(-1.0, 0.0, 0.0)];
        let qn = normalized_configuration(&ms, &q).unwrap();
        let inv_sqrt2 = 1.0 / 2f64.sqrt();
        assert_abs_diff_eq!(qn[0], Vector3::new(inv_sqrt2, 0.0, 0.0), epsilon = 1e-15);
        assert_abs_diff_eq!(qn[1], Vector3::new(-inv_sqrt2, 0.0, 0.0), epsilon = 1e-15);
        let w: f64 = qn.iter().map(|v| v.norm_squared()).sum();
        assert_relative_eq!(w, 1.0);
    }

    #[test]
    fn kepler_circular_orbit_conserves_and_closes() {
        // Two unit masses on a circular orbit of diameter 2: each moves with
        // speed 1/2 about the center, period 4 pi.
        let ms = MassSystem::new(vec![1.0, 1.0]).unwrap();
        let s0 = CartesianState {
            q: vec![Vector3::new(1.0, 0.0, 0.0), Vector3::new(-1.0, 0.0, 0.0)],
            p: vec![Vector3::new(0.0, 0.5, 0.0), Vector3::new(0.0, -0.5, 0.0)],
        };
        let e0 = hamiltonian_cartesian(&ms, &s0, 1e-12).unwrap();
        assert_relative_eq!(e0, -0.25);
        let period = 4.0 * std::f64::consts::PI;
        let traj = integrate_cartesian(
            &ms,
            &s0,
            (0.0, period),
            &SolverOptions::default(),
            DEFAULT_SEPARATION_FLOOR,
        )
        .unwrap();
        assert!(!traj.collided);
        let sf = traj.final_state(2);
        assert_abs_diff_eq!(sf.q[0], s0.q[0], epsilon = 1e-6);
        let ef = hamiltonian_cartesian(&ms, &sf, 1e-12).unwrap();
        assert_relative_eq!(ef, e0, max_relative = 1e-9);
        let c = angular_momentum_cartesian(&sf);
        assert_abs_diff_eq!(c, Vector3::new(0.0, 0.0, 1.0), epsilon = 1e-9);
    }

    #[test]
    fn free_fall_collision_is_flagged() {
        let (ms, s0) = two_unit_masses_at(2.0);
        let traj = integrate_cartesian(
            &ms,
            &s0,
            (0.0, 10.0),
            &SolverOptions::default(),
            1e-6,
        )
        .unwrap();
        assert!(traj.collided);
        assert!(traj.solution.t_end() < 10.0);
        let sf = traj.final_state(2);
        let (_, _, r) = min_separation(&sf);
        assert_relative_eq!(r, 1e-6, max_relative = 1e-3);
    }

    #[test]
    fn rotated_state_has_rotated_field() {
        let ms = MassSystem::new(vec![2.0, 1.0, 0.5]).unwrap();
        let s = CartesianState {
            q: vec![
                Vector3::new(0.3, 0.2, 0.1),
                Vector3::new(-0.9, 0.4, 0.0),
                Vector3::new(0.2, -1.1, 0.8),
            ],
            p: vec![
                Vector3::new(0.1, -0.2, 0.05),
                Vector3::new(0.0, 0.3, -0.1),
                Vector3::new(-0.1, -0.1, 0.05),
            ],
        };
        let rot = nalgebra::Rotation3::from_axis_angle(
            &nalgebra::Unit::new_normalize(Vector3::new(1.0, 2.0, -0.5)),
            0.8,
        );
        let sr = CartesianState {
            q: s.q.iter().map(|v| rot * v).collect(),
            p: s.p.iter().map(|v| rot * v).collect(),
        };
        let (dq, dp) = gravitational_field(&ms, &s, 1e-12).unwrap();
        let (dqr, dpr) = gravitational_field(&ms, &sr, 1e-12).unwrap();
        for i in 0..3 {
            assert_abs_diff_eq!(dqr[i], rot * dq[i], epsilon = 1e-14);
            assert_abs_diff_eq!(dpr[i], rot * dp[i], epsilon = 1e-14);
        }
    }
}
