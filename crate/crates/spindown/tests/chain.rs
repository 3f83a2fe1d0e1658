//! End-to-end consistency of the full chart chain against the direct
//! gravitational integrator.
//!
//! A three-body system released from rest has exactly zero linear and
//! angular momentum, so its motion is faithfully represented in every chart
//! of the chain, including the rescaled one. The test pushes the initial
//! state through the whole chain, integrates the rescaled flow in its own
//! time variable, maps the rescaled clock back to physical time by the
//! size-powered reparameterization, and requires the reconstructed
//! barycentric states to match a direct integration of the gravitational
//! equations at the matched times.

use nalgebra::{Rotation3, Vector3};
use spindown::jacobi;
use spindown::masses::MassSystem;
use spindown::mcgehee::{self, BlowupOptions};
use spindown::nbody::{self, CartesianState};
use spindown::ode::SolverOptions;
use spindown::regular::AngleState;
use spindown::shape::{self, GradientMode};
use spindown::so3;
use spindown::spin;
use spindown::Floors;

/// A scalene triangle at rest, tilted out of the coordinate planes so the
/// frame angles are far from the chart degeneracies, and centered on its
/// barycenter.
fn resting_triangle() -> (MassSystem, CartesianState) {
    let ms = MassSystem::new(vec![1.0, 1.3, 0.7]).unwrap();
    let tilt = Rotation3::from_euler_angles(0.7, 0.45, -0.3);
    let raw = [
        Vector3::new(0.8, 0.25, 0.0),
        Vector3::new(-0.55, 0.6, 0.0),
        Vector3::new(-0.3, -0.75, 0.0),
    ];
    let mut q: Vec<Vector3<f64>> = raw.iter().map(|v| tilt * v).collect();
    let mut com = Vector3::zeros();
    for (i, qi) in q.iter().enumerate() {
        com += ms.mass(i + 1) * qi;
    }
    com /= ms.total();
    for qi in q.iter_mut() {
        *qi -= com;
    }
    let p = vec![Vector3::zeros(); 3];
    (ms, CartesianState::new(q, p).unwrap())
}

#[test]
fn rescaled_flow_matches_the_direct_integrator_in_physical_time() {
    let floors = Floors::default();
    let (ms, s0) = resting_triangle();

    // Released from rest: both conserved momenta vanish identically.
    assert!(nbody::angular_momentum_cartesian(&s0).amax() < 1e-15);

    // Forward chain to the rescaled chart.
    let js = jacobi::to_jacobi(&ms, &s0).unwrap();
    let rs = so3::reduce_jacobi(&ms, &js, &floors).unwrap();
    assert!(
        rs.p_phi.abs().max(rs.p_theta.abs()).max(rs.p_psi.abs()) < 1e-13,
        "a resting system must carry no frame momenta"
    );
    let ss = shape::shape_split(&ms, &rs.eta, &rs.xi, &floors).unwrap();
    let w = AngleState::from_euler(&rs.angles);
    let bs0 = mcgehee::blow_up(&ss, w, &floors).unwrap();

    // The rescaled energy is size times the physical energy.
    let h_cart = nbody::hamiltonian_cartesian(&ms, &s0, floors.separation).unwrap();
    let e0 = mcgehee::scaled_energy(&ms, &bs0, &floors).unwrap();
    assert!(
        (e0 - bs0.rho * h_cart).abs() < 1e-12 * e0.abs().max(1.0),
        "scaled energy {e0} vs rho * H = {}",
        bs0.rho * h_cart
    );

    // Integrate the rescaled flow in its own time.
    let tau_max = 1.2;
    let mut opts = BlowupOptions::default();
    opts.solver.rtol = 1e-12;
    opts.solver.atol = 1e-14;
    opts.grad_mode = GradientMode::Analytic;
    let traj = mcgehee::integrate_blowup(&ms, &bs0, (0.0, tau_max), &opts, vec![]).unwrap();
    assert!(traj.halted_by().is_none());

    // The collapse has started but no pair has come close: the window ends
    // with the system still comfortably inside every chart guard.
    let end = traj.final_state(&ms).unwrap();
    assert!(end.rho > 0.2 * bs0.rho && end.rho < bs0.rho);

    // Map the rescaled clock to physical time and integrate the original
    // equations of motion over the same physical window.
    let t_end = traj.physical_time(tau_max);
    assert!(t_end > 0.0);
    let cart_opts = SolverOptions {
        rtol: 1e-12,
        atol: 1e-14,
        ..SolverOptions::default()
    };
    let direct = nbody::integrate_cartesian(&ms, &s0, (0.0, t_end), &cart_opts, 1e-9).unwrap();

    // Compare the reconstructed barycentric states at matched times.
    let mut last_t = -1.0;
    let mut worst_q: f64 = 0.0;
    let mut worst_p: f64 = 0.0;
    for k in 0..=8 {
        let tau = tau_max * (k as f64) / 8.0;
        let t = traj.physical_time(tau);
        assert!(t > last_t, "the physical clock must run strictly forward");
        last_t = t;
        let bs = traj.state_at(&ms, tau).unwrap();
        let rebuilt = spin::reconstruct_cartesian(&ms, &bs, &floors).unwrap();
        let reference = direct.state_at(t, ms.n_bodies());
        for i in 0..ms.n_bodies() {
            worst_q = worst_q.max((rebuilt.q[i] - reference.q[i]).amax());
            worst_p = worst_p.max((rebuilt.p[i] - reference.p[i]).amax());
        }
        // The reconstruction stays on the zero-angular-momentum shell.
        assert!(nbody::angular_momentum_cartesian(&rebuilt).amax() < 1e-9);
    }
    assert!(
        worst_q < 1e-7 && worst_p < 1e-7,
        "chain-vs-direct deviation: positions {worst_q:.3e}, momenta {worst_p:.3e}"
    );

    // Energy bookkeeping holds at the far end of the window as well: the
    // physical energy of the final rescaled state equals the conserved
    // direct energy.
    let h_end = mcgehee::scaled_energy(&ms, &end, &floors).unwrap() / end.rho;
    assert!((h_end - h_cart).abs() < 1e-8 * h_cart.abs().max(1.0));
}

#[test]
fn collapse_from_rest_keeps_falling_in_both_charts() {
    let floors = Floors::default();
    let (ms, s0) = resting_triangle();
    let js = jacobi::to_jacobi(&ms, &s0).unwrap();
    let rs = so3::reduce_jacobi(&ms, &js, &floors).unwrap();
    let ss = shape::shape_split(&ms, &rs.eta, &rs.xi, &floors).unwrap();
    let bs0 = mcgehee::blow_up(&ss, AngleState::from_euler(&rs.angles), &floors).unwrap();

    let mut opts = BlowupOptions::default();
    opts.solver.rtol = 1e-11;
    opts.solver.atol = 1e-13;
    opts.grad_mode = GradientMode::Analytic;
    let traj = mcgehee::integrate_blowup(&ms, &bs0, (0.0, 1.2), &opts, vec![]).unwrap();

    // With negative energy and no initial velocity the size decreases
    // monotonically over the early window and the radial momentum goes
    // negative immediately.
    let mut prev_rho = f64::INFINITY;
    for k in 0..=12 {
        let tau = 1.2 * (k as f64) / 12.0;
        let bs = traj.state_at(&ms, tau).unwrap();
        assert!(bs.rho < prev_rho || k == 0);
        prev_rho = bs.rho;
        if k > 0 {
            assert!(bs.radial < 0.0);
        }
    }
}
