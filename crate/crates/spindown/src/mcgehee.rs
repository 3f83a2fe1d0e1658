//! Blown-up total-collision flow. The size rho and its momentum are rescaled
//! so that total collision becomes an invariant boundary {rho = 0} carrying
//! its own finite flow, and time is stretched so the approach takes forever:
//!
//!   radial_t = radial sqrt(rho),  shape_mom_t = shape_mom / sqrt(rho),
//!   d(physical time) = rho^(3/2) d(tau).
//!
//! In the stretched time the system is polynomial in the scaled variables
//! wherever the shape potential is smooth:
//!
//!   rho'      = rho * radial
//!   radial'   = radial^2 / 2 + 2 T - V
//!   sigma'    = dT/d(shape_mom)
//!   shape_mom' = -d(T - V)/d(sigma) - radial * shape_mom / 2
//!
//! with T the rotation-free kinetic form at unit size and V the
//! size-normalized potential. The frame angles ride along through the
//! regularized rotation field, which is momentum-linear and therefore finite
//! on {rho = 0}. The whole module works at zero total angular momentum,
//! the only case total collision admits.

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::masses::MassSystem;
use crate::ode::{self, CrossingDirection, Event, EventAction, SolverOptions};
use crate::regular::{self, AngleState};
use crate::shape::{self, GradientMode, ShapeState};
use crate::Floors;

/// State of the blown-up flow.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BlowupState {
    /// Configuration size; zero exactly on the collision manifold.
    pub rho: f64,
    /// Scaled radial momentum.
    pub radial: f64,
    /// Scaled shape momenta.
    pub shape_mom: DVector<f64>,
    /// Shape coordinates.
    pub sigma: DVector<f64>,
    /// Frame-angle state (u, v, c, alpha).
    pub w: AngleState,
}

impl BlowupState {
    pub fn dim(ms: &MassSystem) -> usize {
        2 * ms.shape_dim() + 6
    }

    pub fn pack(&self) -> DVector<f64> {
        let d = self.sigma.len();
        let mut y = DVector::zeros(2 * d + 6);
        y[0] = self.rho;
        y[1] = self.radial;
        y.rows_mut(2, d).copy_from(&self.shape_mom);
        y.rows_mut(2 + d, d).copy_from(&self.sigma);
        y[2 + 2 * d] = self.w.u;
        y[3 + 2 * d] = self.w.v;
        y[4 + 2 * d] = self.w.c;
        y[5 + 2 * d] = self.w.alpha;
        y
    }

    pub fn unpack(ms: &MassSystem, y: &DVector<f64>) -> Result<BlowupState> {
        let d = ms.shape_dim();
        if y.len() != 2 * d + 6 {
            return Err(Error::InvalidInput(format!(
                "flat state has length {}, expected {}",
                y.len(),
                2 * d + 6
            )));
        }
        Ok(BlowupState {
            rho: y[0],
            radial: y[1],
            shape_mom: y.rows(2, d).clone_owned(),
            sigma: y.rows(2 + d, d).clone_owned(),
            w: AngleState {
                u: y[2 + 2 * d],
                v: y[3 + 2 * d],
                c: y[4 + 2 * d],
                alpha: y[5 + 2 * d],
            },
        })
    }
}

/// Rescale a shape-chart state (plus angle state) into blown-up variables.
/// Requires rho > 0; the collision manifold itself has no unscaled preimage.
pub fn blow_up(ss: &ShapeState, w: AngleState, floors: &Floors) -> Result<BlowupState> {
    if ss.rho < floors.division {
        return Err(Error::DivisionDegenerate {
            quantity: "rho",
            value: ss.rho,
            floor: floors.division,
        });
    }
    let root = ss.rho.sqrt();
    Ok(BlowupState {
        rho: ss.rho,
        radial: ss.radial_mom * root,
        shape_mom: &ss.shape_mom / root,
        sigma: ss.sigma.clone(),
        w,
    })
}

/// Undo the blow-up scaling. Requires rho > 0.
pub fn blow_down(bs: &BlowupState, floors: &Floors) -> Result<(ShapeState, AngleState)> {
    if bs.rho < floors.division {
        return Err(Error::DivisionDegenerate {
            quantity: "rho",
            value: bs.rho,
            floor: floors.division,
        });
    }
    let root = bs.rho.sqrt();
    Ok((
        ShapeState {
            shape_mom: &bs.shape_mom * root,
            radial_mom: bs.radial / root,
            sigma: bs.sigma.clone(),
            rho: bs.rho,
        },
        bs.w,
    ))
}

/// Scaled energy E = radial^2/2 + T - V. The physical energy at size rho is
/// E/rho, so finite-energy collision orbits and the collision manifold both
/// live on {E = 0}. Along the flow E' = radial * E.
pub fn scaled_energy(ms: &MassSystem, bs: &BlowupState, floors: &Floors) -> Result<f64> {
    let t = shape::kinetic_quadratic(ms, &bs.shape_mom, &bs.sigma, floors)?;
    let v = shape::potential_v(ms, &bs.sigma, floors)?;
    Ok(bs.radial * bs.radial / 2.0 + t - v)
}

/// The scaled radial momentum forced by E = 0 at the given shape point,
/// taking the collision-bound (negative) branch.
pub fn radial_on_zero_energy(
    ms: &MassSystem,
    shape_mom: &DVector<f64>,
    sigma: &DVector<f64>,
    floors: &Floors,
) -> Result<f64> {
    let t = shape::kinetic_quadratic(ms, shape_mom, sigma, floors)?;
    let v = shape::potential_v(ms, sigma, floors)?;
    let gap = v - t;
    if gap < 0.0 {
        return Err(Error::SquareRootDomain {
            what: "2 (V - T)".into(),
            value: 2.0 * gap,
        });
    }
    Ok(-(2.0 * gap).sqrt())
}

/// Options for integrating the blown-up flow.
#[derive(Debug, Clone)]
pub struct BlowupOptions {
    pub solver: SolverOptions,
    /// How the sigma-gradient of the kinetic form is evaluated inside the
    /// field.
    pub grad_mode: GradientMode,
    /// Halt when |sigma_2| falls to this value (the frame chart's collinear
    /// degeneracy). Ignored for n = 2 where the chart has no such locus.
    pub collinear_floor: f64,
    /// Halt when 1 + c falls to this value (the angle chart's uncovered
    /// pole).
    pub pole_floor: f64,
    pub floors: Floors,
}

impl Default for BlowupOptions {
    fn default() -> Self {
        let mut solver = SolverOptions::default();
        // Keep steps short enough that per-step quadrature of the physical
        // time stays at the solver's accuracy.
        solver.h_max = Some(0.5);
        BlowupOptions {
            solver,
            grad_mode: GradientMode::default(),
            collinear_floor: 1e-6,
            pole_floor: 1e-6,
            floors: Floors::default(),
        }
    }
}

/// Right-hand side of the blown-up flow on packed states.
pub fn blowup_field(
    ms: &MassSystem,
    y: &DVector<f64>,
    grad_mode: GradientMode,
    floors: &Floors,
    out: &mut DVector<f64>,
) -> Result<()> {
    let d = ms.shape_dim();
    let rho = y[0];
    let radial = y[1];
    let s = y.rows(2, d).clone_owned();
    let sigma = y.rows(2 + d, d).clone_owned();
    let w = AngleState {
        u: y[2 + 2 * d],
        v: y[3 + 2 * d],
        c: y[4 + 2 * d],
        alpha: y[5 + 2 * d],
    };

    let t = shape::kinetic_quadratic(ms, &s, &sigma, floors)?;
    let v = shape::potential_v(ms, &sigma, floors)?;
    let dt_ds = shape::kinetic_smom_gradient(ms, &s, &sigma, floors)?;
    let dt_dsigma = shape::kinetic_sigma_gradient(ms, &s, &sigma, grad_mode, floors)?;
    let dv_dsigma = shape::potential_gradient(ms, &sigma, floors)?;
    let rates = regular::w_field(ms, &s, &sigma, &w, floors)?;

    out[0] = rho * radial;
    out[1] = radial * radial / 2.0 + 2.0 * t - v;
    out.rows_mut(2, d)
        .copy_from(&(-(&dt_dsigma - &dv_dsigma) - &s * (radial / 2.0)));
    out.rows_mut(2 + d, d).copy_from(&dt_ds);
    out[2 + 2 * d] = rates.du;
    out[3 + 2 * d] = rates.dv;
    out[4 + 2 * d] = rates.dc;
    out[5 + 2 * d] = rates.dalpha;
    Ok(())
}

/// A blown-up trajectory with dense output.
pub struct BlowupTrajectory {
    pub solution: ode::Solution,
    n_rel: usize,
}

impl BlowupTrajectory {
    pub fn state_at(&self, ms: &MassSystem, tau: f64) -> Result<BlowupState> {
        let y = self.solution.sample(tau);
        BlowupState::unpack(ms, &y)
    }

    pub fn final_state(&self, ms: &MassSystem) -> Result<BlowupState> {
        BlowupState::unpack(ms, self.solution.y_end())
    }

    pub fn tau_end(&self) -> f64 {
        self.solution.t_end()
    }

    pub fn halted_by(&self) -> Option<&str> {
        self.solution.halted_by.as_deref()
    }

    /// Physical time elapsed from the start of the trajectory to tau,
    /// integrating d(time) = rho^(3/2) d(tau) over the dense output.
    pub fn physical_time(&self, tau: f64) -> f64 {
        self.solution
            .quadrature(self.solution.t[0], tau, |_, y: &DVector<f64>| {
                y[0].max(0.0).powf(1.5)
            })
    }

    /// Largest of the two non-collinearity ratios over the stored nodes and
    /// a few interior dense samples per step.
    pub fn non_collinearity_sup(&self, ms: &MassSystem) -> Result<(f64, f64)> {
        let mut sup_inv: f64 = 0.0;
        let mut sup_ratio: f64 = 0.0;
        let ts = &self.solution.t;
        for k in 0..ts.len() {
            let mut eval = |tau: f64| -> Result<()> {
                let bs = self.state_at(ms, tau)?;
                let (a, b) = shape::non_collinearity_ratios(ms, &bs.sigma);
                sup_inv = sup_inv.max(a);
                sup_ratio = sup_ratio.max(b);
                Ok(())
            };
            eval(ts[k])?;
            if k + 1 < ts.len() {
                let (a, b) = (ts[k], ts[k + 1]);
                for frac in [0.25, 0.5, 0.75] {
                    eval(a + frac * (b - a))?;
                }
            }
        }
        Ok((sup_inv, sup_ratio))
    }
}

/// Integrate the blown-up flow. Besides the solver's own failure modes the
/// run halts (recording the event name) when the shape approaches the
/// chart's collinear locus or the angle chart's uncovered pole.
pub fn integrate_blowup(
    ms: &MassSystem,
    bs0: &BlowupState,
    tau_span: (f64, f64),
    opts: &BlowupOptions,
    extra_events: Vec<Event<'_>>,
) -> Result<BlowupTrajectory> {
    let d = ms.shape_dim();
    let y0 = bs0.pack();
    let grad_mode = opts.grad_mode;
    let floors = opts.floors;
    let ms_inner = ms.clone();

    let mut events: Vec<Event> = Vec::new();
    if ms.n_rel() > 2 {
        let floor = opts.collinear_floor;
        events.push(Event {
            name: "collinear-shape".into(),
            action: EventAction::Halt,
            direction: CrossingDirection::Falling,
            func: Box::new(move |_t, y: &DVector<f64>| y[2 + d + (d - 2)].abs() - floor),
        });
    }
    {
        let floor = opts.pole_floor;
        events.push(Event {
            name: "frame-pole".into(),
            action: EventAction::Halt,
            direction: CrossingDirection::Falling,
            func: Box::new(move |_t, y: &DVector<f64>| 1.0 + y[4 + 2 * d] - floor),
        });
    }
    events.extend(extra_events);

    let sol = ode::integrate(
        |_t, y, out| blowup_field(&ms_inner, y, grad_mode, &floors, out),
        tau_span,
        &y0,
        &opts.solver,
        &events,
    )?;
    Ok(BlowupTrajectory {
        solution: sol,
        n_rel: ms.n_rel(),
    })
}

/// Convenience: the trajectory's stored node states.
pub fn node_states(ms: &MassSystem, traj: &BlowupTrajectory) -> Result<Vec<(f64, BlowupState)>> {
    let _ = traj.n_rel;
    traj.solution
        .t
        .iter()
        .zip(traj.solution.y.iter())
        .map(|(&tau, y)| Ok((tau, BlowupState::unpack(ms, y)?)))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::{assert_abs_diff_eq, assert_relative_eq};

    fn floors() -> Floors {
        Floors::default()
    }

    fn three_unit_masses() -> MassSystem {
        MassSystem::new(vec![1.0, 1.0, 1.0]).unwrap()
    }

    /// The equilateral shape of three unit masses and its normalized
    /// potential value 3.
    fn equilateral_sigma() -> DVector<f64> {
        DVector::from_vec(vec![-2.0 / 3.0f64.sqrt(), 0.0])
    }

    fn rest_w() -> AngleState {
        AngleState {
            u: 0.6,
            v: 0.0,
            c: 0.8,
            alpha: 0.0,
        }
    }

    #[test]
    fn blow_down_halves_the_example_radial() {
        let ms = three_unit_masses();
        let bs = BlowupState {
            rho: 4.0,
            radial: -2.0,
            shape_mom: DVector::zeros(ms.shape_dim()),
            sigma: equilateral_sigma(),
            w: rest_w(),
        };
        let (ss, _) = blow_down(&bs, &floors()).unwrap();
        assert_relative_eq!(ss.radial_mom, -1.0, epsilon = 1e-15);
        let back = blow_up(&ss, bs.w, &floors()).unwrap();
        assert_relative_eq!(back.radial, -2.0, epsilon = 1e-15);
        assert_abs_diff_eq!((back.shape_mom - &bs.shape_mom).amax(), 0.0, epsilon = 1e-15);
    }

    #[test]
    fn homothetic_orbit_shrinks_exponentially() {
        // From the equilateral shape at rest with the zero-energy inward
        // radial value, the shape freezes and rho decays like
        // exp(radial * tau).
        let ms = three_unit_masses();
        let sigma = equilateral_sigma();
        let radial = -(2.0 * 3.0f64).sqrt(); // -sqrt(2 V), V = 3
        let bs0 = BlowupState {
            rho: 1.0,
            radial,
            shape_mom: DVector::zeros(2),
            sigma: sigma.clone(),
            w: rest_w(),
        };
        let traj = integrate_blowup(&ms, &bs0, (0.0, 3.0), &BlowupOptions::default(), vec![]).unwrap();
        assert!(traj.halted_by().is_none());
        let end = traj.final_state(&ms).unwrap();
        assert_relative_eq!(end.rho, (3.0 * radial).exp(), max_relative = 1e-6);
        assert_relative_eq!(end.radial, radial, max_relative = 1e-10);
        assert_abs_diff_eq!((&end.sigma - &sigma).amax(), 0.0, epsilon = 1e-9);
        assert_abs_diff_eq!(end.shape_mom.amax(), 0.0, epsilon = 1e-9);
        // The frame never rotates on a homothetic orbit.
        assert_relative_eq!(end.w.u, bs0.w.u, epsilon = 1e-12);
        assert_relative_eq!(end.w.alpha, bs0.w.alpha, epsilon = 1e-12);
    }

    #[test]
    fn collision_manifold_is_exactly_invariant() {
        // rho = 0 stays identically zero: the field's rho-rate vanishes
        // there, stage by stage.
        let ms = three_unit_masses();
        let sigma = DVector::from_vec(vec![-1.3, 0.4]);
        let shape_mom = DVector::from_vec(vec![0.2, -0.1]);
        let radial = radial_on_zero_energy(&ms, &shape_mom, &sigma, &floors()).unwrap();
        let bs0 = BlowupState {
            rho: 0.0,
            radial,
            shape_mom,
            sigma,
            w: rest_w(),
        };
        assert_abs_diff_eq!(scaled_energy(&ms, &bs0, &floors()).unwrap(), 0.0, epsilon = 1e-14);
        let mut opts = BlowupOptions::default();
        opts.solver.rtol = 1e-12;
        opts.solver.atol = 1e-14;
        let traj = integrate_blowup(&ms, &bs0, (0.0, 2.0), &opts, vec![]).unwrap();
        for y in &traj.solution.y {
            assert_eq!(y[0], 0.0);
        }
        let end = traj.final_state(&ms).unwrap();
        assert_abs_diff_eq!(
            scaled_energy(&ms, &end, &floors()).unwrap(),
            0.0,
            epsilon = 1e-10
        );
    }

    #[test]
    fn energy_grows_at_the_radial_rate() {
        // Off {E = 0} the scaled energy obeys E' = radial * E.
        let ms = three_unit_masses();
        let bs0 = BlowupState {
            rho: 0.5,
            radial: -1.1,
            shape_mom: DVector::from_vec(vec![0.3, 0.2]),
            sigma: DVector::from_vec(vec![-1.2, 0.35]),
            w: rest_w(),
        };
        let traj = integrate_blowup(&ms, &bs0, (0.0, 1.0), &BlowupOptions::default(), vec![]).unwrap();
        let h = 1e-5;
        for tau in [0.2, 0.5, 0.8] {
            let em = scaled_energy(&ms, &traj.state_at(&ms, tau - h).unwrap(), &floors()).unwrap();
            let ep = scaled_energy(&ms, &traj.state_at(&ms, tau + h).unwrap(), &floors()).unwrap();
            let mid = traj.state_at(&ms, tau).unwrap();
            let e = scaled_energy(&ms, &mid, &floors()).unwrap();
            assert_relative_eq!((ep - em) / (2.0 * h), mid.radial * e, max_relative = 1e-5);
        }
    }

    #[test]
    fn physical_time_matches_closed_form_on_homothetic_orbit() {
        // d(time) = rho^(3/2) d(tau) with rho = exp(radial tau) integrates to
        // (exp(1.5 radial tau) - 1) / (1.5 radial).
        let ms = three_unit_masses();
        let radial = -(6.0f64).sqrt();
        let bs0 = BlowupState {
            rho: 1.0,
            radial,
            shape_mom: DVector::zeros(2),
            sigma: equilateral_sigma(),
            w: rest_w(),
        };
        let traj = integrate_blowup(&ms, &bs0, (0.0, 2.0), &BlowupOptions::default(), vec![]).unwrap();
        let t = traj.physical_time(2.0);
        let expect = ((1.5 * radial * 2.0).exp() - 1.0) / (1.5 * radial);
        assert_relative_eq!(t, expect, max_relative = 1e-7);
    }

    #[test]
    fn field_cross_check_mode_passes() {
        let ms = MassSystem::new(vec![1.0, 2.0, 0.7, 1.1]).unwrap();
        let d = ms.shape_dim();
        let sigma = DVector::from_fn(d, |i, _| if i == 3 { -1.1 } else { 0.25 + 0.1 * i as f64 });
        let shape_mom = DVector::from_fn(d, |i, _| 0.2 * ((i + 1) as f64).sin());
        let bs0 = BlowupState {
            rho: 0.0,
            radial: -1.0,
            shape_mom,
            sigma,
            w: rest_w(),
        };
        let mut opts = BlowupOptions::default();
        opts.grad_mode = GradientMode::CrossCheck { tol: 1e-6 };
        opts.solver.rtol = 1e-9;
        opts.solver.atol = 1e-9;
        let traj = integrate_blowup(&ms, &bs0, (0.0, 0.3), &opts, vec![]).unwrap();
        assert!(traj.halted_by().is_none());
    }

    #[test]
    fn sphere_constraint_drifts_slowly_at_most() {
        let ms = three_unit_masses();
        let sigma = DVector::from_vec(vec![-1.3, 0.4]);
        let shape_mom = DVector::from_vec(vec![0.25, -0.15]);
        let radial = radial_on_zero_energy(&ms, &shape_mom, &sigma, &floors()).unwrap();
        let bs0 = BlowupState {
            rho: 0.0,
            radial,
            shape_mom,
            sigma,
            w: rest_w(),
        };
        let traj = integrate_blowup(&ms, &bs0, (0.0, 4.0), &BlowupOptions::default(), vec![]).unwrap();
        let end = traj.final_state(&ms).unwrap();
        assert!(end.w.sphere_defect() < 1e-9, "defect {}", end.w.sphere_defect());
    }

    #[test]
    fn zero_energy_radial_requires_enough_potential() {
        let ms = three_unit_masses();
        let sigma = DVector::from_vec(vec![-1.3, 0.4]);
        let huge = DVector::from_vec(vec![10.0, 10.0]);
        match radial_on_zero_energy(&ms, &huge, &sigma, &floors()) {
            Err(Error::SquareRootDomain { .. }) => {}
            other => panic!("expected square-root domain error, got {other:?}"),
        }
    }

    #[test]
    fn pole_approach_halts_with_event() {
        // Drive the frame toward c = -1 by a strong single-momentum spin:
        // for n = 2 the rate of c is proportional to u, so start near the
        // equator heading down.
        let ms = three_unit_masses();
        let sigma = DVector::from_vec(vec![-1.0, 0.0]);
        let shape_mom = DVector::from_vec(vec![0.0, 0.9]);
        // P_1 = sigma_2 s_3 - sigma_3 s_2 = -0.9; dc ~ u * P_1 < 0 for u > 0.
        let radial = radial_on_zero_energy(&ms, &shape_mom, &sigma, &floors()).unwrap();
        let bs0 = BlowupState {
            rho: 0.0,
            radial,
            shape_mom,
            sigma,
            w: AngleState {
                u: 0.99,
                v: 0.0,
                c: -(1.0f64 - 0.99f64 * 0.99).sqrt(),
                alpha: 0.0,
            },
        };
        let mut opts = BlowupOptions::default();
        opts.pole_floor = 0.5;
        let traj = integrate_blowup(&ms, &bs0, (0.0, 50.0), &opts, vec![]).unwrap();
        assert_eq!(traj.halted_by(), Some("frame-pole"));
        let end = traj.final_state(&ms).unwrap();
        assert_relative_eq!(1.0 + end.w.c, 0.5, epsilon = 1e-6);
    }
}
