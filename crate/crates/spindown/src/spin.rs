//! Experiment driver for the blown-up flow: seeded runs toward a rest point,
//! dyadic decay accounting for the shape momenta, and certified bounds on the
//! total rotation the body frame can still accumulate.
//!
//! The central claim these tools quantify: on a trajectory converging to a
//! rest point of the blown-up flow, the frame-angle rates are linear in the
//! shape momenta, so the total remaining rotation is bounded by the operator
//! norm of that linear map times the (finite, geometrically decaying)
//! time-integral of the shape-momentum norm.

use nalgebra::{DMatrix, DVector, Vector3};
use serde::{Deserialize, Serialize};

use crate::equilibria::{self, EquilibriumOptions, EquilibriumReport};
use crate::error::{Error, Result};
use crate::jacobi::{self, JacobiState};
use crate::masses::MassSystem;
use crate::mcgehee::{self, BlowupOptions, BlowupState, BlowupTrajectory};
use crate::nbody::CartesianState;
use crate::ode::{CrossingDirection, Event, EventAction};
use crate::regular::{self, AngleState};
use crate::shape::{self, GradientMode};
use crate::so3::ReducedState;
use crate::Floors;

/// Name of the recorded event marking proximity to the rest point.
pub const PROXIMITY_EVENT: &str = "eq-proximity";

/// Neutral default for the frame-angle block: a generic tilt away from the
/// chart origin (u = v = 0), the seam (c = 0) and the uncovered pole
/// (c = -1), so the full inverse chart chain stays available.
pub fn default_tilt() -> AngleState {
    AngleState {
        u: 0.6,
        v: 0.0,
        c: 0.8,
        alpha: 0.0,
    }
}

/// How the initial state of a run is manufactured.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum SeedRecipe {
    /// Start on the homothetic orbit through the located rest shape: shape
    /// momenta zero, shape frozen, size rho0 collapsing at the rest-point
    /// rate (or at `radial0` if given).
    Homothetic { rho0: f64, radial0: Option<f64> },
    /// Start on the collision manifold, displaced from the rest point by
    /// `epsilon` along the converging direction of the given mode, with an
    /// optional second-order correction toward the invariant manifold and
    /// the radial momentum solved for exactly zero scaled energy.
    StableSeed {
        epsilon: f64,
        mode_index: usize,
        quadratic_correction: bool,
    },
    /// Use the given state as-is.
    Explicit { state: BlowupState },
}

fn default_tau_max() -> f64 {
    6.5
}
fn default_rtol() -> f64 {
    1e-10
}
fn default_atol() -> f64 {
    1e-12
}
fn default_eq_proximity() -> f64 {
    3.8e-6
}
fn default_chart_floor() -> f64 {
    1e-6
}

/// Everything needed to reproduce one run: the system, the seed recipe, the
/// time span and solver tolerances, and the chart guard levels. Output
/// handling is deliberately not part of the run description.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub masses: Vec<f64>,
    /// Starting point for the rest-shape search.
    pub sigma_guess: Vec<f64>,
    pub recipe: SeedRecipe,
    #[serde(default = "default_tau_max")]
    pub tau_max: f64,
    #[serde(default = "default_rtol")]
    pub rtol: f64,
    #[serde(default = "default_atol")]
    pub atol: f64,
    /// Field-norm level below which the state counts as near the rest point;
    /// the first crossing anchors the dyadic decay blocks.
    #[serde(default = "default_eq_proximity")]
    pub eq_proximity: f64,
    /// Stop at the first proximity crossing instead of recording it.
    #[serde(default)]
    pub halt_at_proximity: bool,
    /// Frame-angle block of the seed; a generic tilt when omitted.
    #[serde(default)]
    pub w0: Option<AngleState>,
    #[serde(default)]
    pub grad_mode: GradientMode,
    #[serde(default = "default_chart_floor")]
    pub collinear_floor: f64,
    #[serde(default = "default_chart_floor")]
    pub pole_floor: f64,
}

impl ExperimentConfig {
    /// A config with the given system and recipe and every knob at its
    /// default.
    pub fn new(masses: Vec<f64>, sigma_guess: Vec<f64>, recipe: SeedRecipe) -> Self {
        ExperimentConfig {
            masses,
            sigma_guess,
            recipe,
            tau_max: default_tau_max(),
            rtol: default_rtol(),
            atol: default_atol(),
            eq_proximity: default_eq_proximity(),
            halt_at_proximity: false,
            w0: None,
            grad_mode: GradientMode::default(),
            collinear_floor: default_chart_floor(),
            pole_floor: default_chart_floor(),
        }
    }
}

/// Least-squares fit of the late-time shape descent W(tau) = V(sigma(tau))
/// minus the rest-point value.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecayFit {
    /// Number of samples above the rounding floor that entered the fit.
    pub samples: usize,
    /// Fitted exponential decay rate of W.
    pub rate: f64,
    /// Rate the linearization predicts: twice the seeded converging rate.
    pub expected_rate: f64,
    /// Samples where W failed to decrease.
    pub monotone_violations: usize,
    /// Smallest W among the fitted samples.
    pub min_w: f64,
    /// Exponent of a power-law fit of the same samples, for contrast: a
    /// genuine exponential tail keeps drifting here as the window grows.
    pub power_exponent: Option<f64>,
}

/// Summary of one run of the blown-up flow.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpinReport {
    /// First time the field norm fell below the proximity level.
    pub t_window: Option<f64>,
    /// Integrals of the shape-momentum norm over the dyadic blocks
    /// [2^k T, 2^(k+1) T] anchored at the proximity time T.
    pub block_integrals: Vec<f64>,
    /// Consecutive ratios of the block integrals.
    pub block_ratios: Vec<f64>,
    /// Sup over the trajectory of the operator norm of the map from shape
    /// momenta to frame-angle rates.
    pub k_sup: f64,
    /// Certified bound on the chart displacement the frame can still
    /// accumulate after the last complete block: k_sup times the geometric
    /// tail of the block integrals.
    pub tail_bound: Option<f64>,
    /// Geometric ratio used for the tail bound.
    pub tail_ratio: Option<f64>,
    pub w_end: AngleState,
    /// Largest chart displacement from the final frame point over the last
    /// block (or the last quarter of the run when no blocks exist).
    pub w_tail_variation: f64,
    /// Sup over the trajectory of (1/|sigma_2|, |sigma_3/sigma_2|): finite
    /// values witness that the shape stayed clear of the collinear locus.
    pub non_collinearity_sup: (f64, f64),
    /// Sup of |E(tau) - E(0) exp(int R)| over the stored nodes, relative to
    /// the running energy scale.
    pub energy_residual_sup: f64,
    pub rho_sup: f64,
    pub decay_fit: Option<DecayFit>,
    pub tau_end: f64,
    pub halted_by: Option<String>,
    /// Physical time elapsed over the run (zero for runs on the collision
    /// manifold, which takes infinite physical time to reach).
    pub physical_time_end: f64,
    /// Sup of the reconstructed Cartesian angular momentum norm over nodes
    /// with positive size; zero when no node could be reconstructed.
    pub angular_momentum_sup: f64,
}

/// A finished run: the located rest point with its spectrum, the seed that
/// was actually integrated, the trajectory, and the summary.
pub struct ExperimentOutput {
    pub equilibrium: EquilibriumReport,
    pub seed: BlowupState,
    pub trajectory: BlowupTrajectory,
    pub report: SpinReport,
}

/// Seed on the homothetic orbit through the rest shape.
pub fn seed_homothetic(
    report: &EquilibriumReport,
    rho0: f64,
    radial0: Option<f64>,
    w0: AngleState,
) -> BlowupState {
    let d = report.sigma.len();
    BlowupState {
        rho: rho0,
        radial: radial0.unwrap_or(report.radial),
        shape_mom: DVector::zeros(d),
        sigma: report.sigma.clone(),
        w: w0,
    }
}

/// The size-direction-and-shape part of the blown-up field, on vectors
/// packed as (radial momentum, shape momenta, shape). The frame block is
/// excluded: it is driven by this subsystem but does not feed back.
fn subsystem_field(
    ms: &MassSystem,
    x: &DVector<f64>,
    grad_mode: GradientMode,
    floors: &Floors,
) -> Result<DVector<f64>> {
    let d = ms.shape_dim();
    let radial = x[0];
    let s = x.rows(1, d).clone_owned();
    let sigma = x.rows(1 + d, d).clone_owned();
    let t = shape::kinetic_quadratic(ms, &s, &sigma, floors)?;
    let v = shape::potential_v(ms, &sigma, floors)?;
    let dt_ds = shape::kinetic_smom_gradient(ms, &s, &sigma, floors)?;
    let dt_dsigma = shape::kinetic_sigma_gradient(ms, &s, &sigma, grad_mode, floors)?;
    let dv_dsigma = shape::potential_gradient(ms, &sigma, floors)?;
    let mut out = DVector::zeros(1 + 2 * d);
    out[0] = radial * radial / 2.0 + 2.0 * t - v;
    out.rows_mut(1, d)
        .copy_from(&(-(&dt_dsigma - &dv_dsigma) - &s * (radial / 2.0)));
    out.rows_mut(1 + d, d).copy_from(&dt_ds);
    Ok(out)
}

/// Jacobian of the subsystem field at the rest point, assembled from the
/// report's blocks: the radial row is decoupled with rate equal to the rest
/// radial momentum; the momentum rows couple to the shape through the
/// potential Hessian and damp at half the radial rate; the shape rows couple
/// back through the kinetic matrix.
fn subsystem_jacobian(report: &EquilibriumReport) -> DMatrix<f64> {
    let d = report.sigma.len();
    let mut j = DMatrix::zeros(1 + 2 * d, 1 + 2 * d);
    j[(0, 0)] = report.radial;
    for r in 0..d {
        j[(1 + r, 1 + r)] = -report.radial / 2.0;
        for c in 0..d {
            j[(1 + r, 1 + d + c)] = report.hessian[(r, c)];
            j[(1 + d + r, 1 + c)] = report.kinetic_matrix[(r, c)];
        }
    }
    j
}

/// Seed displaced from the rest point along a converging mode.
///
/// The first-order seed sits on the linear approximation of the converging
/// set; with `quadratic_correction` the second-order term of the invariant
/// manifold is added, solved from the quadratic part of the field along the
/// mode direction. Either way the radial momentum is finally re-solved so
/// the scaled energy is exactly zero.
pub fn seed_stable_direction(
    ms: &MassSystem,
    report: &EquilibriumReport,
    epsilon: f64,
    mode_index: usize,
    quadratic_correction: bool,
    w0: AngleState,
    grad_mode: GradientMode,
    floors: &Floors,
) -> Result<BlowupState> {
    let d = report.sigma.len();
    let (lambda, ds, dsig) = equilibria::mode_vector(report, mode_index, true)?;

    // Rest point and mode direction in subsystem packing.
    let mut x_star = DVector::zeros(1 + 2 * d);
    x_star[0] = report.radial;
    x_star.rows_mut(1 + d, d).copy_from(&report.sigma);
    let mut v = DVector::zeros(1 + 2 * d);
    v.rows_mut(1, d).copy_from(&ds);
    v.rows_mut(1 + d, d).copy_from(&dsig);

    let mut x = &x_star + &v * epsilon;
    if quadratic_correction {
        // Quadratic part of the field along v by a second central
        // difference, then the order-epsilon^2 manifold coefficient from
        // (J - 2 lambda) h = -Q(v, v).
        let h_fd = 1e-3;
        let f_plus = subsystem_field(ms, &(&x_star + &v * h_fd), grad_mode, floors)?;
        let f_minus = subsystem_field(ms, &(&x_star - &v * h_fd), grad_mode, floors)?;
        let f_zero = subsystem_field(ms, &x_star, grad_mode, floors)?;
        let q = (&f_plus + &f_minus - &f_zero * 2.0) / (2.0 * h_fd * h_fd);
        let j = subsystem_jacobian(report);
        let shifted = &j - DMatrix::identity(1 + 2 * d, 1 + 2 * d) * (2.0 * lambda);
        let h = shifted.lu().solve(&(-&q)).ok_or(Error::NoConvergence {
            iters: 0,
            residual: 2.0 * lambda,
        })?;
        x += &h * (epsilon * epsilon);
    }

    let shape_mom = x.rows(1, d).clone_owned();
    let sigma = x.rows(1 + d, d).clone_owned();
    // Exact zero-energy radial momentum, collision-bound branch.
    let radial = mcgehee::radial_on_zero_energy(ms, &shape_mom, &sigma, floors)?;
    Ok(BlowupState {
        rho: 0.0,
        radial,
        shape_mom,
        sigma,
        w: w0,
    })
}

/// Rebuild the barycentric Cartesian state of a blown-up point with zero
/// total angular momentum, walking the full inverse chart chain.
pub fn reconstruct_cartesian(
    ms: &MassSystem,
    bs: &BlowupState,
    floors: &Floors,
) -> Result<CartesianState> {
    let (ss, w) = mcgehee::blow_down(bs, floors)?;
    let (eta, xi) = shape::shape_merge(ms, &ss, floors)?;
    let angles = w.to_euler(floors)?;
    let rs = ReducedState {
        p_phi: 0.0,
        p_theta: 0.0,
        p_psi: 0.0,
        eta,
        angles,
        xi,
    };
    let (y, x) = crate::so3::reconstruct(ms, &rs, floors)?;
    let js = JacobiState {
        p_total: Vector3::zeros(),
        b: Vector3::zeros(),
        y,
        x,
    };
    jacobi::from_jacobi(ms, &js)
}

/// Slope/intercept of the least-squares line through (xs, ys).
fn linear_fit(xs: &[f64], ys: &[f64]) -> Option<(f64, f64)> {
    let n = xs.len();
    if n < 2 {
        return None;
    }
    let nf = n as f64;
    let mx = xs.iter().sum::<f64>() / nf;
    let my = ys.iter().sum::<f64>() / nf;
    let mut sxx = 0.0;
    let mut sxy = 0.0;
    for (x, y) in xs.iter().zip(ys) {
        sxx += (x - mx) * (x - mx);
        sxy += (x - mx) * (y - my);
    }
    if sxx <= 0.0 {
        return None;
    }
    let slope = sxy / sxx;
    Some((slope, my - slope * mx))
}

/// Fit w ~ a exp(-rate t) through positive samples; returns (rate, a).
pub(crate) fn fit_exponential(ts: &[f64], ws: &[f64]) -> Option<(f64, f64)> {
    let pairs: (Vec<f64>, Vec<f64>) = ts
        .iter()
        .zip(ws)
        .filter(|(_, w)| **w > 0.0 && w.is_finite())
        .map(|(t, w)| (*t, w.ln()))
        .unzip();
    let (slope, icept) = linear_fit(&pairs.0, &pairs.1)?;
    Some((-slope, icept.exp()))
}

/// Fit w ~ a t^(-p) through positive samples at positive times; returns p.
pub(crate) fn fit_power(ts: &[f64], ws: &[f64]) -> Option<f64> {
    let pairs: (Vec<f64>, Vec<f64>) = ts
        .iter()
        .zip(ws)
        .filter(|(t, w)| **w > 0.0 && w.is_finite() && **t > 0.0)
        .map(|(t, w)| (t.ln(), w.ln()))
        .unzip();
    let (slope, _) = linear_fit(&pairs.0, &pairs.1)?;
    Some(-slope)
}

/// Fit the descent of the shape potential toward its rest value over
/// [from_tau, end of trajectory], checking monotonicity and comparing the
/// decay rate against `expected_rate`.
pub fn descent_diagnostic(
    ms: &MassSystem,
    report: &EquilibriumReport,
    traj: &BlowupTrajectory,
    from_tau: f64,
    expected_rate: f64,
    floors: &Floors,
) -> Result<DecayFit> {
    let tau_end = traj.tau_end();
    let n_samples = 96usize;
    let mut ts = Vec::with_capacity(n_samples);
    let mut ws = Vec::with_capacity(n_samples);
    // Ignore samples once the descent sinks into the rounding floor of the
    // potential evaluation.
    let floor = 1e-13 * report.potential.abs().max(1.0);
    for i in 0..n_samples {
        let tau = from_tau + (tau_end - from_tau) * (i as f64) / ((n_samples - 1) as f64);
        let bs = traj.state_at(ms, tau)?;
        let w = shape::potential_v(ms, &bs.sigma, floors)? - report.potential;
        if !w.is_finite() || w <= floor {
            break;
        }
        ts.push(tau);
        ws.push(w);
    }
    if ts.len() < 8 {
        return Err(Error::InsufficientTail {
            have: ts.len(),
            need: 8,
        });
    }
    let mut monotone_violations = 0usize;
    for k in 1..ws.len() {
        if ws[k] > ws[k - 1] * (1.0 + 1e-6) {
            monotone_violations += 1;
        }
    }
    let (rate, _) = fit_exponential(&ts, &ws).ok_or(Error::InsufficientTail {
        have: ts.len(),
        need: 8,
    })?;
    let min_w = ws.iter().copied().fold(f64::INFINITY, f64::min);
    Ok(DecayFit {
        samples: ts.len(),
        rate,
        expected_rate,
        monotone_violations,
        min_w,
        power_exponent: fit_power(&ts, &ws),
    })
}

/// Locate the rest point, manufacture the seed, integrate, and summarize.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<ExperimentOutput> {
    let ms = MassSystem::new(cfg.masses.clone())?;
    let floors = Floors::default();
    let mut eq_opts = EquilibriumOptions::default();
    eq_opts.floors = floors;

    let guess = DVector::from_vec(cfg.sigma_guess.clone());
    let sigma_star = equilibria::find_central_config(&ms, &guess, &eq_opts)?;
    let equilibrium = equilibria::linearize(&ms, &sigma_star, &eq_opts)?;

    let w0 = cfg.w0.unwrap_or_else(default_tilt);
    let seed = match &cfg.recipe {
        SeedRecipe::Homothetic { rho0, radial0 } => {
            seed_homothetic(&equilibrium, *rho0, *radial0, w0)
        }
        SeedRecipe::StableSeed {
            epsilon,
            mode_index,
            quadratic_correction,
        } => seed_stable_direction(
            &ms,
            &equilibrium,
            *epsilon,
            *mode_index,
            *quadratic_correction,
            w0,
            cfg.grad_mode,
            &floors,
        )?,
        SeedRecipe::Explicit { state } => state.clone(),
    };

    let mut opts = BlowupOptions::default();
    opts.solver.rtol = cfg.rtol;
    opts.solver.atol = cfg.atol;
    opts.grad_mode = cfg.grad_mode;
    opts.collinear_floor = cfg.collinear_floor;
    opts.pole_floor = cfg.pole_floor;
    opts.floors = floors;

    let dim = BlowupState::dim(&ms);
    let ms_ev = ms.clone();
    let gm = cfg.grad_mode;
    let thr = cfg.eq_proximity;
    let proximity = Event {
        name: PROXIMITY_EVENT.to_string(),
        action: if cfg.halt_at_proximity {
            EventAction::Halt
        } else {
            EventAction::Record
        },
        direction: CrossingDirection::Falling,
        func: Box::new(move |_tau, y: &DVector<f64>| {
            let mut out = DVector::zeros(dim);
            match mcgehee::blowup_field(&ms_ev, y, gm, &floors, &mut out) {
                Ok(()) => out.norm() - thr,
                Err(_) => f64::NAN,
            }
        }),
    };

    let trajectory = mcgehee::integrate_blowup(&ms, &seed, (0.0, cfg.tau_max), &opts, vec![proximity])?;
    let report = summarize(&ms, &equilibrium, &cfg.recipe, &trajectory, &floors)?;
    Ok(ExperimentOutput {
        equilibrium,
        seed,
        trajectory,
        report,
    })
}

fn angle_distance(a: &AngleState, b: &AngleState) -> f64 {
    (a.u - b.u)
        .abs()
        .max((a.v - b.v).abs())
        .max((a.alpha - b.alpha).abs())
}

fn summarize(
    ms: &MassSystem,
    equilibrium: &EquilibriumReport,
    recipe: &SeedRecipe,
    traj: &BlowupTrajectory,
    floors: &Floors,
) -> Result<SpinReport> {
    let d = ms.shape_dim();
    let sol = &traj.solution;
    let tau0 = sol.t[0];
    let tau_end = sol.t_end();

    let t_window = sol
        .events
        .iter()
        .find(|h| h.name == PROXIMITY_EVENT)
        .map(|h| h.t);

    // Dyadic decay blocks anchored at the proximity time.
    let mut block_integrals = Vec::new();
    let mut last_span = None;
    if let Some(tw) = t_window {
        if tw > 0.0 {
            let mut a = tw;
            loop {
                let b = 2.0 * a;
                if b > tau_end {
                    break;
                }
                block_integrals.push(sol.quadrature(a, b, |_, y| y.rows(2, d).norm()));
                last_span = Some((a, b));
                a = b;
            }
        }
    }
    let block_ratios: Vec<f64> = block_integrals
        .windows(2)
        .map(|w| if w[0] > 0.0 { w[1] / w[0] } else { f64::INFINITY })
        .collect();

    // Operator norm of the momentum-to-frame-rate map along the run, plus
    // the rest shape itself.
    let node_w = |y: &DVector<f64>| AngleState {
        u: y[2 + 2 * d],
        v: y[3 + 2 * d],
        c: y[4 + 2 * d],
        alpha: y[5 + 2 * d],
    };
    let mut k_sup: f64 = 0.0;
    for y in &sol.y {
        let sigma = y.rows(2 + d, d).clone_owned();
        let m = regular::w_field_matrix(ms, &sigma, &node_w(y), floors)?;
        k_sup = k_sup.max(m.singular_values().amax());
    }
    let w_end = node_w(sol.y_end());
    let m_star = regular::w_field_matrix(ms, &equilibrium.sigma, &w_end, floors)?;
    k_sup = k_sup.max(m_star.singular_values().amax());

    // Geometric tail of the block integrals, certified from the ratios in
    // the contraction regime. Early ratios can exceed one purely because
    // each block is twice as long as the previous; only the second half of
    // the observed ratios speaks for the asymptotics.
    let (tail_bound, tail_ratio) = if block_integrals.len() >= 4 {
        let recent = &block_ratios[block_ratios.len() / 2..];
        let rhat = recent.iter().fold(0.0f64, |m, r| m.max(*r));
        if rhat < 1.0 {
            let i_last = *block_integrals.last().unwrap();
            (Some(k_sup * i_last * rhat / (1.0 - rhat)), Some(rhat))
        } else {
            (None, Some(rhat))
        }
    } else {
        (None, None)
    };

    // Frame displacement across the tail window.
    let (tail_a, tail_b) = last_span.unwrap_or((tau0 + 0.75 * (tau_end - tau0), tau_end));
    let mut w_tail_variation: f64 = 0.0;
    for (k, t) in sol.t.iter().enumerate() {
        if *t >= tail_a && *t <= tail_b {
            w_tail_variation = w_tail_variation.max(angle_distance(&node_w(&sol.y[k]), &w_end));
        }
    }

    let non_collinearity_sup = traj.non_collinearity_sup(ms)?;

    // Drift of the scaled energy against its exact transport law
    // E(tau) = E(0) exp(int R), relative to the running energy scale.
    let mut energy_residual_sup: f64 = 0.0;
    let mut cum = 0.0;
    let mut e0 = 0.0;
    for k in 0..sol.t.len() {
        if k > 0 {
            cum += sol.quadrature(sol.t[k - 1], sol.t[k], |_, y| y[1]);
        }
        let bs = BlowupState::unpack(ms, &sol.y[k])?;
        let t_kin = shape::kinetic_quadratic(ms, &bs.shape_mom, &bs.sigma, floors)?;
        let v_pot = shape::potential_v(ms, &bs.sigma, floors)?;
        let e_k = bs.radial * bs.radial / 2.0 + t_kin - v_pot;
        if k == 0 {
            e0 = e_k;
        }
        let scale = bs.radial * bs.radial / 2.0 + t_kin + v_pot;
        energy_residual_sup = energy_residual_sup.max((e_k - e0 * cum.exp()).abs() / scale);
    }

    let rho_sup = sol.y.iter().fold(0.0f64, |m, y| m.max(y[0]));

    let decay_fit = match recipe {
        SeedRecipe::StableSeed { mode_index, .. } => {
            let (lambda, _, _) = equilibria::mode_vector(equilibrium, *mode_index, true)?;
            let from = t_window.unwrap_or(tau0 + 0.25 * (tau_end - tau0));
            Some(descent_diagnostic(
                ms,
                equilibrium,
                traj,
                from,
                2.0 * lambda.abs(),
                floors,
            )?)
        }
        _ => None,
    };

    // Reconstructed angular momentum over nodes with positive size. Nodes
    // whose reconstruction hits a chart boundary are skipped: the sup is a
    // consistency diagnostic, not a guarded quantity.
    let mut angular_momentum_sup: f64 = 0.0;
    for y in &sol.y {
        if y[0] > floors.division {
            let bs = BlowupState::unpack(ms, y)?;
            if let Ok(cs) = reconstruct_cartesian(ms, &bs, floors) {
                angular_momentum_sup =
                    angular_momentum_sup.max(crate::nbody::angular_momentum_cartesian(&cs).norm());
            }
        }
    }

    Ok(SpinReport {
        t_window,
        block_integrals,
        block_ratios,
        k_sup,
        tail_bound,
        tail_ratio,
        w_end,
        w_tail_variation,
        non_collinearity_sup,
        energy_residual_sup,
        rho_sup,
        decay_fit,
        tau_end,
        halted_by: traj.halted_by().map(String::from),
        physical_time_end: traj.physical_time(tau_end),
        angular_momentum_sup,
    })
}
