//! Rest points of the blown-up flow and their linearized structure.
//!
//! On the collision manifold the flow is at rest exactly at the critical
//! points of the size-normalized potential, with zero shape momenta and the
//! radial momentum forced by zero energy:
//!
//!   dV/d(sigma) = 0,  shape_mom = 0,  radial = -sqrt(2 V(sigma)).
//!
//! The linearization block-diagonalizes: the size and radial directions each
//! carry the eigenvalue radial*, and the (shape_mom, sigma) block reduces,
//! after the symmetric change of frame by the square root of the kinetic
//! matrix, to independent 2x2 blocks
//!
//!   lambda^2 - (-radial*/2) lambda - c_j = 0,
//!   lambda_j(+/-) = -radial*/4 +/- sqrt(radial*^2 + 16 c_j) / 4,
//!
//! one per eigenvalue c_j of D = alpha B alpha, where A is the kinetic
//! matrix, alpha its positive square root, and B the potential Hessian.
//! Modes with c_j > 0 are saddle pairs (one converging direction each);
//! modes with c_j < 0 have both eigenvalues in the right half plane; c_j = 0
//! contributes a neutral direction.

use nalgebra::{DMatrix, DVector, Matrix2, Vector2};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::masses::MassSystem;
use crate::shape;
use crate::Floors;

/// Options for root finding and linearization.
#[derive(Debug, Clone)]
pub struct EquilibriumOptions {
    /// Absolute convergence threshold on the sup norm of the potential
    /// gradient.
    pub newton_tol: f64,
    pub max_iters: usize,
    /// Step for the fourth-order differences building the Hessian.
    pub fd_step: f64,
    /// Relative threshold below which a block eigenvalue c_j counts as zero.
    pub zero_threshold: f64,
    /// Relative threshold on the discriminant for flagging a resonant block.
    pub resonance_tol: f64,
    /// Survey iterates whose shape coordinates exceed this radius are
    /// treated as having left the chart (the gradient decays toward the
    /// chart boundary, so the stopping test fires on points that are still
    /// marching) and are discarded instead of reported as families.
    pub escape_radius: f64,
    pub floors: Floors,
}

impl Default for EquilibriumOptions {
    fn default() -> Self {
        EquilibriumOptions {
            newton_tol: 1e-12,
            max_iters: 120,
            fd_step: 1e-3,
            zero_threshold: 1e-7,
            resonance_tol: 1e-10,
            escape_radius: 1e3,
            floors: Floors::default(),
        }
    }
}

/// A real-or-complex eigenvalue.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ComplexVal {
    pub re: f64,
    pub im: f64,
}

/// One 2x2 block of the linearization.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ModePair {
    /// Eigenvalue of the symmetric product alpha B alpha.
    pub c: f64,
    /// Discriminant of the block quadratic, (radial/2)^2 + 4c.
    pub discriminant: f64,
    pub lambda_plus: ComplexVal,
    pub lambda_minus: ComplexVal,
    pub resonant: bool,
    /// True when the block contributes a converging direction (c > 0).
    pub stable: bool,
}

impl ModePair {
    /// True when the block carries a neutral direction: the exactly
    /// degenerate pair (-radial/2, 0) of a vanishing restoring coefficient.
    pub fn center(&self) -> bool {
        !self.stable && self.lambda_minus.re == 0.0 && self.lambda_minus.im == 0.0
    }
}

/// Eigenvalue pair of one linearization block [[0, 1], [c, -radial/2]].
///
/// `c_scale` sets the level (through `opts.zero_threshold`) below which c
/// snaps to exactly zero; the pair is then (-radial/2, 0) with no rounding
/// from the square root.
pub fn classify_mode(c: f64, c_scale: f64, radial: f64, opts: &EquilibriumOptions) -> ModePair {
    let m = -radial / 2.0;
    let c_eff = if c.abs() <= opts.zero_threshold * c_scale {
        0.0
    } else {
        c
    };
    let disc = m * m + 4.0 * c;
    let disc_scale = (m * m + 4.0 * c.abs()).max(1e-300);
    let resonant = disc.abs() <= opts.resonance_tol * disc_scale;
    let (lambda_plus, lambda_minus) = if c_eff == 0.0 {
        // Exactly lower-triangular block: no square root involved.
        (ComplexVal { re: m, im: 0.0 }, ComplexVal { re: 0.0, im: 0.0 })
    } else if resonant {
        let l = m / 2.0;
        (ComplexVal { re: l, im: 0.0 }, ComplexVal { re: l, im: 0.0 })
    } else if disc > 0.0 {
        let root = disc.sqrt();
        (
            ComplexVal {
                re: (m + root) / 2.0,
                im: 0.0,
            },
            ComplexVal {
                re: (m - root) / 2.0,
                im: 0.0,
            },
        )
    } else {
        let w = (-disc).sqrt() / 2.0;
        (
            ComplexVal { re: m / 2.0, im: w },
            ComplexVal {
                re: m / 2.0,
                im: -w,
            },
        )
    };
    ModePair {
        c,
        discriminant: disc,
        lambda_plus,
        lambda_minus,
        resonant,
        stable: c_eff > 0.0,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum SpectrumClass {
    /// No neutral directions and no resonant blocks.
    Hyperbolic,
    /// At least one neutral direction or resonant block.
    Degenerate,
}

/// Everything the linearization at a rest point determines.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EquilibriumReport {
    pub sigma: DVector<f64>,
    /// Collision-bound radial momentum -sqrt(2 V).
    pub radial: f64,
    pub potential: f64,
    pub grad_norm: f64,
    pub kinetic_matrix: DMatrix<f64>,
    pub hessian: DMatrix<f64>,
    /// alpha B alpha.
    pub symmetric_product: DMatrix<f64>,
    pub sqrt_kinetic: DMatrix<f64>,
    pub inv_sqrt_kinetic: DMatrix<f64>,
    /// Orthonormal eigenbasis of the symmetric product, one column per mode.
    pub mode_basis: DMatrix<f64>,
    /// Blocks sorted by ascending c.
    pub modes: Vec<ModePair>,
    pub stable_dim: usize,
    pub unstable_dim: usize,
    pub center_dim: usize,
    pub class: SpectrumClass,
}

/// Fourth-order central differences of the closed-form potential gradient.
pub fn hessian_potential(
    ms: &MassSystem,
    sigma: &DVector<f64>,
    opts: &EquilibriumOptions,
) -> Result<DMatrix<f64>> {
    let dim = sigma.len();
    let h = opts.fd_step * sigma.amax().max(1.0);
    let mut hess = DMatrix::zeros(dim, dim);
    let mut probe = sigma.clone();
    for k in 0..dim {
        let x = sigma[k];
        probe[k] = x + h;
        let gp = shape::potential_gradient(ms, &probe, &opts.floors)?;
        probe[k] = x - h;
        let gm = shape::potential_gradient(ms, &probe, &opts.floors)?;
        probe[k] = x + 2.0 * h;
        let gpp = shape::potential_gradient(ms, &probe, &opts.floors)?;
        probe[k] = x - 2.0 * h;
        let gmm = shape::potential_gradient(ms, &probe, &opts.floors)?;
        probe[k] = x;
        let col = (&gp - &gm) * (8.0 / (12.0 * h)) - (&gpp - &gmm) * (1.0 / (12.0 * h));
        hess.column_mut(k).copy_from(&col);
    }
    let asym = (&hess - hess.transpose()).amax();
    let scale = hess.amax().max(1.0);
    if asym > 1e-5 * scale {
        return Err(Error::Asymmetry {
            asym: asym / scale,
            limit: 1e-5,
        });
    }
    let sym = (&hess + hess.transpose()) * 0.5;
    Ok(sym)
}

/// Symmetric positive square root (and inverse square root) via the
/// eigendecomposition. Fails if the matrix is not positive definite.
fn spd_sqrt(m: &DMatrix<f64>) -> Result<(DMatrix<f64>, DMatrix<f64>)> {
    let sym = (m + m.transpose()) * 0.5;
    let eig = sym.symmetric_eigen();
    let mut root = DMatrix::zeros(m.nrows(), m.ncols());
    let mut inv_root = DMatrix::zeros(m.nrows(), m.ncols());
    for (i, &ev) in eig.eigenvalues.iter().enumerate() {
        if ev <= 0.0 {
            return Err(Error::SquareRootDomain {
                what: "kinetic matrix eigenvalue".into(),
                value: ev,
            });
        }
        let q = eig.eigenvectors.column(i);
        let s = ev.sqrt();
        for r in 0..m.nrows() {
            for c in 0..m.ncols() {
                root[(r, c)] += s * q[r] * q[c];
                inv_root[(r, c)] += q[r] * q[c] / s;
            }
        }
    }
    Ok((root, inv_root))
}

/// Newton iteration with backtracking on the gradient of the size-normalized
/// potential. Converges to any nearby critical point, minimum or saddle.
pub fn find_central_config(
    ms: &MassSystem,
    sigma0: &DVector<f64>,
    opts: &EquilibriumOptions,
) -> Result<DVector<f64>> {
    let mut sigma = sigma0.clone();
    let mut grad = shape::potential_gradient(ms, &sigma, &opts.floors)?;
    for _ in 0..opts.max_iters {
        // Absolute gradient criterion: far from the critical set the
        // gradient also decays (shapes drifting to infinity), so a relative
        // test would accept runaways as converged.
        if grad.amax() <= opts.newton_tol {
            return Ok(sigma);
        }
        let hess = hessian_potential(ms, &sigma, opts)?;
        let delta = hess
            .lu()
            .solve(&(-&grad))
            .ok_or(Error::NoConvergence {
                iters: opts.max_iters,
                residual: grad.amax(),
            })?;
        let g0 = grad.norm();
        let mut t = 1.0;
        loop {
            let trial = &sigma + &delta * t;
            match shape::potential_gradient(ms, &trial, &opts.floors) {
                Ok(g_new) if g_new.norm() <= (1.0 - 1e-4 * t) * g0 => {
                    sigma = trial;
                    grad = g_new;
                    break;
                }
                _ => {
                    t *= 0.5;
                    if t < 1.0 / 1024.0 {
                        return Err(Error::NoConvergence {
                            iters: opts.max_iters,
                            residual: g0,
                        });
                    }
                }
            }
        }
    }
    Err(Error::NoConvergence {
        iters: opts.max_iters,
        residual: grad.amax(),
    })
}

/// Linearize the blown-up flow at a critical shape.
pub fn linearize(
    ms: &MassSystem,
    sigma_star: &DVector<f64>,
    opts: &EquilibriumOptions,
) -> Result<EquilibriumReport> {
    let grad = shape::potential_gradient(ms, sigma_star, &opts.floors)?;
    let v = shape::potential_v(ms, sigma_star, &opts.floors)?;
    let radial = -(2.0 * v).sqrt();
    let a = shape::kinetic_matrix(ms, sigma_star, &opts.floors)?;
    let b = hessian_potential(ms, sigma_star, opts)?;
    let (alpha, alpha_inv) = spd_sqrt(&a)?;
    let d = &alpha * &b * &alpha;
    let d_sym = (&d + d.transpose()) * 0.5;
    let eig = d_sym.clone().symmetric_eigen();

    // Sort modes by ascending c, carrying the basis columns along.
    let dim = sigma_star.len();
    let mut order: Vec<usize> = (0..dim).collect();
    order.sort_by(|&i, &j| eig.eigenvalues[i].partial_cmp(&eig.eigenvalues[j]).unwrap());
    let mut basis = DMatrix::zeros(dim, dim);
    let mut modes = Vec::with_capacity(dim);
    let c_scale = eig.eigenvalues.amax().max(1.0);
    let mut stable_dim = 0;
    let mut unstable_dim = 0;
    let mut center_dim = 0;
    for (slot, &idx) in order.iter().enumerate() {
        basis.column_mut(slot).copy_from(&eig.eigenvectors.column(idx));
        let mp = classify_mode(eig.eigenvalues[idx], c_scale, radial, opts);
        if mp.stable {
            stable_dim += 1;
            unstable_dim += 1;
        } else if mp.center() {
            center_dim += 1;
            unstable_dim += 1;
        } else {
            unstable_dim += 2;
        }
        modes.push(mp);
    }
    let class = if center_dim == 0 && modes.iter().all(|mp| !mp.resonant) {
        SpectrumClass::Hyperbolic
    } else {
        SpectrumClass::Degenerate
    };

    Ok(EquilibriumReport {
        sigma: sigma_star.clone(),
        radial,
        potential: v,
        grad_norm: grad.amax(),
        kinetic_matrix: a,
        hessian: b,
        symmetric_product: d_sym,
        sqrt_kinetic: alpha,
        inv_sqrt_kinetic: alpha_inv,
        mode_basis: basis,
        modes,
        stable_dim,
        unstable_dim,
        center_dim,
        class,
    })
}

/// Unit tangent vector of a chosen block eigendirection: the converging one
/// (lambda_minus, requires c > 0) or the expanding one (lambda_plus).
/// Returns (lambda, d shape_mom, d sigma).
pub fn mode_vector(
    report: &EquilibriumReport,
    mode: usize,
    converging: bool,
) -> Result<(f64, DVector<f64>, DVector<f64>)> {
    let mp = report
        .modes
        .get(mode)
        .ok_or_else(|| Error::InvalidInput(format!("mode index {mode} out of range")))?;
    if converging && !mp.stable {
        return Err(Error::NoStableMode {
            index: mode,
            re: mp.lambda_minus.re,
        });
    }
    if mp.lambda_minus.im != 0.0 {
        return Err(Error::NoStableMode {
            index: mode,
            re: mp.lambda_minus.re,
        });
    }
    let lambda = if converging {
        mp.lambda_minus.re
    } else {
        mp.lambda_plus.re
    };
    let e = report.mode_basis.column(mode).clone_owned();
    let dsig = &report.sqrt_kinetic * &e;
    let ds = (&report.inv_sqrt_kinetic * &e) * lambda;
    let norm = (dsig.norm_squared() + ds.norm_squared()).sqrt();
    Ok((lambda, ds / norm, dsig / norm))
}

/// Closed-form exponential of one 2x2 block [[0, 1], [c, m]] at time t.
pub(crate) fn block_exp(c: f64, m: f64, t: f64, resonance_tol: f64) -> Matrix2<f64> {
    let mat = Matrix2::new(0.0, 1.0, c, m);
    let disc = m * m + 4.0 * c;
    let disc_scale = (m * m + 4.0 * c.abs()).max(1e-300);
    let ident = Matrix2::identity();
    if disc.abs() <= resonance_tol * disc_scale {
        let l = m / 2.0;
        (ident + (mat - ident * l) * t) * (l * t).exp()
    } else if disc > 0.0 {
        let root = disc.sqrt();
        let lp = (m + root) / 2.0;
        let lm = (m - root) / 2.0;
        ((mat - ident * lm) * (lp * t).exp() - (mat - ident * lp) * (lm * t).exp()) * (1.0 / root)
    } else {
        let w = (-disc).sqrt() / 2.0;
        let mu = m / 2.0;
        (ident * (w * t).cos() + (mat - ident * mu) * ((w * t).sin() / w)) * (mu * t).exp()
    }
}

/// Evolve a tangent vector (d radial, d shape_mom, d sigma) at the rest
/// point by the linearized flow for time tau.
pub fn linearized_flow(
    report: &EquilibriumReport,
    dr0: f64,
    ds0: &DVector<f64>,
    dsig0: &DVector<f64>,
    tau: f64,
) -> Result<(f64, DVector<f64>, DVector<f64>)> {
    let dim = report.sigma.len();
    if ds0.len() != dim || dsig0.len() != dim {
        return Err(Error::InvalidInput(format!(
            "tangent blocks must have length {dim}"
        )));
    }
    let m = -report.radial / 2.0;
    // Mode coordinates: a = basis^T alpha^-1 d sigma, b = basis^T alpha d s.
    let a0 = report.mode_basis.transpose() * (&report.inv_sqrt_kinetic * dsig0);
    let b0 = report.mode_basis.transpose() * (&report.sqrt_kinetic * ds0);
    let mut a1 = DVector::zeros(dim);
    let mut b1 = DVector::zeros(dim);
    for j in 0..dim {
        let e = block_exp(report.modes[j].c, m, tau, 1e-10);
        let out = e * Vector2::new(a0[j], b0[j]);
        a1[j] = out.x;
        b1[j] = out.y;
    }
    let dsig = &report.sqrt_kinetic * (&report.mode_basis * a1);
    let ds = &report.inv_sqrt_kinetic * (&report.mode_basis * b1);
    let dr = (report.radial * tau).exp() * dr0;
    Ok((dr, ds, dsig))
}

/// One family of critical shapes found by the randomized survey.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CentralConfigFamily {
    pub sigma: DVector<f64>,
    pub potential: f64,
    pub grad_norm: f64,
    /// How many random starts converged to this point.
    pub hits: usize,
}

/// Randomized survey for critical shapes: Newton from `n_samples` seeded
/// random starts, clustered by proximity. Deterministic for a fixed seed
/// regardless of thread count. Families are sorted by ascending potential.
pub fn survey(
    ms: &MassSystem,
    n_samples: usize,
    seed: u64,
    opts: &EquilibriumOptions,
) -> Result<Vec<CentralConfigFamily>> {
    let dim = ms.shape_dim();
    let pair_at = dim - 2;
    let hits: Vec<DVector<f64>> = (0..n_samples)
        .into_par_iter()
        .filter_map(|k| {
            let mut rng =
                ChaCha8Rng::seed_from_u64(seed ^ (k as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15));
            let mut normal = || {
                // Box-Muller from two uniforms.
                let u1: f64 = rng.random::<f64>().max(1e-12);
                let u2: f64 = rng.random::<f64>();
                (-2.0 * u1.ln()).sqrt() * (std::f64::consts::TAU * u2).cos()
            };
            let mut sigma0 = DVector::zeros(dim);
            for i in 0..dim {
                sigma0[i] = 0.8 * normal();
            }
            // Respect the chart's sign convention sigma_2 < 0 and keep the
            // start away from the collinear locus.
            sigma0[pair_at] = -(sigma0[pair_at].abs() + 0.2);
            find_central_config(ms, &sigma0, opts)
                .ok()
                .filter(|sigma| sigma.amax() <= opts.escape_radius)
        })
        .collect();

    let mut families: Vec<CentralConfigFamily> = Vec::new();
    for sigma in hits {
        let scale = sigma.amax().max(1.0);
        match families
            .iter_mut()
            .find(|f| (&f.sigma - &sigma).amax() <= 1e-6 * scale)
        {
            Some(f) => f.hits += 1,
            None => {
                let potential = shape::potential_v(ms, &sigma, &opts.floors)?;
                let grad_norm = shape::potential_gradient(ms, &sigma, &opts.floors)?.amax();
                families.push(CentralConfigFamily {
                    sigma,
                    potential,
                    grad_norm,
                    hits: 1,
                });
            }
        }
    }
    families.sort_by(|x, y| x.potential.partial_cmp(&y.potential).unwrap());
    Ok(families)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::{assert_abs_diff_eq, assert_relative_eq};

    fn three_unit_masses() -> MassSystem {
        MassSystem::new(vec![1.0, 1.0, 1.0]).unwrap()
    }

    fn equilateral_sigma() -> DVector<f64> {
        DVector::from_vec(vec![-2.0 / 3.0f64.sqrt(), 0.0])
    }

    fn collinear_sigma() -> DVector<f64> {
        DVector::from_vec(vec![0.0, 2.0 / 3.0])
    }

    #[test]
    fn newton_lands_on_the_equilateral_point() {
        let ms = three_unit_masses();
        let start = DVector::from_vec(vec![-1.05, -0.08]);
        let sigma = find_central_config(&ms, &start, &EquilibriumOptions::default()).unwrap();
        assert_abs_diff_eq!((&sigma - equilateral_sigma()).amax(), 0.0, epsilon = 1e-10);
    }

    #[test]
    fn newton_lands_on_the_collinear_point() {
        let ms = three_unit_masses();
        let start = DVector::from_vec(vec![-0.04, 0.72]);
        let sigma = find_central_config(&ms, &start, &EquilibriumOptions::default()).unwrap();
        // The collinear critical point has sigma_2 = 0 exactly; Newton may
        // approach from either side.
        assert_abs_diff_eq!(sigma[0], 0.0, epsilon = 1e-10);
        assert_relative_eq!(sigma[1], 2.0 / 3.0, epsilon = 1e-10);
    }

    #[test]
    fn equilateral_linearization_matches_closed_forms() {
        let ms = three_unit_masses();
        let rep = linearize(&ms, &equilateral_sigma(), &EquilibriumOptions::default()).unwrap();
        assert!(rep.grad_norm < 1e-12);
        assert_relative_eq!(rep.potential, 3.0, epsilon = 1e-13);
        assert_relative_eq!(rep.radial, -(6.0f64).sqrt(), epsilon = 1e-13);
        // Kinetic matrix (16/3) I, Hessian (27/32) I, so both c equal 9/2.
        for i in 0..2 {
            for j in 0..2 {
                let val = if i == j { 16.0 / 3.0 } else { 0.0 };
                assert_relative_eq!(rep.kinetic_matrix[(i, j)], val, epsilon = 1e-12, max_relative = 1e-12);
                let h = if i == j { 27.0 / 32.0 } else { 0.0 };
                assert_abs_diff_eq!(rep.hessian[(i, j)], h, epsilon = 1e-9);
            }
        }
        assert_eq!(rep.modes.len(), 2);
        for mp in &rep.modes {
            assert_relative_eq!(mp.c, 4.5, epsilon = 1e-8, max_relative = 1e-8);
            assert!(mp.stable);
            assert!(!mp.resonant);
            assert_relative_eq!(mp.lambda_plus.re, 2.820312652277756, epsilon = 1e-8, max_relative = 1e-8);
            assert_relative_eq!(mp.lambda_minus.re, -1.5955677808861672, epsilon = 1e-8, max_relative = 1e-8);
        }
        assert_eq!(rep.stable_dim, 2);
        assert_eq!(rep.center_dim, 0);
        assert_eq!(rep.class, SpectrumClass::Hyperbolic);
    }

    #[test]
    fn collinear_linearization_has_one_spiral_and_one_saddle() {
        let ms = three_unit_masses();
        let rep = linearize(&ms, &collinear_sigma(), &EquilibriumOptions::default()).unwrap();
        assert_relative_eq!(rep.potential, 2.5 * 2.0f64.sqrt(), epsilon = 1e-13);
        // Hessian diag(-189 sqrt(2)/128, 783 sqrt(2)/128).
        assert_abs_diff_eq!(rep.hessian[(0, 0)], -189.0 * 2.0f64.sqrt() / 128.0, epsilon = 1e-8);
        assert_abs_diff_eq!(rep.hessian[(1, 1)], 783.0 * 2.0f64.sqrt() / 128.0, epsilon = 1e-8);
        assert_abs_diff_eq!(rep.hessian[(0, 1)], 0.0, epsilon = 1e-8);
        assert_eq!(rep.modes.len(), 2);
        let spiral = &rep.modes[0];
        assert_relative_eq!(spiral.c, -4.949747468305833, epsilon = 1e-7, max_relative = 1e-7);
        assert!(!spiral.stable);
        assert!(spiral.lambda_plus.im > 0.0);
        assert_relative_eq!(spiral.lambda_plus.re, 0.6647869871181236, epsilon = 1e-7, max_relative = 1e-7);
        assert_relative_eq!(spiral.lambda_plus.im, 2.1231593746264648, epsilon = 1e-7, max_relative = 1e-7);
        let saddle = &rep.modes[1];
        assert_relative_eq!(saddle.c, 20.506096654409877, epsilon = 1e-7, max_relative = 1e-7);
        assert!(saddle.stable);
        assert_relative_eq!(saddle.lambda_plus.re, 5.2416896944794535, epsilon = 1e-7, max_relative = 1e-7);
        assert_relative_eq!(saddle.lambda_minus.re, -3.9121157202432064, epsilon = 1e-7, max_relative = 1e-7);
        assert_eq!(rep.stable_dim, 1);
        assert_eq!(rep.unstable_dim, 3);
        assert_eq!(rep.center_dim, 0);
    }

    #[test]
    fn four_body_tetrahedron_linearization() {
        let ms = MassSystem::new(vec![1.0; 4]).unwrap();
        let start = {
            let mut s = DVector::zeros(5);
            s[0] = 1.25;
            s[1] = 0.05;
            s[2] = -0.02;
            s[3] = -1.02;
            s[4] = 0.03;
            s
        };
        let sigma = find_central_config(&ms, &start, &EquilibriumOptions::default()).unwrap();
        let rep = linearize(&ms, &sigma, &EquilibriumOptions::default()).unwrap();
        assert_relative_eq!(rep.potential, 3.0 * 6.0f64.sqrt(), epsilon = 1e-10);
        assert_relative_eq!(rep.radial, -(6.0 * 6.0f64.sqrt()).sqrt(), epsilon = 1e-10);
        // c spectrum: (3/4) V twice and (3/2) V three times.
        let v = rep.potential;
        let cs: Vec<f64> = rep.modes.iter().map(|m| m.c).collect();
        for k in 0..2 {
            assert_relative_eq!(cs[k], 0.75 * v, epsilon = 1e-6, max_relative = 1e-6);
        }
        for k in 2..5 {
            assert_relative_eq!(cs[k], 1.5 * v, epsilon = 1e-6, max_relative = 1e-6);
        }
        assert_eq!(rep.stable_dim, 5);
        assert_eq!(rep.center_dim, 0);
        for (mp, expect) in rep.modes.iter().zip([
            -1.577312177263474,
            -1.577312177263474,
            -2.497198530326693,
            -2.497198530326693,
            -2.497198530326693,
        ]) {
            assert_relative_eq!(mp.lambda_minus.re, expect, epsilon = 1e-7, max_relative = 1e-7);
        }
    }

    #[test]
    fn survey_finds_both_three_body_families() {
        let ms = three_unit_masses();
        let fams = survey(&ms, 48, 7, &EquilibriumOptions::default()).unwrap();
        assert!(fams.len() >= 2, "found {} families", fams.len());
        assert_relative_eq!(fams[0].potential, 3.0, epsilon = 1e-9);
        assert!(
            fams.iter()
                .any(|f| (f.potential - 2.5 * 2.0f64.sqrt()).abs() < 1e-9),
            "no collinear family among {:?}",
            fams.iter().map(|f| f.potential).collect::<Vec<_>>()
        );
        for f in &fams {
            assert!(f.grad_norm < 1e-10);
        }
    }

    #[test]
    fn linearized_flow_scales_eigenvectors_exponentially() {
        let ms = three_unit_masses();
        let rep = linearize(&ms, &equilateral_sigma(), &EquilibriumOptions::default()).unwrap();
        let (lambda, ds, dsig) = mode_vector(&rep, 0, true).unwrap();
        assert!(lambda < 0.0);
        let tau = 0.8;
        let (dr, ds1, dsig1) = linearized_flow(&rep, 0.0, &ds, &dsig, tau).unwrap();
        assert_abs_diff_eq!(dr, 0.0, epsilon = 1e-15);
        let factor = (lambda * tau).exp();
        assert_abs_diff_eq!((&ds1 - &ds * factor).amax(), 0.0, epsilon = 1e-12);
        assert_abs_diff_eq!((&dsig1 - &dsig * factor).amax(), 0.0, epsilon = 1e-12);
    }

    #[test]
    fn linearized_flow_composes() {
        let ms = three_unit_masses();
        let rep = linearize(&ms, &collinear_sigma(), &EquilibriumOptions::default()).unwrap();
        let ds0 = DVector::from_vec(vec![0.3, -0.2]);
        let dsig0 = DVector::from_vec(vec![-0.1, 0.4]);
        let (r1, s1, g1) = linearized_flow(&rep, 0.7, &ds0, &dsig0, 0.9).unwrap();
        let (r2, s2, g2) = linearized_flow(&rep, r1, &s1, &g1, 0.4).unwrap();
        let (r3, s3, g3) = linearized_flow(&rep, 0.7, &ds0, &dsig0, 1.3).unwrap();
        assert_relative_eq!(r2, r3, epsilon = 1e-12);
        assert_abs_diff_eq!((&s2 - &s3).amax(), 0.0, epsilon = 1e-11);
        assert_abs_diff_eq!((&g2 - &g3).amax(), 0.0, epsilon = 1e-11);
    }

    #[test]
    fn block_exp_matches_series_in_all_branches() {
        let t = 0.7;
        for (c, m) in [(4.5, 1.2247), (-4.95, 1.3296), (0.0, 1.5), (-0.5625, 1.5)] {
            let mat = Matrix2::new(0.0, 1.0, c, m);
            // Taylor reference.
            let mut reference = Matrix2::identity();
            let mut term = Matrix2::identity();
            for k in 1..40 {
                term = term * mat * (t / k as f64);
                reference += term;
            }
            let closed = block_exp(c, m, t, 1e-10);
            assert_abs_diff_eq!((closed - reference).amax(), 0.0, epsilon = 1e-10);
        }
    }

    #[test]
    fn requesting_a_converging_direction_of_a_spiral_fails() {
        let ms = three_unit_masses();
        let rep = linearize(&ms, &collinear_sigma(), &EquilibriumOptions::default()).unwrap();
        match mode_vector(&rep, 0, true) {
            Err(Error::NoStableMode { index, .. }) => assert_eq!(index, 0),
            other => panic!("expected NoStableMode, got {other:?}"),
        }
    }

    #[test]
    fn mode_vectors_are_unit_and_satisfy_the_eigen_relation() {
        let ms = three_unit_masses();
        let rep = linearize(&ms, &equilateral_sigma(), &EquilibriumOptions::default()).unwrap();
        for mode in 0..2 {
            for converging in [true, false] {
                let (lambda, ds, dsig) = mode_vector(&rep, mode, converging).unwrap();
                assert_relative_eq!(ds.norm_squared() + dsig.norm_squared(), 1.0, epsilon = 1e-12);
                // d sigma' = A ds must equal lambda d sigma, and
                // d s' = B d sigma - (radial/2) ds must equal lambda ds.
                let lhs1 = &rep.kinetic_matrix * &ds;
                assert_abs_diff_eq!((&lhs1 - &dsig * lambda).amax(), 0.0, epsilon = 1e-9);
                let lhs2 = &rep.hessian * &dsig - &ds * (rep.radial / 2.0);
                assert_abs_diff_eq!((&lhs2 - &ds * lambda).amax(), 0.0, epsilon = 1e-8);
            }
        }
    }
}
