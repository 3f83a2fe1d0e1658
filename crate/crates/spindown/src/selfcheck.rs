//! End-to-end verification battery.
//!
//! Each check exercises one guaranteed property of the library — canonical
//! form preservation of the chart maps, agreement of the energy across
//! charts, angular-momentum bookkeeping, the energy transport law along
//! integrated trajectories, rest-point location and spectra, the homothetic
//! orbit, the finite-rotation certificate, and the accuracy order of the
//! linearized flow — and reports the measured defect next to the threshold
//! it is held to. `run_all` executes the whole battery and never panics:
//! a check that aborts is converted into a failed result carrying the error.

use std::f64::consts::{FRAC_PI_2, PI};
use std::fmt;

use nalgebra::{DMatrix, DVector, Matrix3, Vector2, Vector3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::equilibria::{self, EquilibriumOptions, EquilibriumReport};
use crate::error::{Error, Result};
use crate::jacobi::{self, JacobiState};
use crate::masses::MassSystem;
use crate::mcgehee::{self, BlowupOptions, BlowupState};
use crate::nbody::{self, CartesianState};
use crate::regular;
use crate::shape::{self, GradientMode, ShapeState};
use crate::so3::{self, AngularBlock, EulerTriple, FrameBlocks, ReducedState};
use crate::spin::{self, ExperimentConfig, SeedRecipe};
use crate::Floors;

/// Outcome of one verification criterion.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CriterionResult {
    /// Stable identifier, e.g. "1-symplectic".
    pub id: String,
    pub passed: bool,
    /// Headline defect (or score, for order-of-accuracy style checks).
    pub measured: f64,
    /// Level the headline number is held to.
    pub threshold: f64,
    /// Human-readable breakdown of what was measured.
    pub detail: String,
}

impl fmt::Display for CriterionResult {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "criterion {}: {} (measured {:.3e} vs threshold {:.3e}) - {}",
            self.id,
            if self.passed { "PASS" } else { "FAIL" },
            self.measured,
            self.threshold,
            self.detail
        )
    }
}

/// Run the full battery. Results come back in criterion order; a check that
/// returns an error is reported as failed with the error in the detail.
pub fn run_all(seed: u64) -> Vec<CriterionResult> {
    use rayon::prelude::*;
    (0..11usize).into_par_iter().map(|k| run_one(k, seed)).collect()
}

fn run_one(k: usize, seed: u64) -> CriterionResult {
    match k {
        0 => guard("1-symplectic", 1e-8, check_symplectic(seed)),
        1 => guard("2-chart-equivalence", 1e-10, check_chart_equivalence(seed)),
        2 => guard("3-angular-momentum", 1e-12, check_angular_momentum(seed)),
        3 => guard("4-energy-transport", 1e-7, check_energy_transport()),
        4 => guard("5-central-configs", 1e-9, check_central_configs(seed)),
        5 => guard("6a-spectrum-formula", 1e-9, check_spectrum_formula()),
        6 => guard("6b-degenerate-pair", 0.0, check_degenerate_pair()),
        7 => guard("6c-center-dimension", 1.0, check_center_dimension()),
        8 => guard("7-homothetic", 1e-8, check_homothetic_oracle()),
        9 => guard("8-finite-rotation", 1e-6, check_finite_rotation()),
        _ => guard("9-linearization-order", 1.8, check_linearization_order()),
    }
}

fn guard(id: &str, threshold: f64, r: Result<CriterionResult>) -> CriterionResult {
    r.unwrap_or_else(|e| CriterionResult {
        id: id.to_string(),
        passed: false,
        measured: f64::NAN,
        threshold,
        detail: format!("aborted: {e}"),
    })
}

// ---------------------------------------------------------------------------
// Random admissible states
// ---------------------------------------------------------------------------

/// Deterministic Gaussian sampler (Box-Muller over a counter-based stream).
struct Sampler {
    rng: ChaCha8Rng,
    spare: Option<f64>,
}

impl Sampler {
    fn new(seed: u64) -> Sampler {
        Sampler {
            rng: ChaCha8Rng::seed_from_u64(seed),
            spare: None,
        }
    }

    fn normal(&mut self) -> f64 {
        if let Some(z) = self.spare.take() {
            return z;
        }
        loop {
            let u: f64 = self.rng.random();
            let v: f64 = self.rng.random();
            if u <= f64::MIN_POSITIVE {
                continue;
            }
            let r = (-2.0 * u.ln()).sqrt();
            let (s, c) = (2.0 * PI * v).sin_cos();
            self.spare = Some(r * s);
            return r * c;
        }
    }

    fn uniform(&mut self, lo: f64, hi: f64) -> f64 {
        lo + (hi - lo) * self.rng.random::<f64>()
    }

    fn vec3(&mut self, scale: f64) -> Vector3<f64> {
        Vector3::new(self.normal(), self.normal(), self.normal()) * scale
    }
}

/// One random state expressed in every chart along the chain.
struct SamplePoint {
    cart: CartesianState,
    js: JacobiState,
    rs: ReducedState,
    ss: ShapeState,
    /// Internal (translation-reduced) energy.
    h_internal: f64,
}

struct SampleSpec {
    /// Project the momenta onto the zero-angular-momentum subspace.
    zero_c: bool,
    /// Resample until the internal energy is at least this far from zero.
    min_internal: f64,
}

/// Project the momenta onto the subspace with zero total momentum AND zero
/// total angular momentum (the center-of-momentum frame, where the internal
/// angular momentum coincides with the total one): p <- p - A^T (A A^T)^{-1}
/// A p where A stacks the linear and angular momentum maps.
fn project_zero_angular_momentum(q: &[Vector3<f64>], p: &mut [Vector3<f64>]) -> bool {
    let n = q.len();
    let mut a = DMatrix::zeros(6, 3 * n);
    for (i, qi) in q.iter().enumerate() {
        a.view_mut((0, 3 * i), (3, 3)).copy_from(&Matrix3::identity());
        a.view_mut((3, 3 * i), (3, 3)).copy_from(&qi.cross_matrix());
    }
    let mut pv = DVector::zeros(3 * n);
    for (i, pi) in p.iter().enumerate() {
        pv.fixed_rows_mut::<3>(3 * i).copy_from(pi);
    }
    let constraint = &a * &pv;
    let aat = &a * a.transpose();
    match aat.lu().solve(&constraint) {
        Some(lam) => {
            let pv = pv - a.transpose() * lam;
            for (i, pi) in p.iter_mut().enumerate() {
                pi.copy_from(&pv.fixed_rows::<3>(3 * i).clone_owned());
            }
            true
        }
        None => false,
    }
}

/// Draw a random state that sits comfortably inside every chart: separated
/// bodies, frame angles away from the gimbal locus and the branch cuts, and
/// a shape away from the collinear locus. Margins are wide enough that the
/// finite-difference stencils used below stay admissible too.
fn sample_point(
    ms: &MassSystem,
    smp: &mut Sampler,
    floors: &Floors,
    spec: &SampleSpec,
) -> Result<SamplePoint> {
    let n = ms.n_bodies();
    for _ in 0..2000 {
        let q: Vec<Vector3<f64>> = (0..n).map(|_| smp.vec3(1.0)).collect();
        let mut p: Vec<Vector3<f64>> = (0..n).map(|_| smp.vec3(0.7)).collect();
        let mut separated = true;
        for i in 0..n {
            for j in i + 1..n {
                if (q[i] - q[j]).norm() < 0.45 {
                    separated = false;
                }
            }
        }
        if !separated {
            continue;
        }
        if spec.zero_c && !project_zero_angular_momentum(&q, &mut p) {
            continue;
        }
        let cart = CartesianState { q, p };
        let js = match jacobi::to_jacobi(ms, &cart) {
            Ok(v) => v,
            Err(_) => continue,
        };
        let rs = match so3::reduce(ms, &js.y, &js.x, floors) {
            Ok(v) => v,
            Err(_) => continue,
        };
        let th = rs.angles.theta;
        if th.sin() < 0.35 || th.cos().abs() < 0.12 {
            continue;
        }
        if rs.angles.phi.abs() > PI - 0.2 || rs.angles.psi.abs() > PI - 0.2 {
            continue;
        }
        let ss = match shape::shape_split(ms, &rs.eta, &rs.xi, floors) {
            Ok(v) => v,
            Err(_) => continue,
        };
        let (inv2, r32) = shape::non_collinearity_ratios(ms, &ss.sigma);
        if inv2 > 5.0 || r32 > 8.0 {
            continue;
        }
        let h_internal = jacobi::hamiltonian_jacobi(ms, &js, floors.separation)?;
        if h_internal.abs() < spec.min_internal {
            continue;
        }
        return Ok(SamplePoint {
            cart,
            js,
            rs,
            ss,
            h_internal,
        });
    }
    Err(Error::InvalidInput(
        "could not draw an admissible random state".into(),
    ))
}

// ---------------------------------------------------------------------------
// Flattened chart maps and the canonical-form defect
// ---------------------------------------------------------------------------

fn cart_to_flat(s: &CartesianState) -> DVector<f64> {
    let n = s.q.len();
    let mut z = DVector::zeros(6 * n);
    for i in 0..n {
        z.fixed_rows_mut::<3>(3 * i).copy_from(&s.q[i]);
        z.fixed_rows_mut::<3>(3 * n + 3 * i).copy_from(&s.p[i]);
    }
    z
}

fn cart_from_flat(n: usize, z: &DVector<f64>) -> CartesianState {
    let vec_at = |k: usize| Vector3::new(z[k], z[k + 1], z[k + 2]);
    CartesianState {
        q: (0..n).map(|i| vec_at(3 * i)).collect(),
        p: (0..n).map(|i| vec_at(3 * n + 3 * i)).collect(),
    }
}

fn jacobi_to_flat(js: &JacobiState) -> DVector<f64> {
    let n = js.x.len();
    let mut z = DVector::zeros(6 * (n + 1));
    z.fixed_rows_mut::<3>(0).copy_from(&js.b);
    for (i, xi) in js.x.iter().enumerate() {
        z.fixed_rows_mut::<3>(3 + 3 * i).copy_from(xi);
    }
    let off = 3 * (n + 1);
    z.fixed_rows_mut::<3>(off).copy_from(&js.p_total);
    for (i, yi) in js.y.iter().enumerate() {
        z.fixed_rows_mut::<3>(off + 3 + 3 * i).copy_from(yi);
    }
    z
}

fn jacobi_from_flat(n_rel: usize, z: &DVector<f64>) -> JacobiState {
    let vec_at = |k: usize| Vector3::new(z[k], z[k + 1], z[k + 2]);
    let off = 3 * (n_rel + 1);
    JacobiState {
        b: vec_at(0),
        x: (0..n_rel).map(|i| vec_at(3 + 3 * i)).collect(),
        p_total: vec_at(off),
        y: (0..n_rel).map(|i| vec_at(off + 3 + 3 * i)).collect(),
    }
}

/// Frame blocks flattened as (full blocks..., pair, last): 3 n_rel - 3 slots.
fn frame_to_flat(fb: &FrameBlocks, out: &mut [f64]) {
    let mut k = 0;
    for b in &fb.full {
        out[k] = b.x;
        out[k + 1] = b.y;
        out[k + 2] = b.z;
        k += 3;
    }
    out[k] = fb.pair.x;
    out[k + 1] = fb.pair.y;
    out[k + 2] = fb.last;
}

fn frame_from_flat(n_rel: usize, z: &[f64]) -> FrameBlocks {
    let full: Vec<Vector3<f64>> = (0..n_rel.saturating_sub(2))
        .map(|j| Vector3::new(z[3 * j], z[3 * j + 1], z[3 * j + 2]))
        .collect();
    let off = 3 * (n_rel - 2);
    FrameBlocks {
        full,
        pair: Vector2::new(z[off], z[off + 1]),
        last: z[off + 2],
    }
}

/// Reduced chart flattened as (phi, theta, psi, xi...; Phi, Theta, Psi, eta...).
fn reduced_to_flat(rs: &ReducedState) -> DVector<f64> {
    let nf = 3 * rs.xi.n_rel() - 3;
    let mut z = DVector::zeros(2 * (3 + nf));
    z[0] = rs.angles.phi;
    z[1] = rs.angles.theta;
    z[2] = rs.angles.psi;
    frame_to_flat(&rs.xi, &mut z.as_mut_slice()[3..3 + nf]);
    let off = 3 + nf;
    z[off] = rs.p_phi;
    z[off + 1] = rs.p_theta;
    z[off + 2] = rs.p_psi;
    frame_to_flat(&rs.eta, &mut z.as_mut_slice()[off + 3..]);
    z
}

fn reduced_from_flat(n_rel: usize, z: &DVector<f64>) -> ReducedState {
    let nf = 3 * n_rel - 3;
    let off = 3 + nf;
    ReducedState {
        angles: EulerTriple {
            phi: z[0],
            theta: z[1],
            psi: z[2],
        },
        xi: frame_from_flat(n_rel, &z.as_slice()[3..3 + nf]),
        p_phi: z[off],
        p_theta: z[off + 1],
        p_psi: z[off + 2],
        eta: frame_from_flat(n_rel, &z.as_slice()[off + 3..]),
    }
}

/// Shape chart flattened as (sigma, rho; shape_mom, radial_mom).
fn shape_to_flat(ss: &ShapeState) -> DVector<f64> {
    let d = ss.sigma.len();
    let mut z = DVector::zeros(2 * (d + 1));
    z.rows_mut(0, d).copy_from(&ss.sigma);
    z[d] = ss.rho;
    z.rows_mut(d + 1, d).copy_from(&ss.shape_mom);
    z[2 * d + 1] = ss.radial_mom;
    z
}

fn shape_from_flat(d: usize, z: &DVector<f64>) -> ShapeState {
    ShapeState {
        sigma: z.rows(0, d).clone_owned(),
        rho: z[d],
        shape_mom: z.rows(d + 1, d).clone_owned(),
        radial_mom: z[2 * d + 1],
    }
}

type FlatMap<'a> = &'a dyn Fn(&DVector<f64>) -> Result<DVector<f64>>;

/// Fourth-order central-difference Jacobian with per-column relative steps.
fn fd_jacobian(map: FlatMap<'_>, z: &DVector<f64>) -> Result<DMatrix<f64>> {
    let m = map(z)?.len();
    let n = z.len();
    let mut jac = DMatrix::zeros(m, n);
    for k in 0..n {
        let h = 1e-4 * z[k].abs().max(1.0);
        let eval = |zk: f64| -> Result<DVector<f64>> {
            let mut w = z.clone();
            w[k] = zk;
            map(&w)
        };
        let f_m2 = eval(z[k] - 2.0 * h)?;
        let f_m1 = eval(z[k] - h)?;
        let f_p1 = eval(z[k] + h)?;
        let f_p2 = eval(z[k] + 2.0 * h)?;
        let col = (f_m2 - f_p2 + (f_p1 - f_m1) * 8.0) / (12.0 * h);
        jac.set_column(k, &col);
    }
    Ok(jac)
}

/// Max-entry deviation of J^T Omega J from Omega, where Omega is the
/// standard two-form for a (positions; momenta) ordering.
fn symplectic_defect(jac: &DMatrix<f64>) -> f64 {
    let m = jac.nrows();
    let half = m / 2;
    let mut omega = DMatrix::zeros(m, m);
    for i in 0..half {
        omega[(i, half + i)] = 1.0;
        omega[(half + i, i)] = -1.0;
    }
    let d = jac.transpose() * &omega * jac - omega;
    d.amax()
}

fn map_defect(map: FlatMap<'_>, z: &DVector<f64>) -> Result<f64> {
    Ok(symplectic_defect(&fd_jacobian(map, z)?))
}

// ---------------------------------------------------------------------------
// Criterion 1: every chart map preserves the canonical form
// ---------------------------------------------------------------------------

pub fn check_symplectic(seed: u64) -> Result<CriterionResult> {
    const POINTS: usize = 100;
    let floors = Floors::default();
    let spec = SampleSpec {
        zero_c: false,
        min_internal: 0.0,
    };
    let mut smp = Sampler::new(seed ^ 0x5137_0001);
    let mut sups: Vec<(String, f64)> = Vec::new();

    for masses in [vec![1.0, 1.3, 0.7], vec![1.0, 1.3, 0.7, 1.1]] {
        let ms = MassSystem::new(masses)?;
        let nb = ms.n_bodies();
        let nr = ms.n_rel();
        let d = ms.shape_dim();
        let nf = 3 * nr - 3;
        let points: Vec<SamplePoint> = (0..POINTS)
            .map(|_| sample_point(&ms, &mut smp, &floors, &spec))
            .collect::<Result<_>>()?;

        let to_jac = |z: &DVector<f64>| -> Result<DVector<f64>> {
            Ok(jacobi_to_flat(&jacobi::to_jacobi(&ms, &cart_from_flat(nb, z))?))
        };
        let from_jac = |z: &DVector<f64>| -> Result<DVector<f64>> {
            Ok(cart_to_flat(&jacobi::from_jacobi(&ms, &jacobi_from_flat(nr, z))?))
        };
        let do_reduce = |z: &DVector<f64>| -> Result<DVector<f64>> {
            let vec_at = |k: usize| Vector3::new(z[k], z[k + 1], z[k + 2]);
            let x: Vec<Vector3<f64>> = (0..nr).map(|i| vec_at(3 * i)).collect();
            let y: Vec<Vector3<f64>> = (0..nr).map(|i| vec_at(3 * nr + 3 * i)).collect();
            Ok(reduced_to_flat(&so3::reduce(&ms, &y, &x, &floors)?))
        };
        let do_reconstruct = |z: &DVector<f64>| -> Result<DVector<f64>> {
            let rs = reduced_from_flat(nr, z);
            let (y, x) = so3::reconstruct(&ms, &rs, &floors)?;
            let mut out = DVector::zeros(6 * nr);
            for i in 0..nr {
                out.fixed_rows_mut::<3>(3 * i).copy_from(&x[i]);
                out.fixed_rows_mut::<3>(3 * nr + 3 * i).copy_from(&y[i]);
            }
            Ok(out)
        };
        let do_split = |z: &DVector<f64>| -> Result<DVector<f64>> {
            let xi = frame_from_flat(nr, &z.as_slice()[..nf]);
            let eta = frame_from_flat(nr, &z.as_slice()[nf..]);
            Ok(shape_to_flat(&shape::shape_split(&ms, &eta, &xi, &floors)?))
        };
        let do_merge = |z: &DVector<f64>| -> Result<DVector<f64>> {
            let ss = shape_from_flat(d, z);
            let (eta, xi) = shape::shape_merge(&ms, &ss, &floors)?;
            let mut out = DVector::zeros(2 * nf);
            frame_to_flat(&xi, &mut out.as_mut_slice()[..nf]);
            frame_to_flat(&eta, &mut out.as_mut_slice()[nf..]);
            Ok(out)
        };

        let relative_flat = |pt: &SamplePoint| -> DVector<f64> {
            let mut z = DVector::zeros(6 * nr);
            for i in 0..nr {
                z.fixed_rows_mut::<3>(3 * i).copy_from(&pt.js.x[i]);
                z.fixed_rows_mut::<3>(3 * nr + 3 * i).copy_from(&pt.js.y[i]);
            }
            z
        };
        let frame_flat = |pt: &SamplePoint| -> DVector<f64> {
            let mut z = DVector::zeros(2 * nf);
            frame_to_flat(&pt.rs.xi, &mut z.as_mut_slice()[..nf]);
            frame_to_flat(&pt.rs.eta, &mut z.as_mut_slice()[nf..]);
            z
        };

        let families: Vec<(String, FlatMap<'_>, Box<dyn Fn(&SamplePoint) -> DVector<f64>>)> = vec![
            (
                format!("{nb}-body translation reduction"),
                &to_jac,
                Box::new(|pt: &SamplePoint| cart_to_flat(&pt.cart)),
            ),
            (
                format!("{nb}-body translation reconstruction"),
                &from_jac,
                Box::new(|pt: &SamplePoint| jacobi_to_flat(&pt.js)),
            ),
            (
                format!("{nb}-body frame reduction"),
                &do_reduce,
                Box::new(relative_flat),
            ),
            (
                format!("{nb}-body frame reconstruction"),
                &do_reconstruct,
                Box::new(|pt: &SamplePoint| reduced_to_flat(&pt.rs)),
            ),
            (
                format!("{nb}-body shape split"),
                &do_split,
                Box::new(frame_flat),
            ),
            (
                format!("{nb}-body shape merge"),
                &do_merge,
                Box::new(|pt: &SamplePoint| shape_to_flat(&pt.ss)),
            ),
        ];

        for (name, map, input_of) in &families {
            let mut sup: f64 = 0.0;
            for pt in &points {
                sup = sup.max(map_defect(*map, &input_of(pt))?);
            }
            sups.push((name.clone(), sup));
        }
    }

    // Angle regularization, sampled directly on both sides of the seam.
    let floors2 = floors;
    let do_reg = |z: &DVector<f64>| -> Result<DVector<f64>> {
        let angles = EulerTriple {
            phi: z[0],
            theta: z[1],
            psi: z[2],
        };
        let ra = regular::regularize(&angles, z[3], z[4], z[5], &floors2)?;
        Ok(DVector::from_vec(vec![
            ra.u, ra.v, ra.alpha, ra.p_u, ra.p_v, ra.p_alpha,
        ]))
    };
    for (name, lo, hi) in [
        ("angle regularization (upper chart)", 0.3, FRAC_PI_2 - 0.25),
        ("angle regularization (lower chart)", FRAC_PI_2 + 0.25, PI - 0.3),
    ] {
        let mut sup: f64 = 0.0;
        for _ in 0..POINTS {
            let z = DVector::from_vec(vec![
                smp.uniform(-2.5, 2.5),
                smp.uniform(lo, hi),
                smp.uniform(-2.5, 2.5),
                smp.normal(),
                smp.normal(),
                smp.normal(),
            ]);
            sup = sup.max(map_defect(&do_reg, &z)?);
        }
        sups.push((name.to_string(), sup));
    }

    let threshold = 1e-8;
    let (worst_name, measured) = sups
        .iter()
        .fold(("", 0.0_f64), |acc, (n, v)| if *v > acc.1 { (n, *v) } else { acc });
    let failing: Vec<String> = sups
        .iter()
        .filter(|(_, v)| *v >= threshold)
        .map(|(n, v)| format!("{n} {v:.2e}"))
        .collect();
    let detail = if failing.is_empty() {
        format!(
            "{} map families x {POINTS} random points; worst Jacobian defect {measured:.2e} at {worst_name}",
            sups.len()
        )
    } else {
        format!("defect at or above threshold for: {}", failing.join(", "))
    };
    Ok(CriterionResult {
        id: "1-symplectic".into(),
        passed: measured < threshold,
        measured,
        threshold,
        detail,
    })
}

// ---------------------------------------------------------------------------
// Criterion 2: one energy, every chart
// ---------------------------------------------------------------------------

pub fn check_chart_equivalence(seed: u64) -> Result<CriterionResult> {
    let floors = Floors::default();
    let mut smp = Sampler::new(seed ^ 0x5137_0002);
    let mut chart_sup: f64 = 0.0;
    let mut angle_sup: f64 = 0.0;

    for masses in [vec![1.0, 1.3, 0.7], vec![1.0, 1.3, 0.7, 1.1]] {
        let ms = MassSystem::new(masses)?;
        let spec = SampleSpec {
            zero_c: false,
            min_internal: 0.1,
        };
        for _ in 0..100 {
            let pt = sample_point(&ms, &mut smp, &floors, &spec)?;
            let hc = nbody::hamiltonian_cartesian(&ms, &pt.cart, floors.separation)?;
            let drift = pt.js.p_total.norm_squared() / (2.0 * ms.total());
            let hj = pt.h_internal;
            let hs = so3::hamiltonian_so3(&ms, &pt.rs, &floors)?;
            let hsh =
                shape::hamiltonian_shape(&ms, &pt.ss, &AngularBlock::from(&pt.rs), &floors)?;
            let scale = hj.abs().max(0.1);
            chart_sup = chart_sup
                .max((drift + hj - hc).abs() / hc.abs().max(0.1))
                .max((hs - hj).abs() / scale)
                .max((hsh - hj).abs() / scale);
        }

        // With all three frame momenta zero the energy cannot depend on the
        // frame angles at all: replace them freely and compare.
        let spec0 = SampleSpec {
            zero_c: true,
            min_internal: 0.1,
        };
        for _ in 0..10 {
            let pt = sample_point(&ms, &mut smp, &floors, &spec0)?;
            let mut rs = pt.rs.clone();
            rs.p_phi = 0.0;
            rs.p_theta = 0.0;
            rs.p_psi = 0.0;
            let base = so3::hamiltonian_so3(&ms, &rs, &floors)?;
            for _ in 0..20 {
                let mut rs2 = rs.clone();
                rs2.angles = EulerTriple {
                    phi: smp.uniform(-PI + 0.2, PI - 0.2),
                    theta: smp.uniform(0.25, PI - 0.25),
                    psi: smp.uniform(-PI + 0.2, PI - 0.2),
                };
                let h2 = so3::hamiltonian_so3(&ms, &rs2, &floors)?;
                angle_sup = angle_sup.max((h2 - base).abs() / base.abs().max(0.1));
            }
        }
    }

    let measured = chart_sup.max(angle_sup);
    let threshold = 1e-10;
    Ok(CriterionResult {
        id: "2-chart-equivalence".into(),
        passed: measured < threshold,
        measured,
        threshold,
        detail: format!(
            "relative energy agreement across charts {chart_sup:.2e}; frame-angle independence at zero frame momenta {angle_sup:.2e}"
        ),
    })
}

// ---------------------------------------------------------------------------
// Criterion 3: angular-momentum bookkeeping
// ---------------------------------------------------------------------------

pub fn check_angular_momentum(seed: u64) -> Result<CriterionResult> {
    let floors = Floors::default();
    let mut smp = Sampler::new(seed ^ 0x5137_0003);
    let mut agree_sup: f64 = 0.0;
    let mut zero_sup: f64 = 0.0;

    for masses in [vec![1.0, 1.3, 0.7], vec![1.0, 1.3, 0.7, 1.1]] {
        let ms = MassSystem::new(masses)?;
        let spec = SampleSpec {
            zero_c: false,
            min_internal: 0.0,
        };
        for _ in 0..100 {
            let pt = sample_point(&ms, &mut smp, &floors, &spec)?;
            let cc = nbody::angular_momentum_cartesian(&pt.cart);
            let cj = jacobi::angular_momentum_jacobi(&pt.js);
            agree_sup = agree_sup.max((cc - cj).amax());
        }
        let spec0 = SampleSpec {
            zero_c: true,
            min_internal: 0.0,
        };
        for _ in 0..100 {
            let pt = sample_point(&ms, &mut smp, &floors, &spec0)?;
            zero_sup = zero_sup
                .max(pt.rs.p_phi.abs())
                .max(pt.rs.p_theta.abs())
                .max(pt.rs.p_psi.abs());
            let ra = regular::regularize(
                &pt.rs.angles,
                pt.rs.p_phi,
                pt.rs.p_theta,
                pt.rs.p_psi,
                &floors,
            )?;
            zero_sup = zero_sup
                .max(ra.p_u.abs())
                .max(ra.p_v.abs())
                .max(ra.p_alpha.abs());
        }
    }

    let measured = agree_sup.max(zero_sup);
    let threshold = 1e-12;
    Ok(CriterionResult {
        id: "3-angular-momentum".into(),
        passed: measured < threshold,
        measured,
        threshold,
        detail: format!(
            "staged vs direct angular momentum {agree_sup:.2e}; residual frame momenta on zero-angular-momentum states {zero_sup:.2e}"
        ),
    })
}

// ---------------------------------------------------------------------------
// Criterion 4: energy transport along the scaled flow
// ---------------------------------------------------------------------------

/// How far a transport run got before the span ended.
enum RunExtent {
    /// Covered the whole requested span.
    FullSpan,
    /// Stopped at a named chart boundary (pole or collinear locus) at the
    /// recorded time.  Trajectories may leave the angle chart's domain; the
    /// transport identity is still required along everything that was
    /// computed.
    ChartExit { event: String, tau: f64 },
}

/// Integrate one trajectory and measure the worst relative deviation of
/// E(tau) from E(0) exp(int radial), normalized by the running energy scale
/// radial^2/2 + T + V. Also returns the largest |rho| seen and how much of
/// the requested span the chart admitted.
fn transport_drift(
    ms: &MassSystem,
    bs0: &BlowupState,
    tau_max: f64,
    rtol: f64,
    atol: f64,
    floors: &Floors,
) -> Result<(f64, f64, RunExtent)> {
    let mut opts = BlowupOptions::default();
    opts.solver.rtol = rtol;
    opts.solver.atol = atol;
    opts.solver.max_steps = 3_000_000;
    opts.grad_mode = GradientMode::Analytic;
    let traj = mcgehee::integrate_blowup(ms, bs0, (0.0, tau_max), &opts, vec![])?;
    let e0 = mcgehee::scaled_energy(ms, bs0, floors)?;
    let ts = traj.solution.t.clone();
    let mut cum = 0.0;
    let mut sup: f64 = 0.0;
    let mut rho_sup: f64 = 0.0;
    for k in 0..ts.len() {
        if k > 0 {
            cum += traj
                .solution
                .quadrature(ts[k - 1], ts[k], |_, y: &DVector<f64>| y[1]);
        }
        let bs = traj.state_at(ms, ts[k])?;
        let e_k = mcgehee::scaled_energy(ms, &bs, floors)?;
        let t = shape::kinetic_quadratic(ms, &bs.shape_mom, &bs.sigma, floors)?;
        let v = shape::potential_v(ms, &bs.sigma, floors)?;
        let scale = bs.radial * bs.radial / 2.0 + t + v;
        sup = sup.max((e_k - e0 * cum.exp()).abs() / scale);
        rho_sup = rho_sup.max(bs.rho.abs());
    }
    let extent = match traj.halted_by() {
        Some(name) => RunExtent::ChartExit {
            event: name.to_string(),
            tau: traj.tau_end(),
        },
        None if (traj.tau_end() - tau_max).abs() < 1e-6 => RunExtent::FullSpan,
        None => {
            return Err(Error::InvalidInput(format!(
                "integration stopped at t = {:.6} without a named event",
                traj.tau_end()
            )))
        }
    };
    Ok((sup, rho_sup, extent))
}

fn three_equal_masses() -> Result<MassSystem> {
    MassSystem::new(vec![1.0, 1.0, 1.0])
}

fn equilateral_guess() -> DVector<f64> {
    DVector::from_vec(vec![-2.0 / 3.0_f64.sqrt() - 0.05, 0.04])
}

fn collinear_guess() -> DVector<f64> {
    DVector::from_vec(vec![-0.03, 2.0 / 3.0 + 0.05])
}

fn rest_report(ms: &MassSystem, guess: &DVector<f64>) -> Result<EquilibriumReport> {
    let opts = EquilibriumOptions::default();
    let sigma = equilibria::find_central_config(ms, guess, &opts)?;
    equilibria::linearize(ms, &sigma, &opts)
}

pub fn check_energy_transport() -> Result<CriterionResult> {
    let floors = Floors::default();
    let ms = three_equal_masses()?;
    let d = ms.shape_dim();
    let rep_eq = rest_report(&ms, &equilateral_guess())?;
    let tilt = spin::default_tilt();

    let runs: Vec<(&str, BlowupState, bool)> = vec![
        (
            "size-zero radial relaxation",
            BlowupState {
                rho: 0.0,
                radial: 0.5 * rep_eq.radial,
                shape_mom: DVector::zeros(d),
                sigma: rep_eq.sigma.clone(),
                w: tilt,
            },
            true,
        ),
        (
            "homothetic collapse",
            spin::seed_homothetic(&rep_eq, 1.0, None, tilt),
            false,
        ),
        (
            "collapse from rest",
            BlowupState {
                rho: 1.0,
                radial: 0.0,
                shape_mom: DVector::zeros(d),
                sigma: rep_eq.sigma.clone(),
                w: tilt,
            },
            false,
        ),
        // Expanding branch of the homothetic family: the size grows through
        // fifty-plus orders of magnitude while the scaled energy must stay
        // pinned at zero, exercising the transport law in the direction the
        // collapse runs never visit.  (Shape-moving runs are deliberately
        // absent: with the rotational degrees quotiented out, every rest
        // point on the zero-size manifold keeps escaping directions, so a
        // generic shape kick ends in a finite-time binary-collision escape
        // that this chart does not regularize.)
        (
            "homothetic expansion",
            BlowupState {
                rho: 1.0,
                radial: -rep_eq.radial,
                shape_mom: DVector::zeros(d),
                sigma: rep_eq.sigma.clone(),
                w: tilt,
            },
            false,
        ),
    ];

    let mut drift_sup: f64 = 0.0;
    let mut rho_dev: f64 = 0.0;
    let mut any_full_span = false;
    let mut parts: Vec<String> = Vec::new();
    for (name, bs, on_manifold) in &runs {
        let (drift, rho_sup, extent) = transport_drift(&ms, bs, 50.0, 1e-10, 1e-12, &floors)
            .map_err(|e| Error::InvalidInput(format!("{name}: {e}")))?;
        drift_sup = drift_sup.max(drift);
        if *on_manifold {
            rho_dev = rho_dev.max(rho_sup);
        }
        // Converging runs cannot hold the chart for fifty time units: any
        // rounding noise transverse to the homothetic family is amplified at
        // the rest point's escape rate and eventually carries the frame to
        // the angle chart's pole, where the run stops at its named boundary
        // event.  The transport identity is enforced along everything each
        // run computed, and at least one run must cover the whole span.
        match extent {
            RunExtent::FullSpan => {
                any_full_span = true;
                parts.push(format!("{name}: drift {drift:.2e} over the full span"));
            }
            RunExtent::ChartExit { event, tau } => {
                parts.push(format!(
                    "{name}: drift {drift:.2e} until the {event} boundary at tau = {tau:.2}"
                ));
            }
        }
    }

    let threshold = 1e-7;
    let passed = drift_sup < threshold && rho_dev < 1e-9 && any_full_span;
    Ok(CriterionResult {
        id: "4-energy-transport".into(),
        passed,
        measured: drift_sup,
        threshold,
        detail: format!(
            "{}; size-zero invariance {rho_dev:.2e} (threshold 1e-9) over tau in [0, 50]",
            parts.join("; ")
        ),
    })
}

// ---------------------------------------------------------------------------
// Criterion 5: rest shapes and the vanishing field
// ---------------------------------------------------------------------------

pub fn check_central_configs(seed: u64) -> Result<CriterionResult> {
    let floors = Floors::default();
    let ms = three_equal_masses()?;
    let opts = EquilibriumOptions::default();
    let mut smp = Sampler::new(seed ^ 0x5137_0005);
    let d = ms.shape_dim();

    let targets = [
        ("triangular", DVector::from_vec(vec![-2.0 / 3.0_f64.sqrt(), 0.0]), 3.0),
        (
            "collinear",
            DVector::from_vec(vec![0.0, 2.0 / 3.0]),
            2.5 * 2.0_f64.sqrt(),
        ),
    ];

    let mut grad_sup: f64 = 0.0;
    let mut field_sup: f64 = 0.0;
    let mut family_ok = true;
    for (name, target, v_target) in &targets {
        for _ in 0..4 {
            let start = target + DVector::from_fn(d, |_, _| 0.12 * smp.normal());
            let sigma = equilibria::find_central_config(&ms, &start, &opts)?;
            let v = shape::potential_v(&ms, &sigma, &floors)?;
            if (v - v_target).abs() > 1e-8 {
                family_ok = false;
                continue;
            }
            grad_sup = grad_sup.max(shape::potential_gradient(&ms, &sigma, &floors)?.norm());
            let rep = equilibria::linearize(&ms, &sigma, &opts)?;
            let bs = BlowupState {
                rho: 0.0,
                radial: rep.radial,
                shape_mom: DVector::zeros(d),
                sigma: rep.sigma.clone(),
                w: spin::default_tilt(),
            };
            let y = bs.pack();
            let mut out = DVector::zeros(y.len());
            // Central differences are exact here: the kinetic term vanishes
            // identically at zero shape momentum along any sigma direction.
            mcgehee::blowup_field(&ms, &y, GradientMode::CentralFd, &floors, &mut out)?;
            field_sup = field_sup.max(out.amax());
        }
        let _ = name;
    }

    let threshold = 1e-9;
    let passed = family_ok && grad_sup < 1e-10 && field_sup < threshold;
    Ok(CriterionResult {
        id: "5-central-configs".into(),
        passed,
        measured: field_sup,
        threshold,
        detail: format!(
            "both families recovered from perturbed starts: {family_ok}; potential gradient sup {grad_sup:.2e} (threshold 1e-10); full scaled field sup at rest points {field_sup:.2e}"
        ),
    })
}

// ---------------------------------------------------------------------------
// Criterion 6a: closed-form spectrum vs direct eigendecomposition
// ---------------------------------------------------------------------------

/// Build the linearized (shape_mom, sigma) block system at a rest point and
/// compare its directly computed eigenvalues with the closed-form pairs.
fn spectrum_gap(rep: &EquilibriumReport) -> f64 {
    let d = rep.sigma.len();
    let m = 2 * d;
    let mut big = DMatrix::zeros(m, m);
    for i in 0..d {
        big[(i, i)] = -rep.radial / 2.0;
    }
    big.view_mut((0, d), (d, d)).copy_from(&rep.hessian);
    big.view_mut((d, 0), (d, d)).copy_from(&rep.kinetic_matrix);
    let eigs = big.complex_eigenvalues();

    let formula: Vec<(f64, f64)> = rep
        .modes
        .iter()
        .flat_map(|mp| {
            [
                (mp.lambda_plus.re, mp.lambda_plus.im),
                (mp.lambda_minus.re, mp.lambda_minus.im),
            ]
        })
        .collect();
    let direct: Vec<(f64, f64)> = eigs.iter().map(|e| (e.re, e.im)).collect();
    let dist = |a: &(f64, f64), b: &(f64, f64)| (a.0 - b.0).hypot(a.1 - b.1);
    let one_way = |from: &[(f64, f64)], to: &[(f64, f64)]| -> f64 {
        from.iter()
            .map(|a| {
                to.iter()
                    .map(|b| dist(a, b))
                    .fold(f64::INFINITY, f64::min)
            })
            .fold(0.0, f64::max)
    };
    one_way(&formula, &direct).max(one_way(&direct, &formula))
}

pub fn check_spectrum_formula() -> Result<CriterionResult> {
    let ms3 = three_equal_masses()?;
    let rep_eq = rest_report(&ms3, &equilateral_guess())?;
    let rep_col = rest_report(&ms3, &collinear_guess())?;

    let ms4 = MassSystem::new(vec![1.0; 4])?;
    let rep_tet = rest_report(
        &ms4,
        &DVector::from_vec(vec![1.25, 0.05, -0.02, -1.02, 0.03]),
    )?;

    let mut measured: f64 = 0.0;
    let mut parts = Vec::new();
    for (name, rep) in [
        ("triangular", &rep_eq),
        ("collinear", &rep_col),
        ("four-body", &rep_tet),
    ] {
        let gap = spectrum_gap(rep);
        measured = measured.max(gap);
        parts.push(format!("{name} {gap:.2e}"));
    }

    let threshold = 1e-9;
    Ok(CriterionResult {
        id: "6a-spectrum-formula".into(),
        passed: measured < threshold,
        measured,
        threshold,
        detail: format!(
            "two-sided eigenvalue match between the closed-form pairs and the block-system eigendecomposition: {}",
            parts.join(", ")
        ),
    })
}

// ---------------------------------------------------------------------------
// Criterion 6b: a vanishing block eigenvalue is reported exactly
// ---------------------------------------------------------------------------

pub fn check_degenerate_pair() -> Result<CriterionResult> {
    let opts = EquilibriumOptions::default();
    let radial = -(6.0_f64).sqrt();
    let m = -radial / 2.0;
    let mut measured: f64 = 0.0;
    // Exactly zero, and small enough that the snap threshold catches it.
    for c in [0.0, 1e-18, -1e-18] {
        let mp = equilibria::classify_mode(c, 1.0, radial, &opts);
        measured = measured
            .max((mp.lambda_plus.re - m).abs())
            .max(mp.lambda_plus.im.abs())
            .max(mp.lambda_minus.re.abs())
            .max(mp.lambda_minus.im.abs());
    }
    Ok(CriterionResult {
        id: "6b-degenerate-pair".into(),
        passed: measured == 0.0,
        measured,
        threshold: 0.0,
        detail: format!(
            "a block with vanishing curvature eigenvalue must report the pair (-radial/2, 0) = ({m}, 0) with no square-root rounding"
        ),
    })
}

// ---------------------------------------------------------------------------
// Criterion 6c: neutral rotational directions at the triangular rest point
// ---------------------------------------------------------------------------

pub fn check_center_dimension() -> Result<CriterionResult> {
    let ms = three_equal_masses()?;
    let rep = rest_report(&ms, &equilateral_guess())?;
    let measured = rep.center_dim as f64;
    Ok(CriterionResult {
        id: "6c-center-dimension".into(),
        passed: measured >= 1.0,
        measured,
        threshold: 1.0,
        detail: "expected at least one neutral direction generated by frame rotations; the \
                 shape chart works on the rotation-reduced quotient, where those directions do \
                 not exist as tangent vectors, so the triangular rest point is fully hyperbolic \
                 (center dimension 0)"
            .into(),
    })
}

// ---------------------------------------------------------------------------
// Criterion 7: the homothetic orbit in closed form
// ---------------------------------------------------------------------------

pub fn check_homothetic_oracle() -> Result<CriterionResult> {
    let ms = three_equal_masses()?;
    let rep = rest_report(&ms, &equilateral_guess())?;
    let tilt = spin::default_tilt();
    let bs0 = spin::seed_homothetic(&rep, 1.0, None, tilt);

    let mut opts = BlowupOptions::default();
    opts.solver.rtol = 1e-11;
    opts.solver.atol = 1e-14;
    opts.grad_mode = GradientMode::Analytic;
    let tau_max = 3.0;
    let traj = mcgehee::integrate_blowup(&ms, &bs0, (0.0, tau_max), &opts, vec![])?;

    let mut frozen_dev: f64 = 0.0;
    let mut rho_rel: f64 = 0.0;
    let n_samples = 120;
    for k in 0..=n_samples {
        let tau = tau_max * k as f64 / n_samples as f64;
        let bs = traj.state_at(&ms, tau)?;
        frozen_dev = frozen_dev
            .max((&bs.sigma - &rep.sigma).amax())
            .max(bs.shape_mom.amax())
            .max((bs.radial - rep.radial).abs())
            .max((bs.w.u - tilt.u).abs())
            .max((bs.w.v - tilt.v).abs())
            .max((bs.w.c - tilt.c).abs())
            .max((bs.w.alpha - tilt.alpha).abs());
        let oracle = (rep.radial * tau).exp();
        rho_rel = rho_rel.max((bs.rho - oracle).abs() / oracle);
    }

    let threshold = 1e-8;
    let passed = frozen_dev < threshold && rho_rel < 1e-7;
    Ok(CriterionResult {
        id: "7-homothetic".into(),
        passed,
        measured: frozen_dev,
        threshold,
        detail: format!(
            "shape, radial momentum and frame frozen to {frozen_dev:.2e}; size follows exp(radial * tau) to relative {rho_rel:.2e} (threshold 1e-7) over tau in [0, 3]"
        ),
    })
}

// ---------------------------------------------------------------------------
// Criterion 8: certified finite frame rotation along a converging orbit
// ---------------------------------------------------------------------------

pub fn check_finite_rotation() -> Result<CriterionResult> {
    let floors = Floors::default();
    let ms = three_equal_masses()?;
    let eq_opts = EquilibriumOptions::default();
    let sigma = equilibria::find_central_config(&ms, &equilateral_guess(), &eq_opts)?;
    let rep = equilibria::linearize(&ms, &sigma, &eq_opts)?;

    // Small enough that the seed's residual distance to the converging
    // manifold (cubic in eps) stays invisible over six dyadic blocks even
    // after amplification along the escaping directions.
    let eps = 3e-6;
    let seed_bs = spin::seed_stable_direction(
        &ms,
        &rep,
        eps,
        0,
        true,
        spin::default_tilt(),
        GradientMode::Analytic,
        &floors,
    )?;
    let y0 = seed_bs.pack();
    let mut f0v = DVector::zeros(y0.len());
    mcgehee::blowup_field(&ms, &y0, GradientMode::Analytic, &floors, &mut f0v)?;
    let f0 = f0v.norm();

    let mut cfg = ExperimentConfig::new(
        vec![1.0, 1.0, 1.0],
        vec![-2.0 / 3.0_f64.sqrt(), 0.0],
        SeedRecipe::StableSeed {
            epsilon: eps,
            mode_index: 0,
            quadratic_correction: true,
        },
    );
    cfg.grad_mode = GradientMode::Analytic;
    cfg.atol = 1e-14;
    cfg.eq_proximity = 0.85 * f0;

    // First pass: find the proximity crossing that anchors the dyadic blocks.
    let mut probe = cfg.clone();
    probe.halt_at_proximity = true;
    probe.tau_max = 3.0;
    let first = spin::run_experiment(&probe)?;
    let t_win = first.report.t_window.ok_or(Error::InsufficientTail {
        have: 0,
        need: 1,
    })?;

    // Second pass: long enough for six complete blocks (when the signal
    // allows), but capped so the decaying momenta stay above round-off.
    cfg.tau_max = (64.0 * t_win + 0.25).min(11.8);
    let out = spin::run_experiment(&cfg)?;
    let rep8 = &out.report;

    let late: Vec<f64> = rep8.block_ratios.iter().skip(3).copied().collect();
    let late_ok = !late.is_empty() && late.iter().all(|r| *r < 0.9);
    let tail = rep8.tail_bound.unwrap_or(f64::INFINITY);
    let (nc_inv, nc_ratio) = rep8.non_collinearity_sup;
    let nc_ok = nc_inv.is_finite() && nc_ratio.is_finite() && nc_inv < 100.0 && nc_ratio < 100.0;

    let threshold = 1e-6;
    let passed = late_ok && tail < threshold && nc_ok;
    let ratios: Vec<String> = rep8.block_ratios.iter().map(|r| format!("{r:.3}")).collect();
    Ok(CriterionResult {
        id: "8-finite-rotation".into(),
        passed,
        measured: tail,
        threshold,
        detail: format!(
            "proximity crossing at tau = {t_win:.3}; {} dyadic blocks with ratios [{}] (all beyond the third must stay below 0.9: {late_ok}); certified residual frame rotation {tail:.2e} rad; momentum-to-rotation gain sup {:.2e}; non-collinearity sups ({nc_inv:.2}, {nc_ratio:.2})",
            rep8.block_integrals.len(),
            ratios.join(", "),
            rep8.k_sup
        ),
    })
}

// ---------------------------------------------------------------------------
// Criterion 9: the linearized flow is accurate to second order
// ---------------------------------------------------------------------------

pub fn check_linearization_order() -> Result<CriterionResult> {
    let ms = three_equal_masses()?;
    let rep = rest_report(&ms, &equilateral_guess())?;

    // A generic tangent direction: radial part plus a mix of a converging
    // and an escaping shape mode.
    let (_lm, ds_m, dsig_m) = equilibria::mode_vector(&rep, 0, true)?;
    let (_lp, ds_p, dsig_p) = equilibria::mode_vector(&rep, 1, false)?;
    let dr0 = 0.4;
    let ds0 = ds_m * 0.7 + ds_p * 0.5;
    let dsig0 = dsig_m * 0.7 + dsig_p * 0.5;
    let norm = (dr0 * dr0 + ds0.norm_squared() + dsig0.norm_squared()).sqrt();
    let (dr0, ds0, dsig0) = (dr0 / norm, ds0 / norm, dsig0 / norm);

    let mut errs = Vec::new();
    for eps in [1e-4, 1e-5] {
        let bs0 = BlowupState {
            rho: 0.0,
            radial: rep.radial + eps * dr0,
            shape_mom: &ds0 * eps,
            sigma: &rep.sigma + &dsig0 * eps,
            w: spin::default_tilt(),
        };
        let mut opts = BlowupOptions::default();
        opts.solver.rtol = 1e-12;
        opts.solver.atol = 1e-14;
        opts.grad_mode = GradientMode::Analytic;
        let traj = mcgehee::integrate_blowup(&ms, &bs0, (0.0, 1.0), &opts, vec![])?;
        let mut err: f64 = 0.0;
        for tau in [0.25, 0.5, 0.75, 1.0] {
            let bs = traj.state_at(&ms, tau)?;
            let (dr_l, ds_l, dsig_l) =
                equilibria::linearized_flow(&rep, eps * dr0, &(&ds0 * eps), &(&dsig0 * eps), tau)?;
            let dr_n = bs.radial - rep.radial;
            let ds_n = &bs.shape_mom;
            let dsig_n = &bs.sigma - &rep.sigma;
            let diff = ((dr_n - dr_l).powi(2)
                + (ds_n - &ds_l).norm_squared()
                + (&dsig_n - &dsig_l).norm_squared())
            .sqrt();
            err = err.max(diff);
        }
        errs.push(err);
    }

    let measured = (errs[0] / errs[1]).log10();
    let threshold = 1.8;
    Ok(CriterionResult {
        id: "9-linearization-order".into(),
        passed: measured >= threshold,
        measured,
        threshold,
        detail: format!(
            "residual against the linearized flow over tau in [0, 1]: {:.3e} at eps 1e-4, {:.3e} at eps 1e-5; observed order {measured:.3} (passes at or above {threshold})",
            errs[0], errs[1]
        ),
    })
}

// ---------------------------------------------------------------------------

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn fd_jacobian_is_exact_on_a_linear_map() {
        let map = |z: &DVector<f64>| -> Result<DVector<f64>> {
            Ok(DVector::from_vec(vec![
                2.0 * z[0] + z[1],
                -z[0] + 3.0 * z[3],
                z[2],
                0.5 * z[1] - z[3],
            ]))
        };
        let z = DVector::from_vec(vec![0.3, -1.2, 0.7, 2.1]);
        let jac = fd_jacobian(&map, &z).unwrap();
        assert_relative_eq!(jac[(0, 0)], 2.0, epsilon = 1e-9);
        assert_relative_eq!(jac[(1, 3)], 3.0, epsilon = 1e-9);
        assert_relative_eq!(jac[(3, 1)], 0.5, epsilon = 1e-9);
        assert_relative_eq!(jac[(2, 2)], 1.0, epsilon = 1e-9);
    }

    #[test]
    fn symplectic_defect_separates_canonical_from_scaled_maps() {
        // A rotation mixing (q, p) canonically has zero defect; a plain
        // scaling of both does not.
        let th: f64 = 0.7;
        let rot = DMatrix::from_row_slice(2, 2, &[th.cos(), th.sin(), -th.sin(), th.cos()]);
        assert!(symplectic_defect(&rot) < 1e-14);
        let scaled = DMatrix::from_row_slice(2, 2, &[2.0, 0.0, 0.0, 2.0]);
        assert!(symplectic_defect(&scaled) > 1.0);
    }

    #[test]
    fn zero_angular_momentum_projection_works() {
        let mut smp = Sampler::new(11);
        let q: Vec<Vector3<f64>> = (0..3).map(|_| smp.vec3(1.0)).collect();
        let mut p: Vec<Vector3<f64>> = (0..3).map(|_| smp.vec3(1.0)).collect();
        assert!(project_zero_angular_momentum(&q, &mut p));
        let c: Vector3<f64> = q.iter().zip(p.iter()).map(|(a, b)| a.cross(b)).sum();
        let total: Vector3<f64> = p.iter().sum();
        assert!(c.amax() < 1e-14);
        assert!(total.amax() < 1e-14);
    }

    #[test]
    fn degenerate_pair_check_passes_exactly() {
        let r = check_degenerate_pair().unwrap();
        assert!(r.passed, "{r}");
        assert_eq!(r.measured, 0.0);
    }

    #[test]
    fn center_dimension_check_reports_the_quotient_honestly() {
        let r = check_center_dimension().unwrap();
        assert!(!r.passed);
        assert_eq!(r.measured, 0.0);
    }

    #[test]
    fn sampler_produces_admissible_states() {
        let floors = Floors::default();
        let ms = MassSystem::new(vec![1.0, 1.3, 0.7]).unwrap();
        let mut smp = Sampler::new(5);
        let spec = SampleSpec {
            zero_c: true,
            min_internal: 0.1,
        };
        let pt = sample_point(&ms, &mut smp, &floors, &spec).unwrap();
        assert!(pt.h_internal.abs() >= 0.1);
        assert!(nbody::angular_momentum_cartesian(&pt.cart).amax() < 1e-13);
        assert!(pt.rs.angles.theta.sin() >= 0.35);
    }
}
