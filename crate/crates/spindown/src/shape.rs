//! Shape sphere chart: the frame configuration is split into an overall size
//! rho (the mass-weighted norm of the configuration) and a shape vector sigma
//! on the unit sphere's chart obtained by scaling out the last coordinate.
//!
//! Conventions. With n relative coordinates the live shape components are
//! sigma_1..sigma_(n-2) as full 3-vectors followed by the two surviving
//! components (sigma_2, sigma_3) of block n-1, a flat vector of length
//! 3n - 4. Block n of the configuration is pinned to the unit vector e_3 and
//! carries no coordinates. The mass-weighted norm of the pinned augmented
//! configuration is written N(sigma) throughout.

use nalgebra::{DMatrix, DVector, Vector2, Vector3};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::jacobi;
use crate::masses::MassSystem;
use crate::so3::{AngularBlock, FrameBlocks};
use crate::Floors;

/// Index arithmetic for flat shape vectors.
#[derive(Debug, Clone, Copy)]
pub(crate) struct Layout {
    pub n: usize,
}

impl Layout {
    pub fn of(ms: &MassSystem) -> Layout {
        Layout { n: ms.n_rel() }
    }

    pub fn dim(&self) -> usize {
        3 * self.n - 4
    }

    pub fn pair_offset(&self) -> usize {
        3 * (self.n - 2)
    }

    /// Live block j (1-based, j <= n-1) as a 3-vector; the pair block's first
    /// component reads as zero.
    pub fn block(&self, v: &DVector<f64>, j: usize) -> Vector3<f64> {
        if j <= self.n - 2 {
            let o = 3 * (j - 1);
            Vector3::new(v[o], v[o + 1], v[o + 2])
        } else {
            debug_assert_eq!(j, self.n - 1);
            let o = self.pair_offset();
            Vector3::new(0.0, v[o], v[o + 1])
        }
    }

    /// Block j of the augmented configuration, with block n pinned to e_3.
    pub fn block_aug(&self, v: &DVector<f64>, j: usize) -> Vector3<f64> {
        if j == self.n {
            Vector3::z()
        } else {
            self.block(v, j)
        }
    }

    /// Add `w`'s live components into block j of the flat vector.
    pub fn add_to_block(&self, v: &mut DVector<f64>, j: usize, w: &Vector3<f64>) {
        if j <= self.n - 2 {
            let o = 3 * (j - 1);
            v[o] += w.x;
            v[o + 1] += w.y;
            v[o + 2] += w.z;
        } else {
            debug_assert_eq!(j, self.n - 1);
            let o = self.pair_offset();
            v[o] += w.y;
            v[o + 1] += w.z;
        }
    }

}

/// Mass-weighted norm N(sigma) of the augmented configuration (sigma, e_3).
pub fn aug_norm(ms: &MassSystem, sigma: &DVector<f64>) -> f64 {
    let lay = Layout::of(ms);
    let mut sq = ms.mu(lay.n);
    for j in 1..lay.n {
        sq += ms.mu(j) * lay.block(sigma, j).norm_squared();
    }
    sq.sqrt()
}

/// The two surviving components of shape block n-1, (sigma_2, sigma_3).
pub fn sigma_pair_components(ms: &MassSystem, sigma: &DVector<f64>) -> (f64, f64) {
    let lay = Layout::of(ms);
    let o = lay.pair_offset();
    (sigma[o], sigma[o + 1])
}

/// The two non-collinearity ratios (1/|sigma_2|, |sigma_3/sigma_2|). Both
/// stay bounded exactly when the last two relative positions stay uniformly
/// non-collinear.
pub fn non_collinearity_ratios(ms: &MassSystem, sigma: &DVector<f64>) -> (f64, f64) {
    let (s2, s3) = sigma_pair_components(ms, sigma);
    (1.0 / s2.abs(), (s3 / s2).abs())
}

/// State in the shape chart: shape momenta and shape coordinates plus the
/// radial pair (radial_mom, rho).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ShapeState {
    pub shape_mom: DVector<f64>,
    pub radial_mom: f64,
    pub sigma: DVector<f64>,
    pub rho: f64,
}

fn check_dim(ms: &MassSystem, v: &DVector<f64>, what: &str) -> Result<()> {
    if ms.n_rel() < 2 {
        return Err(Error::InvalidInput(
            "the shape chart needs at least two relative coordinates".into(),
        ));
    }
    let want = 3 * ms.n_rel() - 4;
    if v.len() != want {
        return Err(Error::InvalidInput(format!(
            "{what} has length {}, expected {want}",
            v.len()
        )));
    }
    Ok(())
}

/// Split frame coordinates (eta, xi) into shape and radial parts.
pub fn shape_split(
    ms: &MassSystem,
    eta: &FrameBlocks,
    xi: &FrameBlocks,
    floors: &Floors,
) -> Result<ShapeState> {
    let lay = Layout::of(ms);
    let n = lay.n;
    if xi.n_rel() != n || eta.n_rel() != n {
        return Err(Error::InvalidInput(format!(
            "frame blocks hold {} coordinates, expected {n}",
            xi.n_rel()
        )));
    }
    let r = xi.last;
    if r < floors.division {
        return Err(Error::DivisionDegenerate {
            quantity: "xi_n,3",
            value: r,
            floor: floors.division,
        });
    }

    let mut sigma = DVector::zeros(lay.dim());
    for j in 1..n {
        lay.add_to_block(&mut sigma, j, &(xi.block(j) / r));
    }
    let nn = aug_norm(ms, &sigma);
    let rho = r * nn;

    // radial_mom = (sum over all blocks of sigma_aug . eta) / N; the pinned
    // block contributes eta_n,3.
    let mut radial = eta.last;
    for j in 1..n {
        radial += lay.block(&sigma, j).dot(&eta.block(j));
    }
    radial /= nn;

    // shape_mom_j = r eta_j - (r radial / N) mu_j sigma_j on the live blocks.
    let mut shape_mom = DVector::zeros(lay.dim());
    for j in 1..n {
        let w = eta.block(j) * r - lay.block(&sigma, j) * (r * radial / nn * ms.mu(j));
        lay.add_to_block(&mut shape_mom, j, &w);
    }

    Ok(ShapeState {
        shape_mom,
        radial_mom: radial,
        sigma,
        rho,
    })
}

/// Merge shape and radial parts back into frame coordinates (eta, xi).
/// Inverse of `shape_split`.
pub fn shape_merge(
    ms: &MassSystem,
    ss: &ShapeState,
    floors: &Floors,
) -> Result<(FrameBlocks, FrameBlocks)> {
    check_dim(ms, &ss.sigma, "sigma")?;
    check_dim(ms, &ss.shape_mom, "shape momentum")?;
    let lay = Layout::of(ms);
    let n = lay.n;
    if ss.rho < floors.division {
        return Err(Error::DivisionDegenerate {
            quantity: "rho",
            value: ss.rho,
            floor: floors.division,
        });
    }
    let nn = aug_norm(ms, &ss.sigma);
    let r = ss.rho / nn;

    let mut xi_full = Vec::with_capacity(n.saturating_sub(2));
    let mut eta_full = Vec::with_capacity(n.saturating_sub(2));
    for j in 1..=(n - 2) {
        xi_full.push(lay.block(&ss.sigma, j) * r);
        eta_full.push(
            lay.block(&ss.shape_mom, j) / r
                + lay.block(&ss.sigma, j) * (ss.radial_mom / nn * ms.mu(j)),
        );
    }
    let sig_pair = lay.block(&ss.sigma, n - 1);
    let mom_pair = lay.block(&ss.shape_mom, n - 1);
    let eta_pair = mom_pair / r + sig_pair * (ss.radial_mom / nn * ms.mu(n - 1));

    // eta_n,3 = -(N/rho) sum shape_mom . sigma + mu_n radial_mom / N.
    let mut sdot = 0.0;
    for j in 1..n {
        sdot += lay.block(&ss.shape_mom, j).dot(&lay.block(&ss.sigma, j));
    }
    let eta_last = -sdot / r + ms.mu(n) * ss.radial_mom / nn;

    let xi = FrameBlocks {
        full: xi_full,
        pair: Vector2::new(sig_pair.y * r, sig_pair.z * r),
        last: r,
    };
    let eta = FrameBlocks {
        full: eta_full,
        pair: Vector2::new(eta_pair.y, eta_pair.z),
        last: eta_last,
    };
    Ok((eta, xi))
}

/// Partial cross sum P_k^(p) = sum_(j <= p) (sigma_j x s_j) . e_k over flat
/// shape vectors. Identical in value to the same sum over the frame blocks
/// they came from, because the radial factors cancel between sigma and s.
pub(crate) fn psi_flat(lay: &Layout, sigma: &DVector<f64>, s: &DVector<f64>, k: usize, p: usize) -> f64 {
    (1..=p)
        .map(|j| lay.block(sigma, j).cross(&lay.block(s, j))[k - 1])
        .sum()
}

/// The three cross sums the kinetic form needs: (P_1, P_2, P_3) with
/// P_1 over blocks 1..n-1 and P_2, P_3 over blocks 1..n-2.
pub(crate) fn cross_sums(lay: &Layout, sigma: &DVector<f64>, s: &DVector<f64>) -> Vector3<f64> {
    let p12 = lay.n - 2;
    Vector3::new(
        psi_flat(lay, sigma, s, 1, lay.n - 1),
        psi_flat(lay, sigma, s, 2, p12),
        psi_flat(lay, sigma, s, 3, p12),
    )
}

/// Kinetic energy of the rotation-free flow as a quadratic form in the shape
/// momenta at unit size:
///
/// T(s, sigma) = N^2/2 [ sum |s_j|^2/mu_j + (s.sigma)^2/mu_n
///                       + P_3^2/(mu_(n-1) sigma_2^2) + G^2/mu_n + P_1^2/mu_n ]
///
/// with G = P_2 + (sigma_3/sigma_2) P_3. For n = 2 the sums P_2 and P_3 are
/// empty and the two middle terms vanish identically.
pub fn kinetic_quadratic(
    ms: &MassSystem,
    s: &DVector<f64>,
    sigma: &DVector<f64>,
    floors: &Floors,
) -> Result<f64> {
    check_dim(ms, s, "shape momentum")?;
    check_dim(ms, sigma, "sigma")?;
    let lay = Layout::of(ms);
    let n = lay.n;
    let nn_sq = {
        let v = aug_norm(ms, sigma);
        v * v
    };
    let mut bracket = 0.0;
    let mut sdot = 0.0;
    for j in 1..n {
        let sj = lay.block(s, j);
        bracket += sj.norm_squared() / ms.mu(j);
        sdot += sj.dot(&lay.block(sigma, j));
    }
    bracket += sdot * sdot / ms.mu(n);
    let p = cross_sums(&lay, sigma, s);
    bracket += p.x * p.x / ms.mu(n);
    if n > 2 {
        let (s2, s3) = sigma_pair_components(ms, sigma);
        if s2.abs() < floors.division {
            return Err(Error::DivisionDegenerate {
                quantity: "sigma_2",
                value: s2,
                floor: floors.division,
            });
        }
        let g = p.y + (s3 / s2) * p.z;
        bracket += p.z * p.z / (ms.mu(n - 1) * s2 * s2);
        bracket += g * g / ms.mu(n);
    }
    Ok(0.5 * nn_sq * bracket)
}

/// The symmetric positive matrix of the kinetic form: T = 1/2 s^T A(sigma) s.
pub fn kinetic_matrix(ms: &MassSystem, sigma: &DVector<f64>, floors: &Floors) -> Result<DMatrix<f64>> {
    check_dim(ms, sigma, "sigma")?;
    let lay = Layout::of(ms);
    let n = lay.n;
    let dim = lay.dim();
    let nn_sq = {
        let v = aug_norm(ms, sigma);
        v * v
    };

    let mut a = DMatrix::zeros(dim, dim);
    // Block-diagonal inverse masses.
    for j in 1..n {
        let inv = 1.0 / ms.mu(j);
        if j <= n - 2 {
            let o = 3 * (j - 1);
            for c in 0..3 {
                a[(o + c, o + c)] = inv;
            }
        } else {
            let o = lay.pair_offset();
            a[(o, o)] = inv;
            a[(o + 1, o + 1)] = inv;
        }
    }

    // Gradient of P_k with respect to s is e_k x sigma_j blockwise.
    let grad_p = |k: usize, p: usize| -> DVector<f64> {
        let e = match k {
            1 => Vector3::x(),
            2 => Vector3::y(),
            _ => Vector3::z(),
        };
        let mut g = DVector::zeros(dim);
        for j in 1..=p {
            lay.add_to_block(&mut g, j, &e.cross(&lay.block(sigma, j)));
        }
        g
    };

    let rank_one = |a: &mut DMatrix<f64>, v: &DVector<f64>, w: f64| {
        for r in 0..dim {
            if v[r] == 0.0 {
                continue;
            }
            for c in 0..dim {
                a[(r, c)] += w * v[r] * v[c];
            }
        }
    };

    rank_one(&mut a, &sigma.clone_owned(), 1.0 / ms.mu(n));
    let g1 = grad_p(1, n - 1);
    rank_one(&mut a, &g1, 1.0 / ms.mu(n));
    if n > 2 {
        let (s2, s3) = sigma_pair_components(ms, sigma);
        if s2.abs() < floors.division {
            return Err(Error::DivisionDegenerate {
                quantity: "sigma_2",
                value: s2,
                floor: floors.division,
            });
        }
        let g2 = grad_p(2, n - 2);
        let g3 = grad_p(3, n - 2);
        let gg = &g2 + &g3 * (s3 / s2);
        rank_one(&mut a, &gg, 1.0 / ms.mu(n));
        rank_one(&mut a, &g3, 1.0 / (ms.mu(n - 1) * s2 * s2));
    }
    a *= nn_sq;
    Ok(a)
}

/// Gradient of the kinetic form in the shape momenta, A(sigma) s. This is the
/// velocity of sigma under the rotation-free flow at unit size.
pub fn kinetic_smom_gradient(
    ms: &MassSystem,
    s: &DVector<f64>,
    sigma: &DVector<f64>,
    floors: &Floors,
) -> Result<DVector<f64>> {
    Ok(kinetic_matrix(ms, sigma, floors)? * s)
}

/// How the sigma-gradient of the kinetic form is evaluated.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum GradientMode {
    /// Fourth-order central differences of the scalar form (the default).
    CentralFd,
    /// Closed-form differentiation.
    Analytic,
    /// Evaluate both and fail if they disagree beyond the given tolerance.
    CrossCheck { tol: f64 },
}

impl Default for GradientMode {
    fn default() -> Self {
        GradientMode::CentralFd
    }
}

fn kinetic_sigma_gradient_fd(
    ms: &MassSystem,
    s: &DVector<f64>,
    sigma: &DVector<f64>,
    floors: &Floors,
) -> Result<DVector<f64>> {
    let dim = sigma.len();
    let mut grad = DVector::zeros(dim);
    let scale = sigma.amax().max(1.0);
    let h = 1e-3 * scale;
    let mut probe = sigma.clone();
    for i in 0..dim {
        let x = sigma[i];
        probe[i] = x + h;
        let fp = kinetic_quadratic(ms, s, &probe, floors)?;
        probe[i] = x - h;
        let fm = kinetic_quadratic(ms, s, &probe, floors)?;
        probe[i] = x + 2.0 * h;
        let fpp = kinetic_quadratic(ms, s, &probe, floors)?;
        probe[i] = x - 2.0 * h;
        let fmm = kinetic_quadratic(ms, s, &probe, floors)?;
        probe[i] = x;
        grad[i] = (8.0 * (fp - fm) - (fpp - fmm)) / (12.0 * h);
    }
    Ok(grad)
}

fn kinetic_sigma_gradient_analytic(
    ms: &MassSystem,
    s: &DVector<f64>,
    sigma: &DVector<f64>,
    floors: &Floors,
) -> Result<DVector<f64>> {
    let lay = Layout::of(ms);
    let n = lay.n;
    let dim = lay.dim();
    let nn_sq = {
        let v = aug_norm(ms, sigma);
        v * v
    };

    // T = (N^2/2) K(sigma); dT = (mu o sigma) K + (N^2/2) dK.
    let mut sdot = 0.0;
    let mut k_val = 0.0;
    for j in 1..n {
        let sj = lay.block(s, j);
        k_val += sj.norm_squared() / ms.mu(j);
        sdot += sj.dot(&lay.block(sigma, j));
    }
    k_val += sdot * sdot / ms.mu(n);
    let p = cross_sums(&lay, sigma, s);
    k_val += p.x * p.x / ms.mu(n);

    let mut dk = DVector::zeros(dim);
    // d/dsigma of (s.sigma)^2 / mu_n
    for j in 1..n {
        lay.add_to_block(&mut dk, j, &(lay.block(s, j) * (2.0 * sdot / ms.mu(n))));
    }
    // d/dsigma of P_1^2 / mu_n; dP_1/dsigma_j = s_j x e_1
    for j in 1..n {
        let w = lay.block(s, j).cross(&Vector3::x()) * (2.0 * p.x / ms.mu(n));
        lay.add_to_block(&mut dk, j, &w);
    }

    if n > 2 {
        let (s2, s3) = sigma_pair_components(ms, sigma);
        if s2.abs() < floors.division {
            return Err(Error::DivisionDegenerate {
                quantity: "sigma_2",
                value: s2,
                floor: floors.division,
            });
        }
        let q = s3 / s2;
        let g = p.y + q * p.z;
        let mu_pair = ms.mu(n - 1);
        k_val += p.z * p.z / (mu_pair * s2 * s2);
        k_val += g * g / ms.mu(n);

        // d/dsigma of P_3^2 / (mu_(n-1) sigma_2^2)
        for j in 1..=(n - 2) {
            let w = lay.block(s, j).cross(&Vector3::z()) * (2.0 * p.z / (mu_pair * s2 * s2));
            lay.add_to_block(&mut dk, j, &w);
        }
        let o = lay.pair_offset();
        dk[o] += -2.0 * p.z * p.z / (mu_pair * s2 * s2 * s2);

        // d/dsigma of G^2 / mu_n with G = P_2 + q P_3
        for j in 1..=(n - 2) {
            let dg = lay.block(s, j).cross(&Vector3::y())
                + lay.block(s, j).cross(&Vector3::z()) * q;
            lay.add_to_block(&mut dk, j, &(dg * (2.0 * g / ms.mu(n))));
        }
        // q depends on the pair components: dq/ds2 = -q/s2, dq/ds3 = 1/s2.
        dk[o] += 2.0 * g * p.z * (-q / s2) / ms.mu(n);
        dk[o + 1] += 2.0 * g * p.z * (1.0 / s2) / ms.mu(n);
    }

    let mut grad = dk * (0.5 * nn_sq);
    for j in 1..n {
        let w = lay.block(sigma, j) * (ms.mu(j) * k_val);
        lay.add_to_block(&mut grad, j, &w);
    }
    Ok(grad)
}

/// Gradient of the kinetic form in sigma at fixed shape momenta.
pub fn kinetic_sigma_gradient(
    ms: &MassSystem,
    s: &DVector<f64>,
    sigma: &DVector<f64>,
    mode: GradientMode,
    floors: &Floors,
) -> Result<DVector<f64>> {
    match mode {
        GradientMode::CentralFd => kinetic_sigma_gradient_fd(ms, s, sigma, floors),
        GradientMode::Analytic => kinetic_sigma_gradient_analytic(ms, s, sigma, floors),
        GradientMode::CrossCheck { tol } => {
            let fd = kinetic_sigma_gradient_fd(ms, s, sigma, floors)?;
            let an = kinetic_sigma_gradient_analytic(ms, s, sigma, floors)?;
            let diff = (&fd - &an).amax();
            let scale = an.amax().max(1.0);
            if diff > tol * scale {
                return Err(Error::Asymmetry {
                    asym: diff / scale,
                    limit: tol,
                });
            }
            Ok(an)
        }
    }
}

/// Augmented configuration (sigma, e_3) as explicit vectors, for potential
/// evaluation through the pairwise formulas.
fn aug_vectors(ms: &MassSystem, sigma: &DVector<f64>) -> Vec<Vector3<f64>> {
    let lay = Layout::of(ms);
    (1..=lay.n).map(|j| lay.block_aug(sigma, j)).collect()
}

/// Size-normalized potential V(sigma) = N(sigma) W(sigma, e_3), where W is
/// the positive pairwise sum. Scales so that the full potential at size rho
/// is V(sigma)/rho.
pub fn potential_v(ms: &MassSystem, sigma: &DVector<f64>, floors: &Floors) -> Result<f64> {
    check_dim(ms, sigma, "sigma")?;
    let w = jacobi::pair_potential(ms, &aug_vectors(ms, sigma), floors.separation)?;
    Ok(aug_norm(ms, sigma) * w)
}

/// Coefficient of relative block j (1-based) in the pair difference of
/// relative labels a < b (0-based), so that q_(a+1) - q_(b+1) is the sum of
/// these multiples of the configuration blocks.
fn pair_coeff(ms: &MassSystem, a: usize, b: usize, j: usize) -> f64 {
    if j == b {
        1.0
    } else if j == a && a >= 1 {
        -ms.partial(a) / ms.partial(a + 1)
    } else if a < j && j < b {
        ms.mass(j + 1) / ms.partial(j + 1)
    } else {
        0.0
    }
}

/// Closed-form gradient of V(sigma) over the live shape components.
pub fn potential_gradient(
    ms: &MassSystem,
    sigma: &DVector<f64>,
    floors: &Floors,
) -> Result<DVector<f64>> {
    check_dim(ms, sigma, "sigma")?;
    let lay = Layout::of(ms);
    let n = lay.n;
    let vecs = aug_vectors(ms, sigma);
    let nn = aug_norm(ms, sigma);

    let mut w = 0.0;
    let mut dw = DVector::zeros(lay.dim());
    for a in 0..n {
        for b in (a + 1)..=n {
            let mut g = Vector3::zeros();
            for j in 1..=n {
                let c = pair_coeff(ms, a, b, j);
                if c != 0.0 {
                    g += vecs[j - 1] * c;
                }
            }
            let r = g.norm();
            if r < floors.separation {
                return Err(Error::SingularConfiguration {
                    i: a + 1,
                    j: b + 1,
                    sep: r,
                    floor: floors.separation,
                });
            }
            let mm = ms.mass(a + 1) * ms.mass(b + 1);
            w += mm / r;
            let pull = g * (-mm / (r * r * r));
            for j in 1..n {
                let c = pair_coeff(ms, a, b, j);
                if c != 0.0 {
                    lay.add_to_block(&mut dw, j, &(pull * c));
                }
            }
        }
    }

    let mut grad = dw * nn;
    for j in 1..n {
        let wj = lay.block(sigma, j) * (ms.mu(j) * w / nn);
        lay.add_to_block(&mut grad, j, &wj);
    }
    Ok(grad)
}

/// Total energy in the shape chart, including the coupling to the frame
/// angles when the angular momentum is nonzero:
///
/// H = radial_mom^2/2 + N^2 K / (2 rho^2) - V(sigma)/rho,
///
/// where K extends the kinetic bracket by the angle-momentum terms. With all
/// three angle momenta zero this reduces to the rotation-free form.
pub fn hamiltonian_shape(
    ms: &MassSystem,
    ss: &ShapeState,
    ang: &AngularBlock,
    floors: &Floors,
) -> Result<f64> {
    check_dim(ms, &ss.sigma, "sigma")?;
    check_dim(ms, &ss.shape_mom, "shape momentum")?;
    let lay = Layout::of(ms);
    let n = lay.n;
    if ss.rho < floors.division {
        return Err(Error::DivisionDegenerate {
            quantity: "rho",
            value: ss.rho,
            floor: floors.division,
        });
    }
    let (s2, _s3) = sigma_pair_components(ms, &ss.sigma);
    if s2.abs() < floors.division {
        return Err(Error::DivisionDegenerate {
            quantity: "sigma_2",
            value: s2,
            floor: floors.division,
        });
    }
    let nn = aug_norm(ms, &ss.sigma);
    let cf = crate::so3::c_frame_components(ang.p_phi, ang.p_theta, ang.p_psi, &ang.angles, floors)?;

    let mut bracket = 0.0;
    let mut sdot = 0.0;
    for j in 1..n {
        let sj = lay.block(&ss.shape_mom, j);
        bracket += sj.norm_squared() / ms.mu(j);
        sdot += sj.dot(&lay.block(&ss.sigma, j));
    }
    bracket += sdot * sdot / ms.mu(n);

    let p = cross_sums(&lay, &ss.sigma, &ss.shape_mom);
    let (s2, s3) = sigma_pair_components(ms, &ss.sigma);
    let q = s3 / s2;
    // The three momentum components hidden by the frame, at unit size:
    // block n-1 slot 1, block n slots 1 and 2.
    let zeta_pair = -(cf.z - p.z) / s2;
    let zeta_n1 = cf.y - p.y + q * (cf.z - p.z);
    let zeta_n2 = p.x - cf.x;
    bracket += zeta_pair * zeta_pair / ms.mu(n - 1);
    bracket += (zeta_n1 * zeta_n1 + zeta_n2 * zeta_n2) / ms.mu(n);

    let v = potential_v(ms, &ss.sigma, floors)?;
    Ok(ss.radial_mom * ss.radial_mom / 2.0 + nn * nn * bracket / (2.0 * ss.rho * ss.rho)
        - v / ss.rho)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::so3::{self, EulerTriple};
    use approx::{assert_abs_diff_eq, assert_relative_eq};

    fn floors() -> Floors {
        Floors::default()
    }

    fn three_masses() -> MassSystem {
        MassSystem::new(vec![1.0, 1.0, 1.0]).unwrap()
    }

    fn sample_frame_state(ms: &MassSystem) -> (FrameBlocks, FrameBlocks) {
        let n = ms.n_rel();
        let xi = FrameBlocks {
            full: (0..n.saturating_sub(2))
                .map(|k| Vector3::new(0.3 + 0.1 * k as f64, -0.6, 0.2 * k as f64 + 0.4))
                .collect(),
            pair: Vector2::new(-0.8, 0.35),
            last: 1.2,
        };
        let eta = FrameBlocks {
            full: (0..n.saturating_sub(2))
                .map(|k| Vector3::new(-0.2, 0.15 + 0.05 * k as f64, 0.1))
                .collect(),
            pair: Vector2::new(0.25, -0.4),
            last: 0.6,
        };
        (eta, xi)
    }

    #[test]
    fn worked_split_example() {
        // Unit pair components (-1, 0) at r = 1 for three unit masses:
        // N^2 = mu_1 + mu_2 = 7/6, rho = sqrt(7/6).
        let ms = three_masses();
        let xi = FrameBlocks {
            full: vec![],
            pair: Vector2::new(-1.0, 0.0),
            last: 1.0,
        };
        let eta = FrameBlocks {
            full: vec![],
            pair: Vector2::new(0.0, 0.0),
            last: 0.0,
        };
        let ss = shape_split(&ms, &eta, &xi, &floors()).unwrap();
        assert_relative_eq!(ss.rho, (7.0f64 / 6.0).sqrt(), epsilon = 1e-15);
        assert_abs_diff_eq!(ss.sigma[0], -1.0, epsilon = 1e-15);
        assert_abs_diff_eq!(ss.sigma[1], 0.0, epsilon = 1e-15);
        assert_abs_diff_eq!(ss.radial_mom, 0.0, epsilon = 1e-15);
    }

    #[test]
    fn split_merge_round_trip() {
        for ms in [three_masses(), MassSystem::new(vec![2.0, 1.0, 0.5, 1.5]).unwrap()] {
            let (eta, xi) = sample_frame_state(&ms);
            let ss = shape_split(&ms, &eta, &xi, &floors()).unwrap();
            let (eta2, xi2) = shape_merge(&ms, &ss, &floors()).unwrap();
            for (a, b) in eta2.full.iter().zip(&eta.full) {
                assert_abs_diff_eq!(a, b, epsilon = 1e-13);
            }
            assert_abs_diff_eq!(eta2.pair, eta.pair, epsilon = 1e-13);
            assert_relative_eq!(eta2.last, eta.last, epsilon = 1e-13);
            for (a, b) in xi2.full.iter().zip(&xi.full) {
                assert_abs_diff_eq!(a, b, epsilon = 1e-13);
            }
            assert_abs_diff_eq!(xi2.pair, xi.pair, epsilon = 1e-13);
            assert_relative_eq!(xi2.last, xi.last, epsilon = 1e-13);
        }
    }

    #[test]
    fn size_is_mass_norm_of_configuration() {
        let ms = three_masses();
        let (eta, xi) = sample_frame_state(&ms);
        let ss = shape_split(&ms, &eta, &xi, &floors()).unwrap();
        let mut mass_norm_sq = 0.0;
        for j in 1..=2 {
            mass_norm_sq += ms.mu(j) * xi.block(j).norm_squared();
        }
        assert_relative_eq!(ss.rho, mass_norm_sq.sqrt(), epsilon = 1e-14);
    }

    #[test]
    fn zero_shape_momenta_make_momenta_proportional_to_configuration() {
        let ms = three_masses();
        let ss = ShapeState {
            shape_mom: DVector::zeros(2),
            radial_mom: 0.7,
            sigma: DVector::from_vec(vec![-0.9, 0.3]),
            rho: 1.3,
        };
        let (eta, xi) = shape_merge(&ms, &ss, &floors()).unwrap();
        // eta_j = (radial/N) mu_j sigma_j means eta is parallel to xi with
        // blockwise factor mu_j.
        let nn = aug_norm(&ms, &ss.sigma);
        for j in 1..=2usize {
            let expect = ss.sigma.clone();
            let lay = Layout::of(&ms);
            let sig_j = if j == 1 {
                lay.block(&expect, 1)
            } else {
                Vector3::z()
            };
            let eta_j = eta.block(j);
            assert_abs_diff_eq!(
                eta_j,
                sig_j * (ss.radial_mom / nn * ms.mu(j)),
                epsilon = 1e-14
            );
            let _ = xi.block(j);
        }
    }

    #[test]
    fn kinetic_matches_matrix_form() {
        for ms in [three_masses(), MassSystem::new(vec![1.0, 2.0, 0.7, 1.1]).unwrap()] {
            let dim = ms.shape_dim();
            let sigma = DVector::from_fn(dim, |i, _| -1.1 + 0.37 * i as f64 * (-1.0f64).powi(i as i32));
            let s = DVector::from_fn(dim, |i, _| 0.23 - 0.11 * i as f64);
            let t = kinetic_quadratic(&ms, &s, &sigma, &floors()).unwrap();
            let a = kinetic_matrix(&ms, &sigma, &floors()).unwrap();
            let t2 = 0.5 * (s.transpose() * &a * &s)[(0, 0)];
            assert_relative_eq!(t, t2, epsilon = 1e-12);
            // symmetry and positivity
            assert_relative_eq!((&a - a.transpose()).amax(), 0.0, epsilon = 1e-12);
            assert!(t > 0.0);
        }
    }

    #[test]
    fn kinetic_gradient_modes_agree() {
        let ms = MassSystem::new(vec![1.0, 2.0, 0.7, 1.1]).unwrap();
        let dim = ms.shape_dim();
        let sigma = DVector::from_fn(dim, |i, _| -1.2 + 0.41 * (i as f64).sin());
        let s = DVector::from_fn(dim, |i, _| 0.3 * ((i + 1) as f64).cos());
        let g = kinetic_sigma_gradient(&ms, &s, &sigma, GradientMode::CrossCheck { tol: 1e-7 }, &floors())
            .unwrap();
        let fd = kinetic_sigma_gradient(&ms, &s, &sigma, GradientMode::CentralFd, &floors()).unwrap();
        assert_abs_diff_eq!((g - fd).amax(), 0.0, epsilon = 1e-8);
    }

    #[test]
    fn equilateral_potential_value() {
        // sigma = (-2/sqrt(3), 0) is the equilateral shape of three unit
        // masses; its normalized potential is 3.
        let ms = three_masses();
        let sigma = DVector::from_vec(vec![-2.0 / 3.0f64.sqrt(), 0.0]);
        assert_relative_eq!(potential_v(&ms, &sigma, &floors()).unwrap(), 3.0, epsilon = 1e-14);
    }

    #[test]
    fn collinear_potential_value() {
        // sigma = (0, 2/3) is the symmetric collinear shape of three unit
        // masses; its normalized potential is 5 sqrt(2) / 2.
        let ms = three_masses();
        let sigma = DVector::from_vec(vec![0.0, 2.0 / 3.0]);
        assert_relative_eq!(
            potential_v(&ms, &sigma, &floors()).unwrap(),
            2.5 * 2.0f64.sqrt(),
            epsilon = 1e-14
        );
    }

    #[test]
    fn potential_gradient_matches_differences() {
        let ms = MassSystem::new(vec![1.0, 2.0, 0.7, 1.1]).unwrap();
        let dim = ms.shape_dim();
        let sigma = DVector::from_fn(dim, |i, _| if i == 3 { -1.0 } else { 0.3 + 0.2 * i as f64 });
        let grad = potential_gradient(&ms, &sigma, &floors()).unwrap();
        let h = 1e-5;
        let mut probe = sigma.clone();
        for i in 0..dim {
            let x = sigma[i];
            probe[i] = x + h;
            let vp = potential_v(&ms, &probe, &floors()).unwrap();
            probe[i] = x - h;
            let vm = potential_v(&ms, &probe, &floors()).unwrap();
            probe[i] = x;
            assert_relative_eq!(grad[i], (vp - vm) / (2.0 * h), epsilon = 1e-7, max_relative = 1e-7);
        }
    }

    #[test]
    fn equilateral_gradient_vanishes() {
        let ms = three_masses();
        let sigma = DVector::from_vec(vec![-2.0 / 3.0f64.sqrt(), 0.0]);
        let grad = potential_gradient(&ms, &sigma, &floors()).unwrap();
        assert_abs_diff_eq!(grad.amax(), 0.0, epsilon = 1e-13);
    }

    #[test]
    fn hamiltonian_agrees_with_frame_chart_including_rotation_terms() {
        // The equality pins the kinetic normalization: the three recovered
        // momentum components enter with the same 1/(2 mu) weights as the
        // surviving ones, with no extra factor anywhere.
        let ms = MassSystem::new(vec![1.0, 2.0, 1.5]).unwrap();
        let x = vec![Vector3::new(0.4, -0.7, 0.9), Vector3::new(1.1, 0.3, 0.6)];
        let y = vec![Vector3::new(0.2, 0.1, -0.3), Vector3::new(-0.1, 0.4, 0.2)];
        let rs = so3::reduce(&ms, &y, &x, &floors()).unwrap();
        let h_frame = so3::hamiltonian_so3(&ms, &rs, &floors()).unwrap();

        let ss = shape_split(&ms, &rs.eta, &rs.xi, &floors()).unwrap();
        let ang = AngularBlock {
            p_phi: rs.p_phi,
            p_theta: rs.p_theta,
            p_psi: rs.p_psi,
            angles: rs.angles,
        };
        let h_shape = hamiltonian_shape(&ms, &ss, &ang, &floors()).unwrap();
        assert_relative_eq!(h_shape, h_frame, epsilon = 1e-12);
    }

    #[test]
    fn hamiltonian_scaling_in_size() {
        // At fixed momenta the kinetic part scales like rho^-2 and the
        // potential part like rho^-1.
        let ms = three_masses();
        let base = ShapeState {
            shape_mom: DVector::from_vec(vec![0.4, -0.2]),
            radial_mom: 0.0,
            sigma: DVector::from_vec(vec![-1.1, 0.25]),
            rho: 1.0,
        };
        let ang = AngularBlock::zero();
        let t1 = kinetic_quadratic(&ms, &base.shape_mom, &base.sigma, &floors()).unwrap();
        let v1 = potential_v(&ms, &base.sigma, &floors()).unwrap();
        for lambda in [0.5, 2.0, 7.3] {
            let mut scaled = base.clone();
            scaled.rho = lambda;
            let h = hamiltonian_shape(&ms, &scaled, &ang, &floors()).unwrap();
            assert_relative_eq!(
                h,
                t1 / (lambda * lambda) - v1 / lambda,
                epsilon = 1e-12,
                max_relative = 1e-12
            );
        }
    }

    #[test]
    fn generating_identity_along_random_tangents() {
        // The chart is canonical: momenta contract with pushed-forward
        // tangents identically on both sides.
        let ms = MassSystem::new(vec![1.0, 2.0, 0.7, 1.1]).unwrap();
        let (eta, xi) = sample_frame_state(&ms);
        let ss = shape_split(&ms, &eta, &xi, &floors()).unwrap();
        let n = ms.n_rel();

        // Tangent in the frame chart: perturb live xi components and r.
        let deltas: Vec<(usize, usize, f64)> = vec![
            (1, 0, 0.7),
            (1, 2, -0.4),
            (n - 1, 1, 0.9),
            (n - 1, 2, 0.3),
            (n, 2, -0.6),
        ];
        let h = 1e-6;
        let perturb = |eps: f64| -> FrameBlocks {
            let mut p = xi.clone();
            for &(j, c, w) in &deltas {
                if j <= n - 2 {
                    p.full[j - 1][c] += eps * w;
                } else if j == n - 1 {
                    if c == 1 {
                        p.pair.x += eps * w;
                    } else {
                        p.pair.y += eps * w;
                    }
                } else {
                    p.last += eps * w;
                }
            }
            p
        };
        let sp = shape_split(&ms, &eta, &perturb(h), &floors()).unwrap();
        let sm = shape_split(&ms, &eta, &perturb(-h), &floors()).unwrap();
        let dsigma = (&sp.sigma - &sm.sigma) / (2.0 * h);
        let drho = (sp.rho - sm.rho) / (2.0 * h);

        let mut lhs = ss.shape_mom.dot(&dsigma) + ss.radial_mom * drho;
        // Frame-side pairing: eta . delta xi + eta_last delta r, over the
        // same tangent. Dropped eta components never meet a live tangent.
        let mut rhs = 0.0;
        for &(j, c, w) in &deltas {
            rhs += eta.block(j)[c] * w;
        }
        lhs -= rhs;
        assert_abs_diff_eq!(lhs, 0.0, epsilon = 1e-8);
    }

    #[test]
    fn non_collinearity_ratio_matches_cartesian_quantities() {
        let ms = three_masses();
        let (eta, xi) = sample_frame_state(&ms);
        let ss = shape_split(&ms, &eta, &xi, &floors()).unwrap();
        let (inv_s2, ratio) = non_collinearity_ratios(&ms, &ss.sigma);
        // 1/|sigma_2| = |x_n|^2 / |x_n x x_(n-1)| and |sigma_3/sigma_2| =
        // |x_n . x_(n-1)| / |x_n x x_(n-1)| for the frame configuration.
        let x_pair = Vector3::new(0.0, xi.pair.x, xi.pair.y);
        let x_last = Vector3::new(0.0, 0.0, xi.last);
        let cross = x_last.cross(&x_pair).norm();
        assert_relative_eq!(inv_s2, x_last.norm_squared() / cross, epsilon = 1e-12);
        assert_relative_eq!(
            ratio,
            x_last.dot(&x_pair).abs() / cross,
            epsilon = 1e-12
        );
    }

    #[test]
    fn degenerate_inputs_are_typed_errors() {
        let ms = three_masses();
        let ss = ShapeState {
            shape_mom: DVector::zeros(2),
            radial_mom: 0.0,
            sigma: DVector::from_vec(vec![-1.0, 0.0]),
            rho: 0.0,
        };
        match shape_merge(&ms, &ss, &floors()) {
            Err(Error::DivisionDegenerate { .. }) => {}
            other => panic!("expected division degeneracy, got {other:?}"),
        }
        let bad = DVector::from_vec(vec![-1.0, 0.0, 0.3]);
        assert!(potential_v(&ms, &bad, &floors()).is_err());
    }

    #[test]
    fn angular_block_zero_reduces_to_plain_kinetic() {
        let ms = three_masses();
        let ss = ShapeState {
            shape_mom: DVector::from_vec(vec![0.4, -0.2]),
            radial_mom: 0.3,
            sigma: DVector::from_vec(vec![-1.1, 0.25]),
            rho: 1.7,
        };
        let h = hamiltonian_shape(&ms, &ss, &AngularBlock::zero(), &floors()).unwrap();
        let t = kinetic_quadratic(&ms, &ss.shape_mom, &ss.sigma, &floors()).unwrap();
        let v = potential_v(&ms, &ss.sigma, &floors()).unwrap();
        let expect = ss.radial_mom * ss.radial_mom / 2.0 + t / (ss.rho * ss.rho) - v / ss.rho;
        assert_relative_eq!(h, expect, epsilon = 1e-13);
    }

    #[test]
    fn euler_angles_used_in_unit_tests_stay_off_the_seam() {
        let t = EulerTriple {
            phi: 0.3,
            theta: 1.0,
            psi: -0.4,
        };
        assert!(t.theta.sin() > 0.5);
    }
}
