//! Jacobi chart: translation reduction by cumulative centers of mass.
//!
//! The relative position x_i points from the center of mass of the first i
//! bodies to body i+1; B is the total center of mass. The conjugate momenta
//! are y_1..y_n together with the total linear momentum P. Both directions of
//! the transform are linear with coefficient matrices built from mass ratios,
//! so one direction is assembled directly and the other is an LU solve of the
//! same matrix.

use nalgebra::{DMatrix, Vector3};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::masses::MassSystem;
use crate::nbody::CartesianState;

/// State in the translation-reduced chart.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JacobiState {
    /// Total linear momentum.
    pub p_total: Vector3<f64>,
    /// Center of mass.
    pub b: Vector3<f64>,
    /// Momenta conjugate to the relative positions, y_1..y_n at y[0..n].
    pub y: Vec<Vector3<f64>>,
    /// Relative positions x_1..x_n at x[0..n].
    pub x: Vec<Vector3<f64>>,
}

impl JacobiState {
    fn check(&self, ms: &MassSystem) -> Result<()> {
        if self.x.len() != ms.n_rel() || self.y.len() != ms.n_rel() {
            return Err(Error::InvalidInput(format!(
                "state holds {} relative coordinates but the mass system needs {}",
                self.x.len(),
                ms.n_rel()
            )));
        }
        Ok(())
    }
}

/// Reduced masses mu_1..mu_n conjugate to the relative coordinates.
pub fn reduced_masses(ms: &MassSystem) -> &[f64] {
    ms.reduced()
}

/// Matrix of the map (y_1..y_n, P) -> (p_1..p_(n+1)); the inverse direction
/// is solved against it.
fn momentum_matrix(ms: &MassSystem) -> DMatrix<f64> {
    let n = ms.n_rel();
    let mut a = DMatrix::zeros(n + 1, n + 1);
    for i in 1..=(n + 1) {
        for j in i..=n {
            a[(i - 1, j - 1)] = ms.mass(i) / ms.partial(j);
        }
        a[(i - 1, n)] = ms.mass(i) / ms.total();
        if i >= 2 {
            a[(i - 1, i - 2)] -= 1.0;
        }
    }
    a
}

/// Matrix of the map (q_1..q_(n+1)) -> (x_1..x_n, B); the inverse direction
/// is solved against it.
fn position_matrix(ms: &MassSystem) -> DMatrix<f64> {
    let n = ms.n_rel();
    let mut g = DMatrix::zeros(n + 1, n + 1);
    for i in 1..=n {
        for j in 1..=i {
            g[(i - 1, j - 1)] = ms.mass(j) / ms.partial(i);
        }
        g[(i - 1, i)] = -1.0;
    }
    for j in 1..=(n + 1) {
        g[(n, j - 1)] = ms.mass(j) / ms.total();
    }
    g
}

fn stack(vs: &[Vector3<f64>]) -> DMatrix<f64> {
    let mut m = DMatrix::zeros(vs.len(), 3);
    for (r, v) in vs.iter().enumerate() {
        for c in 0..3 {
            m[(r, c)] = v[c];
        }
    }
    m
}

fn unstack(m: &DMatrix<f64>) -> Vec<Vector3<f64>> {
    (0..m.nrows())
        .map(|r| Vector3::new(m[(r, 0)], m[(r, 1)], m[(r, 2)]))
        .collect()
}

pub fn to_jacobi(ms: &MassSystem, s: &CartesianState) -> Result<JacobiState> {
    if s.n_bodies() != ms.n_bodies() {
        return Err(Error::InvalidInput(format!(
            "state holds {} bodies but the mass system has {}",
            s.n_bodies(),
            ms.n_bodies()
        )));
    }
    let n = ms.n_rel();
    let pos = position_matrix(ms) * stack(&s.q);
    let mut xb = unstack(&pos);
    let b = xb.pop().unwrap();
    let x = xb;

    let a = momentum_matrix(ms);
    let lu = a.lu();
    let sol = lu.solve(&stack(&s.p)).ok_or_else(|| {
        Error::InvalidInput("momentum coefficient matrix is singular".into())
    })?;
    let mut yp = unstack(&sol);
    let p_total = yp.pop().unwrap();
    let y = yp;
    debug_assert_eq!(x.len(), n);
    Ok(JacobiState { p_total, b, y, x })
}

pub fn from_jacobi(ms: &MassSystem, js: &JacobiState) -> Result<CartesianState> {
    js.check(ms)?;
    let n = ms.n_rel();

    // Momenta are direct: p_i = m_i sum_(j >= i) y_j / M_j - y_(i-1),
    // where the sum runs through j = n+1 with y_(n+1) = P.
    let mut p = Vec::with_capacity(n + 1);
    for i in 1..=(n + 1) {
        let mut pi = Vector3::zeros();
        for j in i..=n {
            pi += js.y[j - 1] * (ms.mass(i) / ms.partial(j));
        }
        pi += js.p_total * (ms.mass(i) / ms.total());
        if i >= 2 {
            pi -= js.y[i - 2];
        }
        p.push(pi);
    }

    let g = position_matrix(ms);
    let mut rhs = js.x.clone();
    rhs.push(js.b);
    let lu = g.lu();
    let sol = lu.solve(&stack(&rhs)).ok_or_else(|| {
        Error::InvalidInput("position coefficient matrix is singular".into())
    })?;
    let q = unstack(&sol);
    CartesianState::new(q, p)
}

/// Difference vector q_i - q_j between bodies i < j (1-based), written in the
/// relative coordinates. Distances between bodies come from these without
/// ever reconstructing absolute positions.
pub fn pair_vector(ms: &MassSystem, x: &[Vector3<f64>], i: usize, j: usize) -> Vector3<f64> {
    debug_assert!(1 <= i && i < j && j <= ms.n_bodies());
    // 0-based relative labels: a = i-1, b = j-1 with 1 <= b <= n.
    let (a, b) = (i - 1, j - 1);
    let mut g = x[b - 1];
    if a >= 1 {
        g -= x[a - 1] * (ms.partial(a) / ms.partial(a + 1));
    }
    for k in (a + 1)..b {
        g += x[k - 1] * (ms.mass(k + 1) / ms.partial(k + 1));
    }
    g
}

/// Positive pairwise potential sum m_i m_j / r_ij evaluated in relative
/// coordinates; the Hamiltonian subtracts it.
pub fn pair_potential(ms: &MassSystem, x: &[Vector3<f64>], floor: f64) -> Result<f64> {
    let mut w = 0.0;
    for i in 1..=ms.n_bodies() {
        for j in (i + 1)..=ms.n_bodies() {
            let r = pair_vector(ms, x, i, j).norm();
            if r < floor {
                return Err(Error::SingularConfiguration {
                    i,
                    j,
                    sep: r,
                    floor,
                });
            }
            w += ms.mass(i) * ms.mass(j) / r;
        }
    }
    Ok(w)
}

/// Internal energy in the translation-reduced chart:
/// sum |y_i|^2 / (2 mu_i) - sum m_i m_j / r_ij.
///
/// The uniform drift of the barycenter is excluded, so the total energy of
/// the original system is |P|^2 / (2 M) plus this value.
pub fn hamiltonian_jacobi(ms: &MassSystem, js: &JacobiState, floor: f64) -> Result<f64> {
    js.check(ms)?;
    let mut t = 0.0;
    for (i, y) in js.y.iter().enumerate() {
        t += y.norm_squared() / (2.0 * ms.mu(i + 1));
    }
    Ok(t - pair_potential(ms, &js.x, floor)?)
}

/// Total angular momentum B x P + sum x_i x y_i; identical to the Cartesian
/// angular momentum about the origin.
pub fn angular_momentum_jacobi(js: &JacobiState) -> Vector3<f64> {
    let mut c = js.b.cross(&js.p_total);
    for (x, y) in js.x.iter().zip(&js.y) {
        c += x.cross(y);
    }
    c
}
