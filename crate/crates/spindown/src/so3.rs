//! Rotation reduction: a body frame adapted to the last two relative
//! positions, 3-1-3 spherical angles for that frame, and the exact recovery
//! of the dropped momentum components from the angular momentum integrals.
//!
//! The frame sends x_n to the third axis and x_(n-1) into the plane spanned
//! by the second and third axes with a negative second component. In frame
//! coordinates xi_j = R^T x_j this forces xi_(n-1),1 = 0 and xi_n = (0, 0, r),
//! so three position components die; the three conjugate momentum components
//! that die with them are functions of the remaining state and the three
//! angular momentum integrals, which is what `reconstruct` exploits.

use nalgebra::{Matrix3, Vector2, Vector3};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::jacobi::{self, JacobiState};
use crate::masses::MassSystem;
use crate::Floors;

/// 3-1-3 spherical angles of the body frame: R = R3(phi) R1(theta) R3(psi),
/// with theta in (0, pi).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EulerTriple {
    pub phi: f64,
    pub theta: f64,
    pub psi: f64,
}

/// The surviving components of a frame-coordinate family of n vectors:
/// blocks 1..n-2 in full, block n-1 reduced to its second and third
/// components, block n reduced to its third.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrameBlocks {
    pub full: Vec<Vector3<f64>>,
    pub pair: Vector2<f64>,
    pub last: f64,
}

impl FrameBlocks {
    pub fn n_rel(&self) -> usize {
        self.full.len() + 2
    }

    /// Block j (1-based) as a full vector, dropped components read as zero.
    pub fn block(&self, j: usize) -> Vector3<f64> {
        let n = self.n_rel();
        if j <= n - 2 {
            self.full[j - 1]
        } else if j == n - 1 {
            Vector3::new(0.0, self.pair.x, self.pair.y)
        } else {
            Vector3::new(0.0, 0.0, self.last)
        }
    }

    /// All n blocks as vectors, dropped components as zero.
    pub fn to_vectors(&self) -> Vec<Vector3<f64>> {
        (1..=self.n_rel()).map(|j| self.block(j)).collect()
    }
}

/// State of the rotation-reduced system: the three frame angles with their
/// conjugate momenta, and the surviving frame components of positions and
/// momenta.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReducedState {
    pub p_phi: f64,
    pub p_theta: f64,
    pub p_psi: f64,
    pub eta: FrameBlocks,
    pub angles: EulerTriple,
    pub xi: FrameBlocks,
}

/// The rotational part of a reduced state on its own: the three frame angles
/// and their conjugate momenta, detached from the frame components.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AngularBlock {
    pub p_phi: f64,
    pub p_theta: f64,
    pub p_psi: f64,
    pub angles: EulerTriple,
}

impl AngularBlock {
    /// Zero angular momentum with the frame at the equator, away from the
    /// gimbal degeneracy of the angle chart.
    pub fn zero() -> Self {
        AngularBlock {
            p_phi: 0.0,
            p_theta: 0.0,
            p_psi: 0.0,
            angles: EulerTriple {
                phi: 0.0,
                theta: std::f64::consts::FRAC_PI_2,
                psi: 0.0,
            },
        }
    }
}

impl From<&ReducedState> for AngularBlock {
    fn from(rs: &ReducedState) -> Self {
        AngularBlock {
            p_phi: rs.p_phi,
            p_theta: rs.p_theta,
            p_psi: rs.p_psi,
            angles: rs.angles,
        }
    }
}

fn rot1(a: f64) -> Matrix3<f64> {
    let (s, c) = a.sin_cos();
    Matrix3::new(1.0, 0.0, 0.0, 0.0, c, -s, 0.0, s, c)
}

fn rot3(a: f64) -> Matrix3<f64> {
    let (s, c) = a.sin_cos();
    Matrix3::new(c, -s, 0.0, s, c, 0.0, 0.0, 0.0, 1.0)
}

pub fn rotation_from_euler(t: &EulerTriple) -> Matrix3<f64> {
    rot3(t.phi) * rot1(t.theta) * rot3(t.psi)
}

/// Orthonormal frame adapted to the last two relative positions, returned as
/// a rotation matrix with the frame vectors as columns. The third column is
/// x_last normalized, the first is x_last x x_prev normalized.
pub fn moving_frame(
    x_prev: &Vector3<f64>,
    x_last: &Vector3<f64>,
    floors: &Floors,
) -> Result<Matrix3<f64>> {
    let r = x_last.norm();
    if r < floors.division {
        return Err(Error::DivisionDegenerate {
            quantity: "|x_n|",
            value: r,
            floor: floors.division,
        });
    }
    let cross = x_last.cross(x_prev);
    let cn = cross.norm();
    if cn < floors.frame {
        return Err(Error::FrameDegenerate {
            cross: cn,
            floor: floors.frame,
        });
    }
    let f3 = x_last / r;
    let f1 = cross / cn;
    let f2 = f3.cross(&f1);
    Ok(Matrix3::from_columns(&[f1, f2, f3]))
}

/// Spherical angles of a frame produced by `moving_frame`; fails near the
/// vertical where the node line is undefined.
pub fn euler_angles(frame: &Matrix3<f64>, floors: &Floors) -> Result<EulerTriple> {
    let f1 = frame.column(0);
    let f2 = frame.column(1);
    let f3 = frame.column(2);
    let s_theta = f3.x.hypot(f3.y);
    if s_theta < floors.gimbal {
        return Err(Error::GimbalDegenerate {
            sin_theta: s_theta,
            floor: floors.gimbal,
        });
    }
    Ok(EulerTriple {
        phi: f64::atan2(f3.x, -f3.y),
        theta: f64::atan2(s_theta, f3.z),
        psi: f64::atan2(f1.z, f2.z),
    })
}

/// Partial angular momentum sum_(j <= p) (xi_j x eta_j) . e_k over the first
/// p blocks, k in {1, 2, 3}. Components dropped by the reduction are read as
/// zero, so only combinations that avoid them are meaningful; the inverse
/// chart needs k = 3 and k = 2 up to p = n-2 and k = 1 up to p = n-1, none of
/// which touch a dropped component.
pub fn psi_partial(eta: &FrameBlocks, xi: &FrameBlocks, k: usize, p: usize) -> f64 {
    debug_assert!((1..=3).contains(&k));
    (1..=p)
        .map(|j| xi.block(j).cross(&eta.block(j))[k - 1])
        .sum()
}

/// Angular momentum written in frame components (C.f1, C.f2, C.f3), from the
/// angle momenta alone.
pub fn c_frame_components(
    p_phi: f64,
    p_theta: f64,
    p_psi: f64,
    angles: &EulerTriple,
    floors: &Floors,
) -> Result<Vector3<f64>> {
    let s_theta = angles.theta.sin();
    if s_theta.abs() < floors.gimbal {
        return Err(Error::GimbalDegenerate {
            sin_theta: s_theta,
            floor: floors.gimbal,
        });
    }
    let a = (p_phi - p_psi * angles.theta.cos()) / s_theta;
    let (s_psi, c_psi) = angles.psi.sin_cos();
    Ok(Vector3::new(
        p_theta * c_psi + a * s_psi,
        -p_theta * s_psi + a * c_psi,
        p_psi,
    ))
}

/// Reduce a translation-reduced state (y, x) to frame coordinates. The total
/// angular momentum of (y, x) becomes the three angle momenta; the dropped
/// eta components are discarded because they are recoverable.
pub fn reduce(
    ms: &MassSystem,
    y: &[Vector3<f64>],
    x: &[Vector3<f64>],
    floors: &Floors,
) -> Result<ReducedState> {
    let n = ms.n_rel();
    if n < 2 {
        return Err(Error::InvalidInput(
            "rotation reduction needs at least two relative coordinates".into(),
        ));
    }
    if x.len() != n || y.len() != n {
        return Err(Error::InvalidInput(format!(
            "expected {n} relative coordinates, got {} positions and {} momenta",
            x.len(),
            y.len()
        )));
    }
    let frame = moving_frame(&x[n - 2], &x[n - 1], floors)?;
    let angles = euler_angles(&frame, floors)?;
    let rt = frame.transpose();

    let xi_vecs: Vec<Vector3<f64>> = x.iter().map(|v| rt * v).collect();
    let eta_vecs: Vec<Vector3<f64>> = y.iter().map(|v| rt * v).collect();

    let mut c = Vector3::zeros();
    for (xj, yj) in x.iter().zip(y) {
        c += xj.cross(yj);
    }
    let gamma = Vector3::new(angles.phi.cos(), angles.phi.sin(), 0.0);
    let f3 = frame.column(2).into_owned();

    let xi = FrameBlocks {
        full: xi_vecs[..n - 2].to_vec(),
        pair: Vector2::new(xi_vecs[n - 2].y, xi_vecs[n - 2].z),
        last: xi_vecs[n - 1].z,
    };
    let eta = FrameBlocks {
        full: eta_vecs[..n - 2].to_vec(),
        pair: Vector2::new(eta_vecs[n - 2].y, eta_vecs[n - 2].z),
        last: eta_vecs[n - 1].z,
    };

    Ok(ReducedState {
        p_phi: c.dot(&Vector3::z()),
        p_theta: c.dot(&gamma),
        p_psi: c.dot(&f3),
        eta,
        angles,
        xi,
    })
}

/// The three momentum components dropped by `reduce`, in the order
/// (eta_(n-1),1, eta_n,1, eta_n,2), recovered from the angle momenta and the
/// surviving blocks.
pub fn dropped_momenta(rs: &ReducedState, floors: &Floors) -> Result<Vector3<f64>> {
    let xi2 = rs.xi.pair.x;
    let xi3 = rs.xi.pair.y;
    let r = rs.xi.last;
    if xi2.abs() < floors.division {
        return Err(Error::DivisionDegenerate {
            quantity: "xi_(n-1),2",
            value: xi2,
            floor: floors.division,
        });
    }
    if r.abs() < floors.division {
        return Err(Error::DivisionDegenerate {
            quantity: "xi_n,3",
            value: r,
            floor: floors.division,
        });
    }
    let n = rs.xi.n_rel();
    let c_frame = c_frame_components(rs.p_phi, rs.p_theta, rs.p_psi, &rs.angles, floors)?;
    let psi3 = psi_partial(&rs.eta, &rs.xi, 3, n - 2);
    let psi2 = psi_partial(&rs.eta, &rs.xi, 2, n - 2);
    let psi1 = psi_partial(&rs.eta, &rs.xi, 1, n - 1);

    let zeta_pair = -(rs.p_psi - psi3) / xi2;
    let zeta_n1 = (c_frame.y - psi2 - xi3 * zeta_pair) / r;
    let zeta_n2 = (psi1 - c_frame.x) / r;
    Ok(Vector3::new(zeta_pair, zeta_n1, zeta_n2))
}

/// Rebuild the translation-reduced state (y, x) from a reduced one. Inverse
/// of `reduce` wherever the chart is defined.
pub fn reconstruct(
    ms: &MassSystem,
    rs: &ReducedState,
    floors: &Floors,
) -> Result<(Vec<Vector3<f64>>, Vec<Vector3<f64>>)> {
    let n = ms.n_rel();
    if rs.xi.n_rel() != n || rs.eta.n_rel() != n {
        return Err(Error::InvalidInput(format!(
            "reduced state holds {} blocks but the mass system needs {n}",
            rs.xi.n_rel()
        )));
    }
    if rs.xi.pair.x > -floors.division {
        return Err(Error::DivisionDegenerate {
            quantity: "xi_(n-1),2 (must be negative)",
            value: rs.xi.pair.x,
            floor: floors.division,
        });
    }
    if rs.xi.last < floors.division {
        return Err(Error::DivisionDegenerate {
            quantity: "xi_n,3 (must be positive)",
            value: rs.xi.last,
            floor: floors.division,
        });
    }
    let zeta = dropped_momenta(rs, floors)?;

    let r = rotation_from_euler(&rs.angles);
    let mut x = Vec::with_capacity(n);
    let mut y = Vec::with_capacity(n);
    for j in 1..=n {
        let xi_j = rs.xi.block(j);
        let mut eta_j = rs.eta.block(j);
        if j == n - 1 {
            eta_j.x = zeta.x;
        } else if j == n {
            eta_j.x = zeta.y;
            eta_j.y = zeta.z;
        }
        x.push(r * xi_j);
        y.push(r * eta_j);
    }
    Ok((y, x))
}

/// Total energy in the rotation-reduced chart. Equals the translation-reduced
/// Hamiltonian at P = 0 wherever both are defined.
pub fn hamiltonian_so3(ms: &MassSystem, rs: &ReducedState, floors: &Floors) -> Result<f64> {
    let n = ms.n_rel();
    let zeta = dropped_momenta(rs, floors)?;
    let mut t = 0.0;
    for j in 1..=(n - 2) {
        t += rs.eta.full[j - 1].norm_squared() / (2.0 * ms.mu(j));
    }
    t += (rs.eta.pair.norm_squared() + zeta.x * zeta.x) / (2.0 * ms.mu(n - 1));
    t += (rs.eta.last * rs.eta.last + zeta.y * zeta.y + zeta.z * zeta.z) / (2.0 * ms.mu(n));
    let w = jacobi::pair_potential(ms, &rs.xi.to_vectors(), floors.separation)?;
    Ok(t - w)
}

/// Convenience wrapper: reduce the rotational part of a full Jacobi state
/// (its B and P are ignored).
pub fn reduce_jacobi(ms: &MassSystem, js: &JacobiState, floors: &Floors) -> Result<ReducedState> {
    reduce(ms, &js.y, &js.x, floors)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::{assert_abs_diff_eq, assert_relative_eq};
    use nalgebra::Rotation3;

    fn floors() -> Floors {
        Floors::default()
    }

    fn sample_xy() -> (MassSystem, Vec<Vector3<f64>>, Vec<Vector3<f64>>) {
        let ms = MassSystem::new(vec![1.0, 2.0, 1.5]).unwrap();
        let x = vec![Vector3::new(0.4, -0.7, 0.9), Vector3::new(1.1, 0.3, 0.6)];
        let y = vec![Vector3::new(0.2, 0.1, -0.3), Vector3::new(-0.1, 0.4, 0.2)];
        (ms, y, x)
    }

    #[test]
    fn frame_is_orthonormal_and_adapted() {
        let xp = Vector3::new(0.3, 1.0, -0.2);
        let xl = Vector3::new(1.0, -0.5, 0.7);
        let f = moving_frame(&xp, &xl, &floors()).unwrap();
        let id = f.transpose() * f;
        assert_abs_diff_eq!(id, Matrix3::identity(), epsilon = 1e-14);
        assert_relative_eq!(f.determinant(), 1.0, epsilon = 1e-14);
        // Third axis along x_last, first axis orthogonal to both inputs.
        assert_abs_diff_eq!(f.column(2).into_owned(), xl / xl.norm(), epsilon = 1e-14);
        assert_abs_diff_eq!(f.column(0).dot(&xp), 0.0, epsilon = 1e-14);
        assert_abs_diff_eq!(f.column(0).dot(&xl), 0.0, epsilon = 1e-14);
    }

    #[test]
    fn euler_angles_invert_rotation() {
        let t = EulerTriple {
            phi: 0.7,
            theta: 1.2,
            psi: -2.1,
        };
        let r = rotation_from_euler(&t);
        let back = euler_angles(&r, &floors()).unwrap();
        assert_relative_eq!(back.phi, t.phi, epsilon = 1e-13);
        assert_relative_eq!(back.theta, t.theta, epsilon = 1e-13);
        assert_relative_eq!(back.psi, t.psi, epsilon = 1e-13);
    }

    #[test]
    fn quarter_turn_about_first_axis() {
        let t = EulerTriple {
            phi: 0.0,
            theta: std::f64::consts::FRAC_PI_2,
            psi: 0.0,
        };
        let r = rotation_from_euler(&t);
        let expect = Matrix3::new(1.0, 0.0, 0.0, 0.0, 0.0, -1.0, 0.0, 1.0, 0.0);
        assert_abs_diff_eq!(r, expect, epsilon = 1e-15);
    }

    #[test]
    fn collinear_pair_is_frame_degenerate() {
        let xp = Vector3::new(2.0, 0.0, 0.0);
        let xl = Vector3::new(-3.0, 0.0, 0.0);
        match moving_frame(&xp, &xl, &floors()) {
            Err(Error::FrameDegenerate { .. }) => {}
            other => panic!("expected frame degeneracy, got {other:?}"),
        }
    }

    #[test]
    fn vertical_last_axis_is_gimbal_degenerate() {
        let xp = Vector3::new(1.0, 0.0, 0.5);
        let xl = Vector3::new(0.0, 0.0, 2.0);
        let f = moving_frame(&xp, &xl, &floors()).unwrap();
        match euler_angles(&f, &floors()) {
            Err(Error::GimbalDegenerate { .. }) => {}
            other => panic!("expected gimbal degeneracy, got {other:?}"),
        }
    }

    #[test]
    fn reduce_produces_structural_zeros() {
        let (ms, y, x) = sample_xy();
        let rs = reduce(&ms, &y, &x, &floors()).unwrap();
        assert!(rs.xi.pair.x < 0.0);
        assert_relative_eq!(rs.xi.last, x[1].norm(), epsilon = 1e-13);
        // the surviving pair of block n-1 carries the full length of x_(n-1)
        assert_relative_eq!(rs.xi.pair.norm(), x[0].norm(), epsilon = 1e-13);
    }

    #[test]
    fn reduce_reconstruct_round_trip() {
        let (ms, y, x) = sample_xy();
        let rs = reduce(&ms, &y, &x, &floors()).unwrap();
        let (y2, x2) = reconstruct(&ms, &rs, &floors()).unwrap();
        for j in 0..2 {
            assert_abs_diff_eq!(x2[j], x[j], epsilon = 1e-13);
            assert_abs_diff_eq!(y2[j], y[j], epsilon = 1e-13);
        }
    }

    #[test]
    fn round_trip_with_three_relative_coordinates() {
        let ms = MassSystem::new(vec![1.0, 2.0, 1.5, 0.7]).unwrap();
        let x = vec![
            Vector3::new(0.4, -0.7, 0.9),
            Vector3::new(1.1, 0.3, 0.6),
            Vector3::new(-0.5, 0.8, 0.4),
        ];
        let y = vec![
            Vector3::new(0.2, 0.1, -0.3),
            Vector3::new(-0.1, 0.4, 0.2),
            Vector3::new(0.3, -0.2, 0.1),
        ];
        let rs = reduce(&ms, &y, &x, &floors()).unwrap();
        let (y2, x2) = reconstruct(&ms, &rs, &floors()).unwrap();
        for j in 0..3 {
            assert_abs_diff_eq!(x2[j], x[j], epsilon = 1e-12);
            assert_abs_diff_eq!(y2[j], y[j], epsilon = 1e-12);
        }
    }

    #[test]
    fn angle_momenta_encode_angular_momentum() {
        let (ms, y, x) = sample_xy();
        let rs = reduce(&ms, &y, &x, &floors()).unwrap();
        let mut c = Vector3::zeros();
        for (xj, yj) in x.iter().zip(&y) {
            c += xj.cross(yj);
        }
        // Vertical component is the phi momentum.
        assert_relative_eq!(rs.p_phi, c.z, epsilon = 1e-13);
        // Frame components from the angle momenta match the direct ones.
        let frame = moving_frame(&x[0], &x[1], &floors()).unwrap();
        let cf = c_frame_components(rs.p_phi, rs.p_theta, rs.p_psi, &rs.angles, &floors()).unwrap();
        for k in 0..3 {
            assert_relative_eq!(cf[k], frame.column(k).dot(&c), epsilon = 1e-12);
        }
    }

    #[test]
    fn zero_angular_momentum_zeroes_the_angle_momenta() {
        let ms = MassSystem::new(vec![1.0, 1.0, 1.0]).unwrap();
        let x = vec![Vector3::new(0.9, 0.1, 0.4), Vector3::new(-0.2, 1.0, 0.5)];
        // Momenta proportional to positions give x cross y = 0 blockwise.
        let y = vec![x[0] * 0.7, x[1] * -0.3];
        let rs = reduce(&ms, &y, &x, &floors()).unwrap();
        assert_abs_diff_eq!(rs.p_phi, 0.0, epsilon = 1e-14);
        assert_abs_diff_eq!(rs.p_theta, 0.0, epsilon = 1e-14);
        assert_abs_diff_eq!(rs.p_psi, 0.0, epsilon = 1e-14);
    }

    #[test]
    fn rotating_the_state_leaves_frame_coordinates_fixed() {
        let (ms, y, x) = sample_xy();
        let rs = reduce(&ms, &y, &x, &floors()).unwrap();
        let rot = Rotation3::from_axis_angle(
            &nalgebra::Unit::new_normalize(Vector3::new(0.3, -1.0, 0.8)),
            1.1,
        );
        let xr: Vec<_> = x.iter().map(|v| rot * v).collect();
        let yr: Vec<_> = y.iter().map(|v| rot * v).collect();
        let rsr = reduce(&ms, &yr, &xr, &floors()).unwrap();
        assert_abs_diff_eq!(rsr.xi.pair, rs.xi.pair, epsilon = 1e-13);
        assert_relative_eq!(rsr.xi.last, rs.xi.last, epsilon = 1e-13);
        for (a, b) in rsr.eta.full.iter().zip(&rs.eta.full) {
            assert_abs_diff_eq!(a, b, epsilon = 1e-13);
        }
        assert_abs_diff_eq!(rsr.eta.pair, rs.eta.pair, epsilon = 1e-13);
        assert_relative_eq!(rsr.eta.last, rs.eta.last, epsilon = 1e-13);
        // The frame component of C along f3 is geometric, hence invariant.
        assert_relative_eq!(rsr.p_psi, rs.p_psi, epsilon = 1e-12);
    }

    #[test]
    fn vertical_rotation_shifts_only_phi() {
        let (ms, y, x) = sample_xy();
        let rs = reduce(&ms, &y, &x, &floors()).unwrap();
        let chi = 0.9;
        let rot = Rotation3::from_axis_angle(&Vector3::z_axis(), chi);
        let xr: Vec<_> = x.iter().map(|v| rot * v).collect();
        let yr: Vec<_> = y.iter().map(|v| rot * v).collect();
        let rsr = reduce(&ms, &yr, &xr, &floors()).unwrap();
        assert_relative_eq!(rsr.angles.phi, rs.angles.phi + chi, epsilon = 1e-12);
        assert_relative_eq!(rsr.angles.theta, rs.angles.theta, epsilon = 1e-12);
        assert_relative_eq!(rsr.angles.psi, rs.angles.psi, epsilon = 1e-12);
        assert_relative_eq!(rsr.p_phi, rs.p_phi, epsilon = 1e-12);
        assert_relative_eq!(rsr.p_theta, rs.p_theta, epsilon = 1e-12);
        assert_relative_eq!(rsr.p_psi, rs.p_psi, epsilon = 1e-12);
    }

    #[test]
    fn hamiltonian_matches_translation_reduced_value() {
        let (ms, y, x) = sample_xy();
        let rs = reduce(&ms, &y, &x, &floors()).unwrap();
        let js = JacobiState {
            p_total: Vector3::zeros(),
            b: Vector3::zeros(),
            y: y.clone(),
            x: x.clone(),
        };
        let hj = jacobi::hamiltonian_jacobi(&ms, &js, 1e-12).unwrap();
        let hr = hamiltonian_so3(&ms, &rs, &floors()).unwrap();
        assert_relative_eq!(hr, hj, epsilon = 1e-12);
    }

    #[test]
    fn single_axis_rotations_pull_back_to_momentum_components() {
        // Rotating the whole state about axis e_j and differentiating the
        // positions gives sum y . dx/dalpha = C . e_j for j = 1 and j = 3.
        let (_, y, x) = sample_xy();
        let mut c = Vector3::zeros();
        for (xj, yj) in x.iter().zip(&y) {
            c += xj.cross(yj);
        }
        let h = 1e-5;
        for (axis, cj) in [(Vector3::x_axis(), c.x), (Vector3::z_axis(), c.z)] {
            for alpha in [0.0, 0.6, -1.3] {
                let rp = Rotation3::from_axis_angle(&axis, alpha + h);
                let rm = Rotation3::from_axis_angle(&axis, alpha - h);
                let r0 = Rotation3::from_axis_angle(&axis, alpha);
                let mut pairing = 0.0;
                for (xj, yj) in x.iter().zip(&y) {
                    let dx = (rp * xj - rm * xj) / (2.0 * h);
                    pairing += (r0 * yj).dot(&dx);
                }
                assert_relative_eq!(pairing, cj, epsilon = 1e-8, max_relative = 1e-8);
            }
        }
    }
}
