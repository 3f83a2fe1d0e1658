//! Regularized frame-angle chart. The two tilt angles (theta, psi) suffer a
//! coordinate degeneracy where the frame axis meets the vertical; the chart
//! (u, v, alpha) = (sin(theta) cos(psi), sin(theta) sin(psi), phi + psi)
//! removes it. Two copies are needed, one per sign of cos(theta); the lower
//! copy stores the coordinates of the mirrored frame (theta -> pi - theta,
//! psi -> -psi) so both share one set of formulas.
//!
//! The chart also carries the frame-rotation field: the rates of
//! (u, v, cos(theta), alpha) induced by the shape motion. The rates are
//! linear in the shape momenta; with momenta scaled for the blown-up time
//! they are the blown-up-time rates, and they stay finite at total collision.

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::masses::MassSystem;
use crate::shape::{self, Layout};
use crate::so3::EulerTriple;
use crate::Floors;

/// Which sign of cos(theta) the chart covers.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ChartTag {
    /// cos(theta) >= 0.
    Upper,
    /// cos(theta) < 0; coordinates stored for the mirrored frame.
    Lower,
}

/// Point and momenta in the regularized angle chart.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegularizedAngles {
    pub u: f64,
    pub v: f64,
    pub alpha: f64,
    pub chart: ChartTag,
    pub p_u: f64,
    pub p_v: f64,
    pub p_alpha: f64,
}

/// The frame-angle part of an integration state: a point (u, v, c) on the
/// unit sphere (c = cos(theta), signed) plus the combined spin angle alpha.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AngleState {
    pub u: f64,
    pub v: f64,
    pub c: f64,
    pub alpha: f64,
}

/// Rates of the angle state.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AngleRates {
    pub du: f64,
    pub dv: f64,
    pub dc: f64,
    pub dalpha: f64,
}

impl AngleState {
    /// Embed Euler angles into the signed-c chart with alpha = phi + psi.
    pub fn from_euler(angles: &EulerTriple) -> AngleState {
        let s = angles.theta.sin();
        AngleState {
            u: s * angles.psi.cos(),
            v: s * angles.psi.sin(),
            c: angles.theta.cos(),
            alpha: angles.phi + angles.psi,
        }
    }

    /// Recover Euler angles; fails at the vertical axis where psi is
    /// undefined.
    pub fn to_euler(&self, floors: &Floors) -> Result<EulerTriple> {
        let s = self.u.hypot(self.v);
        if s < floors.pole {
            return Err(Error::ChartOrigin);
        }
        let psi = self.v.atan2(self.u);
        Ok(EulerTriple {
            phi: self.alpha - psi,
            theta: s.atan2(self.c),
            psi,
        })
    }

    /// How far the point has drifted off the unit sphere.
    pub fn sphere_defect(&self) -> f64 {
        (self.u * self.u + self.v * self.v + self.c * self.c - 1.0).abs()
    }
}

/// Transform Euler angles and their momenta into the regularized chart. The
/// chart copy is picked by the sign of cos(theta); exactly on the equator the
/// momentum transform is singular and the call fails with a seam error.
pub fn regularize(
    angles: &EulerTriple,
    p_phi: f64,
    p_theta: f64,
    p_psi: f64,
    floors: &Floors,
) -> Result<RegularizedAngles> {
    let s = angles.theta.sin();
    if s.abs() < floors.gimbal {
        return Err(Error::GimbalDegenerate {
            sin_theta: s,
            floor: floors.gimbal,
        });
    }
    let c = angles.theta.cos();
    if c.abs() < floors.pole {
        return Err(Error::ChartSeam { s_sq: s * s });
    }

    // Mirror into the upper hemisphere if needed.
    let (chart, theta, psi, phi, pp, pt, ps) = if c >= 0.0 {
        (ChartTag::Upper, angles.theta, angles.psi, angles.phi, p_phi, p_theta, p_psi)
    } else {
        (
            ChartTag::Lower,
            std::f64::consts::PI - angles.theta,
            -angles.psi,
            angles.phi,
            p_phi,
            -p_theta,
            -p_psi,
        )
    };
    let s = theta.sin();
    let c = theta.cos();

    let u = s * psi.cos();
    let v = s * psi.sin();
    let alpha = phi + psi;
    let a = pt * s / c;
    let b = ps - pp;
    let s_sq = s * s;
    Ok(RegularizedAngles {
        u,
        v,
        alpha,
        chart,
        p_u: (a * u - b * v) / s_sq,
        p_v: (a * v + b * u) / s_sq,
        p_alpha: pp,
    })
}

/// Inverse of `regularize`: Euler angles and momenta (p_phi, p_theta, p_psi)
/// from the chart point. Fails at the chart origin (u = v = 0) and on the
/// equatorial seam u^2 + v^2 = 1.
pub fn unregularize(ra: &RegularizedAngles, floors: &Floors) -> Result<(EulerTriple, f64, f64, f64)> {
    let s_sq = ra.u * ra.u + ra.v * ra.v;
    let s = s_sq.sqrt();
    if s < floors.pole {
        return Err(Error::ChartOrigin);
    }
    if s_sq >= 1.0 - floors.pole {
        return Err(Error::ChartSeam { s_sq });
    }
    let c = (1.0 - s_sq).sqrt();

    let psi = ra.v.atan2(ra.u);
    let phi = ra.alpha - psi;
    let theta = s.atan2(c);
    let p_phi = ra.p_alpha;
    let p_theta = (ra.p_u * ra.u + ra.p_v * ra.v) * c / s;
    let p_psi = -ra.p_u * ra.v + ra.p_v * ra.u + ra.p_alpha;

    match ra.chart {
        ChartTag::Upper => Ok((EulerTriple { phi, theta, psi }, p_phi, p_theta, p_psi)),
        ChartTag::Lower => Ok((
            EulerTriple {
                phi,
                theta: std::f64::consts::PI - theta,
                psi: -psi,
            },
            p_phi,
            -p_theta,
            -p_psi,
        )),
    }
}

/// Rates of (u, v, c, alpha) induced by the shape motion, in the chart with
/// alpha = phi + psi. The rates are linear in the shape momenta: with
/// momenta scaled for the blown-up time this is the blown-up-time field;
/// with raw momenta, multiply by 1/rho^2 for physical-time rates.
///
/// Fails where the chart itself degenerates: at c = -1 (the pole the chart
/// does not cover) and at collinear shapes sigma_2 = 0 when n > 2.
pub fn w_field(
    ms: &MassSystem,
    shape_mom: &DVector<f64>,
    sigma: &DVector<f64>,
    w: &AngleState,
    floors: &Floors,
) -> Result<AngleRates> {
    let lay = Layout::of(ms);
    let n = lay.n;
    let nn_sq = {
        let v = shape::aug_norm(ms, sigma);
        v * v
    };
    let p = shape::cross_sums(&lay, sigma, shape_mom);
    let mu_n = ms.mu(n);

    let (term3, g) = if n > 2 {
        let (s2, s3) = shape::sigma_pair_components(ms, sigma);
        if s2.abs() < floors.division {
            return Err(Error::DivisionDegenerate {
                quantity: "sigma_2",
                value: s2,
                floor: floors.division,
            });
        }
        let q = s3 / s2;
        (p.z / (ms.mu(n - 1) * s2 * s2), p.y + q * p.z)
    } else {
        (0.0, 0.0)
    };
    let q = if n > 2 {
        let (s2, s3) = shape::sigma_pair_components(ms, sigma);
        s3 / s2
    } else {
        0.0
    };

    let one_plus_c = 1.0 + w.c;
    if one_plus_c < floors.pole {
        return Err(Error::DivisionDegenerate {
            quantity: "1 + c",
            value: one_plus_c,
            floor: floors.pole,
        });
    }

    let du = nn_sq * (w.v * term3 + (g / mu_n) * q * w.v - (p.x / mu_n) * w.c);
    let dv = nn_sq * (-w.u * term3 - (g / mu_n) * (q * w.u - w.c));
    let dc = -(nn_sq / mu_n) * (w.v * g - w.u * p.x);
    let dalpha = nn_sq
        * (-term3 - (g / mu_n) * (q + w.u / one_plus_c) - (p.x / mu_n) * w.v / one_plus_c);
    Ok(AngleRates { du, dv, dc, dalpha })
}

/// Rates of the raw Euler angles (phi, theta, psi) induced by the shape
/// motion, in the same time normalization as `w_field`. Defined only away
/// from the vertical; used to cross-check the regularized field.
pub fn euler_rates(
    ms: &MassSystem,
    shape_mom: &DVector<f64>,
    sigma: &DVector<f64>,
    angles: &EulerTriple,
    floors: &Floors,
) -> Result<(f64, f64, f64)> {
    let lay = Layout::of(ms);
    let n = lay.n;
    let s = angles.theta.sin();
    if s.abs() < floors.gimbal {
        return Err(Error::GimbalDegenerate {
            sin_theta: s,
            floor: floors.gimbal,
        });
    }
    let cot = angles.theta.cos() / s;
    let nn_sq = {
        let v = shape::aug_norm(ms, sigma);
        v * v
    };
    let p = shape::cross_sums(&lay, sigma, shape_mom);
    let mu_n = ms.mu(n);
    let (term3, g) = if n > 2 {
        let (s2, s3) = shape::sigma_pair_components(ms, sigma);
        if s2.abs() < floors.division {
            return Err(Error::DivisionDegenerate {
                quantity: "sigma_2",
                value: s2,
                floor: floors.division,
            });
        }
        let q = s3 / s2;
        (p.z / (ms.mu(n - 1) * s2 * s2), p.y + q * p.z)
    } else {
        (0.0, 0.0)
    };
    let q = if n > 2 {
        let (s2, s3) = shape::sigma_pair_components(ms, sigma);
        s3 / s2
    } else {
        0.0
    };

    let (sin_psi, cos_psi) = angles.psi.sin_cos();
    let dphi = -(nn_sq / mu_n) * ((cos_psi / s) * g + (sin_psi / s) * p.x);
    let dtheta = (nn_sq / mu_n) * (sin_psi * g - cos_psi * p.x);
    let dpsi = nn_sq * (-term3 + ((cot * cos_psi - q) * g + cot * sin_psi * p.x) / mu_n);
    Ok((dphi, dtheta, dpsi))
}

/// Magnitude of the frame-rotation rate: the sup of |du|, |dv|, |dalpha|
/// used by the spin diagnostics.
pub fn rotation_rate_sup(rates: &AngleRates) -> f64 {
    rates.du.abs().max(rates.dv.abs()).max(rates.dalpha.abs())
}

/// Matrix of the linear map from shape momenta to the three chart rates
/// (du, dv, dalpha): the field is momentum-linear, and the operator norm of
/// this matrix bounds the rotation rate over all unit momenta. Rows are
/// (du, dv, dalpha), columns the flat shape-momentum components.
pub fn w_field_matrix(
    ms: &MassSystem,
    sigma: &DVector<f64>,
    w: &AngleState,
    floors: &Floors,
) -> Result<nalgebra::DMatrix<f64>> {
    let dim = sigma.len();
    let mut m = nalgebra::DMatrix::zeros(3, dim);
    let mut probe = DVector::zeros(dim);
    for k in 0..dim {
        probe[k] = 1.0;
        let r = w_field(ms, &probe, sigma, w, floors)?;
        m[(0, k)] = r.du;
        m[(1, k)] = r.dv;
        m[(2, k)] = r.dalpha;
        probe[k] = 0.0;
    }
    Ok(m)
}
