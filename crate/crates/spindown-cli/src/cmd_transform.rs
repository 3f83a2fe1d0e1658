//! transform: push an explicit barycentric state through the whole chart
//! chain, measure every round trip, and dump the state as seen by each
//! chart.

use std::path::Path;

use nalgebra::Vector3;
use spindown::jacobi;
use spindown::masses::MassSystem;
use spindown::mcgehee;
use spindown::nbody::CartesianState;
use spindown::regular::{self, AngleState};
use spindown::shape;
use spindown::so3;
use spindown::Floors;

use crate::output::{fmt_bool, fmt_f, write_atomic, Csv};
use crate::scenario::Scenario;
use crate::AppError;

fn amax_pairs(a: &[Vector3<f64>], b: &[Vector3<f64>]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y).amax())
        .fold(0.0, f64::max)
}

pub fn run(sc: &Scenario, out: &Path, tol: f64) -> Result<(), AppError> {
    let sect = sc
        .transform
        .as_ref()
        .ok_or_else(|| AppError::Schema("scenario: transform needs a [transform] section".into()))?;
    let floors = Floors::default();
    let ms = MassSystem::new(sc.system.masses.clone())?;
    let q: Vec<Vector3<f64>> = sect.positions.iter().map(|v| Vector3::from(*v)).collect();
    let p: Vec<Vector3<f64>> = sect.momenta.iter().map(|v| Vector3::from(*v)).collect();
    let s0 = CartesianState::new(q, p)?;

    // Walk the chain; any chart that refuses the state surfaces as a domain
    // error with the tripped floor in its message.
    let js = jacobi::to_jacobi(&ms, &s0)?;
    let back = jacobi::from_jacobi(&ms, &js)?;
    let r_translation = amax_pairs(&back.q, &s0.q).max(amax_pairs(&back.p, &s0.p));

    let rs = so3::reduce_jacobi(&ms, &js, &floors)?;
    let (y2, x2) = so3::reconstruct(&ms, &rs, &floors)?;
    let r_rotation = amax_pairs(&y2, &js.y).max(amax_pairs(&x2, &js.x));

    let ss = shape::shape_split(&ms, &rs.eta, &rs.xi, &floors)?;
    let (eta2, xi2) = shape::shape_merge(&ms, &ss, &floors)?;
    let r_shape = amax_pairs(&eta2.to_vectors(), &rs.eta.to_vectors())
        .max(amax_pairs(&xi2.to_vectors(), &rs.xi.to_vectors()));

    let ra = regular::regularize(&rs.angles, rs.p_phi, rs.p_theta, rs.p_psi, &floors)?;
    let (ang2, qf, qt, qp) = regular::unregularize(&ra, &floors)?;
    let r_angles = (ang2.phi - rs.angles.phi)
        .abs()
        .max((ang2.theta - rs.angles.theta).abs())
        .max((ang2.psi - rs.angles.psi).abs())
        .max((qf - rs.p_phi).abs())
        .max((qt - rs.p_theta).abs())
        .max((qp - rs.p_psi).abs());

    let bs = mcgehee::blow_up(&ss, AngleState::from_euler(&rs.angles), &floors)?;
    let (ss2, _w2) = mcgehee::blow_down(&bs, &floors)?;
    let r_rescale = (ss2.rho - ss.rho)
        .abs()
        .max((ss2.radial_mom - ss.radial_mom).abs())
        .max((&ss2.sigma - &ss.sigma).amax())
        .max((&ss2.shape_mom - &ss.shape_mom).amax());

    let frame_momenta = rs.p_phi.abs().max(rs.p_theta.abs()).max(rs.p_psi.abs());
    let reg_momenta = ra.p_u.abs().max(ra.p_v.abs()).max(ra.p_alpha.abs());
    let momentum_tol = 1e-12;

    let mut csv = Csv::new(vec!["quantity", "value", "tolerance", "within_tolerance"]);
    let mut add = |name: &str, value: f64, tolerance: f64| {
        csv.push(vec![
            name.to_string(),
            fmt_f(value),
            fmt_f(tolerance),
            fmt_bool(value < tolerance),
        ]);
    };
    add("round_trip_translation", r_translation, tol);
    add("round_trip_rotation", r_rotation, tol);
    add("round_trip_shape_split", r_shape, tol);
    add("round_trip_angle_regularization", r_angles, tol);
    add("round_trip_rescaling", r_rescale, tol);
    add("frame_momenta_sup", frame_momenta, momentum_tol);
    add("regularized_momenta_sup", reg_momenta, momentum_tol);

    let table = csv.render();
    write_atomic(out, "transform.csv", &table)?;

    let dump = serde_json::json!({
        "cartesian": s0,
        "translation_reduced": js,
        "rotation_reduced": rs,
        "shape_split": ss,
        "regularized_angles": ra,
        "rescaled": bs,
    });
    let json = serde_json::to_string_pretty(&dump)
        .map_err(|e| AppError::Schema(format!("serialization: {e}")))?;
    write_atomic(out, "transform.json", &json)?;

    print!("{table}");
    println!("wrote transform.csv and transform.json to {}", out.display());
    Ok(())
}
