//! Scenario files: a single TOML document with a versioned schema string,
//! the mass list, and one section per command. Unknown fields are rejected
//! so typos surface as schema errors naming the offending field.

use serde::{Deserialize, Serialize};

use crate::AppError;

pub const SCHEMA: &str = "spindown/1";

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    /// Must be exactly "spindown/1".
    pub schema: String,
    /// Default output directory; the --out flag takes precedence.
    pub out_dir: Option<String>,
    pub system: System,
    pub transform: Option<TransformSection>,
    pub find_cc: Option<FindCcSection>,
    pub spin: Option<SpinSection>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct System {
    pub masses: Vec<f64>,
}

/// An explicit barycentric state for the transform command.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TransformSection {
    pub positions: Vec<[f64; 3]>,
    pub momenta: Vec<[f64; 3]>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FindCcSection {
    /// Starting shape for the Newton search; required unless surveying.
    pub sigma_guess: Option<Vec<f64>>,
    /// Randomized multi-start survey clustering distinct rest shapes.
    #[serde(default)]
    pub survey: bool,
    #[serde(default = "default_n_samples")]
    pub n_samples: usize,
}

fn default_n_samples() -> usize {
    64
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SpinSection {
    pub sigma_guess: Vec<f64>,
    /// "homothetic" or "stable-seed".
    pub recipe: String,
    #[serde(default = "default_rho0")]
    pub rho0: f64,
    /// Radial momentum override for the homothetic recipe.
    pub radial0: Option<f64>,
    #[serde(default = "default_epsilon")]
    pub epsilon: f64,
    #[serde(default)]
    pub mode_index: usize,
    #[serde(default = "default_true")]
    pub quadratic_correction: bool,
    pub tau_max: Option<f64>,
    pub rtol: Option<f64>,
    pub atol: Option<f64>,
    pub eq_proximity: Option<f64>,
}

fn default_rho0() -> f64 {
    1.0
}
fn default_epsilon() -> f64 {
    3e-6
}
fn default_true() -> bool {
    true
}

pub fn parse(text: &str) -> Result<Scenario, AppError> {
    let sc: Scenario =
        toml::from_str(text).map_err(|e| AppError::Schema(format!("scenario: {e}")))?;
    if sc.schema != SCHEMA {
        return Err(AppError::Schema(format!(
            "scenario: schema is '{}', this tool reads '{SCHEMA}'",
            sc.schema
        )));
    }
    if sc.system.masses.len() < 3 {
        return Err(AppError::Schema(format!(
            "scenario: system.masses lists {} bodies, need at least 3",
            sc.system.masses.len()
        )));
    }
    if let Some(t) = &sc.transform {
        let n = sc.system.masses.len();
        if t.positions.len() != n || t.momenta.len() != n {
            return Err(AppError::Schema(format!(
                "scenario: transform lists {} positions and {} momenta for {n} masses",
                t.positions.len(),
                t.momenta.len()
            )));
        }
    }
    Ok(sc)
}

/// A generic rotation shared by the built-in states, chosen so the adapted
/// frame sits well inside the angle charts (away from the gimbal locus and
/// the equatorial seam).
fn generic_tilt() -> nalgebra::Rotation3<f64> {
    nalgebra::Rotation3::from_euler_angles(0.6, 0.4, -0.25)
}

fn tilted_resting_state(raw: &[[f64; 3]], masses: &[f64]) -> TransformSection {
    let tilt = generic_tilt();
    let mut q: Vec<nalgebra::Vector3<f64>> = raw
        .iter()
        .map(|v| tilt * nalgebra::Vector3::new(v[0], v[1], v[2]))
        .collect();
    let total: f64 = masses.iter().sum();
    let mut com = nalgebra::Vector3::zeros();
    for (qi, m) in q.iter().zip(masses) {
        com += *m * qi;
    }
    com /= total;
    for qi in q.iter_mut() {
        *qi -= com;
    }
    TransformSection {
        positions: q.iter().map(|v| [v.x, v.y, v.z]).collect(),
        momenta: vec![[0.0; 3]; raw.len()],
    }
}

/// Built-in scenarios. Each is a complete Scenario, so presets and files go
/// through the same validation and command paths.
pub fn preset(name: &str) -> Option<Scenario> {
    let equal3 = System {
        masses: vec![1.0, 1.0, 1.0],
    };
    let third = 1.0 / 3.0_f64.sqrt();
    let equilateral_guess = vec![-2.0 * third, 0.0];
    let base = Scenario {
        schema: SCHEMA.into(),
        out_dir: None,
        system: equal3,
        transform: None,
        find_cc: None,
        spin: None,
    };
    match name {
        // A resting equilateral triangle, tilted generically: every chart
        // applies, all round trips are exact to rounding, and the momentum
        // rows vanish identically.
        "equilateral" => Some(Scenario {
            transform: Some(tilted_resting_state(
                &[
                    [third, 0.0, 0.0],
                    [-third / 2.0, 0.5, 0.0],
                    [-third / 2.0, -0.5, 0.0],
                ],
                &[1.0, 1.0, 1.0],
            )),
            ..base
        }),
        // Three bodies on a line: the adapted frame does not exist, so the
        // rotation reduction must refuse with a domain error.
        "collinear" => Some(Scenario {
            transform: Some(tilted_resting_state(
                &[[-1.0, 0.0, 0.0], [0.2, 0.0, 0.0], [0.8, 0.0, 0.0]],
                &[1.0, 1.0, 1.0],
            )),
            ..base
        }),
        "homothetic" => Some(Scenario {
            spin: Some(SpinSection {
                sigma_guess: equilateral_guess,
                recipe: "homothetic".into(),
                rho0: 1.0,
                radial0: None,
                epsilon: default_epsilon(),
                mode_index: 0,
                quadratic_correction: true,
                tau_max: Some(3.0),
                rtol: Some(1e-11),
                atol: Some(1e-13),
                eq_proximity: None,
            }),
            ..base
        }),
        "stable-seed" => Some(Scenario {
            spin: Some(SpinSection {
                sigma_guess: equilateral_guess,
                recipe: "stable-seed".into(),
                rho0: default_rho0(),
                radial0: None,
                epsilon: 3e-6,
                mode_index: 0,
                quadratic_correction: true,
                tau_max: None,
                rtol: None,
                atol: None,
                eq_proximity: None,
            }),
            ..base
        }),
        "survey" => Some(Scenario {
            find_cc: Some(FindCcSection {
                sigma_guess: None,
                survey: true,
                n_samples: 64,
            }),
            ..base
        }),
        "tetrahedron" => Some(Scenario {
            system: System {
                masses: vec![1.0, 1.0, 1.0, 1.0],
            },
            find_cc: Some(FindCcSection {
                sigma_guess: Some(vec![1.25, 0.05, -0.02, -1.02, 0.03]),
                survey: false,
                n_samples: default_n_samples(),
            }),
            ..base
        }),
        _ => None,
    }
}
