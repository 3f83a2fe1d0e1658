use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Masses of the n+1 bodies together with the cumulative and reduced masses
/// that every chart in the chain needs.
///
/// Indexing follows the classical convention: bodies are numbered 1..=n+1,
/// `partial(i)` is the mass of the first i bodies (so `partial(0) == 0`), and
/// `mu(i)` for i in 1..=n is the reduced mass of body i+1 against the first i
/// bodies.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MassSystem {
    masses: Vec<f64>,
    partial: Vec<f64>,
    reduced: Vec<f64>,
}

impl MassSystem {
    pub fn new(masses: Vec<f64>) -> Result<Self> {
        if masses.len() < 2 {
            return Err(Error::InvalidMasses(format!(
                "need at least two bodies, got {}",
                masses.len()
            )));
        }
        if let Some(bad) = masses.iter().find(|m| !m.is_finite() || **m <= 0.0) {
            return Err(Error::InvalidMasses(format!(
                "masses must be finite and positive, got {bad}"
            )));
        }
        let mut partial = Vec::with_capacity(masses.len() + 1);
        partial.push(0.0);
        let mut acc = 0.0;
        for &m in &masses {
            acc += m;
            partial.push(acc);
        }
        let reduced = (1..masses.len())
            .map(|i| masses[i] * partial[i] / partial[i + 1])
            .collect();
        Ok(MassSystem {
            masses,
            partial,
            reduced,
        })
    }

    /// Number of bodies, n+1.
    pub fn n_bodies(&self) -> usize {
        self.masses.len()
    }

    /// Number of relative coordinates, n.
    pub fn n_rel(&self) -> usize {
        self.masses.len() - 1
    }

    /// Dimension of the shape sphere chart, 3n - 4.
    pub fn shape_dim(&self) -> usize {
        3 * self.n_rel() - 4
    }

    /// Mass of body i, 1-based (i in 1..=n+1).
    pub fn mass(&self, i: usize) -> f64 {
        self.masses[i - 1]
    }

    pub fn masses(&self) -> &[f64] {
        &self.masses
    }

    /// Cumulative mass of the first i bodies; `partial(0)` is 0 and
    /// `partial(n_bodies())` is the total mass.
    pub fn partial(&self, i: usize) -> f64 {
        self.partial[i]
    }

    pub fn total(&self) -> f64 {
        *self.partial.last().unwrap()
    }

    /// Reduced mass mu_i = m_(i+1) M_i / M_(i+1), 1-based (i in 1..=n).
    pub fn mu(&self, i: usize) -> f64 {
        self.reduced[i - 1]
    }

    pub fn reduced(&self) -> &[f64] {
        &self.reduced
    }
}
