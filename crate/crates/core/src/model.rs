//! Physical system definition: inhomogeneities `ε_i` and the field `B`.

use crate::{GaudinError, Result, C64};

/// Default minimum separation between two `ε_i`.
pub const DEFAULT_GAP_TOL: f64 = 1e-9;

/// An immutable, validated Gaudin magnet: `n` spins with pairwise distinct
/// real `ε_i` in a real field `(B_x, B_y, B_z)`.
#[derive(Debug, Clone, PartialEq)]
pub struct SpinSystem {
    epsilons: Vec<f64>,
    field: [f64; 3],
    gap_tol: f64,
}

/// Field constants derived from `B`, shared by every formula.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FieldParams {
    /// `B₀⁺ = B_x + i B_y`
    pub b_plus: C64,
    /// `B₀⁻ = B_x − i B_y`
    pub b_minus: C64,
    /// `|B_⊥|² = B_x² + B_y²`
    pub b_perp_sq: f64,
    /// `|B|`
    pub b_mag: f64,
    pub b_z: f64,
}

/// Builds a system with the default gap tolerance.
pub fn build_system(epsilons: &[f64], field: [f64; 3]) -> Result<SpinSystem> {
    SpinSystem::with_gap_tol(epsilons, field, DEFAULT_GAP_TOL)
}

impl SpinSystem {
    pub fn with_gap_tol(epsilons: &[f64], field: [f64; 3], gap_tol: f64) -> Result<Self> {
        if epsilons.is_empty() {
            return Err(GaudinError::EmptySystem);
        }
        if epsilons.iter().any(|e| !e.is_finite()) {
            return Err(GaudinError::NonFinite("epsilons"));
        }
        if field.iter().any(|b| !b.is_finite()) {
            return Err(GaudinError::NonFinite("field"));
        }
        if !(gap_tol.is_finite() && gap_tol >= 0.0) {
            return Err(GaudinError::NonFinite("gap_tol"));
        }
        for i in 0..epsilons.len() {
            for j in (i + 1)..epsilons.len() {
                if (epsilons[i] - epsilons[j]).abs() <= gap_tol {
                    return Err(GaudinError::DuplicateEpsilon { i, j, gap_tol });
                }
            }
        }
        Ok(SpinSystem {
            epsilons: epsilons.to_vec(),
            field,
            gap_tol,
        })
    }

    /// Number of spins.
    pub fn n(&self) -> usize {
        self.epsilons.len()
    }

    /// Fock-space dimension `2^n`.
    pub fn dim(&self) -> usize {
        1usize << self.n()
    }

    pub fn epsilons(&self) -> &[f64] {
        &self.epsilons
    }

    pub fn field(&self) -> [f64; 3] {
        self.field
    }

    pub fn gap_tol(&self) -> f64 {
        self.gap_tol
    }

    /// Same spins in a different field.
    pub fn with_field(&self, field: [f64; 3]) -> Result<Self> {
        SpinSystem::with_gap_tol(&self.epsilons, field, self.gap_tol)
    }

    pub fn field_params(&self) -> FieldParams {
        field_params(self)
    }

    /// `Σ_{j≠i} 1/(ε_i − ε_j)`
    pub fn coupling_sum(&self, i: usize) -> f64 {
        let ei = self.epsilons[i];
        self.epsilons
            .iter()
            .enumerate()
            .filter(|&(j, _)| j != i)
            .map(|(_, &ej)| 1.0 / (ei - ej))
            .sum()
    }

    /// Largest minus smallest `ε`.
    pub fn spread(&self) -> f64 {
        let (lo, hi) = self
            .epsilons
            .iter()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &e| {
                (lo.min(e), hi.max(e))
            });
        hi - lo
    }

    pub(crate) fn check_site(&self, site: usize) -> Result<()> {
        if site < self.n() {
            Ok(())
        } else {
            Err(GaudinError::SiteOutOfRange { site, n: self.n() })
        }
    }

    /// Rejects a spectral parameter sitting on top of some `ε_i`.
    pub(crate) fn check_separated(&self, u: C64) -> Result<()> {
        for (site, &e) in self.epsilons.iter().enumerate() {
            if (u - e).norm() <= self.gap_tol {
                return Err(GaudinError::SpectralCollision {
                    u,
                    site,
                    gap_tol: self.gap_tol,
                });
            }
        }
        Ok(())
    }

    pub(crate) fn check_len<T>(&self, values: &[T]) -> Result<()> {
        if values.len() == self.n() {
            Ok(())
        } else {
            Err(GaudinError::LengthMismatch {
                expected: self.n(),
                got: values.len(),
            })
        }
    }
}

pub fn field_params(system: &SpinSystem) -> FieldParams {
    let [bx, by, bz] = system.field;
    let b_perp_sq = bx * bx + by * by;
    FieldParams {
        b_plus: C64::new(bx, by),
        b_minus: C64::new(bx, -by),
        b_perp_sq,
        b_mag: (b_perp_sq + bz * bz).sqrt(),
        b_z: bz,
    }
}
