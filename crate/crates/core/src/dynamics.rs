//! Quenches from canonical product states under `H = Σ_k α_k R_k`.
//!
//! The initial state `|↑_{i_1}…↑_{i_M}⟩` is expanded on the Bethe
//! eigenstates, each built in Fock space and normalized numerically, and an
//! observable is evolved as
//!
//! ```text
//! O(t) = Σ_{n,m} c_n* c_m e^{i(E_n − E_m)t} ⟨n|O|m⟩,    c_n = ⟨n|ψ₀⟩.
//! ```
//!
//! [`Propagator`] applies `e^{−iHt}` through exact diagonalization and serves
//! as the reference.

use std::fmt;
use std::str::FromStr;

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::bethe::{self, BetheSolution, Frame, Label};
use crate::fock::{self, FockVector, LocalKind, SparseOperator};
use crate::overlap;
use crate::roots;
use crate::{GaudinError, Result, SpinSystem, C64};

/// Allowed deviation of `Σ|c_n|²` from one.
pub const COMPLETENESS_TOL: f64 = 1e-6;
/// Largest imaginary part tolerated in an expectation value.
pub const IMAGINARY_TOL: f64 = 1e-10;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ObservableKind {
    Sz,
    Sx,
    Sy,
}

/// A single-site spin component, written `sz:3`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Observable {
    pub kind: ObservableKind,
    pub site: usize,
}

impl Observable {
    pub fn operator(&self, system: &SpinSystem) -> Result<SparseOperator> {
        let kind = match self.kind {
            ObservableKind::Sz => LocalKind::Z,
            ObservableKind::Sx => LocalKind::X,
            ObservableKind::Sy => LocalKind::Y,
        };
        fock::local_operator(system, kind, self.site)
    }
}

impl FromStr for Observable {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        let (kind, site) = s.split_once(':').ok_or_else(|| format!("expected KIND:SITE, got {s:?}"))?;
        let kind = match kind {
            "sz" => ObservableKind::Sz,
            "sx" => ObservableKind::Sx,
            "sy" => ObservableKind::Sy,
            other => return Err(format!("unknown observable {other:?} (sz, sx or sy)")),
        };
        let site = site.parse().map_err(|_| format!("bad site index {site:?}"))?;
        Ok(Observable { kind, site })
    }
}

impl fmt::Display for Observable {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let kind = match self.kind {
            ObservableKind::Sz => "sz",
            ObservableKind::Sx => "sx",
            ObservableKind::Sy => "sy",
        };
        write!(f, "{kind}:{}", self.site)
    }
}

/// `steps` equally spaced times from `t0` to `t1` inclusive; a single step
/// is just `t0`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TimeGrid {
    pub t0: f64,
    pub t1: f64,
    pub steps: usize,
}

impl TimeGrid {
    pub fn points(&self) -> Vec<f64> {
        if self.steps == 1 {
            return vec![self.t0];
        }
        let dt = (self.t1 - self.t0) / (self.steps - 1) as f64;
        (0..self.steps)
            .map(|k| if k + 1 == self.steps { self.t1 } else { self.t0 + k as f64 * dt })
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuenchSpec {
    pub initial_up_set: Vec<usize>,
    pub weights: Vec<f64>,
    pub observable: Observable,
    pub times: TimeGrid,
}

impl QuenchSpec {
    pub fn validate(&self, system: &SpinSystem) -> Result<()> {
        fock::up_set_mask(system.n(), &self.initial_up_set)?;
        system.check_len(&self.weights)?;
        system.check_site(self.observable.site)?;
        if self.times.steps == 0 {
            return Err(GaudinError::LengthMismatch { expected: 1, got: 0 });
        }
        if !(self.times.t0.is_finite() && self.times.t1.is_finite()) || self.weights.iter().any(|w| !w.is_finite()) {
            return Err(GaudinError::NonFinite("quench parameters"));
        }
        Ok(())
    }
}

/// One eigenstate in the expansion of the initial state.
#[derive(Debug, Clone)]
pub struct ExpansionTerm {
    pub label: Label,
    pub energy: f64,
    /// `⟨n|ψ₀⟩` with `|n⟩` normalized.
    pub coefficient: C64,
    /// `ln ‖Π S⁺(λ_p)|↓…↓⟩‖` before normalization.
    pub ln_norm: f64,
    /// Unit-norm eigenvector.
    pub vector: FockVector,
}

#[derive(Debug, Clone)]
pub struct EigenExpansion {
    /// Sorted by label.
    pub terms: Vec<ExpansionTerm>,
    /// `Σ|c_n|² − 1`.
    pub weight_deviation: f64,
    /// Largest relative mismatch between the Bethe-vector amplitude and the
    /// determinant projection onto the initial state.
    pub projection_mismatch: f64,
}

impl EigenExpansion {
    pub fn total_weight(&self) -> f64 {
        self.terms.iter().map(|t| t.coefficient.norm_sqr()).sum()
    }
}

/// Expands `|↑_{i_1}…↑_{i_M}⟩` on the common-frame eigenstates in
/// `solutions`; energies use the charge weights `weights`.
pub fn eigen_expand(
    system: &SpinSystem,
    initial_up_set: &[usize],
    solutions: &[BetheSolution],
    weights: &[f64],
) -> Result<EigenExpansion> {
    if system.field_params().b_perp_sq == 0.0 {
        return Err(GaudinError::ZeroInPlaneField);
    }
    system.check_len(weights)?;
    let mask = fock::up_set_mask(system.n(), initial_up_set)?;
    if solutions.len() != system.dim() {
        return Err(GaudinError::LengthMismatch {
            expected: system.dim(),
            got: solutions.len(),
        });
    }
    if let Some(bad) = solutions.iter().find(|s| s.frame != Frame::Common) {
        log::debug!("solution {} is in the rotated frame", bad.label);
        return Err(GaudinError::WrongFrame { expected: "common" });
    }

    let built: Vec<(ExpansionTerm, f64)> = solutions
        .par_iter()
        .map(|sol| {
            let lam: Vec<C64> = sol.lambdas.iter().map(|&l| C64::new(l, 0.0)).collect();
            let roots = roots::roots_from_lambdas(system, &lam)?;
            let raw = fock::bethe_vector(system, roots.as_slice())?;
            let projected = overlap::canonical_projection(system, &lam, initial_up_set)?;
            let amplitude = overlap::ScaledValue::from_parts(
                if raw.amplitudes[mask] == C64::new(0.0, 0.0) {
                    C64::new(0.0, 0.0)
                } else {
                    raw.amplitudes[mask] / raw.amplitudes[mask].norm()
                },
                raw.amplitudes[mask].norm().ln() + raw.log_scale,
            );
            let mismatch = if projected.ln_abs == f64::NEG_INFINITY && amplitude.ln_abs == f64::NEG_INFINITY {
                0.0
            } else {
                // relative to the state's norm: tiny components are not held
                // to a relative standard
                let top = projected.ln_abs.max(amplitude.ln_abs);
                projected.relative_difference(&amplitude) * (top - raw.ln_norm()).exp()
            };
            let vector = raw.normalized();
            let charges = bethe::charge_eigenvalues(system, sol)?;
            Ok((
                ExpansionTerm {
                    label: sol.label,
                    energy: bethe::energy(&charges, weights),
                    coefficient: vector.amplitudes[mask].conj(),
                    ln_norm: raw.ln_norm(),
                    vector,
                },
                mismatch,
            ))
        })
        .collect::<Result<_>>()?;

    let projection_mismatch = built.iter().map(|b| b.1).fold(0.0, f64::max);
    let mut terms: Vec<ExpansionTerm> = built.into_iter().map(|b| b.0).collect();
    terms.sort_by_key(|t| t.label);
    let weight_deviation = terms.iter().map(|t| t.coefficient.norm_sqr()).sum::<f64>() - 1.0;
    if !(weight_deviation.abs() <= COMPLETENESS_TOL) {
        return Err(GaudinError::IncompleteBasis {
            deviation: weight_deviation,
        });
    }
    Ok(EigenExpansion {
        terms,
        weight_deviation,
        projection_mismatch,
    })
}

/// `⟨n|O|m⟩` over the expansion's eigenvectors.
fn eigenbasis_matrix(expansion: &EigenExpansion, op: &SparseOperator) -> DMatrix<C64> {
    let applied: Vec<Vec<C64>> = expansion.terms.iter().map(|m| op.apply(&m.vector.amplitudes)).collect();
    let k = expansion.terms.len();
    DMatrix::from_fn(k, k, |n, m| {
        expansion.terms[n]
            .vector
            .amplitudes
            .iter()
            .zip(&applied[m])
            .map(|(a, b)| a.conj() * b)
            .sum()
    })
}

fn real_expectation(value: C64, t: f64) -> Result<f64> {
    if value.im.abs() > IMAGINARY_TOL * value.re.abs().max(1.0) {
        return Err(GaudinError::ImaginaryExpectation { t, imag: value.im });
    }
    Ok(value.re)
}

/// `⟨ψ(t)|op|ψ(t)⟩` on the time grid, through the eigenbasis expansion.
pub fn evolve_operator(expansion: &EigenExpansion, op: &SparseOperator, times: &TimeGrid) -> Result<Vec<f64>> {
    if !op.is_hermitian() {
        return Err(GaudinError::NonHermitianObservable);
    }
    let matrix = eigenbasis_matrix(expansion, op);
    times
        .points()
        .par_iter()
        .map(|&t| {
            let d = DVector::from_iterator(
                expansion.terms.len(),
                expansion
                    .terms
                    .iter()
                    .map(|term| term.coefficient * C64::from_polar(1.0, -term.energy * t)),
            );
            real_expectation(d.dotc(&(&matrix * &d)), t)
        })
        .collect()
}

/// The observable of `spec` along its time grid.
pub fn evolve_observable(system: &SpinSystem, spec: &QuenchSpec, expansion: &EigenExpansion) -> Result<Vec<f64>> {
    spec.validate(system)?;
    evolve_operator(expansion, &spec.observable.operator(system)?, &spec.times)
}

/// `e^{−iHt}` from the exact spectrum of `H = Σ_k α_k R_k`.
#[derive(Debug, Clone)]
pub struct Propagator {
    energies: Vec<f64>,
    vectors: DMatrix<C64>,
}

impl Propagator {
    pub fn new(system: &SpinSystem, weights: &[f64]) -> Result<Self> {
        let h = fock::weighted_hamiltonian(system, weights)?;
        let eig = nalgebra::SymmetricEigen::try_new(h.to_dense(), f64::EPSILON, 0)
            .ok_or_else(|| GaudinError::Eigensolver("Hermitian eigensolver did not converge".into()))?;
        Ok(Propagator {
            energies: eig.eigenvalues.iter().cloned().collect(),
            vectors: eig.eigenvectors,
        })
    }

    pub fn propagate(&self, initial: &FockVector, t: f64) -> FockVector {
        let psi = DVector::from_column_slice(&initial.amplitudes);
        let mut coeffs = self.vectors.ad_mul(&psi);
        for (c, e) in coeffs.iter_mut().zip(&self.energies) {
            *c *= C64::from_polar(1.0, -e * t);
        }
        let out = &self.vectors * coeffs;
        FockVector {
            amplitudes: out.iter().cloned().collect(),
            log_scale: initial.log_scale,
        }
    }
}

/// `e^{−iHt}|ψ⟩` by exact diagonalization.
pub fn direct_propagate(system: &SpinSystem, weights: &[f64], initial: &FockVector, t: f64) -> Result<FockVector> {
    if initial.dim() != system.dim() {
        return Err(GaudinError::DimensionMismatch(system.dim(), initial.dim()));
    }
    Ok(Propagator::new(system, weights)?.propagate(initial, t))
}

/// The observable of `spec` computed by propagating the initial state
/// directly.
pub fn direct_series(system: &SpinSystem, spec: &QuenchSpec) -> Result<Vec<f64>> {
    spec.validate(system)?;
    let op = spec.observable.operator(system)?;
    let propagator = Propagator::new(system, &spec.weights)?;
    let initial = FockVector::from_up_set(system.n(), &spec.initial_up_set)?;
    spec.times
        .points()
        .par_iter()
        .map(|&t| {
            let psi = propagator.propagate(&initial, t);
            real_expectation(op.matrix_element(&psi.amplitudes, &psi.amplitudes), t)
        })
        .collect()
}
