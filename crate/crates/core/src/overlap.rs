//! Scalar products and canonical-basis projections as determinants, with
//! brute-force Fock-space counterparts.
//!
//! The scalar product between two sets of `N` roots is
//!
//! ```text
//! ⟨{μ}|{λ}⟩ = (B₀⁺)^N Det J,
//! J_aa = Σ_{b≠a} 1/(ε_a − ε_b) − Λ^λ_a − Λ^μ_a,    J_ab = 1/(ε_a − ε_b),
//! ```
//!
//! where the bra is the *dual* state `⟨↑…↑| Π_p S⁺(μ_p)`, built from the
//! same raising operators with unconjugated `μ`. For complex roots this is
//! not the Hermitian adjoint of `|{μ}⟩`. Both formulas hold off-shell.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};
use twofloat::TwoFloat;

use crate::fock::{self, up_set_mask};
use crate::linalg;
use crate::roots::RootSet;
use crate::{GaudinError, Result, SpinSystem, C64};

/// A complex number stored as `phase · exp(ln_abs)` alongside its plain
/// value, which may overflow to infinity or underflow to zero.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScaledValue {
    pub value: C64,
    /// `value / |value|`, or zero for a vanishing value.
    pub phase: C64,
    /// `ln |value|`.
    pub ln_abs: f64,
}

impl ScaledValue {
    pub fn from_parts(phase: C64, ln_abs: f64) -> Self {
        ScaledValue {
            value: phase * ln_abs.exp(),
            phase,
            ln_abs,
        }
    }

    pub fn from_value(value: C64) -> Self {
        let abs = value.norm();
        if abs == 0.0 {
            ScaledValue {
                value,
                phase: C64::new(0.0, 0.0),
                ln_abs: f64::NEG_INFINITY,
            }
        } else {
            ScaledValue {
                value,
                phase: value / abs,
                ln_abs: abs.ln(),
            }
        }
    }

    fn times_power(self, base: C64, k: usize) -> Self {
        if k == 0 {
            return self;
        }
        let abs = base.norm();
        if abs == 0.0 {
            return ScaledValue::from_value(C64::new(0.0, 0.0));
        }
        let phase = (base / abs).powu(k as u32);
        ScaledValue::from_parts(self.phase * phase, self.ln_abs + k as f64 * abs.ln())
    }

    /// `|a − b| / max(|a|, |b|)` evaluated in log scale.
    pub fn relative_difference(&self, other: &ScaledValue) -> f64 {
        let top = self.ln_abs.max(other.ln_abs);
        if top == f64::NEG_INFINITY {
            return 0.0;
        }
        let a = self.phase * (self.ln_abs - top).exp();
        let b = other.phase * (other.ln_abs - top).exp();
        (a - b).norm()
    }
}

/// Matrix of the overlap or projection determinant.
#[derive(Debug, Clone, PartialEq)]
pub struct OverlapMatrix {
    /// Entries rounded to double precision.
    pub entries: DMatrix<C64>,
    /// The same entries in double-double, row-major. Nearby `ε` make the
    /// entries large and the determinant cancel, so it is taken from these.
    exact: Vec<linalg::ComplexDd>,
}

impl OverlapMatrix {
    /// Builds `J` on the `sites`, with `diagonal_shift[a]` subtracted from
    /// `Σ_{b≠a} 1/(ε_a − ε_b)` on the diagonal.
    fn build(eps: &[f64], sites: &[usize], diagonal_shift: impl Fn(usize) -> linalg::ComplexDd) -> Self {
        let m = sites.len();
        let inverse = |a: usize, b: usize| TwoFloat::from(1.0) / TwoFloat::new_sub(eps[sites[a]], eps[sites[b]]);
        let mut exact = Vec::with_capacity(m * m);
        for a in 0..m {
            for b in 0..m {
                exact.push(if a == b {
                    let s = (0..m).filter(|&c| c != a).fold(TwoFloat::from(0.0), |acc, c| acc + inverse(a, c));
                    linalg::ComplexDd::new(s, TwoFloat::from(0.0)) - diagonal_shift(a)
                } else {
                    linalg::ComplexDd::new(inverse(a, b), TwoFloat::from(0.0))
                });
            }
        }
        let entries = DMatrix::from_fn(m, m, |a, b| linalg::round_dd(exact[a * m + b]));
        OverlapMatrix { entries, exact }
    }

    /// The scalar-product matrix of two `Λ` lists.
    pub fn scalar_product(system: &SpinSystem, lam_a: &[C64], lam_b: &[C64]) -> Result<Self> {
        system.check_len(lam_a)?;
        system.check_len(lam_b)?;
        let sites: Vec<usize> = (0..system.n()).collect();
        Ok(Self::build(system.epsilons(), &sites, |a| {
            linalg::ComplexDd::new(
                TwoFloat::new_add(lam_a[a].re, lam_b[a].re),
                TwoFloat::new_add(lam_a[a].im, lam_b[a].im),
            )
        }))
    }

    /// The projection matrix restricted to `up_set`.
    pub fn projection(system: &SpinSystem, lam: &[C64], up_set: &[usize]) -> Result<Self> {
        system.check_len(lam)?;
        up_set_mask(system.n(), up_set)?;
        Ok(Self::build(system.epsilons(), up_set, |a| {
            let l = lam[up_set[a]];
            linalg::ComplexDd::new(TwoFloat::from(l.re), TwoFloat::from(l.im))
        }))
    }

    pub fn size(&self) -> usize {
        self.entries.nrows()
    }

    pub fn log_det(&self) -> ScaledValue {
        let (phase, ln_abs) = linalg::log_det_dd(self.size(), self.exact.clone());
        ScaledValue::from_parts(phase, ln_abs)
    }
}

fn check_finite(values: &[C64], what: &'static str) -> Result<()> {
    if values.iter().all(|v| v.re.is_finite() && v.im.is_finite()) {
        Ok(())
    } else {
        Err(GaudinError::NonFinite(what))
    }
}

/// `⟨{μ}|{λ}⟩ = (B₀⁺)^N Det J` from the two `Λ` lists. Symmetric in its
/// arguments; uses the dual (unconjugated) bra.
pub fn determinant_overlap(system: &SpinSystem, lam_a: &[C64], lam_b: &[C64]) -> Result<ScaledValue> {
    let p = system.field_params();
    if p.b_perp_sq == 0.0 {
        return Err(GaudinError::ZeroInPlaneField);
    }
    check_finite(lam_a, "lambdas")?;
    check_finite(lam_b, "lambdas")?;
    let det = OverlapMatrix::scalar_product(system, lam_a, lam_b)?.log_det();
    Ok(det.times_power(p.b_plus, system.n()))
}

fn check_root_count(system: &SpinSystem, roots: &RootSet) -> Result<()> {
    if roots.len() != system.n() {
        return Err(GaudinError::LengthMismatch {
            expected: system.n(),
            got: roots.len(),
        });
    }
    Ok(())
}

/// All-up amplitude of `Π_{2N} S⁺(ν)|↓…↓⟩` with `ν = λ ∪ μ`, evaluated in
/// Fock space.
pub fn direct_overlap(system: &SpinSystem, roots_a: &RootSet, roots_b: &RootSet) -> Result<ScaledValue> {
    check_root_count(system, roots_a)?;
    check_root_count(system, roots_b)?;
    let params: Vec<C64> = roots_a.as_slice().iter().chain(roots_b.as_slice()).cloned().collect();
    let v = fock::raising_product(system, &params)?;
    Ok(scaled_amplitude(&v, system.dim() - 1))
}

fn scaled_amplitude(v: &fock::FockVector, mask: usize) -> ScaledValue {
    let stored = ScaledValue::from_value(v.amplitudes[mask]);
    if stored.ln_abs == f64::NEG_INFINITY {
        stored
    } else {
        ScaledValue::from_parts(stored.phase, stored.ln_abs + v.log_scale)
    }
}

/// `⟨↑_{i_1}…↑_{i_M}|{λ}⟩ = (B₀⁺)^{N−M} Det_M J` from the `Λ` variables
/// alone. `M = 0` gives `(B₀⁺)^N`.
pub fn canonical_projection(system: &SpinSystem, lam: &[C64], up_set: &[usize]) -> Result<ScaledValue> {
    check_finite(lam, "lambdas")?;
    let matrix = OverlapMatrix::projection(system, lam, up_set)?;
    let p = system.field_params();
    let flips = system.n() - up_set.len();
    if flips > 0 && p.b_perp_sq == 0.0 {
        return Err(GaudinError::ZeroInPlaneField);
    }
    Ok(matrix.log_det().times_power(p.b_plus, flips))
}

/// Amplitude of the `up_set` basis state in the Bethe vector built from
/// `roots`.
pub fn direct_projection(system: &SpinSystem, roots: &RootSet, up_set: &[usize]) -> Result<ScaledValue> {
    let mask = up_set_mask(system.n(), up_set)?;
    let v = fock::bethe_vector(system, roots.as_slice())?;
    Ok(scaled_amplitude(&v, mask))
}

/// `Σ_σ Π_a 1/(ν_{σ(a)} − ε_{site_a})` over injective maps `σ` from the
/// sites into the pool of parameters, times `(B₀⁺)^{pool − M}`: the
/// amplitude expanded operator by operator. Exponential cost.
pub fn permanent_expansion(system: &SpinSystem, pool: &[C64], sites: &[usize]) -> Result<C64> {
    up_set_mask(system.n(), sites)?;
    for &u in pool {
        system.check_separated(u)?;
    }
    if sites.len() > pool.len() {
        return Ok(C64::new(0.0, 0.0));
    }
    fn recurse(eps: &[f64], pool: &[C64], sites: &[usize], used: &mut [bool]) -> C64 {
        let Some((&site, rest)) = sites.split_first() else {
            return C64::new(1.0, 0.0);
        };
        let mut total = C64::new(0.0, 0.0);
        for p in 0..pool.len() {
            if !used[p] {
                used[p] = true;
                total += recurse(eps, pool, rest, used) / (pool[p] - eps[site]);
                used[p] = false;
            }
        }
        total
    }
    let sum = recurse(system.epsilons(), pool, sites, &mut vec![false; pool.len()]);
    Ok(sum * system.field_params().b_plus.powu((pool.len() - sites.len()) as u32))
}
