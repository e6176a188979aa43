//! Conversion between the eigenvalue-based variables `Λ_i` and explicit
//! Bethe roots `λ_p`, and the root-level identities they satisfy.
//!
//! `Λ_i = Σ_p 1/(ε_i − λ_p)` is the logarithmic derivative `Q'(ε_i)/Q(ε_i)`
//! of `Q(z) = Π_p (z − λ_p)`. Inverting the map therefore amounts to finding
//! the monic degree-`n` polynomial with `Q'(ε_i) − Λ_i Q(ε_i) = 0` at every
//! site, a linear problem, and then its roots.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::linalg;
use crate::{GaudinError, Result, SpinSystem, C64};

/// Largest accepted condition number of the linear system for `Q`.
pub const MAX_CONVERSION_CONDITION: f64 = 1e12;
/// Relative tolerance of the `Λ → λ → Λ` round trip.
pub const ROUND_TRIP_TOL: f64 = 1e-8;
/// Roots closer than this are treated as coincident.
pub const ROOT_GAP_TOL: f64 = 1e-10;

/// A set of `n` Bethe roots.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RootSet {
    pub roots: Vec<C64>,
}

impl RootSet {
    pub fn new(roots: Vec<C64>) -> Self {
        RootSet { roots }
    }

    pub fn from_real(roots: &[f64]) -> Self {
        RootSet {
            roots: roots.iter().map(|&r| C64::new(r, 0.0)).collect(),
        }
    }

    pub fn as_slice(&self) -> &[C64] {
        &self.roots
    }

    pub fn len(&self) -> usize {
        self.roots.len()
    }

    pub fn is_empty(&self) -> bool {
        self.roots.is_empty()
    }

    /// Largest distance between a root and the conjugate it is paired with,
    /// pairing greedily by nearest available conjugate.
    pub fn conjugation_defect(&self) -> f64 {
        let mut free: Vec<C64> = self.roots.clone();
        let mut worst: f64 = 0.0;
        while let Some(r) = free.pop() {
            // a real root pairs with itself
            let self_dist = 2.0 * r.im.abs();
            let best = free
                .iter()
                .enumerate()
                .map(|(i, q)| (i, (q - r.conj()).norm()))
                .fold(None, |b: Option<(usize, f64)>, x| match b {
                    Some(bb) if bb.1 <= x.1 => Some(bb),
                    _ => Some(x),
                });
            match best {
                Some((i, d)) if d < self_dist => {
                    free.swap_remove(i);
                    worst = worst.max(d);
                }
                _ => worst = worst.max(self_dist),
            }
        }
        worst
    }

    pub fn is_conjugate_closed(&self, tol: f64) -> bool {
        self.conjugation_defect() < tol
    }
}

/// `Λ_i = Σ_p 1/(ε_i − λ_p)`
pub fn lambdas_from_roots(system: &SpinSystem, roots: &RootSet) -> Result<Vec<C64>> {
    for &r in roots.as_slice() {
        system.check_separated(r)?;
    }
    Ok(system
        .epsilons()
        .iter()
        .map(|&e| roots.as_slice().iter().map(|&l| 1.0 / (e - l)).sum())
        .collect())
}

/// Rebuilds the roots whose `Λ` variables are `lambdas`.
///
/// Two parametrizations of `Q` are tried (see `secular_candidate` and
/// `reciprocal_candidate`); the one that reproduces `lambdas` best is kept
/// and, if needed, refined by Newton on `λ ↦ Λ`. Fails with
/// `SingularConversion` when neither linear system is usable.
///
/// When every `Λ_i` is real, roots come out real or in conjugate pairs;
/// those with imaginary part below `1e-9 (1 + |Re|)` are snapped onto the
/// real axis.
pub fn roots_from_lambdas(system: &SpinSystem, lambdas: &[C64]) -> Result<RootSet> {
    system.check_len(lambdas)?;
    if lambdas.iter().any(|l| !(l.re.is_finite() && l.im.is_finite())) {
        return Err(GaudinError::NonFinite("lambdas"));
    }
    let candidates = [secular_candidate(system, lambdas), reciprocal_candidate(system, lambdas)];
    let condition = candidates.iter().map(|c| c.1).fold(f64::INFINITY, f64::min);
    let mut roots = candidates
        .into_iter()
        .filter_map(|c| c.0)
        .map(|r| (round_trip_error(system, &r, lambdas), r))
        .min_by(|a, b| a.0.total_cmp(&b.0))
        .map(|(_, r)| r)
        .ok_or(GaudinError::SingularConversion { condition })?;
    if lambdas.iter().all(|l| l.im == 0.0) {
        snap_real(&mut roots);
    }

    let mut error = round_trip_error(system, &roots, lambdas);
    if !(error < ROUND_TRIP_TOL * 1e-3) {
        if let Some(refined) = refine_roots(system, &roots, lambdas) {
            let refined_error = round_trip_error(system, &refined, lambdas);
            if refined_error < error {
                roots = refined;
                error = refined_error;
            }
        }
    }
    if !(error < ROUND_TRIP_TOL) {
        return Err(GaudinError::RoundTripFailure { error });
    }
    Ok(roots)
}

/// Relative max-norm mismatch between `lambdas` and the values recomputed
/// from `roots`.
pub fn round_trip_error(system: &SpinSystem, roots: &RootSet, lambdas: &[C64]) -> f64 {
    match lambdas_from_roots(system, roots) {
        Ok(back) => {
            let scale = lambdas.iter().map(|l| l.norm()).fold(1.0, f64::max);
            back.iter()
                .zip(lambdas)
                .map(|(a, b)| (a - b).norm())
                .fold(0.0, f64::max)
                / scale
        }
        Err(_) => f64::INFINITY,
    }
}

/// Roots from the partial-fraction form `Q(z)/ℓ(z) = 1 + Σ_i c_i/(z − ε_i)`,
/// `ℓ(z) = Π_i (z − ε_i)`: the conditions become
/// `(Λ_i − Σ_{j≠i} 1/(ε_i − ε_j)) c_i − Σ_{j≠i} c_j/(ε_i − ε_j) = 1` and the
/// roots are the eigenvalues of `diag(ε) − c 1ᵀ`. Accurate when the roots
/// stay near the `ε`.
fn secular_candidate(system: &SpinSystem, lambdas: &[C64]) -> (Option<RootSet>, f64) {
    let n = system.n();
    let eps = system.epsilons();
    let a = DMatrix::from_fn(n, n, |i, j| {
        if i == j {
            lambdas[i] - system.coupling_sum(i)
        } else {
            C64::new(-1.0 / (eps[i] - eps[j]), 0.0)
        }
    });
    let (c, condition) = linalg::solve_complex(a, &DVector::from_element(n, C64::new(1.0, 0.0)));
    if !(condition < MAX_CONVERSION_CONDITION) {
        return (None, condition);
    }
    let c: Vec<C64> = c.iter().cloned().collect();
    let roots = secular_roots(eps, &c).into_iter().map(|z| polish_root(eps, &c, z)).collect();
    (Some(RootSet::new(roots)), condition)
}

/// Roots from `P(u) = Π_p (1 − u/u_p)` with `u = (z − z₀)/ρ` centred and
/// scaled on the `ε`. Normalizing the constant term rather than the leading
/// one keeps roots that run off towards infinity (`1/u_p → 0`) accurate.
/// `P'(y_i) = ρ Λ_i P(y_i)` is linear in the coefficients, and `1/u_p` are
/// the eigenvalues of the companion matrix of the reversed polynomial.
fn reciprocal_candidate(system: &SpinSystem, lambdas: &[C64]) -> (Option<RootSet>, f64) {
    let n = system.n();
    let eps = system.epsilons();
    let z0 = eps.iter().sum::<f64>() / n as f64;
    let rho = eps.iter().map(|e| (e - z0).abs()).fold(0.0, f64::max).max(1.0);
    let y: Vec<f64> = eps.iter().map(|e| (e - z0) / rho).collect();
    // P(u) = 1 + Σ_{k=1..n} a_k u^k
    let mut a = DMatrix::from_fn(n, n, |i, k| {
        let k = k as i32 + 1;
        C64::new(k as f64 * y[i].powi(k - 1), 0.0) - rho * lambdas[i] * y[i].powi(k)
    });
    let mut b = DVector::from_fn(n, |i, _| rho * lambdas[i]);
    for i in 0..n {
        let s = a.row(i).iter().map(|x| x.norm()).fold(b[i].norm(), f64::max);
        if s > 0.0 {
            a.row_mut(i).scale_mut(1.0 / s);
            b[i] /= s;
        }
    }
    let mut col_scale = vec![1.0; n];
    for (k, scale) in col_scale.iter_mut().enumerate() {
        let s = a.column(k).iter().map(|x| x.norm()).fold(0.0, f64::max);
        if s == 0.0 {
            return (None, f64::INFINITY);
        }
        a.column_mut(k).scale_mut(1.0 / s);
        *scale = s;
    }
    let (x, condition) = linalg::solve_complex(a, &b);
    if !(condition < MAX_CONVERSION_CONDITION) {
        return (None, condition);
    }
    let coeffs: Vec<C64> = x.iter().zip(&col_scale).map(|(v, s)| v / s).collect();
    // x^n + a_1 x^{n−1} + … + a_n vanishes at x = 1/u_p
    let mut m = DMatrix::from_element(n, n, C64::new(0.0, 0.0));
    for (j, &c) in coeffs.iter().enumerate() {
        m[(0, j)] = -c;
    }
    for i in 1..n {
        m[(i, i - 1)] = C64::new(1.0, 0.0);
    }
    let Some(inverse) = m.schur().eigenvalues() else {
        return (None, condition);
    };
    if inverse.iter().any(|v| v.norm() == 0.0) {
        // a root at infinity: the state has fewer than n finite roots
        return (None, condition);
    }
    (Some(RootSet::new(inverse.iter().map(|v| z0 + rho / v).collect())), condition)
}

/// Zeros of `1 + Σ_i c_i/(z − ε_i)` as the eigenvalues of the complex
/// symmetric matrix `diag(ε) − √c √cᵀ`.
fn secular_roots(eps: &[f64], c: &[C64]) -> Vec<C64> {
    let n = eps.len();
    let root: Vec<C64> = c.iter().map(|x| x.sqrt()).collect();
    let m = DMatrix::from_fn(n, n, |i, j| {
        let d = if i == j { C64::new(eps[i], 0.0) } else { C64::new(0.0, 0.0) };
        d - root[i] * root[j]
    });
    m.schur().eigenvalues().expect("complex Schur form is triangular").iter().cloned().collect()
}

fn secular(eps: &[f64], c: &[C64], z: C64) -> (C64, C64) {
    let mut f = C64::new(1.0, 0.0);
    let mut df = C64::new(0.0, 0.0);
    for (&e, &ci) in eps.iter().zip(c) {
        let inv = 1.0 / (z - e);
        f += ci * inv;
        df -= ci * inv * inv;
    }
    (f, df)
}

/// A few Newton steps on the secular function, kept only while they help.
fn polish_root(eps: &[f64], c: &[C64], mut z: C64) -> C64 {
    for _ in 0..3 {
        let (f, df) = secular(eps, c, z);
        if df.norm() == 0.0 || !f.norm().is_finite() {
            break;
        }
        let next = z - f / df;
        if !(secular(eps, c, next).0.norm() < f.norm()) {
            break;
        }
        z = next;
    }
    z
}

fn snap_real(roots: &mut RootSet) {
    for r in &mut roots.roots {
        if r.im.abs() < 1e-9 * (1.0 + r.re.abs()) {
            r.im = 0.0;
        }
    }
}

/// Newton on the map `λ ↦ Λ(λ)`, Jacobian `∂Λ_i/∂λ_p = 1/(ε_i − λ_p)²`.
fn refine_roots(system: &SpinSystem, start: &RootSet, target: &[C64]) -> Option<RootSet> {
    let n = system.n();
    let eps = system.epsilons();
    let mut roots = start.clone();
    let mut best = round_trip_error(system, &roots, target);
    for _ in 0..20 {
        let current = lambdas_from_roots(system, &roots).ok()?;
        let rhs = DVector::from_fn(n, |i, _| target[i] - current[i]);
        let jac = DMatrix::from_fn(n, n, |i, p| {
            let d = eps[i] - roots.roots[p];
            1.0 / (d * d)
        });
        let (step, cond) = linalg::solve_complex(jac, &rhs);
        if !cond.is_finite() || step.iter().any(|s| !s.re.is_finite() || !s.im.is_finite()) {
            return None;
        }
        let mut trial = roots.clone();
        for (r, s) in trial.roots.iter_mut().zip(step.iter()) {
            *r += s;
        }
        let error = round_trip_error(system, &trial, target);
        if !(error < best) {
            break;
        }
        roots = trial;
        best = error;
    }
    Some(roots)
}

fn check_distinct(roots: &[C64]) -> Result<()> {
    for p in 0..roots.len() {
        for q in (p + 1)..roots.len() {
            if (roots[p] - roots[q]).norm() < ROOT_GAP_TOL {
                return Err(GaudinError::CoincidentRoots { p, q });
            }
        }
    }
    Ok(())
}

/// `Γ_p = −B_z + ½ Σ_i 1/(λ_p − ε_i) + Σ_{q≠p} 1/(λ_q − λ_p)`
pub fn gamma(system: &SpinSystem, roots: &RootSet) -> Result<Vec<C64>> {
    system.check_len(roots.as_slice())?;
    let r = roots.as_slice();
    check_distinct(r)?;
    for &l in r {
        system.check_separated(l)?;
    }
    let b_z = system.field_params().b_z;
    Ok((0..r.len())
        .map(|p| {
            let local: C64 = system.epsilons().iter().map(|&e| 0.5 / (r[p] - e)).sum();
            let pair: C64 = (0..r.len()).filter(|&q| q != p).map(|q| 1.0 / (r[q] - r[p])).sum();
            local + pair - b_z
        })
        .collect())
}

/// Residuals of the root-form Bethe equations
/// `Γ_p + (|B_⊥|²/2) Π_k(ε_k − λ_p) / Π_{q≠p}(λ_q − λ_p)`.
pub fn gamma_residuals(system: &SpinSystem, roots: &RootSet) -> Result<Vec<C64>> {
    let g = gamma(system, roots)?;
    let r = roots.as_slice();
    let half_perp = 0.5 * system.field_params().b_perp_sq;
    Ok((0..r.len())
        .map(|p| {
            let num: C64 = system.epsilons().iter().map(|&e| e - r[p]).product();
            let den: C64 = (0..r.len()).filter(|&q| q != p).map(|q| r[q] - r[p]).product();
            g[p] + half_perp * num / den
        })
        .collect())
}

/// Largest root-form residual [`on_shell_roots`] settles for before
/// trying the rotation path.
pub const ON_SHELL_TOL: f64 = 1e-9;

fn max_gamma(system: &SpinSystem, roots: &RootSet) -> f64 {
    gamma_residuals(system, roots)
        .map(|g| g.iter().map(|x| x.norm()).fold(0.0, f64::max))
        .unwrap_or(f64::INFINITY)
}

/// Newton on the root-form Bethe equations, starting from `roots`.
///
/// The unknowns are `w_p = 1/(λ_p − z₀)`, `z₀` the mean of the `ε`, in which
/// distant roots are small, well-scaled numbers. Steps are halved until the
/// largest residual decreases, so the result is never worse than the input.
/// Nothing ties the result to a particular `Λ`; callers compare against
/// the intended state.
pub fn polish_on_shell(system: &SpinSystem, roots: &RootSet) -> Result<RootSet> {
    let n = roots.len();
    let eps = system.epsilons();
    let z0 = eps.iter().sum::<f64>() / eps.len() as f64;
    let half_perp = 0.5 * system.field_params().b_perp_sq;
    let max_norm = |v: &[C64]| v.iter().map(|x| x.norm()).fold(0.0, f64::max);
    let mut current = roots.clone();
    let mut residual = gamma_residuals(system, &current)?;
    let mut best = max_norm(&residual);
    for _ in 0..50 {
        let r = current.as_slice();
        if best == 0.0 || r.iter().any(|&l| l == C64::new(z0, 0.0)) {
            break;
        }
        // ∂G_p/∂λ_q, then the chain rule dλ_q/dw_q = −(λ_q − z₀)²
        let jac = DMatrix::from_fn(n, n, |p, q| {
            let tail = half_perp
                * eps.iter().map(|&e| e - r[p]).product::<C64>()
                / (0..n).filter(|&k| k != p).map(|k| r[k] - r[p]).product::<C64>();
            let d_lambda = if p == q {
                let local: C64 = eps.iter().map(|&e| -0.5 / ((r[p] - e) * (r[p] - e))).sum();
                let pair: C64 = (0..n).filter(|&k| k != p).map(|k| 1.0 / ((r[k] - r[p]) * (r[k] - r[p]))).sum();
                let log_deriv: C64 = eps.iter().map(|&e| -1.0 / (e - r[p])).sum::<C64>()
                    + (0..n).filter(|&k| k != p).map(|k| 1.0 / (r[k] - r[p])).sum::<C64>();
                local + pair + tail * log_deriv
            } else {
                let d = r[q] - r[p];
                -1.0 / (d * d) - tail / d
            };
            let shift = r[q] - z0;
            -d_lambda * shift * shift
        });
        let (step, _) = linalg::solve_complex(jac, &DVector::from_column_slice(&residual));
        if step.iter().any(|s| !(s.re.is_finite() && s.im.is_finite())) {
            break;
        }
        let w: Vec<C64> = r.iter().map(|&l| 1.0 / (l - z0)).collect();
        let mut accepted = None;
        let mut damping = 1.0;
        for _ in 0..12 {
            let trial = RootSet::new(
                w.iter()
                    .zip(step.iter())
                    .map(|(w, s)| z0 + 1.0 / (w - damping * s))
                    .collect(),
            );
            if let Ok(next) = gamma_residuals(system, &trial) {
                let next_best = max_norm(&next);
                if next_best < best {
                    accepted = Some((trial, next, next_best));
                    break;
                }
            }
            damping *= 0.5;
        }
        let Some((trial, next, next_best)) = accepted else {
            break;
        };
        current = trial;
        residual = next;
        best = next_best;
    }
    Ok(current)
}

/// Conversion followed by a polish that is kept only if it stays on the
/// same state. Returns the roots and their root-form residual.
fn converted_on_shell(system: &SpinSystem, lambdas: &[C64]) -> Result<(RootSet, f64)> {
    let roots = roots_from_lambdas(system, lambdas)?;
    let polished = polish_on_shell(system, &roots)?;
    let (g_raw, g_pol) = (max_gamma(system, &roots), max_gamma(system, &polished));
    if g_pol < g_raw && round_trip_error(system, &polished, lambdas) < ROUND_TRIP_TOL {
        Ok((polished, g_pol))
    } else {
        Ok((roots, g_raw))
    }
}

/// Follows the roots of one eigenstate while the field turns at fixed
/// `|B|` from polar angle `theta_start` to the actual orientation.
///
/// The rotated-frame variables do not depend on the orientation, so the
/// common-frame `Λ(θ) = Λ̃ + |B|(1 − cos θ)` is known along the whole path,
/// and the roots depend on the field only through `B_z` and `|B_⊥|²`.
/// Far from the polar axis the conversion is well conditioned; each step is
/// a Newton correction on the root-form equations checked against `Λ(θ)`.
fn rotated_on_shell(system: &SpinSystem, lambdas: &[f64], theta_start: f64) -> Option<RootSet> {
    let p = system.field_params();
    let b = p.b_mag;
    let tilde: Vec<f64> = lambdas.iter().map(|l| l - (b - p.b_z)).collect();
    let at = |theta: f64| -> Option<(SpinSystem, Vec<C64>)> {
        let s = system.with_field([b * theta.sin(), 0.0, b * theta.cos()]).ok()?;
        let lam = tilde.iter().map(|t| C64::new(t + b * (1.0 - theta.cos()), 0.0)).collect();
        Some((s, lam))
    };
    let target = (p.b_z / b).clamp(-1.0, 1.0).acos();

    let (s0, lam0) = at(theta_start)?;
    let (mut roots, g0) = converted_on_shell(&s0, &lam0).ok()?;
    if !(g0 < ON_SHELL_TOL) {
        return None;
    }
    let mut theta = theta_start;
    let mut h = (target - theta_start) / 8.0;
    while theta != target {
        if h.abs() < 1e-7 {
            return None;
        }
        let next = if (target - theta).abs() <= h.abs() { target } else { theta + h };
        let (s, lam) = at(next)?;
        let corrected = polish_on_shell(&s, &roots).ok();
        let ok = corrected.as_ref().filter(|c| {
            max_gamma(&s, c) < ON_SHELL_TOL && round_trip_error(&s, c, &lam) < ROUND_TRIP_TOL
        });
        match ok {
            Some(c) => {
                roots = c.clone();
                theta = next;
                h *= 1.5;
            }
            None => h *= 0.5,
        }
    }
    Some(roots)
}

/// Roots of an on-shell state.
///
/// Distant roots barely influence `Λ`: in double precision a set that
/// reproduces `Λ` to rounding can still have its distant roots far off and
/// fail the root-form equations by O(1). The direct route is conversion
/// then [`polish_on_shell`]. When that does not reach [`ON_SHELL_TOL`], the
/// roots are converted at a tilted field orientation where the problem is
/// well conditioned and followed back (see `rotated_on_shell`). The result
/// always reproduces `lambdas` within the round-trip tolerance; its
/// root-form residual is the best found.
pub fn on_shell_roots(system: &SpinSystem, lambdas: &[C64]) -> Result<RootSet> {
    let (roots, g) = converted_on_shell(system, lambdas)?;
    let real = lambdas.iter().all(|l| l.im == 0.0);
    if g < ON_SHELL_TOL || !real || system.field_params().b_perp_sq == 0.0 {
        return Ok(roots);
    }
    let re: Vec<f64> = lambdas.iter().map(|l| l.re).collect();
    for theta in [0.5, 0.35, 0.65, 0.2, 0.8].map(|f| f * std::f64::consts::PI) {
        if let Some(r) = rotated_on_shell(system, &re, theta) {
            if round_trip_error(system, &r, lambdas) < ROUND_TRIP_TOL && max_gamma(system, &r) < g {
                log::debug!("roots recovered along the rotation path from θ = {theta}");
                return Ok(r);
            }
        }
    }
    log::debug!("root-form residual {g:e} after all attempts");
    Ok(roots)
}

/// `Σ_p Π_{k≠i}(ε_k − λ_p) / Π_{q≠p}(λ_q − λ_p)`, identically 1 for any
/// distinct roots and as many roots as `ε` values.
pub fn lagrange_unit_sum(epsilons: &[f64], roots: &RootSet, i: usize) -> Result<C64> {
    let r = roots.as_slice();
    if r.len() != epsilons.len() {
        return Err(GaudinError::LengthMismatch {
            expected: epsilons.len(),
            got: r.len(),
        });
    }
    if i >= epsilons.len() {
        return Err(GaudinError::SiteOutOfRange {
            site: i,
            n: epsilons.len(),
        });
    }
    check_distinct(r)?;
    Ok((0..r.len())
        .map(|p| {
            let num: C64 = epsilons
                .iter()
                .enumerate()
                .filter(|&(k, _)| k != i)
                .map(|(_, &e)| e - r[p])
                .product();
            let den: C64 = (0..r.len()).filter(|&q| q != p).map(|q| r[q] - r[p]).product();
            num / den
        })
        .sum())
}

/// `Σ_p Γ_p / Π_{j}(λ_p − ε_{k_j})` over a subset of at least two sites;
/// vanishes for on-shell roots.
pub fn zero_sum_identity(system: &SpinSystem, roots: &RootSet, subset: &[usize]) -> Result<C64> {
    if subset.len() < 2 {
        return Err(GaudinError::BadUpSet(format!(
            "need at least two sites, got {}",
            subset.len()
        )));
    }
    crate::fock::up_set_mask(system.n(), subset)?;
    let g = gamma(system, roots)?;
    let eps = system.epsilons();
    Ok(roots
        .as_slice()
        .iter()
        .zip(&g)
        .map(|(&l, &gp)| gp / subset.iter().map(|&k| l - eps[k]).product::<C64>())
        .sum())
}
