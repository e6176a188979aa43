//! Quadratic Bethe equations in the eigenvalue-based variables.
//!
//! In the common frame (one reference state `|↓…↓⟩` for every field
//! orientation) an eigenstate is a real solution of
//!
//! ```text
//! Λ_i² − Σ_{j≠i} (Λ_i − Λ_j)/(ε_i − ε_j) + 2 B_z Λ_i = |B_⊥|²
//! ```
//!
//! while in the frame whose quantization axis follows `B` the equations read
//! `Λ̃_i² − Σ_{j≠i} (Λ̃_i − Λ̃_j)/(ε_i − ε_j) + 2|B| Λ̃_i = 0`. Both describe
//! the same states, related by the uniform shift `Λ̃ = Λ + B_z − |B|`.
//!
//! The rotated equations depend on the field only through `|B|`, which makes
//! `|B|` a natural continuation parameter: at very large field every spin is
//! either aligned (`Λ̃_k ≈ 0`) or anti-aligned (`Λ̃_k ≈ −2|B|`) with it, so
//! the `2^N` bit strings seed all `2^N` solutions, which are then followed
//! down to the physical field.

use std::fmt;

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use twofloat::TwoFloat;

use crate::linalg;
use crate::{GaudinError, Result, SpinSystem};

/// Largest accepted Jacobian condition number.
pub const MAX_JACOBIAN_CONDITION: f64 = 1e14;
/// Two solutions closer than this in max-norm are considered identical.
pub const DUPLICATE_TOL: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Frame {
    Common,
    Rotated,
}

impl Frame {
    fn name(self) -> &'static str {
        match self {
            Frame::Common => "common",
            Frame::Rotated => "rotated",
        }
    }
}

/// Continuation seed: bit `k` set means spin `k` started anti-aligned with
/// the field. Labels identify solutions; they are not magnetization claims.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Label {
    pub bits: u64,
    pub n: usize,
}

impl Label {
    pub fn new(bits: u64, n: usize) -> Self {
        Label { bits, n }
    }

    pub fn is_up(&self, site: usize) -> bool {
        self.bits >> site & 1 == 1
    }

    /// Parses the `fmt::Display` form: character `k` is site `k`.
    pub fn parse(s: &str) -> Option<Self> {
        let mut bits = 0u64;
        for (k, ch) in s.chars().enumerate() {
            match ch {
                '1' => bits |= 1 << k,
                '0' => {}
                _ => return None,
            }
        }
        (!s.is_empty() && s.len() <= 64).then(|| Label::new(bits, s.len()))
    }
}

impl fmt::Display for Label {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for k in 0..self.n {
            f.write_str(if self.is_up(k) { "1" } else { "0" })?;
        }
        Ok(())
    }
}

/// One eigenstate in `Λ` form.
#[derive(Debug, Clone, PartialEq)]
pub struct BetheSolution {
    pub frame: Frame,
    /// `Λ_i` (common frame) or `Λ̃_i` (rotated frame).
    pub lambdas: Vec<f64>,
    pub label: Label,
    /// Max-norm of the equations in `frame`.
    pub residual: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SolverOptions {
    /// Relative residual target; the max-norm residual must drop below
    /// `newton_tol · max(1, size of the largest term)`.
    pub newton_tol: f64,
    pub max_newton_iter: usize,
    /// Continuation starts at `b_start_factor · max(|B|, spread(ε) + n)`.
    pub b_start_factor: f64,
    /// Step multiplier applied after a rejected continuation step.
    pub step_shrink: f64,
    /// Smallest continuation step in `ln |B|` before giving up.
    pub min_step: f64,
}

impl Default for SolverOptions {
    fn default() -> Self {
        SolverOptions {
            newton_tol: 1e-12,
            max_newton_iter: 50,
            b_start_factor: 4.0,
            step_shrink: 0.5,
            min_step: 1e-8,
        }
    }
}

impl SolverOptions {
    pub fn validate(&self) -> Result<()> {
        let positive = self.newton_tol > 0.0
            && self.max_newton_iter > 0
            && self.b_start_factor > 0.0
            && self.step_shrink > 0.0
            && self.step_shrink < 1.0
            && self.min_step > 0.0;
        if positive {
            Ok(())
        } else {
            Err(GaudinError::NonFinite("solver options must be positive (step_shrink below 1)"))
        }
    }
}

/// Coefficients of `Λ_i² − Σ_{j≠i}(Λ_i − Λ_j)/(ε_i − ε_j) + 2·linear·Λ_i − constant`.
#[derive(Debug, Clone, Copy)]
struct Equations<'a> {
    eps: &'a [f64],
    linear: f64,
    constant: f64,
}

impl<'a> Equations<'a> {
    fn new(system: &'a SpinSystem, frame: Frame) -> Self {
        let p = system.field_params();
        match frame {
            Frame::Common => Equations {
                eps: system.epsilons(),
                linear: p.b_z,
                constant: p.b_perp_sq,
            },
            Frame::Rotated => Equations::rotated(system.epsilons(), p.b_mag),
        }
    }

    fn rotated(eps: &'a [f64], b: f64) -> Self {
        Equations {
            eps,
            linear: b,
            constant: 0.0,
        }
    }

    /// Evaluated in double-double: near-coincident `ε` make the terms large
    /// and nearly cancelling, and plain rounding would swamp the result.
    fn residual(&self, lam: &[f64]) -> Vec<f64> {
        let eps = self.eps;
        (0..eps.len())
            .map(|i| {
                let coupling = (0..eps.len()).filter(|&j| j != i).fold(TwoFloat::from(0.0), |acc, j| {
                    acc + TwoFloat::new_sub(lam[i], lam[j]) / TwoFloat::new_sub(eps[i], eps[j])
                });
                let value = TwoFloat::new_mul(lam[i], lam[i]) - coupling + TwoFloat::new_mul(2.0 * self.linear, lam[i])
                    - self.constant;
                value.into()
            })
            .collect()
    }

    /// Size of the largest individual term, the yardstick for rounding.
    fn scale(&self, lam: &[f64]) -> f64 {
        let eps = self.eps;
        (0..eps.len())
            .map(|i| {
                let coupling: f64 = (0..eps.len())
                    .filter(|&j| j != i)
                    .map(|j| (lam[i].abs() + lam[j].abs()) / (eps[i] - eps[j]).abs())
                    .sum();
                lam[i] * lam[i] + coupling + 2.0 * (self.linear * lam[i]).abs() + self.constant.abs()
            })
            .fold(1.0, f64::max)
    }

    fn jacobian(&self, lam: &[f64]) -> DMatrix<f64> {
        let eps = self.eps;
        let n = eps.len();
        DMatrix::from_fn(n, n, |i, j| {
            if i == j {
                let s: f64 = (0..n).filter(|&k| k != i).map(|k| 1.0 / (eps[i] - eps[k])).sum();
                2.0 * lam[i] - s + 2.0 * self.linear
            } else {
                1.0 / (eps[i] - eps[j])
            }
        })
    }
}

impl Equations<'_> {
    /// `Σ_i Λ_i` on a state with `count` spins anti-aligned with the field,
    /// from `Σ_k R_k = B·S_tot`.
    fn sum_rule(&self, count: usize) -> f64 {
        let b = (self.linear * self.linear + self.constant).sqrt();
        self.eps.len() as f64 * (b - self.linear) - 2.0 * b * count as f64
    }

    /// Anti-aligned count whose sum rule `lam` satisfies, if any is close.
    fn sum_count(&self, lam: &[f64]) -> Option<usize> {
        let b = (self.linear * self.linear + self.constant).sqrt();
        if b == 0.0 {
            return None;
        }
        let count = (self.eps.len() as f64 * (b - self.linear) - lam.iter().sum::<f64>()) / (2.0 * b);
        let nearest = count.round();
        ((count - nearest).abs() < 1e-6 && nearest >= 0.0 && nearest <= self.eps.len() as f64)
            .then_some(nearest as usize)
    }
}

/// Gauss-Newton on the equations plus the sum rule as one extra row. The
/// Jacobian is nearly singular along a uniform shift of `Λ` when
/// `Λ_i + linear` is small for every `i`; the sum rule pins that direction.
fn pin_sum(eq: &Equations, lam: Vec<f64>, count: usize) -> Vec<f64> {
    let n = lam.len();
    let target = eq.sum_rule(count);
    let stacked = |lam: &[f64]| {
        let mut r = eq.residual(lam);
        r.push(f64::from(lam.iter().fold(TwoFloat::from(-target), |acc, &l| acc + l)));
        r
    };
    let mut lam = lam;
    let mut r = stacked(&lam);
    let mut res = max_abs(&r);
    for _ in 0..6 {
        let j = eq.jacobian(&lam).insert_row(n, 1.0);
        let qr = j.qr();
        let rhs = qr.q().transpose() * DVector::from_vec(r.clone());
        let Some(step) = qr.r().solve_upper_triangular(&rhs) else {
            break;
        };
        let trial: Vec<f64> = lam.iter().zip(step.iter()).map(|(l, s)| l - s).collect();
        let rt = stacked(&trial);
        let next = max_abs(&rt);
        if !(next < res) {
            break;
        }
        lam = trial;
        r = rt;
        res = next;
    }
    lam
}

fn max_abs(v: &[f64]) -> f64 {
    v.iter().map(|x| x.abs()).fold(0.0, f64::max)
}

struct NewtonOutcome {
    lambdas: Vec<f64>,
    residual: f64,
    iterations: usize,
}

/// Damped Newton: a step is halved until the residual decreases.
fn newton(eq: &Equations, guess: &[f64], tol: f64, max_iter: usize) -> Result<NewtonOutcome> {
    let mut lam = guess.to_vec();
    let mut f = eq.residual(&lam);
    let mut res = max_abs(&f);
    if !res.is_finite() {
        return Err(GaudinError::NoConvergence {
            iterations: 0,
            residual: res,
        });
    }
    for iteration in 0..=max_iter {
        let converged = res <= tol * eq.scale(&lam);
        if iteration == max_iter && !converged {
            break;
        }
        let (step, condition) = linalg::solve_real(eq.jacobian(&lam), &DVector::from_vec(f.clone()));
        if !(condition < MAX_JACOBIAN_CONDITION) {
            if converged {
                return Ok(NewtonOutcome { lambdas: lam, residual: res, iterations: iteration });
            }
            return Err(GaudinError::SingularJacobian { condition });
        }
        let mut damping = 1.0;
        let mut improved = None;
        for _ in 0..30 {
            let trial: Vec<f64> = lam.iter().zip(step.iter()).map(|(l, s)| l - damping * s).collect();
            let ft = eq.residual(&trial);
            let rt = max_abs(&ft);
            if rt < res {
                improved = Some((trial, ft, rt));
                break;
            }
            if converged {
                // only a full polishing step is worth trying once converged
                break;
            }
            damping *= 0.5;
        }
        match improved {
            Some((trial, ft, rt)) => {
                lam = trial;
                f = ft;
                res = rt;
                if converged {
                    return Ok(NewtonOutcome { lambdas: lam, residual: res, iterations: iteration + 1 });
                }
            }
            None if converged => {
                return Ok(NewtonOutcome { lambdas: lam, residual: res, iterations: iteration });
            }
            None => break,
        }
    }
    Err(GaudinError::NoConvergence {
        iterations: max_iter,
        residual: res,
    })
}

/// Residuals of the common-frame quadratic equations.
pub fn residual_common(system: &SpinSystem, lambdas: &[f64]) -> Result<Vec<f64>> {
    system.check_len(lambdas)?;
    Ok(Equations::new(system, Frame::Common).residual(lambdas))
}

/// Residuals of the rotated-frame quadratic equations.
pub fn residual_rotated(system: &SpinSystem, lambdas: &[f64]) -> Result<Vec<f64>> {
    system.check_len(lambdas)?;
    if system.field_params().b_mag == 0.0 {
        return Err(GaudinError::ZeroField);
    }
    Ok(Equations::new(system, Frame::Rotated).residual(lambdas))
}

/// Max-norm residual of `lambdas` in `frame`.
pub fn max_residual(system: &SpinSystem, frame: Frame, lambdas: &[f64]) -> f64 {
    max_abs(&Equations::new(system, frame).residual(lambdas))
}

/// Refines a guess with damped Newton using the analytic Jacobian. When
/// `Σ Λ` lands on a value allowed by `Σ_k R_k = B·S_tot`, a last pass holds
/// it there. The returned solution carries an all-zero label.
pub fn newton_refine(
    system: &SpinSystem,
    frame: Frame,
    guess: &[f64],
    options: &SolverOptions,
) -> Result<BetheSolution> {
    system.check_len(guess)?;
    if guess.iter().any(|g| !g.is_finite()) {
        return Err(GaudinError::NonFinite("initial guess"));
    }
    let eq = Equations::new(system, frame);
    let out = newton(&eq, guess, options.newton_tol, options.max_newton_iter)?;
    log::trace!("newton converged in {} iterations to {:e}", out.iterations, out.residual);
    let lambdas = match eq.sum_count(&out.lambdas) {
        Some(count) => pin_sum(&eq, out.lambdas, count),
        None => out.lambdas,
    };
    Ok(BetheSolution {
        frame,
        residual: max_abs(&eq.residual(&lambdas)),
        lambdas,
        label: Label::new(0, system.n()),
    })
}

/// Follows one seed from `b_start` down to `b_target`.
fn track(
    eps: &[f64],
    label: Label,
    b_start: f64,
    b_target: f64,
    options: &SolverOptions,
    strictness: f64,
) -> Result<Vec<f64>> {
    let stall = |b: f64| GaudinError::ContinuationStall {
        label: label.to_string(),
        field: b,
    };
    let seed = seed(eps, label, b_start);
    let start = Equations::rotated(eps, b_start);
    let mut lam = newton(&start, &seed, options.newton_tol, options.max_newton_iter)?.lambdas;

    let ln_target = b_target.ln();
    let mut ln_b = b_start.ln();
    let max_step = 0.5 * strictness.min(1.0);
    let mut h = 0.25 * strictness.min(1.0);
    let contraction = 0.25 * strictness;
    while ln_b > ln_target {
        let last = ln_b - ln_target <= h;
        let (ln_next, b_next) = if last {
            (ln_target, b_target)
        } else {
            (ln_b - h, (ln_b - h).exp())
        };
        let b = ln_b.exp();
        let here = Equations::rotated(eps, b);
        // dΛ/db = −J⁻¹ ∂F/∂b with ∂F_i/∂b = 2Λ_i
        let (tangent, condition) = linalg::solve_real(
            here.jacobian(&lam),
            &DVector::from_iterator(lam.len(), lam.iter().map(|l| -2.0 * l)),
        );
        if !(condition < MAX_JACOBIAN_CONDITION) {
            return Err(GaudinError::SingularJacobian { condition });
        }
        let predicted: Vec<f64> = lam
            .iter()
            .zip(tangent.iter())
            .map(|(l, t)| l + (b_next - b) * t)
            .collect();
        let moved = lam.iter().zip(&predicted).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        let next_eq = Equations::rotated(eps, b_next);
        let accepted = match newton(&next_eq, &predicted, options.newton_tol, 8) {
            Ok(out) => {
                let correction = out
                    .lambdas
                    .iter()
                    .zip(&predicted)
                    .map(|(a, b)| (a - b).abs())
                    .fold(0.0, f64::max);
                let slack = 1e-9 * (1.0 + max_abs(&lam));
                (correction <= contraction * moved + slack).then_some(out.lambdas)
            }
            Err(_) => None,
        };
        match accepted {
            Some(next) => {
                lam = next;
                ln_b = ln_next;
                h = (h * 1.5).min(max_step);
            }
            None => {
                h *= options.step_shrink;
                if h < options.min_step {
                    return Err(stall(b));
                }
            }
        }
    }
    let target = Equations::rotated(eps, b_target);
    let lam = newton(&target, &lam, options.newton_tol, options.max_newton_iter)?.lambdas;
    Ok(pin_sum(&target, lam, label.bits.count_ones() as usize))
}

/// Large-field solution to first order in `1/b`: an anti-aligned spin sits
/// at `−2b + Σ_{j aligned} 1/(ε_k − ε_j)`, an aligned one at
/// `Σ_{j anti-aligned} 1/(ε_k − ε_j)`.
fn seed(eps: &[f64], label: Label, b: f64) -> Vec<f64> {
    (0..eps.len())
        .map(|k| {
            let up = label.is_up(k);
            let coupling: f64 = (0..eps.len())
                .filter(|&j| j != k && label.is_up(j) != up)
                .map(|j| 1.0 / (eps[k] - eps[j]))
                .sum();
            if up {
                -2.0 * b + coupling
            } else {
                coupling
            }
        })
        .collect()
}

fn first_duplicate(solutions: &[(Label, Vec<f64>)]) -> Option<(usize, usize, f64)> {
    // sort by the first coordinate and only compare nearby entries
    let mut order: Vec<usize> = (0..solutions.len()).collect();
    order.sort_by(|&a, &b| solutions[a].1[0].total_cmp(&solutions[b].1[0]));
    for (pos, &a) in order.iter().enumerate() {
        for &b in &order[pos + 1..] {
            if solutions[b].1[0] - solutions[a].1[0] > DUPLICATE_TOL {
                break;
            }
            let d = solutions[a]
                .1
                .iter()
                .zip(&solutions[b].1)
                .map(|(x, y)| (x - y).abs())
                .fold(0.0, f64::max);
            if d <= DUPLICATE_TOL {
                return Some((a.min(b), a.max(b), d));
            }
        }
    }
    None
}

/// Starting field of the continuation: `b_start_factor` times the largest of
/// `|B|`, `spread(ε) + n` and the largest `Σ_{j≠i} 1/|ε_i − ε_j|`. The last
/// term keeps the seeds asymptotic when two `ε` are close.
pub fn start_field(system: &SpinSystem, options: &SolverOptions) -> f64 {
    let b = system.field_params().b_mag;
    let eps = system.epsilons();
    let coupling = (0..eps.len())
        .map(|i| {
            (0..eps.len())
                .filter(|&j| j != i)
                .map(|j| 1.0 / (eps[i] - eps[j]).abs())
                .sum::<f64>()
        })
        .fold(0.0, f64::max);
    options.b_start_factor * b.max(system.spread() + system.n() as f64).max(coupling)
}

/// All `2^n` solutions of the rotated-frame equations at the system's
/// `|B|`, sorted by label.
pub fn solve_all(system: &SpinSystem, options: &SolverOptions) -> Result<Vec<BetheSolution>> {
    options.validate()?;
    let b_target = system.field_params().b_mag;
    if b_target == 0.0 {
        return Err(GaudinError::ZeroField);
    }
    let n = system.n();
    let eps = system.epsilons();
    let b_start = start_field(system, options).max(b_target);
    let run = |labels: &[Label], strictness: f64| -> Result<Vec<(Label, Vec<f64>)>> {
        labels
            .par_iter()
            .map(|&label| track(eps, label, b_start, b_target, options, strictness).map(|l| (label, l)))
            .collect()
    };
    let labels: Vec<Label> = (0..1u64 << n).map(|bits| Label::new(bits, n)).collect();
    let mut solutions = run(&labels, 1.0)?;

    // A path that jumped onto its neighbour is retraced with tighter steps.
    let mut strictness = 1.0;
    while let Some((a, b, distance)) = first_duplicate(&solutions) {
        if strictness < 0.01 {
            return Err(GaudinError::DuplicateSolution {
                a: solutions[a].0.to_string(),
                b: solutions[b].0.to_string(),
                distance,
            });
        }
        strictness *= 0.2;
        log::debug!(
            "labels {} and {} collided; retracing with strictness {strictness}",
            solutions[a].0,
            solutions[b].0
        );
        let redo = run(&[solutions[a].0, solutions[b].0], strictness)?;
        solutions[a] = redo[0].clone();
        solutions[b] = redo[1].clone();
    }

    let eq = Equations::rotated(eps, b_target);
    Ok(solutions
        .into_iter()
        .map(|(label, lambdas)| BetheSolution {
            frame: Frame::Rotated,
            residual: max_abs(&eq.residual(&lambdas)),
            lambdas,
            label,
        })
        .collect())
}

/// Moves a solution between frames: `Λ = Λ̃ + |B| − B_z`.
pub fn shift_frame(system: &SpinSystem, solution: &BetheSolution) -> BetheSolution {
    let p = system.field_params();
    let shift = p.b_mag - p.b_z;
    let (frame, delta) = match solution.frame {
        Frame::Rotated => (Frame::Common, shift),
        Frame::Common => (Frame::Rotated, -shift),
    };
    let lambdas: Vec<f64> = solution.lambdas.iter().map(|l| l + delta).collect();
    BetheSolution {
        frame,
        residual: max_residual(system, frame, &lambdas),
        lambdas,
        label: solution.label,
    }
}

/// Every solution in the common frame: [`solve_all`], shifted, then polished
/// on the common-frame equations.
pub fn solve_common(system: &SpinSystem, options: &SolverOptions) -> Result<Vec<BetheSolution>> {
    to_common(system, &solve_all(system, options)?, options)
}

/// Shifts rotated-frame solutions and polishes them on the common-frame
/// equations, keeping their labels.
pub fn to_common(system: &SpinSystem, rotated: &[BetheSolution], options: &SolverOptions) -> Result<Vec<BetheSolution>> {
    rotated
        .iter()
        .map(|rotated| {
            let shifted = shift_frame(system, rotated);
            let polished = newton_refine(system, Frame::Common, &shifted.lambdas, options)?;
            Ok(BetheSolution {
                label: rotated.label,
                ..polished
            })
        })
        .collect()
}

/// `r_k = −B_z/2 + ¼ Σ_{j≠k} 1/(ε_k − ε_j) − Λ_k/2`
pub fn charge_eigenvalues(system: &SpinSystem, solution: &BetheSolution) -> Result<Vec<f64>> {
    if solution.frame != Frame::Common {
        return Err(GaudinError::WrongFrame {
            expected: Frame::Common.name(),
        });
    }
    system.check_len(&solution.lambdas)?;
    let b_z = system.field_params().b_z;
    Ok(solution
        .lambdas
        .iter()
        .enumerate()
        .map(|(k, l)| -0.5 * b_z + 0.25 * system.coupling_sum(k) - 0.5 * l)
        .collect())
}

/// `Σ_k α_k r_k`
pub fn energy(charges: &[f64], weights: &[f64]) -> f64 {
    charges.iter().zip(weights).map(|(r, a)| r * a).sum()
}
