use gaudin::bethe::{self, BetheSolution, Frame, Label, SolverOptions};
use gaudin::config::{Config, ConfigError};
use gaudin::dynamics::{self, Observable, QuenchSpec, TimeGrid};
use gaudin::overlap::{self, ScaledValue};
use gaudin::roots;
use gaudin::{build_system, fock, GaudinError, SpinSystem, C64};
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;
use serde_json::{json, Map, Value};

use crate::output::{self, pair};

pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_SOLVER: i32 = 3;
pub const EXIT_VERIFY: i32 = 4;
pub const EXIT_IN_PLANE: i32 = 5;

#[derive(Debug)]
pub struct Failure {
    pub exit: i32,
    pub code: String,
    pub message: String,
}

impl Failure {
    pub fn new(exit: i32, code: &str, message: impl Into<String>) -> Self {
        Failure {
            exit,
            code: code.to_string(),
            message: message.into(),
        }
    }

    pub fn verification(message: impl Into<String>) -> Self {
        Failure::new(EXIT_VERIFY, "VerificationFailed", message)
    }
}

impl From<GaudinError> for Failure {
    fn from(e: GaudinError) -> Self {
        let exit = match e {
            GaudinError::ZeroInPlaneField => EXIT_IN_PLANE,
            GaudinError::EmptySystem
            | GaudinError::DuplicateEpsilon { .. }
            | GaudinError::NonFinite(_)
            | GaudinError::SiteOutOfRange { .. }
            | GaudinError::ZeroField
            | GaudinError::LengthMismatch { .. }
            | GaudinError::BadUpSet(_) => EXIT_CONFIG,
            _ => EXIT_SOLVER,
        };
        Failure::new(exit, e.code(), e.to_string())
    }
}

impl From<ConfigError> for Failure {
    fn from(e: ConfigError) -> Self {
        Failure::new(EXIT_CONFIG, e.code(), e.to_string())
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        Failure::new(EXIT_CONFIG, "OutputIo", e.to_string())
    }
}

/// What a command produced: the payload is written to `--out`, `details`
/// go into the manifest, and `failure` (if any) decides the exit status
/// after both are written.
pub struct Report {
    pub payload: Payload,
    pub details: Map<String, Value>,
    pub failure: Option<Failure>,
}

pub enum Payload {
    Json(Value),
    Series { times: Vec<f64>, values: Vec<f64> },
}

impl Report {
    fn json<T: Serialize>(value: &T) -> Result<Self, Failure> {
        Ok(Report {
            payload: Payload::Json(serde_json::to_value(value).map_err(|e| Failure::new(EXIT_SOLVER, "Serialize", e.to_string()))?),
            details: Map::new(),
            failure: None,
        })
    }
}

pub struct Context {
    pub config: Config,
    pub system: SpinSystem,
    pub weights: Vec<f64>,
}

impl Context {
    pub fn load(config: Config, weights: Option<Vec<f64>>) -> Result<Self, Failure> {
        let system = config.system()?;
        let weights = match weights.or_else(|| config.weights.clone()) {
            Some(w) => {
                if w.len() != system.n() {
                    return Err(GaudinError::LengthMismatch {
                        expected: system.n(),
                        got: w.len(),
                    }
                    .into());
                }
                w
            }
            None => default_weights(system.n()),
        };
        Ok(Context { config, system, weights })
    }

    fn options(&self) -> &SolverOptions {
        &self.config.solver
    }
}

/// Fixed pseudo-random weights in `[0.5, 1.5)`, so the default Hamiltonian
/// has no accidental degeneracies and reruns agree.
pub fn default_weights(n: usize) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    (0..n).map(|_| rng.gen_range(0.5..1.5)).collect()
}

fn parse_label(text: &str, n: usize) -> Result<Label, Failure> {
    match Label::parse(text) {
        Some(l) if l.n == n => Ok(l),
        _ => Err(Failure::new(
            EXIT_CONFIG,
            "BadLabel",
            format!("expected a string of {n} characters 0/1, got {text:?}"),
        )),
    }
}

fn up_sites(label: Label) -> Vec<usize> {
    (0..label.n).filter(|&k| label.is_up(k)).collect()
}

fn complex(lambdas: &[f64]) -> Vec<C64> {
    lambdas.iter().map(|&l| C64::new(l, 0.0)).collect()
}

fn find(solutions: &[BetheSolution], label: Label) -> Result<&BetheSolution, Failure> {
    solutions
        .iter()
        .find(|s| s.label == label)
        .ok_or_else(|| Failure::new(EXIT_CONFIG, "BadLabel", format!("no solution labelled {label}")))
}

fn scaled(v: &ScaledValue) -> Value {
    json!({ "value": pair(v.value), "phase": pair(v.phase), "ln_abs": finite_or_null(v.ln_abs) })
}

fn finite_or_null(x: f64) -> Value {
    if x.is_finite() {
        json!(x)
    } else {
        Value::Null
    }
}

#[derive(Serialize)]
struct Residuals {
    rotated: f64,
    common: f64,
}

#[derive(Serialize)]
struct SpectrumRecord {
    label: String,
    lambdas_rotated: Vec<f64>,
    lambdas_common: Vec<f64>,
    charges: Vec<f64>,
    energy: f64,
    residuals: Residuals,
}

pub fn spectrum(ctx: &Context) -> Result<Report, Failure> {
    let rotated = bethe::solve_all(&ctx.system, ctx.options())?;
    let common = bethe::to_common(&ctx.system, &rotated, ctx.options())?;
    let records = rotated
        .iter()
        .zip(&common)
        .map(|(r, c)| {
            let charges = bethe::charge_eigenvalues(&ctx.system, c)?;
            Ok(SpectrumRecord {
                label: r.label.to_string(),
                energy: bethe::energy(&charges, &ctx.weights),
                residuals: Residuals {
                    rotated: r.residual,
                    common: c.residual,
                },
                lambdas_rotated: r.lambdas.clone(),
                lambdas_common: c.lambdas.clone(),
                charges,
            })
        })
        .collect::<Result<Vec<_>, GaudinError>>()?;
    let mut report = Report::json(&records)?;
    report.details.insert("weights".into(), json!(ctx.weights));
    Ok(report)
}

#[derive(Serialize)]
struct Check {
    name: &'static str,
    value: f64,
    tolerance: f64,
    pass: bool,
}

impl Check {
    fn below(name: &'static str, value: f64, tolerance: f64) -> Self {
        Check {
            name,
            value,
            tolerance,
            pass: value < tolerance,
        }
    }
}

#[derive(Serialize)]
struct StateReport {
    label: String,
    residual_rotated: f64,
    residual_common: f64,
    match_distance: f64,
}

pub fn verify(ctx: &Context, nmax: usize, perturb: Option<f64>) -> Result<Report, Failure> {
    let n = ctx.system.n();
    if nmax == 1 {
        return single_spin_checks(ctx);
    }
    if n > nmax {
        return Err(Failure::new(EXIT_CONFIG, "TooManySpins", format!("{n} spins exceed --nmax {nmax}")));
    }
    let s = &ctx.system;
    let rotated = bethe::solve_all(s, ctx.options())?;
    let mut common = bethe::to_common(s, &rotated, ctx.options())?;
    if let Some(delta) = perturb {
        let first = &mut common[0];
        first.lambdas[0] += delta;
        first.residual = bethe::max_residual(s, Frame::Common, &first.lambdas);
    }

    let charges: Vec<Vec<f64>> = common
        .iter()
        .map(|c| bethe::charge_eigenvalues(s, c))
        .collect::<Result<_, _>>()?;
    let ed = fock::ed_reference(s, &ctx.weights)?;
    let matching = fock::match_charge_vectors(&charges, &ed.charge_vectors());

    let operators = fock::conserved_charges(s);
    let mut commutator: f64 = 0.0;
    for i in 0..n {
        for j in i + 1..n {
            commutator = commutator.max(fock::commutator_norm(&operators[i], &operators[j])?);
        }
    }
    let mut total = fock::SparseOperator::zero(s.dim());
    for r in &operators {
        total = total.add(r)?;
    }
    let sum_rule = total.sub(&fock::total_zeeman(s))?.frobenius_norm();

    let states: Vec<StateReport> = rotated
        .iter()
        .zip(&common)
        .zip(&matching.distances)
        .map(|((r, c), &d)| StateReport {
            label: r.label.to_string(),
            residual_rotated: r.residual,
            residual_common: c.residual,
            match_distance: d,
        })
        .collect();
    let worst = |f: fn(&StateReport) -> f64| states.iter().map(f).fold(0.0, f64::max);
    let checks = vec![
        Check::below("residual_rotated", worst(|s| s.residual_rotated), 1e-10),
        Check::below("residual_common", worst(|s| s.residual_common), 1e-10),
        Check::below("match_distance", worst(|s| s.match_distance), 1e-8),
        Check {
            name: "one_to_one",
            value: f64::from(u8::from(matching.bijective)),
            tolerance: 1.0,
            pass: matching.bijective,
        },
        Check::below("commutator", commutator, 1e-12),
        Check::below("sum_rule", sum_rule, 1e-13),
    ];

    let mut located = Vec::new();
    for st in &states {
        for (name, value, tol) in [
            ("residual_rotated", st.residual_rotated, 1e-10),
            ("residual_common", st.residual_common, 1e-10),
            ("match_distance", st.match_distance, 1e-8),
        ] {
            if !(value < tol) {
                located.push(format!("{} {name} {value:e}", st.label));
            }
        }
    }
    for c in &checks {
        if !c.pass && !matches!(c.name, "residual_rotated" | "residual_common" | "match_distance") {
            located.push(format!("{} {:e}", c.name, c.value));
        }
    }
    let pass = checks.iter().all(|c| c.pass);
    let mut report = Report::json(&json!({
        "pass": pass,
        "n": n,
        "checks": checks,
        "failures": located,
        "states": states,
    }))?;
    report.details.insert("weights".into(), json!(ctx.weights));
    report.details.insert("pass".into(), json!(pass));
    if !pass {
        report.failure = Some(Failure::verification(located.join("; ")));
    }
    Ok(report)
}

/// One spin at the first `ε` in the configured field: `Λ = −B_z ± |B|` and
/// `r = ∓|B|/2`.
fn single_spin_checks(ctx: &Context) -> Result<Report, Failure> {
    let s = build_system(&ctx.system.epsilons()[..1], ctx.system.field())?;
    let p = s.field_params();
    let mut solutions = bethe::solve_common(&s, ctx.options())?;
    solutions.sort_by(|a, b| b.lambdas[0].total_cmp(&a.lambdas[0]));
    let mut lambda_dev: f64 = 0.0;
    let mut charge_dev: f64 = 0.0;
    for (sol, sign) in solutions.iter().zip([1.0, -1.0]) {
        lambda_dev = lambda_dev.max((sol.lambdas[0] - (-p.b_z + sign * p.b_mag)).abs());
        let r = bethe::charge_eigenvalues(&s, sol)?[0];
        charge_dev = charge_dev.max((r + sign * 0.5 * p.b_mag).abs());
    }
    let ed = fock::ed_reference(&s, &[1.0])?;
    let energies: Vec<f64> = ed.states.iter().map(|st| st.energy).collect();
    let ed_dev = (energies[0] + 0.5 * p.b_mag).abs().max((energies[1] - 0.5 * p.b_mag).abs());
    let checks = [
        Check::below("lambda_closed_form", lambda_dev, 1e-12),
        Check::below("charge_closed_form", charge_dev, 1e-12),
        Check::below("ed_levels", ed_dev, 1e-12),
    ];
    let pass = checks.iter().all(|c| c.pass);
    let mut report = Report::json(&json!({ "pass": pass, "n": 1, "checks": checks }))?;
    report.details.insert("pass".into(), json!(pass));
    if !pass {
        let bad: Vec<String> = checks.iter().filter(|c| !c.pass).map(|c| format!("{} {:e}", c.name, c.value)).collect();
        report.failure = Some(Failure::verification(bad.join("; ")));
    }
    Ok(report)
}

#[derive(Serialize)]
struct RootRecord {
    label: String,
    roots: Vec<[f64; 2]>,
    round_trip: f64,
    conjugation_defect: f64,
    root_form_residual: f64,
}

pub fn roots(ctx: &Context) -> Result<Report, Failure> {
    let s = &ctx.system;
    let common = bethe::solve_common(s, ctx.options())?;
    let records = common
        .par_iter()
        .map(|sol| {
            let lam = complex(&sol.lambdas);
            let r = roots::on_shell_roots(s, &lam)?;
            let gamma = roots::gamma_residuals(s, &r)?.iter().map(|z| z.norm()).fold(0.0, f64::max);
            Ok(RootRecord {
                label: sol.label.to_string(),
                roots: r.as_slice().iter().map(|&z| pair(z)).collect(),
                round_trip: roots::round_trip_error(s, &r, &lam),
                conjugation_defect: r.conjugation_defect(),
                root_form_residual: gamma,
            })
        })
        .collect::<Result<Vec<_>, GaudinError>>()?;
    Report::json(&records)
}

pub const CHECK_TOL: f64 = 1e-10;

/// Determinant overlaps between eigenstates; every pair `a ≤ b` unless
/// both labels are given.
pub fn overlap(ctx: &Context, a: Option<&str>, b: Option<&str>, check: bool) -> Result<Report, Failure> {
    let s = &ctx.system;
    let common = bethe::solve_common(s, ctx.options())?;
    let pairs: Vec<(usize, usize)> = match (a, b) {
        (Some(a), Some(b)) => {
            let index = |text: &str| -> Result<usize, Failure> {
                let label = find(&common, parse_label(text, s.n())?)?.label;
                Ok(common.iter().position(|c| c.label == label).unwrap_or_default())
            };
            vec![(index(a)?, index(b)?)]
        }
        (None, None) => (0..common.len()).flat_map(|i| (i..common.len()).map(move |j| (i, j))).collect(),
        _ => return Err(Failure::new(EXIT_CONFIG, "BadLabel", "give both --a and --b, or neither")),
    };
    let lambdas: Vec<Vec<C64>> = common.iter().map(|c| complex(&c.lambdas)).collect();
    let roots_of = |i: usize| roots::on_shell_roots(s, &lambdas[i]);
    let records = pairs
        .par_iter()
        .map(|&(i, j)| {
            let det = overlap::determinant_overlap(s, &lambdas[i], &lambdas[j])?;
            let mut record = json!({
                "a": common[i].label.to_string(),
                "b": common[j].label.to_string(),
                "overlap": scaled(&det),
            });
            let mut diff = 0.0;
            if check {
                let direct = overlap::direct_overlap(s, &roots_of(i)?, &roots_of(j)?)?;
                diff = det.relative_difference(&direct);
                record["direct"] = scaled(&direct);
                record["relative_difference"] = json!(diff);
            }
            Ok((record, diff))
        })
        .collect::<Result<Vec<_>, GaudinError>>()?;
    checked(records, check)
}

/// `⟨↑_up|n⟩` for every eigenstate, or only `label`.
pub fn project(ctx: &Context, up: &str, label: Option<&str>, check: bool) -> Result<Report, Failure> {
    let s = &ctx.system;
    let up_set = up_sites(parse_label(up, s.n())?);
    let common = bethe::solve_common(s, ctx.options())?;
    let chosen: Vec<&BetheSolution> = match label {
        Some(l) => vec![find(&common, parse_label(l, s.n())?)?],
        None => common.iter().collect(),
    };
    let records = chosen
        .par_iter()
        .map(|sol| {
            let lam = complex(&sol.lambdas);
            let det = overlap::canonical_projection(s, &lam, &up_set)?;
            let mut record = json!({ "label": sol.label.to_string(), "projection": scaled(&det) });
            let mut diff = 0.0;
            if check {
                let direct = overlap::direct_projection(s, &roots::on_shell_roots(s, &lam)?, &up_set)?;
                diff = det.relative_difference(&direct);
                record["direct"] = scaled(&direct);
                record["relative_difference"] = json!(diff);
            }
            Ok((record, diff))
        })
        .collect::<Result<Vec<_>, GaudinError>>()?;
    checked(records, check)
}

fn checked(records: Vec<(Value, f64)>, check: bool) -> Result<Report, Failure> {
    let worst = records.iter().map(|r| r.1).fold(0.0, f64::max);
    let mut report = Report::json(&records.into_iter().map(|r| r.0).collect::<Vec<_>>())?;
    if check {
        report.details.insert("max_relative_difference".into(), json!(worst));
        if !(worst < CHECK_TOL) {
            report.failure = Some(Failure::verification(format!(
                "determinant and Fock-space values differ by {worst:e} (tolerance {CHECK_TOL:e})"
            )));
        }
    }
    Ok(report)
}

pub const QUENCH_CHECK_TOL: f64 = 1e-8;

pub struct QuenchArgs<'a> {
    pub initial: &'a str,
    pub observable: Observable,
    pub t0: f64,
    pub tmax: f64,
    pub steps: usize,
    pub check: bool,
    pub json: bool,
}

pub fn quench(ctx: &Context, args: &QuenchArgs) -> Result<Report, Failure> {
    let s = &ctx.system;
    let spec = QuenchSpec {
        initial_up_set: up_sites(parse_label(args.initial, s.n())?),
        weights: ctx.weights.clone(),
        observable: args.observable,
        times: TimeGrid {
            t0: args.t0,
            t1: args.tmax,
            steps: args.steps,
        },
    };
    spec.validate(s)?;
    if s.field_params().b_perp_sq == 0.0 {
        return Err(GaudinError::ZeroInPlaneField.into());
    }
    let common = bethe::solve_common(s, ctx.options())?;
    let expansion = dynamics::eigen_expand(s, &spec.initial_up_set, &common, &spec.weights)?;
    let values = dynamics::evolve_observable(s, &spec, &expansion)?;
    let times = spec.times.points();

    let mut details = Map::new();
    details.insert("weights".into(), json!(ctx.weights));
    details.insert("weight_deviation".into(), json!(expansion.weight_deviation));
    details.insert("projection_mismatch".into(), json!(expansion.projection_mismatch));
    let mut failure = None;
    if args.check {
        let oracle = dynamics::direct_series(s, &spec)?;
        let worst = values.iter().zip(&oracle).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        details.insert("max_oracle_deviation".into(), json!(worst));
        if !(worst < QUENCH_CHECK_TOL) {
            failure = Some(Failure::verification(format!(
                "eigenbasis series differs from direct propagation by {worst:e} (tolerance {QUENCH_CHECK_TOL:e})"
            )));
        }
    }
    let payload = if args.json {
        let terms: Vec<Value> = expansion
            .terms
            .iter()
            .map(|t| json!({ "label": t.label.to_string(), "energy": t.energy, "coefficient": pair(t.coefficient) }))
            .collect();
        Payload::Json(json!({
            "times": times,
            "values": values,
            "expansion": terms,
            "weight_deviation": expansion.weight_deviation,
        }))
    } else {
        Payload::Series { times, values }
    };
    Ok(Report {
        payload,
        details,
        failure,
    })
}

pub fn write_payload(path: &std::path::Path, payload: &Payload) -> std::io::Result<()> {
    match payload {
        Payload::Json(v) => output::write_json(path, v),
        Payload::Series { times, values } => output::write_series(path, times, values),
    }
}
