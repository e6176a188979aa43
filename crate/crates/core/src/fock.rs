//! Exact `2^N` Fock-space engine.
//!
//! Basis states are bitmasks: bit `k` set means spin `k` points up, so the
//! reference state `|↓…↓⟩` is index 0. Everything here is brute force and
//! serves as the oracle for the analytic formulas in the other modules.

use nalgebra::DMatrix;
use twofloat::TwoFloat;

use crate::{GaudinError, Result, SpinSystem, C64};

const ZERO: C64 = C64::new(0.0, 0.0);
const ONE: C64 = C64::new(1.0, 0.0);

/// Tolerance used when an operator claims to be Hermitian.
pub const HERMITIAN_TOL: f64 = 1e-14;

/// Complex amplitudes over the bitmask basis. The represented vector is
/// `amplitudes · exp(log_scale)`; Bethe vectors are rescaled after every
/// raising operator so that the stored amplitudes stay of order one.
#[derive(Debug, Clone, PartialEq)]
pub struct FockVector {
    pub amplitudes: Vec<C64>,
    pub log_scale: f64,
}

impl FockVector {
    pub fn zeros(n: usize) -> Self {
        FockVector {
            amplitudes: vec![ZERO; 1 << n],
            log_scale: 0.0,
        }
    }

    /// The canonical basis state with the given bitmask.
    pub fn basis(n: usize, mask: usize) -> Self {
        let mut v = FockVector::zeros(n);
        v.amplitudes[mask] = ONE;
        v
    }

    /// `|↓…↓⟩`
    pub fn vacuum(n: usize) -> Self {
        FockVector::basis(n, 0)
    }

    /// `|↑_{i_1} … ↑_{i_M}⟩`
    pub fn from_up_set(n: usize, up_set: &[usize]) -> Result<Self> {
        Ok(FockVector::basis(n, up_set_mask(n, up_set)?))
    }

    pub fn from_amplitudes(amplitudes: Vec<C64>) -> Self {
        assert!(amplitudes.len().is_power_of_two());
        FockVector {
            amplitudes,
            log_scale: 0.0,
        }
    }

    pub fn dim(&self) -> usize {
        self.amplitudes.len()
    }

    /// Amplitude with the scale factor restored.
    pub fn amplitude(&self, mask: usize) -> C64 {
        self.amplitudes[mask] * self.log_scale.exp()
    }

    /// Norm of the stored amplitudes (scale factor not applied).
    pub fn stored_norm(&self) -> f64 {
        self.amplitudes.iter().map(|a| a.norm_sqr()).sum::<f64>().sqrt()
    }

    /// Natural log of the true norm.
    pub fn ln_norm(&self) -> f64 {
        self.stored_norm().ln() + self.log_scale
    }

    pub fn norm(&self) -> f64 {
        self.ln_norm().exp()
    }

    /// Unit-norm copy with `log_scale = 0`.
    pub fn normalized(&self) -> Self {
        let norm = self.stored_norm();
        FockVector {
            amplitudes: self.amplitudes.iter().map(|a| a / norm).collect(),
            log_scale: 0.0,
        }
    }

    /// Divides the stored amplitudes by their largest modulus and moves the
    /// factor into `log_scale`.
    pub fn rescale(&mut self) {
        let max = self.amplitudes.iter().map(|a| a.norm()).fold(0.0, f64::max);
        if max > 0.0 && max.is_finite() {
            for a in &mut self.amplitudes {
                *a /= max;
            }
            self.log_scale += max.ln();
        }
    }

    /// `⟨self|other⟩` on the stored amplitudes, without scale factors.
    pub fn inner_stored(&self, other: &FockVector) -> C64 {
        self.amplitudes
            .iter()
            .zip(&other.amplitudes)
            .map(|(a, b)| a.conj() * b)
            .sum()
    }

    /// `|⟨a|b⟩| / (‖a‖ ‖b‖)`
    pub fn abs_cosine(&self, other: &FockVector) -> f64 {
        self.inner_stored(other).norm() / (self.stored_norm() * other.stored_norm())
    }
}

/// Bitmask of a set of up spins, validating range and distinctness.
pub fn up_set_mask(n: usize, up_set: &[usize]) -> Result<usize> {
    let mut mask = 0usize;
    for &site in up_set {
        if site >= n {
            return Err(GaudinError::BadUpSet(format!("site {site} out of range for {n} spins")));
        }
        if mask & (1 << site) != 0 {
            return Err(GaudinError::BadUpSet(format!("site {site} repeated")));
        }
        mask |= 1 << site;
    }
    Ok(mask)
}

/// Row-compressed sparse matrix on the Fock space.
#[derive(Debug, Clone, PartialEq)]
pub struct SparseOperator {
    dim: usize,
    rows: Vec<Vec<(usize, C64)>>,
}

impl SparseOperator {
    /// Sums duplicate entries in double-double and drops exact zeros.
    pub fn from_triplets<I>(dim: usize, triplets: I) -> Self
    where
        I: IntoIterator<Item = (usize, usize, C64)>,
    {
        let mut rows: Vec<Vec<(usize, C64)>> = vec![Vec::new(); dim];
        for (r, c, v) in triplets {
            assert!(r < dim && c < dim, "entry ({r}, {c}) outside dimension {dim}");
            rows[r].push((c, v));
        }
        for row in &mut rows {
            row.sort_by_key(|&(c, _)| c);
            let mut merged: Vec<(usize, TwoFloat, TwoFloat)> = Vec::with_capacity(row.len());
            for &(c, v) in row.iter() {
                match merged.last_mut() {
                    Some((lc, re, im)) if *lc == c => {
                        *re += v.re;
                        *im += v.im;
                    }
                    _ => merged.push((c, v.re.into(), v.im.into())),
                }
            }
            *row = merged
                .into_iter()
                .map(|(c, re, im)| (c, C64::new(re.into(), im.into())))
                .filter(|&(_, v)| v != ZERO)
                .collect();
        }
        SparseOperator { dim, rows }
    }

    pub fn zero(dim: usize) -> Self {
        SparseOperator {
            dim,
            rows: vec![Vec::new(); dim],
        }
    }

    pub fn identity(dim: usize) -> Self {
        SparseOperator::from_triplets(dim, (0..dim).map(|i| (i, i, ONE)))
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn nnz(&self) -> usize {
        self.rows.iter().map(Vec::len).sum()
    }

    pub fn get(&self, row: usize, col: usize) -> C64 {
        self.rows[row]
            .binary_search_by_key(&col, |&(c, _)| c)
            .map(|idx| self.rows[row][idx].1)
            .unwrap_or(ZERO)
    }

    pub fn triplets(&self) -> impl Iterator<Item = (usize, usize, C64)> + '_ {
        self.rows
            .iter()
            .enumerate()
            .flat_map(|(r, row)| row.iter().map(move |&(c, v)| (r, c, v)))
    }

    pub fn apply(&self, x: &[C64]) -> Vec<C64> {
        assert_eq!(x.len(), self.dim);
        self.rows
            .iter()
            .map(|row| row.iter().map(|&(c, v)| v * x[c]).sum())
            .collect()
    }

    pub fn apply_vector(&self, v: &FockVector) -> FockVector {
        FockVector {
            amplitudes: self.apply(&v.amplitudes),
            log_scale: v.log_scale,
        }
    }

    /// `⟨a|self|b⟩` on stored amplitudes.
    pub fn matrix_element(&self, a: &[C64], b: &[C64]) -> C64 {
        self.rows
            .iter()
            .zip(a)
            .map(|(row, ar)| ar.conj() * row.iter().map(|&(c, v)| v * b[c]).sum::<C64>())
            .sum()
    }

    pub fn scale(&self, factor: C64) -> Self {
        SparseOperator::from_triplets(self.dim, self.triplets().map(|(r, c, v)| (r, c, v * factor)))
    }

    pub fn add(&self, other: &SparseOperator) -> Result<Self> {
        self.same_dim(other)?;
        Ok(SparseOperator::from_triplets(
            self.dim,
            self.triplets().chain(other.triplets()),
        ))
    }

    pub fn sub(&self, other: &SparseOperator) -> Result<Self> {
        self.add(&other.scale(-ONE))
    }

    /// `self · other`
    pub fn matmul(&self, other: &SparseOperator) -> Result<Self> {
        self.same_dim(other)?;
        let mut triplets = Vec::new();
        for (r, row) in self.rows.iter().enumerate() {
            for &(k, a) in row {
                for &(c, b) in &other.rows[k] {
                    triplets.push((r, c, a * b));
                }
            }
        }
        Ok(SparseOperator::from_triplets(self.dim, triplets))
    }

    pub fn adjoint(&self) -> Self {
        SparseOperator::from_triplets(self.dim, self.triplets().map(|(r, c, v)| (c, r, v.conj())))
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.triplets().map(|(_, _, v)| v.norm_sqr()).sum::<f64>().sqrt()
    }

    pub fn max_abs(&self) -> f64 {
        self.triplets().map(|(_, _, v)| v.norm()).fold(0.0, f64::max)
    }

    /// `max |A − A†|` over entries.
    pub fn hermiticity_defect(&self) -> f64 {
        self.triplets()
            .map(|(r, c, v)| (v - self.get(c, r).conj()).norm())
            .fold(0.0, f64::max)
    }

    pub fn is_hermitian(&self) -> bool {
        self.hermiticity_defect() < HERMITIAN_TOL
    }

    pub fn to_dense(&self) -> DMatrix<C64> {
        let mut m = DMatrix::from_element(self.dim, self.dim, ZERO);
        for (r, c, v) in self.triplets() {
            m[(r, c)] += v;
        }
        m
    }

    fn same_dim(&self, other: &SparseOperator) -> Result<()> {
        if self.dim == other.dim {
            Ok(())
        } else {
            Err(GaudinError::DimensionMismatch(self.dim, other.dim))
        }
    }
}

/// Frobenius norm of `ab − ba`. Every product is formed exactly and each
/// entry summed in double-double, so cancellation between the two
/// orderings leaves no rounding noise behind.
pub fn commutator_norm(a: &SparseOperator, b: &SparseOperator) -> Result<f64> {
    a.same_dim(b)?;
    let mut total = 0.0;
    let mut entries: std::collections::BTreeMap<usize, [TwoFloat; 2]> = Default::default();
    for r in 0..a.dim {
        entries.clear();
        for (x, y, sign) in [(a, b, 1.0), (b, a, -1.0)] {
            for &(k, u) in &x.rows[r] {
                for &(c, v) in &y.rows[k] {
                    let [re, im] = entries.entry(c).or_insert([TwoFloat::from(0.0); 2]);
                    *re += TwoFloat::new_mul(sign * u.re, v.re) - TwoFloat::new_mul(sign * u.im, v.im);
                    *im += TwoFloat::new_mul(sign * u.re, v.im) + TwoFloat::new_mul(sign * u.im, v.re);
                }
            }
        }
        total += entries
            .values()
            .map(|&[re, im]| f64::from(re).powi(2) + f64::from(im).powi(2))
            .sum::<f64>();
    }
    Ok(total.sqrt())
}

/// Single-site spin operators.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LocalKind {
    Raise,
    Lower,
    Z,
    X,
    Y,
}

/// `S⁺_site`, `S⁻_site`, `S^z_site`, `S^x_site` or `S^y_site`.
pub fn local_operator(system: &SpinSystem, kind: LocalKind, site: usize) -> Result<SparseOperator> {
    system.check_site(site)?;
    let dim = system.dim();
    let bit = 1usize << site;
    let half = C64::new(0.5, 0.0);
    let triplets: Vec<(usize, usize, C64)> = (0..dim)
        .flat_map(|mask| {
            let up = mask & bit != 0;
            let flipped = mask ^ bit;
            match kind {
                LocalKind::Raise if !up => vec![(flipped, mask, ONE)],
                LocalKind::Lower if up => vec![(flipped, mask, ONE)],
                LocalKind::Raise | LocalKind::Lower => vec![],
                LocalKind::Z => vec![(mask, mask, if up { half } else { -half })],
                LocalKind::X => vec![(flipped, mask, half)],
                // S^y = (S⁺ − S⁻) / 2i
                LocalKind::Y => {
                    let v = if up { C64::new(0.0, 0.5) } else { C64::new(0.0, -0.5) };
                    vec![(flipped, mask, v)]
                }
            }
        })
        .collect();
    Ok(SparseOperator::from_triplets(dim, triplets))
}

/// Triplets of `S_i · S_j` for `i ≠ j`, scaled by `factor`.
fn spin_dot_triplets(n: usize, i: usize, j: usize, factor: f64) -> impl Iterator<Item = (usize, usize, C64)> {
    let (bi, bj) = (1usize << i, 1usize << j);
    (0..1usize << n).flat_map(move |mask| {
        let aligned = (mask & bi != 0) == (mask & bj != 0);
        let diag = (mask, mask, C64::new(if aligned { 0.25 } else { -0.25 } * factor, 0.0));
        let flip = (!aligned).then(|| (mask ^ bi ^ bj, mask, C64::new(0.5 * factor, 0.0)));
        std::iter::once(diag).chain(flip)
    })
}

/// `S_i · S_j`
pub fn spin_dot(system: &SpinSystem, i: usize, j: usize) -> Result<SparseOperator> {
    system.check_site(i)?;
    system.check_site(j)?;
    if i == j {
        return Ok(SparseOperator::identity(system.dim()).scale(C64::new(0.75, 0.0)));
    }
    Ok(SparseOperator::from_triplets(
        system.dim(),
        spin_dot_triplets(system.n(), i, j, 1.0),
    ))
}

/// Triplets of `B·S_k`.
fn zeeman_triplets(system: &SpinSystem, k: usize) -> Vec<(usize, usize, C64)> {
    let p = system.field_params();
    let bit = 1usize << k;
    (0..system.dim())
        .flat_map(|mask| {
            let up = mask & bit != 0;
            let sz = if up { 0.5 } else { -0.5 };
            // B_x S^x + B_y S^y = (B₀⁻ S⁺ + B₀⁺ S⁻) / 2
            let off = if up { p.b_plus * 0.5 } else { p.b_minus * 0.5 };
            [(mask, mask, C64::new(p.b_z * sz, 0.0)), (mask ^ bit, mask, off)]
        })
        .collect()
}

/// `R_k = B·S_k + Σ_{j≠k} S_k·S_j / (ε_k − ε_j)`
pub fn conserved_charge(system: &SpinSystem, k: usize) -> Result<SparseOperator> {
    system.check_site(k)?;
    let eps = system.epsilons();
    let mut triplets = zeeman_triplets(system, k);
    for j in (0..system.n()).filter(|&j| j != k) {
        triplets.extend(spin_dot_triplets(system.n(), k, j, 1.0 / (eps[k] - eps[j])));
    }
    Ok(SparseOperator::from_triplets(system.dim(), triplets))
}

/// All `n` conserved charges.
pub fn conserved_charges(system: &SpinSystem) -> Vec<SparseOperator> {
    (0..system.n())
        .map(|k| conserved_charge(system, k).expect("site in range"))
        .collect()
}

/// `B · S_tot`
pub fn total_zeeman(system: &SpinSystem) -> SparseOperator {
    SparseOperator::from_triplets(
        system.dim(),
        (0..system.n()).flat_map(|k| zeeman_triplets(system, k)),
    )
}

/// `H = Σ_k α_k R_k`
pub fn weighted_hamiltonian(system: &SpinSystem, weights: &[f64]) -> Result<SparseOperator> {
    system.check_len(weights)?;
    let charges = conserved_charges(system);
    Ok(SparseOperator::from_triplets(
        system.dim(),
        charges
            .iter()
            .zip(weights)
            .flat_map(|(r, &a)| r.triplets().map(move |(i, j, v)| (i, j, v * a))),
    ))
}

/// `S⁺(u) = B₀⁺ + Σ_i S⁺_i / (u − ε_i)`
pub fn gaudin_raising(system: &SpinSystem, u: C64) -> Result<SparseOperator> {
    system.check_separated(u)?;
    let b_plus = system.field_params().b_plus;
    Ok(gaudin_generator(system, u, b_plus, LocalKind::Raise))
}

/// `S⁻(u) = B₀⁻ + Σ_i S⁻_i / (u − ε_i)`
pub fn gaudin_lowering(system: &SpinSystem, u: C64) -> Result<SparseOperator> {
    system.check_separated(u)?;
    let b_minus = system.field_params().b_minus;
    Ok(gaudin_generator(system, u, b_minus, LocalKind::Lower))
}

/// `S^z(u) = −B_z − Σ_i S^z_i / (u − ε_i)`
pub fn gaudin_sz(system: &SpinSystem, u: C64) -> Result<SparseOperator> {
    system.check_separated(u)?;
    let b_z = C64::new(-system.field_params().b_z, 0.0);
    Ok(gaudin_generator(system, u, b_z, LocalKind::Z))
}

fn gaudin_generator(system: &SpinSystem, u: C64, constant: C64, kind: LocalKind) -> SparseOperator {
    let dim = system.dim();
    let sign = if kind == LocalKind::Z { -ONE } else { ONE };
    let mut triplets: Vec<(usize, usize, C64)> = (0..dim).map(|m| (m, m, constant)).collect();
    for (i, &e) in system.epsilons().iter().enumerate() {
        let w = sign / (u - e);
        let local = local_operator(system, kind, i).expect("site in range");
        triplets.extend(local.triplets().map(|(r, c, v)| (r, c, v * w)));
    }
    SparseOperator::from_triplets(dim, triplets)
}

/// `S²(u) = S^z(u)² + ½[S⁺(u)S⁻(u) + S⁻(u)S⁺(u)]`, assembled from the
/// generator products.
pub fn transfer_matrix(system: &SpinSystem, u: C64) -> Result<SparseOperator> {
    let sz = gaudin_sz(system, u)?;
    let sp = gaudin_raising(system, u)?;
    let sm = gaudin_lowering(system, u)?;
    let half = C64::new(0.5, 0.0);
    sz.matmul(&sz)?
        .add(&sp.matmul(&sm)?.scale(half))?
        .add(&sm.matmul(&sp)?.scale(half))
}

/// The same transfer matrix written through its poles:
/// `|B|² + Σ_k [2 R_k/(u − ε_k) + (3/4)/(u − ε_k)²]`.
pub fn transfer_matrix_from_charges(system: &SpinSystem, u: C64) -> Result<SparseOperator> {
    system.check_separated(u)?;
    let p = system.field_params();
    let dim = system.dim();
    let scalar: C64 = system
        .epsilons()
        .iter()
        .map(|&e| 0.75 / ((u - e) * (u - e)))
        .sum::<C64>()
        + p.b_mag * p.b_mag;
    let mut triplets: Vec<(usize, usize, C64)> = (0..dim).map(|m| (m, m, scalar)).collect();
    for (k, &e) in system.epsilons().iter().enumerate() {
        let w = 2.0 / (u - e);
        triplets.extend(conserved_charge(system, k)?.triplets().map(|(r, c, v)| (r, c, v * w)));
    }
    Ok(SparseOperator::from_triplets(dim, triplets))
}

/// Applies `c + Σ_i S⁺_i / (u − ε_i)` in place, without building a matrix.
fn apply_raising_in_place(system: &SpinSystem, constant: C64, u: C64, v: &mut FockVector) {
    let weights: Vec<C64> = system.epsilons().iter().map(|&e| ONE / (u - e)).collect();
    let mut out: Vec<C64> = v.amplitudes.iter().map(|a| a * constant).collect();
    for (mask, &a) in v.amplitudes.iter().enumerate() {
        if a == ZERO {
            continue;
        }
        for (i, w) in weights.iter().enumerate() {
            let bit = 1usize << i;
            if mask & bit == 0 {
                out[mask | bit] += a * w;
            }
        }
    }
    v.amplitudes = out;
}

/// `Π_p S⁺(ν_p) |↓…↓⟩` for any number of parameters, rescaled after every
/// factor. `S⁺(u)` operators commute, so the order is irrelevant.
pub fn raising_product(system: &SpinSystem, params: &[C64]) -> Result<FockVector> {
    for &u in params {
        system.check_separated(u)?;
    }
    let b_plus = system.field_params().b_plus;
    let mut v = FockVector::vacuum(system.n());
    for &u in params {
        apply_raising_in_place(system, b_plus, u, &mut v);
        v.rescale();
    }
    Ok(v)
}

/// The common-frame Bethe state `Π_{p=1..N} S⁺(λ_p) |↓…↓⟩`.
pub fn bethe_vector(system: &SpinSystem, roots: &[C64]) -> Result<FockVector> {
    system.check_len(roots)?;
    if system.field_params().b_perp_sq == 0.0 {
        return Err(GaudinError::ZeroInPlaneField);
    }
    raising_product(system, roots)
}

/// One exact eigenstate of `H = Σ α_k R_k`.
#[derive(Debug, Clone)]
pub struct EdState {
    pub energy: f64,
    pub vector: FockVector,
    /// `⟨v|R_k|v⟩` for every charge.
    pub charges: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct EdSpectrum {
    /// Sorted by energy.
    pub states: Vec<EdState>,
    /// Smallest gap between consecutive energies.
    pub min_gap: f64,
}

/// Energies closer than this are reported as degenerate.
pub const DEGENERACY_TOL: f64 = 1e-10;

impl EdSpectrum {
    pub fn is_degenerate(&self) -> bool {
        self.min_gap < DEGENERACY_TOL
    }

    pub fn charge_vectors(&self) -> Vec<Vec<f64>> {
        self.states.iter().map(|s| s.charges.clone()).collect()
    }
}

/// Full dense diagonalization of `H = Σ α_k R_k`, with the expectation of
/// every charge in every eigenvector.
pub fn ed_reference(system: &SpinSystem, weights: &[f64]) -> Result<EdSpectrum> {
    let h = weighted_hamiltonian(system, weights)?;
    let eig = nalgebra::SymmetricEigen::try_new(h.to_dense(), f64::EPSILON, 0)
        .ok_or_else(|| GaudinError::Eigensolver("Hermitian eigensolver did not converge".into()))?;
    let mut order: Vec<usize> = (0..system.dim()).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
    let charges = conserved_charges(system);
    let states: Vec<EdState> = order
        .iter()
        .map(|&idx| {
            let col: Vec<C64> = eig.eigenvectors.column(idx).iter().cloned().collect();
            let r = charges.iter().map(|op| op.matrix_element(&col, &col).re).collect();
            EdState {
                energy: eig.eigenvalues[idx],
                vector: FockVector::from_amplitudes(col),
                charges: r,
            }
        })
        .collect();
    let min_gap = states
        .windows(2)
        .map(|w| w[1].energy - w[0].energy)
        .fold(f64::INFINITY, f64::min);
    if min_gap < DEGENERACY_TOL {
        log::warn!("near-degenerate spectrum (gap {min_gap:e}); matching relies on charge vectors");
    }
    Ok(EdSpectrum { states, min_gap })
}

/// Nearest-neighbour assignment of candidate charge vectors to reference
/// ones under Euclidean distance.
#[derive(Debug, Clone)]
pub struct ChargeMatching {
    /// `assignment[i]` is the reference index matched to candidate `i`.
    pub assignment: Vec<usize>,
    pub distances: Vec<f64>,
    /// Every reference used exactly once.
    pub bijective: bool,
}

impl ChargeMatching {
    pub fn max_distance(&self) -> f64 {
        self.distances.iter().cloned().fold(0.0, f64::max)
    }

    pub fn is_perfect(&self, tol: f64) -> bool {
        self.bijective && self.max_distance() < tol
    }
}

pub fn match_charge_vectors(candidates: &[Vec<f64>], reference: &[Vec<f64>]) -> ChargeMatching {
    let dist = |a: &[f64], b: &[f64]| {
        a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt()
    };
    let mut used = vec![false; reference.len()];
    let mut bijective = candidates.len() == reference.len();
    let (assignment, distances): (Vec<usize>, Vec<f64>) = candidates
        .iter()
        .map(|c| {
            let (best, d) = reference
                .iter()
                .enumerate()
                .map(|(j, r)| (j, dist(c, r)))
                .fold((usize::MAX, f64::INFINITY), |b, x| if x.1 < b.1 { x } else { b });
            if best == usize::MAX || used[best] {
                bijective = false;
            } else {
                used[best] = true;
            }
            (best, d)
        })
        .unzip();
    ChargeMatching {
        assignment,
        distances,
        bijective,
    }
}
