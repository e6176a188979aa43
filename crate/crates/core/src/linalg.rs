//! Small dense helpers on top of nalgebra.

use nalgebra::{ComplexField, DMatrix, DVector};
use num_complex::Complex;
use twofloat::TwoFloat;

use crate::C64;

pub(crate) type ComplexDd = Complex<TwoFloat>;

pub(crate) fn round_dd(z: ComplexDd) -> C64 {
    C64::new(z.re.into(), z.im.into())
}

/// Determinant as `phase · exp(ln_abs)` from partially pivoted LU, carried
/// out in double-double on a row-major `m × m` matrix. A singular matrix
/// yields `ln_abs = -inf` and a zero phase.
pub(crate) fn log_det_dd(m: usize, mut a: Vec<ComplexDd>) -> (C64, f64) {
    assert_eq!(a.len(), m * m);
    let size = |z: &ComplexDd| round_dd(*z).norm();
    let mut phase = C64::new(1.0, 0.0);
    let mut ln_abs = 0.0;
    for k in 0..m {
        let (pivot, max) = (k..m)
            .map(|r| (r, size(&a[r * m + k])))
            .fold((k, -1.0), |best, cur| if cur.1 > best.1 { cur } else { best });
        if max == 0.0 {
            return (C64::new(0.0, 0.0), f64::NEG_INFINITY);
        }
        if pivot != k {
            for c in 0..m {
                a.swap(pivot * m + c, k * m + c);
            }
            phase = -phase;
        }
        let d = a[k * m + k];
        ln_abs += max.ln();
        phase *= round_dd(d) / max;
        for r in (k + 1)..m {
            let factor = a[r * m + k] / d;
            for c in (k + 1)..m {
                let v = a[k * m + c];
                a[r * m + c] -= factor * v;
            }
        }
    }
    (phase, ln_abs)
}

/// Solves `a x = b` by fully pivoted LU with one round of iterative
/// refinement and returns the 1-norm condition number alongside.
pub(crate) fn solve_real(a: DMatrix<f64>, b: &DVector<f64>) -> (DVector<f64>, f64) {
    solve(a, b)
}

pub(crate) fn solve_complex(a: DMatrix<C64>, b: &DVector<C64>) -> (DVector<C64>, f64) {
    solve(a, b)
}

fn solve<T: ComplexField<RealField = f64>>(a: DMatrix<T>, b: &DVector<T>) -> (DVector<T>, f64) {
    let n = b.len();
    let nan = || DVector::from_element(n, T::from_real(f64::NAN));
    let lu = a.clone().full_piv_lu();
    let Some(inverse) = lu.try_inverse() else {
        return (nan(), f64::INFINITY);
    };
    let cond = norm1(&a) * norm1(&inverse);
    let Some(mut x) = lu.solve(b) else {
        return (nan(), f64::INFINITY);
    };
    if let Some(dx) = lu.solve(&(b - &a * &x)) {
        x += dx;
    }
    (x, cond)
}

fn norm1<T: ComplexField<RealField = f64>>(m: &DMatrix<T>) -> f64 {
    m.column_iter()
        .map(|c| c.iter().map(|v| v.clone().abs()).sum::<f64>())
        .fold(0.0, f64::max)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn to_dd(m: &DMatrix<C64>) -> Vec<ComplexDd> {
        (0..m.nrows())
            .flat_map(|r| (0..m.ncols()).map(move |c| (r, c)))
            .map(|(r, c)| ComplexDd::new(m[(r, c)].re.into(), m[(r, c)].im.into()))
            .collect()
    }

    #[test]
    fn log_det_matches_nalgebra() {
        let m = DMatrix::from_fn(4, 4, |i, j| {
            C64::new((i * 3 + j) as f64 * 0.37 - 1.0, ((i + 2 * j) % 5) as f64 * 0.21)
        });
        let (phase, ln_abs) = log_det_dd(4, to_dd(&m));
        let det = phase * ln_abs.exp();
        let reference = m.determinant();
        assert!((det - reference).norm() < 1e-12 * reference.norm().max(1.0));
    }

    #[test]
    fn log_det_singular() {
        let m = DMatrix::from_element(3, 3, C64::new(1.0, 0.0));
        let (_, ln_abs) = log_det_dd(3, to_dd(&m));
        assert!(ln_abs < -20.0);
    }

    #[test]
    fn solve_reports_condition() {
        let a = DMatrix::from_row_slice(2, 2, &[2.0, 0.0, 0.0, 0.5]);
        let (x, cond) = solve_real(a, &DVector::from_vec(vec![2.0, 1.0]));
        assert!((x[0] - 1.0).abs() < 1e-15 && (x[1] - 2.0).abs() < 1e-15);
        assert!((cond - 4.0).abs() < 1e-12);
    }

    #[test]
    fn solve_is_accurate_on_cauchy_like_matrices() {
        // off-diagonal 1/(e_i - e_j) with nearly coincident e, as in the charge Jacobians
        let e = [3.85, 2.32, 1.61, 3.52, 5.35, 2.90, 3.77, 4.41];
        let a = DMatrix::from_fn(8, 8, |i, j| {
            if i == j {
                (i as f64 - 3.5) * 1.7
            } else {
                1.0 / (e[i] - e[j])
            }
        });
        let b = DVector::from_fn(8, |i, _| (i as f64).sin());
        let (x, cond) = solve_real(a.clone(), &b);
        assert!(cond.is_finite());
        assert!((&a * x - b).amax() < 1e-12);
    }
}
