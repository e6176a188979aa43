use gaudin::bethe::{self, BetheSolution, Frame, Label, SolverOptions};
use gaudin::overlap::determinant_overlap;
use gaudin::roots::{lagrange_unit_sum, lambdas_from_roots, RootSet};
use gaudin::{build_system, fock, SpinSystem, C64};
use proptest::prelude::*;

/// Distinct `ε` spaced at least 0.05 apart, in shuffled order, and a field
/// with `|B_⊥| ≥ 0.1`.
fn system(max_n: usize) -> impl Strategy<Value = SpinSystem> {
    (1..=max_n)
        .prop_flat_map(|n| {
            (
                -2.0..2.0f64,
                prop::collection::vec(0.05..1.0f64, n - 1),
                Just((0..n).collect::<Vec<usize>>()).prop_shuffle(),
                [-1.0..1.0f64, -1.0..1.0f64, -1.0..1.0f64],
            )
        })
        .prop_filter("in-plane field too small", |(_, _, _, b)| b[0].hypot(b[1]) >= 0.1)
        .prop_map(|(start, gaps, order, b)| {
            let mut sorted = vec![start];
            for g in gaps {
                sorted.push(sorted.last().unwrap() + g);
            }
            let eps: Vec<f64> = order.iter().map(|&i| sorted[i]).collect();
            build_system(&eps, b).unwrap()
        })
}

fn roots_for(s: &SpinSystem, seeds: &[(f64, f64)]) -> RootSet {
    RootSet::new(
        seeds
            .iter()
            .map(|&(re, im)| {
                let mut z = C64::new(re, im);
                // keep away from the poles
                while s.epsilons().iter().any(|&e| (z - e).norm() < 0.2) {
                    z += C64::new(0.0, 0.3);
                }
                z
            })
            .collect(),
    )
}

fn seeds(n: usize) -> impl Strategy<Value = Vec<(f64, f64)>> {
    prop::collection::vec((-3.0..4.0f64, -1.0..1.0f64), n)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn label_text_round_trips(bits in any::<u64>(), n in 1usize..=64) {
        let bits = if n == 64 { bits } else { bits & ((1 << n) - 1) };
        let label = Label::new(bits, n);
        prop_assert_eq!(Label::parse(&label.to_string()), Some(label));
    }

    #[test]
    fn frame_shift_round_trips(s in system(6), lam in prop::collection::vec(-50.0..50.0f64, 6)) {
        let sol = BetheSolution {
            frame: Frame::Rotated,
            lambdas: lam[..s.n()].to_vec(),
            label: Label::new(0, s.n()),
            residual: 0.0,
        };
        let back = bethe::shift_frame(&s, &bethe::shift_frame(&s, &sol));
        prop_assert_eq!(back.frame, Frame::Rotated);
        for (a, b) in back.lambdas.iter().zip(&sol.lambdas) {
            prop_assert!((a - b).abs() <= 1e-14 * (1.0 + b.abs()));
        }
    }

    #[test]
    fn charges_commute_and_sum_to_zeeman(s in system(4)) {
        let charges = fock::conserved_charges(&s);
        for i in 0..charges.len() {
            for j in i + 1..charges.len() {
                prop_assert!(fock::commutator_norm(&charges[i], &charges[j]).unwrap() < 1e-12);
            }
        }
        let mut total = fock::SparseOperator::zero(s.dim());
        for r in &charges {
            total = total.add(r).unwrap();
        }
        prop_assert!(total.sub(&fock::total_zeeman(&s)).unwrap().frobenius_norm() < 1e-13);
    }

    #[test]
    fn charge_sums_are_field_times_magnetization(s in system(4)) {
        let b = s.field_params().b_mag;
        for sol in bethe::solve_common(&s, &SolverOptions::default()).unwrap() {
            let total: f64 = bethe::charge_eigenvalues(&s, &sol).unwrap().iter().sum();
            let m = total / b;
            prop_assert!((2.0 * m - (2.0 * m).round()).abs() < 1e-8);
            prop_assert!(m.abs() <= s.n() as f64 / 2.0 + 1e-8);
        }
    }

    #[test]
    fn lambdas_ignore_root_order(s in system(5), raw in seeds(5), shift in 1usize..5) {
        let r = roots_for(&s, &raw[..s.n()]);
        let mut rotated = r.as_slice().to_vec();
        rotated.rotate_left(shift % s.n());
        let a = lambdas_from_roots(&s, &r).unwrap();
        let b = lambdas_from_roots(&s, &RootSet::new(rotated)).unwrap();
        for (x, y) in a.iter().zip(&b) {
            prop_assert!((x - y).norm() <= 1e-12 * (1.0 + x.norm()));
        }
    }

    #[test]
    fn lagrange_sum_is_one(s in system(6), raw in seeds(6)) {
        let r = roots_for(&s, &raw[..s.n()]);
        for i in 0..s.n() {
            prop_assert!((lagrange_unit_sum(s.epsilons(), &r, i).unwrap() - 1.0).norm() < 1e-9);
        }
    }

    #[test]
    fn overlap_is_symmetric(s in system(5), ra in seeds(5), rb in seeds(5)) {
        let la = lambdas_from_roots(&s, &roots_for(&s, &ra[..s.n()])).unwrap();
        let lb = lambdas_from_roots(&s, &roots_for(&s, &rb[..s.n()])).unwrap();
        let ab = determinant_overlap(&s, &la, &lb).unwrap();
        let ba = determinant_overlap(&s, &lb, &la).unwrap();
        prop_assert!(ab.relative_difference(&ba) < 1e-13);
    }
}
