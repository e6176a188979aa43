#![allow(dead_code)]

use gaudin::{build_system, SpinSystem};
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// `ε` uniform in `[0, n]` with a minimum spacing, `B` with `|B_⊥| ≥ 0.1`.
pub fn random_system(rng: &mut impl Rng, n: usize) -> SpinSystem {
    let eps = loop {
        let mut e: Vec<f64> = (0..n).map(|_| rng.gen_range(0.0..n as f64)).collect();
        let mut sorted = e.clone();
        sorted.sort_by(f64::total_cmp);
        if sorted.windows(2).all(|w| w[1] - w[0] > 0.05) {
            e.shrink_to_fit();
            break e;
        }
    };
    build_system(&eps, random_field(rng)).unwrap()
}

pub fn random_field(rng: &mut impl Rng) -> [f64; 3] {
    loop {
        let b: [f64; 3] = [rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)];
        if b[0].hypot(b[1]) >= 0.1 {
            return b;
        }
    }
}

pub fn random_weights(rng: &mut impl Rng, n: usize) -> Vec<f64> {
    (0..n).map(|_| rng.gen_range(0.5..1.5)).collect()
}

/// Off-shell roots: complex, kept at least 0.2 away from every `ε`.
pub fn random_roots(rng: &mut impl Rng, system: &SpinSystem, count: usize, complex: bool) -> gaudin::roots::RootSet {
    let n = system.n() as f64;
    let roots = (0..count)
        .map(|_| loop {
            let z = gaudin::C64::new(
                rng.gen_range(-1.0..n + 1.0),
                if complex { rng.gen_range(-1.0..1.0) } else { 0.0 },
            );
            if system.epsilons().iter().all(|&e| (z - e).norm() > 0.2) {
                break z;
            }
        })
        .collect();
    gaudin::roots::RootSet::new(roots)
}

/// Random subset of `0..n`, in random order.
pub fn random_up_set(rng: &mut impl Rng, n: usize) -> Vec<usize> {
    use rand::seq::SliceRandom;
    let mut sites: Vec<usize> = (0..n).collect();
    sites.shuffle(rng);
    let m = rng.gen_range(0..=n);
    sites.truncate(m);
    sites
}
