use proptest::prelude::*;

use unifews::synthetic::{erdos_renyi, rng};
use unifews::{
    masked_spmm, propagate, random_mask, sparsify_edges_nodewise, sparsify_weights, DenseMatrix, EdgeMask,
    PropagationScheme, ThresholdPolicy,
};

fn instance(n: usize, p: f64, seed: u64, f: usize) -> (unifews::CsrGraph, DenseMatrix) {
    let t = erdos_renyi(n, p, seed).add_self_loops().normalize_adjacency(0.5).unwrap();
    let x = DenseMatrix::random_uniform(n, f, -1.0, 1.0, &mut rng(seed.wrapping_add(1)));
    (t, x)
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 128, failure_persistence: None, ..ProptestConfig::default() })]

    #[test]
    fn hop_masks_only_shrink(n in 2usize..30, p in 0.05f64..0.6, seed in any::<u64>(), delta in 0.0f64..0.3, hops in 1usize..6) {
        let (t, x) = instance(n, p, seed, 3);
        let policy = ThresholdPolicy::new(delta, 0.0).unwrap();
        let trace = propagate(&t, &x, &PropagationScheme::sgc(hops), &policy).unwrap();
        prop_assert!(trace.masks.is_monotone());
        let etas: Vec<f64> = trace.stats.iter().map(|s| s.eta_a).collect();
        prop_assert!(etas.windows(2).all(|w| w[1] >= w[0]), "{:?}", etas);
    }

    #[test]
    fn higher_thresholds_keep_subsets(n in 2usize..30, p in 0.05f64..0.6, seed in any::<u64>(), a in 0.0f64..0.3, b in 0.0f64..0.3) {
        let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
        let (t, x) = instance(n, p, seed, 4);
        let full = EdgeMask::full(t.nnz());
        let (m_lo, _) = sparsify_edges_nodewise(&t, &x, lo, &full, false).unwrap();
        let (m_hi, _) = sparsify_edges_nodewise(&t, &x, hi, &full, false).unwrap();
        prop_assert!(m_hi.is_subset_of(&m_lo));

        let w = DenseMatrix::random_uniform(4, 5, -1.0, 1.0, &mut rng(seed));
        let (_, s_lo) = sparsify_weights(&w, &x, lo).unwrap();
        let (_, s_hi) = sparsify_weights(&w, &x, hi).unwrap();
        prop_assert!(s_hi.eta_w >= s_lo.eta_w);
    }

    #[test]
    fn full_mask_matches_plain_product(n in 1usize..25, p in 0.0f64..0.7, seed in any::<u64>(), skip in any::<bool>()) {
        let (t, x) = instance(n, p, seed, 2);
        let out = masked_spmm(&t, &EdgeMask::full(t.nnz()), &x, skip).unwrap();
        let mut expect = unifews::spmm(&t, &x).unwrap();
        if skip {
            expect = expect.add(&x).unwrap();
        }
        prop_assert!(out.sub(&expect).unwrap().max_abs() <= 1e-12);
    }

    #[test]
    fn random_mask_drops_the_rounded_fraction(nnz in 0usize..500, eta in 0.0f64..=1.0, seed in any::<u64>()) {
        let m = random_mask(nnz, eta, seed).unwrap();
        prop_assert_eq!(m.len(), nnz);
        prop_assert_eq!(m.dropped(), (eta * nnz as f64).round() as usize);
    }
}
