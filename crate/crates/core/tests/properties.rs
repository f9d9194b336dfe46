//! Property tests for the scale equation, fold plans and curve metrics.

use pense::cv::{make_folds, metric_rmspe, metric_tau, weight_similarity};
use pense::diagnostics::total_variation;
use pense::mscale::{m_scale, MScaleSpec};
use pense::rho::{calibrate_cutoff, RhoKind};
use proptest::prelude::*;

fn residuals_strategy() -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(-50.0..50.0f64, 5..80)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn m_scale_fixed_point_and_equivariance(r in residuals_strategy(), c in 0.05..20.0f64) {
        let rho = calibrate_cutoff(RhoKind::Bisquare, 0.5).unwrap();
        let spec = MScaleSpec::new(0.5);
        prop_assume!(r.iter().filter(|v| **v != 0.0).count() * 2 > r.len());
        let sigma = m_scale(&r, &rho, &spec).unwrap();
        prop_assert!(sigma > 0.0);
        let mean_rho: f64 = r.iter().map(|v| rho.rho_normalized(v / sigma)).sum::<f64>() / r.len() as f64;
        prop_assert!((mean_rho - spec.delta).abs() < spec.tolerance);

        let scaled: Vec<f64> = r.iter().map(|v| c * v).collect();
        let sigma_c = m_scale(&scaled, &rho, &spec).unwrap();
        prop_assert!((sigma_c - c * sigma).abs() <= 1e-8 * sigma_c.max(1.0));
    }

    #[test]
    fn fold_plans_partition(n in 4usize..200, k_frac in 0.0..1.0f64, seed in any::<u64>()) {
        let k = 2 + ((n - 2) as f64 * k_frac) as usize;
        let k = k.min(n);
        let plan = make_folds(n, k, seed).unwrap();
        let mut seen = vec![0usize; n];
        let mut sizes = vec![0usize; k];
        for f in 0..k {
            for i in plan.fold_rows(f) {
                seen[i] += 1;
                sizes[f] += 1;
            }
        }
        prop_assert!(seen.iter().all(|s| *s == 1));
        let lo = sizes.iter().min().unwrap();
        let hi = sizes.iter().max().unwrap();
        prop_assert!(hi - lo <= 1);
    }

    #[test]
    fn tau_caps_below_rmspe_and_matches_at_infinity(e in prop::collection::vec(-30.0..30.0f64, 2..50), c in 0.5..10.0f64) {
        let rmspe = metric_rmspe(&e).unwrap();
        let tau = metric_tau(&e, c).unwrap();
        let tau_inf = metric_tau(&e, f64::INFINITY).unwrap();
        // Truncation only ever shrinks the estimate.
        prop_assert!(tau <= tau_inf + 1e-12);
        prop_assert!((tau_inf - rmspe).abs() <= 1e-10 * rmspe.max(1.0));
    }

    #[test]
    fn similarity_bounded_and_affine_invariant(
        w in prop::collection::vec(0.0..5.0f64, 3..40),
        a in 0.1..4.0f64,
        b in -2.0..2.0f64,
    ) {
        prop_assume!(w.iter().any(|v| (v - w[0]).abs() > 1e-9));
        let w2: Vec<f64> = w.iter().map(|v| a * v + b).collect();
        let sim = weight_similarity(&w, &w2).unwrap();
        prop_assert!((sim - 1.0).abs() < 1e-9);
        let rev: Vec<f64> = w.iter().rev().copied().collect();
        if let Ok(s) = weight_similarity(&w, &rev) {
            prop_assert!((-1.0..=1.0).contains(&s));
        }
    }

    #[test]
    fn total_variation_dominates_net_change(trace in prop::collection::vec(-10.0..10.0f64, 2..60)) {
        let tv = total_variation(&trace);
        prop_assert!(tv + 1e-12 >= (trace[trace.len() - 1] - trace[0]).abs());
        // Constant traces are flat.
        let flat = vec![trace[0]; trace.len()];
        prop_assert_eq!(total_variation(&flat), 0.0);
    }
}
