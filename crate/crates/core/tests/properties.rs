//! Property tests for the invariants of every module.

use proptest::prelude::*;

use cka_core::channel_stats::{
    exact_yield, exact_yield_table, pr_click_given_signs, pr_click_kg, qber, qber_bayes,
    required_tuples,
};
use cka_core::decoy::DecoyContext;
use cka_core::fock_oracle::{click_distribution, simulate_yield, FockEnsemble};
use cka_core::interferometer::{build_transform, column_overlap};
use cka_core::keyrate::{assemble_rate, multicast_bound_full, multicast_bound_star};
use cka_core::phase_error::{phase_error_bound, CatCoefficients};
use cka_core::sweep::{db_to_eta, SweepConfig};
use cka_core::tables::even_tuples;
use cka_core::{GainTable, PhotonTuple, ProtocolParams};

/// Parameters of a network small enough for the Fock simulation.
fn small_params() -> impl Strategy<Value = ProtocolParams> {
    (
        2usize..=4,
        0u32..=1,
        0.0..1.5f64,
        0.0..=1.0f64,
        0.0..1e-3f64,
        -1.0..1.0f64,
        -3.2..3.2f64,
    )
        .prop_map(|(n, extra, alpha, eta, pd, theta, phi)| {
            let base = ProtocolParams::new(n).layers;
            ProtocolParams::new(n)
                .with_layers(base + extra)
                .with_alpha(alpha)
                .with_eta(eta)
                .with_dark_count(pd)
                .with_misalignment(theta, phi)
        })
}

fn signs(n: usize) -> impl Strategy<Value = Vec<i8>> {
    proptest::collection::vec(prop_oneof![Just(1i8), Just(-1i8)], n)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn columns_are_orthogonal(s in 1u32..=6, a in 0usize..64, b in 0usize..64) {
        let t = build_transform(s).unwrap();
        let m = t.modes();
        let (i, j) = (a % m, b % m);
        let expected = if i == j { m as i64 } else { 0 };
        prop_assert_eq!(column_overlap(&t, i, j).unwrap(), expected);
    }

    #[test]
    fn detectors_are_equivalent_after_relabelling(
        (p, x) in small_params().prop_flat_map(|p| { let n = p.n_parties; (Just(p), signs(n)) }),
        j_raw in 0usize..8,
    ) {
        let t = p.transform().unwrap();
        let j = j_raw % t.modes();
        // party i flips its sign whenever f(j, i) = -1
        let relabelled: Vec<i8> = x
            .iter()
            .enumerate()
            .map(|(i, &s)| s * t.sign(j, i) as i8)
            .collect();
        let at_j = pr_click_given_signs(&p, j, &relabelled).unwrap();
        let at_0 = pr_click_given_signs(&p, 0, &x).unwrap();
        prop_assert!((at_j - at_0).abs() < 1e-12, "{} vs {}", at_j, at_0);
    }

    #[test]
    fn qber_matches_bayes_construction(p in small_params(), party_raw in 1usize..4, j_raw in 0usize..8) {
        prop_assume!(pr_click_kg(&p).unwrap() > 0.0);
        let party = 1 + party_raw % (p.n_parties - 1);
        let j = j_raw % p.modes();
        let closed = qber(&p).unwrap();
        let bayes = qber_bayes(&p, j, party).unwrap();
        prop_assert!((closed - bayes).abs() < 1e-12, "{} vs {}", closed, bayes);
    }

    #[test]
    fn click_probability_budget(p in small_params()) {
        let m = p.modes() as f64;
        prop_assert!(m * pr_click_kg(&p).unwrap() <= 1.0 + m * p.p_dark + 1e-15);
    }

    #[test]
    fn single_photon_yield_is_linear_in_eta(n in 2usize..=5, eta in 0.0..=1.0f64) {
        let p = ProtocolParams::new(n).with_eta(eta);
        let mut counts = vec![0u32; n];
        counts[0] = 1;
        let y = exact_yield(&p, &PhotonTuple::new(counts)).unwrap();
        prop_assert!((y - eta / p.modes() as f64).abs() < 1e-15);
    }

    #[test]
    fn decoy_bounds_stay_in_unit_interval(
        n in 1usize..=4,
        raw in proptest::collection::vec(0.0..0.2f64, 16),
        b0 in 0.1..1.0f64,
    ) {
        let gains = GainTable::new(n, (b0, 0.0), raw[..1 << n].to_vec()).unwrap();
        let ctx = DecoyContext::new(gains).unwrap();
        for t in even_tuples(n, 4) {
            let u = ctx.yield_upper_bound(&t).unwrap();
            prop_assert!((0.0..=1.0).contains(&u));
        }
        for h in 0..1usize << n {
            prop_assert!(ctx.b_of_h(h).unwrap().is_finite());
        }
    }

    #[test]
    fn phase_error_grows_with_any_yield(
        n in 2usize..=4,
        alpha in 0.01..0.8f64,
        eta in 0.01..1.0f64,
        pick in 0usize..100,
        bump in 0.0..0.5f64,
    ) {
        let p = ProtocolParams::new(n).with_alpha(alpha).with_eta(eta).with_dark_count(1e-7);
        let table = exact_yield_table(&p, &required_tuples(n, 4)).unwrap();
        let pr = pr_click_kg(&p).unwrap();
        let base = phase_error_bound(&p, &table, pr).unwrap().raw;

        let tuples: Vec<PhotonTuple> = table.iter().map(|(t, _)| t.clone()).collect();
        let target = &tuples[pick % tuples.len()];
        let mut bumped = cka_core::YieldTable::new(n, table.kind(), table.symmetry());
        for (t, y) in table.iter() {
            let v = if t == target { (y + bump).min(1.0) } else { y };
            bumped.insert(t, v).unwrap();
        }
        let raised = phase_error_bound(&p, &bumped, pr).unwrap().raw;
        prop_assert!(raised >= base * (1.0 - 1e-14), "{} < {}", raised, base);
    }

    #[test]
    fn cat_components_partition_the_norm(alpha in 0.0..3.0f64) {
        let cat = CatCoefficients::new(alpha);
        let total: f64 = (0..=60)
            .map(|n| cat.c(n, 0).powi(2) + cat.c(n, 1).powi(2))
            .sum();
        prop_assert!((total - 1.0).abs() < 1e-12);
    }

    #[test]
    fn rate_falls_as_qber_rises(
        pr in 1e-8..1e-2f64,
        qz in 0.0..0.3f64,
        qx in 0.0..0.5f64,
        dq in 0.0..0.2f64,
    ) {
        let lo = assemble_rate(4.0, pr, (qx).min(0.5), qz, false).unwrap();
        let hi = assemble_rate(4.0, pr, (qx + dq).min(0.5), qz, false).unwrap();
        prop_assert!(hi <= lo);
    }

    #[test]
    fn full_network_bound_is_a_multiple(eta in 0.001..0.999f64, n in 2usize..10) {
        let r1 = multicast_bound_star(eta).unwrap();
        prop_assert_eq!(multicast_bound_full(eta, n).unwrap(), (n - 1) as f64 * r1);
    }

    #[test]
    fn loss_conversion_inverts(eta in 1e-6..=1.0f64) {
        let back = db_to_eta(-20.0 * eta.log10()).unwrap();
        prop_assert!((back - eta).abs() < 1e-14);
    }

    #[test]
    fn config_text_round_trips(parties in 2usize..8, start in 0.0..50.0f64, span in 0.0..50.0f64, step in 0.1..5.0f64) {
        let cfg = SweepConfig {
            parties,
            loss_start: start,
            loss_stop: start + span,
            loss_step: step,
            ..SweepConfig::default()
        };
        let back = SweepConfig::parse(&cfg.to_text().unwrap()).unwrap();
        prop_assert_eq!(back, cfg);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn simulated_click_patterns_are_complete(
        p in small_params(),
        raw in proptest::collection::vec(0u32..=2, 4),
    ) {
        let n = p.n_parties;
        let mut counts = raw[..n].to_vec();
        while counts.iter().sum::<u32>() > 4 {
            let i = counts.iter().position(|&c| c > 0).unwrap();
            counts[i] -= 1;
        }
        let total: f64 = click_distribution(&p, &PhotonTuple::new(counts.clone())).unwrap().iter().sum();
        prop_assert!((total - 1.0).abs() < 1e-10);
        // the simulation itself rejects detector-dependent single clicks
        prop_assert!(simulate_yield(&p, &PhotonTuple::new(counts)).is_ok());
    }

    #[test]
    fn loss_preserves_ensemble_weight(
        counts in proptest::collection::vec(0u32..=2, 1..=4),
        eta in 0.0..=1.0f64,
    ) {
        let e = FockEnsemble::lossy_number_state(&counts, eta, 8).unwrap();
        prop_assert!((e.total_weight() - 1.0).abs() < 1e-12);
    }
}
