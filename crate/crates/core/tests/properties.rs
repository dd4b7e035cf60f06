use bcp_core::bcp::{bcp_run, MetricMode, RunOptions};
use bcp_core::distances::{four_point, round_to_delta, ExtendedDistance};
use bcp_core::evolve::{random_delta_bm_tree, simulate, DeltaBmSpec, DeltaGrid, ModelSpec, G_STAR};
use bcp_core::harness::{run_trials, Aggregate, Regime};
use bcp_core::params::{derive_params, ParamOverrides, ParamsError};
use bcp_core::treekit::{newick_parse, newick_write, rf_distance, true_quartet_split};
use bcp_core::BitSeq;
use proptest::prelude::*;

fn spec(n: usize) -> DeltaBmSpec {
    DeltaBmSpec { n, f: 0.02, g: 0.12, delta: 0.02 }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn newick_round_trips(n in 2usize..40, seed in any::<u64>()) {
        let t = random_delta_bm_tree(&spec(n), seed).unwrap();
        let text = newick_write(&t);
        let back = newick_parse(&text).unwrap();
        prop_assert_eq!(newick_write(&back), text);
        prop_assert_eq!(rf_distance(&t, &back).unwrap(), 0);
    }

    #[test]
    fn generated_lengths_lie_on_the_grid(n in 2usize..30, seed in any::<u64>()) {
        let t = random_delta_bm_tree(&spec(n), seed).unwrap();
        let grid = DeltaGrid::new(0.02).unwrap();
        for (_, _, l) in t.edges() {
            prop_assert!((0.02..=0.12 + 1e-12).contains(&l));
            prop_assert!(grid.units_of(l).is_some());
        }
    }

    #[test]
    fn rf_is_a_symmetric_distance(n in 4usize..25, s1 in any::<u64>(), s2 in any::<u64>()) {
        let a = random_delta_bm_tree(&spec(n), s1).unwrap();
        let b = random_delta_bm_tree(&spec(n), s2).unwrap();
        let d = rf_distance(&a, &b).unwrap();
        prop_assert_eq!(d, rf_distance(&b, &a).unwrap());
        prop_assert_eq!(rf_distance(&a, &a).unwrap(), 0);
        prop_assert!(d <= 2 * (n - 3));
    }

    #[test]
    fn perfect_runs_are_exact_and_audit_clean(n in 4usize..40, seed in any::<u64>()) {
        let t = random_delta_bm_tree(&spec(n), seed).unwrap();
        let p = derive_params(0.02, 0.12, 0.02, n, 0.1, ParamOverrides { k: Some(1), ..Default::default() }).unwrap();
        let chars = simulate(&t, ModelSpec::CFN, 1, seed).unwrap();
        let out = bcp_run(&chars, &p, MetricMode::Perfect(t.clone()), &RunOptions { audit: Some(t.clone()), max_iterations: None }).unwrap();
        prop_assert_eq!(rf_distance(&out.tree, &t).unwrap(), 0);
        let audit = out.audit.unwrap();
        prop_assert!(audit.is_clean(), "{:?}", audit.violations);
        prop_assert!(out.iterations <= 2 * n);
    }

    #[test]
    fn four_point_recovers_internal_lengths(n in 4usize..20, seed in any::<u64>(), pick in any::<[prop::sample::Index; 4]>()) {
        let t = random_delta_bm_tree(&spec(n), seed).unwrap();
        let leaves = t.leaves().to_vec();
        let mut q: Vec<usize> = pick.iter().map(|i| leaves[i.index(leaves.len())]).collect();
        q.sort_unstable();
        q.dedup();
        prop_assume!(q.len() == 4);
        let split = true_quartet_split(&t, [q[0], q[1], q[2], q[3]]).unwrap().unwrap();
        let [(a, b), (c, d)] = split.pairs;
        let dm = t.distance_matrix();
        let e = |x, y| ExtendedDistance::new(dm.get(x, y));
        let nu = four_point(e(a, c), e(b, d), e(a, b), e(c, d));
        prop_assert!((nu.value() - split.internal_length).abs() < 1e-12);
        prop_assert!(split.internal_length >= 0.02 - 1e-12);
    }

    #[test]
    fn rounding_is_idempotent(x in 0.0f64..5.0) {
        let grid = DeltaGrid::new(0.02).unwrap();
        let once = round_to_delta(ExtendedDistance::new(x), Some(&grid));
        prop_assert_eq!(round_to_delta(once, Some(&grid)), once);
        prop_assert!((once.value() - x).abs() <= 0.01 + 1e-12);
    }

    #[test]
    fn dot_matches_the_sign_sum(signs in prop::collection::vec(prop_oneof![Just(1i8), Just(-1i8)], 1..300),
                               flips in prop::collection::vec(any::<bool>(), 300)) {
        let other: Vec<i8> = signs.iter().zip(&flips).map(|(&s, &f)| if f { -s } else { s }).collect();
        let naive: i64 = signs.iter().zip(&other).map(|(&a, &b)| (a * b) as i64).sum();
        prop_assert_eq!(BitSeq::from_signs(&signs).dot(&BitSeq::from_signs(&other)), naive);
    }

    #[test]
    fn subcritical_regimes_are_certified(g_frac in 0.2f64..0.999, n in 4usize..200) {
        let g = ((G_STAR * g_frac / 0.01).floor() * 0.01).max(0.02);
        match derive_params(0.01, g, 0.01, n, 0.1, ParamOverrides::default()) {
            Ok(p) => {
                prop_assert!(p.certificate().all_hold());
                prop_assert!(p.g < p.g_prime && p.g_prime < G_STAR);
            }
            // near g* the majority needs more than MAX_LEVELS levels
            Err(ParamsError::InvalidRegime(msg)) => {
                prop_assert!(g >= 0.16, "g = {g} rejected: {msg}");
                prop_assert!(msg.contains("no block depth"), "{msg}");
            }
        }
    }
}

#[test]
fn aggregates_recompute_from_records() {
    let recs = run_trials(&Regime::default(), 8, 20_000, 6, 3).unwrap();
    let again = run_trials(&Regime::default(), 8, 20_000, 6, 3).unwrap();
    let agg = Aggregate::of(&recs);
    assert_eq!(agg.successes, recs.iter().filter(|r| r.success).count());
    assert_eq!(agg.trials, 6);
    let strip = |r: &[bcp_core::harness::TrialRecord]| r.iter().map(|x| (x.seed, x.success, x.rf, x.iterations)).collect::<Vec<_>>();
    assert_eq!(strip(&recs), strip(&again));
}
