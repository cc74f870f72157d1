use dmaware_core::active_learning::{
    lookahead_type_s, score, score_dm_aware, select_query, Answer, Criterion, LookaheadSettings, ModelSpec, PoolState,
    Query, QueryKind,
};
use dmaware_core::datagen::{gen_bernoulli_rbf, gen_sigmoid_continuous, BernoulliRbfConfig, SigmoidGenConfig};
use dmaware_core::models::{BasisConfig, BlrConfig, GaussianPredictive, LogisticModel};
use dmaware_core::reliability::{decide, estimate_type_s_gaussian, mmd, DecisionOrientation};
use dmaware_core::{Action, Dataset, ExecMode};
use proptest::prelude::*;

const ORIENTS: [DecisionOrientation; 2] = [DecisionOrientation::HigherIsBetter, DecisionOrientation::LowerIsBetter];

fn gamma(m: f64, v: f64) -> f64 {
    estimate_type_s_gaussian(&GaussianPredictive::new(m, v), DecisionOrientation::HigherIsBetter)
        .unwrap()
        .gamma_hat
}

fn unit_rows(n: usize) -> impl Strategy<Value = Vec<(f64, bool, f64)>> {
    proptest::collection::vec((-3.0f64..3.0, any::<bool>(), -2.0f64..2.0), n)
}

fn dataset(rows: &[(f64, bool, f64)], binary: bool) -> Dataset {
    Dataset::factual(
        rows.iter().map(|r| vec![r.0]).collect(),
        rows.iter().map(|r| Action::from_bit(r.1)).collect(),
        rows.iter()
            .map(|r| if binary { f64::from(u8::from(r.2 > 0.0)) } else { r.2 })
            .collect(),
    )
    .unwrap()
}

fn blr_spec() -> ModelSpec {
    ModelSpec::Blr {
        basis: BasisConfig::three_rbf(),
        cfg: BlrConfig {
            prior_variance: 1.0,
            noise_variance: 0.2,
        },
    }
}

fn state(rows: &[(f64, bool, f64)], spec: ModelSpec, target: f64, seed: u64) -> PoolState {
    let kind = match spec {
        ModelSpec::Comparative { .. } => QueryKind::Comparative,
        _ => QueryKind::Counterfactual,
    };
    let binary = matches!(spec, ModelSpec::Logistic { .. } | ModelSpec::Comparative { .. });
    let orient = if binary { DecisionOrientation::LowerIsBetter } else { DecisionOrientation::HigherIsBetter };
    PoolState::new(
        dataset(rows, binary),
        vec![target],
        orient,
        spec,
        kind,
        LookaheadSettings::default(),
        seed,
    )
    .unwrap()
}

/// Exhaustive argbest with the documented tie-break.
fn exhaustive_best(s: &PoolState, c: Criterion) -> Query {
    let mut pool = s.pool().to_vec();
    pool.sort_by(|a, b| a.tie_order(b));
    let scored: Vec<(Query, f64)> = pool.iter().map(|q| (*q, score(s, c, q).unwrap())).collect();
    let mut best = scored[0];
    for &(q, v) in &scored[1..] {
        let better = if c.minimizes() { v < best.1 } else { v > best.1 };
        if better {
            best = (q, v);
        }
    }
    best.0
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]

    #[test]
    fn gamma_hat_is_in_range_and_half_at_zero(m in -50.0f64..50.0, v in 1e-8f64..1e4) {
        let g = gamma(m, v);
        prop_assert!((0.0..=0.5).contains(&g));
        prop_assert_eq!(gamma(0.0, v), 0.5);
    }

    #[test]
    fn gamma_hat_decreases_in_abs_mean(a in 0.01f64..5.0, da in 0.01f64..2.0, v in 0.1f64..10.0) {
        let (lo, hi) = (gamma(a, v), gamma(a + da, v));
        prop_assert!(hi < lo, "{hi} !< {lo}");
        prop_assert_eq!(gamma(-a, v), lo);
    }

    #[test]
    fn gamma_hat_increases_in_variance(m in 0.05f64..5.0, v in 0.05f64..10.0, dv in 0.05f64..5.0) {
        prop_assert!(gamma(m, v + dv) > gamma(m, v));
    }

    #[test]
    fn gamma_hat_is_scale_invariant(m in -5.0f64..5.0, sd in 0.1f64..5.0, c in 0.01f64..100.0) {
        let g = gamma(m, sd * sd);
        let gs = gamma(c * m, (c * sd) * (c * sd));
        prop_assert!((g - gs).abs() <= 1e-12, "{g} vs {gs}");
    }

    #[test]
    fn decide_ignores_a_common_shift(m1 in -400i32..400, m0 in -400i32..400, shift in -4000i32..4000) {
        // eighths keep the arithmetic exact
        let (m1, m0, c) = (m1 as f64 / 8.0, m0 as f64 / 8.0, shift as f64 / 8.0);
        for o in ORIENTS {
            let base = decide(&GaussianPredictive::new(m1, 1.0), &GaussianPredictive::new(m0, 2.0), o);
            let moved = decide(&GaussianPredictive::new(m1 + c, 1.0), &GaussianPredictive::new(m0 + c, 2.0), o);
            prop_assert_eq!(base, moved);
        }
    }

    #[test]
    fn mmd_axioms(
        a in proptest::collection::vec(proptest::collection::vec(-2.0f64..2.0, 2), 1..30),
        b in proptest::collection::vec(proptest::collection::vec(-2.0f64..2.0, 2), 1..30),
        rot in 0usize..30,
    ) {
        let ab = mmd(&a, &b, 0.8).unwrap().mmd;
        let ba = mmd(&b, &a, 0.8).unwrap().mmd;
        prop_assert!(ab >= 0.0);
        prop_assert!((ab * ab - ba * ba).abs() < 1e-12);
        let mut perm = a.clone();
        perm.rotate_left(rot % a.len());
        let same = mmd(&a, &perm, 0.8).unwrap().mmd;
        prop_assert!(same * same < 1e-12);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn laplace_mode_is_stationary(rows in unit_rows(24), keep in 0usize..24, pv in 0.5f64..8.0) {
        let data = dataset(&rows[..keep], true);
        let m = LogisticModel::fit(&data, &BasisConfig::three_rbf(), pv).unwrap();
        let g = m.log_posterior_gradient(&m.posterior().map_mean);
        let norm = g.iter().fold(0.0f64, |a, v| a.max(v.abs()));
        prop_assert!(norm < 1e-8, "gradient {norm:e}");
    }

    #[test]
    fn selection_is_the_exhaustive_optimum(
        rows in unit_rows(12),
        n in 2usize..12,
        target in -2.5f64..2.5,
        seed in any::<u64>(),
        use_gp in any::<bool>(),
    ) {
        let spec = if use_gp { ModelSpec::gp_default() } else { blr_spec() };
        let s = state(&rows[..n], spec, target, seed);
        let fp = s.model().fingerprint();
        for c in [Criterion::DmAware, Criterion::DmAwareExplore, Criterion::TargetedIg, Criterion::Eig, Criterion::Uncertainty] {
            let seq = select_query(&s, c, None, seed, ExecMode::Sequential).unwrap();
            let par = select_query(&s, c, None, seed, ExecMode::Parallel).unwrap();
            prop_assert_eq!(&seq, &par);
            prop_assert_eq!(seq.selected, exhaustive_best(&s, c), "criterion {}", c);
        }
        // scoring never touches the state
        prop_assert_eq!(s.model().fingerprint(), fp);
        prop_assert_eq!(s.pool().len(), n);
        prop_assert!(s.answered().is_empty());
        prop_assert_eq!(s.data().len(), n);
    }

    #[test]
    fn gaussian_lookahead_equals_frozen_refit(
        rows in unit_rows(10),
        n in 2usize..10,
        target in -2.5f64..2.5,
        y in -2.0f64..2.0,
        pick in 0usize..10,
        use_gp in any::<bool>(),
    ) {
        let spec = if use_gp { ModelSpec::gp_default() } else { blr_spec() };
        let data = dataset(&rows[..n], false);
        let settings = LookaheadSettings { reoptimize_on_answer: false, ..LookaheadSettings::default() };
        let s = PoolState::new(data, vec![target], DecisionOrientation::HigherIsBetter, spec, QueryKind::Counterfactual, settings, 3).unwrap();
        let q = s.pool()[pick % n];
        let look = lookahead_type_s(&s, &q, Answer::Point { value: y }).unwrap();
        let refit = s.apply_answer(&q, Answer::Point { value: y }).unwrap().target_type_s().unwrap().gamma_hat;
        prop_assert!((look - refit).abs() < 1e-9, "{look} vs {refit}");
    }

    #[test]
    fn binary_scores_are_weighted_enumerations(
        rows in unit_rows(10),
        n in 1usize..10,
        target in -3.0f64..3.0,
        comparative in any::<bool>(),
    ) {
        let spec = if comparative { ModelSpec::comparative_default() } else { ModelSpec::logistic_default() };
        let s = state(&rows[..n], spec, target, 1);
        for q in s.pool() {
            let x = s.unit(q.unit());
            let (p, one, zero) = match *q {
                Query::Counterfactual { action, .. } => (
                    s.model().mean_theta(x, action).unwrap(),
                    Answer::Point { value: 1.0 },
                    Answer::Point { value: 0.0 },
                ),
                Query::Comparison { .. } => (
                    s.model().prob_comparison_one(x, s.comparison_likelihood().unwrap()).unwrap(),
                    Answer::Comparison { c: true },
                    Answer::Comparison { c: false },
                ),
            };
            let expected = p * lookahead_type_s(&s, q, one).unwrap() + (1.0 - p) * lookahead_type_s(&s, q, zero).unwrap();
            let got = score_dm_aware(&s, q).unwrap();
            prop_assert!((got - expected).abs() < 1e-12, "{got} vs {expected}");
        }
    }

    #[test]
    fn bookkeeping_is_conserved(
        rows in unit_rows(8),
        n in 1usize..8,
        answers in proptest::collection::vec((0usize..8, -2.0f64..2.0), 0..8),
    ) {
        let mut s = state(&rows[..n], blr_spec(), 0.0, 4);
        let mut seen = std::collections::HashSet::new();
        for (pick, y) in answers {
            if s.pool().is_empty() {
                break;
            }
            let q = s.pool()[pick % s.pool().len()];
            s = s.apply_answer(&q, Answer::Point { value: y }).unwrap();
            prop_assert!(seen.insert(q));
            prop_assert!(!s.contains(&q));
            let repeat = s.apply_answer(&q, Answer::Point { value: y });
            prop_assert!(repeat.is_err());
        }
        prop_assert_eq!(s.pool().len() + s.answered().len(), n);
        prop_assert_eq!(s.data().len(), n + s.answered().len());
        for (q, _) in s.answered() {
            prop_assert!(!s.pool().contains(q));
        }
    }

    #[test]
    fn generators_are_reproducible(seed in any::<u64>()) {
        let b = BernoulliRbfConfig { seed, ..BernoulliRbfConfig::default() };
        let g1 = gen_bernoulli_rbf(&b).unwrap();
        let g2 = gen_bernoulli_rbf(&b).unwrap();
        prop_assert_eq!(&g1.train, &g2.train);
        prop_assert_eq!(&g1.test_expected, &g2.test_expected);
        for t in &g1.test_expected {
            prop_assert!(t.iter().all(|v| *v > 0.0 && *v < 1.0));
        }
        for (x, a) in g1.train.units().iter().zip(g1.train.actions()) {
            prop_assert_eq!(*a, Action::from_bit(x[0] < b.assignment_threshold));
        }
        let c = SigmoidGenConfig { seed, n_test: 20, ..SigmoidGenConfig::default() };
        let s1 = gen_sigmoid_continuous(&c).unwrap();
        let s2 = gen_sigmoid_continuous(&c).unwrap();
        prop_assert_eq!(&s1.train, &s2.train);
        prop_assert_eq!(&s1.test_x, &s2.test_x);
    }
}

#[test]
fn selection_on_a_pool_of_fifty() {
    let rows: Vec<(f64, bool, f64)> = (0..50)
        .map(|i| {
            let x = -3.0 + 6.0 * i as f64 / 49.0;
            (x, i % 3 == 0, (1.3 * x).sin())
        })
        .collect();
    for spec in [blr_spec(), ModelSpec::logistic_default(), ModelSpec::comparative_default()] {
        let s = state(&rows, spec, 0.4, 2);
        for c in [Criterion::DmAware, Criterion::TargetedIg, Criterion::Uncertainty] {
            let sel = select_query(&s, c, None, 0, ExecMode::Parallel).unwrap();
            assert_eq!(sel.selected, exhaustive_best(&s, c), "criterion {c}");
        }
    }
}
