mod common;

use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use trustlab::assistant::{generate_sequences, AssistantProfile, SequenceSpec};
use trustlab::ingestion::builtin_arc;
use trustlab::metrics::{
    clustered_bootstrap, filter_analysis_set, group_compare, macro_aggregate, per_user_counts, reliance_report, trust_binned, BootstrapConfig,
    Metric, TrustWindow,
};
use trustlab::policy::PolicyKind;
use trustlab::simulate::{simulate_study, SimCondition, SimulationConfig, ThinkTimes};
use trustlab::simuser::UserModel;
use trustlab::Session;

use common::*;

fn close(a: Option<f64>, b: Option<f64>) -> bool {
    match (a, b) {
        (Some(x), Some(y)) => (x - y).abs() < 1e-12,
        (None, None) => true,
        _ => false,
    }
}

fn simulated(users: usize, seed: u64) -> Vec<Session> {
    let seqs = generate_sequences(&builtin_arc(), &AssistantProfile::calibrated(1), &SequenceSpec::new(10, 30, seed)).unwrap();
    let cfg = SimulationConfig {
        conditions: vec![SimCondition::new("control", PolicyKind::NoIntervention)],
        users_per_condition: users,
        user_model: UserModel::arc_preset(),
        think_times: ThinkTimes::default(),
        seed,
    };
    simulate_study(&cfg, &seqs).unwrap().into_iter().map(|s| s.session).collect()
}

#[test]
fn macro_mean_matches_per_user_enumeration() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    for _ in 0..200 {
        let log = random_log(&mut rng, 60);
        let report = macro_aggregate(&log, None, 3);
        let users: Vec<Tally> = log.iter().map(|s| brute_force_where(&log, |_| true, |u| u == s.user_id)).collect();
        let mean = |f: &dyn Fn(&Tally) -> Option<f64>| {
            let v: Vec<f64> = users.iter().filter_map(f).collect();
            (!v.is_empty()).then(|| v.iter().sum::<f64>() / v.len() as f64)
        };
        let switch = mean(&|t: &Tally| if t.n >= 3 { t.switch() } else { None });
        let under = mean(&|t: &Tally| if t.ai_right >= 3 { t.under() } else { None });
        let over = mean(&|t: &Tally| if t.ai_wrong >= 3 { t.over() } else { None });
        let total = mean(&|t: &Tally| if t.ai_right >= 3 && t.ai_wrong >= 3 { t.total() } else { None });
        assert!(close(report.mean(Metric::SwitchRate), switch));
        assert!(close(report.mean(Metric::UnderReliance), under));
        assert!(close(report.mean(Metric::OverReliance), over));
        assert!(close(report.mean(Metric::TotalInappropriate), total));
    }
}

#[test]
fn group_compare_matches_enumeration() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for _ in 0..200 {
        let log = random_log(&mut rng, 60);
        let even = |u: &str| u.trim_start_matches('u').parse::<u32>().unwrap() % 2 == 0;
        let groups = group_compare(&log, Some(TrustWindow::LOW), |u| Some(if even(u) { "even" } else { "odd" }.to_string()));
        for (key, report) in groups {
            let t = brute_force_where(&log, |v| v <= 4, |u| even(u) == (key == "even"));
            assert_eq!(report.n_interactions, t.n);
            assert!(close(report.switch_rate, t.switch()));
            assert!(close(report.over_reliance, t.over()));
        }
    }
}

#[test]
fn simulated_users_rely_more_at_high_trust() {
    let sessions = simulated(60, 21);
    let report = trust_binned(&filter_analysis_set(&sessions, None));
    let r_switch = report.correlation(Metric::SwitchRate).unwrap();
    let r_under = report.correlation(Metric::UnderReliance).unwrap();
    assert!(r_switch > 0.7, "{r_switch}");
    assert!(r_under < -0.5, "{r_under}");
}

#[test]
fn copied_group_is_not_different() {
    let sessions = simulated(30, 22);
    let a: Vec<_> = per_user_counts(&sessions, None).into_iter().map(|(_, c)| c).collect();
    let b = a.clone();
    let mut cfg = BootstrapConfig::new(8);
    cfg.n_resamples = 2000;
    let res = clustered_bootstrap(&a, &b, Metric::SwitchRate, &cfg).unwrap();
    assert!(res.p_value > 0.5, "{}", res.p_value);
    assert_eq!(res.difference, 0.0);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn bins_partition_the_analysis_set(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let log = random_log(&mut rng, 80);
        let items = filter_analysis_set(&log, None);
        let binned = trust_binned(&items);
        prop_assert_eq!(binned.total(), trustlab::metrics::RelianceCounts::from_items(&items));
        let low = filter_analysis_set(&log, Some(TrustWindow::LOW)).len();
        let mid = filter_analysis_set(&log, Some(TrustWindow { min: 5, max: 8 })).len();
        let high = filter_analysis_set(&log, Some(TrustWindow::HIGH)).len();
        prop_assert_eq!(low + mid + high, items.len());
    }

    #[test]
    fn metrics_are_fractions(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let log = random_log(&mut rng, 80);
        let r = reliance_report(&filter_analysis_set(&log, None));
        for m in [Metric::SwitchRate, Metric::UnderReliance, Metric::OverReliance, Metric::FinalAccuracy] {
            if let Some(v) = m.of(&r) {
                prop_assert!((0.0..=1.0).contains(&v));
            }
        }
        if let Some(t) = r.total_inappropriate {
            prop_assert!((0.0..=2.0).contains(&t));
        }
        let t = brute_force(&log, |_| true);
        prop_assert_eq!(r.n_interactions, t.n);
    }
}
