use trustlab::policy::{InterventionDecision, RecommendationView};
use trustlab::rng::substream;
use trustlab::simuser::UserModel;
use trustlab::{Intervention, Problem, TaskId, TrustLevel};

fn problem(n: usize) -> Problem {
    Problem {
        problem_id: "p".into(),
        task_id: TaskId::Diagnosis,
        prompt: "?".into(),
        options: (0..n).map(|i| format!("o{i}")).collect(),
        correct_index: 1,
    }
}

fn view(prediction_index: usize) -> RecommendationView {
    RecommendationView {
        prediction_index,
        confidence: 0.8,
        confidence_percent: 80,
        explanation: None,
    }
}

fn decision(action: Intervention) -> InterventionDecision {
    InterventionDecision {
        action,
        ..InterventionDecision::none()
    }
}

#[test]
fn presets_hit_unaided_accuracy() {
    for (model, target) in [(UserModel::arc_preset(), 0.67f64), (UserModel::diagnosis_preset(), 0.74)] {
        let p = problem(4);
        let mut rng = substream(1, &[target.to_bits()]);
        let n = 100_000;
        let hits = (0..n).filter(|_| model.act_initial(&p, &mut rng) == p.correct_index).count();
        let acc = hits as f64 / n as f64;
        assert!((acc - target).abs() < 0.01, "{acc} vs {target}");
    }
}

fn switch_rate(model: &UserModel, trust: u8, action: Intervention, trials: usize, seed: u64) -> f64 {
    let p = problem(2);
    let mut rng = substream(seed, &[u64::from(trust)]);
    let t = TrustLevel::new(i64::from(trust)).unwrap();
    // Initial wrong, AI wrong-or-right alternating so deliberation is exercised.
    let switched = (0..trials)
        .filter(|i| {
            let (initial, ai) = if i % 2 == 0 { (0, 1) } else { (1, 0) };
            model.act_final(&p, initial, &view(ai), &decision(action), t, &mut rng) == ai
        })
        .count();
    switched as f64 / trials as f64
}

#[test]
fn high_trust_switches_more_than_low_trust() {
    let model = UserModel::arc_preset();
    let hi = switch_rate(&model, 10, Intervention::None, 50_000, 1);
    let lo = switch_rate(&model, 0, Intervention::None, 50_000, 2);
    assert!(hi - lo >= 0.3, "{hi} vs {lo}");
}

#[test]
fn switch_rate_monotone_in_trust() {
    let model = UserModel::arc_preset();
    let rates: Vec<f64> = (0..=10).map(|t| switch_rate(&model, t, Intervention::None, 20_000, 3)).collect();
    for w in rates.windows(2) {
        assert!(w[1] >= w[0] - 0.015, "{rates:?}");
    }
}

#[test]
fn explanations_increase_deliberation() {
    let model = UserModel::arc_preset();
    let p = problem(2);
    let t = TrustLevel::new(10).unwrap();
    // AI wrong: deliberating users mostly keep their correct answer.
    let rate = |action| {
        let mut rng = substream(9, &[action as u64]);
        (0..20_000).filter(|_| model.act_final(&p, 1, &view(0), &decision(action), t, &mut rng) == 0).count() as f64 / 20_000.0
    };
    assert!(rate(Intervention::ShowCounter) < rate(Intervention::None) - 0.1);
}
