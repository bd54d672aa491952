//! Synthetic participants for harness validation and policy sweeps.
//!
//! A user answers independently with probability `skill` of being right. When
//! their answer disagrees with the AI, they either deliberate (pick whichever
//! of the two answers is actually right with probability `quality`) or fall
//! back on a trust-driven heuristic that switches with probability
//! `trust_to_switch[trust]`. Interventions scale the deliberation
//! probability. Reported trust follows an exponentially smoothed record of AI
//! correctness, `tau <- r * (2a - 1) + (1 - r) * tau`, mapped onto 0..=10.

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::domain::{Intervention, Problem, TrustLevel};
use crate::policy::{InterventionDecision, RecommendationView};
use crate::rng::StreamRng;

#[derive(Debug, Error, PartialEq)]
#[error("invalid user model: {0}")]
pub struct UserModelError(pub String);

/// Multiplicative adjustment to the deliberation probability per intervention.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InterventionModifiers {
    pub show_support: f64,
    pub show_counter: f64,
    pub ai_thinking: f64,
    pub forced_pause: f64,
}

impl InterventionModifiers {
    pub fn identity() -> Self {
        Self {
            show_support: 1.0,
            show_counter: 1.0,
            ai_thinking: 1.0,
            forced_pause: 1.0,
        }
    }

    pub fn factor(&self, action: Intervention) -> f64 {
        match action {
            Intervention::None => 1.0,
            Intervention::ShowSupport => self.show_support,
            Intervention::ShowCounter => self.show_counter,
            Intervention::AiThinking => self.ai_thinking,
            Intervention::ForcedPause => self.forced_pause,
        }
    }
}

impl Default for InterventionModifiers {
    fn default() -> Self {
        Self {
            show_support: 5.0,
            show_counter: 5.0,
            ai_thinking: 1.2,
            forced_pause: 3.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Deliberation {
    /// Probability of deliberate evaluation with no intervention.
    pub base: f64,
    /// Probability that deliberation lands on the truly correct answer.
    pub quality: f64,
    #[serde(default)]
    pub modifiers: InterventionModifiers,
}

impl Default for Deliberation {
    fn default() -> Self {
        Self {
            base: 0.15,
            quality: 0.9,
            modifiers: InterventionModifiers::default(),
        }
    }
}

impl Deliberation {
    pub fn probability(&self, action: Intervention) -> f64 {
        (self.base * self.modifiers.factor(action)).clamp(0.0, 1.0)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrustDynamics {
    /// Smoothing weight `r` of the newest outcome.
    pub smoothing: f64,
    #[serde(default)]
    pub initial_tau: f64,
    /// Adds uniform {-1, 0, +1} jitter to reports, clamped to 0..=10.
    #[serde(default)]
    pub reporting_noise: bool,
}

impl Default for TrustDynamics {
    fn default() -> Self {
        Self {
            smoothing: 0.5,
            initial_tau: 0.0,
            reporting_noise: false,
        }
    }
}

impl TrustDynamics {
    pub fn step(&self, tau: f64, ai_correct: bool) -> f64 {
        let a = if ai_correct { 1.0 } else { -1.0 };
        (self.smoothing * a + (1.0 - self.smoothing) * tau).clamp(-1.0, 1.0)
    }
}

/// Maps `tau` in [-1, 1] onto the 0..=10 scale, rounding half up.
pub fn tau_to_trust(tau: f64) -> TrustLevel {
    let x = ((tau.clamp(-1.0, 1.0) + 1.0) * 5.0 + 0.5 + 1e-9).floor();
    TrustLevel::new(x as i64).expect("clamped into range")
}

/// Switch probabilities at trust 0..=10, piecewise linear through anchors.
///
/// Acceptance of AI advice runs from 8% among low-trust users to 60% among
/// high-trust ones. Those rates are pinned at trust 2 and 9 (typical levels
/// inside the low and high windows), with end points 0.05 at trust 0 and
/// 0.70 at trust 10. Intermediate levels are interpolations.
pub fn default_switch_curve() -> [f64; 11] {
    piecewise_linear(&[(0, 0.05), (2, 0.08), (9, 0.60), (10, 0.70)])
}

/// Evaluates the piecewise-linear curve through `(trust, p)` anchors at every
/// trust level. Anchors must be sorted and span 0 and 10.
pub fn piecewise_linear(anchors: &[(u8, f64)]) -> [f64; 11] {
    let mut out = [0.0; 11];
    for (t, slot) in out.iter_mut().enumerate() {
        let t = t as u8;
        let seg = anchors.windows(2).find(|w| w[0].0 <= t && t <= w[1].0).expect("anchors span 0..=10");
        let (t0, p0) = seg[0];
        let (t1, p1) = seg[1];
        *slot = if t1 == t0 { p0 } else { p0 + (p1 - p0) * f64::from(t - t0) / f64::from(t1 - t0) };
    }
    out
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UserModel {
    pub skill: f64,
    pub trust_to_switch: [f64; 11],
    #[serde(default)]
    pub deliberation: Deliberation,
    #[serde(default)]
    pub trust_dynamics: TrustDynamics,
}

impl UserModel {
    /// Default participant with the given unaided accuracy.
    pub fn with_skill(skill: f64) -> Self {
        Self {
            skill,
            trust_to_switch: default_switch_curve(),
            deliberation: Deliberation::default(),
            trust_dynamics: TrustDynamics::default(),
        }
    }

    /// Lay participants on the science-question task (67% unaided).
    pub fn arc_preset() -> Self {
        Self::with_skill(0.67)
    }

    /// Physicians on the diagnosis task (74% unaided).
    pub fn diagnosis_preset() -> Self {
        Self::with_skill(0.74)
    }

    pub fn check(&self) -> Result<(), UserModelError> {
        let prob = |name: &str, p: f64| {
            if (0.0..=1.0).contains(&p) {
                Ok(())
            } else {
                Err(UserModelError(format!("{name} = {p} is not a probability")))
            }
        };
        prob("skill", self.skill)?;
        prob("deliberation.base", self.deliberation.base)?;
        prob("deliberation.quality", self.deliberation.quality)?;
        prob("trust_dynamics.smoothing", self.trust_dynamics.smoothing)?;
        for (t, &p) in self.trust_to_switch.iter().enumerate() {
            prob(&format!("trust_to_switch[{t}]"), p)?;
        }
        if self.trust_to_switch.windows(2).any(|w| w[1] < w[0]) {
            return Err(UserModelError("trust_to_switch must be non-decreasing".into()));
        }
        let m = &self.deliberation.modifiers;
        if [m.show_support, m.show_counter, m.ai_thinking, m.forced_pause].iter().any(|&f| f < 0.0 || !f.is_finite()) {
            return Err(UserModelError("intervention modifiers must be finite and non-negative".into()));
        }
        if !(-1.0..=1.0).contains(&self.trust_dynamics.initial_tau) {
            return Err(UserModelError("initial_tau must lie in [-1, 1]".into()));
        }
        Ok(())
    }

    pub fn switch_probability(&self, trust: TrustLevel) -> f64 {
        self.trust_to_switch[trust.value() as usize]
    }

    /// Independent decision: correct with probability `skill`, otherwise a
    /// uniformly chosen wrong option.
    pub fn act_initial<R: Rng + ?Sized>(&self, problem: &Problem, rng: &mut R) -> usize {
        if rng.random::<f64>() < self.skill {
            problem.correct_index
        } else {
            let wrong: Vec<usize> = problem.wrong_indices().collect();
            wrong[rng.random_range(0..wrong.len())]
        }
    }

    /// Final decision after seeing the advice.
    pub fn act_final<R: Rng + ?Sized>(
        &self,
        problem: &Problem,
        initial: usize,
        view: &RecommendationView,
        decision: &InterventionDecision,
        trust: TrustLevel,
        rng: &mut R,
    ) -> usize {
        let ai = view.prediction_index;
        if initial == ai {
            return initial;
        }
        let deliberate = rng.random::<f64>() < self.deliberation.probability(decision.action);
        let truth = problem.correct_index;
        if deliberate && (truth == ai || truth == initial) {
            let pick_truth = rng.random::<f64>() < self.deliberation.quality;
            let other = if truth == ai { initial } else { ai };
            return if pick_truth { truth } else { other };
        }
        if rng.random::<f64>() < self.switch_probability(trust) {
            ai
        } else {
            initial
        }
    }

    /// Updates internal trust and returns `(tau', reported trust)`.
    pub fn update_trust<R: Rng + ?Sized>(&self, tau: f64, ai_was_correct: bool, _user_final_correct: bool, rng: &mut R) -> (f64, TrustLevel) {
        let tau = self.trust_dynamics.step(tau, ai_was_correct);
        let mut reported = tau_to_trust(tau).value() as i64;
        if self.trust_dynamics.reporting_noise {
            reported = (reported + rng.random_range(-1..=1)).clamp(0, 10);
        }
        (tau, TrustLevel::new(reported).expect("clamped"))
    }
}

/// A participant in flight: a model plus its private trust state and stream.
#[derive(Debug, Clone)]
pub struct SimUser {
    pub model: UserModel,
    tau: f64,
    last_report: Option<TrustLevel>,
    rng: StreamRng,
}

impl SimUser {
    pub fn new(model: UserModel, rng: StreamRng) -> Self {
        let tau = model.trust_dynamics.initial_tau;
        Self {
            model,
            tau,
            last_report: None,
            rng,
        }
    }

    pub fn tau(&self) -> f64 {
        self.tau
    }

    /// Trust that drives the heuristic: the last report, or the initial
    /// state before anything was reported.
    pub fn current_trust(&self) -> TrustLevel {
        self.last_report.unwrap_or_else(|| tau_to_trust(self.tau))
    }

    pub fn act_initial(&mut self, problem: &Problem) -> usize {
        self.model.act_initial(problem, &mut self.rng)
    }

    pub fn act_final(&mut self, problem: &Problem, initial: usize, view: &RecommendationView, decision: &InterventionDecision) -> usize {
        let trust = self.current_trust();
        self.model.act_final(problem, initial, view, decision, trust, &mut self.rng)
    }

    pub fn update_trust(&mut self, ai_was_correct: bool, user_final_correct: bool) -> TrustLevel {
        let (tau, report) = self.model.update_trust(self.tau, ai_was_correct, user_final_correct, &mut self.rng);
        self.tau = tau;
        self.last_report = Some(report);
        report
    }

    /// Milliseconds spent on a step, uniform in `[lo, hi]`.
    pub fn think_time(&mut self, lo: u64, hi: u64) -> u64 {
        self.rng.random_range(lo..=hi)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::domain::TaskId;
    use crate::policy::{ExplanationKind, ExplanationView};
    use crate::rng::substream;

    fn problem(n: usize) -> Problem {
        Problem {
            problem_id: "p".into(),
            task_id: if n == 2 { TaskId::Arc } else { TaskId::Diagnosis },
            prompt: "q".into(),
            options: (0..n).map(|i| format!("o{i}")).collect(),
            correct_index: 0,
        }
    }

    fn view(pred: usize) -> RecommendationView {
        RecommendationView {
            prediction_index: pred,
            confidence: 0.7,
            confidence_percent: 70,
            explanation: None,
        }
    }

    fn t(v: i64) -> TrustLevel {
        TrustLevel::new(v).unwrap()
    }

    #[test]
    fn perfect_skill_always_correct() {
        let m = UserModel::with_skill(1.0);
        let mut rng = substream(1, &[]);
        assert!((0..1000).all(|_| m.act_initial(&problem(4), &mut rng) == 0));
    }

    #[test]
    fn agreement_is_kept() {
        let m = UserModel::arc_preset();
        let mut rng = substream(2, &[]);
        for trust in TrustLevel::all() {
            for _ in 0..200 {
                assert_eq!(m.act_final(&problem(2), 1, &view(1), &InterventionDecision::none(), trust, &mut rng), 1);
            }
        }
    }

    #[test]
    fn zero_switch_at_zero_trust_never_switches() {
        let mut m = UserModel::arc_preset();
        m.trust_to_switch[0] = 0.0;
        m.deliberation.base = 0.0;
        let mut rng = substream(3, &[]);
        assert!((0..5000).all(|_| m.act_final(&problem(2), 1, &view(0), &InterventionDecision::none(), t(0), &mut rng) == 1));
    }

    #[test]
    fn smoothing_half_from_zero_reports_eight() {
        let mut m = UserModel::arc_preset();
        m.trust_dynamics.smoothing = 0.5;
        let mut rng = substream(4, &[]);
        let (tau, report) = m.update_trust(0.0, true, true, &mut rng);
        assert_eq!(tau, 0.5);
        assert_eq!(report.value(), 8);
    }

    #[test]
    fn zero_smoothing_freezes_trust() {
        let mut m = UserModel::arc_preset();
        m.trust_dynamics.smoothing = 0.0;
        let mut rng = substream(5, &[]);
        let mut tau = 0.2;
        for i in 0..50 {
            let (next, report) = m.update_trust(tau, i % 3 == 0, true, &mut rng);
            assert_eq!(next, 0.2);
            assert_eq!(report, tau_to_trust(0.2));
            tau = next;
        }
    }

    #[test]
    fn alternating_outcomes_settle_on_three_and_seven() {
        // Oracle: iterate the recurrence directly. The two-cycle fixed points
        // are tau = +1/3 (after a correct outcome) and -1/3 (after a wrong one),
        // i.e. reports round(6.67) = 7 and round(3.33) = 3.
        let mut oracle_tau: f64 = 0.0;
        let mut oracle_reports = Vec::new();
        for step in 0..100 {
            let a = if step % 2 == 0 { 1.0 } else { -1.0 };
            oracle_tau = 0.5 * a + 0.5 * oracle_tau;
            oracle_reports.push(((oracle_tau + 1.0) * 5.0).round() as u8);
        }
        let tail: std::collections::BTreeSet<u8> = oracle_reports[80..].iter().copied().collect();
        assert_eq!(tail.into_iter().collect::<Vec<_>>(), vec![3, 7]);

        let mut m = UserModel::arc_preset();
        m.trust_dynamics.smoothing = 0.5;
        let mut user = SimUser::new(m, substream(6, &[]));
        let reports: Vec<u8> = (0..100).map(|step| user.update_trust(step % 2 == 0, true).value()).collect();
        assert_eq!(reports, oracle_reports);
    }

    #[test]
    fn identity_modifiers_make_explanations_inert() {
        let mut m = UserModel::arc_preset();
        m.deliberation.modifiers = InterventionModifiers::identity();
        let support = InterventionDecision {
            action: Intervention::ShowSupport,
            pre_reveal_delay_ms: 0,
            post_reveal_gate_ms: 15_000,
        };
        let mut explained = view(1);
        explained.explanation = Some(ExplanationView { kind: ExplanationKind::Support, text: "x".into() });
        let mut a = substream(7, &[]);
        let mut b = substream(7, &[]);
        for trust in TrustLevel::all() {
            for _ in 0..500 {
                let plain = m.act_final(&problem(2), 0, &view(1), &InterventionDecision::none(), trust, &mut a);
                let with = m.act_final(&problem(2), 0, &explained, &support, trust, &mut b);
                assert_eq!(plain, with);
            }
        }
    }

    #[test]
    fn model_checks() {
        assert!(UserModel::arc_preset().check().is_ok());
        let mut m = UserModel::arc_preset();
        m.trust_to_switch[5] = 0.01;
        assert!(m.check().is_err());
        let mut m = UserModel::arc_preset();
        m.skill = 1.2;
        assert!(m.check().is_err());
    }

    #[test]
    fn default_curve_endpoints_and_monotone() {
        let c = default_switch_curve();
        assert!((c[2] - 0.08).abs() < 1e-12);
        assert!((c[9] - 0.60).abs() < 1e-12);
        assert!((c[10] - 0.70).abs() < 1e-12);
        assert!(c.windows(2).all(|w| w[1] >= w[0]));
        let stepped = piecewise_linear(&[(0, 0.1), (4, 0.1), (5, 0.5), (10, 0.5)]);
        assert_eq!(stepped[4], 0.1);
        assert_eq!(stepped[5], 0.5);
    }
}
