//! Trust-adaptive intervention policies.
//!
//! A policy looks only at the trust level the user reported at the end of the
//! previous round. Low trust is `trust < low_threshold`, high trust is
//! `trust > high_threshold`; both comparisons are strict.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::domain::{display_percent, Intervention, Recommendation, TrustLevel};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PolicyKind {
    NoIntervention,
    SupportAlways,
    CounterAlways,
    SupportAdaptive,
    CounterAdaptive,
    BothAdaptive,
    ThinkingAdaptive,
    PauseAdaptive,
    ThinkingAndPauseAdaptive,
}

impl PolicyKind {
    pub const ALL: [PolicyKind; 9] = [
        PolicyKind::NoIntervention,
        PolicyKind::SupportAlways,
        PolicyKind::CounterAlways,
        PolicyKind::SupportAdaptive,
        PolicyKind::CounterAdaptive,
        PolicyKind::BothAdaptive,
        PolicyKind::ThinkingAdaptive,
        PolicyKind::PauseAdaptive,
        PolicyKind::ThinkingAndPauseAdaptive,
    ];

    /// Interventions this kind can ever produce, besides `None`.
    pub fn possible_actions(self) -> &'static [Intervention] {
        use Intervention::*;
        match self {
            PolicyKind::NoIntervention => &[],
            PolicyKind::SupportAlways | PolicyKind::SupportAdaptive => &[ShowSupport],
            PolicyKind::CounterAlways | PolicyKind::CounterAdaptive => &[ShowCounter],
            PolicyKind::BothAdaptive => &[ShowSupport, ShowCounter],
            PolicyKind::ThinkingAdaptive => &[AiThinking],
            PolicyKind::PauseAdaptive => &[ForcedPause],
            PolicyKind::ThinkingAndPauseAdaptive => &[AiThinking, ForcedPause],
        }
    }
}

#[derive(Debug, Clone, Error, PartialEq)]
pub enum PolicyError {
    #[error("invalid policy config: {0}")]
    InvalidConfig(String),
    #[error("problem {problem_id}: recommendation has no {kind} explanation")]
    MissingExplanation { problem_id: String, kind: ExplanationKind },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PolicyConfig {
    pub kind: PolicyKind,
    #[serde(default = "default_low")]
    pub low_threshold: u8,
    #[serde(default = "default_high")]
    pub high_threshold: u8,
    #[serde(default = "default_explanation_gate")]
    pub explanation_gate_ms: u64,
    #[serde(default = "default_delay")]
    pub thinking_delay_ms: u64,
    #[serde(default = "default_delay")]
    pub pause_delay_ms: u64,
}

fn default_low() -> u8 {
    5
}
fn default_high() -> u8 {
    8
}
fn default_explanation_gate() -> u64 {
    15_000
}
fn default_delay() -> u64 {
    10_000
}

impl PolicyConfig {
    pub fn new(kind: PolicyKind) -> Self {
        Self {
            kind,
            low_threshold: default_low(),
            high_threshold: default_high(),
            explanation_gate_ms: default_explanation_gate(),
            thinking_delay_ms: default_delay(),
            pause_delay_ms: default_delay(),
        }
    }

    pub fn check(&self) -> Result<(), PolicyError> {
        if self.low_threshold > self.high_threshold || self.high_threshold > 10 {
            return Err(PolicyError::InvalidConfig(format!(
                "need 0 <= low_threshold <= high_threshold <= 10, got {} and {}",
                self.low_threshold, self.high_threshold
            )));
        }
        for action in self.kind.possible_actions() {
            let (name, ms) = match action {
                Intervention::ShowSupport | Intervention::ShowCounter => ("explanation_gate_ms", self.explanation_gate_ms),
                Intervention::AiThinking => ("thinking_delay_ms", self.thinking_delay_ms),
                Intervention::ForcedPause => ("pause_delay_ms", self.pause_delay_ms),
                Intervention::None => continue,
            };
            if ms == 0 {
                return Err(PolicyError::InvalidConfig(format!("{name} must be positive for {:?}", self.kind)));
            }
        }
        Ok(())
    }

    fn is_low(&self, t: TrustLevel) -> bool {
        t.value() < self.low_threshold
    }

    fn is_high(&self, t: TrustLevel) -> bool {
        t.value() > self.high_threshold
    }

    fn with_action(&self, action: Intervention) -> InterventionDecision {
        match action {
            Intervention::None => InterventionDecision::none(),
            Intervention::ShowSupport | Intervention::ShowCounter => InterventionDecision {
                action,
                pre_reveal_delay_ms: 0,
                post_reveal_gate_ms: self.explanation_gate_ms,
            },
            Intervention::AiThinking => InterventionDecision {
                action,
                pre_reveal_delay_ms: self.thinking_delay_ms,
                post_reveal_gate_ms: 0,
            },
            Intervention::ForcedPause => InterventionDecision {
                action,
                pre_reveal_delay_ms: 0,
                post_reveal_gate_ms: self.pause_delay_ms,
            },
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct InterventionDecision {
    pub action: Intervention,
    pub pre_reveal_delay_ms: u64,
    pub post_reveal_gate_ms: u64,
}

impl InterventionDecision {
    pub fn none() -> Self {
        Self {
            action: Intervention::None,
            pre_reveal_delay_ms: 0,
            post_reveal_gate_ms: 0,
        }
    }

    /// The explanation this decision shows, if any.
    pub fn explanation_kind(&self) -> Option<ExplanationKind> {
        match self.action {
            Intervention::ShowSupport => Some(ExplanationKind::Support),
            Intervention::ShowCounter => Some(ExplanationKind::Counter),
            _ => None,
        }
    }
}

/// Maps the previous round's trust report to this round's intervention.
/// `prior_trust` is absent only for a session's first round, where adaptive
/// kinds do nothing and "always" kinds still fire.
pub fn decide(config: &PolicyConfig, prior_trust: Option<TrustLevel>) -> InterventionDecision {
    use Intervention::*;
    let low = prior_trust.is_some_and(|t| config.is_low(t));
    let high = prior_trust.is_some_and(|t| config.is_high(t));
    let action = match config.kind {
        PolicyKind::NoIntervention => None,
        PolicyKind::SupportAlways => ShowSupport,
        PolicyKind::CounterAlways => ShowCounter,
        PolicyKind::SupportAdaptive if low => ShowSupport,
        PolicyKind::CounterAdaptive if high => ShowCounter,
        PolicyKind::BothAdaptive if low => ShowSupport,
        PolicyKind::BothAdaptive if high => ShowCounter,
        PolicyKind::ThinkingAdaptive if low => AiThinking,
        PolicyKind::PauseAdaptive if high => ForcedPause,
        PolicyKind::ThinkingAndPauseAdaptive if low => AiThinking,
        PolicyKind::ThinkingAndPauseAdaptive if high => ForcedPause,
        _ => None,
    };
    config.with_action(action)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExplanationKind {
    Support,
    Counter,
}

impl std::fmt::Display for ExplanationKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            ExplanationKind::Support => "support",
            ExplanationKind::Counter => "counter",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExplanationView {
    pub kind: ExplanationKind,
    pub text: String,
}

/// What a participant is allowed to see of a recommendation in one round.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RecommendationView {
    pub prediction_index: usize,
    pub confidence: f64,
    pub confidence_percent: u8,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub explanation: Option<ExplanationView>,
}

/// Builds the participant-visible view of `rec` under `decision`.
pub fn attach(
    decision: &InterventionDecision,
    recommendation: &Recommendation,
    problem_id: &str,
) -> Result<RecommendationView, PolicyError> {
    let explanation = match decision.explanation_kind() {
        None => None,
        Some(kind) => {
            let text = match kind {
                ExplanationKind::Support => recommendation.support_explanation.as_ref(),
                ExplanationKind::Counter => recommendation.counter_explanation.as_ref(),
            };
            let text = text.ok_or_else(|| PolicyError::MissingExplanation {
                problem_id: problem_id.to_string(),
                kind,
            })?;
            Some(ExplanationView { kind, text: text.clone() })
        }
    };
    Ok(RecommendationView {
        prediction_index: recommendation.prediction_index,
        confidence: recommendation.confidence,
        confidence_percent: display_percent(recommendation.confidence),
        explanation,
    })
}

/// Downgrades an explanation decision to `None` when the recommendation has
/// no text of the required kind (an LLM's unanimous vote has no counter
/// rationale).
pub fn resolve_available(decision: InterventionDecision, recommendation: &Recommendation) -> InterventionDecision {
    let available = match decision.explanation_kind() {
        Some(ExplanationKind::Support) => recommendation.support_explanation.is_some(),
        Some(ExplanationKind::Counter) => recommendation.counter_explanation.is_some(),
        None => true,
    };
    if available {
        decision
    } else {
        InterventionDecision::none()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn t(v: i64) -> Option<TrustLevel> {
        Some(TrustLevel::new(v).unwrap())
    }

    fn rec() -> Recommendation {
        Recommendation {
            prediction_index: 1,
            confidence: 0.81,
            support_explanation: Some("because".into()),
            counter_explanation: Some("while I think so, maybe not".into()),
        }
    }

    #[test]
    fn support_adaptive_at_four() {
        let d = decide(&PolicyConfig::new(PolicyKind::SupportAdaptive), t(4));
        assert_eq!(d.action, Intervention::ShowSupport);
        assert_eq!(d.post_reveal_gate_ms, 15_000);
        assert_eq!(d.pre_reveal_delay_ms, 0);
        assert_eq!(decide(&PolicyConfig::new(PolicyKind::SupportAdaptive), t(5)).action, Intervention::None);
    }

    #[test]
    fn counter_adaptive_is_strict() {
        let cfg = PolicyConfig::new(PolicyKind::CounterAdaptive);
        assert_eq!(decide(&cfg, t(9)).action, Intervention::ShowCounter);
        assert_eq!(decide(&cfg, t(8)).action, Intervention::None);
    }

    #[test]
    fn both_adaptive_quiet_between_thresholds() {
        let cfg = PolicyConfig::new(PolicyKind::BothAdaptive);
        assert_eq!(decide(&cfg, t(5)), InterventionDecision::none());
        assert_eq!(decide(&cfg, t(8)), InterventionDecision::none());
    }

    #[test]
    fn thinking_and_pause_low_side() {
        let d = decide(&PolicyConfig::new(PolicyKind::ThinkingAndPauseAdaptive), t(2));
        assert_eq!(d.action, Intervention::AiThinking);
        assert_eq!(d.pre_reveal_delay_ms, 10_000);
        assert_eq!(d.post_reveal_gate_ms, 0);
        let d = decide(&PolicyConfig::new(PolicyKind::ThinkingAndPauseAdaptive), t(10));
        assert_eq!(d.action, Intervention::ForcedPause);
        assert_eq!(d.post_reveal_gate_ms, 10_000);
    }

    #[test]
    fn first_round_behaviour() {
        for kind in PolicyKind::ALL {
            let d = decide(&PolicyConfig::new(kind), None);
            let expected = match kind {
                PolicyKind::SupportAlways => Intervention::ShowSupport,
                PolicyKind::CounterAlways => Intervention::ShowCounter,
                _ => Intervention::None,
            };
            assert_eq!(d.action, expected, "{kind:?}");
        }
    }

    #[test]
    fn decision_invariants_hold() {
        for kind in PolicyKind::ALL {
            let cfg = PolicyConfig::new(kind);
            for trust in TrustLevel::all() {
                let d = decide(&cfg, Some(trust));
                match d.action {
                    Intervention::None => assert_eq!((d.pre_reveal_delay_ms, d.post_reveal_gate_ms), (0, 0)),
                    Intervention::AiThinking => assert!(d.pre_reveal_delay_ms > 0),
                    _ => assert!(d.post_reveal_gate_ms > 0),
                }
            }
        }
    }

    #[test]
    fn config_checks() {
        let mut cfg = PolicyConfig::new(PolicyKind::BothAdaptive);
        assert!(cfg.check().is_ok());
        cfg.low_threshold = 9;
        assert!(cfg.check().is_err());
        let mut cfg = PolicyConfig::new(PolicyKind::ThinkingAdaptive);
        cfg.thinking_delay_ms = 0;
        assert!(cfg.check().is_err());
        cfg.kind = PolicyKind::NoIntervention;
        assert!(cfg.check().is_ok());
        let cfg: PolicyConfig = serde_json::from_str(r#"{"kind":"counter_adaptive"}"#).unwrap();
        assert_eq!(cfg, PolicyConfig::new(PolicyKind::CounterAdaptive));
    }

    #[test]
    fn attach_hides_unselected_text() {
        let v = attach(&InterventionDecision::none(), &rec(), "p1").unwrap();
        assert_eq!(v.explanation, None);
        assert_eq!(v.confidence_percent, 81);
        let json = serde_json::to_string(&v).unwrap();
        assert!(!json.contains("because") && !json.contains("maybe not"));

        let support = decide(&PolicyConfig::new(PolicyKind::SupportAlways), None);
        let v = attach(&support, &rec(), "p1").unwrap();
        assert_eq!(v.explanation.unwrap(), ExplanationView { kind: ExplanationKind::Support, text: "because".into() });
    }

    #[test]
    fn attach_missing_counter_names_problem() {
        let mut r = rec();
        r.counter_explanation = None;
        let counter = decide(&PolicyConfig::new(PolicyKind::CounterAlways), None);
        let err = attach(&counter, &r, "arc-17").unwrap_err();
        assert_eq!(err, PolicyError::MissingExplanation { problem_id: "arc-17".into(), kind: ExplanationKind::Counter });
        assert!(err.to_string().contains("arc-17"));
        assert_eq!(resolve_available(counter, &r), InterventionDecision::none());
    }
}
