//! Three-stage protocol state machine.
//!
//! Each round runs `AwaitingInitial -> AwaitingReveal -> AwaitingFinal ->
//! AwaitingTrust`, then either starts the next round or finishes. Every
//! accepted event is appended to the state's event log, and replaying that
//! log over the same sequence rebuilds an identical state. Rejected events
//! leave the state untouched.
//!
//! All times are milliseconds since session start, as observed by the
//! server. Reads never mutate: the end of an "AI is thinking" embargo is a
//! deterministic deadline, so `effective_stage` derives it from the clock.

use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::domain::{
    Interaction, Problem, ProblemSequence, Recommendation, Session, StageTimestamps, TrustLevel, Validate, Violation,
};
use crate::policy::{self, InterventionDecision, PolicyConfig, PolicyError, RecommendationView};

/// Initial-decision controls unlock this long after a problem is shown.
pub const READING_GATE_MS: u64 = 10_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Stage {
    AwaitingInitial,
    AwaitingReveal,
    AwaitingFinal,
    AwaitingTrust,
    Finished,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Gate {
    Reading,
    AdviceEmbargo,
    PostReveal,
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum EngineError {
    #[error("event not allowed in stage {actual:?} (expected {expected:?})")]
    WrongStage { expected: Stage, actual: Stage },
    #[error("{gate:?} gate still closed for {remaining_ms} ms")]
    GateClosed { gate: Gate, remaining_ms: u64 },
    #[error("option {index} invalid for a problem with {num_options} options")]
    InvalidOption { index: usize, num_options: usize },
    #[error("trust {0} outside 0..10")]
    InvalidTrust(i64),
    #[error("event time {at} precedes previous event at {last}")]
    ClockRegression { at: u64, last: u64 },
    #[error("invalid sequence: {0:?}")]
    InvalidSequence(Vec<Violation>),
    #[error(transparent)]
    Policy(#[from] PolicyError),
}

impl EngineError {
    /// Machine-readable reason code.
    pub fn code(&self) -> &'static str {
        match self {
            EngineError::WrongStage { .. } => "wrong_stage",
            EngineError::GateClosed { .. } => "gate_closed",
            EngineError::InvalidOption { .. } => "invalid_option",
            EngineError::InvalidTrust(_) => "invalid_trust",
            EngineError::ClockRegression { .. } => "clock_regression",
            EngineError::InvalidSequence(_) => "invalid_sequence",
            EngineError::Policy(_) => "policy_error",
        }
    }

    /// Protocol errors are ordering/timing faults; the rest are bad data.
    pub fn is_protocol(&self) -> bool {
        matches!(
            self,
            EngineError::WrongStage { .. } | EngineError::GateClosed { .. } | EngineError::ClockRegression { .. }
        )
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum SessionEvent {
    Initial { decision: usize, at: u64 },
    Final { decision: usize, at: u64 },
    Trust { trust: i64, at: u64 },
}

impl SessionEvent {
    pub fn at(&self) -> u64 {
        match *self {
            SessionEvent::Initial { at, .. } | SessionEvent::Final { at, .. } | SessionEvent::Trust { at, .. } => at,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EngineConfig {
    pub policy: PolicyConfig,
    #[serde(default = "default_reading_gate")]
    pub reading_gate_ms: u64,
}

fn default_reading_gate() -> u64 {
    READING_GATE_MS
}

impl EngineConfig {
    pub fn new(policy: PolicyConfig) -> Self {
        Self {
            policy,
            reading_gate_ms: READING_GATE_MS,
        }
    }
}

/// Identity of a session, fixed at start.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SessionHeader {
    pub session_id: String,
    pub user_id: String,
    pub condition_id: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
struct Round {
    problem_shown: u64,
    initial: Option<(usize, u64)>,
    decision: InterventionDecision,
    final_: Option<(usize, u64)>,
}

impl Round {
    fn fresh(problem_shown: u64) -> Self {
        Self {
            problem_shown,
            initial: None,
            decision: InterventionDecision::none(),
            final_: None,
        }
    }

    fn advice_shown(&self) -> Option<u64> {
        self.initial.map(|(_, at)| at + self.decision.pre_reveal_delay_ms)
    }
}

/// Correctness disclosed after the final decision.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct RoundFeedback {
    pub correct_index: usize,
    pub ai_prediction: usize,
    pub user_correct: bool,
    pub ai_correct: bool,
}

/// What `get_advice` shows at a given time.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum AdviceStatus {
    /// Advice embargoed behind an "AI is thinking" message.
    Thinking { remaining_ms: u64 },
    Ready {
        view: RecommendationView,
        final_gate_remaining_ms: u64,
    },
}

#[derive(Debug, Clone, PartialEq)]
pub struct SessionState {
    config: EngineConfig,
    sequence: Arc<ProblemSequence>,
    session: Session,
    stage: Stage,
    current_item: usize,
    round: Round,
    last_event_at: u64,
    events: Vec<SessionEvent>,
}

impl SessionState {
    /// Starts a session at time 0 on item 0.
    pub fn start(header: SessionHeader, config: EngineConfig, sequence: Arc<ProblemSequence>) -> Result<Self, EngineError> {
        config.policy.check()?;
        let mut violations = sequence.violations();
        if sequence.is_empty() {
            violations.push(Violation::new("items", "sequence is empty"));
        }
        if !violations.is_empty() {
            return Err(EngineError::InvalidSequence(violations));
        }
        let session = Session {
            session_id: header.session_id,
            user_id: header.user_id,
            condition_id: header.condition_id,
            sequence_id: sequence.sequence_id.clone(),
            assistant_profile_id: sequence.assistant_profile_id.clone(),
            planned_length: sequence.len(),
            interactions: Vec::new(),
        };
        Ok(Self {
            config,
            sequence,
            session,
            stage: Stage::AwaitingInitial,
            current_item: 0,
            round: Round::fresh(0),
            last_event_at: 0,
            events: Vec::new(),
        })
    }

    /// Rebuilds a state from its accepted events. Fails with the index of the
    /// first event the machine rejects.
    pub fn replay(
        header: SessionHeader,
        config: EngineConfig,
        sequence: Arc<ProblemSequence>,
        events: &[SessionEvent],
    ) -> Result<Self, (usize, EngineError)> {
        let mut state = Self::start(header, config, sequence).map_err(|e| (0, e))?;
        for (i, ev) in events.iter().enumerate() {
            state.apply(*ev).map_err(|e| (i, e))?;
        }
        Ok(state)
    }

    pub fn apply(&mut self, event: SessionEvent) -> Result<(), EngineError> {
        match event {
            SessionEvent::Initial { decision, at } => self.submit_initial(decision, at),
            SessionEvent::Final { decision, at } => self.submit_final(decision, at),
            SessionEvent::Trust { trust, at } => self.submit_trust(trust, at),
        }
    }

    pub fn session(&self) -> &Session {
        &self.session
    }

    pub fn into_session(self) -> Session {
        self.session
    }

    pub fn events(&self) -> &[SessionEvent] {
        &self.events
    }

    pub fn config(&self) -> &EngineConfig {
        &self.config
    }

    pub fn sequence(&self) -> &Arc<ProblemSequence> {
        &self.sequence
    }

    /// Stored stage; an embargo that has expired is still `AwaitingReveal`
    /// here until the next event arrives.
    pub fn stage(&self) -> Stage {
        self.stage
    }

    pub fn effective_stage(&self, now: u64) -> Stage {
        match (self.stage, self.round.advice_shown()) {
            (Stage::AwaitingReveal, Some(reveal)) if now >= reveal => Stage::AwaitingFinal,
            (s, _) => s,
        }
    }

    pub fn current_item(&self) -> usize {
        self.current_item
    }

    pub fn is_finished(&self) -> bool {
        self.stage == Stage::Finished
    }

    pub fn current_problem(&self) -> Option<&Problem> {
        self.sequence.items.get(self.current_item).map(|it| &it.problem)
    }

    fn current_recommendation(&self) -> &Recommendation {
        &self.sequence.items[self.current_item].recommendation
    }

    pub fn prior_trust(&self) -> Option<TrustLevel> {
        self.session.interactions.last().map(|i| i.trust_report)
    }

    pub fn current_decision(&self) -> Option<InterventionDecision> {
        self.round.initial.map(|_| self.round.decision)
    }

    pub fn problem_shown_at(&self) -> u64 {
        self.round.problem_shown
    }

    pub fn reading_gate_deadline(&self) -> u64 {
        self.round.problem_shown + self.config.reading_gate_ms
    }

    pub fn reading_gate_remaining(&self, now: u64) -> u64 {
        self.reading_gate_deadline().saturating_sub(now)
    }

    /// Deadline of the post-reveal gate, once the initial decision is in.
    pub fn final_gate_deadline(&self) -> Option<u64> {
        self.round.advice_shown().map(|t| t + self.round.decision.post_reveal_gate_ms)
    }

    fn expect_stage(&self, expected: Stage, actual: Stage) -> Result<(), EngineError> {
        if expected == actual {
            Ok(())
        } else {
            Err(EngineError::WrongStage { expected, actual })
        }
    }

    fn check_clock(&self, at: u64) -> Result<(), EngineError> {
        if at < self.last_event_at {
            Err(EngineError::ClockRegression {
                at,
                last: self.last_event_at,
            })
        } else {
            Ok(())
        }
    }

    fn check_option(&self, index: usize) -> Result<(), EngineError> {
        let n = self.current_problem().map_or(0, |p| p.num_options());
        if index < n {
            Ok(())
        } else {
            Err(EngineError::InvalidOption { index, num_options: n })
        }
    }

    pub fn submit_initial(&mut self, decision: usize, at: u64) -> Result<(), EngineError> {
        self.expect_stage(Stage::AwaitingInitial, self.stage)?;
        self.check_clock(at)?;
        let deadline = self.reading_gate_deadline();
        if at < deadline {
            return Err(EngineError::GateClosed {
                gate: Gate::Reading,
                remaining_ms: deadline - at,
            });
        }
        self.check_option(decision)?;

        let raw = policy::decide(&self.config.policy, self.prior_trust());
        let resolved = policy::resolve_available(raw, self.current_recommendation());
        if resolved != raw {
            log::warn!(
                "session {}: problem {} lacks the {:?} explanation; showing plain advice",
                self.session.session_id,
                self.current_problem().map_or("?", |p| p.problem_id.as_str()),
                raw.action
            );
        }
        self.round.initial = Some((decision, at));
        self.round.decision = resolved;
        self.stage = if resolved.pre_reveal_delay_ms > 0 {
            Stage::AwaitingReveal
        } else {
            Stage::AwaitingFinal
        };
        self.last_event_at = at;
        self.events.push(SessionEvent::Initial { decision, at });
        Ok(())
    }

    /// Advice as visible at `now`.
    pub fn advice(&self, now: u64) -> Result<AdviceStatus, EngineError> {
        let stage = self.effective_stage(now);
        match stage {
            Stage::AwaitingReveal => {
                let reveal = self.round.advice_shown().unwrap_or(now);
                Ok(AdviceStatus::Thinking {
                    remaining_ms: reveal.saturating_sub(now),
                })
            }
            Stage::AwaitingFinal => {
                let view = policy::attach(
                    &self.round.decision,
                    self.current_recommendation(),
                    &self.sequence.items[self.current_item].problem.problem_id,
                )?;
                let gate = self.final_gate_deadline().unwrap_or(now);
                Ok(AdviceStatus::Ready {
                    view,
                    final_gate_remaining_ms: gate.saturating_sub(now),
                })
            }
            actual => Err(EngineError::WrongStage {
                expected: Stage::AwaitingFinal,
                actual,
            }),
        }
    }

    pub fn submit_final(&mut self, decision: usize, at: u64) -> Result<(), EngineError> {
        self.check_clock(at)?;
        match self.effective_stage(at) {
            Stage::AwaitingFinal => {}
            Stage::AwaitingReveal => {
                let reveal = self.round.advice_shown().unwrap_or(at);
                return Err(EngineError::GateClosed {
                    gate: Gate::AdviceEmbargo,
                    remaining_ms: reveal.saturating_sub(at),
                });
            }
            actual => {
                return Err(EngineError::WrongStage {
                    expected: Stage::AwaitingFinal,
                    actual,
                })
            }
        }
        let deadline = self.final_gate_deadline().unwrap_or(at);
        if at < deadline {
            return Err(EngineError::GateClosed {
                gate: Gate::PostReveal,
                remaining_ms: deadline - at,
            });
        }
        self.check_option(decision)?;
        self.round.final_ = Some((decision, at));
        self.stage = Stage::AwaitingTrust;
        self.last_event_at = at;
        self.events.push(SessionEvent::Final { decision, at });
        Ok(())
    }

    /// Correctness of the current round, available once the final decision is in.
    pub fn feedback(&self) -> Option<RoundFeedback> {
        if self.stage != Stage::AwaitingTrust {
            return None;
        }
        let (final_decision, _) = self.round.final_?;
        let item = &self.sequence.items[self.current_item];
        Some(RoundFeedback {
            correct_index: item.problem.correct_index,
            ai_prediction: item.recommendation.prediction_index,
            user_correct: final_decision == item.problem.correct_index,
            ai_correct: item.recommendation.prediction_index == item.problem.correct_index,
        })
    }

    pub fn submit_trust(&mut self, trust: i64, at: u64) -> Result<(), EngineError> {
        self.expect_stage(Stage::AwaitingTrust, self.stage)?;
        self.check_clock(at)?;
        let trust_level = TrustLevel::new(trust).map_err(|_| EngineError::InvalidTrust(trust))?;
        let (initial_decision, initial_at) = self.round.initial.expect("initial recorded before trust");
        let (final_decision, final_at) = self.round.final_.expect("final recorded before trust");
        let item = &self.sequence.items[self.current_item];
        let interaction = Interaction {
            index: self.current_item,
            problem_id: item.problem.problem_id.clone(),
            num_options: item.problem.num_options(),
            correct_index: item.problem.correct_index,
            recommendation: item.recommendation.clone(),
            initial_decision,
            final_decision,
            trust_report: trust_level,
            intervention: self.round.decision.action,
            timestamps: StageTimestamps {
                problem_shown: self.round.problem_shown,
                initial_submitted: initial_at,
                advice_shown: self.round.advice_shown().expect("advice time known"),
                final_submitted: final_at,
                trust_submitted: at,
            },
        };
        self.session.interactions.push(interaction);
        self.current_item += 1;
        self.last_event_at = at;
        self.events.push(SessionEvent::Trust { trust, at });
        if self.current_item >= self.sequence.len() {
            self.stage = Stage::Finished;
        } else {
            self.stage = Stage::AwaitingInitial;
            self.round = Round::fresh(at);
        }
        Ok(())
    }
}
