//! Runs synthetic participants through the session engine.

use std::sync::Arc;

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::domain::{ProblemSequence, Session};
use crate::engine::{AdviceStatus, EngineConfig, EngineError, SessionEvent, SessionHeader, SessionState};
use crate::policy::{PolicyConfig, PolicyKind};
use crate::rng::{label, substream};
use crate::simuser::{SimUser, UserModel, UserModelError};

#[derive(Debug, Error)]
pub enum SimulationError {
    #[error("no sequences to assign")]
    NoSequences,
    #[error("no conditions")]
    NoConditions,
    #[error(transparent)]
    UserModel(#[from] UserModelError),
    #[error("user {user_id}: {source}")]
    Engine {
        user_id: String,
        #[source]
        source: EngineError,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimCondition {
    pub condition_id: String,
    pub engine: EngineConfig,
}

impl SimCondition {
    pub fn new(condition_id: impl Into<String>, kind: PolicyKind) -> Self {
        Self {
            condition_id: condition_id.into(),
            engine: EngineConfig::new(PolicyConfig::new(kind)),
        }
    }
}

/// Think-time ranges in milliseconds, drawn uniformly per step and added to
/// whatever gate is in force.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ThinkTimes {
    pub initial: (u64, u64),
    pub r#final: (u64, u64),
    pub trust: (u64, u64),
}

impl Default for ThinkTimes {
    fn default() -> Self {
        Self {
            initial: (0, 20_000),
            r#final: (500, 8_000),
            trust: (1_000, 4_000),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimulationConfig {
    pub conditions: Vec<SimCondition>,
    pub users_per_condition: usize,
    pub user_model: UserModel,
    #[serde(default)]
    pub think_times: ThinkTimes,
    pub seed: u64,
}

/// One simulated participant's result.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimulatedSession {
    pub session: Session,
    pub events: Vec<SessionEvent>,
}

/// Fills absent explanation texts with placeholders so explanation policies
/// can fire on synthetic sequences. Synthetic users never read the text.
pub fn with_placeholder_explanations(sequence: &ProblemSequence) -> ProblemSequence {
    let mut out = sequence.clone();
    for item in &mut out.items {
        let rec = &mut item.recommendation;
        let label = option_letter(rec.prediction_index);
        rec.support_explanation.get_or_insert_with(|| format!("Placeholder reasoning in favour of option {label}."));
        rec.counter_explanation.get_or_insert_with(|| format!("While I think option {label} is right, here is a placeholder doubt."));
    }
    out
}

pub fn option_letter(index: usize) -> char {
    (b'A' + (index % 26) as u8) as char
}

/// Drives one user through a whole sequence, always submitting at the
/// earliest legal time plus a sampled think time.
pub fn run_user(
    header: SessionHeader,
    engine: EngineConfig,
    sequence: Arc<ProblemSequence>,
    user: &mut SimUser,
    think: &ThinkTimes,
) -> Result<SimulatedSession, EngineError> {
    let mut state = SessionState::start(header, engine, sequence)?;
    while !state.is_finished() {
        let problem = state.current_problem().expect("unfinished session has a problem").clone();
        let initial = user.act_initial(&problem);
        let t_initial = state.reading_gate_deadline() + user.think_time(think.initial.0, think.initial.1);
        state.submit_initial(initial, t_initial)?;

        let decision = state.current_decision().expect("decision set after initial");
        let gate = state.final_gate_deadline().expect("gate set after initial");
        let view = match state.advice(gate)? {
            AdviceStatus::Ready { view, .. } => view,
            AdviceStatus::Thinking { .. } => unreachable!("advice is revealed before its gate closes"),
        };
        let final_choice = user.act_final(&problem, initial, &view, &decision);
        let t_final = gate + user.think_time(think.r#final.0, think.r#final.1);
        state.submit_final(final_choice, t_final)?;

        let feedback = state.feedback().expect("feedback after final");
        let report = user.update_trust(feedback.ai_correct, feedback.user_correct);
        let t_trust = t_final + user.think_time(think.trust.0, think.trust.1);
        state.submit_trust(i64::from(report.value()), t_trust)?;
    }
    let events = state.events().to_vec();
    Ok(SimulatedSession {
        session: state.into_session(),
        events,
    })
}

/// Simulates `users_per_condition` users in every condition. User `u` of
/// condition `c` draws its sequence and behavior from streams addressed by
/// `(seed, c, u)`, so results do not depend on thread scheduling.
pub fn simulate_study(config: &SimulationConfig, sequences: &[ProblemSequence]) -> Result<Vec<SimulatedSession>, SimulationError> {
    if sequences.is_empty() {
        return Err(SimulationError::NoSequences);
    }
    if config.conditions.is_empty() {
        return Err(SimulationError::NoConditions);
    }
    config.user_model.check()?;
    let prepared: Vec<Arc<ProblemSequence>> = sequences.iter().map(|s| Arc::new(with_placeholder_explanations(s))).collect();
    let jobs: Vec<(usize, usize)> = (0..config.conditions.len())
        .flat_map(|c| (0..config.users_per_condition).map(move |u| (c, u)))
        .collect();
    jobs.into_par_iter()
        .map(|(c, u)| {
            let condition = &config.conditions[c];
            let user_id = format!("{}-u{:03}", condition.condition_id, u);
            let mut pick = substream(config.seed, &[label::ASSIGNMENT, c as u64, u as u64]);
            let sequence = Arc::clone(&prepared[pick.random_range(0..prepared.len())]);
            let rng = substream(config.seed, &[label::USER, c as u64, u as u64]);
            let mut user = SimUser::new(config.user_model.clone(), rng);
            let header = SessionHeader {
                session_id: format!("sim-{user_id}"),
                user_id: user_id.clone(),
                condition_id: condition.condition_id.clone(),
            };
            run_user(header, condition.engine.clone(), sequence, &mut user, &config.think_times)
                .map_err(|source| SimulationError::Engine { user_id, source })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::assistant::{generate_sequences, AssistantProfile, SequenceSpec};
    use crate::domain::{Problem, TaskId, Validate};

    fn problems(n: usize) -> Vec<Problem> {
        (0..n)
            .map(|i| Problem {
                problem_id: format!("p{i}"),
                task_id: TaskId::Arc,
                prompt: format!("question {i}"),
                options: vec!["yes".into(), "no".into()],
                correct_index: i % 2,
            })
            .collect()
    }

    fn config(kinds: &[PolicyKind], users: usize, seed: u64) -> SimulationConfig {
        SimulationConfig {
            conditions: kinds.iter().map(|k| SimCondition::new(format!("{k:?}"), *k)).collect(),
            users_per_condition: users,
            user_model: UserModel::arc_preset(),
            think_times: ThinkTimes::default(),
            seed,
        }
    }

    fn sequences() -> Vec<ProblemSequence> {
        generate_sequences(&problems(40), &AssistantProfile::calibrated(1), &SequenceSpec::new(4, 30, 9)).unwrap()
    }

    #[test]
    fn sessions_are_complete_and_valid() {
        let out = simulate_study(&config(&PolicyKind::ALL, 2, 3), &sequences()).unwrap();
        assert_eq!(out.len(), 18);
        for s in &out {
            assert!(s.session.is_complete());
            assert_eq!(s.session.interactions.len(), 30);
            assert!(s.session.violations().is_empty(), "{:?}", s.session.violations());
            assert_eq!(s.events.len(), 90);
        }
    }

    #[test]
    fn deterministic_per_seed() {
        let a = simulate_study(&config(&[PolicyKind::BothAdaptive], 5, 11), &sequences()).unwrap();
        let b = simulate_study(&config(&[PolicyKind::BothAdaptive], 5, 11), &sequences()).unwrap();
        let c = simulate_study(&config(&[PolicyKind::BothAdaptive], 5, 12), &sequences()).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, c);
    }

    #[test]
    fn events_replay_to_the_same_session() {
        let seqs = sequences();
        let out = simulate_study(&config(&[PolicyKind::ThinkingAndPauseAdaptive], 3, 5), &seqs).unwrap();
        let cond = SimCondition::new("x", PolicyKind::ThinkingAndPauseAdaptive);
        for s in out {
            let seq = seqs.iter().find(|q| q.sequence_id == s.session.sequence_id).unwrap();
            let header = SessionHeader {
                session_id: s.session.session_id.clone(),
                user_id: s.session.user_id.clone(),
                condition_id: s.session.condition_id.clone(),
            };
            let replayed = SessionState::replay(header, cond.engine.clone(), Arc::new(with_placeholder_explanations(seq)), &s.events).unwrap();
            assert_eq!(replayed.session(), &s.session);
        }
    }

    #[test]
    fn empty_inputs_rejected() {
        assert!(matches!(simulate_study(&config(&[PolicyKind::NoIntervention], 1, 1), &[]), Err(SimulationError::NoSequences)));
        assert!(matches!(simulate_study(&config(&[], 1, 1), &sequences()), Err(SimulationError::NoConditions)));
    }
}
