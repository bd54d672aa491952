//! Multi-session study service: enrollment, protocol operations over the
//! session engine, persistence, settlement and export.
//!
//! All times are taken from the service clock. Each session runs on its own
//! relative clock starting at enrollment, so engine timestamps are
//! milliseconds since the participant started.

mod config;
mod log;

pub use config::{AssistantSource, ConditionConfig, Payment, ProblemPool, StudyConfig};
pub use log::{EventLog, LogLine, LogRecord, Snapshot, LOG_FILE, SCHEMA_VERSION, SNAPSHOT_FILE};

use std::collections::{BTreeMap, HashMap};
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicBool, AtomicU64, Ordering};
use std::sync::{Arc, Mutex, RwLock};
use std::time::{SystemTime, UNIX_EPOCH};

use rand::Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::domain::{ProblemSequence, Session, TrustLevel};
use crate::engine::{AdviceStatus, EngineConfig, EngineError, RoundFeedback, SessionEvent, SessionHeader, SessionState, Stage};
use crate::rng::{derive_key, label, substream};
use crate::simulate::{simulate_study, SimCondition, SimulatedSession, SimulationConfig, ThinkTimes};
use crate::simuser::UserModel;

pub const DATA_DIR_ENV: &str = "TRUSTLAB_DATA_DIR";

pub trait Clock: Send + Sync {
    /// Milliseconds on a monotone-enough wall clock.
    fn now_ms(&self) -> u64;
}

#[derive(Debug, Default, Clone, Copy)]
pub struct SystemClock;

impl Clock for SystemClock {
    fn now_ms(&self) -> u64 {
        SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_millis() as u64).unwrap_or(0)
    }
}

/// Clock moved by hand, for tests and simulations.
#[derive(Debug, Default)]
pub struct ManualClock(AtomicU64);

impl ManualClock {
    pub fn new(start: u64) -> Self {
        Self(AtomicU64::new(start))
    }

    pub fn advance(&self, ms: u64) {
        self.0.fetch_add(ms, Ordering::SeqCst);
    }

    pub fn set(&self, ms: u64) {
        self.0.store(ms, Ordering::SeqCst);
    }
}

impl Clock for ManualClock {
    fn now_ms(&self) -> u64 {
        self.0.load(Ordering::SeqCst)
    }
}

impl<C: Clock + ?Sized> Clock for Arc<C> {
    fn now_ms(&self) -> u64 {
        (**self).now_ms()
    }
}

#[derive(Debug, Error)]
pub enum ServiceError {
    #[error("unknown session {0}")]
    UnknownSession(String),
    #[error("user {0} is already enrolled")]
    AlreadyEnrolled(String),
    #[error("session {0} is not finished")]
    NotFinished(String),
    #[error(transparent)]
    Protocol(#[from] EngineError),
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("io: {0}")]
    Io(String),
    #[error("{file}:{line}: {message}")]
    Corrupt { file: String, line: usize, message: String },
    #[error("log replay failed for session {session_id}: {message}")]
    Replay { session_id: String, message: String },
}

impl ServiceError {
    /// Machine-readable reason.
    pub fn code(&self) -> &'static str {
        match self {
            ServiceError::UnknownSession(_) => "unknown_session",
            ServiceError::AlreadyEnrolled(_) => "already_enrolled",
            ServiceError::NotFinished(_) => "not_finished",
            ServiceError::Protocol(e) => e.code(),
            ServiceError::Config(_) => "invalid_config",
            ServiceError::Io(_) => "io_error",
            ServiceError::Corrupt { .. } => "corrupt_log",
            ServiceError::Replay { .. } => "replay_failed",
        }
    }

    /// Remaining gate time for gate rejections.
    pub fn remaining_ms(&self) -> Option<u64> {
        match self {
            ServiceError::Protocol(EngineError::GateClosed { remaining_ms, .. }) => Some(*remaining_ms),
            _ => None,
        }
    }
}

/// Payment owed for a finished session and whether its data is usable.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SettlementRecord {
    pub session_id: String,
    pub user_id: String,
    pub condition_id: String,
    pub rounds: usize,
    pub correct_finals: usize,
    pub initial_accuracy: f64,
    pub base_cents: u64,
    pub bonus_cents: u64,
    pub total_cents: u64,
    pub rejected_for_analysis: bool,
}

pub fn settle(session: &Session, payment: &Payment, min_initial_accuracy: f64) -> SettlementRecord {
    let rounds = session.interactions.len();
    let correct_finals = session.interactions.iter().filter(|i| i.final_correct()).count();
    let correct_initial = session.interactions.iter().filter(|i| i.initial_correct()).count();
    let initial_accuracy = if rounds == 0 { 0.0 } else { correct_initial as f64 / rounds as f64 };
    let bonus_cents = payment.per_correct_cents * correct_finals as u64;
    SettlementRecord {
        session_id: session.session_id.clone(),
        user_id: session.user_id.clone(),
        condition_id: session.condition_id.clone(),
        rounds,
        correct_finals,
        initial_accuracy,
        base_cents: payment.base_cents,
        bonus_cents,
        total_cents: payment.base_cents + bonus_cents,
        rejected_for_analysis: initial_accuracy < min_initial_accuracy,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Enrollment {
    pub session_id: String,
    pub user_id: String,
    pub condition_id: String,
    pub sequence_id: String,
    pub planned_length: usize,
}

/// What a participant sees of the current problem. Carries no answer.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProblemView {
    pub index: usize,
    pub total: usize,
    pub problem_id: String,
    pub prompt: String,
    pub options: Vec<String>,
    pub stage: Stage,
    pub reading_gate_remaining_ms: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Progress {
    pub session_id: String,
    pub completed: usize,
    pub total: usize,
    pub stage: Stage,
    pub finished: bool,
    pub correct_finals: usize,
    pub last_trust: Option<TrustLevel>,
}

/// One exported session, with its settlement when finalized.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExportRecord {
    pub schema_version: u32,
    pub complete: bool,
    pub session: Session,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub settlement: Option<SettlementRecord>,
}

struct Live {
    state: SessionState,
    started_at: u64,
    settlement: Option<SettlementRecord>,
    client_events: Vec<LogRecord>,
}

impl Live {
    fn rel(&self, now: u64) -> u64 {
        now.saturating_sub(self.started_at)
    }
}

#[derive(Default)]
struct Registry {
    users: HashMap<String, String>,
    counts: BTreeMap<String, usize>,
    enrollments: u64,
}

struct Condition {
    config: ConditionConfig,
    engine: EngineConfig,
    sequences: Vec<Arc<ProblemSequence>>,
}

pub struct StudyService {
    config: StudyConfig,
    conditions: Vec<Condition>,
    registry: Mutex<Registry>,
    sessions: RwLock<BTreeMap<String, Arc<Mutex<Live>>>>,
    log: Option<Mutex<EventLog>>,
    snapshot_due: AtomicBool,
    clock: Arc<dyn Clock>,
}

impl std::fmt::Debug for StudyService {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("StudyService").field("study_id", &self.config.study_id).finish_non_exhaustive()
    }
}

impl StudyService {
    /// Service without persistence.
    pub fn in_memory(config: StudyConfig, base: &Path, clock: Arc<dyn Clock>) -> Result<Self, ServiceError> {
        Self::build(config, base, clock, None)
    }

    /// Service persisted under `data_dir`, recovering any earlier state from
    /// its snapshot and event log.
    pub fn open(config: StudyConfig, base: &Path, data_dir: &Path, clock: Arc<dyn Clock>) -> Result<Self, ServiceError> {
        Self::build(config, base, clock, Some(data_dir.to_path_buf()))
    }

    fn build(config: StudyConfig, base: &Path, clock: Arc<dyn Clock>, data_dir: Option<PathBuf>) -> Result<Self, ServiceError> {
        config.check()?;
        let conditions = config
            .conditions
            .iter()
            .map(|c| {
                Ok(Condition {
                    engine: c.engine(),
                    sequences: c.assistant.resolve(base)?,
                    config: c.clone(),
                })
            })
            .collect::<Result<Vec<_>, ServiceError>>()?;
        let registry = Registry {
            counts: conditions.iter().map(|c| (c.config.condition_id.clone(), 0)).collect(),
            ..Default::default()
        };
        let mut svc = Self {
            config,
            conditions,
            registry: Mutex::new(registry),
            sessions: RwLock::new(BTreeMap::new()),
            log: None,
            snapshot_due: AtomicBool::new(false),
            clock,
        };
        if let Some(dir) = data_dir {
            let (log, records) = EventLog::open(&dir)?;
            for r in records {
                svc.restore(r)?;
            }
            svc.log = Some(Mutex::new(log));
        }
        Ok(svc)
    }

    pub fn config(&self) -> &StudyConfig {
        &self.config
    }

    fn condition(&self, id: &str) -> Option<&Condition> {
        self.conditions.iter().find(|c| c.config.condition_id == id)
    }

    fn restore(&self, record: LogRecord) -> Result<(), ServiceError> {
        match record {
            LogRecord::Enrolled {
                session_id,
                user_id,
                condition_id,
                sequence_id,
                started_at,
            } => {
                let replay_err = |message: String| ServiceError::Replay {
                    session_id: session_id.clone(),
                    message,
                };
                let cond = self.condition(&condition_id).ok_or_else(|| replay_err(format!("unknown condition {condition_id}")))?;
                let seq = cond
                    .sequences
                    .iter()
                    .find(|s| s.sequence_id == sequence_id)
                    .ok_or_else(|| replay_err(format!("unknown sequence {sequence_id}")))?;
                let state = SessionState::start(
                    SessionHeader {
                        session_id: session_id.clone(),
                        user_id: user_id.clone(),
                        condition_id: condition_id.clone(),
                    },
                    cond.engine.clone(),
                    Arc::clone(seq),
                )?;
                let mut reg = self.registry.lock().expect("registry lock");
                reg.users.insert(user_id, session_id.clone());
                *reg.counts.entry(condition_id).or_default() += 1;
                reg.enrollments += 1;
                self.sessions.write().expect("sessions lock").insert(
                    session_id,
                    Arc::new(Mutex::new(Live {
                        state,
                        started_at,
                        settlement: None,
                        client_events: Vec::new(),
                    })),
                );
            }
            LogRecord::Protocol { session_id, event } => {
                let live = self.live(&session_id)?;
                let mut live = live.lock().expect("session lock");
                live.state.apply(event).map_err(|e| ServiceError::Replay {
                    session_id: session_id.clone(),
                    message: e.to_string(),
                })?;
            }
            r @ LogRecord::Client { .. } => {
                let LogRecord::Client { session_id, .. } = &r else { unreachable!() };
                let live = self.live(session_id)?;
                live.lock().expect("session lock").client_events.push(r);
            }
            LogRecord::Finalized { session_id, settlement } => {
                let live = self.live(&session_id)?;
                live.lock().expect("session lock").settlement = Some(settlement);
            }
        }
        Ok(())
    }

    fn persist(&self, record: &LogRecord) -> Result<(), ServiceError> {
        let Some(log) = &self.log else { return Ok(()) };
        let mut log = log.lock().expect("log lock");
        log.append(record)?;
        let every = self.config.snapshot_every;
        if every > 0 && log.lines() % every == 0 {
            self.snapshot_due.store(true, Ordering::SeqCst);
        }
        Ok(())
    }

    /// Called with no session lock held. A busy session postpones the
    /// snapshot to a later write.
    fn maybe_snapshot(&self) {
        if self.snapshot_due.load(Ordering::SeqCst) {
            match self.try_snapshot() {
                Ok(()) => self.snapshot_due.store(false, Ordering::SeqCst),
                Err(e) => ::log::debug!("snapshot postponed: {e}"),
            }
        }
    }

    fn try_snapshot(&self) -> Result<(), ServiceError> {
        let Some(log) = &self.log else { return Ok(()) };
        // Holding the log lock keeps the records in step with the line count.
        let log = log.lock().expect("log lock");
        let sessions = self.sessions.read().expect("sessions lock");
        let mut records = Vec::new();
        for live in sessions.values() {
            let Ok(live) = live.try_lock() else {
                return Err(ServiceError::Io("a session is busy".into()));
            };
            records.extend(records_of(&live));
        }
        log.write_snapshot(records)
    }

    /// Writes a snapshot of every session now.
    pub fn snapshot(&self) -> Result<(), ServiceError> {
        self.try_snapshot()
    }

    fn live(&self, session_id: &str) -> Result<Arc<Mutex<Live>>, ServiceError> {
        self.sessions
            .read()
            .expect("sessions lock")
            .get(session_id)
            .cloned()
            .ok_or_else(|| ServiceError::UnknownSession(session_id.to_string()))
    }

    /// Enrolls `user_id`: least-filled condition (ties at random), sequence
    /// uniformly at random.
    pub fn create_session(&self, user_id: &str) -> Result<Enrollment, ServiceError> {
        let enrollment = self.enroll(user_id)?;
        self.maybe_snapshot();
        Ok(enrollment)
    }

    fn enroll(&self, user_id: &str) -> Result<Enrollment, ServiceError> {
        let mut reg = self.registry.lock().expect("registry lock");
        if reg.users.contains_key(user_id) {
            return Err(ServiceError::AlreadyEnrolled(user_id.to_string()));
        }
        let mut rng = substream(self.config.seed, &[label::ASSIGNMENT, reg.enrollments]);
        let counts: Vec<usize> = self.conditions.iter().map(|c| reg.counts[&c.config.condition_id]).collect();
        let least = *counts.iter().min().expect("at least one condition");
        let tied: Vec<usize> = (0..counts.len()).filter(|&i| counts[i] == least).collect();
        let cond = &self.conditions[tied[rng.random_range(0..tied.len())]];
        let seq = Arc::clone(&cond.sequences[rng.random_range(0..cond.sequences.len())]);

        let mut h = Sha256::new();
        h.update(self.config.study_id.as_bytes());
        h.update(reg.enrollments.to_le_bytes());
        h.update(user_id.as_bytes());
        h.update(self.config.seed.to_le_bytes());
        let session_id: String = h.finalize()[..12].iter().map(|b| format!("{b:02x}")).collect();

        let started_at = self.clock.now_ms();
        let state = SessionState::start(
            SessionHeader {
                session_id: session_id.clone(),
                user_id: user_id.to_string(),
                condition_id: cond.config.condition_id.clone(),
            },
            cond.engine.clone(),
            Arc::clone(&seq),
        )?;
        self.persist(&LogRecord::Enrolled {
            session_id: session_id.clone(),
            user_id: user_id.to_string(),
            condition_id: cond.config.condition_id.clone(),
            sequence_id: seq.sequence_id.clone(),
            started_at,
        })?;
        reg.users.insert(user_id.to_string(), session_id.clone());
        *reg.counts.get_mut(&cond.config.condition_id).expect("known condition") += 1;
        reg.enrollments += 1;
        self.sessions.write().expect("sessions lock").insert(
            session_id.clone(),
            Arc::new(Mutex::new(Live {
                state,
                started_at,
                settlement: None,
                client_events: Vec::new(),
            })),
        );
        Ok(Enrollment {
            session_id,
            user_id: user_id.to_string(),
            condition_id: cond.config.condition_id.clone(),
            sequence_id: seq.sequence_id.clone(),
            planned_length: seq.len(),
        })
    }

    /// Enrolled sessions per condition.
    pub fn condition_counts(&self) -> BTreeMap<String, usize> {
        self.registry.lock().expect("registry lock").counts.clone()
    }

    pub fn get_problem(&self, session_id: &str) -> Result<ProblemView, ServiceError> {
        let live = self.live(session_id)?;
        let live = live.lock().expect("session lock");
        let now = live.rel(self.clock.now_ms());
        let st = &live.state;
        let problem = st.current_problem().ok_or(EngineError::WrongStage {
            expected: Stage::AwaitingInitial,
            actual: Stage::Finished,
        })?;
        Ok(ProblemView {
            index: st.current_item(),
            total: st.sequence().len(),
            problem_id: problem.problem_id.clone(),
            prompt: problem.prompt.clone(),
            options: problem.options.clone(),
            stage: st.effective_stage(now),
            reading_gate_remaining_ms: if st.stage() == Stage::AwaitingInitial { st.reading_gate_remaining(now) } else { 0 },
        })
    }

    fn mutate<T>(&self, session_id: &str, f: impl FnOnce(&mut SessionState, u64) -> Result<SessionEvent, EngineError>, out: impl FnOnce(&Live) -> T) -> Result<T, ServiceError> {
        let result = {
            let live = self.live(session_id)?;
            let mut live = live.lock().expect("session lock");
            let now = live.rel(self.clock.now_ms());
            let before = live.state.clone();
            let event = f(&mut live.state, now)?;
            if let Err(e) = self.persist(&LogRecord::Protocol {
                session_id: session_id.to_string(),
                event,
            }) {
                live.state = before;
                return Err(e);
            }
            out(&live)
        };
        self.maybe_snapshot();
        Ok(result)
    }

    pub fn post_initial(&self, session_id: &str, decision: usize) -> Result<Progress, ServiceError> {
        self.mutate(
            session_id,
            |st, now| {
                st.submit_initial(decision, now)?;
                Ok(SessionEvent::Initial { decision, at: now })
            },
            |live| progress(live, self.clock.now_ms()),
        )
    }

    /// The policy-filtered advice, or a "thinking" placeholder during an
    /// embargo. Both carry the remaining gate time.
    pub fn get_advice(&self, session_id: &str) -> Result<AdviceStatus, ServiceError> {
        let live = self.live(session_id)?;
        let live = live.lock().expect("session lock");
        let now = live.rel(self.clock.now_ms());
        Ok(live.state.advice(now)?)
    }

    /// Records the final decision and returns the round's correctness.
    pub fn post_final(&self, session_id: &str, decision: usize) -> Result<RoundFeedback, ServiceError> {
        self.mutate(
            session_id,
            |st, now| {
                st.submit_final(decision, now)?;
                Ok(SessionEvent::Final { decision, at: now })
            },
            |live| live.state.feedback().expect("feedback after final"),
        )
    }

    pub fn post_trust(&self, session_id: &str, trust: i64) -> Result<Progress, ServiceError> {
        self.mutate(
            session_id,
            |st, now| {
                st.submit_trust(trust, now)?;
                Ok(SessionEvent::Trust { trust, at: now })
            },
            |live| progress(live, self.clock.now_ms()),
        )
    }

    pub fn get_progress(&self, session_id: &str) -> Result<Progress, ServiceError> {
        let live = self.live(session_id)?;
        let live = live.lock().expect("session lock");
        Ok(progress(&live, self.clock.now_ms()))
    }

    /// Logs a client-side event (tab change and the like).
    pub fn post_client_event(&self, session_id: &str, name: &str, detail: serde_json::Value) -> Result<(), ServiceError> {
        {
            let live = self.live(session_id)?;
            let mut live = live.lock().expect("session lock");
            let record = LogRecord::Client {
                session_id: session_id.to_string(),
                at: live.rel(self.clock.now_ms()),
                name: name.to_string(),
                detail,
            };
            self.persist(&record)?;
            live.client_events.push(record);
        }
        self.maybe_snapshot();
        Ok(())
    }

    /// Settles a finished session. Repeated calls return the first record.
    pub fn finalize_session(&self, session_id: &str) -> Result<SettlementRecord, ServiceError> {
        let record = self.settle_session(session_id)?;
        self.maybe_snapshot();
        Ok(record)
    }

    fn settle_session(&self, session_id: &str) -> Result<SettlementRecord, ServiceError> {
        let live = self.live(session_id)?;
        let mut live = live.lock().expect("session lock");
        if let Some(s) = &live.settlement {
            return Ok(s.clone());
        }
        if !live.state.is_finished() {
            return Err(ServiceError::NotFinished(session_id.to_string()));
        }
        let record = settle(live.state.session(), &self.config.payment, self.config.min_initial_accuracy);
        self.persist(&LogRecord::Finalized {
            session_id: session_id.to_string(),
            settlement: record.clone(),
        })?;
        live.settlement = Some(record.clone());
        Ok(record)
    }

    /// Every session as it stands, ordered by session id. Each session is
    /// read under its own lock, so each record is a consistent prefix.
    pub fn export(&self) -> Vec<ExportRecord> {
        let sessions = self.sessions.read().expect("sessions lock");
        sessions
            .values()
            .map(|live| {
                let live = live.lock().expect("session lock");
                ExportRecord {
                    schema_version: SCHEMA_VERSION,
                    complete: live.state.is_finished(),
                    session: live.state.session().clone(),
                    settlement: live.settlement.clone(),
                }
            })
            .collect()
    }

    /// Accepted protocol events of a session.
    pub fn events(&self, session_id: &str) -> Result<Vec<SessionEvent>, ServiceError> {
        let live = self.live(session_id)?;
        let live = live.lock().expect("session lock");
        Ok(live.state.events().to_vec())
    }

    pub fn client_events(&self, session_id: &str) -> Result<Vec<LogRecord>, ServiceError> {
        let live = self.live(session_id)?;
        let live = live.lock().expect("session lock");
        Ok(live.client_events.clone())
    }
}

fn records_of(live: &Live) -> Vec<LogRecord> {
    let s = live.state.session();
    let mut out = vec![LogRecord::Enrolled {
        session_id: s.session_id.clone(),
        user_id: s.user_id.clone(),
        condition_id: s.condition_id.clone(),
        sequence_id: s.sequence_id.clone(),
        started_at: live.started_at,
    }];
    out.extend(live.state.events().iter().map(|e| LogRecord::Protocol {
        session_id: s.session_id.clone(),
        event: *e,
    }));
    out.extend(live.client_events.iter().cloned());
    if let Some(settlement) = &live.settlement {
        out.push(LogRecord::Finalized {
            session_id: s.session_id.clone(),
            settlement: settlement.clone(),
        });
    }
    out
}

fn progress(live: &Live, now_abs: u64) -> Progress {
    let s = live.state.session();
    Progress {
        session_id: s.session_id.clone(),
        completed: s.interactions.len(),
        total: s.planned_length,
        stage: live.state.effective_stage(live.rel(now_abs)),
        finished: live.state.is_finished(),
        correct_finals: s.interactions.iter().filter(|i| i.final_correct()).count(),
        last_trust: s.interactions.last().map(|i| i.trust_report),
    }
}

/// Serializes export records as JSON lines.
pub fn export_jsonl(records: &[ExportRecord]) -> String {
    let mut s = String::new();
    for r in records {
        s.push_str(&serde_json::to_string(r).expect("serializable"));
        s.push('\n');
    }
    s
}

/// Parses an export back into records. Rejects unknown schema versions.
pub fn import_jsonl(text: &str) -> Result<Vec<ExportRecord>, ServiceError> {
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let r: ExportRecord = serde_json::from_str(line).map_err(|e| ServiceError::Corrupt {
            file: "export".into(),
            line: i + 1,
            message: e.to_string(),
        })?;
        if r.schema_version != SCHEMA_VERSION {
            return Err(ServiceError::Corrupt {
                file: "export".into(),
                line: i + 1,
                message: format!("unsupported schema_version {}", r.schema_version),
            });
        }
        out.push(r);
    }
    Ok(out)
}

/// Complete sessions fit for analysis: finished and not rejected by the
/// quality gate (unsettled sessions count as not rejected).
pub fn analysis_sessions(records: &[ExportRecord]) -> Vec<Session> {
    records
        .iter()
        .filter(|r| r.complete && !r.settlement.as_ref().is_some_and(|s| s.rejected_for_analysis))
        .map(|r| r.session.clone())
        .collect()
}

/// Runs synthetic participants through every condition of a study.
/// Conditions sharing an assistant source see the same sequences and are
/// simulated together, each group on its own derived seed.
pub fn simulate_config(
    study: &StudyConfig,
    base: &Path,
    users_per_condition: usize,
    user_model: &UserModel,
    think_times: ThinkTimes,
    seed: u64,
) -> Result<Vec<SimulatedSession>, ServiceError> {
    study.check()?;
    let mut groups: Vec<(&AssistantSource, Vec<SimCondition>)> = Vec::new();
    for cond in &study.conditions {
        let sc = SimCondition {
            condition_id: cond.condition_id.clone(),
            engine: cond.engine(),
        };
        match groups.iter_mut().find(|(src, _)| **src == cond.assistant) {
            Some((_, list)) => list.push(sc),
            None => groups.push((&cond.assistant, vec![sc])),
        }
    }
    let mut out = Vec::new();
    for (g, (source, conditions)) in groups.into_iter().enumerate() {
        let sequences: Vec<ProblemSequence> = source.resolve(base)?.into_iter().map(Arc::unwrap_or_clone).collect();
        let cfg = SimulationConfig {
            conditions,
            users_per_condition,
            user_model: user_model.clone(),
            think_times,
            seed: derive_key(seed, &[g as u64]),
        };
        out.extend(simulate_study(&cfg, &sequences).map_err(|e| ServiceError::Config(e.to_string()))?);
    }
    Ok(out)
}

/// Export records for simulated sessions, settled under the study's payment.
pub fn simulated_records(study: &StudyConfig, sessions: &[SimulatedSession]) -> Vec<ExportRecord> {
    sessions
        .iter()
        .map(|s| ExportRecord {
            schema_version: SCHEMA_VERSION,
            complete: s.session.is_complete(),
            settlement: Some(settle(&s.session, &study.payment, study.min_initial_accuracy)),
            session: s.session.clone(),
        })
        .collect()
}

/// Reads a file holding either export records or bare sessions, one JSON
/// value per line. Bare sessions become unsettled records.
pub fn read_records(path: &Path) -> Result<Vec<ExportRecord>, ServiceError> {
    let text = std::fs::read_to_string(path).map_err(|e| ServiceError::Io(format!("{}: {e}", path.display())))?;
    let corrupt = |i: usize, e: serde_json::Error| ServiceError::Corrupt {
        file: path.display().to_string(),
        line: i + 1,
        message: e.to_string(),
    };
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let v: serde_json::Value = serde_json::from_str(line).map_err(|e| corrupt(i, e))?;
        let record = if v.get("session").is_some() {
            serde_json::from_value::<ExportRecord>(v).map_err(|e| corrupt(i, e))?
        } else {
            let session = serde_json::from_value::<Session>(v).map_err(|e| corrupt(i, e))?;
            ExportRecord {
                schema_version: SCHEMA_VERSION,
                complete: session.is_complete(),
                session,
                settlement: None,
            }
        };
        out.push(record);
    }
    Ok(out)
}

/// All sessions in `path`, complete or not.
pub fn read_sessions(path: &Path) -> Result<Vec<Session>, ServiceError> {
    Ok(read_records(path)?.into_iter().map(|r| r.session).collect())
}
