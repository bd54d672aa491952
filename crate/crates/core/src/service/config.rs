use std::collections::BTreeSet;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use super::ServiceError;
use crate::assistant::{generate_sequences, AssistantKind, AssistantProfile, SequenceSpec};
use crate::domain::{Problem, ProblemSequence};
use crate::engine::{EngineConfig, READING_GATE_MS};
use crate::ingestion::{builtin_arc, builtin_diagnosis, read_jsonl};
use crate::policy::{PolicyConfig, PolicyKind};
use crate::simulate::with_placeholder_explanations;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ProblemPool {
    Arc,
    Diagnosis,
    /// JSON-lines file of problems.
    File(PathBuf),
}

impl ProblemPool {
    pub fn load(&self, base: &Path) -> Result<Vec<Problem>, ServiceError> {
        Ok(match self {
            ProblemPool::Arc => builtin_arc(),
            ProblemPool::Diagnosis => builtin_diagnosis(),
            ProblemPool::File(p) => read_jsonl(base.join(p)).map_err(|e| ServiceError::Config(e.to_string()))?,
        })
    }
}

/// Where a condition's recommendations come from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AssistantSource {
    /// Sequences sampled from a simulated assistant profile, with
    /// placeholder explanation texts.
    Simulated {
        pool: ProblemPool,
        profile: AssistantKind,
        #[serde(default = "default_n_sequences")]
        n_sequences: usize,
        #[serde(default = "default_length")]
        length: usize,
        #[serde(default)]
        seed: u64,
    },
    /// Pre-generated sequences (for example from the LLM adapter), one JSON
    /// sequence per line.
    Sequences { path: PathBuf },
}

fn default_n_sequences() -> usize {
    10
}

fn default_length() -> usize {
    30
}

impl AssistantSource {
    pub fn resolve(&self, base: &Path) -> Result<Vec<Arc<ProblemSequence>>, ServiceError> {
        let seqs: Vec<ProblemSequence> = match self {
            AssistantSource::Simulated {
                pool,
                profile,
                n_sequences,
                length,
                seed,
            } => {
                let problems = pool.load(base)?;
                let profile = match profile {
                    AssistantKind::Calibrated => AssistantProfile::calibrated(*seed),
                    AssistantKind::Overconfident => AssistantProfile::overconfident(*seed),
                };
                generate_sequences(&problems, &profile, &SequenceSpec::new(*n_sequences, *length, *seed))
                    .map_err(|e| ServiceError::Config(e.to_string()))?
                    .iter()
                    .map(with_placeholder_explanations)
                    .collect()
            }
            AssistantSource::Sequences { path } => read_jsonl(base.join(path)).map_err(|e| ServiceError::Config(e.to_string()))?,
        };
        if seqs.is_empty() {
            return Err(ServiceError::Config("assistant source yields no sequences".into()));
        }
        Ok(seqs.into_iter().map(Arc::new).collect())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConditionConfig {
    pub condition_id: String,
    pub policy: PolicyConfig,
    pub assistant: AssistantSource,
    #[serde(default = "default_reading_gate")]
    pub reading_gate_ms: u64,
}

fn default_reading_gate() -> u64 {
    READING_GATE_MS
}

impl ConditionConfig {
    pub fn engine(&self) -> EngineConfig {
        EngineConfig {
            policy: self.policy.clone(),
            reading_gate_ms: self.reading_gate_ms,
        }
    }
}

/// Amounts in cents.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Payment {
    pub base_cents: u64,
    pub per_correct_cents: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StudyConfig {
    pub study_id: String,
    /// Task setting label, e.g. `ArcC`.
    pub task: String,
    pub conditions: Vec<ConditionConfig>,
    #[serde(default = "default_target")]
    pub target_per_condition: usize,
    pub payment: Payment,
    /// Sessions whose initial-decision accuracy falls below this are
    /// flagged as rejected for analysis (still paid).
    #[serde(default = "default_quality_gate")]
    pub min_initial_accuracy: f64,
    #[serde(default)]
    pub seed: u64,
    /// Snapshot after this many logged records; 0 disables.
    #[serde(default = "default_snapshot_every")]
    pub snapshot_every: usize,
}

fn default_target() -> usize {
    30
}

fn default_quality_gate() -> f64 {
    0.35
}

fn default_snapshot_every() -> usize {
    500
}

impl StudyConfig {
    pub fn check(&self) -> Result<(), ServiceError> {
        if self.conditions.is_empty() {
            return Err(ServiceError::Config("at least one condition is required".into()));
        }
        let mut ids = BTreeSet::new();
        for c in &self.conditions {
            if !ids.insert(c.condition_id.as_str()) {
                return Err(ServiceError::Config(format!("duplicate condition id {}", c.condition_id)));
            }
            c.policy.check().map_err(|e| ServiceError::Config(format!("condition {}: {e}", c.condition_id)))?;
        }
        if !(0.0..=1.0).contains(&self.min_initial_accuracy) {
            return Err(ServiceError::Config("min_initial_accuracy must lie in [0, 1]".into()));
        }
        Ok(())
    }

    pub fn from_json(text: &str) -> Result<Self, ServiceError> {
        let cfg: StudyConfig = serde_json::from_str(text).map_err(|e| ServiceError::Config(format!("line {} column {}: {e}", e.line(), e.column())))?;
        cfg.check()?;
        Ok(cfg)
    }

    /// Ready-made settings: `ArcC`/`ArcO` (science questions, calibrated or
    /// overconfident assistant) and `DiagC`/`DiagO`, each with a control, an
    /// explanation and a deceleration condition.
    pub fn preset(name: &str) -> Option<Self> {
        let (pool, profile, base, target) = match name {
            "ArcC" => (ProblemPool::Arc, AssistantKind::Calibrated, 100, 30),
            "ArcO" => (ProblemPool::Arc, AssistantKind::Overconfident, 100, 30),
            "DiagC" => (ProblemPool::Diagnosis, AssistantKind::Calibrated, 200, 20),
            "DiagO" => (ProblemPool::Diagnosis, AssistantKind::Overconfident, 200, 20),
            _ => return None,
        };
        let assistant = AssistantSource::Simulated {
            pool,
            profile,
            n_sequences: 10,
            length: 30,
            seed: 0,
        };
        let condition = |id: &str, kind| ConditionConfig {
            condition_id: id.into(),
            policy: PolicyConfig::new(kind),
            assistant: assistant.clone(),
            reading_gate_ms: READING_GATE_MS,
        };
        Some(Self {
            study_id: name.to_lowercase(),
            task: name.into(),
            conditions: vec![
                condition("control", PolicyKind::NoIntervention),
                condition("explanations", PolicyKind::BothAdaptive),
                condition("decelerations", PolicyKind::ThinkingAndPauseAdaptive),
            ],
            target_per_condition: target,
            payment: Payment {
                base_cents: base,
                per_correct_cents: 10,
            },
            min_initial_accuracy: default_quality_gate(),
            seed: 0,
            snapshot_every: default_snapshot_every(),
        })
    }
}
