//! Shared vocabulary: problems, recommendations, trust reports, interactions
//! and sessions, plus invariant checks that report violations as data.

use std::collections::HashSet;
use std::fmt;

use serde::{Deserialize, Serialize};

/// Default number of problems in a session.
pub const DEFAULT_SESSION_LENGTH: usize = 30;

/// Lowest confidence an assistant may display.
pub const MIN_CONFIDENCE: f64 = 0.5;
/// Highest confidence an assistant may display.
pub const MAX_CONFIDENCE: f64 = 1.0;

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TaskId {
    Arc,
    Diagnosis,
    Custom(String),
}

impl TaskId {
    /// Word used in explanation prompts for "the correct ___".
    pub fn answer_noun(&self) -> &'static str {
        match self {
            TaskId::Diagnosis => "diagnosis",
            _ => "answer",
        }
    }
}

/// One multiple-choice decision-making item.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Problem {
    pub problem_id: String,
    pub task_id: TaskId,
    pub prompt: String,
    pub options: Vec<String>,
    pub correct_index: usize,
}

impl Problem {
    pub fn num_options(&self) -> usize {
        self.options.len()
    }

    /// Indices of every option other than the correct one.
    pub fn wrong_indices(&self) -> impl Iterator<Item = usize> + '_ {
        (0..self.options.len()).filter(move |&i| i != self.correct_index)
    }
}

/// Assistant output for one problem.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Recommendation {
    pub prediction_index: usize,
    pub confidence: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub support_explanation: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub counter_explanation: Option<String>,
}

impl Recommendation {
    pub fn new(prediction_index: usize, confidence: f64) -> Self {
        Self {
            prediction_index,
            confidence,
            support_explanation: None,
            counter_explanation: None,
        }
    }

    /// Confidence as a whole percentage, rounded half-up.
    pub fn confidence_percent(&self) -> u8 {
        display_percent(self.confidence)
    }

    pub fn is_correct_for(&self, problem: &Problem) -> bool {
        self.prediction_index == problem.correct_index
    }
}

/// Rounds a probability to a whole percentage, half-up. The small epsilon
/// absorbs binary representation error (0.725 * 100 = 72.49999...).
pub fn display_percent(p: f64) -> u8 {
    (p * 100.0 + 0.5 + 1e-9).floor().clamp(0.0, 100.0) as u8
}

/// Self-reported trust on the 0..=10 integer scale.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(try_from = "i64", into = "u8")]
pub struct TrustLevel(u8);

impl TrustLevel {
    pub const MIN: TrustLevel = TrustLevel(0);
    pub const MAX: TrustLevel = TrustLevel(10);

    pub fn new(value: i64) -> Result<Self, Violation> {
        if (0..=10).contains(&value) {
            Ok(TrustLevel(value as u8))
        } else {
            Err(Violation::new("trust", format!("trust outside 0..10: {value}")))
        }
    }

    pub fn value(self) -> u8 {
        self.0
    }

    pub fn all() -> impl Iterator<Item = TrustLevel> {
        (0..=10u8).map(TrustLevel)
    }
}

impl TryFrom<i64> for TrustLevel {
    type Error = Violation;

    fn try_from(value: i64) -> Result<Self, Self::Error> {
        TrustLevel::new(value)
    }
}

impl From<TrustLevel> for u8 {
    fn from(t: TrustLevel) -> u8 {
        t.0
    }
}

impl fmt::Display for TrustLevel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

/// Assistant behavior applied in a round.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Intervention {
    #[default]
    None,
    ShowSupport,
    ShowCounter,
    AiThinking,
    ForcedPause,
}

impl Intervention {
    pub const ALL: [Intervention; 5] = [
        Intervention::None,
        Intervention::ShowSupport,
        Intervention::ShowCounter,
        Intervention::AiThinking,
        Intervention::ForcedPause,
    ];
}

/// Milliseconds from session start at which each protocol stage happened.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct StageTimestamps {
    pub problem_shown: u64,
    pub initial_submitted: u64,
    pub advice_shown: u64,
    pub final_submitted: u64,
    pub trust_submitted: u64,
}

impl StageTimestamps {
    pub fn as_array(&self) -> [u64; 5] {
        [
            self.problem_shown,
            self.initial_submitted,
            self.advice_shown,
            self.final_submitted,
            self.trust_submitted,
        ]
    }
}

/// One completed protocol round.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Interaction {
    pub index: usize,
    pub problem_id: String,
    pub num_options: usize,
    pub correct_index: usize,
    pub recommendation: Recommendation,
    pub initial_decision: usize,
    pub final_decision: usize,
    pub trust_report: TrustLevel,
    pub intervention: Intervention,
    pub timestamps: StageTimestamps,
}

impl Interaction {
    pub fn ai_prediction(&self) -> usize {
        self.recommendation.prediction_index
    }

    pub fn ai_correct(&self) -> bool {
        self.recommendation.prediction_index == self.correct_index
    }

    pub fn initial_correct(&self) -> bool {
        self.initial_decision == self.correct_index
    }

    pub fn final_correct(&self) -> bool {
        self.final_decision == self.correct_index
    }

    /// The user's independent decision differed from the AI prediction.
    pub fn disagreed(&self) -> bool {
        self.initial_decision != self.ai_prediction()
    }

    /// Disagreed initially and adopted the AI prediction as the final decision.
    pub fn switched_to_ai(&self) -> bool {
        self.disagreed() && self.final_decision == self.ai_prediction()
    }
}

/// An ordered run of interactions for one participant.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Session {
    pub session_id: String,
    pub user_id: String,
    pub condition_id: String,
    pub sequence_id: String,
    pub assistant_profile_id: String,
    pub planned_length: usize,
    pub interactions: Vec<Interaction>,
}

impl Session {
    pub fn is_complete(&self) -> bool {
        self.interactions.len() == self.planned_length
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SequenceItem {
    pub problem: Problem,
    pub recommendation: Recommendation,
}

/// A fixed list of problems, each with its pre-bound recommendation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProblemSequence {
    pub sequence_id: String,
    #[serde(default)]
    pub assistant_profile_id: String,
    pub items: Vec<SequenceItem>,
}

impl ProblemSequence {
    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    /// Fraction of items whose recommendation is correct.
    pub fn ai_accuracy(&self) -> f64 {
        if self.items.is_empty() {
            return 0.0;
        }
        let correct = self
            .items
            .iter()
            .filter(|it| it.recommendation.is_correct_for(&it.problem))
            .count();
        correct as f64 / self.items.len() as f64
    }
}

/// A broken invariant, reported as data.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize, thiserror::Error)]
#[error("{field}: {message}")]
pub struct Violation {
    pub field: String,
    pub message: String,
}

impl Violation {
    pub fn new(field: impl Into<String>, message: impl Into<String>) -> Self {
        Self {
            field: field.into(),
            message: message.into(),
        }
    }
}

/// Invariant checking. Implementations never mutate and are deterministic.
pub trait Validate {
    fn violations(&self) -> Vec<Violation>;

    fn validate(&self) -> Result<(), Vec<Violation>> {
        let v = self.violations();
        if v.is_empty() {
            Ok(())
        } else {
            Err(v)
        }
    }
}

/// Checks a raw trust value as it would arrive from a participant.
pub fn validate_trust_value(value: i64) -> Result<(), Vec<Violation>> {
    TrustLevel::new(value).map(|_| ()).map_err(|v| vec![v])
}

impl Validate for Problem {
    fn violations(&self) -> Vec<Violation> {
        let mut out = Vec::new();
        let n = self.options.len();
        if n < 2 {
            out.push(Violation::new("options", format!("need at least 2 options, got {n}")));
        }
        match self.task_id {
            TaskId::Arc if n != 2 => {
                out.push(Violation::new("options", format!("ARC problems have exactly 2 options, got {n}")))
            }
            TaskId::Diagnosis if n != 4 => out.push(Violation::new(
                "options",
                format!("Diagnosis problems have exactly 4 options, got {n}"),
            )),
            _ => {}
        }
        if self.correct_index >= n {
            out.push(Violation::new(
                "correct_index",
                format!("correct_index {} out of range for {n} options", self.correct_index),
            ));
        }
        let mut seen = HashSet::new();
        for opt in &self.options {
            if !seen.insert(opt.as_str()) {
                out.push(Violation::new("options", format!("duplicate option text {opt:?}")));
            }
        }
        out
    }
}

fn confidence_violations(confidence: f64) -> Option<Violation> {
    if confidence.is_nan() {
        Some(Violation::new("confidence", "confidence is NaN"))
    } else if confidence < MIN_CONFIDENCE {
        Some(Violation::new("confidence", format!("confidence below 0.5: {confidence}")))
    } else if confidence > MAX_CONFIDENCE {
        Some(Violation::new("confidence", format!("confidence above 1.0: {confidence}")))
    } else {
        None
    }
}

impl Validate for Recommendation {
    fn violations(&self) -> Vec<Violation> {
        confidence_violations(self.confidence).into_iter().collect()
    }
}

/// Recommendation checked against the problem it is bound to.
pub fn recommendation_violations(rec: &Recommendation, problem: &Problem) -> Vec<Violation> {
    let mut out = rec.violations();
    if rec.prediction_index >= problem.options.len() {
        out.push(Violation::new(
            "prediction_index",
            format!(
                "prediction {} invalid for problem {} with {} options",
                rec.prediction_index,
                problem.problem_id,
                problem.options.len()
            ),
        ));
    }
    out
}

impl Validate for TrustLevel {
    fn violations(&self) -> Vec<Violation> {
        if self.0 > 10 {
            vec![Violation::new("trust", format!("trust outside 0..10: {}", self.0))]
        } else {
            Vec::new()
        }
    }
}

impl Validate for Interaction {
    fn violations(&self) -> Vec<Violation> {
        let mut out = Vec::new();
        let ts = self.timestamps.as_array();
        if ts.windows(2).any(|w| w[1] < w[0]) {
            out.push(Violation::new("timestamps", format!("stage timestamps not monotone: {ts:?}")));
        }
        if self.initial_decision >= self.num_options {
            out.push(Violation::new("initial_decision", "initial decision is not a valid option"));
        }
        if self.final_decision >= self.num_options {
            out.push(Violation::new("final_decision", "final decision is not a valid option"));
        }
        if self.correct_index >= self.num_options {
            out.push(Violation::new("correct_index", "correct index is not a valid option"));
        }
        if self.recommendation.prediction_index >= self.num_options {
            out.push(Violation::new("prediction_index", "AI prediction is not a valid option"));
        }
        out.extend(self.recommendation.violations());
        out
    }
}

impl Validate for Session {
    fn violations(&self) -> Vec<Violation> {
        let mut out = Vec::new();
        if self.interactions.len() > self.planned_length {
            out.push(Violation::new(
                "interactions",
                format!("{} interactions exceed planned length {}", self.interactions.len(), self.planned_length),
            ));
        }
        for (i, it) in self.interactions.iter().enumerate() {
            if it.index != i {
                out.push(Violation::new("interactions", format!("interaction at position {i} has index {}", it.index)));
            }
            for v in it.violations() {
                out.push(Violation::new(format!("interactions[{i}].{}", v.field), v.message));
            }
        }
        out
    }
}

impl Validate for ProblemSequence {
    fn violations(&self) -> Vec<Violation> {
        let mut out = Vec::new();
        for (i, item) in self.items.iter().enumerate() {
            for v in item.problem.violations() {
                out.push(Violation::new(format!("items[{i}].problem.{}", v.field), v.message));
            }
            for v in recommendation_violations(&item.recommendation, &item.problem) {
                out.push(Violation::new(format!("items[{i}].recommendation.{}", v.field), v.message));
            }
        }
        out
    }
}
