//! Independent reference implementations shared by the integration tests.
#![allow(dead_code)]

use rand::Rng;
use trustlab::llm::{GenerationRequest, LlmError, TextGenerator};
use trustlab::policy::PolicyKind;
use trustlab::{Intervention, Interaction, Problem, Recommendation, Session, StageTimestamps, TaskId, TrustLevel};

/// Hand-written decision table, one row per trust level 0..=10, columns in
/// `PolicyKind::ALL` order. `-` none, `S` support, `C` counter, `T` thinking,
/// `P` pause.
pub const TRUTH_TABLE: [&str; 11] = [
    "-SCS-ST-T", // 0
    "-SCS-ST-T", // 1
    "-SCS-ST-T", // 2
    "-SCS-ST-T", // 3
    "-SCS-ST-T", // 4
    "-SC------", // 5
    "-SC------", // 6
    "-SC------", // 7
    "-SC------", // 8
    "-SC-CC-PP", // 9
    "-SC-CC-PP", // 10
];

/// Row for a session's first round, where no trust has been reported.
pub const FIRST_ROUND: &str = "-SC------";

pub fn kind_column(kind: PolicyKind) -> usize {
    PolicyKind::ALL.iter().position(|k| *k == kind).unwrap()
}

/// Expected (action, pre-reveal delay ms, post-reveal gate ms).
pub fn expected_decision(kind: PolicyKind, prior: Option<u8>) -> (Intervention, u64, u64) {
    let row = match prior {
        Some(t) => TRUTH_TABLE[t as usize],
        None => FIRST_ROUND,
    };
    match row.as_bytes()[kind_column(kind)] {
        b'-' => (Intervention::None, 0, 0),
        b'S' => (Intervention::ShowSupport, 0, 15_000),
        b'C' => (Intervention::ShowCounter, 0, 15_000),
        b'T' => (Intervention::AiThinking, 10_000, 0),
        b'P' => (Intervention::ForcedPause, 0, 10_000),
        c => panic!("bad table cell {c}"),
    }
}

/// Reliance counts as exact fractions, computed by direct enumeration.
#[derive(Debug, Default, Clone, Copy, PartialEq, Eq)]
pub struct Tally {
    pub n: u64,
    pub switched: u64,
    pub final_correct: u64,
    pub ai_right: u64,
    pub ai_right_kept: u64,
    pub ai_wrong: u64,
    pub ai_wrong_taken: u64,
}

impl Tally {
    pub fn switch(&self) -> Option<f64> {
        ratio(self.switched, self.n)
    }
    pub fn accuracy(&self) -> Option<f64> {
        ratio(self.final_correct, self.n)
    }
    pub fn under(&self) -> Option<f64> {
        ratio(self.ai_right_kept, self.ai_right)
    }
    pub fn over(&self) -> Option<f64> {
        ratio(self.ai_wrong_taken, self.ai_wrong)
    }
    pub fn total(&self) -> Option<f64> {
        Some(self.under()? + self.over()?)
    }
}

fn ratio(a: u64, b: u64) -> Option<f64> {
    if b == 0 {
        None
    } else {
        Some(a as f64 / b as f64)
    }
}

/// Brute-force enumeration over every (previous, current) pair of rounds.
pub fn brute_force<F: Fn(u8) -> bool>(sessions: &[Session], window: F) -> Tally {
    brute_force_where(sessions, window, |_| true)
}

pub fn brute_force_where<F: Fn(u8) -> bool, U: Fn(&str) -> bool>(sessions: &[Session], window: F, user: U) -> Tally {
    let mut t = Tally::default();
    for s in sessions.iter().filter(|s| user(&s.user_id)) {
        for i in 1..s.interactions.len() {
            let prev = &s.interactions[i - 1];
            let cur = &s.interactions[i];
            let ai = cur.recommendation.prediction_index;
            if cur.initial_decision == ai || !window(prev.trust_report.value()) {
                continue;
            }
            t.n += 1;
            let took = cur.final_decision == ai;
            if took {
                t.switched += 1;
            }
            if cur.final_decision == cur.correct_index {
                t.final_correct += 1;
            }
            if ai == cur.correct_index {
                t.ai_right += 1;
                if !took {
                    t.ai_right_kept += 1;
                }
            } else {
                t.ai_wrong += 1;
                if took {
                    t.ai_wrong_taken += 1;
                }
            }
        }
    }
    t
}

pub fn random_interaction<R: Rng>(rng: &mut R, index: usize) -> Interaction {
    let n = if rng.random_bool(0.5) { 2 } else { 4 };
    let correct = rng.random_range(0..n);
    let ai = rng.random_range(0..n);
    let initial = rng.random_range(0..n);
    let final_ = match rng.random_range(0..3) {
        0 => initial,
        1 => ai,
        _ => rng.random_range(0..n),
    };
    Interaction {
        index,
        problem_id: format!("p{index}"),
        num_options: n,
        correct_index: correct,
        recommendation: Recommendation::new(ai, rng.random_range(0.5..=1.0)),
        initial_decision: initial,
        final_decision: final_,
        trust_report: TrustLevel::new(rng.random_range(0..=10)).unwrap(),
        intervention: Intervention::None,
        timestamps: StageTimestamps::default(),
    }
}

/// A log of one to four users with at most `max_total` interactions overall.
pub fn random_log<R: Rng>(rng: &mut R, max_total: usize) -> Vec<Session> {
    let users = rng.random_range(1..=4);
    let mut left = rng.random_range(0..=max_total);
    (0..users)
        .map(|u| {
            let k = if u + 1 == users { left } else { rng.random_range(0..=left) };
            left -= k;
            Session {
                session_id: format!("s{u}"),
                user_id: format!("u{u}"),
                condition_id: "c".into(),
                sequence_id: "q".into(),
                assistant_profile_id: "calibrated".into(),
                planned_length: k,
                interactions: (0..k).map(|i| random_interaction(rng, i)).collect(),
            }
        })
        .collect()
}

/// FNV-1a, so stub output does not depend on std's hasher.
pub fn fnv(bytes: &[u8]) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in bytes {
        h ^= u64::from(*b);
        h = h.wrapping_mul(0x0100_0000_01b3);
    }
    h
}

/// Answers with `letters[sample_index]`; a `'?'` produces an unparseable
/// sample. The rationale text depends only on the prompt and index.
pub struct ScriptedClient {
    pub letters: Vec<char>,
}

impl TextGenerator for ScriptedClient {
    fn generate(&self, r: &GenerationRequest) -> Result<String, LlmError> {
        let letter = self.letters[r.sample_index % self.letters.len()];
        let h = fnv(format!("{}#{}", r.prompt, r.sample_index).as_bytes());
        if letter == '?' {
            return Ok(format!("Rationale {h:016x} without a conclusion."));
        }
        Ok(format!("Rationale {h:016x} for sample {}.\nFinal answer: {letter}", r.sample_index))
    }
}

/// Picks each answer from a hash of the prompt and index.
pub struct HashClient;

impl TextGenerator for HashClient {
    fn generate(&self, r: &GenerationRequest) -> Result<String, LlmError> {
        let h = fnv(format!("{}#{}", r.prompt, r.sample_index).as_bytes());
        let letter = if h % 10 < 7 { 'A' } else { 'B' };
        Ok(format!("Step one {h:x}. Step two.\nFinal answer: {letter}"))
    }
}

pub fn two_option_problem(id: &str) -> Problem {
    Problem {
        problem_id: id.into(),
        task_id: TaskId::Arc,
        prompt: format!("Question {id}?"),
        options: vec!["alpha".into(), "beta".into()],
        correct_index: 0,
    }
}
