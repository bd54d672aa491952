//! Recommendations and explanations from a text-generation service.
//!
//! Self-consistency: sample several chain-of-thought answers, take the modal
//! answer as the prediction and its share of parseable votes as confidence.
//! One rationale agreeing with the vote becomes the supporting explanation,
//! one disagreeing rationale (if any) the counter explanation.

mod client;
mod explain;

pub use client::{ClientConfig, HttpGenerator};
pub use explain::{counter_prompt, explanation_prompt, looks_hedged, support_prompt, CachedExplanation, ExplanationCache};

use std::sync::LazyLock;

use regex::Regex;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::assistant::{sequence_id, sequence_orders, SequenceSpec};
use crate::domain::{Problem, ProblemSequence, Recommendation, SequenceItem, MIN_CONFIDENCE};

pub const DEFAULT_SAMPLES: usize = 10;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum LlmError {
    #[error("request failed: {0}")]
    Request(String),
    #[error("request timed out")]
    Timeout,
    #[error("empty generation")]
    EmptyGeneration,
    #[error("malformed response: {0}")]
    MalformedResponse(String),
    #[error("no sample could be parsed")]
    NoParseable,
    #[error("only {parseable} of {requested} samples parsed")]
    TooFewParseable { parseable: usize, requested: usize },
    #[error("n_samples must be at least 1")]
    NoSamples,
    #[error("option {index} out of range for problem {problem_id}")]
    InvalidOption { problem_id: String, index: usize },
    #[error("cache: {0}")]
    Cache(String),
    #[error("need {needed} problems per sequence but only {available} are available")]
    InsufficientProblems { needed: usize, available: usize },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenerationRequest {
    pub prompt: String,
    /// Position of this request among the samples for one prompt.
    pub sample_index: usize,
}

/// Prompt in, text out.
pub trait TextGenerator: Send + Sync {
    fn generate(&self, request: &GenerationRequest) -> Result<String, LlmError>;
}

impl<T: TextGenerator + ?Sized> TextGenerator for &T {
    fn generate(&self, request: &GenerationRequest) -> Result<String, LlmError> {
        (**self).generate(request)
    }
}

pub fn option_letter(index: usize) -> char {
    (b'A' + index as u8) as char
}

/// Chain-of-thought prompt asking for a machine-readable last line.
pub fn reasoning_prompt(problem: &Problem) -> String {
    let mut s = String::new();
    s.push_str(&problem.prompt);
    s.push_str("\n\nOptions:\n");
    for (i, o) in problem.options.iter().enumerate() {
        s.push_str(&format!("{}: {}\n", option_letter(i), o));
    }
    s.push_str(&format!(
        "\nThink step by step about which option is the correct {}. \
         End your response with a line of the form \"Final answer: <option letter>\".",
        problem.task_id.answer_noun()
    ));
    s
}

static FINAL_ANSWER: LazyLock<Regex> =
    LazyLock::new(|| Regex::new(r"(?im)^[\s*_]*final answer[\s*_]*:[\s*_]*\(?([a-z])\)?[\s*_.]*$").expect("valid regex"));

/// One sampled rationale and the option it ends on.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RationaleSample {
    pub rationale: String,
    /// `None` when the sample failed or carried no valid answer line.
    pub predicted_index: Option<usize>,
}

/// Splits a generation into its rationale and the option named on its last
/// answer line.
pub fn parse_sample(text: &str, num_options: usize) -> RationaleSample {
    let last = FINAL_ANSWER.captures_iter(text).last();
    let predicted_index = last.as_ref().and_then(|c| {
        let letter = c[1].to_ascii_uppercase().chars().next()?;
        let idx = (letter as u8 - b'A') as usize;
        (idx < num_options).then_some(idx)
    });
    let rationale = match &last {
        Some(c) if predicted_index.is_some() => {
            let m = c.get(0).expect("whole match");
            format!("{}{}", &text[..m.start()], &text[m.end()..])
        }
        _ => text.to_string(),
    };
    RationaleSample {
        rationale: rationale.trim().to_string(),
        predicted_index,
    }
}

/// Vote counts kept as integers so confidence is an exact ratio.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct VoteTally {
    pub votes: Vec<usize>,
    pub requested: usize,
    pub parseable: usize,
    pub winner: usize,
    pub modal_count: usize,
    pub tie: bool,
}

impl VoteTally {
    /// `modal_count / parseable`, before clamping.
    pub fn share(&self) -> f64 {
        self.modal_count as f64 / self.parseable as f64
    }

    pub fn confidence(&self) -> f64 {
        self.share().max(MIN_CONFIDENCE)
    }
}

/// Majority vote over parseable samples. Ties go to the option whose text
/// sorts first.
pub fn tally(problem: &Problem, samples: &[RationaleSample]) -> Result<VoteTally, LlmError> {
    let requested = samples.len();
    if requested == 0 {
        return Err(LlmError::NoSamples);
    }
    let mut votes = vec![0usize; problem.num_options()];
    for s in samples {
        if let Some(i) = s.predicted_index {
            votes[i] += 1;
        }
    }
    let parseable: usize = votes.iter().sum();
    if parseable == 0 {
        return Err(LlmError::NoParseable);
    }
    if parseable * 2 < requested {
        return Err(LlmError::TooFewParseable { parseable, requested });
    }
    let modal_count = *votes.iter().max().expect("at least one option");
    let tied: Vec<usize> = (0..votes.len()).filter(|&i| votes[i] == modal_count).collect();
    let winner = *tied.iter().min_by(|&&a, &&b| problem.options[a].cmp(&problem.options[b]).then(a.cmp(&b))).expect("non-empty");
    Ok(VoteTally {
        votes,
        requested,
        parseable,
        winner,
        modal_count,
        tie: tied.len() > 1,
    })
}

pub fn select_support_rationale(samples: &[RationaleSample], prediction: usize) -> Option<String> {
    samples.iter().find(|s| s.predicted_index == Some(prediction)).map(|s| s.rationale.clone())
}

pub fn select_counter_rationale(samples: &[RationaleSample], prediction: usize) -> Option<String> {
    samples
        .iter()
        .find(|s| s.predicted_index.is_some_and(|p| p != prediction))
        .map(|s| s.rationale.clone())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelfConsistency {
    pub problem_id: String,
    pub recommendation: Recommendation,
    pub tally: VoteTally,
    pub samples: Vec<RationaleSample>,
}

/// Draws `n_samples` rationales concurrently and turns the vote into a
/// recommendation with supporting and counter rationales.
pub fn self_consistency_recommend<G: TextGenerator + ?Sized>(problem: &Problem, client: &G, n_samples: usize) -> Result<SelfConsistency, LlmError> {
    if n_samples == 0 {
        return Err(LlmError::NoSamples);
    }
    let prompt = reasoning_prompt(problem);
    let n_opts = problem.num_options();
    let samples: Vec<RationaleSample> = std::thread::scope(|scope| {
        let handles: Vec<_> = (0..n_samples)
            .map(|i| {
                let req = GenerationRequest {
                    prompt: prompt.clone(),
                    sample_index: i,
                };
                scope.spawn(move || client.generate(&req))
            })
            .collect();
        handles
            .into_iter()
            .enumerate()
            .map(|(i, h)| match h.join().expect("generator thread panicked") {
                Ok(text) => parse_sample(&text, n_opts),
                Err(e) => {
                    log::warn!("problem {}: sample {i} failed: {e}", problem.problem_id);
                    RationaleSample {
                        rationale: String::new(),
                        predicted_index: None,
                    }
                }
            })
            .collect()
    });
    let t = tally(problem, &samples)?;
    if t.share() < MIN_CONFIDENCE {
        log::info!(
            "problem {}: modal share {}/{} below {MIN_CONFIDENCE}, clamped",
            problem.problem_id,
            t.modal_count,
            t.parseable
        );
    }
    if t.tie {
        log::info!("problem {}: tied vote {:?}, picked option {}", problem.problem_id, t.votes, t.winner);
    }
    let recommendation = Recommendation {
        prediction_index: t.winner,
        confidence: t.confidence(),
        support_explanation: select_support_rationale(&samples, t.winner),
        counter_explanation: select_counter_rationale(&samples, t.winner),
    };
    Ok(SelfConsistency {
        problem_id: problem.problem_id.clone(),
        recommendation,
        tally: t,
        samples,
    })
}

/// Queries every problem once and lays the recommendations out in the same
/// sequence orders the simulated assistant would use for `spec`.
pub fn llm_sequences<G: TextGenerator + ?Sized>(
    problems: &[Problem],
    client: &G,
    n_samples: usize,
    spec: &SequenceSpec,
    profile_id: &str,
) -> Result<(Vec<ProblemSequence>, Vec<SelfConsistency>), LlmError> {
    if problems.len() < spec.length {
        return Err(LlmError::InsufficientProblems {
            needed: spec.length,
            available: problems.len(),
        });
    }
    let votes = problems
        .iter()
        .map(|p| self_consistency_recommend(p, client, n_samples))
        .collect::<Result<Vec<_>, _>>()?;
    let sequences = sequence_orders(problems.len(), spec)
        .into_iter()
        .enumerate()
        .map(|(i, order)| ProblemSequence {
            sequence_id: sequence_id(spec, i),
            assistant_profile_id: profile_id.to_string(),
            items: order
                .into_iter()
                .map(|k| SequenceItem {
                    problem: problems[k].clone(),
                    recommendation: votes[k].recommendation.clone(),
                })
                .collect(),
        })
        .collect();
    Ok((sequences, votes))
}
