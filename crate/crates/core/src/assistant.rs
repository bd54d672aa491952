//! Simulated assistants with controllable calibration, fixed problem
//! sequences, and calibration diagnostics.
//!
//! A calibrated assistant draws its displayed confidence `c` uniformly from
//! `[conf_low, conf_high]` and is correct with probability `c`. An
//! overconfident assistant displays the same `c` but is correct with
//! probability `c'` drawn from a triangular distribution with minimum 0.5 and
//! mode and maximum `c`, so its accuracy sits below what it shows.

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::domain::{Problem, ProblemSequence, Recommendation, SequenceItem, Validate, MAX_CONFIDENCE, MIN_CONFIDENCE};
use crate::rng::{label, substream};

/// Lower bound of the triangular correctness distribution.
pub const TRIANGULAR_MIN: f64 = 0.5;
/// Default number of equal-width calibration bins.
pub const DEFAULT_CALIBRATION_BINS: usize = 9;

#[derive(Debug, Error, PartialEq)]
pub enum AssistantError {
    #[error("invalid assistant profile: {0}")]
    InvalidProfile(String),
    #[error("invalid problem {problem_id}: {reason}")]
    InvalidProblem { problem_id: String, reason: String },
    #[error("need {needed} distinct problems per sequence but only {available} are available")]
    InsufficientProblems { needed: usize, available: usize },
    #[error("calibration input is empty")]
    EmptyCalibrationInput,
    #[error("confidence {0} outside the binned range")]
    ConfidenceOutOfRange(f64),
    #[error("calibration needs at least one bin")]
    ZeroBins,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AssistantKind {
    Calibrated,
    Overconfident,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AssistantProfile {
    #[serde(default)]
    pub id: String,
    pub kind: AssistantKind,
    #[serde(default = "default_conf_low")]
    pub conf_low: f64,
    #[serde(default = "default_conf_high")]
    pub conf_high: f64,
    #[serde(default)]
    pub seed: u64,
}

fn default_conf_low() -> f64 {
    0.5
}

fn default_conf_high() -> f64 {
    0.95
}

impl AssistantProfile {
    pub fn calibrated(seed: u64) -> Self {
        Self {
            id: "calibrated".into(),
            kind: AssistantKind::Calibrated,
            conf_low: default_conf_low(),
            conf_high: default_conf_high(),
            seed,
        }
    }

    pub fn overconfident(seed: u64) -> Self {
        Self {
            id: "overconfident".into(),
            kind: AssistantKind::Overconfident,
            ..Self::calibrated(seed)
        }
    }

    pub fn profile_id(&self) -> String {
        if self.id.is_empty() {
            match self.kind {
                AssistantKind::Calibrated => "calibrated".into(),
                AssistantKind::Overconfident => "overconfident".into(),
            }
        } else {
            self.id.clone()
        }
    }

    pub fn check(&self) -> Result<(), AssistantError> {
        let ok = self.conf_low >= MIN_CONFIDENCE && self.conf_low < self.conf_high && self.conf_high <= MAX_CONFIDENCE;
        if ok {
            Ok(())
        } else {
            Err(AssistantError::InvalidProfile(format!(
                "need 0.5 <= conf_low < conf_high <= 1.0, got [{}, {}]",
                self.conf_low, self.conf_high
            )))
        }
    }

    /// Expected accuracy of this profile, in closed form.
    pub fn expected_accuracy(&self) -> f64 {
        let mean_c = 0.5 * (self.conf_low + self.conf_high);
        match self.kind {
            AssistantKind::Calibrated => mean_c,
            // Triangular(a, c, c) has mean (a + 2c) / 3.
            AssistantKind::Overconfident => (TRIANGULAR_MIN + 2.0 * mean_c) / 3.0,
        }
    }
}

/// The uniform variates one recommendation consumes, in draw order.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SamplerDraws {
    pub confidence: f64,
    pub triangular: f64,
    pub correctness: f64,
    pub wrong_option: f64,
}

impl SamplerDraws {
    pub fn from_rng<R: Rng + ?Sized>(rng: &mut R) -> Self {
        Self {
            confidence: rng.random::<f64>(),
            triangular: rng.random::<f64>(),
            correctness: rng.random::<f64>(),
            wrong_option: rng.random::<f64>(),
        }
    }
}

/// Inverse CDF of Triangular(min, mode = max, max) at `u`. The CDF is
/// `((x - min) / (max - min))^2`.
pub fn triangular_mode_at_max(min: f64, max: f64, u: f64) -> f64 {
    min + (max - min) * u.sqrt()
}

fn check_problem(problem: &Problem) -> Result<(), AssistantError> {
    problem.validate().map_err(|v| AssistantError::InvalidProblem {
        problem_id: problem.problem_id.clone(),
        reason: v.iter().map(|x| x.to_string()).collect::<Vec<_>>().join("; "),
    })
}

/// Builds a recommendation from explicit uniform draws. Correctness is
/// decided against the unrounded confidence.
pub fn recommend_from_draws(
    profile: &AssistantProfile,
    problem: &Problem,
    draws: SamplerDraws,
) -> Result<Recommendation, AssistantError> {
    profile.check()?;
    check_problem(problem)?;
    let confidence = profile.conf_low + (profile.conf_high - profile.conf_low) * draws.confidence;
    let p_correct = match profile.kind {
        AssistantKind::Calibrated => confidence,
        AssistantKind::Overconfident => triangular_mode_at_max(TRIANGULAR_MIN, confidence, draws.triangular),
    };
    let prediction_index = if draws.correctness < p_correct {
        problem.correct_index
    } else {
        let wrong: Vec<usize> = problem.wrong_indices().collect();
        let k = ((draws.wrong_option * wrong.len() as f64) as usize).min(wrong.len() - 1);
        wrong[k]
    };
    Ok(Recommendation::new(prediction_index, confidence))
}

/// Samples one recommendation from `rng`.
pub fn sample_recommendation<R: Rng + ?Sized>(
    profile: &AssistantProfile,
    problem: &Problem,
    rng: &mut R,
) -> Result<Recommendation, AssistantError> {
    recommend_from_draws(profile, problem, SamplerDraws::from_rng(rng))
}

/// Samples the recommendation addressed by `(profile.seed, draw_index)`.
pub fn sample_indexed(
    profile: &AssistantProfile,
    problem: &Problem,
    draw_index: u64,
) -> Result<Recommendation, AssistantError> {
    let mut rng = substream(profile.seed, &[label::RECOMMENDATION, draw_index]);
    sample_recommendation(profile, problem, &mut rng)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SequenceSpec {
    pub n_sequences: usize,
    pub length: usize,
    pub seed: u64,
    #[serde(default = "default_prefix")]
    pub id_prefix: String,
}

fn default_prefix() -> String {
    "seq".into()
}

impl SequenceSpec {
    pub fn new(n_sequences: usize, length: usize, seed: u64) -> Self {
        Self {
            n_sequences,
            length,
            seed,
            id_prefix: default_prefix(),
        }
    }
}

/// Samples `n_sequences` sequences of `length` distinct problems, each paired
/// with a sampled recommendation. Sequence `i`'s problem order and item `j`'s
/// recommendation come from separate addressed streams.
pub fn generate_sequences(
    problems: &[Problem],
    profile: &AssistantProfile,
    spec: &SequenceSpec,
) -> Result<Vec<ProblemSequence>, AssistantError> {
    profile.check()?;
    if problems.len() < spec.length {
        return Err(AssistantError::InsufficientProblems {
            needed: spec.length,
            available: problems.len(),
        });
    }
    for p in problems {
        check_problem(p)?;
    }
    sequence_orders(problems.len(), spec)
        .into_iter()
        .enumerate()
        .map(|(i, order)| {
            let items = order
                .iter()
                .enumerate()
                .map(|(j, &pi)| {
                    let problem = problems[pi].clone();
                    let mut rng = substream(spec.seed, &[label::RECOMMENDATION, i as u64, j as u64]);
                    let recommendation = sample_recommendation(profile, &problem, &mut rng)?;
                    Ok(SequenceItem { problem, recommendation })
                })
                .collect::<Result<Vec<_>, AssistantError>>()?;
            Ok(ProblemSequence {
                sequence_id: sequence_id(spec, i),
                assistant_profile_id: profile.profile_id(),
                items,
            })
        })
        .collect()
}

/// Problem indices of each sequence: `spec.length` distinct draws from a
/// pool of `n_problems`, one addressed stream per sequence.
pub fn sequence_orders(n_problems: usize, spec: &SequenceSpec) -> Vec<Vec<usize>> {
    (0..spec.n_sequences)
        .map(|i| {
            let mut order: Vec<usize> = (0..n_problems).collect();
            order.shuffle(&mut substream(spec.seed, &[label::SEQUENCE_ORDER, i as u64]));
            order.truncate(spec.length.min(n_problems));
            order
        })
        .collect()
}

pub fn sequence_id(spec: &SequenceSpec, i: usize) -> String {
    format!("{}-{:02}", spec.id_prefix, i)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CalibrationBin {
    pub lower: f64,
    pub upper: f64,
    pub count: usize,
    /// Mean confidence of the bin's samples; `None` for an empty bin.
    pub mean_confidence: Option<f64>,
    pub accuracy: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CalibrationReport {
    pub bin_edges: Vec<f64>,
    pub bins: Vec<CalibrationBin>,
    pub ece: f64,
    pub n_samples: usize,
}

impl CalibrationReport {
    pub fn per_bin_confidence(&self) -> Vec<Option<f64>> {
        self.bins.iter().map(|b| b.mean_confidence).collect()
    }

    pub fn per_bin_accuracy(&self) -> Vec<Option<f64>> {
        self.bins.iter().map(|b| b.accuracy).collect()
    }

    /// Largest |accuracy - confidence| over bins holding at least `min_count` samples.
    pub fn max_gap(&self, min_count: usize) -> f64 {
        self.bins
            .iter()
            .filter(|b| b.count >= min_count && b.count > 0)
            .map(|b| (b.accuracy.unwrap() - b.mean_confidence.unwrap()).abs())
            .fold(0.0, f64::max)
    }
}

/// Calibration over equal-width bins spanning the full confidence range [0.5, 1.0].
pub fn calibration_report(pairs: &[(f64, bool)], n_bins: usize) -> Result<CalibrationReport, AssistantError> {
    calibration_report_over(pairs, n_bins, MIN_CONFIDENCE, MAX_CONFIDENCE)
}

/// Calibration over `n_bins` equal-width bins spanning `[lower, upper]`. The
/// last bin is closed on the right.
pub fn calibration_report_over(
    pairs: &[(f64, bool)],
    n_bins: usize,
    lower: f64,
    upper: f64,
) -> Result<CalibrationReport, AssistantError> {
    if n_bins == 0 {
        return Err(AssistantError::ZeroBins);
    }
    if pairs.is_empty() {
        return Err(AssistantError::EmptyCalibrationInput);
    }
    let width = (upper - lower) / n_bins as f64;
    let mut conf_sum = vec![0.0; n_bins];
    let mut correct = vec![0usize; n_bins];
    let mut count = vec![0usize; n_bins];
    for &(c, ok) in pairs {
        if !(lower..=upper).contains(&c) {
            return Err(AssistantError::ConfidenceOutOfRange(c));
        }
        let b = (((c - lower) / width) as usize).min(n_bins - 1);
        conf_sum[b] += c;
        count[b] += 1;
        correct[b] += ok as usize;
    }
    let n = pairs.len();
    let bin_edges: Vec<f64> = (0..=n_bins).map(|i| lower + width * i as f64).collect();
    let mut ece = 0.0;
    let bins = (0..n_bins)
        .map(|b| {
            let (mean_confidence, accuracy) = if count[b] > 0 {
                let conf = conf_sum[b] / count[b] as f64;
                let acc = correct[b] as f64 / count[b] as f64;
                ece += count[b] as f64 / n as f64 * (acc - conf).abs();
                (Some(conf), Some(acc))
            } else {
                (None, None)
            };
            CalibrationBin {
                lower: bin_edges[b],
                upper: bin_edges[b + 1],
                count: count[b],
                mean_confidence,
                accuracy,
            }
        })
        .collect();
    Ok(CalibrationReport {
        bin_edges,
        bins,
        ece,
        n_samples: n,
    })
}

/// Draws `n` recommendations for `problem` and returns `(confidence, correct)` pairs.
pub fn sample_calibration_pairs(profile: &AssistantProfile, problem: &Problem, n: usize) -> Result<Vec<(f64, bool)>, AssistantError> {
    let mut rng = substream(profile.seed, &[label::RECOMMENDATION, u64::MAX]);
    (0..n)
        .map(|_| sample_recommendation(profile, problem, &mut rng).map(|r| (r.confidence, r.is_correct_for(problem))))
        .collect()
}
