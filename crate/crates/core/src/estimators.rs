//! Online estimators of a participant's reported trust.
//!
//! Each estimator consumes one interaction outcome at a time and predicts the
//! trust the participant reports at the end of that interaction, on the 0..10
//! scale. Score-to-scale maps: `tau` in [-1, 1] and capability differences
//! by `(x + 1) * 5`, windowed accuracy by `acc * 10`.

use std::collections::VecDeque;
use std::fmt;

use nalgebra::{DMatrix, DVector};
use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::domain::{Interaction, Session};
use crate::metrics::pearson;
use crate::rng::{label, substream};

pub const AIACC_WINDOW: usize = 5;
/// Starting level of the regression estimator and prior trust of a
/// session's first interaction.
pub const INITIAL_TRUST: f64 = 5.0;
pub const RIDGE_LAMBDA: f64 = 1e-6;
/// Estimates below this count as low trust.
pub const LOW_BELOW: f64 = 5.0;
/// Estimates above this count as high trust.
pub const HIGH_ABOVE: f64 = 8.0;

#[derive(Debug, Error, PartialEq)]
pub enum EstimatorError {
    #[error("no training interactions")]
    NoTrainingData,
    #[error("smoothing parameter {0} outside [0, 1]")]
    InvalidSmoothing(f64),
    #[error("empty smoothing grid")]
    EmptyGrid,
    #[error("cannot split {total} sessions into {train} for training")]
    BadSplit { total: usize, train: usize },
}

/// What an estimator sees of one interaction.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Outcome {
    pub ai_correct: bool,
    pub ai_confidence: f64,
    pub user_initial_correct: bool,
    pub switched: bool,
    pub user_final_correct: bool,
    pub agreement: bool,
}

impl Outcome {
    pub fn from_interaction(it: &Interaction) -> Self {
        Self {
            ai_correct: it.ai_correct(),
            ai_confidence: it.recommendation.confidence,
            user_initial_correct: it.initial_correct(),
            switched: it.switched_to_ai(),
            user_final_correct: it.final_correct(),
            agreement: !it.disagreed(),
        }
    }

    /// Regressors of the trust-change model, given the trust held before.
    pub fn features(&self, prior_trust: f64) -> [f64; N_FEATURES] {
        let b = |x: bool| if x { 1.0 } else { 0.0 };
        [
            b(self.ai_correct),
            b(self.switched),
            b(self.user_final_correct),
            self.ai_confidence,
            b(self.agreement),
            prior_trust,
        ]
    }
}

pub const N_FEATURES: usize = 6;
pub const FEATURE_NAMES: [&str; N_FEATURES] = ["ai_correct", "switched", "final_correct", "confidence", "agreement", "prior_trust"];

/// Linear model of the change in reported trust after an interaction.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrustModel {
    pub intercept: f64,
    pub coefficients: [f64; N_FEATURES],
    /// Set when the design was rank-deficient and a ridge solve was used.
    #[serde(default)]
    pub regularized: bool,
}

impl TrustModel {
    pub fn predict_change(&self, features: &[f64; N_FEATURES]) -> f64 {
        self.intercept + self.coefficients.iter().zip(features).map(|(c, x)| c * x).sum::<f64>()
    }

    /// Ordinary least squares on centered data, falling back to ridge when
    /// the design is rank-deficient.
    pub fn fit_rows(rows: &[([f64; N_FEATURES], f64)]) -> Result<Self, EstimatorError> {
        if rows.is_empty() {
            return Err(EstimatorError::NoTrainingData);
        }
        let n = rows.len();
        let mut mean_x = [0.0; N_FEATURES];
        let mut mean_y = 0.0;
        for (x, y) in rows {
            for (m, v) in mean_x.iter_mut().zip(x) {
                *m += v / n as f64;
            }
            mean_y += y / n as f64;
        }
        let x = DMatrix::from_fn(n, N_FEATURES, |i, j| rows[i].0[j] - mean_x[j]);
        let y = DVector::from_fn(n, |i, _| rows[i].1 - mean_y);

        let svd = x.clone().svd(true, true);
        let smax = svd.singular_values.max();
        let tol = smax.max(1.0) * 1e-10 * n.max(N_FEATURES) as f64;
        let full_rank = svd.singular_values.iter().all(|&s| s > tol);
        let (beta, regularized) = if full_rank {
            (svd.solve(&y, tol).expect("svd computed with u and v"), false)
        } else {
            log::warn!("trust model design matrix is rank-deficient; using ridge with lambda {RIDGE_LAMBDA}");
            let xt = x.transpose();
            let gram = &xt * &x + DMatrix::identity(N_FEATURES, N_FEATURES) * RIDGE_LAMBDA;
            let rhs = &xt * &y;
            let beta = gram.cholesky().expect("ridge gram matrix is positive definite").solve(&rhs);
            (beta, true)
        };
        let mut coefficients = [0.0; N_FEATURES];
        coefficients.copy_from_slice(beta.as_slice());
        let intercept = mean_y - coefficients.iter().zip(&mean_x).map(|(b, m)| b * m).sum::<f64>();
        Ok(Self {
            intercept,
            coefficients,
            regularized,
        })
    }

    /// Fits on consecutive trust reports: the target is the change from the
    /// previous report (or the initial level) to this one.
    pub fn fit(train: &[Session]) -> Result<Self, EstimatorError> {
        Self::fit_rows(&training_rows(train))
    }
}

/// `(features, change in reported trust)` for every interaction.
pub fn training_rows(sessions: &[Session]) -> Vec<([f64; N_FEATURES], f64)> {
    let mut rows = Vec::new();
    for s in sessions {
        let mut prior = INITIAL_TRUST;
        for it in &s.interactions {
            let reported = f64::from(it.trust_report.value());
            rows.push((Outcome::from_interaction(it).features(prior), reported - prior));
            prior = reported;
        }
    }
    rows
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "method")]
pub enum Estimator {
    #[serde(rename = "AIAcc5")]
    AiAcc5,
    CapabilityDiff,
    SmoothOutcomes { r: f64 },
    SmoothConfs { r: f64 },
    TrustModel { model: TrustModel },
}

impl Estimator {
    pub fn name(&self) -> &'static str {
        match self {
            Estimator::AiAcc5 => "AIAcc5",
            Estimator::CapabilityDiff => "CapabilityDiff",
            Estimator::SmoothOutcomes { .. } => "SmoothOutcomes",
            Estimator::SmoothConfs { .. } => "SmoothConfs",
            Estimator::TrustModel { .. } => "TrustModel",
        }
    }

    pub fn smoothing(&self) -> Option<f64> {
        match self {
            Estimator::SmoothOutcomes { r } | Estimator::SmoothConfs { r } => Some(*r),
            _ => None,
        }
    }

    pub fn start(&self) -> EstimatorState {
        EstimatorState {
            estimator: self.clone(),
            tau: 0.0,
            window: VecDeque::with_capacity(AIACC_WINDOW),
            rounds: 0,
            ai_correct: 0,
            user_correct: 0,
            level: INITIAL_TRUST,
        }
    }
}

impl fmt::Display for Estimator {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.smoothing() {
            Some(r) => write!(f, "{}(r={r})", self.name()),
            None => f.write_str(self.name()),
        }
    }
}

/// Running state of one estimator over one session.
#[derive(Debug, Clone, PartialEq)]
pub struct EstimatorState {
    estimator: Estimator,
    tau: f64,
    window: VecDeque<bool>,
    rounds: u64,
    ai_correct: u64,
    user_correct: u64,
    level: f64,
}

impl EstimatorState {
    pub fn update(&mut self, o: &Outcome) {
        let a = if o.ai_correct { 1.0 } else { -1.0 };
        match &self.estimator {
            Estimator::AiAcc5 => {
                if self.window.len() == AIACC_WINDOW {
                    self.window.pop_front();
                }
                self.window.push_back(o.ai_correct);
            }
            Estimator::CapabilityDiff => {
                self.rounds += 1;
                self.ai_correct += u64::from(o.ai_correct);
                self.user_correct += u64::from(o.user_initial_correct);
            }
            Estimator::SmoothOutcomes { r } => self.tau = (r * a + (1.0 - r) * self.tau).clamp(-1.0, 1.0),
            Estimator::SmoothConfs { r } => self.tau = (r * a * o.ai_confidence + (1.0 - r) * self.tau).clamp(-1.0, 1.0),
            Estimator::TrustModel { model } => {
                let delta = model.predict_change(&o.features(self.level));
                self.level = (self.level + delta).clamp(0.0, 10.0);
            }
        }
    }

    pub fn tau(&self) -> f64 {
        self.tau
    }

    /// The method's own score: tau, windowed accuracy, accuracy difference,
    /// or the integrated trust level.
    pub fn score(&self) -> Option<f64> {
        match self.estimator {
            Estimator::AiAcc5 => {
                (!self.window.is_empty()).then(|| self.window.iter().filter(|&&c| c).count() as f64 / self.window.len() as f64)
            }
            Estimator::CapabilityDiff => {
                Some(if self.rounds == 0 {
                    0.0
                } else {
                    (self.ai_correct as f64 - self.user_correct as f64) / self.rounds as f64
                })
            }
            Estimator::SmoothOutcomes { .. } | Estimator::SmoothConfs { .. } => Some(self.tau),
            Estimator::TrustModel { .. } => Some(self.level),
        }
    }

    /// Predicted trust in [0, 10].
    pub fn estimate(&self) -> f64 {
        let v = match self.estimator {
            Estimator::AiAcc5 => self.score().map_or(INITIAL_TRUST, |acc| acc * 10.0),
            Estimator::CapabilityDiff | Estimator::SmoothOutcomes { .. } | Estimator::SmoothConfs { .. } => {
                (self.score().expect("always defined") + 1.0) * 5.0
            }
            Estimator::TrustModel { .. } => self.level,
        };
        v.clamp(0.0, 10.0)
    }
}

/// `(predicted, reported)` trust for every interaction in `sessions`.
pub fn predictions(estimator: &Estimator, sessions: &[Session]) -> Vec<(f64, f64)> {
    let mut out = Vec::new();
    for s in sessions {
        let mut state = estimator.start();
        for it in &s.interactions {
            state.update(&Outcome::from_interaction(it));
            out.push((state.estimate(), f64::from(it.trust_report.value())));
        }
    }
    out
}

/// Binary F1. Undefined when there are no positives on either side.
pub fn f1(pairs: impl Iterator<Item = (bool, bool)>) -> Option<f64> {
    let (mut tp, mut fp, mut fn_) = (0u64, 0u64, 0u64);
    for (pred, truth) in pairs {
        match (pred, truth) {
            (true, true) => tp += 1,
            (true, false) => fp += 1,
            (false, true) => fn_ += 1,
            _ => {}
        }
    }
    let denom = 2 * tp + fp + fn_;
    (denom > 0).then(|| 2.0 * tp as f64 / denom as f64)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Evaluation {
    pub method: String,
    pub r: Option<f64>,
    pub n: usize,
    pub pearson: Option<f64>,
    pub low_f1: Option<f64>,
    pub high_f1: Option<f64>,
}

pub fn evaluate(estimator: &Estimator, test: &[Session]) -> Evaluation {
    let pairs = predictions(estimator, test);
    let (p, t): (Vec<f64>, Vec<f64>) = pairs.iter().copied().unzip();
    Evaluation {
        method: estimator.name().to_string(),
        r: estimator.smoothing(),
        n: pairs.len(),
        pearson: pearson(&p, &t),
        low_f1: f1(pairs.iter().map(|&(p, t)| (p < LOW_BELOW, t < LOW_BELOW))),
        high_f1: f1(pairs.iter().map(|&(p, t)| (p > HIGH_ABOVE, t > HIGH_ABOVE))),
    }
}

/// 0.05, 0.10, ..., 0.95.
pub fn default_grid() -> Vec<f64> {
    (1..=19).map(|i| f64::from(i) * 0.05).collect()
}

/// Picks the smoothing parameter with the highest training correlation;
/// ties go to the smaller value. `make` builds the estimator for a given r.
pub fn select_smoothing(make: fn(f64) -> Estimator, train: &[Session], grid: &[f64]) -> Result<(f64, Option<f64>), EstimatorError> {
    if grid.is_empty() {
        return Err(EstimatorError::EmptyGrid);
    }
    if let Some(&bad) = grid.iter().find(|r| !(0.0..=1.0).contains(*r)) {
        return Err(EstimatorError::InvalidSmoothing(bad));
    }
    let mut best = (grid[0], None::<f64>);
    for &r in grid {
        let score = evaluate(&make(r), train).pearson;
        let better = match (score, best.1) {
            (Some(s), Some(b)) => s > b,
            (Some(_), None) => true,
            _ => false,
        };
        if better {
            best = (r, score);
        }
    }
    Ok(best)
}

pub fn smooth_outcomes(r: f64) -> Estimator {
    Estimator::SmoothOutcomes { r }
}

pub fn smooth_confs(r: f64) -> Estimator {
    Estimator::SmoothConfs { r }
}

/// Fits every method on `train` and returns them ready for evaluation.
pub fn fit_all(train: &[Session], grid: &[f64]) -> Result<Vec<Estimator>, EstimatorError> {
    let (r_out, _) = select_smoothing(smooth_outcomes, train, grid)?;
    let (r_conf, _) = select_smoothing(smooth_confs, train, grid)?;
    Ok(vec![
        Estimator::AiAcc5,
        Estimator::CapabilityDiff,
        smooth_outcomes(r_out),
        smooth_confs(r_conf),
        Estimator::TrustModel {
            model: TrustModel::fit(train)?,
        },
    ])
}

/// Shuffles sessions with `seed` and splits off `n_train` for training.
pub fn split_sessions(sessions: &[Session], n_train: usize, seed: u64) -> Result<(Vec<Session>, Vec<Session>), EstimatorError> {
    if n_train > sessions.len() {
        return Err(EstimatorError::BadSplit {
            total: sessions.len(),
            train: n_train,
        });
    }
    let mut all = sessions.to_vec();
    all.sort_by(|a, b| a.session_id.cmp(&b.session_id));
    all.shuffle(&mut substream(seed, &[label::DATASET, 0x5350_4c54]));
    let test = all.split_off(n_train);
    Ok((all, test))
}

/// Evaluation table with one row per method.
pub fn evaluation_csv(rows: &[Evaluation]) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["method", "r", "n", "pearson", "low_f1", "high_f1"]).expect("in-memory write");
    let cell = |v: Option<f64>| v.map(|x| format!("{x:.3}")).unwrap_or_default();
    for e in rows {
        w.write_record([
            e.method.clone(),
            e.r.map(|r| format!("{r:.2}")).unwrap_or_default(),
            e.n.to_string(),
            cell(e.pearson),
            cell(e.low_f1),
            cell(e.high_f1),
        ])
        .expect("in-memory write");
    }
    String::from_utf8(w.into_inner().expect("in-memory writer")).expect("utf-8")
}
