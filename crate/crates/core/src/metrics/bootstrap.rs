//! Clustered bootstrap: participants are resampled with replacement within
//! each group, and a participant's interactions travel together.

use std::collections::BTreeMap;

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::{filter_analysis_set, Metric, RelianceCounts, TrustWindow};
use crate::domain::Session;
use crate::rng::{label, substream};

const CHUNK: usize = 256;

#[derive(Debug, Error, PartialEq)]
pub enum BootstrapError {
    #[error("group {0} has no participants")]
    EmptyGroup(char),
    #[error("{0} is undefined on the observed data")]
    UndefinedObserved(&'static str),
    #[error("too many undefined resamples ({redrawn} redrawn for {requested} requested)")]
    TooManyRedraws { redrawn: u64, requested: usize },
    #[error("n_resamples must be positive")]
    NoResamples,
}

/// Direction of the alternative hypothesis on `m(B) - m(A)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Alternative {
    #[default]
    TwoSided,
    /// B is lower than A.
    Less,
    /// B is higher than A.
    Greater,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BootstrapConfig {
    pub n_resamples: usize,
    pub alternative: Alternative,
    pub seed: u64,
    /// Cap on redraws of undefined resamples, as a multiple of `n_resamples`.
    pub max_redraw_factor: u64,
}

impl BootstrapConfig {
    pub fn new(seed: u64) -> Self {
        Self {
            n_resamples: 10_000,
            alternative: Alternative::TwoSided,
            seed,
            max_redraw_factor: 10,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BootstrapResult {
    pub metric: Metric,
    pub value_a: f64,
    pub value_b: f64,
    /// `m(B) - m(A)` on the observed data.
    pub difference: f64,
    pub p_value: f64,
    pub n_resamples: usize,
    pub n_redrawn: u64,
    /// 2.5% and 97.5% percentiles of the resampled difference.
    pub ci95: (f64, f64),
}

/// Per-participant counts over the analysis set, ordered by user id.
pub fn per_user_counts(sessions: &[Session], window: Option<TrustWindow>) -> Vec<(String, RelianceCounts)> {
    let mut users: BTreeMap<String, RelianceCounts> = sessions.iter().map(|s| (s.user_id.clone(), RelianceCounts::default())).collect();
    for item in filter_analysis_set(sessions, window) {
        users.get_mut(&item.user_id).expect("user registered").add(&item.interaction);
    }
    users.into_iter().collect()
}

fn pooled(users: &[RelianceCounts], picks: impl Iterator<Item = usize>) -> RelianceCounts {
    let mut c = RelianceCounts::default();
    for i in picks {
        c.merge(&users[i]);
    }
    c
}

fn value(metric: Metric, c: &RelianceCounts) -> Option<f64> {
    metric.of(&c.report())
}

/// Tests whether `metric` differs between two groups of participants.
///
/// Each resample draws `|A|` participants from A and `|B|` from B with
/// replacement and pools their interactions. Resamples on which the metric
/// is undefined are redrawn. The p-value is the percentile-method tail mass
/// of the resampled difference beyond zero, with a +1 correction.
pub fn clustered_bootstrap(
    group_a: &[RelianceCounts],
    group_b: &[RelianceCounts],
    metric: Metric,
    config: &BootstrapConfig,
) -> Result<BootstrapResult, BootstrapError> {
    if group_a.is_empty() {
        return Err(BootstrapError::EmptyGroup('A'));
    }
    if group_b.is_empty() {
        return Err(BootstrapError::EmptyGroup('B'));
    }
    if config.n_resamples == 0 {
        return Err(BootstrapError::NoResamples);
    }
    let value_a = value(metric, &pooled(group_a, 0..group_a.len())).ok_or(BootstrapError::UndefinedObserved(metric.name()))?;
    let value_b = value(metric, &pooled(group_b, 0..group_b.len())).ok_or(BootstrapError::UndefinedObserved(metric.name()))?;

    let n_chunks = config.n_resamples.div_ceil(CHUNK);
    let cap = config.max_redraw_factor.saturating_mul(config.n_resamples as u64);
    let chunks: Vec<(Vec<f64>, u64)> = (0..n_chunks)
        .into_par_iter()
        .map(|chunk| {
            let want = CHUNK.min(config.n_resamples - chunk * CHUNK);
            let mut rng = substream(config.seed, &[label::BOOTSTRAP, chunk as u64]);
            let mut deltas = Vec::with_capacity(want);
            let mut redrawn = 0u64;
            while deltas.len() < want && redrawn <= cap {
                let a = pooled(group_a, (0..group_a.len()).map(|_| rng.random_range(0..group_a.len())));
                let b = pooled(group_b, (0..group_b.len()).map(|_| rng.random_range(0..group_b.len())));
                match (value(metric, &a), value(metric, &b)) {
                    (Some(va), Some(vb)) => deltas.push(vb - va),
                    _ => redrawn += 1,
                }
            }
            (deltas, redrawn)
        })
        .collect();
    let n_redrawn: u64 = chunks.iter().map(|c| c.1).sum();
    let mut deltas: Vec<f64> = chunks.into_iter().flat_map(|c| c.0).collect();
    if deltas.len() < config.n_resamples || n_redrawn > cap {
        return Err(BootstrapError::TooManyRedraws {
            redrawn: n_redrawn,
            requested: config.n_resamples,
        });
    }

    let b = deltas.len() as f64;
    let at_or_below = deltas.iter().filter(|&&d| d <= 0.0).count() as f64;
    let at_or_above = deltas.iter().filter(|&&d| d >= 0.0).count() as f64;
    let tail = |k: f64| (k + 1.0) / (b + 1.0);
    let p_value = match config.alternative {
        Alternative::TwoSided => (2.0 * tail(at_or_below).min(tail(at_or_above))).min(1.0),
        Alternative::Less => tail(at_or_above),
        Alternative::Greater => tail(at_or_below),
    };
    deltas.sort_by(f64::total_cmp);
    let q = |p: f64| deltas[((p * (b - 1.0)).round() as usize).min(deltas.len() - 1)];
    Ok(BootstrapResult {
        metric,
        value_a,
        value_b,
        difference: value_b - value_a,
        p_value,
        n_resamples: config.n_resamples,
        n_redrawn,
        ci95: (q(0.025), q(0.975)),
    })
}
