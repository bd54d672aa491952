//! Per-user (macro) aggregation and attribute-grouped comparisons.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::{filter_analysis_set, per_user_counts, Metric, RelianceCounts, RelianceReport, TrustWindow};
use crate::domain::Session;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UserMetrics {
    pub user_id: String,
    pub counts: RelianceCounts,
    /// Each metric, or absent when the user has fewer qualifying
    /// interactions than required for it.
    pub report: RelianceReport,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricSummary {
    pub metric: Metric,
    pub n_users: usize,
    pub mean: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MacroReport {
    pub min_qualifying: u64,
    pub users: Vec<UserMetrics>,
    pub summaries: Vec<MetricSummary>,
}

impl MacroReport {
    pub fn mean(&self, metric: Metric) -> Option<f64> {
        self.summaries.iter().find(|s| s.metric == metric).and_then(|s| s.mean)
    }
}

fn qualified(counts: &RelianceCounts, min: u64) -> RelianceReport {
    let full = counts.report();
    let keep = |ok: bool, v: Option<f64>| if ok { v } else { None };
    let under_ok = counts.ai_correct >= min;
    let over_ok = counts.ai_incorrect >= min;
    RelianceReport {
        n_interactions: counts.n,
        switch_rate: keep(counts.n >= min, full.switch_rate),
        under_reliance: keep(under_ok, full.under_reliance),
        over_reliance: keep(over_ok, full.over_reliance),
        total_inappropriate: keep(under_ok && over_ok, full.total_inappropriate),
        final_accuracy: keep(counts.n >= min, full.final_accuracy),
    }
}

/// Computes every metric per user, dropping a user from a metric when they
/// have fewer than `min_qualifying` interactions it is a fraction of, then
/// averages across the remaining users.
pub fn macro_aggregate(sessions: &[Session], window: Option<TrustWindow>, min_qualifying: u64) -> MacroReport {
    let users: Vec<UserMetrics> = per_user_counts(sessions, window)
        .into_iter()
        .map(|(user_id, counts)| UserMetrics {
            report: qualified(&counts, min_qualifying),
            user_id,
            counts,
        })
        .collect();
    let summaries = Metric::ALL
        .into_iter()
        .map(|metric| {
            let vals: Vec<f64> = users.iter().filter_map(|u| metric.of(&u.report)).collect();
            MetricSummary {
                metric,
                n_users: vals.len(),
                mean: (!vals.is_empty()).then(|| vals.iter().sum::<f64>() / vals.len() as f64),
            }
        })
        .collect();
    MacroReport {
        min_qualifying,
        users,
        summaries,
    }
}

/// Micro-aggregated report per attribute value. Users for whom `attribute`
/// returns `None` are left out.
pub fn group_compare<F>(sessions: &[Session], window: Option<TrustWindow>, attribute: F) -> BTreeMap<String, RelianceReport>
where
    F: Fn(&str) -> Option<String>,
{
    let mut groups: BTreeMap<String, RelianceCounts> = BTreeMap::new();
    for item in filter_analysis_set(sessions, window) {
        if let Some(key) = attribute(&item.user_id) {
            groups.entry(key).or_default().add(&item.interaction);
        }
    }
    groups.into_iter().map(|(k, c)| (k, c.report())).collect()
}

#[cfg(test)]
mod tests {
    use super::super::reliance_report;
    use super::super::testutil::*;
    use super::*;

    fn user_session(user: &str, pattern: &[(bool, bool)]) -> Session {
        let mut v = vec![interaction(0, true, 0, 0, 5)];
        for (i, &(ai_correct, switched)) in pattern.iter().enumerate() {
            let ai = if ai_correct { 0 } else { 1 };
            let init = 1 - ai;
            v.push(interaction(i + 1, ai_correct, init, if switched { ai } else { init }, 5));
        }
        session(user, v)
    }

    #[test]
    fn users_below_minimum_are_dropped() {
        let s = vec![
            user_session("a", &[(true, true), (true, false)]),
            user_session("b", &[(true, true), (true, false), (true, false), (false, true), (false, false), (false, false)]),
        ];
        let m = macro_aggregate(&s, None, 3);
        assert_eq!(m.users[0].report.switch_rate, None);
        assert_eq!(m.users[0].report.under_reliance, None);
        let b = &m.users[1].report;
        assert_eq!(b.under_reliance, Some(2.0 / 3.0));
        assert_eq!(b.over_reliance, Some(1.0 / 3.0));
        assert_eq!(b.total_inappropriate, Some(1.0));
        assert_eq!(m.mean(Metric::SwitchRate), Some(2.0 / 6.0));
        let summary = m.summaries.iter().find(|s| s.metric == Metric::SwitchRate).unwrap();
        assert_eq!(summary.n_users, 1);
    }

    #[test]
    fn identical_users_macro_equals_micro() {
        let pattern = [(true, true), (true, false), (false, true), (false, false), (true, true), (false, false)];
        let s: Vec<_> = ["a", "b", "c"].iter().map(|u| user_session(u, &pattern)).collect();
        let m = macro_aggregate(&s, None, 3);
        let micro = reliance_report(&filter_analysis_set(&s, None));
        for metric in Metric::ALL {
            let (x, y) = (m.mean(metric).unwrap(), metric.of(&micro).unwrap());
            assert!((x - y).abs() < 1e-12, "{metric:?}");
        }
    }

    #[test]
    fn grouping() {
        let s = vec![user_session("a", &[(true, true), (false, false)]), user_session("b", &[(true, true), (false, false)])];
        let single = group_compare(&s, None, |_| Some("all".into()));
        assert_eq!(single["all"], reliance_report(&filter_analysis_set(&s, None)));
        let split = group_compare(&s, None, |u| Some(u.to_string()));
        assert_eq!(split["a"], split["b"]);
        let partial = group_compare(&s, None, |u| (u == "a").then(|| "x".into()));
        assert_eq!(partial.len(), 1);
        assert_eq!(partial["x"].n_interactions, 2);
    }
}
