//! Reliance metrics over interaction logs.
//!
//! The analysis set drops each session's first interaction (no prior trust)
//! and every interaction where the initial decision already matched the AI.
//! What remains is tagged with the trust reported at the end of the previous
//! round, which is the trust the participant held when seeing the advice.

mod aggregate;
mod bootstrap;
mod output;

pub use aggregate::{group_compare, macro_aggregate, MacroReport, MetricSummary, UserMetrics};
pub use bootstrap::{clustered_bootstrap, per_user_counts, Alternative, BootstrapConfig, BootstrapError, BootstrapResult};
pub use output::{reliance_table_csv, trust_binned_csv};

use serde::{Deserialize, Serialize};

use crate::domain::{Interaction, Session, TrustLevel};

/// Inclusive range of prior trust levels.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct TrustWindow {
    pub min: u8,
    pub max: u8,
}

impl TrustWindow {
    pub const ALL: TrustWindow = TrustWindow { min: 0, max: 10 };
    /// Trust below 5.
    pub const LOW: TrustWindow = TrustWindow { min: 0, max: 4 };
    /// Trust above 8.
    pub const HIGH: TrustWindow = TrustWindow { min: 9, max: 10 };

    pub fn contains(&self, t: TrustLevel) -> bool {
        (self.min..=self.max).contains(&t.value())
    }

    pub fn name(&self) -> String {
        match *self {
            Self::ALL => "all".into(),
            Self::LOW => "low".into(),
            Self::HIGH => "high".into(),
            Self { min, max } => format!("{min}-{max}"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnalysisItem {
    pub interaction: Interaction,
    pub prior_trust: TrustLevel,
    pub user_id: String,
}

pub fn filter_analysis_set(sessions: &[Session], window: Option<TrustWindow>) -> Vec<AnalysisItem> {
    let mut out = Vec::new();
    for s in sessions {
        for pair in s.interactions.windows(2) {
            let (prev, cur) = (&pair[0], &pair[1]);
            if !cur.disagreed() {
                continue;
            }
            if window.is_some_and(|w| !w.contains(prev.trust_report)) {
                continue;
            }
            out.push(AnalysisItem {
                interaction: cur.clone(),
                prior_trust: prev.trust_report,
                user_id: s.user_id.clone(),
            });
        }
    }
    out
}

/// Sufficient statistics for every reliance metric.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct RelianceCounts {
    pub n: u64,
    pub switched: u64,
    pub final_correct: u64,
    pub ai_correct: u64,
    pub ai_correct_kept: u64,
    pub ai_incorrect: u64,
    pub ai_incorrect_switched: u64,
}

impl RelianceCounts {
    pub fn add(&mut self, it: &Interaction) {
        let switched = it.switched_to_ai();
        self.n += 1;
        self.switched += u64::from(switched);
        self.final_correct += u64::from(it.final_correct());
        if it.ai_correct() {
            self.ai_correct += 1;
            self.ai_correct_kept += u64::from(!switched);
        } else {
            self.ai_incorrect += 1;
            self.ai_incorrect_switched += u64::from(switched);
        }
    }

    pub fn merge(&mut self, o: &RelianceCounts) {
        self.n += o.n;
        self.switched += o.switched;
        self.final_correct += o.final_correct;
        self.ai_correct += o.ai_correct;
        self.ai_correct_kept += o.ai_correct_kept;
        self.ai_incorrect += o.ai_incorrect;
        self.ai_incorrect_switched += o.ai_incorrect_switched;
    }

    pub fn from_items<'a>(items: impl IntoIterator<Item = &'a AnalysisItem>) -> Self {
        let mut c = Self::default();
        for it in items {
            c.add(&it.interaction);
        }
        c
    }

    pub fn report(&self) -> RelianceReport {
        let frac = |num: u64, den: u64| (den > 0).then(|| num as f64 / den as f64);
        let under = frac(self.ai_correct_kept, self.ai_correct);
        let over = frac(self.ai_incorrect_switched, self.ai_incorrect);
        RelianceReport {
            n_interactions: self.n,
            switch_rate: frac(self.switched, self.n),
            under_reliance: under,
            over_reliance: over,
            total_inappropriate: under.zip(over).map(|(u, o)| u + o),
            final_accuracy: frac(self.final_correct, self.n),
        }
    }

    /// Number of interactions a metric is a fraction of.
    pub fn denominator(&self, metric: Metric) -> u64 {
        match metric {
            Metric::SwitchRate | Metric::FinalAccuracy | Metric::TotalInappropriate => self.n,
            Metric::UnderReliance => self.ai_correct,
            Metric::OverReliance => self.ai_incorrect,
        }
    }
}

/// Absent fields are undefined: there was nothing to take a fraction of.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RelianceReport {
    pub n_interactions: u64,
    pub switch_rate: Option<f64>,
    pub under_reliance: Option<f64>,
    pub over_reliance: Option<f64>,
    pub total_inappropriate: Option<f64>,
    pub final_accuracy: Option<f64>,
}

pub fn reliance_report(items: &[AnalysisItem]) -> RelianceReport {
    RelianceCounts::from_items(items).report()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Metric {
    SwitchRate,
    UnderReliance,
    OverReliance,
    TotalInappropriate,
    FinalAccuracy,
}

impl Metric {
    pub const ALL: [Metric; 5] = [
        Metric::SwitchRate,
        Metric::UnderReliance,
        Metric::OverReliance,
        Metric::TotalInappropriate,
        Metric::FinalAccuracy,
    ];

    pub fn of(self, r: &RelianceReport) -> Option<f64> {
        match self {
            Metric::SwitchRate => r.switch_rate,
            Metric::UnderReliance => r.under_reliance,
            Metric::OverReliance => r.over_reliance,
            Metric::TotalInappropriate => r.total_inappropriate,
            Metric::FinalAccuracy => r.final_accuracy,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Metric::SwitchRate => "switch_rate",
            Metric::UnderReliance => "under_reliance",
            Metric::OverReliance => "over_reliance",
            Metric::TotalInappropriate => "total_inappropriate",
            Metric::FinalAccuracy => "final_accuracy",
        }
    }
}

impl std::str::FromStr for Metric {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Metric::ALL.into_iter().find(|m| m.name() == s).ok_or_else(|| format!("unknown metric {s:?}"))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrustBin {
    pub trust: u8,
    pub counts: RelianceCounts,
    pub report: RelianceReport,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrustCorrelation {
    pub metric: Metric,
    pub r: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrustBinnedReport {
    pub bins: Vec<TrustBin>,
    pub correlations: Vec<TrustCorrelation>,
}

impl TrustBinnedReport {
    pub fn correlation(&self, metric: Metric) -> Option<f64> {
        self.correlations.iter().find(|c| c.metric == metric).and_then(|c| c.r)
    }

    pub fn total(&self) -> RelianceCounts {
        let mut c = RelianceCounts::default();
        for b in &self.bins {
            c.merge(&b.counts);
        }
        c
    }
}

/// Bins items by prior trust (all 11 levels) and correlates each metric with
/// trust, weighting every bin by the number of interactions the metric is a
/// fraction of there.
pub fn trust_binned(items: &[AnalysisItem]) -> TrustBinnedReport {
    let mut counts = [RelianceCounts::default(); 11];
    for it in items {
        counts[it.prior_trust.value() as usize].add(&it.interaction);
    }
    let bins: Vec<TrustBin> = counts
        .iter()
        .enumerate()
        .map(|(t, c)| TrustBin {
            trust: t as u8,
            counts: *c,
            report: c.report(),
        })
        .collect();
    let correlations = Metric::ALL
        .into_iter()
        .map(|metric| {
            let (mut xs, mut ys, mut ws) = (Vec::new(), Vec::new(), Vec::new());
            for b in &bins {
                if let Some(y) = metric.of(&b.report) {
                    xs.push(f64::from(b.trust));
                    ys.push(y);
                    ws.push(b.counts.denominator(metric) as f64);
                }
            }
            TrustCorrelation {
                metric,
                r: weighted_pearson(&xs, &ys, &ws),
            }
        })
        .collect();
    TrustBinnedReport { bins, correlations }
}

/// Weighted Pearson correlation. Undefined with fewer than two positively
/// weighted points or zero weighted variance in either variable.
pub fn weighted_pearson(xs: &[f64], ys: &[f64], ws: &[f64]) -> Option<f64> {
    assert!(xs.len() == ys.len() && ys.len() == ws.len(), "length mismatch");
    let points = ws.iter().filter(|&&w| w > 0.0).count();
    let wsum: f64 = ws.iter().sum();
    if points < 2 || wsum <= 0.0 {
        return None;
    }
    let mx = xs.iter().zip(ws).map(|(x, w)| x * w).sum::<f64>() / wsum;
    let my = ys.iter().zip(ws).map(|(y, w)| y * w).sum::<f64>() / wsum;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for ((x, y), w) in xs.iter().zip(ys).zip(ws) {
        sxy += w * (x - mx) * (y - my);
        sxx += w * (x - mx) * (x - mx);
        syy += w * (y - my) * (y - my);
    }
    let scale = wsum * 1e-24;
    if sxx <= scale || syy <= scale {
        return None;
    }
    Some((sxy / (sxx * syy).sqrt()).clamp(-1.0, 1.0))
}

/// Unweighted Pearson correlation.
pub fn pearson(xs: &[f64], ys: &[f64]) -> Option<f64> {
    weighted_pearson(xs, ys, &vec![1.0; xs.len()])
}
