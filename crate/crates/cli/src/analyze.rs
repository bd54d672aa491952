use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::PathBuf;

use clap::{Args, ValueEnum};
use serde::Serialize;
use trustlab::metrics::{
    clustered_bootstrap, filter_analysis_set, macro_aggregate, per_user_counts, reliance_report, reliance_table_csv, trust_binned,
    trust_binned_csv, Alternative, BootstrapConfig, BootstrapResult, MacroReport, Metric, RelianceReport, TrustBinnedReport, TrustWindow,
};
use trustlab::service::{analysis_sessions, read_records};
use trustlab::Session;

use crate::io::{write_json, write_text};
use crate::{CliError, CliResult, Common};

#[derive(Clone, Copy, ValueEnum)]
enum Sided {
    TwoSided,
    Less,
    Greater,
}

#[derive(Args)]
pub struct AnalyzeArgs {
    /// Session log: export records or bare sessions, one per line.
    input: PathBuf,
    /// Condition the others are compared against; defaults to `control`
    /// when present, else the first condition.
    #[arg(long)]
    baseline: Option<String>,
    #[arg(long, default_value_t = 10_000)]
    resamples: usize,
    #[arg(long, value_enum, default_value = "two-sided")]
    alternative: Sided,
    /// Minimum qualifying interactions per user for macro averages.
    #[arg(long, default_value_t = 3)]
    min_qualifying: u64,
    /// Keep unfinished and quality-gate-rejected sessions.
    #[arg(long)]
    include_partial: bool,
}

const WINDOWS: [TrustWindow; 3] = [TrustWindow::ALL, TrustWindow::LOW, TrustWindow::HIGH];

#[derive(Serialize)]
struct ConditionReport {
    condition_id: String,
    users: usize,
    reliance: BTreeMap<String, RelianceReport>,
    macro_: BTreeMap<String, MacroReport>,
    trust_binned: TrustBinnedReport,
}

#[derive(Serialize)]
struct Comparison {
    condition_id: String,
    baseline: String,
    window: String,
    result: BootstrapResult,
}

#[derive(Serialize)]
struct Report {
    input: String,
    sessions: usize,
    seed: u64,
    baseline: String,
    pooled_trust_binned: TrustBinnedReport,
    conditions: Vec<ConditionReport>,
    comparisons: Vec<Comparison>,
}

fn dat(v: Option<f64>) -> String {
    v.map(|x| format!("{x:.6}")).unwrap_or_else(|| "NaN".into())
}

pub fn run(c: &Common, args: AnalyzeArgs) -> CliResult {
    let records = read_records(&args.input).map_err(CliError::data)?;
    let sessions: Vec<Session> = if args.include_partial {
        records.into_iter().map(|r| r.session).collect()
    } else {
        analysis_sessions(&records)
    };
    if sessions.is_empty() {
        return Err(CliError::Data(format!("{}: no sessions to analyze", args.input.display())));
    }
    let mut by_condition: BTreeMap<String, Vec<Session>> = BTreeMap::new();
    for s in &sessions {
        by_condition.entry(s.condition_id.clone()).or_default().push(s.clone());
    }
    let baseline = match args.baseline {
        Some(b) if by_condition.contains_key(&b) => b,
        Some(b) => return Err(CliError::Usage(format!("baseline condition {b} is not in the log"))),
        None if by_condition.contains_key("control") => "control".into(),
        None => by_condition.keys().next().expect("non-empty").clone(),
    };
    let seed = c.seed.unwrap_or(0);
    let boot = BootstrapConfig {
        n_resamples: args.resamples,
        alternative: match args.alternative {
            Sided::TwoSided => Alternative::TwoSided,
            Sided::Less => Alternative::Less,
            Sided::Greater => Alternative::Greater,
        },
        ..BootstrapConfig::new(seed)
    };

    let conditions: Vec<ConditionReport> = by_condition
        .iter()
        .map(|(id, ss)| ConditionReport {
            condition_id: id.clone(),
            users: ss.len(),
            reliance: WINDOWS.iter().map(|w| (w.name(), reliance_report(&filter_analysis_set(ss, Some(*w))))).collect(),
            macro_: WINDOWS.iter().map(|w| (w.name(), macro_aggregate(ss, Some(*w), args.min_qualifying))).collect(),
            trust_binned: trust_binned(&filter_analysis_set(ss, None)),
        })
        .collect();

    let mut comparisons = Vec::new();
    for (id, ss) in by_condition.iter().filter(|(id, _)| **id != baseline) {
        for w in WINDOWS {
            let a: Vec<_> = per_user_counts(&by_condition[&baseline], Some(w)).into_iter().map(|(_, c)| c).collect();
            let b: Vec<_> = per_user_counts(ss, Some(w)).into_iter().map(|(_, c)| c).collect();
            for metric in Metric::ALL {
                match clustered_bootstrap(&a, &b, metric, &boot) {
                    Ok(result) => comparisons.push(Comparison {
                        condition_id: id.clone(),
                        baseline: baseline.clone(),
                        window: w.name(),
                        result,
                    }),
                    Err(e) => log::warn!("{id} vs {baseline}, {} trust, {}: {e}", w.name(), metric.name()),
                }
            }
        }
    }

    // Tables.
    let rows: Vec<(Vec<String>, RelianceReport)> = conditions
        .iter()
        .flat_map(|cr| WINDOWS.iter().map(move |w| (vec![cr.condition_id.clone(), w.name()], cr.reliance[&w.name()])))
        .collect();
    write_text(c, "reliance.csv", &reliance_table_csv(&["condition", "window"], &rows))?;

    let mut macro_csv = String::from("condition,window,metric,n_users,mean\n");
    for cr in &conditions {
        for w in WINDOWS {
            for s in &cr.macro_[&w.name()].summaries {
                let mean = s.mean.map(|m| format!("{m:.6}")).unwrap_or_default();
                writeln!(macro_csv, "{},{},{},{},{mean}", cr.condition_id, w.name(), s.metric.name(), s.n_users).unwrap();
            }
        }
    }
    write_text(c, "macro.csv", &macro_csv)?;

    let mut boot_csv = String::from("condition,baseline,window,metric,baseline_value,value,difference,p_value,ci_low,ci_high\n");
    for cmp in &comparisons {
        let r = &cmp.result;
        writeln!(
            boot_csv,
            "{},{},{},{},{:.6},{:.6},{:.6},{:.6},{:.6},{:.6}",
            cmp.condition_id,
            cmp.baseline,
            cmp.window,
            r.metric.name(),
            r.value_a,
            r.value_b,
            r.difference,
            r.p_value,
            r.ci95.0,
            r.ci95.1
        )
        .unwrap();
    }
    write_text(c, "bootstrap.csv", &boot_csv)?;

    let pooled = trust_binned(&filter_analysis_set(&sessions, None));
    write_text(c, "trust_binned.csv", &trust_binned_csv(&pooled))?;
    for cr in &conditions {
        write_text(c, &format!("trust_binned_{}.csv", cr.condition_id), &trust_binned_csv(&cr.trust_binned))?;
    }

    // Plot data: one gnuplot data block per condition (trust view) and per
    // trust window (condition view).
    let mut trust_dat = String::new();
    for (k, cr) in conditions.iter().enumerate() {
        if k > 0 {
            trust_dat.push_str("\n\n");
        }
        writeln!(trust_dat, "# condition {}", cr.condition_id).unwrap();
        trust_dat.push_str("# trust n switch_rate under_reliance over_reliance total_inappropriate final_accuracy\n");
        for b in &cr.trust_binned.bins {
            write!(trust_dat, "{} {}", b.trust, b.counts.n).unwrap();
            for m in Metric::ALL {
                write!(trust_dat, " {}", dat(m.of(&b.report))).unwrap();
            }
            trust_dat.push('\n');
        }
    }
    write_text(c, "plot_trust.dat", &trust_dat)?;

    let mut cond_dat = String::new();
    for (k, w) in WINDOWS.iter().enumerate() {
        if k > 0 {
            cond_dat.push_str("\n\n");
        }
        writeln!(cond_dat, "# window {}", w.name()).unwrap();
        cond_dat.push_str("# index condition n switch_rate under_reliance over_reliance total_inappropriate final_accuracy\n");
        for (i, cr) in conditions.iter().enumerate() {
            let r = &cr.reliance[&w.name()];
            write!(cond_dat, "{i} {} {}", cr.condition_id, r.n_interactions).unwrap();
            for m in Metric::ALL {
                write!(cond_dat, " {}", dat(m.of(r))).unwrap();
            }
            cond_dat.push('\n');
        }
    }
    write_text(c, "plot_conditions.dat", &cond_dat)?;
    write_text(c, "plot.gp", &gnuplot_script(&conditions))?;

    write_json(
        c,
        "report.json",
        &Report {
            input: args.input.display().to_string(),
            sessions: sessions.len(),
            seed,
            baseline,
            pooled_trust_binned: pooled,
            conditions,
            comparisons,
        },
    )?;
    Ok(())
}

fn gnuplot_script(conditions: &[ConditionReport]) -> String {
    let mut s = String::from(
        "# gnuplot plot.gp\n\
         set terminal pngcairo size 1500,400\n\
         set datafile missing 'NaN'\n\
         set style fill solid 0.6\n\
         set boxwidth 0.8\n\
         set yrange [0:1]\n\
         metrics = 'switch_rate under_reliance over_reliance total_inappropriate final_accuracy'\n",
    );
    for (k, cr) in conditions.iter().enumerate() {
        write!(
            s,
            "set output 'trust_{id}.png'\n\
             set multiplot layout 1,5 title 'Reliance by trust: {id}'\n\
             set xrange [-0.5:10.5]\n\
             do for [m=1:5] {{ set title word(metrics, m); plot 'plot_trust.dat' index {k} using 1:(column(m+2)) with boxes notitle }}\n\
             unset multiplot\n",
            id = cr.condition_id
        )
        .unwrap();
    }
    for (k, w) in WINDOWS.iter().enumerate() {
        write!(
            s,
            "set output 'conditions_{name}.png'\n\
             set multiplot layout 1,5 title 'Conditions, {name} trust'\n\
             set autoscale x\n\
             do for [m=1:5] {{ set title word(metrics, m); plot 'plot_conditions.dat' index {k} using 1:(column(m+3)):xtic(2) with boxes notitle }}\n\
             unset multiplot\n",
            name = w.name()
        )
        .unwrap();
    }
    s
}
