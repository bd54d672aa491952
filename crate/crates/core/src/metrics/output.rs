//! CSV renderings. Undefined values are empty cells.

use super::{Metric, RelianceReport, TrustBinnedReport};

fn cell(v: Option<f64>) -> String {
    v.map(|x| format!("{x:.6}")).unwrap_or_default()
}

fn finish(w: csv::Writer<Vec<u8>>) -> String {
    String::from_utf8(w.into_inner().expect("in-memory writer")).expect("utf-8 input")
}

/// One row per report, prefixed by its key columns.
pub fn reliance_table_csv(key_headers: &[&str], rows: &[(Vec<String>, RelianceReport)]) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    let mut header: Vec<&str> = key_headers.to_vec();
    header.push("n");
    header.extend(Metric::ALL.iter().map(|m| m.name()));
    w.write_record(&header).expect("in-memory write");
    for (keys, report) in rows {
        let mut rec = keys.clone();
        rec.push(report.n_interactions.to_string());
        rec.extend(Metric::ALL.iter().map(|m| cell(m.of(report))));
        w.write_record(&rec).expect("in-memory write");
    }
    finish(w)
}

/// Per-trust-level rows followed by one `r` row of weighted correlations.
pub fn trust_binned_csv(report: &TrustBinnedReport) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    let mut header = vec!["trust", "n", "n_ai_correct", "n_ai_incorrect"];
    header.extend(Metric::ALL.iter().map(|m| m.name()));
    w.write_record(&header).expect("in-memory write");
    for b in &report.bins {
        let mut rec = vec![
            b.trust.to_string(),
            b.counts.n.to_string(),
            b.counts.ai_correct.to_string(),
            b.counts.ai_incorrect.to_string(),
        ];
        rec.extend(Metric::ALL.iter().map(|m| cell(m.of(&b.report))));
        w.write_record(&rec).expect("in-memory write");
    }
    let mut rec = vec!["r".to_string(), String::new(), String::new(), String::new()];
    rec.extend(Metric::ALL.iter().map(|m| cell(report.correlation(*m))));
    w.write_record(&rec).expect("in-memory write");
    finish(w)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::metrics::RelianceCounts;

    #[test]
    fn undefined_is_empty() {
        let r = RelianceCounts {
            n: 2,
            switched: 1,
            final_correct: 1,
            ai_correct: 2,
            ai_correct_kept: 1,
            ..Default::default()
        }
        .report();
        let csv = reliance_table_csv(&["condition"], &[(vec!["x,y".into()], r)]);
        let lines: Vec<&str> = csv.lines().collect();
        assert_eq!(lines[0], "condition,n,switch_rate,under_reliance,over_reliance,total_inappropriate,final_accuracy");
        assert_eq!(lines[1], "\"x,y\",2,0.500000,0.500000,,,0.500000");
    }
}
