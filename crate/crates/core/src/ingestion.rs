//! Dataset loaders producing [`Problem`]s, plus JSON-lines helpers for the
//! canonical fixture formats.

use std::collections::HashSet;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::domain::{Problem, TaskId, Validate, Violation};

pub const MIN_STATEMENTS: usize = 10;
pub const MAX_STATEMENTS: usize = 15;
pub const DIAGNOSIS_DISTRACTORS: usize = 3;
/// Seed of the hash that places the correct diagnosis among the options.
pub const OPTION_ORDER_SEED: u64 = 0x7472_7573_746c_6162;

pub const ARC_SOURCE: &str = include_str!("../fixtures/arc_source.jsonl");
pub const ARC_SELECTION: &str = include_str!("../fixtures/arc_selection.jsonl");
pub const DIAGNOSIS_SOURCE: &str = include_str!("../fixtures/diagnosis_source.jsonl");

#[derive(Debug, Error)]
pub enum IngestError {
    #[error("{source_name}:{line}: {message}")]
    Malformed { source_name: String, line: usize, message: String },
    #[error("selected id {0} not found in source")]
    MissingId(String),
    #[error("id {0} selected twice")]
    DuplicateSelection(String),
    #[error("id {0} appears twice in source")]
    DuplicateSource(String),
    #[error("problem {id}: {violations:?}")]
    Invalid { id: String, violations: Vec<Violation> },
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> IngestError + '_ {
    move |source| IngestError::Io {
        path: path.display().to_string(),
        source,
    }
}

/// Parses one JSON value per non-blank line.
pub fn parse_jsonl<T: DeserializeOwned>(text: impl BufRead, source_name: &str) -> Result<Vec<T>, IngestError> {
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.map_err(|e| IngestError::Malformed {
            source_name: source_name.into(),
            line: i + 1,
            message: e.to_string(),
        })?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(serde_json::from_str(&line).map_err(|e| IngestError::Malformed {
            source_name: source_name.into(),
            line: i + 1,
            message: e.to_string(),
        })?);
    }
    Ok(out)
}

pub fn read_jsonl<T: DeserializeOwned>(path: impl AsRef<Path>) -> Result<Vec<T>, IngestError> {
    let path = path.as_ref();
    let f = File::open(path).map_err(io_err(path))?;
    parse_jsonl(BufReader::new(f), &path.display().to_string())
}

pub fn write_jsonl<T: Serialize>(path: impl AsRef<Path>, rows: &[T]) -> Result<(), IngestError> {
    let path = path.as_ref();
    let mut w = BufWriter::new(File::create(path).map_err(io_err(path))?);
    for r in rows {
        serde_json::to_writer(&mut w, r).expect("serializable");
        w.write_all(b"\n").map_err(io_err(path))?;
    }
    w.flush().map_err(io_err(path))
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ArcChoice {
    pub label: String,
    pub text: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ArcQuestionBody {
    pub stem: String,
    pub choices: Vec<ArcChoice>,
}

/// One question in the ARC JSON-lines layout.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RawArcQuestion {
    pub id: String,
    pub question: ArcQuestionBody,
    #[serde(rename = "answerKey")]
    pub answer_key: String,
}

/// A curated two-option reduction: the question and the wrong choice kept.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ArcSelection {
    pub id: String,
    pub distractor: String,
}

fn check(problem: Problem) -> Result<Problem, IngestError> {
    let v = problem.violations();
    if v.is_empty() {
        Ok(problem)
    } else {
        Err(IngestError::Invalid {
            id: problem.problem_id,
            violations: v,
        })
    }
}

/// Reduces the selected questions to their correct answer and the chosen
/// distractor, keeping the source's choice order.
pub fn load_arc(source: &[RawArcQuestion], selection: &[ArcSelection]) -> Result<Vec<Problem>, IngestError> {
    let mut seen = HashSet::new();
    for q in source {
        if !seen.insert(q.id.as_str()) {
            return Err(IngestError::DuplicateSource(q.id.clone()));
        }
    }
    let mut chosen = HashSet::new();
    let mut out = Vec::with_capacity(selection.len());
    for sel in selection {
        if !chosen.insert(sel.id.as_str()) {
            return Err(IngestError::DuplicateSelection(sel.id.clone()));
        }
        let q = source.iter().find(|q| q.id == sel.id).ok_or_else(|| IngestError::MissingId(sel.id.clone()))?;
        let bad = |message: String| IngestError::Malformed {
            source_name: "arc".into(),
            line: 0,
            message: format!("{}: {message}", q.id),
        };
        if sel.distractor == q.answer_key {
            return Err(bad("distractor is the answer".into()));
        }
        let kept: Vec<&ArcChoice> = q
            .question
            .choices
            .iter()
            .filter(|c| c.label == q.answer_key || c.label == sel.distractor)
            .collect();
        if kept.len() != 2 {
            return Err(bad(format!("expected answer {} and distractor {} among the choices", q.answer_key, sel.distractor)));
        }
        out.push(check(Problem {
            problem_id: q.id.clone(),
            task_id: TaskId::Arc,
            prompt: q.question.stem.clone(),
            options: kept.iter().map(|c| c.text.clone()).collect(),
            correct_index: kept.iter().position(|c| c.label == q.answer_key).expect("answer kept"),
        })?);
    }
    Ok(out)
}

/// One intake case with its ranked differential.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RawDiagnosisCase {
    pub id: String,
    pub age: u32,
    pub sex: String,
    pub statements: Vec<String>,
    /// Conditions considered, most likely first; includes the pathology.
    pub differential: Vec<String>,
    pub pathology: String,
}

impl RawDiagnosisCase {
    pub fn prompt(&self) -> String {
        let sex = match self.sex.to_ascii_uppercase().as_str() {
            "M" | "MALE" => "male",
            "F" | "FEMALE" => "female",
            _ => "person",
        };
        let mut s = format!("Patient is a {} year old {sex}.", self.age);
        for st in &self.statements {
            s.push_str("\n- ");
            s.push_str(st);
        }
        s
    }
}

/// Position of the correct option, stable per problem id.
pub fn correct_position(problem_id: &str, num_options: usize) -> usize {
    let mut h = Sha256::new();
    h.update(OPTION_ORDER_SEED.to_le_bytes());
    h.update(problem_id.as_bytes());
    let digest = h.finalize();
    let mut b = [0u8; 8];
    b.copy_from_slice(&digest[..8]);
    (u64::from_le_bytes(b) % num_options as u64) as usize
}

/// Keeps cases with 10 to 15 statements and builds four options: the true
/// condition plus the three highest-ranked alternatives.
pub fn load_diagnosis(source: &[RawDiagnosisCase]) -> Result<Vec<Problem>, IngestError> {
    let mut seen = HashSet::new();
    let mut out = Vec::new();
    for c in source {
        if !seen.insert(c.id.as_str()) {
            return Err(IngestError::DuplicateSource(c.id.clone()));
        }
        if !(MIN_STATEMENTS..=MAX_STATEMENTS).contains(&c.statements.len()) {
            continue;
        }
        if !c.differential.contains(&c.pathology) {
            return Err(IngestError::Malformed {
                source_name: "diagnosis".into(),
                line: 0,
                message: format!("{}: pathology {} missing from differential", c.id, c.pathology),
            });
        }
        let negatives: Vec<&String> = c.differential.iter().filter(|d| **d != c.pathology).take(DIAGNOSIS_DISTRACTORS).collect();
        if negatives.len() < DIAGNOSIS_DISTRACTORS {
            log::warn!("case {}: only {} alternative conditions, skipped", c.id, negatives.len());
            continue;
        }
        let n = DIAGNOSIS_DISTRACTORS + 1;
        let pos = correct_position(&c.id, n);
        let mut options: Vec<String> = negatives.into_iter().cloned().collect();
        options.insert(pos, c.pathology.clone());
        out.push(check(Problem {
            problem_id: c.id.clone(),
            task_id: TaskId::Diagnosis,
            prompt: c.prompt(),
            options,
            correct_index: pos,
        })?);
    }
    Ok(out)
}

/// The bundled 39-question science pool.
pub fn builtin_arc() -> Vec<Problem> {
    let source: Vec<RawArcQuestion> = parse_jsonl(ARC_SOURCE.as_bytes(), "arc_source.jsonl").expect("bundled fixture parses");
    let selection: Vec<ArcSelection> = parse_jsonl(ARC_SELECTION.as_bytes(), "arc_selection.jsonl").expect("bundled fixture parses");
    load_arc(&source, &selection).expect("bundled fixture loads")
}

/// The bundled 55-case diagnosis pool.
pub fn builtin_diagnosis() -> Vec<Problem> {
    let source: Vec<RawDiagnosisCase> = parse_jsonl(DIAGNOSIS_SOURCE.as_bytes(), "diagnosis_source.jsonl").expect("bundled fixture parses");
    load_diagnosis(&source).expect("bundled fixture loads")
}

#[cfg(test)]
mod tests {
    use super::*;

    fn raw(id: &str, n_statements: usize, differential: &[&str]) -> RawDiagnosisCase {
        RawDiagnosisCase {
            id: id.into(),
            age: 7,
            sex: "M".into(),
            statements: (0..n_statements).map(|i| format!("The patient reports symptom {i}.")).collect(),
            differential: differential.iter().map(|s| s.to_string()).collect(),
            pathology: "T".into(),
        }
    }

    #[test]
    fn statement_filter_and_top_three() {
        let cases = vec![raw("a", 9, &["T", "n1", "n2", "n3"]), raw("b", 12, &["n1", "T", "n2", "n3", "n4"]), raw("c", 16, &["T", "n1", "n2", "n3"])];
        let p = load_diagnosis(&cases).unwrap();
        assert_eq!(p.len(), 1);
        let mut opts = p[0].options.clone();
        opts.sort();
        assert_eq!(opts, vec!["T", "n1", "n2", "n3"]);
        assert_eq!(p[0].options[p[0].correct_index], "T");
        assert!(p[0].prompt.starts_with("Patient is a 7 year old male.\n- The patient reports symptom 0."));
    }

    #[test]
    fn too_few_negatives_skipped() {
        assert!(load_diagnosis(&[raw("a", 12, &["T", "n1", "n2"])]).unwrap().is_empty());
        assert!(load_diagnosis(&[raw("a", 12, &["n1", "n2", "n3"])]).is_err());
    }

    #[test]
    fn arc_selection_errors() {
        let q = RawArcQuestion {
            id: "q1".into(),
            question: ArcQuestionBody {
                stem: "s".into(),
                choices: ["x", "y", "z"].iter().zip(["A", "B", "C"]).map(|(t, l)| ArcChoice { label: l.into(), text: t.to_string() }).collect(),
            },
            answer_key: "B".into(),
        };
        let ok = load_arc(std::slice::from_ref(&q), &[ArcSelection { id: "q1".into(), distractor: "C".into() }]).unwrap();
        assert_eq!(ok[0].options, vec!["y", "z"]);
        assert_eq!(ok[0].correct_index, 0);
        let dup = vec![ArcSelection { id: "q1".into(), distractor: "C".into() }; 2];
        assert!(matches!(load_arc(std::slice::from_ref(&q), &dup), Err(IngestError::DuplicateSelection(_))));
        assert!(matches!(
            load_arc(std::slice::from_ref(&q), &[ArcSelection { id: "zz".into(), distractor: "A".into() }]),
            Err(IngestError::MissingId(_))
        ));
        assert!(load_arc(&[q], &[ArcSelection { id: "q1".into(), distractor: "B".into() }]).is_err());
    }

    #[test]
    fn malformed_row_reports_line() {
        let err = parse_jsonl::<ArcSelection>("{\"id\":\"a\",\"distractor\":\"B\"}\n\nnot json\n".as_bytes(), "sel").unwrap_err();
        assert!(err.to_string().starts_with("sel:3:"), "{err}");
    }

    #[test]
    fn positions_spread() {
        let counts = (0..400).fold([0usize; 4], |mut acc, i| {
            acc[correct_position(&format!("id{i}"), 4)] += 1;
            acc
        });
        assert!(counts.iter().all(|&c| c > 60), "{counts:?}");
        assert_eq!(correct_position("x", 4), correct_position("x", 4));
    }
}
