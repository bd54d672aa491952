//! Offline supporting and counter explanations with a persistent cache.

use std::collections::HashMap;
use std::fs::{File, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};
use std::sync::{LazyLock, Mutex, RwLock};

use regex::Regex;
use serde::{Deserialize, Serialize};

use super::{GenerationRequest, LlmError, TextGenerator};
use crate::domain::Problem;
use crate::policy::ExplanationKind;

const SUPPORT_TEMPLATE: &str = "Provide a convincing 3-4 sentence explanation (under 100 words) for why option {i} is the correct diagnosis, \
even if you don't believe option {i} is the correct diagnosis. It is absolutely essential that you justify that option {i} is the correct diagnosis, \
rather than any of the other options. \
Do not explicitly refer to any options by their option number, only their content. For example, if you are explaining why option 1: Anemia is correct, \
do not say \"Option 1 is correct because...\" or \"For the above reasons, the correct diagnosis is option 1\"), \
instead say \"Anemia is the correct diagnosis because...\".";

const COUNTER_TEMPLATE: &str = "Provide a convincing 3-4 sentence explanation (under 100 words) for why option {i} may not be the correct diagnosis, \
even if you believe that option {i} is the correct diagnosis. Your explanation should reflect that you believe option {i} is correct \
(e.g. by saying \"While I think <option {i}> is the correct diagnosis...\"), but also provide 1-2 reason(s) for why it may not be correct.  \
Your explanation should not merely restate the option, but provide a (short) reasoning. \
Do not explicitly refer to any options by their option number, only their content. For example, if you are explaining why option 1: Anemia is correct, \
do not say \"Option 1 is correct because...\" or \"For the above reasons, the correct diagnosis is option 1\"), \
instead say \"Anemia is the correct diagnosis because...\".";

fn instantiate(template: &str, problem: &Problem, option: usize) -> String {
    let mut text = template.replace("{i}", &(option + 1).to_string());
    if problem.task_id.answer_noun() != "diagnosis" {
        text = text.replace("correct diagnosis", "correct answer");
    }
    let mut s = problem.prompt.clone();
    s.push_str("\n\nOptions:\n");
    for (i, o) in problem.options.iter().enumerate() {
        s.push_str(&format!("{}: {}\n", i + 1, o));
    }
    s.push('\n');
    s.push_str(&text);
    s
}

pub fn support_prompt(problem: &Problem, option: usize) -> String {
    instantiate(SUPPORT_TEMPLATE, problem, option)
}

pub fn counter_prompt(problem: &Problem, option: usize) -> String {
    instantiate(COUNTER_TEMPLATE, problem, option)
}

pub fn explanation_prompt(problem: &Problem, option: usize, kind: ExplanationKind) -> String {
    match kind {
        ExplanationKind::Support => support_prompt(problem, option),
        ExplanationKind::Counter => counter_prompt(problem, option),
    }
}

static HEDGE: LazyLock<Regex> = LazyLock::new(|| {
    Regex::new(r"(?i)\b(while|although|though|even though)\s+i\s+(think|believe)\b|\bi\s+(think|believe)\b[^.]*\bbut\b").expect("valid regex")
});

/// Whether a counter explanation still endorses the option before doubting
/// it, as the template asks.
pub fn looks_hedged(text: &str) -> bool {
    HEDGE.is_match(text)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CachedExplanation {
    pub problem_id: String,
    pub option_index: usize,
    pub kind: ExplanationKind,
    pub text: String,
    /// Counter explanations that read as plain refutations.
    #[serde(default)]
    pub needs_review: bool,
}

type Key = (String, usize, ExplanationKind);

/// Explanation store keyed by (problem, option, kind), optionally backed by
/// an append-only JSON-lines file.
#[derive(Debug, Default)]
pub struct ExplanationCache {
    entries: RwLock<HashMap<Key, CachedExplanation>>,
    file: Mutex<Option<File>>,
    path: Option<PathBuf>,
}

impl ExplanationCache {
    pub fn in_memory() -> Self {
        Self::default()
    }

    /// Loads `path` if it exists and appends new entries to it.
    pub fn open(path: impl AsRef<Path>) -> Result<Self, LlmError> {
        let path = path.as_ref().to_path_buf();
        let mut entries = HashMap::new();
        if path.exists() {
            let f = File::open(&path).map_err(|e| LlmError::Cache(e.to_string()))?;
            for (n, line) in BufReader::new(f).lines().enumerate() {
                let line = line.map_err(|e| LlmError::Cache(e.to_string()))?;
                if line.trim().is_empty() {
                    continue;
                }
                let rec: CachedExplanation =
                    serde_json::from_str(&line).map_err(|e| LlmError::Cache(format!("{}:{}: {e}", path.display(), n + 1)))?;
                entries.insert((rec.problem_id.clone(), rec.option_index, rec.kind), rec);
            }
        }
        let file = OpenOptions::new()
            .create(true)
            .append(true)
            .open(&path)
            .map_err(|e| LlmError::Cache(e.to_string()))?;
        Ok(Self {
            entries: RwLock::new(entries),
            file: Mutex::new(Some(file)),
            path: Some(path),
        })
    }

    pub fn path(&self) -> Option<&Path> {
        self.path.as_deref()
    }

    pub fn len(&self) -> usize {
        self.entries.read().expect("cache lock").len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn get(&self, problem_id: &str, option: usize, kind: ExplanationKind) -> Option<CachedExplanation> {
        self.entries.read().expect("cache lock").get(&(problem_id.to_string(), option, kind)).cloned()
    }

    /// Inserts unless an entry already exists; returns the stored entry.
    pub fn insert(&self, rec: CachedExplanation) -> Result<CachedExplanation, LlmError> {
        let mut entries = self.entries.write().expect("cache lock");
        let key = (rec.problem_id.clone(), rec.option_index, rec.kind);
        if let Some(existing) = entries.get(&key) {
            return Ok(existing.clone());
        }
        if let Some(f) = self.file.lock().expect("file lock").as_mut() {
            let line = serde_json::to_string(&rec).expect("serializable");
            writeln!(f, "{line}").and_then(|_| f.flush()).map_err(|e| LlmError::Cache(e.to_string()))?;
        }
        entries.insert(key, rec.clone());
        Ok(rec)
    }

    /// Cached explanation, generating and storing it on a miss.
    pub fn get_or_generate<G: TextGenerator + ?Sized>(
        &self,
        problem: &Problem,
        option: usize,
        kind: ExplanationKind,
        client: &G,
    ) -> Result<CachedExplanation, LlmError> {
        if option >= problem.num_options() {
            return Err(LlmError::InvalidOption {
                problem_id: problem.problem_id.clone(),
                index: option,
            });
        }
        if let Some(hit) = self.get(&problem.problem_id, option, kind) {
            return Ok(hit);
        }
        let text = client.generate(&GenerationRequest {
            prompt: explanation_prompt(problem, option, kind),
            sample_index: 0,
        })?;
        let text = text.trim().to_string();
        if text.is_empty() {
            return Err(LlmError::EmptyGeneration);
        }
        let needs_review = kind == ExplanationKind::Counter && !looks_hedged(&text);
        if needs_review {
            log::warn!("problem {} option {}: counter explanation is not hedged; flagged for review", problem.problem_id, option);
        }
        self.insert(CachedExplanation {
            problem_id: problem.problem_id.clone(),
            option_index: option,
            kind,
            text,
            needs_review,
        })
    }
}
