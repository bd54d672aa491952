//! Python bindings. Structured values cross the boundary as plain dicts and
//! lists, in the same shape as the JSONL files.

use std::path::Path;
use std::sync::Arc;

use pyo3::create_exception;
use pyo3::exceptions::PyValueError;
use pyo3::prelude::*;
use serde::de::DeserializeOwned;
use serde::Serialize;
use serde_json::Value;
use trustlab::assistant::{generate_sequences as gen, AssistantProfile, SequenceSpec};
use trustlab::engine::{EngineConfig, EngineError, SessionHeader, SessionState};
use trustlab::estimators::{default_grid, evaluate as eval, fit_all, Estimator};
use trustlab::ingestion::{builtin_arc, builtin_diagnosis};
use trustlab::metrics::{filter_analysis_set, macro_aggregate as macro_agg, reliance_report, trust_binned as binned, TrustWindow};
use trustlab::policy::{PolicyConfig, PolicyKind};
use trustlab::service::{self, simulate_config, simulated_records, AssistantSource, ProblemPool, StudyConfig};
use trustlab::simuser::UserModel;
use trustlab::{ProblemSequence, Session};

create_exception!(trustlab, TrustlabError, PyValueError);
create_exception!(trustlab, ProtocolError, TrustlabError);

fn err(e: impl std::fmt::Display) -> PyErr {
    TrustlabError::new_err(e.to_string())
}

fn protocol(e: EngineError) -> PyErr {
    ProtocolError::new_err((e.code(), e.to_string()))
}

fn to_py<'py, T: Serialize>(py: Python<'py>, v: &T) -> PyResult<Bound<'py, PyAny>> {
    let text = serde_json::to_string(v).map_err(err)?;
    py.import("json")?.call_method1("loads", (text,))
}

fn from_py<T: DeserializeOwned>(obj: &Bound<'_, PyAny>) -> PyResult<T> {
    let text: String = obj.py().import("json")?.call_method1("dumps", (obj,))?.extract()?;
    serde_json::from_str(&text).map_err(err)
}

/// Accepts bare sessions or export records.
fn sessions_from(obj: &Bound<'_, PyAny>) -> PyResult<Vec<Session>> {
    let rows: Vec<Value> = from_py(obj)?;
    rows.into_iter()
        .map(|mut v| {
            let v = v.get_mut("session").map(Value::take).unwrap_or(v);
            serde_json::from_value(v).map_err(err)
        })
        .collect()
}

fn window(low: Option<u8>, high: Option<u8>) -> Option<TrustWindow> {
    (low.is_some() || high.is_some()).then(|| TrustWindow {
        min: low.unwrap_or(0),
        max: high.unwrap_or(10),
    })
}

/// Bundled problems of the `"arc"` or `"diagnosis"` pool.
#[pyfunction]
fn builtin_problems<'py>(py: Python<'py>, pool: &str) -> PyResult<Bound<'py, PyAny>> {
    match pool {
        "arc" => to_py(py, &builtin_arc()),
        "diagnosis" => to_py(py, &builtin_diagnosis()),
        other => Err(err(format!("unknown pool {other:?}"))),
    }
}

#[pyfunction]
#[pyo3(signature = (pool, seed, n_sequences = 10, length = 30, profile = "calibrated"))]
fn generate_sequences<'py>(
    py: Python<'py>,
    pool: &str,
    seed: u64,
    n_sequences: usize,
    length: usize,
    profile: &str,
) -> PyResult<Bound<'py, PyAny>> {
    let problems = match pool {
        "arc" => builtin_arc(),
        "diagnosis" => builtin_diagnosis(),
        other => return Err(err(format!("unknown pool {other:?}"))),
    };
    let profile = match profile {
        "calibrated" => AssistantProfile::calibrated(seed),
        "overconfident" => AssistantProfile::overconfident(seed),
        other => return Err(err(format!("unknown profile {other:?}"))),
    };
    let seqs = gen(&problems, &profile, &SequenceSpec::new(n_sequences, length, seed)).map_err(err)?;
    to_py(py, &seqs)
}

/// Study configuration of a named preset (ArcC, ArcO, DiagC, DiagO).
#[pyfunction]
fn study_preset<'py>(py: Python<'py>, name: &str) -> PyResult<Bound<'py, PyAny>> {
    let cfg = StudyConfig::preset(name).ok_or_else(|| err(format!("unknown preset {name:?}")))?;
    to_py(py, &cfg)
}

/// Simulated participants for a study given as a preset name or a config
/// dict. Returns export records.
#[pyfunction]
#[pyo3(signature = (study, seed, users_per_condition = None))]
fn simulate<'py>(py: Python<'py>, study: &Bound<'py, PyAny>, seed: u64, users_per_condition: Option<usize>) -> PyResult<Bound<'py, PyAny>> {
    let cfg: StudyConfig = match study.extract::<String>() {
        Ok(name) => StudyConfig::preset(&name).ok_or_else(|| err(format!("unknown preset {name:?}")))?,
        Err(_) => from_py(study)?,
    };
    let diagnosis = cfg.conditions.iter().any(|c| {
        matches!(
            c.assistant,
            AssistantSource::Simulated {
                pool: ProblemPool::Diagnosis,
                ..
            }
        )
    });
    let model = if diagnosis { UserModel::diagnosis_preset() } else { UserModel::arc_preset() };
    let users = users_per_condition.unwrap_or(cfg.target_per_condition);
    let sessions = py
        .detach(|| simulate_config(&cfg, Path::new("."), users, &model, Default::default(), seed))
        .map_err(err)?;
    to_py(py, &simulated_records(&cfg, &sessions))
}

#[pyfunction]
fn read_records<'py>(py: Python<'py>, path: &str) -> PyResult<Bound<'py, PyAny>> {
    to_py(py, &service::read_records(Path::new(path)).map_err(err)?)
}

/// Pooled reliance metrics over disagreement rounds, optionally restricted
/// to an inclusive prior-trust window.
#[pyfunction]
#[pyo3(signature = (sessions, low = None, high = None))]
fn reliance<'py>(py: Python<'py>, sessions: &Bound<'py, PyAny>, low: Option<u8>, high: Option<u8>) -> PyResult<Bound<'py, PyAny>> {
    let sessions = sessions_from(sessions)?;
    to_py(py, &reliance_report(&filter_analysis_set(&sessions, window(low, high))))
}

#[pyfunction]
fn trust_binned<'py>(py: Python<'py>, sessions: &Bound<'py, PyAny>) -> PyResult<Bound<'py, PyAny>> {
    let sessions = sessions_from(sessions)?;
    to_py(py, &binned(&filter_analysis_set(&sessions, None)))
}

#[pyfunction]
#[pyo3(signature = (sessions, min_qualifying = 3, low = None, high = None))]
fn macro_aggregate<'py>(
    py: Python<'py>,
    sessions: &Bound<'py, PyAny>,
    min_qualifying: u64,
    low: Option<u8>,
    high: Option<u8>,
) -> PyResult<Bound<'py, PyAny>> {
    let sessions = sessions_from(sessions)?;
    to_py(py, &macro_agg(&sessions, window(low, high), min_qualifying))
}

/// Fits every estimator on training sessions.
#[pyfunction]
fn fit_estimators<'py>(py: Python<'py>, sessions: &Bound<'py, PyAny>) -> PyResult<Bound<'py, PyAny>> {
    let sessions = sessions_from(sessions)?;
    let fitted = py.detach(|| fit_all(&sessions, &default_grid())).map_err(err)?;
    to_py(py, &fitted)
}

#[pyfunction]
fn evaluate<'py>(py: Python<'py>, estimator: &Bound<'py, PyAny>, sessions: &Bound<'py, PyAny>) -> PyResult<Bound<'py, PyAny>> {
    let estimator: Estimator = from_py(estimator)?;
    let sessions = sessions_from(sessions)?;
    to_py(py, &eval(&estimator, &sessions))
}

/// One participant's walk through a sequence. Times are caller-supplied
/// milliseconds.
#[pyclass(module = "trustlab")]
struct Protocol {
    state: SessionState,
}

#[pymethods]
impl Protocol {
    #[new]
    #[pyo3(signature = (sequence, policy = "no_intervention", user_id = "user", condition_id = "condition", session_id = "session"))]
    fn new(sequence: &Bound<'_, PyAny>, policy: &str, user_id: &str, condition_id: &str, session_id: &str) -> PyResult<Self> {
        let sequence: ProblemSequence = from_py(sequence)?;
        let kind: PolicyKind = serde_json::from_value(Value::String(policy.into())).map_err(|_| err(format!("unknown policy {policy:?}")))?;
        let header = SessionHeader {
            session_id: session_id.into(),
            user_id: user_id.into(),
            condition_id: condition_id.into(),
        };
        let state = SessionState::start(header, EngineConfig::new(PolicyConfig::new(kind)), Arc::new(sequence)).map_err(protocol)?;
        Ok(Self { state })
    }

    #[pyo3(signature = (now = None))]
    fn stage<'py>(&self, py: Python<'py>, now: Option<u64>) -> PyResult<Bound<'py, PyAny>> {
        let stage = now.map_or(self.state.stage(), |t| self.state.effective_stage(t));
        to_py(py, &stage)
    }

    #[getter]
    fn current_item(&self) -> usize {
        self.state.current_item()
    }

    fn problem<'py>(&self, py: Python<'py>) -> PyResult<Bound<'py, PyAny>> {
        to_py(py, &self.state.current_problem())
    }

    fn reading_gate_deadline(&self) -> u64 {
        self.state.reading_gate_deadline()
    }

    fn submit_initial(&mut self, decision: usize, at: u64) -> PyResult<()> {
        self.state.submit_initial(decision, at).map_err(protocol)
    }

    fn advice<'py>(&self, py: Python<'py>, now: u64) -> PyResult<Bound<'py, PyAny>> {
        to_py(py, &self.state.advice(now).map_err(protocol)?)
    }

    fn submit_final(&mut self, decision: usize, at: u64) -> PyResult<()> {
        self.state.submit_final(decision, at).map_err(protocol)
    }

    fn feedback<'py>(&self, py: Python<'py>) -> PyResult<Bound<'py, PyAny>> {
        to_py(py, &self.state.feedback())
    }

    fn submit_trust(&mut self, trust: i64, at: u64) -> PyResult<()> {
        self.state.submit_trust(trust, at).map_err(protocol)
    }

    #[getter]
    fn finished(&self) -> bool {
        self.state.is_finished()
    }

    fn session<'py>(&self, py: Python<'py>) -> PyResult<Bound<'py, PyAny>> {
        to_py(py, self.state.session())
    }

    fn events<'py>(&self, py: Python<'py>) -> PyResult<Bound<'py, PyAny>> {
        to_py(py, &self.state.events())
    }
}

#[pymodule]
#[pyo3(name = "trustlab")]
fn trustlab_module(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add("__version__", env!("CARGO_PKG_VERSION"))?;
    m.add("TrustlabError", m.py().get_type::<TrustlabError>())?;
    m.add("ProtocolError", m.py().get_type::<ProtocolError>())?;
    m.add_class::<Protocol>()?;
    m.add_function(wrap_pyfunction!(builtin_problems, m)?)?;
    m.add_function(wrap_pyfunction!(generate_sequences, m)?)?;
    m.add_function(wrap_pyfunction!(study_preset, m)?)?;
    m.add_function(wrap_pyfunction!(simulate, m)?)?;
    m.add_function(wrap_pyfunction!(read_records, m)?)?;
    m.add_function(wrap_pyfunction!(reliance, m)?)?;
    m.add_function(wrap_pyfunction!(trust_binned, m)?)?;
    m.add_function(wrap_pyfunction!(macro_aggregate, m)?)?;
    m.add_function(wrap_pyfunction!(fit_estimators, m)?)?;
    m.add_function(wrap_pyfunction!(evaluate, m)?)?;
    Ok(())
}
