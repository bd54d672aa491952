//! Experiment infrastructure for sequential AI-assisted decision-making with
//! trust-adaptive assistant behavior.
//!
//! The crate covers the participant protocol ([`engine`]), the assistant
//! simulator ([`assistant`]), intervention policies ([`policy`]), synthetic
//! participants ([`simuser`], [`simulate`]), reliance analysis ([`metrics`]),
//! trust estimation ([`estimators`]), a text-generation backed assistant
//! ([`llm`]), dataset loading ([`ingestion`]) and the multi-session study
//! service core ([`service`]).

pub mod assistant;
pub mod domain;
pub mod engine;
pub mod estimators;
pub mod ingestion;
pub mod llm;
pub mod metrics;
pub mod policy;
pub mod rng;
pub mod service;
pub mod simulate;
pub mod simuser;

pub use domain::{
    Intervention, Interaction, Problem, ProblemSequence, Recommendation, SequenceItem, Session, StageTimestamps, TaskId,
    TrustLevel, Validate, Violation,
};
