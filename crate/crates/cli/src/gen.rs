use clap::Args;
use serde::{Deserialize, Serialize};
use serde_json::json;
use trustlab::assistant::{calibration_report_over, generate_sequences, AssistantKind, AssistantProfile, SequenceSpec, DEFAULT_CALIBRATION_BINS};
use trustlab::llm::{llm_sequences, ClientConfig, HttpGenerator, DEFAULT_SAMPLES};
use trustlab::service::{AssistantSource, ProblemPool};
use trustlab::ProblemSequence;

use crate::io::{config_base, preset_or_usage, read_config, require_seed, write_json, write_jsonl};
use crate::{CliError, CliResult, Common};

#[derive(Args)]
pub struct GenArgs {
    /// Task preset (ArcC, ArcO, DiagC, DiagO) instead of --config.
    #[arg(long)]
    preset: Option<String>,
}

#[derive(Debug, Deserialize)]
#[serde(rename_all = "snake_case")]
enum GenAssistant {
    Simulated {
        profile: AssistantKind,
    },
    Llm {
        #[serde(flatten)]
        client: ClientConfig,
        #[serde(default = "default_samples")]
        samples: usize,
        #[serde(default = "default_llm_id")]
        profile_id: String,
    },
}

fn default_samples() -> usize {
    DEFAULT_SAMPLES
}

fn default_llm_id() -> String {
    "llm".into()
}

fn default_n() -> usize {
    10
}

fn default_length() -> usize {
    30
}

#[derive(Debug, Deserialize)]
struct GenConfig {
    pool: ProblemPool,
    assistant: GenAssistant,
    #[serde(default = "default_n")]
    n_sequences: usize,
    #[serde(default = "default_length")]
    length: usize,
}

#[derive(Serialize)]
struct SequenceSummary {
    sequence_id: String,
    items: usize,
    ai_accuracy: f64,
}

pub fn run(c: &Common, args: GenArgs) -> CliResult {
    let seed = require_seed(c, "gen-sequences")?;
    let (cfg, base) = match (&c.config, &args.preset) {
        (Some(_), Some(_)) => return Err(CliError::Usage("give either --config or --preset, not both".into())),
        (Some(path), None) => (read_config::<GenConfig>(path)?, config_base(path)),
        (None, Some(name)) => {
            let study = preset_or_usage(name)?;
            let AssistantSource::Simulated {
                pool,
                profile,
                n_sequences,
                length,
                ..
            } = study.conditions[0].assistant.clone()
            else {
                unreachable!("presets use simulated assistants")
            };
            let cfg = GenConfig {
                pool,
                assistant: GenAssistant::Simulated { profile },
                n_sequences,
                length,
            };
            (cfg, ".".into())
        }
        (None, None) => return Err(CliError::Usage("gen-sequences needs --config or --preset".into())),
    };
    let problems = cfg.pool.load(&base).map_err(CliError::data)?;
    let spec = SequenceSpec::new(cfg.n_sequences, cfg.length, seed);
    let from_llm = matches!(cfg.assistant, GenAssistant::Llm { .. });
    let sequences = match cfg.assistant {
        GenAssistant::Simulated { profile } => {
            let profile = match profile {
                AssistantKind::Calibrated => AssistantProfile::calibrated(seed),
                AssistantKind::Overconfident => AssistantProfile::overconfident(seed),
            };
            let seqs = generate_sequences(&problems, &profile, &spec).map_err(CliError::data)?;
            seqs
        }
        GenAssistant::Llm { client, samples, profile_id } => {
            let gen = HttpGenerator::new(client).map_err(CliError::data)?;
            let (seqs, votes) = llm_sequences(&problems, &gen, samples, &spec, &profile_id).map_err(CliError::data)?;
            write_jsonl(c, "votes.jsonl", &votes)?;
            seqs
        }
    };
    write_jsonl(c, "sequences.jsonl", &sequences)?;
    write_json(c, "sequences_summary.json", &summary(&sequences, seed, from_llm)?)?;
    Ok(())
}

fn summary(sequences: &[ProblemSequence], seed: u64, from_llm: bool) -> CliResult<serde_json::Value> {
    let pairs: Vec<(f64, bool)> = sequences
        .iter()
        .flat_map(|s| s.items.iter().map(|it| (it.recommendation.confidence, it.recommendation.is_correct_for(&it.problem))))
        .collect();
    let calibration = calibration_report_over(&pairs, DEFAULT_CALIBRATION_BINS, 0.5, 0.95).map_err(CliError::data)?;
    let per: Vec<SequenceSummary> = sequences
        .iter()
        .map(|s| SequenceSummary {
            sequence_id: s.sequence_id.clone(),
            items: s.len(),
            ai_accuracy: s.ai_accuracy(),
        })
        .collect();
    let correct = pairs.iter().filter(|p| p.1).count();
    Ok(json!({
        "seed": seed,
        "source": if from_llm { "llm" } else { "simulated" },
        "assistant_profile_id": sequences.first().map(|s| s.assistant_profile_id.clone()),
        "n_sequences": sequences.len(),
        "ai_accuracy": if pairs.is_empty() { 0.0 } else { correct as f64 / pairs.len() as f64 },
        "sequences": per,
        "calibration": calibration,
    }))
}
