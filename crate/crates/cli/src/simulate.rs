use clap::Args;
use serde::{Deserialize, Serialize};
use serde_json::json;
use trustlab::engine::SessionEvent;
use trustlab::service::{simulate_config, simulated_records, AssistantSource, ProblemPool, StudyConfig};
use trustlab::simulate::ThinkTimes;
use trustlab::simuser::UserModel;

use crate::io::{config_base, preset_or_usage, read_config, require_seed, write_json, write_jsonl};
use crate::{CliError, CliResult, Common};

#[derive(Args)]
pub struct SimulateArgs {
    /// Task preset (ArcC, ArcO, DiagC, DiagO) instead of --config.
    #[arg(long)]
    preset: Option<String>,
    /// Synthetic users per condition; defaults to the study's target.
    #[arg(long)]
    users: Option<usize>,
}

/// Synthetic-user settings that may sit next to the study fields in a
/// config file.
#[derive(Default, Deserialize)]
struct SimExtras {
    #[serde(default)]
    users_per_condition: Option<usize>,
    #[serde(default)]
    user_model: Option<UserModel>,
    #[serde(default)]
    think_times: Option<ThinkTimes>,
}

#[derive(Serialize)]
struct EventTrace<'a> {
    session_id: &'a str,
    events: &'a [SessionEvent],
}

pub fn run(c: &Common, args: SimulateArgs) -> CliResult {
    let seed = require_seed(c, "simulate")?;
    let (study, file, base) = match (&c.config, &args.preset) {
        (Some(_), Some(_)) => return Err(CliError::Usage("give either --config or --preset, not both".into())),
        (Some(path), None) => (read_config::<StudyConfig>(path)?, read_config::<SimExtras>(path)?, config_base(path)),
        (None, Some(name)) => (preset_or_usage(name)?, SimExtras::default(), ".".into()),
        (None, None) => return Err(CliError::Usage("simulate needs --config or --preset".into())),
    };
    study.check().map_err(|e| CliError::Usage(e.to_string()))?;
    let users = args.users.or(file.users_per_condition).unwrap_or(study.target_per_condition);
    let diagnosis = matches!(
        &study.conditions[0].assistant,
        AssistantSource::Simulated {
            pool: ProblemPool::Diagnosis,
            ..
        }
    );
    let user_model = file
        .user_model
        .unwrap_or_else(|| if diagnosis { UserModel::diagnosis_preset() } else { UserModel::arc_preset() });
    user_model.check().map_err(|e| CliError::Usage(e.to_string()))?;

    let sessions =
        simulate_config(&study, &base, users, &user_model, file.think_times.unwrap_or_default(), seed).map_err(CliError::data)?;
    let records = simulated_records(&study, &sessions);
    let traces: Vec<EventTrace> = sessions
        .iter()
        .map(|s| EventTrace {
            session_id: &s.session.session_id,
            events: &s.events,
        })
        .collect();
    let interactions: usize = records.iter().map(|r| r.session.interactions.len()).sum();
    let rejected = records.iter().filter(|r| r.settlement.as_ref().is_some_and(|s| s.rejected_for_analysis)).count();
    write_jsonl(c, "sessions.jsonl", &records)?;
    write_jsonl(c, "events.jsonl", &traces)?;
    write_json(
        c,
        "simulation_summary.json",
        &json!({
            "study_id": study.study_id,
            "seed": seed,
            "users_per_condition": users,
            "conditions": study.conditions.iter().map(|c| c.condition_id.clone()).collect::<Vec<_>>(),
            "sessions": records.len(),
            "interactions": interactions,
            "rejected_for_analysis": rejected,
            "user_model": user_model,
        }),
    )?;
    log::info!("simulated {} sessions, {interactions} interactions", records.len());
    Ok(())
}
