use std::path::PathBuf;

use clap::Args;
use serde::{Deserialize, Serialize};
use trustlab::estimators::{default_grid, evaluate, evaluation_csv, fit_all, split_sessions, Estimator, Evaluation};
use trustlab::service::{analysis_sessions, read_records, ExportRecord};
use trustlab::Session;

use crate::io::{read_config, require_seed, write_json, write_jsonl, write_text};
use crate::{CliError, CliResult, Common};

#[derive(Args)]
pub struct FitArgs {
    /// Session log to fit on.
    input: PathBuf,
    /// Shuffle with --seed, fit on this many sessions and write the split
    /// to train.jsonl and test.jsonl.
    #[arg(long)]
    train: Option<usize>,
}

#[derive(Args)]
pub struct EvalArgs {
    /// Session log to evaluate on.
    input: PathBuf,
    /// Fitted model file written by fit-trust.
    #[arg(long)]
    model: PathBuf,
}

#[derive(Serialize, Deserialize)]
struct FittedModels {
    train_sessions: usize,
    estimators: Vec<Estimator>,
    train_scores: Vec<Evaluation>,
}

fn load(path: &PathBuf) -> CliResult<(Vec<ExportRecord>, Vec<Session>)> {
    let records = read_records(path).map_err(CliError::data)?;
    let sessions = analysis_sessions(&records);
    if sessions.is_empty() {
        return Err(CliError::Data(format!("{}: no complete sessions", path.display())));
    }
    Ok((records, sessions))
}

pub fn fit(c: &Common, args: FitArgs) -> CliResult {
    let (_, sessions) = load(&args.input)?;
    let train = match args.train {
        Some(n) => {
            let seed = require_seed(c, "fit-trust --train")?;
            let (train, test) = split_sessions(&sessions, n, seed).map_err(|e| CliError::Usage(e.to_string()))?;
            write_jsonl(c, "train.jsonl", &train)?;
            write_jsonl(c, "test.jsonl", &test)?;
            train
        }
        None => sessions,
    };
    let estimators = fit_all(&train, &default_grid()).map_err(CliError::data)?;
    let train_scores: Vec<Evaluation> = estimators.iter().map(|e| evaluate(e, &train)).collect();
    for e in &train_scores {
        log::info!("{} (r = {:?}): train pearson {:?}", e.method, e.r, e.pearson);
    }
    write_json(
        c,
        "trust_model.json",
        &FittedModels {
            train_sessions: train.len(),
            estimators,
            train_scores,
        },
    )?;
    Ok(())
}

pub fn eval(c: &Common, args: EvalArgs) -> CliResult {
    let models: FittedModels = read_config(&args.model)?;
    let (_, test) = load(&args.input)?;
    let rows: Vec<Evaluation> = models.estimators.iter().map(|e| evaluate(e, &test)).collect();
    write_text(c, "trust_eval.csv", &evaluation_csv(&rows))?;
    write_json(c, "trust_eval.json", &rows)?;
    Ok(())
}
