use std::net::SocketAddr;
use std::path::PathBuf;
use std::sync::Arc;

use clap::Args;
use trustlab::service::{export_jsonl, StudyService, SystemClock, DATA_DIR_ENV};

use crate::io::{study_config, write_text};
use crate::{CliError, CliResult, Common};

#[derive(Args)]
pub struct ServeArgs {
    /// Task preset (ArcC, ArcO, DiagC, DiagO) instead of --config.
    #[arg(long)]
    preset: Option<String>,
    #[arg(long, default_value_t = 8080)]
    port: u16,
    /// Address to bind.
    #[arg(long, default_value = "127.0.0.1")]
    host: std::net::IpAddr,
}

#[derive(Args)]
pub struct ExportArgs {
    /// Task preset (ArcC, ArcO, DiagC, DiagO) instead of --config.
    #[arg(long)]
    preset: Option<String>,
    /// Service data directory; defaults to $TRUSTLAB_DATA_DIR.
    #[arg(long)]
    data_dir: Option<PathBuf>,
}

pub fn serve(c: &Common, args: ServeArgs) -> CliResult {
    let (mut cfg, base) = study_config(c, args.preset.as_deref())?;
    if let Some(seed) = c.seed {
        cfg.seed = seed;
    }
    let svc = trustlab_server::open_service(cfg, &base, Arc::new(SystemClock)).map_err(CliError::data)?;
    let rt = tokio::runtime::Runtime::new().map_err(CliError::data)?;
    rt.block_on(async {
        let listener = tokio::net::TcpListener::bind(SocketAddr::new(args.host, args.port)).await?;
        trustlab_server::serve(Arc::new(svc), listener).await
    })
    .map_err(CliError::data)
}

pub fn export(c: &Common, args: ExportArgs) -> CliResult {
    let (mut cfg, base) = study_config(c, args.preset.as_deref())?;
    if let Some(seed) = c.seed {
        cfg.seed = seed;
    }
    let dir = args
        .data_dir
        .or_else(|| std::env::var_os(DATA_DIR_ENV).map(PathBuf::from))
        .ok_or_else(|| CliError::Usage(format!("export needs --data-dir or {DATA_DIR_ENV}")))?;
    if !dir.is_dir() {
        return Err(CliError::Data(format!("{}: no such data directory", dir.display())));
    }
    let svc = StudyService::open(cfg, &base, &dir, Arc::new(SystemClock)).map_err(CliError::data)?;
    let records = svc.export();
    write_text(c, "export.jsonl", &export_jsonl(&records))?;
    log::info!("exported {} sessions", records.len());
    Ok(())
}
