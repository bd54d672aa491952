//! File helpers shared by the commands.

use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::Serialize;
use trustlab::service::StudyConfig;

use crate::{CliError, CliResult, Common};

/// Parses a JSON config file; any problem is a usage error naming the
/// line, column and field.
pub fn read_config<T: DeserializeOwned>(path: &Path) -> CliResult<T> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::Usage(format!("{}: {e}", path.display())))?;
    let de = &mut serde_json::Deserializer::from_str(&text);
    serde_path_to_error::deserialize(de).map_err(|e| {
        CliError::Usage(format!("{}: field `{}`: {}", path.display(), e.path(), e.inner()))
    })
}

pub fn require_seed(c: &Common, command: &str) -> CliResult<u64> {
    c.seed.ok_or_else(|| CliError::Usage(format!("{command} needs an explicit --seed")))
}

/// Study settings from `--config` or a named preset.
pub fn study_config(c: &Common, preset: Option<&str>) -> CliResult<(StudyConfig, PathBuf)> {
    let (cfg, base) = match (&c.config, preset) {
        (Some(_), Some(_)) => return Err(CliError::Usage("give either --config or --preset, not both".into())),
        (Some(path), None) => {
            let cfg: StudyConfig = read_config(path)?;
            (cfg, config_base(path))
        }
        (None, Some(name)) => (preset_or_usage(name)?, PathBuf::from(".")),
        (None, None) => return Err(CliError::Usage("a study needs --config or --preset".into())),
    };
    cfg.check().map_err(|e| CliError::Usage(e.to_string()))?;
    Ok((cfg, base))
}

pub fn preset_or_usage(name: &str) -> CliResult<StudyConfig> {
    StudyConfig::preset(name).ok_or_else(|| CliError::Usage(format!("unknown preset {name}; expected ArcC, ArcO, DiagC or DiagO")))
}

/// Relative paths inside a config file resolve against its directory.
pub fn config_base(path: &Path) -> PathBuf {
    path.parent().filter(|p| !p.as_os_str().is_empty()).map(Path::to_path_buf).unwrap_or_else(|| PathBuf::from("."))
}

pub fn out_path(c: &Common, name: &str) -> CliResult<PathBuf> {
    std::fs::create_dir_all(&c.out_dir).map_err(|e| CliError::Data(format!("{}: {e}", c.out_dir.display())))?;
    Ok(c.out_dir.join(name))
}

pub fn write_text(c: &Common, name: &str, text: &str) -> CliResult<PathBuf> {
    let path = out_path(c, name)?;
    std::fs::write(&path, text).map_err(|e| CliError::Data(format!("{}: {e}", path.display())))?;
    log::info!("wrote {}", path.display());
    Ok(path)
}

pub fn write_json<T: Serialize>(c: &Common, name: &str, value: &T) -> CliResult<PathBuf> {
    let mut text = serde_json::to_string_pretty(value).expect("serializable");
    text.push('\n');
    write_text(c, name, &text)
}

pub fn write_jsonl<T: Serialize>(c: &Common, name: &str, rows: &[T]) -> CliResult<PathBuf> {
    let mut text = String::new();
    for r in rows {
        text.push_str(&serde_json::to_string(r).expect("serializable"));
        text.push('\n');
    }
    write_text(c, name, &text)
}
