//! Append-only JSON-lines event log and snapshots.

use std::fs::{self, File, OpenOptions};
use std::io::{Seek, SeekFrom, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::{ServiceError, SettlementRecord};
use crate::engine::SessionEvent;

pub const SCHEMA_VERSION: u32 = 1;
pub const LOG_FILE: &str = "events.jsonl";
pub const SNAPSHOT_FILE: &str = "snapshot.json";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum LogRecord {
    Enrolled {
        session_id: String,
        user_id: String,
        condition_id: String,
        sequence_id: String,
        /// Absolute clock time the session's relative clock starts from.
        started_at: u64,
    },
    Protocol {
        session_id: String,
        event: SessionEvent,
    },
    /// Client-reported events such as tab changes; logged, never enforced.
    Client {
        session_id: String,
        at: u64,
        name: String,
        #[serde(default)]
        detail: serde_json::Value,
    },
    Finalized {
        session_id: String,
        settlement: SettlementRecord,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogLine {
    pub schema_version: u32,
    #[serde(flatten)]
    pub record: LogRecord,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Snapshot {
    pub schema_version: u32,
    /// Number of log lines already folded into `records`.
    pub log_lines: usize,
    pub records: Vec<LogRecord>,
}

#[derive(Debug)]
pub struct EventLog {
    dir: PathBuf,
    file: File,
    lines: usize,
}

fn io(path: &Path) -> impl FnOnce(std::io::Error) -> ServiceError + '_ {
    move |e| ServiceError::Io(format!("{}: {e}", path.display()))
}

impl EventLog {
    /// Opens `dir`, returning the log and every record it holds (snapshot
    /// first, then later lines). A torn final line from an interrupted
    /// write is dropped and truncated away.
    pub fn open(dir: &Path) -> Result<(Self, Vec<LogRecord>), ServiceError> {
        fs::create_dir_all(dir).map_err(io(dir))?;
        let log_path = dir.join(LOG_FILE);
        let snap_path = dir.join(SNAPSHOT_FILE);
        let mut records = Vec::new();
        let mut skip = 0;
        if snap_path.exists() {
            let text = fs::read_to_string(&snap_path).map_err(io(&snap_path))?;
            let snap: Snapshot = serde_json::from_str(&text).map_err(|e| ServiceError::Corrupt {
                file: SNAPSHOT_FILE.into(),
                line: e.line(),
                message: e.to_string(),
            })?;
            check_version(snap.schema_version, SNAPSHOT_FILE, 0)?;
            skip = snap.log_lines;
            records = snap.records;
        }
        let mut lines = 0;
        if log_path.exists() {
            let raw = fs::read(&log_path).map_err(io(&log_path))?;
            let mut segments: Vec<&[u8]> = raw.split(|&b| b == b'\n').collect();
            // Bytes after the last newline are an unterminated (possibly torn) line.
            let tail = segments.pop().unwrap_or_default();
            let parse = |seg: &[u8]| serde_json::from_slice::<LogLine>(seg);
            let mut keep_bytes = raw.len() - tail.len();
            for seg in &segments {
                let line = parse(seg).map_err(|e| ServiceError::Corrupt {
                    file: LOG_FILE.into(),
                    line: lines + 1,
                    message: e.to_string(),
                })?;
                check_version(line.schema_version, LOG_FILE, lines + 1)?;
                if lines >= skip {
                    records.push(line.record);
                }
                lines += 1;
            }
            let mut terminate = false;
            if !tail.is_empty() {
                match parse(tail) {
                    Ok(line) => {
                        check_version(line.schema_version, LOG_FILE, lines + 1)?;
                        if lines >= skip {
                            records.push(line.record);
                        }
                        lines += 1;
                        keep_bytes = raw.len();
                        terminate = true;
                    }
                    Err(e) => log::warn!("{}: dropping torn final line ({e})", log_path.display()),
                }
            }
            if lines < skip {
                return Err(ServiceError::Corrupt {
                    file: LOG_FILE.into(),
                    line: lines,
                    message: format!("snapshot covers {skip} lines but the log has {lines}"),
                });
            }
            let mut f = OpenOptions::new().write(true).open(&log_path).map_err(io(&log_path))?;
            f.set_len(keep_bytes as u64).map_err(io(&log_path))?;
            if terminate {
                f.seek(SeekFrom::End(0)).map_err(io(&log_path))?;
                f.write_all(b"\n").map_err(io(&log_path))?;
            }
        }
        let file = OpenOptions::new().create(true).append(true).open(&log_path).map_err(io(&log_path))?;
        Ok((
            Self {
                dir: dir.to_path_buf(),
                file,
                lines,
            },
            records,
        ))
    }

    pub fn append(&mut self, record: &LogRecord) -> Result<(), ServiceError> {
        let line = serde_json::to_string(&LogLine {
            schema_version: SCHEMA_VERSION,
            record: record.clone(),
        })
        .expect("serializable");
        let path = self.dir.join(LOG_FILE);
        self.file.write_all(format!("{line}\n").as_bytes()).map_err(io(&path))?;
        self.file.flush().map_err(io(&path))?;
        self.lines += 1;
        Ok(())
    }

    pub fn lines(&self) -> usize {
        self.lines
    }

    /// Atomically replaces the snapshot with `records`, which must reflect
    /// every line logged so far.
    pub fn write_snapshot(&self, records: Vec<LogRecord>) -> Result<(), ServiceError> {
        let snap = Snapshot {
            schema_version: SCHEMA_VERSION,
            log_lines: self.lines,
            records,
        };
        let tmp = self.dir.join(format!("{SNAPSHOT_FILE}.tmp"));
        let dst = self.dir.join(SNAPSHOT_FILE);
        fs::write(&tmp, serde_json::to_vec(&snap).expect("serializable")).map_err(io(&tmp))?;
        fs::rename(&tmp, &dst).map_err(io(&dst))?;
        Ok(())
    }
}

fn check_version(v: u32, file: &str, line: usize) -> Result<(), ServiceError> {
    if v == SCHEMA_VERSION {
        Ok(())
    } else {
        Err(ServiceError::Corrupt {
            file: file.into(),
            line,
            message: format!("unsupported schema_version {v}"),
        })
    }
}
