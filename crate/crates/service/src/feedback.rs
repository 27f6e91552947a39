use std::fs::{File, OpenOptions};
use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::Mutex;

use ctxsql_core::eval::LabelRecord;

use crate::ServiceError;

/// Append-only JSON Lines log of label records. All writes go through one
/// mutex-guarded handle, so each record lands as a whole line.
#[derive(Debug)]
pub struct FeedbackLog {
    path: PathBuf,
    writer: Mutex<Writer>,
}

#[derive(Debug)]
struct Writer {
    file: File,
    next_seq: u64,
}

impl FeedbackLog {
    /// Open (creating if needed) the log; sequence numbers continue after
    /// the records already present.
    pub fn open(path: &Path) -> Result<Self, ServiceError> {
        let io = |e: std::io::Error| ServiceError::Io(format!("{}: {e}", path.display()));
        if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
            std::fs::create_dir_all(dir).map_err(io)?;
        }
        let existing = match std::fs::read_to_string(path) {
            Ok(s) => s.lines().filter(|l| !l.trim().is_empty()).count() as u64,
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => 0,
            Err(e) => return Err(io(e)),
        };
        let file = OpenOptions::new().create(true).append(true).open(path).map_err(io)?;
        Ok(FeedbackLog { path: path.to_path_buf(), writer: Mutex::new(Writer { file, next_seq: existing + 1 }) })
    }

    pub fn path(&self) -> &Path {
        &self.path
    }

    /// Append one record and return its stored id.
    pub fn append(&self, record: &LabelRecord) -> Result<String, ServiceError> {
        let mut line = serde_json::to_string(record).map_err(|e| ServiceError::Io(e.to_string()))?;
        line.push('\n');
        let mut w = self.writer.lock().map_err(|_| ServiceError::Io("feedback writer poisoned".into()))?;
        w.file
            .write_all(line.as_bytes())
            .and_then(|()| w.file.flush())
            .map_err(|e| ServiceError::Io(format!("{}: {e}", self.path.display())))?;
        let id = format!("fb-{:06}", w.next_seq);
        w.next_seq += 1;
        Ok(id)
    }
}

#[cfg(test)]
mod tests {
    use ctxsql_core::eval::{LabelStore, Outcome};
    use ctxsql_core::Phase;

    use super::*;

    fn record(outcome: Outcome) -> LabelRecord {
        LabelRecord {
            id: "q17".into(),
            phase: Phase::SchemaPlusContext,
            outcome,
            rationale: None,
            labeler: "ana".into(),
            timestamp_ms: Some(1),
        }
    }

    #[test]
    fn appends_and_continues_numbering() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("nested/fb.jsonl");
        let log = FeedbackLog::open(&path).unwrap();
        assert_eq!(log.append(&record(Outcome::Fail)).unwrap(), "fb-000001");
        assert_eq!(log.append(&record(Outcome::Pass)).unwrap(), "fb-000002");
        drop(log);
        let reopened = FeedbackLog::open(&path).unwrap();
        assert_eq!(reopened.append(&record(Outcome::PartialPass)).unwrap(), "fb-000003");
        let store = LabelStore::load_file(&path).unwrap();
        assert_eq!(store.records().len(), 3);
        assert_eq!(store.latest("q17", Phase::SchemaPlusContext).unwrap().outcome, Outcome::PartialPass);
    }

    #[test]
    fn concurrent_writers_produce_whole_lines() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("fb.jsonl");
        let log = FeedbackLog::open(&path).unwrap();
        std::thread::scope(|s| {
            for _ in 0..8 {
                s.spawn(|| {
                    for _ in 0..25 {
                        log.append(&record(Outcome::Pass)).unwrap();
                    }
                });
            }
        });
        assert_eq!(LabelStore::load_file(&path).unwrap().records().len(), 200);
    }
}
